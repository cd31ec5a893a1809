//! Small grid: engine-generator with a PI speed governor, RL line and a
//! ramp-limited constant-power load, coupled through a quasi-static phasor
//! network.

use std::f64::consts::TAU;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeneratorParams {
    pub s_rated: f64,
    pub v_ll: f64,
    pub f_nominal: f64,
    /// Rotor inertia, kg m^2.
    pub j_g: f64,
    /// Governor gains, per-unit torque per per-unit speed error.
    pub kp_speed: f64,
    pub ki_speed: f64,
    pub r_s: f64,
    pub l_s: f64,
}

impl Default for GeneratorParams {
    fn default() -> Self {
        GeneratorParams {
            s_rated: 3e6,
            v_ll: 480.0,
            f_nominal: 60.0,
            j_g: 35.0,
            kp_speed: 20.0,
            ki_speed: 10.0,
            r_s: 1e-3,
            l_s: 50e-6,
        }
    }
}

impl GeneratorParams {
    pub fn omega_nominal(&self) -> f64 {
        TAU * self.f_nominal
    }

    /// Torque base `S / omega_0`, N m.
    pub fn torque_base(&self) -> f64 {
        self.s_rated / self.omega_nominal()
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("s_rated", self.s_rated), ("j_g", self.j_g), ("v_ll", self.v_ll), ("f_nominal", self.f_nominal)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::config(format!("generator.{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeneratorState {
    /// Shaft speed, rad/s (two-pole machine: equals the electrical frequency).
    pub omega: f64,
    /// Governor integrator, per-unit torque.
    pub governor_integrator: f64,
    /// Electrical power drawn over the last step, W.
    pub p_elec: f64,
    /// Mechanical power delivered over the last step, W.
    pub p_mech: f64,
}

impl GeneratorState {
    /// At nominal speed with the governor holding `p_elec`.
    pub fn equilibrium(p: &GeneratorParams, p_elec: f64) -> Self {
        GeneratorState {
            omega: p.omega_nominal(),
            governor_integrator: p_elec / p.s_rated,
            p_elec,
            p_mech: p_elec,
        }
    }

    pub fn frequency(&self) -> f64 {
        self.omega / TAU
    }

    pub fn kinetic_energy(&self, p: &GeneratorParams) -> f64 {
        0.5 * p.j_g * self.omega * self.omega
    }
}

/// Swing equation `J dw/dt = T_m - P_e / w` with the governor PI setting `T_m`.
///
/// The governor is explicit; the rotor uses the implicit midpoint rule with
/// `T_e = P_e / w_mid`, solved in closed form, so that
/// `J w_mid (w1 - w0) / dt = T_m w_mid - P_e` holds exactly.
pub fn generator_step(p: &GeneratorParams, s: &GeneratorState, p_elec_demand: f64, dt: f64) -> Result<GeneratorState> {
    if !(dt > 0.0) {
        return Err(Error::domain("dt must be positive"));
    }
    let w_ref = p.omega_nominal();
    let err = (w_ref - s.omega) / w_ref;
    let integ = s.governor_integrator + p.ki_speed * err * dt;
    let t_m = p.torque_base() * (p.kp_speed * err + integ);
    let w0 = s.omega;
    // (J/2dt) d^2 + (J w0/dt - T_m/2) d - (T_m w0 - P_e) = 0
    let a = p.j_g / (2.0 * dt);
    let b = p.j_g * w0 / dt - 0.5 * t_m;
    let c = t_m * w0 - p_elec_demand;
    let disc = b * b + 4.0 * a * c;
    if !(disc >= 0.0) {
        return Err(Error::Divergence { channel: "generator.omega".into(), time: f64::NAN });
    }
    let delta = 2.0 * c / (b + disc.sqrt());
    let w1 = w0 + delta;
    if !(w1.is_finite() && w1 > 0.0) {
        return Err(Error::Divergence { channel: "generator.omega".into(), time: f64::NAN });
    }
    Ok(GeneratorState {
        omega: w1,
        governor_integrator: integ,
        p_elec: p_elec_demand,
        p_mech: t_m * 0.5 * (w0 + w1),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LoadParams {
    pub s_nominal: f64,
    /// Slew limit of the power reference, per unit of `s_nominal` per second.
    pub ramp_pu_per_s: f64,
    pub power_factor: f64,
}

impl Default for LoadParams {
    fn default() -> Self {
        LoadParams { s_nominal: 1e6, ramp_pu_per_s: 100.0, power_factor: 1.0 }
    }
}

impl LoadParams {
    pub fn ramp_limit(&self) -> f64 {
        self.ramp_pu_per_s * self.s_nominal
    }

    pub fn reactive_for(&self, p: f64) -> f64 {
        let pf = self.power_factor.clamp(1e-6, 1.0);
        p * (1.0 / (pf * pf) - 1.0).sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct DynamicLoadState {
    pub p_cmd: f64,
    pub p_actual: f64,
    pub q_actual: f64,
}

/// Slew `p_actual` toward `p_target` by at most `ramp_limit * dt`.
pub fn load_step(s: &DynamicLoadState, p_target: f64, ramp_limit: f64, dt: f64) -> DynamicLoadState {
    let max = ramp_limit * dt;
    let step = (p_target - s.p_actual).clamp(-max, max);
    let p_actual = s.p_actual + step;
    let q_actual = if s.p_actual != 0.0 { s.q_actual * p_actual / s.p_actual } else { s.q_actual };
    DynamicLoadState { p_cmd: p_target, p_actual, q_actual }
}

/// Net power left at the generation bus: `generation - sum(loads) - electrolyzer`.
/// Generation is positive out of the machine; loads and the electrolyzer are
/// positive when consuming. The remainder is what the network dissipates.
pub fn bus_power_balance(generation: f64, loads: &[f64], electrolyzer: f64) -> f64 {
    generation - loads.iter().sum::<f64>() - electrolyzer
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LineParams {
    pub r: f64,
    pub l: f64,
}

impl Default for LineParams {
    fn default() -> Self {
        LineParams { r: 4e-3, l: 44e-6 }
    }
}

/// Quasi-static solution of generator EMF -> stator impedance -> line -> load bus.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct BusSolution {
    /// Line-to-line RMS voltage at the load bus.
    pub v_bus_ll: f64,
    /// Line-to-line RMS voltage at the generator terminals.
    pub v_term_ll: f64,
    /// Phase RMS line current.
    pub i_line: f64,
    /// Active power at the generator terminals (generation-bus power).
    pub p_gen: f64,
    pub q_gen: f64,
    /// Air-gap electrical power.
    pub p_elec: f64,
    pub p_line_loss: f64,
    pub p_stator_loss: f64,
}

/// Solve the bus voltage for a total three-phase constant-power demand
/// `s_load` (W + j VAr) at the load bus, at shaft speed `omega`.
pub fn solve_network(gen: &GeneratorParams, line: &LineParams, omega: f64, s_load: Complex64) -> Result<BusSolution> {
    let e = Complex64::new(gen.v_ll / 3f64.sqrt(), 0.0);
    let z_s = Complex64::new(gen.r_s, omega * gen.l_s);
    let z_l = Complex64::new(line.r, omega * line.l);
    let z = z_s + z_l;
    let s_phase = s_load / 3.0;
    let mut v = e;
    let mut converged = false;
    for _ in 0..200 {
        let i = (s_phase / v).conj();
        let next = e - z * i;
        let diff = (next - v).norm();
        v = next;
        if !v.re.is_finite() || v.norm() < 1e-3 * e.norm() {
            break;
        }
        if diff <= 1e-13 * e.norm() {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::Divergence { channel: "grid.v_bus".into(), time: f64::NAN });
    }
    let i = (s_phase / v).conj();
    let v_t = e - z_s * i;
    let s_gen = v_t * i.conj() * 3.0;
    let i2 = i.norm_sqr();
    Ok(BusSolution {
        v_bus_ll: v.norm() * 3f64.sqrt(),
        v_term_ll: v_t.norm() * 3f64.sqrt(),
        i_line: i.norm(),
        p_gen: s_gen.re,
        q_gen: s_gen.im,
        p_elec: (e * i.conj() * 3.0).re,
        p_line_loss: 3.0 * i2 * line.r,
        p_stator_loss: 3.0 * i2 * gen.r_s,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn equilibrium_holds_speed() {
        let p = GeneratorParams::default();
        let mut s = GeneratorState::equilibrium(&p, 1.2e6);
        for _ in 0..10_000 {
            s = generator_step(&p, &s, 1.2e6, 1e-4).unwrap();
        }
        assert!((s.omega - 376.991).abs() < 1e-3);
        assert!((s.omega - p.omega_nominal()).abs() < 1e-9);
    }

    #[test]
    fn frozen_governor_swing_rate() {
        let p = GeneratorParams { kp_speed: 0.0, ki_speed: 0.0, ..Default::default() };
        let p0 = 1.0e6;
        let s = GeneratorState::equilibrium(&p, p0);
        let dt = 1e-6;
        let s1 = generator_step(&p, &s, p0 + 400e3, dt).unwrap();
        let rate = (s1.omega - s.omega) / dt;
        let oracle: f64 = -(400e3 / 377.0) / 35.0;
        assert!((oracle + 30.3).abs() < 0.05);
        assert!((rate - oracle).abs() / oracle.abs() < 2e-3, "{rate} vs {oracle}");
    }

    #[test]
    fn integral_governor_restores_frequency() {
        let p = GeneratorParams::default();
        let mut s = GeneratorState::equilibrium(&p, 1.0e6);
        let w0 = p.omega_nominal();
        let mut nadir = w0;
        for _ in 0..300_000 {
            s = generator_step(&p, &s, 1.4e6, 1e-4).unwrap();
            nadir = nadir.min(s.omega);
        }
        assert!(nadir < w0 - 1.0);
        assert!((s.omega - w0).abs() < 1e-3 * w0);
        assert!((s.omega - w0).abs() < 1e-6);
    }

    #[test]
    fn swing_energy_books_close() {
        let p = GeneratorParams::default();
        let mut s = GeneratorState::equilibrium(&p, 1.0e6);
        let dt = 1e-4;
        for k in 0..5000 {
            let demand = 1.0e6 + 3e5 * ((k / 700) % 2) as f64;
            let n = generator_step(&p, &s, demand, dt).unwrap();
            let dke = (n.kinetic_energy(&p) - s.kinetic_energy(&p)) / dt;
            let resid = n.p_mech - n.p_elec - dke;
            assert!(resid.abs() <= 1e-6 * n.p_mech.abs(), "{resid}");
            s = n;
        }
    }

    #[test]
    fn load_ramp_examples() {
        let s = DynamicLoadState { p_cmd: 5e5, p_actual: 5e5, q_actual: 0.0 };
        assert_eq!(load_step(&s, 5e5, 1e8, 1e-4), s);
        let lp = LoadParams::default();
        let dt = 1e-5;
        let mut s = s;
        let mut steps = 0;
        while s.p_actual < 9e5 {
            let n = load_step(&s, 9e5, lp.ramp_limit(), dt);
            assert!((n.p_actual - s.p_actual).abs() <= lp.ramp_limit() * dt * (1.0 + 1e-12));
            s = n;
            steps += 1;
        }
        // 400 kW at 100 MW/s
        assert!(((steps as f64) * dt - 4e-3).abs() < 1.5 * dt);
    }

    #[test]
    fn bus_balance_examples() {
        assert_eq!(bus_power_balance(0.0, &[], 0.0), 0.0);
        assert_eq!(bus_power_balance(1.15e6, &[5e5], 6.2e5), 3e4);
    }

    #[test]
    fn network_losses_match_the_balance() {
        let g = GeneratorParams::default();
        let line = LineParams::default();
        let sol = solve_network(&g, &line, g.omega_nominal(), Complex64::new(1.1e6, 0.0)).unwrap();
        let net = bus_power_balance(sol.p_gen, &[1.1e6], 0.0);
        assert!((net - sol.p_line_loss).abs() < 1e-6 * sol.p_gen);
        assert!((sol.p_elec - sol.p_gen - sol.p_stator_loss).abs() < 1e-6 * sol.p_gen);
        assert!(sol.v_bus_ll < g.v_ll);
    }
}
