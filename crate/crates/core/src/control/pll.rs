//! Synchronous-reference-frame PLL.
//!
//! The q-axis voltage, normalised by the voltage magnitude, approximates the
//! phase error; a PI on it sets the frequency estimate. Linearised, the loop
//! is `s^2 + kp s + ki`, so `kp = 2 zeta wn` and `ki = wn^2`.

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use crate::frames::{abc_to_dq, Abc, Dq};
use crate::numeric::wrap_angle;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PllGains {
    pub kp: f64,
    pub ki: f64,
    /// Free-running frequency, rad/s.
    pub omega_nominal: f64,
}

impl PllGains {
    /// Second-order design for a natural frequency in Hz.
    pub fn from_bandwidth(bandwidth_hz: f64, zeta: f64, f_nominal: f64) -> Self {
        let wn = TAU * bandwidth_hz;
        PllGains { kp: 2.0 * zeta * wn, ki: wn * wn, omega_nominal: TAU * f_nominal }
    }
}

impl Default for PllGains {
    fn default() -> Self {
        Self::from_bandwidth(50.0, std::f64::consts::FRAC_1_SQRT_2, 60.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PllState {
    /// Estimated grid angle, wrapped to `[0, 2 pi)`.
    pub theta: f64,
    pub omega_hat: f64,
    pub integrator: f64,
    /// Grid voltage seen in the PLL frame at the last update.
    pub v_dq: Dq,
}

impl PllState {
    pub fn locked(theta: f64, omega: f64) -> Self {
        PllState { theta: wrap_angle(theta), omega_hat: omega, integrator: 0.0, v_dq: Dq::ZERO }
    }

    /// `|v_q| / |v|` of the last update.
    pub fn residual(&self) -> f64 {
        let mag = self.v_dq.magnitude();
        if mag > 0.0 {
            self.v_dq.q.abs() / mag
        } else {
            0.0
        }
    }
}

pub fn pll_step(v_abc: Abc, s: &PllState, gains: &PllGains, dt: f64) -> PllState {
    let v = abc_to_dq(s.theta, v_abc);
    let mag = v.magnitude();
    let err = if mag > 1e-9 { v.q / mag } else { 0.0 };
    let integrator = s.integrator + gains.ki * err * dt;
    let omega_hat = gains.omega_nominal + gains.kp * err + integrator;
    PllState { theta: wrap_angle(s.theta + omega_hat * dt), omega_hat, integrator, v_dq: v }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn angle_diff(a: f64, b: f64) -> f64 {
        let d = (a - b).rem_euclid(TAU);
        if d > std::f64::consts::PI {
            d - TAU
        } else {
            d
        }
    }

    #[test]
    fn locks_to_sixty_hertz() {
        let gains = PllGains::default();
        let dt = 1e-5;
        let w = TAU * 60.0;
        // start 0.3 rad off and 2 Hz low
        let mut s = PllState::locked(-0.3, w - TAU * 2.0);
        let mut t = 0.0;
        for _ in 0..20_000 {
            s = pll_step(Abc::balanced(100.0, w * t), &s, &gains, dt);
            t += dt;
        }
        assert!((s.omega_hat - 376.991).abs() < 1e-3, "{}", s.omega_hat);
        assert!(angle_diff(s.theta, w * t).abs() < 1e-6);
    }

    #[test]
    fn relocks_after_phase_step_within_five_cycles() {
        let gains = PllGains::default();
        let dt = 1e-5;
        let w = TAU * 60.0;
        let mut s = PllState::locked(0.0, w);
        let mut t = 0.0;
        // the grid angle jumps by 0.5 rad at t = 0
        let mut relocked_at = None;
        for k in 0..(5.0 / 60.0 / dt) as usize {
            s = pll_step(Abc::balanced(1.0, w * t + 0.5), &s, &gains, dt);
            t += dt;
            if s.residual() < 0.01 {
                relocked_at.get_or_insert(k);
            } else {
                relocked_at = None;
            }
        }
        let k = relocked_at.expect("PLL did not relock within 5 cycles");
        assert!((k as f64) * dt < 5.0 / 60.0);
    }

    #[test]
    fn frequency_ramp_phase_lag_matches_type_two_oracle() {
        // under a frequency ramp of slope a, the linearised type-2 loop holds
        // a constant phase error a / ki and tracks the frequency itself
        let gains = PllGains::default();
        let dt = 1e-5;
        let w0 = TAU * 60.0;
        let a = 20.0; // rad/s^2
        let mut s = PllState::locked(0.0, w0);
        let mut t: f64 = 0.0;
        for _ in 0..50_000 {
            let phase = w0 * t + 0.5 * a * t * t;
            s = pll_step(Abc::balanced(1.0, phase), &s, &gains, dt);
            t += dt;
        }
        let expected = a / gains.ki;
        let err = s.v_dq.q.atan2(s.v_dq.d);
        assert!((err - expected).abs() / expected < 0.02, "{err} vs {expected}");
        assert!((s.omega_hat - (w0 + a * t)).abs() < 0.01);
    }
}
