//! Inner current loop, outer loops and the DC/DC current loop.

use serde::{Deserialize, Serialize};

use super::pi::{PiGains, PiState};
use crate::error::{Error, Result};
use crate::frames::Dq;
use crate::stack::{static_voltage, StackParams};

/// Current references in the controller dq frame.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct CurrentRefs {
    pub i: Dq,
    /// True when the vector limit scaled the request down.
    pub limited: bool,
}

/// Convert power references into dq current references.
///
/// Reactive power is counted positive when injected into the grid. With
/// currents flowing into the converter and `v_q = 0`, the injected reactive
/// power is `1.5 v_d i_q`, so `i_q_ref = q_ref / (1.5 v_d)`.
pub fn pq_to_idq_refs(p_ref: f64, q_ref: f64, v_d: f64, i_limit: f64) -> Result<CurrentRefs> {
    if !(v_d > 0.0) {
        return Err(Error::InfeasibleReference(format!("grid voltage lost (v_d = {v_d})")));
    }
    let i = Dq::new(p_ref / (1.5 * v_d), q_ref / (1.5 * v_d));
    let mag = i.magnitude();
    if mag > i_limit {
        Ok(CurrentRefs { i: i * (i_limit / mag), limited: true })
    } else {
        Ok(CurrentRefs { i, limited: false })
    }
}

/// Injected active/reactive power for dq voltage and current.
pub fn dq_power(v: Dq, i: Dq) -> (f64, f64) {
    (1.5 * (v.d * i.d + v.q * i.q), 1.5 * (v.d * i.q - v.q * i.d))
}

/// Forces `|m| <= 1` exactly.
pub(crate) fn clamp_unit(m: Dq) -> Dq {
    let mag = m.magnitude();
    if mag <= 1.0 {
        return m;
    }
    let mut out = m * (1.0 / mag);
    while out.magnitude() > 1.0 {
        out = out * (1.0 - f64::EPSILON);
    }
    out
}

/// One step of the decoupled dq current controller.
///
/// The converter voltage is `v_ff + (w L i_q, -w L i_d) - u` where `u` is the
/// PI output on the current error; the modulation vector is `2 v_c / v_dc`,
/// clamped to unit magnitude and kept from driving power back out of the
/// link, with both integrators frozen while either limit acts.
#[allow(clippy::too_many_arguments)]
pub fn current_loop_step(
    i_ref: Dq,
    i_meas: Dq,
    s: &[PiState; 2],
    gains: &PiGains,
    omega: f64,
    l_ac: f64,
    v_ff: Dq,
    v_dc: f64,
    dt: f64,
) -> (Dq, [PiState; 2]) {
    let e = i_ref - i_meas;
    let (ud, nd) = s[0].candidate(gains, e.d, dt);
    let (uq, nq) = s[1].candidate(gains, e.q, dt);
    let decouple = Dq::new(omega * l_ac * i_meas.q, -omega * l_ac * i_meas.d);
    let modulation = |u: Dq| (v_ff + decouple - u) * (2.0 / v_dc);
    let m = modulation(Dq::new(ud, uq));
    if m.magnitude() <= 1.0 && dot(m, i_meas) >= 0.0 {
        return (m, [PiState::with_integrator(nd), PiState::with_integrator(nq)]);
    }
    let frozen = Dq::new(gains.kp * e.d + s[0].integrator, gains.kp * e.q + s[1].integrator);
    let m = forward_only(clamp_unit(modulation(frozen)), i_meas);
    let sat = |p: &PiState| PiState { integrator: p.integrator, saturated: true };
    (m, [sat(&s[0]), sat(&s[1])])
}

fn dot(a: Dq, b: Dq) -> f64 {
    a.d * b.d + a.q * b.q
}

/// Removes the part of `m` that would return active power from the link to
/// the grid (`m . i < 0`). A projection, so `|m|` never grows.
pub(crate) fn forward_only(m: Dq, i: Dq) -> Dq {
    let p = dot(m, i);
    let ii = dot(i, i);
    if p >= 0.0 || ii == 0.0 {
        return m;
    }
    m - i * (p / ii)
}

/// Selectable outer loop of the active rectifier.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OuterLoopMode {
    /// Grid-side active and reactive power.
    ActiveReactive { p_ref: f64, q_ref: f64 },
    /// Stack voltage (equal to the link voltage without a DC/DC stage).
    DcVoltageReactive { vdc_ref: f64, q_ref: f64 },
    /// Stack current.
    DcCurrentReactive { idc_ref: f64, q_ref: f64 },
    /// DC-link voltage in front of a DC/DC stage.
    LinkVoltageReactive { vlink_ref: f64, q_ref: f64 },
}

impl OuterLoopMode {
    pub fn q_ref(&self) -> f64 {
        match *self {
            OuterLoopMode::ActiveReactive { q_ref, .. }
            | OuterLoopMode::DcVoltageReactive { q_ref, .. }
            | OuterLoopMode::DcCurrentReactive { q_ref, .. }
            | OuterLoopMode::LinkVoltageReactive { q_ref, .. } => q_ref,
        }
    }

    pub fn set_q_ref(&mut self, q: f64) {
        match self {
            OuterLoopMode::ActiveReactive { q_ref, .. }
            | OuterLoopMode::DcVoltageReactive { q_ref, .. }
            | OuterLoopMode::DcCurrentReactive { q_ref, .. }
            | OuterLoopMode::LinkVoltageReactive { q_ref, .. } => *q_ref = q,
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            OuterLoopMode::ActiveReactive { .. } => "P-Q",
            OuterLoopMode::DcVoltageReactive { .. } => "Vdc-Q",
            OuterLoopMode::DcCurrentReactive { .. } => "Idc-Q",
            OuterLoopMode::LinkVoltageReactive { .. } => "Vlink-Q",
        }
    }
}

/// Lowest references the hardware can reach.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReferenceFloors {
    /// Boost limit of the rectifier, `sqrt(2) * V_ll`.
    pub v_link_min: f64,
    /// EMF of the stack (only binding when the stack sits on the link).
    pub v_stack_min: f64,
}

/// Infeasible-reference check. Set `floors.v_stack_min` to the stack EMF only
/// when the stack sits directly on the link.
pub fn check_reference(mode: &OuterLoopMode, stack: &StackParams, floors: &ReferenceFloors) -> Result<()> {
    let floor_v = floors.v_link_min.max(floors.v_stack_min);
    match *mode {
        OuterLoopMode::ActiveReactive { p_ref, .. } if p_ref < 0.0 => Err(Error::InfeasibleReference(format!(
            "P_ref = {p_ref} W: the electrolyzer can only consume active power"
        ))),
        OuterLoopMode::DcVoltageReactive { vdc_ref, .. } if vdc_ref < floor_v => {
            Err(Error::InfeasibleReference(format!(
                "Vdc_ref = {vdc_ref} V is below the physical floor {floor_v:.3} V \
                 (boost limit {:.3} V, stack EMF {:.3} V)",
                floors.v_link_min, floors.v_stack_min
            )))
        }
        OuterLoopMode::DcCurrentReactive { idc_ref, .. } => {
            if idc_ref < 0.0 {
                return Err(Error::InfeasibleReference(format!("Idc_ref = {idc_ref} A is negative")));
            }
            let v = static_voltage(stack, idc_ref)?;
            if v < floors.v_link_min {
                return Err(Error::InfeasibleReference(format!(
                    "Idc_ref = {idc_ref} A needs {v:.3} V, below the boost limit {:.3} V",
                    floors.v_link_min
                )));
            }
            Ok(())
        }
        OuterLoopMode::LinkVoltageReactive { vlink_ref, .. } if vlink_ref < floors.v_link_min => {
            Err(Error::InfeasibleReference(format!(
                "Vlink_ref = {vlink_ref} V is below the boost limit {:.3} V",
                floors.v_link_min
            )))
        }
        _ => Ok(()),
    }
}

/// Measurements used by the outer loops.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct OuterMeasurements {
    /// Grid d-axis voltage in the PLL frame.
    pub v_d: f64,
    pub v_link: f64,
    pub i_stack: f64,
    /// DC power drawn from the link by the downstream stage (feedforward).
    pub p_draw: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct OuterLoopContext<'a> {
    pub gains: PiGains,
    pub stack: &'a StackParams,
    pub floors: ReferenceFloors,
    pub i_limit: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct OuterOutput {
    pub refs: CurrentRefs,
    /// Grid-side active power command behind `refs.i.d`, W.
    pub p_cmd: f64,
}

/// One step of the outer loop. The DC loops produce an active power command
/// (feedforward plus PI) that is turned into `i_d_ref`; the Q channel is
/// always an independent feedforward.
pub fn outer_loop_step(
    mode: &OuterLoopMode,
    meas: &OuterMeasurements,
    s: &PiState,
    ctx: &OuterLoopContext<'_>,
    dt: f64,
) -> Result<(OuterOutput, PiState)> {
    check_reference(mode, ctx.stack, &ctx.floors)?;
    let v_d = meas.v_d;
    let p_max = 1.5 * v_d.max(0.0) * ctx.i_limit;
    let st = ctx.stack;
    let (p_cmd, next) = match *mode {
        OuterLoopMode::ActiveReactive { p_ref, .. } => (p_ref, *s),
        OuterLoopMode::DcVoltageReactive { vdc_ref, .. } => {
            let ff = vdc_ref * (vdc_ref - st.v_rev) / st.r_total;
            pi_around(ff, vdc_ref - meas.v_link, s, ctx, dt, p_max)
        }
        OuterLoopMode::DcCurrentReactive { idc_ref, .. } => {
            let ff = static_voltage(st, idc_ref)? * idc_ref;
            pi_around(ff, idc_ref - meas.i_stack, s, ctx, dt, p_max)
        }
        OuterLoopMode::LinkVoltageReactive { vlink_ref, .. } => {
            pi_around(meas.p_draw, vlink_ref - meas.v_link, s, ctx, dt, p_max)
        }
    };
    let refs = pq_to_idq_refs(p_cmd, mode.q_ref(), v_d, ctx.i_limit)?;
    Ok((OuterOutput { refs, p_cmd }, next))
}

fn pi_around(ff: f64, error: f64, s: &PiState, ctx: &OuterLoopContext<'_>, dt: f64, p_max: f64) -> (f64, PiState) {
    let (u, next) = s.step(&ctx.gains, error, dt, -ff, (p_max - ff).max(-ff));
    (ff + u, next)
}

/// Buck current loop: `duty = (v_ff + PI(i_ref - i_l)) / v_link`, clamped to
/// `[0, 1]` with the integrator frozen at the clamp. `v_ff` is the
/// feedforward voltage (output voltage plus resistive drop).
pub fn buck_current_loop_step(
    i_ref: f64,
    i_l: f64,
    s: &PiState,
    gains: &PiGains,
    v_link: f64,
    v_ff: f64,
    dt: f64,
) -> (f64, PiState) {
    let (u, next) = s.step(gains, i_ref - i_l, dt, -v_ff, v_link - v_ff);
    (((v_ff + u) / v_link).clamp(0.0, 1.0), next)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pq_refs_examples() {
        let r = pq_to_idq_refs(0.0, 0.0, 61.24, 1e4).unwrap();
        assert_eq!(r.i, Dq::ZERO);
        let v_d = 2f64.sqrt() * 75.0 / 3f64.sqrt();
        assert!((v_d - 61.237).abs() < 1e-3);
        let r = pq_to_idq_refs(200e3, 0.0, v_d, 1e4).unwrap();
        assert!((1.5 * v_d * r.i.d - 200e3).abs() < 1e-6);
        assert!((r.i.d - 2177.3).abs() < 0.1);
        let a = pq_to_idq_refs(0.0, 50e3, v_d, 1e4).unwrap();
        let b = pq_to_idq_refs(0.0, -50e3, v_d, 1e4).unwrap();
        assert!(a.i.q > 0.0 && b.i.q < 0.0);
        assert_eq!(a.i.q, -b.i.q);
        let (_, q) = dq_power(Dq::new(v_d, 0.0), a.i);
        assert!((q - 50e3).abs() < 1e-6);
        assert!(pq_to_idq_refs(1.0, 0.0, 0.0, 1.0).is_err());
    }

    #[test]
    fn current_limit_preserves_angle() {
        let r = pq_to_idq_refs(300e3, 100e3, 60.0, 1000.0).unwrap();
        assert!(r.limited);
        assert!((r.i.magnitude() - 1000.0).abs() < 1e-9);
        assert!((r.i.q / r.i.d - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn zero_error_holds_modulation() {
        let g = PiGains::new(0.1, 0.06);
        let s = [PiState::with_integrator(0.02), PiState::with_integrator(0.005)];
        let i = Dq::new(2000.0, 500.0);
        let (m1, s1) = current_loop_step(i, i, &s, &g, 377.0, 15.8e-6, Dq::new(61.2, 0.0), 168.0, 1e-5);
        let (m2, s2) = current_loop_step(i, i, &s1, &g, 377.0, 15.8e-6, Dq::new(61.2, 0.0), 168.0, 1e-5);
        assert_eq!(s1, s);
        assert_eq!(s2, s);
        assert_eq!(m1, m2);
    }

    #[test]
    fn saturated_modulation_is_unit_and_frozen() {
        let g = PiGains::new(0.1, 60.0);
        let s = [PiState::with_integrator(-5.0), PiState::with_integrator(0.0)];
        let (m, s1) = current_loop_step(
            Dq::new(5000.0, 0.0),
            Dq::ZERO,
            &s,
            &g,
            377.0,
            15.8e-6,
            Dq::new(61.2, 0.0),
            100.0,
            1e-5,
        );
        assert!(m.magnitude() <= 1.0);
        assert!((m.magnitude() - 1.0).abs() < 1e-15);
        assert!(s1[0].saturated && s1[1].saturated);
        assert_eq!(s1[0].integrator, -5.0);
    }

    #[test]
    fn infeasible_references() {
        let st = StackParams::reference();
        let floors = ReferenceFloors { v_link_min: 2f64.sqrt() * 75.0, v_stack_min: st.v_rev };
        let bad = OuterLoopMode::DcVoltageReactive { vdc_ref: 140.0, q_ref: 0.0 };
        assert!(matches!(check_reference(&bad, &st, &floors), Err(Error::InfeasibleReference(_))));
        let ok = OuterLoopMode::DcVoltageReactive { vdc_ref: 170.0, q_ref: 0.0 };
        assert!(check_reference(&ok, &st, &floors).is_ok());
        let floors_b = ReferenceFloors { v_link_min: 2f64.sqrt() * 125.0, v_stack_min: 0.0 };
        let link = OuterLoopMode::LinkVoltageReactive { vlink_ref: 170.0, q_ref: 0.0 };
        assert!(check_reference(&link, &st, &floors_b).is_err());
        let neg = OuterLoopMode::ActiveReactive { p_ref: -1.0, q_ref: 0.0 };
        assert!(check_reference(&neg, &st, &floors).is_err());
    }

    #[test]
    fn dc_voltage_loop_zero_error_keeps_refs() {
        let st = StackParams::reference();
        let ctx = OuterLoopContext {
            gains: PiGains::new(900.0, 7e6),
            stack: &st,
            floors: ReferenceFloors { v_link_min: 106.0, v_stack_min: st.v_rev },
            i_limit: 1e5,
        };
        let mode = OuterLoopMode::DcVoltageReactive { vdc_ref: 180.0, q_ref: 0.0 };
        let meas = OuterMeasurements { v_d: 61.24, v_link: 180.0, i_stack: 1725.0, p_draw: 0.0 };
        let s = PiState::with_integrator(1234.0);
        let (o1, s1) = outer_loop_step(&mode, &meas, &s, &ctx, 1e-5).unwrap();
        let (o2, _) = outer_loop_step(&mode, &meas, &s1, &ctx, 1e-5).unwrap();
        assert_eq!(s1, s);
        assert_eq!(o1.refs.i.d, o2.refs.i.d);
    }

    #[test]
    fn buck_loop_examples() {
        let g = PiGains::new(31.4, 100.0);
        let s = PiState::with_integrator(0.0);
        let (d1, s1) = buck_current_loop_step(1000.0, 1000.0, &s, &g, 250.0, 168.5, 1e-5);
        let (d2, _) = buck_current_loop_step(1000.0, 1000.0, &s1, &g, 250.0, 168.5, 1e-5);
        assert_eq!(d1, d2);
        assert!((d1 - 168.5 / 250.0).abs() < 1e-15);
        // zero demand with current still flowing drives the duty down
        let (d0, _) = buck_current_loop_step(0.0, 50.0, &s, &g, 250.0, 150.0, 1e-5);
        assert!(d0 < 150.0 / 250.0);
        let (dmax, sat) = buck_current_loop_step(5000.0, 0.0, &s, &g, 250.0, 150.0, 1e-5);
        assert_eq!(dmax, 1.0);
        assert!(sat.saturated);
    }
}
