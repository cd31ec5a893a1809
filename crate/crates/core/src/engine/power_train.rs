//! Converter scenarios: stiff grid, transformer, rectifier, optional buck
//! stage and stack, with the full control cascade.

use std::f64::consts::TAU;

use super::calibration::{buck_losses, grid_current, rectifier_losses};
use super::scenario::{ControlMode, EventKind, Scenario, Setpoints, Topology};
use super::trace::{EventMarker, Trace};
use super::Diagnostics;
use crate::control::{
    buck_current_loop_step, check_reference, current_loop_step, outer_loop_step, pll_step, OuterLoopContext,
    OuterLoopMode, OuterMeasurements, PiGains, PiState, PllGains, PllState, ReferenceFloors,
};
use crate::converter::{buck_rates, min_dc_link, rectifier_rates, BuckParams, LossModel, RectifierParams};
use crate::error::{Error, Result};
use crate::frames::{dq_to_abc, Abc, Dq};
use crate::numeric::{energy_change, midpoint_solve, wrap_angle};
use crate::stack::{current_for_power, static_voltage, StackParams};

pub(crate) const CHANNELS_NO_DC_DC: &[&str] = &[
    "p_ac_W",
    "q_ac_VAr",
    "p_ref_W",
    "q_ref_VAr",
    "i_d_A",
    "i_q_A",
    "i_a_A",
    "i_b_A",
    "i_c_A",
    "v_link_V",
    "v_stack_V",
    "i_stack_A",
    "p_stack_W",
    "p_loss_W",
    "m_mag_pu",
    "f_pll_Hz",
    "boost_flag_pu",
    "ref_limit_pu",
    "energy_residual_W",
];

pub(crate) const CHANNELS_WITH_DC_DC_EXTRA: &[&str] = &["v_link_ref_V", "i_buck_A", "i_buck_ref_A", "duty_pu"];

/// What the buck stage tracks.
#[derive(Debug, Clone, Copy, PartialEq)]
enum BuckTarget {
    /// Grid-side active power, through the loss estimate.
    Power(f64),
    Current(f64),
    /// Stack terminal voltage, through the static inverse.
    Voltage(f64),
}

/// Continuous plant state in the grid-synchronous frame.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Plant {
    i: Dq,
    v_link: f64,
    i_l: f64,
    v_out: f64,
    v_c1: f64,
}

#[derive(Debug, Clone, Copy, Default)]
struct Flows {
    p_ac: f64,
    p_copper: f64,
    p_cond: f64,
    p_buck_loss: f64,
    p_stack: f64,
    p_link_draw: f64,
}

struct Model<'a> {
    buck_stage: bool,
    dynamic: bool,
    stack: StackParams,
    rect: &'a RectifierParams,
    buck: &'a BuckParams,
    rect_loss: &'a LossModel,
    buck_loss: &'a LossModel,
    v_grid: Dq,
}

impl Model<'_> {
    fn pack(&self, p: &Plant) -> Vec<f64> {
        let mut x = vec![p.i.d, p.i.q, p.v_link];
        if self.buck_stage {
            x.extend([p.i_l, p.v_out]);
        }
        if self.dynamic {
            x.push(p.v_c1);
        }
        x
    }

    fn unpack(&self, x: &[f64]) -> Plant {
        let (i_l, v_out) = if self.buck_stage { (x[3], x[4]) } else { (0.0, x[2]) };
        let v_c1 = if self.dynamic { *x.last().expect("state") } else { 0.0 };
        Plant { i: Dq::new(x[0], x[1]), v_link: x[2], i_l, v_out, v_c1 }
    }

    /// Weights of the converter energy `1/2 sum w x^2` (the stack's internal
    /// branch is excluded; the stack is a sink at its terminals).
    fn weights(&self) -> Vec<f64> {
        let l = 1.5 * self.rect.ac.l_ac;
        let mut w = vec![l, l, self.rect.c_dc1];
        if self.buck_stage {
            w.extend([self.buck.l_dc, self.buck.c_dc2]);
        }
        if self.dynamic {
            w.push(0.0);
        }
        w
    }

    fn stack_voltage(&self, p: &Plant) -> f64 {
        if self.buck_stage {
            p.v_out
        } else {
            p.v_link
        }
    }

    fn stack_current(&self, p: &Plant) -> f64 {
        self.stack.terminal_current(self.stack_voltage(p), p.v_c1, self.dynamic)
    }

    fn rates(&self, x: &[f64], m: Dq, duty: f64, out: &mut [f64]) -> Flows {
        let p = self.unpack(x);
        let i_stack = self.stack_current(&p);
        let mut k = 3;
        let mut flows = Flows::default();
        let i_draw = if self.buck_stage {
            let (r, bf) = buck_rates(self.buck, self.buck_loss, duty, p.v_link, p.i_l, p.v_out, i_stack);
            out[3] = r[0];
            out[4] = r[1];
            k = 5;
            flows.p_buck_loss = bf.p_loss;
            flows.p_stack = bf.p_out;
            bf.i_link
        } else {
            i_stack
        };
        let (r, rf) = rectifier_rates(self.rect, self.rect_loss, m, self.v_grid, p.i, p.v_link, i_draw);
        out[..3].copy_from_slice(&r);
        flows.p_ac = rf.p_ac_in;
        flows.p_copper = rf.p_copper;
        flows.p_cond = rf.p_cond;
        flows.p_link_draw = rf.p_dc_out;
        if !self.buck_stage {
            flows.p_stack = rf.p_dc_out;
        }
        if self.dynamic {
            out[k] = (i_stack - p.v_c1 / self.stack.r1_s) / self.stack.c1_s;
        }
        flows
    }

    fn instantaneous_loss(&self, p: &Plant) -> f64 {
        let mut l = rectifier_losses(&self.rect.ac, self.rect_loss, p.i);
        if self.buck_stage {
            l += buck_losses(self.buck, self.buck_loss, p.i_l);
        }
        l
    }
}

/// Recorded references and controller outputs of one step.
#[derive(Debug, Clone, Copy, Default)]
struct Applied {
    p_ref: f64,
    q_ref: f64,
    m_mag: f64,
    duty: f64,
    i_buck_ref: f64,
    boost: bool,
    limited: bool,
    residual: f64,
}

struct Controller {
    mode: OuterLoopMode,
    buck_target: BuckTarget,
    pll: PllState,
    current: [PiState; 2],
    outer: PiState,
    buck: PiState,
    loss_est: f64,
    p_draw: f64,
    p_cmd: f64,
    ref_clamped: bool,
}

fn rectifier_mode(topology: Topology, sp: &Setpoints) -> OuterLoopMode {
    let q_ref = sp.q_ref;
    match (topology, sp.mode) {
        (Topology::WithDcDc, _) => OuterLoopMode::LinkVoltageReactive { vlink_ref: sp.vdc_ref, q_ref },
        (_, ControlMode::PQ) => OuterLoopMode::ActiveReactive { p_ref: sp.p_ref, q_ref },
        (_, ControlMode::VdcQ) => OuterLoopMode::DcVoltageReactive { vdc_ref: sp.vdc_ref, q_ref },
        (_, ControlMode::IdcQ) => OuterLoopMode::DcCurrentReactive { idc_ref: sp.idc_ref, q_ref },
    }
}

fn buck_target(sp: &Setpoints, stack: &StackParams) -> (BuckTarget, Option<String>) {
    match sp.mode {
        ControlMode::PQ if sp.p_ref < 0.0 => {
            (BuckTarget::Power(0.0), Some(format!("P_ref = {} W is negative; held at 0", sp.p_ref)))
        }
        ControlMode::PQ => (BuckTarget::Power(sp.p_ref), None),
        ControlMode::IdcQ if sp.idc_ref < 0.0 => {
            (BuckTarget::Current(0.0), Some(format!("Idc_ref = {} A is negative; held at 0", sp.idc_ref)))
        }
        ControlMode::IdcQ => (BuckTarget::Current(sp.idc_ref), None),
        ControlMode::VdcQ if sp.vstack_ref < stack.v_rev => (
            BuckTarget::Voltage(stack.v_rev),
            Some(format!("stack voltage reference {} V is below the EMF; held at {} V", sp.vstack_ref, stack.v_rev)),
        ),
        ControlMode::VdcQ => (BuckTarget::Voltage(sp.vstack_ref), None),
    }
}

/// Clamp an infeasible rectifier reference to its physical floor.
fn clamp_to_floor(mode: OuterLoopMode, stack: &StackParams, floors: &ReferenceFloors) -> OuterLoopMode {
    let floor_v = floors.v_link_min.max(floors.v_stack_min);
    match mode {
        OuterLoopMode::ActiveReactive { p_ref, q_ref } => OuterLoopMode::ActiveReactive { p_ref: p_ref.max(0.0), q_ref },
        OuterLoopMode::DcVoltageReactive { vdc_ref, q_ref } => {
            OuterLoopMode::DcVoltageReactive { vdc_ref: vdc_ref.max(floor_v), q_ref }
        }
        OuterLoopMode::DcCurrentReactive { idc_ref, q_ref } => {
            let i_floor = ((floors.v_link_min - stack.v_rev) / stack.r_total).max(0.0);
            OuterLoopMode::DcCurrentReactive { idc_ref: idc_ref.max(i_floor), q_ref }
        }
        OuterLoopMode::LinkVoltageReactive { vlink_ref, q_ref } => {
            OuterLoopMode::LinkVoltageReactive { vlink_ref: vlink_ref.max(floors.v_link_min), q_ref }
        }
    }
}

/// Feasible rectifier mode for the setpoints; in strict mode an infeasible
/// reference is an error, otherwise it is clamped and reported.
fn resolve_mode(
    topology: Topology,
    sp: &Setpoints,
    stack: &StackParams,
    floors: &ReferenceFloors,
    strict: bool,
    violations: &mut Vec<String>,
    t: f64,
) -> Result<(OuterLoopMode, bool)> {
    let mode = rectifier_mode(topology, sp);
    match check_reference(&mode, stack, floors) {
        Ok(()) => Ok((mode, false)),
        Err(Error::InfeasibleReference(msg)) if !strict => {
            let clamped = clamp_to_floor(mode, stack, floors);
            violations.push(format!("t = {t:.6} s: {msg}; clamped to the floor"));
            Ok((clamped, true))
        }
        Err(e) => Err(e),
    }
}

fn feedforward(mode: &OuterLoopMode, stack: &StackParams, p_draw: f64) -> f64 {
    match *mode {
        OuterLoopMode::ActiveReactive { p_ref, .. } => p_ref,
        OuterLoopMode::DcVoltageReactive { vdc_ref, .. } => vdc_ref * (vdc_ref - stack.v_rev) / stack.r_total,
        OuterLoopMode::DcCurrentReactive { idc_ref, .. } => (stack.v_rev + stack.r_total * idc_ref) * idc_ref,
        OuterLoopMode::LinkVoltageReactive { .. } => p_draw,
    }
}

fn outer_gains(mode: &OuterLoopMode, sc: &Scenario, stack: &StackParams) -> PiGains {
    let c = &sc.params.control;
    let cap = sc.params.rectifier.c_dc1;
    match *mode {
        OuterLoopMode::ActiveReactive { .. } => PiGains::new(0.0, 0.0),
        OuterLoopMode::DcVoltageReactive { vdc_ref, .. } => {
            let w = TAU * c.dc_bandwidth_hz;
            let g = (2.0 * vdc_ref - stack.v_rev) / stack.r_total;
            let kp = cap * vdc_ref * w;
            PiGains::new(kp, w * (g + kp))
        }
        OuterLoopMode::DcCurrentReactive { idc_ref, .. } => {
            let w = TAU * c.dc_bandwidth_hz;
            let v = stack.v_rev + stack.r_total * idc_ref;
            let g = (2.0 * v - stack.v_rev) / stack.r_total;
            let kp = cap * v * w;
            PiGains::new(kp * stack.r_total, w * (g + kp) * stack.r_total)
        }
        OuterLoopMode::LinkVoltageReactive { vlink_ref, .. } => {
            let w = TAU * c.link_bandwidth_hz;
            PiGains::new(2.0 * c.link_zeta * w * cap * vlink_ref, w * w * cap * vlink_ref)
        }
    }
}

/// Trace channel of a packed plant state.
fn state_name(k: usize, buck_stage: bool) -> &'static str {
    let names: &[&str] =
        if buck_stage { &["i_d_A", "i_q_A", "v_link_V", "i_buck_A", "v_stack_V"] } else { &["i_d_A", "i_q_A", "v_link_V"] };
    names.get(k).copied().unwrap_or("v_stack_V")
}

/// Fixed point `P = p_dc + loss(P)` for the grid power behind a DC demand.
fn grid_power_for(rect: &RectifierParams, loss: &LossModel, p_dc: f64, q: f64) -> f64 {
    let mut p = p_dc;
    for _ in 0..200 {
        let next = p_dc + rectifier_losses(&rect.ac, loss, grid_current(&rect.ac, p, q));
        let done = (next - p).abs() <= 1e-13 * next.abs().max(1.0);
        p = next;
        if done {
            break;
        }
    }
    p
}

/// Stack current with `p_stack(i) + buck_losses(i) = p_link`.
fn buck_current_for(model: &Model<'_>, p_link: f64) -> Result<f64> {
    let mut i = 0.0;
    for _ in 0..200 {
        let avail = p_link - buck_losses(model.buck, model.buck_loss, i);
        let next = if avail > 0.0 { current_for_power(&model.stack, avail)? } else { 0.0 };
        let done = (next - i).abs() <= 1e-13 * next.abs().max(1.0);
        i = next;
        if done {
            break;
        }
    }
    Ok(i)
}

struct Equilibrium {
    plant: Plant,
    p_ac: f64,
    p_stack: f64,
    p_link_draw: f64,
    i_buck_ref: f64,
}

fn equilibrium(model: &Model<'_>, mode: &OuterLoopMode, target: BuckTarget) -> Result<Equilibrium> {
    let st = &model.stack;
    let rect = model.rect;
    let q = mode.q_ref();
    let no_steady = |why: &str| Error::config(format!("initial setpoints have no steady state: {why}"));
    if !model.buck_stage {
        let (p_ac, i_s) = match *mode {
            OuterLoopMode::ActiveReactive { p_ref, q_ref } => {
                let p_dc = p_ref - rectifier_losses(&rect.ac, model.rect_loss, grid_current(&rect.ac, p_ref, q_ref));
                if p_dc < -1e-9 * p_ref.abs().max(1.0) {
                    return Err(no_steady("P_ref does not cover the converter losses"));
                }
                (p_ref, current_for_power(st, p_dc.max(0.0))?)
            }
            OuterLoopMode::DcVoltageReactive { vdc_ref, .. } => {
                let i = ((vdc_ref - st.v_rev) / st.r_total).max(0.0);
                (grid_power_for(rect, model.rect_loss, vdc_ref * i, q), i)
            }
            OuterLoopMode::DcCurrentReactive { idc_ref, .. } => {
                let p_dc = static_voltage(st, idc_ref)? * idc_ref;
                (grid_power_for(rect, model.rect_loss, p_dc, q), idc_ref)
            }
            OuterLoopMode::LinkVoltageReactive { .. } => return Err(no_steady("link loop without a DC/DC stage")),
        };
        let v = static_voltage(st, i_s)?;
        let plant = Plant { i: grid_current(&rect.ac, p_ac, q), v_link: v, i_l: 0.0, v_out: v, v_c1: st.r1_s * i_s };
        return Ok(Equilibrium { plant, p_ac, p_stack: v * i_s, p_link_draw: v * i_s, i_buck_ref: 0.0 });
    }
    let OuterLoopMode::LinkVoltageReactive { vlink_ref, .. } = *mode else {
        return Err(no_steady("the DC/DC topology needs the link loop"));
    };
    let (p_ac, i_s, i_ref) = match target {
        BuckTarget::Power(p) => {
            let p_link = p - rectifier_losses(&rect.ac, model.rect_loss, grid_current(&rect.ac, p, q));
            let i = buck_current_for(model, p_link)?;
            let p_link_actual = static_voltage(st, i)? * i + buck_losses(model.buck, model.buck_loss, i);
            let p_ac = if i > 0.0 { p } else { grid_power_for(rect, model.rect_loss, p_link_actual, q) };
            (p_ac, i, i)
        }
        BuckTarget::Current(i) => {
            let p_link = static_voltage(st, i)? * i + buck_losses(model.buck, model.buck_loss, i);
            (grid_power_for(rect, model.rect_loss, p_link, q), i, i)
        }
        BuckTarget::Voltage(v) => {
            let i = ((v - st.v_rev) / st.r_total).max(0.0);
            let p_link = v * i + buck_losses(model.buck, model.buck_loss, i);
            (grid_power_for(rect, model.rect_loss, p_link, q), i, i)
        }
    };
    let v_out = static_voltage(st, i_s)?;
    let p_link_draw = v_out * i_s + buck_losses(model.buck, model.buck_loss, i_s);
    let plant = Plant { i: grid_current(&rect.ac, p_ac, q), v_link: vlink_ref, i_l: i_s, v_out, v_c1: st.r1_s * i_s };
    Ok(Equilibrium { plant, p_ac, p_stack: v_out * i_s, p_link_draw, i_buck_ref: i_ref })
}

/// Modulation that holds the AC currents at rest.
fn steady_modulation(model: &Model<'_>, p: &Plant) -> Dq {
    let ac = &model.rect.ac;
    let wl = ac.omega() * ac.l_ac;
    let v_c = Dq::new(
        model.v_grid.d - ac.r_ac * p.i.d + wl * p.i.q,
        model.v_grid.q - ac.r_ac * p.i.q - wl * p.i.d,
    );
    v_c * (2.0 / p.v_link)
}

fn divergence(channel: &str, t: f64) -> Error {
    Error::Divergence { channel: channel.to_string(), time: t }
}

pub(crate) fn run(sc: &Scenario) -> Result<(Trace, Diagnostics)> {
    let buck_stage = sc.topology == Topology::WithDcDc;
    let p = &sc.params;
    let stack = sc.stack()?;
    let ac = &p.rectifier.ac;
    let dt = sc.solver.dt;
    let strict = sc.solver.strict;
    let model = Model {
        buck_stage,
        dynamic: p.stack.dynamic,
        stack,
        rect: &p.rectifier,
        buck: &p.buck,
        rect_loss: &p.rectifier_loss,
        buck_loss: &p.buck_loss,
        v_grid: Dq::new(ac.v_phase_peak(), 0.0),
    };
    let floors = ReferenceFloors {
        v_link_min: min_dc_link(ac.v_ll_secondary()),
        v_stack_min: if buck_stage { 0.0 } else { stack.v_rev },
    };
    let mut diag = Diagnostics::default();

    let mut sp = sc.setpoints;
    let (mode, clamped) = resolve_mode(sc.topology, &sp, &stack, &floors, strict, &mut diag.violations, 0.0)?;
    let (target, note) = buck_target(&sp, &stack);
    let mut ref_clamped = clamped;
    if buck_stage {
        if let Some(msg) = note {
            if strict {
                return Err(Error::InfeasibleReference(msg));
            }
            diag.violations.push(format!("t = 0 s: {msg}"));
            ref_clamped = true;
        }
    }

    let eq = equilibrium(&model, &mode, target)?;
    let mut plant = eq.plant;
    let w0 = ac.omega();
    let mut ctl = Controller {
        mode,
        buck_target: target,
        pll: PllState::locked(0.0, w0),
        current: [PiState::default(), PiState::default()],
        outer: PiState::with_integrator(eq.p_ac - feedforward(&mode, &stack, eq.p_link_draw)),
        buck: PiState::default(),
        loss_est: eq.p_ac - eq.p_stack,
        p_draw: eq.p_link_draw,
        p_cmd: eq.p_ac,
        ref_clamped,
    };
    if matches!(mode, OuterLoopMode::ActiveReactive { .. }) {
        ctl.outer = PiState::default();
    }

    let names = super::channel_names(sc.topology);
    let name_refs: Vec<&str> = names.iter().map(String::as_str).collect();
    let mut trace = Trace::with_channels(&name_refs);
    let pll_gains: PllGains = p.control.pll_gains(ac.f_nominal);
    let wc = TAU * p.control.current_bandwidth_hz;
    let cur_gains = PiGains::new(ac.l_ac * wc, ac.r_ac * wc);
    let wb = TAU * p.control.buck_bandwidth_hz;
    let buck_gains = PiGains::new(p.buck.l_dc * wb, p.buck.l_dc * wb * wb / 4.0);
    let weights = model.weights();
    let v_peak = ac.v_phase_peak();
    let loss_alpha = 1.0 - (-dt / p.control.loss_filter_tau).exp();

    let m0 = steady_modulation(&model, &plant);
    let duty0 = if buck_stage { (plant.v_out + p.buck.r_dc * plant.i_l) / plant.v_link } else { 0.0 };
    let mut applied = Applied {
        p_ref: eq.p_ac,
        q_ref: mode.q_ref(),
        m_mag: m0.magnitude(),
        duty: duty0,
        i_buck_ref: eq.i_buck_ref,
        boost: plant.v_link < floors.v_link_min,
        limited: ctl.ref_clamped,
        residual: 0.0,
    };
    if let OuterLoopMode::ActiveReactive { p_ref, .. } = mode {
        applied.p_ref = p_ref;
    }
    diag.max_modulation = applied.m_mag;
    if applied.boost {
        diag.violations.push(format!(
            "t = 0 s: link voltage {:.3} V below the boost limit {:.3} V",
            plant.v_link, floors.v_link_min
        ));
        if strict {
            return Err(Error::Constraint(diag.violations.last().cloned().unwrap_or_default()));
        }
    }
    record(&mut trace, 0.0, &model, &plant, &ctl, &applied, &sp, buck_stage);

    let n = sc.n_steps();
    let mut next_event = 0;
    let mut boost_active = applied.boost;
    let mut limit_active = false;
    for k in 0..n {
        let t = k as f64 * dt;
        // events
        let mut changed = false;
        while next_event < sc.events.len() && sc.event_step(sc.events[next_event].time) <= k {
            let e = sc.events[next_event];
            apply_event(&mut sp, e.kind, e.value, sc.topology);
            trace.events.push(EventMarker { time: e.time, effective: t, label: e.kind.label().into(), value: e.value });
            next_event += 1;
            changed = true;
        }
        if changed {
            let (mode, clamped) = resolve_mode(sc.topology, &sp, &stack, &floors, strict, &mut diag.violations, t)?;
            let (target, note) = buck_target(&sp, &stack);
            ctl.ref_clamped = clamped;
            if buck_stage {
                if let Some(msg) = note {
                    if strict {
                        return Err(Error::InfeasibleReference(msg));
                    }
                    diag.violations.push(format!("t = {t:.6} s: {msg}"));
                    ctl.ref_clamped = true;
                }
            }
            if std::mem::discriminant(&mode) != std::mem::discriminant(&ctl.mode) {
                // bumpless transfer of the active-power command
                ctl.outer = PiState::with_integrator(ctl.p_cmd - feedforward(&mode, &stack, ctl.p_draw));
            }
            ctl.mode = mode;
            ctl.buck_target = target;
        }

        // measurements
        let theta_g = wrap_angle(w0 * t);
        let pll_next = pll_step(Abc::balanced(v_peak, theta_g), &ctl.pll, &pll_gains, dt);
        let delta = theta_g - ctl.pll.theta;
        let v_c = pll_next.v_dq;
        let i_c = plant.i.rotate(delta);
        let i_stack_meas = model.stack_current(&plant);

        // outer loop
        let meas = OuterMeasurements { v_d: v_c.d, v_link: plant.v_link, i_stack: i_stack_meas, p_draw: ctl.p_draw };
        let ctx = OuterLoopContext {
            gains: outer_gains(&ctl.mode, sc, &stack),
            stack: &stack,
            floors,
            i_limit: p.control.i_limit,
        };
        let (out, mut outer_next) = outer_loop_step(&ctl.mode, &meas, &ctl.outer, &ctx, dt)?;
        if ctl.current[0].saturated {
            // the inner loop cannot follow, so the outer integrator waits
            outer_next.integrator = ctl.outer.integrator;
        }
        if out.refs.limited {
            if !limit_active {
                diag.violations.push(format!("t = {t:.6} s: current reference limited to {} A", p.control.i_limit));
            }
            if strict {
                return Err(Error::Constraint(format!("current limit reached at t = {t:.6} s")));
            }
        }
        limit_active = out.refs.limited;

        // inner loops, with the resistive drop of the reference fed forward
        let v_ff = v_c - out.refs.i * ac.r_ac;
        let (m_c, cur_next) =
            current_loop_step(out.refs.i, i_c, &ctl.current, &cur_gains, pll_next.omega_hat, ac.l_ac, v_ff, plant.v_link, dt);
        let m_g = m_c.rotate(-delta);
        let (duty, buck_next, i_buck_ref) = if buck_stage {
            let i_ref = match ctl.buck_target {
                BuckTarget::Power(pr) => {
                    let p_dc = (pr - ctl.loss_est).max(0.0);
                    current_for_power(&stack, p_dc)?
                }
                BuckTarget::Current(i) => i,
                BuckTarget::Voltage(v) => ((v - stack.v_rev) / stack.r_total).max(0.0),
            };
            let v_ff = plant.v_out + p.buck.r_dc * plant.i_l;
            let (d, s) = buck_current_loop_step(i_ref, plant.i_l, &ctl.buck, &buck_gains, plant.v_link, v_ff, dt);
            (d, s, i_ref)
        } else {
            (0.0, ctl.buck, 0.0)
        };

        // plant
        let x0 = model.pack(&plant);
        let mut scratch = vec![0.0; x0.len()];
        let xm = midpoint_solve(&x0, dt, |x, f| {
            model.rates(x, m_g, duty, f);
        })
        .map_err(|k| divergence(state_name(k, buck_stage), t + dt))?;
        let flows = model.rates(&xm, m_g, duty, &mut scratch);
        let mut x1: Vec<f64> = x0.iter().zip(&xm).map(|(a, m)| 2.0 * m - a).collect();
        let mut extra_loss = 0.0;
        if buck_stage && x1[3] < 0.0 {
            // the diode blocks reverse inductor current; its energy is dissipated
            extra_loss = 0.5 * p.buck.l_dc * x1[3] * x1[3] / dt;
            x1[3] = 0.0;
        }
        if let Some(k) = x1.iter().position(|v| !v.is_finite()) {
            return Err(divergence(state_name(k, buck_stage), t + dt));
        }
        if !(x1[2] > 0.0) {
            return Err(divergence("v_link_V", t + dt));
        }
        let de = if extra_loss > 0.0 {
            let e = |x: &[f64]| 0.5 * weights.iter().zip(x).map(|(w, v)| w * v * v).sum::<f64>();
            (e(&x1) - e(&x0)) / dt
        } else {
            energy_change(&weights, &x0, &xm, &x1) / dt
        };
        let losses = flows.p_copper + flows.p_cond + flows.p_buck_loss + extra_loss;
        let residual = de - (flows.p_ac - losses - flows.p_stack);
        let scale = flows.p_ac.abs().max(flows.p_stack.abs()).max(1.0);
        diag.max_energy_residual = diag.max_energy_residual.max(residual.abs() / scale);

        plant = model.unpack(&x1);
        let measured_loss = flows.p_ac - flows.p_stack - de;
        ctl.loss_est += loss_alpha * (measured_loss - ctl.loss_est);
        ctl.p_draw = flows.p_link_draw;
        ctl.p_cmd = out.p_cmd;
        ctl.pll = pll_next;
        ctl.current = cur_next;
        ctl.outer = outer_next;
        ctl.buck = buck_next;

        let boost = plant.v_link < floors.v_link_min;
        if boost && !boost_active {
            diag.violations.push(format!(
                "t = {:.6} s: link voltage {:.3} V below the boost limit {:.3} V",
                t + dt,
                plant.v_link,
                floors.v_link_min
            ));
            if strict {
                return Err(Error::Constraint(diag.violations.last().cloned().unwrap_or_default()));
            }
        }
        boost_active = boost;
        applied = Applied {
            p_ref: match ctl.mode {
                OuterLoopMode::ActiveReactive { p_ref, .. } => p_ref,
                _ if buck_stage => match ctl.buck_target {
                    BuckTarget::Power(pr) => pr,
                    _ => out.p_cmd,
                },
                _ => out.p_cmd,
            },
            q_ref: ctl.mode.q_ref(),
            m_mag: m_c.magnitude(),
            duty,
            i_buck_ref,
            boost,
            limited: out.refs.limited || ctl.ref_clamped,
            residual,
        };
        diag.max_modulation = diag.max_modulation.max(applied.m_mag);
        diag.steps = k + 1;
        if (k + 1) % sc.record.decimation == 0 || k + 1 == n {
            record(&mut trace, (k + 1) as f64 * dt, &model, &plant, &ctl, &applied, &sp, buck_stage);
        }
    }
    Ok((trace, diag))
}

fn apply_event(sp: &mut Setpoints, kind: EventKind, value: f64, topology: Topology) {
    match kind {
        EventKind::SetP => {
            sp.p_ref = value;
            sp.mode = ControlMode::PQ;
        }
        EventKind::SetQ => sp.q_ref = value,
        EventKind::SetVdc => {
            sp.vdc_ref = value;
            if topology == Topology::NoDcDc {
                sp.mode = ControlMode::VdcQ;
            }
        }
        EventKind::SetIdc => {
            sp.idc_ref = value;
            sp.mode = ControlMode::IdcQ;
        }
        EventKind::SetLoad => {}
    }
}

#[allow(clippy::too_many_arguments)]
fn record(
    trace: &mut Trace,
    t: f64,
    model: &Model<'_>,
    plant: &Plant,
    ctl: &Controller,
    a: &Applied,
    sp: &Setpoints,
    buck_stage: bool,
) {
    let vg = model.v_grid;
    let (p_ac, q_ac) = (1.5 * (vg.d * plant.i.d + vg.q * plant.i.q), 1.5 * (vg.d * plant.i.q - vg.q * plant.i.d));
    let i_abc = dq_to_abc(wrap_angle(model.rect.ac.omega() * t), plant.i);
    let v_stack = model.stack_voltage(plant);
    let i_stack = model.stack_current(plant);
    let flag = |b: bool| if b { 1.0 } else { 0.0 };
    let mut row = vec![
        p_ac,
        q_ac,
        a.p_ref,
        a.q_ref,
        plant.i.d,
        plant.i.q,
        i_abc.a,
        i_abc.b,
        i_abc.c,
        plant.v_link,
        v_stack,
        i_stack,
        v_stack * i_stack,
        model.instantaneous_loss(plant),
        a.m_mag,
        ctl.pll.omega_hat / TAU,
        flag(a.boost),
        flag(a.limited),
        a.residual,
    ];
    if buck_stage {
        let v_ref = match ctl.mode {
            OuterLoopMode::LinkVoltageReactive { vlink_ref, .. } => vlink_ref,
            _ => sp.vdc_ref,
        };
        row.extend([v_ref, plant.i_l, a.i_buck_ref, a.duty]);
    }
    trace.push(t, &row);
}
