//! Quasi-static grid-support case: generator, line, dynamic load and an
//! electrolyzer whose power loop is a first-order lag, coordinated by the
//! supervisor through delayed telemetry.

use num_complex::Complex64;

use super::calibration::{grid_current, rectifier_losses};
use super::scenario::{EventKind, Scenario};
use super::trace::{EventMarker, Trace};
use super::Diagnostics;
use crate::control::{supervisor_step, DelayLine, SupervisorState, Telemetry};
use crate::converter::AcSideParams;
use crate::error::{Error, Result};
use crate::grid::{
    bus_power_balance, generator_step, load_step, solve_network, BusSolution, DynamicLoadState, GeneratorState,
};
use crate::stack::current_for_power;

pub(crate) const CHANNELS_GRID: &[&str] = &[
    "p_gen_W",
    "p_load_W",
    "p_load_cmd_W",
    "p_elz_W",
    "p_elz_ref_W",
    "p_stack_W",
    "i_stack_A",
    "f_Hz",
    "v_bus_V",
    "p_line_loss_W",
    "p_mech_W",
    "p_net_W",
    "energy_residual_W",
];

fn stamp(e: Error, t: f64) -> Error {
    match e {
        Error::Divergence { channel, .. } => Error::Divergence { channel, time: t },
        other => other,
    }
}

pub(crate) fn run(sc: &Scenario) -> Result<(Trace, Diagnostics)> {
    let g = &sc.params.grid;
    let gen = &g.generator;
    let cfg = &g.supervisor;
    let dt = sc.solver.dt;
    let stack = sc.stack()?;
    let mut diag = Diagnostics::default();
    let w0 = gen.omega_nominal();
    let s_of = |p_load: f64, q_load: f64, p_elz: f64| Complex64::new(p_load + p_elz, q_load);

    // electrolyzer operating point that puts the generation bus on target
    let p_load0 = g.load_initial;
    let q_load0 = g.load.reactive_for(p_load0);
    let mut p_elz = cfg.p_net_target - p_load0;
    let mut sol = solve_network(gen, &g.line, w0, s_of(p_load0, q_load0, p_elz)).map_err(|e| stamp(e, 0.0))?;
    for _ in 0..100 {
        let step = cfg.p_net_target - sol.p_gen;
        p_elz += step;
        sol = solve_network(gen, &g.line, w0, s_of(p_load0, q_load0, p_elz)).map_err(|e| stamp(e, 0.0))?;
        if step.abs() <= 1e-9 * cfg.p_net_target.abs().max(1.0) {
            break;
        }
    }
    if p_elz < cfg.p_min || p_elz > cfg.p_max {
        let msg = format!(
            "initial electrolyzer power {p_elz:.1} W needed to hold the bus target lies outside [{}, {}]",
            cfg.p_min, cfg.p_max
        );
        if sc.solver.strict {
            return Err(Error::InfeasibleReference(msg));
        }
        diag.violations.push(format!("t = 0 s: {msg}"));
        p_elz = p_elz.clamp(cfg.p_min, cfg.p_max);
        sol = solve_network(gen, &g.line, w0, s_of(p_load0, q_load0, p_elz)).map_err(|e| stamp(e, 0.0))?;
    }

    let elz_ac = AcSideParams { turns_ratio: g.turns_ratio, ..sc.params.rectifier.ac };
    let stack_point = |p_ac: f64, v_bus_ll: f64| -> Result<(f64, f64)> {
        let ac = AcSideParams { v_ll_primary: v_bus_ll, ..elz_ac };
        let p_dc = (p_ac - rectifier_losses(&ac, &sc.params.rectifier_loss, grid_current(&ac, p_ac, 0.0))).max(0.0);
        Ok((p_dc, current_for_power(&stack, p_dc)?))
    };

    let mut gen_state = GeneratorState::equilibrium(gen, sol.p_elec);
    let mut load = DynamicLoadState { p_cmd: p_load0, p_actual: p_load0, q_actual: q_load0 };
    let mut sup = SupervisorState { p_ref: p_elz };
    let mut delay = DelayLine::new(
        DelayLine::<Telemetry>::steps_for(cfg.telemetry_delay, dt)?,
        Telemetry { p_gen: sol.p_gen, f_hz: gen_state.frequency(), p_elz },
    );
    let lag = if g.electrolyzer_tau > 0.0 { 1.0 - (-dt / g.electrolyzer_tau).exp() } else { 1.0 };
    let ramp = g.load.ramp_limit();

    let names: Vec<&str> = CHANNELS_GRID.to_vec();
    let mut trace = Trace::with_channels(&names);
    let row = |sol: &BusSolution, gs: &GeneratorState, load: &DynamicLoadState, p_elz: f64, p_ref: f64, res: f64| {
        let (p_dc, i_dc) = stack_point(p_elz, sol.v_bus_ll)?;
        Ok::<_, Error>(vec![
            sol.p_gen,
            load.p_actual,
            load.p_cmd,
            p_elz,
            p_ref,
            p_dc,
            i_dc,
            gs.frequency(),
            sol.v_bus_ll,
            sol.p_line_loss,
            gs.p_mech,
            bus_power_balance(sol.p_gen, &[load.p_actual], p_elz),
            res,
        ])
    };
    trace.push(0.0, &row(&sol, &gen_state, &load, p_elz, sup.p_ref, 0.0)?);

    let n = sc.n_steps();
    let mut target = p_load0;
    let mut next_event = 0;
    for k in 0..n {
        let t = k as f64 * dt;
        while next_event < sc.events.len() && sc.event_step(sc.events[next_event].time) <= k {
            let e = sc.events[next_event];
            if e.kind == EventKind::SetLoad {
                target = e.value;
            }
            trace.events.push(EventMarker { time: e.time, effective: t, label: e.kind.label().into(), value: e.value });
            next_event += 1;
        }
        // measurements, through the telemetry link
        let frame = Telemetry { p_gen: sol.p_gen, f_hz: gen_state.frequency(), p_elz };
        let seen = delay.push(frame);
        // supervisor, then the electrolyzer power loop
        sup = supervisor_step(cfg, &sup, seen.p_gen, seen.f_hz, seen.p_elz, dt);
        p_elz += lag * (sup.p_ref - p_elz);
        // plant
        load = load_step(&load, target, ramp, dt);
        load.q_actual = g.load.reactive_for(load.p_actual);
        sol = solve_network(gen, &g.line, gen_state.omega, s_of(load.p_actual, load.q_actual, p_elz))
            .map_err(|e| stamp(e, t))?;
        let next = generator_step(gen, &gen_state, sol.p_elec, dt).map_err(|e| stamp(e, t + dt))?;
        let dke = (next.kinetic_energy(gen) - gen_state.kinetic_energy(gen)) / dt;
        let consumed = load.p_actual + p_elz + sol.p_line_loss + sol.p_stator_loss;
        let residual = dke - (next.p_mech - consumed);
        let scale = next.p_mech.abs().max(consumed.abs()).max(1.0);
        diag.max_energy_residual = diag.max_energy_residual.max(residual.abs() / scale);
        gen_state = next;
        for (name, v) in [("p_elz_W", p_elz), ("f_Hz", gen_state.omega)] {
            if !v.is_finite() {
                return Err(Error::Divergence { channel: name.into(), time: t + dt });
            }
        }
        diag.steps = k + 1;
        if (k + 1) % sc.record.decimation == 0 || k + 1 == n {
            trace.push((k + 1) as f64 * dt, &row(&sol, &gen_state, &load, p_elz, sup.p_ref, residual)?);
        }
    }
    Ok((trace, diag))
}
