use pemsim::cli::{preset, PRESET_NAMES};
use pemsim::engine::{
    channel_names, extract_steady_state, simulate, ControlMode, Event, EventKind, Scenario, Topology, Trace,
};
use pemsim::Error;

fn no_events(name: &str) -> Scenario {
    let mut sc = preset(name).unwrap();
    sc.events.clear();
    sc.analysis.settling.clear();
    sc.analysis.windows.retain(|w| w.t_end <= sc.solver.t_end);
    sc
}

/// Channels that are constant at an equilibrium (everything but the
/// phase currents).
fn dc_channels(trace: &Trace) -> Vec<&str> {
    trace.names().into_iter().filter(|n| !matches!(*n, "i_a_A" | "i_b_A" | "i_c_A")).collect()
}

#[test]
fn equilibrium_is_preserved() {
    for name in ["fig8", "fig9", "fig11", "fig12"] {
        let mut sc = no_events(name);
        sc.solver.t_end = sc.solver.t_end.min(0.05);
        sc.analysis.windows.clear();
        let sim = simulate(&sc).unwrap();
        let first = |ch: &str| sim.trace.require(ch).unwrap()[0];
        let s_ac = first("p_ac_W").hypot(first("q_ac_VAr"));
        let i_ac = first("i_d_A").hypot(first("i_q_A"));
        for ch in dc_channels(&sim.trace) {
            let xs = sim.trace.require(ch).unwrap();
            let x0 = xs[0];
            // dq axes and the balance residual are measured against the
            // magnitude of the operating point they belong to
            let scale = match ch {
                "p_ac_W" | "q_ac_VAr" | "energy_residual_W" => s_ac,
                "i_d_A" | "i_q_A" => i_ac,
                _ => x0.abs().max(1.0),
            };
            let worst = xs.iter().map(|x| (x - x0).abs()).fold(0.0, f64::max);
            assert!(worst <= 1e-9 * scale, "{name} {ch}: drift {worst:e} from {x0}");
        }
    }
}

#[test]
fn grid_equilibrium_is_preserved() {
    let mut sc = no_events("fig14");
    sc.solver.t_end = 2.0;
    sc.analysis.windows.clear();
    let sim = simulate(&sc).unwrap();
    for ch in ["p_gen_W", "p_elz_W", "f_Hz", "v_bus_V", "p_mech_W"] {
        let xs = sim.trace.require(ch).unwrap();
        let worst = xs.iter().map(|x| (x - xs[0]).abs()).fold(0.0, f64::max);
        assert!(worst <= 1e-9 * xs[0].abs(), "{ch}: drift {worst:e}");
    }
}

#[test]
fn events_take_effect_on_the_first_step_at_or_after_their_time() {
    let dt = 1e-5;
    for (t_event, first_new_sample) in [(0.025, 0.02501), (0.0250037, 0.02502)] {
        let mut sc = preset("fig9").unwrap();
        sc.events = vec![Event { time: t_event, kind: EventKind::SetP, value: 500e3 }];
        sc.analysis.settling.clear();
        let sim = simulate(&sc).unwrap();
        let tr = &sim.trace;
        let p_ref = tr.require("p_ref_W").unwrap();
        let k = p_ref.iter().position(|&p| p == 500e3).unwrap();
        // the sample at t_k is the state after the step starting at t_{k-1}
        let step_start = tr.time[k] - dt;
        assert!((tr.time[k] - first_new_sample).abs() < 1e-12, "{t_event}: first change at {}", tr.time[k]);
        assert!(step_start >= t_event - 1e-12);
        assert!(step_start - dt < t_event);
        assert!(p_ref[..k].iter().all(|&p| p == 200e3));
        let marker = &tr.events[0];
        assert_eq!(marker.time, t_event);
        assert!((marker.effective - step_start).abs() < 1e-12);
    }
}

#[test]
fn repeat_runs_are_byte_identical() {
    for name in PRESET_NAMES {
        let sc = preset(name).unwrap();
        let mut a = Vec::new();
        let mut b = Vec::new();
        simulate(&sc).unwrap().trace.write_csv(&mut a).unwrap();
        simulate(&sc).unwrap().trace.write_csv(&mut b).unwrap();
        assert!(a == b, "{name}");
    }
}

#[test]
fn halving_dt_moves_steady_means_little() {
    for name in ["fig9", "fig11"] {
        let sc = preset(name).unwrap();
        let a = simulate(&sc).unwrap();
        let b = simulate(&sc.clone().with_dt(sc.solver.dt / 2.0)).unwrap();
        for (wa, wb) in a.metrics.windows.iter().zip(&b.metrics.windows) {
            for ch in ["p_ac_W", "v_link_V", "v_stack_V", "i_stack_A", "p_stack_W"] {
                let (x, y) = (wa.mean(ch).unwrap(), wb.mean(ch).unwrap());
                assert!((x - y).abs() <= 1e-4 * x.abs(), "{name} {} {ch}: {x} vs {y}", wa.label);
            }
        }
    }
}

#[test]
fn channels_have_unit_suffixes_and_topology_sets() {
    for topo in [Topology::NoDcDc, Topology::WithDcDc, Topology::GridSupport] {
        let names = channel_names(topo);
        assert!(!names.is_empty());
        for n in &names {
            assert!(pemsim::engine::Unit::from_channel_name(n).is_some(), "{n}");
        }
        let mut sorted = names.clone();
        sorted.sort();
        sorted.dedup();
        assert_eq!(sorted.len(), names.len());
    }
    assert!(channel_names(Topology::WithDcDc).contains(&"duty_pu".to_string()));
    assert!(!channel_names(Topology::NoDcDc).contains(&"duty_pu".to_string()));
}

#[test]
fn recording_selects_and_decimates() {
    let mut sc = preset("fig9").unwrap();
    sc.record.channels = vec!["v_stack_V".into(), "p_ac_W".into()];
    sc.record.decimation = 10;
    let sim = simulate(&sc).unwrap();
    assert_eq!(sim.trace.names(), vec!["v_stack_V", "p_ac_W"]);
    assert_eq!(sim.trace.len(), 501);
    assert!((sim.trace.time[1] - 1e-4).abs() < 1e-15);
    // metrics still come from the full channel set
    assert!(sim.metrics.windows[0].efficiency.is_some());

    sc.record.channels = vec!["nonsense_W".into()];
    assert!(matches!(simulate(&sc), Err(Error::Config(_))));
}

#[test]
fn coarse_steps_diverge_with_channel_and_time() {
    let sc = preset("fig9").unwrap().with_dt(2e-3);
    match simulate(&sc) {
        Err(Error::Divergence { channel, time }) => {
            assert!(pemsim::engine::channel_names(Topology::NoDcDc).contains(&channel), "{channel}");
            assert!(time > 0.0 && time <= sc.solver.t_end, "{time}");
        }
        other => panic!("expected divergence, got {other:?}"),
    }
}

#[test]
fn steady_state_of_constant_and_out_of_range_windows() {
    let sim = simulate(&preset("fig8").unwrap()).unwrap();
    let s = extract_steady_state(&sim.trace, 0.01, 0.05).unwrap();
    assert!(s.channels["v_link_V"].max_deviation < 1e-9);
    assert!(extract_steady_state(&sim.trace, 0.01, 0.06).is_err());
    assert!(extract_steady_state(&sim.trace, 0.03, 0.02).is_err());
}

#[test]
fn two_quadrant_reactive_power() {
    for q in [50e3, -50e3] {
        let mut sc = no_events("fig9");
        sc.setpoints.q_ref = q;
        let sim = simulate(&sc).unwrap();
        let w = &sim.metrics.windows[0];
        let q_ac = w.mean("q_ac_VAr").unwrap();
        assert_eq!(q_ac.signum(), q.signum());
        assert!((q_ac - q).abs() < 1.0);
        assert!(sim.trace.require("p_stack_W").unwrap().iter().all(|&p| p >= 0.0));
    }
}

#[test]
fn dc_current_loop_reaches_the_published_current() {
    let mut sc = preset("fig9").unwrap();
    sc.setpoints.mode = ControlMode::IdcQ;
    sc.setpoints.idc_ref = 2501.54;
    sc.events.clear();
    sc.analysis.settling.clear();
    sc.analysis.windows.truncate(1);
    let sim = simulate(&sc).unwrap();
    let w = &sim.metrics.windows[0];
    let stack = sc.stack().unwrap();
    // oracle: the stack line at the commanded current
    let v = stack.v_rev + stack.r_total * 2501.54;
    assert!((w.mean("i_stack_A").unwrap() - 2501.54).abs() < 1e-6);
    assert!((w.mean("v_stack_V").unwrap() - v).abs() < 1e-6);
    assert!((w.mean("v_stack_V").unwrap() - 194.88).abs() / 194.88 < 5e-3);
    assert!((w.mean("p_ac_W").unwrap() - 500e3).abs() / 500e3 < 0.01);
}

#[test]
fn dc_voltage_loop_rejects_references_below_the_emf() {
    let mut sc = preset("fig9").unwrap().with_strict(true);
    sc.setpoints.mode = ControlMode::VdcQ;
    sc.setpoints.vdc_ref = 140.0;
    sc.events.clear();
    sc.analysis.settling.clear();
    let e = simulate(&sc).unwrap_err();
    assert!(matches!(e, Error::InfeasibleReference(_)), "{e}");
    assert_eq!(e.exit_code(), 3);

    // non-strict: clamped to the floor and flagged
    let sim = simulate(&sc.with_strict(false)).unwrap();
    assert!(!sim.metrics.violations.is_empty());
    let v = sim.metrics.windows[0].mean("v_stack_V").unwrap();
    assert!((v - 145.5).abs() < 1e-6, "{v}");
}

#[test]
fn infeasible_event_midway_is_flagged_at_its_time() {
    let mut sc = preset("fig11").unwrap();
    sc.events = vec![Event { time: 0.02, kind: EventKind::SetVdc, value: 140.0 }];
    sc.analysis.windows.clear();
    let sim = simulate(&sc).unwrap();
    let flag = sim.trace.require("ref_limit_pu").unwrap();
    let k = flag.iter().position(|&f| f == 1.0).unwrap();
    assert!((sim.trace.time[k] - 0.02001).abs() < 1e-12);
    let e = simulate(&sc.with_strict(true)).unwrap_err();
    assert_eq!(e.exit_code(), 3);
}

#[test]
fn dynamic_stack_settles_to_the_static_point() {
    // oracle: the static run at the same reference
    let mut fast = preset("fig8").unwrap();
    fast.setpoints.p_ref = 100e3;
    fast.analysis.windows.clear();
    let stat = simulate(&fast).unwrap();
    let v_static = *stat.trace.require("v_stack_V").unwrap().last().unwrap();

    let mut dynamic = preset("fig8").unwrap();
    dynamic.params.stack.dynamic = true;
    dynamic.events = vec![Event { time: 0.01, kind: EventKind::SetP, value: 100e3 }];
    let tau = dynamic.stack().unwrap().tau();
    dynamic.solver.t_end = 0.01 + 10.0 * tau;
    dynamic.solver.dt = 2e-5;
    dynamic.record.decimation = 1000;
    dynamic.analysis.windows.clear();
    let sim = simulate(&dynamic).unwrap();
    let v = *sim.trace.require("v_stack_V").unwrap().last().unwrap();
    assert!((v - v_static).abs() / v_static < 1e-6, "{v} vs {v_static}");
    assert!(sim.diagnostics.max_energy_residual < 1e-6);
}
