use std::f64::consts::TAU;

use proptest::prelude::*;

use pemsim::cli::preset;
use pemsim::control::{
    abc_to_dq, current_loop_step, dq_to_abc, pq_to_idq_refs, supervisor_step, Abc, DelayLine, Dq, PiGains, PiState,
    SupervisorConfig, SupervisorState,
};
use pemsim::engine::{ControlMode, Event, EventKind, Scenario};
use pemsim::grid::{load_step, DynamicLoadState};
use pemsim::stack::{current_for_power, scale_stack, static_voltage, CellGroupParams, StackParams};

proptest! {
    #[test]
    fn dq_round_trip(a in 0.0..500.0f64, phase in 0.0..TAU, theta in -10.0..10.0f64) {
        let x = Abc::balanced(a, phase);
        let y = dq_to_abc(theta, abc_to_dq(theta, x));
        prop_assert!((y.a - x.a).abs() < 1e-12);
        prop_assert!((y.b - x.b).abs() < 1e-12);
        prop_assert!((y.c - x.c).abs() < 1e-12);
    }

    #[test]
    fn dq_magnitude_is_amplitude(a in 0.0..500.0f64, phase in 0.0..TAU, theta in 0.0..TAU) {
        let d = abc_to_dq(theta, Abc::balanced(a, phase));
        prop_assert!((d.magnitude() - a).abs() <= 1e-12 * a.max(1.0));
    }

    #[test]
    fn stack_power_inverse(p in 0.0..1.5e6f64) {
        let s = StackParams::reference();
        let i = current_for_power(&s, p).unwrap();
        let back = static_voltage(&s, i).unwrap() * i;
        prop_assert!((back - p).abs() <= 1e-9 * p.max(1.0));
    }

    #[test]
    fn stack_power_is_monotonic(p in 0.0..1.5e6f64, dp in 1.0..1e5f64) {
        let s = StackParams::reference();
        prop_assert!(current_for_power(&s, p + dp).unwrap() > current_for_power(&s, p).unwrap());
        let i = current_for_power(&s, p).unwrap();
        prop_assert!(static_voltage(&s, i + 1.0).unwrap() > static_voltage(&s, i).unwrap());
    }

    #[test]
    fn scaling_is_homogeneous(ns in 1u32..100, np in 1u32..100, k in 2u32..5) {
        let cell = CellGroupParams::REFERENCE;
        let a = scale_stack(&cell, 3, ns, np).unwrap();
        let b = scale_stack(&cell, 3, k * ns, np).unwrap();
        let c = scale_stack(&cell, 3, k * ns, k * np).unwrap();
        let k = f64::from(k);
        prop_assert!((b.v_rev - k * a.v_rev).abs() <= 1e-12 * b.v_rev);
        prop_assert!((b.r_total - k * a.r_total).abs() <= 1e-12 * b.r_total);
        prop_assert!((c.r_total - a.r_total).abs() <= 1e-12 * a.r_total);
        prop_assert!((c.i_rated - k * a.i_rated).abs() <= 1e-9 * c.i_rated);
        prop_assert!((a.tau() - c.tau()).abs() <= 1e-12 * a.tau());
        prop_assert!((a.tau() - b.tau()).abs() <= 1e-12 * a.tau());
    }

    #[test]
    fn load_ramp_is_exact(p0 in 0.0..2e6f64, p1 in 0.0..2e6f64, rate in 1e5..1e8f64) {
        let dt = 1e-4;
        let mut s = DynamicLoadState { p_cmd: p0, p_actual: p0, q_actual: 0.0 };
        let mut n = 0usize;
        while s.p_actual != p1 {
            let next = load_step(&s, p1, rate, dt);
            prop_assert!((next.p_actual - s.p_actual).abs() <= rate * dt * (1.0 + 1e-12));
            s = next;
            n += 1;
            prop_assert!(n <= 1_000_000);
        }
        let steps = ((p1 - p0).abs() / (rate * dt)).ceil() as usize;
        prop_assert!(n == steps || n == steps + 1 || n + 1 == steps, "{} vs {}", n, steps);
    }

    #[test]
    fn supervisor_respects_bounds_and_slew(
        p_ref in 0.0..750e3f64,
        p_gen in 0.0..3e6f64,
        f in 59.0..61.0f64,
        p_elz in 0.0..750e3f64,
        droop in 0.0..1e6f64,
        tc in 0.0..0.2f64,
    ) {
        let cfg = SupervisorConfig { droop_gain: droop, time_constant: tc, ..Default::default() };
        let dt = 1e-4;
        let next = supervisor_step(&cfg, &SupervisorState { p_ref }, p_gen, f, p_elz, dt);
        prop_assert!(next.p_ref >= cfg.p_min && next.p_ref <= cfg.p_max);
        prop_assert!((next.p_ref - p_ref).abs() <= cfg.ramp_limit * dt * (1.0 + 1e-12));
    }

    #[test]
    fn delay_line_is_a_pure_transport(steps in 0usize..50, samples in prop::collection::vec(-1e6..1e6f64, 1..200)) {
        let mut line = DelayLine::new(steps, 0.0);
        for (k, &x) in samples.iter().enumerate() {
            let out = line.push(x);
            let expected = if k >= steps { samples[k - steps] } else { 0.0 };
            prop_assert_eq!(out, expected);
        }
    }

    #[test]
    fn modulation_never_exceeds_one(
        id_ref in -6e3..6e3f64, iq_ref in -6e3..6e3f64,
        id in -6e3..6e3f64, iq in -6e3..6e3f64,
        u in -50.0..50.0f64, v_dc in 20.0..400.0f64,
    ) {
        let gains = PiGains::new(15.8e-6 * TAU * 1000.0, 1e-5 * TAU * 1000.0);
        let s = [PiState::with_integrator(u), PiState::with_integrator(-u)];
        let i = Dq::new(id, iq);
        let (m, next) = current_loop_step(Dq::new(id_ref, iq_ref), i, &s, &gains, 376.99, 15.8e-6, Dq::new(61.24, 0.0), v_dc, 1e-5);
        prop_assert!(m.magnitude() <= 1.0);
        prop_assert!(m.d * i.d + m.q * i.q >= -1e-9 * i.magnitude());
        if next[0].saturated {
            // anti-windup: frozen integrators
            prop_assert_eq!(next[0].integrator, s[0].integrator);
            prop_assert_eq!(next[1].integrator, s[1].integrator);
        }
    }

    #[test]
    fn current_refs_are_limited_without_turning(p in 0.0..2e6f64, q in -1e6..1e6f64, v_d in 10.0..400.0f64, lim in 100.0..1e4f64) {
        let r = pq_to_idq_refs(p, q, v_d, lim).unwrap();
        prop_assert!(r.i.magnitude() <= lim * (1.0 + 1e-12));
        let raw = Dq::new(p / (1.5 * v_d), q / (1.5 * v_d));
        if raw.magnitude() > 0.0 {
            let cross = raw.d * r.i.q - raw.q * r.i.d;
            prop_assert!(cross.abs() <= 1e-9 * raw.magnitude() * r.i.magnitude().max(1.0));
            prop_assert!(raw.d * r.i.d + raw.q * r.i.q >= 0.0);
        }
    }

    #[test]
    fn scenario_text_round_trips(
        p in 0.0..7e5f64, q in -1e5..1e5f64, t in 0.001..0.049f64, v in 0.0..7e5f64,
        mode in 0usize..3, dt_exp in 5u32..7,
    ) {
        let mut sc = preset("fig9").unwrap();
        sc.setpoints.p_ref = p;
        sc.setpoints.q_ref = q;
        sc.setpoints.mode = [ControlMode::PQ, ControlMode::VdcQ, ControlMode::IdcQ][mode];
        sc.events = vec![Event { time: t, kind: EventKind::SetP, value: v }];
        sc.solver.dt = 10f64.powi(-(dt_exp as i32));
        let toml = Scenario::from_toml_str(&sc.to_toml_string().unwrap(), "t").unwrap();
        prop_assert_eq!(&toml, &sc);
        let json = Scenario::from_json_str(&sc.to_json_string().unwrap(), "j").unwrap();
        prop_assert_eq!(&json, &sc);
    }
}
