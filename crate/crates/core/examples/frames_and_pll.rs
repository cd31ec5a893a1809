//! dq transform conventions and the SRF-PLL re-locking after a phase jump.

use std::f64::consts::{FRAC_PI_2, TAU};

use pemsim::control::{abc_to_dq, dq_to_abc, pll_step, Abc, PllGains, PllState};

fn main() {
    let a = 61.24;
    let aligned = abc_to_dq(0.3, Abc::balanced(a, 0.3));
    println!("aligned set      -> d = {:.6}, q = {:.2e}", aligned.d, aligned.q);
    let lagging = abc_to_dq(0.3 + FRAC_PI_2, Abc::balanced(a, 0.3));
    println!("frame 90 deg ahead -> d = {:.2e}, q = {:.6}", lagging.d, lagging.q);
    let x = Abc::new(12.0, -3.5, -8.5);
    let back = dq_to_abc(1.1, abc_to_dq(1.1, x));
    println!("round trip error {:.1e}", (back.a - x.a).abs().max((back.b - x.b).abs()).max((back.c - x.c).abs()));

    let f = 60.0;
    let gains = PllGains::default();
    let dt = 10e-6;
    let w = TAU * f;
    let mut s = PllState::locked(0.0, w);
    let jump = 0.5;
    let cycle = 1.0 / f;
    let n = (8.0 * cycle / dt).round() as usize;
    let mut relocked = None;
    println!("\nphase jump of {jump} rad at t = 0, PLL kp {:.1} ki {:.0}", gains.kp, gains.ki);
    for k in 0..n {
        let t = (k + 1) as f64 * dt;
        s = pll_step(Abc::balanced(a, w * t + jump), &s, &gains, dt);
        if s.residual() >= 0.01 {
            relocked = None;
        } else if relocked.is_none() {
            relocked = Some(t);
        }
        if (k + 1) % (n / 8) == 0 {
            println!(
                "  {:.1} cycles: |v_q|/|v| = {:.2e}, f_hat = {:.3} Hz",
                t / cycle,
                s.residual(),
                s.omega_hat / TAU
            );
        }
    }
    match relocked {
        Some(t) => println!("residual stays under 1 % from {:.2} cycles on", t / cycle),
        None => println!("did not re-lock"),
    }
}
