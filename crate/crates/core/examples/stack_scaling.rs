//! Build the 3500 A stack from the three-cell reference group, then look at
//! its static curve and the RC branch response to a voltage step.

use pemsim::stack::{
    current_for_power, dynamic_step, scale_stack, static_voltage, CellGroupParams, StackParams, StackState,
};

fn main() -> pemsim::Result<()> {
    let cell = CellGroupParams::REFERENCE;
    let scaled = scale_stack(&cell, 3, 35, 70)?;
    println!(
        "scaled from the cell group: v_rev {:.2} V, r_total {:.5} ohm, tau {:.3} s, i_rated {:.0} A",
        scaled.v_rev,
        scaled.r_total,
        scaled.tau(),
        scaled.i_rated
    );

    let stack = StackParams::reference();
    println!(
        "with the steady-state overrides: v_rev {:.2} V, r_total {:.4} ohm, tau {:.3} s",
        stack.v_rev,
        stack.r_total,
        stack.tau()
    );

    println!("\n{:>10} {:>10} {:>10}", "P_dc kW", "I A", "V V");
    for p_kw in [1.9, 194.756, 487.5, 750.0] {
        let i = current_for_power(&stack, p_kw * 1e3)?;
        println!("{:>10.3} {:>10.2} {:>10.3}", p_kw, i, static_voltage(&stack, i)?);
    }

    // 170 V applied to a stack resting at its EMF: the current jumps through
    // the membrane resistance, then decays as the double layer charges
    let dt = 1e-3;
    let mut s = StackState::steady(&stack, 0.0);
    let v = 170.0;
    let i_final = (v - stack.v_rev) / stack.r_total;
    println!("\nstep to {v} V, final current {i_final:.1} A");
    let mut t = 0.0;
    for mark in [0.001, 0.1, 0.5, 1.0, 2.0, 5.0, 10.0] {
        while t < mark - 1e-12 {
            s = dynamic_step(&stack, &s, v, dt)?;
            t += dt;
        }
        println!("  t = {t:>6.3} s  i = {:>9.2} A  v_c1 = {:>7.3} V", s.i_dc, s.v_c1);
    }
    Ok(())
}
