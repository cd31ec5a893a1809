//! Rectifier holds the 250 V link while the buck stage moves the stack from
//! 200 kW to 500 kW. Prints the link and stack trajectories around the step.

use pemsim::cli::preset;
use pemsim::engine::simulate;

fn main() -> pemsim::Result<()> {
    let sc = preset("fig12")?;
    let sim = simulate(&sc)?;
    let tr = &sim.trace;
    let (v_link, v_stack, i_stack, p_ac, duty) = (
        tr.require("v_link_V")?,
        tr.require("v_stack_V")?,
        tr.require("i_stack_A")?,
        tr.require("p_ac_W")?,
        tr.require("duty_pu")?,
    );
    println!("{:>8} {:>10} {:>10} {:>10} {:>10} {:>7}", "t s", "v_link V", "v_stack V", "i_stack A", "p_ac kW", "duty");
    for t_mark in [0.09, 0.1, 0.101, 0.105, 0.12, 0.2, 0.4, 0.7, 1.0, 1.3, 1.6] {
        let k = tr.time.partition_point(|&t| t < t_mark - 1e-9).min(tr.len() - 1);
        println!(
            "{:>8.3} {:>10.3} {:>10.3} {:>10.1} {:>10.2} {:>7.4}",
            tr.time[k],
            v_link[k],
            v_stack[k],
            i_stack[k],
            p_ac[k] / 1e3,
            duty[k]
        );
    }
    let worst = v_link.iter().map(|v| (v - 250.0).abs()).fold(0.0, f64::max);
    println!("\nlargest link deviation from 250 V over the run: {worst:.3} V");
    for w in &sim.metrics.windows {
        println!(
            "{}: stack {:.2} V / {:.1} A, efficiency {:.4}",
            w.label,
            w.mean("v_stack_V")?,
            w.mean("i_stack_A")?,
            w.efficiency.unwrap_or(f64::NAN)
        );
    }
    Ok(())
}
