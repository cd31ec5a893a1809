//! Engine generator, dynamic load and an electrolyzer holding the
//! generation bus at 1150 kW. Compares telemetry delays and the effect of
//! adding frequency-watt droop.

use pemsim::cli::preset;
use pemsim::engine::simulate;

fn main() -> pemsim::Result<()> {
    println!(
        "{:>9} {:>9} {:>12} {:>12} {:>10} {:>12}",
        "delay ms", "droop", "d p_elz kW", "p_gen kW", "nadir Hz", "recovery s"
    );
    for delay in [0.0, 0.1, 0.3] {
        for droop in [0.0, 200e3] {
            let mut sc = preset("fig14")?;
            sc.params.grid.supervisor.telemetry_delay = delay;
            sc.params.grid.supervisor.droop_gain = droop;
            let sim = simulate(&sc)?;
            let m = &sim.metrics;
            let (before, after) = (&m.windows[0], &m.windows[1]);
            let f = m.frequency.expect("grid scenario has frequency metrics");
            println!(
                "{:>9.0} {:>9.0} {:>12.1} {:>12.2} {:>10.4} {:>12}",
                delay * 1e3,
                droop,
                (after.mean("p_elz_W")? - before.mean("p_elz_W")?) / 1e3,
                after.mean("p_gen_W")? / 1e3,
                f.nadir_hz,
                f.recovery.seconds().map_or("never".to_string(), |s| format!("{s:.3}"))
            );
        }
    }
    Ok(())
}
