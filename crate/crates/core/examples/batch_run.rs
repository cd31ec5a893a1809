//! Run every preset on its own thread and write all outputs under one
//! directory (first argument, default `out`).

use std::path::PathBuf;
use std::thread;

use pemsim::cli::{execute, RunRequest, PRESET_NAMES};

fn main() {
    let out = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(|| "out".into());
    let results: Vec<_> = thread::scope(|s| {
        let handles: Vec<_> = PRESET_NAMES
            .iter()
            .map(|name| {
                let req = RunRequest::preset(name, &out);
                s.spawn(move || (name, execute(&req)))
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("worker panicked")).collect()
    });
    for (name, r) in results {
        match r {
            Ok(run) => {
                let m = &run.simulation.metrics;
                let eta: Vec<String> =
                    m.windows.iter().filter_map(|w| w.efficiency).map(|e| format!("{:.4}", e)).collect();
                println!(
                    "{name:<6} {:>7} steps  residual {:.1e}  efficiency [{}]  -> {}",
                    m.steps,
                    m.max_energy_residual,
                    eta.join(", "),
                    run.dir.display()
                );
            }
            Err(e) => println!("{name:<6} failed: {e}"),
        }
    }
}
