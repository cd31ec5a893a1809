//! The DC-side outer loops on the rectifier-only topology: regulate the
//! stack current, then the stack voltage, instead of the grid power.

use pemsim::cli::preset;
use pemsim::engine::{simulate, ControlMode, Event, EventKind, Window};

fn main() -> pemsim::Result<()> {
    let mut idc = preset("fig9")?;
    idc.name = "idc_q".into();
    idc.setpoints.mode = ControlMode::IdcQ;
    idc.setpoints.idc_ref = 1155.96;
    idc.events = vec![Event { time: 0.025, kind: EventKind::SetIdc, value: 2501.54 }];
    slower(&mut idc);
    report(&idc)?;

    let mut vdc = preset("fig9")?;
    vdc.name = "vdc_q".into();
    vdc.setpoints.mode = ControlMode::VdcQ;
    vdc.setpoints.vdc_ref = 168.48;
    vdc.events = vec![Event { time: 0.025, kind: EventKind::SetVdc, value: 194.88 }];
    slower(&mut vdc);
    report(&vdc)?;

    // a voltage reference under the stack EMF cannot be reached
    let mut low = vdc.clone().with_strict(true);
    low.name = "vdc_140".into();
    low.setpoints.vdc_ref = 140.0;
    low.events.clear();
    low.analysis.windows = vec![Window { label: "140 V".into(), t_start: 0.01, t_end: 0.05 }];
    match simulate(&low) {
        Ok(_) => println!("{}: accepted", low.name),
        Err(e) => println!("{}: rejected in strict mode (exit {}): {e}", low.name, e.exit_code()),
    }
    Ok(())
}

// the 100 Hz DC loops need longer than the 50 ms figure window
fn slower(sc: &mut pemsim::engine::Scenario) {
    sc.solver.t_end = 0.1;
    sc.analysis.windows[1] = Window { label: "500 kW".into(), t_start: 0.08, t_end: 0.1 };
}

fn report(sc: &pemsim::engine::Scenario) -> pemsim::Result<()> {
    let sim = simulate(sc)?;
    println!("{}", sc.name);
    for w in &sim.metrics.windows {
        println!(
            "  {:<7} i_stack {:>8.2} A  v_stack {:>7.3} V  p_ac {:>7.2} kW  q_ac {:>6.2} kVAr",
            w.label,
            w.mean("i_stack_A")?,
            w.mean("v_stack_V")?,
            w.mean("p_ac_W")? / 1e3,
            w.mean("q_ac_VAr")? / 1e3
        );
    }
    for s in &sim.metrics.settling {
        println!("  {} settles in {:?}", s.channel, s.settling.seconds());
    }
    Ok(())
}
