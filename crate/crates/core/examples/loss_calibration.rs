//! Fit the converter loss models to the published efficiencies and check
//! the held-out operating points.

use pemsim::converter::efficiency;
use pemsim::engine::calibration::{
    ac_no_dc_dc, ac_with_dc_dc, buck_loss, buck_losses, grid_current, rectifier_loss, rectifier_losses, BUCK_CHECK,
    BUCK_FIT, RECTIFIER_CHECK, RECTIFIER_FIT,
};
use pemsim::engine::Params;
use pemsim::stack::current_for_power;

fn main() -> pemsim::Result<()> {
    let rect = rectifier_loss();
    let ac = ac_no_dc_dc();
    println!("rectifier: k_cond {:.4e}, p_fixed {:.1} W", rect.k_cond, rect.p_fixed);
    for (tag, (p, q, published)) in [("fit", RECTIFIER_FIT), ("held out", RECTIFIER_CHECK)] {
        let loss = rectifier_losses(&ac, &rect, grid_current(&ac, p, q));
        let eta = efficiency(p, p - loss)?;
        println!(
            "  {tag:<9} P {:>4.0} kW Q {:>3.0} kVAr: loss {:>7.0} W, efficiency {:.4} (published {published})",
            p / 1e3,
            q / 1e3,
            loss,
            eta
        );
    }

    let params = Params::default();
    let buck = &params.buck;
    let bl = buck_loss();
    let ac_b = ac_with_dc_dc();
    let stack = params.stack.build()?;
    println!("\nbuck: k_cond {:.4e}, p_fixed {:.1} W", bl.k_cond, bl.p_fixed);
    let points = [("fit", BUCK_FIT[0]), ("fit", BUCK_FIT[1]), ("held out", BUCK_CHECK)];
    for (tag, (p, published)) in points {
        // total loss is shared between the rectifier (at its own current) and the buck
        let r = rectifier_losses(&ac_b, &rect, grid_current(&ac_b, p, 0.0));
        let mut p_dc = published * p;
        for _ in 0..50 {
            let i = current_for_power(&stack, p_dc)?;
            p_dc = p - r - buck_losses(buck, &bl, i);
        }
        println!(
            "  {tag:<9} P {:>4.0} kW: rectifier {:>6.0} W, buck {:>6.0} W, efficiency {:.4} (published {published})",
            p / 1e3,
            r,
            p - r - p_dc,
            p_dc / p
        );
    }
    Ok(())
}
