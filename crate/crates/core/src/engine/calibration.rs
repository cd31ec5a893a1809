//! Loss-model calibration against the published operating points, and the
//! steady-state loss bookkeeping shared with the equilibrium solver.

use crate::converter::{
    calibrate_one_point, calibrate_two_point, conduction_loss, AcSideParams, BuckParams, LossModel,
};
use crate::error::Result;
use crate::frames::Dq;
use crate::stack::{current_for_power, StackParams};

/// `(P, Q, efficiency)` of the rectifier fit point on 480/75.
pub const RECTIFIER_FIT: (f64, f64, f64) = (200e3, 50e3, 0.97378);
/// Held-out rectifier point.
pub const RECTIFIER_CHECK: (f64, f64, f64) = (500e3, 50e3, 0.975);
/// `(P, efficiency)` pairs of the buck fit on 480/125 with a 250 V link.
pub const BUCK_FIT: [(f64, f64); 2] = [(2e3, 0.95), (200e3, 0.96)];
pub const BUCK_CHECK: (f64, f64) = (500e3, 0.96);

/// Steady dq current for grid-side powers (`v_q = 0`, injected-Q positive).
pub fn grid_current(ac: &AcSideParams, p: f64, q: f64) -> Dq {
    let v_d = ac.v_phase_peak();
    Dq::new(p / (1.5 * v_d), q / (1.5 * v_d))
}

/// Copper plus device loss of the rectifier at AC current `i`.
pub fn rectifier_losses(ac: &AcSideParams, loss: &LossModel, i: Dq) -> f64 {
    let m = i.magnitude();
    1.5 * ac.r_ac * m * m + conduction_loss(m, 0.0, loss)
}

/// Resistive plus device loss of the buck stage at inductor current `i`.
pub fn buck_losses(buck: &BuckParams, loss: &LossModel, i: f64) -> f64 {
    buck.r_dc * i * i + conduction_loss(0.0, i, loss)
}

/// Fit `k_cond` of the rectifier on `ac` so that the fit point reproduces
/// its published efficiency.
pub fn calibrate_rectifier(template: &LossModel, ac: &AcSideParams) -> Result<LossModel> {
    let (p, q, eta) = RECTIFIER_FIT;
    let i = grid_current(ac, p, q);
    let m = i.magnitude();
    let copper = 1.5 * ac.r_ac * m * m;
    calibrate_one_point(template, template.basis(m, 0.0), copper, p * (1.0 - eta))
}

/// Fit `k_cond` and `p_fixed` of the buck on the two fit points, given the
/// rectifier model already calibrated.
pub fn calibrate_buck(
    template: &LossModel,
    rectifier_loss: &LossModel,
    ac: &AcSideParams,
    buck: &BuckParams,
    stack: &StackParams,
) -> Result<LossModel> {
    let point = |(p, eta): (f64, f64)| -> Result<(f64, f64, f64)> {
        let rect = rectifier_losses(ac, rectifier_loss, grid_current(ac, p, 0.0));
        let i = current_for_power(stack, eta * p)?;
        Ok((template.basis(0.0, i), buck.r_dc * i * i, p * (1.0 - eta) - rect))
    };
    calibrate_two_point(template, [point(BUCK_FIT[0])?, point(BUCK_FIT[1])?])
}

/// AC side of the topology without a DC/DC stage.
pub fn ac_no_dc_dc() -> AcSideParams {
    AcSideParams::with_ratio(480.0 / 75.0)
}

/// AC side of the topology with a DC/DC stage.
pub fn ac_with_dc_dc() -> AcSideParams {
    AcSideParams::with_ratio(480.0 / 125.0)
}

/// Default rectifier loss model.
pub fn rectifier_loss() -> LossModel {
    calibrate_rectifier(&LossModel::uncalibrated(), &ac_no_dc_dc()).expect("reference calibration is valid")
}

/// Default buck loss model.
pub fn buck_loss() -> LossModel {
    calibrate_buck(
        &LossModel::uncalibrated(),
        &rectifier_loss(),
        &ac_with_dc_dc(),
        &BuckParams::default(),
        &StackParams::reference(),
    )
    .expect("reference calibration is valid")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rectifier_fit_reproduces_the_fit_point() {
        let ac = ac_no_dc_dc();
        let l = rectifier_loss();
        let (p, q, eta) = RECTIFIER_FIT;
        let loss = rectifier_losses(&ac, &l, grid_current(&ac, p, q));
        assert!((loss - 5244.0).abs() < 1e-6);
        assert!((p * (1.0 - eta) - 5244.0).abs() < 1e-6);
        assert_eq!(l.p_fixed, 0.0);
    }

    #[test]
    fn rectifier_held_out_point_within_fifteen_percent() {
        let ac = ac_no_dc_dc();
        let l = rectifier_loss();
        let (p, q, _) = RECTIFIER_CHECK;
        let loss = rectifier_losses(&ac, &l, grid_current(&ac, p, q));
        assert!((loss - 12_500.0).abs() / 12_500.0 < 0.15, "{loss}");
    }

    #[test]
    fn buck_fit_points_close() {
        let ac = ac_with_dc_dc();
        let rl = rectifier_loss();
        let bl = buck_loss();
        let st = StackParams::reference();
        let buck = BuckParams::default();
        for (p, eta) in BUCK_FIT {
            let i = current_for_power(&st, eta * p).unwrap();
            let total = rectifier_losses(&ac, &rl, grid_current(&ac, p, 0.0)) + buck_losses(&buck, &bl, i);
            assert!((total - p * (1.0 - eta)).abs() < 1e-6 * p);
        }
        assert!(bl.p_fixed > 0.0 && bl.k_cond > 0.0);
    }
}
