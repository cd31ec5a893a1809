//! Electrical model of the PEM electrolyzer stack.
//!
//! A cell group is a reversible EMF in series with the membrane resistance
//! and an activation branch (`r1 || c1`). A stack is `n_series` groups per
//! module and `n_parallel` modules. The steady-state model collapses to
//! `v = v_rev + r_total * i`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric;

/// Fitted parameters of the reference cell group.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CellGroupParams {
    /// Reversible EMF of the group, V.
    pub v_int: f64,
    /// Membrane resistance, ohm.
    pub r_int: f64,
    /// Activation-loss resistance, ohm.
    pub r1: f64,
    /// Double-layer capacitance, F.
    pub c1: f64,
    /// Upper end of the current range the fit is valid for, A.
    pub i_max: f64,
}

impl CellGroupParams {
    /// The three-cell reference group (0-50 A).
    pub const REFERENCE: CellGroupParams = CellGroupParams {
        v_int: 4.38,
        r_int: 0.088,
        r1: 0.035,
        c1: 37.26,
        i_max: 50.0,
    };

    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("v_int", self.v_int),
            ("r_int", self.r_int),
            ("r1", self.r1),
            ("c1", self.c1),
            ("i_max", self.i_max),
        ];
        for (name, v) in fields {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::config(format!("cell.{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }

    /// Activation branch time constant `r1 * c1`, s.
    pub fn tau(&self) -> f64 {
        self.r1 * self.c1
    }
}

impl Default for CellGroupParams {
    fn default() -> Self {
        Self::REFERENCE
    }
}

/// Stack-level electrical parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StackParams {
    /// Reversible EMF, V.
    pub v_rev: f64,
    /// Total series resistance of the static model, ohm.
    pub r_total: f64,
    /// Activation branch resistance of the dynamic model, ohm.
    pub r1_s: f64,
    /// Activation branch capacitance of the dynamic model, F.
    pub c1_s: f64,
    pub i_rated: f64,
    pub p_rated: f64,
}

impl StackParams {
    /// The 3500 A stack: 70 modules of 35 groups, with the published
    /// 145.5 V / 0.02 ohm steady-state values.
    pub fn reference() -> Self {
        let cell = CellGroupParams::REFERENCE;
        scale_stack(&cell, 3, 35, 70)
            .and_then(|s| s.with_overrides(Some(145.5), Some(0.02)))
            .expect("reference stack parameters are valid")
    }

    /// Replace the EMF and/or the total resistance. The activation branch is
    /// rescaled with the resistance so that `r1_s / r_total` and
    /// `r1_s * c1_s` are both preserved.
    pub fn with_overrides(mut self, v_rev: Option<f64>, r_total: Option<f64>) -> Result<Self> {
        if let Some(v) = v_rev {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::config(format!("v_rev override must be positive, got {v}")));
            }
            self.v_rev = v;
        }
        if let Some(r) = r_total {
            if !(r.is_finite() && r > 0.0) {
                return Err(Error::config(format!("r_total override must be positive, got {r}")));
            }
            let k = r / self.r_total;
            self.r_total = r;
            self.r1_s *= k;
            self.c1_s /= k;
        }
        self.p_rated = self.v_rev * self.i_rated + self.r_total * self.i_rated * self.i_rated;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("v_rev", self.v_rev),
            ("r_total", self.r_total),
            ("r1_s", self.r1_s),
            ("c1_s", self.c1_s),
            ("i_rated", self.i_rated),
            ("p_rated", self.p_rated),
        ];
        for (name, v) in fields {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::config(format!("stack.{name} must be positive, got {v}")));
            }
        }
        if self.r1_s >= self.r_total {
            return Err(Error::config("stack activation resistance must be below r_total"));
        }
        Ok(())
    }

    /// Membrane (ohmic) part of the series resistance in the dynamic model.
    pub fn r_membrane(&self) -> f64 {
        self.r_total - self.r1_s
    }

    pub fn tau(&self) -> f64 {
        self.r1_s * self.c1_s
    }

    /// Terminal current for a given terminal voltage and activation voltage.
    pub(crate) fn terminal_current(&self, v_terminal: f64, v_c1: f64, dynamic: bool) -> f64 {
        let (v_drop, r) = if dynamic {
            (v_terminal - self.v_rev - v_c1, self.r_membrane())
        } else {
            (v_terminal - self.v_rev, self.r_total)
        };
        (v_drop / r).max(0.0)
    }
}

impl Default for StackParams {
    fn default() -> Self {
        Self::reference()
    }
}

/// State of the dynamic model.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct StackState {
    /// Activation branch capacitor voltage, V.
    pub v_c1: f64,
    /// Terminal current, A. Never negative.
    pub i_dc: f64,
}

impl StackState {
    /// Steady state of the dynamic model at a given terminal current.
    pub fn steady(p: &StackParams, i_dc: f64) -> Self {
        let i = i_dc.max(0.0);
        StackState { v_c1: p.r1_s * i, i_dc: i }
    }
}

/// Series/parallel scaling of a cell group into a stack.
///
/// Per-cell values are the group values divided by `cells_per_group`. EMF
/// scales with `n_series`; resistances with `n_series / n_parallel`;
/// capacitance with the inverse, so the branch time constant is unchanged.
pub fn scale_stack(
    cell: &CellGroupParams,
    cells_per_group: u32,
    n_series: u32,
    n_parallel: u32,
) -> Result<StackParams> {
    cell.validate()?;
    if cells_per_group == 0 || n_series == 0 || n_parallel == 0 {
        return Err(Error::config(format!(
            "stack counts must be at least 1 (cells_per_group={cells_per_group}, \
             n_series={n_series}, n_parallel={n_parallel})"
        )));
    }
    let cpg = f64::from(cells_per_group);
    let ratio = f64::from(n_series) / f64::from(n_parallel);
    let v_rev = f64::from(n_series) * cell.v_int / cpg;
    let r_total = ratio * (cell.r_int + cell.r1) / cpg;
    let i_rated = f64::from(n_parallel) * cell.i_max;
    Ok(StackParams {
        v_rev,
        r_total,
        r1_s: ratio * cell.r1 / cpg,
        c1_s: cell.c1 * cpg / ratio,
        i_rated,
        p_rated: (v_rev + r_total * i_rated) * i_rated,
    })
}

/// Steady-state terminal voltage at a given current.
pub fn static_voltage(p: &StackParams, i_dc: f64) -> Result<f64> {
    if !(i_dc.is_finite() && i_dc >= 0.0) {
        return Err(Error::domain(format!("stack current must be >= 0, got {i_dc}")));
    }
    Ok(p.v_rev + p.r_total * i_dc)
}

/// Current at which the steady-state stack absorbs `p_dc`.
///
/// Nonnegative root of `r i^2 + v_rev i - p = 0`, written in the
/// cancellation-free form `2p / (v_rev + sqrt(v_rev^2 + 4 r p))`.
pub fn current_for_power(p: &StackParams, p_dc: f64) -> Result<f64> {
    if !(p_dc.is_finite() && p_dc >= 0.0) {
        return Err(Error::domain(format!("stack power must be >= 0, got {p_dc}")));
    }
    let disc = p.v_rev * p.v_rev + 4.0 * p.r_total * p_dc;
    Ok(2.0 * p_dc / (p.v_rev + disc.sqrt()))
}

/// Advance the dynamic (RC) stack model one step under a fixed terminal voltage.
pub fn dynamic_step(p: &StackParams, s: &StackState, v_terminal: f64, dt: f64) -> Result<StackState> {
    if !(dt.is_finite() && dt > 0.0) {
        return Err(Error::domain(format!("dt must be positive, got {dt}")));
    }
    if !(v_terminal.is_finite() && v_terminal >= 0.0) {
        return Err(Error::domain(format!("terminal voltage must be >= 0, got {v_terminal}")));
    }
    let x0 = [s.v_c1];
    let xm = numeric::midpoint_solve(&x0, dt, |x, f| {
        let i = p.terminal_current(v_terminal, x[0], true);
        f[0] = (i - x[0] / p.r1_s) / p.c1_s;
    })
    .map_err(|_| Error::Divergence { channel: "stack.v_c1".into(), time: f64::NAN })?;
    let v_c1 = numeric::end_state(&x0, &xm)[0];
    if !v_c1.is_finite() {
        return Err(Error::Divergence { channel: "stack.v_c1".into(), time: f64::NAN });
    }
    Ok(StackState { v_c1, i_dc: p.terminal_current(v_terminal, v_c1, true) })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_scaling() {
        let cell = CellGroupParams::REFERENCE;
        let s = scale_stack(&cell, 1, 1, 1).unwrap();
        assert_eq!(s.v_rev, cell.v_int);
        assert_eq!(s.r_total, cell.r_int + cell.r1);
        assert_eq!(s.r1_s, cell.r1);
        assert_eq!(s.c1_s, cell.c1);
    }

    #[test]
    fn naive_resistance_of_reference_layout() {
        let s = scale_stack(&CellGroupParams::REFERENCE, 3, 35, 70).unwrap();
        let oracle = (0.123 / 3.0) * 35.0 / 70.0;
        assert!((s.r_total - oracle).abs() < 1e-15);
        assert!((s.r_total - 0.0205).abs() < 1e-12);
        // naive EMF stays far below the published 145.5 V
        assert!((s.v_rev - 35.0 * 4.38 / 3.0).abs() < 1e-12);
        assert_eq!(s.i_rated, 3500.0);
    }

    #[test]
    fn zero_counts_rejected() {
        let cell = CellGroupParams::REFERENCE;
        assert!(matches!(scale_stack(&cell, 0, 35, 70), Err(Error::Config(_))));
        assert!(matches!(scale_stack(&cell, 3, 0, 70), Err(Error::Config(_))));
        assert!(matches!(scale_stack(&cell, 3, 35, 0), Err(Error::Config(_))));
    }

    #[test]
    fn reference_stack_values() {
        let s = StackParams::reference();
        assert_eq!(s.v_rev, 145.5);
        assert_eq!(s.r_total, 0.02);
        // branch split and time constant survive the override
        assert!((s.r1_s / s.r_total - 0.035 / 0.123).abs() < 1e-12);
        assert!((s.tau() - 0.035 * 37.26).abs() < 1e-12);
        assert!((CellGroupParams::REFERENCE.tau() - 1.3041).abs() < 1e-12);
    }

    #[test]
    fn static_voltage_examples() {
        let s = StackParams::reference();
        assert_eq!(static_voltage(&s, 0.0).unwrap(), 145.5);
        assert!((static_voltage(&s, 3500.0).unwrap() - 215.5).abs() < 1e-12);
        assert!((static_voltage(&s, 1000.0).unwrap() - 165.5).abs() < 1e-12);
        assert!(matches!(static_voltage(&s, -1.0), Err(Error::Domain(_))));
    }

    #[test]
    fn current_for_power_examples() {
        let s = StackParams::reference();
        assert_eq!(current_for_power(&s, 0.0).unwrap(), 0.0);
        // textbook quadratic formula as the oracle
        let oracle = |p: f64| (-145.5 + (145.5f64.powi(2) + 4.0 * 0.02 * p).sqrt()) / (2.0 * 0.02);
        let i1 = current_for_power(&s, 194_756.0).unwrap();
        assert!((i1 - oracle(194_756.0)).abs() < 1e-9);
        assert!((i1 - 1155.0).abs() < 1.0);
        // within 0.1 % of the simulated 1155.96 A
        assert!((i1 - 1155.96).abs() / 1155.96 < 1e-3);
        let i2 = current_for_power(&s, 487_500.0).unwrap();
        assert!((i2 - oracle(487_500.0)).abs() < 1e-9);
        assert!((i2 - 2494.9).abs() < 0.5);
        // the reported 2501.54 A times 194.88 V is 487.5 kW, but does not lie
        // on v_rev + r i; the exact root sits 0.27 % below it
        assert!((i2 - 2501.54).abs() / 2501.54 < 3e-3);
        assert!(current_for_power(&s, -1.0).is_err());
    }

    #[test]
    fn dynamic_quiescent_at_emf() {
        let s = StackParams::reference();
        let mut st = StackState::default();
        for _ in 0..1000 {
            st = dynamic_step(&s, &st, s.v_rev, 1e-3).unwrap();
        }
        assert_eq!(st.i_dc, 0.0);
        assert_eq!(st.v_c1, 0.0);
    }

    #[test]
    fn dynamic_step_response_matches_analytic() {
        // terminal voltage step from v_rev to 168.48 V; with the terminal
        // voltage held, v_c1 obeys a first-order ODE with gain r1/r_total and
        // time constant c1 * (r_m || r1)
        let p = StackParams::reference();
        let vt = 168.48;
        let dv = vt - p.v_rev;
        let r_m = p.r_membrane();
        let tau_net = p.c1_s * (r_m * p.r1_s) / (r_m + p.r1_s);
        let v_inf = dv * p.r1_s / p.r_total;
        let dt = 1e-3;
        let mut st = StackState::default();
        let mut t = 0.0;
        let mut worst: f64 = 0.0;
        for _ in 0..30_000 {
            st = dynamic_step(&p, &st, vt, dt).unwrap();
            t += dt;
            let v_exact = v_inf * (1.0 - (-t / tau_net).exp());
            worst = worst.max((st.v_c1 - v_exact).abs() / v_inf);
        }
        assert!(worst < 1e-5, "worst relative deviation {worst}");
        let i_final = dv / p.r_total;
        assert!((i_final - 1149.0).abs() < 1e-9);
        assert!((st.i_dc - i_final).abs() / i_final < 1e-9);
    }

    #[test]
    fn dynamic_rejects_bad_inputs() {
        let p = StackParams::reference();
        let st = StackState::default();
        assert!(dynamic_step(&p, &st, 150.0, 0.0).is_err());
        assert!(dynamic_step(&p, &st, -1.0, 1e-3).is_err());
        assert!(dynamic_step(&p, &st, f64::NAN, 1e-3).is_err());
    }
}
