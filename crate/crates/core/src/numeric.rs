//! Fixed-step implicit midpoint integration.
//!
//! Every energy-storing element in the power train has a quadratic energy
//! function, so evaluating all power flows at the midpoint state makes the
//! discrete energy balance hold to solver tolerance on every step.

/// Newton solve of `xm = x0 + dt/2 * f(xm)`. Returns the midpoint state, or
/// `None` if the iteration did not converge or produced non-finite values.
pub(crate) fn midpoint_solve<F>(x0: &[f64], dt: f64, mut rates: F) -> Result<Vec<f64>, usize>
where
    F: FnMut(&[f64], &mut [f64]),
{
    let n = x0.len();
    let half = 0.5 * dt;
    let mut xm = x0.to_vec();
    let mut f = vec![0.0; n];
    let mut fp = vec![0.0; n];
    let mut jac = vec![0.0; n * n];
    let mut g = vec![0.0; n];
    // index of the state with the largest residual, reported on failure
    let worst = |g: &[f64]| {
        (0..g.len()).max_by(|&a, &b| g[a].abs().total_cmp(&g[b].abs()).then(b.cmp(&a))).unwrap_or(0)
    };
    let non_finite = |x: &[f64], g: &[f64]| x.iter().position(|v| !v.is_finite()).unwrap_or_else(|| worst(g));

    // warm start with an explicit half step
    rates(&xm, &mut f);
    for k in 0..n {
        xm[k] = x0[k] + half * f[k];
    }

    for _ in 0..40 {
        rates(&xm, &mut f);
        for k in 0..n {
            g[k] = xm[k] - x0[k] - half * f[k];
        }
        let scale = xm.iter().fold(1.0_f64, |a, v| a.max(v.abs()));
        let gnorm = g.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
        if !gnorm.is_finite() {
            return Err(non_finite(&xm, &g));
        }
        if gnorm <= 1e-14 * scale {
            return Ok(xm);
        }
        for j in 0..n {
            let h = 1e-7 * xm[j].abs().max(1.0);
            let saved = xm[j];
            xm[j] = saved + h;
            rates(&xm, &mut fp);
            xm[j] = saved;
            for i in 0..n {
                let djf = (fp[i] - f[i]) / h;
                jac[i * n + j] = if i == j { 1.0 } else { 0.0 } - half * djf;
            }
        }
        let mut delta = g.clone();
        if !solve_dense(&mut jac, &mut delta, n) {
            return Err(worst(&g));
        }
        let dnorm = delta.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
        for k in 0..n {
            xm[k] -= delta[k];
        }
        if dnorm <= 1e-15 * scale {
            return match xm.iter().position(|v| !v.is_finite()) {
                None => Ok(xm),
                Some(k) => Err(k),
            };
        }
    }
    Err(worst(&g))
}

/// Gaussian elimination with partial pivoting; solves `a * x = b` in place.
pub(crate) fn solve_dense(a: &mut [f64], b: &mut [f64], n: usize) -> bool {
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&r1, &r2| a[r1 * n + col].abs().total_cmp(&a[r2 * n + col].abs()))
            .unwrap_or(col);
        if a[pivot * n + col].abs() < 1e-300 {
            return false;
        }
        if pivot != col {
            for k in 0..n {
                a.swap(col * n + k, pivot * n + k);
            }
            b.swap(col, pivot);
        }
        for row in col + 1..n {
            let factor = a[row * n + col] / a[col * n + col];
            if factor == 0.0 {
                continue;
            }
            for k in col..n {
                a[row * n + k] -= factor * a[col * n + k];
            }
            b[row] -= factor * b[col];
        }
    }
    for row in (0..n).rev() {
        let mut acc = b[row];
        for k in row + 1..n {
            acc -= a[row * n + k] * b[k];
        }
        b[row] = acc / a[row * n + row];
    }
    true
}

/// End-of-step state from a midpoint state.
pub(crate) fn end_state(x0: &[f64], xm: &[f64]) -> Vec<f64> {
    x0.iter().zip(xm).map(|(a, m)| 2.0 * m - a).collect()
}

/// Stored-energy change for `E = 1/2 * sum(w_k x_k^2)`, computed as
/// `sum(w_k * xm_k * (x1_k - x0_k))`, which is exact for quadratic forms.
pub(crate) fn energy_change(weights: &[f64], x0: &[f64], xm: &[f64], x1: &[f64]) -> f64 {
    weights
        .iter()
        .zip(x0.iter().zip(xm.iter().zip(x1)))
        .map(|(w, (a, (m, b)))| w * m * (b - a))
        .sum()
}

pub(crate) fn wrap_angle(theta: f64) -> f64 {
    let tau = std::f64::consts::TAU;
    let r = theta.rem_euclid(tau);
    if r >= tau {
        0.0
    } else {
        r
    }
}
