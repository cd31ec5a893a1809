use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PiGains {
    pub kp: f64,
    pub ki: f64,
}

impl PiGains {
    pub fn new(kp: f64, ki: f64) -> Self {
        PiGains { kp, ki }
    }
}

/// Integrator of a PI loop. While `saturated` is set the integrator is frozen.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PiState {
    pub integrator: f64,
    pub saturated: bool,
}

impl PiState {
    pub fn with_integrator(integrator: f64) -> Self {
        PiState { integrator, saturated: false }
    }

    /// Unclamped output for `error` and the integrator value it would move to.
    pub fn candidate(&self, gains: &PiGains, error: f64, dt: f64) -> (f64, f64) {
        let next = self.integrator + gains.ki * error * dt;
        (gains.kp * error + next, next)
    }

    /// Scalar PI with output clamp `[lo, hi]` and conditional integration.
    pub fn step(&self, gains: &PiGains, error: f64, dt: f64, lo: f64, hi: f64) -> (f64, PiState) {
        let (raw, next) = self.candidate(gains, error, dt);
        if raw > hi || raw < lo {
            let frozen = gains.kp * error + self.integrator;
            (frozen.clamp(lo, hi), PiState { integrator: self.integrator, saturated: true })
        } else {
            (raw, PiState { integrator: next, saturated: false })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_error_holds() {
        let g = PiGains::new(2.0, 5.0);
        let s = PiState::with_integrator(0.3);
        let (u, s2) = s.step(&g, 0.0, 1e-3, -1.0, 1.0);
        assert_eq!(u, 0.3);
        assert_eq!(s2.integrator, 0.3);
    }

    #[test]
    fn saturation_freezes_integrator() {
        let g = PiGains::new(1.0, 100.0);
        let mut s = PiState::with_integrator(0.9);
        for _ in 0..10 {
            let (u, next) = s.step(&g, 5.0, 1e-3, -1.0, 1.0);
            assert_eq!(u, 1.0);
            assert!(next.saturated);
            assert!(next.integrator.abs() <= s.integrator.abs());
            s = next;
        }
    }
}
