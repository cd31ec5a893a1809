//! Amplitude-invariant Park transform.
//!
//! `x_d + j x_q = (2/3) (x_a + a x_b + a^2 x_c) e^{-j theta}`, so a balanced set
//! `A cos(theta + phi)` maps to `(A cos phi, A sin phi)` and the q axis leads d.

use std::f64::consts::FRAC_PI_3;
use std::ops::{Add, Mul, Sub};

use serde::{Deserialize, Serialize};

const TWO_PI_3: f64 = 2.0 * FRAC_PI_3;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Dq {
    pub d: f64,
    pub q: f64,
}

impl Dq {
    pub const ZERO: Dq = Dq { d: 0.0, q: 0.0 };

    pub fn new(d: f64, q: f64) -> Self {
        Dq { d, q }
    }

    pub fn magnitude(self) -> f64 {
        self.d.hypot(self.q)
    }

    /// Multiply by `e^{j angle}`.
    pub fn rotate(self, angle: f64) -> Self {
        let (s, c) = angle.sin_cos();
        Dq { d: self.d * c - self.q * s, q: self.d * s + self.q * c }
    }

    pub fn is_finite(self) -> bool {
        self.d.is_finite() && self.q.is_finite()
    }
}

impl Add for Dq {
    type Output = Dq;
    fn add(self, o: Dq) -> Dq {
        Dq { d: self.d + o.d, q: self.q + o.q }
    }
}

impl Sub for Dq {
    type Output = Dq;
    fn sub(self, o: Dq) -> Dq {
        Dq { d: self.d - o.d, q: self.q - o.q }
    }
}

impl Mul<f64> for Dq {
    type Output = Dq;
    fn mul(self, k: f64) -> Dq {
        Dq { d: self.d * k, q: self.q * k }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Abc {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl Abc {
    pub fn new(a: f64, b: f64, c: f64) -> Self {
        Abc { a, b, c }
    }

    /// Balanced set `amplitude * cos(angle - k 2pi/3)`.
    pub fn balanced(amplitude: f64, angle: f64) -> Self {
        Abc {
            a: amplitude * angle.cos(),
            b: amplitude * (angle - TWO_PI_3).cos(),
            c: amplitude * (angle + TWO_PI_3).cos(),
        }
    }
}

pub fn abc_to_dq(theta: f64, x: Abc) -> Dq {
    let (sa, ca) = theta.sin_cos();
    let (sb, cb) = (theta - TWO_PI_3).sin_cos();
    let (sc, cc) = (theta + TWO_PI_3).sin_cos();
    Dq {
        d: (2.0 / 3.0) * (x.a * ca + x.b * cb + x.c * cc),
        q: -(2.0 / 3.0) * (x.a * sa + x.b * sb + x.c * sc),
    }
}

pub fn dq_to_abc(theta: f64, x: Dq) -> Abc {
    let (sa, ca) = theta.sin_cos();
    let (sb, cb) = (theta - TWO_PI_3).sin_cos();
    let (sc, cc) = (theta + TWO_PI_3).sin_cos();
    Abc {
        a: x.d * ca - x.q * sa,
        b: x.d * cb - x.q * sb,
        c: x.d * cc - x.q * sc,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_2;

    #[test]
    fn aligned_set_is_pure_d() {
        let theta = 0.7;
        let v = abc_to_dq(theta, Abc::balanced(100.0, theta));
        assert!((v.d - 100.0).abs() < 1e-12);
        assert!(v.q.abs() < 1e-12);
    }

    #[test]
    fn quarter_period_shift() {
        // frame advanced by pi/2 ahead of the signal: (A, 0) -> (0, -A)
        let phi = 0.3;
        let v = abc_to_dq(phi + FRAC_PI_2, Abc::balanced(2.0, phi));
        assert!(v.d.abs() < 1e-12);
        assert!((v.q + 2.0).abs() < 1e-12);
    }

    #[test]
    fn rotation_composes_with_frame_change() {
        let x = Abc::balanced(3.0, 1.1);
        let a = abc_to_dq(0.4, x);
        let b = abc_to_dq(0.9, x);
        let r = a.rotate(-0.5);
        assert!((r.d - b.d).abs() < 1e-12 && (r.q - b.q).abs() < 1e-12);
    }
}
