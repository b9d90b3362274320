//! Real branches of the Lambert W function, the inverse of `w * exp(w)`.

use std::f64::consts::E;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Branch {
    /// `W_0`, defined on `[-1/e, ∞)` with values `≥ -1`.
    Principal,
    /// `W_{-1}`, defined on `[-1/e, 0)` with values `≤ -1`.
    MinusOne,
}

const MAX_ITER: usize = 64;

/// Evaluates `W_branch(x)` by Halley iteration.
pub fn lambert_w(branch: Branch, x: f64) -> Result<f64> {
    if !x.is_finite() {
        return Err(Error::Domain(format!("lambert_w of non-finite {x}")));
    }
    // distance from the branch point, scaled so that p = sqrt(2 t)
    let t = E.mul_add(x, 1.0);
    if t < -4.0 * f64::EPSILON {
        return Err(Error::Domain(format!("lambert_w argument {x} below -1/e")));
    }
    if t <= 4.0 * f64::EPSILON {
        return Ok(-1.0);
    }
    match branch {
        Branch::Principal => {
            if x == 0.0 {
                return Ok(0.0);
            }
            Ok(halley(x, principal_guess(x, t)))
        }
        Branch::MinusOne => {
            if x >= 0.0 {
                return Err(Error::Domain(format!(
                    "lambert_w minus-one branch needs x < 0, got {x}"
                )));
            }
            Ok(halley(x, minus_one_guess(x, t)))
        }
    }
}

fn principal_guess(x: f64, t: f64) -> f64 {
    if t < 0.3 {
        let p = (2.0 * t).sqrt();
        -1.0 + p * (1.0 + p * (-1.0 / 3.0 + p * 11.0 / 72.0))
    } else if x < 3.0 {
        // Winitzki's approximation, good to a few percent on this range
        let l = (1.0 + x).ln();
        l * (1.0 - (1.0 + l).ln() / (2.0 + l))
    } else {
        let l1 = x.ln();
        let l2 = l1.ln();
        l1 - l2 + l2 / l1
    }
}

fn minus_one_guess(x: f64, t: f64) -> f64 {
    if t < 0.3 {
        let p = (2.0 * t).sqrt();
        -1.0 - p * (1.0 + p * (1.0 / 3.0 + p * 11.0 / 72.0))
    } else {
        let l1 = (-x).ln();
        let l2 = (-l1).ln();
        l1 - l2 + l2 / l1
    }
}

fn halley(x: f64, mut w: f64) -> f64 {
    for _ in 0..MAX_ITER {
        let ew = w.exp();
        let f = w * ew - x;
        let wp1 = w + 1.0;
        if wp1 == 0.0 {
            break;
        }
        let denom = ew * wp1 - (w + 2.0) * f / (2.0 * wp1);
        if denom == 0.0 || !denom.is_finite() {
            break;
        }
        let next = w - f / denom;
        if !next.is_finite() {
            break;
        }
        let done = (next - w).abs() <= 4.0 * f64::EPSILON * next.abs().max(1.0);
        w = next;
        if done {
            break;
        }
    }
    w
}

#[cfg(test)]
mod tests {
    use super::*;

    fn residual(w: f64, x: f64) -> f64 {
        (w * w.exp() - x).abs()
    }

    #[test]
    fn known_values() {
        assert_eq!(lambert_w(Branch::Principal, 0.0).unwrap(), 0.0);
        assert!((lambert_w(Branch::Principal, E).unwrap() - 1.0).abs() < 1e-14);
        assert_eq!(lambert_w(Branch::MinusOne, -1.0 / E).unwrap(), -1.0);
        assert_eq!(lambert_w(Branch::Principal, -1.0 / E).unwrap(), -1.0);
        // W_{-1}(-2 e^{-2}) = -2 and W_0(-0.5 e^{-0.5}) = -0.5
        let x = -2.0 * (-2.0f64).exp();
        assert!((lambert_w(Branch::MinusOne, x).unwrap() + 2.0).abs() < 1e-12);
        let x = -0.5 * (-0.5f64).exp();
        assert!((lambert_w(Branch::Principal, x).unwrap() + 0.5).abs() < 1e-12);
    }

    #[test]
    fn domain_errors() {
        assert!(lambert_w(Branch::Principal, -0.5).is_err());
        assert!(lambert_w(Branch::MinusOne, 0.1).is_err());
        assert!(lambert_w(Branch::MinusOne, 0.0).is_err());
        assert!(lambert_w(Branch::Principal, f64::NAN).is_err());
    }

    #[test]
    fn residuals_across_ranges() {
        for &x in &[-0.367879, -0.3, -0.1, -1e-5, 1e-8, 0.5, 2.0, 10.0, 100.0] {
            let w = lambert_w(Branch::Principal, x).unwrap();
            assert!(residual(w, x) <= 1e-12 * x.abs().max(1.0), "x={x} w={w}");
            assert!(w >= -1.0);
        }
        for &x in &[-0.367879, -0.3, -0.1, -1e-5, -1e-100, -1e-300] {
            let w = lambert_w(Branch::MinusOne, x).unwrap();
            assert!(residual(w, x) <= 1e-12, "x={x} w={w}");
            assert!(w <= -1.0);
        }
    }
}
