//! Bessel functions of the first kind, orders 0 and +-1.
//!
//! Power series below `SERIES_LIMIT`, Hankel asymptotic expansion above.
//! Absolute error stays below 1e-9 on [0, 50].

use std::f64::consts::PI;

use crate::error::{Error, Result};

const SERIES_LIMIT: f64 = 15.0;

fn series(n: u32, x: f64) -> f64 {
    let half = 0.5 * x;
    let q = half * half;
    let mut term = half.powi(n as i32) / (1..=n).map(f64::from).product::<f64>();
    let mut sum = term;
    for k in 1..200 {
        let k = k as f64;
        term *= -q / (k * (k + n as f64));
        sum += term;
        if term.abs() < 1e-17 * sum.abs().max(1e-300) && k > half {
            break;
        }
    }
    sum
}

fn asymptotic(n: u32, x: f64) -> f64 {
    let mu = 4.0 * (n * n) as f64;
    let mut p = 0.0;
    let mut q = 0.0;
    // a_k = prod_{i=1..k} (mu - (2i-1)^2) / (k! 8^k x^k), alternating in pairs.
    let mut term: f64 = 1.0;
    let mut prev = f64::INFINITY;
    for k in 0..60 {
        if term.abs() > prev {
            break;
        }
        prev = term.abs();
        match k % 4 {
            0 => p += term,
            1 => q += term,
            2 => p -= term,
            _ => q -= term,
        }
        let odd = (2 * k + 1) as f64;
        term *= (mu - odd * odd) / ((k + 1) as f64 * 8.0 * x);
        if term == 0.0 {
            break;
        }
    }
    let chi = x - (0.5 * n as f64 + 0.25) * PI;
    (2.0 / (PI * x)).sqrt() * (p * chi.cos() - q * chi.sin())
}

/// `J_n(x)` for `n` in {-1, 0, 1} and `x >= 0`.
pub fn bessel_j(n: i32, x: f64) -> Result<f64> {
    if !(x >= 0.0 && x.is_finite()) {
        return Err(Error::InvalidArgument(format!("bessel argument {x} must be >= 0")));
    }
    let order = match n {
        0 => 0,
        1 | -1 => 1,
        _ => {
            return Err(Error::InvalidArgument(format!(
                "bessel order {n} not supported (only -1, 0, 1)"
            )))
        }
    };
    let value = if x <= SERIES_LIMIT {
        series(order, x)
    } else {
        asymptotic(order, x)
    };
    Ok(if n == -1 { -value } else { value })
}

pub fn j0(x: f64) -> f64 {
    bessel_j(0, x).expect("valid argument")
}

pub fn j1(x: f64) -> f64 {
    bessel_j(1, x).expect("valid argument")
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Bessel's integral `J_n(x) = 1/(2 pi) * int_0^{2 pi} cos(n t - x sin t) dt`,
    /// evaluated with the trapezoid rule, which converges geometrically for
    /// this periodic integrand.
    fn quadrature(n: i32, x: f64) -> f64 {
        let steps = 2048;
        let h = 2.0 * PI / steps as f64;
        (0..steps)
            .map(|i| {
                let t = i as f64 * h;
                (n as f64 * t - x * t.sin()).cos()
            })
            .sum::<f64>()
            / steps as f64
    }

    #[test]
    fn values_at_origin() {
        assert_eq!(bessel_j(0, 0.0).unwrap(), 1.0);
        assert_eq!(bessel_j(1, 0.0).unwrap(), 0.0);
        assert_eq!(bessel_j(-1, 0.0).unwrap(), 0.0);
    }

    #[test]
    fn first_zero_of_j0() {
        assert!(j0(2.404826).abs() < 1e-6);
        // J_1 first zero.
        assert!(j1(3.831706).abs() < 1e-6);
    }

    #[test]
    fn matches_integral_representation_on_range() {
        let mut worst: f64 = 0.0;
        for i in 0..=5000 {
            let x = i as f64 * 0.01;
            for n in [-1, 0, 1] {
                let err = (bessel_j(n, x).unwrap() - quadrature(n, x)).abs();
                worst = worst.max(err);
            }
        }
        assert!(worst < 1e-9, "worst abs error {worst}");
    }

    #[test]
    fn continuous_across_method_switch() {
        let below = j0(SERIES_LIMIT - 1e-9);
        let above = j0(SERIES_LIMIT + 1e-9);
        assert!((below - above).abs() < 1e-9);
        let below = j1(SERIES_LIMIT - 1e-9);
        let above = j1(SERIES_LIMIT + 1e-9);
        assert!((below - above).abs() < 1e-9);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(bessel_j(2, 1.0).is_err());
        assert!(bessel_j(0, -1.0).is_err());
        assert!(bessel_j(0, f64::NAN).is_err());
    }
}
