use alloc::vec::Vec;

use crate::error::{Error, Result};

const SAMPLES: usize = 300;
const MAX_ITERATIONS: usize = 1000;

fn target(x: f64, min_dist: f64, spread: f64) -> f64 {
    if x < min_dist {
        1.0
    } else {
        libm::exp(-(x - min_dist) / spread)
    }
}

fn residuals(xs: &[f64], ys: &[f64], a: f64, b: f64) -> f64 {
    xs.iter()
        .zip(ys)
        .map(|(&x, &y)| {
            let r = 1.0 / (1.0 + a * libm::pow(x, 2.0 * b)) - y;
            r * r
        })
        .sum()
}

/// Fits the low-dimensional kernel `1 / (1 + a·d^(2b))` to the offset
/// exponential `1` for `d < min_dist`, `exp(−(d − min_dist)/spread)`
/// otherwise, sampled at 300 points on `[0, 3·spread]`. Least squares by
/// Levenberg–Marquardt from `(1, 1)`.
pub fn fit_curve_params(min_dist: f64, spread: f64) -> Result<(f64, f64)> {
    if !(spread > 0.0) || !(min_dist >= 0.0) || !(min_dist < spread) {
        return Err(Error::InvalidConfig {
            field: "min_dist",
            message: "need 0 <= min_dist < spread".into(),
        });
    }
    let xs: Vec<f64> = (0..SAMPLES)
        .map(|i| 3.0 * spread * i as f64 / (SAMPLES - 1) as f64)
        .collect();
    let ys: Vec<f64> = xs.iter().map(|&x| target(x, min_dist, spread)).collect();

    let (mut a, mut b) = (1.0f64, 1.0f64);
    let mut lambda = 1e-3;
    let mut sse = residuals(&xs, &ys, a, b);
    for _ in 0..MAX_ITERATIONS {
        // normal equations of the 2-parameter problem
        let (mut jaa, mut jab, mut jbb, mut ga, mut gb) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for (&x, &y) in xs.iter().zip(&ys) {
            if x == 0.0 {
                // f(0) = 1 regardless of (a, b); zero Jacobian row
                continue;
            }
            let p = libm::pow(x, 2.0 * b);
            let denom = 1.0 + a * p;
            let f = 1.0 / denom;
            let r = f - y;
            let da = -p / (denom * denom);
            let db = -a * p * 2.0 * libm::log(x) / (denom * denom);
            jaa += da * da;
            jab += da * db;
            jbb += db * db;
            ga += da * r;
            gb += db * r;
        }
        let mut improved = false;
        while lambda < 1e16 {
            let (m00, m11) = (jaa * (1.0 + lambda), jbb * (1.0 + lambda));
            let det = m00 * m11 - jab * jab;
            if det == 0.0 || !det.is_finite() {
                lambda *= 10.0;
                continue;
            }
            let step_a = -(m11 * ga - jab * gb) / det;
            let step_b = -(m00 * gb - jab * ga) / det;
            let (na, nb) = (a + step_a, b + step_b);
            let next = residuals(&xs, &ys, na, nb);
            if next.is_finite() && next <= sse {
                let converged = (step_a.abs() <= 1e-15 * (1.0 + a.abs())
                    && step_b.abs() <= 1e-15 * (1.0 + b.abs()))
                    || sse - next <= 1e-30;
                a = na;
                b = nb;
                sse = next;
                lambda = (lambda / 10.0).max(1e-12);
                improved = !converged;
                break;
            }
            lambda *= 10.0;
        }
        if !improved {
            break;
        }
    }
    Ok((a, b))
}

#[cfg(test)]
mod tests {
    use super::*;

    // scipy.optimize.curve_fit with ftol = xtol = gtol = 1e-15
    const GOLDEN: [(f64, f64, f64, f64); 4] = [
        (0.1, 1.0, 1.576_943_613_446, 0.895_060_719_437),
        (0.5, 1.0, 0.583_029_805_531, 1.334_167_383_002),
        (0.0, 1.0, 1.932_809_088_086, 0.790_494_661_125),
        (0.3, 2.0, 0.379_494_676_871, 0.948_815_253_331),
    ];

    #[test]
    fn matches_least_squares_oracle() {
        for (md, sp, a0, b0) in GOLDEN {
            let (a, b) = fit_curve_params(md, sp).unwrap();
            assert!(
                (a - a0).abs() / a0 < 1e-6,
                "min_dist {md}: a = {a}, oracle {a0}"
            );
            assert!(
                (b - b0).abs() / b0 < 1e-6,
                "min_dist {md}: b = {b}, oracle {b0}"
            );
        }
    }

    #[test]
    fn larger_min_dist_gives_steeper_shoulder() {
        let (a1, b1) = fit_curve_params(0.1, 1.0).unwrap();
        let (a5, b5) = fit_curve_params(0.5, 1.0).unwrap();
        assert!(b5 > b1);
        assert!(a5 < a1);
    }

    #[test]
    fn kernel_is_one_at_zero() {
        let (a, b) = fit_curve_params(0.1, 1.0).unwrap();
        assert_eq!(1.0 / (1.0 + a * libm::pow(0.0, 2.0 * b)), 1.0);
    }

    #[test]
    fn deterministic_and_validated() {
        assert_eq!(
            fit_curve_params(0.25, 1.0).unwrap(),
            fit_curve_params(0.25, 1.0).unwrap()
        );
        assert!(fit_curve_params(1.0, 1.0).is_err());
        assert!(fit_curve_params(-0.1, 1.0).is_err());
    }
}
