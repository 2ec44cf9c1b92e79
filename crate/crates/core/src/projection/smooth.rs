use alloc::vec::Vec;

use super::knn::Knn;

/// Target tolerance of the sigma bisection.
pub const SMOOTH_TOLERANCE: f64 = 1e-5;
/// Sigma never drops below this fraction of the mean neighbor distance.
pub const MIN_SIGMA_SCALE: f64 = 1e-3;
const MAX_ITERATIONS: usize = 128;

#[derive(Debug, Clone, PartialEq)]
pub struct Smoothing {
    pub rho: Vec<f64>,
    pub sigma: Vec<f64>,
}

fn membership_sum(distances: &[f64], rho: f64, sigma: f64) -> f64 {
    distances
        .iter()
        .map(|&d| libm::exp(-(d - rho).max(0.0) / sigma))
        .sum()
}

/// `(rho, sigma)` for one point's ascending neighbor distances.
///
/// `rho` is the first positive distance (0 if all are zero). `sigma` solves
/// `Σ exp(−max(0, d − rho)/sigma) = log2(k)` by bisection and is clamped to
/// at least `1e-3 ×` the mean distance; `fallback_mean` stands in for the
/// mean when all distances are zero.
pub fn smooth_knn_row(distances: &[f64], fallback_mean: f64) -> (f64, f64) {
    let k = distances.len();
    let rho = distances.iter().copied().find(|d| *d > 0.0).unwrap_or(0.0);
    let mean = if k == 0 {
        0.0
    } else {
        distances.iter().sum::<f64>() / k as f64
    };
    let scale = if mean > 0.0 {
        mean
    } else if fallback_mean > 0.0 {
        fallback_mean
    } else {
        1.0
    };
    let floor = MIN_SIGMA_SCALE * scale;
    let target = libm::log2(k.max(1) as f64);

    let (mut lo, mut hi) = (0.0, f64::INFINITY);
    let mut mid = scale;
    for _ in 0..MAX_ITERATIONS {
        let sum = membership_sum(distances, rho, mid);
        if (sum - target).abs() < SMOOTH_TOLERANCE {
            break;
        }
        if sum > target {
            hi = mid;
            mid = (lo + hi) / 2.0;
        } else {
            lo = mid;
            mid = if hi.is_finite() {
                (lo + hi) / 2.0
            } else {
                mid * 2.0
            };
        }
    }
    (rho, mid.max(floor))
}

pub fn smooth_knn(knn: &Knn) -> Smoothing {
    let n = knn.rows();
    let all_mean = if knn.distances.is_empty() {
        0.0
    } else {
        knn.distances.iter().sum::<f64>() / knn.distances.len() as f64
    };
    let (rho, sigma) = (0..n)
        .map(|i| smooth_knn_row(knn.distances(i), all_mean))
        .unzip();
    Smoothing { rho, sigma }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_equal_distances_hit_the_clamp() {
        let (rho, sigma) = smooth_knn_row(&[2.0; 5], 1.0);
        assert_eq!(rho, 2.0);
        assert_eq!(sigma, MIN_SIGMA_SCALE * 2.0);
    }

    #[test]
    fn four_neighbors_match_root_finder() {
        // independent Brent root of Σ exp(−(d−1)/σ) = 2 for d = 1..4
        let oracle = 1.641_017_929_928_488_2;
        let (rho, sigma) = smooth_knn_row(&[1.0, 2.0, 3.0, 4.0], 1.0);
        assert_eq!(rho, 1.0);
        assert!((sigma - oracle).abs() / oracle < 1e-4, "{sigma}");
        let sum = membership_sum(&[1.0, 2.0, 3.0, 4.0], rho, sigma);
        assert!((sum - 2.0).abs() < SMOOTH_TOLERANCE);
    }

    #[test]
    fn scale_equivariance() {
        let d = [0.3, 0.7, 0.8, 1.9, 2.5, 2.6];
        let (rho, sigma) = smooth_knn_row(&d, 1.0);
        for c in [0.5, 3.0, 17.25] {
            let scaled: Vec<f64> = d.iter().map(|x| x * c).collect();
            let (r, s) = smooth_knn_row(&scaled, 1.0);
            assert!((r - rho * c).abs() < 1e-12 * c);
            assert!(
                (s - sigma * c).abs() / (sigma * c) < 1e-4,
                "c={c}: {s} vs {}",
                sigma * c
            );
        }
    }

    #[test]
    fn zero_distances_use_fallback() {
        let (rho, sigma) = smooth_knn_row(&[0.0, 0.0, 0.0], 0.5);
        assert_eq!(rho, 0.0);
        assert!(sigma > 0.0);
    }
}
