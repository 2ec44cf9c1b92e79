use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

use super::curve::fit_curve_params;
use super::fuzzy::FuzzyGraph;
use super::kernel::{attractive_gradient, clip, repulsive_gradient};
use super::ProjectionConfig;

const SPECTRAL_ITERATIONS: usize = 300;
const SPECTRAL_TOLERANCE: f64 = 1e-7;
const INIT_EXTENT: f64 = 10.0;

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn normalize(v: &mut [f64]) -> bool {
    let n = libm::sqrt(dot(v, v));
    if !(n > 0.0) || !n.is_finite() {
        return false;
    }
    v.iter_mut().for_each(|x| *x /= n);
    true
}

fn remove_component(v: &mut [f64], basis: &[f64]) {
    let c = dot(v, basis);
    v.iter_mut().zip(basis).for_each(|(x, b)| *x -= c * b);
}

/// Two leading non-trivial eigenvectors of the normalized adjacency
/// `D^-1/2 W D^-1/2`, by block power iteration on its shifted form
/// `(I + D^-1/2 W D^-1/2) / 2` with a final Rayleigh–Ritz rotation.
fn spectral_layout(graph: &FuzzyGraph, rng: &mut ChaCha8Rng) -> Option<Vec<[f64; 2]>> {
    let n = graph.nodes();
    let inv_sqrt: Vec<f64> = (0..n)
        .map(|i| {
            let d = graph.degree(i);
            if d > 0.0 {
                1.0 / libm::sqrt(d)
            } else {
                0.0
            }
        })
        .collect();
    if inv_sqrt.iter().any(|&s| s == 0.0) {
        return None;
    }
    let mut trivial: Vec<f64> = inv_sqrt.iter().map(|s| 1.0 / s).collect();
    normalize(&mut trivial);

    let apply = |x: &[f64], out: &mut [f64]| {
        for (i, o) in out.iter_mut().enumerate() {
            let s: f64 = graph.row(i).map(|(j, w)| w * inv_sqrt[j] * x[j]).sum();
            *o = 0.5 * (x[i] + inv_sqrt[i] * s);
        }
    };

    let mut block: Vec<Vec<f64>> = (0..2)
        .map(|_| (0..n).map(|_| rng.random::<f64>() - 0.5).collect())
        .collect();
    let mut next = vec![vec![0.0; n]; 2];
    for _ in 0..SPECTRAL_ITERATIONS {
        for c in 0..2 {
            apply(&block[c], &mut next[c]);
        }
        remove_component(&mut next[0], &trivial);
        if !normalize(&mut next[0]) {
            return None;
        }
        remove_component(&mut next[1], &trivial);
        let (first, second) = next.split_at_mut(1);
        remove_component(&mut second[0], &first[0]);
        if !normalize(&mut second[0]) {
            return None;
        }
        let change = (0..2)
            .map(|c| 1.0 - dot(&block[c], &next[c]).abs())
            .fold(0.0, f64::max);
        core::mem::swap(&mut block, &mut next);
        if change < SPECTRAL_TOLERANCE {
            break;
        }
    }

    // Rayleigh–Ritz on the 2-dimensional subspace
    let mut image = vec![vec![0.0; n]; 2];
    apply(&block[0], &mut image[0]);
    apply(&block[1], &mut image[1]);
    let (h00, h01, h11) = (
        dot(&block[0], &image[0]),
        dot(&block[0], &image[1]),
        dot(&block[1], &image[1]),
    );
    let theta = 0.5 * libm::atan2(2.0 * h01, h00 - h11);
    let (c, s) = (libm::cos(theta), libm::sin(theta));
    let coords: Vec<[f64; 2]> = (0..n)
        .map(|i| {
            [
                c * block[0][i] + s * block[1][i],
                -s * block[0][i] + c * block[1][i],
            ]
        })
        .collect();
    if coords
        .iter()
        .any(|p| !p[0].is_finite() || !p[1].is_finite())
    {
        return None;
    }
    Some(coords)
}

/// Rescales each axis to `[0, 10]`, the starting scale of the optimizer.
fn rescale(coords: &mut [[f64; 2]]) {
    for d in 0..2 {
        let min = coords.iter().map(|p| p[d]).fold(f64::INFINITY, f64::min);
        let max = coords
            .iter()
            .map(|p| p[d])
            .fold(f64::NEG_INFINITY, f64::max);
        let range = max - min;
        for p in coords.iter_mut() {
            p[d] = if range > 0.0 {
                INIT_EXTENT * (p[d] - min) / range
            } else {
                0.0
            };
        }
    }
}

/// Initial coordinates: spectral when the graph is connected, otherwise
/// seeded uniform in `[−10, 10]²`.
pub fn initialize(graph: &FuzzyGraph, rng: &mut ChaCha8Rng) -> Vec<[f64; 2]> {
    let n = graph.nodes();
    let spectral = if graph.is_connected() && graph.nnz() > 0 {
        spectral_layout(graph, rng)
    } else {
        None
    };
    let mut coords = match spectral {
        Some(mut c) => {
            let extent = c
                .iter()
                .flat_map(|p| [p[0].abs(), p[1].abs()])
                .fold(0.0, f64::max);
            let scale = if extent > 0.0 {
                INIT_EXTENT / extent
            } else {
                1.0
            };
            for p in &mut c {
                p[0] = p[0] * scale + (rng.random::<f64>() - 0.5) * 2e-4;
                p[1] = p[1] * scale + (rng.random::<f64>() - 0.5) * 2e-4;
            }
            c
        }
        None => (0..n)
            .map(|_| {
                [
                    rng.random_range(-INIT_EXTENT..INIT_EXTENT),
                    rng.random_range(-INIT_EXTENT..INIT_EXTENT),
                ]
            })
            .collect(),
    };
    rescale(&mut coords);
    coords
}

/// Stochastic gradient descent on the fuzzy cross-entropy between `graph`
/// and the 2D kernel.
///
/// Each directed entry is sampled once every `max_w / w` epochs and draws
/// `negative_sample_rate` uniformly random negatives per positive sample.
/// Gradient components are clipped to `[−4, 4]` and the learning rate decays
/// linearly to zero. `progress(epoch, n_epochs)` runs after every epoch;
/// returning `false` cancels.
pub fn optimize_embedding(
    graph: &FuzzyGraph,
    config: &ProjectionConfig,
    init: Option<&[[f64; 2]]>,
    progress: &mut dyn FnMut(usize, usize) -> bool,
) -> Result<Vec<[f64; 2]>> {
    let n = graph.nodes();
    if n == 0 {
        return Ok(Vec::new());
    }
    if n == 1 {
        return Ok(vec![[0.0, 0.0]]);
    }
    if config.n_epochs == 0 {
        return Err(Error::InvalidConfig {
            field: "n_epochs",
            message: "must be at least 1".into(),
        });
    }
    let (a, b) = fit_curve_params(config.min_dist, config.spread)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    let mut coords = match init {
        Some(c) if c.len() == n && c.iter().all(|p| p[0].is_finite() && p[1].is_finite()) => {
            c.to_vec()
        }
        Some(c) => {
            return Err(Error::LengthMismatch {
                expected: n,
                actual: c.len(),
            })
        }
        None => initialize(graph, &mut rng),
    };

    let epochs = config.n_epochs as f64;
    let max_w = graph.entries().map(|(_, _, w)| w).fold(0.0, f64::max);
    let edges: Vec<(usize, usize, f64)> = graph
        .entries()
        .filter(|(_, _, w)| *w >= max_w / epochs)
        .map(|(i, j, w)| (i, j, max_w / w))
        .collect();
    if edges.is_empty() {
        for epoch in 0..config.n_epochs {
            if !progress(epoch + 1, config.n_epochs) {
                return Err(Error::Cancelled);
            }
        }
        return Ok(coords);
    }
    let neg_rate = config.negative_sample_rate as f64;
    let mut next_sample: Vec<f64> = edges.iter().map(|e| e.2).collect();
    let per_negative: Vec<f64> = edges
        .iter()
        .map(|e| {
            if neg_rate > 0.0 {
                e.2 / neg_rate
            } else {
                f64::INFINITY
            }
        })
        .collect();
    let mut next_negative = per_negative.clone();

    for epoch in 0..config.n_epochs {
        let now = epoch as f64;
        let alpha = config.learning_rate * (1.0 - now / epochs);
        for (e, &(i, j, per_sample)) in edges.iter().enumerate() {
            if next_sample[e] > now {
                continue;
            }
            let diff = [coords[i][0] - coords[j][0], coords[i][1] - coords[j][1]];
            let g = attractive_gradient(diff, a, b);
            for d in 0..2 {
                let step = alpha * clip(g[d]);
                coords[i][d] -= step;
                coords[j][d] += step;
            }
            next_sample[e] += per_sample;

            let negatives =
                libm::floor((now - next_negative[e]) / per_negative[e]).max(0.0) as usize;
            for _ in 0..negatives {
                let k = rng.random_range(0..n);
                if k == i {
                    continue;
                }
                let diff = [coords[i][0] - coords[k][0], coords[i][1] - coords[k][1]];
                let g = repulsive_gradient(diff, a, b);
                for d in 0..2 {
                    coords[i][d] -= alpha * clip(g[d]);
                }
            }
            next_negative[e] += negatives as f64 * per_negative[e];
        }
        if !progress(epoch + 1, config.n_epochs) {
            return Err(Error::Cancelled);
        }
    }
    Ok(coords)
}
