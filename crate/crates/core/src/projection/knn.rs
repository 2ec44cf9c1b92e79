use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::FeatureMatrix;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    #[default]
    Euclidean,
}

/// Exact k nearest neighbors of every row, self excluded, ascending by
/// distance with ties broken by the smaller index.
#[derive(Debug, Clone, PartialEq)]
pub struct Knn {
    pub k: usize,
    /// Row-major `rows × k`.
    pub indices: Vec<u32>,
    pub distances: Vec<f64>,
}

impl Knn {
    pub fn rows(&self) -> usize {
        if self.k == 0 {
            0
        } else {
            self.indices.len() / self.k
        }
    }

    pub fn neighbors(&self, i: usize) -> &[u32] {
        &self.indices[i * self.k..(i + 1) * self.k]
    }

    pub fn distances(&self, i: usize) -> &[f64] {
        &self.distances[i * self.k..(i + 1) * self.k]
    }
}

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn row_neighbors(features: &FeatureMatrix, i: usize, k: usize) -> (Vec<u32>, Vec<f64>) {
    let me = features.row(i);
    // sorted by (squared distance, index); ties keep the earlier index
    let mut best: Vec<(f64, u32)> = Vec::with_capacity(k + 1);
    for j in 0..features.rows() {
        if j == i {
            continue;
        }
        let d2 = squared_distance(me, features.row(j));
        if best.len() == k && d2 >= best[k - 1].0 {
            continue;
        }
        let at = best.partition_point(|(d, _)| *d <= d2);
        best.insert(at, (d2, j as u32));
        best.truncate(k);
    }
    best.into_iter().map(|(d2, j)| (j, libm::sqrt(d2))).unzip()
}

pub fn knn_graph(features: &FeatureMatrix, k: usize, metric: Metric) -> Result<Knn> {
    let Metric::Euclidean = metric;
    let n = features.rows();
    if k == 0 || k >= n {
        return Err(Error::NeighborsOutOfRange { k, rows: n });
    }

    #[cfg(feature = "parallel")]
    let rows: Vec<(Vec<u32>, Vec<f64>)> = {
        use rayon::prelude::*;
        (0..n)
            .into_par_iter()
            .map(|i| row_neighbors(features, i, k))
            .collect()
    };
    #[cfg(not(feature = "parallel"))]
    let rows: Vec<(Vec<u32>, Vec<f64>)> = (0..n).map(|i| row_neighbors(features, i, k)).collect();

    let mut indices = vec![0u32; n * k];
    let mut distances = vec![0.0; n * k];
    for (i, (idx, dist)) in rows.into_iter().enumerate() {
        indices[i * k..(i + 1) * k].copy_from_slice(&idx);
        distances[i * k..(i + 1) * k].copy_from_slice(&dist);
    }
    Ok(Knn {
        k,
        indices,
        distances,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn points(dim: usize, data: &[f64]) -> FeatureMatrix {
        FeatureMatrix::from_points(dim, data.to_vec()).unwrap()
    }

    #[test]
    fn line_of_three() {
        let knn = knn_graph(&points(1, &[0.0, 1.0, 3.0]), 1, Metric::Euclidean).unwrap();
        assert_eq!(knn.indices, vec![1, 0, 1]);
        assert_eq!(knn.distances, vec![1.0, 1.0, 2.0]);
    }

    #[test]
    fn duplicates_prefer_smaller_index() {
        let knn = knn_graph(&points(1, &[5.0, 5.0, 5.0, 9.0]), 2, Metric::Euclidean).unwrap();
        assert_eq!(knn.neighbors(0), &[1, 2]);
        assert_eq!(knn.neighbors(2), &[0, 1]);
        assert_eq!(knn.distances(1), &[0.0, 0.0]);
    }

    #[test]
    fn k_out_of_range() {
        let m = points(1, &[0.0, 1.0]);
        assert_eq!(
            knn_graph(&m, 2, Metric::Euclidean),
            Err(Error::NeighborsOutOfRange { k: 2, rows: 2 })
        );
        assert!(knn_graph(&m, 0, Metric::Euclidean).is_err());
    }
}
