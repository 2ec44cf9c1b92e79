//! Evaluation against ground truth, for synthetic corpora.

use std::collections::BTreeMap;
use std::path::Path;

use anyhow::{bail, Context};

use daedalus_core::features::FeatureMatrix;
use daedalus_core::projection::{knn_graph, Metric};
use daedalus_core::Dataset;

/// Mean over all points of the fraction of their `k` nearest neighbours
/// (Euclidean, self excluded, ties to the smaller index) sharing the
/// point's class. With `k = 1` this is leave-one-out 1-NN accuracy.
pub fn neighborhood_purity(
    points: &FeatureMatrix,
    classes: &[usize],
    k: usize,
) -> anyhow::Result<f64> {
    if classes.len() != points.rows() {
        bail!("{} classes for {} points", classes.len(), points.rows());
    }
    let knn = knn_graph(points, k, Metric::Euclidean)?;
    let total: f64 = (0..points.rows())
        .map(|i| {
            let same = knn
                .neighbors(i)
                .iter()
                .filter(|&&j| classes[j as usize] == classes[i])
                .count();
            same as f64 / k as f64
        })
        .sum();
    Ok(total / points.rows() as f64)
}

/// Purity of 2D coordinates.
pub fn embedding_purity(
    coordinates: &[[f32; 2]],
    classes: &[usize],
    k: usize,
) -> anyhow::Result<f64> {
    let data = coordinates
        .iter()
        .flat_map(|p| [p[0] as f64, p[1] as f64])
        .collect();
    neighborhood_purity(&FeatureMatrix::from_points(2, data)?, classes, k)
}

/// Ground truth as class indices in dataset order, plus the class names.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Truth {
    pub classes: Vec<usize>,
    pub names: Vec<String>,
}

impl Truth {
    pub fn from_names(per_row: &[String]) -> Self {
        let mut names: Vec<String> = Vec::new();
        let classes = per_row
            .iter()
            .map(|c| match names.iter().position(|n| n == c) {
                Some(i) => i,
                None => {
                    names.push(c.clone());
                    names.len() - 1
                }
            })
            .collect();
        Truth { classes, names }
    }
}

/// Reads an `id,class` CSV and orders it like `dataset`.
pub fn read_truth(path: &Path, dataset: &Dataset) -> anyhow::Result<Truth> {
    let mut reader =
        csv::Reader::from_path(path).with_context(|| format!("reading {}", path.display()))?;
    let mut by_id = BTreeMap::new();
    for record in reader.records() {
        let record = record?;
        if record.len() != 2 {
            bail!("{}: expected `id,class` rows", path.display());
        }
        by_id.insert(record[0].to_string(), record[1].to_string());
    }
    let per_row: Vec<String> = dataset
        .ids()
        .map(|id| {
            by_id
                .get(id)
                .cloned()
                .with_context(|| format!("no ground truth for particle `{id}`"))
        })
        .collect::<anyhow::Result<_>>()?;
    Ok(Truth::from_names(&per_row))
}
