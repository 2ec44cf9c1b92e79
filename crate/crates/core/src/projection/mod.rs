//! Two-dimensional projections of a feature matrix, optionally supervised by
//! a label alphabet.
//!
//! The pipeline is exact kNN → smoothed distances → fuzzy simplicial set →
//! optional label intersection → SGD layout. Every stage is deterministic
//! for a fixed seed.

mod curve;
mod fuzzy;
mod kernel;
mod knn;
mod optimize;
mod smooth;

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

pub use curve::fit_curve_params;
pub use fuzzy::{fuzzy_simplicial_set, fuzzy_union, target_intersect, FuzzyGraph};
pub use kernel::{
    attractive_gradient, attractive_loss, kernel, repulsive_gradient, repulsive_loss, CLIP,
};
pub use knn::{knn_graph, Knn, Metric};
pub use optimize::{initialize, optimize_embedding};
pub use smooth::{smooth_knn, smooth_knn_row, Smoothing, MIN_SIGMA_SCALE, SMOOTH_TOLERANCE};

use crate::error::{Error, Result};
use crate::features::{build_feature_matrix, encode_target};
use crate::labels::{AlphabetId, LabelStore};
use crate::model::Dataset;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProjectionConfig {
    pub n_neighbors: usize,
    pub min_dist: f64,
    pub spread: f64,
    pub n_epochs: usize,
    pub negative_sample_rate: usize,
    pub learning_rate: f64,
    /// Weight multiplier for edges between differently labeled particles.
    pub far_weight: f64,
    pub metric: Metric,
    pub seed: u64,
}

impl Default for ProjectionConfig {
    fn default() -> Self {
        ProjectionConfig {
            n_neighbors: 15,
            min_dist: 0.1,
            spread: 1.0,
            n_epochs: 200,
            negative_sample_rate: 5,
            learning_rate: 1.0,
            far_weight: 0.0,
            metric: Metric::Euclidean,
            seed: 0,
        }
    }
}

impl ProjectionConfig {
    /// Checks the configuration against a dataset of `rows` particles.
    pub fn validate(&self, rows: usize) -> Result<()> {
        let bad = |field, message: String| Err(Error::InvalidConfig { field, message });
        if self.n_neighbors < 2 || self.n_neighbors >= rows {
            return bad(
                "n_neighbors",
                format!(
                    "must satisfy 2 <= n_neighbors < {rows} (particle count), got {}",
                    self.n_neighbors
                ),
            );
        }
        if !(self.spread > 0.0) {
            return bad("spread", "must be positive".into());
        }
        if !(self.min_dist >= 0.0 && self.min_dist < self.spread) {
            return bad(
                "min_dist",
                format!("must satisfy 0 <= min_dist < spread ({})", self.spread),
            );
        }
        if self.n_epochs == 0 {
            return bad("n_epochs", "must be at least 1".into());
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate", "must be positive".into());
        }
        if !(0.0..=1.0).contains(&self.far_weight) {
            return bad("far_weight", "must lie in [0, 1]".into());
        }
        Ok(())
    }
}

/// Persisted coordinates of one projection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectionResult {
    #[serde(skip)]
    pub coordinates: Vec<[f32; 2]>,
    pub config: ProjectionConfig,
    pub attributes: Vec<String>,
    pub alphabet: Option<AlphabetId>,
    /// Unix milliseconds; absent for reproducible offline runs.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub computed_at: Option<i64>,
}

/// Checks the attribute/alphabet combination of a projection request.
pub fn validate_request(
    dataset: &Dataset,
    labels: &LabelStore,
    attributes: &[String],
    alphabet: Option<AlphabetId>,
    config: &ProjectionConfig,
) -> Result<()> {
    if attributes.is_empty() {
        return Err(Error::EmptySelection);
    }
    if attributes.len() < 2 && alphabet.is_none() {
        return Err(Error::InvalidConfig {
            field: "attributes",
            message: "a projection needs two attributes, or one attribute and an alphabet".into(),
        });
    }
    for a in attributes {
        dataset.schema.require(a)?;
    }
    if let Some(id) = alphabet {
        labels.alphabet(id)?;
    }
    config.validate(dataset.len())
}

/// Builds features for `attributes`, runs the graph pipeline, applies label
/// supervision when `alphabet` is given and lays out the result. `init`
/// seeds the optimizer with a previous embedding of the same rows.
pub fn project(
    dataset: &Dataset,
    labels: &LabelStore,
    attributes: &[String],
    alphabet: Option<AlphabetId>,
    config: &ProjectionConfig,
    init: Option<&[[f64; 2]]>,
    progress: &mut dyn FnMut(usize, usize) -> bool,
) -> Result<ProjectionResult> {
    validate_request(dataset, labels, attributes, alphabet, config)?;
    let features = build_feature_matrix(dataset, attributes)?;
    let knn = knn_graph(&features, config.n_neighbors, config.metric)?;
    let smoothing = smooth_knn(&knn);
    let mut graph = fuzzy_simplicial_set(&knn, &smoothing);
    if let Some(id) = alphabet {
        let target = encode_target(labels.alphabet(id)?, labels, dataset);
        graph = target_intersect(&graph, &target, config.far_weight)?;
    }
    let coords = optimize_embedding(&graph, config, init, progress)?;
    Ok(ProjectionResult {
        coordinates: coords.iter().map(|p| [p[0] as f32, p[1] as f32]).collect(),
        config: config.clone(),
        attributes: attributes.iter().map(ToString::to_string).collect(),
        alphabet,
        computed_at: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_validation_names_fields() {
        let c = ProjectionConfig::default();
        assert!(c.validate(100).is_ok());
        match c.validate(15) {
            Err(Error::InvalidConfig { field, .. }) => assert_eq!(field, "n_neighbors"),
            other => panic!("unexpected {other:?}"),
        }
        let c = ProjectionConfig {
            min_dist: 1.5,
            ..Default::default()
        };
        assert!(matches!(
            c.validate(100),
            Err(Error::InvalidConfig {
                field: "min_dist",
                ..
            })
        ));
        let c = ProjectionConfig {
            n_epochs: 0,
            ..Default::default()
        };
        assert!(matches!(
            c.validate(100),
            Err(Error::InvalidConfig {
                field: "n_epochs",
                ..
            })
        ));
    }

    #[test]
    fn config_json_defaults() {
        let c: ProjectionConfig = serde_json::from_str(r#"{"seed": 9}"#).unwrap();
        assert_eq!(
            c,
            ProjectionConfig {
                seed: 9,
                ..Default::default()
            }
        );
    }
}
