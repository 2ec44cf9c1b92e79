//! Rectangle and lasso hit-testing, selection algebra and the
//! Selection-Inspection statistics.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::facet::{partition, unlabeled_index, FacetKey};
use crate::labels::LabelStore;
use crate::layout::{bin_numeric_attribute, BinSpec};
use crate::model::Dataset;

/// Selection shape in world coordinates. A lasso is closed implicitly and
/// selects nothing with fewer than three vertices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SelectionGeometry {
    Rectangle { x0: f64, y0: f64, x1: f64, y1: f64 },
    Lasso { vertices: Vec<[f64; 2]> },
}

impl SelectionGeometry {
    pub fn contains(&self, p: [f64; 2]) -> bool {
        match self {
            SelectionGeometry::Rectangle { x0, y0, x1, y1 } => {
                let (xl, xh) = if x0 <= x1 { (*x0, *x1) } else { (*x1, *x0) };
                let (yl, yh) = if y0 <= y1 { (*y0, *y1) } else { (*y1, *y0) };
                p[0] >= xl && p[0] <= xh && p[1] >= yl && p[1] <= yh
            }
            SelectionGeometry::Lasso { vertices } => point_in_polygon(p, vertices),
        }
    }

    /// The rectangle's corners as a lasso.
    pub fn rectangle_as_lasso(x0: f64, y0: f64, x1: f64, y1: f64) -> SelectionGeometry {
        SelectionGeometry::Lasso {
            vertices: vec![[x0, y0], [x1, y0], [x1, y1], [x0, y1]],
        }
    }
}

fn on_segment(p: [f64; 2], a: [f64; 2], b: [f64; 2]) -> bool {
    let cross = (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0]);
    cross == 0.0
        && p[0] >= a[0].min(b[0])
        && p[0] <= a[0].max(b[0])
        && p[1] >= a[1].min(b[1])
        && p[1] <= a[1].max(b[1])
}

/// Even-odd ray casting. Points lying exactly on an edge count as inside,
/// which keeps lasso and rectangle selections of the same region identical.
pub fn point_in_polygon(p: [f64; 2], vertices: &[[f64; 2]]) -> bool {
    let n = vertices.len();
    if n < 3 {
        return false;
    }
    let mut inside = false;
    let mut j = n - 1;
    for i in 0..n {
        let (a, b) = (vertices[i], vertices[j]);
        if on_segment(p, a, b) {
            return true;
        }
        if (a[1] > p[1]) != (b[1] > p[1]) {
            let x = a[0] + (p[1] - a[1]) * (b[0] - a[0]) / (b[1] - a[1]);
            if p[0] < x {
                inside = !inside;
            }
        }
        j = i;
    }
    inside
}

/// Row indices of visible particles inside `geometry`.
pub fn hit_test(
    geometry: &SelectionGeometry,
    coordinates: &[[f64; 2]],
    visible: Option<&[bool]>,
) -> Result<Vec<usize>> {
    if let Some(v) = visible {
        if v.len() != coordinates.len() {
            return Err(Error::LengthMismatch {
                expected: coordinates.len(),
                actual: v.len(),
            });
        }
    }
    if let SelectionGeometry::Lasso { vertices } = geometry {
        if vertices.len() < 3 {
            return Ok(Vec::new());
        }
    }
    Ok(coordinates
        .iter()
        .enumerate()
        .filter(|(i, p)| visible.is_none_or(|v| v[*i]) && geometry.contains(**p))
        .map(|(i, _)| i)
        .collect())
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Selection {
    pub ids: BTreeSet<String>,
    pub dataset: String,
}

impl Selection {
    pub fn empty(dataset: &str) -> Self {
        Selection {
            ids: BTreeSet::new(),
            dataset: dataset.into(),
        }
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SelectionMode {
    Replace,
    Add,
    Remove,
}

pub fn update_selection<I, S>(current: &Selection, ids: I, mode: SelectionMode) -> Selection
where
    I: IntoIterator<Item = S>,
    S: Into<String>,
{
    let incoming: BTreeSet<String> = ids.into_iter().map(Into::into).collect();
    let ids = match mode {
        SelectionMode::Replace => incoming,
        SelectionMode::Add => current.ids.union(&incoming).cloned().collect(),
        SelectionMode::Remove => current.ids.difference(&incoming).cloned().collect(),
    };
    Selection {
        ids,
        dataset: current.dataset.clone(),
    }
}

/// Whether percentages are relative to the selection or to each bin.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PercentBase {
    #[default]
    Selection,
    Bin,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinStat {
    pub label: String,
    pub count: usize,
    pub percent: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FacetStats {
    pub key: FacetKey,
    pub name: String,
    pub bins: Vec<BinStat>,
    /// Selected particles without a label; alphabets only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub unlabeled: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionStats {
    pub size: usize,
    pub facets: Vec<FacetStats>,
}

impl SelectionStats {
    pub fn facet(&self, name: &str) -> Option<&FacetStats> {
        self.facets.iter().find(|f| f.name == name)
    }
}

/// `count / base × 100`, or 0 for an empty base.
pub fn percent(count: usize, base: usize) -> f64 {
    if base == 0 {
        0.0
    } else {
        count as f64 / base as f64 * 100.0
    }
}

/// Two-decimal percentage without trailing zeros, e.g. `10.2%`, `74.26%`.
pub fn format_percent(value: f64) -> String {
    let s = format!("{value:.2}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    format!("{s}%")
}

/// Default bin count for numeric attributes without explicit bins.
pub const DEFAULT_STAT_BINS: usize = 10;

/// Per-facet distribution of the selected particles over every schema
/// attribute and every alphabet. Numeric attributes use the matching entry
/// of `bins` or nice bins over the whole dataset.
pub fn selection_stats(
    selection: &Selection,
    dataset: &Dataset,
    labels: &LabelStore,
    bins: &[BinSpec],
    base: PercentBase,
) -> Result<SelectionStats> {
    let index = dataset.id_index();
    let rows: Vec<usize> = selection
        .ids
        .iter()
        .map(|id| {
            index
                .get(id.as_str())
                .copied()
                .ok_or_else(|| Error::UnknownParticle(id.clone()))
        })
        .collect::<Result<_>>()?;
    let by_name: BTreeMap<&str, &BinSpec> =
        bins.iter().map(|b| (b.attribute.as_str(), b)).collect();

    let mut keys: Vec<FacetKey> = dataset.schema.names().map(FacetKey::attribute).collect();
    keys.extend(labels.alphabets().map(|a| FacetKey::Alphabet(a.id)));

    let mut facets = Vec::with_capacity(keys.len());
    for key in keys {
        let name = key.name(labels)?;
        let auto;
        let spec = match &key {
            FacetKey::Attribute(a) if dataset.schema.require(a)?.kind.is_numeric() => match by_name
                .get(a.as_str())
            {
                Some(b) => Some(*b),
                None => {
                    auto =
                        bin_numeric_attribute(a, &dataset.numeric_column(a)?, DEFAULT_STAT_BINS)?;
                    Some(&auto)
                }
            },
            _ => None,
        };
        let part = partition(dataset, labels, &key, spec)?;
        let mut counts = vec![0usize; part.labels.len()];
        for &r in &rows {
            counts[part.member[r]] += 1;
        }
        let totals = match base {
            PercentBase::Bin => part.counts(),
            PercentBase::Selection => vec![rows.len(); part.labels.len()],
        };
        let unlabeled = match key {
            FacetKey::Alphabet(_) => unlabeled_index(&part).map(|u| counts[u]),
            FacetKey::Attribute(_) => None,
        };
        let bins = part
            .labels
            .into_iter()
            .zip(counts.iter().zip(&totals))
            .map(|(label, (&count, &total))| BinStat {
                label,
                count,
                percent: percent(count, total),
            })
            .collect();
        facets.push(FacetStats {
            key,
            name,
            bins,
            unlabeled,
        });
    }
    Ok(SelectionStats {
        size: rows.len(),
        facets,
    })
}
