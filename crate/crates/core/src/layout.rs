//! Attribute View layout: one column per category or bin, particles stacked
//! in a sub-grid inside each column, largest elongation at the bottom.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::facet::{partition, FacetKey};
use crate::labels::LabelStore;
use crate::model::Dataset;

/// Bin edges of a numeric attribute. Bins are half-open `[e_i, e_{i+1})`
/// except the last, which is closed. A constant column is the single bin
/// `[v, v]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinSpec {
    pub attribute: String,
    pub edges: Vec<f64>,
    pub labels: Vec<String>,
}

impl BinSpec {
    /// Builds a spec from explicit edges (non-decreasing; strictly
    /// increasing unless it is the degenerate single bin).
    pub fn from_edges(attribute: &str, edges: Vec<f64>) -> Result<Self> {
        let bad = |message: &str| Error::InvalidConfig {
            field: "edges",
            message: message.into(),
        };
        if edges.len() < 2 {
            return Err(bad("need at least two edges"));
        }
        if edges.iter().any(|e| !e.is_finite()) {
            return Err(bad("edges must be finite"));
        }
        let degenerate = edges.len() == 2 && edges[0] == edges[1];
        if !degenerate && edges.windows(2).any(|w| w[0] >= w[1]) {
            return Err(bad("edges must be strictly increasing"));
        }
        let n = edges.len() - 1;
        let labels = (0..n)
            .map(|i| {
                let close = if i + 1 == n { ']' } else { ')' };
                format!("[{}, {}{}", edges[i], edges[i + 1], close)
            })
            .collect();
        Ok(BinSpec {
            attribute: attribute.into(),
            edges,
            labels,
        })
    }

    pub fn len(&self) -> usize {
        self.edges.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn bin_of(&self, value: f64) -> Option<usize> {
        let first = *self.edges.first()?;
        let last = *self.edges.last()?;
        if !(value >= first && value <= last) {
            return None;
        }
        let upper = self.edges.partition_point(|e| *e <= value);
        Some(upper.saturating_sub(1).min(self.len() - 1))
    }
}

const LADDER: [u64; 3] = [1, 2, 5];

fn pow10(exp: i32) -> f64 {
    libm::pow(10.0, f64::from(exp))
}

/// `index * mantissa * 10^exp`, computed so that decimal edges print cleanly.
fn nice_value(index: i64, mantissa: u64, exp: i32) -> f64 {
    let scaled = (index * mantissa as i64) as f64;
    if exp >= 0 {
        scaled * pow10(exp)
    } else {
        scaled / pow10(-exp)
    }
}

/// Equal-width bins with human-readable edges: the step is `{1,2,5}·10^k`,
/// chosen so the bin count is closest to `target`, with edges snapped to
/// multiples of the step covering `[min, max]`.
pub fn bin_numeric_attribute(attribute: &str, values: &[f64], target: usize) -> Result<BinSpec> {
    if target == 0 {
        return Err(Error::InvalidConfig {
            field: "target_bins",
            message: "must be at least 1".into(),
        });
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Encoding(format!(
            "non-finite value in `{attribute}`"
        )));
    }
    if values.is_empty() {
        return BinSpec::from_edges(attribute, vec![0.0, 1.0]);
    }
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if min == max {
        return BinSpec::from_edges(attribute, vec![min, max]);
    }
    let raw = (max - min) / target as f64;
    let base = libm::floor(libm::log10(raw)) as i32;

    let mut best: Option<(f64, Vec<f64>)> = None;
    for exp in base - 1..=base + 1 {
        for &m in &LADDER {
            let step = nice_value(1, m, exp);
            let mut lo = libm::floor(min / step) as i64;
            let mut hi = libm::ceil(max / step) as i64;
            while nice_value(lo, m, exp) > min {
                lo -= 1;
            }
            while nice_value(hi, m, exp) < max {
                hi += 1;
            }
            if hi == lo {
                hi += 1;
            }
            let count = (hi - lo) as usize;
            let score = (count as f64 - target as f64).abs();
            // ties go to the coarser step, which is visited later
            if best.as_ref().is_none_or(|(s, _)| score <= *s) {
                best = Some((score, (lo..=hi).map(|i| nice_value(i, m, exp)).collect()));
            }
        }
    }
    let (_, edges) = best.expect("ladder is non-empty");
    BinSpec::from_edges(attribute, edges)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LayoutConfig {
    /// Edge length of one particle cell in world units.
    pub cell_size: f64,
    /// Horizontal gap between columns in world units.
    pub column_gap: f64,
    /// Sub-grid aspect: rows per unit of width.
    pub rows_per_width: f64,
    /// Numeric attribute ordering each column; the schema's elongation
    /// attribute when absent.
    pub sort_key: Option<String>,
}

impl Default for LayoutConfig {
    fn default() -> Self {
        LayoutConfig {
            cell_size: 1.0,
            column_gap: 2.0,
            rows_per_width: 4.0,
            sort_key: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub column: u32,
    pub sub_column: u32,
    pub row: u32,
    /// Lower-left corner of the cell in world units; y grows upwards.
    pub x: f64,
    pub y: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnHeader {
    pub label: String,
    pub count: usize,
    pub x: f64,
    /// Sub-grid width in cells.
    pub width: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridLayout {
    pub attribute: FacetKey,
    pub columns: Vec<ColumnHeader>,
    /// One cell per particle, dataset row order.
    pub cells: Vec<Cell>,
    pub config: LayoutConfig,
}

impl GridLayout {
    pub fn coordinates(&self) -> Vec<[f64; 2]> {
        self.cells.iter().map(|c| [c.x, c.y]).collect()
    }
}

/// Sub-grid width for a column: `ceil(sqrt(count / rows_per_width))`, at least 1.
pub fn sub_grid_width(count: usize, rows_per_width: f64) -> u32 {
    if count == 0 {
        return 1;
    }
    (libm::ceil(libm::sqrt(count as f64 / rows_per_width)) as u32).max(1)
}

pub fn attribute_layout(
    dataset: &Dataset,
    labels: &LabelStore,
    key: &FacetKey,
    bins: Option<&BinSpec>,
    config: &LayoutConfig,
) -> Result<GridLayout> {
    if !(config.cell_size > 0.0) || !(config.rows_per_width > 0.0) || !(config.column_gap >= 0.0) {
        return Err(Error::InvalidConfig {
            field: "layout",
            message: "sizes must be positive".into(),
        });
    }
    let sort_key = config
        .sort_key
        .as_deref()
        .unwrap_or(dataset.schema.elongation());
    let sort_values = dataset.numeric_column(sort_key)?;
    let part = partition(dataset, labels, key, bins)?;

    let mut members: Vec<Vec<usize>> = vec![Vec::new(); part.labels.len()];
    for (i, &m) in part.member.iter().enumerate() {
        members[m].push(i);
    }
    let mut cells = vec![
        Cell {
            column: 0,
            sub_column: 0,
            row: 0,
            x: 0.0,
            y: 0.0
        };
        dataset.len()
    ];
    let mut columns = Vec::with_capacity(members.len());
    let mut x = 0.0;
    for (c, rows) in members.iter_mut().enumerate() {
        rows.sort_by(|&a, &b| {
            sort_values[b]
                .total_cmp(&sort_values[a])
                .then_with(|| dataset.particles[a].id.cmp(&dataset.particles[b].id))
        });
        let width = sub_grid_width(rows.len(), config.rows_per_width);
        for (k, &i) in rows.iter().enumerate() {
            let sub = (k as u32) % width;
            let row = (k as u32) / width;
            cells[i] = Cell {
                column: c as u32,
                sub_column: sub,
                row,
                x: x + f64::from(sub) * config.cell_size,
                y: f64::from(row) * config.cell_size,
            };
        }
        columns.push(ColumnHeader {
            label: part.labels[c].clone(),
            count: rows.len(),
            x,
            width,
        });
        x += f64::from(width) * config.cell_size + config.column_gap;
    }
    Ok(GridLayout {
        attribute: key.clone(),
        columns,
        cells,
        config: config.clone(),
    })
}
