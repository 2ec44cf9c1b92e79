//! Numeric encoding of attribute subsets and label supervision targets.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::labels::{LabelAlphabet, LabelStore};
use crate::model::Dataset;

/// Min-max scales `values` into `[0, 1]`. A constant column maps to zeros.
pub fn normalize_numeric(values: &[f64]) -> Result<Vec<f64>> {
    if let Some(v) = values.iter().find(|v| !v.is_finite()) {
        return Err(Error::Encoding(format!("non-finite value {v}")));
    }
    let (min, max) = values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
    let range = max - min;
    if !(range > 0.0) {
        return Ok(vec![0.0; values.len()]);
    }
    Ok(values
        .iter()
        .map(|&v| ((v - min) / range).clamp(0.0, 1.0))
        .collect())
}

/// Indicator columns for every category in `order`, used or not.
/// Returned row-major with `order.len()` columns.
pub fn one_hot_encode<S: AsRef<str>>(values: &[S], order: &[String]) -> Result<Vec<Vec<u8>>> {
    values
        .iter()
        .map(|v| {
            let v = v.as_ref();
            let j = order
                .iter()
                .position(|c| c == v)
                .ok_or_else(|| Error::Encoding(format!("unknown category `{v}`")))?;
            let mut row = vec![0u8; order.len()];
            row[j] = 1;
            Ok(row)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "category", rename_all = "kebab-case")]
pub enum ColumnMeaning {
    Normalized,
    OneHot(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Column {
    pub attribute: String,
    pub meaning: ColumnMeaning,
}

/// Dense row-major matrix, one row per particle.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    rows: usize,
    columns: Vec<Column>,
    data: Vec<f64>,
}

impl FeatureMatrix {
    /// Wraps raw row-major data; every entry must be finite.
    pub fn from_rows(columns: Vec<Column>, data: Vec<f64>) -> Result<Self> {
        let width = columns.len();
        if width == 0 {
            return Err(Error::EmptySelection);
        }
        if data.len() % width != 0 {
            return Err(Error::LengthMismatch {
                expected: width,
                actual: data.len() % width,
            });
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::Encoding("non-finite feature value".into()));
        }
        Ok(FeatureMatrix {
            rows: data.len() / width,
            columns,
            data,
        })
    }

    /// Anonymous numeric matrix, e.g. for embedding coordinates.
    pub fn from_points(dim: usize, data: Vec<f64>) -> Result<Self> {
        let columns = (0..dim)
            .map(|i| Column {
                attribute: format!("x{i}"),
                meaning: ColumnMeaning::Normalized,
            })
            .collect();
        FeatureMatrix::from_rows(columns, data)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.columns.len()
    }

    pub fn columns(&self) -> &[Column] {
        &self.columns
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let w = self.cols();
        &self.data[i * w..(i + 1) * w]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }
}

/// Encodes the selected attributes in selection order: one normalized column
/// per numeric attribute, a full one-hot block per categorical or ordinal one.
pub fn build_feature_matrix<S: AsRef<str>>(
    dataset: &Dataset,
    selected: &[S],
) -> Result<FeatureMatrix> {
    if selected.is_empty() {
        return Err(Error::EmptySelection);
    }
    let mut seen = BTreeSet::new();
    let mut columns = Vec::new();
    let mut blocks: Vec<Vec<f64>> = Vec::new();
    for name in selected {
        let name = name.as_ref();
        let d = dataset.schema.require(name)?;
        if !seen.insert(name) {
            return Err(Error::DuplicateAttribute(name.to_string()));
        }
        if d.kind.is_numeric() {
            blocks.push(normalize_numeric(&dataset.numeric_column(name)?)?);
            columns.push(Column {
                attribute: name.to_string(),
                meaning: ColumnMeaning::Normalized,
            });
        } else {
            let order = d.category_order();
            let values = dataset
                .particles
                .iter()
                .map(|p| p.category(name))
                .collect::<Result<Vec<_>>>()?;
            let hot = one_hot_encode(&values, order)?;
            for (j, c) in order.iter().enumerate() {
                blocks.push(hot.iter().map(|row| f64::from(row[j])).collect());
                columns.push(Column {
                    attribute: name.to_string(),
                    meaning: ColumnMeaning::OneHot(c.clone()),
                });
            }
        }
    }
    let rows = dataset.len();
    let width = columns.len();
    let mut data = vec![0.0; rows * width];
    for (j, block) in blocks.iter().enumerate() {
        for (i, v) in block.iter().enumerate() {
            data[i * width + j] = *v;
        }
    }
    Ok(FeatureMatrix {
        rows,
        columns,
        data,
    })
}

/// Per-particle class index (label order in the alphabet) or `None` for
/// unlabeled particles.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TargetVector {
    pub classes: Vec<Option<u32>>,
    pub names: Vec<String>,
}

impl TargetVector {
    pub fn unlabeled(rows: usize) -> Self {
        TargetVector {
            classes: vec![None; rows],
            names: Vec::new(),
        }
    }

    pub fn labeled_count(&self) -> usize {
        self.classes.iter().filter(|c| c.is_some()).count()
    }
}

pub fn encode_target(
    alphabet: &LabelAlphabet,
    labels: &LabelStore,
    dataset: &Dataset,
) -> TargetVector {
    let classes = dataset
        .particles
        .iter()
        .map(|p| {
            labels
                .label_of(alphabet.id, &p.id)
                .and_then(|l| alphabet.label_index(l))
                .map(|i| i as u32)
        })
        .collect();
    TargetVector {
        classes,
        names: alphabet.labels.iter().map(|l| l.name.clone()).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::labels::{AlphabetDef, LabelDef, Stamp};
    use crate::model::{
        AttributeDescriptor, AttributeSchema, Kind, ParticleRecord, Provenance, Role, Value,
    };
    use alloc::collections::BTreeMap;

    fn dataset(elong: &[f64], supplier: &[&str]) -> Dataset {
        let schema = AttributeSchema::new(
            vec![
                AttributeDescriptor::numeric("Elongation", Role::Shape, None),
                AttributeDescriptor::categorical(
                    "Supplier",
                    Role::ProductionContext,
                    Kind::Categorical,
                    vec!["A".into(), "B".into(), "C".into()],
                ),
            ],
            "Elongation",
        )
        .unwrap();
        let particles = elong
            .iter()
            .zip(supplier)
            .enumerate()
            .map(|(i, (e, s))| {
                let mut values = BTreeMap::new();
                values.insert("Elongation".to_string(), Value::Number(*e));
                values.insert("Supplier".to_string(), Value::Category(s.to_string()));
                ParticleRecord {
                    id: format!("p{i}"),
                    image: String::new(),
                    values,
                }
            })
            .collect();
        Dataset {
            schema,
            particles,
            provenance: Provenance::Synthetic,
            created_at: 0,
        }
    }

    #[test]
    fn normalize_examples() {
        assert_eq!(
            normalize_numeric(&[2.0, 4.0, 6.0]).unwrap(),
            vec![0.0, 0.5, 1.0]
        );
        assert_eq!(
            normalize_numeric(&[5.0, 5.0, 5.0]).unwrap(),
            vec![0.0, 0.0, 0.0]
        );
        assert!(normalize_numeric(&[1.0, f64::INFINITY]).is_err());
        assert!(normalize_numeric(&[]).unwrap().is_empty());
    }

    #[test]
    fn one_hot_examples() {
        let order: Vec<String> = vec!["A".into(), "B".into()];
        assert_eq!(
            one_hot_encode(&["B", "A"], &order).unwrap(),
            vec![vec![0, 1], vec![1, 0]]
        );
        let single: Vec<String> = vec!["only".into()];
        assert_eq!(
            one_hot_encode(&["only", "only"], &single).unwrap(),
            vec![vec![1], vec![1]]
        );
        let suppliers: Vec<String> = "ABCDEFGH".chars().map(|c| c.to_string()).collect();
        assert_eq!(one_hot_encode(&["C"], &suppliers).unwrap()[0].len(), 8);
        match one_hot_encode(&["Z"], &order) {
            Err(Error::Encoding(m)) => assert!(m.contains('Z')),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn single_elongation_column() {
        let ds = dataset(&[1.0, 3.0, 2.0], &["A", "B", "A"]);
        let m = build_feature_matrix(&ds, &["Elongation"]).unwrap();
        assert_eq!(m.cols(), 1);
        assert_eq!(m.data(), &[0.0, 1.0, 0.5]);
    }

    #[test]
    fn blocks_follow_selection_order_and_keep_unused_categories() {
        let ds = dataset(&[1.0, 3.0], &["B", "A"]);
        let m = build_feature_matrix(&ds, &["Supplier", "Elongation"]).unwrap();
        assert_eq!(m.cols(), 4);
        assert_eq!(m.row(0), &[0.0, 1.0, 0.0, 0.0]);
        assert_eq!(m.row(1), &[1.0, 0.0, 0.0, 1.0]);
        assert_eq!(m.columns()[2].meaning, ColumnMeaning::OneHot("C".into()));
    }

    #[test]
    fn selection_errors() {
        let ds = dataset(&[1.0], &["A"]);
        let empty: [&str; 0] = [];
        assert_eq!(
            build_feature_matrix(&ds, &empty),
            Err(Error::EmptySelection)
        );
        assert_eq!(
            build_feature_matrix(&ds, &["Nope"]),
            Err(Error::UnknownAttribute("Nope".into()))
        );
        assert!(matches!(
            build_feature_matrix(&ds, &["Elongation", "Elongation"]),
            Err(Error::DuplicateAttribute(_))
        ));
    }

    #[test]
    fn target_encoding() {
        let ds = dataset(&[1.0, 2.0, 3.0, 4.0, 5.0], &["A"; 5]);
        let mut store = LabelStore::new(ds.ids().map(String::from));
        let stamp = Stamp::new("t", 0);
        let a = store
            .upsert_alphabet(
                AlphabetDef {
                    id: None,
                    name: "Color".into(),
                    labels: vec![
                        LabelDef::new("blue", "#0000ff"),
                        LabelDef::new("bright", "#ffffff"),
                    ],
                },
                false,
                &stamp,
            )
            .unwrap();
        let t = encode_target(&a, &store, &ds);
        assert_eq!(t.labeled_count(), 0);
        store
            .assign(&["p1".into(), "p3".into()], a.id, a.labels[0].id, &stamp)
            .unwrap();
        store
            .assign(&["p4".into()], a.id, a.labels[1].id, &stamp)
            .unwrap();
        let t = encode_target(&a, &store, &ds);
        assert_eq!(t.classes, vec![None, Some(0), None, Some(0), Some(1)]);
        assert_eq!(t.names, vec!["blue", "bright"]);
    }
}
