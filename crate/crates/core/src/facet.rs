//! Uniform access to schema attributes and label alphabets as partitions of
//! the particle set. Layouts, filters and selection statistics all see an
//! alphabet as a categorical attribute whose categories are its labels
//! followed by [`UNLABELED`].

use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::labels::{AlphabetId, LabelStore, UNLABELED};
use crate::layout::BinSpec;
use crate::model::Dataset;

/// A schema attribute (by name) or a label alphabet (by id).
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FacetKey {
    Attribute(String),
    Alphabet(AlphabetId),
}

impl FacetKey {
    pub fn attribute(name: &str) -> Self {
        FacetKey::Attribute(name.into())
    }

    /// Display name: the attribute name or the alphabet name.
    pub fn name(&self, labels: &LabelStore) -> Result<String> {
        match self {
            FacetKey::Attribute(a) => Ok(a.clone()),
            FacetKey::Alphabet(id) => Ok(labels.alphabet(*id)?.name.clone()),
        }
    }

    pub fn is_numeric(&self, dataset: &Dataset) -> Result<bool> {
        match self {
            FacetKey::Attribute(a) => Ok(dataset.schema.require(a)?.kind.is_numeric()),
            FacetKey::Alphabet(_) => Ok(false),
        }
    }
}

/// Every particle mapped to exactly one category or bin.
#[derive(Debug, Clone, PartialEq)]
pub struct Partition {
    /// Category or bin labels, in display order.
    pub labels: Vec<String>,
    /// Per particle (dataset row order), index into `labels`.
    pub member: Vec<usize>,
}

impl Partition {
    pub fn counts(&self) -> Vec<usize> {
        let mut counts = alloc::vec![0; self.labels.len()];
        for &m in &self.member {
            counts[m] += 1;
        }
        counts
    }
}

/// Partitions the dataset by a facet. Numeric attributes need `bins`;
/// categorical ones use the schema's category order.
pub fn partition(
    dataset: &Dataset,
    labels: &LabelStore,
    key: &FacetKey,
    bins: Option<&BinSpec>,
) -> Result<Partition> {
    match key {
        FacetKey::Attribute(name) => {
            let d = dataset.schema.require(name)?;
            if d.kind.is_numeric() {
                let bins = bins.ok_or_else(|| Error::MissingBins(name.clone()))?;
                let member = dataset
                    .particles
                    .iter()
                    .map(|p| {
                        let v = p.number(name)?;
                        bins.bin_of(v).ok_or_else(|| Error::OutsideBins {
                            attribute: name.clone(),
                            value: v,
                        })
                    })
                    .collect::<Result<Vec<_>>>()?;
                Ok(Partition {
                    labels: bins.labels.clone(),
                    member,
                })
            } else {
                let member = dataset
                    .particles
                    .iter()
                    .map(|p| {
                        let c = p.category(name)?;
                        d.category_index(c).ok_or_else(|| {
                            Error::Encoding(alloc::format!("unknown category `{c}` of `{name}`"))
                        })
                    })
                    .collect::<Result<Vec<_>>>()?;
                Ok(Partition {
                    labels: d.category_order().to_vec(),
                    member,
                })
            }
        }
        FacetKey::Alphabet(id) => {
            let alphabet = labels.alphabet(*id)?;
            let unlabeled = alphabet.labels.len();
            let member = dataset
                .particles
                .iter()
                .map(|p| {
                    labels
                        .label_of(*id, &p.id)
                        .and_then(|l| alphabet.label_index(l))
                        .unwrap_or(unlabeled)
                })
                .collect();
            Ok(Partition {
                labels: alphabet.category_order(),
                member,
            })
        }
    }
}

/// Index of the [`UNLABELED`] category in an alphabet partition.
pub fn unlabeled_index(partition: &Partition) -> Option<usize> {
    partition.labels.iter().position(|l| l == UNLABELED)
}
