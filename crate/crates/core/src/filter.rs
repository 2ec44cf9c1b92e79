//! Conjunctive per-attribute filters and their stacked-bar summaries.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::facet::{partition, FacetKey};
use crate::labels::{LabelStore, UNLABELED};
use crate::layout::BinSpec;
use crate::model::Dataset;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Predicate {
    /// Category (or label name, or `UNLABELED`) membership.
    Include(BTreeSet<String>),
    /// Closed numeric interval.
    Range { low: f64, high: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterSpec {
    pub key: FacetKey,
    pub predicate: Predicate,
}

impl FilterSpec {
    pub fn include<I, S>(key: FacetKey, categories: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        FilterSpec {
            key,
            predicate: Predicate::Include(categories.into_iter().map(Into::into).collect()),
        }
    }

    pub fn range(key: FacetKey, low: f64, high: f64) -> Self {
        FilterSpec {
            key,
            predicate: Predicate::Range { low, high },
        }
    }

    /// Per-particle pass flags for this spec alone.
    pub fn evaluate(&self, dataset: &Dataset, labels: &LabelStore) -> Result<Vec<bool>> {
        let name = self.key.name(labels)?;
        let invalid = |message: String| Error::InvalidFilter {
            attribute: name.clone(),
            message,
        };
        match (&self.key, &self.predicate) {
            (_, Predicate::Include(set)) if set.is_empty() => {
                Err(invalid("include set is empty".into()))
            }
            (_, Predicate::Range { low, high }) if !(low <= high) => {
                Err(invalid(format!("interval [{low}, {high}] is empty")))
            }
            (FacetKey::Attribute(a), Predicate::Range { low, high }) => {
                let d = dataset.schema.require(a)?;
                if !d.kind.is_numeric() {
                    return Err(invalid("range predicate on a categorical attribute".into()));
                }
                dataset
                    .particles
                    .iter()
                    .map(|p| p.number(a).map(|v| v >= *low && v <= *high))
                    .collect()
            }
            (FacetKey::Attribute(a), Predicate::Include(set)) => {
                let d = dataset.schema.require(a)?;
                if d.kind.is_numeric() {
                    return Err(invalid("include predicate on a numeric attribute".into()));
                }
                if let Some(c) = set.iter().find(|c| d.category_index(c).is_none()) {
                    return Err(invalid(format!("unknown category `{c}`")));
                }
                dataset
                    .particles
                    .iter()
                    .map(|p| p.category(a).map(|c| set.contains(c)))
                    .collect()
            }
            (FacetKey::Alphabet(_), Predicate::Range { .. }) => {
                Err(invalid("range predicate on a label alphabet".into()))
            }
            (FacetKey::Alphabet(id), Predicate::Include(set)) => {
                let alphabet = labels.alphabet(*id)?;
                if let Some(c) = set
                    .iter()
                    .find(|c| c.as_str() != UNLABELED && alphabet.label_by_name(c).is_none())
                {
                    return Err(invalid(format!("unknown label `{c}`")));
                }
                let unlabeled = set.contains(UNLABELED);
                let accepted: BTreeSet<_> = alphabet
                    .labels
                    .iter()
                    .filter(|l| set.contains(&l.name))
                    .map(|l| l.id)
                    .collect();
                Ok(dataset
                    .particles
                    .iter()
                    .map(|p| match labels.label_of(*id, &p.id) {
                        Some(l) => accepted.contains(&l),
                        None => unlabeled,
                    })
                    .collect())
            }
        }
    }
}

/// Active filters, at most one per attribute or alphabet.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<FilterSpec>", into = "Vec<FilterSpec>")]
pub struct FilterState {
    specs: Vec<FilterSpec>,
}

impl TryFrom<Vec<FilterSpec>> for FilterState {
    type Error = Error;

    fn try_from(specs: Vec<FilterSpec>) -> Result<Self> {
        FilterState::new(specs)
    }
}

impl From<FilterState> for Vec<FilterSpec> {
    fn from(s: FilterState) -> Self {
        s.specs
    }
}

impl FilterState {
    pub fn new(specs: Vec<FilterSpec>) -> Result<Self> {
        let mut keys = BTreeSet::new();
        for s in &specs {
            if !keys.insert(&s.key) {
                return Err(Error::InvalidFilter {
                    attribute: format!("{:?}", s.key),
                    message: "more than one filter for this attribute".to_string(),
                });
            }
        }
        Ok(FilterState { specs })
    }

    pub fn specs(&self) -> &[FilterSpec] {
        &self.specs
    }

    pub fn is_empty(&self) -> bool {
        self.specs.is_empty()
    }

    /// Adds a spec, replacing any existing spec for the same key.
    pub fn set(&mut self, spec: FilterSpec) {
        match self.specs.iter_mut().find(|s| s.key == spec.key) {
            Some(slot) => *slot = spec,
            None => self.specs.push(spec),
        }
    }

    pub fn remove(&mut self, key: &FacetKey) -> Option<FilterSpec> {
        let i = self.specs.iter().position(|s| &s.key == key)?;
        Some(self.specs.remove(i))
    }

    pub fn get(&self, key: &FacetKey) -> Option<&FilterSpec> {
        self.specs.iter().find(|s| &s.key == key)
    }
}

/// Inclusion mask: a particle is included iff it passes every spec.
pub fn apply_filters(
    state: &FilterState,
    dataset: &Dataset,
    labels: &LabelStore,
) -> Result<Vec<bool>> {
    let mut mask = vec![true; dataset.len()];
    for spec in state.specs() {
        for (m, pass) in mask.iter_mut().zip(spec.evaluate(dataset, labels)?) {
            *m &= pass;
        }
    }
    Ok(mask)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BinCounts {
    pub label: String,
    pub total: usize,
    /// Passes every filter.
    pub included: usize,
    /// Fails the summarized attribute's own filter.
    pub excluded_by_self: usize,
    /// Passes its own filter but fails at least one other.
    pub excluded_by_others: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilterSummary {
    pub key: FacetKey,
    pub bins: Vec<BinCounts>,
    pub included: usize,
    pub total: usize,
}

pub fn filter_summary(
    state: &FilterState,
    dataset: &Dataset,
    labels: &LabelStore,
    key: &FacetKey,
    bins: Option<&BinSpec>,
) -> Result<FilterSummary> {
    let mut all = filter_summaries(state, dataset, labels, &[(key.clone(), bins)])?;
    Ok(all.remove(0))
}

/// Summaries of several facets under one filter state; each spec is
/// evaluated once and shared between the facets.
pub fn filter_summaries(
    state: &FilterState,
    dataset: &Dataset,
    labels: &LabelStore,
    keys: &[(FacetKey, Option<&BinSpec>)],
) -> Result<Vec<FilterSummary>> {
    let passes = state
        .specs()
        .iter()
        .map(|s| s.evaluate(dataset, labels))
        .collect::<Result<Vec<_>>>()?;
    // number of specs each particle fails
    let mut failures = vec![0u32; dataset.len()];
    for pass in &passes {
        for (f, &p) in failures.iter_mut().zip(pass) {
            *f += u32::from(!p);
        }
    }
    keys.iter()
        .map(|(key, bins)| {
            let part = partition(dataset, labels, key, *bins)?;
            let own = state
                .specs()
                .iter()
                .position(|s| &s.key == key)
                .map(|i| &passes[i]);
            let mut counts: Vec<BinCounts> = part
                .labels
                .iter()
                .map(|l| BinCounts {
                    label: l.clone(),
                    total: 0,
                    included: 0,
                    excluded_by_self: 0,
                    excluded_by_others: 0,
                })
                .collect();
            let mut included = 0;
            for (i, &b) in part.member.iter().enumerate() {
                let c = &mut counts[b];
                c.total += 1;
                let fails_own = own.is_some_and(|p| !p[i]);
                if fails_own {
                    c.excluded_by_self += 1;
                } else if failures[i] > 0 {
                    c.excluded_by_others += 1;
                } else {
                    c.included += 1;
                    included += 1;
                }
            }
            Ok(FilterSummary {
                key: key.clone(),
                bins: counts,
                included,
                total: dataset.len(),
            })
        })
        .collect()
}
