//! Attribute schema, particle records and the dataset container.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hash::Fnv64;

/// Which part of the particle description an attribute belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Role {
    ProductionContext,
    Shape,
    Size,
    /// A label alphabet replayed as an attribute.
    Augmented,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Kind {
    Categorical,
    Ordinal,
    Numeric,
}

impl Kind {
    pub fn is_numeric(self) -> bool {
        matches!(self, Kind::Numeric)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributeDescriptor {
    pub name: String,
    pub role: Role,
    pub kind: Kind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub unit: Option<String>,
    /// Category order for categorical and ordinal attributes.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub categories: Option<Vec<String>>,
}

impl AttributeDescriptor {
    pub fn numeric(name: impl Into<String>, role: Role, unit: Option<&str>) -> Self {
        AttributeDescriptor {
            name: name.into(),
            role,
            kind: Kind::Numeric,
            unit: unit.map(ToString::to_string),
            categories: None,
        }
    }

    pub fn categorical(
        name: impl Into<String>,
        role: Role,
        kind: Kind,
        categories: Vec<String>,
    ) -> Self {
        AttributeDescriptor {
            name: name.into(),
            role,
            kind,
            unit: None,
            categories: Some(categories),
        }
    }

    /// Category order; empty for numeric attributes.
    pub fn category_order(&self) -> &[String] {
        self.categories.as_deref().unwrap_or(&[])
    }

    pub fn category_index(&self, value: &str) -> Option<usize> {
        self.category_order().iter().position(|c| c == value)
    }

    fn check(&self) -> Result<()> {
        if self.name.is_empty() {
            return Err(Error::InvalidSchema("attribute with empty name".into()));
        }
        match (self.kind, &self.categories) {
            (Kind::Numeric, Some(_)) => Err(Error::InvalidSchema(format!(
                "numeric attribute `{}` must not carry a category order",
                self.name
            ))),
            (Kind::Categorical | Kind::Ordinal, None) => Err(Error::InvalidSchema(format!(
                "attribute `{}` needs a category order",
                self.name
            ))),
            (Kind::Categorical | Kind::Ordinal, Some(cats)) => {
                if cats.is_empty() {
                    return Err(Error::InvalidSchema(format!(
                        "attribute `{}` has no categories",
                        self.name
                    )));
                }
                let unique: BTreeSet<&String> = cats.iter().collect();
                if unique.len() != cats.len() {
                    return Err(Error::InvalidSchema(format!(
                        "attribute `{}` repeats a category",
                        self.name
                    )));
                }
                Ok(())
            }
            (Kind::Numeric, None) => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct RawSchema {
    descriptors: Vec<AttributeDescriptor>,
    elongation: String,
}

/// Ordered attribute descriptors plus the designated elongation attribute.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSchema", into = "RawSchema")]
pub struct AttributeSchema {
    descriptors: Vec<AttributeDescriptor>,
    elongation: String,
}

impl TryFrom<RawSchema> for AttributeSchema {
    type Error = Error;

    fn try_from(raw: RawSchema) -> Result<Self> {
        AttributeSchema::new(raw.descriptors, raw.elongation)
    }
}

impl From<AttributeSchema> for RawSchema {
    fn from(s: AttributeSchema) -> Self {
        RawSchema {
            descriptors: s.descriptors,
            elongation: s.elongation,
        }
    }
}

impl AttributeSchema {
    pub fn new(
        descriptors: Vec<AttributeDescriptor>,
        elongation: impl Into<String>,
    ) -> Result<Self> {
        let elongation = elongation.into();
        let mut names = BTreeSet::new();
        for d in &descriptors {
            d.check()?;
            if !names.insert(d.name.as_str()) {
                return Err(Error::DuplicateAttribute(d.name.clone()));
            }
        }
        match descriptors.iter().find(|d| d.name == elongation) {
            None => {
                return Err(Error::InvalidSchema(format!(
                    "elongation attribute `{elongation}` is not in the schema"
                )))
            }
            Some(d) if d.role != Role::Shape || d.kind != Kind::Numeric => {
                return Err(Error::InvalidSchema(format!(
                    "elongation attribute `{elongation}` must be a numeric shape attribute"
                )))
            }
            Some(_) => {}
        }
        Ok(AttributeSchema {
            descriptors,
            elongation,
        })
    }

    pub fn descriptors(&self) -> &[AttributeDescriptor] {
        &self.descriptors
    }

    pub fn elongation(&self) -> &str {
        &self.elongation
    }

    pub fn get(&self, name: &str) -> Option<&AttributeDescriptor> {
        self.descriptors.iter().find(|d| d.name == name)
    }

    pub fn require(&self, name: &str) -> Result<&AttributeDescriptor> {
        self.get(name)
            .ok_or_else(|| Error::UnknownAttribute(name.to_string()))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.descriptors.iter().map(|d| d.name.as_str())
    }

    pub fn numeric_names(&self) -> Vec<&str> {
        self.descriptors
            .iter()
            .filter(|d| d.kind.is_numeric())
            .map(|d| d.name.as_str())
            .collect()
    }

    pub fn count_role(&self, role: Role) -> usize {
        self.descriptors.iter().filter(|d| d.role == role).count()
    }

    pub fn count_kind(&self, kind: Kind) -> usize {
        self.descriptors.iter().filter(|d| d.kind == kind).count()
    }
}

/// Attribute value: a number for numeric attributes, a category otherwise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Value {
    Number(f64),
    Category(String),
}

impl Value {
    pub fn as_number(&self) -> Option<f64> {
        match self {
            Value::Number(v) => Some(*v),
            Value::Category(_) => None,
        }
    }

    pub fn as_category(&self) -> Option<&str> {
        match self {
            Value::Category(c) => Some(c),
            Value::Number(_) => None,
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Number(v) => write!(f, "{v}"),
            Value::Category(c) => f.write_str(c),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParticleRecord {
    pub id: String,
    /// Image path relative to the dataset directory.
    pub image: String,
    pub values: BTreeMap<String, Value>,
}

impl ParticleRecord {
    pub fn number(&self, attribute: &str) -> Result<f64> {
        match self.values.get(attribute) {
            Some(Value::Number(v)) => Ok(*v),
            _ => Err(Error::Encoding(format!(
                "particle `{}` has no numeric `{attribute}`",
                self.id
            ))),
        }
    }

    pub fn category(&self, attribute: &str) -> Result<&str> {
        match self.values.get(attribute) {
            Some(Value::Category(c)) => Ok(c),
            _ => Err(Error::Encoding(format!(
                "particle `{}` has no category for `{attribute}`",
                self.id
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Provenance {
    Real,
    Synthetic,
}

/// A schema plus its particles. Row index is the canonical particle index
/// used by every matrix and coordinate array.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub schema: AttributeSchema,
    pub particles: Vec<ParticleRecord>,
    pub provenance: Provenance,
    /// Unix time in milliseconds.
    pub created_at: i64,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.particles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.particles.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.particles.iter().map(|p| p.id.as_str())
    }

    /// Map from particle id to row index.
    pub fn id_index(&self) -> BTreeMap<&str, usize> {
        self.particles
            .iter()
            .enumerate()
            .map(|(i, p)| (p.id.as_str(), i))
            .collect()
    }

    /// Numeric column of one attribute in row order.
    pub fn numeric_column(&self, attribute: &str) -> Result<Vec<f64>> {
        let d = self.schema.require(attribute)?;
        if !d.kind.is_numeric() {
            return Err(Error::Encoding(format!("`{attribute}` is not numeric")));
        }
        self.particles.iter().map(|p| p.number(attribute)).collect()
    }

    /// Content version: changes whenever ids or values change.
    pub fn version(&self) -> String {
        let mut h = Fnv64::new();
        for p in &self.particles {
            h.write(p.id.as_bytes());
            h.write(&[0]);
            for (k, v) in &p.values {
                h.write(k.as_bytes());
                match v {
                    Value::Number(x) => h.write(&x.to_bits().to_le_bytes()),
                    Value::Category(c) => h.write(c.as_bytes()),
                }
                h.write(&[1]);
            }
        }
        format!("{:016x}", h.finish())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind", content = "detail")]
pub enum ViolationKind {
    UnknownAttribute,
    MissingAttribute,
    WrongType,
    NonFinite,
    UnknownCategory(String),
    DuplicateId,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub particle: String,
    pub row: usize,
    pub attribute: Option<String>,
    pub kind: ViolationKind,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "particle `{}` (row {})", self.particle, self.row)?;
        if let Some(a) = &self.attribute {
            write!(f, ", attribute `{a}`")?;
        }
        match &self.kind {
            ViolationKind::UnknownAttribute => f.write_str(": unknown attribute"),
            ViolationKind::MissingAttribute => f.write_str(": missing value"),
            ViolationKind::WrongType => f.write_str(": value has the wrong type"),
            ViolationKind::NonFinite => f.write_str(": non-finite number"),
            ViolationKind::UnknownCategory(c) => {
                write!(f, ": category `{c}` not in the category order")
            }
            ViolationKind::DuplicateId => f.write_str(": duplicate id"),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Collects every schema violation in `dataset` without modifying it.
pub fn validate_dataset(dataset: &Dataset) -> ValidationReport {
    let schema = &dataset.schema;
    let mut violations = Vec::new();
    let mut seen = BTreeSet::new();
    for (row, p) in dataset.particles.iter().enumerate() {
        let mut push = |attribute: Option<&str>, kind| {
            violations.push(Violation {
                particle: p.id.clone(),
                row,
                attribute: attribute.map(ToString::to_string),
                kind,
            })
        };
        if !seen.insert(p.id.as_str()) {
            push(None, ViolationKind::DuplicateId);
        }
        for name in p.values.keys() {
            if schema.get(name).is_none() {
                push(Some(name), ViolationKind::UnknownAttribute);
            }
        }
        for d in schema.descriptors() {
            match (d.kind, p.values.get(&d.name)) {
                (_, None) => push(Some(&d.name), ViolationKind::MissingAttribute),
                (Kind::Numeric, Some(Value::Number(v))) => {
                    if !v.is_finite() {
                        push(Some(&d.name), ViolationKind::NonFinite);
                    }
                }
                (Kind::Numeric, Some(Value::Category(_))) => {
                    push(Some(&d.name), ViolationKind::WrongType)
                }
                (_, Some(Value::Number(_))) => push(Some(&d.name), ViolationKind::WrongType),
                (_, Some(Value::Category(c))) => {
                    if d.category_index(c).is_none() {
                        push(Some(&d.name), ViolationKind::UnknownCategory(c.clone()));
                    }
                }
            }
        }
    }
    ValidationReport { violations }
}
