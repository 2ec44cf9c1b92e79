//! Label alphabets and particle-label assignments.
//!
//! [`LabelStore`] is event-sourced: every mutation is expressed as an [`Op`],
//! applied to the in-memory state and appended to the modification log.
//! Replaying the log from an empty store reproduces the state exactly, which
//! is also how snapshots are checked on import.
//!
//! Labels inside one alphabet are mutually exclusive per particle. Each
//! alphabet therefore partitions the particle set into its labels plus the
//! implicit [`UNLABELED`] category.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{AttributeDescriptor, Kind, Role};

/// Pseudo-category for particles without an assignment in an alphabet.
pub const UNLABELED: &str = "UNLABELED";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AlphabetId(pub u64);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LabelId(pub u64);

impl fmt::Display for AlphabetId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl fmt::Display for LabelId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Label {
    pub id: LabelId,
    pub name: String,
    /// `#rrggbb`, lower case.
    pub color: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelAlphabet {
    pub id: AlphabetId,
    pub name: String,
    pub labels: Vec<Label>,
    pub created_by: String,
    pub created_at: i64,
}

impl LabelAlphabet {
    pub fn label(&self, id: LabelId) -> Option<&Label> {
        self.labels.iter().find(|l| l.id == id)
    }

    /// Position of a label in the alphabet's label order.
    pub fn label_index(&self, id: LabelId) -> Option<usize> {
        self.labels.iter().position(|l| l.id == id)
    }

    pub fn label_by_name(&self, name: &str) -> Option<&Label> {
        self.labels.iter().find(|l| l.name == name)
    }

    /// Category order when the alphabet is used as an attribute:
    /// label names in order, then [`UNLABELED`].
    pub fn category_order(&self) -> Vec<String> {
        self.labels
            .iter()
            .map(|l| l.name.clone())
            .chain(core::iter::once(UNLABELED.to_string()))
            .collect()
    }

    /// The alphabet viewed as a categorical attribute.
    pub fn as_descriptor(&self) -> AttributeDescriptor {
        AttributeDescriptor::categorical(
            self.name.clone(),
            Role::Augmented,
            Kind::Categorical,
            self.category_order(),
        )
    }

    fn check(&self) -> core::result::Result<(), (String, String)> {
        if self.name.trim().is_empty() {
            return Err(("/name".into(), "alphabet name is empty".into()));
        }
        if self.labels.is_empty() {
            return Err((
                "/labels".into(),
                "an alphabet needs at least one label".into(),
            ));
        }
        let mut names = BTreeSet::new();
        let mut colors = BTreeSet::new();
        let mut ids = BTreeSet::new();
        for (j, l) in self.labels.iter().enumerate() {
            if l.name.trim().is_empty() || l.name == UNLABELED {
                return Err((
                    format!("/labels/{j}/name"),
                    format!("invalid label name `{}`", l.name),
                ));
            }
            if !names.insert(l.name.as_str()) {
                return Err((
                    format!("/labels/{j}/name"),
                    format!("duplicate label name `{}`", l.name),
                ));
            }
            if normalize_color(&l.color).as_deref() != Some(l.color.as_str()) {
                return Err((
                    format!("/labels/{j}/color"),
                    format!("invalid color `{}`", l.color),
                ));
            }
            if !colors.insert(l.color.as_str()) {
                return Err((
                    format!("/labels/{j}/color"),
                    format!("duplicate color `{}`", l.color),
                ));
            }
            if !ids.insert(l.id) {
                return Err((
                    format!("/labels/{j}/id"),
                    format!("duplicate label id {}", l.id),
                ));
            }
        }
        Ok(())
    }
}

/// Lower-cases a `#rrggbb` color, or returns `None` if it is malformed.
pub fn normalize_color(color: &str) -> Option<String> {
    let hex = color.strip_prefix('#')?;
    if hex.len() == 6 && hex.chars().all(|c| c.is_ascii_hexdigit()) {
        Some(format!("#{}", hex.to_ascii_lowercase()))
    } else {
        None
    }
}

/// Requested shape of an alphabet for [`LabelStore::upsert_alphabet`].
/// `id: None` creates; otherwise the alphabet with that id is updated.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AlphabetDef {
    #[serde(default)]
    pub id: Option<AlphabetId>,
    pub name: String,
    pub labels: Vec<LabelDef>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelDef {
    #[serde(default)]
    pub id: Option<LabelId>,
    pub name: String,
    pub color: String,
    #[serde(default)]
    pub description: Option<String>,
}

impl LabelDef {
    pub fn new(name: &str, color: &str) -> Self {
        LabelDef {
            id: None,
            name: name.to_string(),
            color: color.to_string(),
            description: None,
        }
    }
}

/// Who performed a mutation and when (unix milliseconds).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Stamp {
    pub who: String,
    pub at: i64,
}

impl Stamp {
    pub fn new(who: &str, at: i64) -> Self {
        Stamp {
            who: who.to_string(),
            at,
        }
    }
}

/// One `[particle, alphabet, label]` triple.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct AssignmentRow(pub String, pub AlphabetId, pub LabelId);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "kebab-case")]
pub enum Op {
    Upsert {
        alphabet: LabelAlphabet,
        force: bool,
    },
    Assign {
        alphabet: AlphabetId,
        label: LabelId,
        particles: Vec<String>,
    },
    Unassign {
        alphabet: AlphabetId,
        particles: Vec<String>,
    },
    /// Replace the whole state; written by snapshot merges.
    Restore {
        alphabets: Vec<LabelAlphabet>,
        assignments: Vec<AssignmentRow>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogEntry {
    pub seq: u64,
    pub who: String,
    pub at: i64,
    #[serde(flatten)]
    pub op: Op,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub alphabets: Vec<LabelAlphabet>,
    pub assignments: Vec<AssignmentRow>,
    pub log: Vec<LogEntry>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MergePolicy {
    Reject,
    Theirs,
    Ours,
}

/// A disagreement found while merging a snapshot into a non-empty store.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Conflict {
    pub alphabet: AlphabetId,
    /// `None` for a conflicting alphabet definition.
    pub particle: Option<String>,
    pub ours: Option<LabelId>,
    pub theirs: Option<LabelId>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum LabelQuery {
    Label(LabelId),
    Unlabeled,
}

/// `(alphabet, particle) -> label`, grouped by alphabet.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AssignmentTable {
    by_alphabet: BTreeMap<AlphabetId, BTreeMap<String, LabelId>>,
}

impl AssignmentTable {
    pub fn get(&self, alphabet: AlphabetId, particle: &str) -> Option<LabelId> {
        self.by_alphabet
            .get(&alphabet)
            .and_then(|m| m.get(particle))
            .copied()
    }

    /// All assignments of one alphabet.
    pub fn of(&self, alphabet: AlphabetId) -> impl Iterator<Item = (&str, LabelId)> {
        self.by_alphabet
            .get(&alphabet)
            .into_iter()
            .flat_map(|m| m.iter().map(|(p, l)| (p.as_str(), *l)))
    }

    pub fn count(&self, alphabet: AlphabetId) -> usize {
        self.by_alphabet.get(&alphabet).map_or(0, BTreeMap::len)
    }

    pub fn len(&self) -> usize {
        self.by_alphabet.values().map(BTreeMap::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn rows(&self) -> Vec<AssignmentRow> {
        let mut rows: Vec<AssignmentRow> = self
            .by_alphabet
            .iter()
            .flat_map(|(a, m)| m.iter().map(move |(p, l)| AssignmentRow(p.clone(), *a, *l)))
            .collect();
        rows.sort();
        rows
    }

    fn set(&mut self, alphabet: AlphabetId, particle: String, label: LabelId) -> bool {
        self.by_alphabet
            .entry(alphabet)
            .or_default()
            .insert(particle, label)
            != Some(label)
    }

    fn remove(&mut self, alphabet: AlphabetId, particle: &str) -> bool {
        let Some(m) = self.by_alphabet.get_mut(&alphabet) else {
            return false;
        };
        let removed = m.remove(particle).is_some();
        if m.is_empty() {
            self.by_alphabet.remove(&alphabet);
        }
        removed
    }
}

/// Alphabets, assignments and the modification log over a fixed particle
/// id universe.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelStore {
    particles: BTreeSet<String>,
    alphabets: BTreeMap<AlphabetId, LabelAlphabet>,
    assignments: AssignmentTable,
    log: Vec<LogEntry>,
    next_id: u64,
}

impl LabelStore {
    pub fn new<I, S>(particles: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        LabelStore {
            particles: particles.into_iter().map(Into::into).collect(),
            alphabets: BTreeMap::new(),
            assignments: AssignmentTable::default(),
            log: Vec::new(),
            next_id: 1,
        }
    }

    pub fn particles(&self) -> &BTreeSet<String> {
        &self.particles
    }

    pub fn alphabets(&self) -> impl Iterator<Item = &LabelAlphabet> {
        self.alphabets.values()
    }

    pub fn alphabet(&self, id: AlphabetId) -> Result<&LabelAlphabet> {
        self.alphabets.get(&id).ok_or(Error::UnknownAlphabet(id))
    }

    pub fn alphabet_by_name(&self, name: &str) -> Result<&LabelAlphabet> {
        self.alphabets
            .values()
            .find(|a| a.name == name)
            .ok_or_else(|| Error::UnknownAlphabetName(name.to_string()))
    }

    pub fn assignments(&self) -> &AssignmentTable {
        &self.assignments
    }

    pub fn log(&self) -> &[LogEntry] {
        &self.log
    }

    pub fn label_of(&self, alphabet: AlphabetId, particle: &str) -> Option<LabelId> {
        self.assignments.get(alphabet, particle)
    }

    pub fn is_empty(&self) -> bool {
        self.alphabets.is_empty() && self.assignments.is_empty() && self.log.is_empty()
    }

    fn fresh_id(&mut self) -> u64 {
        let id = self.next_id;
        self.next_id += 1;
        id
    }

    /// Creates (`def.id == None`) or updates an alphabet.
    ///
    /// Removing a label that still has assignments is rejected unless
    /// `force` is set, in which case those assignments are dropped.
    pub fn upsert_alphabet(
        &mut self,
        def: AlphabetDef,
        force: bool,
        stamp: &Stamp,
    ) -> Result<LabelAlphabet> {
        if def.name.trim().is_empty() {
            return Err(Error::InvalidAlphabet("alphabet name is empty".into()));
        }
        if def.labels.is_empty() {
            return Err(Error::InvalidAlphabet(
                "an alphabet needs at least one label".into(),
            ));
        }
        if self
            .alphabets
            .values()
            .any(|a| a.name == def.name && Some(a.id) != def.id)
        {
            return Err(Error::DuplicateAlphabet(def.name));
        }
        let previous = match def.id {
            Some(id) => Some(self.alphabet(id)?.clone()),
            None => None,
        };
        let id = match &previous {
            Some(prev) => prev.id,
            None => AlphabetId(self.fresh_id()),
        };
        let mut labels = Vec::with_capacity(def.labels.len());
        for l in def.labels {
            let color = normalize_color(&l.color).ok_or_else(|| {
                Error::InvalidAlphabet(format!(
                    "invalid color `{}` for label `{}`",
                    l.color, l.name
                ))
            })?;
            let label_id = match (l.id, &previous) {
                (Some(lid), Some(prev)) if prev.label(lid).is_some() => lid,
                (Some(lid), _) => {
                    return Err(Error::UnknownLabel {
                        alphabet: id,
                        label: lid.to_string(),
                    })
                }
                (None, _) => LabelId(self.fresh_id()),
            };
            labels.push(Label {
                id: label_id,
                name: l.name,
                color,
                description: l.description,
            });
        }
        let alphabet = LabelAlphabet {
            id,
            name: def.name,
            labels,
            created_by: previous
                .as_ref()
                .map_or_else(|| stamp.who.clone(), |p| p.created_by.clone()),
            created_at: previous.as_ref().map_or(stamp.at, |p| p.created_at),
        };
        alphabet
            .check()
            .map_err(|(_, message)| Error::InvalidAlphabet(message))?;
        if let Some(prev) = &previous {
            for removed in prev
                .labels
                .iter()
                .filter(|l| alphabet.label(l.id).is_none())
            {
                let count = self
                    .assignments
                    .of(id)
                    .filter(|(_, lid)| *lid == removed.id)
                    .count();
                if count > 0 && !force {
                    return Err(Error::LabelInUse {
                        label: removed.name.clone(),
                        count,
                    });
                }
            }
        }
        self.commit(
            Op::Upsert {
                alphabet: alphabet.clone(),
                force,
            },
            stamp,
        )?;
        Ok(alphabet)
    }

    /// Sets the label of every given particle in `alphabet`. Returns the
    /// number of particles whose assignment changed.
    pub fn assign(
        &mut self,
        particles: &[String],
        alphabet: AlphabetId,
        label: LabelId,
        stamp: &Stamp,
    ) -> Result<usize> {
        let a = self.alphabet(alphabet)?;
        if a.label(label).is_none() {
            return Err(Error::UnknownLabel {
                alphabet,
                label: label.to_string(),
            });
        }
        if let Some(p) = particles
            .iter()
            .find(|p| !self.particles.contains(p.as_str()))
        {
            return Err(Error::UnknownParticle(p.clone()));
        }
        let particles: Vec<String> = particles
            .iter()
            .cloned()
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let changed = particles
            .iter()
            .filter(|p| self.assignments.get(alphabet, p) != Some(label))
            .count();
        self.commit(
            Op::Assign {
                alphabet,
                label,
                particles,
            },
            stamp,
        )?;
        Ok(changed)
    }

    /// Removes the assignments of the given particles in `alphabet`.
    /// Unlabeled or unknown particles are ignored.
    pub fn unassign(
        &mut self,
        particles: &[String],
        alphabet: AlphabetId,
        stamp: &Stamp,
    ) -> Result<usize> {
        self.alphabet(alphabet)?;
        let particles: Vec<String> = particles
            .iter()
            .filter(|p| self.assignments.get(alphabet, p).is_some())
            .cloned()
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let changed = particles.len();
        if changed > 0 {
            self.commit(
                Op::Unassign {
                    alphabet,
                    particles,
                },
                stamp,
            )?;
        }
        Ok(changed)
    }

    /// Exact preimage of a label, or the complement of all assignments for
    /// [`LabelQuery::Unlabeled`].
    pub fn query_by_label(
        &self,
        alphabet: AlphabetId,
        query: LabelQuery,
    ) -> Result<BTreeSet<String>> {
        let a = self.alphabet(alphabet)?;
        match query {
            LabelQuery::Label(label) => {
                if a.label(label).is_none() {
                    return Err(Error::UnknownLabel {
                        alphabet,
                        label: label.to_string(),
                    });
                }
                Ok(self
                    .assignments
                    .of(alphabet)
                    .filter(|(_, l)| *l == label)
                    .map(|(p, _)| p.to_string())
                    .collect())
            }
            LabelQuery::Unlabeled => Ok(self
                .particles
                .iter()
                .filter(|p| self.assignments.get(alphabet, p).is_none())
                .cloned()
                .collect()),
        }
    }

    pub fn export_snapshot(&self) -> Snapshot {
        Snapshot {
            alphabets: self.alphabets.values().cloned().collect(),
            assignments: self.assignments.rows(),
            log: self.log.clone(),
        }
    }

    /// Rebuilds a store by replaying `log` from empty.
    pub fn replay<I, S>(particles: I, log: &[LogEntry]) -> Result<LabelStore>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut store = LabelStore::new(particles);
        for (i, entry) in log.iter().enumerate() {
            store.apply_entry(entry).map_err(|e| Error::Snapshot {
                pointer: format!("/log/{i}"),
                message: e.to_string(),
            })?;
        }
        Ok(store)
    }

    /// Applies one recorded log entry on top of the current state. The entry
    /// must carry the next sequence number.
    pub fn apply_entry(&mut self, entry: &LogEntry) -> Result<()> {
        let expected = self.log.len() as u64 + 1;
        if entry.seq != expected {
            return Err(Error::Snapshot {
                pointer: "/seq".into(),
                message: format!("expected sequence number {expected}, found {}", entry.seq),
            });
        }
        self.apply(&entry.op)?;
        self.log.push(entry.clone());
        Ok(())
    }

    /// Imports a snapshot. An empty store takes the snapshot as is, log
    /// included; a non-empty store merges according to `policy` and records
    /// the merged state as one log entry.
    pub fn import_snapshot(
        &mut self,
        snapshot: &Snapshot,
        policy: MergePolicy,
        stamp: &Stamp,
    ) -> Result<()> {
        self.check_snapshot(snapshot)?;
        if self.is_empty() {
            let replayed = LabelStore::replay(self.particles.iter().cloned(), &snapshot.log)?;
            if replayed.alphabets.values().cloned().collect::<Vec<_>>() != snapshot.alphabets
                || replayed.assignments.rows() != sorted(&snapshot.assignments)
            {
                return Err(Error::Snapshot {
                    pointer: "/log".into(),
                    message: "replaying the log does not reproduce the alphabets and assignments"
                        .into(),
                });
            }
            *self = replayed;
            return Ok(());
        }

        let mut conflicts = Vec::new();
        let mut alphabets = self.alphabets.clone();
        for theirs in &snapshot.alphabets {
            match alphabets.get(&theirs.id) {
                Some(ours) if ours != theirs => {
                    conflicts.push(Conflict {
                        alphabet: theirs.id,
                        particle: None,
                        ours: None,
                        theirs: None,
                    });
                    if policy == MergePolicy::Theirs {
                        alphabets.insert(theirs.id, theirs.clone());
                    }
                }
                Some(_) => {}
                None => {
                    alphabets.insert(theirs.id, theirs.clone());
                }
            }
        }
        let mut names = BTreeSet::new();
        for a in alphabets.values() {
            if !names.insert(a.name.as_str()) {
                return Err(Error::DuplicateAlphabet(a.name.clone()));
            }
        }
        let mut merged = self.assignments.clone();
        for AssignmentRow(particle, alphabet, label) in &snapshot.assignments {
            match merged.get(*alphabet, particle) {
                Some(ours) if ours != *label => {
                    conflicts.push(Conflict {
                        alphabet: *alphabet,
                        particle: Some(particle.clone()),
                        ours: Some(ours),
                        theirs: Some(*label),
                    });
                    if policy == MergePolicy::Theirs {
                        merged.set(*alphabet, particle.clone(), *label);
                    }
                }
                Some(_) => {}
                None => {
                    merged.set(*alphabet, particle.clone(), *label);
                }
            }
        }
        if policy == MergePolicy::Reject && !conflicts.is_empty() {
            return Err(Error::MergeConflicts(conflicts));
        }
        let assignments: Vec<AssignmentRow> = merged
            .rows()
            .into_iter()
            .filter(|AssignmentRow(_, a, l)| {
                alphabets.get(a).is_some_and(|a| a.label(*l).is_some())
            })
            .collect();
        self.commit(
            Op::Restore {
                alphabets: alphabets.into_values().collect(),
                assignments,
            },
            stamp,
        )
    }

    fn check_snapshot(&self, snapshot: &Snapshot) -> Result<()> {
        let err = |pointer: String, message: String| Error::Snapshot { pointer, message };
        let mut by_id = BTreeMap::new();
        let mut names = BTreeSet::new();
        for (i, a) in snapshot.alphabets.iter().enumerate() {
            a.check()
                .map_err(|(p, m)| err(format!("/alphabets/{i}{p}"), m))?;
            if by_id.insert(a.id, a).is_some() {
                return Err(err(
                    format!("/alphabets/{i}/id"),
                    format!("duplicate alphabet id {}", a.id),
                ));
            }
            if !names.insert(a.name.as_str()) {
                return Err(err(
                    format!("/alphabets/{i}/name"),
                    format!("duplicate alphabet name `{}`", a.name),
                ));
            }
        }
        let mut seen = BTreeSet::new();
        for (i, AssignmentRow(particle, alphabet, label)) in snapshot.assignments.iter().enumerate()
        {
            if !self.particles.contains(particle) {
                return Err(err(
                    format!("/assignments/{i}/0"),
                    format!("unknown particle `{particle}`"),
                ));
            }
            let Some(a) = by_id.get(alphabet) else {
                return Err(err(
                    format!("/assignments/{i}/1"),
                    format!("unknown alphabet {alphabet}"),
                ));
            };
            if a.label(*label).is_none() {
                return Err(err(
                    format!("/assignments/{i}/2"),
                    format!("label {label} is not in alphabet {alphabet}"),
                ));
            }
            if !seen.insert((particle.as_str(), *alphabet)) {
                return Err(err(
                    format!("/assignments/{i}"),
                    format!(
                        "particle `{particle}` holds more than one label in alphabet {alphabet}"
                    ),
                ));
            }
        }
        for (i, entry) in snapshot.log.iter().enumerate() {
            if entry.seq != i as u64 + 1 {
                return Err(err(
                    format!("/log/{i}/seq"),
                    format!("expected sequence number {}", i + 1),
                ));
            }
        }
        Ok(())
    }

    fn commit(&mut self, op: Op, stamp: &Stamp) -> Result<()> {
        self.apply(&op)?;
        let seq = self.log.len() as u64 + 1;
        self.log.push(LogEntry {
            seq,
            who: stamp.who.clone(),
            at: stamp.at,
            op,
        });
        Ok(())
    }

    fn apply(&mut self, op: &Op) -> Result<()> {
        match op {
            Op::Upsert { alphabet, force } => {
                alphabet
                    .check()
                    .map_err(|(_, m)| Error::InvalidAlphabet(m))?;
                if self
                    .alphabets
                    .values()
                    .any(|a| a.name == alphabet.name && a.id != alphabet.id)
                {
                    return Err(Error::DuplicateAlphabet(alphabet.name.clone()));
                }
                let stale: Vec<String> = self
                    .assignments
                    .of(alphabet.id)
                    .filter(|(_, l)| alphabet.label(*l).is_none())
                    .map(|(p, _)| p.to_string())
                    .collect();
                if !stale.is_empty() && !force {
                    return Err(Error::LabelInUse {
                        label: alphabet.name.clone(),
                        count: stale.len(),
                    });
                }
                for p in &stale {
                    self.assignments.remove(alphabet.id, p);
                }
                self.bump_ids(core::iter::once(alphabet));
                self.alphabets.insert(alphabet.id, alphabet.clone());
            }
            Op::Assign {
                alphabet,
                label,
                particles,
            } => {
                let a = self.alphabet(*alphabet)?;
                if a.label(*label).is_none() {
                    return Err(Error::UnknownLabel {
                        alphabet: *alphabet,
                        label: label.to_string(),
                    });
                }
                if let Some(p) = particles
                    .iter()
                    .find(|p| !self.particles.contains(p.as_str()))
                {
                    return Err(Error::UnknownParticle(p.clone()));
                }
                for p in particles {
                    self.assignments.set(*alphabet, p.clone(), *label);
                }
            }
            Op::Unassign {
                alphabet,
                particles,
            } => {
                self.alphabet(*alphabet)?;
                for p in particles {
                    self.assignments.remove(*alphabet, p);
                }
            }
            Op::Restore {
                alphabets,
                assignments,
            } => {
                let mut table = AssignmentTable::default();
                let map: BTreeMap<AlphabetId, LabelAlphabet> =
                    alphabets.iter().map(|a| (a.id, a.clone())).collect();
                for AssignmentRow(p, a, l) in assignments {
                    if !map.get(a).is_some_and(|a| a.label(*l).is_some())
                        || !self.particles.contains(p)
                    {
                        return Err(Error::InvalidAlphabet(format!(
                            "restored assignment ({p}, {a}, {l}) is invalid"
                        )));
                    }
                    table.set(*a, p.clone(), *l);
                }
                self.bump_ids(alphabets.iter());
                self.alphabets = map;
                self.assignments = table;
            }
        }
        Ok(())
    }

    fn bump_ids<'a>(&mut self, alphabets: impl Iterator<Item = &'a LabelAlphabet>) {
        for a in alphabets {
            let max = a
                .labels
                .iter()
                .map(|l| l.id.0)
                .chain(core::iter::once(a.id.0))
                .max()
                .unwrap_or(0);
            self.next_id = self.next_id.max(max + 1);
        }
    }
}

fn sorted(rows: &[AssignmentRow]) -> Vec<AssignmentRow> {
    let mut rows = rows.to_vec();
    rows.sort();
    rows
}
