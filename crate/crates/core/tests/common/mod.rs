//! Small random datasets shared by the integration tests.
#![allow(dead_code)]

use std::collections::BTreeMap;

use daedalus_core::labels::{AlphabetDef, LabelAlphabet, LabelDef, LabelStore, Stamp};
use daedalus_core::model::{
    AttributeDescriptor, AttributeSchema, Kind, ParticleRecord, Provenance, Role, Value,
};
use daedalus_core::Dataset;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const LOTS: [&str; 4] = ["1", "2", "3", "4"];
pub const SUPPLIERS: [&str; 3] = ["A", "B", "C"];
pub const LABELS: [&str; 3] = ["round", "flake", "agglomerate"];

fn names(values: &[&str]) -> Vec<String> {
    values.iter().map(|s| s.to_string()).collect()
}

/// `n` particles with two categorical and two numeric attributes.
pub fn dataset(n: usize, seed: u64) -> Dataset {
    let schema = AttributeSchema::new(
        vec![
            AttributeDescriptor::categorical(
                "Lot",
                Role::ProductionContext,
                Kind::Ordinal,
                names(&LOTS),
            ),
            AttributeDescriptor::categorical(
                "Supplier",
                Role::ProductionContext,
                Kind::Categorical,
                names(&SUPPLIERS),
            ),
            AttributeDescriptor::numeric("Area", Role::Size, Some("um2")),
            AttributeDescriptor::numeric("Elongation", Role::Shape, None),
        ],
        "Elongation",
    )
    .unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let particles = (0..n)
        .map(|i| {
            let mut values = BTreeMap::new();
            values.insert(
                "Lot".to_string(),
                Value::Category(LOTS[rng.random_range(0..LOTS.len())].into()),
            );
            values.insert(
                "Supplier".to_string(),
                Value::Category(SUPPLIERS[rng.random_range(0..SUPPLIERS.len())].into()),
            );
            // integers keep bin and range boundaries exactly representable
            values.insert(
                "Area".to_string(),
                Value::Number(f64::from(rng.random_range(0..100u32))),
            );
            values.insert(
                "Elongation".to_string(),
                Value::Number(rng.random_range(1.0..3.0)),
            );
            ParticleRecord {
                id: format!("p{i:04}"),
                image: format!("images/p{i:04}.png"),
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

pub fn stamp() -> Stamp {
    Stamp::new("tester", 1_700_000_000_000)
}

pub fn shape_alphabet(store: &mut LabelStore) -> LabelAlphabet {
    let def = AlphabetDef {
        id: None,
        name: "Shape".into(),
        labels: vec![
            LabelDef::new(LABELS[0], "#1f77b4"),
            LabelDef::new(LABELS[1], "#ff7f0e"),
            LabelDef::new(LABELS[2], "#2ca02c"),
        ],
    };
    store.upsert_alphabet(def, false, &stamp()).unwrap()
}

/// A store over `dataset` with one alphabet and roughly half of the
/// particles labeled at random.
pub fn labeled_store(dataset: &Dataset, seed: u64) -> (LabelStore, LabelAlphabet) {
    let mut store = LabelStore::new(dataset.ids().map(String::from));
    let alphabet = shape_alphabet(&mut store);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for p in dataset.ids() {
        if rng.random_bool(0.5) {
            let label = alphabet.labels[rng.random_range(0..alphabet.labels.len())].id;
            store
                .assign(&[p.to_string()], alphabet.id, label, &stamp())
                .unwrap();
        }
    }
    (store, alphabet)
}
