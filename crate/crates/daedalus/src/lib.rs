//! File formats, synthetic corpora, the HTTP service and the command line
//! around [`daedalus_core`].
//!
//! A dataset directory holds:
//!
//! ```text
//! manifest.json        schema, provenance, creation time, rows file name
//! particles.csv        id, image, then one column per attribute
//! images/              original particle images (PNG)
//! thumbs/              precomputed thumbnails: <row>.png and <row>.t.png
//! labels/              log.jsonl (append-only) and snapshot.json
//! projections/         persisted projection results (.bin)
//! truth.csv            ground-truth classes (synthetic corpora only)
//! ```

pub mod cli;
pub mod coords;
pub mod eval;
pub mod images;
pub mod labelio;
pub mod manifest;
pub mod schema;
pub mod service;
pub mod synth;

pub use daedalus_core as core;
