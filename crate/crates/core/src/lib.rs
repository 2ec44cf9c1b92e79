//! Core engine for exploring and labeling large particle-image collections.
//!
//! Everything in this crate is a pure computation over immutable inputs, with
//! the exception of [`labels::LabelStore`], which is the single stateful
//! component. The crate only needs `alloc`; file formats, images, the HTTP
//! service and the command line live in the `daedalus` companion crate.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;
#[cfg(any(test, feature = "std"))]
extern crate std;

pub mod error;
pub mod facet;
pub mod features;
pub mod filter;
pub mod labels;
pub mod layout;
pub mod model;
pub mod projection;
pub mod selection;

mod hash;

pub use error::{Error, Result};
pub use facet::FacetKey;
pub use model::{
    AttributeDescriptor, AttributeSchema, Dataset, Kind, ParticleRecord, Provenance, Role, Value,
};
