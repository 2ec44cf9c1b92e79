//! The reference attribute schema shipped with the tool.
//!
//! Only the production-context attributes and Elongation are fixed by the
//! domain; the remaining shape and size attributes are an illustrative
//! choice of common particle-morphology measurements.

use daedalus_core::{AttributeSchema, Kind, Role};

const REFERENCE: &str = include_str!("../schema/reference.json");

pub const LOT_NUMBER: &str = "Lot Number";
pub const PRODUCTION_DATE: &str = "Production Date";
pub const SUPPLIER: &str = "Supplier";

/// Twelve attributes: 3 production context (2 ordinal, 1 categorical),
/// 3 shape and 6 size (all numeric).
pub fn reference_schema() -> AttributeSchema {
    serde_json::from_str(REFERENCE).expect("bundled reference schema is valid")
}

/// Names of the nine numeric image attributes in schema order.
pub fn image_attributes(schema: &AttributeSchema) -> Vec<String> {
    schema
        .descriptors()
        .iter()
        .filter(|d| d.kind == Kind::Numeric && matches!(d.role, Role::Shape | Role::Size))
        .map(|d| d.name.clone())
        .collect()
}

/// `Lot 001`, `Lot 002`, ...
pub fn lot_names(count: usize) -> Vec<String> {
    (1..=count).map(|i| format!("Lot {i:03}")).collect()
}

/// `A`, `B`, ..., `Z`, `AA`, `AB`, ...
pub fn supplier_names(count: usize) -> Vec<String> {
    (0..count)
        .map(|mut i| {
            let mut name = Vec::new();
            loop {
                name.push(b'A' + (i % 26) as u8);
                if i < 26 {
                    break;
                }
                i = i / 26 - 1;
            }
            name.reverse();
            String::from_utf8(name).expect("ascii")
        })
        .collect()
}
