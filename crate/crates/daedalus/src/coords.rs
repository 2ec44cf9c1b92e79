//! Binary coordinate files for projections and layouts.
//!
//! ```text
//! b"DCRD"                 magic
//! u32 (little endian)     length of the JSON header in bytes
//! JSON header             rows, dataset version, kind-specific metadata
//! rows × 2 × f32 (LE)     x, y per particle in dataset row order
//! ```
//!
//! The header and the float block are written byte-for-byte deterministically,
//! so two identical computations produce identical files.

use std::fs;
use std::io;
use std::path::Path;

use serde::{Deserialize, Serialize};

use daedalus_core::layout::{BinSpec, ColumnHeader, GridLayout, LayoutConfig};
use daedalus_core::projection::ProjectionResult;
use daedalus_core::FacetKey;

pub const MAGIC: &[u8; 4] = b"DCRD";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoordHeader {
    pub rows: usize,
    pub dataset_version: String,
    #[serde(flatten)]
    pub kind: CoordKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum CoordKind {
    /// Coordinates are left empty in the header; they live in the float block.
    Projection(ProjectionResult),
    Layout {
        attribute: FacetKey,
        columns: Vec<ColumnHeader>,
        config: LayoutConfig,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        bins: Option<BinSpec>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoordFile {
    pub header: CoordHeader,
    pub coordinates: Vec<[f32; 2]>,
}

#[derive(Debug, thiserror::Error)]
pub enum CoordError {
    #[error("not a coordinate file (bad magic)")]
    Magic,
    #[error("coordinate file truncated: {0}")]
    Truncated(&'static str),
    #[error("coordinate header: {0}")]
    Header(#[from] serde_json::Error),
    #[error("header says {expected} rows but the file holds {actual}")]
    Rows { expected: usize, actual: usize },
    #[error(transparent)]
    Io(#[from] io::Error),
}

impl CoordFile {
    pub fn projection(result: ProjectionResult, dataset_version: &str) -> Self {
        let coordinates = result.coordinates.clone();
        let header = CoordHeader {
            rows: coordinates.len(),
            dataset_version: dataset_version.to_string(),
            kind: CoordKind::Projection(ProjectionResult {
                coordinates: Vec::new(),
                ..result
            }),
        };
        CoordFile {
            header,
            coordinates,
        }
    }

    pub fn layout(layout: &GridLayout, bins: Option<BinSpec>, dataset_version: &str) -> Self {
        let coordinates: Vec<[f32; 2]> = layout
            .coordinates()
            .iter()
            .map(|p| [p[0] as f32, p[1] as f32])
            .collect();
        let header = CoordHeader {
            rows: coordinates.len(),
            dataset_version: dataset_version.to_string(),
            kind: CoordKind::Layout {
                attribute: layout.attribute.clone(),
                columns: layout.columns.clone(),
                config: layout.config.clone(),
                bins,
            },
        };
        CoordFile {
            header,
            coordinates,
        }
    }

    /// The projection result with coordinates filled in, if this file holds one.
    pub fn into_projection(self) -> Option<ProjectionResult> {
        match self.header.kind {
            CoordKind::Projection(r) => Some(ProjectionResult {
                coordinates: self.coordinates,
                ..r
            }),
            CoordKind::Layout { .. } => None,
        }
    }

    pub fn encode(&self) -> Vec<u8> {
        let header = serde_json::to_vec(&self.header).expect("header serializes");
        let mut out = Vec::with_capacity(8 + header.len() + 8 * self.coordinates.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(header.len() as u32).to_le_bytes());
        out.extend_from_slice(&header);
        out.extend_from_slice(&encode_coordinates(&self.coordinates));
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, CoordError> {
        if bytes.len() < 4 || &bytes[..4] != MAGIC {
            return Err(CoordError::Magic);
        }
        let len_bytes: [u8; 4] = bytes
            .get(4..8)
            .ok_or(CoordError::Truncated("header length"))?
            .try_into()
            .unwrap();
        let len = u32::from_le_bytes(len_bytes) as usize;
        let header_bytes = bytes
            .get(8..8 + len)
            .ok_or(CoordError::Truncated("header"))?;
        let header: CoordHeader = serde_json::from_slice(header_bytes)?;
        let body = &bytes[8 + len..];
        if body.len() % 8 != 0 {
            return Err(CoordError::Truncated("coordinate block"));
        }
        if body.len() / 8 != header.rows {
            return Err(CoordError::Rows {
                expected: header.rows,
                actual: body.len() / 8,
            });
        }
        Ok(CoordFile {
            header,
            coordinates: decode_coordinates(body),
        })
    }

    pub fn read(path: &Path) -> Result<Self, CoordError> {
        Self::decode(&fs::read(path)?)
    }

    pub fn write(&self, path: &Path) -> io::Result<()> {
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            fs::create_dir_all(parent)?;
        }
        fs::write(path, self.encode())
    }
}

/// Interleaved little-endian `f32` pairs.
pub fn encode_coordinates(coordinates: &[[f32; 2]]) -> Vec<u8> {
    coordinates
        .iter()
        .flat_map(|p| p.iter().flat_map(|v| v.to_le_bytes()))
        .collect()
}

pub fn decode_coordinates(bytes: &[u8]) -> Vec<[f32; 2]> {
    bytes
        .chunks_exact(8)
        .map(|c| {
            [
                f32::from_le_bytes(c[..4].try_into().unwrap()),
                f32::from_le_bytes(c[4..].try_into().unwrap()),
            ]
        })
        .collect()
}
