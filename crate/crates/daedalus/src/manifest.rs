//! Dataset manifest: a JSON document with schema and provenance plus a CSV
//! file of particle rows (`id`, `image`, then attributes in schema order).

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use daedalus_core::model::{validate_dataset, ValidationReport};
use daedalus_core::{AttributeSchema, Dataset, Kind, ParticleRecord, Provenance, Value};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const ROWS_FILE: &str = "particles.csv";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub schema: AttributeSchema,
    pub provenance: Provenance,
    /// Unix time in milliseconds.
    pub created_at: i64,
    /// CSV file with the particle rows, relative to the manifest.
    #[serde(default = "default_rows")]
    pub rows: String,
}

fn default_rows() -> String {
    ROWS_FILE.to_string()
}

#[derive(Debug, thiserror::Error)]
pub enum IngestError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{path}: line {line}: {message}")]
    Parse {
        path: PathBuf,
        line: u64,
        message: String,
    },
    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        source: serde_json::Error,
    },
    #[error("dataset has {} violation(s); first: {}", .0.violations.len(), .0.violations.first().map(|v| v.to_string()).unwrap_or_default())]
    Validation(ValidationReport),
}

impl IngestError {
    fn io(path: &Path, source: io::Error) -> Self {
        IngestError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

/// Accepts either a manifest file or a directory containing `manifest.json`.
pub fn manifest_path(path: &Path) -> PathBuf {
    if path.is_dir() {
        path.join(MANIFEST_FILE)
    } else {
        path.to_path_buf()
    }
}

pub fn read_manifest(path: &Path) -> Result<Manifest, IngestError> {
    let path = manifest_path(path);
    let file = File::open(&path).map_err(|e| IngestError::io(&path, e))?;
    serde_json::from_reader(BufReader::new(file))
        .map_err(|source| IngestError::Json { path, source })
}

/// Loads and validates a dataset. Row order is CSV order.
pub fn load_dataset(path: &Path) -> Result<Dataset, IngestError> {
    let manifest_file = manifest_path(path);
    let manifest = read_manifest(&manifest_file)?;
    let rows_path = manifest_file
        .parent()
        .unwrap_or(Path::new("."))
        .join(&manifest.rows);
    let file = File::open(&rows_path).map_err(|e| IngestError::io(&rows_path, e))?;
    let particles = parse_rows(&manifest.schema, BufReader::new(file), &rows_path)?;
    let dataset = Dataset {
        schema: manifest.schema,
        particles,
        provenance: manifest.provenance,
        created_at: manifest.created_at,
    };
    let report = validate_dataset(&dataset);
    if !report.is_valid() {
        return Err(IngestError::Validation(report));
    }
    Ok(dataset)
}

fn parse_rows(
    schema: &AttributeSchema,
    reader: impl io::Read,
    path: &Path,
) -> Result<Vec<ParticleRecord>, IngestError> {
    let parse = |line: u64, message: String| IngestError::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut csv = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(reader);
    let headers = csv.headers().map_err(|e| parse(1, e.to_string()))?.clone();
    let expected: Vec<&str> = ["id", "image"].into_iter().chain(schema.names()).collect();
    let found: Vec<&str> = headers.iter().collect();
    if found != expected {
        return Err(parse(
            1,
            format!("expected header {expected:?}, found {found:?}"),
        ));
    }
    let descriptors = schema.descriptors();
    let mut particles = Vec::new();
    for record in csv.records() {
        let record =
            record.map_err(|e| parse(e.position().map_or(0, |p| p.line()), e.to_string()))?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != expected.len() {
            return Err(parse(
                line,
                format!(
                    "expected {} columns, found {}",
                    expected.len(),
                    record.len()
                ),
            ));
        }
        let mut values = BTreeMap::new();
        for (d, field) in descriptors.iter().zip(record.iter().skip(2)) {
            let value = match d.kind {
                Kind::Numeric => Value::Number(field.trim().parse::<f64>().map_err(|_| {
                    parse(line, format!("`{}`: `{field}` is not a number", d.name))
                })?),
                Kind::Categorical | Kind::Ordinal => Value::Category(field.to_string()),
            };
            values.insert(d.name.clone(), value);
        }
        particles.push(ParticleRecord {
            id: record[0].to_string(),
            image: record[1].to_string(),
            values,
        });
    }
    Ok(particles)
}

/// Writes `manifest.json` and `particles.csv` into `dir` (created if
/// missing). Numbers use the shortest representation that parses back to
/// the same `f64`.
pub fn write_dataset(dataset: &Dataset, dir: &Path) -> Result<PathBuf, IngestError> {
    fs::create_dir_all(dir).map_err(|e| IngestError::io(dir, e))?;
    let manifest = Manifest {
        schema: dataset.schema.clone(),
        provenance: dataset.provenance,
        created_at: dataset.created_at,
        rows: ROWS_FILE.to_string(),
    };
    let manifest_file = dir.join(MANIFEST_FILE);
    let json = serde_json::to_vec_pretty(&manifest).map_err(|source| IngestError::Json {
        path: manifest_file.clone(),
        source,
    })?;
    fs::write(&manifest_file, json).map_err(|e| IngestError::io(&manifest_file, e))?;

    let rows_path = dir.join(ROWS_FILE);
    let file = File::create(&rows_path).map_err(|e| IngestError::io(&rows_path, e))?;
    write_rows(dataset, BufWriter::new(file)).map_err(|e| IngestError::io(&rows_path, e))?;
    Ok(manifest_file)
}

fn write_rows(dataset: &Dataset, out: impl Write) -> io::Result<()> {
    let mut csv = csv::Writer::from_writer(out);
    let names: Vec<&str> = dataset.schema.names().collect();
    csv.write_record(["id", "image"].into_iter().chain(names.iter().copied()))?;
    let mut row: Vec<String> = Vec::with_capacity(names.len() + 2);
    for p in &dataset.particles {
        row.clear();
        row.push(p.id.clone());
        row.push(p.image.clone());
        row.extend(names.iter().map(|n| {
            p.values
                .get(*n)
                .map(ToString::to_string)
                .unwrap_or_default()
        }));
        csv.write_record(&row)?;
    }
    csv.flush()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schema::reference_schema;

    fn tiny() -> Dataset {
        let schema = reference_schema();
        let particles = (0..3)
            .map(|i| {
                let mut values = BTreeMap::new();
                for d in schema.descriptors() {
                    let v = match d.kind {
                        Kind::Numeric => Value::Number(0.1 * (i as f64 + 1.0) + 1.0 / 3.0),
                        _ => Value::Category(d.category_order()[i].clone()),
                    };
                    values.insert(d.name.clone(), v);
                }
                ParticleRecord {
                    id: format!("p{i}"),
                    image: format!("images/p{i}.png"),
                    values,
                }
            })
            .collect();
        Dataset {
            schema,
            particles,
            provenance: Provenance::Real,
            created_at: 42,
        }
    }

    #[test]
    fn round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let d = tiny();
        write_dataset(&d, dir.path()).unwrap();
        assert_eq!(load_dataset(dir.path()).unwrap(), d);
    }

    #[test]
    fn header_only_is_empty() {
        let dir = tempfile::tempdir().unwrap();
        let d = Dataset {
            particles: vec![],
            ..tiny()
        };
        write_dataset(&d, dir.path()).unwrap();
        assert_eq!(load_dataset(dir.path()).unwrap().len(), 0);
    }

    #[test]
    fn short_row_names_row_two() {
        let dir = tempfile::tempdir().unwrap();
        write_dataset(&tiny(), dir.path()).unwrap();
        let csv = fs::read_to_string(dir.path().join(ROWS_FILE)).unwrap();
        let mut lines: Vec<String> = csv.lines().map(String::from).collect();
        let cut = lines[1].rfind(',').unwrap();
        lines[1].truncate(cut);
        fs::write(dir.path().join(ROWS_FILE), lines.join("\n") + "\n").unwrap();
        match load_dataset(dir.path()) {
            Err(IngestError::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn bad_category_is_a_validation_error() {
        let dir = tempfile::tempdir().unwrap();
        let mut d = tiny();
        d.particles[1]
            .values
            .insert("Supplier".into(), Value::Category("Z".into()));
        write_dataset(&d, dir.path()).unwrap();
        match load_dataset(dir.path()) {
            Err(IngestError::Validation(r)) => {
                assert_eq!(r.violations.len(), 1);
                assert_eq!(r.violations[0].particle, "p1");
            }
            other => panic!("unexpected {other:?}"),
        }
    }
}
