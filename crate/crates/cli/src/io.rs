//! CSV ingestion and artifact writing.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use resilience_core::{Arm, StudyAData, StudyBData};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, Result};

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Columns of one parsed file, in the order they were requested.
struct Table {
    columns: Vec<Vec<f64>>,
    groups: Vec<Arm>,
}

fn read_table(path: &Path, required: &[&str], forbidden: Option<(&str, &str)>) -> Result<Table> {
    let schema = |msg: String| CliError::schema(path, msg);
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(io) => CliError::io(path, io),
            other => schema(format!("{other:?}")),
        })?;
    let headers: Vec<String> = reader
        .headers()
        .map_err(|e| schema(e.to_string()))?
        .iter()
        .map(str::to_owned)
        .collect();
    if headers.iter().all(|h| h.is_empty()) {
        return Err(schema("missing header row".into()));
    }
    if let Some((name, why)) = forbidden {
        if headers.iter().any(|h| h == name) {
            return Err(schema(format!("column {name} is not allowed: {why}")));
        }
    }
    for (i, h) in headers.iter().enumerate() {
        if !required.contains(&h.as_str()) {
            return Err(schema(format!("unexpected column '{h}'")));
        }
        if headers[..i].contains(h) {
            return Err(schema(format!("duplicate column '{h}'")));
        }
    }
    let positions: Vec<usize> = required
        .iter()
        .map(|name| {
            headers
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| schema(format!("missing column '{name}'")))
        })
        .collect::<Result<_>>()?;

    let mut table = Table {
        columns: vec![Vec::new(); required.len() - 1],
        groups: Vec::new(),
    };
    for record in reader.records() {
        let record = record.map_err(|e| schema(e.to_string()))?;
        let line = record.position().map_or(0, |p| p.line());
        for (k, (&pos, &name)) in positions.iter().zip(required).enumerate() {
            let cell = &record[pos];
            let value: f64 = cell.parse().map_err(|_| {
                schema(format!(
                    "line {line}, column {name}: '{cell}' is not a number"
                ))
            })?;
            if !value.is_finite() {
                return Err(schema(format!(
                    "line {line}, column {name}: '{cell}' is not finite"
                )));
            }
            if k == 0 {
                let arm = (value.fract() == 0.0)
                    .then(|| Arm::from_label(value as i64))
                    .flatten()
                    .ok_or_else(|| {
                        schema(format!(
                            "line {line}, column {name}: expected 0 or 1, got '{cell}'"
                        ))
                    })?;
                table.groups.push(arm);
            } else {
                table.columns[k - 1].push(value);
            }
        }
    }
    Ok(table)
}

fn split(path: &Path, groups: &[Arm], values: &[f64]) -> Result<[Vec<f64>; 2]> {
    let mut out = [Vec::new(), Vec::new()];
    for (arm, v) in groups.iter().zip(values) {
        out[arm.index()].push(*v);
    }
    for arm in Arm::BOTH {
        if out[arm.index()].is_empty() {
            return Err(CliError::EmptyArm {
                path: path.to_path_buf(),
                arm: arm.name(),
            });
        }
    }
    Ok(out)
}

/// Study A: columns `group` (0 control, 1 treated), `s` and `y`, any order.
pub fn load_study_a(path: &Path) -> Result<StudyAData> {
    let t = read_table(path, &["group", "s", "y"], None)?;
    let [s0, s1] = split(path, &t.groups, &t.columns[0])?;
    let [y0, y1] = split(path, &t.groups, &t.columns[1])?;
    Ok(StudyAData::from_vectors(s0, y0, s1, y1)?)
}

/// Study B: columns `group` and `s`. An outcome column is refused outright.
pub fn load_study_b(path: &Path) -> Result<StudyBData> {
    let t = read_table(
        path,
        &["group", "s"],
        Some((
            "y",
            "Study B outcomes are unobserved and must not be supplied",
        )),
    )?;
    let [s0, s1] = split(path, &t.groups, &t.columns[0])?;
    Ok(StudyBData::new(s0, s1)?)
}

/// Digest of an input file, for the manifest.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputDigest {
    pub role: String,
    pub file_name: String,
    pub sha256: String,
}

pub fn digest_input(role: &str, path: &Path) -> Result<InputDigest> {
    let bytes = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
    Ok(InputDigest {
        role: role.into(),
        file_name: path
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default(),
        sha256: sha256_hex(&bytes),
    })
}

/// Output directory whose CSV files all open with the manifest digest.
pub struct Artifacts {
    dir: PathBuf,
    digest: String,
}

impl Artifacts {
    pub fn create(dir: &Path, manifest_sha256: String) -> Result<Self> {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        Ok(Artifacts {
            dir: dir.to_path_buf(),
            digest: manifest_sha256,
        })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    pub fn digest(&self) -> &str {
        &self.digest
    }

    /// Write `header` then one serialized tuple per row. Floats are written
    /// in shortest round-trip form.
    pub fn write_csv<R: Serialize>(
        &self,
        name: &str,
        header: &[&str],
        rows: impl IntoIterator<Item = R>,
    ) -> Result<()> {
        let path = self.path(name);
        let err = |e: csv::Error| CliError::io(&path, std::io::Error::other(e));
        let mut file = BufWriter::new(File::create(&path).map_err(|e| CliError::io(&path, e))?);
        writeln!(file, "# manifest_sha256={}", self.digest).map_err(|e| CliError::io(&path, e))?;
        let mut w = csv::WriterBuilder::new()
            .has_headers(false)
            .from_writer(file);
        w.write_record(header).map_err(err)?;
        for row in rows {
            w.serialize(row).map_err(err)?;
        }
        w.flush().map_err(|e| CliError::io(&path, e))
    }

    pub fn write_json<T: Serialize>(&self, name: &str, value: &T) -> Result<()> {
        write_json(&self.path(name), value)
    }
}

pub fn json_bytes<T: Serialize>(value: &T) -> Vec<u8> {
    let mut bytes = serde_json::to_vec_pretty(value).expect("plain data serializes");
    bytes.push(b'\n');
    bytes
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    std::fs::write(path, json_bytes(value)).map_err(|e| CliError::io(path, e))
}
