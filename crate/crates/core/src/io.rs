//! CSV and manifest files. Every write goes to a temporary sibling first and is
//! renamed into place.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use faer::Mat;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::fem::FeVectorField;

/// Writes `bytes` to `path` via a temporary file in the same directory.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let name = path.file_name().ok_or_else(|| Error::InvalidArgument(format!("{} has no file name", path.display())))?;
    let tmp = dir.join(format!(".{}.tmp", name.to_string_lossy()));
    let mut f = fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
    f.write_all(bytes).and_then(|_| f.sync_all()).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

/// Formats floats with full round-trip precision.
pub fn fmt_f64(v: f64) -> String {
    if v.is_finite() {
        format!("{v:e}")
    } else if v.is_nan() {
        "nan".into()
    } else if v > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

/// Header plus rows of already formatted cells.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Table { header: header.iter().map(|s| s.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let wrap = |e: csv::Error| Error::InvalidArgument(format!("csv: {e}"));
        w.write_record(&self.header).map_err(wrap)?;
        for r in &self.rows {
            w.write_record(r).map_err(wrap)?;
        }
        w.into_inner().map_err(|e| Error::InvalidArgument(format!("csv: {e}")))
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_atomic(path, &self.to_bytes()?)
    }

    pub fn read(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::MissingArtifact(path.to_path_buf()));
        }
        let mut r = csv::Reader::from_path(path).map_err(|e| Error::format(path, e.to_string()))?;
        let header = r.headers().map_err(|e| Error::format(path, e.to_string()))?.iter().map(String::from).collect();
        let rows = r
            .records()
            .map(|rec| rec.map(|x| x.iter().map(String::from).collect()).map_err(|e| Error::format(path, e.to_string())))
            .collect::<Result<_>>()?;
        Ok(Table { header, rows })
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.header.iter().position(|h| h == name)
    }

    /// All cells of a numeric column.
    pub fn f64_column(&self, name: &str, path: &Path) -> Result<Vec<f64>> {
        let c = self.column(name).ok_or_else(|| Error::format(path, format!("no column `{name}`")))?;
        self.rows
            .iter()
            .map(|r| r[c].parse::<f64>().map_err(|e| Error::format(path, format!("column `{name}`: {e}"))))
            .collect()
    }
}

/// Dense matrix as CSV with columns `c0, c1, …`.
pub fn write_matrix(path: &Path, m: &Mat<f64>) -> Result<()> {
    let header: Vec<String> = (0..m.ncols()).map(|j| format!("c{j}")).collect();
    let mut t = Table { header, rows: Vec::with_capacity(m.nrows()) };
    for i in 0..m.nrows() {
        t.rows.push((0..m.ncols()).map(|j| fmt_f64(m[(i, j)])).collect());
    }
    t.write(path)
}

pub fn read_matrix(path: &Path) -> Result<Mat<f64>> {
    let t = Table::read(path)?;
    let vals: Vec<Vec<f64>> = t
        .rows
        .iter()
        .map(|r| r.iter().map(|c| c.parse::<f64>().map_err(|e| Error::format(path, e.to_string()))).collect())
        .collect::<Result<_>>()?;
    let ncols = t.header.len();
    if vals.iter().any(|r| r.len() != ncols) {
        return Err(Error::format(path, "ragged matrix"));
    }
    Ok(Mat::from_fn(vals.len(), ncols, |i, j| vals[i][j]))
}

/// Field sequence as a matrix with one column per state.
pub fn write_fields(path: &Path, fields: &[FeVectorField]) -> Result<()> {
    let rows = fields.first().map_or(0, |f| f.coeffs.len());
    write_matrix(path, &Mat::from_fn(rows, fields.len(), |i, j| fields[j].coeffs[i]))
}

pub fn read_fields(path: &Path) -> Result<Vec<FeVectorField>> {
    let m = read_matrix(path)?;
    Ok((0..m.ncols()).map(|j| FeVectorField::from_coeffs((0..m.nrows()).map(|i| m[(i, j)]).collect())).collect())
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub file: String,
    pub sha256: String,
}

/// Record of a run: resolved configuration, hashes of inputs and outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub config: String,
    pub config_sha256: String,
    pub inputs: Vec<ManifestEntry>,
    pub outputs: Vec<ManifestEntry>,
    /// Stage that failed, if the run did not complete.
    pub failed_stage: Option<String>,
}

impl Manifest {
    pub fn new(command: &str, config_toml: &str) -> Self {
        Manifest {
            command: command.into(),
            config: config_toml.into(),
            config_sha256: sha256_hex(config_toml.as_bytes()),
            inputs: Vec::new(),
            outputs: Vec::new(),
            failed_stage: None,
        }
    }

    pub fn add_input(&mut self, path: &Path) -> Result<()> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        self.inputs.push(ManifestEntry { file: path.display().to_string(), sha256: sha256_hex(&bytes) });
        Ok(())
    }

    /// Hashes every regular file of `dir` except the manifest itself, in name order.
    pub fn collect_outputs(&mut self, dir: &Path) -> Result<()> {
        let mut names: Vec<PathBuf> = fs::read_dir(dir)
            .map_err(|e| Error::io(dir, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.is_file() && p.file_name().is_some_and(|n| n != MANIFEST_NAME && !n.to_string_lossy().starts_with('.')))
            .collect();
        names.sort();
        self.outputs = names
            .iter()
            .map(|p| {
                let bytes = fs::read(p).map_err(|e| Error::io(p, e))?;
                Ok(ManifestEntry { file: p.file_name().unwrap().to_string_lossy().into_owned(), sha256: sha256_hex(&bytes) })
            })
            .collect::<Result<_>>()?;
        Ok(())
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        let json = serde_json::to_vec_pretty(self).map_err(|e| Error::InvalidArgument(format!("manifest: {e}")))?;
        write_atomic(&dir.join(MANIFEST_NAME), &json)
    }
}

pub const MANIFEST_NAME: &str = "manifest.json";
