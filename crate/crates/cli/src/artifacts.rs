//! On-disk layout shared by the pipeline stages.
//!
//! A sample directory holds `params.csv` (one row per parameter) and, per sample,
//! `sample_NNNN_m.csv` (and `_v.csv`, `_lambda.csv` for high-fidelity runs), each
//! a matrix with one column per time step.

use std::path::{Path, PathBuf};

use faer::Mat;
use pllg_core::experiments::Bases;
use pllg_core::io::{fmt_f64, read_fields, read_matrix, write_fields, write_matrix, Manifest, Table};
use pllg_core::linalg;
use pllg_core::pod::{Quantity, ReducedBasis};
use pllg_core::{Error, FeScalarField, FeVectorField, GramSet, ParamVector, Result, Trajectory};

pub const PARAMS: &str = "params.csv";
pub const SINGULAR_VALUES: &str = "singular_values.csv";

pub fn sample_file(dir: &Path, sample: usize, what: &str) -> PathBuf {
    dir.join(format!("sample_{sample:04}_{what}.csv"))
}

pub fn write_params(dir: &Path, params: &[ParamVector]) -> Result<()> {
    let s = params.first().map_or(0, ParamVector::dim);
    let header: Vec<String> = std::iter::once("sample".to_string()).chain((1..=s).map(|i| format!("y{i}"))).collect();
    let mut t = Table { header, rows: Vec::new() };
    for (i, y) in params.iter().enumerate() {
        t.push(std::iter::once(i.to_string()).chain(y.y.iter().map(|v| fmt_f64(*v))).collect());
    }
    t.write(&dir.join(PARAMS))
}

pub fn read_params(dir: &Path) -> Result<Vec<ParamVector>> {
    let path = dir.join(PARAMS);
    let t = Table::read(&path)?;
    t.rows
        .iter()
        .map(|r| {
            let y = r[1..].iter().map(|c| c.parse::<f64>().map_err(|e| Error::format(&path, e.to_string()))).collect::<Result<_>>()?;
            ParamVector::new(y)
        })
        .collect()
}

pub fn write_trajectory(dir: &Path, sample: usize, t: &Trajectory) -> Result<()> {
    write_fields(&sample_file(dir, sample, "m"), &t.magnetizations)?;
    write_fields(&sample_file(dir, sample, "v"), &t.velocities)?;
    let l = &t.multipliers;
    let rows = l.first().map_or(0, |f| f.coeffs.len());
    write_matrix(&sample_file(dir, sample, "lambda"), &Mat::from_fn(rows, l.len(), |i, j| l[j].coeffs[i]))
}

fn check_rows(path: &Path, fields: &[FeVectorField], rows: usize) -> Result<()> {
    match fields.iter().find(|f| f.coeffs.len() != rows) {
        Some(f) => Err(Error::format(path, format!("{} rows, the configured mesh needs {rows}", f.coeffs.len()))),
        None => Ok(()),
    }
}

/// Magnetization sequence of one sample, checked against the mesh size.
pub fn read_magnetizations(dir: &Path, sample: usize, n_nodes: usize) -> Result<Vec<FeVectorField>> {
    let path = sample_file(dir, sample, "m");
    let m = read_fields(&path)?;
    check_rows(&path, &m, 3 * n_nodes)?;
    Ok(m)
}

pub fn read_trajectory(dir: &Path, sample: usize, n_nodes: usize) -> Result<Trajectory> {
    let magnetizations = read_magnetizations(dir, sample, n_nodes)?;
    let vpath = sample_file(dir, sample, "v");
    let velocities = read_fields(&vpath)?;
    check_rows(&vpath, &velocities, 3 * n_nodes)?;
    let lpath = sample_file(dir, sample, "lambda");
    let lm = read_matrix(&lpath)?;
    if lm.ncols() > 0 && lm.nrows() != n_nodes {
        return Err(Error::format(&lpath, format!("{} rows, the configured mesh needs {n_nodes}", lm.nrows())));
    }
    let lambda: Vec<FeScalarField> = (0..lm.ncols()).map(|j| FeScalarField { coeffs: linalg::col_to_vec(lm.as_ref(), j) }).collect();
    if velocities.len() + 1 != magnetizations.len() || lambda.len() != velocities.len() {
        return Err(Error::format(dir, format!("sample {sample}: inconsistent step counts")));
    }
    let steps = velocities.len();
    Ok(Trajectory {
        magnetizations,
        velocities,
        multipliers: lambda,
        infsup: vec![f64::NAN; steps],
    })
}

pub fn basis_file(dir: &Path, q: Quantity) -> PathBuf {
    dir.join(format!("basis_{}.csv", q.name()))
}

pub fn write_basis(dir: &Path, q: Quantity, b: &ReducedBasis) -> Result<()> {
    write_matrix(&basis_file(dir, q), &b.phi)
}

/// Reads the truncated bases written by `offline-pod`.
pub fn read_bases(dir: &Path, grams: &GramSet) -> Result<Bases> {
    let sv_path = dir.join(SINGULAR_VALUES);
    let sv = Table::read(&sv_path)?;
    let load = |q: Quantity| -> Result<ReducedBasis> {
        let col = format!("sigma_{}", q.name());
        let c = sv.column(&col).ok_or_else(|| Error::format(&sv_path, format!("no column `{col}`")))?;
        let singular_values = sv
            .rows
            .iter()
            .map(|r| &r[c])
            .filter(|cell| !cell.is_empty())
            .map(|cell| cell.parse::<f64>().map_err(|e| Error::format(&sv_path, e.to_string())))
            .collect::<Result<_>>()?;
        let path = basis_file(dir, q);
        let phi = read_matrix(&path)?;
        let gram = q.gram(grams).clone();
        if phi.nrows() != gram.nrows() {
            return Err(Error::format(&path, format!("{} rows, the configured mesh needs {}", phi.nrows(), gram.nrows())));
        }
        Ok(ReducedBasis { phi, singular_values, gram })
    };
    Ok(Bases { m: load(Quantity::Magnetization)?, v: load(Quantity::Velocity)?, lambda: load(Quantity::Multiplier)? })
}

/// Adds every CSV file of an input directory to the manifest.
pub fn add_dir_inputs(manifest: &mut Manifest, dir: &Path) -> Result<()> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .collect();
    files.sort();
    files.iter().try_for_each(|f| manifest.add_input(f))
}
