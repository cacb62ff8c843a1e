//! Error metrics and physical diagnostics.
//!
//! Every `L²_μ(Γ, L²(I, H¹))`-type norm is the discrete double sum over test samples
//! and time steps with uniform weights.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fem::{FeVectorField, GramSet, QuadratureRule, TriMesh};
use crate::linalg;
use crate::rom::RomTrajectory;
use crate::tps::Trajectory;

/// How [`ErrorReport::aggregate`] reduces the per-step values.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Reduction {
    /// Root mean square over all samples and steps.
    Rms,
    /// Minimum over all samples and steps.
    Min,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorReport {
    pub metric: String,
    pub norm: String,
    pub reduction: Reduction,
    /// One row per sample, one entry per time step.
    pub per_step: Vec<Vec<f64>>,
    pub aggregate: f64,
}

impl ErrorReport {
    pub fn new(metric: &str, norm: &str, reduction: Reduction, per_step: Vec<Vec<f64>>) -> Result<Self> {
        let aggregate = reduce(reduction, &per_step)?;
        Ok(ErrorReport { metric: metric.into(), norm: norm.into(), reduction, per_step, aggregate })
    }

    pub fn n_samples(&self) -> usize {
        self.per_step.len()
    }

    /// Sample-averaged (RMS or min) value at every step.
    pub fn step_profile(&self) -> Vec<f64> {
        let n = self.per_step.iter().map(Vec::len).min().unwrap_or(0);
        (0..n)
            .map(|k| {
                let col: Vec<Vec<f64>> = self.per_step.iter().map(|r| vec![r[k]]).collect();
                reduce(self.reduction, &col).unwrap_or(f64::NAN)
            })
            .collect()
    }
}

fn reduce(reduction: Reduction, rows: &[Vec<f64>]) -> Result<f64> {
    let count: usize = rows.iter().map(Vec::len).sum();
    if count == 0 {
        return Err(Error::InvalidArgument("no values to reduce".into()));
    }
    let all = rows.iter().flatten().copied();
    Ok(match reduction {
        Reduction::Rms => (all.map(|v| v * v).sum::<f64>() / count as f64).sqrt(),
        Reduction::Min => all.fold(f64::INFINITY, f64::min),
    })
}

/// H¹ distances `‖mⁿ_h − mⁿ_J‖` for `n = 1 … N_T`.
pub fn galerkin_step_errors(hf: &Trajectory, rom: &RomTrajectory, grams: &GramSet) -> Result<Vec<f64>> {
    let (a, b) = (&hf.magnetizations, &rom.full_magnetizations);
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch(format!("time grids differ: {} vs {} states", a.len(), b.len())));
    }
    a.iter()
        .zip(b)
        .skip(1)
        .map(|(x, y)| {
            if x.coeffs.len() != y.coeffs.len() {
                return Err(Error::DimensionMismatch("fields live on different meshes".into()));
            }
            Ok(grams.h1_norm(&linalg::sub(&x.coeffs, &y.coeffs)))
        })
        .collect()
}

/// `sqrt( (1/(M·N_T)) Σ_m Σ_n ‖mⁿ_h(y_m) − mⁿ_J(y_m)‖²_{H¹} )`
pub fn galerkin_pod_error(hf: &[Trajectory], rom: &[RomTrajectory], grams: &GramSet) -> Result<f64> {
    Ok(galerkin_pod_report(hf, rom, grams)?.aggregate)
}

pub fn galerkin_pod_report(hf: &[Trajectory], rom: &[RomTrajectory], grams: &GramSet) -> Result<ErrorReport> {
    if hf.len() != rom.len() {
        return Err(Error::DimensionMismatch(format!("{} reference vs {} reduced samples", hf.len(), rom.len())));
    }
    let rows = hf.iter().zip(rom).map(|(h, r)| galerkin_step_errors(h, r, grams)).collect::<Result<Vec<_>>>()?;
    ErrorReport::new("galerkin_pod", "H1", Reduction::Rms, rows)
}

/// Same double sum for arbitrary field sequences (states `1 … N_T` are compared).
pub fn sequence_error(reference: &[Vec<FeVectorField>], approx: &[Vec<FeVectorField>], grams: &GramSet) -> Result<f64> {
    if reference.len() != approx.len() {
        return Err(Error::DimensionMismatch("sample counts differ".into()));
    }
    let mut rows = Vec::with_capacity(reference.len());
    for (r, a) in reference.iter().zip(approx) {
        if r.len() != a.len() {
            return Err(Error::DimensionMismatch(format!("time grids differ: {} vs {} states", r.len(), a.len())));
        }
        rows.push(r.iter().zip(a).skip(1).map(|(x, y)| grams.h1_norm(&linalg::sub(&x.coeffs, &y.coeffs))).collect());
    }
    reduce(Reduction::Rms, &rows)
}

/// `‖a − b‖_{H¹}`
pub fn h1_error(a: &FeVectorField, b: &FeVectorField, grams: &GramSet) -> Result<f64> {
    if a.coeffs.len() != b.coeffs.len() || a.coeffs.len() != grams.q_vec.nrows() {
        return Err(Error::DimensionMismatch("fields and Gram matrix disagree".into()));
    }
    Ok(grams.h1_norm(&linalg::sub(&a.coeffs, &b.coeffs)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhysicalDiagnostics {
    /// `∫_D |1 − |m|²| dx`
    pub unit_modulus_err: f64,
    /// `sqrt(mᵀ K m)`
    pub dirichlet_energy: f64,
    /// `∫_D m_z dx`
    pub avg_mz: f64,
}

pub fn physical_diagnostics(mesh: &TriMesh, m: &FeVectorField, grams: &GramSet) -> Result<PhysicalDiagnostics> {
    let n = mesh.n_nodes();
    if m.n_nodes() != n || grams.n_nodes() != n {
        return Err(Error::DimensionMismatch("field, mesh and Gram matrices disagree".into()));
    }
    let quad = QuadratureRule::degree4();
    let mut unit = 0.0;
    for el in mesh.elements() {
        for (p, w) in quad.points.iter().zip(&quad.weights) {
            let v = m.eval(&el, p);
            unit += w * el.area * (1.0 - v.iter().map(|c| c * c).sum::<f64>()).abs();
        }
    }
    let dirichlet_energy = grams.stiff_vec.bilinear(&m.coeffs, &m.coeffs).max(0.0).sqrt();
    let avg_mz = linalg::dot(&grams.mass_scalar.row_sums(), &m.coeffs[2 * n..]);
    Ok(PhysicalDiagnostics { unit_modulus_err: unit, dirichlet_energy, avg_mz })
}

/// Least-squares slope of `log err` against `log x`.
pub fn rate_fit(xs: &[f64], errs: &[f64]) -> Result<f64> {
    if xs.len() != errs.len() || xs.len() < 2 {
        return Err(Error::InvalidArgument("rate fit needs at least two matching points".into()));
    }
    if xs.iter().chain(errs).any(|&v| !(v > 0.0 && v.is_finite())) {
        return Err(Error::InvalidArgument("rate fit needs positive finite inputs".into()));
    }
    let lx: Vec<f64> = xs.iter().map(|v| v.ln()).collect();
    let le: Vec<f64> = errs.iter().map(|v| v.ln()).collect();
    let k = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / k;
    let me = le.iter().sum::<f64>() / k;
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::InvalidArgument("rate fit needs distinct abscissae".into()));
    }
    let sxe: f64 = lx.iter().zip(&le).map(|(x, e)| (x - mx) * (e - me)).sum();
    Ok(sxe / sxx)
}

/// Width of the histogram bins on `[−1, 1]`.
pub const HISTOGRAM_BIN_WIDTH: f64 = 0.1;

/// Counts in the 20 bins `[−1, −0.9), …, [0.9, 1]`; values outside are clamped.
pub fn histogram(values: &[f64]) -> Vec<usize> {
    let bins = (2.0 / HISTOGRAM_BIN_WIDTH).round() as usize;
    let mut out = vec![0; bins];
    for &v in values {
        let k = ((v + 1.0) / HISTOGRAM_BIN_WIDTH).floor();
        let k = if k.is_nan() { 0 } else { (k.max(0.0) as usize).min(bins - 1) };
        out[k] += 1;
    }
    out
}

/// Left edges of the histogram bins.
pub fn histogram_edges() -> Vec<f64> {
    let bins = (2.0 / HISTOGRAM_BIN_WIDTH).round() as usize;
    (0..bins).map(|k| -1.0 + k as f64 * HISTOGRAM_BIN_WIDTH).collect()
}
