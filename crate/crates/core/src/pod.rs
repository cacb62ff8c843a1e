//! Proper orthogonal decomposition in a Gram-weighted inner product.
//!
//! With `Q = L Lᵀ` the weighted SVD is the plain SVD of `Lᵀ D / √N`; the basis is
//! `Φ = L⁻ᵀ U`, which is `Q`-orthonormal.

use faer::Mat;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fem::GramSet;
use crate::linalg::{self, SparseMatrix};
use crate::tps::Trajectory;

/// Which field sequence of a trajectory is compressed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Quantity {
    Magnetization,
    Velocity,
    Multiplier,
}

impl Quantity {
    pub const ALL: [Quantity; 3] = [Quantity::Magnetization, Quantity::Velocity, Quantity::Multiplier];

    pub fn name(self) -> &'static str {
        match self {
            Quantity::Magnetization => "m",
            Quantity::Velocity => "v",
            Quantity::Multiplier => "lambda",
        }
    }

    /// H¹ for the vector quantities, L² for the multiplier.
    pub fn gram(self, grams: &GramSet) -> &SparseMatrix {
        match self {
            Quantity::Magnetization | Quantity::Velocity => &grams.q_vec,
            Quantity::Multiplier => &grams.mass_scalar,
        }
    }

    pub fn norm_name(self) -> &'static str {
        match self {
            Quantity::Multiplier => "L2",
            _ => "H1",
        }
    }
}

/// The `N_T` columns a trajectory contributes for `quantity`: `m̂¹…m̂^{N_T}`,
/// `v⁰…v^{N_T−1}` or `λ⁰…λ^{N_T−1}`.
pub fn snapshot_columns(traj: &Trajectory, quantity: Quantity) -> Vec<&[f64]> {
    match quantity {
        Quantity::Magnetization => traj.magnetizations[1..].iter().map(|m| m.coeffs.as_slice()).collect(),
        Quantity::Velocity => traj.velocities.iter().map(|v| v.coeffs.as_slice()).collect(),
        Quantity::Multiplier => traj.multipliers.iter().map(|l| l.coeffs.as_slice()).collect(),
    }
}

#[derive(Debug, Clone)]
pub struct SnapshotSet {
    /// `N_dof × N` snapshot matrix.
    pub data: Mat<f64>,
    pub gram: SparseMatrix,
    /// `(sample, time step)` of every column.
    pub labels: Vec<(usize, usize)>,
}

impl SnapshotSet {
    pub fn new(data: Mat<f64>, gram: SparseMatrix, labels: Vec<(usize, usize)>) -> Result<Self> {
        if data.ncols() == 0 {
            return Err(Error::InvalidArgument("snapshot set is empty".into()));
        }
        if gram.nrows() != data.nrows() || gram.ncols() != data.nrows() {
            return Err(Error::DimensionMismatch(format!(
                "gram is {}x{}, snapshots have {} rows",
                gram.nrows(),
                gram.ncols(),
                data.nrows()
            )));
        }
        if labels.len() != data.ncols() {
            return Err(Error::DimensionMismatch("one label per snapshot column required".into()));
        }
        Ok(SnapshotSet { data, gram, labels })
    }

    pub fn from_trajectories(trajs: &[Trajectory], quantity: Quantity, grams: &GramSet) -> Result<Self> {
        let mut cols = Vec::new();
        let mut labels = Vec::new();
        for (s, t) in trajs.iter().enumerate() {
            for (n, c) in snapshot_columns(t, quantity).into_iter().enumerate() {
                cols.push(c);
                labels.push((s, n));
            }
        }
        let rows = cols.first().map_or(0, |c| c.len());
        let data = Mat::from_fn(rows, cols.len(), |i, j| cols[j][i]);
        Self::new(data, quantity.gram(grams).clone(), labels)
    }

    pub fn n_cols(&self) -> usize {
        self.data.ncols()
    }
}

/// `Q`-orthonormal basis together with the full singular value list.
#[derive(Debug, Clone)]
pub struct ReducedBasis {
    /// `N_dof × J`
    pub phi: Mat<f64>,
    /// All computed singular values, nonincreasing.
    pub singular_values: Vec<f64>,
    pub gram: SparseMatrix,
}

/// Relative cutoff below which singular values count as zero.
pub const RANK_CUTOFF: f64 = 1e-12;

/// Smallest `J` with `Σ_{j≤J} σ_j² / Σ_{j≤r} σ_j² ≥ 1 − ε²`, where `r` is the numerical rank.
pub fn truncation_dimension(singular_values: &[f64], eps_sq: f64) -> Result<usize> {
    if !(eps_sq > 0.0 && eps_sq < 1.0) {
        return Err(Error::InvalidArgument(format!("POD tolerance {eps_sq} outside (0, 1)")));
    }
    let rank = numerical_rank(singular_values);
    if rank == 0 {
        return Err(Error::InvalidArgument("all singular values vanish".into()));
    }
    let total: f64 = singular_values[..rank].iter().map(|s| s * s).sum();
    let mut acc = 0.0;
    for (j, s) in singular_values[..rank].iter().enumerate() {
        acc += s * s;
        if acc / total >= 1.0 - eps_sq {
            return Ok(j + 1);
        }
    }
    Ok(rank)
}

pub fn numerical_rank(singular_values: &[f64]) -> usize {
    match singular_values.first() {
        Some(&s1) if s1 > 0.0 => singular_values.iter().take_while(|&&s| s > RANK_CUTOFF * s1).count(),
        _ => 0,
    }
}

/// Untruncated POD of a snapshot set (all numerically nonzero modes).
pub fn pod_compute(snapshots: &SnapshotSet) -> Result<ReducedBasis> {
    let l = linalg::dense_cholesky_lower(snapshots.gram.to_dense().as_ref())
        .map_err(|e| Error::Factorization(format!("Gram matrix is not positive definite: {e}")))?;
    let scale = 1.0 / (snapshots.n_cols() as f64).sqrt();
    let mut x = l.transpose() * &snapshots.data;
    x.as_mut().col_iter_mut().for_each(|c| c.iter_mut().for_each(|v| *v *= scale));
    let (u, sv) = linalg::thin_svd_u(x.as_ref())?;
    let rank = numerical_rank(&sv);
    let phi = linalg::solve_lower_transpose(l.as_ref(), u.subcols(0, rank));
    Ok(ReducedBasis { phi, singular_values: sv, gram: snapshots.gram.clone() })
}

impl ReducedBasis {
    /// `Φ = L⁻ᵀ` for `gram = L Lᵀ`: a `Q`-orthonormal basis of the whole space.
    pub fn full(gram: &SparseMatrix) -> Result<ReducedBasis> {
        let l = linalg::dense_cholesky_lower(gram.to_dense().as_ref())?;
        let n = gram.nrows();
        let phi = linalg::solve_lower_transpose(l.as_ref(), Mat::<f64>::identity(n, n).as_ref());
        Ok(ReducedBasis { phi, singular_values: vec![1.0; n], gram: gram.clone() })
    }

    pub fn dim(&self) -> usize {
        self.phi.ncols()
    }

    pub fn n_dof(&self) -> usize {
        self.phi.nrows()
    }

    /// Keeps the leading `J` modes selected by the energy criterion.
    pub fn truncate(&self, eps_sq: f64) -> Result<ReducedBasis> {
        let j = truncation_dimension(&self.singular_values, eps_sq)?;
        self.truncate_to(j.min(self.dim()))
    }

    /// Keeps the leading `j` modes.
    pub fn truncate_to(&self, j: usize) -> Result<ReducedBasis> {
        if j > self.dim() {
            return Err(Error::InvalidArgument(format!("requested {j} modes, basis has rank {}", self.dim())));
        }
        Ok(ReducedBasis {
            phi: self.phi.subcols(0, j).to_owned(),
            singular_values: self.singular_values.clone(),
            gram: self.gram.clone(),
        })
    }

    /// `ΦᵀQw`
    pub fn coefficients(&self, w: &[f64]) -> Vec<f64> {
        linalg::tr_mul(self.phi.as_ref(), &self.gram.mul_vec(w))
    }

    pub fn reconstruct(&self, coeffs: &[f64]) -> Vec<f64> {
        linalg::mul(self.phi.as_ref(), coeffs)
    }

    /// `Q`-orthogonal projection: coefficients and reconstruction.
    pub fn project(&self, w: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        if w.len() != self.n_dof() {
            return Err(Error::DimensionMismatch(format!("field has {} entries, basis {}", w.len(), self.n_dof())));
        }
        let c = self.coefficients(w);
        let r = self.reconstruct(&c);
        Ok((c, r))
    }

    /// `‖w − P w‖²_Q`
    pub fn residual_sq(&self, w: &[f64]) -> f64 {
        let r = linalg::sub(w, &self.reconstruct(&self.coefficients(w)));
        self.gram.bilinear(&r, &r).max(0.0)
    }

    /// `max |ΦᵀQΦ − I|`
    pub fn orthonormality_defect(&self) -> f64 {
        let qphi = self.gram.mul_dense(self.phi.as_ref());
        let g = self.phi.transpose() * &qphi;
        let mut worst = 0.0f64;
        for i in 0..g.nrows() {
            for j in 0..g.ncols() {
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((g[(i, j)] - target).abs());
            }
        }
        worst
    }

    /// `sqrt(Σ_{j>J} σ_j²)` over the numerically nonzero singular values.
    pub fn tail(&self) -> f64 {
        let rank = numerical_rank(&self.singular_values);
        self.singular_values[self.dim().min(rank)..rank].iter().map(|s| s * s).sum::<f64>().sqrt()
    }
}

/// Root mean square projection error over all snapshot columns of `trajs`.
pub fn projection_error(basis: &ReducedBasis, trajs: &[Trajectory], quantity: Quantity) -> Result<f64> {
    let mut total = 0.0;
    let mut count = 0usize;
    for t in trajs {
        for c in snapshot_columns(t, quantity) {
            if c.len() != basis.n_dof() {
                return Err(Error::DimensionMismatch("basis does not match the quantity".into()));
            }
            total += basis.residual_sq(c);
            count += 1;
        }
    }
    if count == 0 {
        return Err(Error::InvalidArgument("empty test set".into()));
    }
    Ok((total / count as f64).sqrt())
}

/// Same as [`projection_error`] on the columns of a snapshot matrix.
pub fn projection_error_columns(basis: &ReducedBasis, data: &Mat<f64>) -> f64 {
    let total: f64 = (0..data.ncols()).map(|j| basis.residual_sq(&linalg::col_to_vec(data.as_ref(), j))).sum();
    (total / data.ncols() as f64).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn truncation_examples() {
        assert_eq!(truncation_dimension(&[2.0, 1.0, 1.0], 0.4).unwrap(), 1);
        assert_eq!(truncation_dimension(&[2.0, 1.0, 1.0], 0.1).unwrap(), 3);
        assert_eq!(truncation_dimension(&[2.0, 1.0, 1.0], 0.999).unwrap(), 1);
        assert!(truncation_dimension(&[0.0, 0.0], 0.1).is_err());
        assert!(truncation_dimension(&[1.0], 1.0).is_err());
    }

    #[test]
    fn rank_cutoff() {
        assert_eq!(numerical_rank(&[1.0, 1e-6, 1e-13]), 2);
        assert_eq!(numerical_rank(&[]), 0);
    }

    #[test]
    fn identical_columns_have_rank_one() {
        let gram = SparseMatrix::identity(3);
        let data = Mat::from_fn(3, 2, |i, _| [1.0, 2.0, -1.0][i]);
        let set = SnapshotSet::new(data, gram, vec![(0, 0), (1, 0)]).unwrap();
        let b = pod_compute(&set).unwrap();
        assert_eq!(b.dim(), 1);
        assert!((b.singular_values[0] - 6f64.sqrt()).abs() < 1e-14);
    }
}
