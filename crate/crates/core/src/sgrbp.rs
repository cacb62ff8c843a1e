//! Sparse grid interpolation of reduced magnetization coefficients.
//!
//! High-fidelity trajectories are computed at the sparse grid nodes, projected onto
//! the magnetization basis, and the coefficients of every time step are interpolated
//! independently. Evaluation never touches the PDE.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fem::{FeVectorField, GramSet, TriMesh};
use crate::field_ops::NoiseModel;
use crate::noise::ParamVector;
use crate::pod::ReducedBasis;
use crate::sparse_grid::SparseGridOp;
use crate::tps::{tps_run_from, TpsConfig};

#[derive(Debug, Clone)]
pub struct SgRbpSurrogate {
    pub grid_op: SparseGridOp,
    pub m_basis: ReducedBasis,
    /// Per node, `N_T + 1` rows of `K` coefficients, flattened row-major.
    pub node_coeffs: Vec<Vec<f64>>,
    pub n_times: usize,
    pub cfg: TpsConfig,
}

/// Samples the high-fidelity model at every sparse grid node.
pub fn sgrbp_build(
    mesh: &TriMesh,
    grams: &GramSet,
    noise: &NoiseModel,
    m0_h: &FeVectorField,
    cfg: &TpsConfig,
    m_basis: &ReducedBasis,
    grid_op: &SparseGridOp,
) -> Result<SgRbpSurrogate> {
    if m_basis.n_dof() != 3 * mesh.n_nodes() {
        return Err(Error::DimensionMismatch("magnetization basis does not match the mesh".into()));
    }
    let n_times = cfg.n_steps()? + 1;
    let node_coeffs = grid_op
        .nodes
        .par_iter()
        .enumerate()
        .map(|(node, y)| {
            let run = || -> Result<Vec<f64>> {
                let y = ParamVector::new(y.clone())?;
                let traj = tps_run_from(mesh, grams, noise, m0_h, &y, cfg)?;
                Ok(traj.magnetizations.iter().flat_map(|m| m_basis.coefficients(&m.coeffs)).collect())
            };
            run().map_err(|e| Error::NodeSolve { node, source: Box::new(e) })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SgRbpSurrogate { grid_op: grid_op.clone(), m_basis: m_basis.clone(), node_coeffs, n_times, cfg: *cfg })
}

impl SgRbpSurrogate {
    pub fn n_nodes(&self) -> usize {
        self.node_coeffs.len()
    }

    pub fn basis_dim(&self) -> usize {
        self.m_basis.dim()
    }

    /// Interpolated coefficients, `n_times × K` flattened row-major.
    pub fn eval_coeffs(&self, y: &ParamVector) -> Result<Vec<f64>> {
        self.grid_op.interpolate(&self.node_coeffs, &y.y)
    }

    /// Reconstructed fields `m⁰ … m^{N_T}` (not normalized).
    pub fn eval(&self, y: &ParamVector) -> Result<Vec<FeVectorField>> {
        let c = self.eval_coeffs(y)?;
        let k = self.basis_dim();
        Ok((0..self.n_times)
            .map(|n| FeVectorField::from_coeffs(self.m_basis.reconstruct(&c[n * k..(n + 1) * k])))
            .collect())
    }
}
