//! Rotation operator `e^{WG}`, the tangent-plane system matrix, and the
//! noise-transformed load vector.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::fem::{FeVectorField, GramSet, QuadratureRule, TriMesh};
use crate::linalg::SparseMatrix;

#[inline]
pub(crate) fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

#[inline]
pub(crate) fn dot3(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

/// `e^{WG}φ = φ + sin(W) Gφ + (1 − cos W) G²φ` with `Gu = u × g`.
pub fn rot_exp(w: f64, g: [f64; 3], phi: [f64; 3]) -> Result<[f64; 3]> {
    let ng = dot3(g, g).sqrt();
    if (ng - 1.0).abs() > 1e-8 {
        return Err(Error::InvalidArgument(format!("rotation axis has modulus {ng}, expected 1")));
    }
    Ok(rot_exp_unchecked(w, g, phi))
}

#[inline]
pub(crate) fn rot_exp_unchecked(w: f64, g: [f64; 3], phi: [f64; 3]) -> [f64; 3] {
    if w == 0.0 {
        return phi;
    }
    let gp = cross(phi, g);
    let ggp = cross(gp, g);
    let (s, c1) = (w.sin(), 1.0 - w.cos());
    [phi[0] + s * gp[0] + c1 * ggp[0], phi[1] + s * gp[1] + c1 * ggp[1], phi[2] + s * gp[2] + c1 * ggp[2]]
}

/// External field `H_ext(t, x)`.
#[derive(Clone, Default)]
pub enum ExternalField {
    #[default]
    Zero,
    Uniform([f64; 3]),
    Function(Arc<dyn Fn(f64, [f64; 2]) -> [f64; 3] + Send + Sync>),
}

impl fmt::Debug for ExternalField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ExternalField::Zero => write!(f, "Zero"),
            ExternalField::Uniform(h) => write!(f, "Uniform({h:?})"),
            ExternalField::Function(_) => write!(f, "Function(..)"),
        }
    }
}

impl ExternalField {
    pub fn is_zero(&self) -> bool {
        matches!(self, ExternalField::Zero) || matches!(self, ExternalField::Uniform(h) if *h == [0.0; 3])
    }

    pub fn eval(&self, t: f64, x: [f64; 2]) -> [f64; 3] {
        match self {
            ExternalField::Zero => [0.0; 3],
            ExternalField::Uniform(h) => *h,
            ExternalField::Function(f) => f(t, x),
        }
    }
}

/// Spatial noise distribution `g` together with the external field.
#[derive(Debug, Clone)]
pub struct NoiseModel {
    pub g: FeVectorField,
    pub h_ext: ExternalField,
}

impl NoiseModel {
    pub fn new(g: FeVectorField, h_ext: ExternalField) -> Result<Self> {
        let defect = g.max_modulus_defect();
        if defect > 1e-10 {
            return Err(Error::InvalidArgument(format!("noise distribution g is not unit modulus (defect {defect:.2e})")));
        }
        Ok(NoiseModel { g, h_ext })
    }
}

/// `A = α·M + τ·K + C(m̂)` with `C_ij = ⟨m̂ × φ_j, φ_i⟩`; rows are test functions.
pub fn assemble_system_matrix(mesh: &TriMesh, grams: &GramSet, m_hat: &FeVectorField, alpha: f64, tau: f64) -> SparseMatrix {
    let quad = QuadratureRule::degree4();
    let n = mesh.n_nodes();
    let mut trips: Vec<(usize, usize, f64)> = grams
        .mass_vec
        .triplets()
        .map(|(r, c, v)| (r, c, alpha * v))
        .chain(grams.stiff_vec.triplets().map(|(r, c, v)| (r, c, tau * v)))
        .collect();
    trips.reserve(54 * mesh.triangles.len());
    // (m × e_c)·e_d = m_k for (k, c, d) cyclic, −m_k for anticyclic.
    const CYCLIC: [(usize, usize, usize); 3] = [(0, 1, 2), (1, 2, 0), (2, 0, 1)];
    for el in mesh.elements() {
        let mut t = [[[0.0f64; 3]; 3]; 3]; // [test b][trial a][component k] = ∫ ψ_b ψ_a m_k
        for (bary, w) in quad.points.iter().zip(&quad.weights) {
            let mv = m_hat.eval(&el, bary);
            for b in 0..3 {
                for a in 0..3 {
                    let s = w * el.area * bary[a] * bary[b];
                    for k in 0..3 {
                        t[b][a][k] += s * mv[k];
                    }
                }
            }
        }
        for b in 0..3 {
            for a in 0..3 {
                for &(k, c, d) in &CYCLIC {
                    let v = t[b][a][k];
                    trips.push((d * n + el.nodes[b], c * n + el.nodes[a], v));
                    trips.push((c * n + el.nodes[b], d * n + el.nodes[a], -v));
                }
            }
        }
    }
    SparseMatrix::from_triplets(3 * n, 3 * n, trips)
}

/// Right-hand side `f_i = −⟨∇I_h(e^{WG}m̂), ∇I_h(e^{WG}φ_i)⟩ + ⟨I_h(e^{−WG}H_ext(t)), φ_i⟩`.
///
/// The rotations act nodewise, so `I_h(e^{WG}φ_i)` is the basis function
/// scaled by the rotated unit vector at its node.
pub fn assemble_load(
    mesh: &TriMesh,
    grams: &GramSet,
    noise: &NoiseModel,
    m_hat: &FeVectorField,
    w_val: f64,
    t: f64,
) -> Vec<f64> {
    let n = mesh.n_nodes();
    let mut rotated = FeVectorField::zeros(n);
    for a in 0..n {
        rotated.set_node(a, rot_exp_unchecked(w_val, noise.g.node(a), m_hat.node(a)));
    }
    let k_u = FeVectorField::from_coeffs(grams.stiff_vec.mul_vec(&rotated.coeffs));
    let mut f = FeVectorField::zeros(n);
    for a in 0..n {
        let back = rot_exp_unchecked(-w_val, noise.g.node(a), k_u.node(a));
        f.set_node(a, [-back[0], -back[1], -back[2]]);
    }
    if !noise.h_ext.is_zero() {
        let mut h = FeVectorField::zeros(n);
        for a in 0..n {
            h.set_node(a, rot_exp_unchecked(-w_val, noise.g.node(a), noise.h_ext.eval(t, mesh.nodes[a])));
        }
        let mh = grams.mass_vec.mul_vec(&h.coeffs);
        f.coeffs.iter_mut().zip(mh).for_each(|(fi, mi)| *fi += mi);
    }
    f.coeffs
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rotation_spot_values() {
        let phi = [0.3, -0.2, 0.9];
        let g = [0.0, 0.6, 0.8];
        assert_eq!(rot_exp(0.0, g, phi).unwrap(), phi);
        let r = rot_exp(std::f64::consts::FRAC_PI_2, [0.0, 0.0, 1.0], [1.0, 0.0, 0.0]).unwrap();
        assert!((r[0]).abs() < 1e-15 && (r[1] + 1.0).abs() < 1e-15 && r[2].abs() < 1e-15);
        assert!(rot_exp(0.1, [0.0, 0.0, 2.0], phi).is_err());
    }

    #[test]
    fn external_field_zero_detection() {
        assert!(ExternalField::Zero.is_zero());
        assert!(ExternalField::Uniform([0.0; 3]).is_zero());
        assert!(!ExternalField::Uniform([0.0, 0.0, -1.0]).is_zero());
    }
}
