//! Structured P1 finite elements on the unit square.
//!
//! Vector fields are stored component-blocked: all x coefficients, then all y,
//! then all z. Node `(i, j)` of the grid has index `i + j * (n_div + 1)`.

use crate::error::{Error, Result};
use crate::linalg::{SparseCholesky, SparseMatrix};

/// Barycentric quadrature rule on a triangle (weights sum to one).
#[derive(Debug, Clone)]
pub struct QuadratureRule {
    pub points: Vec<[f64; 3]>,
    pub weights: Vec<f64>,
}

impl QuadratureRule {
    /// Six-point symmetric rule, exact for polynomials of degree 4.
    pub fn degree4() -> Self {
        const A1: f64 = 0.445_948_490_915_965;
        const W1: f64 = 0.223_381_589_678_011;
        const A2: f64 = 0.091_576_213_509_771;
        const W2: f64 = 0.109_951_743_655_322;
        let mut points = Vec::with_capacity(6);
        let mut weights = Vec::with_capacity(6);
        for (a, w) in [(A1, W1), (A2, W2)] {
            let b = 1.0 - 2.0 * a;
            points.extend([[a, a, b], [a, b, a], [b, a, a]]);
            weights.extend([w; 3]);
        }
        QuadratureRule { points, weights }
    }
}

/// Structured triangulation of `[0,1]²`.
#[derive(Debug, Clone, PartialEq)]
pub struct TriMesh {
    pub n_div: usize,
    pub nodes: Vec<[f64; 2]>,
    pub triangles: Vec<[usize; 3]>,
    pub h: f64,
}

/// Geometric data of one triangle.
#[derive(Debug, Clone, Copy)]
pub struct Element {
    pub nodes: [usize; 3],
    pub coords: [[f64; 2]; 3],
    pub area: f64,
    /// Gradients of the three barycentric coordinates.
    pub grads: [[f64; 2]; 3],
}

impl Element {
    pub fn point(&self, bary: &[f64; 3]) -> [f64; 2] {
        let mut p = [0.0; 2];
        for k in 0..3 {
            p[0] += bary[k] * self.coords[k][0];
            p[1] += bary[k] * self.coords[k][1];
        }
        p
    }
}

impl TriMesh {
    /// Uniform mesh with `n_div` cells per side, each cell split along the
    /// lower-left to upper-right diagonal.
    pub fn structured(n_div: usize) -> Result<Self> {
        if n_div == 0 {
            return Err(Error::InvalidArgument("n_div must be at least 1".into()));
        }
        let np = n_div + 1;
        let h = 1.0 / n_div as f64;
        let mut nodes = Vec::with_capacity(np * np);
        for j in 0..np {
            for i in 0..np {
                nodes.push([i as f64 * h, j as f64 * h]);
            }
        }
        let mut triangles = Vec::with_capacity(2 * n_div * n_div);
        for j in 0..n_div {
            for i in 0..n_div {
                let a = i + j * np;
                let b = a + 1;
                let c = b + np;
                let d = a + np;
                triangles.push([a, b, c]);
                triangles.push([a, c, d]);
            }
        }
        Ok(TriMesh { n_div, nodes, triangles, h })
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn element(&self, t: usize) -> Element {
        let nodes = self.triangles[t];
        let coords = nodes.map(|n| self.nodes[n]);
        let [p0, p1, p2] = coords;
        let det = (p1[0] - p0[0]) * (p2[1] - p0[1]) - (p2[0] - p0[0]) * (p1[1] - p0[1]);
        let grads = [
            [(p1[1] - p2[1]) / det, (p2[0] - p1[0]) / det],
            [(p2[1] - p0[1]) / det, (p0[0] - p2[0]) / det],
            [(p0[1] - p1[1]) / det, (p1[0] - p0[0]) / det],
        ];
        Element { nodes, coords, area: 0.5 * det, grads }
    }

    pub fn elements(&self) -> impl Iterator<Item = Element> + '_ {
        (0..self.triangles.len()).map(|t| self.element(t))
    }

    /// Triangle containing `p` and the barycentric coordinates of `p` in it.
    pub fn locate(&self, p: [f64; 2]) -> (usize, [f64; 3]) {
        let n = self.n_div;
        let s = [p[0].clamp(0.0, 1.0) * n as f64, p[1].clamp(0.0, 1.0) * n as f64];
        let i = (s[0].floor() as usize).min(n - 1);
        let j = (s[1].floor() as usize).min(n - 1);
        let (xi, eta) = (s[0] - i as f64, s[1] - j as f64);
        let cell = 2 * (i + j * n);
        if xi >= eta {
            // (a, b, c): a=(0,0), b=(1,0), c=(1,1)
            (cell, [1.0 - xi, xi - eta, eta])
        } else {
            // (a, c, d): d=(0,1)
            (cell + 1, [1.0 - eta, xi, eta - xi])
        }
    }
}

/// Nodal coefficients of a scalar P1 function.
#[derive(Debug, Clone, PartialEq)]
pub struct FeScalarField {
    pub coeffs: Vec<f64>,
}

impl FeScalarField {
    pub fn zeros(n_nodes: usize) -> Self {
        FeScalarField { coeffs: vec![0.0; n_nodes] }
    }
}

/// Nodal coefficients of an R³-valued P1 function, component-blocked.
#[derive(Debug, Clone, PartialEq)]
pub struct FeVectorField {
    pub coeffs: Vec<f64>,
}

impl FeVectorField {
    pub fn zeros(n_nodes: usize) -> Self {
        FeVectorField { coeffs: vec![0.0; 3 * n_nodes] }
    }

    pub fn from_coeffs(coeffs: Vec<f64>) -> Self {
        assert_eq!(coeffs.len() % 3, 0, "vector field length must be a multiple of 3");
        FeVectorField { coeffs }
    }

    pub fn from_nodes(values: &[[f64; 3]]) -> Self {
        let n = values.len();
        let mut coeffs = vec![0.0; 3 * n];
        for (a, v) in values.iter().enumerate() {
            for c in 0..3 {
                coeffs[c * n + a] = v[c];
            }
        }
        FeVectorField { coeffs }
    }

    pub fn n_nodes(&self) -> usize {
        self.coeffs.len() / 3
    }

    #[inline]
    pub fn node(&self, a: usize) -> [f64; 3] {
        let n = self.n_nodes();
        [self.coeffs[a], self.coeffs[n + a], self.coeffs[2 * n + a]]
    }

    #[inline]
    pub fn set_node(&mut self, a: usize, v: [f64; 3]) {
        let n = self.n_nodes();
        self.coeffs[a] = v[0];
        self.coeffs[n + a] = v[1];
        self.coeffs[2 * n + a] = v[2];
    }

    /// Value of the P1 interpolant at barycentric point `bary` of `el`.
    pub fn eval(&self, el: &Element, bary: &[f64; 3]) -> [f64; 3] {
        let mut v = [0.0; 3];
        for k in 0..3 {
            let nv = self.node(el.nodes[k]);
            for c in 0..3 {
                v[c] += bary[k] * nv[c];
            }
        }
        v
    }

    /// Nodewise division by the Euclidean modulus.
    pub fn normalized(&self) -> Result<Self> {
        let mut out = self.clone();
        for a in 0..self.n_nodes() {
            let v = self.node(a);
            let r = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
            if !(r > 0.0) || !r.is_finite() {
                return Err(Error::InvalidArgument(format!("field vanishes at node {a}; cannot normalize")));
            }
            out.set_node(a, [v[0] / r, v[1] / r, v[2] / r]);
        }
        Ok(out)
    }

    /// `max_a | |m(x_a)| - 1 |`
    pub fn max_modulus_defect(&self) -> f64 {
        (0..self.n_nodes())
            .map(|a| {
                let v = self.node(a);
                ((v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt() - 1.0).abs()
            })
            .fold(0.0, f64::max)
    }

    /// Restriction of a coarse-mesh field to the nodes of a finer mesh (exact
    /// for nested structured meshes).
    pub fn prolongate(&self, coarse: &TriMesh, fine: &TriMesh) -> Self {
        let vals: Vec<[f64; 3]> = fine
            .nodes
            .iter()
            .map(|&p| {
                let (t, bary) = coarse.locate(p);
                self.eval(&coarse.element(t), &bary)
            })
            .collect();
        FeVectorField::from_nodes(&vals)
    }
}

/// Gram matrices of the P1 space.
#[derive(Debug)]
pub struct GramSet {
    /// L² Gram matrix of the scalar space.
    pub mass_scalar: SparseMatrix,
    /// H¹ seminorm Gram matrix of the scalar space.
    pub stiff_scalar: SparseMatrix,
    pub mass_vec: SparseMatrix,
    pub stiff_vec: SparseMatrix,
    /// Full H¹ Gram matrix of the vector space.
    pub q_vec: SparseMatrix,
    mass_chol: SparseCholesky,
    h1_scalar_chol: SparseCholesky,
}

impl GramSet {
    pub fn assemble(mesh: &TriMesh) -> Result<Self> {
        let quad = QuadratureRule::degree4();
        let n = mesh.n_nodes();
        let mut mt = Vec::with_capacity(9 * mesh.triangles.len());
        let mut kt = Vec::with_capacity(9 * mesh.triangles.len());
        for el in mesh.elements() {
            for a in 0..3 {
                for b in 0..3 {
                    let m: f64 = quad
                        .points
                        .iter()
                        .zip(&quad.weights)
                        .map(|(p, w)| w * p[a] * p[b])
                        .sum::<f64>()
                        * el.area;
                    let k = el.area * (el.grads[a][0] * el.grads[b][0] + el.grads[a][1] * el.grads[b][1]);
                    mt.push((el.nodes[a], el.nodes[b], m));
                    kt.push((el.nodes[a], el.nodes[b], k));
                }
            }
        }
        let mass_scalar = SparseMatrix::from_triplets(n, n, mt);
        let stiff_scalar = SparseMatrix::from_triplets(n, n, kt);
        let h1_scalar = SparseMatrix::linear_combination(&[(1.0, &mass_scalar), (1.0, &stiff_scalar)]);
        let mass_chol = SparseCholesky::new(&mass_scalar)?;
        let h1_scalar_chol = SparseCholesky::new(&h1_scalar)?;
        Ok(GramSet {
            mass_vec: mass_scalar.block_diag3(),
            stiff_vec: stiff_scalar.block_diag3(),
            q_vec: h1_scalar.block_diag3(),
            mass_scalar,
            stiff_scalar,
            mass_chol,
            h1_scalar_chol,
        })
    }

    pub fn n_nodes(&self) -> usize {
        self.mass_scalar.nrows()
    }

    /// Solves `mass_scalar · x = rhs`.
    pub fn solve_mass_scalar(&self, rhs: &[f64]) -> Vec<f64> {
        self.mass_chol.solve(rhs)
    }

    /// Solves `q_vec · x = rhs` blockwise.
    pub fn solve_q(&self, rhs: &[f64]) -> Vec<f64> {
        let n = self.n_nodes();
        assert_eq!(rhs.len(), 3 * n);
        let mut out = Vec::with_capacity(3 * n);
        for c in 0..3 {
            out.extend(self.h1_scalar_chol.solve(&rhs[c * n..(c + 1) * n]));
        }
        out
    }

    /// Solves `mass_vec · x = rhs` blockwise.
    pub fn solve_mass_vec(&self, rhs: &[f64]) -> Vec<f64> {
        let n = self.n_nodes();
        let mut out = Vec::with_capacity(3 * n);
        for c in 0..3 {
            out.extend(self.mass_chol.solve(&rhs[c * n..(c + 1) * n]));
        }
        out
    }

    /// H¹ norm `sqrt(wᵀ Q w)`.
    pub fn h1_norm(&self, w: &[f64]) -> f64 {
        self.q_vec.bilinear(w, w).max(0.0).sqrt()
    }

    /// L² norm of a scalar field.
    pub fn l2_norm_scalar(&self, w: &[f64]) -> f64 {
        self.mass_scalar.bilinear(w, w).max(0.0).sqrt()
    }
}

/// Coefficients equal to `f` evaluated at the mesh nodes.
pub fn nodal_interpolate(mesh: &TriMesh, f: impl Fn([f64; 2]) -> [f64; 3]) -> FeVectorField {
    let vals: Vec<[f64; 3]> = mesh.nodes.iter().map(|&p| f(p)).collect();
    FeVectorField::from_nodes(&vals)
}

/// L²-projection of a pointwise function onto the vector P1 space.
pub fn l2_project(mesh: &TriMesh, grams: &GramSet, f: impl Fn([f64; 2]) -> [f64; 3]) -> Result<FeVectorField> {
    let quad = QuadratureRule::degree4();
    let n = mesh.n_nodes();
    let mut load = vec![0.0; 3 * n];
    for el in mesh.elements() {
        for (bary, w) in quad.points.iter().zip(&quad.weights) {
            let fv = f(el.point(bary));
            for k in 0..3 {
                let wk = w * el.area * bary[k];
                for c in 0..3 {
                    load[c * n + el.nodes[k]] += wk * fv[c];
                }
            }
        }
    }
    let coeffs = grams.solve_mass_vec(&load);
    let residual = crate::linalg::sub(&grams.mass_vec.mul_vec(&coeffs), &load);
    let scale = crate::linalg::norm2(&load).max(f64::MIN_POSITIVE);
    if crate::linalg::norm2(&residual) > 1e-10 * scale {
        return Err(Error::Factorization("L2 projection residual above tolerance".into()));
    }
    Ok(FeVectorField::from_coeffs(coeffs))
}

/// Constraint matrix `B(m)` with `B_ij = ⟨φ_j · m, ψ_i⟩_{L²}`, shape `N_h × 3N_h`.
pub fn assemble_constraint(mesh: &TriMesh, m: &FeVectorField) -> SparseMatrix {
    let quad = QuadratureRule::degree4();
    let n = mesh.n_nodes();
    let mut trips = Vec::with_capacity(27 * mesh.triangles.len());
    for el in mesh.elements() {
        let mut local = [[[0.0f64; 3]; 3]; 3]; // [test i][trial a][component c]
        for (bary, w) in quad.points.iter().zip(&quad.weights) {
            let mv = m.eval(&el, bary);
            for i in 0..3 {
                for a in 0..3 {
                    let s = w * el.area * bary[i] * bary[a];
                    for c in 0..3 {
                        local[i][a][c] += s * mv[c];
                    }
                }
            }
        }
        for i in 0..3 {
            for a in 0..3 {
                for c in 0..3 {
                    trips.push((el.nodes[i], c * n + el.nodes[a], local[i][a][c]));
                }
            }
        }
    }
    SparseMatrix::from_triplets(n, 3 * n, trips)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mesh_counts() {
        for (n, nodes, tris, h) in [(8, 81, 128, 0.125), (1, 4, 2, 1.0), (4, 25, 32, 0.25)] {
            let m = TriMesh::structured(n).unwrap();
            assert_eq!(m.n_nodes(), nodes);
            assert_eq!(m.triangles.len(), tris);
            assert_eq!(m.h, h);
        }
        assert!(TriMesh::structured(0).is_err());
    }

    #[test]
    fn areas_positive_and_sum_to_one() {
        let m = TriMesh::structured(5).unwrap();
        let total: f64 = m.elements().map(|e| {
            assert!(e.area > 0.0);
            e.area
        }).sum();
        assert!((total - 1.0).abs() < 1e-14);
        assert!(m.nodes.iter().all(|p| (0.0..=1.0).contains(&p[0]) && (0.0..=1.0).contains(&p[1])));
    }

    #[test]
    fn locate_recovers_points() {
        let m = TriMesh::structured(3).unwrap();
        for p in [[0.1, 0.7], [0.5, 0.5], [0.99, 0.01], [1.0, 1.0], [0.0, 0.0], [0.4, 0.45]] {
            let (t, bary) = m.locate(p);
            assert!(bary.iter().all(|b| *b >= -1e-14));
            let q = m.element(t).point(&bary);
            assert!((q[0] - p[0]).abs() < 1e-14 && (q[1] - p[1]).abs() < 1e-14);
        }
    }

    #[test]
    fn normalize_rejects_zero_node() {
        let f = FeVectorField::zeros(4);
        assert!(f.normalized().is_err());
    }
}
