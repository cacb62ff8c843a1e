//! High-fidelity tangent plane scheme.
//!
//! Each step solves the saddle-point system
//!
//! ```text
//! [ A(m̂)  B(m̂)ᵀ ] [v]   [f]
//! [ B(m̂)   0    ] [λ] = [0]
//! ```
//!
//! with a sparse LU factorization, then updates `m = m̂ + τ v` and normalizes
//! nodewise (or skips normalization for the projection-free variant).

use faer::Mat;

use crate::error::{Error, Result};
use crate::fem::{assemble_constraint, l2_project, FeScalarField, FeVectorField, GramSet, TriMesh};
use crate::field_ops::{assemble_load, assemble_system_matrix, NoiseModel};
use crate::linalg::{self, LuPattern, SparseLu, SparseMatrix};
use crate::noise::{BrownianPath, ParamVector};

/// Time stepping parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TpsConfig {
    /// Gilbert damping.
    pub alpha: f64,
    pub final_time: f64,
    pub tau: f64,
    /// Normalize the magnetization after every step.
    pub normalize: bool,
}

impl TpsConfig {
    pub fn new(alpha: f64, final_time: f64, tau: f64) -> Self {
        TpsConfig { alpha, final_time, tau, normalize: true }
    }

    /// Validates the configuration and returns `N_T = T / τ`.
    pub fn n_steps(&self) -> Result<usize> {
        if !(self.alpha > 0.0) || !(self.tau > 0.0) {
            return Err(Error::InvalidArgument("alpha and tau must be positive".into()));
        }
        if self.final_time < self.tau * (1.0 - 1e-9) {
            return Err(Error::InvalidArgument("final time must be at least one time step".into()));
        }
        let ratio = self.final_time / self.tau;
        let n = ratio.round();
        if (ratio - n).abs() > 1e-9 * ratio.max(1.0) {
            return Err(Error::InvalidArgument(format!("T / tau = {ratio} is not an integer")));
        }
        Ok(n as usize)
    }

    pub fn time(&self, n: usize) -> f64 {
        n as f64 * self.tau
    }
}

/// Sequence of states produced by one run.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    /// `m̂⁰, …, m̂^{N_T}` (normalized when the run normalizes).
    pub magnetizations: Vec<FeVectorField>,
    /// `v⁰, …, v^{N_T-1}`
    pub velocities: Vec<FeVectorField>,
    /// `λ⁰, …, λ^{N_T-1}`
    pub multipliers: Vec<FeScalarField>,
    /// Per-step inf-sup constants; `NaN` where not computed.
    pub infsup: Vec<f64>,
}

impl Trajectory {
    pub fn n_steps(&self) -> usize {
        self.velocities.len()
    }

    /// Smallest computed inf-sup constant.
    pub fn min_infsup(&self) -> Option<f64> {
        self.infsup.iter().copied().filter(|v| !v.is_nan()).reduce(f64::min)
    }
}

/// Assembled blocks of one tangent-plane step.
#[derive(Debug, Clone)]
pub struct StepSystem {
    pub a: SparseMatrix,
    pub b: SparseMatrix,
    pub f: Vec<f64>,
}

pub fn assemble_step(
    mesh: &TriMesh,
    grams: &GramSet,
    noise: &NoiseModel,
    m_hat: &FeVectorField,
    w_val: f64,
    t: f64,
    cfg: &TpsConfig,
) -> StepSystem {
    StepSystem {
        a: assemble_system_matrix(mesh, grams, m_hat, cfg.alpha, cfg.tau),
        b: assemble_constraint(mesh, m_hat),
        f: assemble_load(mesh, grams, noise, m_hat, w_val, t),
    }
}

const STEP_RESIDUAL_TOL: f64 = 1e-9;

/// Solves one saddle-point step at state `m̂` and noise value `W(y, t)`.
pub fn tps_step(
    mesh: &TriMesh,
    grams: &GramSet,
    noise: &NoiseModel,
    m_hat: &FeVectorField,
    w_val: f64,
    t: f64,
    cfg: &TpsConfig,
) -> Result<(FeVectorField, FeScalarField)> {
    let sys = assemble_step(mesh, grams, noise, m_hat, w_val, t, cfg);
    solve_step_system(&sys, &mut None).map_err(|detail| Error::SingularSystem { step: 0, detail })
}

fn solve_step_system(
    sys: &StepSystem,
    pattern: &mut Option<LuPattern>,
) -> std::result::Result<(FeVectorField, FeScalarField), String> {
    let n3 = sys.a.nrows();
    let nl = sys.b.nrows();
    let k = SparseMatrix::saddle(&sys.a, &sys.b);
    let mut rhs = sys.f.clone();
    rhs.resize(n3 + nl, 0.0);
    if !pattern.as_ref().is_some_and(|p| p.matches(&k)) {
        *pattern = Some(LuPattern::new(&k).map_err(|e| e.to_string())?);
    }
    let lu = SparseLu::with_pattern(&k, pattern.as_ref().unwrap()).map_err(|e| e.to_string())?;
    let mut x = lu.solve(&rhs);
    let scale = linalg::norm2(&rhs);
    let mut res = linalg::sub(&rhs, &k.mul_vec(&x));
    // one step of iterative refinement if the direct solve is not accurate enough
    if linalg::norm2(&res) > STEP_RESIDUAL_TOL * scale {
        let dx = lu.solve(&res);
        x.iter_mut().zip(dx).for_each(|(xi, di)| *xi += di);
        res = linalg::sub(&rhs, &k.mul_vec(&x));
    }
    let rel = linalg::norm2(&res) / scale.max(f64::MIN_POSITIVE);
    if !(linalg::norm2(&res) <= STEP_RESIDUAL_TOL * scale) {
        return Err(format!("relative residual {rel:.3e} exceeds {STEP_RESIDUAL_TOL:.0e}"));
    }
    let lambda = x.split_off(n3);
    Ok((FeVectorField::from_coeffs(x), FeScalarField { coeffs: lambda }))
}

/// Runs the scheme from a pointwise initial condition (L²-projected, then normalized).
pub fn tps_run(
    mesh: &TriMesh,
    grams: &GramSet,
    noise: &NoiseModel,
    m0: impl Fn([f64; 2]) -> [f64; 3],
    y: &ParamVector,
    cfg: &TpsConfig,
) -> Result<Trajectory> {
    let m0_h = l2_project(mesh, grams, m0)?;
    tps_run_from(mesh, grams, noise, &m0_h, y, cfg)
}

/// Runs the scheme from a discrete initial state `m⁰_h` (normalized before the first step).
pub fn tps_run_from(
    mesh: &TriMesh,
    grams: &GramSet,
    noise: &NoiseModel,
    m0_h: &FeVectorField,
    y: &ParamVector,
    cfg: &TpsConfig,
) -> Result<Trajectory> {
    let n_steps = cfg.n_steps()?;
    if m0_h.n_nodes() != mesh.n_nodes() {
        return Err(Error::DimensionMismatch("initial condition does not match mesh".into()));
    }
    let path = BrownianPath::new(y.clone(), cfg.final_time)?;
    let mut m_hat = m0_h.normalized()?;
    let mut traj = Trajectory {
        magnetizations: Vec::with_capacity(n_steps + 1),
        velocities: Vec::with_capacity(n_steps),
        multipliers: Vec::with_capacity(n_steps),
        infsup: vec![f64::NAN; n_steps],
    };
    traj.magnetizations.push(m_hat.clone());
    let mut pattern = None;
    for n in 0..n_steps {
        let t = cfg.time(n);
        let w = path.eval(t)?;
        let sys = assemble_step(mesh, grams, noise, &m_hat, w, t, cfg);
        let (v, lambda) = solve_step_system(&sys, &mut pattern).map_err(|detail| Error::SingularSystem { step: n, detail })?;
        let next = FeVectorField::from_coeffs(linalg::axpy(cfg.tau, &v.coeffs, &m_hat.coeffs));
        m_hat = if cfg.normalize {
            next.normalized().map_err(|e| Error::SingularSystem { step: n, detail: e.to_string() })?
        } else {
            next
        };
        traj.velocities.push(v);
        traj.multipliers.push(lambda);
        traj.magnetizations.push(m_hat.clone());
    }
    Ok(traj)
}

/// Fills `traj.infsup` at every `stride`-th step.
pub fn fill_infsup(mesh: &TriMesh, grams: &GramSet, traj: &mut Trajectory, stride: usize) -> Result<()> {
    let stride = stride.max(1);
    for n in (0..traj.n_steps()).step_by(stride) {
        traj.infsup[n] = infsup_constant(mesh, grams, &traj.magnetizations[n])?;
    }
    Ok(())
}

/// Above this many nodes the inf-sup constant is computed by inverse iteration.
pub const DENSE_INFSUP_LIMIT: usize = 2000;

/// Smallest generalized singular value of `B(m̂)` in the (H¹ primal, L² dual)
/// pairing: `β² = min_λ (λᵀ B Q⁻¹ Bᵀ λ) / (λᵀ M λ)`.
pub fn infsup_constant(mesh: &TriMesh, grams: &GramSet, m_hat: &FeVectorField) -> Result<f64> {
    infsup_constant_with(mesh, grams, m_hat, InfSupMethod::Auto)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InfSupMethod {
    /// Dense up to [`DENSE_INFSUP_LIMIT`] nodes, inverse iteration above.
    Auto,
    Dense,
    InverseIteration,
}

pub fn infsup_constant_with(mesh: &TriMesh, grams: &GramSet, m_hat: &FeVectorField, method: InfSupMethod) -> Result<f64> {
    let b = assemble_constraint(mesh, m_hat);
    if b.triplets().all(|(_, _, v)| v == 0.0) {
        return Ok(0.0);
    }
    let dense = match method {
        InfSupMethod::Auto => mesh.n_nodes() <= DENSE_INFSUP_LIMIT,
        InfSupMethod::Dense => true,
        InfSupMethod::InverseIteration => false,
    };
    if dense {
        infsup_dense(grams, &b)
    } else {
        infsup_inverse_iteration(grams, &b)
    }
}

fn infsup_dense(grams: &GramSet, b: &SparseMatrix) -> Result<f64> {
    let n = b.nrows();
    let bt = b.transpose();
    // S = B Q⁻¹ Bᵀ, column by column
    let mut s = Mat::<f64>::zeros(n, n);
    let mut unit = vec![0.0; n];
    for j in 0..n {
        unit[j] = 1.0;
        let x = grams.solve_q(&bt.mul_vec(&unit));
        unit[j] = 0.0;
        let col = b.mul_vec(&x);
        for i in 0..n {
            s[(i, j)] = col[i];
        }
    }
    let s = Mat::from_fn(n, n, |i, j| 0.5 * (s[(i, j)] + s[(j, i)]));
    let l = linalg::dense_cholesky_lower(grams.mass_scalar.to_dense().as_ref())?;
    let y = linalg::solve_lower(l.as_ref(), s.as_ref());
    let c = linalg::solve_lower(l.as_ref(), y.transpose());
    let c = Mat::from_fn(n, n, |i, j| 0.5 * (c[(i, j)] + c[(j, i)]));
    let (vals, _) = linalg::symmetric_eigen(c.as_ref())?;
    Ok(vals[0].max(0.0).sqrt())
}

fn infsup_inverse_iteration(grams: &GramSet, b: &SparseMatrix) -> Result<f64> {
    let n = b.nrows();
    let apply_s = |x: &[f64]| b.mul_vec(&grams.solve_q(&b.tr_mul_vec(x)));
    let m = &grams.mass_scalar;
    let mut x = vec![1.0; n];
    for (i, xi) in x.iter_mut().enumerate() {
        *xi += 0.1 * ((i * 7919) % 101) as f64 / 101.0;
    }
    let mut mu_prev = f64::INFINITY;
    for _ in 0..500 {
        let rhs = m.mul_vec(&x);
        let z = conjugate_gradient(&apply_s, &rhs, 1e-12, 10 * n)
            .ok_or_else(|| Error::Eigen("CG did not converge in inverse iteration".into()))?;
        let nz = m.bilinear(&z, &z).sqrt();
        x = z.iter().map(|v| v / nz).collect();
        let mu = linalg::dot(&x, &apply_s(&x));
        if (mu - mu_prev).abs() <= 1e-10 * mu.abs() {
            return Ok(mu.max(0.0).sqrt());
        }
        mu_prev = mu;
    }
    Err(Error::Eigen("inverse iteration did not converge".into()))
}

fn conjugate_gradient(apply: &impl Fn(&[f64]) -> Vec<f64>, rhs: &[f64], tol: f64, max_iter: usize) -> Option<Vec<f64>> {
    let mut x = vec![0.0; rhs.len()];
    let mut r = rhs.to_vec();
    let mut p = r.clone();
    let mut rr = linalg::dot(&r, &r);
    let stop = tol * tol * rr;
    for _ in 0..max_iter {
        if rr <= stop {
            return Some(x);
        }
        let ap = apply(&p);
        let alpha = rr / linalg::dot(&p, &ap);
        x.iter_mut().zip(&p).for_each(|(xi, pi)| *xi += alpha * pi);
        r.iter_mut().zip(&ap).for_each(|(ri, ai)| *ri -= alpha * ai);
        let rr_new = linalg::dot(&r, &r);
        let beta = rr_new / rr;
        p.iter_mut().zip(&r).for_each(|(pi, ri)| *pi = ri + beta * *pi);
        rr = rr_new;
    }
    (rr <= stop).then_some(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_step_count() {
        assert_eq!(TpsConfig::new(1.4, 0.5, 1e-3).n_steps().unwrap(), 500);
        assert_eq!(TpsConfig::new(1.4, 0.2, 2.5e-3).n_steps().unwrap(), 80);
        assert!(TpsConfig::new(1.4, 0.5, 0.3).n_steps().is_err());
        assert!(TpsConfig::new(0.0, 0.5, 0.1).n_steps().is_err());
        assert!(TpsConfig::new(1.0, 0.05, 0.1).n_steps().is_err());
    }

    #[test]
    fn cg_solves_spd() {
        let a = SparseMatrix::from_triplets(2, 2, vec![(0, 0, 4.0), (0, 1, 1.0), (1, 0, 1.0), (1, 1, 3.0)]);
        let x = conjugate_gradient(&|v: &[f64]| a.mul_vec(v), &[1.0, 2.0], 1e-14, 10).unwrap();
        assert!((x[0] - 1.0 / 11.0).abs() < 1e-12 && (x[1] - 7.0 / 11.0).abs() < 1e-12);
    }
}
