//! Galerkin POD online phase of the tangent plane scheme with optional
//! supremizer enrichment of the velocity space.

use std::fmt;
use std::str::FromStr;

use faer::Mat;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fem::{assemble_constraint, FeScalarField, FeVectorField, GramSet, TriMesh};
use crate::linalg::{self, SparseMatrix};
use crate::noise::{BrownianPath, ParamVector};
use crate::pod::ReducedBasis;
use crate::tps::{assemble_step, TpsConfig};
use crate::field_ops::NoiseModel;

/// Online method variants.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Variant {
    /// `J = R`
    #[serde(rename = "OG-1x")]
    Og1x,
    /// `J = 3R`
    #[serde(rename = "OG-3x")]
    Og3x,
    /// `K = R = ⌊√J⌋` plus supremizers
    #[serde(rename = "SS-OG-1x")]
    SsOg1x,
    /// `K = ⌊√(J/3)⌋`, `R = 3K` plus supremizers
    #[serde(rename = "SS-OG-3x")]
    SsOg3x,
}

impl Variant {
    pub const ALL: [Variant; 4] = [Variant::Og1x, Variant::Og3x, Variant::SsOg1x, Variant::SsOg3x];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Og1x => "OG-1x",
            Variant::Og3x => "OG-3x",
            Variant::SsOg1x => "SS-OG-1x",
            Variant::SsOg3x => "SS-OG-3x",
        }
    }

    pub fn stabilized(self) -> bool {
        matches!(self, Variant::SsOg1x | Variant::SsOg3x)
    }

    /// `(J, R, K)` for a velocity budget `J`; `K = 0` without stabilization.
    pub fn dimensions(self, j: usize) -> (usize, usize, usize) {
        match self {
            Variant::Og1x => (j, j, 0),
            Variant::Og3x => (j, j / 3, 0),
            Variant::SsOg1x => {
                let k = isqrt(j);
                (j, k, k)
            }
            Variant::SsOg3x => {
                let k = isqrt(j / 3);
                (j, 3 * k, k)
            }
        }
    }
}

fn isqrt(n: usize) -> usize {
    let mut r = (n as f64).sqrt() as usize;
    while r * r > n {
        r -= 1;
    }
    while (r + 1) * (r + 1) <= n {
        r += 1;
    }
    r
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::InvalidArgument(format!("unknown variant `{s}` (expected OG-1x, OG-3x, SS-OG-1x, SS-OG-3x)")))
    }
}

/// Basis the initial condition is projected onto.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialProjection {
    /// The online velocity space.
    VelocityBasis,
    /// The magnetization POD space.
    #[default]
    MagnetizationBasis,
}

/// State the reduced velocity is added to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UpdateBase {
    /// `mⁿ⁺¹ = m̂ⁿ + τ vⁿ`, as in the high-fidelity scheme.
    #[default]
    Normalized,
    /// `mⁿ⁺¹ = mⁿ + τ vⁿ`, accumulating the unnormalized iterates.
    Accumulate,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RomOptions {
    pub initial_projection: InitialProjection,
    pub update_base: UpdateBase,
}

/// Online reduced spaces.
#[derive(Debug, Clone)]
pub struct RomSpaces {
    /// `Q`-orthonormal velocity basis (POD modes followed by surviving supremizers).
    pub v_phi: Mat<f64>,
    pub lambda_basis: ReducedBasis,
    /// Magnetization basis; its leading `k_sup` modes generate the supremizers.
    pub m_basis: ReducedBasis,
    pub v_gram: SparseMatrix,
    pub variant: Option<Variant>,
    /// Magnetization modes used as supremizer directions.
    pub k_sup: usize,
    /// POD velocity modes before enrichment.
    pub j_base: usize,
    /// Supremizers kept after re-orthonormalization.
    pub n_supremizers: usize,
}

/// `T_η ζ`: solves `Q t = B(η)ᵀ ζ`.
pub fn supremizer(mesh: &TriMesh, grams: &GramSet, eta: &FeVectorField, zeta: &FeScalarField) -> Result<FeVectorField> {
    let b = assemble_constraint(mesh, eta);
    supremizer_with(grams, &b, &zeta.coeffs)
}

fn supremizer_with(grams: &GramSet, b: &SparseMatrix, zeta: &[f64]) -> Result<FeVectorField> {
    let rhs = b.tr_mul_vec(zeta);
    let t = grams.solve_q(&rhs);
    let res = linalg::sub(&grams.q_vec.mul_vec(&t), &rhs);
    let scale = linalg::norm2(&rhs);
    if linalg::norm2(&res) > 1e-10 * scale {
        return Err(Error::Factorization(format!(
            "supremizer residual {:.2e} above tolerance",
            linalg::norm2(&res) / scale
        )));
    }
    Ok(FeVectorField::from_coeffs(t))
}

/// Relative drop tolerance of the enrichment Gram-Schmidt.
pub const ENRICH_DROP_TOL: f64 = 1e-10;

/// Appends `extra` columns to the `Q`-orthonormal `base` by two-pass modified
/// Gram-Schmidt, dropping columns whose remaining norm falls below
/// `ENRICH_DROP_TOL` times their original norm.
pub fn enrich_orthonormal(base: &Mat<f64>, extra: &[Vec<f64>], gram: &SparseMatrix) -> (Mat<f64>, usize) {
    let mut cols: Vec<Vec<f64>> = (0..base.ncols()).map(|j| linalg::col_to_vec(base.as_ref(), j)).collect();
    let mut qcols: Vec<Vec<f64>> = cols.iter().map(|c| gram.mul_vec(c)).collect();
    let mut kept = 0;
    for e in extra {
        let norm0 = gram.bilinear(e, e).max(0.0).sqrt();
        if norm0 == 0.0 {
            continue;
        }
        let mut w = e.clone();
        for _pass in 0..2 {
            for (c, qc) in cols.iter().zip(&qcols) {
                let p = linalg::dot(qc, &w);
                w.iter_mut().zip(c).for_each(|(wi, ci)| *wi -= p * ci);
            }
        }
        let qw = gram.mul_vec(&w);
        let norm = linalg::dot(&qw, &w).max(0.0).sqrt();
        if norm <= ENRICH_DROP_TOL * norm0 {
            continue;
        }
        cols.push(w.iter().map(|v| v / norm).collect());
        qcols.push(qw.iter().map(|v| v / norm).collect());
        kept += 1;
    }
    let n = base.nrows();
    (Mat::from_fn(n, cols.len(), |i, j| cols[j][i]), kept)
}

/// Builds the online spaces of `variant` from untruncated (or sufficiently
/// large) velocity, multiplier and magnetization bases.
pub fn build_rom_spaces(
    mesh: &TriMesh,
    grams: &GramSet,
    v_basis: &ReducedBasis,
    lambda_basis: &ReducedBasis,
    m_basis: &ReducedBasis,
    variant: Variant,
    budget: usize,
) -> Result<RomSpaces> {
    let (j, r, k) = variant.dimensions(budget);
    if j == 0 {
        return Err(Error::InvalidArgument("velocity dimension must be positive".into()));
    }
    for (name, want, have) in [("velocity", j, v_basis.dim()), ("multiplier", r, lambda_basis.dim()), ("magnetization", k, m_basis.dim())] {
        if want > have {
            return Err(Error::InvalidArgument(format!("{variant}: {name} dimension {want} exceeds basis rank {have}")));
        }
    }
    let v = v_basis.truncate_to(j)?;
    let lambda = lambda_basis.truncate_to(r)?;
    let (v_phi, n_sup) = if variant.stabilized() {
        let mut extra = Vec::with_capacity(k * r);
        for kk in 0..k {
            let eta = FeVectorField::from_coeffs(linalg::col_to_vec(m_basis.phi.as_ref(), kk));
            let b = assemble_constraint(mesh, &eta);
            for rr in 0..r {
                extra.push(supremizer_with(grams, &b, &linalg::col_to_vec(lambda.phi.as_ref(), rr))?.coeffs);
            }
        }
        enrich_orthonormal(&v.phi, &extra, &grams.q_vec)
    } else {
        (v.phi.clone(), 0)
    };
    Ok(RomSpaces {
        v_phi,
        lambda_basis: lambda,
        m_basis: m_basis.clone(),
        v_gram: grams.q_vec.clone(),
        variant: Some(variant),
        k_sup: k,
        j_base: j,
        n_supremizers: n_sup,
    })
}

impl RomSpaces {
    /// Spaces spanning the whole finite element space (Galerkin = high fidelity).
    pub fn full(grams: &GramSet) -> Result<Self> {
        let v = ReducedBasis::full(&grams.q_vec)?;
        let lambda = ReducedBasis::full(&grams.mass_scalar)?;
        Ok(RomSpaces {
            v_phi: v.phi.clone(),
            j_base: v.dim(),
            lambda_basis: lambda,
            m_basis: v,
            v_gram: grams.q_vec.clone(),
            variant: None,
            k_sup: 0,
            n_supremizers: 0,
        })
    }

    /// Spaces made of given bases, without enrichment.
    pub fn plain(v_basis: &ReducedBasis, lambda_basis: &ReducedBasis, m_basis: &ReducedBasis) -> Self {
        RomSpaces {
            v_phi: v_basis.phi.clone(),
            j_base: v_basis.dim(),
            lambda_basis: lambda_basis.clone(),
            m_basis: m_basis.clone(),
            v_gram: v_basis.gram.clone(),
            variant: None,
            k_sup: 0,
            n_supremizers: 0,
        }
    }

    /// Online velocity dimension `J'`.
    pub fn v_dim(&self) -> usize {
        self.v_phi.ncols()
    }

    pub fn lambda_dim(&self) -> usize {
        self.lambda_basis.dim()
    }

    /// `B̃ = Φ_λᵀ B Φ_v`
    pub fn project_constraint(&self, b: &SparseMatrix) -> Mat<f64> {
        let bphi = b.mul_dense(self.v_phi.as_ref());
        self.lambda_basis.phi.transpose() * &bphi
    }

    /// Per-mode projected constraints `Φ_λᵀ B(η_k) Φ_v`.
    pub fn affine_constraint_blocks(&self, mesh: &TriMesh) -> Vec<Mat<f64>> {
        (0..self.m_basis.dim())
            .map(|k| {
                let eta = FeVectorField::from_coeffs(linalg::col_to_vec(self.m_basis.phi.as_ref(), k));
                self.project_constraint(&assemble_constraint(mesh, &eta))
            })
            .collect()
    }
}

/// `Σ_k c_k B̃_k`
pub fn affine_constraint(blocks: &[Mat<f64>], coeffs: &[f64]) -> Result<Mat<f64>> {
    let first = blocks.first().ok_or_else(|| Error::InvalidArgument("no affine blocks".into()))?;
    if coeffs.len() != blocks.len() {
        return Err(Error::DimensionMismatch("one coefficient per affine block required".into()));
    }
    let mut out = Mat::<f64>::zeros(first.nrows(), first.ncols());
    for (blk, c) in blocks.iter().zip(coeffs) {
        for j in 0..out.ncols() {
            for i in 0..out.nrows() {
                out[(i, j)] += c * blk[(i, j)];
            }
        }
    }
    Ok(out)
}

/// Smallest singular value of a projected constraint; `+∞` without
/// multipliers, `0` when the multiplier space is larger than the velocity space.
pub fn smallest_singular_value(b_red: &Mat<f64>) -> Result<f64> {
    if b_red.nrows() == 0 {
        return Ok(f64::INFINITY);
    }
    if b_red.nrows() > b_red.ncols() {
        return Ok(0.0);
    }
    let sv = linalg::singular_values(b_red.as_ref())?;
    Ok(sv.last().copied().unwrap_or(0.0))
}

/// Reduced inf-sup constant at a full-space magnetization.
pub fn rom_infsup(mesh: &TriMesh, spaces: &RomSpaces, m_hat: &FeVectorField) -> Result<f64> {
    smallest_singular_value(&spaces.project_constraint(&assemble_constraint(mesh, m_hat)))
}

#[derive(Debug, Clone, PartialEq)]
pub struct RomTrajectory {
    /// Reduced velocity coefficients `vⁿ_J ∈ R^{J'}`, `n = 0…N_T−1`.
    pub reduced_coeffs: Vec<Vec<f64>>,
    /// Reduced multiplier coefficients, `n = 0…N_T−1`.
    pub lambda_coeffs: Vec<Vec<f64>>,
    /// `m̂⁰_J … m̂^{N_T}_J` in the full space.
    pub full_magnetizations: Vec<FeVectorField>,
    /// Reduced inf-sup constant at every step.
    pub infsup: Vec<f64>,
}

impl RomTrajectory {
    pub fn min_infsup(&self) -> f64 {
        self.infsup.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

/// Pivot threshold of the dense reduced saddle solve.
pub const ROM_PIVOT_TOL: f64 = 1e-12;

/// Online phase for one parameter.
#[allow(clippy::too_many_arguments)]
pub fn rom_run(
    mesh: &TriMesh,
    grams: &GramSet,
    noise: &NoiseModel,
    spaces: &RomSpaces,
    m0_h: &FeVectorField,
    y: &ParamVector,
    cfg: &TpsConfig,
    opts: &RomOptions,
) -> Result<RomTrajectory> {
    match rom_run_partial(mesh, grams, noise, spaces, m0_h, y, cfg, opts)? {
        (traj, None) => Ok(traj),
        (_, Some(e)) => Err(e),
    }
}

/// Like [`rom_run`], but a breakdown of the reduced system is returned next to the
/// steps completed so far. The inf-sup value of the failing step is kept.
#[allow(clippy::too_many_arguments)]
pub fn rom_run_partial(
    mesh: &TriMesh,
    grams: &GramSet,
    noise: &NoiseModel,
    spaces: &RomSpaces,
    m0_h: &FeVectorField,
    y: &ParamVector,
    cfg: &TpsConfig,
    opts: &RomOptions,
) -> Result<(RomTrajectory, Option<Error>)> {
    let n_steps = cfg.n_steps()?;
    if m0_h.coeffs.len() != spaces.v_phi.nrows() {
        return Err(Error::DimensionMismatch("initial condition does not match reduced spaces".into()));
    }
    let path = BrownianPath::new(y.clone(), cfg.final_time)?;
    let (jd, rd) = (spaces.v_dim(), spaces.lambda_dim());
    let variant = spaces.variant.map_or("full", |v| v.name());

    let mut m = match opts.initial_projection {
        InitialProjection::VelocityBasis => {
            let c = linalg::tr_mul(spaces.v_phi.as_ref(), &spaces.v_gram.mul_vec(&m0_h.coeffs));
            linalg::mul(spaces.v_phi.as_ref(), &c)
        }
        InitialProjection::MagnetizationBasis => spaces.m_basis.project(&m0_h.coeffs)?.1,
    };
    let mut out = RomTrajectory {
        reduced_coeffs: Vec::with_capacity(n_steps),
        lambda_coeffs: Vec::with_capacity(n_steps),
        full_magnetizations: Vec::with_capacity(n_steps + 1),
        infsup: Vec::with_capacity(n_steps),
    };
    let mut m_hat = match FeVectorField::from_coeffs(m.clone()).normalized() {
        Ok(f) => f,
        Err(e) => {
            let detail = format!("{variant}: projected initial condition: {e}");
            return Ok((out, Some(Error::SingularSystem { step: 0, detail })));
        }
    };
    out.full_magnetizations.push(m_hat.clone());
    for n in 0..n_steps {
        let t = cfg.time(n);
        let w = path.eval(t)?;
        let sys = assemble_step(mesh, grams, noise, &m_hat, w, t, cfg);
        let aphi = sys.a.mul_dense(spaces.v_phi.as_ref());
        let a_red = spaces.v_phi.transpose() * &aphi;
        let b_red = spaces.project_constraint(&sys.b);
        let f_red = linalg::tr_mul(spaces.v_phi.as_ref(), &sys.f);
        let dim = jd + rd;
        let k = Mat::from_fn(dim, dim, |i, j| match (i < jd, j < jd) {
            (true, true) => a_red[(i, j)],
            (true, false) => b_red[(j - jd, i)],
            (false, true) => b_red[(i - jd, j)],
            (false, false) => 0.0,
        });
        let mut rhs = f_red;
        rhs.resize(dim, 0.0);
        out.infsup.push(smallest_singular_value(&b_red)?);
        let x = match linalg::dense_solve_checked(k.as_ref(), &rhs, ROM_PIVOT_TOL) {
            Ok(x) => x,
            Err(detail) => {
                return Ok((out, Some(Error::SingularSystem { step: n, detail: format!("{variant}: {detail}") })));
            }
        };
        let v_full = linalg::mul(spaces.v_phi.as_ref(), &x[..jd]);
        let base = match opts.update_base {
            UpdateBase::Normalized => &m_hat.coeffs,
            UpdateBase::Accumulate => &m,
        };
        m = linalg::axpy(cfg.tau, &v_full, base);
        m_hat = if cfg.normalize {
            match FeVectorField::from_coeffs(m.clone()).normalized() {
                Ok(f) => f,
                Err(e) => {
                    return Ok((out, Some(Error::SingularSystem { step: n, detail: format!("{variant}: {e}") })));
                }
            }
        } else {
            FeVectorField::from_coeffs(m.clone())
        };
        out.reduced_coeffs.push(x[..jd].to_vec());
        out.lambda_coeffs.push(x[jd..].to_vec());
        out.full_magnetizations.push(m_hat.clone());
    }
    Ok((out, None))
}
