//! Lévy-Ciesielski parametrization of Brownian paths.
//!
//! `W(y, t) = √T · Σ_{n=1}^{s} y_n η_n(t/T)` with the Faber-Schauder basis
//! `η_1(t) = t` and, for `n = 2^{ℓ-1} + j` (`ℓ ≥ 1`, `1 ≤ j ≤ 2^{ℓ-1}`), hats
//! supported on `[(j-1)/2^{ℓ-1}, j/2^{ℓ-1}]` with peak `2^{-(ℓ+1)/2}`.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};

/// Finite truncation `y = (y_1, …, y_s)` of the expansion coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamVector {
    pub y: Vec<f64>,
}

impl ParamVector {
    pub fn new(y: Vec<f64>) -> Result<Self> {
        if y.is_empty() {
            return Err(Error::InvalidArgument("parameter dimension must be at least 1".into()));
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("parameter entries must be finite".into()));
        }
        Ok(ParamVector { y })
    }

    pub fn zeros(s: usize) -> Self {
        ParamVector { y: vec![0.0; s.max(1)] }
    }

    pub fn dim(&self) -> usize {
        self.y.len()
    }
}

/// Level `ℓ` and in-level position `j` of basis index `n ≥ 2`.
fn level_of(n: usize) -> (u32, usize) {
    let l = (usize::BITS - 1 - (n - 1).leading_zeros()) + 1;
    let j = n - (1usize << (l - 1));
    (l, j)
}

/// Faber-Schauder basis function `η_n` on `[0, 1]`.
pub fn faber_schauder(n: usize, t: f64) -> Result<f64> {
    if n == 0 {
        return Err(Error::InvalidArgument("basis index must be at least 1".into()));
    }
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::InvalidArgument(format!("t = {t} outside [0, 1]")));
    }
    Ok(faber_schauder_unchecked(n, t))
}

fn faber_schauder_unchecked(n: usize, t: f64) -> f64 {
    if n == 1 {
        return t;
    }
    let (l, j) = level_of(n);
    let width = 1.0 / (1u64 << (l - 1)) as f64;
    let left = (j - 1) as f64 * width;
    let right = j as f64 * width;
    if t <= left || t >= right {
        return 0.0;
    }
    let peak = 2f64.powf(-((l + 1) as f64) / 2.0);
    let mid = 0.5 * (left + right);
    let half = 0.5 * width;
    peak * (1.0 - (t - mid).abs() / half)
}

/// A parametrized Brownian path on `[0, T]`.
#[derive(Debug, Clone, PartialEq)]
pub struct BrownianPath {
    pub y: ParamVector,
    pub final_time: f64,
}

impl BrownianPath {
    pub fn new(y: ParamVector, final_time: f64) -> Result<Self> {
        if !(final_time > 0.0) {
            return Err(Error::InvalidArgument("final time must be positive".into()));
        }
        Ok(BrownianPath { y, final_time })
    }

    /// `W(y, t)` for `t ∈ [0, T]`.
    pub fn eval(&self, t: f64) -> Result<f64> {
        let tol = 1e-12 * self.final_time;
        if t < -tol || t > self.final_time + tol {
            return Err(Error::InvalidArgument(format!("t = {t} outside [0, {}]", self.final_time)));
        }
        let u = (t / self.final_time).clamp(0.0, 1.0);
        let sum: f64 = self
            .y
            .y
            .iter()
            .enumerate()
            .filter(|(_, c)| **c != 0.0)
            .map(|(k, c)| c * faber_schauder_unchecked(k + 1, u))
            .sum();
        Ok(self.final_time.sqrt() * sum)
    }
}

/// Number of levels touched by a truncation of length `s`.
pub fn level_count(s: usize) -> usize {
    if s == 0 {
        0
    } else if s == 1 {
        1
    } else {
        level_of(s).0 as usize + 1
    }
}

/// Partial sum `Σ_ℓ max_j |y_{⌊2^{ℓ-1}⌋+j}| · 2^{-(1-δ)ℓ/2}` over the levels
/// covered by `y` (entries beyond the truncation count as zero).
pub fn gamma_sum(y: &[f64], delta: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&delta) {
        return Err(Error::InvalidArgument(format!("delta = {delta} outside [0, 1)")));
    }
    let mut total = 0.0;
    for l in 0..level_count(y.len()) {
        // ℓ = 0 covers index 1; ℓ ≥ 1 covers 2^{ℓ-1}+1 ..= 2^ℓ.
        let (first, count) = if l == 0 { (1, 1) } else { ((1usize << (l - 1)) + 1, 1usize << (l - 1)) };
        let max = (first..first + count)
            .filter_map(|n| y.get(n - 1))
            .fold(0.0f64, |m, v| m.max(v.abs()));
        total += max * 2f64.powf(-(1.0 - delta) * l as f64 / 2.0);
    }
    Ok(total)
}

/// `count` i.i.d. standard Normal vectors of length `s`, reproducible from `seed`.
///
/// Uses ChaCha20 and the Ziggurat transform of `rand_distr`, both of which are
/// platform independent.
pub fn sample_parameters(s: usize, count: usize, seed: u64) -> Result<Vec<ParamVector>> {
    if s == 0 || count == 0 {
        return Err(Error::InvalidArgument("dimension and count must be positive".into()));
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    Ok((0..count)
        .map(|_| ParamVector { y: (0..s).map(|_| StandardNormal.sample(&mut rng)).collect() })
        .collect())
}
