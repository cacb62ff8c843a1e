//! Sparse grid interpolation over standard Gaussian parameters.
//!
//! One-dimensional nodes are `φ(−1 + 2i/2^{ν+1})`, `i = 1…2^{ν+1}−1`, with
//! `φ = 2√2·erf⁻¹`; the families are nested. The sparse operator is assembled
//! by the combination technique over a downward-closed multi-index set.

use std::collections::{BTreeSet, HashMap};

use statrs::function::erf::erf_inv;

use crate::error::{Error, Result};

/// Largest supported 1D level.
pub const MAX_LEVEL: u8 = 30;

/// Number of 1D nodes `m(ν) = 2^{ν+1} − 1` (so `m(0) = 1`).
pub fn node_count(nu: u8) -> usize {
    (1usize << (nu as u32 + 1)) - 1
}

fn node_value(nu: u8, i: usize) -> f64 {
    let x = -1.0 + 2.0 * i as f64 / (1u64 << (nu as u32 + 1)) as f64;
    if x == 0.0 {
        0.0
    } else {
        2.0 * std::f64::consts::SQRT_2 * erf_inv(x)
    }
}

/// Sorted 1D nodes of level `ν`.
pub fn nodes_1d(nu: u8) -> Result<Vec<f64>> {
    if nu > MAX_LEVEL {
        return Err(Error::InvalidArgument(format!("level {nu} above {MAX_LEVEL}")));
    }
    Ok((1..=node_count(nu)).map(|i| node_value(nu, i)).collect())
}

/// Level-independent identifier of the `i`-th node (1-based) of level `ν`.
fn node_key(nu: u8, i: usize) -> u32 {
    (i as u32) << (MAX_LEVEL - nu)
}

const CENTER_KEY: u32 = 1 << MAX_LEVEL;

/// First node (0-based) of the polynomial piece used at `x`.
fn piece_start(nodes: &[f64], p: usize, x: f64) -> usize {
    let m = nodes.len();
    let last_start = m - 1 - p;
    let interval = if x <= nodes[0] {
        0
    } else if x >= nodes[m - 1] {
        m - 2
    } else {
        nodes.partition_point(|&v| v <= x).saturating_sub(1).min(m - 2)
    };
    ((interval / p) * p).min(last_start)
}

/// Nonzero Lagrange weights `(node index, weight)` of the level-`ν`
/// piecewise degree-`p` interpolant at `x`.
pub fn interp_1d_weights(nu: u8, p: usize, x: f64) -> Result<Vec<(usize, f64)>> {
    if p == 0 {
        return Err(Error::InvalidArgument("polynomial degree must be at least 1".into()));
    }
    if nu == 0 {
        return Ok(vec![(0, 1.0)]);
    }
    let nodes = nodes_1d(nu)?;
    if p > nodes.len() - 1 {
        return Err(Error::InvalidArgument(format!(
            "degree {p} needs {} nodes, level {nu} has {}",
            p + 1,
            nodes.len()
        )));
    }
    let start = piece_start(&nodes, p, x);
    let pts = &nodes[start..=start + p];
    Ok((0..=p)
        .map(|a| {
            let w = (0..=p).filter(|&b| b != a).map(|b| (x - pts[b]) / (pts[a] - pts[b])).product::<f64>();
            (start + a, w)
        })
        .collect())
}

/// Piecewise polynomial interpolation of samples at `nodes_1d(ν)`, extended
/// outside the node range by the boundary polynomial.
pub fn interp_1d(nu: u8, values: &[f64], p: usize, x: f64) -> Result<f64> {
    if values.len() != node_count(nu) {
        return Err(Error::DimensionMismatch(format!("{} samples for {} nodes", values.len(), node_count(nu))));
    }
    Ok(interp_1d_weights(nu, p, x)?.into_iter().map(|(i, w)| w * values[i]).sum())
}

fn ceil_log2(i: usize) -> u32 {
    if i <= 1 {
        0
    } else {
        usize::BITS - (i - 1).leading_zeros()
    }
}

/// Factor of coordinate `i` (1-based) at level `k` in the profit product.
fn profit_factor(i: usize, k: u8, p: usize) -> f64 {
    let c = ceil_log2(i) as f64;
    let pf = p as f64;
    match k {
        0 => 1.0,
        1 => 2f64.powf(-1.5 * c) / (pf * 2.0),
        _ => 2f64.powf(-pf * (k as f64 + 0.5 * c)) / (pf * 2f64.powi(k as i32)),
    }
}

/// Profit `𝒫_ν` of a multi-index (`nu[i]` is the level of coordinate `i + 1`).
pub fn profit(nu: &[u8], p: usize) -> f64 {
    nu.iter().enumerate().map(|(i, &k)| profit_factor(i + 1, k, p)).product()
}

/// Downward-closed set of multi-indices in `N_0^s`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MultiIndexSet {
    pub s: usize,
    pub indices: BTreeSet<Vec<u8>>,
}

impl MultiIndexSet {
    /// Downward closure of `indices` (always containing 0).
    pub fn closure_of(s: usize, indices: impl IntoIterator<Item = Vec<u8>>, cap: usize) -> Result<Self> {
        let mut set = BTreeSet::new();
        set.insert(vec![0u8; s]);
        let mut stack: Vec<Vec<u8>> = indices.into_iter().collect();
        while let Some(nu) = stack.pop() {
            if nu.len() != s {
                return Err(Error::DimensionMismatch(format!("multi-index of length {} in dimension {s}", nu.len())));
            }
            if set.contains(&nu) {
                continue;
            }
            for n in 0..s {
                if nu[n] > 0 {
                    let mut lower = nu.clone();
                    lower[n] -= 1;
                    if !set.contains(&lower) {
                        stack.push(lower);
                    }
                }
            }
            set.insert(nu);
            if set.len() > cap {
                return Err(Error::IndexSetOverflow { cap });
            }
        }
        Ok(MultiIndexSet { s, indices: set })
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn is_downward_closed(&self) -> bool {
        self.indices.iter().all(|nu| {
            (0..self.s).all(|n| {
                nu[n] == 0 || {
                    let mut lower = nu.clone();
                    lower[n] -= 1;
                    self.indices.contains(&lower)
                }
            })
        })
    }

    /// Coordinates with a positive level in some index.
    pub fn active_dimensions(&self) -> usize {
        (0..self.s).filter(|&n| self.indices.iter().any(|nu| nu[n] > 0)).count()
    }

    /// Full tensor box `{ν : ν ≤ top}`.
    pub fn full_box(top: &[u8]) -> Self {
        let mut indices = BTreeSet::new();
        let mut nu = vec![0u8; top.len()];
        loop {
            indices.insert(nu.clone());
            let mut d = 0;
            while d < top.len() && nu[d] == top[d] {
                nu[d] = 0;
                d += 1;
            }
            if d == top.len() {
                break;
            }
            nu[d] += 1;
        }
        MultiIndexSet { s: top.len(), indices }
    }
}

/// Default cardinality cap for [`build_index_set`].
pub const DEFAULT_INDEX_CAP: usize = 200_000;

/// `Λ(ε)`: the downward closure of `{ν : 𝒫_ν > ε} ∪ {0}`.
///
/// The profit is a product of per-coordinate factors below one, so a partial
/// product only decreases when coordinates are switched on; the search prunes
/// on the largest factor still available.
pub fn build_index_set(s: usize, eps: f64, p: usize, cap: usize) -> Result<MultiIndexSet> {
    if s == 0 || p == 0 {
        return Err(Error::InvalidArgument("dimension and degree must be positive".into()));
    }
    if !(eps > 0.0) {
        return Err(Error::InvalidArgument(format!("threshold {eps} must be positive")));
    }
    let best = |i: usize| profit_factor(i, 1, p).max(profit_factor(i, 2, p));
    let mut found = Vec::new();
    let mut nu = vec![0u8; s];
    fn dfs(
        start: usize,
        partial: f64,
        nu: &mut Vec<u8>,
        found: &mut Vec<Vec<u8>>,
        ctx: (usize, f64, usize, &dyn Fn(usize) -> f64),
    ) -> Result<()> {
        let (p, eps, cap, best) = ctx;
        for n in start..nu.len() {
            // the bound is nonincreasing in the coordinate index
            if partial * best(n + 1) <= eps {
                break;
            }
            let mut k: u8 = 1;
            loop {
                let f = profit_factor(n + 1, k, p);
                if partial * f > eps {
                    nu[n] = k;
                    found.push(nu.clone());
                    if found.len() > cap {
                        return Err(Error::IndexSetOverflow { cap });
                    }
                    dfs(n + 1, partial * f, nu, found, ctx)?;
                    nu[n] = 0;
                } else if k >= 2 {
                    break;
                }
                if k == MAX_LEVEL {
                    break;
                }
                k += 1;
            }
        }
        Ok(())
    }
    dfs(0, 1.0, &mut nu, &mut found, (p, eps, cap, &best))?;
    MultiIndexSet::closure_of(s, found, cap)
}

/// Sparse node identifier: `(coordinate, key)` for every coordinate off the center.
type NodeKey = Vec<(u16, u32)>;

/// Combination-technique sparse interpolation operator.
#[derive(Debug, Clone)]
pub struct SparseGridOp {
    pub index_set: MultiIndexSet,
    pub degree: usize,
    /// Node coordinates in `R^s`, in order of first appearance.
    pub nodes: Vec<Vec<f64>>,
    /// Tensor grids with nonzero combination coefficient.
    pub terms: Vec<(Vec<u8>, i64)>,
    keys: HashMap<NodeKey, usize>,
}

impl SparseGridOp {
    pub fn new(index_set: MultiIndexSet, degree: usize) -> Result<Self> {
        if degree == 0 {
            return Err(Error::InvalidArgument("polynomial degree must be at least 1".into()));
        }
        if let Some(nu) = index_set.indices.iter().find(|nu| nu.iter().any(|&k| k > MAX_LEVEL)) {
            return Err(Error::InvalidArgument(format!("level above {MAX_LEVEL} in {nu:?}")));
        }
        if !index_set.is_downward_closed() {
            return Err(Error::InvalidArgument("index set is not downward closed".into()));
        }
        let s = index_set.s;
        let mut nodes = Vec::new();
        let mut keys = HashMap::new();
        for nu in &index_set.indices {
            let active: Vec<usize> = (0..s).filter(|&n| nu[n] > 0).collect();
            let counts: Vec<usize> = active.iter().map(|&n| node_count(nu[n])).collect();
            let mut tuple = vec![1usize; active.len()];
            loop {
                let key: NodeKey = active
                    .iter()
                    .zip(&tuple)
                    .map(|(&n, &i)| (n as u16, node_key(nu[n], i)))
                    .filter(|&(_, k)| k != CENTER_KEY)
                    .collect();
                keys.entry(key).or_insert_with(|| {
                    let mut y = vec![0.0; s];
                    for (&n, &i) in active.iter().zip(&tuple) {
                        y[n] = node_value(nu[n], i);
                    }
                    nodes.push(y);
                    nodes.len() - 1
                });
                if !advance(&mut tuple, &counts) {
                    break;
                }
            }
        }
        let terms = index_set
            .indices
            .iter()
            .filter_map(|nu| {
                let c = combination_coefficient(&index_set, nu);
                (c != 0).then(|| (nu.clone(), c))
            })
            .collect();
        Ok(SparseGridOp { index_set, degree, nodes, terms, keys })
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn dim(&self) -> usize {
        self.index_set.s
    }

    /// Interpolation weights `(node, weight)`; `ℐ[u](y) = Σ w_j u(y_j)`.
    pub fn weights(&self, y: &[f64]) -> Result<Vec<(usize, f64)>> {
        if y.len() != self.dim() {
            return Err(Error::DimensionMismatch(format!("query of length {} in dimension {}", y.len(), self.dim())));
        }
        let mut acc: HashMap<usize, f64> = HashMap::new();
        for (nu, c) in &self.terms {
            let active: Vec<usize> = (0..nu.len()).filter(|&n| nu[n] > 0).collect();
            let w1: Vec<Vec<(usize, f64)>> = active
                .iter()
                .map(|&n| interp_1d_weights(nu[n], self.degree, y[n]))
                .collect::<Result<_>>()?;
            let counts: Vec<usize> = w1.iter().map(Vec::len).collect();
            let mut pick = vec![0usize; active.len()];
            loop {
                let mut w = *c as f64;
                let mut key: NodeKey = Vec::with_capacity(active.len());
                for (d, &n) in active.iter().enumerate() {
                    let (i, wi) = w1[d][pick[d]];
                    w *= wi;
                    let k = node_key(nu[n], i + 1);
                    if k != CENTER_KEY {
                        key.push((n as u16, k));
                    }
                }
                let idx = self.keys[&key];
                *acc.entry(idx).or_insert(0.0) += w;
                if !advance0(&mut pick, &counts) {
                    break;
                }
            }
        }
        let mut out: Vec<(usize, f64)> = acc.into_iter().collect();
        out.sort_by_key(|&(i, _)| i);
        Ok(out)
    }

    /// Evaluates the interpolant of vector-valued `samples` (one per node) at `y`.
    pub fn interpolate(&self, samples: &[Vec<f64>], y: &[f64]) -> Result<Vec<f64>> {
        if samples.len() < self.n_nodes() {
            return Err(Error::MissingSample(samples.len()));
        }
        let d = samples.first().map_or(0, Vec::len);
        let mut out = vec![0.0; d];
        for (i, w) in self.weights(y)? {
            if samples[i].len() != d {
                return Err(Error::DimensionMismatch(format!("sample {i} has length {}", samples[i].len())));
            }
            out.iter_mut().zip(&samples[i]).for_each(|(o, v)| *o += w * v);
        }
        Ok(out)
    }

    /// Index of the node at `y`, if it belongs to the grid.
    pub fn node_index(&self, y: &[f64]) -> Option<usize> {
        self.nodes.iter().position(|n| n == y)
    }
}

/// `c_ν = Σ_{e ∈ {0,1}^s, ν+e ∈ Λ} (−1)^{|e|}`. Since Λ is downward closed,
/// the admissible `e` form a subset-closed family, enumerated depth first.
fn combination_coefficient(set: &MultiIndexSet, nu: &[u8]) -> i64 {
    fn walk(set: &MultiIndexSet, v: &mut Vec<u8>, up: &[usize], from: usize, sign: i64) -> i64 {
        let mut c = sign;
        for k in from..up.len() {
            v[up[k]] += 1;
            if set.indices.contains(v) {
                c += walk(set, v, up, k + 1, -sign);
            }
            v[up[k]] -= 1;
        }
        c
    }
    let mut v = nu.to_vec();
    let up: Vec<usize> = (0..nu.len())
        .filter(|&n| {
            v[n] += 1;
            let inside = set.indices.contains(&v);
            v[n] -= 1;
            inside
        })
        .collect();
    walk(set, &mut v, &up, 0, 1)
}

/// Odometer over 1-based tuples `1..=counts[d]`.
fn advance(tuple: &mut [usize], counts: &[usize]) -> bool {
    for d in 0..tuple.len() {
        if tuple[d] < counts[d] {
            tuple[d] += 1;
            return true;
        }
        tuple[d] = 1;
    }
    false
}

/// Odometer over 0-based tuples `0..counts[d]`.
fn advance0(tuple: &mut [usize], counts: &[usize]) -> bool {
    for d in 0..tuple.len() {
        if tuple[d] + 1 < counts[d] {
            tuple[d] += 1;
            return true;
        }
        tuple[d] = 0;
    }
    false
}
