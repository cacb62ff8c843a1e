//! Independent reference implementations used as test oracles.
//!
//! Nothing here calls into the library's linear algebra or quadrature; the
//! routines are deliberately naive.

#![allow(dead_code)]

use pllg_core::fem::TriMesh;

pub type Dense = Vec<Vec<f64>>;

pub fn zeros(r: usize, c: usize) -> Dense {
    vec![vec![0.0; c]; r]
}

pub fn matvec(a: &Dense, x: &[f64]) -> Vec<f64> {
    a.iter().map(|row| row.iter().zip(x).map(|(u, v)| u * v).sum()).collect()
}

pub fn matmul(a: &Dense, b: &Dense) -> Dense {
    let (n, k, m) = (a.len(), b.len(), b[0].len());
    let mut c = zeros(n, m);
    for i in 0..n {
        for l in 0..k {
            let ail = a[i][l];
            for j in 0..m {
                c[i][j] += ail * b[l][j];
            }
        }
    }
    c
}

pub fn transpose(a: &Dense) -> Dense {
    let (n, m) = (a.len(), a[0].len());
    (0..m).map(|j| (0..n).map(|i| a[i][j]).collect()).collect()
}

/// Gaussian elimination with partial pivoting.
pub fn gauss_solve(a: &Dense, b: &[f64]) -> Vec<f64> {
    let n = a.len();
    let mut m: Dense = a.iter().zip(b).map(|(row, bi)| {
        let mut r = row.clone();
        r.push(*bi);
        r
    }).collect();
    for k in 0..n {
        let p = (k..n).max_by(|&i, &j| m[i][k].abs().total_cmp(&m[j][k].abs())).unwrap();
        m.swap(k, p);
        assert!(m[k][k].abs() > 1e-300, "singular oracle system");
        for i in k + 1..n {
            let f = m[i][k] / m[k][k];
            if f != 0.0 {
                for j in k..=n {
                    m[i][j] -= f * m[k][j];
                }
            }
        }
    }
    let mut x = vec![0.0; n];
    for k in (0..n).rev() {
        let s: f64 = (k + 1..n).map(|j| m[k][j] * x[j]).sum();
        x[k] = (m[k][n] - s) / m[k][k];
    }
    x
}

pub fn cholesky(a: &Dense) -> Dense {
    let n = a.len();
    let mut l = zeros(n, n);
    for j in 0..n {
        let s: f64 = (0..j).map(|k| l[j][k] * l[j][k]).sum();
        l[j][j] = (a[j][j] - s).sqrt();
        for i in j + 1..n {
            let s: f64 = (0..j).map(|k| l[i][k] * l[j][k]).sum();
            l[i][j] = (a[i][j] - s) / l[j][j];
        }
    }
    l
}

/// `L⁻¹ B` for lower-triangular `L`.
pub fn forward_sub(l: &Dense, b: &Dense) -> Dense {
    let n = l.len();
    let m = b[0].len();
    let mut x = zeros(n, m);
    for c in 0..m {
        for i in 0..n {
            let s: f64 = (0..i).map(|k| l[i][k] * x[k][c]).sum();
            x[i][c] = (b[i][c] - s) / l[i][i];
        }
    }
    x
}

/// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations, ascending.
pub fn jacobi_eigenvalues(a: &Dense) -> Vec<f64> {
    let n = a.len();
    let mut m = a.clone();
    for _sweep in 0..100 {
        let off: f64 = (0..n).flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j))).map(|(i, j)| m[i][j] * m[i][j]).sum();
        let diag: f64 = (0..n).map(|i| m[i][i] * m[i][i]).sum();
        if off <= 1e-30 * diag.max(1e-300) {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if m[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (m[q][q] - m[p][p]) / (2.0 * m[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (mkp, mkq) = (m[k][p], m[k][q]);
                    m[k][p] = c * mkp - s * mkq;
                    m[k][q] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let (mpk, mqk) = (m[p][k], m[q][k]);
                    m[p][k] = c * mpk - s * mqk;
                    m[q][k] = s * mpk + c * mqk;
                }
            }
        }
    }
    let mut ev: Vec<f64> = (0..n).map(|i| m[i][i]).collect();
    ev.sort_by(f64::total_cmp);
    ev
}

/// Duffy-collapsed 4×4 Gauss-Legendre rule on the reference triangle
/// `{(ξ, η): ξ, η ≥ 0, ξ + η ≤ 1}`; returns `(ξ, η, weight)` with weights summing to ½.
pub fn duffy_rule() -> Vec<(f64, f64, f64)> {
    let gl = [
        (-0.861_136_311_594_052_6, 0.347_854_845_137_453_8),
        (-0.339_981_043_584_856_3, 0.652_145_154_862_546_1),
        (0.339_981_043_584_856_3, 0.652_145_154_862_546_1),
        (0.861_136_311_594_052_6, 0.347_854_845_137_453_8),
    ];
    let mut out = Vec::new();
    for &(u, wu) in &gl {
        for &(v, wv) in &gl {
            let (a, b) = (0.5 * (u + 1.0), 0.5 * (v + 1.0));
            // (a, b) ∈ [0,1]² ↦ (ξ, η) = (a, (1 − a) b), Jacobian (1 − a)
            out.push((a, (1.0 - a) * b, 0.25 * wu * wv * (1.0 - a)));
        }
    }
    out
}

/// Physical quadrature points of one triangle: `(x, [φ₀, φ₁, φ₂] at x, weight)`.
pub fn triangle_points(coords: [[f64; 2]; 3]) -> Vec<([f64; 2], [f64; 3], f64)> {
    let (e1, e2) = (
        [coords[1][0] - coords[0][0], coords[1][1] - coords[0][1]],
        [coords[2][0] - coords[0][0], coords[2][1] - coords[0][1]],
    );
    let jac = (e1[0] * e2[1] - e1[1] * e2[0]).abs();
    duffy_rule()
        .into_iter()
        .map(|(xi, eta, w)| {
            let x = [coords[0][0] + xi * e1[0] + eta * e2[0], coords[0][1] + xi * e1[1] + eta * e2[1]];
            ([x[0], x[1]], [1.0 - xi - eta, xi, eta], w * jac)
        })
        .collect()
}

/// Gradients of the three hat functions of a triangle.
pub fn hat_gradients(coords: [[f64; 2]; 3]) -> [[f64; 2]; 3] {
    let [p0, p1, p2] = coords;
    let det = (p1[0] - p0[0]) * (p2[1] - p0[1]) - (p2[0] - p0[0]) * (p1[1] - p0[1]);
    [
        [(p1[1] - p2[1]) / det, (p2[0] - p1[0]) / det],
        [(p2[1] - p0[1]) / det, (p0[0] - p2[0]) / det],
        [(p0[1] - p1[1]) / det, (p1[0] - p0[0]) / det],
    ]
}

fn triangle_coords(mesh: &TriMesh, t: usize) -> ([usize; 3], [[f64; 2]; 3]) {
    let tri = mesh.triangles[t];
    (tri, [mesh.nodes[tri[0]], mesh.nodes[tri[1]], mesh.nodes[tri[2]]])
}

/// Scalar P1 mass and stiffness matrices by brute-force quadrature.
pub fn brute_grams(mesh: &TriMesh) -> (Dense, Dense) {
    let n = mesh.nodes.len();
    let (mut m, mut k) = (zeros(n, n), zeros(n, n));
    for t in 0..mesh.triangles.len() {
        let (tri, coords) = triangle_coords(mesh, t);
        let g = hat_gradients(coords);
        for (_, phi, w) in triangle_points(coords) {
            for a in 0..3 {
                for b in 0..3 {
                    m[tri[a]][tri[b]] += w * phi[a] * phi[b];
                    k[tri[a]][tri[b]] += w * (g[a][0] * g[b][0] + g[a][1] * g[b][1]);
                }
            }
        }
    }
    (m, k)
}

pub fn block3(a: &Dense) -> Dense {
    let n = a.len();
    let mut out = zeros(3 * n, 3 * n);
    for c in 0..3 {
        for i in 0..n {
            for j in 0..n {
                out[c * n + i][c * n + j] = a[i][j];
            }
        }
    }
    out
}

fn field_at(coeffs: &[f64], n: usize, tri: [usize; 3], phi: [f64; 3]) -> [f64; 3] {
    let mut v = [0.0; 3];
    for a in 0..3 {
        for c in 0..3 {
            v[c] += phi[a] * coeffs[c * n + tri[a]];
        }
    }
    v
}

fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

/// `C_ij = ∫ (m × φ_j) · φ_i` over vector hat functions `φ = ψ_a e_c`.
pub fn brute_cross_matrix(mesh: &TriMesh, m: &[f64]) -> Dense {
    let n = mesh.nodes.len();
    let mut out = zeros(3 * n, 3 * n);
    for t in 0..mesh.triangles.len() {
        let (tri, coords) = triangle_coords(mesh, t);
        for (_, phi, w) in triangle_points(coords) {
            let mv = field_at(m, n, tri, phi);
            for a in 0..3 {
                for c in 0..3 {
                    let mut e = [0.0; 3];
                    e[c] = 1.0;
                    let mxe = cross(mv, e);
                    for b in 0..3 {
                        for d in 0..3 {
                            out[d * n + tri[b]][c * n + tri[a]] += w * phi[a] * phi[b] * mxe[d];
                        }
                    }
                }
            }
        }
    }
    out
}

/// `B_ij = ∫ (φ_j · m) ψ_i`, shape `N_h × 3N_h`.
pub fn brute_constraint(mesh: &TriMesh, m: &[f64]) -> Dense {
    let n = mesh.nodes.len();
    let mut out = zeros(n, 3 * n);
    for t in 0..mesh.triangles.len() {
        let (tri, coords) = triangle_coords(mesh, t);
        for (_, phi, w) in triangle_points(coords) {
            let mv = field_at(m, n, tri, phi);
            for i in 0..3 {
                for a in 0..3 {
                    for c in 0..3 {
                        out[tri[i]][c * n + tri[a]] += w * phi[i] * phi[a] * mv[c];
                    }
                }
            }
        }
    }
    out
}

/// Rodrigues rotation about unit axis `g` by angle `−w` (so that `G u = u × g`
/// generates `e^{wG}`).
pub fn rodrigues(w: f64, g: [f64; 3], v: [f64; 3]) -> [f64; 3] {
    // e^{wG} v with G v = v × g = −g × v is rotation by −w about g
    let (s, c) = ((-w).sin(), (-w).cos());
    let gxv = cross(g, v);
    let gv = g[0] * v[0] + g[1] * v[1] + g[2] * v[2];
    [0, 1, 2].map(|k| v[k] * c + gxv[k] * s + g[k] * gv * (1.0 - c))
}

/// Load vector `f_i = −∫ ∇I(e^{WG}m) : ∇I(e^{WG}φ_i) + ∫ I(e^{−WG}H) · φ_i`.
pub fn brute_load(mesh: &TriMesh, m: &[f64], g: &[f64], w: f64, h: [f64; 3]) -> Vec<f64> {
    let n = mesh.nodes.len();
    let node = |v: &[f64], a: usize| [v[a], v[n + a], v[2 * n + a]];
    let (mass, stiff) = brute_grams(mesh);
    let u: Vec<[f64; 3]> = (0..n).map(|a| rodrigues(w, node(g, a), node(m, a))).collect();
    let hrot: Vec<[f64; 3]> = (0..n).map(|a| rodrigues(-w, node(g, a), h)).collect();
    let mut f = vec![0.0; 3 * n];
    for a in 0..n {
        for c in 0..3 {
            let mut e = [0.0; 3];
            e[c] = 1.0;
            let r = rodrigues(w, node(g, a), e);
            let mut s = 0.0;
            for b in 0..n {
                s -= stiff[a][b] * (u[b][0] * r[0] + u[b][1] * r[1] + u[b][2] * r[2]);
                s += mass[a][b] * hrot[b][c];
            }
            f[c * n + a] = s;
        }
    }
    f
}

/// `erf(x) = 2/√π · e^{−x²} · Σ 2ⁿ x^{2n+1} / (1·3·…·(2n+1))`; every term is
/// positive, so the sum carries no cancellation for moderate `x ≥ 0`.
pub fn erf_series(x: f64) -> f64 {
    if x < 0.0 {
        return -erf_series(-x);
    }
    let (mut term, mut sum, mut n) = (x, x, 0.0);
    while term > 1e-18 * sum {
        n += 1.0;
        term *= 2.0 * x * x / (2.0 * n + 1.0);
        sum += term;
    }
    2.0 / std::f64::consts::PI.sqrt() * (-x * x).exp() * sum
}

/// `erf⁻¹` by bisection on [`erf_series`].
pub fn erfinv_bisect(x: f64) -> f64 {
    let (mut lo, mut hi) = (-6.0f64, 6.0f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if erf_series(mid) < x {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Deterministic pseudo-random numbers in `[-1, 1)` (xorshift), independent of `rand`.
pub struct XorShift(pub u64);

impl XorShift {
    pub fn next(&mut self) -> f64 {
        self.0 ^= self.0 << 13;
        self.0 ^= self.0 >> 7;
        self.0 ^= self.0 << 17;
        (self.0 >> 11) as f64 / (1u64 << 52) as f64 - 1.0
    }

    pub fn vec(&mut self, n: usize) -> Vec<f64> {
        (0..n).map(|_| self.next()).collect()
    }

    pub fn unit_field(&mut self, n_nodes: usize) -> Vec<f64> {
        let mut v = self.vec(3 * n_nodes);
        for a in 0..n_nodes {
            let r = (v[a].powi(2) + v[n_nodes + a].powi(2) + v[2 * n_nodes + a].powi(2)).sqrt();
            for c in 0..3 {
                v[c * n_nodes + a] /= r;
            }
        }
        v
    }
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Piecewise-linear interpolation through sorted `(xs, vs)`, extended linearly
/// beyond the end nodes.
pub fn linear_interp(xs: &[f64], vs: &[f64], x: f64) -> f64 {
    if xs.len() == 1 {
        return vs[0];
    }
    let mut k = 0;
    while k + 2 < xs.len() && x > xs[k + 1] {
        k += 1;
    }
    vs[k] + (x - xs[k]) * (vs[k + 1] - vs[k]) / (xs[k + 1] - xs[k])
}

/// Full tensor-product piecewise-linear interpolant of `f` on `xs × ys`, by
/// summing over all node pairs with 1D cardinal functions.
pub fn tensor_interp(xs: &[f64], ys: &[f64], f: impl Fn(f64, f64) -> f64, q: [f64; 2]) -> f64 {
    let card = |nodes: &[f64], i: usize, t: f64| {
        let e: Vec<f64> = (0..nodes.len()).map(|k| if k == i { 1.0 } else { 0.0 }).collect();
        linear_interp(nodes, &e, t)
    };
    let mut s = 0.0;
    for (i, &x) in xs.iter().enumerate() {
        for (j, &y) in ys.iter().enumerate() {
            s += f(x, y) * card(xs, i, q[0]) * card(ys, j, q[1]);
        }
    }
    s
}

/// Method of snapshots: eigenvalues of `SᵀQS / N` in decreasing order, whose
/// square roots are the POD singular values.
pub fn snapshot_eigenvalues(q: &Dense, cols: &[Vec<f64>]) -> Vec<f64> {
    let n = cols.len();
    let qc: Vec<Vec<f64>> = cols.iter().map(|c| matvec(q, c)).collect();
    let mut c = zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            c[i][j] = cols[i].iter().zip(&qc[j]).map(|(a, b)| a * b).sum::<f64>() / n as f64;
        }
    }
    let mut ev = jacobi_eigenvalues(&c);
    ev.sort_by(|a, b| b.partial_cmp(a).unwrap());
    ev
}
