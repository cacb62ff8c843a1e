//! Preset studies: variant comparison with τ/h refinement (`relax-1d`), parameter
//! dimension robustness (`relax-nd`), SG-RBP convergence (`sg-conv`) and the
//! switching benchmark (`switching`).

use std::collections::HashMap;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::ExperimentConfig;
use crate::error::{Error, Result};
use crate::fem::{FeVectorField, GramSet};
use crate::io::{fmt_f64, Manifest, Table};
use crate::metrics::{galerkin_pod_error, physical_diagnostics, rate_fit, sequence_error};
use crate::noise::{sample_parameters, ParamVector};
use crate::pod::{pod_compute, projection_error, truncation_dimension, Quantity, ReducedBasis, SnapshotSet};
use crate::rom::{build_rom_spaces, rom_run_partial, RomOptions, RomSpaces, RomTrajectory, Variant};
use crate::setup::Problem;
use crate::sgrbp::SgRbpSurrogate;
use crate::sparse_grid::{build_index_set, SparseGridOp};
use crate::tps::{fill_infsup, tps_run_from, TpsConfig, Trajectory};

pub const EXPERIMENTS: [&str; 4] = ["relax-1d", "relax-nd", "sg-conv", "switching"];

/// Independent seed for a named stage, derived from the root seed.
pub fn stage_seed(root: u64, stage: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(root.to_le_bytes());
    h.update(stage.as_bytes());
    u64::from_le_bytes(h.finalize()[..8].try_into().unwrap())
}

fn staged<T>(stage: &str, r: Result<T>) -> Result<T> {
    r.map_err(|e| Error::stage(stage, e))
}

/// High-fidelity trajectories for every parameter, in order.
pub fn sample_trajectories(problem: &Problem, params: &[ParamVector], cfg: &TpsConfig) -> Result<Vec<Trajectory>> {
    params
        .par_iter()
        .map(|y| tps_run_from(&problem.mesh, &problem.grams, &problem.noise, &problem.m0_h, y, cfg))
        .collect()
}

/// POD bases of the three quantities.
#[derive(Debug, Clone)]
pub struct Bases {
    pub m: ReducedBasis,
    pub v: ReducedBasis,
    pub lambda: ReducedBasis,
}

impl Bases {
    pub fn compute(trajs: &[Trajectory], grams: &GramSet) -> Result<Self> {
        let pod = |q| pod_compute(&SnapshotSet::from_trajectories(trajs, q, grams)?);
        Ok(Bases { m: pod(Quantity::Magnetization)?, v: pod(Quantity::Velocity)?, lambda: pod(Quantity::Multiplier)? })
    }

    pub fn get(&self, q: Quantity) -> &ReducedBasis {
        match q {
            Quantity::Magnetization => &self.m,
            Quantity::Velocity => &self.v,
            Quantity::Multiplier => &self.lambda,
        }
    }
}

/// Training set, test set and their trajectories.
#[derive(Debug)]
pub struct OfflineData {
    pub train: Vec<ParamVector>,
    pub train_trajs: Vec<Trajectory>,
    pub test: Vec<ParamVector>,
    pub test_trajs: Vec<Trajectory>,
    pub bases: Bases,
}

pub fn offline(problem: &Problem, cfg: &ExperimentConfig, s: usize) -> Result<OfflineData> {
    let tps = cfg.tps_config()?;
    let seed = cfg.sampling.seed;
    let train = staged("sampling", sample_parameters(s, cfg.sampling.n_snapshots, stage_seed(seed, "train")))?;
    let test = staged("sampling", sample_parameters(s, cfg.sampling.n_test, stage_seed(seed, "test")))?;
    let train_trajs = staged("snapshots", sample_trajectories(problem, &train, &tps))?;
    let test_trajs = staged("reference", sample_trajectories(problem, &test, &tps))?;
    let bases = staged("pod", Bases::compute(&train_trajs, &problem.grams))?;
    Ok(OfflineData { train, train_trajs, test, test_trajs, bases })
}

/// Outcome of the online phase over a test set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OnlineSummary {
    /// Galerkin POD error; infinite if any run broke down.
    pub error: f64,
    /// Minimum reduced inf-sup constant over all runs and steps (including failing steps).
    pub min_infsup: f64,
    pub failures: usize,
}

pub fn online_runs(
    problem: &Problem,
    spaces: &RomSpaces,
    params: &[ParamVector],
    cfg: &TpsConfig,
    opts: &RomOptions,
) -> Result<Vec<(RomTrajectory, Option<Error>)>> {
    params
        .par_iter()
        .map(|y| rom_run_partial(&problem.mesh, &problem.grams, &problem.noise, spaces, &problem.m0_h, y, cfg, opts))
        .collect()
}

/// Runs the online phase on the test set and compares against `reference` states.
///
/// `stride` maps online step `n` to reference state `n·stride`.
pub fn online_summary(
    problem: &Problem,
    spaces: &RomSpaces,
    params: &[ParamVector],
    reference: &[Trajectory],
    cfg: &TpsConfig,
    opts: &RomOptions,
    stride: usize,
) -> Result<OnlineSummary> {
    let runs = online_runs(problem, spaces, params, cfg, opts)?;
    let failures = runs.iter().filter(|(_, e)| e.is_some()).count();
    let min_infsup = runs.iter().map(|(r, _)| r.min_infsup()).fold(f64::INFINITY, f64::min);
    let error = if failures > 0 {
        f64::INFINITY
    } else if stride == 1 {
        let roms: Vec<RomTrajectory> = runs.into_iter().map(|(r, _)| r).collect();
        galerkin_pod_error(reference, &roms, &problem.grams)?
    } else {
        let refs: Vec<Vec<FeVectorField>> = reference.iter().map(|t| subsample(&t.magnetizations, stride)).collect();
        let approx: Vec<Vec<FeVectorField>> = runs.into_iter().map(|(r, _)| r.full_magnetizations).collect();
        sequence_error(&refs, &approx, &problem.grams)?
    };
    Ok(OnlineSummary { error, min_infsup, failures })
}

pub fn subsample(states: &[FeVectorField], stride: usize) -> Vec<FeVectorField> {
    states.iter().step_by(stride.max(1)).cloned().collect()
}

/// `coarse / fine` when it is an integer (within 1e-9), else an error.
pub fn step_ratio(coarse: f64, fine: f64) -> Result<usize> {
    let r = coarse / fine;
    let k = r.round();
    if k < 1.0 || (r - k).abs() > 1e-9 * r {
        return Err(Error::InvalidArgument(format!("time step {coarse} is not a multiple of {fine}")));
    }
    Ok(k as usize)
}

/// Root mean square projection error of test columns for a list of dimensions.
pub fn projection_error_curve(basis: &ReducedBasis, trajs: &[Trajectory], q: Quantity, dims: &[usize]) -> Result<Vec<f64>> {
    dims.iter().map(|&j| projection_error(&basis.truncate_to(j.min(basis.dim()))?, trajs, q)).collect()
}

fn dims_up_to(rank: usize) -> Vec<usize> {
    let mut d: Vec<usize> = (1..=10).chain([12, 15, 20, 25, 30, 40, 50, 60]).filter(|&j| j <= rank).collect();
    d.dedup();
    d
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantRow {
    pub variant: Variant,
    pub budget: usize,
    pub v_dim: usize,
    pub lambda_dim: usize,
    pub k_sup: usize,
    pub n_supremizers: usize,
    pub summary: OnlineSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefinementRow {
    /// `τ` or `h`.
    pub x: f64,
    pub error: f64,
    pub min_infsup: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Relax1dReport {
    pub variants: Vec<VariantRow>,
    pub tau_rows: Vec<RefinementRow>,
    pub tau_rate: Option<f64>,
    pub h_rows: Vec<RefinementRow>,
    pub h_rate: Option<f64>,
    /// `β(h) / β(h/2)` for successive refinements.
    pub infsup_ratios: Vec<f64>,
}

/// Writes `table` to `out/name` when an output directory is given.
fn emit(out: Option<&Path>, name: &str, table: &Table) -> Result<()> {
    match out {
        Some(dir) => table.write(&dir.join(name)),
        None => Ok(()),
    }
}

/// `index, sigma_m, sigma_v, sigma_lambda`
pub fn singular_value_table(bases: &Bases) -> Table {
    let mut t = Table::new(&["index", "sigma_m", "sigma_v", "sigma_lambda"]);
    let n = Quantity::ALL.iter().map(|&q| bases.get(q).singular_values.len()).max().unwrap_or(0);
    for i in 0..n {
        let mut row = vec![(i + 1).to_string()];
        for q in Quantity::ALL {
            row.push(bases.get(q).singular_values.get(i).map_or(String::new(), |&s| fmt_f64(s)));
        }
        t.push(row);
    }
    t
}

fn projection_table(bases: &Bases, trajs: &[Trajectory], label: &str, t: &mut Table) -> Result<()> {
    for q in Quantity::ALL {
        let b = bases.get(q);
        let dims = dims_up_to(b.dim());
        for (j, e) in dims.iter().zip(projection_error_curve(b, trajs, q, &dims)?) {
            t.push(vec![label.to_string(), q.name().into(), j.to_string(), fmt_f64(e)]);
        }
    }
    Ok(())
}

/// Variant comparison on the test set for every budget in `online.dims`.
pub fn variant_comparison(problem: &Problem, data: &OfflineData, cfg: &ExperimentConfig) -> Result<Vec<VariantRow>> {
    let tps = cfg.tps_config()?;
    let opts = cfg.rom_options();
    let mut rows = Vec::new();
    for &budget in &cfg.online.dims {
        for variant in Variant::ALL {
            let b = &data.bases;
            let spaces = build_rom_spaces(&problem.mesh, &problem.grams, &b.v, &b.lambda, &b.m, variant, budget)?;
            let summary = online_summary(problem, &spaces, &data.test, &data.test_trajs, &tps, &opts, 1)?;
            rows.push(VariantRow {
                variant,
                budget,
                v_dim: spaces.v_dim(),
                lambda_dim: spaces.lambda_dim(),
                k_sup: spaces.k_sup,
                n_supremizers: spaces.n_supremizers,
                summary,
            });
        }
    }
    Ok(rows)
}

/// Online τ refinement of OG-3x against a finer high-fidelity reference.
pub fn tau_refinement(problem: &Problem, data: &OfflineData, cfg: &ExperimentConfig) -> Result<(Vec<RefinementRow>, Option<f64>)> {
    let b = &data.bases;
    let spaces = build_rom_spaces(&problem.mesh, &problem.grams, &b.v, &b.lambda, &b.m, Variant::Og3x, cfg.refine.tau_budget)?;
    let mut fine = cfg.tps_config()?;
    fine.tau = cfg.refine.tau_reference;
    let reference = sample_trajectories(problem, &data.test, &fine)?;
    let mut rows = Vec::new();
    for &tau in &cfg.refine.tau_online {
        let mut online = cfg.tps_config()?;
        online.tau = tau;
        let stride = step_ratio(tau, cfg.refine.tau_reference)?;
        let s = online_summary(problem, &spaces, &data.test, &reference, &online, &cfg.rom_options(), stride)?;
        rows.push(RefinementRow { x: tau, error: s.error, min_infsup: s.min_infsup });
    }
    let rate = fit_rows(&rows);
    Ok((rows, rate))
}

fn fit_rows(rows: &[RefinementRow]) -> Option<f64> {
    let xs: Vec<f64> = rows.iter().map(|r| r.x).collect();
    let es: Vec<f64> = rows.iter().map(|r| r.error).collect();
    rate_fit(&xs, &es).ok()
}

/// High-fidelity h refinement against a nested reference mesh.
pub fn h_refinement(cfg: &ExperimentConfig) -> Result<(Vec<RefinementRow>, Option<f64>, Vec<f64>)> {
    let tps = cfg.tps_config()?;
    let params = sample_parameters(cfg.param.s, cfg.refine.h_samples, stage_seed(cfg.sampling.seed, "h-study"))?;
    let fine = cfg.problem_on(cfg.refine.n_div_reference)?;
    let reference = sample_trajectories(&fine, &params, &tps)?;
    let mut rows = Vec::new();
    for &n_div in &cfg.refine.n_div {
        let coarse = cfg.problem_on(n_div)?;
        let mut trajs = sample_trajectories(&coarse, &params, &tps)?;
        let mut min_b = f64::INFINITY;
        for t in &mut trajs {
            fill_infsup(&coarse.mesh, &coarse.grams, t, cfg.refine.infsup_stride)?;
            min_b = min_b.min(t.min_infsup().unwrap_or(f64::INFINITY));
        }
        let approx: Vec<Vec<FeVectorField>> = trajs
            .iter()
            .map(|t| t.magnetizations.iter().map(|m| m.prolongate(&coarse.mesh, &fine.mesh)).collect())
            .collect();
        let refs: Vec<Vec<FeVectorField>> = reference.iter().map(|t| t.magnetizations.clone()).collect();
        let error = sequence_error(&refs, &approx, &fine.grams)?;
        rows.push(RefinementRow { x: coarse.mesh.h, error, min_infsup: min_b });
    }
    let rate = fit_rows(&rows);
    let ratios = rows.windows(2).map(|w| w[0].min_infsup / w[1].min_infsup).collect();
    Ok((rows, rate, ratios))
}

pub fn relax_1d(cfg: &ExperimentConfig, out: Option<&Path>) -> Result<Relax1dReport> {
    let problem = staged("setup", cfg.problem())?;
    let data = offline(&problem, cfg, cfg.param.s)?;
    emit(out, "singular_values.csv", &singular_value_table(&data.bases))?;
    let mut proj = Table::new(&["s", "quantity", "dim", "projection_error"]);
    staged("projection", projection_table(&data.bases, &data.test_trajs, &cfg.param.s.to_string(), &mut proj))?;
    emit(out, "projection_error.csv", &proj)?;

    let mut report = Relax1dReport { variants: staged("variants", variant_comparison(&problem, &data, cfg))?, ..Default::default() };
    let mut t = Table::new(&[
        "variant", "budget", "v_dim", "lambda_dim", "k_sup", "n_supremizers", "error", "min_infsup", "failures",
    ]);
    for r in &report.variants {
        t.push(vec![
            r.variant.name().into(),
            r.budget.to_string(),
            r.v_dim.to_string(),
            r.lambda_dim.to_string(),
            r.k_sup.to_string(),
            r.n_supremizers.to_string(),
            fmt_f64(r.summary.error),
            fmt_f64(r.summary.min_infsup),
            r.summary.failures.to_string(),
        ]);
    }
    emit(out, "variants.csv", &t)?;

    if cfg.refine.enabled {
        let (rows, rate) = staged("tau-refinement", tau_refinement(&problem, &data, cfg))?;
        emit(out, "tau_refinement.csv", &refinement_table("tau", &rows))?;
        report.tau_rows = rows;
        report.tau_rate = rate;
        let (rows, rate, ratios) = staged("h-refinement", h_refinement(cfg))?;
        emit(out, "h_refinement.csv", &refinement_table("h", &rows))?;
        report.h_rows = rows;
        report.h_rate = rate;
        report.infsup_ratios = ratios;
    }
    Ok(report)
}

fn refinement_table(x: &str, rows: &[RefinementRow]) -> Table {
    let mut t = Table::new(&[x, "error", "min_infsup"]);
    for r in rows {
        t.push(vec![fmt_f64(r.x), fmt_f64(r.error), fmt_f64(r.min_infsup)]);
    }
    t
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RelaxNdReport {
    /// `(s, singular values of m, v, λ)`
    pub singular_values: Vec<(usize, [Vec<f64>; 3])>,
}

impl RelaxNdReport {
    /// Mean absolute gap of `log10 σ` over the first `count` indices between two runs.
    pub fn log_gap(&self, a: usize, b: usize, q: Quantity, count: usize) -> Option<f64> {
        let qi = Quantity::ALL.iter().position(|&x| x == q)?;
        let get = |s: usize| self.singular_values.iter().find(|(x, _)| *x == s).map(|(_, v)| &v[qi]);
        let (sa, sb) = (get(a)?, get(b)?);
        let n = count.min(sa.len()).min(sb.len());
        let pairs: Vec<f64> = (0..n)
            .filter(|&i| sa[i] > 0.0 && sb[i] > 0.0)
            .map(|i| (sa[i].log10() - sb[i].log10()).abs())
            .collect();
        (!pairs.is_empty()).then(|| pairs.iter().sum::<f64>() / pairs.len() as f64)
    }
}

pub fn relax_nd(cfg: &ExperimentConfig, out: Option<&Path>) -> Result<RelaxNdReport> {
    let problem = staged("setup", cfg.problem())?;
    let mut report = RelaxNdReport::default();
    let mut proj = Table::new(&["s", "quantity", "dim", "projection_error"]);
    let mut svs = Table::new(&["s", "index", "sigma_m", "sigma_v", "sigma_lambda"]);
    for &s in &cfg.study.s_list {
        let data = offline(&problem, cfg, s)?;
        for row in singular_value_table(&data.bases).rows {
            let mut r = vec![s.to_string()];
            r.extend(row);
            svs.push(r);
        }
        staged("projection", projection_table(&data.bases, &data.test_trajs, &s.to_string(), &mut proj))?;
        let sv = |q| data.bases.get(q).singular_values.clone();
        report.singular_values.push((s, [sv(Quantity::Magnetization), sv(Quantity::Velocity), sv(Quantity::Multiplier)]));
        emit(out, "singular_values.csv", &svs)?;
        emit(out, "projection_error.csv", &proj)?;
    }
    Ok(report)
}

/// Key of a node for cross-grid lookup (bitwise coordinates).
fn node_bits(y: &[f64]) -> Vec<u64> {
    y.iter().map(|v| v.to_bits()).collect()
}

/// Surrogates on nested grids sharing one set of high-fidelity node solves.
#[derive(Debug)]
pub struct NestedSampler<'a> {
    problem: &'a Problem,
    tps: TpsConfig,
    cache: HashMap<Vec<u64>, Trajectory>,
}

impl<'a> NestedSampler<'a> {
    pub fn new(problem: &'a Problem, tps: TpsConfig) -> Self {
        NestedSampler { problem, tps, cache: HashMap::new() }
    }

    /// Solves the model at every node of `op` not seen before.
    pub fn ensure(&mut self, op: &SparseGridOp) -> Result<()> {
        let missing: Vec<(usize, &Vec<f64>)> =
            op.nodes.iter().enumerate().filter(|(_, y)| !self.cache.contains_key(&node_bits(y))).collect();
        let p = self.problem;
        let tps = self.tps;
        let solved: Vec<(Vec<u64>, Trajectory)> = missing
            .par_iter()
            .map(|&(node, y)| {
                let run = || tps_run_from(&p.mesh, &p.grams, &p.noise, &p.m0_h, &ParamVector::new(y.clone())?, &tps);
                run().map(|t| (node_bits(y), t)).map_err(|e| Error::NodeSolve { node, source: Box::new(e) })
            })
            .collect::<Result<_>>()?;
        self.cache.extend(solved);
        Ok(())
    }

    pub fn surrogate(&mut self, op: &SparseGridOp, basis: &ReducedBasis) -> Result<SgRbpSurrogate> {
        self.ensure(op)?;
        let node_coeffs = op
            .nodes
            .iter()
            .map(|y| {
                let t = &self.cache[&node_bits(y)];
                t.magnetizations.iter().flat_map(|m| basis.coefficients(&m.coeffs)).collect()
            })
            .collect();
        Ok(SgRbpSurrogate {
            grid_op: op.clone(),
            m_basis: basis.clone(),
            node_coeffs,
            n_times: self.tps.n_steps()? + 1,
            cfg: self.tps,
        })
    }

    pub fn n_solved(&self) -> usize {
        self.cache.len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SgConvRow {
    pub rb_eps_sq: f64,
    pub basis_dim: usize,
    pub threshold: f64,
    pub n_nodes: usize,
    pub active_dims: usize,
    pub error: f64,
    /// Projection error of the test trajectories onto the basis.
    pub floor: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SgConvReport {
    pub rows: Vec<SgConvRow>,
}

impl SgConvReport {
    /// Rows of one tolerance, in threshold order.
    pub fn curve(&self, rb_eps_sq: f64) -> Vec<&SgConvRow> {
        self.rows.iter().filter(|r| r.rb_eps_sq == rb_eps_sq).collect()
    }
}

/// SG-RBP error over the test set.
pub fn sgrbp_error(surrogate: &SgRbpSurrogate, test: &[ParamVector], reference: &[Trajectory], grams: &GramSet) -> Result<f64> {
    let approx: Vec<Vec<FeVectorField>> = test.par_iter().map(|y| surrogate.eval(y)).collect::<Result<_>>()?;
    let refs: Vec<Vec<FeVectorField>> = reference.iter().map(|t| t.magnetizations.clone()).collect();
    sequence_error(&refs, &approx, grams)
}

pub fn sg_conv(cfg: &ExperimentConfig, out: Option<&Path>) -> Result<SgConvReport> {
    let problem = staged("setup", cfg.problem())?;
    let tps = cfg.tps_config()?;
    let data = offline(&problem, cfg, cfg.param.s)?;
    let mut sampler = NestedSampler::new(&problem, tps);
    let mut report = SgConvReport::default();
    let mut t = Table::new(&["rb_eps_sq", "basis_dim", "threshold", "n_nodes", "active_dims", "error", "projection_floor"]);
    let ops: Vec<SparseGridOp> = staged(
        "sparse-grid",
        cfg.sg
            .thresholds
            .iter()
            .map(|&eps| SparseGridOp::new(build_index_set(cfg.param.s, eps, cfg.sg.degree, cfg.sg.cap)?, cfg.sg.degree))
            .collect(),
    )?;
    for &rb in &cfg.sg.rb_eps_sq {
        let basis = staged("pod", data.bases.m.truncate(rb))?;
        let floor = staged("projection", projection_error(&basis, &data.test_trajs, Quantity::Magnetization))?;
        for (op, &eps) in ops.iter().zip(&cfg.sg.thresholds) {
            let sur = staged("sg-nodes", sampler.surrogate(op, &basis))?;
            let error = staged("sg-eval", sgrbp_error(&sur, &data.test, &data.test_trajs, &problem.grams))?;
            let row = SgConvRow {
                rb_eps_sq: rb,
                basis_dim: basis.dim(),
                threshold: eps,
                n_nodes: op.n_nodes(),
                active_dims: op.index_set.active_dimensions(),
                error,
                floor,
            };
            t.push(vec![
                fmt_f64(rb),
                row.basis_dim.to_string(),
                fmt_f64(eps),
                row.n_nodes.to_string(),
                row.active_dims.to_string(),
                fmt_f64(error),
                fmt_f64(floor),
            ]);
            report.rows.push(row);
            emit(out, "sg_conv.csv", &t)?;
        }
    }
    Ok(report)
}

/// Largest threshold from a log-scale bisection whose grid has at least `target` nodes.
pub fn threshold_for_nodes(s: usize, degree: usize, target: usize, cap: usize) -> Result<f64> {
    // an overflowing index set certainly has more than `target` nodes
    let nodes = |eps: f64| -> Result<usize> {
        match build_index_set(s, eps, degree, cap) {
            Ok(set) => Ok(SparseGridOp::new(set, degree)?.n_nodes()),
            Err(Error::IndexSetOverflow { .. }) => Ok(usize::MAX),
            Err(e) => Err(e),
        }
    };
    let (mut hi, mut lo) = (1.0f64, 1e-12f64);
    if nodes(lo)? < target {
        return Ok(lo);
    }
    for _ in 0..60 {
        let mid = (hi * lo).sqrt();
        if nodes(mid)? >= target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi / lo < 1.0 + 1e-6 {
            break;
        }
    }
    Ok(lo)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SwitchingReport {
    /// Final space-averaged `m_z` of every ensemble run.
    pub final_mz: Vec<f64>,
    pub histogram: Vec<usize>,
    pub rom_variant: Variant,
    pub rom_v_dim: usize,
    pub rom_failed: bool,
    pub sg_nodes: usize,
    pub basis_dim: usize,
    /// Unit-modulus error at the final time: high fidelity, POD-TPS, SG-RBP.
    pub unit_modulus_final: [f64; 3],
    /// H¹ error at the final time: POD-TPS, SG-RBP.
    pub h1_error_final: [f64; 2],
}

pub fn switching(cfg: &ExperimentConfig, out: Option<&Path>) -> Result<SwitchingReport> {
    let problem = staged("setup", cfg.problem())?;
    let tps = cfg.tps_config()?;
    let s = cfg.param.s;
    let seed = cfg.sampling.seed;
    let n_train = cfg.sampling.n_snapshots.max(cfg.study.switching_runs);
    let train = staged("sampling", sample_parameters(s, n_train, stage_seed(seed, "train")))?;
    let trajs = staged("snapshots", sample_trajectories(&problem, &train, &tps))?;

    let final_mz: Vec<f64> = trajs[..cfg.study.switching_runs]
        .iter()
        .map(|t| physical_diagnostics(&problem.mesh, t.magnetizations.last().unwrap(), &problem.grams).map(|d| d.avg_mz))
        .collect::<Result<_>>()?;
    let histogram = crate::metrics::histogram(&final_mz);
    let mut t = Table::new(&["run", "final_avg_mz"]);
    for (i, v) in final_mz.iter().enumerate() {
        t.push(vec![i.to_string(), fmt_f64(*v)]);
    }
    emit(out, "switching_final_mz.csv", &t)?;
    let mut h = Table::new(&["bin_left", "count"]);
    for (e, c) in crate::metrics::histogram_edges().iter().zip(&histogram) {
        h.push(vec![fmt_f64(*e), c.to_string()]);
    }
    emit(out, "switching_histogram.csv", &h)?;

    let bases = staged("pod", Bases::compute(&trajs[..cfg.sampling.n_snapshots], &problem.grams))?;
    emit(out, "singular_values.csv", &singular_value_table(&bases))?;
    let budget = match cfg.online.budget {
        Some(b) => b,
        None => staged("pod", truncation_dimension(&bases.v.singular_values, cfg.pod.eps_sq.v))?,
    };
    let m_basis = staged("pod", bases.m.truncate(cfg.pod.eps_sq.m))?;
    let test = staged("sampling", sample_parameters(s, cfg.sampling.n_test, stage_seed(seed, "test")))?;
    let y = &test[0];
    let reference = staged("reference", tps_run_from(&problem.mesh, &problem.grams, &problem.noise, &problem.m0_h, y, &tps))?;

    let variant = cfg.online.variant;
    let spaces = staged(
        "online",
        build_rom_spaces(&problem.mesh, &problem.grams, &bases.v, &bases.lambda, &bases.m, variant, budget),
    )?;
    let online_cfg = cfg.online_tps_config()?;
    let stride = step_ratio(online_cfg.tau, tps.tau)?;
    let (rom, rom_err) = staged(
        "online",
        rom_run_partial(&problem.mesh, &problem.grams, &problem.noise, &spaces, &problem.m0_h, y, &online_cfg, &cfg.rom_options()),
    )?;

    let target = cfg.sampling.n_snapshots;
    let eps = staged("sparse-grid", threshold_for_nodes(s, cfg.sg.degree, target, cfg.sg.cap))?;
    let op = staged("sparse-grid", SparseGridOp::new(build_index_set(s, eps, cfg.sg.degree, cfg.sg.cap)?, cfg.sg.degree))?;
    let mut sampler = NestedSampler::new(&problem, tps);
    let sur = staged("sg-nodes", sampler.surrogate(&op, &m_basis))?;
    let sg = staged("sg-eval", sur.eval(y))?;

    let mut tt = Table::new(&["time", "method", "unit_modulus_err", "h1_error", "dirichlet_energy", "avg_mz"]);
    let mut last = [f64::NAN; 3];
    let mut last_h1 = [f64::NAN; 2];
    let n_steps = tps.n_steps()?;
    for n in 0..=n_steps {
        let r = &reference.magnetizations[n];
        let mut methods: Vec<(&str, &FeVectorField)> = vec![("hf", r), ("sg_rbp", &sg[n])];
        if n % stride == 0 {
            if let Some(m) = rom.full_magnetizations.get(n / stride) {
                methods.push(("pod_tps", m));
            }
        }
        for (name, m) in methods {
            let d = physical_diagnostics(&problem.mesh, m, &problem.grams)?;
            let e = problem.grams.h1_norm(&crate::linalg::sub(&r.coeffs, &m.coeffs));
            tt.push(vec![fmt_f64(tps.time(n)), name.into(), fmt_f64(d.unit_modulus_err), fmt_f64(e), fmt_f64(d.dirichlet_energy), fmt_f64(d.avg_mz)]);
            if n == n_steps {
                match name {
                    "hf" => last[0] = d.unit_modulus_err,
                    "pod_tps" => {
                        last[1] = d.unit_modulus_err;
                        last_h1[0] = e;
                    }
                    _ => {
                        last[2] = d.unit_modulus_err;
                        last_h1[1] = e;
                    }
                }
            }
        }
    }
    emit(out, "switching_metrics.csv", &tt)?;
    Ok(SwitchingReport {
        final_mz,
        histogram,
        rom_variant: variant,
        rom_v_dim: spaces.v_dim(),
        rom_failed: rom_err.is_some(),
        sg_nodes: op.n_nodes(),
        basis_dim: m_basis.dim(),
        unit_modulus_final: last,
        h1_error_final: last_h1,
    })
}

/// Report of any experiment, for the manifest and the CLI summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "experiment", rename_all = "kebab-case")]
pub enum ExperimentReport {
    Relax1d(Relax1dReport),
    RelaxNd(RelaxNdReport),
    SgConv(SgConvReport),
    Switching(SwitchingReport),
}

/// Runs a named experiment, writing CSVs and a manifest into `out`.
///
/// On failure the manifest records the failing stage; outputs written so far stay.
pub fn run_experiment(name: &str, cfg: &ExperimentConfig, out: &Path) -> Result<ExperimentReport> {
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let result = match name {
        "relax-1d" => relax_1d(cfg, Some(out)).map(ExperimentReport::Relax1d),
        "relax-nd" => relax_nd(cfg, Some(out)).map(ExperimentReport::RelaxNd),
        "sg-conv" => sg_conv(cfg, Some(out)).map(ExperimentReport::SgConv),
        "switching" => switching(cfg, Some(out)).map(ExperimentReport::Switching),
        other => Err(Error::Config { path: "experiment".into(), message: format!("unknown experiment `{other}`") }),
    };
    let mut manifest = Manifest::new(&format!("experiment {name}"), &cfg.to_toml());
    match &result {
        Ok(report) => {
            let json = serde_json::to_vec_pretty(report).map_err(|e| Error::InvalidArgument(e.to_string()))?;
            crate::io::write_atomic(&out.join("report.json"), &json)?;
        }
        Err(Error::Stage { stage, .. }) => manifest.failed_stage = Some(stage.clone()),
        Err(_) => manifest.failed_stage = Some("unknown".into()),
    }
    manifest.collect_outputs(out)?;
    manifest.write(out)?;
    result
}
