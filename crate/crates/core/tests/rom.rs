mod common;

use common::*;
use faer::Mat;
use pllg_core::experiments::{sample_trajectories, Bases};
use pllg_core::fem::{FeScalarField, FeVectorField, GramSet, TriMesh};
use pllg_core::linalg;
use pllg_core::noise::sample_parameters;
use pllg_core::rom::*;
use pllg_core::setup::Problem;
use pllg_core::tps::{tps_run_from, TpsConfig};
use pllg_core::Error;
use proptest::prelude::*;

struct Fixture {
    p: Problem,
    bases: Bases,
    cfg: TpsConfig,
}

fn fixture() -> Fixture {
    let p = Problem::relaxation(4).unwrap();
    let cfg = TpsConfig::new(1.4, 0.05, 1e-3);
    let train = sample_parameters(1, 6, 1).unwrap();
    let trajs = sample_trajectories(&p, &train, &cfg).unwrap();
    let bases = Bases::compute(&trajs, &p.grams).unwrap();
    Fixture { p, bases, cfg }
}

fn dense_q(mesh: &TriMesh) -> Dense {
    let (m, k) = brute_grams(mesh);
    block3(&m.iter().zip(&k).map(|(a, b)| a.iter().zip(b).map(|(x, y)| x + y).collect()).collect())
}

fn to_dense(m: &Mat<f64>) -> Dense {
    (0..m.nrows()).map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect()).collect()
}

#[test]
fn supremizer_represents_the_constraint() {
    let mesh = TriMesh::structured(3).unwrap();
    let grams = GramSet::assemble(&mesh).unwrap();
    let n = mesh.n_nodes();
    let q = dense_q(&mesh);
    let mut rng = XorShift(77);
    for _ in 0..50 {
        let eta = FeVectorField::from_coeffs(rng.unit_field(n));
        let zeta = FeScalarField { coeffs: rng.vec(n) };
        let v = rng.vec(3 * n);
        let t = supremizer(&mesh, &grams, &eta, &zeta).unwrap();
        let lhs: f64 = matvec(&q, &t.coeffs).iter().zip(&v).map(|(a, b)| a * b).sum();
        let rhs: f64 = matvec(&brute_constraint(&mesh, &eta.coeffs), &v).iter().zip(&zeta.coeffs).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() <= 1e-10 * rhs.abs().max(1.0), "{lhs} vs {rhs}");
    }
}

#[test]
fn full_spaces_reproduce_the_high_fidelity_run() {
    let p = Problem::relaxation(4).unwrap();
    let cfg = TpsConfig::new(1.4, 0.05, 1e-3);
    let spaces = RomSpaces::full(&p.grams).unwrap();
    for seed in [3, 4] {
        let y = &sample_parameters(1, 1, seed).unwrap()[0];
        let hf = tps_run_from(&p.mesh, &p.grams, &p.noise, &p.m0_h, y, &cfg).unwrap();
        for init in [InitialProjection::MagnetizationBasis, InitialProjection::VelocityBasis] {
            let opts = RomOptions { initial_projection: init, ..Default::default() };
            let rom = rom_run(&p.mesh, &p.grams, &p.noise, &spaces, &p.m0_h, y, &cfg, &opts).unwrap();
            assert_eq!(rom.full_magnetizations.len(), hf.magnetizations.len());
            for (a, b) in hf.magnetizations.iter().zip(&rom.full_magnetizations) {
                assert!(max_abs_diff(&a.coeffs, &b.coeffs) <= 1e-9);
            }
        }
    }
}

#[test]
fn variant_dimensions_and_names() {
    assert_eq!(Variant::Og1x.dimensions(20), (20, 20, 0));
    assert_eq!(Variant::Og3x.dimensions(30), (30, 10, 0));
    assert_eq!(Variant::SsOg1x.dimensions(30), (30, 5, 5));
    assert_eq!(Variant::SsOg3x.dimensions(30), (30, 9, 3));
    assert_eq!(Variant::SsOg3x.dimensions(27), (27, 9, 3));
    assert_eq!(Variant::SsOg3x.dimensions(36), (36, 9, 3));
    for v in Variant::ALL {
        assert_eq!(v.to_string().parse::<Variant>().unwrap(), v);
    }
    assert!("OG-2x".parse::<Variant>().is_err());
}

#[test]
fn enrichment_is_orthonormal_and_drops_dependent_columns() {
    let f = fixture();
    let (p, b) = (&f.p, &f.bases);
    for variant in [Variant::SsOg1x, Variant::SsOg3x] {
        let budget = 12;
        let s = build_rom_spaces(&p.mesh, &p.grams, &b.v, &b.lambda, &b.m, variant, budget).unwrap();
        let (j, r, k) = variant.dimensions(budget);
        assert_eq!(s.j_base, j);
        assert_eq!(s.lambda_dim(), r);
        assert!(s.n_supremizers <= k * r);
        assert_eq!(s.v_dim(), j + s.n_supremizers);
        let g = s.v_phi.transpose() * p.grams.q_vec.mul_dense(s.v_phi.as_ref());
        for i in 0..g.nrows() {
            for jj in 0..g.ncols() {
                assert!((g[(i, jj)] - if i == jj { 1.0 } else { 0.0 }).abs() < 1e-9);
            }
        }
        // leading columns are the POD modes themselves
        for c in 0..j {
            let a = linalg::col_to_vec(s.v_phi.as_ref(), c);
            let e = linalg::col_to_vec(b.v.phi.as_ref(), c);
            assert!(max_abs_diff(&a, &e) < 1e-14);
        }
    }
    let base = b.v.truncate_to(3).unwrap().phi;
    let dup = vec![linalg::col_to_vec(base.as_ref(), 1), linalg::col_to_vec(base.as_ref(), 0).iter().map(|v| 2.0 * v).collect()];
    let (out, kept) = enrich_orthonormal(&base, &dup, &p.grams.q_vec);
    assert_eq!((out.ncols(), kept), (3, 0));
}

#[test]
fn stabilization_never_lowers_the_reduced_infsup() {
    let f = fixture();
    let (p, b) = (&f.p, &f.bases);
    let mut rng = XorShift(5);
    for budget in [4, 9, 16] {
        let stab = build_rom_spaces(&p.mesh, &p.grams, &b.v, &b.lambda, &b.m, Variant::SsOg1x, budget).unwrap();
        let (j, r, _) = Variant::SsOg1x.dimensions(budget);
        let plain = RomSpaces::plain(&b.v.truncate_to(j).unwrap(), &b.lambda.truncate_to(r).unwrap(), &b.m);
        for _ in 0..10 {
            let m = FeVectorField::from_coeffs(rng.unit_field(p.mesh.n_nodes()));
            assert!(rom_infsup(&p.mesh, &stab, &m).unwrap() >= rom_infsup(&p.mesh, &plain, &m).unwrap() - 1e-12);
        }
        let y = &sample_parameters(1, 1, 8).unwrap()[0];
        let rom = rom_run(&p.mesh, &p.grams, &p.noise, &stab, &p.m0_h, y, &f.cfg, &RomOptions::default()).unwrap();
        for (n, m) in rom.full_magnetizations[..rom.infsup.len()].iter().enumerate() {
            assert!((rom_infsup(&p.mesh, &stab, m).unwrap() - rom.infsup[n]).abs() < 1e-12);
            assert!(rom.infsup[n] >= rom_infsup(&p.mesh, &plain, m).unwrap() - 1e-12);
        }
    }
}

#[test]
fn reduced_infsup_matches_dense_oracle() {
    let f = fixture();
    let (p, b) = (&f.p, &f.bases);
    let s = build_rom_spaces(&p.mesh, &p.grams, &b.v, &b.lambda, &b.m, Variant::SsOg3x, 12).unwrap();
    let m = &p.m0_h;
    let bd = brute_constraint(&p.mesh, &m.coeffs);
    let bred = matmul(&transpose(&to_dense(&s.lambda_basis.phi)), &matmul(&bd, &to_dense(&s.v_phi)));
    let ev = jacobi_eigenvalues(&matmul(&bred, &transpose(&bred)));
    let got = rom_infsup(&p.mesh, &s, m).unwrap();
    assert!((got - ev[0].max(0.0).sqrt()).abs() < 1e-10, "{got} vs {}", ev[0].sqrt());
}

#[test]
fn affine_blocks_reproduce_the_projected_constraint() {
    let f = fixture();
    let (p, b) = (&f.p, &f.bases);
    let s = build_rom_spaces(&p.mesh, &p.grams, &b.v, &b.lambda, &b.m.truncate_to(5).unwrap(), Variant::Og3x, 9).unwrap();
    let blocks = s.affine_constraint_blocks(&p.mesh);
    let mut rng = XorShift(12);
    let c = rng.vec(5);
    let eta = FeVectorField::from_coeffs(s.m_basis.reconstruct(&c));
    let direct = s.project_constraint(&pllg_core::fem::assemble_constraint(&p.mesh, &eta));
    let affine = affine_constraint(&blocks, &c).unwrap();
    assert!((&direct - &affine).norm_max() < 1e-12 * direct.norm_max().max(1.0));
    assert!(affine_constraint(&blocks, &c[..4]).is_err());
}

#[test]
fn oversized_multiplier_space_breaks_down_with_partial_output() {
    let f = fixture();
    let (p, b) = (&f.p, &f.bases);
    let spaces = RomSpaces::plain(&b.v.truncate_to(2).unwrap(), &b.lambda.truncate_to(5).unwrap(), &b.m);
    let y = &sample_parameters(1, 1, 2).unwrap()[0];
    let (traj, err) = rom_run_partial(&p.mesh, &p.grams, &p.noise, &spaces, &p.m0_h, y, &f.cfg, &RomOptions::default()).unwrap();
    assert!(matches!(err, Some(Error::SingularSystem { step: 0, .. })));
    assert_eq!(traj.infsup, vec![0.0]);
    assert_eq!(traj.full_magnetizations.len(), 1);
    assert!(rom_run(&p.mesh, &p.grams, &p.noise, &spaces, &p.m0_h, y, &f.cfg, &RomOptions::default()).is_err());
    assert!(build_rom_spaces(&p.mesh, &p.grams, &b.v, &b.lambda, &b.m, Variant::Og1x, 10_000).is_err());
}

#[test]
fn reduced_runs_keep_unit_modulus() {
    let f = fixture();
    let (p, b) = (&f.p, &f.bases);
    let spaces = build_rom_spaces(&p.mesh, &p.grams, &b.v, &b.lambda, &b.m, Variant::SsOg1x, 9).unwrap();
    let y = &sample_parameters(1, 1, 6).unwrap()[0];
    let rom = rom_run(&p.mesh, &p.grams, &p.noise, &spaces, &p.m0_h, y, &f.cfg, &RomOptions::default()).unwrap();
    assert_eq!(rom.reduced_coeffs.len(), 50);
    assert!(rom.full_magnetizations.iter().all(|m| m.max_modulus_defect() < 1e-12));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn supremizer_is_linear_in_the_multiplier(seed in 1u64..u64::MAX, a in -3.0f64..3.0) {
        let mesh = TriMesh::structured(2).unwrap();
        let grams = GramSet::assemble(&mesh).unwrap();
        let n = mesh.n_nodes();
        let mut rng = XorShift(seed);
        let eta = FeVectorField::from_coeffs(rng.unit_field(n));
        let (z1, z2) = (rng.vec(n), rng.vec(n));
        let comb = FeScalarField { coeffs: z1.iter().zip(&z2).map(|(x, y)| a * x + y).collect() };
        let t1 = supremizer(&mesh, &grams, &eta, &FeScalarField { coeffs: z1 }).unwrap();
        let t2 = supremizer(&mesh, &grams, &eta, &FeScalarField { coeffs: z2 }).unwrap();
        let tc = supremizer(&mesh, &grams, &eta, &comb).unwrap();
        let expect: Vec<f64> = t1.coeffs.iter().zip(&t2.coeffs).map(|(x, y)| a * x + y).collect();
        prop_assert!(max_abs_diff(&tc.coeffs, &expect) < 1e-10);
    }
}
