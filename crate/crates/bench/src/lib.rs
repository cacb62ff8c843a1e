//! Fixtures shared by the benchmarks.

use pllg_core::experiments::{sample_trajectories, Bases};
use pllg_core::noise::sample_parameters;
use pllg_core::{build_rom_spaces, Problem, RomSpaces, TpsConfig, Variant};

/// Relaxation problem with a short run and its POD bases.
pub struct Fixture {
    pub problem: Problem,
    pub cfg: TpsConfig,
    pub bases: Bases,
}

impl Fixture {
    pub fn new(n_div: usize) -> Self {
        let problem = Problem::relaxation(n_div).expect("problem");
        let cfg = TpsConfig::new(1.4, 0.05, 1e-3);
        let train = sample_parameters(1, 4, 1).expect("parameters");
        let trajs = sample_trajectories(&problem, &train, &cfg).expect("snapshots");
        let bases = Bases::compute(&trajs, &problem.grams).expect("pod");
        Fixture { problem, cfg, bases }
    }

    pub fn spaces(&self, variant: Variant, budget: usize) -> RomSpaces {
        let (p, b) = (&self.problem, &self.bases);
        build_rom_spaces(&p.mesh, &p.grams, &b.v, &b.lambda, &b.m, variant, budget).expect("spaces")
    }
}
