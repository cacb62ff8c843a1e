//! Preset problem data for the relaxation and switching studies.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::fem::{l2_project, nodal_interpolate, FeVectorField, GramSet, TriMesh};
use crate::field_ops::{ExternalField, NoiseModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialPreset {
    /// Out-of-plane vortex-like profile `(C(x−½), C(y−½), √(1 − C²r²))` with `C = 0.9`.
    Relaxation,
    /// Same profile as `Relaxation`; kept separate so configs read naturally.
    Switching,
    /// `m⁰ ≡ (0, 0, 1)`.
    Uniform,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoisePreset {
    /// `(0.5 sin(π(x−½)), 0.5 sin(π(y−½)), √(1 − g₀² − g₁²))`
    Relaxation,
    /// `(0.45 sin(πx), 0.45 sin(πy), √(1 − g₀² − g₁²))`
    Switching,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FieldPreset {
    Zero,
    MinusEz,
}

const C0: f64 = 0.9;

pub fn initial_condition(preset: InitialPreset) -> impl Fn([f64; 2]) -> [f64; 3] + Send + Sync + Copy {
    move |x: [f64; 2]| match preset {
        InitialPreset::Relaxation | InitialPreset::Switching => {
            let (a, b) = (C0 * (x[0] - 0.5), C0 * (x[1] - 0.5));
            [a, b, (1.0 - a * a - b * b).sqrt()]
        }
        InitialPreset::Uniform => [0.0, 0.0, 1.0],
    }
}

pub fn noise_direction(preset: NoisePreset) -> impl Fn([f64; 2]) -> [f64; 3] + Send + Sync + Copy {
    move |x: [f64; 2]| {
        let (g0, g1) = match preset {
            NoisePreset::Relaxation => (0.5 * (PI * (x[0] - 0.5)).sin(), 0.5 * (PI * (x[1] - 0.5)).sin()),
            NoisePreset::Switching => (0.45 * (PI * x[0]).sin(), 0.45 * (PI * x[1]).sin()),
        };
        [g0, g1, (1.0 - g0 * g0 - g1 * g1).sqrt()]
    }
}

pub fn external_field(preset: FieldPreset) -> ExternalField {
    match preset {
        FieldPreset::Zero => ExternalField::Zero,
        FieldPreset::MinusEz => ExternalField::Uniform([0.0, 0.0, -1.0]),
    }
}

/// Mesh, Gram matrices, noise model and initial state shared by all runs of a study.
#[derive(Debug)]
pub struct Problem {
    pub mesh: TriMesh,
    pub grams: GramSet,
    pub noise: NoiseModel,
    pub initial: InitialPreset,
    /// `Π_h m⁰` (the L² projection, not yet normalized).
    pub m0_h: FeVectorField,
}

impl Problem {
    pub fn new(n_div: usize, initial: InitialPreset, noise: NoisePreset, field: FieldPreset) -> Result<Self> {
        let mesh = TriMesh::structured(n_div)?;
        let grams = GramSet::assemble(&mesh)?;
        let g = nodal_interpolate(&mesh, noise_direction(noise)).normalized()?;
        let noise = NoiseModel::new(g, external_field(field))?;
        let m0_h = l2_project(&mesh, &grams, initial_condition(initial))?;
        Ok(Problem { mesh, grams, noise, initial, m0_h })
    }

    pub fn relaxation(n_div: usize) -> Result<Self> {
        Self::new(n_div, InitialPreset::Relaxation, NoisePreset::Relaxation, FieldPreset::Zero)
    }

    pub fn switching(n_div: usize) -> Result<Self> {
        Self::new(n_div, InitialPreset::Switching, NoisePreset::Switching, FieldPreset::MinusEz)
    }
}
