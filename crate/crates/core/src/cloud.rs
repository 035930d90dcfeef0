use serde::{Deserialize, Serialize};

use crate::error::{input, Result};

/// Finite atomic measure: `atom_mass · Σ_i δ_{positions[i]}` at `time`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParticleCloud {
    pub time: f64,
    pub positions: Vec<f64>,
    pub atom_mass: f64,
}

impl ParticleCloud {
    pub fn new(time: f64, positions: Vec<f64>, atom_mass: f64) -> Result<Self> {
        if !(atom_mass > 0.0 && atom_mass.is_finite()) {
            return input("atom mass must be positive");
        }
        if positions.iter().any(|x| !x.is_finite()) {
            return input("particle positions must be finite");
        }
        Ok(Self {
            time,
            positions,
            atom_mass,
        })
    }

    /// Point mass `mass · δ_x` at time zero, stored as a single atom.
    pub fn dirac(x: f64, mass: f64) -> Result<Self> {
        Self::new(0.0, vec![x], mass)
    }

    /// Discretizes the measure `Σ_j m_j δ_{x_j}` into atoms of mass `1/scale_n`,
    /// rounding each `m_j · scale_n` to the nearest integer.
    pub fn discretize(atoms: &[(f64, f64)], scale_n: usize) -> Result<Self> {
        let atom_mass = 1.0 / scale_n as f64;
        let mut positions = Vec::new();
        for &(x, m) in atoms {
            if !(m >= 0.0) {
                return input("atom masses must be non-negative");
            }
            let k = (m * scale_n as f64).round() as usize;
            positions.extend(std::iter::repeat_n(x, k));
        }
        Self::new(0.0, positions, atom_mass)
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn total_mass(&self) -> f64 {
        self.positions.len() as f64 * self.atom_mass
    }

    /// The cloud as `(position, mass)` pairs.
    pub fn atoms(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.positions.iter().map(move |&x| (x, self.atom_mass))
    }
}
