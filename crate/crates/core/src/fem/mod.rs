//! Finite-element testbed: structured P1 mesh, heat-plate operators,
//! nonlinear implicit-Euler time stepping.

pub mod assemble;
pub mod heat;
pub mod mesh;

pub use assemble::{assemble_mass, assemble_stiffness, h1_gram, DiffusivityField, DiffusivityKind};
pub use heat::{solve_trajectory, step_implicit_euler, HeatStepper, RadiationBc};
pub use mesh::{build_mesh, BoundaryEdge, Mesh, Side};

use nalgebra::DVector;

use crate::error::{Error, Result};

/// A scalar field given by its values at the mesh nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct NodalField(pub DVector<f64>);

impl NodalField {
    pub fn from_vec(values: Vec<f64>) -> Self {
        Self(DVector::from_vec(values))
    }

    pub fn constant(n: usize, value: f64) -> Self {
        Self(DVector::from_element(n, value))
    }

    pub fn zeros(n: usize) -> Self {
        Self(DVector::zeros(n))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        self.0.as_slice()
    }
}

/// Uniform time grid over [0, T] with K steps; `k_off` is the first index
/// at which real observations are no longer available.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    pub t_final: f64,
    pub steps: usize,
    pub tau: f64,
    pub k_off: usize,
}

impl TimeGrid {
    pub fn new(t_final: f64, steps: usize, k_off: usize) -> Result<Self> {
        if t_final <= 0.0 || steps == 0 {
            return Err(Error::Format(format!(
                "time grid needs t_final > 0 and steps >= 1, got t_final={t_final}, steps={steps}"
            )));
        }
        if k_off < 1 || k_off > steps {
            return Err(Error::Format(format!(
                "k_off must lie in [1, {steps}], got {k_off}"
            )));
        }
        Ok(Self {
            t_final,
            steps,
            tau: t_final / steps as f64,
            k_off,
        })
    }

    pub fn time(&self, k: usize) -> f64 {
        k as f64 * self.tau
    }
}

/// Time-indexed snapshots u^0 .. u^K on a shared mesh.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub fields: Vec<NodalField>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.fields.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fields.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn time_grid_invariants() {
        let g = TimeGrid::new(2.5, 200, 50).unwrap();
        assert!((g.tau * g.steps as f64 - g.t_final).abs() <= 1e-12 * g.t_final);
        assert!((g.time(200) - 2.5).abs() < 1e-12);
        assert!(TimeGrid::new(2.5, 200, 0).is_err());
        assert!(TimeGrid::new(2.5, 200, 201).is_err());
        assert!(TimeGrid::new(-1.0, 10, 1).is_err());
    }
}
