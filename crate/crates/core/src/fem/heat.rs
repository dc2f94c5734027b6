//! Backward-Euler time stepping of the nonlinear heat plate.
//!
//! Each step solves M (u - u_prev) / tau + K u + r(u) = 0 by Newton, where
//! r collects the radiative boundary flux sigma * eps * (u^4 - u_r^4)
//! integrated against the P1 traces with 2-point Gauss per edge. The
//! Jacobian uses the same quadrature, so Newton converges quadratically.

use crate::error::{Error, Result};
use crate::linalg::BandedSym;

use super::assemble::{assemble_mass, assemble_stiffness, DiffusivityField};
use super::mesh::Mesh;
use super::{NodalField, TimeGrid, Trajectory};

/// Stefan-Boltzmann radiation data on the plate boundary.
#[derive(Debug, Clone, Copy)]
pub struct RadiationBc {
    /// Stefan-Boltzmann constant, W m^-2 K^-4.
    pub sigma: f64,
    /// Surface emissivity.
    pub emissivity: f64,
    /// Enclosure temperature, K.
    pub u_r: f64,
}

impl RadiationBc {
    pub fn new(sigma: f64, emissivity: f64, u_r: f64) -> Result<Self> {
        if sigma <= 0.0 || emissivity <= 0.0 || u_r <= 0.0 {
            return Err(Error::Format(format!(
                "radiation parameters must be positive: sigma={sigma}, emissivity={emissivity}, u_r={u_r}"
            )));
        }
        Ok(Self {
            sigma,
            emissivity,
            u_r,
        })
    }
}

const MAX_NEWTON_ITERATIONS: usize = 25;
const NEWTON_TOLERANCE: f64 = 1e-10;

// 2-point Gauss on [0, 1].
const GAUSS_2: [(f64, f64); 2] = [
    (0.211_324_865_405_187_1, 0.5), // (1 - 1/sqrt(3)) / 2
    (0.7886751345948129, 0.5),
];

/// One backward-Euler step of the plate, reusing the assembled operators
/// across steps of a trajectory.
pub struct HeatStepper<'m> {
    mesh: &'m Mesh,
    /// M / tau + K, the u-independent part of the Newton matrix.
    base: BandedSym,
    mass: BandedSym,
    tau: f64,
    bc: RadiationBc,
}

pub struct StepOutcome {
    pub field: NodalField,
    pub newton_iterations: usize,
}

impl<'m> HeatStepper<'m> {
    pub fn new(mesh: &'m Mesh, tau: f64, diffusivity: &DiffusivityField, bc: RadiationBc) -> Self {
        assert!(tau > 0.0);
        let mass = assemble_mass(mesh);
        let mut base = assemble_stiffness(mesh, diffusivity);
        base.add_scaled(&mass, 1.0 / tau);
        Self {
            mesh,
            base,
            mass,
            tau,
            bc,
        }
    }

    /// Residual F(u) = M (u - u_prev) / tau + K u + r(u).
    fn residual(&self, u: &[f64], u_prev: &[f64]) -> Vec<f64> {
        let mut f = self.base.matvec(u);
        let m_prev = self.mass.matvec(u_prev);
        for i in 0..f.len() {
            f[i] -= m_prev[i] / self.tau;
        }
        let scale = self.bc.sigma * self.bc.emissivity;
        let u_r4 = self.bc.u_r.powi(4);
        for edge in &self.mesh.boundary_edges {
            let [a, b] = edge.nodes;
            let (pa, pb) = (self.mesh.nodes[a], self.mesh.nodes[b]);
            let len = ((pb[0] - pa[0]).powi(2) + (pb[1] - pa[1]).powi(2)).sqrt();
            for (s, w) in GAUSS_2 {
                let us = u[a] * (1.0 - s) + u[b] * s;
                let flux = scale * (us.powi(4) - u_r4) * w * len;
                f[a] += flux * (1.0 - s);
                f[b] += flux * s;
            }
        }
        f
    }

    /// Newton matrix J(u) = M / tau + K + d r / d u.
    fn jacobian(&self, u: &[f64]) -> BandedSym {
        let mut j = self.base.clone();
        let scale = self.bc.sigma * self.bc.emissivity;
        for edge in &self.mesh.boundary_edges {
            let [a, b] = edge.nodes;
            let (pa, pb) = (self.mesh.nodes[a], self.mesh.nodes[b]);
            let len = ((pb[0] - pa[0]).powi(2) + (pb[1] - pa[1]).powi(2)).sqrt();
            let (mut jaa, mut jab, mut jbb) = (0.0, 0.0, 0.0);
            for (s, w) in GAUSS_2 {
                let us = u[a] * (1.0 - s) + u[b] * s;
                let d = scale * 4.0 * us.powi(3) * w * len;
                jaa += d * (1.0 - s) * (1.0 - s);
                jab += d * (1.0 - s) * s;
                jbb += d * s * s;
            }
            j.add(a, a, jaa);
            j.add(a, b, jab);
            j.add(b, b, jbb);
        }
        j
    }

    /// Advance one step from `u_prev`. `step_index` only labels errors.
    pub fn step(&self, u_prev: &NodalField, step_index: usize) -> Result<StepOutcome> {
        let u_prev = u_prev.as_slice();
        let n = u_prev.len();
        assert_eq!(n, self.mesh.node_count());

        let tol = NEWTON_TOLERANCE * u_prev.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1.0);
        let mut u = u_prev.to_vec();
        for iteration in 0..=MAX_NEWTON_ITERATIONS {
            let f = self.residual(&u, u_prev);
            let res = f.iter().map(|v| v * v).sum::<f64>().sqrt() / n as f64;
            if res <= tol {
                return Ok(StepOutcome {
                    field: NodalField::from_vec(u),
                    newton_iterations: iteration,
                });
            }
            if iteration == MAX_NEWTON_ITERATIONS {
                return Err(Error::NonConvergence {
                    step: step_index,
                    iterations: iteration,
                    residual: res,
                });
            }
            let chol = self.jacobian(&u).cholesky("Newton matrix")?;
            let mut delta = f;
            chol.solve_in_place(&mut delta);
            for i in 0..n {
                u[i] -= delta[i];
            }
            let min = u.iter().cloned().fold(f64::INFINITY, f64::min);
            if min <= 0.0 {
                return Err(Error::NonPhysical {
                    step: step_index,
                    min_value: min,
                });
            }
        }
        unreachable!("loop returns or errors before falling through");
    }
}

/// One standalone backward-Euler step (assembles operators internally).
pub fn step_implicit_euler(
    mesh: &Mesh,
    u_prev: &NodalField,
    tau: f64,
    diffusivity: &DiffusivityField,
    bc: RadiationBc,
) -> Result<NodalField> {
    let stepper = HeatStepper::new(mesh, tau, diffusivity, bc);
    Ok(stepper.step(u_prev, 0)?.field)
}

/// Integrate the plate over the full grid; snapshot k is the state at t^k.
pub fn solve_trajectory(
    mesh: &Mesh,
    u0: &NodalField,
    grid: &TimeGrid,
    diffusivity: &DiffusivityField,
    bc: RadiationBc,
) -> Result<Trajectory> {
    assert_eq!(u0.len(), mesh.node_count());
    if u0.as_slice().iter().any(|&v| v <= 0.0) {
        return Err(Error::NonPhysical {
            step: 0,
            min_value: u0.as_slice().iter().cloned().fold(f64::INFINITY, f64::min),
        });
    }
    let mut fields = Vec::with_capacity(grid.steps + 1);
    fields.push(u0.clone());
    if grid.steps > 0 {
        let stepper = HeatStepper::new(mesh, grid.tau, diffusivity, bc);
        for k in 1..=grid.steps {
            let next = stepper.step(fields.last().unwrap(), k)?.field;
            fields.push(next);
        }
    }
    Ok(Trajectory { fields })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::mesh::build_mesh;

    fn paper_bc() -> RadiationBc {
        RadiationBc::new(5.67e-8, 3e-3, 303.15).unwrap()
    }

    #[test]
    fn enclosure_temperature_is_fixed_point() {
        let mesh = build_mesh(8, 8);
        let d = DiffusivityField::uniform(&mesh, 15.0).unwrap();
        let bc = paper_bc();
        let u = NodalField::constant(mesh.node_count(), bc.u_r);
        let next = step_implicit_euler(&mesh, &u, 1.25e-2, &d, bc).unwrap();
        for i in 0..mesh.node_count() {
            assert!((next.as_slice()[i] - bc.u_r).abs() <= 1e-10);
        }
    }

    #[test]
    fn cold_plate_warms_toward_enclosure() {
        let mesh = build_mesh(12, 12);
        let d = DiffusivityField::uniform(&mesh, 15.0).unwrap();
        let bc = paper_bc();
        let u = NodalField::constant(mesh.node_count(), 293.15);
        let next = step_implicit_euler(&mesh, &u, 1.25e-2, &d, bc).unwrap();
        let mean = next.as_slice().iter().sum::<f64>() / mesh.node_count() as f64;
        assert!(mean > 293.15, "plate should warm, mean {mean}");
    }

    #[test]
    fn newton_iteration_count_small_at_paper_parameters() {
        let mesh = build_mesh(32, 32);
        let d = DiffusivityField::bimaterial(&mesh, 15.0).unwrap();
        let bc = paper_bc();
        let stepper = HeatStepper::new(&mesh, 1.25e-2, &d, bc);
        let u = NodalField::constant(mesh.node_count(), 293.15);
        let out = stepper.step(&u, 1).unwrap();
        assert!(
            out.newton_iterations <= 6,
            "expected a handful of Newton iterations, got {}",
            out.newton_iterations
        );
    }

    #[test]
    fn zero_step_trajectory_is_initial_condition() {
        let mesh = build_mesh(4, 4);
        let d = DiffusivityField::uniform(&mesh, 15.0).unwrap();
        let grid = TimeGrid::new(2.5, 0, 1).unwrap_or(TimeGrid {
            t_final: 0.0,
            steps: 0,
            tau: 0.0,
            k_off: 1,
        });
        let u0 = NodalField::constant(mesh.node_count(), 293.15);
        let traj = solve_trajectory(&mesh, &u0, &grid, &d, paper_bc()).unwrap();
        assert_eq!(traj.fields.len(), 1);
        assert_eq!(traj.fields[0].as_slice(), u0.as_slice());
    }

    #[test]
    fn discrete_maximum_principle_band() {
        let mesh = build_mesh(16, 16);
        let d = DiffusivityField::bimaterial(&mesh, 15.0).unwrap();
        let bc = paper_bc();
        let grid = TimeGrid::new(0.5, 40, 10).unwrap();
        let u0 = NodalField::constant(mesh.node_count(), 293.15);
        let traj = solve_trajectory(&mesh, &u0, &grid, &d, bc).unwrap();
        // Consistent-mass P1 undershoots the continuous bounds by a few
        // 1e-6 K on this grid (measured 1.8e-6); allow 1e-5.
        let (lo, hi) = (293.15 - 1e-5, bc.u_r + 1e-5);
        for f in &traj.fields {
            for &v in f.as_slice() {
                assert!(v >= lo && v <= hi, "value {v} escapes [{lo}, {hi}]");
            }
        }
    }

    #[test]
    fn refinement_changes_shrink() {
        let bc = paper_bc();
        let grid = TimeGrid::new(0.25, 20, 5).unwrap();
        let mut means = Vec::new();
        for n in [8, 16, 32] {
            let mesh = build_mesh(n, n);
            let d = DiffusivityField::bimaterial(&mesh, 15.0).unwrap();
            let u0 = NodalField::constant(mesh.node_count(), 293.15);
            let traj = solve_trajectory(&mesh, &u0, &grid, &d, bc).unwrap();
            let mass = assemble_mass(&mesh);
            let last = traj.fields.last().unwrap();
            let mean = mass.matvec(last.as_slice()).iter().sum::<f64>() / 16.0;
            means.push(mean);
        }
        let d1 = (means[1] - means[0]).abs();
        let d2 = (means[2] - means[1]).abs();
        assert!(
            d2 < d1,
            "refinement deltas must shrink: {d1:.3e} then {d2:.3e}"
        );
    }

    #[test]
    fn nonphysical_initial_state_rejected() {
        let mesh = build_mesh(4, 4);
        let d = DiffusivityField::uniform(&mesh, 15.0).unwrap();
        let grid = TimeGrid::new(0.1, 2, 1).unwrap();
        let mut vals = vec![293.15; mesh.node_count()];
        vals[3] = -1.0;
        let u0 = NodalField::from_vec(vals);
        assert!(matches!(
            solve_trajectory(&mesh, &u0, &grid, &d, paper_bc()),
            Err(Error::NonPhysical { .. })
        ));
    }
}
