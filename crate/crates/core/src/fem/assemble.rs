//! P1 finite-element assembly: mass, diffusion stiffness, H1 Gram.

use crate::error::{Error, Result};
use crate::exec;
use crate::linalg::BandedSym;

use super::mesh::Mesh;

/// Triangle-wise diffusivity.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DiffusivityKind {
    Uniform,
    Bimaterial,
}

/// Piecewise-constant diffusivity over the mesh triangles.
///
/// `Uniform` is the best-knowledge plate: D = mu everywhere. `Bimaterial`
/// is the synthetic-truth plate: D = 1 on the inner square (-1, 1)^2 and
/// D = mu outside it.
#[derive(Debug, Clone)]
pub struct DiffusivityField {
    pub kind: DiffusivityKind,
    pub mu: f64,
    pub values: Vec<f64>,
}

impl DiffusivityField {
    pub fn uniform(mesh: &Mesh, mu: f64) -> Result<Self> {
        if mu <= 0.0 {
            return Err(Error::Format(format!(
                "diffusivity must be positive, got {mu}"
            )));
        }
        Ok(Self {
            kind: DiffusivityKind::Uniform,
            mu,
            values: vec![mu; mesh.triangles.len()],
        })
    }

    pub fn bimaterial(mesh: &Mesh, mu: f64) -> Result<Self> {
        if mu <= 0.0 {
            return Err(Error::Format(format!(
                "diffusivity must be positive, got {mu}"
            )));
        }
        let values = (0..mesh.triangles.len())
            .map(|t| {
                let [p0, p1, p2] = mesh.tri_coords(t);
                let cx = (p0[0] + p1[0] + p2[0]) / 3.0;
                let cy = (p0[1] + p1[1] + p2[1]) / 3.0;
                if cx.abs() < 1.0 && cy.abs() < 1.0 {
                    1.0
                } else {
                    mu
                }
            })
            .collect();
        Ok(Self {
            kind: DiffusivityKind::Bimaterial,
            mu,
            values,
        })
    }
}

/// Exact P1 mass matrix of one triangle: area/6 on the diagonal, area/12 off.
pub fn local_mass(coords: &[[f64; 2]; 3]) -> [[f64; 3]; 3] {
    let area = triangle_area(coords);
    let (d, o) = (area / 6.0, area / 12.0);
    [[d, o, o], [o, d, o], [o, o, d]]
}

/// P1 stiffness matrix of one triangle with unit diffusivity.
pub fn local_stiffness(coords: &[[f64; 2]; 3]) -> [[f64; 3]; 3] {
    let area = triangle_area(coords);
    let grads = p1_gradients(coords, area);
    let mut k = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            k[i][j] = area * (grads[i][0] * grads[j][0] + grads[i][1] * grads[j][1]);
        }
    }
    k
}

fn triangle_area(c: &[[f64; 2]; 3]) -> f64 {
    0.5 * ((c[1][0] - c[0][0]) * (c[2][1] - c[0][1]) - (c[2][0] - c[0][0]) * (c[1][1] - c[0][1]))
}

fn p1_gradients(c: &[[f64; 2]; 3], area: f64) -> [[f64; 2]; 3] {
    let f = 1.0 / (2.0 * area);
    [
        [f * (c[1][1] - c[2][1]), f * (c[2][0] - c[1][0])],
        [f * (c[2][1] - c[0][1]), f * (c[0][0] - c[2][0])],
        [f * (c[0][1] - c[1][1]), f * (c[1][0] - c[0][0])],
    ]
}

/// Element-parallel assembly: local matrices are computed concurrently in
/// triangle order, then scattered sequentially so the result is identical
/// across thread counts.
fn assemble(mesh: &Mesh, local: impl Fn(usize) -> [[f64; 3]; 3] + Sync + Send) -> BandedSym {
    let locals = exec::map_indexed(mesh.triangles.len(), local);
    let mut out = BandedSym::zeros(mesh.node_count(), mesh.half_bandwidth());
    for (t, loc) in locals.iter().enumerate() {
        let tri = mesh.triangles[t];
        for p in 0..3 {
            for q in 0..=p {
                out.add(tri[p], tri[q], loc[p][q]);
            }
        }
    }
    out
}

/// L2 mass matrix; symmetric positive definite.
pub fn assemble_mass(mesh: &Mesh) -> BandedSym {
    assemble(mesh, |t| local_mass(&mesh.tri_coords(t)))
}

/// Weighted stiffness matrix for the diffusion operator; positive
/// semidefinite with constants in its kernel.
pub fn assemble_stiffness(mesh: &Mesh, diffusivity: &DiffusivityField) -> BandedSym {
    assert_eq!(diffusivity.values.len(), mesh.triangles.len());
    assemble(mesh, |t| {
        let mut k = local_stiffness(&mesh.tri_coords(t));
        let d = diffusivity.values[t];
        for row in &mut k {
            for v in row {
                *v *= d;
            }
        }
        k
    })
}

/// Full H1 Gram matrix: mass plus unit-diffusivity stiffness. SPD; this is
/// the inner product every projection, representer and norm in the crate
/// uses.
pub fn h1_gram(mesh: &Mesh) -> BandedSym {
    let mut g = assemble_mass(mesh);
    let unit = DiffusivityField::uniform(mesh, 1.0).expect("unit diffusivity");
    g.add_assign(&assemble_stiffness(mesh, &unit));
    g
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::mesh::build_mesh;

    const AREA: f64 = 16.0;

    #[test]
    #[allow(clippy::needless_range_loop)]
    fn local_mass_reference_triangle() {
        let m = local_mass(&[[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]);
        // area 1/2: diagonal area/6 = 1/12, off-diagonal area/12 = 1/24
        for i in 0..3 {
            for j in 0..3 {
                let expect = if i == j { 1.0 / 12.0 } else { 1.0 / 24.0 };
                assert!((m[i][j] - expect).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn local_stiffness_reference_triangle() {
        let k = local_stiffness(&[[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]);
        let expect = [[1.0, -0.5, -0.5], [-0.5, 0.5, 0.0], [-0.5, 0.0, 0.5]];
        for i in 0..3 {
            for j in 0..3 {
                assert!((k[i][j] - expect[i][j]).abs() < 1e-15, "({i},{j})");
            }
        }
    }

    #[test]
    fn mass_integrates_constants() {
        let mesh = build_mesh(5, 4);
        let m = assemble_mass(&mesh);
        let c = vec![3.5; mesh.node_count()];
        let q = m.quadratic_form(&c, &c);
        assert!((q - AREA * 3.5 * 3.5).abs() <= 1e-12 * q);
    }

    #[test]
    fn mass_row_sums_partition_of_unity() {
        let mesh = build_mesh(4, 6);
        let m = assemble_mass(&mesh);
        let ones = vec![1.0; mesh.node_count()];
        let total: f64 = m.matvec(&ones).iter().sum();
        assert!((total - AREA).abs() <= 1e-12 * AREA);
    }

    #[test]
    fn stiffness_annihilates_constants() {
        let mesh = build_mesh(6, 6);
        let d = DiffusivityField::bimaterial(&mesh, 15.0).unwrap();
        let k = assemble_stiffness(&mesh, &d);
        let c = vec![2.0; mesh.node_count()];
        let r = k.matvec(&c);
        let max = r.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(max <= 1e-12 * k.max_abs());
    }

    #[test]
    fn stiffness_scales_linearly_in_mu() {
        let mesh = build_mesh(3, 5);
        let d1 = DiffusivityField::uniform(&mesh, 1.0).unwrap();
        let d7 = DiffusivityField::uniform(&mesh, 7.0).unwrap();
        let k1 = assemble_stiffness(&mesh, &d1);
        let k7 = assemble_stiffness(&mesh, &d7);
        for i in 0..mesh.node_count() {
            for j in i.saturating_sub(mesh.half_bandwidth())..=i {
                assert!((7.0 * k1.get(i, j) - k7.get(i, j)).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn gram_on_constant_and_linear_fields() {
        let mesh = build_mesh(8, 8);
        let g = h1_gram(&mesh);
        let c = vec![2.0; mesh.node_count()];
        let qc = g.quadratic_form(&c, &c);
        assert!((qc - AREA * 4.0).abs() <= 1e-12 * qc);

        // u = x: integral of x^2 is 64/3, integral of |grad u|^2 is 16
        let x: Vec<f64> = mesh.nodes.iter().map(|p| p[0]).collect();
        let qx = g.quadratic_form(&x, &x);
        let expect = 64.0 / 3.0 + 16.0;
        assert!((qx - expect).abs() <= 1e-12 * expect);
    }

    #[test]
    fn gram_spd_on_small_mesh() {
        let mesh = build_mesh(3, 3);
        let g = h1_gram(&mesh).to_dense();
        let eig = nalgebra::SymmetricEigen::new(g);
        let min = eig
            .eigenvalues
            .iter()
            .cloned()
            .fold(f64::INFINITY, f64::min);
        assert!(min > 0.0, "Gram must be SPD, smallest eigenvalue {min}");
    }

    #[test]
    fn bimaterial_values_by_region() {
        let mesh = build_mesh(8, 8);
        let d = DiffusivityField::bimaterial(&mesh, 15.0).unwrap();
        for (t, &v) in d.values.iter().enumerate() {
            let [p0, p1, p2] = mesh.tri_coords(t);
            let cx = (p0[0] + p1[0] + p2[0]) / 3.0;
            let cy = (p0[1] + p1[1] + p2[1]) / 3.0;
            let expect = if cx.abs() < 1.0 && cy.abs() < 1.0 {
                1.0
            } else {
                15.0
            };
            assert_eq!(v, expect);
        }
        assert!(DiffusivityField::uniform(&mesh, -1.0).is_err());
    }
}
