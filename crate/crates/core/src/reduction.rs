//! Background-space construction by proper orthogonal decomposition, and
//! orthogonal projection onto arbitrary subspaces.
//!
//! POD uses the method of snapshots: the eigendecomposition of the
//! snapshot Gram matrix S_ij = (u_i, u_j)_G yields modes that are
//! orthonormal in the same H1 inner product used by the estimator.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};
use crate::exec;
use crate::fem::NodalField;
use crate::linalg::BandedSym;

/// Relative eigenvalue floor below which a requested mode is considered
/// numerically absent from the snapshot set.
const RANK_FLOOR: f64 = 1e-14;

/// N-dimensional reduced space spanned by G-orthonormal POD modes.
#[derive(Debug, Clone)]
pub struct BackgroundSpace {
    /// Columns are the mode nodal vectors zeta_n.
    pub basis: DMatrix<f64>,
    /// Retained POD eigenvalues, descending.
    pub eigenvalues: Vec<f64>,
    /// Sum of the eigenvalues left out of the basis.
    pub discarded_energy: f64,
}

impl BackgroundSpace {
    /// Wrap an explicit basis (used by tests and synthetic constructions).
    pub fn from_basis(basis: DMatrix<f64>) -> Self {
        let n = basis.ncols();
        Self {
            basis,
            eigenvalues: vec![0.0; n],
            discarded_energy: 0.0,
        }
    }

    pub fn dim(&self) -> usize {
        self.basis.ncols()
    }

    /// The mode nodal vectors as slices, in order.
    pub fn mode_slices(&self) -> Vec<&[f64]> {
        let n = self.basis.nrows();
        (0..self.dim())
            .map(|c| &self.basis.as_slice()[c * n..(c + 1) * n])
            .collect()
    }

    /// Assemble the field sum_n coeffs_n zeta_n.
    pub fn lift(&self, coeffs: &DVector<f64>) -> Result<NodalField> {
        if coeffs.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: coeffs.len(),
                what: "background coefficients",
            });
        }
        Ok(NodalField(&self.basis * coeffs))
    }
}

/// First `n_modes` POD modes of the snapshot set in the G inner product.
pub fn pod(snapshots: &[NodalField], gram: &BandedSym, n_modes: usize) -> Result<BackgroundSpace> {
    let count = snapshots.len();
    if n_modes == 0 || n_modes > count {
        return Err(Error::Format(format!(
            "cannot extract {n_modes} modes from {count} snapshots"
        )));
    }
    let dim = snapshots[0].len();

    // snapshot Gram matrix: G-matvecs once per snapshot, dots pairwise
    let g_snaps = exec::map_indexed(count, |i| gram.matvec(snapshots[i].as_slice()));
    let entries = exec::map_indexed(count, |i| {
        let mut row = vec![0.0; i + 1];
        for (j, slot) in row.iter_mut().enumerate() {
            *slot = snapshots[i]
                .as_slice()
                .iter()
                .zip(&g_snaps[j])
                .map(|(a, b)| a * b)
                .sum();
        }
        row
    });
    let mut s = DMatrix::zeros(count, count);
    for (i, row) in entries.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            s[(i, j)] = v;
            s[(j, i)] = v;
        }
    }

    let eig = SymmetricEigen::new(s);
    let mut order: Vec<usize> = (0..count).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));

    let largest = eig.eigenvalues[order[0]].max(0.0);
    if largest <= 0.0 {
        return Err(Error::RankDeficient {
            requested: n_modes,
            eigenvalue: 0.0,
            largest: 0.0,
        });
    }
    let nth = eig.eigenvalues[order[n_modes - 1]];
    if nth <= RANK_FLOOR * largest {
        return Err(Error::RankDeficient {
            requested: n_modes,
            eigenvalue: nth,
            largest,
        });
    }

    let mut basis = DMatrix::zeros(dim, n_modes);
    let mut eigenvalues = Vec::with_capacity(n_modes);
    for (col, &oi) in order.iter().take(n_modes).enumerate() {
        let lambda = eig.eigenvalues[oi];
        eigenvalues.push(lambda);
        let v = eig.eigenvectors.column(oi);
        let mut mode = DVector::zeros(dim);
        for (i, snap) in snapshots.iter().enumerate() {
            mode.axpy(v[i] / lambda.sqrt(), &snap.0, 1.0);
        }
        // sign convention: first non-negligible entry positive
        let scale = mode.amax();
        if let Some(first) = mode.iter().find(|x| x.abs() > 1e-12 * scale) {
            if *first < 0.0 {
                mode.neg_mut();
            }
        }
        basis.set_column(col, &mode);
    }
    let discarded_energy = order
        .iter()
        .skip(n_modes)
        .map(|&oi| eig.eigenvalues[oi].max(0.0))
        .sum();

    Ok(BackgroundSpace {
        basis,
        eigenvalues,
        discarded_energy,
    })
}

/// G-orthogonal projection of `field` onto the span of `basis` columns.
///
/// Solves the normal system (basis^T G basis) c = basis^T G field, so the
/// basis need not be orthonormal (the observable space is not).
pub fn project(field: &NodalField, basis: &DMatrix<f64>, gram: &BandedSym) -> Result<NodalField> {
    let coeffs = project_coeffs(field, basis, gram)?;
    Ok(NodalField(basis * coeffs))
}

/// Coefficients of the G-orthogonal projection in the basis columns.
pub fn project_coeffs(
    field: &NodalField,
    basis: &DMatrix<f64>,
    gram: &BandedSym,
) -> Result<DVector<f64>> {
    let j = basis.ncols();
    let g_field = DVector::from_vec(gram.matvec(field.as_slice()));
    let rhs = basis.transpose() * g_field;
    let mut small = DMatrix::zeros(j, j);
    let g_cols: Vec<Vec<f64>> = (0..j)
        .map(|c| gram.matvec(basis.column(c).as_slice()))
        .collect();
    for a in 0..j {
        for b in 0..=a {
            let v: f64 = basis
                .column(a)
                .iter()
                .zip(&g_cols[b])
                .map(|(x, y)| x * y)
                .sum();
            small[(a, b)] = v;
            small[(b, a)] = v;
        }
    }
    crate::linalg::spd_solve_floored(&small, &rhs, 1e-13).ok_or(Error::SingularProjectionGram)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::{build_mesh, h1_gram};
    use crate::rng::SplitMix64;

    fn random_field(n: usize, rng: &mut SplitMix64) -> NodalField {
        NodalField::from_vec((0..n).map(|_| rng.next_symmetric(1.0)).collect())
    }

    fn gram_dot(g: &BandedSym, a: &NodalField, b: &NodalField) -> f64 {
        g.quadratic_form(a.as_slice(), b.as_slice())
    }

    #[test]
    fn single_snapshot_normalizes() {
        let mesh = build_mesh(6, 6);
        let g = h1_gram(&mesh);
        let mut rng = SplitMix64::new(1);
        let snap = random_field(mesh.node_count(), &mut rng);
        let space = pod(std::slice::from_ref(&snap), &g, 1).unwrap();
        let mode = NodalField(space.basis.column(0).into_owned());
        assert!((gram_dot(&g, &mode, &mode) - 1.0).abs() < 1e-10);
        // mode is parallel to the snapshot
        let nrm = gram_dot(&g, &snap, &snap).sqrt();
        let cos = gram_dot(&g, &mode, &snap) / nrm;
        assert!((cos.abs() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn basis_is_g_orthonormal_and_nested() {
        let mesh = build_mesh(8, 8);
        let g = h1_gram(&mesh);
        let mut rng = SplitMix64::new(42);
        let snaps: Vec<NodalField> = (0..12)
            .map(|_| random_field(mesh.node_count(), &mut rng))
            .collect();
        let s4 = pod(&snaps, &g, 4).unwrap();
        for a in 0..4 {
            for b in 0..4 {
                let va = NodalField(s4.basis.column(a).into_owned());
                let vb = NodalField(s4.basis.column(b).into_owned());
                let want = if a == b { 1.0 } else { 0.0 };
                assert!((gram_dot(&g, &va, &vb) - want).abs() < 1e-10, "({a},{b})");
            }
        }
        for w in s4.eigenvalues.windows(2) {
            assert!(w[0] >= w[1]);
            assert!(w[1] >= 0.0);
        }
        // nesting: first 3 modes of the rank-4 space match the rank-3 space
        let s3 = pod(&snaps, &g, 3).unwrap();
        for c in 0..3 {
            for i in 0..mesh.node_count() {
                assert!((s3.basis[(i, c)] - s4.basis[(i, c)]).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn orthonormal_snapshots_recovered() {
        let mesh = build_mesh(7, 7);
        let g = h1_gram(&mesh);
        let mut rng = SplitMix64::new(9);
        // Gram-Schmidt three random fields in G
        let mut ortho: Vec<NodalField> = Vec::new();
        for _ in 0..3 {
            let mut v = random_field(mesh.node_count(), &mut rng);
            for o in &ortho {
                let c = gram_dot(&g, &v, o);
                v.0.axpy(-c, &o.0, 1.0);
            }
            let nrm = gram_dot(&g, &v, &v).sqrt();
            v.0.scale_mut(1.0 / nrm);
            ortho.push(v);
        }
        let space = pod(&ortho, &g, 3).unwrap();
        // the recovered span must contain each input: projection residual 0
        for o in &ortho {
            let p = project(o, &space.basis, &g).unwrap();
            let mut diff = o.0.clone();
            diff -= &p.0;
            assert!(g.norm(diff.as_slice()) < 1e-8);
        }
    }

    #[test]
    fn pod_optimality_identity() {
        let mesh = build_mesh(8, 8);
        let g = h1_gram(&mesh);
        let mut rng = SplitMix64::new(1234);
        let snaps: Vec<NodalField> = (0..15)
            .map(|_| random_field(mesh.node_count(), &mut rng))
            .collect();
        let space = pod(&snaps, &g, 5).unwrap();
        let mut err_energy = 0.0;
        for s in &snaps {
            let p = project(s, &space.basis, &g).unwrap();
            let mut diff = s.0.clone();
            diff -= &p.0;
            err_energy += g.quadratic_form(diff.as_slice(), diff.as_slice());
        }
        assert!(
            (err_energy - space.discarded_energy).abs() <= 1e-8 * space.discarded_energy,
            "{err_energy} vs discarded {}",
            space.discarded_energy
        );
    }

    #[test]
    fn rank_deficient_detected() {
        let mesh = build_mesh(5, 5);
        let g = h1_gram(&mesh);
        let mut rng = SplitMix64::new(3);
        let a = random_field(mesh.node_count(), &mut rng);
        let mut b = a.clone();
        b.0.scale_mut(2.0); // same direction
        match pod(&[a, b], &g, 2) {
            Err(Error::RankDeficient { requested: 2, .. }) => {}
            other => panic!("expected RankDeficient, got {other:?}"),
        }
    }

    #[test]
    fn projection_fixed_point_orthogonal_zero_idempotent() {
        let mesh = build_mesh(8, 8);
        let g = h1_gram(&mesh);
        let mut rng = SplitMix64::new(55);
        let snaps: Vec<NodalField> = (0..8)
            .map(|_| random_field(mesh.node_count(), &mut rng))
            .collect();
        let space = pod(&snaps, &g, 3).unwrap();

        // field inside span is unchanged
        let coeffs = DVector::from_vec(vec![0.4, -1.1, 2.2]);
        let inside = space.lift(&coeffs).unwrap();
        let p = project(&inside, &space.basis, &g).unwrap();
        let mut diff = inside.0.clone();
        diff -= &p.0;
        assert!(g.norm(diff.as_slice()) <= 1e-10 * g.norm(inside.as_slice()));

        // G-orthogonal field projects to zero
        let mut v = random_field(mesh.node_count(), &mut rng);
        for c in 0..3 {
            let mode = NodalField(space.basis.column(c).into_owned());
            let coeff = gram_dot(&g, &v, &mode);
            v.0.axpy(-coeff, &mode.0, 1.0);
        }
        let pz = project(&v, &space.basis, &g).unwrap();
        assert!(g.norm(pz.as_slice()) <= 1e-9 * g.norm(v.as_slice()).max(1.0));

        // idempotence
        let w = random_field(mesh.node_count(), &mut rng);
        let p1 = project(&w, &space.basis, &g).unwrap();
        let p2 = project(&p1, &space.basis, &g).unwrap();
        let mut d = p1.0.clone();
        d -= &p2.0;
        assert!(g.norm(d.as_slice()) <= 1e-10 * g.norm(p1.as_slice()).max(1e-30));

        // Pythagoras
        let nw = g.quadratic_form(w.as_slice(), w.as_slice());
        let np = g.quadratic_form(p1.as_slice(), p1.as_slice());
        let mut r = w.0.clone();
        r -= &p1.0;
        let nr = g.quadratic_form(r.as_slice(), r.as_slice());
        assert!((nw - np - nr).abs() <= 1e-8 * nw);
    }

    #[test]
    fn projection_error_nonincreasing_in_dimension() {
        let mesh = build_mesh(8, 8);
        let g = h1_gram(&mesh);
        let mut rng = SplitMix64::new(77);
        let snaps: Vec<NodalField> = (0..10)
            .map(|_| random_field(mesh.node_count(), &mut rng))
            .collect();
        let held_out: Vec<NodalField> = (0..3)
            .map(|_| random_field(mesh.node_count(), &mut rng))
            .collect();
        for probe in &held_out {
            let mut prev = f64::INFINITY;
            for n in 1..=4 {
                let space = pod(&snaps, &g, n).unwrap();
                let p = project(probe, &space.basis, &g).unwrap();
                let mut diff = probe.0.clone();
                diff -= &p.0;
                let eps = g.norm(diff.as_slice());
                assert!(eps <= prev + 1e-12, "dimension {n}: {eps} > {prev}");
                prev = eps;
            }
        }
    }

    #[test]
    fn singular_projection_basis_rejected() {
        let mesh = build_mesh(5, 5);
        let g = h1_gram(&mesh);
        let mut rng = SplitMix64::new(4);
        let v = random_field(mesh.node_count(), &mut rng);
        let mut basis = DMatrix::zeros(mesh.node_count(), 2);
        basis.set_column(0, &v.0);
        basis.set_column(1, &(2.0 * &v.0));
        assert!(matches!(
            project(&v, &basis, &g),
            Err(Error::SingularProjectionGram)
        ));
    }
}
