//! Patch-average observation functionals, their Riesz representers, and
//! observation extraction from trajectories.
//!
//! A sensor returns the mean of the temperature field over a small square
//! patch. Patch/triangle overlaps are computed by exact polygon clipping,
//! so the observation pathway carries no quadrature error: on each clipped
//! polygon the P1 field is linear and integrates exactly through the
//! polygon centroid.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::exec;
use crate::fem::{Mesh, NodalField, TimeGrid, Trajectory};
use crate::linalg::BandedCholesky;

/// Sensor lattice extent: patch centers span [-EXTENT, EXTENT]^2.
pub const LATTICE_EXTENT: f64 = 1.8;

/// Overlap of one patch with one triangle.
#[derive(Debug, Clone, Copy)]
pub struct PatchCover {
    pub triangle: usize,
    pub area: f64,
    pub centroid: [f64; 2],
}

/// A square sensor footprint [cx - w, cx + w] x [cy - w, cy + w].
#[derive(Debug, Clone)]
pub struct Patch {
    pub center: [f64; 2],
    pub halfwidth: f64,
    pub cover: Vec<PatchCover>,
}

impl Patch {
    /// Build the patch and its exact triangle overlap decomposition.
    pub fn new(mesh: &Mesh, center: [f64; 2], halfwidth: f64) -> Result<Self> {
        if halfwidth <= 0.0
            || center[0].abs() + halfwidth > crate::fem::mesh::DOMAIN_HALF
            || center[1].abs() + halfwidth > crate::fem::mesh::DOMAIN_HALF
        {
            return Err(Error::PatchOutsideDomain { center, halfwidth });
        }
        let (xmin, xmax) = (center[0] - halfwidth, center[0] + halfwidth);
        let (ymin, ymax) = (center[1] - halfwidth, center[1] + halfwidth);

        // only cells intersecting the rectangle can contribute
        let (hx, hy) = mesh.cell_size();
        let half = crate::fem::mesh::DOMAIN_HALF;
        let i0 = (((xmin + half) / hx).floor().max(0.0)) as usize;
        let i1 = (((xmax + half) / hx).ceil() as usize).min(mesh.nx);
        let j0 = (((ymin + half) / hy).floor().max(0.0)) as usize;
        let j1 = (((ymax + half) / hy).ceil() as usize).min(mesh.ny);

        let patch_area = 4.0 * halfwidth * halfwidth;
        let mut cover = Vec::new();
        for j in j0..j1 {
            for i in i0..i1 {
                for t in [2 * (j * mesh.nx + i), 2 * (j * mesh.nx + i) + 1] {
                    let poly = clip_triangle_to_rect(&mesh.tri_coords(t), xmin, xmax, ymin, ymax);
                    if poly.len() < 3 {
                        continue;
                    }
                    let (area, centroid) = polygon_area_centroid(&poly);
                    if area > 1e-15 * patch_area {
                        cover.push(PatchCover {
                            triangle: t,
                            area,
                            centroid,
                        });
                    }
                }
            }
        }
        let covered: f64 = cover.iter().map(|c| c.area).sum();
        debug_assert!(
            (covered - patch_area).abs() <= 1e-10 * patch_area,
            "clipping lost area: {covered} vs {patch_area}"
        );
        Ok(Self {
            center,
            halfwidth,
            cover,
        })
    }

    pub fn covered_area(&self) -> f64 {
        self.cover.iter().map(|c| c.area).sum()
    }
}

/// Sutherland-Hodgman clip of a triangle against an axis-aligned rectangle.
fn clip_triangle_to_rect(
    tri: &[[f64; 2]; 3],
    xmin: f64,
    xmax: f64,
    ymin: f64,
    ymax: f64,
) -> Vec<[f64; 2]> {
    // signed distances to the four rectangle edges, positive inside
    let planes: [(usize, f64, f64); 4] = [
        (0, 1.0, -xmin),
        (0, -1.0, xmax),
        (1, 1.0, -ymin),
        (1, -1.0, ymax),
    ];
    let mut poly: Vec<[f64; 2]> = tri.to_vec();
    for (axis, sign, offset) in planes {
        if poly.is_empty() {
            break;
        }
        let dist = |p: &[f64; 2]| sign * p[axis] + offset;
        let mut out = Vec::with_capacity(poly.len() + 2);
        for i in 0..poly.len() {
            let (a, b) = (poly[i], poly[(i + 1) % poly.len()]);
            let (da, db) = (dist(&a), dist(&b));
            if da >= 0.0 {
                out.push(a);
            }
            if (da > 0.0 && db < 0.0) || (da < 0.0 && db > 0.0) {
                let t = da / (da - db);
                out.push([a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])]);
            }
        }
        poly = out;
    }
    poly
}

/// Shoelace area and centroid of a simple polygon.
fn polygon_area_centroid(poly: &[[f64; 2]]) -> (f64, [f64; 2]) {
    let mut a2 = 0.0;
    let (mut cx, mut cy) = (0.0, 0.0);
    for i in 0..poly.len() {
        let p = poly[i];
        let q = poly[(i + 1) % poly.len()];
        let cross = p[0] * q[1] - q[0] * p[1];
        a2 += cross;
        cx += (p[0] + q[0]) * cross;
        cy += (p[1] + q[1]) * cross;
    }
    let area = 0.5 * a2;
    if area.abs() < 1e-300 {
        return (0.0, [0.0, 0.0]);
    }
    (area, [cx / (3.0 * a2), cy / (3.0 * a2)])
}

/// Uniform `side_count x side_count` sensor lattice over the plate.
pub fn build_patch_grid(mesh: &Mesh, side_count: usize, halfwidth: f64) -> Result<Vec<Patch>> {
    if side_count == 0 {
        return Err(Error::Format("side_count must be at least 1".into()));
    }
    let mut patches = Vec::with_capacity(side_count * side_count);
    for j in 0..side_count {
        for i in 0..side_count {
            let coord = |k: usize| {
                if side_count == 1 {
                    0.0
                } else {
                    -LATTICE_EXTENT + 2.0 * LATTICE_EXTENT * k as f64 / (side_count - 1) as f64
                }
            };
            patches.push(Patch::new(mesh, [coord(i), coord(j)], halfwidth)?);
        }
    }
    Ok(patches)
}

/// Mean of the P1 field over the patch: exact integral / covered area.
pub fn observe(mesh: &Mesh, field: &NodalField, patch: &Patch) -> f64 {
    let values = field.as_slice();
    let mut integral = 0.0;
    for c in &patch.cover {
        integral += c.area * mesh.eval_p1(values, c.triangle, c.centroid);
    }
    integral / patch.covered_area()
}

/// Riesz representer of one patch functional: the field q with
/// (q, v)_G = l(v) for every FE field v, obtained from G q = b.
pub fn riesz_representer(mesh: &Mesh, patch: &Patch, gram_chol: &BandedCholesky) -> NodalField {
    NodalField::from_vec(gram_chol.solve(riesz_rhs(mesh, patch).as_slice()))
}

/// Right-hand side of the representer solve: b_i = l(phi_i).
pub fn riesz_rhs(mesh: &Mesh, patch: &Patch) -> DVector<f64> {
    let mut b = DVector::zeros(mesh.node_count());
    let inv_area = 1.0 / patch.covered_area();
    for c in &patch.cover {
        let tri = mesh.triangles[c.triangle];
        let [p0, p1, p2] = mesh.tri_coords(c.triangle);
        let det = (p1[0] - p0[0]) * (p2[1] - p0[1]) - (p2[0] - p0[0]) * (p1[1] - p0[1]);
        let p = c.centroid;
        let l1 = ((p[0] - p0[0]) * (p2[1] - p0[1]) - (p2[0] - p0[0]) * (p[1] - p0[1])) / det;
        let l2 = ((p1[0] - p0[0]) * (p[1] - p0[1]) - (p[0] - p0[0]) * (p1[1] - p0[1])) / det;
        let bary = [1.0 - l1 - l2, l1, l2];
        for (local, &node) in tri.iter().enumerate() {
            b[node] += inv_area * c.area * bary[local];
        }
    }
    b
}

/// The observable space: Riesz representers of the patch functionals in
/// the H1 inner product, plus their Gram matrix.
#[derive(Debug, Clone)]
pub struct ObservableSpace {
    pub patches: Vec<Patch>,
    /// Columns are the representer nodal vectors q_m.
    pub representers: DMatrix<f64>,
    /// Columns are the functional right-hand sides b_m = G q_m.
    pub rhs: DMatrix<f64>,
    /// gram_a[(m, m')] = (q_m', q_m)_G, symmetric positive definite.
    pub gram_a: DMatrix<f64>,
}

impl ObservableSpace {
    /// Solve G q_m = b_m for every patch against one shared factorization.
    pub fn build(mesh: &Mesh, patches: Vec<Patch>, gram_chol: &BandedCholesky) -> Result<Self> {
        let n = mesh.node_count();
        let m = patches.len();
        if m == 0 {
            return Err(Error::Format(
                "observable space needs at least one patch".into(),
            ));
        }
        let rhs_cols = exec::map_indexed(m, |j| riesz_rhs(mesh, &patches[j]));
        let rep_cols = exec::map_indexed(m, |j| {
            let mut q = rhs_cols[j].as_slice().to_vec();
            gram_chol.solve_in_place(&mut q);
            q
        });

        let mut rhs = DMatrix::zeros(n, m);
        let mut representers = DMatrix::zeros(n, m);
        for j in 0..m {
            rhs.set_column(j, &rhs_cols[j]);
            representers.set_column(j, &DVector::from_column_slice(&rep_cols[j]));
        }

        // A[(m, m')] = (q_m', q_m)_G = q_m . b_m'; mirror for exact symmetry
        let mut gram_a = DMatrix::zeros(m, m);
        for i in 0..m {
            for j in 0..=i {
                let v = representers.column(i).dot(&rhs.column(j));
                gram_a[(i, j)] = v;
                gram_a[(j, i)] = v;
            }
        }
        Ok(Self {
            patches,
            representers,
            rhs,
            gram_a,
        })
    }

    pub fn sensor_count(&self) -> usize {
        self.representers.ncols()
    }

    /// Assemble the field sum_m coeffs_m q_m.
    pub fn lift(&self, coeffs: &DVector<f64>) -> Result<NodalField> {
        if coeffs.len() != self.sensor_count() {
            return Err(Error::DimensionMismatch {
                expected: self.sensor_count(),
                got: coeffs.len(),
                what: "observable coefficients",
            });
        }
        Ok(NodalField(&self.representers * coeffs))
    }

    /// Exact observation vector of a field: l_m(v) for every patch.
    pub fn observe_field(&self, mesh: &Mesh, field: &NodalField) -> DVector<f64> {
        DVector::from_iterator(
            self.sensor_count(),
            self.patches.iter().map(|p| observe(mesh, field, p)),
        )
    }
}

/// Time-indexed observation vectors, row k = observations of snapshot k.
#[derive(Debug, Clone)]
pub struct ObservationSeries {
    pub times: Vec<f64>,
    pub rows: Vec<DVector<f64>>,
}

impl ObservationSeries {
    pub fn sensor_count(&self) -> usize {
        self.rows.first().map_or(0, |r| r.len())
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

/// Observe every snapshot of a trajectory.
pub fn observe_trajectory(
    mesh: &Mesh,
    trajectory: &Trajectory,
    space: &ObservableSpace,
    grid: &TimeGrid,
) -> ObservationSeries {
    let rows = exec::map_indexed(trajectory.fields.len(), |k| {
        space.observe_field(mesh, &trajectory.fields[k])
    });
    let times = (0..trajectory.fields.len()).map(|k| grid.time(k)).collect();
    ObservationSeries { times, rows }
}
