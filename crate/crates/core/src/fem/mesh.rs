//! Uniform triangulation of the square plate (-2, 2)^2.

use crate::error::{Error, Result};

/// Domain half-width: the plate is (-HALF, HALF)^2.
pub const DOMAIN_HALF: f64 = 2.0;
/// Plate area |Omega|.
pub const DOMAIN_AREA: f64 = 16.0;

/// Which side of the boundary an edge lies on (outward normal direction).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Bottom,
    Right,
    Top,
    Left,
}

#[derive(Debug, Clone, Copy)]
pub struct BoundaryEdge {
    pub nodes: [usize; 2],
    pub side: Side,
}

/// Structured triangular mesh: each grid cell is split along its
/// lower-left/upper-right diagonal, always in the same orientation.
#[derive(Debug, Clone)]
pub struct Mesh {
    pub nodes: Vec<[f64; 2]>,
    pub triangles: Vec<[usize; 3]>,
    pub boundary_edges: Vec<BoundaryEdge>,
    pub nx: usize,
    pub ny: usize,
}

/// Build the uniform mesh with `nx * ny` cells (two triangles each).
pub fn build_mesh(nx: usize, ny: usize) -> Mesh {
    assert!(nx >= 1 && ny >= 1, "mesh needs at least one cell per axis");
    let hx = 2.0 * DOMAIN_HALF / nx as f64;
    let hy = 2.0 * DOMAIN_HALF / ny as f64;
    let idx = |i: usize, j: usize| j * (nx + 1) + i;

    let mut nodes = Vec::with_capacity((nx + 1) * (ny + 1));
    for j in 0..=ny {
        for i in 0..=nx {
            nodes.push([-DOMAIN_HALF + i as f64 * hx, -DOMAIN_HALF + j as f64 * hy]);
        }
    }

    let mut triangles = Vec::with_capacity(2 * nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            let (n00, n10) = (idx(i, j), idx(i + 1, j));
            let (n01, n11) = (idx(i, j + 1), idx(i + 1, j + 1));
            triangles.push([n00, n10, n11]);
            triangles.push([n00, n11, n01]);
        }
    }

    let mut boundary_edges = Vec::with_capacity(2 * (nx + ny));
    for i in 0..nx {
        boundary_edges.push(BoundaryEdge {
            nodes: [idx(i, 0), idx(i + 1, 0)],
            side: Side::Bottom,
        });
        boundary_edges.push(BoundaryEdge {
            nodes: [idx(i, ny), idx(i + 1, ny)],
            side: Side::Top,
        });
    }
    for j in 0..ny {
        boundary_edges.push(BoundaryEdge {
            nodes: [idx(nx, j), idx(nx, j + 1)],
            side: Side::Right,
        });
        boundary_edges.push(BoundaryEdge {
            nodes: [idx(0, j), idx(0, j + 1)],
            side: Side::Left,
        });
    }

    Mesh {
        nodes,
        triangles,
        boundary_edges,
        nx,
        ny,
    }
}

impl Mesh {
    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn cell_size(&self) -> (f64, f64) {
        (
            2.0 * DOMAIN_HALF / self.nx as f64,
            2.0 * DOMAIN_HALF / self.ny as f64,
        )
    }

    /// Half-bandwidth of any FE matrix on this mesh under the row-major
    /// node ordering.
    pub fn half_bandwidth(&self) -> usize {
        self.nx + 2
    }

    pub fn tri_coords(&self, t: usize) -> [[f64; 2]; 3] {
        let [a, b, c] = self.triangles[t];
        [self.nodes[a], self.nodes[b], self.nodes[c]]
    }

    pub fn signed_area(&self, t: usize) -> f64 {
        let [p0, p1, p2] = self.tri_coords(t);
        0.5 * ((p1[0] - p0[0]) * (p2[1] - p0[1]) - (p2[0] - p0[0]) * (p1[1] - p0[1]))
    }

    /// Triangle containing `p` (points on shared edges resolve to one of
    /// the adjacent triangles; fine for evaluation of continuous fields).
    pub fn locate(&self, p: [f64; 2]) -> Result<usize> {
        let (hx, hy) = self.cell_size();
        let fx = (p[0] + DOMAIN_HALF) / hx;
        let fy = (p[1] + DOMAIN_HALF) / hy;
        if !(-1e-12..=self.nx as f64 + 1e-12).contains(&fx)
            || !(-1e-12..=self.ny as f64 + 1e-12).contains(&fy)
        {
            return Err(Error::Format(format!(
                "point ({}, {}) outside domain",
                p[0], p[1]
            )));
        }
        let i = (fx.floor() as usize).min(self.nx - 1);
        let j = (fy.floor() as usize).min(self.ny - 1);
        let (lx, ly) = (fx - i as f64, fy - j as f64);
        // cell (i, j) owns triangles 2*(j*nx + i) (below diagonal) and +1
        let cell = 2 * (j * self.nx + i);
        Ok(if ly <= lx { cell } else { cell + 1 })
    }

    /// Evaluate the P1 interpolant of nodal `values` at point `p` inside
    /// triangle `t`.
    pub fn eval_p1(&self, values: &[f64], t: usize, p: [f64; 2]) -> f64 {
        let [i0, i1, i2] = self.triangles[t];
        let [p0, p1, p2] = self.tri_coords(t);
        let det = (p1[0] - p0[0]) * (p2[1] - p0[1]) - (p2[0] - p0[0]) * (p1[1] - p0[1]);
        let l1 = ((p[0] - p0[0]) * (p2[1] - p0[1]) - (p2[0] - p0[0]) * (p[1] - p0[1])) / det;
        let l2 = ((p1[0] - p0[0]) * (p[1] - p0[1]) - (p[0] - p0[0]) * (p1[1] - p0[1])) / det;
        let l0 = 1.0 - l1 - l2;
        l0 * values[i0] + l1 * values[i1] + l2 * values[i2]
    }
}
