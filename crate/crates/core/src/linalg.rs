//! Symmetric banded matrices and a banded Cholesky factorization.
//!
//! The finite-element matrices of this crate live on a structured grid, so
//! they have a fixed half-bandwidth (`nx + 2` for the row-major node
//! ordering). Banded storage keeps the largest preset mesh (6561 nodes) cheap:
//! one factorization costs O(n * hb^2) instead of O(n^3).

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Symmetric matrix stored as its lower band, row-major.
///
/// Row `i` holds columns `i - hb ..= i` at `data[i * (hb + 1) ..]`; slots
/// that would fall before column 0 are zero padding.
#[derive(Debug, Clone)]
pub struct BandedSym {
    n: usize,
    hb: usize,
    data: Vec<f64>,
}

impl BandedSym {
    pub fn zeros(n: usize, half_bandwidth: usize) -> Self {
        Self {
            n,
            hb: half_bandwidth,
            data: vec![0.0; n * (half_bandwidth + 1)],
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn half_bandwidth(&self) -> usize {
        self.hb
    }

    #[inline]
    fn slot(&self, row: usize, col: usize) -> usize {
        debug_assert!(col <= row && row - col <= self.hb);
        row * (self.hb + 1) + self.hb - (row - col)
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (r, c) = if i >= j { (i, j) } else { (j, i) };
        if r - c > self.hb {
            0.0
        } else {
            self.data[self.slot(r, c)]
        }
    }

    /// Accumulate into entry (i, j) == (j, i). Call once per unordered pair.
    pub fn add(&mut self, i: usize, j: usize, value: f64) {
        let (r, c) = if i >= j { (i, j) } else { (j, i) };
        assert!(
            r - c <= self.hb,
            "entry ({i}, {j}) outside bandwidth {}",
            self.hb
        );
        let s = self.slot(r, c);
        self.data[s] += value;
    }

    /// self += other (bandwidths must match).
    pub fn add_assign(&mut self, other: &BandedSym) {
        assert_eq!(self.n, other.n);
        assert_eq!(self.hb, other.hb);
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += *b;
        }
    }

    /// self += scale * other.
    pub fn add_scaled(&mut self, other: &BandedSym, scale: f64) {
        assert_eq!(self.n, other.n);
        assert_eq!(self.hb, other.hb);
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += scale * *b;
        }
    }

    pub fn scale(&mut self, s: f64) {
        for a in &mut self.data {
            *a *= s;
        }
    }

    /// y = A x.
    pub fn matvec_into(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.n);
        assert_eq!(y.len(), self.n);
        y.fill(0.0);
        let w = self.hb + 1;
        for i in 0..self.n {
            let lo = i.saturating_sub(self.hb);
            let row = &self.data[i * w + (self.hb - (i - lo))..i * w + w];
            let mut acc = 0.0;
            for (off, &a) in row.iter().enumerate() {
                let j = lo + off;
                acc += a * x[j];
                if j != i {
                    y[j] += a * x[i];
                }
            }
            y[i] += acc;
        }
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        self.matvec_into(x, &mut y);
        y
    }

    /// x^T A y through one matvec.
    pub fn quadratic_form(&self, x: &[f64], y: &[f64]) -> f64 {
        let ay = self.matvec(y);
        x.iter().zip(&ay).map(|(a, b)| a * b).sum()
    }

    /// Induced norm sqrt(x^T A x); clamps tiny negative round-off to zero.
    pub fn norm(&self, x: &[f64]) -> f64 {
        self.quadratic_form(x, x).max(0.0).sqrt()
    }

    /// Largest absolute entry (cheap norm for scale-relative tolerances).
    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0f64, |m, &v| m.max(v.abs()))
    }

    /// Dense copy, for small-problem oracles and eigen checks.
    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.n, self.n);
        for i in 0..self.n {
            for j in i.saturating_sub(self.hb)..=i {
                let v = self.get(i, j);
                m[(i, j)] = v;
                m[(j, i)] = v;
            }
        }
        m
    }

    /// In-place banded Cholesky. Fails if the matrix is not SPD.
    pub fn cholesky(&self, context: &'static str) -> Result<BandedCholesky> {
        let mut l = self.data.clone();
        let n = self.n;
        let hb = self.hb;
        let w = hb + 1;
        for i in 0..n {
            let lo = i.saturating_sub(hb);
            for j in lo..=i {
                let mut sum = l[i * w + hb - (i - j)];
                let kstart = lo.max(j.saturating_sub(hb));
                for k in kstart..j {
                    sum -= l[i * w + hb - (i - k)] * l[j * w + hb - (j - k)];
                }
                if j < i {
                    l[i * w + hb - (i - j)] = sum / l[j * w + hb];
                } else {
                    if sum <= 0.0 || !sum.is_finite() {
                        return Err(Error::NotPositiveDefinite { context });
                    }
                    l[i * w + hb] = sum.sqrt();
                }
            }
        }
        Ok(BandedCholesky { n, hb, l })
    }
}

/// Dense SPD solve with an explicit pivot floor: returns `None` when any
/// Cholesky pivot falls below `rel_floor` times the largest diagonal entry,
/// which catches numerically singular normal matrices that a bare
/// factorization would let through on round-off.
pub fn spd_solve_floored(
    mat: &DMatrix<f64>,
    rhs: &nalgebra::DVector<f64>,
    rel_floor: f64,
) -> Option<nalgebra::DVector<f64>> {
    let n = mat.nrows();
    assert_eq!(mat.ncols(), n);
    assert_eq!(rhs.len(), n);
    let max_diag = (0..n).map(|i| mat[(i, i)]).fold(0.0f64, f64::max);
    if max_diag <= 0.0 {
        return None;
    }
    let floor = rel_floor * max_diag;
    let mut l = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let mut sum = mat[(i, j)];
            for k in 0..j {
                sum -= l[(i, k)] * l[(j, k)];
            }
            if j < i {
                l[(i, j)] = sum / l[(j, j)];
            } else {
                if sum <= floor || !sum.is_finite() {
                    return None;
                }
                l[(i, i)] = sum.sqrt();
            }
        }
    }
    let mut x = rhs.clone();
    for i in 0..n {
        let mut sum = x[i];
        for k in 0..i {
            sum -= l[(i, k)] * x[k];
        }
        x[i] = sum / l[(i, i)];
    }
    for i in (0..n).rev() {
        let mut sum = x[i];
        for k in (i + 1)..n {
            sum -= l[(k, i)] * x[k];
        }
        x[i] = sum / l[(i, i)];
    }
    Some(x)
}

/// Lower-triangular banded Cholesky factor.
#[derive(Debug, Clone)]
pub struct BandedCholesky {
    n: usize,
    hb: usize,
    l: Vec<f64>,
}

impl BandedCholesky {
    pub fn dim(&self) -> usize {
        self.n
    }

    /// Solve A x = b, overwriting and returning `x`.
    pub fn solve_in_place(&self, x: &mut [f64]) {
        assert_eq!(x.len(), self.n);
        let (n, hb, w) = (self.n, self.hb, self.hb + 1);
        // forward: L y = b
        for i in 0..n {
            let lo = i.saturating_sub(hb);
            let mut sum = x[i];
            #[allow(clippy::needless_range_loop)]
            for k in lo..i {
                sum -= self.l[i * w + hb - (i - k)] * x[k];
            }
            x[i] = sum / self.l[i * w + hb];
        }
        // backward: L^T x = y
        for i in (0..n).rev() {
            let hi = (i + hb).min(n - 1);
            let mut sum = x[i];
            #[allow(clippy::needless_range_loop)]
            for k in (i + 1)..=hi {
                sum -= self.l[k * w + hb - (k - i)] * x[k];
            }
            x[i] = sum / self.l[i * w + hb];
        }
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x);
        x
    }
}
