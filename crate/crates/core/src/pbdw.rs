//! Saddle-point state estimation: background space plus observable update.
//!
//! The estimate decomposes as u = Z z + Q eta, where z are coefficients in
//! the reduced background basis and eta coefficients in the representer
//! basis, with ||eta|| minimized subject to matching the observations.
//! Algebraically this is the KKT system
//!
//! ```text
//! [ A  B ] [eta]   [obs]
//! [ B^T 0 ] [ z ] = [ 0 ]
//! ```
//!
//! with A the representer Gram matrix and B the cross Gram between the two
//! bases. A is time-independent, so the factorization is reused across all
//! time steps.

use nalgebra::{DMatrix, DVector, LU};

use crate::error::{Error, Result};
use crate::fem::NodalField;
use crate::linalg::BandedSym;
use crate::observation::ObservableSpace;
use crate::reduction::BackgroundSpace;

/// Singular values below this are treated as a failed inf-sup condition.
const BETA_FLOOR: f64 = 1e-12;

/// Assembled and factorized estimation system for one (Z_N, U_M) pair.
pub struct PbdwSystem {
    /// Representer Gram matrix, M x M.
    pub gram_a: DMatrix<f64>,
    /// Cross Gram (zeta_n, q_m)_G, M x N.
    pub coupling_b: DMatrix<f64>,
    /// Inf-sup stability constant in (0, 1].
    pub beta: f64,
    kkt: LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
}

impl std::fmt::Debug for PbdwSystem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("PbdwSystem")
            .field("m", &self.sensor_count())
            .field("n", &self.background_dim())
            .field("beta", &self.beta)
            .finish()
    }
}

/// A solved estimate: coefficients in both bases plus the assembled field.
#[derive(Debug, Clone)]
pub struct Estimate {
    pub z_coeffs: DVector<f64>,
    pub eta_coeffs: DVector<f64>,
    pub field: NodalField,
}

impl PbdwSystem {
    pub fn sensor_count(&self) -> usize {
        self.gram_a.nrows()
    }

    pub fn background_dim(&self) -> usize {
        self.coupling_b.ncols()
    }

    /// Solve the saddle-point system for one observation vector.
    pub fn solve_saddle(&self, obs: &DVector<f64>) -> Result<(DVector<f64>, DVector<f64>)> {
        let (m, n) = (self.sensor_count(), self.background_dim());
        if obs.len() != m {
            return Err(Error::DimensionMismatch {
                expected: m,
                got: obs.len(),
                what: "observation vector",
            });
        }
        let mut rhs = DVector::zeros(m + n);
        rhs.rows_mut(0, m).copy_from(obs);
        let sol = self.kkt.solve(&rhs).ok_or(Error::SingularKkt)?;
        Ok((sol.rows(0, m).into_owned(), sol.rows(m, n).into_owned()))
    }

    /// Recover the observation vector a coefficient pair reproduces:
    /// obs = A eta + B z. Used to reconstruct predicted data from stored
    /// estimates.
    pub fn observations_of(&self, eta: &DVector<f64>, z: &DVector<f64>) -> DVector<f64> {
        &self.gram_a * eta + &self.coupling_b * z
    }
}

/// Build the estimation system from the two spaces; fails when the
/// inf-sup condition cannot hold (N > M) or numerically fails.
pub fn assemble_system(
    background: &BackgroundSpace,
    observable: &ObservableSpace,
    _gram: &BandedSym,
) -> Result<PbdwSystem> {
    let m = observable.sensor_count();
    let n = background.dim();
    if n > m {
        return Err(Error::StabilityViolation { beta: 0.0, n, m });
    }
    let gram_a = observable.gram_a.clone();
    // B[(m, n)] = (zeta_n, q_m)_G = zeta_n . b_m, with b_m = G q_m
    let coupling_b = observable.rhs.transpose() * &background.basis;

    let beta = stability_constant(&gram_a, &coupling_b)?;
    if beta <= BETA_FLOOR {
        return Err(Error::StabilityViolation { beta, n, m });
    }

    let mut kkt_mat = DMatrix::zeros(m + n, m + n);
    kkt_mat.view_mut((0, 0), (m, m)).copy_from(&gram_a);
    kkt_mat.view_mut((0, m), (m, n)).copy_from(&coupling_b);
    kkt_mat
        .view_mut((m, 0), (n, m))
        .copy_from(&coupling_b.transpose());
    let kkt = kkt_mat.lu();
    if !kkt.is_invertible() {
        return Err(Error::SingularKkt);
    }
    Ok(PbdwSystem {
        gram_a,
        coupling_b,
        beta,
        kkt,
    })
}

/// Inf-sup constant between the background space and the observable space,
/// assuming the background basis is G-orthonormal: the smallest singular
/// value of L^-1 B where A = L L^T.
pub fn stability_constant(gram_a: &DMatrix<f64>, coupling_b: &DMatrix<f64>) -> Result<f64> {
    let chol = gram_a.clone().cholesky().ok_or(Error::SingularGram)?;
    let whitened = chol
        .l()
        .solve_lower_triangular(coupling_b)
        .ok_or(Error::SingularGram)?;
    let svd = whitened.svd(false, false);
    let sigma_min = svd
        .singular_values
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min);
    if !sigma_min.is_finite() {
        return Err(Error::SingularGram);
    }
    // round-off can push the value a hair above the theoretical cap of 1
    Ok(sigma_min.min(1.0))
}

/// Assemble the field Z z + Q eta.
pub fn assemble_estimate(
    z_coeffs: &DVector<f64>,
    eta_coeffs: &DVector<f64>,
    background: &BackgroundSpace,
    observable: &ObservableSpace,
) -> Result<NodalField> {
    let z_part = background.lift(z_coeffs)?;
    let eta_part = observable.lift(eta_coeffs)?;
    Ok(NodalField(z_part.0 + eta_part.0))
}

/// Solve and assemble in one call.
pub fn solve_estimate(
    system: &PbdwSystem,
    background: &BackgroundSpace,
    observable: &ObservableSpace,
    obs: &DVector<f64>,
) -> Result<Estimate> {
    let (eta_coeffs, z_coeffs) = system.solve_saddle(obs)?;
    let field = assemble_estimate(&z_coeffs, &eta_coeffs, background, observable)?;
    Ok(Estimate {
        z_coeffs,
        eta_coeffs,
        field,
    })
}

impl ObservableSpace {
    /// Abstract construction from explicit representer columns; computes
    /// b_m = G q_m and the Gram matrix. No sensor geometry attached.
    pub fn from_representers(representers: DMatrix<f64>, gram: &BandedSym) -> Result<Self> {
        let m = representers.ncols();
        if m == 0 {
            return Err(Error::Format("need at least one representer".into()));
        }
        let n = representers.nrows();
        let mut rhs = DMatrix::zeros(n, m);
        for c in 0..m {
            rhs.set_column(
                c,
                &DVector::from_vec(gram.matvec(representers.column(c).as_slice())),
            );
        }
        let mut gram_a = DMatrix::zeros(m, m);
        for i in 0..m {
            for j in 0..=i {
                let v = representers.column(i).dot(&rhs.column(j));
                gram_a[(i, j)] = v;
                gram_a[(j, i)] = v;
            }
        }
        Ok(Self {
            patches: Vec::new(),
            representers,
            rhs,
            gram_a,
        })
    }
}
