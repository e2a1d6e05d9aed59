//! Linear algebra on the Stiefel manifold of `p × d` matrices with
//! orthonormal columns.
//!
//! Everything here is a pure function of its inputs plus an explicit random
//! source, so callers can run it from several threads as long as each thread
//! owns its generator.

use nalgebra::{DMatrix, DVector, QR, SVD};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// Orthonormality bound enforced whenever a [`StiefelPoint`] is built.
pub const CONSTRUCTION_TOL: f64 = 1e-10;
/// Looser bound for checks on derived quantities (inputs to QR, SVD, ...).
pub const DERIVED_TOL: f64 = 1e-8;
/// Relative singular-value floor below which a direction counts as degenerate.
pub const RANK_TOL: f64 = 1e-12;

/// A `p × d` matrix whose columns are orthonormal, `p ≥ d ≥ 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct StiefelPoint(DMatrix<f64>);

impl StiefelPoint {
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        let (p, d) = m.shape();
        if d == 0 || d > p {
            return Err(Error::InvalidDimensions(format!(
                "Stiefel point needs p >= d >= 1, got {p}x{d}"
            )));
        }
        let dev = orthonormality_error(&m);
        if !(dev <= CONSTRUCTION_TOL) {
            return Err(Error::NotOrthonormal { max_deviation: dev });
        }
        Ok(StiefelPoint(m))
    }

    /// The first `d` columns of the `p × p` identity.
    pub fn identity(p: usize, d: usize) -> Result<Self> {
        Self::new(DMatrix::identity(p, d))
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.0
    }

    /// Ambient dimension `p`.
    pub fn ambient_dim(&self) -> usize {
        self.0.nrows()
    }

    /// Frame dimension `d`.
    pub fn frame_dim(&self) -> usize {
        self.0.ncols()
    }

    /// `Vᵀ y` for an ambient vector `y`.
    pub fn project(&self, y: &DVector<f64>) -> DVector<f64> {
        self.0.tr_mul(y)
    }

    /// `V x` for a frame-coordinate vector `x`.
    pub fn embed(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.0 * x
    }
}

impl AsRef<DMatrix<f64>> for StiefelPoint {
    fn as_ref(&self) -> &DMatrix<f64> {
        &self.0
    }
}

/// Largest absolute entry of `mᵀm − I`.
pub fn orthonormality_error(m: &DMatrix<f64>) -> f64 {
    let gram = m.tr_mul(m);
    let mut worst = 0.0f64;
    for c in 0..gram.ncols() {
        for r in 0..gram.nrows() {
            let target = if r == c { 1.0 } else { 0.0 };
            let dev = (gram[(r, c)] - target).abs();
            // NaN must never pass the check.
            if dev.is_nan() {
                return f64::INFINITY;
            }
            worst = worst.max(dev);
        }
    }
    worst
}

pub fn is_orthonormal(m: &DMatrix<f64>, tol: f64) -> bool {
    orthonormality_error(m) <= tol
}

/// Uniform draw from the unit sphere `S^{dim-1}` by normalizing a Gaussian.
pub fn sample_unit_sphere<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> DVector<f64> {
    assert!(dim >= 1, "sphere dimension must be positive");
    loop {
        let g = DVector::<f64>::from_fn(dim, |_, _| rng.sample(StandardNormal));
        let norm = g.norm();
        if norm > 1e-300 {
            return g / norm;
        }
    }
}

/// Uniform draw from the Stiefel manifold, built column by column: each new
/// column is a uniform unit vector in the orthogonal complement of the
/// columns already chosen.
pub fn sample_uniform_stiefel<R: Rng + ?Sized>(
    p: usize,
    d: usize,
    rng: &mut R,
) -> Result<StiefelPoint> {
    if d == 0 || d > p {
        return Err(Error::InvalidDimensions(format!(
            "uniform Stiefel sample needs 1 <= d <= p, got p={p}, d={d}"
        )));
    }
    // A normalized Gaussian projected onto the complement is uniform on the
    // complement's unit sphere, so no explicit basis N_k is needed.
    let mut frame = DMatrix::<f64>::zeros(p, d);
    let mut k = 0;
    while k < d {
        let mut v = DVector::<f64>::from_fn(p, |_, _| rng.sample(StandardNormal));
        for _ in 0..2 {
            for j in 0..k {
                let coef = frame.column(j).dot(&v);
                v.axpy(-coef, &frame.column(j), 1.0);
            }
        }
        let norm = v.norm();
        if norm > 1e-8 {
            frame.set_column(k, &(v / norm));
            k += 1;
        }
    }
    StiefelPoint::new(frame)
}

/// Orthonormal basis of the orthogonal complement of the columns of
/// `v_partial` (`p × k`, `k < p`), from the trailing columns of a full QR.
pub fn null_space_basis(v_partial: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let (p, k) = v_partial.shape();
    if k >= p {
        return Err(Error::InvalidDimensions(format!(
            "complement of {k} columns in R^{p} is empty"
        )));
    }
    if k == 0 {
        return Ok(DMatrix::identity(p, p));
    }
    let dev = orthonormality_error(v_partial);
    if !(dev <= DERIVED_TOL) {
        return Err(Error::NotOrthonormal { max_deviation: dev });
    }
    let qr = QR::new(v_partial.clone());
    let mut q_t = DMatrix::<f64>::identity(p, p);
    qr.q_tr_mul(&mut q_t);
    Ok(q_t.rows(k, p - k).transpose())
}

/// Thin SVD `m = U diag(s) Vᵀ` of a tall matrix, singular values descending.
#[derive(Debug, Clone)]
pub struct SvdFactors {
    pub u: DMatrix<f64>,
    pub singular_values: DVector<f64>,
    pub v: DMatrix<f64>,
}

impl SvdFactors {
    pub fn reconstruct(&self) -> DMatrix<f64> {
        &self.u * DMatrix::from_diagonal(&self.singular_values) * self.v.transpose()
    }

    /// Number of singular values above `RANK_TOL` times the largest.
    pub fn numerical_rank(&self) -> usize {
        let top = self.singular_values.iter().cloned().fold(0.0, f64::max);
        if top == 0.0 {
            return 0;
        }
        self.singular_values
            .iter()
            .filter(|&&s| s > RANK_TOL * top)
            .count()
    }
}

pub fn svd_factors(m: &DMatrix<f64>) -> Result<SvdFactors> {
    let (p, d) = m.shape();
    if d == 0 || d > p {
        return Err(Error::InvalidDimensions(format!(
            "thin SVD expects a tall p x d matrix with p >= d >= 1, got {p}x{d}"
        )));
    }
    if m.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidParameter {
            name: "matrix entry",
            value: f64::NAN,
            reason: "must be finite",
        });
    }
    let svd = SVD::try_new(m.clone(), true, true, f64::EPSILON, 0)
        .ok_or_else(|| Error::InvalidDimensions("SVD failed to converge".to_string()))?;
    let u = svd.u.expect("requested U");
    let v = svd.v_t.expect("requested Vᵀ").transpose();
    Ok(SvdFactors {
        u,
        singular_values: svd.singular_values,
        v,
    })
}

/// Result of [`polar_project`]: the closest orthonormal frame, plus the
/// numerical rank when the input was rank-deficient (the frame is then one
/// of several maximizers).
#[derive(Debug, Clone)]
pub struct Polar {
    pub point: StiefelPoint,
    pub deficient_rank: Option<usize>,
}

impl Polar {
    pub fn warning(&self) -> Option<Error> {
        self.deficient_rank.map(|rank| Error::RankDeficient {
            rank,
            required: self.point.frame_dim(),
        })
    }
}

/// `U Vᵀ` from the SVD of `m`: the maximizer of `tr(mᵀX)` over the
/// Stiefel manifold.
///
/// Rank-deficient input is not an error: the missing singular directions are
/// completed deterministically and the deficiency is reported in the result.
pub fn polar_project(m: &DMatrix<f64>) -> Result<Polar> {
    let f = svd_factors(m)?;
    let d = m.ncols();
    let rank = f.numerical_rank();
    let mut u = f.u;
    if rank < d || !is_orthonormal(&u, DERIVED_TOL) {
        u = complete_orthonormal(&u, rank);
    }
    let mut x = u * f.v.transpose();
    if !is_orthonormal(&x, CONSTRUCTION_TOL) {
        // One Newton-Schulz step pulls an almost-orthonormal frame back
        // to working precision.
        let gram = x.tr_mul(&x);
        x = &x * (DMatrix::identity(d, d) * 1.5 - gram * 0.5);
    }
    Ok(Polar {
        point: StiefelPoint::new(x)?,
        deficient_rank: (rank < d).then_some(rank),
    })
}

/// Keeps the first `keep` columns of `u` (re-orthogonalized) and fills the
/// rest with the first standard basis vectors that survive Gram-Schmidt.
fn complete_orthonormal(u: &DMatrix<f64>, keep: usize) -> DMatrix<f64> {
    let (p, d) = u.shape();
    let mut out = DMatrix::<f64>::zeros(p, d);
    let mut filled = 0;
    let push = |out: &mut DMatrix<f64>, filled: &mut usize, mut v: DVector<f64>| -> bool {
        for _ in 0..2 {
            for j in 0..*filled {
                let col = out.column(j).into_owned();
                v -= &col * col.dot(&v);
            }
        }
        let n = v.norm();
        if n > 1e-8 {
            out.set_column(*filled, &(v / n));
            *filled += 1;
            true
        } else {
            false
        }
    };
    for j in 0..keep.min(d) {
        push(&mut out, &mut filled, u.column(j).into_owned());
    }
    let mut e = 0;
    while filled < d && e < p {
        let mut v = DVector::<f64>::zeros(p);
        v[e] = 1.0;
        push(&mut out, &mut filled, v);
        e += 1;
    }
    out
}
