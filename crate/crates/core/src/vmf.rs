//! Matrix von Mises-Fisher distribution on the Stiefel manifold.
//!
//! The density with respect to the uniform measure is proportional to
//! `exp(tr(Cᵀ X))`. Two exact samplers are provided: rejection from the
//! uniform distribution, and column-wise Gibbs where each column is redrawn
//! from its vector vMF conditional on the sphere orthogonal to the others.
//! [`vmf_sample`] combines them.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Beta, Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stiefel::{
    null_space_basis, orthonormality_error, polar_project, sample_uniform_stiefel, svd_factors,
    Polar, StiefelPoint, CONSTRUCTION_TOL,
};

/// The parameter matrix `C` of `vMF(C)`.
#[derive(Debug, Clone, PartialEq)]
pub struct VmfParam(DMatrix<f64>);

impl VmfParam {
    pub fn new(c: DMatrix<f64>) -> Result<Self> {
        let (p, d) = c.shape();
        if d == 0 || d > p {
            return Err(Error::InvalidDimensions(format!(
                "vMF parameter must be p x d with p >= d >= 1, got {p}x{d}"
            )));
        }
        if let Some(bad) = c.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "C",
                value: *bad,
                reason: "entries must be finite",
            });
        }
        Ok(VmfParam(c))
    }

    /// `vMF(0)`, the uniform distribution.
    pub fn zeros(p: usize, d: usize) -> Result<Self> {
        Self::new(DMatrix::zeros(p, d))
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.0
    }

    pub fn shape(&self) -> (usize, usize) {
        self.0.shape()
    }

    /// `Σ_k d_k`, the sum of singular values: the maximum of `tr(CᵀX)`.
    pub fn log_envelope(&self) -> Result<f64> {
        Ok(svd_factors(&self.0)?.singular_values.sum())
    }
}

fn check_shapes(x: &StiefelPoint, c: &VmfParam) -> Result<()> {
    let xs = x.matrix().shape();
    if xs != c.shape() {
        return Err(Error::DimensionMismatch {
            expected: format!("{:?}", c.shape()),
            found: format!("{xs:?}"),
        });
    }
    Ok(())
}

/// `tr(CᵀX)`; the normalizing constant is left to the caller.
pub fn vmf_log_density_unnorm(x: &StiefelPoint, c: &VmfParam) -> Result<f64> {
    check_shapes(x, c)?;
    Ok(c.matrix().dot(x.matrix()))
}

/// The mode `UVᵀ` of `vMF(C)`.
pub fn vmf_mode(c: &VmfParam) -> Result<Polar> {
    polar_project(c.matrix())
}

/// Upper bound on the log of the uniform-envelope acceptance rate,
/// `‖C‖²_F / (2(p − d + 1)) − Σ_k d_k`.
///
/// The rate is `₀F₁(p/2; D²/4) e^{−Σd_k}`; bounding each generalized
/// Pochhammer factor below by `((p − d + 1)/2)^k` sums the zonal series to
/// `exp(tr(D²)/(2(p − d + 1)))`.
pub fn log_acceptance_bound(c: &VmfParam) -> Result<f64> {
    let (p, d) = c.shape();
    let spread = c.matrix().norm_squared() / (2.0 * (p - d + 1) as f64);
    Ok(spread - c.log_envelope()?)
}

/// Acceptance probability of `x` under the uniform-envelope rejection
/// scheme, `exp(tr(CᵀX) − Σ_k d_k)`.
pub fn acceptance_probability(x: &StiefelPoint, c: &VmfParam) -> Result<f64> {
    let log_ratio = vmf_log_density_unnorm(x, c)? - c.log_envelope()?;
    Ok(log_ratio.min(0.0).exp())
}

/// Rejection sampling with uniform proposals. Returns the accepted draw
/// and the number of proposals used.
pub fn vmf_sample_rejection<R: Rng + ?Sized>(
    c: &VmfParam,
    rng: &mut R,
    max_attempts: usize,
) -> Result<(StiefelPoint, usize)> {
    if max_attempts == 0 {
        return Err(Error::InvalidParameter {
            name: "max_attempts",
            value: 0.0,
            reason: "must be at least 1",
        });
    }
    let (p, d) = c.shape();
    let envelope = c.log_envelope()?;
    for attempt in 1..=max_attempts {
        let x = sample_uniform_stiefel(p, d, rng)?;
        let log_ratio = c.matrix().dot(x.matrix()) - envelope;
        let u: f64 = rng.random();
        if u < log_ratio.min(0.0).exp() {
            return Ok((x, attempt));
        }
    }
    Err(Error::RejectionExhausted {
        attempts: max_attempts,
    })
}

/// Cosine `t = μᵀx` of a vector vMF draw on `S^{m-1}` with concentration
/// `kappa`, by Wood's beta-envelope rejection scheme. Needs `m >= 2`.
fn sample_cosine<R: Rng + ?Sized>(m: usize, kappa: f64, rng: &mut R) -> f64 {
    debug_assert!(m >= 2);
    let m1 = (m - 1) as f64;
    let b = m1 / (2.0 * kappa + (4.0 * kappa * kappa + m1 * m1).sqrt());
    let x0 = (1.0 - b) / (1.0 + b);
    // ln(1 - x0²) = ln(4b) - 2 ln(1 + b), stable as b -> 0.
    let log_c = kappa * x0 + m1 * ((4.0 * b).ln() - 2.0 * b.ln_1p());
    let beta = Beta::new(m1 / 2.0, m1 / 2.0).expect("positive beta shape");
    loop {
        let z: f64 = beta.sample(rng);
        let w = (1.0 - (1.0 + b) * z) / (1.0 - (1.0 - b) * z);
        let u: f64 = rng.random();
        if kappa * w + m1 * (1.0 - x0 * w).ln() - log_c >= u.ln() {
            return w.clamp(-1.0, 1.0);
        }
    }
}

/// Removes the components of `v` along each (orthonormal) column of `basis`.
fn project_out(v: &mut DVector<f64>, basis: &[DVector<f64>]) {
    // Two passes of classical Gram-Schmidt.
    for _ in 0..2 {
        for b in basis {
            let coef = b.dot(v);
            v.axpy(-coef, b, 1.0);
        }
    }
}

/// Uniform unit vector orthogonal to every vector in `basis`.
fn sample_in_complement<R: Rng + ?Sized>(
    p: usize,
    basis: &[DVector<f64>],
    rng: &mut R,
) -> DVector<f64> {
    loop {
        let mut g = DVector::<f64>::from_fn(p, |_, _| rng.sample(StandardNormal));
        project_out(&mut g, basis);
        let n = g.norm();
        if n > 1e-12 {
            return g / n;
        }
    }
}

/// Draw from the vMF distribution on the sphere orthogonal to `exclude`
/// whose density is `∝ exp(κ μᵀx)`. `direction` must be a unit vector
/// orthogonal to `exclude`; `m` is the dimension of the complement.
fn sample_vector_in_complement<R: Rng + ?Sized>(
    direction: &DVector<f64>,
    kappa: f64,
    exclude: &[DVector<f64>],
    m: usize,
    rng: &mut R,
) -> DVector<f64> {
    let t = sample_cosine(m, kappa, rng);
    let mut span: Vec<DVector<f64>> = exclude.to_vec();
    span.push(direction.clone());
    let tangent = sample_in_complement(direction.len(), &span, rng);
    let s = ((1.0 - t) * (1.0 + t)).max(0.0).sqrt();
    let mut x = direction * t + tangent * s;
    let n = x.norm();
    x /= n;
    x
}

/// Exact draw from the vector vMF density `∝ exp(κ μᵀx)` on `S^{p-1}`.
pub fn vmf_sample_vector<R: Rng + ?Sized>(
    direction: &DVector<f64>,
    kappa: f64,
    rng: &mut R,
) -> Result<DVector<f64>> {
    let p = direction.len();
    if p < 2 {
        return Err(Error::InvalidDimensions(format!(
            "vector vMF needs p >= 2, got {p}"
        )));
    }
    let norm = direction.norm();
    if !((norm - 1.0).abs() <= 1e-10) {
        return Err(Error::InvalidParameter {
            name: "direction norm",
            value: norm,
            reason: "must be 1 within 1e-10",
        });
    }
    if !(kappa >= 0.0) || !kappa.is_finite() {
        return Err(Error::InvalidParameter {
            name: "kappa",
            value: kappa,
            reason: "must be finite and nonnegative",
        });
    }
    Ok(sample_vector_in_complement(direction, kappa, &[], p, rng))
}

/// Column-wise Gibbs sampler for `vMF(C)` started at `x_init`.
///
/// Column `k` given the others lives on the unit sphere of their orthogonal
/// complement, where its conditional is a vector vMF with parameter equal
/// to the projection of `c_k` onto that complement. When `d = p` the
/// complement is a line and the conditional is a two-point law on `±n`.
pub fn vmf_sample_column_gibbs<R: Rng + ?Sized>(
    c: &VmfParam,
    x_init: &StiefelPoint,
    sweeps: usize,
    rng: &mut R,
) -> Result<StiefelPoint> {
    check_shapes(x_init, c)?;
    if sweeps == 0 {
        return Err(Error::InvalidParameter {
            name: "sweeps",
            value: 0.0,
            reason: "must be at least 1",
        });
    }
    let (p, d) = c.shape();
    let m = p - d + 1;
    let mut cols: Vec<DVector<f64>> = (0..d)
        .map(|k| x_init.matrix().column(k).into_owned())
        .collect();
    for _ in 0..sweeps {
        for k in 0..d {
            let others: Vec<DVector<f64>> = cols
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != k)
                .map(|(_, v)| v.clone())
                .collect();
            let c_k = c.matrix().column(k).into_owned();
            cols[k] = if m == 1 {
                let basis = DMatrix::from_columns(&others);
                let n = null_space_basis(&basis)?.column(0).into_owned();
                let s = c_k.dot(&n);
                // P(+n) = e^s / (e^s + e^-s)
                let p_plus = 1.0 / (1.0 + (-2.0 * s).exp());
                if rng.random::<f64>() < p_plus {
                    n
                } else {
                    -n
                }
            } else {
                let mut a = c_k;
                project_out(&mut a, &others);
                let kappa = a.norm();
                if kappa > 1e-300 && kappa.is_finite() {
                    let mu = a / kappa;
                    sample_vector_in_complement(&mu, kappa, &others, m, rng)
                } else {
                    sample_in_complement(p, &others, rng)
                }
            };
        }
    }
    let x = DMatrix::from_columns(&cols);
    if orthonormality_error(&x) > CONSTRUCTION_TOL {
        return Ok(polar_project(&x)?.point);
    }
    StiefelPoint::new(x)
}

/// Controls for [`vmf_sample`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplerPolicy {
    /// Uniform proposals tried before falling back to column-Gibbs.
    pub max_attempts: usize,
    /// Column-Gibbs sweeps per draw on the fallback path.
    pub gibbs_sweeps: usize,
    /// Rejection is skipped outright when `Σ_k d_k` exceeds this value, or
    /// when [`log_acceptance_bound`] shows that fewer than one acceptance is
    /// expected within `max_attempts`.
    pub max_log_envelope: f64,
}

impl Default for SamplerPolicy {
    fn default() -> Self {
        SamplerPolicy {
            max_attempts: 10_000,
            gibbs_sweeps: 10,
            max_log_envelope: 50.0,
        }
    }
}

/// Which sampler produced a draw.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SamplerPath {
    Rejection {
        attempts: usize,
    },
    /// `attempts` is zero when rejection was skipped on concentration.
    ColumnGibbs {
        attempts: usize,
    },
}

impl SamplerPath {
    pub fn is_fallback(&self) -> bool {
        matches!(self, SamplerPath::ColumnGibbs { .. })
    }
}

#[derive(Debug, Clone)]
pub struct VmfDraw {
    pub point: StiefelPoint,
    pub path: SamplerPath,
}

/// Rejection first, column-Gibbs started at the mode if rejection runs out.
pub fn vmf_sample<R: Rng + ?Sized>(
    c: &VmfParam,
    rng: &mut R,
    policy: &SamplerPolicy,
) -> Result<VmfDraw> {
    vmf_sample_from(c, None, rng, policy)
}

/// As [`vmf_sample`], but the column-Gibbs fallback starts from `current`
/// when given. Inside an outer Markov chain, passing the chain's current
/// value keeps the fallback a proper invariant kernel for `vMF(C)`.
pub fn vmf_sample_from<R: Rng + ?Sized>(
    c: &VmfParam,
    current: Option<&StiefelPoint>,
    rng: &mut R,
    policy: &SamplerPolicy,
) -> Result<VmfDraw> {
    let envelope = c.log_envelope()?;
    let mut attempts = 0;
    let budget = (policy.max_attempts.max(1) as f64).ln();
    if envelope <= policy.max_log_envelope && log_acceptance_bound(c)? >= -budget {
        match vmf_sample_rejection(c, rng, policy.max_attempts) {
            Ok((point, used)) => {
                return Ok(VmfDraw {
                    point,
                    path: SamplerPath::Rejection { attempts: used },
                })
            }
            Err(Error::RejectionExhausted { attempts: used }) => attempts = used,
            Err(e) => return Err(e),
        }
    }
    let start = match current {
        Some(x) => x.clone(),
        None => vmf_mode(c)?.point,
    };
    let point = vmf_sample_column_gibbs(c, &start, policy.gibbs_sweeps.max(1), rng)?;
    Ok(VmfDraw {
        point,
        path: SamplerPath::ColumnGibbs { attempts },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    /// Composite Simpson rule on [a, b].
    fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
        let n = n + n % 2;
        let h = (b - a) / n as f64;
        let mut s = f(a) + f(b);
        for i in 1..n {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            s += w * f(a + i as f64 * h);
        }
        s * h / 3.0
    }

    /// Mean and variance of cos θ under the circular density ∝ e^{κ cos θ}.
    fn circle_cos_moments(kappa: f64) -> (f64, f64) {
        let pi = std::f64::consts::PI;
        let z = simpson(|t| (kappa * t.cos()).exp(), -pi, pi, 20_000);
        let m1 = simpson(|t| t.cos() * (kappa * t.cos()).exp(), -pi, pi, 20_000) / z;
        let m2 = simpson(
            |t| t.cos().powi(2) * (kappa * t.cos()).exp(),
            -pi,
            pi,
            20_000,
        ) / z;
        (m1, m2 - m1 * m1)
    }

    /// Mean and variance of t = μᵀx under the marginal ∝ e^{κt}(1−t²)^{(p−3)/2}.
    fn cosine_marginal_moments(kappa: f64, p: usize) -> (f64, f64) {
        let e = (p as f64 - 3.0) / 2.0;
        let dens = |t: f64| (kappa * t).exp() * (1.0 - t * t).max(0.0).powf(e);
        let z = simpson(dens, -1.0, 1.0, 20_000);
        let m1 = simpson(|t| t * dens(t), -1.0, 1.0, 20_000) / z;
        let m2 = simpson(|t| t * t * dens(t), -1.0, 1.0, 20_000) / z;
        (m1, m2 - m1 * m1)
    }

    #[test]
    fn quadrature_oracle_matches_bessel_ratios() {
        // I1(κ)/I0(κ), tabulated independently.
        for (kappa, ratio) in [
            (0.5, 0.242_499_612_580_8),
            (2.0, 0.697_774_657_964_0),
            (8.0, 0.935_235_493_529_4),
        ] {
            assert!((circle_cos_moments(kappa).0 - ratio).abs() < 1e-10);
        }
        // coth κ − 1/κ on S².
        assert!((cosine_marginal_moments(10.0, 3).0 - 0.900_000_004_122_3).abs() < 1e-9);
    }

    fn circle_param(kappa: f64) -> VmfParam {
        VmfParam::new(DMatrix::from_column_slice(2, 1, &[kappa, 0.0])).unwrap()
    }

    #[test]
    fn log_density_examples() {
        let mut r = rng(1);
        let x = sample_uniform_stiefel(4, 2, &mut r).unwrap();
        assert_eq!(
            vmf_log_density_unnorm(&x, &VmfParam::zeros(4, 2).unwrap()).unwrap(),
            0.0
        );

        let c = VmfParam::new(x.matrix().clone()).unwrap();
        assert!((vmf_log_density_unnorm(&x, &c).unwrap() - 2.0).abs() < 1e-12);

        // Singular values (3, 1) with random singular vectors.
        let u = sample_uniform_stiefel(4, 2, &mut r).unwrap().into_matrix();
        let v = sample_uniform_stiefel(2, 2, &mut r).unwrap().into_matrix();
        let cm = &u * DMatrix::from_diagonal(&DVector::from_vec(vec![3.0, 1.0])) * v.transpose();
        let c = VmfParam::new(cm).unwrap();
        let mode = vmf_mode(&c).unwrap().point;
        assert!((vmf_log_density_unnorm(&mode, &c).unwrap() - 4.0).abs() < 1e-10);
    }

    #[test]
    fn log_density_rejects_mismatch() {
        let x = StiefelPoint::identity(3, 1).unwrap();
        let c = VmfParam::zeros(3, 2).unwrap();
        assert!(matches!(
            vmf_log_density_unnorm(&x, &c),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn param_rejects_nonfinite() {
        let m = DMatrix::from_column_slice(2, 1, &[f64::INFINITY, 0.0]);
        assert!(VmfParam::new(m).is_err());
    }

    #[test]
    fn mode_examples() {
        let c = VmfParam::new(DMatrix::from_column_slice(3, 1, &[2.5, 0.0, 0.0])).unwrap();
        let m = vmf_mode(&c).unwrap().point;
        assert!((m.matrix()[(0, 0)] - 1.0).abs() < 1e-12);

        let c = VmfParam::new(DMatrix::identity(2, 2) * 5.0).unwrap();
        assert!((vmf_mode(&c).unwrap().point.matrix() - DMatrix::identity(2, 2)).amax() < 1e-12);

        let mut r = rng(2);
        let c = VmfParam::new(DMatrix::from_fn(4, 2, |_, _| r.sample(StandardNormal))).unwrap();
        let mode = vmf_mode(&c).unwrap().point;
        let top = vmf_log_density_unnorm(&mode, &c).unwrap();
        for _ in 0..10_000 {
            let x = sample_uniform_stiefel(4, 2, &mut r).unwrap();
            assert!(vmf_log_density_unnorm(&x, &c).unwrap() <= top + 1e-12);
        }
    }

    #[test]
    fn envelope_bounds_density() {
        let mut r = rng(3);
        for _ in 0..5 {
            let c = VmfParam::new(DMatrix::from_fn(3, 2, |_, _| {
                3.0 * r.sample::<f64, _>(StandardNormal)
            }))
            .unwrap();
            let env = c.log_envelope().unwrap();
            for _ in 0..20_000 {
                let x = sample_uniform_stiefel(3, 2, &mut r).unwrap();
                let a = acceptance_probability(&x, &c).unwrap();
                assert!(a > 0.0 && a <= 1.0);
                assert!(vmf_log_density_unnorm(&x, &c).unwrap() <= env + 1e-12);
            }
        }
    }

    #[test]
    fn acceptance_bound_dominates_rate() {
        // Circle: the rate is I0(κ)e^{−κ} exactly.
        for kappa in [0.5, 2.0, 8.0] {
            let pi = std::f64::consts::PI;
            let rate = simpson(|t| (kappa * (t.cos() - 1.0)).exp(), -pi, pi, 20_000) / (2.0 * pi);
            let bound = log_acceptance_bound(&circle_param(kappa)).unwrap();
            assert!(rate.ln() <= bound + 1e-12, "κ={kappa}");
        }
        let mut r = rng(40);
        for (p, d, scale) in [(3, 2, 1.0), (5, 2, 1.5), (6, 3, 0.7)] {
            let c = VmfParam::new(DMatrix::from_fn(p, d, |_, _| {
                scale * r.sample::<f64, _>(StandardNormal)
            }))
            .unwrap();
            let draws = 50_000;
            let mut sum = 0.0;
            let mut sq = 0.0;
            for _ in 0..draws {
                let x = sample_uniform_stiefel(p, d, &mut r).unwrap();
                let a = acceptance_probability(&x, &c).unwrap();
                sum += a;
                sq += a * a;
            }
            let mean = sum / draws as f64;
            let se = ((sq / draws as f64 - mean * mean) / draws as f64).sqrt();
            let bound = log_acceptance_bound(&c).unwrap().exp();
            assert!(mean <= bound + 3.0 * se, "p={p} d={d}: {mean} > {bound}");
        }
        // High dimension, moderate concentration: rejection is hopeless.
        let c = VmfParam::new(DMatrix::from_fn(
            196,
            2,
            |i, k| if i == k { 10.0 } else { 0.0 },
        ))
        .unwrap();
        assert!(log_acceptance_bound(&c).unwrap() < -(10_000f64).ln());
    }

    #[test]
    fn rejection_with_zero_param_accepts_first() {
        let mut r = rng(4);
        for _ in 0..100 {
            let (_, attempts) =
                vmf_sample_rejection(&VmfParam::zeros(4, 2).unwrap(), &mut r, 1).unwrap();
            assert_eq!(attempts, 1);
        }
    }

    #[test]
    fn acceptance_at_mode_is_one() {
        let mut r = rng(5);
        let c = VmfParam::new(DMatrix::from_fn(5, 3, |_, _| r.sample(StandardNormal))).unwrap();
        let mode = vmf_mode(&c).unwrap().point;
        assert!((acceptance_probability(&mode, &c).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rejection_zero_attempts_is_an_error() {
        let mut r = rng(6);
        assert!(vmf_sample_rejection(&VmfParam::zeros(2, 1).unwrap(), &mut r, 0).is_err());
    }

    #[test]
    fn rejection_exhaustion_is_reported() {
        let mut r = rng(7);
        let c = VmfParam::new(DMatrix::identity(6, 3) * 200.0).unwrap();
        assert!(matches!(
            vmf_sample_rejection(&c, &mut r, 50),
            Err(Error::RejectionExhausted { attempts: 50 })
        ));
    }

    #[test]
    fn rejection_matches_circle_quadrature() {
        let mut r = rng(8);
        let c = circle_param(2.0);
        let n = 10_000;
        let mean = (0..n)
            .map(|_| {
                vmf_sample_rejection(&c, &mut r, 100_000)
                    .unwrap()
                    .0
                    .matrix()[(0, 0)]
            })
            .sum::<f64>()
            / n as f64;
        let (m, v) = circle_cos_moments(2.0);
        assert!(
            (mean - m).abs() < 3.0 * (v / n as f64).sqrt(),
            "{mean} vs {m}"
        );
    }

    #[test]
    fn vector_vmf_uniform_when_kappa_zero() {
        let mut r = rng(9);
        let mu = DVector::from_vec(vec![0.0, 0.0, 1.0]);
        let n = 20_000;
        let mut sum = DVector::<f64>::zeros(3);
        for _ in 0..n {
            let x = vmf_sample_vector(&mu, 0.0, &mut r).unwrap();
            assert!((x.norm() - 1.0).abs() < 1e-10);
            sum += x;
        }
        let se = (1.0 / 3.0 / n as f64).sqrt();
        assert!(sum.iter().all(|s| (s / n as f64).abs() < 3.0 * se));
    }

    #[test]
    fn vector_vmf_matches_quadrature() {
        let mut r = rng(10);
        for (p, kappa) in [(3, 10.0), (2, 2.0), (5, 4.0), (40, 25.0)] {
            let mut mu = DVector::<f64>::zeros(p);
            mu[0] = 1.0;
            let n = 10_000;
            let mut sum = 0.0;
            for _ in 0..n {
                let x = vmf_sample_vector(&mu, kappa, &mut r).unwrap();
                assert!((x.norm() - 1.0).abs() < 1e-10);
                sum += x[0];
            }
            // The cosine marginal is singular at ±1 on the circle; integrate over θ there.
            let (m, v) = if p == 2 {
                circle_cos_moments(kappa)
            } else {
                cosine_marginal_moments(kappa, p)
            };
            let mean = sum / n as f64;
            assert!(
                (mean - m).abs() < 3.0 * (v / n as f64).sqrt(),
                "p={p}: {mean} vs {m}"
            );
        }
    }

    #[test]
    fn vector_vmf_rejects_bad_input() {
        let mut r = rng(11);
        let v = DVector::from_vec(vec![2.0, 0.0]);
        assert!(vmf_sample_vector(&v, 1.0, &mut r).is_err());
        let v = DVector::from_vec(vec![1.0, 0.0]);
        assert!(vmf_sample_vector(&v, -1.0, &mut r).is_err());
        assert!(vmf_sample_vector(&DVector::from_vec(vec![1.0]), 1.0, &mut r).is_err());
    }

    #[test]
    fn huge_concentration_stays_on_sphere() {
        let mut r = rng(12);
        let mut mu = DVector::<f64>::zeros(4);
        mu[1] = 1.0;
        for _ in 0..1000 {
            let x = vmf_sample_vector(&mu, 1e9, &mut r).unwrap();
            assert!((x.norm() - 1.0).abs() < 1e-10);
            assert!(x[1] > 0.999);
        }
    }

    #[test]
    fn column_gibbs_matches_rejection_on_circle() {
        let c = circle_param(2.0);
        let (m, v) = circle_cos_moments(2.0);
        let n = 10_000;
        let mut r = rng(13);
        let mut x = StiefelPoint::identity(2, 1).unwrap();
        let mut gibbs = 0.0;
        for _ in 0..n {
            x = vmf_sample_column_gibbs(&c, &x, 1, &mut r).unwrap();
            gibbs += x.matrix()[(0, 0)];
        }
        gibbs /= n as f64;
        let mut rej = 0.0;
        for _ in 0..n {
            rej += vmf_sample_rejection(&c, &mut r, 100_000)
                .unwrap()
                .0
                .matrix()[(0, 0)];
        }
        rej /= n as f64;
        let se = (v / n as f64).sqrt();
        // d = 1: each sweep is an exact independent draw.
        assert!((gibbs - m).abs() < 3.0 * se);
        assert!((gibbs - rej).abs() < 3.0 * se * std::f64::consts::SQRT_2);
    }

    #[test]
    fn column_gibbs_zero_param_stays_uniform() {
        let c = VmfParam::zeros(4, 2).unwrap();
        let mut r = rng(14);
        let mut x = StiefelPoint::identity(4, 2).unwrap();
        let n = 40_000;
        let mut second = DMatrix::<f64>::zeros(4, 4);
        for _ in 0..n {
            x = vmf_sample_column_gibbs(&c, &x, 1, &mut r).unwrap();
            let c0 = x.matrix().column(0);
            second += c0 * c0.transpose();
        }
        second /= n as f64;
        // Autocorrelated chain: allow a generous multiple of the iid error.
        let se = 0.25 / (n as f64).sqrt();
        for a in 0..4 {
            for b in 0..4 {
                let target = if a == b { 0.25 } else { 0.0 };
                assert!((second[(a, b)] - target).abs() < 8.0 * se);
            }
        }
    }

    #[test]
    fn column_gibbs_square_frame_flips_signs() {
        // d = p: only sign flips are reachable, with P(+n) = 1 / (1 + e^{-2s}).
        let c = VmfParam::new(DMatrix::identity(2, 2) * 0.5).unwrap();
        let x0 = StiefelPoint::identity(2, 2).unwrap();
        let mut r = rng(15);
        let n = 20_000;
        let mut plus = 0usize;
        for _ in 0..n {
            let x = vmf_sample_column_gibbs(&c, &x0, 1, &mut r).unwrap();
            assert!((x.matrix().determinant().abs() - 1.0).abs() < 1e-10);
            assert!(x.matrix()[(1, 0)].abs() < 1e-12);
            if x.matrix()[(0, 0)] > 0.0 {
                plus += 1;
            }
        }
        let p = 1.0 / (1.0 + (-1.0f64).exp());
        let se = (p * (1.0 - p) / n as f64).sqrt();
        assert!((plus as f64 / n as f64 - p).abs() < 3.0 * se);
    }

    #[test]
    fn column_gibbs_log_density_matches_rejection() {
        let mut r = rng(16);
        let cm = DMatrix::from_row_slice(3, 2, &[2.0, 0.0, 0.0, 1.0, 0.5, 0.0]);
        let c = VmfParam::new(cm).unwrap();
        let n = 20_000;
        let mut x = vmf_mode(&c).unwrap().point;
        let mut gibbs = Vec::with_capacity(n);
        for _ in 0..n {
            x = vmf_sample_column_gibbs(&c, &x, 1, &mut r).unwrap();
            gibbs.push(vmf_log_density_unnorm(&x, &c).unwrap());
        }
        let rej: Vec<f64> = (0..n)
            .map(|_| {
                let (x, _) = vmf_sample_rejection(&c, &mut r, 1_000_000).unwrap();
                vmf_log_density_unnorm(&x, &c).unwrap()
            })
            .collect();
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        let var = |v: &[f64]| {
            let m = mean(v);
            v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64
        };
        let se = ((var(&gibbs) + var(&rej)) / n as f64).sqrt();
        // The chain is autocorrelated; widen by a batch-means style factor.
        assert!(
            (mean(&gibbs) - mean(&rej)).abs() < 5.0 * se,
            "{} vs {}",
            mean(&gibbs),
            mean(&rej)
        );
    }

    #[test]
    fn column_gibbs_rejects_bad_input() {
        let mut r = rng(17);
        let c = VmfParam::zeros(3, 2).unwrap();
        let x = StiefelPoint::identity(3, 1).unwrap();
        assert!(vmf_sample_column_gibbs(&c, &x, 1, &mut r).is_err());
        let x = StiefelPoint::identity(3, 2).unwrap();
        assert!(vmf_sample_column_gibbs(&c, &x, 0, &mut r).is_err());
    }

    fn chi_square_circle(mut draw: impl FnMut() -> f64, kappa: f64) -> f64 {
        let pi = std::f64::consts::PI;
        let bins = 36;
        let n = 10_000;
        let width = 2.0 * pi / bins as f64;
        let z = simpson(|t| (kappa * t.cos()).exp(), -pi, pi, 36_000);
        let mut counts = vec![0usize; bins];
        for _ in 0..n {
            let theta = draw();
            let b = (((theta + pi) / width) as usize).min(bins - 1);
            counts[b] += 1;
        }
        (0..bins)
            .map(|b| {
                let lo = -pi + b as f64 * width;
                let prob = simpson(|t| (kappa * t.cos()).exp(), lo, lo + width, 200) / z;
                let e = prob * n as f64;
                (counts[b] as f64 - e).powi(2) / e
            })
            .sum()
    }

    #[test]
    fn circle_histograms_pass_chi_square() {
        // 0.999 quantile of chi-square with 35 degrees of freedom.
        let critical = 66.618_828_843_7;
        let kappa = 2.0;
        let c = circle_param(kappa);
        let mut r = rng(18);
        let stat = chi_square_circle(
            || {
                let x = vmf_sample_rejection(&c, &mut r, 100_000).unwrap().0;
                x.matrix()[(1, 0)].atan2(x.matrix()[(0, 0)])
            },
            kappa,
        );
        assert!(stat < critical, "rejection chi2 = {stat}");
        let mut x = StiefelPoint::identity(2, 1).unwrap();
        let stat = chi_square_circle(
            || {
                x = vmf_sample_column_gibbs(&c, &x, 1, &mut r).unwrap();
                x.matrix()[(1, 0)].atan2(x.matrix()[(0, 0)])
            },
            kappa,
        );
        assert!(stat < critical, "gibbs chi2 = {stat}");
    }

    #[test]
    fn sampling_is_rotation_equivariant() {
        // vMF(QC) should look like Q · vMF(C).
        let mut r = rng(19);
        let cm = DMatrix::from_row_slice(3, 1, &[1.5, 0.5, 0.0]);
        let q = sample_uniform_stiefel(3, 3, &mut r).unwrap().into_matrix();
        let c = VmfParam::new(cm.clone()).unwrap();
        let qc = VmfParam::new(&q * &cm).unwrap();
        let n = 20_000;
        let mut a = DVector::<f64>::zeros(3);
        let mut b = DVector::<f64>::zeros(3);
        for _ in 0..n {
            a += &q
                * vmf_sample_rejection(&c, &mut r, 100_000)
                    .unwrap()
                    .0
                    .matrix()
                    .column(0);
            b += vmf_sample_rejection(&qc, &mut r, 100_000)
                .unwrap()
                .0
                .matrix()
                .column(0);
        }
        a /= n as f64;
        b /= n as f64;
        let se = (2.0 / n as f64).sqrt();
        assert!((a - b).amax() < 4.0 * se);
    }

    #[test]
    fn dispatch_paths() {
        let mut r = rng(20);
        let policy = SamplerPolicy::default();
        let draw = vmf_sample(&VmfParam::zeros(3, 2).unwrap(), &mut r, &policy).unwrap();
        assert_eq!(draw.path, SamplerPath::Rejection { attempts: 1 });

        let c = VmfParam::new(DMatrix::identity(3, 2) * 100.0).unwrap();
        let draw = vmf_sample(&c, &mut r, &policy).unwrap();
        assert!(draw.path.is_fallback());
        assert!(orthonormality_error(draw.point.matrix()) <= 1e-10);

        // Below the envelope cutoff rejection runs out and falls back.
        let tight = SamplerPolicy {
            max_attempts: 5,
            max_log_envelope: f64::INFINITY,
            ..policy
        };
        let draw = vmf_sample(&c, &mut r, &tight).unwrap();
        assert_eq!(draw.path, SamplerPath::ColumnGibbs { attempts: 5 });
    }

    #[test]
    fn dispatch_output_is_orthonormal() {
        let mut r = rng(21);
        let policy = SamplerPolicy::default();
        for scale in [0.0, 0.3, 3.0, 30.0, 3000.0] {
            let c = VmfParam::new(DMatrix::from_fn(5, 2, |_, _| {
                scale * r.sample::<f64, _>(StandardNormal)
            }))
            .unwrap();
            let draw = vmf_sample(&c, &mut r, &policy).unwrap();
            assert!(orthonormality_error(draw.point.matrix()) <= 1e-10);
        }
    }
}
