//! The local-frame PCA model and its Gibbs sampler.
//!
//! Model, for observations `y_i ∈ R^p` and latents `x_i ∈ R^d`:
//!
//! ```text
//! y_i = V_i x_i + ε_i,            ε_i ~ N(0, σ² I_p)
//! {V_i} | {x_i} ~ MRF(λ_ij),      λ_ij = c exp(−‖x_i − x_j‖² / 2w²)
//! x_i ~ N(0, a² I_d)              (or flat when a² = ∞)
//! 1/σ² ~ Gamma(shape η/2, rate ητ²/2)
//! ```
//!
//! One sweep redraws every `V_i` from `vMF(y_i x_iᵀ/σ² + Σ_{j≠i} λ_ij V_j)`,
//! then every `x_i` from its Gaussian conditional, recomputes `λ` from the
//! new latents (with `c` and `w` held fixed), and finally redraws `σ²`.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mrf::{
    accumulate_conditional, compute_weights, default_bandwidth, default_strength,
    mrf_log_density_unnorm, InteractionWeights,
};
use crate::pca::{avg_variance, pca_fit, Dataset};
use crate::stiefel::{polar_project, StiefelPoint};
use crate::vmf::{vmf_sample_from, SamplerPath, SamplerPolicy, VmfDraw, VmfParam};

/// `τ²` is floored at this fraction of the average covariate variance so
/// that data lying exactly in a `d`-plane still yields a proper prior.
pub const TAU2_FLOOR_REL: f64 = 1e-10;

/// Prior on each latent vector.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LatentPrior {
    /// `x_i ~ N(0, a² I)`.
    Gaussian { a2: f64 },
    /// The improper flat prior, i.e. `a² = ∞`.
    Flat,
}

impl LatentPrior {
    /// `a² / (a² + σ²)`, the shrinkage applied to `V_iᵀ y_i`.
    pub fn shrinkage(&self, sigma2: f64) -> f64 {
        match *self {
            LatentPrior::Gaussian { a2 } => a2 / (a2 + sigma2),
            LatentPrior::Flat => 1.0,
        }
    }

    /// Per-coordinate conditional variance `a²σ² / (a² + σ²)`.
    pub fn conditional_variance(&self, sigma2: f64) -> f64 {
        match *self {
            LatentPrior::Gaussian { a2 } => a2 * sigma2 / (a2 + sigma2),
            LatentPrior::Flat => sigma2,
        }
    }

    pub fn a2(&self) -> f64 {
        match *self {
            LatentPrior::Gaussian { a2 } => a2,
            LatentPrior::Flat => f64::INFINITY,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperParams {
    pub latent_prior: LatentPrior,
    /// Prior sample size of the noise precision prior.
    pub eta: f64,
    /// Prior guess of the noise variance.
    pub tau2: f64,
    pub c_strength: f64,
    pub bandwidth: f64,
    pub d: usize,
    pub sampler_policy: SamplerPolicy,
    pub n_sweeps: usize,
    pub burn_in: usize,
    pub thin: usize,
}

impl HyperParams {
    /// Defaults derived from a PCA pilot fit of dimension `d`: `a²` is the
    /// average covariate variance, `η = 2`, `τ²` the PCA residual variance
    /// per entry, `c = 100/n`, and `w` the mean pairwise distance between
    /// the PCA latents.
    pub fn from_data(data: &Dataset, d: usize) -> Result<Self> {
        let fit = pca_fit(data, d)?;
        let a2 = avg_variance(data)?;
        if !(a2 > 0.0) {
            return Err(Error::InvalidParameter {
                name: "a2",
                value: a2,
                reason: "data have zero variance",
            });
        }
        let resid = data.y() - &fit.latents * fit.loadings.matrix().transpose();
        let tau2 = resid.norm_squared() / (data.n() * data.p()) as f64;
        Ok(HyperParams {
            latent_prior: LatentPrior::Gaussian { a2 },
            eta: 2.0,
            tau2: tau2.max(TAU2_FLOOR_REL * a2),
            c_strength: default_strength(data.n())?,
            bandwidth: default_bandwidth(&fit.latents)?,
            d,
            sampler_policy: SamplerPolicy::default(),
            n_sweeps: 2000,
            burn_in: 1000,
            thin: 5,
        })
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |name: &'static str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::InvalidParameter {
                    name,
                    value: v,
                    reason: "must be positive and finite",
                })
            }
        };
        if let LatentPrior::Gaussian { a2 } = self.latent_prior {
            positive("a2", a2)?;
        }
        positive("eta", self.eta)?;
        positive("tau2", self.tau2)?;
        positive("c", self.c_strength)?;
        positive("w", self.bandwidth)?;
        if self.d == 0 {
            return Err(Error::InvalidDimensions("d must be at least 1".into()));
        }
        if self.thin == 0 {
            return Err(Error::InvalidParameter {
                name: "thin",
                value: 0.0,
                reason: "must be at least 1",
            });
        }
        if self.burn_in >= self.n_sweeps {
            return Err(Error::InvalidParameter {
                name: "burn_in",
                value: self.burn_in as f64,
                reason: "must be smaller than the number of sweeps",
            });
        }
        if self.sampler_policy.max_attempts == 0 || self.sampler_policy.gibbs_sweeps == 0 {
            return Err(Error::InvalidParameter {
                name: "sampler_policy",
                value: 0.0,
                reason: "attempts and sweeps must be at least 1",
            });
        }
        Ok(())
    }

    /// Number of sweeps that contribute to posterior averages.
    pub fn kept_sweeps(&self) -> usize {
        if self.n_sweeps <= self.burn_in {
            0
        } else {
            (self.n_sweeps - self.burn_in - 1) / self.thin + 1
        }
    }

    /// Whether the sweep with zero-based index `sweep` is averaged.
    pub fn is_kept(&self, sweep: usize) -> bool {
        sweep >= self.burn_in && (sweep - self.burn_in).is_multiple_of(self.thin)
    }
}

/// Full Gibbs state.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelState {
    pub transformations: Vec<StiefelPoint>,
    /// One latent vector per row.
    pub latents: DMatrix<f64>,
    pub sigma2: f64,
    pub weights: InteractionWeights,
}

impl ModelState {
    pub fn n(&self) -> usize {
        self.transformations.len()
    }

    pub fn latent(&self, i: usize) -> DVector<f64> {
        self.latents.row(i).transpose()
    }

    /// Rows `V_i x_i`.
    pub fn fitted(&self) -> DMatrix<f64> {
        let n = self.n();
        let p = self.transformations.first().map_or(0, |v| v.ambient_dim());
        let mut out = DMatrix::zeros(n, p);
        for i in 0..n {
            let yi = self.transformations[i].embed(&self.latent(i));
            out.set_row(i, &yi.transpose());
        }
        out
    }

    /// `Σ_i ‖y_i − V_i x_i‖²`.
    pub fn residual_sum_squares(&self, data: &Dataset) -> f64 {
        (data.y() - self.fitted()).norm_squared()
    }
}

fn check_data(data: &Dataset, hp: &HyperParams) -> Result<()> {
    hp.validate()?;
    let max = data.n().min(data.p());
    if hp.d > max {
        return Err(Error::InvalidDimensions(format!(
            "latent dimension {} exceeds min(n, p) = {max}",
            hp.d
        )));
    }
    if data.n() < 2 {
        return Err(Error::InvalidDimensions(
            "need at least 2 observations".into(),
        ));
    }
    Ok(())
}

/// PCA initialization: every `V_i` is the PCA loading matrix, `x_i = Vᵀ y_i`,
/// and `σ² = τ²`.
pub fn init_state(data: &Dataset, hp: &HyperParams) -> Result<ModelState> {
    check_data(data, hp)?;
    let fit = pca_fit(data, hp.d)?;
    let weights = compute_weights(&fit.latents, hp.c_strength, hp.bandwidth)?;
    Ok(ModelState {
        transformations: vec![fit.loadings; data.n()],
        latents: fit.latents,
        sigma2: hp.tau2,
        weights,
    })
}

/// Full-conditional parameter `y_i x_iᵀ/σ² + Σ_{j≠i} λ_ij V_j` of `V_i`.
pub fn transformation_conditional(
    i: usize,
    state: &ModelState,
    data: &Dataset,
) -> Result<VmfParam> {
    let n = state.n();
    if i >= n {
        return Err(Error::IndexOutOfRange { index: i, n });
    }
    let (p, d) = state.transformations[i].matrix().shape();
    let mut c = DMatrix::zeros(p, d);
    accumulate_conditional(i, &state.transformations, &state.weights, &mut c);
    let y = data.y().row(i);
    let x = state.latents.row(i);
    c.ger(1.0 / state.sigma2, &y.transpose(), &x.transpose(), 1.0);
    VmfParam::new(c)
}

/// Draws a new `V_i` from its full conditional.
pub fn update_transformation<R: Rng + ?Sized>(
    i: usize,
    state: &ModelState,
    data: &Dataset,
    policy: &SamplerPolicy,
    rng: &mut R,
) -> Result<VmfDraw> {
    let c = transformation_conditional(i, state, data)?;
    vmf_sample_from(&c, Some(&state.transformations[i]), rng, policy)
}

/// Draws `x_i ~ N(s V_iᵀ y_i, v I)` with `s = a²/(a²+σ²)`, `v = a²σ²/(a²+σ²)`.
pub fn update_latent<R: Rng + ?Sized>(
    i: usize,
    state: &ModelState,
    data: &Dataset,
    prior: &LatentPrior,
    rng: &mut R,
) -> Result<DVector<f64>> {
    let n = state.n();
    if i >= n {
        return Err(Error::IndexOutOfRange { index: i, n });
    }
    let proj = state.transformations[i].project(&data.point(i));
    let mean = proj * prior.shrinkage(state.sigma2);
    let sd = prior.conditional_variance(state.sigma2).sqrt();
    Ok(mean.map(|m| m + sd * rng.sample::<f64, _>(StandardNormal)))
}

/// Shape and rate of the conditional Gamma law of `1/σ²`.
pub fn noise_posterior(state: &ModelState, data: &Dataset, hp: &HyperParams) -> (f64, f64) {
    let np = (data.n() * data.p()) as f64;
    let shape = (hp.eta + np) / 2.0;
    let rate = (hp.eta * hp.tau2 + state.residual_sum_squares(data)) / 2.0;
    (shape, rate)
}

/// Draws `σ²` by sampling the precision from its Gamma conditional.
pub fn update_noise<R: Rng + ?Sized>(
    state: &ModelState,
    data: &Dataset,
    hp: &HyperParams,
    rng: &mut R,
) -> Result<f64> {
    let (shape, rate) = noise_posterior(state, data, hp);
    let gamma = Gamma::new(shape, 1.0 / rate).map_err(|_| Error::InvalidParameter {
        name: "noise rate",
        value: rate,
        reason: "Gamma conditional is not proper",
    })?;
    let precision: f64 = gamma.sample(rng);
    if !(precision > 0.0) || !precision.is_finite() {
        return Err(Error::InvalidParameter {
            name: "noise precision",
            value: precision,
            reason: "draw left the positive reals",
        });
    }
    Ok(1.0 / precision)
}

/// Unnormalized log-posterior: Gaussian likelihood, MRF prior, latent
/// prior, and the Gamma prior density of `1/σ²`.
pub fn log_posterior_unnorm(state: &ModelState, data: &Dataset, hp: &HyperParams) -> Result<f64> {
    let np = (data.n() * data.p()) as f64;
    let s2 = state.sigma2;
    let likelihood = -state.residual_sum_squares(data) / (2.0 * s2) - 0.5 * np * s2.ln();
    let mrf = mrf_log_density_unnorm(&state.transformations, &state.weights)?;
    let latent = match hp.latent_prior {
        LatentPrior::Gaussian { a2 } => -state.latents.norm_squared() / (2.0 * a2),
        LatentPrior::Flat => 0.0,
    };
    let precision = 1.0 / s2;
    let noise = (hp.eta / 2.0 - 1.0) * precision.ln() - hp.eta * hp.tau2 / 2.0 * precision;
    Ok(likelihood + mrf + latent + noise)
}

/// Counts from one sweep's transformation updates.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SweepCounts {
    pub rejection_draws: usize,
    pub fallback_draws: usize,
    pub rejection_attempts: usize,
}

impl SweepCounts {
    fn record(&mut self, path: SamplerPath) {
        match path {
            SamplerPath::Rejection { attempts } => {
                self.rejection_draws += 1;
                self.rejection_attempts += attempts;
            }
            SamplerPath::ColumnGibbs { attempts } => {
                self.fallback_draws += 1;
                self.rejection_attempts += attempts;
            }
        }
    }

    fn add(&mut self, other: &SweepCounts) {
        self.rejection_draws += other.rejection_draws;
        self.fallback_draws += other.fallback_draws;
        self.rejection_attempts += other.rejection_attempts;
    }
}

/// One Gibbs sweep in place. Returns the sampler counts and the
/// log-posterior of the new state.
pub fn sweep<R: Rng + ?Sized>(
    state: &mut ModelState,
    data: &Dataset,
    hp: &HyperParams,
    rng: &mut R,
) -> Result<(SweepCounts, f64)> {
    let mut counts = SweepCounts::default();
    for i in 0..state.n() {
        let draw = update_transformation(i, state, data, &hp.sampler_policy, rng)?;
        counts.record(draw.path);
        state.transformations[i] = draw.point;
    }
    for i in 0..state.n() {
        let x = update_latent(i, state, data, &hp.latent_prior, rng)?;
        state.latents.set_row(i, &x.transpose());
    }
    state.weights = compute_weights(&state.latents, hp.c_strength, hp.bandwidth)?;
    state.sigma2 = update_noise(state, data, hp, rng)?;
    let lp = log_posterior_unnorm(state, data, hp)?;
    Ok((counts, lp))
}

/// Diagnostics line emitted after every sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRecord {
    /// One-based sweep number.
    pub sweep: usize,
    pub sigma2: f64,
    pub log_posterior: f64,
    pub counts: SweepCounts,
    pub kept: bool,
}

/// Running sums over kept sweeps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Accumulator {
    pub kept: usize,
    /// Row-major sums of each `V_i`.
    pub transformation_sums: Vec<Vec<f64>>,
    /// Row-major sums of each `x_i`.
    pub latent_sums: Vec<Vec<f64>>,
    /// Row-major sums of each fitted point `V_i x_i`.
    pub fitted_sums: Vec<Vec<f64>>,
    pub sigma2_trace: Vec<f64>,
    pub log_posterior_trace: Vec<f64>,
    pub counts: SweepCounts,
}

impl Accumulator {
    fn new(n: usize, p: usize, d: usize) -> Self {
        Accumulator {
            kept: 0,
            transformation_sums: vec![vec![0.0; p * d]; n],
            latent_sums: vec![vec![0.0; d]; n],
            fitted_sums: vec![vec![0.0; p]; n],
            sigma2_trace: Vec::new(),
            log_posterior_trace: Vec::new(),
            counts: SweepCounts::default(),
        }
    }

    fn add(&mut self, state: &ModelState) {
        self.kept += 1;
        for (i, v) in state.transformations.iter().enumerate() {
            for (s, x) in self.transformation_sums[i]
                .iter_mut()
                .zip(row_major(v.matrix()))
            {
                *s += x;
            }
            let x = state.latent(i);
            for (s, v) in self.latent_sums[i].iter_mut().zip(x.iter()) {
                *s += v;
            }
            let f = v.embed(&x);
            for (s, v) in self.fitted_sums[i].iter_mut().zip(f.iter()) {
                *s += v;
            }
        }
        self.sigma2_trace.push(state.sigma2);
    }
}

pub(crate) fn row_major(m: &DMatrix<f64>) -> Vec<f64> {
    let mut out = Vec::with_capacity(m.len());
    for r in 0..m.nrows() {
        for c in 0..m.ncols() {
            out.push(m[(r, c)]);
        }
    }
    out
}

pub(crate) fn from_row_major(rows: usize, cols: usize, data: &[f64]) -> Result<DMatrix<f64>> {
    if data.len() != rows * cols {
        return Err(Error::DimensionMismatch {
            expected: format!("{} entries", rows * cols),
            found: format!("{}", data.len()),
        });
    }
    Ok(DMatrix::from_row_slice(rows, cols, data))
}

/// Posterior averages after burn-in.
#[derive(Debug, Clone)]
pub struct PosteriorSummary {
    /// Entrywise means of each `V_i`, projected back onto the manifold.
    pub mean_transformations: Vec<StiefelPoint>,
    pub mean_latents: DMatrix<f64>,
    /// Posterior means of the fitted points `V_i x_i`.
    pub mean_fitted: DMatrix<f64>,
    /// `σ²` at every kept sweep.
    pub sigma2_trace: Vec<f64>,
    /// Log-posterior after every sweep.
    pub log_posterior_trace: Vec<f64>,
    pub diagnostics: SamplerDiagnostics,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SamplerDiagnostics {
    pub counts: SweepCounts,
    pub kept_sweeps: usize,
    /// Sites whose averaged frame was rank-deficient before projection.
    pub degenerate_means: usize,
}

/// `ŷ_i = V̄_i x̄_i` from the averaged frames and latents.
pub fn reconstruct_nonlinear(summary: &PosteriorSummary) -> DMatrix<f64> {
    let n = summary.mean_transformations.len();
    let p = summary
        .mean_transformations
        .first()
        .map_or(0, |v| v.ambient_dim());
    let mut out = DMatrix::zeros(n, p);
    for (i, v) in summary.mean_transformations.iter().enumerate() {
        let x = summary.mean_latents.row(i).transpose();
        out.set_row(i, &v.embed(&x).transpose());
    }
    out
}

/// Serializable snapshot of a running chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub n: usize,
    pub p: usize,
    pub d: usize,
    pub sigma2: f64,
    pub seed: u64,
    /// Word position of the ChaCha8 stream.
    pub counter: u128,
    /// Each `V_i`, flattened row-major.
    pub transformations: Vec<Vec<f64>>,
    /// Each `x_i`.
    pub latents: Vec<Vec<f64>>,
    pub sweeps_done: usize,
    pub hyper: HyperParams,
    pub accumulator: Accumulator,
}

/// A seeded chain that can be stepped, summarized, and checkpointed.
pub struct GibbsSampler<'a> {
    data: &'a Dataset,
    hp: HyperParams,
    state: ModelState,
    rng: ChaCha8Rng,
    seed: u64,
    sweeps_done: usize,
    acc: Accumulator,
}

impl<'a> GibbsSampler<'a> {
    pub fn new(data: &'a Dataset, hp: HyperParams, seed: u64) -> Result<Self> {
        let state = init_state(data, &hp)?;
        let acc = Accumulator::new(data.n(), data.p(), hp.d);
        Ok(GibbsSampler {
            data,
            hp,
            state,
            rng: ChaCha8Rng::seed_from_u64(seed),
            seed,
            sweeps_done: 0,
            acc,
        })
    }

    /// Restores a chain. `n_sweeps` replaces the stored total so a finished
    /// run can be extended.
    pub fn from_checkpoint(
        data: &'a Dataset,
        ckpt: &Checkpoint,
        n_sweeps: Option<usize>,
    ) -> Result<Self> {
        let mut hp = ckpt.hyper.clone();
        if let Some(total) = n_sweeps {
            hp.n_sweeps = total;
        }
        check_data(data, &hp)?;
        if ckpt.n != data.n() || ckpt.p != data.p() || ckpt.d != hp.d {
            return Err(Error::DimensionMismatch {
                expected: format!("n={}, p={}, d={}", data.n(), data.p(), hp.d),
                found: format!("n={}, p={}, d={}", ckpt.n, ckpt.p, ckpt.d),
            });
        }
        if ckpt.transformations.len() != ckpt.n || ckpt.latents.len() != ckpt.n {
            return Err(Error::DimensionMismatch {
                expected: format!("{} sites", ckpt.n),
                found: format!(
                    "{} transformations, {} latents",
                    ckpt.transformations.len(),
                    ckpt.latents.len()
                ),
            });
        }
        let transformations = ckpt
            .transformations
            .iter()
            .map(|flat| StiefelPoint::new(from_row_major(ckpt.p, ckpt.d, flat)?))
            .collect::<Result<Vec<_>>>()?;
        let flat: Vec<f64> = ckpt.latents.iter().flatten().copied().collect();
        let latents = from_row_major(ckpt.n, ckpt.d, &flat)?;
        if !(ckpt.sigma2 > 0.0) {
            return Err(Error::InvalidParameter {
                name: "sigma2",
                value: ckpt.sigma2,
                reason: "must be positive",
            });
        }
        let weights = compute_weights(&latents, hp.c_strength, hp.bandwidth)?;
        let mut rng = ChaCha8Rng::seed_from_u64(ckpt.seed);
        rng.set_word_pos(ckpt.counter);
        Ok(GibbsSampler {
            data,
            hp,
            state: ModelState {
                transformations,
                latents,
                sigma2: ckpt.sigma2,
                weights,
            },
            rng,
            seed: ckpt.seed,
            sweeps_done: ckpt.sweeps_done,
            acc: ckpt.accumulator.clone(),
        })
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            n: self.data.n(),
            p: self.data.p(),
            d: self.hp.d,
            sigma2: self.state.sigma2,
            seed: self.seed,
            counter: self.rng.get_word_pos(),
            transformations: self
                .state
                .transformations
                .iter()
                .map(|v| row_major(v.matrix()))
                .collect(),
            latents: (0..self.data.n())
                .map(|i| self.state.latents.row(i).iter().copied().collect())
                .collect(),
            sweeps_done: self.sweeps_done,
            hyper: self.hp.clone(),
            accumulator: self.acc.clone(),
        }
    }

    pub fn state(&self) -> &ModelState {
        &self.state
    }

    pub fn hyper(&self) -> &HyperParams {
        &self.hp
    }

    pub fn sweeps_done(&self) -> usize {
        self.sweeps_done
    }

    pub fn is_finished(&self) -> bool {
        self.sweeps_done >= self.hp.n_sweeps
    }

    pub fn log_posterior(&self) -> Result<f64> {
        log_posterior_unnorm(&self.state, self.data, &self.hp)
    }

    pub fn step(&mut self) -> Result<SweepRecord> {
        let (counts, lp) = sweep(&mut self.state, self.data, &self.hp, &mut self.rng)?;
        let index = self.sweeps_done;
        self.sweeps_done += 1;
        let kept = self.hp.is_kept(index);
        if kept {
            self.acc.add(&self.state);
        }
        self.acc.log_posterior_trace.push(lp);
        self.acc.counts.add(&counts);
        Ok(SweepRecord {
            sweep: self.sweeps_done,
            sigma2: self.state.sigma2,
            log_posterior: lp,
            counts,
            kept,
        })
    }

    /// Steps until `n_sweeps` is reached, handing each record to `observer`.
    pub fn run_with<F>(&mut self, mut observer: F) -> Result<()>
    where
        F: FnMut(&SweepRecord) -> Result<()>,
    {
        while !self.is_finished() {
            let rec = self.step()?;
            observer(&rec)?;
        }
        Ok(())
    }

    pub fn summary(&self) -> Result<PosteriorSummary> {
        let kept = self.acc.kept;
        if kept == 0 {
            return Err(Error::InvalidParameter {
                name: "kept sweeps",
                value: 0.0,
                reason: "no sweep past burn-in has been run yet",
            });
        }
        let (n, p, d) = (self.data.n(), self.data.p(), self.hp.d);
        let scale = 1.0 / kept as f64;
        let mut degenerate = 0;
        let mut mean_transformations = Vec::with_capacity(n);
        for sums in &self.acc.transformation_sums {
            let m = from_row_major(p, d, sums)? * scale;
            let polar = polar_project(&m)?;
            if polar.deficient_rank.is_some() {
                degenerate += 1;
            }
            mean_transformations.push(polar.point);
        }
        let lat: Vec<f64> = self.acc.latent_sums.iter().flatten().copied().collect();
        let fit: Vec<f64> = self.acc.fitted_sums.iter().flatten().copied().collect();
        Ok(PosteriorSummary {
            mean_transformations,
            mean_latents: from_row_major(n, d, &lat)? * scale,
            mean_fitted: from_row_major(n, p, &fit)? * scale,
            sigma2_trace: self.acc.sigma2_trace.clone(),
            log_posterior_trace: self.acc.log_posterior_trace.clone(),
            diagnostics: SamplerDiagnostics {
                counts: self.acc.counts,
                kept_sweeps: kept,
                degenerate_means: degenerate,
            },
        })
    }
}

/// Runs a full chain from PCA initialization and returns its summary.
pub fn run(data: &Dataset, hp: &HyperParams, seed: u64) -> Result<PosteriorSummary> {
    let mut sampler = GibbsSampler::new(data, hp.clone(), seed)?;
    sampler.run_with(|_| Ok(()))?;
    sampler.summary()
}
