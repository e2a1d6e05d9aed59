use std::fmt;

use nalgebra::DMatrix;
use nlpca::data::{self, Pooling};
use nlpca::gibbs::{
    reconstruct_nonlinear, Checkpoint, GibbsSampler, HyperParams, PosteriorSummary,
    SamplerDiagnostics, SweepRecord,
};
use nlpca::io::{numbered_headers, read_data_csv, read_json, write_csv, write_json};
use nlpca::metrics::{
    distance_to_unit_sphere, histogram, nn_mismatch_count, reconstruction_errors,
};
use nlpca::pca::{pca_fit, reconstruct_linear, Dataset};
use nlpca::vmf::{vmf_sample, SamplerPath, SamplerPolicy, VmfParam};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::output::{artifact, check_out_dir, create_out_dir, write_histograms, write_trace};
use crate::{CliError, DigitsArgs, FitArgs, SphereArgs, VmfDiagArgs};

/// Published nearest-neighbor mismatch counts for the digits subset.
pub const PUBLISHED_PCA_MISMATCH: usize = 53;
pub const PUBLISHED_MODEL_MISMATCH: usize = 25;

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MethodMetrics {
    pub mean_reconstruction_error: f64,
    /// Mean of `|‖ŷ_i‖ − 1|` in the original coordinates.
    pub mean_sphere_distance: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SphereSummary {
    pub n: usize,
    pub noise: f64,
    pub d: usize,
    pub seed: u64,
    pub chain_seed: u64,
    pub hyper: HyperParams,
    pub data_mean_sphere_distance: f64,
    pub pca: MethodMetrics,
    /// `V̄_i x̄_i` from the averaged frames and latents.
    pub model: MethodMetrics,
    /// Posterior mean of `V_i x_i`, reported alongside the plug-in figure.
    pub model_posterior_mean_fit: MethodMetrics,
    pub model_beats_pca_reconstruction: bool,
    pub model_beats_pca_sphere_distance: bool,
    pub sigma2_posterior_mean: f64,
    pub diagnostics: SamplerDiagnostics,
}

fn sphere_metrics(
    data: &Dataset,
    y_hat: &DMatrix<f64>,
) -> Result<(MethodMetrics, Vec<f64>, Vec<f64>), CliError> {
    let errors = reconstruction_errors(data.y(), y_hat)?;
    let dist = distance_to_unit_sphere(y_hat, data.column_means())?;
    let m = MethodMetrics {
        mean_reconstruction_error: mean(&errors),
        mean_sphere_distance: mean(&dist),
    };
    Ok((m, errors, dist))
}

fn run_chain(
    mut sampler: GibbsSampler<'_>,
) -> Result<(PosteriorSummary, Vec<SweepRecord>, Checkpoint), CliError> {
    let mut trace = Vec::new();
    sampler.run_with(|r| {
        trace.push(*r);
        Ok(())
    })?;
    Ok((sampler.summary()?, trace, sampler.checkpoint()))
}

/// Noisy unit-sphere points, PCA and the model, plus histogram data.
pub fn cmd_sphere_demo(args: &SphereArgs) -> Result<SphereSummary, CliError> {
    if args.n < 2 {
        return Err(CliError::Usage(format!(
            "--n must be at least 2, got {}",
            args.n
        )));
    }
    if args.bins == 0 {
        return Err(CliError::Usage("--bins must be positive".into()));
    }
    check_out_dir(&args.out)?;
    let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
    let sample = data::generate_sphere(args.n, args.noise, &mut rng)?;
    let chain_seed: u64 = rng.random();
    let data = &sample.data;
    let hp = args.chain.hyper_params(data)?;
    let pca = pca_fit(data, hp.d)?;

    create_out_dir(&args.out)?;
    let sampler = GibbsSampler::new(data, hp.clone(), chain_seed)?;
    let (post, trace, _) = run_chain(sampler)?;

    let pca_hat = reconstruct_linear(&pca);
    let model_hat = reconstruct_nonlinear(&post);
    let (pca_m, pca_err, pca_dist) = sphere_metrics(data, &pca_hat)?;
    let (model_m, model_err, model_dist) = sphere_metrics(data, &model_hat)?;
    let (fitted_m, _, _) = sphere_metrics(data, &post.mean_fitted)?;
    let data_dist = distance_to_unit_sphere(data.y(), data.column_means())?;

    let out = &args.out;
    let xyz = vec!["x".to_string(), "y".to_string(), "z".to_string()];
    write_csv(artifact(out, "points.csv"), &xyz, &sample.raw, None)?;
    write_csv(
        artifact(out, "reconstruction_model.csv"),
        &xyz,
        &data.decenter(&model_hat),
        None,
    )?;
    write_csv(
        artifact(out, "reconstruction_pca.csv"),
        &xyz,
        &data.decenter(&pca_hat),
        None,
    )?;
    write_histograms(
        &artifact(out, "histograms.csv"),
        &[
            ("data_sphere_distance", histogram(&data_dist, args.bins)?),
            ("model_sphere_distance", histogram(&model_dist, args.bins)?),
            ("pca_sphere_distance", histogram(&pca_dist, args.bins)?),
            (
                "model_reconstruction_error",
                histogram(&model_err, args.bins)?,
            ),
            ("pca_reconstruction_error", histogram(&pca_err, args.bins)?),
        ],
    )?;
    write_trace(&artifact(out, "trace.csv"), &trace)?;
    let summary = SphereSummary {
        n: args.n,
        noise: args.noise,
        d: hp.d,
        seed: args.seed,
        chain_seed,
        hyper: hp,
        data_mean_sphere_distance: mean(&data_dist),
        pca: pca_m,
        model: model_m,
        model_posterior_mean_fit: fitted_m,
        model_beats_pca_reconstruction: model_m.mean_reconstruction_error
            < pca_m.mean_reconstruction_error,
        model_beats_pca_sphere_distance: model_m.mean_sphere_distance < pca_m.mean_sphere_distance,
        sigma2_posterior_mean: mean(&post.sigma2_trace),
        diagnostics: post.diagnostics,
    };
    write_json(artifact(out, "summary.json"), &summary)?;
    Ok(summary)
}

#[derive(Debug, Clone, Serialize)]
pub struct DigitsSummary {
    pub n: usize,
    pub p: usize,
    pub rows: usize,
    pub cols: usize,
    pub pool: Pooling,
    pub factor: usize,
    pub classes: Vec<u8>,
    pub per_class: usize,
    pub seed: u64,
    pub chain_seed: u64,
    pub hyper: HyperParams,
    pub pca_mismatch: usize,
    pub model_mismatch: usize,
    pub published_pca_mismatch: usize,
    pub published_model_mismatch: usize,
    pub model_not_worse_than_pca: bool,
    pub sigma2_posterior_mean: f64,
    pub diagnostics: SamplerDiagnostics,
}

/// Seeded digit subset, two-dimensional PCA and model embeddings.
pub fn cmd_digits_demo(args: &DigitsArgs) -> Result<DigitsSummary, CliError> {
    if args.factor == 0 {
        return Err(CliError::Usage("--factor must be positive".into()));
    }
    if args.per_class == 0 || args.classes.is_empty() {
        return Err(CliError::Usage(
            "need at least one class and one image per class".into(),
        ));
    }
    let mut sorted = args.classes.clone();
    sorted.sort_unstable();
    sorted.dedup();
    if sorted.len() != args.classes.len() {
        return Err(CliError::Usage("--classes must be distinct".into()));
    }
    check_out_dir(&args.out)?;
    let full = data::load_image_set(&args.images, &args.labels)?;
    let small = data::subsample_images(&full, args.factor, args.pool)?;
    let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
    let subset = data::select_digit_subset(&small, &args.classes, args.per_class, &mut rng)?;
    let chain_seed: u64 = rng.random();
    let data = data::to_dataset(&subset)?;
    let hp = args.chain.hyper_params(&data)?;
    let pca = pca_fit(&data, hp.d)?;

    create_out_dir(&args.out)?;
    let sampler = GibbsSampler::new(&data, hp.clone(), chain_seed)?;
    let (post, trace, _) = run_chain(sampler)?;

    let labels = data.labels();
    let pca_mismatch = nn_mismatch_count(&pca.latents, labels)?;
    let model_mismatch = nn_mismatch_count(&post.mean_latents, labels)?;
    let out = &args.out;
    let headers = numbered_headers("latent", hp.d);
    write_csv(
        artifact(out, "latents_pca.csv"),
        &headers,
        &pca.latents,
        labels,
    )?;
    write_csv(
        artifact(out, "latents_model.csv"),
        &headers,
        &post.mean_latents,
        labels,
    )?;
    write_trace(&artifact(out, "trace.csv"), &trace)?;
    let summary = DigitsSummary {
        n: data.n(),
        p: data.p(),
        rows: subset.rows,
        cols: subset.cols,
        pool: args.pool,
        factor: args.factor,
        classes: args.classes.clone(),
        per_class: args.per_class,
        seed: args.seed,
        chain_seed,
        hyper: hp,
        pca_mismatch,
        model_mismatch,
        published_pca_mismatch: PUBLISHED_PCA_MISMATCH,
        published_model_mismatch: PUBLISHED_MODEL_MISMATCH,
        model_not_worse_than_pca: model_mismatch <= pca_mismatch,
        sigma2_posterior_mean: mean(&post.sigma2_trace),
        diagnostics: post.diagnostics,
    };
    write_json(artifact(out, "summary.json"), &summary)?;
    Ok(summary)
}

#[derive(Debug, Clone, Serialize)]
pub struct FitSummary {
    pub n: usize,
    pub p: usize,
    pub d: usize,
    pub resumed: bool,
    pub sweeps_done: usize,
    pub hyper: HyperParams,
    /// Mean `‖y_i − V̄_i x̄_i‖`.
    pub mean_reconstruction_error: f64,
    pub pca_mean_reconstruction_error: f64,
    pub model_mismatch: Option<usize>,
    pub pca_mismatch: Option<usize>,
    pub sigma2_posterior_mean: f64,
    pub diagnostics: SamplerDiagnostics,
}

/// Fits a CSV matrix, or continues a checkpointed chain on it.
pub fn cmd_fit(args: &FitArgs) -> Result<FitSummary, CliError> {
    if args.resume.is_some() {
        let set = args.chain.model_flags();
        if !set.is_empty() {
            return Err(CliError::Usage(format!(
                "{} cannot be combined with --resume; the checkpoint fixes them",
                set.join(", ")
            )));
        }
    }
    check_out_dir(&args.out)?;
    let table = read_data_csv(&args.input)?;
    if table.values.nrows() < 2 {
        return Err(CliError::Usage(format!(
            "input needs at least 2 rows, found {}",
            table.values.nrows()
        )));
    }
    let mut data = Dataset::center(&table.values)?;
    if let Some(l) = table.labels.clone() {
        data = data.with_labels(l)?;
    }
    let (sampler, resumed) = match &args.resume {
        Some(path) => {
            let ckpt: Checkpoint = read_json(path)?;
            let total = args.chain.sweeps.unwrap_or(ckpt.hyper.n_sweeps);
            if total < ckpt.sweeps_done {
                return Err(CliError::Usage(format!(
                    "--sweeps {total} is below the {} sweeps already done",
                    ckpt.sweeps_done
                )));
            }
            (
                GibbsSampler::from_checkpoint(&data, &ckpt, Some(total))?,
                true,
            )
        }
        None => {
            let hp = args.chain.hyper_params(&data)?;
            (GibbsSampler::new(&data, hp, args.seed)?, false)
        }
    };
    let hp = sampler.hyper().clone();
    let pca = pca_fit(&data, hp.d)?;

    create_out_dir(&args.out)?;
    let (post, trace, ckpt) = run_chain(sampler)?;
    let y_hat = reconstruct_nonlinear(&post);
    let pca_hat = reconstruct_linear(&pca);
    let labels = data.labels();
    let out = &args.out;
    let headers = if table.headers.len() == data.p() {
        table.headers.clone()
    } else {
        numbered_headers("y", data.p())
    };
    let latent_headers = numbered_headers("latent", hp.d);
    write_csv(
        artifact(out, "latents.csv"),
        &latent_headers,
        &post.mean_latents,
        labels,
    )?;
    write_csv(
        artifact(out, "reconstruction.csv"),
        &headers,
        &data.decenter(&y_hat),
        None,
    )?;
    write_csv(
        artifact(out, "fitted_mean.csv"),
        &headers,
        &data.decenter(&post.mean_fitted),
        None,
    )?;
    let frames = DMatrix::from_row_iterator(
        data.n(),
        data.p() * hp.d,
        post.mean_transformations
            .iter()
            .flat_map(|v| v.matrix().transpose().iter().copied().collect::<Vec<_>>()),
    );
    write_csv(
        artifact(out, "transformations.csv"),
        &numbered_headers("v", data.p() * hp.d),
        &frames,
        None,
    )?;
    write_trace(&artifact(out, "trace.csv"), &trace)?;
    write_json(artifact(out, "checkpoint.json"), &ckpt)?;
    let (model_mismatch, pca_mismatch) = if labels.is_some() {
        (
            Some(nn_mismatch_count(&post.mean_latents, labels)?),
            Some(nn_mismatch_count(&pca.latents, labels)?),
        )
    } else {
        (None, None)
    };
    let summary = FitSummary {
        n: data.n(),
        p: data.p(),
        d: hp.d,
        resumed,
        sweeps_done: ckpt.sweeps_done,
        mean_reconstruction_error: mean(&reconstruction_errors(data.y(), &y_hat)?),
        pca_mean_reconstruction_error: mean(&reconstruction_errors(data.y(), &pca_hat)?),
        hyper: hp,
        model_mismatch,
        pca_mismatch,
        sigma2_posterior_mean: mean(&post.sigma2_trace),
        diagnostics: post.diagnostics,
    };
    write_json(artifact(out, "summary.json"), &summary)?;
    Ok(summary)
}

#[derive(Debug, Clone, Serialize)]
pub struct VmfDiagReport {
    pub p: usize,
    pub d: usize,
    pub kappa: f64,
    pub samples: usize,
    pub rejection_draws: usize,
    pub fallback_draws: usize,
    /// Uniform proposals drawn, including those of exhausted attempts.
    pub proposals: usize,
    /// Accepted over proposed; absent when rejection was never tried.
    pub acceptance_rate: Option<f64>,
    pub fallback_engaged: bool,
    /// Sample mean of `tr(MᵀX)/d` with `M` the mode.
    pub mean_resultant: f64,
    pub standard_error: f64,
    /// Circle case only: `E[cos θ]` under `e^{κ cos θ}` by quadrature.
    pub quadrature_mean_resultant: Option<f64>,
    pub z_score: Option<f64>,
}

impl fmt::Display for VmfDiagReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "p: {}", self.p)?;
        writeln!(f, "d: {}", self.d)?;
        writeln!(f, "kappa: {}", self.kappa)?;
        writeln!(f, "samples: {}", self.samples)?;
        writeln!(f, "rejection_draws: {}", self.rejection_draws)?;
        writeln!(f, "fallback_draws: {}", self.fallback_draws)?;
        writeln!(f, "proposals: {}", self.proposals)?;
        match self.acceptance_rate {
            Some(r) => writeln!(f, "acceptance_rate: {r:.6}")?,
            None => writeln!(f, "acceptance_rate: n/a (rejection skipped)")?,
        }
        writeln!(
            f,
            "fallback: {}",
            if self.fallback_engaged {
                "engaged"
            } else {
                "not engaged"
            }
        )?;
        writeln!(
            f,
            "mean_resultant: {:.6} (se {:.6})",
            self.mean_resultant, self.standard_error
        )?;
        if let (Some(q), Some(z)) = (self.quadrature_mean_resultant, self.z_score) {
            writeln!(f, "quadrature_mean_resultant: {q:.6}")?;
            writeln!(f, "z_score: {z:.3}")?;
            writeln!(
                f,
                "moment_check: {}",
                if z.abs() <= 3.0 { "pass" } else { "fail" }
            )?;
        }
        Ok(())
    }
}

/// Composite Simpson rule on `[a, b]` with an even number of panels.
fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, panels: usize) -> f64 {
    let n = panels + panels % 2;
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for i in 1..n {
        s += if i % 2 == 1 { 4.0 } else { 2.0 } * f(a + i as f64 * h);
    }
    s * h / 3.0
}

/// `E[cos θ]` for the circular density proportional to `e^{κ cos θ}`.
pub fn circle_mean_resultant(kappa: f64) -> f64 {
    let pi = std::f64::consts::PI;
    // Shifting the exponent by κ keeps both integrals finite for large κ.
    let w = |t: f64| (kappa * (t.cos() - 1.0)).exp();
    let z = simpson(w, -pi, pi, 20_000);
    simpson(|t| t.cos() * w(t), -pi, pi, 20_000) / z
}

/// Draws from `vMF(κ [I_d; 0])` and reports sampler health.
pub fn cmd_vmf_diag(args: &VmfDiagArgs) -> Result<VmfDiagReport, CliError> {
    let (p, d) = (args.p, args.d_frame);
    if d == 0 || d > p {
        return Err(CliError::Usage(format!(
            "need 1 <= d-frame <= p, got d={d}, p={p}"
        )));
    }
    if args.kappa < 0.0 || !args.kappa.is_finite() {
        return Err(CliError::Usage(format!(
            "--kappa must be finite and >= 0, got {}",
            args.kappa
        )));
    }
    if args.samples < 2 {
        return Err(CliError::Usage("--samples must be at least 2".into()));
    }
    if let Some(dir) = &args.out {
        check_out_dir(dir)?;
    }
    let mode = DMatrix::<f64>::identity(p, d);
    let c = VmfParam::new(&mode * args.kappa)?;
    let policy = SamplerPolicy::default();
    let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
    let (mut rejection_draws, mut fallback_draws, mut proposals) = (0, 0, 0);
    let mut stats = Vec::with_capacity(args.samples);
    for _ in 0..args.samples {
        let draw = vmf_sample(&c, &mut rng, &policy)?;
        match draw.path {
            SamplerPath::Rejection { attempts } => {
                rejection_draws += 1;
                proposals += attempts;
            }
            SamplerPath::ColumnGibbs { attempts } => {
                fallback_draws += 1;
                proposals += attempts;
            }
        }
        stats.push((mode.transpose() * draw.point.matrix()).trace() / d as f64);
    }
    let m = mean(&stats);
    let var = stats.iter().map(|s| (s - m).powi(2)).sum::<f64>() / (stats.len() - 1) as f64;
    let se = (var / stats.len() as f64).sqrt();
    let quadrature = (p == 2 && d == 1).then(|| circle_mean_resultant(args.kappa));
    let report = VmfDiagReport {
        p,
        d,
        kappa: args.kappa,
        samples: args.samples,
        rejection_draws,
        fallback_draws,
        proposals,
        acceptance_rate: (proposals > 0).then(|| rejection_draws as f64 / proposals as f64),
        fallback_engaged: fallback_draws > 0,
        mean_resultant: m,
        standard_error: se,
        quadrature_mean_resultant: quadrature,
        // A zero standard error only happens when every draw is the mode.
        z_score: quadrature.map(|q| if se > 0.0 { (m - q) / se } else { 0.0 }),
    };
    if let Some(dir) = &args.out {
        create_out_dir(dir)?;
        write_json(artifact(dir, "vmf_diag.json"), &report)?;
    }
    Ok(report)
}
