//! Markov random field prior over the per-site transformation matrices.
//!
//! Sites are the latent positions `x_i`; every pair of sites interacts
//! (complete graph) with Gaussian-kernel weight
//! `λ_ij = c · exp(−‖x_i − x_j‖² / (2w²))`. The joint log-density is
//! `Σ_{i<j} λ_ij tr(V_iᵀ V_j)`, so the conditional of a single `V_i` is
//! `vMF(Σ_{j≠i} λ_ij V_j)`.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::stiefel::StiefelPoint;
use crate::vmf::VmfParam;

/// Smallest bandwidth accepted by [`compute_weights`].
pub const MIN_BANDWIDTH: f64 = 1e-8;

/// Dense symmetric interaction weights with zero diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct InteractionWeights {
    lambda: DMatrix<f64>,
    c_strength: f64,
    bandwidth: f64,
}

impl InteractionWeights {
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.lambda
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.lambda[(i, j)]
    }

    pub fn n_sites(&self) -> usize {
        self.lambda.nrows()
    }

    pub fn c_strength(&self) -> f64 {
        self.c_strength
    }

    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    /// `Σ_j λ_ij`, the approximate conditional concentration at site `i`
    /// when neighbouring frames agree.
    pub fn row_sum(&self, i: usize) -> f64 {
        self.lambda.row(i).sum()
    }
}

fn check_positive(name: &'static str, value: f64) -> Result<()> {
    if !(value > 0.0) || !value.is_finite() {
        return Err(Error::InvalidParameter {
            name,
            value,
            reason: "must be positive and finite",
        });
    }
    Ok(())
}

/// Gaussian-kernel weights for the latent rows of `latents` (`n × d`).
pub fn compute_weights(
    latents: &DMatrix<f64>,
    c_strength: f64,
    bandwidth: f64,
) -> Result<InteractionWeights> {
    check_positive("c", c_strength)?;
    check_positive("w", bandwidth)?;
    if bandwidth < MIN_BANDWIDTH {
        return Err(Error::InvalidParameter {
            name: "w",
            value: bandwidth,
            reason: "below the minimum bandwidth 1e-8",
        });
    }
    let n = latents.nrows();
    if n < 2 {
        return Err(Error::InvalidDimensions(format!(
            "interaction weights need at least 2 sites, got {n}"
        )));
    }
    let scale = -0.5 / (bandwidth * bandwidth);
    let mut lambda = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        for j in (i + 1)..n {
            let dist2 = (latents.row(i) - latents.row(j)).norm_squared();
            let w = c_strength * (scale * dist2).exp();
            lambda[(i, j)] = w;
            lambda[(j, i)] = w;
        }
    }
    Ok(InteractionWeights {
        lambda,
        c_strength,
        bandwidth,
    })
}

/// Mean pairwise Euclidean distance between latent rows.
pub fn default_bandwidth(latents: &DMatrix<f64>) -> Result<f64> {
    let n = latents.nrows();
    if n < 2 {
        return Err(Error::InvalidDimensions(format!(
            "bandwidth needs at least 2 latent points, got {n}"
        )));
    }
    let mut total = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            total += (latents.row(i) - latents.row(j)).norm();
        }
    }
    let w = total / (n * (n - 1) / 2) as f64;
    if w < MIN_BANDWIDTH {
        return Err(Error::InvalidParameter {
            name: "w",
            value: w,
            reason: "latent points are (numerically) identical",
        });
    }
    Ok(w)
}

/// `c = 100 / n`.
pub fn default_strength(n: usize) -> Result<f64> {
    if n == 0 {
        return Err(Error::EmptyInput);
    }
    Ok(100.0 / n as f64)
}

fn check_sites(transformations: &[StiefelPoint], weights: &InteractionWeights) -> Result<()> {
    let n = transformations.len();
    if n != weights.n_sites() {
        return Err(Error::DimensionMismatch {
            expected: format!("{} sites", weights.n_sites()),
            found: format!("{n} transformations"),
        });
    }
    if let Some(first) = transformations.first() {
        let shape = first.matrix().shape();
        if let Some(bad) = transformations.iter().find(|v| v.matrix().shape() != shape) {
            return Err(Error::DimensionMismatch {
                expected: format!("{shape:?}"),
                found: format!("{:?}", bad.matrix().shape()),
            });
        }
    }
    Ok(())
}

/// Writes `Σ_{j≠i} λ_ij V_j` into `out` without allocating.
pub(crate) fn accumulate_conditional(
    i: usize,
    transformations: &[StiefelPoint],
    weights: &InteractionWeights,
    out: &mut DMatrix<f64>,
) {
    out.fill(0.0);
    for (j, v) in transformations.iter().enumerate() {
        if j != i {
            let l = weights.get(i, j);
            if l != 0.0 {
                *out += v.matrix() * l;
            }
        }
    }
}

/// Parameter of the prior conditional `V_i | V_{-i} ~ vMF(Σ_{j≠i} λ_ij V_j)`.
pub fn conditional_param(
    i: usize,
    transformations: &[StiefelPoint],
    weights: &InteractionWeights,
) -> Result<VmfParam> {
    check_sites(transformations, weights)?;
    let n = transformations.len();
    if i >= n {
        return Err(Error::IndexOutOfRange { index: i, n });
    }
    let (p, d) = transformations[i].matrix().shape();
    let mut c = DMatrix::zeros(p, d);
    accumulate_conditional(i, transformations, weights, &mut c);
    VmfParam::new(c)
}

/// `Σ_{i<j} λ_ij tr(V_iᵀ V_j)`.
pub fn mrf_log_density_unnorm(
    transformations: &[StiefelPoint],
    weights: &InteractionWeights,
) -> Result<f64> {
    check_sites(transformations, weights)?;
    let n = transformations.len();
    let mut total = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            let l = weights.get(i, j);
            if l != 0.0 {
                total += l * transformations[i].matrix().dot(transformations[j].matrix());
            }
        }
    }
    Ok(total)
}
