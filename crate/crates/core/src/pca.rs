//! Linear PCA baseline: centering, the SVD fit of `Y/√n`, the zero-noise
//! PPCA loading `W = VD`, and the pilot quantities (`τ²`, `a²`) that set the
//! Bayesian model's priors.

use nalgebra::{DMatrix, DVector, SVD};

use crate::error::{Error, Result};
use crate::stiefel::{polar_project, StiefelPoint, CONSTRUCTION_TOL};

/// Centered observations, one row per point.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    y: DMatrix<f64>,
    column_means: DVector<f64>,
    labels: Option<Vec<u8>>,
}

impl Dataset {
    /// Subtracts column means from `raw` (`n × p`) and remembers them.
    pub fn center(raw: &DMatrix<f64>) -> Result<Self> {
        let (n, p) = raw.shape();
        if n == 0 || p == 0 {
            return Err(Error::EmptyInput);
        }
        if let Some(bad) = raw.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "observation",
                value: *bad,
                reason: "must be finite",
            });
        }
        let means = DVector::from_iterator(p, raw.column_iter().map(|c| c.mean()));
        let mut y = raw.clone();
        for (mut col, m) in y.column_iter_mut().zip(means.iter()) {
            col.add_scalar_mut(-m);
        }
        Ok(Dataset {
            y,
            column_means: means,
            labels: None,
        })
    }

    /// Rebuilds a dataset from already-centered values and stored means.
    pub fn from_parts(
        y: DMatrix<f64>,
        column_means: DVector<f64>,
        labels: Option<Vec<u8>>,
    ) -> Result<Self> {
        if y.nrows() == 0 || y.ncols() == 0 {
            return Err(Error::EmptyInput);
        }
        if column_means.len() != y.ncols() {
            return Err(Error::DimensionMismatch {
                expected: format!("{} column means", y.ncols()),
                found: format!("{}", column_means.len()),
            });
        }
        Dataset {
            y,
            column_means,
            labels: None,
        }
        .with_labels_opt(labels)
    }

    pub fn with_labels(self, labels: Vec<u8>) -> Result<Self> {
        self.with_labels_opt(Some(labels))
    }

    fn with_labels_opt(mut self, labels: Option<Vec<u8>>) -> Result<Self> {
        if let Some(l) = &labels {
            if l.len() != self.n() {
                return Err(Error::DimensionMismatch {
                    expected: format!("{} labels", self.n()),
                    found: format!("{}", l.len()),
                });
            }
        }
        self.labels = labels;
        Ok(self)
    }

    pub fn y(&self) -> &DMatrix<f64> {
        &self.y
    }

    pub fn column_means(&self) -> &DVector<f64> {
        &self.column_means
    }

    pub fn labels(&self) -> Option<&[u8]> {
        self.labels.as_deref()
    }

    pub fn n(&self) -> usize {
        self.y.nrows()
    }

    pub fn p(&self) -> usize {
        self.y.ncols()
    }

    /// Observation `i` as a column vector.
    pub fn point(&self, i: usize) -> DVector<f64> {
        self.y.row(i).transpose()
    }

    /// Adds the stored column means back to rows of `m`.
    pub fn decenter(&self, m: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = m.clone();
        for (mut col, mean) in out.column_iter_mut().zip(self.column_means.iter()) {
            col.add_scalar_mut(*mean);
        }
        out
    }
}

/// Rank-`d` PCA of a centered dataset.
#[derive(Debug, Clone)]
pub struct PcaFit {
    /// `V`, the top `d` right singular vectors of `Y/√n`.
    pub loadings: StiefelPoint,
    /// The top `d` singular values of `Y/√n`, descending.
    pub singular_values: DVector<f64>,
    /// `X = Y V`, one row per point.
    pub latents: DMatrix<f64>,
}

fn check_rank(data: &Dataset, d: usize) -> Result<()> {
    let max = data.n().min(data.p());
    if d == 0 || d > max {
        return Err(Error::InvalidDimensions(format!(
            "latent dimension must satisfy 1 <= d <= min(n, p) = {max}, got {d}"
        )));
    }
    Ok(())
}

/// Flips each column so its largest-magnitude entry is positive.
fn fix_signs(v: &mut DMatrix<f64>) {
    for mut col in v.column_iter_mut() {
        let mut best = 0.0f64;
        for &x in col.iter() {
            if x.abs() > best.abs() {
                best = x;
            }
        }
        if best < 0.0 {
            col.neg_mut();
        }
    }
}

pub fn pca_fit(data: &Dataset, d: usize) -> Result<PcaFit> {
    check_rank(data, d)?;
    let scaled = data.y() / (data.n() as f64).sqrt();
    let svd = SVD::try_new(scaled, false, true, f64::EPSILON, 0)
        .ok_or_else(|| Error::InvalidDimensions("SVD failed to converge".to_string()))?;
    let v_t = svd.v_t.expect("requested Vᵀ");
    let mut v = v_t.rows(0, d).transpose();
    fix_signs(&mut v);
    let loadings = match StiefelPoint::new(v.clone()) {
        Ok(l) => l,
        // Degenerate spectra can leave slightly non-orthonormal trailing vectors.
        Err(Error::NotOrthonormal { max_deviation }) if max_deviation < 1e-6 => {
            polar_project(&v)?.point
        }
        Err(e) => return Err(e),
    };
    debug_assert!(crate::stiefel::orthonormality_error(loadings.matrix()) <= CONSTRUCTION_TOL);
    let latents = data.y() * loadings.matrix();
    Ok(PcaFit {
        loadings,
        singular_values: svd.singular_values.rows(0, d).into_owned(),
        latents,
    })
}

/// Zero-noise PPCA maximum-likelihood loading `W = V diag(D)`.
pub fn ppca_ml_loading(data: &Dataset, d: usize) -> Result<DMatrix<f64>> {
    let fit = pca_fit(data, d)?;
    Ok(fit.loadings.matrix() * DMatrix::from_diagonal(&fit.singular_values))
}

/// `Ŷ = X Vᵀ`.
pub fn reconstruct_linear(fit: &PcaFit) -> DMatrix<f64> {
    &fit.latents * fit.loadings.matrix().transpose()
}

/// Mean squared PCA residual per scalar entry, `Σ_i ‖y_i − ŷ_i‖² / (np)`.
pub fn pilot_tau2(data: &Dataset, d: usize) -> Result<f64> {
    let fit = pca_fit(data, d)?;
    let resid = data.y() - reconstruct_linear(&fit);
    Ok(resid.norm_squared() / (data.n() * data.p()) as f64)
}

/// Per-column sample variance (`n − 1` denominator), averaged over columns.
pub fn avg_variance(data: &Dataset) -> Result<f64> {
    let n = data.n();
    if n < 2 {
        return Err(Error::InvalidDimensions(format!(
            "sample variance needs n >= 2, got {n}"
        )));
    }
    let total: f64 = data
        .y()
        .column_iter()
        .map(|col| {
            let m = col.mean();
            col.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (n - 1) as f64
        })
        .sum();
    Ok(total / data.p() as f64)
}
