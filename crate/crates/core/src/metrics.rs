//! Evaluation quantities: per-point reconstruction error, distance to the
//! unit sphere, nearest-neighbor label mismatch, and histogram binning.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

fn check_same_shape(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::DimensionMismatch {
            expected: format!("{:?}", a.shape()),
            found: format!("{:?}", b.shape()),
        });
    }
    Ok(())
}

/// `‖y_i − ŷ_i‖` per row.
pub fn reconstruction_errors(y: &DMatrix<f64>, y_hat: &DMatrix<f64>) -> Result<Vec<f64>> {
    check_same_shape(y, y_hat)?;
    Ok((y - y_hat).row_iter().map(|r| r.norm()).collect())
}

/// `|‖point_i + center‖ − 1|` per row. Pass the stored column means as
/// `center` to measure centered points in the raw frame.
pub fn distance_to_unit_sphere(points: &DMatrix<f64>, center: &DVector<f64>) -> Result<Vec<f64>> {
    if points.ncols() != 3 || center.len() != 3 {
        return Err(Error::DimensionMismatch {
            expected: "3 columns and a 3-vector center".to_string(),
            found: format!(
                "{} columns, center of length {}",
                points.ncols(),
                center.len()
            ),
        });
    }
    Ok(points
        .row_iter()
        .map(|r| ((r.transpose() + center).norm() - 1.0).abs())
        .collect())
}

/// Index of the nearest other row; ties go to the smaller index.
pub fn nearest_neighbors(latents: &DMatrix<f64>) -> Result<Vec<usize>> {
    let n = latents.nrows();
    if n < 2 {
        return Err(Error::InvalidDimensions(format!(
            "nearest neighbors need at least 2 points, got {n}"
        )));
    }
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let mut best = (f64::INFINITY, usize::MAX);
        for j in 0..n {
            if j == i {
                continue;
            }
            let d2 = (latents.row(i) - latents.row(j)).norm_squared();
            if d2 < best.0 {
                best = (d2, j);
            }
        }
        out.push(best.1);
    }
    Ok(out)
}

/// Number of points whose nearest neighbor carries a different label.
pub fn nn_mismatch_count(latents: &DMatrix<f64>, labels: Option<&[u8]>) -> Result<usize> {
    let labels = labels.ok_or(Error::MissingLabels)?;
    if labels.len() != latents.nrows() {
        return Err(Error::DimensionMismatch {
            expected: format!("{} labels", latents.nrows()),
            found: format!("{}", labels.len()),
        });
    }
    let nn = nearest_neighbors(latents)?;
    Ok(nn
        .iter()
        .enumerate()
        .filter(|&(i, &j)| labels[i] != labels[j])
        .count())
}

/// Equal-width bins over `[min, max]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramSpec {
    pub bin_edges: Vec<f64>,
    pub counts: Vec<usize>,
}

impl HistogramSpec {
    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }
}

/// Bins are right-closed `(e_k, e_{k+1}]`, and the first bin also holds the
/// minimum. Constant input gets the unit-width range `[v − ½, v + ½]`.
pub fn histogram(values: &[f64], n_bins: usize) -> Result<HistogramSpec> {
    if values.is_empty() {
        return Err(Error::EmptyInput);
    }
    if n_bins == 0 {
        return Err(Error::InvalidDimensions(
            "histogram needs at least one bin".into(),
        ));
    }
    if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
        return Err(Error::InvalidParameter {
            name: "histogram value",
            value: *bad,
            reason: "must be finite",
        });
    }
    let mut lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let mut hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if lo == hi {
        lo -= 0.5;
        hi += 0.5;
    }
    let width = (hi - lo) / n_bins as f64;
    let mut bin_edges: Vec<f64> = (0..=n_bins).map(|k| lo + width * k as f64).collect();
    bin_edges[n_bins] = hi;
    let mut counts = vec![0usize; n_bins];
    for &v in values {
        // First edge at or above v, so v lands in (e_{k−1}, e_k].
        let k = bin_edges.partition_point(|&e| e < v);
        counts[k.saturating_sub(1).min(n_bins - 1)] += 1;
    }
    Ok(HistogramSpec { bin_edges, counts })
}
