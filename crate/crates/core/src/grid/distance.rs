//! Sub-image distance and the similarity tensor built from it.
//!
//! The distance is `w_emd · emd + w_struct · (1 − NCC)`:
//! * `emd` is the mean over R, G, B of the 1D earthmover distance between
//!   per-channel histograms, i.e. the L1 distance of the cumulative
//!   histograms normalised to `[0, 1]`;
//! * NCC is the normalized cross-correlation of the grayscale tiles.
//!
//! Grayscale uses integer luma `299R + 587G + 114B` so all moments are exact
//! integers; only the final ratio touches floating point.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{all_cells, GridImage, SimilarityTensor, SubImage};
use crate::error::{Error, Result};

/// Luma of a full-intensity white pixel.
const LUMA_SCALE: i128 = 255_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DistanceConfig {
    /// Histogram bins per channel.
    pub hist_bins: usize,
    /// Weight on the histogram earthmover term.
    pub w_emd: f64,
    /// Weight on the structural (1 − NCC) term.
    pub w_struct: f64,
}

impl Default for DistanceConfig {
    fn default() -> Self {
        DistanceConfig {
            hist_bins: 16,
            w_emd: 0.5,
            w_struct: 0.5,
        }
    }
}

impl DistanceConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hist_bins < 2 || self.hist_bins > 256 {
            return Err(Error::Config(format!(
                "hist_bins must be in [2, 256], got {}",
                self.hist_bins
            )));
        }
        let finite_nonneg = |w: f64| w.is_finite() && w >= 0.0;
        if !finite_nonneg(self.w_emd) || !finite_nonneg(self.w_struct) {
            return Err(Error::Config(format!(
                "distance weights must be finite and nonnegative (w_emd={}, w_struct={})",
                self.w_emd, self.w_struct
            )));
        }
        if self.w_emd + self.w_struct <= 0.0 {
            return Err(Error::Config("w_emd + w_struct must be positive".into()));
        }
        Ok(())
    }
}

/// A symmetric, nonnegative dissimilarity between equally sized sub-images.
///
/// Implementations must return 0 for identical inputs.
pub trait SubImageMetric: Sync {
    fn distance(&self, a: &SubImage, b: &SubImage) -> Result<f64>;
}

impl SubImageMetric for DistanceConfig {
    fn distance(&self, a: &SubImage, b: &SubImage) -> Result<f64> {
        distance(a, b, self)
    }
}

pub fn distance(a: &SubImage, b: &SubImage, cfg: &DistanceConfig) -> Result<f64> {
    cfg.validate()?;
    if a.size() != b.size() {
        return Err(Error::Shape(format!(
            "cannot compare a {0}x{0} tile with a {1}x{1} tile",
            a.size(),
            b.size()
        )));
    }
    // Canonical argument order makes the result exactly symmetric.
    let (a, b) = if a.pixels() <= b.pixels() { (a, b) } else { (b, a) };
    if a.pixels() == b.pixels() {
        return Ok(0.0);
    }
    let emd = histogram_emd(a.pixels(), b.pixels(), cfg.hist_bins);
    let structural = 1.0 - ncc(a.pixels(), b.pixels());
    Ok(cfg.w_emd * emd + cfg.w_struct * structural.clamp(0.0, 1.0))
}

fn histogram_emd(a: &[u8], b: &[u8], bins: usize) -> f64 {
    let count = (a.len() / 3) as u64;
    let mut total = 0.0;
    for ch in 0..3 {
        let ha = channel_histogram(a, ch, bins);
        let hb = channel_histogram(b, ch, bins);
        let (mut ca, mut cb, mut l1) = (0u64, 0u64, 0u64);
        // The last cumulative bin always equals `count` for both tiles.
        for i in 0..bins - 1 {
            ca += ha[i];
            cb += hb[i];
            l1 += ca.abs_diff(cb);
        }
        total += l1 as f64 / (count * (bins as u64 - 1)) as f64;
    }
    total / 3.0
}

fn channel_histogram(px: &[u8], ch: usize, bins: usize) -> Vec<u64> {
    let mut h = vec![0u64; bins];
    for p in px.chunks_exact(3) {
        h[p[ch] as usize * bins / 256] += 1;
    }
    h
}

#[inline]
fn luma(p: &[u8]) -> i128 {
    299 * p[0] as i128 + 587 * p[1] as i128 + 114 * p[2] as i128
}

/// Normalized cross-correlation of grayscale tiles.
///
/// Zero-variance tiles: 1 if mean intensities differ by less than 1/255, else 0.
fn ncc(a: &[u8], b: &[u8]) -> f64 {
    let n = (a.len() / 3) as i128;
    let (mut sx, mut sy, mut sxx, mut syy, mut sxy) = (0i128, 0i128, 0i128, 0i128, 0i128);
    for (pa, pb) in a.chunks_exact(3).zip(b.chunks_exact(3)) {
        let (x, y) = (luma(pa), luma(pb));
        sx += x;
        sy += y;
        sxx += x * x;
        syy += y * y;
        sxy += x * y;
    }
    let var_a = n * sxx - sx * sx;
    let var_b = n * syy - sy * sy;
    if var_a == 0 || var_b == 0 {
        // |mean_a − mean_b| < LUMA_SCALE / 255, scaled by n
        return if (sx - sy).abs() * 255 < LUMA_SCALE * n { 1.0 } else { 0.0 };
    }
    let cov = n * sxy - sx * sy;
    cov as f64 / ((var_a as f64).sqrt() * (var_b as f64).sqrt())
}

pub fn build_similarity_tensor(img: &GridImage, eps: f64, cfg: &DistanceConfig) -> Result<SimilarityTensor> {
    cfg.validate()?;
    build_similarity_tensor_with(img, eps, cfg)
}

/// `bits[p, q] = 1` iff `metric(x_p, x_q) ≤ eps`.
///
/// Each unordered pair is evaluated once and mirrored. Pairs are independent,
/// so the result does not depend on how many threads evaluate them.
pub fn build_similarity_tensor_with<D: SubImageMetric + ?Sized>(
    img: &GridImage,
    eps: f64,
    metric: &D,
) -> Result<SimilarityTensor> {
    if !(eps >= 0.0) || !eps.is_finite() {
        return Err(Error::Config(format!("eps must be finite and nonnegative, got {eps}")));
    }
    let n = img.grid_n();
    let cells: Vec<SubImage> = all_cells(n).map(|c| img.subimage(c)).collect::<Result<_>>()?;
    let count = cells.len();
    let upper: Vec<Vec<bool>> = (0..count)
        .into_par_iter()
        .map(|p| {
            (p + 1..count)
                .map(|q| metric.distance(&cells[p], &cells[q]).map(|d| d <= eps))
                .collect::<Result<Vec<bool>>>()
        })
        .collect::<Result<_>>()?;

    let mut tensor = SimilarityTensor::zeros(n);
    for (p, row) in upper.iter().enumerate() {
        tensor.set_linear(p, p, true);
        for (offset, &similar) in row.iter().enumerate() {
            if similar {
                let q = p + 1 + offset;
                tensor.set_linear(p, q, true);
                tensor.set_linear(q, p, true);
            }
        }
    }
    Ok(tensor)
}
