//! Training losses and evaluation metrics.

use serde::{Deserialize, Serialize};

use crate::raster::{ColorImage, DistanceField, Mask};
use crate::rotation::{geodesic_angle, RotMatrix};
use crate::{Error, Result};

/// Tolerance on `Σ p_k = 1`.
pub const WEIGHT_SUM_TOLERANCE: f64 = 1e-9;

fn check_mask_shapes(a: &Mask, b: &Mask) -> Result<()> {
    if a.same_shape(b) {
        Ok(())
    } else {
        Err(Error::ShapeMismatch(format!(
            "{}x{} vs {}x{}",
            a.width(),
            a.height(),
            b.width(),
            b.height()
        )))
    }
}

/// Silhouette loss: mean squared difference plus the mean of the target's
/// distance field over rendered pixels.
pub fn mask_loss(gt: &Mask, rendered: &Mask, dt: &DistanceField) -> Result<f64> {
    check_mask_shapes(gt, rendered)?;
    if dt.width() != gt.width() || dt.height() != gt.height() {
        return Err(Error::ShapeMismatch(format!(
            "distance field {}x{} for {}x{} mask",
            dt.width(),
            dt.height(),
            gt.width(),
            gt.height()
        )));
    }
    let n = gt.bits().len() as f64;
    let mut diff = 0usize;
    let mut penalty = 0.0;
    for ((&g, &r), &d) in gt.bits().iter().zip(rendered.bits()).zip(dt.values()) {
        diff += (g != r) as usize;
        if r {
            penalty += d;
        }
    }
    Ok(diff as f64 / n + penalty / n)
}

/// Mean absolute per-channel difference over the foreground of `gt_mask`.
pub fn pixel_loss(image: &ColorImage, rendered: &ColorImage, gt_mask: &Mask) -> Result<f64> {
    let (w, h) = (image.width(), image.height());
    if rendered.width() != w
        || rendered.height() != h
        || gt_mask.width() != w
        || gt_mask.height() != h
    {
        return Err(Error::ShapeMismatch(format!(
            "image {w}x{h}, rendered {}x{}, mask {}x{}",
            rendered.width(),
            rendered.height(),
            gt_mask.width(),
            gt_mask.height()
        )));
    }
    let fg = gt_mask.count();
    if fg == 0 {
        return Err(Error::EmptyForeground);
    }
    let mut sum = 0.0;
    for ((a, b), &on) in image
        .pixels()
        .iter()
        .zip(rendered.pixels())
        .zip(gt_mask.bits())
    {
        if on {
            sum += (a[0] - b[0]).abs() + (a[1] - b[1]).abs() + (a[2] - b[2]).abs();
        }
    }
    Ok(sum / (3 * fg) as f64)
}

/// Loss terms with the multiplex-weighted total.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    /// `Σ p_k · mask_k`
    pub mask: f64,
    /// `Σ p_k · pixel_k`
    pub pixel: f64,
    pub def: f64,
    pub lap: f64,
    pub total: f64,
}

/// `Σ_k p_k (mask_k + pixel_k) + def + lap`, with `per_camera[k] = (mask_k, pixel_k)`.
pub fn total_loss(
    per_camera: &[(f64, f64)],
    weights: &[f64],
    def: f64,
    lap: f64,
) -> Result<LossBreakdown> {
    if per_camera.len() != weights.len() || weights.is_empty() {
        return Err(Error::WeightMismatch(format!(
            "{} cameras, {} weights",
            per_camera.len(),
            weights.len()
        )));
    }
    let sum: f64 = weights.iter().sum();
    if (sum - 1.0).abs() > WEIGHT_SUM_TOLERANCE || weights.iter().any(|&p| p < 0.0) {
        return Err(Error::WeightMismatch(format!("weights sum to {sum}")));
    }
    let (mut mask, mut pixel, mut camera) = (0.0, 0.0, 0.0);
    for (&(m, px), &p) in per_camera.iter().zip(weights) {
        mask += p * m;
        pixel += p * px;
        camera += p * (m + px);
    }
    Ok(LossBreakdown {
        mask,
        pixel,
        def,
        lap,
        total: camera + def + lap,
    })
}

/// Intersection over union; two empty masks score 1.
pub fn iou(a: &Mask, b: &Mask) -> Result<f64> {
    check_mask_shapes(a, b)?;
    let (mut inter, mut union) = (0usize, 0usize);
    for (&x, &y) in a.bits().iter().zip(b.bits()) {
        inter += (x && y) as usize;
        union += (x || y) as usize;
    }
    Ok(if union == 0 {
        1.0
    } else {
        inter as f64 / union as f64
    })
}

pub fn angular_error_deg(predicted: &RotMatrix, truth: &RotMatrix) -> f64 {
    geodesic_angle(predicted, truth).to_degrees()
}

/// Video segmentation summary of a per-frame IoU sequence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JaccardReport {
    pub mean: f64,
    pub recall: f64,
    pub decay: f64,
    pub per_frame: Vec<f64>,
}

pub const DEFAULT_RECALL_THRESHOLD: f64 = 0.5;

/// Mean, recall above `threshold`, and decay between the first and last
/// quarter of the sequence. Quarters follow the usual benchmark split: four
/// contiguous bins, the first `n mod 4` of which get one extra frame. With
/// fewer than four frames decay compares the first and last frame.
pub fn jaccard_stats(per_frame: &[f64], threshold: f64) -> Result<JaccardReport> {
    if per_frame.is_empty() {
        return Err(Error::EmptySequence);
    }
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "recall threshold must be in (0, 1), got {threshold}"
        )));
    }
    let n = per_frame.len();
    let mean = per_frame.iter().sum::<f64>() / n as f64;
    let recall = per_frame.iter().filter(|&&v| v > threshold).count() as f64 / n as f64;
    let decay = if n < 4 {
        per_frame[0] - per_frame[n - 1]
    } else {
        let (base, extra) = (n / 4, n % 4);
        let first = &per_frame[..base + (extra > 0) as usize];
        let last = &per_frame[n - base..];
        let avg = |s: &[f64]| s.iter().sum::<f64>() / s.len() as f64;
        avg(first) - avg(last)
    };
    Ok(JaccardReport {
        mean,
        recall,
        decay,
        per_frame: per_frame.to_vec(),
    })
}
