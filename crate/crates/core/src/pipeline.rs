//! Per-frame pose estimation from keypoint heatmaps, and its evaluation.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::camera::CameraPose;
use crate::heatmap::{decode_keypoints, HeatmapStack};
use crate::mesh::TriMesh;
use crate::metrics::{angular_error_deg, iou, jaccard_stats, JaccardReport};
use crate::pnp::{ransac_pnp, Correspondences, RansacParams};
use crate::raster::{render_silhouette, Mask};
use crate::{rng, Error, Result, Vec3};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoseOptions {
    /// Decoded keypoints scoring below this are dropped before RANSAC.
    pub score_floor: f64,
    /// Keep only the best-scoring keypoints; `None` keeps all above the floor.
    pub top_k: Option<usize>,
    /// `seed` is the base seed; frame `k` uses a child seed.
    pub ransac: RansacParams,
}

impl Default for PoseOptions {
    fn default() -> Self {
        PoseOptions {
            score_floor: 0.1,
            top_k: None,
            ransac: RansacParams::default(),
        }
    }
}

/// Decoded keypoints paired with their model positions, filtered per `opts`.
pub fn frame_correspondences(
    hm: &HeatmapStack,
    model: &[Vec3],
    opts: &PoseOptions,
) -> Result<Correspondences> {
    if hm.channels() != model.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} heatmap channels for {} keypoints",
            hm.channels(),
            model.len()
        )));
    }
    let (points, scores) = decode_keypoints(hm);
    let all = Correspondences::new(model.to_vec(), points, scores)?;
    let kept = all.filter_by_score(opts.score_floor);
    Ok(match opts.top_k {
        Some(k) => kept.top_k(k),
        None => kept,
    })
}

/// Pose of one frame with the inlier flags over the kept correspondences.
#[derive(Debug, Clone, PartialEq)]
pub struct FramePose {
    pub pose: CameraPose,
    pub inliers: usize,
    pub used: usize,
}

pub fn estimate_frame(
    hm: &HeatmapStack,
    model: &[Vec3],
    opts: &PoseOptions,
    frame: usize,
) -> Result<FramePose> {
    let c = frame_correspondences(hm, model, opts)?;
    let params = RansacParams {
        seed: rng::child_seed(opts.ransac.seed, frame as u64),
        ..opts.ransac
    };
    let (pose, flags) = ransac_pnp(&c, &params)?;
    Ok(FramePose {
        pose,
        inliers: flags.iter().filter(|&&f| f).count(),
        used: c.len(),
    })
}

/// Every frame independently; results are in frame order.
pub fn estimate_poses(
    heatmaps: &[HeatmapStack],
    model: &[Vec3],
    opts: &PoseOptions,
) -> Vec<Result<FramePose>> {
    heatmaps
        .par_iter()
        .enumerate()
        .map(|(k, hm)| estimate_frame(hm, model, opts, k))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameEval {
    pub frame: usize,
    pub iou: Option<f64>,
    pub angular_error_deg: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JaccardSummary {
    pub mean: f64,
    pub recall: f64,
    pub decay: f64,
}

impl From<&JaccardReport> for JaccardSummary {
    fn from(r: &JaccardReport) -> Self {
        JaccardSummary {
            mean: r.mean,
            recall: r.recall,
            decay: r.decay,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub mean_iou: Option<f64>,
    /// Mean over frames with both a prediction and a ground-truth pose.
    pub angular_error_deg: Option<f64>,
    pub median_angular_error_deg: Option<f64>,
    pub jaccard: Option<JaccardSummary>,
    /// Frames without a predicted pose; they score IoU 0.
    pub failed_frames: usize,
    pub per_frame: Vec<FrameEval>,
}

pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    })
}

/// What the predictions are compared against, frame by frame.
pub struct GroundTruth<'a> {
    pub mesh: &'a TriMesh,
    pub poses: Option<&'a [CameraPose]>,
    pub masks: &'a [Option<Mask>],
}

/// Compares predictions with ground truth. Silhouettes of the predicted poses
/// are rendered at `resolution` (square) when given, else at the stored mask
/// resolution; stored masks are resampled to match.
pub fn evaluate(
    predicted: &[Option<CameraPose>],
    truth: &GroundTruth,
    resolution: Option<usize>,
    recall_threshold: f64,
) -> Result<EvalReport> {
    if predicted.is_empty() {
        return Err(Error::EmptySequence);
    }
    if let Some(p) = truth.poses {
        if p.len() != predicted.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} predicted poses, {} ground-truth poses",
                predicted.len(),
                p.len()
            )));
        }
    }
    if !truth.masks.is_empty() && truth.masks.len() != predicted.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} predicted poses, {} masks",
            predicted.len(),
            truth.masks.len()
        )));
    }

    let per_frame: Vec<FrameEval> = predicted
        .par_iter()
        .enumerate()
        .map(|(k, pred)| {
            let gt_pose = truth.poses.map(|p| &p[k]);
            let angular_error_deg = match (pred, gt_pose) {
                (Some(p), Some(g)) => Some(angular_error_deg(&p.r, &g.r)),
                _ => None,
            };
            let stored = truth.masks.get(k).and_then(|m| m.as_ref());
            let gt_mask = match (stored, resolution, gt_pose) {
                (Some(m), Some(r), _) if m.width() != r || m.height() != r => {
                    Some(m.resample(r, r)?)
                }
                (Some(m), _, _) => Some(m.clone()),
                (None, r, Some(g)) => {
                    let r = r.unwrap_or(128);
                    Some(render_silhouette(truth.mesh, g, r, r)?)
                }
                (None, _, None) => None,
            };
            let iou = match (gt_mask, pred) {
                (Some(gt), Some(p)) => Some(iou(
                    &gt,
                    &render_silhouette(truth.mesh, p, gt.width(), gt.height())?,
                )?),
                (Some(_), None) => Some(0.0),
                (None, _) => None,
            };
            Ok(FrameEval {
                frame: k,
                iou,
                angular_error_deg,
            })
        })
        .collect::<Result<_>>()?;

    let ious: Vec<f64> = per_frame.iter().filter_map(|f| f.iou).collect();
    let errors: Vec<f64> = per_frame
        .iter()
        .filter_map(|f| f.angular_error_deg)
        .collect();
    let jaccard = if ious.is_empty() {
        None
    } else {
        Some(jaccard_stats(&ious, recall_threshold)?)
    };
    Ok(EvalReport {
        mean_iou: jaccard.as_ref().map(|j| j.mean),
        angular_error_deg: (!errors.is_empty())
            .then(|| errors.iter().sum::<f64>() / errors.len() as f64),
        median_angular_error_deg: median(&errors),
        jaccard: jaccard.as_ref().map(JaccardSummary::from),
        failed_frames: predicted.iter().filter(|p| p.is_none()).count(),
        per_frame,
    })
}
