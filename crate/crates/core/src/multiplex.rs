//! Camera-multiplex fitting against a target silhouette.
//!
//! Each camera of the initial grid is refined independently by a simplex
//! search on the silhouette loss; the best few survive with softmax weights.

use std::cmp::Ordering;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::camera::{multiplex_init, multiplex_weights, CameraPose, DEFAULT_SIGMA};
use crate::mesh::TriMesh;
use crate::metrics::mask_loss;
use crate::optim::nelder_mead;
use crate::raster::{distance_transform, render_silhouette, DistanceField, Mask};
use crate::rotation::{euler_from_rotation, rotation_from_euler};
use crate::{Error, Result, Vec2};

/// Initial simplex offsets for `(s, t_x, t_y, azimuth, elevation, cyclo)`.
pub type SimplexSteps = [f64; 6];

pub const DEFAULT_STEPS: SimplexSteps = [
    0.05,
    0.05,
    0.05,
    15.0 * std::f64::consts::PI / 180.0,
    15.0 * std::f64::consts::PI / 180.0,
    10.0 * std::f64::consts::PI / 180.0,
];

/// Step scale applied on each simplex restart.
const RESTART_SHRINK: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MultiplexConfig {
    pub n_az: usize,
    pub n_el: usize,
    pub prune_to: usize,
    /// Loss evaluations per camera.
    pub opt_budget: usize,
    pub simplex_init_step: SimplexSteps,
    /// Softmax temperature of the surviving cameras' weights.
    pub sigma: f64,
    pub seed: u64,
    /// Square resolution the target is resampled to during the search.
    pub opt_resolution: usize,
}

impl Default for MultiplexConfig {
    fn default() -> Self {
        MultiplexConfig {
            n_az: 8,
            n_el: 5,
            prune_to: 4,
            opt_budget: 300,
            simplex_init_step: DEFAULT_STEPS,
            sigma: DEFAULT_SIGMA,
            seed: 0,
            opt_resolution: 128,
        }
    }
}

impl MultiplexConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_az == 0 || self.n_el == 0 {
            return Err(Error::InvalidParameter(
                "multiplex grid must be non-empty".into(),
            ));
        }
        if self.prune_to == 0 || self.prune_to > self.n_az * self.n_el {
            return Err(Error::InvalidParameter(format!(
                "prune_to must be in [1, {}], got {}",
                self.n_az * self.n_el,
                self.prune_to
            )));
        }
        if self.opt_budget == 0 {
            return Err(Error::InvalidParameter("opt_budget must be >= 1".into()));
        }
        if !(self.sigma > 0.0) {
            return Err(Error::InvalidParameter("sigma must be > 0".into()));
        }
        if self.opt_resolution < 8 {
            return Err(Error::InvalidParameter(
                "opt_resolution must be >= 8".into(),
            ));
        }
        Ok(())
    }
}

fn to_params(pose: &CameraPose) -> [f64; 6] {
    let (az, el, cyclo) = euler_from_rotation(&pose.r);
    [pose.s, pose.t.x, pose.t.y, az, el, cyclo]
}

fn from_params(x: &[f64]) -> Option<CameraPose> {
    CameraPose::new(
        x[0],
        Vec2::new(x[1], x[2]),
        rotation_from_euler(x[3], x[4], x[5]),
    )
    .ok()
}

/// Silhouette loss of a pose against a target and its distance field.
pub fn silhouette_loss(
    mesh: &TriMesh,
    pose: &CameraPose,
    target: &Mask,
    dt: &DistanceField,
) -> Result<f64> {
    let rendered = render_silhouette(mesh, pose, target.width(), target.height())?;
    mask_loss(target, &rendered, dt)
}

/// Refines one camera by a simplex search over scale, translation and the
/// three Euler angles. Returns the best pose seen and its loss, which is
/// never above the loss of `init`.
pub fn optimize_camera(
    init: &CameraPose,
    target: &Mask,
    mesh: &TriMesh,
    budget: usize,
    steps: &SimplexSteps,
) -> Result<(CameraPose, f64)> {
    if target.count() == 0 {
        return Err(Error::EmptyTarget);
    }
    if mesh.faces().is_empty() {
        return Err(Error::EmptyMesh);
    }
    let dt = distance_transform(target);
    let initial_loss = silhouette_loss(mesh, init, target, &dt)?;
    if budget <= 1 {
        return Ok((*init, initial_loss));
    }
    let objective = |x: &[f64]| match from_params(x) {
        Some(pose) => silhouette_loss(mesh, &pose, target, &dt).unwrap_or(f64::INFINITY),
        None => f64::INFINITY,
    };
    // the loss is flat between pixel flips, so a simplex can collapse early;
    // restart around the best point until the budget is spent
    let mut found = nelder_mead(objective, &to_params(init), steps, budget - 1, 1e-12);
    let mut spent = found.evaluations;
    let mut scale = 1.0;
    while spent + steps.len() + 1 < budget - 1 && found.value > 0.0 {
        scale *= RESTART_SHRINK;
        let restart_steps: Vec<f64> = steps.iter().map(|s| s * scale).collect();
        let next = nelder_mead(
            objective,
            &found.x,
            &restart_steps,
            budget - 1 - spent,
            1e-12,
        );
        spent += next.evaluations;
        if next.value < found.value {
            found.x = next.x;
            found.value = next.value;
        }
    }
    // the Euler round trip can move `init` by rounding; keep it exactly when nothing beats it
    match from_params(&found.x) {
        Some(pose) if found.value < initial_loss => Ok((pose, found.value)),
        _ => Ok((*init, initial_loss)),
    }
}

/// Surviving cameras, best first, with their softmax weights.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiplexResult {
    pub cameras: Vec<(CameraPose, f64)>,
    pub weights: Vec<f64>,
}

#[derive(Serialize)]
struct CameraJson<'a> {
    pose: &'a CameraPose,
    loss: f64,
    weight: f64,
}

impl Serialize for MultiplexResult {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let rows: Vec<CameraJson> = self
            .cameras
            .iter()
            .zip(&self.weights)
            .map(|((pose, loss), &weight)| CameraJson {
                pose,
                loss: *loss,
                weight,
            })
            .collect();
        rows.serialize(s)
    }
}

/// Initializes the grid, refines every camera against the target resampled
/// to `opt_resolution`, rescores at the target's own resolution, sorts by
/// (loss, camera index) and keeps the best `prune_to`.
pub fn run_multiplex(
    mesh: &TriMesh,
    target: &Mask,
    cfg: &MultiplexConfig,
) -> Result<MultiplexResult> {
    cfg.validate()?;
    if target.count() == 0 {
        return Err(Error::EmptyTarget);
    }
    let coarse = if target.width() == cfg.opt_resolution && target.height() == cfg.opt_resolution {
        target.clone()
    } else {
        target.resample(cfg.opt_resolution, cfg.opt_resolution)?
    };
    if coarse.count() == 0 {
        return Err(Error::EmptyTarget);
    }
    let dt = distance_transform(target);
    let init = multiplex_init(cfg.n_az, cfg.n_el, cfg.seed)?;
    let mut scored: Vec<(usize, CameraPose, f64)> = init
        .par_iter()
        .enumerate()
        .map(|(k, pose)| {
            let (best, _) =
                optimize_camera(pose, &coarse, mesh, cfg.opt_budget, &cfg.simplex_init_step)?;
            let loss = silhouette_loss(mesh, &best, target, &dt)?;
            Ok((k, best, loss))
        })
        .collect::<Result<_>>()?;
    scored.sort_by(|a, b| match a.2.total_cmp(&b.2) {
        Ordering::Equal => a.0.cmp(&b.0),
        other => other,
    });
    scored.truncate(cfg.prune_to);
    let losses: Vec<f64> = scored.iter().map(|c| c.2).collect();
    let weights = multiplex_weights(&losses, cfg.sigma)?;
    Ok(MultiplexResult {
        cameras: scored.into_iter().map(|(_, p, l)| (p, l)).collect(),
        weights,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rotation::{geodesic_angle, RotMatrix};
    use crate::synth::{make_shape, ShapeKind};

    fn ellipsoid() -> TriMesh {
        make_shape(ShapeKind::Ellipsoid, 3).unwrap()
    }

    #[test]
    fn fixed_point_stays_put() {
        let mesh = ellipsoid();
        let truth = CameraPose::new(
            0.7,
            Vec2::new(0.02, -0.03),
            rotation_from_euler(0.6, 0.3, 0.1),
        )
        .unwrap();
        let target = render_silhouette(&mesh, &truth, 128, 128).unwrap();
        let (pose, loss) = optimize_camera(&truth, &target, &mesh, 100, &DEFAULT_STEPS).unwrap();
        assert_eq!(loss, 0.0);
        assert!((pose.s - truth.s).abs() < 1e-3);
        assert!((pose.t - truth.t).norm() < 1e-3);
        assert!(geodesic_angle(&pose.r, &truth.r) < 1e-3);
    }

    #[test]
    fn ellipsoid_azimuth_offset_recovered() {
        let mesh = ellipsoid();
        let (az, el) = (0.9, 0.2);
        let truth = CameraPose::new(0.7, Vec2::zeros(), rotation_from_euler(az, el, 0.0)).unwrap();
        let target = render_silhouette(&mesh, &truth, 128, 128).unwrap();
        let init = CameraPose::new(
            0.7,
            Vec2::zeros(),
            rotation_from_euler(az + 15f64.to_radians(), el, 0.0),
        )
        .unwrap();
        let dt = distance_transform(&target);
        let before = silhouette_loss(&mesh, &init, &target, &dt).unwrap();
        let (pose, loss) = optimize_camera(&init, &target, &mesh, 500, &DEFAULT_STEPS).unwrap();
        assert!(loss <= before);
        let (found_az, _, _) = euler_from_rotation(&pose.r);
        assert!(
            (found_az - az).abs().to_degrees() < 2.0,
            "azimuth {}",
            found_az.to_degrees()
        );
    }

    #[test]
    fn sphere_scale_and_translation() {
        let mesh = make_shape(ShapeKind::Icosphere, 3).unwrap();
        let truth = CameraPose::new(0.6, Vec2::new(0.1, -0.05), RotMatrix::identity()).unwrap();
        let target = render_silhouette(&mesh, &truth, 128, 128).unwrap();
        let init = CameraPose::new(0.7, Vec2::zeros(), rotation_from_euler(1.0, 0.4, 0.2)).unwrap();
        let (pose, _) = optimize_camera(&init, &target, &mesh, 400, &DEFAULT_STEPS).unwrap();
        assert!((pose.s - truth.s).abs() / truth.s < 0.01, "s {}", pose.s);
        assert!((pose.t - truth.t).norm() < 0.01 * 2.0, "t {:?}", pose.t);
    }

    #[test]
    fn empty_target_rejected() {
        let mesh = ellipsoid();
        let empty = Mask::new(32, 32).unwrap();
        assert!(matches!(
            optimize_camera(&CameraPose::identity(), &empty, &mesh, 10, &DEFAULT_STEPS),
            Err(Error::EmptyTarget)
        ));
        assert!(matches!(
            run_multiplex(&mesh, &empty, &MultiplexConfig::default()),
            Err(Error::EmptyTarget)
        ));
    }

    #[test]
    fn config_validation() {
        let bad = [
            MultiplexConfig {
                prune_to: 41,
                ..Default::default()
            },
            MultiplexConfig {
                prune_to: 0,
                ..Default::default()
            },
            MultiplexConfig {
                opt_budget: 0,
                ..Default::default()
            },
            MultiplexConfig {
                n_az: 0,
                ..Default::default()
            },
        ];
        for cfg in bad {
            assert!(cfg.validate().is_err(), "{cfg:?}");
        }
        assert!(MultiplexConfig::default().validate().is_ok());
    }

    #[test]
    fn pruned_sorted_and_deterministic() {
        let mesh = make_shape(ShapeKind::BirdBlob, 2).unwrap();
        let truth =
            CameraPose::new(0.65, Vec2::zeros(), rotation_from_euler(2.0, 0.3, 0.05)).unwrap();
        let target = render_silhouette(&mesh, &truth, 64, 64).unwrap();
        let cfg = MultiplexConfig {
            opt_budget: 40,
            opt_resolution: 64,
            seed: 3,
            ..Default::default()
        };
        let a = run_multiplex(&mesh, &target, &cfg).unwrap();
        assert_eq!(a.cameras.len(), 4);
        assert!(a.cameras.windows(2).all(|w| w[0].1 <= w[1].1));
        assert!(a.weights.windows(2).all(|w| w[0] >= w[1]));
        assert!((a.weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let b = run_multiplex(&mesh, &target, &cfg).unwrap();
        assert_eq!(a, b);
        let json = serde_json::to_value(&a).unwrap();
        assert_eq!(json.as_array().unwrap().len(), 4);
    }
}
