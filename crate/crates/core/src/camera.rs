//! Scaled-orthographic camera and camera multiplex.
//!
//! Image coordinates are normalized: the frame spans `[−1, 1]²`, x to the
//! right and y down. A `W×H` raster has pixel `(row i, col j)` centred at
//! `x = (2j + 1)/W − 1`, `y = (2i + 1)/H − 1`.

use std::f64::consts::PI;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::rotation::{quat_to_matrix, rotation_from_euler, Quaternion, RotMatrix};
use crate::{rng, Error, Result, Vec2, Vec3};

/// Initial scale of multiplex cameras; a unit-radius shape fits the frame.
pub const INITIAL_SCALE: f64 = 0.7;
/// Elevation range covered by the multiplex grid.
pub const MAX_ELEVATION: f64 = 80.0 * PI / 180.0;
/// Default softmax temperature for camera weights.
pub const DEFAULT_SIGMA: f64 = 0.05;

/// `u = s · (R·X)_xy + t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraPose {
    pub s: f64,
    pub t: Vec2,
    pub r: RotMatrix,
}

impl CameraPose {
    pub fn new(s: f64, t: Vec2, r: RotMatrix) -> Result<Self> {
        if !(s > 0.0) || !s.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "camera scale must be > 0, got {s}"
            )));
        }
        Ok(CameraPose { s, t, r })
    }

    pub fn identity() -> Self {
        CameraPose {
            s: 1.0,
            t: Vec2::zeros(),
            r: RotMatrix::identity(),
        }
    }

    pub fn project_point(&self, x: &Vec3) -> Vec2 {
        let c = self.r.rotate(x);
        Vec2::new(self.s * c.x + self.t.x, self.s * c.y + self.t.y)
    }

    /// Camera-frame depth `(R·X)_z`; larger is closer to the camera.
    pub fn camera_z(&self, x: &Vec3) -> f64 {
        let m = self.r.matrix();
        m[(2, 0)] * x.x + m[(2, 1)] * x.y + m[(2, 2)] * x.z
    }
}

#[derive(Serialize, Deserialize)]
struct PoseJson {
    s: f64,
    t: [f64; 2],
    q: Quaternion,
}

impl Serialize for CameraPose {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        PoseJson {
            s: self.s,
            t: [self.t.x, self.t.y],
            q: self.r.to_quaternion(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for CameraPose {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let p = PoseJson::deserialize(d)?;
        CameraPose::new(p.s, Vec2::new(p.t[0], p.t[1]), quat_to_matrix(&p.q))
            .map_err(serde::de::Error::custom)
    }
}

pub fn project(pose: &CameraPose, points: &[Vec3]) -> Vec<Vec2> {
    points.iter().map(|x| pose.project_point(x)).collect()
}

/// Initial camera multiplex: `n_az × n_el` poses on a jittered grid.
///
/// Azimuths are cell centres of a uniform grid over `[0, 2π)`, elevations cell
/// centres over `[−80°, 80°]`; each is jittered by up to half a cell from the
/// seeded stream. Cyclo-rotation is zero, `s = 0.7`, `t = 0`. Poses are
/// ordered elevation-major.
pub fn multiplex_init(n_az: usize, n_el: usize, seed: u64) -> Result<Vec<CameraPose>> {
    if n_az == 0 || n_el == 0 {
        return Err(Error::InvalidParameter(
            "multiplex grid needs n_az >= 1 and n_el >= 1".into(),
        ));
    }
    let mut rng = rng::stream(seed, 0x6d75_6c74);
    let az_step = 2.0 * PI / n_az as f64;
    let el_step = 2.0 * MAX_ELEVATION / n_el as f64;
    let mut poses = Vec::with_capacity(n_az * n_el);
    for j in 0..n_el {
        for i in 0..n_az {
            let az = (i as f64 + 0.5) * az_step + rng.random_range(-0.5..0.5) * az_step;
            let el =
                -MAX_ELEVATION + (j as f64 + 0.5) * el_step + rng.random_range(-0.5..0.5) * el_step;
            poses.push(CameraPose {
                s: INITIAL_SCALE,
                t: Vec2::zeros(),
                r: rotation_from_euler(az, el, 0.0),
            });
        }
    }
    Ok(poses)
}

/// Softmax camera probabilities `p_k ∝ exp(−L_k / σ)`.
pub fn multiplex_weights(losses: &[f64], sigma: f64) -> Result<Vec<f64>> {
    if losses.is_empty() {
        return Err(Error::EmptyMultiplex);
    }
    if !(sigma > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "sigma must be > 0, got {sigma}"
        )));
    }
    if losses.iter().any(|l| !l.is_finite()) {
        return Err(Error::InvalidParameter(
            "camera losses must be finite".into(),
        ));
    }
    let min = losses.iter().copied().fold(f64::INFINITY, f64::min);
    let exps: Vec<f64> = losses.iter().map(|l| (-(l - min) / sigma).exp()).collect();
    let total: f64 = exps.iter().sum();
    Ok(exps.into_iter().map(|e| e / total).collect())
}

/// Candidate cameras with their losses and softmax temperature.
#[derive(Debug, Clone)]
pub struct Multiplex {
    pub poses: Vec<CameraPose>,
    pub losses: Vec<f64>,
    pub sigma: f64,
}

impl Multiplex {
    pub fn new(poses: Vec<CameraPose>, losses: Vec<f64>, sigma: f64) -> Result<Self> {
        if poses.len() != losses.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} poses but {} losses",
                poses.len(),
                losses.len()
            )));
        }
        if !(sigma > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "sigma must be > 0, got {sigma}"
            )));
        }
        Ok(Multiplex {
            poses,
            losses,
            sigma,
        })
    }

    pub fn weights(&self) -> Result<Vec<f64>> {
        multiplex_weights(&self.losses, self.sigma)
    }

    /// Pose with the lowest loss.
    pub fn best(&self) -> Option<(&CameraPose, f64)> {
        self.losses
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(b.1))
            .map(|(k, &l)| (&self.poses[k], l))
    }
}
