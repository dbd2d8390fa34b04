//! Synthetic shapes, camera trajectories and complete scenarios.
//!
//! A scenario bundles a mean shape, its keypoints and label colours, a smooth
//! camera trajectory, the silhouettes seen along it and the keypoint heatmaps
//! a perfect-but-noisy predictor would emit. It stands in for images and a
//! trained network when exercising the pose pipeline end to end.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::camera::CameraPose;
use crate::heatmap::{self, HeatmapSpec, HeatmapStack};
use crate::mesh::{self, ColorMap, KeypointSet, TriMesh};
use crate::raster::{self, Mask};
use crate::rotation::rotation_from_euler;
use crate::{rng, Error, Result, Vec2, Vec3};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShapeKind {
    Icosphere,
    Ellipsoid,
    BirdBlob,
}

impl ShapeKind {
    pub fn name(self) -> &'static str {
        match self {
            ShapeKind::Icosphere => "icosphere",
            ShapeKind::Ellipsoid => "ellipsoid",
            ShapeKind::BirdBlob => "bird_blob",
        }
    }
}

impl fmt::Display for ShapeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ShapeKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "icosphere" => Ok(ShapeKind::Icosphere),
            "ellipsoid" => Ok(ShapeKind::Ellipsoid),
            "bird_blob" => Ok(ShapeKind::BirdBlob),
            other => Err(Error::InvalidParameter(format!("unknown shape {other:?}"))),
        }
    }
}

/// Semi-axes of the elongated ellipsoid.
pub const ELLIPSOID_AXES: [f64; 3] = [1.0, 0.4, 0.4];

/// Closed genus-0 mesh centred at the origin with maximum radius 1.
///
/// All kinds share the subdivided-icosahedron topology:
/// `10·4^k + 2` vertices and `20·4^k` faces.
pub fn make_shape(kind: ShapeKind, subdivisions: usize) -> Result<TriMesh> {
    if subdivisions > 5 {
        return Err(Error::InvalidParameter(format!(
            "subdivisions must be in 0..=5, got {subdivisions}"
        )));
    }
    let (unit, faces) = icosphere(subdivisions);
    let vertices: Vec<Vec3> = match kind {
        ShapeKind::Icosphere => unit,
        // coarse levels have no vertex on the long axis, so rescale as well
        ShapeKind::Ellipsoid => normalize_radius(
            unit.iter()
                .map(|p| {
                    Vec3::new(
                        p.x * ELLIPSOID_AXES[0],
                        p.y * ELLIPSOID_AXES[1],
                        p.z * ELLIPSOID_AXES[2],
                    )
                })
                .collect(),
        ),
        ShapeKind::BirdBlob => normalize_radius(unit.iter().map(bird_blob_point).collect()),
    };
    TriMesh::new(vertices, faces)
}

/// Bumps as (direction, amplitude, angular width); placed off every symmetry
/// plane of the body so that no two views share a silhouette.
const BIRD_BUMPS: [([f64; 3], f64, f64); 3] = [
    ([0.8, 0.55, 0.1], 0.45, 0.12),
    ([-0.9, -0.25, 0.35], 0.35, 0.10),
    ([-0.15, 0.45, 0.88], 0.25, 0.15),
];

fn bird_blob_point(p: &Vec3) -> Vec3 {
    let body = Vec3::new(p.x, 0.5 * p.y, 0.42 * p.z);
    let mut gain = 1.0;
    for (dir, amp, width) in BIRD_BUMPS {
        let d = Vec3::from(dir).normalize();
        gain += amp * (-(1.0 - p.dot(&d)) / width).exp();
    }
    body * gain
}

fn normalize_radius(mut v: Vec<Vec3>) -> Vec<Vec3> {
    let centroid = v.iter().sum::<Vec3>() / v.len() as f64;
    for p in &mut v {
        *p -= centroid;
    }
    let r = v.iter().map(|p| p.norm()).fold(0.0, f64::max);
    for p in &mut v {
        *p /= r;
    }
    v
}

fn icosphere(subdivisions: usize) -> (Vec<Vec3>, Vec<[usize; 3]>) {
    let t = (1.0 + 5f64.sqrt()) / 2.0;
    let mut verts: Vec<Vec3> = [
        (-1.0, t, 0.0),
        (1.0, t, 0.0),
        (-1.0, -t, 0.0),
        (1.0, -t, 0.0),
        (0.0, -1.0, t),
        (0.0, 1.0, t),
        (0.0, -1.0, -t),
        (0.0, 1.0, -t),
        (t, 0.0, -1.0),
        (t, 0.0, 1.0),
        (-t, 0.0, -1.0),
        (-t, 0.0, 1.0),
    ]
    .iter()
    .map(|&(x, y, z)| Vec3::new(x, y, z).normalize())
    .collect();
    let mut faces: Vec<[usize; 3]> = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];
    for _ in 0..subdivisions {
        let mut midpoints: HashMap<(usize, usize), usize> = HashMap::new();
        let mut midpoint = |a: usize, b: usize, verts: &mut Vec<Vec3>| {
            *midpoints.entry((a.min(b), a.max(b))).or_insert_with(|| {
                verts.push(((verts[a] + verts[b]) * 0.5).normalize());
                verts.len() - 1
            })
        };
        let mut next = Vec::with_capacity(faces.len() * 4);
        for [a, b, c] in faces {
            let ab = midpoint(a, b, &mut verts);
            let bc = midpoint(b, c, &mut verts);
            let ca = midpoint(c, a, &mut verts);
            next.extend([[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
        }
        faces = next;
    }
    (verts, faces)
}

/// Smooth camera path: a slow azimuth sweep with small elevation, cyclo,
/// scale and translation oscillations. Consecutive frames differ by well
/// under 5° of rotation.
pub fn make_trajectory(n_frames: usize, seed: u64) -> Result<Vec<CameraPose>> {
    if n_frames == 0 {
        return Err(Error::InvalidParameter(
            "trajectory needs at least one frame".into(),
        ));
    }
    let deg = PI / 180.0;
    let mut rng = rng::stream(seed, 0x7472_616a);
    let az0 = rng.random_range(0.0..2.0 * PI);
    let el0 = rng.random_range(-25.0..25.0) * deg;
    let cyclo0 = rng.random_range(-10.0..10.0) * deg;
    let s0 = rng.random_range(0.6..0.72);
    let phase = rng.random_range(0.0..2.0 * PI);
    let direction = if rng.random_bool(0.5) { 1.0 } else { -1.0 };

    (0..n_frames)
        .map(|k| {
            let k = k as f64;
            let az = az0 + direction * 2.5 * deg * k;
            let el = el0 + 8.0 * deg * (phase + 0.15 * k).sin();
            let cyclo = cyclo0 + 4.0 * deg * (phase + 0.1 * k).cos();
            let s = s0 * (1.0 + 0.04 * (phase + 0.2 * k).sin());
            let t = Vec2::new(0.05 * (0.13 * k + phase).sin(), 0.04 * (0.11 * k).cos());
            CameraPose::new(s, t, rotation_from_euler(az, el, cyclo))
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct ScenarioParams {
    pub shape: ShapeKind,
    pub subdivisions: usize,
    pub n_keypoints: usize,
    pub n_frames: usize,
    pub noise_std: f64,
    pub outlier_rate: f64,
    pub seed: u64,
    /// Silhouette resolution (square).
    pub mask_resolution: usize,
    pub heatmap: HeatmapSpec,
    pub color_epsilon: f64,
}

impl Default for ScenarioParams {
    fn default() -> Self {
        ScenarioParams {
            shape: ShapeKind::BirdBlob,
            subdivisions: 3,
            n_keypoints: 32,
            n_frames: 16,
            noise_std: 0.0,
            outlier_rate: 0.0,
            seed: 0,
            mask_resolution: 128,
            heatmap: HeatmapSpec::default(),
            color_epsilon: 0.05,
        }
    }
}

/// Ground truth and observations for a synthetic sequence.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub mesh: TriMesh,
    pub keypoints: KeypointSet,
    pub cmap: ColorMap,
    pub labels: Vec<usize>,
    pub true_poses: Vec<CameraPose>,
    pub masks: Vec<Mask>,
    pub heatmaps: Vec<HeatmapStack>,
}

pub fn build_scenario(p: &ScenarioParams) -> Result<Scenario> {
    let mesh = make_shape(p.shape, p.subdivisions)?;
    let keypoints = mesh::farthest_point_sampling(&mesh, p.n_keypoints, p.seed)?;
    let cmap = mesh::make_color_map(p.n_keypoints, p.color_epsilon, p.seed)?;
    let labels = mesh::face_labels(&mesh, &keypoints);
    let true_poses = make_trajectory(p.n_frames, p.seed)?;

    let frames: Vec<(Mask, HeatmapStack)> = true_poses
        .par_iter()
        .enumerate()
        .map(|(k, pose)| {
            let mask =
                raster::render_silhouette(&mesh, pose, p.mask_resolution, p.mask_resolution)?;
            let hm = heatmap::synthetic_predictor(
                pose,
                &keypoints,
                &mesh,
                p.noise_std,
                p.outlier_rate,
                rng::child_seed(p.seed, k as u64),
                &p.heatmap,
            )?;
            Ok((mask, hm))
        })
        .collect::<Result<_>>()?;
    let (masks, heatmaps) = frames.into_iter().unzip();

    Ok(Scenario {
        mesh,
        keypoints,
        cmap,
        labels,
        true_poses,
        masks,
        heatmaps,
    })
}

pub const FRAMES_DIR: &str = "frames";

pub fn mask_path(dir: &Path, frame: usize) -> PathBuf {
    dir.join(FRAMES_DIR).join(format!("{frame:04}_mask.pgm"))
}

pub fn heatmap_path(dir: &Path, frame: usize) -> PathBuf {
    dir.join(FRAMES_DIR).join(format!("{frame:04}_hm.kph"))
}

pub(crate) fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::Json {
        path: path.to_path_buf(),
        source: e,
    })?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub(crate) fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Json {
        path: path.to_path_buf(),
        source: e,
    })
}

impl Scenario {
    /// Writes `mesh.obj`, `keypoints.json`, `cmap.json`, `poses.json` and
    /// `frames/NNNN_mask.pgm` / `frames/NNNN_hm.kph`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        let frames = dir.join(FRAMES_DIR);
        fs::create_dir_all(&frames).map_err(|e| Error::io(&frames, e))?;
        mesh::save_obj(&self.mesh, dir.join("mesh.obj"))?;
        write_json(&dir.join("keypoints.json"), &self.keypoints)?;
        write_json(&dir.join("cmap.json"), &self.cmap)?;
        write_json(&dir.join("poses.json"), &self.true_poses)?;
        for (k, (mask, hm)) in self.masks.iter().zip(&self.heatmaps).enumerate() {
            raster::write_pgm(mask, mask_path(dir, k))?;
            heatmap::write_kph(hm, heatmap_path(dir, k))?;
        }
        Ok(())
    }
}

/// A scenario directory as read back from disk. Ground-truth poses and masks
/// are optional so that the same reader serves real observations.
#[derive(Debug, Clone)]
pub struct ScenarioDir {
    pub mesh: TriMesh,
    pub keypoints: KeypointSet,
    pub cmap: Option<ColorMap>,
    pub true_poses: Option<Vec<CameraPose>>,
    pub heatmaps: Vec<HeatmapStack>,
    pub masks: Vec<Option<Mask>>,
}

impl ScenarioDir {
    pub fn load(dir: &Path) -> Result<Self> {
        let mesh = mesh::load_obj(dir.join("mesh.obj"))?;
        let raw: KeypointSet = read_json(&dir.join("keypoints.json"))?;
        let keypoints = KeypointSet::new(raw.indices().to_vec(), mesh.vertices().len())?;
        let cmap_path = dir.join("cmap.json");
        let cmap = if cmap_path.exists() {
            let c: ColorMap = read_json(&cmap_path)?;
            c.validate()?;
            Some(c)
        } else {
            None
        };
        let poses_path = dir.join("poses.json");
        let true_poses = if poses_path.exists() {
            Some(read_json(&poses_path)?)
        } else {
            None
        };

        let mut heatmaps = Vec::new();
        let mut masks = Vec::new();
        loop {
            let hm = heatmap_path(dir, heatmaps.len());
            if !hm.exists() {
                break;
            }
            let mask = mask_path(dir, heatmaps.len());
            masks.push(if mask.exists() {
                Some(raster::read_pgm(&mask)?)
            } else {
                None
            });
            heatmaps.push(heatmap::read_kph(&hm)?);
        }
        if heatmaps.is_empty() {
            let frames = dir.join(FRAMES_DIR);
            return Err(Error::format(frames, "no frames found"));
        }
        if let Some(hm) = heatmaps.iter().find(|h| h.channels() != keypoints.len()) {
            return Err(Error::ShapeMismatch(format!(
                "heatmap has {} channels for {} keypoints",
                hm.channels(),
                keypoints.len()
            )));
        }
        Ok(ScenarioDir {
            mesh,
            keypoints,
            cmap,
            true_poses,
            heatmaps,
            masks,
        })
    }
}
