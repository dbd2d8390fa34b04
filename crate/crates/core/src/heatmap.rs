//! Keypoint heatmaps: proxy targets, visibility weights, loss and decoding.

use std::fs;
use std::path::Path;

use rand::seq::index;
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::camera::{project, CameraPose};
use crate::mesh::{color_distance, ColorMap, KeypointSet, TriMesh};
use crate::raster::{self, pixel_center, pixel_of, BACKGROUND};
use crate::{rng, Error, Result, Vec2};

/// Heatmap grid and Gaussian width (normalized image units).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HeatmapSpec {
    pub width: usize,
    pub height: usize,
    pub sigma: f64,
}

impl Default for HeatmapSpec {
    fn default() -> Self {
        HeatmapSpec {
            width: 64,
            height: 64,
            sigma: 0.05,
        }
    }
}

impl HeatmapSpec {
    pub fn new(width: usize, height: usize, sigma: f64) -> Result<Self> {
        let spec = HeatmapSpec {
            width,
            height,
            sigma,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.width < 8 || self.height < 8 {
            return Err(Error::InvalidParameter(format!(
                "heatmap resolution must be at least 8x8, got {}x{}",
                self.width, self.height
            )));
        }
        if !(self.sigma > 0.0) || !self.sigma.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "heatmap sigma must be > 0, got {}",
                self.sigma
            )));
        }
        Ok(())
    }
}

/// `channels` heatmaps of `width × height`, channel-major then row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct HeatmapStack {
    channels: usize,
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl HeatmapStack {
    pub fn zeros(channels: usize, width: usize, height: usize) -> Self {
        HeatmapStack {
            channels,
            width,
            height,
            data: vec![0.0; channels * width * height],
        }
    }

    pub fn from_data(channels: usize, width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != channels * width * height {
            return Err(Error::ShapeMismatch(format!(
                "{} values for {channels}x{width}x{height}",
                data.len()
            )));
        }
        Ok(HeatmapStack {
            channels,
            width,
            height,
            data,
        })
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channel(&self, c: usize) -> &[f64] {
        let n = self.width * self.height;
        &self.data[c * n..(c + 1) * n]
    }

    pub fn channel_mut(&mut self, c: usize) -> &mut [f64] {
        let n = self.width * self.height;
        &mut self.data[c * n..(c + 1) * n]
    }

    pub fn get(&self, c: usize, row: usize, col: usize) -> f64 {
        self.data[(c * self.height + row) * self.width + col]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    fn same_shape(&self, other: &HeatmapStack) -> bool {
        self.channels == other.channels && self.width == other.width && self.height == other.height
    }
}

/// Per-keypoint visibility gate.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WeightMask(pub Vec<bool>);

impl WeightMask {
    pub fn all(n: usize) -> Self {
        WeightMask(vec![true; n])
    }
}

/// Channel `i` holds `exp(−‖[x, y] − u_i‖² / 2σ²)` at every pixel centre.
pub fn proxy_heatmaps(kp2d: &[Vec2], spec: &HeatmapSpec) -> Result<HeatmapStack> {
    spec.validate()?;
    let (w, h) = (spec.width, spec.height);
    let inv = 1.0 / (2.0 * spec.sigma * spec.sigma);
    let mut stack = HeatmapStack::zeros(kp2d.len(), w, h);
    for (c, u) in kp2d.iter().enumerate() {
        let channel = stack.channel_mut(c);
        for i in 0..h {
            for j in 0..w {
                let d = pixel_center(i, j, w, h) - u;
                channel[i * w + j] = (-(d.norm_squared()) * inv).exp();
            }
        }
    }
    Ok(stack)
}

/// Visibility of each keypoint: render the label colours, sample the pixel
/// under the projected keypoint and accept it if the colour is within
/// `cmap.epsilon` of the keypoint's own colour. Off-frame or background
/// samples are rejected.
pub fn weight_mask(
    pose: &CameraPose,
    kp: &KeypointSet,
    mesh: &TriMesh,
    labels: &[usize],
    cmap: &ColorMap,
    width: usize,
    height: usize,
) -> Result<WeightMask> {
    if cmap.len() < kp.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} colours for {} keypoints",
            cmap.len(),
            kp.len()
        )));
    }
    let image = raster::render_labels(mesh, pose, labels, cmap, width, height)?;
    let projected = project(pose, &kp.positions(mesh));
    let gate = projected
        .iter()
        .enumerate()
        .map(|(i, u)| match pixel_of(u, width, height) {
            None => false,
            Some((row, col)) => {
                let sampled = image.get(row, col);
                sampled != BACKGROUND && color_distance(&sampled, &cmap.colors[i]) < cmap.epsilon
            }
        })
        .collect();
    Ok(WeightMask(gate))
}

/// `Σ_i w_i · mean_pixels (proxy_i − pred_i)²`.
pub fn keypoint_loss(
    pred: &HeatmapStack,
    proxy: &HeatmapStack,
    weights: &WeightMask,
) -> Result<f64> {
    if !pred.same_shape(proxy) || weights.0.len() != pred.channels {
        return Err(Error::ShapeMismatch(format!(
            "prediction {}x{}x{}, proxy {}x{}x{}, {} weights",
            pred.channels,
            pred.width,
            pred.height,
            proxy.channels,
            proxy.width,
            proxy.height,
            weights.0.len()
        )));
    }
    let n = (pred.width * pred.height) as f64;
    let mut total = 0.0;
    for (c, &on) in weights.0.iter().enumerate() {
        if !on {
            continue;
        }
        let sq: f64 = pred
            .channel(c)
            .iter()
            .zip(proxy.channel(c))
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        total += sq / n;
    }
    Ok(total)
}

/// Peak position (normalized coordinates) and score of every channel.
///
/// The integer peak is the first maximum in row-major order. It is refined
/// per axis by fitting a parabola to the logarithm of the peak and its two
/// neighbours, which is exact for sampled Gaussians. Where that fit is not
/// available (a neighbour outside the grid or not positive, or a flat top)
/// the 3×3 value-weighted centroid is used instead. An all-zero channel
/// decodes to the frame centre with score 0.
pub fn decode_keypoints(hm: &HeatmapStack) -> (Vec<Vec2>, Vec<f64>) {
    let (w, h) = (hm.width, hm.height);
    let mut points = Vec::with_capacity(hm.channels);
    let mut scores = Vec::with_capacity(hm.channels);
    for c in 0..hm.channels {
        let ch = hm.channel(c);
        let (mut best, mut at) = (f64::NEG_INFINITY, 0);
        for (k, &v) in ch.iter().enumerate() {
            if v > best {
                best = v;
                at = k;
            }
        }
        if !(best > 0.0) {
            points.push(Vec2::zeros());
            scores.push(0.0);
            continue;
        }
        let (row, col) = (at / w, at % w);
        let value = |i: isize, j: isize| -> Option<f64> {
            (i >= 0 && j >= 0 && (i as usize) < h && (j as usize) < w)
                .then(|| ch[i as usize * w + j as usize])
        };
        let (r, q) = (row as isize, col as isize);
        let fit = log_parabola(value(r, q - 1), best, value(r, q + 1)).zip(log_parabola(
            value(r - 1, q),
            best,
            value(r + 1, q),
        ));
        let (dx, dy) = fit.unwrap_or_else(|| {
            let (mut sx, mut sy, mut sw) = (0.0, 0.0, 0.0);
            for di in -1..=1 {
                for dj in -1..=1 {
                    if let Some(v) = value(r + di, q + dj) {
                        let v = v.max(0.0);
                        sx += v * dj as f64;
                        sy += v * di as f64;
                        sw += v;
                    }
                }
            }
            (sx / sw, sy / sw)
        });
        let px = Vec2::new(col as f64 + 0.5 + dx, row as f64 + 0.5 + dy);
        points.push(Vec2::new(
            2.0 * px.x / w as f64 - 1.0,
            2.0 * px.y / h as f64 - 1.0,
        ));
        scores.push(best);
    }
    (points, scores)
}

/// Sub-pixel offset of the vertex of the parabola through
/// `(−1, ln a), (0, ln b), (1, ln c)`, clamped to one pixel.
fn log_parabola(a: Option<f64>, b: f64, c: Option<f64>) -> Option<f64> {
    let (a, c) = (a?, c?);
    if !(a > 0.0 && c > 0.0) {
        return None;
    }
    let (la, lb, lc) = (a.ln(), b.ln(), c.ln());
    let curvature = la - 2.0 * lb + lc;
    if !(curvature < 0.0) || !curvature.is_finite() {
        return None;
    }
    Some((0.5 * (la - lc) / curvature).clamp(-1.0, 1.0))
}

/// Keypoint positions a noisy predictor would report, with outlier flags.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticKeypoints {
    pub points: Vec<Vec2>,
    pub outliers: Vec<bool>,
}

/// Projects the keypoints with `pose_true`, adds isotropic Gaussian noise of
/// standard deviation `noise_std` and replaces `round(outlier_rate · N)`
/// seeded keypoints by uniform positions in the frame.
pub fn synthetic_keypoints(
    pose_true: &CameraPose,
    kp: &KeypointSet,
    mesh: &TriMesh,
    noise_std: f64,
    outlier_rate: f64,
    seed: u64,
) -> Result<SyntheticKeypoints> {
    if !(noise_std >= 0.0) || !noise_std.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "noise_std must be >= 0, got {noise_std}"
        )));
    }
    if !(0.0..1.0).contains(&outlier_rate) {
        return Err(Error::InvalidParameter(format!(
            "outlier_rate must be in [0, 1), got {outlier_rate}"
        )));
    }
    let mut rng = rng::stream(seed, 0x6b70_7072);
    let noise = Normal::new(0.0, noise_std).map_err(|e| Error::InvalidParameter(e.to_string()))?;
    let mut points = project(pose_true, &kp.positions(mesh));
    for p in &mut points {
        p.x += noise.sample(&mut rng);
        p.y += noise.sample(&mut rng);
    }
    let n = points.len();
    let n_out = (outlier_rate * n as f64).round() as usize;
    let mut outliers = vec![false; n];
    for i in index::sample(&mut rng, n, n_out.min(n)).into_vec() {
        outliers[i] = true;
        points[i] = Vec2::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
    }
    Ok(SyntheticKeypoints { points, outliers })
}

/// Heatmaps of [`synthetic_keypoints`]; a stand-in for a trained keypoint network.
pub fn synthetic_predictor(
    pose_true: &CameraPose,
    kp: &KeypointSet,
    mesh: &TriMesh,
    noise_std: f64,
    outlier_rate: f64,
    seed: u64,
    spec: &HeatmapSpec,
) -> Result<HeatmapStack> {
    let sk = synthetic_keypoints(pose_true, kp, mesh, noise_std, outlier_rate, seed)?;
    proxy_heatmaps(&sk.points, spec)
}

const KPH_MAGIC: &str = "KPH1";

/// `KPH1 <N> <w> <h>\n` followed by little-endian f32 samples.
pub fn encode_kph(stack: &HeatmapStack) -> Vec<u8> {
    let header = format!(
        "{KPH_MAGIC} {} {} {}\n",
        stack.channels, stack.width, stack.height
    );
    let mut out = Vec::with_capacity(header.len() + 4 * stack.data.len());
    out.extend_from_slice(header.as_bytes());
    for &v in &stack.data {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    out
}

pub fn decode_kph(bytes: &[u8]) -> std::result::Result<HeatmapStack, String> {
    let nl = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or("missing KPH1 header line")?;
    let header = std::str::from_utf8(&bytes[..nl]).map_err(|_| "header is not ASCII")?;
    let fields: Vec<&str> = header.split(' ').collect();
    if fields.len() != 4 || fields[0] != KPH_MAGIC {
        return Err(format!("bad header {header:?}"));
    }
    let dims: Vec<usize> = fields[1..]
        .iter()
        .map(|f| f.parse().map_err(|_| format!("bad header field {f:?}")))
        .collect::<std::result::Result<_, _>>()?;
    let (n, w, h) = (dims[0], dims[1], dims[2]);
    let body = &bytes[nl + 1..];
    let count = n * w * h;
    if body.len() != 4 * count {
        return Err(format!(
            "expected {} bytes of samples, found {}",
            4 * count,
            body.len()
        ));
    }
    let data = body
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect();
    Ok(HeatmapStack {
        channels: n,
        width: w,
        height: h,
        data,
    })
}

pub fn write_kph(stack: &HeatmapStack, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_kph(stack)).map_err(|e| Error::io(path, e))
}

pub fn read_kph(path: impl AsRef<Path>) -> Result<HeatmapStack> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_kph(&bytes).map_err(|m| Error::format(path, m))
}
