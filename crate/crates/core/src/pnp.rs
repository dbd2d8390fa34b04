//! Scaled-orthographic pose from 2D–3D correspondences, direct and robust.

use nalgebra::{Matrix2x3, Matrix3, SymmetricEigen};
use rand::seq::index;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::camera::CameraPose;
use crate::rotation::RotMatrix;
use crate::{rng, Error, Result, Vec2, Vec3};

/// Relative covariance eigenvalue below which the 3D points are treated as
/// lying on a line (second eigenvalue) or a plane (third eigenvalue).
const FLATNESS: f64 = 1e-10;

/// Paired model points, image points and decoder confidences.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Correspondences {
    pub points3: Vec<Vec3>,
    pub points2: Vec<Vec2>,
    pub scores: Vec<f64>,
}

impl Correspondences {
    pub fn new(points3: Vec<Vec3>, points2: Vec<Vec2>, scores: Vec<f64>) -> Result<Self> {
        if points3.len() != points2.len() || points3.len() != scores.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} model points, {} image points, {} scores",
                points3.len(),
                points2.len(),
                scores.len()
            )));
        }
        Ok(Correspondences {
            points3,
            points2,
            scores,
        })
    }

    pub fn len(&self) -> usize {
        self.points3.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points3.is_empty()
    }

    /// Keeps the entries whose score is at least `floor`.
    pub fn filter_by_score(&self, floor: f64) -> Correspondences {
        self.select(|i| self.scores[i] >= floor)
    }

    /// Keeps the `k` highest-scoring entries (ties to the lower index), in
    /// their original order.
    pub fn top_k(&self, k: usize) -> Correspondences {
        let mut order: Vec<usize> = (0..self.len()).collect();
        order.sort_by(|&a, &b| self.scores[b].total_cmp(&self.scores[a]).then(a.cmp(&b)));
        let mut keep = vec![false; self.len()];
        for &i in order.iter().take(k) {
            keep[i] = true;
        }
        self.select(|i| keep[i])
    }

    fn select(&self, keep: impl Fn(usize) -> bool) -> Correspondences {
        let idx: Vec<usize> = (0..self.len()).filter(|&i| keep(i)).collect();
        Correspondences {
            points3: idx.iter().map(|&i| self.points3[i]).collect(),
            points2: idx.iter().map(|&i| self.points2[i]).collect(),
            scores: idx.iter().map(|&i| self.scores[i]).collect(),
        }
    }
}

#[derive(Serialize, Deserialize)]
struct Entry {
    x: [f64; 3],
    u: [f64; 2],
    score: f64,
}

impl Serialize for Correspondences {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let entries: Vec<Entry> = (0..self.len())
            .map(|i| Entry {
                x: self.points3[i].into(),
                u: self.points2[i].into(),
                score: self.scores[i],
            })
            .collect();
        entries.serialize(s)
    }
}

impl<'de> Deserialize<'de> for Correspondences {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let entries = Vec::<Entry>::deserialize(d)?;
        Ok(Correspondences {
            points3: entries.iter().map(|e| Vec3::from(e.x)).collect(),
            points2: entries.iter().map(|e| Vec2::from(e.u)).collect(),
            scores: entries.iter().map(|e| e.score).collect(),
        })
    }
}

/// Result of the direct solve.
#[derive(Debug, Clone, PartialEq)]
pub struct PnpSolution {
    pub pose: CameraPose,
    /// Depth-reflected twin, present when the model points are coplanar.
    /// Both explain the given points equally well.
    pub planar_alternative: Option<CameraPose>,
    /// Weighted RMS reprojection error of `pose`.
    pub residual: f64,
}

/// Weighted least-squares scaled-orthographic pose.
pub fn solve_orthographic_pnp(c: &Correspondences, weights: &[f64]) -> Result<PnpSolution> {
    if weights.len() != c.len() || c.points2.len() != c.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} correspondences, {} weights",
            c.len(),
            weights.len()
        )));
    }
    if c.len() < 3 {
        return Err(Error::Degenerate("need at least 3 correspondences"));
    }
    if weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
        return Err(Error::InvalidParameter(
            "weights must be finite and >= 0".into(),
        ));
    }
    let total: f64 = weights.iter().sum();
    if !(total > 0.0) {
        return Err(Error::Degenerate("total weight is zero"));
    }

    let mean3 = c
        .points3
        .iter()
        .zip(weights)
        .map(|(x, w)| x * *w)
        .sum::<Vec3>()
        / total;
    let mean2 = c
        .points2
        .iter()
        .zip(weights)
        .map(|(u, w)| u * *w)
        .sum::<Vec2>()
        / total;
    let mut cross = Matrix2x3::zeros();
    let mut cov = Matrix3::zeros();
    for ((x, u), &w) in c.points3.iter().zip(&c.points2).zip(weights) {
        let xc = x - mean3;
        cross += (u - mean2) * xc.transpose() * w;
        cov += xc * xc.transpose() * w;
    }

    let eig = SymmetricEigen::new(cov);
    let mut order = [0, 1, 2];
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let lambda = order.map(|k| eig.eigenvalues[k]);
    if !(lambda[0] > 0.0) || lambda[1] <= FLATNESS * lambda[0] {
        return Err(Error::Degenerate("model points are collinear"));
    }

    let (pose, alternative) = if lambda[2] <= FLATNESS * lambda[0] {
        let e1: Vec3 = eig.eigenvectors.column(order[0]).into();
        let e2: Vec3 = eig.eigenvectors.column(order[1]).into();
        let normal = e1.cross(&e2);
        // in-plane fit, lifted back to 3D; the component along the normal is unobservable
        let basis = Matrix2x3::from_rows(&[e1.transpose(), e2.transpose()]);
        let in_plane = basis * cov * basis.transpose();
        let inv = in_plane
            .try_inverse()
            .ok_or(Error::Degenerate("model points are collinear"))?;
        let flat = cross * basis.transpose() * inv * basis;
        let (m1, m2): (Vec3, Vec3) = (flat.row(0).transpose(), flat.row(1).transpose());
        // rows m + b·n must be orthogonal with equal norms:
        // (b1 + i·b2)² = (|m2|² − |m1|²) − 2i·(m1·m2)
        let (b1, b2) = complex_sqrt(m2.norm_squared() - m1.norm_squared(), -2.0 * m1.dot(&m2));
        let lift = |sign: f64| {
            let a = flat + Vec2::new(sign * b1, sign * b2) * normal.transpose();
            pose_from_affine(&a, &mean3, &mean2)
        };
        (lift(1.0)?, Some(lift(-1.0)?))
    } else {
        let inv = cov
            .try_inverse()
            .ok_or(Error::Degenerate("model points are coplanar"))?;
        (pose_from_affine(&(cross * inv), &mean3, &mean2)?, None)
    };

    let residual = weighted_rms(&pose, c, weights, total);
    Ok(PnpSolution {
        pose,
        planar_alternative: alternative,
        residual,
    })
}

fn complex_sqrt(re: f64, im: f64) -> (f64, f64) {
    let modulus = re.hypot(im);
    let a = ((modulus + re) * 0.5).max(0.0).sqrt();
    let b = ((modulus - re) * 0.5).max(0.0).sqrt();
    (a, if im < 0.0 { -b } else { b })
}

/// Nearest scaled row-orthonormal factorization of a 2×3 map.
fn pose_from_affine(a: &Matrix2x3<f64>, mean3: &Vec3, mean2: &Vec2) -> Result<CameraPose> {
    let svd = a.svd(true, true);
    let (u, v_t) = (svd.u.unwrap(), svd.v_t.unwrap());
    let scale = 0.5 * (svd.singular_values[0] + svd.singular_values[1]);
    if !(scale > 0.0) || !scale.is_finite() {
        return Err(Error::Degenerate("projection has zero scale"));
    }
    let q = u * v_t;
    let r1: Vec3 = q.row(0).transpose();
    let r2: Vec3 = q.row(1).transpose();
    let r = Matrix3::from_rows(&[r1.transpose(), r2.transpose(), r1.cross(&r2).transpose()]);
    let t = mean2 - scale * (q * mean3);
    CameraPose::new(scale, t, RotMatrix::from_matrix_unchecked(r))
}

fn weighted_rms(pose: &CameraPose, c: &Correspondences, weights: &[f64], total: f64) -> f64 {
    let sum: f64 = c
        .points3
        .iter()
        .zip(&c.points2)
        .zip(weights)
        .map(|((x, u), w)| w * (pose.project_point(x) - u).norm_squared())
        .sum();
    (sum / total).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RansacParams {
    /// Reprojection distance (normalized units) below which a point is an inlier.
    pub inlier_threshold: f64,
    pub max_iterations: usize,
    pub confidence: f64,
    pub min_sample: usize,
    pub seed: u64,
}

impl Default for RansacParams {
    fn default() -> Self {
        RansacParams {
            inlier_threshold: 0.03,
            max_iterations: 1000,
            confidence: 0.999,
            min_sample: 4,
            seed: 0,
        }
    }
}

impl RansacParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.inlier_threshold > 0.0) {
            return Err(Error::InvalidParameter(
                "inlier threshold must be > 0".into(),
            ));
        }
        if !(self.confidence > 0.0 && self.confidence < 1.0) {
            return Err(Error::InvalidParameter(
                "confidence must be in (0, 1)".into(),
            ));
        }
        if self.min_sample < 4 {
            return Err(Error::InvalidParameter("min_sample must be >= 4".into()));
        }
        Ok(())
    }
}

/// Sample volume relative to the cube of its extent below which a minimal
/// sample is rejected as (nearly) coplanar.
const SAMPLE_FLATNESS: f64 = 1e-3;

fn is_flat_sample(points: &[Vec3]) -> bool {
    let extent = points
        .iter()
        .flat_map(|a| points.iter().map(move |b| (a - b).norm()))
        .fold(0.0, f64::max);
    if extent == 0.0 {
        return true;
    }
    let mut best = 0.0f64;
    for i in 1..points.len() {
        for j in i + 1..points.len() {
            for k in j + 1..points.len() {
                let v = (points[i] - points[0])
                    .cross(&(points[j] - points[0]))
                    .dot(&(points[k] - points[0]));
                best = best.max(v.abs());
            }
        }
    }
    best < SAMPLE_FLATNESS * extent.powi(3)
}

fn residuals(pose: &CameraPose, c: &Correspondences) -> Vec<f64> {
    c.points3
        .iter()
        .zip(&c.points2)
        .map(|(x, u)| (pose.project_point(x) - u).norm())
        .collect()
}

/// Robust pose: seeded minimal samples, inlier-count scoring, then a
/// score-weighted re-solve on the consensus set. Returns the pose and the
/// inlier flags under it.
pub fn ransac_pnp(c: &Correspondences, p: &RansacParams) -> Result<(CameraPose, Vec<bool>)> {
    p.validate()?;
    let n = c.len();
    if n < p.min_sample {
        return Err(Error::NoConsensus {
            inliers: 0,
            required: p.min_sample + 1,
        });
    }
    let mut rng = rng::stream(p.seed, 0x72616e73);
    let ones = vec![1.0; p.min_sample];
    // (inlier count, total inlier residual, flags)
    let mut best: Option<(usize, f64, Vec<bool>)> = None;
    let mut needed = p.max_iterations;
    let mut iteration = 0;
    while iteration < needed.min(p.max_iterations) {
        iteration += 1;
        let sample = index::sample(&mut rng, n, p.min_sample).into_vec();
        let sub = Correspondences {
            points3: sample.iter().map(|&i| c.points3[i]).collect(),
            points2: sample.iter().map(|&i| c.points2[i]).collect(),
            scores: ones.clone(),
        };
        if is_flat_sample(&sub.points3) {
            continue;
        }
        let Ok(hyp) = solve_orthographic_pnp(&sub, &ones) else {
            continue;
        };
        let res = residuals(&hyp.pose, c);
        let flags: Vec<bool> = res.iter().map(|&r| r < p.inlier_threshold).collect();
        let count = flags.iter().filter(|&&f| f).count();
        let spread: f64 = res
            .iter()
            .zip(&flags)
            .filter(|(_, &f)| f)
            .map(|(r, _)| r)
            .sum();
        let better = best
            .as_ref()
            .is_none_or(|(bc, bs, _)| count > *bc || (count == *bc && spread < *bs));
        if better {
            best = Some((count, spread, flags));
            let ratio = count as f64 / n as f64;
            let miss = 1.0 - ratio.powi(p.min_sample as i32);
            if miss <= 0.0 {
                needed = iteration;
            } else if miss < 1.0 {
                let k = ((1.0 - p.confidence).ln() / miss.ln()).ceil();
                if k.is_finite() && k >= 0.0 {
                    needed = (k as usize).max(iteration);
                }
            }
        }
    }

    let (count, _, flags) = best.unwrap_or((0, 0.0, vec![false; n]));
    if count < p.min_sample + 1 {
        return Err(Error::NoConsensus {
            inliers: count,
            required: p.min_sample + 1,
        });
    }
    let weights: Vec<f64> = flags
        .iter()
        .zip(&c.scores)
        .map(|(&f, &s)| if f { s } else { 0.0 })
        .collect();
    let pose = solve_orthographic_pnp(c, &weights)?.pose;
    let inliers = residuals(&pose, c)
        .iter()
        .map(|&r| r < p.inlier_threshold)
        .collect();
    Ok((pose, inliers))
}
