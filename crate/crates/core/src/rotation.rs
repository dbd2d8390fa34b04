//! Rotation representations and distances.
//!
//! Four parameterizations of SO(3) are supported: unit quaternions, rotation
//! matrices, the 6D two-column representation mapped through Gram-Schmidt, and
//! the unconstrained 9D representation projected with an SVD. All functions
//! are pure; the types are plain values.

use std::f64::consts::PI;

use nalgebra::Matrix3;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::{Error, Result, Vec3};

/// Largest `‖RᵀR − I‖∞` accepted when converting a matrix to a quaternion.
pub const ROTATION_TOLERANCE: f64 = 1e-4;

const DEGENERATE_NORM: f64 = 1e-9;
const RANK_FLOOR: f64 = 1e-12;

/// Unit quaternion `w + xi + yj + zk`.
///
/// Always normalized. `q` and `-q` describe the same rotation; use
/// [`Quaternion::canonical`] for a unique representative.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quaternion {
    w: f64,
    x: f64,
    y: f64,
    z: f64,
}

impl Quaternion {
    pub const IDENTITY: Quaternion = Quaternion {
        w: 1.0,
        x: 0.0,
        y: 0.0,
        z: 0.0,
    };

    /// Normalizes `(w, x, y, z)`; fails on a (near) zero vector.
    pub fn new(w: f64, x: f64, y: f64, z: f64) -> Result<Self> {
        let n = (w * w + x * x + y * y + z * z).sqrt();
        if !(n > DEGENERATE_NORM) || !n.is_finite() {
            return Err(Error::DegenerateInput("quaternion has zero norm"));
        }
        Ok(Quaternion {
            w: w / n,
            x: x / n,
            y: y / n,
            z: z / n,
        })
    }

    pub fn from_axis_angle(axis: &Vec3, angle: f64) -> Result<Self> {
        let n = axis.norm();
        if !(n > DEGENERATE_NORM) {
            return Err(Error::DegenerateInput("rotation axis has zero norm"));
        }
        let (s, c) = (0.5 * angle).sin_cos();
        let a = axis / n;
        Quaternion::new(c, s * a.x, s * a.y, s * a.z)
    }

    /// Uniformly distributed random rotation.
    pub fn random<R: Rng + ?Sized>(rng: &mut R) -> Self {
        loop {
            let v: [f64; 4] = [
                rng.sample(StandardNormal),
                rng.sample(StandardNormal),
                rng.sample(StandardNormal),
                rng.sample(StandardNormal),
            ];
            if let Ok(q) = Quaternion::new(v[0], v[1], v[2], v[3]) {
                return q;
            }
        }
    }

    pub fn w(&self) -> f64 {
        self.w
    }
    pub fn x(&self) -> f64 {
        self.x
    }
    pub fn y(&self) -> f64 {
        self.y
    }
    pub fn z(&self) -> f64 {
        self.z
    }

    /// `[w, x, y, z]`
    pub fn coords(&self) -> [f64; 4] {
        [self.w, self.x, self.y, self.z]
    }

    pub fn neg(&self) -> Self {
        Quaternion {
            w: -self.w,
            x: -self.x,
            y: -self.y,
            z: -self.z,
        }
    }

    pub fn dot(&self, other: &Quaternion) -> f64 {
        self.w * other.w + self.x * other.x + self.y * other.y + self.z * other.z
    }

    /// Representative with `w > 0`; when `w == 0` the first nonzero of
    /// `(x, y, z)` is made positive.
    pub fn canonical(&self) -> Self {
        let flip = if self.w != 0.0 {
            self.w < 0.0
        } else if self.x != 0.0 {
            self.x < 0.0
        } else if self.y != 0.0 {
            self.y < 0.0
        } else {
            self.z < 0.0
        };
        if flip {
            self.neg()
        } else {
            *self
        }
    }

    /// Hamilton product `self * other`.
    pub fn mul(&self, o: &Quaternion) -> Quaternion {
        let (a, b) = (self, o);
        Quaternion {
            w: a.w * b.w - a.x * b.x - a.y * b.y - a.z * b.z,
            x: a.w * b.x + a.x * b.w + a.y * b.z - a.z * b.y,
            y: a.w * b.y - a.x * b.z + a.y * b.w + a.z * b.x,
            z: a.w * b.z + a.x * b.y - a.y * b.x + a.z * b.w,
        }
    }

    /// Rotates `v` by `q v q*`.
    pub fn rotate(&self, v: &Vec3) -> Vec3 {
        let u = Vec3::new(self.x, self.y, self.z);
        let t = 2.0 * u.cross(v);
        v + self.w * t + u.cross(&t)
    }
}

impl Serialize for Quaternion {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.coords().serialize(s)
    }
}

impl<'de> Deserialize<'de> for Quaternion {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let [w, x, y, z] = <[f64; 4]>::deserialize(d)?;
        Quaternion::new(w, x, y, z).map_err(serde::de::Error::custom)
    }
}

/// 3×3 rotation matrix (orthonormal, determinant +1).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RotMatrix(Matrix3<f64>);

impl RotMatrix {
    pub fn identity() -> Self {
        RotMatrix(Matrix3::identity())
    }

    /// Validates `m` against [`ROTATION_TOLERANCE`].
    pub fn from_matrix(m: Matrix3<f64>) -> Result<Self> {
        let defect = orthogonality_defect(&m);
        if !(defect <= ROTATION_TOLERANCE) || m.determinant() < 0.0 {
            return Err(Error::NotARotation { defect });
        }
        Ok(RotMatrix(m))
    }

    /// Row-major 9 values.
    pub fn from_row_slice(v: &[f64; 9]) -> Result<Self> {
        RotMatrix::from_matrix(Matrix3::from_row_slice(v))
    }

    pub(crate) fn from_matrix_unchecked(m: Matrix3<f64>) -> Self {
        RotMatrix(m)
    }

    pub fn about_x(angle: f64) -> Self {
        let (s, c) = angle.sin_cos();
        RotMatrix(Matrix3::new(1.0, 0.0, 0.0, 0.0, c, -s, 0.0, s, c))
    }

    pub fn about_y(angle: f64) -> Self {
        let (s, c) = angle.sin_cos();
        RotMatrix(Matrix3::new(c, 0.0, s, 0.0, 1.0, 0.0, -s, 0.0, c))
    }

    pub fn about_z(angle: f64) -> Self {
        let (s, c) = angle.sin_cos();
        RotMatrix(Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0))
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.0
    }

    pub fn transpose(&self) -> Self {
        RotMatrix(self.0.transpose())
    }

    /// Composition `self · other`.
    pub fn compose(&self, other: &RotMatrix) -> Self {
        RotMatrix(self.0 * other.0)
    }

    pub fn rotate(&self, v: &Vec3) -> Vec3 {
        self.0 * v
    }

    pub fn row_major(&self) -> [f64; 9] {
        let m = &self.0;
        [
            m[(0, 0)],
            m[(0, 1)],
            m[(0, 2)],
            m[(1, 0)],
            m[(1, 1)],
            m[(1, 2)],
            m[(2, 0)],
            m[(2, 1)],
            m[(2, 2)],
        ]
    }

    pub fn to_quaternion(&self) -> Quaternion {
        // A validated matrix always converts.
        matrix_to_quat(self).unwrap_or(Quaternion::IDENTITY)
    }
}

impl Serialize for RotMatrix {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.row_major().serialize(s)
    }
}

impl<'de> Deserialize<'de> for RotMatrix {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let v = <[f64; 9]>::deserialize(d)?;
        RotMatrix::from_row_slice(&v).map_err(serde::de::Error::custom)
    }
}

/// `‖MᵀM − I‖∞` (largest absolute entry).
pub fn orthogonality_defect(m: &Matrix3<f64>) -> f64 {
    (m.transpose() * m - Matrix3::identity()).amax()
}

/// 6D representation: two 3-vectors that become the first two matrix columns.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sixd {
    pub a1: Vec3,
    pub a2: Vec3,
}

impl Sixd {
    pub fn new(a1: Vec3, a2: Vec3) -> Self {
        Sixd { a1, a2 }
    }

    pub fn from_slice(v: &[f64; 6]) -> Self {
        Sixd {
            a1: Vec3::new(v[0], v[1], v[2]),
            a2: Vec3::new(v[3], v[4], v[5]),
        }
    }

    /// The first two columns of `r`.
    pub fn from_rotation(r: &RotMatrix) -> Self {
        Sixd {
            a1: r.0.column(0).into_owned(),
            a2: r.0.column(1).into_owned(),
        }
    }
}

/// 9D representation: an arbitrary 3×3 matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Nined(pub Matrix3<f64>);

pub fn quat_to_matrix(q: &Quaternion) -> RotMatrix {
    let n = (q.w * q.w + q.x * q.x + q.y * q.y + q.z * q.z).sqrt();
    let (w, x, y, z) = (q.w / n, q.x / n, q.y / n, q.z / n);
    RotMatrix(Matrix3::new(
        1.0 - 2.0 * (y * y + z * z),
        2.0 * (x * y - w * z),
        2.0 * (x * z + w * y),
        2.0 * (x * y + w * z),
        1.0 - 2.0 * (x * x + z * z),
        2.0 * (y * z - w * x),
        2.0 * (x * z - w * y),
        2.0 * (y * z + w * x),
        1.0 - 2.0 * (x * x + y * y),
    ))
}

/// Canonical (`w ≥ 0`) quaternion of a rotation matrix.
///
/// Uses the largest of the four diagonal combinations as pivot so the square
/// root is always well conditioned, including the `trace = −1` half-turns.
pub fn matrix_to_quat(r: &RotMatrix) -> Result<Quaternion> {
    let m = &r.0;
    let defect = orthogonality_defect(m);
    if !(defect <= ROTATION_TOLERANCE) || m.determinant() < 0.0 {
        return Err(Error::NotARotation { defect });
    }
    let (m00, m01, m02) = (m[(0, 0)], m[(0, 1)], m[(0, 2)]);
    let (m10, m11, m12) = (m[(1, 0)], m[(1, 1)], m[(1, 2)]);
    let (m20, m21, m22) = (m[(2, 0)], m[(2, 1)], m[(2, 2)]);
    let trace = m00 + m11 + m22;

    let (w, x, y, z) = if trace > 0.0 {
        let s = 2.0 * (trace + 1.0).sqrt();
        (0.25 * s, (m21 - m12) / s, (m02 - m20) / s, (m10 - m01) / s)
    } else if m00 > m11 && m00 > m22 {
        let s = 2.0 * (1.0 + m00 - m11 - m22).sqrt();
        ((m21 - m12) / s, 0.25 * s, (m01 + m10) / s, (m02 + m20) / s)
    } else if m11 > m22 {
        let s = 2.0 * (1.0 + m11 - m00 - m22).sqrt();
        ((m02 - m20) / s, (m01 + m10) / s, 0.25 * s, (m12 + m21) / s)
    } else {
        let s = 2.0 * (1.0 + m22 - m00 - m11).sqrt();
        ((m10 - m01) / s, (m02 + m20) / s, (m12 + m21) / s, 0.25 * s)
    };
    Ok(Quaternion::new(w, x, y, z)?.canonical())
}

/// Maps the 6D representation onto SO(3) with a partial Gram-Schmidt step.
pub fn gram_schmidt_6d(a: &Sixd) -> Result<RotMatrix> {
    let n1 = a.a1.norm();
    if !(n1 > DEGENERATE_NORM) {
        return Err(Error::DegenerateInput("first 6D column has zero norm"));
    }
    let b1 = a.a1 / n1;
    let ortho = a.a2 - b1 * b1.dot(&a.a2);
    let n2 = ortho.norm();
    if !(n2 > DEGENERATE_NORM) {
        return Err(Error::DegenerateInput("6D columns are parallel"));
    }
    let b2 = ortho / n2;
    let b3 = b1.cross(&b2);
    Ok(RotMatrix(Matrix3::from_columns(&[b1, b2, b3])))
}

/// Nearest rotation to `m` in Frobenius norm: `U · diag(1, 1, det(UVᵀ)) · Vᵀ`.
pub fn svd_orthogonalize(m: &Nined) -> Result<RotMatrix> {
    if !m.0.iter().all(|v| v.is_finite()) {
        return Err(Error::DegenerateInput("matrix has non-finite entries"));
    }
    let svd = m.0.svd(true, true);
    let (u, v_t) = match (svd.u, svd.v_t) {
        (Some(u), Some(v_t)) => (u, v_t),
        _ => return Err(Error::RankDeficient),
    };
    let sv = svd.singular_values;
    let mut order = [0usize, 1, 2];
    order.sort_by(|&i, &j| sv[i].total_cmp(&sv[j]));
    if sv[order[0]] < RANK_FLOOR && sv[order[1]] < RANK_FLOOR {
        return Err(Error::RankDeficient);
    }
    let sign = (u * v_t).determinant().signum();
    let mut r = Matrix3::zeros();
    for k in 0..3 {
        let weight = if k == order[0] { sign } else { 1.0 };
        r += weight * u.column(k) * v_t.row(k);
    }
    Ok(RotMatrix(r))
}

/// Angle of the relative rotation `RaᵀRb`, in `[0, π]`.
///
/// Equal to `arccos(clamp((tr(RaᵀRb) − 1)/2, −1, 1))`; evaluated with `atan2`
/// of the skew part so small angles keep full precision.
pub fn geodesic_angle(ra: &RotMatrix, rb: &RotMatrix) -> f64 {
    let m = ra.0.transpose() * rb.0;
    let cos = ((m.trace() - 1.0) * 0.5).clamp(-1.0, 1.0);
    let sin = 0.5
        * Vec3::new(
            m[(2, 1)] - m[(1, 2)],
            m[(0, 2)] - m[(2, 0)],
            m[(1, 0)] - m[(0, 1)],
        )
        .norm();
    sin.atan2(cos).clamp(0.0, PI)
}

/// `min(‖qp − qr‖, ‖qp + qr‖)`: Euclidean quaternion distance that treats
/// `qr` and `−qr` as the same rotation. Lies in `[0, √2]`.
pub fn quat_loss_double_cover(qp: &Quaternion, qr: &Quaternion) -> f64 {
    let (a, b) = (qp.coords(), qr.coords());
    let mut minus = 0.0;
    let mut plus = 0.0;
    for k in 0..4 {
        minus += (a[k] - b[k]).powi(2);
        plus += (a[k] + b[k]).powi(2);
    }
    minus.sqrt().min(plus.sqrt())
}

/// `Rz(cyclo) · Rx(elevation) · Ry(azimuth)`.
pub fn rotation_from_euler(azimuth: f64, elevation: f64, cyclo: f64) -> RotMatrix {
    RotMatrix::about_z(cyclo)
        .compose(&RotMatrix::about_x(elevation))
        .compose(&RotMatrix::about_y(azimuth))
}

/// Inverse of [`rotation_from_euler`]: `(azimuth, elevation, cyclo)` with
/// elevation in `[−π/2, π/2]`.
pub fn euler_from_rotation(r: &RotMatrix) -> (f64, f64, f64) {
    let m = &r.0;
    let elevation = m[(2, 1)].clamp(-1.0, 1.0).asin();
    let azimuth = (-m[(2, 0)]).atan2(m[(2, 2)]);
    let cyclo = (-m[(0, 1)]).atan2(m[(1, 1)]);
    (azimuth, elevation, cyclo)
}

/// Reference implementations used by the property checks of `bench-rot`.
pub mod reference {
    use nalgebra::Matrix3;

    /// Orthogonal polar factor of `m` by the Newton iteration
    /// `X ← (X + X⁻ᵀ)/2`. For `det(m) > 0` this is the nearest rotation.
    pub fn polar_rotation(m: &Matrix3<f64>) -> Option<Matrix3<f64>> {
        let mut x = *m;
        for _ in 0..100 {
            let inv_t = x.try_inverse()?.transpose();
            let next = 0.5 * (x + inv_t);
            let step = (next - x).amax();
            x = next;
            if step < 1e-15 {
                break;
            }
        }
        Some(x)
    }
}
