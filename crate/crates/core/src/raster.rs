//! Software rasterization under the orthographic camera.
//!
//! Coverage uses pixel centres with a top-left style tie rule, so a pixel
//! centre lying exactly on an edge shared by two triangles is claimed by
//! exactly one of them. No culling is done: both windings are drawn.
//! Depth key is `−(R·X)_z`; the smallest key is nearest to the camera.

use std::fs;
use std::path::Path;

use crate::camera::CameraPose;
use crate::mesh::{ColorMap, TriMesh};
use crate::{Error, Result, Vec2};

/// Binary image, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    width: usize,
    height: usize,
    bits: Vec<bool>,
}

impl Mask {
    pub fn new(width: usize, height: usize) -> Result<Self> {
        check_dims(width, height)?;
        Ok(Mask {
            width,
            height,
            bits: vec![false; width * height],
        })
    }

    pub fn from_bits(width: usize, height: usize, bits: Vec<bool>) -> Result<Self> {
        check_dims(width, height)?;
        if bits.len() != width * height {
            return Err(Error::ShapeMismatch(format!(
                "{} bits for a {width}x{height} mask",
                bits.len()
            )));
        }
        Ok(Mask {
            width,
            height,
            bits,
        })
    }

    /// `f(row, col)` for every pixel.
    pub fn from_fn(
        width: usize,
        height: usize,
        mut f: impl FnMut(usize, usize) -> bool,
    ) -> Result<Self> {
        check_dims(width, height)?;
        let bits = (0..height)
            .flat_map(|i| (0..width).map(move |j| (i, j)))
            .map(|(i, j)| f(i, j))
            .collect();
        Ok(Mask {
            width,
            height,
            bits,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn get(&self, row: usize, col: usize) -> bool {
        self.bits[row * self.width + col]
    }

    pub fn set(&mut self, row: usize, col: usize, value: bool) {
        self.bits[row * self.width + col] = value;
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn same_shape(&self, other: &Mask) -> bool {
        self.width == other.width && self.height == other.height
    }

    /// Nearest-neighbour resampling onto a `width × height` grid.
    pub fn resample(&self, width: usize, height: usize) -> Result<Mask> {
        Mask::from_fn(width, height, |i, j| {
            let si = ((i as f64 + 0.5) * self.height as f64 / height as f64) as usize;
            let sj = ((j as f64 + 0.5) * self.width as f64 / width as f64) as usize;
            self.get(si.min(self.height - 1), sj.min(self.width - 1))
        })
    }

    /// Point reflection through the image centre.
    pub fn rotate_half_turn(&self) -> Mask {
        let mut bits = self.bits.clone();
        bits.reverse();
        Mask {
            width: self.width,
            height: self.height,
            bits,
        }
    }
}

/// RGB image with channels in `[0, 1]`; `(0, 0, 0)` marks background.
#[derive(Debug, Clone, PartialEq)]
pub struct ColorImage {
    width: usize,
    height: usize,
    data: Vec<[f64; 3]>,
}

pub const BACKGROUND: [f64; 3] = [0.0; 3];

impl ColorImage {
    pub fn new(width: usize, height: usize) -> Result<Self> {
        check_dims(width, height)?;
        Ok(ColorImage {
            width,
            height,
            data: vec![BACKGROUND; width * height],
        })
    }

    pub fn from_pixels(width: usize, height: usize, data: Vec<[f64; 3]>) -> Result<Self> {
        check_dims(width, height)?;
        if data.len() != width * height {
            return Err(Error::ShapeMismatch(format!(
                "{} pixels for a {width}x{height} image",
                data.len()
            )));
        }
        Ok(ColorImage {
            width,
            height,
            data,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn get(&self, row: usize, col: usize) -> [f64; 3] {
        self.data[row * self.width + col]
    }

    pub fn set(&mut self, row: usize, col: usize, rgb: [f64; 3]) {
        self.data[row * self.width + col] = rgb;
    }

    pub fn pixels(&self) -> &[[f64; 3]] {
        &self.data
    }

    /// Pixels that differ from the background sentinel.
    pub fn foreground(&self) -> Mask {
        Mask {
            width: self.width,
            height: self.height,
            bits: self.data.iter().map(|c| *c != BACKGROUND).collect(),
        }
    }
}

/// Euclidean distance in pixels to the nearest set pixel of a mask.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceField {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl DistanceField {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.width + col]
    }

    pub fn values(&self) -> &[f64] {
        &self.data
    }
}

fn check_dims(width: usize, height: usize) -> Result<()> {
    if width == 0 || height == 0 {
        return Err(Error::InvalidParameter(format!(
            "image dimensions must be >= 1, got {width}x{height}"
        )));
    }
    Ok(())
}

/// Normalized coordinates of the centre of pixel `(row, col)`.
pub fn pixel_center(row: usize, col: usize, width: usize, height: usize) -> Vec2 {
    Vec2::new(
        (2 * col + 1) as f64 / width as f64 - 1.0,
        (2 * row + 1) as f64 / height as f64 - 1.0,
    )
}

/// `(row, col)` of the pixel containing `u`, or `None` outside `[−1, 1]²`.
pub fn pixel_of(u: &Vec2, width: usize, height: usize) -> Option<(usize, usize)> {
    if !(u.x >= -1.0 && u.x <= 1.0 && u.y >= -1.0 && u.y <= 1.0) {
        return None;
    }
    let col = (((u.x + 1.0) * 0.5 * width as f64) as usize).min(width - 1);
    let row = (((u.y + 1.0) * 0.5 * height as f64) as usize).min(height - 1);
    Some((row, col))
}

/// A covered pixel of one triangle.
#[derive(Debug, Clone, Copy)]
struct Fragment {
    pixel: usize,
    face: usize,
    /// Barycentric weights in the face's own vertex order.
    bary: [f64; 3],
    depth_key: f64,
}

type P = (f64, f64);

fn edge(a: P, b: P, p: P) -> f64 {
    (b.0 - a.0) * (p.1 - a.1) - (b.1 - a.1) * (p.0 - a.0)
}

/// Edge function evaluated in a canonical endpoint order so that
/// `edge_canon(a, b, p) == −edge_canon(b, a, p)` exactly.
fn edge_canon(a: P, b: P, p: P) -> f64 {
    if a < b {
        edge(a, b, p)
    } else {
        -edge(b, a, p)
    }
}

/// Tie rule for a centre lying exactly on edge `a → b` of a positively
/// oriented triangle; exactly one of the two directions owns the edge.
fn owns_edge(a: P, b: P) -> bool {
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    dy < 0.0 || (dy == 0.0 && dx > 0.0)
}

fn covered(w: f64, owns: bool) -> bool {
    w > 0.0 || (w == 0.0 && owns)
}

fn rasterize(
    mesh: &TriMesh,
    pose: &CameraPose,
    width: usize,
    height: usize,
    mut emit: impl FnMut(Fragment),
) -> Result<()> {
    if mesh.faces().is_empty() {
        return Err(Error::EmptyMesh);
    }
    check_dims(width, height)?;
    let (wf, hf) = (width as f64, height as f64);
    let screen: Vec<(P, f64)> = mesh
        .vertices()
        .iter()
        .map(|x| {
            let u = pose.project_point(x);
            (
                ((u.x + 1.0) * 0.5 * wf, (u.y + 1.0) * 0.5 * hf),
                -pose.camera_z(x),
            )
        })
        .collect();

    for (face, f) in mesh.faces().iter().enumerate() {
        // slot order; swapped to make the screen-space winding positive
        let mut order = [0usize, 1, 2];
        let mut p = [screen[f[0]].0, screen[f[1]].0, screen[f[2]].0];
        let area = edge_canon(p[0], p[1], p[2]);
        if area == 0.0 || !area.is_finite() {
            continue;
        }
        if area < 0.0 {
            p.swap(1, 2);
            order.swap(1, 2);
        }
        let depth = [
            screen[f[order[0]]].1,
            screen[f[order[1]]].1,
            screen[f[order[2]]].1,
        ];
        let owns = [
            owns_edge(p[1], p[2]),
            owns_edge(p[2], p[0]),
            owns_edge(p[0], p[1]),
        ];

        let min_x = p[0].0.min(p[1].0).min(p[2].0);
        let max_x = p[0].0.max(p[1].0).max(p[2].0);
        let min_y = p[0].1.min(p[1].1).min(p[2].1);
        let max_y = p[0].1.max(p[1].1).max(p[2].1);
        if max_x < 0.5 || max_y < 0.5 || min_x > wf - 0.5 || min_y > hf - 0.5 {
            continue;
        }
        let col0 = (min_x - 0.5).ceil().max(0.0) as usize;
        let col1 = ((max_x - 0.5).floor().min(wf - 1.0)) as isize;
        let row0 = (min_y - 0.5).ceil().max(0.0) as usize;
        let row1 = ((max_y - 0.5).floor().min(hf - 1.0)) as isize;
        if col1 < col0 as isize || row1 < row0 as isize {
            continue;
        }

        for row in row0..=row1 as usize {
            let cy = row as f64 + 0.5;
            for col in col0..=col1 as usize {
                let c = (col as f64 + 0.5, cy);
                let w0 = edge_canon(p[1], p[2], c);
                let w1 = edge_canon(p[2], p[0], c);
                let w2 = edge_canon(p[0], p[1], c);
                if !(covered(w0, owns[0]) && covered(w1, owns[1]) && covered(w2, owns[2])) {
                    continue;
                }
                let sum = w0 + w1 + w2;
                let b = [w0 / sum, w1 / sum, w2 / sum];
                let mut bary = [0.0; 3];
                for k in 0..3 {
                    bary[order[k]] = b[k];
                }
                emit(Fragment {
                    pixel: row * width + col,
                    face,
                    bary,
                    depth_key: b[0] * depth[0] + b[1] * depth[1] + b[2] * depth[2],
                });
            }
        }
    }
    Ok(())
}

/// Binary silhouette of the mesh seen through `pose`.
pub fn render_silhouette(
    mesh: &TriMesh,
    pose: &CameraPose,
    width: usize,
    height: usize,
) -> Result<Mask> {
    let mut mask = Mask::new(width, height)?;
    rasterize(mesh, pose, width, height, |frag| {
        mask.bits[frag.pixel] = true
    })?;
    Ok(mask)
}

fn zbuffered(
    mesh: &TriMesh,
    pose: &CameraPose,
    width: usize,
    height: usize,
) -> Result<Vec<Option<Fragment>>> {
    let mut nearest: Vec<Option<Fragment>> = vec![None; width * height];
    rasterize(mesh, pose, width, height, |frag| {
        let slot = &mut nearest[frag.pixel];
        if slot.is_none_or(|cur| frag.depth_key < cur.depth_key) {
            *slot = Some(frag);
        }
    })?;
    Ok(nearest)
}

/// Flat label colours, nearest surface wins.
pub fn render_labels(
    mesh: &TriMesh,
    pose: &CameraPose,
    face_labels: &[usize],
    cmap: &ColorMap,
    width: usize,
    height: usize,
) -> Result<ColorImage> {
    if face_labels.len() != mesh.faces().len() {
        return Err(Error::ShapeMismatch(format!(
            "{} labels for {} faces",
            face_labels.len(),
            mesh.faces().len()
        )));
    }
    if let Some(&bad) = face_labels.iter().find(|&&l| l >= cmap.len()) {
        return Err(Error::ShapeMismatch(format!(
            "label {bad} has no colour (map has {})",
            cmap.len()
        )));
    }
    let nearest = zbuffered(mesh, pose, width, height)?;
    let data = nearest
        .iter()
        .map(|f| f.map_or(BACKGROUND, |f| cmap.colors[face_labels[f.face]]))
        .collect();
    ColorImage::from_pixels(width, height, data)
}

/// Barycentric interpolation of per-vertex colours, nearest surface wins.
pub fn render_vertex_colors(
    mesh: &TriMesh,
    pose: &CameraPose,
    vertex_colors: &[[f64; 3]],
    width: usize,
    height: usize,
) -> Result<ColorImage> {
    if vertex_colors.len() != mesh.vertices().len() {
        return Err(Error::ShapeMismatch(format!(
            "{} colours for {} vertices",
            vertex_colors.len(),
            mesh.vertices().len()
        )));
    }
    let nearest = zbuffered(mesh, pose, width, height)?;
    let data = nearest
        .iter()
        .map(|f| match f {
            None => BACKGROUND,
            Some(f) => {
                let face = mesh.faces()[f.face];
                let mut c = [0.0; 3];
                for k in 0..3 {
                    for (ch, out) in c.iter_mut().enumerate() {
                        *out += f.bary[k] * vertex_colors[face[k]][ch];
                    }
                }
                c
            }
        })
        .collect();
    ColorImage::from_pixels(width, height, data)
}

/// Exact Euclidean distance transform (separable lower-envelope method).
///
/// Zero on set pixels; an empty mask gives `width·height` everywhere.
pub fn distance_transform(mask: &Mask) -> DistanceField {
    let (w, h) = (mask.width, mask.height);
    if mask.count() == 0 {
        return DistanceField {
            width: w,
            height: h,
            data: vec![(w * h) as f64; w * h],
        };
    }

    // vertical distance to the nearest set pixel in the same column
    let mut col_dist: Vec<Option<usize>> = vec![None; w * h];
    for j in 0..w {
        let mut last: Option<usize> = None;
        for i in 0..h {
            if mask.get(i, j) {
                last = Some(i);
            }
            col_dist[i * w + j] = last.map(|l| i - l);
        }
        let mut next: Option<usize> = None;
        for i in (0..h).rev() {
            if mask.get(i, j) {
                next = Some(i);
            }
            if let Some(n) = next {
                let d = n - i;
                let slot = &mut col_dist[i * w + j];
                *slot = Some(slot.map_or(d, |cur| cur.min(d)));
            }
        }
    }

    let mut data = vec![0.0; w * h];
    let mut sites: Vec<(f64, f64)> = Vec::with_capacity(w);
    let mut bounds: Vec<f64> = Vec::with_capacity(w + 1);
    for i in 0..h {
        sites.clear();
        bounds.clear();
        for j in 0..w {
            let Some(g) = col_dist[i * w + j] else {
                continue;
            };
            let q = (j as f64, (g * g) as f64);
            loop {
                match sites.last() {
                    None => {
                        sites.push(q);
                        bounds.push(f64::NEG_INFINITY);
                        break;
                    }
                    Some(&p) => {
                        let s = ((q.1 + q.0 * q.0) - (p.1 + p.0 * p.0)) / (2.0 * (q.0 - p.0));
                        if s <= *bounds.last().unwrap() {
                            sites.pop();
                            bounds.pop();
                        } else {
                            sites.push(q);
                            bounds.push(s);
                            break;
                        }
                    }
                }
            }
        }
        let mut k = 0;
        for j in 0..w {
            let x = j as f64;
            while k + 1 < sites.len() && bounds[k + 1] < x {
                k += 1;
            }
            let (v, f) = sites[k];
            data[i * w + j] = ((x - v) * (x - v) + f).sqrt();
        }
    }
    DistanceField {
        width: w,
        height: h,
        data,
    }
}

fn parse_pnm_header(
    bytes: &[u8],
    magic: &[u8; 2],
) -> std::result::Result<(usize, usize, usize), String> {
    if bytes.len() < 2 || &bytes[..2] != magic {
        return Err(format!(
            "expected {} header",
            String::from_utf8_lossy(magic)
        ));
    }
    let mut pos = 2;
    let mut fields = [0usize; 3];
    for field in &mut fields {
        loop {
            match bytes.get(pos) {
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(b'#') => {
                    while bytes.get(pos).is_some_and(|&b| b != b'\n') {
                        pos += 1;
                    }
                }
                _ => break,
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(u8::is_ascii_digit) {
            pos += 1;
        }
        *field = std::str::from_utf8(&bytes[start..pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| "malformed header".to_string())?;
    }
    if !bytes.get(pos).is_some_and(u8::is_ascii_whitespace) {
        return Err("malformed header".into());
    }
    let (w, h, maxval) = (fields[0], fields[1], fields[2]);
    if w == 0 || h == 0 {
        return Err("zero image dimension".into());
    }
    if maxval == 0 || maxval > 255 {
        return Err(format!("unsupported maxval {maxval}"));
    }
    Ok((w, h, pos + 1))
}

/// Binary PGM (P5): 0 background, 255 foreground.
pub fn encode_pgm(mask: &Mask) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", mask.width, mask.height).into_bytes();
    out.extend(mask.bits.iter().map(|&b| if b { 255u8 } else { 0 }));
    out
}

/// Any nonzero sample counts as foreground.
pub fn decode_pgm(bytes: &[u8]) -> std::result::Result<Mask, String> {
    let (w, h, start) = parse_pnm_header(bytes, b"P5")?;
    let body = &bytes[start..];
    if body.len() < w * h {
        return Err(format!("expected {} samples, found {}", w * h, body.len()));
    }
    Ok(Mask {
        width: w,
        height: h,
        bits: body[..w * h].iter().map(|&v| v != 0).collect(),
    })
}

pub fn write_pgm(mask: &Mask, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_pgm(mask)).map_err(|e| Error::io(path, e))
}

pub fn read_pgm(path: impl AsRef<Path>) -> Result<Mask> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_pgm(&bytes).map_err(|m| Error::format(path, m))
}

/// Binary PPM (P6), channels quantized to 8 bits.
pub fn encode_ppm(image: &ColorImage) -> Vec<u8> {
    let mut out = format!("P6\n{} {}\n255\n", image.width, image.height).into_bytes();
    for px in &image.data {
        out.extend(px.iter().map(|c| (c.clamp(0.0, 1.0) * 255.0).round() as u8));
    }
    out
}

pub fn decode_ppm(bytes: &[u8]) -> std::result::Result<ColorImage, String> {
    let (w, h, start) = parse_pnm_header(bytes, b"P6")?;
    let body = &bytes[start..];
    if body.len() < 3 * w * h {
        return Err(format!(
            "expected {} samples, found {}",
            3 * w * h,
            body.len()
        ));
    }
    let data = body[..3 * w * h]
        .chunks_exact(3)
        .map(|c| {
            [
                c[0] as f64 / 255.0,
                c[1] as f64 / 255.0,
                c[2] as f64 / 255.0,
            ]
        })
        .collect();
    Ok(ColorImage {
        width: w,
        height: h,
        data,
    })
}

pub fn write_ppm(image: &ColorImage, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_ppm(image)).map_err(|e| Error::io(path, e))
}

pub fn read_ppm(path: impl AsRef<Path>) -> Result<ColorImage> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_ppm(&bytes).map_err(|m| Error::format(path, m))
}

#[cfg(test)]
mod tests {
    use std::f64::consts::PI;

    use proptest::prelude::*;
    use rand::Rng;

    use super::*;
    use crate::mesh::make_color_map;
    use crate::rotation::{quat_to_matrix, Quaternion, RotMatrix};
    use crate::synth::{make_shape, ShapeKind};
    use crate::{rng, Vec3};

    fn flat_pose(s: f64) -> CameraPose {
        CameraPose::new(s, Vec2::zeros(), RotMatrix::identity()).unwrap()
    }

    fn mask_iou(a: &Mask, b: &Mask) -> f64 {
        let inter = a
            .bits
            .iter()
            .zip(&b.bits)
            .filter(|(x, y)| **x && **y)
            .count();
        let union = a
            .bits
            .iter()
            .zip(&b.bits)
            .filter(|(x, y)| **x || **y)
            .count();
        inter as f64 / union as f64
    }

    #[test]
    fn half_frame_triangle_matches_analytic_raster() {
        // lower-left half: corners (-1,-1), (-1,1), (1,1) in normalized coords (y down)
        let v = vec![
            Vec3::new(-1.0, -1.0, 0.0),
            Vec3::new(-1.0, 1.0, 0.0),
            Vec3::new(1.0, 1.0, 0.0),
        ];
        let mesh = TriMesh::new(v, vec![[0, 1, 2]]).unwrap();
        let got = render_silhouette(&mesh, &flat_pose(1.0), 256, 256).unwrap();
        let want = Mask::from_fn(256, 256, |i, j| {
            let c = pixel_center(i, j, 256, 256);
            c.y >= c.x
        })
        .unwrap();
        assert!(mask_iou(&got, &want) >= 0.99);
    }

    #[test]
    fn off_frame_mesh_is_empty() {
        let mesh = make_shape(ShapeKind::Icosphere, 2).unwrap();
        let pose = CameraPose::new(0.5, Vec2::new(10.0, 10.0), RotMatrix::identity()).unwrap();
        assert_eq!(render_silhouette(&mesh, &pose, 64, 64).unwrap().count(), 0);
    }

    #[test]
    fn sphere_silhouette_area() {
        let mesh = make_shape(ShapeKind::Icosphere, 4).unwrap();
        let s = 0.9;
        let mask = render_silhouette(&mesh, &flat_pose(s), 256, 256).unwrap();
        let radius_px = s * 128.0;
        let want = PI * radius_px * radius_px;
        assert!((mask.count() as f64 - want).abs() / want < 0.02);
    }

    #[test]
    fn empty_mesh_error() {
        let mesh = TriMesh::new(vec![Vec3::zeros()], vec![]).unwrap();
        assert!(matches!(
            render_silhouette(&mesh, &flat_pose(1.0), 8, 8),
            Err(Error::EmptyMesh)
        ));
    }

    #[test]
    fn shared_edges_covered_once() {
        // a square split along its diagonal, diagonal passing through pixel centres
        let v = vec![
            Vec3::new(-0.5, -0.5, 0.0),
            Vec3::new(0.5, -0.5, 0.0),
            Vec3::new(0.5, 0.5, 0.0),
            Vec3::new(-0.5, 0.5, 0.0),
        ];
        let mesh = TriMesh::new(v, vec![[0, 1, 2], [0, 2, 3]]).unwrap();
        let mut hits = vec![0u32; 16 * 16];
        rasterize(&mesh, &flat_pose(1.0), 16, 16, |f| hits[f.pixel] += 1).unwrap();
        assert!(hits.iter().all(|&h| h <= 1));
        assert_eq!(hits.iter().filter(|&&h| h == 1).count(), 64);
    }

    #[test]
    fn nearer_triangle_wins() {
        let v = vec![
            Vec3::new(-0.8, -0.8, 0.0),
            Vec3::new(0.8, -0.8, 0.0),
            Vec3::new(0.0, 0.8, 0.0),
            Vec3::new(-0.8, -0.8, 0.5),
            Vec3::new(0.8, -0.8, 0.5),
            Vec3::new(0.0, 0.8, 0.5),
        ];
        let cmap = make_color_map(2, 0.05, 0).unwrap();
        for faces in [vec![[0, 1, 2], [3, 4, 5]], vec![[3, 4, 5], [0, 1, 2]]] {
            let mesh = TriMesh::new(v.clone(), faces.clone()).unwrap();
            let labels: Vec<usize> = faces.iter().map(|f| usize::from(f[0] == 3)).collect();
            let img = render_labels(&mesh, &flat_pose(1.0), &labels, &cmap, 32, 32).unwrap();
            let fg: Vec<_> = img.pixels().iter().filter(|c| **c != BACKGROUND).collect();
            assert!(!fg.is_empty());
            // z = 0.5 is nearer to a camera looking down −z
            assert!(fg.iter().all(|c| **c == cmap.colors[1]));
        }
    }

    #[test]
    fn single_label_render_is_uniform() {
        let mesh = make_shape(ShapeKind::BirdBlob, 2).unwrap();
        let cmap = make_color_map(1, 0.05, 3).unwrap();
        let labels = vec![0; mesh.faces().len()];
        let img = render_labels(&mesh, &flat_pose(0.7), &labels, &cmap, 64, 64).unwrap();
        let fg = img.foreground();
        assert!(fg.count() > 0);
        for (px, &on) in img.pixels().iter().zip(fg.bits()) {
            if on {
                assert_eq!(*px, cmap.colors[0]);
            }
        }
    }

    /// Nearest intersection depth key along the viewing ray through `c`,
    /// by brute force over every face.
    fn ray_nearest_face(mesh: &TriMesh, pose: &CameraPose, c: Vec2) -> Option<(usize, f64)> {
        let mut best: Option<(usize, f64)> = None;
        for (fi, f) in mesh.faces().iter().enumerate() {
            let p: Vec<Vec2> = f
                .iter()
                .map(|&i| pose.project_point(&mesh.vertices()[i]))
                .collect();
            let z: Vec<f64> = f
                .iter()
                .map(|&i| pose.camera_z(&mesh.vertices()[i]))
                .collect();
            let d = (p[1] - p[0]).perp(&(p[2] - p[0]));
            if d.abs() < 1e-15 {
                continue;
            }
            let l1 = (c - p[0]).perp(&(p[2] - p[0])) / d;
            let l2 = (p[1] - p[0]).perp(&(c - p[0])) / d;
            let l0 = 1.0 - l1 - l2;
            if l0 >= 0.0 && l1 >= 0.0 && l2 >= 0.0 {
                let key = -(l0 * z[0] + l1 * z[1] + l2 * z[2]);
                if best.is_none_or(|b| key < b.1) {
                    best = Some((fi, key));
                }
            }
        }
        best
    }

    #[test]
    fn hemisphere_labels_show_near_side() {
        let mesh = make_shape(ShapeKind::Icosphere, 3).unwrap();
        let poles = [Vec3::new(0.0, 0.0, 1.0), Vec3::new(0.0, 0.0, -1.0)];
        let labels = crate::mesh::face_labels_for_points(&mesh, &poles);
        let cmap = make_color_map(2, 0.05, 1).unwrap();
        let pose = flat_pose(0.8);
        let img = render_labels(&mesh, &pose, &labels, &cmap, 64, 64).unwrap();
        let (mut fg, mut near, mut oracle_agree) = (0, 0, 0);
        for i in 0..64 {
            for j in 0..64 {
                let px = img.get(i, j);
                if px == BACKGROUND {
                    continue;
                }
                fg += 1;
                if px == cmap.colors[0] {
                    near += 1;
                }
                if let Some((face, _)) = ray_nearest_face(&mesh, &pose, pixel_center(i, j, 64, 64))
                {
                    if cmap.colors[labels[face]] == px {
                        oracle_agree += 1;
                    }
                }
            }
        }
        assert!(near as f64 / fg as f64 > 0.99);
        assert!(oracle_agree as f64 / fg as f64 > 0.99);
    }

    #[test]
    fn label_support_equals_silhouette() {
        let mesh = make_shape(ShapeKind::BirdBlob, 3).unwrap();
        let kp = crate::mesh::farthest_point_sampling(&mesh, 16, 0).unwrap();
        let labels = crate::mesh::face_labels(&mesh, &kp);
        let cmap = make_color_map(16, 0.05, 0).unwrap();
        let mut rng = rng::stream(12, 0);
        for _ in 0..5 {
            let pose = CameraPose::new(
                0.6,
                Vec2::new(0.1, -0.05),
                quat_to_matrix(&Quaternion::random(&mut rng)),
            )
            .unwrap();
            let sil = render_silhouette(&mesh, &pose, 96, 96).unwrap();
            let img = render_labels(&mesh, &pose, &labels, &cmap, 96, 96).unwrap();
            assert_eq!(img.foreground(), sil);
        }
    }

    #[test]
    fn white_vertices_render_white() {
        let mesh = make_shape(ShapeKind::Icosphere, 2).unwrap();
        let colors = vec![[1.0; 3]; mesh.vertices().len()];
        let img = render_vertex_colors(&mesh, &flat_pose(0.7), &colors, 48, 48).unwrap();
        for px in img.pixels() {
            assert!(*px == BACKGROUND || px.iter().all(|c| (c - 1.0).abs() < 1e-12));
        }
    }

    #[test]
    fn rgb_triangle_centroid_is_grey() {
        // centroid at a pixel centre: vertices chosen around centre of pixel (32, 32) at 64²
        let c = pixel_center(32, 32, 64, 64);
        let v = vec![
            Vec3::new(c.x - 0.6, c.y + 0.4, 0.0),
            Vec3::new(c.x + 0.6, c.y + 0.4, 0.0),
            Vec3::new(c.x, c.y - 0.8, 0.0),
        ];
        let mesh = TriMesh::new(v, vec![[0, 1, 2]]).unwrap();
        let colors = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
        let img = render_vertex_colors(&mesh, &flat_pose(1.0), &colors, 64, 64).unwrap();
        for ch in img.get(32, 32) {
            assert!((ch - 1.0 / 3.0).abs() < 1.0 / 255.0);
        }
    }

    #[test]
    fn vertex_pixels_carry_vertex_colors() {
        // planar grid whose vertices sit exactly on pixel centres at 128²
        let n = 9;
        let (w, h) = (128, 128);
        let mut v = Vec::new();
        for r in 0..n {
            for c in 0..n {
                let p = pixel_center(20 + 11 * r, 20 + 11 * c, w, h);
                v.push(Vec3::new(p.x, p.y, 0.0));
            }
        }
        let mut faces = Vec::new();
        for r in 0..n - 1 {
            for c in 0..n - 1 {
                let a = r * n + c;
                faces.push([a, a + 1, a + n + 1]);
                faces.push([a, a + n + 1, a + n]);
            }
        }
        let mesh = TriMesh::new(v, faces).unwrap();
        let mut rng = rng::stream(13, 0);
        let colors: Vec<[f64; 3]> = (0..n * n)
            .map(|_| [rng.random(), rng.random(), rng.random()])
            .collect();
        let pose = flat_pose(1.0);
        let img = render_vertex_colors(&mesh, &pose, &colors, w, h).unwrap();
        for r in 1..n - 1 {
            for c in 1..n - 1 {
                let k = r * n + c;
                let (i, j) = pixel_of(&pose.project_point(&mesh.vertices()[k]), w, h).unwrap();
                let px = img.get(i, j);
                for ch in 0..3 {
                    assert!((px[ch] - colors[k][ch]).abs() <= 2.0 / 255.0);
                }
            }
        }
    }

    #[test]
    fn distance_transform_examples() {
        let full = Mask::from_fn(5, 4, |_, _| true).unwrap();
        assert!(distance_transform(&full).values().iter().all(|&d| d == 0.0));

        let mut m = Mask::new(3, 3).unwrap();
        m.set(1, 1, true);
        let dt = distance_transform(&m);
        assert_eq!(dt.get(1, 1), 0.0);
        assert_eq!(dt.get(0, 1), 1.0);
        assert_eq!(dt.get(1, 2), 1.0);
        assert_eq!(dt.get(0, 0), 2f64.sqrt());
        assert_eq!(dt.get(2, 2), 2f64.sqrt());

        let empty = Mask::new(4, 6).unwrap();
        assert!(distance_transform(&empty)
            .values()
            .iter()
            .all(|&d| d == 24.0));
    }

    fn brute_force_dt(m: &Mask) -> Vec<f64> {
        let on: Vec<(usize, usize)> = (0..m.height())
            .flat_map(|i| (0..m.width()).map(move |j| (i, j)))
            .filter(|&(i, j)| m.get(i, j))
            .collect();
        (0..m.height())
            .flat_map(|i| (0..m.width()).map(move |j| (i, j)))
            .map(|(i, j)| {
                on.iter()
                    .map(|&(a, b)| {
                        let (di, dj) = (a as f64 - i as f64, b as f64 - j as f64);
                        di * di + dj * dj
                    })
                    .fold(f64::INFINITY, f64::min)
                    .sqrt()
            })
            .collect()
    }

    #[test]
    fn distance_transform_matches_brute_force() {
        let mut rng = rng::stream(14, 0);
        for density in [0.002, 0.02, 0.3] {
            for _ in 0..3 {
                let m = Mask::from_fn(40, 33, |_, _| rng.random_bool(density)).unwrap();
                if m.count() == 0 {
                    continue;
                }
                assert_eq!(
                    distance_transform(&m).values(),
                    brute_force_dt(&m).as_slice()
                );
            }
        }
    }

    #[test]
    fn pgm_round_trip_and_errors() {
        let mut rng = rng::stream(15, 0);
        let m = Mask::from_fn(7, 5, |_, _| rng.random_bool(0.5)).unwrap();
        let bytes = encode_pgm(&m);
        assert!(bytes.starts_with(b"P5\n7 5\n255\n"));
        assert_eq!(decode_pgm(&bytes).unwrap(), m);
        let commented = [b"P5 # c\n7 5\n255\n".as_slice(), &bytes[11..]].concat();
        assert_eq!(decode_pgm(&commented).unwrap(), m);
        assert!(decode_pgm(b"P6\n1 1\n255\n\0\0\0").is_err());
        assert!(decode_pgm(b"P5\n4 4\n255\n\0").is_err());
    }

    #[test]
    fn ppm_round_trip_quantized() {
        let img = ColorImage::from_pixels(2, 1, vec![[1.0, 0.5, 0.0], [0.2, 0.4, 0.6]]).unwrap();
        let back = decode_ppm(&encode_ppm(&img)).unwrap();
        for (a, b) in img.pixels().iter().zip(back.pixels()) {
            for k in 0..3 {
                assert!((a[k] - b[k]).abs() <= 0.5 / 255.0 + 1e-12);
            }
        }
    }

    #[test]
    fn pixel_lookup() {
        assert_eq!(pixel_of(&Vec2::new(-1.0, -1.0), 4, 4), Some((0, 0)));
        assert_eq!(pixel_of(&Vec2::new(1.0, 1.0), 4, 4), Some((3, 3)));
        assert_eq!(pixel_of(&Vec2::new(1.01, 0.0), 4, 4), None);
        let c = pixel_center(2, 1, 4, 8);
        assert_eq!(pixel_of(&c, 4, 8), Some((2, 1)));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn silhouette_ignores_face_order(seed in 0u64..1000) {
            let mesh = make_shape(ShapeKind::BirdBlob, 2).unwrap();
            let mut rng = rng::stream(seed, 1);
            let pose = CameraPose::new(0.7, Vec2::new(0.05, 0.0), quat_to_matrix(&Quaternion::random(&mut rng))).unwrap();
            let mut faces = mesh.faces().to_vec();
            faces.reverse();
            let shift = seed as usize % faces.len();
            faces.rotate_left(shift);
            let shuffled = TriMesh::new(mesh.vertices().to_vec(), faces).unwrap();
            prop_assert_eq!(
                render_silhouette(&mesh, &pose, 64, 64).unwrap(),
                render_silhouette(&shuffled, &pose, 64, 64).unwrap()
            );
        }

        #[test]
        fn half_turned_camera_flips_image(seed in 0u64..1000) {
            let mesh = make_shape(ShapeKind::BirdBlob, 3).unwrap();
            let mut rng = rng::stream(seed, 2);
            let r = quat_to_matrix(&Quaternion::random(&mut rng));
            let t = Vec2::new(rng.random_range(-0.2..0.2), rng.random_range(-0.2..0.2));
            let pose = CameraPose::new(0.6, t, r).unwrap();
            let flipped = CameraPose::new(0.6, -t, RotMatrix::about_z(PI).compose(&r)).unwrap();
            let a = render_silhouette(&mesh, &pose, 256, 256).unwrap().rotate_half_turn();
            let b = render_silhouette(&mesh, &flipped, 256, 256).unwrap();
            let differ = a.bits().iter().zip(b.bits()).filter(|(x, y)| x != y).count();
            prop_assert!(differ as f64 <= 0.005 * 256.0 * 256.0);
        }

        #[test]
        fn distance_zero_iff_set(bits in prop::collection::vec(any::<bool>(), 12 * 9)) {
            let m = Mask::from_bits(12, 9, bits).unwrap();
            if m.count() > 0 {
                let dt = distance_transform(&m);
                for (d, &b) in dt.values().iter().zip(m.bits()) {
                    prop_assert_eq!(*d == 0.0, b);
                }
            }
        }
    }
}
