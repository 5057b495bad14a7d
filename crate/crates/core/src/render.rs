//! Depth/normal rendering of meshes and image-space contour extraction.

use std::collections::VecDeque;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Camera, Mesh, Vec3};
use crate::raster;

/// Per-pixel view depth; background pixels hold `f64::INFINITY`.
#[derive(Clone, Debug, PartialEq)]
pub struct DepthMap {
    pub width: usize,
    pub height: usize,
    pub depth: Vec<f64>,
    /// Depth range of the rendered scene, used to normalize edge thresholds.
    pub near: f64,
    pub far: f64,
}

/// Per-pixel unit face normals facing the camera; zero on background.
#[derive(Clone, Debug, PartialEq)]
pub struct NormalMap {
    pub width: usize,
    pub height: usize,
    pub normals: Vec<Vec3>,
}

impl DepthMap {
    pub fn is_background(&self, idx: usize) -> bool {
        !self.depth[idx].is_finite()
    }
}

/// Grayscale line drawing, ink = 1 on a background of 0.
#[derive(Clone, Debug, PartialEq)]
pub struct LineDrawing {
    pub width: usize,
    pub height: usize,
    pub ink: Vec<f32>,
}

impl LineDrawing {
    pub fn blank(width: usize, height: usize) -> Self {
        LineDrawing { width, height, ink: vec![0.0; width * height] }
    }

    pub fn from_ink(width: usize, height: usize, ink: Vec<f32>) -> Result<Self> {
        if ink.len() != width * height {
            return Err(Error::SizeMismatch(format!("{} pixels for {width}x{height}", ink.len())));
        }
        Ok(LineDrawing { width, height, ink: ink.into_iter().map(|v| v.clamp(0.0, 1.0)).collect() })
    }

    pub fn get(&self, col: usize, row: usize) -> f32 {
        self.ink[row * self.width + col]
    }

    /// Fraction of pixels carrying at least half-strength ink.
    pub fn ink_coverage(&self) -> f64 {
        self.ink.iter().filter(|v| **v >= 0.5).count() as f64 / self.ink.len() as f64
    }

    /// Black-on-white 8-bit PNG.
    pub fn write_png<W: std::io::Write>(&self, w: W) -> Result<()> {
        let px: Vec<u8> = self.ink.iter().map(|v| ((1.0 - v) * 255.0).round() as u8).collect();
        raster::write_gray8(w, self.width, self.height, &px)
    }

    pub fn to_png_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        self.write_png(&mut out).expect("in-memory encoding");
        out
    }

    /// Reads a black-on-white PNG, inverting to ink polarity.
    pub fn read_png<R: std::io::Read>(r: R) -> Result<Self> {
        let (w, h, px) = raster::read_gray8(r)?;
        Ok(LineDrawing { width: w, height: h, ink: px.iter().map(|p| 1.0 - *p as f32 / 255.0).collect() })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let f = std::fs::File::create(path).map_err(|e| Error::from(e).at(path))?;
        self.write_png(std::io::BufWriter::new(f)).map_err(|e| e.at(path))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let f = std::fs::File::open(path).map_err(|e| Error::from(e).at(path))?;
        LineDrawing::read_png(f).map_err(|e| e.at(path))
    }

    /// Nearest-neighbour resize (used to adapt canvas drawings to the network input).
    pub fn resized(&self, width: usize, height: usize) -> LineDrawing {
        if width == self.width && height == self.height {
            return self.clone();
        }
        let mut out = LineDrawing::blank(width, height);
        for r in 0..height {
            for c in 0..width {
                // max over the covered source block keeps thin strokes when shrinking
                let (r0, r1) = (r * self.height / height, ((r + 1) * self.height).div_ceil(height));
                let (c0, c1) = (c * self.width / width, ((c + 1) * self.width).div_ceil(width));
                let mut v = 0.0f32;
                for sr in r0..r1.min(self.height) {
                    for sc in c0..c1.min(self.width) {
                        v = v.max(self.get(sc, sr));
                    }
                }
                out.ink[r * width + c] = v;
            }
        }
        out
    }
}

/// Binary image.
#[derive(Clone, Debug, PartialEq)]
pub struct Mask {
    pub width: usize,
    pub height: usize,
    pub bits: Vec<bool>,
}

impl Mask {
    pub fn empty(width: usize, height: usize) -> Self {
        Mask { width, height, bits: vec![false; width * height] }
    }

    pub fn get(&self, col: usize, row: usize) -> bool {
        self.bits[row * self.width + col]
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|b| **b).count()
    }

    /// Whether continuous pixel coordinates fall on a set pixel; off-image is unset.
    pub fn contains_point(&self, col: f64, row: f64) -> bool {
        if !(col >= 0.0 && row >= 0.0) {
            return false;
        }
        let (c, r) = (col.floor() as usize, row.floor() as usize);
        c < self.width && r < self.height && self.get(c, r)
    }

    /// Square (Chebyshev) dilation by `radius` pixels.
    pub fn dilated(&self, radius: usize) -> Mask {
        if radius == 0 {
            return self.clone();
        }
        let mut out = Mask::empty(self.width, self.height);
        for r in 0..self.height {
            for c in 0..self.width {
                if !self.get(c, r) {
                    continue;
                }
                for rr in r.saturating_sub(radius)..=(r + radius).min(self.height - 1) {
                    for cc in c.saturating_sub(radius)..=(c + radius).min(self.width - 1) {
                        out.bits[rr * self.width + cc] = true;
                    }
                }
            }
        }
        out
    }

    pub fn iou(&self, other: &Mask) -> f64 {
        let inter = self.bits.iter().zip(&other.bits).filter(|(a, b)| **a && **b).count();
        let union = self.bits.iter().zip(&other.bits).filter(|(a, b)| **a || **b).count();
        if union == 0 {
            1.0
        } else {
            inter as f64 / union as f64
        }
    }

    pub fn write_png<W: std::io::Write>(&self, w: W) -> Result<()> {
        raster::write_gray1(w, self.width, self.height, &self.bits)
    }

    pub fn read_png<R: std::io::Read>(r: R) -> Result<Self> {
        let (w, h, px) = raster::read_gray8(r)?;
        Ok(Mask { width: w, height: h, bits: px.iter().map(|p| *p >= 128).collect() })
    }
}

/// Edge detector thresholds.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContourConfig {
    /// Second-difference depth jump, as a fraction of the scene depth range.
    pub depth_threshold: f64,
    /// Angle between neighbouring normals marking a crease.
    pub normal_angle_deg: f64,
    /// Apply the 2x2 stroke-weight dilation.
    pub dilate: bool,
}

impl Default for ContourConfig {
    fn default() -> Self {
        ContourConfig { depth_threshold: 0.02, normal_angle_deg: 25.0, dilate: true }
    }
}

/// Z-buffer rendering of depth and flat-shaded normals. Depth at each pixel is
/// the exact ray/plane intersection of the covering triangle.
pub fn render_maps(mesh: &Mesh, cam: &Camera, width: usize, height: usize) -> (DepthMap, NormalMap) {
    let n_px = width * height;
    let mut depth = vec![f64::INFINITY; n_px];
    let mut normals = vec![Vec3::zeros(); n_px];
    let eye = cam.eye();
    let (near, far) = match mesh.bounds() {
        Some((lo, hi)) => {
            let r = (hi - lo).norm() * 0.5;
            let d = ((lo + hi) * 0.5 - eye).dot(&cam.view_dir());
            ((d - r).max(1e-6), (d + r).max(2e-6))
        }
        None => (1.0, 2.0),
    };
    let rays: Vec<Vec3> = (0..n_px).map(|i| cam.pixel_ray(i % width, i / width, width, height)).collect();
    for tri in &mesh.triangles {
        let p = tri.map(|i| mesh.positions[i as usize]);
        let proj = p.map(|v| cam.project(&v));
        if proj.iter().any(|q| q.depth <= 1e-9) {
            continue;
        }
        let px = proj.map(|q| q.pixel(width, height));
        let area = (px[1].0 - px[0].0) * (px[2].1 - px[0].1) - (px[2].0 - px[0].0) * (px[1].1 - px[0].1);
        if area.abs() < 1e-12 {
            continue;
        }
        let mut n = (p[1] - p[0]).cross(&(p[2] - p[0]));
        if n.norm() == 0.0 {
            continue;
        }
        n = n.normalize();
        let min_c = px.iter().map(|q| q.0).fold(f64::INFINITY, f64::min);
        let max_c = px.iter().map(|q| q.0).fold(f64::NEG_INFINITY, f64::max);
        let min_r = px.iter().map(|q| q.1).fold(f64::INFINITY, f64::min);
        let max_r = px.iter().map(|q| q.1).fold(f64::NEG_INFINITY, f64::max);
        let c0 = (min_c - 0.5).ceil().max(0.0) as usize;
        let r0 = (min_r - 0.5).ceil().max(0.0) as usize;
        let c1 = ((max_c - 0.5).floor().min(width as f64 - 1.0)).max(-1.0);
        let r1 = ((max_r - 0.5).floor().min(height as f64 - 1.0)).max(-1.0);
        if c1 < 0.0 || r1 < 0.0 {
            continue;
        }
        let edge = |a: (f64, f64), b: (f64, f64), x: f64, y: f64| (b.0 - a.0) * (y - a.1) - (x - a.0) * (b.1 - a.1);
        let plane = n.dot(&(p[0] - eye));
        for r in r0..=r1 as usize {
            for c in c0..=c1 as usize {
                let (x, y) = (c as f64 + 0.5, r as f64 + 0.5);
                let w0 = edge(px[1], px[2], x, y) * area.signum();
                let w1 = edge(px[2], px[0], x, y) * area.signum();
                let w2 = edge(px[0], px[1], x, y) * area.signum();
                let tol = -1e-9 * area.abs();
                if w0 < tol || w1 < tol || w2 < tol {
                    continue;
                }
                let idx = r * width + c;
                let ray = rays[idx];
                let denom = n.dot(&ray);
                if denom.abs() < 1e-12 {
                    continue;
                }
                let t = plane / denom;
                if t > 0.0 && t < depth[idx] {
                    depth[idx] = t;
                    normals[idx] = if denom > 0.0 { -n } else { n };
                }
            }
        }
    }
    (DepthMap { width, height, depth, near, far }, NormalMap { width, height, normals })
}

/// Line drawing from depth discontinuities and normal creases.
///
/// A foreground pixel is a depth edge when the second difference of depth
/// across it exceeds the threshold in x or y (planar slopes cancel, the nearer
/// side of a jump fires). It is a crease when its normal differs from its right
/// or lower neighbour's by more than the angle threshold.
pub fn extract_contours(depth: &DepthMap, normal: &NormalMap, cfg: &ContourConfig) -> Result<LineDrawing> {
    let (w, h) = (depth.width, depth.height);
    if normal.width != w || normal.height != h || depth.depth.len() != w * h || normal.normals.len() != w * h {
        return Err(Error::SizeMismatch(format!(
            "depth {}x{} vs normal {}x{}",
            w, h, normal.width, normal.height
        )));
    }
    let range = (depth.far - depth.near).max(1e-12);
    let background = depth.far + range;
    let d = |c: isize, r: isize| -> f64 {
        if c < 0 || r < 0 || c >= w as isize || r >= h as isize {
            return background;
        }
        let v = depth.depth[r as usize * w + c as usize];
        if v.is_finite() {
            v
        } else {
            background
        }
    };
    let thr = cfg.depth_threshold * range;
    let cos_thr = cfg.normal_angle_deg.to_radians().cos();
    let mut edges = vec![false; w * h];
    for r in 0..h {
        for c in 0..w {
            let idx = r * w + c;
            if depth.is_background(idx) {
                continue;
            }
            let (ci, ri) = (c as isize, r as isize);
            let here = d(ci, ri);
            let sx = d(ci + 1, ri) + d(ci - 1, ri) - 2.0 * here;
            let sy = d(ci, ri + 1) + d(ci, ri - 1) - 2.0 * here;
            let mut edge = sx > thr || sy > thr;
            if !edge {
                let n = normal.normals[idx];
                for (nc, nr) in [(c + 1, r), (c, r + 1)] {
                    if nc < w && nr < h && !depth.is_background(nr * w + nc) {
                        if n.dot(&normal.normals[nr * w + nc]) < cos_thr {
                            edge = true;
                        }
                    }
                }
            }
            edges[idx] = edge;
        }
    }
    let mut ink = vec![0.0f32; w * h];
    for r in 0..h {
        for c in 0..w {
            let on = edges[r * w + c]
                || (cfg.dilate
                    && ((c > 0 && edges[r * w + c - 1])
                        || (r > 0 && edges[(r - 1) * w + c])
                        || (c > 0 && r > 0 && edges[(r - 1) * w + c - 1])));
            if on {
                ink[r * w + c] = 1.0;
            }
        }
    }
    Ok(LineDrawing { width: w, height: h, ink })
}

/// Renders the contour drawing of `mesh` seen from `cam`.
pub fn render_drawing(mesh: &Mesh, cam: &Camera, width: usize, height: usize, cfg: &ContourConfig) -> LineDrawing {
    let (d, n) = render_maps(mesh, cam, width, height);
    extract_contours(&d, &n, cfg).expect("maps rendered at the same size")
}

/// Filled region enclosed by the drawing's outer contour: everything not
/// reachable from the image border through non-ink pixels. Open contours leak.
pub fn silhouette_mask(drawing: &LineDrawing) -> Mask {
    let (w, h) = (drawing.width, drawing.height);
    let ink = |i: usize| drawing.ink[i] >= 0.5;
    let mut exterior = vec![false; w * h];
    let mut queue = VecDeque::new();
    let seed = |i: usize, exterior: &mut Vec<bool>, queue: &mut VecDeque<usize>| {
        if !ink(i) && !exterior[i] {
            exterior[i] = true;
            queue.push_back(i);
        }
    };
    for c in 0..w {
        seed(c, &mut exterior, &mut queue);
        seed((h - 1) * w + c, &mut exterior, &mut queue);
    }
    for r in 0..h {
        seed(r * w, &mut exterior, &mut queue);
        seed(r * w + w - 1, &mut exterior, &mut queue);
    }
    while let Some(i) = queue.pop_front() {
        let (c, r) = (i % w, i / w);
        if c > 0 {
            seed(i - 1, &mut exterior, &mut queue);
        }
        if c + 1 < w {
            seed(i + 1, &mut exterior, &mut queue);
        }
        if r > 0 {
            seed(i - w, &mut exterior, &mut queue);
        }
        if r + 1 < h {
            seed(i + w, &mut exterior, &mut queue);
        }
    }
    Mask { width: w, height: h, bits: exterior.iter().map(|e| !e).collect() }
}
