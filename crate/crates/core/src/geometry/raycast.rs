use super::camera::Camera;
use super::grid::{Vec3, WorldGrid};
use crate::error::Result;

/// Shaded first-hit image of a grid's iso-surface; `hit == false` marks background.
#[derive(Clone, Debug, PartialEq)]
pub struct Preview {
    pub width: usize,
    pub height: usize,
    pub shade: Vec<f32>,
    pub hit: Vec<bool>,
}

impl Preview {
    pub fn hit_count(&self) -> usize {
        self.hit.iter().filter(|h| **h).count()
    }

    /// Grayscale PNG: background white, surface shaded from dark to light gray.
    pub fn write_png<W: std::io::Write>(&self, w: W) -> Result<()> {
        let px: Vec<u8> = self
            .shade
            .iter()
            .zip(&self.hit)
            .map(|(s, h)| if *h { (30.0 + 200.0 * s.clamp(0.0, 1.0)) as u8 } else { 255 })
            .collect();
        crate::raster::write_gray8(w, self.width, self.height, &px)
    }
}

fn ray_box(origin: &Vec3, dir: &Vec3, lo: &Vec3, hi: &Vec3) -> Option<(f64, f64)> {
    let (mut t0, mut t1) = (0.0f64, f64::INFINITY);
    for a in 0..3 {
        if dir[a].abs() < 1e-300 {
            if origin[a] < lo[a] || origin[a] > hi[a] {
                return None;
            }
            continue;
        }
        let inv = 1.0 / dir[a];
        let (mut ta, mut tb) = ((lo[a] - origin[a]) * inv, (hi[a] - origin[a]) * inv);
        if ta > tb {
            std::mem::swap(&mut ta, &mut tb);
        }
        t0 = t0.max(ta);
        t1 = t1.min(tb);
    }
    (t0 <= t1).then_some((t0, t1))
}

/// Ray-casts the `iso` level set of the trilinear field (empty beyond the
/// lattice), shading hits by the normalized central-difference gradient.
pub fn raycast_preview(grid: &WorldGrid, cam: &Camera, width: usize, height: usize, iso: f32) -> Preview {
    let n = grid.resolution();
    let frame = grid.frame();
    let h = frame.voxel_size(n);
    let pad = frame.half_extent() + 0.5 * h;
    let (lo, hi) = (frame.center().add_scalar(-pad), frame.center().add_scalar(pad));
    let eye = cam.eye();
    let step = 0.25 * h;
    let mut preview = Preview { width, height, shade: vec![0.0; width * height], hit: vec![false; width * height] };
    if grid.count_occupied(iso) == 0 {
        return preview;
    }
    for row in 0..height {
        for col in 0..width {
            let dir = cam.pixel_ray(col, row, width, height).normalize();
            let Some((t0, t1)) = ray_box(&eye, &dir, &lo, &hi) else { continue };
            let mut prev_t = t0;
            let mut t = t0;
            let mut found = None;
            while t <= t1 + step {
                if grid.sample_padded(&(eye + dir * t)) >= iso {
                    found = Some((prev_t, t));
                    break;
                }
                prev_t = t;
                t += step;
            }
            let Some((mut a, mut b)) = found else { continue };
            for _ in 0..12 {
                let m = 0.5 * (a + b);
                if grid.sample_padded(&(eye + dir * m)) >= iso {
                    b = m;
                } else {
                    a = m;
                }
            }
            let p = eye + dir * b;
            let g = |d: Vec3| (grid.sample_padded(&(p + d)) - grid.sample_padded(&(p - d))) as f64;
            let grad = Vec3::new(g(Vec3::x() * h), g(Vec3::y() * h), g(Vec3::z() * h));
            let shade = if grad.norm() > 1e-12 { (-grad.normalize()).dot(&-dir).max(0.0) } else { 1.0 };
            let idx = row * width + col;
            preview.hit[idx] = true;
            preview.shade[idx] = (0.15 + 0.85 * shade) as f32;
        }
    }
    preview
}
