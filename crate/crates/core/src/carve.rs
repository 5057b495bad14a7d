//! Silhouette carving: the visual hull of a set of silhouette masks.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{Camera, Frame, ProjectionMode, Vec3, WorldGrid};
use crate::render::{silhouette_mask, LineDrawing, Mask};

/// Masks with their cameras, and the grid to carve.
#[derive(Clone, Debug)]
pub struct CarveJob {
    pub views: Vec<(Mask, Camera)>,
    pub mode: ProjectionMode,
    pub frame: Frame,
    pub resolution: usize,
}

/// Keeps a voxel iff its center projects onto a set pixel of every mask.
/// Centers projecting off-image (or behind the camera) are carved.
pub fn carve(job: &CarveJob) -> Result<WorldGrid> {
    if job.views.is_empty() {
        return Err(Error::InvalidConfig("carving needs at least one view".into()));
    }
    for (_, cam) in &job.views {
        cam.validate()?;
    }
    let n = job.resolution;
    let frame = job.frame;
    let mut values = vec![0.0f32; n * n * n];
    values.par_chunks_mut(n * n).enumerate().for_each(|(k, slab)| {
        for j in 0..n {
            for i in 0..n {
                let p = frame.voxel_center(n, i as isize, j as isize, k as isize);
                if job.views.iter().all(|(mask, cam)| inside(mask, cam, job.mode, &p)) {
                    slab[j * n + i] = 1.0;
                }
            }
        }
    });
    WorldGrid::from_values(n, frame, values)
}

fn inside(mask: &Mask, cam: &Camera, mode: ProjectionMode, p: &Vec3) -> bool {
    let proj = cam.project_with(mode, p);
    if !proj.in_view() {
        return false;
    }
    let (c, r) = proj.pixel(mask.width, mask.height);
    mask.contains_point(c, r)
}

/// Silhouettes recovered from line drawings (filled outer contours, dilated
/// by one pixel for stroke thickness), then carved.
pub fn carve_from_drawings(
    views: &[(&LineDrawing, Camera)],
    mode: ProjectionMode,
    frame: &Frame,
    resolution: usize,
) -> Result<WorldGrid> {
    let job = CarveJob {
        views: views.iter().map(|(d, c)| (silhouette_mask(d).dilated(1), *c)).collect(),
        mode,
        frame: *frame,
        resolution,
    };
    carve(&job)
}

/// Exact silhouette of a voxel shape: pixels whose centers fall inside the
/// projected footprint of any voxel with value `>= threshold`, each voxel
/// treated as a solid cube.
pub fn voxel_silhouette(
    grid: &WorldGrid,
    camera: &Camera,
    mode: ProjectionMode,
    width: usize,
    height: usize,
    threshold: f32,
) -> Mask {
    let n = grid.resolution();
    let frame = grid.frame();
    let half = frame.voxel_size(n) * 0.5;
    let mut mask = Mask::empty(width, height);
    for (i, j, k) in grid.occupied(threshold) {
        let c = grid.voxel_center(i, j, k);
        let mut pts = Vec::with_capacity(8);
        let mut visible = true;
        for corner in 0..8 {
            let d = Vec3::new(
                if corner & 1 == 0 { -half } else { half },
                if corner & 2 == 0 { -half } else { half },
                if corner & 4 == 0 { -half } else { half },
            );
            let proj = camera.project_with(mode, &(c + d));
            if proj.depth <= 0.0 {
                visible = false;
                break;
            }
            pts.push(proj.pixel(width, height));
        }
        if !visible {
            continue;
        }
        let hull = convex_hull(pts);
        let (minx, maxx) = hull.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), p| (a.min(p.0), b.max(p.0)));
        let (miny, maxy) = hull.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), p| (a.min(p.1), b.max(p.1)));
        let c0 = (minx - 0.5).ceil().max(0.0) as usize;
        let r0 = (miny - 0.5).ceil().max(0.0) as usize;
        let c1 = ((maxx - 0.5).floor()).min(width as f64 - 1.0);
        let r1 = ((maxy - 0.5).floor()).min(height as f64 - 1.0);
        if c1 < 0.0 || r1 < 0.0 {
            continue;
        }
        for r in r0..=r1 as usize {
            for col in c0..=c1 as usize {
                if !mask.bits[r * width + col] && in_convex(&hull, (col as f64 + 0.5, r as f64 + 0.5)) {
                    mask.bits[r * width + col] = true;
                }
            }
        }
    }
    mask
}

fn cross(o: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    (a.0 - o.0) * (b.1 - o.1) - (a.1 - o.1) * (b.0 - o.0)
}

/// Andrew's monotone chain, counter-clockwise in (x, y).
fn convex_hull(mut pts: Vec<(f64, f64)>) -> Vec<(f64, f64)> {
    pts.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    let mut hull: Vec<(f64, f64)> = Vec::with_capacity(pts.len() * 2);
    for pass in 0..2 {
        let start = hull.len();
        let iter: Box<dyn Iterator<Item = &(f64, f64)>> =
            if pass == 0 { Box::new(pts.iter()) } else { Box::new(pts.iter().rev()) };
        for p in iter {
            while hull.len() >= start + 2 && cross(hull[hull.len() - 2], hull[hull.len() - 1], *p) <= 0.0 {
                hull.pop();
            }
            hull.push(*p);
        }
        hull.pop();
    }
    hull
}

fn in_convex(hull: &[(f64, f64)], p: (f64, f64)) -> bool {
    if hull.len() < 3 {
        return false;
    }
    (0..hull.len()).all(|i| cross(hull[i], hull[(i + 1) % hull.len()], p) >= 0.0)
}
