//! Evaluation protocol: IoU reports, the carving comparison, inference timing,
//! convergence traces and drawing-robustness fixtures.

use std::path::Path;
use std::time::Instant;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::carve::{carve, carve_from_drawings, voxel_silhouette, CarveJob};
use crate::dataset::LoadedShape;
use crate::error::{Error, Result};
use crate::fusion::{fuse, Predictor, View};
use crate::geometry::{iou, ProjectionMode, ViewpointId};
use crate::render::{silhouette_mask, LineDrawing};

pub const OURS: &str = "ours";
pub const CARVE_RANDOM: &str = "carve_random";
pub const CARVE_RANDOM_EXACT: &str = "carve_random_exact";
pub const CARVE_ORTHOGONAL: &str = "carve_orthogonal";

/// Axis-aligned views used by the orthogonal carving condition: front, right, top, back.
pub const ORTHOGONAL_VIEWS: [u32; 4] = [8, 11, 12, 9];

/// Resolution of the exact silhouettes rendered from ground-truth grids.
pub const EXACT_MASK_SIZE: usize = 128;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EvalRow {
    pub shape_id: String,
    pub method: String,
    pub views: usize,
    pub iou: f64,
    pub time_ms: f64,
}

/// Per-shape rows plus the configuration that produced them.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    pub rows: Vec<EvalRow>,
    pub config: serde_json::Value,
}

/// Aggregate of the rows sharing a method and view count.
#[derive(Clone, Debug, PartialEq)]
pub struct Summary {
    pub method: String,
    pub views: usize,
    pub count: usize,
    pub mean: f64,
    pub stddev: f64,
}

fn csv_header(config: &serde_json::Value) -> String {
    format!("# config: {config}\n")
}

impl EvalReport {
    pub fn to_csv(&self) -> String {
        let mut s = csv_header(&self.config);
        s.push_str("shape_id,method,views,iou,time_ms\n");
        for r in &self.rows {
            s.push_str(&format!("{},{},{},{:.6},{:.3}\n", r.shape_id, r.method, r.views, r.iou, r.time_ms));
        }
        s
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_csv()).map_err(|e| Error::from(e).at(path))
    }

    pub fn ious(&self, method: &str, views: usize) -> Vec<f64> {
        self.rows.iter().filter(|r| r.method == method && r.views == views).map(|r| r.iou).collect()
    }

    pub fn mean_iou(&self, method: &str, views: usize) -> Option<f64> {
        let v = self.ious(method, views);
        (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
    }

    pub fn summaries(&self) -> Vec<Summary> {
        let mut keys: Vec<(String, usize)> = Vec::new();
        for r in &self.rows {
            if !keys.iter().any(|(m, v)| *m == r.method && *v == r.views) {
                keys.push((r.method.clone(), r.views));
            }
        }
        keys.into_iter()
            .map(|(method, views)| {
                let v = self.ious(&method, views);
                let mean = v.iter().sum::<f64>() / v.len() as f64;
                let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / v.len() as f64;
                Summary { method, views, count: v.len(), mean, stddev: var.sqrt() }
            })
            .collect()
    }

    pub fn summary_csv(&self) -> String {
        let mut s = csv_header(&self.config);
        s.push_str("method,views,count,mean_iou,std_iou\n");
        for m in self.summaries() {
            s.push_str(&format!("{},{},{},{:.6},{:.6}\n", m.method, m.views, m.count, m.mean, m.stddev));
        }
        s
    }
}

/// Evaluation settings shared by the report functions.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EvalConfig {
    pub seed: u64,
    /// Updater sweeps after the initial single-view prediction.
    pub iterations: usize,
    /// Record wall time per shape (makes reports non-reproducible byte for byte).
    pub record_time: bool,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig { seed: 0, iterations: crate::fusion::DEFAULT_ITERATIONS, record_time: false }
    }
}

/// Random views of a shape without replacement, the first forced to a corner view.
pub fn select_views(shape: &LoadedShape, count: usize, rng: &mut impl Rng) -> Result<Vec<usize>> {
    let corners: Vec<usize> = (0..shape.views.len()).filter(|i| shape.views[*i].viewpoint.is_corner()).collect();
    let first = *corners.choose(rng).ok_or_else(|| Error::Shape(format!("{} has no corner view", shape.shape_id)))?;
    let mut rest: Vec<usize> = (0..shape.views.len()).filter(|i| *i != first).collect();
    rest.shuffle(rng);
    if count > shape.views.len() {
        return Err(Error::Shape(format!("{} has {} views, {count} requested", shape.shape_id, shape.views.len())));
    }
    let mut out = vec![first];
    out.extend(rest.into_iter().take(count.saturating_sub(1)));
    Ok(out)
}

pub fn shape_rng(seed: u64, index: usize) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ (index as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

fn views_of(shape: &LoadedShape, idx: &[usize]) -> Vec<View> {
    idx.iter()
        .map(|i| {
            let v = &shape.views[*i];
            View { drawing: v.drawing.clone(), camera: v.camera, viewpoint: Some(v.viewpoint) }
        })
        .collect()
}

fn timed<T>(f: impl FnOnce() -> Result<T>) -> Result<(T, f64)> {
    let t = Instant::now();
    let out = f()?;
    Ok((out, t.elapsed().as_secs_f64() * 1e3))
}

fn check_shapes(shapes: &[LoadedShape]) -> Result<()> {
    if shapes.is_empty() {
        Err(Error::NoShapes)
    } else {
        Ok(())
    }
}

/// Per-shape fusion of `views` seeded random views, scored by IoU against ground truth.
pub fn evaluate(predictor: &Predictor, shapes: &[LoadedShape], views: usize, cfg: &EvalConfig) -> Result<EvalReport> {
    check_shapes(shapes)?;
    let rows = shapes
        .par_iter()
        .enumerate()
        .map(|(i, shape)| {
            let idx = select_views(shape, views, &mut shape_rng(cfg.seed, i))?;
            let (grid, ms) = timed(|| {
                fuse(predictor, &views_of(shape, &idx), cfg.iterations, shape.grid.frame(), shape.grid.resolution(), None).map(|r| r.0)
            })?;
            Ok(EvalRow {
                shape_id: shape.shape_id.clone(),
                method: OURS.into(),
                views,
                iou: iou(&grid, &shape.grid, 0.5)?,
                time_ms: if cfg.record_time { ms } else { 0.0 },
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(EvalReport { rows, config: serde_json::json!({ "kind": "evaluate", "views": views, "eval": cfg }) })
}

/// Ours versus carving, for each view count in `1..=max_views`: carving from
/// the same random drawings, from exact silhouettes of the same views, and
/// from drawings of the axis-aligned views.
pub fn compare_carving(predictor: &Predictor, shapes: &[LoadedShape], max_views: usize, cfg: &EvalConfig) -> Result<EvalReport> {
    check_shapes(shapes)?;
    if max_views == 0 || max_views > ORTHOGONAL_VIEWS.len() {
        return Err(Error::InvalidConfig(format!("view counts must lie in 1..={}", ORTHOGONAL_VIEWS.len())));
    }
    let per_shape = shapes
        .par_iter()
        .enumerate()
        .map(|(i, shape)| {
            let mut rows = Vec::new();
            let all = select_views(shape, max_views, &mut shape_rng(cfg.seed, i))?;
            let frame = shape.grid.frame();
            let n = shape.grid.resolution();
            let mut push = |method: &str, views: usize, grid: crate::geometry::WorldGrid, ms: f64| -> Result<()> {
                rows.push(EvalRow {
                    shape_id: shape.shape_id.clone(),
                    method: method.into(),
                    views,
                    iou: iou(&grid, &shape.grid, 0.5)?,
                    time_ms: if cfg.record_time { ms } else { 0.0 },
                });
                Ok(())
            };
            for k in 1..=max_views {
                let idx = &all[..k];
                let (g, ms) = timed(|| fuse(predictor, &views_of(shape, idx), cfg.iterations, frame, n, None).map(|r| r.0))?;
                push(OURS, k, g, ms)?;
                let drawn: Vec<_> = idx.iter().map(|i| (&shape.views[*i].drawing, shape.views[*i].camera)).collect();
                let (g, ms) = timed(|| carve_from_drawings(&drawn, ProjectionMode::Perspective, frame, n))?;
                push(CARVE_RANDOM, k, g, ms)?;
                let exact = CarveJob {
                    views: idx.iter().map(|i| (exact_silhouette(shape, *i), shape.views[*i].camera)).collect(),
                    mode: ProjectionMode::Perspective,
                    frame: *frame,
                    resolution: n,
                };
                let (g, ms) = timed(|| carve(&exact))?;
                push(CARVE_RANDOM_EXACT, k, g, ms)?;
                let ortho: Vec<_> = ORTHOGONAL_VIEWS[..k]
                    .iter()
                    .filter_map(|id| shape.view(ViewpointId::new(*id).ok()?))
                    .map(|v| (&v.drawing, v.camera))
                    .collect();
                let (g, ms) = timed(|| carve_from_drawings(&ortho, ProjectionMode::Perspective, frame, n))?;
                push(CARVE_ORTHOGONAL, k, g, ms)?;
            }
            Ok(rows)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(EvalReport {
        rows: per_shape.into_iter().flatten().collect(),
        config: serde_json::json!({ "kind": "compare", "max_views": max_views, "eval": cfg }),
    })
}

/// Exact silhouette of a shape's ground truth from one of its views.
pub fn exact_silhouette(shape: &LoadedShape, view: usize) -> crate::render::Mask {
    let cam = &shape.views[view].camera;
    voxel_silhouette(&shape.grid, cam, ProjectionMode::Perspective, EXACT_MASK_SIZE, EXACT_MASK_SIZE, 0.5)
}

/// How far a shape is from its own visual hull: 1 minus the IoU of the exact
/// silhouette carving from all of its views against the ground truth.
pub fn hull_gap(shape: &LoadedShape) -> Result<f64> {
    let job = CarveJob {
        views: (0..shape.views.len()).map(|i| (exact_silhouette(shape, i), shape.views[i].camera)).collect(),
        mode: ProjectionMode::Perspective,
        frame: *shape.grid.frame(),
        resolution: shape.grid.resolution(),
    };
    Ok(1.0 - iou(&carve(&job)?, &shape.grid, 0.5)?)
}

/// Indices of shapes with concavities carving cannot recover (hull gap above `min_gap`).
pub fn concave_subset(shapes: &[LoadedShape], min_gap: f64) -> Result<Vec<usize>> {
    let gaps = shapes.par_iter().map(hull_gap).collect::<Result<Vec<_>>>()?;
    Ok(gaps.iter().enumerate().filter(|(_, g)| **g > min_gap).map(|(i, _)| i).collect())
}

/// Least-squares line `y = slope * x + intercept` and its coefficient of determination.
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> (f64, f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let intercept = my - slope * mx;
    let r2 = if syy > 0.0 { (sxy * sxy) / (sxx * syy) } else { 1.0 };
    (slope, intercept, r2)
}

#[derive(Clone, Debug, PartialEq)]
pub struct TimingReport {
    /// `(view count, median milliseconds)`.
    pub medians: Vec<(usize, f64)>,
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
    pub config: serde_json::Value,
}

impl TimingReport {
    pub fn to_csv(&self) -> String {
        let mut s = csv_header(&self.config);
        s.push_str("views,median_ms\n");
        for (v, ms) in &self.medians {
            s.push_str(&format!("{v},{ms:.3}\n"));
        }
        s.push_str(&format!("# fit: slope_ms={:.3} intercept_ms={:.3} r2={:.4}\n", self.slope, self.intercept, self.r2));
        s
    }
}

/// Median wall time of a full fusion for each view count, with a linear fit.
pub fn bench_timing(
    predictor: &Predictor,
    shape: &LoadedShape,
    view_counts: &[usize],
    repetitions: usize,
    iterations: usize,
) -> Result<TimingReport> {
    if repetitions == 0 {
        return Err(Error::InvalidConfig("repetitions must be positive".into()));
    }
    let max = view_counts.iter().copied().max().ok_or_else(|| Error::InvalidConfig("no view counts".into()))?;
    let idx = select_views(shape, max, &mut ChaCha8Rng::seed_from_u64(0))?;
    let views = views_of(shape, &idx);
    let frame = shape.grid.frame();
    let n = shape.grid.resolution();
    // warm-up
    fuse(predictor, &views[..1], iterations, frame, n, None)?;
    let mut medians = Vec::new();
    for &k in view_counts {
        let mut times = (0..repetitions)
            .map(|_| timed(|| fuse(predictor, &views[..k], iterations, frame, n, None)).map(|r| r.1))
            .collect::<Result<Vec<_>>>()?;
        times.sort_by(f64::total_cmp);
        let mid = times.len() / 2;
        let median = if times.len() % 2 == 1 { times[mid] } else { 0.5 * (times[mid - 1] + times[mid]) };
        medians.push((k, median));
    }
    let xs: Vec<f64> = medians.iter().map(|m| m.0 as f64).collect();
    let ys: Vec<f64> = medians.iter().map(|m| m.1).collect();
    let (slope, intercept, r2) = linear_fit(&xs, &ys);
    Ok(TimingReport {
        medians,
        slope,
        intercept,
        r2,
        config: serde_json::json!({ "kind": "bench", "repetitions": repetitions, "iterations": iterations, "shape": shape.shape_id }),
    })
}

/// Mean per-sweep statistics for one view count. Sweep 0 is the single-view prediction.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvergenceRow {
    pub views: usize,
    pub iteration: usize,
    /// Mean L2 distance to the previous sweep (`None` for sweep 0).
    pub mean_l2: Option<f64>,
    pub mean_iou: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConvergenceTable {
    pub rows: Vec<ConvergenceRow>,
    pub config: serde_json::Value,
}

impl ConvergenceTable {
    pub fn to_csv(&self) -> String {
        let mut s = csv_header(&self.config);
        s.push_str("views,iteration,mean_l2,mean_iou\n");
        for r in &self.rows {
            let l2 = r.mean_l2.map_or(String::new(), |v| format!("{v:.6}"));
            s.push_str(&format!("{},{},{},{:.6}\n", r.views, r.iteration, l2, r.mean_iou));
        }
        s
    }

    pub fn row(&self, views: usize, iteration: usize) -> Option<&ConvergenceRow> {
        self.rows.iter().find(|r| r.views == views && r.iteration == iteration)
    }
}

/// Mean inter-sweep L2 distance and IoU per sweep, for each view count.
pub fn convergence_report(
    predictor: &Predictor,
    shapes: &[LoadedShape],
    view_counts: &[usize],
    iterations: usize,
    seed: u64,
) -> Result<ConvergenceTable> {
    check_shapes(shapes)?;
    if iterations > 10 {
        return Err(Error::InvalidConfig("convergence reports cover at most 10 iterations".into()));
    }
    let mut rows = Vec::new();
    for &k in view_counts {
        let traces = shapes
            .par_iter()
            .enumerate()
            .map(|(i, shape)| {
                let idx = select_views(shape, k, &mut shape_rng(seed, i))?;
                let views = views_of(shape, &idx);
                let (_, trace) = fuse(predictor, &views, iterations, shape.grid.frame(), shape.grid.resolution(), Some(&shape.grid))?;
                Ok(trace)
            })
            .collect::<Result<Vec<_>>>()?;
        let count = traces.len() as f64;
        let mean_initial = traces.iter().map(|t| t.initial_iou.unwrap_or(0.0)).sum::<f64>() / count;
        rows.push(ConvergenceRow { views: k, iteration: 0, mean_l2: None, mean_iou: mean_initial });
        for it in 0..iterations {
            rows.push(ConvergenceRow {
                views: k,
                iteration: it + 1,
                mean_l2: Some(traces.iter().map(|t| t.l2[it]).sum::<f64>() / count),
                mean_iou: traces.iter().map(|t| t.iou[it]).sum::<f64>() / count,
            });
        }
    }
    Ok(ConvergenceTable {
        rows,
        config: serde_json::json!({ "kind": "converge", "views": view_counts, "iterations": iterations, "seed": seed }),
    })
}

/// Imperfections applied to a clean drawing.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Perturbation {
    /// Sinusoidal displacement of the strokes.
    Wavy,
    /// Strokes extended past the silhouette.
    Overshot,
    /// Random gaps erased from the strokes.
    Incomplete,
    /// Strokes one pixel heavier.
    Thick,
}

impl Perturbation {
    pub const ALL: [Perturbation; 4] = [Perturbation::Wavy, Perturbation::Overshot, Perturbation::Incomplete, Perturbation::Thick];

    pub fn name(self) -> &'static str {
        match self {
            Perturbation::Wavy => "wavy",
            Perturbation::Overshot => "overshot",
            Perturbation::Incomplete => "incomplete",
            Perturbation::Thick => "thick",
        }
    }
}

/// A perturbed copy of `drawing`.
pub fn perturb(drawing: &LineDrawing, kind: Perturbation, rng: &mut impl Rng) -> LineDrawing {
    let (w, h) = (drawing.width, drawing.height);
    let mut out = drawing.clone();
    match kind {
        Perturbation::Wavy => {
            let amp = (w as f64 / 64.0).max(1.0);
            let period = w as f64 / 4.0;
            let phase: f64 = rng.random_range(0.0..std::f64::consts::TAU);
            for r in 0..h {
                for c in 0..w {
                    let sx = c as f64 + amp * ((r as f64 / period) * std::f64::consts::TAU + phase).sin();
                    let sy = r as f64 + amp * ((c as f64 / period) * std::f64::consts::TAU + phase).sin();
                    let (sx, sy) = (sx.round(), sy.round());
                    out.ink[r * w + c] = if sx >= 0.0 && sy >= 0.0 && (sx as usize) < w && (sy as usize) < h {
                        drawing.get(sx as usize, sy as usize)
                    } else {
                        0.0
                    };
                }
            }
        }
        Perturbation::Overshot => {
            let inside = silhouette_mask(drawing);
            let reach = (w / 32).max(2) as isize;
            for r in 0..h as isize {
                for c in 0..w as isize {
                    if drawing.get(c as usize, r as usize) < 0.5 {
                        continue;
                    }
                    for (dx, dy) in [(1, 0), (-1, 0), (0, 1), (0, -1)] {
                        for s in 1..=reach {
                            let (x, y) = (c + dx * s, r + dy * s);
                            if x < 0 || y < 0 || x >= w as isize || y >= h as isize {
                                break;
                            }
                            if inside.get(x as usize, y as usize) {
                                break;
                            }
                            out.ink[y as usize * w + x as usize] = 1.0;
                        }
                    }
                }
            }
        }
        Perturbation::Incomplete => {
            let gap = (w / 16).max(2);
            let holes = (w * h) / (gap * gap * 12);
            for _ in 0..holes {
                let (x0, y0) = (rng.random_range(0..w), rng.random_range(0..h));
                for y in y0..(y0 + gap).min(h) {
                    for x in x0..(x0 + gap).min(w) {
                        out.ink[y * w + x] = 0.0;
                    }
                }
            }
        }
        Perturbation::Thick => {
            for r in 0..h {
                for c in 0..w {
                    let any = (r.saturating_sub(1)..=(r + 1).min(h - 1))
                        .any(|y| (c.saturating_sub(1)..=(c + 1).min(w - 1)).any(|x| drawing.get(x, y) >= 0.5));
                    out.ink[r * w + c] = if any { 1.0 } else { 0.0 };
                }
            }
        }
    }
    out
}

/// Single-view IoU for clean drawings and for each perturbation (trend only).
pub fn robustness_report(predictor: &Predictor, shapes: &[LoadedShape], seed: u64) -> Result<EvalReport> {
    check_shapes(shapes)?;
    let per_shape = shapes
        .par_iter()
        .enumerate()
        .map(|(i, shape)| {
            let mut rng = shape_rng(seed, i);
            let idx = select_views(shape, 1, &mut rng)?[0];
            let view = &shape.views[idx];
            let mut rows = Vec::new();
            let variants = std::iter::once(("clean".to_string(), view.drawing.clone()))
                .chain(Perturbation::ALL.iter().map(|p| (p.name().to_string(), perturb(&view.drawing, *p, &mut rng))));
            for (name, drawing) in variants {
                let v = View { drawing, camera: view.camera, viewpoint: Some(view.viewpoint) };
                let (g, _) = fuse(predictor, &[v], 0, shape.grid.frame(), shape.grid.resolution(), None)?;
                rows.push(EvalRow { shape_id: shape.shape_id.clone(), method: name, views: 1, iou: iou(&g, &shape.grid, 0.5)?, time_ms: 0.0 });
            }
            Ok(rows)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(EvalReport { rows: per_shape.into_iter().flatten().collect(), config: serde_json::json!({ "kind": "robustness", "seed": seed }) })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_fit_recovers_a_line() {
        let (s, i, r2) = linear_fit(&[1.0, 2.0, 3.0, 4.0], &[140.0, 210.0, 280.0, 350.0]);
        assert!((s - 70.0).abs() < 1e-9 && (i - 70.0).abs() < 1e-9 && (r2 - 1.0).abs() < 1e-12);
        let (_, _, r2) = linear_fit(&[1.0, 2.0, 3.0, 4.0], &[1.0, 3.0, 2.0, 4.0]);
        assert!((r2 - 0.64).abs() < 1e-12);
    }

    #[test]
    fn perturbations_keep_size_and_binary_ink() {
        let mut d = LineDrawing::blank(32, 32);
        for i in 8..24 {
            for j in [8usize, 23] {
                d.ink[j * 32 + i] = 1.0;
                d.ink[i * 32 + j] = 1.0;
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for p in Perturbation::ALL {
            let q = perturb(&d, p, &mut rng);
            assert_eq!((q.width, q.height), (32, 32));
            assert!(q.ink.iter().all(|v| *v == 0.0 || *v == 1.0));
            assert_ne!(q, d, "{p:?}");
        }
        assert!(perturb(&d, Perturbation::Thick, &mut rng).ink_coverage() > d.ink_coverage());
    }
}
