//! Inference orchestration: single-view prediction into a world grid and
//! iterative multi-view refinement with the updater network.

use crate::error::{Error, Result};
use crate::geometry::{iou, resample_world_to_frustum_in, Camera, Frame, FrustumGrid, ViewpointId, WorldGrid};
use crate::network::Network;
use crate::render::LineDrawing;

pub const DEFAULT_ITERATIONS: usize = 5;
pub const SINGLE_CHECKPOINT: &str = "single.ckpt";
pub const UPDATER_CHECKPOINT: &str = "updater.ckpt";

/// One input drawing with the camera it was drawn from.
#[derive(Clone, Debug, PartialEq)]
pub struct View {
    pub drawing: LineDrawing,
    pub camera: Camera,
    pub viewpoint: Option<ViewpointId>,
}

/// The trained single-view and updater networks.
#[derive(Clone, Debug)]
pub struct Predictor {
    pub single: Network<f32>,
    pub updater: Network<f32>,
}

impl Predictor {
    pub fn new(single: Network<f32>, updater: Network<f32>) -> Result<Self> {
        let (a, b) = (single.spec(), updater.spec());
        if a.updater || !b.updater {
            return Err(Error::InvalidConfig("expected a single-view and an updater network".into()));
        }
        if a.input_resolution != b.input_resolution || a.slices != b.slices {
            return Err(Error::InvalidConfig("single-view and updater specs disagree on resolutions".into()));
        }
        Ok(Predictor { single, updater })
    }

    /// Loads `single.ckpt` and `updater.ckpt` from a weights directory.
    pub fn load(dir: impl AsRef<std::path::Path>) -> Result<Self> {
        let dir = dir.as_ref();
        Predictor::new(Network::load(dir.join(SINGLE_CHECKPOINT))?, Network::load(dir.join(UPDATER_CHECKPOINT))?)
    }

    pub fn save(&self, dir: impl AsRef<std::path::Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| Error::from(e).at(dir))?;
        self.single.save(dir.join(SINGLE_CHECKPOINT))?;
        self.updater.save(dir.join(UPDATER_CHECKPOINT))
    }

    pub fn drawing_size(&self) -> usize {
        self.single.spec().input_resolution
    }

    pub fn slices(&self) -> usize {
        self.single.spec().slices
    }
}

/// Per-sweep convergence data.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ConvergenceTrace {
    /// L2 distance between the grids before and after each sweep.
    pub l2: Vec<f64>,
    /// IoU against ground truth after each sweep, when ground truth is given.
    pub iou: Vec<f64>,
    /// IoU of the initial single-view prediction, when ground truth is given.
    pub initial_iou: Option<f64>,
}

/// Writes the frustum's probabilities into the world grid; voxels outside the
/// frustum keep the value from `base` (or 0 without one).
pub fn frustum_into_world(frustum: &FrustumGrid, frame: &Frame, n: usize, base: Option<&WorldGrid>) -> WorldGrid {
    WorldGrid::from_fn(n, *frame, |i, j, k| {
        let p = frame.voxel_center(n, i as isize, j as isize, k as isize);
        frustum.sample(&p).unwrap_or_else(|| base.map_or(0.0, |b| b.get(i, j, k)))
    })
}

/// Resamples a world grid into the network frustum of `camera` (probabilities, not thresholded).
pub fn world_into_frustum(world: &WorldGrid, camera: &Camera, slices: usize) -> Result<FrustumGrid> {
    resample_world_to_frustum_in(world, camera, &camera.implied_frame(), [slices; 3])
}

/// Single-view network prediction resampled into the grid `(frame, n)`.
pub fn predict_single(net: &Network<f32>, drawing: &LineDrawing, camera: &Camera, frame: &Frame, n: usize) -> Result<WorldGrid> {
    let f = net.predict(drawing, camera, None)?;
    Ok(frustum_into_world(&f, frame, n, None))
}

/// One updater application for `view` on the current grid.
///
/// The frustum is coarser than the world grid, so writing the prediction back
/// directly would erode the shape a little on every pass. Instead the
/// updater's change (prediction minus injected estimate), scaled by `step`, is
/// resampled and added, and only where it flips the occupancy decision at 0.5.
pub fn update_once(updater: &Network<f32>, grid: &WorldGrid, view: &View, step: f32) -> Result<WorldGrid> {
    let injected = world_into_frustum(grid, &view.camera, updater.spec().slices)?;
    let pred = updater.predict(&view.drawing, &view.camera, Some(&injected))?;
    let (frame, n) = (*grid.frame(), grid.resolution());
    Ok(WorldGrid::from_fn(n, frame, |i, j, k| {
        let base = grid.get(i, j, k);
        let p = frame.voxel_center(n, i as isize, j as isize, k as isize);
        match (pred.sample(&p), injected.sample(&p)) {
            (Some(after), Some(before)) if (after > 0.5) != (before > 0.5) => (base + step * (after - before)).clamp(0.0, 1.0),
            _ => base,
        }
    }))
}

/// Single-view prediction from the first view, then `iterations` sweeps of the
/// updater over every view in order, updating the grid after each view.
/// The `k`-th application of a given view uses step `1/k`, so the views settle
/// on a common answer instead of trading boundary voxels back and forth, and a
/// repeated view counts as one view visited more often.
pub fn fuse(
    predictor: &Predictor,
    views: &[View],
    iterations: usize,
    frame: &Frame,
    n: usize,
    ground_truth: Option<&WorldGrid>,
) -> Result<(WorldGrid, ConvergenceTrace)> {
    let first = views.first().ok_or_else(|| Error::InvalidConfig("fusion needs at least one view".into()))?;
    let mut grid = predict_single(&predictor.single, &first.drawing, &first.camera, frame, n)?;
    let mut trace = ConvergenceTrace::default();
    if let Some(gt) = ground_truth {
        trace.initial_iou = Some(iou(&grid, gt, 0.5)?);
    }
    let keys: Vec<usize> = views.iter().map(|v| views.iter().position(|w| w == v).unwrap_or(0)).collect();
    let mut visits = vec![0usize; views.len()];
    for _ in 0..iterations {
        let before = grid.clone();
        for (view, key) in views.iter().zip(&keys) {
            visits[*key] += 1;
            grid = update_once(&predictor.updater, &grid, view, 1.0 / visits[*key] as f32)?;
        }
        trace.l2.push(grid.l2_distance(&before)?);
        if let Some(gt) = ground_truth {
            trace.iou.push(iou(&grid, gt, 0.5)?);
        }
    }
    Ok((grid, trace))
}

/// Feedback loop of the updater on a single drawing.
pub fn refine_single(
    predictor: &Predictor,
    view: &View,
    iterations: usize,
    frame: &Frame,
    n: usize,
) -> Result<WorldGrid> {
    Ok(fuse(predictor, std::slice::from_ref(view), iterations, frame, n, None)?.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::viewpoint_camera;
    use crate::network::NetworkSpec;

    fn predictor() -> Predictor {
        let spec = NetworkSpec::toy();
        Predictor::new(Network::new(spec.clone(), 3).unwrap(), Network::new(spec.with_updater(true), 4).unwrap()).unwrap()
    }

    fn view(id: u32, frame: &Frame) -> View {
        let mut d = LineDrawing::blank(64, 64);
        for i in 16..48 {
            d.ink[16 * 64 + i] = 1.0;
            d.ink[i * 64 + 16 + id as usize] = 1.0;
        }
        let id = ViewpointId::new(id).unwrap();
        View { drawing: d, camera: viewpoint_camera(id, frame), viewpoint: Some(id) }
    }

    #[test]
    fn zero_iterations_is_the_single_view_prediction() {
        let p = predictor();
        let frame = Frame::new([0.0; 3], 1.0).unwrap();
        let v = view(0, &frame);
        let single = predict_single(&p.single, &v.drawing, &v.camera, &frame, 12).unwrap();
        let (fused, trace) = fuse(&p, std::slice::from_ref(&v), 0, &frame, 12, None).unwrap();
        assert_eq!(fused, single);
        assert!(trace.l2.is_empty() && trace.initial_iou.is_none());
        assert_eq!(refine_single(&p, &v, 0, &frame, 12).unwrap(), single);
    }

    #[test]
    fn fusion_is_deterministic_and_bounded() {
        let p = predictor();
        let frame = Frame::new([0.0; 3], 1.0).unwrap();
        let views = [view(1, &frame), view(10, &frame), view(12, &frame)];
        let gt = WorldGrid::filled(10, frame, 1.0);
        let (a, ta) = fuse(&p, &views, 3, &frame, 10, Some(&gt)).unwrap();
        let (b, tb) = fuse(&p, &views, 3, &frame, 10, Some(&gt)).unwrap();
        assert_eq!(a, b);
        assert_eq!(ta, tb);
        assert_eq!((ta.l2.len(), ta.iou.len()), (3, 3));
        assert!(ta.l2.iter().all(|d| d.is_finite()));
        assert!(a.values().iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn fusion_errors() {
        let p = predictor();
        let frame = Frame::new([0.0; 3], 1.0).unwrap();
        assert!(matches!(fuse(&p, &[], 5, &frame, 8, None), Err(Error::InvalidConfig(_))));
        let mut v = view(0, &frame);
        v.drawing = LineDrawing::blank(32, 32);
        assert!(fuse(&p, &[v], 1, &frame, 8, None).is_err());
        let spec = NetworkSpec::toy();
        assert!(Predictor::new(Network::new(spec.clone(), 0).unwrap(), Network::new(spec, 0).unwrap()).is_err());
    }

    #[test]
    fn frustum_round_trip_keeps_base_outside() {
        let frame = Frame::new([0.0; 3], 1.0).unwrap();
        let cam = viewpoint_camera(ViewpointId::new(2).unwrap(), &frame);
        let base = WorldGrid::filled(8, Frame::new([0.0; 3], 6.0).unwrap(), 0.25);
        let f = world_into_frustum(&base, &cam, 8).unwrap();
        let back = frustum_into_world(&f, base.frame(), 8, Some(&base));
        // far corners of the large grid lie outside the frustum and keep the base value
        assert_eq!(back.get(0, 0, 0), 0.25);
        assert!(back.values().iter().all(|v| (v - 0.25).abs() < 1e-6 || *v == 0.0));
    }

    #[test]
    fn zero_step_update_is_the_identity() {
        let p = predictor();
        let frame = Frame::new([0.0; 3], 1.0).unwrap();
        let grid = WorldGrid::from_fn(10, frame, |i, j, k| ((i * 7 + j * 3 + k) % 5) as f32 / 4.0);
        assert_eq!(update_once(&p.updater, &grid, &view(3, &frame), 0.0).unwrap(), grid);
    }

    #[test]
    fn repeated_view_matches_more_sweeps_of_one_view() {
        let p = predictor();
        let frame = Frame::new([0.0; 3], 1.0).unwrap();
        let d = view(1, &frame);
        let twice = fuse(&p, &[d.clone(), d.clone()], 3, &frame, 10, None).unwrap().0;
        let once = fuse(&p, std::slice::from_ref(&d), 6, &frame, 10, None).unwrap().0;
        assert!(twice.l2_distance(&once).unwrap() < 1e-9);
    }
}
