use super::camera::Camera;
use super::grid::{trilinear, Frame, Vec3, WorldGrid};
use crate::error::{Error, Result};

/// View-aligned occupancy grid: `depth` slices uniform in view depth between
/// `near` and `far`, each a `height x width` image of the camera's field of view.
#[derive(Clone, Debug, PartialEq)]
pub struct FrustumGrid {
    depth: usize,
    height: usize,
    width: usize,
    camera: Camera,
    near: f64,
    far: f64,
    values: Vec<f32>,
}

impl FrustumGrid {
    pub fn new(
        camera: Camera,
        near: f64,
        far: f64,
        [depth, height, width]: [usize; 3],
        values: Vec<f32>,
    ) -> Result<Self> {
        camera.validate()?;
        if !(near > 0.0 && near < far) {
            return Err(Error::InvalidConfig(format!("near {near} / far {far}")));
        }
        if depth < 4 || height < 4 || width < 4 {
            return Err(Error::InvalidConfig(format!("frustum dims {depth}x{height}x{width} below 4")));
        }
        if values.len() != depth * height * width {
            return Err(Error::SizeMismatch(format!(
                "{} values for a {depth}x{height}x{width} frustum",
                values.len()
            )));
        }
        if values.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::format("frustum grid", "values must lie in [0,1]"));
        }
        Ok(FrustumGrid { depth, height, width, camera, near, far, values })
    }

    /// Empty frustum whose depth range is tangent to `frame`'s bounding sphere.
    pub fn empty_for(camera: Camera, frame: &Frame, dims: [usize; 3]) -> Result<Self> {
        let (near, far) = camera.depth_range(frame)?;
        FrustumGrid::new(camera, near, far, dims, vec![0.0; dims.iter().product()])
    }

    pub fn dims(&self) -> [usize; 3] {
        [self.depth, self.height, self.width]
    }

    pub fn camera(&self) -> &Camera {
        &self.camera
    }

    pub fn near_far(&self) -> (f64, f64) {
        (self.near, self.far)
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f32> {
        self.values
    }

    #[inline]
    pub fn index(&self, slice: usize, row: usize, col: usize) -> usize {
        (slice * self.height + row) * self.width + col
    }

    pub fn get(&self, slice: usize, row: usize, col: usize) -> f32 {
        self.values[self.index(slice, row, col)]
    }

    fn slice_thickness(&self) -> f64 {
        (self.far - self.near) / self.depth as f64
    }

    /// World position of a cell center.
    pub fn cell_center(&self, slice: usize, row: usize, col: usize) -> Vec3 {
        let z = self.near + (slice as f64 + 0.5) * self.slice_thickness();
        self.camera.eye() + self.camera.pixel_ray(col, row, self.width, self.height) * z
    }

    /// Binary copy thresholded at `t` (ties occupied).
    pub fn thresholded(&self, t: f32) -> FrustumGrid {
        let values = self.values.iter().map(|v| if *v >= t { 1.0 } else { 0.0 }).collect();
        FrustumGrid { values, ..self.clone() }
    }

    /// Trilinear sample at a world point, `None` outside the frustum.
    pub fn sample(&self, p: &Vec3) -> Option<f32> {
        let proj = self.camera.project(p);
        if !(proj.depth >= self.near && proj.depth <= self.far) || !proj.in_view() {
            return None;
        }
        let (col, row) = proj.pixel(self.width, self.height);
        let s = (proj.depth - self.near) / self.slice_thickness() - 0.5;
        let c = [
            (col - 0.5).clamp(0.0, (self.width - 1) as f64),
            (row - 0.5).clamp(0.0, (self.height - 1) as f64),
            s.clamp(0.0, (self.depth - 1) as f64),
        ];
        Some(trilinear([self.width, self.height, self.depth], |x, y, z| self.get(z, y, x), c))
    }
}

/// Samples `world` at every frustum cell center of `camera`; cells outside the
/// world grid are empty.
pub fn resample_world_to_frustum(world: &WorldGrid, camera: &Camera, dims: [usize; 3]) -> Result<FrustumGrid> {
    resample_world_to_frustum_in(world, camera, world.frame(), dims)
}

/// Like [`resample_world_to_frustum`] with the depth range tangent to
/// `range_frame` instead of the world grid's own frame.
pub fn resample_world_to_frustum_in(
    world: &WorldGrid,
    camera: &Camera,
    range_frame: &Frame,
    dims: [usize; 3],
) -> Result<FrustumGrid> {
    let mut out = FrustumGrid::empty_for(*camera, range_frame, dims)?;
    let [d, h, w] = dims;
    let mut values = Vec::with_capacity(d * h * w);
    for s in 0..d {
        for r in 0..h {
            for c in 0..w {
                values.push(world.sample_clamped(&out.cell_center(s, r, c)).unwrap_or(0.0));
            }
        }
    }
    out.values = values;
    Ok(out)
}

/// Samples `frustum` at every voxel center of a grid framed by `frame`;
/// voxels outside the frustum receive `fill`.
pub fn resample_frustum_to_world(frustum: &FrustumGrid, frame: &Frame, n: usize, fill: f32) -> WorldGrid {
    let mut grid = WorldGrid::empty(n, *frame);
    for k in 0..n {
        for j in 0..n {
            for i in 0..n {
                let p = grid.voxel_center(i, j, k);
                grid.set(i, j, k, frustum.sample(&p).unwrap_or(fill));
            }
        }
    }
    grid
}
