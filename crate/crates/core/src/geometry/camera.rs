use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::grid::{Frame, Vec3};
use crate::error::{Error, Result};

pub const DEFAULT_FOV_DEG: f64 = 45.0;

/// Camera distance to the grid center, in multiples of the grid side length.
pub const DISTANCE_PER_EXTENT: f64 = 2.4;

/// Pinhole perspective camera.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Camera {
    pub eye: [f64; 3],
    pub target: [f64; 3],
    pub up: [f64; 3],
    pub fov_deg: f64,
    pub aspect: f64,
}

/// Orthonormal camera basis; `forward` points from the eye towards the target.
#[derive(Clone, Copy, Debug)]
pub struct Basis {
    pub right: Vec3,
    pub up: Vec3,
    pub forward: Vec3,
}

/// A point expressed in the camera's normalized image plane.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Projection {
    /// Normalized device coordinates, `[-1, 1]` across the image, y up.
    pub ndc: [f64; 2],
    /// Distance along the viewing axis.
    pub depth: f64,
}

impl Projection {
    /// Continuous pixel coordinates `(col, row)`, pixel centers at `+0.5`.
    pub fn pixel(&self, width: usize, height: usize) -> (f64, f64) {
        ((self.ndc[0] + 1.0) * 0.5 * width as f64, (1.0 - self.ndc[1]) * 0.5 * height as f64)
    }

    pub fn in_view(&self) -> bool {
        self.depth > 0.0 && self.ndc[0].abs() <= 1.0 && self.ndc[1].abs() <= 1.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum ProjectionMode {
    Perspective,
    Orthographic,
}

impl FromStr for ProjectionMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "perspective" => Ok(ProjectionMode::Perspective),
            "orthographic" => Ok(ProjectionMode::Orthographic),
            other => Err(Error::InvalidConfig(format!("unknown projection mode {other:?}"))),
        }
    }
}

impl Camera {
    pub fn look_at(eye: Vec3, target: Vec3, up: Vec3) -> Result<Self> {
        let cam = Camera {
            eye: eye.into(),
            target: target.into(),
            up: up.into(),
            fov_deg: DEFAULT_FOV_DEG,
            aspect: 1.0,
        };
        cam.validate()?;
        Ok(cam)
    }

    pub fn eye(&self) -> Vec3 {
        Vec3::from(self.eye)
    }

    pub fn target(&self) -> Vec3 {
        Vec3::from(self.target)
    }

    pub fn validate(&self) -> Result<()> {
        let dir = self.target() - self.eye();
        if !dir.iter().chain(self.up.iter()).all(|v| v.is_finite()) || dir.norm() < 1e-12 {
            return Err(Error::InvalidCamera("eye coincides with target".into()));
        }
        let up = Vec3::from(self.up);
        if up.norm() < 1e-12 || dir.normalize().cross(&up.normalize()).norm() < 1e-6 {
            return Err(Error::InvalidCamera("up vector parallel to the view direction".into()));
        }
        if !(self.fov_deg > 10.0 && self.fov_deg < 120.0) {
            return Err(Error::InvalidCamera(format!("field of view {} outside (10, 120)", self.fov_deg)));
        }
        if !(self.aspect > 0.0 && self.aspect.is_finite()) {
            return Err(Error::InvalidCamera(format!("aspect {}", self.aspect)));
        }
        Ok(())
    }

    pub fn basis(&self) -> Basis {
        let forward = (self.target() - self.eye()).normalize();
        let right = forward.cross(&Vec3::from(self.up)).normalize();
        let up = right.cross(&forward);
        Basis { right, up, forward }
    }

    pub fn view_dir(&self) -> Vec3 {
        self.basis().forward
    }

    pub fn tan_half_fov(&self) -> f64 {
        (self.fov_deg.to_radians() * 0.5).tan()
    }

    pub fn project(&self, p: &Vec3) -> Projection {
        let b = self.basis();
        let d = p - self.eye();
        let depth = d.dot(&b.forward);
        let t = self.tan_half_fov();
        Projection {
            ndc: [d.dot(&b.right) / (depth * t * self.aspect), d.dot(&b.up) / (depth * t)],
            depth,
        }
    }

    /// Parallel projection onto the image plane through the target, with the same
    /// image footprint as the perspective view at the target's depth.
    pub fn project_orthographic(&self, p: &Vec3) -> Projection {
        let b = self.basis();
        let d = p - self.eye();
        let scale = (self.target() - self.eye()).norm() * self.tan_half_fov();
        Projection {
            ndc: [d.dot(&b.right) / (scale * self.aspect), d.dot(&b.up) / scale],
            depth: d.dot(&b.forward),
        }
    }

    pub fn project_with(&self, mode: ProjectionMode, p: &Vec3) -> Projection {
        match mode {
            ProjectionMode::Perspective => self.project(p),
            ProjectionMode::Orthographic => self.project_orthographic(p),
        }
    }

    /// Ray direction through normalized image coordinates, scaled so its
    /// forward component is 1 (multiplying by a depth gives the point).
    pub fn ray_dir(&self, ndc_x: f64, ndc_y: f64) -> Vec3 {
        let b = self.basis();
        let t = self.tan_half_fov();
        b.forward + b.right * (ndc_x * t * self.aspect) + b.up * (ndc_y * t)
    }

    /// Ray through the center of pixel `(col, row)` of a `width x height` image.
    pub fn pixel_ray(&self, col: usize, row: usize, width: usize, height: usize) -> Vec3 {
        let x = (col as f64 + 0.5) / width as f64 * 2.0 - 1.0;
        let y = 1.0 - (row as f64 + 0.5) / height as f64 * 2.0;
        self.ray_dir(x, y)
    }

    pub fn translated(&self, by: &Vec3) -> Camera {
        Camera { eye: (self.eye() + by).into(), target: (self.target() + by).into(), ..*self }
    }

    /// Grid frame a catalog camera at this distance would frame: centered on the
    /// target, side `distance / DISTANCE_PER_EXTENT`. Network frustums use it
    /// so their depth range depends on the camera alone.
    pub fn implied_frame(&self) -> Frame {
        let t = self.target();
        let extent = (self.eye() - t).norm() / DISTANCE_PER_EXTENT;
        Frame::new([t.x as f32, t.y as f32, t.z as f32], extent as f32).expect("validated camera has positive distance")
    }

    /// Depth range tangent to the frame's bounding sphere.
    pub fn depth_range(&self, frame: &Frame) -> Result<(f64, f64)> {
        let r = frame.bounding_radius();
        let c = frame.center();
        if (c - self.eye()).norm() <= r {
            return Err(Error::CameraInsideGrid);
        }
        let center_depth = (c - self.eye()).dot(&self.view_dir());
        let near = center_depth - r;
        if near <= 1e-9 * r {
            return Err(Error::CameraInsideGrid);
        }
        Ok((near, center_depth + r))
    }

    pub fn to_text(&self) -> String {
        let v = |a: [f64; 3]| format!("{} {} {}", a[0], a[1], a[2]);
        format!(
            "eye {}\ntarget {}\nup {}\nfov {}\naspect {}\n",
            v(self.eye),
            v(self.target),
            v(self.up),
            self.fov_deg,
            self.aspect
        )
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut eye = None;
        let mut target = None;
        let mut up = None;
        let mut fov = None;
        let mut aspect = None;
        for line in text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#')) {
            let mut parts = line.split_whitespace();
            let key = parts.next().unwrap_or_default();
            let nums: Vec<f64> = parts
                .map(|p| p.parse().map_err(|_| Error::format("camera", format!("bad number in {line:?}"))))
                .collect::<Result<_>>()?;
            let vec3 = || -> Result<[f64; 3]> {
                <[f64; 3]>::try_from(nums.as_slice())
                    .map_err(|_| Error::format("camera", format!("{key} needs 3 values")))
            };
            let scalar = || -> Result<f64> {
                match nums.as_slice() {
                    [x] => Ok(*x),
                    _ => Err(Error::format("camera", format!("{key} needs 1 value"))),
                }
            };
            match key {
                "eye" => eye = Some(vec3()?),
                "target" => target = Some(vec3()?),
                "up" => up = Some(vec3()?),
                "fov" => fov = Some(scalar()?),
                "aspect" => aspect = Some(scalar()?),
                other => return Err(Error::format("camera", format!("unknown key {other:?}"))),
            }
        }
        let missing = |k| Error::format("camera", format!("missing {k}"));
        let cam = Camera {
            eye: eye.ok_or_else(|| missing("eye"))?,
            target: target.ok_or_else(|| missing("target"))?,
            up: up.ok_or_else(|| missing("up"))?,
            fov_deg: fov.ok_or_else(|| missing("fov"))?,
            aspect: aspect.ok_or_else(|| missing("aspect"))?,
        };
        cam.validate()?;
        Ok(cam)
    }
}

/// One of the 13 drawing viewpoints: ids 0-7 are corner (3/4) views, 8-12 the
/// accidental front/back/left/right/top views.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, serde::Serialize, serde::Deserialize)]
#[serde(try_from = "u32", into = "u32")]
pub struct ViewpointId(u8);

pub const VIEWPOINT_COUNT: usize = 13;
pub const CORNER_VIEW_COUNT: usize = 8;

const CORNER_AZIMUTHS: [f64; 4] = [45.0, 135.0, 225.0, 315.0];
const CORNER_ELEVATIONS: [f64; 2] = [25.0, 45.0];

impl ViewpointId {
    pub fn new(id: u32) -> Result<Self> {
        if (id as usize) < VIEWPOINT_COUNT {
            Ok(ViewpointId(id as u8))
        } else {
            Err(Error::InvalidViewpoint(id))
        }
    }

    pub fn all() -> impl Iterator<Item = ViewpointId> {
        (0..VIEWPOINT_COUNT as u8).map(ViewpointId)
    }

    pub fn corners() -> impl Iterator<Item = ViewpointId> {
        (0..CORNER_VIEW_COUNT as u8).map(ViewpointId)
    }

    pub fn get(self) -> u32 {
        self.0 as u32
    }

    pub fn is_corner(self) -> bool {
        (self.0 as usize) < CORNER_VIEW_COUNT
    }

    pub fn label(self) -> &'static str {
        const LABELS: [&str; VIEWPOINT_COUNT] = [
            "corner-az45-el25",
            "corner-az135-el25",
            "corner-az225-el25",
            "corner-az315-el25",
            "corner-az45-el45",
            "corner-az135-el45",
            "corner-az225-el45",
            "corner-az315-el45",
            "front",
            "back",
            "left",
            "right",
            "top",
        ];
        LABELS[self.0 as usize]
    }

    /// Azimuth (degrees from +x towards +y) and elevation (degrees above the xy plane).
    pub fn angles(self) -> (f64, f64) {
        let id = self.0 as usize;
        match id {
            0..=7 => (CORNER_AZIMUTHS[id % 4], CORNER_ELEVATIONS[id / 4]),
            8 => (270.0, 0.0),
            9 => (90.0, 0.0),
            10 => (180.0, 0.0),
            11 => (0.0, 0.0),
            _ => (0.0, 90.0),
        }
    }

    /// Unit vector from the grid center towards the eye.
    pub fn direction(self) -> Vec3 {
        if self.0 == 12 {
            return Vec3::z();
        }
        let (az, el) = self.angles();
        let (az, el) = (az.to_radians(), el.to_radians());
        Vec3::new(el.cos() * az.cos(), el.cos() * az.sin(), el.sin())
    }
}

impl TryFrom<u32> for ViewpointId {
    type Error = Error;
    fn try_from(v: u32) -> Result<Self> {
        ViewpointId::new(v)
    }
}

impl From<ViewpointId> for u32 {
    fn from(v: ViewpointId) -> u32 {
        v.get()
    }
}

impl fmt::Display for ViewpointId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Un-jittered catalog camera looking at the frame center from a constant distance.
pub fn viewpoint_camera(id: ViewpointId, frame: &Frame) -> Camera {
    let center = frame.center();
    let distance = DISTANCE_PER_EXTENT * frame.extent as f64;
    let eye = center + id.direction() * distance;
    let up = if id.0 == 12 { Vec3::y() } else { Vec3::z() };
    Camera::look_at(eye, center, up).expect("catalog cameras are valid")
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JitterKind {
    /// Translation perpendicular to the view direction.
    SingleView,
    /// Unconstrained 3D translation.
    Updater,
}

/// Translates eye and target by a random vector of norm at most `radius`.
pub fn jitter_camera<R: Rng + ?Sized>(cam: &Camera, kind: JitterKind, radius: f64, rng: &mut R) -> Camera {
    if radius <= 0.0 {
        return *cam;
    }
    let b = cam.basis();
    let offset = match kind {
        JitterKind::SingleView => {
            // uniform over the disc perpendicular to the view direction
            let angle = rng.random_range(0.0..std::f64::consts::TAU);
            let r = radius * rng.random::<f64>().sqrt();
            b.right * (r * angle.cos()) + b.up * (r * angle.sin())
        }
        JitterKind::Updater => {
            let dir = loop {
                let v = Vec3::new(
                    StandardNormal.sample(rng),
                    StandardNormal.sample(rng),
                    StandardNormal.sample(rng),
                );
                if v.norm() > 1e-9 {
                    break v.normalize();
                }
            };
            dir * (radius * rng.random::<f64>().cbrt())
        }
    };
    cam.translated(&offset)
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;

    fn frame() -> Frame {
        Frame::new([0.5, 0.5, 0.5], 0.9).unwrap()
    }

    #[test]
    fn catalog_cameras_aim_at_center() {
        let f = frame();
        for id in ViewpointId::all() {
            let cam = viewpoint_camera(id, &f);
            let p = cam.project(&f.center());
            assert!(p.ndc[0].abs() < 1e-9 && p.ndc[1].abs() < 1e-9, "{id}: {p:?}");
            let d = (cam.eye() - f.center()).norm();
            assert!((d - 2.4 * f.extent as f64).abs() < 1e-12);
        }
    }

    #[test]
    fn viewpoint_zero_angles() {
        let id = ViewpointId::new(0).unwrap();
        assert_eq!(id.angles(), (45.0, 25.0));
        let dir = id.direction();
        assert!((dir.z - 25f64.to_radians().sin()).abs() < 1e-12);
        assert!((dir.x - dir.y).abs() < 1e-12 && dir.x > 0.0);
    }

    #[test]
    fn top_view_looks_down() {
        let cam = viewpoint_camera(ViewpointId::new(12).unwrap(), &frame());
        let v = cam.view_dir();
        assert!((v - Vec3::new(0.0, 0.0, -1.0)).norm() < 1e-12);
        assert!((cam.eye[0] - 0.5).abs() < 1e-12 && (cam.eye[1] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn out_of_range_viewpoint() {
        assert!(matches!(ViewpointId::new(13), Err(Error::InvalidViewpoint(13))));
    }

    #[test]
    fn whole_grid_is_inside_the_view() {
        let f = frame();
        for id in ViewpointId::all() {
            let cam = viewpoint_camera(id, &f);
            for corner in 0..8 {
                let s = |b| if corner & b != 0 { 1.0 } else { -1.0 };
                let p = f.center() + Vec3::new(s(1), s(2), s(4)) * f.half_extent();
                assert!(cam.project(&p).in_view(), "{id} corner {corner}");
            }
        }
    }

    #[test]
    fn single_view_jitter_is_perpendicular() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let cam = viewpoint_camera(ViewpointId::new(3).unwrap(), &frame());
        for _ in 0..200 {
            let j = jitter_camera(&cam, JitterKind::SingleView, 0.1, &mut rng);
            let d = j.eye() - cam.eye();
            assert!(d.dot(&cam.view_dir()).abs() < 1e-9);
            assert!(d.norm() <= 0.1 + 1e-12);
            assert!((j.view_dir() - cam.view_dir()).norm() < 1e-12);
        }
    }

    #[test]
    fn zero_radius_jitter_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let cam = viewpoint_camera(ViewpointId::new(9).unwrap(), &frame());
        assert_eq!(jitter_camera(&cam, JitterKind::Updater, 0.0, &mut rng), cam);
        assert_eq!(jitter_camera(&cam, JitterKind::SingleView, 0.0, &mut rng), cam);
    }

    #[test]
    fn updater_jitter_stays_in_ball() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let cam = viewpoint_camera(ViewpointId::new(8).unwrap(), &frame());
        let max = (0..1000)
            .map(|_| (jitter_camera(&cam, JitterKind::Updater, 0.05, &mut rng).eye() - cam.eye()).norm())
            .fold(0.0, f64::max);
        assert!(max <= 0.05 + 1e-12 && max > 0.03);
    }

    #[test]
    fn camera_text_round_trip() {
        let cam = jitter_camera(
            &viewpoint_camera(ViewpointId::new(5).unwrap(), &frame()),
            JitterKind::Updater,
            0.1,
            &mut ChaCha8Rng::seed_from_u64(3),
        );
        assert_eq!(Camera::from_text(&cam.to_text()).unwrap(), cam);
        assert!(Camera::from_text("eye 0 0 0\n").is_err());
    }

    #[test]
    fn invalid_cameras() {
        assert!(Camera::look_at(Vec3::zeros(), Vec3::zeros(), Vec3::z()).is_err());
        assert!(Camera::look_at(Vec3::zeros(), Vec3::z(), Vec3::z()).is_err());
        let mut cam = viewpoint_camera(ViewpointId::new(0).unwrap(), &frame());
        cam.fov_deg = 150.0;
        assert!(cam.validate().is_err());
    }

    #[test]
    fn depth_range_brackets_sphere() {
        let f = frame();
        let cam = viewpoint_camera(ViewpointId::new(0).unwrap(), &f);
        let (near, far) = cam.depth_range(&f).unwrap();
        assert!((far - near - 2.0 * f.bounding_radius()).abs() < 1e-12);
        let inside = Camera::look_at(f.center() + Vec3::x() * 0.1, f.center(), Vec3::z()).unwrap();
        assert!(matches!(inside.depth_range(&f), Err(Error::CameraInsideGrid)));
    }
}
