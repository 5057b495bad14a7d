use std::io::{Read, Write};

use nalgebra::Vector3;

use crate::error::{Error, Result};

pub type Vec3 = Vector3<f64>;

/// Fraction of the grid side taken by the largest side of the framed object.
pub const FRAME_MARGIN: f64 = 1.2;

/// Placement of a cubical grid in world space.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Frame {
    pub center: [f32; 3],
    /// Side length of the cube covered by the grid.
    pub extent: f32,
}

impl Frame {
    pub fn new(center: [f32; 3], extent: f32) -> Result<Self> {
        if !(extent > 0.0 && extent.is_finite()) || center.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidConfig(format!("bad grid frame {center:?} / {extent}")));
        }
        Ok(Frame { center, extent })
    }

    /// Frame whose cube covers 120% of the largest side of the box `[min, max]`.
    pub fn around_box(min: Vec3, max: Vec3) -> Result<Self> {
        let c = (min + max) * 0.5;
        let side = (max - min).max();
        Frame::new([c.x as f32, c.y as f32, c.z as f32], (side * FRAME_MARGIN) as f32)
    }

    pub fn center(&self) -> Vec3 {
        Vec3::new(self.center[0] as f64, self.center[1] as f64, self.center[2] as f64)
    }

    pub fn half_extent(&self) -> f64 {
        self.extent as f64 * 0.5
    }

    pub fn bounding_radius(&self) -> f64 {
        self.half_extent() * 3f64.sqrt()
    }

    pub fn voxel_size(&self, n: usize) -> f64 {
        self.extent as f64 / n as f64
    }

    /// Offset of voxel index `i` from the frame center along one axis.
    /// Exactly antisymmetric: `offset(i) == -offset(n - 1 - i)`.
    #[inline]
    pub fn offset(&self, i: isize, n: usize) -> f64 {
        (i as f64 + 0.5 - n as f64 * 0.5) * self.voxel_size(n)
    }

    pub fn voxel_center(&self, n: usize, i: isize, j: isize, k: isize) -> Vec3 {
        self.center() + Vec3::new(self.offset(i, n), self.offset(j, n), self.offset(k, n))
    }

    /// Continuous voxel coordinates of a world point (voxel centers at integers).
    pub fn to_grid(&self, n: usize, p: &Vec3) -> Vec3 {
        let h = self.voxel_size(n);
        let shift = n as f64 * 0.5 - 0.5;
        (p - self.center()).map(|d| d / h + shift)
    }

    pub fn contains(&self, p: &Vec3) -> bool {
        let d = p - self.center();
        let he = self.half_extent();
        d.iter().all(|v| v.abs() <= he)
    }

    pub fn approx_eq(&self, other: &Frame) -> bool {
        let tol = 1e-6 * self.extent.abs().max(1.0);
        (self.extent - other.extent).abs() <= tol
            && self.center.iter().zip(other.center.iter()).all(|(a, b)| (a - b).abs() <= tol)
    }
}

impl Default for Frame {
    fn default() -> Self {
        Frame { center: [0.0; 3], extent: 1.0 }
    }
}

/// Cubical occupancy-probability grid in world coordinates, x-fastest layout.
#[derive(Clone, Debug, PartialEq)]
pub struct WorldGrid {
    n: usize,
    frame: Frame,
    values: Vec<f32>,
}

impl WorldGrid {
    pub fn empty(n: usize, frame: Frame) -> Self {
        WorldGrid { n, frame, values: vec![0.0; n * n * n] }
    }

    pub fn filled(n: usize, frame: Frame, value: f32) -> Self {
        WorldGrid { n, frame, values: vec![value; n * n * n] }
    }

    pub fn from_values(n: usize, frame: Frame, values: Vec<f32>) -> Result<Self> {
        if n == 0 || values.len() != n * n * n {
            return Err(Error::SizeMismatch(format!("{} values for a {n}^3 grid", values.len())));
        }
        if values.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::format("grid", "occupancy values must lie in [0,1]"));
        }
        Ok(WorldGrid { n, frame, values })
    }

    /// Builds a grid by evaluating `f(i, j, k)` at every voxel.
    pub fn from_fn(n: usize, frame: Frame, mut f: impl FnMut(usize, usize, usize) -> f32) -> Self {
        let mut values = Vec::with_capacity(n * n * n);
        for k in 0..n {
            for j in 0..n {
                for i in 0..n {
                    values.push(f(i, j, k).clamp(0.0, 1.0));
                }
            }
        }
        WorldGrid { n, frame, values }
    }

    pub fn resolution(&self) -> usize {
        self.n
    }

    pub fn frame(&self) -> &Frame {
        &self.frame
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.n * (j + self.n * k)
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, k: usize) -> f32 {
        self.values[self.index(i, j, k)]
    }

    pub fn set(&mut self, i: usize, j: usize, k: usize, v: f32) {
        let idx = self.index(i, j, k);
        self.values[idx] = v.clamp(0.0, 1.0);
    }

    /// Value at integer coordinates, zero outside the lattice.
    #[inline]
    pub fn get_padded(&self, i: isize, j: isize, k: isize) -> f32 {
        let n = self.n as isize;
        if i < 0 || j < 0 || k < 0 || i >= n || j >= n || k >= n {
            0.0
        } else {
            self.values[self.index(i as usize, j as usize, k as usize)]
        }
    }

    pub fn voxel_center(&self, i: usize, j: usize, k: usize) -> Vec3 {
        self.frame.voxel_center(self.n, i as isize, j as isize, k as isize)
    }

    pub fn occupied(&self, threshold: f32) -> impl Iterator<Item = (usize, usize, usize)> + '_ {
        let n = self.n;
        self.values
            .iter()
            .enumerate()
            .filter(move |(_, v)| **v >= threshold)
            .map(move |(idx, _)| (idx % n, (idx / n) % n, idx / (n * n)))
    }

    pub fn count_occupied(&self, threshold: f32) -> usize {
        self.values.iter().filter(|v| **v >= threshold).count()
    }

    pub fn occupancy_fraction(&self, threshold: f32) -> f64 {
        self.count_occupied(threshold) as f64 / self.values.len() as f64
    }

    /// Binary copy: 1 where the value reaches `threshold`, else 0.
    pub fn thresholded(&self, threshold: f32) -> WorldGrid {
        let values = self.values.iter().map(|v| if *v >= threshold { 1.0 } else { 0.0 }).collect();
        WorldGrid { n: self.n, frame: self.frame, values }
    }

    /// Number of 6-connected components of the voxels at or above `threshold`.
    pub fn component_count(&self, threshold: f32) -> usize {
        let n = self.n;
        let mut seen = vec![false; self.values.len()];
        let mut stack = Vec::new();
        let mut components = 0;
        for start in 0..self.values.len() {
            if seen[start] || self.values[start] < threshold {
                continue;
            }
            components += 1;
            seen[start] = true;
            stack.push(start);
            while let Some(idx) = stack.pop() {
                let (i, j, k) = (idx % n, (idx / n) % n, idx / (n * n));
                let mut visit = |ni: usize, nj: usize, nk: usize| {
                    let nidx = self.index(ni, nj, nk);
                    if !seen[nidx] && self.values[nidx] >= threshold {
                        seen[nidx] = true;
                        stack.push(nidx);
                    }
                };
                if i > 0 {
                    visit(i - 1, j, k);
                }
                if i + 1 < n {
                    visit(i + 1, j, k);
                }
                if j > 0 {
                    visit(i, j - 1, k);
                }
                if j + 1 < n {
                    visit(i, j + 1, k);
                }
                if k > 0 {
                    visit(i, j, k - 1);
                }
                if k + 1 < n {
                    visit(i, j, k + 1);
                }
            }
        }
        components
    }

    /// Reflection through the frame's xy plane (k -> n-1-k).
    pub fn mirror_z(&self) -> WorldGrid {
        let n = self.n;
        WorldGrid::from_fn(n, self.frame, |i, j, k| self.get(i, j, n - 1 - k))
    }

    /// Trilinear sample clamped to the outermost voxel centers; `None` outside the grid cube.
    pub fn sample_clamped(&self, p: &Vec3) -> Option<f32> {
        if !self.frame.contains(p) {
            return None;
        }
        let c = self.frame.to_grid(self.n, p);
        let max = (self.n - 1) as f64;
        Some(trilinear(
            [self.n; 3],
            |i, j, k| self.get(i, j, k),
            [c.x.clamp(0.0, max), c.y.clamp(0.0, max), c.z.clamp(0.0, max)],
        ))
    }

    /// Trilinear sample treating everything beyond the lattice as empty.
    pub fn sample_padded(&self, p: &Vec3) -> f32 {
        let c = self.frame.to_grid(self.n, p);
        let n = self.n as f64;
        if c.iter().any(|v| !(-1.0..n).contains(v)) {
            return 0.0;
        }
        let (i0, j0, k0) = (c.x.floor(), c.y.floor(), c.z.floor());
        let (tx, ty, tz) = ((c.x - i0) as f32, (c.y - j0) as f32, (c.z - k0) as f32);
        let (i0, j0, k0) = (i0 as isize, j0 as isize, k0 as isize);
        let g = |di, dj, dk| self.get_padded(i0 + di, j0 + dj, k0 + dk);
        let x00 = lerp(g(0, 0, 0), g(1, 0, 0), tx);
        let x10 = lerp(g(0, 1, 0), g(1, 1, 0), tx);
        let x01 = lerp(g(0, 0, 1), g(1, 0, 1), tx);
        let x11 = lerp(g(0, 1, 1), g(1, 1, 1), tx);
        lerp(lerp(x00, x10, ty), lerp(x01, x11, ty), tz)
    }

    /// Euclidean distance between the value vectors of two grids on the same lattice.
    pub fn l2_distance(&self, other: &WorldGrid) -> Result<f64> {
        self.check_compatible(other)?;
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| {
                let d = (*a - *b) as f64;
                d * d
            })
            .sum::<f64>()
            .sqrt())
    }

    pub fn check_compatible(&self, other: &WorldGrid) -> Result<()> {
        if self.n != other.n {
            return Err(Error::FrameMismatch(format!("resolution {} vs {}", self.n, other.n)));
        }
        if !self.frame.approx_eq(&other.frame) {
            return Err(Error::FrameMismatch(format!("{:?} vs {:?}", self.frame, other.frame)));
        }
        Ok(())
    }

    /// Serializes to the `VXG1` binary layout.
    pub fn write_vxg<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(b"VXG1")?;
        for _ in 0..3 {
            w.write_all(&(self.n as u32).to_le_bytes())?;
        }
        for c in self.frame.center {
            w.write_all(&c.to_le_bytes())?;
        }
        w.write_all(&self.frame.extent.to_le_bytes())?;
        let mut buf = Vec::with_capacity(self.values.len() * 4);
        for v in &self.values {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        w.write_all(&buf)?;
        Ok(())
    }

    pub fn to_vxg_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(32 + self.values.len() * 4);
        self.write_vxg(&mut out).expect("writing to a Vec cannot fail");
        out
    }

    pub fn read_vxg<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != b"VXG1" {
            return Err(Error::format("voxel grid", "bad magic"));
        }
        let mut word = [0u8; 4];
        let mut dims = [0usize; 3];
        for d in &mut dims {
            r.read_exact(&mut word)?;
            *d = u32::from_le_bytes(word) as usize;
        }
        if dims[0] != dims[1] || dims[1] != dims[2] || dims[0] == 0 || dims[0] > 1024 {
            return Err(Error::format("voxel grid", format!("unsupported dimensions {dims:?}")));
        }
        let mut f = [0f32; 4];
        for x in &mut f {
            r.read_exact(&mut word)?;
            *x = f32::from_le_bytes(word);
        }
        let frame = Frame::new([f[0], f[1], f[2]], f[3])?;
        let n = dims[0];
        let mut raw = vec![0u8; n * n * n * 4];
        r.read_exact(&mut raw)?;
        let values =
            raw.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect();
        WorldGrid::from_values(n, frame, values)
    }

    pub fn save(&self, path: impl AsRef<std::path::Path>) -> Result<()> {
        let path = path.as_ref();
        let f = std::fs::File::create(path).map_err(|e| Error::from(e).at(path))?;
        self.write_vxg(std::io::BufWriter::new(f)).map_err(|e| e.at(path))
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        let path = path.as_ref();
        let f = std::fs::File::open(path).map_err(|e| Error::from(e).at(path))?;
        WorldGrid::read_vxg(std::io::BufReader::new(f)).map_err(|e| e.at(path))
    }
}

#[inline]
pub(crate) fn lerp(a: f32, b: f32, t: f32) -> f32 {
    // a == b returns a exactly, so constant fields survive interpolation unchanged
    a + t * (b - a)
}

/// Trilinear interpolation over a lattice with dims `[nx, ny, nz]`; coordinates
/// must already be clamped to `[0, n-1]`.
pub(crate) fn trilinear(
    dims: [usize; 3],
    get: impl Fn(usize, usize, usize) -> f32,
    c: [f64; 3],
) -> f32 {
    let split = |v: f64, n: usize| {
        let i0 = (v.floor() as usize).min(n.saturating_sub(1));
        let i1 = (i0 + 1).min(n - 1);
        (i0, i1, (v - i0 as f64) as f32)
    };
    let (i0, i1, tx) = split(c[0], dims[0]);
    let (j0, j1, ty) = split(c[1], dims[1]);
    let (k0, k1, tz) = split(c[2], dims[2]);
    let x00 = lerp(get(i0, j0, k0), get(i1, j0, k0), tx);
    let x10 = lerp(get(i0, j1, k0), get(i1, j1, k0), tx);
    let x01 = lerp(get(i0, j0, k1), get(i1, j0, k1), tx);
    let x11 = lerp(get(i0, j1, k1), get(i1, j1, k1), tx);
    lerp(lerp(x00, x10, ty), lerp(x01, x11, ty), tz)
}

/// Intersection-over-union of the two grids thresholded at `threshold` (ties occupied).
/// Two empty sets compare as identical (1.0).
pub fn iou(a: &WorldGrid, b: &WorldGrid, threshold: f32) -> Result<f64> {
    a.check_compatible(b)?;
    let (mut inter, mut union) = (0usize, 0usize);
    for (x, y) in a.values.iter().zip(&b.values) {
        let (x, y) = (*x >= threshold, *y >= threshold);
        inter += (x && y) as usize;
        union += (x || y) as usize;
    }
    Ok(if union == 0 { 1.0 } else { inter as f64 / union as f64 })
}
