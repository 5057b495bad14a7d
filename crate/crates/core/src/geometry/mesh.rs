use std::collections::HashMap;
use std::io::{BufRead, Write};
use std::path::Path;

use super::grid::{Vec3, WorldGrid};
use crate::error::{Error, Result};

/// Indexed triangle mesh.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Mesh {
    pub positions: Vec<Vec3>,
    pub triangles: Vec<[u32; 3]>,
}

/// Parameters of the feature-preserving vertex filter applied after meshing.
#[derive(Clone, Copy, Debug)]
pub struct BilateralParams {
    pub iterations: usize,
    /// Spatial kernel width in voxels.
    pub spatial_sigma_voxels: f64,
    /// Normal-difference kernel width.
    pub normal_sigma_deg: f64,
}

impl Default for BilateralParams {
    fn default() -> Self {
        BilateralParams { iterations: 2, spatial_sigma_voxels: 1.0, normal_sigma_deg: 30.0 }
    }
}

impl Mesh {
    pub fn is_empty(&self) -> bool {
        self.triangles.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.positions.len() as u32;
        if let Some(t) = self.triangles.iter().find(|t| t.iter().any(|i| *i >= n)) {
            return Err(Error::format("mesh", format!("triangle {t:?} indexes past {n} vertices")));
        }
        Ok(())
    }

    fn edge_counts(&self) -> HashMap<(u32, u32), u32> {
        let mut edges = HashMap::with_capacity(self.triangles.len() * 3 / 2);
        for t in &self.triangles {
            for e in 0..3 {
                let (a, b) = (t[e], t[(e + 1) % 3]);
                *edges.entry((a.min(b), a.max(b))).or_insert(0) += 1;
            }
        }
        edges
    }

    /// Number of edges used by exactly one triangle.
    pub fn boundary_edges(&self) -> usize {
        self.edge_counts().values().filter(|c| **c == 1).count()
    }

    /// Every edge shared by exactly two triangles.
    pub fn is_watertight(&self) -> bool {
        !self.triangles.is_empty() && self.edge_counts().values().all(|c| *c == 2)
    }

    /// V - E + F over referenced vertices.
    pub fn euler_characteristic(&self) -> i64 {
        let mut used = vec![false; self.positions.len()];
        for t in &self.triangles {
            for i in t {
                used[*i as usize] = true;
            }
        }
        let v = used.iter().filter(|u| **u).count() as i64;
        v - self.edge_counts().len() as i64 + self.triangles.len() as i64
    }

    pub fn triangle_area(&self, t: &[u32; 3]) -> f64 {
        let [a, b, c] = t.map(|i| self.positions[i as usize]);
        (b - a).cross(&(c - a)).norm() * 0.5
    }

    /// Signed enclosed volume (divergence theorem); positive for outward winding.
    pub fn volume(&self) -> f64 {
        self.triangles
            .iter()
            .map(|t| {
                let [a, b, c] = t.map(|i| self.positions[i as usize]);
                a.dot(&b.cross(&c))
            })
            .sum::<f64>()
            / 6.0
    }

    pub fn bounds(&self) -> Option<(Vec3, Vec3)> {
        let first = *self.positions.first()?;
        Some(self.positions.iter().fold((first, first), |(lo, hi), p| (lo.inf(p), hi.sup(p))))
    }

    /// Axis-aligned box with outward-facing triangles.
    pub fn cuboid(min: Vec3, max: Vec3) -> Mesh {
        let positions = (0..8)
            .map(|i| {
                Vec3::new(
                    if i & 1 == 0 { min.x } else { max.x },
                    if i & 2 == 0 { min.y } else { max.y },
                    if i & 4 == 0 { min.z } else { max.z },
                )
            })
            .collect();
        let quads = [[0, 4, 6, 2], [1, 3, 7, 5], [0, 1, 5, 4], [2, 6, 7, 3], [0, 2, 3, 1], [4, 5, 7, 6]];
        let triangles = quads.iter().flat_map(|q| [[q[0], q[1], q[2]], [q[0], q[2], q[3]]]).collect();
        Mesh { positions, triangles }
    }

    /// Latitude/longitude sphere with outward-facing triangles.
    pub fn uv_sphere(center: Vec3, radius: f64, stacks: usize, slices: usize) -> Mesh {
        let mut positions = vec![center + Vec3::z() * radius];
        for s in 1..stacks {
            let phi = std::f64::consts::PI * s as f64 / stacks as f64;
            for l in 0..slices {
                let theta = std::f64::consts::TAU * l as f64 / slices as f64;
                positions.push(
                    center + Vec3::new(phi.sin() * theta.cos(), phi.sin() * theta.sin(), phi.cos()) * radius,
                );
            }
        }
        positions.push(center - Vec3::z() * radius);
        let bottom = (positions.len() - 1) as u32;
        let ring = |s: usize, l: usize| (1 + (s - 1) * slices + l % slices) as u32;
        let mut triangles = Vec::new();
        for l in 0..slices {
            triangles.push([0, ring(1, l), ring(1, l + 1)]);
            triangles.push([bottom, ring(stacks - 1, l + 1), ring(stacks - 1, l)]);
        }
        for s in 1..stacks - 1 {
            for l in 0..slices {
                let (a, b, c, d) = (ring(s, l), ring(s, l + 1), ring(s + 1, l), ring(s + 1, l + 1));
                triangles.push([a, c, d]);
                triangles.push([a, d, b]);
            }
        }
        Mesh { positions, triangles }
    }

    /// Area-weighted vertex normals.
    pub fn vertex_normals(&self) -> Vec<Vec3> {
        let mut normals = vec![Vec3::zeros(); self.positions.len()];
        for t in &self.triangles {
            let [a, b, c] = t.map(|i| self.positions[i as usize]);
            let n = (b - a).cross(&(c - a));
            for i in t {
                normals[*i as usize] += n;
            }
        }
        for n in &mut normals {
            let len = n.norm();
            if len > 0.0 {
                *n /= len;
            }
        }
        normals
    }

    fn neighbors(&self) -> Vec<Vec<u32>> {
        let mut adj: Vec<Vec<u32>> = vec![Vec::new(); self.positions.len()];
        for t in &self.triangles {
            for e in 0..3 {
                let (a, b) = (t[e], t[(e + 1) % 3]);
                adj[a as usize].push(b);
                adj[b as usize].push(a);
            }
        }
        for a in &mut adj {
            a.sort_unstable();
            a.dedup();
        }
        adj
    }

    /// Moves each vertex along its normal by a spatially and normal-weighted
    /// average of its 1-ring's offsets, which smooths aliasing steps while
    /// keeping creases.
    pub fn bilateral_filter(&mut self, spatial_sigma: f64, normal_sigma_rad: f64, iterations: usize) {
        let adj = self.neighbors();
        let two_ss = 2.0 * spatial_sigma * spatial_sigma;
        let two_sn = 2.0 * normal_sigma_rad * normal_sigma_rad;
        for _ in 0..iterations {
            let normals = self.vertex_normals();
            let moved: Vec<Vec3> = self
                .positions
                .iter()
                .enumerate()
                .map(|(v, p)| {
                    let n = normals[v];
                    let (mut sum, mut wsum) = (0.0, 0.0);
                    for q in &adj[v] {
                        let q = *q as usize;
                        let d = self.positions[q] - p;
                        let angle = n.dot(&normals[q]).clamp(-1.0, 1.0).acos();
                        let w = (-d.norm_squared() / two_ss).exp() * (-angle * angle / two_sn).exp();
                        sum += w * d.dot(&n);
                        wsum += w;
                    }
                    if wsum > 0.0 {
                        p + n * (sum / wsum)
                    } else {
                        *p
                    }
                })
                .collect();
            self.positions = moved;
        }
    }

    /// Drops triangles whose area is at most `min_area`, then unreferenced vertices.
    pub fn remove_degenerate(&mut self, min_area: f64) {
        let tris: Vec<[u32; 3]> =
            self.triangles.iter().copied().filter(|t| self.triangle_area(t) > min_area).collect();
        let mut remap = vec![u32::MAX; self.positions.len()];
        let mut positions = Vec::new();
        for t in &tris {
            for i in t {
                if remap[*i as usize] == u32::MAX {
                    remap[*i as usize] = positions.len() as u32;
                    positions.push(self.positions[*i as usize]);
                }
            }
        }
        self.triangles = tris.iter().map(|t| t.map(|i| remap[i as usize])).collect();
        self.positions = positions;
    }

    pub fn write_obj<W: Write>(&self, mut w: W) -> Result<()> {
        for p in &self.positions {
            writeln!(w, "v {} {} {}", p.x, p.y, p.z)?;
        }
        for t in &self.triangles {
            writeln!(w, "f {} {} {}", t[0] + 1, t[1] + 1, t[2] + 1)?;
        }
        Ok(())
    }

    pub fn to_obj_string(&self) -> String {
        let mut out = Vec::new();
        self.write_obj(&mut out).expect("writing to a Vec cannot fail");
        String::from_utf8(out).expect("ascii")
    }

    /// Reads vertices and faces of a Wavefront file; polygons are fan-triangulated.
    pub fn read_obj<R: BufRead>(r: R) -> Result<Mesh> {
        let mut mesh = Mesh::default();
        for (lineno, line) in r.lines().enumerate() {
            let line = line?;
            let mut parts = line.split_whitespace();
            let bad = |what: &str| Error::format("obj", format!("line {}: {what}", lineno + 1));
            match parts.next() {
                Some("v") => {
                    let c: Vec<f64> = parts.take(3).map(|p| p.parse().map_err(|_| bad("bad vertex"))).collect::<Result<_>>()?;
                    if c.len() != 3 {
                        return Err(bad("vertex needs 3 coordinates"));
                    }
                    mesh.positions.push(Vec3::new(c[0], c[1], c[2]));
                }
                Some("f") => {
                    let idx: Vec<u32> = parts
                        .map(|p| {
                            let first = p.split('/').next().unwrap_or_default();
                            let i: i64 = first.parse().map_err(|_| bad("bad face index"))?;
                            let n = mesh.positions.len() as i64;
                            let resolved = if i < 0 { n + i } else { i - 1 };
                            if resolved < 0 {
                                return Err(bad("face index out of range"));
                            }
                            Ok(resolved as u32)
                        })
                        .collect::<Result<_>>()?;
                    if idx.len() < 3 {
                        return Err(bad("face needs 3 vertices"));
                    }
                    for k in 1..idx.len() - 1 {
                        mesh.triangles.push([idx[0], idx[k], idx[k + 1]]);
                    }
                }
                _ => {}
            }
        }
        mesh.validate()?;
        Ok(mesh)
    }

    pub fn load_obj(path: impl AsRef<Path>) -> Result<Mesh> {
        let path = path.as_ref();
        let f = std::fs::File::open(path).map_err(|e| Error::from(e).at(path))?;
        Mesh::read_obj(std::io::BufReader::new(f)).map_err(|e| e.at(path))
    }

    pub fn save_obj(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let f = std::fs::File::create(path).map_err(|e| Error::from(e).at(path))?;
        self.write_obj(std::io::BufWriter::new(f)).map_err(|e| e.at(path))
    }
}

// Kuhn decomposition of the unit cube into six tetrahedra sharing the main
// diagonal; neighbouring cubes agree on shared face diagonals.
const AXIS_ORDERS: [[usize; 3]; 6] = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];

/// Iso-surface of `grid` at `iso` (values equal to `iso` count as inside),
/// triangulated over a tetrahedral split of each lattice cell. The lattice is
/// padded with empty voxels, so any solid yields a closed, consistently
/// oriented 2-manifold.
pub fn marching_tetrahedra(grid: &WorldGrid, iso: f32) -> Mesh {
    let n = grid.resolution();
    let m = n + 2;
    let frame = *grid.frame();
    let id = |q: [usize; 3]| (q[0] + m * (q[1] + m * q[2])) as u64;
    let value = |q: [usize; 3]| grid.get_padded(q[0] as isize - 1, q[1] as isize - 1, q[2] as isize - 1);
    let pos = |q: [usize; 3]| frame.voxel_center(n, q[0] as isize - 1, q[1] as isize - 1, q[2] as isize - 1);

    let mut mesh = Mesh::default();
    let mut edge_vertex: HashMap<(u64, u64), u32> = HashMap::new();
    let mut crossing = |mesh: &mut Mesh, a: ([usize; 3], f32), b: ([usize; 3], f32)| -> u32 {
        // a is inside, b outside
        let key = (id(a.0), id(b.0));
        *edge_vertex.entry(key).or_insert_with(|| {
            let t = ((a.1 - iso) as f64 / (a.1 - b.1) as f64).clamp(1e-3, 1.0 - 1e-3);
            let (pa, pb) = (pos(a.0), pos(b.0));
            mesh.positions.push(pa + (pb - pa) * t);
            (mesh.positions.len() - 1) as u32
        })
    };

    for cz in 0..m - 1 {
        for cy in 0..m - 1 {
            for cx in 0..m - 1 {
                let corner = |a: usize, b: usize, c: usize| [cx + a, cy + b, cz + c];
                let mut inside_count = 0;
                for c in 0..8 {
                    inside_count += (value(corner(c & 1, (c >> 1) & 1, c >> 2)) >= iso) as usize;
                }
                if inside_count == 0 || inside_count == 8 {
                    continue;
                }
                for order in AXIS_ORDERS {
                    let mut q = [cx, cy, cz];
                    let mut tet = [(q, value(q)); 4];
                    for (step, axis) in order.iter().enumerate() {
                        q[*axis] += 1;
                        tet[step + 1] = (q, value(q));
                    }
                    let (ins, outs): (Vec<_>, Vec<_>) = tet.iter().partition(|v| v.1 >= iso);
                    let emit = |mesh: &mut Mesh, tri: [u32; 3]| {
                        let [a, b, c] = tri.map(|i| mesh.positions[i as usize]);
                        let centroid = |s: &[&([usize; 3], f32)]| {
                            s.iter().map(|v| pos(v.0)).sum::<Vec3>() / s.len() as f64
                        };
                        let outward = centroid(&outs) - centroid(&ins);
                        if (b - a).cross(&(c - a)).dot(&outward) < 0.0 {
                            mesh.triangles.push([tri[0], tri[2], tri[1]]);
                        } else {
                            mesh.triangles.push(tri);
                        }
                    };
                    match (ins.len(), outs.len()) {
                        (1, 3) => {
                            let t = [0, 1, 2].map(|k| crossing(&mut mesh, *ins[0], *outs[k]));
                            emit(&mut mesh, t);
                        }
                        (3, 1) => {
                            let t = [0, 1, 2].map(|k| crossing(&mut mesh, *ins[k], *outs[0]));
                            emit(&mut mesh, t);
                        }
                        (2, 2) => {
                            let ac = crossing(&mut mesh, *ins[0], *outs[0]);
                            let ad = crossing(&mut mesh, *ins[0], *outs[1]);
                            let bd = crossing(&mut mesh, *ins[1], *outs[1]);
                            let bc = crossing(&mut mesh, *ins[1], *outs[0]);
                            emit(&mut mesh, [ac, ad, bd]);
                            emit(&mut mesh, [ac, bd, bc]);
                        }
                        _ => {}
                    }
                }
            }
        }
    }
    mesh
}

/// Triangle mesh of the `iso` level set, smoothed by the bilateral vertex filter.
pub fn extract_mesh(grid: &WorldGrid, iso: f32) -> Result<Mesh> {
    extract_mesh_with(grid, iso, &BilateralParams::default())
}

pub fn extract_mesh_with(grid: &WorldGrid, iso: f32, params: &BilateralParams) -> Result<Mesh> {
    if grid.count_occupied(iso) == 0 {
        return Err(Error::EmptyLevelSet(iso));
    }
    let mut mesh = marching_tetrahedra(grid, iso);
    let h = grid.frame().voxel_size(grid.resolution());
    mesh.bilateral_filter(params.spatial_sigma_voxels * h, params.normal_sigma_deg.to_radians(), params.iterations);
    mesh.remove_degenerate(1e-12 * h * h);
    Ok(mesh)
}
