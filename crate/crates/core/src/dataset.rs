//! Training and test data: shape voxelization, rendered drawings, cameras and
//! manifests.
//!
//! A built dataset directory looks like
//!
//! ```text
//! out/
//!   shapes/     <id>.prog (grammar sources)
//!   grids/      <id>.vxg  ground-truth world grids
//!   drawings/   <id>_v<view>.png
//!   manifest.train
//!   manifest.test
//! ```
//!
//! Manifests are JSON lines: a header carrying the split and the generation
//! config, then one record per shape with its per-view cameras and drawings.

use std::collections::{BTreeMap, HashSet};
use std::io::{BufRead, BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{
    extract_mesh, jitter_camera, resample_world_to_frustum_in, viewpoint_camera, Camera, Frame, FrustumGrid,
    JitterKind, Mesh, ViewpointId, WorldGrid, CORNER_VIEW_COUNT, VIEWPOINT_COUNT,
};
use crate::grammar::{generate_program, realize, symmetrize, GrammarConfig, ShapeProgram};
use crate::render::{render_drawing, ContourConfig, LineDrawing};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

impl Split {
    pub fn file_name(self) -> &'static str {
        match self {
            Split::Train => "manifest.train",
            Split::Test => "manifest.test",
        }
    }
}

/// Dataset generation settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetConfig {
    pub shape_count: usize,
    /// Fraction of shapes kept for training; ignored when `test_count` is set.
    pub train_fraction: f64,
    pub test_count: Option<usize>,
    pub world_resolution: usize,
    pub drawing_size: usize,
    /// Frustum target dims `[slices, rows, cols]`.
    pub frustum_dims: [usize; 3],
    /// Resolution of the realization meshed for rendering drawings.
    pub render_resolution: usize,
    /// Jitter radii as fractions of the grid side.
    pub single_view_jitter: f64,
    pub updater_jitter: f64,
    /// Independently jittered renders per viewpoint for training shapes.
    #[serde(default = "one")]
    pub renders_per_view: usize,
    pub seed: u64,
    pub grammar: GrammarConfig,
    pub contours: ContourConfig,
}

impl DatasetConfig {
    /// Desk-scale preset: 64^2 drawings, 16^3 grids, 16-slice frustums, 500 shapes.
    pub fn toy() -> Self {
        DatasetConfig {
            shape_count: 500,
            train_fraction: 0.9,
            test_count: None,
            world_resolution: 16,
            drawing_size: 64,
            frustum_dims: [16, 16, 16],
            render_resolution: 64,
            single_view_jitter: 0.03,
            updater_jitter: 0.05,
            renders_per_view: 3,
            seed: 0,
            grammar: GrammarConfig::default(),
            contours: ContourConfig::default(),
        }
    }

    /// Full-scale preset: 20,000 shapes with 50 held out, 256^2 drawings, 64^3 grids.
    pub fn full() -> Self {
        DatasetConfig {
            shape_count: 20_000,
            test_count: Some(50),
            world_resolution: 64,
            drawing_size: 256,
            frustum_dims: [64, 64, 64],
            renders_per_view: 1,
            ..DatasetConfig::toy()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(format!("dataset: {m}")));
        if self.shape_count == 0 {
            return bad("shape_count must be positive");
        }
        if !(0.0..=1.0).contains(&self.train_fraction) {
            return bad("train_fraction must lie in [0,1]");
        }
        if self.test_count.is_some_and(|t| t > self.shape_count) {
            return bad("test_count exceeds shape_count");
        }
        if self.world_resolution < 8 || self.render_resolution < 8 || self.drawing_size < 8 {
            return bad("resolutions must be at least 8");
        }
        if self.renders_per_view == 0 {
            return bad("renders_per_view must be positive");
        }
        if self.frustum_dims.iter().any(|d| *d < 4) {
            return bad("frustum dims must be at least 4");
        }
        self.grammar.validate()
    }

    /// Number of shapes in the test split for `n` usable shapes.
    pub fn test_size(&self, n: usize) -> usize {
        match self.test_count {
            Some(t) => t.min(n),
            None => n - ((n as f64 * self.train_fraction).round() as usize).min(n),
        }
    }
}

fn one() -> usize {
    1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ViewRecord {
    pub viewpoint: ViewpointId,
    pub camera: Camera,
    pub drawing: PathBuf,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub shape_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub program: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mesh: Option<PathBuf>,
    pub grid: PathBuf,
    pub views: Vec<ViewRecord>,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
enum ManifestLine {
    Header { split: Split, config: DatasetConfig },
    Sample(SampleRecord),
}

/// One split of a dataset; record paths are relative to `root`.
#[derive(Clone, Debug, PartialEq)]
pub struct DatasetManifest {
    pub root: PathBuf,
    pub split: Split,
    pub config: DatasetConfig,
    pub samples: Vec<SampleRecord>,
}

impl DatasetManifest {
    pub fn path(&self) -> PathBuf {
        self.root.join(self.split.file_name())
    }

    pub fn save(&self) -> Result<()> {
        let path = self.path();
        let f = std::fs::File::create(&path).map_err(|e| Error::from(e).at(&path))?;
        let mut w = BufWriter::new(f);
        let header = ManifestLine::Header { split: self.split, config: self.config.clone() };
        writeln!(w, "{}", serde_json::to_string(&header)?)?;
        for s in &self.samples {
            writeln!(w, "{}", serde_json::to_string(&ManifestLine::Sample(s.clone()))?)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let f = std::fs::File::open(path).map_err(|e| Error::from(e).at(path))?;
        let root = path.parent().map(Path::to_path_buf).unwrap_or_default();
        let mut header = None;
        let mut samples = Vec::new();
        for line in std::io::BufReader::new(f).lines() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            match serde_json::from_str(&line).map_err(|e| Error::from(e).at(path))? {
                ManifestLine::Header { split, config } => header = Some((split, config)),
                ManifestLine::Sample(s) => samples.push(s),
            }
        }
        let (split, config) = header.ok_or_else(|| Error::format("manifest", "missing header").at(path))?;
        Ok(DatasetManifest { root, split, config, samples })
    }

    pub fn resolve(&self, rel: &Path) -> PathBuf {
        self.root.join(rel)
    }

    /// Loads every grid and drawing referenced by the manifest.
    pub fn load_shapes(&self) -> Result<Vec<LoadedShape>> {
        self.samples
            .iter()
            .map(|s| {
                let grid = WorldGrid::load(self.resolve(&s.grid))?;
                let views = s
                    .views
                    .iter()
                    .map(|v| {
                        let drawing = LineDrawing::load(self.resolve(&v.drawing))?;
                        if drawing.width != self.config.drawing_size || drawing.height != self.config.drawing_size {
                            return Err(Error::SizeMismatch(format!(
                                "drawing {}x{} vs configured {}",
                                drawing.width, drawing.height, self.config.drawing_size
                            ))
                            .at(self.resolve(&v.drawing)));
                        }
                        Ok(LoadedView { viewpoint: v.viewpoint, camera: v.camera, drawing })
                    })
                    .collect::<Result<_>>()?;
                Ok(LoadedShape { shape_id: s.shape_id.clone(), grid, views })
            })
            .collect()
    }
}

/// In-memory view of one shape.
#[derive(Clone, Debug)]
pub struct LoadedView {
    pub viewpoint: ViewpointId,
    pub camera: Camera,
    pub drawing: LineDrawing,
}

#[derive(Clone, Debug)]
pub struct LoadedShape {
    pub shape_id: String,
    pub grid: WorldGrid,
    pub views: Vec<LoadedView>,
}

impl LoadedShape {
    pub fn view(&self, id: ViewpointId) -> Option<&LoadedView> {
        self.views.iter().find(|v| v.viewpoint == id)
    }

    /// Binary ground-truth target in the frustum of `camera`.
    pub fn target(&self, camera: &Camera, dims: [usize; 3]) -> Result<FrustumGrid> {
        frustum_target(&self.grid, camera, dims)
    }
}

/// A drawing paired with its ground-truth frustum grid.
#[derive(Clone, Debug, PartialEq)]
pub struct SamplePair {
    pub shape_id: String,
    pub viewpoint: ViewpointId,
    pub camera: Camera,
    pub drawing: LineDrawing,
    pub target: FrustumGrid,
}

/// Geometry needed to render new pairs of a shape.
#[derive(Clone, Debug)]
pub struct ShapeAsset {
    pub shape_id: String,
    pub grid: WorldGrid,
    pub mesh: Mesh,
}

/// Draws a viewpoint according to the network's policy (corner views only for
/// the single-view network, all 13 for the updater), jitters the camera, and
/// renders the drawing and binary frustum target.
pub fn make_pair<R: Rng + ?Sized>(
    shape: &ShapeAsset,
    kind: JitterKind,
    config: &DatasetConfig,
    rng: &mut R,
) -> Result<SamplePair> {
    let viewpoint = match kind {
        JitterKind::SingleView => ViewpointId::new(rng.random_range(0..CORNER_VIEW_COUNT as u32))?,
        JitterKind::Updater => ViewpointId::new(rng.random_range(0..VIEWPOINT_COUNT as u32))?,
    };
    let camera = jittered_camera(viewpoint, shape.grid.frame(), kind, config, rng);
    let drawing = render_drawing(&shape.mesh, &camera, config.drawing_size, config.drawing_size, &config.contours);
    let target = frustum_target(&shape.grid, &camera, config.frustum_dims)?;
    Ok(SamplePair { shape_id: shape.shape_id.clone(), viewpoint, camera, drawing, target })
}

/// Binary ground truth in the network frustum of `camera` (depth range from
/// the camera's implied frame), re-binarized at 0.5 after trilinear sampling.
pub fn frustum_target(grid: &WorldGrid, camera: &Camera, dims: [usize; 3]) -> Result<FrustumGrid> {
    Ok(resample_world_to_frustum_in(grid, camera, &camera.implied_frame(), dims)?.thresholded(0.5))
}

fn jittered_camera<R: Rng + ?Sized>(
    viewpoint: ViewpointId,
    frame: &Frame,
    kind: JitterKind,
    config: &DatasetConfig,
    rng: &mut R,
) -> Camera {
    let radius = match kind {
        JitterKind::SingleView => config.single_view_jitter,
        JitterKind::Updater => config.updater_jitter,
    } * frame.extent as f64;
    jitter_camera(&viewpoint_camera(viewpoint, frame), kind, radius, rng)
}

/// Binary occupancy of a closed mesh by parity ray casting along +x through
/// each voxel center, framed to 120% of the mesh's largest bounding-box side.
pub fn voxelize_mesh(mesh: &Mesh, resolution: usize) -> Result<WorldGrid> {
    mesh.validate()?;
    let (lo, hi) = mesh.bounds().ok_or(Error::OpenMesh(0))?;
    if mesh.triangles.is_empty() {
        return Err(Error::OpenMesh(0));
    }
    let boundary = mesh.boundary_edges();
    if boundary > 0 {
        return Err(Error::OpenMesh(boundary));
    }
    let frame = Frame::around_box(lo, hi)?;
    let n = resolution;
    let h = frame.voxel_size(n);
    // tiny irrational offsets keep rays off shared edges and vertices
    let (eps_y, eps_z) = (h * 1.234_567e-7 * std::f64::consts::PI, h * 7.654_321e-8 * std::f64::consts::E);
    let ys: Vec<f64> = (0..n).map(|j| frame.voxel_center(n, 0, j as isize, 0).y + eps_y).collect();
    let zs: Vec<f64> = (0..n).map(|k| frame.voxel_center(n, 0, 0, k as isize).z + eps_z).collect();
    let mut crossings: Vec<Vec<f64>> = vec![Vec::new(); n * n];
    let index_range = |lo: f64, hi: f64, coords: &[f64]| {
        let a = coords.partition_point(|c| *c < lo);
        let b = coords.partition_point(|c| *c <= hi);
        a..b
    };
    for t in &mesh.triangles {
        let [a, b, c] = t.map(|i| mesh.positions[i as usize]);
        let area = (b.y - a.y) * (c.z - a.z) - (c.y - a.y) * (b.z - a.z);
        if area == 0.0 {
            continue;
        }
        let ymin = a.y.min(b.y).min(c.y);
        let ymax = a.y.max(b.y).max(c.y);
        let zmin = a.z.min(b.z).min(c.z);
        let zmax = a.z.max(b.z).max(c.z);
        for k in index_range(zmin, zmax, &zs) {
            for j in index_range(ymin, ymax, &ys) {
                let (py, pz) = (ys[j], zs[k]);
                let w0 = ((b.y - py) * (c.z - pz) - (c.y - py) * (b.z - pz)) / area;
                let w1 = ((c.y - py) * (a.z - pz) - (a.y - py) * (c.z - pz)) / area;
                let w2 = 1.0 - w0 - w1;
                if w0 >= 0.0 && w1 >= 0.0 && w2 >= 0.0 {
                    crossings[j + n * k].push(w0 * a.x + w1 * b.x + w2 * c.x);
                }
            }
        }
    }
    let xs: Vec<f64> = (0..n).map(|i| frame.voxel_center(n, i as isize, 0, 0).x).collect();
    let mut grid = WorldGrid::empty(n, frame);
    for k in 0..n {
        for j in 0..n {
            let hits = &mut crossings[j + n * k];
            if hits.is_empty() {
                continue;
            }
            hits.sort_by(f64::total_cmp);
            for (i, x) in xs.iter().enumerate() {
                if hits.partition_point(|h| h < x) % 2 == 1 {
                    grid.set(i, j, k, 1.0);
                }
            }
        }
    }
    Ok(grid)
}

/// Where shapes come from.
#[derive(Clone, Debug, PartialEq)]
pub enum DatasetSource {
    /// Symmetrized procedural shapes.
    Grammar,
    /// Closed Wavefront meshes (`*.obj`) in a directory.
    MeshDir(PathBuf),
}

/// Outcome of [`build_dataset`].
#[derive(Debug)]
pub struct BuildReport {
    pub train: DatasetManifest,
    pub test: DatasetManifest,
    /// Inputs that could not be used, with the reason.
    pub skipped: Vec<(PathBuf, String)>,
}

struct BuiltShape {
    record: SampleRecord,
}

/// Generates (or ingests) shapes, voxelizes them, renders drawings from all 13
/// viewpoints with jittered cameras, and writes the split manifests to `out`.
pub fn build_dataset(source: &DatasetSource, config: &DatasetConfig, out: &Path) -> Result<BuildReport> {
    config.validate()?;
    for sub in ["shapes", "grids", "drawings"] {
        std::fs::create_dir_all(out.join(sub)).map_err(|e| Error::from(e).at(out.join(sub)))?;
    }
    let mut skipped = Vec::new();
    let assets: Vec<(ShapeAsset, Option<ShapeProgram>, Option<PathBuf>)> = match source {
        DatasetSource::Grammar => grammar_assets(config)?
            .into_iter()
            .map(|(a, p)| (a, Some(p), None))
            .collect(),
        DatasetSource::MeshDir(dir) => {
            let (assets, errs) = mesh_assets(dir, config)?;
            skipped = errs;
            assets.into_iter().map(|(a, path)| (a, None, Some(path))).collect()
        }
    };
    if assets.is_empty() {
        return Err(Error::NoShapes);
    }

    let mut order: Vec<usize> = (0..assets.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(config.seed ^ 0x5EED_5EED));
    let n_test = config.test_size(assets.len());
    let test_ids: HashSet<usize> = order[..n_test].iter().copied().collect();

    let built: Vec<BuiltShape> = assets
        .par_iter()
        .enumerate()
        .map(|(index, (asset, program, mesh_path))| {
            let renders = if test_ids.contains(&index) { 1 } else { config.renders_per_view };
            write_shape(index, asset, program.as_ref(), mesh_path.as_deref(), renders, config, out)
        })
        .collect::<Result<_>>()?;

    let mut train = Vec::new();
    let mut test = Vec::new();
    for (i, b) in built.into_iter().enumerate() {
        if test_ids.contains(&i) {
            test.push(b.record);
        } else {
            train.push(b.record);
        }
    }
    let train = DatasetManifest { root: out.to_path_buf(), split: Split::Train, config: config.clone(), samples: train };
    let test = DatasetManifest { root: out.to_path_buf(), split: Split::Test, config: config.clone(), samples: test };
    train.save()?;
    test.save()?;
    Ok(BuildReport { train, test, skipped })
}

fn grammar_assets(config: &DatasetConfig) -> Result<Vec<(ShapeAsset, ShapeProgram)>> {
    let mut seed_rng = ChaCha8Rng::seed_from_u64(config.seed);
    let seeds: Vec<u64> = (0..config.shape_count).map(|_| seed_rng.random()).collect();
    seeds
        .par_iter()
        .enumerate()
        .map(|(i, seed)| {
            // a shape must also survive the (possibly coarse) target resolution
            let mut s = *seed;
            loop {
                let program = symmetrize(&generate_program(s, &config.grammar)?);
                if let Ok(grid) = realize(&program, config.world_resolution) {
                    let frac = grid.occupancy_fraction(0.5);
                    let (lo, hi) = config.grammar.occupancy_band;
                    if frac > lo && frac < hi {
                        let mesh = extract_mesh(&realize(&program, config.render_resolution)?, 0.5)?;
                        let asset = ShapeAsset { shape_id: format!("shape_{i:05}"), grid, mesh };
                        return Ok((asset, program));
                    }
                }
                s = s.wrapping_add(0x9E37_79B9_7F4A_7C15);
            }
        })
        .collect()
}

fn mesh_assets(dir: &Path, config: &DatasetConfig) -> Result<(Vec<(ShapeAsset, PathBuf)>, Vec<(PathBuf, String)>)> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| Error::from(e).at(dir))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("obj")))
        .collect();
    paths.sort();
    let results: Vec<(PathBuf, Result<ShapeAsset>)> = paths
        .into_par_iter()
        .map(|path| {
            let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
            let asset = Mesh::load_obj(&path).and_then(|mesh| {
                let grid = voxelize_mesh(&mesh, config.world_resolution)?;
                if grid.count_occupied(0.5) == 0 {
                    return Err(Error::EmptyRealization);
                }
                Ok(ShapeAsset { shape_id: sanitize(&stem), grid, mesh })
            });
            (path, asset)
        })
        .collect();
    let mut ok = Vec::new();
    let mut errs = Vec::new();
    for (path, r) in results {
        match r {
            Ok(a) => ok.push((a, path)),
            Err(e) => {
                log::warn!("skipping {}: {e}", path.display());
                errs.push((path, e.to_string()));
            }
        }
    }
    Ok((ok, errs))
}

fn sanitize(s: &str) -> String {
    s.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' }).collect()
}

fn write_shape(
    index: usize,
    asset: &ShapeAsset,
    program: Option<&ShapeProgram>,
    mesh_path: Option<&Path>,
    renders: usize,
    config: &DatasetConfig,
    out: &Path,
) -> Result<BuiltShape> {
    let id = &asset.shape_id;
    let grid_rel = PathBuf::from("grids").join(format!("{id}.vxg"));
    asset.grid.save(out.join(&grid_rel))?;
    let program_rel = match program {
        Some(p) => {
            let rel = PathBuf::from("shapes").join(format!("{id}.prog"));
            p.save(out.join(&rel))?;
            Some(rel)
        }
        None => None,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_mul(0x2545_F491_4F6C_DD1D) ^ index as u64);
    let mut views = Vec::with_capacity(VIEWPOINT_COUNT * renders);
    for r in 0..renders {
        for viewpoint in ViewpointId::all() {
            let kind = if viewpoint.is_corner() { JitterKind::SingleView } else { JitterKind::Updater };
            let camera = jittered_camera(viewpoint, asset.grid.frame(), kind, config, &mut rng);
            let drawing =
                render_drawing(&asset.mesh, &camera, config.drawing_size, config.drawing_size, &config.contours);
            let name = match r {
                0 => format!("{id}_v{:02}.png", viewpoint.get()),
                _ => format!("{id}_v{:02}_r{r}.png", viewpoint.get()),
            };
            let rel = PathBuf::from("drawings").join(name);
            drawing.save(out.join(&rel))?;
            views.push(ViewRecord { viewpoint, camera, drawing: rel });
        }
    }
    Ok(BuiltShape {
        record: SampleRecord {
            shape_id: id.clone(),
            program: program_rel,
            mesh: mesh_path.map(Path::to_path_buf),
            grid: grid_rel,
            views,
        },
    })
}

/// Generates `count` symmetrized grammar shapes in memory (no files), for tests
/// and examples that do not need a dataset on disk.
pub fn grammar_shapes(config: &DatasetConfig, count: usize) -> Result<Vec<ShapeAsset>> {
    let cfg = DatasetConfig { shape_count: count, ..config.clone() };
    Ok(grammar_assets(&cfg)?.into_iter().map(|(a, _)| a).collect())
}

/// Renders all 13 catalog views of an in-memory shape with the dataset's jitter policy.
pub fn render_views(asset: &ShapeAsset, config: &DatasetConfig, seed: u64) -> LoadedShape {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let views = ViewpointId::all()
        .map(|viewpoint| {
            let kind = if viewpoint.is_corner() { JitterKind::SingleView } else { JitterKind::Updater };
            let camera = jittered_camera(viewpoint, asset.grid.frame(), kind, config, &mut rng);
            let drawing =
                render_drawing(&asset.mesh, &camera, config.drawing_size, config.drawing_size, &config.contours);
            LoadedView { viewpoint, camera, drawing }
        })
        .collect();
    LoadedShape { shape_id: asset.shape_id.clone(), grid: asset.grid.clone(), views }
}

/// Shape-id multiset check used to assert that splits never share a shape.
pub fn splits_disjoint(a: &DatasetManifest, b: &DatasetManifest) -> bool {
    let ids: HashSet<&str> = a.samples.iter().map(|s| s.shape_id.as_str()).collect();
    b.samples.iter().all(|s| !ids.contains(s.shape_id.as_str()))
}

/// Counts viewpoint ids drawn by `make_pair`'s policy, for diagnostics.
pub fn viewpoint_histogram<R: Rng + ?Sized>(kind: JitterKind, draws: usize, rng: &mut R) -> BTreeMap<u32, usize> {
    let upper = match kind {
        JitterKind::SingleView => CORNER_VIEW_COUNT as u32,
        JitterKind::Updater => VIEWPOINT_COUNT as u32,
    };
    let mut hist = BTreeMap::new();
    for _ in 0..draws {
        *hist.entry(rng.random_range(0..upper)).or_insert(0) += 1;
    }
    hist
}
