use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use voxsketch::carve::carve_from_drawings;
use voxsketch::dataset::{build_dataset, DatasetConfig, DatasetManifest, DatasetSource, Split};
use voxsketch::fusion::{fuse, Predictor, View};
use voxsketch::geometry::{extract_mesh, viewpoint_camera, Frame, ProjectionMode, ViewpointId};
use voxsketch::harness::{bench_timing, compare_carving, convergence_report, evaluate, robustness_report, EvalConfig};
use voxsketch::network::{train_single_view, train_updater, CheckpointPolicy, NetworkSpec, TrainingConfig};
use voxsketch::render::LineDrawing;
use voxsketch::service::{serve, ServiceConfig, SessionStore};
use voxsketch::{Error, Result};

#[derive(Parser)]
#[command(name = "voxsketch", version, about = "Volumetric reconstruction from line drawings")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Copy)]
struct Scale {
    /// Desk-scale preset (64 px drawings, 16^3 grids).
    #[arg(long, conflicts_with = "full")]
    toy: bool,
    /// Full-scale preset (256 px drawings, 64^3 grids).
    #[arg(long)]
    full: bool,
}

impl Scale {
    fn dataset(self) -> DatasetConfig {
        if self.full {
            DatasetConfig::full()
        } else {
            DatasetConfig::toy()
        }
    }

    fn network(self) -> NetworkSpec {
        if self.full {
            NetworkSpec::full()
        } else {
            NetworkSpec::toy()
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum SourceKind {
    Grammar,
    MeshDir,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Perspective,
    Orthographic,
}

#[derive(Subcommand)]
enum DatasetCommand {
    /// Generate shapes, ground-truth grids and drawings with train/test manifests.
    Build {
        #[arg(long, value_enum, default_value = "grammar")]
        source: SourceKind,
        /// Directory of closed `.obj` meshes (with `--source mesh-dir`).
        #[arg(long)]
        meshes: Option<PathBuf>,
        #[arg(long)]
        count: Option<usize>,
        #[command(flatten)]
        scale: Scale,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct EvalArgs {
    /// Directory holding `single.ckpt` and `updater.ckpt`.
    #[arg(long)]
    weights: PathBuf,
    /// Dataset directory; its test manifest is evaluated.
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    #[command(subcommand)]
    Dataset(DatasetCommand),
    /// Train the single-view and updater networks on a dataset's training split.
    Train {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        scale: Scale,
        #[arg(long)]
        iterations: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 0)]
        checkpoint_every: usize,
    },
    /// Reconstruct a grid or mesh from one or more drawings.
    Predict {
        #[arg(long)]
        weights: PathBuf,
        #[arg(long)]
        drawing: PathBuf,
        #[arg(long)]
        view: u32,
        /// Further drawings as `PATH:VIEW`.
        #[arg(long, num_args = 1..)]
        more: Vec<String>,
        #[arg(long, default_value_t = voxsketch::fusion::DEFAULT_ITERATIONS)]
        iterations: usize,
        #[arg(long)]
        resolution: Option<usize>,
        /// `.vxg` grid or `.obj` mesh.
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Silhouette carving from drawings.
    Carve {
        #[arg(long, value_enum, default_value = "perspective")]
        mode: Mode,
        /// Drawings as `PATH:VIEW`.
        #[arg(long, num_args = 1.., required = true)]
        inputs: Vec<String>,
        #[arg(long, default_value_t = 32)]
        resolution: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Per-shape IoU of fused predictions on the test split.
    Eval {
        #[command(flatten)]
        common: EvalArgs,
        #[arg(long, default_value_t = 1)]
        views: usize,
        #[arg(long, default_value_t = voxsketch::fusion::DEFAULT_ITERATIONS)]
        iterations: usize,
        /// Record wall time per shape.
        #[arg(long)]
        timing: bool,
    },
    /// Ours versus silhouette carving for 1 to `max_views` views.
    Compare {
        #[command(flatten)]
        common: EvalArgs,
        #[arg(long, default_value_t = 4)]
        max_views: usize,
    },
    /// Inference time against view count.
    Bench {
        #[command(flatten)]
        common: EvalArgs,
        #[arg(long, default_value_t = 11)]
        repetitions: usize,
    },
    /// Inter-iteration distance and IoU per fusion sweep.
    Converge {
        #[command(flatten)]
        common: EvalArgs,
        #[arg(long, default_value_t = 10)]
        iterations: usize,
    },
    /// Single-view IoU on clean and perturbed drawings.
    Robust {
        #[command(flatten)]
        common: EvalArgs,
    },
    /// Run the session API.
    Serve {
        #[arg(long)]
        weights: PathBuf,
        #[command(flatten)]
        scale: Scale,
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value_t = 256)]
        canvas: usize,
        #[arg(long, default_value_t = 64)]
        capacity: usize,
        /// One updater pass per new drawing instead of a full re-fusion.
        #[arg(long)]
        incremental: bool,
    },
}

fn unit_frame() -> Frame {
    Frame::new([0.0; 3], 1.0).expect("unit frame")
}

fn parse_input(s: &str) -> Result<(PathBuf, ViewpointId)> {
    let (path, view) = s
        .rsplit_once(':')
        .ok_or_else(|| Error::InvalidConfig(format!("expected PATH:VIEW, got {s}")))?;
    let view = view.parse().map_err(|_| Error::InvalidConfig(format!("bad viewpoint in {s}")))?;
    Ok((PathBuf::from(path), ViewpointId::new(view)?))
}

fn write_out(out: &Path, text: String) -> Result<()> {
    std::fs::write(out, text).map_err(|e| Error::from(e).at(out))
}

fn emit(out: Option<&Path>, text: String) -> Result<()> {
    match out {
        Some(p) => write_out(p, text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn load_eval(args: &EvalArgs) -> Result<(Predictor, Vec<voxsketch::dataset::LoadedShape>)> {
    let predictor = Predictor::load(&args.weights)?;
    let manifest = DatasetManifest::load(args.dataset.join(Split::Test.file_name()))?;
    Ok((predictor, manifest.load_shapes()?))
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Dataset(DatasetCommand::Build { source, meshes, count, scale, seed, out }) => {
            let mut config = DatasetConfig { seed, ..scale.dataset() };
            if let Some(n) = count {
                config.shape_count = n;
            }
            let source = match source {
                SourceKind::Grammar => DatasetSource::Grammar,
                SourceKind::MeshDir => DatasetSource::MeshDir(
                    meshes.ok_or_else(|| Error::InvalidConfig("--source mesh-dir needs --meshes DIR".into()))?,
                ),
            };
            let report = build_dataset(&source, &config, &out)?;
            for (path, why) in &report.skipped {
                log::warn!("skipped {}: {why}", path.display());
            }
            println!("train {} / test {} shapes in {}", report.train.samples.len(), report.test.samples.len(), out.display());
        }
        Command::Train { dataset, out, scale, iterations, seed, checkpoint_every } => {
            let shapes = DatasetManifest::load(dataset.join(Split::Train.file_name()))?.load_shapes()?;
            let mut config = TrainingConfig { seed, ..TrainingConfig::default() };
            if let Some(n) = iterations {
                config = config.with_iterations(n);
            }
            let every = config.log_every;
            let policy = |name: &str| CheckpointPolicy {
                dir: (checkpoint_every > 0).then(|| out.join(name)),
                every: checkpoint_every,
            };
            let progress = |it: usize, loss: f64| {
                if it % every == 0 {
                    log::info!("iteration {it} loss {loss:.5}");
                }
            };
            let (single, curve) = train_single_view(&shapes, &scale.network(), &config, &policy("single"), progress)?;
            curve.save_csv(out.join("single_loss.csv")).ok();
            let spec = scale.network().with_updater(true);
            let (updater, curve) = train_updater(&shapes, &single, &spec, &config, &policy("updater"), progress)?;
            let predictor = Predictor::new(single, updater)?;
            predictor.save(&out)?;
            curve.save_csv(out.join("updater_loss.csv"))?;
            println!("weights written to {}", out.display());
        }
        Command::Predict { weights, drawing, view, more, iterations, resolution, out, trace } => {
            let predictor = Predictor::load(&weights)?;
            let frame = unit_frame();
            let size = predictor.drawing_size();
            let mut inputs = vec![(drawing, ViewpointId::new(view)?)];
            for m in &more {
                inputs.push(parse_input(m)?);
            }
            let views = inputs
                .iter()
                .map(|(p, id)| {
                    Ok(View {
                        drawing: LineDrawing::load(p)?.resized(size, size),
                        camera: viewpoint_camera(*id, &frame),
                        viewpoint: Some(*id),
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            let n = resolution.unwrap_or(predictor.slices());
            let (grid, tr) = fuse(&predictor, &views, iterations, &frame, n, None)?;
            if out.extension().is_some_and(|e| e == "obj") {
                extract_mesh(&grid, 0.5)?.save_obj(&out)?;
            } else {
                grid.save(&out)?;
            }
            if let Some(path) = trace {
                let mut csv = String::from("iteration,l2\n");
                for (i, d) in tr.l2.iter().enumerate() {
                    csv.push_str(&format!("{},{d:.6}\n", i + 1));
                }
                write_out(&path, csv)?;
            }
        }
        Command::Carve { mode, inputs, resolution, out } => {
            let frame = unit_frame();
            let loaded = inputs
                .iter()
                .map(|s| {
                    let (p, id) = parse_input(s)?;
                    Ok((LineDrawing::load(p)?, viewpoint_camera(id, &frame)))
                })
                .collect::<Result<Vec<_>>>()?;
            let refs: Vec<_> = loaded.iter().map(|(d, c)| (d, *c)).collect();
            let mode = match mode {
                Mode::Perspective => ProjectionMode::Perspective,
                Mode::Orthographic => ProjectionMode::Orthographic,
            };
            carve_from_drawings(&refs, mode, &frame, resolution)?.save(&out)?;
        }
        Command::Eval { common, views, iterations, timing } => {
            let (p, shapes) = load_eval(&common)?;
            let cfg = EvalConfig { seed: common.seed, iterations, record_time: timing };
            let report = evaluate(&p, &shapes, views, &cfg)?;
            eprint!("{}", report.summary_csv());
            emit(common.out.as_deref(), report.to_csv())?;
        }
        Command::Compare { common, max_views } => {
            let (p, shapes) = load_eval(&common)?;
            let report = compare_carving(&p, &shapes, max_views, &EvalConfig { seed: common.seed, ..EvalConfig::default() })?;
            eprint!("{}", report.summary_csv());
            emit(common.out.as_deref(), report.to_csv())?;
        }
        Command::Bench { common, repetitions } => {
            let (p, shapes) = load_eval(&common)?;
            let shape = shapes.first().ok_or(Error::NoShapes)?;
            let report = bench_timing(&p, shape, &[1, 2, 3, 4], repetitions, voxsketch::fusion::DEFAULT_ITERATIONS)?;
            emit(common.out.as_deref(), report.to_csv())?;
        }
        Command::Converge { common, iterations } => {
            let (p, shapes) = load_eval(&common)?;
            let table = convergence_report(&p, &shapes, &[2, 3, 4], iterations, common.seed)?;
            emit(common.out.as_deref(), table.to_csv())?;
        }
        Command::Robust { common } => {
            let (p, shapes) = load_eval(&common)?;
            let report = robustness_report(&p, &shapes, common.seed)?;
            eprint!("{}", report.summary_csv());
            emit(common.out.as_deref(), report.to_csv())?;
        }
        Command::Serve { weights, scale, port, canvas, capacity, incremental } => {
            let predictor = Arc::new(Predictor::load(&weights)?);
            let config = ServiceConfig {
                capacity,
                incremental,
                ..ServiceConfig::new(canvas, scale.dataset().world_resolution)
            };
            let store = Arc::new(SessionStore::new(predictor, config));
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(serve(store, ([127, 0, 0, 1], port).into()))?;
        }
    }
    Ok(())
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    if let Err(e) = run(Cli::parse()) {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}
