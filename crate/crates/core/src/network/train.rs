use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::adam::{Adam, TrainingConfig};
use super::layers::{paired_cross_entropy, paired_softmax};
use super::model::{drawings_to_tensor, frustums_to_tensor, Network, NetworkSpec};
use crate::dataset::{frustum_target, LoadedShape};
use crate::error::{Error, Result};
use crate::fusion::{frustum_into_world, world_into_frustum};
use crate::geometry::{FrustumGrid, ViewpointId, WorldGrid};
use crate::render::LineDrawing;

/// A drawing, its binary target and (for the updater) the injected prediction.
#[derive(Clone, Debug, PartialEq)]
pub struct Example {
    pub drawing: LineDrawing,
    pub target: FrustumGrid,
    pub injected: Option<FrustumGrid>,
}

/// Indexable training data.
pub trait ExampleSource: Sync {
    fn len(&self) -> usize;
    fn example(&self, index: usize) -> Result<Example>;
    fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl ExampleSource for Vec<Example> {
    fn len(&self) -> usize {
        self.as_slice().len()
    }

    fn example(&self, index: usize) -> Result<Example> {
        Ok(self[index].clone())
    }
}

/// Every corner view of every shape, the single-view network's training policy.
pub struct SingleViewPool<'a> {
    shapes: &'a [LoadedShape],
    items: Vec<(usize, usize)>,
    slices: usize,
}

impl<'a> SingleViewPool<'a> {
    pub fn new(shapes: &'a [LoadedShape], slices: usize) -> Self {
        let items = shapes
            .iter()
            .enumerate()
            .flat_map(|(s, shape)| {
                shape.views.iter().enumerate().filter(|(_, v)| v.viewpoint.is_corner()).map(move |(v, _)| (s, v))
            })
            .collect();
        SingleViewPool { shapes, items, slices }
    }
}

impl ExampleSource for SingleViewPool<'_> {
    fn len(&self) -> usize {
        self.items.len()
    }

    fn example(&self, index: usize) -> Result<Example> {
        let (s, v) = self.items[index];
        let shape = &self.shapes[s];
        let view = &shape.views[v];
        Ok(Example {
            drawing: view.drawing.clone(),
            target: frustum_target(&shape.grid, &view.camera, [self.slices; 3])?,
            injected: None,
        })
    }
}

/// Updater training pairs: the target view's drawing, with the single-view
/// prediction from a different (corner) view of the same shape resampled into
/// the target view's frustum.
pub struct UpdaterPool<'a> {
    shapes: &'a [LoadedShape],
    /// Single-view predictions in each source camera's implied frame, per shape and view.
    predictions: Vec<Vec<Option<WorldGrid>>>,
    items: Vec<(usize, usize, usize)>,
    slices: usize,
}

impl<'a> UpdaterPool<'a> {
    pub fn new(shapes: &'a [LoadedShape], single: &Network<f32>) -> Result<Self> {
        let slices = single.spec().slices;
        let mut predictions: Vec<Vec<Option<WorldGrid>>> = shapes.iter().map(|s| vec![None; s.views.len()]).collect();
        let sources: Vec<(usize, usize)> = shapes
            .iter()
            .enumerate()
            .flat_map(|(s, shape)| {
                shape.views.iter().enumerate().filter(|(_, v)| v.viewpoint.is_corner()).map(move |(v, _)| (s, v))
            })
            .collect();
        let grids: Vec<Vec<WorldGrid>> = sources
            .par_chunks(16)
            .map(|chunk| {
                let drawings: Vec<&LineDrawing> = chunk.iter().map(|(s, v)| &shapes[*s].views[*v].drawing).collect();
                let cameras: Vec<_> = chunk.iter().map(|(s, v)| shapes[*s].views[*v].camera).collect();
                let frustums = single.predict_batch(&drawings, &cameras, None)?;
                Ok(frustums
                    .iter()
                    .zip(&cameras)
                    .map(|(f, c)| frustum_into_world(f, &c.implied_frame(), slices, None))
                    .collect())
            })
            .collect::<Result<_>>()?;
        for ((s, v), g) in sources.iter().zip(grids.into_iter().flatten()) {
            predictions[*s][*v] = Some(g);
        }
        let mut items = Vec::new();
        for (s, shape) in shapes.iter().enumerate() {
            for (u, src) in shape.views.iter().enumerate() {
                if !src.viewpoint.is_corner() {
                    continue;
                }
                for (v, dst) in shape.views.iter().enumerate() {
                    if dst.viewpoint != src.viewpoint {
                        items.push((s, u, v));
                    }
                }
            }
        }
        Ok(UpdaterPool { shapes, predictions, items, slices })
    }

    /// `(shape id, source viewpoint, target viewpoint)` of an item.
    pub fn pair(&self, index: usize) -> (&str, ViewpointId, ViewpointId) {
        let (s, u, v) = self.items[index];
        let shape = &self.shapes[s];
        (&shape.shape_id, shape.views[u].viewpoint, shape.views[v].viewpoint)
    }
}

impl ExampleSource for UpdaterPool<'_> {
    fn len(&self) -> usize {
        self.items.len()
    }

    fn example(&self, index: usize) -> Result<Example> {
        let (s, u, v) = self.items[index];
        let shape = &self.shapes[s];
        let view = &shape.views[v];
        let pred = self.predictions[s][u].as_ref().expect("corner views have predictions");
        Ok(Example {
            drawing: view.drawing.clone(),
            target: frustum_target(&shape.grid, &view.camera, [self.slices; 3])?,
            injected: Some(world_into_frustum(pred, &view.camera, self.slices)?),
        })
    }
}

/// Per-iteration training loss.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct LossCurve {
    pub points: Vec<(usize, f64)>,
}

impl LossCurve {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("iteration,loss\n");
        for (i, l) in &self.points {
            s.push_str(&format!("{i},{l}\n"));
        }
        s
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_csv()).map_err(|e| Error::from(e).at(path))
    }

    /// Mean loss over iterations in `range`.
    pub fn mean_over(&self, range: std::ops::Range<usize>) -> f64 {
        let v: Vec<f64> = self.points.iter().filter(|(i, _)| range.contains(i)).map(|(_, l)| *l).collect();
        v.iter().sum::<f64>() / v.len().max(1) as f64
    }
}

/// Where training writes checkpoints, if anywhere.
#[derive(Clone, Debug, Default)]
pub struct CheckpointPolicy {
    pub dir: Option<PathBuf>,
    /// Periodic checkpoint interval; 0 disables periodic checkpoints.
    pub every: usize,
}

fn batch_tensors(examples: &[Example], resolution: usize) -> Result<(super::Tensor<f32>, super::Tensor<f32>, Option<super::Tensor<f32>>)> {
    let drawings: Vec<&LineDrawing> = examples.iter().map(|e| &e.drawing).collect();
    let x = drawings_to_tensor(&drawings, resolution)?;
    let targets: Vec<&FrustumGrid> = examples.iter().map(|e| &e.target).collect();
    let t = frustums_to_tensor(&targets)?;
    let inj = if examples.iter().all(|e| e.injected.is_some()) {
        let grids: Vec<&FrustumGrid> = examples.iter().filter_map(|e| e.injected.as_ref()).collect();
        Some(frustums_to_tensor(&grids)?)
    } else {
        None
    };
    Ok((x, t, inj))
}

/// Minibatch Adam training of `net` on `source`. Batches are drawn uniformly
/// with replacement from a generator seeded by `config.seed`.
pub fn train(
    net: &mut Network<f32>,
    source: &dyn ExampleSource,
    config: &TrainingConfig,
    checkpoints: &CheckpointPolicy,
    mut progress: impl FnMut(usize, f64),
) -> Result<LossCurve> {
    config.validate()?;
    if source.is_empty() {
        return Err(Error::NoShapes);
    }
    if let Some(dir) = &checkpoints.dir {
        std::fs::create_dir_all(dir).map_err(|e| Error::from(e).at(dir))?;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut adam = Adam::new(net, config.clone());
    let mut curve = LossCurve::default();
    let resolution = net.spec().input_resolution;
    for it in 0..config.iterations {
        let idx: Vec<usize> = (0..config.batch_size).map(|_| rng.random_range(0..source.len())).collect();
        let examples = idx.par_iter().map(|i| source.example(*i)).collect::<Result<Vec<_>>>()?;
        let (x, t, inj) = batch_tensors(&examples, resolution)?;
        let (logits, tape) = net.forward_train(&x, inj.as_ref(), &mut rng)?;
        let (loss, dlogits) = paired_cross_entropy(&logits, &t);
        let loss = loss as f64;
        if !loss.is_finite() {
            if let Some(dir) = &checkpoints.dir {
                net.save(dir.join("diverged.ckpt"))?;
            }
            return Err(Error::Diverged { iteration: it, loss: loss as f32 });
        }
        let grads = net.backward(&tape, &dlogits);
        net.update_running_stats(&tape);
        adam.apply(net, &grads);
        curve.points.push((it, loss));
        if it % config.log_every == 0 || it + 1 == config.iterations {
            progress(it, loss);
        }
        if let Some(dir) = &checkpoints.dir {
            if checkpoints.every > 0 && (it + 1) % checkpoints.every == 0 {
                net.save(dir.join(format!("iter{:07}.ckpt", it + 1)))?;
            }
        }
    }
    if let Some(dir) = &checkpoints.dir {
        net.save(dir.join("final.ckpt"))?;
        curve.save_csv(dir.join("loss.csv"))?;
    }
    Ok(curve)
}

/// Trains a fresh single-view network on the corner views of `shapes`.
pub fn train_single_view(
    shapes: &[LoadedShape],
    spec: &NetworkSpec,
    config: &TrainingConfig,
    checkpoints: &CheckpointPolicy,
    progress: impl FnMut(usize, f64),
) -> Result<(Network<f32>, LossCurve)> {
    if spec.updater {
        return Err(Error::InvalidConfig("single-view training needs a spec without updater injection".into()));
    }
    if shapes.is_empty() {
        return Err(Error::NoShapes);
    }
    let mut net = Network::new(spec.clone(), config.seed)?;
    let pool = SingleViewPool::new(shapes, spec.slices);
    let curve = train(&mut net, &pool, config, checkpoints, progress)?;
    Ok((net, curve))
}

/// Trains a fresh updater on predictions of the (frozen) single-view network.
pub fn train_updater(
    shapes: &[LoadedShape],
    single: &Network<f32>,
    spec: &NetworkSpec,
    config: &TrainingConfig,
    checkpoints: &CheckpointPolicy,
    progress: impl FnMut(usize, f64),
) -> Result<(Network<f32>, LossCurve)> {
    if !spec.updater {
        return Err(Error::InvalidConfig("updater training needs a spec with updater injection".into()));
    }
    if single.spec().slices != spec.slices || single.spec().input_resolution != spec.input_resolution {
        return Err(Error::InvalidConfig("single-view and updater specs disagree on resolutions".into()));
    }
    if shapes.is_empty() {
        return Err(Error::NoShapes);
    }
    let mut net = Network::new(spec.clone(), config.seed.wrapping_add(1))?;
    let pool = UpdaterPool::new(shapes, single)?;
    let curve = train(&mut net, &pool, config, checkpoints, progress)?;
    Ok((net, curve))
}

/// Fraction of frustum cells whose thresholded prediction matches the target.
pub fn voxel_accuracy(net: &Network<f32>, examples: &[Example]) -> Result<f64> {
    let mut correct = 0usize;
    let mut total = 0usize;
    for chunk in examples.chunks(16) {
        let (x, t, inj) = batch_tensors(chunk, net.spec().input_resolution)?;
        let p = paired_softmax(&net.forward(&x, inj.as_ref())?);
        for (pv, tv) in p.data.iter().zip(&t.data) {
            correct += usize::from((*pv >= 0.5) == (*tv >= 0.5));
            total += 1;
        }
    }
    Ok(correct as f64 / total.max(1) as f64)
}
