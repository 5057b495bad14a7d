//! Trains the desk-scale single-view and updater networks on in-memory
//! grammar shapes and saves both checkpoints.
//!
//! cargo run --release --example train_toy -- [shapes] [iterations] [out_dir]

use std::time::Instant;

use voxsketch::dataset::{grammar_shapes, render_views, DatasetConfig};
use voxsketch::network::{train_single_view, train_updater, CheckpointPolicy, NetworkSpec, TrainingConfig};

fn main() -> voxsketch::Result<()> {
    env_logger::init();
    let args: Vec<String> = std::env::args().collect();
    let count: usize = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(64);
    let iterations: usize = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(500);
    let out = std::path::PathBuf::from(args.get(3).cloned().unwrap_or_else(|| "toy_model".into()));
    std::fs::create_dir_all(&out)?;

    let data = DatasetConfig { seed: 1, ..DatasetConfig::toy() };
    let t = Instant::now();
    let assets = grammar_shapes(&data, count)?;
    let shapes: Vec<_> = assets.iter().enumerate().map(|(i, a)| render_views(a, &data, i as u64)).collect();
    println!("{count} shapes rendered in {:.1}s", t.elapsed().as_secs_f64());

    let config = TrainingConfig::default().with_iterations(iterations);
    let t = Instant::now();
    let report = |it: usize, loss: f64| println!("  iter {it:6}  loss {loss:.4}");
    let (single, curve) = train_single_view(&shapes, &NetworkSpec::toy(), &config, &CheckpointPolicy::default(), report)?;
    let secs = t.elapsed().as_secs_f64();
    println!("single-view: {iterations} iterations in {secs:.1}s ({:.1} ms/iter)", 1e3 * secs / iterations as f64);
    single.save(out.join("single.ckpt"))?;
    curve.save_csv(out.join("single_loss.csv"))?;

    let t = Instant::now();
    let spec = NetworkSpec::toy().with_updater(true);
    let (updater, curve) = train_updater(&shapes, &single, &spec, &config, &CheckpointPolicy::default(), report)?;
    println!("updater: {iterations} iterations in {:.1}s", t.elapsed().as_secs_f64());
    updater.save(out.join("updater.ckpt"))?;
    curve.save_csv(out.join("updater_loss.csv"))?;
    Ok(())
}
