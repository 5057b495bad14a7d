//! Toy-scale evaluation: IoU against held-out grammar shapes, the carving
//! comparison, convergence and drawing-robustness tables.
//! Uses weights written by the `train_toy` example.
//!
//!     cargo run --release --example evaluate -- [weights_dir] [shapes]

use voxsketch::dataset::{grammar_shapes, render_views, DatasetConfig};
use voxsketch::fusion::Predictor;
use voxsketch::harness::{compare_carving, convergence_report, evaluate, robustness_report, EvalConfig};

fn main() -> voxsketch::Result<()> {
    let mut args = std::env::args().skip(1);
    let weights = args.next().unwrap_or_else(|| "toy_model".into());
    let count: usize = args.next().and_then(|s| s.parse().ok()).unwrap_or(20);
    let predictor = Predictor::load(&weights)?;

    let data = DatasetConfig { seed: 12345, ..DatasetConfig::toy() };
    let shapes: Vec<_> = grammar_shapes(&data, count)?
        .iter()
        .enumerate()
        .map(|(i, a)| render_views(a, &data, i as u64))
        .collect();

    let cfg = EvalConfig::default();
    print!("{}", evaluate(&predictor, &shapes, 1, &cfg)?.summary_csv());
    print!("{}", compare_carving(&predictor, &shapes, 4, &cfg)?.summary_csv());
    print!("{}", convergence_report(&predictor, &shapes, &[2, 3, 4], 5, 0)?.to_csv());
    print!("{}", robustness_report(&predictor, &shapes, 0)?.summary_csv());
    Ok(())
}
