//! Multi-view reconstruction: single-view prediction from a corner view, then
//! updater sweeps over more views, printing IoU and the convergence trace.
//! Uses weights written by the `train_toy` example.
//!
//!     cargo run --release --example fuse_views -- [weights_dir] [seed]

use voxsketch::dataset::{grammar_shapes, render_views, DatasetConfig};
use voxsketch::fusion::{fuse, Predictor, View};
use voxsketch::geometry::iou;

fn main() -> voxsketch::Result<()> {
    let mut args = std::env::args().skip(1);
    let weights = args.next().unwrap_or_else(|| "toy_model".into());
    let seed: u64 = args.next().and_then(|s| s.parse().ok()).unwrap_or(99);
    let predictor = Predictor::load(&weights)?;

    let data = DatasetConfig { seed, ..DatasetConfig::toy() };
    let asset = grammar_shapes(&data, 1)?.remove(0);
    let shape = render_views(&asset, &data, seed);
    let order = [0usize, 10, 12, 6];
    for k in 1..=order.len() {
        let views: Vec<View> = order[..k]
            .iter()
            .map(|i| {
                let v = &shape.views[*i];
                View { drawing: v.drawing.clone(), camera: v.camera, viewpoint: Some(v.viewpoint) }
            })
            .collect();
        let (grid, trace) = fuse(&predictor, &views, 5, shape.grid.frame(), shape.grid.resolution(), Some(&shape.grid))?;
        let l2: Vec<String> = trace.l2.iter().map(|d| format!("{d:.3}")).collect();
        println!("{k} views: IoU {:.3} (single view {:.3}), sweep L2 [{}]", iou(&grid, &shape.grid, 0.5)?, trace.initial_iou.unwrap_or(0.0), l2.join(", "));
    }
    Ok(())
}
