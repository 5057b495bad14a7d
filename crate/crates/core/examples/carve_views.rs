//! Silhouette carving of a grammar shape from 1 to 4 views, with masks taken
//! from drawings and from the exact ground-truth silhouettes.
//!
//!     cargo run --release --example carve_views -- [seed]

use voxsketch::carve::{carve, carve_from_drawings, CarveJob};
use voxsketch::dataset::{grammar_shapes, render_views, DatasetConfig};
use voxsketch::geometry::{iou, ProjectionMode};
use voxsketch::harness::{exact_silhouette, hull_gap, ORTHOGONAL_VIEWS};

fn main() -> voxsketch::Result<()> {
    let seed: u64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(5);
    let data = DatasetConfig { seed, world_resolution: 32, ..DatasetConfig::toy() };
    let asset = grammar_shapes(&data, 1)?.remove(0);
    let shape = render_views(&asset, &data, seed);
    let (frame, n) = (shape.grid.frame(), shape.grid.resolution());

    println!("views  drawn   exact");
    for k in 1..=ORTHOGONAL_VIEWS.len() {
        let idx: Vec<usize> = ORTHOGONAL_VIEWS[..k].iter().map(|v| *v as usize).collect();
        let drawn: Vec<_> = idx.iter().map(|i| (&shape.views[*i].drawing, shape.views[*i].camera)).collect();
        let from_drawings = carve_from_drawings(&drawn, ProjectionMode::Perspective, frame, n)?;
        let job = CarveJob {
            views: idx.iter().map(|i| (exact_silhouette(&shape, *i), shape.views[*i].camera)).collect(),
            mode: ProjectionMode::Perspective,
            frame: *frame,
            resolution: n,
        };
        let exact = carve(&job)?;
        println!("{k:5}  {:.3}   {:.3}", iou(&from_drawings, &shape.grid, 0.5)?, iou(&exact, &shape.grid, 0.5)?);
    }
    println!("13-view visual hull gap: {:.3}", hull_gap(&shape)?);
    Ok(())
}
