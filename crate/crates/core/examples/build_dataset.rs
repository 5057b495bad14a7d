//! Builds a small toy dataset on disk: grammar shapes, ground-truth grids,
//! drawings from all 13 viewpoints and the train/test manifests.
//!
//!     cargo run --release --example build_dataset -- [count] [out_dir]

use voxsketch::dataset::{build_dataset, viewpoint_histogram, DatasetConfig, DatasetManifest, DatasetSource, Split};
use voxsketch::geometry::JitterKind;

fn main() -> voxsketch::Result<()> {
    let mut args = std::env::args().skip(1);
    let count: usize = args.next().and_then(|s| s.parse().ok()).unwrap_or(20);
    let out = std::path::PathBuf::from(args.next().unwrap_or_else(|| "toy_dataset".into()));

    let config = DatasetConfig { shape_count: count, seed: 3, ..DatasetConfig::toy() };
    let report = build_dataset(&DatasetSource::Grammar, &config, &out)?;
    println!("train {}, test {}", report.train.samples.len(), report.test.samples.len());

    let test = DatasetManifest::load(out.join(Split::Test.file_name()))?;
    for shape in test.load_shapes()? {
        println!("{}: occupancy {:.3}, {} views", shape.shape_id, shape.grid.occupancy_fraction(0.5), shape.views.len());
    }

    let mut rng = rand::rng();
    println!("single-view viewpoints: {:?}", viewpoint_histogram(JitterKind::SingleView, 800, &mut rng));
    Ok(())
}
