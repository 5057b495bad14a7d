//! Generates a random symmetric CSG shape and writes its contour drawings from
//! all 13 catalog viewpoints, plus the filled silhouette of the first view.
//!
//!     cargo run --release --example draw_shape -- [seed] [size] [out_dir]

use voxsketch::geometry::{extract_mesh, viewpoint_camera, ViewpointId};
use voxsketch::grammar::{generate_program, realize, symmetrize, GrammarConfig};
use voxsketch::render::{render_drawing, silhouette_mask, ContourConfig};

fn main() -> voxsketch::Result<()> {
    let mut args = std::env::args().skip(1);
    let seed: u64 = args.next().and_then(|s| s.parse().ok()).unwrap_or(7);
    let size: usize = args.next().and_then(|s| s.parse().ok()).unwrap_or(256);
    let out = std::path::PathBuf::from(args.next().unwrap_or_else(|| "drawings".into()));
    std::fs::create_dir_all(&out)?;

    let program = symmetrize(&generate_program(seed, &GrammarConfig::default())?);
    print!("{}", program.to_text());
    let grid = realize(&program, 64)?;
    let mesh = extract_mesh(&grid, 0.5)?;
    println!("mesh: {} vertices, {} triangles", mesh.positions.len(), mesh.triangles.len());

    for id in ViewpointId::all() {
        let cam = viewpoint_camera(id, grid.frame());
        let drawing = render_drawing(&mesh, &cam, size, size, &ContourConfig::default());
        let path = out.join(format!("view{:02}_{}.png", id.get(), id.label()));
        drawing.save(&path)?;
        println!("{}: ink coverage {:.2}%", path.display(), 100.0 * drawing.ink_coverage());
        if id.get() == 0 {
            let mask = silhouette_mask(&drawing);
            let f = std::fs::File::create(out.join("view00_mask.png"))?;
            mask.write_png(f)?;
        }
    }
    Ok(())
}
