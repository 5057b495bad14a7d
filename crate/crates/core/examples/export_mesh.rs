//! Realizes a grammar shape, extracts the smoothed 0.5 iso-surface, checks it
//! is watertight and writes the mesh, the grid and a ray-cast preview.
//!
//!     cargo run --release --example export_mesh -- [seed] [resolution] [out_dir]

use voxsketch::geometry::{extract_mesh, raycast_preview, viewpoint_camera, ViewpointId};
use voxsketch::grammar::{generate_program, realize, symmetrize, GrammarConfig};

fn main() -> voxsketch::Result<()> {
    let mut args = std::env::args().skip(1);
    let seed: u64 = args.next().and_then(|s| s.parse().ok()).unwrap_or(11);
    let n: usize = args.next().and_then(|s| s.parse().ok()).unwrap_or(48);
    let out = std::path::PathBuf::from(args.next().unwrap_or_else(|| "mesh_out".into()));
    std::fs::create_dir_all(&out)?;

    let grid = realize(&symmetrize(&generate_program(seed, &GrammarConfig::default())?), n)?;
    let mesh = extract_mesh(&grid, 0.5)?;
    let voxel_volume = grid.count_occupied(0.5) as f64 * grid.frame().voxel_size(n).powi(3);
    println!(
        "{} triangles, boundary edges {}, euler {}, volume {:.4} (voxels {:.4})",
        mesh.triangles.len(),
        mesh.boundary_edges(),
        mesh.euler_characteristic(),
        mesh.volume(),
        voxel_volume
    );
    mesh.save_obj(out.join("shape.obj"))?;
    grid.save(out.join("shape.vxg"))?;
    let cam = viewpoint_camera(ViewpointId::new(4)?, grid.frame());
    let preview = raycast_preview(&grid, &cam, 256, 256, 0.5);
    preview.write_png(std::fs::File::create(out.join("preview.png"))?)?;
    Ok(())
}
