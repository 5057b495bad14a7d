//! Voxel grids in world and camera frames, the viewpoint catalog, resampling
//! between the two frames, iso-surface meshing and ray-cast previews.

mod camera;
mod frustum;
mod grid;
mod mesh;
mod raycast;

pub use camera::{
    jitter_camera, viewpoint_camera, Basis, Camera, JitterKind, Projection, ProjectionMode, ViewpointId,
    CORNER_VIEW_COUNT, DEFAULT_FOV_DEG, DISTANCE_PER_EXTENT, VIEWPOINT_COUNT,
};
pub use frustum::{resample_frustum_to_world, resample_world_to_frustum, resample_world_to_frustum_in, FrustumGrid};
pub use grid::{iou, Frame, Vec3, WorldGrid, FRAME_MARGIN};
pub use mesh::{extract_mesh, extract_mesh_with, marching_tetrahedra, BilateralParams, Mesh};
pub use raycast::{raycast_preview, Preview};
