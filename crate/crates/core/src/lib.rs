//! Volumetric reconstruction of shapes from perspective line drawings.
//!
//! The crate covers the whole pipeline: procedural CSG shapes ([`grammar`]),
//! voxel grids, cameras and meshing ([`geometry`]), contour rendering
//! ([`render`]), dataset generation ([`dataset`]), the single-view and updater
//! networks ([`network`]), multi-view fusion ([`fusion`]), the silhouette
//! carving baseline ([`carve`]), evaluation ([`harness`]) and the interactive
//! session service ([`service`]).

pub mod carve;
pub mod dataset;
pub mod error;
pub mod fusion;
pub mod geometry;
pub mod grammar;
pub mod harness;
pub mod network;
pub mod raster;
pub mod render;
pub mod service;

pub use error::{Error, Result};
