//! Spatially and temporally decoupled occupancy grids.
//!
//! Boxes become voxel labels ([`labelgen`]), 3D features collapse to bird's-eye view by
//! adaptive dual pooling ([`pooling`]), BEV forecasts are refined instance by instance
//! along predicted backward flow and lifted back to voxels ([`refine`]), and the result is
//! scored with windowed IoU, conditional IoU and video panoptic quality ([`metrics`]).
//! [`sim`] produces synthetic scenes for end-to-end runs and [`io`] reads and writes the
//! on-disk formats used by the `occgrid` binary.

pub mod cli;
pub mod error;
pub mod grid;
pub mod io;
pub mod labelgen;
pub mod losses;
pub mod metrics;
pub mod pooling;
pub mod refine;
pub mod sim;

pub use error::{Error, Result};
pub use grid::{
    BevOccupancy, Box3D, FlowField, FlowVector, Grid2, Grid3, HeightMap, InstanceMap,
    InstanceVolume, Occupancy3D, Pose2D, ScalarGrid, VoxelConfig,
};
