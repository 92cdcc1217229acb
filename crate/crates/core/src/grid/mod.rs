//! Voxel lattice, grid containers and planar geometry shared by every stage.
//!
//! Axis convention: row index `i` follows x (`H` cells), column index `j` follows y
//! (`W` cells) and layer `k` follows z (`L` cells). Storage is row-major with x outermost.

mod config;
mod dense;
mod geometry;

pub use config::VoxelConfig;
pub use dense::{Grid2, Grid3};
pub use geometry::{normalize_angle, Box3D, Pose2D};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Binary voxel occupancy, `H×W×L`.
pub type Occupancy3D = Grid3<bool>;

/// Binary bird's-eye-view occupancy, `H×W`.
pub type BevOccupancy = Grid2<bool>;

/// Top height (metres) per BEV cell; `None` where the column is empty.
pub type HeightMap = Grid2<Option<f32>>;

/// Per-cell instance id; `0` is background.
pub type InstanceMap = Grid2<u32>;

/// Per-voxel instance id; `0` is background.
pub type InstanceVolume = Grid3<u32>;

/// Real-valued BEV grid, used for probabilities and predicted heights.
pub type ScalarGrid = Grid2<f32>;

/// Per-cell displacement `(Δrow, Δcol)` in grid cells.
pub type FlowField = Grid2<FlowVector>;

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FlowVector {
    pub drow: f32,
    pub dcol: f32,
}

impl FlowVector {
    pub const ZERO: FlowVector = FlowVector {
        drow: 0.0,
        dcol: 0.0,
    };

    pub fn new(drow: f32, dcol: f32) -> Self {
        Self { drow, dcol }
    }

    pub fn norm(&self) -> f32 {
        self.drow.hypot(self.dcol)
    }
}

/// Checks finiteness and the `max(H, W)` magnitude bound.
pub fn validate_flow(flow: &FlowField) -> Result<()> {
    let bound = flow.rows().max(flow.cols()) as f32;
    for ((i, j), v) in flow.indexed() {
        if !(v.drow.is_finite() && v.dcol.is_finite()) {
            return Err(Error::InvariantViolation(format!(
                "flow at ({i}, {j}) is not finite"
            )));
        }
        if v.norm() > bound {
            return Err(Error::InvariantViolation(format!(
                "flow at ({i}, {j}) has magnitude {} above {bound}",
                v.norm()
            )));
        }
    }
    Ok(())
}

/// Checks that heights are defined exactly on the occupied cells and lie in `(z_min, z_max]`.
pub fn validate_heights(
    heights: &HeightMap,
    occupancy: &BevOccupancy,
    cfg: &VoxelConfig,
) -> Result<()> {
    heights.ensure_dims(occupancy.dims())?;
    for ((i, j), h) in heights.indexed() {
        let occupied = *occupancy.get(i, j);
        match (h, occupied) {
            (Some(h), true) => {
                let h = *h as f64;
                // heights are stored in f32
                let slack = 1e-5 * cfg.resolution();
                if !(h > cfg.z_min() + slack && h <= cfg.z_max() + slack) {
                    return Err(Error::InvariantViolation(format!(
                        "height {h} at ({i}, {j}) outside ({}, {}]",
                        cfg.z_min(),
                        cfg.z_max()
                    )));
                }
            }
            (None, false) => {}
            (Some(_), false) => {
                return Err(Error::InvariantViolation(format!(
                    "height defined at unoccupied cell ({i}, {j})"
                )))
            }
            (None, true) => {
                return Err(Error::InvariantViolation(format!(
                    "occupied cell ({i}, {j}) has no height"
                )))
            }
        }
    }
    Ok(())
}

/// Labels every occupied voxel with the instance id of its BEV column.
pub fn label_volume(occupancy: &Occupancy3D, instances: &InstanceMap) -> Result<InstanceVolume> {
    let (h, w, l) = occupancy.dims();
    instances.ensure_dims((h, w))?;
    let mut out = InstanceVolume::new((h, w, l));
    for i in 0..h {
        for j in 0..w {
            let id = *instances.get(i, j);
            if id == 0 {
                continue;
            }
            let src = occupancy.column(i, j);
            for (dst, &occ) in out.column_mut(i, j).iter_mut().zip(src) {
                if occ {
                    *dst = id;
                }
            }
        }
    }
    Ok(out)
}
