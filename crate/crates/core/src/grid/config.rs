use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative tolerance used when checking that an extent is a whole number of voxels.
const SPAN_TOLERANCE: f64 = 1e-9;

/// Snap distance (in voxel units) under which a coordinate is treated as lying on a voxel face.
const FACE_SNAP: f64 = 1e-9;

/// Metric extents and edge length of the voxel lattice.
///
/// The lattice has `H` cells along x, `W` along y and `L` along z. Every cell covers the
/// half-open interval `[min + i·res, min + (i+1)·res)` on each axis.
///
/// A `VoxelConfig` is validated on construction and on deserialization, so its dims are
/// always well defined.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawVoxelConfig", into = "RawVoxelConfig")]
pub struct VoxelConfig {
    x_min: f64,
    x_max: f64,
    y_min: f64,
    y_max: f64,
    z_min: f64,
    z_max: f64,
    resolution: f64,
    dims: (usize, usize, usize),
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
struct RawVoxelConfig {
    x_min: f64,
    x_max: f64,
    y_min: f64,
    y_max: f64,
    z_min: f64,
    z_max: f64,
    resolution: f64,
}

impl TryFrom<RawVoxelConfig> for VoxelConfig {
    type Error = Error;

    fn try_from(r: RawVoxelConfig) -> Result<Self> {
        Self::new(
            (r.x_min, r.x_max),
            (r.y_min, r.y_max),
            (r.z_min, r.z_max),
            r.resolution,
        )
    }
}

impl From<VoxelConfig> for RawVoxelConfig {
    fn from(c: VoxelConfig) -> Self {
        Self {
            x_min: c.x_min,
            x_max: c.x_max,
            y_min: c.y_min,
            y_max: c.y_max,
            z_min: c.z_min,
            z_max: c.z_max,
            resolution: c.resolution,
        }
    }
}

impl Default for VoxelConfig {
    /// ±51.2 m in x/y, [−5, 3] m in z at 0.2 m, i.e. a 512×512×40 lattice.
    fn default() -> Self {
        Self::new((-51.2, 51.2), (-51.2, 51.2), (-5.0, 3.0), 0.2)
            .expect("default extents are whole multiples of the resolution")
    }
}

fn cells_along(min: f64, max: f64, resolution: f64, axis: &str) -> Result<usize> {
    if !(min.is_finite() && max.is_finite()) {
        return Err(Error::InvalidConfig(format!("{axis} extent is not finite")));
    }
    let ratio = (max - min) / resolution;
    let rounded = ratio.round();
    if rounded < 1.0 {
        return Err(Error::InvalidConfig(format!(
            "{axis} extent [{min}, {max}) holds no voxel at resolution {resolution}"
        )));
    }
    if (ratio - rounded).abs() > SPAN_TOLERANCE * rounded {
        return Err(Error::InvalidConfig(format!(
            "{axis} extent {} is not a multiple of resolution {resolution}",
            max - min
        )));
    }
    Ok(rounded as usize)
}

/// Converts a coordinate to its cell index along one axis, honouring the half-open rule.
fn axis_index(coord: f64, min: f64, resolution: f64, cells: usize) -> Option<usize> {
    let f = (coord - min) / resolution;
    if !f.is_finite() {
        return None;
    }
    let nearest = f.round();
    let idx = if (f - nearest).abs() < FACE_SNAP {
        nearest
    } else {
        f.floor()
    };
    if idx < 0.0 || idx >= cells as f64 {
        None
    } else {
        Some(idx as usize)
    }
}

impl VoxelConfig {
    /// Builds a validated config.
    pub fn new(x: (f64, f64), y: (f64, f64), z: (f64, f64), resolution: f64) -> Result<Self> {
        if !(resolution.is_finite() && resolution > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "resolution must be positive, got {resolution}"
            )));
        }
        let dims = (
            cells_along(x.0, x.1, resolution, "x")?,
            cells_along(y.0, y.1, resolution, "y")?,
            cells_along(z.0, z.1, resolution, "z")?,
        );
        Ok(Self {
            x_min: x.0,
            x_max: x.1,
            y_min: y.0,
            y_max: y.1,
            z_min: z.0,
            z_max: z.1,
            resolution,
            dims,
        })
    }

    /// Cubic lattice centred on the origin in x/y, `z` cells tall starting at `z_min`.
    pub fn centered(h: usize, w: usize, l: usize, resolution: f64, z_min: f64) -> Result<Self> {
        let hx = h as f64 * resolution / 2.0;
        let hy = w as f64 * resolution / 2.0;
        Self::new(
            (-hx, hx),
            (-hy, hy),
            (z_min, z_min + l as f64 * resolution),
            resolution,
        )
    }

    pub fn x_min(&self) -> f64 {
        self.x_min
    }

    pub fn x_max(&self) -> f64 {
        self.x_max
    }

    pub fn y_min(&self) -> f64 {
        self.y_min
    }

    pub fn y_max(&self) -> f64 {
        self.y_max
    }

    pub fn z_min(&self) -> f64 {
        self.z_min
    }

    pub fn z_max(&self) -> f64 {
        self.z_max
    }

    pub fn resolution(&self) -> f64 {
        self.resolution
    }

    /// Lattice dims `(H, W, L)`.
    pub fn dims(&self) -> (usize, usize, usize) {
        self.dims
    }

    pub fn bev_dims(&self) -> (usize, usize) {
        (self.dims.0, self.dims.1)
    }

    /// Voxel containing `p`, or `None` outside the lattice. Upper bounds are exclusive.
    pub fn world_to_index(&self, p: [f64; 3]) -> Option<(usize, usize, usize)> {
        let (h, w, l) = self.dims;
        Some((
            axis_index(p[0], self.x_min, self.resolution, h)?,
            axis_index(p[1], self.y_min, self.resolution, w)?,
            axis_index(p[2], self.z_min, self.resolution, l)?,
        ))
    }

    /// BEV cell containing the planar point `(x, y)`.
    pub fn world_to_cell(&self, x: f64, y: f64) -> Option<(usize, usize)> {
        let (h, w, _) = self.dims;
        Some((
            axis_index(x, self.x_min, self.resolution, h)?,
            axis_index(y, self.y_min, self.resolution, w)?,
        ))
    }

    /// Centre of voxel `idx` in metres.
    pub fn index_to_center(&self, idx: (usize, usize, usize)) -> Result<[f64; 3]> {
        let (h, w, l) = self.dims;
        if idx.0 >= h || idx.1 >= w || idx.2 >= l {
            return Err(Error::IndexOutOfBounds {
                index: vec![idx.0, idx.1, idx.2],
                dims: vec![h, w, l],
            });
        }
        Ok([
            self.x_min + (idx.0 as f64 + 0.5) * self.resolution,
            self.y_min + (idx.1 as f64 + 0.5) * self.resolution,
            self.z_min + (idx.2 as f64 + 0.5) * self.resolution,
        ])
    }

    /// Centre of BEV cell `(i, j)`; no bounds check.
    pub fn cell_center(&self, i: usize, j: usize) -> [f64; 2] {
        [
            self.x_min + (i as f64 + 0.5) * self.resolution,
            self.y_min + (j as f64 + 0.5) * self.resolution,
        ]
    }

    /// Height of the centre of layer `k`; no bounds check.
    pub fn layer_center(&self, k: usize) -> f64 {
        self.z_min + (k as f64 + 0.5) * self.resolution
    }
}
