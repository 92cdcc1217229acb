//! Vertical feature pooling and warping of past BEV grids into the present frame.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Grid2, Pose2D, VoxelConfig};

/// `c×h×w×l` voxel features, `l` innermost.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureVolume {
    dims: (usize, usize, usize, usize),
    values: Vec<f32>,
}

impl FeatureVolume {
    pub fn new(dims: (usize, usize, usize, usize), values: Vec<f32>) -> Result<Self> {
        let n = dims.0 * dims.1 * dims.2 * dims.3;
        if values.len() != n {
            return Err(Error::dims(&[n], &[values.len()]));
        }
        if dims.3 == 0 {
            return Err(Error::InvalidConfig("feature volume needs l ≥ 1".into()));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvariantViolation(format!(
                "feature value at offset {pos} is not finite"
            )));
        }
        Ok(Self { dims, values })
    }

    pub fn from_fn(
        dims: (usize, usize, usize, usize),
        mut f: impl FnMut(usize, usize, usize, usize) -> f32,
    ) -> Result<Self> {
        let mut values = Vec::with_capacity(dims.0 * dims.1 * dims.2 * dims.3);
        for c in 0..dims.0 {
            for i in 0..dims.1 {
                for j in 0..dims.2 {
                    for k in 0..dims.3 {
                        values.push(f(c, i, j, k));
                    }
                }
            }
        }
        Self::new(dims, values)
    }

    pub fn dims(&self) -> (usize, usize, usize, usize) {
        self.dims
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn column(&self, c: usize, i: usize, j: usize) -> &[f32] {
        let (_, h, w, l) = self.dims;
        let start = ((c * h + i) * w + j) * l;
        &self.values[start..start + l]
    }

    fn reduce(&self, f: impl Fn(&[f32]) -> f32) -> BevFeature {
        let (c, h, w, l) = self.dims;
        BevFeature {
            dims: (c, h, w),
            values: self.values.chunks_exact(l).map(f).collect(),
        }
    }
}

/// `c×h×w` BEV features.
#[derive(Clone, Debug, PartialEq)]
pub struct BevFeature {
    dims: (usize, usize, usize),
    values: Vec<f32>,
}

impl BevFeature {
    pub fn new(dims: (usize, usize, usize), values: Vec<f32>) -> Result<Self> {
        let n = dims.0 * dims.1 * dims.2;
        if values.len() != n {
            return Err(Error::dims(&[n], &[values.len()]));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvariantViolation(format!(
                "feature value at offset {pos} is not finite"
            )));
        }
        Ok(Self { dims, values })
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        self.dims
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn get(&self, c: usize, i: usize, j: usize) -> f32 {
        let (_, h, w) = self.dims;
        self.values[(c * h + i) * w + j]
    }

    /// Channel `c` as a 2D grid.
    pub fn channel(&self, c: usize) -> Grid2<f32> {
        let (_, h, w) = self.dims;
        Grid2::from_vec(h, w, self.values[c * h * w..(c + 1) * h * w].to_vec())
            .expect("channel slice has h·w values")
    }
}

/// Relative weights of the average and max branches.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PoolWeights {
    pub alpha_avg: f64,
    pub alpha_max: f64,
}

impl Default for PoolWeights {
    fn default() -> Self {
        Self {
            alpha_avg: 0.5,
            alpha_max: 0.5,
        }
    }
}

impl PoolWeights {
    pub fn new(alpha_avg: f64, alpha_max: f64) -> Result<Self> {
        let w = Self {
            alpha_avg,
            alpha_max,
        };
        w.normalized()?;
        Ok(w)
    }

    /// Weights scaled to sum to one.
    pub fn normalized(&self) -> Result<(f64, f64)> {
        let (a, m) = (self.alpha_avg, self.alpha_max);
        if !(a.is_finite() && m.is_finite()) || a < 0.0 || m < 0.0 {
            return Err(Error::InvalidConfig(format!(
                "pool weights must be finite and non-negative, got ({a}, {m})"
            )));
        }
        let sum = a + m;
        if sum <= 0.0 {
            return Err(Error::InvalidConfig("pool weights are both zero".into()));
        }
        Ok((a / sum, m / sum))
    }
}

fn column_mean(col: &[f32]) -> f64 {
    col.iter().map(|&v| v as f64).sum::<f64>() / col.len() as f64
}

fn column_max(col: &[f32]) -> f32 {
    col.iter().copied().fold(f32::NEG_INFINITY, f32::max)
}

/// Mean over z.
pub fn avg_pool_z(vol: &FeatureVolume) -> BevFeature {
    vol.reduce(|col| column_mean(col) as f32)
}

/// Max over z.
pub fn max_pool_z(vol: &FeatureVolume) -> BevFeature {
    vol.reduce(column_max)
}

/// Convex mix of average and max pooling with normalized weights.
///
/// Computed as `avg + w_max·(max − avg)` and clamped into `[avg, max]`, so a degenerate
/// weight reproduces the corresponding single pool bit for bit.
pub fn adaptive_dual_pool(vol: &FeatureVolume, weights: &PoolWeights) -> Result<BevFeature> {
    let (_, w_max) = weights.normalized()?;
    Ok(vol.reduce(|col| {
        let avg = column_mean(col) as f32;
        let max = column_max(col);
        if w_max == 0.0 {
            avg
        } else if w_max == 1.0 {
            max
        } else {
            let mixed = avg as f64 + w_max * (max as f64 - avg as f64);
            (mixed as f32).clamp(avg, max)
        }
    }))
}

/// Cell geometry of an `h×w` grid spread over the metric x/y extent of `cfg`.
#[derive(Clone, Copy, Debug)]
struct PlanarLattice {
    x_min: f64,
    y_min: f64,
    dx: f64,
    dy: f64,
    rows: usize,
    cols: usize,
}

impl PlanarLattice {
    fn new(cfg: &VoxelConfig, rows: usize, cols: usize) -> Self {
        Self {
            x_min: cfg.x_min(),
            y_min: cfg.y_min(),
            dx: (cfg.x_max() - cfg.x_min()) / rows as f64,
            dy: (cfg.y_max() - cfg.y_min()) / cols as f64,
            rows,
            cols,
        }
    }

    fn center(&self, i: usize, j: usize) -> (f64, f64) {
        (
            self.x_min + (i as f64 + 0.5) * self.dx,
            self.y_min + (j as f64 + 0.5) * self.dy,
        )
    }

    fn cell(&self, x: f64, y: f64) -> Option<(usize, usize)> {
        let fi = ((x - self.x_min) / self.dx).floor();
        let fj = ((y - self.y_min) / self.dy).floor();
        if fi < 0.0 || fj < 0.0 || fi >= self.rows as f64 || fj >= self.cols as f64 {
            return None;
        }
        Some((fi as usize, fj as usize))
    }

    /// Source cell sampled by every output cell, or `None` when it falls outside.
    fn source_map(&self, pose: &Pose2D) -> Vec<Option<(usize, usize)>> {
        let mut out = Vec::with_capacity(self.rows * self.cols);
        for i in 0..self.rows {
            for j in 0..self.cols {
                let (x, y) = self.center(i, j);
                let (sx, sy) = pose.apply_inverse(x, y);
                out.push(self.cell(sx, sy));
            }
        }
        out
    }
}

/// Resampling of a frame-local BEV grid into the present frame.
///
/// Each output cell centre is mapped back through the inverse pose and takes the value
/// of the source cell it lands in. Samples outside the source grid read as zero or
/// background.
pub trait WarpToPresent: Sized {
    fn warp_to_present(&self, pose: &Pose2D, cfg: &VoxelConfig) -> Self;
}

impl<T: Copy + Default> WarpToPresent for Grid2<T> {
    fn warp_to_present(&self, pose: &Pose2D, cfg: &VoxelConfig) -> Self {
        if pose.is_identity() {
            return self.clone();
        }
        let lattice = PlanarLattice::new(cfg, self.rows(), self.cols());
        let src = lattice.source_map(pose);
        let data = src
            .into_iter()
            .map(|s| s.map_or_else(T::default, |(i, j)| *self.get(i, j)))
            .collect();
        Grid2::from_vec(self.rows(), self.cols(), data).expect("same dims as input")
    }
}

impl WarpToPresent for BevFeature {
    fn warp_to_present(&self, pose: &Pose2D, cfg: &VoxelConfig) -> Self {
        if pose.is_identity() {
            return self.clone();
        }
        let (c, h, w) = self.dims;
        let src = PlanarLattice::new(cfg, h, w).source_map(pose);
        let mut values = Vec::with_capacity(self.values.len());
        for ch in 0..c {
            let plane = &self.values[ch * h * w..(ch + 1) * h * w];
            values.extend(src.iter().map(|s| s.map_or(0.0, |(i, j)| plane[i * w + j])));
        }
        Self {
            dims: self.dims,
            values,
        }
    }
}

/// Per-frame BEV features warped to the present and stacked, `(N_p+1)×c×h×w`.
#[derive(Clone, Debug, PartialEq)]
pub struct StackedFeatures {
    pub frames: Vec<BevFeature>,
}

impl StackedFeatures {
    /// `(t, c, h, w)`.
    pub fn dims(&self) -> (usize, usize, usize, usize) {
        let (c, h, w) = self.frames.first().map_or((0, 0, 0), BevFeature::dims);
        (self.frames.len(), c, h, w)
    }

    /// Flat values, time outermost.
    pub fn to_vec(&self) -> Vec<f32> {
        self.frames
            .iter()
            .flat_map(|f| f.values.iter().copied())
            .collect()
    }
}

/// Warps each frame (oldest first, present last) with its pose and stacks them.
pub fn aggregate_frames(
    feats: &[BevFeature],
    poses: &[Pose2D],
    cfg: &VoxelConfig,
) -> Result<StackedFeatures> {
    if feats.len() != poses.len() {
        return Err(Error::dims(&[feats.len()], &[poses.len()]));
    }
    if feats.is_empty() {
        return Err(Error::InvalidConfig("no frames to aggregate".into()));
    }
    let dims = feats[0].dims();
    for f in feats {
        if f.dims() != dims {
            return Err(Error::dims(
                &[dims.0, dims.1, dims.2],
                &[f.dims.0, f.dims.1, f.dims.2],
            ));
        }
    }
    Ok(StackedFeatures {
        frames: feats
            .iter()
            .zip(poses)
            .map(|(f, p)| f.warp_to_present(p, cfg))
            .collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{BevOccupancy, InstanceMap};
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn column(values: &[f32]) -> FeatureVolume {
        FeatureVolume::new((1, 1, 1, values.len()), values.to_vec()).unwrap()
    }

    #[test]
    fn pooling_examples() {
        let v = column(&[0.0, 1.0, 2.0, 3.0]);
        assert_eq!(avg_pool_z(&v).values(), &[1.5]);
        assert_eq!(max_pool_z(&v).values(), &[3.0]);
        let w = PoolWeights::new(0.5, 0.5).unwrap();
        assert_eq!(adaptive_dual_pool(&v, &w).unwrap().values(), &[2.25]);

        let c = column(&[0.7; 5]);
        assert_eq!(avg_pool_z(&c).values(), &[0.7]);
        assert_eq!(max_pool_z(&c).values(), &[0.7]);
        assert_eq!(
            adaptive_dual_pool(&c, &PoolWeights::new(0.3, 0.9).unwrap())
                .unwrap()
                .values(),
            &[0.7]
        );

        let single = FeatureVolume::new((2, 1, 2, 1), vec![1.0, -2.0, 3.0, 4.0]).unwrap();
        assert_eq!(avg_pool_z(&single).values(), single.values());
        assert_eq!(max_pool_z(&single).values(), single.values());
    }

    #[test]
    fn degenerate_weights_reproduce_single_pools() {
        let v = FeatureVolume::from_fn((2, 3, 3, 5), |c, i, j, k| {
            ((c * 31 + i * 7 + j * 3 + k) as f32 * 0.37).sin()
        })
        .unwrap();
        assert_eq!(
            adaptive_dual_pool(&v, &PoolWeights::new(1.0, 0.0).unwrap()).unwrap(),
            avg_pool_z(&v)
        );
        assert_eq!(
            adaptive_dual_pool(&v, &PoolWeights::new(0.0, 2.0).unwrap()).unwrap(),
            max_pool_z(&v)
        );
    }

    #[test]
    fn zero_weights_rejected() {
        assert!(PoolWeights::new(0.0, 0.0).is_err());
        assert!(PoolWeights::new(-1.0, 2.0).is_err());
        let bad = PoolWeights {
            alpha_avg: 0.0,
            alpha_max: 0.0,
        };
        assert!(adaptive_dual_pool(&column(&[1.0]), &bad).is_err());
    }

    #[test]
    fn non_finite_features_rejected() {
        assert!(FeatureVolume::new((1, 1, 1, 2), vec![1.0, f32::NAN]).is_err());
        assert!(FeatureVolume::new((1, 1, 1, 0), vec![]).is_err());
    }

    fn small_cfg() -> VoxelConfig {
        VoxelConfig::centered(6, 6, 2, 1.0, 0.0).unwrap()
    }

    #[test]
    fn identity_pose_is_identity() {
        let cfg = small_cfg();
        let g = InstanceMap::from_fn(6, 6, |i, j| (i * 6 + j) as u32);
        assert_eq!(g.warp_to_present(&Pose2D::identity(), &cfg), g);
    }

    #[test]
    fn one_cell_translation_shifts_rows() {
        let cfg = small_cfg();
        let g = InstanceMap::from_fn(6, 6, |i, j| (i * 6 + j + 1) as u32);
        let out = g.warp_to_present(&Pose2D::new(1.0, 0.0, 0.0), &cfg);
        for ((i, j), &v) in out.indexed() {
            let want = if i == 0 { 0 } else { *g.get(i - 1, j) };
            assert_eq!(v, want);
        }
    }

    #[test]
    fn half_turn_keeps_symmetric_grid() {
        let cfg = small_cfg();
        let g = BevOccupancy::from_fn(6, 6, |i, j| {
            (i + j) % 3 == 0 && i + j != 5 || (i == 2 && j == 3) || (i == 3 && j == 2)
        });
        let sym = BevOccupancy::from_fn(6, 6, |i, j| *g.get(i, j) || *g.get(5 - i, 5 - j));
        assert_eq!(sym.warp_to_present(&Pose2D::new(0.0, 0.0, PI), &cfg), sym);
    }

    #[test]
    fn feature_warp_matches_per_channel_grid_warp() {
        let cfg = small_cfg();
        let f = BevFeature::new((2, 6, 6), (0..72).map(|v| v as f32).collect()).unwrap();
        let pose = Pose2D::new(0.4, -1.3, 0.6);
        let warped = f.warp_to_present(&pose, &cfg);
        for c in 0..2 {
            assert_eq!(warped.channel(c), f.channel(c).warp_to_present(&pose, &cfg));
        }
    }

    #[test]
    fn aggregate_stacks_warped_frames() {
        let cfg = small_cfg();
        let f0 = BevFeature::new((1, 6, 6), (0..36).map(|v| v as f32).collect()).unwrap();
        let f1 = BevFeature::new((1, 6, 6), (0..36).map(|v| (v * 2) as f32).collect()).unwrap();
        let single =
            aggregate_frames(std::slice::from_ref(&f0), &[Pose2D::identity()], &cfg).unwrap();
        assert_eq!(single.dims(), (1, 1, 6, 6));
        assert_eq!(single.frames[0], f0);

        let poses = [Pose2D::new(1.0, 0.0, 0.0), Pose2D::identity()];
        let stacked = aggregate_frames(&[f0.clone(), f1.clone()], &poses, &cfg).unwrap();
        assert_eq!(stacked.dims(), (2, 1, 6, 6));
        assert_eq!(stacked.frames[0], f0.warp_to_present(&poses[0], &cfg));
        assert_eq!(stacked.frames[1], f1);
        assert_eq!(stacked.to_vec().len(), 72);

        assert!(aggregate_frames(&[f0], &poses, &cfg).is_err());
    }

    proptest! {
        #[test]
        fn adaptive_is_between_avg_and_max(
            values in proptest::collection::vec(-100.0f32..100.0, 1..12),
            a in 0.0f64..10.0, m in 0.0f64..10.0, scale in 0.01f32..50.0
        ) {
            prop_assume!(a + m > 0.0);
            let v = column(&values);
            let w = PoolWeights::new(a, m).unwrap();
            let avg = avg_pool_z(&v).values()[0];
            let max = max_pool_z(&v).values()[0];
            let mix = adaptive_dual_pool(&v, &w).unwrap().values()[0];
            prop_assert!(avg <= mix && mix <= max);

            let scaled = column(&values.iter().map(|x| x * scale).collect::<Vec<_>>());
            let tol = 1e-4 * scale * 100.0;
            prop_assert!((avg_pool_z(&scaled).values()[0] - scale * avg).abs() <= tol);
            prop_assert!((max_pool_z(&scaled).values()[0] - scale * max).abs() <= tol);
            prop_assert!((adaptive_dual_pool(&scaled, &w).unwrap().values()[0] - scale * mix).abs() <= tol);
        }
    }
}
