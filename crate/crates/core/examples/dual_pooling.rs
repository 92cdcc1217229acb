//! Collapses voxel features to BEV with weighted average and max pooling, then warps
//! two frames into the present and stacks them.

use occgrid::grid::{Pose2D, VoxelConfig};
use occgrid::pooling::{
    adaptive_dual_pool, aggregate_frames, avg_pool_z, max_pool_z, FeatureVolume, PoolWeights,
};

fn main() -> occgrid::Result<()> {
    // one channel, a 2x2 plane, 4 height bins
    let vol = FeatureVolume::from_fn((1, 2, 2, 4), |_, i, j, k| {
        (i * 2 + j) as f32 + k as f32 * 0.5
    })?;
    println!("avg {:?}", avg_pool_z(&vol).values());
    println!("max {:?}", max_pool_z(&vol).values());
    for (a_avg, a_max) in [(1.0, 0.0), (1.0, 1.0), (0.2, 0.8), (0.0, 1.0)] {
        let pooled = adaptive_dual_pool(&vol, &PoolWeights::new(a_avg, a_max)?)?;
        println!("alpha ({a_avg}, {a_max}): {:?}", pooled.values());
    }

    // a single hot cell seen one frame ago, before the ego moved 1 m along x
    let cfg = VoxelConfig::centered(8, 8, 4, 1.0, 0.0)?;
    let past = FeatureVolume::from_fn(
        (1, 8, 8, 4),
        |_, i, j, _| {
            if (i, j) == (4, 4) {
                1.0
            } else {
                0.0
            }
        },
    )?;
    let present = FeatureVolume::from_fn((1, 8, 8, 4), |_, _, _, _| 0.0)?;
    let w = PoolWeights::new(0.5, 0.5)?;
    let feats = [
        adaptive_dual_pool(&past, &w)?,
        adaptive_dual_pool(&present, &w)?,
    ];
    let poses = [Pose2D::new(-1.0, 0.0, 0.0), Pose2D::identity()];
    let stacked = aggregate_frames(&feats, &poses, &cfg)?;
    let warped = stacked.frames[0].channel(0);
    let hot: Vec<_> = warped
        .indexed()
        .filter(|(_, &v)| v > 0.0)
        .map(|(ij, _)| ij)
        .collect();
    println!(
        "stacked dims {:?}, past hot cell now at {hot:?}",
        stacked.dims()
    );
    Ok(())
}
