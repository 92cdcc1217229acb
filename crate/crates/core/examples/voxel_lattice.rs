//! Maps points between world coordinates and the voxel lattice.

use occgrid::grid::{Pose2D, VoxelConfig};

fn main() -> occgrid::Result<()> {
    let cfg = VoxelConfig::default();
    println!("dims {:?}, resolution {} m", cfg.dims(), cfg.resolution());
    println!(
        "x [{}, {}), y [{}, {}), z [{}, {})",
        cfg.x_min(),
        cfg.x_max(),
        cfg.y_min(),
        cfg.y_max(),
        cfg.z_min(),
        cfg.z_max()
    );

    for p in [[0.0, 0.0, 0.0], [12.3, -4.5, 1.0], [60.0, 0.0, 0.0]] {
        match cfg.world_to_index(p) {
            Some(idx) => println!(
                "{p:?} -> voxel {idx:?}, centre {:?}",
                cfg.index_to_center(idx)?
            ),
            None => println!("{p:?} is outside the grid"),
        }
    }

    // ego moved 2 m forward and turned 90 degrees
    let pose = Pose2D::new(2.0, 0.0, std::f64::consts::FRAC_PI_2);
    let (x, y) = pose.apply(1.0, 0.0);
    println!("(1, 0) in the moved frame is ({x:.3}, {y:.3}) in the reference frame");
    Ok(())
}
