//! Turns per-frame boxes into BEV, height, fine-grained, instance and flow labels.

use occgrid::grid::{Box3D, VoxelConfig};
use occgrid::labelgen::generate_labels;

fn main() -> occgrid::Result<()> {
    let cfg = VoxelConfig::centered(40, 40, 10, 0.5, -1.0)?;
    // a car driving along x and a parked van, three frames (t = -1, 0, 1)
    let boxes: Vec<Vec<Box3D>> = (0..3)
        .map(|f| {
            let x = -4.0 + 2.0 * f as f64;
            Ok(vec![
                Box3D::new([x, 2.0, -0.25], [4.0, 2.0, 1.5], 0.0, 1)?,
                Box3D::new([3.0, -5.0, 0.0], [5.0, 2.0, 2.0], 0.3, 2)?,
            ])
        })
        .collect::<occgrid::Result<_>>()?;

    let seq = generate_labels(&boxes, &cfg, 1, 1)?;
    for (f, frame) in seq.frames.iter().enumerate() {
        let t = f as i64 - seq.n_past as i64;
        let heights: Vec<f32> = frame.heights.as_slice().iter().flatten().copied().collect();
        let top = heights.iter().copied().fold(f32::MIN, f32::max);
        println!(
            "t={t:+}: {} box voxels, {} fine-grained voxels, {} BEV cells, tallest column {top:.2} m",
            frame.occ_bb.count(),
            frame.occ_fg.count(),
            frame.occ_bev.count(),
        );
    }
    // flow at t = 0 points from each pixel to its instance centre one frame earlier
    let (i, j) = cfg.world_to_cell(-2.0, 2.0).expect("inside the grid");
    let v = seq.flows[0].get(i, j);
    println!(
        "flow at the car centre: ({:.2}, {:.2}) cells",
        v.drow, v.dcol
    );
    Ok(())
}
