//! Cleans spurious blobs out of a corrupted forecast with instance association.

use occgrid::grid::VoxelConfig;
use occgrid::metrics::{iou_window, EvalWindow};
use occgrid::refine::{lift_unrefined, refine_sequence, RefineParams};
use occgrid::sim::{random_scene, simulate, CorruptionSpec};

fn main() -> occgrid::Result<()> {
    let cfg = VoxelConfig::centered(128, 128, 16, 0.2, -1.0)?;
    let spec = random_scene(7, &cfg, 2, 4);
    let corruption = CorruptionSpec {
        spurious_blob_count: 4,
        occ_flip_rate: 0.002,
        seed: 7,
        ..Default::default()
    };
    let sim = simulate(&spec, &corruption)?;

    let params = RefineParams::default();
    let out = &sim.outputs;
    let refined = refine_sequence(&out.bundle, &out.seg_prob_prev, &params, &cfg)?;
    let unrefined = lift_unrefined(&out.bundle, &params, &cfg)?;

    let gt: Vec<_> = sim
        .labels
        .present_and_future()
        .iter()
        .map(|f| f.occ_fg.clone())
        .collect();
    let window = EvalWindow::future(sim.labels.n_future)?;
    println!(
        "IoU_f unrefined {:.4}",
        iou_window(&gt, &unrefined, &window)?
    );
    println!(
        "IoU_f refined   {:.4}",
        iou_window(&gt, &refined.occ_3d, &window)?
    );
    for (t, m) in refined.instances.iter().enumerate() {
        let ids: std::collections::BTreeSet<u32> =
            m.as_slice().iter().copied().filter(|&id| id != 0).collect();
        println!("t={t}: instances {ids:?}");
    }
    Ok(())
}
