//! Scores a noisy forecast with IoU, C-IoU and VPQ over each evaluation window.

use occgrid::grid::VoxelConfig;
use occgrid::metrics::{evaluate_sequence, EvalOptions, GtFormat, WindowKind};
use occgrid::refine::{refine_sequence, RefineParams};
use occgrid::sim::{random_scene, simulate, CorruptionSpec};

fn main() -> occgrid::Result<()> {
    let cfg = VoxelConfig::centered(96, 96, 16, 0.2, -1.0)?;
    let corruption = CorruptionSpec {
        occ_flip_rate: 0.01,
        height_noise_sigma: 0.3,
        flow_noise_sigma: 0.5,
        spurious_blob_count: 2,
        seed: 3,
    };
    let sim = simulate(&random_scene(3, &cfg, 2, 3), &corruption)?;
    let out = &sim.outputs;
    let refined = refine_sequence(
        &out.bundle,
        &out.seg_prob_prev,
        &RefineParams::default(),
        &cfg,
    )?;

    let report = evaluate_sequence(
        &sim.labels,
        &refined.occ_3d,
        &refined.instances,
        &EvalOptions::default(),
    )?;
    for kind in [WindowKind::Current, WindowKind::Future, WindowKind::All] {
        if let Some(iou) = report.iou_fg.get(kind) {
            println!(
                "{kind:?}: IoU {iou:.4}, C-IoU {:.4}",
                report.ciou.get(kind).unwrap_or(f64::NAN)
            );
        }
    }
    let h = report.headline(GtFormat::Fg);
    println!("VPQ box {:.4}, VPQ fine-grained {:.4}", h.vpq_bb, h.vpq_fg);
    println!("{}", serde_json::to_string_pretty(&h).expect("serializes"));
    Ok(())
}
