//! Computes the per-frame and total training loss of a forecast against its labels.

use occgrid::grid::VoxelConfig;
use occgrid::losses::{sequence_losses, total_loss, LossWeights};
use occgrid::sim::{random_scene, simulate, CorruptionSpec};

fn main() -> occgrid::Result<()> {
    let cfg = VoxelConfig::centered(64, 64, 16, 0.2, -1.0)?;
    let spec = random_scene(11, &cfg, 1, 3);
    for sigma in [0.0, 0.2, 1.0] {
        let corruption = CorruptionSpec {
            height_noise_sigma: sigma,
            flow_noise_sigma: sigma,
            seed: 1,
            ..Default::default()
        };
        let sim = simulate(&spec, &corruption)?;
        let frames = sequence_losses(&sim.outputs.bundle, &sim.labels, 1.0)?;
        let total = total_loss(&frames, &LossWeights::default())?;
        let heavy_flow = total_loss(&frames, &LossWeights::new(1.0, 1.0, 5.0)?)?;
        println!("noise {sigma}: total {total:.4} (flow weighted x5: {heavy_flow:.4})");
        for (t, f) in frames.iter().enumerate() {
            println!(
                "  t={t}: occ {:.4} height {:.4} flow {:.4}",
                f.occ, f.height, f.flow
            );
        }
    }
    Ok(())
}
