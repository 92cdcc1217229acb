//! Builds a scripted two-actor scene and prints the boxes seen from each ego pose.

use occgrid::grid::{Box3D, VoxelConfig};
use occgrid::sim::{generate_scene, ActorSpec, SceneSpec};

fn main() -> occgrid::Result<()> {
    let cfg = VoxelConfig::centered(128, 128, 16, 0.4, -2.0)?;
    let spec = SceneSpec {
        actors: vec![
            ActorSpec {
                initial: Box3D::new([-10.0, 3.0, -1.0], [4.5, 2.0, 2.0], 0.0, 1)?,
                velocity: [5.0, 0.0],
                yaw_rate: 0.0,
            },
            ActorSpec {
                initial: Box3D::new([8.0, -8.0, -1.0], [4.0, 1.8, 2.0], 1.2, 2)?,
                velocity: [0.0, 3.0],
                yaw_rate: 0.2,
            },
        ],
        ego_velocity: [2.0, 0.0],
        frame_dt: 0.5,
        n_past: 1,
        n_future: 3,
        cfg,
        seed: 0,
    };
    let scene = generate_scene(&spec)?;
    for (f, (boxes, pose)) in scene.boxes.iter().zip(&scene.poses).enumerate() {
        let t = f as i64 - scene.n_past as i64;
        print!("t={t:+} ego ({:.1}, {:.1}):", pose.tx, pose.ty);
        for b in boxes {
            print!(
                " #{} ({:.2}, {:.2}) yaw {:.2}",
                b.instance_id, b.center[0], b.center[1], b.yaw
            );
        }
        println!();
    }
    Ok(())
}
