//! Writes label and forecast grids to disk and reads them back.

use occgrid::grid::{HeightMap, Occupancy3D, VoxelConfig};
use occgrid::io::{read_grid, read_grid_file, read_labels, write_grid, write_labels};
use occgrid::sim::{random_scene, simulate, CorruptionSpec};

fn main() -> occgrid::Result<()> {
    let dir = std::env::temp_dir().join(format!("occgrid-example-{}", std::process::id()));
    let cfg = VoxelConfig::centered(64, 64, 16, 0.2, -1.0)?;
    let sim = simulate(&random_scene(4, &cfg, 1, 2), &CorruptionSpec::default())?;

    let frame = &sim.labels.present_and_future()[0];
    let occ_path = dir.join("occ_fg.sgrd");
    std::fs::create_dir_all(&dir).map_err(|e| occgrid::Error::Io {
        path: dir.clone(),
        source: e,
    })?;
    write_grid(&occ_path, &frame.occ_fg, Some(&cfg))?;
    write_grid(&dir.join("heights.sgrd"), &frame.heights, Some(&cfg))?;

    let file = read_grid_file(&occ_path)?;
    println!(
        "{} {:?} axes {:?}",
        file.header.dtype.name(),
        file.header.shape,
        file.header.axes
    );
    let (occ, stored_cfg): (Occupancy3D, _) = read_grid(&occ_path)?;
    let (heights, _): (HeightMap, _) = read_grid(&dir.join("heights.sgrd"))?;
    assert_eq!(occ, frame.occ_fg);
    assert_eq!(heights, frame.heights);
    println!(
        "round trip ok, voxel config stored: {}",
        stored_cfg == Some(cfg)
    );

    write_labels(&dir.join("labels"), &sim.labels)?;
    let back = read_labels(&dir.join("labels"))?;
    println!("label directory holds {} frames", back.frames.len());
    std::fs::remove_dir_all(&dir).ok();
    Ok(())
}
