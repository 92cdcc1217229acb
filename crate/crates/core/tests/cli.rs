use std::path::Path;
use std::process::{Command, Output};

use occgrid::cli::SimulationSpec;
use occgrid::grid::{Occupancy3D, VoxelConfig};
use occgrid::io::{write_grid, ReportFile};
use occgrid::sim::{random_scene, CorruptionSpec};

fn occgrid(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_occgrid"))
        .args(args)
        .env("OCCGRID_THREADS", "2")
        .output()
        .expect("binary runs")
}

fn code(args: &[&str]) -> i32 {
    occgrid(args).status.code().unwrap()
}

/// Runs a command line given as one string; `@` expands to the work directory.
fn sh(dir: &Path, line: &str) -> Output {
    let line = line.replace('@', dir.to_str().unwrap());
    occgrid(&line.split_whitespace().collect::<Vec<_>>())
}

fn sh_code(dir: &Path, line: &str) -> i32 {
    sh(dir, line).status.code().unwrap()
}

fn write_spec(path: &Path, cfg: VoxelConfig) {
    let spec = SimulationSpec {
        scene: random_scene(5, &cfg, 2, 3),
        corruption: CorruptionSpec::default(),
    };
    std::fs::write(path, serde_json::to_vec(&spec).unwrap()).unwrap();
}

#[test]
fn clean_pipeline_scores_perfectly() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    write_spec(
        &d.join("spec.json"),
        VoxelConfig::centered(64, 64, 16, 0.2, -1.0).unwrap(),
    );

    assert_eq!(sh_code(d, "simulate --spec @/spec.json --out @/sim"), 0);
    assert_eq!(sh_code(d, "refine --pred @/sim/pred --out @/refined"), 0);
    for window in ["current", "future", "all"] {
        let line = format!(
            "evaluate --gt @/sim/labels --pred @/refined --window {window} --out @/{window}.json"
        );
        assert_eq!(sh_code(d, &line), 0, "window {window}");
        let bytes = std::fs::read(d.join(format!("{window}.json"))).unwrap();
        let r: ReportFile = serde_json::from_slice(&bytes).unwrap();
        let sel = r.selected;
        assert_eq!(
            (sel.iou, sel.ciou, sel.vpq_bb, sel.vpq_fg),
            (1.0, 1.0, 1.0, 1.0)
        );
        assert!(r.inputs.contains_key("gt/manifest.json"));
    }
}

#[test]
fn mismatched_grids_exit_with_invariant_code() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    write_spec(
        &d.join("a.json"),
        VoxelConfig::centered(32, 32, 8, 0.4, -1.0).unwrap(),
    );
    write_spec(
        &d.join("b.json"),
        VoxelConfig::centered(48, 48, 8, 0.4, -1.0).unwrap(),
    );
    assert_eq!(sh_code(d, "simulate --spec @/a.json --out @/a"), 0);
    assert_eq!(sh_code(d, "simulate --spec @/b.json --out @/b"), 0);
    assert_eq!(sh_code(d, "refine --pred @/b/pred --out @/rb"), 0);

    let out = sh(d, "evaluate --gt @/a/labels --pred @/rb --out @/r.json");
    assert_eq!(out.status.code(), Some(3));
    assert!(!out.stderr.is_empty());
    assert!(!d.join("r.json").exists());
}

#[test]
fn inspect_prints_header() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = VoxelConfig::default();
    write_grid(
        &dir.path().join("occ.sgrd"),
        &Occupancy3D::new(cfg.dims()),
        Some(&cfg),
    )
    .unwrap();
    let out = sh(dir.path(), "inspect @/occ.sgrd");
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("dtype: u8"), "{text}");
    assert!(text.contains("shape: [512, 512, 40]"), "{text}");
}

#[test]
fn bad_input_exit_codes() {
    assert_eq!(code(&["frobnicate"]), 1);
    assert_eq!(
        code(&["evaluate", "--gt", "a", "--pred", "b", "--window", "later", "--out", "r"]),
        1
    );
    assert_eq!(code(&["--help"]), 0);
    assert_eq!(code(&["--version"]), 0);

    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("junk.sgrd"), b"NOPE0000").unwrap();
    assert_eq!(sh_code(dir.path(), "inspect @/junk.sgrd"), 2);
    assert_eq!(sh_code(dir.path(), "inspect @/missing.sgrd"), 2);
}
