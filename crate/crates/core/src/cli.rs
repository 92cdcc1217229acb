//! Command-line front end.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 unreadable or malformed
//! input, 3 invariant violation (including mismatched grid dimensions).

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Box3D, VoxelConfig};
use crate::io::{self, GridData, GridFile};
use crate::labelgen::{generate_labels_with, LiftOptions};
use crate::metrics::{evaluate_sequence, EvalOptions, GtFormat, WindowKind};
use crate::refine::{refine_sequence, RefineParams};
use crate::sim::{simulate, CorruptionSpec, SceneSpec};

/// Environment variable capping worker threads; `0` or unset means one per core.
pub const THREADS_ENV: &str = "OCCGRID_THREADS";

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_FORMAT: i32 = 2;
pub const EXIT_INVARIANT: i32 = 3;

/// Settings shared by every pipeline stage; each section falls back to its defaults.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub voxel: VoxelConfig,
    pub lift: LiftOptions,
    pub refine: RefineParams,
    pub eval: EvalOptions,
}

/// Input of `simulate`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimulationSpec {
    pub scene: SceneSpec,
    #[serde(default)]
    pub corruption: CorruptionSpec,
}

/// Input of `gen-labels`: boxes per frame from `t = −n_past` to `t = n_future`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoxSequence {
    pub n_past: usize,
    pub n_future: usize,
    pub boxes: Vec<Vec<Box3D>>,
}

#[derive(Parser, Debug)]
#[command(
    name = "occgrid",
    version,
    about = "Occupancy grid labels, refinement and metrics"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate a scene and write boxes, poses, labels and corrupted forecasts.
    Simulate {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate label grids from per-frame boxes.
    GenLabels {
        #[arg(long)]
        boxes: PathBuf,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Refine a forecast bundle directory.
    Refine {
        #[arg(long)]
        pred: PathBuf,
        /// Defaults to the lattice recorded in the bundle and default parameters.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score refined predictions against a label directory.
    Evaluate {
        #[arg(long)]
        gt: PathBuf,
        #[arg(long)]
        pred: PathBuf,
        #[arg(long, value_enum, default_value_t = WindowArg::All)]
        window: WindowArg,
        #[arg(long, value_enum, default_value_t = FormatArg::Fg)]
        format: FormatArg,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print a grid file header and summary statistics.
    Inspect { file: PathBuf },
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum WindowArg {
    Current,
    Future,
    All,
}

impl From<WindowArg> for WindowKind {
    fn from(w: WindowArg) -> Self {
        match w {
            WindowArg::Current => WindowKind::Current,
            WindowArg::Future => WindowKind::Future,
            WindowArg::All => WindowKind::All,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum FormatArg {
    Bb,
    Fg,
}

impl From<FormatArg> for GtFormat {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Bb => GtFormat::Bb,
            FormatArg::Fg => GtFormat::Fg,
        }
    }
}

pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::InvalidConfig(_) => EXIT_USAGE,
        Error::Format(_) | Error::Io { .. } => EXIT_FORMAT,
        Error::DimensionMismatch { .. }
        | Error::IndexOutOfBounds { .. }
        | Error::InvariantViolation(_) => EXIT_INVARIANT,
    }
}

/// Parses `args` (program name first), runs the command and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    if let Err(e) = configure_threads() {
        eprintln!("error: {e}");
        return exit_code(&e);
    }
    let stdout = std::io::stdout();
    match execute(cli.command, &mut stdout.lock()) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn configure_threads() -> Result<()> {
    let Ok(raw) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .map_err(|_| Error::InvalidConfig(format!("{THREADS_ENV}={raw:?} is not a count")))?;
    // A pool may already exist when run() is called twice in one process.
    let _ = rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global();
    Ok(())
}

fn execute(cmd: Command, out: &mut impl Write) -> Result<()> {
    match cmd {
        Command::Simulate { spec, out: dir } => cmd_simulate(&spec, &dir),
        Command::GenLabels {
            boxes,
            config,
            out: dir,
        } => cmd_gen_labels(&boxes, &config, &dir),
        Command::Refine {
            pred,
            config,
            out: dir,
        } => cmd_refine(&pred, config.as_deref(), &dir),
        Command::Evaluate {
            gt,
            pred,
            window,
            format,
            config,
            out: path,
        } => cmd_evaluate(
            &gt,
            &pred,
            window.into(),
            format.into(),
            config.as_deref(),
            &path,
        ),
        Command::Inspect { file } => cmd_inspect(&file, out),
    }
}

fn cmd_simulate(spec_path: &Path, dir: &Path) -> Result<()> {
    let spec: SimulationSpec = io::read_json(spec_path)?;
    let sim = simulate(&spec.scene, &spec.corruption)?;
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    io::write_json(&dir.join("scene.json"), &sim.scene)?;
    let config = PipelineConfig {
        voxel: spec.scene.cfg,
        lift: sim.labels.lift,
        ..Default::default()
    };
    io::write_json(&dir.join("config.json"), &config)?;
    io::write_labels(&dir.join("labels"), &sim.labels)?;
    io::write_bundle(
        &dir.join("pred"),
        &sim.outputs.bundle,
        &sim.outputs.seg_prob_prev,
        &spec.scene.cfg,
    )
}

fn cmd_gen_labels(boxes_path: &Path, config_path: &Path, dir: &Path) -> Result<()> {
    let boxes: BoxSequence = io::read_json(boxes_path)?;
    let config: PipelineConfig = io::read_json(config_path)?;
    let seq = generate_labels_with(
        &boxes.boxes,
        &config.voxel,
        boxes.n_past,
        boxes.n_future,
        &config.lift,
    )?;
    io::write_labels(dir, &seq)
}

fn cmd_refine(pred: &Path, config_path: Option<&Path>, dir: &Path) -> Result<()> {
    let (bundle, center, recorded) = io::read_bundle(pred)?;
    let (cfg, params) = match config_path {
        Some(p) => {
            let c: PipelineConfig = io::read_json(p)?;
            (c.voxel, c.refine)
        }
        None => (
            recorded.ok_or_else(|| {
                Error::InvalidConfig("bundle records no voxel config; pass --config".into())
            })?,
            RefineParams::default(),
        ),
    };
    let refined = refine_sequence(&bundle, &center, &params, &cfg)?;
    io::write_refined(dir, &refined, &cfg)
}

fn cmd_evaluate(
    gt_dir: &Path,
    pred_dir: &Path,
    window: WindowKind,
    format: GtFormat,
    config_path: Option<&Path>,
    out: &Path,
) -> Result<()> {
    let opts = match config_path {
        Some(p) => io::read_json::<PipelineConfig>(p)?.eval,
        None => EvalOptions::default(),
    };
    let gt = io::read_labels(gt_dir)?;
    let (pred, _) = io::read_refined(pred_dir)?;
    let report = evaluate_sequence(&gt, &pred.occ_3d, &pred.instances, &opts)?;
    let mut inputs = io::digest_tree(gt_dir, "gt")?;
    inputs.extend(io::digest_tree(pred_dir, "pred")?);
    let file = io::ReportFile::new(report, format, window, inputs)?;
    io::write_json(out, &file)
}

fn cmd_inspect(path: &Path, out: &mut impl Write) -> Result<()> {
    let file = io::read_grid_file(path)?;
    write_summary(&file, out).map_err(|e| Error::io(path, e))
}

/// Header fields and value statistics of a grid file, one `key: value` per line.
pub fn write_summary(file: &GridFile, out: &mut impl Write) -> std::io::Result<()> {
    let h = &file.header;
    writeln!(out, "dtype: {}", h.dtype.name())?;
    writeln!(out, "shape: {:?}", h.shape)?;
    writeln!(out, "axes: {:?}", h.axes)?;
    match &h.voxel_config {
        Some(c) => writeln!(out, "voxel_config: {}", serde_json::to_string(c).unwrap())?,
        None => writeln!(out, "voxel_config: null")?,
    }
    writeln!(out, "elements: {}", h.element_count())?;
    writeln!(out, "payload_bytes: {}", h.payload_len())?;
    match &file.data {
        GridData::U8(v) => {
            writeln!(out, "nonzero: {}", v.iter().filter(|&&b| b != 0).count())?;
        }
        GridData::U32(v) => {
            let ids: std::collections::BTreeSet<u32> =
                v.iter().copied().filter(|&x| x != 0).collect();
            writeln!(out, "nonzero: {}", v.iter().filter(|&&x| x != 0).count())?;
            writeln!(out, "distinct_ids: {}", ids.len())?;
            writeln!(out, "max: {}", v.iter().max().copied().unwrap_or(0))?;
        }
        GridData::F32(v) => {
            let finite: Vec<f64> = v
                .iter()
                .filter(|x| x.is_finite())
                .map(|&x| x as f64)
                .collect();
            writeln!(out, "nan: {}", v.iter().filter(|x| x.is_nan()).count())?;
            if finite.is_empty() {
                writeln!(out, "min: null\nmax: null\nmean: null")?;
            } else {
                let min = finite.iter().copied().fold(f64::INFINITY, f64::min);
                let max = finite.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let mean = finite.iter().sum::<f64>() / finite.len() as f64;
                writeln!(out, "min: {min}\nmax: {max}\nmean: {mean}")?;
            }
        }
    }
    Ok(())
}
