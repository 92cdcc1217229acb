//! Evaluation report JSON and input digests.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::metrics::{
    EvalWindow, GtFormat, HeadlineMetrics, MetricsReport, WindowKind, WindowTally,
};

/// Key holding the only non-deterministic field of a report.
pub const TIMESTAMP_KEY: &str = "generated_at";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowDef {
    pub t_start: usize,
    pub t_end: usize,
    pub n_all: usize,
}

impl From<EvalWindow> for WindowDef {
    fn from(w: EvalWindow) -> Self {
        Self {
            t_start: w.t_start(),
            t_end: w.t_end(),
            n_all: w.n_all(),
        }
    }
}

/// Scores for the window requested on the command line.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelectedScores {
    pub iou: f64,
    pub ciou: f64,
    pub ciou_skipped_frames: usize,
    pub vpq_bb: f64,
    pub vpq_fg: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportFile {
    pub tool: String,
    pub version: String,
    pub gt_format: GtFormat,
    pub window: WindowKind,
    pub windows: BTreeMap<String, WindowDef>,
    pub selected: SelectedScores,
    pub metrics: HeadlineMetrics,
    pub ciou_skipped_frames: WindowTally,
    pub details: MetricsReport,
    /// Lowercase hex SHA-256 of each input file, keyed by relative path.
    pub inputs: BTreeMap<String, String>,
    /// Seconds since the Unix epoch; `SOURCE_DATE_EPOCH` overrides the clock.
    pub generated_at: u64,
}

impl ReportFile {
    pub fn new(
        report: MetricsReport,
        format: GtFormat,
        window: WindowKind,
        inputs: BTreeMap<String, String>,
    ) -> Result<Self> {
        let n_f = report.n_future;
        window.window(n_f)?;
        let mut windows: BTreeMap<String, WindowDef> = BTreeMap::new();
        for (name, kind) in [
            ("current", WindowKind::Current),
            ("future", WindowKind::Future),
            ("all", WindowKind::All),
        ] {
            if let Ok(w) = kind.window(n_f) {
                windows.insert(name.to_string(), w.into());
            }
        }
        let headline = report.headline(format);
        let iou = match format {
            GtFormat::Bb => &report.iou_bb,
            GtFormat::Fg => &report.iou_fg,
        };
        let skipped = &report.ciou_skipped_frames;
        let selected = SelectedScores {
            iou: iou.get(window).expect("window validated"),
            ciou: report.ciou.get(window).expect("window validated"),
            ciou_skipped_frames: match window {
                WindowKind::Current => skipped.current,
                WindowKind::Future => skipped.future.unwrap_or(0),
                WindowKind::All => skipped.all,
            },
            vpq_bb: report.vpq_bb,
            vpq_fg: report.vpq_fg,
        };
        Ok(Self {
            tool: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            gt_format: format,
            window,
            windows,
            selected,
            metrics: headline,
            ciou_skipped_frames: *skipped,
            details: report,
            inputs,
            generated_at: timestamp(),
        })
    }
}

fn timestamp() -> u64 {
    if let Some(t) = std::env::var("SOURCE_DATE_EPOCH")
        .ok()
        .and_then(|s| s.trim().parse().ok())
    {
        return t;
    }
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// Digests of every file under `root`, keyed by `prefix/relative/path`.
pub fn digest_tree(root: &Path, prefix: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        let entries = fs::read_dir(&dir).map_err(|e| Error::io(&dir, e))?;
        for entry in entries {
            let path = entry.map_err(|e| Error::io(&dir, e))?.path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let rel = path.strip_prefix(root).expect("walked from root");
                let key = Path::new(prefix).join(rel);
                let key = key
                    .components()
                    .map(|c| c.as_os_str().to_string_lossy())
                    .collect::<Vec<_>>()
                    .join("/");
                out.insert(key, sha256_file(&path)?);
            }
        }
    }
    Ok(out)
}
