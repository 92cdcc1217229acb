//! Windowed occupancy IoU, conditional IoU and video panoptic quality.
//!
//! Sequences handed to the metric functions are indexed from the present frame: index 0
//! is `t = 0`, index `n` is `t = n`.

mod iou;
mod vpq;

pub use iou::{
    c_iou_from_counts, c_iou_window, c_iou_window_masked, confusion, confusion_cells,
    iou_from_counts, iou_window, CIouMode, CIouResult, Cells, ConfusionCounts,
};
pub use vpq::{vpq, vpq_from_overlaps, FrameOverlap, VpqMode};

use std::ops::RangeInclusive;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{InstanceMap, Occupancy3D};
use crate::labelgen::{compress_to_bev, rasterize_boxes_3d, LabeledSequence};

/// Inclusive frame range `[t_start, t_end]` a metric averages over.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalWindow {
    t_start: usize,
    t_end: usize,
}

impl EvalWindow {
    pub fn new(t_start: usize, t_end: usize) -> Result<Self> {
        if t_start > t_end {
            return Err(Error::InvalidConfig(format!(
                "window start {t_start} after end {t_end}"
            )));
        }
        Ok(Self { t_start, t_end })
    }

    /// The present frame only.
    pub fn current() -> Self {
        Self {
            t_start: 0,
            t_end: 0,
        }
    }

    /// Frames `1..=n_future`; fails when there is no future frame.
    pub fn future(n_future: usize) -> Result<Self> {
        if n_future == 0 {
            return Err(Error::InvalidConfig(
                "future window needs at least one future frame".into(),
            ));
        }
        Self::new(1, n_future)
    }

    /// Frames `0..=n_future`.
    pub fn all(n_future: usize) -> Self {
        Self {
            t_start: 0,
            t_end: n_future,
        }
    }

    pub fn t_start(&self) -> usize {
        self.t_start
    }

    pub fn t_end(&self) -> usize {
        self.t_end
    }

    pub fn n_all(&self) -> usize {
        self.t_end - self.t_start + 1
    }

    pub fn frames(&self) -> RangeInclusive<usize> {
        self.t_start..=self.t_end
    }

    pub(crate) fn check_covers(&self, len: usize) -> Result<()> {
        if self.t_end >= len {
            return Err(Error::InvariantViolation(format!(
                "window [{}, {}] outside a sequence of {len} frames",
                self.t_start, self.t_end
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WindowKind {
    Current,
    Future,
    #[default]
    All,
}

impl WindowKind {
    pub fn window(self, n_future: usize) -> Result<EvalWindow> {
        match self {
            WindowKind::Current => Ok(EvalWindow::current()),
            WindowKind::Future => EvalWindow::future(n_future),
            WindowKind::All => Ok(EvalWindow::all(n_future)),
        }
    }
}

/// Which ground-truth volume the headline IoU figures compare against.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GtFormat {
    /// Box-inflated occupancy.
    Bb,
    /// Fine-grained occupancy.
    #[default]
    Fg,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalOptions {
    pub ciou_mode: CIouMode,
    pub vpq_mode: VpqMode,
    pub match_threshold: f64,
    /// Window the VPQ figures are computed over.
    pub vpq_window: WindowKind,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            ciou_mode: CIouMode::Literal,
            vpq_mode: VpqMode::Normalized,
            match_threshold: 0.5,
            vpq_window: WindowKind::All,
        }
    }
}

/// One score per standard window; `future` is `None` without future frames.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WindowScores {
    pub current: f64,
    pub future: Option<f64>,
    pub all: f64,
}

impl WindowScores {
    fn from_fn(n_future: usize, f: impl Fn(&EvalWindow) -> f64) -> Self {
        Self {
            current: f(&EvalWindow::current()),
            future: EvalWindow::future(n_future).ok().map(|w| f(&w)),
            all: f(&EvalWindow::all(n_future)),
        }
    }

    pub fn get(&self, kind: WindowKind) -> Option<f64> {
        match kind {
            WindowKind::Current => Some(self.current),
            WindowKind::Future => self.future,
            WindowKind::All => Some(self.all),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowTally {
    pub current: usize,
    pub future: Option<usize>,
    pub all: usize,
}

/// Headline figures in the usual table layout.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HeadlineMetrics {
    pub iou_c: f64,
    pub iou_f: Option<f64>,
    pub iou_tilde: f64,
    pub ciou_c: f64,
    pub ciou_f: Option<f64>,
    pub ciou_tilde: f64,
    pub vpq_bb: f64,
    pub vpq_fg: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub n_future: usize,
    pub options: EvalOptions,
    /// 3D IoU against box-inflated ground truth.
    pub iou_bb: WindowScores,
    /// 3D IoU against fine-grained ground truth.
    pub iou_fg: WindowScores,
    /// 2D IoU of the BEV projections.
    pub iou_bev: WindowScores,
    /// Conditional IoU against fine-grained ground truth.
    pub ciou: WindowScores,
    pub ciou_skipped_frames: WindowTally,
    pub vpq_bb: f64,
    pub vpq_fg: f64,
    /// Per-frame tallies for `t = 0..=n_future`.
    pub counts_bb: Vec<ConfusionCounts>,
    pub counts_fg: Vec<ConfusionCounts>,
}

impl MetricsReport {
    pub fn headline(&self, format: GtFormat) -> HeadlineMetrics {
        let iou = match format {
            GtFormat::Bb => &self.iou_bb,
            GtFormat::Fg => &self.iou_fg,
        };
        HeadlineMetrics {
            iou_c: iou.current,
            iou_f: iou.future,
            iou_tilde: iou.all,
            ciou_c: self.ciou.current,
            ciou_f: self.ciou.future,
            ciou_tilde: self.ciou.all,
            vpq_bb: self.vpq_bb,
            vpq_fg: self.vpq_fg,
        }
    }
}

struct FrameStats {
    bb: ConfusionCounts,
    fg: ConfusionCounts,
    bev: ConfusionCounts,
    overlap_bb: FrameOverlap,
    overlap_fg: FrameOverlap,
}

/// Scores a predicted sequence against labels over `t = 0..=n_future`.
///
/// `pred_3d[t]` is the predicted voxel occupancy and `pred_instances[t]` the BEV instance
/// map whose ids label its columns.
pub fn evaluate_sequence(
    gt: &LabeledSequence,
    pred_3d: &[Occupancy3D],
    pred_instances: &[InstanceMap],
    opts: &EvalOptions,
) -> Result<MetricsReport> {
    let n_f = gt.n_future;
    let expected = n_f + 1;
    for (what, len) in [("3D", pred_3d.len()), ("instance", pred_instances.len())] {
        if len != expected {
            return Err(Error::InvariantViolation(format!(
                "{what} prediction covers {len} frames, expected {expected}"
            )));
        }
    }
    let gt_frames = gt.present_and_future();
    let stats = (0..expected)
        .into_par_iter()
        .map(|t| {
            let g = &gt_frames[t];
            let p = &pred_3d[t];
            let pi = &pred_instances[t];
            iou::same_shape(&g.occ_bb, p)?;
            let mask = rasterize_boxes_3d(&gt.boxes[gt.n_past + t], &gt.cfg);
            let pred_bev = compress_to_bev(p);
            Ok(FrameStats {
                bb: confusion_cells(g.occ_bb.cells(), p.cells(), None),
                fg: confusion_cells(g.occ_fg.cells(), p.cells(), Some(mask.cells())),
                bev: confusion_cells(g.occ_bev.cells(), pred_bev.cells(), None),
                overlap_bb: FrameOverlap::from_columns(&g.occ_bb, &g.instances, p, pi)?,
                overlap_fg: FrameOverlap::from_columns(&g.occ_fg, &g.instances, p, pi)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let counts_bb: Vec<_> = stats.iter().map(|s| s.bb).collect();
    let counts_fg: Vec<_> = stats.iter().map(|s| s.fg).collect();
    let counts_bev: Vec<_> = stats.iter().map(|s| s.bev).collect();
    let slice = |c: &[ConfusionCounts], w: &EvalWindow| c[w.frames()].to_vec();

    let ciou_at = |w: &EvalWindow| c_iou_from_counts(&slice(&counts_fg, w), opts.ciou_mode);
    let future = EvalWindow::future(n_f).ok();
    let vpq_window = opts.vpq_window.window(n_f)?;
    let vpq_over = |pick: fn(&FrameStats) -> &FrameOverlap| {
        let frames: Vec<FrameOverlap> = stats[vpq_window.frames()]
            .iter()
            .map(|s| pick(s).clone())
            .collect();
        vpq_from_overlaps(&frames, opts.match_threshold, opts.vpq_mode)
    };

    Ok(MetricsReport {
        n_future: n_f,
        options: *opts,
        iou_bb: WindowScores::from_fn(n_f, |w| iou_from_counts(&slice(&counts_bb, w))),
        iou_fg: WindowScores::from_fn(n_f, |w| iou_from_counts(&slice(&counts_fg, w))),
        iou_bev: WindowScores::from_fn(n_f, |w| iou_from_counts(&slice(&counts_bev, w))),
        ciou: WindowScores::from_fn(n_f, |w| ciou_at(w).value),
        ciou_skipped_frames: WindowTally {
            current: ciou_at(&EvalWindow::current()).skipped_frames,
            future: future.map(|w| ciou_at(&w).skipped_frames),
            all: ciou_at(&EvalWindow::all(n_f)).skipped_frames,
        },
        vpq_bb: vpq_over(|s| &s.overlap_bb)?,
        vpq_fg: vpq_over(|s| &s.overlap_fg)?,
        counts_bb,
        counts_fg,
    })
}
