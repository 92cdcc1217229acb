use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Box3D, Grid2, Grid3, Occupancy3D, VoxelConfig};
use crate::labelgen::rasterize_boxes_3d;

use super::EvalWindow;

/// Flat view over a dense grid of any rank.
pub trait Cells<T> {
    fn cells(&self) -> &[T];
    fn shape(&self) -> Vec<usize>;
}

impl<T> Cells<T> for Grid2<T> {
    fn cells(&self) -> &[T] {
        self.as_slice()
    }

    fn shape(&self) -> Vec<usize> {
        vec![self.rows(), self.cols()]
    }
}

impl<T> Cells<T> for Grid3<T> {
    fn cells(&self) -> &[T] {
        self.as_slice()
    }

    fn shape(&self) -> Vec<usize> {
        let (h, w, l) = self.dims();
        vec![h, w, l]
    }
}

pub(crate) fn same_shape<T, A: Cells<T>, B: Cells<T>>(a: &A, b: &B) -> Result<()> {
    let (sa, sb) = (a.shape(), b.shape());
    if sa != sb {
        return Err(Error::DimensionMismatch {
            expected: sa,
            actual: sb,
        });
    }
    Ok(())
}

/// Per-cell tallies of a binary prediction against ground truth.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
    /// False positives inside an annotated box.
    pub fp_in_box: u64,
}

impl ConfusionCounts {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }

    /// `tp / (tp + fp + fn)`, with an empty-vs-empty frame scoring 1.
    pub fn iou(&self) -> f64 {
        let union = self.tp + self.fp + self.fn_;
        if union == 0 {
            1.0
        } else {
            self.tp as f64 / union as f64
        }
    }

    /// Conditional IoU of this frame, or `None` when the literal ratio is undefined.
    pub fn c_iou(&self, mode: CIouMode) -> Option<f64> {
        let credited = self.tp + self.fp_in_box;
        let denom = match mode {
            CIouMode::Literal => self.tp + self.fn_ + (self.fp - self.fp_in_box),
            CIouMode::UnionConsistent => self.tp + self.fn_ + self.fp,
        };
        if denom == 0 {
            (credited == 0).then_some(1.0)
        } else {
            Some(credited as f64 / denom as f64)
        }
    }
}

/// Tallies `pred` against `gt`; `in_box` flags cells inside annotated boxes.
pub fn confusion_cells(gt: &[bool], pred: &[bool], in_box: Option<&[bool]>) -> ConfusionCounts {
    debug_assert_eq!(gt.len(), pred.len());
    let mut c = ConfusionCounts::default();
    // Branch-free accumulation; this runs over ~10⁷ voxels per frame.
    let (mut tp, mut fp, mut fn_, mut fpb) = (0u64, 0u64, 0u64, 0u64);
    match in_box {
        Some(mask) => {
            debug_assert_eq!(mask.len(), gt.len());
            for ((&g, &p), &b) in gt.iter().zip(pred).zip(mask) {
                tp += (g & p) as u64;
                fp += (!g & p) as u64;
                fn_ += (g & !p) as u64;
                fpb += (!g & p & b) as u64;
            }
        }
        None => {
            for (&g, &p) in gt.iter().zip(pred) {
                tp += (g & p) as u64;
                fp += (!g & p) as u64;
                fn_ += (g & !p) as u64;
            }
        }
    }
    c.tp = tp;
    c.fp = fp;
    c.fn_ = fn_;
    c.fp_in_box = fpb;
    c.tn = gt.len() as u64 - tp - fp - fn_;
    c
}

/// Voxel tallies with `fp_in_box` counting false positives whose centres fall inside any
/// of `boxes`.
pub fn confusion(
    gt: &Occupancy3D,
    pred: &Occupancy3D,
    boxes: &[Box3D],
    cfg: &VoxelConfig,
) -> Result<ConfusionCounts> {
    same_shape(gt, pred)?;
    gt.ensure_dims(cfg.dims())?;
    let mask = rasterize_boxes_3d(boxes, cfg);
    Ok(confusion_cells(
        gt.cells(),
        pred.cells(),
        Some(mask.cells()),
    ))
}

fn window_counts<G: Cells<bool>>(
    gt_seq: &[G],
    pred_seq: &[G],
    masks: Option<&[Occupancy3D]>,
    window: &EvalWindow,
) -> Result<Vec<ConfusionCounts>> {
    window.check_covers(gt_seq.len())?;
    window.check_covers(pred_seq.len())?;
    window
        .frames()
        .map(|t| {
            let (g, p) = (&gt_seq[t], &pred_seq[t]);
            same_shape(g, p)?;
            let mask = match masks {
                Some(m) => {
                    window.check_covers(m.len())?;
                    if m[t].shape() != g.shape() {
                        return Err(Error::DimensionMismatch {
                            expected: g.shape(),
                            actual: m[t].shape(),
                        });
                    }
                    Some(m[t].cells())
                }
                None => None,
            };
            Ok(confusion_cells(g.cells(), p.cells(), mask))
        })
        .collect()
}

/// Mean per-frame IoU over the window; sequences are indexed from `t = 0`.
pub fn iou_window<G: Cells<bool>>(
    gt_seq: &[G],
    pred_seq: &[G],
    window: &EvalWindow,
) -> Result<f64> {
    Ok(iou_from_counts(&window_counts(
        gt_seq, pred_seq, None, window,
    )?))
}

pub fn iou_from_counts(counts: &[ConfusionCounts]) -> f64 {
    if counts.is_empty() {
        return 1.0;
    }
    counts.iter().map(ConfusionCounts::iou).sum::<f64>() / counts.len() as f64
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CIouMode {
    /// `(tp + fp̃) / (tp + fn + (fp − fp̃))`, which can exceed 1.
    #[default]
    Literal,
    /// `(tp + fp̃) / (tp + fn + fp)`, bounded by 1.
    UnionConsistent,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CIouResult {
    pub value: f64,
    /// Frames left out of the mean because the literal ratio had a zero denominator.
    pub skipped_frames: usize,
}

/// Mean conditional IoU over the frames where it is defined. A window where every frame
/// is skipped scores 1.
pub fn c_iou_from_counts(counts: &[ConfusionCounts], mode: CIouMode) -> CIouResult {
    let scores: Vec<f64> = counts.iter().filter_map(|c| c.c_iou(mode)).collect();
    let skipped_frames = counts.len() - scores.len();
    let value = if scores.is_empty() {
        1.0
    } else {
        scores.iter().sum::<f64>() / scores.len() as f64
    };
    CIouResult {
        value,
        skipped_frames,
    }
}

/// Conditional IoU of a prediction against fine-grained ground truth, crediting false
/// positives that fall inside the annotated boxes of their frame.
pub fn c_iou_window(
    gt_fg_seq: &[Occupancy3D],
    pred_seq: &[Occupancy3D],
    boxes_per_frame: &[Vec<Box3D>],
    cfg: &VoxelConfig,
    window: &EvalWindow,
    mode: CIouMode,
) -> Result<CIouResult> {
    window.check_covers(boxes_per_frame.len())?;
    let masks: Vec<Occupancy3D> = boxes_per_frame
        .iter()
        .map(|b| rasterize_boxes_3d(b, cfg))
        .collect();
    c_iou_window_masked(gt_fg_seq, pred_seq, &masks, window, mode)
}

/// [`c_iou_window`] with precomputed in-box masks.
pub fn c_iou_window_masked(
    gt_fg_seq: &[Occupancy3D],
    pred_seq: &[Occupancy3D],
    box_masks: &[Occupancy3D],
    window: &EvalWindow,
    mode: CIouMode,
) -> Result<CIouResult> {
    let counts = window_counts(gt_fg_seq, pred_seq, Some(box_masks), window)?;
    Ok(c_iou_from_counts(&counts, mode))
}
