use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{InstanceMap, Occupancy3D};

use super::iou::{same_shape, Cells};
use super::EvalWindow;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VpqMode {
    /// Mean of the per-frame quality terms over the window.
    #[default]
    Normalized,
    /// Plain sum of the per-frame terms.
    Summed,
}

/// Instance overlap statistics of one frame.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct FrameOverlap {
    gt_area: BTreeMap<u32, u64>,
    pred_area: BTreeMap<u32, u64>,
    intersection: BTreeMap<(u32, u32), u64>,
}

impl FrameOverlap {
    #[inline]
    fn add(&mut self, g: u32, p: u32) {
        if g != 0 {
            *self.gt_area.entry(g).or_default() += 1;
        }
        if p != 0 {
            *self.pred_area.entry(p).or_default() += 1;
        }
        if g != 0 && p != 0 {
            *self.intersection.entry((g, p)).or_default() += 1;
        }
    }

    /// Overlaps of two instance-labelled grids of equal shape.
    pub fn from_labels<G: Cells<u32>>(gt: &G, pred: &G) -> Result<Self> {
        same_shape(gt, pred)?;
        let mut o = Self::default();
        for (&g, &p) in gt.cells().iter().zip(pred.cells()) {
            if g != 0 || p != 0 {
                o.add(g, p);
            }
        }
        Ok(o)
    }

    /// Overlaps of voxel volumes whose instance ids come from their BEV columns, without
    /// materializing the labelled volumes.
    pub fn from_columns(
        gt_occ: &Occupancy3D,
        gt_ids: &InstanceMap,
        pred_occ: &Occupancy3D,
        pred_ids: &InstanceMap,
    ) -> Result<Self> {
        same_shape(gt_occ, pred_occ)?;
        let (h, w, _) = gt_occ.dims();
        gt_ids.ensure_dims((h, w))?;
        pred_ids.ensure_dims((h, w))?;
        let mut o = Self::default();
        for i in 0..h {
            for j in 0..w {
                let (gid, pid) = (*gt_ids.get(i, j), *pred_ids.get(i, j));
                if gid == 0 && pid == 0 {
                    continue;
                }
                for (&g, &p) in gt_occ.column(i, j).iter().zip(pred_occ.column(i, j)) {
                    let g = if g { gid } else { 0 };
                    let p = if p { pid } else { 0 };
                    if g != 0 || p != 0 {
                        o.add(g, p);
                    }
                }
            }
        }
        Ok(o)
    }

    pub fn iou(&self, g: u32, p: u32) -> f64 {
        let inter = self.intersection.get(&(g, p)).copied().unwrap_or(0);
        let union = self.gt_area.get(&g).copied().unwrap_or(0)
            + self.pred_area.get(&p).copied().unwrap_or(0)
            - inter;
        if union == 0 {
            0.0
        } else {
            inter as f64 / union as f64
        }
    }

    /// One-to-one matches with IoU above `threshold`, greedily by descending IoU.
    pub fn matches(&self, threshold: f64) -> Vec<(u32, u32, f64)> {
        let mut cands: Vec<(u32, u32, f64)> = self
            .intersection
            .keys()
            .map(|&(g, p)| (g, p, self.iou(g, p)))
            .filter(|&(_, _, iou)| iou > threshold)
            .collect();
        cands.sort_by(|a, b| b.2.total_cmp(&a.2).then((a.0, a.1).cmp(&(b.0, b.1))));
        let mut used_g = BTreeSet::new();
        let mut used_p = BTreeSet::new();
        cands
            .into_iter()
            .filter(|&(g, p, _)| {
                if used_g.contains(&g) || used_p.contains(&p) {
                    return false;
                }
                used_g.insert(g);
                used_p.insert(p);
                true
            })
            .collect()
    }

    pub fn gt_count(&self) -> usize {
        self.gt_area.len()
    }

    pub fn pred_count(&self) -> usize {
        self.pred_area.len()
    }
}

/// Video panoptic quality over frames already reduced to overlap statistics.
///
/// A matched pair `(g, p)` is a true positive only if neither side was matched to a
/// different partner in an earlier frame of the window. Frames with no instances on either
/// side score 1.
pub fn vpq_from_overlaps(frames: &[FrameOverlap], threshold: f64, mode: VpqMode) -> Result<f64> {
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(Error::InvalidConfig(format!(
            "match threshold {threshold} outside (0, 1)"
        )));
    }
    let mut gt_partners: BTreeMap<u32, BTreeSet<u32>> = BTreeMap::new();
    let mut pred_partners: BTreeMap<u32, BTreeSet<u32>> = BTreeMap::new();
    let mut total = 0.0;
    for frame in frames {
        let matches = frame.matches(threshold);
        let mut tp = 0usize;
        let mut iou_sum = 0.0;
        for &(g, p, iou) in &matches {
            let g_ok = gt_partners
                .get(&g)
                .is_none_or(|s| s.iter().all(|&x| x == p));
            let p_ok = pred_partners
                .get(&p)
                .is_none_or(|s| s.iter().all(|&x| x == g));
            if g_ok && p_ok {
                tp += 1;
                iou_sum += iou;
            }
        }
        for &(g, p, _) in &matches {
            gt_partners.entry(g).or_default().insert(p);
            pred_partners.entry(p).or_default().insert(g);
        }
        let fp = frame.pred_count() - tp;
        let fn_ = frame.gt_count() - tp;
        let denom = tp as f64 + 0.5 * fp as f64 + 0.5 * fn_ as f64;
        total += if denom == 0.0 { 1.0 } else { iou_sum / denom };
    }
    Ok(match mode {
        VpqMode::Normalized if !frames.is_empty() => total / frames.len() as f64,
        VpqMode::Normalized => 1.0,
        VpqMode::Summed => total,
    })
}

/// Video panoptic quality of instance-labelled sequences (indexed from `t = 0`).
pub fn vpq<G: Cells<u32>>(
    gt_inst_seq: &[G],
    pred_inst_seq: &[G],
    window: &EvalWindow,
    match_threshold: f64,
    mode: VpqMode,
) -> Result<f64> {
    window.check_covers(gt_inst_seq.len())?;
    window.check_covers(pred_inst_seq.len())?;
    let overlaps = window
        .frames()
        .map(|t| FrameOverlap::from_labels(&gt_inst_seq[t], &pred_inst_seq[t]))
        .collect::<Result<Vec<_>>>()?;
    vpq_from_overlaps(&overlaps, match_threshold, mode)
}
