//! Training objective: occupancy cross-entropy plus smooth-L1 height and flow terms,
//! weighted and averaged over the forecast horizon.
//!
//! Every reduction is a mean in `f64`, accumulated in row-major order.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{BevOccupancy, FlowField, HeightMap, ScalarGrid};
use crate::labelgen::LabeledSequence;
use crate::metrics::Cells;
use crate::refine::ForecastBundle;

/// Probability clamp used by [`bce_loss`].
pub const BCE_EPS: f64 = 1e-7;

fn check_len(expected: &[usize], actual: &[usize]) -> Result<()> {
    if expected != actual {
        return Err(Error::DimensionMismatch {
            expected: expected.to_vec(),
            actual: actual.to_vec(),
        });
    }
    Ok(())
}

/// Mean binary cross-entropy of probabilities against a binary target.
pub fn bce_loss<P: Cells<f32>, G: Cells<bool>>(pred_prob: &P, gt: &G) -> Result<f64> {
    check_len(&gt.shape(), &pred_prob.shape())?;
    let cells = pred_prob.cells();
    if cells.is_empty() {
        return Ok(0.0);
    }
    let mut sum = 0.0;
    for (&p, &y) in cells.iter().zip(gt.cells()) {
        let p = (p as f64).clamp(BCE_EPS, 1.0 - BCE_EPS);
        sum -= if y { p.ln() } else { (1.0 - p).ln() };
    }
    Ok(sum / cells.len() as f64)
}

/// Elementwise smooth-L1 (Huber with slope 1) of a residual.
#[inline]
pub fn smooth_l1(d: f64, beta: f64) -> f64 {
    let a = d.abs();
    if a < beta {
        0.5 * d * d / beta
    } else {
        a - 0.5 * beta
    }
}

fn check_beta(beta: f64) -> Result<()> {
    if !(beta > 0.0 && beta.is_finite()) {
        return Err(Error::InvalidConfig(format!(
            "beta must be positive, got {beta}"
        )));
    }
    Ok(())
}

/// Mean smooth-L1 over the cells selected by `valid_mask`; 0 for an empty mask.
pub fn smooth_l1_loss(
    pred: &ScalarGrid,
    gt: &ScalarGrid,
    valid_mask: &BevOccupancy,
    beta: f64,
) -> Result<f64> {
    check_beta(beta)?;
    gt.ensure_dims(pred.dims())?;
    valid_mask.ensure_dims(pred.dims())?;
    let mut sum = 0.0;
    let mut n = 0usize;
    for ((&p, &g), &m) in pred
        .as_slice()
        .iter()
        .zip(gt.as_slice())
        .zip(valid_mask.as_slice())
    {
        if m {
            sum += smooth_l1(p as f64 - g as f64, beta);
            n += 1;
        }
    }
    Ok(if n == 0 { 0.0 } else { sum / n as f64 })
}

/// Smooth-L1 height loss over the cells where the label defines a height.
pub fn height_loss(pred: &ScalarGrid, gt: &HeightMap, beta: f64) -> Result<f64> {
    gt.ensure_dims(pred.dims())?;
    let mask = gt.map(Option::is_some);
    let target = gt.map(|h| h.unwrap_or(0.0));
    smooth_l1_loss(pred, &target, &mask, beta)
}

/// Smooth-L1 flow loss over the masked cells, averaged over both components.
pub fn flow_loss(pred: &FlowField, gt: &FlowField, mask: &BevOccupancy, beta: f64) -> Result<f64> {
    check_beta(beta)?;
    gt.ensure_dims(pred.dims())?;
    mask.ensure_dims(pred.dims())?;
    let mut sum = 0.0;
    let mut n = 0usize;
    for ((p, g), &m) in pred
        .as_slice()
        .iter()
        .zip(gt.as_slice())
        .zip(mask.as_slice())
    {
        if m {
            sum += smooth_l1(p.drow as f64 - g.drow as f64, beta);
            sum += smooth_l1(p.dcol as f64 - g.dcol as f64, beta);
            n += 2;
        }
    }
    Ok(if n == 0 { 0.0 } else { sum / n as f64 })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub lambda1: f64,
    pub lambda2: f64,
    pub lambda3: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            lambda1: 1.0,
            lambda2: 1.0,
            lambda3: 1.0,
        }
    }
}

impl LossWeights {
    pub fn new(lambda1: f64, lambda2: f64, lambda3: f64) -> Result<Self> {
        let w = Self {
            lambda1,
            lambda2,
            lambda3,
        };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<()> {
        let l = [self.lambda1, self.lambda2, self.lambda3];
        if l.iter().any(|v| !(v.is_finite() && *v >= 0.0)) || l.iter().all(|&v| v == 0.0) {
            return Err(Error::InvalidConfig(format!(
                "loss weights must be non-negative with one positive, got {l:?}"
            )));
        }
        Ok(())
    }
}

/// The three loss terms of one forecast step.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FrameLosses {
    pub occ: f64,
    pub height: f64,
    pub flow: f64,
}

/// `(1/(N_f+1)) Σ_t (λ1·occ_t + λ2·height_t + λ3·flow_t)`.
pub fn total_loss(per_frame: &[FrameLosses], w: &LossWeights) -> Result<f64> {
    w.validate()?;
    if per_frame.is_empty() {
        return Err(Error::InvalidConfig(
            "no frames to average the loss over".into(),
        ));
    }
    let sum: f64 = per_frame
        .iter()
        .map(|f| w.lambda1 * f.occ + w.lambda2 * f.height + w.lambda3 * f.flow)
        .sum();
    Ok(sum / per_frame.len() as f64)
}

/// Loss terms of a forecast bundle against labels over `t = 0..=N_f`.
///
/// The flow term is restricted to pixels of instances that also exist one frame earlier,
/// where the label flow is meaningful.
pub fn sequence_losses(
    bundle: &ForecastBundle,
    gt: &LabeledSequence,
    beta: f64,
) -> Result<Vec<FrameLosses>> {
    let labels = gt.present_and_future();
    if bundle.frames.len() != labels.len() {
        return Err(Error::InvariantViolation(format!(
            "bundle has {} frames, labels have {}",
            bundle.frames.len(),
            labels.len()
        )));
    }
    bundle
        .frames
        .iter()
        .enumerate()
        .map(|(t, f)| {
            let lab = &labels[t];
            let idx = gt.n_past + t;
            let movable = match idx.checked_sub(1).map(|p| &gt.frames[p].instances) {
                Some(prev) => {
                    let alive: std::collections::HashSet<u32> = prev
                        .as_slice()
                        .iter()
                        .copied()
                        .filter(|&id| id != 0)
                        .collect();
                    lab.instances.map(|id| alive.contains(id))
                }
                None => BevOccupancy::new(lab.instances.rows(), lab.instances.cols()),
            };
            Ok(FrameLosses {
                occ: bce_loss(&f.occ_prob, &lab.occ_bev)?,
                height: height_loss(&f.heights, &lab.heights, beta)?,
                flow: flow_loss(&f.flow, &gt.flows[t], &movable, beta)?,
            })
        })
        .collect()
}
