//! Instance-aware refinement of initial BEV occupancy forecasts.
//!
//! Instance centres are extracted at `t = −1` by non-maximum suppression. For every
//! forecast step the backward centripetal flow carries each occupied pixel to a landing
//! point near the previous frame's centre of its instance; the pixel inherits that
//! instance's id. The clipped instance map masks the initial occupancy, and the result is
//! lifted to voxels with the predicted heights.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{
    label_volume, BevOccupancy, FlowField, InstanceMap, InstanceVolume, Occupancy3D, ScalarGrid,
    VoxelConfig,
};
use crate::labelgen::{lift_with_scalar_heights, LiftOptions};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct InstanceCenter {
    pub row: usize,
    pub col: usize,
    pub score: f32,
    pub instance_id: u32,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NmsParams {
    /// Minimum score of a centre.
    pub threshold: f32,
    /// Chebyshev suppression radius in cells.
    pub radius: usize,
}

impl Default for NmsParams {
    fn default() -> Self {
        Self {
            threshold: 0.5,
            radius: 2,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AssociationParams {
    /// A pixel whose landing point is farther than this (cells) from every previous
    /// centre is dropped as background.
    pub max_landing_distance: f64,
}

impl Default for AssociationParams {
    fn default() -> Self {
        Self {
            max_landing_distance: 3.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RefineParams {
    pub nms: NmsParams,
    pub association: AssociationParams,
    /// Probability at or above which a cell counts as occupied.
    pub binarize_threshold: f32,
    pub lift: LiftOptions,
}

impl Default for RefineParams {
    fn default() -> Self {
        Self {
            nms: NmsParams::default(),
            association: AssociationParams::default(),
            binarize_threshold: 0.5,
            lift: LiftOptions::default(),
        }
    }
}

/// One forecast step of the prediction heads.
#[derive(Clone, Debug, PartialEq)]
pub struct ForecastFrame {
    pub occ_prob: ScalarGrid,
    pub flow: FlowField,
    pub heights: ScalarGrid,
}

/// Prediction-head outputs for `t ∈ [0, N_f]`.
#[derive(Clone, Debug, PartialEq)]
pub struct ForecastBundle {
    pub frames: Vec<ForecastFrame>,
}

impl ForecastBundle {
    pub fn validate(&self) -> Result<()> {
        let Some(first) = self.frames.first() else {
            return Err(Error::InvariantViolation(
                "forecast bundle has no frames".into(),
            ));
        };
        let dims = first.occ_prob.dims();
        for (t, f) in self.frames.iter().enumerate() {
            f.occ_prob.ensure_dims(dims)?;
            f.flow.ensure_dims(dims)?;
            f.heights.ensure_dims(dims)?;
            if let Some(p) = f
                .occ_prob
                .as_slice()
                .iter()
                .find(|p| !(0.0..=1.0).contains(*p))
            {
                return Err(Error::InvariantViolation(format!(
                    "occupancy probability {p} at t={t} outside [0, 1]"
                )));
            }
        }
        Ok(())
    }

    pub fn dims(&self) -> Option<(usize, usize)> {
        self.frames.first().map(|f| f.occ_prob.dims())
    }
}

/// Refined outputs for `t ∈ [0, N_f]`.
#[derive(Clone, Debug, PartialEq)]
pub struct RefinedSequence {
    pub occ_2d: Vec<BevOccupancy>,
    pub instances: Vec<InstanceMap>,
    pub occ_3d: Vec<Occupancy3D>,
}

impl RefinedSequence {
    /// Voxels labelled with the id of their BEV column, one volume per step.
    pub fn instance_volumes(&self) -> Result<Vec<InstanceVolume>> {
        self.occ_3d
            .iter()
            .zip(&self.instances)
            .map(|(o, m)| label_volume(o, m))
            .collect()
    }
}

/// Local maxima of `seg_prob` at or above the threshold.
///
/// A cell survives if no other cell within the Chebyshev radius scores higher, and no
/// equal-scoring cell there precedes it in `(row, col)` order. Ids are assigned from 1 in
/// descending score, ties by position.
pub fn extract_centers_nms(
    seg_prob: &ScalarGrid,
    params: &NmsParams,
) -> Result<Vec<InstanceCenter>> {
    if params.radius < 1 {
        return Err(Error::InvalidConfig("NMS radius must be at least 1".into()));
    }
    if !(params.threshold > 0.0 && params.threshold < 1.0) {
        return Err(Error::InvalidConfig(format!(
            "NMS threshold {} outside (0, 1)",
            params.threshold
        )));
    }
    let (h, w) = seg_prob.dims();
    let r = params.radius;
    let mut peaks = Vec::new();
    for i in 0..h {
        for j in 0..w {
            let s = *seg_prob.get(i, j);
            if s.is_nan() || s < params.threshold {
                continue;
            }
            let mut is_peak = true;
            'window: for qi in i.saturating_sub(r)..=(i + r).min(h - 1) {
                for qj in j.saturating_sub(r)..=(j + r).min(w - 1) {
                    if (qi, qj) == (i, j) {
                        continue;
                    }
                    let q = *seg_prob.get(qi, qj);
                    if q > s || (q == s && (qi, qj) < (i, j)) {
                        is_peak = false;
                        break 'window;
                    }
                }
            }
            if is_peak {
                peaks.push((i, j, s));
            }
        }
    }
    peaks.sort_by(|a, b| b.2.total_cmp(&a.2).then((a.0, a.1).cmp(&(b.0, b.1))));
    Ok(peaks
        .into_iter()
        .enumerate()
        .map(|(n, (row, col, score))| InstanceCenter {
            row,
            col,
            score,
            instance_id: n as u32 + 1,
        })
        .collect())
}

/// Rounded pixel centroid of every instance, ordered by id. Score is the pixel count.
pub fn centers_from_instances(inst: &InstanceMap) -> Vec<InstanceCenter> {
    let mut acc: BTreeMap<u32, (f64, f64, usize)> = BTreeMap::new();
    for ((i, j), &id) in inst.indexed() {
        if id != 0 {
            let e = acc.entry(id).or_default();
            e.0 += i as f64;
            e.1 += j as f64;
            e.2 += 1;
        }
    }
    acc.into_iter()
        .map(|(id, (r, c, n))| InstanceCenter {
            row: (r / n as f64).round() as usize,
            col: (c / n as f64).round() as usize,
            score: n as f32,
            instance_id: id,
        })
        .collect()
}

/// Where the flow at `(i, j)` lands, rounded half away from zero.
fn landing_point(flow: &FlowField, i: usize, j: usize) -> Option<(usize, usize)> {
    let v = flow.get(i, j);
    let r = (i as f64 + v.drow as f64).round();
    let c = (j as f64 + v.dcol as f64).round();
    if !(r.is_finite() && c.is_finite()) {
        return None;
    }
    if r < 0.0 || c < 0.0 || r >= flow.rows() as f64 || c >= flow.cols() as f64 {
        return None;
    }
    Some((r as usize, c as usize))
}

/// Nearest centre to `q` within `max_dist`, ties to the smaller id.
fn nearest_center(centers: &[InstanceCenter], q: (usize, usize), max_dist: f64) -> Option<u32> {
    let mut best: Option<(i64, u32)> = None;
    for c in centers {
        let dr = c.row as i64 - q.0 as i64;
        let dc = c.col as i64 - q.1 as i64;
        let d2 = dr * dr + dc * dc;
        let better = match best {
            None => true,
            Some((bd, bid)) => d2 < bd || (d2 == bd && c.instance_id < bid),
        };
        if better {
            best = Some((d2, c.instance_id));
        }
    }
    best.filter(|&(d2, _)| (d2 as f64).sqrt() <= max_dist)
        .map(|(_, id)| id)
}

/// Assigns every occupied pixel at `t` the id of the previous-frame centre nearest to its
/// flow landing point. Free pixels, off-grid landings and landings beyond the gate
/// distance become background.
pub fn associate_step(
    centers_prev: &[InstanceCenter],
    flow_t: &FlowField,
    occ_t: &BevOccupancy,
    params: &AssociationParams,
) -> Result<InstanceMap> {
    flow_t.ensure_dims(occ_t.dims())?;
    let (h, w) = occ_t.dims();
    Ok(InstanceMap::from_fn(h, w, |i, j| {
        if !*occ_t.get(i, j) {
            return 0;
        }
        landing_point(flow_t, i, j)
            .and_then(|q| nearest_center(centers_prev, q, params.max_landing_distance))
            .unwrap_or(0)
    }))
}

/// `min(id, 1)` per cell.
pub fn clip_mask(m: &InstanceMap) -> BevOccupancy {
    m.map(|&id| id >= 1)
}

pub fn binarize(prob: &ScalarGrid, threshold: f32) -> BevOccupancy {
    prob.map(|&p| p >= threshold)
}

/// `(initial ≥ threshold) ∧ mask`.
pub fn refine_occupancy(
    initial: &ScalarGrid,
    mask: &BevOccupancy,
    threshold: f32,
) -> Result<BevOccupancy> {
    mask.ensure_dims(initial.dims())?;
    let (h, w) = initial.dims();
    Ok(BevOccupancy::from_fn(h, w, |i, j| {
        *initial.get(i, j) >= threshold && *mask.get(i, j)
    }))
}

/// Lifts BEV occupancy with predicted heights, filling from the grid bottom.
pub fn lift_to_3d(
    bev: &BevOccupancy,
    heights: &ScalarGrid,
    cfg: &VoxelConfig,
) -> Result<Occupancy3D> {
    lift_with_scalar_heights(bev, heights, cfg, &LiftOptions::default())
}

pub fn lift_to_3d_with(
    bev: &BevOccupancy,
    heights: &ScalarGrid,
    cfg: &VoxelConfig,
    lift: &LiftOptions,
) -> Result<Occupancy3D> {
    lift_with_scalar_heights(bev, heights, cfg, lift)
}

/// Full refinement over `t ∈ [0, N_f]`.
pub fn refine_sequence(
    bundle: &ForecastBundle,
    seg_prob_prev: &ScalarGrid,
    params: &RefineParams,
    cfg: &VoxelConfig,
) -> Result<RefinedSequence> {
    bundle.validate()?;
    let dims = cfg.bev_dims();
    seg_prob_prev.ensure_dims(dims)?;
    if let Some(d) = bundle.dims() {
        if d != dims {
            return Err(Error::dims(&[dims.0, dims.1], &[d.0, d.1]));
        }
    }
    let mut centers = extract_centers_nms(seg_prob_prev, &params.nms)?;
    let n = bundle.frames.len();
    let mut out = RefinedSequence {
        occ_2d: Vec::with_capacity(n),
        instances: Vec::with_capacity(n),
        occ_3d: Vec::with_capacity(n),
    };
    for frame in &bundle.frames {
        let occ_t = binarize(&frame.occ_prob, params.binarize_threshold);
        let ids = associate_step(&centers, &frame.flow, &occ_t, &params.association)?;
        let mask = clip_mask(&ids);
        let refined = refine_occupancy(&frame.occ_prob, &mask, params.binarize_threshold)?;
        let lifted = lift_to_3d_with(&refined, &frame.heights, cfg, &params.lift)?;
        centers = centers_from_instances(&ids);
        out.occ_2d.push(refined);
        out.instances.push(ids);
        out.occ_3d.push(lifted);
    }
    Ok(out)
}

/// Thresholded initial forecasts lifted without instance refinement.
pub fn lift_unrefined(
    bundle: &ForecastBundle,
    params: &RefineParams,
    cfg: &VoxelConfig,
) -> Result<Vec<Occupancy3D>> {
    bundle
        .frames
        .iter()
        .map(|f| {
            lift_to_3d_with(
                &binarize(&f.occ_prob, params.binarize_threshold),
                &f.heights,
                cfg,
                &params.lift,
            )
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::FlowVector;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn grid_with(h: usize, w: usize, peaks: &[((usize, usize), f32)]) -> ScalarGrid {
        let mut g = ScalarGrid::new(h, w);
        for &((i, j), s) in peaks {
            g.set(i, j, s);
        }
        g
    }

    // Brute force: compare against every other cell and keep those within the radius.
    fn oracle_nms(g: &ScalarGrid, thr: f32, r: usize) -> Vec<(usize, usize)> {
        let mut keep = Vec::new();
        for ((i, j), &s) in g.indexed() {
            if s < thr {
                continue;
            }
            let dominated = g.indexed().any(|((a, b), &q)| {
                let cheb = (a as i64 - i as i64).abs().max((b as i64 - j as i64).abs());
                (a, b) != (i, j) && cheb as usize <= r && (q > s || (q == s && (a, b) < (i, j)))
            });
            if !dominated {
                keep.push((i, j));
            }
        }
        keep
    }

    #[test]
    fn nms_on_empty_grid() {
        let g = ScalarGrid::new(10, 10);
        assert!(extract_centers_nms(&g, &NmsParams::default())
            .unwrap()
            .is_empty());
    }

    #[test]
    fn nms_single_peak() {
        let g = grid_with(10, 10, &[((5, 5), 0.9)]);
        let c = extract_centers_nms(
            &g,
            &NmsParams {
                threshold: 0.5,
                radius: 2,
            },
        )
        .unwrap();
        assert_eq!(c.len(), 1);
        assert_eq!((c[0].row, c[0].col, c[0].instance_id), (5, 5, 1));
    }

    #[test]
    fn nms_diagonal_neighbours_follow_the_oracle() {
        let g = grid_with(12, 12, &[((5, 5), 0.9), ((6, 6), 0.8)]);
        for r in [1, 2] {
            let got: Vec<_> = extract_centers_nms(
                &g,
                &NmsParams {
                    threshold: 0.5,
                    radius: r,
                },
            )
            .unwrap()
            .iter()
            .map(|c| (c.row, c.col))
            .collect();
            assert_eq!(got, oracle_nms(&g, 0.5, r));
            // diagonal neighbours are one Chebyshev step apart
            assert_eq!(got, vec![(5, 5)]);
        }
        let far = grid_with(12, 12, &[((5, 5), 0.9), ((7, 7), 0.8)]);
        let at = |r| {
            extract_centers_nms(
                &far,
                &NmsParams {
                    threshold: 0.5,
                    radius: r,
                },
            )
            .unwrap()
            .iter()
            .map(|c| (c.row, c.col, c.instance_id))
            .collect::<Vec<_>>()
        };
        assert_eq!(at(2), vec![(5, 5, 1)]);
        assert_eq!(at(1), vec![(5, 5, 1), (7, 7, 2)]);
    }

    #[test]
    fn nms_plateau_keeps_first_cell() {
        let g = grid_with(6, 6, &[((2, 2), 0.7), ((2, 3), 0.7), ((3, 2), 0.7)]);
        let c = extract_centers_nms(&g, &NmsParams::default()).unwrap();
        assert_eq!(c.len(), 1);
        assert_eq!((c[0].row, c[0].col), (2, 2));
    }

    #[test]
    fn nms_matches_oracle_on_random_grids() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..40 {
            let g = ScalarGrid::from_fn(9, 11, |_, _| {
                // coarse values make ties common
                (rng.random_range(0..10) as f32) / 10.0
            });
            let r = rng.random_range(1..4);
            let got: Vec<_> = extract_centers_nms(
                &g,
                &NmsParams {
                    threshold: 0.45,
                    radius: r,
                },
            )
            .unwrap()
            .iter()
            .map(|c| (c.row, c.col))
            .collect::<std::collections::BTreeSet<_>>()
            .into_iter()
            .collect();
            assert_eq!(got, oracle_nms(&g, 0.45, r));
        }
    }

    #[test]
    fn nms_rejects_bad_params() {
        let g = ScalarGrid::new(3, 3);
        assert!(extract_centers_nms(
            &g,
            &NmsParams {
                threshold: 0.5,
                radius: 0
            }
        )
        .is_err());
        assert!(extract_centers_nms(
            &g,
            &NmsParams {
                threshold: 1.0,
                radius: 1
            }
        )
        .is_err());
        assert!(extract_centers_nms(
            &g,
            &NmsParams {
                threshold: 0.0,
                radius: 1
            }
        )
        .is_err());
    }

    fn square(
        h: usize,
        w: usize,
        rows: std::ops::Range<usize>,
        cols: std::ops::Range<usize>,
    ) -> BevOccupancy {
        BevOccupancy::from_fn(h, w, |i, j| rows.contains(&i) && cols.contains(&j))
    }

    #[test]
    fn zero_flow_keeps_footprint_id() {
        let occ = square(16, 16, 4..9, 4..9);
        let centers = [InstanceCenter {
            row: 6,
            col: 6,
            score: 1.0,
            instance_id: 4,
        }];
        let ids = associate_step(
            &centers,
            &FlowField::new(16, 16),
            &occ,
            &AssociationParams::default(),
        )
        .unwrap();
        for ((i, j), &id) in ids.indexed() {
            let near = (i as f64 - 6.0).hypot(j as f64 - 6.0) <= 3.0;
            assert_eq!(id, if *occ.get(i, j) && near { 4 } else { 0 });
        }
        let loose = AssociationParams {
            max_landing_distance: f64::INFINITY,
        };
        let ids = associate_step(&centers, &FlowField::new(16, 16), &occ, &loose).unwrap();
        assert_eq!(clip_mask(&ids), occ);
    }

    #[test]
    fn flow_back_to_previous_center_preserves_id() {
        // Instance at rows 3..6 moved two rows down; flow points to the old centre (4, 6).
        let occ = square(16, 16, 5..8, 5..8);
        let mut flow = FlowField::new(16, 16);
        for ((i, j), &o) in occ.indexed() {
            if o {
                flow.set(i, j, FlowVector::new(4.0 - i as f32, 6.0 - j as f32));
            }
        }
        let centers = [
            InstanceCenter {
                row: 4,
                col: 6,
                score: 0.9,
                instance_id: 1,
            },
            InstanceCenter {
                row: 12,
                col: 12,
                score: 0.8,
                instance_id: 2,
            },
        ];
        let ids = associate_step(&centers, &flow, &occ, &AssociationParams::default()).unwrap();
        for ((i, j), &id) in ids.indexed() {
            assert_eq!(id, if *occ.get(i, j) { 1 } else { 0 });
        }
    }

    #[test]
    fn off_grid_landing_is_background() {
        let occ = square(8, 8, 0..2, 0..2);
        let flow = FlowField::filled(8, 8, FlowVector::new(-5.0, 0.0));
        let centers = [InstanceCenter {
            row: 0,
            col: 0,
            score: 1.0,
            instance_id: 1,
        }];
        let loose = AssociationParams {
            max_landing_distance: f64::INFINITY,
        };
        let ids = associate_step(&centers, &flow, &occ, &loose).unwrap();
        assert!(ids.as_slice().iter().all(|&v| v == 0));
        let ids = associate_step(&[], &FlowField::new(8, 8), &occ, &loose).unwrap();
        assert!(ids.as_slice().iter().all(|&v| v == 0));
    }

    #[test]
    fn association_matches_exhaustive_search() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..50 {
            let (h, w) = (rng.random_range(4..=16), rng.random_range(4..=16));
            let occ = BevOccupancy::from_fn(h, w, |_, _| rng.random_bool(0.4));
            let flow = FlowField::from_fn(h, w, |_, _| {
                FlowVector::new(rng.random_range(-6.0..6.0), rng.random_range(-6.0..6.0))
            });
            let n = rng.random_range(0..5);
            let centers: Vec<_> = (0..n)
                .map(|k| InstanceCenter {
                    row: rng.random_range(0..h),
                    col: rng.random_range(0..w),
                    score: 1.0,
                    instance_id: (n - k) as u32 * 3,
                })
                .collect();
            let gate = rng.random_range(0.5..8.0);
            let ids = associate_step(
                &centers,
                &flow,
                &occ,
                &AssociationParams {
                    max_landing_distance: gate,
                },
            )
            .unwrap();
            for ((i, j), &got) in ids.indexed() {
                let mut want = 0;
                if *occ.get(i, j) {
                    let v = flow.get(i, j);
                    let qr = (i as f64 + v.drow as f64).round();
                    let qc = (j as f64 + v.dcol as f64).round();
                    if qr >= 0.0 && qc >= 0.0 && qr < h as f64 && qc < w as f64 {
                        let mut cands: Vec<(f64, u32)> = centers
                            .iter()
                            .map(|c| ((c.row as f64 - qr).hypot(c.col as f64 - qc), c.instance_id))
                            .collect();
                        cands.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
                        if let Some(&(d, id)) = cands.first() {
                            if d <= gate {
                                want = id;
                            }
                        }
                    }
                }
                assert_eq!(got, want, "pixel ({i}, {j})");
            }
        }
    }

    #[test]
    fn clip_examples() {
        let m = InstanceMap::from_vec(1, 3, vec![0, 1, 7]).unwrap();
        assert_eq!(clip_mask(&m).as_slice(), &[false, true, true]);
        let b = InstanceMap::from_vec(1, 3, vec![0, 1, 1]).unwrap();
        assert_eq!(clip_mask(&b).map(|&v| v as u32), b);
        assert!(clip_mask(&InstanceMap::new(3, 3))
            .as_slice()
            .iter()
            .all(|v| !v));
    }

    #[test]
    fn refine_occupancy_examples() {
        let initial = ScalarGrid::from_vec(1, 3, vec![0.9, 0.4, 0.8]).unwrap();
        let mask = BevOccupancy::from_vec(1, 3, vec![true, true, false]).unwrap();
        assert_eq!(
            refine_occupancy(&initial, &mask, 0.5).unwrap().as_slice(),
            &[true, false, false]
        );
        let ones = BevOccupancy::filled(1, 3, true);
        assert_eq!(
            refine_occupancy(&initial, &ones, 0.5).unwrap(),
            binarize(&initial, 0.5)
        );
        let zeros = BevOccupancy::new(1, 3);
        assert_eq!(refine_occupancy(&initial, &zeros, 0.5).unwrap().count(), 0);
    }

    #[test]
    fn lift_examples() {
        let cfg = VoxelConfig::default();
        let mut bev = BevOccupancy::new(512, 512);
        let mut hm = ScalarGrid::filled(512, 512, 100.0);
        assert_eq!(lift_to_3d(&bev, &hm, &cfg).unwrap().count(), 0);
        bev.set(1, 1, true);
        hm.set(1, 1, -3.4);
        bev.set(2, 2, true);
        let occ = lift_to_3d(&bev, &hm, &cfg).unwrap();
        assert!(occ.column(1, 1)[..8].iter().all(|&v| v));
        assert!(occ.column(1, 1)[8..].iter().all(|&v| !v));
        assert!(occ.column(2, 2).iter().all(|&v| v));
        assert_eq!(occ.count(), 8 + 40);
    }

    fn centre_peak(h: usize, w: usize, at: (usize, usize)) -> ScalarGrid {
        grid_with(h, w, &[(at, 0.9)])
    }

    #[test]
    fn refine_removes_blob_far_from_centres() {
        let cfg = VoxelConfig::centered(16, 16, 4, 0.5, 0.0).unwrap();
        let object = square(16, 16, 3..6, 3..6);
        let blob = square(16, 16, 11..14, 11..14);
        let prob = ScalarGrid::from_fn(16, 16, |i, j| {
            if *object.get(i, j) || *blob.get(i, j) {
                0.9
            } else {
                0.1
            }
        });
        let mut flow = FlowField::new(16, 16);
        for ((i, j), &o) in object.indexed() {
            if o {
                flow.set(i, j, FlowVector::new(4.0 - i as f32, 4.0 - j as f32));
            }
        }
        let bundle = ForecastBundle {
            frames: vec![ForecastFrame {
                occ_prob: prob,
                flow,
                heights: ScalarGrid::filled(16, 16, 1.0),
            }],
        };
        let out = refine_sequence(
            &bundle,
            &centre_peak(16, 16, (4, 4)),
            &RefineParams::default(),
            &cfg,
        )
        .unwrap();
        assert_eq!(out.occ_2d[0], object);
        assert_eq!(out.occ_3d[0].count(), 9 * 2);
        assert!(out.instances[0].as_slice().iter().all(|&id| id <= 1));
    }

    #[test]
    fn no_centres_empties_every_frame() {
        let cfg = VoxelConfig::centered(8, 8, 2, 1.0, 0.0).unwrap();
        let frame = ForecastFrame {
            occ_prob: ScalarGrid::filled(8, 8, 0.9),
            flow: FlowField::new(8, 8),
            heights: ScalarGrid::filled(8, 8, 1.0),
        };
        let bundle = ForecastBundle {
            frames: vec![frame.clone(), frame],
        };
        let out = refine_sequence(
            &bundle,
            &ScalarGrid::new(8, 8),
            &RefineParams::default(),
            &cfg,
        )
        .unwrap();
        assert!(out.occ_2d.iter().all(|g| g.count() == 0));
        assert!(out.occ_3d.iter().all(|g| g.count() == 0));
    }

    #[test]
    fn bundle_validation() {
        let cfg = VoxelConfig::centered(4, 4, 2, 1.0, 0.0).unwrap();
        let bad = ForecastBundle {
            frames: vec![ForecastFrame {
                occ_prob: ScalarGrid::filled(4, 4, 1.5),
                flow: FlowField::new(4, 4),
                heights: ScalarGrid::new(4, 4),
            }],
        };
        assert!(
            refine_sequence(&bad, &ScalarGrid::new(4, 4), &RefineParams::default(), &cfg).is_err()
        );
        let empty = ForecastBundle { frames: vec![] };
        assert!(empty.validate().is_err());
    }

    #[test]
    fn params_deserialize_with_defaults() {
        let p: RefineParams = serde_json::from_str("{}").unwrap();
        assert_eq!(p, RefineParams::default());
        let p: RefineParams = serde_json::from_str(r#"{"nms":{"radius":3}}"#).unwrap();
        assert_eq!(p.nms.radius, 3);
        assert_eq!(p.nms.threshold, 0.5);
    }
}
