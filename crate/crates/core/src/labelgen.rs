//! Ground-truth generation from oriented boxes.
//!
//! Boxes are rasterized into an inflated voxel volume, collapsed to BEV occupancy plus a
//! per-column top height, and lifted back into a fine-grained volume. Instance maps and
//! backward centripetal flow are derived from the BEV footprints.

use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{
    BevOccupancy, Box3D, FlowField, FlowVector, HeightMap, InstanceMap, Occupancy3D, VoxelConfig,
};

/// Options for lifting BEV occupancy back to voxels.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LiftOptions {
    /// Layer every occupied column is filled up from. `0` is the grid bottom.
    #[serde(default)]
    pub base_index: usize,
}

/// One frame of decoupled labels.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledFrame {
    /// Voxels whose centres fall inside a box.
    pub occ_bb: Occupancy3D,
    pub occ_bev: BevOccupancy,
    pub heights: HeightMap,
    /// Columns rebuilt from `occ_bev` and `heights`.
    pub occ_fg: Occupancy3D,
    pub instances: InstanceMap,
}

impl LabeledFrame {
    /// Checks the cross-grid invariants of a frame.
    pub fn validate(&self) -> Result<()> {
        let (h, w, l) = self.occ_bb.dims();
        self.occ_fg.ensure_dims((h, w, l))?;
        self.occ_bev.ensure_dims((h, w))?;
        self.heights.ensure_dims((h, w))?;
        self.instances.ensure_dims((h, w))?;
        for i in 0..h {
            for j in 0..w {
                let any = self.occ_bb.column(i, j).iter().any(|&v| v);
                if any != *self.occ_bev.get(i, j) {
                    return Err(Error::InvariantViolation(format!(
                        "BEV cell ({i}, {j}) disagrees with its voxel column"
                    )));
                }
                if any != self.heights.get(i, j).is_some() {
                    return Err(Error::InvariantViolation(format!(
                        "height presence at ({i}, {j}) disagrees with BEV occupancy"
                    )));
                }
                let fg = self.occ_fg.column(i, j);
                let bb = self.occ_bb.column(i, j);
                if fg.iter().zip(bb).any(|(&f, &b)| f && !b) {
                    return Err(Error::InvariantViolation(format!(
                        "fine-grained column ({i}, {j}) leaves the box envelope; \
                         boxes must rest on the lift base layer"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Labels and flows for a sequence `t ∈ [−n_past, n_future]`.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledSequence {
    pub cfg: VoxelConfig,
    pub lift: LiftOptions,
    pub n_past: usize,
    pub n_future: usize,
    /// One entry per frame in chronological order.
    pub frames: Vec<LabeledFrame>,
    /// Backward flow for `t ∈ [0, n_future]`.
    pub flows: Vec<FlowField>,
    /// Boxes per frame, in the frame the labels were generated in.
    pub boxes: Vec<Vec<Box3D>>,
}

impl LabeledSequence {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// Frame at time `t` (`t = 0` is the present).
    pub fn frame(&self, t: i64) -> Option<&LabeledFrame> {
        let idx = t + self.n_past as i64;
        if idx < 0 {
            return None;
        }
        self.frames.get(idx as usize)
    }

    pub fn boxes_at(&self, t: i64) -> Option<&[Box3D]> {
        let idx = t + self.n_past as i64;
        if idx < 0 {
            return None;
        }
        self.boxes.get(idx as usize).map(Vec::as_slice)
    }

    /// Frames `t ∈ [0, n_future]`.
    pub fn present_and_future(&self) -> &[LabeledFrame] {
        &self.frames[self.n_past..]
    }
}

/// Index range of cells whose centres might fall in `[lo, hi]` along one axis.
fn candidate_range(lo: f64, hi: f64, min: f64, res: f64, cells: usize) -> Option<(usize, usize)> {
    let a = ((lo - min) / res - 0.5).floor() - 1.0;
    let b = ((hi - min) / res - 0.5).ceil() + 1.0;
    let a = a.max(0.0);
    let b = b.min(cells as f64 - 1.0);
    if a > b || b < 0.0 {
        None
    } else {
        Some((a as usize, b as usize))
    }
}

/// Marks every voxel whose centre lies inside at least one box (faces inclusive).
pub fn rasterize_boxes_3d(boxes: &[Box3D], cfg: &VoxelConfig) -> Occupancy3D {
    let (h, w, l) = cfg.dims();
    let res = cfg.resolution();
    let mut occ = Occupancy3D::new((h, w, l));
    for b in boxes {
        let (lo, hi) = b.aabb();
        let (Some(ri), Some(rj), Some(rk)) = (
            candidate_range(lo[0], hi[0], cfg.x_min(), res, h),
            candidate_range(lo[1], hi[1], cfg.y_min(), res, w),
            candidate_range(lo[2], hi[2], cfg.z_min(), res, l),
        ) else {
            continue;
        };
        let layers: Vec<usize> = (rk.0..=rk.1)
            .filter(|&k| b.contains_z(cfg.layer_center(k)))
            .collect();
        if layers.is_empty() {
            continue;
        }
        for i in ri.0..=ri.1 {
            for j in rj.0..=rj.1 {
                let [x, y] = cfg.cell_center(i, j);
                if b.contains_xy(x, y) {
                    let col = occ.column_mut(i, j);
                    for &k in &layers {
                        col[k] = true;
                    }
                }
            }
        }
    }
    occ
}

/// Visits every BEV cell whose centre lies in the footprint of `b`.
fn for_each_footprint_cell(b: &Box3D, cfg: &VoxelConfig, mut f: impl FnMut(usize, usize)) {
    let (h, w, _) = cfg.dims();
    let res = cfg.resolution();
    let (lo, hi) = b.aabb();
    let (Some(ri), Some(rj)) = (
        candidate_range(lo[0], hi[0], cfg.x_min(), res, h),
        candidate_range(lo[1], hi[1], cfg.y_min(), res, w),
    ) else {
        return;
    };
    for i in ri.0..=ri.1 {
        for j in rj.0..=rj.1 {
            let [x, y] = cfg.cell_center(i, j);
            if b.contains_xy(x, y) {
                f(i, j);
            }
        }
    }
}

/// BEV footprint union of all boxes, ignoring z.
pub fn rasterize_footprints(boxes: &[Box3D], cfg: &VoxelConfig) -> BevOccupancy {
    let (h, w) = cfg.bev_dims();
    let mut bev = BevOccupancy::new(h, w);
    for b in boxes {
        for_each_footprint_cell(b, cfg, |i, j| bev.set(i, j, true));
    }
    bev
}

/// Instance id per BEV cell. Where footprints overlap the smaller id wins.
pub fn rasterize_instances_bev(boxes: &[Box3D], cfg: &VoxelConfig) -> InstanceMap {
    let (h, w) = cfg.bev_dims();
    let mut map = InstanceMap::new(h, w);
    for b in boxes {
        let id = b.instance_id;
        for_each_footprint_cell(b, cfg, |i, j| {
            let cell = map.get_mut(i, j);
            if *cell == 0 || id < *cell {
                *cell = id;
            }
        });
    }
    map
}

/// Logical OR along z.
pub fn compress_to_bev(occ: &Occupancy3D) -> BevOccupancy {
    let (h, w, _) = occ.dims();
    BevOccupancy::from_fn(h, w, |i, j| occ.column(i, j).iter().any(|&v| v))
}

/// Top face of the highest occupied voxel per column: `z_min + (k_max + 1)·res`.
pub fn extract_heights(occ: &Occupancy3D, cfg: &VoxelConfig) -> Result<HeightMap> {
    occ.ensure_dims(cfg.dims())?;
    let (h, w, _) = occ.dims();
    Ok(HeightMap::from_fn(h, w, |i, j| {
        occ.column(i, j)
            .iter()
            .rposition(|&v| v)
            .map(|k| (cfg.z_min() + (k + 1) as f64 * cfg.resolution()) as f32)
    }))
}

/// Layer index of the top voxel for a height, clamped to the lattice.
pub(crate) fn top_index(height: f64, cfg: &VoxelConfig) -> usize {
    let l = cfg.dims().2;
    if height.is_nan() {
        return 0;
    }
    let k = ((height - cfg.z_min()) / cfg.resolution()).round() - 1.0;
    k.clamp(0.0, (l - 1) as f64) as usize
}

fn fill_column(col: &mut [bool], base: usize, top: usize) {
    let start = base.min(top);
    col[start..=top].fill(true);
}

/// Lifts BEV occupancy with heights back to voxels, filling each occupied column from
/// the grid bottom up to its height.
pub fn build_fine_grained(
    bev: &BevOccupancy,
    heights: &HeightMap,
    cfg: &VoxelConfig,
) -> Result<Occupancy3D> {
    build_fine_grained_with(bev, heights, cfg, &LiftOptions::default())
}

/// [`build_fine_grained`] with an explicit fill base.
pub fn build_fine_grained_with(
    bev: &BevOccupancy,
    heights: &HeightMap,
    cfg: &VoxelConfig,
    lift: &LiftOptions,
) -> Result<Occupancy3D> {
    let (h, w, l) = cfg.dims();
    bev.ensure_dims((h, w))?;
    heights.ensure_dims((h, w))?;
    let mut occ = Occupancy3D::new((h, w, l));
    for i in 0..h {
        for j in 0..w {
            match (*bev.get(i, j), *heights.get(i, j)) {
                (true, Some(z)) => {
                    let top = top_index(z as f64, cfg);
                    fill_column(occ.column_mut(i, j), lift.base_index, top);
                }
                (false, None) => {}
                (true, None) => {
                    return Err(Error::InvariantViolation(format!(
                        "occupied cell ({i}, {j}) has no height"
                    )))
                }
                (false, Some(_)) => {
                    return Err(Error::InvariantViolation(format!(
                        "height defined at unoccupied cell ({i}, {j})"
                    )))
                }
            }
        }
    }
    Ok(occ)
}

/// Lifts with real-valued heights; heights at free cells are ignored and out-of-range
/// heights clamp to the lattice.
pub(crate) fn lift_with_scalar_heights(
    bev: &BevOccupancy,
    heights: &crate::grid::ScalarGrid,
    cfg: &VoxelConfig,
    lift: &LiftOptions,
) -> Result<Occupancy3D> {
    let (h, w, l) = cfg.dims();
    bev.ensure_dims((h, w))?;
    heights.ensure_dims((h, w))?;
    let mut occ = Occupancy3D::new((h, w, l));
    for ((i, j), &occupied) in bev.indexed() {
        if occupied {
            let top = top_index(*heights.get(i, j) as f64, cfg);
            fill_column(occ.column_mut(i, j), lift.base_index, top);
        }
    }
    Ok(occ)
}

/// Per-instance pixel centroid `(row, col)`.
pub fn instance_centroids(inst: &InstanceMap) -> HashMap<u32, (f64, f64)> {
    let mut acc: HashMap<u32, (f64, f64, usize)> = HashMap::new();
    for ((i, j), &id) in inst.indexed() {
        if id != 0 {
            let e = acc.entry(id).or_insert((0.0, 0.0, 0));
            e.0 += i as f64;
            e.1 += j as f64;
            e.2 += 1;
        }
    }
    acc.into_iter()
        .map(|(id, (r, c, n))| (id, (r / n as f64, c / n as f64)))
        .collect()
}

/// Backward centripetal flow: each instance pixel at `t` points to the centroid of the
/// same instance at `t − 1`. Background and unmatched instances get zero flow.
pub fn gt_backward_flow(inst_t: &InstanceMap, inst_prev: &InstanceMap) -> Result<FlowField> {
    inst_prev.ensure_dims(inst_t.dims())?;
    let centroids = instance_centroids(inst_prev);
    let (h, w) = inst_t.dims();
    Ok(FlowField::from_fn(h, w, |i, j| {
        let id = *inst_t.get(i, j);
        match centroids.get(&id) {
            Some(&(r, c)) if id != 0 => {
                FlowVector::new((r - i as f64) as f32, (c - j as f64) as f32)
            }
            _ => FlowVector::ZERO,
        }
    }))
}

/// Labels for one frame of boxes.
pub fn label_frame(boxes: &[Box3D], cfg: &VoxelConfig, lift: &LiftOptions) -> Result<LabeledFrame> {
    for b in boxes {
        b.validate()?;
    }
    let occ_bb = rasterize_boxes_3d(boxes, cfg);
    let occ_bev = compress_to_bev(&occ_bb);
    let heights = extract_heights(&occ_bb, cfg)?;
    let occ_fg = build_fine_grained_with(&occ_bev, &heights, cfg, lift)?;
    let instances = rasterize_instances_bev(boxes, cfg);
    Ok(LabeledFrame {
        occ_bb,
        occ_bev,
        heights,
        occ_fg,
        instances,
    })
}

/// Full label pipeline over `n_past + n_future + 1` frames of boxes.
pub fn generate_labels(
    boxes_per_frame: &[Vec<Box3D>],
    cfg: &VoxelConfig,
    n_past: usize,
    n_future: usize,
) -> Result<LabeledSequence> {
    generate_labels_with(
        boxes_per_frame,
        cfg,
        n_past,
        n_future,
        &LiftOptions::default(),
    )
}

pub fn generate_labels_with(
    boxes_per_frame: &[Vec<Box3D>],
    cfg: &VoxelConfig,
    n_past: usize,
    n_future: usize,
    lift: &LiftOptions,
) -> Result<LabeledSequence> {
    let n = n_past + n_future + 1;
    if boxes_per_frame.len() != n {
        return Err(Error::InvariantViolation(format!(
            "expected {n} frames of boxes (n_past={n_past}, n_future={n_future}), got {}",
            boxes_per_frame.len()
        )));
    }
    if lift.base_index >= cfg.dims().2 {
        return Err(Error::InvalidConfig(format!(
            "lift base index {} outside {} layers",
            lift.base_index,
            cfg.dims().2
        )));
    }
    let frames = boxes_per_frame
        .par_iter()
        .map(|boxes| {
            let f = label_frame(boxes, cfg, lift)?;
            f.validate()?;
            Ok(f)
        })
        .collect::<Result<Vec<_>>>()?;
    let flows = (n_past..n)
        .into_par_iter()
        .map(|idx| {
            if idx == 0 {
                let (h, w) = cfg.bev_dims();
                Ok(FlowField::new(h, w))
            } else {
                gt_backward_flow(&frames[idx].instances, &frames[idx - 1].instances)
            }
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(LabeledSequence {
        cfg: *cfg,
        lift: *lift,
        n_past,
        n_future,
        frames,
        flows,
        boxes: boxes_per_frame.to_vec(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::FRAC_PI_2;

    // Independent membership test: project the offset on the heading and lateral unit
    // vectors instead of rotating it.
    fn oracle_inside(b: &Box3D, p: [f64; 3]) -> bool {
        let heading = [b.yaw.cos(), b.yaw.sin()];
        let lateral = [-b.yaw.sin(), b.yaw.cos()];
        let d = [p[0] - b.center[0], p[1] - b.center[1], p[2] - b.center[2]];
        let u = d[0] * heading[0] + d[1] * heading[1];
        let v = d[0] * lateral[0] + d[1] * lateral[1];
        u.abs() <= b.size[0] / 2.0 + 1e-9
            && v.abs() <= b.size[1] / 2.0 + 1e-9
            && d[2].abs() <= b.size[2] / 2.0 + 1e-9
    }

    fn oracle_raster(boxes: &[Box3D], cfg: &VoxelConfig) -> Occupancy3D {
        Occupancy3D::from_fn(cfg.dims(), |i, j, k| {
            let c = cfg.index_to_center((i, j, k)).unwrap();
            boxes.iter().any(|b| oracle_inside(b, c))
        })
    }

    fn small_cfg() -> VoxelConfig {
        VoxelConfig::centered(32, 32, 8, 0.2, -0.8).unwrap()
    }

    fn random_box(rng: &mut ChaCha8Rng, id: u32) -> Box3D {
        Box3D::new(
            [
                rng.random_range(-3.5..3.5),
                rng.random_range(-3.5..3.5),
                rng.random_range(-0.8..0.8),
            ],
            [
                rng.random_range(0.1..2.5),
                rng.random_range(0.1..2.5),
                rng.random_range(0.1..1.5),
            ],
            rng.random_range(-3.2..3.2),
            id,
        )
        .unwrap()
    }

    #[test]
    fn empty_scene_rasterizes_to_nothing() {
        let cfg = small_cfg();
        assert_eq!(rasterize_boxes_3d(&[], &cfg).count(), 0);
        assert!(rasterize_instances_bev(&[], &cfg)
            .as_slice()
            .iter()
            .all(|&v| v == 0));
    }

    #[test]
    fn corner_aligned_box_covers_a_2x2x2_block() {
        // Faces on voxel faces: (−0.2, 0.2) in x/y and (0.0, 0.4) in z.
        let cfg = VoxelConfig::default();
        let b = Box3D::new([0.0, 0.0, 0.2], [0.4, 0.4, 0.4], 0.0, 1).unwrap();
        let occ = rasterize_boxes_3d(&[b], &cfg);
        assert_eq!(occ.count(), 8);
        for i in 255..=256 {
            for j in 255..=256 {
                for k in 25..=26 {
                    assert!(*occ.get(i, j, k));
                }
            }
        }
    }

    #[test]
    fn box_with_faces_on_voxel_centers_includes_them() {
        // Centre (0.1, 0.1, −4.7) with edge 0.4 puts every face on a row of voxel centres;
        // inclusive faces give three voxels per axis.
        let cfg = VoxelConfig::default();
        let b = Box3D::new([0.1, 0.1, -4.7], [0.4, 0.4, 0.4], 0.0, 1).unwrap();
        let occ = rasterize_boxes_3d(&[b], &cfg);
        let mut oracle = 0;
        for i in 250..262 {
            for j in 250..262 {
                for k in 0..6 {
                    if oracle_inside(&b, cfg.index_to_center((i, j, k)).unwrap()) {
                        oracle += 1;
                        assert!(*occ.get(i, j, k));
                    }
                }
            }
        }
        assert_eq!(oracle, 27);
        assert_eq!(occ.count(), 27);
    }

    #[test]
    fn quarter_turn_matches_swapped_extent() {
        let cfg = small_cfg();
        let a = Box3D::new([0.05, -0.13, 0.0], [2.3, 0.9, 0.7], 0.0, 1).unwrap();
        let b = Box3D::new([0.05, -0.13, 0.0], [0.9, 2.3, 0.7], FRAC_PI_2, 1).unwrap();
        let ca = rasterize_boxes_3d(&[a], &cfg).count();
        let cb = rasterize_boxes_3d(&[b], &cfg).count();
        assert!(ca > 0);
        assert_eq!(ca, cb);
        assert_eq!(oracle_raster(&[b], &cfg).count(), cb);
    }

    #[test]
    fn rasterization_matches_oracle_on_random_scenes() {
        let cfg = small_cfg();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..30 {
            let n = rng.random_range(0..=4);
            let boxes: Vec<_> = (1..=n).map(|id| random_box(&mut rng, id)).collect();
            assert_eq!(
                rasterize_boxes_3d(&boxes, &cfg),
                oracle_raster(&boxes, &cfg)
            );
        }
    }

    #[test]
    fn instance_overlap_prefers_smaller_id() {
        let cfg = small_cfg();
        let a = Box3D::new([0.0, 0.0, 0.0], [1.0, 1.0, 1.0], 0.0, 7).unwrap();
        let b = Box3D::new([0.4, 0.0, 0.0], [1.0, 1.0, 1.0], 0.3, 3).unwrap();
        for order in [[a, b], [b, a]] {
            let map = rasterize_instances_bev(&order, &cfg);
            let ij = cfg.world_to_cell(0.1, 0.1).unwrap();
            assert_eq!(*map.get(ij.0, ij.1), 3);
            for ((i, j), &id) in map.indexed() {
                let [x, y] = cfg.cell_center(i, j);
                let want = if b.contains_xy(x, y) {
                    3
                } else if a.contains_xy(x, y) {
                    7
                } else {
                    0
                };
                assert_eq!(id, want);
            }
        }
    }

    #[test]
    fn heights_use_top_face() {
        let cfg = VoxelConfig::default();
        let mut occ = Occupancy3D::new((512, 512, 40));
        for k in 0..8 {
            occ.set(3, 4, k, true);
        }
        occ.set(5, 5, 39, true);
        let hm = extract_heights(&occ, &cfg).unwrap();
        assert!((hm.get(3, 4).unwrap() as f64 - -3.4).abs() < 1e-6);
        assert!((hm.get(5, 5).unwrap() as f64 - 3.0).abs() < 1e-6);
        assert_eq!(*hm.get(0, 0), None);
    }

    #[test]
    fn fine_grained_fills_from_bottom() {
        let cfg = VoxelConfig::default();
        let mut bev = BevOccupancy::new(512, 512);
        let mut hm = HeightMap::new(512, 512);
        bev.set(10, 20, true);
        hm.set(10, 20, Some(-3.4));
        let occ = build_fine_grained(&bev, &hm, &cfg).unwrap();
        let col = occ.column(10, 20);
        assert!(col[..8].iter().all(|&v| v));
        assert!(col[8..].iter().all(|&v| !v));
        assert_eq!(occ.count(), 8);

        let empty = build_fine_grained(
            &BevOccupancy::new(512, 512),
            &HeightMap::new(512, 512),
            &cfg,
        )
        .unwrap();
        assert_eq!(empty.count(), 0);
    }

    #[test]
    fn fine_grained_rejects_unpaired_heights() {
        let cfg = small_cfg();
        let mut bev = BevOccupancy::new(32, 32);
        let mut hm = HeightMap::new(32, 32);
        bev.set(1, 1, true);
        assert!(matches!(
            build_fine_grained(&bev, &hm, &cfg),
            Err(Error::InvariantViolation(_))
        ));
        hm.set(1, 1, Some(0.0));
        hm.set(2, 2, Some(0.0));
        assert!(matches!(
            build_fine_grained(&bev, &hm, &cfg),
            Err(Error::InvariantViolation(_))
        ));
    }

    #[test]
    fn lift_base_index_shifts_column_start() {
        let cfg = small_cfg();
        let mut bev = BevOccupancy::new(32, 32);
        let mut hm = HeightMap::new(32, 32);
        bev.set(0, 0, true);
        hm.set(0, 0, Some(0.4));
        let occ = build_fine_grained_with(&bev, &hm, &cfg, &LiftOptions { base_index: 2 }).unwrap();
        assert_eq!(
            occ.column(0, 0),
            &[false, false, true, true, true, true, false, false]
        );
    }

    #[test]
    fn flow_points_to_previous_centroid() {
        let mut prev = InstanceMap::new(20, 20);
        for (i, j) in [(9, 10), (11, 10), (10, 9), (10, 11)] {
            prev.set(i, j, 4);
        }
        let mut cur = InstanceMap::new(20, 20);
        cur.set(12, 10, 4);
        cur.set(3, 3, 9);
        let f = gt_backward_flow(&cur, &prev).unwrap();
        assert_eq!(*f.get(12, 10), FlowVector::new(-2.0, 0.0));
        assert_eq!(*f.get(3, 3), FlowVector::ZERO);
        assert_eq!(*f.get(0, 0), FlowVector::ZERO);

        let mut single = InstanceMap::new(5, 5);
        single.set(2, 2, 1);
        assert_eq!(
            *gt_backward_flow(&single, &single).unwrap().get(2, 2),
            FlowVector::ZERO
        );
    }

    #[test]
    fn generate_labels_checks_frame_count() {
        let cfg = small_cfg();
        let r = generate_labels(&vec![vec![]; 6], &cfg, 2, 4);
        assert!(matches!(r, Err(Error::InvariantViolation(_))));
    }

    #[test]
    fn empty_sequence_is_all_zero() {
        let cfg = small_cfg();
        let seq = generate_labels(&vec![vec![]; 7], &cfg, 2, 4).unwrap();
        assert_eq!(seq.frames.len(), 7);
        assert_eq!(seq.flows.len(), 5);
        assert!(seq
            .frames
            .iter()
            .all(|f| f.occ_bb.count() == 0 && f.occ_fg.count() == 0));
        assert!(seq
            .flows
            .iter()
            .all(|f| f.as_slice().iter().all(|v| *v == FlowVector::ZERO)));
    }

    #[test]
    fn static_box_gives_identical_frames() {
        let cfg = small_cfg();
        // resting on the grid floor
        let b = Box3D::new([0.3, -0.5, -0.8 + 0.6], [2.0, 1.0, 1.2], 0.4, 1).unwrap();
        let seq = generate_labels(&vec![vec![b]; 7], &cfg, 2, 4).unwrap();
        assert!(seq.frames.windows(2).all(|w| w[0] == w[1]));
        assert!(seq.frames[0].occ_bb.count() > 0);
        // every pixel points at the unchanged centroid
        let (r, c) = instance_centroids(&seq.frames[0].instances)[&1];
        for f in &seq.flows {
            for ((i, j), v) in f.indexed() {
                if *seq.frames[0].instances.get(i, j) == 1 {
                    assert!((i as f64 + v.drow as f64 - r).abs() < 1e-5);
                    assert!((j as f64 + v.dcol as f64 - c).abs() < 1e-5);
                }
            }
        }
    }

    #[test]
    fn moving_box_flow_is_negated_displacement() {
        let cfg = small_cfg();
        // 0.4 m per frame along x is two rows.
        let frames: Vec<Vec<Box3D>> = (0..4)
            .map(|t| {
                vec![Box3D::new(
                    [-1.0 + 0.4 * t as f64, 0.0, -0.8 + 0.5],
                    [1.0, 0.6, 1.0],
                    0.0,
                    2,
                )
                .unwrap()]
            })
            .collect();
        let seq = generate_labels(&frames, &cfg, 1, 2).unwrap();
        for (t, flow) in seq.flows.iter().enumerate() {
            let inst = &seq.frames[t + 1].instances;
            for ((i, j), &id) in inst.indexed() {
                let v = flow.get(i, j);
                if id == 2 {
                    let centroid_now = instance_centroids(inst)[&2];
                    // displacement of the pixel relative to its own centroid is preserved
                    let want_r = centroid_now.0 - 2.0 - i as f64;
                    let want_c = centroid_now.1 - j as f64;
                    assert!((v.drow as f64 - want_r).abs() < 1e-5);
                    assert!((v.dcol as f64 - want_c).abs() < 1e-5);
                } else {
                    assert_eq!(*v, FlowVector::ZERO);
                }
            }
        }
    }

    #[test]
    fn floating_boxes_break_fine_grained_envelope() {
        let cfg = small_cfg();
        let b = Box3D::new([0.0, 0.0, 0.4], [1.0, 1.0, 0.4], 0.0, 1).unwrap();
        let r = generate_labels(&[vec![b]], &cfg, 0, 0);
        assert!(matches!(r, Err(Error::InvariantViolation(_))));
        let r = generate_labels_with(&[vec![b]], &cfg, 0, 0, &LiftOptions { base_index: 5 });
        assert!(r.is_ok());
    }

    fn bottom_filled(cfg: &VoxelConfig, seed: u64) -> Occupancy3D {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (h, w, l) = cfg.dims();
        let mut g = Occupancy3D::new((h, w, l));
        for i in 0..h {
            for j in 0..w {
                if rng.random_bool(0.3) {
                    let top = rng.random_range(0..l);
                    g.column_mut(i, j)[..=top].fill(true);
                }
            }
        }
        g
    }

    #[test]
    fn decoupling_round_trip_on_bottom_filled_grids() {
        let cfg = small_cfg();
        for seed in 0..20 {
            let g = bottom_filled(&cfg, seed);
            let rebuilt = build_fine_grained(
                &compress_to_bev(&g),
                &extract_heights(&g, &cfg).unwrap(),
                &cfg,
            )
            .unwrap();
            assert_eq!(rebuilt, g);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn compress_matches_column_scan(bits in proptest::collection::vec(any::<bool>(), 6 * 5 * 4)) {
            let g = Occupancy3D::from_vec((6, 5, 4), bits).unwrap();
            let bev = compress_to_bev(&g);
            for i in 0..6 {
                for j in 0..5 {
                    let mut any = false;
                    for k in 0..4 {
                        any |= *g.get(i, j, k);
                    }
                    prop_assert_eq!(*bev.get(i, j), any);
                }
            }
        }

        #[test]
        fn rasterization_commutes_with_z_collapse(
            cx in -2.0f64..2.0, cy in -2.0f64..2.0, l in 0.2f64..3.0, w in 0.2f64..3.0,
            yaw in -3.2f64..3.2
        ) {
            let cfg = small_cfg();
            // spans several layer centres inside the grid
            let b = Box3D::new([cx, cy, 0.0], [l, w, 1.0], yaw, 1).unwrap();
            let direct = rasterize_footprints(&[b], &cfg);
            prop_assert_eq!(compress_to_bev(&rasterize_boxes_3d(&[b], &cfg)), direct);
        }

        #[test]
        fn inflating_a_box_never_clears_voxels(
            cx in -2.0f64..2.0, cy in -2.0f64..2.0, l in 0.2f64..3.0, w in 0.2f64..3.0,
            hgt in 0.2f64..1.5, yaw in -3.2f64..3.2, grow in 0.0f64..1.0, axis in 0usize..3
        ) {
            let cfg = small_cfg();
            let b = Box3D::new([cx, cy, 0.0], [l, w, hgt], yaw, 1).unwrap();
            let mut bigger = b;
            bigger.size[axis] += grow;
            let small = rasterize_boxes_3d(&[b], &cfg);
            let large = rasterize_boxes_3d(&[bigger], &cfg);
            for (s, g) in small.as_slice().iter().zip(large.as_slice()) {
                prop_assert!(!s || *g);
            }
        }
    }
}
