//! Kinematic scene simulator and corruption of labels into pseudo network outputs.
//!
//! Actors move with constant velocity and yaw rate from their state at the first frame
//! (`t = −n_past`). Boxes are expressed in present-frame (`t = 0`) coordinates and rest on
//! the grid floor; the per-frame ego pose maps frame-`t` ego coordinates into the present
//! frame. All randomness comes from a ChaCha8 stream seeded with the spec's seed and
//! consumed frame by frame, row-major within a frame.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Box3D, FlowField, FlowVector, Pose2D, ScalarGrid, VoxelConfig};
use crate::labelgen::{generate_labels, instance_centroids, LabeledSequence};
use crate::refine::{ForecastBundle, ForecastFrame};

/// Height assigned to cells without a labelled height (metres above the grid floor).
pub const DEFAULT_HEIGHT_ABOVE_FLOOR: f64 = 1.6;

/// Occupancy pseudo-probabilities for free and occupied cells.
pub const PROB_FREE: f32 = 0.1;
pub const PROB_OCCUPIED: f32 = 0.9;

/// Width of the centre heatmap peaks in cells.
pub const CENTER_SIGMA: f64 = 2.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ActorSpec {
    /// Box at the first frame.
    pub initial: Box3D,
    /// m/s in the present frame.
    pub velocity: [f64; 2],
    /// rad/s.
    pub yaw_rate: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub actors: Vec<ActorSpec>,
    #[serde(default)]
    pub ego_velocity: [f64; 2],
    pub frame_dt: f64,
    pub n_past: usize,
    pub n_future: usize,
    pub cfg: VoxelConfig,
    #[serde(default)]
    pub seed: u64,
}

impl SceneSpec {
    pub fn n_frames(&self) -> usize {
        self.n_past + self.n_future + 1
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.frame_dt > 0.0 && self.frame_dt.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "frame_dt must be positive, got {}",
                self.frame_dt
            )));
        }
        if !self.ego_velocity.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidConfig("ego velocity must be finite".into()));
        }
        for a in &self.actors {
            a.initial.validate()?;
            if !(a.velocity.iter().all(|v| v.is_finite()) && a.yaw_rate.is_finite()) {
                return Err(Error::InvalidConfig(format!(
                    "actor {} has non-finite kinematics",
                    a.initial.instance_id
                )));
            }
        }
        Ok(())
    }
}

/// Simulated boxes and ego poses, indexed by frame `0..N` (`t = index − n_past`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub n_past: usize,
    pub n_future: usize,
    pub boxes: Vec<Vec<Box3D>>,
    pub poses: Vec<Pose2D>,
}

pub fn generate_scene(spec: &SceneSpec) -> Result<Scene> {
    spec.validate()?;
    let n = spec.n_frames();
    let mut boxes = Vec::with_capacity(n);
    let mut poses = Vec::with_capacity(n);
    for f in 0..n {
        let elapsed = f as f64 * spec.frame_dt;
        let t = f as f64 - spec.n_past as f64;
        boxes.push(spec.actors.iter().map(|a| actor_at(a, elapsed)).collect());
        poses.push(Pose2D::new(
            spec.ego_velocity[0] * t * spec.frame_dt,
            spec.ego_velocity[1] * t * spec.frame_dt,
            0.0,
        ));
    }
    Ok(Scene {
        n_past: spec.n_past,
        n_future: spec.n_future,
        boxes,
        poses,
    })
}

fn actor_at(a: &ActorSpec, elapsed: f64) -> Box3D {
    let mut b = a.initial;
    b.center[0] += a.velocity[0] * elapsed;
    b.center[1] += a.velocity[1] * elapsed;
    b.yaw += a.yaw_rate * elapsed;
    b
}

/// A random scene of up to four separated actors that stay inside the grid.
pub fn random_scene(seed: u64, cfg: &VoxelConfig, n_past: usize, n_future: usize) -> SceneSpec {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let frame_dt = 0.5;
    let horizon = (n_past + n_future) as f64 * frame_dt;
    let extent = (cfg.x_max() - cfg.x_min()).min(cfg.y_max() - cfg.y_min());
    let z_extent = cfg.z_max() - cfg.z_min();
    // keep the total path within a quarter of the grid
    let max_speed = if horizon > 0.0 {
        0.25 * extent / horizon
    } else {
        0.0
    };
    let gap = 8.0 * cfg.resolution();
    let wanted = rng.random_range(2..=4usize);

    let mut actors: Vec<ActorSpec> = Vec::new();
    let mut paths: Vec<Vec<([f64; 3], [f64; 3])>> = Vec::new();
    for _ in 0..200 {
        if actors.len() == wanted {
            break;
        }
        let length = rng.random_range(0.12..0.2) * extent;
        let width = rng.random_range(0.06..0.1) * extent;
        let height = rng.random_range(0.3..0.8) * z_extent;
        let speed = rng.random_range(0.0..=max_speed);
        let heading = rng.random_range(-std::f64::consts::PI..std::f64::consts::PI);
        let yaw = heading + rng.random_range(-0.3..0.3);
        let yaw_rate = rng.random_range(-0.1..0.1);
        let x = rng.random_range(cfg.x_min()..cfg.x_max());
        let y = rng.random_range(cfg.y_min()..cfg.y_max());
        let id = actors.len() as u32 + 1;
        let Ok(initial) = Box3D::new(
            [x, y, cfg.z_min() + 0.5 * height],
            [length, width, height],
            yaw,
            id,
        ) else {
            continue;
        };
        let actor = ActorSpec {
            initial,
            velocity: [speed * heading.cos(), speed * heading.sin()],
            yaw_rate,
        };
        let path: Vec<_> = (0..=n_past + n_future)
            .map(|f| actor_at(&actor, f as f64 * frame_dt).aabb())
            .collect();
        let inside = path.iter().all(|(lo, hi)| {
            lo[0] >= cfg.x_min() + gap
                && lo[1] >= cfg.y_min() + gap
                && hi[0] <= cfg.x_max() - gap
                && hi[1] <= cfg.y_max() - gap
        });
        let separated = paths.iter().all(|other| {
            other.iter().zip(&path).all(|((alo, ahi), (blo, bhi))| {
                alo[0] > bhi[0] + gap
                    || blo[0] > ahi[0] + gap
                    || alo[1] > bhi[1] + gap
                    || blo[1] > ahi[1] + gap
            })
        });
        if inside && separated {
            actors.push(actor);
            paths.push(path);
        }
    }
    SceneSpec {
        actors,
        ego_velocity: [0.0, 0.0],
        frame_dt,
        n_past,
        n_future,
        cfg: *cfg,
        seed,
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CorruptionSpec {
    pub occ_flip_rate: f64,
    /// Cells.
    pub flow_noise_sigma: f64,
    /// Metres.
    pub height_noise_sigma: f64,
    pub spurious_blob_count: usize,
    pub seed: u64,
}

impl CorruptionSpec {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.occ_flip_rate) {
            return Err(Error::InvalidConfig(format!(
                "flip rate {} outside [0, 1]",
                self.occ_flip_rate
            )));
        }
        for (name, s) in [
            ("flow", self.flow_noise_sigma),
            ("height", self.height_noise_sigma),
        ] {
            if !(s >= 0.0 && s.is_finite()) {
                return Err(Error::InvalidConfig(format!(
                    "{name} noise sigma {s} invalid"
                )));
            }
        }
        Ok(())
    }
}

/// Pseudo network outputs derived from labels.
#[derive(Clone, Debug, PartialEq)]
pub struct CorruptedOutputs {
    /// Forecasts for `t = 0..=n_future`.
    pub bundle: ForecastBundle,
    /// Centre heatmap at `t = −1`.
    pub seg_prob_prev: ScalarGrid,
}

/// Turns labels into forecasts with flips, Gaussian noise and spurious 3×3 blobs.
///
/// Blobs are placed where the blob and its one-cell ring are free in both the target frame
/// and the frame before it; a blob that cannot be placed after 1000 tries is dropped.
pub fn corrupt_predictions(gt: &LabeledSequence, c: &CorruptionSpec) -> Result<CorruptedOutputs> {
    c.validate()?;
    if gt.n_past == 0 {
        return Err(Error::InvalidConfig(
            "corruption needs a past frame for the centre heatmap".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(c.seed);
    let default_height = (gt.cfg.z_min() + DEFAULT_HEIGHT_ABOVE_FLOOR) as f32;
    let mut frames = Vec::with_capacity(gt.n_future + 1);
    for t in 0..=gt.n_future {
        let idx = gt.n_past + t;
        let lab = &gt.frames[idx];
        let (h, w) = lab.occ_bev.dims();
        let occ_prob = ScalarGrid::from_fn(h, w, |i, j| {
            let flip = rng.random::<f64>() < c.occ_flip_rate;
            if *lab.occ_bev.get(i, j) != flip {
                PROB_OCCUPIED
            } else {
                PROB_FREE
            }
        });
        let flow = FlowField::from_fn(h, w, |i, j| {
            let v = gt.flows[t].get(i, j);
            let nr: f64 = rng.sample(StandardNormal);
            let nc: f64 = rng.sample(StandardNormal);
            FlowVector::new(
                v.drow + (nr * c.flow_noise_sigma) as f32,
                v.dcol + (nc * c.flow_noise_sigma) as f32,
            )
        });
        let heights = ScalarGrid::from_fn(h, w, |i, j| {
            let n: f64 = rng.sample(StandardNormal);
            lab.heights.get(i, j).unwrap_or(default_height) + (n * c.height_noise_sigma) as f32
        });
        frames.push(ForecastFrame {
            occ_prob,
            flow,
            heights,
        });
    }

    for _ in 0..c.spurious_blob_count {
        let t = rng.random_range(0..=gt.n_future);
        let idx = gt.n_past + t;
        let frame = &mut frames[t];
        let (h, w) = frame.occ_prob.dims();
        if h < 5 || w < 5 {
            break;
        }
        for _ in 0..1000 {
            let ci = rng.random_range(2..h - 2);
            let cj = rng.random_range(2..w - 2);
            let free = |occ: &crate::grid::BevOccupancy| {
                (ci - 2..=ci + 2).all(|i| (cj - 2..=cj + 2).all(|j| !*occ.get(i, j)))
            };
            let clear = free(&gt.frames[idx].occ_bev)
                && free(&gt.frames[idx - 1].occ_bev)
                && (ci - 1..=ci + 1)
                    .all(|i| (cj - 1..=cj + 1).all(|j| *frame.occ_prob.get(i, j) < 0.5));
            if clear {
                for i in ci - 1..=ci + 1 {
                    for j in cj - 1..=cj + 1 {
                        frame.occ_prob.set(i, j, PROB_OCCUPIED);
                    }
                }
                break;
            }
        }
    }

    Ok(CorruptedOutputs {
        bundle: ForecastBundle { frames },
        seg_prob_prev: center_heatmap(&gt.frames[gt.n_past - 1].instances),
    })
}

/// `0.9·exp(−d²/2σ²)` around each instance centroid, maximum over instances.
pub fn center_heatmap(instances: &crate::grid::InstanceMap) -> ScalarGrid {
    let mut centroids: Vec<(u32, (f64, f64))> = instance_centroids(instances).into_iter().collect();
    centroids.sort_by_key(|&(id, _)| id);
    let (h, w) = instances.dims();
    let two_s2 = 2.0 * CENTER_SIGMA * CENTER_SIGMA;
    ScalarGrid::from_fn(h, w, |i, j| {
        centroids
            .iter()
            .map(|&(_, (r, c))| {
                let d2 = (i as f64 - r).powi(2) + (j as f64 - c).powi(2);
                (PROB_OCCUPIED as f64 * (-d2 / two_s2).exp()) as f32
            })
            .fold(0.0f32, f32::max)
    })
}

/// Scene, labels and corrupted forecasts in one call.
#[derive(Clone, Debug)]
pub struct Simulation {
    pub scene: Scene,
    pub labels: LabeledSequence,
    pub outputs: CorruptedOutputs,
}

pub fn simulate(spec: &SceneSpec, corruption: &CorruptionSpec) -> Result<Simulation> {
    let scene = generate_scene(spec)?;
    let labels = generate_labels(&scene.boxes, &spec.cfg, spec.n_past, spec.n_future)?;
    let outputs = corrupt_predictions(&labels, corruption)?;
    Ok(Simulation {
        scene,
        labels,
        outputs,
    })
}
