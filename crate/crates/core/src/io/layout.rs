//! Directory layouts for label sequences, forecast bundles and refined outputs.
//!
//! ```text
//! labels/   manifest.json   frame_NN/{occ_bb,occ_fg,occ_bev,heights,instances}.sgrd
//!                           plus frame_NN/flow.sgrd from the present frame on
//! bundle/   bundle.json     center_prob.sgrd   frame_NN/{occ_prob,flow,heights}.sgrd
//! refined/  refined.json    frame_NN/{occ_2d,instances,occ_3d}.sgrd
//! ```
//!
//! Label frames are numbered from the first past frame; bundle and refined frames from
//! the present frame.

use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::grid_file::{read_grid, write_grid, GridCodec};
use super::FormatError;
use crate::error::{Error, Result};
use crate::grid::{Box3D, VoxelConfig};
use crate::labelgen::{LabeledFrame, LabeledSequence, LiftOptions};
use crate::refine::{ForecastBundle, ForecastFrame, RefinedSequence};

pub const LABELS_MANIFEST: &str = "manifest.json";
pub const BUNDLE_MANIFEST: &str = "bundle.json";
pub const REFINED_MANIFEST: &str = "refined.json";

pub fn frame_dir(root: &Path, index: usize) -> PathBuf {
    root.join(format!("frame_{index:02}"))
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

/// Pretty JSON with a trailing newline.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value).expect("value serializes");
    bytes.push(b'\n');
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_slice(&bytes).map_err(|e| {
        FormatError::MalformedJson {
            path: path.to_path_buf(),
            message: e.to_string(),
        }
        .into()
    })
}

fn put<G: GridCodec>(dir: &Path, name: &str, grid: &G, cfg: &VoxelConfig) -> Result<()> {
    write_grid(&dir.join(format!("{name}.sgrd")), grid, Some(cfg))
}

fn get<G: GridCodec>(dir: &Path, name: &str) -> Result<G> {
    Ok(read_grid(&dir.join(format!("{name}.sgrd")))?.0)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabelsManifest {
    pub cfg: VoxelConfig,
    #[serde(default)]
    pub lift: LiftOptions,
    pub n_past: usize,
    pub n_future: usize,
    pub boxes: Vec<Vec<Box3D>>,
}

pub fn write_labels(dir: &Path, seq: &LabeledSequence) -> Result<()> {
    create_dir(dir)?;
    write_json(
        &dir.join(LABELS_MANIFEST),
        &LabelsManifest {
            cfg: seq.cfg,
            lift: seq.lift,
            n_past: seq.n_past,
            n_future: seq.n_future,
            boxes: seq.boxes.clone(),
        },
    )?;
    for (f, frame) in seq.frames.iter().enumerate() {
        let d = frame_dir(dir, f);
        create_dir(&d)?;
        put(&d, "occ_bb", &frame.occ_bb, &seq.cfg)?;
        put(&d, "occ_fg", &frame.occ_fg, &seq.cfg)?;
        put(&d, "occ_bev", &frame.occ_bev, &seq.cfg)?;
        put(&d, "heights", &frame.heights, &seq.cfg)?;
        put(&d, "instances", &frame.instances, &seq.cfg)?;
        if let Some(flow) = f.checked_sub(seq.n_past).map(|t| &seq.flows[t]) {
            put(&d, "flow", flow, &seq.cfg)?;
        }
    }
    Ok(())
}

/// Reads a label directory and checks every grid against the manifest's lattice.
pub fn read_labels(dir: &Path) -> Result<LabeledSequence> {
    let m: LabelsManifest = read_json(&dir.join(LABELS_MANIFEST))?;
    let n = m.n_past + m.n_future + 1;
    if m.boxes.len() != n {
        return Err(Error::InvariantViolation(format!(
            "manifest lists boxes for {} frames, expected {n}",
            m.boxes.len()
        )));
    }
    let (h, w, l) = m.cfg.dims();
    let mut frames = Vec::with_capacity(n);
    let mut flows = Vec::with_capacity(n);
    for f in 0..n {
        let d = frame_dir(dir, f);
        let frame = LabeledFrame {
            occ_bb: get(&d, "occ_bb")?,
            occ_fg: get(&d, "occ_fg")?,
            occ_bev: get(&d, "occ_bev")?,
            heights: get(&d, "heights")?,
            instances: get(&d, "instances")?,
        };
        frame.occ_bb.ensure_dims((h, w, l))?;
        frame.occ_fg.ensure_dims((h, w, l))?;
        frame.occ_bev.ensure_dims((h, w))?;
        frame.heights.ensure_dims((h, w))?;
        frame.instances.ensure_dims((h, w))?;
        if f >= m.n_past {
            let flow: crate::grid::FlowField = get(&d, "flow")?;
            flow.ensure_dims((h, w))?;
            flows.push(flow);
        }
        frames.push(frame);
    }
    Ok(LabeledSequence {
        cfg: m.cfg,
        lift: m.lift,
        n_past: m.n_past,
        n_future: m.n_future,
        frames,
        flows,
        boxes: m.boxes,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SequenceManifest {
    pub n_frames: usize,
    pub voxel_config: Option<VoxelConfig>,
}

pub fn write_bundle(
    dir: &Path,
    bundle: &ForecastBundle,
    center_prob: &crate::grid::ScalarGrid,
    cfg: &VoxelConfig,
) -> Result<()> {
    create_dir(dir)?;
    write_json(
        &dir.join(BUNDLE_MANIFEST),
        &SequenceManifest {
            n_frames: bundle.frames.len(),
            voxel_config: Some(*cfg),
        },
    )?;
    put(dir, "center_prob", center_prob, cfg)?;
    for (t, f) in bundle.frames.iter().enumerate() {
        let d = frame_dir(dir, t);
        create_dir(&d)?;
        put(&d, "occ_prob", &f.occ_prob, cfg)?;
        put(&d, "flow", &f.flow, cfg)?;
        put(&d, "heights", &f.heights, cfg)?;
    }
    Ok(())
}

/// A forecast bundle, its `t = −1` centre heatmap and the lattice recorded with it.
pub fn read_bundle(
    dir: &Path,
) -> Result<(ForecastBundle, crate::grid::ScalarGrid, Option<VoxelConfig>)> {
    let m: SequenceManifest = read_json(&dir.join(BUNDLE_MANIFEST))?;
    let center: crate::grid::ScalarGrid = get(dir, "center_prob")?;
    let frames = (0..m.n_frames)
        .map(|t| {
            let d = frame_dir(dir, t);
            Ok(ForecastFrame {
                occ_prob: get(&d, "occ_prob")?,
                flow: get(&d, "flow")?,
                heights: get(&d, "heights")?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((ForecastBundle { frames }, center, m.voxel_config))
}

pub fn write_refined(dir: &Path, seq: &RefinedSequence, cfg: &VoxelConfig) -> Result<()> {
    create_dir(dir)?;
    write_json(
        &dir.join(REFINED_MANIFEST),
        &SequenceManifest {
            n_frames: seq.occ_3d.len(),
            voxel_config: Some(*cfg),
        },
    )?;
    for (t, ((o2, m), o3)) in seq
        .occ_2d
        .iter()
        .zip(&seq.instances)
        .zip(&seq.occ_3d)
        .enumerate()
    {
        let d = frame_dir(dir, t);
        create_dir(&d)?;
        put(&d, "occ_2d", o2, cfg)?;
        put(&d, "instances", m, cfg)?;
        put(&d, "occ_3d", o3, cfg)?;
    }
    Ok(())
}

pub fn read_refined(dir: &Path) -> Result<(RefinedSequence, Option<VoxelConfig>)> {
    let m: SequenceManifest = read_json(&dir.join(REFINED_MANIFEST))?;
    let mut seq = RefinedSequence {
        occ_2d: Vec::with_capacity(m.n_frames),
        instances: Vec::with_capacity(m.n_frames),
        occ_3d: Vec::with_capacity(m.n_frames),
    };
    for t in 0..m.n_frames {
        let d = frame_dir(dir, t);
        seq.occ_2d.push(get(&d, "occ_2d")?);
        seq.instances.push(get(&d, "instances")?);
        seq.occ_3d.push(get(&d, "occ_3d")?);
    }
    Ok((seq, m.voxel_config))
}
