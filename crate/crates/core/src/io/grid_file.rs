//! `SGRD` binary grid container.
//!
//! ```text
//! offset 0   4 bytes  magic "SGRD"
//! offset 4   u32 LE   version (1)
//! offset 8   u32 LE   header_len
//! offset 12  header_len bytes of UTF-8 JSON:
//!            {"dtype": "u8"|"u32"|"f32", "shape": [..], "axes": [..], "voxel_config": {..}|null}
//! then       product(shape) × sizeof(dtype) bytes, little-endian, row-major in header axis order
//! ```

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::FormatError;
use crate::error::{Error, Result};
use crate::grid::{
    BevOccupancy, FlowField, FlowVector, Grid2, Grid3, HeightMap, InstanceMap, InstanceVolume,
    Occupancy3D, ScalarGrid, VoxelConfig,
};

pub const MAGIC: [u8; 4] = *b"SGRD";
pub const VERSION: u32 = 1;
const PREAMBLE: usize = 12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dtype {
    U8,
    U32,
    F32,
}

impl Dtype {
    pub fn size(self) -> usize {
        match self {
            Dtype::U8 => 1,
            Dtype::U32 | Dtype::F32 => 4,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Dtype::U8 => "u8",
            Dtype::U32 => "u32",
            Dtype::F32 => "f32",
        }
    }

    fn parse(s: &str) -> std::result::Result<Self, FormatError> {
        match s {
            "u8" => Ok(Dtype::U8),
            "u32" => Ok(Dtype::U32),
            "f32" => Ok(Dtype::F32),
            other => Err(FormatError::UnknownDtype(other.to_string())),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GridHeader {
    pub dtype: Dtype,
    pub shape: Vec<usize>,
    pub axes: Vec<String>,
    pub voxel_config: Option<VoxelConfig>,
}

#[derive(Deserialize)]
struct RawHeader {
    dtype: String,
    shape: Vec<usize>,
    axes: Vec<String>,
    voxel_config: Option<VoxelConfig>,
}

impl GridHeader {
    pub fn element_count(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn payload_len(&self) -> usize {
        self.element_count() * self.dtype.size()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum GridData {
    U8(Vec<u8>),
    U32(Vec<u32>),
    F32(Vec<f32>),
}

impl GridData {
    pub fn dtype(&self) -> Dtype {
        match self {
            GridData::U8(_) => Dtype::U8,
            GridData::U32(_) => Dtype::U32,
            GridData::F32(_) => Dtype::F32,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            GridData::U8(v) => v.len(),
            GridData::U32(v) => v.len(),
            GridData::F32(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// A decoded grid file: header plus typed payload.
#[derive(Clone, Debug, PartialEq)]
pub struct GridFile {
    pub header: GridHeader,
    pub data: GridData,
}

impl GridFile {
    pub fn new(shape: Vec<usize>, axes: &[&str], data: GridData) -> Result<Self> {
        let header = GridHeader {
            dtype: data.dtype(),
            shape,
            axes: axes.iter().map(|s| s.to_string()).collect(),
            voxel_config: None,
        };
        if header.axes.len() != header.shape.len() {
            return Err(Error::InvalidConfig(format!(
                "{} axes for a rank-{} shape",
                header.axes.len(),
                header.shape.len()
            )));
        }
        if header.element_count() != data.len() {
            return Err(Error::DimensionMismatch {
                expected: header.shape.clone(),
                actual: vec![data.len()],
            });
        }
        Ok(Self { header, data })
    }

    pub fn with_voxel_config(mut self, cfg: Option<&VoxelConfig>) -> Self {
        self.header.voxel_config = cfg.copied();
        self
    }

    pub fn encode(&self) -> Vec<u8> {
        let header = serde_json::to_vec(&self.header).expect("header serializes");
        let mut out = Vec::with_capacity(PREAMBLE + header.len() + self.header.payload_len());
        out.extend_from_slice(&MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(header.len() as u32).to_le_bytes());
        out.extend_from_slice(&header);
        match &self.data {
            GridData::U8(v) => out.extend_from_slice(v),
            GridData::U32(v) => v
                .iter()
                .for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
            GridData::F32(v) => v
                .iter()
                .for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> std::result::Result<Self, FormatError> {
        if bytes.len() < PREAMBLE {
            return Err(FormatError::Truncated {
                needed: PREAMBLE,
                available: bytes.len(),
            });
        }
        let magic: [u8; 4] = bytes[0..4].try_into().unwrap();
        if magic != MAGIC {
            return Err(FormatError::BadMagic(magic));
        }
        let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
        if version != VERSION {
            return Err(FormatError::UnsupportedVersion(version));
        }
        let header_len = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
        let body = &bytes[PREAMBLE..];
        if body.len() < header_len {
            return Err(FormatError::Truncated {
                needed: PREAMBLE + header_len,
                available: bytes.len(),
            });
        }
        let raw: RawHeader = serde_json::from_slice(&body[..header_len])
            .map_err(|e| FormatError::MalformedHeader(e.to_string()))?;
        let header = GridHeader {
            dtype: Dtype::parse(&raw.dtype)?,
            shape: raw.shape,
            axes: raw.axes,
            voxel_config: raw.voxel_config,
        };
        if header.axes.len() != header.shape.len() {
            return Err(FormatError::MalformedHeader(format!(
                "{} axes for a rank-{} shape",
                header.axes.len(),
                header.shape.len()
            )));
        }
        let payload = &body[header_len..];
        let expected = header
            .shape
            .iter()
            .try_fold(header.dtype.size(), |acc, &d| acc.checked_mul(d))
            .ok_or_else(|| FormatError::MalformedHeader("shape overflows".into()))?;
        if payload.len() != expected {
            return Err(FormatError::LengthMismatch {
                expected,
                actual: payload.len(),
            });
        }
        let data = match header.dtype {
            Dtype::U8 => GridData::U8(payload.to_vec()),
            Dtype::U32 => GridData::U32(
                payload
                    .chunks_exact(4)
                    .map(|c| u32::from_le_bytes(c.try_into().unwrap()))
                    .collect(),
            ),
            Dtype::F32 => GridData::F32(
                payload
                    .chunks_exact(4)
                    .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                    .collect(),
            ),
        };
        Ok(Self { header, data })
    }
}

pub fn write_grid_file(path: &Path, file: &GridFile) -> Result<()> {
    fs::write(path, file.encode()).map_err(|e| Error::io(path, e))
}

pub fn read_grid_file(path: &Path) -> Result<GridFile> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(GridFile::decode(&bytes)?)
}

/// Grid types with a fixed on-disk representation.
pub trait GridCodec: Sized {
    fn to_grid_file(&self) -> GridFile;
    fn from_grid_file(file: &GridFile) -> std::result::Result<Self, FormatError>;
}

/// Writes `grid`, recording `cfg` in the header.
pub fn write_grid<G: GridCodec>(path: &Path, grid: &G, cfg: Option<&VoxelConfig>) -> Result<()> {
    write_grid_file(path, &grid.to_grid_file().with_voxel_config(cfg))
}

/// Reads a typed grid and the voxel config stored with it.
pub fn read_grid<G: GridCodec>(path: &Path) -> Result<(G, Option<VoxelConfig>)> {
    let file = read_grid_file(path)?;
    let grid = G::from_grid_file(&file)?;
    Ok((grid, file.header.voxel_config))
}

fn expect_layout(
    file: &GridFile,
    dtype: Dtype,
    axes: &[&str],
) -> std::result::Result<(), FormatError> {
    if file.header.dtype != dtype || file.header.axes != axes {
        return Err(FormatError::UnexpectedLayout {
            expected: format!("{} {:?}", dtype.name(), axes),
            actual: format!("{} {:?}", file.header.dtype.name(), file.header.axes),
        });
    }
    Ok(())
}

fn bools(v: &[u8]) -> std::result::Result<Vec<bool>, FormatError> {
    v.iter()
        .map(|&b| match b {
            0 => Ok(false),
            1 => Ok(true),
            other => Err(FormatError::InvalidValue(format!("occupancy byte {other}"))),
        })
        .collect()
}

fn grid2<T>(file: &GridFile, data: Vec<T>) -> Grid2<T> {
    let s = &file.header.shape;
    Grid2::from_vec(s[0], s[1], data).expect("payload length checked on decode")
}

fn grid3<T>(file: &GridFile, data: Vec<T>) -> Grid3<T> {
    let s = &file.header.shape;
    Grid3::from_vec((s[0], s[1], s[2]), data).expect("payload length checked on decode")
}

const HW: &[&str] = &["h", "w"];
const HWL: &[&str] = &["h", "w", "l"];
const CHW: &[&str] = &["c", "h", "w"];

macro_rules! payload {
    ($file:expr, $variant:ident) => {
        match &$file.data {
            GridData::$variant(v) => v,
            _ => unreachable!("dtype checked against layout"),
        }
    };
}

impl GridCodec for Occupancy3D {
    fn to_grid_file(&self) -> GridFile {
        let (h, w, l) = self.dims();
        let data = self.as_slice().iter().map(|&b| b as u8).collect();
        GridFile::new(vec![h, w, l], HWL, GridData::U8(data)).unwrap()
    }

    fn from_grid_file(file: &GridFile) -> std::result::Result<Self, FormatError> {
        expect_layout(file, Dtype::U8, HWL)?;
        Ok(grid3(file, bools(payload!(file, U8))?))
    }
}

impl GridCodec for BevOccupancy {
    fn to_grid_file(&self) -> GridFile {
        let data = self.as_slice().iter().map(|&b| b as u8).collect();
        GridFile::new(vec![self.rows(), self.cols()], HW, GridData::U8(data)).unwrap()
    }

    fn from_grid_file(file: &GridFile) -> std::result::Result<Self, FormatError> {
        expect_layout(file, Dtype::U8, HW)?;
        Ok(grid2(file, bools(payload!(file, U8))?))
    }
}

impl GridCodec for InstanceMap {
    fn to_grid_file(&self) -> GridFile {
        let data = self.as_slice().to_vec();
        GridFile::new(vec![self.rows(), self.cols()], HW, GridData::U32(data)).unwrap()
    }

    fn from_grid_file(file: &GridFile) -> std::result::Result<Self, FormatError> {
        expect_layout(file, Dtype::U32, HW)?;
        Ok(grid2(file, payload!(file, U32).clone()))
    }
}

impl GridCodec for InstanceVolume {
    fn to_grid_file(&self) -> GridFile {
        let (h, w, l) = self.dims();
        GridFile::new(vec![h, w, l], HWL, GridData::U32(self.as_slice().to_vec())).unwrap()
    }

    fn from_grid_file(file: &GridFile) -> std::result::Result<Self, FormatError> {
        expect_layout(file, Dtype::U32, HWL)?;
        Ok(grid3(file, payload!(file, U32).clone()))
    }
}

impl GridCodec for ScalarGrid {
    fn to_grid_file(&self) -> GridFile {
        let data = self.as_slice().to_vec();
        GridFile::new(vec![self.rows(), self.cols()], HW, GridData::F32(data)).unwrap()
    }

    fn from_grid_file(file: &GridFile) -> std::result::Result<Self, FormatError> {
        expect_layout(file, Dtype::F32, HW)?;
        Ok(grid2(file, payload!(file, F32).clone()))
    }
}

/// Empty columns are stored as NaN.
impl GridCodec for HeightMap {
    fn to_grid_file(&self) -> GridFile {
        let data = self
            .as_slice()
            .iter()
            .map(|h| h.unwrap_or(f32::NAN))
            .collect();
        GridFile::new(vec![self.rows(), self.cols()], HW, GridData::F32(data)).unwrap()
    }

    fn from_grid_file(file: &GridFile) -> std::result::Result<Self, FormatError> {
        expect_layout(file, Dtype::F32, HW)?;
        let data = payload!(file, F32)
            .iter()
            .map(|&h| (!h.is_nan()).then_some(h))
            .collect();
        Ok(grid2(file, data))
    }
}

/// Channel-first `[2, H, W]`: row displacements, then column displacements.
impl GridCodec for FlowField {
    fn to_grid_file(&self) -> GridFile {
        let n = self.len();
        let mut data = Vec::with_capacity(2 * n);
        data.extend(self.as_slice().iter().map(|v| v.drow));
        data.extend(self.as_slice().iter().map(|v| v.dcol));
        GridFile::new(vec![2, self.rows(), self.cols()], CHW, GridData::F32(data)).unwrap()
    }

    fn from_grid_file(file: &GridFile) -> std::result::Result<Self, FormatError> {
        expect_layout(file, Dtype::F32, CHW)?;
        let s = &file.header.shape;
        if s[0] != 2 {
            return Err(FormatError::UnexpectedLayout {
                expected: "2 flow channels".into(),
                actual: format!("{} channels", s[0]),
            });
        }
        let v = payload!(file, F32);
        let n = s[1] * s[2];
        let data = (0..n).map(|k| FlowVector::new(v[k], v[n + k])).collect();
        Ok(FlowField::from_vec(s[1], s[2], data).expect("payload length checked on decode"))
    }
}
