use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Faces are inclusive up to this slack (metres), so points on a face count as inside
/// regardless of rounding in the rotation.
const FACE_SLACK: f64 = 1e-9;

/// Wraps an angle into `(−π, π]`.
pub fn normalize_angle(a: f64) -> f64 {
    let mut r = a.rem_euclid(2.0 * PI);
    if r > PI {
        r -= 2.0 * PI;
    }
    if r == -PI {
        r = PI;
    }
    r
}

/// Planar rigid transform taking a frame's coordinates into the present frame:
/// `p_present = R(yaw)·p + (tx, ty)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Pose2D {
    pub tx: f64,
    pub ty: f64,
    pub yaw: f64,
}

impl Default for Pose2D {
    fn default() -> Self {
        Self::identity()
    }
}

impl Pose2D {
    pub fn new(tx: f64, ty: f64, yaw: f64) -> Self {
        Self {
            tx,
            ty,
            yaw: normalize_angle(yaw),
        }
    }

    pub fn identity() -> Self {
        Self {
            tx: 0.0,
            ty: 0.0,
            yaw: 0.0,
        }
    }

    pub fn is_identity(&self) -> bool {
        self.tx == 0.0 && self.ty == 0.0 && self.yaw == 0.0
    }

    pub fn apply(&self, x: f64, y: f64) -> (f64, f64) {
        let (s, c) = self.yaw.sin_cos();
        (c * x - s * y + self.tx, s * x + c * y + self.ty)
    }

    pub fn apply_inverse(&self, x: f64, y: f64) -> (f64, f64) {
        let (s, c) = self.yaw.sin_cos();
        let (dx, dy) = (x - self.tx, y - self.ty);
        (c * dx + s * dy, -s * dx + c * dy)
    }

    pub fn inverse(&self) -> Self {
        let (s, c) = self.yaw.sin_cos();
        Self::new(
            -(c * self.tx + s * self.ty),
            s * self.tx - c * self.ty,
            -self.yaw,
        )
    }
}

/// Oriented movable-object box. `size` is `(length, width, height)`; length runs along
/// the heading given by `yaw` about +z.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Box3D {
    pub center: [f64; 3],
    pub size: [f64; 3],
    pub yaw: f64,
    pub instance_id: u32,
}

impl Box3D {
    pub fn new(center: [f64; 3], size: [f64; 3], yaw: f64, instance_id: u32) -> Result<Self> {
        let b = Self {
            center,
            size,
            yaw,
            instance_id,
        };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<()> {
        if self.size.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return Err(Error::InvariantViolation(format!(
                "box {} has non-positive size {:?}",
                self.instance_id, self.size
            )));
        }
        if self.center.iter().any(|c| !c.is_finite()) || !self.yaw.is_finite() {
            return Err(Error::InvariantViolation(format!(
                "box {} has non-finite pose",
                self.instance_id
            )));
        }
        if self.instance_id == 0 {
            return Err(Error::InvariantViolation(
                "instance id 0 is reserved for background".into(),
            ));
        }
        Ok(())
    }

    /// Planar offset of `(x, y)` from the centre, expressed in the box frame.
    #[inline]
    fn local_xy(&self, x: f64, y: f64) -> (f64, f64) {
        let (s, c) = self.yaw.sin_cos();
        let (dx, dy) = (x - self.center[0], y - self.center[1]);
        (c * dx + s * dy, -s * dx + c * dy)
    }

    /// Footprint test ignoring z.
    #[inline]
    pub fn contains_xy(&self, x: f64, y: f64) -> bool {
        let (u, v) = self.local_xy(x, y);
        u.abs() <= self.size[0] / 2.0 + FACE_SLACK && v.abs() <= self.size[1] / 2.0 + FACE_SLACK
    }

    #[inline]
    pub fn contains_z(&self, z: f64) -> bool {
        (z - self.center[2]).abs() <= self.size[2] / 2.0 + FACE_SLACK
    }

    #[inline]
    pub fn contains(&self, p: [f64; 3]) -> bool {
        self.contains_z(p[2]) && self.contains_xy(p[0], p[1])
    }

    /// The four footprint corners.
    pub fn corners_xy(&self) -> [(f64, f64); 4] {
        let (s, c) = self.yaw.sin_cos();
        let (hl, hw) = (self.size[0] / 2.0, self.size[1] / 2.0);
        [(hl, hw), (hl, -hw), (-hl, -hw), (-hl, hw)].map(|(u, v)| {
            (
                self.center[0] + c * u - s * v,
                self.center[1] + s * u + c * v,
            )
        })
    }

    /// Axis-aligned bounds `([x_lo, y_lo, z_lo], [x_hi, y_hi, z_hi])`.
    pub fn aabb(&self) -> ([f64; 3], [f64; 3]) {
        let corners = self.corners_xy();
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        for (x, y) in corners {
            lo[0] = lo[0].min(x);
            lo[1] = lo[1].min(y);
            hi[0] = hi[0].max(x);
            hi[1] = hi[1].max(y);
        }
        lo[2] = self.center[2] - self.size[2] / 2.0;
        hi[2] = self.center[2] + self.size[2] / 2.0;
        (lo, hi)
    }

    /// This box re-expressed through `pose` (z unchanged).
    pub fn transformed(&self, pose: &Pose2D) -> Self {
        let (x, y) = pose.apply(self.center[0], self.center[1]);
        Self {
            center: [x, y, self.center[2]],
            size: self.size,
            yaw: normalize_angle(self.yaw + pose.yaw),
            instance_id: self.instance_id,
        }
    }
}
