//! Constraint algebra of the Bennett 4R loop.
//!
//! Every joint uses the offset-free Denavit-Hartenberg transform
//!
//! ```text
//! | cθ  -sθ·cα   sθ·sα  a·cθ |
//! | sθ   cθ·cα  -cθ·sα  a·sθ |
//! | 0    sα      cα     0    |
//! | 0    0       0      1    |
//! ```
//!
//! and the loop is `T1(θ1; a12, α12) · T2(θ2; a23, α23) · T3(θ3; a12, α12) · T4(θ4; a23, α23) = I`,
//! opposite links sharing length and twist.

use std::f64::consts::{PI, TAU};
use std::ops::Mul;

use nalgebra::{Matrix3, Matrix4, Vector3};

use crate::error::KinematicsError;

/// Rigid transform with rotation `r` and translation `t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HomTransform {
    pub r: Matrix3<f64>,
    pub t: Vector3<f64>,
}

impl HomTransform {
    pub fn identity() -> Self {
        Self {
            r: Matrix3::identity(),
            t: Vector3::zeros(),
        }
    }

    pub fn to_matrix(&self) -> Matrix4<f64> {
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&self.r);
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.t);
        m
    }

    /// The 12 non-trivial entries (top 3×4 block), row-major.
    pub fn top_block(&self) -> [f64; 12] {
        let mut out = [0.0; 12];
        for row in 0..3 {
            for col in 0..3 {
                out[row * 4 + col] = self.r[(row, col)];
            }
            out[row * 4 + 3] = self.t[row];
        }
        out
    }
}

impl Mul for HomTransform {
    type Output = HomTransform;

    fn mul(self, rhs: HomTransform) -> HomTransform {
        HomTransform {
            r: self.r * rhs.r,
            t: self.r * rhs.t + self.t,
        }
    }
}

/// Offset-free D-H transform for a revolute joint.
pub fn dh_transform(theta: f64, a: f64, alpha: f64) -> Result<HomTransform, KinematicsError> {
    if !(theta.is_finite() && a.is_finite() && alpha.is_finite()) {
        return Err(KinematicsError::InvalidArgument(format!(
            "non-finite D-H input (theta={theta}, a={a}, alpha={alpha})"
        )));
    }
    Ok(dh_unchecked(theta, a, alpha))
}

#[inline]
pub(crate) fn dh_unchecked(theta: f64, a: f64, alpha: f64) -> HomTransform {
    let (st, ct) = theta.sin_cos();
    let (sa, ca) = alpha.sin_cos();
    HomTransform {
        r: Matrix3::new(ct, -st * ca, st * sa, st, ct * ca, -ct * sa, 0.0, sa, ca),
        t: Vector3::new(a * ct, a * st, 0.0),
    }
}

/// Derivative of [`dh_unchecked`] with respect to `theta`. The bottom row of the
/// 4×4 derivative is zero, so the result is returned as a (rotation, translation) pair
/// with the same layout as [`HomTransform`].
#[inline]
pub(crate) fn dh_dtheta(theta: f64, a: f64, alpha: f64) -> HomTransform {
    let (st, ct) = theta.sin_cos();
    let (sa, ca) = alpha.sin_cos();
    HomTransform {
        r: Matrix3::new(-st, -ct * ca, ct * sa, ct, -st * ca, st * sa, 0.0, 0.0, 0.0),
        t: Vector3::new(-a * st, a * ct, 0.0),
    }
}

/// Which solution of `sin α23 = s` was taken.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TwistBranch {
    /// `asin(s)`, placed in (0, π) for positive `s` and (π, 2π) for negative `s`.
    Principal,
    /// `π − asin(s)`, wrapped into [0, 2π).
    Supplementary,
}

/// Link geometry of a Bennett loop: the two free parameters and their dependents.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BennettParams {
    a12: f64,
    alpha12: f64,
    a23: f64,
    alpha23: f64,
    scale: f64,
}

impl BennettParams {
    /// Assemble parameters without checking the Bennett condition. Use
    /// [`BennettParams::check`] before feeding them to the solver.
    pub fn from_parts(a12: f64, alpha12: f64, a23: f64, alpha23: f64, scale: f64) -> Self {
        Self {
            a12,
            alpha12,
            a23,
            alpha23,
            scale,
        }
    }

    pub fn a12(&self) -> f64 {
        self.a12
    }
    pub fn alpha12(&self) -> f64 {
        self.alpha12
    }
    pub fn a23(&self) -> f64 {
        self.a23
    }
    pub fn alpha23(&self) -> f64 {
        self.alpha23
    }
    pub fn scale(&self) -> f64 {
        self.scale
    }

    /// Residual of the proportionality relation, `sin α12 · a23 − sin α23 · a12`
    /// (cross-multiplied so it stays finite for tiny lengths).
    pub fn proportionality_residual(&self) -> f64 {
        self.alpha12.sin() * self.a23 - self.alpha23.sin() * self.a12
    }

    /// Uniform rescale of both link lengths. Twists are unaffected.
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            a12: self.a12 * factor,
            a23: self.a23 * factor,
            scale: self.scale * factor,
            ..*self
        }
    }

    /// Validate the invariants the solver relies on.
    pub fn check(&self) -> Result<(), KinematicsError> {
        let finite = [self.a12, self.alpha12, self.a23, self.alpha23, self.scale]
            .iter()
            .all(|v| v.is_finite());
        if !finite || self.a12 <= 0.0 || self.a23 <= 0.0 || self.scale <= 0.0 {
            return Err(KinematicsError::InvalidArgument(format!(
                "degenerate Bennett parameters {self:?}"
            )));
        }
        let tol = 1e-12 * self.scale.max(1.0);
        if self.proportionality_residual().abs() > tol {
            return Err(KinematicsError::NotBennett {
                residual: self.proportionality_residual(),
            });
        }
        if (self.a12 + self.a23 - self.scale).abs() > 1e-12 * self.scale.max(1.0) {
            return Err(KinematicsError::InvalidArgument(format!(
                "a12 + a23 = {} does not match scale {}",
                self.a12 + self.a23,
                self.scale
            )));
        }
        Ok(())
    }

    /// The four joint transforms of the loop at the given angles.
    pub(crate) fn joint_transforms(&self, theta: [f64; 4]) -> [HomTransform; 4] {
        [
            dh_unchecked(theta[0], self.a12, self.alpha12),
            dh_unchecked(theta[1], self.a23, self.alpha23),
            dh_unchecked(theta[2], self.a12, self.alpha12),
            dh_unchecked(theta[3], self.a23, self.alpha23),
        ]
    }

    pub(crate) fn link(&self, joint: usize) -> (f64, f64) {
        if joint.is_multiple_of(2) {
            (self.a12, self.alpha12)
        } else {
            (self.a23, self.alpha23)
        }
    }
}

/// Outcome of the real-solution check.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Gate1 {
    Accepted(BennettParams),
    Rejected { sin_alpha23: f64 },
}

impl Gate1 {
    pub fn accepted(self) -> Option<BennettParams> {
        match self {
            Gate1::Accepted(p) => Some(p),
            Gate1::Rejected { .. } => None,
        }
    }
}

/// Derive `a23` and `α23` from the free pair `(a12, α12)` on the principal branch.
pub fn derive_dependents(a12: f64, alpha12: f64) -> Result<Gate1, KinematicsError> {
    derive_dependents_on(a12, alpha12, TwistBranch::Principal)
}

pub fn derive_dependents_on(a12: f64, alpha12: f64, branch: TwistBranch) -> Result<Gate1, KinematicsError> {
    if !(a12.is_finite() && a12 > 0.0 && a12 < 1.0) {
        return Err(KinematicsError::InvalidArgument(format!("a12 = {a12} outside (0, 1)")));
    }
    if !(alpha12.is_finite() && alpha12 > 0.0 && alpha12 < TAU) {
        return Err(KinematicsError::InvalidArgument(format!(
            "alpha12 = {alpha12} outside (0, 2π)"
        )));
    }
    let a23 = 1.0 - a12;
    let sin_alpha23 = a23 / a12 * alpha12.sin();
    if sin_alpha23.abs() > 1.0 {
        return Ok(Gate1::Rejected { sin_alpha23 });
    }
    let principal = sin_alpha23.asin();
    let alpha23 = match branch {
        TwistBranch::Principal => canonical_angle(principal),
        TwistBranch::Supplementary => canonical_angle(PI - principal),
    };
    Ok(Gate1::Accepted(BennettParams {
        a12,
        alpha12,
        a23,
        alpha23,
        scale: 1.0,
    }))
}

/// Map an angle into [0, 2π).
pub fn canonical_angle(theta: f64) -> f64 {
    let r = theta.rem_euclid(TAU);
    // rem_euclid can round up to exactly TAU for tiny negative inputs
    if r >= TAU {
        0.0
    } else {
        r
    }
}

/// Joint variables of the loop, stored canonically in [0, 2π).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JointAngles([f64; 4]);

impl JointAngles {
    pub fn new(theta: [f64; 4]) -> Result<Self, KinematicsError> {
        if theta.iter().any(|t| !t.is_finite()) {
            return Err(KinematicsError::InvalidArgument(format!(
                "non-finite joint angle in {theta:?}"
            )));
        }
        Ok(Self(theta.map(canonical_angle)))
    }

    pub fn as_array(&self) -> [f64; 4] {
        self.0
    }

    pub fn theta(&self, joint: usize) -> f64 {
        self.0[joint]
    }
}

/// Flattened top 3×4 block of `T1·T2·T3·T4 − I`. Zero exactly when the loop closes.
pub fn closure_residual(params: &BennettParams, angles: &JointAngles) -> [f64; 12] {
    residual_raw(params, angles.as_array())
}

pub(crate) fn residual_raw(params: &BennettParams, theta: [f64; 4]) -> [f64; 12] {
    let [t1, t2, t3, t4] = params.joint_transforms(theta);
    let product = t1 * t2 * t3 * t4;
    let mut block = product.top_block();
    block[0] -= 1.0;
    block[5] -= 1.0;
    block[10] -= 1.0;
    block
}

/// Origin of the joint-3 frame in the base frame: translation of `T1(θ1)·T2(θ2)`.
pub fn joint3_position(params: &BennettParams, theta1: f64, theta2: f64) -> Vector3<f64> {
    let t1 = dh_unchecked(theta1, params.a12, params.alpha12);
    let t2 = dh_unchecked(theta2, params.a23, params.alpha23);
    t1.r * t2.t + t1.t
}

pub(crate) fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
}
