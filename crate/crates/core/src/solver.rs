//! Levenberg-Marquardt closure solving for the follower angles (θ2, θ3, θ4).

use std::f64::consts::TAU;

use nalgebra::{Matrix3, Matrix4, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::SolverError;
use crate::kinematics::{canonical_angle, dh_dtheta, dh_unchecked, inf_norm, joint3_position, BennettParams};

/// Solve accepts a step once the residual drops this far below `eps`, so converged
/// frames carry headroom instead of sitting right at the tolerance.
const POLISH_FACTOR: f64 = 1e-4;
const LAMBDA_MAX: f64 = 1e16;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    /// Convergence tolerance on the residual ∞-norm.
    pub eps: f64,
    pub max_iter: usize,
    pub lambda0: f64,
    /// Initial guesses per axis for the frame-0 multistart lattice.
    pub multistart_grid: usize,
    /// Drive-angle samples per revolution.
    pub frames: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            eps: 1e-6,
            max_iter: 200,
            lambda0: 1e-3,
            multistart_grid: 4,
            frames: 360,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<(), SolverError> {
        if !(self.eps > 0.0 && self.eps.is_finite()) {
            return Err(SolverError::InvalidConfig(format!("eps = {}", self.eps)));
        }
        if self.max_iter == 0 {
            return Err(SolverError::InvalidConfig("max_iter must be at least 1".into()));
        }
        if !(self.lambda0 > 0.0 && self.lambda0.is_finite()) {
            return Err(SolverError::InvalidConfig(format!("lambda0 = {}", self.lambda0)));
        }
        if self.multistart_grid == 0 || self.frames == 0 {
            return Err(SolverError::InvalidConfig(
                "multistart_grid and frames must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameSolution {
    pub theta2: f64,
    pub theta3: f64,
    pub theta4: f64,
    pub converged: bool,
    pub residual_norm: f64,
    pub iterations: usize,
}

impl FrameSolution {
    pub fn followers(&self) -> [f64; 3] {
        [self.theta2, self.theta3, self.theta4]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RawSweep {
    pub params: BennettParams,
    pub frames: Vec<FrameSolution>,
    /// Joint-3 origin per frame; `None` where the frame did not converge.
    pub positions: Vec<Option<Vector3<f64>>>,
    pub converged_fraction: f64,
}

impl RawSweep {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn converged_count(&self) -> usize {
        self.frames.iter().filter(|f| f.converged).count()
    }

    pub fn drive_angle(&self, k: usize) -> f64 {
        TAU * k as f64 / self.frames.len() as f64
    }
}

fn to_matrix(t: &crate::kinematics::HomTransform, bottom: f64) -> Matrix4<f64> {
    let mut m = t.to_matrix();
    m[(3, 3)] = bottom;
    m
}

/// Residual and analytic 12×3 Jacobian at `theta1` and followers `x`.
fn residual_and_jacobian(params: &BennettParams, theta1: f64, x: &[f64; 3]) -> ([f64; 12], [[f64; 3]; 12]) {
    let thetas = [theta1, x[0], x[1], x[2]];
    let mats: Vec<Matrix4<f64>> = (0..4)
        .map(|j| {
            let (a, alpha) = params.link(j);
            dh_unchecked(thetas[j], a, alpha).to_matrix()
        })
        .collect();
    let derivs: Vec<Matrix4<f64>> = (1..4)
        .map(|j| {
            let (a, alpha) = params.link(j);
            to_matrix(&dh_dtheta(thetas[j], a, alpha), 0.0)
        })
        .collect();

    let m12 = mats[0] * mats[1];
    let m34 = mats[2] * mats[3];
    let product = m12 * m34;
    let cols = [
        mats[0] * derivs[0] * m34,
        m12 * derivs[1] * mats[3],
        m12 * mats[2] * derivs[2],
    ];

    let mut r = [0.0; 12];
    let mut jac = [[0.0; 3]; 12];
    for row in 0..3 {
        for col in 0..4 {
            let idx = row * 4 + col;
            r[idx] = product[(row, col)] - if row == col { 1.0 } else { 0.0 };
            for (c, d) in cols.iter().enumerate() {
                jac[idx][c] = d[(row, col)];
            }
        }
    }
    (r, jac)
}

fn residual_only(params: &BennettParams, theta1: f64, x: &[f64; 3]) -> [f64; 12] {
    crate::kinematics::residual_raw(params, [theta1, x[0], x[1], x[2]])
}

fn sum_sq(r: &[f64; 12]) -> f64 {
    r.iter().map(|v| v * v).sum()
}

/// Solve the loop closure for fixed `theta1` starting from `init = (θ2, θ3, θ4)`.
pub fn solve_frame(
    params: &BennettParams,
    theta1: f64,
    init: [f64; 3],
    cfg: &SolverConfig,
) -> Result<FrameSolution, SolverError> {
    params.check()?;
    cfg.validate()?;
    Ok(lm(params, theta1, init, cfg))
}

fn lm(params: &BennettParams, theta1: f64, init: [f64; 3], cfg: &SolverConfig) -> FrameSolution {
    let target = cfg.eps * POLISH_FACTOR;
    let mut x = init;
    let mut r = residual_only(params, theta1, &x);
    let mut cost = sum_sq(&r);
    let mut lambda = cfg.lambda0;
    let mut iterations = 0;

    while iterations < cfg.max_iter && inf_norm(&r) > target {
        iterations += 1;
        let (_, jac) = residual_and_jacobian(params, theta1, &x);
        let mut jtj = Matrix3::<f64>::zeros();
        let mut grad = Vector3::<f64>::zeros();
        for (row, ri) in jac.iter().zip(r.iter()) {
            for a in 0..3 {
                grad[a] += row[a] * ri;
                for b in 0..3 {
                    jtj[(a, b)] += row[a] * row[b];
                }
            }
        }

        let mut damped = jtj;
        for d in 0..3 {
            damped[(d, d)] += lambda * jtj[(d, d)].max(1e-12);
        }
        let step = damped.cholesky().map(|c| c.solve(&(-grad)));
        let Some(step) = step else {
            lambda *= 10.0;
            if lambda > LAMBDA_MAX {
                break;
            }
            continue;
        };

        let candidate = [x[0] + step[0], x[1] + step[1], x[2] + step[2]];
        let r_new = residual_only(params, theta1, &candidate);
        let cost_new = sum_sq(&r_new);
        if cost_new < cost {
            let moved = step.amax();
            x = candidate;
            r = r_new;
            cost = cost_new;
            lambda = (lambda / 10.0).max(1e-15);
            if moved < 1e-15 {
                break;
            }
        } else {
            lambda *= 10.0;
            if lambda > LAMBDA_MAX {
                break;
            }
        }
    }

    let residual_norm = inf_norm(&r);
    FrameSolution {
        theta2: canonical_angle(x[0]),
        theta3: canonical_angle(x[1]),
        theta4: canonical_angle(x[2]),
        converged: residual_norm <= cfg.eps,
        residual_norm,
        iterations,
    }
}

/// Deterministic lattice of initial follower triples over [0, 2π)³.
pub fn multistart_lattice(per_axis: usize) -> Vec<[f64; 3]> {
    let step = TAU / per_axis as f64;
    let mut out = Vec::with_capacity(per_axis.pow(3));
    for i in 0..per_axis {
        for j in 0..per_axis {
            for k in 0..per_axis {
                out.push([i as f64 * step, j as f64 * step, k as f64 * step]);
            }
        }
    }
    out
}

/// Solve every frame of a full drive-angle revolution.
///
/// Frame 0 runs LM from each lattice start and keeps the lowest residual (first
/// wins on ties). Later frames warm-start from the most recent converged frame.
pub fn sweep(params: &BennettParams, cfg: &SolverConfig) -> Result<RawSweep, SolverError> {
    params.check()?;
    cfg.validate()?;

    let n = cfg.frames;
    let mut frames = Vec::with_capacity(n);
    let mut positions = Vec::with_capacity(n);

    let mut first: Option<FrameSolution> = None;
    for start in multistart_lattice(cfg.multistart_grid) {
        let sol = lm(params, 0.0, start, cfg);
        if first.is_none_or(|best| sol.residual_norm < best.residual_norm) {
            first = Some(sol);
        }
    }
    let first = first.expect("lattice has at least one start");
    let mut warm = first.followers();
    frames.push(first);

    for k in 1..n {
        let theta1 = TAU * k as f64 / n as f64;
        let sol = lm(params, theta1, warm, cfg);
        if sol.converged {
            warm = sol.followers();
        }
        frames.push(sol);
    }

    let mut converged = 0usize;
    for (k, f) in frames.iter().enumerate() {
        if f.converged {
            converged += 1;
            positions.push(Some(joint3_position(params, TAU * k as f64 / n as f64, f.theta2)));
        } else {
            positions.push(None);
        }
    }

    Ok(RawSweep {
        params: *params,
        frames,
        positions,
        converged_fraction: converged as f64 / n as f64,
    })
}
