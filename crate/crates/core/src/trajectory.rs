//! From a raw sweep to a clean closed trajectory, its 64-frame subsample, and the
//! three waypoint feature vectors.

use std::f64::consts::TAU;

use nalgebra::Vector3;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::error::TrajectoryError;
use crate::solver::RawSweep;

/// Frames in the dense ground-truth subsample.
pub const SUBSAMPLE_LEN: usize = 64;
/// Waypoints drawn from the subsample.
pub const WAYPOINT_COUNT: usize = 3;
/// Harmonics retained by the low-pass filter.
pub const DEFAULT_CUTOFF: usize = 72;
/// Minimum converged fraction for a sweep to count as assemblable.
pub const DEFAULT_GATE2: f64 = 0.8;

/// Replace unconverged positions by periodic linear interpolation in drive angle
/// between the nearest converged frames on either side.
pub fn fill_gaps(sweep: &RawSweep, min_fraction: f64) -> Result<Vec<Vector3<f64>>, TrajectoryError> {
    let n = sweep.positions.len();
    let known: Vec<usize> = (0..n).filter(|&k| sweep.positions[k].is_some()).collect();
    if known.is_empty() || (known.len() as f64) < min_fraction * n as f64 {
        return Err(TrajectoryError::InsufficientCoverage {
            converged: known.len(),
            frames: n,
        });
    }

    let mut out = Vec::with_capacity(n);
    for k in 0..n {
        if let Some(p) = sweep.positions[k] {
            out.push(p);
            continue;
        }
        // nearest converged frames behind and ahead, walking around the circle
        let back = (1..n).find(|d| sweep.positions[(k + n - d) % n].is_some()).unwrap();
        let ahead = (1..n).find(|d| sweep.positions[(k + d) % n].is_some()).unwrap();
        let before = sweep.positions[(k + n - back) % n].unwrap();
        let after = sweep.positions[(k + ahead) % n].unwrap();
        let w = back as f64 / (back + ahead) as f64;
        out.push(before + (after - before) * w);
    }
    Ok(out)
}

/// Periodic, band-limited trajectory over one drive-angle revolution.
#[derive(Debug, Clone, PartialEq)]
pub struct FilteredTrajectory {
    pub points: Vec<Vector3<f64>>,
    pub fc: usize,
    /// Largest inter-frame displacement norm, including the 359→0 wrap pair.
    pub max_jump: f64,
    /// Mean inter-frame displacement norm.
    pub mean_jump: f64,
    /// Population standard deviation of the inter-frame displacement norms.
    pub sigma: f64,
    /// Largest change between consecutive displacement norms (periodic).
    pub max_step_change: f64,
    /// Retained DFT bins 0..=fc for each axis.
    spectrum: [Vec<Complex<f64>>; 3],
}

impl FilteredTrajectory {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Evaluate the band-limited curve at any drive angle. Agrees with `points[k]`
    /// at `phi = 2πk/N` up to rounding.
    pub fn evaluate(&self, phi: f64) -> Vector3<f64> {
        let n = self.points.len() as f64;
        let mut out = Vector3::zeros();
        for axis in 0..3 {
            let coeffs = &self.spectrum[axis];
            let mut acc = coeffs[0].re;
            for (h, c) in coeffs.iter().enumerate().skip(1) {
                let (s, co) = (h as f64 * phi).sin_cos();
                acc += 2.0 * (c.re * co - c.im * s);
            }
            out[axis] = acc / n;
        }
        out
    }

    /// Evaluate with precomputed `(sin hφ, cos hφ)` for h = 0..=fc.
    pub(crate) fn evaluate_with(&self, basis: &[(f64, f64)]) -> Vector3<f64> {
        let n = self.points.len() as f64;
        let mut out = Vector3::zeros();
        for axis in 0..3 {
            let coeffs = &self.spectrum[axis];
            let mut acc = coeffs[0].re;
            for h in 1..coeffs.len() {
                let (s, co) = basis[h];
                acc += 2.0 * (coeffs[h].re * co - coeffs[h].im * s);
            }
            out[axis] = acc / n;
        }
        out
    }

    /// A copy with every point multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        let spectrum = self
            .spectrum
            .clone()
            .map(|axis| axis.into_iter().map(|c| c * factor).collect());
        Self {
            points: self.points.iter().map(|p| p * factor).collect(),
            fc: self.fc,
            max_jump: self.max_jump * factor,
            mean_jump: self.mean_jump * factor,
            sigma: self.sigma * factor,
            max_step_change: self.max_step_change * factor,
            spectrum,
        }
    }
}

/// Sine/cosine basis for [`FilteredTrajectory::evaluate_with`].
pub(crate) fn harmonic_basis(phi: f64, fc: usize) -> Vec<(f64, f64)> {
    (0..=fc).map(|h| (h as f64 * phi).sin_cos()).collect()
}

/// Inter-frame displacement norms of a closed curve, wrap pair last.
pub fn jump_norms(points: &[Vector3<f64>]) -> Vec<f64> {
    let n = points.len();
    (0..n).map(|k| (points[(k + 1) % n] - points[k]).norm()).collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JumpStats {
    pub max: f64,
    pub mean: f64,
    pub sigma: f64,
    pub max_step_change: f64,
}

pub fn jump_stats(points: &[Vector3<f64>]) -> JumpStats {
    let norms = jump_norms(points);
    let n = norms.len();
    if n == 0 {
        return JumpStats {
            max: 0.0,
            mean: 0.0,
            sigma: 0.0,
            max_step_change: 0.0,
        };
    }
    let mean = norms.iter().sum::<f64>() / n as f64;
    let var = norms.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / n as f64;
    let max = norms.iter().copied().fold(0.0, f64::max);
    let max_step_change = (0..n)
        .map(|k| (norms[(k + 1) % n] - norms[k]).abs())
        .fold(0.0, f64::max);
    JumpStats {
        max,
        mean,
        sigma: var.sqrt(),
        max_step_change,
    }
}

/// Zero every harmonic above `fc` on each axis and transform back.
pub fn lowpass_dft(points: &[Vector3<f64>], fc: usize) -> Result<FilteredTrajectory, TrajectoryError> {
    let n = points.len();
    if 2 * fc >= n {
        return Err(TrajectoryError::CutoffTooHigh { fc, frames: n });
    }
    let mut planner = FftPlanner::<f64>::new();
    let forward = planner.plan_fft_forward(n);
    let inverse = planner.plan_fft_inverse(n);

    let mut filtered = vec![Vector3::zeros(); n];
    let mut spectrum: [Vec<Complex<f64>>; 3] = Default::default();
    for axis in 0..3 {
        let mut buf: Vec<Complex<f64>> = points.iter().map(|p| Complex::new(p[axis], 0.0)).collect();
        forward.process(&mut buf);
        for (k, c) in buf.iter_mut().enumerate() {
            if k.min(n - k) > fc {
                *c = Complex::new(0.0, 0.0);
            }
        }
        spectrum[axis] = buf[..=fc].to_vec();
        inverse.process(&mut buf);
        for (k, c) in buf.iter().enumerate() {
            filtered[k][axis] = c.re / n as f64;
        }
    }

    let stats = jump_stats(&filtered);
    Ok(FilteredTrajectory {
        points: filtered,
        fc,
        max_jump: stats.max,
        mean_jump: stats.mean,
        sigma: stats.sigma,
        max_step_change: stats.max_step_change,
        spectrum,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Gate3 {
    Pass,
    Reject { jump: f64, tau: f64 },
}

impl Gate3 {
    pub fn passed(&self) -> bool {
        matches!(self, Gate3::Pass)
    }
}

/// Branch-jump test with threshold τ = 3σ over the inter-frame displacement norms
/// `d_k = ‖p_{k+1} − p_k‖` (wrap pair included).
///
/// The tested quantity is the largest change between consecutive displacements,
/// `max_k |d_{k+1} − d_k|`. Along a smooth motion `d_k` varies slowly even where
/// the speed peaks, while a switch of closure branch shows up as an abrupt change
/// of `d_k`. τ never drops below `1e-9 · mean(d)` so uniform-speed curves, where σ
/// is pure rounding noise, pass.
pub fn gate3_check(traj: &FilteredTrajectory) -> Gate3 {
    if traj.points.len() <= 2 {
        return Gate3::Pass;
    }
    let tau = (3.0 * traj.sigma).max(1e-9 * traj.mean_jump);
    if traj.max_step_change > tau {
        Gate3::Reject {
            jump: traj.max_step_change,
            tau,
        }
    } else {
        Gate3::Pass
    }
}

/// Indices `floor(k·n/64)` of the dense subsample within an `n`-frame sweep.
pub fn subsample_indices(n: usize) -> [usize; SUBSAMPLE_LEN] {
    std::array::from_fn(|k| k * n / SUBSAMPLE_LEN)
}

/// Subsample positions used as waypoints: `floor(k·64/3)`.
pub const WAYPOINT_INDICES: [usize; WAYPOINT_COUNT] = [0, 21, 42];

/// Drive angle of every subsample frame for an `n`-frame sweep.
pub fn subsample_drive_angles(n: usize) -> [f64; SUBSAMPLE_LEN] {
    subsample_indices(n).map(|i| TAU * i as f64 / n as f64)
}

pub fn subsample64(traj: &FilteredTrajectory) -> Vec<Vector3<f64>> {
    subsample_indices(traj.points.len())
        .iter()
        .map(|&i| traj.points[i])
        .collect()
}

/// Velocity step: one subsample interval in radians of drive angle.
pub const VELOCITY_STEP: f64 = TAU / SUBSAMPLE_LEN as f64;

/// Periodic central differences, `(p[k+1] − p[k−1]) / (2Δ)` with Δ = 2π/64.
pub fn central_diff_velocity(positions: &[Vector3<f64>]) -> Vec<Vector3<f64>> {
    let n = positions.len();
    (0..n)
        .map(|k| (positions[(k + 1) % n] - positions[(k + n - 1) % n]) / (2.0 * VELOCITY_STEP))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProcessedTrajectory {
    pub positions: Vec<Vector3<f64>>,
    pub velocities: Vec<Vector3<f64>>,
    pub speed_ratios: Vec<f64>,
}

impl ProcessedTrajectory {
    pub fn from_positions(positions: Vec<Vector3<f64>>) -> Self {
        let velocities = central_diff_velocity(&positions);
        let speed_ratios = speed_ratios(&velocities);
        Self {
            positions,
            velocities,
            speed_ratios,
        }
    }

    pub fn from_filtered(traj: &FilteredTrajectory) -> Self {
        Self::from_positions(subsample64(traj))
    }
}

/// `|v_i| / max_j |v_j|`; all zeros for a motionless trajectory.
pub fn speed_ratios(velocities: &[Vector3<f64>]) -> Vec<f64> {
    let speeds: Vec<f64> = velocities.iter().map(|v| v.norm()).collect();
    let max = speeds.iter().copied().fold(0.0, f64::max);
    if max > 0.0 {
        speeds.iter().map(|s| s / max).collect()
    } else {
        vec![0.0; speeds.len()]
    }
}

/// One waypoint: position, velocity and speed ratio.
pub type Waypoint = [f64; 7];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Waypoints(pub [Waypoint; WAYPOINT_COUNT]);

impl Waypoints {
    pub fn position(&self, k: usize) -> Vector3<f64> {
        let w = &self.0[k];
        Vector3::new(w[0], w[1], w[2])
    }

    pub fn velocity(&self, k: usize) -> Vector3<f64> {
        let w = &self.0[k];
        Vector3::new(w[3], w[4], w[5])
    }

    pub fn speed_ratio(&self, k: usize) -> f64 {
        self.0[k][6]
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().flatten().all(|v| v.is_finite())
    }
}

pub fn make_waypoint(p: &Vector3<f64>, v: &Vector3<f64>, r: f64) -> Waypoint {
    [p.x, p.y, p.z, v.x, v.y, v.z, r]
}

pub fn extract_waypoints(traj: &ProcessedTrajectory) -> Waypoints {
    Waypoints(WAYPOINT_INDICES.map(|i| make_waypoint(&traj.positions[i], &traj.velocities[i], traj.speed_ratios[i])))
}
