//! Candidate grid, the three validity gates, and assembly of the sample set.

use nalgebra::Vector3;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{KinematicsError, TrajectoryError};
use crate::kinematics::{derive_dependents_on, BennettParams, Gate1, TwistBranch};
use crate::solver::{sweep, RawSweep, SolverConfig};
use crate::trajectory::{
    extract_waypoints, fill_gaps, gate3_check, lowpass_dft, FilteredTrajectory, Gate3, ProcessedTrajectory, Waypoints,
    DEFAULT_CUTOFF, DEFAULT_GATE2,
};

/// Closed parameter intervals, in the unit of the parameter (radians for twists).
pub type Interval = (f64, f64);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridConfig {
    pub a12_intervals: Vec<Interval>,
    pub alpha12_intervals: Vec<Interval>,
    pub n_a: usize,
    pub n_alpha: usize,
}

impl GridConfig {
    pub fn with_counts(n_a: usize, n_alpha: usize) -> Self {
        Self {
            n_a,
            n_alpha,
            ..Self::default()
        }
    }

    pub fn default_a12_intervals() -> Vec<Interval> {
        vec![(0.02, 0.48), (0.52, 0.98)]
    }

    pub fn default_alpha12_intervals() -> Vec<Interval> {
        vec![
            (5f64.to_radians(), 178f64.to_radians()),
            (185f64.to_radians(), 355f64.to_radians()),
        ]
    }

    pub fn validate(&self) -> Result<(), KinematicsError> {
        if self.n_a < 2 || self.n_alpha < 2 {
            return Err(KinematicsError::InvalidArgument(format!(
                "grid counts must be at least 2 (got {} × {})",
                self.n_a, self.n_alpha
            )));
        }
        for &(lo, hi) in self.a12_intervals.iter().chain(&self.alpha12_intervals) {
            if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                return Err(KinematicsError::InvalidArgument(format!("bad interval [{lo}, {hi}]")));
            }
        }
        if self.a12_intervals.is_empty() || self.alpha12_intervals.is_empty() {
            return Err(KinematicsError::InvalidArgument("empty interval union".into()));
        }
        Ok(())
    }
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            a12_intervals: Self::default_a12_intervals(),
            alpha12_intervals: Self::default_alpha12_intervals(),
            n_a: 263,
            n_alpha: 263,
        }
    }
}

/// Split `count` points across intervals proportionally to their lengths
/// (largest-remainder rounding, earlier interval wins ties).
fn allocate(intervals: &[Interval], count: usize) -> Vec<usize> {
    let total: f64 = intervals.iter().map(|(lo, hi)| hi - lo).sum();
    if total <= 0.0 {
        let mut out = vec![count / intervals.len(); intervals.len()];
        out[0] += count % intervals.len();
        return out;
    }
    let quotas: Vec<f64> = intervals
        .iter()
        .map(|(lo, hi)| count as f64 * (hi - lo) / total)
        .collect();
    let mut out: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
    let mut left = count - out.iter().sum::<usize>();
    let mut order: Vec<usize> = (0..intervals.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = quotas[a] - quotas[a].floor();
        let rb = quotas[b] - quotas[b].floor();
        rb.partial_cmp(&ra).unwrap().then(a.cmp(&b))
    });
    for i in order {
        if left == 0 {
            break;
        }
        out[i] += 1;
        left -= 1;
    }
    out
}

/// Uniformly spaced values over a union of intervals, endpoints included.
pub fn axis_values(intervals: &[Interval], count: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(count);
    for (&(lo, hi), m) in intervals.iter().zip(allocate(intervals, count)) {
        match m {
            0 => {}
            1 => out.push(0.5 * (lo + hi)),
            _ => out.extend((0..m).map(|i| {
                let t = i as f64 / (m - 1) as f64;
                lo * (1.0 - t) + hi * t
            })),
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Candidate {
    pub grid_index: (usize, usize),
    pub a12: f64,
    pub alpha12: f64,
}

/// Cartesian product of the two axes, ordered by `(i, j)`.
pub fn build_grid(cfg: &GridConfig) -> Vec<Candidate> {
    let a_values = axis_values(&cfg.a12_intervals, cfg.n_a);
    let alpha_values = axis_values(&cfg.alpha12_intervals, cfg.n_alpha);
    let mut out = Vec::with_capacity(a_values.len() * alpha_values.len());
    for (i, &a12) in a_values.iter().enumerate() {
        for (j, &alpha12) in alpha_values.iter().enumerate() {
            out.push(Candidate {
                grid_index: (i, j),
                a12,
                alpha12,
            });
        }
    }
    out
}

/// Constants of the per-candidate forward pipeline.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForwardConfig {
    pub solver: SolverConfig,
    /// Highest retained harmonic.
    pub fc: usize,
    /// Minimum converged-frame fraction.
    pub gate2: f64,
}

impl Default for ForwardConfig {
    fn default() -> Self {
        Self {
            solver: SolverConfig::default(),
            fc: DEFAULT_CUTOFF,
            gate2: DEFAULT_GATE2,
        }
    }
}

/// A candidate that survived all three gates.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardModel {
    pub params: BennettParams,
    pub branch: TwistBranch,
    pub converged_fraction: f64,
    pub filtered: FilteredTrajectory,
    pub processed: ProcessedTrajectory,
    pub waypoints: Waypoints,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Outcome {
    Gate1Reject { sin_alpha23: f64 },
    Gate2Reject { converged_fraction: f64 },
    Gate3Reject { jump: f64, tau: f64 },
    Accepted(Box<ForwardModel>),
}

impl Outcome {
    pub fn model(&self) -> Option<&ForwardModel> {
        match self {
            Outcome::Accepted(m) => Some(m),
            _ => None,
        }
    }
}

fn assemblable_sweep(
    a12: f64,
    alpha12: f64,
    cfg: &ForwardConfig,
) -> Result<Result<(RawSweep, TwistBranch), Outcome>, KinematicsError> {
    let params = match derive_dependents_on(a12, alpha12, TwistBranch::Principal)? {
        Gate1::Rejected { sin_alpha23 } => return Ok(Err(Outcome::Gate1Reject { sin_alpha23 })),
        Gate1::Accepted(p) => p,
    };
    let principal = sweep(&params, &cfg.solver).map_err(precondition)?;
    if principal.converged_count() as f64 >= cfg.gate2 * principal.len() as f64 {
        return Ok(Ok((principal, TwistBranch::Principal)));
    }
    let alt = derive_dependents_on(a12, alpha12, TwistBranch::Supplementary)?
        .accepted()
        .expect("supplementary branch shares the real-solution check");
    let retry = sweep(&alt, &cfg.solver).map_err(precondition)?;
    if retry.converged_count() as f64 >= cfg.gate2 * retry.len() as f64 {
        return Ok(Ok((retry, TwistBranch::Supplementary)));
    }
    Ok(Err(Outcome::Gate2Reject {
        converged_fraction: principal.converged_fraction.max(retry.converged_fraction),
    }))
}

fn precondition(e: crate::error::SolverError) -> KinematicsError {
    KinematicsError::InvalidArgument(e.to_string())
}

/// Run one candidate through Gates 1–3 and, if it survives, produce its processed
/// trajectory and waypoints.
pub fn forward_candidate(a12: f64, alpha12: f64, cfg: &ForwardConfig) -> Result<Outcome, KinematicsError> {
    let (raw, branch) = match assemblable_sweep(a12, alpha12, cfg)? {
        Ok(found) => found,
        Err(rejection) => return Ok(rejection),
    };
    let filled = fill_gaps(&raw, cfg.gate2).map_err(trajectory)?;
    let filtered = lowpass_dft(&filled, cfg.fc).map_err(trajectory)?;
    if let Gate3::Reject { jump, tau } = gate3_check(&filtered) {
        return Ok(Outcome::Gate3Reject { jump, tau });
    }
    let processed = ProcessedTrajectory::from_filtered(&filtered);
    let waypoints = extract_waypoints(&processed);
    Ok(Outcome::Accepted(Box::new(ForwardModel {
        params: raw.params,
        branch,
        converged_fraction: raw.converged_fraction,
        filtered,
        processed,
        waypoints,
    })))
}

fn trajectory(e: TrajectoryError) -> KinematicsError {
    KinematicsError::InvalidArgument(e.to_string())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct GateCounts {
    pub candidates: usize,
    pub gate1_rejects: usize,
    pub gate2_rejects: usize,
    pub gate3_rejects: usize,
    pub accepted: usize,
}

impl GateCounts {
    fn record(&mut self, outcome: &Outcome) {
        self.candidates += 1;
        match outcome {
            Outcome::Gate1Reject { .. } => self.gate1_rejects += 1,
            Outcome::Gate2Reject { .. } => self.gate2_rejects += 1,
            Outcome::Gate3Reject { .. } => self.gate3_rejects += 1,
            Outcome::Accepted(_) => self.accepted += 1,
        }
    }

    pub fn merge(self, other: GateCounts) -> GateCounts {
        GateCounts {
            candidates: self.candidates + other.candidates,
            gate1_rejects: self.gate1_rejects + other.gate1_rejects,
            gate2_rejects: self.gate2_rejects + other.gate2_rejects,
            gate3_rejects: self.gate3_rejects + other.gate3_rejects,
            accepted: self.accepted + other.accepted,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GateReport {
    pub candidates: usize,
    pub gate1_rejects: usize,
    pub gate2_rejects: usize,
    pub gate3_rejects: usize,
    pub accepted: usize,
    pub pass_rate: f64,
}

impl From<GateCounts> for GateReport {
    fn from(c: GateCounts) -> Self {
        GateReport {
            candidates: c.candidates,
            gate1_rejects: c.gate1_rejects,
            gate2_rejects: c.gate2_rejects,
            gate3_rejects: c.gate3_rejects,
            accepted: c.accepted,
            pass_rate: if c.candidates == 0 {
                0.0
            } else {
                c.accepted as f64 / c.candidates as f64
            },
        }
    }
}

/// One dataset entry. Lengths and trajectories are in whatever normalization stage
/// the containing dataset is at; twists are always radians.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub grid_index: (usize, usize),
    pub a12: f64,
    pub alpha12: f64,
    pub a23: f64,
    pub alpha23: f64,
    pub converged_fraction: f64,
    pub positions: Vec<Vector3<f64>>,
    pub velocities: Vec<Vector3<f64>>,
    pub waypoints: Waypoints,
}

impl Sample {
    pub fn from_model(grid_index: (usize, usize), model: &ForwardModel) -> Self {
        Sample {
            grid_index,
            a12: model.params.a12(),
            alpha12: model.params.alpha12(),
            a23: model.params.a23(),
            alpha23: model.params.alpha23(),
            converged_fraction: model.converged_fraction,
            positions: model.processed.positions.clone(),
            velocities: model.processed.velocities.clone(),
            waypoints: model.waypoints,
        }
    }
}

/// Run the full pipeline over the grid on `workers` threads (0 = one per core). Output order follows
/// the grid regardless of scheduling.
pub fn generate(
    grid: &GridConfig,
    cfg: &ForwardConfig,
    workers: usize,
) -> Result<(Vec<Sample>, GateReport), KinematicsError> {
    grid.validate()?;
    cfg.solver.validate().map_err(precondition)?;
    if 2 * cfg.fc >= cfg.solver.frames {
        return Err(KinematicsError::InvalidArgument(format!(
            "cutoff {} too high for {} frames",
            cfg.fc, cfg.solver.frames
        )));
    }
    let candidates = build_grid(grid);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| KinematicsError::InvalidArgument(e.to_string()))?;

    let outcomes: Vec<Result<(Candidate, Outcome), KinematicsError>> = pool.install(|| {
        candidates
            .par_iter()
            .map(|c| forward_candidate(c.a12, c.alpha12, cfg).map(|o| (*c, o)))
            .collect()
    });

    let mut counts = GateCounts::default();
    let mut samples = Vec::new();
    for item in outcomes {
        let (candidate, outcome) = item?;
        counts.record(&outcome);
        if let Outcome::Accepted(model) = &outcome {
            samples.push(Sample::from_model(candidate.grid_index, model));
        }
    }
    Ok((samples, counts.into()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn two_per_interval_hits_endpoints() {
        let values = axis_values(&GridConfig::default_a12_intervals(), 4);
        assert_eq!(values, vec![0.02, 0.48, 0.52, 0.98]);
    }

    #[test]
    fn grid_respects_interval_gaps() {
        let grid = build_grid(&GridConfig::with_counts(57, 91));
        assert_eq!(grid.len(), 57 * 91);
        let (g_lo, g_hi) = (178f64.to_radians(), 185f64.to_radians());
        for c in &grid {
            assert!(!(c.a12 > 0.48 && c.a12 < 0.52), "a12 {}", c.a12);
            assert!(!(c.alpha12 > g_lo && c.alpha12 < g_hi), "alpha12 {}", c.alpha12);
            assert!((0.02..=0.98).contains(&c.a12));
        }
    }

    #[test]
    fn default_grid_size() {
        assert_eq!(build_grid(&GridConfig::default()).len(), 69_169);
    }

    #[test]
    fn grid_order_is_row_major() {
        let grid = build_grid(&GridConfig::with_counts(3, 4));
        let idx: Vec<_> = grid.iter().map(|c| c.grid_index).collect();
        let expected: Vec<_> = (0..3).flat_map(|i| (0..4).map(move |j| (i, j))).collect();
        assert_eq!(idx, expected);
    }

    #[test]
    fn allocation_is_proportional() {
        let alpha = GridConfig::default_alpha12_intervals();
        assert_eq!(allocate(&alpha, 40), vec![20, 20]);
        assert_eq!(allocate(&alpha, 263), vec![133, 130]);
        assert_eq!(allocate(&[(0.0, 3.0), (5.0, 6.0)], 8), vec![6, 2]);
    }

    #[test]
    fn gate1_candidate_is_tallied() {
        let out = forward_candidate(0.3, PI / 3.0, &ForwardConfig::default()).unwrap();
        assert!(matches!(out, Outcome::Gate1Reject { .. }));
        let mut counts = GateCounts::default();
        counts.record(&out);
        assert_eq!(counts.gate1_rejects, 1);
        assert_eq!(counts.candidates, 1);
    }

    #[test]
    fn accepted_candidate_has_consistent_sample() {
        let out = forward_candidate(0.6, PI / 6.0, &ForwardConfig::default()).unwrap();
        let model = out.model().unwrap_or_else(|| panic!("{out:?}"));
        let s = Sample::from_model((0, 0), model);
        assert_eq!(s.positions.len(), 64);
        assert_eq!(s.velocities.len(), 64);
        for (k, &i) in crate::trajectory::WAYPOINT_INDICES.iter().enumerate() {
            assert_eq!(s.waypoints.position(k), s.positions[i]);
            assert_eq!(s.waypoints.velocity(k), s.velocities[i]);
        }
        assert!((s.alpha12.sin() * s.a23 - s.alpha23.sin() * s.a12).abs() < 1e-12);
    }

    #[test]
    fn invalid_grid_rejected() {
        assert!(generate(&GridConfig::with_counts(1, 5), &ForwardConfig::default(), 1).is_err());
    }
}
