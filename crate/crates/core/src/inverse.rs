//! Classical inverse design: recover `(a12, α12)` from three waypoints.
//!
//! The search space is the two free link parameters plus a nuisance phase, the
//! drive angle at which the first waypoint sits. A coarse grid of forward models
//! is scanned over a phase lattice, and the best `top_k` seeds are polished by a
//! coordinate-wise pattern search over `(a12, α12, phase)`.
//!
//! Models are compared in the normalized coordinates of the dataset: a candidate
//! with raw link length `a12` has its trajectory divided by `(1 − a12)·c99`.

use std::collections::HashMap;
use std::f64::consts::TAU;

use nalgebra::Vector3;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{axis_values, forward_candidate, ForwardConfig, GridConfig, Interval};
use crate::kinematics::canonical_angle;
use crate::normalize::{normalized_a12, REFERENCE_C99};
use crate::trajectory::{
    harmonic_basis, subsample_drive_angles, FilteredTrajectory, Waypoints, SUBSAMPLE_LEN, VELOCITY_STEP,
    WAYPOINT_COUNT, WAYPOINT_INDICES,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InverseConfig {
    pub coarse_na: usize,
    pub coarse_nalpha: usize,
    /// Drive-angle offsets tried per coarse candidate.
    pub phase_steps: usize,
    /// Poll iterations of the pattern search per seed.
    pub refine_iters: usize,
    pub use_velocity: bool,
    pub top_k: usize,
    /// Stage-2 constant of the dataset the waypoints come from.
    pub c99: f64,
    pub a12_intervals: Vec<Interval>,
    pub alpha12_intervals: Vec<Interval>,
    pub forward: ForwardConfig,
}

impl Default for InverseConfig {
    fn default() -> Self {
        Self {
            coarse_na: 48,
            coarse_nalpha: 96,
            phase_steps: 64,
            refine_iters: 100,
            use_velocity: false,
            top_k: 5,
            c99: REFERENCE_C99,
            a12_intervals: GridConfig::default_a12_intervals(),
            alpha12_intervals: GridConfig::default_alpha12_intervals(),
            forward: ForwardConfig::default(),
        }
    }
}

impl InverseConfig {
    pub fn validate(&self) -> Result<(), InverseError> {
        if [
            self.coarse_na,
            self.coarse_nalpha,
            self.phase_steps,
            self.refine_iters,
            self.top_k,
        ]
        .contains(&0)
        {
            return Err(InverseError::InvalidConfig("all counts must be at least 1".into()));
        }
        if !(self.c99 > 0.0 && self.c99.is_finite()) {
            return Err(InverseError::InvalidConfig(format!("c99 = {}", self.c99)));
        }
        Ok(())
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum InverseError {
    #[error("invalid inverse configuration: {0}")]
    InvalidConfig(String),
    #[error("no feasible candidate matches the waypoints ({candidates_evaluated} evaluated)")]
    NoSolution { candidates_evaluated: usize },
}

/// One refined seed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Finalist {
    pub a12_hat: f64,
    pub alpha12_hat: f64,
    pub phase_hat: f64,
    pub objective: f64,
    /// Objective of the coarse seed before refinement.
    pub seed_objective: f64,
    pub grid_index: [usize; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InverseResult {
    /// Normalized link length, same convention as the dataset.
    pub a12_hat: f64,
    pub alpha12_hat: f64,
    pub objective: f64,
    pub phase_hat: f64,
    /// Forward models built (coarse grid plus refinement).
    pub candidates_evaluated: usize,
    /// Raw link length (a12 + a23 = 1).
    pub a12_raw: f64,
    /// Every refined seed, best first.
    pub finalists: Vec<Finalist>,
}

/// A gate-passing candidate in normalized coordinates.
#[derive(Debug, Clone)]
pub struct CandidateCurve {
    pub a12_raw: f64,
    pub alpha12: f64,
    pub curve: FilteredTrajectory,
}

/// Forward model of `(a12_raw, α12)` scaled into normalized coordinates, or `None`
/// when the candidate fails any gate.
pub fn candidate_curve(a12_raw: f64, alpha12: f64, c99: f64, forward: &ForwardConfig) -> Option<CandidateCurve> {
    if !(a12_raw > 0.0 && a12_raw < 1.0 && alpha12 > 0.0 && alpha12 < TAU) {
        return None;
    }
    let outcome = forward_candidate(a12_raw, alpha12, forward).ok()?;
    let model = outcome.model()?;
    let factor = 1.0 / (model.params.a23() * c99);
    Some(CandidateCurve {
        a12_raw,
        alpha12,
        curve: model.filtered.scaled(factor),
    })
}

/// Drive-angle offsets of the waypoints (and their central-difference neighbors)
/// relative to the first waypoint.
#[derive(Debug, Clone)]
struct WaypointAngles {
    at: [f64; WAYPOINT_COUNT],
    before: [f64; WAYPOINT_COUNT],
    after: [f64; WAYPOINT_COUNT],
}

impl WaypointAngles {
    fn new(frames: usize) -> Self {
        let sub = subsample_drive_angles(frames);
        let at = WAYPOINT_INDICES.map(|i| sub[i]);
        let before = WAYPOINT_INDICES.map(|i| {
            if i == 0 {
                sub[SUBSAMPLE_LEN - 1] - TAU
            } else {
                sub[i - 1]
            }
        });
        let after = WAYPOINT_INDICES.map(|i| if i + 1 == SUBSAMPLE_LEN { TAU } else { sub[i + 1] });
        Self { at, before, after }
    }
}

fn direction_penalty(model_v: &Vector3<f64>, target_v: &Vector3<f64>) -> f64 {
    let denom = model_v.norm() * target_v.norm();
    if denom > 0.0 {
        (1.0 - model_v.dot(target_v) / denom).max(0.0)
    } else {
        1.0
    }
}

fn objective_at(
    curve: &FilteredTrajectory,
    phase: f64,
    wps: &Waypoints,
    angles: &WaypointAngles,
    use_velocity: bool,
) -> f64 {
    let mut total = 0.0;
    for k in 0..WAYPOINT_COUNT {
        total += (curve.evaluate(phase + angles.at[k]) - wps.position(k)).norm_squared();
        if use_velocity {
            let v = (curve.evaluate(phase + angles.after[k]) - curve.evaluate(phase + angles.before[k]))
                / (2.0 * VELOCITY_STEP);
            total += direction_penalty(&v, &wps.velocity(k));
        }
    }
    total
}

/// Squared waypoint misfit of the candidate `(a12_raw, α12)` at `phase`, in the
/// normalized coordinates fixed by `cfg.c99`. Infeasible candidates score `+∞`.
pub fn waypoint_objective(a12_raw: f64, alpha12: f64, phase: f64, wps: &Waypoints, cfg: &InverseConfig) -> f64 {
    match candidate_curve(a12_raw, alpha12, cfg.c99, &cfg.forward) {
        Some(c) => objective_at(
            &c.curve,
            phase,
            wps,
            &WaypointAngles::new(cfg.forward.solver.frames),
            cfg.use_velocity,
        ),
        None => f64::INFINITY,
    }
}

/// The trajectory of a candidate resampled on the 64 subsample drive angles,
/// shifted by `phase`.
pub fn trajectory_at_phase(curve: &FilteredTrajectory, phase: f64) -> Vec<Vector3<f64>> {
    subsample_drive_angles(curve.len())
        .iter()
        .map(|a| curve.evaluate(phase + a))
        .collect()
}

struct PhaseBasis {
    at: Vec<(f64, f64)>,
    before: Vec<(f64, f64)>,
    after: Vec<(f64, f64)>,
}

struct BankEntry {
    grid_index: (usize, usize),
    candidate: Option<CandidateCurve>,
}

/// Coarse grid of forward models, reusable across any number of solves.
pub struct InverseDesigner {
    cfg: InverseConfig,
    bank: Vec<BankEntry>,
    a_step: f64,
    alpha_step: f64,
}

fn typical_spacing(intervals: &[Interval], count: usize) -> f64 {
    let total: f64 = intervals.iter().map(|(lo, hi)| hi - lo).sum();
    (total / count.max(2) as f64).max(1e-6)
}

impl InverseDesigner {
    pub fn new(cfg: InverseConfig) -> Result<Self, InverseError> {
        cfg.validate()?;
        let a_values = axis_values(&cfg.a12_intervals, cfg.coarse_na);
        let alpha_values = axis_values(&cfg.alpha12_intervals, cfg.coarse_nalpha);
        let cells: Vec<(usize, usize, f64, f64)> = a_values
            .iter()
            .enumerate()
            .flat_map(|(i, &a)| alpha_values.iter().enumerate().map(move |(j, &al)| (i, j, a, al)))
            .collect();
        let bank = cells
            .par_iter()
            .map(|&(i, j, a, al)| BankEntry {
                grid_index: (i, j),
                candidate: candidate_curve(a, al, cfg.c99, &cfg.forward),
            })
            .collect();
        Ok(Self {
            a_step: typical_spacing(&cfg.a12_intervals, cfg.coarse_na),
            alpha_step: typical_spacing(&cfg.alpha12_intervals, cfg.coarse_nalpha),
            cfg,
            bank,
        })
    }

    pub fn config(&self) -> &InverseConfig {
        &self.cfg
    }

    pub fn feasible_candidates(&self) -> usize {
        self.bank.iter().filter(|e| e.candidate.is_some()).count()
    }

    /// Best phase on the lattice for every feasible coarse candidate, sorted by
    /// (objective, grid index).
    fn coarse_scan(&self, wps: &Waypoints, angles: &WaypointAngles) -> Vec<(f64, f64, usize)> {
        let fc = self.cfg.forward.fc;
        let steps = self.cfg.phase_steps;
        // basis[j][k]: harmonics at phase_j + offset_k (and its two neighbours), shared by every candidate
        let basis: Vec<[PhaseBasis; WAYPOINT_COUNT]> = (0..steps)
            .map(|j| {
                let phase = TAU * j as f64 / steps as f64;
                std::array::from_fn(|k| PhaseBasis {
                    at: harmonic_basis(phase + angles.at[k], fc),
                    before: harmonic_basis(phase + angles.before[k], fc),
                    after: harmonic_basis(phase + angles.after[k], fc),
                })
            })
            .collect();

        let mut scored: Vec<(f64, f64, usize)> = self
            .bank
            .par_iter()
            .enumerate()
            .filter_map(|(idx, entry)| {
                let c = entry.candidate.as_ref()?;
                let mut best = (f64::INFINITY, 0.0);
                for (j, b) in basis.iter().enumerate() {
                    let phase = TAU * j as f64 / steps as f64;
                    let mut value = 0.0;
                    for (k, bk) in b.iter().enumerate() {
                        value += (c.curve.evaluate_with(&bk.at) - wps.position(k)).norm_squared();
                        if self.cfg.use_velocity {
                            let v = (c.curve.evaluate_with(&bk.after) - c.curve.evaluate_with(&bk.before))
                                / (2.0 * VELOCITY_STEP);
                            value += direction_penalty(&v, &wps.velocity(k));
                        }
                    }
                    if value < best.0 {
                        best = (value, phase);
                    }
                }
                best.0.is_finite().then_some((best.0, best.1, idx))
            })
            .collect();
        scored.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.2.cmp(&b.2)));
        scored
    }

    /// Pattern search from one seed. Returns the finalist and the number of forward
    /// models built.
    fn refine(
        &self,
        seed: &CandidateCurve,
        phase: f64,
        seed_objective: f64,
        wps: &Waypoints,
        angles: &WaypointAngles,
    ) -> (Finalist, CandidateCurve, usize) {
        let cfg = &self.cfg;
        let mut cache: HashMap<(u64, u64), Option<CandidateCurve>> = HashMap::new();
        cache.insert((seed.a12_raw.to_bits(), seed.alpha12.to_bits()), Some(seed.clone()));
        let mut built = 0usize;

        let mut x = [seed.a12_raw, seed.alpha12, phase];
        let mut fx = seed_objective;
        let mut steps = [
            0.5 * self.a_step,
            0.5 * self.alpha_step,
            0.5 * TAU / cfg.phase_steps as f64,
        ];
        let floor = [1e-9, 1e-9, 1e-9];

        for _ in 0..cfg.refine_iters {
            let mut improved = false;
            for dim in 0..3 {
                for sign in [1.0, -1.0] {
                    let mut y = x;
                    y[dim] += sign * steps[dim];
                    if dim > 0 {
                        y[dim] = canonical_angle(y[dim]);
                    }
                    let key = (y[0].to_bits(), y[1].to_bits());
                    let entry = cache.entry(key).or_insert_with(|| {
                        built += 1;
                        candidate_curve(y[0], y[1], cfg.c99, &cfg.forward)
                    });
                    let fy = match entry {
                        Some(c) => objective_at(&c.curve, y[2], wps, angles, cfg.use_velocity),
                        None => f64::INFINITY,
                    };
                    if fy < fx {
                        x = y;
                        fx = fy;
                        improved = true;
                        break;
                    }
                }
            }
            if !improved {
                for (s, f) in steps.iter_mut().zip(floor) {
                    *s = (*s * 0.5).max(f);
                }
                if steps.iter().zip(floor).all(|(s, f)| *s <= f) {
                    break;
                }
            }
        }

        let best = cache
            .remove(&(x[0].to_bits(), x[1].to_bits()))
            .flatten()
            .expect("accepted points are feasible");
        (
            Finalist {
                a12_hat: normalized_a12(x[0], cfg.c99),
                alpha12_hat: x[1],
                phase_hat: canonical_angle(x[2]),
                objective: fx,
                seed_objective,
                grid_index: [0, 0],
            },
            best,
            built,
        )
    }

    /// Recover the link parameters behind `wps`.
    pub fn solve(&self, wps: &Waypoints) -> Result<InverseResult, InverseError> {
        self.solve_with_curve(wps).map(|(r, _)| r)
    }

    /// Like [`InverseDesigner::solve`], also returning the winning forward model.
    pub fn solve_with_curve(&self, wps: &Waypoints) -> Result<(InverseResult, CandidateCurve), InverseError> {
        let coarse_built = self.bank.len();
        if !wps.is_finite() {
            return Err(InverseError::NoSolution {
                candidates_evaluated: 0,
            });
        }
        let angles = WaypointAngles::new(self.cfg.forward.solver.frames);
        let scored = self.coarse_scan(wps, &angles);
        if scored.is_empty() {
            return Err(InverseError::NoSolution {
                candidates_evaluated: coarse_built,
            });
        }

        let seeds: Vec<_> = scored.iter().take(self.cfg.top_k).collect();
        let refined: Vec<(Finalist, CandidateCurve, usize)> = seeds
            .par_iter()
            .map(|&&(objective, phase, idx)| {
                let entry = &self.bank[idx];
                let seed = entry.candidate.as_ref().expect("scored entries are feasible");
                let (mut fin, curve, built) = self.refine(seed, phase, objective, wps, &angles);
                fin.grid_index = [entry.grid_index.0, entry.grid_index.1];
                (fin, curve, built)
            })
            .collect();

        let evaluated = coarse_built + refined.iter().map(|r| r.2).sum::<usize>();
        let mut order: Vec<usize> = (0..refined.len()).collect();
        order.sort_by(|&a, &b| {
            refined[a]
                .0
                .objective
                .total_cmp(&refined[b].0.objective)
                .then(refined[a].0.grid_index.cmp(&refined[b].0.grid_index))
        });
        let finalists: Vec<Finalist> = order.iter().map(|&i| refined[i].0).collect();
        let (best, curve, _) = refined.into_iter().nth(order[0]).unwrap();
        Ok((
            InverseResult {
                a12_hat: best.a12_hat,
                alpha12_hat: best.alpha12_hat,
                objective: best.objective,
                phase_hat: best.phase_hat,
                candidates_evaluated: evaluated,
                a12_raw: curve.a12_raw,
                finalists,
            },
            curve,
        ))
    }
}

/// One-shot solve: builds the coarse bank, then solves.
pub fn solve_inverse(wps: &Waypoints, cfg: &InverseConfig) -> Result<InverseResult, InverseError> {
    InverseDesigner::new(cfg.clone())?.solve(wps)
}

/// Waypoints of a candidate whose first waypoint sits at drive angle `phase`.
pub fn waypoints_at_phase(curve: &FilteredTrajectory, phase: f64) -> Waypoints {
    let positions = trajectory_at_phase(curve, phase);
    let traj = crate::trajectory::ProcessedTrajectory::from_positions(positions);
    crate::trajectory::extract_waypoints(&traj)
}
