//! Two-stage coordinate normalization.
//!
//! Stage 1 rescales each sample so that `a23 = 1`. Stage 2 divides lengths,
//! positions and velocities by `c99`, the 99th percentile of per-point Euclidean
//! norms over the training split. Twists are never touched.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{ForwardConfig, GateReport, GridConfig, Sample};
use crate::error::NormalizeError;
use crate::trajectory::{Waypoints, VELOCITY_STEP};

/// Percentile constant reported for the full-scale training split.
pub const REFERENCE_C99: f64 = 29.44;
pub const TRAIN_FRACTION: f64 = 0.8;

fn scale_sample(sample: &Sample, factor: f64, scale_a23: bool) -> Sample {
    let mut wps = sample.waypoints.0;
    for w in wps.iter_mut() {
        for v in w.iter_mut().take(6) {
            *v *= factor;
        }
    }
    Sample {
        a12: sample.a12 * factor,
        a23: if scale_a23 { sample.a23 * factor } else { sample.a23 },
        positions: sample.positions.iter().map(|p| p * factor).collect(),
        velocities: sample.velocities.iter().map(|v| v * factor).collect(),
        waypoints: Waypoints(wps),
        ..sample.clone()
    }
}

/// Multiply lengths, positions and velocities by `1 / a23`, leaving `a23 = 1.0` exactly.
pub fn stage1_scale(sample: &Sample) -> Result<Sample, NormalizeError> {
    if !(sample.a23 > 0.0 && sample.a23.is_finite()) {
        return Err(NormalizeError::InvalidSample(sample.a23));
    }
    let kappa = 1.0 / sample.a23;
    let mut out = scale_sample(sample, kappa, false);
    out.a23 = 1.0;
    Ok(out)
}

/// Nearest-rank percentile: the smallest value with at least `p`% of the data at or below it.
pub fn nearest_rank_percentile(values: &[f64], p: f64) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let rank = ((p / 100.0) * sorted.len() as f64).ceil() as usize;
    Some(sorted[rank.clamp(1, sorted.len()) - 1])
}

/// 99th percentile of the per-point Euclidean norms over every trajectory point of
/// the (Stage-1 scaled) training samples.
pub fn compute_c99(training: &[Sample]) -> Result<f64, NormalizeError> {
    let norms: Vec<f64> = training
        .iter()
        .flat_map(|s| s.positions.iter().map(|p| p.norm()))
        .collect();
    nearest_rank_percentile(&norms, 99.0).ok_or(NormalizeError::EmptySplit)
}

/// Divide `a12`, positions and velocities by `c99`. `a23` stays at its Stage-1 value.
pub fn stage2_scale(samples: &[Sample], c99: f64) -> Result<Vec<Sample>, NormalizeError> {
    if !(c99 > 0.0 && c99.is_finite()) {
        return Err(NormalizeError::InvalidScale(c99));
    }
    Ok(samples.iter().map(|s| scale_sample(s, 1.0 / c99, false)).collect())
}

/// `a12` as it appears in a fully normalized dataset, from the raw value (a12 + a23 = 1).
pub fn normalized_a12(raw_a12: f64, c99: f64) -> f64 {
    raw_a12 / (1.0 - raw_a12) / c99
}

/// Inverse of [`normalized_a12`].
pub fn raw_a12(normalized: f64, c99: f64) -> f64 {
    let ratio = normalized * c99;
    ratio / (1.0 + ratio)
}

/// Seeded 80/20 shuffle split. Returns (train, test) index lists, each sorted.
pub fn split_indices(n: usize, seed: u64, train_fraction: f64) -> (Vec<usize>, Vec<usize>) {
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);
    let n_train = ((n as f64) * train_fraction).round() as usize;
    let mut train = order[..n_train].to_vec();
    let mut test = order[n_train..].to_vec();
    train.sort_unstable();
    test.sort_unstable();
    (train, test)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum C99Choice {
    Auto,
    Fixed(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitInfo {
    pub seed: u64,
    pub train_fraction: f64,
    pub test_fraction: f64,
    /// Grid indices of the training samples.
    pub train: Vec<(usize, usize)>,
    pub test: Vec<(usize, usize)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizationInfo {
    pub stage1: bool,
    pub stage2: bool,
    pub c99: f64,
    /// "auto" when computed from the training split, "fixed" when supplied.
    pub c99_source: String,
    pub percentile_method: String,
    pub norm: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationInfo {
    pub grid: GridConfig,
    pub forward: ForwardConfig,
    pub gate3_rule: String,
    pub twist_branch_policy: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VelocityConvention {
    pub domain: String,
    pub step: f64,
    pub step_expr: String,
}

impl Default for VelocityConvention {
    fn default() -> Self {
        Self {
            domain: "64-frame subsample, periodic central differences".into(),
            step: VELOCITY_STEP,
            step_expr: "2*pi/64".into(),
        }
    }
}

/// Everything needed to reproduce a dataset file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub generation: GenerationInfo,
    pub gate_report: GateReport,
    pub velocity: VelocityConvention,
    pub normalization: Option<NormalizationInfo>,
    pub split: Option<SplitInfo>,
    pub samples: usize,
}

impl DatasetManifest {
    pub fn for_generation(grid: &GridConfig, forward: &ForwardConfig, report: GateReport, samples: usize) -> Self {
        Self {
            generation: GenerationInfo {
                grid: grid.clone(),
                forward: *forward,
                gate3_rule:
                    "reject iff max_k |d_(k+1) - d_k| > 3*std(d), d_k = |p_(k+1) - p_k| with wrap; floor 1e-9*mean(d)"
                        .into(),
                twist_branch_policy: "principal asin branch; supplementary branch retried once on gate-2 failure"
                    .into(),
            },
            gate_report: report,
            velocity: VelocityConvention::default(),
            normalization: None,
            split: None,
            samples,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedDataset {
    pub train: Vec<Sample>,
    pub test: Vec<Sample>,
    pub c99: f64,
    pub split: SplitInfo,
    pub c99_source: C99Choice,
}

impl NormalizedDataset {
    pub fn info(&self) -> NormalizationInfo {
        NormalizationInfo {
            stage1: true,
            stage2: true,
            c99: self.c99,
            c99_source: match self.c99_source {
                C99Choice::Auto => "auto".into(),
                C99Choice::Fixed(_) => "fixed".into(),
            },
            percentile_method: "nearest_rank".into(),
            norm: "per_point_euclidean".into(),
        }
    }
}

/// Split, Stage-1 scale every sample, pick `c99` and Stage-2 scale both splits.
pub fn normalize_dataset(samples: &[Sample], seed: u64, c99: C99Choice) -> Result<NormalizedDataset, NormalizeError> {
    let (train_idx, test_idx) = split_indices(samples.len(), seed, TRAIN_FRACTION);
    let stage1 = |idx: &[usize]| -> Result<Vec<Sample>, NormalizeError> {
        idx.iter().map(|&i| stage1_scale(&samples[i])).collect()
    };
    let train1 = stage1(&train_idx)?;
    let test1 = stage1(&test_idx)?;
    let c = match c99 {
        C99Choice::Auto => compute_c99(&train1)?,
        C99Choice::Fixed(v) => v,
    };
    let split = SplitInfo {
        seed,
        train_fraction: TRAIN_FRACTION,
        test_fraction: 1.0 - TRAIN_FRACTION,
        train: train_idx.iter().map(|&i| samples[i].grid_index).collect(),
        test: test_idx.iter().map(|&i| samples[i].grid_index).collect(),
    };
    Ok(NormalizedDataset {
        train: stage2_scale(&train1, c)?,
        test: stage2_scale(&test1, c)?,
        c99: c,
        split,
        c99_source: c99,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trajectory::central_diff_velocity;
    use nalgebra::Vector3;

    fn sample(a12: f64) -> Sample {
        let positions: Vec<_> = (0..64)
            .map(|k| {
                let t = k as f64 * VELOCITY_STEP;
                Vector3::new(t.cos() + 0.2, (2.0 * t).sin(), 0.3 * t.sin())
            })
            .collect();
        let velocities = central_diff_velocity(&positions);
        let traj = crate::trajectory::ProcessedTrajectory::from_positions(positions.clone());
        Sample {
            grid_index: (1, 2),
            a12,
            alpha12: 0.7,
            a23: 1.0 - a12,
            alpha23: 0.4,
            converged_fraction: 1.0,
            positions,
            velocities,
            waypoints: crate::trajectory::extract_waypoints(&traj),
        }
    }

    #[test]
    fn stage1_examples() {
        let s = stage1_scale(&sample(0.5)).unwrap();
        assert_eq!(s.a12, 1.0);
        assert_eq!(s.a23, 1.0);

        let raw = sample(0.6);
        let s = stage1_scale(&raw).unwrap();
        assert!((s.a12 - 1.5).abs() < 1e-12);
        assert_eq!(s.a23, 1.0);
        assert_eq!(s.alpha12, raw.alpha12);
        assert_eq!(s.alpha23, raw.alpha23);
        assert!((s.positions[3] - raw.positions[3] * 2.5).norm() < 1e-12);
    }

    #[test]
    fn stage1_preserves_distance_ratios() {
        let raw = sample(0.3);
        let s = stage1_scale(&raw).unwrap();
        let d = |p: &[Vector3<f64>], i: usize, j: usize| (p[i] - p[j]).norm();
        let before = d(&raw.positions, 0, 10) / d(&raw.positions, 5, 40);
        let after = d(&s.positions, 0, 10) / d(&s.positions, 5, 40);
        assert!((before - after).abs() < 1e-12);
    }

    #[test]
    fn stage1_is_idempotent() {
        let once = stage1_scale(&sample(0.7)).unwrap();
        let twice = stage1_scale(&once).unwrap();
        assert_eq!(once, twice);
    }

    #[test]
    fn stage1_rejects_bad_a23() {
        let mut s = sample(0.5);
        s.a23 = 0.0;
        assert_eq!(stage1_scale(&s), Err(NormalizeError::InvalidSample(0.0)));
    }

    #[test]
    fn percentile_examples() {
        assert_eq!(nearest_rank_percentile(&[2.0; 17], 99.0), Some(2.0));
        let ramp: Vec<f64> = (1..=100).map(f64::from).collect();
        assert_eq!(nearest_rank_percentile(&ramp, 99.0), Some(99.0));
        let mut shuffled = ramp.clone();
        shuffled.reverse();
        assert_eq!(nearest_rank_percentile(&shuffled, 99.0), Some(99.0));
        assert_eq!(nearest_rank_percentile(&[], 99.0), None);
        assert_eq!(compute_c99(&[]), Err(NormalizeError::EmptySplit));
    }

    #[test]
    fn stage2_arithmetic() {
        let s1 = stage1_scale(&sample(0.98)).unwrap();
        assert!((s1.a12 - 49.0).abs() < 1e-9);
        let s2 = stage2_scale(&[s1], REFERENCE_C99).unwrap();
        assert!((s2[0].a12 - 1.664).abs() < 1e-3);
        assert!((s2[0].a12 - 49.0 / 29.44).abs() < 1e-9);
        assert_eq!(s2[0].a23, 1.0);

        let s2 = stage2_scale(&[stage1_scale(&sample(0.6)).unwrap()], REFERENCE_C99).unwrap();
        assert!((s2[0].a12 - 0.05095).abs() < 1e-5);
        assert!((normalized_a12(0.6, REFERENCE_C99) - s2[0].a12).abs() < 1e-15);
        assert!((raw_a12(s2[0].a12, REFERENCE_C99) - 0.6).abs() < 1e-12);

        assert!(stage2_scale(&[], 0.0).is_err());
    }

    #[test]
    fn normalized_range_fits_sigmoid_headroom() {
        for i in 0..=96 {
            let raw = 0.02 + 0.01 * i as f64;
            let v = normalized_a12(raw, REFERENCE_C99);
            assert!(v > 0.0 && v < 1.6645, "{raw} -> {v}");
        }
    }

    #[test]
    fn velocities_stay_consistent_with_positions() {
        let s1 = stage1_scale(&sample(0.35)).unwrap();
        let s2 = &stage2_scale(&[s1], 3.7).unwrap()[0];
        let recomputed = central_diff_velocity(&s2.positions);
        for (a, b) in recomputed.iter().zip(&s2.velocities) {
            assert!((a - b).abs().max() <= 1e-12);
        }
        for (k, &i) in crate::trajectory::WAYPOINT_INDICES.iter().enumerate() {
            assert!((s2.waypoints.position(k) - s2.positions[i]).norm() < 1e-15);
            assert!((s2.waypoints.velocity(k) - s2.velocities[i]).norm() < 1e-15);
        }
    }

    #[test]
    fn auto_c99_bounds_ninety_nine_percent() {
        let samples: Vec<_> = (0..20)
            .map(|i| {
                let mut s = sample(0.3 + 0.03 * i as f64);
                s.grid_index = (i, 0);
                s
            })
            .collect();
        let ds = normalize_dataset(&samples, 7, C99Choice::Auto).unwrap();
        assert_eq!(ds.train.len(), 16);
        assert_eq!(ds.test.len(), 4);
        let coords: Vec<f64> = ds
            .train
            .iter()
            .flat_map(|s| s.positions.iter().flat_map(|p| p.iter().copied()))
            .collect();
        let inside = coords.iter().filter(|c| c.abs() <= 1.0).count();
        assert!(inside as f64 >= 0.99 * coords.len() as f64);
        let norms_ok = ds
            .train
            .iter()
            .flat_map(|s| s.positions.iter())
            .filter(|p| p.norm() <= 1.0)
            .count();
        assert!(norms_ok as f64 >= 0.99 * (ds.train.len() * 64) as f64);
    }

    #[test]
    fn split_is_seeded_and_complete() {
        let (a, b) = split_indices(101, 3, 0.8);
        assert_eq!(a.len(), 81);
        assert_eq!(b.len(), 20);
        let mut all: Vec<_> = a.iter().chain(&b).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..101).collect::<Vec<_>>());
        assert_eq!(split_indices(101, 3, 0.8), (a.clone(), b));
        assert_ne!(split_indices(101, 4, 0.8).0, a);
    }
}
