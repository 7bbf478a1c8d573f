//! Evaluation metrics over a prediction set, with angular differences folded into (−π, π].

use std::f64::consts::{PI, TAU};

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::MetricsError;

/// Fold an angular difference into (−π, π]: `((δ + π) mod 2π) − π`, except that
/// the open end −π is sent to π.
pub fn wrap(delta: f64) -> f64 {
    let folded = (delta + PI).rem_euclid(TAU) - PI;
    if folded <= -PI {
        PI
    } else {
        folded
    }
}

/// What the metrics need from one prediction or ground-truth entry.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct EvalRecord {
    pub a12: f64,
    pub alpha12: f64,
    pub positions: Option<Vec<Vector3<f64>>>,
    pub velocities: Option<Vec<Vector3<f64>>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub a12_mae: f64,
    pub alpha12_mae: f64,
    /// Arithmetic mean of `a12_mae` and `alpha12_mae`.
    pub param_mae: f64,
    /// `None` when no prediction carries a trajectory.
    pub traj_mae: Option<f64>,
    pub vel_mae: Option<f64>,
    pub n: usize,
}

/// Fixed-order pairwise summation, so the result does not depend on how the
/// caller chunks the work.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    const LEAF: usize = 8;
    if values.len() <= LEAF {
        return values.iter().sum();
    }
    let mid = values.len() / 2;
    pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
}

fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        0.0
    } else {
        pairwise_sum(values) / values.len() as f64
    }
}

/// Mean absolute coordinate difference of two equally long point sequences.
fn sequence_mae(pred: &[Vector3<f64>], gt: &[Vector3<f64>]) -> f64 {
    let diffs: Vec<f64> = pred
        .iter()
        .zip(gt)
        .flat_map(|(p, g)| (0..3).map(move |k| (p[k] - g[k]).abs()))
        .collect();
    mean(&diffs)
}

fn paired_mae(
    preds: &[EvalRecord],
    gts: &[EvalRecord],
    field: impl Fn(&EvalRecord) -> Option<&Vec<Vector3<f64>>>,
) -> Result<Option<f64>, MetricsError> {
    let mut per_sample = Vec::new();
    for (i, (p, g)) in preds.iter().zip(gts).enumerate() {
        if let (Some(pv), Some(gv)) = (field(p), field(g)) {
            if pv.len() != gv.len() || pv.is_empty() {
                return Err(MetricsError::ShapeMismatch(i));
            }
            per_sample.push(sequence_mae(pv, gv));
        }
    }
    Ok((!per_sample.is_empty()).then(|| mean(&per_sample)))
}

/// Compute the five metrics over aligned prediction / ground-truth lists.
pub fn evaluate(preds: &[EvalRecord], gts: &[EvalRecord]) -> Result<MetricsReport, MetricsError> {
    if preds.len() != gts.len() {
        return Err(MetricsError::LengthMismatch {
            preds: preds.len(),
            gts: gts.len(),
        });
    }
    let a_err: Vec<f64> = preds.iter().zip(gts).map(|(p, g)| (p.a12 - g.a12).abs()).collect();
    let alpha_err: Vec<f64> = preds
        .iter()
        .zip(gts)
        .map(|(p, g)| wrap(p.alpha12 - g.alpha12).abs())
        .collect();
    let a12_mae = mean(&a_err);
    let alpha12_mae = mean(&alpha_err);
    Ok(MetricsReport {
        a12_mae,
        alpha12_mae,
        param_mae: (a12_mae + alpha12_mae) / 2.0,
        traj_mae: paired_mae(preds, gts, |r| r.positions.as_ref())?,
        vel_mae: paired_mae(preds, gts, |r| r.velocities.as_ref())?,
        n: preds.len(),
    })
}

/// 17 significant digits.
pub fn format_f64(v: f64) -> String {
    format!("{v:.16e}")
}

impl MetricsReport {
    /// Flat JSON with every real printed to 17 significant digits.
    pub fn to_json(&self) -> String {
        let opt = |v: Option<f64>| v.map_or_else(|| "null".to_string(), format_f64);
        format!(
            "{{\"a12_mae\":{},\"alpha12_mae\":{},\"param_mae\":{},\"traj_mae\":{},\"vel_mae\":{},\"n\":{}}}",
            format_f64(self.a12_mae),
            format_f64(self.alpha12_mae),
            format_f64(self.param_mae),
            opt(self.traj_mae),
            opt(self.vel_mae),
            self.n
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn rec(a12: f64, alpha12: f64) -> EvalRecord {
        EvalRecord {
            a12,
            alpha12,
            ..Default::default()
        }
    }

    #[test]
    fn wrap_examples() {
        assert_eq!(wrap(0.0), 0.0);
        assert!((wrap(0.1 - (TAU - 0.1)).abs() - 0.2).abs() < 1e-12);
        assert_eq!(wrap(PI), PI);
        assert_eq!(wrap(-PI), PI);
        assert!((wrap(3.0 * PI) - PI).abs() < 1e-12);
        assert!((wrap(TAU + 0.25) - 0.25).abs() < 1e-12);
    }

    #[test]
    fn identical_sets_give_zero_report() {
        let traj: Vec<_> = (0..64).map(|k| Vector3::new(k as f64, 1.0, -2.0)).collect();
        let r = EvalRecord {
            a12: 0.3,
            alpha12: 2.0,
            positions: Some(traj.clone()),
            velocities: Some(traj),
        };
        let report = evaluate(&[r.clone(), r.clone()], &[r.clone(), r]).unwrap();
        assert_eq!(report.a12_mae, 0.0);
        assert_eq!(report.alpha12_mae, 0.0);
        assert_eq!(report.param_mae, 0.0);
        assert_eq!(report.traj_mae, Some(0.0));
        assert_eq!(report.vel_mae, Some(0.0));
        assert_eq!(report.n, 2);
    }

    #[test]
    fn param_mae_is_plain_mean_of_the_two() {
        let gts = vec![rec(0.5, 1.0); 4];
        let preds = vec![rec(0.5 + 0.0063, 1.0 + 0.316); 4];
        let r = evaluate(&preds, &gts).unwrap();
        assert!((r.a12_mae - 0.0063).abs() < 1e-12);
        assert!((r.alpha12_mae - 0.316).abs() < 1e-12);
        assert!((r.param_mae - 0.16115).abs() < 1e-12);
        assert!((r.param_mae - 0.1612).abs() < 1e-4);
        assert_eq!(r.param_mae, (r.a12_mae + r.alpha12_mae) / 2.0);
    }

    #[test]
    fn alpha_mae_across_seam() {
        let r = evaluate(&[rec(0.0, 0.1)], &[rec(0.0, TAU - 0.1)]).unwrap();
        assert!((r.alpha12_mae - 0.2).abs() <= 1e-12);
    }

    #[test]
    fn constant_offset_trajectory() {
        let gt: Vec<_> = (0..64).map(|k| Vector3::new(0.01 * k as f64, -0.5, 0.25)).collect();
        let pred: Vec<_> = gt.iter().map(|p| p.add_scalar(0.1)).collect();
        let r = evaluate(
            &[EvalRecord {
                positions: Some(pred),
                ..rec(0.0, 0.0)
            }],
            &[EvalRecord {
                positions: Some(gt),
                ..rec(0.0, 0.0)
            }],
        )
        .unwrap();
        assert!((r.traj_mae.unwrap() - 0.1).abs() < 1e-12);
        assert_eq!(r.vel_mae, None);
    }

    #[test]
    fn mismatches_are_errors() {
        assert_eq!(
            evaluate(&[rec(0.0, 0.0)], &[]),
            Err(MetricsError::LengthMismatch { preds: 1, gts: 0 })
        );
        let short = EvalRecord {
            positions: Some(vec![Vector3::zeros(); 3]),
            ..rec(0.0, 0.0)
        };
        let long = EvalRecord {
            positions: Some(vec![Vector3::zeros(); 64]),
            ..rec(0.0, 0.0)
        };
        assert_eq!(evaluate(&[short], &[long]), Err(MetricsError::ShapeMismatch(0)));
    }

    #[test]
    fn json_has_seventeen_digits() {
        let r = MetricsReport {
            a12_mae: 0.1,
            alpha12_mae: 0.2,
            param_mae: 0.15000000000000002,
            traj_mae: None,
            vel_mae: Some(1.0 / 3.0),
            n: 3,
        };
        let s = r.to_json();
        assert!(s.contains("\"a12_mae\":1.0000000000000001e-1"), "{s}");
        assert!(s.contains("\"traj_mae\":null"));
        let v: serde_json::Value = serde_json::from_str(&s).unwrap();
        assert_eq!(v["param_mae"].as_f64().unwrap(), 0.15000000000000002);
        assert_eq!(v["vel_mae"].as_f64().unwrap(), 1.0 / 3.0);
    }

    #[test]
    fn pairwise_sum_matches_naive_on_integers() {
        let v: Vec<f64> = (0..1000).map(f64::from).collect();
        assert_eq!(pairwise_sum(&v), 499_500.0);
    }

    fn brute_wrap(delta: f64) -> f64 {
        (-4..=4)
            .map(|k| delta + TAU * k as f64)
            .min_by(|a, b| a.abs().total_cmp(&b.abs()))
            .unwrap()
    }

    proptest! {
        #[test]
        fn wrap_matches_k_shift_search(delta in -3.0 * TAU..3.0 * TAU) {
            let w = wrap(delta);
            prop_assert!(w > -PI && w <= PI);
            let b = brute_wrap(delta);
            prop_assert!((w.abs() - b.abs()).abs() < 1e-12);
            if (b.abs() - PI).abs() > 1e-9 {
                prop_assert!((w - b).abs() < 1e-12);
            }
        }

        #[test]
        fn alpha_mae_symmetric_and_periodic(x in 0.0..TAU, y in 0.0..TAU, k in -3i32..3) {
            let forward = evaluate(&[rec(0.0, x)], &[rec(0.0, y)]).unwrap().alpha12_mae;
            let back = evaluate(&[rec(0.0, y)], &[rec(0.0, x)]).unwrap().alpha12_mae;
            prop_assert!((forward - back).abs() < 1e-12);
            let shifted = evaluate(&[rec(0.0, x + TAU * k as f64)], &[rec(0.0, y)]).unwrap().alpha12_mae;
            prop_assert!((forward - shifted).abs() < 1e-9);
        }
    }
}
