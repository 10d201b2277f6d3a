//! Accuracy aggregation, cue-conflict scoring and error consistency.

mod records;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use records::{parse_records_csv, read_records_csv, records_to_csv, write_records_csv, PredictionRecord, RECORD_HEADER};

/// Fraction of records whose prediction equals the shape label.
pub fn accuracy(records: &[PredictionRecord]) -> Result<f64> {
    if records.is_empty() {
        return Err(Error::param("accuracy of an empty record set"));
    }
    let hits = records.iter().filter(|r| r.predicted == r.shape_label).count();
    Ok(hits as f64 / records.len() as f64)
}

/// Mean model accuracy over conditions whose human accuracy exceeds `threshold`.
pub fn condition_filtered_mean(
    model: &BTreeMap<String, f64>,
    human: &BTreeMap<String, f64>,
    threshold: f64,
) -> Result<f64> {
    if !model.keys().eq(human.keys()) {
        return Err(Error::param("model and human accuracies must cover the same conditions"));
    }
    let kept: Vec<f64> = model
        .iter()
        .filter(|(k, _)| human[*k] > threshold)
        .map(|(_, &v)| v)
        .collect();
    if kept.is_empty() {
        return Err(Error::NoSurvivingConditions { threshold });
    }
    Ok(kept.iter().sum::<f64>() / kept.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShapeBias {
    /// Fraction predicting the shape label (the cue-conflict score).
    pub shape_match_acc: f64,
    pub texture_match_acc: f64,
    /// `shape / (shape + texture)` over decided records.
    pub shape_bias_ratio: f64,
}

pub fn shape_bias(records: &[PredictionRecord]) -> Result<ShapeBias> {
    if records.is_empty() {
        return Err(Error::param("shape bias of an empty record set"));
    }
    let (mut shape, mut texture) = (0usize, 0usize);
    for r in records {
        let t = r
            .texture_label
            .ok_or_else(|| Error::param(format!("record {} has no texture label", r.sample_id)))?;
        if t == r.shape_label {
            return Err(Error::param(format!("record {} is not a cue conflict", r.sample_id)));
        }
        if r.predicted == r.shape_label {
            shape += 1;
        } else if r.predicted == t {
            texture += 1;
        }
    }
    if shape + texture == 0 {
        return Err(Error::NoCueDecision);
    }
    let n = records.len() as f64;
    Ok(ShapeBias {
        shape_match_acc: shape as f64 / n,
        texture_match_acc: texture as f64 / n,
        shape_bias_ratio: shape as f64 / (shape + texture) as f64,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyResult {
    /// Fraction of samples where both are right or both are wrong.
    pub observed_equal: f64,
    /// Fraction of samples where both are right.
    pub both_correct: f64,
    /// Agreement expected from the two accuracies alone.
    pub expected_equal: f64,
    pub kappa: f64,
}

/// Chance-corrected agreement in correctness between two predictors.
pub fn consistency(a: &[bool], b: &[bool]) -> Result<ConsistencyResult> {
    if a.len() != b.len() {
        return Err(Error::param(format!("correctness sequences differ in length: {} vs {}", a.len(), b.len())));
    }
    if a.is_empty() {
        return Err(Error::param("consistency needs at least one sample"));
    }
    let n = a.len() as f64;
    let equal = a.iter().zip(b).filter(|(x, y)| x == y).count() as f64 / n;
    let both = a.iter().zip(b).filter(|(x, y)| **x && **y).count() as f64 / n;
    let pa = a.iter().filter(|&&x| x).count() as f64 / n;
    let pb = b.iter().filter(|&&x| x).count() as f64 / n;
    let expected = pa * pb + (1.0 - pa) * (1.0 - pb);
    if expected >= 1.0 {
        return Err(Error::DegenerateAgreement);
    }
    Ok(ConsistencyResult {
        observed_equal: equal,
        both_correct: both,
        expected_equal: expected,
        kappa: (equal - expected) / (1.0 - expected),
    })
}

/// [`consistency`] of two record sets covering the same samples in the same order.
pub fn consistency_of_records(a: &[PredictionRecord], b: &[PredictionRecord]) -> Result<ConsistencyResult> {
    if a.len() != b.len() {
        return Err(Error::param(format!("record sets differ in length: {} vs {}", a.len(), b.len())));
    }
    if let Some((x, _)) = a.iter().zip(b).find(|(x, y)| x.sample_id != y.sample_id || x.condition != y.condition) {
        return Err(Error::param(format!("record sets are not aligned at sample {}", x.sample_id)));
    }
    let ca: Vec<bool> = a.iter().map(PredictionRecord::is_correct).collect();
    let cb: Vec<bool> = b.iter().map(PredictionRecord::is_correct).collect();
    consistency(&ca, &cb)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::RandomStream;

    fn rec(id: usize, predicted: usize, shape: usize, texture: Option<usize>) -> PredictionRecord {
        PredictionRecord {
            sample_id: id,
            predicted,
            shape_label: shape,
            texture_label: texture,
            condition: None,
        }
    }

    #[test]
    fn accuracy_examples() {
        let all: Vec<_> = (0..4).map(|i| rec(i, 1, 1, None)).collect();
        assert_eq!(accuracy(&all).unwrap(), 1.0);
        let half = vec![rec(0, 1, 1, None), rec(1, 0, 1, None), rec(2, 2, 2, None), rec(3, 0, 2, None)];
        assert_eq!(accuracy(&half).unwrap(), 0.5);
        assert!(accuracy(&[]).is_err());
    }

    fn maps(pairs: &[(&str, f64, f64)]) -> (BTreeMap<String, f64>, BTreeMap<String, f64>) {
        let m = pairs.iter().map(|(k, v, _)| (k.to_string(), *v)).collect();
        let h = pairs.iter().map(|(k, _, v)| (k.to_string(), *v)).collect();
        (m, h)
    }

    #[test]
    fn filtered_mean_examples() {
        let (m, h) = maps(&[("a", 0.5, 0.1), ("b", 0.7, 0.9)]);
        assert_eq!(condition_filtered_mean(&m, &h, 0.2).unwrap(), 0.7);
        let (m, h) = maps(&[("a", 0.5, 0.3), ("b", 0.7, 0.9)]);
        assert!((condition_filtered_mean(&m, &h, 0.2).unwrap() - 0.6).abs() < 1e-15);
        assert!(matches!(
            condition_filtered_mean(&m, &h, 1.0),
            Err(Error::NoSurvivingConditions { .. })
        ));
        // exactly at the threshold is dropped
        let (m, h) = maps(&[("a", 0.5, 0.2), ("b", 0.7, 0.9)]);
        assert_eq!(condition_filtered_mean(&m, &h, 0.2).unwrap(), 0.7);
        let (m2, _) = maps(&[("a", 0.5, 0.3)]);
        assert!(condition_filtered_mean(&m2, &h, 0.2).is_err());
    }

    #[test]
    fn shape_bias_examples() {
        let mut r: Vec<_> = (0..6).map(|i| rec(i, 1, 1, Some(2))).collect();
        r.extend((6..8).map(|i| rec(i, 2, 1, Some(2))));
        r.extend((8..10).map(|i| rec(i, 5, 1, Some(2))));
        let b = shape_bias(&r).unwrap();
        assert_eq!(b.shape_bias_ratio, 0.75);
        assert_eq!(b.shape_match_acc, 0.6);
        assert_eq!(b.texture_match_acc, 0.2);
        let all_shape: Vec<_> = (0..3).map(|i| rec(i, 0, 0, Some(1))).collect();
        assert_eq!(shape_bias(&all_shape).unwrap().shape_bias_ratio, 1.0);
        let undecided = vec![rec(0, 3, 0, Some(1))];
        assert!(matches!(shape_bias(&undecided), Err(Error::NoCueDecision)));
        assert!(shape_bias(&[rec(0, 0, 0, None)]).is_err());
        assert!(shape_bias(&[rec(0, 0, 1, Some(1))]).is_err());
    }

    #[test]
    fn kappa_worked_example() {
        // p_a = 0.8, p_b = 0.6, observed agreement 0.7 over 20 samples:
        // 11 both right, 5 only a, 1 only b, 3 neither
        let mut a = vec![true; 16];
        a.extend([false; 4]);
        let mut b = vec![true; 11];
        b.extend([false; 5]);
        b.extend([true, false, false, false]);
        let c = consistency(&a, &b).unwrap();
        assert!((c.observed_equal - 0.7).abs() < 1e-15);
        assert!((c.expected_equal - 0.56).abs() < 1e-15);
        assert!((c.kappa - 0.14 / 0.44).abs() < 1e-9);
        assert!((c.kappa - 0.31818).abs() < 1e-5);
        assert!((c.both_correct - 0.55).abs() < 1e-15);
    }

    #[test]
    fn kappa_identity_and_errors() {
        let a = [true, false, true, true];
        let c = consistency(&a, &a).unwrap();
        assert_eq!((c.observed_equal, c.kappa), (1.0, 1.0));
        assert!(matches!(consistency(&[true; 3], &[true; 3]), Err(Error::DegenerateAgreement)));
        assert!(matches!(consistency(&[false; 3], &[false; 3]), Err(Error::DegenerateAgreement)));
        assert!(consistency(&[true], &[true, false]).is_err());
    }

    #[test]
    fn independent_predictors_have_near_zero_kappa() {
        let mut rs = RandomStream::new(17);
        let n = 100_000;
        let a: Vec<bool> = (0..n).map(|_| rs.unit() < 0.7).collect();
        let b: Vec<bool> = (0..n).map(|_| rs.unit() < 0.7).collect();
        let c = consistency(&a, &b).unwrap();
        assert!(c.kappa.abs() < 0.02, "kappa {}", c.kappa);
    }

    #[test]
    fn record_consistency_requires_alignment() {
        let a = vec![rec(0, 1, 1, None), rec(1, 0, 1, None)];
        let b = vec![rec(0, 0, 1, None), rec(1, 1, 1, None)];
        assert_eq!(consistency_of_records(&a, &b).unwrap().kappa, -1.0);
        let c = vec![rec(1, 0, 1, None), rec(0, 1, 1, None)];
        assert!(consistency_of_records(&a, &c).is_err());
    }
}
