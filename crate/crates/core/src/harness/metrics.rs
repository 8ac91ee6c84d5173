//! Accuracy of predicted distances.

use super::HarnessError;
use crate::graph::GedValue;

fn check(preds: &[GedValue], truths: &[GedValue]) -> Result<(), HarnessError> {
    if preds.len() != truths.len() {
        return Err(HarnessError::Data(format!(
            "{} predictions for {} truths",
            preds.len(),
            truths.len()
        )));
    }
    if preds.is_empty() {
        return Err(HarnessError::Data("no predictions to score".into()));
    }
    Ok(())
}

/// Root mean squared error.
pub fn rmse(preds: &[GedValue], truths: &[GedValue]) -> Result<f64, HarnessError> {
    check(preds, truths)?;
    let sum: f64 = preds
        .iter()
        .zip(truths)
        .map(|(&p, &t)| {
            let d = p as f64 - t as f64;
            d * d
        })
        .sum();
    Ok((sum / preds.len() as f64).sqrt())
}

/// Exact match ratio: share of predictions equal to the truth.
pub fn emr(preds: &[GedValue], truths: &[GedValue]) -> Result<f64, HarnessError> {
    check(preds, truths)?;
    let hits = preds.iter().zip(truths).filter(|(p, t)| p == t).count();
    Ok(hits as f64 / preds.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn examples() {
        assert_eq!(rmse(&[1, 2, 3], &[1, 2, 3]).unwrap(), 0.0);
        assert!((rmse(&[3, 5], &[3, 7]).unwrap() - 2f64.sqrt()).abs() < 1e-12);
        assert_eq!(rmse(&[4], &[1]).unwrap(), 3.0);
        assert_eq!(emr(&[1, 2], &[1, 2]).unwrap(), 1.0);
        assert_eq!(emr(&[3, 5], &[3, 7]).unwrap(), 0.5);
        assert_eq!(emr(&[0, 0], &[1, 1]).unwrap(), 0.0);
    }

    #[test]
    fn errors() {
        assert!(rmse(&[], &[]).is_err());
        assert!(emr(&[1], &[1, 2]).is_err());
    }
}
