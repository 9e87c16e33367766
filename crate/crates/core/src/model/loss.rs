use crate::error::{Error, Result};
use crate::geom::Point2;
use crate::numcore::BCE_CLAMP;

/// Mean binary cross-entropy with probabilities clamped to
/// `[1e-7, 1 − 1e-7]`.
pub fn bce_loss(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::Contract(format!("{} probabilities but {} labels", p.len(), q.len())));
    }
    if p.is_empty() {
        return Err(Error::Data("loss over an empty batch".into()));
    }
    let mut total = 0.0;
    for (&pi, &qi) in p.iter().zip(q) {
        if qi != 0.0 && qi != 1.0 {
            return Err(Error::Label(qi));
        }
        let pc = pi.clamp(BCE_CLAMP, 1.0 - BCE_CLAMP);
        total -= qi * pc.ln() + (1.0 - qi) * (1.0 - pc).ln();
    }
    Ok(total / p.len() as f64)
}

/// Mean squared Euclidean distance between paired points.
pub fn mse_loss(pred: &[Point2], truth: &[Point2]) -> Result<f64> {
    if pred.len() != truth.len() {
        return Err(Error::Contract(format!("{} predictions but {} targets", pred.len(), truth.len())));
    }
    if pred.is_empty() {
        return Err(Error::Data("loss over an empty batch".into()));
    }
    let total: f64 = pred
        .iter()
        .zip(truth)
        .map(|(a, b)| (a.x - b.x).powi(2) + (a.y - b.y).powi(2))
        .sum();
    Ok(total / pred.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bce_examples() {
        assert!((bce_loss(&[0.5], &[1.0]).unwrap() - 2f64.ln()).abs() < 1e-15);
        assert!(bce_loss(&[1.0], &[1.0]).unwrap() < 1e-6);
        let v = bce_loss(&[0.9, 0.2], &[1.0, 0.0]).unwrap();
        assert_eq!(v, -(0.9f64.ln() + 0.8f64.ln()) / 2.0);
        assert!((v - 0.16425).abs() < 1e-5);
        assert!(matches!(bce_loss(&[0.5], &[0.3]), Err(Error::Label(_))));
    }

    #[test]
    fn mse_examples() {
        let o = Point2::new(0.0, 0.0);
        let t = Point2::new(3.0, 4.0);
        assert_eq!(mse_loss(&[t], &[t]).unwrap(), 0.0);
        assert_eq!(mse_loss(&[o], &[t]).unwrap(), 25.0);
        assert_eq!(mse_loss(&[o, t], &[t, t]).unwrap(), 12.5);
        assert!(matches!(mse_loss(&[o], &[]), Err(Error::Contract(_))));
    }
}
