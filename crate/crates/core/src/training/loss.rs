use crate::codec::BitProbabilities;
use crate::error::{ensure_len, invalid, Result};
use crate::image::{BitMessage, Image, WatermarkedImage};
use crate::metrics;

/// Coefficients of the weighted training objective.
///
/// The perceptual and adversarial terms are reserved: no perceptual network or
/// discriminator exists here, so their weights must stay zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub message: f64,
    pub residual: f64,
    pub perceptual: f64,
    pub adversarial: f64,
    /// Scale of the residual information loss in phase 2.
    pub ril: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights { message: 1.0, residual: 10.0, perceptual: 0.0, adversarial: 0.0, ril: 1.0 }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("message", self.message), ("residual", self.residual), ("ril", self.ril)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(invalid(format!("loss weight {name} = {v} must be >= 0")));
            }
        }
        if self.perceptual != 0.0 || self.adversarial != 0.0 {
            return Err(invalid("perceptual and adversarial loss terms are not available; weights must be 0"));
        }
        Ok(())
    }
}

/// Mean binary cross-entropy in nats.
pub fn loss_message(probs: &BitProbabilities, t: &BitMessage) -> Result<f64> {
    ensure_len(t.len(), probs.len())?;
    Ok(bce(probs.values(), t.bits()))
}

pub(crate) fn bce(probs: &[f64], bits: &[u8]) -> f64 {
    let n = probs.len() as f64;
    -probs
        .iter()
        .zip(bits)
        .map(|(&p, &t)| if t == 1 { p.ln() } else { (1.0 - p).ln() })
        .sum::<f64>()
        / n
}

/// Mean squared pixel difference between watermarked and original image.
pub fn loss_residual(w: &WatermarkedImage, x: &Image) -> Result<f64> {
    metrics::mse(w, x)
}

pub fn loss_total(loss_message: f64, loss_residual: f64, weights: &LossWeights) -> f64 {
    weights.message * loss_message + weights.residual * loss_residual
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::PROB_EPS;
    use crate::image::Shape;

    #[test]
    fn message_loss_cases() {
        let t = BitMessage::parse("1011").unwrap();
        let sharp = BitProbabilities::new(t.bits().iter().map(|&b| b as f64).collect()).unwrap();
        let l = loss_message(&sharp, &t).unwrap();
        assert!((l - -(1.0 - PROB_EPS).ln()).abs() < 1e-15);
        assert!((l - 1e-6).abs() < 1e-11);

        let flat = BitProbabilities::uniform(4, 0.5).unwrap();
        assert!((loss_message(&flat, &t).unwrap() - std::f64::consts::LN_2).abs() < 1e-15);

        let one = BitProbabilities::new(vec![0.9]).unwrap();
        let l = loss_message(&one, &BitMessage::parse("1").unwrap()).unwrap();
        assert!((l - 0.105_360_515_657_826_3).abs() < 1e-12);
        assert!(loss_message(&one, &t).is_err());
    }

    #[test]
    fn residual_loss_cases() {
        let s = Shape::square(8, 3).unwrap();
        let x = Image::from_fn(s, |x, y, c| 0.1 + 0.01 * (x + 2 * y + c) as f64).unwrap();
        assert_eq!(loss_residual(&x, &x).unwrap(), 0.0);
        let w = Image::new(s, x.pixels().iter().map(|p| p + 0.1).collect()).unwrap();
        assert!((loss_residual(&w, &x).unwrap() - 0.01).abs() < 1e-15);
        let mut brute = 0.0;
        for (a, b) in w.pixels().iter().zip(x.pixels()) {
            brute += (a - b) * (a - b);
        }
        assert!((loss_residual(&w, &x).unwrap() - brute / s.len() as f64).abs() < 1e-12);
    }

    #[test]
    fn total_loss_cases() {
        let w = |m, r| LossWeights { message: m, residual: r, ..LossWeights::default() };
        assert_eq!(loss_total(0.3, 0.7, &w(1.0, 0.0)), 0.3);
        assert_eq!(loss_total(0.3, 0.7, &w(0.0, 1.0)), 0.7);
        assert!((loss_total(0.1, 0.01, &w(1.0, 10.0)) - 0.2).abs() < 1e-15);
        assert!(LossWeights { perceptual: 0.1, ..LossWeights::default() }.validate().is_err());
        assert!(LossWeights { residual: -1.0, ..LossWeights::default() }.validate().is_err());
        assert!(LossWeights::default().validate().is_ok());
    }
}
