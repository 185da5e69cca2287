use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Linear warmup followed by cosine annealing, evaluated per epoch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LrSchedule {
    pub peak_lr: f64,
    pub warmup_epochs: usize,
    pub max_epochs: usize,
}

impl LrSchedule {
    pub fn new(peak_lr: f64) -> Self {
        Self {
            peak_lr,
            warmup_epochs: 5,
            max_epochs: 50,
        }
    }
}

/// Learning rate for `epoch` (0-based).
///
/// During warmup the rate climbs as `peak·(epoch+1)/warmup`, reaching the peak
/// on the last warmup epoch; afterwards it follows
/// `peak·½·(1 + cos(π·(epoch−warmup)/(max−warmup)))`.
pub fn lr_at(epoch: usize, schedule: &LrSchedule) -> Result<f64> {
    let LrSchedule {
        peak_lr,
        warmup_epochs,
        max_epochs,
    } = *schedule;
    if peak_lr < 0.0 || !peak_lr.is_finite() {
        return Err(Error::Argument(format!("peak learning rate {peak_lr}")));
    }
    if warmup_epochs >= max_epochs {
        return Err(Error::Argument(format!(
            "warmup ({warmup_epochs}) must be shorter than the run ({max_epochs})"
        )));
    }
    if epoch >= max_epochs {
        return Err(Error::Argument(format!(
            "epoch {epoch} outside [0, {max_epochs})"
        )));
    }
    if epoch < warmup_epochs {
        return Ok(peak_lr * (epoch + 1) as f64 / warmup_epochs as f64);
    }
    let progress = (epoch - warmup_epochs) as f64 / (max_epochs - warmup_epochs) as f64;
    Ok(peak_lr * 0.5 * (1.0 + (PI * progress).cos()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn warmup_and_cosine_values() {
        let s = LrSchedule::new(0.005);
        assert_eq!(lr_at(4, &s).unwrap(), 0.005);
        assert_eq!(lr_at(5, &s).unwrap(), 0.005);
        let end = lr_at(49, &s).unwrap();
        assert!((end - 6.09e-6).abs() < 1e-8, "{end}");
        assert!((lr_at(0, &LrSchedule::new(0.05)).unwrap() - 0.01).abs() < 1e-15);
    }

    #[test]
    fn out_of_range_epoch() {
        assert!(matches!(lr_at(50, &LrSchedule::new(0.1)), Err(Error::Argument(_))));
    }

    #[test]
    fn shape_of_schedule() {
        let s = LrSchedule::new(0.5);
        let lrs: Vec<f64> = (0..50).map(|e| lr_at(e, &s).unwrap()).collect();
        assert!(lrs.iter().all(|&x| x >= 0.0));
        assert!(lrs[..5].windows(2).all(|w| w[0] <= w[1]));
        assert!(lrs[4..].windows(2).all(|w| w[0] >= w[1]));
    }
}
