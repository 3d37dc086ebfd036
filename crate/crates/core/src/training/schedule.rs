use super::TrainConfig;
use crate::error::{Error, Result};

/// Learning rate for a 1-based epoch: `lr0` at epoch 1, then multiplied by
/// `decay_early` per epoch through `decay_split` and by `decay_late` after.
pub fn lr_schedule(cfg: &TrainConfig, epoch: usize) -> Result<f64> {
    if epoch == 0 || epoch > cfg.max_epochs {
        return Err(Error::Argument(format!(
            "epoch {epoch} outside 1..={}",
            cfg.max_epochs
        )));
    }
    let early = epoch.min(cfg.decay_split).saturating_sub(1);
    let late = epoch.saturating_sub(cfg.decay_split.max(1));
    Ok(cfg.lr0 * cfg.decay_early.powi(early as i32) * cfg.decay_late.powi(late as i32))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_schedule() {
        let cfg = TrainConfig::default();
        assert_eq!(lr_schedule(&cfg, 1).unwrap(), 1e-4);
        assert!((lr_schedule(&cfg, 3).unwrap() - 8.1e-5).abs() < 1e-18);
        assert!((lr_schedule(&cfg, 6).unwrap() - 3.2805e-5).abs() < 1e-18);
        // recurrence form
        let mut lr = cfg.lr0;
        for e in 2..=10 {
            lr *= if e <= 5 { 0.9 } else { 0.5 };
            assert!((lr_schedule(&cfg, e).unwrap() - lr).abs() < 1e-18);
        }
    }

    #[test]
    fn out_of_range_epoch() {
        let cfg = TrainConfig::default();
        assert!(lr_schedule(&cfg, 0).is_err());
        assert!(lr_schedule(&cfg, 11).is_err());
    }
}
