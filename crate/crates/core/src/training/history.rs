use std::fmt::Write as _;

use crate::tskb::RetrievalMode;

#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub mode: RetrievalMode,
    pub train_loss: f64,
    pub eval_mse: f64,
    pub eval_mae: f64,
    pub lr: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
}

impl TrainHistory {
    pub const CSV_HEADER: &'static str = "epoch,mode,train_loss,eval_mse,eval_mae,lr";

    pub fn to_csv(&self) -> String {
        let mut s = String::from(Self::CSV_HEADER);
        s.push('\n');
        for r in &self.epochs {
            let _ = writeln!(
                s,
                "{},{},{:?},{:?},{:?},{:?}",
                r.epoch,
                r.mode.as_str(),
                r.train_loss,
                r.eval_mse,
                r.eval_mae,
                r.lr
            );
        }
        s
    }

    pub fn modes(&self) -> Vec<RetrievalMode> {
        self.epochs.iter().map(|r| r.mode).collect()
    }
}
