use std::fmt::Write as _;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub max_epochs: usize,
    pub lr0: f64,
    /// Per-epoch multiplicative decay up to and including `decay_split`.
    pub decay_early: f64,
    /// Per-epoch multiplicative decay after `decay_split`.
    pub decay_late: f64,
    pub decay_split: usize,
    pub l1_lambda: f64,
    /// Leading epochs that retrieve by DTW before switching to embeddings.
    pub dtw_epochs: usize,
    /// Epochs without eval-loss improvement before stopping.
    pub patience: usize,
    pub seed: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 64,
            max_epochs: 10,
            lr0: 1e-4,
            decay_early: 0.9,
            decay_late: 0.5,
            decay_split: 5,
            l1_lambda: 1e-4,
            dtw_epochs: 1,
            patience: 2,
            seed: 0,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
        }
    }
}

impl TrainConfig {
    pub const KEYS: &'static [&'static str] = &[
        "batch_size",
        "max_epochs",
        "lr0",
        "decay_early",
        "decay_late",
        "decay_split",
        "l1_lambda",
        "dtw_epochs",
        "patience",
        "seed",
        "beta1",
        "beta2",
        "adam_eps",
    ];

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.max_epochs == 0 {
            return Err(Error::Config(
                "batch_size and max_epochs must be positive".into(),
            ));
        }
        for (name, v) in [
            ("lr0", self.lr0),
            ("decay_early", self.decay_early),
            ("decay_late", self.decay_late),
            ("adam_eps", self.adam_eps),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.l1_lambda.is_finite() && self.l1_lambda >= 0.0) {
            return Err(Error::Config("l1_lambda must be non-negative".into()));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::Config("Adam betas must lie in [0, 1)".into()));
        }
        Ok(())
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn int<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
            v.parse()
                .map_err(|_| Error::Config(format!("{key}: expected integer, got {v:?}")))
        }
        fn real(key: &str, v: &str) -> Result<f64> {
            v.parse()
                .map_err(|_| Error::Config(format!("{key}: expected number, got {v:?}")))
        }
        match key {
            "batch_size" => self.batch_size = int(key, value)?,
            "max_epochs" => self.max_epochs = int(key, value)?,
            "lr0" => self.lr0 = real(key, value)?,
            "decay_early" => self.decay_early = real(key, value)?,
            "decay_late" => self.decay_late = real(key, value)?,
            "decay_split" => self.decay_split = int(key, value)?,
            "l1_lambda" => self.l1_lambda = real(key, value)?,
            "dtw_epochs" => self.dtw_epochs = int(key, value)?,
            "patience" => self.patience = int(key, value)?,
            "seed" => self.seed = int(key, value)?,
            "beta1" => self.beta1 = real(key, value)?,
            "beta2" => self.beta2 = real(key, value)?,
            "adam_eps" => self.adam_eps = real(key, value)?,
            other => return Err(Error::Config(format!("unknown training key {other:?}"))),
        }
        Ok(())
    }

    pub fn to_kv_text(&self) -> String {
        let mut s = String::new();
        let pairs: [(&str, String); 13] = [
            ("batch_size", self.batch_size.to_string()),
            ("max_epochs", self.max_epochs.to_string()),
            ("lr0", format!("{:?}", self.lr0)),
            ("decay_early", format!("{:?}", self.decay_early)),
            ("decay_late", format!("{:?}", self.decay_late)),
            ("decay_split", self.decay_split.to_string()),
            ("l1_lambda", format!("{:?}", self.l1_lambda)),
            ("dtw_epochs", self.dtw_epochs.to_string()),
            ("patience", self.patience.to_string()),
            ("seed", self.seed.to_string()),
            ("beta1", format!("{:?}", self.beta1)),
            ("beta2", format!("{:?}", self.beta2)),
            ("adam_eps", format!("{:?}", self.adam_eps)),
        ];
        for (k, v) in pairs {
            let _ = writeln!(s, "{k} = {v}");
        }
        s
    }
}
