//! Synthetic daily series with recurring, irregularly spaced motifs: a
//! precursor pattern followed by a surge whose shape depends on the motif
//! kind. The surge is predictable from the precursor, but only if the
//! forecaster has seen that kind before.

use chrono::NaiveDate;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::series::Series;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct MotifSpec {
    pub level: f64,
    pub trend_per_day: f64,
    pub weekly_amplitude: f64,
    pub noise_std: f64,
    /// Number of distinct motif shapes; 0 disables motifs.
    pub kinds: usize,
    pub precursor_len: usize,
    pub surge_len: usize,
    pub precursor_amplitude: f64,
    pub surge_amplitude: f64,
    /// Quiet days between consecutive motifs, drawn uniformly.
    pub min_gap: usize,
    pub max_gap: usize,
}

impl Default for MotifSpec {
    fn default() -> Self {
        MotifSpec {
            level: 100.0,
            trend_per_day: 0.002,
            weekly_amplitude: 3.0,
            noise_std: 1.0,
            kinds: 3,
            precursor_len: 14,
            surge_len: 7,
            precursor_amplitude: 10.0,
            surge_amplitude: 40.0,
            min_gap: 5,
            max_gap: 25,
        }
    }
}

impl MotifSpec {
    /// Pure weekly pattern plus trend.
    pub fn periodic() -> Self {
        MotifSpec {
            noise_std: 0.0,
            kinds: 0,
            ..Self::default()
        }
    }
}

struct Motif {
    shape: Vec<f64>,
}

impl Motif {
    fn random(rng: &mut ChaCha8Rng, spec: &MotifSpec) -> Self {
        let mut shape = Vec::with_capacity(spec.precursor_len + spec.surge_len);
        // Precursor: a smooth random bump, either sign.
        let sign = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
        let peak = rng.gen_range(0.3..0.9);
        let width = rng.gen_range(0.15..0.35);
        for i in 0..spec.precursor_len {
            let x = (i as f64 + 0.5) / spec.precursor_len as f64;
            let bump = (-((x - peak) / width).powi(2)).exp();
            shape.push(sign * spec.precursor_amplitude * bump);
        }
        // Surge: a kind-specific rise with its own peak day and height.
        let height = spec.surge_amplitude * rng.gen_range(0.4..1.0);
        let peak_day = rng.gen_range(0..spec.surge_len.max(1));
        for i in 0..spec.surge_len {
            let d = i as f64 - peak_day as f64;
            shape.push(height * (-(d * d) / 2.0).exp());
        }
        Motif { shape }
    }
}

/// Generates `length` daily points starting 2019-01-01.
pub fn gen_synthetic(seed: u64, length: usize, spec: &MotifSpec) -> Result<Series> {
    if length < 300 {
        return Err(Error::Argument(format!(
            "synthetic length {length} is below 300"
        )));
    }
    if spec.noise_std < 0.0 || !spec.noise_std.is_finite() {
        return Err(Error::Argument(
            "noise_std must be finite and non-negative".into(),
        ));
    }
    if spec.min_gap > spec.max_gap {
        return Err(Error::Argument("min_gap exceeds max_gap".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let weekly: Vec<f64> = (0..7)
        .map(|_| rng.gen_range(-1.0..1.0) * spec.weekly_amplitude)
        .collect();
    let mut values: Vec<f64> = (0..length)
        .map(|i| spec.level + spec.trend_per_day * i as f64 + weekly[i % 7])
        .collect();

    if spec.kinds > 0 {
        let motifs: Vec<Motif> = (0..spec.kinds)
            .map(|_| Motif::random(&mut rng, spec))
            .collect();
        let span = spec.precursor_len + spec.surge_len;
        let mut pos = rng.gen_range(0..=spec.max_gap);
        while pos + span <= length {
            let m = &motifs[rng.gen_range(0..motifs.len())];
            let scale = rng.gen_range(0.85..1.15);
            for (v, s) in values[pos..pos + span].iter_mut().zip(&m.shape) {
                *v += scale * s;
            }
            pos += span + rng.gen_range(spec.min_gap..=spec.max_gap);
        }
    }

    if spec.noise_std > 0.0 {
        let noise = Normal::new(0.0, spec.noise_std).expect("valid std");
        for v in &mut values {
            *v += noise.sample(&mut rng);
        }
    }
    Series::new(
        NaiveDate::from_ymd_opt(2019, 1, 1).expect("valid date"),
        values,
    )
}
