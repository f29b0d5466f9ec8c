//! Seeded Monte Carlo detection events and count-based correlation estimates.
//!
//! Every shot draws one 64-bit word from a ChaCha8 keystream at word position
//! `2·shot_index` of the `(seed, stream)` pair, so any shot can be regenerated on
//! its own and chunked parallel sampling reproduces the sequential result.
//! Probabilities are quantized to integer thresholds at 1e-15 resolution and the
//! category lookup is integer-only.

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nri::JointSetting;
use crate::qcore::{projector_along, Label, Sign, StateVector};

/// Probability quantization resolution (1e-15).
pub const QUANTUM: u64 = 1_000_000_000_000_000;
const CHUNK: u64 = 8192;

/// Counts at detectors `D′₃, D″₃, D′₄, D″₄` (channel ψ₃/ψ₄, spin +1/−1).
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CountTable {
    pub n3p: u64,
    pub n3m: u64,
    pub n4p: u64,
    pub n4m: u64,
    pub total: u64,
}

impl CountTable {
    pub fn from_counts(c: [u64; 4]) -> Self {
        CountTable {
            n3p: c[0],
            n3m: c[1],
            n4p: c[2],
            n4m: c[3],
            total: c.iter().sum(),
        }
    }

    pub fn counts(&self) -> [u64; 4] {
        [self.n3p, self.n3m, self.n4p, self.n4m]
    }

    pub fn merge(&self, other: &CountTable) -> CountTable {
        let (a, b) = (self.counts(), other.counts());
        CountTable::from_counts(std::array::from_fn(|k| a[k] + b[k]))
    }

    /// Relative frequencies in detector order.
    pub fn frequencies(&self) -> Result<[f64; 4]> {
        if self.total == 0 {
            return Err(Error::ZeroTotal);
        }
        let n = self.total as f64;
        Ok(self.counts().map(|c| c as f64 / n))
    }

    pub fn csv_record(&self, setting_id: &str) -> CountRecord {
        CountRecord {
            setting_id: setting_id.to_string(),
            n3p: self.n3p,
            n3m: self.n3m,
            n4p: self.n4p,
            n4m: self.n4m,
            total: self.total,
        }
    }
}

/// One row of the `setting_id,n3p,n3m,n4p,n4m,total` CSV format.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CountRecord {
    pub setting_id: String,
    pub n3p: u64,
    pub n3m: u64,
    pub n4p: u64,
    pub n4m: u64,
    pub total: u64,
}

impl CountRecord {
    pub fn table(&self) -> Result<CountTable> {
        let t = CountTable::from_counts([self.n3p, self.n3m, self.n4p, self.n4m]);
        if t.total != self.total {
            return Err(Error::Numerical(format!(
                "row `{}`: counts sum to {} but total is {}",
                self.setting_id, t.total, self.total
            )));
        }
        Ok(t)
    }
}

pub fn write_counts_csv<W: std::io::Write>(w: W, rows: &[CountRecord]) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    for r in rows {
        wr.serialize(r).map_err(csv_error)?;
    }
    wr.flush()?;
    Ok(())
}

pub fn read_counts_csv<R: std::io::Read>(r: R) -> Result<Vec<CountRecord>> {
    csv::Reader::from_reader(r)
        .deserialize()
        .map(|row| row.map_err(csv_error))
        .collect()
}

fn csv_error(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Numerical(format!("csv: {other:?}")),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SamplerConfig {
    pub seed: u64,
    pub shots: u64,
}

impl SamplerConfig {
    pub fn new(seed: u64, shots: u64) -> Result<Self> {
        if shots == 0 {
            return Err(Error::ZeroShots);
        }
        Ok(SamplerConfig { seed, shots })
    }
}

/// `p(channel, spin sign)` for the four detectors, in `CountTable` order.
pub fn born_probabilities(state: &StateVector, j: &JointSetting) -> Result<[f64; 4]> {
    state.ensure_normalized()?;
    let (p3, p4) = j.path.channel_projectors();
    let mut out = [0.0; 4];
    let mut k = 0;
    for channel in [p3, p4] {
        for sign in Sign::BOTH {
            let proj = channel.tensor(&projector_along(&j.spin, sign, Label::SPIN2)?)?;
            out[k] = proj.apply(state)?.norm_sqr();
            k += 1;
        }
    }
    Ok(out)
}

/// Validates, clips and renormalizes a distribution.
///
/// Entries or a total off by more than 1e-9 are an error; drift between 1e-12 and
/// 1e-9 is renormalized away.
pub fn sanitize_probabilities(probs: &[f64]) -> Result<Vec<f64>> {
    if probs.is_empty() {
        return Err(Error::InvalidDistribution("empty distribution".into()));
    }
    if let Some(p) = probs
        .iter()
        .find(|p| !p.is_finite() || **p < -1e-9 || **p > 1.0 + 1e-9)
    {
        return Err(Error::InvalidDistribution(format!("probability {p}")));
    }
    let total: f64 = probs.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidDistribution(format!("probabilities sum to {total}")));
    }
    let mut clipped: Vec<f64> = probs.iter().map(|p| p.clamp(0.0, 1.0)).collect();
    let total: f64 = clipped.iter().sum();
    if (total - 1.0).abs() > 1e-12 {
        for p in &mut clipped {
            *p /= total;
        }
    }
    Ok(clipped)
}

/// Cumulative integer thresholds out of [`QUANTUM`]; the last is exactly `QUANTUM`.
pub fn quantize(probs: &[f64]) -> Result<Vec<u64>> {
    let probs = sanitize_probabilities(probs)?;
    let mut acc = 0.0;
    let mut out: Vec<u64> = probs
        .iter()
        .map(|p| {
            acc += p;
            ((acc * QUANTUM as f64).round() as u64).min(QUANTUM)
        })
        .collect();
    *out.last_mut().expect("non-empty") = QUANTUM;
    Ok(out)
}

/// Uniform integer in `[0, QUANTUM)` from a 64-bit word (multiply-shift).
fn to_quantum(word: u64) -> u64 {
    ((word as u128 * QUANTUM as u128) >> 64) as u64
}

fn category(thresholds: &[u64], r: u64) -> usize {
    thresholds.partition_point(|&t| t <= r)
}

fn rng_at(seed: u64, stream: u64, shot: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng.set_word_pos(2 * shot as u128);
    rng
}

/// Category of a single shot; stateless in the shot index.
pub fn draw_shot(thresholds: &[u64], seed: u64, stream: u64, shot: u64) -> usize {
    category(thresholds, to_quantum(rng_at(seed, stream, shot).next_u64()))
}

fn draw_range(thresholds: &[u64], seed: u64, stream: u64, start: u64, end: u64) -> Vec<u64> {
    let mut counts = vec![0u64; thresholds.len()];
    let mut rng = rng_at(seed, stream, start);
    for _ in start..end {
        counts[category(thresholds, to_quantum(rng.next_u64()))] += 1;
    }
    counts
}

/// Multinomial counts over an arbitrary categorical distribution.
pub fn sample_categorical(probs: &[f64], cfg: &SamplerConfig, stream: u64) -> Result<Vec<u64>> {
    if cfg.shots == 0 {
        return Err(Error::ZeroShots);
    }
    let thresholds = quantize(probs)?;
    let chunks = cfg.shots.div_ceil(CHUNK);
    let partial: Vec<Vec<u64>> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let start = c * CHUNK;
            let end = (start + CHUNK).min(cfg.shots);
            draw_range(&thresholds, cfg.seed, stream, start, end)
        })
        .collect();
    Ok(partial.into_iter().fold(vec![0; probs.len()], |mut acc, p| {
        for (a, x) in acc.iter_mut().zip(p) {
            *a += x;
        }
        acc
    }))
}

/// Draws `shots` detection events for one joint setting (stream 0).
pub fn sample_counts(state: &StateVector, j: &JointSetting, cfg: &SamplerConfig) -> Result<CountTable> {
    sample_counts_on_stream(state, j, cfg, 0)
}

pub fn sample_counts_on_stream(
    state: &StateVector,
    j: &JointSetting,
    cfg: &SamplerConfig,
    stream: u64,
) -> Result<CountTable> {
    let probs = born_probabilities(state, j)?;
    let c = sample_categorical(&probs, cfg, stream)?;
    Ok(CountTable::from_counts([c[0], c[1], c[2], c[3]]))
}

/// `(N′₃ − N″₃ − N′₄ + N″₄) / N`
pub fn estimate_correlation(t: &CountTable) -> Result<f64> {
    if t.total == 0 {
        return Err(Error::ZeroTotal);
    }
    let signed = t.n3p as i128 - t.n3m as i128 - t.n4p as i128 + t.n4m as i128;
    Ok(signed as f64 / t.total as f64)
}

/// Standard error of a ±1-valued mean with true correlation `e` over `n` shots.
pub fn correlation_standard_error(e: f64, n: u64) -> f64 {
    ((1.0 - e * e).max(0.0) / n as f64).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::apparatus::PathObservable;
    use crate::qcore::BlochVector;
    use crate::states::reference::*;
    use std::f64::consts::FRAC_1_SQRT_2;

    fn setting(theta: f64, spin: BlochVector) -> JointSetting {
        JointSetting {
            path: PathObservable::from_angles(theta, 0.0),
            spin,
        }
    }

    /// Projector contraction spelled out on amplitudes: |⟨ψ_k, s|state⟩|².
    fn born_oracle(state: &StateVector, gamma: f64, delta: f64, spin: &BlochVector) -> [f64; 4] {
        use crate::qcore::Complex;
        let psi3 = [Complex::new(0.0, -gamma), Complex::new(delta, 0.0)];
        let psi4 = [Complex::new(delta, 0.0), Complex::new(0.0, -gamma)];
        let up = StateVector::eigenstate(Label::SPIN2, spin, Sign::Plus).unwrap();
        let down = StateVector::eigenstate(Label::SPIN2, spin, Sign::Minus).unwrap();
        let a = state.amps();
        let mut out = [0.0; 4];
        let mut k = 0;
        for ch in [psi3, psi4] {
            for sp in [&up, &down] {
                let mut amp = Complex::new(0.0, 0.0);
                for p in 0..2 {
                    for s in 0..2 {
                        amp += ch[p].conj() * sp.amps()[s].conj() * a[2 * p + s];
                    }
                }
                out[k] = amp.norm_sqr();
                k += 1;
            }
        }
        out
    }

    #[test]
    fn chi_plus_through_balanced_bs2() {
        let j = setting(std::f64::consts::FRAC_PI_4, BlochVector::X);
        let p = born_probabilities(&chi_plus(), &j).unwrap();
        let oracle = born_oracle(&chi_plus(), FRAC_1_SQRT_2, FRAC_1_SQRT_2, &BlochVector::X);
        for (a, b) in p.iter().zip(oracle) {
            assert!((a - b).abs() < 1e-12);
        }
        // spin is +x with certainty; the in-phase arms split evenly over ψ₃ and ψ₄
        assert!(p[1].abs() < 1e-12 && p[3].abs() < 1e-12);
        assert!((p[0] + p[2] - 1.0).abs() < 1e-12);
        assert!((p[0] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn single_arm_follows_reflection_probabilities() {
        let s = StateVector::basis(Label::PATH, 0)
            .tensor(&StateVector::basis(Label::SPIN2, 0))
            .unwrap();
        for theta in [0.1, 0.7, 1.3, 2.9] {
            let j = setting(theta, BlochVector::from_angles(0.4, 1.9));
            let p = born_probabilities(&s, &j).unwrap();
            let (g, d) = (theta.cos(), theta.sin());
            assert!((p[0] + p[1] - g * g).abs() < 1e-12);
            assert!((p[2] + p[3] - d * d).abs() < 1e-12);
        }
    }

    #[test]
    fn probabilities_sum_to_one() {
        for s in [phi_plus(), phi_minus(), chi_plus(), chi_minus()] {
            let p = born_probabilities(&s, &setting(0.3, BlochVector::from_angles(1.0, 0.5))).unwrap();
            assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn one_shot_lands_in_one_detector() {
        let cfg = SamplerConfig::new(9, 1).unwrap();
        let t = sample_counts(&phi_plus(), &setting(0.5, BlochVector::Z), &cfg).unwrap();
        assert_eq!(t.total, 1);
        assert_eq!(t.counts().iter().filter(|c| **c == 1).count(), 1);
    }

    #[test]
    fn degenerate_distribution() {
        let cfg = SamplerConfig::new(1, 5000).unwrap();
        let c = sample_categorical(&[1.0, 0.0, 0.0, 0.0], &cfg, 0).unwrap();
        assert_eq!(c, vec![5000, 0, 0, 0]);
        let c = sample_categorical(&[0.0, 0.0, 0.0, 1.0], &cfg, 0).unwrap();
        assert_eq!(c, vec![0, 0, 0, 5000]);
    }

    #[test]
    fn sampling_is_reproducible_and_chunk_independent() {
        let probs = [0.1, 0.2, 0.3, 0.4];
        let cfg = SamplerConfig::new(77, 20_000).unwrap();
        let a = sample_categorical(&probs, &cfg, 3).unwrap();
        assert_eq!(a, sample_categorical(&probs, &cfg, 3).unwrap());
        let th = quantize(&probs).unwrap();
        let mut seq = vec![0u64; 4];
        for shot in 0..cfg.shots {
            seq[draw_shot(&th, cfg.seed, 3, shot)] += 1;
        }
        assert_eq!(a, seq);
        assert_ne!(a, sample_categorical(&probs, &cfg, 4).unwrap());
    }

    #[test]
    fn probability_validation() {
        assert!(sanitize_probabilities(&[0.5, 0.6]).is_err());
        assert!(sanitize_probabilities(&[-0.1, 1.1]).is_err());
        assert!(sanitize_probabilities(&[]).is_err());
        let p = sanitize_probabilities(&[0.5 + 5e-11, 0.5]).unwrap();
        assert!((p.iter().sum::<f64>() - 1.0).abs() <= 1e-15);
        let p = sanitize_probabilities(&[-1e-13, 1.0]).unwrap();
        assert_eq!(p[0], 0.0);
        assert!(SamplerConfig::new(0, 0).is_err());
    }

    #[test]
    fn quantized_thresholds() {
        let th = quantize(&[0.25, 0.25, 0.5, 0.0]).unwrap();
        assert_eq!(th, vec![QUANTUM / 4, QUANTUM / 2, QUANTUM, QUANTUM]);
        assert_eq!(category(&th, 0), 0);
        assert_eq!(category(&th, QUANTUM / 4 - 1), 0);
        assert_eq!(category(&th, QUANTUM / 4), 1);
        assert_eq!(category(&th, QUANTUM - 1), 2);
        assert_eq!(to_quantum(u64::MAX), QUANTUM - 1);
        assert_eq!(to_quantum(0), 0);
    }

    #[test]
    fn estimator_cases() {
        assert_eq!(estimate_correlation(&CountTable::from_counts([10, 0, 0, 0])).unwrap(), 1.0);
        assert_eq!(estimate_correlation(&CountTable::from_counts([7, 7, 7, 7])).unwrap(), 0.0);
        assert_eq!(estimate_correlation(&CountTable::from_counts([0, 3, 3, 0])).unwrap(), -1.0);
        assert!(matches!(
            estimate_correlation(&CountTable::default()),
            Err(Error::ZeroTotal)
        ));
    }

    #[test]
    fn csv_round_trip() {
        let rows = vec![
            CountTable::from_counts([1, 2, 3, 4]).csv_record("a1b1"),
            CountTable::from_counts([0, 0, 5, 0]).csv_record("a2b2"),
        ];
        let mut buf = Vec::new();
        write_counts_csv(&mut buf, &rows).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("setting_id,n3p,n3m,n4p,n4m,total\na1b1,1,2,3,4,10\n"));
        let back = read_counts_csv(buf.as_slice()).unwrap();
        assert_eq!(back, rows);
        let bad = "setting_id,n3p,n3m,n4p,n4m,total\nx,1,1,1,1,5\n";
        assert!(read_counts_csv(bad.as_bytes()).unwrap()[0].table().is_err());
    }
}
