//! End-to-end scenarios driven by an apparatus description: subensemble tests,
//! no-signaling checks, wing-1 angle sweeps, hidden-variable enumeration and
//! setting optimization. Every report is plain serde data with fixed field names.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::apparatus::{compile_preparation, parse_apparatus, ApparatusSpec, PathObservable};
use crate::error::{Error, Result};
use crate::nri::{
    enumerate_noncontextual, hv_bound_check, nri_value, optimize_settings, tsirelson_max,
    Constraint, NriSettings, NriValue, Optimum, SettingAngles,
};
use crate::qcore::{BlochVector, Label, Sign, StateVector, DERIVED_TOL, STRUCTURAL_TOL};
use crate::shots::{
    born_probabilities, correlation_standard_error, estimate_correlation, sample_categorical,
    CountRecord, CountTable, SamplerConfig,
};
use crate::states::{
    concurrence, make_singlet, measure_wing1, setting_mixture, DensityMatrix, Subensemble,
    Wing1Setting,
};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
pub const DEFAULT_SEED: u64 = 42;
pub const DEFAULT_SHOTS: u64 = 100_000;
/// Environment variable consulted for the seed when neither the flag nor the file sets one.
pub const SEED_ENV: &str = "PATHSPIN_SEED";

/// Command-line overrides of apparatus-file values.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub shots: Option<u64>,
    pub wing1: Option<Wing1Setting>,
    /// Seed used when neither an override nor the file provides one.
    pub default_seed: Option<u64>,
}

impl Overrides {
    pub fn sampler(&self, spec: &ApparatusSpec) -> Result<SamplerConfig> {
        let seed = self
            .seed
            .or(spec.measurement.seed)
            .or(self.default_seed)
            .unwrap_or(DEFAULT_SEED);
        let shots = self
            .shots
            .or(spec.measurement.shots)
            .unwrap_or(DEFAULT_SHOTS);
        SamplerConfig::new(seed, shots)
    }

    pub fn setting(&self, spec: &ApparatusSpec) -> Wing1Setting {
        self.wing1.unwrap_or(spec.source)
    }
}

pub fn load_apparatus(path: impl AsRef<Path>) -> Result<ApparatusSpec> {
    parse_apparatus(&std::fs::read_to_string(path)?)
}

/// Wing-2 subensembles for a wing-1 setting, evolved through the pipeline up to BS2.
pub fn evolved_subensembles(spec: &ApparatusSpec, setting: Wing1Setting) -> Result<Vec<Subensemble>> {
    let prep = compile_preparation(spec)?;
    measure_wing1(&make_singlet(), &setting.direction())?
        .iter()
        .map(|sub| {
            sub.map_state(|spin| {
                let input = StateVector::basis(Label::PATH, 0).tensor(spin)?;
                prep.apply(&input)
            })
        })
        .collect()
}

/// The measurement block's `Â₁, Â₂, b̂₁, b̂₂`.
pub fn configured_settings(spec: &ApparatusSpec) -> Result<NriSettings> {
    let [a1, a2] = spec.path_observables()?;
    let [b1, b2] = spec.measurement.spin_dirs;
    NriSettings::new(a1, a2, b1, b2)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SettingsReport {
    pub a1: PathObservable,
    pub a2: PathObservable,
    pub b1: BlochVector,
    pub b2: BlochVector,
}

impl From<&NriSettings> for SettingsReport {
    fn from(s: &NriSettings) -> Self {
        SettingsReport {
            a1: s.a1.clone(),
            a2: s.a2.clone(),
            b1: s.b1,
            b2: s.b2,
        }
    }
}

/// NRI value estimated from sampled detector counts.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampledNri {
    /// Counts for `(Â₁,b̂₁), (Â₁,b̂₂), (Â₂,b̂₁), (Â₂,b̂₂)`.
    pub counts: [CountTable; 4],
    pub value: NriValue,
    /// Standard error of `s` from the exact correlations.
    pub standard_error: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimumReport {
    pub constraint: Constraint,
    pub s: f64,
    pub angles: SettingAngles,
    pub value: NriValue,
}

impl From<Optimum> for OptimumReport {
    fn from(o: Optimum) -> Self {
        OptimumReport {
            constraint: o.constraint,
            s: o.value.s,
            angles: o.angles,
            value: o.value,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubensembleReport {
    pub outcome: Sign,
    pub weight: f64,
    pub concurrence: f64,
    pub exact: NriValue,
    pub sampled: SampledNri,
    pub optima: Vec<OptimumReport>,
    /// Largest optimized `|s|` over all constraint families.
    pub max_abs_s: f64,
    pub tsirelson_max: f64,
    /// Counts at the free-spin optimum.
    pub sampled_optimum: SampledNri,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Wing1Report {
    pub setting: String,
    pub direction: BlochVector,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub version: String,
    pub config_hash: String,
    pub seed: u64,
    pub shots: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioReport {
    pub provenance: Provenance,
    pub wing1: Wing1Report,
    pub settings: SettingsReport,
    pub subensembles: Vec<SubensembleReport>,
    pub weight_sum: f64,
    pub no_signaling: NoSignalReport,
}

impl ScenarioReport {
    /// Count rows keyed `<setting>/<outcome>/<settings>/<a_i b_j>`.
    pub fn count_records(&self) -> Vec<CountRecord> {
        const IDS: [&str; 4] = ["a1b1", "a1b2", "a2b1", "a2b2"];
        let mut rows = Vec::new();
        for sub in &self.subensembles {
            for (label, sampled) in [("configured", &sub.sampled), ("free-spin", &sub.sampled_optimum)] {
                for (id, t) in IDS.iter().zip(&sampled.counts) {
                    let key = format!("{}/{}/{}/{}", self.wing1.setting, sub.outcome, label, id);
                    rows.push(t.csv_record(&key));
                }
            }
        }
        rows
    }

    /// Numerical invariants every report must satisfy.
    pub fn check(&self) -> Result<()> {
        if (self.weight_sum - 1.0).abs() > STRUCTURAL_TOL {
            return Err(Error::Numerical(format!("weights sum to {}", self.weight_sum)));
        }
        for sub in &self.subensembles {
            let values = [sub.exact, sub.sampled.value, sub.sampled_optimum.value]
                .into_iter()
                .chain(sub.optima.iter().map(|o| o.value));
            for v in values {
                if v.correlations().iter().any(|e| e.abs() > 1.0 + DERIVED_TOL) {
                    return Err(Error::Numerical(format!("correlation outside [-1, 1]: {v:?}")));
                }
            }
        }
        Ok(())
    }
}

fn stream_id(subensemble: usize, purpose: u64) -> u64 {
    (subensemble as u64) << 8 | purpose
}

/// Samples all four joint settings of `settings`; streams `base..base+4`.
pub fn sample_nri(
    state: &StateVector,
    settings: &NriSettings,
    cfg: &SamplerConfig,
    base_stream: u64,
) -> Result<SampledNri> {
    let exact = nri_value(state, settings)?;
    let js = settings.joint_settings();
    let mut counts = [CountTable::default(); 4];
    let mut e = [0.0; 4];
    for (k, j) in js.iter().enumerate() {
        let probs = born_probabilities(state, j)?;
        let c = sample_categorical(&probs, cfg, base_stream + k as u64)?;
        counts[k] = CountTable::from_counts([c[0], c[1], c[2], c[3]]);
        e[k] = estimate_correlation(&counts[k])?;
    }
    let var: f64 = exact
        .correlations()
        .iter()
        .map(|&x| correlation_standard_error(x, cfg.shots).powi(2))
        .sum();
    Ok(SampledNri {
        counts,
        value: NriValue::from_correlations(e),
        standard_error: var.sqrt(),
    })
}

pub fn run_scenario(path: impl AsRef<Path>, overrides: &Overrides) -> Result<ScenarioReport> {
    run_scenario_spec(&load_apparatus(path)?, overrides)
}

pub fn run_scenario_spec(spec: &ApparatusSpec, overrides: &Overrides) -> Result<ScenarioReport> {
    let setting = overrides.setting(spec);
    let cfg = overrides.sampler(spec)?;
    let settings = configured_settings(spec)?;
    let subs = evolved_subensembles(spec, setting)?;

    let mut reports = Vec::with_capacity(subs.len());
    for (i, sub) in subs.iter().enumerate() {
        let exact = nri_value(&sub.state, &settings)?;
        let sampled = sample_nri(&sub.state, &settings, &cfg, stream_id(i, 0))?;
        let optima: Vec<Optimum> = Constraint::ALL
            .iter()
            .map(|c| optimize_settings(&sub.state, *c))
            .collect::<Result<_>>()?;
        let free = optima
            .iter()
            .find(|o| o.constraint == Constraint::FreeSpin)
            .expect("free-spin optimum");
        let sampled_optimum = sample_nri(&sub.state, &free.angles.settings()?, &cfg, stream_id(i, 4))?;
        let max_abs_s = optima.iter().map(|o| o.value.s.abs()).fold(0.0, f64::max);
        reports.push(SubensembleReport {
            outcome: sub.tag.outcome,
            weight: sub.weight,
            concurrence: concurrence(&sub.state)?,
            exact,
            sampled,
            optima: optima.into_iter().map(OptimumReport::from).collect(),
            max_abs_s,
            tsirelson_max: tsirelson_max(&sub.state)?,
            sampled_optimum,
        });
    }

    let report = ScenarioReport {
        provenance: Provenance {
            version: VERSION.to_string(),
            config_hash: spec.content_hash(),
            seed: cfg.seed,
            shots: cfg.shots,
        },
        wing1: Wing1Report {
            setting: setting.to_string(),
            direction: setting.direction(),
        },
        settings: SettingsReport::from(&settings),
        weight_sum: subs.iter().map(|s| s.weight).sum(),
        subensembles: reports,
        no_signaling: nosignal_between(spec, Wing1Setting::A, Wing1Setting::B, &cfg)?,
    };
    report.check()?;
    Ok(report)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampledNoSignal {
    pub shots: u64,
    /// Largest difference in unconditional detector frequencies.
    pub max_abs_diff: f64,
    /// Largest difference in units of its binomial standard error.
    pub max_z: f64,
    pub within_5_sigma: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoSignalReport {
    pub settings: [String; 2],
    /// `‖ρ₂ − ρ₂′‖_max` of the wing-2 spin state.
    pub rho_residual: f64,
    /// Largest difference in exact unconditional detector probabilities.
    pub detector_residual: f64,
    pub sampled: SampledNoSignal,
}

impl NoSignalReport {
    pub fn exact_ok(&self) -> bool {
        self.rho_residual <= STRUCTURAL_TOL && self.detector_residual <= STRUCTURAL_TOL
    }
}

/// Joint `(wing-1 outcome, detector)` probabilities for each configured joint setting.
fn joint_detector_probabilities(
    spec: &ApparatusSpec,
    setting: Wing1Setting,
    settings: &NriSettings,
) -> Result<Vec<Vec<f64>>> {
    let subs = evolved_subensembles(spec, setting)?;
    settings
        .joint_settings()
        .iter()
        .map(|j| {
            let mut out = Vec::with_capacity(8);
            for sub in &subs {
                let p = born_probabilities(&sub.state, j)?;
                out.extend(p.iter().map(|x| sub.weight * x));
            }
            Ok(out)
        })
        .collect()
}

fn marginal(joint: &[f64]) -> [f64; 4] {
    std::array::from_fn(|d| joint.iter().skip(d).step_by(4).sum())
}

fn direction_stream(setting: Wing1Setting) -> u64 {
    let d = setting.direction();
    0x5eed ^ d.x.to_bits() ^ d.y.to_bits().rotate_left(21) ^ d.z.to_bits().rotate_left(42)
}

pub fn nosignal_check(spec: &ApparatusSpec, overrides: &Overrides) -> Result<NoSignalReport> {
    nosignal_between(spec, Wing1Setting::A, Wing1Setting::B, &overrides.sampler(spec)?)
}

/// Compares wing-2 unconditional statistics under two wing-1 settings.
pub fn nosignal_between(
    spec: &ApparatusSpec,
    first: Wing1Setting,
    second: Wing1Setting,
    cfg: &SamplerConfig,
) -> Result<NoSignalReport> {
    let rho = |s: Wing1Setting| DensityMatrix::from_mixture(&setting_mixture(s)?);
    let rho_residual = rho(first)?.max_abs_diff(&rho(second)?);

    let settings = configured_settings(spec)?;
    let p1 = joint_detector_probabilities(spec, first, &settings)?;
    let p2 = joint_detector_probabilities(spec, second, &settings)?;
    let mut detector_residual: f64 = 0.0;
    let mut max_abs_diff: f64 = 0.0;
    let mut max_z: f64 = 0.0;
    let n = cfg.shots as f64;
    for (k, (j1, j2)) in p1.iter().zip(&p2).enumerate() {
        let (m1, m2) = (marginal(j1), marginal(j2));
        let sample = |joint: &[f64], s: Wing1Setting| -> Result<[f64; 4]> {
            let c = sample_categorical(joint, cfg, direction_stream(s).wrapping_add(k as u64))?;
            Ok(marginal(&c.iter().map(|&x| x as f64).collect::<Vec<_>>()).map(|x| x / n))
        };
        let (f1, f2) = (sample(j1, first)?, sample(j2, second)?);
        for d in 0..4 {
            detector_residual = detector_residual.max((m1[d] - m2[d]).abs());
            let diff = (f1[d] - f2[d]).abs();
            max_abs_diff = max_abs_diff.max(diff);
            let p = 0.5 * (m1[d] + m2[d]);
            let se = (p * (1.0 - p) * 2.0 / n).sqrt();
            let z = if se > 0.0 {
                diff / se
            } else if diff == 0.0 {
                0.0
            } else {
                f64::INFINITY
            };
            max_z = max_z.max(z);
        }
    }
    Ok(NoSignalReport {
        settings: [first.to_string(), second.to_string()],
        rho_residual,
        detector_residual,
        sampled: SampledNoSignal {
            shots: cfg.shots,
            max_abs_diff,
            max_z,
            within_5_sigma: max_z <= 5.0,
        },
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub alpha: f64,
    pub weight_plus: f64,
    pub concurrence_plus: f64,
    pub smax_plus: f64,
    pub weight_minus: f64,
    pub concurrence_minus: f64,
    pub smax_minus: f64,
}

/// `k·π/(n−1)` for `k = 0..n`.
pub fn default_sweep_grid(n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![0.0],
        _ => (0..n)
            .map(|k| k as f64 * std::f64::consts::PI / (n - 1) as f64)
            .collect(),
    }
}

/// Concurrence and free-spin `max |s|` of both subensembles as the wing-1
/// direction turns from `x̂` (`α = 0`) through `ẑ` (`α = π/2`).
pub fn sweep_wing1_angle(spec: &ApparatusSpec, angles: &[f64]) -> Result<Vec<SweepRow>> {
    if let Some(a) = angles
        .iter()
        .find(|a| !a.is_finite() || **a < 0.0 || **a > std::f64::consts::PI)
    {
        return Err(Error::validation(None, format!("sweep angle {a} outside [0, π]")));
    }
    angles
        .iter()
        .map(|&alpha| {
            let subs = evolved_subensembles(spec, Wing1Setting::Angle(alpha))?;
            let stats = |s: &Subensemble| -> Result<(f64, f64, f64)> {
                let smax = optimize_settings(&s.state, Constraint::FreeSpin)?.value.s.abs();
                Ok((s.weight, concurrence(&s.state)?, smax))
            };
            let (wp, cp, sp) = stats(&subs[0])?;
            let (wm, cm, sm) = stats(&subs[1])?;
            Ok(SweepRow {
                alpha,
                weight_plus: wp,
                concurrence_plus: cp,
                smax_plus: sp,
                weight_minus: wm,
                concurrence_minus: cm,
                smax_minus: sm,
            })
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HvRow {
    pub a1: i8,
    pub a2: i8,
    pub sz: i8,
    pub sx: i8,
    pub value: i32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HvTable {
    pub rows: Vec<HvRow>,
    /// Largest `|s|` reachable by any noncontextual model.
    pub max_abs_s: f64,
}

impl HvTable {
    pub fn summary(&self) -> String {
        format!("max |S| over noncontextual models = {}", self.max_abs_s)
    }
}

pub fn enumerate_hv_table() -> Result<HvTable> {
    let all = enumerate_noncontextual();
    // mixtures are convex, so the extreme points bound every model
    let max_abs_s = all
        .iter()
        .map(|(hv, _)| hv_bound_check(&[(*hv, 1.0)]).map(f64::abs))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .fold(0.0, f64::max);
    Ok(HvTable {
        rows: all
            .into_iter()
            .map(|(hv, value)| HvRow {
                a1: hv.a1,
                a2: hv.a2,
                sz: hv.sz,
                sx: hv.sx,
                value,
            })
            .collect(),
        max_abs_s,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimizeEntry {
    pub outcome: Sign,
    pub concurrence: f64,
    pub tsirelson_max: f64,
    pub optimum: OptimumReport,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimizeReport {
    pub config_hash: String,
    pub wing1: Wing1Report,
    pub entries: Vec<OptimizeEntry>,
}

pub fn optimize_scenario(
    spec: &ApparatusSpec,
    overrides: &Overrides,
    constraints: &[Constraint],
) -> Result<OptimizeReport> {
    let setting = overrides.setting(spec);
    let subs = evolved_subensembles(spec, setting)?;
    let mut entries = Vec::new();
    for sub in &subs {
        let c = concurrence(&sub.state)?;
        let t = tsirelson_max(&sub.state)?;
        for &constraint in constraints {
            entries.push(OptimizeEntry {
                outcome: sub.tag.outcome,
                concurrence: c,
                tsirelson_max: t,
                optimum: optimize_settings(&sub.state, constraint)?.into(),
            });
        }
    }
    Ok(OptimizeReport {
        config_hash: spec.content_hash(),
        wing1: Wing1Report {
            setting: setting.to_string(),
            direction: setting.direction(),
        },
        entries,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const FIG1: &str = include_str!("../fixtures/fig1.apparatus");

    fn fig1() -> ApparatusSpec {
        parse_apparatus(FIG1).unwrap()
    }

    #[test]
    fn overrides_take_precedence() {
        let spec = fig1();
        let cfg = Overrides::default().sampler(&spec).unwrap();
        assert_eq!((cfg.seed, cfg.shots), (42, 100_000));
        let o = Overrides { seed: Some(1), shots: Some(10), default_seed: Some(9), ..Default::default() };
        let cfg = o.sampler(&spec).unwrap();
        assert_eq!((cfg.seed, cfg.shots), (1, 10));
        let mut bare = spec.clone();
        bare.measurement.seed = None;
        let o = Overrides { default_seed: Some(9), ..Default::default() };
        assert_eq!(o.sampler(&bare).unwrap().seed, 9);
        assert_eq!(Overrides::default().sampler(&bare).unwrap().seed, DEFAULT_SEED);
        assert!(Overrides { shots: Some(0), ..Default::default() }.sampler(&spec).is_err());
    }

    #[test]
    fn evolved_subensembles_are_normalized() {
        for s in [Wing1Setting::A, Wing1Setting::B, Wing1Setting::Angle(1.0)] {
            let subs = evolved_subensembles(&fig1(), s).unwrap();
            assert_eq!(subs.len(), 2);
            for sub in &subs {
                assert!((sub.state.norm_sqr() - 1.0).abs() < 1e-12);
                assert_eq!(sub.state.labels(), &[Label::PATH, Label::SPIN2]);
            }
        }
    }

    #[test]
    fn hv_table() {
        let t = enumerate_hv_table().unwrap();
        assert_eq!(t.rows.len(), 16);
        assert!(t.rows.iter().all(|r| r.value.abs() == 2));
        assert_eq!(t.max_abs_s, 2.0);
        assert_eq!(t.summary(), "max |S| over noncontextual models = 2");
    }

    #[test]
    fn sweep_rejects_out_of_range_angles() {
        assert!(sweep_wing1_angle(&fig1(), &[4.0]).is_err());
        assert!(sweep_wing1_angle(&fig1(), &[-0.1]).is_err());
        assert_eq!(default_sweep_grid(19).len(), 19);
        assert_eq!(default_sweep_grid(19)[18], std::f64::consts::PI);
    }

    #[test]
    fn small_run_is_consistent() {
        let o = Overrides { shots: Some(2000), ..Default::default() };
        let r = run_scenario_spec(&fig1(), &o).unwrap();
        assert_eq!(r.subensembles.len(), 2);
        assert_eq!(r.count_records().len(), 16);
        assert!(r.count_records().iter().all(|c| c.total == 2000));
        assert!(r.no_signaling.exact_ok());
        r.check().unwrap();
    }
}
