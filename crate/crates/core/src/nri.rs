//! Path-spin correlations, the CHSH-form noncontextual realist combination,
//! hidden-variable enumeration, the Horodecki maximum and setting optimization.
//!
//! For a path observable `â·σ⃗` and spin observable `b̂·σ⃗` the correlation is
//! bilinear in the two directions, `E(â, b̂) = âᵀ T b̂`, with
//! `T_ij = ⟨σ_i ⊗ σ_j⟩`. The optimizer works on `T`; reported values are
//! recomputed with [`nri_value`] directly on the state.

use std::f64::consts::{PI, SQRT_2, TAU};
use std::fmt;
use std::str::FromStr;

use nalgebra::{Matrix3, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::apparatus::PathObservable;
use crate::error::{Error, Result};
use crate::qcore::{pauli_along, BlochVector, Label, Operator, StateVector, DERIVED_TOL};

/// `2√2`
pub const TSIRELSON: f64 = 2.0 * SQRT_2;
/// Noncontextual bound on `|s|`.
pub const HV_BOUND: f64 = 2.0;

const GRID_STEP: f64 = 2.0 * PI / 180.0;
const MIN_STEP: f64 = 1e-6;
const TIE_TOL: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JointSetting {
    pub path: PathObservable,
    pub spin: BlochVector,
}

/// `⟨(Â) ⊗ (b̂·σ⃗)⟩` on a `path ⊗ spin2` state.
pub fn correlation(state: &StateVector, j: &JointSetting) -> Result<f64> {
    state.ensure_normalized()?;
    let op = j
        .path
        .matrix()
        .tensor(&pauli_along(&j.spin, Label::SPIN2)?)?;
    op.expect(state)
}

/// Path observables `Â₁, Â₂` and spin directions `b̂₁, b̂₂` (the paper's default is `ẑ, x̂`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NriSettings {
    pub a1: PathObservable,
    pub a2: PathObservable,
    pub b1: BlochVector,
    pub b2: BlochVector,
}

impl NriSettings {
    pub fn new(a1: PathObservable, a2: PathObservable, b1: BlochVector, b2: BlochVector) -> Result<Self> {
        Ok(NriSettings {
            a1,
            a2,
            b1: b1.normalized_checked()?,
            b2: b2.normalized_checked()?,
        })
    }

    /// Spins `ẑ` and `x̂`.
    pub fn with_default_spins(a1: PathObservable, a2: PathObservable) -> Self {
        NriSettings {
            a1,
            a2,
            b1: BlochVector::Z,
            b2: BlochVector::X,
        }
    }

    /// `(Â₁,b̂₁), (Â₁,b̂₂), (Â₂,b̂₁), (Â₂,b̂₂)`.
    pub fn joint_settings(&self) -> [JointSetting; 4] {
        let js = |a: &PathObservable, b: BlochVector| JointSetting {
            path: a.clone(),
            spin: b,
        };
        [
            js(&self.a1, self.b1),
            js(&self.a1, self.b2),
            js(&self.a2, self.b1),
            js(&self.a2, self.b2),
        ]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NriValue {
    pub e11: f64,
    pub e12: f64,
    pub e21: f64,
    pub e22: f64,
    pub s: f64,
}

impl NriValue {
    pub fn from_correlations(e: [f64; 4]) -> Self {
        NriValue {
            e11: e[0],
            e12: e[1],
            e21: e[2],
            e22: e[3],
            s: e[0] + e[1] + e[2] - e[3],
        }
    }

    pub fn correlations(&self) -> [f64; 4] {
        [self.e11, self.e12, self.e21, self.e22]
    }

    pub fn violates(&self) -> bool {
        self.s.abs() > HV_BOUND
    }

    /// Fails if any correlation leaves `[−1, 1]` or `|s|` exceeds `2√2` (both with 1e-9 slack).
    pub fn check_quantum_bounds(&self) -> Result<()> {
        if let Some(e) = self.correlations().iter().find(|e| e.abs() > 1.0 + DERIVED_TOL) {
            return Err(Error::Numerical(format!("correlation {e} outside [-1, 1]")));
        }
        if self.s.abs() > TSIRELSON + DERIVED_TOL {
            return Err(Error::Numerical(format!("|s| = {} exceeds 2√2", self.s.abs())));
        }
        Ok(())
    }
}

pub fn nri_value(state: &StateVector, settings: &NriSettings) -> Result<NriValue> {
    let js = settings.joint_settings();
    let mut e = [0.0; 4];
    for (slot, j) in e.iter_mut().zip(&js) {
        *slot = correlation(state, j)?;
    }
    let v = NriValue::from_correlations(e);
    v.check_quantum_bounds()?;
    Ok(v)
}

/// Predetermined ±1 values of `Â₁, Â₂, σ̂_z, σ̂_x`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct HvAssignment {
    pub a1: i8,
    pub a2: i8,
    pub sz: i8,
    pub sx: i8,
}

impl HvAssignment {
    pub fn new(a1: i8, a2: i8, sz: i8, sx: i8) -> Result<Self> {
        if [a1, a2, sz, sx].iter().any(|v| v.abs() != 1) {
            return Err(Error::InvalidDistribution(
                "hidden-variable values must be ±1".into(),
            ));
        }
        Ok(HvAssignment { a1, a2, sz, sx })
    }

    /// `v(Â₁)v(σ̂_z) + v(Â₁)v(σ̂_x) + v(Â₂)v(σ̂_z) − v(Â₂)v(σ̂_x)`
    pub fn value(&self) -> i32 {
        let (a1, a2, sz, sx) = (
            self.a1 as i32,
            self.a2 as i32,
            self.sz as i32,
            self.sx as i32,
        );
        a1 * sz + a1 * sx + a2 * sz - a2 * sx
    }
}

impl fmt::Display for HvAssignment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:+} {:+} {:+} {:+}", self.a1, self.a2, self.sz, self.sx)
    }
}

/// All 16 noncontextual assignments, `(+1,+1,+1,+1)` first, with their combined value.
pub fn enumerate_noncontextual() -> Vec<(HvAssignment, i32)> {
    (0u8..16)
        .map(|bits| {
            let v = |k: u8| if bits >> (3 - k) & 1 == 0 { 1 } else { -1 };
            let hv = HvAssignment {
                a1: v(0),
                a2: v(1),
                sz: v(2),
                sx: v(3),
            };
            (hv, hv.value())
        })
        .collect()
}

/// Weighted average of the combination over a distribution of assignments.
pub fn hv_bound_check(samples: &[(HvAssignment, f64)]) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::InvalidDistribution("no assignments".into()));
    }
    if let Some((_, w)) = samples.iter().find(|(_, w)| !w.is_finite() || *w < 0.0) {
        return Err(Error::InvalidDistribution(format!("weight {w}")));
    }
    let total: f64 = samples.iter().map(|(_, w)| w).sum();
    if (total - 1.0).abs() > 1e-12 {
        return Err(Error::InvalidDistribution(format!("weights sum to {total}")));
    }
    for (hv, _) in samples {
        HvAssignment::new(hv.a1, hv.a2, hv.sz, hv.sx)?;
    }
    let s: f64 = samples.iter().map(|(hv, w)| w * hv.value() as f64).sum();
    if s.abs() > HV_BOUND + 1e-12 {
        return Err(Error::Numerical(format!("hidden-variable average {s} exceeds 2")));
    }
    Ok(s)
}

/// `T_ij = ⟨σ_i^path ⊗ σ_j^spin⟩`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorrelationTensor(pub [[f64; 3]; 3]);

impl CorrelationTensor {
    pub fn of(state: &StateVector) -> Result<Self> {
        state.ensure_normalized()?;
        let paulis = |l: Label| [Operator::sigma_x(l.clone()), Operator::sigma_y(l.clone()), Operator::sigma_z(l)];
        let ps = paulis(Label::PATH);
        let ss = paulis(Label::SPIN2);
        let mut t = [[0.0; 3]; 3];
        for (i, p) in ps.iter().enumerate() {
            for (j, s) in ss.iter().enumerate() {
                t[i][j] = p.tensor(s)?.expect(state)?;
            }
        }
        Ok(CorrelationTensor(t))
    }

    /// `âᵀ T b̂`
    pub fn correlation(&self, a: &BlochVector, b: &BlochVector) -> f64 {
        a.dot(&self.apply(b))
    }

    /// `T b`
    pub fn apply(&self, b: &BlochVector) -> BlochVector {
        let t = &self.0;
        let b = b.to_array();
        BlochVector::from_array(std::array::from_fn(|i| (0..3).map(|j| t[i][j] * b[j]).sum()))
    }

    /// `Tᵀ a`
    pub fn apply_transpose(&self, a: &BlochVector) -> BlochVector {
        let t = &self.0;
        let a = a.to_array();
        BlochVector::from_array(std::array::from_fn(|j| (0..3).map(|i| t[i][j] * a[i]).sum()))
    }

    pub fn s(&self, a1: &BlochVector, a2: &BlochVector, b1: &BlochVector, b2: &BlochVector) -> f64 {
        self.correlation(a1, b1) + self.correlation(a1, b2) + self.correlation(a2, b1)
            - self.correlation(a2, b2)
    }

    /// Singular values in descending order.
    pub fn singular_values(&self) -> [f64; 3] {
        let t = Matrix3::from_fn(|i, j| self.0[i][j]);
        let eig = SymmetricEigen::new(t.transpose() * t);
        let mut sv: Vec<f64> = eig.eigenvalues.iter().map(|l| l.max(0.0).sqrt()).collect();
        sv.sort_by(|a, b| b.total_cmp(a));
        [sv[0], sv[1], sv[2]]
    }
}

/// Largest `|s|` over all path and spin directions: `2√(t₁² + t₂²)` from the two
/// largest singular values of the correlation tensor.
pub fn tsirelson_max(state: &StateVector) -> Result<f64> {
    let [t1, t2, _] = CorrelationTensor::of(state)?.singular_values();
    Ok(2.0 * (t1 * t1 + t2 * t2).sqrt())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Constraint {
    /// `χ = 0`, spins `ẑ` and `x̂`; vary `θ₁, θ₂`.
    PaperLiteral,
    /// Spins `ẑ` and `x̂`; vary `θ₁, θ₂, χ₁, χ₂`.
    WithPhase,
    /// `χ = 0`; vary `θ₁, θ₂` and both spin directions.
    FreeSpin,
}

impl Constraint {
    pub const ALL: [Constraint; 3] = [Constraint::PaperLiteral, Constraint::WithPhase, Constraint::FreeSpin];

    pub fn name(&self) -> &'static str {
        match self {
            Constraint::PaperLiteral => "paper-literal",
            Constraint::WithPhase => "with-phase",
            Constraint::FreeSpin => "free-spin",
        }
    }
}

impl fmt::Display for Constraint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Constraint {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Constraint::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| format!("unknown constraint `{s}` (paper-literal, with-phase, free-spin)"))
    }
}

/// Setting parameters found by [`optimize_settings`]; `γ = cos θ`, `δ = sin θ`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SettingAngles {
    pub theta1: f64,
    pub theta2: f64,
    pub chi1: f64,
    pub chi2: f64,
    pub spin1: BlochVector,
    pub spin2: BlochVector,
}

impl SettingAngles {
    pub fn settings(&self) -> Result<NriSettings> {
        NriSettings::new(
            PathObservable::from_angles(self.theta1, self.chi1),
            PathObservable::from_angles(self.theta2, self.chi2),
            self.spin1,
            self.spin2,
        )
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Optimum {
    pub constraint: Constraint,
    pub angles: SettingAngles,
    pub value: NriValue,
}

/// Pseudo-spin direction of the path observable at `(θ, χ)`.
pub fn path_direction(theta: f64, chi: f64) -> BlochVector {
    let (s2, c2) = (2.0 * theta).sin_cos();
    let (sc, cc) = chi.sin_cos();
    BlochVector::new(-s2 * sc, s2 * cc, c2)
}

fn grid(len: usize) -> impl Iterator<Item = f64> + Clone {
    (0..len).map(|k| k as f64 * GRID_STEP)
}

/// First maximum in iteration order; later points must beat it by more than `TIE_TOL`.
fn argmax<I: Iterator<Item = (T, f64)>, T>(it: I) -> Option<(T, f64)> {
    it.fold(None, |best: Option<(T, f64)>, (x, v)| match best {
        Some((_, bv)) if v <= bv + TIE_TOL => best,
        _ => Some((x, v)),
    })
}

/// Cyclic coordinate ascent with step halving; stops once the step drops below `MIN_STEP`.
fn coordinate_ascent<F: Fn(&[f64]) -> f64>(f: F, mut x: Vec<f64>, mut step: f64) -> (Vec<f64>, f64) {
    let mut fx = f(&x);
    while step >= MIN_STEP {
        let mut improved = false;
        for k in 0..x.len() {
            for dir in [1.0, -1.0] {
                loop {
                    let mut y = x.clone();
                    y[k] += dir * step;
                    let fy = f(&y);
                    if fy > fx {
                        x = y;
                        fx = fy;
                        improved = true;
                    } else {
                        break;
                    }
                }
            }
        }
        if !improved {
            step /= 2.0;
        }
    }
    (x, fx)
}

fn unit_or(v: BlochVector, fallback: BlochVector) -> BlochVector {
    let n = v.norm();
    if n > 1e-15 {
        v.scale(1.0 / n)
    } else {
        fallback
    }
}

/// Optimal spins for fixed path directions: `b̂₁ ∥ Tᵀ(â₁+â₂)`, `b̂₂ ∥ Tᵀ(â₁−â₂)`.
fn best_spins(t: &CorrelationTensor, a1: &BlochVector, a2: &BlochVector) -> (BlochVector, BlochVector, f64) {
    let u1 = t.apply_transpose(&a1.add(a2));
    let u2 = t.apply_transpose(&a1.sub(a2));
    (
        unit_or(u1, BlochVector::Z),
        unit_or(u2, BlochVector::X),
        u1.norm() + u2.norm(),
    )
}

/// Maximizes `|s|` over the constraint family: 2° grid, then coordinate ascent.
pub fn optimize_settings(state: &StateVector, constraint: Constraint) -> Result<Optimum> {
    let t = CorrelationTensor::of(state)?;
    let thetas = 90;
    let angles = match constraint {
        Constraint::PaperLiteral => {
            let (b1, b2) = (BlochVector::Z, BlochVector::X);
            let f = |x: &[f64]| {
                t.s(&path_direction(x[0], 0.0), &path_direction(x[1], 0.0), &b1, &b2)
                    .abs()
            };
            let rows: Vec<Option<((f64, f64), f64)>> = (0..thetas)
                .into_par_iter()
                .map(|i| {
                    let t1 = i as f64 * GRID_STEP;
                    argmax(grid(thetas).map(|t2| ((t1, t2), f(&[t1, t2]))))
                })
                .collect();
            let ((t1, t2), _) = argmax(rows.into_iter().flatten()).expect("non-empty grid");
            let (x, _) = coordinate_ascent(f, vec![t1, t2], GRID_STEP);
            SettingAngles {
                theta1: x[0],
                theta2: x[1],
                chi1: 0.0,
                chi2: 0.0,
                spin1: b1,
                spin2: b2,
            }
        }
        Constraint::WithPhase => {
            let (b1, b2) = (BlochVector::Z, BlochVector::X);
            // s = â₁·T(b̂₁+b̂₂) + â₂·T(b̂₁−b̂₂) separates into one search per observable
            let u1 = t.apply(&b1.add(&b2));
            let u2 = t.apply(&b1.sub(&b2));
            let best_for = |u: &BlochVector, sign: f64| {
                let rows: Vec<Option<((f64, f64), f64)>> = (0..thetas)
                    .into_par_iter()
                    .map(|i| {
                        let th = i as f64 * GRID_STEP;
                        argmax(grid(180).map(|chi| ((th, chi), sign * path_direction(th, chi).dot(u))))
                    })
                    .collect();
                argmax(rows.into_iter().flatten()).expect("non-empty grid")
            };
            let candidates = [1.0, -1.0].map(|sign| {
                let (p1, v1) = best_for(&u1, sign);
                let (p2, v2) = best_for(&u2, sign);
                ((p1, p2), v1 + v2)
            });
            let ((p1, p2), _) = argmax(candidates.into_iter()).expect("two candidates");
            let f = |x: &[f64]| {
                t.s(&path_direction(x[0], x[2]), &path_direction(x[1], x[3]), &b1, &b2)
                    .abs()
            };
            let (x, _) = coordinate_ascent(f, vec![p1.0, p2.0, p1.1, p2.1], GRID_STEP);
            SettingAngles {
                theta1: x[0],
                theta2: x[1],
                chi1: x[2].rem_euclid(TAU),
                chi2: x[3].rem_euclid(TAU),
                spin1: b1,
                spin2: b2,
            }
        }
        Constraint::FreeSpin => {
            // the inner maximization over spin directions is closed-form (Cauchy-Schwarz)
            let f = |x: &[f64]| best_spins(&t, &path_direction(x[0], 0.0), &path_direction(x[1], 0.0)).2;
            let rows: Vec<Option<((f64, f64), f64)>> = (0..thetas)
                .into_par_iter()
                .map(|i| {
                    let t1 = i as f64 * GRID_STEP;
                    argmax(grid(thetas).map(|t2| ((t1, t2), f(&[t1, t2]))))
                })
                .collect();
            let ((t1, t2), _) = argmax(rows.into_iter().flatten()).expect("non-empty grid");
            let (x, _) = coordinate_ascent(f, vec![t1, t2], GRID_STEP);
            let (spin1, spin2, _) =
                best_spins(&t, &path_direction(x[0], 0.0), &path_direction(x[1], 0.0));
            SettingAngles {
                theta1: x[0],
                theta2: x[1],
                chi1: 0.0,
                chi2: 0.0,
                spin1,
                spin2,
            }
        }
    };
    let mut angles = SettingAngles {
        theta1: angles.theta1.rem_euclid(PI),
        theta2: angles.theta2.rem_euclid(PI),
        ..angles
    };
    let mut value = nri_value(state, &angles.settings()?)?;
    if value.s < 0.0 {
        // θ → θ + π/2 negates both path observables and so every correlation
        angles.theta1 = (angles.theta1 + PI / 2.0).rem_euclid(PI);
        angles.theta2 = (angles.theta2 + PI / 2.0).rem_euclid(PI);
        value = nri_value(state, &angles.settings()?)?;
    }
    Ok(Optimum {
        constraint,
        angles,
        value,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qcore::Complex;
    use crate::states::reference::*;
    use proptest::prelude::*;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};
    use std::f64::consts::FRAC_PI_8;

    fn random_state(rng: &mut StdRng) -> StateVector {
        let amps = (0..4)
            .map(|_| Complex::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
            .collect();
        StateVector::new(vec![Label::PATH, Label::SPIN2], amps)
            .unwrap()
            .normalized()
            .unwrap()
    }

    fn random_dir(rng: &mut StdRng) -> BlochVector {
        let z: f64 = rng.random_range(-1.0..1.0);
        let phi: f64 = rng.random_range(0.0..TAU);
        let r = (1.0 - z * z).sqrt();
        BlochVector::new(r * phi.cos(), r * phi.sin(), z)
    }

    /// Direct 4×4 contraction: Σ conj(ψ_r) (A ⊗ B)_rc ψ_c with the Kronecker product spelled out.
    fn contraction_oracle(state: &StateVector, a: &Operator, b: &Operator) -> f64 {
        let psi = state.amps();
        let mut acc = Complex::new(0.0, 0.0);
        for pr in 0..2 {
            for sr in 0..2 {
                for pc in 0..2 {
                    for sc in 0..2 {
                        acc += psi[2 * pr + sr].conj()
                            * a.entry(pr, pc)
                            * b.entry(sr, sc)
                            * psi[2 * pc + sc];
                    }
                }
            }
        }
        acc.re
    }

    #[test]
    fn sigma_z_pseudo_spin_on_phi_plus() {
        let a = PathObservable::new(1.0, 0.0, 0.0).unwrap();
        let j = JointSetting { path: a.clone(), spin: BlochVector::Z };
        let e = correlation(&phi_plus(), &j).unwrap();
        let oracle = contraction_oracle(&phi_plus(), a.matrix(), &Operator::sigma_z(Label::SPIN2));
        assert!((oracle + 1.0).abs() < 1e-12);
        assert!((e - oracle).abs() < 1e-12);
    }

    #[test]
    fn x_spin_correlations_vanish_for_real_splitters() {
        for k in 0..36 {
            let a = PathObservable::from_angles(k as f64 * PI / 36.0, 0.0);
            let j = JointSetting { path: a.clone(), spin: BlochVector::X };
            let e = correlation(&phi_plus(), &j).unwrap();
            let oracle = contraction_oracle(&phi_plus(), a.matrix(), &Operator::sigma_x(Label::SPIN2));
            assert!(oracle.abs() < 1e-12 && e.abs() < 1e-12);
        }
    }

    #[test]
    fn product_states_factorize() {
        let s = chi_plus();
        let mut rng = StdRng::seed_from_u64(3);
        for _ in 0..20 {
            let a = PathObservable::from_angles(rng.random_range(0.0..PI), rng.random_range(0.0..TAU));
            let b = random_dir(&mut rng);
            let joint = correlation(&s, &JointSetting { path: a.clone(), spin: b }).unwrap();
            let pa = a.matrix().expect(&s).unwrap();
            let pb = pauli_along(&b, Label::SPIN2).unwrap().expect(&s).unwrap();
            assert!((joint - pa * pb).abs() < 1e-12);
        }
    }

    #[test]
    fn known_violating_settings_reach_tsirelson() {
        let settings = NriSettings::new(
            PathObservable::from_angles(3.0 * FRAC_PI_8, 0.0),
            PathObservable::from_angles(5.0 * FRAC_PI_8, 0.0),
            BlochVector::Z,
            BlochVector::Y,
        )
        .unwrap();
        let v = nri_value(&phi_plus(), &settings).unwrap();
        assert!((v.s - TSIRELSON).abs() < 1e-9, "{v:?}");
    }

    #[test]
    fn correlation_tensor_of_phi_plus() {
        let t = CorrelationTensor::of(&phi_plus()).unwrap();
        let want = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, -1.0]];
        for i in 0..3 {
            for j in 0..3 {
                assert!((t.0[i][j] - want[i][j]).abs() < 1e-12);
            }
        }
        assert!((tsirelson_max(&phi_plus()).unwrap() - TSIRELSON).abs() < 1e-12);
        assert!((tsirelson_max(&chi_plus()).unwrap() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn enumeration_values() {
        let all = enumerate_noncontextual();
        assert_eq!(all.len(), 16);
        assert_eq!(all[0], (HvAssignment { a1: 1, a2: 1, sz: 1, sx: 1 }, 2));
        let hv = HvAssignment::new(1, -1, 1, 1).unwrap();
        assert_eq!(hv.value(), 2);
        assert!(all.iter().all(|(_, v)| v.abs() == 2));
        assert_eq!(all.iter().filter(|(_, v)| *v == 2).count(), 8);
        assert_eq!(all.iter().filter(|(_, v)| *v == -2).count(), 8);
        assert!(HvAssignment::new(0, 1, 1, 1).is_err());
    }

    #[test]
    fn hv_bound_check_cases() {
        let all = enumerate_noncontextual();
        let uniform: Vec<_> = all.iter().map(|(hv, _)| (*hv, 1.0 / 16.0)).collect();
        assert!(hv_bound_check(&uniform).unwrap().abs() < 1e-15);
        for (hv, v) in &all {
            assert_eq!(hv_bound_check(&[(*hv, 1.0)]).unwrap(), *v as f64);
        }
        assert!(hv_bound_check(&[(all[0].0, 0.5)]).is_err());
        assert!(hv_bound_check(&[(all[0].0, 1.5), (all[1].0, -0.5)]).is_err());
        assert!(hv_bound_check(&[]).is_err());
    }

    #[test]
    fn constraint_names_round_trip() {
        for c in Constraint::ALL {
            assert_eq!(c.name().parse::<Constraint>().unwrap(), c);
        }
        assert!("free".parse::<Constraint>().is_err());
    }

    #[test]
    fn optimizer_on_reference_states() {
        let lit = optimize_settings(&phi_plus(), Constraint::PaperLiteral).unwrap();
        assert!((lit.value.s.abs() - 2.0).abs() < 1e-6, "{lit:?}");
        for c in [Constraint::WithPhase, Constraint::FreeSpin] {
            let o = optimize_settings(&phi_plus(), c).unwrap();
            assert!((o.value.s - TSIRELSON).abs() < 1e-6, "{o:?}");
        }
        for s in [chi_plus(), chi_minus()] {
            for c in Constraint::ALL {
                let o = optimize_settings(&s, c).unwrap();
                assert!(o.value.s.abs() <= 2.0 + 1e-9, "{c}: {o:?}");
            }
        }
    }

    #[test]
    fn optimizer_is_deterministic() {
        let mut rng = StdRng::seed_from_u64(11);
        let s = random_state(&mut rng);
        for c in Constraint::ALL {
            assert_eq!(optimize_settings(&s, c).unwrap(), optimize_settings(&s, c).unwrap());
        }
    }

    #[test]
    fn tensor_route_matches_direct_route() {
        let mut rng = StdRng::seed_from_u64(5);
        for _ in 0..20 {
            let s = random_state(&mut rng);
            let t = CorrelationTensor::of(&s).unwrap();
            let (th, chi) = (rng.random_range(0.0..PI), rng.random_range(0.0..TAU));
            let a = PathObservable::from_angles(th, chi);
            let b = random_dir(&mut rng);
            let direct = correlation(&s, &JointSetting { path: a.clone(), spin: b }).unwrap();
            assert!((direct - t.correlation(&a.bloch, &b)).abs() < 1e-12);
            assert!((path_direction(th, chi).sub(&a.bloch)).norm() < 1e-12);
        }
    }

    #[test]
    fn random_states_respect_bounds() {
        let mut rng = StdRng::seed_from_u64(17);
        for _ in 0..100 {
            let s = random_state(&mut rng);
            let settings = NriSettings::new(
                PathObservable::from_angles(rng.random_range(0.0..PI), rng.random_range(0.0..TAU)),
                PathObservable::from_angles(rng.random_range(0.0..PI), rng.random_range(0.0..TAU)),
                random_dir(&mut rng),
                random_dir(&mut rng),
            )
            .unwrap();
            let v = nri_value(&s, &settings).unwrap();
            assert!(v.s.abs() <= TSIRELSON + 1e-9);
            assert!(tsirelson_max(&s).unwrap() + 1e-9 >= v.s.abs());
        }
    }

    proptest! {
        #[test]
        fn mixtures_of_assignments_obey_bound(ws in proptest::collection::vec(0.0f64..1.0, 16)) {
            let total: f64 = ws.iter().sum();
            prop_assume!(total > 1e-6);
            let all = enumerate_noncontextual();
            let dist: Vec<_> = all.iter().zip(&ws).map(|((hv, _), w)| (*hv, w / total)).collect();
            // renormalized weights may miss 1 by a few ulps
            let fix = 1.0 - dist.iter().map(|(_, w)| w).sum::<f64>();
            let mut dist = dist;
            dist[0].1 += fix;
            prop_assume!(dist[0].1 >= 0.0);
            let s = hv_bound_check(&dist).unwrap();
            prop_assert!(s.abs() <= 2.0 + 1e-12);
        }
    }
}
