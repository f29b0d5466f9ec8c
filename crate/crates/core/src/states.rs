//! Singlet source, wing-1 measurement with conditional collapse, subensembles,
//! reduced density operators and pure-state concurrence.

use std::f64::consts::FRAC_1_SQRT_2;
use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::qcore::{
    positions, scatter, BlochVector, Complex, Label, Operator, OperatorKind, Sign,
    StateVector, STRUCTURAL_TOL,
};

/// Which spin component is measured on the wing-1 particle.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "alpha")]
pub enum Wing1Setting {
    /// `σ̂_z`
    A,
    /// `σ̂_x`
    B,
    /// Direction in the x–z plane, `alpha` radians from `x̂` towards `ẑ`.
    Angle(f64),
}

impl Wing1Setting {
    pub fn direction(&self) -> BlochVector {
        match *self {
            Wing1Setting::A => BlochVector::Z,
            Wing1Setting::B => BlochVector::X,
            Wing1Setting::Angle(alpha) => BlochVector::in_xz_plane(alpha),
        }
    }
}

impl fmt::Display for Wing1Setting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Wing1Setting::A => f.write_str("A"),
            Wing1Setting::B => f.write_str("B"),
            Wing1Setting::Angle(a) => write!(f, "angle:{a}"),
        }
    }
}

impl FromStr for Wing1Setting {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.trim() {
            "A" => Ok(Wing1Setting::A),
            "B" => Ok(Wing1Setting::B),
            other => match other.strip_prefix("angle:") {
                Some(v) => v
                    .trim()
                    .parse::<f64>()
                    .ok()
                    .filter(|a| a.is_finite())
                    .map(Wing1Setting::Angle)
                    .ok_or_else(|| format!("invalid angle `{}`", v.trim())),
                None => Err(format!(
                    "expected `A`, `B` or `angle:<radians>`, found `{other}`"
                )),
            },
        }
    }
}

/// The two-particle spin singlet on labels (`spin1`, `spin2`).
#[derive(Clone, Debug, PartialEq)]
pub struct Singlet(StateVector);

impl Singlet {
    pub fn state(&self) -> &StateVector {
        &self.0
    }
}

pub fn make_singlet() -> Singlet {
    let h = Complex::new(FRAC_1_SQRT_2, 0.0);
    let z = Complex::new(0.0, 0.0);
    Singlet(
        StateVector::new(vec![Label::SPIN1, Label::SPIN2], vec![z, h, -h, z])
            .expect("singlet has four amplitudes"),
    )
}

/// Wing-1 measurement record attached to a subensemble.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Wing1Outcome {
    pub direction: BlochVector,
    pub outcome: Sign,
}

/// Wing-2 particles post-selected on one wing-1 outcome.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Subensemble {
    pub weight: f64,
    pub state: StateVector,
    pub tag: Wing1Outcome,
}

impl Subensemble {
    /// Same weight and tag, new state (e.g. after evolution through the interferometer).
    pub fn map_state<F>(&self, f: F) -> Result<Subensemble>
    where
        F: FnOnce(&StateVector) -> Result<StateVector>,
    {
        Ok(Subensemble {
            weight: self.weight,
            state: f(&self.state)?,
            tag: self.tag,
        })
    }
}

/// Measures `n·σ⃗` on spin 1 and returns one subensemble per outcome (`+1` first)
/// holding the collapsed, canonically phased spin-2 state.
pub fn measure_wing1(singlet: &Singlet, n: &BlochVector) -> Result<Vec<Subensemble>> {
    let n = n.normalized_checked()?;
    let psi = singlet.state().amps();
    Sign::BOTH
        .iter()
        .map(|&outcome| {
            let e = StateVector::eigenstate(Label::SPIN1, &n, outcome)?;
            // (⟨e| ⊗ I)|Ψ⟩
            let amps: Vec<Complex> = (0..2)
                .map(|j| (0..2).map(|i| e.amps()[i].conj() * psi[2 * i + j]).sum())
                .collect();
            let cond = StateVector::new(vec![Label::SPIN2], amps)?;
            let weight = cond.norm_sqr();
            Ok(Subensemble {
                weight,
                state: cond.normalized()?.canonical_phase(),
                tag: Wing1Outcome { direction: n, outcome },
            })
        })
        .collect()
}

/// Wing-2 spin mixture produced by a wing-1 setting.
pub fn setting_mixture(setting: Wing1Setting) -> Result<Vec<Subensemble>> {
    measure_wing1(&make_singlet(), &setting.direction())
}

#[derive(Clone, Debug, PartialEq)]
pub struct DensityMatrix {
    op: Operator,
}

impl DensityMatrix {
    fn from_operator(op: Operator) -> Result<Self> {
        let rho = DensityMatrix { op };
        let tr = rho.trace();
        if (tr - 1.0).abs() > STRUCTURAL_TOL {
            return Err(Error::Numerical(format!("density matrix trace {tr}")));
        }
        Ok(rho)
    }

    /// `Σ wᵢ |sᵢ⟩⟨sᵢ|` over a weighted list of pure subensembles.
    pub fn from_mixture(parts: &[Subensemble]) -> Result<Self> {
        let first = parts
            .first()
            .ok_or_else(|| Error::InvalidDistribution("empty mixture".into()))?;
        let labels = first.state.labels().to_vec();
        let d = first.state.dim();
        let mut m = vec![Complex::new(0.0, 0.0); d * d];
        for p in parts {
            if p.state.labels() != labels.as_slice() {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    got: p.state.dim(),
                });
            }
            let a = p.state.amps();
            for r in 0..d {
                for c in 0..d {
                    m[r * d + c] += p.weight * a[r] * a[c].conj();
                }
            }
        }
        DensityMatrix::from_operator(Operator::new(labels, m, OperatorKind::Hermitian)?)
    }

    pub fn labels(&self) -> &[Label] {
        self.op.labels()
    }

    pub fn operator(&self) -> &Operator {
        &self.op
    }

    pub fn entry(&self, r: usize, c: usize) -> Complex {
        self.op.entry(r, c)
    }

    pub fn dim(&self) -> usize {
        self.op.dim()
    }

    pub fn trace(&self) -> f64 {
        self.op.trace().re
    }

    pub fn max_abs_diff(&self, other: &DensityMatrix) -> f64 {
        self.op.max_abs_diff(&other.op)
    }

    /// `Tr ρ²`.
    pub fn purity(&self) -> f64 {
        let d = self.dim();
        (0..d)
            .flat_map(|r| (0..d).map(move |c| (r, c)))
            .map(|(r, c)| self.entry(r, c).norm_sqr())
            .sum()
    }

    /// Ascending eigenvalues.
    pub fn eigenvalues(&self) -> Vec<f64> {
        let d = self.dim();
        let m = DMatrix::from_fn(d, d, |r, c| self.entry(r, c));
        let mut ev: Vec<f64> = SymmetricEigen::new(m).eigenvalues.iter().copied().collect();
        ev.sort_by(f64::total_cmp);
        ev
    }

    pub fn is_rank_one(&self, tol: f64) -> bool {
        (self.purity() - 1.0).abs() <= tol
    }
}

/// Partial trace over every label not in `keep`; the result follows `keep`'s order.
pub fn reduced_density(s: &StateVector, keep: &[Label]) -> Result<DensityMatrix> {
    if keep.is_empty() {
        return Err(Error::EmptyKeep);
    }
    let width = s.labels().len();
    let kept = positions(s.labels(), keep)?;
    let traced: Vec<usize> = (0..width).filter(|p| !kept.contains(p)).collect();
    let dk = 1usize << kept.len();
    let dt = 1usize << traced.len();
    let amps = s.amps();
    let mut m = vec![Complex::new(0.0, 0.0); dk * dk];
    for r in 0..dk {
        for c in 0..dk {
            m[r * dk + c] = (0..dt)
                .map(|t| {
                    let rest = scatter(t, &traced, width);
                    amps[scatter(r, &kept, width) | rest] * amps[scatter(c, &kept, width) | rest].conj()
                })
                .sum();
        }
    }
    DensityMatrix::from_operator(Operator::new(keep.to_vec(), m, OperatorKind::Hermitian)?)
}

/// `2|ad − bc|` for a normalized two-qubit pure state with amplitudes `(a, b, c, d)`.
pub fn concurrence(s: &StateVector) -> Result<f64> {
    if s.labels().len() != 2 {
        return Err(Error::WrongLabelCount {
            expected: 2,
            got: s.labels().len(),
        });
    }
    s.ensure_normalized()?;
    let a = s.amps();
    Ok((2.0 * (a[0] * a[3] - a[1] * a[2]).norm()).min(1.0))
}

/// The wing-2 path⊗spin states incident on BS2, normalized, with the printed global phases.
pub mod reference {
    use super::*;

    fn path_spin(amps: [Complex; 4]) -> StateVector {
        StateVector::new(vec![Label::PATH, Label::SPIN2], amps.to_vec())
            .expect("four amplitudes")
    }

    /// `i/√2 (|ψ₁⟩|↓_z⟩ + |ψ₂⟩|↑_z⟩)`
    pub fn phi_plus() -> StateVector {
        let a = Complex::new(0.0, FRAC_1_SQRT_2);
        let z = Complex::new(0.0, 0.0);
        path_spin([z, a, a, z])
    }

    /// `i/√2 (|ψ₁⟩|↑_z⟩ + |ψ₂⟩|↓_z⟩)`
    pub fn phi_minus() -> StateVector {
        let a = Complex::new(0.0, FRAC_1_SQRT_2);
        let z = Complex::new(0.0, 0.0);
        path_spin([a, z, z, a])
    }

    /// `i/√2 (|ψ₁⟩ + |ψ₂⟩)|↑_x⟩`
    pub fn chi_plus() -> StateVector {
        let a = Complex::new(0.0, 0.5);
        path_spin([a, a, a, a])
    }

    /// `−i/√2 (|ψ₁⟩ − |ψ₂⟩)|↓_x⟩`
    pub fn chi_minus() -> StateVector {
        let a = Complex::new(0.0, 0.5);
        path_spin([-a, a, a, -a])
    }
}
