//! Dense complex linear algebra on labeled tensor products of two-level systems.
//!
//! Basis convention: for every two-level subsystem, index 0 is `|↑_z⟩` (spin) or
//! `|ψ₁⟩` (path) and index 1 is `|↓_z⟩` or `|ψ₂⟩`. Multi-subsystem amplitudes
//! are stored in Kronecker order, so the first label is the most significant bit.

use std::borrow::Cow;
use std::fmt;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Complex = Complex64;

/// Tolerance for structural identities (unitarity, idempotence, normalization).
pub const STRUCTURAL_TOL: f64 = 1e-12;
/// Tolerance for derived expectation values.
pub const DERIVED_TOL: f64 = 1e-9;
/// Largest imaginary residue accepted from `⟨s|H|s⟩`.
pub const IMAG_RESIDUE_TOL: f64 = 1e-10;
/// Largest supported number of two-level subsystems (Hilbert dimension 16).
pub const MAX_SUBSYSTEMS: usize = 4;

const ZERO: Complex = Complex::new(0.0, 0.0);
const ONE: Complex = Complex::new(1.0, 0.0);
const I: Complex = Complex::new(0.0, 1.0);

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Label(Cow<'static, str>);

impl Label {
    pub const SPIN1: Label = Label(Cow::Borrowed("spin1"));
    pub const SPIN2: Label = Label(Cow::Borrowed("spin2"));
    pub const PATH: Label = Label(Cow::Borrowed("path"));

    pub fn new(name: impl Into<String>) -> Self {
        Label(Cow::Owned(name.into()))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Outcome of a two-valued (±1) measurement.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Sign {
    #[serde(rename = "+1")]
    Plus,
    #[serde(rename = "-1")]
    Minus,
}

impl Sign {
    pub const BOTH: [Sign; 2] = [Sign::Plus, Sign::Minus];

    pub fn value(self) -> f64 {
        match self {
            Sign::Plus => 1.0,
            Sign::Minus => -1.0,
        }
    }

    pub fn flip(self) -> Sign {
        match self {
            Sign::Plus => Sign::Minus,
            Sign::Minus => Sign::Plus,
        }
    }
}

impl fmt::Display for Sign {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Sign::Plus => f.write_str("+1"),
            Sign::Minus => f.write_str("-1"),
        }
    }
}

fn check_labels(labels: &[Label]) -> Result<()> {
    if labels.len() > MAX_SUBSYSTEMS {
        return Err(Error::TooLarge(1 << labels.len()));
    }
    for (i, l) in labels.iter().enumerate() {
        if labels[..i].contains(l) {
            return Err(Error::DuplicateLabel(l.to_string()));
        }
    }
    Ok(())
}

fn joined_labels(a: &[Label], b: &[Label]) -> Result<Vec<Label>> {
    if let Some(l) = a.iter().find(|l| b.contains(l)) {
        return Err(Error::LabelCollision(l.to_string()));
    }
    let labels: Vec<Label> = a.iter().chain(b).cloned().collect();
    check_labels(&labels)?;
    Ok(labels)
}

/// Positions of `targets` inside `labels`, in target order.
pub(crate) fn positions(labels: &[Label], targets: &[Label]) -> Result<Vec<usize>> {
    targets
        .iter()
        .map(|t| {
            labels
                .iter()
                .position(|l| l == t)
                .ok_or_else(|| Error::UnknownLabel(t.to_string()))
        })
        .collect()
}

/// Extracts the bits of `index` at the given label positions (first position most significant).
pub(crate) fn gather(index: usize, pos: &[usize], width: usize) -> usize {
    pos.iter()
        .fold(0, |acc, &p| (acc << 1) | ((index >> (width - 1 - p)) & 1))
}

/// Inverse of [`gather`]: writes `sub` into the label positions of a zeroed index.
pub(crate) fn scatter(sub: usize, pos: &[usize], width: usize) -> usize {
    let m = pos.len();
    pos.iter().enumerate().fold(0, |acc, (j, &p)| {
        let bit = (sub >> (m - 1 - j)) & 1;
        acc | (bit << (width - 1 - p))
    })
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct BlochVector {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl BlochVector {
    pub const X: BlochVector = BlochVector { x: 1.0, y: 0.0, z: 0.0 };
    pub const Y: BlochVector = BlochVector { x: 0.0, y: 1.0, z: 0.0 };
    pub const Z: BlochVector = BlochVector { x: 0.0, y: 0.0, z: 1.0 };

    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        BlochVector { x, y, z }
    }

    /// Accepts vectors within 1e-9 of the unit sphere and snaps them onto it.
    pub fn unit(x: f64, y: f64, z: f64) -> Result<Self> {
        BlochVector::new(x, y, z).normalized_checked()
    }

    /// Direction with the given polar angle from `ẑ` and azimuth from `x̂`.
    pub fn from_angles(polar: f64, azimuth: f64) -> Self {
        let (sp, cp) = polar.sin_cos();
        let (sa, ca) = azimuth.sin_cos();
        BlochVector::new(sp * ca, sp * sa, cp)
    }

    /// Direction in the x–z plane at angle `alpha` from `x̂` towards `ẑ`.
    pub fn in_xz_plane(alpha: f64) -> Self {
        let (s, c) = alpha.sin_cos();
        BlochVector::new(c, 0.0, s)
    }

    pub fn normalized_checked(self) -> Result<Self> {
        let norm = self.norm();
        if !norm.is_finite() || (norm - 1.0).abs() > DERIVED_TOL {
            return Err(Error::NotUnit {
                x: self.x,
                y: self.y,
                z: self.z,
            });
        }
        if norm == 1.0 {
            Ok(self)
        } else {
            Ok(self.scale(1.0 / norm))
        }
    }

    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn dot(&self, other: &BlochVector) -> f64 {
        self.x * other.x + self.y * other.y + self.z * other.z
    }

    pub fn scale(&self, k: f64) -> BlochVector {
        BlochVector::new(self.x * k, self.y * k, self.z * k)
    }

    pub fn add(&self, o: &BlochVector) -> BlochVector {
        BlochVector::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }

    pub fn sub(&self, o: &BlochVector) -> BlochVector {
        BlochVector::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }

    pub fn from_array(a: [f64; 3]) -> Self {
        BlochVector::new(a[0], a[1], a[2])
    }

    pub fn is_unit(&self, tol: f64) -> bool {
        (self.dot(self) - 1.0).abs() <= tol
    }
}

impl std::ops::Neg for BlochVector {
    type Output = BlochVector;
    fn neg(self) -> BlochVector {
        self.scale(-1.0)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StateVector {
    labels: Vec<Label>,
    amps: Vec<Complex>,
}

impl StateVector {
    pub fn new(labels: Vec<Label>, amps: Vec<Complex>) -> Result<Self> {
        check_labels(&labels)?;
        let expected = 1usize << labels.len();
        if amps.len() != expected {
            return Err(Error::DimensionMismatch {
                expected,
                got: amps.len(),
            });
        }
        if amps.iter().any(|a| !a.re.is_finite() || !a.im.is_finite()) {
            return Err(Error::Numerical("non-finite amplitude".into()));
        }
        Ok(StateVector { labels, amps })
    }

    /// Single-subsystem computational basis ket (`bit` 0 is `|↑_z⟩` / `|ψ₁⟩`).
    pub fn basis(label: Label, bit: usize) -> Self {
        let mut amps = vec![ZERO; 2];
        amps[bit & 1] = ONE;
        StateVector {
            labels: vec![label],
            amps,
        }
    }

    /// The `sign` eigenstate of `n·σ⃗`, with canonical phase.
    pub fn eigenstate(label: Label, n: &BlochVector, sign: Sign) -> Result<Self> {
        let p = projector_along(n, sign, label.clone())?;
        // pick the projector column of largest norm; any nonzero column spans the eigenspace
        let col = |c: usize| [p.entry(0, c), p.entry(1, c)];
        let (c0, c1) = (col(0), col(1));
        let n0 = c0[0].norm_sqr() + c0[1].norm_sqr();
        let n1 = c1[0].norm_sqr() + c1[1].norm_sqr();
        let v = if n0 >= n1 { c0 } else { c1 };
        let mut s = StateVector::new(vec![label], v.to_vec())?;
        s.normalize()?;
        Ok(s.canonical_phase())
    }

    pub fn labels(&self) -> &[Label] {
        &self.labels
    }

    pub fn amps(&self) -> &[Complex] {
        &self.amps
    }

    pub fn dim(&self) -> usize {
        self.amps.len()
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum()
    }

    pub fn normalize(&mut self) -> Result<()> {
        let n = self.norm_sqr().sqrt();
        if n == 0.0 || !n.is_finite() {
            return Err(Error::Numerical("cannot normalize a zero vector".into()));
        }
        for a in &mut self.amps {
            *a /= n;
        }
        Ok(())
    }

    pub fn normalized(mut self) -> Result<Self> {
        self.normalize()?;
        Ok(self)
    }

    pub fn ensure_normalized(&self) -> Result<()> {
        let n = self.norm_sqr();
        if (n - 1.0).abs() > DERIVED_TOL {
            return Err(Error::NotNormalized(n));
        }
        Ok(())
    }

    pub fn scaled(&self, k: Complex) -> StateVector {
        StateVector {
            labels: self.labels.clone(),
            amps: self.amps.iter().map(|a| a * k).collect(),
        }
    }

    pub fn tensor(&self, other: &StateVector) -> Result<StateVector> {
        let labels = joined_labels(&self.labels, &other.labels)?;
        let amps = self
            .amps
            .iter()
            .flat_map(|a| other.amps.iter().map(move |b| a * b))
            .collect();
        Ok(StateVector { labels, amps })
    }

    /// `⟨self|other⟩`; both states must carry identical label order.
    pub fn inner(&self, other: &StateVector) -> Result<Complex> {
        if self.labels != other.labels {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: other.dim(),
            });
        }
        Ok(self
            .amps
            .iter()
            .zip(&other.amps)
            .map(|(a, b)| a.conj() * b)
            .sum())
    }

    /// Global-phase-insensitive overlap `|⟨a|b⟩|²`.
    pub fn fidelity(&self, other: &StateVector) -> Result<f64> {
        Ok(self.inner(other)?.norm_sqr())
    }

    /// Rotates the global phase so the first nonzero amplitude is real and positive.
    pub fn canonical_phase(mut self) -> StateVector {
        if let Some(a) = self.amps.iter().find(|a| a.norm() > STRUCTURAL_TOL).copied() {
            let phase = a.conj() / a.norm();
            for x in &mut self.amps {
                *x *= phase;
            }
        }
        self
    }

    pub fn max_abs_diff(&self, other: &StateVector) -> f64 {
        self.amps
            .iter()
            .zip(&other.amps)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OperatorKind {
    Unitary,
    Hermitian,
    Projector,
    General,
}

/// Square complex matrix acting on an ordered set of subsystem labels.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Operator {
    labels: Vec<Label>,
    /// Row-major, `dim × dim`.
    matrix: Vec<Complex>,
    kind: OperatorKind,
}

impl Operator {
    pub fn new(labels: Vec<Label>, matrix: Vec<Complex>, kind: OperatorKind) -> Result<Self> {
        check_labels(&labels)?;
        let dim = 1usize << labels.len();
        if matrix.len() != dim * dim {
            return Err(Error::DimensionMismatch {
                expected: dim * dim,
                got: matrix.len(),
            });
        }
        let op = Operator {
            labels,
            matrix,
            kind,
        };
        op.validate_kind()?;
        Ok(op)
    }

    pub fn from_rows<const N: usize>(
        labels: Vec<Label>,
        rows: [[Complex; N]; N],
        kind: OperatorKind,
    ) -> Result<Self> {
        Operator::new(labels, rows.iter().flatten().copied().collect(), kind)
    }

    fn validate_kind(&self) -> Result<()> {
        match self.kind {
            OperatorKind::General => Ok(()),
            OperatorKind::Unitary if self.is_unitary(STRUCTURAL_TOL) => Ok(()),
            OperatorKind::Hermitian if self.is_hermitian(STRUCTURAL_TOL) => Ok(()),
            OperatorKind::Projector if self.is_projector(STRUCTURAL_TOL) => Ok(()),
            OperatorKind::Unitary => Err(Error::KindViolation("unitary")),
            OperatorKind::Hermitian => Err(Error::KindViolation("Hermitian")),
            OperatorKind::Projector => Err(Error::KindViolation("a projector")),
        }
    }

    pub fn identity(labels: Vec<Label>) -> Result<Self> {
        check_labels(&labels)?;
        let dim = 1usize << labels.len();
        let mut matrix = vec![ZERO; dim * dim];
        for i in 0..dim {
            matrix[i * dim + i] = ONE;
        }
        Ok(Operator {
            labels,
            matrix,
            kind: OperatorKind::Unitary,
        })
    }

    pub fn sigma_x(label: Label) -> Self {
        Operator {
            labels: vec![label],
            matrix: vec![ZERO, ONE, ONE, ZERO],
            kind: OperatorKind::Hermitian,
        }
    }

    pub fn sigma_y(label: Label) -> Self {
        Operator {
            labels: vec![label],
            matrix: vec![ZERO, -I, I, ZERO],
            kind: OperatorKind::Hermitian,
        }
    }

    pub fn sigma_z(label: Label) -> Self {
        Operator {
            labels: vec![label],
            matrix: vec![ONE, ZERO, ZERO, -ONE],
            kind: OperatorKind::Hermitian,
        }
    }

    pub fn labels(&self) -> &[Label] {
        &self.labels
    }

    pub fn kind(&self) -> OperatorKind {
        self.kind
    }

    pub fn dim(&self) -> usize {
        1 << self.labels.len()
    }

    pub fn entry(&self, row: usize, col: usize) -> Complex {
        self.matrix[row * self.dim() + col]
    }

    pub fn matrix(&self) -> &[Complex] {
        &self.matrix
    }

    /// Re-tags the operator, validating the new kind.
    pub fn with_kind(mut self, kind: OperatorKind) -> Result<Self> {
        self.kind = kind;
        self.validate_kind()?;
        Ok(self)
    }

    pub fn relabel(mut self, labels: Vec<Label>) -> Result<Self> {
        check_labels(&labels)?;
        if labels.len() != self.labels.len() {
            return Err(Error::WrongLabelCount {
                expected: self.labels.len(),
                got: labels.len(),
            });
        }
        self.labels = labels;
        Ok(self)
    }

    pub fn dagger(&self) -> Operator {
        let d = self.dim();
        let mut m = vec![ZERO; d * d];
        for r in 0..d {
            for c in 0..d {
                m[c * d + r] = self.matrix[r * d + c].conj();
            }
        }
        Operator {
            labels: self.labels.clone(),
            matrix: m,
            kind: self.kind,
        }
    }

    fn same_space(&self, other: &Operator) -> Result<()> {
        if self.labels != other.labels {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: other.dim(),
            });
        }
        Ok(())
    }

    /// Matrix product `self · other` on the same label set.
    pub fn compose(&self, other: &Operator) -> Result<Operator> {
        self.same_space(other)?;
        let d = self.dim();
        let mut m = vec![ZERO; d * d];
        for r in 0..d {
            for k in 0..d {
                let a = self.matrix[r * d + k];
                if a == ZERO {
                    continue;
                }
                for c in 0..d {
                    m[r * d + c] += a * other.matrix[k * d + c];
                }
            }
        }
        let kind = match (self.kind, other.kind) {
            (OperatorKind::Unitary, OperatorKind::Unitary) => OperatorKind::Unitary,
            _ => OperatorKind::General,
        };
        Ok(Operator {
            labels: self.labels.clone(),
            matrix: m,
            kind,
        })
    }

    pub fn add(&self, other: &Operator) -> Result<Operator> {
        self.same_space(other)?;
        let m = self
            .matrix
            .iter()
            .zip(&other.matrix)
            .map(|(a, b)| a + b)
            .collect();
        Ok(Operator {
            labels: self.labels.clone(),
            matrix: m,
            kind: OperatorKind::General,
        })
    }

    pub fn sub(&self, other: &Operator) -> Result<Operator> {
        self.add(&other.scaled(-ONE))
    }

    pub fn scaled(&self, k: Complex) -> Operator {
        Operator {
            labels: self.labels.clone(),
            matrix: self.matrix.iter().map(|a| a * k).collect(),
            kind: OperatorKind::General,
        }
    }

    pub fn tensor(&self, other: &Operator) -> Result<Operator> {
        let labels = joined_labels(&self.labels, &other.labels)?;
        let (da, db) = (self.dim(), other.dim());
        let d = da * db;
        let mut m = vec![ZERO; d * d];
        for ra in 0..da {
            for ca in 0..da {
                let a = self.matrix[ra * da + ca];
                for rb in 0..db {
                    for cb in 0..db {
                        m[(ra * db + rb) * d + ca * db + cb] = a * other.matrix[rb * db + cb];
                    }
                }
            }
        }
        let kind = if self.kind == other.kind {
            self.kind
        } else {
            OperatorKind::General
        };
        Ok(Operator {
            labels,
            matrix: m,
            kind,
        })
    }

    /// Expands the operator onto `labels` (a superset of its own), acting as identity elsewhere.
    pub fn embed(&self, labels: &[Label]) -> Result<Operator> {
        check_labels(labels)?;
        let pos = positions(labels, &self.labels)?;
        let k = labels.len();
        let d = 1usize << k;
        let rest_mask = !scatter((1 << pos.len()) - 1, &pos, k) & (d - 1);
        let mut m = vec![ZERO; d * d];
        for r in 0..d {
            let sr = gather(r, &pos, k);
            for c in 0..d {
                if r & rest_mask != c & rest_mask {
                    continue;
                }
                m[r * d + c] = self.entry(sr, gather(c, &pos, k));
            }
        }
        Ok(Operator {
            labels: labels.to_vec(),
            matrix: m,
            kind: self.kind,
        })
    }

    /// `op · s`, with the operator acting as identity on labels it does not target.
    pub fn apply(&self, s: &StateVector) -> Result<StateVector> {
        let pos = positions(&s.labels, &self.labels)?;
        let k = s.labels.len();
        let d = s.dim();
        let m = self.dim();
        let mut out = vec![ZERO; d];
        for (i, o) in out.iter_mut().enumerate() {
            let r = gather(i, &pos, k);
            let rest = i & !scatter(r, &pos, k);
            *o = (0..m)
                .map(|c| self.entry(r, c) * s.amps[rest | scatter(c, &pos, k)])
                .sum();
        }
        Ok(StateVector {
            labels: s.labels.clone(),
            amps: out,
        })
    }

    /// `⟨s|op|s⟩` for Hermitian `op`.
    pub fn expect(&self, s: &StateVector) -> Result<f64> {
        if !self.is_hermitian(STRUCTURAL_TOL) {
            return Err(Error::KindViolation("Hermitian"));
        }
        let v = s.inner(&self.apply(s)?)?;
        if v.im.abs() > IMAG_RESIDUE_TOL {
            return Err(Error::Numerical(format!(
                "expectation has imaginary residue {}",
                v.im
            )));
        }
        Ok(v.re)
    }

    pub fn max_abs_diff(&self, other: &Operator) -> f64 {
        self.matrix
            .iter()
            .zip(&other.matrix)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        self.max_abs_diff(&self.dagger()) <= tol
    }

    /// `‖U†U − I‖_max ≤ tol`.
    pub fn is_unitary(&self, tol: f64) -> bool {
        let d = self.dim();
        (0..d).all(|r| {
            (0..d).all(|c| {
                let v: Complex = (0..d)
                    .map(|k| self.matrix[k * d + r].conj() * self.matrix[k * d + c])
                    .sum();
                let target = if r == c { ONE } else { ZERO };
                (v - target).norm() <= tol
            })
        })
    }

    pub fn is_projector(&self, tol: f64) -> bool {
        if !self.is_hermitian(tol) {
            return false;
        }
        let d = self.dim();
        (0..d).all(|r| {
            (0..d).all(|c| {
                let v: Complex = (0..d)
                    .map(|k| self.matrix[r * d + k] * self.matrix[k * d + c])
                    .sum();
                (v - self.matrix[r * d + c]).norm() <= tol
            })
        })
    }

    pub fn trace(&self) -> Complex {
        (0..self.dim()).map(|i| self.entry(i, i)).sum()
    }
}

/// `n_x σ_x + n_y σ_y + n_z σ_z` on `label`.
pub fn pauli_along(n: &BlochVector, label: Label) -> Result<Operator> {
    let n = n.normalized_checked()?;
    let off = Complex::new(n.x, -n.y);
    Ok(Operator {
        labels: vec![label],
        matrix: vec![Complex::new(n.z, 0.0), off, off.conj(), Complex::new(-n.z, 0.0)],
        kind: OperatorKind::Hermitian,
    })
}

/// Spectral projector `(I + sign·n·σ⃗)/2` on `label`.
pub fn projector_along(n: &BlochVector, sign: Sign, label: Label) -> Result<Operator> {
    let n = n.normalized_checked()?.scale(sign.value());
    let off = Complex::new(0.5 * n.x, -0.5 * n.y);
    Ok(Operator {
        labels: vec![label],
        matrix: vec![
            Complex::new(0.5 * (1.0 + n.z), 0.0),
            off,
            off.conj(),
            Complex::new(0.5 * (1.0 - n.z), 0.0),
        ],
        kind: OperatorKind::Projector,
    })
}
