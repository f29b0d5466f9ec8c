//! Wing-2 interferometer: component unitaries, path (pseudo-spin) observables,
//! the apparatus description format and the pipeline compiler.
//!
//! The pipeline acts on `path ⊗ spin2`. BS1's two input ports are identified with
//! the path basis, and only port 1 is ever populated. After BS2 the path index
//! labels the output channels `ψ₃` (0) and `ψ₄` (1).

use std::f64::consts::FRAC_1_SQRT_2;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::qcore::{
    pauli_along, BlochVector, Complex, Label, Operator, OperatorKind, StateVector,
    STRUCTURAL_TOL,
};
use crate::states::Wing1Setting;

const ZERO: Complex = Complex::new(0.0, 0.0);
const ONE: Complex = Complex::new(1.0, 0.0);

/// Real BS2 amplitudes with `γ² + δ² = 1`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BeamSplitterParams {
    pub gamma: f64,
    pub delta: f64,
}

impl BeamSplitterParams {
    pub fn new(gamma: f64, delta: f64) -> Result<Self> {
        if !gamma.is_finite()
            || !delta.is_finite()
            || (gamma * gamma + delta * delta - 1.0).abs() > STRUCTURAL_TOL
        {
            return Err(Error::BeamSplitterNorm { gamma, delta });
        }
        Ok(BeamSplitterParams { gamma, delta })
    }

    /// `γ = cos θ`, `δ = sin θ`.
    pub fn from_angle(theta: f64) -> Self {
        let (s, c) = theta.sin_cos();
        BeamSplitterParams { gamma: c, delta: s }
    }

    pub fn balanced() -> Self {
        BeamSplitterParams {
            gamma: FRAC_1_SQRT_2,
            delta: FRAC_1_SQRT_2,
        }
    }

    /// Output channel states `|ψ₃⟩ = −iγ|ψ₁⟩ + δ|ψ₂⟩`, `|ψ₄⟩ = δ|ψ₁⟩ − iγ|ψ₂⟩`.
    pub fn output_channels(&self) -> (StateVector, StateVector) {
        let (g, d) = (self.gamma, self.delta);
        let psi3 = vec![Complex::new(0.0, -g), Complex::new(d, 0.0)];
        let psi4 = vec![Complex::new(d, 0.0), Complex::new(0.0, -g)];
        (
            StateVector::new(vec![Label::PATH], psi3).expect("two amplitudes"),
            StateVector::new(vec![Label::PATH], psi4).expect("two amplitudes"),
        )
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Component {
    Bs1,
    SpinFlipper { axis: BlochVector },
    Mirror,
    /// Phase `e^{iχ}` on arm `ψ₁`.
    PhaseShifter { chi: f64 },
    Bs2(BeamSplitterParams),
}

impl Component {
    pub fn unitary(&self) -> Result<Operator> {
        let id_spin = Operator::identity(vec![Label::SPIN2])?;
        match self {
            Component::Bs1 => bs1_unitary().tensor(&id_spin),
            Component::SpinFlipper { axis } => sf_unitary(axis),
            Component::Mirror => Operator::identity(vec![Label::PATH, Label::SPIN2]),
            Component::PhaseShifter { chi } => phase_shifter_unitary(*chi).tensor(&id_spin),
            Component::Bs2(p) => bs2_unitary(p).tensor(&id_spin),
        }
    }

    fn name(&self) -> &'static str {
        match self {
            Component::Bs1 => "bs1",
            Component::SpinFlipper { .. } => "sf",
            Component::Mirror => "mirror",
            Component::PhaseShifter { .. } => "phase",
            Component::Bs2(_) => "bs2",
        }
    }
}

/// 50:50 splitter sending input port 1 to `i(|ψ₁⟩ + |ψ₂⟩)/√2`.
pub fn bs1_unitary() -> Operator {
    let a = Complex::new(0.0, FRAC_1_SQRT_2);
    Operator::from_rows(vec![Label::PATH], [[a, a], [a, -a]], OperatorKind::Unitary)
        .expect("BS1 is unitary")
}

/// `P(ψ₁) ⊗ (axis·σ⃗) + P(ψ₂) ⊗ I` on `path ⊗ spin2`.
pub fn sf_unitary(axis: &BlochVector) -> Result<Operator> {
    let flip = pauli_along(axis, Label::SPIN2)?;
    let mut m = vec![ZERO; 16];
    for r in 0..2 {
        for c in 0..2 {
            m[r * 4 + c] = flip.entry(r, c);
        }
    }
    m[2 * 4 + 2] = ONE;
    m[3 * 4 + 3] = ONE;
    Operator::new(vec![Label::PATH, Label::SPIN2], m, OperatorKind::Unitary)
}

/// `diag(e^{iχ}, 1)` on the path.
pub fn phase_shifter_unitary(chi: f64) -> Operator {
    Operator::from_rows(
        vec![Label::PATH],
        [[Complex::from_polar(1.0, chi), ZERO], [ZERO, ONE]],
        OperatorKind::Unitary,
    )
    .expect("phase shifter is unitary")
}

/// Maps `|ψ₃⟩ ↦ |0⟩`, `|ψ₄⟩ ↦ |1⟩`: rows are `⟨ψ₃|` and `⟨ψ₄|`.
pub fn bs2_unitary(p: &BeamSplitterParams) -> Operator {
    let g = Complex::new(0.0, p.gamma);
    let d = Complex::new(p.delta, 0.0);
    Operator::from_rows(vec![Label::PATH], [[g, d], [d, g]], OperatorKind::Unitary)
        .expect("BS2 is unitary")
}

/// Runs a single wing-2 spin state through BS1 and the spin-flipper (field along `+x̂`).
pub fn prepare_bs1_sf(spin_in: &StateVector) -> Result<StateVector> {
    prepare_with_axis(spin_in, &BlochVector::X)
}

pub fn prepare_with_axis(spin_in: &StateVector, axis: &BlochVector) -> Result<StateVector> {
    if spin_in.labels().len() != 1 {
        return Err(Error::WrongLabelCount {
            expected: 1,
            got: spin_in.labels().len(),
        });
    }
    spin_in.ensure_normalized()?;
    let spin = StateVector::new(vec![Label::SPIN2], spin_in.amps().to_vec())?;
    let s = StateVector::basis(Label::PATH, 0).tensor(&spin)?;
    let s = bs1_unitary().apply(&s)?;
    sf_unitary(axis)?.apply(&s)
}

/// Two-outcome path observable `P(ψ₃) − P(ψ₄)`, optionally preceded by a phase `χ` on arm `ψ₁`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PathObservable {
    pub gamma: f64,
    pub delta: f64,
    pub chi: f64,
    #[serde(skip)]
    matrix: Option<Operator>,
    #[serde(skip)]
    projectors: Option<(Operator, Operator)>,
    pub bloch: BlochVector,
}

impl PathObservable {
    pub fn new(gamma: f64, delta: f64, chi: f64) -> Result<Self> {
        let bs = BeamSplitterParams::new(gamma, delta)?;
        if !chi.is_finite() {
            return Err(Error::Numerical(format!("phase χ = {chi}")));
        }
        Ok(PathObservable::from_params(&bs, chi))
    }

    /// `γ = cos θ`, `δ = sin θ`.
    pub fn from_angles(theta: f64, chi: f64) -> Self {
        PathObservable::from_params(&BeamSplitterParams::from_angle(theta), chi)
    }

    fn from_params(bs: &BeamSplitterParams, chi: f64) -> Self {
        let (g, d) = (bs.gamma, bs.delta);
        let diag = g * g - d * d;
        let off = 2.0 * g * d;
        // Φ† A Φ with Φ = diag(e^{iχ}, 1) only rotates the off-diagonal phase
        let upper = Complex::new(0.0, -off) * Complex::from_polar(1.0, -chi);
        let matrix = if chi == 0.0 {
            [
                [Complex::new(diag, 0.0), Complex::new(0.0, -off)],
                [Complex::new(0.0, off), Complex::new(-diag, 0.0)],
            ]
        } else {
            [
                [Complex::new(diag, 0.0), upper],
                [upper.conj(), Complex::new(-diag, 0.0)],
            ]
        };
        let matrix = Operator::from_rows(vec![Label::PATH], matrix, OperatorKind::Hermitian)
            .expect("path observable is Hermitian");
        let bloch = if chi == 0.0 {
            BlochVector::new(0.0, off, diag)
        } else {
            let (s, c) = chi.sin_cos();
            BlochVector::new(-off * s, off * c, diag)
        };
        let phase = phase_shifter_unitary(chi);
        let (psi3, psi4) = bs.output_channels();
        let project = |v: &StateVector| -> Operator {
            let v = phase.dagger().apply(v).expect("path state");
            let v = v.normalized().expect("output channel is nonzero");
            let a = v.amps();
            Operator::from_rows(
                vec![Label::PATH],
                [[a[0] * a[0].conj(), a[0] * a[1].conj()], [a[1] * a[0].conj(), a[1] * a[1].conj()]],
                OperatorKind::Projector,
            )
            .expect("rank-one projector")
        };
        PathObservable {
            gamma: g,
            delta: d,
            chi,
            matrix: Some(matrix),
            projectors: Some((project(&psi3), project(&psi4))),
            bloch,
        }
    }

    /// Rebuilds the cached operators (needed after deserialization).
    pub fn rebuild(&self) -> Result<Self> {
        PathObservable::new(self.gamma, self.delta, self.chi)
    }

    pub fn matrix(&self) -> &Operator {
        self.matrix.as_ref().expect("constructed via PathObservable::new")
    }

    /// Projectors onto the (phase-adjusted) output channels `ψ₃`, `ψ₄`, in the pre-BS2 basis.
    pub fn channel_projectors(&self) -> (&Operator, &Operator) {
        let (p3, p4) = self
            .projectors
            .as_ref()
            .expect("constructed via PathObservable::new");
        (p3, p4)
    }

    pub fn params(&self) -> BeamSplitterParams {
        BeamSplitterParams {
            gamma: self.gamma,
            delta: self.delta,
        }
    }
}

/// One path-observable setting in the measurement block: `gamma:delta[:chi]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PathSetting {
    pub gamma: f64,
    pub delta: f64,
    pub chi: Option<f64>,
}

impl PathSetting {
    /// Observable for this setting; `default_chi` is used when no per-setting phase is given.
    pub fn observable(&self, default_chi: f64) -> Result<PathObservable> {
        PathObservable::new(self.gamma, self.delta, self.chi.unwrap_or(default_chi))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeasurementSpec {
    pub spin_dirs: [BlochVector; 2],
    pub bs2_settings: [PathSetting; 2],
    pub shots: Option<u64>,
    pub seed: Option<u64>,
}

impl Default for MeasurementSpec {
    fn default() -> Self {
        let a1 = BeamSplitterParams::from_angle(3.0 * std::f64::consts::FRAC_PI_8);
        let a2 = BeamSplitterParams::from_angle(5.0 * std::f64::consts::FRAC_PI_8);
        MeasurementSpec {
            spin_dirs: [BlochVector::Z, BlochVector::X],
            bs2_settings: [
                PathSetting { gamma: a1.gamma, delta: a1.delta, chi: None },
                PathSetting { gamma: a2.gamma, delta: a2.delta, chi: None },
            ],
            shots: None,
            seed: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ApparatusSpec {
    pub source: Wing1Setting,
    pub pipeline: Vec<Component>,
    pub measurement: MeasurementSpec,
}

impl ApparatusSpec {
    /// Phase χ of the pipeline's phase shifter (0 when absent).
    pub fn pipeline_chi(&self) -> f64 {
        self.pipeline
            .iter()
            .map(|c| match c {
                Component::PhaseShifter { chi } => *chi,
                _ => 0.0,
            })
            .sum()
    }

    /// Spin-flipper field axis; `+x̂` when the pipeline has no flipper.
    pub fn sf_axis(&self) -> Option<BlochVector> {
        self.pipeline.iter().find_map(|c| match c {
            Component::SpinFlipper { axis } => Some(*axis),
            _ => None,
        })
    }

    pub fn bs2(&self) -> Option<BeamSplitterParams> {
        self.pipeline.iter().find_map(|c| match c {
            Component::Bs2(p) => Some(*p),
            _ => None,
        })
    }

    /// Both path observables of the measurement block.
    pub fn path_observables(&self) -> Result<[PathObservable; 2]> {
        let chi = self.pipeline_chi();
        let [s1, s2] = &self.measurement.bs2_settings;
        Ok([s1.observable(chi)?, s2.observable(chi)?])
    }

    /// Hex SHA-256 of the canonical JSON form of the parsed spec.
    pub fn content_hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("spec serializes");
        hex::encode(Sha256::digest(&json))
    }
}

/// Ordered product `U_n ⋯ U_1` on `path ⊗ spin2`; identity for an empty list.
pub fn compile_components(components: &[Component]) -> Result<Operator> {
    let mut total = Operator::identity(vec![Label::PATH, Label::SPIN2])?;
    for c in components {
        total = c.unitary()?.compose(&total)?;
    }
    if !total.is_unitary(STRUCTURAL_TOL) {
        return Err(Error::Numerical("compiled pipeline is not unitary".into()));
    }
    total.with_kind(OperatorKind::Unitary)
}

pub fn compile_pipeline(spec: &ApparatusSpec) -> Result<Operator> {
    compile_components(&spec.pipeline)
}

/// Pipeline up to (not including) BS2.
pub fn compile_preparation(spec: &ApparatusSpec) -> Result<Operator> {
    let pre: Vec<Component> = spec
        .pipeline
        .iter()
        .filter(|c| !matches!(c, Component::Bs2(_) | Component::PhaseShifter { .. }))
        .cloned()
        .collect();
    compile_components(&pre)
}

// ---------------------------------------------------------------------------
// parsing

#[derive(Clone, Copy, PartialEq)]
enum Section {
    Source,
    Pipeline,
    Measurement,
}

/// A token with its 1-based column in the original line.
#[derive(Clone, Copy)]
struct Token<'a> {
    text: &'a str,
    column: usize,
}

fn tokens(line: &str) -> impl Iterator<Item = Token<'_>> {
    let base = line.as_ptr() as usize;
    line.split_whitespace().map(move |t| Token {
        text: t,
        column: line[..t.as_ptr() as usize - base].chars().count() + 1,
    })
}

fn sub_token<'a>(line: &'a str, part: &'a str) -> Token<'a> {
    let offset = part.as_ptr() as usize - line.as_ptr() as usize;
    Token {
        text: part,
        column: line[..offset].chars().count() + 1,
    }
}

fn parse_f64(lineno: usize, tok: Token<'_>) -> Result<f64> {
    tok.text
        .trim()
        .parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| Error::parse(lineno, tok.column, format!("expected a number, found `{}`", tok.text.trim())))
}

fn parse_u64(lineno: usize, tok: Token<'_>) -> Result<u64> {
    tok.text.trim().parse::<u64>().map_err(|_| {
        Error::parse(
            lineno,
            tok.column,
            format!("expected a non-negative integer, found `{}`", tok.text.trim()),
        )
    })
}

/// `x`, `y`, `z`, optionally negated, or `ux,uy,uz`. Returned unnormalized.
fn parse_direction(line: &str, lineno: usize, tok: Token<'_>) -> Result<BlochVector> {
    let text = tok.text.trim();
    let (neg, axis) = match text.strip_prefix('-') {
        Some(rest) if matches!(rest, "x" | "y" | "z") => (true, rest),
        _ => (false, text),
    };
    let v = match axis {
        "x" => BlochVector::X,
        "y" => BlochVector::Y,
        "z" => BlochVector::Z,
        _ => {
            let inner = text
                .strip_prefix('(')
                .and_then(|t| t.strip_suffix(')'))
                .unwrap_or(text);
            let parts: Vec<&str> = inner.split(',').collect();
            if parts.len() != 3 {
                return Err(Error::parse(
                    lineno,
                    tok.column,
                    format!("expected a direction `x|y|z|ux,uy,uz`, found `{text}`"),
                ));
            }
            let mut c = [0.0; 3];
            for (slot, p) in c.iter_mut().zip(parts) {
                *slot = parse_f64(lineno, sub_token(line, p))?;
            }
            BlochVector::from_array(c)
        }
    };
    Ok(if neg { -v } else { v })
}

/// Splits on commas that are not inside parentheses.
fn split_top_level(s: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut depth = 0i32;
    let mut start = 0;
    for (i, ch) in s.char_indices() {
        match ch {
            '(' => depth += 1,
            ')' => depth -= 1,
            ',' if depth == 0 => {
                out.push(&s[start..i]);
                start = i + 1;
            }
            _ => {}
        }
    }
    out.push(&s[start..]);
    out
}

fn key_value<'a>(line: &'a str, lineno: usize) -> Result<(Token<'a>, Token<'a>)> {
    let eq = line
        .find('=')
        .ok_or_else(|| Error::parse(lineno, line.len() - line.trim_start().len() + 1, "expected `key = value`"))?;
    let key = line[..eq].trim();
    let value = line[eq + 1..].trim();
    if key.is_empty() {
        return Err(Error::parse(lineno, 1, "missing key before `=`"));
    }
    if value.is_empty() {
        return Err(Error::parse(lineno, eq + 2, format!("missing value for `{key}`")));
    }
    Ok((sub_token(line, key), sub_token(line, value)))
}

/// Parses `key=value` arguments of a pipeline line against the allowed keys.
fn component_args<'a>(
    lineno: usize,
    args: &[Token<'a>],
    allowed: &[&str],
) -> Result<Vec<(&'a str, Token<'a>)>> {
    let mut out: Vec<(&str, Token)> = Vec::new();
    for a in args {
        let (k, v) = a.text.split_once('=').ok_or_else(|| {
            Error::parse(lineno, a.column, format!("expected `key=value`, found `{}`", a.text))
        })?;
        if !allowed.contains(&k) {
            return Err(Error::parse(lineno, a.column, format!("unknown argument `{k}`")));
        }
        if out.iter().any(|(seen, _)| *seen == k) {
            return Err(Error::parse(lineno, a.column, format!("duplicate argument `{k}`")));
        }
        let column = a.column + k.chars().count() + 1;
        out.push((k, Token { text: v, column }));
    }
    Ok(out)
}

fn required<'a>(
    lineno: usize,
    column: usize,
    args: &[(&str, Token<'a>)],
    key: &str,
) -> Result<Token<'a>> {
    args.iter()
        .find(|(k, _)| *k == key)
        .map(|(_, v)| *v)
        .ok_or_else(|| Error::parse(lineno, column, format!("missing argument `{key}`")))
}

fn parse_component(line: &str, lineno: usize) -> Result<Component> {
    let toks: Vec<Token> = tokens(line).collect();
    let head = toks[0];
    let args = &toks[1..];
    let no_args = |name: &str| -> Result<()> {
        match args.first() {
            Some(t) => Err(Error::parse(lineno, t.column, format!("`{name}` takes no arguments"))),
            None => Ok(()),
        }
    };
    match head.text {
        "bs1" => no_args("bs1").map(|_| Component::Bs1),
        "mirror" => no_args("mirror").map(|_| Component::Mirror),
        "sf" => {
            let a = component_args(lineno, args, &["axis"])?;
            let axis = match a.first() {
                Some((_, t)) => parse_direction(line, lineno, *t)?,
                None => BlochVector::X,
            };
            let axis = axis.normalized_checked().map_err(|_| {
                Error::validation(Some(lineno), "spin-flipper axis must be a unit vector")
            })?;
            Ok(Component::SpinFlipper { axis })
        }
        "phase" => {
            let a = component_args(lineno, args, &["chi", "arm"])?;
            let chi = parse_f64(lineno, required(lineno, head.column, &a, "chi")?)?;
            if let Some((_, arm)) = a.iter().find(|(k, _)| *k == "arm") {
                if arm.text != "1" {
                    return Err(Error::validation(
                        Some(lineno),
                        "phase shifter is supported on arm 1 only",
                    ));
                }
            }
            Ok(Component::PhaseShifter { chi })
        }
        "bs2" => {
            let a = component_args(lineno, args, &["gamma", "delta"])?;
            let gamma = parse_f64(lineno, required(lineno, head.column, &a, "gamma")?)?;
            let delta = parse_f64(lineno, required(lineno, head.column, &a, "delta")?)?;
            let p = BeamSplitterParams::new(gamma, delta)
                .map_err(|e| Error::validation(Some(lineno), e.to_string()))?;
            Ok(Component::Bs2(p))
        }
        other => Err(Error::parse(
            lineno,
            head.column,
            format!("unknown component `{other}` (expected bs1, sf, mirror, phase or bs2)"),
        )),
    }
}

fn parse_path_setting(line: &str, lineno: usize, part: &str) -> Result<PathSetting> {
    let tok = sub_token(line, part.trim());
    let fields: Vec<&str> = tok.text.split(':').collect();
    if !(2..=3).contains(&fields.len()) {
        return Err(Error::parse(
            lineno,
            tok.column,
            format!("expected `gamma:delta[:chi]`, found `{}`", tok.text),
        ));
    }
    let gamma = parse_f64(lineno, sub_token(line, fields[0]))?;
    let delta = parse_f64(lineno, sub_token(line, fields[1]))?;
    let chi = fields
        .get(2)
        .map(|f| parse_f64(lineno, sub_token(line, f)))
        .transpose()?;
    BeamSplitterParams::new(gamma, delta)
        .map_err(|e| Error::validation(Some(lineno), e.to_string()))?;
    Ok(PathSetting { gamma, delta, chi })
}

fn exactly_two<T>(lineno: usize, column: usize, key: &str, v: Vec<T>) -> Result<[T; 2]> {
    let n = v.len();
    <[T; 2]>::try_from(v).map_err(|_| {
        Error::parse(lineno, column, format!("`{key}` needs exactly two entries, found {n}"))
    })
}

/// Parses an apparatus description and checks every invariant of the result.
pub fn parse_apparatus(text: &str) -> Result<ApparatusSpec> {
    let mut section: Option<Section> = None;
    let mut seen_sections: Vec<(Section, usize)> = Vec::new();
    let mut source: Option<Wing1Setting> = None;
    let mut pipeline: Vec<(usize, Component)> = Vec::new();
    let mut measurement = MeasurementSpec::default();
    let mut seen_keys: Vec<&'static str> = Vec::new();

    for (idx, raw) in text.lines().enumerate() {
        let lineno = idx + 1;
        let line = raw.split('#').next().unwrap_or("");
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let first_col = line[..line.len() - line.trim_start().len()].chars().count() + 1;

        if let Some(rest) = trimmed.strip_prefix('[') {
            let name = rest.strip_suffix(']').ok_or_else(|| {
                Error::parse(lineno, first_col, "unterminated section header")
            })?;
            let s = match name.trim() {
                "source" => Section::Source,
                "pipeline" => Section::Pipeline,
                "measurement" => Section::Measurement,
                other => {
                    return Err(Error::parse(
                        lineno,
                        first_col + 1,
                        format!("unknown section `[{other}]`"),
                    ))
                }
            };
            if seen_sections.iter().any(|(x, _)| *x == s) {
                return Err(Error::parse(lineno, first_col, format!("duplicate section `[{}]`", name.trim())));
            }
            seen_sections.push((s, lineno));
            section = Some(s);
            continue;
        }

        let current = section.ok_or_else(|| {
            Error::parse(lineno, first_col, "content outside of a section")
        })?;
        match current {
            Section::Pipeline => pipeline.push((lineno, parse_component(line, lineno)?)),
            Section::Source | Section::Measurement => {
                let (key, value) = key_value(line, lineno)?;
                let known: &'static str = match (current, key.text) {
                    (Section::Source, "wing1_setting") => "wing1_setting",
                    (Section::Measurement, "spin_dirs") => "spin_dirs",
                    (Section::Measurement, "bs2_settings") => "bs2_settings",
                    (Section::Measurement, "shots") => "shots",
                    (Section::Measurement, "seed") => "seed",
                    (_, other) => {
                        return Err(Error::parse(lineno, key.column, format!("unknown key `{other}`")))
                    }
                };
                if seen_keys.contains(&known) {
                    return Err(Error::parse(lineno, key.column, format!("duplicate key `{known}`")));
                }
                seen_keys.push(known);
                match known {
                    "wing1_setting" => {
                        let s = value
                            .text
                            .parse::<Wing1Setting>()
                            .map_err(|m| Error::parse(lineno, value.column, m))?;
                        source = Some(s);
                    }
                    "spin_dirs" => {
                        let dirs = split_top_level(value.text)
                            .into_iter()
                            .map(|p| {
                                let t = sub_token(line, p.trim());
                                let v = parse_direction(line, lineno, t)?;
                                v.normalized_checked().map_err(|_| {
                                    Error::validation(Some(lineno), format!("spin direction `{}` is not a unit vector", t.text))
                                })
                            })
                            .collect::<Result<Vec<_>>>()?;
                        measurement.spin_dirs = exactly_two(lineno, value.column, known, dirs)?;
                    }
                    "bs2_settings" => {
                        let settings = split_top_level(value.text)
                            .into_iter()
                            .map(|p| parse_path_setting(line, lineno, p))
                            .collect::<Result<Vec<_>>>()?;
                        measurement.bs2_settings = exactly_two(lineno, value.column, known, settings)?;
                    }
                    "shots" => {
                        let n = parse_u64(lineno, value)?;
                        if n == 0 {
                            return Err(Error::validation(Some(lineno), "shots must be positive"));
                        }
                        measurement.shots = Some(n);
                    }
                    "seed" => measurement.seed = Some(parse_u64(lineno, value)?),
                    _ => unreachable!(),
                }
            }
        }
    }

    let source = source.ok_or_else(|| {
        Error::validation(None, "missing `wing1_setting` in [source]")
    })?;
    validate_pipeline(&pipeline)?;
    Ok(ApparatusSpec {
        source,
        pipeline: pipeline.into_iter().map(|(_, c)| c).collect(),
        measurement,
    })
}

fn validate_pipeline(pipeline: &[(usize, Component)]) -> Result<()> {
    let count = |name: &str| pipeline.iter().filter(|(_, c)| c.name() == name).count();
    if count("bs1") != 1 {
        let line = pipeline.iter().filter(|(_, c)| c.name() == "bs1").nth(1).map(|(l, _)| *l);
        return Err(Error::validation(line, "exactly one BS1 required"));
    }
    if count("bs2") > 1 {
        let line = pipeline.iter().filter(|(_, c)| c.name() == "bs2").nth(1).map(|(l, _)| *l);
        return Err(Error::validation(line, "at most one BS2 allowed"));
    }
    if count("sf") > 1 {
        let line = pipeline.iter().filter(|(_, c)| c.name() == "sf").nth(1).map(|(l, _)| *l);
        return Err(Error::validation(line, "at most one spin-flipper allowed"));
    }
    if let Some((l, c)) = pipeline.first() {
        if c.name() != "bs1" {
            return Err(Error::validation(Some(*l), "BS1 must be the first component"));
        }
    }
    if let Some(pos) = pipeline.iter().position(|(_, c)| c.name() == "bs2") {
        if pos + 1 != pipeline.len() {
            return Err(Error::validation(
                Some(pipeline[pos + 1].0),
                "no component may follow BS2",
            ));
        }
    }
    Ok(())
}
