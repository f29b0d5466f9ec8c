//! Python bindings: states, the apparatus pipeline, NRI evaluation and sampling.

use pyo3::create_exception;
use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use pathspin::apparatus::{self, ApparatusSpec, PathObservable};
use pathspin::nri::{self, Constraint, NriSettings, NriValue};
use pathspin::scenario::{self, Overrides};
use pathspin::shots::{self, SamplerConfig};
use pathspin::states::{self, Wing1Setting};
use pathspin::{BlochVector, Complex, Label, Sign};

create_exception!(pathspin, ParseError, PyValueError);
create_exception!(pathspin, ValidationError, PyValueError);
create_exception!(pathspin, NumericalError, PyValueError);

fn to_py(e: pathspin::Error) -> PyErr {
    use pathspin::Error as E;
    let msg = e.to_string();
    match e {
        E::Parse { .. } => ParseError::new_err(msg),
        E::Validation { .. } | E::BeamSplitterNorm { .. } | E::NotUnit { .. } => {
            ValidationError::new_err(msg)
        }
        E::Io(_) => PyIOError::new_err(msg),
        E::Numerical(_) => NumericalError::new_err(msg),
        _ => PyValueError::new_err(msg),
    }
}

trait IntoPy<T> {
    fn py_err(self) -> PyResult<T>;
}

impl<T> IntoPy<T> for pathspin::Result<T> {
    fn py_err(self) -> PyResult<T> {
        self.map_err(to_py)
    }
}

fn bloch(v: (f64, f64, f64)) -> PyResult<BlochVector> {
    BlochVector::unit(v.0, v.1, v.2).py_err()
}

fn setting(s: &str) -> PyResult<Wing1Setting> {
    s.parse().map_err(PyValueError::new_err)
}

fn constraint(s: &str) -> PyResult<Constraint> {
    s.parse().map_err(PyValueError::new_err)
}

/// Serializes through JSON so Python sees plain dicts and lists.
fn to_object<'py, T: serde::Serialize>(py: Python<'py>, v: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(v).map_err(|e| PyValueError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

/// Pure state on labelled qubits; the first label is the most significant bit.
#[pyclass(name = "StateVector", module = "pathspin", from_py_object)]
#[derive(Clone)]
struct PyStateVector(pathspin::StateVector);

#[pymethods]
impl PyStateVector {
    #[new]
    fn new(labels: Vec<String>, amps: Vec<Complex>) -> PyResult<Self> {
        let labels = labels.into_iter().map(Label::new).collect();
        Ok(PyStateVector(pathspin::StateVector::new(labels, amps).py_err()?))
    }

    #[getter]
    fn labels(&self) -> Vec<String> {
        self.0.labels().iter().map(|l| l.as_str().to_string()).collect()
    }

    #[getter]
    fn amps(&self) -> Vec<Complex> {
        self.0.amps().to_vec()
    }

    fn norm_sqr(&self) -> f64 {
        self.0.norm_sqr()
    }

    fn fidelity(&self, other: &PyStateVector) -> PyResult<f64> {
        self.0.fidelity(&other.0).py_err()
    }

    fn tensor(&self, other: &PyStateVector) -> PyResult<PyStateVector> {
        Ok(PyStateVector(self.0.tensor(&other.0).py_err()?))
    }

    fn __repr__(&self) -> String {
        format!("StateVector(labels={:?}, amps={:?})", self.labels(), self.0.amps())
    }
}

/// Spin eigenstate `|n, ±⟩` on `spin2`.
#[pyfunction]
#[pyo3(signature = (direction, sign = 1))]
fn spin_state(direction: (f64, f64, f64), sign: i8) -> PyResult<PyStateVector> {
    let sign = if sign >= 0 { Sign::Plus } else { Sign::Minus };
    let s = pathspin::StateVector::eigenstate(Label::SPIN2, &bloch(direction)?, sign).py_err()?;
    Ok(PyStateVector(s))
}

#[pyfunction]
fn make_singlet() -> PyStateVector {
    PyStateVector(states::make_singlet().state().clone())
}

/// One of `phi_plus`, `phi_minus`, `chi_plus`, `chi_minus`.
#[pyfunction]
fn reference_state(name: &str) -> PyResult<PyStateVector> {
    let s = match name {
        "phi_plus" => states::reference::phi_plus(),
        "phi_minus" => states::reference::phi_minus(),
        "chi_plus" => states::reference::chi_plus(),
        "chi_minus" => states::reference::chi_minus(),
        _ => return Err(PyValueError::new_err(format!("unknown reference state `{name}`"))),
    };
    Ok(PyStateVector(s))
}

/// Wing-1 measurement along `direction`: list of `(outcome, weight, spin2 state)`.
#[pyfunction]
fn measure_wing1(direction: (f64, f64, f64)) -> PyResult<Vec<(i8, f64, PyStateVector)>> {
    let subs = states::measure_wing1(&states::make_singlet(), &bloch(direction)?).py_err()?;
    Ok(subs
        .into_iter()
        .map(|s| (s.tag.outcome.value() as i8, s.weight, PyStateVector(s.state)))
        .collect())
}

#[pyfunction]
fn prepare_bs1_sf(spin: &PyStateVector) -> PyResult<PyStateVector> {
    Ok(PyStateVector(apparatus::prepare_bs1_sf(&spin.0).py_err()?))
}

#[pyfunction]
fn concurrence(state: &PyStateVector) -> PyResult<f64> {
    states::concurrence(&state.0).py_err()
}

#[pyfunction]
fn tsirelson_max(state: &PyStateVector) -> PyResult<f64> {
    nri::tsirelson_max(&state.0).py_err()
}

fn nri_dict<'py>(py: Python<'py>, v: &NriValue) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("e11", v.e11)?;
    d.set_item("e12", v.e12)?;
    d.set_item("e21", v.e21)?;
    d.set_item("e22", v.e22)?;
    d.set_item("s", v.s)?;
    Ok(d)
}

fn settings(
    a1: (f64, f64, f64),
    a2: (f64, f64, f64),
    b1: (f64, f64, f64),
    b2: (f64, f64, f64),
) -> PyResult<NriSettings> {
    let a1 = PathObservable::new(a1.0, a1.1, a1.2).py_err()?;
    let a2 = PathObservable::new(a2.0, a2.1, a2.2).py_err()?;
    NriSettings::new(a1, a2, bloch(b1)?, bloch(b2)?).py_err()
}

/// Exact NRI value; path settings are `(gamma, delta, chi)` triples.
#[pyfunction]
fn nri_value<'py>(
    py: Python<'py>,
    state: &PyStateVector,
    a1: (f64, f64, f64),
    a2: (f64, f64, f64),
    b1: (f64, f64, f64),
    b2: (f64, f64, f64),
) -> PyResult<Bound<'py, PyDict>> {
    let v = nri::nri_value(&state.0, &settings(a1, a2, b1, b2)?).py_err()?;
    nri_dict(py, &v)
}

/// Best settings under `paper-literal`, `with-phase` or `free-spin`.
#[pyfunction]
fn optimize_settings<'py>(py: Python<'py>, state: &PyStateVector, constraint_name: &str) -> PyResult<Bound<'py, PyAny>> {
    let opt = nri::optimize_settings(&state.0, constraint(constraint_name)?).py_err()?;
    to_object(py, &scenario::OptimumReport::from(opt))
}

/// The 16 deterministic assignments as `(a1, a2, sz, sx, value)` tuples.
#[pyfunction]
fn enumerate_noncontextual() -> Vec<(i8, i8, i8, i8, i32)> {
    nri::enumerate_noncontextual()
        .into_iter()
        .map(|(hv, v)| (hv.a1, hv.a2, hv.sz, hv.sx, v))
        .collect()
}

/// Detector counts `(n3p, n3m, n4p, n4m)` for one joint setting.
#[pyfunction]
#[pyo3(signature = (state, path, spin, seed = 42, shots = 100_000))]
fn sample_counts(
    state: &PyStateVector,
    path: (f64, f64, f64),
    spin: (f64, f64, f64),
    seed: u64,
    shots: u64,
) -> PyResult<(u64, u64, u64, u64)> {
    let j = nri::JointSetting {
        path: PathObservable::new(path.0, path.1, path.2).py_err()?,
        spin: bloch(spin)?,
    };
    let cfg = SamplerConfig::new(seed, shots).py_err()?;
    let [a, b, c, d] = shots::sample_counts(&state.0, &j, &cfg).py_err()?.counts();
    Ok((a, b, c, d))
}

/// Parsed apparatus description.
#[pyclass(name = "Apparatus", module = "pathspin")]
struct PyApparatus(ApparatusSpec);

#[pymethods]
impl PyApparatus {
    #[staticmethod]
    fn parse(text: &str) -> PyResult<Self> {
        Ok(PyApparatus(apparatus::parse_apparatus(text).py_err()?))
    }

    #[staticmethod]
    fn load(path: std::path::PathBuf) -> PyResult<Self> {
        Ok(PyApparatus(scenario::load_apparatus(path).py_err()?))
    }

    #[getter]
    fn content_hash(&self) -> String {
        self.0.content_hash()
    }

    /// Full scenario report as nested dicts.
    #[pyo3(signature = (seed = None, shots = None, wing1 = None))]
    fn run<'py>(
        &self,
        py: Python<'py>,
        seed: Option<u64>,
        shots: Option<u64>,
        wing1: Option<&str>,
    ) -> PyResult<Bound<'py, PyAny>> {
        let o = Overrides {
            seed,
            shots,
            wing1: wing1.map(setting).transpose()?,
            default_seed: None,
        };
        let report = scenario::run_scenario_spec(&self.0, &o).py_err()?;
        to_object(py, &report)
    }

    #[pyo3(signature = (seed = None, shots = None))]
    fn nosignal<'py>(&self, py: Python<'py>, seed: Option<u64>, shots: Option<u64>) -> PyResult<Bound<'py, PyAny>> {
        let o = Overrides { seed, shots, ..Default::default() };
        to_object(py, &scenario::nosignal_check(&self.0, &o).py_err()?)
    }

    fn sweep<'py>(&self, py: Python<'py>, angles: Vec<f64>) -> PyResult<Bound<'py, PyAny>> {
        to_object(py, &scenario::sweep_wing1_angle(&self.0, &angles).py_err()?)
    }

    /// Wing-2 subensembles before BS2 for a setting `A`, `B` or `angle:<radians>`.
    fn subensembles(&self, wing1: &str) -> PyResult<Vec<(i8, f64, PyStateVector)>> {
        let subs = scenario::evolved_subensembles(&self.0, setting(wing1)?).py_err()?;
        Ok(subs
            .into_iter()
            .map(|s| (s.tag.outcome.value() as i8, s.weight, PyStateVector(s.state)))
            .collect())
    }
}

#[pymodule(name = "pathspin")]
fn pathspin_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    let py = m.py();
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add("TSIRELSON", nri::TSIRELSON)?;
    m.add("HV_BOUND", nri::HV_BOUND)?;
    m.add("ParseError", py.get_type::<ParseError>())?;
    m.add("ValidationError", py.get_type::<ValidationError>())?;
    m.add("NumericalError", py.get_type::<NumericalError>())?;
    m.add_class::<PyStateVector>()?;
    m.add_class::<PyApparatus>()?;
    m.add_function(wrap_pyfunction!(spin_state, m)?)?;
    m.add_function(wrap_pyfunction!(make_singlet, m)?)?;
    m.add_function(wrap_pyfunction!(reference_state, m)?)?;
    m.add_function(wrap_pyfunction!(measure_wing1, m)?)?;
    m.add_function(wrap_pyfunction!(prepare_bs1_sf, m)?)?;
    m.add_function(wrap_pyfunction!(concurrence, m)?)?;
    m.add_function(wrap_pyfunction!(tsirelson_max, m)?)?;
    m.add_function(wrap_pyfunction!(nri_value, m)?)?;
    m.add_function(wrap_pyfunction!(optimize_settings, m)?)?;
    m.add_function(wrap_pyfunction!(enumerate_noncontextual, m)?)?;
    m.add_function(wrap_pyfunction!(sample_counts, m)?)?;
    Ok(())
}
