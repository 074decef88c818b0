//! Python bindings. Structured values cross the boundary as plain
//! dicts and lists through their JSON form.

use std::collections::BTreeMap;

use cilsynth::classifier::{decide, predict, ClassifierBank, Dataset, Pair};
use cilsynth::error::Error;
use cilsynth::experiment::{build_contexts, run_case_study, training_grid, BankFile, ExperimentConfig};
use cilsynth::model::FrenetState;
use cilsynth::sim::{generate_dataset, render_scan, simulate_plant};
use cilsynth::training::pgd_train;
use pyo3::exceptions::{PyIOError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::de::DeserializeOwned;
use serde::Serialize;

fn err(e: Error) -> PyErr {
    match e {
        Error::Io(_) => PyIOError::new_err(e.to_string()),
        Error::Numerical(_) | Error::Domain(_) => PyRuntimeError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn to_py<'py, T: Serialize>(py: Python<'py>, v: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(v).map_err(|e| PyValueError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

fn from_py<T: DeserializeOwned>(obj: &Bound<'_, PyAny>) -> PyResult<T> {
    let text: String = obj.py().import("json")?.call_method1("dumps", (obj,))?.extract()?;
    serde_json::from_str(&text).map_err(|e| PyValueError::new_err(e.to_string()))
}

/// Experiment configuration; defaults reproduce the corridor case study.
#[pyclass(name = "Config", from_py_object)]
#[derive(Clone)]
struct PyConfig(ExperimentConfig);

#[pymethods]
impl PyConfig {
    /// Builds from an optional partial dict plus `CILSYNTH_*` style overrides.
    #[new]
    #[pyo3(signature = (values=None, overrides=None))]
    fn new(values: Option<&Bound<'_, PyAny>>, overrides: Option<BTreeMap<String, String>>) -> PyResult<Self> {
        let text = match values {
            Some(v) => Some(v.py().import("json")?.call_method1("dumps", (v,))?.extract::<String>()?),
            None => None,
        };
        ExperimentConfig::from_json_with_env(text.as_deref(), overrides.unwrap_or_default()).map(Self).map_err(err)
    }

    fn to_dict<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.0)
    }

    fn hash(&self) -> PyResult<String> {
        self.0.hash().map_err(err)
    }
}

#[pyclass(name = "Dataset", from_py_object)]
#[derive(Clone)]
struct PyDataset(Dataset);

#[pymethods]
impl PyDataset {
    #[staticmethod]
    fn read_csv(path: &str) -> PyResult<Self> {
        Dataset::read_csv(path.as_ref()).map(Self).map_err(err)
    }

    fn write_csv(&self, path: &str) -> PyResult<()> {
        self.0.write_csv(path.as_ref()).map_err(err)
    }

    fn __len__(&self) -> usize {
        self.0.len()
    }

    #[getter]
    fn states(&self) -> Vec<Vec<f64>> {
        self.0.records.iter().map(|r| r.x.clone()).collect()
    }

    #[getter]
    fn scans(&self) -> Vec<Vec<f64>> {
        self.0.records.iter().map(|r| r.y.clone()).collect()
    }

    #[getter]
    fn labels(&self) -> Vec<u8> {
        self.0.records.iter().map(|r| r.label.index()).collect()
    }
}

/// Classifier bank with the certificates of its constrained pairs.
#[pyclass(name = "Bank", from_py_object)]
#[derive(Clone)]
struct PyBank(BankFile);

#[pymethods]
impl PyBank {
    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        cilsynth::io::read_json(path.as_ref()).map(Self).map_err(err)
    }

    fn save(&self, path: &str) -> PyResult<()> {
        cilsynth::io::write_json(path.as_ref(), &self.0).map_err(err)
    }

    #[staticmethod]
    fn from_dict(d: &Bound<'_, PyAny>) -> PyResult<Self> {
        let b: BankFile = from_py(d)?;
        b.bank.check().map_err(err)?;
        Ok(Self(b))
    }

    fn to_dict<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.0)
    }

    /// Label chosen for scan `y`, one of 1, 2 or 3.
    fn predict(&self, y: Vec<f64>) -> PyResult<u8> {
        predict(&self.0.bank, &y).map(|c| c.index()).map_err(err)
    }

    /// Raw scores of the pairs 12, 13 and 23.
    fn scores(&self, y: Vec<f64>) -> PyResult<(f64, f64, f64)> {
        let b: &ClassifierBank = &self.0.bank;
        if y.len() != b.dim() {
            return Err(PyValueError::new_err(format!("scan has length {}, bank expects {}", y.len(), b.dim())));
        }
        Ok((b.get(Pair::P12).score(&y), b.get(Pair::P13).score(&y), b.get(Pair::P23).score(&y)))
    }

    fn certified_pairs(&self) -> Vec<String> {
        self.0.certificates.keys().map(|p| p.key().to_string()).collect()
    }

    /// Rechecks every stored witness; returns `{pair: (feasible, failing constraints)}`.
    fn verify(&self) -> PyResult<BTreeMap<String, (bool, Vec<String>)>> {
        let mut out = BTreeMap::new();
        for (p, cert) in &self.0.certificates {
            let rep = cert.verify(&self.0.bank.get(*p).stacked()).map_err(err)?;
            let bad = rep.failures().map(|f| f.name.clone()).collect();
            out.insert(p.key().to_string(), (rep.feasible, bad));
        }
        Ok(out)
    }
}

/// Renders and labels the training grid of `config`.
#[pyfunction]
#[pyo3(signature = (config=None, seed=None))]
fn generate(config: Option<&PyConfig>, seed: Option<u64>) -> PyResult<PyDataset> {
    let cfg = config.map(|c| c.0.clone()).unwrap_or_default();
    let seed = seed.unwrap_or(cfg.run.seed);
    generate_dataset(&cfg.case_world(), &training_grid(&cfg), seed).map(PyDataset).map_err(err)
}

/// Trains a bank; with `constrained` the configured pairs carry certificates.
#[pyfunction]
#[pyo3(signature = (data, config=None, constrained=true))]
fn train(data: &PyDataset, config: Option<&PyConfig>, constrained: bool) -> PyResult<PyBank> {
    let cfg = config.map(|c| c.0.clone()).unwrap_or_default();
    cfg.check().map_err(err)?;
    let contexts = if constrained { build_contexts(&cfg, &data.0).map_err(err)? } else { BTreeMap::new() };
    let t = pgd_train(&data.0, &cfg.train, &contexts).map_err(err)?;
    Ok(PyBank(BankFile::new(t.bank, t.certificates)))
}

/// Range scan seen from `(psi, d)` at arc length `s`, noise free unless `seed` is given.
#[pyfunction]
#[pyo3(signature = (psi, d, s=0.0, config=None, seed=None))]
fn scan(psi: f64, d: f64, s: f64, config: Option<&PyConfig>, seed: Option<u64>) -> PyResult<Vec<f64>> {
    let cfg = config.map(|c| c.0.clone()).unwrap_or_default();
    let x = FrenetState::new(psi, d).map_err(err)?;
    let mut rng = seed.map(ChaCha8Rng::seed_from_u64);
    render_scan(&cfg.case_world(), x, s, rng.as_mut()).map_err(err)
}

/// Closed-loop run of the nonlinear plant; returns the run as a dict.
#[pyfunction]
#[pyo3(signature = (bank, psi, d, config=None, seed=0))]
fn simulate<'py>(py: Python<'py>, bank: &PyBank, psi: f64, d: f64, config: Option<&PyConfig>, seed: u64) -> PyResult<Bound<'py, PyAny>> {
    let cfg = config.map(|c| c.0.clone()).unwrap_or_default();
    let x0 = FrenetState::new(psi, d).map_err(err)?;
    let run = simulate_plant(&bank.0.bank, &cfg.case_world(), x0, &cfg.plant, &cfg.criteria, seed).map_err(err)?;
    to_py(py, &run)
}

/// Full comparison of the unconstrained and certified banks.
#[pyfunction]
#[pyo3(signature = (config=None))]
fn case_study<'py>(py: Python<'py>, config: Option<&PyConfig>) -> PyResult<Bound<'py, PyAny>> {
    let cfg = config.map(|c| c.0.clone()).unwrap_or_default();
    let rep = run_case_study(&cfg).map_err(err)?;
    to_py(py, &rep)
}

/// Decision rule over the three pair scores.
#[pyfunction(name = "decide")]
fn decide_py(s12: f64, s13: f64, s23: f64) -> u8 {
    decide(s12, s13, s23).index()
}

#[pymodule]
fn cilsynth_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyConfig>()?;
    m.add_class::<PyDataset>()?;
    m.add_class::<PyBank>()?;
    m.add_function(wrap_pyfunction!(generate, m)?)?;
    m.add_function(wrap_pyfunction!(train, m)?)?;
    m.add_function(wrap_pyfunction!(scan, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(case_study, m)?)?;
    m.add_function(wrap_pyfunction!(decide_py, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
