//! Python bindings: the main simulators and limit objects, addressed by
//! explicit seeds so results are reproducible from Python as well.

use fragstat_core::dislocation::DislocationLaw as CoreLaw;
use fragstat_core::empirical::{self, EmpiricalMeasure, TestFunction};
use fragstat_core::fragtree;
use fragstat_core::limits;
use fragstat_core::renewal::{self, StationaryLaw as CoreEta, WaitingLaw as CorePi};
use fragstat_core::rng::{stream, Domain, Streams};
use fragstat_core::taglines;
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn err(e: fragstat_core::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

/// A dislocation law (one split of a fragment).
#[pyclass(frozen)]
struct DislocationLaw {
    inner: CoreLaw,
}

#[pymethods]
impl DislocationLaw {
    /// Binary split (v, 1-v) with v uniform on [c, 1-c].
    #[staticmethod]
    fn binary_uniform(c: f64) -> PyResult<Self> {
        Ok(Self {
            inner: CoreLaw::binary_uniform(c).map_err(err)?,
        })
    }

    /// Fixed binary split (p, 1-p); diagnostic family.
    #[staticmethod]
    fn deterministic_binary(p: f64) -> PyResult<Self> {
        Ok(Self {
            inner: CoreLaw::deterministic_binary(p).map_err(err)?,
        })
    }

    /// Binary split with a piecewise-linear ratio density given by
    /// (position, weight) knots on [c, 1-c].
    #[staticmethod]
    fn binary_density(c: f64, table: Vec<(f64, f64)>) -> PyResult<Self> {
        Ok(Self {
            inner: CoreLaw::binary_density(c, &table).map_err(err)?,
        })
    }

    /// Standing-assumption flags as a dict.
    fn validate<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyDict>> {
        let r = self.inner.validate();
        let d = PyDict::new(py);
        d.set_item("probability_law", r.probability_law)?;
        d.set_item("conservative", r.conservative)?;
        d.set_item("compact_support", r.compact_support)?;
        d.set_item("continuous_density", r.continuous_density)?;
        d.set_item("all_pass", r.all_pass())?;
        Ok(d)
    }

    /// One ratio vector (descending, summing to 1).
    fn sample_ratios(&self, seed: u64) -> Vec<f64> {
        let mut rng = stream(seed, Domain::Tree, 0);
        self.inner.sample_ratios(&mut rng).ratios().to_vec()
    }

    /// Support of -log(ratio).
    fn support_log_ratio(&self) -> (f64, f64) {
        self.inner.support_log_ratio()
    }

    fn __repr__(&self) -> String {
        format!("DislocationLaw({:?})", self.inner.family())
    }
}

/// Frozen population of one fragmentation tree.
#[pyclass(frozen)]
struct FragmentationOutcome {
    sizes: Vec<f64>,
    epsilon: f64,
    node_count: u64,
}

#[pymethods]
impl FragmentationOutcome {
    #[getter]
    fn sizes(&self) -> Vec<f64> {
        self.sizes.clone()
    }

    #[getter]
    fn epsilon(&self) -> f64 {
        self.epsilon
    }

    #[getter]
    fn node_count(&self) -> u64 {
        self.node_count
    }

    fn stats<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyDict>> {
        let mut mass = 0.0f64;
        let mut min = f64::INFINITY;
        let mut max = 0.0f64;
        for &s in &self.sizes {
            mass += s;
            min = min.min(s);
            max = max.max(s);
        }
        let d = PyDict::new(py);
        d.set_item("count", self.sizes.len())?;
        d.set_item("total_mass", mass)?;
        d.set_item("min_size", min)?;
        d.set_item("max_size", max)?;
        Ok(d)
    }

    /// gamma_T(f) for a registry function id (e.g. "power:1").
    fn gamma(&self, function: &str) -> PyResult<f64> {
        let f = TestFunction::parse(function, None).map_err(err)?;
        Ok(EmpiricalMeasure::from_sizes(&self.sizes, self.epsilon).gamma(&f))
    }

    fn __len__(&self) -> usize {
        self.sizes.len()
    }
}

/// Waiting law pi of a tagged line.
#[pyclass(frozen)]
struct WaitingLaw {
    inner: CorePi,
}

#[pymethods]
impl WaitingLaw {
    #[getter]
    fn support(&self) -> (f64, f64) {
        self.inner.support()
    }

    #[getter]
    fn mu(&self) -> f64 {
        self.inner.mu()
    }

    fn density(&self, x: f64) -> PyResult<f64> {
        self.inner.density(x).map_err(err)
    }

    fn cdf(&self, x: f64) -> f64 {
        self.inner.cdf(x)
    }

    fn sample(&self, n: usize, seed: u64) -> Vec<f64> {
        let mut rng = stream(seed, Domain::Renewal, 0);
        (0..n).map(|_| self.inner.sample(&mut rng)).collect()
    }
}

/// Stationary residual law eta.
#[pyclass(frozen)]
struct StationaryLaw {
    inner: CoreEta,
}

#[pymethods]
impl StationaryLaw {
    #[getter]
    fn upper(&self) -> f64 {
        self.inner.upper()
    }

    fn density(&self, x: f64) -> f64 {
        self.inner.density(x)
    }

    fn cdf(&self, x: f64) -> f64 {
        self.inner.cdf(x)
    }

    fn sample(&self, n: usize, seed: u64) -> Vec<f64> {
        let mut rng = stream(seed, Domain::EtaSampler, 0);
        (0..n).map(|_| self.inner.sample(&mut rng)).collect()
    }
}

/// Simulate one frozen tree.
#[pyfunction]
fn simulate_tree(law: &DislocationLaw, epsilon: f64, seed: u64) -> PyResult<FragmentationOutcome> {
    let mut rng = stream(seed, Domain::Tree, 0);
    let out = fragtree::simulate_tree(&law.inner, epsilon, &mut rng).map_err(err)?;
    Ok(FragmentationOutcome {
        sizes: out.fragments.iter().map(|f| f.size).collect(),
        epsilon: out.epsilon,
        node_count: out.node_count,
    })
}

/// Simulate q tagged lines to the horizon; returns a dict with residuals,
/// the separation flag and per-tag epoch counts.
#[pyfunction]
fn simulate_tags<'py>(
    py: Python<'py>,
    law: &DislocationLaw,
    q: u32,
    horizon: f64,
    seed: u64,
) -> PyResult<Bound<'py, PyDict>> {
    let mut rng = stream(seed, Domain::Tags, 0);
    let s = taglines::simulate_tag_summary(&law.inner, q, horizon, &mut rng).map_err(err)?;
    let d = PyDict::new(py);
    d.set_item("residuals", s.residuals)?;
    d.set_item("all_separated", s.all_separated)?;
    d.set_item("n_epochs", s.n_epochs)?;
    Ok(d)
}

/// Derive the waiting law pi from a dislocation law.
#[pyfunction]
fn derive_pi(law: &DislocationLaw) -> PyResult<WaitingLaw> {
    Ok(WaitingLaw {
        inner: renewal::derive_pi(&law.inner).map_err(err)?,
    })
}

/// Derive the stationary residual law eta from pi.
#[pyfunction]
fn stationary_eta(pi: &WaitingLaw) -> PyResult<StationaryLaw> {
    Ok(StationaryLaw {
        inner: renewal::stationary_eta(&pi.inner).map_err(err)?,
    })
}

/// Residual lifetime of a no-delay renewal process at t.
#[pyfunction]
fn simulate_residual(pi: &WaitingLaw, t: f64, n: usize, seed: u64) -> Vec<f64> {
    (0..n)
        .map(|i| {
            let mut rng = stream(seed, Domain::Renewal, i as u64);
            renewal::simulate_residual(&pi.inner, t, &mut rng)
        })
        .collect()
}

/// Limit of the empirical measure: gamma_inf(f) = eta(Phi(f)).
#[pyfunction]
fn gamma_infinity(function: &str, eta: &StationaryLaw) -> PyResult<f64> {
    let f = TestFunction::parse(function, Some(&eta.inner)).map_err(err)?;
    empirical::gamma_infinity(&f, &eta.inner).map_err(err)
}

/// Pair functional V(Phi f, Phi g) by the pair-tag estimator; returns
/// (value, standard error, separated frequency).
#[pyfunction]
fn estimate_v_pairtag(
    law: &DislocationLaw,
    f: &str,
    g: &str,
    epsilon: f64,
    m: u64,
    seed: u64,
) -> PyResult<(f64, f64, f64)> {
    let pi = renewal::derive_pi(&law.inner).map_err(err)?;
    let eta = renewal::stationary_eta(&pi).map_err(err)?;
    let ff = TestFunction::parse(f, Some(&eta)).map_err(err)?;
    let gg = TestFunction::parse(g, Some(&eta)).map_err(err)?;
    let est = limits::estimate_v_pairtag(
        &law.inner,
        &eta,
        &ff,
        &gg,
        epsilon,
        m,
        Streams::new(seed, Domain::VPairTag),
    )
    .map_err(err)?;
    Ok((est.value, est.se, est.separated_frequency))
}

/// K1(q) = sum over i of q!/(q-i)!.
#[pyfunction]
fn k1(q: u32) -> PyResult<u128> {
    limits::k1(q).map_err(err)
}

/// All partitions of {0..q-1} into pairs.
#[pyfunction]
fn pairings(q: u32) -> PyResult<Vec<Vec<(u32, u32)>>> {
    limits::enumerate_pairings(q).map_err(err)
}

/// One-sample Kolmogorov-Smirnov test against the waiting law pi.
#[pyfunction]
fn ks_test_pi(pi: &WaitingLaw, samples: Vec<f64>) -> PyResult<(f64, f64)> {
    let r = fragstat_core::harness::ks_test(&samples, |x| pi.inner.cdf(x)).map_err(err)?;
    Ok((r.statistic, r.p_value))
}

/// One-sample Kolmogorov-Smirnov test against the stationary law eta.
#[pyfunction]
fn ks_test_eta(eta: &StationaryLaw, samples: Vec<f64>) -> PyResult<(f64, f64)> {
    let r = fragstat_core::harness::ks_test(&samples, |x| eta.inner.cdf(x)).map_err(err)?;
    Ok((r.statistic, r.p_value))
}

#[pymodule]
fn fragstat(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", fragstat_core::version())?;
    m.add_class::<DislocationLaw>()?;
    m.add_class::<FragmentationOutcome>()?;
    m.add_class::<WaitingLaw>()?;
    m.add_class::<StationaryLaw>()?;
    m.add_function(wrap_pyfunction!(simulate_tree, m)?)?;
    m.add_function(wrap_pyfunction!(simulate_tags, m)?)?;
    m.add_function(wrap_pyfunction!(derive_pi, m)?)?;
    m.add_function(wrap_pyfunction!(stationary_eta, m)?)?;
    m.add_function(wrap_pyfunction!(simulate_residual, m)?)?;
    m.add_function(wrap_pyfunction!(gamma_infinity, m)?)?;
    m.add_function(wrap_pyfunction!(estimate_v_pairtag, m)?)?;
    m.add_function(wrap_pyfunction!(k1, m)?)?;
    m.add_function(wrap_pyfunction!(pairings, m)?)?;
    m.add_function(wrap_pyfunction!(ks_test_pi, m)?)?;
    m.add_function(wrap_pyfunction!(ks_test_eta, m)?)?;
    Ok(())
}
