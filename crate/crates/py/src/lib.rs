//! Python bindings: scenarios, simulation caches, ABC, WLS, predictive bands
//! and the batch comparison.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::sync::Arc;

use pyo3::exceptions::{PyArithmeticError, PyIOError, PyValueError};
use pyo3::prelude::*;

use petabc::abc::{self, ObservedSummary, PosteriorSet, SimCache};
use petabc::batch::{batch_compare, BatchConfig};
use petabc::kinetics::{LpNtPetParams, Simulator, Tac, PARAM_NAMES};
use petabc::ppc;
use petabc::prior::UniformBox;
use petabc::scenario::{ScaleProfile, ScenarioConfig};
use petabc::summaries::{SummaryContext, SummaryKind, WlsContext};
use petabc::wls::{sample_timing_library, ReferenceColumns};
use petabc::Error;

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Io(e) => PyIOError::new_err(e.to_string()),
        e if e.is_numeric() => PyArithmeticError::new_err(e.to_string()),
        e => PyValueError::new_err(e.to_string()),
    }
}

trait IntoPy<T> {
    fn py(self) -> PyResult<T>;
}

impl<T> IntoPy<T> for petabc::Result<T> {
    fn py(self) -> PyResult<T> {
        self.map_err(py_err)
    }
}

fn kind_of(s: &str) -> PyResult<SummaryKind> {
    s.parse().py()
}

fn params_from(v: [f64; 7]) -> PyResult<LpNtPetParams> {
    let p = LpNtPetParams::from_array(v);
    p.validate().py()?;
    Ok(p)
}

/// A synthetic study: activation preset, noise level, grid and reference curve.
#[pyclass(module = "petabc_py", frozen)]
struct Scenario {
    config: ScenarioConfig,
    sim: Arc<Simulator>,
}

impl Scenario {
    fn tac(&self, values: Vec<f64>) -> PyResult<Tac> {
        Tac::new(self.sim.grid().clone(), values).py()
    }

    fn context(&self, obs: &Tac, kind: SummaryKind) -> PyResult<SummaryContext> {
        let ctx =
            SummaryContext::new(self.sim.grid().clone(), self.config.scale_hint().py()?).py()?;
        Ok(match kind {
            SummaryKind::S4Wls => ctx.with_wls(WlsContext {
                refs: Arc::new(ReferenceColumns::new(self.sim.input(), obs.grid().clone())),
                timings: Arc::new(Vec::new()),
                nonneg: false,
            }),
            _ => ctx,
        })
    }
}

#[pymethods]
impl Scenario {
    #[new]
    #[pyo3(signature = (activation = "200", noise_level = 3))]
    fn new(activation: &str, noise_level: u8) -> PyResult<Self> {
        let config = ScenarioConfig {
            activation: activation.parse().py()?,
            noise_level,
            ..Default::default()
        };
        Self::from_config(config)
    }

    /// Builds a scenario from a JSON configuration string.
    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        let config: ScenarioConfig =
            serde_json::from_str(text).map_err(|e| PyValueError::new_err(e.to_string()))?;
        Self::from_config(config)
    }

    fn to_json(&self) -> PyResult<String> {
        serde_json::to_string(&self.config).map_err(|e| PyValueError::new_err(e.to_string()))
    }

    /// True parameters in the order R1, k2, k2a, gamma, tD, tP, alpha.
    #[getter]
    fn truth(&self) -> Vec<f64> {
        self.config.truth().to_array().to_vec()
    }

    #[getter]
    fn frame_midpoints(&self) -> Vec<f64> {
        self.sim.grid().midpoints()
    }

    /// Noise-free frame values for `params` (7 values).
    fn forward(&self, params: [f64; 7]) -> PyResult<Vec<f64>> {
        Ok(self.sim.simulate(&params_from(params)?).py()?.into_values())
    }

    /// Clean and noisy TACs of the truth; the noise stream is fixed by `seed`.
    fn simulate(&self, seed: u64) -> PyResult<(Vec<f64>, Vec<f64>)> {
        let (clean, noisy) = self.config.simulate(&self.sim, seed).py()?;
        Ok((clean.into_values(), noisy.into_values()))
    }

    /// Spline-smoothed frame values.
    fn smooth(&self, values: Vec<f64>) -> PyResult<Vec<f64>> {
        let tac = self.tac(values)?;
        let ctx = self.context(&tac, SummaryKind::S1Spline)?;
        Ok(
            petabc::summaries::summarize(&tac, SummaryKind::S1Spline, &ctx)
                .py()?
                .values,
        )
    }

    /// Simulation cache over the narrowed (`"narrowed"`) or full (`"prior"`) box.
    #[pyo3(signature = (n, seed, kinds = vec!["s1".to_string()], sampling_box = "narrowed"))]
    fn build_cache(
        &self,
        py: Python<'_>,
        n: usize,
        seed: u64,
        kinds: Vec<String>,
        sampling_box: &str,
    ) -> PyResult<Cache> {
        let b = box_named(sampling_box)?;
        let kinds = kinds
            .iter()
            .map(|k| kind_of(k))
            .collect::<PyResult<Vec<_>>>()?;
        let sim = self.sim.clone();
        let inner = py
            .detach(|| abc::build_cache_with(n, &b, &sim, &kinds, seed))
            .py()?;
        Ok(Cache {
            inner: Arc::new(inner),
        })
    }

    /// The `k` closest cache entries to the observed TAC.
    #[pyo3(signature = (cache, observed, k, kind = "s1"))]
    fn abc_best_k(
        &self,
        py: Python<'_>,
        cache: &Cache,
        observed: Vec<f64>,
        k: usize,
        kind: &str,
    ) -> PyResult<Posterior> {
        let kind = kind_of(kind)?;
        let obs = self.tac(observed)?;
        let o = ObservedSummary::new(&obs, kind, &self.context(&obs, kind)?).py()?;
        let c = cache.inner.clone();
        Ok(Posterior {
            inner: py.detach(|| abc::abc_best_k(&c, &o, k)).py()?,
        })
    }

    /// All cache entries closer than `eps`; pass `float("inf")` to keep everything.
    #[pyo3(signature = (cache, observed, eps, kind = "s1"))]
    fn abc_reject(
        &self,
        py: Python<'_>,
        cache: &Cache,
        observed: Vec<f64>,
        eps: f64,
        kind: &str,
    ) -> PyResult<Posterior> {
        let kind = kind_of(kind)?;
        let obs = self.tac(observed)?;
        let o = ObservedSummary::new(&obs, kind, &self.context(&obs, kind)?).py()?;
        let c = cache.inner.clone();
        Ok(Posterior {
            inner: py.detach(|| abc::abc_reject(&c, &o, eps)).py()?,
        })
    }

    /// WLS fit over `library_size` timings drawn from the prior. Returns the
    /// seven parameters and the weighted residual sum of squares.
    #[pyo3(signature = (observed, library_size, seed, nonneg = false))]
    fn wls(
        &self,
        py: Python<'_>,
        observed: Vec<f64>,
        library_size: usize,
        seed: u64,
        nonneg: bool,
    ) -> PyResult<(Vec<f64>, f64)> {
        let obs = self.tac(observed)?;
        let timings =
            sample_timing_library(library_size, &UniformBox::default_priors(), seed).py()?;
        let ctx = WlsContext {
            refs: Arc::new(ReferenceColumns::new(self.sim.input(), obs.grid().clone())),
            timings: Arc::new(timings),
            nonneg,
        };
        let fit = py.detach(|| ctx.fit(&obs)).py()?;
        let [r1, k2, k2a, gamma] = fit.estimate;
        Ok((
            LpNtPetParams {
                r1,
                k2,
                k2a,
                gamma,
                timing: fit.timing,
            }
            .to_array()
            .to_vec(),
            fit.weighted_rss,
        ))
    }

    /// Predictive mean, 2.5% and 97.5% bands per frame. Noise follows the
    /// scenario unless `noise` is false.
    #[pyo3(signature = (posterior, seed, noise = true))]
    fn predictive_bands(
        &self,
        posterior: &Posterior,
        seed: u64,
        noise: bool,
    ) -> PyResult<(Vec<f64>, Vec<f64>, Vec<f64>)> {
        let nl = if noise {
            self.config.noise().py()?
        } else {
            None
        };
        let b = ppc::predictive_bands(&posterior.inner, &self.sim, nl.as_ref(), seed).py()?;
        Ok((b.mean, b.lo, b.hi))
    }

    /// Fraction of frames of `truth` inside the predictive band.
    #[pyo3(signature = (posterior, truth, seed, noise = true))]
    fn coverage(
        &self,
        posterior: &Posterior,
        truth: Vec<f64>,
        seed: u64,
        noise: bool,
    ) -> PyResult<f64> {
        let nl = if noise {
            self.config.noise().py()?
        } else {
            None
        };
        let b = ppc::predictive_bands(&posterior.inner, &self.sim, nl.as_ref(), seed).py()?;
        ppc::coverage(&b, &self.tac(truth)?).py()
    }

    /// Runs the ABC/WLS comparison and returns the report CSV.
    #[pyo3(signature = (seed, realisations = 20, scale = "desk"))]
    fn batch_compare(
        &self,
        py: Python<'_>,
        seed: u64,
        realisations: usize,
        scale: &str,
    ) -> PyResult<String> {
        let profile: ScaleProfile = scale.parse().py()?;
        let mut cfg = BatchConfig::with_profile(self.config.clone(), profile);
        cfg.realisations = realisations;
        let report = py.detach(|| batch_compare(&cfg, seed)).py()?;
        let mut buf = Vec::new();
        report.write_csv(&mut buf).py()?;
        String::from_utf8(buf).map_err(|e| PyValueError::new_err(e.to_string()))
    }

    fn __repr__(&self) -> String {
        format!(
            "Scenario(activation={:?}, noise_level={})",
            self.config.activation, self.config.noise_level
        )
    }
}

impl Scenario {
    fn from_config(config: ScenarioConfig) -> PyResult<Self> {
        config.validate().py()?;
        let sim = Arc::new(config.simulator().py()?);
        Ok(Self { config, sim })
    }
}

fn box_named(name: &str) -> PyResult<UniformBox> {
    match name {
        "narrowed" => Ok(UniformBox::narrowed_reference()),
        "prior" => Ok(UniformBox::default_priors()),
        _ => Err(PyValueError::new_err(format!(
            "unknown box '{name}' (expected narrowed or prior)"
        ))),
    }
}

/// Immutable simulation cache shared across estimates.
#[pyclass(module = "petabc_py", frozen)]
struct Cache {
    inner: Arc<SimCache>,
}

#[pymethods]
impl Cache {
    fn __len__(&self) -> usize {
        self.inner.len()
    }

    #[getter]
    fn resamples(&self) -> u64 {
        self.inner.resamples
    }

    fn save(&self, path: &str) -> PyResult<()> {
        let mut w = BufWriter::new(File::create(path)?);
        self.inner.write_to(&mut w).py()?;
        w.flush()?;
        Ok(())
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        let inner = SimCache::read_from(BufReader::new(File::open(path)?)).py()?;
        Ok(Self {
            inner: Arc::new(inner),
        })
    }
}

/// Accepted draws with their distances.
#[pyclass(module = "petabc_py", frozen)]
struct Posterior {
    inner: PosteriorSet,
}

#[pymethods]
impl Posterior {
    fn __len__(&self) -> usize {
        self.inner.len()
    }

    #[getter]
    fn epsilon(&self) -> f64 {
        self.inner.epsilon
    }

    #[getter]
    fn warning(&self) -> Option<String> {
        self.inner.warning.clone()
    }

    /// One row of seven parameters per draw.
    fn samples(&self) -> Vec<Vec<f64>> {
        self.inner.thetas().map(|t| t.to_array().to_vec()).collect()
    }

    fn distances(&self) -> Vec<f64> {
        self.inner.samples.iter().map(|s| s.distance).collect()
    }

    fn mean(&self) -> PyResult<Vec<f64>> {
        Ok(self.inner.mean().py()?.to_vec())
    }
}

#[pymodule]
fn petabc_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Scenario>()?;
    m.add_class::<Cache>()?;
    m.add_class::<Posterior>()?;
    m.add("PARAMETERS", PARAM_NAMES.to_vec())?;
    m.add("EPSILON_SCHEDULE", abc::EPSILON_SCHEDULE.to_vec())?;
    m.add("__version__", petabc::VERSION)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use pyo3::types::PyDict;

    fn run(code: &str) {
        Python::attach(|py| {
            let m = pyo3::wrap_pymodule!(petabc_py)(py);
            let globals = PyDict::new(py);
            globals.set_item("pb", m).unwrap();
            let code = std::ffi::CString::new(code).unwrap();
            py.run(&code, Some(&globals), None).unwrap();
        });
    }

    #[test]
    fn simulate_and_estimate() {
        run(r#"
sc = pb.Scenario("100", 2)
clean, noisy = sc.simulate(4)
assert clean == sc.forward(sc.truth)
cache = sc.build_cache(500, 1)
post = sc.abc_best_k(cache, noisy, 10)
assert len(post) == 10 and len(post.samples()) == 10
assert len(sc.abc_reject(cache, noisy, float("inf"))) == 500
"#);
    }

    #[test]
    fn errors_map_to_python_exceptions() {
        run(r#"
try:
    pb.Scenario("300", 1)
    raise SystemExit("bad preset accepted")
except ValueError:
    pass
try:
    pb.Scenario().forward([1, 0.3, 0.1, 0.2, 20, 19, 2])
    raise SystemExit("tP before tD accepted")
except ValueError:
    pass
"#);
    }

    #[test]
    fn cache_roundtrip() {
        let dir = std::env::temp_dir().join(format!("petabc_py_{}.bin", std::process::id()));
        let path = dir.to_str().unwrap().replace('\\', "/");
        run(&format!(
            r#"
sc = pb.Scenario()
c = sc.build_cache(100, 3, ["s1", "s4"])
c.save("{path}")
d = pb.Cache.load("{path}")
assert len(d) == 100
"#
        ));
        let _ = std::fs::remove_file(dir);
    }
}
