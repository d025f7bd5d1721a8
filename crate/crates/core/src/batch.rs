//! Method comparison over noise realisations.
//!
//! Every realisation adds fresh noise to the same clean scenario TAC. ABC
//! estimates are best-k posterior means from one shared cache, WLS estimates
//! come from one shared timing library, and MCMC estimates are chain means
//! after burn-in. A method that fails on a realisation gets a `failed` row and
//! the run continues.

use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::abc::{abc_best_k, build_cache_with, ObservedSummary};
use crate::error::{Error, Result};
use crate::kinetics::{LpNtPetParams, PARAM_NAMES};
use crate::mcmc::{default_step_sizes, rw_metropolis, GaussianErrorModel};
use crate::noise::apply_poisson;
use crate::prior::UniformBox;
use crate::scenario::{ScaleProfile, ScenarioConfig};
use crate::seed;
use crate::stats;
use crate::summaries::{SummaryContext, SummaryKind, WlsContext};
use crate::wls::{sample_timing_library, ReferenceColumns};

pub const CSV_HEADER: &str = "kind,method,parameter,realisation,statistic,value,status";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Abc,
    Wls,
    Mcmc,
}

impl Method {
    pub fn label(&self) -> &'static str {
        match self {
            Method::Abc => "abc",
            Method::Wls => "wls",
            Method::Mcmc => "mcmc",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "abc" => Ok(Method::Abc),
            "wls" => Ok(Method::Wls),
            "mcmc" => Ok(Method::Mcmc),
            _ => Err(Error::InvalidArgument(format!(
                "unknown method '{s}' (expected abc, wls or mcmc)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BatchConfig {
    pub scenario: ScenarioConfig,
    pub realisations: usize,
    pub methods: Vec<Method>,
    pub kind: SummaryKind,
    pub cache_size: usize,
    pub best_k: usize,
    pub library_size: usize,
    /// Sampling box of the ABC cache.
    pub abc_box: UniformBox,
    /// Prior for the WLS timing library and the MCMC target.
    pub priors: UniformBox,
    pub mcmc_steps: usize,
    pub mcmc_burn_in: usize,
    pub nonneg: bool,
}

impl Default for BatchConfig {
    fn default() -> Self {
        Self::with_profile(ScenarioConfig::default(), ScaleProfile::DESK)
    }
}

impl BatchConfig {
    pub fn with_profile(scenario: ScenarioConfig, profile: ScaleProfile) -> Self {
        Self {
            scenario,
            realisations: profile.realisations,
            methods: vec![Method::Abc, Method::Wls],
            kind: SummaryKind::S1Spline,
            cache_size: profile.cache_size,
            best_k: profile.best_k,
            library_size: profile.library_size,
            abc_box: UniformBox::narrowed_reference(),
            priors: UniformBox::default_priors(),
            mcmc_steps: 20_000,
            mcmc_burn_in: 10_000,
            nonneg: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.scenario.validate()?;
        if self.realisations < 2 {
            return Err(Error::InvalidArgument(format!(
                "need at least 2 realisations, got {}",
                self.realisations
            )));
        }
        if self.methods.is_empty() {
            return Err(Error::InvalidArgument("no methods selected".into()));
        }
        if self.best_k == 0 || self.best_k > self.cache_size {
            return Err(Error::InvalidArgument(format!(
                "best_k must be in 1..={}, got {}",
                self.cache_size, self.best_k
            )));
        }
        if self.library_size == 0 {
            return Err(Error::InvalidArgument(
                "timing library must not be empty".into(),
            ));
        }
        if self.mcmc_burn_in > self.mcmc_steps {
            return Err(Error::InvalidArgument(
                "MCMC burn-in exceeds the chain length".into(),
            ));
        }
        self.abc_box.validate()?;
        self.priors.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Statistic {
    Estimate,
    Truth,
    Mean,
    Bias,
    Variance,
}

impl Statistic {
    fn label(&self) -> &'static str {
        match self {
            Statistic::Estimate => "estimate",
            Statistic::Truth => "truth",
            Statistic::Mean => "mean",
            Statistic::Bias => "bias",
            Statistic::Variance => "variance",
        }
    }

    fn parse(s: &str) -> Result<Self> {
        match s {
            "estimate" => Ok(Statistic::Estimate),
            "truth" => Ok(Statistic::Truth),
            "mean" => Ok(Statistic::Mean),
            "bias" => Ok(Statistic::Bias),
            "variance" => Ok(Statistic::Variance),
            _ => Err(Error::Format(format!("unknown statistic '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchRow {
    /// `None` for the truth row.
    pub method: Option<Method>,
    pub parameter: usize,
    pub realisation: Option<usize>,
    pub statistic: Statistic,
    pub value: f64,
    pub ok: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchReport {
    pub kind: SummaryKind,
    pub rows: Vec<BatchRow>,
}

impl BatchReport {
    /// Successful per-realisation estimates of one parameter, in realisation order.
    pub fn estimates(&self, method: Method, parameter: usize) -> Vec<f64> {
        self.rows
            .iter()
            .filter(|r| {
                r.method == Some(method)
                    && r.parameter == parameter
                    && r.statistic == Statistic::Estimate
                    && r.ok
            })
            .map(|r| r.value)
            .collect()
    }

    pub fn aggregate(&self, method: Method, parameter: usize, statistic: Statistic) -> Option<f64> {
        self.rows
            .iter()
            .find(|r| {
                r.method == Some(method) && r.parameter == parameter && r.statistic == statistic
            })
            .map(|r| r.value)
    }

    pub fn failures(&self) -> usize {
        self.rows.iter().filter(|r| !r.ok).count()
    }

    pub fn write_csv(&self, mut w: impl Write) -> Result<()> {
        writeln!(w, "{CSV_HEADER}")?;
        for r in &self.rows {
            writeln!(
                w,
                "{},{},{},{},{},{},{}",
                self.kind,
                r.method.map_or("truth", |m| m.label()),
                PARAM_NAMES[r.parameter],
                r.realisation.map(|i| i.to_string()).unwrap_or_default(),
                r.statistic.label(),
                r.value,
                if r.ok { "ok" } else { "failed" }
            )?;
        }
        Ok(())
    }

    pub fn read_csv(r: impl BufRead) -> Result<Self> {
        let mut lines = r.lines();
        let header = lines.next().transpose()?.unwrap_or_default();
        if header.trim() != CSV_HEADER {
            return Err(Error::Format(format!(
                "unexpected report header '{header}'"
            )));
        }
        let mut kind = None;
        let mut rows = Vec::new();
        for (i, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let bad = |what: &str| Error::Format(format!("report line {}: {what}", i + 2));
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 7 {
                return Err(bad("expected 7 fields"));
            }
            let k: SummaryKind = f[0].parse().map_err(|_| bad("bad kind"))?;
            if *kind.get_or_insert(k) != k {
                return Err(bad("mixed summary kinds"));
            }
            rows.push(BatchRow {
                method: if f[1] == "truth" {
                    None
                } else {
                    Some(f[1].parse().map_err(|_| bad("bad method"))?)
                },
                parameter: PARAM_NAMES
                    .iter()
                    .position(|p| *p == f[2])
                    .ok_or_else(|| bad("bad parameter"))?,
                realisation: if f[3].is_empty() {
                    None
                } else {
                    Some(f[3].parse().map_err(|_| bad("bad realisation"))?)
                },
                statistic: Statistic::parse(f[4])?,
                value: f[5].parse().map_err(|_| bad("bad value"))?,
                ok: match f[6] {
                    "ok" => true,
                    "failed" => false,
                    _ => return Err(bad("bad status")),
                },
            });
        }
        Ok(Self {
            kind: kind.unwrap_or(SummaryKind::S1Spline),
            rows,
        })
    }
}

/// Runs every configured method on `cfg.realisations` noisy copies of the
/// scenario TAC. Seeds: cache `derive(seed, 0)`, timing library
/// `derive(seed, 1)`, noise of realisation `r` `derive(derive(seed, 2), r)`,
/// chain of realisation `r` `derive(derive(seed, 3), r)`.
pub fn batch_compare(cfg: &BatchConfig, seed: u64) -> Result<BatchReport> {
    cfg.validate()?;
    let sc = &cfg.scenario;
    let sim = sc.simulator()?;
    let grid = sc.grid()?;
    let truth = sc.truth();
    let clean = sim.simulate(&truth)?;
    let noise = sc.noise()?;
    let scale_hint = sc.scale_hint()?;
    let wants = |m| cfg.methods.contains(&m);

    let needs_wls = wants(Method::Wls) || (wants(Method::Abc) && cfg.kind == SummaryKind::S4Wls);
    let mut ctx = SummaryContext::new(grid.clone(), scale_hint)?;
    if needs_wls {
        let timings = sample_timing_library(cfg.library_size, &cfg.priors, seed::derive(seed, 1))?;
        ctx = ctx.with_wls(WlsContext {
            refs: Arc::new(ReferenceColumns::new(sim.input(), grid.clone())),
            timings: Arc::new(timings),
            nonneg: cfg.nonneg,
        });
    }
    let cache = match wants(Method::Abc) {
        true => Some(build_cache_with(
            cfg.cache_size,
            &cfg.abc_box,
            &sim,
            &[cfg.kind],
            seed::derive(seed, 0),
        )?),
        false => None,
    };
    let em = GaussianErrorModel::new(1.0 / scale_hint)?;
    let steps = default_step_sizes(&cfg.priors);
    let init = cfg.priors.center();

    let noise_seed = seed::derive(seed, 2);
    let chain_seed = seed::derive(seed, 3);
    let per_realisation: Vec<Vec<Option<[f64; 7]>>> = (0..cfg.realisations)
        .into_par_iter()
        .map(|r| {
            let obs = match &noise {
                Some(nl) => apply_poisson(&clean, nl, seed::derive(noise_seed, r as u64)),
                None => Ok(clean.clone()),
            };
            methods_sorted(cfg)
                .into_iter()
                .map(|m| {
                    let estimate = || -> Result<[f64; 7]> {
                        let obs = obs
                            .as_ref()
                            .map_err(|e| Error::InvalidArgument(e.to_string()))?;
                        match m {
                            Method::Abc => ObservedSummary::new(obs, cfg.kind, &ctx)
                                .and_then(|o| {
                                    abc_best_k(
                                        cache.as_ref().expect("cache built for ABC"),
                                        &o,
                                        cfg.best_k,
                                    )
                                })
                                .and_then(|p| p.mean()),
                            Method::Wls => ctx
                                .wls
                                .as_ref()
                                .expect("library built for WLS")
                                .fit(obs)
                                .map(|f| {
                                    let [r1, k2, k2a, gamma] = f.estimate;
                                    LpNtPetParams {
                                        r1,
                                        k2,
                                        k2a,
                                        gamma,
                                        timing: f.timing,
                                    }
                                    .to_array()
                                }),
                            Method::Mcmc => rw_metropolis(
                                obs,
                                &sim,
                                &em,
                                &cfg.priors,
                                &init,
                                cfg.mcmc_steps,
                                &steps,
                                seed::derive(chain_seed, r as u64),
                            )
                            .map(|c| {
                                let kept = &c.samples[cfg.mcmc_burn_in..];
                                std::array::from_fn(|p| {
                                    stats::mean(
                                        &kept.iter().map(|t| t.to_array()[p]).collect::<Vec<_>>(),
                                    )
                                })
                            }),
                        }
                    };
                    estimate()
                        .map_err(|e| log::warn!("{m} failed on realisation {r}: {e}"))
                        .ok()
                })
                .collect()
        })
        .collect();

    let truth_arr = truth.to_array();
    let mut rows: Vec<BatchRow> = (0..7)
        .map(|p| BatchRow {
            method: None,
            parameter: p,
            realisation: None,
            statistic: Statistic::Truth,
            value: truth_arr[p],
            ok: true,
        })
        .collect();
    for (mi, m) in methods_sorted(cfg).into_iter().enumerate() {
        for p in 0..7 {
            let mut ok_values = Vec::new();
            for (r, ests) in per_realisation.iter().enumerate() {
                let (value, ok) = match &ests[mi] {
                    Some(a) => (a[p], true),
                    None => (f64::NAN, false),
                };
                if ok {
                    ok_values.push(value);
                }
                rows.push(BatchRow {
                    method: Some(m),
                    parameter: p,
                    realisation: Some(r),
                    statistic: Statistic::Estimate,
                    value,
                    ok,
                });
            }
            let mean = if ok_values.is_empty() {
                f64::NAN
            } else {
                stats::mean(&ok_values)
            };
            let var = if ok_values.len() < 2 {
                f64::NAN
            } else {
                stats::variance(&ok_values)
            };
            let agg = |statistic, value: f64| BatchRow {
                method: Some(m),
                parameter: p,
                realisation: None,
                statistic,
                value,
                ok: value.is_finite(),
            };
            rows.push(agg(Statistic::Mean, mean));
            rows.push(agg(Statistic::Bias, mean - truth_arr[p]));
            rows.push(agg(Statistic::Variance, var));
        }
    }
    Ok(BatchReport {
        kind: cfg.kind,
        rows,
    })
}

fn methods_sorted(cfg: &BatchConfig) -> Vec<Method> {
    let mut m = cfg.methods.clone();
    m.sort();
    m.dedup();
    m
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(noise_level: u8) -> BatchConfig {
        let scenario = ScenarioConfig {
            noise_level,
            ..Default::default()
        };
        BatchConfig {
            realisations: 3,
            cache_size: 2_000,
            best_k: 20,
            library_size: 50,
            ..BatchConfig::with_profile(scenario, ScaleProfile::DESK)
        }
    }

    #[test]
    fn noiseless_realisations_agree() {
        let mut cfg = small(0);
        cfg.realisations = 2;
        let rep = batch_compare(&cfg, 4).unwrap();
        for m in [Method::Abc, Method::Wls] {
            for p in 0..7 {
                let e = rep.estimates(m, p);
                assert_eq!(e.len(), 2);
                assert_eq!(e[0].to_bits(), e[1].to_bits(), "{m} parameter {p}");
            }
        }
    }

    #[test]
    fn aggregates_recompute_from_rows() {
        let rep = batch_compare(&small(2), 8).unwrap();
        assert_eq!(rep.failures(), 0);
        for m in [Method::Abc, Method::Wls] {
            for p in 0..7 {
                let e = rep.estimates(m, p);
                assert_eq!(e.len(), 3);
                assert_eq!(
                    rep.aggregate(m, p, Statistic::Mean).unwrap(),
                    stats::mean(&e)
                );
                assert_eq!(
                    rep.aggregate(m, p, Statistic::Variance).unwrap(),
                    stats::variance(&e)
                );
            }
        }
        let truth = rep
            .rows
            .iter()
            .filter(|r| r.statistic == Statistic::Truth)
            .count();
        assert_eq!(truth, 7);
    }

    #[test]
    fn csv_roundtrip_and_determinism() {
        let cfg = small(3);
        let a = batch_compare(&cfg, 21).unwrap();
        let b = batch_compare(&cfg, 21).unwrap();
        let (mut x, mut y) = (Vec::new(), Vec::new());
        a.write_csv(&mut x).unwrap();
        b.write_csv(&mut y).unwrap();
        assert_eq!(x, y);
        assert!(x.starts_with(CSV_HEADER.as_bytes()));
        let back = BatchReport::read_csv(&x[..]).unwrap();
        let mut z = Vec::new();
        back.write_csv(&mut z).unwrap();
        assert_eq!(x, z);
    }

    #[test]
    fn mcmc_rows() {
        let mut cfg = small(3);
        cfg.realisations = 2;
        cfg.methods = vec![Method::Mcmc];
        cfg.mcmc_steps = 300;
        cfg.mcmc_burn_in = 100;
        let rep = batch_compare(&cfg, 2).unwrap();
        assert_eq!(rep.estimates(Method::Mcmc, 0).len(), 2);
        assert!(rep.estimates(Method::Abc, 0).is_empty());
    }

    #[test]
    fn invalid_configs() {
        let mut cfg = small(1);
        cfg.realisations = 1;
        assert!(batch_compare(&cfg, 0).is_err());
        let mut cfg = small(1);
        cfg.best_k = cfg.cache_size + 1;
        assert!(cfg.validate().is_err());
        assert!("mcmc".parse::<Method>().is_ok() && "x".parse::<Method>().is_err());
    }
}
