//! Rejection ABC against a precomputed simulation cache.
//!
//! A cache of noise-free simulations drawn from a sampling box is built once
//! and reused for every observed TAC. Distances are computed per observed TAC
//! and never stored. Sampling boxes are narrowed sequentially to the span of
//! accepted draws under a decreasing tolerance schedule.

mod cache;
mod observed;

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

pub use cache::{build_cache, build_cache_with, CacheEntry, Provenance, SimCache};
pub use observed::ObservedSummary;

use crate::error::{Error, Result};
use crate::kinetics::{LpNtPetParams, Simulator, Tac};
use crate::prior::{Bounds, UniformBox};
use crate::seed;
use crate::stats;
use crate::summaries::{SummaryContext, SummaryKind};

/// Distance quantiles used to set tolerances from an initial cache.
pub const TOLERANCE_QUANTILES: [f64; 3] = [0.8, 0.02, 0.001];

/// Tolerances for three rounds of sampling-box narrowing.
pub const EPSILON_SCHEDULE: [f64; 3] = [200.0, 50.0, 10.0];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Selection {
    Reject,
    BestK,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PosteriorSample {
    pub theta: LpNtPetParams,
    pub distance: f64,
    /// Position of the draw in its cache.
    pub index: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorSet {
    pub samples: Vec<PosteriorSample>,
    pub epsilon: f64,
    pub kind: SummaryKind,
    pub selection: Selection,
    /// Set when nothing was accepted.
    pub warning: Option<String>,
}

impl PosteriorSet {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn thetas(&self) -> impl Iterator<Item = &LpNtPetParams> {
        self.samples.iter().map(|s| &s.theta)
    }

    /// Per-parameter posterior mean, in parameter order.
    pub fn mean(&self) -> Result<[f64; 7]> {
        if self.is_empty() {
            return Err(Error::EmptyPosterior);
        }
        let mut m = [0.0; 7];
        for t in self.thetas() {
            for (a, v) in m.iter_mut().zip(t.to_array()) {
                *a += v;
            }
        }
        let n = self.len() as f64;
        Ok(m.map(|v| v / n))
    }

    /// One JSON object per accepted draw.
    pub fn write_jsonl(&self, mut w: impl Write) -> Result<()> {
        for s in &self.samples {
            serde_json::to_writer(&mut w, s)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn read_jsonl(r: impl BufRead, kind: SummaryKind, selection: Selection) -> Result<Self> {
        let mut samples: Vec<PosteriorSample> = Vec::new();
        for line in r.lines() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            samples.push(
                serde_json::from_str(&line)
                    .map_err(|e| Error::Format(format!("posterior line: {e}")))?,
            );
        }
        let epsilon = samples.iter().map(|s| s.distance).fold(0.0, f64::max);
        Ok(Self {
            samples,
            epsilon,
            kind,
            selection,
            warning: None,
        })
    }
}

/// All entries with distance strictly below `eps`, in cache order.
///
/// An empty acceptance set is not an error: the result carries a warning.
pub fn abc_reject(cache: &SimCache, obs: &ObservedSummary, eps: f64) -> Result<PosteriorSet> {
    if eps.is_nan() {
        return Err(Error::InvalidArgument("tolerance is NaN".into()));
    }
    let d = obs.distances(cache)?;
    Ok(reject_from(cache, &d, obs.kind(), eps))
}

pub(crate) fn reject_from(
    cache: &SimCache,
    d: &[f64],
    kind: SummaryKind,
    eps: f64,
) -> PosteriorSet {
    let samples: Vec<PosteriorSample> = d
        .iter()
        .enumerate()
        // an infinite tolerance keeps failed fits too, so the whole cache comes back
        .filter(|(_, &di)| di < eps || eps == f64::INFINITY)
        .map(|(index, &distance)| PosteriorSample {
            theta: cache.entries[index].theta,
            distance,
            index,
        })
        .collect();
    let warning = samples.is_empty().then(|| {
        let msg = format!("no cache entry within tolerance {eps}");
        log::warn!("{msg}");
        msg
    });
    PosteriorSet {
        samples,
        epsilon: eps,
        kind,
        selection: Selection::Reject,
        warning,
    }
}

/// The `k` closest entries; ties broken by cache order.
pub fn abc_best_k(cache: &SimCache, obs: &ObservedSummary, k: usize) -> Result<PosteriorSet> {
    if k == 0 || k > cache.len() {
        return Err(Error::InvalidArgument(format!(
            "k must be in 1..={}, got {k}",
            cache.len()
        )));
    }
    let d = obs.distances(cache)?;
    Ok(best_k_from(cache, &d, obs.kind(), k))
}

pub(crate) fn best_k_from(
    cache: &SimCache,
    d: &[f64],
    kind: SummaryKind,
    k: usize,
) -> PosteriorSet {
    let mut order: Vec<usize> = (0..d.len()).collect();
    let cmp = |a: &usize, b: &usize| d[*a].total_cmp(&d[*b]).then(a.cmp(b));
    if k < order.len() {
        order.select_nth_unstable_by(k - 1, cmp);
        order.truncate(k);
    }
    order.sort_by(cmp);
    let samples: Vec<PosteriorSample> = order
        .into_iter()
        .map(|index| PosteriorSample {
            theta: cache.entries[index].theta,
            distance: d[index],
            index,
        })
        .collect();
    let epsilon = samples.last().map_or(0.0, |s| s.distance);
    PosteriorSet {
        samples,
        epsilon,
        kind,
        selection: Selection::BestK,
        warning: None,
    }
}

/// Nearest-rank `q`-quantile of the distances over the cache.
pub fn percentile_tolerance(cache: &SimCache, obs: &ObservedSummary, q: f64) -> Result<f64> {
    let d = obs.distances(cache)?;
    tolerance_from(d, q)
}

pub fn tolerance_from(mut d: Vec<f64>, q: f64) -> Result<f64> {
    if !(q > 0.0 && q <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "quantile must be in (0, 1], got {q}"
        )));
    }
    if d.is_empty() {
        return Err(Error::InvalidArgument("no distances".into()));
    }
    d.sort_by(f64::total_cmp);
    Ok(stats::nearest_rank(&d, q))
}

/// Shrinks each range to the span of the accepted draws, intersected with
/// `priors`. The peak time is narrowed on its conditional-uniform coordinate.
pub fn narrow_ranges(
    sampling_box: &UniformBox,
    posterior: &PosteriorSet,
    priors: &UniformBox,
) -> Result<UniformBox> {
    if posterior.is_empty() {
        return Err(Error::EmptyPosterior);
    }
    let mut lo = [f64::INFINITY; 7];
    let mut hi = [f64::NEG_INFINITY; 7];
    for t in posterior.thetas() {
        for (i, c) in sampling_box.coords(t).into_iter().enumerate() {
            lo[i] = lo[i].min(c);
            hi[i] = hi[i].max(c);
        }
    }
    let spans = std::array::from_fn(|i| Bounds::new(lo[i], hi[i]));
    Ok(sampling_box.with_ranges(spans).intersect(priors))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NarrowingStage {
    pub epsilon: f64,
    pub cache_size: usize,
    pub accepted: usize,
    pub sampling_box: UniformBox,
    /// The box produced from this stage's accepted draws.
    pub narrowed: UniformBox,
}

/// Sequential narrowing: for each tolerance, build a cache from the current
/// box, accept draws within tolerance of `obs` and shrink the box to them.
///
/// Stage `s` uses cache seed `seed::derive(seed, s)`.
pub fn sequential_narrowing(
    obs: &Tac,
    kind: SummaryKind,
    ctx: &SummaryContext,
    sim: &Simulator,
    priors: &UniformBox,
    schedule: &[f64],
    n: usize,
    seed: u64,
) -> Result<Vec<NarrowingStage>> {
    let observed = ObservedSummary::new(obs, kind, ctx)?;
    let mut current = *priors;
    let mut stages = Vec::with_capacity(schedule.len());
    for (s, &eps) in schedule.iter().enumerate() {
        let cache = build_cache_with(n, &current, sim, &[kind], seed::derive(seed, s as u64))?;
        let post = abc_reject(&cache, &observed, eps)?;
        let narrowed = narrow_ranges(&current, &post, priors)?;
        stages.push(NarrowingStage {
            epsilon: eps,
            cache_size: n,
            accepted: post.len(),
            sampling_box: current,
            narrowed,
        });
        current = narrowed;
    }
    Ok(stages)
}

/// Observed summaries for many TACs against one shared cache.
pub fn estimate_many(
    cache: &SimCache,
    observed: &[Tac],
    kind: SummaryKind,
    ctx: &SummaryContext,
    k: usize,
) -> Result<Vec<PosteriorSet>> {
    observed
        .iter()
        .map(|obs| abc_best_k(cache, &ObservedSummary::new(obs, kind, ctx)?, k))
        .collect()
}
