use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::kinetics::Tac;
use crate::summaries::{
    l1, s3_scales, scaled_l1, spline_smooth_with, SummaryContext, SummaryKind, SummaryVector,
};
use crate::wls::ObservedDesign;

use super::cache::{CacheEntry, SimCache};

/// Observed-side summary, prepared once per observed TAC.
///
/// S4 compares WLS estimates with the response timing fixed at each cache
/// entry's own timing, so the observed estimates differ per entry; the
/// observed design is kept and refitted lazily.
#[derive(Debug, Clone)]
pub struct ObservedSummary {
    kind: SummaryKind,
    vector: Option<SummaryVector>,
    design: Option<ObservedDesign>,
    nonneg: bool,
}

impl ObservedSummary {
    pub fn new(obs: &Tac, kind: SummaryKind, ctx: &SummaryContext) -> Result<Self> {
        if **obs.grid() != *ctx.grid {
            return Err(Error::GridMismatch(
                "observed TAC grid differs from the summary context grid".into(),
            ));
        }
        let (vector, design, nonneg) = match kind {
            SummaryKind::S1Spline => (Some(spline_smooth_with(&ctx.smoother, obs)?), None, false),
            SummaryKind::S2Raw => (
                Some(SummaryVector::new(kind, obs.values().to_vec())),
                None,
                false,
            ),
            SummaryKind::S3Scaled => (
                Some(SummaryVector::scaled(
                    obs.values().to_vec(),
                    s3_scales(obs, ctx.scale_hint),
                )),
                None,
                false,
            ),
            SummaryKind::S4Wls => {
                let w = ctx
                    .wls
                    .as_ref()
                    .ok_or_else(|| Error::MissingContext("S4 needs reference columns".into()))?;
                (None, Some(w.design(obs)?), w.nonneg)
            }
        };
        Ok(Self {
            kind,
            vector,
            design,
            nonneg,
        })
    }

    /// A ready-made summary vector compared against every entry as is.
    pub fn fixed(vector: SummaryVector) -> Self {
        Self {
            kind: vector.kind,
            vector: Some(vector),
            design: None,
            nonneg: false,
        }
    }

    pub fn kind(&self) -> SummaryKind {
        self.kind
    }

    pub fn vector(&self) -> Option<&SummaryVector> {
        self.vector.as_ref()
    }

    /// Discrepancy to one cache entry; `+inf` when the entry's S4 fit failed.
    pub fn distance_to(&self, entry: &CacheEntry) -> Result<f64> {
        let missing = || Error::MissingContext(format!("cache holds no {} summaries", self.kind));
        let d = match (&self.vector, self.kind) {
            (_, SummaryKind::S4Wls) => {
                let sim = entry.wls.ok_or_else(missing)?;
                let est = match (&self.design, &self.vector) {
                    (Some(design), _) => match design.fit_timing(entry.theta.timing, self.nonneg) {
                        Ok(fit) => fit.estimate,
                        Err(Error::RankDeficient { .. }) => return Ok(f64::INFINITY),
                        Err(e) => return Err(e),
                    },
                    (None, Some(v)) => vector4(v)?,
                    (None, None) => unreachable!("S4 summary without design or vector"),
                };
                l1(&est, &sim)
            }
            (Some(v), SummaryKind::S1Spline) => {
                let sim = entry.spline.as_ref().ok_or_else(missing)?;
                check_len(v, sim.len())?;
                l1(&v.values, sim)
            }
            (Some(v), SummaryKind::S2Raw) => {
                check_len(v, entry.tac.n_frames())?;
                l1(&v.values, entry.tac.values())
            }
            (Some(v), SummaryKind::S3Scaled) => {
                check_len(v, entry.tac.n_frames())?;
                let scales = v.scales.as_ref().ok_or_else(|| {
                    Error::MissingContext("S3 observed summary carries no scales".into())
                })?;
                scaled_l1(&v.values, entry.tac.values(), scales)
            }
            (None, _) => unreachable!("non-S4 summary always has a vector"),
        };
        Ok(if d.is_nan() { f64::INFINITY } else { d })
    }

    /// Distances to every entry, in cache order.
    pub fn distances(&self, cache: &SimCache) -> Result<Vec<f64>> {
        if !cache.has_kind(self.kind) {
            return Err(Error::MissingContext(format!(
                "cache was built without {} summaries",
                self.kind
            )));
        }
        cache
            .entries
            .par_iter()
            .map(|e| self.distance_to(e))
            .collect()
    }
}

fn vector4(v: &SummaryVector) -> Result<[f64; 4]> {
    check_len(v, 4)?;
    Ok([v.values[0], v.values[1], v.values[2], v.values[3]])
}

fn check_len(v: &SummaryVector, n: usize) -> Result<()> {
    if v.values.len() != n {
        return Err(Error::KindMismatch(format!(
            "{} summary has {} values, cache has {n}",
            v.kind,
            v.values.len()
        )));
    }
    Ok(())
}
