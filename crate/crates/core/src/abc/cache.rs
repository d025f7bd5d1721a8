use std::io::{Read, Write};
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::LeReader;
use crate::kinetics::{InputCurve, LpNtPetParams, Simulator, Tac, TimeGrid};
use crate::prior::UniformBox;
use crate::seed;
use crate::summaries::{SplineSmoother, SummaryKind, SummaryVector};
use crate::wls::{ObservedDesign, ReferenceColumns};

/// Draw attempts per entry before giving up on a box that keeps failing.
const MAX_ATTEMPTS: u32 = 1000;

const FORMAT_NAME: &str = "petabc-cache";
const FORMAT_VERSION: u32 = 1;

/// Where a cache came from; two caches with equal provenance are identical.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub seed: u64,
    pub sampling_box: UniformBox,
    pub input_id: String,
    pub grid_id: String,
    pub kinds: Vec<SummaryKind>,
}

/// One simulated parameter draw.
///
/// S2 and S3 simulated summaries are the frame values themselves, so only
/// the spline fit and the WLS estimates are stored separately.
#[derive(Debug, Clone)]
pub struct CacheEntry {
    pub theta: LpNtPetParams,
    pub tac: Tac,
    pub spline: Option<Vec<f64>>,
    /// NaN when the weighted fit was rank deficient.
    pub wls: Option<[f64; 4]>,
}

impl CacheEntry {
    pub fn summary(&self, kind: SummaryKind) -> Option<SummaryVector> {
        match kind {
            SummaryKind::S1Spline => self.spline.clone().map(|v| SummaryVector::new(kind, v)),
            SummaryKind::S2Raw | SummaryKind::S3Scaled => {
                Some(SummaryVector::new(kind, self.tac.values().to_vec()))
            }
            SummaryKind::S4Wls => self.wls.map(|v| SummaryVector::new(kind, v.to_vec())),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SimCache {
    pub entries: Vec<CacheEntry>,
    pub provenance: Provenance,
    pub grid: Arc<TimeGrid>,
    /// Draws replaced because the forward solve failed.
    pub resamples: u64,
}

impl SimCache {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn has_kind(&self, kind: SummaryKind) -> bool {
        match kind {
            SummaryKind::S2Raw | SummaryKind::S3Scaled => true,
            _ => self.provenance.kinds.contains(&kind),
        }
    }
}

/// Builds an `n`-entry cache with a fresh simulator for `cr` on `grid`.
pub fn build_cache(
    n: usize,
    sampling_box: &UniformBox,
    cr: &InputCurve,
    grid: Arc<TimeGrid>,
    kinds: &[SummaryKind],
    seed: u64,
) -> Result<SimCache> {
    let sim = Simulator::new(cr.clone(), grid);
    build_cache_with(n, sampling_box, &sim, kinds, seed)
}

/// Builds an `n`-entry cache. Entry `i` draws from its own stream
/// `seed::rng_for(seed, i)`, so the result does not depend on thread count.
pub fn build_cache_with(
    n: usize,
    sampling_box: &UniformBox,
    sim: &Simulator,
    kinds: &[SummaryKind],
    seed: u64,
) -> Result<SimCache> {
    if n == 0 {
        return Err(Error::InvalidArgument(
            "cache size must be at least 1".into(),
        ));
    }
    sampling_box.validate()?;
    let mut kinds = kinds.to_vec();
    kinds.sort();
    kinds.dedup();
    let grid = sim.grid().clone();
    let smoother = kinds
        .contains(&SummaryKind::S1Spline)
        .then(|| SplineSmoother::new(&grid.midpoints()))
        .transpose()?;
    let refs = kinds.contains(&SummaryKind::S4Wls).then(|| {
        Arc::new(ReferenceColumns::from_fine(
            sim.input().id(),
            grid.clone(),
            sim.reference_fine(),
            sim.reference_integral(),
        ))
    });

    let built: Vec<Result<(CacheEntry, u32)>> = (0..n as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = seed::rng_for(seed, i);
            let mut failures = 0;
            let (theta, tac) = loop {
                let theta = sampling_box.sample(&mut rng);
                match sim.simulate(&theta) {
                    Ok(tac) => break (theta, tac),
                    Err(Error::SingularStep { .. }) if failures + 1 < MAX_ATTEMPTS => failures += 1,
                    Err(e) => return Err(e),
                }
            };
            let spline = match &smoother {
                Some(s) => Some(s.smooth(tac.values())?.fitted),
                None => None,
            };
            let wls = match &refs {
                Some(r) => Some(
                    match ObservedDesign::new(r.clone(), &tac)?.fit_timing(theta.timing, false) {
                        Ok(fit) => fit.estimate,
                        Err(Error::RankDeficient { .. }) => [f64::NAN; 4],
                        Err(e) => return Err(e),
                    },
                ),
                None => None,
            };
            // keep frame values only; the fine curve is large
            let tac = Tac::new(grid.clone(), tac.into_values())?;
            Ok((
                CacheEntry {
                    theta,
                    tac,
                    spline,
                    wls,
                },
                failures,
            ))
        })
        .collect();

    let mut entries = Vec::with_capacity(n);
    let mut resamples = 0u64;
    for r in built {
        let (e, f) = r?;
        resamples += f as u64;
        entries.push(e);
    }
    if resamples > 0 {
        log::info!(
            "cache: {resamples} draws resampled after singular solver steps ({:.3}%)",
            100.0 * resamples as f64 / n as f64
        );
    }
    Ok(SimCache {
        entries,
        provenance: Provenance {
            seed,
            sampling_box: *sampling_box,
            input_id: sim.input().id(),
            grid_id: grid.fingerprint(),
            kinds,
        },
        grid,
        resamples,
    })
}

#[derive(Serialize, Deserialize)]
struct Header {
    format: String,
    version: u32,
    provenance: Provenance,
    grid: TimeGrid,
    entries: usize,
    resamples: u64,
}

impl SimCache {
    /// JSON header line, then per entry little-endian f64s: θ, frame values,
    /// spline fit and WLS estimates when present.
    pub fn write_to(&self, mut w: impl Write) -> Result<()> {
        let header = Header {
            format: FORMAT_NAME.into(),
            version: FORMAT_VERSION,
            provenance: self.provenance.clone(),
            grid: (*self.grid).clone(),
            entries: self.entries.len(),
            resamples: self.resamples,
        };
        serde_json::to_writer(&mut w, &header)?;
        w.write_all(b"\n")?;
        let mut buf = Vec::with_capacity(8 * (7 + 2 * self.grid.n_frames() + 4));
        for e in &self.entries {
            buf.clear();
            let mut put = |v: f64| buf.extend_from_slice(&v.to_le_bytes());
            e.theta.to_array().into_iter().for_each(&mut put);
            e.tac.values().iter().copied().for_each(&mut put);
            if let Some(s) = &e.spline {
                s.iter().copied().for_each(&mut put);
            }
            if let Some(s) = &e.wls {
                s.iter().copied().for_each(&mut put);
            }
            w.write_all(&buf)?;
        }
        Ok(())
    }

    pub fn read_from(mut r: impl Read) -> Result<Self> {
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes)?;
        let nl = bytes
            .iter()
            .position(|b| *b == b'\n')
            .ok_or_else(|| Error::Format("cache file has no header line".into()))?;
        let header: Header = serde_json::from_slice(&bytes[..nl])
            .map_err(|e| Error::Format(format!("cache header: {e}")))?;
        if header.format != FORMAT_NAME || header.version != FORMAT_VERSION {
            return Err(Error::Format(format!(
                "unsupported cache format {} v{} (expected {FORMAT_NAME} v{FORMAT_VERSION})",
                header.format, header.version
            )));
        }
        let grid = Arc::new(header.grid);
        if grid.fingerprint() != header.provenance.grid_id {
            return Err(Error::Format(
                "cache grid does not match its provenance id".into(),
            ));
        }
        let kinds = &header.provenance.kinds;
        let has_spline = kinds.contains(&SummaryKind::S1Spline);
        let has_wls = kinds.contains(&SummaryKind::S4Wls);
        let nf = grid.n_frames();
        let mut body = LeReader::new(&bytes[nl + 1..]);
        let mut entries = Vec::with_capacity(header.entries);
        for _ in 0..header.entries {
            let mut a = [0.0; 7];
            for v in a.iter_mut() {
                *v = body.f64()?;
            }
            let theta = LpNtPetParams::from_array(a);
            let tac = Tac::new(grid.clone(), body.f64s(nf)?)?;
            let spline = if has_spline {
                Some(body.f64s(nf)?)
            } else {
                None
            };
            let wls = if has_wls {
                let v = body.f64s(4)?;
                Some([v[0], v[1], v[2], v[3]])
            } else {
                None
            };
            entries.push(CacheEntry {
                theta,
                tac,
                spline,
                wls,
            });
        }
        body.finish()?;
        Ok(Self {
            entries,
            provenance: header.provenance,
            grid,
            resamples: header.resamples,
        })
    }
}
