use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;
use std::sync::Arc;

use serde::Serialize;

use petabc::abc::{
    abc_best_k, abc_reject, build_cache_with, percentile_tolerance, sequential_narrowing,
    ObservedSummary, PosteriorSet, Selection, SimCache,
};
use petabc::batch::{batch_compare, BatchConfig, Method};
use petabc::io::{load_reference, load_tac, save_tac};
use petabc::kinetics::{InputCurve, LpNtPetParams, Simulator, Tac, PARAM_NAMES};
use petabc::mcmc::{default_step_sizes, run_chains, GaussianErrorModel, TraceSummary};
use petabc::ppc::{coverage, predictive_bands};
use petabc::prior::UniformBox;
use petabc::scenario::{ScaleProfile, ScenarioConfig};
use petabc::summaries::{SummaryContext, SummaryKind, WlsContext};
use petabc::wls::{sample_timing_library, ReferenceColumns, WlsFit};
use petabc::{Error, Result};

use crate::{
    manifest, AbcArgs, BatchArgs, BoxChoice, CacheArgs, Cli, Command, McmcArgs, NarrowArgs,
    PpcArgs, Scale, WlsArgs,
};

struct Env<'a> {
    cli: &'a Cli,
    config: ScenarioConfig,
    profile: ScaleProfile,
    input: InputCurve,
}

impl Env<'_> {
    fn out(&self, name: &str) -> std::path::PathBuf {
        self.cli.out.join(name)
    }

    fn simulator_for(&self, obs: &Tac) -> Simulator {
        Simulator::new(self.input.clone(), obs.grid().clone())
    }

    fn context(&self, obs: &Tac, with_library: Option<usize>) -> Result<SummaryContext> {
        let ctx = SummaryContext::new(obs.grid().clone(), self.config.scale_hint()?)?;
        Ok(match with_library {
            Some(n) => ctx.with_wls(self.wls_context(obs, n, false)?),
            None => ctx,
        })
    }

    fn wls_context(&self, obs: &Tac, library_size: usize, nonneg: bool) -> Result<WlsContext> {
        let timings =
            sample_timing_library(library_size, &UniformBox::default_priors(), self.cli.seed)?;
        Ok(WlsContext {
            refs: Arc::new(ReferenceColumns::new(&self.input, obs.grid().clone())),
            timings: Arc::new(timings),
            nonneg,
        })
    }
}

pub fn run(cli: &Cli) -> Result<()> {
    let config: ScenarioConfig = match &cli.config {
        Some(p) => serde_json::from_reader(BufReader::new(File::open(p)?))
            .map_err(|e| Error::Format(format!("{}: {e}", p.display())))?,
        None => ScenarioConfig::default(),
    };
    config.validate()?;
    let input = match &cli.reference {
        Some(p) => load_reference(p)?,
        None => config.reference_input()?,
    };
    let profile = match cli.scale {
        Scale::Desk => ScaleProfile::DESK,
        Scale::Paper => ScaleProfile::PAPER,
    };
    fs::create_dir_all(&cli.out)?;
    let env = Env {
        cli,
        config,
        profile,
        input,
    };
    let outputs = match &cli.command {
        Command::Simulate => simulate(&env)?,
        Command::Cache(a) => cache(&env, a)?,
        Command::Abc(a) => abc(&env, a)?,
        Command::Wls(a) => wls(&env, a)?,
        Command::Mcmc(a) => mcmc(&env, a)?,
        Command::Narrow(a) => narrow(&env, a)?,
        Command::Ppc(a) => ppc(&env, a)?,
        Command::BatchCompare(a) => batch(&env, a)?,
    };
    manifest::write(
        &cli.out,
        &cli.command,
        &env.config,
        cli.seed,
        cli.scale,
        cli.reference.as_deref(),
        &outputs,
    )
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

fn kind_arg(s: &str) -> Result<SummaryKind> {
    s.parse()
}

fn simulate(env: &Env) -> Result<Vec<String>> {
    let grid = env.config.grid()?;
    let sim = Simulator::new(env.input.clone(), grid);
    let (clean, noisy) = env.config.simulate(&sim, env.cli.seed)?;
    save_tac(&clean, &env.out("clean.csv"))?;
    save_tac(&noisy, &env.out("noisy.csv"))?;
    write_json(
        &env.out("scenario.json"),
        &serde_json::json!({
            "truth": env.config.truth(),
            "noise_level": env.config.noise_level,
            "noise_seed": env.cli.seed,
            "input": env.input.id(),
        }),
    )?;
    Ok(vec![
        "clean.csv".into(),
        "noisy.csv".into(),
        "scenario.json".into(),
    ])
}

fn sampling_box(choice: BoxChoice, file: Option<&Path>) -> Result<UniformBox> {
    let b = match (file, choice) {
        (Some(p), _) => serde_json::from_reader(BufReader::new(File::open(p)?))
            .map_err(|e| Error::Format(format!("{}: {e}", p.display())))?,
        (None, BoxChoice::Prior) => UniformBox::default_priors(),
        (None, BoxChoice::Narrowed) => UniformBox::narrowed_reference(),
    };
    b.validate()?;
    Ok(b)
}

fn cache(env: &Env, a: &CacheArgs) -> Result<Vec<String>> {
    let kinds = a
        .kinds
        .iter()
        .map(|k| kind_arg(k))
        .collect::<Result<Vec<_>>>()?;
    let b = sampling_box(a.sampling_box, a.box_file.as_deref())?;
    let sim = Simulator::new(env.input.clone(), env.config.grid()?);
    let n = a.n.unwrap_or(env.profile.cache_size);
    let c = build_cache_with(n, &b, &sim, &kinds, env.cli.seed)?;
    let mut w = create(&env.out("cache.bin"))?;
    c.write_to(&mut w)?;
    w.flush()?;
    eprintln!(
        "cache: {} entries, {} resampled draws",
        c.len(),
        c.resamples
    );
    Ok(vec!["cache.bin".into()])
}

fn read_cache(path: &Path) -> Result<SimCache> {
    SimCache::read_from(BufReader::new(File::open(path)?))
}

fn check_cache(c: &SimCache, obs: &Tac, input: &InputCurve) -> Result<()> {
    if c.provenance.grid_id != obs.grid().fingerprint() {
        return Err(Error::GridMismatch(
            "cache and observed TAC use different time grids".into(),
        ));
    }
    if c.provenance.input_id != input.id() {
        return Err(Error::GridMismatch(format!(
            "cache was built for input {}, not {}",
            c.provenance.input_id,
            input.id()
        )));
    }
    Ok(())
}

#[derive(Serialize)]
struct PosteriorReport {
    kind: SummaryKind,
    selection: Selection,
    epsilon: f64,
    accepted: usize,
    cache_size: usize,
    mean: Option<[f64; 7]>,
    parameters: [&'static str; 7],
    warning: Option<String>,
}

fn abc(env: &Env, a: &AbcArgs) -> Result<Vec<String>> {
    let kind = kind_arg(&a.kind)?;
    let obs = load_tac(&a.obs, None)?;
    let c = read_cache(&a.cache)?;
    check_cache(&c, &obs, &env.input)?;
    let mut ctx = env.context(&obs, None)?;
    if kind == SummaryKind::S4Wls {
        ctx = ctx.with_wls(env.wls_context(&obs, 1, a.nonneg)?);
    }
    let o = ObservedSummary::new(&obs, kind, &ctx)?;
    let post = match (a.eps, a.quantile) {
        (Some(eps), _) => abc_reject(&c, &o, eps)?,
        // next_up so the strict `< eps` keeps the quantile entry itself
        (None, Some(q)) => abc_reject(&c, &o, percentile_tolerance(&c, &o, q)?.next_up())?,
        (None, None) => abc_best_k(&c, &o, a.k.unwrap_or(env.profile.best_k).min(c.len()))?,
    };
    if let Some(w) = &post.warning {
        log::warn!("{w}");
    }
    let mut w = create(&env.out("posterior.jsonl"))?;
    post.write_jsonl(&mut w)?;
    w.flush()?;
    let report = PosteriorReport {
        kind,
        selection: post.selection,
        epsilon: post.epsilon,
        accepted: post.len(),
        cache_size: c.len(),
        mean: post.mean().ok(),
        parameters: PARAM_NAMES,
        warning: post.warning.clone(),
    };
    write_json(&env.out("posterior.json"), &report)?;
    Ok(vec!["posterior.jsonl".into(), "posterior.json".into()])
}

fn wls(env: &Env, a: &WlsArgs) -> Result<Vec<String>> {
    let obs = load_tac(&a.obs, None)?;
    let n = a.library_size.unwrap_or(env.profile.library_size);
    let fit: WlsFit = env.wls_context(&obs, n, a.nonneg)?.fit(&obs)?;
    write_json(&env.out("wls.json"), &fit)?;
    Ok(vec!["wls.json".into()])
}

fn mcmc(env: &Env, a: &McmcArgs) -> Result<Vec<String>> {
    let obs = load_tac(&a.obs, None)?;
    let sim = env.simulator_for(&obs);
    let priors = UniformBox::default_priors();
    let em = GaussianErrorModel::new(1.0 / env.config.scale_hint()?)?;
    let init: LpNtPetParams = if a.init_truth {
        env.config.truth()
    } else {
        priors.center()
    };
    let chains = run_chains(
        a.chains.max(1),
        &obs,
        &sim,
        &em,
        &priors,
        &init,
        a.steps,
        &default_step_sizes(&priors),
        env.cli.seed,
    )?;
    let mut outputs = Vec::new();
    let mut summaries: Vec<TraceSummary> = Vec::new();
    for (i, c) in chains.iter().enumerate() {
        let name = format!("chain_{i}.jsonl");
        let mut w = create(&env.out(&name))?;
        c.write_jsonl(&mut w)?;
        w.flush()?;
        outputs.push(name);
        summaries.push(c.summary());
    }
    write_json(&env.out("mcmc.json"), &summaries)?;
    outputs.push("mcmc.json".into());
    Ok(outputs)
}

fn narrow(env: &Env, a: &NarrowArgs) -> Result<Vec<String>> {
    let kind = kind_arg(&a.kind)?;
    if a.schedule.is_empty() {
        return Err(Error::InvalidArgument("empty tolerance schedule".into()));
    }
    let obs = load_tac(&a.obs, None)?;
    let sim = env.simulator_for(&obs);
    let ctx = env.context(&obs, (kind == SummaryKind::S4Wls).then_some(1))?;
    let n = a.n.unwrap_or(env.profile.cache_size);
    let stages = sequential_narrowing(
        &obs,
        kind,
        &ctx,
        &sim,
        &UniformBox::default_priors(),
        &a.schedule,
        n,
        env.cli.seed,
    )?;
    write_json(&env.out("narrowing.json"), &stages)?;
    Ok(vec!["narrowing.json".into()])
}

#[derive(Serialize)]
struct PpcReport {
    n_draws: usize,
    noise: bool,
    coverage: Option<f64>,
}

fn ppc(env: &Env, a: &PpcArgs) -> Result<Vec<String>> {
    let post = PosteriorSet::read_jsonl(
        BufReader::new(File::open(&a.posterior)?),
        SummaryKind::S1Spline,
        Selection::BestK,
    )?;
    let truth = a.truth.as_deref().map(|p| load_tac(p, None)).transpose()?;
    let grid = match &truth {
        Some(t) => t.grid().clone(),
        None => env.config.grid()?,
    };
    let sim = Simulator::new(env.input.clone(), grid);
    let nl = if a.no_noise {
        None
    } else {
        env.config.noise()?
    };
    let bands = predictive_bands(&post, &sim, nl.as_ref(), env.cli.seed)?;
    let mut w = create(&env.out("bands.csv"))?;
    bands.write_csv(&mut w)?;
    w.flush()?;
    let cov = truth.as_ref().map(|t| coverage(&bands, t)).transpose()?;
    write_json(
        &env.out("ppc.json"),
        &PpcReport {
            n_draws: bands.n_draws,
            noise: nl.is_some(),
            coverage: cov,
        },
    )?;
    Ok(vec!["bands.csv".into(), "ppc.json".into()])
}

fn batch(env: &Env, a: &BatchArgs) -> Result<Vec<String>> {
    let mut cfg = BatchConfig::with_profile(env.config.clone(), env.profile);
    cfg.methods = a
        .methods
        .iter()
        .map(|m| m.parse::<Method>())
        .collect::<Result<_>>()?;
    cfg.kind = kind_arg(&a.kind)?;
    cfg.mcmc_steps = a.mcmc_steps;
    cfg.mcmc_burn_in = a.mcmc_steps / 2;
    if let Some(n) = a.realisations {
        cfg.realisations = n;
    }
    if let Some(n) = a.cache_size {
        cfg.cache_size = n;
    }
    if let Some(k) = a.best_k {
        cfg.best_k = k;
    }
    if let Some(n) = a.library_size {
        cfg.library_size = n;
    }
    if env.cli.reference.is_some() {
        return Err(Error::InvalidArgument(
            "batch-compare uses the scenario's built-in reference curve".into(),
        ));
    }
    let report = batch_compare(&cfg, env.cli.seed)?;
    if report.failures() > 0 {
        log::warn!("{} report rows flagged as failed", report.failures());
    }
    let mut w = create(&env.out("batch.csv"))?;
    report.write_csv(&mut w)?;
    w.flush()?;
    write_json(&env.out("batch_config.json"), &cfg)?;
    Ok(vec!["batch.csv".into(), "batch_config.json".into()])
}
