use std::path::{Path, PathBuf};

use clap::Args;
use serde::{Deserialize, Serialize};
use serde_json::json;

use stdisagg::infer::{exceedance_of, fit, predict_at, EngineRoute, FitOptions, HyperPrior};
use stdisagg::io;
use stdisagg::simstudy::{self, ecp_and_width, rmse, TruthConfig};
use stdisagg::stmodel::{simulate_field, SimulationRoute};
use stdisagg::{AggScheme, Extents, LatticeSpec, ModelKind, ModelSpec};

use crate::config::{Resolver, RunLog};
use crate::{Cli, CliError, Command};

pub const FIELD_FILE: &str = "field.json";
pub const METRICS_FILE: &str = "metrics.json";
pub const REPORTS_FILE: &str = "reports.json";

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long, env = "STDISAGG_KIND")]
    pub kind: Option<String>,
    #[arg(long, env = "STDISAGG_SIGMA2")]
    pub sigma2: Option<f64>,
    /// Spatial range.
    #[arg(long, env = "STDISAGG_RS")]
    pub rs: Option<f64>,
    /// Temporal range.
    #[arg(long, env = "STDISAGG_RT")]
    pub rt: Option<f64>,
    #[arg(long, env = "STDISAGG_BETA0")]
    pub beta0: Option<f64>,
    #[arg(long, env = "STDISAGG_NX")]
    pub nx: Option<usize>,
    #[arg(long, env = "STDISAGG_NY")]
    pub ny: Option<usize>,
    #[arg(long, env = "STDISAGG_NT")]
    pub nt: Option<usize>,
    /// Domain as `x0,x1,y0,y1,t0,t1` (default unit square over `[0, nt]`).
    #[arg(long, value_delimiter = ',', num_args = 6)]
    pub extent: Option<Vec<f64>>,
    /// Buffer cells around the window; automatic from the range when absent.
    #[arg(long, env = "STDISAGG_BUFFER")]
    pub buffer: Option<usize>,
    #[arg(long, env = "STDISAGG_SEED")]
    pub seed: Option<u64>,
    #[arg(long, env = "STDISAGG_OUT")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Serialize)]
struct SimulateConfig {
    kind: ModelKind,
    sigma2: f64,
    rs: f64,
    rt: f64,
    beta0: f64,
    nx: usize,
    ny: usize,
    nt: usize,
    extent: Vec<f64>,
    buffer: usize,
    seed: u64,
    out: PathBuf,
}

#[derive(Debug, Args)]
pub struct AggregateArgs {
    /// Field file, or a directory holding `field.json`.
    #[arg(long = "in", env = "STDISAGG_IN")]
    pub input: Option<PathBuf>,
    #[arg(long, env = "STDISAGG_SF")]
    pub sf: Option<usize>,
    #[arg(long, env = "STDISAGG_TF")]
    pub tf: Option<usize>,
    /// Noise precision; `inf` adds no noise.
    #[arg(long, env = "STDISAGG_TAU_EPS")]
    pub tau_eps: Option<f64>,
    #[arg(long, env = "STDISAGG_SEED")]
    pub seed: Option<u64>,
    #[arg(long, env = "STDISAGG_OUT")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Serialize)]
struct AggregateConfig {
    input: PathBuf,
    sf: usize,
    tf: usize,
    tau_eps: f64,
    seed: u64,
    out: PathBuf,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    /// Dataset directory (or its metadata.json).
    #[arg(long, env = "STDISAGG_DATA")]
    pub data: Option<PathBuf>,
    #[arg(long, env = "STDISAGG_KIND")]
    pub kind: Option<String>,
    #[arg(long, env = "STDISAGG_BUFFER")]
    pub buffer: Option<usize>,
    /// auto, sparse or modal.
    #[arg(long, env = "STDISAGG_ROUTE")]
    pub route: Option<String>,
    /// Also write exceedance probabilities for this level.
    #[arg(long, env = "STDISAGG_THRESHOLD")]
    pub threshold: Option<f64>,
    /// Mix predictions over hyperparameter uncertainty.
    #[arg(long, num_args = 0..=1, default_missing_value = "true", env = "STDISAGG_INTEGRATE")]
    pub integrate: Option<bool>,
    /// pc or flat.
    #[arg(long, env = "STDISAGG_PRIOR")]
    pub prior: Option<String>,
    #[arg(long, env = "STDISAGG_MAX_ITER")]
    pub max_iter: Option<usize>,
    #[arg(long, env = "STDISAGG_TOL")]
    pub tol: Option<f64>,
    #[arg(long, env = "STDISAGG_SEED")]
    pub seed: Option<u64>,
    #[arg(long, env = "STDISAGG_OUT")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Serialize)]
struct FitConfig {
    data: PathBuf,
    kind: ModelKind,
    buffer: usize,
    threshold: Option<f64>,
    fit: FitOptions,
    out: PathBuf,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long, env = "STDISAGG_DATA")]
    pub data: Option<PathBuf>,
    /// `summary.json` of an earlier fit.
    #[arg(long, env = "STDISAGG_SUMMARY")]
    pub summary: Option<PathBuf>,
    #[arg(long, env = "STDISAGG_BUFFER")]
    pub buffer: Option<usize>,
    #[arg(long, env = "STDISAGG_ROUTE")]
    pub route: Option<String>,
    #[arg(long, env = "STDISAGG_THRESHOLD")]
    pub threshold: Option<f64>,
    #[arg(long, env = "STDISAGG_SEED")]
    pub seed: Option<u64>,
    #[arg(long, env = "STDISAGG_OUT")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Serialize)]
struct PredictConfig {
    data: PathBuf,
    summary: PathBuf,
    model: ModelSpec,
    buffer: usize,
    route: EngineRoute,
    threshold: Option<f64>,
    seed: u64,
    out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long, env = "STDISAGG_PREDICTION")]
    pub prediction: Option<PathBuf>,
    /// Field file, or a directory holding `field.json`.
    #[arg(long, env = "STDISAGG_TRUTH")]
    pub truth: Option<PathBuf>,
    #[arg(long, env = "STDISAGG_OUT")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Serialize)]
struct EvaluateConfig {
    prediction: PathBuf,
    truth: PathBuf,
    out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ExperimentArgs {
    /// All 15 aggregation scenarios instead of the reduced subset.
    #[arg(long, num_args = 0..=1, default_missing_value = "true", env = "STDISAGG_FULL")]
    pub full: Option<bool>,
    #[arg(long, env = "STDISAGG_REPLICATES")]
    pub replicates: Option<usize>,
    #[arg(long, env = "STDISAGG_SEED")]
    pub seed: Option<u64>,
    /// Comma-separated model kinds.
    #[arg(long, value_delimiter = ',', env = "STDISAGG_KINDS")]
    pub kinds: Option<Vec<String>>,
    /// Also fit the areal baseline (separable scenarios).
    #[arg(long, num_args = 0..=1, default_missing_value = "true", env = "STDISAGG_BASELINE")]
    pub baseline: Option<bool>,
    #[arg(long, env = "STDISAGG_OUT")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Serialize)]
struct ExperimentConfig {
    full: bool,
    replicates: usize,
    seed: u64,
    kinds: Vec<ModelKind>,
    baseline: bool,
    truth: TruthConfig,
    fit: FitOptions,
    out: PathBuf,
}

fn parse_kind(s: &str) -> Result<ModelKind, CliError> {
    Ok(ModelKind::parse(s)?)
}

fn parse_route(s: &str) -> Result<EngineRoute, CliError> {
    match s {
        "auto" => Ok(EngineRoute::Auto),
        "sparse" => Ok(EngineRoute::Sparse),
        "modal" => Ok(EngineRoute::Modal),
        other => Err(CliError::Usage(format!("unknown route '{other}'"))),
    }
}

fn parse_prior(s: &str) -> Result<HyperPrior, CliError> {
    match s {
        "pc" => Ok(HyperPrior::default()),
        "flat" => Ok(HyperPrior::Flat),
        other => Err(CliError::Usage(format!("unknown prior '{other}'"))),
    }
}

fn load(p: &Path) -> Result<io::Dataset, CliError> {
    if !p.exists() {
        return Err(CliError::Usage(format!(
            "dataset {} not found",
            p.display()
        )));
    }
    Ok(io::load_dataset(p)?)
}

fn field_path(p: &Path) -> PathBuf {
    if p.is_dir() {
        p.join(FIELD_FILE)
    } else {
        p.to_path_buf()
    }
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build_global()
            .map_err(|e| CliError::Usage(format!("thread pool: {e}")))?;
    }
    let r = Resolver::load(cli.config.as_deref())?;
    match cli.command {
        Command::Simulate(a) => simulate(&r, a),
        Command::Aggregate(a) => aggregate(&r, a),
        Command::Fit(a) => fit_cmd(&r, a),
        Command::Predict(a) => predict(&r, a),
        Command::Evaluate(a) => evaluate(&r, a),
        Command::Experiment(a) => experiment(&r, a),
    }
}

fn simulate(r: &Resolver, a: SimulateArgs) -> Result<(), CliError> {
    let truth = TruthConfig::default();
    let kind = parse_kind(&r.get(a.kind, "kind", "separable".to_string())?)?;
    let nt = r.get(a.nt, "nt", truth.nt)?;
    let cfg = SimulateConfig {
        kind,
        sigma2: r.get(a.sigma2, "sigma2", truth.sigma2)?,
        rs: r.get(a.rs, "rs", truth.range_s)?,
        rt: r.get(a.rt, "rt", 12.0)?,
        beta0: r.get(a.beta0, "beta0", truth.beta0)?,
        nx: r.get(a.nx, "nx", truth.nx)?,
        ny: r.get(a.ny, "ny", truth.ny)?,
        nt,
        extent: r.get(a.extent, "extent", vec![0.0, 1.0, 0.0, 1.0, 0.0, nt as f64])?,
        buffer: 0,
        seed: r.get(a.seed, "seed", 0)?,
        out: r.require(a.out, "out")?,
    };
    if cfg.extent.len() != 6 {
        return Err(CliError::Usage("--extent needs six values".into()));
    }
    let e = &cfg.extent;
    let ext = Extents {
        x: (e[0], e[1]),
        y: (e[2], e[3]),
        t: (e[4], e[5]),
    };
    let lat = LatticeSpec::build(cfg.nx, cfg.ny, cfg.nt, ext, 0)?;
    let model = ModelSpec::new(kind, cfg.sigma2, cfg.rs, cfg.rt, 1.0)?;
    let buffer = r.get(
        a.buffer,
        "buffer",
        LatticeSpec::auto_buffer(cfg.rs, lat.dx.max(lat.dy)),
    )?;
    let cfg = SimulateConfig { buffer, ..cfg };
    let mut log = RunLog::start(&cfg.out, "simulate", &cfg)?;
    log.stage("simulate")?;
    let field = simulate_field(
        &model,
        &lat.with_buffer(buffer),
        &[cfg.beta0],
        &[],
        cfg.seed,
        SimulationRoute::Structured,
    )?
    .crop_interior();
    log.stage("write")?;
    io::write_field(&cfg.out.join(FIELD_FILE), &field)?;
    log.end("ok")
}

fn aggregate(r: &Resolver, a: AggregateArgs) -> Result<(), CliError> {
    let noise_sd = TruthConfig::default().noise_sd;
    let cfg = AggregateConfig {
        input: match r.opt(a.input, "input")? {
            Some(p) => p,
            None => r.require(None, "in")?,
        },
        sf: r.get(a.sf, "sf", 2)?,
        tf: r.get(a.tf, "tf", 2)?,
        // JSON has no infinity: a noiseless run is logged as null
        tau_eps: if a.tau_eps.is_none() && r.is_null("tau_eps") {
            f64::INFINITY
        } else {
            r.get(a.tau_eps, "tau_eps", 1.0 / (noise_sd * noise_sd))?
        },
        seed: r.get(a.seed, "seed", 0)?,
        out: r.require(a.out, "out")?,
    };
    let field = io::read_field(&field_path(&cfg.input))?;
    let scheme = AggScheme::new(cfg.sf, cfg.tf);
    scheme.check(&field.spec)?;
    let mut log = RunLog::start(&cfg.out, "aggregate", &cfg)?;
    log.stage("aggregate")?;
    let (meta, y, _) = io::aggregate_to_dataset(&field, scheme, cfg.tau_eps, cfg.seed)?;
    log.stage("write")?;
    io::write_dataset(&cfg.out, &meta, &y, &[])?;
    log.end("ok")
}

fn fit_cmd(r: &Resolver, a: FitArgs) -> Result<(), CliError> {
    let base: FitOptions = r.get(None, "fit", FitOptions::default())?;
    let route = match r.opt(a.route, "route")? {
        Some(s) => parse_route(&s)?,
        None => base.route,
    };
    let prior = match r.opt(a.prior, "prior")? {
        Some(s) => parse_prior(&s)?,
        None => base.prior,
    };
    let cfg = FitConfig {
        data: r.require(a.data, "data")?,
        kind: parse_kind(&r.get(a.kind, "kind", "separable".to_string())?)?,
        buffer: r.get(a.buffer, "buffer", 0)?,
        threshold: r.opt(a.threshold, "threshold")?,
        fit: FitOptions {
            route,
            prior,
            integrate: r.get(a.integrate, "integrate", base.integrate)?,
            max_iter: r.get(a.max_iter, "max_iter", base.max_iter)?,
            tol: r.get(a.tol, "tol", base.tol)?,
            seed: r.get(a.seed, "seed", base.seed)?,
            ..base
        },
        out: r.require(a.out, "out")?,
    };
    let ds = load(&cfg.data)?;
    let mut log = RunLog::start(&cfg.out, "fit", &cfg)?;
    log.stage("setup")?;
    let obs = ds.obs_model(ModelSpec::new(cfg.kind, 1.0, 1.0, 1.0, 1.0)?, cfg.buffer)?;
    log.stage("fit")?;
    let res = fit(&obs, &cfg.fit)?;
    log.note(json!({
        "engine": format!("{:?}", res.route).to_lowercase(),
        "iterations": res.iterations,
        "evaluations": res.evaluations,
        "loglik": res.loglik,
        "converged": res.converged,
    }))?;
    log.stage("write")?;
    io::write_results(&cfg.out, &res, cfg.threshold)?;
    if let Err(e) = res.require_converged() {
        log.end("not_converged")?;
        return Err(e.into());
    }
    log.end("ok")
}

fn predict(r: &Resolver, a: PredictArgs) -> Result<(), CliError> {
    let summary_path: PathBuf = r.require(a.summary, "summary")?;
    let summary = io::read_summary(&summary_path)?;
    let cfg = PredictConfig {
        data: r.require(a.data, "data")?,
        summary: summary_path,
        model: summary.model,
        buffer: r.get(a.buffer, "buffer", 0)?,
        route: parse_route(&r.get(a.route, "route", "auto".to_string())?)?,
        threshold: r.opt(a.threshold, "threshold")?,
        seed: r.get(a.seed, "seed", 0)?,
        out: r.require(a.out, "out")?,
    };
    let ds = load(&cfg.data)?;
    let mut log = RunLog::start(&cfg.out, "predict", &cfg)?;
    log.stage("predict")?;
    let obs = ds.obs_model(cfg.model, cfg.buffer)?;
    let pred = predict_at(&obs, &cfg.model, cfg.route, cfg.seed)?;
    log.stage("write")?;
    io::write_prediction(&cfg.out.join(io::PREDICTION_FILE), &pred)?;
    if let Some(c) = cfg.threshold {
        let p = exceedance_of(&pred.mean, &pred.sd, c)?;
        io::write_exceedance(&cfg.out.join(io::EXCEEDANCE_FILE), &p, c)?;
    }
    log.end("ok")
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Metrics {
    pub rmse: f64,
    pub ecp: f64,
    pub mean_width: f64,
    pub n: usize,
}

fn evaluate(r: &Resolver, a: EvaluateArgs) -> Result<(), CliError> {
    let cfg = EvaluateConfig {
        prediction: r.require(a.prediction, "prediction")?,
        truth: r.require(a.truth, "truth")?,
        out: r.require(a.out, "out")?,
    };
    let truth = io::read_field(&field_path(&cfg.truth))?;
    let pred = io::read_prediction(&cfg.prediction, &truth.spec)?;
    let mut log = RunLog::start(&cfg.out, "evaluate", &cfg)?;
    log.stage("evaluate")?;
    let (ecp, mean_width) = ecp_and_width(&pred.lo95, &pred.hi95, &truth)?;
    let m = Metrics {
        rmse: rmse(&pred.mean, &truth)?,
        ecp,
        mean_width,
        n: truth.spec.n_interior(),
    };
    let f = std::fs::File::create(cfg.out.join(METRICS_FILE))?;
    serde_json::to_writer_pretty(f, &m).map_err(std::io::Error::from)?;
    log.end("ok")
}

fn experiment(r: &Resolver, a: ExperimentArgs) -> Result<(), CliError> {
    let kinds = match r.opt(a.kinds, "kinds")? {
        Some(ks) => ks
            .iter()
            .map(|k| parse_kind(k))
            .collect::<Result<Vec<_>, _>>()?,
        None => vec![ModelKind::Separable102, ModelKind::NonSeparable121],
    };
    let cfg = ExperimentConfig {
        full: r.get(a.full, "full", false)?,
        replicates: r.get(a.replicates, "replicates", 20)?,
        seed: r.get(a.seed, "seed", 1)?,
        kinds,
        baseline: r.get(a.baseline, "baseline", true)?,
        truth: r.get(None, "truth", TruthConfig::default())?,
        fit: r.get(None, "fit", simstudy::study_fit_options())?,
        out: r.require(a.out, "out")?,
    };
    let mut grid =
        simstudy::scenario_grid(&cfg.kinds, cfg.full, cfg.replicates, cfg.seed, cfg.baseline);
    for s in grid.iter_mut() {
        s.truth = cfg.truth;
        s.fit = cfg.fit;
    }
    let mut log = RunLog::start(&cfg.out, "experiment", &cfg)?;
    log.note(json!({"scenarios": grid.len(), "threads": rayon::current_num_threads()}))?;
    log.stage("study")?;
    let reports = simstudy::run_study(&grid)?;
    log.stage("write")?;
    simstudy::write_tables(&reports, &cfg.out)?;
    let f = std::fs::File::create(cfg.out.join(REPORTS_FILE))?;
    serde_json::to_writer_pretty(f, &reports).map_err(std::io::Error::from)?;
    let invalid = reports.iter().filter(|r| !r.valid).count();
    if invalid > 0 {
        log.note(json!({"invalid_scenarios": invalid}))?;
        log::warn!("{invalid} scenarios had more than 10% failed replicates");
    }
    log.end("ok")
}
