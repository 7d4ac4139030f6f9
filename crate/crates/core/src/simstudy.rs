//! Replicated simulation study: simulate, aggregate, fit, score.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::aggregate::{aggregate_observe, build_projection, AggScheme};
use crate::baseline::{duplicate_to_fine, fit_areal, Adjacency, ArealOptions};
use crate::error::{Error, Result};
use crate::infer::{fit, FitOptions, ObsModel, Z975};
use crate::lattice::{Extents, Field, LatticeSpec};
use crate::stmodel::{
    simulate_field, ModelKind, ModelSpec, SimulationRoute, TemporalRangeConvention,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Autocorr {
    Weak,
    Moderate,
    Strong,
}

impl Autocorr {
    pub const ALL: [Autocorr; 3] = [Autocorr::Weak, Autocorr::Moderate, Autocorr::Strong];

    /// Temporal range giving this autocorrelation level for `kind`.
    pub fn range_t(self, kind: ModelKind) -> f64 {
        let base = match self {
            Autocorr::Weak => 1.0,
            Autocorr::Moderate => 3.0,
            Autocorr::Strong => 12.0,
        };
        match kind {
            ModelKind::Separable102 => base,
            ModelKind::NonSeparable121 => 2.0 * base,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Autocorr::Weak => "weak",
            Autocorr::Moderate => "moderate",
            Autocorr::Strong => "strong",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "weak" => Ok(Autocorr::Weak),
            "moderate" => Ok(Autocorr::Moderate),
            "strong" => Ok(Autocorr::Strong),
            other => Err(Error::InvalidParameter(format!(
                "unknown autocorrelation level '{other}'"
            ))),
        }
    }

    fn index(self) -> u64 {
        self as u64
    }
}

/// Lag-one correlation of an exponential temporal correlation with range `phi`.
pub fn rho_phi_map(phi: f64) -> f64 {
    (-1.0 / phi).exp()
}

/// Generating process shared by all scenarios.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TruthConfig {
    pub nx: usize,
    pub ny: usize,
    pub nt: usize,
    pub beta0: f64,
    pub sigma2: f64,
    pub range_s: f64,
    pub noise_sd: f64,
    /// Simulation buffer in cells; automatic from the range when absent.
    pub buffer: Option<usize>,
    pub route: SimulationRoute,
    pub convention: TemporalRangeConvention,
}

impl Default for TruthConfig {
    fn default() -> Self {
        Self {
            nx: 24,
            ny: 24,
            nt: 24,
            beta0: 0.1,
            // marginal sd 0.25
            sigma2: 0.0625,
            range_s: 0.2,
            noise_sd: 0.15,
            buffer: None,
            route: SimulationRoute::Structured,
            convention: TemporalRangeConvention::Exponential,
        }
    }
}

impl TruthConfig {
    /// Unbuffered lattice on `[0,1]² × [0, nt]`.
    pub fn lattice(&self) -> Result<LatticeSpec> {
        LatticeSpec::build(
            self.nx,
            self.ny,
            self.nt,
            Extents {
                x: (0.0, 1.0),
                y: (0.0, 1.0),
                t: (0.0, self.nt as f64),
            },
            0,
        )
    }

    pub fn model(&self, kind: ModelKind, autocorr: Autocorr) -> Result<ModelSpec> {
        let mut m = ModelSpec::new(
            kind,
            self.sigma2,
            self.range_s,
            autocorr.range_t(kind),
            1.0 / (self.noise_sd * self.noise_sd),
        )?;
        m.convention = self.convention;
        Ok(m)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub kind: ModelKind,
    pub autocorr: Autocorr,
    pub s_f: usize,
    pub t_f: usize,
    pub replicates: usize,
    pub seed: u64,
    /// Also fit the areal baseline.
    pub fit_both: bool,
    #[serde(default)]
    pub truth: TruthConfig,
    #[serde(default = "study_fit_options")]
    pub fit: FitOptions,
    #[serde(default)]
    pub areal: ArealOptions,
}

/// Fit settings of the study: hyperparameter uncertainty is mixed into
/// the predictive intervals.
pub fn study_fit_options() -> FitOptions {
    FitOptions {
        integrate: true,
        ..FitOptions::default()
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        if self.replicates == 0 {
            return Err(Error::InvalidParameter(
                "replicates must be positive".into(),
            ));
        }
        AggScheme::new(self.s_f, self.t_f).check(&self.truth.lattice()?)
    }
}

/// Scores of one fitted model on one replicate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelScore {
    pub rmse: f64,
    pub ecp: f64,
    pub width: f64,
    /// CI coverage per parameter, in the order of [`PARAM_NAMES`] (continuous model only).
    pub covered: Vec<bool>,
}

pub const PARAM_NAMES: [&str; 5] = ["sigma2", "range_s", "range_t", "tau_eps", "beta0"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateResult {
    pub replicate: usize,
    pub cont: Option<ModelScore>,
    pub areal: Option<ModelScore>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub value: f64,
    pub stderr: f64,
}

impl Stat {
    pub fn of(xs: &[f64]) -> Self {
        let n = xs.len() as f64;
        if xs.is_empty() {
            return Self {
                value: f64::NAN,
                stderr: f64::NAN,
            };
        }
        let m = xs.iter().sum::<f64>() / n;
        let v = if xs.len() > 1 {
            xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0)
        } else {
            0.0
        };
        Self {
            value: m,
            stderr: (v / n).sqrt(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSummary {
    pub rmse: Stat,
    pub ecp: Stat,
    pub mean_width: Stat,
    /// Fraction of replicates whose 95% interval covers the truth, per parameter.
    pub param_cover: Vec<(String, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub kind: ModelKind,
    pub autocorr: Autocorr,
    pub s_f: usize,
    pub t_f: usize,
    pub replicates_ok: usize,
    pub replicates_failed: usize,
    /// False when more than 10% of replicates failed.
    pub valid: bool,
    pub cont: ModelSummary,
    pub areal: Option<ModelSummary>,
    pub failures: Vec<String>,
}

fn check_shapes(a: &Field, b: &Field) -> Result<()> {
    if a.spec != b.spec {
        return Err(Error::ShapeMismatch(
            "fields live on different lattices".into(),
        ));
    }
    Ok(())
}

fn interior_pairs<'a>(a: &'a Field, b: &'a Field) -> impl Iterator<Item = (f64, f64)> + 'a {
    a.spec
        .interior_nodes()
        .into_iter()
        .map(move |i| (a.values[i], b.values[i]))
}

/// Root mean square error over interior nodes.
pub fn rmse(pred: &Field, truth: &Field) -> Result<f64> {
    check_shapes(pred, truth)?;
    let n = pred.spec.n_interior() as f64;
    Ok((interior_pairs(pred, truth)
        .map(|(p, t)| (p - t).powi(2))
        .sum::<f64>()
        / n)
        .sqrt())
}

/// Empirical coverage and mean width of node-wise intervals `[lo, hi]`.
pub fn ecp_and_width(lo: &Field, hi: &Field, truth: &Field) -> Result<(f64, f64)> {
    check_shapes(lo, truth)?;
    check_shapes(hi, truth)?;
    let nodes = truth.spec.interior_nodes();
    let n = nodes.len() as f64;
    let mut inside = 0usize;
    let mut width = 0.0;
    for i in nodes {
        if lo.values[i] <= truth.values[i] && truth.values[i] <= hi.values[i] {
            inside += 1;
        }
        width += hi.values[i] - lo.values[i];
    }
    Ok((inside as f64 / n, width / n))
}

/// Fraction of intervals covering the truth, per parameter. `cis[r][j]` is
/// replicate `r`'s interval for parameter `j`.
pub fn param_cover(cis: &[Vec<(f64, f64)>], truth: &[f64]) -> Result<Vec<f64>> {
    let mut hits = vec![0usize; truth.len()];
    for ci in cis {
        if ci.len() != truth.len() {
            return Err(Error::ShapeMismatch(format!(
                "expected {} intervals, found {}",
                truth.len(),
                ci.len()
            )));
        }
        for (j, &(lo, hi)) in ci.iter().enumerate() {
            if lo <= truth[j] && truth[j] <= hi {
                hits[j] += 1;
            }
        }
    }
    Ok(hits
        .into_iter()
        .map(|h| h as f64 / cis.len().max(1) as f64)
        .collect())
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn mix(parts: &[u64]) -> u64 {
    parts
        .iter()
        .fold(0x5EED_u64, |acc, &p| splitmix(acc ^ splitmix(p)))
}

/// Seed of the latent truth; shared by every aggregation scenario so that
/// scenarios differ only in how the same fields are observed.
pub fn truth_seed(cfg: &ScenarioConfig, replicate: usize) -> u64 {
    let kind = match cfg.kind {
        ModelKind::Separable102 => 0,
        ModelKind::NonSeparable121 => 1,
    };
    mix(&[cfg.seed, kind, cfg.autocorr.index(), replicate as u64])
}

/// Simulated truth on the unbuffered lattice.
pub fn simulate_truth(cfg: &ScenarioConfig, replicate: usize) -> Result<Field> {
    let lat = cfg.truth.lattice()?;
    let model = cfg.truth.model(cfg.kind, cfg.autocorr)?;
    let buffer = cfg
        .truth
        .buffer
        .unwrap_or_else(|| LatticeSpec::auto_buffer(model.range_s, lat.dx.max(lat.dy)));
    let field = simulate_field(
        &model,
        &lat.with_buffer(buffer),
        &[cfg.truth.beta0],
        &[],
        truth_seed(cfg, replicate),
        cfg.truth.route,
    )?;
    Ok(field.crop_interior())
}

/// One replicate: simulate, observe, fit, score.
pub fn run_replicate(cfg: &ScenarioConfig, replicate: usize) -> Result<ReplicateResult> {
    cfg.validate()?;
    let truth = simulate_truth(cfg, replicate)?;
    let lat = truth.spec;
    let model = cfg.truth.model(cfg.kind, cfg.autocorr)?;
    let proj = build_projection(&lat, AggScheme::new(cfg.s_f, cfg.t_f))?;
    let noise_seed = mix(&[truth_seed(cfg, replicate), cfg.s_f as u64, cfg.t_f as u64]);
    let y = aggregate_observe(&truth, &proj, model.tau_eps, noise_seed)?;
    let obs = ObsModel::new(lat, proj.clone(), y.clone(), &[], &[], model)?;

    let res = fit(
        &obs,
        &FitOptions {
            seed: noise_seed,
            ..cfg.fit
        },
    )?;
    let (ecp, width) = ecp_and_width(&res.lo95, &res.hi95, &truth)?;
    let true_theta = [model.sigma2, model.range_s, model.range_t, model.tau_eps];
    let mut covered: Vec<bool> = (0..4)
        .map(|i| res.theta_ci[i].0 <= true_theta[i] && true_theta[i] <= res.theta_ci[i].1)
        .collect();
    let (b_lo, b_hi) = res.beta_ci(0);
    covered.push(b_lo <= cfg.truth.beta0 && cfg.truth.beta0 <= b_hi);
    let cont = ModelScore {
        rmse: rmse(&res.latent_mean, &truth)?,
        ecp,
        width,
        covered,
    };

    let areal = if cfg.fit_both {
        let (ncx, ncy) = proj.coarse_shape.expect("block projection");
        let af = fit_areal(
            &y,
            &obs.x_agg,
            obs.p,
            &Adjacency::rook(ncx, ncy),
            proj.n_windows,
            &cfg.areal,
        )?;
        let mean = duplicate_to_fine(&af.cell_mean, &proj, &lat)?;
        let lo: Vec<f64> = af
            .cell_mean
            .iter()
            .zip(&af.cell_sd)
            .map(|(m, s)| m - Z975 * s)
            .collect();
        let hi: Vec<f64> = af
            .cell_mean
            .iter()
            .zip(&af.cell_sd)
            .map(|(m, s)| m + Z975 * s)
            .collect();
        let lo = duplicate_to_fine(&lo, &proj, &lat)?;
        let hi = duplicate_to_fine(&hi, &proj, &lat)?;
        let (ecp, width) = ecp_and_width(&lo, &hi, &truth)?;
        let (b_lo, b_hi) = (
            af.beta_mean[0] - Z975 * af.beta_sd[0],
            af.beta_mean[0] + Z975 * af.beta_sd[0],
        );
        Some(ModelScore {
            rmse: rmse(&mean, &truth)?,
            ecp,
            width,
            covered: vec![b_lo <= cfg.truth.beta0 && cfg.truth.beta0 <= b_hi],
        })
    } else {
        None
    };
    Ok(ReplicateResult {
        replicate,
        cont: Some(cont),
        areal,
        error: None,
    })
}

fn summarise(scores: &[&ModelScore], names: &[&str]) -> ModelSummary {
    let col =
        |f: fn(&ModelScore) -> f64| Stat::of(&scores.iter().map(|s| f(s)).collect::<Vec<_>>());
    let n = scores.len().max(1) as f64;
    ModelSummary {
        rmse: col(|s| s.rmse),
        ecp: col(|s| s.ecp),
        mean_width: col(|s| s.width),
        param_cover: names
            .iter()
            .enumerate()
            .map(|(j, name)| {
                let hits = scores
                    .iter()
                    .filter(|s| s.covered.get(j).copied().unwrap_or(false))
                    .count();
                (name.to_string(), hits as f64 / n)
            })
            .collect(),
    }
}

/// Fold replicate results (in replicate order) into a report.
pub fn reduce_scenario(cfg: &ScenarioConfig, results: &[ReplicateResult]) -> MetricsReport {
    let ok: Vec<&ReplicateResult> = results.iter().filter(|r| r.error.is_none()).collect();
    let failures: Vec<String> = results
        .iter()
        .filter_map(|r| {
            r.error
                .as_ref()
                .map(|e| format!("replicate {}: {e}", r.replicate))
        })
        .collect();
    let cont: Vec<&ModelScore> = ok.iter().filter_map(|r| r.cont.as_ref()).collect();
    let areal: Vec<&ModelScore> = ok.iter().filter_map(|r| r.areal.as_ref()).collect();
    let failed = results.len() - ok.len();
    MetricsReport {
        kind: cfg.kind,
        autocorr: cfg.autocorr,
        s_f: cfg.s_f,
        t_f: cfg.t_f,
        replicates_ok: ok.len(),
        replicates_failed: failed,
        valid: failed * 10 <= results.len(),
        cont: summarise(&cont, &PARAM_NAMES),
        areal: if cfg.fit_both {
            Some(summarise(&areal, &["beta0"]))
        } else {
            None
        },
        failures,
    }
}

fn run_guarded(cfg: &ScenarioConfig, replicate: usize) -> ReplicateResult {
    run_replicate(cfg, replicate).unwrap_or_else(|e| ReplicateResult {
        replicate,
        cont: None,
        areal: None,
        error: Some(e.to_string()),
    })
}

/// Run one scenario sequentially.
pub fn run_scenario(cfg: &ScenarioConfig) -> Result<MetricsReport> {
    cfg.validate()?;
    let results: Vec<ReplicateResult> = (0..cfg.replicates).map(|r| run_guarded(cfg, r)).collect();
    Ok(reduce_scenario(cfg, &results))
}

/// Run many scenarios, parallel over all (scenario, replicate) pairs.
/// Results are reduced in (scenario, replicate) order, so the output does
/// not depend on the thread count.
pub fn run_study(cfgs: &[ScenarioConfig]) -> Result<Vec<MetricsReport>> {
    for c in cfgs {
        c.validate()?;
    }
    let jobs: Vec<(usize, usize)> = cfgs
        .iter()
        .enumerate()
        .flat_map(|(s, c)| (0..c.replicates).map(move |r| (s, r)))
        .collect();
    let results: Vec<ReplicateResult> = jobs
        .par_iter()
        .map(|&(s, r)| run_guarded(&cfgs[s], r))
        .collect();
    let mut reports = Vec::with_capacity(cfgs.len());
    let mut offset = 0;
    for c in cfgs {
        reports.push(reduce_scenario(c, &results[offset..offset + c.replicates]));
        offset += c.replicates;
    }
    Ok(reports)
}

/// Scenario grid: the reduced default `{2,4,8} × {2,4}` or the full `{2,3,4,6,8} × {2,3,4}`.
pub fn scenario_grid(
    kinds: &[ModelKind],
    full: bool,
    replicates: usize,
    seed: u64,
    fit_both: bool,
) -> Vec<ScenarioConfig> {
    let (sfs, tfs): (&[usize], &[usize]) = if full {
        (&[2, 3, 4, 6, 8], &[2, 3, 4])
    } else {
        (&[2, 4, 8], &[2, 4])
    };
    let mut out = Vec::new();
    for &kind in kinds {
        for autocorr in Autocorr::ALL {
            for &t_f in tfs {
                for &s_f in sfs {
                    out.push(ScenarioConfig {
                        kind,
                        autocorr,
                        s_f,
                        t_f,
                        replicates,
                        seed,
                        fit_both: fit_both && kind == ModelKind::Separable102,
                        truth: TruthConfig::default(),
                        fit: study_fit_options(),
                        areal: ArealOptions::default(),
                    });
                }
            }
        }
    }
    out
}

#[derive(Debug, Serialize)]
struct TableRow<'a> {
    kind: &'a str,
    autocorr: &'a str,
    s_f: usize,
    t_f: usize,
    metric: String,
    value: f64,
    stderr: f64,
}

pub const TABLE_FILES: [&str; 4] = [
    "rmse.csv",
    "param_coverage.csv",
    "ecp.csv",
    "interval_width.csv",
];

/// Write the four metric tables; returns their paths.
pub fn write_tables(reports: &[MetricsReport], dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let paths: Vec<PathBuf> = TABLE_FILES.iter().map(|f| dir.join(f)).collect();
    let mut writers = paths
        .iter()
        .map(csv::Writer::from_path)
        .collect::<std::result::Result<Vec<_>, _>>()?;
    for r in reports {
        let row = |metric: String, s: Stat| TableRow {
            kind: r.kind.label(),
            autocorr: r.autocorr.label(),
            s_f: r.s_f,
            t_f: r.t_f,
            metric,
            value: s.value,
            stderr: s.stderr,
        };
        let n = r.replicates_ok.max(1) as f64;
        let cover = |p: f64| Stat {
            value: p,
            stderr: (p * (1.0 - p) / n).sqrt(),
        };
        let mut models = vec![("cont", &r.cont)];
        if let Some(a) = &r.areal {
            models.push(("areal", a));
        }
        for (tag, m) in models {
            writers[0].serialize(row(format!("rmse_{tag}"), m.rmse))?;
            for (name, p) in &m.param_cover {
                writers[1].serialize(row(format!("cover_{name}_{tag}"), cover(*p)))?;
            }
            writers[2].serialize(row(format!("ecp_{tag}"), m.ecp))?;
            writers[3].serialize(row(format!("width_{tag}"), m.mean_width))?;
        }
    }
    for w in writers.iter_mut() {
        w.flush()?;
    }
    Ok(paths)
}
