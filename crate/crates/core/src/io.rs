//! Gridded datasets on disk and result artifacts.
//!
//! A dataset directory holds `metadata.json`, an observation CSV with
//! columns `cell_x, cell_y, cell_t, value` in aggregated-cell indices, and
//! optional covariate CSVs with columns `x, y, [t,] value` in fine-node
//! indices. Absent observation rows are treated as missing cells.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::aggregate::{aggregate_observe, build_projection, AggScheme, Projection};
use crate::error::{Error, Result};
use crate::infer::{FitResult, ParamSummary, Prediction};
use crate::lattice::{Extents, Field, LatticeSpec};
use crate::stmodel::ModelSpec;
use crate::ObsModel;

pub const METADATA_FILE: &str = "metadata.json";

/// Coarse cell grid: cell `(i, j)` covers `[x0 + i·dx, x0 + (i+1)·dx] × …`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridMeta {
    pub x0: f64,
    pub y0: f64,
    pub dx: f64,
    pub dy: f64,
    pub nx: usize,
    pub ny: usize,
}

/// Coarse time windows of length `dt` starting at `t0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeMeta {
    pub t0: f64,
    pub dt: f64,
    pub nt: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovariateMeta {
    pub name: String,
    pub file: String,
    /// Whether the CSV carries a `t` column; static covariates are repeated in time.
    #[serde(default)]
    pub temporal: bool,
}

fn default_obs_file() -> String {
    "observations.csv".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub grid: GridMeta,
    pub time: TimeMeta,
    /// Aggregation factors of the coarse grid relative to the target lattice.
    pub factors: AggScheme,
    #[serde(default)]
    pub variable: String,
    #[serde(default)]
    pub units: String,
    #[serde(default = "default_obs_file")]
    pub observations: String,
    #[serde(default)]
    pub covariates: Vec<CovariateMeta>,
}

impl DatasetMeta {
    /// Unbuffered fine lattice implied by the coarse grid and the factors.
    pub fn target_lattice(&self) -> Result<LatticeSpec> {
        let g = &self.grid;
        let t = &self.time;
        let AggScheme { s_f, t_f } = self.factors;
        if s_f == 0 || t_f == 0 {
            return Err(Error::InvalidParameter(
                "aggregation factors must be positive".into(),
            ));
        }
        LatticeSpec::build(
            g.nx * s_f,
            g.ny * s_f,
            t.nt * t_f,
            Extents {
                x: (g.x0, g.x0 + g.nx as f64 * g.dx),
                y: (g.y0, g.y0 + g.ny as f64 * g.dy),
                t: (t.t0, t.t0 + t.nt as f64 * t.dt),
            },
            0,
        )
    }
}

/// A loaded dataset, ready to be turned into an [`ObsModel`].
#[derive(Debug, Clone)]
pub struct Dataset {
    pub meta: DatasetMeta,
    /// Unbuffered target lattice.
    pub lattice: LatticeSpec,
    /// One entry per cell, `window · n_regions + region`; NaN when missing.
    pub y: Vec<f64>,
    /// Covariates on the target lattice, in metadata order.
    pub covariates: Vec<Field>,
}

impl Dataset {
    pub fn covariate_names(&self) -> Vec<String> {
        self.meta
            .covariates
            .iter()
            .map(|c| c.name.clone())
            .collect()
    }

    /// Observation model on the target lattice padded by `buffer` cells.
    /// Covariates are extended into the buffer by copying the nearest edge value.
    pub fn obs_model(&self, model: ModelSpec, buffer: usize) -> Result<ObsModel> {
        let lat = self.lattice.with_buffer(buffer);
        let proj = build_projection(&lat, self.meta.factors)?;
        let covs = self
            .covariates
            .iter()
            .map(|c| extend_edges(c, buffer))
            .collect::<Vec<_>>();
        ObsModel::new(
            lat,
            proj,
            self.y.clone(),
            &covs,
            &self.covariate_names(),
            model,
        )
    }
}

/// Pad an unbuffered field with `buffer` cells, replicating the edges.
pub fn extend_edges(field: &Field, buffer: usize) -> Field {
    let src = field.spec;
    let spec = src.with_buffer(buffer);
    let (fx, fy) = (spec.full_nx(), spec.full_ny());
    let mut values = Vec::with_capacity(spec.n_nodes());
    for it in 0..spec.nt {
        for iy in 0..fy {
            let sy = iy.saturating_sub(buffer).min(src.ny - 1);
            for ix in 0..fx {
                let sx = ix.saturating_sub(buffer).min(src.nx - 1);
                values.push(field.values[src.index(sx, sy, it)]);
            }
        }
    }
    Field { spec, values }
}

fn schema(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Schema {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

fn bounds_err(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Bounds {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

/// Reads a CSV with the given required columns. Returns rows of raw strings
/// in column order with their 1-based line numbers (header is line 1).
fn read_columns(path: &Path, required: &[&str]) -> Result<Vec<(usize, Vec<String>)>> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)?;
    let headers = rdr.headers()?.clone();
    let mut idx = Vec::with_capacity(required.len());
    for name in required {
        let pos = headers
            .iter()
            .position(|h| h == *name)
            .ok_or_else(|| schema(path, 1, format!("missing column '{name}'")))?;
        idx.push(pos);
    }
    let mut rows = Vec::new();
    for (k, rec) in rdr.records().enumerate() {
        let line = k + 2;
        let rec = rec.map_err(|e| schema(path, line, e.to_string()))?;
        let row = idx
            .iter()
            .map(|&i| {
                rec.get(i)
                    .map(str::to_string)
                    .ok_or_else(|| schema(path, line, "short record"))
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push((line, row));
    }
    Ok(rows)
}

fn parse_index(path: &Path, line: usize, name: &str, s: &str) -> Result<usize> {
    s.parse::<usize>().map_err(|_| {
        schema(
            path,
            line,
            format!("column '{name}': expected a non-negative integer, got '{s}'"),
        )
    })
}

fn parse_value(path: &Path, line: usize, name: &str, s: &str) -> Result<f64> {
    match s.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(schema(
            path,
            line,
            format!("column '{name}': expected a finite number, got '{s}'"),
        )),
    }
}

/// Metadata path of a dataset given either its directory or the JSON file.
fn metadata_path(path: &Path) -> PathBuf {
    if path.is_dir() {
        path.join(METADATA_FILE)
    } else {
        path.to_path_buf()
    }
}

pub fn load_dataset(path: &Path) -> Result<Dataset> {
    let meta_path = metadata_path(path);
    let dir = meta_path.parent().unwrap_or(Path::new(".")).to_path_buf();
    let meta: DatasetMeta = serde_json::from_reader(File::open(&meta_path)?)
        .map_err(|e| schema(&meta_path, e.line(), e.to_string()))?;
    let lattice = meta.target_lattice()?;
    let (ncx, ncy, nw) = (meta.grid.nx, meta.grid.ny, meta.time.nt);

    let obs_path = dir.join(&meta.observations);
    let mut y = vec![f64::NAN; ncx * ncy * nw];
    let mut seen = vec![false; y.len()];
    for (line, row) in read_columns(&obs_path, &["cell_x", "cell_y", "cell_t", "value"])? {
        let cx = parse_index(&obs_path, line, "cell_x", &row[0])?;
        let cy = parse_index(&obs_path, line, "cell_y", &row[1])?;
        let ct = parse_index(&obs_path, line, "cell_t", &row[2])?;
        let v = parse_value(&obs_path, line, "value", &row[3])?;
        if cx >= ncx || cy >= ncy || ct >= nw {
            return Err(bounds_err(
                &obs_path,
                line,
                format!("cell ({cx}, {cy}, {ct}) outside the {ncx}×{ncy}×{nw} grid"),
            ));
        }
        let k = ct * ncx * ncy + cy * ncx + cx;
        if seen[k] {
            return Err(Error::DuplicateCell {
                path: obs_path,
                line,
                x: cx,
                y: cy,
                t: ct,
            });
        }
        seen[k] = true;
        y[k] = v;
    }

    let covariates = meta
        .covariates
        .iter()
        .map(|c| read_covariate(&dir.join(&c.file), c, &lattice))
        .collect::<Result<Vec<_>>>()?;
    Ok(Dataset {
        meta,
        lattice,
        y,
        covariates,
    })
}

fn read_covariate(path: &Path, meta: &CovariateMeta, lat: &LatticeSpec) -> Result<Field> {
    let cols: &[&str] = if meta.temporal {
        &["x", "y", "t", "value"]
    } else {
        &["x", "y", "value"]
    };
    let nt = if meta.temporal { lat.nt } else { 1 };
    let n_slice = lat.nx * lat.ny;
    let mut vals = vec![f64::NAN; n_slice * nt];
    for (line, row) in read_columns(path, cols)? {
        let x = parse_index(path, line, "x", &row[0])?;
        let y = parse_index(path, line, "y", &row[1])?;
        let t = if meta.temporal {
            parse_index(path, line, "t", &row[2])?
        } else {
            0
        };
        let v = parse_value(path, line, "value", row.last().expect("value column"))?;
        if x >= lat.nx || y >= lat.ny || t >= nt {
            return Err(bounds_err(
                path,
                line,
                format!("node ({x}, {y}, {t}) outside the fine lattice"),
            ));
        }
        let k = t * n_slice + y * lat.nx + x;
        if !vals[k].is_nan() {
            return Err(Error::DuplicateCell {
                path: path.to_path_buf(),
                line,
                x,
                y,
                t,
            });
        }
        vals[k] = v;
    }
    if let Some(k) = vals.iter().position(|v| v.is_nan()) {
        return Err(Error::CovariateGap {
            name: meta.name.clone(),
            x: k % lat.nx,
            y: (k / lat.nx) % lat.ny,
            t: k / n_slice,
        });
    }
    let values = if meta.temporal {
        vals
    } else {
        (0..lat.nt).flat_map(|_| vals.iter().copied()).collect()
    };
    Field::new(*lat, values)
}

/// Full-precision float formatting (17 significant digits).
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// Write a dataset directory. `y` follows the projection's cell order
/// and NaN entries are omitted. Covariates are written as static when
/// constant in time.
pub fn write_dataset(
    dir: &Path,
    meta: &DatasetMeta,
    y: &[f64],
    covariates: &[Field],
) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let lat = meta.target_lattice()?;
    let (ncx, ncy, nw) = (meta.grid.nx, meta.grid.ny, meta.time.nt);
    if y.len() != ncx * ncy * nw {
        return Err(Error::DimensionMismatch {
            expected: ncx * ncy * nw,
            found: y.len(),
        });
    }
    if covariates.len() != meta.covariates.len() {
        return Err(Error::DimensionMismatch {
            expected: meta.covariates.len(),
            found: covariates.len(),
        });
    }
    let mut w = csv::Writer::from_path(dir.join(&meta.observations))?;
    w.write_record(["cell_x", "cell_y", "cell_t", "value"])?;
    for (k, &v) in y.iter().enumerate() {
        if v.is_nan() {
            continue;
        }
        let (cx, cy, ct) = (k % ncx, (k / ncx) % ncy, k / (ncx * ncy));
        w.write_record([cx.to_string(), cy.to_string(), ct.to_string(), fmt_f64(v)])?;
    }
    w.flush()?;
    for (c, f) in meta.covariates.iter().zip(covariates) {
        if f.spec != lat {
            return Err(Error::ShapeMismatch(format!(
                "covariate '{}' is not on the target lattice",
                c.name
            )));
        }
        let mut w = csv::Writer::from_path(dir.join(&c.file))?;
        if c.temporal {
            w.write_record(["x", "y", "t", "value"])?;
        } else {
            w.write_record(["x", "y", "value"])?;
        }
        let nt = if c.temporal { lat.nt } else { 1 };
        for it in 0..nt {
            for iy in 0..lat.ny {
                for ix in 0..lat.nx {
                    let v = fmt_f64(f.values[lat.index(ix, iy, it)]);
                    if c.temporal {
                        w.write_record([ix.to_string(), iy.to_string(), it.to_string(), v])?;
                    } else {
                        w.write_record([ix.to_string(), iy.to_string(), v])?;
                    }
                }
            }
        }
        w.flush()?;
    }
    let file = File::create(dir.join(METADATA_FILE))?;
    serde_json::to_writer_pretty(BufWriter::new(file), meta)?;
    Ok(())
}

/// Metadata describing the block aggregation of an unbuffered lattice.
pub fn block_metadata(lat: &LatticeSpec, scheme: AggScheme) -> Result<DatasetMeta> {
    scheme.check(lat)?;
    Ok(DatasetMeta {
        grid: GridMeta {
            x0: lat.x0,
            y0: lat.y0,
            dx: lat.dx * scheme.s_f as f64,
            dy: lat.dy * scheme.s_f as f64,
            nx: lat.nx / scheme.s_f,
            ny: lat.ny / scheme.s_f,
        },
        time: TimeMeta {
            t0: lat.t0,
            dt: lat.dt * scheme.t_f as f64,
            nt: lat.nt / scheme.t_f,
        },
        factors: scheme,
        variable: "value".into(),
        units: String::new(),
        observations: default_obs_file(),
        covariates: vec![],
    })
}

/// Aggregate a fine field into a dataset with i.i.d. noise of precision `tau_eps`.
pub fn aggregate_to_dataset(
    field: &Field,
    scheme: AggScheme,
    tau_eps: f64,
    seed: u64,
) -> Result<(DatasetMeta, Vec<f64>, Projection)> {
    let field = if field.spec.buffer > 0 {
        field.crop_interior()
    } else {
        field.clone()
    };
    let meta = block_metadata(&field.spec, scheme)?;
    let proj = build_projection(&field.spec, scheme)?;
    let y = aggregate_observe(&field, &proj, tau_eps, seed)?;
    Ok((meta, y, proj))
}

/// Fields are stored as JSON (`spec` plus `values`); serde_json writes
/// the shortest round-tripping representation of each float.
pub fn write_field(path: &Path, field: &Field) -> Result<()> {
    let file = File::create(path)?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer(&mut w, field)?;
    w.flush()?;
    Ok(())
}

pub fn read_field(path: &Path) -> Result<Field> {
    let f: Field = serde_json::from_reader(std::io::BufReader::new(File::open(path)?))
        .map_err(|e| schema(path, e.line(), e.to_string()))?;
    f.spec.validate()?;
    Field::new(f.spec, f.values)
}

pub const PREDICTION_COLUMNS: [&str; 7] = ["x", "y", "t", "mean", "sd", "lo95", "hi95"];

/// One row per interior node, in lattice order, with cell-centre coordinates.
pub fn write_prediction(path: &Path, pred: &Prediction) -> Result<()> {
    let lat = pred.mean.spec;
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(PREDICTION_COLUMNS)?;
    for node in lat.interior_nodes() {
        let (x, y, t) = lat.node_coords(node)?;
        w.write_record([
            fmt_f64(x),
            fmt_f64(y),
            fmt_f64(t),
            fmt_f64(pred.mean.values[node]),
            fmt_f64(pred.sd.values[node]),
            fmt_f64(pred.lo95.values[node]),
            fmt_f64(pred.hi95.values[node]),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Read back a prediction written for `lattice`.
pub fn read_prediction(path: &Path, lattice: &LatticeSpec) -> Result<Prediction> {
    let rows = read_columns(path, &PREDICTION_COLUMNS)?;
    let nodes = lattice.interior_nodes();
    if rows.len() != nodes.len() {
        return Err(schema(
            path,
            rows.len() + 1,
            format!("expected {} rows, found {}", nodes.len(), rows.len()),
        ));
    }
    let mut cols = vec![Field::constant(*lattice, 0.0); 4];
    for ((line, row), &node) in rows.iter().zip(&nodes) {
        let (x, y, t) = (
            parse_value(path, *line, "x", &row[0])?,
            parse_value(path, *line, "y", &row[1])?,
            parse_value(path, *line, "t", &row[2])?,
        );
        if lattice.node_at(x, y, t)? != node {
            return Err(schema(
                path,
                *line,
                format!("coordinates ({x}, {y}, {t}) out of lattice order"),
            ));
        }
        for (j, col) in cols.iter_mut().enumerate() {
            col.values[node] = parse_value(path, *line, PREDICTION_COLUMNS[3 + j], &row[3 + j])?;
        }
    }
    let [mean, sd, lo95, hi95]: [Field; 4] = cols.try_into().expect("four columns");
    Ok(Prediction {
        mean,
        sd,
        lo95,
        hi95,
    })
}

pub fn write_exceedance(path: &Path, prob: &Field, threshold: f64) -> Result<()> {
    let lat = prob.spec;
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["x", "y", "t", "threshold", "prob"])?;
    for node in lat.interior_nodes() {
        let (x, y, t) = lat.node_coords(node)?;
        w.write_record([
            fmt_f64(x),
            fmt_f64(y),
            fmt_f64(t),
            fmt_f64(threshold),
            fmt_f64(prob.values[node]),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Returns the threshold and the probabilities on `lattice`.
pub fn read_exceedance(path: &Path, lattice: &LatticeSpec) -> Result<(f64, Field)> {
    let rows = read_columns(path, &["x", "y", "t", "threshold", "prob"])?;
    let mut field = Field::constant(*lattice, f64::NAN);
    let mut threshold = f64::NAN;
    for (line, row) in &rows {
        let x = parse_value(path, *line, "x", &row[0])?;
        let y = parse_value(path, *line, "y", &row[1])?;
        let t = parse_value(path, *line, "t", &row[2])?;
        threshold = parse_value(path, *line, "threshold", &row[3])?;
        let node = lattice
            .node_at(x, y, t)
            .map_err(|e| bounds_err(path, *line, e.to_string()))?;
        field.values[node] = parse_value(path, *line, "prob", &row[4])?;
    }
    if let Some(node) = lattice
        .interior_nodes()
        .into_iter()
        .find(|&n| field.values[n].is_nan())
    {
        return Err(schema(
            path,
            rows.len() + 1,
            format!("no row for node {node}"),
        ));
    }
    Ok((threshold, field))
}

/// Contents of `summary.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitSummary {
    pub model: ModelSpec,
    pub hyperparameters: Vec<ParamSummary>,
    pub fixed_effects: Vec<ParamSummary>,
    pub loglik: f64,
    pub converged: bool,
    pub hessian_pd: bool,
    pub iterations: usize,
    pub evaluations: usize,
    pub engine: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threshold: Option<f64>,
}

impl FitSummary {
    pub fn from_fit(fit: &FitResult, threshold: Option<f64>) -> Self {
        Self {
            model: fit.theta_hat,
            hyperparameters: fit.hyper_summary(),
            fixed_effects: fit.beta_summary(),
            loglik: fit.loglik,
            converged: fit.converged,
            hessian_pd: fit.hessian_pd,
            iterations: fit.iterations,
            evaluations: fit.evaluations,
            engine: format!("{:?}", fit.route).to_lowercase(),
            threshold,
        }
    }
}

pub fn write_summary(path: &Path, summary: &FitSummary) -> Result<()> {
    let file = File::create(path)?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut w, summary)?;
    w.flush()?;
    Ok(())
}

pub fn read_summary(path: &Path) -> Result<FitSummary> {
    serde_json::from_reader(std::io::BufReader::new(File::open(path)?))
        .map_err(|e| schema(path, e.line(), e.to_string()))
}

/// File names written by [`write_results`].
pub const SUMMARY_FILE: &str = "summary.json";
pub const PREDICTION_FILE: &str = "prediction.csv";
pub const EXCEEDANCE_FILE: &str = "exceedance.csv";

/// Write `summary.json`, `prediction.csv` and, with a threshold, `exceedance.csv`.
pub fn write_results(dir: &Path, fit: &FitResult, threshold: Option<f64>) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let mut out = vec![dir.join(SUMMARY_FILE), dir.join(PREDICTION_FILE)];
    write_summary(&out[0], &FitSummary::from_fit(fit, threshold))?;
    let pred = Prediction {
        mean: fit.latent_mean.clone(),
        sd: fit.latent_sd.clone(),
        lo95: fit.lo95.clone(),
        hi95: fit.hi95.clone(),
    };
    write_prediction(&out[1], &pred)?;
    if let Some(c) = threshold {
        let p = dir.join(EXCEEDANCE_FILE);
        write_exceedance(&p, &crate::infer::exceedance(fit, c)?, c)?;
        out.push(p);
    }
    Ok(out)
}

/// Cell values keyed by `(cell_x, cell_y, cell_t)`, for tests and tools.
pub fn observation_map(ds: &Dataset) -> HashMap<(usize, usize, usize), f64> {
    let (ncx, ncy) = (ds.meta.grid.nx, ds.meta.grid.ny);
    ds.y.iter()
        .enumerate()
        .filter(|(_, v)| !v.is_nan())
        .map(|(k, &v)| ((k % ncx, (k / ncx) % ncy, k / (ncx * ncy)), v))
        .collect()
}
