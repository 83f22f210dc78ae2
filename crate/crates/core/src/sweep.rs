//! Parameter sweeps, result tables and their persistence, and the shipped
//! figure recipes.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::escape::{escape_rate, predict_transition, Potential};
use crate::model::{deserialize_config, ModelParams};
use crate::roots::{linspace, logspace};
use crate::sde::{run_ensemble, settle, IntegratorConfig};
use crate::spectrum::spectrum;
use crate::stability::{bloch_reduce, classify_phase, most_unstable_mode, phase_boundaries};
use crate::stats::{detect_transition, fit_samples, symmetry_delta};

pub const TOOL_NAME: &str = "ptsteady";
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Axis {
    #[serde(rename = "Gamma_over_g")]
    GammaOverG,
    #[serde(rename = "Nth_over_n0")]
    NthOverN0,
    #[serde(rename = "gprime_over_g")]
    GprimeOverG,
    #[serde(rename = "nu")]
    Nu,
}

impl Axis {
    pub fn as_str(&self) -> &'static str {
        match self {
            Axis::GammaOverG => "Gamma_over_g",
            Axis::NthOverN0 => "Nth_over_n0",
            Axis::GprimeOverG => "gprime_over_g",
            Axis::Nu => "nu",
        }
    }

    pub fn apply(&self, p: &ModelParams, x: f64) -> ModelParams {
        let mut q = *p;
        match self {
            Axis::GammaOverG => q.gain = x * p.g,
            Axis::NthOverN0 => q.n_th = x * p.n0,
            Axis::GprimeOverG => q.gprime = x * p.g,
            Axis::Nu => q.nu = x,
        }
        q
    }
}

impl std::str::FromStr for Axis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        serde_json::from_value(Value::String(s.to_string()))
            .map_err(|_| Error::Config(format!("unknown sweep axis '{s}'")))
    }
}

/// Grid values, either listed or generated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GridSpec {
    Values(Vec<f64>),
    Range {
        start: f64,
        stop: f64,
        count: usize,
        #[serde(default)]
        log: bool,
    },
}

impl GridSpec {
    pub fn values(&self) -> Vec<f64> {
        match self {
            GridSpec::Values(v) => v.clone(),
            GridSpec::Range { start, stop, count, log } => {
                if *log {
                    logspace(*start, *stop, *count)
                } else {
                    linspace(*start, *stop, *count)
                }
            }
        }
    }
}

impl std::str::FromStr for GridSpec {
    type Err = Error;

    /// `a,b,c` or `start:stop:count`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Config(format!("cannot parse grid '{s}'"));
        let num = |t: &str| t.trim().parse::<f64>().map_err(|_| bad());
        let parts: Vec<&str> = s.split(':').collect();
        match parts.len() {
            1 => Ok(GridSpec::Values(s.split(',').map(num).collect::<Result<_>>()?)),
            3 => Ok(GridSpec::Range {
                start: num(parts[0])?,
                stop: num(parts[1])?,
                count: parts[2].trim().parse().map_err(|_| bad())?,
                log: false,
            }),
            _ => Err(bad()),
        }
    }
}

/// Nonempty and strictly monotone.
pub fn check_grid(name: &str, v: &[f64]) -> Result<()> {
    if v.is_empty() {
        return Err(Error::Config(format!("{name} grid is empty")));
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::Config(format!("{name} grid has non-finite values")));
    }
    let up = v.windows(2).all(|w| w[1] > w[0]);
    let down = v.windows(2).all(|w| w[1] < w[0]);
    if !(up || down) {
        return Err(Error::Config(format!("{name} grid is not strictly monotone")));
    }
    Ok(())
}

/// Analyses run at every grid point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pipeline {
    /// Eigenvalues of the linear generator.
    Spectrum,
    /// Fixed points and phase label.
    Phases,
    /// Closed-form phase boundaries at the row's `nu`.
    Boundaries,
    /// Long-time noiseless integration.
    Deterministic,
    /// Stochastic ensemble: symmetry measure, dissipation and radial fits.
    Stochastic,
    /// Effective potential and Kramers rate at the row's parameters.
    Escape,
    /// Kramers prediction of the noise-driven transition point.
    Kramers,
    /// Simulated `Delta = 0.5` crossing over [`SweepSpec::crossing_grid`].
    Crossing,
    /// Plane-wave reduction of an array: effective coupling of the most
    /// unstable mode and the two-mode boundaries and Kramers prediction
    /// rescaled to `Gamma/g`.
    Bloch,
}

impl Pipeline {
    pub fn columns(&self) -> &'static [&'static str] {
        match self {
            Pipeline::Spectrum => &["re_lambda_plus", "im_lambda_plus", "re_lambda_minus", "im_lambda_minus", "regime"],
            Pipeline::Phases => &["label", "r_ss2", "z_ss2", "tau", "delta_det", "omega_osc"],
            Pipeline::Boundaries => &["I_to_II", "II_to_IIIw", "II_to_III"],
            Pipeline::Deterministic => &["alpha2_over_n0", "beta2_over_n0", "alpha2_min", "alpha2_max", "omega"],
            Pipeline::Stochastic => &[
                "delta", "gamma_bar", "occ_a", "occ_b", "r0", "z0", "sigma_a", "sigma_b", "fluct_a", "fluct_b",
            ],
            Pipeline::Escape => &["z_min", "z_max", "dU", "R0", "R_esc", "stable"],
            Pipeline::Kramers => &["predicted_Gamma_over_g"],
            Pipeline::Crossing => &["simulated_Gamma_over_g"],
            Pipeline::Bloch => &["g_eff", "k_star", "bloch_I_to_II", "bloch_II_to_IIIw", "bloch_II_to_III", "bloch_kramers"],
        }
    }

    fn stochastic(&self) -> bool {
        matches!(self, Pipeline::Stochastic | Pipeline::Crossing)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub axis: Axis,
    pub grid: GridSpec,
    /// Optional slower axis for two-dimensional maps; rows run over the
    /// product with `axis` fastest.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub outer: Option<OuterAxis>,
    #[serde(deserialize_with = "deserialize_config")]
    pub base: ModelParams,
    pub pipeline: Vec<Pipeline>,
    /// `Gamma/g` values scanned by [`Pipeline::Crossing`].
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub crossing_grid: Option<GridSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OuterAxis {
    pub axis: Axis,
    pub grid: GridSpec,
}

impl SweepSpec {
    pub fn new(axis: Axis, grid: Vec<f64>, base: ModelParams, pipeline: Vec<Pipeline>) -> Self {
        Self { axis, grid: GridSpec::Values(grid), outer: None, base, pipeline, crossing_grid: None }
    }

    pub fn validate(&self) -> Result<()> {
        self.base.validate()?;
        check_grid(self.axis.as_str(), &self.grid.values())?;
        if let Some(o) = &self.outer {
            check_grid(o.axis.as_str(), &o.grid.values())?;
            if o.axis == self.axis {
                return Err(Error::Config("outer axis repeats the sweep axis".to_string()));
            }
        }
        if self.pipeline.is_empty() {
            return Err(Error::Config("pipeline is empty".to_string()));
        }
        if self.pipeline.contains(&Pipeline::Crossing) {
            let g = self
                .crossing_grid
                .as_ref()
                .ok_or_else(|| Error::Config("crossing pipeline needs crossing_grid".to_string()))?;
            check_grid("crossing", &g.values())?;
        }
        for p in self.points() {
            p.validate()?;
        }
        Ok(())
    }

    /// Parameters of every row, in row order.
    pub fn points(&self) -> Vec<ModelParams> {
        let inner = self.grid.values();
        match &self.outer {
            None => inner.iter().map(|&x| self.axis.apply(&self.base, x)).collect(),
            Some(o) => o
                .grid
                .values()
                .iter()
                .flat_map(|&y| {
                    let b = o.axis.apply(&self.base, y);
                    inner.iter().map(move |&x| self.axis.apply(&b, x)).collect::<Vec<_>>()
                })
                .collect(),
        }
    }

    fn coordinates(&self) -> Vec<Vec<f64>> {
        let inner = self.grid.values();
        match &self.outer {
            None => inner.iter().map(|&x| vec![x]).collect(),
            Some(o) => o.grid.values().iter().flat_map(|&y| inner.iter().map(move |&x| vec![y, x])).collect(),
        }
    }

    pub fn columns(&self) -> Vec<String> {
        let mut c: Vec<String> = Vec::new();
        if let Some(o) = &self.outer {
            c.push(o.axis.as_str().to_string());
        }
        c.push(self.axis.as_str().to_string());
        for p in &self.pipeline {
            c.extend(p.columns().iter().map(|s| s.to_string()));
        }
        c.push("error".to_string());
        c
    }
}

/// Seed of grid point `index`, derived from the master seed (SplitMix64 finalizer).
pub fn sub_seed(master: u64, index: u64) -> u64 {
    let mut z = master ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Num(f64),
    Text(String),
    Missing,
}

impl Cell {
    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Cell::Num(x) => Some(*x),
            _ => None,
        }
    }

    pub fn as_str(&self) -> Option<&str> {
        match self {
            Cell::Text(s) => Some(s),
            _ => None,
        }
    }

    fn opt(x: Option<f64>) -> Cell {
        x.map_or(Cell::Missing, Cell::Num)
    }
}

/// Rounds to the 12 significant digits used by the persisted formats.
pub fn round12(x: f64) -> f64 {
    if x.is_finite() {
        format!("{:.11e}", x + 0.0).parse().expect("formatted float parses")
    } else {
        x
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ResultTable {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl ResultTable {
    pub fn column(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    /// Numeric column values, `NaN` where a row has no number.
    pub fn numbers(&self, name: &str) -> Option<Vec<f64>> {
        let i = self.column(name)?;
        Some(self.rows.iter().map(|r| r[i].as_f64().unwrap_or(f64::NAN)).collect())
    }

    /// The table as it reads back after persisting.
    pub fn rounded(&self) -> Self {
        let rows = self
            .rows
            .iter()
            .map(|r| {
                r.iter()
                    .map(|c| match c {
                        Cell::Num(x) => Cell::Num(round12(*x)),
                        other => other.clone(),
                    })
                    .collect()
            })
            .collect();
        Self { columns: self.columns.clone(), rows }
    }

    /// The named columns, in the given order.
    pub fn select(&self, names: &[String]) -> Result<Self> {
        let idx = names
            .iter()
            .map(|n| self.column(n).ok_or_else(|| Error::Config(format!("no column '{n}'"))))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            columns: names.to_vec(),
            rows: self.rows.iter().map(|r| idx.iter().map(|&i| r[i].clone()).collect()).collect(),
        })
    }

    pub fn errors(&self) -> Vec<(usize, &str)> {
        let Some(i) = self.column("error") else { return Vec::new() };
        self.rows.iter().enumerate().filter_map(|(k, r)| r[i].as_str().map(|s| (k, s))).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

impl Format {
    pub fn extension(&self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::Json => "json",
        }
    }
}

impl std::str::FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            _ => Err(Error::Config(format!("unknown output format '{s}'"))),
        }
    }
}

fn csv_field(c: &Cell) -> String {
    match c {
        Cell::Num(x) if x.is_finite() => format!("{:.11e}", x + 0.0),
        Cell::Num(x) => format!("{x}"),
        Cell::Text(s) => s.clone(),
        Cell::Missing => String::new(),
    }
}

fn json_cell(c: &Cell) -> Value {
    match c {
        Cell::Num(x) => serde_json::Number::from_f64(round12(*x)).map_or(Value::Null, Value::Number),
        Cell::Text(s) => Value::String(s.clone()),
        Cell::Missing => Value::Null,
    }
}

/// Serializes a table. Numbers carry 12 significant digits; missing values
/// are empty CSV fields or JSON `null`.
pub fn render(t: &ResultTable, format: Format) -> Result<String> {
    match format {
        Format::Csv => {
            let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
            w.write_record(&t.columns).map_err(|e| Error::Config(e.to_string()))?;
            for r in &t.rows {
                w.write_record(r.iter().map(csv_field)).map_err(|e| Error::Config(e.to_string()))?;
            }
            let bytes = w.into_inner().map_err(|e| Error::Config(e.to_string()))?;
            Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
        }
        Format::Json => {
            let rows: Vec<Value> = t.rows.iter().map(|r| Value::Array(r.iter().map(json_cell).collect())).collect();
            let doc = serde_json::json!({ "columns": t.columns, "rows": rows });
            let mut s = serde_json::to_string_pretty(&doc)?;
            s.push('\n');
            Ok(s)
        }
    }
}

fn parse_field(s: &str) -> Cell {
    if s.is_empty() {
        Cell::Missing
    } else if let Ok(x) = s.parse::<f64>() {
        Cell::Num(x)
    } else {
        Cell::Text(s.to_string())
    }
}

pub fn parse(text: &str, format: Format) -> Result<ResultTable> {
    match format {
        Format::Csv => {
            let mut r = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
            let columns = r
                .headers()
                .map_err(|e| Error::Config(e.to_string()))?
                .iter()
                .map(str::to_string)
                .collect();
            let mut rows = Vec::new();
            for rec in r.records() {
                let rec = rec.map_err(|e| Error::Config(e.to_string()))?;
                rows.push(rec.iter().map(parse_field).collect());
            }
            Ok(ResultTable { columns, rows })
        }
        Format::Json => {
            #[derive(Deserialize)]
            struct Doc {
                columns: Vec<String>,
                rows: Vec<Vec<Value>>,
            }
            let doc: Doc = serde_json::from_str(text)?;
            let rows = doc
                .rows
                .into_iter()
                .map(|r| {
                    r.into_iter()
                        .map(|v| match v {
                            Value::Null => Cell::Missing,
                            Value::Number(n) => Cell::Num(n.as_f64().unwrap_or(f64::NAN)),
                            Value::String(s) => Cell::Text(s),
                            other => Cell::Text(other.to_string()),
                        })
                        .collect()
                })
                .collect();
            Ok(ResultTable { columns: doc.columns, rows })
        }
    }
}

/// Everything needed to rerun a task and reproduce its output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metadata {
    pub tool: String,
    pub version: String,
    pub seed: u64,
    pub format: Format,
    pub recipe: Recipe,
}

/// Path of the metadata sidecar written next to `path`.
pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".meta.json");
    PathBuf::from(s)
}

/// Writes the table and its `.meta.json` sidecar.
pub fn emit(t: &ResultTable, format: Format, path: &Path, meta: &Metadata) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(path, render(t, format)?)?;
    let mut m = serde_json::to_string_pretty(meta)?;
    m.push('\n');
    std::fs::write(sidecar_path(path), m)?;
    Ok(())
}

pub fn read_table(path: &Path, format: Format) -> Result<ResultTable> {
    parse(&std::fs::read_to_string(path)?, format)
}

fn fmt_err(e: &Error) -> Cell {
    let mut s = String::new();
    let _ = write!(s, "{e}");
    Cell::Text(s.replace(['\n', '\r'], " "))
}

fn row_cells(spec: &SweepSpec, p: &ModelParams, pipe: Pipeline, cfg: &IntegratorConfig) -> Result<Vec<Cell>> {
    Ok(match pipe {
        Pipeline::Spectrum => {
            let s = spectrum(p);
            vec![
                Cell::Num(s.lambda_plus.re),
                Cell::Num(s.lambda_plus.im),
                Cell::Num(s.lambda_minus.re),
                Cell::Num(s.lambda_minus.im),
                Cell::Text(s.regime.as_str().to_string()),
            ]
        }
        Pipeline::Phases => {
            let r = classify_phase(p)?;
            let (r2, z2) = r.occupations();
            let (tau, delta) = r.attractor.map_or((f64::NAN, f64::NAN), |f| (f.tau, f.delta));
            vec![
                Cell::Text(r.label.as_str().to_string()),
                Cell::Num(r2),
                Cell::Num(z2),
                Cell::Num(tau),
                Cell::Num(delta),
                Cell::opt(r.omega_osc),
            ]
        }
        Pipeline::Boundaries => {
            let b = phase_boundaries(p.nu)?;
            vec![Cell::Num(b.i_to_ii), Cell::opt(b.ii_to_iiiw), Cell::opt(b.ii_to_iii)]
        }
        Pipeline::Deterministic => {
            let s = settle(p)?;
            vec![
                Cell::Num(s.alpha2 / p.n0),
                Cell::Num(s.beta2 / p.n0),
                Cell::Num(s.alpha2_min / p.n0),
                Cell::Num(s.alpha2_max / p.n0),
                Cell::opt(s.oscillation.map(|o| o.omega)),
            ]
        }
        Pipeline::Stochastic => {
            let e = run_ensemble(p, cfg)?;
            let sym = symmetry_delta(&e.alphas, &e.betas, p)?;
            let fa = fit_samples(&e.alphas)?;
            let fb = fit_samples(&e.betas)?;
            vec![
                Cell::Num(sym.delta),
                Cell::Num(sym.gamma_bar),
                Cell::Num(sym.mean_occ_gain),
                Cell::Num(sym.mean_occ_loss),
                Cell::Num(fa.r0),
                Cell::Num(fb.r0),
                Cell::Num(fa.sigma),
                Cell::Num(fb.sigma),
                Cell::Num(fa.fluct),
                Cell::Num(fb.fluct),
            ]
        }
        Pipeline::Escape => {
            let e = escape_rate(p)?;
            vec![
                Cell::Num(e.z_min),
                Cell::Num(e.z_max),
                Cell::Num(e.d_u),
                Cell::Num(e.r0),
                Cell::Num(e.r_esc),
                Cell::Text(e.stable.to_string()),
            ]
        }
        Pipeline::Kramers => vec![Cell::Num(predict_transition(p)?)],
        Pipeline::Crossing => {
            let grid = spec.crossing_grid.as_ref().expect("validated").values();
            vec![Cell::Num(simulated_crossing(p, &grid, cfg)?)]
        }
        Pipeline::Bloch => {
            let k = most_unstable_mode(p);
            let q = bloch_reduce(p, k)?;
            let s = q.g / p.g;
            let b = phase_boundaries(p.nu)?;
            vec![
                Cell::Num(s),
                Cell::Num(k),
                Cell::Num(s * b.i_to_ii),
                Cell::opt(b.ii_to_iiiw.map(|x| s * x)),
                Cell::opt(b.ii_to_iii.map(|x| s * x)),
                Cell::opt(predict_transition(&q).ok().map(|x| s * x)),
            ]
        }
    })
}

/// `Gamma/g` at which the simulated `Delta` first reaches 0.5 on `grid`.
/// Grid point `i` runs with seed `sub_seed(c.seed, i)`.
pub fn simulated_crossing(p: &ModelParams, grid: &[f64], c: &IntegratorConfig) -> Result<f64> {
    let deltas = grid
        .par_iter()
        .enumerate()
        .map(|(i, &x)| {
            let q = p.with_gain(x * p.g);
            let e = run_ensemble(&q, &c.with_seed(sub_seed(c.seed, i as u64)))?;
            Ok(symmetry_delta(&e.alphas, &e.betas, &q)?.delta)
        })
        .collect::<Result<Vec<f64>>>()?;
    detect_transition(grid, &deltas, 0.5)
}

/// Runs every pipeline at every grid point. Configuration errors abort
/// before any work; failures at individual points are recorded in the
/// row's `error` column and its remaining cells left empty.
pub fn run_sweep(spec: &SweepSpec, c: &IntegratorConfig) -> Result<ResultTable> {
    spec.validate()?;
    if spec.pipeline.iter().any(Pipeline::stochastic) {
        c.validate()?;
    }
    let points = spec.points();
    let coords = spec.coordinates();
    let rows = points
        .par_iter()
        .zip(coords.par_iter())
        .enumerate()
        .map(|(i, (p, xs))| {
            let cfg = c.with_seed(sub_seed(c.seed, i as u64));
            let mut row: Vec<Cell> = xs.iter().map(|&x| Cell::Num(x)).collect();
            let mut error = Cell::Missing;
            for pipe in &spec.pipeline {
                let width = pipe.columns().len();
                match row_cells(spec, p, *pipe, &cfg) {
                    Ok(cells) => row.extend(cells),
                    Err(e) => {
                        log::warn!("row {i}: {e}");
                        if error == Cell::Missing {
                            error = fmt_err(&e);
                        }
                        row.extend(std::iter::repeat_n(Cell::Missing, width));
                    }
                }
            }
            row.push(error);
            row
        })
        .collect();
    Ok(ResultTable { columns: spec.columns(), rows })
}

/// `(z, U(z))` samples of the effective potential.
pub fn potential_table(p: &ModelParams, z: &[f64]) -> Result<ResultTable> {
    p.validate()?;
    check_grid("z", z)?;
    if z.iter().any(|&x| x <= 0.0) {
        return Err(Error::Config("z grid must be positive".to_string()));
    }
    let pot = Potential::for_params(p)?;
    Ok(ResultTable {
        columns: vec!["z".to_string(), "U".to_string()],
        rows: z.iter().map(|&x| vec![Cell::Num(x), Cell::Num(pot.u(x))]).collect(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Task {
    Sweep {
        sweep: SweepSpec,
        #[serde(default)]
        config: IntegratorConfig,
    },
    Potential {
        #[serde(deserialize_with = "deserialize_config")]
        base: ModelParams,
        z: GridSpec,
    },
}

/// A named, data-only description of one figure's data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Recipe {
    pub name: String,
    #[serde(default)]
    pub description: String,
    #[serde(flatten)]
    pub task: Task,
    /// Output columns to keep, in this order; all columns when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub select: Option<Vec<String>>,
}

impl Recipe {
    pub fn from_json_str(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn new(name: &str, task: Task) -> Self {
        Self { name: name.to_string(), description: String::new(), task, select: None }
    }

    /// Runs the task; `seed` overrides the configured master seed.
    pub fn run(&self, seed: Option<u64>) -> Result<ResultTable> {
        let t = match &self.task {
            Task::Sweep { sweep, config } => {
                let c = seed.map_or(*config, |s| config.with_seed(s));
                run_sweep(sweep, &c)?
            }
            Task::Potential { base, z } => potential_table(base, &z.values())?,
        };
        match &self.select {
            Some(cols) => t.select(cols),
            None => Ok(t),
        }
    }

    pub fn seed(&self) -> u64 {
        match &self.task {
            Task::Sweep { config, .. } => config.seed,
            Task::Potential { .. } => 0,
        }
    }

    /// The recipe with its seed replaced, as stored in metadata.
    pub fn with_seed(&self, seed: u64) -> Self {
        let mut r = self.clone();
        if let Task::Sweep { config, .. } = &mut r.task {
            config.seed = seed;
        }
        r
    }

    pub fn metadata(&self, format: Format) -> Metadata {
        Metadata {
            tool: TOOL_NAME.to_string(),
            version: TOOL_VERSION.to_string(),
            seed: self.seed(),
            format,
            recipe: self.clone(),
        }
    }
}

const RECIPES: &[(&str, &str)] = &[
    ("2a", include_str!("../recipes/2a.json")),
    ("2b", include_str!("../recipes/2b.json")),
    ("3a", include_str!("../recipes/3a.json")),
    ("3b", include_str!("../recipes/3b.json")),
    ("3c", include_str!("../recipes/3c.json")),
    ("4a", include_str!("../recipes/4a.json")),
    ("4b", include_str!("../recipes/4b.json")),
    ("5", include_str!("../recipes/5.json")),
    ("6b", include_str!("../recipes/6b.json")),
    ("6c", include_str!("../recipes/6c.json")),
];

pub fn recipe_names() -> Vec<&'static str> {
    RECIPES.iter().map(|(n, _)| *n).collect()
}

pub fn builtin_recipe(name: &str) -> Result<Recipe> {
    let (_, text) = RECIPES
        .iter()
        .find(|(n, _)| *n == name)
        .ok_or_else(|| Error::Config(format!("unknown recipe '{name}' (known: {})", recipe_names().join(", "))))?;
    Recipe::from_json_str(text)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_spec() -> SweepSpec {
        SweepSpec::new(
            Axis::GammaOverG,
            vec![0.5, 2.0, 6.0],
            ModelParams::new(0.0, 1e-3),
            vec![Pipeline::Spectrum, Pipeline::Phases, Pipeline::Boundaries],
        )
    }

    #[test]
    fn grid_parsing() {
        assert_eq!("1,2,3".parse::<GridSpec>().unwrap().values(), vec![1.0, 2.0, 3.0]);
        assert_eq!("0:1:3".parse::<GridSpec>().unwrap().values(), vec![0.0, 0.5, 1.0]);
        assert!("0:1".parse::<GridSpec>().is_err());
        assert!("a,b".parse::<GridSpec>().is_err());
        let g: GridSpec = serde_json::from_str(r#"{"start": 1, "stop": 100, "count": 3, "log": true}"#).unwrap();
        let v = g.values();
        assert!((v[1] - 10.0).abs() < 1e-12);
    }

    #[test]
    fn grid_must_be_strictly_monotone() {
        assert!(check_grid("x", &[1.0, 2.0, 3.0]).is_ok());
        assert!(check_grid("x", &[3.0, 2.0]).is_ok());
        assert!(check_grid("x", &[1.0]).is_ok());
        assert!(check_grid("x", &[]).is_err());
        assert!(check_grid("x", &[1.0, 1.0]).is_err());
        assert!(check_grid("x", &[1.0, 3.0, 2.0]).is_err());
        let mut s = small_spec();
        s.grid = GridSpec::Values(vec![2.0, 1.0, 3.0]);
        assert!(run_sweep(&s, &IntegratorConfig::default()).unwrap_err().is_config());
    }

    #[test]
    fn axis_vocabulary() {
        for a in [Axis::GammaOverG, Axis::NthOverN0, Axis::GprimeOverG, Axis::Nu] {
            assert_eq!(a.as_str().parse::<Axis>().unwrap(), a);
        }
        assert!("Gamma".parse::<Axis>().is_err());
    }

    #[test]
    fn bloch_columns_rescale_the_two_mode_boundaries() {
        let spec = SweepSpec::new(
            Axis::GprimeOverG,
            vec![0.0, 0.25, 1.0],
            ModelParams::new(5.0, 1e-3).with_n_th(10.0).with_array(6, 0.0),
            vec![Pipeline::Bloch],
        );
        let t = run_sweep(&spec, &IntegratorConfig::default()).unwrap();
        assert_eq!(t.numbers("g_eff").unwrap()[..2], [1.0, 0.75]);
        assert_eq!(t.numbers("bloch_II_to_III").unwrap()[..2], [4.0, 3.0]);
        assert!((t.numbers("k_star").unwrap()[1] - std::f64::consts::PI).abs() < 1e-12);
        let kr = t.numbers("bloch_kramers").unwrap();
        assert!(kr[..2].iter().all(|x| x.is_finite() && *x > 0.0), "{kr:?}");
        // g' = g decouples the k = pi mode
        assert_eq!(t.rows[2][t.column("g_eff").unwrap()], Cell::Missing);
        assert!(matches!(&t.rows[2][t.column("error").unwrap()], Cell::Text(e) if e.contains("decouple")));
    }

    #[test]
    fn one_row_per_point_in_grid_order() {
        let t = run_sweep(&small_spec(), &IntegratorConfig::default()).unwrap();
        assert_eq!(t.rows.len(), 3);
        assert_eq!(t.columns[0], "Gamma_over_g");
        assert_eq!(t.columns.last().unwrap(), "error");
        assert!(t.rows.iter().all(|r| r.len() == t.columns.len()));
        assert_eq!(t.numbers("Gamma_over_g").unwrap(), vec![0.5, 2.0, 6.0]);
        let labels: Vec<_> = t.rows.iter().map(|r| r[t.column("label").unwrap()].clone()).collect();
        assert_eq!(labels, ["I", "II", "III"].map(|s| Cell::Text(s.to_string())));
        assert_eq!(
            t.rows[0][t.column("regime").unwrap()],
            Cell::Text("PT_symmetric".to_string())
        );
    }

    #[test]
    fn failures_stay_in_their_row() {
        let s = SweepSpec::new(
            Axis::GammaOverG,
            vec![3.0, 12.0],
            ModelParams::new(0.0, 1e-3).with_n_th(10.0),
            vec![Pipeline::Escape],
        );
        let t = run_sweep(&s, &IntegratorConfig::default()).unwrap();
        let errs = t.errors();
        assert_eq!(errs.len(), 1);
        assert_eq!(errs[0].0, 0);
        assert_eq!(t.rows[0][t.column("z_min").unwrap()], Cell::Missing);
        assert!(t.rows[1][t.column("z_min").unwrap()].as_f64().unwrap() > 0.0);
    }

    #[test]
    fn outer_axis_runs_slowest() {
        let mut s = small_spec();
        s.grid = GridSpec::Values(vec![2.0, 6.0]);
        s.outer = Some(OuterAxis { axis: Axis::Nu, grid: GridSpec::Values(vec![1.5, 2.0, 3.0]) });
        s.pipeline = vec![Pipeline::Boundaries];
        let t = run_sweep(&s, &IntegratorConfig::default()).unwrap();
        assert_eq!(t.columns[..2], ["nu".to_string(), "Gamma_over_g".to_string()]);
        assert_eq!(t.numbers("nu").unwrap(), vec![1.5, 1.5, 2.0, 2.0, 3.0, 3.0]);
        let iii = t.numbers("II_to_III").unwrap();
        assert!((iii[2] - 4.0).abs() < 1e-12);
    }

    #[test]
    fn render_and_parse_back() {
        let t = run_sweep(&small_spec(), &IntegratorConfig::default()).unwrap();
        for f in [Format::Csv, Format::Json] {
            let text = render(&t, f).unwrap();
            assert_eq!(parse(&text, f).unwrap(), t.rounded());
            assert_eq!(render(&parse(&text, f).unwrap(), f).unwrap(), text);
        }
        let csv = render(&t, Format::Csv).unwrap();
        assert!(csv.lines().nth(1).unwrap().starts_with("5.00000000000e-1,"));
    }

    #[test]
    fn empty_table_is_header_only() {
        let t = ResultTable { columns: vec!["a".into(), "b".into()], rows: vec![] };
        assert_eq!(render(&t, Format::Csv).unwrap(), "a,b\n");
        assert_eq!(parse("a,b\n", Format::Csv).unwrap(), t);
        assert!("xml".parse::<Format>().is_err());
    }

    #[test]
    fn twelve_significant_digits() {
        assert_eq!(round12(2.0 / 3.0), 0.666666666667);
        assert_eq!(round12(1.0 / 3.0e-7), 3333333.33333);
        assert!(round12(f64::NAN).is_nan());
    }

    #[test]
    fn sub_seeds_are_distinct() {
        let s: std::collections::HashSet<u64> = (0..1000).map(|i| sub_seed(7, i)).collect();
        assert_eq!(s.len(), 1000);
        assert_ne!(sub_seed(7, 0), sub_seed(8, 0));
    }

    #[test]
    fn every_builtin_recipe_parses_and_validates() {
        assert_eq!(recipe_names().len(), 10);
        for name in recipe_names() {
            let r = builtin_recipe(name).unwrap();
            assert_eq!(r.name, name);
            match &r.task {
                Task::Sweep { sweep, config } => {
                    sweep.validate().unwrap();
                    config.validate().unwrap();
                }
                Task::Potential { base, z } => {
                    base.validate().unwrap();
                    check_grid("z", &z.values()).unwrap();
                }
            }
            let meta = r.metadata(Format::Csv);
            let back: Metadata = serde_json::from_str(&serde_json::to_string(&meta).unwrap()).unwrap();
            assert_eq!(back, meta);
        }
        assert!(builtin_recipe("7").unwrap_err().is_config());
    }

    #[test]
    fn emit_writes_sidecar() {
        let dir = tempfile::tempdir().unwrap();
        let r = builtin_recipe("4a").unwrap();
        let t = r.run(None).unwrap();
        let path = dir.path().join("out/fig4a.csv");
        emit(&t, Format::Csv, &path, &r.metadata(Format::Csv)).unwrap();
        assert_eq!(read_table(&path, Format::Csv).unwrap(), t.rounded());
        let meta: Metadata = serde_json::from_str(&std::fs::read_to_string(sidecar_path(&path)).unwrap()).unwrap();
        assert_eq!(meta.recipe, r);
        assert_eq!(meta.version, TOOL_VERSION);
    }
}
