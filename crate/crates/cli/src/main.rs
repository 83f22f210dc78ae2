use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use serde_json::json;

use ptsteady::sde::{run_deterministic, IntegratorConfig, Scheme};
use ptsteady::sweep::{
    builtin_recipe, emit, recipe_names, render, round12, GridSpec, Metadata, Recipe, ResultTable, Task,
};
use ptsteady::{fit_samples, run_ensemble, symmetry_delta, Axis, Error, Format, ModeState, ModelParams, Pipeline, Result, SweepSpec};

#[derive(Parser)]
#[command(name = "ptsteady", version, about = "Steady-state PT-symmetry breaking in saturable gain-loss oscillators")]
struct Cli {
    /// Master seed of all stochastic runs.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Write results (with a .meta.json sidecar) here instead of stdout.
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    #[arg(long, global = true, default_value = "csv")]
    format: Format,
    #[command(subcommand)]
    cmd: Cmd,
}

/// Ensemble size and time step.
#[derive(clap::Args, Clone)]
struct EnsembleArgs {
    #[arg(long, default_value_t = 80)]
    runs: usize,
    #[arg(long, default_value_t = 4000)]
    samples: usize,
    /// Time step in units of 1/g (default: chosen from the rates).
    #[arg(long)]
    dt: Option<f64>,
    /// Transient and sampling window, in units of 1/gamma.
    #[arg(long, default_value_t = 5.0)]
    warmup: f64,
    #[arg(long, default_value_t = 45.0)]
    window: f64,
    #[arg(long, value_parser = parse_scheme, default_value = "heun")]
    scheme: Scheme,
    /// Variance of the random initial amplitudes (default: max(Nth, 1)).
    #[arg(long)]
    ic_variance: Option<f64>,
}

impl EnsembleArgs {
    fn config(&self, seed: u64) -> IntegratorConfig {
        IntegratorConfig {
            dt: self.dt,
            warmup: self.warmup,
            window: self.window,
            samples_per_run: self.samples,
            n_runs: self.runs,
            seed,
            scheme: self.scheme,
            ic_variance: self.ic_variance,
        }
    }
}

fn parse_scheme(s: &str) -> std::result::Result<Scheme, String> {
    match s {
        "heun" => Ok(Scheme::Heun),
        "euler" | "euler_maruyama" => Ok(Scheme::EulerMaruyama),
        _ => Err(format!("unknown scheme '{s}' (heun, euler)")),
    }
}

fn parse_grid(s: &str) -> std::result::Result<GridSpec, String> {
    s.parse::<GridSpec>().map_err(|e| e.to_string())
}

/// Model parameters given inline; a `--config` file overrides them.
#[derive(clap::Args, Clone)]
struct ModelArgs {
    /// JSON run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value_t = 2.0)]
    nu: f64,
    #[arg(long = "gamma", default_value_t = 1e-3)]
    damping: f64,
    #[arg(long, default_value_t = 1.0)]
    n0: f64,
    #[arg(long = "nth-over-n0", default_value_t = 0.0)]
    nth_over_n0: f64,
}

impl ModelArgs {
    fn params(&self) -> Result<ModelParams> {
        match &self.config {
            Some(path) => read_config(path),
            None => {
                let p = ModelParams::new(0.0, self.damping)
                    .with_nu(self.nu)
                    .with_n0(self.n0)
                    .with_n_th(self.nth_over_n0 * self.n0);
                p.validate()?;
                Ok(p)
            }
        }
    }
}

#[derive(Subcommand)]
enum Cmd {
    /// Eigenvalues of the linear gain-loss generator.
    Spectrum {
        #[arg(long = "gamma-over-g", value_parser = parse_grid)]
        grid: GridSpec,
    },
    /// Fixed points and phase labels of the noiseless equations.
    Phases {
        #[arg(long = "gamma-over-g", value_parser = parse_grid)]
        grid: GridSpec,
        #[command(flatten)]
        model: ModelArgs,
    },
    /// Closed-form phase boundaries over the saturation exponent.
    Boundaries {
        #[arg(long = "nu-grid", value_parser = parse_grid)]
        grid: GridSpec,
    },
    /// Stochastic ensemble (or one noiseless trajectory) for a run configuration.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Integrate the noiseless equations with RK4 instead.
        #[arg(long)]
        deterministic: bool,
        /// Length and output interval of the noiseless run, in units of 1/g.
        #[arg(long, default_value_t = 1000.0)]
        t_end: f64,
        #[arg(long, default_value_t = 0.1)]
        record_every: f64,
        #[command(flatten)]
        ensemble: EnsembleArgs,
    },
    /// Radial fits and the symmetry measure of a sample file from `simulate`.
    Analyze {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Run configuration (default: the sidecar of the sample file).
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Symmetry measure Delta over Gamma/g.
    SweepDelta {
        #[arg(long = "gamma-over-g", value_parser = parse_grid)]
        grid: GridSpec,
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        ensemble: EnsembleArgs,
    },
    /// Kramers prediction of the noise-driven transition point over Nth/n0.
    Kramers {
        #[arg(long = "nth-over-n0", value_parser = parse_grid)]
        grid: GridSpec,
        #[arg(long, default_value_t = 2.0)]
        nu: f64,
        #[arg(long = "gamma", default_value_t = 1e-3)]
        damping: f64,
    },
    /// Effective loss-mode potential U(z).
    Potential {
        #[arg(long = "gamma-over-g")]
        gain: f64,
        #[arg(long, value_parser = parse_grid, default_value = "0.01:3:300")]
        z: GridSpec,
        #[command(flatten)]
        model: ModelArgs,
    },
    /// Run a shipped figure recipe by name, or rerun from a recipe or metadata file.
    Recipe {
        /// Recipe name, or a path to a recipe / .meta.json file.
        name: Option<String>,
        #[arg(long)]
        list: bool,
    },
}

fn read_config(path: &Path) -> Result<ModelParams> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    ModelParams::from_json_str(&text)
}

fn csv_err(e: csv::Error) -> Error {
    Error::Config(e.to_string())
}

fn num(x: f64) -> String {
    if x.is_finite() {
        format!("{:.11e}", x + 0.0)
    } else {
        format!("{x}")
    }
}

struct Ctx {
    seed: u64,
    out_dir: Option<PathBuf>,
    format: Format,
}

impl Ctx {
    /// Runs a recipe and writes its table to `<out-dir>/<file>.<ext>` or stdout.
    fn run_recipe(&self, recipe: &Recipe, file: &str) -> Result<()> {
        let table = recipe.run(None)?;
        for (row, e) in table.errors() {
            log::warn!("row {row}: {e}");
        }
        self.write_table(&table, file, &recipe.metadata(self.format))
    }

    fn write_table(&self, table: &ResultTable, file: &str, meta: &Metadata) -> Result<()> {
        match &self.out_dir {
            Some(dir) => {
                let path = dir.join(format!("{file}.{}", self.format.extension()));
                emit(table, self.format, &path, meta)?;
                eprintln!("wrote {}", path.display());
            }
            None => print!("{}", render(table, self.format)?),
        }
        Ok(())
    }

    fn sweep(&self, name: &str, sweep: SweepSpec, config: IntegratorConfig) -> Recipe {
        Recipe::new(name, Task::Sweep { sweep, config: config.with_seed(self.seed) })
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Some(n) = cli.workers {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot start {n} workers: {e}");
            return ExitCode::from(2);
        }
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_config() { 2 } else { 3 })
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let ctx = Ctx { seed: cli.seed.unwrap_or(0), out_dir: cli.out_dir, format: cli.format };
    match cli.cmd {
        Cmd::Spectrum { grid } => {
            let spec = SweepSpec { grid, ..SweepSpec::new(Axis::GammaOverG, vec![], ModelParams::new(0.0, 1e-3), vec![Pipeline::Spectrum]) };
            let mut r = ctx.sweep("spectrum", spec, IntegratorConfig::default());
            r.select = Some(
                ["Gamma_over_g", "re_lambda_plus", "im_lambda_plus", "re_lambda_minus", "im_lambda_minus", "regime"]
                    .map(String::from)
                    .to_vec(),
            );
            ctx.run_recipe(&r, "spectrum")
        }
        Cmd::Phases { grid, model } => {
            let spec = SweepSpec { grid, ..SweepSpec::new(Axis::GammaOverG, vec![], model.params()?, vec![Pipeline::Phases]) };
            let mut r = ctx.sweep("phases", spec, IntegratorConfig::default());
            r.select = Some(
                ["Gamma_over_g", "label", "r_ss2", "z_ss2", "tau", "delta_det", "omega_osc", "error"]
                    .map(String::from)
                    .to_vec(),
            );
            ctx.run_recipe(&r, "phases")
        }
        Cmd::Boundaries { grid } => {
            let spec = SweepSpec { grid, ..SweepSpec::new(Axis::Nu, vec![], ModelParams::new(0.0, 1e-3), vec![Pipeline::Boundaries]) };
            ctx.run_recipe(&ctx.sweep("boundaries", spec, IntegratorConfig::default()), "boundaries")
        }
        Cmd::SweepDelta { grid, model, ensemble } => {
            let spec = SweepSpec { grid, ..SweepSpec::new(Axis::GammaOverG, vec![], model.params()?, vec![Pipeline::Stochastic]) };
            let mut r = ctx.sweep("sweep-delta", spec, ensemble.config(ctx.seed));
            r.select = Some(["Gamma_over_g", "delta", "error"].map(String::from).to_vec());
            ctx.run_recipe(&r, "sweep_delta")
        }
        Cmd::Kramers { grid, nu, damping } => {
            let base = ModelParams::new(0.0, damping).with_nu(nu);
            let spec = SweepSpec { grid, ..SweepSpec::new(Axis::NthOverN0, vec![], base, vec![Pipeline::Kramers]) };
            ctx.run_recipe(&ctx.sweep("kramers", spec, IntegratorConfig::default()), "kramers")
        }
        Cmd::Potential { gain, z, model } => {
            let base = model.params()?.with_gain(gain);
            let r = Recipe::new("potential", Task::Potential { base, z });
            ctx.run_recipe(&r, "potential")
        }
        Cmd::Recipe { name, list } => {
            if list {
                for n in recipe_names() {
                    println!("{n}\t{}", builtin_recipe(n)?.description);
                }
                return Ok(());
            }
            let name = name.ok_or_else(|| Error::Config("recipe name required (see --list)".to_string()))?;
            let recipe = load_recipe(&name)?;
            let recipe = match cli_seed_override(cli.seed, &recipe) {
                Some(s) => recipe.with_seed(s),
                None => recipe,
            };
            let file = format!("recipe_{}", recipe.name);
            ctx.run_recipe(&recipe, &file)
        }
        Cmd::Simulate { config, out, deterministic, t_end, record_every, ensemble } => {
            let p = read_config(&config)?;
            if deterministic {
                simulate_deterministic(&p, &out, t_end, record_every)
            } else {
                simulate(&p, &ensemble.config(ctx.seed), &out, ctx.format)
            }
        }
        Cmd::Analyze { input, out, config } => analyze(&input, &out, config.as_deref()),
    }
}

fn cli_seed_override(seed: Option<u64>, r: &Recipe) -> Option<u64> {
    match r.task {
        Task::Sweep { .. } => seed,
        Task::Potential { .. } => None,
    }
}

/// A builtin name, a recipe file, or a `.meta.json` sidecar.
fn load_recipe(name: &str) -> Result<Recipe> {
    if recipe_names().contains(&name) {
        return builtin_recipe(name);
    }
    let path = Path::new(name);
    if !path.exists() {
        return builtin_recipe(name);
    }
    let text = std::fs::read_to_string(path)?;
    if let Ok(meta) = serde_json::from_str::<Metadata>(&text) {
        return Ok(meta.recipe);
    }
    Recipe::from_json_str(&text)
}

/// Sidecar of `simulate` output.
#[derive(Serialize, Deserialize)]
struct SimulateMeta {
    tool: String,
    version: String,
    seed: u64,
    params: ModelParams,
    config: Option<IntegratorConfig>,
}

fn write_sidecar(out: &Path, meta: &SimulateMeta) -> Result<()> {
    let mut s = serde_json::to_string_pretty(meta)?;
    s.push('\n');
    std::fs::write(ptsteady::sweep::sidecar_path(out), s)?;
    Ok(())
}

fn create_parent(out: &Path) -> Result<()> {
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    Ok(())
}

fn simulate(p: &ModelParams, c: &IntegratorConfig, out: &Path, format: Format) -> Result<()> {
    let e = run_ensemble(p, c)?;
    create_parent(out)?;
    match format {
        Format::Csv => {
            let mut w = csv::WriterBuilder::new()
                .terminator(csv::Terminator::Any(b'\n'))
                .from_path(out)
                .map_err(csv_err)?;
            let mut header = vec!["run", "t", "re_alpha", "im_alpha", "re_beta", "im_beta"];
            if e.cells > 1 {
                header.push("cell");
            }
            w.write_record(&header).map_err(csv_err)?;
            for i in 0..e.len() {
                for cell in 0..e.cells {
                    let (a, b) = (e.alphas[i * e.cells + cell], e.betas[i * e.cells + cell]);
                    let mut rec = vec![e.runs[i].to_string(), num(e.times[i]), num(a.re), num(a.im), num(b.re), num(b.im)];
                    if e.cells > 1 {
                        rec.push(cell.to_string());
                    }
                    w.write_record(&rec).map_err(csv_err)?;
                }
            }
            w.flush()?;
        }
        Format::Json => {
            let sym = symmetry_delta(&e.alphas, &e.betas, p)?;
            let doc = json!({
                "samples": e.len(),
                "cells": e.cells,
                "delta": round12(sym.delta),
                "gamma_bar": round12(sym.gamma_bar),
                "occ_a": round12(sym.mean_occ_gain),
                "occ_b": round12(sym.mean_occ_loss),
            });
            std::fs::write(out, serde_json::to_string_pretty(&doc)? + "\n")?;
        }
    }
    write_sidecar(
        out,
        &SimulateMeta {
            tool: ptsteady::sweep::TOOL_NAME.to_string(),
            version: ptsteady::sweep::TOOL_VERSION.to_string(),
            seed: c.seed,
            params: *p,
            config: Some(*c),
        },
    )?;
    eprintln!("wrote {} ({} samples)", out.display(), e.len());
    Ok(())
}

fn simulate_deterministic(p: &ModelParams, out: &Path, t_end: f64, record_every: f64) -> Result<()> {
    if p.is_array() {
        return Err(Error::Config("--deterministic supports the two-mode system only".to_string()));
    }
    let sq = p.n0.sqrt();
    let s0 = ModeState::new(Complex64::new(0.1 * sq, 0.0), Complex64::new(0.0, 0.05 * sq));
    let traj = run_deterministic(p, s0, t_end, record_every)?;
    create_parent(out)?;
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_path(out)
        .map_err(csv_err)?;
    w.write_record(["t", "re_alpha", "im_alpha", "re_beta", "im_beta"]).map_err(csv_err)?;
    for (t, s) in traj.t.iter().zip(&traj.states) {
        w.write_record([num(*t), num(s.alpha.re), num(s.alpha.im), num(s.beta.re), num(s.beta.im)])
            .map_err(csv_err)?;
    }
    w.flush()?;
    write_sidecar(
        out,
        &SimulateMeta {
            tool: ptsteady::sweep::TOOL_NAME.to_string(),
            version: ptsteady::sweep::TOOL_VERSION.to_string(),
            seed: 0,
            params: *p,
            config: None,
        },
    )
}

#[derive(Deserialize)]
struct SampleRow {
    re_alpha: f64,
    im_alpha: f64,
    re_beta: f64,
    im_beta: f64,
}

fn analyze(input: &Path, out: &Path, config: Option<&Path>) -> Result<()> {
    let p = match config {
        Some(c) => read_config(c)?,
        None => {
            let side = ptsteady::sweep::sidecar_path(input);
            let text = std::fs::read_to_string(&side).map_err(|_| {
                Error::Config(format!("no --config given and no sidecar {} found", side.display()))
            })?;
            let meta: SimulateMeta = serde_json::from_str(&text)?;
            meta.params
        }
    };
    let mut r = csv::Reader::from_path(input).map_err(csv_err)?;
    let (mut alphas, mut betas) = (Vec::new(), Vec::new());
    for row in r.deserialize::<SampleRow>() {
        let row = row.map_err(csv_err)?;
        alphas.push(Complex64::new(row.re_alpha, row.im_alpha));
        betas.push(Complex64::new(row.re_beta, row.im_beta));
    }
    let fa = fit_samples(&alphas)?;
    let fb = fit_samples(&betas)?;
    let sym = symmetry_delta(&alphas, &betas, &p)?;
    let doc = json!({
        "r0": round12(fa.r0),
        "z0": round12(fb.r0),
        "sigma_a": round12(fa.sigma),
        "sigma_b": round12(fb.sigma),
        "fluct_a": round12(fa.fluct),
        "fluct_b": round12(fb.fluct),
        "delta": round12(sym.delta),
        "gamma_bar": round12(sym.gamma_bar),
        "samples": alphas.len(),
        "fit_degraded": fa.degraded || fb.degraded,
    });
    create_parent(out)?;
    std::fs::write(out, serde_json::to_string_pretty(&doc)? + "\n")?;
    Ok(())
}
