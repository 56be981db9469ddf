use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, ensure, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;

use gclt_core::config::{LoadedConfig, NoiseSection};
use gclt_core::consistency::{consistency_sweep, TestFunction};
use gclt_core::harness::{converge, invariance, noise_study};
use gclt_core::io::{load_policy, save_policy, write_rows, write_value_grid};
use gclt_core::mc::euler_compare;
use gclt_core::{
    dp_solve, g_operator::GOperator, pde_solve, simulate, Matrix, SimConfig, Strategy, SymMatrix,
};

/// Environment variable holding the worker thread count.
const THREADS_ENV: &str = "GCLT_THREADS";

#[derive(Parser)]
#[command(name = "gclt", version, about = "Worst-case central limit values under uncertain covariance")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Problem file (TOML).
    #[arg(long)]
    spec: PathBuf,
    /// Domain half-width of the dynamic-program grid.
    #[arg(long)]
    grid_r: Option<f64>,
    /// Nodes per axis of the dynamic-program grid (odd).
    #[arg(long)]
    grid_nodes: Option<usize>,
    /// Directory for JSON and CSV outputs.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Dynamic-program values against one PDE reference over a list of n.
    Converge {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',', default_value = "8,32,128,512")]
        n: Vec<usize>,
    },
    /// Compares Lambda with Lambda O for an orthogonal O.
    Invariance {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',', default_value = "8,32,128,512")]
        n: Vec<usize>,
        /// Row-major entries, rows separated by `;`.
        #[arg(long, conflicts_with = "angle")]
        matrix: Option<String>,
        /// Planar rotation angle in radians.
        #[arg(long)]
        angle: Option<f64>,
    },
    /// Dynamic-program values for several noise laws.
    NoiseStudy {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',', default_value = "8,32,128")]
        n: Vec<usize>,
        /// Laws such as `rademacher`, `gauss-hermite:7`, `atoms:-1,1`; separated by `;`.
        /// Defaults to the file's noise followed by its `[[noise_study]]` entries.
        #[arg(long, value_delimiter = ';')]
        noise: Vec<String>,
    },
    /// Evaluates G(S) and its maximizing extreme matrix.
    GEval {
        #[command(flatten)]
        common: Common,
        /// Symmetric matrix, row-major, rows separated by `;`.
        #[arg(long)]
        s: String,
    },
    /// Backward dynamic program for one n.
    SolveDp {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        n: usize,
        /// Also write every value slice as CSV.
        #[arg(long)]
        slices: bool,
    },
    /// Explicit finite-difference solve of the G-heat equation.
    SolvePde {
        #[command(flatten)]
        common: Common,
        /// Spatial step; overrides the file.
        #[arg(long)]
        h: Option<f64>,
        #[arg(long)]
        theta: Option<f64>,
        #[arg(long)]
        dt: Option<f64>,
    },
    /// Monte Carlo of the controlled walk.
    Simulate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        paths: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, value_enum, default_value = "feedback")]
        strategy: StrategyArg,
        /// Policy file for `feedback`; solved on the fly when absent.
        #[arg(long)]
        policy: Option<PathBuf>,
        /// Extreme-matrix index for `fixed`.
        #[arg(long, default_value_t = 0)]
        extreme: usize,
    },
    /// Same feedback policy with native and Gaussian increments.
    Euler {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        paths: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Consistency residuals of the scheme for a built-in test function.
    Consistency {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',', default_value = "16,64,256,1024")]
        n: Vec<usize>,
        #[arg(long, value_enum, default_value = "cos-linear-time")]
        function: FunctionArg,
    },
}

#[derive(Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
enum StrategyArg {
    Feedback,
    Fixed,
    RandomizedScan,
}

#[derive(Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
enum FunctionArg {
    Affine,
    Quadratic,
    CosLinearTime,
    CosExp,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(e) = configure_threads().and_then(|()| run(cli.command)) {
        eprintln!("error: {e:#}");
        return ExitCode::FAILURE;
    }
    ExitCode::SUCCESS
}

fn configure_threads() -> Result<()> {
    if let Ok(value) = std::env::var(THREADS_ENV) {
        let threads: usize = value
            .parse()
            .with_context(|| format!("{THREADS_ENV}={value} is not a thread count"))?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .context("building the thread pool")?;
    }
    Ok(())
}

fn load(common: &Common) -> Result<LoadedConfig> {
    let mut cfg = LoadedConfig::load(&common.spec)?;
    if let Some(r) = common.grid_r {
        cfg.resolved.grid.half_width = Some(r);
    }
    if let Some(m) = common.grid_nodes {
        cfg.resolved.grid.nodes = Some(m);
        cfg.resolved.grid.spacing = None;
    }
    Ok(cfg)
}

/// Writes `<out>/<name>.json` with the resolved configuration echoed.
fn report<T: Serialize>(common: &Common, cfg: &LoadedConfig, name: &str, args: serde_json::Value, result: &T) -> Result<()> {
    let Some(dir) = &common.out else {
        return Ok(());
    };
    let doc = json!({
        "command": name,
        "spec_file": common.spec,
        "config": cfg.resolved,
        "args": args,
        "result": result,
    });
    let path = output(dir, &format!("{name}.json"))?;
    fs::write(&path, serde_json::to_string_pretty(&doc)?)?;
    eprintln!("wrote {}", path.display());
    Ok(())
}

fn output(dir: &Path, file: &str) -> Result<PathBuf> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    Ok(dir.join(file))
}

fn csv<T: Serialize>(common: &Common, file: &str, rows: &[T]) -> Result<()> {
    if let Some(dir) = &common.out {
        let path = output(dir, file)?;
        write_rows(rows, fs::File::create(&path)?)?;
        eprintln!("wrote {}", path.display());
    }
    Ok(())
}

fn parse_matrix(text: &str) -> Result<Matrix> {
    let rows: Vec<Vec<f64>> = text
        .split(';')
        .map(|row| {
            row.split(',')
                .map(|v| v.trim().parse::<f64>().with_context(|| format!("bad matrix entry `{v}`")))
                .collect()
        })
        .collect::<Result<_>>()?;
    let d = rows.len();
    ensure!(rows.iter().all(|r| r.len() == d), "matrix `{text}` is not square");
    Ok(Matrix::from_fn(d, d, |r, c| rows[r][c]))
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Converge { common, n } => {
            let cfg = load(&common)?;
            let rep = converge(&cfg, &n)?;
            print!("{rep}");
            csv(&common, "converge.csv", &rep.rows)?;
            report(&common, &cfg, "converge", json!({ "n": n }), &rep)
        }
        Command::Invariance { common, n, matrix, angle } => {
            let cfg = load(&common)?;
            let o = match (matrix, angle) {
                (Some(m), _) => parse_matrix(&m)?,
                (None, Some(t)) => Matrix::from_row_slice(2, 2, &[t.cos(), -t.sin(), t.sin(), t.cos()]),
                (None, None) => bail!("pass --matrix or --angle"),
            };
            let rep = invariance(&cfg, &o, &n)?;
            println!("{rep}");
            csv(&common, "invariance.csv", &rep.rows)?;
            report(&common, &cfg, "invariance", json!({ "n": n, "matrix": o.transpose().as_slice() }), &rep)?;
            ensure!(rep.passed, "invariance check failed");
            Ok(())
        }
        Command::NoiseStudy { common, n, noise } => {
            let mut cfg = load(&common)?;
            let dim = cfg.spec.dim();
            let (sections, models) = if noise.is_empty() {
                let mut sections = vec![cfg.resolved.noise.clone()];
                sections.extend(cfg.resolved.noise_study.iter().cloned());
                let mut models = vec![cfg.spec.noise.clone()];
                models.extend(cfg.noise_study.iter().cloned());
                (sections, models)
            } else {
                let mut sections = Vec::new();
                let mut models = Vec::new();
                for text in &noise {
                    let mut s = NoiseSection::from_shorthand(text)?;
                    models.push(s.build(dim).with_context(|| format!("noise `{text}`"))?);
                    sections.push(s);
                }
                (sections, models)
            };
            cfg.resolved.noise_study = sections;
            let rep = noise_study(&cfg, &models, &n)?;
            println!("{rep}");
            csv(&common, "noise-study.csv", &flatten_study(&rep))?;
            report(&common, &cfg, "noise-study", json!({ "n": n }), &rep)?;
            ensure!(rep.passed, "noise spread did not shrink");
            Ok(())
        }
        Command::GEval { common, s } => {
            let cfg = load(&common)?;
            let m = parse_matrix(&s)?;
            ensure!((&m - m.transpose()).amax() <= 1e-12, "S must be symmetric");
            ensure!(m.nrows() == cfg.spec.dim(), "S has dimension {}, problem has {}", m.nrows(), cfg.spec.dim());
            let op = GOperator::new(&cfg.spec.uncertainty);
            let (value, index) = op.eval(&SymMatrix::from_matrix(&m));
            let argmax = &op.extremes()[index];
            println!("G(S) = {value}");
            println!("maximizer (extreme {index}) = {:?}", argmax.transpose().as_slice());
            report(
                &common,
                &cfg,
                "g-eval",
                json!({ "s": m.transpose().as_slice() }),
                &json!({ "value": value, "extreme_index": index, "argmax": argmax.transpose().as_slice() }),
            )
        }
        Command::SolveDp { common, n, slices } => {
            let cfg = load(&common)?;
            let grid = cfg.dp_grid(n)?;
            let sol = dp_solve(&cfg.spec, n, &grid)?;
            let s = &sol.summary;
            println!("v_{n}(0, 0) = {}", s.value_at_origin);
            println!("max |v| = {} (bound {})", s.max_abs_value, s.bound);
            for w in &s.warnings {
                eprintln!("warning: {w}");
            }
            if let Some(dir) = &common.out {
                if let Some(policy) = &sol.policy {
                    save_policy(policy, &output(dir, "policy.csv")?)?;
                }
                if slices {
                    write_value_grid(&sol.values, fs::File::create(output(dir, "values.csv")?)?)?;
                }
            }
            report(
                &common,
                &cfg,
                "solve-dp",
                json!({ "n": n, "grid": grid, "spacing": grid.spacing() }),
                s,
            )
        }
        Command::SolvePde { common, h, theta, dt } => {
            let mut cfg = load(&common)?;
            let pde = &mut cfg.resolved.pde;
            if h.is_some() {
                pde.spacing = h;
            }
            if theta.is_some() {
                pde.theta = theta;
            }
            if dt.is_some() {
                pde.dt = dt;
            }
            let config = cfg.pde_config()?;
            let sol = pde_solve(&cfg.spec, &config)?;
            let s = &sol.summary;
            println!("v(0, 0) = {}", s.value_at_origin);
            println!("steps = {}, dt = {:e}, h = {}", s.steps, s.dt, s.spacing);
            println!("max |v| = {} (bound {})", s.max_abs_value, s.bound);
            if let Some(dir) = &common.out {
                write_value_grid(&sol.values, fs::File::create(output(dir, "pde-values.csv")?)?)?;
            }
            report(&common, &cfg, "solve-pde", json!({ "grid": config.grid }), s)
        }
        Command::Simulate { common, n, paths, seed, strategy, policy, extreme } => {
            let mut cfg = load(&common)?;
            let sim_section = &mut cfg.resolved.simulation;
            if paths.is_some() {
                sim_section.paths = paths;
            }
            if seed.is_some() {
                sim_section.seed = seed;
            }
            let set = &cfg.spec.uncertainty;
            let chosen = match strategy {
                StrategyArg::Feedback => match &policy {
                    Some(path) => Strategy::Feedback(
                        load_policy(path).with_context(|| format!("reading {}", path.display()))?,
                    ),
                    None => {
                        let grid = cfg.dp_grid(n)?;
                        Strategy::Feedback(dp_solve(&cfg.spec, n, &grid)?.policy.expect("policy kept"))
                    }
                },
                StrategyArg::Fixed => {
                    let extremes = set.enumerate_extremes();
                    ensure!(extreme < extremes.len(), "extreme index {extreme} out of range 0..{}", extremes.len());
                    Strategy::FixedMatrix(extremes[extreme].clone())
                }
                StrategyArg::RandomizedScan => Strategy::RandomizedScan,
            };
            let sim = SimConfig {
                paths: cfg.paths(),
                seed: cfg.seed(),
                n,
                strategy: chosen,
            };
            let est = simulate(&cfg.spec, &sim)?;
            println!("mean = {} +- {} ({} paths)", est.mean, est.std_error, est.paths);
            report(
                &common,
                &cfg,
                "simulate",
                json!({ "n": n, "strategy": strategy, "policy": policy, "extreme": extreme }),
                &est,
            )
        }
        Command::Euler { common, n, paths, seed } => {
            let mut cfg = load(&common)?;
            if paths.is_some() {
                cfg.resolved.simulation.paths = paths;
            }
            if seed.is_some() {
                cfg.resolved.simulation.seed = seed;
            }
            let rep = euler_compare(&cfg.spec, n, cfg.paths(), cfg.seed())?;
            println!("native   {} +- {}", rep.native.mean, rep.native.std_error);
            println!("gaussian {} +- {}", rep.gaussian.mean, rep.gaussian.std_error);
            println!("difference {} (combined stderr {})", rep.difference, rep.combined_std_error);
            report(&common, &cfg, "euler", json!({ "n": n }), &rep)
        }
        Command::Consistency { common, n, function } => {
            let cfg = load(&common)?;
            let d = cfg.spec.dim();
            let phi = match function {
                FunctionArg::Affine => TestFunction::Affine { slope: vec![1.0; d], intercept: 0.5 },
                FunctionArg::Quadratic => TestFunction::Quadratic(SymMatrix::identity(d)),
                FunctionArg::CosLinearTime => TestFunction::CosLinearTime,
                FunctionArg::CosExp => TestFunction::CosExp { rate: -0.5 },
            };
            let mut points = Vec::new();
            for t in [0.0, 0.5] {
                for x in [-1.0, 0.0, 0.7] {
                    points.push((t, vec![x; d]));
                }
            }
            let table = consistency_sweep(&phi, &points, &n, &cfg.spec.uncertainty, &cfg.spec.noise)?;
            print!("{}", table.to_csv());
            if let Some(dir) = &common.out {
                fs::write(output(dir, "consistency.csv")?, table.to_csv())?;
            }
            report(&common, &cfg, "consistency", json!({ "n": n, "function": function }), &table)
        }
    }
}

#[derive(Serialize)]
struct StudyCell<'a> {
    n: usize,
    noise: &'a str,
    value: f64,
}

fn flatten_study(rep: &gclt_core::harness::NoiseStudyReport) -> Vec<StudyCell<'_>> {
    rep.rows
        .iter()
        .flat_map(|row| {
            row.values
                .iter()
                .zip(&rep.noises)
                .map(move |(v, name)| StudyCell { n: row.n, noise: name, value: *v })
        })
        .collect()
}
