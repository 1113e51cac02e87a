//! Benchmark harness for the epiwalk optimizer.
//!
//! Exit codes: 0 on success, 2 when a run hit its query budget, 1 on any
//! error. `EPIWALK_OUT_DIR` sets the default output directory.

pub mod commands;
pub mod config;
pub mod output;

use std::path::PathBuf;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};

use commands::{
    cmd_run, cmd_sample_uniform, cmd_sweep, cmd_test_adaptive, AdaptiveArgs, SampleArgs,
    SweepParam, EXIT_ERROR, EXIT_OK,
};
use config::{NoiseArg, RunConfig};

pub const OUT_DIR_ENV: &str = "EPIWALK_OUT_DIR";

#[derive(Debug, Parser)]
#[command(
    name = "epiwalk",
    version,
    about = "Noisy zeroth-order convex optimization by epigraph random walks"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the optimizer once; writes result.json and trace.csv.
    Run {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, env = OUT_DIR_ENV, default_value = "out")]
        out: PathBuf,
    },
    /// Run the optimizer over a list of values of one parameter; writes sweep.csv.
    Sweep {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, value_enum)]
        vary: SweepParam,
        /// Comma-separated values.
        #[arg(long, value_delimiter = ',', num_args = 0..)]
        values: Vec<f64>,
        #[arg(long, default_value_t = 1)]
        repeats: usize,
        #[arg(long, env = OUT_DIR_ENV, default_value = "out")]
        out: PathBuf,
    },
    /// Repeat the adaptive membership test at one lifted point.
    TestAdaptive {
        #[arg(long, default_value = "quadratic")]
        func: String,
        /// Comma-separated coordinates of x.
        #[arg(long, value_delimiter = ',', default_value = "0.3")]
        x: Vec<f64>,
        /// Signed gap y - f(x).
        #[arg(long, allow_hyphen_values = true)]
        delta: f64,
        #[arg(long, default_value_t = 1.0)]
        sigma: f64,
        #[arg(long = "confidence", short = 'C', default_value_t = 3.0)]
        confidence: f64,
        #[arg(long, default_value_t = 1e-3)]
        band: f64,
        #[arg(long, default_value_t = 1000)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Per-trial CSV output.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Ball Walk on an analytic body (triangle2d, parabola2d, square, boxN).
    SampleUniform {
        #[arg(long, default_value = "square")]
        body: String,
        #[arg(long, visible_alias = "samples", default_value_t = 10_000)]
        count: usize,
        #[arg(long)]
        steps_per_sample: Option<usize>,
        #[arg(long)]
        step_radius: Option<f64>,
        #[arg(long, default_value_t = 3)]
        n_chains: usize,
        #[arg(long, default_value_t = 10)]
        burn_in_factor: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        sequential: bool,
        /// Sample points as CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Print the configuration with every default filled in, as TOML.
    PrintConfig {
        #[command(flatten)]
        run: RunArgs,
    },
}

#[derive(Debug, Clone, Default, Args)]
pub struct RunArgs {
    /// TOML config file; flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// quadratic, abs-sum, max-coord or shifted-quadratic.
    #[arg(long)]
    pub func: Option<String>,
    #[arg(long)]
    pub dim: Option<usize>,
    /// Noise standard deviation.
    #[arg(long, allow_hyphen_values = true)]
    pub sigma: Option<f64>,
    #[arg(long, value_enum)]
    pub noise: Option<NoiseArg>,
    #[arg(long, allow_hyphen_values = true)]
    pub shift: Option<f64>,
    /// Target accuracy, in (0, 1).
    #[arg(long, allow_hyphen_values = true)]
    pub eps: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub query_budget: Option<u64>,
    /// Run walk chains one after another.
    #[arg(long)]
    pub sequential: bool,
    /// Parameter override KEY=VALUE; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
}

impl RunArgs {
    pub fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        if let Some(v) = &self.func {
            cfg.func = v.clone();
        }
        if let Some(v) = self.dim {
            cfg.dim = v;
        }
        if let Some(v) = self.sigma {
            cfg.sigma = v;
        }
        if let Some(v) = self.noise {
            cfg.noise = v;
        }
        if let Some(v) = self.shift {
            cfg.shift = v;
        }
        if let Some(v) = self.eps {
            cfg.eps = v;
        }
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if let Some(v) = self.query_budget {
            cfg.query_budget = v;
        }
        if self.sequential {
            cfg.parallel = false;
        }
        for o in &self.overrides {
            cfg.set_override(o)?;
        }
        Ok(cfg)
    }
}

fn execute(cli: Cli) -> Result<i32> {
    match cli.command {
        Command::Run { run, out } => {
            let cfg = run.resolve()?;
            let o = cmd_run(&cfg, &out)?;
            let r = &o.result;
            println!(
                "{} n={} eps={} sigma={}: f(x_hat)-f* = {:.6e}, epochs {}, queries {}, stop {:?}",
                cfg.func,
                cfg.dim,
                cfg.eps,
                cfg.sigma,
                r.final_subopt,
                r.epochs_run,
                r.total_queries,
                r.stop_reason
            );
            println!("wrote {}", out.display());
            Ok(o.exit_code)
        }
        Command::Sweep {
            run,
            vary,
            values,
            repeats,
            out,
        } => {
            let cfg = run.resolve()?;
            let o = cmd_sweep(&cfg, vary, &values, repeats, &out)?;
            for row in &o.rows {
                match (row.total_queries, row.final_subopt) {
                    (Some(q), Some(s)) => println!(
                        "{}={} seed={}: queries {q}, f(x_hat)-f* = {s:.6e}, exit {}",
                        row.vary, row.value, row.seed, row.exit_code
                    ),
                    _ => eprintln!(
                        "{}={} seed={}: {}",
                        row.vary, row.value, row.seed, row.error
                    ),
                }
            }
            println!("wrote {}", out.join("sweep.csv").display());
            Ok(o.exit_code)
        }
        Command::TestAdaptive {
            func,
            x,
            delta,
            sigma,
            confidence,
            band,
            trials,
            seed,
            csv,
        } => {
            let report = cmd_test_adaptive(&AdaptiveArgs {
                func,
                x,
                delta,
                sigma,
                confidence,
                band,
                trials,
                seed,
                csv,
            })?;
            println!("{}", serde_json::to_string_pretty(&report)?);
            Ok(EXIT_OK)
        }
        Command::SampleUniform {
            body,
            count,
            steps_per_sample,
            step_radius,
            n_chains,
            burn_in_factor,
            seed,
            sequential,
            csv,
        } => {
            let (report, _) = cmd_sample_uniform(&SampleArgs {
                body,
                count,
                steps_per_sample,
                step_radius,
                n_chains,
                burn_in_factor,
                seed,
                sequential,
                csv,
            })?;
            println!("{}", serde_json::to_string_pretty(&report)?);
            Ok(EXIT_OK)
        }
        Command::PrintConfig { run } => {
            let cfg = run.resolve()?.with_resolved_overrides()?;
            print!("{}", cfg.to_toml_string()?);
            Ok(EXIT_OK)
        }
    }
}

/// Runs a parsed command line and returns the process exit code.
pub fn run_cli(cli: Cli) -> i32 {
    match execute(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            EXIT_ERROR
        }
    }
}
