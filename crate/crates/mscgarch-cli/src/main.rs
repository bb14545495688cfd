//! `mscgarch`: simulate, fit, forecast, and compare MS-CGARCH volatility
//! models from the command line.
//!
//! Every subcommand is deterministic given its inputs and `--seed`; errors
//! exit nonzero with a machine-readable JSON envelope on stderr. Set
//! `MSCGARCH_LOG=debug` (or any `env_logger` filter) for progress logs.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use mscgarch::bayes::{gelman_rubin, run_gibbs, GibbsConfig, ModelKind, PosteriorDraws, PriorSpec};
use mscgarch::data::{
    descriptive_stats, prices_to_returns, read_series_csv_path, write_forecast_csv,
    write_per_period_errors_csv, write_posterior_csv, write_simulation_csv,
};
use mscgarch::eval::compare_models_from;
use mscgarch::filter::run_filter;
use mscgarch::model::{simulate, ModelSpec};
use mscgarch::stability::analyze_stability;

#[derive(Parser)]
#[command(
    name = "mscgarch",
    version,
    about = "Markov switching component GARCH: simulation, Bayesian estimation, volatility forecasting, stability analysis, and forecast comparison"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a series from a model spec and write `simulated.csv`.
    Simulate {
        /// Model spec JSON.
        #[arg(long)]
        spec: PathBuf,
        /// Series length.
        #[arg(long = "T", default_value_t = 300)]
        t_len: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        /// Initial per-regime variance H_0.
        #[arg(long, default_value_t = 1.0)]
        h_init: f64,
        #[arg(long, default_value = "out")]
        out_dir: PathBuf,
    },
    /// Fit a model by Gibbs sampling; writes `posterior.csv`,
    /// `summary.json`, and the posterior-mean `fitted_spec.json`.
    Fit {
        #[command(flatten)]
        input: InputArgs,
        #[arg(long, default_value_t = 500)]
        iters: usize,
        /// Burn-in iterations (default: 20% of --iters).
        #[arg(long)]
        burnin: Option<usize>,
        #[arg(long, default_value_t = 33)]
        grid_size: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Independent chains (distinct RNG streams), pooled for the
        /// summary.
        #[arg(long, default_value_t = 1)]
        chains: u64,
        #[arg(long, value_enum, default_value_t = KindArg::Cgarch)]
        kind: KindArg,
        #[arg(long, default_value = "out")]
        out_dir: PathBuf,
    },
    /// One-step volatility forecasts under a fitted spec; writes
    /// `forecasts.csv`.
    Forecast {
        #[command(flatten)]
        input: InputArgs,
        /// Model spec JSON (e.g. `fitted_spec.json` from `fit`).
        #[arg(long)]
        spec: PathBuf,
        #[arg(long, default_value = "out")]
        out_dir: PathBuf,
    },
    /// Second-moment stability report for a spec (JSON on stdout).
    Stability {
        #[arg(long)]
        spec: PathBuf,
        /// Truncation tolerance for the weight tail.
        #[arg(long, default_value_t = 0.01)]
        delta: f64,
        /// Also write `stability.json` here.
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Compare forecast accuracy of two fitted specs; writes
    /// `comparison.json`, `comparison.csv`, and per-period errors.
    Evaluate {
        #[command(flatten)]
        input: InputArgs,
        #[arg(long)]
        spec_cgarch: PathBuf,
        #[arg(long)]
        spec_garch: PathBuf,
        /// Fraction of the sample held out at the end for scoring
        /// (default: score in-sample over the whole series).
        #[arg(long)]
        holdout: Option<f64>,
        #[arg(long, default_value = "out")]
        out_dir: PathBuf,
    },
}

#[derive(Args)]
struct InputArgs {
    /// Input CSV: bare values or (label, value) rows, header optional.
    #[arg(long)]
    input: PathBuf,
    /// Treat the input as prices and convert to percentage log returns.
    #[arg(long)]
    prices: bool,
    /// Subtract the sample mean before fitting/filtering.
    #[arg(long)]
    demean: bool,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum KindArg {
    Cgarch,
    Garch,
}

impl From<KindArg> for ModelKind {
    fn from(kind: KindArg) -> Self {
        match kind {
            KindArg::Cgarch => ModelKind::MsCgarch,
            KindArg::Garch => ModelKind::MsGarch,
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter("MSCGARCH_LOG")).init();
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            let envelope = json!({ "error": err.category(), "message": err.to_string() });
            eprintln!("{envelope}");
            ExitCode::FAILURE
        }
    }
}

fn run(command: Command) -> mscgarch::Result<()> {
    match command {
        Command::Simulate {
            spec,
            t_len,
            seed,
            h_init,
            out_dir,
        } => {
            let spec = load_spec(&spec)?;
            let sim = simulate(&spec, t_len, seed, h_init)?;
            fs::create_dir_all(&out_dir)?;
            let path = out_dir.join("simulated.csv");
            write_simulation_csv(fs::File::create(&path)?, &sim)?;
            let stats = descriptive_stats(&sim.y)?;
            println!("{}", serde_json::to_string_pretty(&stats)?);
            log::info!("wrote {}", path.display());
            Ok(())
        }
        Command::Fit {
            input,
            iters,
            burnin,
            grid_size,
            seed,
            chains,
            kind,
            out_dir,
        } => {
            let y = load_series(&input)?;
            let kind = ModelKind::from(kind);
            let prior = PriorSpec::default_k2();
            let mut cfg = GibbsConfig::new(iters, seed);
            cfg.grid_size = grid_size;
            cfg.kind = kind;
            if let Some(b) = burnin {
                cfg.n_burnin = b;
            }
            cfg.validate()?;
            if chains == 0 {
                return Err(mscgarch::Error::InvalidParameter(
                    "need at least 1 chain".into(),
                ));
            }
            let draws = run_chains(&y, &prior, &cfg, chains)?;
            fs::create_dir_all(&out_dir)?;

            let posterior_path = out_dir.join("posterior.csv");
            write_posterior_csv(fs::File::create(&posterior_path)?, &draws)?;

            let pooled = pool_chains(&draws);
            let mean_spec = pooled.posterior_mean_spec()?;
            let spec_path = out_dir.join("fitted_spec.json");
            fs::write(&spec_path, mean_spec.to_json_pretty())?;

            let mut summary = serde_json::to_value(pooled.summary())?;
            let diag = analyze_stability(&mean_spec, 0.01)?;
            summary["rho_at_posterior_mean"] = json!(diag.rho);
            summary["stable_at_posterior_mean"] = json!(diag.stable);
            summary["plug_in"] = json!("posterior_mean");
            summary["chains"] = json!(chains);
            summary["grid_edge_hits"] = json!(pooled.grid_edge_hits);
            if chains > 1 {
                let matrices: Vec<_> = draws.iter().map(|d| d.draw_matrix()).collect();
                let rhat = gelman_rubin(&matrices)?;
                let names = pooled.names();
                summary["r_hat"] = json!(names.iter().zip(rhat.iter()).collect::<Vec<_>>());
            }
            let summary_path = out_dir.join("summary.json");
            fs::write(&summary_path, format!("{:#}\n", summary))?;

            log::info!(
                "fit {kind}: {} retained draws, wrote {}, {}, {}",
                pooled.n_retained(),
                posterior_path.display(),
                summary_path.display(),
                spec_path.display()
            );
            Ok(())
        }
        Command::Forecast {
            input,
            spec,
            out_dir,
        } => {
            let y = load_series(&input)?;
            let spec = load_spec(&spec)?;
            let run = run_filter(&spec, &y)?;
            fs::create_dir_all(&out_dir)?;
            let path = out_dir.join("forecasts.csv");
            write_forecast_csv(fs::File::create(&path)?, &y, &run)?;
            println!(
                "{}",
                json!({ "n": y.len(), "loglik": run.loglik, "output": path.display().to_string() })
            );
            Ok(())
        }
        Command::Stability {
            spec,
            delta,
            out_dir,
        } => {
            let spec = load_spec(&spec)?;
            let report = analyze_stability(&spec, delta)?;
            let text = format!("{:#}\n", serde_json::to_value(&report)?);
            print!("{text}");
            if let Some(dir) = out_dir {
                fs::create_dir_all(&dir)?;
                fs::write(dir.join("stability.json"), text)?;
            }
            Ok(())
        }
        Command::Evaluate {
            input,
            spec_cgarch,
            spec_garch,
            holdout,
            out_dir,
        } => {
            let y = load_series(&input)?;
            let cgarch = load_spec(&spec_cgarch)?;
            let garch = load_spec(&spec_garch)?;
            let eval_start = match holdout {
                None => 0,
                Some(f) if (0.0..1.0).contains(&f) => (y.len() as f64 * (1.0 - f)).floor() as usize,
                Some(f) => {
                    return Err(mscgarch::Error::InvalidParameter(format!(
                        "holdout fraction must lie in [0,1), got {f}"
                    )))
                }
            };
            let comparison = compare_models_from(&y, &cgarch, &garch, eval_start)?;
            fs::create_dir_all(&out_dir)?;
            fs::write(
                out_dir.join("comparison.json"),
                format!("{:#}\n", comparison.to_table_json()),
            )?;
            fs::write(out_dir.join("comparison.csv"), comparison.to_csv_string())?;
            let run_cg = run_filter(&cgarch, &y)?;
            let run_g = run_filter(&garch, &y)?;
            write_per_period_errors_csv(
                fs::File::create(out_dir.join("per_period_errors.csv"))?,
                &y,
                &run_cg,
                &run_g,
            )?;
            print!("{}", comparison.to_csv_string());
            Ok(())
        }
    }
}

fn run_chains(
    y: &[f64],
    prior: &PriorSpec,
    cfg: &GibbsConfig,
    chains: u64,
) -> mscgarch::Result<Vec<PosteriorDraws>> {
    if chains == 1 {
        return Ok(vec![run_gibbs(y, prior, cfg)?]);
    }
    // Chains are independent; run them on threads with distinct streams.
    std::thread::scope(|scope| {
        let handles: Vec<_> = (0..chains)
            .map(|chain| {
                let mut chain_cfg = cfg.clone();
                chain_cfg.chain = chain;
                scope.spawn(move || run_gibbs(y, prior, &chain_cfg))
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("chain thread panicked"))
            .collect()
    })
}

/// Pools retained draws across chains for summaries; chain 0's
/// configuration is kept for provenance.
fn pool_chains(chains: &[PosteriorDraws]) -> PosteriorDraws {
    let mut pooled = chains[0].clone();
    for other in &chains[1..] {
        pooled.theta_draws.extend(other.theta_draws.iter().cloned());
        pooled.eta_draws.extend(other.eta_draws.iter().cloned());
        for (slot, hits) in pooled.grid_edge_hits.iter_mut().zip(&other.grid_edge_hits) {
            *slot += hits;
        }
    }
    pooled
}

fn load_spec(path: &Path) -> mscgarch::Result<ModelSpec> {
    let text = fs::read_to_string(path)?;
    ModelSpec::from_json(&text)
}

fn load_series(input: &InputArgs) -> mscgarch::Result<Vec<f64>> {
    let data = read_series_csv_path(&input.input)?;
    let mut y = if input.prices {
        prices_to_returns(&data.values)?
    } else {
        data.values
    };
    if input.demean {
        let mean = y.iter().sum::<f64>() / y.len() as f64;
        for v in &mut y {
            *v -= mean;
        }
    }
    Ok(y)
}
