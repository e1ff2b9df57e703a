use std::fs::File;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::Deserialize;

use fcp_core::combiners::{CombinerConfig, Method};
use fcp_core::dgp::Case;
use fcp_core::harness::{run_experiment, run_panel_eval, run_robustness, ExperimentConfig, Scenario};
use fcp_core::io::{read_panel, write_results, write_robustness};
use fcp_core::oracle::{case1_limit, case2_limit, AsymptoticResult};
use fcp_core::Error;

#[derive(Parser)]
#[command(name = "fcp", version, about = "Forecast combination experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a replicated simulation and write normalized risks as CSV.
    Simulate {
        /// case1..case5, breaks, screening or robustness
        #[arg(long)]
        scenario: String,
        #[arg(long)]
        reps: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        /// Comma-separated methods (sa,bg,linreg,after,mafter).
        #[arg(long, value_delimiter = ',')]
        methods: Option<Vec<String>>,
        /// Comma-separated rolling windows, `none` for full history.
        #[arg(long, value_delimiter = ',')]
        rw: Option<Vec<String>>,
        /// TOML file with experiment settings; flags override it.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Score combiners on one or more forecast panel files.
    Combine {
        #[arg(long, required = true, num_args = 1..)]
        panel: Vec<PathBuf>,
        #[arg(long, value_delimiter = ',', default_value = "sa,bg,linreg,after,mafter")]
        methods: Vec<String>,
        #[arg(long, value_delimiter = ',', default_value = "none")]
        rw: Vec<String>,
        #[arg(long, default_value_t = 0.25)]
        warmup_frac: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the asymptotic risk ratio and optimal weights.
    Oracle {
        #[arg(long)]
        case: u8,
        #[arg(long)]
        beta: f64,
        #[arg(long, default_value_t = 1.0)]
        sigma: f64,
        #[arg(long, default_value_t = 1.0)]
        sigma_x: f64,
        #[arg(long, default_value_t = 0.0)]
        rho: f64,
    },
    /// Run the screen-then-combine experiment described by a TOML file.
    Screen {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Deserialize)]
struct FileConfig {
    out: Option<PathBuf>,
    #[serde(flatten)]
    experiment: ExperimentConfig,
}

fn load_config(path: &Path) -> Result<FileConfig, Error> {
    let text = std::fs::read_to_string(path)?;
    toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

fn parse_methods(list: &[String]) -> Result<Vec<Method>, Error> {
    list.iter().map(|m| m.trim().parse()).collect()
}

fn parse_rolling(list: &[String]) -> Result<Vec<Option<usize>>, Error> {
    list.iter()
        .map(|s| match s.trim() {
            "none" | "" => Ok(None),
            v => v.parse().map(Some).map_err(|_| Error::Config(format!("bad rolling window `{v}`"))),
        })
        .collect()
}

fn env_seed() -> Result<Option<u64>, Error> {
    match std::env::var("FCP_SEED") {
        Ok(v) => v.trim().parse().map(Some).map_err(|_| Error::Config(format!("FCP_SEED is not an integer: `{v}`"))),
        Err(_) => Ok(None),
    }
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>, Error> {
    Ok(match path {
        Some(p) => Box::new(File::create(p)?),
        None => Box::new(io::stdout().lock()),
    })
}

fn print_oracle(r: &AsymptoticResult) {
    println!("ratio {}", r.ratio);
    let fmt = |w: &Option<fcp_core::WeightVector>| match w {
        Some(w) => w.as_slice().iter().map(f64::to_string).collect::<Vec<_>>().join(","),
        None => "unavailable".to_string(),
    };
    println!("optimal_weight_restricted {}", fmt(&r.optimal_weight_restricted));
    println!("optimal_weight_unrestricted {}", fmt(&r.optimal_weight_unrestricted));
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Simulate { scenario, reps, seed, methods, rw, config, out } => {
            let robustness = scenario.eq_ignore_ascii_case("robustness");
            let kind = if robustness { Scenario::Case2 } else { scenario.parse()? };
            let (mut cfg, file_out) = match &config {
                Some(p) => {
                    let f = load_config(p)?;
                    (ExperimentConfig { scenario: kind, ..f.experiment }, f.out)
                }
                None => (ExperimentConfig::for_scenario(kind), None),
            };
            if let Some(n) = reps {
                cfg.n_reps = n;
            }
            if let Some(m) = methods {
                cfg.methods = parse_methods(&m)?;
            }
            if let Some(r) = rw {
                cfg.rolling = parse_rolling(&r)?;
            }
            if let Some(s) = env_seed()?.or(seed) {
                cfg.seed = s;
            }
            let out = out.or(file_out);
            if robustness {
                let rows = run_robustness(&cfg, &[Case::Case3, Case::Case4, Case::Case5])?;
                write_robustness(&rows, cfg.seed, output(out.as_deref())?)
            } else {
                let table = run_experiment(&cfg)?;
                write_results(&table, output(out.as_deref())?)
            }
        }
        Command::Combine { panel, methods, rw, warmup_frac, out } => {
            let panels = panel.iter().map(|p| read_panel(p)).collect::<Result<Vec<_>, _>>()?;
            let table = run_panel_eval(
                &panels,
                &parse_methods(&methods)?,
                &parse_rolling(&rw)?,
                warmup_frac,
                &CombinerConfig::default(),
            )?;
            write_results(&table, output(out.as_deref())?)
        }
        Command::Oracle { case, beta, sigma, sigma_x, rho } => {
            let r = match case {
                1 => case1_limit(beta, sigma_x, sigma)?,
                2 => case2_limit(beta, sigma_x, sigma, rho)?,
                other => return Err(Error::Config(format!("oracle limits exist for cases 1 and 2, not {other}"))),
            };
            print_oracle(&r);
            Ok(())
        }
        Command::Screen { config, out } => {
            let f = load_config(&config)?;
            let mut cfg = f.experiment;
            cfg.scenario = Scenario::Screening;
            if let Some(s) = env_seed()? {
                cfg.seed = s;
            }
            let table = run_experiment(&cfg)?;
            write_results(&table, output(out.or(f.out).as_deref())?)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_data_error() { 3 } else { 2 })
        }
    }
}
