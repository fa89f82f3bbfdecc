use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use fedltsat::harness::config::parse_override;
use fedltsat::harness::summary::format_table;
use fedltsat::harness::{self, io, Campaign, ScenarioTraces};
use fedltsat::orbit::compute_windows;
use fedltsat::participation::ParticipationConfig;
use fedltsat::{Error, Result};

#[derive(Parser)]
#[command(name = "fedltsat", version, about = "Federated local training with compression over satellite constellations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Source {
    /// Experiment or campaign TOML file.
    #[arg(long, conflicts_with = "preset")]
    config: Option<PathBuf>,
    /// Built-in preset: table1_efcomparison, table2_space or fig4_trace.
    #[arg(long)]
    preset: Option<String>,
    /// Dotted-key override applied to every scenario, e.g. `uplink.levels=10`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Restrict to these scenarios.
    #[arg(long = "scenario")]
    scenarios: Vec<String>,
}

impl Source {
    fn load(&self) -> Result<Campaign> {
        let text = match (&self.config, &self.preset) {
            (Some(p), _) => std::fs::read_to_string(p)?,
            (None, Some(name)) => harness::preset(name)?.to_string(),
            (None, None) => return Err(Error::config("pass --config <file> or --preset <name>")),
        };
        let overrides = self.set.iter().map(|s| parse_override(s)).collect::<Result<Vec<_>>>()?;
        let mut c = Campaign::from_toml_str(&text, &overrides)?;
        if !self.scenarios.is_empty() {
            for name in &self.scenarios {
                c.scenario(name)?;
            }
            c.scenarios.retain(|s| self.scenarios.contains(&s.name));
        }
        Ok(c)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run Monte Carlo campaigns and persist traces and summaries.
    Run {
        #[command(flatten)]
        source: Source,
        /// Output directory (default: $FEDLTSAT_OUT_DIR or ./out).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Grid search over the step size and the second hyperparameter.
    Grid {
        #[command(flatten)]
        source: Source,
        #[arg(long, value_delimiter = ',', required = true)]
        gammas: Vec<f64>,
        /// Fed-LT `rho`, FedProx `mu`, LED `beta` or 5GCS server step.
        #[arg(long, value_delimiter = ',', required = true)]
        rhos: Vec<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Export the ground-station visibility windows as CSV.
    Windows {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 86_400.0)]
        horizon_s: f64,
        #[arg(long, default_value_t = 10.0)]
        dt_s: f64,
        /// Output file (default: <out dir>/windows.csv).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Recompute the summary table from persisted run CSVs.
    Summarize {
        /// Directory holding `runs/` (default: $FEDLTSAT_OUT_DIR or ./out).
        #[arg(long)]
        dir: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run { source, out } => {
            let campaign = source.load()?;
            let dir = out.unwrap_or_else(io::default_out_dir).join(&campaign.name);
            let mut results = Vec::new();
            for cfg in &campaign.scenarios {
                let timed = harness::run::run_experiment_timed(cfg)?;
                let secs: f64 = timed.iter().map(|(_, d)| d.as_secs_f64()).sum();
                eprintln!("{}: {} runs, {:.1} s total", cfg.name, timed.len(), secs);
                results.push(ScenarioTraces {
                    scenario: cfg.name.clone(),
                    algorithm: cfg.algorithm.kind.name().into(),
                    compressor: cfg.compressor_label(),
                    ef_enabled: cfg.ef_enabled,
                    traces: timed.into_iter().map(|(t, _)| t).collect(),
                });
            }
            let rows = harness::persist_campaign(&dir, &campaign.name, &results)?;
            print!("{}", format_table(&rows));
            eprintln!("wrote {}", dir.display());
        }
        Command::Grid { source, gammas, rhos, out } => {
            let campaign = source.load()?;
            let dir = out.unwrap_or_else(io::default_out_dir).join(&campaign.name);
            std::fs::create_dir_all(&dir)?;
            for cfg in &campaign.scenarios {
                let g = harness::grid_search(cfg, &gammas, &rhos)?;
                println!("{}", cfg.name);
                for c in &g.table {
                    println!("  gamma={:<10} second={:<10} e_K={:.5e}", c.gamma, c.rho, c.mean_asymptotic_error);
                }
                println!("  best gamma={} second={} e_K={:.5e}", g.best.gamma, g.best.rho, g.best.mean_asymptotic_error);
                let f = std::fs::File::create(dir.join(format!("grid_{}.json", cfg.name)))?;
                serde_json::to_writer_pretty(f, &g)?;
            }
        }
        Command::Windows { config, horizon_s, dt_s, out } => {
            let part = match config {
                Some(p) => {
                    let c = Campaign::from_toml_str(&std::fs::read_to_string(p)?, &[])?;
                    c.scenarios[0].participation.clone()
                }
                None => ParticipationConfig::scheduled_default(),
            };
            let ParticipationConfig::Scheduled {
                constellation,
                ground_station,
                ..
            } = part
            else {
                return Err(Error::config("windows needs a scheduled participation config"));
            };
            let windows = compute_windows(&constellation, &ground_station, horizon_s, dt_s)?;
            let path = match out {
                Some(p) => p,
                None => {
                    let d = io::default_out_dir();
                    std::fs::create_dir_all(&d)?;
                    d.join("windows.csv")
                }
            };
            let mut w = csv::Writer::from_path(&path)?;
            w.write_record(["sat_id", "start_s", "end_s"])?;
            for win in &windows {
                w.write_record([win.sat_id.to_string(), win.start_s.to_string(), win.end_s.to_string()])?;
            }
            w.flush()?;
            eprintln!("{} windows written to {}", windows.len(), path.display());
        }
        Command::Summarize { dir } => {
            let dir = dir.unwrap_or_else(io::default_out_dir);
            let labels = io::read_summary(&dir.join("summary.json")).ok();
            let groups = io::load_runs(&dir)?;
            let scenarios: Vec<ScenarioTraces> = groups
                .into_iter()
                .map(|(name, traces)| {
                    let row = labels
                        .as_ref()
                        .and_then(|s| s.rows.iter().find(|r| r.scenario == name).cloned());
                    ScenarioTraces {
                        algorithm: row.as_ref().map_or("?".into(), |r| r.algorithm.clone()),
                        compressor: row.as_ref().map_or("?".into(), |r| r.compressor.clone()),
                        ef_enabled: row.as_ref().is_some_and(|r| r.ef_enabled),
                        scenario: name,
                        traces,
                    }
                })
                .collect();
            let rows = harness::summarize(&scenarios)?;
            print!("{}", format_table(&rows));
        }
    }
    Ok(())
}
