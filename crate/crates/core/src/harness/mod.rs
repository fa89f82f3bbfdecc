//! Experiment driver: configuration, Monte Carlo campaigns, grid search,
//! summaries and persisted outputs.

pub mod config;
pub mod io;
pub mod run;
pub mod summary;

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

pub use config::{AlgorithmConfig, AlgorithmKind, Campaign, ExperimentConfig};
pub use run::{grid_search, run_experiment, GridCell, GridResult};
pub use summary::{summarize, ScenarioTraces, SummaryRow};

/// Scenario presets shipped with the crate.
pub const PRESETS: &[(&str, &str)] = &[
    ("table1_efcomparison", include_str!("../../presets/table1_efcomparison.toml")),
    ("table2_space", include_str!("../../presets/table2_space.toml")),
    ("fig4_trace", include_str!("../../presets/fig4_trace.toml")),
];

pub fn preset(name: &str) -> Result<&'static str> {
    PRESETS
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, t)| *t)
        .ok_or_else(|| Error::config(format!("unknown preset {name:?}")))
}

/// Runs every scenario, in order.
pub fn run_campaign(campaign: &Campaign) -> Result<Vec<ScenarioTraces>> {
    campaign
        .scenarios
        .iter()
        .map(|cfg| {
            Ok(ScenarioTraces {
                scenario: cfg.name.clone(),
                algorithm: cfg.algorithm.kind.name().into(),
                compressor: cfg.compressor_label(),
                ef_enabled: cfg.ef_enabled,
                traces: run_experiment(cfg)?,
            })
        })
        .collect()
}

/// Writes per-run CSVs, `summary.json` and `plot.csv` into `dir`.
pub fn persist_campaign(dir: &Path, campaign: &str, results: &[ScenarioTraces]) -> Result<Vec<SummaryRow>> {
    fs::create_dir_all(dir)?;
    for s in results {
        io::write_runs(dir, s)?;
    }
    let rows = summarize(results)?;
    io::write_summary(&dir.join("summary.json"), campaign, &rows)?;
    io::write_plot_csv(&dir.join("plot.csv"), results)?;
    Ok(rows)
}
