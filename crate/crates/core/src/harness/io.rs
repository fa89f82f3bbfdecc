//! Persisted outputs: per-run trace CSVs, the campaign JSON summary and a
//! plot-ready error-vs-round CSV.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::harness::summary::{CampaignSummary, ScenarioTraces, SummaryRow, BIT_ACCOUNTING, SUMMARY_SCHEMA};
use crate::metrics::MetricsTrace;

/// Overrides the default output directory `out`.
pub const OUT_DIR_ENV: &str = "FEDLTSAT_OUT_DIR";

pub fn default_out_dir() -> PathBuf {
    std::env::var_os(OUT_DIR_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("out"))
}

pub fn trace_file_name(scenario: &str, seed: u64) -> String {
    format!("{scenario}__seed{seed}.csv")
}

pub fn save_trace(path: &Path, trace: &MetricsTrace) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    trace.write_csv(&mut w)?;
    w.flush()?;
    Ok(())
}

pub fn load_trace(path: &Path) -> Result<MetricsTrace> {
    MetricsTrace::read_csv(BufReader::new(File::open(path)?))
}

/// Writes one CSV per run into `dir/runs/`.
pub fn write_runs(dir: &Path, scenario: &ScenarioTraces) -> Result<Vec<PathBuf>> {
    let runs = dir.join("runs");
    fs::create_dir_all(&runs)?;
    scenario
        .traces
        .iter()
        .map(|t| {
            let p = runs.join(trace_file_name(&scenario.scenario, t.seed));
            save_trace(&p, t)?;
            Ok(p)
        })
        .collect()
}

/// Loads `dir/runs/*.csv`, grouped by scenario name and sorted by seed.
pub fn load_runs(dir: &Path) -> Result<Vec<(String, Vec<MetricsTrace>)>> {
    let runs = dir.join("runs");
    let mut paths: Vec<PathBuf> = fs::read_dir(&runs)?
        .map(|e| e.map(|e| e.path()))
        .collect::<std::io::Result<_>>()?;
    paths.retain(|p| p.extension().is_some_and(|e| e == "csv"));
    paths.sort();
    let mut groups: std::collections::BTreeMap<String, Vec<MetricsTrace>> = Default::default();
    for p in paths {
        let stem = p.file_stem().and_then(|s| s.to_str()).unwrap_or_default();
        let scenario = stem
            .rsplit_once("__seed")
            .map(|(s, _)| s.to_string())
            .ok_or_else(|| Error::Parse(format!("unexpected run file name {}", p.display())))?;
        groups.entry(scenario).or_default().push(load_trace(&p)?);
    }
    let mut out: Vec<_> = groups.into_iter().collect();
    for (_, ts) in &mut out {
        ts.sort_by_key(|t| t.seed);
    }
    Ok(out)
}

pub fn write_summary(path: &Path, campaign: &str, rows: &[SummaryRow]) -> Result<()> {
    let summary = CampaignSummary {
        schema: SUMMARY_SCHEMA.into(),
        bit_accounting: BIT_ACCOUNTING.into(),
        campaign: campaign.into(),
        rows: rows.to_vec(),
    };
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, &summary)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

pub fn read_summary(path: &Path) -> Result<CampaignSummary> {
    Ok(serde_json::from_reader(BufReader::new(File::open(path)?))?)
}

/// `round` followed by the Monte Carlo mean of `e_k` for each scenario.
/// Scenarios with different round counts are padded with empty cells.
pub fn write_plot_csv(path: &Path, scenarios: &[ScenarioTraces]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["round".to_string()];
    header.extend(scenarios.iter().map(|s| s.scenario.clone()));
    w.write_record(&header)?;
    let len = scenarios
        .iter()
        .flat_map(|s| s.traces.iter().map(|t| t.errors.len()))
        .max()
        .unwrap_or(0);
    for k in 0..len {
        let mut row = vec![k.to_string()];
        for s in scenarios {
            let vals: Vec<f64> = s.traces.iter().filter_map(|t| t.errors.get(k).copied()).collect();
            if vals.is_empty() {
                row.push(String::new());
            } else {
                row.push(format!("{:e}", vals.iter().sum::<f64>() / vals.len() as f64));
            }
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn runs_round_trip_through_directory() {
        let dir = tempfile::tempdir().unwrap();
        let mut t = MetricsTrace::new(5, 1.5, 0.25);
        t.push(0.5, 100, 200, 3, 0.3);
        let s = ScenarioTraces {
            scenario: "alpha".into(),
            algorithm: "fedlt".into(),
            compressor: "identity".into(),
            ef_enabled: true,
            traces: vec![t.clone()],
        };
        write_runs(dir.path(), &s).unwrap();
        let loaded = load_runs(dir.path()).unwrap();
        assert_eq!(loaded, vec![("alpha".to_string(), vec![t])]);
    }

    #[test]
    fn plot_csv_has_one_column_per_scenario() {
        let dir = tempfile::tempdir().unwrap();
        let mut t = MetricsTrace::new(0, 2.0, 0.0);
        t.push(1.0, 0, 0, 1, 0.0);
        let s = |name: &str| ScenarioTraces {
            scenario: name.into(),
            algorithm: "fedlt".into(),
            compressor: "identity".into(),
            ef_enabled: false,
            traces: vec![t.clone()],
        };
        let p = dir.path().join("plot.csv");
        write_plot_csv(&p, &[s("a"), s("b")]).unwrap();
        let text = fs::read_to_string(p).unwrap();
        assert_eq!(text, "round,a,b\n0,2e0,2e0\n1,1e0,1e0\n");
    }
}
