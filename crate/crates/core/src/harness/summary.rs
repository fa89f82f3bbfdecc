//! Mean ± standard deviation tables of asymptotic errors.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::MetricsTrace;

pub const SUMMARY_SCHEMA: &str = "fedltsat-summary/1";

/// Byte counts use the compressor's nominal width: 64 bits per dense
/// entry, `⌈log2(L+1)⌉` bits per quantized entry, and `64 + ⌈log2 n⌉` bits
/// per kept rand-d coordinate. Downlink is counted once per recipient.
pub const BIT_ACCOUNTING: &str = "nominal-width/1";

/// Traces of one scenario, labelled for the table.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioTraces {
    pub scenario: String,
    pub algorithm: String,
    pub compressor: String,
    pub ef_enabled: bool,
    pub traces: Vec<MetricsTrace>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub scenario: String,
    pub algorithm: String,
    pub compressor: String,
    pub ef_enabled: bool,
    pub runs: usize,
    pub mean_asymptotic_error: f64,
    pub std_asymptotic_error: f64,
    pub mean_bytes_up: f64,
    pub mean_bytes_down: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignSummary {
    pub schema: String,
    pub bit_accounting: String,
    pub campaign: String,
    pub rows: Vec<SummaryRow>,
}

/// Sample mean and sample standard deviation (`n − 1` denominator; zero
/// for a single value).
pub fn mean_std(values: &[f64]) -> Result<(f64, f64)> {
    if values.is_empty() {
        return Err(Error::Empty("values"));
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() == 1 {
        return Ok((mean, 0.0));
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Ok((mean, var.sqrt()))
}

pub fn summarize(scenarios: &[ScenarioTraces]) -> Result<Vec<SummaryRow>> {
    if scenarios.is_empty() {
        return Err(Error::Empty("scenarios"));
    }
    scenarios
        .iter()
        .map(|s| {
            if s.traces.is_empty() {
                return Err(Error::Empty("traces"));
            }
            let errs: Vec<f64> = s.traces.iter().map(|t| t.asymptotic_error()).collect();
            let (mean, std) = mean_std(&errs)?;
            let n = s.traces.len() as f64;
            Ok(SummaryRow {
                scenario: s.scenario.clone(),
                algorithm: s.algorithm.clone(),
                compressor: s.compressor.clone(),
                ef_enabled: s.ef_enabled,
                runs: s.traces.len(),
                mean_asymptotic_error: mean,
                std_asymptotic_error: std,
                mean_bytes_up: s.traces.iter().map(|t| t.total_bytes_up() as f64).sum::<f64>() / n,
                mean_bytes_down: s.traces.iter().map(|t| t.total_bytes_down() as f64).sum::<f64>() / n,
            })
        })
        .collect()
}

/// Plain-text table for the terminal.
pub fn format_table(rows: &[SummaryRow]) -> String {
    let mut out = format!(
        "{:<28} {:<8} {:<26} {:<3} {:>4} {:>12} {:>12}\n",
        "scenario", "algo", "compressor", "ef", "runs", "mean e_K", "std e_K"
    );
    for r in rows {
        out.push_str(&format!(
            "{:<28} {:<8} {:<26} {:<3} {:>4} {:>12.5e} {:>12.5e}\n",
            r.scenario,
            r.algorithm,
            r.compressor,
            if r.ef_enabled { "on" } else { "off" },
            r.runs,
            r.mean_asymptotic_error,
            r.std_asymptotic_error
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn trace(e: f64) -> MetricsTrace {
        let mut t = MetricsTrace::new(0, 10.0, 0.0);
        t.push(e, 8, 16, 1, 0.0);
        t
    }

    fn scenario(errs: &[f64]) -> ScenarioTraces {
        ScenarioTraces {
            scenario: "s".into(),
            algorithm: "fedlt".into(),
            compressor: "identity".into(),
            ef_enabled: false,
            traces: errs.iter().map(|&e| trace(e)).collect(),
        }
    }

    #[test]
    fn single_trace_has_zero_std() {
        let r = summarize(&[scenario(&[4.0])]).unwrap();
        assert_eq!((r[0].mean_asymptotic_error, r[0].std_asymptotic_error), (4.0, 0.0));
    }

    #[test]
    fn two_traces_hand_arithmetic() {
        let r = summarize(&[scenario(&[1.0, 3.0])]).unwrap();
        assert_eq!(r[0].mean_asymptotic_error, 2.0);
        assert!((r[0].std_asymptotic_error - 2f64.sqrt()).abs() < 1e-15);
        assert_eq!(r[0].mean_bytes_up, 8.0);
    }

    #[test]
    fn empty_inputs_are_errors() {
        assert!(summarize(&[]).is_err());
        assert!(summarize(&[scenario(&[])]).is_err());
        assert!(mean_std(&[]).is_err());
    }
}
