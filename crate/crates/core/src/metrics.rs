//! Per-run metrics and their CSV form.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const TRACE_SCHEMA: &str = "fedltsat-trace/1";

/// Per-round record of one simulation. Entry `k` of each series describes
/// the state after round `k`; entry 0 is the initialization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsTrace {
    pub seed: u64,
    /// `e_k = Σ_i ‖x_{i,k} − x̄‖²`.
    pub errors: Vec<f64>,
    pub bytes_up: Vec<u64>,
    pub bytes_down: Vec<u64>,
    /// `|S_k|`: agents that ran a local update in round `k`.
    pub active: Vec<usize>,
    /// Largest `‖x_{i,k}‖` seen over the run.
    pub max_iterate_norm: f64,
}

impl MetricsTrace {
    pub fn new(seed: u64, initial_error: f64, initial_norm: f64) -> Self {
        MetricsTrace {
            seed,
            errors: vec![initial_error],
            bytes_up: vec![0],
            bytes_down: vec![0],
            active: vec![0],
            max_iterate_norm: initial_norm,
        }
    }

    pub fn push(&mut self, error: f64, bytes_up: u64, bytes_down: u64, active: usize, max_norm: f64) {
        self.errors.push(error);
        self.bytes_up.push(bytes_up);
        self.bytes_down.push(bytes_down);
        self.active.push(active);
        if max_norm > self.max_iterate_norm || max_norm.is_nan() {
            self.max_iterate_norm = max_norm;
        }
    }

    /// Number of rounds `K`; the trace holds `K + 1` entries.
    pub fn rounds(&self) -> usize {
        self.errors.len().saturating_sub(1)
    }

    pub fn final_error(&self) -> f64 {
        *self.errors.last().unwrap_or(&f64::NAN)
    }

    /// Mean of `e_k` over the last 10% of rounds (at least one entry).
    pub fn asymptotic_error(&self) -> f64 {
        let tail = (self.rounds() / 10).max(1).min(self.errors.len());
        let slice = &self.errors[self.errors.len() - tail..];
        slice.iter().sum::<f64>() / tail as f64
    }

    /// Largest `e_k` over the last 10% of rounds.
    pub fn tail_max_error(&self) -> f64 {
        let tail = (self.rounds() / 10).max(1).min(self.errors.len());
        self.errors[self.errors.len() - tail..]
            .iter()
            .fold(f64::NEG_INFINITY, |a, &b| a.max(b))
    }

    pub fn diverged(&self) -> bool {
        self.errors.iter().any(|e| !e.is_finite())
    }

    /// Per-round contraction of `√e_k` fitted by least squares on the
    /// transient, i.e. while `e_k` is more than ten times its tail mean.
    pub fn contraction_factor(&self) -> Option<f64> {
        let floor = 10.0 * self.asymptotic_error();
        let pts: Vec<(f64, f64)> = self
            .errors
            .iter()
            .enumerate()
            .take_while(|(_, &e)| e > floor && e.is_finite() && e > 0.0)
            .map(|(k, &e)| (k as f64, e.ln()))
            .collect();
        if pts.len() < 3 {
            return None;
        }
        let n = pts.len() as f64;
        let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
        let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
        Some((0.5 * sxy / sxx).exp())
    }

    pub fn total_bytes_up(&self) -> u64 {
        self.bytes_up.iter().sum()
    }

    pub fn total_bytes_down(&self) -> u64 {
        self.bytes_down.iter().sum()
    }

    /// Writes `# key=value` metadata lines followed by
    /// `round,e_k,bytes_up,bytes_down,active` rows.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "# schema={TRACE_SCHEMA}")?;
        writeln!(out, "# seed={}", self.seed)?;
        writeln!(out, "# max_iterate_norm={}", self.max_iterate_norm)?;
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["round", "e_k", "bytes_up", "bytes_down", "active"])?;
        for k in 0..self.errors.len() {
            w.write_record([
                k.to_string(),
                self.errors[k].to_string(),
                self.bytes_up[k].to_string(),
                self.bytes_down[k].to_string(),
                self.active[k].to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: BufRead>(mut input: R) -> Result<Self> {
        let mut seed = None;
        let mut max_norm = None;
        let mut body = String::new();
        let mut line = String::new();
        loop {
            line.clear();
            if input.read_line(&mut line)? == 0 {
                break;
            }
            if let Some(meta) = line.trim_end().strip_prefix("# ") {
                let (key, value) = meta
                    .split_once('=')
                    .ok_or_else(|| Error::Parse(format!("bad metadata line {meta:?}")))?;
                match key {
                    "schema" if value != TRACE_SCHEMA => {
                        return Err(Error::Parse(format!("unsupported trace schema {value}")))
                    }
                    "seed" => seed = Some(parse(value)?),
                    "max_iterate_norm" => max_norm = Some(parse(value)?),
                    _ => {}
                }
            } else {
                body.push_str(&line);
            }
        }
        let mut reader = csv::Reader::from_reader(body.as_bytes());
        let mut trace = MetricsTrace {
            seed: seed.ok_or_else(|| Error::Parse("trace is missing seed".into()))?,
            errors: Vec::new(),
            bytes_up: Vec::new(),
            bytes_down: Vec::new(),
            active: Vec::new(),
            max_iterate_norm: max_norm
                .ok_or_else(|| Error::Parse("trace is missing max_iterate_norm".into()))?,
        };
        for (k, rec) in reader.records().enumerate() {
            let rec = rec?;
            if rec.len() != 5 {
                return Err(Error::Parse(format!("row {k}: expected 5 columns, got {}", rec.len())));
            }
            if parse::<usize>(&rec[0])? != k {
                return Err(Error::Parse(format!("row {k}: rounds must be consecutive")));
            }
            trace.errors.push(parse(&rec[1])?);
            trace.bytes_up.push(parse(&rec[2])?);
            trace.bytes_down.push(parse(&rec[3])?);
            trace.active.push(parse(&rec[4])?);
        }
        if trace.errors.is_empty() {
            return Err(Error::Parse("trace has no rows".into()));
        }
        Ok(trace)
    }
}

fn parse<T: std::str::FromStr>(s: &str) -> Result<T> {
    s.trim()
        .parse()
        .map_err(|_| Error::Parse(format!("cannot parse {s:?}")))
}
