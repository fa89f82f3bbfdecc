use std::fs;

use fedltsat::compressors::CompressorSpec;
use fedltsat::harness::io::{load_runs, load_trace, save_trace};
use fedltsat::harness::run::mean_asymptotic_error;
use fedltsat::harness::summary::mean_std;
use fedltsat::harness::{self, grid_search, run_experiment, Campaign, ExperimentConfig};

fn small() -> ExperimentConfig {
    let text = r#"
rounds = 40
monte_carlo = 3
seed = 5
[problem]
num_agents = 5
samples_per_agent = 20
dim = 4
reg = 5.0
[algorithm]
kind = "fedlt"
epochs = 10
gamma = 0.05
rho = 1.0
"#;
    ExperimentConfig::from_toml_str(text).unwrap()
}

#[test]
fn grid_table_matches_independent_runs() {
    let cfg = small();
    let gammas = [0.02, 0.05];
    let rhos = [0.5, 2.0];
    let g = grid_search(&cfg, &gammas, &rhos).unwrap();
    assert_eq!(g.table.len(), 4);
    for cell in &g.table {
        let mut c = cfg.clone();
        c.algorithm.gamma = cell.gamma;
        c.algorithm.rho = cell.rho;
        let expect = mean_asymptotic_error(&run_experiment(&c).unwrap());
        assert_eq!(cell.mean_asymptotic_error, expect);
    }
    let min = g.table.iter().map(|c| c.mean_asymptotic_error).fold(f64::INFINITY, f64::min);
    assert_eq!(g.best.mean_asymptotic_error, min);
}

#[test]
fn summary_matches_recomputation_from_persisted_traces() {
    let mut cfg = small();
    cfg.monte_carlo = 5;
    cfg.name = "five".into();
    let campaign = Campaign {
        name: "c".into(),
        scenarios: vec![cfg],
    };
    let results = harness::run_campaign(&campaign).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let rows = harness::persist_campaign(dir.path(), "c", &results).unwrap();

    let loaded = load_runs(dir.path()).unwrap();
    assert_eq!(loaded.len(), 1);
    assert_eq!(loaded[0].1, results[0].traces);
    let errs: Vec<f64> = loaded[0].1.iter().map(|t| t.asymptotic_error()).collect();
    let (mean, std) = mean_std(&errs).unwrap();
    assert_eq!(rows[0].runs, 5);
    assert_eq!(rows[0].mean_asymptotic_error, mean);
    assert_eq!(rows[0].std_asymptotic_error, std);
}

#[test]
fn persisted_outputs_are_bitwise_reproducible() {
    let mut cfg = small();
    cfg.name = "rep".into();
    cfg.participation = fedltsat::participation::ParticipationConfig::Probabilistic { p: 0.5, per_agent: None };
    cfg.uplink = CompressorSpec::rand_d(2);
    cfg.ef_enabled = true;
    let campaign = Campaign {
        name: "rep".into(),
        scenarios: vec![cfg],
    };
    let write = || {
        let dir = tempfile::tempdir().unwrap();
        harness::persist_campaign(dir.path(), "rep", &harness::run_campaign(&campaign).unwrap()).unwrap();
        let mut files: Vec<(String, Vec<u8>)> = Vec::new();
        for sub in ["", "runs"] {
            for e in fs::read_dir(dir.path().join(sub)).unwrap() {
                let p = e.unwrap().path();
                if p.is_file() {
                    files.push((p.file_name().unwrap().to_string_lossy().into(), fs::read(&p).unwrap()));
                }
            }
        }
        files.sort();
        files
    };
    let a = write();
    assert!(a.len() >= 5);
    assert_eq!(a, write());
}

#[test]
fn bytes_follow_compressor_arithmetic() {
    let base = small();
    let n = base.problem.dim as u64;
    let cases = [
        (CompressorSpec::Identity, 64 * n),
        (CompressorSpec::quantization(10, -1.0, 1.0), 4 * n),
        (CompressorSpec::quantization(1000, -10.0, 10.0), 10 * n),
        (CompressorSpec::rand_d(1), 64 + 2),
    ];
    for (spec, bits) in cases {
        let mut c = base.clone();
        c.monte_carlo = 1;
        c.rounds = 3;
        c.uplink = spec;
        c.downlink = CompressorSpec::Identity;
        let t = &run_experiment(&c).unwrap()[0];
        let per_msg = bits.div_ceil(8);
        let agents = base.problem.num_agents as u64;
        assert_eq!(&t.bytes_up[1..], &[per_msg * agents; 3], "{spec:?}");
        assert_eq!(&t.bytes_down[1..], &[(64 * n).div_ceil(8) * agents; 3]);
    }
}

#[test]
fn single_trace_file_round_trip() {
    let t = run_experiment(&small()).unwrap().remove(0);
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("t.csv");
    save_trace(&p, &t).unwrap();
    assert_eq!(load_trace(&p).unwrap(), t);
}
