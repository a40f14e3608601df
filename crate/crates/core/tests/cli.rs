use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use matchalign::io::{read_chain, read_dataset, read_traces, write_chain};
use matchalign::report::{AlignRunReport, DiagnoseRunReport};
use matchalign::{Chain, LoadingsMatrix};
use serde_json::Value;

fn matchalign(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_matchalign"))
        .args(args)
        .env_remove("MATCHALIGN_THREADS")
        .env("RUST_LOG", "error")
        .output()
        .unwrap()
}

fn ok(args: &[&str]) -> Output {
    let out = matchalign(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

struct Dir(tempfile::TempDir);

impl Dir {
    fn new() -> Self {
        Dir(tempfile::tempdir().unwrap())
    }

    fn path(&self, name: &str) -> PathBuf {
        self.0.path().join(name)
    }

    fn s(&self, name: &str) -> String {
        self.path(name).to_str().unwrap().to_owned()
    }
}

fn read(p: &Path) -> Vec<u8> {
    std::fs::read(p).unwrap()
}

/// Small simulated dataset plus a short fitted chain in `dir`.
fn fitted(dir: &Dir) {
    ok(&["simulate", "--n", "200", "--p", "15", "--k", "3", "--scenario", "sparse", "--seed", "3", "--out", &dir.s("ds")]);
    ok(&["fit", "--data", &dir.s("ds.csv"), "--k", "3", "--iterations", "600", "--burn-in", "100", "--seed", "5", "--out", &dir.s("raw")]);
}

#[test]
fn simulate_is_reproducible_and_round_trips() {
    let dir = Dir::new();
    for name in ["a", "b"] {
        ok(&["simulate", "--n", "500", "--p", "50", "--k", "5", "--scenario", "sparse", "--seed", "7", "--out", &dir.s(name)]);
    }
    for suffix in [".csv", "_truth.json", "_truth.bin"] {
        assert_eq!(read(&dir.path(&format!("a{suffix}"))), read(&dir.path(&format!("b{suffix}"))));
    }
    let cfg = matchalign::factor_model::GeneratorConfig::new(500, 50, 5, matchalign::factor_model::Scenario::Sparse, 7);
    let ds = matchalign::factor_model::generate(&cfg).unwrap();
    assert_eq!(read_dataset(&dir.path("a.csv")).unwrap(), ds.data);
    let (truth, manifest) = read_chain(&dir.path("a_truth")).unwrap();
    assert_eq!(manifest.t, 1);
    assert_eq!(truth.samples()[0], ds.true_loadings);
}

#[test]
fn simulate_rejects_unidentifiable_k() {
    let dir = Dir::new();
    let out = matchalign(&["simulate", "--p", "50", "--k", "30", "--out", &dir.s("x")]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("k <= (p-1)/2"));
}

#[test]
fn fit_defaults_keep_ten_thousand_samples() {
    let dir = Dir::new();
    ok(&["simulate", "--n", "20", "--p", "3", "--k", "1", "--seed", "1", "--out", &dir.s("ds")]);
    ok(&["fit", "--data", &dir.s("ds.csv"), "--k", "1", "--out", &dir.s("raw")]);
    let manifest: Value = serde_json::from_slice(&read(&dir.path("raw.json"))).unwrap();
    assert_eq!(manifest["T"], 10_000);
}

#[test]
fn fit_rejects_burn_in_covering_all_iterations() {
    let dir = Dir::new();
    ok(&["simulate", "--n", "20", "--p", "5", "--k", "1", "--out", &dir.s("ds")]);
    let out = matchalign(&["fit", "--data", &dir.s("ds.csv"), "--k", "1", "--iterations", "11000", "--burn-in", "11000", "--out", &dir.s("raw")]);
    assert_eq!(code(&out), 2);
}

#[test]
fn fit_is_reproducible() {
    let dir = Dir::new();
    ok(&["simulate", "--n", "100", "--p", "9", "--k", "2", "--seed", "2", "--out", &dir.s("ds")]);
    for name in ["a", "b"] {
        ok(&["fit", "--data", &dir.s("ds.csv"), "--k", "2", "--iterations", "300", "--burn-in", "50", "--seed", "9", "--out", &dir.s(name)]);
    }
    assert_eq!(read(&dir.path("a.bin")), read(&dir.path("b.bin")));
    assert_eq!(read(&dir.path("a.json")), read(&dir.path("b.json")));
}

#[test]
fn align_output_does_not_depend_on_threads() {
    let dir = Dir::new();
    fitted(&dir);
    for threads in ["1", "8"] {
        ok(&["align", "--chain", &dir.s("raw"), "--threads", threads, "--omit-timing", "--out", &dir.s(&format!("al{threads}")), "--report", &dir.s(&format!("r{threads}.json"))]);
    }
    assert_eq!(read(&dir.path("al1.bin")), read(&dir.path("al8.bin")));
    assert_eq!(read(&dir.path("r1.json")), read(&dir.path("r8.json")));

    let out = Command::new(env!("CARGO_BIN_EXE_matchalign"))
        .args(["align", "--chain", &dir.s("raw"), "--omit-timing", "--out", &dir.s("alenv"), "--report", &dir.s("renv.json")])
        .env("MATCHALIGN_THREADS", "3")
        .output()
        .unwrap();
    assert!(out.status.success());
    assert_eq!(read(&dir.path("al1.bin")), read(&dir.path("alenv.bin")));
}

#[test]
fn align_report_contents() {
    let dir = Dir::new();
    fitted(&dir);
    ok(&["align", "--chain", &dir.s("raw"), "--out", &dir.s("al"), "--report", &dir.s("r.json")]);
    let report: AlignRunReport = serde_json::from_slice(&read(&dir.path("r.json"))).unwrap();
    assert_eq!((report.chain.p, report.chain.k, report.chain.t), (15, 3, 500));
    assert_eq!(report.alignment.permutations.len(), 500);
    assert_eq!(report.alignment.comparisons_per_sample, 3 * 4 + 3);
    let pivot = report.alignment.pivot.index;
    assert!((1..=500).contains(&pivot));
    assert_eq!(report.alignment.losses[pivot - 1], 0.0);
    let diagnostics = report.diagnostics.unwrap();
    assert!(diagnostics.elapsed_align_seconds.is_some());
    assert!(diagnostics.covariance_discrepancy < report.unaligned.covariance_discrepancy);

    let raw: Value = serde_json::from_slice(&read(&dir.path("r.json"))).unwrap();
    assert_eq!(raw["config"]["pivot"]["infinite_fraction"], 0.1);
    assert_eq!(raw["alignment"]["permutations"][0]["signs"].as_array().unwrap().len(), 3);
}

#[test]
fn aligning_twice_changes_nothing() {
    let dir = Dir::new();
    fitted(&dir);
    ok(&["align", "--chain", &dir.s("raw"), "--omit-timing", "--out", &dir.s("once"), "--report", &dir.s("r1.json")]);
    ok(&["align", "--chain", &dir.s("once"), "--omit-timing", "--out", &dir.s("twice"), "--report", &dir.s("r2.json")]);
    let (once, _) = read_chain(&dir.path("once")).unwrap();
    let (twice, _) = read_chain(&dir.path("twice")).unwrap();
    let worst = once
        .samples()
        .iter()
        .zip(twice.samples())
        .map(|(a, b)| a.sub(b).unwrap().max_abs())
        .fold(0.0, f64::max);
    assert!(worst <= 1e-10, "{worst}");
    let r1: AlignRunReport = serde_json::from_slice(&read(&dir.path("r1.json"))).unwrap();
    let r2: AlignRunReport = serde_json::from_slice(&read(&dir.path("r2.json"))).unwrap();
    assert!((r1.alignment.total_loss - r2.alignment.total_loss).abs() <= 1e-8);
}

#[test]
fn align_options_are_validated() {
    let dir = Dir::new();
    fitted(&dir);
    let base = ["align", "--chain", &dir.s("raw"), "--out", &dir.s("al"), "--report", &dir.s("r.json")];
    let with = |extra: &[&str]| matchalign(&[&base[..], extra].concat());
    assert_eq!(code(&with(&["--order", "sideways"])), 2);
    assert_eq!(code(&with(&["--tolerance", "0"])), 2);
    assert_eq!(code(&with(&["--infinite-fraction", "1.5"])), 2);
    for extra in [["--pivot-statistic", "sigma-max"], ["--order", "natural"]] {
        assert!(with(&extra).status.success());
    }
    let report: AlignRunReport = serde_json::from_slice(&read(&dir.path("r.json"))).unwrap();
    assert_eq!(report.alignment.comparisons_per_sample, 3 * 4);
}

#[test]
fn corrupt_chain_files_are_format_errors() {
    let dir = Dir::new();
    fitted(&dir);
    let args = ["align", "--chain", &dir.s("raw"), "--out", &dir.s("al"), "--report", &dir.s("r.json")];

    let mut bytes = read(&dir.path("raw.bin"));
    std::fs::write(dir.path("raw.bin"), &bytes[..bytes.len() - 3]).unwrap();
    let out = matchalign(&args);
    assert_eq!(code(&out), 3);
    assert!(String::from_utf8_lossy(&out.stderr).contains("byte offset"));

    bytes[16..24].copy_from_slice(&f64::NAN.to_le_bytes());
    std::fs::write(dir.path("raw.bin"), &bytes).unwrap();
    let out = matchalign(&args);
    assert_eq!(code(&out), 3);
    assert!(String::from_utf8_lossy(&out.stderr).contains("byte offset 16"));

    std::fs::write(dir.path("raw.json"), "{\"p\": 3}").unwrap();
    assert_eq!(code(&matchalign(&args)), 3);
    assert_eq!(code(&matchalign(&["align", "--chain", &dir.s("missing"), "--out", &dir.s("al"), "--report", &dir.s("r.json")])), 3);
}

#[test]
fn diagnose_sign_switching_toy() {
    let dir = Dir::new();
    let l = LoadingsMatrix::from_rows(&[[1.0, 0.5], [0.2, -1.0], [0.0, 0.3], [0.7, 0.1], [-0.4, 0.9]]).unwrap();
    let neg = LoadingsMatrix::new(l.scale(-1.0)).unwrap();
    write_chain(&dir.path("raw"), &Chain::new(vec![l.clone(), neg], None).unwrap(), None).unwrap();
    write_chain(&dir.path("al"), &Chain::new(vec![l.clone(), l.clone()], None).unwrap(), None).unwrap();
    ok(&["diagnose", "--raw", &dir.s("raw"), "--aligned", &dir.s("al"), "--out", &dir.s("d")]);
    let r: DiagnoseRunReport = serde_json::from_slice(&read(&dir.path("d.json"))).unwrap();
    assert_eq!(r.covariance_discrepancy, Some(0.0));
    let want = l.outer_gram().frobenius_norm();
    assert!((r.covariance_discrepancy_unaligned.unwrap() - want).abs() <= 1e-12 * want);
    assert_eq!(r.mean_ess_ratio_aligned, None);
}

#[test]
fn diagnose_traces_and_ess() {
    let dir = Dir::new();
    fitted(&dir);
    ok(&["align", "--chain", &dir.s("raw"), "--out", &dir.s("al"), "--report", &dir.s("r.json")]);
    ok(&["diagnose", "--raw", &dir.s("raw"), "--aligned", &dir.s("al"), "--traces", "1,1;15,3", "--out", &dir.s("d")]);
    let r: DiagnoseRunReport = serde_json::from_slice(&read(&dir.path("d.json"))).unwrap();
    assert!(r.mean_ess_ratio_aligned.unwrap() > r.mean_ess_ratio_raw.unwrap());
    assert_eq!(r.per_entry_ess_aligned.as_ref().unwrap().len(), 15);
    assert_eq!(r.trace_files.len(), 2);

    let (aligned, _) = read_chain(&dir.path("al")).unwrap();
    let traces = read_traces(&dir.path("d_aligned_traces.csv")).unwrap();
    assert_eq!(traces.entries, vec![(0, 0), (14, 2)]);
    assert_eq!(traces.series[0], aligned.entry_series(0, 0));
    assert_eq!(traces.series[1], aligned.entry_series(14, 2));

    assert_eq!(code(&matchalign(&["diagnose", "--out", &dir.s("d")])), 2);
    assert_eq!(code(&matchalign(&["diagnose", "--raw", &dir.s("raw"), "--traces", "16,1", "--out", &dir.s("d")])), 2);
}

#[test]
fn diagnose_rejects_mismatched_chains() {
    let dir = Dir::new();
    let a = LoadingsMatrix::from_rows(&[[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]]).unwrap();
    let b = LoadingsMatrix::from_rows(&[[1.0, 0.0], [0.0, 2.0], [1.0, 1.0]]).unwrap();
    write_chain(&dir.path("raw"), &Chain::new(vec![a.clone()], None).unwrap(), None).unwrap();
    write_chain(&dir.path("al"), &Chain::new(vec![b], None).unwrap(), None).unwrap();
    let out = matchalign(&["diagnose", "--raw", &dir.s("raw"), "--aligned", &dir.s("al"), "--out", &dir.s("d")]);
    assert_ne!(code(&out), 0);
    write_chain(&dir.path("al"), &Chain::new(vec![a.clone(), a], None).unwrap(), None).unwrap();
    let out = matchalign(&["diagnose", "--raw", &dir.s("raw"), "--aligned", &dir.s("al"), "--out", &dir.s("d")]);
    assert_eq!(code(&out), 3);
}

#[test]
fn oracle_check_reports() {
    let out = ok(&["oracle-check", "--k", "4", "--noise", "0.01", "--trials", "100", "--omit-timing"]);
    let r: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(r["greedy_equals_exact"].as_u64().unwrap() >= 95);
    assert_eq!(r["greedy_below_exact"], 0);
    assert_eq!(r["trials"].as_array().unwrap().len(), 100);
    assert!(r["timing_medians"].is_null());

    let out = ok(&["oracle-check", "--k", "6", "--p", "14", "--trials", "100", "--noise", "0.5"]);
    let r: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(r["brute_force_equals_exact"], 100);
    assert!(r["timing_medians"]["brute_force_seconds"].is_f64());

    let again = ok(&["oracle-check", "--k", "4", "--noise", "0.01", "--trials", "100", "--omit-timing"]);
    assert_eq!(again.stdout, ok(&["oracle-check", "--k", "4", "--noise", "0.01", "--trials", "100", "--omit-timing"]).stdout);
}

#[test]
fn oracle_check_refuses_large_brute_force() {
    let out = matchalign(&["oracle-check", "--k", "9", "--p", "20"]);
    assert_eq!(code(&out), 2);
    assert!(ok(&["oracle-check", "--k", "9", "--p", "20", "--no-brute-force", "--trials", "5"]).status.success());
}

#[test]
fn written_files_round_trip_byte_identically() {
    let dir = Dir::new();
    fitted(&dir);
    let (chain, manifest) = read_chain(&dir.path("raw")).unwrap();
    write_chain(&dir.path("copy"), &chain, manifest.seed_provenance.clone()).unwrap();
    assert_eq!(read(&dir.path("raw.bin")), read(&dir.path("copy.bin")));
    assert_eq!(read(&dir.path("raw.json")), read(&dir.path("copy.json")));

    let data = read_dataset(&dir.path("ds.csv")).unwrap();
    matchalign::io::write_dataset(&dir.path("copy.csv"), &data).unwrap();
    assert_eq!(read(&dir.path("ds.csv")), read(&dir.path("copy.csv")));

    ok(&["diagnose", "--raw", &dir.s("raw"), "--traces", "2,2", "--out", &dir.s("d")]);
    let traces = read_traces(&dir.path("d_raw_traces.csv")).unwrap();
    matchalign::io::write_traces(&dir.path("t.csv"), &traces).unwrap();
    assert_eq!(read(&dir.path("d_raw_traces.csv")), read(&dir.path("t.csv")));
}

#[test]
fn help_and_unknown_commands() {
    assert!(ok(&["--help"]).stdout.starts_with(b"Resolve"));
    assert_eq!(code(&matchalign(&["frobnicate"])), 2);
    assert_eq!(code(&matchalign(&[])), 2);
}
