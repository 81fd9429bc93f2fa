//! End-to-end runs of the `rbsde` binary on scenario files.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn rbsde(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rbsde"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn sample(name: &str) -> String {
    let p: PathBuf = [env!("CARGO_MANIFEST_DIR"), "..", "..", "scenarios", name].iter().collect();
    p.to_string_lossy().into_owned()
}

fn write(dir: &TempDir, name: &str, text: &str) -> String {
    let p = dir.path().join(name);
    fs::write(&p, text).unwrap();
    p.to_string_lossy().into_owned()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

/// Value of the first row with the given metric and blank `p`.
fn metric(csv: &str, name: &str) -> f64 {
    csv.lines()
        .skip(1)
        .map(|l| l.split(',').collect::<Vec<_>>())
        .find(|f| f[4] == name && f[3].is_empty())
        .unwrap_or_else(|| panic!("metric {name} missing in\n{csv}"))[5]
        .parse()
        .unwrap()
}

const MARTINGALE: &str = "[tree]\nT = 1.0\nN = 4\n\n[terminal]\nexpr = \"B\"\n\n[generator]\nid = \"zero\"\n";

#[test]
fn zero_driver_martingale_starts_at_zero() {
    let o = rbsde(&["solve", &sample("martingale.toml")]);
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = stdout(&o);
    assert!(csv.starts_with("scenario,command,index,p,metric,value\n"));
    assert_eq!(metric(&csv, "Y0"), 0.0);
    assert_eq!(metric(&csv, "Z0"), 1.0);
    assert_eq!(metric(&csv, "E_K_T"), 0.0);
}

#[test]
fn unknown_key_names_section_and_key() {
    let dir = TempDir::new().unwrap();
    let f = write(&dir, "s.toml", &MARTINGALE.replace("N = 4\n", "N = 4\nM = 3\n"));
    let o = rbsde(&["solve", &f]);
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    assert!(err.contains("[tree]") && err.contains('M'), "{err}");
}

#[test]
fn unknown_generator_is_an_input_error() {
    let dir = TempDir::new().unwrap();
    let f = write(&dir, "s.toml", &MARTINGALE.replace("\"zero\"", "\"no_such_driver\""));
    let o = rbsde(&["solve", &f]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("no_such_driver"));
}

#[test]
fn malformed_expression_reports_column() {
    let dir = TempDir::new().unwrap();
    let f = write(&dir, "s.toml", &MARTINGALE.replace("\"B\"", "\"B + * 2\""));
    let o = rbsde(&["solve", &f]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("[terminal] expr"), "{}", stderr(&o));
}

#[test]
fn terminal_below_barrier_is_rejected() {
    let dir = TempDir::new().unwrap();
    let f = write(&dir, "s.toml", &format!("{MARTINGALE}\n[barrier]\nexpr = \"abs(B) + 1\"\n"));
    let o = rbsde(&["solve", &f]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("[barrier]"));
}

#[test]
fn failed_certification_exits_one_with_row() {
    let dir = TempDir::new().unwrap();
    let text = MARTINGALE.replace("id = \"zero\"", "id = \"uniform_z_max\"\nparams = [0.8, 0.1, 0.1]\nhypotheses = [\"H2s\"]");
    let f = write(&dir, "s.toml", &text);
    let o = rbsde(&["certify", &f]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("H2s.pass,0"), "{}", stderr(&o));
}

#[test]
fn declared_library_hypotheses_certify() {
    let o = rbsde(&["certify", &sample("zsin.toml")]);
    assert!(o.status.success(), "{}", stderr(&o));
}

#[test]
fn penalize_requires_barrier() {
    let o = rbsde(&["penalize", &sample("martingale.toml")]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn inactive_barrier_penalization_is_exact() {
    let dir = TempDir::new().unwrap();
    let text = format!("{MARTINGALE}\n[barrier]\nexpr = \"-100\"\n\n[run]\nschedule = [1, 2, 4, 8, 16, 32, 64]\n");
    let f = write(&dir, "s.toml", &text);
    let o = rbsde(&["penalize", &f]);
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = stdout(&o);
    let gaps: Vec<f64> = csv
        .lines()
        .filter(|l| l.contains(",Y_gap,") || l.contains(",Z_gap,") || l.contains(",K_gap,"))
        .map(|l| l.rsplit(',').next().unwrap().parse().unwrap())
        .collect();
    assert_eq!(gaps.len(), 7 * 3 * 3);
    assert!(gaps.iter().all(|g| *g <= 1e-12), "{gaps:?}");
}

#[test]
fn put_penalization_converges() {
    let o = rbsde(&["penalize", &sample("put.toml")]);
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = stdout(&o);
    assert_eq!(metric(&csv, "monotone_violation"), 0.0);
    let last_gap = csv
        .lines()
        .filter(|l| l.starts_with("put,penalize,10,2,Y_gap,"))
        .map(|l| l.rsplit(',').next().unwrap().parse::<f64>().unwrap())
        .next()
        .unwrap();
    assert!(last_gap <= 1e-2);
}

#[test]
fn ordered_pair_compares_and_reversed_pair_is_rejected() {
    let (lo, hi) = (sample("call_low.toml"), sample("call_high.toml"));
    let o = rbsde(&["compare", &lo, &hi]);
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = stdout(&o);
    assert!(csv.lines().nth(1).unwrap().starts_with("call_low_vs_call_high,compare,"));
    assert_eq!(metric(&csv, "max_Y1_minus_Y2_pos"), 0.0);
    assert_eq!(metric(&csv, "max_dK2_minus_dK1_pos"), 0.0);
    let o = rbsde(&["compare", &hi, &lo]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn extremal_min_sits_below_reference() {
    let o = rbsde(&["extremal", &sample("zsin.toml")]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(metric(&stdout(&o), "max_Ymin_minus_Yref_pos"), 0.0);
}

#[test]
fn estimate_emits_requested_ids_only() {
    let o = rbsde(&["estimate", &sample("zsin.toml")]);
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = stdout(&o);
    assert!(metric(&csv, "Thm3.ratio").is_finite());
    assert!(metric(&csv, "Prop7.ratio").is_finite());
    assert!(!csv.contains("Lemma1."));
}

#[test]
fn output_is_thread_count_invariant_and_out_matches_stdout() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("r.csv");
    let put = sample("put.toml");
    let one = rbsde(&["--threads", "1", "penalize", &put]);
    let four = rbsde(&["--threads", "4", "penalize", &put]);
    assert!(one.status.success() && four.status.success());
    assert_eq!(one.stdout, four.stdout);
    let o = rbsde(&["--out", out.to_str().unwrap(), "penalize", &put]);
    assert!(o.status.success());
    assert_eq!(fs::read(Path::new(&out)).unwrap(), one.stdout);
}

#[test]
fn zero_threads_rejected() {
    let o = rbsde(&["--threads", "0", "solve", &sample("martingale.toml")]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn p_flag_overrides_norm_battery() {
    let o = rbsde(&["--p", "4", "solve", &sample("martingale.toml")]);
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = stdout(&o);
    assert!(csv.contains(",4,S_norm_Y,"));
    assert!(!csv.contains(",2,S_norm_Y,"));
}
