use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

const HEADER: &str = "t,gap,grad_f_res,grad_g_res,delta,res_x,res_y,energy_e,energy_ebar,norm_z,dist_to_saddle,step";

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_saddle-flow"))
}

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn example1() -> String {
    fs::read_to_string(configs().join("example1.toml")).unwrap()
}

fn write_config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn run_config(cfg: &Path, out: &Path, extra: &[&str]) -> Output {
    let mut args = vec!["run", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    run(&args)
}

#[test]
fn first_row_is_the_initial_gap() {
    let dir = TempDir::new().unwrap();
    let o = run_config(&configs().join("example1.toml"), dir.path(), &[]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let csv = fs::read_to_string(dir.path().join("example1_full.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), HEADER);
    let first: Vec<f64> = lines.next().unwrap().split(',').map(|v| v.parse().unwrap()).collect();
    assert_eq!(first.len(), 12);
    assert_eq!(first[0], 1.0);
    assert_eq!(first[1], 461.0);
    assert!(dir.path().join("example1_no_hessian.csv").exists());
    assert!(fs::read_to_string(dir.path().join("example1.svg")).unwrap().contains("<polyline"));
}

#[test]
fn every_csv_value_parses() {
    let dir = TempDir::new().unwrap();
    let o = run_config(&configs().join("example1.toml"), dir.path(), &["--samples", "50"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let csv = fs::read_to_string(dir.path().join("example1_full.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().skip(1).collect();
    assert_eq!(rows.len(), 50);
    for row in rows {
        let vals: Vec<f64> = row.split(',').map(|v| v.parse::<f64>().unwrap()).collect();
        assert_eq!(vals.len(), 12);
        assert!(vals.iter().all(|v| v.is_finite()), "{row}");
    }
}

#[test]
fn rerun_is_byte_identical() {
    let a = TempDir::new().unwrap();
    let b = TempDir::new().unwrap();
    let cfg = configs().join("example1.toml");
    assert_eq!(code(&run_config(&cfg, a.path(), &[])), 0);
    assert_eq!(code(&run_config(&cfg, b.path(), &[])), 0);
    for name in ["example1_full.csv", "example1_no_hessian.csv", "example1.json", "example1.svg"] {
        assert_eq!(fs::read(a.path().join(name)).unwrap(), fs::read(b.path().join(name)).unwrap(), "{name}");
    }
}

#[test]
fn missing_gamma_names_the_key() {
    let dir = TempDir::new().unwrap();
    let text: String = example1().lines().filter(|l| !l.starts_with("gamma")).map(|l| format!("{l}\n")).collect();
    let cfg = write_config(dir.path(), "c.toml", &text);
    let o = run_config(&cfg, dir.path(), &[]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("schedule.gamma"), "{}", stderr(&o));
    assert!(!dir.path().join("example1_full.csv").exists());
}

#[test]
fn unknown_key_is_rejected() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "c.toml", &example1().replace("t_end = 30", "t_end = 30\nt_stop = 40"));
    let o = run_config(&cfg, dir.path(), &[]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("time.t_stop"), "{}", stderr(&o));
}

#[test]
fn validate_exit_codes() {
    let dir = TempDir::new().unwrap();
    let ok = run(&["validate", "--config", configs().join("example1.toml").to_str().unwrap()]);
    assert_eq!(code(&ok), 0);
    let report: serde_json::Value = serde_json::from_slice(&ok.stdout).unwrap();
    assert_eq!(report["all_ok"], true);

    let bad = write_config(dir.path(), "bad.toml", &example1().replace("gamma = \"2/15\"", "gamma = 0.3"));
    let o = run(&["validate", "--config", bad.to_str().unwrap()]);
    assert_eq!(code(&o), 1);
    let report: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(report["all_ok"], false);
    let msg = report["error"].as_str().unwrap();
    assert!(msg.contains("gamma") && msg.contains("0.2666"), "{msg}");

    let text = example1().replace("variants = [\"full\", \"no_hessian\"]", "variants = [\"no_hessian\"]");
    let ablation = write_config(dir.path(), "ablation.toml", &text);
    let o = run(&["validate", "--config", ablation.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stdout));
    let report: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    let r = &report["variants"][0]["report"];
    assert_eq!(r["alpha_identity"]["status"], "not_applicable");
    assert_eq!(r["trajectory_bound"]["status"], "not_applicable");
}

#[test]
fn divergence_writes_flagged_partial_output() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "c.toml", &example1().replace("samples = 400", "samples = 400\nmax_steps = 40"));
    let o = run_config(&cfg, dir.path(), &[]);
    assert_eq!(code(&o), 3);
    assert!(dir.path().join("example1_full.partial.csv").exists());
    assert!(!dir.path().join("example1_full.csv").exists());
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("example1.json")).unwrap()).unwrap();
    assert_eq!(summary["status"], "partial");
    assert_eq!(summary["variants"][0]["completed"], false);
    assert_eq!(summary["variants"][0]["csv"], "example1_full.partial.csv");
}

#[test]
fn io_errors_exit_4() {
    let dir = TempDir::new().unwrap();
    let o = run(&["run", "--config", dir.path().join("absent.toml").to_str().unwrap()]);
    assert_eq!(code(&o), 4);
    // an existing file where the output directory should be
    let blocker = dir.path().join("blocker");
    fs::write(&blocker, "").unwrap();
    let o = run_config(&configs().join("example1.toml"), &blocker, &["--samples", "20"]);
    assert_eq!(code(&o), 4, "{}", stderr(&o));
}

#[test]
fn rates_from_csv_match_the_summary() {
    let dir = TempDir::new().unwrap();
    assert_eq!(code(&run_config(&configs().join("example1.toml"), dir.path(), &[])), 0);
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("example1.json")).unwrap()).unwrap();
    let csv = dir.path().join("example1_full.csv");
    let o = run(&["rates", csv.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let rates: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(rates[0]["rate_fit"]["slope"], summary["variants"][0]["rate_fit"]["slope"]);
    assert_eq!(rates[0]["oscillation"], summary["variants"][0]["oscillation"]);
}

#[test]
fn seed_flag_changes_the_data() {
    let dir = TempDir::new().unwrap();
    let text = fs::read_to_string(configs().join("example2.toml"))
        .unwrap()
        .replace("variants = [\"full\", \"no_hessian\"]", "variants = [\"full\"]")
        .replace("t_end = 85", "t_end = 5");
    let cfg = write_config(dir.path(), "c.toml", &text);
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    assert_eq!(code(&run_config(&cfg, &a, &["--samples", "20"])), 0);
    assert_eq!(code(&run_config(&cfg, &b, &["--samples", "20", "--seed", "2"])), 0);
    let read = |d: &Path| fs::read_to_string(d.join("example2_full.csv")).unwrap();
    assert_eq!(read(&a).lines().count(), 21);
    assert_ne!(read(&a), read(&b));
}

#[test]
fn repro_ablation_figure() {
    let dir = TempDir::new().unwrap();
    let o = run(&["repro", "fig3_ablations", "--out", dir.path().to_str().unwrap(), "--samples", "60"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let fig = dir.path().join("fig3_ablations");
    for case in ["case_a", "case_b"] {
        for v in ["full", "neither"] {
            assert!(fig.join(format!("{case}_{v}.csv")).exists());
        }
        let svg = fs::read_to_string(fig.join(format!("{case}.svg"))).unwrap();
        assert_eq!(svg.matches("<polyline").count(), 2);
    }
    let summary: serde_json::Value = serde_json::from_str(&fs::read_to_string(fig.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary.as_array().unwrap().len(), 2);
}

#[test]
fn repro_sweep_has_six_curves_per_case() {
    let dir = TempDir::new().unwrap();
    let o = run(&["repro", "fig1", "--out", dir.path().to_str().unwrap(), "--samples", "40"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    for case in ["case_a", "case_b"] {
        let svg = fs::read_to_string(dir.path().join("fig1").join(format!("{case}.svg"))).unwrap();
        assert_eq!(svg.matches("<polyline").count(), 6);
    }
}

#[test]
fn unknown_figure_is_a_usage_error() {
    let o = run(&["repro", "fig4"]);
    assert_eq!(code(&o), 2);
}
