use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_markov-deconv")).args(args).output().unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

const ESTIMATE: &str = r#"
domain = { lo = -2.0, hi = 2.0 }
noise = { family = "laplace", lambda = 5.0 }

[table]
pad = 1.5
"#;

#[test]
fn usage_errors_exit_one_and_help_exits_zero() {
    assert_eq!(code(&run(&[])), 1);
    assert_eq!(code(&run(&["frobnicate"])), 1);
    assert_eq!(code(&run(&["--help"])), 0);
    assert_eq!(code(&run(&["simulate", "--chain", "ar_ix", "--n", "10", "--out", "/dev/null"])), 1);
}

#[test]
fn simulate_cache_estimate_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("y.txt");
    let out = run(&["simulate", "--chain", "ar_i", "--n", "600", "--seed", "4", "--out", path(&data)]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(fs::read_to_string(&data).unwrap().lines().count(), 601);
    assert!(dir.path().join("y.txt.meta.json").exists());
    // Refuses to overwrite without --force.
    assert_eq!(code(&run(&["simulate", "--chain", "ar_i", "--n", "600", "--out", path(&data)])), 1);

    let config = dir.path().join("est.toml");
    let table = dir.path().join("table.bin");
    fs::write(&config, ESTIMATE).unwrap();
    assert_eq!(code(&run(&["cache", "--config", path(&config), "--out", path(&table)])), 0);

    let fresh = dir.path().join("fresh.tsv");
    let out = run(&["estimate", "--data", path(&data), "--config", path(&config), "--coefficients", path(&fresh)]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));

    let cached_config = dir.path().join("cached.toml");
    fs::write(&cached_config, format!("cache = {:?}\n{ESTIMATE}", path(&table))).unwrap();
    let cached = dir.path().join("cached.tsv");
    let grid = dir.path().join("grid.tsv");
    let out = run(&[
        "estimate", "--data", path(&data), "--config", path(&cached_config), "--coefficients", path(&cached), "--grid", path(&grid),
        "--grid-points", "16",
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let text = fs::read_to_string(&cached).unwrap();
    assert!(text.starts_with("level\t"));
    assert_eq!(text, fs::read_to_string(&fresh).unwrap());
    assert_eq!(fs::read_to_string(&grid).unwrap().lines().count(), 256);
}

#[test]
fn bad_config_exits_one_and_numeric_failure_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("y.txt");
    fs::write(&data, "0.1\n0.2\n5.0\n-0.3\n").unwrap();
    let bad = dir.path().join("bad.toml");
    fs::write(&bad, "domain = { lo = 1.0, hi = 0.0 }\nnoise = { family = \"laplace\", lambda = 5.0 }\n").unwrap();
    assert_eq!(code(&run(&["estimate", "--data", path(&data), "--config", path(&bad)])), 1);

    // A window too narrow for the data is a numeric failure.
    let narrow = dir.path().join("narrow.toml");
    fs::write(&narrow, ESTIMATE.replace("pad = 1.5", "pad = 0.05")).unwrap();
    assert_eq!(code(&run(&["estimate", "--data", path(&data), "--config", path(&narrow)])), 2);
}

fn bench_config(dir: &Path, pad: Option<f64>) -> String {
    let table = pad.map(|p| format!("\n[table]\npad = {p}\n")).unwrap_or_default();
    format!(
        "chains = [\"ar_i\"]\nnoises = [{{ family = \"laplace\", lambda = 5.0 }}]\nn_values = [100, 200]\nreplicates = 3\n\
         grid = 32\nmaster_seed = 2\noutput = {:?}\n{table}",
        path(&dir.join("out"))
    )
}

#[test]
fn bench_writes_outputs_and_reports_partial_failures() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("bench.toml");
    fs::write(&config, bench_config(dir.path(), None)).unwrap();
    let out = run(&["bench", "--config", path(&config)]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let report = fs::read_to_string(dir.path().join("out/mise.tsv")).unwrap();
    assert_eq!(report.lines().count(), 3);
    assert!(dir.path().join("out/manifest.json").exists());
    assert_eq!(fs::read_dir(dir.path().join("out/surfaces")).unwrap().count(), 2);
    // Existing outputs are kept unless forced.
    assert_eq!(code(&run(&["bench", "--config", path(&config)])), 1);
    assert_eq!(code(&run(&["bench", "--config", path(&config), "--force"])), 0);

    // Every replicate overflows a tiny window: the run completes but is partial.
    fs::write(&config, bench_config(dir.path(), Some(0.01))).unwrap();
    let out = run(&["bench", "--config", path(&config), "--force"]);
    assert_eq!(code(&out), 3, "{}", String::from_utf8_lossy(&out.stderr));
}
