use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn nagame(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nagame"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn config(name: &str) -> String {
    configs().join(name).to_str().unwrap().to_string()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn two_agent_run_converges_and_certifies() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = nagame(&["run", "--config", &config("two_agent.toml"), "--out", out, "--trajectory"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let cert = json(&dir.path().join("certificate.json"));
    assert_eq!(cert["mode"], "na");
    assert!(cert["max_eps"].as_f64().unwrap() <= 1e-6);
    let strategies = fs::read_to_string(dir.path().join("strategies.csv")).unwrap();
    for line in strategies.lines().skip(1) {
        let v: f64 = line.rsplit(',').next().unwrap().parse().unwrap();
        assert!((v - 1.0 / 3.0).abs() < 1e-6);
    }
    let trajectory = fs::read_to_string(dir.path().join("trajectory.csv")).unwrap();
    assert!(trajectory.starts_with("iteration,agent,component,value\n0,0,0,0.9\n"));
    let manifest = json(&dir.path().join("manifest.json"));
    assert_eq!(manifest["result"]["converged"], true);
    assert_eq!(manifest["admissible_rows"], serde_json::json!([1]));
}

#[test]
fn followers_on_a_directed_ring_cycle() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().to_str().unwrap();
    let cfg = config("followers_directed_ring.toml");
    let refused = nagame(&["run", "--config", &cfg, "--out", out]);
    assert_eq!(refused.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&refused.stderr).contains("--force"));

    let o = nagame(&["run", "--config", &cfg, "--out", out, "--force"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stdout(&o).contains("period-3 cycle"));
    let residuals = fs::read_to_string(dir.path().join("residuals.csv")).unwrap();
    assert_eq!(residuals.lines().count(), 501);
}

#[test]
fn malformed_configs_are_errors() {
    let dir = TempDir::new().unwrap();
    let bad = dir.path().join("bad.toml");
    fs::write(&bad, "[game]\nkind = \"opinion\"\nagents = 4\nunknown_key = 1\n").unwrap();
    let o = nagame(&["run", "--config", bad.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(!o.stderr.is_empty());

    fs::write(&bad, "[network]\ncsv = \"missing.csv\"\n").unwrap();
    let o = nagame(&["certify", "--config", bad.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("does not exist"));
}

#[test]
fn certify_reports_the_admissible_rows() {
    let o = nagame(&["certify", "--config", &config("opinion.toml")]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("guaranteed by row(s) [1]"));

    let o = nagame(&["certify", "--config", &config("demand_response.toml")]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    let admissible: Vec<&str> = text.lines().filter(|l| l.ends_with("=> admissible")).collect();
    assert_eq!(admissible.len(), 1);
    assert!(admissible[0].starts_with("row 4"));
}

#[test]
fn uncoupled_raw_game_satisfies_row_one() {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("c0.toml");
    fs::write(
        &cfg,
        r#"
[game]
kind = "raw"

[game.description]
q_matrix = [[2.0, 0.5], [0.5, 1.0]]
c_matrix = [[0.0, 0.0], [0.0, 0.0]]
q = [0.3, 4.0, 1.0]
c = [[1.0, -1.0]]
sets = [[{ kind = "box", lo = [-1.0, -1.0], hi = [1.0, 1.0] }]]

[network]
topology = { kind = "directed_ring" }
size = 3
"#,
    )
    .unwrap();
    let o = nagame(&["certify", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).lines().any(|l| l.starts_with("row 1") && l.ends_with("=> admissible")));
}

#[test]
fn nubar_on_the_average_and_the_swap() {
    let dir = TempDir::new().unwrap();
    let avg = dir.path().join("avg.csv");
    let o = nagame(&["netgen", "--topology", "averaging", "--size", "7", "--out", avg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let o = nagame(&["nubar", "--network", avg.to_str().unwrap(), "--eps-d", "1e-3"]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o).trim(), "1");

    let o = nagame(&["nubar", "--network", &config("swap.csv"), "--eps-d", "1e-3", "--max-nu", "200"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn generated_networks_round_trip_through_csv() {
    let dir = TempDir::new().unwrap();
    let csv = dir.path().join("sw.csv");
    let o = nagame(&[
        "netgen", "--topology", "small-world", "--size", "12", "--seed", "9", "--out",
        csv.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0));
    let game = "[game]\nkind = \"opinion\"\nagents = 12\ndelta = 0.3\n";
    let generated = dir.path().join("generated.toml");
    fs::write(
        &generated,
        format!("seed = 9\n{game}\n[network]\ntopology = {{ kind = \"small_world\", p_shortcut = 0.3 }}\n"),
    )
    .unwrap();
    let from_csv = dir.path().join("from_csv.toml");
    fs::write(&from_csv, format!("seed = 9\n{game}\n[network]\ncsv = \"sw.csv\"\n")).unwrap();
    let a = nagame(&["certify", "--config", generated.to_str().unwrap()]);
    let b = nagame(&["certify", "--config", from_csv.to_str().unwrap()]);
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(stdout(&a), stdout(&b));
}

#[test]
fn sweep_writes_one_row_per_cell_and_is_reproducible() {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("sweep.toml");
    fs::write(
        &cfg,
        r#"
[sweep]
experiment = "opinion"

[sweep.opinion]
populations = ["stubborn_only"]
sizes = [10, 20]
topologies = [{ kind = "complete_no_self" }, { kind = "directed_ring" }, { kind = "small_world", p_shortcut = 0.3 }]
seeds = 3
"#,
    )
    .unwrap();
    let run = |out: &Path| {
        let o = nagame(&[
            "sweep", "--config", cfg.to_str().unwrap(), "--seed", "4", "--jobs", "2", "--out",
            out.to_str().unwrap(),
        ]);
        assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    };
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    run(&a);
    run(&b);
    let results = fs::read_to_string(a.join("results.csv")).unwrap();
    assert_eq!(results.lines().count(), 1 + 2 * 3 * 3);
    for file in ["results.csv", "summary.csv", "manifest.json"] {
        assert_eq!(fs::read(a.join(file)).unwrap(), fs::read(b.join(file)).unwrap(), "{file}");
    }
    assert_eq!(json(&a.join("manifest.json"))["sweep"]["base_seed"], 4);
}

#[test]
fn run_outputs_are_reproducible() {
    let dir = TempDir::new().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        let o = nagame(&["run", "--config", &config("opinion.toml"), "--seed", "2", "--out", out.to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(0));
    }
    for file in ["residuals.csv", "strategies.csv", "certificate.json", "certificate_mf.json", "manifest.json"] {
        assert_eq!(fs::read(a.join(file)).unwrap(), fs::read(b.join(file)).unwrap(), "{file}");
    }
}
