use std::path::{Path, PathBuf};
use std::process::Command;

use condexp::cli::{self, SIMULATE_QUANTITIES};
use condexp::scenario::Scenario;
use condexp::verify::CHECK_NAMES;

fn scenario(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("scenarios")
        .join(format!("{name}.toml"))
}

fn scratch(name: &str) -> PathBuf {
    let dir = Path::new(env!("CARGO_TARGET_TMPDIR")).join("cli");
    std::fs::create_dir_all(&dir).unwrap();
    dir.join(name)
}

fn run(args: &[&str]) -> (i32, String, String) {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let mut full = vec!["condexp"];
    full.extend_from_slice(args);
    let code = cli::run(full, &mut out, &mut err);
    (
        code,
        String::from_utf8(out).unwrap(),
        String::from_utf8(err).unwrap(),
    )
}

fn run_scenario(cmd: &str, name: &str, extra: &[&str]) -> (i32, String, String) {
    let path = scenario(name);
    let mut args = vec![cmd, "--config", path.to_str().unwrap()];
    args.extend_from_slice(extra);
    run(&args)
}

fn field(line: &str, k: usize) -> f64 {
    line.split_whitespace().nth(k).unwrap().parse().unwrap()
}

fn value(out: &str, key: &str) -> f64 {
    let line = out
        .lines()
        .find(|l| l.starts_with(&format!("{key} ")))
        .unwrap();
    field(line, 1)
}

#[test]
fn verify_list_prints_names_without_config() {
    let (code, out, _) = run(&["verify", "--list"]);
    assert_eq!(code, 0);
    let names: Vec<&str> = out.lines().collect();
    assert_eq!(names, CHECK_NAMES);
}

#[test]
fn constant_scenario_verifies_with_negligible_residuals() {
    let (code, out, _) = run_scenario("verify", "constant", &[]);
    assert_eq!(code, 0, "{out}");
    let lines: Vec<&str> = out.lines().collect();
    assert_eq!(lines.len(), CHECK_NAMES.len());
    for (line, name) in lines.iter().zip(CHECK_NAMES) {
        assert!(line.starts_with(&format!("{name} ")), "{line}");
        let status = line.split_whitespace().nth(1).unwrap();
        assert!(status == "pass" || status == "info", "{line}");
        if *name != "picard_contraction" {
            assert!(field(line, 2) < 1e-12, "{line}");
        }
    }
}

#[test]
fn coarse_step_fails_intertwining() {
    let (code, out, _) = run_scenario("verify", "coarse_step", &[]);
    assert_eq!(code, cli::EXIT_VERIFY);
    let line = out
        .lines()
        .find(|l| l.starts_with("intertwining "))
        .unwrap();
    assert!(line.contains(" fail "), "{line}");
}

#[test]
fn three_block_verifies_except_informational_gap() {
    let (code, out, _) = run_scenario("verify", "m6_three_block", &[]);
    assert_eq!(code, 0, "{out}");
    let gap = out
        .lines()
        .find(|l| l.starts_with("omega_vs_g_global "))
        .unwrap();
    assert!(gap.contains(" info "));
    assert!(field(gap, 2) > 1e-3, "{gap}");
}

#[test]
fn verify_is_deterministic() {
    let (_, a, _) = run_scenario("verify", "m2_rotation", &[]);
    let (_, b, _) = run_scenario("verify", "m2_rotation", &[]);
    assert_eq!(a, b);
}

#[test]
fn missing_seed_exits_2_naming_the_field() {
    let text = std::fs::read_to_string(scenario("m2_rotation")).unwrap();
    let path = scratch("no_seed.toml");
    std::fs::write(&path, text.replace("seed = 2", "")).unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_condexp"))
        .args(["simulate", "--config", path.to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("seed"));
    // an explicit override supplies it
    let (code, _, _) = run(&[
        "estimate-constants",
        "--config",
        path.to_str().unwrap(),
        "--seed",
        "9",
    ]);
    assert_eq!(code, 0);
}

#[test]
fn malformed_and_missing_inputs() {
    let bad = scratch("bad.toml");
    std::fs::write(&bad, "seed = 1\n[algebra]\ndimension = 3\nranks = [1, 1]\n").unwrap();
    assert_eq!(
        run(&["verify", "--config", bad.to_str().unwrap()]).0,
        cli::EXIT_CONFIG
    );
    assert_eq!(run(&["verify"]).0, cli::EXIT_CONFIG);
    assert_eq!(run(&["frobnicate"]).0, cli::EXIT_CONFIG);
    let missing = scratch("does_not_exist.toml");
    assert_eq!(
        run(&["verify", "--config", missing.to_str().unwrap()]).0,
        cli::EXIT_IO
    );
    let unwritable = scratch("no_such_dir").join("deeper").join("out.csv");
    let (code, _, err) = run_scenario(
        "simulate",
        "constant",
        &["--output", unwritable.to_str().unwrap()],
    );
    assert_eq!(code, cli::EXIT_IO, "{err}");
}

#[test]
fn solver_failure_exits_3() {
    let text = std::fs::read_to_string(scenario("m2_rotation")).unwrap();
    let path = scratch("starved.toml");
    std::fs::write(
        &path,
        format!("{text}\n[solver.picard]\nmax_iterations = 1\n"),
    )
    .unwrap();
    let (code, _, err) = run(&["compare-propagators", "--config", path.to_str().unwrap()]);
    assert_eq!(code, cli::EXIT_SOLVER, "{err}");
}

#[test]
fn simulate_writes_stable_csv() {
    let a = scratch("m2_a.csv");
    let b = scratch("m2_b.csv");
    assert_eq!(
        run_scenario(
            "simulate",
            "m2_rotation",
            &["--output", a.to_str().unwrap()]
        )
        .0,
        0
    );
    assert_eq!(
        run_scenario(
            "simulate",
            "m2_rotation",
            &["--output", b.to_str().unwrap()]
        )
        .0,
        0
    );
    let text = std::fs::read_to_string(&a).unwrap();
    assert_eq!(text, std::fs::read_to_string(&b).unwrap());
    assert!(!text.contains('\r'));
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "t,quantity,value");
    assert_eq!(lines.len() - 1, 1001 * SIMULATE_QUANTITIES.len());
    for line in &lines[1..] {
        let parts: Vec<&str> = line.split(',').collect();
        assert_eq!(parts.len(), 3);
        let mantissa = parts[2].split('e').next().unwrap().trim_start_matches('-');
        assert_eq!(mantissa.len(), 18, "{line}");
        if parts[1].ends_with("_residual") {
            assert!(parts[2].parse::<f64>().unwrap() < 1e-7, "{line}");
        }
    }
    let (_, other, _) = run_scenario("simulate", "m2_rotation", &["--seed", "99"]);
    assert_ne!(other, text);
}

#[test]
fn constant_simulation_has_zero_residuals() {
    let (code, out, _) = run_scenario("simulate", "constant", &[]);
    assert_eq!(code, 0);
    for line in out.lines().skip(1) {
        let parts: Vec<&str> = line.split(',').collect();
        if parts[1].ends_with("_residual") || parts[1] == "d_norm" {
            assert!(parts[2].parse::<f64>().unwrap() <= 1e-12, "{line}");
        }
    }
}

#[test]
fn dump_config_round_trips() {
    let (code, out, _) = run_scenario("verify", "m3_three_projection", &["--dump-config"]);
    assert_eq!(code, 0);
    let original =
        Scenario::from_toml_str(&std::fs::read_to_string(scenario("m3_three_projection")).unwrap())
            .unwrap();
    assert_eq!(Scenario::from_toml_str(&out).unwrap(), original);
    assert!(out.contains("[thresholds]") && out.contains("constant_grid"));
    let (_, seeded, _) = run_scenario(
        "simulate",
        "m3_three_projection",
        &["--dump-config", "--seed", "17"],
    );
    assert_eq!(Scenario::from_toml_str(&seeded).unwrap().seed, 17);
}

#[test]
fn estimate_constants_reports() {
    let (code, out, _) = run_scenario("estimate-constants", "constant", &[]);
    assert_eq!(code, 0);
    for key in [
        "c_j_empirical",
        "c_j_bound",
        "d_j",
        "d_square_summable",
        "k_j",
    ] {
        assert_eq!(value(&out, key), 0.0, "{key}");
    }
    let (code, out, _) = run_scenario("estimate-constants", "m2_rotation", &[]);
    assert_eq!(code, 0);
    assert!(value(&out, "c_j_empirical") <= value(&out, "c_j_bound"));
    assert!(value(&out, "grid_doubling_delta") < 0.01);
    assert_eq!(value(&out, "grid"), 64.0);
    assert_eq!(value(&out, "refined_grid"), 128.0);
    assert!(out.contains("certificate pass"));
}

#[test]
fn compare_propagators_exit_codes() {
    let (code, out, _) = run_scenario("compare-propagators", "m2_rotation", &[]);
    assert_eq!(code, 0);
    let global = out
        .lines()
        .find(|l| l.starts_with("omega_vs_g_global "))
        .unwrap();
    assert!(
        global.contains(" pass ") && field(global, 2) < 1e-7,
        "{global}"
    );
    let (code, out, _) = run_scenario("compare-propagators", "m3_three_projection", &[]);
    assert_eq!(code, 0);
    let range = out
        .lines()
        .find(|l| l.starts_with("omega_vs_g_range "))
        .unwrap();
    assert!(field(range, 2) < 1e-7);
    assert!(out.lines().any(|l| l.starts_with("omega_vs_g_global info")));
    let (code, out, _) = run_scenario("compare-propagators", "constant", &[]);
    assert_eq!(code, 0);
    let tail: Vec<&str> = out.lines().rev().take(2).collect();
    assert!(tail.iter().all(|l| field(l, 2) == 0.0), "{out}");
}
