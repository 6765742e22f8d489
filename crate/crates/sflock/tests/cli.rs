use sflock::presets::PRESETS;
use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn sflock(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sflock")).args(args).current_dir(dir).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

const SMALL: &str = r#"
[model]
n_agents = 4
dim = 2
alpha = 1.0
gamma = 1.0

[run]
t_final = 1.0
sample_every = 0.1
seed = 9

[init]
kind = "uniform_box"
extent = 2.0

[checks]
ids = ["MomEq"]
"#;

#[test]
fn presets_table_lists_every_preset() {
    let dir = tempfile::tempdir().unwrap();
    let o = sflock(&["presets"], dir.path());
    assert_eq!(code(&o), 0);
    let text = String::from_utf8(o.stdout).unwrap();
    for p in PRESETS {
        assert!(text.lines().any(|l| l.starts_with(p.name)), "{}", p.name);
    }
}

#[test]
fn flock_linear_preset_writes_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let o = sflock(&["preset", "flock-linear", "--out", "out"], dir.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let out = dir.path().join("out/flock-linear");
    for f in ["trajectory.csv", "diagnostics.csv", "summary.json", "config.toml", "sigma_v.svg", "min_dist.svg", "bounds_EqMot.csv", "bounds_MomEq.csv"] {
        assert!(out.join(f).is_file(), "{f}");
    }
    let diag = fs::read_to_string(out.join("diagnostics.csv")).unwrap();
    assert_eq!(diag.lines().next().unwrap(), "t,m2,sigma_x,sigma_v,min_dist,l_beta,E_plus,E_minus");
    let summary: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["prng"], sflock_core::sampling::PRNG_ALGORITHM);
    assert_eq!(summary["exit_code"], 0);
    assert_eq!(summary["flocking"]["regime"], "Exponential");
}

#[test]
fn collision_test_exits_zero_and_subcritical_exits_three() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&sflock(&["preset", "collision-test", "--out", "o"], dir.path())), 0);
    let o = sflock(&["preset", "subcritical-contrast", "--out", "o"], dir.path());
    assert_eq!(code(&o), 3);
    let summary: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("o/subcritical-contrast/summary.json")).unwrap()).unwrap();
    assert_eq!(summary["terminal_status"], "AbortedSingularity");
}

#[test]
fn negative_alpha_exits_one_naming_the_field() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("bad.toml"), SMALL.replace("alpha = 1.0", "alpha = -1.0")).unwrap();
    let o = sflock(&["run", "bad.toml"], dir.path());
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("model.alpha"));
}

#[test]
fn usage_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&sflock(&["preset", "no-such-preset"], dir.path())), 1);
    assert_eq!(code(&sflock(&["run", "missing.toml"], dir.path())), 1);
    assert_eq!(code(&sflock(&["frobnicate"], dir.path())), 1);
    fs::write(dir.path().join("typo.toml"), SMALL.replace("seed = 9", "sead = 9")).unwrap();
    let o = sflock(&["run", "typo.toml"], dir.path());
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("sead"));
}

#[test]
fn failed_check_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    // C far below the admissible constant: the growth condition fails.
    let cfg = SMALL
        .replace("alpha = 1.0", "alpha = 3.0\nweight = \"custom-power\"")
        .replace("ids = [\"MomEq\"]", "ids = [\"Es3\"]\ntheorem3_beta = 0.25\ntheorem3_c = 0.1");
    fs::write(dir.path().join("es3.toml"), cfg).unwrap();
    let o = sflock(&["run", "es3.toml"], dir.path());
    assert_eq!(code(&o), 2, "{}", String::from_utf8_lossy(&o.stdout));
    assert!(String::from_utf8_lossy(&o.stdout).contains("Es3: FAIL"));
}

#[test]
fn identical_runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("a.toml"), SMALL.replace("[run]", "[run]\noutput_dir = \"a\"")).unwrap();
    fs::write(dir.path().join("b.toml"), SMALL.replace("[run]", "[run]\noutput_dir = \"b\"")).unwrap();
    assert_eq!(code(&sflock(&["run", "a.toml"], dir.path())), 0);
    assert_eq!(code(&sflock(&["run", "b.toml"], dir.path())), 0);
    for f in ["trajectory.csv", "diagnostics.csv", "bounds_MomEq.csv"] {
        assert_eq!(fs::read(dir.path().join("a").join(f)).unwrap(), fs::read(dir.path().join("b").join(f)).unwrap(), "{f}");
    }
}

#[test]
fn thread_count_does_not_change_the_trajectory() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = SMALL.replace("n_agents = 4", "n_agents = 64").replace("extent = 2.0", "extent = 8.0").replace("t_final = 1.0", "t_final = 0.2").replace("sample_every = 0.1", "sample_every = 0.05");
    fs::write(dir.path().join("big.toml"), &cfg).unwrap();
    let mut outs = Vec::new();
    for threads in ["1", "4"] {
        let o = Command::new(env!("CARGO_BIN_EXE_sflock"))
            .args(["run", "big.toml"])
            .env("SFLOCK_THREADS", threads)
            .current_dir(dir.path())
            .output()
            .unwrap();
        assert_eq!(code(&o), 0);
        outs.push(fs::read(dir.path().join("big_out/trajectory.csv")).unwrap());
    }
    assert_eq!(outs[0], outs[1]);
}

#[test]
fn check_subcommand_rereads_a_trajectory() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&sflock(&["preset", "theorem2-es2", "--out", "o"], dir.path())), 0);
    let o = sflock(&["check", "o/theorem2-es2/trajectory.csv", "--ineq", "Es2", "MomEq"], dir.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.contains("Es2: PASS") && text.contains("MomEq: PASS"));

    let o = sflock(&["check", "o/theorem2-es2/trajectory.csv", "--ineq", "EqMot", "--group", "0,1"], dir.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stdout));
    assert_eq!(code(&sflock(&["check", "o/theorem2-es2/trajectory.csv", "--ineq", "Es9"], dir.path())), 1);
    assert_eq!(code(&sflock(&["check", "nowhere/trajectory.csv", "--ineq", "Es2"], dir.path())), 1);
}

#[test]
fn jobs_run_presets_concurrently() {
    let dir = tempfile::tempdir().unwrap();
    let o = sflock(&["preset", "theorem2-es1", "theorem2-es2", "collision-test", "--out", "o", "--jobs", "3"], dir.path());
    assert_eq!(code(&o), 0);
    for name in ["theorem2-es1", "theorem2-es2", "collision-test"] {
        assert!(dir.path().join("o").join(name).join("summary.json").is_file());
    }
}

#[test]
fn every_preset_round_trips_through_run() {
    let dir = tempfile::tempdir().unwrap();
    for p in PRESETS {
        let path = dir.path().join(format!("{}.toml", p.name));
        fs::write(&path, p.toml).unwrap();
        let out = sflock::run_experiment(&path).unwrap_or_else(|e| panic!("{}: {e}", p.name));
        let expected = if p.name == "subcritical-contrast" { 3 } else { 0 };
        assert_eq!(out.exit_code, expected, "{}", p.name);
        let written = fs::read_to_string(dir.path().join(format!("{}_out/config.toml", p.name))).unwrap();
        assert_eq!(sflock::ExperimentFile::parse(&written).unwrap(), p.file(), "{}", p.name);
    }
}
