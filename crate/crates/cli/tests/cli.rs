//! End-to-end checks of the binary: smoke contract, exit codes, determinism.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn ttsa(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ttsa"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn tmp_dir(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("ttsa-cli-{tag}-{}", std::process::id()));
    let _ = fs::remove_dir_all(&dir);
    dir
}

fn read(path: &Path) -> Vec<u8> {
    fs::read(path).unwrap_or_else(|e| panic!("missing {path:?}: {e}"))
}

#[test]
fn simulate_smoke_writes_the_contracted_files() {
    let out = tmp_dir("smoke");
    let result = ttsa(&[
        "simulate",
        "--scenario",
        "S1",
        "--steps",
        "10000",
        "--seed",
        "3",
        "--out",
        out.to_str().unwrap(),
        "--analyses",
        "deviation",
    ]);
    assert!(
        result.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&result.stderr)
    );
    assert!(out.join("manifest.json").exists());
    assert!(out.join("seed_3/trajectory.csv").exists());
    assert!(out.join("seed_3/deviation.csv").exists());
    let manifest = String::from_utf8(read(&out.join("manifest.json"))).unwrap();
    assert!(manifest.contains("config_hash"));
    assert!(manifest.contains("\"seeds\""));
    let _ = fs::remove_dir_all(&out);
}

#[test]
fn invalid_schedule_exits_2_and_names_the_flag() {
    let out = tmp_dir("sched");
    let result = ttsa(&[
        "simulate",
        "--scenario",
        "S1",
        "--steps",
        "100",
        "--out",
        out.to_str().unwrap(),
        "--schedule-a-exponent",
        "1.2",
    ]);
    assert_eq!(result.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&result.stderr);
    assert!(stderr.contains("robbins_monro_a"), "stderr: {stderr}");
    let _ = fs::remove_dir_all(&out);
}

#[test]
fn repeat_runs_write_byte_identical_artifacts() {
    let args = |out: &Path| {
        vec![
            "simulate".to_string(),
            "--scenario".into(),
            "S2".into(),
            "--steps".into(),
            "20000".into(),
            "--seed".into(),
            "11".into(),
            "--out".into(),
            out.display().to_string(),
            "--analyses".into(),
            "deviation,occupation,disintegration".into(),
        ]
    };
    let out_a = tmp_dir("det-a");
    let out_b = tmp_dir("det-b");
    for out in [&out_a, &out_b] {
        let argv = args(out);
        let argv: Vec<&str> = argv.iter().map(|s| s.as_str()).collect();
        let result = ttsa(&argv);
        assert!(
            result.status.success(),
            "stderr: {}",
            String::from_utf8_lossy(&result.stderr)
        );
    }
    // Every artifact except the manifest (it carries a timestamp) matches.
    let mut names: Vec<String> = fs::read_dir(out_a.join("seed_11"))
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    names.sort();
    assert!(names.contains(&"trajectory.csv".to_string()));
    assert!(names.iter().any(|n| n.starts_with("residuals_")));
    for name in names {
        let a = read(&out_a.join("seed_11").join(&name));
        let b = read(&out_b.join("seed_11").join(&name));
        assert_eq!(a, b, "artifact {name} differs between identical runs");
    }
    let _ = fs::remove_dir_all(&out_a);
    let _ = fs::remove_dir_all(&out_b);
}

#[test]
fn stability_violation_reports_exit_3_without_killing_other_seeds() {
    let out = tmp_dir("budget");
    // A budget below the S2 launch excursion trips deterministically.
    let result = ttsa(&[
        "simulate",
        "--scenario",
        "S2",
        "--steps",
        "5000",
        "--seed",
        "0",
        "--seed",
        "1",
        "--out",
        out.to_str().unwrap(),
        "--budget",
        "0.5",
    ]);
    assert_eq!(result.status.code(), Some(3));
    let manifest = String::from_utf8(read(&out.join("manifest.json"))).unwrap();
    assert!(manifest.contains("stability budget exceeded"), "{manifest}");
    let _ = fs::remove_dir_all(&out);
}

#[test]
fn report_needs_a_manifest() {
    let out = tmp_dir("empty");
    fs::create_dir_all(&out).unwrap();
    let result = ttsa(&["report", out.to_str().unwrap()]);
    assert!(!result.status.success());
    let _ = fs::remove_dir_all(&out);
}

#[test]
fn report_json_and_text_agree() {
    let out = tmp_dir("report");
    let result = ttsa(&[
        "simulate",
        "--scenario",
        "S1",
        "--steps",
        "10000",
        "--seed",
        "5",
        "--out",
        out.to_str().unwrap(),
        "--analyses",
        "occupation",
    ]);
    assert!(result.status.success());
    let result = ttsa(&["report", out.to_str().unwrap()]);
    assert!(result.status.success());
    let text = String::from_utf8(result.stdout).unwrap();
    let json: serde_json::Value =
        serde_json::from_slice(&read(&out.join("report.json"))).unwrap();
    // The text table renders the same document: spot-check the final state.
    let final_fast = json["seeds"][0]["final_fast"][0].as_f64().unwrap();
    assert!(
        text.contains(&final_fast.to_string()),
        "text lacks {final_fast}: {text}"
    );
    let _ = fs::remove_dir_all(&out);
}

#[test]
fn analyze_reuses_cached_trajectories() {
    let out = tmp_dir("reuse");
    let simulate = ttsa(&[
        "simulate",
        "--scenario",
        "S1",
        "--steps",
        "10000",
        "--seed",
        "2",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(simulate.status.success());
    let before = read(&out.join("seed_2/trajectory.csv"));
    let analyze = ttsa(&[
        "analyze",
        "--scenario",
        "S1",
        "--steps",
        "10000",
        "--seed",
        "2",
        "--out",
        out.to_str().unwrap(),
        "--what",
        "disintegration",
    ]);
    assert!(
        analyze.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&analyze.stderr)
    );
    assert!(out.join("seed_2/disintegration.csv").exists());
    let after = read(&out.join("seed_2/trajectory.csv"));
    assert_eq!(before, after, "analyze must not rewrite the trajectory");
    let _ = fs::remove_dir_all(&out);
}

#[test]
fn custom_instance_runs_from_a_config_file() {
    let out = tmp_dir("custom");
    fs::create_dir_all(&out).unwrap();
    let config_path = out.join("experiment.conf");
    fs::write(
        &config_path,
        format!(
            "\
scenario = custom
steps = 5000
seeds = 4
out = {}
analyses = deviation
noise.kind = gaussian
noise.sigma = 0.1
instance.fast-dim = 1
instance.slow-dim = 1
instance.states = 2
instance.fast-box = -3 3
instance.slow-box = -2 2
instance.init-fast = 0
instance.init-slow = 0
instance.fast-drift.0 = -(x0 - y0 - 0.5*z)
instance.slow-drift.0 = -(y0 - 0.5*x0)
instance.kernel.0.0 = 0.9
instance.kernel.0.1 = 0.1
instance.kernel.1.0 = 0.2
instance.kernel.1.1 = 0.8
",
            out.join("artifacts").display()
        ),
    )
    .unwrap();
    let result = ttsa(&["simulate", "--config", config_path.to_str().unwrap()]);
    assert!(
        result.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&result.stderr)
    );
    assert!(out.join("artifacts/seed_4/deviation.csv").exists());
    let _ = fs::remove_dir_all(&out);
}

#[test]
fn unknown_config_keys_exit_2_with_context() {
    let out = tmp_dir("badkey");
    fs::create_dir_all(&out).unwrap();
    let config_path = out.join("experiment.conf");
    fs::write(&config_path, "scenario = S1\nnonsense.key = 3\n").unwrap();
    let result = ttsa(&["simulate", "--config", config_path.to_str().unwrap()]);
    assert_eq!(result.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&result.stderr);
    assert!(stderr.contains("line 2"), "stderr: {stderr}");
    let _ = fs::remove_dir_all(&out);
}
