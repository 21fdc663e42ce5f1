use std::path::Path;
use std::process::{Command, Output};

const COHORT: &str = r#"seed = 21
[[groups]]
group = "C"
count = 4
severity = [0.0, 0.05]
[[groups]]
group = "preHD"
count = 4
severity = [0.1, 0.2]
[[groups]]
group = "HD"
count = 4
severity = [0.6, 1.0]
[voice]
duration = [1.5, 2.0]
"#;

fn phonation(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_phonation"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn synth_cohort(dir: &Path) {
    std::fs::write(dir.join("cohort.toml"), COHORT).unwrap();
    let o = phonation(dir, &["synth", "--spec", "cohort.toml", "--out", "cohort"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn config_round_trip_and_rejection() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    let o = phonation(d, &["config", "init"]);
    assert_eq!(code(&o), 0);
    std::fs::write(d.join("default.toml"), &o.stdout).unwrap();
    assert_eq!(code(&phonation(d, &["config", "check", "--config", "default.toml"])), 0);

    std::fs::write(d.join("typo.toml"), "[model]\nl1ratio = 0.3\n").unwrap();
    let o = phonation(d, &["config", "check", "--config", "typo.toml"]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("l1ratio"));

    std::fs::write(d.join("bad.toml"), "[model]\nl1_ratio = 1.5\n").unwrap();
    assert_eq!(code(&phonation(d, &["config", "check", "--config", "bad.toml"])), 2);
}

#[test]
fn usage_errors_exit_with_two() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    assert_eq!(code(&phonation(d, &["frobnicate"])), 2);
    assert_eq!(code(&phonation(d, &["regress", "--features", "x", "--out", "y"])), 2);
    assert_eq!(code(&phonation(d, &["extract", "--manifest", "missing.csv", "--out", "o"])), 2);
    std::fs::write(d.join("manifest.csv"), "subject_id,group\ns1,C\n").unwrap();
    assert_eq!(code(&phonation(d, &["extract", "--manifest", "manifest.csv", "--out", "o"])), 2);
}

#[test]
fn missing_recording_is_reported_and_skipped() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    synth_cohort(d);
    std::fs::remove_file(d.join("cohort/wav/H001.wav")).unwrap();
    std::fs::write(d.join("cohort/wav/H002.wav"), b"not a wav").unwrap();
    let o = phonation(d, &["extract", "--manifest", "cohort/manifest.csv", "--out", "features", "--no-mps"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let issues = std::fs::read_to_string(d.join("features/issues.csv")).unwrap();
    assert!(issues.contains("H001") && issues.contains("H002"), "{issues}");
    let features = std::fs::read_to_string(d.join("features/features.csv")).unwrap();
    assert_eq!(features.lines().count(), 1 + 10);
    assert!(!features.contains("H001"));

    for wav in std::fs::read_dir(d.join("cohort/wav")).unwrap() {
        std::fs::remove_file(wav.unwrap().path()).unwrap();
    }
    let o = phonation(d, &["extract", "--manifest", "cohort/manifest.csv", "--out", "none"]);
    assert_eq!(code(&o), 3);
}

#[test]
fn runs_are_byte_identical_and_seeded() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    synth_cohort(d);
    let o = phonation(d, &["extract", "--manifest", "cohort/manifest.csv", "--out", "features"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let classify = |out: &str, seed: &str| {
        let o = phonation(
            d,
            &["classify", "--features", "features", "--out", out, "--repeats", "4", "--seed", seed, "--feature-set", "phonatory"],
        );
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        std::fs::read(d.join(out).join("phonatory/eval.json")).unwrap()
    };
    let a = classify("a", "7");
    assert_eq!(a, classify("b", "7"));
    assert_ne!(a, classify("c", "8"));
    let run = |out: &str| {
        let text = std::fs::read_to_string(d.join(out).join("run.json")).unwrap();
        serde_json::from_str::<serde_json::Value>(&text).unwrap()
    };
    assert_eq!(run("a"), run("b"));
    assert_ne!(run("a")["config_hash"], run("c")["config_hash"]);

    let stats = |out: &str| {
        assert_eq!(code(&phonation(d, &["stats", "--features", "features", "--out", out])), 0);
        std::fs::read(d.join(out).join("stats.csv")).unwrap()
    };
    assert_eq!(stats("s1"), stats("s2"));
}

#[test]
fn single_group_is_a_data_error() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    synth_cohort(d);
    let manifest = std::fs::read_to_string(d.join("cohort/manifest.csv")).unwrap();
    let mut lines = manifest.lines();
    let header = lines.next().unwrap();
    let hd: Vec<&str> = lines.filter(|l| l.contains(",HD,")).collect();
    assert!(!hd.is_empty(), "{manifest}");
    std::fs::write(d.join("cohort/hd.csv"), format!("{header}\n{}\n", hd.join("\n"))).unwrap();
    let o = phonation(d, &["extract", "--manifest", "cohort/hd.csv", "--out", "features", "--no-mps"]);
    assert_eq!(code(&o), 0);
    assert_eq!(code(&phonation(d, &["stats", "--features", "features", "--out", "s"])), 3);
}
