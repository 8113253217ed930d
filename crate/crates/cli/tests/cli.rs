use std::fs;
use std::path::Path;
use std::process::Command;

fn robomemory(args: &[&str]) -> std::process::Output {
    let out = Command::new(env!("CARGO_BIN_EXE_robomemory"))
        .args(args)
        .output()
        .expect("binary runs");
    assert!(
        out.status.success(),
        "robomemory {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn read(dir: &Path, name: &str) -> Vec<u8> {
    fs::read(dir.join(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
}

#[test]
fn seeded_runs_are_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for dir in [&a, &b] {
        robomemory(&["run", "--seed", "7", "--backend", "oracle", "--out", dir.path().to_str().unwrap()]);
    }
    for name in ["report.json", "trajectory.jsonl", "memory_pass1.json", "memory_pass2.json"] {
        assert_eq!(read(a.path(), name), read(b.path(), name), "{name} differs");
    }
}

#[test]
fn replay_reproduces_a_recorded_run() {
    let dir = tempfile::tempdir().unwrap();
    let transcript = dir.path().join("t.jsonl");
    let t = transcript.to_str().unwrap();
    let live = dir.path().join("live");
    let replayed = dir.path().join("replayed");
    robomemory(&["run", "--seed", "3", "--passes", "1", "--transcript", t, "--out", live.to_str().unwrap()]);
    robomemory(&["replay", "--seed", "3", "--passes", "1", "--transcript", t, "--out", replayed.to_str().unwrap()]);
    assert_eq!(read(&live, "trajectory.jsonl"), read(&replayed, "trajectory.jsonl"));
    assert_eq!(read(&live, "memory_pass1.json"), read(&replayed, "memory_pass1.json"));
}

#[test]
fn snapshot_summary_reads_run_output() {
    let dir = tempfile::tempdir().unwrap();
    robomemory(&["run", "--seed", "1", "--passes", "1", "--out", dir.path().to_str().unwrap()]);
    let snap = dir.path().join("memory_pass1.json");
    let out = robomemory(&["snapshot", snap.to_str().unwrap()]);
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("episodic entities  15"), "{text}");
    let dot = robomemory(&["snapshot", "--dot", snap.to_str().unwrap()]);
    assert!(String::from_utf8(dot.stdout).unwrap().starts_with("digraph"));
}

#[test]
fn parallel_tasks_requires_wipe() {
    let out = Command::new(env!("CARGO_BIN_EXE_robomemory"))
        .args(["run", "--parallel-tasks"])
        .output()
        .unwrap();
    assert!(!out.status.success());
}

#[test]
fn bad_disable_list_is_rejected() {
    let out = Command::new(env!("CARGO_BIN_EXE_robomemory"))
        .args(["run", "--disable", "hippocampus"])
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("hippocampus"));
}
