use std::path::Path;
use std::process::{Command, Output};

fn sleeptrack(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sleeptrack"))
        .args(args)
        .env_remove("SLEEPTRACK_SEED")
        .env("RUST_LOG", "info")
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Parses `step,b,b_hat,awake,g` rows.
fn trace_rows(text: &str) -> Vec<Vec<f64>> {
    text.lines().skip(1).map(|l| l.split(',').map(|x| x.parse().unwrap()).collect()).collect()
}

fn logged_duration(stderr: &[u8]) -> u64 {
    let text = String::from_utf8_lossy(stderr);
    let tail = text.split("duration ").nth(1).expect("duration is logged");
    tail.split_whitespace().next().unwrap().parse().unwrap()
}

#[test]
fn replay_is_deterministic_per_seed() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    for out in [&a, &b] {
        let o = sleeptrack(&["replay", "--network", "B", "--policy", "fcr", "--samples", "20", "--seed", "9", "--out", path(out)]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    }
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
}

#[test]
fn seed_comes_from_the_environment() {
    let run = |env: Option<&str>, flag: Option<&str>| {
        let mut cmd = Command::new(env!("CARGO_BIN_EXE_sleeptrack"));
        cmd.args(["replay", "--network", "A", "--policy", "all-asleep", "--u-max", "10"]);
        if let Some(s) = flag {
            cmd.args(["--seed", s]);
        }
        match env {
            Some(s) => cmd.env("SLEEPTRACK_SEED", s),
            None => cmd.env_remove("SLEEPTRACK_SEED"),
        };
        cmd.output().unwrap().stdout
    };
    assert_eq!(run(Some("31"), None), run(None, Some("31")));
    assert_ne!(run(Some("31"), None), run(Some("32"), None));
}

#[test]
fn all_awake_replay_on_a_sees_the_object_everywhere() {
    let o = sleeptrack(&["replay", "--network", "A", "--policy", "all-awake", "--seed", "2"]);
    assert_eq!(code(&o), 0);
    let rows = trace_rows(&String::from_utf8(o.stdout).unwrap());
    assert!(rows.iter().all(|r| r[1] == r[2] && r[3] == 41.0));
    assert_eq!(rows.len() as u64, logged_duration(&o.stderr));
}

#[test]
fn trace_length_is_the_duration() {
    let o = sleeptrack(&["replay", "--network", "C", "--policy", "fcr", "--tdelta", "asleep", "--samples", "10", "--particles", "64", "--seed", "5"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let rows = trace_rows(&String::from_utf8(o.stdout).unwrap());
    assert_eq!(rows.len() as u64, logged_duration(&o.stderr));
    assert_eq!(rows[0][4], 0.0);
}

#[test]
fn continuous_tables_have_integer_anchors() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("c.tdelta");
    let o = sleeptrack(&["tables", "--network", "C", "--source", "asleep", "--samples", "10", "--out", path(&out)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let file = sleeptrack::io::load_table(&out).unwrap();
    assert_eq!((file.table.rows(), file.table.sensors()), (21, 10));
    assert_eq!(file.table.anchors()[0], 1.0);
}

#[test]
fn saved_tables_feed_back_into_a_sweep() {
    let dir = tempfile::tempdir().unwrap();
    let table = dir.path().join("b.tdelta");
    let csv = dir.path().join("b.csv");
    let o = sleeptrack(&["tables", "--network", "B", "--source", "greedy", "--c", "0.3", "--samples", "20", "--out", path(&table)]);
    assert_eq!(code(&o), 0);
    let o = sleeptrack(&[
        "--workers", "1", "sweep", "--network", "B", "--policy", "qmdp,all-awake", "--tdelta", path(&table),
        "--c-grid", "0.3", "--runs", "4", "--out", path(&csv),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let points = sleeptrack::io::read_points(std::fs::File::open(&csv).unwrap()).unwrap();
    assert_eq!(points.len(), 2);
    assert_eq!(points[0].tdelta_source, "file");
    assert!(dir.path().join("b.gp").exists());
}

#[test]
fn bound_rows_sit_below_every_policy() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("out.csv");
    let config = concat!(env!("CARGO_MANIFEST_DIR"), "/../../book/src/network_b.toml");
    let o = sleeptrack(&[
        "sweep", "--config", config, "--policy", "all-awake,all-asleep,qmdp-greedy", "--c-grid", "0.1,1",
        "--runs", "40", "--samples", "20", "--out", path(&csv),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let points = sleeptrack::io::read_points(std::fs::File::open(&csv).unwrap()).unwrap();
    assert!(points.iter().all(|p| p.seed == 7));
    for bound in points.iter().filter(|p| p.policy == "lower_bound") {
        for p in points.iter().filter(|p| p.policy != "lower_bound" && p.c == bound.c) {
            assert!(bound.total_per_time() <= p.total_per_time() + 3.0 * p.total_se(), "{p:?} vs {bound:?}");
        }
    }
    assert_eq!(points.iter().filter(|p| p.policy == "lower_bound").count(), 2);
}

#[test]
fn usage_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&sleeptrack(&["tables", "--network", "A"])), 2);
    assert_eq!(code(&sleeptrack(&["sweep", "--network", "B", "--policy", ""])), 2);
    assert_eq!(code(&sleeptrack(&["sweep"])), 2);
    assert_eq!(code(&sleeptrack(&["bogus"])), 2);
    let out = dir.path().join("t");
    assert_eq!(code(&sleeptrack(&["tables", "--network", "A", "--source", "psychic", "--out", path(&out)])), 2);
}

#[test]
fn config_errors_exit_with_three() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&sleeptrack(&["sweep", "--network", "Z"])), 3);
    assert_eq!(code(&sleeptrack(&["sweep", "--network", "B", "--c-grid", "1,0.1"])), 3);
    assert_eq!(code(&sleeptrack(&["sweep", "--network", "C", "--particles", "1"])), 3);
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "[run]\nspeed = 3\n").unwrap();
    assert_eq!(code(&sleeptrack(&["sweep", "--config", path(&bad), "--network", "B"])), 3);
}

#[test]
fn io_errors_exit_with_five() {
    assert_eq!(code(&sleeptrack(&["replay", "--network", "B", "--tdelta", "/no/such/table"])), 5);
    let o = sleeptrack(&["tables", "--network", "B", "--samples", "2", "--out", "/no/such/dir/t"]);
    assert_eq!(code(&o), 5);
    assert!(String::from_utf8_lossy(&o.stderr).contains("/no/such/dir/t"));
}
