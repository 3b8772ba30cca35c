use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn albench(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_albench"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("spawn albench")
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("albench-cli-{}-{name}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn stdout(o: &Output) -> String {
    assert!(o.status.success(), "stderr: {}", String::from_utf8_lossy(&o.stderr));
    String::from_utf8(o.stdout.clone()).unwrap()
}

#[test]
fn synth_run_analyze_and_resume() {
    let dir = scratch("flow");
    stdout(&albench(
        &["synth", "--classes", "3", "--dim", "4", "--per-class", "120", "--separation", "3", "--seed", "5", "--out", "blobs.csv"],
        &dir,
    ));
    let csv = std::fs::read_to_string(dir.join("blobs.csv")).unwrap();
    assert_eq!(csv.lines().next().unwrap(), "label,feat_0,feat_1,feat_2,feat_3");
    assert_eq!(csv.lines().count(), 361);

    std::fs::write(
        dir.join("matrix.conf"),
        "# relative paths resolve against this file
datasets = blobs.csv
pipelines = linear
strategies = random, margin, cal
batch_seed = 20:20
trials = 2
max_labeled = 80
pool_size = 200
test_size = 100
output_dir = out
",
    )
    .unwrap();
    let elsewhere = scratch("elsewhere");
    let conf = dir.join("matrix.conf");
    let first = stdout(&albench(&["run", "--config", conf.to_str().unwrap(), "--workers", "2", "--quiet"], &elsewhere));
    assert!(first.starts_with("6 trials executed (0 failed), 0 already complete"), "{first}");
    assert!(dir.join("out/results.csv").exists());
    let second = stdout(&albench(&["run", "--config", conf.to_str().unwrap(), "--quiet"], &elsewhere));
    assert!(second.starts_with("0 trials executed (0 failed), 6 already complete"), "{second}");

    for report in ["delta_curves", "heatmap_cells", "always_on", "variance_profile", "tests"] {
        let out = format!("reports/{report}.csv");
        stdout(&albench(&["analyze", "--in", "out", "--report", report, "--out", &out], &dir));
        let text = std::fs::read_to_string(dir.join(&out)).unwrap();
        assert!(text.lines().count() > 1, "{report}: {text}");
    }
    let always_on = std::fs::read_to_string(dir.join("reports/always_on.csv")).unwrap();
    assert!(always_on.starts_with("avg_for,pct_negative,mean_nonneg,mean,std_nonneg,std\nOverall,"));

    // a CSV path works as input too
    stdout(&albench(&["analyze", "--in", "out/results.csv", "--report", "always_on", "--out", "again.csv"], &dir));
    assert_eq!(std::fs::read_to_string(dir.join("again.csv")).unwrap(), always_on);

    std::fs::remove_dir_all(&dir).unwrap();
    std::fs::remove_dir_all(&elsewhere).unwrap();
}

#[test]
fn bad_input_fails_with_a_message() {
    let dir = scratch("bad");
    std::fs::write(dir.join("c.conf"), "datasets = x.csv\nbogus = 1\n").unwrap();
    let o = albench(&["run", "--config", "c.conf"], &dir);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("unknown key `bogus`"));

    let o = albench(&["analyze", "--in", "nowhere", "--report", "always_on", "--out", "x.csv"], &dir);
    assert!(!o.status.success());

    let o = albench(&["analyze", "--in", "nowhere", "--report", "pie_chart", "--out", "x.csv"], &dir);
    assert!(!o.status.success());

    let o = albench(&["run", "--config", "c.conf", "--workers", "0"], &dir);
    assert!(!o.status.success());
    std::fs::remove_dir_all(&dir).unwrap();
}
