use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn rankmix(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rankmix"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = rankmix(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn path(dir: &Path, name: &str) -> String {
    dir.join(name).to_str().unwrap().to_string()
}

const SPEC: &str = "\
n = 6
k = 2
weights = 0.5, 0.5
component.0.family = gaussian
component.0.sigma = 0.1
component.0.utilities = 5, 4, 3, 2, 1, 0
component.1.family = mnl
component.1.beta = 0.1
component.1.utilities = 0, 1, 2, 3, 4, 5
";

#[test]
fn generate_denoise_cluster_evaluate() {
    let dir = tempfile::tempdir().unwrap();
    let spec = path(dir.path(), "mix.spec");
    fs::write(&spec, SPEC).unwrap();
    let obs = path(dir.path(), "obs.txt");
    ok(&["generate", "--spec", &spec, "--num", "80", "--p", "0.9", "--seed", "3", "--out", &obs]);

    let text = fs::read_to_string(&obs).unwrap();
    assert_eq!(text.lines().next(), Some("80 15"));
    assert!(text.contains("NA"));
    let truth = format!("{obs}.labels");
    assert_eq!(fs::read_to_string(&truth).unwrap().lines().count(), 80);

    let dense = path(dir.path(), "m_hat.txt");
    ok(&["denoise", "--in", &obs, "--auto", "--out", &dense]);
    let meta = fs::read_to_string(format!("{dense}.meta")).unwrap();
    for key in ["p_hat=", "threshold_used=", "kept_rank=", "singular_values="] {
        assert!(meta.contains(key), "{meta}");
    }

    let labels = path(dir.path(), "pred.txt");
    ok(&["cluster", "--in", &dense, "--auto", "--out", &labels]);
    let meta = fs::read_to_string(format!("{labels}.meta")).unwrap();
    assert!(meta.contains("k_hat=2"), "{meta}");

    let printed = ok(&["evaluate", "--pred", &labels, "--truth", &truth]);
    assert_eq!(printed.lines().next(), Some("risk=0"));
    assert!(printed.lines().nth(1).unwrap().starts_with("matching="));
}

#[test]
fn generate_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let spec = path(dir.path(), "mix.spec");
    fs::write(&spec, SPEC).unwrap();
    let a = path(dir.path(), "a.txt");
    let b = path(dir.path(), "b.txt");
    for out in [&a, &b] {
        ok(&["generate", "--spec", &spec, "--num", "30", "--p", "0.5", "--seed", "9", "--out", out]);
    }
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
}

#[test]
fn embed_and_fixed_thresholds() {
    let dir = tempfile::tempdir().unwrap();
    let rankings = path(dir.path(), "r.txt");
    fs::write(&rankings, "4 3\n0 1 2\n0 1 2\n2 1 0\n2 1 0\n").unwrap();
    let obs = path(dir.path(), "obs.txt");
    ok(&["embed", "--in", &rankings, "--out", &obs]);
    assert_eq!(
        fs::read_to_string(&obs).unwrap(),
        "4 3\n0.5 0.5 0.5\n0.5 0.5 0.5\n-0.5 -0.5 -0.5\n-0.5 -0.5 -0.5\n"
    );
    let dense = path(dir.path(), "m.txt");
    ok(&["denoise", "--in", &obs, "--rank", "1", "--out", &dense]);
    assert!(fs::read_to_string(format!("{dense}.meta")).unwrap().contains("kept_rank=1"));
    let labels = path(dir.path(), "l.txt");
    ok(&["cluster", "--in", &dense, "--t2", "0.1", "--out", &labels]);
    assert_eq!(fs::read_to_string(&labels).unwrap(), "0\n0\n1\n1\n");
}

#[test]
fn tau_estimate_prints_value() {
    let dir = tempfile::tempdir().unwrap();
    let spec = path(dir.path(), "mix.spec");
    fs::write(
        &spec,
        "n = 4\nk = 1\ncomponent.0.family = mnl\ncomponent.0.beta = 1\ncomponent.0.utilities = 0, 0.1, 0.2, 0.3\n",
    )
    .unwrap();
    let printed = ok(&["tau-estimate", "--spec", &spec, "--samples", "200", "--directions", "4", "--seed", "1"]);
    let value: f64 = printed.trim().strip_prefix("tau_hat=").unwrap().parse().unwrap();
    assert!(value > 0.0 && value.is_finite());
}

#[test]
fn experiment_writes_csv() {
    let dir = tempfile::tempdir().unwrap();
    let config = path(dir.path(), "exp.cfg");
    fs::write(&config, "seed = 4\nn = 5, 8\nsigma = 1.0\ntrials = 2\nsamples = 200\ndirections = 4\n").unwrap();
    let out = path(dir.path(), "results");
    ok(&["experiment", "exp3", "--config", &config, "--out", &out]);
    let csv = fs::read_to_string(Path::new(&out).join("exp3_tau.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3);
}

#[test]
fn errors_exit_nonzero() {
    let dir = tempfile::tempdir().unwrap();
    let bad = path(dir.path(), "bad.txt");
    fs::write(&bad, "2 3\n0.5 0.5\n").unwrap();
    let out = rankmix(&["denoise", "--in", &bad, "--auto", "--out", &path(dir.path(), "o")]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("line"));

    let missing = rankmix(&["evaluate", "--pred", "/nonexistent/a", "--truth", "/nonexistent/b"]);
    assert!(!missing.status.success());
    assert!(String::from_utf8_lossy(&missing.stderr).contains("/nonexistent/a"));

    let both = rankmix(&["cluster", "--in", &bad, "--t2", "1", "--auto", "--out", "x"]);
    assert!(!both.status.success());
}
