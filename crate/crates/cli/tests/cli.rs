use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use takedown_core::calibrate::write_synthetic_sors;
use takedown_core::simcore::seed_rng;

const SMALL_NET: &str = "[network]\nkind = \"rwg\"\nn_final = 150\nn_init = 11\nk_out = 10\n";

fn takedown() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_takedown"));
    cmd.env_remove("TAKEDOWN_CONFIG").env_remove("RUST_LOG");
    cmd
}

fn run(args: &[&str]) -> Output {
    takedown().args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn assert_ok(o: &Output) {
    assert!(
        o.status.success(),
        "exit {:?}\nstderr: {}",
        o.status.code(),
        stderr(o)
    );
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn fixture_sors(dir: &Path) -> PathBuf {
    let mut buf = Vec::new();
    write_synthetic_sors(&mut buf, "Alpha", "scams", 4.0, 2_000, &mut seed_rng(1)).unwrap();
    let mut other = Vec::new();
    write_synthetic_sors(&mut other, "Beta", "scams", 30.0, 2_000, &mut seed_rng(2)).unwrap();
    // drop the second header
    let body = other.splitn(2, |&b| b == b'\n').nth(1).unwrap();
    buf.extend_from_slice(body);
    let p = dir.join("sors.csv");
    fs::write(&p, buf).unwrap();
    p
}

/// `(header, rows)` of a CSV document.
fn table(text: &str) -> (Vec<String>, Vec<Vec<String>>) {
    let mut lines = text
        .lines()
        .filter(|l| !l.starts_with('#') && !l.trim().is_empty());
    let split = |l: &str| l.split(',').map(str::to_string).collect::<Vec<_>>();
    let header = split(lines.next().unwrap());
    (header, lines.map(split).collect())
}

fn column(header: &[String], name: &str) -> usize {
    header.iter().position(|h| h == name).unwrap()
}

#[test]
fn fit_reports_one_row_per_platform() {
    let dir = tempfile::tempdir().unwrap();
    let sors = fixture_sors(dir.path());
    let ccdf = dir.path().join("ccdf");
    let out = run(&["fit", s(&sors), "--ccdf-dir", s(&ccdf)]);
    assert_ok(&out);
    let (header, rows) = table(&stdout(&out));
    assert_eq!(rows.len(), 2);
    let (tp, tm) = (column(&header, "platform"), column(&header, "tau_mle"));
    for (platform, tau) in [("Alpha", 4.0), ("Beta", 30.0)] {
        let row = rows.iter().find(|r| r[tp] == platform).unwrap();
        let est: f64 = row[tm].parse().unwrap();
        assert!((est / tau - 1.0).abs() < 0.1, "{platform}: {est}");
    }
    assert!(ccdf.join("Alpha.ccdf.csv").exists());
}

#[test]
fn fit_by_category_on_single_category() {
    let dir = tempfile::tempdir().unwrap();
    let sors = fixture_sors(dir.path());
    let out = run(&["fit", s(&sors), "--by-category", "--platform", "Alpha"]);
    assert_ok(&out);
    let (header, rows) = table(&stdout(&out));
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0][column(&header, "category")], "scams");
}

#[test]
fn fit_method_blanks_the_other_estimator() {
    let dir = tempfile::tempdir().unwrap();
    let sors = fixture_sors(dir.path());
    let out = run(&["fit", s(&sors), "--method", "mle"]);
    assert_ok(&out);
    let (header, rows) = table(&stdout(&out));
    assert!(rows
        .iter()
        .all(|r| r[column(&header, "tau_logls")].is_empty()));
    assert!(rows
        .iter()
        .all(|r| !r[column(&header, "tau_mle")].is_empty()));
}

#[test]
fn fit_missing_column_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let p = write(
        dir.path(),
        "bad.csv",
        "platform,content_date,decision_ground,category\nA,2024-01-01,DECISION_GROUND_ILLEGAL_CONTENT,x\n",
    );
    let out = run(&["fit", s(&p)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(
        stderr(&out).contains("application_date"),
        "{}",
        stderr(&out)
    );
}

#[test]
fn fit_missing_file_is_a_data_error() {
    let out = run(&["fit", "/nonexistent/sors.csv"]);
    assert_eq!(out.status.code(), Some(2));
}

fn out_degrees(edges: &str) -> (usize, Vec<usize>) {
    let header = edges.lines().next().unwrap();
    let n: usize = header
        .split_whitespace()
        .find_map(|t| t.strip_prefix("nodes="))
        .unwrap()
        .parse()
        .unwrap();
    let mut deg = vec![0; n];
    for line in edges.lines().skip(2) {
        let u: usize = line.split(',').next().unwrap().parse().unwrap();
        deg[u] += 1;
    }
    (n, deg)
}

#[test]
fn netgen_rwg_contract() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("g.csv");
    let out = run(&[
        "netgen",
        "--mode",
        "rwg",
        "--n",
        "10",
        "--k-out",
        "2",
        "--out",
        s(&p),
    ]);
    assert_ok(&out);
    let (n, deg) = out_degrees(&fs::read_to_string(&p).unwrap());
    assert_eq!(n, 10);
    assert!(deg[3..].iter().all(|&d| d == 2), "{deg:?}");
    assert!(stdout(&out).trim().starts_with("N=10 E="));
}

#[test]
fn netgen_kcore_keeps_triangle() {
    let dir = tempfile::tempdir().unwrap();
    let tri = write(dir.path(), "tri.csv", "0,1\n1,2\n2,0\n");
    let p = dir.path().join("core.csv");
    let out = run(&[
        "netgen",
        "--mode",
        "kcore",
        "--k",
        "2",
        "--input",
        s(&tri),
        "--out",
        s(&p),
    ]);
    assert_ok(&out);
    assert_eq!(stdout(&out).trim(), "N=3 E=3");
}

#[test]
fn netgen_thin_to_zero_keeps_nodes() {
    let dir = tempfile::tempdir().unwrap();
    let tri = write(dir.path(), "tri.csv", "0,1\n1,2\n2,0\n");
    let p = dir.path().join("thin.csv");
    let out = run(&[
        "netgen",
        "--mode",
        "thin",
        "--target-edges",
        "0",
        "--input",
        s(&tri),
        "--out",
        s(&p),
    ]);
    assert_ok(&out);
    let text = fs::read_to_string(&p).unwrap();
    assert_eq!(text, "# nodes=3 edges=0\nfollower,followee\n");
}

#[test]
fn netgen_thin_needs_target() {
    let dir = tempfile::tempdir().unwrap();
    let tri = write(dir.path(), "tri.csv", "0,1\n1,2\n2,0\n");
    let out = run(&["netgen", "--mode", "thin", "--input", s(&tri)]);
    assert_eq!(out.status.code(), Some(2));
}

fn summary_value(text: &str, key: &str) -> String {
    text.lines()
        .find_map(|l| l.strip_prefix(&format!("{key}=")))
        .unwrap_or_else(|| panic!("{key} missing from\n{text}"))
        .to_string()
}

#[test]
fn simulate_without_illegal_content() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "c.toml",
        &format!("{SMALL_NET}[content]\ndistribution = \"normal\"\nmu = 0.0\nsigma = 0.0\n"),
    );
    let out = run(&["--config", s(&cfg), "simulate"]);
    assert_ok(&out);
    let text = stdout(&out);
    assert_eq!(summary_value(&text, "tau_days"), "none");
    assert_eq!(
        summary_value(&text, "prevalence").parse::<f64>().unwrap(),
        0.0
    );
    assert_eq!(summary_value(&text, "illegal_created"), "0");
}

#[test]
fn simulate_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.toml", SMALL_NET);
    let args = ["--config", s(&cfg), "simulate", "--tau", "3", "--seed", "7"];
    let (a, b) = (run(&args), run(&args));
    assert_eq!(a.stdout, b.stdout);
    assert_eq!(a.status.code(), b.status.code());
    assert!(!a.stdout.is_empty());
}

#[test]
fn simulate_fast_takedown_on_desk_network() {
    let out = run(&["simulate", "--tau", "0.0833"]);
    assert_ok(&out);
    let r: f64 = summary_value(&stdout(&out), "prevalence_reduction")
        .parse()
        .unwrap();
    assert!(r >= 0.90, "{r}");
}

#[test]
fn simulate_reports_non_convergence() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "c.toml",
        &format!("{SMALL_NET}[convergence]\nmax_steps = 3\n"),
    );
    let out = run(&["--config", s(&cfg), "simulate", "--no-baseline"]);
    assert_eq!(out.status.code(), Some(3), "{}", stderr(&out));
    assert_eq!(summary_value(&stdout(&out), "converged"), "false");
}

#[test]
fn simulate_trace_round_trips_through_report() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.toml", SMALL_NET);
    let trace = dir.path().join("trace.csv");
    let sim = run(&[
        "--config",
        s(&cfg),
        "simulate",
        "--tau",
        "2",
        "--no-baseline",
        "--trace",
        s(&trace),
    ]);
    assert!(
        matches!(sim.status.code(), Some(0) | Some(3)),
        "{}",
        stderr(&sim)
    );
    let out = run(&["report", s(&trace)]);
    assert_ok(&out);
    assert_eq!(out.stdout, fs::read(&trace).unwrap());
}

#[test]
fn sweep_shape_and_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.toml", SMALL_NET);
    let res = dir.path().join("sweep.csv");
    let out = run(&[
        "--config",
        s(&cfg),
        "sweep",
        "--tau-grid",
        "0.5,5,50",
        "--runs",
        "4",
        "--out",
        s(&res),
    ]);
    assert_ok(&out);
    let text = fs::read_to_string(&res).unwrap();
    let (header, rows) = table(&text);
    assert_eq!(
        header,
        [
            "tau_days",
            "metric",
            "mean_reduction",
            "ci_low",
            "ci_high",
            "n_runs",
            "n_nonconverged"
        ]
    );
    assert_eq!(rows.len(), 9);
    assert!(text.contains("# baseline=shared-across-cells"));

    let again = run(&["report", s(&res)]);
    assert_ok(&again);
    assert_eq!(again.stdout, text.as_bytes());

    let summary = run(&["report", "--summary", s(&res)]);
    assert_ok(&summary);
    assert!(stdout(&summary).contains("Spearman"));
}

#[test]
fn config_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "c.toml",
        &format!("{SMALL_NET}[experiment]\ntau_grid = [1.0, 10.0]\nruns = 3\n"),
    );
    let out = takedown()
        .env("TAKEDOWN_CONFIG", &cfg)
        .arg("sweep")
        .output()
        .unwrap();
    assert_ok(&out);
    let (_, rows) = table(&stdout(&out));
    assert_eq!(rows.len(), 6);
}

#[test]
fn robustness_p_distributions_table() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.toml", SMALL_NET);
    let dist = dir.path().join("dist.csv");
    let pairs = dir.path().join("pairs.csv");
    let out = run(&[
        "--config",
        s(&cfg),
        "robustness",
        "--kind",
        "p-distributions",
        "--runs",
        "3",
        "--distributions",
        s(&dist),
        "--out",
        s(&pairs),
    ]);
    assert_ok(&out);
    let text = fs::read_to_string(&pairs).unwrap();
    let (header, rows) = table(&text);
    let (tc, mc) = (column(&header, "tau_days"), column(&header, "metric"));
    let (fc, sc) = (column(&header, "first"), column(&header, "second"));
    let prevalence_at_first: Vec<_> = rows
        .iter()
        .filter(|r| r[mc] == "prevalence" && r[tc] == rows[0][tc])
        .collect();
    assert_eq!(prevalence_at_first.len(), 3);
    let specs: BTreeSet<&str> = rows
        .iter()
        .flat_map(|r| [r[fc].as_str(), r[sc].as_str()])
        .collect();
    assert_eq!(specs.len(), 3);

    for file in [&pairs, &dist] {
        let again = run(&["report", s(file)]);
        assert_ok(&again);
        assert_eq!(again.stdout, fs::read(file).unwrap(), "{}", file.display());
    }
}

#[test]
fn report_round_trips_fit_and_edges() {
    let dir = tempfile::tempdir().unwrap();
    let sors = fixture_sors(dir.path());
    let fit = dir.path().join("fit.csv");
    let ccdf = dir.path().join("ccdf");
    assert_ok(&run(&[
        "fit",
        s(&sors),
        "--out",
        s(&fit),
        "--ccdf-dir",
        s(&ccdf),
    ]));
    let edges = dir.path().join("g.csv");
    assert_ok(&run(&[
        "netgen",
        "--n",
        "30",
        "--k-out",
        "3",
        "--out",
        s(&edges),
    ]));
    for file in [fit, edges, ccdf.join("Beta.ccdf.csv")] {
        let out = run(&["report", s(&file)]);
        assert_ok(&out);
        assert_eq!(out.stdout, fs::read(&file).unwrap(), "{}", file.display());
    }
}

#[test]
fn unknown_config_key_is_rejected_with_location() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "c.toml",
        "[engine]\ngamma = 2.5\nfeed_size = 10\n",
    );
    let out = run(&["--config", s(&cfg), "simulate"]);
    assert_eq!(out.status.code(), Some(2));
    let err = stderr(&out);
    assert!(err.contains("feed_size") && err.contains("line 3"), "{err}");
}

#[test]
fn invalid_config_value_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.toml", "[engine]\ngamma = 0.5\n");
    let out = run(&["--config", s(&cfg), "sweep"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("gamma"));
}

#[test]
fn printed_default_config_is_accepted() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["config"]);
    assert_ok(&out);
    let cfg = dir.path().join("default.toml");
    fs::write(&cfg, &out.stdout).unwrap();
    let tiny = run(&[
        "--config",
        s(&cfg),
        "simulate",
        "--no-baseline",
        "--seed",
        "3",
    ]);
    assert!(
        matches!(tiny.status.code(), Some(0) | Some(3)),
        "{}",
        stderr(&tiny)
    );
}

#[test]
fn help_lists_flags_with_defaults() {
    let cases: [(&str, &[&str]); 6] = [
        (
            "fit",
            &[
                "--platform",
                "--by-category",
                "--method",
                "[default: both]",
                "[default: 30]",
            ],
        ),
        (
            "netgen",
            &[
                "--mode",
                "[default: rwg]",
                "--k-out",
                "[default: 20]",
                "[default: 94]",
            ],
        ),
        ("simulate", &["--tau", "--seed", "--trace", "--no-baseline"]),
        (
            "sweep",
            &[
                "--tau-grid",
                "--runs",
                "--workers",
                "default [experiment].runs = 20",
            ],
        ),
        (
            "robustness",
            &["--kind", "[default: p-distributions]", "[default: 0.05]"],
        ),
        ("report", &["--kind", "[default: auto]", "--summary"]),
    ];
    for (cmd, needles) in cases {
        let out = run(&[cmd, "--help"]);
        assert_ok(&out);
        let text = stdout(&out);
        for n in needles {
            assert!(text.contains(n), "`{cmd} --help` lacks {n}:\n{text}");
        }
        assert!(text.contains("TAKEDOWN_CONFIG"), "{cmd}");
    }
}
