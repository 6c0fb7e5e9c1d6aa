use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_flare");

const REFERENCE_COUNTS: [[u64; 4]; 4] = [
    [5336, 471, 92, 69],
    [807, 748, 105, 183],
    [139, 130, 85, 64],
    [1, 33, 12, 31],
];
const CLASSES: [&str; 4] = ["O", "C", "M", "X"];

fn flare(args: &[&str]) -> Output {
    flare_env(args, &[])
}

fn flare_env(args: &[&str], env: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(BIN);
    cmd.args(args);
    for (k, v) in env {
        cmd.env(k, v);
    }
    cmd.output().expect("run flare")
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap_or(-1)
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(name)
}

fn csv_metric(path: &Path, name: &str) -> String {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .find_map(|l| l.strip_prefix(&format!("{name},")).map(str::to_string))
        .unwrap_or_else(|| panic!("{name} missing from {}", path.display()))
}

fn gen(dir: &Path, n: &str, seed: &str) {
    let o = flare(&["gen-data", "--n", n, "--seed", seed, "--out-dir", p(dir)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
}

#[test]
fn gen_data_is_deterministic() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    gen(&a, "1000", "7");
    gen(&b, "1000", "7");
    for f in ["samples.csv", "events.csv", "gen-data.config"] {
        assert_eq!(
            fs::read(a.join(f)).unwrap(),
            fs::read(b.join(f)).unwrap(),
            "{f}"
        );
    }
}

#[test]
fn generated_class_frequencies_follow_the_request() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    let o = flare(&[
        "gen-data",
        "--n",
        "1000",
        "--seed",
        "3",
        "--class-probs",
        "0.38,0.35,0.23,0.04",
        "--out-dir",
        p(d),
    ]);
    assert_eq!(code(&o), 0);
    let labels = d.join("labels.csv");
    let o = flare(&[
        "label",
        "--events",
        p(&d.join("events.csv")),
        "--samples",
        p(&d.join("samples.csv")),
        "--out",
        p(&labels),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(d.join("label.config").exists());
    let text = fs::read_to_string(&labels).unwrap();
    let mut counts = [0usize; 4];
    for line in text.lines().skip(1) {
        let c = line.split(',').nth(1).unwrap();
        counts[CLASSES.iter().position(|x| *x == c).unwrap()] += 1;
    }
    for (count, want) in counts.iter().zip([0.38, 0.35, 0.23, 0.04]) {
        assert!((*count as f64 / 1000.0 - want).abs() <= 0.05, "{counts:?}");
    }
}

#[test]
fn gen_data_usage_and_io_errors() {
    let tmp = tempfile::tempdir().unwrap();
    let o = flare(&["gen-data", "--n", "0", "--out-dir", p(tmp.path())]);
    assert_eq!(code(&o), 1);
    let o = flare(&[
        "gen-data",
        "--n",
        "10",
        "--class-probs",
        "0.5,0.5",
        "--out-dir",
        p(tmp.path()),
    ]);
    assert_eq!(code(&o), 1);
    let blocker = tmp.path().join("file");
    fs::write(&blocker, "x").unwrap();
    let o = flare(&[
        "gen-data",
        "--n",
        "10",
        "--out-dir",
        p(&blocker.join("sub")),
    ]);
    assert_eq!(code(&o), 2, "{}", stderr(&o));
    assert_eq!(code(&flare(&["no-such-command"])), 1);
    assert_eq!(code(&flare(&["--help"])), 0);
}

fn write_samples(path: &Path, times: &[&str]) {
    let mut text = String::from("id,timestamp,mask,f0,f1\n");
    for (i, t) in times.iter().enumerate() {
        text.push_str(&format!("s{i},{t},1111111111,0.5,-0.5\n"));
    }
    fs::write(path, text).unwrap();
}

fn label_with(events: &str) -> (Output, String) {
    let tmp = tempfile::tempdir().unwrap();
    let (s, e, out) = (
        tmp.path().join("samples.csv"),
        tmp.path().join("events.csv"),
        tmp.path().join("labels.csv"),
    );
    write_samples(
        &s,
        &[
            "2021-10-26T00:00:00Z",
            "2021-10-29T00:00:00Z",
            "2021-11-01T00:00:00Z",
        ],
    );
    fs::write(&e, events).unwrap();
    let o = flare(&[
        "label",
        "--events",
        p(&e),
        "--samples",
        p(&s),
        "--out",
        p(&out),
    ]);
    let labels = fs::read_to_string(&out).unwrap_or_default();
    (o, labels)
}

#[test]
fn label_empty_events_gives_all_quiet() {
    let (o, labels) = label_with("peak_time,class\n");
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(labels, "id,label\ns0,O\ns1,O\ns2,O\n");
}

#[test]
fn label_event_63_hours_later_is_x() {
    let (o, labels) = label_with("peak_time,class\n2021-10-28T15:00:00Z,X\n");
    assert_eq!(code(&o), 0);
    assert_eq!(labels, "id,label\ns0,X\ns1,O\ns2,O\n");
}

#[test]
fn label_window_is_open_at_the_issue_time() {
    // an event exactly at s1's issue time belongs to s0's window only
    let (_, labels) =
        label_with("peak_time,class\n2021-10-29T00:00:00Z,M\n2021-11-01T01:00:00Z,C\n");
    assert_eq!(labels, "id,label\ns0,M\ns1,O\ns2,C\n");
}

#[test]
fn label_malformed_row_names_the_line() {
    let (o, _) = label_with("peak_time,class\n2021-10-27T00:00:00Z,C\nnot-a-time,X\n");
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("line 3"), "{}", stderr(&o));
}

fn write_pairs(dir: &Path, pairs: &[(usize, usize)]) -> (PathBuf, PathBuf) {
    let (preds, labels) = (dir.join("preds.csv"), dir.join("labels.csv"));
    let mut pt = String::from("id,class\n");
    let mut lt = String::from("id,label\n");
    for (i, (obs, pred)) in pairs.iter().enumerate() {
        pt.push_str(&format!("r{i},{}\n", CLASSES[*pred]));
        lt.push_str(&format!("r{i},{}\n", CLASSES[*obs]));
    }
    fs::write(&preds, pt).unwrap();
    fs::write(&labels, lt).unwrap();
    (preds, labels)
}

fn eval(dir: &Path, preds: &Path, labels: &Path) -> Output {
    flare(&[
        "eval",
        "--preds",
        p(preds),
        "--labels",
        p(labels),
        "--out-dir",
        p(dir),
    ])
}

#[test]
fn eval_perfect_predictions() {
    let tmp = tempfile::tempdir().unwrap();
    let pairs: Vec<_> = (0..40).map(|i| (i % 4, i % 4)).collect();
    let (preds, labels) = write_pairs(tmp.path(), &pairs);
    let o = eval(tmp.path(), &preds, &labels);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let csv = tmp.path().join("report.csv");
    assert!((csv_metric(&csv, "gmgs").parse::<f64>().unwrap() - 1.0).abs() < 1e-12);
    assert_eq!(csv_metric(&csv, "tss_ge_m").parse::<f64>().unwrap(), 1.0);
    assert_eq!(csv_metric(&csv, "bss_ge_m"), "n/a");
    assert!(tmp.path().join("report.txt").exists());
    assert!(tmp.path().join("eval.config").exists());
    assert!(String::from_utf8_lossy(&o.stdout).contains("GMGS"));
}

#[test]
fn eval_all_quiet_predictions_score_zero() {
    let tmp = tempfile::tempdir().unwrap();
    let pairs: Vec<_> = (0..100).map(|i| ([0, 0, 1, 2, 3][i % 5], 0)).collect();
    let (preds, labels) = write_pairs(tmp.path(), &pairs);
    assert_eq!(code(&eval(tmp.path(), &preds, &labels)), 0);
    let gmgs: f64 = csv_metric(&tmp.path().join("report.csv"), "gmgs")
        .parse()
        .unwrap();
    assert!(gmgs.abs() <= 1e-10, "{gmgs}");
}

#[test]
fn eval_reference_pairs_reproduce_library_influence() {
    let tmp = tempfile::tempdir().unwrap();
    let mut pairs = Vec::new();
    for (i, row) in REFERENCE_COUNTS.iter().enumerate() {
        for (j, &n) in row.iter().enumerate() {
            pairs.extend(std::iter::repeat_n((i, j), n as usize));
        }
    }
    let (preds, labels) = write_pairs(tmp.path(), &pairs);
    let o = eval(tmp.path(), &preds, &labels);
    assert_eq!(code(&o), 0);
    let csv = tmp.path().join("report.csv");
    assert_eq!(csv_metric(&csv, "n"), "8306");
    assert_eq!(csv_metric(&csv, "cm_C_O"), "807");
    let tss: f64 = csv_metric(&csv, "tss_ge_m").parse().unwrap();
    assert!((tss - (192.0 / 495.0 - 449.0 / 7811.0)).abs() < 1e-12);

    let cm = flare_core::ConfusionMatrix::from_counts(REFERENCE_COUNTS).unwrap();
    let s = flare_core::gerrity_matrix(&cm.row_climatology()).unwrap();
    let expected = flare_core::gmgs_influence(&cm, &s);
    let text = fs::read_to_string(&csv).unwrap();
    let rows: Vec<&str> = text
        .lines()
        .filter(|l| l.starts_with("influence_"))
        .collect();
    assert_eq!(rows.len(), 5);
    for (row, e) in rows.iter().zip(&expected) {
        assert_eq!(
            *row,
            format!("influence_{}_{},{}", e.observed, e.predicted, e.influence)
        );
    }
}

#[test]
fn eval_probabilistic_predictions_include_bss() {
    let tmp = tempfile::tempdir().unwrap();
    let preds = tmp.path().join("preds.csv");
    let labels = tmp.path().join("labels.csv");
    fs::write(&preds, "id,p_O,p_C,p_M,p_X\na,0.7,0.2,0.05,0.05\nb,0.1,0.2,0.6,0.1\nc,0.1,0.1,0.2,0.6\nd,0.2,0.5,0.2,0.1\n").unwrap();
    fs::write(&labels, "id,label\nd,C\nc,X\nb,M\na,O\n").unwrap();
    let o = eval(tmp.path(), &preds, &labels);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let bss: f64 = csv_metric(&tmp.path().join("report.csv"), "bss_ge_m")
        .parse()
        .unwrap();
    assert!(bss > 0.0 && bss <= 1.0);
}

#[test]
fn eval_reports_first_mismatched_id() {
    let tmp = tempfile::tempdir().unwrap();
    let preds = tmp.path().join("preds.csv");
    let labels = tmp.path().join("labels.csv");
    fs::write(&preds, "id,class\na,O\nzz,C\nb,M\n").unwrap();
    fs::write(&labels, "id,label\na,O\nb,M\n").unwrap();
    let o = eval(tmp.path(), &preds, &labels);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("\"zz\""), "{}", stderr(&o));

    fs::write(&preds, "id,class\na,O\n").unwrap();
    let o = eval(tmp.path(), &preds, &labels);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("\"b\""), "{}", stderr(&o));

    let o = flare(&[
        "eval",
        "--preds",
        p(&preds),
        "--labels",
        p(&labels),
        "--climatology",
        "0.5,0.6,0,0",
    ]);
    assert_eq!(code(&o), 1);
}

fn train(data: &Path, out: &Path, extra: &[&str], env: &[(&str, &str)]) -> Output {
    let mut args = vec!["train", "--data-dir", p(data), "--out-dir", p(out)];
    args.extend_from_slice(extra);
    flare_env(&args, env)
}

const QUICK: [&str; 10] = [
    "--set",
    "epochs=3",
    "--set",
    "hidden_widths=8",
    "--set",
    "fold_count=1",
    "--set",
    "learning_rate=0.002",
    "--set",
    "warmup_epochs=1",
];

#[test]
fn train_is_reproducible_and_echoes_its_config() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    gen(&data, "800", "1");
    let (a, b, c) = (
        tmp.path().join("a"),
        tmp.path().join("b"),
        tmp.path().join("c"),
    );
    let o = train(&data, &a, &QUICK, &[]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(code(&train(&data, &b, &QUICK, &[])), 0);
    for f in [
        "history.csv",
        "checkpoint.txt",
        "test_report.csv",
        "train.config",
    ] {
        assert_eq!(
            fs::read(a.join(f)).unwrap(),
            fs::read(b.join(f)).unwrap(),
            "{f}"
        );
    }
    // the echoed config is a valid input reproducing the run
    let echo = a.join("train.config");
    assert_eq!(code(&train(&data, &c, &["--config", p(&echo)], &[])), 0);
    assert_eq!(
        fs::read(a.join("history.csv")).unwrap(),
        fs::read(c.join("history.csv")).unwrap()
    );
    let history = fs::read_to_string(a.join("history.csv")).unwrap();
    assert_eq!(history.lines().count(), 4);
    assert!(fs::read_to_string(a.join("checkpoint.txt"))
        .unwrap()
        .starts_with("flare-checkpoint v1\n"));
}

#[test]
fn train_full_warmup_has_zero_influence_columns() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    gen(&data, "600", "2");
    let out = tmp.path().join("run");
    let mut args = QUICK.to_vec();
    args.extend(["--set", "warmup_epochs=3"]);
    let o = train(&data, &out, &args, &[]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let history = fs::read_to_string(out.join("history.csv")).unwrap();
    for line in history.lines().skip(1) {
        let cols: Vec<&str> = line.split(',').collect();
        assert_eq!((cols[2], cols[4]), ("0", "0"), "{line}");
    }
}

#[test]
fn train_environment_overrides_and_errors() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    gen(&data, "600", "3");
    let out = tmp.path().join("env");
    let o = train(&data, &out, &QUICK[2..], &[("FLARE_EPOCHS", "2")]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(
        fs::read_to_string(out.join("history.csv"))
            .unwrap()
            .lines()
            .count(),
        3
    );
    // flags win over the environment
    let o = train(&data, &out, &QUICK, &[("FLARE_EPOCHS", "2")]);
    assert_eq!(code(&o), 0);
    assert_eq!(
        fs::read_to_string(out.join("history.csv"))
            .unwrap()
            .lines()
            .count(),
        4
    );

    assert_eq!(
        code(&train(&data, &out, &QUICK, &[("FLARE_BOGUS", "1")])),
        1
    );
    let bad = tmp.path().join("bad.conf");
    fs::write(&bad, "epochs = 2\nlerning_rate = 1\n").unwrap();
    let o = train(&data, &out, &["--config", p(&bad)], &[]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("lerning_rate"));
    assert_eq!(
        code(&train(&tmp.path().join("missing"), &out, &QUICK, &[])),
        2
    );

    // too few samples for every class to appear in each part
    let tiny = tmp.path().join("tiny");
    gen(&tiny, "12", "4");
    let o = train(&tiny, &out, &QUICK, &[]);
    assert_ne!(code(&o), 0);
    assert!(!stderr(&o).is_empty());

    let mut args = QUICK.to_vec();
    args.extend(["--set", "learning_rate=1e300"]);
    assert_eq!(code(&train(&data, &out, &args, &[])), 3);
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    v[v.len() / 2]
}

fn val_gmgs(dir: &Path) -> f64 {
    fs::read_to_string(dir.join("checkpoint.txt"))
        .unwrap()
        .lines()
        .find_map(|l| l.strip_prefix("val_gmgs "))
        .unwrap()
        .parse()
        .unwrap()
}

#[test]
fn paired_flare_and_ce_runs() {
    let tmp = tempfile::tempdir().unwrap();
    let conf = fixture("paired.conf");
    let (mut flare_scores, mut ce_scores) = (Vec::new(), Vec::new());
    for seed in ["1", "2", "3", "4", "5"] {
        let data = tmp.path().join(format!("data{seed}"));
        gen(&data, "3000", seed);
        for (loss, acc) in [("flare", &mut flare_scores), ("ce", &mut ce_scores)] {
            let out = tmp.path().join(format!("{loss}{seed}"));
            let o = train(
                &data,
                &out,
                &[
                    "--config",
                    p(&conf),
                    "--set",
                    &format!("loss={loss}"),
                    "--set",
                    &format!("seed={seed}"),
                ],
                &[],
            );
            assert_eq!(code(&o), 0, "{}", stderr(&o));
            acc.push(val_gmgs(&out));
        }
    }
    assert!(
        median(flare_scores.clone()) >= median(ce_scores.clone()),
        "flare {flare_scores:?} ce {ce_scores:?}"
    );
}

#[test]
fn gradcheck_passes_and_is_deterministic() {
    let o = flare(&["gradcheck"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stdout));
    let a = flare(&["gradcheck", "--trials", "1", "--seed", "0"]);
    let b = flare(&["gradcheck", "--trials", "1", "--seed", "0"]);
    assert_eq!(code(&a), 0);
    assert_eq!(a.stdout, b.stdout);
}

#[test]
fn gradcheck_detects_a_corrupted_gradient() {
    let o = flare(&["gradcheck", "--trials", "3", "--corrupt-gradient", "1e-3"]);
    assert_ne!(code(&o), 0);
    assert!(String::from_utf8_lossy(&o.stdout).contains("FAIL"));
    assert_eq!(code(&flare(&["gradcheck", "--trials", "0"])), 1);
}
