use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use flare_core::data::io::{
    read_events, read_labels, read_predictions, read_samples, write_events, write_labels,
    write_samples, Prediction,
};
use flare_core::data::{
    apply_channel_policy, gen_synthetic, split_timeseries, synthetic_events, EventIndex,
    SynthConfig,
};
use flare_core::gradcheck::run_gradcheck;
use flare_core::trainer::{
    config_hash, history_csv, predict, train, SavedCheckpoint, TrainOutcome,
};
use flare_core::{Climatology, FlareClass, MetricReport, ProbDist, Sample};

use crate::args::{EvalArgs, GenDataArgs, GradcheckArgs, LabelArgs, TrainArgs};
use crate::config::RunConfig;
use crate::error::{io_error, CliError, CliResult};

/// Number of GMGS-Influence rows shown in reports.
pub const TOP_INFLUENCE: usize = 5;

fn write_file(path: &Path, contents: &str) -> CliResult<()> {
    fs::write(path, contents).map_err(|e| io_error(path, e))
}

fn ensure_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|e| io_error(dir, e))
}

fn parent_dir(path: &Path) -> PathBuf {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    }
}

/// Writes `<command>.config` with the given key/value pairs.
fn echo_config(dir: &Path, command: &str, body: &str) -> CliResult<()> {
    write_file(&dir.join(format!("{command}.config")), body)
}

fn emit(out: &mut dyn Write, text: &str) -> CliResult<()> {
    out.write_all(text.as_bytes())
        .map_err(|e| CliError::Data(format!("stdout: {e}")))
}

pub fn gen_data(args: &GenDataArgs, out: &mut dyn Write) -> CliResult<()> {
    let cfg = SynthConfig {
        n: args.n as usize,
        class_probs: args.class_probs,
        seed: args.seed,
        feature_dim: args.feature_dim as usize,
        ..SynthConfig::default()
    };
    let samples = gen_synthetic(&cfg)?;
    let events = synthetic_events(&samples, cfg.spacing_hours, cfg.seed)?;
    ensure_dir(&args.out_dir)?;
    write_samples(&args.out_dir.join("samples.csv"), &samples)?;
    write_events(&args.out_dir.join("events.csv"), &events)?;
    let probs: Vec<String> = args.class_probs.iter().map(f64::to_string).collect();
    echo_config(
        &args.out_dir,
        "gen-data",
        &format!(
            "n = {}\nclass_probs = {}\nseed = {}\nfeature_dim = {}\n",
            args.n,
            probs.join(","),
            args.seed,
            args.feature_dim
        ),
    )?;
    emit(
        out,
        &format!(
            "wrote {} samples and {} events to {}\n",
            samples.len(),
            events.len(),
            args.out_dir.display()
        ),
    )
}

pub fn label(args: &LabelArgs, out: &mut dyn Write) -> CliResult<()> {
    let samples = read_samples(&args.samples)?;
    let index = EventIndex::new(read_events(&args.events)?);
    let labels: Vec<(String, FlareClass)> = samples
        .iter()
        .map(|s| (s.id.clone(), index.label(s.timestamp, args.horizon_hours)))
        .collect();
    let dir = parent_dir(&args.out);
    ensure_dir(&dir)?;
    write_labels(&args.out, &labels)?;
    echo_config(
        &dir,
        "label",
        &format!(
            "events = {}\nsamples = {}\nhorizon_hours = {}\nout = {}\n",
            args.events.display(),
            args.samples.display(),
            args.horizon_hours,
            args.out.display()
        ),
    )?;
    let mut counts = [0usize; 4];
    for (_, c) in &labels {
        counts[c.rank()] += 1;
    }
    emit(
        out,
        &format!(
            "labeled {} samples: O={} C={} M={} X={}\n",
            labels.len(),
            counts[0],
            counts[1],
            counts[2],
            counts[3]
        ),
    )
}

/// Pairs predictions with labels by id, failing on the first id present in
/// only one of the files.
fn join_by_id(
    preds: Vec<(String, Prediction)>,
    labels: Vec<(String, FlareClass)>,
) -> CliResult<Vec<(Prediction, FlareClass)>> {
    let mut by_id: HashMap<String, FlareClass> = HashMap::with_capacity(labels.len());
    for (id, c) in &labels {
        if by_id.insert(id.clone(), *c).is_some() {
            return Err(CliError::Data(format!("duplicate label id {id:?}")));
        }
    }
    let mut seen = HashMap::with_capacity(preds.len());
    let mut pairs = Vec::with_capacity(preds.len());
    for (id, p) in preds {
        let Some(obs) = by_id.get(&id) else {
            return Err(CliError::Data(format!("prediction id {id:?} has no label")));
        };
        if seen.insert(id.clone(), ()).is_some() {
            return Err(CliError::Data(format!("duplicate prediction id {id:?}")));
        }
        pairs.push((p, *obs));
    }
    if let Some((id, _)) = labels.iter().find(|(id, _)| !seen.contains_key(id)) {
        return Err(CliError::Data(format!("label id {id:?} has no prediction")));
    }
    Ok(pairs)
}

fn report_for(pairs: &[(Prediction, FlareClass)], clim: &Climatology) -> CliResult<MetricReport> {
    let probabilistic: Option<Vec<(ProbDist, FlareClass)>> = pairs
        .iter()
        .map(|(p, o)| match p {
            Prediction::Probabilistic(d) => Some((*d, *o)),
            Prediction::Hard(_) => None,
        })
        .collect();
    Ok(match probabilistic {
        Some(f) => MetricReport::from_probabilistic(&f, clim)?,
        None => {
            let hard: Vec<_> = pairs.iter().map(|(p, o)| (*o, p.class())).collect();
            MetricReport::from_hard(&hard, clim)?
        }
    })
}

fn climatology_text(clim: &Climatology) -> String {
    match clim {
        Climatology::FromMatrixRows => "rows".into(),
        Climatology::Explicit(p) => p.iter().map(f64::to_string).collect::<Vec<_>>().join(","),
    }
}

pub fn eval(args: &EvalArgs, out: &mut dyn Write) -> CliResult<()> {
    let preds = read_predictions(&args.preds)?;
    let labels = read_labels(&args.labels)?;
    let pairs = join_by_id(preds, labels)?;
    let report = report_for(&pairs, &args.climatology)?;
    let dir = args
        .out_dir
        .clone()
        .unwrap_or_else(|| parent_dir(&args.preds));
    ensure_dir(&dir)?;
    write_file(&dir.join("report.txt"), &report.to_text(TOP_INFLUENCE))?;
    write_file(&dir.join("report.csv"), &report.to_csv(TOP_INFLUENCE))?;
    echo_config(
        &dir,
        "eval",
        &format!(
            "preds = {}\nlabels = {}\nclimatology = {}\n",
            args.preds.display(),
            args.labels.display(),
            climatology_text(&args.climatology)
        ),
    )?;
    emit(out, &report.to_text(TOP_INFLUENCE))
}

/// Loads samples and attaches labels from `labels.csv` when present,
/// otherwise from `events.csv`.
fn load_labeled(data_dir: &Path, horizon_hours: f64) -> CliResult<Vec<Sample>> {
    let mut samples = read_samples(&data_dir.join("samples.csv"))?;
    let labels_path = data_dir.join("labels.csv");
    if labels_path.exists() {
        let by_id: HashMap<String, FlareClass> = read_labels(&labels_path)?.into_iter().collect();
        for s in &mut samples {
            let c = by_id
                .get(&s.id)
                .ok_or_else(|| CliError::Data(format!("sample id {:?} has no label", s.id)))?;
            s.label = Some(*c);
        }
    } else {
        let index = EventIndex::new(read_events(&data_dir.join("events.csv"))?);
        for s in &mut samples {
            s.label = Some(index.label(s.timestamp, horizon_hours));
        }
    }
    Ok(samples)
}

pub fn train_cmd(
    args: &TrainArgs,
    env: Vec<(String, String)>,
    out: &mut dyn Write,
) -> CliResult<()> {
    let cfg = RunConfig::resolve(args.config.as_deref(), env, &args.overrides)?;
    let config_text = cfg.to_text();

    let samples = load_labeled(&args.data_dir, cfg.horizon_hours)?;
    let policy = apply_channel_policy(samples);
    let mut samples = policy.kept;
    samples.sort_by_key(|s| s.timestamp);
    let folds = split_timeseries(&samples, &cfg.split)?;
    let fold = folds[cfg.fold_index()].clone();

    let mut log = String::new();
    let _ = writeln!(
        log,
        "samples {} (excluded {}), fold {}: train {} validation {} test {}",
        samples.len(),
        policy.excluded,
        cfg.fold_index(),
        fold.train.len(),
        fold.validation.len(),
        fold.test.len()
    );
    emit(out, &log)?;

    let TrainOutcome {
        best,
        history,
        gradient_check,
    } = train(&samples, &fold, &cfg.train)?;

    let mut log = String::new();
    if let Some(err) = gradient_check {
        let _ = writeln!(log, "gradient check: max relative error {err:.3e}");
    }
    for r in &history {
        let _ = writeln!(
            log,
            "epoch {:>3}  loss {:.5}  ib {}  val_gmgs {:.4}",
            r.epoch,
            r.loss.total,
            if r.loss.ib_active { "on " } else { "off" },
            r.validation.gmgs
        );
    }
    let _ = writeln!(
        log,
        "best epoch {} (val_gmgs {:.4})",
        best.epoch, best.val_gmgs
    );

    let test = &samples[fold.test.clone()];
    let probs = predict(test, &best.params, &cfg.train)?;
    let forecasts: Vec<(ProbDist, FlareClass)> = probs
        .into_iter()
        .zip(test)
        .map(|(p, s)| (p, s.label.expect("policy keeps labeled samples")))
        .collect();
    let report = MetricReport::from_probabilistic(&forecasts, &Climatology::FromMatrixRows)?;

    let dir = &args.out_dir;
    ensure_dir(dir)?;
    echo_config(dir, "train", &config_text)?;
    write_file(&dir.join("history.csv"), &history_csv(&history))?;
    SavedCheckpoint {
        config_hash: config_hash(&config_text),
        epoch: best.epoch,
        val_gmgs: best.val_gmgs,
        params: best.params,
    }
    .write(&dir.join("checkpoint.txt"))?;
    write_file(&dir.join("test_report.txt"), &report.to_text(TOP_INFLUENCE))?;
    write_file(&dir.join("test_report.csv"), &report.to_csv(TOP_INFLUENCE))?;

    let _ = writeln!(log, "test fold report:");
    log.push_str(&report.to_text(TOP_INFLUENCE));
    emit(out, &log)
}

pub fn gradcheck(args: &GradcheckArgs, out: &mut dyn Write) -> CliResult<()> {
    let report = run_gradcheck(args.seed, args.trials as usize, args.corrupt_gradient);
    emit(out, &report.to_text())?;
    if report.passed() {
        Ok(())
    } else {
        Err(CliError::Numerical("gradient check failed".into()))
    }
}
