//! Run configuration: `key = value` lines with `#` comments, overridden by
//! `FLARE_<KEY>` environment variables and then by `--set key=value` flags.

use std::path::Path;

use flare_core::data::io::{format_timestamp, parse_timestamp};
use flare_core::data::{SplitSpec, DEFAULT_HORIZON_HOURS};
use flare_core::trainer::{LossKind, TrainConfig};
use flare_core::{CycleConfig, Execution, IbCeMode};

use crate::error::{CliError, CliResult};

pub const ENV_PREFIX: &str = "FLARE_";

/// Every recognized key, in the order they are echoed.
pub const KEYS: &[&str] = &[
    "epochs",
    "batch_size",
    "learning_rate",
    "weight_decay",
    "beta1",
    "beta2",
    "adam_eps",
    "lambda_bss",
    "warmup_epochs",
    "seed",
    "hidden_widths",
    "use_cycle_embedding",
    "loss",
    "ib_ce_mode",
    "verify_gradients",
    "execution",
    "fold_count",
    "train_ratio",
    "val_ratio",
    "test_ratio",
    "fold",
    "horizon_hours",
    "t_base",
    "period_hours",
];

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub train: TrainConfig,
    pub split: SplitSpec,
    /// Zero-based fold to train on; `None` selects the last fold.
    pub fold: Option<usize>,
    pub horizon_hours: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            train: TrainConfig::default(),
            split: SplitSpec::default(),
            fold: None,
            horizon_hours: DEFAULT_HORIZON_HOURS,
        }
    }
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> CliResult<T> {
    value
        .parse()
        .map_err(|_| CliError::Usage(format!("invalid value {value:?} for {key}")))
}

fn parse_bool(key: &str, value: &str) -> CliResult<bool> {
    match value {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(CliError::Usage(format!(
            "invalid value {value:?} for {key}"
        ))),
    }
}

/// Splits config text into `(line, key, value)` triples.
pub fn parse_lines(text: &str, origin: &str) -> CliResult<Vec<(usize, String, String)>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| CliError::Usage(format!("{origin}:{}: expected key = value", i + 1)))?;
        out.push((i + 1, k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}

impl RunConfig {
    pub fn set(&mut self, key: &str, value: &str) -> CliResult<()> {
        let t = &mut self.train;
        match key {
            "epochs" => t.epochs = parse(key, value)?,
            "batch_size" => t.batch_size = parse(key, value)?,
            "learning_rate" => t.optimizer.learning_rate = parse(key, value)?,
            "weight_decay" => t.optimizer.weight_decay = parse(key, value)?,
            "beta1" => t.optimizer.beta1 = parse(key, value)?,
            "beta2" => t.optimizer.beta2 = parse(key, value)?,
            "adam_eps" => t.optimizer.eps = parse(key, value)?,
            "lambda_bss" => t.lambda_bss = parse(key, value)?,
            "warmup_epochs" => t.warmup_epochs = parse(key, value)?,
            "seed" => t.seed = parse(key, value)?,
            "hidden_widths" => {
                t.hidden_widths = value
                    .split(',')
                    .map(|w| parse(key, w.trim()))
                    .collect::<CliResult<_>>()?
            }
            "use_cycle_embedding" => t.use_cycle_embedding = parse_bool(key, value)?,
            "loss" => {
                t.loss = match value {
                    "flare" => LossKind::Flare,
                    "ce" => LossKind::CrossEntropy,
                    _ => {
                        return Err(CliError::Usage(format!(
                            "loss must be flare or ce, got {value:?}"
                        )))
                    }
                }
            }
            "ib_ce_mode" => {
                t.ib_ce_mode = match value {
                    "residual" => IbCeMode::Residual,
                    "probability_norm" => IbCeMode::ProbabilityNorm,
                    _ => {
                        return Err(CliError::Usage(format!(
                            "ib_ce_mode must be residual or probability_norm, got {value:?}"
                        )))
                    }
                }
            }
            "verify_gradients" => t.verify_gradients = parse_bool(key, value)?,
            "execution" => {
                t.execution = match value {
                    "parallel" => Execution::Parallel,
                    "sequential" => Execution::Sequential,
                    _ => {
                        return Err(CliError::Usage(format!(
                            "execution must be parallel or sequential, got {value:?}"
                        )))
                    }
                }
            }
            "fold_count" => self.split.fold_count = parse(key, value)?,
            "train_ratio" => self.split.train_ratio = parse(key, value)?,
            "val_ratio" => self.split.val_ratio = parse(key, value)?,
            "test_ratio" => self.split.test_ratio = parse(key, value)?,
            "fold" => {
                self.fold = match value {
                    "last" => None,
                    v => Some(parse(key, v)?),
                }
            }
            "horizon_hours" => self.horizon_hours = parse(key, value)?,
            "t_base" => {
                let base = parse_timestamp(value)
                    .map_err(|e| CliError::Usage(format!("invalid t_base: {e}")))?;
                t.cycle = CycleConfig::new(base, t.cycle.period_hours())?;
            }
            "period_hours" => {
                t.cycle = CycleConfig::new(t.cycle.t_base(), parse(key, value)?)?;
            }
            _ => return Err(CliError::Usage(format!("unknown config key {key:?}"))),
        }
        Ok(())
    }

    fn apply_text(&mut self, text: &str, origin: &str) -> CliResult<()> {
        for (line, key, value) in parse_lines(text, origin)? {
            self.set(&key, &value).map_err(|e| match e {
                CliError::Usage(m) => CliError::Usage(format!("{origin}:{line}: {m}")),
                other => other,
            })?;
        }
        Ok(())
    }

    /// Resolves defaults, then the file, then environment, then overrides.
    pub fn resolve<I>(file: Option<&Path>, env: I, overrides: &[String]) -> CliResult<Self>
    where
        I: IntoIterator<Item = (String, String)>,
    {
        let mut cfg = RunConfig::default();
        if let Some(path) = file {
            let text =
                std::fs::read_to_string(path).map_err(|e| crate::error::io_error(path, e))?;
            cfg.apply_text(&text, &path.display().to_string())?;
        }
        let mut env: Vec<(String, String)> = env
            .into_iter()
            .filter(|(k, _)| k.starts_with(ENV_PREFIX))
            .collect();
        env.sort();
        for (name, value) in env {
            let key = name[ENV_PREFIX.len()..].to_ascii_lowercase();
            cfg.set(&key, value.trim()).map_err(|e| match e {
                CliError::Usage(m) => CliError::Usage(format!("environment {name}: {m}")),
                other => other,
            })?;
        }
        for item in overrides {
            let (k, v) = item
                .split_once('=')
                .ok_or_else(|| CliError::Usage(format!("--set expects key=value, got {item:?}")))?;
            cfg.set(k.trim(), v.trim())?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> CliResult<()> {
        self.train.validate()?;
        self.split.validate()?;
        if let Some(f) = self.fold {
            if f >= self.split.fold_count {
                return Err(CliError::Usage(format!(
                    "fold {f} out of range for fold_count {}",
                    self.split.fold_count
                )));
            }
        }
        if !(self.horizon_hours > 0.0 && self.horizon_hours.is_finite()) {
            return Err(CliError::Usage("horizon_hours must be positive".into()));
        }
        Ok(())
    }

    pub fn fold_index(&self) -> usize {
        self.fold.unwrap_or(self.split.fold_count - 1)
    }

    fn value(&self, key: &str) -> String {
        let t = &self.train;
        match key {
            "epochs" => t.epochs.to_string(),
            "batch_size" => t.batch_size.to_string(),
            "learning_rate" => t.optimizer.learning_rate.to_string(),
            "weight_decay" => t.optimizer.weight_decay.to_string(),
            "beta1" => t.optimizer.beta1.to_string(),
            "beta2" => t.optimizer.beta2.to_string(),
            "adam_eps" => t.optimizer.eps.to_string(),
            "lambda_bss" => t.lambda_bss.to_string(),
            "warmup_epochs" => t.warmup_epochs.to_string(),
            "seed" => t.seed.to_string(),
            "hidden_widths" => t
                .hidden_widths
                .iter()
                .map(usize::to_string)
                .collect::<Vec<_>>()
                .join(","),
            "use_cycle_embedding" => t.use_cycle_embedding.to_string(),
            "loss" => match t.loss {
                LossKind::Flare => "flare".into(),
                LossKind::CrossEntropy => "ce".into(),
            },
            "ib_ce_mode" => match t.ib_ce_mode {
                IbCeMode::Residual => "residual".into(),
                IbCeMode::ProbabilityNorm => "probability_norm".into(),
            },
            "verify_gradients" => t.verify_gradients.to_string(),
            "execution" => match t.execution {
                Execution::Parallel => "parallel".into(),
                Execution::Sequential => "sequential".into(),
            },
            "fold_count" => self.split.fold_count.to_string(),
            "train_ratio" => self.split.train_ratio.to_string(),
            "val_ratio" => self.split.val_ratio.to_string(),
            "test_ratio" => self.split.test_ratio.to_string(),
            "fold" => self.fold.map_or_else(|| "last".into(), |f| f.to_string()),
            "horizon_hours" => self.horizon_hours.to_string(),
            "t_base" => format_timestamp(&t.cycle.t_base()),
            "period_hours" => t.cycle.period_hours().to_string(),
            _ => unreachable!("unknown key {key}"),
        }
    }

    /// Resolved configuration in the same format it is read from.
    pub fn to_text(&self) -> String {
        KEYS.iter()
            .map(|k| format!("{k} = {}\n", self.value(k)))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn none() -> Vec<(String, String)> {
        Vec::new()
    }

    #[test]
    fn resolved_text_round_trips() {
        let mut cfg = RunConfig::default();
        cfg.set("learning_rate", "0.002").unwrap();
        cfg.set("hidden_widths", "8, 4").unwrap();
        cfg.set("loss", "ce").unwrap();
        cfg.set("fold", "1").unwrap();
        let mut back = RunConfig::default();
        back.apply_text(&cfg.to_text(), "echo").unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.to_text(), cfg.to_text());
    }

    #[test]
    fn precedence_is_file_env_flags() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.conf");
        std::fs::write(
            &path,
            "# comment\nepochs = 7\nseed = 1 # trailing\nbatch_size=16\n",
        )
        .unwrap();
        let env = vec![
            ("FLARE_SEED".to_string(), "2".to_string()),
            ("FLARE_BATCH_SIZE".to_string(), "32".to_string()),
            ("HOME".to_string(), "/root".to_string()),
        ];
        let cfg = RunConfig::resolve(Some(&path), env, &["batch_size=8".to_string()]).unwrap();
        assert_eq!(cfg.train.epochs, 7);
        assert_eq!(cfg.train.seed, 2);
        assert_eq!(cfg.train.batch_size, 8);
    }

    #[test]
    fn unknown_keys_are_rejected_with_location() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.conf");
        std::fs::write(&path, "epochs = 3\nlearning_rat = 1\n").unwrap();
        let err = RunConfig::resolve(Some(&path), none(), &[]).unwrap_err();
        assert!(err.to_string().contains(":2:"), "{err}");
        assert_eq!(err.exit_code(), 1);

        let env = vec![("FLARE_NOPE".to_string(), "1".to_string())];
        assert!(RunConfig::resolve(None, env, &[]).is_err());
        assert!(RunConfig::resolve(None, none(), &["nope=1".to_string()]).is_err());
    }

    #[test]
    fn invalid_combinations_are_usage_errors() {
        for bad in [
            "warmup_epochs=30",
            "fold=3",
            "train_ratio=0.9",
            "period_hours=-1",
            "loss=mse",
        ] {
            let err = RunConfig::resolve(None, none(), &[bad.to_string()]).unwrap_err();
            assert_eq!(err.exit_code(), 1, "{bad}: {err}");
        }
    }

    #[test]
    fn every_key_is_settable() {
        let cfg = RunConfig::default();
        for key in KEYS {
            let mut c = cfg.clone();
            c.set(key, &cfg.value(key)).unwrap();
            assert_eq!(c, cfg, "{key}");
        }
    }
}
