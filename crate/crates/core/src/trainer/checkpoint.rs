//! Plain-text checkpoint format.
//!
//! ```text
//! flare-checkpoint v1
//! config_hash <sha-256 hex of the resolved configuration text>
//! epoch <1-based epoch number>
//! val_gmgs <validation GMGS>
//! input_dim <D>
//! hidden <w1,w2,...>
//! params <P>
//! <P lines, one parameter each, shortest round-trip decimal>
//! ```

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use sha2::{Digest, Sha256};

use super::network::{Architecture, Params};
use crate::error::{FlareError, Result};

pub const CHECKPOINT_MAGIC: &str = "flare-checkpoint v1";

pub fn config_hash(config_text: &str) -> String {
    hex::encode(Sha256::digest(config_text.as_bytes()))
}

/// Contents of a checkpoint file.
#[derive(Debug, Clone, PartialEq)]
pub struct SavedCheckpoint {
    pub config_hash: String,
    pub epoch: usize,
    pub val_gmgs: f64,
    pub params: Params,
}

impl SavedCheckpoint {
    pub fn to_text(&self) -> String {
        let arch = self.params.architecture();
        let hidden: Vec<String> = arch.hidden.iter().map(usize::to_string).collect();
        let mut out = String::new();
        let _ = writeln!(out, "{CHECKPOINT_MAGIC}");
        let _ = writeln!(out, "config_hash {}", self.config_hash);
        let _ = writeln!(out, "epoch {}", self.epoch);
        let _ = writeln!(out, "val_gmgs {}", self.val_gmgs);
        let _ = writeln!(out, "input_dim {}", arch.input_dim);
        let _ = writeln!(out, "hidden {}", hidden.join(","));
        let _ = writeln!(out, "params {}", self.params.as_slice().len());
        for v in self.params.as_slice() {
            let _ = writeln!(out, "{v}");
        }
        out
    }

    pub fn parse(text: &str, path: &str) -> Result<Self> {
        let err = |line: usize, message: String| FlareError::Parse {
            path: path.to_string(),
            line: line as u64,
            message,
        };
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
        let mut field = |name: &str| -> Result<(usize, String)> {
            let (n, line) = lines
                .next()
                .ok_or_else(|| err(0, format!("missing {name}")))?;
            if name == "magic" {
                return Ok((n, line.to_string()));
            }
            line.strip_prefix(name)
                .and_then(|rest| rest.strip_prefix(' '))
                .map(|v| (n, v.trim().to_string()))
                .ok_or_else(|| err(n, format!("expected `{name} <value>`")))
        };
        fn num<T: std::str::FromStr>(
            (n, v): (usize, String),
            err: &dyn Fn(usize, String) -> FlareError,
        ) -> Result<T> {
            v.parse()
                .map_err(|_| err(n, format!("invalid number {v:?}")))
        }

        let (n, magic) = field("magic")?;
        if magic != CHECKPOINT_MAGIC {
            return Err(err(n, format!("unsupported checkpoint header {magic:?}")));
        }
        let (_, config_hash) = field("config_hash")?;
        let epoch: usize = num(field("epoch")?, &err)?;
        let val_gmgs: f64 = num(field("val_gmgs")?, &err)?;
        let input_dim: usize = num(field("input_dim")?, &err)?;
        let (hn, hidden) = field("hidden")?;
        let hidden = hidden
            .split(',')
            .map(|w| {
                w.trim()
                    .parse::<usize>()
                    .map_err(|_| err(hn, format!("invalid width {w:?}")))
            })
            .collect::<Result<Vec<_>>>()?;
        let count: usize = num(field("params")?, &err)?;
        let arch = Architecture::new(input_dim, hidden)?;
        let data = lines
            .map(|(n, l)| {
                l.trim()
                    .parse::<f64>()
                    .map_err(|_| err(n, format!("invalid parameter {l:?}")))
            })
            .collect::<Result<Vec<_>>>()?;
        if data.len() != count {
            return Err(err(
                0,
                format!("expected {count} parameters, found {}", data.len()),
            ));
        }
        Ok(Self {
            config_hash,
            epoch,
            val_gmgs,
            params: Params::from_vec(arch, data)?,
        })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_text()).map_err(|source| FlareError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|source| FlareError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&text, &path.display().to_string())
    }
}
