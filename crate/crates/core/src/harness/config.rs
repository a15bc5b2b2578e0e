use std::fmt::Write as _;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Training hyper-parameters, read from `key=value` text.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub beta: f64,
    pub gamma: f64,
    /// Batch gate of the query branch; carried for completeness, the pixel
    /// harness does not use it.
    pub delta: f64,
    pub ema_momentum: f64,
    pub lr0: f64,
    pub total_iters: usize,
    pub poly_power: f64,
    pub batch_labeled: usize,
    pub batch_unlabeled: usize,
    pub cutmix_prob: f64,
    pub seed: u64,
    pub ot_enabled: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            beta: 0.05,
            gamma: 0.95,
            delta: 0.95,
            ema_momentum: 0.99,
            lr0: 2.0,
            total_iters: 2000,
            poly_power: 0.9,
            batch_labeled: 8,
            batch_unlabeled: 8,
            cutmix_prob: 0.5,
            seed: 0,
            ot_enabled: true,
        }
    }
}

pub const CONFIG_KEYS: [&str; 12] = [
    "beta",
    "gamma",
    "delta",
    "ema_momentum",
    "lr0",
    "total_iters",
    "poly_power",
    "batch_labeled",
    "batch_unlabeled",
    "cutmix_prob",
    "seed",
    "ot_enabled",
];

fn value<T: FromStr>(key: &str, raw: &str) -> Result<T> {
    raw.parse().map_err(|_| Error::Config {
        key: key.to_string(),
        message: format!("cannot parse {raw:?}"),
    })
}

fn parse_bool(key: &str, raw: &str) -> Result<bool> {
    match raw {
        "true" | "1" => Ok(true),
        "false" | "0" => Ok(false),
        _ => Err(Error::Config {
            key: key.to_string(),
            message: format!("expected true or false, got {raw:?}"),
        }),
    }
}

impl TrainConfig {
    /// Parses `key=value` lines over the defaults. Blank lines and lines
    /// starting with `#` are skipped; unknown or repeated keys are errors.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        let mut seen = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, raw) = line.split_once('=').ok_or_else(|| Error::Config {
                key: line.to_string(),
                message: format!("line {} is not key=value", lineno + 1),
            })?;
            let (key, raw) = (key.trim(), raw.trim());
            if seen.contains(&key) {
                return Err(Error::Config {
                    key: key.to_string(),
                    message: "given more than once".into(),
                });
            }
            seen.push(key);
            match key {
                "beta" => cfg.beta = value(key, raw)?,
                "gamma" => cfg.gamma = value(key, raw)?,
                "delta" => cfg.delta = value(key, raw)?,
                "ema_momentum" => cfg.ema_momentum = value(key, raw)?,
                "lr0" => cfg.lr0 = value(key, raw)?,
                "total_iters" => cfg.total_iters = value(key, raw)?,
                "poly_power" => cfg.poly_power = value(key, raw)?,
                "batch_labeled" => cfg.batch_labeled = value(key, raw)?,
                "batch_unlabeled" => cfg.batch_unlabeled = value(key, raw)?,
                "cutmix_prob" => cfg.cutmix_prob = value(key, raw)?,
                "seed" => cfg.seed = value(key, raw)?,
                "ot_enabled" => cfg.ot_enabled = parse_bool(key, raw)?,
                _ => {
                    return Err(Error::Config {
                        key: key.to_string(),
                        message: "unknown key".into(),
                    })
                }
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |key: &str, message: String| {
            Err(Error::Config {
                key: key.to_string(),
                message,
            })
        };
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return bad("beta", format!("{} is not a positive number", self.beta));
        }
        for (key, v) in [
            ("gamma", self.gamma),
            ("delta", self.delta),
            ("cutmix_prob", self.cutmix_prob),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return bad(key, format!("{v} outside [0, 1]"));
            }
        }
        if !(0.0..1.0).contains(&self.ema_momentum) {
            return bad("ema_momentum", format!("{} outside [0, 1)", self.ema_momentum));
        }
        if !(self.lr0 >= 0.0 && self.lr0.is_finite()) {
            return bad("lr0", format!("{} is not a nonnegative number", self.lr0));
        }
        if !(self.poly_power >= 0.0 && self.poly_power.is_finite()) {
            return bad("poly_power", format!("{} is not a nonnegative number", self.poly_power));
        }
        if self.batch_labeled == 0 {
            return bad("batch_labeled", "must be at least 1".into());
        }
        Ok(())
    }

    /// Canonical `key=value` text; parses back to the same config.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "beta={}", self.beta);
        let _ = writeln!(s, "gamma={}", self.gamma);
        let _ = writeln!(s, "delta={}", self.delta);
        let _ = writeln!(s, "ema_momentum={}", self.ema_momentum);
        let _ = writeln!(s, "lr0={}", self.lr0);
        let _ = writeln!(s, "total_iters={}", self.total_iters);
        let _ = writeln!(s, "poly_power={}", self.poly_power);
        let _ = writeln!(s, "batch_labeled={}", self.batch_labeled);
        let _ = writeln!(s, "batch_unlabeled={}", self.batch_unlabeled);
        let _ = writeln!(s, "cutmix_prob={}", self.cutmix_prob);
        let _ = writeln!(s, "seed={}", self.seed);
        let _ = writeln!(s, "ot_enabled={}", self.ot_enabled);
        s
    }
}
