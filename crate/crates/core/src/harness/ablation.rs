//! Paired OT-on / OT-off runs over several seeds.

use std::fmt::Write as _;

use crate::error::{Error, Result};

use super::config::TrainConfig;
use super::train::{run_training_on, RunResult};
use super::world::{Dataset, WorldConfig};

#[derive(Clone, Debug, PartialEq)]
pub struct SeedResult {
    pub seed: u64,
    pub miou_ot_on: f64,
    pub miou_ot_off: f64,
    pub rare_iou_ot_on: Option<f64>,
    pub rare_iou_ot_off: Option<f64>,
}

impl SeedResult {
    pub fn delta(&self) -> f64 {
        self.miou_ot_on - self.miou_ot_off
    }

    pub fn rare_delta(&self) -> Option<f64> {
        Some(self.rare_iou_ot_on? - self.rare_iou_ot_off?)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AblationReport {
    pub rows: Vec<SeedResult>,
}

const HEADER: &str = "seed,miou_ot_on,miou_ot_off,delta,rare_iou_ot_on,rare_iou_ot_off,rare_delta";

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), |v| v.to_string())
}

impl AblationReport {
    pub fn mean_delta(&self) -> f64 {
        if self.rows.is_empty() {
            return 0.0;
        }
        self.rows.iter().map(SeedResult::delta).sum::<f64>() / self.rows.len() as f64
    }

    pub fn mean_miou(&self) -> (f64, f64) {
        let n = self.rows.len().max(1) as f64;
        (
            self.rows.iter().map(|r| r.miou_ot_on).sum::<f64>() / n,
            self.rows.iter().map(|r| r.miou_ot_off).sum::<f64>() / n,
        )
    }

    /// Seeds where the rare-class IoU improved with transport.
    pub fn rare_improved(&self) -> usize {
        self.rows.iter().filter(|r| r.rare_delta().is_some_and(|d| d > 0.0)).count()
    }

    pub fn to_csv(&self) -> String {
        let mut s = format!("{HEADER}\n");
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{}",
                r.seed,
                r.miou_ot_on,
                r.miou_ot_off,
                r.delta(),
                opt(r.rare_iou_ot_on),
                opt(r.rare_iou_ot_off),
                opt(r.rare_delta())
            );
        }
        s
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        if lines.next() != Some(HEADER) {
            return Err(Error::parse(0, "missing ablation header"));
        }
        let mut offset = HEADER.len() + 1;
        let mut rows = Vec::new();
        for line in lines {
            let f: Vec<&str> = line.split(',').collect();
            let bad = |what: &str| Error::parse(offset, format!("bad {what} in {line:?}"));
            if f.len() != 7 {
                return Err(bad("field count"));
            }
            let num = |s: &str, what: &str| s.parse::<f64>().map_err(|_| bad(what));
            let optional = |s: &str, what: &str| if s == "NA" { Ok(None) } else { num(s, what).map(Some) };
            rows.push(SeedResult {
                seed: f[0].parse().map_err(|_| bad("seed"))?,
                miou_ot_on: num(f[1], "miou_ot_on")?,
                miou_ot_off: num(f[2], "miou_ot_off")?,
                rare_iou_ot_on: optional(f[4], "rare_iou_ot_on")?,
                rare_iou_ot_off: optional(f[5], "rare_iou_ot_off")?,
            });
            offset += line.len() + 1;
        }
        Ok(Self { rows })
    }

    pub fn summary(&self) -> String {
        let (on, off) = self.mean_miou();
        format!(
            "seeds: {}\nmean miou ot_on: {on:.6}\nmean miou ot_off: {off:.6}\nmean paired delta: {:.6}\nrare class improved: {}/{}\n",
            self.rows.len(),
            self.mean_delta(),
            self.rare_improved(),
            self.rows.len()
        )
    }
}

/// Both runs of one seed, OT on first.
#[derive(Clone, Debug)]
pub struct PairedRuns {
    pub seed: u64,
    pub ot_on: RunResult,
    pub ot_off: RunResult,
}

/// Trains matched OT-on / OT-off runs (same world, same augmentation
/// streams) for every seed.
pub fn run_ablation(cfg: &TrainConfig, world: &WorldConfig, seeds: &[u64]) -> Result<(AblationReport, Vec<PairedRuns>)> {
    let mut rows = Vec::new();
    let mut runs = Vec::new();
    let rare = world.rare_class();
    for &seed in seeds {
        let data = Dataset::generate(world, seed)?;
        let on = run_training_on(&TrainConfig { seed, ot_enabled: true, ..cfg.clone() }, &data)?;
        let off = run_training_on(&TrainConfig { seed, ot_enabled: false, ..cfg.clone() }, &data)?;
        rows.push(SeedResult {
            seed,
            miou_ot_on: on.iou.mean,
            miou_ot_off: off.iou.mean,
            rare_iou_ot_on: on.iou.per_class[rare],
            rare_iou_ot_off: off.iou.per_class[rare],
        });
        runs.push(PairedRuns { seed, ot_on: on, ot_off: off });
    }
    Ok((AblationReport { rows }, runs))
}
