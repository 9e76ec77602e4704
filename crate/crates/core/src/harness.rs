//! Batch experiments over simulated sources.
//!
//! A config lists source batteries (family, parameter grid, trial count) and
//! estimators. Each trial draws one sequence and runs every estimator on it.
//! Results are per-trial rows plus MSE/MPE aggregates per
//! `(family, param, estimator)`.
//!
//! Config files are TOML:
//!
//! ```toml
//! base_seed = 2024
//! n_blocks = 1000000      # total blocks per sequence, Q included
//! bits_per_block = 6
//! record_timing = true    # false writes an empty wall_ms column
//!
//! [[sources]]
//! family = "bms"
//! params = [0.1, 0.2, 0.3]
//! trials = 30
//!
//! [[estimators]]
//! kind = "kim"            # compression | coron | kim | collision
//! alpha = 2
//! ci = true
//! # init_blocks = 1000, c = 1.0
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::{RngCore, SeedableRng};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::estimators::{estimate, EstimateOptions, EstimatorKind, EstimatorSpec};
use crate::sources::{sample, true_min_entropy, SourceFamily, SourceRng, SourceSpec, RNG_NAME};
use crate::stats::CorrectiveFactor;

fn default_bits_per_block() -> u32 {
    6
}

fn default_true() -> bool {
    true
}

fn default_report_file() -> PathBuf {
    PathBuf::from("report.csv")
}

fn default_aggregate_file() -> PathBuf {
    PathBuf::from("aggregate.csv")
}

/// One family swept over a parameter grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceBattery {
    pub family: String,
    pub params: Vec<f64>,
    pub trials: usize,
}

/// One estimator column of the experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimatorConfig {
    pub kind: String,
    #[serde(default)]
    pub alpha: Option<f64>,
    #[serde(default)]
    pub init_blocks: Option<usize>,
    #[serde(default = "default_true")]
    pub ci: bool,
    /// Corrective factor override.
    #[serde(default)]
    pub c: Option<f64>,
}

impl EstimatorConfig {
    pub fn new(kind: &str) -> Self {
        Self { kind: kind.to_string(), alpha: None, init_blocks: None, ci: true, c: None }
    }

    pub fn to_spec(&self) -> Result<EstimatorSpec> {
        let kind = match (self.kind.as_str(), self.alpha) {
            ("compression", None) => EstimatorKind::Compression,
            ("coron", None) => EstimatorKind::Coron,
            ("collision", None | Some(2.0)) => EstimatorKind::Collision,
            ("kim", Some(alpha)) => EstimatorKind::Kim { alpha },
            ("kim", None) => return invalid("kim estimator needs alpha"),
            ("compression" | "coron" | "collision", Some(_)) => {
                return invalid(format!("{} takes no alpha", self.kind))
            }
            (other, _) => return invalid(format!("unknown estimator {other:?}")),
        };
        let corrective = self.c.map(CorrectiveFactor::custom).transpose()?;
        Ok(EstimatorSpec {
            kind,
            init_blocks: self.init_blocks,
            options: EstimateOptions { apply_ci: self.ci, corrective, ..EstimateOptions::default() },
        })
    }
}

/// A full experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub base_seed: u64,
    /// Blocks per simulated sequence, initialization blocks included.
    pub n_blocks: usize,
    #[serde(default = "default_bits_per_block")]
    pub bits_per_block: u32,
    #[serde(default = "default_true")]
    pub record_timing: bool,
    /// Run trials on the rayon pool. Results do not depend on it.
    #[serde(default = "default_true")]
    pub parallel: bool,
    #[serde(default = "default_report_file")]
    pub report_file: PathBuf,
    #[serde(default = "default_aggregate_file")]
    pub aggregate_file: PathBuf,
    pub sources: Vec<SourceBattery>,
    pub estimators: Vec<EstimatorConfig>,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_toml(&fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.sources.is_empty() || self.estimators.is_empty() {
            return invalid("config needs at least one source battery and one estimator");
        }
        for battery in &self.sources {
            if battery.trials == 0 {
                return invalid(format!("{}: trials must be at least 1", battery.family));
            }
            if battery.params.is_empty() {
                return invalid(format!("{}: empty parameter grid", battery.family));
            }
            for &p in &battery.params {
                SourceFamily::with_param(&battery.family, p)?.validate(self.bits_per_block)?;
            }
        }
        for est in &self.estimators {
            let spec = est.to_spec()?;
            let q = spec.init_blocks_for(self.bits_per_block);
            if self.n_blocks < q + 2 {
                return invalid(format!(
                    "{}: n_blocks = {} leaves fewer than 2 test blocks after Q = {q}",
                    spec.kind, self.n_blocks
                ));
            }
        }
        Ok(())
    }

    /// Every trial in run order, with its derived seed.
    pub fn trials(&self) -> Result<Vec<SourceSpec>> {
        let mut out = Vec::new();
        for battery in &self.sources {
            for &p in &battery.params {
                let family = SourceFamily::with_param(&battery.family, p)?;
                for _ in 0..battery.trials {
                    let seed = trial_seed(self.base_seed, out.len() as u64);
                    out.push(SourceSpec::new(family, seed, self.n_blocks, self.bits_per_block));
                }
            }
        }
        Ok(out)
    }
}

/// Seed for trial `index`: the first word of stream `index` of the base generator.
pub fn trial_seed(base_seed: u64, index: u64) -> u64 {
    let mut rng = SourceRng::seed_from_u64(base_seed);
    rng.set_stream(index);
    rng.next_u64()
}

/// One estimator applied to one simulated sequence.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialRow {
    pub family: &'static str,
    pub param: f64,
    pub seed: u64,
    pub true_h: f64,
    pub estimator: &'static str,
    pub alpha: Option<f64>,
    #[serde(rename = "K")]
    pub test_blocks: usize,
    pub estimate: f64,
    pub solved: bool,
    pub ci_applied: bool,
    pub wall_ms: Option<f64>,
}

/// Error measures for one `(family, param, estimator)` cell.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Aggregate {
    pub family: String,
    pub param: f64,
    pub estimator: String,
    #[serde(rename = "N")]
    pub n: usize,
    pub mse: f64,
    /// `None` when every row had `h = 0`.
    pub mpe_pct: Option<f64>,
    /// Rows left out of the MPE because `h = 0`.
    pub na_count: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentReport {
    pub rows: Vec<TrialRow>,
    pub aggregates: Vec<Aggregate>,
    pub rng: &'static str,
}

/// Mean squared error `(1/N) sum (h - h_n)^2`.
pub fn mse(truth: f64, estimates: &[f64]) -> f64 {
    if estimates.is_empty() {
        return 0.0;
    }
    estimates.iter().map(|e| (truth - e).powi(2)).sum::<f64>() / estimates.len() as f64
}

/// Mean percentage error `(100/N) sum (h - h_n) / h`; `None` when `h = 0`.
///
/// Underestimates count as positive.
pub fn mpe(truth: f64, estimates: &[f64]) -> Option<f64> {
    if truth == 0.0 || estimates.is_empty() {
        return None;
    }
    Some(100.0 * estimates.iter().map(|e| (truth - e) / truth).sum::<f64>() / estimates.len() as f64)
}

/// Runs every trial against every estimator.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentReport> {
    config.validate()?;
    let specs: Vec<EstimatorSpec> =
        config.estimators.iter().map(EstimatorConfig::to_spec).collect::<Result<_>>()?;
    let trials = config.trials()?;

    let run_trial = |source: &SourceSpec| -> Result<Vec<TrialRow>> {
        let truth = true_min_entropy(source)?.per_bit_min_entropy;
        let blocks = sample(source)?;
        specs
            .iter()
            .map(|spec| {
                let start = Instant::now();
                let est = estimate(spec, &blocks)?;
                let elapsed = start.elapsed().as_secs_f64() * 1e3;
                Ok(TrialRow {
                    family: source.family.name(),
                    param: source.family.param(),
                    seed: source.seed,
                    true_h: truth,
                    estimator: spec.kind.name(),
                    alpha: match spec.kind {
                        EstimatorKind::Kim { alpha } => Some(alpha),
                        _ => None,
                    },
                    test_blocks: blocks.len() - spec.init_blocks_for(source.bits_per_block),
                    estimate: est.per_bit,
                    solved: est.solved,
                    ci_applied: est.ci_applied,
                    wall_ms: config.record_timing.then_some(elapsed),
                })
            })
            .collect()
    };

    let per_trial: Vec<Vec<TrialRow>> = if config.parallel {
        trials.par_iter().map(run_trial).collect::<Result<_>>()?
    } else {
        trials.iter().map(run_trial).collect::<Result<_>>()?
    };
    let rows: Vec<TrialRow> = per_trial.into_iter().flatten().collect();
    let aggregates = aggregate(&rows);
    Ok(ExperimentReport { rows, aggregates, rng: RNG_NAME })
}

fn estimator_label(row: &TrialRow) -> String {
    match row.alpha {
        Some(a) => format!("{}(alpha={a})", row.estimator),
        None => row.estimator.to_string(),
    }
}

/// Groups rows by `(family, param, estimator)` in first-seen order.
pub fn aggregate(rows: &[TrialRow]) -> Vec<Aggregate> {
    let mut order: Vec<(String, u64, String)> = Vec::new();
    let mut groups: BTreeMap<(String, u64, String), Vec<&TrialRow>> = BTreeMap::new();
    for row in rows {
        let key = (row.family.to_string(), row.param.to_bits(), estimator_label(row));
        groups
            .entry(key.clone())
            .or_insert_with(|| {
                order.push(key);
                Vec::new()
            })
            .push(row);
    }
    order
        .into_iter()
        .map(|key| {
            let group = &groups[&key];
            let sq: f64 = group.iter().map(|r| (r.true_h - r.estimate).powi(2)).sum();
            let defined: Vec<&&TrialRow> = group.iter().filter(|r| r.true_h != 0.0).collect();
            let mpe_pct = (!defined.is_empty()).then(|| {
                100.0 * defined.iter().map(|r| (r.true_h - r.estimate) / r.true_h).sum::<f64>()
                    / defined.len() as f64
            });
            Aggregate {
                family: key.0,
                param: f64::from_bits(key.1),
                estimator: key.2,
                n: group.len(),
                mse: sq / group.len() as f64,
                mpe_pct,
                na_count: group.len() - defined.len(),
            }
        })
        .collect()
}

impl ExperimentReport {
    pub fn write_rows<W: Write>(&self, out: W) -> Result<()> {
        write_csv(out, &self.rows)
    }

    pub fn write_aggregates<W: Write>(&self, out: W) -> Result<()> {
        write_csv(out, &self.aggregates)
    }

    /// Writes both CSV files into `dir` under the names given in `config`.
    pub fn write_to_dir(
        &self,
        config: &ExperimentConfig,
        dir: impl AsRef<Path>,
    ) -> Result<(PathBuf, PathBuf)> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir)?;
        let report = dir.join(&config.report_file);
        let agg = dir.join(&config.aggregate_file);
        self.write_rows(fs::File::create(&report)?)?;
        self.write_aggregates(fs::File::create(&agg)?)?;
        Ok((report, agg))
    }
}

fn write_csv<W: Write, T: Serialize>(out: W, records: &[T]) -> Result<()> {
    let mut writer = csv::Writer::from_writer(out);
    for record in records {
        writer.serialize(record)?;
    }
    writer.flush()?;
    Ok(())
}
