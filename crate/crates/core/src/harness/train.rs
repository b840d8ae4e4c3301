use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use log::info;
use rand::seq::index::sample;

use super::schedule::{lr_at, Hyperparams};
use super::snapshot::{snapshot_steps, SnapshotPlan};
use crate::attacks::{compute_metrics, run_attack, AttackSpec, FlagCounts, MetricsRecord};
use crate::data::{DatasetHandle, MixStream};
use crate::error::{LabError, Result};
use crate::nn::{ModelGraph, Sgd, Want};
use crate::rng::{derive_seed, derived_rng};
use crate::tensor::Tensor;

const EVAL_STREAM: u64 = 0xE7A1;
const ADV_STREAM: u64 = 0xAD7;

/// Append-only metrics table, flushed after every row when file-backed.
pub struct MetricsLog {
    file: Option<BufWriter<File>>,
    records: Vec<MetricsRecord>,
}

impl MetricsLog {
    pub fn in_memory() -> Self {
        MetricsLog {
            file: None,
            records: Vec::new(),
        }
    }

    pub fn create(path: impl AsRef<Path>) -> Result<Self> {
        let mut file = BufWriter::new(File::create(path)?);
        writeln!(file, "{}", MetricsRecord::CSV_HEADER)?;
        file.flush()?;
        Ok(MetricsLog {
            file: Some(file),
            records: Vec::new(),
        })
    }

    pub fn push(&mut self, record: MetricsRecord) -> Result<()> {
        if let Some(f) = self.file.as_mut() {
            writeln!(f, "{}", record.csv_row())?;
            f.flush()?;
        }
        self.records.push(record);
        Ok(())
    }

    pub fn records(&self) -> &[MetricsRecord] {
        &self.records
    }

    pub fn into_records(self) -> Vec<MetricsRecord> {
        self.records
    }
}

/// Parses a metrics CSV. Flag counts are rebuilt from the rates.
pub fn read_metrics_csv(text: &str) -> Result<Vec<MetricsRecord>> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    match lines.next() {
        Some(h) if h.trim() == MetricsRecord::CSV_HEADER => {}
        Some(h) => return Err(LabError::invalid(format!("unexpected metrics header {h:?}"))),
        None => return Err(LabError::invalid("metrics file is empty")),
    }
    lines
        .enumerate()
        .map(|(i, line)| {
            let bad = |what: &str| LabError::invalid(format!("metrics row {}: bad {what}", i + 1));
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 8 {
                return Err(bad("column count"));
            }
            let nat: f64 = f[3].parse().map_err(|_| bad("nat_acc"))?;
            let rob: f64 = f[4].parse().map_err(|_| bad("rob_acc"))?;
            let asr: Option<f64> = if f[5].is_empty() {
                None
            } else {
                Some(f[5].parse().map_err(|_| bad("asr"))?)
            };
            let n: usize = f[6].parse().map_err(|_| bad("n"))?;
            if !(0.0..=1.0).contains(&nat) || !(0.0..=1.0).contains(&rob) || asr.is_some_and(|a| !(0.0..=1.0).contains(&a)) {
                return Err(bad("rate range"));
            }
            let natural_correct = (nat * n as f64).round() as usize;
            let robust_correct = (rob * n as f64).round() as usize;
            let fooled = (asr.unwrap_or(0.0) * natural_correct as f64).round() as usize;
            let counts = FlagCounts {
                n,
                natural_correct,
                robust_correct,
                fooled,
                wrong_but_robust: (robust_correct + fooled).saturating_sub(natural_correct),
            };
            Ok(MetricsRecord {
                step: f[0].parse().map_err(|_| bad("step"))?,
                epoch: f[1].parse().map_err(|_| bad("epoch"))?,
                attack: f[2].to_string(),
                nat_acc: nat,
                rob_acc: rob,
                asr,
                n,
                seed: f[7].parse().map_err(|_| bad("seed"))?,
                counts,
            })
        })
        .collect()
}

/// Fixed seeded evaluation subset, in dataset order.
pub fn eval_subset(ds: &DatasetHandle, size: usize, seed: u64) -> (Tensor, Vec<usize>) {
    if size >= ds.len() {
        return ds.all();
    }
    let mut rng = derived_rng(seed, EVAL_STREAM, 0);
    let mut idx = sample(&mut rng, ds.len(), size).into_vec();
    idx.sort_unstable();
    ds.batch(&idx)
}

/// One metrics row per attack at the model's current parameters.
pub fn evaluate(
    model: &ModelGraph,
    x: &Tensor,
    y: &[usize],
    attacks: &[AttackSpec],
    step: u64,
    epoch: f64,
    seed: u64,
) -> Result<Vec<MetricsRecord>> {
    attacks
        .iter()
        .enumerate()
        .map(|(k, spec)| {
            let out = run_attack(model, x, y, spec, derive_seed(seed, EVAL_STREAM + 1 + k as u64, step))?;
            Ok(compute_metrics(&out).at(step, epoch, seed))
        })
        .collect()
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainReport {
    pub steps: u64,
    /// Mean training loss per step.
    pub losses: Vec<f64>,
    pub records: Vec<MetricsRecord>,
    pub snapshot_steps: Vec<u64>,
}

/// Training configuration beyond the hyperparameters.
pub struct Trainer<'a> {
    pub hyper: &'a Hyperparams,
    pub plan: &'a SnapshotPlan,
    pub attacks: Vec<AttackSpec>,
    pub eval: Option<(&'a Tensor, &'a [usize])>,
    /// Replaces every batch with its PGD counterpart before the update.
    pub adversary: Option<AttackSpec>,
    /// Steps over which the adversary's budget grows linearly to its full
    /// value. From-scratch training at large budgets otherwise stalls at
    /// the uniform predictor.
    pub adversary_ramp: u64,
    /// Overrides the step count derived from `hyper.epochs`.
    pub total_steps: Option<u64>,
}

impl<'a> Trainer<'a> {
    pub fn new(hyper: &'a Hyperparams, plan: &'a SnapshotPlan) -> Self {
        Trainer {
            hyper,
            plan,
            attacks: Vec::new(),
            eval: None,
            adversary: None,
            adversary_ramp: 0,
            total_steps: None,
        }
    }

    /// Resolves attack presets by name.
    pub fn with_attack_names(mut self, names: &[String]) -> Result<Self> {
        for n in names {
            self.attacks
                .push(AttackSpec::preset(n).ok_or_else(|| LabError::invalid(format!("unknown attack preset {n:?}")))?);
        }
        Ok(self)
    }

    pub fn with_eval(mut self, x: &'a Tensor, y: &'a [usize]) -> Self {
        self.eval = Some((x, y));
        self
    }

    /// Runs SGD on `model` in place. On error `model` keeps the last
    /// parameters that produced a finite update.
    pub fn run(&self, model: &mut ModelGraph, stream: &mut MixStream<'_>, log: &mut MetricsLog) -> Result<TrainReport> {
        self.hyper.validate()?;
        self.plan.validate()?;
        if let Some(a) = &self.adversary {
            a.validate()?;
        }
        let policy = *stream.policy();
        if policy.batch_size != self.hyper.batch_size {
            return Err(LabError::invalid(format!(
                "stream batch size {} differs from hyperparameter batch size {}",
                policy.batch_size, self.hyper.batch_size
            )));
        }
        let spe = policy.epoch_length as f64 / policy.batch_size as f64;
        let total = self.total_steps.unwrap_or_else(|| (self.hyper.epochs * spe).round().max(1.0) as u64);
        let snaps = if self.eval.is_some() && !self.attacks.is_empty() {
            snapshot_steps(self.plan, spe, total)
        } else {
            Vec::new()
        };
        let mut sgd = Sgd::new(model, self.hyper.momentum as f32, self.hyper.weight_decay as f32);
        let mut report = TrainReport {
            snapshot_steps: snaps.clone(),
            ..Default::default()
        };
        let mut next_snap = snaps.iter().peekable();
        for step in 0..total {
            let batch = stream.next_batch();
            let x = match &self.adversary {
                Some(spec) => {
                    let seed = derive_seed(self.hyper.seed, ADV_STREAM, step);
                    if step < self.adversary_ramp {
                        let scale = (step + 1) as f64 / self.adversary_ramp as f64;
                        let mut ramped = spec.clone();
                        ramped.epsilon *= scale;
                        ramped.step_size *= scale;
                        run_attack(model, &batch.images, &batch.labels, &ramped, seed)?.adversarial
                    } else {
                        run_attack(model, &batch.images, &batch.labels, spec, seed)?.adversarial
                    }
                }
                None => batch.images,
            };
            let lg = model.loss_and_grads(&x, &batch.labels, Want::Params)?;
            let grads = lg.params.expect("parameter gradients requested");
            sgd.step(model, &grads, lr_at(self.hyper, step, batch.epoch) as f32)?;
            report.losses.push(lg.loss);
            report.steps = step + 1;

            if next_snap.peek() == Some(&&(step + 1)) {
                next_snap.next();
                let (ex, ey) = self.eval.expect("snapshots only scheduled with an eval set");
                let epoch = (step + 1) as f64 / spe;
                for rec in evaluate(model, ex, ey, &self.attacks, step + 1, epoch, self.hyper.seed)? {
                    info!(
                        "step {} epoch {:.2} {}: nat {:.3} rob {:.3} asr {}",
                        rec.step,
                        rec.epoch,
                        rec.attack,
                        rec.nat_acc,
                        rec.rob_acc,
                        rec.asr.map_or("-".to_string(), |a| format!("{a:.3}"))
                    );
                    report.records.push(rec.clone());
                    log.push(rec)?;
                }
            }
        }
        Ok(report)
    }
}

/// Natural training with snapshot evaluation.
pub fn train(
    model: &mut ModelGraph,
    stream: &mut MixStream<'_>,
    hyper: &Hyperparams,
    plan: &SnapshotPlan,
    eval: (&Tensor, &[usize]),
    log: &mut MetricsLog,
) -> Result<TrainReport> {
    Trainer::new(hyper, plan)
        .with_attack_names(&plan.attacks)?
        .with_eval(eval.0, eval.1)
        .run(model, stream, log)
}
