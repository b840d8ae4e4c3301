//! Robustified artifacts: adversarially trained models, the robust dataset
//! D_R (representation matching against a robust model) and the non-robust
//! dataset D_NR (relabelled targeted adversarial examples).

use rayon::prelude::*;

use crate::attacks::{pgd_targeted, AttackKind, AttackSpec};
use crate::data::{DatasetHandle, MixPolicy, MixStream, Role};
use crate::error::{LabError, Result};
use crate::harness::{Hyperparams, MetricsLog, SnapshotPlan, TrainReport, Trainer};
use crate::nn::{checkpoint_hash, ModelGraph, Want};
use crate::rng::derived_rng;
use crate::tensor::Tensor;

const CHUNK: usize = 32;
const PAIRING_STREAM: u64 = 0x9A1;
const TARGET_STREAM: u64 = 0x7A6;

/// Input optimisation settings for D_R.
#[derive(Clone, Debug, PartialEq)]
pub struct ReprMatch {
    pub steps: usize,
    pub step_size: f64,
    /// ℓ2 bound on `x_r - x'`; `None` leaves the optimisation unconstrained.
    pub epsilon: Option<f64>,
    /// Divide each gradient by its ℓ2 norm before stepping.
    pub normalize: bool,
}

impl Default for ReprMatch {
    fn default() -> Self {
        ReprMatch {
            steps: 200,
            step_size: 0.1,
            epsilon: None,
            normalize: false,
        }
    }
}

impl ReprMatch {
    pub fn validate(&self) -> Result<()> {
        if self.steps == 0 {
            return Err(LabError::invalid("representation matching needs at least one step"));
        }
        if !(self.step_size > 0.0 && self.step_size.is_finite()) {
            return Err(LabError::invalid("representation step size must be positive"));
        }
        if self.epsilon.is_some_and(|e| !(e >= 0.0)) {
            return Err(LabError::invalid("representation epsilon must be >= 0"));
        }
        Ok(())
    }
}

/// Distance `‖g(x_r) − g(x)‖₂` per example, before the first step and after
/// every step.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ReprTrace {
    pub distances: Vec<Vec<f64>>,
    /// Examples whose starting gradient was exactly zero.
    pub flagged: Vec<bool>,
    /// Start image index per example.
    pub sources: Vec<usize>,
}

impl ReprTrace {
    pub fn initial(&self, i: usize) -> f64 {
        self.distances[i][0]
    }

    pub fn last(&self, i: usize) -> f64 {
        *self.distances[i].last().expect("trace has at least one entry")
    }
}

/// Uniform index in `0..n` other than `skip`.
fn index_except<R: rand::Rng>(rng: &mut R, n: usize, skip: usize) -> usize {
    let j = rng.gen_range(0..n - 1);
    if j >= skip {
        j + 1
    } else {
        j
    }
}

fn sq_dist(a: &[f32], b: &[f32]) -> f64 {
    a.iter().zip(b).map(|(&x, &y)| ((x - y) as f64).powi(2)).sum()
}

/// Squared feature distance per example and its input gradient.
fn repr_loss(model: &ModelGraph, x: &Tensor, targets: &Tensor) -> Result<(Vec<f64>, Tensor)> {
    let (f, tape) = model.feature_tape(x)?;
    let n = x.batch_size();
    let loss: Vec<f64> = (0..n).map(|i| sq_dist(f.row(i), targets.row(i))).collect();
    let mut up = f;
    for (u, &t) in up.data_mut().iter_mut().zip(targets.data()) {
        *u = 2.0 * (*u - t);
    }
    let (_, dx) = model.backward(&tape, up, Want::Input)?;
    Ok((loss, dx.expect("input gradient requested")))
}

fn clamp_step(spec: &ReprMatch, start: &[f32], x: &[f32], g: &[f32], eta: f64, out: &mut [f32]) {
    let scale = if spec.normalize {
        let n = g.iter().map(|&v| (v as f64).powi(2)).sum::<f64>().sqrt();
        eta / n
    } else {
        eta
    };
    for ((o, &v), &gv) in out.iter_mut().zip(x).zip(g) {
        *o = ((v as f64 - scale * gv as f64) as f32).clamp(0.0, 1.0);
    }
    if let Some(eps) = spec.epsilon {
        let d = sq_dist(out, start).sqrt();
        if d > eps {
            let k = eps / d * (1.0 - 1e-6);
            for (o, &s) in out.iter_mut().zip(start) {
                *o = ((s as f64 + (*o - s) as f64 * k) as f32).clamp(0.0, 1.0);
            }
        }
    }
}

struct ChunkResult {
    images: Vec<f32>,
    distances: Vec<Vec<f64>>,
    flagged: Vec<bool>,
}

/// Gradient descent on the inputs with per-example halve-on-increase
/// backtracking, so each trace is non-increasing.
fn match_chunk(model: &ModelGraph, start: &Tensor, targets: &Tensor, spec: &ReprMatch) -> Result<ChunkResult> {
    let n = start.batch_size();
    let row = start.row_len();
    let mut cur = start.clone();
    let (mut loss, mut grad) = repr_loss(model, &cur, targets)?;
    let flagged: Vec<bool> = (0..n).map(|i| grad.row(i).iter().all(|&v| v == 0.0)).collect();
    let mut eta = vec![spec.step_size; n];
    let mut distances: Vec<Vec<f64>> = loss.iter().map(|&l| vec![l.sqrt()]).collect();
    let mut cand = cur.clone();
    for _ in 0..spec.steps {
        for i in 0..n {
            let (lo, hi) = (i * row, (i + 1) * row);
            if flagged[i] || loss[i] == 0.0 {
                cand.data_mut()[lo..hi].copy_from_slice(cur.row(i));
            } else {
                clamp_step(spec, start.row(i), cur.row(i), grad.row(i), eta[i], &mut cand.data_mut()[lo..hi]);
            }
        }
        let (cand_loss, cand_grad) = repr_loss(model, &cand, targets)?;
        for i in 0..n {
            if !cand_loss[i].is_finite() {
                return Err(LabError::Numerical {
                    batch_index: i,
                    detail: "representation distance is not finite".into(),
                });
            }
            if cand_loss[i] <= loss[i] {
                let (lo, hi) = (i * row, (i + 1) * row);
                cur.data_mut()[lo..hi].copy_from_slice(cand.row(i));
                grad.data_mut()[lo..hi].copy_from_slice(cand_grad.row(i));
                loss[i] = cand_loss[i];
            } else {
                eta[i] *= 0.5;
            }
            distances[i].push(loss[i].sqrt());
        }
    }
    Ok(ChunkResult {
        images: cur.into_data(),
        distances,
        flagged,
    })
}

/// Builds D_R: for every `(x, y)` in `data`, starts from a different random
/// image `x'` and descends `‖g(x_r) − g(x)‖²` where `g` is the penultimate
/// representation of `robust_model`, then emits `(x_r, y)`.
pub fn construct_robust_dataset(
    robust_model: &ModelGraph,
    data: &DatasetHandle,
    spec: &ReprMatch,
    seed: u64,
) -> Result<(DatasetHandle, ReprTrace)> {
    spec.validate()?;
    if data.shape()[..] != robust_model.input_shape()[..] {
        return Err(LabError::shape(
            0,
            format!("dataset images {:?} do not fit model input {:?}", data.shape(), robust_model.input_shape()),
        ));
    }
    if data.len() < 2 {
        return Err(LabError::invalid("D_R needs at least two source images"));
    }
    let n = data.len();
    let mut rng = derived_rng(seed, PAIRING_STREAM, 0);
    let sources: Vec<usize> = (0..n).map(|i| index_except(&mut rng, n, i)).collect();
    let starts: Vec<usize> = (0..n).step_by(CHUNK).collect();
    let chunks = starts
        .par_iter()
        .map(|&s| {
            let e = (s + CHUNK).min(n);
            let idx: Vec<usize> = (s..e).collect();
            let (x, _) = data.batch(&idx);
            let (start, _) = data.batch(&sources[s..e]);
            let targets = robust_model.features(&x)?;
            match_chunk(robust_model, &start, &targets, spec)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut images = Vec::with_capacity(n * data.image_len());
    let mut trace = ReprTrace {
        sources,
        ..Default::default()
    };
    for c in chunks {
        images.extend(c.images);
        trace.distances.extend(c.distances);
        trace.flagged.extend(c.flagged);
    }
    let eps = spec.epsilon.map_or("free".to_string(), |e| e.to_string());
    let provenance = format!(
        "D_R;fA={};steps={};step_size={};eps={};normalize={};seed={};source={}",
        checkpoint_hash(robust_model),
        spec.steps,
        spec.step_size,
        eps,
        spec.normalize,
        seed,
        data.provenance()
    );
    let ds = DatasetHandle::new(data.shape(), data.class_count(), images, data.labels().to_vec(), Role::Robust, provenance)?;
    Ok((ds, trace))
}

#[derive(Clone, Debug, PartialEq)]
pub struct NonRobustReport {
    /// Original label per example.
    pub source_labels: Vec<usize>,
    /// Whether the model predicts the new label after the attack.
    pub converted: Vec<bool>,
}

impl NonRobustReport {
    pub fn conversion_rate(&self) -> f64 {
        self.converted.iter().filter(|&&c| c).count() as f64 / self.converted.len().max(1) as f64
    }
}

/// Builds D_NR: each `(x, y)` becomes `(x_adv, t)` where `t ≠ y` is drawn
/// from the seed and `x_adv` is a targeted PGD example toward `t`.
pub fn construct_nonrobust_dataset(
    model: &ModelGraph,
    data: &DatasetHandle,
    attack: &AttackSpec,
    seed: u64,
) -> Result<(DatasetHandle, NonRobustReport)> {
    attack.validate()?;
    if !matches!(attack.kind, AttackKind::PgdL2 | AttackKind::PgdLinf) {
        return Err(LabError::invalid(format!("D_NR needs a PGD attack, got {}", attack.name)));
    }
    if data.class_count() < 2 {
        return Err(LabError::invalid("D_NR needs at least two classes"));
    }
    let mut rng = derived_rng(seed, TARGET_STREAM, 0);
    let targets: Vec<usize> = data
        .labels()
        .iter()
        .map(|&y| index_except(&mut rng, data.class_count(), y))
        .collect();
    let (x, _) = data.all();
    let out = pgd_targeted(model, &x, &targets, attack, seed)?;
    let provenance = format!(
        "D_NR;f={};attack={};eps={};step={};iters={};seed={};source={}",
        checkpoint_hash(model),
        attack.name,
        attack.epsilon,
        attack.step_size,
        attack.iterations,
        seed,
        data.provenance()
    );
    let ds = DatasetHandle::new(
        data.shape(),
        data.class_count(),
        out.adversarial.into_data(),
        targets,
        Role::NonRobust,
        provenance,
    )?;
    Ok((
        ds,
        NonRobustReport {
            source_labels: data.labels().to_vec(),
            converted: out.reached_target,
        },
    ))
}

/// Trains `model` on `data` with every batch replaced by its PGD
/// counterpart against the current parameters. The budget ramps up
/// linearly over the first `ramp_epochs`.
pub fn adversarial_train(
    model: &mut ModelGraph,
    data: &DatasetHandle,
    inner: &AttackSpec,
    ramp_epochs: f64,
    hyper: &Hyperparams,
) -> Result<TrainReport> {
    if !(ramp_epochs >= 0.0 && ramp_epochs.is_finite()) {
        return Err(LabError::invalid(format!("ramp_epochs must be >= 0, got {ramp_epochs}")));
    }
    if !matches!(inner.kind, AttackKind::PgdL2 | AttackKind::PgdLinf) {
        return Err(LabError::invalid(format!("inner attack {} must be PGD", inner.name)));
    }
    let plan = SnapshotPlan::default();
    let mut trainer = Trainer::new(hyper, &plan);
    trainer.adversary = Some(inner.clone());
    trainer.adversary_ramp = (ramp_epochs * data.len() as f64 / hyper.batch_size as f64).round() as u64;
    let mut stream = MixStream::new(data, None, MixPolicy::new(0.0, hyper.batch_size, data.len())?, hyper.seed)?
        .with_augment(hyper.augment_policy()?);
    trainer.run(model, &mut stream, &mut MetricsLog::in_memory())
}

/// Plain training counterpart of [`adversarial_train`].
pub fn natural_train(model: &mut ModelGraph, data: &DatasetHandle, hyper: &Hyperparams) -> Result<TrainReport> {
    let plan = SnapshotPlan::default();
    let mut stream = MixStream::new(data, None, MixPolicy::new(0.0, hyper.batch_size, data.len())?, hyper.seed)?
        .with_augment(hyper.augment_policy()?);
    Trainer::new(hyper, &plan).run(model, &mut stream, &mut MetricsLog::in_memory())
}
