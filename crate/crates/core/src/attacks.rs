//! White-box attacks and the metrics computed from them.
//!
//! PGD under an ℓ2 or ℓ∞ budget, an exhaustive rotation/translation grid
//! search, and natural accuracy / robust accuracy / attack success rate.
//! Work is split into fixed-size chunks of examples so results do not depend
//! on how many threads run them.

use rand::Rng;
use rayon::prelude::*;

use crate::error::{LabError, Result};
use crate::nn::{softmax_cross_entropy, ModelGraph, Want};
use crate::rng::{derived_rng, gaussian};
use crate::tensor::Tensor;
use crate::transforms::{make_grid, warp_into, GridSpec, Pose};

/// Examples per work unit.
const CHUNK: usize = 32;
/// Poses per forward pass in the grid search.
const POSE_CHUNK: usize = 32;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AttackKind {
    /// Evaluate on clean inputs only.
    None,
    PgdL2,
    PgdLinf,
    Grid,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AttackSpec {
    pub name: String,
    pub kind: AttackKind,
    pub epsilon: f64,
    pub step_size: f64,
    pub iterations: usize,
    pub random_start: bool,
    pub grid: Option<GridSpec>,
    /// Evaluate every pose even after a misclassification.
    pub exhaustive: bool,
}

pub const PRESET_NAMES: &[&str] = &[
    "none",
    "l2-0.25",
    "l2-0.5",
    "linf-1",
    "linf-2",
    "linf-4",
    "linf-8",
    "grid775",
    "grid135",
    "grid775-10",
    "rot30",
    "rot10",
];

impl AttackSpec {
    pub fn none() -> Self {
        AttackSpec {
            name: "none".into(),
            kind: AttackKind::None,
            epsilon: 0.0,
            step_size: 0.0,
            iterations: 0,
            random_start: false,
            grid: None,
            exhaustive: false,
        }
    }

    /// ℓ2 PGD; random start off by default.
    pub fn l2(epsilon: f64, step_size: f64, iterations: usize) -> Self {
        AttackSpec {
            name: format!("l2-{epsilon}"),
            kind: AttackKind::PgdL2,
            epsilon,
            step_size,
            iterations,
            random_start: false,
            grid: None,
            exhaustive: false,
        }
    }

    /// ℓ∞ PGD; random start on by default.
    pub fn linf(epsilon: f64, step_size: f64, iterations: usize) -> Self {
        AttackSpec {
            name: format!("linf-{epsilon}"),
            kind: AttackKind::PgdLinf,
            epsilon,
            step_size,
            iterations,
            random_start: true,
            grid: None,
            exhaustive: false,
        }
    }

    pub fn grid(grid: GridSpec) -> Self {
        AttackSpec {
            name: grid.name.clone(),
            kind: AttackKind::Grid,
            epsilon: 0.0,
            step_size: 0.0,
            iterations: 0,
            random_start: false,
            grid: Some(grid),
            exhaustive: false,
        }
    }

    pub fn named(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub fn with_random_start(mut self, on: bool) -> Self {
        self.random_start = on;
        self
    }

    pub fn with_exhaustive(mut self, on: bool) -> Self {
        self.exhaustive = on;
        self
    }

    /// Named presets. `linf-k` means ε = k/255 with step ε/4 and 7 steps;
    /// `l2-e` uses step 0.1 and 100 steps.
    pub fn preset(name: &str) -> Option<Self> {
        if name == "none" {
            return Some(AttackSpec::none());
        }
        if let Some(g) = GridSpec::preset(name) {
            return Some(AttackSpec::grid(g));
        }
        let l2 = |eps: f64| AttackSpec::l2(eps, 0.1, 100).named(name);
        let linf = |k: f64| {
            let eps = k / 255.0;
            AttackSpec::linf(eps, eps / 4.0, 7).named(name)
        };
        Some(match name {
            "l2-0.25" => l2(0.25),
            "l2-0.5" => l2(0.5),
            "linf-1" => linf(1.0),
            "linf-2" => linf(2.0),
            "linf-4" => linf(4.0),
            "linf-8" => linf(8.0),
            _ => return None,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon >= 0.0 && self.epsilon.is_finite()) {
            return Err(LabError::invalid(format!("attack {}: epsilon must be >= 0", self.name)));
        }
        match self.kind {
            AttackKind::PgdL2 | AttackKind::PgdLinf => {
                if !(self.step_size > 0.0 && self.step_size.is_finite()) {
                    return Err(LabError::invalid(format!("attack {}: step size must be > 0", self.name)));
                }
                if self.grid.is_some() {
                    return Err(LabError::invalid(format!("attack {}: PGD takes no grid", self.name)));
                }
            }
            AttackKind::Grid => {
                let g = self
                    .grid
                    .as_ref()
                    .ok_or_else(|| LabError::invalid(format!("attack {}: grid attack needs a grid", self.name)))?;
                make_grid(g)?;
            }
            AttackKind::None => {
                if self.grid.is_some() {
                    return Err(LabError::invalid("the none attack takes no grid"));
                }
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AttackOutcome {
    pub attack: String,
    pub adversarial: Tensor,
    /// First misclassifying pose per example, identity when none fails.
    pub worst_pose: Option<Vec<Pose>>,
    pub natural_correct: Vec<bool>,
    pub adversarial_correct: Vec<bool>,
    /// PGD steps skipped because the input gradient was exactly zero.
    pub zero_grad_steps: usize,
    /// Cross-entropy at the clean input (PGD only).
    pub initial_loss: Vec<f64>,
    /// Cross-entropy at the returned iterate (PGD only).
    pub final_loss: Vec<f64>,
    /// Misclassification count per pose, filled by exhaustive grid runs.
    pub pose_failures: Option<Vec<usize>>,
}

/// Runs any attack kind. `seed` drives random starts.
pub fn run_attack(model: &ModelGraph, batch: &Tensor, labels: &[usize], spec: &AttackSpec, seed: u64) -> Result<AttackOutcome> {
    spec.validate()?;
    match spec.kind {
        AttackKind::None => no_attack(model, batch, labels, spec),
        AttackKind::PgdL2 => pgd_l2(model, batch, labels, spec, seed),
        AttackKind::PgdLinf => pgd_linf(model, batch, labels, spec, seed),
        AttackKind::Grid => grid_attack(model, batch, labels, spec),
    }
}

fn check_batch(model: &ModelGraph, batch: &Tensor, labels: &[usize]) -> Result<()> {
    if batch.shape().len() != 4 || &batch.shape()[1..] != model.input_shape() {
        return Err(LabError::shape(
            0,
            format!("batch {:?} does not match model input {:?}", batch.shape(), model.input_shape()),
        ));
    }
    if labels.len() != batch.batch_size() {
        return Err(LabError::invalid(format!(
            "{} labels for a batch of {}",
            labels.len(),
            batch.batch_size()
        )));
    }
    Ok(())
}

fn correct(model: &ModelGraph, batch: &Tensor, labels: &[usize]) -> Result<Vec<bool>> {
    let mut out = Vec::with_capacity(labels.len());
    for start in (0..labels.len()).step_by(CHUNK * 4) {
        let end = (start + CHUNK * 4).min(labels.len());
        let preds = model.predict(&batch.slice_rows(start, end))?;
        out.extend(preds.iter().zip(&labels[start..end]).map(|(p, y)| p == y));
    }
    Ok(out)
}

fn no_attack(model: &ModelGraph, batch: &Tensor, labels: &[usize], spec: &AttackSpec) -> Result<AttackOutcome> {
    check_batch(model, batch, labels)?;
    let nat = correct(model, batch, labels)?;
    Ok(AttackOutcome {
        attack: spec.name.clone(),
        adversarial: batch.clone(),
        worst_pose: None,
        adversarial_correct: nat.clone(),
        natural_correct: nat,
        zero_grad_steps: 0,
        initial_loss: Vec::new(),
        final_loss: Vec::new(),
        pose_failures: None,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Norm {
    L2,
    Linf,
}

/// Whether PGD climbs the loss (untargeted) or descends it toward a target.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Direction {
    Ascend,
    Descend,
}

struct PgdChunk {
    adv: Vec<f32>,
    zero_steps: usize,
    initial: Vec<f64>,
    best: Vec<f64>,
}

/// Projects `x` onto the feasible set around `x0` and the pixel box.
fn project(norm: Norm, eps: f64, x0: &[f32], x: &mut [f32]) {
    match norm {
        Norm::Linf => {
            let e = eps as f32;
            for (v, &o) in x.iter_mut().zip(x0) {
                *v = v.clamp(o - e, o + e).clamp(0.0, 1.0);
            }
        }
        Norm::L2 => {
            let sq: f64 = x.iter().zip(x0).map(|(&v, &o)| ((v - o) as f64).powi(2)).sum();
            let norm = sq.sqrt();
            if norm > eps {
                let scale = eps / norm;
                for (v, &o) in x.iter_mut().zip(x0) {
                    *v = (o as f64 + (*v - o) as f64 * scale) as f32;
                }
            }
            for v in x.iter_mut() {
                *v = v.clamp(0.0, 1.0);
            }
            // f32 rounding can leave the offset a hair outside the ball
            let sq: f64 = x.iter().zip(x0).map(|(&v, &o)| ((v - o) as f64).powi(2)).sum();
            if sq.sqrt() > eps {
                let scale = eps / sq.sqrt() * (1.0 - 1e-6);
                for (v, &o) in x.iter_mut().zip(x0) {
                    *v = ((o as f64 + (*v - o) as f64 * scale) as f32).clamp(0.0, 1.0);
                }
            }
        }
    }
}

/// Radial projection of an offset onto the ℓ2 ball of radius `eps`.
pub fn project_l2_offset(offset: &[f64], eps: f64) -> Vec<f64> {
    let n = offset.iter().map(|v| v * v).sum::<f64>().sqrt();
    if n <= eps {
        offset.to_vec()
    } else {
        offset.iter().map(|v| v * eps / n).collect()
    }
}

fn random_start<R: Rng>(norm: Norm, eps: f64, x0: &[f32], x: &mut [f32], rng: &mut R) {
    match norm {
        Norm::Linf => {
            for (v, &o) in x.iter_mut().zip(x0) {
                *v = o + rng.gen_range(-eps..=eps) as f32;
            }
        }
        Norm::L2 => {
            let dir: Vec<f64> = (0..x.len()).map(|_| gaussian(rng)).collect();
            let n = dir.iter().map(|v| v * v).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
            let radius = eps * rng.gen::<f64>().powf(1.0 / x.len() as f64);
            for ((v, &o), d) in x.iter_mut().zip(x0).zip(&dir) {
                *v = (o as f64 + d / n * radius) as f32;
            }
        }
    }
    project(norm, eps, x0, x);
}

/// PGD on one chunk; returns the iterate with the best loss seen.
#[allow(clippy::too_many_arguments)]
fn pgd_chunk(
    model: &ModelGraph,
    x0: &Tensor,
    labels: &[usize],
    norm: Norm,
    dir: Direction,
    spec: &AttackSpec,
    seed: u64,
    chunk_index: u64,
) -> Result<PgdChunk> {
    let n = labels.len();
    let row = x0.row_len();
    let mut x = x0.clone();
    let mut rng = derived_rng(seed, 0xA77A_C4, chunk_index);
    if spec.random_start && spec.epsilon > 0.0 {
        for i in 0..n {
            let (orig, cur) = (x0.row(i), x.row_mut(i));
            random_start(norm, spec.epsilon, orig, cur, &mut rng);
        }
    }
    let better = |new: f64, old: f64| match dir {
        Direction::Ascend => new > old,
        Direction::Descend => new < old,
    };
    let mut best = x.clone();
    let mut best_loss = vec![f64::NAN; n];
    let mut initial = Vec::new();
    let mut zero_steps = 0;
    for it in 0..=spec.iterations {
        // the last pass only scores the final iterate
        let (per_example, grad) = if it == spec.iterations {
            let logits = model.forward(&x)?;
            (softmax_cross_entropy(&logits, labels)?.per_example, None)
        } else {
            let lg = model.loss_and_grads(&x, labels, Want::Input)?;
            (lg.per_example, lg.input)
        };
        if it == 0 && !spec.random_start {
            initial = per_example.clone();
        }
        for i in 0..n {
            if best_loss[i].is_nan() || better(per_example[i], best_loss[i]) {
                best_loss[i] = per_example[i];
                best.row_mut(i).copy_from_slice(x.row(i));
            }
        }
        let Some(grad) = grad else { break };
        let sign = match dir {
            Direction::Ascend => 1.0,
            Direction::Descend => -1.0,
        };
        for i in 0..n {
            let g = grad.row(i);
            let cur = &mut x.data_mut()[i * row..(i + 1) * row];
            match norm {
                Norm::L2 => {
                    let gn = g.iter().map(|&v| (v as f64).powi(2)).sum::<f64>().sqrt();
                    if gn == 0.0 {
                        zero_steps += 1;
                        continue;
                    }
                    let s = sign * spec.step_size / gn;
                    for (v, &gv) in cur.iter_mut().zip(g) {
                        *v = (*v as f64 + s * gv as f64) as f32;
                    }
                }
                Norm::Linf => {
                    if g.iter().all(|&v| v == 0.0) {
                        zero_steps += 1;
                        continue;
                    }
                    let s = (sign * spec.step_size) as f32;
                    for (v, &gv) in cur.iter_mut().zip(g) {
                        if gv != 0.0 {
                            *v += s * gv.signum();
                        }
                    }
                }
            }
            project(norm, spec.epsilon, x0.row(i), cur);
        }
    }
    if initial.is_empty() {
        let logits = model.forward(x0)?;
        initial = softmax_cross_entropy(&logits, labels)?.per_example;
    }
    Ok(PgdChunk {
        adv: best.into_data(),
        zero_steps,
        initial,
        best: best_loss,
    })
}

struct PgdResult {
    adversarial: Tensor,
    zero_steps: usize,
    initial: Vec<f64>,
    best: Vec<f64>,
}

fn pgd_batched(
    model: &ModelGraph,
    batch: &Tensor,
    labels: &[usize],
    norm: Norm,
    dir: Direction,
    spec: &AttackSpec,
    seed: u64,
) -> Result<PgdResult> {
    check_batch(model, batch, labels)?;
    let n = labels.len();
    let starts: Vec<usize> = (0..n).step_by(CHUNK).collect();
    let chunks = starts
        .par_iter()
        .enumerate()
        .map(|(ci, &s)| {
            let e = (s + CHUNK).min(n);
            pgd_chunk(model, &batch.slice_rows(s, e), &labels[s..e], norm, dir, spec, seed, ci as u64).map_err(
                |err| match err {
                    LabError::Numerical { batch_index, detail } => LabError::Numerical {
                        batch_index: batch_index + s,
                        detail,
                    },
                    other => other,
                },
            )
        })
        .collect::<Result<Vec<_>>>()?;
    let mut data = Vec::with_capacity(batch.len());
    let (mut zero_steps, mut initial, mut best) = (0, Vec::with_capacity(n), Vec::with_capacity(n));
    for c in chunks {
        data.extend(c.adv);
        zero_steps += c.zero_steps;
        initial.extend(c.initial);
        best.extend(c.best);
    }
    Ok(PgdResult {
        adversarial: Tensor::from_vec(batch.shape(), data)?,
        zero_steps,
        initial,
        best,
    })
}

fn untargeted(model: &ModelGraph, batch: &Tensor, labels: &[usize], spec: &AttackSpec, seed: u64, norm: Norm) -> Result<AttackOutcome> {
    let r = pgd_batched(model, batch, labels, norm, Direction::Ascend, spec, seed)?;
    Ok(AttackOutcome {
        attack: spec.name.clone(),
        natural_correct: correct(model, batch, labels)?,
        adversarial_correct: correct(model, &r.adversarial, labels)?,
        adversarial: r.adversarial,
        worst_pose: None,
        zero_grad_steps: r.zero_steps,
        initial_loss: r.initial,
        final_loss: r.best,
        pose_failures: None,
    })
}

/// ℓ2 PGD with gradient steps normalised per example.
pub fn pgd_l2(model: &ModelGraph, batch: &Tensor, labels: &[usize], spec: &AttackSpec, seed: u64) -> Result<AttackOutcome> {
    spec.validate()?;
    if spec.kind != AttackKind::PgdL2 {
        return Err(LabError::invalid(format!("attack {} is not l2 PGD", spec.name)));
    }
    untargeted(model, batch, labels, spec, seed, Norm::L2)
}

/// ℓ∞ PGD with signed gradient steps.
pub fn pgd_linf(model: &ModelGraph, batch: &Tensor, labels: &[usize], spec: &AttackSpec, seed: u64) -> Result<AttackOutcome> {
    spec.validate()?;
    if spec.kind != AttackKind::PgdLinf {
        return Err(LabError::invalid(format!("attack {} is not linf PGD", spec.name)));
    }
    untargeted(model, batch, labels, spec, seed, Norm::Linf)
}

#[derive(Clone, Debug, PartialEq)]
pub struct TargetedOutcome {
    pub adversarial: Tensor,
    /// Whether the model now predicts the target class.
    pub reached_target: Vec<bool>,
    pub zero_grad_steps: usize,
}

/// PGD that minimises cross-entropy toward `targets`.
pub fn pgd_targeted(model: &ModelGraph, batch: &Tensor, targets: &[usize], spec: &AttackSpec, seed: u64) -> Result<TargetedOutcome> {
    spec.validate()?;
    let norm = match spec.kind {
        AttackKind::PgdL2 => Norm::L2,
        AttackKind::PgdLinf => Norm::Linf,
        _ => return Err(LabError::invalid(format!("targeted attack {} must be a PGD kind", spec.name))),
    };
    let r = pgd_batched(model, batch, targets, norm, Direction::Descend, spec, seed)?;
    Ok(TargetedOutcome {
        reached_target: correct(model, &r.adversarial, targets)?,
        adversarial: r.adversarial,
        zero_grad_steps: r.zero_steps,
    })
}

struct GridRow {
    image: Vec<f32>,
    pose: Pose,
    survived: bool,
    failures: Vec<bool>,
}

fn grid_one(model: &ModelGraph, shape: [usize; 3], x: &[f32], label: usize, poses: &[Pose], exhaustive: bool) -> Result<GridRow> {
    let per = x.len();
    let mut first_fail: Option<usize> = None;
    let mut failures = if exhaustive { vec![false; poses.len()] } else { Vec::new() };
    let mut buf = Vec::new();
    for start in (0..poses.len()).step_by(POSE_CHUNK) {
        let end = (start + POSE_CHUNK).min(poses.len());
        buf.resize((end - start) * per, 0.0);
        for (k, p) in poses[start..end].iter().enumerate() {
            warp_into(shape, x, *p, &mut buf[k * per..(k + 1) * per]);
        }
        let t = Tensor::from_vec(&[end - start, shape[0], shape[1], shape[2]], std::mem::take(&mut buf))?;
        let preds = model.predict(&t)?;
        buf = t.into_data();
        for (k, &p) in preds.iter().enumerate() {
            if p != label {
                if first_fail.is_none() {
                    first_fail = Some(start + k);
                }
                if exhaustive {
                    failures[start + k] = true;
                }
            }
        }
        if first_fail.is_some() && !exhaustive {
            break;
        }
    }
    let pose = first_fail.map_or(Pose::IDENTITY, |i| poses[i]);
    let mut image = vec![0.0; per];
    warp_into(shape, x, pose, &mut image);
    Ok(GridRow {
        image,
        pose,
        survived: first_fail.is_none(),
        failures,
    })
}

/// Worst-case search over every pose of the grid.
pub fn grid_attack(model: &ModelGraph, batch: &Tensor, labels: &[usize], spec: &AttackSpec) -> Result<AttackOutcome> {
    spec.validate()?;
    let grid = match (&spec.kind, &spec.grid) {
        (AttackKind::Grid, Some(g)) => g,
        _ => return Err(LabError::invalid(format!("attack {} is not a grid attack", spec.name))),
    };
    let poses = make_grid(grid)?;
    pose_search(model, batch, labels, &poses, spec.exhaustive, &spec.name)
}

/// Grid search over an explicit pose list, in list order.
pub fn pose_search(
    model: &ModelGraph,
    batch: &Tensor,
    labels: &[usize],
    poses: &[Pose],
    exhaustive: bool,
    name: &str,
) -> Result<AttackOutcome> {
    check_batch(model, batch, labels)?;
    let s = batch.shape();
    if s.len() != 4 || poses.is_empty() {
        return Err(LabError::invalid("pose search needs [N, C, H, W] images and at least one pose"));
    }
    let shape = [s[1], s[2], s[3]];
    let rows = (0..labels.len())
        .into_par_iter()
        .map(|i| grid_one(model, shape, batch.row(i), labels[i], poses, exhaustive))
        .collect::<Result<Vec<_>>>()?;
    let mut data = Vec::with_capacity(batch.len());
    let mut worst = Vec::with_capacity(rows.len());
    let mut adv_ok = Vec::with_capacity(rows.len());
    let mut pose_failures = exhaustive.then(|| vec![0usize; poses.len()]);
    for r in rows {
        data.extend(r.image);
        worst.push(r.pose);
        adv_ok.push(r.survived);
        if let Some(pf) = pose_failures.as_mut() {
            for (c, f) in pf.iter_mut().zip(r.failures) {
                *c += f as usize;
            }
        }
    }
    Ok(AttackOutcome {
        attack: name.to_string(),
        adversarial: Tensor::from_vec(batch.shape(), data)?,
        worst_pose: Some(worst),
        natural_correct: correct(model, batch, labels)?,
        adversarial_correct: adv_ok,
        zero_grad_steps: 0,
        initial_loss: Vec::new(),
        final_loss: Vec::new(),
        pose_failures,
    })
}

/// Flag-level tallies behind a metrics row.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct FlagCounts {
    pub n: usize,
    pub natural_correct: usize,
    pub robust_correct: usize,
    /// Naturally correct, then fooled.
    pub fooled: usize,
    /// Naturally wrong, yet correct after the attack.
    pub wrong_but_robust: usize,
}

impl FlagCounts {
    pub fn from_flags(natural: &[bool], adversarial: &[bool]) -> Self {
        let mut c = FlagCounts {
            n: natural.len(),
            ..Default::default()
        };
        for (&nat, &adv) in natural.iter().zip(adversarial) {
            c.natural_correct += nat as usize;
            c.robust_correct += adv as usize;
            c.fooled += (nat && !adv) as usize;
            c.wrong_but_robust += (!nat && adv) as usize;
        }
        c
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MetricsRecord {
    pub step: u64,
    pub epoch: f64,
    pub attack: String,
    pub nat_acc: f64,
    pub rob_acc: f64,
    /// Absent when no example was naturally correct.
    pub asr: Option<f64>,
    pub n: usize,
    pub seed: u64,
    pub counts: FlagCounts,
}

impl MetricsRecord {
    pub fn from_counts(attack: &str, counts: FlagCounts) -> Self {
        let n = counts.n.max(1) as f64;
        MetricsRecord {
            step: 0,
            epoch: 0.0,
            attack: attack.to_string(),
            nat_acc: counts.natural_correct as f64 / n,
            rob_acc: counts.robust_correct as f64 / n,
            asr: (counts.natural_correct > 0).then(|| counts.fooled as f64 / counts.natural_correct as f64),
            n: counts.n,
            seed: 0,
            counts,
        }
    }

    pub fn at(mut self, step: u64, epoch: f64, seed: u64) -> Self {
        self.step = step;
        self.epoch = epoch;
        self.seed = seed;
        self
    }

    /// `rob − (nat·(1−ASR) + wrong-but-robust share)`, computed from counts.
    /// Zero for every well-formed record.
    pub fn identity_residual(&self) -> i64 {
        let c = &self.counts;
        // nat·(1−ASR)·n = natural_correct − fooled
        c.robust_correct as i64 - ((c.natural_correct - c.fooled) as i64 + c.wrong_but_robust as i64)
    }

    pub const CSV_HEADER: &'static str = "step,epoch,attack,nat_acc,rob_acc,asr,n,seed";

    pub fn csv_row(&self) -> String {
        let asr = self.asr.map(|a| format!("{a:.6}")).unwrap_or_default();
        format!(
            "{},{:.4},{},{:.6},{:.6},{},{},{}",
            self.step, self.epoch, self.attack, self.nat_acc, self.rob_acc, asr, self.n, self.seed
        )
    }
}

pub fn compute_metrics(outcome: &AttackOutcome) -> MetricsRecord {
    MetricsRecord::from_counts(
        &outcome.attack,
        FlagCounts::from_flags(&outcome.natural_correct, &outcome.adversarial_correct),
    )
}
