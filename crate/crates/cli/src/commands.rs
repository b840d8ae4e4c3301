use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use log::info;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use robustlab::attacks::{AttackKind, AttackSpec, MetricsRecord};
use robustlab::data::{save_dataset, DatasetHandle, MixPolicy, MixStream};
use robustlab::harness::{eval_subset, evaluate, Hyperparams, MetricsLog, SnapshotPlan, Trainer};
use robustlab::nn::{load_checkpoint, save_checkpoint, MicroResNet, ModelGraph};
use robustlab::robustify::{construct_nonrobust_dataset, construct_robust_dataset, ReprMatch};
use robustlab::Tensor;

use crate::config::{DataSource, ExperimentConfig};
use crate::{CliError, RunArgs};

pub struct Context {
    pub seed: u64,
    pub out: PathBuf,
}

struct Loaded {
    cfg: ExperimentConfig,
    checkpoint: Option<PathBuf>,
    train_override: Option<DataSource>,
}

impl Loaded {
    fn new(args: &RunArgs) -> Result<Self, CliError> {
        let cfg = ExperimentConfig::load(&args.config)?;
        Ok(Loaded {
            checkpoint: args.checkpoint.clone().or_else(|| cfg.model.checkpoint.clone()),
            train_override: args.train_data.clone().map(DataSource::rdst),
            cfg,
        })
    }

    fn train_data(&self) -> Result<DatasetHandle, CliError> {
        match &self.train_override {
            Some(src) => src.load("--train-data", true),
            None => self.cfg.train_source()?.load("data.train", true),
        }
    }

    fn test_data(&self) -> Result<DatasetHandle, CliError> {
        self.cfg.test_source()?.load("data.test", false)
    }

    fn checkpoint(&self) -> Result<ModelGraph, CliError> {
        let path = self
            .checkpoint
            .as_ref()
            .ok_or_else(|| CliError::Config("model.checkpoint: missing (set it or pass --checkpoint)".into()))?;
        Ok(load_checkpoint(path)?)
    }

    /// Starts from `model.checkpoint` when given, else a fresh seeded model.
    fn initial_model(&self, data: &DatasetHandle, seed: u64) -> Result<ModelGraph, CliError> {
        if self.checkpoint.is_some() {
            let m = self.checkpoint()?;
            if m.input_shape() != data.shape() || m.class_count() != data.class_count() {
                return Err(CliError::Config(format!(
                    "model.checkpoint expects {:?} with {} classes, data has {:?} with {}",
                    m.input_shape(),
                    m.class_count(),
                    data.shape(),
                    data.class_count()
                )));
            }
            return Ok(m);
        }
        fresh_model(&self.cfg.model.arch, data, seed)
    }
}

fn fresh_model(arch: &str, data: &DatasetHandle, seed: u64) -> Result<ModelGraph, CliError> {
    let arch = MicroResNet::from_id(arch, data.shape(), data.class_count())
        .map_err(|e| CliError::Config(format!("model.arch: {e}")))?;
    Ok(arch.build(&mut ChaCha8Rng::seed_from_u64(seed))?)
}

fn eval_set(data: &DatasetHandle, size: usize, seed: u64) -> (Tensor, Vec<usize>) {
    if size == 0 {
        data.all()
    } else {
        eval_subset(data, size, seed)
    }
}

fn check_shapes(a: &DatasetHandle, b: &DatasetHandle, what: &str) -> Result<(), CliError> {
    if a.shape() != b.shape() || a.class_count() != b.class_count() {
        return Err(CliError::Config(format!(
            "{what}: datasets disagree ({:?}, {} classes vs {:?}, {} classes)",
            a.shape(),
            a.class_count(),
            b.shape(),
            b.class_count()
        )));
    }
    Ok(())
}

fn natural_accuracy(model: &ModelGraph, x: &Tensor, y: &[usize]) -> Result<f64, CliError> {
    let pred = model.predict(x)?;
    Ok(pred.iter().zip(y).filter(|(p, t)| p == t).count() as f64 / y.len().max(1) as f64)
}

/// Shared body of `train` and `advtrain`.
fn run_training(
    ctx: &Context,
    run: &Loaded,
    adversary: Option<(AttackSpec, f64)>,
) -> Result<(), CliError> {
    let cfg = &run.cfg;
    let train = run.train_data()?;
    let test = run.test_data()?;
    check_shapes(&train, &test, "data.test")?;
    let hyper = cfg.train.hyperparams(ctx.seed)?;
    let plan = cfg.snapshots.plan()?;
    let attacks = cfg.attack_specs(&plan.attacks)?;
    let (ex, ey) = eval_set(&test, plan.eval_size, ctx.seed);

    let mut model = run.initial_model(&train, ctx.seed)?;
    let mut stream = MixStream::new(&train, None, MixPolicy::new(0.0, hyper.batch_size, train.len())?, ctx.seed)?
        .with_augment(hyper.augment_policy()?);
    let mut log = MetricsLog::create(ctx.out.join("metrics.csv"))?;
    let mut trainer = Trainer::new(&hyper, &plan).with_eval(&ex, &ey);
    trainer.attacks = attacks;
    if let Some((spec, ramp)) = adversary {
        if !(ramp >= 0.0 && ramp.is_finite()) {
            return Err(CliError::Config("adversary.ramp_epochs must be >= 0".into()));
        }
        trainer.adversary_ramp = (ramp * train.len() as f64 / hyper.batch_size as f64).round() as u64;
        trainer.adversary = Some(spec);
    }
    let report = trainer.run(&mut model, &mut stream, &mut log)?;
    save_checkpoint(&model, ctx.out.join("model.rlab"))?;
    let acc = natural_accuracy(&model, &ex, &ey)?;
    info!("{} steps, final loss {:.4}", report.steps, report.losses.last().copied().unwrap_or(f64::NAN));
    println!("final natural accuracy {acc:.4} on {} examples", ey.len());
    Ok(())
}

pub fn train(ctx: &Context, args: &RunArgs) -> Result<(), CliError> {
    run_training(ctx, &Loaded::new(args)?, None)
}

pub fn advtrain(ctx: &Context, args: &RunArgs) -> Result<(), CliError> {
    let run = Loaded::new(args)?;
    let adv = run
        .cfg
        .adversary
        .as_ref()
        .ok_or_else(|| CliError::Config("adversary: missing section".into()))?;
    let spec = run.cfg.attack_spec(&adv.attack)?;
    if !matches!(spec.kind, AttackKind::PgdL2 | AttackKind::PgdLinf) {
        return Err(CliError::Config(format!("adversary.attack: {} is not a PGD attack", spec.name)));
    }
    let ramp = adv.ramp_epochs;
    run_training(ctx, &run, Some((spec, ramp)))
}

fn write_records(path: &Path, records: &[MetricsRecord]) -> Result<(), CliError> {
    let mut text = String::new();
    writeln!(text, "{}", MetricsRecord::CSV_HEADER).unwrap();
    for r in records {
        writeln!(text, "{}", r.csv_row()).unwrap();
    }
    fs::write(path, text)?;
    Ok(())
}

pub fn attack(ctx: &Context, args: &RunArgs) -> Result<(), CliError> {
    let run = Loaded::new(args)?;
    let model = run.checkpoint()?;
    let test = run.test_data()?;
    let attacks = run.cfg.attack_specs(&run.cfg.attack.presets)?;
    let (x, y) = eval_set(&test, run.cfg.attack.eval_size, ctx.seed);
    let records = evaluate(&model, &x, &y, &attacks, 0, 0.0, ctx.seed)?;
    write_records(&ctx.out.join("attack.csv"), &records)?;
    println!("{}", MetricsRecord::CSV_HEADER);
    for r in &records {
        println!("{}", r.csv_row());
    }
    Ok(())
}

pub fn mkrobust(ctx: &Context, args: &RunArgs) -> Result<(), CliError> {
    let run = Loaded::new(args)?;
    let model = run.checkpoint()?;
    let data = run.train_data()?;
    let r = run.cfg.robust.as_ref();
    let spec = ReprMatch {
        steps: r.map_or(200, |r| r.steps),
        step_size: r.map_or(0.1, |r| r.step_size),
        epsilon: r.and_then(|r| r.epsilon),
        normalize: r.is_some_and(|r| r.normalize),
    };
    let (dr, trace) = construct_robust_dataset(&model, &data, &spec, ctx.seed)?;
    save_dataset(&dr, ctx.out.join("d_r.rdst"))?;

    let mut text = String::from("index,source,initial,final,flagged\n");
    for i in 0..dr.len() {
        writeln!(
            text,
            "{i},{},{:.6},{:.6},{}",
            trace.sources[i],
            trace.initial(i),
            trace.last(i),
            u8::from(trace.flagged[i])
        )
        .unwrap();
    }
    fs::write(ctx.out.join("repr_trace.csv"), text)?;
    let mean_ratio = (0..dr.len())
        .filter(|&i| trace.initial(i) > 0.0)
        .map(|i| trace.last(i) / trace.initial(i))
        .sum::<f64>()
        / dr.len() as f64;
    let flagged = trace.flagged.iter().filter(|&&f| f).count();
    println!("{} robust images, mean final/initial distance {mean_ratio:.4}, {flagged} flagged", dr.len());
    Ok(())
}

pub fn mknonrobust(ctx: &Context, args: &RunArgs) -> Result<(), CliError> {
    let run = Loaded::new(args)?;
    let model = run.checkpoint()?;
    let data = run.train_data()?;
    let name = &run
        .cfg
        .nonrobust
        .as_ref()
        .ok_or_else(|| CliError::Config("nonrobust: missing section".into()))?
        .attack;
    let attack = run.cfg.attack_spec(name)?;
    let (dnr, report) = construct_nonrobust_dataset(&model, &data, &attack, ctx.seed)?;
    save_dataset(&dnr, ctx.out.join("d_nr.rdst"))?;
    println!("{} relabelled images, {:.4} reach their new label", dnr.len(), report.conversion_rate());
    Ok(())
}

pub fn mix_sweep(ctx: &Context, args: &RunArgs) -> Result<(), CliError> {
    let run = Loaded::new(args)?;
    let cfg = &run.cfg;
    let mix = cfg.mix.as_ref().ok_or_else(|| CliError::Config("mix: missing section".into()))?;
    if mix.alphas.is_empty() {
        return Err(CliError::Config("mix.alphas: empty list".into()));
    }
    let natural = run.train_data()?;
    let test = run.test_data()?;
    check_shapes(&natural, &test, "data.test")?;
    let robust = match &mix.robust {
        Some(src) => Some(src.load("mix.robust", true)?),
        None => None,
    };
    if let Some(r) = &robust {
        check_shapes(&natural, r, "mix.robust")?;
    }
    let hyper: Hyperparams = cfg.train.hyperparams(ctx.seed)?;
    let attacks = cfg.attack_specs(&cfg.attack.presets)?;
    let (ex, ey) = eval_set(&test, cfg.attack.eval_size, ctx.seed);
    let plan = SnapshotPlan::default();

    let mut text = format!("alpha,{}\n", MetricsRecord::CSV_HEADER);
    for &alpha in &mix.alphas {
        let policy = MixPolicy::new(alpha, hyper.batch_size, natural.len())
            .map_err(|e| CliError::Config(format!("mix.alphas: {e}")))?;
        let mut stream = MixStream::new(&natural, robust.as_ref(), policy, ctx.seed)
            .map_err(|e| CliError::Config(format!("mix.robust: {e}")))?
            .with_augment(hyper.augment_policy()?);
        let mut model = fresh_model(&cfg.model.arch, &natural, ctx.seed)?;
        let report = Trainer::new(&hyper, &plan).run(&mut model, &mut stream, &mut MetricsLog::in_memory())?;
        let dir = ctx.out.join(format!("alpha-{alpha}"));
        fs::create_dir_all(&dir)?;
        save_checkpoint(&model, dir.join("model.rlab"))?;
        let records = evaluate(&model, &ex, &ey, &attacks, report.steps, hyper.epochs, ctx.seed)?;
        for r in &records {
            info!("alpha {alpha}: {} nat {:.3} rob {:.3}", r.attack, r.nat_acc, r.rob_acc);
            writeln!(text, "{alpha},{}", r.csv_row()).unwrap();
        }
    }
    fs::write(ctx.out.join("sweep.csv"), &text)?;
    print!("{text}");
    Ok(())
}
