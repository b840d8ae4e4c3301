use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use robustlab::attacks::AttackSpec;
use robustlab::data::{MixPolicy, MixStream, SyntheticSpec};
use robustlab::harness::{
    eval_subset, evaluate, read_metrics_csv, train, Hyperparams, MetricsLog, Schedule, SnapshotPlan, Trainer,
};
use robustlab::nn::{checkpoint_to_bytes, MicroResNet};

fn hyper(batch: usize, lr: f64) -> Hyperparams {
    Hyperparams {
        batch_size: batch,
        lr,
        weight_decay: 5e-4,
        momentum: 0.9,
        epochs: 1.0,
        schedule: Schedule::EpochPeriod(100),
        augmentation: "none".into(),
        seed: 5,
    }
}

fn plan(attacks: &[&str]) -> SnapshotPlan {
    SnapshotPlan {
        dense_interval: 4,
        dense_until: 1.0,
        sparse_interval: 1.0,
        attacks: attacks.iter().map(|s| s.to_string()).collect(),
        eval_size: 40,
    }
}

#[test]
fn zero_budget_attack_has_no_successes() {
    let data = SyntheticSpec::new(8, 3, 40, 1).generate().unwrap();
    let model = MicroResNet::small([3, 8, 8], 10).build(&mut ChaCha8Rng::seed_from_u64(0)).unwrap();
    let (x, y) = data.all();
    let attacks = [AttackSpec::l2(0.0, 0.1, 5), AttackSpec::linf(0.0, 0.01, 5)];
    for r in evaluate(&model, &x, &y, &attacks, 0, 0.0, 0).unwrap() {
        assert_eq!(r.rob_acc, r.nat_acc);
        assert!(r.asr.unwrap_or(0.0) == 0.0);
        assert_eq!(r.identity_residual(), 0);
    }
}

#[test]
fn runs_with_the_same_seed_write_identical_files() {
    let data = SyntheticSpec::new(8, 3, 96, 2).generate().unwrap();
    let test = SyntheticSpec::new(8, 3, 60, 3).generate().unwrap();
    let (ex, ey) = eval_subset(&test, 40, 0);
    assert_eq!(ex.batch_size(), 40);
    let h = hyper(16, 0.02);
    let p = plan(&["linf-2", "rot10"]);
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str| {
        let mut model = MicroResNet::small([3, 8, 8], 10).build(&mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let mut stream = MixStream::new(&data, None, MixPolicy::new(0.0, 16, data.len()).unwrap(), h.seed).unwrap();
        let path = dir.path().join(name);
        let mut log = MetricsLog::create(&path).unwrap();
        let report = train(&mut model, &mut stream, &h, &p, (&ex, &ey), &mut log).unwrap();
        (std::fs::read(&path).unwrap(), checkpoint_to_bytes(&model), report)
    };
    let (csv_a, ck_a, report) = run("a.csv");
    let (csv_b, ck_b, _) = run("b.csv");
    assert_eq!(csv_a, csv_b);
    assert_eq!(ck_a, ck_b);

    // 96 / 16 = 6 steps: snapshots at 4 and at the end of the epoch
    assert_eq!(report.snapshot_steps, vec![4, 6]);
    assert_eq!(report.records.len(), 4);
    assert!(report.records.iter().all(|r| r.identity_residual() == 0));

    let back = read_metrics_csv(std::str::from_utf8(&csv_a).unwrap()).unwrap();
    assert_eq!(back.len(), report.records.len());
    for (b, r) in back.iter().zip(&report.records) {
        assert_eq!((b.step, &b.attack, b.n, b.seed), (r.step, &r.attack, r.n, r.seed));
        assert!((b.epoch - r.epoch).abs() < 1e-4);
        assert!((b.nat_acc - r.nat_acc).abs() < 1e-6);
        assert!((b.rob_acc - r.rob_acc).abs() < 1e-6);
        assert_eq!(b.counts, r.counts);
    }
}

#[test]
fn metrics_reader_rejects_malformed_files() {
    assert!(read_metrics_csv("").is_err());
    assert!(read_metrics_csv("step,epoch\n1,2\n").is_err());
    let header = "step,epoch,attack,nat_acc,rob_acc,asr,n,seed";
    assert!(read_metrics_csv(&format!("{header}\n1,0.1,x,0.5,0.4\n")).is_err());
    assert!(read_metrics_csv(&format!("{header}\n1,0.1,x,1.5,0.4,,10,0\n")).is_err());
    assert_eq!(read_metrics_csv(&format!("{header}\n1,0.1,x,0.5,0.5,,10,0\n")).unwrap().len(), 1);
}

#[test]
fn first_epoch_lowers_the_training_loss() {
    let data = SyntheticSpec::new(16, 3, 6400, 4).generate().unwrap();
    let mut model = MicroResNet::small([3, 16, 16], 10).build(&mut ChaCha8Rng::seed_from_u64(0)).unwrap();
    let h = hyper(64, 0.02);
    let mut stream = MixStream::new(&data, None, MixPolicy::new(0.0, 64, data.len()).unwrap(), h.seed).unwrap();
    let p = plan(&[]);
    let report = Trainer::new(&h, &p).run(&mut model, &mut stream, &mut MetricsLog::in_memory()).unwrap();
    assert_eq!(report.steps, 100);
    let mean = |s: &[f64]| s.iter().sum::<f64>() / s.len() as f64;
    let (head, tail) = (mean(&report.losses[..20]), mean(&report.losses[80..]));
    assert!(tail < head, "loss {head:.3} -> {tail:.3}");
}

#[test]
fn trainer_checks_its_inputs() {
    let data = SyntheticSpec::new(8, 3, 32, 5).generate().unwrap();
    let mut model = MicroResNet::small([3, 8, 8], 10).build(&mut ChaCha8Rng::seed_from_u64(0)).unwrap();
    let h = hyper(16, 0.02);
    let p = plan(&[]);
    let mut stream = MixStream::new(&data, None, MixPolicy::new(0.0, 8, 32).unwrap(), 0).unwrap();
    assert!(Trainer::new(&h, &p).run(&mut model, &mut stream, &mut MetricsLog::in_memory()).is_err());
    assert!(Trainer::new(&h, &p).with_attack_names(&["nope".to_string()]).is_err());
    let bad = Hyperparams {
        augmentation: "wild".into(),
        ..h.clone()
    };
    let mut stream = MixStream::new(&data, None, MixPolicy::new(0.0, 16, 32).unwrap(), 0).unwrap();
    assert!(Trainer::new(&bad, &p).run(&mut model, &mut stream, &mut MetricsLog::in_memory()).is_err());
}
