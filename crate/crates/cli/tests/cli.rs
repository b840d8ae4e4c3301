use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

const TINY: &str = r#"
[data.train]
source = "synthetic"
size = 8
count = 128
seed = 1

[data.test]
source = "synthetic"
size = 8
count = 32
seed = 2

[train]
batch_size = 32
epochs = 1.0

[snapshots]
dense_interval = 2
dense_until = 1.0
sparse_interval = 1.0
attacks = ["linf-4", "rot10"]
eval_size = 32

[attack]
presets = ["none", "l2-0.25", "l2-0.5", "linf-1", "linf-8", "rot30"]
"#;

fn rlab(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rlab"))
        .args(["--threads", "1", "--out", out.to_str().unwrap()])
        .args(args)
        .env("RUST_LOG", "warn")
        .env_remove("RLAB_DATA_DIR")
        .output()
        .unwrap()
}

fn ok(out: &Path, args: &[&str]) -> String {
    let o = rlab(out, args);
    assert!(o.status.success(), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
    String::from_utf8(o.stdout).unwrap()
}

fn config(dir: &TempDir, name: &str, text: &str) -> PathBuf {
    let p = dir.path().join(name);
    fs::write(&p, text).unwrap();
    p
}

fn csv_rows(path: &Path) -> Vec<Vec<String>> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(String::from).collect())
        .collect()
}

#[test]
fn train_then_attack_reports_each_preset() {
    let dir = TempDir::new().unwrap();
    let cfg = config(&dir, "tiny.cfg", TINY);
    let out = dir.path().join("run");
    let stdout = ok(&out, &["train", "-c", cfg.to_str().unwrap()]);
    assert!(stdout.contains("final natural accuracy"), "{stdout}");
    assert!(out.join("model.rlab").exists());
    // snapshots at steps 2 and 4 for two attacks
    assert_eq!(csv_rows(&out.join("metrics.csv")).len(), 4);

    let ck = out.join("model.rlab");
    ok(&out, &["attack", "-c", cfg.to_str().unwrap(), "--checkpoint", ck.to_str().unwrap()]);
    let rows = csv_rows(&out.join("attack.csv"));
    assert_eq!(rows.len(), 6);
    // step,epoch,attack,nat_acc,rob_acc,asr,n,seed
    let none = rows.iter().find(|r| r[2] == "none").unwrap();
    assert_eq!(none[3], none[4]);
    assert!(none[5] == "0.000000" || none[5].is_empty(), "{none:?}");
    for r in &rows {
        let (nat, rob): (f64, f64) = (r[3].parse().unwrap(), r[4].parse().unwrap());
        assert!(rob <= nat + 1e-9 || r[2] == "none", "{r:?}");
        assert_eq!(r[6], "32");
    }
}

#[test]
fn missing_dataset_path_is_a_config_error() {
    let dir = TempDir::new().unwrap();
    let cfg = config(&dir, "bad.cfg", "[data.train]\nsource = \"rdst\"\n");
    let o = rlab(&dir.path().join("run"), &["train", "-c", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("data.train.path"), "{err}");
}

#[test]
fn unknown_preset_and_bad_threads_are_config_errors() {
    let dir = TempDir::new().unwrap();
    let cfg = config(&dir, "bad.cfg", "[attack]\npresets = [\"l2-7\"]\n");
    let o = rlab(&dir.path().join("run"), &["attack", "-c", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let o = Command::new(env!("CARGO_BIN_EXE_rlab"))
        .args(["--threads", "0", "report", "x.csv"])
        .current_dir(dir.path())
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn report_rejects_malformed_csv() {
    let dir = TempDir::new().unwrap();
    let p = dir.path().join("m.csv");
    fs::write(&p, "step,epoch,attack,nat_acc,rob_acc,asr,n,seed\n1,0.1,none,notanumber,0,0,10,0\n").unwrap();
    let o = rlab(dir.path(), &["report", p.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    fs::write(&p, "what,is,this\n").unwrap();
    assert_eq!(rlab(dir.path(), &["report", p.to_str().unwrap()]).status.code(), Some(2));
}

#[test]
fn report_accepts_a_header_only_csv() {
    let dir = TempDir::new().unwrap();
    let p = dir.path().join("empty.csv");
    fs::write(&p, "step,epoch,attack,nat_acc,rob_acc,asr,n,seed\n").unwrap();
    let stdout = ok(dir.path(), &["report", p.to_str().unwrap()]);
    assert!(stdout.contains("0 rows"), "{stdout}");
}

#[test]
fn report_draws_one_plot_per_attack() {
    let dir = TempDir::new().unwrap();
    let p = dir.path().join("m.csv");
    fs::write(
        &p,
        "step,epoch,attack,nat_acc,rob_acc,asr,n,seed\n\
         10,0.1,linf-8,0.5,0.1,0.8,10,0\n10,0.1,rot30,0.5,0.2,0.6,10,0\n\
         20,0.2,linf-8,0.6,0.1,0.833333,10,0\n20,0.2,rot30,0.6,0.3,0.5,10,0\n",
    )
    .unwrap();
    ok(dir.path(), &["report", p.to_str().unwrap()]);
    for f in ["m-linf-8.svg", "m-rot30.svg", "summary.txt"] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
    let svg = fs::read_to_string(dir.path().join("m-rot30.svg")).unwrap();
    assert_eq!(svg.matches("<polyline").count(), 3);
}

#[test]
fn mix_sweep_writes_one_model_per_alpha() {
    let dir = TempDir::new().unwrap();
    let base = config(&dir, "tiny.cfg", TINY);
    let out = dir.path().join("run");
    ok(&out, &["train", "-c", base.to_str().unwrap()]);
    let ck = out.join("model.rlab");
    ok(&out, &["mknonrobust", "-c", &config(&dir, "nr.cfg", &format!("{TINY}\n[nonrobust]\nattack = \"l2-0.25\"\n")).to_string_lossy(), "--checkpoint", ck.to_str().unwrap()]);
    assert!(out.join("d_nr.rdst").exists());

    let sweep = format!(
        "{}\n[mix]\nalphas = [0.0, 0.5, 1.0]\n\n[mix.robust]\nsource = \"rdst\"\npath = \"{}\"\n",
        TINY.replace(
            "presets = [\"none\", \"l2-0.25\", \"l2-0.5\", \"linf-1\", \"linf-8\", \"rot30\"]",
            "presets = [\"none\", \"l2-0.25\"]"
        ),
        out.join("d_nr.rdst").display()
    );
    let sweep = config(&dir, "sweep.cfg", &sweep);
    ok(&out, &["mix-sweep", "-c", sweep.to_str().unwrap()]);
    for a in ["0", "0.5", "1"] {
        assert!(out.join(format!("alpha-{a}/model.rlab")).exists(), "alpha {a}");
    }
    assert_eq!(csv_rows(&out.join("sweep.csv")).len(), 6);
    ok(&out, &["report", out.join("sweep.csv").to_str().unwrap()]);
    assert!(out.join("sweep-sweep.svg").exists());
}

#[test]
fn shipped_configs_parse_and_run_shortened() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let dir = TempDir::new().unwrap();
    for name in ["q1.cfg", "q2-sweep.cfg", "q3-grid.cfg"] {
        let text = fs::read_to_string(root.join(name)).unwrap();
        let short = text
            .replace("count = 8000", "count = 128")
            .replace("count = 1000", "count = 32")
            .replace("count = 2000", "count = 256")
            .replace("count = 500", "count = 32")
            .replace("size = 16", "size = 8")
            .replace("epochs = 4.0", "epochs = 0.5")
            .replace("epochs = 10.0", "epochs = 0.5")
            .replace("eval_size = 300", "eval_size = 16");
        let cfg = config(&dir, name, &short);
        let out = dir.path().join(name.trim_end_matches(".cfg"));
        ok(&out, &["train", "-c", cfg.to_str().unwrap()]);
        assert!(out.join("metrics.csv").exists(), "{name}");
    }
}

#[test]
fn diverging_training_exits_with_numerical_code() {
    let dir = TempDir::new().unwrap();
    let cfg = config(&dir, "hot.cfg", &TINY.replace("epochs = 1.0", "epochs = 1.0\nlr = 1e30"));
    let o = rlab(&dir.path().join("run"), &["train", "-c", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
}
