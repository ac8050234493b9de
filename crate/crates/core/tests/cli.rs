mod common;

use std::path::Path;
use std::process::{Command, Output};

use common::{rand_tensor, rng};
use pcdnet::cli::ply::ply_string;
use pcdnet::cli::{parse_ply, ExperimentConfig};
use pcdnet::pipeline::Checkpoint;
use pcdnet::Tensor;
use proptest::prelude::*;

const BIN: &str = env!("CARGO_BIN_EXE_pcdnet");

const TINY: &str = r#"# tiny smoke configuration
[data]
categories = ["sphere", "torus"]
per_category = 3
image_size = 16
points = 64

[model]
variant = "up_res_graphx"
image_size = 16
channels = [4, 8]
widths = [12, 8]
expansion = [1, 2]
points = 20

[train]
lr = 1e-3
epochs = 2
batch_size = 2

[io]
checkpoint_every = 2
"#;

fn pcdnet(dir: &Path, args: &[&str]) -> Output {
    Command::new(BIN).current_dir(dir).args(args).output().unwrap()
}

fn ok(out: &Output) {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
}

fn setup() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("c.toml"), TINY).unwrap();
    ok(&pcdnet(dir.path(), &["-c", "c.toml", "gen-data"]));
    dir
}

#[test]
fn usage_errors_exit_2_runtime_errors_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(pcdnet(dir.path(), &["frobnicate"]).status.code(), Some(2));
    assert_eq!(pcdnet(dir.path(), &["train", "--bogus"]).status.code(), Some(2));
    assert_eq!(pcdnet(dir.path(), &[]).status.code(), Some(2));
    std::fs::write(dir.path().join("bad.toml"), "[train]\nlearning_rate = 1.0\n").unwrap();
    let out = pcdnet(dir.path(), &["-c", "bad.toml", "count-macs"]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(
        err.contains("configuration error") && err.contains("learning_rate"),
        "{err}"
    );
    let out = pcdnet(dir.path(), &["eval"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn run_directory_layout_and_untrained_checkpoint() {
    let dir = setup();
    let p = dir.path();
    ok(&pcdnet(
        p,
        &["-c", "c.toml", "--run-dir", "r0", "train", "--epochs", "0"],
    ));
    let ckpt = Checkpoint::load(&p.join("r0/checkpoints/last.ckpt")).unwrap();
    assert_eq!(ckpt.counters.step, 0);
    ckpt.model().unwrap();
    assert_eq!(std::fs::read_to_string(p.join("r0/config.toml")).unwrap(), TINY);
    let resolved = std::fs::read_to_string(p.join("r0/resolved.toml")).unwrap();
    assert_eq!(ExperimentConfig::parse(&resolved).unwrap().model.points, 20);
    for f in ["loss.csv", "metrics.txt", "metrics.csv"] {
        assert!(p.join("r0").join(f).exists(), "{f}");
    }
    assert_eq!(
        std::fs::read_to_string(p.join("r0/loss.csv")).unwrap().lines().count(),
        1
    );
}

#[test]
fn deterministic_runs_and_resume_give_identical_logs() {
    let dir = setup();
    let p = dir.path();
    let base = ["-c", "c.toml", "--deterministic", "--seed", "4"];
    let train = |run: &str, extra: &[&str]| {
        let mut args: Vec<&str> = base.to_vec();
        args.extend(["--run-dir", run, "train"]);
        args.extend(extra);
        ok(&pcdnet(p, &args));
        std::fs::read_to_string(p.join(run).join("loss.csv")).unwrap()
    };
    let a = train("a", &[]);
    let b = train("b", &[]);
    assert_eq!(a, b);
    assert_eq!(a.lines().count(), 1 + 4);
    // Stop after two steps, then resume from the step-2 checkpoint.
    train("c", &["--max-steps", "2"]);
    let resumed = train("c", &["--resume", "c/checkpoints/step-00000002.ckpt"]);
    assert_eq!(resumed, a);
    assert_eq!(
        std::fs::read(p.join("a/checkpoints/last.ckpt")).unwrap(),
        std::fs::read(p.join("c/checkpoints/last.ckpt")).unwrap()
    );
}

#[test]
fn infer_interpolate_and_inspect() {
    let dir = setup();
    let p = dir.path();
    ok(&pcdnet(p, &["-c", "c.toml", "train", "--max-steps", "1"]));
    ok(&pcdnet(
        p,
        &[
            "-c",
            "c.toml",
            "infer",
            "--sample",
            "torus-0002",
            "--points",
            "200",
            "--out",
            "t.ply",
        ],
    ));
    let cloud = pcdnet::cli::read_ply(&p.join("t.ply")).unwrap();
    assert_eq!(cloud.shape(), [200, 3]);
    let out = pcdnet(
        p,
        &["-c", "c.toml", "infer", "--sample", "torus-0002", "--points", "50"],
    );
    assert_eq!(out.status.code(), Some(1));
    ok(&pcdnet(p, &["-c", "c.toml", "interpolate", "--grid", "3"]));
    assert!(p.join("runs/default/interpolate/r2-c2.ply").exists());
    ok(&pcdnet(p, &["-c", "c.toml", "inspect-mixing", "--layer", "1"]));
    let w: Tensor<f32> = pcdnet::tensor::io::load(&p.join("runs/default/mixing/layer1.pcdt")).unwrap();
    assert_eq!(w.rank(), 2);
    ok(&pcdnet(p, &["-c", "c.toml", "count-macs"]));
    assert!(std::fs::read_to_string(p.join("runs/default/macs.csv"))
        .unwrap()
        .starts_with("layer,kind,params,macs"));
}

#[test]
fn gradcheck_command_passes() {
    let dir = tempfile::tempdir().unwrap();
    let out = pcdnet(dir.path(), &["gradcheck"]);
    ok(&out);
    assert!(String::from_utf8_lossy(&out.stdout).contains("end_to_end"));
}

#[test]
fn config_round_trip_is_a_fixed_point() {
    let docs = [
        TINY.to_string(),
        String::new(),
        "[model]\nvariant = \"fc\"\nrank = 3\n[train.nn]\nkind = \"uniform_grid_with_cell\"\ncell_size = 0.25\n".into(),
        "[data.camera]\nfx = 70.0\nfy = 60.0\ncx = 31.5\ncy = 32.0\nnear = 0.5\nfar = 4.0\n[train]\nmilestones = [1, 3]\nmax_steps = 17\n".into(),
    ];
    for doc in docs {
        let a = ExperimentConfig::parse(&doc).unwrap();
        let text = a.to_toml().unwrap();
        let b = ExperimentConfig::parse(&text).unwrap();
        assert_eq!(a, b);
        assert_eq!(b.to_toml().unwrap(), text);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn ply_round_trip(seed in 0u64..100_000, n in 1usize..300) {
        let mut r = rng(seed);
        let cloud: Tensor<f32> = rand_tensor(&[n, 3], -3.0, 3.0, &mut r).cast();
        let text = ply_string(&cloud).unwrap();
        prop_assert_eq!(text.lines().nth(2).unwrap(), format!("element vertex {n}"));
        let back = parse_ply(&text).unwrap();
        prop_assert!(back.max_abs_diff(&cloud) < 1e-5);
    }
}
