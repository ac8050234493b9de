use pcdnet::blend::FeatureSet;
use pcdnet::data::{make_dataset, Category, Dataset, DatasetConfig, Sample, Split};
use pcdnet::pipeline::{
    evaluate, generate_dense, Checkpoint, ModelConfig, PcdNet, StepRecord, TrainConfig, Trainer, Variant,
};
use pcdnet::rng::{stream, Purpose};
use pcdnet::tensor::kernels;

fn tiny_data() -> Dataset {
    let cfg = DatasetConfig {
        categories: vec![Category::Sphere, Category::Box, Category::Torus],
        per_category: 4,
        image_size: 32,
        points: 128,
        ..DatasetConfig::default()
    };
    make_dataset(&cfg, 7).unwrap()
}

fn tiny_model(variant: Variant) -> ModelConfig {
    ModelConfig {
        variant,
        image_size: 32,
        channels: vec![4, 8],
        widths: vec![16, 8],
        expansion: vec![1, 2],
        rank: None,
        points: 48,
        features: FeatureSet::Full,
    }
}

fn train_cfg() -> TrainConfig {
    TrainConfig {
        lr: 1e-3,
        epochs: 3,
        batch_size: 2,
        ..TrainConfig::default()
    }
}

fn trainer(variant: Variant, seed: u64) -> Trainer {
    let model = PcdNet::new(&tiny_model(variant), &mut stream(seed, Purpose::Init, 0)).unwrap();
    Trainer::new(model, train_cfg(), seed).unwrap()
}

fn run(t: &mut Trainer, train: &[&Sample], until: u64) -> Vec<StepRecord> {
    let mut out = Vec::new();
    t.run(train, until, |_, r| {
        out.push(*r);
        Ok(())
    })
    .unwrap();
    out
}

#[test]
fn every_variant_trains_a_few_steps() {
    let data = tiny_data();
    let train: Vec<&Sample> = data.split(Split::Train).collect();
    for v in Variant::ALL {
        let mut t = trainer(v, 1);
        let recs = run(&mut t, &train, 3);
        assert_eq!(recs.len(), 3);
        assert!(recs.iter().all(|r| r.total.is_finite()), "{v:?}");
        let out = t
            .model
            .predict(
                &train[0].image,
                &pcdnet::pipeline::inference_cloud(&t.model, &train[0].cam, 0, 0, 0),
                &train[0].cam,
            )
            .unwrap();
        assert_eq!(out.shape(), [tiny_model(v).output_points(), 3]);
    }
}

#[test]
fn deterministic_training_is_bit_identical() {
    kernels::set_parallel(false);
    let data = tiny_data();
    let train: Vec<&Sample> = data.split(Split::Train).collect();
    let a = run(&mut trainer(Variant::UpResGraphX, 5), &train, 8);
    let b = run(&mut trainer(Variant::UpResGraphX, 5), &train, 8);
    let csv = |r: &[StepRecord]| r.iter().map(StepRecord::csv_line).collect::<Vec<_>>();
    assert_eq!(csv(&a), csv(&b));
    let c = run(&mut trainer(Variant::UpResGraphX, 6), &train, 8);
    assert_ne!(csv(&a), csv(&c));
}

#[test]
fn resume_reproduces_uninterrupted_run() {
    kernels::set_parallel(false);
    let data = tiny_data();
    let train: Vec<&Sample> = data.split(Split::Train).collect();
    let mut full = trainer(Variant::GraphX, 3);
    let total = full.total_steps(train.len());
    let all = run(&mut full, &train, total);

    let mut first = trainer(Variant::GraphX, 3);
    let head = run(&mut first, &train, 5);
    let bytes = Checkpoint::from_trainer(&first, first.epoch_of(5, train.len()) as u64)
        .encode()
        .unwrap();
    let mut resumed = Checkpoint::decode(&bytes).unwrap().into_trainer().unwrap();
    let tail = run(&mut resumed, &train, total);
    let joined: Vec<String> = head.iter().chain(&tail).map(StepRecord::csv_line).collect();
    let straight: Vec<String> = all.iter().map(StepRecord::csv_line).collect();
    assert_eq!(joined, straight);
    for ((_, a), (_, b)) in full.model.store.iter().zip(resumed.model.store.iter()) {
        assert_eq!(a, b);
    }
}

#[test]
fn learning_rate_decays_at_milestones() {
    let data = tiny_data();
    let train: Vec<&Sample> = data.split(Split::Train).collect();
    let mut t = trainer(Variant::Fc, 0);
    t.config.milestones = Some(vec![1, 2]);
    let spe = t.steps_per_epoch(train.len());
    let total = t.total_steps(train.len());
    let recs = run(&mut t, &train, total);
    for r in &recs {
        let want = 1e-3 * 0.3f64.powi(r.epoch as i32);
        assert!((r.lr - want).abs() < 1e-18, "{}", r.csv_line());
        assert_eq!(r.epoch as u64, (r.step - 1) / spe);
    }
}

#[test]
fn dense_generation_stacks_independent_chunks() {
    let data = tiny_data();
    let s = data.split(Split::Test).next().unwrap();
    let model = PcdNet::<f32>::new(&tiny_model(Variant::Fc), &mut stream(0, Purpose::Init, 0)).unwrap();
    let dense = generate_dense(&model, &s.image, &s.cam, 48 * 5, 9, 0).unwrap();
    assert_eq!(dense.shape(), [240, 3]);
    assert!(dense.is_finite());
    let single = generate_dense(&model, &s.image, &s.cam, 48, 9, 0).unwrap();
    assert_eq!(&dense.data()[..144], single.data());
    assert_ne!(&dense.data()[144..288], single.data());
    let err = generate_dense(&model, &s.image, &s.cam, 100, 9, 0).unwrap_err();
    assert!(err.to_string().contains("try 96 or 144"), "{err}");
}

#[test]
fn evaluation_covers_every_test_category() {
    let data = tiny_data();
    let test: Vec<&Sample> = data.split(Split::Test).collect();
    let model = PcdNet::<f32>::new(&tiny_model(Variant::GraphX), &mut stream(0, Purpose::Init, 0)).unwrap();
    let r = evaluate(&model, &test, Default::default(), 0, 1).unwrap();
    let cats: Vec<&str> = r.rows.iter().map(|m| m.category.as_str()).collect();
    assert_eq!(cats, ["sphere", "box", "torus", "mean"]);
    assert!(r.mean().cd > 0.0 && r.mean().iou >= 0.0);
}

#[test]
fn checkpoint_rejects_corruption() {
    let t = trainer(Variant::Fc, 0);
    let bytes = Checkpoint::from_trainer(&t, 0).encode().unwrap();
    assert_eq!(Checkpoint::decode(&bytes).unwrap(), Checkpoint::from_trainer(&t, 0));
    assert!(Checkpoint::decode(&bytes[..bytes.len() - 3]).is_err());
    let mut bad = bytes.clone();
    bad[..4].copy_from_slice(b"NOPE");
    assert_eq!(Checkpoint::decode(&bad).unwrap_err().category(), "serialization");
}
