use lmulm::checkpoint::Checkpoint;
use lmulm::data::{random_bytes, repeating_pattern, windows, Dataset};
use lmulm::model::{Model, ModelConfig, Variant};
use lmulm::training::{TrainConfig, Trainer};

fn pattern_data(n: usize) -> Dataset {
    let ex = windows(&repeating_pattern(6000, 4), n, 13);
    let (val, train) = ex.split_at(8);
    Dataset {
        train: train.to_vec(),
        val: val.to_vec(),
    }
}

fn small_model(variant: Variant) -> Model<f32> {
    Model::new(ModelConfig::new(32, 257, 16, 1, 8, variant).unwrap(), 11).unwrap()
}

fn config(steps: usize) -> TrainConfig {
    TrainConfig {
        batch: 4,
        steps,
        warmup: steps / 10,
        peak_lr: 1e-2,
        eval_every: 10,
        eval_examples: 8,
        seed: 5,
        ..TrainConfig::default()
    }
}

#[test]
fn history_independent_of_thread_count() {
    let data = pattern_data(32);
    let run = |threads| {
        let cfg = TrainConfig {
            threads: Some(threads),
            ..config(20)
        };
        let mut t = Trainer::new(small_model(Variant::LmuGlobal), cfg).unwrap();
        t.run(&data).unwrap();
        (t.history, t.model.params.tensors().into_iter().cloned().collect::<Vec<_>>())
    };
    let (h1, p1) = run(1);
    let (h3, p3) = run(3);
    assert_eq!(h1.len(), 20);
    assert_eq!(h1, h3);
    assert_eq!(p1, p3);
}

#[test]
fn resume_reproduces_uninterrupted_run() {
    let data = pattern_data(32);
    let mut full = Trainer::new(small_model(Variant::Lmu), config(30)).unwrap();
    full.run(&data).unwrap();

    let mut first = Trainer::new(small_model(Variant::Lmu), config(30)).unwrap();
    first.run_until(&data, 17).unwrap();
    let bytes = first.to_checkpoint().to_bytes();
    let ck = Checkpoint::<f32>::from_bytes(&bytes).unwrap();
    let mut resumed = Trainer::from_checkpoint(&ck, config(30)).unwrap();
    assert_eq!(resumed.step(), 17);
    resumed.run(&data).unwrap();

    assert_eq!(&full.history[17..], &resumed.history[..]);
    assert_eq!(full.evals.last(), resumed.evals.last());
    assert_eq!(full.plateau(), resumed.plateau());
    for (a, b) in full.model.params.tensors().into_iter().zip(resumed.model.params.tensors()) {
        assert_eq!(a, b);
    }
}

#[test]
fn pattern_loss_falls_across_evals() {
    let data = pattern_data(32);
    let mut t = Trainer::new(small_model(Variant::Lmu), config(150)).unwrap();
    t.run(&data).unwrap();
    let vals: Vec<f64> = t.evals.iter().filter(|e| e.step > 15).map(|e| e.val).collect();
    let rises = vals.windows(2).filter(|w| w[1] > w[0]).count();
    assert!(rises <= 1, "{vals:?}");
    assert!(*vals.last().unwrap() < 1.0, "{vals:?}");
    assert_eq!(t.evals.last().unwrap().per_position.len(), 32);
    let csv = t.history_csv();
    assert!(csv.starts_with("step,lr,train_nats,val_nats\n"));
    assert_eq!(csv.lines().count(), 151);
}

#[test]
fn random_bytes_stay_near_entropy() {
    let ex = windows(&random_bytes(8000, 2), 32, 17);
    let (val, train) = ex.split_at(16);
    let data = Dataset {
        train: train.to_vec(),
        val: val.to_vec(),
    };
    let cfg = TrainConfig {
        peak_lr: 3e-3,
        eval_examples: 16,
        ..config(60)
    };
    let mut t = Trainer::new(small_model(Variant::Lmu), cfg).unwrap();
    t.run(&data).unwrap();
    let last = t.evals.last().unwrap().val;
    assert!((last - 257f64.ln()).abs() <= 0.15, "{last}");
}

#[test]
fn divergence_aborts() {
    let data = pattern_data(32);
    let cfg = TrainConfig {
        peak_lr: 50.0,
        warmup: 1,
        divergence_window: 5,
        ..config(200)
    };
    let mut t = Trainer::new(small_model(Variant::Lmu), cfg).unwrap();
    assert!(matches!(t.run(&data), Err(lmulm::Error::Diverged(_))));
}

#[test]
fn config_validation() {
    let bad = [
        TrainConfig { warmup: 2000, ..TrainConfig::default() },
        TrainConfig { plateau_factor: 1.0, ..TrainConfig::default() },
        TrainConfig { batch: 0, ..TrainConfig::default() },
    ];
    for cfg in bad {
        assert!(matches!(cfg.validate(), Err(lmulm::Error::Config(_))));
    }
    assert!(TrainConfig::default().validate().is_ok());
}
