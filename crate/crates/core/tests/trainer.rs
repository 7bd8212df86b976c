use brushwork::nn::PredictorConfig;
use brushwork::objective::LossWithGrad;
use brushwork::train::{
    read_metrics, run_training, Checkpoint, RunOptions, TrainConfig, Trainer, METRICS_FILE,
};
use brushwork::Error;

fn cfg(batch: usize) -> TrainConfig {
    TrainConfig {
        iterations: 6,
        batch_size: batch,
        learning_rate: 1e-3,
        checkpoint_every: 3,
        log_every: 1,
        ..TrainConfig::default()
    }
}

fn param_values(t: &Trainer) -> Vec<Vec<f32>> {
    t.net()
        .store()
        .params()
        .iter()
        .map(|(_, v)| {
            v.as_tensor()
                .flatten_all()
                .unwrap()
                .to_vec1::<f32>()
                .unwrap()
        })
        .collect()
}

#[test]
fn identical_seeds_give_identical_runs() {
    let run = || {
        let mut t = Trainer::new(PredictorConfig::tiny(), cfg(8)).unwrap();
        let losses: Vec<f64> = (0..3).map(|_| t.step().unwrap().loss.total).collect();
        (losses, t.checkpoint().unwrap().to_bytes().unwrap())
    };
    let (la, ca) = run();
    let (lb, cb) = run();
    assert_eq!(la, lb);
    assert!(ca == cb, "checkpoints differ");
}

#[test]
fn zero_objective_leaves_weights_unchanged() {
    let mut t = Trainer::new(PredictorConfig::tiny(), cfg(4)).unwrap();
    let batch = t.next_batch().unwrap();
    let before = param_values(&t);
    let stats = t
        .step_with_objective(&batch, |s, _| Ok(LossWithGrad::zero(s.truth.len())))
        .unwrap();
    assert!(stats.grad_norm < 1e-8, "{}", stats.grad_norm);
    assert_eq!(before, param_values(&t));
}

#[test]
fn overfits_a_frozen_batch() {
    let mut t = Trainer::new(PredictorConfig::tiny(), cfg(4)).unwrap();
    let batch = t.next_batch().unwrap();
    let first = t.step_on(&batch).unwrap().loss.total;
    let mut last = first;
    for _ in 1..200 {
        last = t.step_on(&batch).unwrap().loss.total;
    }
    assert!(last <= 0.2 * first, "loss {first} -> {last}");
}

#[test]
fn every_parameter_receives_gradient_and_losses_are_nonnegative() {
    let mut t = Trainer::new(PredictorConfig::tiny(), cfg(8)).unwrap();
    let names: Vec<String> = t
        .net()
        .store()
        .params()
        .iter()
        .map(|(n, _)| n.clone())
        .collect();
    let mut touched = vec![false; names.len()];
    for _ in 0..100 {
        let stats = t.step().unwrap();
        assert!(stats.loss.pixel >= 0.0 && stats.loss.stroke >= 0.0 && stats.loss.total >= 0.0);
        for (flag, g) in touched.iter_mut().zip(&stats.param_grad_norms) {
            *flag |= *g > 0.0;
        }
        if touched.iter().all(|&f| f) {
            return;
        }
    }
    let missing: Vec<_> = names
        .iter()
        .zip(&touched)
        .filter(|(_, &f)| !f)
        .map(|(n, _)| n)
        .collect();
    panic!("no gradient reached {missing:?}");
}

#[test]
fn resumed_run_matches_uninterrupted_run() {
    let full = tempfile::tempdir().unwrap();
    let split = tempfile::tempdir().unwrap();
    let opts = |dir: &std::path::Path, resume| RunOptions {
        output_dir: dir.to_path_buf(),
        resume,
        print_every: 0,
    };
    let a = run_training(PredictorConfig::tiny(), cfg(4), &opts(full.path(), false)).unwrap();

    let short = TrainConfig {
        iterations: 3,
        ..cfg(4)
    };
    run_training(PredictorConfig::tiny(), short, &opts(split.path(), false)).unwrap();
    let b = run_training(PredictorConfig::tiny(), cfg(4), &opts(split.path(), true)).unwrap();
    assert_eq!(b.iteration, 6);

    let bytes_a = std::fs::read(&a.checkpoint_path).unwrap();
    let bytes_b = std::fs::read(&b.checkpoint_path).unwrap();
    assert!(bytes_a == bytes_b, "final checkpoints differ");
    assert_eq!(
        read_metrics(&full.path().join(METRICS_FILE)).unwrap(),
        read_metrics(&split.path().join(METRICS_FILE)).unwrap()
    );
    let ck = Checkpoint::load(&b.checkpoint_path).unwrap();
    assert_eq!(ck.iteration, 6);
    assert_eq!(ck.adam_step, 6);
}

#[test]
fn resume_rejects_a_different_architecture() {
    let dir = tempfile::tempdir().unwrap();
    let opts = RunOptions {
        output_dir: dir.path().to_path_buf(),
        resume: false,
        print_every: 0,
    };
    let short = TrainConfig {
        iterations: 1,
        ..cfg(2)
    };
    run_training(PredictorConfig::tiny(), short.clone(), &opts).unwrap();
    let other = PredictorConfig {
        ffn_dim: 64,
        ..PredictorConfig::tiny()
    };
    let err = run_training(
        other,
        short,
        &RunOptions {
            resume: true,
            ..opts
        },
    )
    .unwrap_err();
    assert!(matches!(err, Error::ModelMismatch(_)), "{err}");
}

#[test]
fn non_finite_loss_stops_with_a_dump() {
    let dir = tempfile::tempdir().unwrap();
    let mut t = Trainer::new(PredictorConfig::tiny(), cfg(2)).unwrap();
    t.set_dump_dir(dir.path());
    let batch = t.next_batch().unwrap();
    let err = t
        .step_with_objective(&batch, |s, _| {
            let mut r = LossWithGrad::zero(s.truth.len());
            r.loss.total = f64::NAN;
            Ok(r)
        })
        .unwrap_err();
    assert!(
        matches!(err, Error::NonFiniteLoss { iteration: 1 }),
        "{err}"
    );
    assert!(dir.path().join("nonfinite_1.json").exists());
    assert_eq!(t.iteration(), 0);
}
