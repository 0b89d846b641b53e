use gwt_core::optim::{lr_at, ScheduleConfig};
use gwt_core::train::{CHECKPOINT_FILE, METRICS_FILE, VALIDATION_FILE};
use gwt_core::{load_checkpoint, run_training, GwtError, TrainConfig};

fn copy_run() -> gwt_core::TrainOutcome {
    run_training(&TrainConfig::default(), None).unwrap()
}

#[test]
fn copy_task_loss_drops_tenfold() {
    let out = copy_run();
    let first = out.trace[0].loss;
    let tail: f64 = out.trace[out.trace.len() - 20..].iter().map(|m| m.loss).sum::<f64>() / 20.0;
    assert_eq!(out.trace.len(), 2000);
    assert!(tail < 0.1 * first, "initial {first}, final {tail}");
}

#[test]
fn copy_task_moving_average_trends_down() {
    // Single-example steps are noisy on short spans, so the 20-step moving
    // average is compared at 200-step spacing.
    let out = copy_run();
    let loss: Vec<f64> = out.trace.iter().map(|m| m.loss).collect();
    let ma: Vec<f64> = loss.windows(20).map(|w| w.iter().sum::<f64>() / 20.0).collect();
    let samples: Vec<f64> = ma.iter().step_by(200).copied().collect();
    assert!(samples.len() >= 10);
    for w in samples.windows(2) {
        assert!(w[1] <= w[0], "{samples:?}");
    }
}

#[test]
fn equal_seeds_give_identical_files() {
    let cfg = TrainConfig {
        steps: 60,
        eval_every: 20,
        d: 8,
        n: 8,
        ..TrainConfig::default()
    };
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    run_training(&cfg, Some(a.path())).unwrap();
    run_training(&cfg, Some(b.path())).unwrap();
    for f in [CHECKPOINT_FILE, METRICS_FILE, VALIDATION_FILE] {
        let (x, y) = (
            std::fs::read(a.path().join(f)).unwrap(),
            std::fs::read(b.path().join(f)).unwrap(),
        );
        assert!(!x.is_empty());
        assert_eq!(x, y, "{f} differs");
    }
    let other = TrainConfig { seed: 1, ..cfg };
    let c = tempfile::tempdir().unwrap();
    run_training(&other, Some(c.path())).unwrap();
    assert_ne!(
        std::fs::read(a.path().join(CHECKPOINT_FILE)).unwrap(),
        std::fs::read(c.path().join(CHECKPOINT_FILE)).unwrap()
    );
}

#[test]
fn divergence_aborts_and_keeps_last_checkpoint() {
    let cfg = TrainConfig {
        steps: 50,
        lr: 1e300,
        warmup: 1,
        eval_every: 1000,
        d: 8,
        n: 6,
        ..TrainConfig::default()
    };
    let dir = tempfile::tempdir().unwrap();
    match run_training(&cfg, Some(dir.path())) {
        Err(GwtError::NonFinite { .. }) => {}
        other => panic!("expected a non-finite abort, got {:?}", other.map(|o| o.trace.len())),
    }
    let (model, config) = load_checkpoint(&dir.path().join(CHECKPOINT_FILE)).unwrap();
    assert!(model.tensors().iter().all(|t| t.data.iter().all(|v| v.is_finite())));
    assert_eq!(config["lr"], 1e300);
}

#[test]
fn schedule_is_continuous_at_warmup() {
    for warmup in [1u64, 7, 4000, 123_456] {
        let cfg = ScheduleConfig {
            base_lr: 5e-4,
            warmup_steps: warmup,
        };
        let at = lr_at(&cfg, warmup).unwrap();
        let after = lr_at(&cfg, warmup + 1).unwrap();
        let decayed_formula = 5e-4 * (warmup as f64 / warmup as f64).sqrt();
        assert!((at - decayed_formula).abs() <= 1e-15);
        assert!(after < at && at - after < 5e-4 / warmup as f64 + 1e-15);
    }
}
