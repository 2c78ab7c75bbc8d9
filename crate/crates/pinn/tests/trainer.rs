use kwet_core::lbm::{initial_density, run, SimConfig, Solver};
use kwet_pinn::autodiff::{Network, Normalization};
use kwet_pinn::kpinn_loss::*;
use kwet_pinn::trainer::*;
use proptest::prelude::*;

fn small_problem() -> LossProblem<f64> {
    let mut c = SimConfig::<f64>::flat(32, 24, 6.0, 3);
    c.steps = 60;
    c.snapshot_stride = 20;
    let snaps = run(c.clone()).unwrap();
    let solver = Solver::new(c.clone()).unwrap();
    let medium = Medium::new(&c, solver.domain().mask.clone());
    let horizon = 60.0;
    let coll = sample_collocation(&medium, horizon, 64, 1).unwrap();
    let data = sample_data(&snaps, &medium, 200, 2, true, 0.1).unwrap();
    let boundary = sample_boundary(&medium, horizon, 16, 16, false, 3).unwrap();
    let substrate = c.surface.build(c.nx, c.ny).unwrap();
    let rho0 = initial_density(&c, &substrate).unwrap();
    let init = sample_init(&medium, &rho0, 32, 4).unwrap();
    LossProblem::new(medium, coll, data.train(), data.held_out(), boundary, init).unwrap()
}

fn small_net(seed: u64) -> Network<f64> {
    let norm = Normalization::new([0.0; 3], [32.0, 23.0, 60.0]).unwrap();
    Network::new(&[12, 12], norm, seed).unwrap()
}

fn quick(epochs: usize) -> TrainConfig {
    TrainConfig {
        hidden: vec![12, 12],
        adam_epochs: epochs,
        warmup_epochs: 10,
        ramp_epochs: 10,
        lbfgs_iters: 0,
        validation_interval: 5,
        patience: 1_000,
        lr: 3e-3,
        seed: 11,
        ..TrainConfig::default()
    }
}

#[test]
fn identical_seeds_give_identical_histories() {
    let p = small_problem();
    for precision in [Precision::Double, Precision::Mixed] {
        let cfg = TrainConfig { precision, ..quick(30) };
        let (mut a, mut b) = (small_net(5), small_net(5));
        let ra = train(&mut a, &p, &cfg, None, &mut Silent).unwrap();
        let rb = train(&mut b, &p, &cfg, None, &mut Silent).unwrap();
        assert_eq!(ra.history, rb.history);
        assert_eq!(a.params(), b.params());
    }
}

#[test]
fn resume_reproduces_the_continued_history() {
    let p = small_problem();
    for precision in [Precision::Double, Precision::Mixed] {
        let cfg = TrainConfig { precision, resample_every: Some(15), ..quick(40) };
        let mut straight = small_net(6);
        let full = train(&mut straight, &p, &cfg, None, &mut Silent).unwrap();

        let mut first = small_net(6);
        let part = train(&mut first, &p, &TrainConfig { adam_epochs: 23, ..cfg.clone() }, None, &mut Silent).unwrap();
        let saved = TrainState::decode(&part.state.encode()).unwrap();
        let mut resumed = small_net(6);
        let rest = train(&mut resumed, &p, &cfg, Some(saved), &mut Silent).unwrap();
        assert_eq!(rest.history, full.history, "{precision:?}");
        assert_eq!(resumed.params(), straight.params());
    }
}

#[test]
fn adam_reduces_the_loss_and_lbfgs_never_increases_it() {
    let p = small_problem();
    let cfg = TrainConfig { lbfgs_iters: 30, dropout: 0.0, ..quick(150) };
    let mut net = small_net(7);
    let r = train(&mut net, &p, &cfg, None, &mut Silent).unwrap();
    assert!(r.history.last().unwrap().total < 0.5 * r.initial_loss, "{} -> {}", r.initial_loss, r.history.last().unwrap().total);
    assert!(r.final_loss <= r.adam_exit_loss);
    assert!(r.lbfgs.unwrap().iterations > 0);
    let check = p
        .evaluate(&net, &EvalRequest { g_ads: p.medium.g_ads, weights: cfg.weights(100.0), dropout: None, gradient: false })
        .unwrap();
    assert!((check.total - r.final_loss).abs() <= 1e-12 * r.final_loss);
}

#[test]
fn best_validation_is_the_minimum_of_the_curve() {
    let p = small_problem();
    let mut net = small_net(8);
    let r = train(&mut net, &p, &quick(60), None, &mut Silent).unwrap();
    let min = r.validation.iter().cloned().fold((0, f64::INFINITY), |a, b| if b.1 < a.1 { b } else { a });
    assert_eq!(r.best_validation, Some(min));
    assert_eq!(r.validation.len(), 12);
}

#[test]
fn early_stopping_stops_after_the_patience() {
    let p = small_problem();
    // a learning rate this large makes the validation curve worse after the
    // first few checks
    let cfg = TrainConfig { lr: 0.5, patience: 10, validation_interval: 1, divergence_limit: f64::MAX, ..quick(400) };
    let mut net = small_net(9);
    let r = train(&mut net, &p, &cfg, None, &mut Silent).unwrap();
    let stop = r.stopped_early.expect("early stop");
    let (best, _) = r.best_validation.unwrap();
    assert_eq!(stop - best, 10);
    assert_eq!(r.history.len(), stop);
}

#[test]
fn divergence_aborts_with_the_last_good_network() {
    let p = small_problem();
    let cfg = TrainConfig { divergence_limit: 1e-3, ..quick(10) };
    let mut net = small_net(10);
    match train(&mut net, &p, &cfg, None, &mut Silent) {
        Err(TrainError::Diverged { epoch, last_good, .. }) => {
            assert_eq!(epoch, 0);
            assert_eq!(last_good.params(), small_net(10).params());
        }
        other => panic!("expected divergence, got {other:?}"),
    }
}

struct Recorder {
    rows: usize,
    checkpoints: Vec<usize>,
    best: usize,
}

impl Monitor for Recorder {
    fn epoch(&mut self, _row: &LogRow) -> Result<(), String> {
        self.rows += 1;
        Ok(())
    }
    fn best(&mut self, _net: &Network<f64>) -> Result<(), String> {
        self.best += 1;
        Ok(())
    }
    fn checkpoint(&mut self, state: &TrainState) -> Result<(), String> {
        self.checkpoints.push(state.epoch);
        Ok(())
    }
}

#[test]
fn monitor_sees_rows_checkpoints_and_best() {
    let p = small_problem();
    let cfg = TrainConfig { checkpoint_every: Some(7), ..quick(21) };
    let mut rec = Recorder { rows: 0, checkpoints: vec![], best: 0 };
    let mut net = small_net(12);
    let r = train(&mut net, &p, &cfg, None, &mut rec).unwrap();
    assert_eq!(rec.rows, 21);
    assert_eq!(rec.checkpoints, vec![7, 14, 21]);
    assert!(rec.best >= 1);
    assert_eq!(r.history.iter().map(|h| h.epoch).collect::<Vec<_>>(), (0..21).collect::<Vec<_>>());
    let (g, l) = (r.history[15].g_ads, r.history[15].weights.data);
    assert_eq!((g, l), curriculum(15, &cfg, p.medium.g_ads));
}

#[test]
fn minibatches_and_resampling_run() {
    let p = small_problem();
    let cfg = TrainConfig { batch_size: Some(16), resample_every: Some(4), ..quick(12) };
    let mut net = small_net(13);
    let r = train(&mut net, &p, &cfg, None, &mut Silent).unwrap();
    assert_eq!(r.history.len(), 12);
}

proptest! {
    #[test]
    fn clipped_norm_never_exceeds_the_threshold(g in prop::collection::vec(-100.0f64..100.0, 1..50), clip in 0.01f64..10.0) {
        let mut g = g;
        clip_global_norm(&mut g, clip);
        let n = g.iter().map(|v| v * v).sum::<f64>().sqrt();
        prop_assert!(n <= clip * (1.0 + 1e-12));
    }

    #[test]
    fn curriculum_stays_within_its_bounds(epoch in 0usize..200_000) {
        let (g, l) = curriculum(epoch, &TrainConfig::default(), -2.0);
        prop_assert!((-2.0..=0.0).contains(&g));
        prop_assert!((10.0..=100.0).contains(&l));
    }
}
