use kwet_core::lattice::{equilibrium, weights, Q, VELOCITIES};
use kwet_core::lbm::{SimConfig, Solver, TopBoundary};
use kwet_core::surface::SolidMask;
use kwet_pinn::autodiff::{Network, Normalization};
use kwet_pinn::kpinn_loss::*;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;

fn open_medium(n: usize, tau: f64) -> Medium<f64> {
    let mut c = SimConfig::<f64>::flat(n, n, 4.0, 0);
    c.tau = tau;
    c.g_ads = 0.0;
    c.top = TopBoundary::Periodic;
    Medium::new(&c, SolidMask::empty(n, n))
}

fn walled_medium() -> Medium<f64> {
    let mut c = SimConfig::<f64>::flat(24, 20, 4.0, 3);
    c.g_ads = -1.5;
    Medium::new(&c, SolidMask::from_column_tops(&[3; 24], 20).unwrap())
}

/// Network whose output is the constant `f` everywhere.
fn constant_net(f: [f64; Q]) -> Network<f64> {
    let mut net = Network::zeros(&[4], Normalization::unit()).unwrap();
    let last = net.layers.last_mut().unwrap();
    for i in 0..Q {
        last.bias[i] = f[i].exp_m1().ln();
    }
    net
}

fn single(p: [f64; 3], m: &Medium<f64>) -> CollocationSet<f64> {
    CollocationSet::new(vec![p], m).unwrap()
}

#[test]
fn uniform_equilibrium_net_has_zero_physics_loss() {
    let m = open_medium(12, 1.0);
    let net = constant_net(equilibrium(2.0, [0.0, 0.0]));
    let (l, excluded) = physics_loss(&net, &m, &single([3.2, 4.7, 10.0], &m), 0.0).unwrap();
    assert!(l < 1e-24, "{l}");
    assert_eq!(excluded, 0);
}

/// Equilibrium plus a perturbation that leaves the mass and momentum
/// unchanged, so the residual is exactly `delta / tau`.
fn ghost_perturbed(eps: f64) -> [f64; Q] {
    let mut f = equilibrium(2.0, [0.0, 0.0]);
    f[1] += eps;
    f[3] += eps;
    f[2] -= eps;
    f[4] -= eps;
    f
}

#[test]
fn physics_loss_hand_case_and_quadratic_scaling() {
    let m = open_medium(12, 1.0);
    let set = single([5.0, 5.0, 1.0], &m);
    // R = (0, 0.05, -0.05, 0.05, -0.05, 0, ...): sum of squares 0.01
    let (l, _) = physics_loss(&constant_net(ghost_perturbed(0.05)), &m, &set, 0.0).unwrap();
    assert!((l - 0.01).abs() < 1e-12, "{l}");
    let (l3, _) = physics_loss(&constant_net(ghost_perturbed(0.15)), &m, &set, 0.0).unwrap();
    assert!((l3 - 9.0 * l).abs() < 1e-11);
    let r = residual(&constant_net(ghost_perturbed(0.05)), [5.0, 5.0, 1.0], &m, 0.0).unwrap();
    assert!((r[1] - 0.05).abs() < 1e-12 && (r[2] + 0.05).abs() < 1e-12 && r[0].abs() < 1e-12);
}

#[test]
fn physics_loss_rejects_empty_set() {
    let m = open_medium(8, 1.0);
    let empty = CollocationSet { points: vec![], plans: vec![] };
    let net = constant_net(equilibrium(1.0, [0.0, 0.0]));
    assert_eq!(physics_loss(&net, &m, &empty, 0.0), Err(LossError::EmptySet("collocation")));
}

#[test]
fn residual_outside_fluid_is_an_error() {
    let m = walled_medium();
    let net = constant_net(equilibrium(1.0, [0.0, 0.0]));
    assert!(matches!(residual(&net, [4.0, 1.0, 0.0], &m, -1.5), Err(LossError::OutsideFluid(_))));
}

#[test]
fn data_loss_hand_case_and_permutation() {
    let net = constant_net(equilibrium(1.2, [0.0, 0.0]));
    let obs = |x: f64, rho: f64| Observation { point: [x, 1.0, 0.0], rho, u: [0.0, 0.0] };
    let l = data_loss(&net, &[obs(0.0, 1.0)]).unwrap();
    assert!((l - 0.04).abs() < 1e-12, "{l}");
    assert!(data_loss(&net, &[obs(0.0, 1.2)]).unwrap() < 1e-24);
    let a = [obs(0.0, 1.0), obs(1.0, 0.7), obs(2.0, 1.5)];
    let b = [a[2], a[0], a[1]];
    assert!((data_loss(&net, &a).unwrap() - data_loss(&net, &b).unwrap()).abs() < 1e-15);
    assert_eq!(data_loss(&net, &[]), Err(LossError::EmptySet("data")));
}

#[test]
fn data_velocity_is_the_momentum_velocity() {
    let u = [0.04, -0.01];
    let net = constant_net(equilibrium(1.0, u));
    let l = data_loss(&net, &[Observation { point: [0.0; 3], rho: 1.0, u }]).unwrap();
    assert!(l < 1e-20, "{l}");
}

#[test]
fn bounce_and_periodic_hand_cases() {
    let mut f = equilibrium(1.0, [0.0, 0.0]);
    let set = BoundarySet {
        left: vec![[0.0, 5.0, 1.0]],
        right: vec![[24.0, 5.0, 1.0]],
        wall: vec![[3.0, 3.5, 2.0]],
        ..Default::default()
    };
    let (periodic, bounce) = bc_loss(&constant_net(f), &set).unwrap();
    assert!(periodic < 1e-24 && bounce < 1e-24);
    // one pair out of balance by 0.1, each opposite pair counted once
    f[1] += 0.1;
    let (_, bounce) = bc_loss(&constant_net(f), &set).unwrap();
    assert!((bounce - 0.01).abs() < 1e-12, "{bounce}");
}

#[test]
fn init_loss_is_n_delta_squared() {
    let net = constant_net(equilibrium(1.5, [0.0, 0.0]));
    let n = 7;
    let set = InitSet { points: (0..n).map(|k| [k as f64, 2.0, 0.0]).collect(), rho: vec![1.2; n] };
    let l = init_loss(&net, &set).unwrap();
    assert!((l - n as f64 * 0.09).abs() < 1e-12, "{l}");
    let exact = InitSet { points: set.points.clone(), rho: vec![1.5; n] };
    assert!(init_loss(&net, &exact).unwrap() < 1e-24);
}

fn toy_problem(seed: u64) -> (LossProblem<f64>, Network<f64>) {
    let m = walled_medium();
    let horizon = 100.0;
    let coll = sample_collocation(&m, horizon, 10, seed).unwrap();
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(seed);
    let train: Vec<Observation<f64>> = (0..10)
        .map(|_| Observation {
            point: [rng.gen_range(0.0..24.0), rng.gen_range(4.0..19.0), rng.gen_range(0.0..horizon)],
            rho: rng.gen_range(0.5..7.0),
            u: [rng.gen_range(-0.05..0.05), rng.gen_range(-0.05..0.05)],
        })
        .collect();
    let boundary = sample_boundary(&m, horizon, 5, 5, true, seed).unwrap();
    let rho0 = vec![1.0; 24 * 20];
    let init = sample_init(&m, &rho0, 5, seed).unwrap();
    let norm = Normalization::new([0.0, 0.0, 0.0], [24.0, 19.0, horizon]).unwrap();
    let net = Network::new(&[8, 8], norm, seed).unwrap();
    (LossProblem::new(m, coll, train, vec![], boundary, init).unwrap(), net)
}

#[test]
fn total_loss_gradient_matches_finite_differences() {
    for seed in 0..3 {
        let (problem, net) = toy_problem(seed);
        let req = EvalRequest { g_ads: -1.5, weights: LossWeights::default(), dropout: None, gradient: true };
        let ev = problem.evaluate(&net, &req).unwrap();
        let g = ev.gradient.unwrap();
        let value = |p: &[f64]| {
            let mut n = net.clone();
            n.set_params(p).unwrap();
            problem.evaluate(&n, &EvalRequest { gradient: false, ..req }).unwrap().total
        };
        let p0 = net.params();
        let h = 1e-6;
        let fd: Vec<f64> = (0..p0.len())
            .map(|k| {
                let mut pp = p0.clone();
                pp[k] += h;
                let up = value(&pp);
                pp[k] -= 2.0 * h;
                (up - value(&pp)) / (2.0 * h)
            })
            .collect();
        let diff: f64 = fd.iter().zip(&g).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let norm: f64 = fd.iter().map(|a| a * a).sum::<f64>().sqrt();
        assert!(diff / norm <= 1e-4, "seed {seed}: relative error {}", diff / norm);
    }
}

#[test]
fn evaluation_parts_match_standalone_losses() {
    let (problem, net) = toy_problem(9);
    let ev = problem
        .evaluate(&net, &EvalRequest { g_ads: -1.5, weights: LossWeights::default(), dropout: None, gradient: false })
        .unwrap();
    let (phys, _) = physics_loss(&net, &problem.medium, &problem.collocation, -1.5).unwrap();
    let data = data_loss(&net, &problem.train).unwrap();
    let (periodic, bounce) = bc_loss(&net, &problem.boundary).unwrap();
    let init = init_loss(&net, &problem.init).unwrap();
    let close = |a: f64, b: f64| (a - b).abs() <= 1e-12 * (1.0 + b.abs());
    assert!(close(ev.parts.phys, phys));
    assert!(close(ev.parts.data, data));
    assert!(close(ev.parts.bc_periodic, periodic));
    assert!(close(ev.parts.bc_bounce, bounce));
    assert!(close(ev.parts.init, init));
    assert!(close(ev.total, phys + 10.0 * (data + periodic + bounce + init)));
    assert!([phys, data, periodic, bounce, init].iter().all(|v| *v >= 0.0));
}

#[test]
fn taped_residual_matches_pointwise_assembly() {
    let (problem, net) = toy_problem(4);
    let m = &problem.medium;
    for &p in &problem.collocation.points {
        let taped = residual(&net, p, m, -1.5).unwrap();
        let (f, df) = net.grad_inputs(p).unwrap();
        let force = pseudopotential_force_at(|q| net.predict_point(q).unwrap().iter().sum(), p, m, -1.5).unwrap();
        let direct = residual_from_parts(&f, &df, force, m.tau).unwrap();
        for i in 0..Q {
            assert!((taped[i] - direct[i]).abs() <= 1e-12 * (1.0 + direct[i].abs()), "{p:?} {i}");
        }
    }
}

/// Simulated droplet with distributions at `t - 1`, `t` and `t + 1`.
fn lbm_truth() -> (Medium<f64>, [Vec<[f64; Q]>; 3], Vec<[f64; 2]>) {
    let mut c = SimConfig::<f64>::flat(48, 40, 10.0, 4);
    c.store_distributions = true;
    let mut solver = Solver::new(c.clone()).unwrap();
    for _ in 0..299 {
        solver.step().unwrap();
    }
    let mut frames = Vec::new();
    let mut force = Vec::new();
    for k in 0..3 {
        let d = solver.distributions();
        frames.push((0..48 * 40).map(|n| d.node(n)).collect::<Vec<_>>());
        if k == 1 {
            force = solver.force_field().unwrap();
        }
        if k < 2 {
            solver.step().unwrap();
        }
    }
    let medium = Medium::new(&c, solver.domain().mask.clone());
    (medium, frames.try_into().unwrap(), force)
}

fn rms(values: &[[f64; Q]]) -> f64 {
    (values.iter().flat_map(|r| r.iter()).map(|v| v * v).sum::<f64>() / (values.len() * Q) as f64).sqrt()
}

#[test]
fn lbm_truth_residual_is_small_and_improves_with_the_stencil() {
    let (m, frames, force) = lbm_truth();
    let (nx, ny) = (48, 40);
    let at = |frame: usize, x: usize, y: usize| frames[frame][y * nx + x];
    // interior fluid nodes clear of the wall and the lid
    let nodes: Vec<(usize, usize)> =
        (2..nx - 2).flat_map(|x| (8..ny - 3).map(move |y| (x, y))).filter(|&(x, y)| !m.domain.mask.is_solid(x, y)).collect();
    let residuals = |h: usize| -> Vec<[f64; Q]> {
        nodes
            .iter()
            .map(|&(x, y)| {
                let hf = h as f64;
                let fx: [f64; Q] = std::array::from_fn(|i| (at(1, x + h, y)[i] - at(1, x - h, y)[i]) / (2.0 * hf));
                let fy: [f64; Q] = std::array::from_fn(|i| (at(1, x, y + h)[i] - at(1, x, y - h)[i]) / (2.0 * hf));
                let ft: [f64; Q] = std::array::from_fn(|i| (at(2, x, y)[i] - at(0, x, y)[i]) / 2.0);
                residual_from_parts(&at(1, x, y), &[fx, fy, ft], force[y * nx + x], m.tau).unwrap()
            })
            .collect()
    };
    let fine = rms(&residuals(1));
    let coarse = rms(&residuals(2));
    assert!(fine < coarse, "fine {fine} coarse {coarse}");

    let norm = Normalization::new([0.0, 0.0, 0.0], [48.0, 39.0, 300.0]).unwrap();
    let mut random = Vec::new();
    for seed in 0..3 {
        let net = Network::new(&[20, 20], norm, seed).unwrap();
        for &(x, y) in &nodes {
            random.push(residual(&net, [x as f64, y as f64, 300.0], &m, m.g_ads).unwrap());
        }
    }
    let random = rms(&random);
    assert!(fine < 0.05, "truth residual {fine}");
    assert!(10.0 * fine < random, "truth {fine} random {random}");
}

#[test]
fn samplers_are_deterministic_and_fluid_only() {
    let m = walled_medium();
    let a = sample_collocation(&m, 50.0, 300, 7).unwrap();
    let b = sample_collocation(&m, 50.0, 300, 7).unwrap();
    assert_eq!(a.points, b.points);
    assert!(a.points.iter().all(|p| m.is_fluid(p[0], p[1]) && (0.0..=50.0).contains(&p[2])));
    assert_ne!(sample_collocation(&m, 50.0, 300, 8).unwrap().points, a.points);
    assert_eq!(SAMPLE_PRESETS, [1024, 2048, 4096, 8192]);
    let rho0: Vec<f64> = (0..24 * 20).map(|k| k as f64).collect();
    let i1 = sample_init(&m, &rho0, 40, 3).unwrap();
    assert_eq!(i1, sample_init(&m, &rho0, 40, 3).unwrap());
    for (p, r) in i1.points.iter().zip(&i1.rho) {
        assert!(m.is_fluid(p[0], p[1]) && p[2] == 0.0);
        assert_eq!(*r, p[1] * 24.0 + p[0]);
    }
    let bs = sample_boundary(&m, 50.0, 20, 20, false, 1).unwrap();
    assert!(bs.bottom.is_empty() && bs.left.len() == 20 && bs.wall.len() == 20);
    assert!(bs.left.iter().zip(&bs.right).all(|(l, r)| l[0] == 0.0 && r[0] == 24.0 && l[1] == r[1] && l[2] == r[2]));
    assert!(bs.wall.iter().all(|w| w[1] == 3.5));
}

#[test]
fn data_sampler_contract() {
    let mut c = SimConfig::<f64>::flat(24, 20, 5.0, 3);
    c.steps = 40;
    c.snapshot_stride = 20;
    let snaps = kwet_core::lbm::run(c.clone()).unwrap();
    let m = Medium::new(&c, SolidMask::from_column_tops(&[3; 24], 20).unwrap());
    let fluid = 24 * (20 - 4);
    let all = fluid * snaps.len();
    assert_eq!(
        sample_data(&snaps, &m, all + 1, 0, false, 0.1),
        Err(LossError::TooManyPoints { requested: all + 1, available: all })
    );
    let d = sample_data(&snaps, &m, 400, 5, true, 0.1).unwrap();
    assert_eq!(d, sample_data(&snaps, &m, 400, 5, true, 0.1).unwrap());
    assert_eq!(d.held_out().len(), 40);
    assert_eq!(d.train().len(), 360);
    assert!(d.observations.iter().all(|o| m.is_fluid(o.point[0], o.point[1])));
    let mut seen: Vec<_> = d.observations.iter().map(|o| o.point.map(|v| v.to_bits())).collect();
    seen.sort();
    seen.dedup();
    assert_eq!(seen.len(), 400);

    // the densified lower quarter is sampled about twice as often per node
    let low = |s: &DataSet<f64>| s.observations.iter().filter(|o| o.point[1] < 5.0).count() as f64;
    let (mut plain, mut dense) = (0.0, 0.0);
    for seed in 0..20 {
        plain += low(&sample_data(&snaps, &m, 200, seed, false, 0.0).unwrap());
        dense += low(&sample_data(&snaps, &m, 200, seed, true, 0.0).unwrap());
    }
    assert!(dense > 1.5 * plain, "plain {plain} dense {dense}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn total_loss_is_monotone_in_each_part(
        parts in prop::array::uniform5(0.0f64..10.0),
        bump in 0.0f64..1.0,
        which in 0usize..5,
    ) {
        let mk = |p: [f64; 5]| LossParts { phys: p[0], data: p[1], bc_periodic: p[2], bc_bounce: p[3], init: p[4] };
        let w = LossWeights::default();
        let mut more = parts;
        more[which] += bump;
        prop_assert!(total_loss(&mk(more), &w) >= total_loss(&mk(parts), &w));
        prop_assert_eq!(total_loss(&mk([0.0; 5]), &w), 0.0);
    }

    #[test]
    fn losses_are_non_negative(seed in 0u64..1000) {
        let m = walled_medium();
        let norm = Normalization::new([0.0; 3], [24.0, 19.0, 10.0]).unwrap();
        let net = Network::new(&[6], norm, seed).unwrap();
        let set = sample_collocation(&m, 10.0, 8, seed).unwrap();
        prop_assert!(physics_loss(&net, &m, &set, -1.5).unwrap().0 >= 0.0);
        let b = sample_boundary(&m, 10.0, 4, 4, true, seed).unwrap();
        let (p, q) = bc_loss(&net, &b).unwrap();
        prop_assert!(p >= 0.0 && q >= 0.0);
    }
}

#[test]
fn weights_and_lattice_are_consistent() {
    let w = weights::<f64>();
    assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-15);
    assert_eq!(VELOCITIES.len(), Q);
}
