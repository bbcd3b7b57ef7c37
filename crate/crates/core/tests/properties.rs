//! Property tests for the invariants of the game, the solver and the dynamics.

use pmac::channels::{FadingKind, FadingSpec, Variance};
use pmac::dynamics::{default_dt, discrete_step, integrate_ode, safe_step_bound};
use pmac::equilibrium::{kkt_residual, random_interior_profile, solve_static, DEFAULT_TOLERANCE};
use pmac::game::{marginal_utility, potential, potential_difference, utility, ChannelState, GameConfig, PowerProfile};
use pmac::metrics::kl_divergence;
use pmac::special::{ErgodicModel, Separation};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn game(users: usize, channels: usize, seed: u64) -> (GameConfig, ChannelState, ChaCha8Rng) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cfg = GameConfig::new(
        users,
        channels,
        vec![(0..channels).collect(); users],
        (0..users).map(|_| rng.random_range(0.2..5.0)).collect(),
        (0..channels).map(|_| rng.random_range(0.2..5.0)).collect(),
        (0..channels).map(|_| rng.random_range(0.1..3.0)).collect(),
    )
    .unwrap();
    let gains = cfg.link_map(|_, _, _| rng.random_range(0.01..4.0));
    let state = ChannelState::from_gains(&cfg, gains).unwrap();
    (cfg, state, rng)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn unilateral_deviations_follow_the_potential(users in 1usize..6, channels in 2usize..6, seed in any::<u64>()) {
        let (cfg, state, mut rng) = game(users, channels, seed);
        let p = random_interior_profile(&cfg, &mut rng);
        let k = rng.random_range(0..users);
        let mut allocation = p.allocation().clone();
        allocation[k] = random_interior_profile(&cfg, &mut rng).user(k).to_vec();
        let q = PowerProfile::new(&cfg, allocation).unwrap();
        let du = utility(&q, &state, &cfg, k) - utility(&p, &state, &cfg, k);
        let dphi = potential_difference(&q, &p, &state, &cfg);
        prop_assert!((du - dphi).abs() <= 1e-10 * (1.0 + potential(&p, &state, &cfg).abs()));
    }

    #[test]
    fn safe_steps_stay_on_the_simplex(users in 1usize..6, channels in 2usize..6, seed in any::<u64>(), fraction in 0.0f64..=1.0) {
        let (cfg, state, mut rng) = game(users, channels, seed);
        let mut p = random_interior_profile(&cfg, &mut rng);
        let delta = fraction * safe_step_bound(&cfg, &state);
        for _ in 0..50 {
            p = discrete_step(&p, &state, &cfg, delta).unwrap();
            prop_assert!(p.simplex_violation(&cfg) <= 1e-9);
        }
    }

    #[test]
    fn replicator_flow_decreases_the_potential(users in 1usize..5, channels in 2usize..5, seed in any::<u64>()) {
        let (cfg, state, mut rng) = game(users, channels, seed);
        let p0 = random_interior_profile(&cfg, &mut rng);
        let traj = integrate_ode(&p0, &state, &cfg, 5.0, default_dt(&state, &cfg)).unwrap();
        let values = &traj.metrics["potential"];
        for pair in values.windows(2) {
            prop_assert!(pair[1] <= pair[0] + 1e-12 * (1.0 + pair[0].abs()));
        }
        for p in &traj.profiles {
            prop_assert!(p.simplex_violation(&cfg) <= 1e-9);
            prop_assert!(p.is_interior());
        }
    }

    #[test]
    fn static_equilibria_satisfy_kkt(users in 1usize..6, channels in 2usize..6, seed in any::<u64>()) {
        let (cfg, state, _) = game(users, channels, seed);
        let eq = solve_static(&cfg, &state, DEFAULT_TOLERANCE).unwrap();
        let v = marginal_utility(&eq.profile, &state, &cfg);
        let (residual, _) = kkt_residual(eq.profile.allocation(), &v, &cfg);
        prop_assert!(residual <= 1e-8, "residual {}", residual);
        for (k, j, a) in cfg.links() {
            let lambda = eq.multipliers[k];
            prop_assert!(v[k][j] <= lambda * (1.0 + 1e-7));
            if eq.support[k].contains(&a) {
                prop_assert!((v[k][j] - lambda).abs() <= 1e-7 * lambda);
            }
        }
    }

    #[test]
    fn kl_divergence_is_a_divergence(users in 1usize..5, channels in 2usize..5, seed in any::<u64>()) {
        let (cfg, _, mut rng) = game(users, channels, seed);
        let p = random_interior_profile(&cfg, &mut rng);
        let q = random_interior_profile(&cfg, &mut rng);
        prop_assert!(kl_divergence(&p, &p).unwrap().abs() <= 1e-12);
        prop_assert!(kl_divergence(&q, &p).unwrap() >= 0.0);
        prop_assert!((p.normalized_l1_distance(&q, &cfg) - q.normalized_l1_distance(&p, &cfg)).abs() <= 1e-15);
    }

    #[test]
    fn ergodic_potential_is_convex(users in 1usize..5, channels in 2usize..4, seed in any::<u64>(), t in 0.0f64..=1.0) {
        let (cfg, _, mut rng) = game(users, channels, seed);
        let variance = Variance::PerLink(cfg.link_map(|_, _, _| rng.random_range(0.1..3.0)));
        let spec = FadingSpec::new(FadingKind::GaussianFast, variance, 0);
        let model = ErgodicModel::new(&spec, &cfg, Separation::Stable).unwrap();
        let p = random_interior_profile(&cfg, &mut rng);
        let q = random_interior_profile(&cfg, &mut rng);
        let mix = cfg.link_map(|k, j, _| t * p.get(k, j) + (1.0 - t) * q.get(k, j));
        let fp = model.potential(p.allocation(), &cfg).unwrap();
        let fq = model.potential(q.allocation(), &cfg).unwrap();
        let fm = model.potential(&mix, &cfg).unwrap();
        prop_assert!(fm <= t * fp + (1.0 - t) * fq + 1e-9 * (1.0 + fp.abs() + fq.abs()));
    }
}
