//! Library results against independently computed references.

use std::f64::consts::PI;

use pmac::channels::{draw_block_sequence, jakes_track, FadingKind, FadingSpec, JakesGenerator, Variance};
use pmac::dynamics::{discrete_step, safe_step_bound};
use pmac::equilibrium::{solve_static, DEFAULT_TOLERANCE};
use pmac::game::{marginal_utility, ChannelState, GameConfig, PowerProfile};
use pmac::special::{exp_integral_e1, zeta, ErgodicModel, Separation};
use pmac::Error;

/// Composite Simpson rule with `n` (even) intervals.
fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let h = (b - a) / n as f64;
    let inner: f64 = (1..n)
        .map(|i| f(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 })
        .sum();
    (f(a) + inner + f(b)) * h / 3.0
}

/// J₀(x) = (1/π) ∫₀^π cos(x sin θ) dθ.
fn bessel_j0(x: f64) -> f64 {
    simpson(|t| (x * t.sin()).cos(), 0.0, PI, 2000) / PI
}

#[test]
fn e1_matches_tabulated_values() {
    // Abramowitz & Stegun, table 5.1.
    for (x, e1) in [
        (0.5, 0.5597735947761608),
        (1.0, 0.21938393439552029),
        (2.0, 0.04890051070806112),
    ] {
        assert!((exp_integral_e1(x).unwrap() - e1).abs() < 1e-14 * e1.max(1e-2) * 10.0);
    }
}

#[test]
fn zeta_matches_direct_quadrature() {
    // ζ(x) = ∫₀^∞ e^{-t}/(x+t) dt, with t = s/(1-s) mapping onto [0, 1).
    for x in [0.05, 0.3, 1.0, 2.5, 7.0, 40.0] {
        let f = |s: f64| {
            if s >= 1.0 {
                return 0.0;
            }
            let t = s / (1.0 - s);
            (-t).exp() / (x + t) / (1.0 - s).powi(2)
        };
        let reference = simpson(f, 0.0, 1.0, 200_000);
        let z = zeta(x).unwrap();
        assert!((z - reference).abs() < 1e-9 * reference, "x = {x}: {z} vs {reference}");
    }
}

fn one_channel_model(r: &[f64]) -> (GameConfig, ErgodicModel, Vec<Vec<f64>>) {
    let k = r.len();
    let cfg = GameConfig::new(k, 2, vec![vec![0, 1]; k], vec![1.0; k], vec![1.0; 2], vec![1.0; 2]).unwrap();
    // Channel 1 is left idle so that Φ̄ only sees channel 0.
    let variance = Variance::PerLink(r.iter().map(|x| vec![*x, 0.0]).collect());
    let spec = FadingSpec::new(FadingKind::GaussianFast, variance, 0);
    let model = ErgodicModel::new(&spec, &cfg, Separation::Stable).unwrap();
    (cfg, model, vec![vec![1.0, 0.0]; k])
}

#[test]
fn single_user_ergodic_potential_matches_integral() {
    // E ln(1 + r g) = ∫₀^∞ ln(1 + r t) e^{-t} dt for g ~ Exp(1), integrated in s = ln t.
    for r in [0.01, 0.4, 1.0, 5.0, 80.0] {
        let (cfg, model, p) = one_channel_model(&[r]);
        let reference = simpson(|s| (r * s.exp()).ln_1p() * (s - s.exp()).exp(), -40.0, 4.5, 20_000);
        let phi = model.potential(&p, &cfg).unwrap();
        assert!((phi + reference).abs() < 1e-9 * reference, "r = {r}");
    }
}

#[test]
fn two_user_ergodic_potential_matches_double_integral() {
    let reference = |r1: f64, r2: f64| {
        let inner = |x: f64| simpson(|y| (r1 * x + r2 * y).ln_1p() * (-y).exp(), 0.0, 40.0, 1600);
        simpson(|x| inner(x) * (-x).exp(), 0.0, 40.0, 1600)
    };
    // Well separated, nearly coincident and coincident parameters.
    for (r1, r2) in [(0.3, 2.0), (1.0, 1.0 + 1e-7), (0.7, 0.7)] {
        let (cfg, model, p) = one_channel_model(&[r1, r2]);
        let expected = reference(r1, r2);
        let phi = model.potential(&p, &cfg).unwrap();
        assert!(
            (phi + expected).abs() < 1e-7,
            "r = ({r1}, {r2}): {phi} vs {}",
            -expected
        );
    }
}

#[test]
fn ergodic_gradient_matches_finite_differences() {
    let cfg = GameConfig::full_access(3, 2, 1.0, 1.0, 0.8).unwrap();
    let variance = Variance::PerLink(vec![vec![1.0, 0.5], vec![0.7, 1.5], vec![2.0, 0.3]]);
    let model = ErgodicModel::new(
        &FadingSpec::new(FadingKind::GaussianFast, variance, 0),
        &cfg,
        Separation::Stable,
    )
    .unwrap();
    let p = vec![vec![0.3, 0.7], vec![0.55, 0.45], vec![0.9, 0.1]];
    let grad = model.gradient(&p, &cfg).unwrap();
    for (k, j, _) in cfg.links() {
        let h = 1e-6;
        let mut up = p.clone();
        up[k][j] += h;
        let mut down = p.clone();
        down[k][j] -= h;
        let fd = (model.potential(&up, &cfg).unwrap() - model.potential(&down, &cfg).unwrap()) / (2.0 * h);
        assert!(
            (fd - grad[k][j]).abs() < 1e-7 * grad[k][j].abs().max(1.0),
            "link ({k}, {j})"
        );
    }
}

/// Single-user water-filling by bisection on the water level μ: p_α = (b_α μ - σ_α²/g_α)⁺.
fn water_filling(gains: &[f64], bandwidth: &[f64], noise: &[f64], budget: f64) -> Vec<f64> {
    let alloc = |mu: f64| -> Vec<f64> {
        (0..gains.len())
            .map(|a| (bandwidth[a] * mu - noise[a] / gains[a]).max(0.0))
            .collect()
    };
    let (mut lo, mut hi) = (0.0, 1e6);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if alloc(mid).iter().sum::<f64>() > budget {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    alloc(0.5 * (lo + hi))
}

#[test]
fn single_user_equilibrium_is_water_filling() {
    let gains = [1.2, 0.4, 2.5, 0.05];
    let bandwidth = [1.0, 1.5, 0.8, 1.0];
    let noise = [1.0, 0.5, 2.0, 1.0];
    let cfg = GameConfig::new(
        1,
        4,
        vec![vec![0, 1, 2, 3]],
        vec![3.0],
        bandwidth.to_vec(),
        noise.to_vec(),
    )
    .unwrap();
    let channels = ChannelState::from_gains(&cfg, vec![gains.to_vec()]).unwrap();
    let eq = solve_static(&cfg, &channels, DEFAULT_TOLERANCE).unwrap();
    let reference = water_filling(&gains, &bandwidth, &noise, 3.0);
    let expected = PowerProfile::new(&cfg, vec![reference]).unwrap();
    assert!(
        eq.profile.l1_distance(&expected) < 1e-8,
        "{:?} vs {:?}",
        eq.profile,
        expected
    );
    assert_eq!(eq.support[0].len(), 3);
}

#[test]
fn block_fading_gains_are_exponential() {
    // Kolmogorov-Smirnov test of |h|² against Exp with mean γ; 1.63/√n is the 1% critical value.
    let cfg = GameConfig::full_access(1, 2, 1.0, 1.0, 1.0).unwrap();
    let gamma = [0.5, 2.0];
    let spec = FadingSpec::new(FadingKind::BlockIID, Variance::PerLink(vec![gamma.to_vec()]), 11);
    let n = 20_000;
    let states = draw_block_sequence(&spec, &cfg, n).unwrap();
    for (j, g) in gamma.iter().enumerate() {
        let mut x: Vec<f64> = states.iter().map(|s| s.gain(0, j)).collect();
        x.sort_by(f64::total_cmp);
        let d = x
            .iter()
            .enumerate()
            .map(|(i, v)| {
                let cdf = 1.0 - (-v / g).exp();
                (cdf - i as f64 / n as f64)
                    .abs()
                    .max(((i + 1) as f64 / n as f64 - cdf).abs())
            })
            .fold(0.0, f64::max);
        assert!(d < 1.63 / (n as f64).sqrt(), "slot {j}: KS statistic {d}");
    }
}

#[test]
fn jakes_autocorrelation_follows_bessel() {
    let cfg = GameConfig::full_access(1, 2, 1.0, 1.0, 1.0).unwrap();
    let fd = 100.0;
    let (nu, speed) = (1e9, fd * pmac::channels::SPEED_OF_LIGHT / 1e9);
    let lags = [0.0, 0.5e-3, 1e-3, 2e-3, 3.83e-3, 6e-3];
    let mut acc = vec![0.0; lags.len()];
    let mut power = 0.0;
    let seeds = 400;
    for seed in 0..seeds {
        let spec = FadingSpec::jakes(Variance::Uniform(1.5), nu, vec![speed], 1e-3, seed);
        let generator = JakesGenerator::new(&spec, &cfg).unwrap();
        let h0 = generator.coefficients_at(0.0)[0][0];
        power += h0.norm_sqr();
        for (i, tau) in lags.iter().enumerate() {
            acc[i] += (h0 * generator.coefficients_at(*tau)[0][0].conj()).re;
        }
    }
    assert!((power / seeds as f64 / 1.5 - 1.0).abs() < 0.15);
    for (i, tau) in lags.iter().enumerate() {
        let measured = acc[i] / seeds as f64 / 1.5;
        let expected = bessel_j0(2.0 * PI * fd * tau);
        assert!(
            (measured - expected).abs() < 0.12,
            "τ = {tau}: {measured} vs {expected}"
        );
    }
    let track = jakes_track(
        &FadingSpec::jakes(Variance::Uniform(1.5), nu, vec![speed], 1e-3, 0),
        &cfg,
        5,
    )
    .unwrap();
    assert_eq!(track.len(), 5);
}

#[test]
fn naive_step_beyond_the_bound_leaves_the_simplex() {
    // Negative control: the safe bound is what keeps the multiplicative update feasible.
    let cfg = GameConfig::full_access(2, 2, 1.0, 1.0, 1.0).unwrap();
    let channels = ChannelState::from_gains(&cfg, vec![vec![4.0, 0.1], vec![0.2, 3.0]]).unwrap();
    let p = PowerProfile::new(&cfg, vec![vec![0.2, 0.8], vec![0.5, 0.5]]).unwrap();
    let bound = safe_step_bound(&cfg, &channels);
    let delta = 20.0 * bound;
    let v = marginal_utility(&p, &channels, &cfg);
    let naive: Vec<Vec<f64>> = (0..2)
        .map(|k| {
            let avg: f64 = (0..2).map(|j| p.get(k, j) * v[k][j]).sum::<f64>() / cfg.max_power(k);
            (0..2).map(|j| p.get(k, j) * (1.0 + delta * (v[k][j] - avg))).collect()
        })
        .collect();
    assert!(naive.iter().flatten().any(|x| *x < 0.0), "{naive:?}");
    assert!(matches!(
        discrete_step(&p, &channels, &cfg, delta),
        Err(Error::StepTooLarge { .. })
    ));
    let safe = discrete_step(&p, &channels, &cfg, bound).unwrap();
    assert!(safe.allocation().iter().flatten().all(|x| *x >= 0.0));
}
