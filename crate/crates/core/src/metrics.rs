//! Scalar diagnostics: relative entropy to equilibrium, efficiency ratios,
//! convergence exponents and certificates, and tracking delay.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dynamics::Trajectory;
use crate::equilibrium::{random_interior_profile, sum_capacity, Environment, EquilibriumResult};
use crate::error::{Error, Result};
use crate::game::{
    marginal_utility_raw, potential, potential_hessian_static, utilities, ChannelState, GameConfig, LinkMap,
    PowerProfile,
};
use crate::special::{ErgodicModel, Separation};

/// Value returned for an infinite divergence.
pub const KL_INFINITE: f64 = f64::INFINITY;
/// Free parameter a > 1 of the entropy-constant construction.
pub const ENTROPY_PARAMETER_A: f64 = 2.0;
/// Safety factor applied to the sampled Rayleigh-quotient minimum.
pub const RAYLEIGH_SAFETY: f64 = 0.9;
/// Number of sampled points (Hessian) and rays (entropy constant).
pub const CERTIFICATE_SAMPLES: usize = 100;

fn check_same_shape(q: &PowerProfile, p: &PowerProfile) -> Result<()> {
    let (a, b) = (q.allocation(), p.allocation());
    if a.len() != b.len() || a.iter().zip(b).any(|(x, y)| x.len() != y.len()) {
        return Err(Error::ShapeMismatch("profiles belong to different games".into()));
    }
    Ok(())
}

fn row_divergence(q: &[f64], p: &[f64]) -> f64 {
    let mut total = 0.0;
    for (q, p) in q.iter().zip(p) {
        if *q > 0.0 {
            if *p <= 0.0 {
                return KL_INFINITE;
            }
            total += q * (q / p).ln();
        }
    }
    total
}

/// D(q‖p) = Σ_{q>0} q ln(q/p), or [`KL_INFINITE`] when p vanishes on the support of q.
pub fn kl_divergence(q: &PowerProfile, p: &PowerProfile) -> Result<f64> {
    Ok(kl_divergence_per_user(q, p)?.into_iter().sum())
}

/// Per-user divergences D(q_k‖p_k).
pub fn kl_divergence_per_user(q: &PowerProfile, p: &PowerProfile) -> Result<Vec<f64>> {
    check_same_shape(q, p)?;
    Ok(q.allocation()
        .iter()
        .zip(p.allocation())
        .map(|(q, p)| row_divergence(q, p))
        .collect())
}

fn ergodic_model(spec: &crate::channels::FadingSpec, cfg: &GameConfig) -> Result<ErgodicModel> {
    ErgodicModel::new(spec, cfg, Separation::Stable)
}

/// Sum of achieved rates at `profile`.
pub fn sum_rate(profile: &PowerProfile, env: Environment<'_>, cfg: &GameConfig) -> Result<f64> {
    Ok(match env {
        Environment::Static(ch) => utilities(profile, ch, cfg).iter().sum(),
        Environment::Ergodic(spec) => ergodic_model(spec, cfg)?.rates(profile.allocation(), cfg)?.iter().sum(),
    })
}

/// Potential (static or ergodic) at `profile`.
pub fn potential_value(profile: &PowerProfile, env: Environment<'_>, cfg: &GameConfig) -> Result<f64> {
    match env {
        Environment::Static(ch) => Ok(potential(profile, ch, cfg)),
        Environment::Ergodic(spec) => ergodic_model(spec, cfg)?.potential(profile.allocation(), cfg),
    }
}

/// Marginal utilities (static) or mean marginal utilities (ergodic).
pub fn marginals(allocation: &LinkMap, env: Environment<'_>, cfg: &GameConfig) -> Result<LinkMap> {
    match env {
        Environment::Static(ch) => Ok(marginal_utility_raw(allocation, ch, cfg)),
        Environment::Ergodic(spec) => ergodic_model(spec, cfg)?.mean_marginals(allocation, cfg),
    }
}

/// Sum-rate efficiency: achieved sum rate over the sum capacity.
pub fn sre(profile: &PowerProfile, env: Environment<'_>, cfg: &GameConfig) -> Result<f64> {
    sre_with_capacity(profile, env, cfg, sum_capacity(cfg, env)?)
}

/// As [`sre`] with a precomputed sum capacity.
pub fn sre_with_capacity(profile: &PowerProfile, env: Environment<'_>, cfg: &GameConfig, capacity: f64) -> Result<f64> {
    if capacity == 0.0 {
        return Err(Error::UndefinedRatio("sum capacity is zero"));
    }
    Ok(sum_rate(profile, env, cfg)? / capacity)
}

/// Equilibration level Φ(p)/Φ(q).
pub fn eql(
    profile: &PowerProfile,
    env: Environment<'_>,
    cfg: &GameConfig,
    equilibrium: &EquilibriumResult,
) -> Result<f64> {
    if equilibrium.potential_value == 0.0 {
        return Err(Error::UndefinedRatio("equilibrium potential is zero"));
    }
    Ok(potential_value(profile, env, cfg)? / equilibrium.potential_value)
}

/// Instantaneous exponents λ_k(t) = -(1/t) ln(D_k(t)/D_k(0)) for t > 0.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExponentSeries {
    pub times: Vec<f64>,
    /// `None` for users whose initial divergence is zero.
    pub per_user: Vec<Option<Vec<f64>>>,
    /// min_k λ_k(t) over users with a defined series.
    pub total: Vec<f64>,
}

pub fn instantaneous_exponent(trajectory: &Trajectory, equilibrium: &PowerProfile) -> Result<ExponentSeries> {
    let first = trajectory
        .profiles
        .first()
        .ok_or_else(|| Error::InvalidParameter("empty trajectory".into()))?;
    let d0 = kl_divergence_per_user(equilibrium, first)?;
    if d0.iter().any(|d| d.is_infinite()) {
        return Err(Error::InvalidParameter("initial divergence is infinite".into()));
    }
    let mut times = Vec::new();
    let mut per_user: Vec<Option<Vec<f64>>> = d0.iter().map(|d| (*d > 0.0).then(Vec::new)).collect();
    for (t, p) in trajectory.times.iter().zip(&trajectory.profiles) {
        if *t <= 0.0 {
            continue;
        }
        times.push(*t);
        let d = kl_divergence_per_user(equilibrium, p)?;
        for (k, series) in per_user.iter_mut().enumerate() {
            if let Some(series) = series {
                series.push(-(d[k] / d0[k]).ln() / t);
            }
        }
    }
    let total = (0..times.len())
        .map(|i| per_user.iter().flatten().map(|s| s[i]).fold(f64::INFINITY, f64::min))
        .collect();
    Ok(ExponentSeries { times, per_user, total })
}

/// Constants of the exponential convergence bound D(q‖p(t)) ≤ D(q‖p(0)) e^{-ct}.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceCertificate {
    /// Smallest KKT slack λ_k - v_kμ(q) over off-support channels; absent for interior equilibria.
    pub margin_m: Option<f64>,
    /// Conservative Rayleigh-quotient bound on the support face; absent when the face is a point.
    pub rayleigh_r: Option<f64>,
    /// Entropy constant b; absent for the strict certificate.
    pub entropy_b: Option<f64>,
    pub q0: f64,
    pub c: f64,
    pub per_user_c: BTreeMap<usize, f64>,
    pub per_user_dv: BTreeMap<usize, f64>,
    pub gamma: BTreeMap<usize, f64>,
}

fn strict_factor(gamma: f64) -> f64 {
    if gamma < 1e-8 {
        1.0 - gamma / 2.0
    } else {
        -(-gamma).exp_m1() / gamma
    }
}

fn min_positive(q: &PowerProfile) -> f64 {
    q.allocation()
        .iter()
        .flatten()
        .copied()
        .filter(|x| *x > 0.0)
        .fold(f64::INFINITY, f64::min)
}

/// Certificate for strict equilibria: c_k = γ_k⁻¹(1 - e^{-γ_k}) Δv_k with γ_k = D(q‖p0)/P_k.
pub fn strict_certificate(
    cfg: &GameConfig,
    env: Environment<'_>,
    equilibrium: &EquilibriumResult,
    p0: &PowerProfile,
) -> Result<ConvergenceCertificate> {
    if let Some((user, s)) = equilibrium.support.iter().enumerate().find(|(_, s)| s.len() != 1) {
        return Err(Error::NotStrict {
            user,
            support_size: s.len(),
        });
    }
    let q = equilibrium.snapped_profile(cfg);
    let v = marginals(q.allocation(), env, cfg)?;
    let divergence = kl_divergence(&q, p0)?;
    let mut cert = ConvergenceCertificate {
        margin_m: None,
        rayleigh_r: None,
        entropy_b: None,
        q0: min_positive(&q),
        c: f64::INFINITY,
        per_user_c: BTreeMap::new(),
        per_user_dv: BTreeMap::new(),
        gamma: BTreeMap::new(),
    };
    for k in 0..cfg.num_users() {
        let on = cfg
            .slot_of(k, equilibrium.support[k][0])
            .expect("support is accessible");
        let dv = (0..cfg.accessible(k).len())
            .filter(|j| *j != on)
            .map(|j| v[k][on] - v[k][j])
            .fold(f64::INFINITY, f64::min);
        let gamma = divergence / cfg.max_power(k);
        let ck = strict_factor(gamma) * dv;
        cert.per_user_dv.insert(k, dv);
        cert.gamma.insert(k, gamma);
        cert.per_user_c.insert(k, ck);
        cert.c = cert.c.min(ck);
    }
    cert.margin_m = cert.per_user_dv.values().copied().reduce(f64::min);
    Ok(cert)
}

/// Potential Hessian over links in `cfg.links()` order.
pub fn potential_hessian(allocation: &LinkMap, env: Environment<'_>, cfg: &GameConfig) -> Result<DMatrix<f64>> {
    let links: Vec<(usize, usize)> = cfg.links().map(|(k, j, _)| (k, j)).collect();
    match env {
        Environment::Static(ch) => Ok(potential_hessian_static(allocation, ch, cfg, &links)),
        Environment::Ergodic(spec) => ergodic_model(spec, cfg)?.hessian(allocation, cfg, &links),
    }
}

/// Orthonormal basis of {z : z = 0 off the support, per-user sums zero}.
fn face_basis(cfg: &GameConfig, support: &[Vec<usize>]) -> Option<DMatrix<f64>> {
    let links: Vec<(usize, usize, usize)> = cfg.links().collect();
    let index = |k: usize, a: usize| {
        links
            .iter()
            .position(|&(m, _, b)| m == k && b == a)
            .expect("link exists")
    };
    let mut columns = Vec::new();
    for (k, s) in support.iter().enumerate() {
        for &a in s.iter().skip(1) {
            let mut col = vec![0.0; links.len()];
            col[index(k, a)] = 1.0;
            col[index(k, s[0])] = -1.0;
            columns.push(col);
        }
    }
    if columns.is_empty() {
        return None;
    }
    let raw = DMatrix::from_fn(links.len(), columns.len(), |i, c| columns[c][i]);
    Some(raw.qr().q())
}

/// H_q(q + θz) restricted to the support of q.
fn ray_entropy(q: &[f64], z: &[f64], support: &[bool], theta: f64) -> f64 {
    let mut total = 0.0;
    for ((q, z), on) in q.iter().zip(z).zip(support) {
        if *on {
            let p = q + theta * z;
            if p <= 0.0 {
                return f64::INFINITY;
            }
            total += q * (q / p).ln();
        }
    }
    total
}

fn bisect(mut lo: f64, mut hi: f64, f: impl Fn(f64) -> f64) -> f64 {
    while hi - lo > 1e-12 {
        let mid = 0.5 * (lo + hi);
        if f(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// General certificate: c = min(m/b, r q₀/b) with sampled r and b.
pub fn general_certificate(
    cfg: &GameConfig,
    env: Environment<'_>,
    equilibrium: &EquilibriumResult,
    p0: &PowerProfile,
    seed: u64,
) -> Result<ConvergenceCertificate> {
    let q = equilibrium.snapped_profile(cfg);
    let v = marginals(q.allocation(), env, cfg)?;
    let q0 = min_positive(&q);
    let links: Vec<(usize, usize, usize)> = cfg.links().collect();
    let on_support: Vec<bool> = links.iter().map(|&(k, j, _)| q.get(k, j) > 0.0).collect();
    let qv: Vec<f64> = links.iter().map(|&(k, j, _)| q.get(k, j)).collect();

    let mut margin: Option<f64> = None;
    for (k, row) in v.iter().enumerate() {
        let lambda = equilibrium.support[k]
            .iter()
            .map(|&a| row[cfg.slot_of(k, a).expect("accessible")])
            .sum::<f64>()
            / equilibrium.support[k].len() as f64;
        for (j, &a) in cfg.accessible(k).iter().enumerate() {
            if !equilibrium.support[k].contains(&a) {
                let slack = lambda - row[j];
                margin = Some(margin.map_or(slack, |m| m.min(slack)));
            }
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let samples: Vec<(f64, PowerProfile)> = (0..CERTIFICATE_SAMPLES)
        .map(|_| {
            let t: f64 = rand::Rng::random_range(&mut rng, 0.0..1.0);
            (1.0 - t, random_interior_profile(cfg, &mut rng))
        })
        .collect();

    let rayleigh = match face_basis(cfg, &equilibrium.support) {
        None => None,
        Some(basis) => {
            let mut smallest = f64::INFINITY;
            let mut scale: f64 = 0.0;
            for (t, p) in &samples {
                let point = cfg.link_map(|k, j, _| q.get(k, j) + t * (p.get(k, j) - q.get(k, j)));
                let hessian = potential_hessian(&point, env, cfg)?;
                scale = scale.max(hessian.amax());
                let projected = basis.transpose() * &hessian * &basis;
                let eig = SymmetricEigen::new(projected).eigenvalues.min();
                smallest = smallest.min(eig);
            }
            if smallest < -1e-9 * scale.max(1.0) {
                return Err(Error::StarConvexityViolation { rayleigh: smallest });
            }
            Some(RAYLEIGH_SAFETY * smallest.max(0.0))
        }
    };

    let h0 = kl_divergence(&q, p0)?;
    if h0.is_infinite() {
        return Err(Error::InvalidParameter("initial divergence is infinite".into()));
    }
    let rays: Vec<Vec<f64>> = samples
        .iter()
        .map(|(_, p)| {
            let d: Vec<f64> = links.iter().map(|&(k, j, _)| p.get(k, j) - q.get(k, j)).collect();
            let reach = d
                .iter()
                .zip(&qv)
                .filter(|(d, _)| **d < 0.0)
                .map(|(d, q)| q / -d)
                .fold(f64::INFINITY, f64::min);
            d.iter().map(|x| x * reach).collect()
        })
        .collect();
    let g_coeffs = |z: &[f64]| -> (f64, f64) {
        let perp: f64 = z
            .iter()
            .zip(&on_support)
            .filter(|(_, on)| !**on)
            .map(|(z, _)| z.abs())
            .sum();
        let par: f64 = z
            .iter()
            .zip(&qv)
            .zip(&on_support)
            .filter(|(_, on)| **on)
            .map(|((z, q), _)| z * z / q)
            .sum();
        (perp, 0.5 * par)
    };
    let a = ENTROPY_PARAMETER_A;
    let mut h_a: f64 = 0.0;
    for z in &rays {
        let (lin, quad) = g_coeffs(z);
        let theta = bisect(0.0, 1.0, |th| {
            ray_entropy(&qv, z, &on_support, th) - a * (lin * th + quad * th * th)
        });
        h_a = h_a.max(ray_entropy(&qv, z, &on_support, theta));
    }
    let h_c = h0.max(h_a);
    let mut b: f64 = a;
    for z in &rays {
        let (lin, quad) = g_coeffs(z);
        let theta = bisect(0.0, 1.0, |th| ray_entropy(&qv, z, &on_support, th) - h_c);
        let g = lin * theta + quad * theta * theta;
        if g > 0.0 {
            b = b.max(h_c / g);
        }
    }

    let mut c = f64::INFINITY;
    if let Some(m) = margin {
        c = c.min(m / b);
    }
    if let Some(r) = rayleigh {
        c = c.min(r * q0 / b);
    }
    Ok(ConvergenceCertificate {
        margin_m: margin,
        rayleigh_r: rayleigh,
        entropy_b: Some(b),
        q0,
        c,
        per_user_c: BTreeMap::new(),
        per_user_dv: BTreeMap::new(),
        gamma: (0..cfg.num_users()).map(|k| (k, h0 / cfg.max_power(k))).collect(),
    })
}

/// L_q(p) with the seminorms |p - q|_⊥ (L¹ off the support) and ‖p - q‖_∥ (L² on it).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvolutionaryIndex {
    pub value: f64,
    pub perp: f64,
    pub parallel: f64,
}

/// L_q(p) = -Σ (p - q) v(p), given the marginals v(p).
pub fn evolutionary_index(
    profile: &PowerProfile,
    equilibrium: &EquilibriumResult,
    marginals: &LinkMap,
    cfg: &GameConfig,
) -> EvolutionaryIndex {
    let q = &equilibrium.profile;
    let mut out = EvolutionaryIndex {
        value: 0.0,
        perp: 0.0,
        parallel: 0.0,
    };
    for (k, j, a) in cfg.links() {
        let z = profile.get(k, j) - q.get(k, j);
        out.value -= z * marginals[k][j];
        if equilibrium.support[k].contains(&a) {
            out.parallel += z * z;
        } else {
            out.perp += z.abs();
        }
    }
    out.parallel = out.parallel.sqrt();
    out
}

/// Lag (in samples) of maximum normalized cross-correlation between a reference and a follower.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Correlogram {
    /// Lags from -max_lag to max_lag; positive lags mean the follower trails.
    pub lags: Vec<isize>,
    pub values: Vec<f64>,
}

impl Correlogram {
    pub fn peak_lag(&self) -> isize {
        let best = self.values.iter().enumerate().fold(
            (0, f64::NEG_INFINITY),
            |acc, (i, v)| if *v > acc.1 { (i, *v) } else { acc },
        );
        self.lags[best.0]
    }
}

/// Biased normalized cross-correlation c(ℓ) = Σ_t x̃_t ỹ_{t+ℓ} / (N σ_x σ_y) after mean removal.
pub fn cross_correlogram(reference: &[f64], follower: &[f64], max_lag: usize) -> Result<Correlogram> {
    if reference.len() != follower.len() || reference.is_empty() {
        return Err(Error::ShapeMismatch("series must be nonempty with equal length".into()));
    }
    let n = reference.len();
    let center = |x: &[f64]| -> Result<(Vec<f64>, f64)> {
        let mean = x.iter().sum::<f64>() / n as f64;
        let c: Vec<f64> = x.iter().map(|v| v - mean).collect();
        let sd = (c.iter().map(|v| v * v).sum::<f64>() / n as f64).sqrt();
        let magnitude = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if !(sd > 1e-12 * magnitude) {
            return Err(Error::UndefinedCorrelation("series has zero variance"));
        }
        Ok((c, sd))
    };
    let (x, sx) = center(reference)?;
    let (y, sy) = center(follower)?;
    let max_lag = max_lag.min(n - 1) as isize;
    let mut lags = Vec::new();
    let mut values = Vec::new();
    for lag in -max_lag..=max_lag {
        let mut s = 0.0;
        for t in 0..n as isize {
            let u = t + lag;
            if u >= 0 && u < n as isize {
                s += x[t as usize] * y[u as usize];
            }
        }
        lags.push(lag);
        values.push(s / (n as f64 * sx * sy));
    }
    Ok(Correlogram { lags, values })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrackingDelay {
    /// Delay in seconds.
    pub delay: f64,
    pub lag: isize,
    /// Correlogram averaged over the tracked links.
    pub correlogram: Correlogram,
    /// (user, channel) pairs whose series had nonzero variance.
    pub tracked_links: Vec<(usize, usize)>,
}

/// Delay of the learned power series behind the instantaneous equilibrium series.
///
/// Each link whose two series both vary contributes its normalized correlogram
/// (lags up to a quarter of the series length); the delay is the peak of their average.
pub fn tracking_delay(
    equilibrium_series: &[PowerProfile],
    learned_series: &[PowerProfile],
    sample_period: f64,
    cfg: &GameConfig,
) -> Result<TrackingDelay> {
    if equilibrium_series.len() != learned_series.len() || equilibrium_series.len() < 2 {
        return Err(Error::ShapeMismatch(
            "tracking series must have equal length of at least 2".into(),
        ));
    }
    let max_lag = equilibrium_series.len() / 4;
    let mut sum: Option<Correlogram> = None;
    let mut tracked = Vec::new();
    for (k, j, a) in cfg.links() {
        let x: Vec<f64> = equilibrium_series.iter().map(|p| p.get(k, j)).collect();
        let y: Vec<f64> = learned_series.iter().map(|p| p.get(k, j)).collect();
        let Ok(c) = cross_correlogram(&x, &y, max_lag) else {
            continue;
        };
        tracked.push((k, a));
        sum = Some(match sum {
            None => c,
            Some(mut s) => {
                s.values.iter_mut().zip(&c.values).for_each(|(a, b)| *a += b);
                s
            }
        });
    }
    let mut correlogram = sum.ok_or(Error::UndefinedCorrelation("no link varies in both series"))?;
    let count = tracked.len() as f64;
    correlogram.values.iter_mut().for_each(|v| *v /= count);
    let lag = correlogram.peak_lag();
    Ok(TrackingDelay {
        delay: lag as f64 * sample_period,
        lag,
        correlogram,
        tracked_links: tracked,
    })
}

/// Static-environment convenience for EQL along a trajectory.
pub fn eql_series(
    trajectory: &Trajectory,
    channels: &ChannelState,
    cfg: &GameConfig,
    equilibrium: &EquilibriumResult,
) -> Result<Vec<f64>> {
    trajectory
        .profiles
        .iter()
        .map(|p| eql(p, Environment::Static(channels), cfg, equilibrium))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::equilibrium::solve_static;

    fn cfg() -> GameConfig {
        GameConfig::full_access(2, 3, 1.0, 1.0, 1.0).unwrap()
    }

    #[test]
    fn divergence_basics() {
        let cfg = cfg();
        let u = PowerProfile::uniform(&cfg);
        assert_eq!(kl_divergence(&u, &u).unwrap(), 0.0);
        let v = PowerProfile::vertex(&cfg, &[0, 2]).unwrap();
        let d = kl_divergence_per_user(&v, &u).unwrap();
        assert!((d[0] - 3f64.ln()).abs() < 1e-15);
        assert_eq!(kl_divergence(&u, &v).unwrap(), KL_INFINITE);
    }

    #[test]
    fn strict_factor_limit() {
        assert!((strict_factor(1e-12) - 1.0).abs() < 1e-12);
        assert!((strict_factor(1.0) - (1.0 - (-1.0f64).exp())).abs() < 1e-15);
    }

    #[test]
    fn separate_channels_are_fully_efficient() {
        let cfg = GameConfig::full_access(2, 2, 1.0, 1.0, 1.0).unwrap();
        let ch = ChannelState::from_gains(&cfg, vec![vec![3.0, 0.1], vec![0.2, 2.0]]).unwrap();
        let eq = solve_static(&cfg, &ch, 1e-12).unwrap();
        let s = sre(&eq.profile, Environment::Static(&ch), &cfg).unwrap();
        assert!((s - 1.0).abs() < 1e-6);
        assert_eq!(eql(&eq.profile, Environment::Static(&ch), &cfg, &eq).unwrap(), 1.0);
    }

    #[test]
    fn zero_capacity_is_undefined() {
        let cfg = GameConfig::full_access(2, 2, 1.0, 1.0, 1.0).unwrap();
        let ch = ChannelState::uniform(&cfg, 0.0).unwrap();
        let p = PowerProfile::uniform(&cfg);
        assert!(matches!(
            sre(&p, Environment::Static(&ch), &cfg),
            Err(Error::UndefinedRatio(_))
        ));
        let eq = solve_static(&cfg, &ch, 1e-12).unwrap();
        assert!(eql(&p, Environment::Static(&ch), &cfg, &eq).is_err());
    }

    #[test]
    fn shifted_series_delay() {
        let x: Vec<f64> = (0..400)
            .map(|t| ((t as f64) * 0.07).sin() + 0.3 * ((t as f64) * 0.19).cos())
            .collect();
        let y: Vec<f64> = (0..400).map(|t| x[(t as isize - 3).max(0) as usize]).collect();
        let c = cross_correlogram(&x, &y, 100).unwrap();
        assert_eq!(c.peak_lag(), 3);
        assert_eq!(cross_correlogram(&x, &x, 100).unwrap().peak_lag(), 0);
        assert!(cross_correlogram(&[1.0; 10], &x[..10], 3).is_err());
    }

    #[test]
    fn non_strict_equilibrium_rejected() {
        let cfg = GameConfig::full_access(1, 2, 1.0, 1.0, 1.0).unwrap();
        let ch = ChannelState::uniform(&cfg, 1.0).unwrap();
        let eq = solve_static(&cfg, &ch, 1e-12).unwrap();
        let p0 = PowerProfile::uniform(&cfg);
        assert!(matches!(
            strict_certificate(&cfg, Environment::Static(&ch), &eq, &p0),
            Err(Error::NotStrict {
                user: 0,
                support_size: 2
            })
        ));
    }
}
