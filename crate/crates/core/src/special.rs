//! Exponential-integral machinery and the closed-form ergodic potential for
//! i.i.d. Rayleigh fast fading.
//!
//! With g_kα = γ_kα X_kα and X_kα ~ Exp(1), the per-channel expectation
//! E[ln(1 + Σ_k r_k X_k)] with r_k = γ_k p_k / σ² has the partial-fraction form
//!
//! ```text
//! ψ(r) = Σ_k ζ(1/r_k) Π_{ℓ≠k} r_k / (r_k - r_ℓ),     ζ(x) = eˣ E₁(x),
//! ```
//!
//! which is singular when two r coincide. Links with r_k = 0 are absent from
//! the sum and from the products.
//!
//! Where the partial-fraction weights are ill-conditioned, the stable mode
//! evaluates instead the Laplace-integral form
//!
//! ```text
//! ψ(r) = ∫₀^∞ (e^{-s}/s) (1 - Π_k 1/(1 + r_k s)) ds
//! ```
//!
//! with the trapezoid rule in t = ln s, which converges geometrically because
//! the integrand is analytic in a strip around the real axis.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::channels::{FadingKind, FadingSpec, GaussianLinkSampler};
use crate::error::{Error, Result};
use crate::game::{potential_from_loads, GameConfig, LinkMap, PowerProfile};

const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

/// Relative separation |1 - r_ℓ/r_k| below which the closed form is refused.
pub const SEPARATION_THRESHOLD: f64 = 1e-6;
/// Largest partial-fraction weight |Π r_k/(r_k - r_ℓ)| the stable mode accepts
/// before switching to quadrature.
pub const CONDITION_LIMIT: f64 = 1e2;
/// Node spacing in t = ln s for the Laplace-integral quadrature.
const QUADRATURE_STEP: f64 = 0.1;
/// e^{-e^t} is below 1e-19 beyond this t.
const QUADRATURE_UPPER: f64 = 3.8;

/// Exponential integral E₁(x) = ∫_x^∞ e^{-t}/t dt for x > 0.
pub fn exp_integral_e1(x: f64) -> Result<f64> {
    Ok(zeta(x)? * (-x).exp())
}

/// ζ(x) = ∫₀^∞ e^{-t} / (x + t) dt = eˣ E₁(x), for x > 0.
///
/// Uses the power series of E₁ below 1 and the continued fraction of eˣE₁(x)
/// above, which avoids forming eˣ for large x.
pub fn zeta(x: f64) -> Result<f64> {
    if !(x > 0.0) || x.is_nan() {
        return Err(Error::Domain {
            function: "zeta",
            value: x,
        });
    }
    if x.is_infinite() {
        return Ok(0.0);
    }
    Ok(if x < 1.0 {
        x.exp() * e1_series(x)
    } else {
        zeta_continued_fraction(x)
    })
}

fn e1_series(x: f64) -> f64 {
    let mut sum = 0.0;
    let mut term = 1.0;
    for n in 1..200 {
        let n = n as f64;
        term *= -x / n;
        let contribution = -term / n;
        sum += contribution;
        if contribution.abs() < 1e-17 * sum.abs() {
            break;
        }
    }
    -EULER_GAMMA - x.ln() + sum
}

fn zeta_continued_fraction(x: f64) -> f64 {
    const TINY: f64 = 1e-300;
    let mut b = x + 1.0;
    let mut c = 1.0 / TINY;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..10_000 {
        let an = -((i * i) as f64);
        b += 2.0;
        d = 1.0 / (an * d + b);
        c = b + an / c;
        let delta = c * d;
        h *= delta;
        if (delta - 1.0).abs() < 1e-16 {
            break;
        }
    }
    h
}

/// d/dr ζ(1/r) = 1/r - ζ(1/r)/r².
fn zeta_inverse_derivative(r: f64, zeta_value: f64) -> f64 {
    if r < 1e-2 {
        // Asymptotic series Σ (-1)ⁿ (n+1)! rⁿ; the closed form cancels for small r.
        let mut term = 1.0;
        let mut sum = 1.0;
        for n in 1..=10 {
            term *= -((n + 1) as f64) * r;
            sum += term;
        }
        sum
    } else {
        (r - zeta_value) / (r * r)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Coincident;

fn check_separation(r: &[f64]) -> std::result::Result<(), Coincident> {
    let active: Vec<f64> = r.iter().copied().filter(|x| *x > 0.0).collect();
    for (i, a) in active.iter().enumerate() {
        for b in &active[i + 1..] {
            if (1.0 - b / a).abs() < SEPARATION_THRESHOLD {
                return Err(Coincident);
            }
        }
    }
    Ok(())
}

fn partial_fraction_terms(r: &[f64]) -> std::result::Result<Vec<(usize, f64, f64)>, Coincident> {
    check_separation(r)?;
    let active: Vec<usize> = (0..r.len()).filter(|&i| r[i] > 0.0).collect();
    Ok(active
        .iter()
        .map(|&k| {
            let rk = r[k];
            let product: f64 = active.iter().filter(|&&l| l != k).map(|&l| rk / (rk - r[l])).product();
            let z = zeta(1.0 / rk).expect("positive argument");
            (k, z, product)
        })
        .collect())
}

/// ψ(r) = E[ln(1 + Σ r_k X_k)] with X_k i.i.d. Exp(1).
fn expected_log_sum(r: &[f64]) -> std::result::Result<f64, Coincident> {
    Ok(partial_fraction_terms(r)?
        .iter()
        .map(|(_, z, product)| z * product)
        .sum())
}

/// ∂ψ/∂r_j for every j, including entries with r_j = 0.
fn expected_log_sum_gradient(r: &[f64]) -> std::result::Result<Vec<f64>, Coincident> {
    let terms = partial_fraction_terms(r)?;
    let mut grad = vec![0.0; r.len()];
    for (j, g) in grad.iter_mut().enumerate() {
        let rj = r[j];
        if rj > 0.0 {
            for &(k, z, product) in &terms {
                if k == j {
                    let log_product_slope: f64 = terms
                        .iter()
                        .filter(|(l, _, _)| *l != j)
                        .map(|(l, _, _)| -(r[*l] / rj) / (rj - r[*l]))
                        .sum();
                    *g += product * (zeta_inverse_derivative(rj, z) + z * log_product_slope);
                } else {
                    *g += z * product / (r[k] - rj);
                }
            }
        } else if terms.is_empty() {
            *g = 1.0;
        } else {
            *g = terms.iter().map(|&(k, z, product)| z * product / r[k]).sum();
        }
    }
    Ok(grad)
}

/// Trapezoid nodes t_i and weights h·e^{-e^t} covering the integrand's support for `r`.
fn quadrature_nodes(r: &[f64]) -> impl Iterator<Item = (f64, f64)> {
    let total: f64 = r.iter().sum();
    let lower = -40.0 - total.max(1.0).ln();
    let n = ((QUADRATURE_UPPER - lower) / QUADRATURE_STEP).ceil() as usize;
    (0..=n).map(move |i| {
        let t = lower + i as f64 * QUADRATURE_STEP;
        (t.exp(), QUADRATURE_STEP * (-t.exp()).exp())
    })
}

/// ψ(r) by quadrature of the Laplace-integral form.
fn expected_log_sum_quadrature(r: &[f64]) -> f64 {
    quadrature_nodes(r)
        .map(|(s, w)| {
            let log_product: f64 = r.iter().map(|rk| -(rk * s).ln_1p()).sum();
            -w * log_product.exp_m1()
        })
        .sum()
}

/// ∂ψ/∂r_j = ∫₀^∞ e^{-s} Π_k (1 + r_k s)⁻¹ (1 + r_j s)⁻¹ ds by quadrature.
fn expected_log_sum_gradient_quadrature(r: &[f64]) -> Vec<f64> {
    let mut grad = vec![0.0; r.len()];
    for (s, w) in quadrature_nodes(r) {
        let product: f64 = r.iter().map(|rk| 1.0 / (1.0 + rk * s)).product();
        for (g, rj) in grad.iter_mut().zip(r) {
            *g += w * s * product / (1.0 + rj * s);
        }
    }
    grad
}

/// Largest partial-fraction weight, infinite for near-coincident parameters.
fn partial_fraction_condition(r: &[f64]) -> f64 {
    match partial_fraction_terms(r) {
        Ok(terms) => terms.iter().fold(0.0f64, |m, (_, _, w)| m.max(w.abs())),
        Err(Coincident) => f64::INFINITY,
    }
}

/// How near-coincident parameters are treated.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Separation {
    /// Report `Error::DegenerateParameters`.
    Strict,
    /// Evaluate channels whose partial-fraction weights exceed `CONDITION_LIMIT`
    /// (including coincident parameters) by quadrature.
    Stable,
}

/// The dimensionless parameters r_kα = γ_kα p_kα / σ_α².
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErgodicParams {
    pub r: LinkMap,
}

impl ErgodicParams {
    pub fn new(profile: &PowerProfile, spec: &FadingSpec, cfg: &GameConfig) -> Result<Self> {
        let variance = spec.variance.resolve(cfg)?;
        Ok(Self {
            r: cfg.link_map(|k, j, a| variance[k][j] * profile.get(k, j) / cfg.noise_power(a)),
        })
    }
}

/// Closed-form ergodic quantities for Gaussian (Rayleigh) fading with fixed variances.
#[derive(Clone, Debug)]
pub struct ErgodicModel {
    variance: LinkMap,
    separation: Separation,
}

impl ErgodicModel {
    /// Accepts specs whose gains are i.i.d. over time with the complex Gaussian law.
    pub fn new(spec: &FadingSpec, cfg: &GameConfig, separation: Separation) -> Result<Self> {
        match spec.kind {
            FadingKind::GaussianFast | FadingKind::BlockIID => {}
            found => {
                return Err(Error::WrongFadingKind {
                    expected: "GaussianFast or BlockIID",
                    found,
                })
            }
        }
        Ok(Self {
            variance: spec.variance.resolve(cfg)?,
            separation,
        })
    }

    pub fn variance(&self) -> &LinkMap {
        &self.variance
    }

    /// Per channel: the (user, slot) pairs and their r values.
    fn channel_params(
        &self,
        allocation: &[Vec<f64>],
        cfg: &GameConfig,
        channel: usize,
    ) -> (Vec<(usize, usize)>, Vec<f64>) {
        let mut links = Vec::new();
        let mut r = Vec::new();
        for k in 0..cfg.num_users() {
            if let Some(j) = cfg.slot_of(k, channel) {
                links.push((k, j));
                r.push(self.variance[k][j] * allocation[k][j] / cfg.noise_power(channel));
            }
        }
        (links, r)
    }

    fn use_quadrature(&self, r: &[f64], channel: usize) -> Result<bool> {
        match self.separation {
            Separation::Strict => {
                check_separation(r).map_err(|_| Error::DegenerateParameters { channel })?;
                Ok(false)
            }
            Separation::Stable => Ok(partial_fraction_condition(r) > CONDITION_LIMIT),
        }
    }

    fn psi(&self, r: &[f64], channel: usize) -> Result<f64> {
        if self.use_quadrature(r, channel)? {
            Ok(expected_log_sum_quadrature(r))
        } else {
            expected_log_sum(r).map_err(|_| Error::DegenerateParameters { channel })
        }
    }

    fn psi_gradient(&self, r: &[f64], channel: usize) -> Result<Vec<f64>> {
        if self.use_quadrature(r, channel)? {
            Ok(expected_log_sum_gradient_quadrature(r))
        } else {
            expected_log_sum_gradient(r).map_err(|_| Error::DegenerateParameters { channel })
        }
    }

    /// Φ̄(p) = -Σ_α b_α ψ(r_·α).
    pub fn potential(&self, allocation: &[Vec<f64>], cfg: &GameConfig) -> Result<f64> {
        let mut total = 0.0;
        for a in 0..cfg.num_channels() {
            let (_, r) = self.channel_params(allocation, cfg, a);
            total -= cfg.bandwidth(a) * self.psi(&r, a)?;
        }
        Ok(total)
    }

    /// ∂Φ̄/∂p_kα.
    pub fn gradient(&self, allocation: &[Vec<f64>], cfg: &GameConfig) -> Result<LinkMap> {
        let mut grad = cfg.zeros();
        for a in 0..cfg.num_channels() {
            let (links, r) = self.channel_params(allocation, cfg, a);
            let dpsi = self.psi_gradient(&r, a)?;
            for ((k, j), d) in links.into_iter().zip(dpsi) {
                grad[k][j] = -cfg.bandwidth(a) * self.variance[k][j] / cfg.noise_power(a) * d;
            }
        }
        Ok(grad)
    }

    /// Hessian of Φ̄ over the listed (user, slot) links, by central differences of the gradient.
    pub fn hessian(&self, allocation: &[Vec<f64>], cfg: &GameConfig, links: &[(usize, usize)]) -> Result<DMatrix<f64>> {
        let n = links.len();
        let mut h = DMatrix::zeros(n, n);
        let base: LinkMap = allocation.to_vec();
        for (col, &(k, j)) in links.iter().enumerate() {
            let step = 1e-5 * cfg.max_power(k);
            let mut up = base.clone();
            up[k][j] += step;
            let mut down = base.clone();
            down[k][j] = (down[k][j] - step).max(0.0);
            let width = up[k][j] - down[k][j];
            let gu = self.gradient(&up, cfg)?;
            let gd = self.gradient(&down, cfg)?;
            for (row, &(m, s)) in links.iter().enumerate() {
                h[(row, col)] = (gu[m][s] - gd[m][s]) / width;
            }
        }
        Ok((&h + h.transpose()) * 0.5)
    }

    /// Mean marginal utilities v̄_kα = -∂Φ̄/∂p_kα.
    pub fn mean_marginals(&self, allocation: &[Vec<f64>], cfg: &GameConfig) -> Result<LinkMap> {
        let mut v = self.gradient(allocation, cfg)?;
        v.iter_mut().flatten().for_each(|x| *x = -*x);
        Ok(v)
    }

    /// Ergodic rates ū_k = Σ_α b_α (ψ(all users) - ψ(all users but k)).
    pub fn rates(&self, allocation: &[Vec<f64>], cfg: &GameConfig) -> Result<Vec<f64>> {
        let mut rates = vec![0.0; cfg.num_users()];
        for a in 0..cfg.num_channels() {
            let (links, r) = self.channel_params(allocation, cfg, a);
            let all = self.psi(&r, a)?;
            for (i, (k, _)) in links.iter().enumerate() {
                let mut others = r.clone();
                others[i] = 0.0;
                let without = self.psi(&others, a)?;
                rates[*k] += cfg.bandwidth(a) * (all - without);
            }
        }
        Ok(rates)
    }
}

/// Closed-form ergodic potential Φ̄(p); near-coincident r on a channel is an error.
pub fn ergodic_potential_gaussian(profile: &PowerProfile, spec: &FadingSpec, cfg: &GameConfig) -> Result<f64> {
    ErgodicModel::new(spec, cfg, Separation::Strict)?.potential(profile.allocation(), cfg)
}

/// Closed-form gradient ∂Φ̄/∂p_kα; near-coincident r on a channel is an error.
pub fn ergodic_potential_gradient(profile: &PowerProfile, spec: &FadingSpec, cfg: &GameConfig) -> Result<LinkMap> {
    ErgodicModel::new(spec, cfg, Separation::Strict)?.gradient(profile.allocation(), cfg)
}

/// Ergodic rates ū_k(p) from the closed form.
pub fn ergodic_rates(profile: &PowerProfile, spec: &FadingSpec, cfg: &GameConfig) -> Result<Vec<f64>> {
    ErgodicModel::new(spec, cfg, Separation::Strict)?.rates(profile.allocation(), cfg)
}

/// Monte-Carlo estimate of E_g[Φ(p; g)]: returns (sample mean, standard error).
pub fn ergodic_potential_mc(
    profile: &PowerProfile,
    spec: &FadingSpec,
    cfg: &GameConfig,
    n_samples: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    if n_samples < 2 {
        return Err(Error::InvalidParameter("Monte-Carlo needs at least 2 samples".into()));
    }
    let mut sampler = GaussianLinkSampler::new(&spec.variance.resolve(cfg)?, seed);
    let mut gains = cfg.zeros();
    let mut load = vec![0.0; cfg.num_channels()];
    let mut mean = 0.0;
    let mut m2 = 0.0;
    for i in 0..n_samples {
        sampler.fill_gains(&mut gains);
        load.iter_mut().for_each(|y| *y = 0.0);
        for (k, j, a) in cfg.links() {
            load[a] += gains[k][j] * profile.get(k, j);
        }
        let x = potential_from_loads(&load, cfg);
        let delta = x - mean;
        mean += delta / (i + 1) as f64;
        m2 += delta * (x - mean);
    }
    let variance = m2 / (n_samples - 1) as f64;
    Ok((mean, (variance / n_samples as f64).sqrt()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channels::Variance;

    #[test]
    fn zeta_domain() {
        assert!(zeta(0.0).is_err());
        assert!(zeta(-1.0).is_err());
        assert!(zeta(f64::NAN).is_err());
    }

    #[test]
    fn zeta_large_argument_bracket() {
        let x = 1e6;
        let z = zeta(x).unwrap();
        assert!(z > 1.0 / (x + 1.0) && z < 1.0 / x);
        assert!((z * x - 1.0).abs() < 1e-5);
    }

    #[test]
    fn series_and_fraction_agree_at_switch() {
        let below = (1.0f64 - 1e-12).exp() * e1_series(1.0 - 1e-12);
        let above = zeta_continued_fraction(1.0);
        assert!((below - above).abs() < 1e-11);
    }

    #[test]
    fn near_coincident_parameters_are_refused() {
        assert!(check_separation(&[1.0, 1.0 + 1e-8]).is_err());
        assert!(check_separation(&[1.0, 0.0, 0.0, 2.0]).is_ok());
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let r = [0.7, 2.3, 0.0, 1.1];
        let grad = expected_log_sum_gradient(&r).unwrap();
        for j in 0..r.len() {
            let h = 1e-6;
            let mut up = r;
            up[j] += h;
            let mut down = r;
            down[j] = (down[j] - h).max(0.0);
            let fd = (expected_log_sum(&up).unwrap() - expected_log_sum(&down).unwrap()) / (up[j] - down[j]);
            assert!(
                (fd - grad[j]).abs() < 1e-6 * (1.0 + grad[j].abs()),
                "{j}: {fd} vs {}",
                grad[j]
            );
        }
        assert_eq!(expected_log_sum_gradient(&[0.0, 0.0]).unwrap(), vec![1.0, 1.0]);
        let tiny = expected_log_sum_gradient(&[1.09e-201, 0.0324, 0.0986, 9.4e-202]).unwrap();
        assert!(tiny.iter().all(|g| g.is_finite()), "{tiny:?}");
    }

    #[test]
    fn strict_model_reports_channel() {
        let cfg = GameConfig::full_access(2, 2, 1.0, 1.0, 1.0).unwrap();
        let spec = FadingSpec::new(FadingKind::GaussianFast, Variance::Uniform(1.0), 0);
        let p = PowerProfile::uniform(&cfg);
        match ergodic_potential_gaussian(&p, &spec, &cfg) {
            Err(Error::DegenerateParameters { channel }) => assert_eq!(channel, 0),
            other => panic!("expected degeneracy, got {other:?}"),
        }
        let stable = ErgodicModel::new(&spec, &cfg, Separation::Stable).unwrap();
        assert!(stable.potential(p.allocation(), &cfg).is_ok());
    }

    #[test]
    fn zeta_derivative_is_finite_for_tiny_parameters() {
        for r in [1e-300, 1e-200, 1e-9, 0.00999, 0.01, 0.5] {
            let d = zeta_inverse_derivative(r, zeta(1.0 / r).unwrap());
            let h = 1e-6 * r.max(1e-3);
            let fd = if r > 1e-3 {
                (zeta(1.0 / (r + h)).unwrap() - zeta(1.0 / (r - h)).unwrap()) / (2.0 * h)
            } else {
                1.0 - 2.0 * r
            };
            assert!((d - fd).abs() < 1e-8, "{r}: {d} vs {fd}");
        }
    }

    #[test]
    fn quadrature_matches_closed_form_when_separated() {
        let r = [0.05, 0.7, 2.3, 0.0, 40.0];
        let closed = expected_log_sum(&r).unwrap();
        assert!((expected_log_sum_quadrature(&r) - closed).abs() < 1e-13 * closed);
        let g = expected_log_sum_gradient(&r).unwrap();
        for (a, b) in expected_log_sum_gradient_quadrature(&r).iter().zip(&g) {
            assert!((a - b).abs() < 1e-12 * b.abs(), "{a} vs {b}");
        }
    }

    #[test]
    fn quadrature_handles_coincident_parameters() {
        let r = 0.8f64;
        let x = 1.0 / r;
        // E ln(1 + rG), G ~ Gamma(2,1): ∫ ln(1 + r g) g e^{-g} dg = 1 + (1 - x) ζ(x).
        let exact = 1.0 + (1.0 - x) * zeta(x).unwrap();
        assert!((expected_log_sum_quadrature(&[r, r]) - exact).abs() < 1e-13);
        // A single parameter reduces to ζ(1/r).
        assert!((expected_log_sum_quadrature(&[r]) - zeta(x).unwrap()).abs() < 1e-14);
    }

    #[test]
    fn mc_rejects_single_sample() {
        let cfg = GameConfig::full_access(1, 2, 1.0, 1.0, 1.0).unwrap();
        let spec = FadingSpec::new(FadingKind::GaussianFast, Variance::Uniform(1.0), 0);
        assert!(ergodic_potential_mc(&PowerProfile::uniform(&cfg), &spec, &cfg, 1, 0).is_err());
    }

    #[test]
    fn static_spec_has_no_closed_form() {
        let cfg = GameConfig::full_access(1, 2, 1.0, 1.0, 1.0).unwrap();
        let spec = FadingSpec::new(FadingKind::Static, Variance::Uniform(1.0), 0);
        assert!(ergodic_potential_gaussian(&PowerProfile::uniform(&cfg), &spec, &cfg).is_err());
    }
}
