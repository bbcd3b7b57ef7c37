//! Replicator learning: the continuous flow ṗ_kα = p_kα (v_kα - v_k) and its
//! discrete stochastic-approximation counterpart driven by fading gains.

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::channels::{BlockFadingSource, FadingKind, FadingSpec, GaussianLinkSampler};
use crate::error::{Error, Result};
use crate::game::{
    marginal_utility_bound, marginal_utility_raw, potential, ChannelState, GameConfig, LinkMap, PowerProfile,
};
use crate::special::{ErgodicModel, Separation};

/// Lower clamp on initial powers relative to P_k, keeping KL divergences finite.
pub const INTERIOR_FLOOR: f64 = 1e-12;

/// Step sizes δ(n) for the discrete scheme, indexed from n = 1.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum StepSchedule {
    Constant {
        delta: f64,
    },
    /// δ(n) = δ₀ / n.
    Harmonic {
        delta0: f64,
    },
}

impl StepSchedule {
    pub fn validate(&self) -> Result<()> {
        let value = match self {
            StepSchedule::Constant { delta } => *delta,
            StepSchedule::Harmonic { delta0 } => *delta0,
        };
        if value.is_finite() && value > 0.0 {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!(
                "step size must be positive, got {value}"
            )))
        }
    }

    pub fn step(&self, n: usize) -> f64 {
        match self {
            StepSchedule::Constant { delta } => *delta,
            StepSchedule::Harmonic { delta0 } => delta0 / n.max(1) as f64,
        }
    }
}

/// Time-indexed profiles with optional channel states and per-step metrics.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub profiles: Vec<PowerProfile>,
    pub channel_states: Option<Vec<ChannelState>>,
    pub metrics: BTreeMap<String, Vec<f64>>,
}

/// Compact JSON description of a trajectory.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TrajectorySummary {
    pub steps: usize,
    pub final_time: f64,
    pub terminal_profile: Option<PowerProfile>,
    pub schedule: Option<StepSchedule>,
    pub final_metrics: BTreeMap<String, f64>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.profiles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.profiles.is_empty()
    }

    pub fn terminal(&self) -> Option<&PowerProfile> {
        self.profiles.last()
    }

    fn push(&mut self, time: f64, profile: PowerProfile) {
        self.times.push(time);
        self.profiles.push(profile);
    }

    fn record(&mut self, name: &str, value: f64) {
        self.metrics.entry(name.to_string()).or_default().push(value);
    }

    /// Long-format CSV: `step,time,user,channel,power` followed by one column per metric.
    pub fn write_csv<W: Write>(&self, writer: W, cfg: &GameConfig) -> Result<()> {
        let mut out = csv::Writer::from_writer(writer);
        let mut header: Vec<String> = ["step", "time", "user", "channel", "power"].map(String::from).to_vec();
        header.extend(self.metrics.keys().cloned());
        out.write_record(&header)?;
        for (step, (t, profile)) in self.times.iter().zip(&self.profiles).enumerate() {
            for (k, j, a) in cfg.links() {
                let mut row = vec![
                    step.to_string(),
                    format!("{t:e}"),
                    k.to_string(),
                    a.to_string(),
                    format!("{:e}", profile.get(k, j)),
                ];
                row.extend(
                    self.metrics
                        .values()
                        .map(|series| series.get(step).map_or_else(String::new, |v| format!("{v:e}"))),
                );
                out.write_record(&row)?;
            }
        }
        out.flush()?;
        Ok(())
    }

    pub fn summary(&self, schedule: Option<StepSchedule>) -> TrajectorySummary {
        TrajectorySummary {
            steps: self.len().saturating_sub(1),
            final_time: self.times.last().copied().unwrap_or(0.0),
            terminal_profile: self.terminal().cloned(),
            schedule,
            final_metrics: self
                .metrics
                .iter()
                .filter_map(|(k, v)| v.last().map(|x| (k.clone(), *x)))
                .collect(),
        }
    }
}

fn user_averages(allocation: &[Vec<f64>], v: &[Vec<f64>], cfg: &GameConfig) -> Vec<f64> {
    allocation
        .iter()
        .zip(v)
        .enumerate()
        .map(|(k, (p, v))| p.iter().zip(v).map(|(p, v)| p * v).sum::<f64>() / cfg.max_power(k))
        .collect()
}

pub(crate) fn field_from_marginals(allocation: &[Vec<f64>], v: &[Vec<f64>], cfg: &GameConfig) -> LinkMap {
    let avg = user_averages(allocation, v, cfg);
    cfg.link_map(|k, j, _| allocation[k][j] * (v[k][j] - avg[k]))
}

/// The replicator vector field p_kα (v_kα - v_k).
pub fn replicator_field(profile: &PowerProfile, channels: &ChannelState, cfg: &GameConfig) -> LinkMap {
    let v = marginal_utility_raw(profile.allocation(), channels, cfg);
    field_from_marginals(profile.allocation(), &v, cfg)
}

fn max_bound(bound: &LinkMap) -> f64 {
    bound.iter().flatten().fold(0.0, |m: f64, x| m.max(*x))
}

/// Default ODE step 0.01 / max v^ub (1.0 when every gain vanishes).
pub fn default_dt(channels: &ChannelState, cfg: &GameConfig) -> f64 {
    let m = max_bound(&marginal_utility_bound(channels, cfg));
    if m > 0.0 {
        0.01 / m
    } else {
        1.0
    }
}

/// Log-coordinate state for the multiplicative flow; rows are kept normalized to P_k.
struct LogState {
    y: LinkMap,
}

impl LogState {
    fn new(allocation: &[Vec<f64>]) -> Self {
        Self {
            y: allocation
                .iter()
                .map(|row| row.iter().map(|p| p.ln()).collect())
                .collect(),
        }
    }

    fn profile_of(y: &[Vec<f64>], cfg: &GameConfig) -> LinkMap {
        y.iter()
            .enumerate()
            .map(|(k, row)| {
                let top = row.iter().fold(f64::NEG_INFINITY, |m, x| m.max(*x));
                let w: Vec<f64> = row.iter().map(|x| (x - top).exp()).collect();
                let total: f64 = w.iter().sum();
                w.iter().map(|x| cfg.max_power(k) * x / total).collect()
            })
            .collect()
    }

    fn normalize(&mut self, cfg: &GameConfig) {
        for (k, row) in self.y.iter_mut().enumerate() {
            let top = row.iter().fold(f64::NEG_INFINITY, |m, x| m.max(*x));
            let lse = top + row.iter().map(|x| (x - top).exp()).sum::<f64>().ln();
            let shift = lse - cfg.max_power(k).ln();
            row.iter_mut().for_each(|x| *x -= shift);
        }
    }
}

/// Classical RK4 on d(ln p_kα)/dt = v_kα - v_k with marginals supplied by `marginals`.
pub(crate) fn integrate_log_rk4<F>(
    p0: &PowerProfile,
    cfg: &GameConfig,
    t_end: f64,
    dt: f64,
    record_every: usize,
    mut marginals: F,
) -> Result<Vec<(f64, PowerProfile)>>
where
    F: FnMut(&LinkMap) -> Result<LinkMap>,
{
    if !(dt > 0.0 && dt.is_finite()) || !(t_end >= 0.0 && t_end.is_finite()) || record_every == 0 {
        return Err(Error::InvalidParameter(format!(
            "need dt > 0, t_end >= 0; got dt={dt}, t_end={t_end}"
        )));
    }
    if let Some((user, slot)) = p0
        .allocation()
        .iter()
        .enumerate()
        .find_map(|(k, row)| row.iter().position(|p| *p <= 0.0).map(|j| (k, j)))
    {
        return Err(Error::NotInterior { user, slot });
    }
    let mut slope = |y: &LinkMap| -> Result<LinkMap> {
        let p = LogState::profile_of(y, cfg);
        let v = marginals(&p)?;
        let avg = user_averages(&p, &v, cfg);
        Ok(cfg.link_map(|k, j, _| v[k][j] - avg[k]))
    };
    let axpy = |y: &LinkMap, h: f64, d: &LinkMap| -> LinkMap {
        y.iter()
            .zip(d)
            .map(|(yr, dr)| yr.iter().zip(dr).map(|(a, b)| a + h * b).collect())
            .collect()
    };

    let mut state = LogState::new(p0.allocation());
    let mut out = vec![(0.0, p0.clone())];
    let n_steps = (t_end / dt).ceil() as usize;
    let mut t = 0.0;
    for n in 1..=n_steps {
        let h = if n == n_steps { t_end - t } else { dt };
        let k1 = slope(&state.y)?;
        let k2 = slope(&axpy(&state.y, h / 2.0, &k1))?;
        let k3 = slope(&axpy(&state.y, h / 2.0, &k2))?;
        let k4 = slope(&axpy(&state.y, h, &k3))?;
        for (k, row) in state.y.iter_mut().enumerate() {
            for (j, y) in row.iter_mut().enumerate() {
                *y += h / 6.0 * (k1[k][j] + 2.0 * k2[k][j] + 2.0 * k3[k][j] + k4[k][j]);
            }
        }
        state.normalize(cfg);
        t = if n == n_steps { t_end } else { n as f64 * dt };
        if n % record_every == 0 || n == n_steps {
            let p = LogState::profile_of(&state.y, cfg);
            out.push((t, PowerProfile::from_nonnegative_rows(cfg, p)));
        }
    }
    Ok(out)
}

/// Integrates the replicator flow on [0, t_end] with step `dt`, recording every step
/// together with the `potential` metric.
pub fn integrate_ode(
    p0: &PowerProfile,
    channels: &ChannelState,
    cfg: &GameConfig,
    t_end: f64,
    dt: f64,
) -> Result<Trajectory> {
    integrate_ode_sampled(p0, channels, cfg, t_end, dt, 1)
}

/// As [`integrate_ode`], keeping only every `record_every`-th step (and the last).
pub fn integrate_ode_sampled(
    p0: &PowerProfile,
    channels: &ChannelState,
    cfg: &GameConfig,
    t_end: f64,
    dt: f64,
    record_every: usize,
) -> Result<Trajectory> {
    cfg.check_shape(p0.allocation(), "initial profile")?;
    cfg.check_shape(channels.gains(), "channel gains")?;
    let points = integrate_log_rk4(p0, cfg, t_end, dt, record_every, |p| {
        Ok(marginal_utility_raw(p, channels, cfg))
    })?;
    let mut trajectory = Trajectory::default();
    for (t, p) in points {
        trajectory.record("potential", potential(&p, channels, cfg));
        trajectory.push(t, p);
    }
    Ok(trajectory)
}

/// Clamps every power to at least `INTERIOR_FLOOR · P_k` and rescales.
pub fn clamp_interior(profile: &PowerProfile, cfg: &GameConfig) -> PowerProfile {
    let allocation = cfg.link_map(|k, j, _| profile.get(k, j).max(INTERIOR_FLOOR * cfg.max_power(k)));
    PowerProfile::from_nonnegative_rows(cfg, allocation)
}

/// Largest step 1 / max b_α g_kα / σ_α² keeping the discrete scheme inside the simplex.
///
/// Returns `f64::INFINITY` when every gain vanishes, in which case the field is zero.
pub fn safe_step_bound(cfg: &GameConfig, channels: &ChannelState) -> f64 {
    let m = max_bound(&marginal_utility_bound(channels, cfg));
    if m > 0.0 {
        1.0 / m
    } else {
        f64::INFINITY
    }
}

/// p ← p (1 + δ (v - v_k)), clamped at zero and rescaled to the budget.
pub(crate) fn multiplicative_step(
    allocation: &[Vec<f64>],
    v: &[Vec<f64>],
    delta: f64,
    cfg: &GameConfig,
) -> PowerProfile {
    let avg = user_averages(allocation, v, cfg);
    let next = cfg.link_map(|k, j, _| (allocation[k][j] * (1.0 + delta * (v[k][j] - avg[k]))).max(0.0));
    PowerProfile::from_nonnegative_rows(cfg, next)
}

/// One step of the discrete replicator scheme on the gains `channels`.
pub fn discrete_step(p: &PowerProfile, channels: &ChannelState, cfg: &GameConfig, delta: f64) -> Result<PowerProfile> {
    let bound = safe_step_bound(cfg, channels);
    if !(delta >= 0.0) || delta > bound {
        return Err(Error::StepTooLarge { step: delta, bound });
    }
    let v = marginal_utility_raw(p.allocation(), channels, cfg);
    Ok(multiplicative_step(p.allocation(), &v, delta, cfg))
}

/// Recording options for discrete runs.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RunOptions {
    /// Keep every `record_every`-th iterate (the initial and final iterates are always kept).
    pub record_every: usize,
    pub record_channels: bool,
    /// Record the L¹ norm of the noise η = v - v̄ as metric `eta_norm`.
    pub record_noise: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            record_every: 1,
            record_channels: false,
            record_noise: false,
        }
    }
}

/// Runs the discrete scheme over a given sequence of channel states.
///
/// The step actually taken is min(δ(n), safe_step_bound) and is recorded as metric `step`.
pub fn run_on_channels<I>(
    p0: &PowerProfile,
    cfg: &GameConfig,
    channels: I,
    schedule: StepSchedule,
    options: RunOptions,
) -> Result<Trajectory>
where
    I: IntoIterator<Item = ChannelState>,
{
    run_on_channels_inner(p0, cfg, channels, schedule, options, None)
}

fn run_on_channels_inner<I>(
    p0: &PowerProfile,
    cfg: &GameConfig,
    channels: I,
    schedule: StepSchedule,
    options: RunOptions,
    mean_model: Option<&ErgodicModel>,
) -> Result<Trajectory>
where
    I: IntoIterator<Item = ChannelState>,
{
    schedule.validate()?;
    if options.record_every == 0 {
        return Err(Error::InvalidParameter("record_every must be positive".into()));
    }
    cfg.check_shape(p0.allocation(), "initial profile")?;
    let mut trajectory = Trajectory::default();
    let mut states = Vec::new();
    trajectory.push(0.0, p0.clone());
    trajectory.record("step", 0.0);
    if options.record_noise {
        trajectory.record("eta_norm", 0.0);
    }
    let mut p = p0.clone();
    let mut iter = channels.into_iter().peekable();
    let mut n = 0usize;
    while let Some(state) = iter.next() {
        cfg.check_shape(state.gains(), "channel gains")?;
        n += 1;
        let delta = schedule.step(n).min(safe_step_bound(cfg, &state));
        let v = marginal_utility_raw(p.allocation(), &state, cfg);
        let keep = n.is_multiple_of(options.record_every) || iter.peek().is_none();
        let eta = match mean_model {
            Some(model) if options.record_noise && keep => {
                let mean = model.mean_marginals(p.allocation(), cfg)?;
                Some(
                    v.iter()
                        .flatten()
                        .zip(mean.iter().flatten())
                        .map(|(a, b)| (a - b).abs())
                        .sum(),
                )
            }
            _ => None,
        };
        p = multiplicative_step(p.allocation(), &v, delta, cfg);
        if keep {
            trajectory.push(n as f64, p.clone());
            trajectory.record("step", delta);
            if options.record_noise {
                trajectory.record("eta_norm", eta.unwrap_or(0.0));
            }
            if options.record_channels {
                states.push(state);
            }
        }
    }
    if options.record_channels {
        trajectory.channel_states = Some(states);
    }
    Ok(trajectory)
}

/// Discrete scheme with fresh i.i.d. block-fading gains each step, drawn from `seed`.
pub fn run_block_fading(
    p0: &PowerProfile,
    cfg: &GameConfig,
    spec: &FadingSpec,
    schedule: StepSchedule,
    n_steps: usize,
    seed: u64,
) -> Result<Trajectory> {
    run_block_fading_with(p0, cfg, spec, schedule, n_steps, seed, RunOptions::default())
}

pub fn run_block_fading_with(
    p0: &PowerProfile,
    cfg: &GameConfig,
    spec: &FadingSpec,
    schedule: StepSchedule,
    n_steps: usize,
    seed: u64,
    options: RunOptions,
) -> Result<Trajectory> {
    let spec = spec.with_seed(seed);
    let source = BlockFadingSource::new(&spec, cfg)?;
    let model = if options.record_noise {
        Some(ErgodicModel::new(&spec, cfg, Separation::Stable)?)
    } else {
        None
    };
    run_on_channels_inner(p0, cfg, source.take(n_steps), schedule, options, model.as_ref())
}

/// How mean marginal utilities are evaluated.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum MeanMarginalMethod {
    ClosedFormGradient,
    MonteCarlo { samples: usize, seed: u64 },
}

fn require_gaussian_fast(spec: &FadingSpec) -> Result<()> {
    if spec.kind == FadingKind::GaussianFast {
        Ok(())
    } else {
        Err(Error::WrongFadingKind {
            expected: "GaussianFast",
            found: spec.kind,
        })
    }
}

/// Mean marginal utilities v̄_kα = ∂ū_k/∂p_kα under fast Gaussian fading.
pub fn mean_marginal_utility(
    profile: &PowerProfile,
    spec: &FadingSpec,
    cfg: &GameConfig,
    method: MeanMarginalMethod,
) -> Result<LinkMap> {
    Ok(mean_marginal_utility_with_error(profile, spec, cfg, method)?.0)
}

/// As [`mean_marginal_utility`], also returning per-link standard errors (zero for the closed form).
pub fn mean_marginal_utility_with_error(
    profile: &PowerProfile,
    spec: &FadingSpec,
    cfg: &GameConfig,
    method: MeanMarginalMethod,
) -> Result<(LinkMap, LinkMap)> {
    require_gaussian_fast(spec)?;
    cfg.check_shape(profile.allocation(), "profile")?;
    match method {
        MeanMarginalMethod::ClosedFormGradient => {
            let v = ErgodicModel::new(spec, cfg, Separation::Strict)?.mean_marginals(profile.allocation(), cfg)?;
            Ok((v, cfg.zeros()))
        }
        MeanMarginalMethod::MonteCarlo { samples, seed } => {
            if samples < 2 {
                return Err(Error::InvalidParameter("Monte-Carlo needs at least 2 samples".into()));
            }
            let mut sampler = GaussianLinkSampler::new(&spec.variance.resolve(cfg)?, seed);
            let mut gains = cfg.zeros();
            let mut sum = cfg.zeros();
            let mut sum_sq = cfg.zeros();
            for _ in 0..samples {
                sampler.fill_gains(&mut gains);
                let state = ChannelState::from_gains(cfg, gains.clone())?;
                let v = marginal_utility_raw(profile.allocation(), &state, cfg);
                for (k, j, _) in cfg.links() {
                    sum[k][j] += v[k][j];
                    sum_sq[k][j] += v[k][j] * v[k][j];
                }
            }
            let n = samples as f64;
            let mean = cfg.link_map(|k, j, _| sum[k][j] / n);
            let stderr = cfg.link_map(|k, j, _| {
                let var = ((sum_sq[k][j] - n * mean[k][j] * mean[k][j]) / (n - 1.0)).max(0.0);
                (var / n).sqrt()
            });
            Ok((mean, stderr))
        }
    }
}

/// Safe step for the mean dynamics, using the variances as interference-free gains.
pub fn mean_safe_step_bound(cfg: &GameConfig, spec: &FadingSpec) -> Result<f64> {
    let variance = ChannelState::from_gains(cfg, spec.variance.resolve(cfg)?)?;
    Ok(safe_step_bound(cfg, &variance))
}

/// Noise-free discrete scheme driven by the closed-form mean marginals v̄.
///
/// Near-coincident ergodic parameters are evaluated by quadrature instead of
/// failing mid-run. Metric `potential` records Φ̄ at each iterate.
pub fn run_mean_dynamics(
    p0: &PowerProfile,
    cfg: &GameConfig,
    spec: &FadingSpec,
    delta: f64,
    n_steps: usize,
) -> Result<Trajectory> {
    require_gaussian_fast(spec)?;
    cfg.check_shape(p0.allocation(), "initial profile")?;
    let bound = mean_safe_step_bound(cfg, spec)?;
    if !(delta > 0.0) || delta > bound {
        return Err(Error::StepTooLarge { step: delta, bound });
    }
    let model = ErgodicModel::new(spec, cfg, Separation::Stable)?;
    let mut trajectory = Trajectory::default();
    let mut p = p0.clone();
    trajectory.record("potential", model.potential(p.allocation(), cfg)?);
    trajectory.push(0.0, p.clone());
    for n in 1..=n_steps {
        let v = model.mean_marginals(p.allocation(), cfg)?;
        p = multiplicative_step(p.allocation(), &v, delta, cfg);
        trajectory.record("potential", model.potential(p.allocation(), cfg)?);
        trajectory.push(n as f64, p.clone());
    }
    Ok(trajectory)
}
