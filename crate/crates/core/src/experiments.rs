//! Scenario files and the figure-level experiments they drive.
//!
//! A scenario names one experiment together with the game, the fading model
//! and the dynamics settings. Running it writes three files to the output
//! directory:
//!
//! - `realizations.csv`: one row per realization and step, columns fixed per
//!   experiment (see [`ExperimentKind::csv_columns`]);
//! - `summary.json`: aggregates over realizations;
//! - `manifest.json`: the effective scenario, its SHA-256 hash, the seed and a timestamp.
//!
//! Realization `i` draws all of its randomness from seed `seed + i`, so the
//! CSV body does not depend on thread scheduling. Non-finite numbers are
//! written as the sentinels `inf`, `-inf` and `undefined`.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};
use sha2::{Digest, Sha256};

use crate::channels::{coherence_time, draw_static, jakes_track, FadingKind, FadingSpec, Variance};
use crate::dynamics::{
    default_dt, integrate_ode_sampled, run_block_fading_with, run_on_channels, RunOptions, StepSchedule,
};
use crate::equilibrium::{random_interior_profile, solve_ergodic, solve_static, Environment, DEFAULT_TOLERANCE};
use crate::error::{Error, Result};
use crate::game::{utilities, GameConfig, PowerProfile};
use crate::metrics::{
    general_certificate, instantaneous_exponent, kl_divergence, strict_certificate, sum_rate, tracking_delay,
    ConvergenceCertificate,
};

/// SRE above this counts as optimal in the SRE summaries.
pub const SRE_OPTIMAL: f64 = 0.999;
/// EQL level reported as "equilibrated" in the EQL summaries.
pub const EQL_TARGET: f64 = 0.99;
/// Tolerance for ergodic equilibria inside experiments.
pub const ERGODIC_TOLERANCE: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ExperimentKind {
    PhasePortrait,
    SreCdf,
    ErgodicSreVsSnr,
    EqlOverTime,
    JakesTracking,
    CertificateReport,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 6] = [
        ExperimentKind::PhasePortrait,
        ExperimentKind::SreCdf,
        ExperimentKind::ErgodicSreVsSnr,
        ExperimentKind::EqlOverTime,
        ExperimentKind::JakesTracking,
        ExperimentKind::CertificateReport,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            ExperimentKind::PhasePortrait => "PhasePortrait",
            ExperimentKind::SreCdf => "SreCdf",
            ExperimentKind::ErgodicSreVsSnr => "ErgodicSreVsSnr",
            ExperimentKind::EqlOverTime => "EqlOverTime",
            ExperimentKind::JakesTracking => "JakesTracking",
            ExperimentKind::CertificateReport => "CertificateReport",
        }
    }

    pub fn figure(&self) -> &'static str {
        match self {
            ExperimentKind::PhasePortrait => "Fig. 1",
            ExperimentKind::SreCdf => "Fig. 2a",
            ExperimentKind::ErgodicSreVsSnr => "Fig. 2b",
            ExperimentKind::EqlOverTime => "Fig. 3",
            ExperimentKind::JakesTracking => "Fig. 5",
            ExperimentKind::CertificateReport => "certificate report",
        }
    }

    pub fn description(&self) -> &'static str {
        match self {
            ExperimentKind::PhasePortrait => {
                "replicator ODE orbits from random interior starts in one static game, with KL divergence and exponents"
            }
            ExperimentKind::SreCdf => "equilibrium sum-rate efficiency of random static games (empirical CDF)",
            ExperimentKind::ErgodicSreVsSnr => {
                "equilibrium sum-rate efficiency of ergodic Gaussian games across rho = P_max / sigma^2"
            }
            ExperimentKind::EqlOverTime => {
                "mean equilibration level and SRE of the discrete scheme over time (static or block fading)"
            }
            ExperimentKind::JakesTracking => {
                "learned versus instantaneous equilibrium power under Jakes fading, with tracking delay"
            }
            ExperimentKind::CertificateReport => {
                "convergence certificate c against the measured KL decay along replicator orbits"
            }
        }
    }

    /// Scenario fields this experiment needs beyond the common ones.
    pub fn required_fields(&self) -> &'static [&'static str] {
        match self {
            ExperimentKind::PhasePortrait => &["fading.kind = Static", "dynamics.t_end"],
            ExperimentKind::SreCdf => &["fading.kind = Static"],
            ExperimentKind::ErgodicSreVsSnr => &["fading.kind = GaussianFast", "snr_sweep"],
            ExperimentKind::EqlOverTime => &["fading.kind = Static or BlockIID", "dynamics.n_steps"],
            ExperimentKind::JakesTracking => &[
                "fading.kind = Jakes",
                "fading.carrier_frequency",
                "fading.velocity",
                "fading.sample_period",
                "dynamics.n_steps",
            ],
            ExperimentKind::CertificateReport => &["fading.kind = Static", "dynamics.t_end"],
        }
    }

    pub fn csv_columns(&self) -> &'static [&'static str] {
        match self {
            ExperimentKind::PhasePortrait => &[
                "realization",
                "step",
                "time",
                "user",
                "channel",
                "power",
                "utility",
                "kl_divergence",
                "exponent",
            ],
            ExperimentKind::SreCdf => &[
                "realization",
                "step",
                "sre",
                "sum_rate",
                "sum_capacity",
                "strict",
                "support_links",
            ],
            ExperimentKind::ErgodicSreVsSnr => &["realization", "step", "rho", "sre", "sum_rate", "sum_capacity"],
            ExperimentKind::EqlOverTime => &["realization", "step", "step_size", "eql", "sre"],
            ExperimentKind::JakesTracking => &[
                "realization",
                "step",
                "time",
                "user",
                "channel",
                "equilibrium_power",
                "learned_power",
            ],
            ExperimentKind::CertificateReport => &["realization", "step", "time", "kl_divergence", "bound", "exponent"],
        }
    }

    /// Realization count used with `--paper-scale`.
    pub fn full_scale_realizations(&self) -> usize {
        match self {
            ExperimentKind::PhasePortrait => 3,
            ExperimentKind::SreCdf => 1000,
            ExperimentKind::ErgodicSreVsSnr => 100,
            ExperimentKind::EqlOverTime => 50,
            ExperimentKind::JakesTracking => 10,
            ExperimentKind::CertificateReport => 20,
        }
    }
}

/// Time-stepping settings; which fields apply depends on the experiment.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DynamicsSettings {
    /// Discrete step schedule. When absent, static and Jakes runs step at the
    /// safe bound and block-fading runs use δ(n) = 1/n.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schedule: Option<StepSchedule>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_steps: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_end: Option<f64>,
    /// ODE step; defaults to 0.01 over the largest interference-free marginal.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub record_every: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    pub game: GameConfig,
    pub fading: FadingSpec,
    #[serde(default)]
    pub dynamics: DynamicsSettings,
    pub experiment: ExperimentKind,
    pub n_realizations: usize,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub snr_sweep: Option<Vec<f64>>,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("results")
}

impl Scenario {
    /// Parses and validates scenario JSON; syntax and schema errors carry line and column.
    pub fn from_json_str(text: &str) -> Result<Self> {
        let scenario: Scenario = serde_json::from_str(text).map_err(|e| Error::ScenarioParse {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })?;
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json_str(&fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| {
            Err(Error::Scenario(format!(
                "{} ({}): {msg}",
                self.name,
                self.experiment.name()
            )))
        };
        if self.n_realizations == 0 {
            return fail("n_realizations must be at least 1".into());
        }
        self.fading.validate(&self.game)?;
        if let Some(schedule) = &self.dynamics.schedule {
            schedule.validate()?;
        }
        if self.dynamics.record_every == Some(0) {
            return fail("dynamics.record_every must be positive".into());
        }
        if let Some(dt) = self.dynamics.dt {
            if !(dt.is_finite() && dt > 0.0) {
                return fail(format!("dynamics.dt must be positive, got {dt}"));
            }
        }
        let kind = self.fading.kind;
        let need_kind = |allowed: &[FadingKind]| {
            if allowed.contains(&kind) {
                Ok(())
            } else {
                fail(format!(
                    "fading.kind {kind:?} is not supported, expected one of {allowed:?}"
                ))
            }
        };
        let need_t_end = || match self.dynamics.t_end {
            Some(t) if t.is_finite() && t > 0.0 => Ok(()),
            _ => fail("dynamics.t_end is required and must be positive".into()),
        };
        let need_steps = || match self.dynamics.n_steps {
            Some(n) if n > 0 => Ok(()),
            _ => fail("dynamics.n_steps is required and must be positive".into()),
        };
        match self.experiment {
            ExperimentKind::PhasePortrait | ExperimentKind::CertificateReport => {
                need_kind(&[FadingKind::Static])?;
                need_t_end()
            }
            ExperimentKind::SreCdf => need_kind(&[FadingKind::Static]),
            ExperimentKind::ErgodicSreVsSnr => {
                need_kind(&[FadingKind::GaussianFast])?;
                match &self.snr_sweep {
                    Some(sweep) if !sweep.is_empty() && sweep.iter().all(|r| r.is_finite() && *r > 0.0) => Ok(()),
                    _ => fail("snr_sweep is required and must hold positive values".into()),
                }
            }
            ExperimentKind::EqlOverTime => {
                need_kind(&[FadingKind::Static, FadingKind::BlockIID])?;
                need_steps()
            }
            ExperimentKind::JakesTracking => {
                need_kind(&[FadingKind::Jakes])?;
                need_steps()
            }
        }
    }

    pub fn config_hash(&self) -> Result<String> {
        Ok(hex::encode(Sha256::digest(serde_json::to_vec(self)?)))
    }
}

/// Command-line overrides applied on top of a scenario file.
#[derive(Clone, Debug, Default)]
pub struct RunOverrides {
    pub output_dir: Option<PathBuf>,
    pub seed: Option<u64>,
    pub realizations: Option<usize>,
    /// Use [`ExperimentKind::full_scale_realizations`] unless `realizations` is set.
    pub paper_scale: bool,
}

impl RunOverrides {
    pub fn apply(&self, scenario: &Scenario) -> Result<Scenario> {
        let mut s = scenario.clone();
        if let Some(dir) = &self.output_dir {
            s.output_dir = dir.clone();
        }
        if let Some(seed) = self.seed {
            s.seed = seed;
        }
        if self.paper_scale {
            s.n_realizations = s.experiment.full_scale_realizations();
        }
        if let Some(n) = self.realizations {
            s.n_realizations = n;
        }
        s.validate()?;
        Ok(s)
    }
}

#[derive(Clone, Debug)]
pub struct RunReport {
    pub output_dir: PathBuf,
    pub files: Vec<PathBuf>,
    pub summary: Value,
}

/// Formats a number for CSV/JSON output, spelling out non-finite values.
pub fn format_number(x: f64) -> String {
    if x.is_nan() {
        "undefined".into()
    } else if x.is_infinite() {
        if x > 0.0 { "inf" } else { "-inf" }.into()
    } else if x == 0.0 || (1e-4..1e15).contains(&x.abs()) {
        format!("{x}")
    } else {
        format!("{x:e}")
    }
}

fn jnum(x: f64) -> Value {
    if x.is_finite() {
        json!(x)
    } else {
        json!(format_number(x))
    }
}

fn jopt(x: Option<f64>) -> Value {
    x.map_or_else(|| json!("absent"), jnum)
}

type Row = Vec<String>;

struct Realization {
    rows: Vec<Row>,
    summary: Value,
}

fn realization_seed(scenario: &Scenario, index: usize) -> u64 {
    scenario.seed.wrapping_add(index as u64)
}

fn record_every(scenario: &Scenario) -> usize {
    scenario.dynamics.record_every.unwrap_or(1)
}

/// Runs a scenario (after overrides) and writes its outputs.
pub fn run_scenario(scenario: &Scenario, overrides: &RunOverrides) -> Result<RunReport> {
    let scenario = overrides.apply(scenario)?;
    let (rows, summary) = match scenario.experiment {
        ExperimentKind::PhasePortrait => phase_portrait(&scenario)?,
        ExperimentKind::SreCdf => per_realization(&scenario, sre_realization, summarize_sre)?,
        ExperimentKind::ErgodicSreVsSnr => ergodic_sre(&scenario)?,
        ExperimentKind::EqlOverTime => eql_over_time(&scenario)?,
        ExperimentKind::JakesTracking => per_realization(&scenario, jakes_realization, summarize_jakes)?,
        ExperimentKind::CertificateReport => per_realization(&scenario, certificate_realization, |_, items| {
            Ok(json!({ "realizations": items }))
        })?,
    };
    let dir = scenario.output_dir.clone();
    fs::create_dir_all(&dir)?;
    let csv_path = dir.join("realizations.csv");
    let mut writer = csv::Writer::from_path(&csv_path)?;
    writer.write_record(scenario.experiment.csv_columns())?;
    for row in &rows {
        writer.write_record(row)?;
    }
    writer.flush()?;
    let summary = json!({
        "name": scenario.name,
        "experiment": scenario.experiment.name(),
        "figure": scenario.experiment.figure(),
        "n_realizations": scenario.n_realizations,
        "results": summary,
    });
    let summary_path = dir.join("summary.json");
    fs::write(&summary_path, serde_json::to_string_pretty(&summary)?)?;
    let timestamp = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    let manifest = json!({
        "name": scenario.name,
        "experiment": scenario.experiment.name(),
        "config_hash": scenario.config_hash()?,
        "seed": scenario.seed,
        "n_realizations": scenario.n_realizations,
        "paper_scale": overrides.paper_scale,
        "timestamp_unix": timestamp,
        "version": env!("CARGO_PKG_VERSION"),
        "defaults": {
            "bandwidth": scenario.game.bandwidth(0),
            "noise_power": scenario.game.noise_power(0),
            "max_power": scenario.game.max_power(0),
        },
        "scenario": scenario,
    });
    let manifest_path = dir.join("manifest.json");
    fs::write(&manifest_path, serde_json::to_string_pretty(&manifest)?)?;
    Ok(RunReport {
        output_dir: dir,
        files: vec![csv_path, summary_path, manifest_path],
        summary,
    })
}

fn per_realization(
    scenario: &Scenario,
    run: impl Fn(&Scenario, usize) -> Result<Realization> + Sync,
    summarize: impl Fn(&Scenario, Vec<Value>) -> Result<Value>,
) -> Result<(Vec<Row>, Value)> {
    let results: Vec<Realization> = (0..scenario.n_realizations)
        .into_par_iter()
        .map(|i| run(scenario, i))
        .collect::<Result<_>>()?;
    let mut rows = Vec::new();
    let mut items = Vec::new();
    for r in results {
        rows.extend(r.rows);
        items.push(r.summary);
    }
    Ok((rows, summarize(scenario, items)?))
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

fn distribution(values: &[f64]) -> Value {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mean = sorted.iter().sum::<f64>() / sorted.len() as f64;
    json!({
        "mean": jnum(mean),
        "min": jnum(sorted[0]),
        "q10": jnum(quantile(&sorted, 0.1)),
        "q25": jnum(quantile(&sorted, 0.25)),
        "median": jnum(quantile(&sorted, 0.5)),
        "q75": jnum(quantile(&sorted, 0.75)),
        "q90": jnum(quantile(&sorted, 0.9)),
        "max": jnum(sorted[sorted.len() - 1]),
    })
}

fn sre_realization(scenario: &Scenario, i: usize) -> Result<Realization> {
    let cfg = &scenario.game;
    let channels = draw_static(&scenario.fading.with_seed(realization_seed(scenario, i)), cfg)?;
    let eq = solve_static(cfg, &channels, DEFAULT_TOLERANCE)?;
    let capacity = -eq.potential_value;
    let rate = sum_rate(&eq.profile, Environment::Static(&channels), cfg)?;
    let sre = if capacity > 0.0 { rate / capacity } else { f64::NAN };
    let support: usize = eq.support.iter().map(Vec::len).sum();
    Ok(Realization {
        rows: vec![vec![
            i.to_string(),
            "0".into(),
            format_number(sre),
            format_number(rate),
            format_number(capacity),
            eq.is_strict().to_string(),
            support.to_string(),
        ]],
        summary: json!({ "sre": sre, "strict": eq.is_strict() }),
    })
}

fn summarize_sre(_: &Scenario, items: Vec<Value>) -> Result<Value> {
    let values: Vec<f64> = items.iter().filter_map(|v| v["sre"].as_f64()).collect();
    let strict = items.iter().filter(|v| v["strict"].as_bool() == Some(true)).count();
    let optimal = values.iter().filter(|s| **s > SRE_OPTIMAL).count();
    Ok(json!({
        "defined": values.len(),
        "fraction_sre_optimal": optimal as f64 / items.len() as f64,
        "sre_optimal_threshold": SRE_OPTIMAL,
        "fraction_strict": strict as f64 / items.len() as f64,
        "sre": if values.is_empty() { json!("undefined") } else { distribution(&values) },
    }))
}

fn ergodic_sre(scenario: &Scenario) -> Result<(Vec<Row>, Value)> {
    let sweep = scenario.snr_sweep.clone().expect("validated");
    let p_max = scenario.game.max_powers().iter().fold(0.0f64, |m, x| m.max(*x));
    let base = scenario.fading.variance.resolve(&scenario.game)?;
    let jobs: Vec<(usize, usize)> = (0..sweep.len())
        .flat_map(|s| (0..scenario.n_realizations).map(move |i| (s, i)))
        .collect();
    let results: Vec<(f64, f64, f64)> = jobs
        .par_iter()
        .map(|&(s, i)| {
            let cfg = scenario.game.with_noise_power(p_max / sweep[s])?;
            // Each realization scales the mean-square gains by independent Exp(1) factors.
            let mut rng = ChaCha8Rng::seed_from_u64(realization_seed(scenario, i));
            let variance = base
                .iter()
                .map(|row| {
                    row.iter()
                        .map(|g| g * Distribution::<f64>::sample(&Exp1, &mut rng))
                        .collect()
                })
                .collect();
            let spec = FadingSpec {
                variance: Variance::PerLink(variance),
                ..scenario.fading.clone()
            };
            let eq = solve_ergodic(&cfg, &spec, ERGODIC_TOLERANCE)?;
            let capacity = -eq.potential_value;
            let rate = sum_rate(&eq.profile, Environment::Ergodic(&spec), &cfg)?;
            Ok((rate / capacity, rate, capacity))
        })
        .collect::<Result<_>>()?;
    let mut rows = Vec::new();
    let mut per_rho = Vec::new();
    for (s, rho) in sweep.iter().enumerate() {
        let chunk = &results[s * scenario.n_realizations..(s + 1) * scenario.n_realizations];
        for (i, (sre, rate, capacity)) in chunk.iter().enumerate() {
            rows.push(vec![
                i.to_string(),
                "0".into(),
                format_number(*rho),
                format_number(*sre),
                format_number(*rate),
                format_number(*capacity),
            ]);
        }
        let values: Vec<f64> = chunk.iter().map(|r| r.0).collect();
        per_rho.push(json!({ "rho": rho, "sre": distribution(&values) }));
    }
    Ok((rows, json!({ "sweep": per_rho })))
}

fn default_schedule(scenario: &Scenario) -> StepSchedule {
    scenario.dynamics.schedule.unwrap_or(match scenario.fading.kind {
        FadingKind::BlockIID => StepSchedule::Harmonic { delta0: 1.0 },
        // Capped per step at the safe bound.
        _ => StepSchedule::Constant { delta: f64::MAX },
    })
}

fn eql_over_time(scenario: &Scenario) -> Result<(Vec<Row>, Value)> {
    let cfg = &scenario.game;
    let n_steps = scenario.dynamics.n_steps.expect("validated");
    let schedule = default_schedule(scenario);
    let options = RunOptions {
        record_every: record_every(scenario),
        ..RunOptions::default()
    };
    let ergodic = match scenario.fading.kind {
        FadingKind::BlockIID => {
            let spec = scenario.fading.with_kind(FadingKind::GaussianFast);
            let eq = solve_ergodic(cfg, &spec, ERGODIC_TOLERANCE)?;
            Some((spec, eq))
        }
        _ => None,
    };
    let series: Vec<Vec<(f64, f64, f64, f64)>> = (0..scenario.n_realizations)
        .into_par_iter()
        .map(|i| {
            let seed = realization_seed(scenario, i);
            let p0 = PowerProfile::uniform(cfg);
            let out = |traj: crate::dynamics::Trajectory, env: Environment<'_>, eq: &crate::EquilibriumResult| {
                let capacity = -eq.potential_value;
                traj.times
                    .iter()
                    .zip(&traj.profiles)
                    .zip(&traj.metrics["step"])
                    .map(|((t, p), step)| {
                        let eql = crate::metrics::eql(p, env, cfg, eq)?;
                        Ok((*t, *step, eql, sum_rate(p, env, cfg)? / capacity))
                    })
                    .collect::<Result<Vec<_>>>()
            };
            match &ergodic {
                Some((spec, eq)) => {
                    let traj = run_block_fading_with(&p0, cfg, &scenario.fading, schedule, n_steps, seed, options)?;
                    out(traj, Environment::Ergodic(spec), eq)
                }
                None => {
                    let channels = draw_static(&scenario.fading.with_seed(seed), cfg)?;
                    let eq = solve_static(cfg, &channels, DEFAULT_TOLERANCE)?;
                    let traj = run_on_channels(
                        &p0,
                        cfg,
                        std::iter::repeat_n(channels.clone(), n_steps),
                        schedule,
                        options,
                    )?;
                    out(traj, Environment::Static(&channels), &eq)
                }
            }
        })
        .collect::<Result<_>>()?;
    let mut rows = Vec::new();
    for (i, s) in series.iter().enumerate() {
        for (t, step, eql, sre) in s {
            rows.push(vec![
                i.to_string(),
                format!("{}", *t as usize),
                format_number(*step),
                format_number(*eql),
                format_number(*sre),
            ]);
        }
    }
    let n = series.len() as f64;
    let mut mean = Vec::new();
    let mut first_reached: Option<usize> = None;
    for j in 0..series[0].len() {
        let step = series[0][j].0 as usize;
        let eql = series.iter().map(|s| s[j].2).sum::<f64>() / n;
        let sre = series.iter().map(|s| s[j].3).sum::<f64>() / n;
        if first_reached.is_none() && eql >= EQL_TARGET {
            first_reached = Some(step);
        }
        mean.push(json!({ "step": step, "mean_eql": jnum(eql), "mean_sre": jnum(sre) }));
    }
    Ok((
        rows,
        json!({
            "eql_target": EQL_TARGET,
            "first_step_mean_eql_reaches_target": first_reached.map_or(json!("never"), |s| json!(s)),
            "mean": mean,
        }),
    ))
}

fn phase_portrait(scenario: &Scenario) -> Result<(Vec<Row>, Value)> {
    let cfg = &scenario.game;
    let channels = draw_static(&scenario.fading.with_seed(scenario.seed), cfg)?;
    let eq = solve_static(cfg, &channels, DEFAULT_TOLERANCE)?;
    let q = eq.snapped_profile(cfg);
    let t_end = scenario.dynamics.t_end.expect("validated");
    let dt = scenario.dynamics.dt.unwrap_or_else(|| default_dt(&channels, cfg));
    let (rows, items): (Vec<Vec<Row>>, Vec<Value>) = (0..scenario.n_realizations)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(realization_seed(scenario, i));
            let p0 = random_interior_profile(cfg, &mut rng);
            let traj = integrate_ode_sampled(&p0, &channels, cfg, t_end, dt, record_every(scenario))?;
            let exponents = instantaneous_exponent(&traj, &q)?;
            let mut rows = Vec::new();
            let mut e = 0;
            for (step, (t, p)) in traj.times.iter().zip(&traj.profiles).enumerate() {
                let u = utilities(p, &channels, cfg);
                let kl = kl_divergence(&q, p)?;
                let exponent = if *t > 0.0 {
                    e += 1;
                    format_number(exponents.total[e - 1])
                } else {
                    "undefined".into()
                };
                for (k, j, a) in cfg.links() {
                    rows.push(vec![
                        i.to_string(),
                        step.to_string(),
                        format_number(*t),
                        k.to_string(),
                        a.to_string(),
                        format_number(p.get(k, j)),
                        format_number(u[k]),
                        format_number(kl),
                        exponent.clone(),
                    ]);
                }
            }
            let terminal = traj.terminal().expect("nonempty trajectory");
            let summary = json!({
                "realization": i,
                "initial_kl": jnum(kl_divergence(&q, &p0)?),
                "final_kl": jnum(kl_divergence(&q, terminal)?),
                "final_exponent": exponents.total.last().map_or(json!("undefined"), |x| jnum(*x)),
            });
            Ok((rows, summary))
        })
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .unzip();
    Ok((
        rows.into_iter().flatten().collect(),
        json!({
            "equilibrium": eq.profile.allocation(),
            "equilibrium_strict": eq.is_strict(),
            "dt": dt,
            "orbits": items,
        }),
    ))
}

fn jakes_realization(scenario: &Scenario, i: usize) -> Result<Realization> {
    let cfg = &scenario.game;
    let spec = scenario.fading.with_seed(realization_seed(scenario, i));
    let n = scenario.dynamics.n_steps.expect("validated");
    let period = spec.sample_period.expect("validated");
    let track = jakes_track(&spec, cfg, n)?;
    let equilibria: Vec<PowerProfile> = track
        .iter()
        .map(|c| solve_static(cfg, c, DEFAULT_TOLERANCE).map(|eq| eq.profile))
        .collect::<Result<_>>()?;
    let traj = run_on_channels(
        &PowerProfile::uniform(cfg),
        cfg,
        track,
        default_schedule(scenario),
        RunOptions::default(),
    )?;
    // Power after the update that used the channel at step n, against the equilibrium at step n.
    let learned = &traj.profiles[1..];
    let delay = tracking_delay(&equilibria, learned, period, cfg)?;
    let nu = spec.carrier_frequency.expect("validated");
    let fastest = spec
        .velocity
        .as_ref()
        .expect("validated")
        .iter()
        .fold(0.0f64, |m, v| m.max(*v));
    let coherence = coherence_time(fastest, nu);
    let mut rows = Vec::new();
    for (step, (eq, p)) in equilibria.iter().zip(learned).enumerate() {
        for (k, j, a) in cfg.links() {
            rows.push(vec![
                i.to_string(),
                step.to_string(),
                format_number(step as f64 * period),
                k.to_string(),
                a.to_string(),
                format_number(eq.get(k, j)),
                format_number(p.get(k, j)),
            ]);
        }
    }
    Ok(Realization {
        rows,
        summary: json!({
            "realization": i,
            "delay_s": delay.delay,
            "lag_samples": delay.lag,
            "coherence_time_s": coherence,
            "delay_over_coherence": delay.delay / coherence,
            "tracked_links": delay.tracked_links,
        }),
    })
}

fn summarize_jakes(_: &Scenario, items: Vec<Value>) -> Result<Value> {
    let ratios: Vec<f64> = items
        .iter()
        .filter_map(|v| v["delay_over_coherence"].as_f64())
        .collect();
    let delays: Vec<f64> = items.iter().filter_map(|v| v["delay_s"].as_f64()).collect();
    Ok(json!({
        "delay_s": distribution(&delays),
        "delay_over_coherence": distribution(&ratios),
        "realizations": items,
    }))
}

fn certificate_json(cert: &ConvergenceCertificate) -> Value {
    let per_user = |m: &std::collections::BTreeMap<usize, f64>| {
        Value::Object(m.iter().map(|(k, v)| (k.to_string(), jnum(*v))).collect::<Map<_, _>>())
    };
    json!({
        "c": jnum(cert.c),
        "margin_m": jopt(cert.margin_m),
        "rayleigh_r": jopt(cert.rayleigh_r),
        "entropy_b": jopt(cert.entropy_b),
        "q0": jnum(cert.q0),
        "per_user_c": per_user(&cert.per_user_c),
        "per_user_dv": per_user(&cert.per_user_dv),
        "gamma": per_user(&cert.gamma),
    })
}

fn certificate_realization(scenario: &Scenario, i: usize) -> Result<Realization> {
    let cfg = &scenario.game;
    let seed = realization_seed(scenario, i);
    let channels = draw_static(&scenario.fading.with_seed(seed), cfg)?;
    let eq = solve_static(cfg, &channels, DEFAULT_TOLERANCE)?;
    let q = eq.snapped_profile(cfg);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    let p0 = random_interior_profile(cfg, &mut rng);
    let env = Environment::Static(&channels);
    let (kind, cert) = if eq.is_strict() {
        ("strict", strict_certificate(cfg, env, &eq, &p0))
    } else {
        ("general", general_certificate(cfg, env, &eq, &p0, seed))
    };
    let t_end = scenario.dynamics.t_end.expect("validated");
    let dt = scenario.dynamics.dt.unwrap_or_else(|| default_dt(&channels, cfg));
    let traj = integrate_ode_sampled(&p0, &channels, cfg, t_end, dt, record_every(scenario))?;
    let d0 = kl_divergence(&q, &p0)?;
    let c = cert.as_ref().map_or(f64::NAN, |cert| cert.c);
    let mut rows = Vec::new();
    let mut worst_ratio = 0.0f64;
    let mut exponents = Vec::new();
    for (step, (t, p)) in traj.times.iter().zip(&traj.profiles).enumerate() {
        let d = kl_divergence(&q, p)?;
        let bound = d0 * (-c * t).exp();
        if bound > 0.0 && c.is_finite() {
            worst_ratio = worst_ratio.max(d / bound);
        }
        let exponent = if *t > 0.0 && d0 > 0.0 {
            -(d / d0).ln() / t
        } else {
            f64::NAN
        };
        if *t > 0.0 {
            exponents.push(exponent);
        }
        rows.push(vec![
            i.to_string(),
            step.to_string(),
            format_number(*t),
            format_number(d),
            format_number(bound),
            format_number(exponent),
        ]);
    }
    let tail = &exponents[exponents.len() * 2 / 3..];
    let tail_min = tail
        .iter()
        .copied()
        .filter(|x| x.is_finite())
        .fold(f64::INFINITY, f64::min);
    let certificate = match &cert {
        Ok(cert) => certificate_json(cert),
        Err(e) => json!({ "error": e.to_string() }),
    };
    Ok(Realization {
        rows,
        summary: json!({
            "realization": i,
            "kind": kind,
            "certificate": certificate,
            "initial_kl": jnum(d0),
            "max_kl_over_bound": if c.is_finite() { jnum(worst_ratio) } else { json!("undefined") },
            "min_exponent_final_third": jnum(tail_min),
        }),
    })
}

/// Text catalog of the available experiments.
pub fn list_experiments() -> String {
    let mut out = String::new();
    for kind in ExperimentKind::ALL {
        let _ = writeln!(out, "{} [{}]", kind.name(), kind.figure());
        let _ = writeln!(out, "    {}", kind.description());
        let _ = writeln!(out, "    requires: {}", kind.required_fields().join(", "));
        let _ = writeln!(out, "    columns: {}", kind.csv_columns().join(","));
        let _ = writeln!(out, "    full-scale realizations: {}", kind.full_scale_realizations());
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    const SRE_SCENARIO: &str = r#"{
  "name": "sre-small",
  "game": {"num_users": 2, "num_channels": 2, "max_power": [1, 1], "bandwidth": [1, 1], "noise_power": [1, 1]},
  "fading": {"kind": "Static", "variance": 1.0},
  "experiment": "SreCdf",
  "n_realizations": 8,
  "seed": 3
}"#;

    #[test]
    fn catalog_has_six_entries_with_figures() {
        let text = list_experiments();
        assert_eq!(text.lines().filter(|l| !l.starts_with(' ')).count(), 6);
        for kind in ExperimentKind::ALL {
            assert!(text.contains(kind.figure()));
        }
        assert_eq!(text, list_experiments());
    }

    #[test]
    fn parse_errors_carry_position() {
        let bad = SRE_SCENARIO.replace("\"seed\": 3", "\"seed\": 3,\n  \"colour\": 1");
        match Scenario::from_json_str(&bad) {
            Err(Error::ScenarioParse { line, .. }) => assert_eq!(line, 8),
            other => panic!("expected parse error, got {other:?}"),
        }
        match Scenario::from_json_str("{\n  \"name\": \n") {
            Err(Error::ScenarioParse { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn missing_experiment_fields_are_rejected() {
        let s = SRE_SCENARIO.replace("SreCdf", "EqlOverTime");
        assert!(matches!(Scenario::from_json_str(&s), Err(Error::Scenario(_))));
        let s = SRE_SCENARIO.replace("\"n_realizations\": 8", "\"n_realizations\": 0");
        assert!(matches!(Scenario::from_json_str(&s), Err(Error::Scenario(_))));
        let s = SRE_SCENARIO.replace("SreCdf", "ErgodicSreVsSnr");
        assert!(Scenario::from_json_str(&s).is_err());
    }

    #[test]
    fn overrides_take_precedence() {
        let s = Scenario::from_json_str(SRE_SCENARIO).unwrap();
        let o = RunOverrides {
            seed: Some(11),
            realizations: Some(4),
            paper_scale: true,
            ..Default::default()
        };
        let applied = o.apply(&s).unwrap();
        assert_eq!((applied.seed, applied.n_realizations), (11, 4));
        let paper = RunOverrides {
            paper_scale: true,
            ..Default::default()
        }
        .apply(&s)
        .unwrap();
        assert_eq!(paper.n_realizations, 1000);
    }

    #[test]
    fn number_format_spells_out_sentinels() {
        assert_eq!(format_number(f64::NAN), "undefined");
        assert_eq!(format_number(f64::INFINITY), "inf");
        assert_eq!(format_number(0.5), "0.5");
        assert_eq!(format_number(1e-20), "1e-20");
        assert_eq!(format_number(1e-20).parse::<f64>().unwrap(), 1e-20);
    }

    #[test]
    fn sre_run_is_reproducible() {
        let dir = tempfile::tempdir().unwrap();
        let s = Scenario::from_json_str(SRE_SCENARIO).unwrap();
        let read = |sub: &str| {
            let o = RunOverrides {
                output_dir: Some(dir.path().join(sub)),
                ..Default::default()
            };
            let report = run_scenario(&s, &o).unwrap();
            assert_eq!(report.files.len(), 3);
            fs::read_to_string(dir.path().join(sub).join("realizations.csv")).unwrap()
        };
        let a = read("a");
        assert_eq!(a, read("b"));
        assert_eq!(a.lines().count(), 9);
        assert!(a.starts_with("realization,step,sre"));
        assert!(!a.contains("NaN"));
    }
}
