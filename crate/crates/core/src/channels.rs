//! Channel realizations: static draws, i.i.d. block fading and time-correlated
//! Jakes (sum-of-sinusoids) Rayleigh fading.
//!
//! All regimes share the same marginal law: h_kα ~ CN(0, γ_kα), so the gain
//! g_kα = |h_kα|² is exponential with mean γ_kα.

use std::f64::consts::PI;
use std::io::Write;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::game::{ChannelState, GameConfig, LinkMap};

/// Speed of light in m/s.
pub const SPEED_OF_LIGHT: f64 = 2.998e8;
/// Oscillators per link in the Jakes generator.
pub const JAKES_OSCILLATORS: usize = 64;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum FadingKind {
    Static,
    BlockIID,
    GaussianFast,
    Jakes,
}

/// Mean-square gain γ_kα, either one value for every link or a full link map.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Variance {
    Uniform(f64),
    PerLink(LinkMap),
}

impl Variance {
    pub fn resolve(&self, cfg: &GameConfig) -> Result<LinkMap> {
        let map = match self {
            Variance::Uniform(v) => cfg.link_map(|_, _, _| *v),
            Variance::PerLink(map) => {
                cfg.check_shape(map, "variance map")?;
                map.clone()
            }
        };
        if map.iter().flatten().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::InvalidFading("variances must be finite and nonnegative".into()));
        }
        Ok(map)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FadingSpec {
    pub kind: FadingKind,
    pub variance: Variance,
    /// Carrier frequency ν in Hz (Jakes only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub carrier_frequency: Option<f64>,
    /// Per-user speed in m/s (Jakes only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub velocity: Option<Vec<f64>>,
    /// Seconds between successive realizations.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sample_period: Option<f64>,
    #[serde(default)]
    pub seed: u64,
}

impl FadingSpec {
    pub fn new(kind: FadingKind, variance: Variance, seed: u64) -> Self {
        Self {
            kind,
            variance,
            carrier_frequency: None,
            velocity: None,
            sample_period: None,
            seed,
        }
    }

    pub fn jakes(
        variance: Variance,
        carrier_frequency: f64,
        velocity: Vec<f64>,
        sample_period: f64,
        seed: u64,
    ) -> Self {
        Self {
            kind: FadingKind::Jakes,
            variance,
            carrier_frequency: Some(carrier_frequency),
            velocity: Some(velocity),
            sample_period: Some(sample_period),
            seed,
        }
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        Self { seed, ..self.clone() }
    }

    pub fn with_kind(&self, kind: FadingKind) -> Self {
        Self { kind, ..self.clone() }
    }

    /// Checks the invariants that apply to this spec's kind.
    pub fn validate(&self, cfg: &GameConfig) -> Result<()> {
        self.variance.resolve(cfg)?;
        let positive = |name: &str, v: Option<f64>| match v {
            Some(x) if x.is_finite() && x > 0.0 => Ok(()),
            _ => Err(Error::InvalidFading(format!("{name} must be present and positive"))),
        };
        if let Some(t) = self.sample_period {
            positive("sample_period", Some(t))?;
        }
        if self.kind == FadingKind::Jakes {
            positive("carrier_frequency", self.carrier_frequency)?;
            positive("sample_period", self.sample_period)?;
            let v = self
                .velocity
                .as_ref()
                .ok_or_else(|| Error::InvalidFading("velocity is required for Jakes fading".into()))?;
            if v.len() != cfg.num_users() {
                return Err(Error::InvalidFading(format!(
                    "velocity needs {} entries, got {}",
                    cfg.num_users(),
                    v.len()
                )));
            }
            for (k, x) in v.iter().enumerate() {
                positive(&format!("velocity[{k}]"), Some(*x))?;
            }
        }
        Ok(())
    }

    fn require(&self, kind: FadingKind, name: &'static str) -> Result<()> {
        if self.kind != kind {
            return Err(Error::WrongFadingKind {
                expected: name,
                found: self.kind,
            });
        }
        Ok(())
    }
}

/// Maximum Doppler shift f_d = v ν / c.
pub fn doppler_frequency(velocity: f64, carrier_frequency: f64) -> f64 {
    velocity * carrier_frequency / SPEED_OF_LIGHT
}

/// Coherence time, taken as 1 / f_d.
pub fn coherence_time(velocity: f64, carrier_frequency: f64) -> f64 {
    1.0 / doppler_frequency(velocity, carrier_frequency)
}

pub fn kmh_to_ms(kmh: f64) -> f64 {
    kmh / 3.6
}

/// Draws independent complex Gaussian coefficients h ~ CN(0, γ) per link.
#[derive(Clone, Debug)]
pub struct GaussianLinkSampler {
    std_dev: LinkMap,
    rng: ChaCha8Rng,
}

impl GaussianLinkSampler {
    pub fn new(variance: &LinkMap, seed: u64) -> Self {
        Self {
            std_dev: variance
                .iter()
                .map(|row| row.iter().map(|g| (g / 2.0).sqrt()).collect())
                .collect(),
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn from_spec(spec: &FadingSpec, cfg: &GameConfig) -> Result<Self> {
        Ok(Self::new(&spec.variance.resolve(cfg)?, spec.seed))
    }

    pub fn coefficients(&mut self) -> Vec<Vec<Complex64>> {
        let rng = &mut self.rng;
        self.std_dev
            .iter()
            .map(|row| {
                row.iter()
                    .map(|s| {
                        let re: f64 = rng.sample(StandardNormal);
                        let im: f64 = rng.sample(StandardNormal);
                        Complex64::new(s * re, s * im)
                    })
                    .collect()
            })
            .collect()
    }

    /// Writes fresh gains into `out` without keeping the coefficients.
    pub fn fill_gains(&mut self, out: &mut LinkMap) {
        let rng = &mut self.rng;
        for (row, srow) in out.iter_mut().zip(&self.std_dev) {
            for (g, s) in row.iter_mut().zip(srow) {
                let re: f64 = rng.sample(StandardNormal);
                let im: f64 = rng.sample(StandardNormal);
                *g = s * s * (re * re + im * im);
            }
        }
    }

    pub fn state(&mut self, cfg: &GameConfig) -> ChannelState {
        ChannelState::from_coefficients(cfg, self.coefficients()).expect("sampler shape matches the game")
    }
}

/// One static realization; deterministic in `spec.seed`.
pub fn draw_static(spec: &FadingSpec, cfg: &GameConfig) -> Result<ChannelState> {
    spec.require(FadingKind::Static, "Static")?;
    spec.validate(cfg)?;
    Ok(GaussianLinkSampler::from_spec(spec, cfg)?.state(cfg))
}

/// Iterator over i.i.d. block-fading realizations.
pub struct BlockFadingSource<'a> {
    cfg: &'a GameConfig,
    sampler: GaussianLinkSampler,
}

impl<'a> BlockFadingSource<'a> {
    pub fn new(spec: &FadingSpec, cfg: &'a GameConfig) -> Result<Self> {
        spec.require(FadingKind::BlockIID, "BlockIID")?;
        spec.validate(cfg)?;
        Ok(Self {
            cfg,
            sampler: GaussianLinkSampler::from_spec(spec, cfg)?,
        })
    }
}

impl Iterator for BlockFadingSource<'_> {
    type Item = ChannelState;

    fn next(&mut self) -> Option<ChannelState> {
        Some(self.sampler.state(self.cfg))
    }
}

/// `n_blocks` independent realizations.
pub fn draw_block_sequence(spec: &FadingSpec, cfg: &GameConfig, n_blocks: usize) -> Result<Vec<ChannelState>> {
    Ok(BlockFadingSource::new(spec, cfg)?.take(n_blocks).collect())
}

#[derive(Clone, Debug)]
struct Oscillators {
    amplitude: f64,
    frequency: Vec<f64>,
    phase: Vec<f64>,
}

impl Oscillators {
    fn value(&self, t: f64) -> Complex64 {
        let sum: Complex64 = self
            .frequency
            .iter()
            .zip(&self.phase)
            .map(|(f, phi)| Complex64::from_polar(1.0, 2.0 * PI * f * t + phi))
            .sum();
        sum * self.amplitude
    }
}

/// Sum-of-sinusoids Rayleigh fading with per-link randomized arrival angles.
///
/// Link (k, α) carries `JAKES_OSCILLATORS` unit phasors with Doppler shifts
/// f_d cos θ_n, where θ_n = (2πn + θ₀)/N are equally spaced arrival angles with
/// a random per-link offset θ₀ and each phasor has an independent uniform
/// phase. The equal spacing makes the time-averaged autocorrelation follow
/// J₀(2π f_d τ) closely within a single track.
#[derive(Clone, Debug)]
pub struct JakesGenerator {
    links: Vec<Vec<Oscillators>>,
    sample_period: f64,
}

impl JakesGenerator {
    pub fn new(spec: &FadingSpec, cfg: &GameConfig) -> Result<Self> {
        spec.require(FadingKind::Jakes, "Jakes")?;
        spec.validate(cfg)?;
        let variance = spec.variance.resolve(cfg)?;
        let nu = spec.carrier_frequency.expect("validated");
        let velocity = spec.velocity.as_ref().expect("validated");
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        let n = JAKES_OSCILLATORS;
        let links = variance
            .iter()
            .enumerate()
            .map(|(k, row)| {
                let fd = doppler_frequency(velocity[k], nu);
                row.iter()
                    .map(|gamma| {
                        let offset: f64 = rng.random::<f64>() * 2.0 * PI;
                        let frequency = (0..n)
                            .map(|i| fd * ((2.0 * PI * i as f64 + offset) / n as f64).cos())
                            .collect();
                        let phase = (0..n).map(|_| rng.random::<f64>() * 2.0 * PI).collect();
                        Oscillators {
                            amplitude: (gamma / n as f64).sqrt(),
                            frequency,
                            phase,
                        }
                    })
                    .collect()
            })
            .collect();
        Ok(Self {
            links,
            sample_period: spec.sample_period.expect("validated"),
        })
    }

    pub fn sample_period(&self) -> f64 {
        self.sample_period
    }

    pub fn coefficients_at(&self, t: f64) -> Vec<Vec<Complex64>> {
        self.links
            .iter()
            .map(|row| row.iter().map(|osc| osc.value(t)).collect())
            .collect()
    }

    pub fn state_at_step(&self, cfg: &GameConfig, step: usize) -> ChannelState {
        ChannelState::from_coefficients(cfg, self.coefficients_at(step as f64 * self.sample_period))
            .expect("generator shape matches the game")
    }
}

/// Time-correlated Jakes track of `n_steps` realizations spaced by `sample_period`.
pub fn jakes_track(spec: &FadingSpec, cfg: &GameConfig, n_steps: usize) -> Result<Vec<ChannelState>> {
    let generator = JakesGenerator::new(spec, cfg)?;
    Ok((0..n_steps).map(|n| generator.state_at_step(cfg, n)).collect())
}

/// Writes a channel track as CSV with columns `step,k,alpha,re_h,im_h,g`.
///
/// States without complex coefficients get empty `re_h`/`im_h` fields.
pub fn write_channel_track_csv<W: Write>(writer: W, cfg: &GameConfig, states: &[ChannelState]) -> Result<()> {
    let mut out = csv::Writer::from_writer(writer);
    out.write_record(["step", "k", "alpha", "re_h", "im_h", "g"])?;
    for (step, state) in states.iter().enumerate() {
        for (k, j, a) in cfg.links() {
            let (re, im) = match state.coefficients() {
                Some(h) => (format!("{:e}", h[k][j].re), format!("{:e}", h[k][j].im)),
                None => (String::new(), String::new()),
            };
            out.write_record([
                step.to_string(),
                k.to_string(),
                a.to_string(),
                re,
                im,
                format!("{:e}", state.gain(k, j)),
            ])?;
        }
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> GameConfig {
        GameConfig::full_access(2, 2, 1.0, 1.0, 1.0).unwrap()
    }

    #[test]
    fn zero_variance_gives_zero_gains() {
        let spec = FadingSpec::new(FadingKind::Static, Variance::Uniform(0.0), 3);
        let state = draw_static(&spec, &cfg()).unwrap();
        assert!(state.gains().iter().flatten().all(|g| *g == 0.0));
    }

    #[test]
    fn static_draw_is_deterministic() {
        let spec = FadingSpec::new(FadingKind::Static, Variance::Uniform(1.0), 42);
        assert_eq!(draw_static(&spec, &cfg()).unwrap(), draw_static(&spec, &cfg()).unwrap());
        assert_ne!(
            draw_static(&spec, &cfg()).unwrap(),
            draw_static(&spec.with_seed(43), &cfg()).unwrap()
        );
    }

    #[test]
    fn wrong_kind_is_rejected() {
        let spec = FadingSpec::new(FadingKind::BlockIID, Variance::Uniform(1.0), 1);
        assert!(matches!(draw_static(&spec, &cfg()), Err(Error::WrongFadingKind { .. })));
        assert!(jakes_track(&spec, &cfg(), 3).is_err());
        let spec = spec.with_kind(FadingKind::Static);
        assert!(draw_block_sequence(&spec, &cfg(), 3).is_err());
    }

    #[test]
    fn empty_block_sequence() {
        let spec = FadingSpec::new(FadingKind::BlockIID, Variance::Uniform(1.0), 1);
        assert!(draw_block_sequence(&spec, &cfg(), 0).unwrap().is_empty());
    }

    #[test]
    fn gains_match_coefficients() {
        let spec = FadingSpec::new(FadingKind::BlockIID, Variance::Uniform(2.0), 9);
        for state in draw_block_sequence(&spec, &cfg(), 20).unwrap() {
            let h = state.coefficients().unwrap();
            for (k, j, _) in cfg().links() {
                assert_eq!(state.gain(k, j), h[k][j].norm_sqr());
            }
        }
    }

    #[test]
    fn doppler_and_coherence_of_mobile_users() {
        let fd = doppler_frequency(kmh_to_ms(5.0), 2e9);
        assert!((fd - 9.26).abs() < 0.01);
        assert!((coherence_time(kmh_to_ms(5.0), 2e9) - 0.108).abs() < 0.0005);
        assert!((coherence_time(kmh_to_ms(15.0), 2e9) - 0.036).abs() < 0.0005);
    }

    #[test]
    fn jakes_requires_motion_parameters() {
        let mut spec = FadingSpec::jakes(Variance::Uniform(1.0), 2e9, vec![1.0, 1.0], 1e-3, 0);
        assert!(jakes_track(&spec, &cfg(), 2).is_ok());
        spec.velocity = Some(vec![1.0]);
        assert!(jakes_track(&spec, &cfg(), 2).is_err());
        spec.velocity = Some(vec![1.0, 0.0]);
        assert!(jakes_track(&spec, &cfg(), 2).is_err());
    }

    #[test]
    fn variance_map_shape_is_checked() {
        let v = Variance::PerLink(vec![vec![1.0, 1.0]]);
        assert!(v.resolve(&cfg()).is_err());
        let v: Variance = serde_json::from_str("[[1.0, 0.5], [0.2, 3.0]]").unwrap();
        assert_eq!(v.resolve(&cfg()).unwrap()[1][1], 3.0);
    }

    #[test]
    fn track_csv_has_fixed_columns() {
        let spec = FadingSpec::jakes(Variance::Uniform(1.0), 2e9, vec![1.0, 1.0], 1e-3, 0);
        let track = jakes_track(&spec, &cfg(), 2).unwrap();
        let mut buf = Vec::new();
        write_channel_track_csv(&mut buf, &cfg(), &track).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("step,k,alpha,re_h,im_h,g"));
        assert_eq!(lines.count(), 8);
    }
}
