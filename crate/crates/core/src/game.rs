//! Data model of the power allocation game and its static payoffs.
//!
//! Every per-link quantity is stored as a [`LinkMap`]: one row per user, with
//! row `k` aligned to `GameConfig::accessible(k)`. Slot `j` of user `k` is the
//! link to channel `accessible(k)[j]`. Channels a user cannot reach have no
//! slot at all, so they never enter that user's simplex or the interference
//! sums.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Per-link values indexed `[user][slot]`.
pub type LinkMap = Vec<Vec<f64>>;

/// Profiles whose per-user sums are off by less than this (relative) are accepted as-is.
pub const SIMPLEX_TOLERANCE: f64 = 1e-9;
/// Profiles off by less than this (relative) are renormalized; anything larger is rejected.
pub const RENORMALIZE_TOLERANCE: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawGameConfig")]
pub struct GameConfig {
    num_users: usize,
    num_channels: usize,
    accessible: Vec<Vec<usize>>,
    max_power: Vec<f64>,
    bandwidth: Vec<f64>,
    noise_power: Vec<f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGameConfig {
    num_users: usize,
    num_channels: usize,
    #[serde(default)]
    accessible: Option<Vec<Vec<usize>>>,
    max_power: Vec<f64>,
    bandwidth: Vec<f64>,
    noise_power: Vec<f64>,
}

impl TryFrom<RawGameConfig> for GameConfig {
    type Error = Error;

    fn try_from(raw: RawGameConfig) -> Result<Self> {
        let accessible = raw
            .accessible
            .unwrap_or_else(|| vec![(0..raw.num_channels).collect(); raw.num_users]);
        GameConfig::new(
            raw.num_users,
            raw.num_channels,
            accessible,
            raw.max_power,
            raw.bandwidth,
            raw.noise_power,
        )
    }
}

impl GameConfig {
    pub fn new(
        num_users: usize,
        num_channels: usize,
        accessible: Vec<Vec<usize>>,
        max_power: Vec<f64>,
        bandwidth: Vec<f64>,
        noise_power: Vec<f64>,
    ) -> Result<Self> {
        if num_users == 0 {
            return Err(Error::InvalidConfig("num_users must be at least 1".into()));
        }
        if num_channels == 0 {
            return Err(Error::InvalidConfig("num_channels must be at least 1".into()));
        }
        if accessible.len() != num_users || max_power.len() != num_users {
            return Err(Error::InvalidConfig(format!(
                "accessible and max_power need {num_users} entries (got {} and {})",
                accessible.len(),
                max_power.len()
            )));
        }
        if bandwidth.len() != num_channels || noise_power.len() != num_channels {
            return Err(Error::InvalidConfig(format!(
                "bandwidth and noise_power need {num_channels} entries (got {} and {})",
                bandwidth.len(),
                noise_power.len()
            )));
        }
        let mut accessible = accessible;
        for (k, set) in accessible.iter_mut().enumerate() {
            set.sort_unstable();
            set.dedup();
            if set.len() < 2 {
                return Err(Error::InvalidConfig(format!(
                    "user {k} must access at least 2 distinct channels"
                )));
            }
            if let Some(&bad) = set.iter().find(|&&a| a >= num_channels) {
                return Err(Error::InvalidConfig(format!(
                    "user {k} lists channel {bad}, but only {num_channels} channels exist"
                )));
            }
        }
        let positive = |name: &str, values: &[f64]| -> Result<()> {
            match values.iter().position(|v| !(v.is_finite() && *v > 0.0)) {
                Some(i) => Err(Error::InvalidConfig(format!(
                    "{name}[{i}] = {} must be finite and positive",
                    values[i]
                ))),
                None => Ok(()),
            }
        };
        positive("max_power", &max_power)?;
        positive("bandwidth", &bandwidth)?;
        positive("noise_power", &noise_power)?;
        Ok(Self {
            num_users,
            num_channels,
            accessible,
            max_power,
            bandwidth,
            noise_power,
        })
    }

    /// Every user reaches every channel; scalar power, bandwidth and noise.
    pub fn full_access(
        num_users: usize,
        num_channels: usize,
        max_power: f64,
        bandwidth: f64,
        noise_power: f64,
    ) -> Result<Self> {
        Self::new(
            num_users,
            num_channels,
            vec![(0..num_channels).collect(); num_users],
            vec![max_power; num_users],
            vec![bandwidth; num_channels],
            vec![noise_power; num_channels],
        )
    }

    pub fn num_users(&self) -> usize {
        self.num_users
    }

    pub fn num_channels(&self) -> usize {
        self.num_channels
    }

    pub fn accessible(&self, user: usize) -> &[usize] {
        &self.accessible[user]
    }

    pub fn max_power(&self, user: usize) -> f64 {
        self.max_power[user]
    }

    pub fn max_powers(&self) -> &[f64] {
        &self.max_power
    }

    pub fn bandwidth(&self, channel: usize) -> f64 {
        self.bandwidth[channel]
    }

    pub fn noise_power(&self, channel: usize) -> f64 {
        self.noise_power[channel]
    }

    pub fn noise_powers(&self) -> &[f64] {
        &self.noise_power
    }

    /// Same game with every noise power replaced by `noise_power`.
    pub fn with_noise_power(&self, noise_power: f64) -> Result<Self> {
        Self::new(
            self.num_users,
            self.num_channels,
            self.accessible.clone(),
            self.max_power.clone(),
            self.bandwidth.clone(),
            vec![noise_power; self.num_channels],
        )
    }

    /// Total number of links Q.
    pub fn num_links(&self) -> usize {
        self.accessible.iter().map(Vec::len).sum()
    }

    /// Iterates `(user, slot, channel)` over every link.
    pub fn links(&self) -> impl Iterator<Item = (usize, usize, usize)> + '_ {
        self.accessible
            .iter()
            .enumerate()
            .flat_map(|(k, set)| set.iter().enumerate().map(move |(j, &a)| (k, j, a)))
    }

    /// Slot of `channel` in user `user`'s row, if accessible.
    pub fn slot_of(&self, user: usize, channel: usize) -> Option<usize> {
        self.accessible[user].binary_search(&channel).ok()
    }

    /// A zero-filled map with this game's link layout.
    pub fn zeros(&self) -> LinkMap {
        self.accessible.iter().map(|s| vec![0.0; s.len()]).collect()
    }

    /// A map with value `f(user, slot, channel)` on every link.
    pub fn link_map(&self, mut f: impl FnMut(usize, usize, usize) -> f64) -> LinkMap {
        self.accessible
            .iter()
            .enumerate()
            .map(|(k, set)| set.iter().enumerate().map(|(j, &a)| f(k, j, a)).collect())
            .collect()
    }

    pub(crate) fn check_shape(&self, map: &[Vec<f64>], what: &str) -> Result<()> {
        if map.len() != self.num_users
            || map
                .iter()
                .zip(&self.accessible)
                .any(|(row, set)| row.len() != set.len())
        {
            return Err(Error::ShapeMismatch(format!(
                "{what} does not match the game's link layout"
            )));
        }
        Ok(())
    }
}

/// One realization of the link gains g = |h|².
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChannelState {
    gains: LinkMap,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    coefficients: Option<Vec<Vec<Complex64>>>,
}

impl ChannelState {
    pub fn from_gains(cfg: &GameConfig, gains: LinkMap) -> Result<Self> {
        cfg.check_shape(&gains, "gain map")?;
        if let Some((k, j)) = find_link(&gains, |g| !(g.is_finite() && g >= 0.0)) {
            return Err(Error::InvalidChannel(format!(
                "gain of user {k} slot {j} is {}",
                gains[k][j]
            )));
        }
        Ok(Self {
            gains,
            coefficients: None,
        })
    }

    pub fn from_coefficients(cfg: &GameConfig, coefficients: Vec<Vec<Complex64>>) -> Result<Self> {
        let gains: LinkMap = coefficients
            .iter()
            .map(|row| row.iter().map(|h| h.norm_sqr()).collect())
            .collect();
        let mut state = Self::from_gains(cfg, gains)?;
        state.coefficients = Some(coefficients);
        Ok(state)
    }

    /// Every link with gain `g`.
    pub fn uniform(cfg: &GameConfig, g: f64) -> Result<Self> {
        Self::from_gains(cfg, cfg.link_map(|_, _, _| g))
    }

    pub fn gains(&self) -> &LinkMap {
        &self.gains
    }

    pub fn gain(&self, user: usize, slot: usize) -> f64 {
        self.gains[user][slot]
    }

    pub fn coefficients(&self) -> Option<&Vec<Vec<Complex64>>> {
        self.coefficients.as_ref()
    }

    /// Same state with every gain multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        let scale = factor.sqrt();
        Self {
            gains: self
                .gains
                .iter()
                .map(|row| row.iter().map(|g| g * factor).collect())
                .collect(),
            coefficients: self
                .coefficients
                .as_ref()
                .map(|h| h.iter().map(|row| row.iter().map(|c| c * scale).collect()).collect()),
        }
    }
}

/// A point of the product of scaled simplices: user k spends exactly P_k.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PowerProfile {
    allocation: LinkMap,
}

impl PowerProfile {
    /// Validates an allocation, renormalizing per-user sums that drifted by
    /// less than [`RENORMALIZE_TOLERANCE`].
    pub fn new(cfg: &GameConfig, allocation: LinkMap) -> Result<Self> {
        cfg.check_shape(&allocation, "power allocation")?;
        let mut allocation = allocation;
        for (k, row) in allocation.iter_mut().enumerate() {
            let budget = cfg.max_power(k);
            for (j, p) in row.iter_mut().enumerate() {
                if !p.is_finite() || *p < -SIMPLEX_TOLERANCE * budget {
                    return Err(Error::InvalidProfile(format!("user {k} slot {j} has power {p}")));
                }
                if *p < 0.0 {
                    *p = 0.0;
                }
            }
            let total: f64 = row.iter().sum();
            let drift = (total - budget).abs();
            if drift > RENORMALIZE_TOLERANCE * budget || total <= 0.0 {
                return Err(Error::InvalidProfile(format!(
                    "user {k} spends {total} but has budget {budget}"
                )));
            }
            if drift > SIMPLEX_TOLERANCE * budget {
                row.iter_mut().for_each(|p| *p *= budget / total);
            }
        }
        Ok(Self { allocation })
    }

    /// Builds a profile from nonnegative per-user weights, scaling each row to P_k.
    pub fn from_weights(cfg: &GameConfig, weights: LinkMap) -> Result<Self> {
        cfg.check_shape(&weights, "weight map")?;
        let mut allocation = weights;
        for (k, row) in allocation.iter_mut().enumerate() {
            let total: f64 = row.iter().sum();
            if !(total.is_finite() && total > 0.0) || row.iter().any(|w| *w < 0.0) {
                return Err(Error::InvalidProfile(format!(
                    "weights of user {k} must be nonnegative with a positive sum"
                )));
            }
            let scale = cfg.max_power(k) / total;
            row.iter_mut().for_each(|w| *w *= scale);
        }
        Ok(Self { allocation })
    }

    /// Equal split of each user's budget over its accessible channels.
    pub fn uniform(cfg: &GameConfig) -> Self {
        let allocation = cfg.link_map(|k, _, _| cfg.max_power(k) / cfg.accessible(k).len() as f64);
        Self { allocation }
    }

    /// All of user k's power on slot `slots[k]`.
    pub fn vertex(cfg: &GameConfig, slots: &[usize]) -> Result<Self> {
        if slots.len() != cfg.num_users() {
            return Err(Error::ShapeMismatch("one slot per user required".into()));
        }
        for (k, &s) in slots.iter().enumerate() {
            if s >= cfg.accessible(k).len() {
                return Err(Error::InvalidProfile(format!("user {k} has no slot {s}")));
            }
        }
        Ok(Self {
            allocation: cfg.link_map(|k, j, _| if j == slots[k] { cfg.max_power(k) } else { 0.0 }),
        })
    }

    /// Exact rescaling of rows that are already nonnegative; used by integrators.
    pub(crate) fn from_nonnegative_rows(cfg: &GameConfig, mut allocation: LinkMap) -> Self {
        for (k, row) in allocation.iter_mut().enumerate() {
            let total: f64 = row.iter().sum();
            let scale = cfg.max_power(k) / total;
            row.iter_mut().for_each(|p| *p *= scale);
        }
        Self { allocation }
    }

    pub fn allocation(&self) -> &LinkMap {
        &self.allocation
    }

    pub fn user(&self, user: usize) -> &[f64] {
        &self.allocation[user]
    }

    pub fn get(&self, user: usize, slot: usize) -> f64 {
        self.allocation[user][slot]
    }

    pub fn into_allocation(self) -> LinkMap {
        self.allocation
    }

    /// Smallest power on any link relative to its user's budget.
    pub fn min_fraction(&self, cfg: &GameConfig) -> f64 {
        self.allocation
            .iter()
            .enumerate()
            .flat_map(|(k, row)| row.iter().map(move |p| p / cfg.max_power(k)))
            .fold(f64::INFINITY, f64::min)
    }

    pub fn is_interior(&self) -> bool {
        self.allocation.iter().flatten().all(|p| *p > 0.0)
    }

    /// L¹ distance Σ |p - p'|.
    pub fn l1_distance(&self, other: &PowerProfile) -> f64 {
        self.allocation
            .iter()
            .flatten()
            .zip(other.allocation.iter().flatten())
            .map(|(a, b)| (a - b).abs())
            .sum()
    }

    /// L¹ distance with each user's block divided by its budget.
    pub fn normalized_l1_distance(&self, other: &PowerProfile, cfg: &GameConfig) -> f64 {
        self.allocation
            .iter()
            .zip(&other.allocation)
            .enumerate()
            .map(|(k, (a, b))| a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>() / cfg.max_power(k))
            .sum()
    }

    /// Largest relative violation of the per-user budget identity.
    pub fn simplex_violation(&self, cfg: &GameConfig) -> f64 {
        self.allocation
            .iter()
            .enumerate()
            .map(|(k, row)| {
                let budget = cfg.max_power(k);
                let drift = (row.iter().sum::<f64>() - budget).abs() / budget;
                let negative = row.iter().fold(0.0f64, |m, p| m.max(-p)) / budget;
                drift.max(negative)
            })
            .fold(0.0, f64::max)
    }
}

fn find_link(map: &[Vec<f64>], bad: impl Fn(f64) -> bool) -> Option<(usize, usize)> {
    map.iter()
        .enumerate()
        .find_map(|(k, row)| row.iter().position(|&v| bad(v)).map(|j| (k, j)))
}

fn assert_shapes(profile: &PowerProfile, channels: &ChannelState, cfg: &GameConfig) {
    assert!(
        cfg.check_shape(&profile.allocation, "profile").is_ok() && cfg.check_shape(&channels.gains, "channels").is_ok(),
        "profile/channel shapes do not match the game"
    );
}

/// Received signal load y_α = Σ_k g_kα p_kα on every channel.
pub fn channel_loads(profile: &PowerProfile, channels: &ChannelState, cfg: &GameConfig) -> Vec<f64> {
    assert_shapes(profile, channels, cfg);
    let mut load = vec![0.0; cfg.num_channels()];
    for (k, j, a) in cfg.links() {
        load[a] += channels.gains[k][j] * profile.allocation[k][j];
    }
    load
}

/// SINR of every link; users that cannot reach a channel add no interference to it.
pub fn sinr(profile: &PowerProfile, channels: &ChannelState, cfg: &GameConfig) -> LinkMap {
    assert_shapes(profile, channels, cfg);
    cfg.link_map(|k, j, a| {
        let own = channels.gains[k][j] * profile.allocation[k][j];
        // Interference is summed directly rather than as load - own, which
        // would cancel when one user dominates the channel.
        let interference: f64 = (0..cfg.num_users())
            .filter(|&l| l != k)
            .filter_map(|l| {
                cfg.slot_of(l, a)
                    .map(|s| channels.gains[l][s] * profile.allocation[l][s])
            })
            .sum();
        own / (cfg.noise_power(a) + interference)
    })
}

/// Spectral efficiency u_k = Σ_α b_α ln(1 + SINR_kα), in nats/s.
pub fn utility(profile: &PowerProfile, channels: &ChannelState, cfg: &GameConfig, user: usize) -> f64 {
    let s = sinr(profile, channels, cfg);
    cfg.accessible(user)
        .iter()
        .zip(&s[user])
        .map(|(&a, x)| cfg.bandwidth(a) * x.ln_1p())
        .sum()
}

/// Utilities of all users.
pub fn utilities(profile: &PowerProfile, channels: &ChannelState, cfg: &GameConfig) -> Vec<f64> {
    let s = sinr(profile, channels, cfg);
    (0..cfg.num_users())
        .map(|k| {
            cfg.accessible(k)
                .iter()
                .zip(&s[k])
                .map(|(&a, x)| cfg.bandwidth(a) * x.ln_1p())
                .sum()
        })
        .collect()
}

/// Marginal utilities v_kα = b_α g_kα / (σ_α² + Σ_ℓ g_ℓα p_ℓα); the sum includes user k.
pub fn marginal_utility(profile: &PowerProfile, channels: &ChannelState, cfg: &GameConfig) -> LinkMap {
    marginal_utility_raw(profile.allocation(), channels, cfg)
}

pub(crate) fn marginal_utility_raw(allocation: &[Vec<f64>], channels: &ChannelState, cfg: &GameConfig) -> LinkMap {
    let mut load = vec![0.0; cfg.num_channels()];
    for (k, j, a) in cfg.links() {
        load[a] += channels.gains[k][j] * allocation[k][j];
    }
    cfg.link_map(|k, j, a| cfg.bandwidth(a) * channels.gains[k][j] / (cfg.noise_power(a) + load[a]))
}

/// Interference-free upper bound b_α g_kα / σ_α² on each marginal utility.
pub fn marginal_utility_bound(channels: &ChannelState, cfg: &GameConfig) -> LinkMap {
    cfg.link_map(|k, j, a| cfg.bandwidth(a) * channels.gains[k][j] / cfg.noise_power(a))
}

/// Static potential Φ(p) = -Σ_α b_α ln(1 + Σ_k g_kα p_kα / σ_α²).
pub fn potential(profile: &PowerProfile, channels: &ChannelState, cfg: &GameConfig) -> f64 {
    let load = channel_loads(profile, channels, cfg);
    potential_from_loads(&load, cfg)
}

pub(crate) fn potential_from_loads(load: &[f64], cfg: &GameConfig) -> f64 {
    -load
        .iter()
        .enumerate()
        .map(|(a, y)| cfg.bandwidth(a) * (y / cfg.noise_power(a)).ln_1p())
        .sum::<f64>()
}

/// Φ(to) - Φ(from), computed from load differences so that nearby profiles
/// do not lose their difference to rounding.
pub fn potential_difference(from: &PowerProfile, to: &PowerProfile, channels: &ChannelState, cfg: &GameConfig) -> f64 {
    let base = channel_loads(from, channels, cfg);
    let mut delta = vec![0.0; cfg.num_channels()];
    for (k, j, a) in cfg.links() {
        delta[a] += channels.gains[k][j] * (to.allocation[k][j] - from.allocation[k][j]);
    }
    -delta
        .iter()
        .enumerate()
        .map(|(a, d)| cfg.bandwidth(a) * (d / (cfg.noise_power(a) + base[a])).ln_1p())
        .sum::<f64>()
}

/// Hessian ∂²Φ/∂p_kα∂p_ℓβ = δ_αβ b_α g_kα g_ℓα / (σ_α² + y_α)² over the listed (user, slot) links.
pub fn potential_hessian_static(
    allocation: &[Vec<f64>],
    channels: &ChannelState,
    cfg: &GameConfig,
    links: &[(usize, usize)],
) -> DMatrix<f64> {
    let mut load = vec![0.0; cfg.num_channels()];
    for (k, j, a) in cfg.links() {
        load[a] += channels.gains[k][j] * allocation[k][j];
    }
    let channel = |k: usize, j: usize| cfg.accessible(k)[j];
    DMatrix::from_fn(links.len(), links.len(), |r, c| {
        let (k, j) = links[r];
        let (m, s) = links[c];
        let a = channel(k, j);
        if a != channel(m, s) {
            return 0.0;
        }
        let d = cfg.noise_power(a) + load[a];
        cfg.bandwidth(a) * channels.gains[k][j] * channels.gains[m][s] / (d * d)
    })
}

/// Degeneracy index Q - A - K; positive values rule out strict convexity of Φ.
pub fn degeneracy_index(cfg: &GameConfig) -> i64 {
    cfg.num_links() as i64 - cfg.num_channels() as i64 - cfg.num_users() as i64
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::LN_2;

    fn one_user() -> GameConfig {
        GameConfig::full_access(1, 2, 1.0, 1.0, 1.0).unwrap()
    }

    #[test]
    fn rejects_small_access_sets() {
        let err = GameConfig::new(1, 2, vec![vec![0]], vec![1.0], vec![1.0; 2], vec![1.0; 2]);
        assert!(matches!(err, Err(Error::InvalidConfig(_))));
        let err = GameConfig::new(1, 2, vec![vec![0, 0]], vec![1.0], vec![1.0; 2], vec![1.0; 2]);
        assert!(err.is_err());
    }

    #[test]
    fn rejects_nonpositive_parameters() {
        assert!(GameConfig::full_access(2, 2, 0.0, 1.0, 1.0).is_err());
        assert!(GameConfig::full_access(2, 2, 1.0, -1.0, 1.0).is_err());
        assert!(GameConfig::full_access(2, 2, 1.0, 1.0, 0.0).is_err());
        assert!(GameConfig::full_access(0, 2, 1.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn json_defaults_to_full_access() {
        let cfg: GameConfig = serde_json::from_str(
            r#"{"num_users":2,"num_channels":3,"max_power":[1,2],"bandwidth":[1,1,1],"noise_power":[1,1,1]}"#,
        )
        .unwrap();
        assert_eq!(cfg.accessible(1), &[0, 1, 2]);
        let back: GameConfig = serde_json::from_str(&serde_json::to_string(&cfg).unwrap()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn profile_renormalizes_small_drift_and_rejects_large() {
        let cfg = one_user();
        let p = PowerProfile::new(&cfg, vec![vec![0.5, 0.5 + 5e-7]]).unwrap();
        assert!((p.user(0).iter().sum::<f64>() - 1.0).abs() < 1e-15);
        assert!(PowerProfile::new(&cfg, vec![vec![0.5, 0.6]]).is_err());
        assert!(PowerProfile::new(&cfg, vec![vec![1.5, -0.5]]).is_err());
    }

    #[test]
    fn sinr_without_interference() {
        let cfg = one_user();
        let ch = ChannelState::from_gains(&cfg, vec![vec![1.0, 0.0]]).unwrap();
        let p = PowerProfile::vertex(&cfg, &[0]).unwrap();
        assert_eq!(sinr(&p, &ch, &cfg)[0][0], 1.0);
        assert!((utility(&p, &ch, &cfg, 0) - LN_2).abs() < 1e-15);
        assert!((potential(&p, &ch, &cfg) + LN_2).abs() < 1e-15);
    }

    #[test]
    fn symmetric_two_user_sinr() {
        let cfg = GameConfig::full_access(2, 2, 1.0, 1.0, 1.0).unwrap();
        let ch = ChannelState::uniform(&cfg, 1.0).unwrap();
        let p = PowerProfile::vertex(&cfg, &[0, 0]).unwrap();
        let s = sinr(&p, &ch, &cfg);
        assert_eq!(s[0][0], 0.5);
        assert_eq!(s[1][0], 0.5);
    }

    #[test]
    fn unreachable_users_do_not_interfere() {
        let cfg = GameConfig::new(
            2,
            3,
            vec![vec![0, 1], vec![1, 2]],
            vec![1.0, 1.0],
            vec![1.0; 3],
            vec![1.0; 3],
        )
        .unwrap();
        let ch = ChannelState::uniform(&cfg, 1.0).unwrap();
        let p = PowerProfile::new(&cfg, vec![vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let s = sinr(&p, &ch, &cfg);
        assert_eq!(s[0][0], 1.0);
        assert_eq!(s[1][1], 1.0);
    }

    #[test]
    fn zero_gains() {
        let cfg = GameConfig::full_access(3, 2, 1.0, 1.0, 1.0).unwrap();
        let ch = ChannelState::uniform(&cfg, 0.0).unwrap();
        let p = PowerProfile::uniform(&cfg);
        assert_eq!(potential(&p, &ch, &cfg), 0.0);
        assert_eq!(utility(&p, &ch, &cfg, 2), 0.0);
        assert!(marginal_utility(&p, &ch, &cfg).iter().flatten().all(|v| *v == 0.0));
    }

    #[test]
    fn single_user_marginal() {
        let cfg = one_user();
        let ch = ChannelState::from_gains(&cfg, vec![vec![1.0, 1.0]]).unwrap();
        let p = PowerProfile::vertex(&cfg, &[0]).unwrap();
        assert_eq!(marginal_utility(&p, &ch, &cfg)[0][0], 0.5);
    }

    #[test]
    fn degeneracy_index_examples() {
        assert_eq!(
            degeneracy_index(&GameConfig::full_access(2, 2, 1.0, 1.0, 1.0).unwrap()),
            0
        );
        assert_eq!(
            degeneracy_index(&GameConfig::full_access(3, 2, 1.0, 1.0, 1.0).unwrap()),
            1
        );
        let cfg = GameConfig::new(
            2,
            3,
            vec![vec![0, 1], vec![1, 2]],
            vec![1.0, 1.0],
            vec![1.0; 3],
            vec![1.0; 3],
        )
        .unwrap();
        assert_eq!(degeneracy_index(&cfg), -1);
    }

    #[test]
    fn coefficients_define_gains() {
        let cfg = one_user();
        let h = vec![vec![Complex64::new(0.3, -0.4), Complex64::new(1.0, 2.0)]];
        let ch = ChannelState::from_coefficients(&cfg, h).unwrap();
        assert!((ch.gain(0, 0) - 0.25).abs() < 1e-16);
        assert!((ch.gain(0, 1) - 5.0).abs() < 1e-15);
    }
}
