//! Nash equilibria as potential minimizers.
//!
//! The static and ergodic potentials are convex on the product of simplices,
//! so equilibria are found by entropic mirror descent
//! p_kα ∝ p_kα exp(s v_kα) with Armijo backtracking on the potential, and
//! certified through the water-filling KKT conditions.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1};
use serde::{Deserialize, Serialize};

use crate::channels::FadingSpec;
use crate::error::{Error, Result};
use crate::game::{
    marginal_utility_raw, potential, potential_difference, potential_hessian_static, ChannelState, GameConfig, LinkMap,
    PowerProfile,
};
use crate::special::{ErgodicModel, Separation};

/// Default KKT tolerance for the solvers.
pub const DEFAULT_TOLERANCE: f64 = 1e-10;
/// Default support threshold, relative to each user's budget.
pub const SUPPORT_THRESHOLD: f64 = 1e-6;
/// Iteration budget of the mirror-descent solver.
pub const MAX_ITERATIONS: usize = 100_000;

const ARMIJO: f64 = 1e-4;
const POWER_FLOOR: f64 = 1e-200;
const NOISE_FLOOR: f64 = 1e-15;
const POLISH_EVERY: usize = 10;
const POLISH_SUPPORT: f64 = 1e-10;
const POLISH_FACES: usize = 32;
const POLISH_ITERATIONS: usize = 8;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumResult {
    pub profile: PowerProfile,
    pub potential_value: f64,
    pub kkt_residual: f64,
    /// λ_k, the common marginal utility on user k's support.
    pub multipliers: Vec<f64>,
    /// Channels carrying more than `SUPPORT_THRESHOLD · P_k`, per user.
    pub support: Vec<Vec<usize>>,
    pub iterations: usize,
}

impl EquilibriumResult {
    /// Whether every user supports exactly one channel.
    pub fn is_strict(&self) -> bool {
        self.support.iter().all(|s| s.len() == 1)
    }

    /// The profile with sub-threshold powers set to zero and rows rescaled.
    pub fn snapped_profile(&self, cfg: &GameConfig) -> PowerProfile {
        let allocation = cfg.link_map(|k, j, a| {
            if self.support[k].contains(&a) {
                self.profile.get(k, j)
            } else {
                0.0
            }
        });
        PowerProfile::from_nonnegative_rows(cfg, allocation)
    }
}

/// Either fixed gains or a fading law whose ergodic game is meant.
#[derive(Clone, Copy, Debug)]
pub enum Environment<'a> {
    Static(&'a ChannelState),
    Ergodic(&'a FadingSpec),
}

/// Support (channel indices) of each user at relative threshold `threshold`.
pub fn support_sets(profile: &PowerProfile, cfg: &GameConfig, threshold: f64) -> Vec<Vec<usize>> {
    (0..cfg.num_users())
        .map(|k| {
            cfg.accessible(k)
                .iter()
                .enumerate()
                .filter(|(j, _)| profile.get(k, *j) > threshold * cfg.max_power(k))
                .map(|(_, a)| *a)
                .collect()
        })
        .collect()
}

/// KKT residual: max of |v - λ_k| on the support and (v - λ_k)₊ off it, where λ_k is the
/// power-weighted mean marginal over the support (threshold `SUPPORT_THRESHOLD · P_k`).
pub fn kkt_residual(allocation: &[Vec<f64>], v: &[Vec<f64>], cfg: &GameConfig) -> (f64, Vec<f64>) {
    let mut residual: f64 = 0.0;
    let mut multipliers = Vec::with_capacity(cfg.num_users());
    for (k, (p, v)) in allocation.iter().zip(v).enumerate() {
        let cut = SUPPORT_THRESHOLD * cfg.max_power(k);
        let (weighted, mass) = p
            .iter()
            .zip(v)
            .filter(|(p, _)| **p > cut)
            .fold((0.0, 0.0), |(w, m), (p, v)| (w + p * v, m + p));
        let lambda = if mass > 0.0 {
            weighted / mass
        } else {
            p.iter().zip(v).map(|(p, v)| p * v).sum::<f64>() / p.iter().sum::<f64>()
        };
        for (p, v) in p.iter().zip(v) {
            let gap = v - lambda;
            residual = residual.max(if *p > cut { gap.abs() } else { gap.max(0.0) });
        }
        multipliers.push(lambda);
    }
    (residual, multipliers)
}

trait Objective {
    fn marginals(&self, allocation: &LinkMap) -> Result<LinkMap>;
    fn value(&self, allocation: &LinkMap) -> Result<f64>;
    /// Φ(to) - Φ(from).
    fn difference(&self, from: &LinkMap, to: &LinkMap) -> Result<f64>;
    /// Rounding allowance in the sufficient-decrease test.
    fn slack(&self, value: f64) -> f64;
    /// Upper bound on |∂²Φ/∂p∂p'| over the feasible set.
    fn curvature(&self) -> f64;
    fn hessian(&self, allocation: &LinkMap, links: &[(usize, usize)]) -> Result<DMatrix<f64>>;
}

fn curvature_bound(cfg: &GameConfig, gains: &LinkMap, moment: f64) -> f64 {
    cfg.links()
        .map(|(k, j, a)| moment * cfg.bandwidth(a) * gains[k][j] * gains[k][j] / cfg.noise_power(a).powi(2))
        .fold(0.0, f64::max)
}

struct StaticObjective<'a> {
    cfg: &'a GameConfig,
    channels: &'a ChannelState,
}

impl Objective for StaticObjective<'_> {
    fn marginals(&self, allocation: &LinkMap) -> Result<LinkMap> {
        Ok(marginal_utility_raw(allocation, self.channels, self.cfg))
    }

    fn value(&self, allocation: &LinkMap) -> Result<f64> {
        Ok(potential(
            &PowerProfile::from_nonnegative_rows(self.cfg, allocation.clone()),
            self.channels,
            self.cfg,
        ))
    }

    fn difference(&self, from: &LinkMap, to: &LinkMap) -> Result<f64> {
        let from = PowerProfile::from_nonnegative_rows(self.cfg, from.clone());
        let to = PowerProfile::from_nonnegative_rows(self.cfg, to.clone());
        Ok(potential_difference(&from, &to, self.channels, self.cfg))
    }

    fn slack(&self, _value: f64) -> f64 {
        0.0
    }

    fn curvature(&self) -> f64 {
        curvature_bound(self.cfg, self.channels.gains(), 1.0)
    }

    fn hessian(&self, allocation: &LinkMap, links: &[(usize, usize)]) -> Result<DMatrix<f64>> {
        Ok(potential_hessian_static(allocation, self.channels, self.cfg, links))
    }
}

struct ErgodicObjective<'a> {
    cfg: &'a GameConfig,
    model: ErgodicModel,
}

impl Objective for ErgodicObjective<'_> {
    fn marginals(&self, allocation: &LinkMap) -> Result<LinkMap> {
        self.model.mean_marginals(allocation, self.cfg)
    }

    fn value(&self, allocation: &LinkMap) -> Result<f64> {
        self.model.potential(allocation, self.cfg)
    }

    fn difference(&self, from: &LinkMap, to: &LinkMap) -> Result<f64> {
        Ok(self.value(to)? - self.value(from)?)
    }

    fn slack(&self, value: f64) -> f64 {
        64.0 * f64::EPSILON * (1.0 + value.abs())
    }

    fn curvature(&self) -> f64 {
        // E[g g'] ≤ 2 γ γ' for exponential gains.
        curvature_bound(self.cfg, self.model.variance(), 2.0)
    }

    fn hessian(&self, allocation: &LinkMap, links: &[(usize, usize)]) -> Result<DMatrix<f64>> {
        self.model.hessian(allocation, self.cfg, links)
    }
}

fn mirror_step(allocation: &LinkMap, v: &LinkMap, s: f64, cfg: &GameConfig) -> LinkMap {
    allocation
        .iter()
        .zip(v)
        .enumerate()
        .map(|(k, (p, v))| {
            let top = v.iter().fold(f64::NEG_INFINITY, |m, x| m.max(*x));
            let w: Vec<f64> = p.iter().zip(v).map(|(p, v)| p * (s * (v - top)).exp()).collect();
            let total: f64 = w.iter().sum();
            let budget = cfg.max_power(k);
            w.iter()
                .map(|x| (budget * x / total).max(POWER_FLOOR * budget))
                .collect()
        })
        .collect()
}

/// Active-set Newton on the KKT system v_kα(p) = λ_k on a face, Σ_α p_kα = P_k.
///
/// Links driven nonpositive leave the face; after each face solve the off-face
/// link with the largest positive gap v - λ re-enters. `None` if no face is settled.
fn newton_polish(
    objective: &dyn Objective,
    cfg: &GameConfig,
    p: &LinkMap,
    multipliers: &[f64],
) -> Result<Option<LinkMap>> {
    let mut face: Vec<(usize, usize)> = cfg
        .links()
        .filter(|&(k, j, _)| p[k][j] > POLISH_SUPPORT * cfg.max_power(k))
        .map(|(k, j, _)| (k, j))
        .collect();
    let users = cfg.num_users();
    let mut x = p.clone();
    let mut lambda = multipliers.to_vec();
    'faces: for _ in 0..POLISH_FACES {
        for (k, j, _) in cfg.links() {
            if !face.contains(&(k, j)) {
                x[k][j] = POWER_FLOOR * cfg.max_power(k);
            }
        }
        let n = face.len();
        for _ in 0..POLISH_ITERATIONS {
            let v = objective.marginals(&x)?;
            let hessian = objective.hessian(&x, &face)?;
            let mut jacobian = DMatrix::zeros(n + users, n + users);
            let mut rhs = DVector::zeros(n + users);
            for (i, &(k, j)) in face.iter().enumerate() {
                for l in 0..n {
                    jacobian[(i, l)] = -hessian[(i, l)];
                }
                jacobian[(i, n + k)] = -1.0;
                jacobian[(n + k, i)] = 1.0;
                rhs[i] = lambda[k] - v[k][j];
            }
            for (k, row) in x.iter().enumerate() {
                rhs[n + k] = cfg.max_power(k) - row.iter().sum::<f64>();
            }
            let Some(step) = jacobian.lu().solve(&rhs) else {
                return Ok(None);
            };
            let before = face.len();
            face = face
                .iter()
                .enumerate()
                .filter(|(i, &(k, j))| x[k][j] + step[*i] > 0.0)
                .map(|(_, l)| *l)
                .collect();
            if face.len() < before {
                continue 'faces;
            }
            let mut largest: f64 = 0.0;
            for (i, &(k, j)) in face.iter().enumerate() {
                x[k][j] += step[i];
                largest = largest.max(step[i].abs() / cfg.max_power(k));
            }
            for (k, l) in lambda.iter_mut().enumerate() {
                *l += step[n + k];
            }
            if largest < 1e-15 {
                break;
            }
        }
        let v = objective.marginals(&x)?;
        let entering = cfg
            .links()
            .filter(|&(k, j, _)| !face.contains(&(k, j)))
            .map(|(k, j, _)| ((k, j), v[k][j] - lambda[k]))
            .filter(|(_, gap)| *gap > 0.0)
            .max_by(|a, b| a.1.total_cmp(&b.1));
        match entering {
            None => return Ok(Some(x)),
            Some(((k, j), _)) => {
                face.push((k, j));
                x[k][j] = POLISH_SUPPORT * cfg.max_power(k);
            }
        }
    }
    Ok(None)
}

fn build_result(
    cfg: &GameConfig,
    allocation: LinkMap,
    value: f64,
    residual: f64,
    multipliers: Vec<f64>,
    iterations: usize,
) -> EquilibriumResult {
    let profile = PowerProfile::from_nonnegative_rows(cfg, allocation);
    let support = support_sets(&profile, cfg, SUPPORT_THRESHOLD);
    EquilibriumResult {
        profile,
        potential_value: value,
        kkt_residual: residual,
        multipliers,
        support,
        iterations,
    }
}

fn minimize(objective: &dyn Objective, cfg: &GameConfig, start: &PowerProfile, tol: f64) -> Result<EquilibriumResult> {
    if !(tol > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "tolerance must be positive, got {tol}"
        )));
    }
    let mut p: LinkMap = cfg.link_map(|k, j, _| start.get(k, j).max(POWER_FLOOR * cfg.max_power(k)));
    let mut value = objective.value(&p)?;
    let v_scale = objective
        .marginals(&p)?
        .iter()
        .flatten()
        .fold(0.0f64, |m, x| m.max(x.abs()));
    let mut s = if v_scale > 0.0 { 1.0 / v_scale } else { 1.0 };
    let mut best: Option<(f64, LinkMap, f64, Vec<f64>)> = None;
    let max_power = cfg.max_powers().iter().fold(0.0f64, |m, x| m.max(*x));
    let safe_step = 1.0 / (objective.curvature() * max_power).max(f64::MIN_POSITIVE);

    let mut iterations = 0;
    for iteration in 0..=MAX_ITERATIONS {
        iterations = iteration;
        let v = objective.marginals(&p)?;
        let (residual, multipliers) = kkt_residual(&p, &v, cfg);
        if best.as_ref().is_none_or(|b| residual < b.0) {
            best = Some((residual, p.clone(), value, multipliers.clone()));
        }
        if residual <= tol {
            return Ok(build_result(cfg, p, value, residual, multipliers, iteration));
        }
        if iteration == MAX_ITERATIONS {
            break;
        }
        if iteration % POLISH_EVERY == 0 {
            if let Some(x) = newton_polish(objective, cfg, &p, &multipliers)? {
                let x = PowerProfile::from_nonnegative_rows(cfg, x).into_allocation();
                if kkt_residual(&x, &objective.marginals(&x)?, cfg).0 < residual {
                    value = objective.value(&x)?;
                    p = x;
                    continue;
                }
            }
        }
        let mut accepted = false;
        while s > 1e-30 {
            let candidate = mirror_step(&p, &v, s, cfg);
            let linear: f64 = candidate
                .iter()
                .flatten()
                .zip(p.iter().flatten())
                .zip(v.iter().flatten())
                .map(|((c, p), v)| -v * (c - p))
                .sum();
            let change = objective.difference(&p, &candidate)?;
            let noise = NOISE_FLOOR * (1.0 + value.abs()) + objective.slack(value);
            let sufficient = if linear.abs() * ARMIJO > noise {
                change <= ARMIJO * linear + objective.slack(value)
            } else {
                // Decreases are below rounding; fall back to the KKT residual as merit.
                change <= noise
                    && (s <= safe_step || kkt_residual(&candidate, &objective.marginals(&candidate)?, cfg).0 < residual)
            };
            if sufficient {
                value = objective.value(&candidate)?;
                p = candidate;
                s *= 2.0;
                accepted = true;
                break;
            }
            s *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    let (residual, allocation, value, multipliers) = best.expect("at least one iterate");
    Err(Error::SolverDidNotConverge {
        iterations,
        residual,
        best: Box::new(build_result(cfg, allocation, value, residual, multipliers, iterations)),
    })
}

/// Minimizes the static potential from the uniform profile.
pub fn solve_static(cfg: &GameConfig, channels: &ChannelState, tol: f64) -> Result<EquilibriumResult> {
    solve_static_from(cfg, channels, &PowerProfile::uniform(cfg), tol)
}

/// Minimizes the static potential from `start`; zero entries of `start` are lifted to a tiny floor.
pub fn solve_static_from(
    cfg: &GameConfig,
    channels: &ChannelState,
    start: &PowerProfile,
    tol: f64,
) -> Result<EquilibriumResult> {
    cfg.check_shape(channels.gains(), "channel gains")?;
    cfg.check_shape(start.allocation(), "initial profile")?;
    minimize(&StaticObjective { cfg, channels }, cfg, start, tol)
}

/// Minimizes the ergodic potential of a Gaussian fading law.
///
/// Iterates that make two ergodic parameters nearly coincide are evaluated by
/// quadrature, so the solver never stalls on the singular set of the closed form.
pub fn solve_ergodic(cfg: &GameConfig, spec: &FadingSpec, tol: f64) -> Result<EquilibriumResult> {
    solve_ergodic_from(cfg, spec, &PowerProfile::uniform(cfg), tol)
}

pub fn solve_ergodic_from(
    cfg: &GameConfig,
    spec: &FadingSpec,
    start: &PowerProfile,
    tol: f64,
) -> Result<EquilibriumResult> {
    cfg.check_shape(start.allocation(), "initial profile")?;
    let model = ErgodicModel::new(spec, cfg, Separation::Stable)?;
    minimize(&ErgodicObjective { cfg, model }, cfg, start, tol)
}

/// Equilibrium of either environment.
pub fn solve(cfg: &GameConfig, env: Environment<'_>, tol: f64) -> Result<EquilibriumResult> {
    match env {
        Environment::Static(channels) => solve_static(cfg, channels, tol),
        Environment::Ergodic(spec) => solve_ergodic(cfg, spec, tol),
    }
}

/// A random interior profile with Dirichlet(1, ..., 1) rows.
pub fn random_interior_profile(cfg: &GameConfig, rng: &mut impl rand::Rng) -> PowerProfile {
    let weights = cfg.link_map(|_, _, _| {
        let x: f64 = Exp1.sample(rng);
        x.max(1e-300)
    });
    PowerProfile::from_weights(cfg, weights).expect("positive weights")
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UniquenessReport {
    pub unique_within_tol: bool,
    /// Largest pairwise L¹ distance between solutions.
    pub spread: f64,
    pub solutions: Vec<EquilibriumResult>,
}

/// Solves from `n_starts` random interior points and reports the spread of the solutions.
pub fn uniqueness_probe(
    cfg: &GameConfig,
    channels: &ChannelState,
    n_starts: usize,
    tol: f64,
    seed: u64,
) -> Result<UniquenessReport> {
    if n_starts < 2 {
        return Err(Error::InvalidParameter(
            "uniqueness probe needs at least 2 starts".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let solutions = (0..n_starts)
        .map(|_| {
            let start = random_interior_profile(cfg, &mut rng);
            solve_static_from(cfg, channels, &start, DEFAULT_TOLERANCE)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut spread: f64 = 0.0;
    for (i, a) in solutions.iter().enumerate() {
        for b in &solutions[i + 1..] {
            spread = spread.max(a.profile.l1_distance(&b.profile));
        }
    }
    Ok(UniquenessReport {
        unique_within_tol: spread <= tol,
        spread,
        solutions,
    })
}

/// Edge between two channels contributed by one user's star.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SupportEdge {
    pub user: usize,
    pub hub: usize,
    pub leaf: usize,
}

/// Channels as vertices; each user contributes the star on its support,
/// centred at its lowest-indexed supported channel.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SupportMultigraph {
    pub num_vertices: usize,
    pub edges: Vec<SupportEdge>,
}

/// Builds the support multigraph with support threshold relative to P_k.
pub fn support_multigraph(profile: &PowerProfile, cfg: &GameConfig, support_threshold: f64) -> SupportMultigraph {
    let edges = support_sets(profile, cfg, support_threshold)
        .into_iter()
        .enumerate()
        .flat_map(|(user, support)| {
            let hub = support.first().copied();
            support.into_iter().skip(1).map(move |leaf| SupportEdge {
                user,
                hub: hub.expect("nonempty"),
                leaf,
            })
        })
        .collect();
    SupportMultigraph {
        num_vertices: cfg.num_channels(),
        edges,
    }
}

/// True iff the multigraph is a forest; a repeated edge is a cycle.
pub fn is_acyclic(graph: &SupportMultigraph) -> bool {
    let mut parent: Vec<usize> = (0..graph.num_vertices).collect();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    for e in &graph.edges {
        let (a, b) = (find(&mut parent, e.hub), find(&mut parent, e.leaf));
        if a == b {
            return false;
        }
        parent[a] = b;
    }
    true
}

/// Sum capacity -Φ(q) (static) or -Φ̄(q̄) (ergodic) at the equilibrium.
pub fn sum_capacity(cfg: &GameConfig, env: Environment<'_>) -> Result<f64> {
    let tol = match env {
        Environment::Static(_) => DEFAULT_TOLERANCE,
        Environment::Ergodic(_) => 1e-9,
    };
    Ok(-solve(cfg, env, tol)?.potential_value)
}
