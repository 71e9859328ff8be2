//! The explosive birth–death chain carried by the expected-energy flow.
//!
//! State `j ≥ 1` jumps down at rate `μ_j = σ²λ_{j−1}^{2θ}` and up at rate
//! `ν_j = σ²λ_j^{2θ}`. With geometric `λ_j` the chain drifts upward fast enough
//! to make infinitely many jumps in finite time; reaching `j_max` stands in for
//! that explosion.

use rand::Rng;
use rand_distr::Exp1;
use rayon::prelude::*;
use serde::Serialize;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{Error, Result};
use crate::forward::sum_series;
use crate::rng::{path_rng, PathRng};
use crate::shell::ModelParams;
use crate::stats::{Estimate, Moments};

const CHUNK: usize = 64;

/// Below this many paths the goodness-of-fit summaries carry a warning.
pub const MIN_PATHS_FOR_FIT: usize = 1000;

/// Jump rates `μ_j = d·b^{j−1}`, `ν_j = u·b^j` with `b = λ^{2θ}`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BDRates {
    base: f64,
    down_scale: f64,
    up_scale: f64,
    sigma2: f64,
}

impl BDRates {
    pub fn new(p: &ModelParams) -> Self {
        let sigma2 = p.sigma() * p.sigma();
        Self {
            base: p.lambda().powf(2.0 * p.theta()),
            down_scale: sigma2,
            up_scale: sigma2,
            sigma2,
        }
    }

    /// Test fixture with `ν ≡ 0`: the chain only moves down.
    pub fn death_only(p: &ModelParams) -> Self {
        Self {
            up_scale: 0.0,
            ..Self::new(p)
        }
    }

    /// `λ^{2θ}`.
    pub fn base(&self) -> f64 {
        self.base
    }

    pub fn sigma2(&self) -> f64 {
        self.sigma2
    }

    pub fn mu(&self, j: usize) -> f64 {
        self.down_scale * self.base.powi(j as i32 - 1)
    }

    pub fn nu(&self, j: usize) -> f64 {
        self.up_scale * self.base.powi(j as i32)
    }

    pub fn total(&self, j: usize) -> f64 {
        self.mu(j) + self.nu(j)
    }

    /// `Π_{j,j+1}`.
    pub fn up_prob(&self, j: usize) -> f64 {
        let t = self.total(j);
        if t == 0.0 {
            0.0
        } else {
            self.nu(j) / t
        }
    }

    /// `Π_{j,j−1}`.
    pub fn down_prob(&self, j: usize) -> f64 {
        1.0 - self.up_prob(j)
    }
}

pub fn make_rates(p: &ModelParams) -> BDRates {
    BDRates::new(p)
}

/// What happens when the chain steps down from state 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Boundary {
    /// State 0 traps the chain.
    Absorbing,
    /// State 0 is left instantly for state 1; the return counts as a new visit to 1.
    Reflecting,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Exit {
    Absorbed,
    /// Reached `j_max` or used up the jump budget before `t_max`.
    Exploded,
    Censored,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChainLimits {
    pub t_max: f64,
    pub j_max: usize,
    pub jump_budget: u64,
    pub boundary: Boundary,
}

impl Default for ChainLimits {
    fn default() -> Self {
        Self {
            t_max: f64::INFINITY,
            j_max: 60,
            jump_budget: 1_000_000,
            boundary: Boundary::Absorbing,
        }
    }
}

/// One sampled trajectory; `states[i]` is entered at `times[i]`.
///
/// A reflection off 0 appears as a zero-length stay in state 0.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct JumpPath {
    pub states: Vec<usize>,
    pub times: Vec<f64>,
    pub exit: Exit,
    /// Absorption or explosion time, or `t_max` when censored.
    pub end_time: f64,
    pub seed: u64,
    pub path_index: u64,
}

impl JumpPath {
    /// State occupied at time `t`; `None` once the path has exploded or past a censoring time.
    pub fn state_at(&self, t: f64) -> Option<usize> {
        if t >= self.end_time && self.exit != Exit::Absorbed {
            return None;
        }
        let i = self.times.partition_point(|&s| s <= t);
        Some(self.states[i.saturating_sub(1)])
    }

    /// Total time spent in state `n`.
    pub fn occupation(&self, n: usize) -> f64 {
        let mut total = 0.0;
        for (i, &s) in self.states.iter().enumerate() {
            if s == n {
                let leave = self.times.get(i + 1).copied().unwrap_or(self.end_time);
                total += leave - self.times[i];
            }
        }
        total
    }

    /// Number of entries into state `k`, counting the starting state.
    pub fn visits(&self, k: usize) -> u64 {
        self.states.iter().filter(|&&s| s == k).count() as u64
    }
}

/// Exact event-driven simulation of one path.
pub fn gillespie_sample(
    rng: &mut PathRng,
    rates: &BDRates,
    initial: usize,
    limits: &ChainLimits,
) -> Result<JumpPath> {
    if initial == 0 {
        return Err(Error::InvalidParameter("initial state must be at least 1".into()));
    }
    if initial >= limits.j_max {
        return Err(Error::InvalidParameter(format!(
            "initial state {initial} must lie below j_max = {}",
            limits.j_max
        )));
    }
    let mut path = JumpPath {
        states: vec![initial],
        times: vec![0.0],
        exit: Exit::Censored,
        end_time: limits.t_max,
        seed: 0,
        path_index: 0,
    };
    let mut j = initial;
    let mut t = 0.0;
    let mut jumps = 0u64;
    loop {
        if j == 0 {
            path.exit = Exit::Absorbed;
            path.end_time = t;
            return Ok(path);
        }
        if j >= limits.j_max || jumps >= limits.jump_budget {
            path.exit = Exit::Exploded;
            path.end_time = t;
            return Ok(path);
        }
        let total = rates.total(j);
        if total == 0.0 {
            return Ok(path);
        }
        let hold: f64 = rng.sample::<f64, _>(Exp1) / total;
        t += hold;
        if t >= limits.t_max {
            return Ok(path);
        }
        let up = rng.random::<f64>() < rates.up_prob(j);
        jumps += 1;
        if up {
            j += 1;
        } else {
            j -= 1;
        }
        path.states.push(j);
        path.times.push(t);
        if j == 0 && limits.boundary == Boundary::Reflecting {
            j = 1;
            path.states.push(1);
            path.times.push(t);
        }
    }
}

/// Probability that the chain started at `k + 1` never returns to `k`,
/// `(λ_k^{2θ} Σ_{j≥k} λ_j^{−2θ})⁻¹`.
pub fn escape_prob_formula(rates: &BDRates, k: usize) -> Result<f64> {
    if k == 0 {
        return Err(Error::InvalidParameter("k must be at least 1".into()));
    }
    // λ_k^{2θ} λ_j^{−2θ} = b^{−(j−k)}
    let x = 1.0 / rates.base;
    let tail = sum_series(|i| x.powi(i as i32), 1e-15, 10_000_000)?;
    Ok(1.0 / tail)
}

/// `E[N_k] = (Π_{k,k+1} ψ^{(k)}_{k+1})⁻¹` for a chain that never leaves through 0.
pub fn expected_visits(rates: &BDRates, k: usize) -> Result<f64> {
    Ok(1.0 / (rates.up_prob(k) * escape_prob_formula(rates, k)?))
}

/// `E[T_n] = E[N_n]/(μ_n + ν_n)`, equal to `r_n/σ²`.
pub fn expected_occupation(rates: &BDRates, n: usize) -> Result<f64> {
    Ok(expected_visits(rates, n)? / rates.total(n))
}

#[derive(Debug, Clone, Serialize)]
pub struct GoodnessOfFit {
    pub statistic: f64,
    pub dof: Option<usize>,
    pub p_value: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct VisitStats {
    pub k: usize,
    pub mean: Estimate,
    pub variance: f64,
    pub target_mean: f64,
    /// Chi-square against `Geometric(Π_{k,k+1} ψ)` on `{1, 2, …}`.
    pub fit: Option<GoodnessOfFit>,
}

#[derive(Debug, Clone, Serialize)]
pub struct OccupationStats {
    pub n: usize,
    pub mean: Estimate,
    pub variance: f64,
    pub target_mean: f64,
    /// Kolmogorov–Smirnov against `Exponential(mean = r_n/σ²)`.
    pub fit: GoodnessOfFit,
}

/// Visit-count summary with a chi-square fit.
pub fn visit_count_stats(counts: &[u64], rates: &BDRates, k: usize) -> Result<VisitStats> {
    let mut m = Moments::default();
    counts.iter().for_each(|&c| m.push(c as f64));
    let target = expected_visits(rates, k)?;
    let success = 1.0 / target;
    Ok(VisitStats {
        k,
        mean: m.estimate(),
        variance: m.variance(),
        target_mean: target,
        fit: geometric_chi_square(counts, success),
    })
}

/// Occupation-time summary with a Kolmogorov–Smirnov fit.
pub fn occupation_time_stats(samples: &[f64], rates: &BDRates, n: usize) -> Result<OccupationStats> {
    let mut m = Moments::default();
    samples.iter().for_each(|&x| m.push(x));
    let target = expected_occupation(rates, n)?;
    Ok(OccupationStats {
        n,
        mean: m.estimate(),
        variance: m.variance(),
        target_mean: target,
        fit: exponential_ks(samples, target),
    })
}

fn geometric_chi_square(counts: &[u64], success: f64) -> Option<GoodnessOfFit> {
    let n = counts.len() as f64;
    if counts.is_empty() || !(success > 0.0 && success <= 1.0) {
        return None;
    }
    let max = *counts.iter().max()? as usize;
    let mut observed = vec![0u64; max + 2];
    for &c in counts {
        observed[c as usize] += 1;
    }
    let pmf = |v: usize| {
        if v == 0 {
            0.0
        } else {
            success * (1.0 - success).powi(v as i32 - 1)
        }
    };
    // zero visits has probability zero under the target; fold it into the first bin
    let mut bins: Vec<(f64, f64)> = Vec::new();
    let (mut obs, mut exp) = (observed[0] as f64, 0.0);
    let mut v = 1;
    let mut tail_p = 1.0;
    loop {
        obs += observed.get(v).copied().unwrap_or(0) as f64;
        exp += n * pmf(v);
        tail_p -= pmf(v);
        v += 1;
        if exp >= 5.0 {
            bins.push((obs, exp));
            obs = 0.0;
            exp = 0.0;
        }
        if n * tail_p < 5.0 || v > max + 1 {
            break;
        }
    }
    let rest: u64 = observed.iter().skip(v).sum();
    let (obs, exp) = (obs + rest as f64, exp + n * tail_p.max(0.0));
    match bins.last_mut() {
        Some(last) if exp < 5.0 => {
            last.0 += obs;
            last.1 += exp;
        }
        _ => bins.push((obs, exp)),
    }
    if bins.len() < 2 {
        return None;
    }
    let stat: f64 = bins.iter().map(|(o, e)| (o - e).powi(2) / e).sum();
    let dof = bins.len() - 1;
    let p_value = ChiSquared::new(dof as f64).map(|d| d.sf(stat)).unwrap_or(f64::NAN);
    Some(GoodnessOfFit {
        statistic: stat,
        dof: Some(dof),
        p_value,
    })
}

fn exponential_ks(samples: &[f64], mean: f64) -> GoodnessOfFit {
    let mut xs = samples.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in xs.iter().enumerate() {
        let f = 1.0 - (-x / mean).exp();
        d = d.max(((i + 1) as f64 / n - f).abs()).max((f - i as f64 / n).abs());
    }
    GoodnessOfFit {
        statistic: d,
        dof: None,
        p_value: kolmogorov_sf(d * n.sqrt()),
    }
}

/// Asymptotic `P(√n D > x)`.
fn kolmogorov_sf(x: f64) -> f64 {
    if x < 0.2 {
        return 1.0;
    }
    let s: f64 = (1..=100)
        .map(|k| {
            let k = k as f64;
            let sign = if k as u64 % 2 == 1 { 1.0 } else { -1.0 };
            sign * (-2.0 * k * k * x * x).exp()
        })
        .sum();
    (2.0 * s).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, Serialize)]
pub struct HoldingStats {
    pub j: usize,
    pub count: u64,
    pub mean: Estimate,
    pub second_moment: f64,
    pub target_mean: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct EscapeStats {
    pub k: usize,
    /// Jumps `k → k+1` on paths that were not censored.
    pub up_jumps: u64,
    /// Those after which the path never came back to `k`.
    pub escapes: u64,
    pub fraction: Estimate,
    pub target: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct StateHistogram {
    pub t: f64,
    /// `counts[j]` for `j = 0..j_max`; index 0 holds absorbed paths.
    pub counts: Vec<u64>,
    pub exploded: u64,
    pub censored: u64,
}

impl StateHistogram {
    /// Fraction of paths in state `j`, with its binomial standard error.
    pub fn fraction(&self, j: usize, n_paths: usize) -> Estimate {
        let n = n_paths as f64;
        let p = self.counts.get(j).copied().unwrap_or(0) as f64 / n;
        Estimate {
            mean: p,
            se: (p * (1.0 - p) / n).sqrt(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct BdEnsembleConfig {
    pub rates: BDRates,
    pub initial: usize,
    pub limits: ChainLimits,
    pub n_paths: usize,
    pub master_seed: u64,
    pub hist_times: Vec<f64>,
    /// Per-state statistics are reported for `1..=n_report`.
    pub n_report: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct BdSummary {
    pub n_paths: usize,
    pub boundary: Boundary,
    pub absorbed: u64,
    pub exploded: u64,
    pub censored: u64,
    pub explosion_time: Estimate,
    pub occupation: Vec<OccupationStats>,
    pub visits: Vec<VisitStats>,
    pub holding: Vec<HoldingStats>,
    pub escape: Vec<EscapeStats>,
    pub histograms: Vec<StateHistogram>,
    /// Mean time a reflecting chain still spends at or above `j_max`, `Σ_{n≥j_max} r_n/σ²`.
    pub residual_time_bound: f64,
    pub warnings: Vec<String>,
}

struct ChunkStats {
    occupation: Vec<Vec<f64>>,
    visits: Vec<Vec<u64>>,
    holding: Vec<(Moments, Moments)>,
    up_jumps: Vec<u64>,
    escapes: Vec<u64>,
    hist: Vec<StateHistogram>,
    exits: [u64; 3],
    explosion: Moments,
}

impl ChunkStats {
    fn new(cfg: &BdEnsembleConfig) -> Self {
        let r = cfg.n_report;
        Self {
            occupation: vec![Vec::new(); r],
            visits: vec![Vec::new(); r],
            holding: vec![(Moments::default(), Moments::default()); r],
            up_jumps: vec![0; r],
            escapes: vec![0; r],
            hist: cfg
                .hist_times
                .iter()
                .map(|&t| StateHistogram {
                    t,
                    counts: vec![0; cfg.limits.j_max],
                    exploded: 0,
                    censored: 0,
                })
                .collect(),
            exits: [0; 3],
            explosion: Moments::default(),
        }
    }

    fn add(&mut self, path: &JumpPath) {
        let r = self.occupation.len();
        match path.exit {
            Exit::Absorbed => self.exits[0] += 1,
            Exit::Exploded => {
                self.exits[1] += 1;
                self.explosion.push(path.end_time);
            }
            Exit::Censored => self.exits[2] += 1,
        }
        let mut occ = vec![0.0; r];
        let mut vis = vec![0u64; r];
        let mut last = vec![usize::MAX; r];
        for (i, &s) in path.states.iter().enumerate() {
            if (1..=r).contains(&s) {
                let leave = path.times.get(i + 1).copied().unwrap_or(path.end_time);
                let h = leave - path.times[i];
                occ[s - 1] += h;
                vis[s - 1] += 1;
                last[s - 1] = i;
                if i + 1 < path.states.len() {
                    let (a, b) = &mut self.holding[s - 1];
                    a.push(h);
                    b.push(h * h);
                }
                if path.exit != Exit::Censored && path.states.get(i + 1) == Some(&(s + 1)) {
                    self.up_jumps[s - 1] += 1;
                }
            }
        }
        if path.exit == Exit::Exploded {
            for k in 0..r {
                if last[k] != usize::MAX && path.states.get(last[k] + 1) == Some(&(k + 2)) {
                    self.escapes[k] += 1;
                }
            }
        }
        for k in 0..r {
            self.occupation[k].push(occ[k]);
            self.visits[k].push(vis[k]);
        }
        for h in &mut self.hist {
            match path.state_at(h.t) {
                Some(s) => h.counts[s] += 1,
                None if path.exit == Exit::Exploded && path.end_time <= h.t => h.exploded += 1,
                None => h.censored += 1,
            }
        }
    }

    fn merge(&mut self, o: ChunkStats) {
        for (a, b) in self.occupation.iter_mut().zip(o.occupation) {
            a.extend(b);
        }
        for (a, b) in self.visits.iter_mut().zip(o.visits) {
            a.extend(b);
        }
        for (a, b) in self.holding.iter_mut().zip(&o.holding) {
            a.0.merge(&b.0);
            a.1.merge(&b.1);
        }
        for (a, b) in self.up_jumps.iter_mut().zip(&o.up_jumps) {
            *a += b;
        }
        for (a, b) in self.escapes.iter_mut().zip(&o.escapes) {
            *a += b;
        }
        for (a, b) in self.hist.iter_mut().zip(&o.hist) {
            a.counts.iter_mut().zip(&b.counts).for_each(|(x, y)| *x += y);
            a.exploded += b.exploded;
            a.censored += b.censored;
        }
        for i in 0..3 {
            self.exits[i] += o.exits[i];
        }
        self.explosion.merge(&o.explosion);
    }
}

/// Stream for path `i` of a chain ensemble.
pub fn chain_rng(master_seed: u64, path_index: u64) -> PathRng {
    path_rng(master_seed, path_index)
}

/// Path `path_index` of the chain ensemble keyed by `master_seed`.
pub fn sample_path(
    rates: &BDRates,
    initial: usize,
    limits: &ChainLimits,
    master_seed: u64,
    path_index: u64,
) -> Result<JumpPath> {
    let mut path = gillespie_sample(&mut chain_rng(master_seed, path_index), rates, initial, limits)?;
    path.seed = master_seed;
    path.path_index = path_index;
    Ok(path)
}

/// Sample `n_paths` chains in parallel and reduce them to summary statistics.
pub fn run_chain_ensemble(cfg: &BdEnsembleConfig) -> Result<BdSummary> {
    if cfg.n_paths == 0 {
        return Err(Error::InvalidParameter("n_paths must be at least 1".into()));
    }
    if cfg.n_report + 1 >= cfg.limits.j_max {
        return Err(Error::InvalidParameter(format!(
            "n_report = {} must lie below j_max - 1 = {}",
            cfg.n_report,
            cfg.limits.j_max - 1
        )));
    }
    let chunks: Vec<_> = (0..cfg.n_paths)
        .step_by(CHUNK)
        .map(|s| s..(s + CHUNK).min(cfg.n_paths))
        .collect();
    let parts: Vec<Result<ChunkStats>> = chunks
        .into_par_iter()
        .map(|range| {
            let mut st = ChunkStats::new(cfg);
            for i in range {
                let path = sample_path(&cfg.rates, cfg.initial, &cfg.limits, cfg.master_seed, i as u64)?;
                st.add(&path);
            }
            Ok(st)
        })
        .collect();
    let mut all = ChunkStats::new(cfg);
    for p in parts {
        all.merge(p?);
    }
    summarize(cfg, all)
}

fn summarize(cfg: &BdEnsembleConfig, all: ChunkStats) -> Result<BdSummary> {
    let rates = &cfg.rates;
    let mut warnings = Vec::new();
    if cfg.n_paths < MIN_PATHS_FOR_FIT {
        warnings.push(format!(
            "only {} paths; goodness-of-fit statistics are unreliable below {MIN_PATHS_FOR_FIT}",
            cfg.n_paths
        ));
    }
    if cfg.initial != 1 || cfg.limits.boundary != Boundary::Reflecting {
        warnings.push("visit and occupation targets assume a reflecting chain started at 1".into());
    }
    let mut occupation = Vec::new();
    let mut visits = Vec::new();
    let mut holding = Vec::new();
    let mut escape = Vec::new();
    let target_escape = escape_prob_formula(rates, 1)?;
    for k in 1..=cfg.n_report {
        occupation.push(occupation_time_stats(&all.occupation[k - 1], rates, k)?);
        visits.push(visit_count_stats(&all.visits[k - 1], rates, k)?);
        let (h, h2) = &all.holding[k - 1];
        holding.push(HoldingStats {
            j: k,
            count: h.count(),
            mean: h.estimate(),
            second_moment: h2.mean(),
            target_mean: 1.0 / rates.total(k),
        });
        let (up, esc) = (all.up_jumps[k - 1], all.escapes[k - 1]);
        let f = if up > 0 { esc as f64 / up as f64 } else { 0.0 };
        escape.push(EscapeStats {
            k,
            up_jumps: up,
            escapes: esc,
            fraction: Estimate {
                mean: f,
                se: if up > 0 { (f * (1.0 - f) / up as f64).sqrt() } else { 0.0 },
            },
            target: target_escape,
        });
    }
    let x = 1.0 / rates.base();
    let residual_time_bound = x.powi(cfg.limits.j_max as i32) / (1.0 - x).powi(2) / rates.sigma2();
    Ok(BdSummary {
        n_paths: cfg.n_paths,
        boundary: cfg.limits.boundary,
        absorbed: all.exits[0],
        exploded: all.exits[1],
        censored: all.exits[2],
        explosion_time: all.explosion.estimate(),
        occupation,
        visits,
        holding,
        escape,
        histograms: all.hist,
        residual_time_bound,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(sigma: f64) -> ModelParams {
        ModelParams::new(2.0, 1.0, sigma, 8).unwrap()
    }

    #[test]
    fn rates_for_the_standard_case() {
        let r = make_rates(&params(1.0));
        assert_eq!(r.mu(1), 1.0);
        assert_eq!(r.nu(1), 4.0);
        assert!((r.up_prob(1) - 0.8).abs() < 1e-15);
        for j in 1..30 {
            assert!((r.up_prob(j) - 0.8).abs() < 1e-14);
            assert!((r.up_prob(j) + r.down_prob(j) - 1.0).abs() < 1e-15);
        }
        let r2 = make_rates(&params(2.0));
        assert_eq!(r2.mu(3), 4.0 * r.mu(3));
        assert_eq!(r2.up_prob(3), r.up_prob(3));
    }

    #[test]
    fn escape_probability_is_three_quarters() {
        let r = make_rates(&params(1.0));
        for k in 1..10 {
            assert!((escape_prob_formula(&r, k).unwrap() - 0.75).abs() < 1e-14);
            assert!((expected_visits(&r, k).unwrap() - 5.0 / 3.0).abs() < 1e-13);
        }
        assert!((expected_occupation(&r, 2).unwrap() - 1.0 / 12.0).abs() < 1e-14);
        let steep = make_rates(&ModelParams::new(1e4, 1.0, 1.0, 4).unwrap());
        assert!((escape_prob_formula(&steep, 3).unwrap() - 1.0).abs() < 1e-7);
    }

    #[test]
    fn death_only_chain_walks_to_zero() {
        let r = BDRates::death_only(&params(1.0));
        let limits = ChainLimits::default();
        for i in 0..50 {
            let path = gillespie_sample(&mut chain_rng(5, i), &r, 4, &limits).unwrap();
            assert_eq!(path.exit, Exit::Absorbed);
            assert_eq!(path.states, vec![4, 3, 2, 1, 0]);
            for k in 1..=4 {
                assert_eq!(path.visits(k), 1);
            }
            assert_eq!(path.visits(5), 0);
        }
    }

    #[test]
    fn path_invariants() {
        let r = make_rates(&params(1.0));
        for boundary in [Boundary::Absorbing, Boundary::Reflecting] {
            let limits = ChainLimits {
                boundary,
                ..Default::default()
            };
            for i in 0..200 {
                let path = gillespie_sample(&mut chain_rng(8, i), &r, 1, &limits).unwrap();
                for w in path.states.windows(2) {
                    assert_eq!(w[0].abs_diff(w[1]), 1);
                }
                for w in path.times.windows(2) {
                    assert!(w[1] >= w[0]);
                }
                if boundary == Boundary::Reflecting {
                    assert_eq!(path.exit, Exit::Exploded);
                    assert_eq!(path.states.last(), Some(&60));
                }
            }
        }
    }

    #[test]
    fn censoring_stops_at_t_max() {
        let r = make_rates(&params(1.0));
        let limits = ChainLimits {
            t_max: 1e-3,
            ..Default::default()
        };
        let path = gillespie_sample(&mut chain_rng(1, 0), &r, 1, &limits).unwrap();
        assert_eq!(path.exit, Exit::Censored);
        assert_eq!(path.end_time, 1e-3);
        assert!(path.times.iter().all(|&t| t < 1e-3));
    }

    #[test]
    fn small_ensembles_warn_and_are_reproducible() {
        let cfg = BdEnsembleConfig {
            rates: make_rates(&params(1.0)),
            initial: 1,
            limits: ChainLimits {
                boundary: Boundary::Reflecting,
                ..Default::default()
            },
            n_paths: 300,
            master_seed: 4,
            hist_times: vec![0.05],
            n_report: 4,
        };
        let a = run_chain_ensemble(&cfg).unwrap();
        let b = run_chain_ensemble(&cfg).unwrap();
        assert_eq!(
            serde_json::to_string(&a).unwrap(),
            serde_json::to_string(&b).unwrap()
        );
        assert!(a.warnings.iter().any(|w| w.contains("unreliable")));
        assert_eq!(a.exploded, 300);
        let h = &a.histograms[0];
        assert_eq!(h.counts.iter().sum::<u64>() + h.exploded + h.censored, 300);
    }

    #[test]
    fn chi_square_accepts_exact_geometric_counts() {
        let p: f64 = 0.6;
        let mut counts = Vec::new();
        for v in 1..12u64 {
            let c = (10_000.0 * p * (1.0 - p).powi(v as i32 - 1)).round() as usize;
            counts.extend(std::iter::repeat_n(v, c));
        }
        let fit = geometric_chi_square(&counts, p).unwrap();
        assert!(fit.p_value > 0.99, "{fit:?}");
    }

    #[test]
    fn kolmogorov_tail_values() {
        assert!((kolmogorov_sf(1.36) - 0.049).abs() < 2e-3);
        assert_eq!(kolmogorov_sf(0.0), 1.0);
    }
}
