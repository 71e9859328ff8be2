//! Forward equations for the expected shell-energy profile and the spectral
//! series attached to the birth–death chain.

use serde::Serialize;

use crate::birth_death::{BDRates, Boundary};
use crate::error::{Error, Result};
use crate::ensemble::EnsembleResult;
use crate::shell::{ModelParams, ShellState};
use crate::stats::{linear_fit, LinearFit};

/// Sum `Σ_{i≥0} term(i)` until a term falls below `tol` relative to the partial sum.
pub fn sum_series(term: impl Fn(usize) -> f64, tol: f64, cap: usize) -> Result<f64> {
    let mut sum = 0.0;
    for i in 0..cap {
        let t = term(i);
        if !t.is_finite() {
            break;
        }
        sum += t;
        if t.abs() <= tol * sum.abs() {
            return Ok(sum);
        }
    }
    Err(Error::NotSummable { tol, cap })
}

/// Normalized expected shell energies and the mass that has left through either end.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnergyProfile {
    pub t: f64,
    pub e: Vec<f64>,
    pub leaked_bottom: f64,
    pub leaked_top: f64,
}

impl EnergyProfile {
    pub fn new(e: Vec<f64>) -> Self {
        Self {
            t: 0.0,
            e,
            leaked_bottom: 0.0,
            leaked_top: 0.0,
        }
    }

    /// Unit mass on shell `j` (1-based).
    pub fn point_mass(n: usize, j: usize) -> Self {
        let mut e = vec![0.0; n];
        e[j - 1] = 1.0;
        Self::new(e)
    }

    /// `e_j(0) = (p_j² + m_j²)/‖x‖²`; the zero state gives the zero profile.
    pub fn from_state(s: &ShellState) -> Self {
        let e: Vec<f64> = s.first.iter().zip(&s.second).map(|(p, m)| p * p + m * m).collect();
        let total: f64 = e.iter().sum();
        if total == 0.0 {
            return Self::new(e);
        }
        Self::new(e.into_iter().map(|x| x / total).collect())
    }

    pub fn mass(&self) -> f64 {
        self.e.iter().sum()
    }

    /// Surviving plus leaked mass.
    pub fn ledger(&self) -> f64 {
        self.mass() + self.leaked_bottom + self.leaked_top
    }
}

/// Rates tabulated for `N` shells, with `rate[j]` stored at index `j - 1`.
#[derive(Debug, Clone)]
pub struct ForwardSystem {
    mu: Vec<f64>,
    nu: Vec<f64>,
    boundary: Boundary,
}

impl ForwardSystem {
    pub fn new(rates: &BDRates, n: usize, boundary: Boundary) -> Self {
        Self {
            mu: (1..=n).map(|j| rates.mu(j)).collect(),
            nu: (1..=n).map(|j| rates.nu(j)).collect(),
            boundary,
        }
    }

    pub fn n(&self) -> usize {
        self.mu.len()
    }

    /// `ν_N + μ_N`.
    pub fn top_rate(&self) -> f64 {
        let n = self.n();
        self.nu[n - 1] + self.mu[n - 1]
    }

    fn bottom_out(&self) -> f64 {
        match self.boundary {
            Boundary::Absorbing => self.mu[0],
            Boundary::Reflecting => 0.0,
        }
    }

    /// Writes `de/dt` into `de` and returns the bottom and top leak rates.
    pub fn rhs_into(&self, e: &[f64], de: &mut [f64]) -> (f64, f64) {
        let n = self.n();
        for j in 0..n {
            let mut d = -(self.nu[j] + self.mu[j]) * e[j];
            if j > 0 {
                d += self.nu[j - 1] * e[j - 1];
            }
            if j + 1 < n {
                d += self.mu[j + 1] * e[j + 1];
            }
            de[j] = d;
        }
        let bottom = self.bottom_out() * e[0];
        de[0] += (self.mu[0] - self.bottom_out()) * e[0];
        (bottom, self.nu[n - 1] * e[n - 1])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ForwardRhs {
    pub de: Vec<f64>,
    pub bottom_leak_rate: f64,
    pub top_leak_rate: f64,
}

/// Right-hand side of the forward equations with absorbing state 0 and `e_{N+1} ≡ 0`.
pub fn forward_rhs(e: &EnergyProfile, rates: &BDRates) -> ForwardRhs {
    let sys = ForwardSystem::new(rates, e.e.len(), Boundary::Absorbing);
    let mut de = vec![0.0; e.e.len()];
    let (b, t) = sys.rhs_into(&e.e, &mut de);
    ForwardRhs {
        de,
        bottom_leak_rate: b,
        top_leak_rate: t,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ForwardMethod {
    /// Classical RK4; requires `dt ≤ 0.1/(ν_N + μ_N)`.
    Rk4,
    /// Implicit Euler with a tridiagonal solve; unconditionally stable and positivity preserving.
    BackwardEuler,
}

#[derive(Debug, Clone, Serialize)]
pub struct ForwardOptions {
    pub method: ForwardMethod,
    pub boundary: Boundary,
    pub dt: f64,
    pub t_end: f64,
    pub record_stride: usize,
}

/// Explicit step limit for RK4.
pub fn stiffness_limit(sys: &ForwardSystem) -> f64 {
    0.1 / sys.top_rate()
}

/// RK4 with absorbing state 0, recording every step.
pub fn integrate_forward(e0: &EnergyProfile, rates: &BDRates, dt: f64, t_end: f64) -> Result<Vec<EnergyProfile>> {
    solve_forward(
        e0,
        rates,
        &ForwardOptions {
            method: ForwardMethod::Rk4,
            boundary: Boundary::Absorbing,
            dt,
            t_end,
            record_stride: 1,
        },
    )
}

pub fn solve_forward(e0: &EnergyProfile, rates: &BDRates, opts: &ForwardOptions) -> Result<Vec<EnergyProfile>> {
    let n = e0.e.len();
    if n == 0 {
        return Err(Error::Shape("empty profile".into()));
    }
    if !(opts.dt > 0.0 && opts.dt.is_finite()) || !(opts.t_end >= 0.0 && opts.t_end.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "need dt > 0 and t_end ≥ 0 (got dt = {}, t_end = {})",
            opts.dt, opts.t_end
        )));
    }
    if opts.record_stride == 0 {
        return Err(Error::InvalidParameter("record_stride must be positive".into()));
    }
    let sys = ForwardSystem::new(rates, n, opts.boundary);
    if opts.method == ForwardMethod::Rk4 {
        let limit = stiffness_limit(&sys);
        if opts.dt > limit {
            return Err(Error::StiffnessGuard { dt: opts.dt, limit });
        }
    }
    let steps = crate::sde::step_count(opts.dt, opts.t_end)?;
    let mut cur = e0.clone();
    let mut out = vec![cur.clone()];
    let mut stepper: Box<dyn FnMut(&mut EnergyProfile)> = match opts.method {
        ForwardMethod::Rk4 => Box::new(rk4_stepper(&sys, opts.dt)),
        ForwardMethod::BackwardEuler => Box::new(implicit_stepper(&sys, opts.dt)),
    };
    for k in 1..=steps {
        stepper(&mut cur);
        cur.t = k as f64 * opts.dt;
        if k % opts.record_stride == 0 || k == steps {
            out.push(cur.clone());
        }
    }
    Ok(out)
}

fn rk4_stepper(sys: &ForwardSystem, dt: f64) -> impl FnMut(&mut EnergyProfile) + '_ {
    let n = sys.n();
    let mut k: [Vec<f64>; 4] = std::array::from_fn(|_| vec![0.0; n]);
    let mut tmp = vec![0.0; n];
    move |s: &mut EnergyProfile| {
        let mut leaks = [(0.0, 0.0); 4];
        leaks[0] = sys.rhs_into(&s.e, &mut k[0]);
        for (stage, h) in [(1, 0.5), (2, 0.5), (3, 1.0)] {
            for i in 0..n {
                tmp[i] = s.e[i] + h * dt * k[stage - 1][i];
            }
            leaks[stage] = sys.rhs_into(&tmp, &mut k[stage]);
        }
        for i in 0..n {
            s.e[i] += dt / 6.0 * (k[0][i] + 2.0 * k[1][i] + 2.0 * k[2][i] + k[3][i]);
        }
        s.leaked_bottom += dt / 6.0 * (leaks[0].0 + 2.0 * leaks[1].0 + 2.0 * leaks[2].0 + leaks[3].0);
        s.leaked_top += dt / 6.0 * (leaks[0].1 + 2.0 * leaks[1].1 + 2.0 * leaks[2].1 + leaks[3].1);
    }
}

fn implicit_stepper(sys: &ForwardSystem, dt: f64) -> impl FnMut(&mut EnergyProfile) + '_ {
    let n = sys.n();
    // (I − dt·A) e' = e, rows: −dt ν_{j−1} e'_{j−1} + (1 + dt(ν_j + μ_j)) e'_j − dt μ_{j+1} e'_{j+1}
    let mut diag: Vec<f64> = (0..n).map(|j| 1.0 + dt * (sys.nu[j] + sys.mu[j])).collect();
    diag[0] -= dt * (sys.mu[0] - sys.bottom_out());
    let lower: Vec<f64> = (0..n).map(|j| if j > 0 { -dt * sys.nu[j - 1] } else { 0.0 }).collect();
    let upper: Vec<f64> = (0..n).map(|j| if j + 1 < n { -dt * sys.mu[j + 1] } else { 0.0 }).collect();
    let mut cp = vec![0.0; n];
    let mut denom = vec![0.0; n];
    for j in 0..n {
        let d = diag[j] - if j > 0 { lower[j] * cp[j - 1] } else { 0.0 };
        denom[j] = d;
        cp[j] = upper[j] / d;
    }
    let mut dp = vec![0.0; n];
    move |s: &mut EnergyProfile| {
        for j in 0..n {
            let prev = if j > 0 { lower[j] * dp[j - 1] } else { 0.0 };
            dp[j] = (s.e[j] - prev) / denom[j];
        }
        s.e[n - 1] = dp[n - 1];
        for j in (0..n - 1).rev() {
            s.e[j] = dp[j] - cp[j] * s.e[j + 1];
        }
        s.leaked_bottom += dt * sys.bottom_out() * s.e[0];
        s.leaked_top += dt * sys.nu[n - 1] * s.e[n - 1];
    }
}

/// Largest `|ledger(t) − ledger(0)|/t` over a solution.
pub fn ledger_defect(profiles: &[EnergyProfile]) -> f64 {
    let m0 = profiles[0].ledger();
    profiles
        .iter()
        .filter(|p| p.t > 0.0)
        .map(|p| (p.ledger() - m0).abs() / p.t)
        .fold(0.0, f64::max)
}

/// A series that either converges or is shown to diverge.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SeriesValue {
    Finite { value: f64 },
    /// Every checked term is at least `term_lower_bound > 0`.
    Divergent { term_lower_bound: f64, terms_checked: usize },
}

impl SeriesValue {
    pub fn value(&self) -> Option<f64> {
        match self {
            SeriesValue::Finite { value } => Some(*value),
            SeriesValue::Divergent { .. } => None,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SpectralQuantities {
    /// `λ^{−2θ}`.
    pub x: f64,
    /// `r_n` for `n = 1..=n_listed`.
    pub r: Vec<f64>,
    pub r_inf: f64,
    /// Mean occupation time `r_n/σ²` of state `n`, `n = 1..=n_listed`.
    pub occupation_mean: Vec<f64>,
    /// Mean explosion time `r_∞/σ²`.
    pub explosion_mean: f64,
    pub big_r: SeriesValue,
    /// `R` from the nested-product form, summed term by term.
    pub big_r_nested: SeriesValue,
    pub big_s: SeriesValue,
    pub a: f64,
    pub alpha: f64,
    /// `α` from the entropy closed form.
    pub alpha_closed: f64,
    pub tol: f64,
}

const SERIES_CAP: usize = 1_000_000;
const LISTED: usize = 10;

/// Closed forms and series for the geometric spectrum of `p`.
///
/// Occupation and explosion means carry a factor `σ⁻²` because every rate is
/// proportional to `σ²`; `α` is then independent of `σ`.
pub fn spectral_quantities(p: &ModelParams, tol: f64) -> Result<SpectralQuantities> {
    if !(tol > 0.0) {
        return Err(Error::InvalidParameter(format!("tol must be positive (got {tol})")));
    }
    let rates = BDRates::new(p);
    let s2 = rates.sigma2();
    let x = 1.0 / rates.base();
    let r_n = |n: usize| x.powi(n as i32) / (1.0 - x);
    let r_inf = x / (1.0 - x).powi(2);
    let cap = SERIES_CAP;

    // μ_k = ν_{k−1} collapses the nested products of R to Σ k/ν_k.
    let big_r = sum_series(|i| (i + 1) as f64 / rates.nu(i + 1), tol, cap)?;
    let mut r_prev = 0.0;
    let big_r_nested = {
        let mut sum = 0.0;
        let mut done = false;
        for k in 1..=cap {
            r_prev = (1.0 + rates.mu(k) * r_prev) / rates.nu(k);
            sum += r_prev;
            if !r_prev.is_finite() {
                break;
            }
            if r_prev <= tol * sum {
                done = true;
                break;
            }
        }
        if !done {
            return Err(Error::NotSummable { tol, cap });
        }
        sum
    };

    // S_k = (1 + ν_k S_{k−1})/μ_{k+1}; every term is at least 1/σ²
    let lower = 1.0 / s2;
    let mut checked = 0;
    let mut sk = 1.0 / rates.mu(1);
    let mut diverges = true;
    for k in 1..=1000 {
        if !rates.mu(k + 1).is_finite() {
            break;
        }
        checked = k;
        sk = (1.0 + rates.nu(k) * sk) / rates.mu(k + 1);
        if !(sk >= lower * (1.0 - 1e-12)) {
            diverges = false;
            break;
        }
    }
    let big_s = if diverges {
        SeriesValue::Divergent {
            term_lower_bound: lower,
            terms_checked: checked,
        }
    } else {
        SeriesValue::Finite {
            value: sum_series(
                |i| {
                    let mut s = 1.0 / rates.mu(1);
                    for k in 1..=i + 1 {
                        s = (1.0 + rates.nu(k) * s) / rates.mu(k + 1);
                    }
                    s
                },
                tol,
                cap,
            )?,
        }
    };

    let occ = |n: usize| r_n(n) / s2;
    let a = sum_series(
        |i| {
            let o = occ(i + 1);
            if o == 0.0 {
                0.0
            } else {
                -o * o.ln()
            }
        },
        tol,
        cap,
    )?;
    let explosion_mean = r_inf / s2;
    let alpha = a / explosion_mean + explosion_mean.ln();
    let alpha_closed = -(1.0 - x).ln() - x * x.ln() / (1.0 - x);
    Ok(SpectralQuantities {
        x,
        r: (1..=LISTED).map(r_n).collect(),
        r_inf,
        occupation_mean: (1..=LISTED).map(occ).collect(),
        explosion_mean,
        big_r: SeriesValue::Finite { value: big_r },
        big_r_nested: SeriesValue::Finite { value: big_r_nested },
        big_s,
        a,
        alpha,
        alpha_closed,
        tol,
    })
}

/// `exp(−t σ²/r_1)`: lower bound on survival to explosion.
pub fn survival_lower_bound(q: &SpectralQuantities, t: f64) -> f64 {
    (-t / q.occupation_mean[0]).exp()
}

/// `exp(−t σ²/r_∞ + α)`: upper bound on survival to explosion.
pub fn survival_upper_bound(q: &SpectralQuantities, t: f64) -> f64 {
    (-t / q.explosion_mean + q.alpha).exp()
}

/// Decay rate `−(σ² − √(C r_∞))²/(σ² r_∞)` for a nonlinear ensemble whose energy stays below `C`.
pub fn nonlinear_decay_bound(p: &ModelParams, q: &SpectralQuantities, c: f64) -> Option<f64> {
    let s2 = p.sigma() * p.sigma();
    let root = (c * q.r_inf).sqrt();
    (root < s2).then(|| -(s2 - root).powi(2) / (s2 * q.r_inf))
}

#[derive(Debug, Clone, Serialize)]
pub struct DecayReport {
    /// Zero initial profile: nothing to decay.
    pub trivial: bool,
    pub forward_fit: Option<LinearFit>,
    /// `−σ²/r_∞`.
    pub forward_bound: f64,
    pub ensemble_fit: Option<LinearFit>,
    pub energy_bound_c: Option<f64>,
    pub ensemble_bound: Option<f64>,
    pub window: (f64, f64),
}

/// Fits tail log-slopes of the forward mass and, when given, of the ensemble mean energy.
pub fn decay_report(
    profiles: &[EnergyProfile],
    p: &ModelParams,
    q: &SpectralQuantities,
    ensemble: Option<&EnsembleResult>,
    window: (f64, f64),
) -> DecayReport {
    let in_window = |t: f64| t >= window.0 - 1e-12 && t <= window.1 + 1e-12;
    let trivial = profiles.first().is_none_or(|p| p.mass() == 0.0);
    let (xs, ys): (Vec<f64>, Vec<f64>) = profiles
        .iter()
        .filter(|pr| in_window(pr.t) && pr.mass() > 0.0)
        .map(|pr| (pr.t, pr.mass().ln()))
        .unzip();
    let forward_fit = if trivial { None } else { linear_fit(&xs, &ys) };
    let (ensemble_fit, c, bound) = match ensemble {
        Some(r) => {
            let (xs, ys): (Vec<f64>, Vec<f64>) = r
                .summaries
                .iter()
                .filter(|s| in_window(s.t) && s.energy.mean > 0.0)
                .map(|s| (s.t, s.energy.mean.ln()))
                .unzip();
            let c = r.max_energy;
            (linear_fit(&xs, &ys), Some(c), nonlinear_decay_bound(p, q, c))
        }
        None => (None, None, None),
    };
    DecayReport {
        trivial,
        forward_fit,
        forward_bound: -1.0 / q.explosion_mean,
        ensemble_fit,
        energy_bound_c: c,
        ensemble_bound: bound,
        window,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rates() -> BDRates {
        BDRates::new(&ModelParams::new(2.0, 1.0, 1.0, 8).unwrap())
    }

    #[test]
    fn rhs_examples() {
        let r = rates();
        let z = forward_rhs(&EnergyProfile::new(vec![0.0; 5]), &r);
        assert!(z.de.iter().all(|&d| d == 0.0));
        let f = forward_rhs(&EnergyProfile::point_mass(5, 1), &r);
        assert_eq!(f.de[0], -5.0);
        assert_eq!(f.de[1], 4.0);
        assert_eq!(f.bottom_leak_rate, 1.0);
    }

    #[test]
    fn rhs_total_telescopes() {
        let r = rates();
        let e = EnergyProfile::new(vec![0.3, 0.1, 0.25, 0.05, 0.2, 0.1]);
        let f = forward_rhs(&e, &r);
        let total: f64 = f.de.iter().sum();
        let expect = -f.bottom_leak_rate - f.top_leak_rate;
        assert!((total - expect).abs() < 1e-12 * r.nu(6));
        assert_eq!(f.top_leak_rate, r.nu(6) * 0.1);
    }

    #[test]
    fn rk4_guard_is_enforced() {
        let r = rates();
        let e0 = EnergyProfile::point_mass(10, 1);
        let limit = 0.1 / (r.nu(10) + r.mu(10));
        assert!(matches!(
            integrate_forward(&e0, &r, 2.0 * limit, 0.01),
            Err(Error::StiffnessGuard { .. })
        ));
    }

    #[test]
    fn zero_profile_stays_zero() {
        let r = rates();
        let out = integrate_forward(&EnergyProfile::new(vec![0.0; 6]), &r, 1e-5, 1e-3).unwrap();
        assert!(out.iter().all(|p| p.mass() == 0.0 && p.ledger() == 0.0));
    }

    #[test]
    fn implicit_matches_rk4_on_a_small_system() {
        let r = rates();
        let e0 = EnergyProfile::point_mass(6, 1);
        let t_end = 0.2;
        let rk = solve_forward(
            &e0,
            &r,
            &ForwardOptions {
                method: ForwardMethod::Rk4,
                boundary: Boundary::Absorbing,
                dt: 1e-5,
                t_end,
                record_stride: 100_000,
            },
        )
        .unwrap();
        let be = |dt: f64| {
            solve_forward(
                &e0,
                &r,
                &ForwardOptions {
                    method: ForwardMethod::BackwardEuler,
                    boundary: Boundary::Absorbing,
                    dt,
                    t_end,
                    record_stride: 1_000_000,
                },
            )
            .unwrap()
            .pop()
            .unwrap()
        };
        let exact = rk.last().unwrap();
        let err = |p: &EnergyProfile| {
            p.e.iter()
                .zip(&exact.e)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max)
        };
        let (e1, e2) = (err(&be(1e-4)), err(&be(5e-5)));
        assert!(e1 < 1e-3, "{e1}");
        assert!((e1 / e2 - 2.0).abs() < 0.1, "first order: {}", e1 / e2);
        assert!((be(1e-5).leaked_bottom - exact.leaked_bottom).abs() < 1e-5);
    }

    #[test]
    fn implicit_ledger_and_positivity_for_forty_shells() {
        let r = rates();
        let out = solve_forward(
            &EnergyProfile::point_mass(40, 1),
            &r,
            &ForwardOptions {
                method: ForwardMethod::BackwardEuler,
                boundary: Boundary::Absorbing,
                dt: 1e-3,
                t_end: 3.0,
                record_stride: 10,
            },
        )
        .unwrap();
        assert!(ledger_defect(&out) < 1e-12);
        assert!(out.iter().all(|p| p.e.iter().all(|&x| x >= 0.0)));
        for w in out.windows(2) {
            assert!(w[1].mass() < w[0].mass());
        }
    }

    #[test]
    fn reflecting_boundary_only_leaks_at_the_top() {
        let r = rates();
        let e0 = EnergyProfile::point_mass(6, 1);
        let f = {
            let sys = ForwardSystem::new(&r, 6, Boundary::Reflecting);
            let mut de = vec![0.0; 6];
            let leaks = sys.rhs_into(&e0.e, &mut de);
            (de, leaks)
        };
        assert_eq!(f.0[0], -4.0);
        assert_eq!(f.1 .0, 0.0);
    }

    #[test]
    fn series_for_the_standard_case() {
        let p = ModelParams::new(2.0, 1.0, 1.0, 8).unwrap();
        let q = spectral_quantities(&p, 1e-15).unwrap();
        assert!((q.r[0] - 1.0 / 3.0).abs() < 1e-15);
        assert!((q.r_inf - 4.0 / 9.0).abs() < 1e-15);
        assert!((q.big_r.value().unwrap() - 4.0 / 9.0).abs() < 1e-14);
        assert!((q.big_r_nested.value().unwrap() - 4.0 / 9.0).abs() < 1e-14);
        assert!(matches!(q.big_s, SeriesValue::Divergent { term_lower_bound, .. } if term_lower_bound == 1.0));
        let oracle = -(3.0_f64).ln() + 4.0 / 3.0 * (4.0_f64).ln();
        assert!((q.alpha - oracle).abs() < 1e-13);
        assert!((q.alpha_closed - oracle).abs() < 1e-14);
        assert!((q.alpha - 0.7498).abs() < 1e-4);
    }

    #[test]
    fn sigma_rescales_times_but_not_alpha() {
        let p1 = ModelParams::new(2.0, 1.0, 1.0, 8).unwrap();
        let p2 = p1.with_sigma(2.0).unwrap();
        let (a, b) = (spectral_quantities(&p1, 1e-14).unwrap(), spectral_quantities(&p2, 1e-14).unwrap());
        assert_eq!(a.r, b.r);
        assert!((b.big_r.value().unwrap() * 4.0 - a.big_r.value().unwrap()).abs() < 1e-14);
        assert!((b.explosion_mean * 4.0 - a.explosion_mean).abs() < 1e-14);
        assert!((a.alpha - b.alpha).abs() < 1e-12);
    }

    #[test]
    fn near_critical_spectrum_is_not_summable() {
        let p = ModelParams::new(1.0 + 1e-9, 1.0, 1.0, 4).unwrap();
        assert!(matches!(spectral_quantities(&p, 1e-12), Err(Error::NotSummable { .. })));
    }

    #[test]
    fn decay_bound_arithmetic() {
        let p = ModelParams::new(2.0, 1.0, 1.0, 6).unwrap();
        let q = spectral_quantities(&p, 1e-14).unwrap();
        let b = nonlinear_decay_bound(&p, &q, 0.05).unwrap();
        let expect = -(1.0 - (0.05_f64 * 4.0 / 9.0).sqrt()).powi(2) / (4.0 / 9.0);
        assert!((b - expect).abs() < 1e-14);
        assert!((b + 1.6).abs() < 0.05);
        assert!(nonlinear_decay_bound(&p, &q, 3.0).is_none());
    }

    #[test]
    fn zero_profile_is_trivial_decay() {
        let p = ModelParams::new(2.0, 1.0, 1.0, 6).unwrap();
        let q = spectral_quantities(&p, 1e-14).unwrap();
        let r = decay_report(&[EnergyProfile::new(vec![0.0; 6])], &p, &q, None, (0.0, 1.0));
        assert!(r.trivial);
        assert!(r.forward_fit.is_none());
    }
}
