//! TOML run configuration.
//!
//! Every section is optional and every key has a default, so the resolved
//! configuration written next to each artifact fully determines the run.

use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::birth_death::{BDRates, Boundary, ChainLimits};
use crate::error::{Error, Result};
use crate::forward::ForwardMethod;
use crate::rng::path_rng;
use crate::sde::{step_count, Scheme};
use crate::shell::{energy, Coords, ModelParams, ShellState};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub lambda: f64,
    pub theta: f64,
    pub sigma: f64,
    pub n_shells: usize,
}

impl Default for ModelSection {
    fn default() -> Self {
        Self {
            lambda: 2.0,
            theta: 1.0,
            sigma: 1.0,
            n_shells: 8,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunScheme {
    Deterministic,
    Ito,
    Stratonovich,
    Linear,
}

impl RunScheme {
    /// The stochastic scheme, or `None` for the deterministic system.
    pub fn stochastic(self) -> Option<Scheme> {
        match self {
            RunScheme::Deterministic => None,
            RunScheme::Ito => Some(Scheme::ItoEM),
            RunScheme::Stratonovich => Some(Scheme::StratHeun),
            RunScheme::Linear => Some(Scheme::LinearEM),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    pub scheme: RunScheme,
    pub dt: f64,
    pub t_end: f64,
    pub n_paths: usize,
    pub master_seed: u64,
    pub record_stride: usize,
    pub track_weights: bool,
}

impl Default for RunSection {
    fn default() -> Self {
        Self {
            scheme: RunScheme::Ito,
            dt: 1e-5,
            t_end: 0.2,
            n_paths: 1000,
            master_seed: 0,
            record_stride: 1000,
            track_weights: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    /// `P_1 = 1`, everything else zero.
    PointMass1,
    /// `a_j = ρ^{j−1}`, `b_j = 0`.
    GeometricDecay,
    /// `a_j, b_j` uniform on `(−1, 1)` times `ρ^{j−1}`, drawn from `seed`.
    RandomDecay,
    Zero,
    /// Values taken from `first` and `second` in `coords`.
    Explicit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InitialSection {
    pub preset: Preset,
    pub rho: f64,
    /// Rescale the state to this energy when set.
    pub energy: Option<f64>,
    pub seed: u64,
    pub coords: Coords,
    pub first: Vec<f64>,
    pub second: Vec<f64>,
}

impl Default for InitialSection {
    fn default() -> Self {
        Self {
            preset: Preset::PointMass1,
            rho: 0.5,
            energy: None,
            seed: 0,
            coords: Coords::Elsasser,
            first: Vec::new(),
            second: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BdSection {
    pub j_max: usize,
    pub jump_budget: u64,
    pub boundary: Boundary,
    pub initial_state: usize,
    /// Censoring time; unlimited when absent.
    pub t_max: Option<f64>,
    pub hist_times: Vec<f64>,
    pub n_report: usize,
}

impl Default for BdSection {
    fn default() -> Self {
        Self {
            j_max: 60,
            jump_budget: 1_000_000,
            boundary: Boundary::Absorbing,
            initial_state: 1,
            t_max: None,
            hist_times: vec![0.1],
            n_report: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForwardSection {
    pub method: ForwardMethod,
    pub boundary: Boundary,
    pub n_shells: usize,
    pub dt: f64,
    pub t_end: f64,
    pub record_stride: usize,
}

impl Default for ForwardSection {
    fn default() -> Self {
        Self {
            method: ForwardMethod::BackwardEuler,
            boundary: Boundary::Absorbing,
            n_shells: 40,
            dt: 1e-4,
            t_end: 3.0,
            record_stride: 100,
        }
    }
}

/// Tolerances for reports and the acceptance suite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReportSection {
    /// Standard errors allowed between Monte Carlo estimates and their targets.
    pub z_tol: f64,
    pub conservation_tol: f64,
    pub richardson_min: f64,
    pub strat_drift_tol: f64,
    pub strat_ratio_min: f64,
    pub equivalence_tol: f64,
    pub ledger_tol: f64,
    pub series_tol: f64,
    /// Window for tail log-slope fits.
    pub fit_window: [f64; 2],
    /// Multiplies every path count in `verify`.
    pub path_scale: f64,
    /// Restrict `verify` to these criteria; all when empty.
    pub only: Vec<u8>,
}

impl Default for ReportSection {
    fn default() -> Self {
        Self {
            z_tol: 4.0,
            conservation_tol: 1e-8,
            richardson_min: 10.0,
            strat_drift_tol: 1e-3,
            strat_ratio_min: 1.8,
            equivalence_tol: 1e-12,
            ledger_tol: 1e-8,
            series_tol: 1e-14,
            fit_window: [0.25, 0.5],
            path_scale: 1.0,
            only: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelSection,
    pub run: RunSection,
    pub initial: InitialSection,
    pub bd: BdSection,
    pub forward: ForwardSection,
    pub report: ReportSection,
}

fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let column = before.rsplit('\n').next().map_or(0, |l| l.chars().count()) + 1;
    (line, column)
}

/// Parse and validate a configuration document.
pub fn parse_config_str(text: &str) -> Result<RunConfig> {
    let cfg = read_config_str(text)?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn parse_config(path: &Path) -> Result<RunConfig> {
    parse_config_str(&std::fs::read_to_string(path)?)
}

/// Parse without validating, for callers that apply overrides first.
pub fn read_config_str(text: &str) -> Result<RunConfig> {
    toml::from_str(text).map_err(|e| {
        let (line, column) = e.span().map_or((0, 0), |s| line_col(text, s.start));
        Error::ConfigParse {
            line,
            column,
            message: e.message().to_string(),
        }
    })
}

pub fn read_config(path: &Path) -> Result<RunConfig> {
    read_config_str(&std::fs::read_to_string(path)?)
}

fn positive(v: f64) -> bool {
    v > 0.0 && v.is_finite()
}

impl RunConfig {
    /// Collects every violation instead of stopping at the first.
    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        let m = &self.model;
        if let Err(Error::InvalidParameter(msg)) = ModelParams::noiseless(m.lambda, m.theta, m.n_shells) {
            errs.extend(msg.split("; ").map(String::from));
        }
        if !m.sigma.is_finite() {
            errs.push(format!("sigma must be finite (got {})", m.sigma));
        }
        let r = &self.run;
        if m.sigma == 0.0 && r.scheme != RunScheme::Deterministic {
            errs.push("sigma = 0 is only allowed with scheme = \"deterministic\"".into());
        }
        if let Err(Error::InvalidParameter(msg)) = step_count(r.dt, r.t_end) {
            errs.push(msg);
        }
        if r.n_paths == 0 {
            errs.push("n_paths must be at least 1".into());
        }
        if r.record_stride == 0 {
            errs.push("record_stride must be at least 1".into());
        }
        let i = &self.initial;
        if matches!(i.preset, Preset::GeometricDecay | Preset::RandomDecay) && !(i.rho > 0.0 && i.rho <= 1.0) {
            errs.push(format!("rho must lie in (0, 1] (got {})", i.rho));
        }
        if let Some(e) = i.energy {
            if !positive(e) {
                errs.push(format!("initial energy must be positive (got {e})"));
            }
            if i.preset == Preset::Zero {
                errs.push("the zero preset cannot be rescaled to a positive energy".into());
            }
        }
        if i.preset == Preset::Explicit && (i.first.len() != m.n_shells || i.second.len() != m.n_shells) {
            errs.push(format!(
                "explicit initial data needs {} values in both first and second (got {} and {})",
                m.n_shells,
                i.first.len(),
                i.second.len()
            ));
        }
        if i.first.iter().chain(&i.second).any(|x| !x.is_finite()) {
            errs.push("initial values must be finite".into());
        }
        let b = &self.bd;
        if b.j_max < 3 {
            errs.push(format!("j_max must be at least 3 (got {})", b.j_max));
        }
        if b.initial_state == 0 || b.initial_state >= b.j_max {
            errs.push(format!("initial_state must lie in 1..j_max (got {})", b.initial_state));
        }
        if b.n_report + 1 >= b.j_max {
            errs.push(format!("n_report must be below j_max - 1 (got {})", b.n_report));
        }
        if b.jump_budget == 0 {
            errs.push("jump_budget must be at least 1".into());
        }
        if b.t_max.is_some_and(|t| !(t > 0.0)) {
            errs.push("t_max must be positive".into());
        }
        if b.hist_times.iter().any(|&t| !(t >= 0.0 && t.is_finite())) {
            errs.push("hist_times must be finite and nonnegative".into());
        }
        let f = &self.forward;
        if f.n_shells < 1 {
            errs.push("forward n_shells must be at least 1".into());
        }
        if let Err(Error::InvalidParameter(msg)) = step_count(f.dt, f.t_end) {
            errs.push(format!("forward: {msg}"));
        }
        if f.record_stride == 0 {
            errs.push("forward record_stride must be at least 1".into());
        }
        let rep = &self.report;
        for (name, v) in [
            ("z_tol", rep.z_tol),
            ("conservation_tol", rep.conservation_tol),
            ("richardson_min", rep.richardson_min),
            ("strat_drift_tol", rep.strat_drift_tol),
            ("strat_ratio_min", rep.strat_ratio_min),
            ("equivalence_tol", rep.equivalence_tol),
            ("ledger_tol", rep.ledger_tol),
            ("series_tol", rep.series_tol),
            ("path_scale", rep.path_scale),
        ] {
            if !positive(v) {
                errs.push(format!("{name} must be positive (got {v})"));
            }
        }
        if !(rep.fit_window[0] < rep.fit_window[1]) {
            errs.push("fit_window must be increasing".into());
        }
        if let Some(bad) = rep.only.iter().find(|&&c| !(1..=9).contains(&c)) {
            errs.push(format!("unknown criterion {bad} in only"));
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::ConfigValidation(errs))
        }
    }

    pub fn params(&self) -> Result<ModelParams> {
        let m = &self.model;
        if self.run.scheme == RunScheme::Deterministic {
            ModelParams::noiseless(m.lambda, m.theta, m.n_shells)
        } else {
            ModelParams::new(m.lambda, m.theta, m.sigma, m.n_shells)
        }
    }

    /// Parameters keeping `σ` even for deterministic runs; rates and series need it.
    pub fn noisy_params(&self) -> Result<ModelParams> {
        let m = &self.model;
        ModelParams::new(m.lambda, m.theta, m.sigma, m.n_shells)
    }

    pub fn rates(&self) -> Result<BDRates> {
        Ok(BDRates::new(&self.noisy_params()?))
    }

    pub fn chain_limits(&self) -> ChainLimits {
        ChainLimits {
            t_max: self.bd.t_max.unwrap_or(f64::INFINITY),
            j_max: self.bd.j_max,
            jump_budget: self.bd.jump_budget,
            boundary: self.bd.boundary,
        }
    }

    pub fn initial_state(&self) -> Result<ShellState> {
        initial_state(&self.initial, self.model.n_shells)
    }

    /// Canonical TOML of the resolved configuration.
    pub fn resolved_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Hex SHA-256 of [`RunConfig::resolved_toml`].
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.resolved_toml().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Build the starting state described by `i` for `n` shells.
pub fn initial_state(i: &InitialSection, n: usize) -> Result<ShellState> {
    let decay = |rho: f64| (0..n).map(move |j| rho.powi(j as i32));
    let s = match i.preset {
        Preset::PointMass1 => {
            let mut p = vec![0.0; n];
            p[0] = 1.0;
            ShellState::elsasser(p, vec![0.0; n])?
        }
        Preset::GeometricDecay => ShellState::ab(decay(i.rho).collect(), vec![0.0; n])?,
        Preset::RandomDecay => {
            let mut rng = path_rng(i.seed, 0);
            let a: Vec<f64> = decay(i.rho).map(|w| w * rng.random_range(-1.0..1.0)).collect();
            let b: Vec<f64> = decay(i.rho).map(|w| w * rng.random_range(-1.0..1.0)).collect();
            ShellState::ab(a, b)?
        }
        Preset::Zero => ShellState::zeros(n, Coords::Elsasser),
        Preset::Explicit => ShellState::new(i.first.clone(), i.second.clone(), i.coords)?,
    };
    match i.energy {
        Some(target) => {
            let e = energy(&s);
            if e == 0.0 {
                return Err(Error::InvalidParameter("cannot rescale a zero state".into()));
            }
            let k = (target / e).sqrt();
            ShellState::new(
                s.first.iter().map(|x| x * k).collect(),
                s.second.iter().map(|x| x * k).collect(),
                s.coords,
            )
        }
        None => Ok(s),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_gets_defaults() {
        let cfg = parse_config_str("[model]\nlambda = 2.0\n").unwrap();
        assert_eq!(cfg.run, RunSection::default());
        assert_eq!(cfg.bd.j_max, 60);
        let dump = cfg.resolved_toml();
        assert!(dump.contains("[run]") && dump.contains("master_seed = 0"));
        assert_eq!(parse_config_str(&dump).unwrap(), cfg);
    }

    #[test]
    fn small_lambda_is_rejected() {
        let err = parse_config_str("[model]\nlambda = 0.5\n").unwrap_err();
        assert!(err.to_string().contains("lambda must exceed 1"), "{err}");
    }

    #[test]
    fn zero_sigma_needs_deterministic_scheme() {
        assert!(parse_config_str("[model]\nsigma = 0.0\n").is_err());
        let ok = parse_config_str("[model]\nsigma = 0.0\n[run]\nscheme = \"deterministic\"\n").unwrap();
        assert_eq!(ok.params().unwrap().sigma(), 0.0);
    }

    #[test]
    fn all_violations_are_listed() {
        let err = parse_config_str("[model]\nlambda = 0.5\ntheta = 0.5\n[run]\nn_paths = 0\n").unwrap_err();
        match err {
            Error::ConfigValidation(v) => assert_eq!(v.len(), 3, "{v:?}"),
            other => panic!("{other}"),
        }
    }

    #[test]
    fn unknown_keys_report_position() {
        let err = parse_config_str("[model]\nlambda = 2.0\nlamda = 3.0\n").unwrap_err();
        match err {
            Error::ConfigParse { line, column, .. } => assert_eq!((line, column), (3, 1)),
            other => panic!("{other}"),
        }
        let err = parse_config_str("[model]\nlambda = \n").unwrap_err();
        assert!(matches!(err, Error::ConfigParse { line: 2, .. }), "{err}");
    }

    #[test]
    fn presets() {
        let mut i = InitialSection::default();
        let s = initial_state(&i, 4).unwrap();
        assert_eq!(s.first, vec![1.0, 0.0, 0.0, 0.0]);
        i.preset = Preset::RandomDecay;
        i.energy = Some(1.0);
        i.rho = 0.6;
        let s = initial_state(&i, 6).unwrap();
        assert!((energy(&s) - 1.0).abs() < 1e-14);
        assert_eq!(s, initial_state(&i, 6).unwrap());
        i.preset = Preset::Explicit;
        i.energy = None;
        i.first = vec![1.0, 2.0];
        i.second = vec![0.0, 1.0];
        assert_eq!(initial_state(&i, 2).unwrap().first, vec![1.0, 2.0]);
    }

    #[test]
    fn hash_tracks_content() {
        let a = RunConfig::default();
        let mut b = a.clone();
        assert_eq!(a.hash(), b.hash());
        b.run.master_seed = 1;
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 64);
    }
}
