//! One-step integrators for the truncated Itô, Stratonovich and linear systems,
//! and a single-path driver.

use serde::{Deserialize, Serialize};

use crate::deterministic::{check_blow_up, BLOW_UP_THRESHOLD};
use crate::error::{Error, Result};
use crate::girsanov::GirsanovAccumulator;
use crate::rng::{fill_normals, path_streams, NoiseIncrements, PathStreams};
use crate::shell::{energy, to_elsasser, Coords, ModelParams, ShellState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    /// Euler–Maruyama on the Itô system.
    #[serde(rename = "ito")]
    ItoEM,
    /// Heun predictor–corrector on the Stratonovich system.
    #[serde(rename = "stratonovich")]
    StratHeun,
    /// Euler–Maruyama on the Girsanov-linearized system.
    #[serde(rename = "linear")]
    LinearEM,
}

impl Scheme {
    pub fn name(self) -> &'static str {
        match self {
            Scheme::ItoEM => "ito",
            Scheme::StratHeun => "stratonovich",
            Scheme::LinearEM => "linear",
        }
    }
}

/// Precomputed coefficients plus scratch space for in-place stepping.
///
/// All vectors handled here are zero-padded to length `N + 2`, so index `j`
/// is shell `j` and indices `0`, `N + 1` hold the zero boundary.
#[derive(Debug, Clone)]
pub(crate) struct Kernel {
    n: usize,
    k: Vec<f64>,
    sk: Vec<f64>,
    damp: Vec<f64>,
    sigma: f64,
    bufs: [Vec<f64>; 6],
}

impl Kernel {
    pub(crate) fn new(p: &ModelParams) -> Self {
        let n = p.n_shells();
        let mut k = p.couplings().to_vec();
        k.push(0.0);
        let sk = k.iter().map(|v| p.sigma() * v).collect();
        let mut damp = vec![0.0; n + 2];
        for (j, d) in damp.iter_mut().enumerate().take(n + 1).skip(1) {
            *d = p.ito_damping(j);
        }
        Self {
            n,
            k,
            sk,
            damp,
            sigma: p.sigma(),
            bufs: std::array::from_fn(|_| vec![0.0; n + 2]),
        }
    }

    pub(crate) fn sigma(&self) -> f64 {
        self.sigma
    }

    /// Euler–Maruyama update; `NL` toggles the quadratic drift.
    #[inline]
    fn em<const NL: bool>(&mut self, p: &mut [f64], m: &mut [f64], dwp: &[f64], dwm: &[f64], dt: f64) {
        let n = self.n;
        let len = n + 2;
        let [op, om, ..] = &mut self.bufs;
        let (op, om) = (&mut op[..len], &mut om[..len]);
        let (p, m) = (&mut p[..len], &mut m[..len]);
        let (dwp, dwm) = (&dwp[..len], &dwm[..len]);
        let (k, sk, damp) = (&self.k[..len], &self.sk[..len], &self.damp[..len]);
        for j in 1..=n {
            let mut fp = -damp[j] * p[j];
            let mut fm = -damp[j] * m[j];
            if NL {
                let back = k[j - 1] * m[j - 1] * p[j - 1];
                fp += back - k[j] * m[j] * p[j + 1];
                fm += back - k[j] * p[j] * m[j + 1];
            }
            op[j] = p[j] + fp * dt + sk[j - 1] * p[j - 1] * dwp[j - 1] - sk[j] * p[j + 1] * dwp[j];
            om[j] = m[j] + fm * dt + sk[j - 1] * m[j - 1] * dwm[j - 1] - sk[j] * m[j + 1] * dwm[j];
        }
        p[1..=n].copy_from_slice(&op[1..=n]);
        m[1..=n].copy_from_slice(&om[1..=n]);
    }

    /// Linear update of the `P` family alone; bitwise identical to the `P` half of `em::<false>`.
    #[inline]
    fn linear_p(&mut self, p: &mut [f64], dwp: &[f64], dt: f64) {
        let n = self.n;
        let op = &mut self.bufs[0][1..=n];
        let it = p.windows(3).zip(dwp.windows(2)).zip(self.sk.windows(2)).zip(&self.damp[1..=n]);
        for (o, (((w, dw), sk), d)) in op.iter_mut().zip(it) {
            let fp = -d * w[1];
            *o = w[1] + fp * dt + sk[0] * w[0] * dw[0] - sk[1] * w[2] * dw[1];
        }
        p[1..=n].copy_from_slice(op);
    }

    /// `F(s)dt + G(s)·dW` for the Stratonovich system (no Itô correction).
    #[inline]
    #[allow(clippy::too_many_arguments)]
    fn strat_increment(
        n: usize,
        k: &[f64],
        sk: &[f64],
        p: &[f64],
        m: &[f64],
        dwp: &[f64],
        dwm: &[f64],
        dt: f64,
        ip: &mut [f64],
        im: &mut [f64],
    ) {
        let len = n + 2;
        let (k, sk, p, m, dwp, dwm) = (&k[..len], &sk[..len], &p[..len], &m[..len], &dwp[..len], &dwm[..len]);
        let (ip, im) = (&mut ip[..len], &mut im[..len]);
        for j in 1..=n {
            let back = k[j - 1] * m[j - 1] * p[j - 1];
            ip[j] = (back - k[j] * m[j] * p[j + 1]) * dt + sk[j - 1] * p[j - 1] * dwp[j - 1]
                - sk[j] * p[j + 1] * dwp[j];
            im[j] = (back - k[j] * p[j] * m[j + 1]) * dt + sk[j - 1] * m[j - 1] * dwm[j - 1]
                - sk[j] * m[j + 1] * dwm[j];
        }
    }

    fn strat_heun(&mut self, p: &mut [f64], m: &mut [f64], dwp: &[f64], dwm: &[f64], dt: f64) {
        let n = self.n;
        let [ip0, im0, ip1, im1, pp, pm] = &mut self.bufs;
        Self::strat_increment(n, &self.k, &self.sk, p, m, dwp, dwm, dt, ip0, im0);
        for j in 1..=n {
            pp[j] = p[j] + ip0[j];
            pm[j] = m[j] + im0[j];
        }
        Self::strat_increment(n, &self.k, &self.sk, pp, pm, dwp, dwm, dt, ip1, im1);
        for j in 1..=n {
            p[j] += 0.5 * (ip0[j] + ip1[j]);
            m[j] += 0.5 * (im0[j] + im1[j]);
        }
    }

    /// Advance padded `(p, m)` by one step with padded increments.
    #[inline]
    pub(crate) fn step(&mut self, scheme: Scheme, p: &mut [f64], m: &mut [f64], dwp: &[f64], dwm: &[f64], dt: f64) {
        match scheme {
            Scheme::ItoEM => self.em::<true>(p, m, dwp, dwm, dt),
            Scheme::StratHeun => self.strat_heun(p, m, dwp, dwm, dt),
            Scheme::LinearEM => self.em::<false>(p, m, dwp, dwm, dt),
        }
    }
}

fn padded(v: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(v.len() + 2);
    out.push(0.0);
    out.extend_from_slice(v);
    out.push(0.0);
    out
}

fn one_step(scheme: Scheme, s: &ShellState, p: &ModelParams, inc: &NoiseIncrements) -> Result<ShellState> {
    s.expect(Coords::Elsasser)?;
    let n = p.n_shells();
    if s.n_shells() != n || inc.dwp.len() != n || inc.dwm.len() != n {
        return Err(Error::Shape(format!(
            "expected {n} shells in state and increments"
        )));
    }
    let (mut x, mut y) = (padded(&s.first), padded(&s.second));
    Kernel::new(p).step(scheme, &mut x, &mut y, &padded(&inc.dwp), &padded(&inc.dwm), inc.dt);
    let out = ShellState {
        first: x[1..=n].to_vec(),
        second: y[1..=n].to_vec(),
        coords: Coords::Elsasser,
    };
    check_blow_up(&out.first, &out.second, 1)?;
    Ok(out)
}

/// Euler–Maruyama step of the Itô system, Itô correction included.
pub fn step_ito(s: &ShellState, p: &ModelParams, inc: &NoiseIncrements) -> Result<ShellState> {
    one_step(Scheme::ItoEM, s, p, inc)
}

/// Heun predictor–corrector step of the Stratonovich system.
pub fn step_strat_heun(s: &ShellState, p: &ModelParams, inc: &NoiseIncrements) -> Result<ShellState> {
    one_step(Scheme::StratHeun, s, p, inc)
}

/// Euler–Maruyama step of the linear system; `inc.dwp` drives `P` and `inc.dwm` drives `M`.
pub fn step_linear(s: &ShellState, p: &ModelParams, inc: &NoiseIncrements) -> Result<ShellState> {
    one_step(Scheme::LinearEM, s, p, inc)
}

/// Number of steps covering `[0, t_end]`; `t_end` must be a multiple of `dt`.
pub fn step_count(dt: f64, t_end: f64) -> Result<usize> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::InvalidParameter(format!("dt must be positive (got {dt})")));
    }
    if !(t_end > 0.0 && t_end.is_finite()) {
        return Err(Error::InvalidParameter(format!("t_end must be positive (got {t_end})")));
    }
    let n = (t_end / dt).round();
    if n < 1.0 || ((n * dt - t_end) / t_end).abs() > 1e-9 {
        return Err(Error::InvalidParameter(format!(
            "t_end = {t_end} is not a multiple of dt = {dt}"
        )));
    }
    Ok(n as usize)
}

/// Steps at which a path is sampled: 0, every `stride`, and the last step.
pub fn record_steps(n_steps: usize, stride: usize) -> Vec<usize> {
    let stride = stride.max(1);
    let mut v: Vec<usize> = (0..=n_steps).step_by(stride).collect();
    if *v.last().unwrap() != n_steps {
        v.push(n_steps);
    }
    v
}

/// Diagnostics gathered at every step of a path.
#[derive(Debug, Clone, Copy, Default)]
pub(crate) struct StepDiagnostics {
    pub max_rel_energy_drift: f64,
    pub max_energy: f64,
}

#[inline]
fn sum_sq(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum()
}

/// Drives one path, calling `observe` at every recorded step.
pub(crate) struct PathRunner {
    kernel: Kernel,
    scheme: Scheme,
    dt: f64,
    n_steps: usize,
    record: Vec<usize>,
    track_weights: bool,
    n: usize,
    dwp: Vec<f64>,
    dwm: Vec<f64>,
    p: Vec<f64>,
    m: Vec<f64>,
}

impl PathRunner {
    pub(crate) fn new(
        scheme: Scheme,
        params: &ModelParams,
        dt: f64,
        n_steps: usize,
        record: Vec<usize>,
        track_weights: bool,
    ) -> Self {
        let n = params.n_shells();
        Self {
            kernel: Kernel::new(params),
            scheme,
            dt,
            n_steps,
            record,
            track_weights,
            n,
            dwp: vec![0.0; n + 2],
            dwm: vec![0.0; n + 2],
            p: vec![0.0; n + 2],
            m: vec![0.0; n + 2],
        }
    }

    pub(crate) fn run<F>(&mut self, s0: &ShellState, rng: &mut PathStreams, mut observe: F) -> Result<StepDiagnostics>
    where
        F: FnMut(usize, &[f64], &[f64], &GirsanovAccumulator),
    {
        let n = self.n;
        self.p[1..=n].copy_from_slice(&s0.first);
        self.m[1..=n].copy_from_slice(&s0.second);
        let sqrt_dt = self.dt.sqrt();
        let inv_sigma = 1.0 / self.kernel.sigma();
        let nonlinear = self.scheme != Scheme::LinearEM;
        // a linear M family that starts at zero stays there; without weights its noise is never needed
        let m_frozen = self.scheme == Scheme::LinearEM
            && !self.track_weights
            && s0.second.iter().all(|&x| x == 0.0);
        let e0 = energy(s0);
        let mut acc = GirsanovAccumulator::default();
        let mut diag = StepDiagnostics {
            max_energy: e0,
            ..Default::default()
        };
        let mut next = 0;
        if self.record.first() == Some(&0) {
            observe(0, &self.p[1..=n], &self.m[1..=n], &acc);
            next = 1;
        }
        let mut note = |sq: f64, step: usize, p: &[f64], m: &[f64]| -> Result<()> {
            if !(sq < BLOW_UP_THRESHOLD * BLOW_UP_THRESHOLD) {
                check_blow_up(p, m, step)?;
            }
            diag.max_energy = diag.max_energy.max(0.5 * sq);
            if e0 > 0.0 {
                let drift = (0.5 * sq - e0).abs() / e0;
                diag.max_rel_energy_drift = diag.max_rel_energy_drift.max(drift);
            }
            Ok(())
        };
        for step in 1..=self.n_steps {
            fill_normals(&mut rng.p, sqrt_dt, &mut self.dwp[1..=n]);
            if !m_frozen {
                fill_normals(&mut rng.m, sqrt_dt, &mut self.dwm[1..=n]);
            }
            // the pre-step sum of squares checks the state produced by step - 1
            let sq = if self.track_weights {
                acc.add_step(
                    &self.p[1..=n],
                    &self.m[1..=n],
                    &self.dwp[1..=n],
                    &self.dwm[1..=n],
                    self.dt,
                    inv_sigma,
                    nonlinear,
                )
            } else {
                sum_sq(&self.p) + sum_sq(&self.m)
            };
            if step > 1 {
                note(sq, step - 1, &self.p[1..=n], &self.m[1..=n])?;
            }
            if m_frozen {
                self.kernel.linear_p(&mut self.p, &self.dwp, self.dt);
            } else {
                self.kernel
                    .step(self.scheme, &mut self.p, &mut self.m, &self.dwp, &self.dwm, self.dt);
            }
            if next < self.record.len() && self.record[next] == step {
                check_blow_up(&self.p[1..=n], &self.m[1..=n], step)?;
                observe(next, &self.p[1..=n], &self.m[1..=n], &acc);
                next += 1;
            }
        }
        let sq = sum_sq(&self.p) + sum_sq(&self.m);
        note(sq, self.n_steps, &self.p[1..=n], &self.m[1..=n])?;
        Ok(diag)
    }
}

/// One sampled path with its measure-change accumulators at each sample time.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrajectoryRecord {
    pub times: Vec<f64>,
    pub states: Vec<ShellState>,
    pub z1: Vec<f64>,
    pub z2: Vec<f64>,
    pub qv1: Vec<f64>,
    pub qv2: Vec<f64>,
    pub seed: u64,
    pub path_index: u64,
    pub scheme: Scheme,
}

impl TrajectoryRecord {
    pub(crate) fn with_capacity(k: usize, seed: u64, path_index: u64, scheme: Scheme) -> Self {
        Self {
            times: Vec::with_capacity(k),
            states: Vec::with_capacity(k),
            z1: Vec::with_capacity(k),
            z2: Vec::with_capacity(k),
            qv1: Vec::with_capacity(k),
            qv2: Vec::with_capacity(k),
            seed,
            path_index,
            scheme,
        }
    }

    pub(crate) fn push(&mut self, t: f64, p: &[f64], m: &[f64], acc: &GirsanovAccumulator) {
        self.times.push(t);
        self.states.push(ShellState {
            first: p.to_vec(),
            second: m.to_vec(),
            coords: Coords::Elsasser,
        });
        self.z1.push(acc.z1);
        self.z2.push(acc.z2);
        self.qv1.push(acc.qv1);
        self.qv2.push(acc.qv2);
    }

    pub fn accumulator(&self, k: usize) -> GirsanovAccumulator {
        GirsanovAccumulator {
            z1: self.z1[k],
            z2: self.z2[k],
            qv1: self.qv1[k],
            qv2: self.qv2[k],
        }
    }

    pub fn energies(&self) -> Vec<f64> {
        self.states.iter().map(energy).collect()
    }
}

/// Coerce an initial state to Elsässer coordinates and check its size.
pub(crate) fn initial_elsasser(s0: &ShellState, p: &ModelParams) -> Result<ShellState> {
    let s = match s0.coords {
        Coords::Elsasser => s0.clone(),
        Coords::AB => to_elsasser(s0)?,
    };
    if s.n_shells() != p.n_shells() {
        return Err(Error::Shape(format!(
            "initial state has {} shells, parameters expect {}",
            s.n_shells(),
            p.n_shells()
        )));
    }
    Ok(s)
}

/// Integrate path `path_index` of the ensemble keyed by `master_seed`.
pub fn integrate_path(
    scheme: Scheme,
    p: &ModelParams,
    s0: &ShellState,
    dt: f64,
    t_end: f64,
    record_stride: usize,
    master_seed: u64,
    path_index: u64,
) -> Result<TrajectoryRecord> {
    let s0 = initial_elsasser(s0, p)?;
    let n_steps = step_count(dt, t_end)?;
    let record = record_steps(n_steps, record_stride);
    let mut rec = TrajectoryRecord::with_capacity(record.len(), master_seed, path_index, scheme);
    let mut runner = PathRunner::new(scheme, p, dt, n_steps, record.clone(), true);
    let mut rng = path_streams(master_seed, path_index);
    runner
        .run(&s0, &mut rng, |k, pv, mv, acc| {
            rec.push(record[k] as f64 * dt, pv, mv, acc)
        })
        .map_err(|e| match e {
            Error::BlowUp { step, detail, .. } => Error::BlowUp {
                step,
                path: Some(path_index as usize),
                detail,
            },
            e => e,
        })?;
    Ok(rec)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::deterministic::{euler_step_pm, heun_step_pm};
    use crate::rng::sample_noise;

    fn params(sigma: f64, n: usize) -> ModelParams {
        ModelParams::new(2.0, 1.0, sigma, n).unwrap()
    }

    fn random_state(n: usize, seed: u64) -> ShellState {
        let p = params(1.0, n);
        let inc = sample_noise(&mut path_streams(seed, 0), &p, 0.04).unwrap();
        ShellState::elsasser(inc.dwp, inc.dwm).unwrap()
    }

    #[test]
    fn zero_state_is_fixed() {
        let p = params(1.0, 5);
        let z = ShellState::zeros(5, Coords::Elsasser);
        let inc = sample_noise(&mut path_streams(1, 0), &p, 0.01).unwrap();
        for f in [step_ito, step_strat_heun, step_linear] {
            assert_eq!(f(&z, &p, &inc).unwrap(), z);
        }
    }

    #[test]
    fn noiseless_ito_is_euler() {
        let p = ModelParams::noiseless(2.0, 1.0, 6).unwrap();
        let s = random_state(6, 5);
        let inc = NoiseIncrements::zero(6, 1e-3);
        assert_eq!(step_ito(&s, &p, &inc).unwrap(), euler_step_pm(&s, &p, 1e-3).unwrap());
        let h = step_strat_heun(&s, &p, &inc).unwrap();
        let r = heun_step_pm(&s, &p, 1e-3).unwrap();
        for (a, b) in h.first.iter().chain(&h.second).zip(r.first.iter().chain(&r.second)) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn ito_correction_on_second_shell() {
        let p = params(1.0, 4);
        let s = ShellState::elsasser(vec![0.0, 1.0, 0.0, 0.0], vec![0.0; 4]).unwrap();
        let out = step_ito(&s, &p, &NoiseIncrements::zero(4, 1e-3)).unwrap();
        assert!((out.first[1] - 0.99).abs() < 1e-14);
        assert_eq!(out.first[0], 0.0);
        assert_eq!(out.first[2], 0.0);
    }

    #[test]
    fn top_shell_pumps_only_downward() {
        let p = params(1.0, 5);
        let s = ShellState::elsasser(vec![0.0, 0.0, 0.0, 0.0, 1.0], vec![0.0; 5]).unwrap();
        let inc = sample_noise(&mut path_streams(2, 0), &p, 1e-4).unwrap();
        let out = step_linear(&s, &p, &inc).unwrap();
        assert!(out.first[3] != 0.0);
        assert!(out.first[..3].iter().all(|&x| x == 0.0));
        assert!(out.second.iter().all(|&x| x == 0.0));
        let expect = 1.0 - p.ito_damping(5) * 1e-4;
        assert!((out.first[4] - expect).abs() < 1e-14);
    }

    #[test]
    fn nonlinear_em_is_linear_em_with_shifted_noise() {
        let p = params(0.8, 6);
        let s = random_state(6, 11);
        let inc = sample_noise(&mut path_streams(12, 0), &p, 1e-3).unwrap();
        let ito = step_ito(&s, &p, &inc).unwrap();
        let shifted = NoiseIncrements {
            dwp: inc.dwp.iter().zip(&s.second).map(|(w, m)| w + m * inc.dt / p.sigma()).collect(),
            dwm: inc.dwm.iter().zip(&s.first).map(|(w, q)| w + q * inc.dt / p.sigma()).collect(),
            dt: inc.dt,
        };
        let lin = step_linear(&s, &p, &shifted).unwrap();
        for (a, b) in ito.first.iter().chain(&ito.second).zip(lin.first.iter().chain(&lin.second)) {
            assert!((a - b).abs() < 1e-13, "{a} vs {b}");
        }
    }

    #[test]
    fn wrong_coords_rejected() {
        let p = params(1.0, 3);
        let s = ShellState::zeros(3, Coords::AB);
        assert!(step_ito(&s, &p, &NoiseIncrements::zero(3, 0.1)).is_err());
    }

    #[test]
    fn step_count_checks_grid() {
        assert_eq!(step_count(1e-3, 0.5).unwrap(), 500);
        assert!(step_count(0.3, 1.0).is_err());
        assert_eq!(record_steps(10, 4), vec![0, 4, 8, 10]);
        assert_eq!(record_steps(8, 4), vec![0, 4, 8]);
    }

    #[test]
    fn path_is_reproducible() {
        let p = params(0.5, 6);
        let s0 = random_state(6, 21);
        let a = integrate_path(Scheme::StratHeun, &p, &s0, 1e-3, 0.1, 10, 4, 2).unwrap();
        let b = integrate_path(Scheme::StratHeun, &p, &s0, 1e-3, 0.1, 10, 4, 2).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.times.len(), 11);
        assert!(a.qv1.windows(2).all(|w| w[1] >= w[0]));
    }
}
