//! Measure-change accumulators and Radon–Nikodym weights between the linear
//! and nonlinear systems.

use serde::Serialize;

use crate::ensemble::EnsembleResult;
use crate::error::Result;
use crate::forward::spectral_quantities;
use crate::rng::NoiseIncrements;
use crate::stats::Estimate;
use crate::sde::Scheme;
use crate::shell::{Coords, ModelParams, ShellState};

/// Log-weights above this are clipped.
pub const LOG_WEIGHT_CAP: f64 = 50.0;

/// Left-point discretizations of `Z_1, Z_2` and their brackets.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct GirsanovAccumulator {
    pub z1: f64,
    pub z2: f64,
    pub qv1: f64,
    pub qv2: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Direction {
    /// `dQ/dQ̃`: reweights linear paths to the nonlinear law.
    LinearToNonlinear,
    /// `dQ̃/dQ`: reweights nonlinear paths to the linear law.
    NonlinearToLinear,
}

impl Direction {
    /// Direction that maps paths of `scheme` onto the other system.
    pub fn from_scheme(scheme: Scheme) -> Self {
        match scheme {
            Scheme::LinearEM => Direction::LinearToNonlinear,
            Scheme::ItoEM | Scheme::StratHeun => Direction::NonlinearToLinear,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RnWeight {
    pub value: f64,
    pub clipped: bool,
}

impl GirsanovAccumulator {
    /// In-place step update from the pre-step `(P, M)` and raw increments.
    ///
    /// For the linear scheme the increments already are `dV, dU`; for the
    /// nonlinear schemes `dU = σ⁻¹P dt + dW^m` and `dV = σ⁻¹M dt + dW^p`.
    /// Returns `Σ(P² + M²)` of the pre-step state.
    #[inline]
    pub(crate) fn add_step(
        &mut self,
        p: &[f64],
        m: &[f64],
        dwp: &[f64],
        dwm: &[f64],
        dt: f64,
        inv_sigma: f64,
        nonlinear: bool,
    ) -> f64 {
        let mut sp = 0.0;
        let mut sm = 0.0;
        let mut pp = 0.0;
        let mut mm = 0.0;
        for i in 0..p.len() {
            sp += p[i] * dwm[i];
            sm += m[i] * dwp[i];
            pp += p[i] * p[i];
            mm += m[i] * m[i];
        }
        let s2 = inv_sigma * inv_sigma;
        if nonlinear {
            sp += inv_sigma * pp * dt;
            sm += inv_sigma * mm * dt;
        }
        self.z1 += inv_sigma * sp;
        self.z2 += inv_sigma * sm;
        self.qv1 += s2 * pp * dt;
        self.qv2 += s2 * mm * dt;
        pp + mm
    }

    /// Exponent of the `LinearToNonlinear` weight.
    pub fn log_weight(&self) -> f64 {
        self.z1 - 0.5 * self.qv1 + self.z2 - 0.5 * self.qv2
    }
}

/// Advance the accumulator over one step taken from the pre-step state `s`.
pub fn accumulate(
    acc: &GirsanovAccumulator,
    s: &ShellState,
    inc: &NoiseIncrements,
    p: &ModelParams,
    scheme: Scheme,
) -> Result<GirsanovAccumulator> {
    s.expect(Coords::Elsasser)?;
    let mut out = *acc;
    out.add_step(
        &s.first,
        &s.second,
        &inc.dwp,
        &inc.dwm,
        inc.dt,
        1.0 / p.sigma(),
        scheme != Scheme::LinearEM,
    );
    Ok(out)
}

/// `exp(±(Z_1 − ½[Z_1] + Z_2 − ½[Z_2]))`, clipped at `exp(LOG_WEIGHT_CAP)`.
pub fn rn_weight(acc: &GirsanovAccumulator, direction: Direction) -> RnWeight {
    let lw = match direction {
        Direction::LinearToNonlinear => acc.log_weight(),
        Direction::NonlinearToLinear => -acc.log_weight(),
    };
    if lw > LOG_WEIGHT_CAP {
        RnWeight {
            value: LOG_WEIGHT_CAP.exp(),
            clipped: true,
        }
    } else {
        RnWeight {
            value: lw.exp(),
            clipped: false,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct IntegrabilityReport {
    /// `E[exp(σ⁻²∫ΣP_j² dt)]` and its `M` counterpart at the last recorded time.
    pub exp_qv1: Option<Estimate>,
    pub exp_qv2: Option<Estimate>,
    pub ess: Option<f64>,
    pub clip_count: u64,
    /// `∫E[P_j⁴]dt` and `∫E[M_j⁴]dt` per shell.
    pub p4_integrals: Vec<f64>,
    pub m4_integrals: Vec<f64>,
    pub p2_integrals: Vec<f64>,
    /// `∫E[P_{N−1}²]dt / ∫E[P_1²]dt`; zero when both vanish.
    pub p2_tail_ratio: f64,
    pub p2_tail_decreasing: bool,
    pub initial_energy: f64,
    /// `σ⁴/r_∞`, the energy below which the two laws are equivalent.
    pub energy_threshold: f64,
    pub equivalence_condition: bool,
}

/// Exponential-integrability and class-K diagnostics for a completed ensemble.
pub fn integrability_report(result: &EnsembleResult, p: &ModelParams, initial_energy: f64) -> Result<IntegrabilityReport> {
    let q = spectral_quantities(p, 1e-14)?;
    let s2 = p.sigma() * p.sigma();
    let threshold = s2 * s2 / q.r_inf;
    let last = result.summaries.last().and_then(|s| s.weights.as_ref());
    let p2 = &result.integrals.p2;
    let n = p2.len();
    let ratio = if n >= 2 && p2[0] > 0.0 { p2[n - 2] / p2[0] } else { 0.0 };
    Ok(IntegrabilityReport {
        exp_qv1: last.map(|w| w.exp_qv1),
        exp_qv2: last.map(|w| w.exp_qv2),
        ess: last.map(|w| w.ess),
        clip_count: result.clip_count,
        p4_integrals: result.integrals.p4.clone(),
        m4_integrals: result.integrals.m4.clone(),
        p2_integrals: p2.clone(),
        p2_tail_ratio: ratio,
        p2_tail_decreasing: p2.windows(2).all(|w| w[1] <= w[0]),
        initial_energy,
        energy_threshold: threshold,
        equivalence_condition: initial_energy < threshold,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{path_streams, sample_noise};

    #[test]
    fn zero_accumulator_has_unit_weight() {
        let acc = GirsanovAccumulator::default();
        assert_eq!(rn_weight(&acc, Direction::LinearToNonlinear).value, 1.0);
        assert_eq!(rn_weight(&acc, Direction::NonlinearToLinear).value, 1.0);
    }

    #[test]
    fn zero_state_leaves_accumulator() {
        let p = ModelParams::new(2.0, 1.0, 1.0, 4).unwrap();
        let s = ShellState::zeros(4, Coords::Elsasser);
        let inc = sample_noise(&mut path_streams(3, 0), &p, 0.01).unwrap();
        for scheme in [Scheme::LinearEM, Scheme::ItoEM] {
            let acc = accumulate(&GirsanovAccumulator::default(), &s, &inc, &p, scheme).unwrap();
            assert_eq!(acc, GirsanovAccumulator::default());
        }
    }

    #[test]
    fn frozen_single_shell_bracket() {
        let sigma = 0.7;
        let p = ModelParams::new(2.0, 1.0, sigma, 3).unwrap();
        let c = 0.3;
        let s = ShellState::elsasser(vec![c, 0.0, 0.0], vec![0.0; 3]).unwrap();
        let dt = 1e-3;
        let mut acc = GirsanovAccumulator::default();
        let mut rng = path_streams(9, 0);
        for _ in 0..500 {
            let inc = sample_noise(&mut rng, &p, dt).unwrap();
            acc = accumulate(&acc, &s, &inc, &p, Scheme::LinearEM).unwrap();
        }
        let expect = c * c * 0.5 / (sigma * sigma);
        assert!((acc.qv1 - expect).abs() < 1e-12);
        assert_eq!(acc.qv2, 0.0);
    }

    #[test]
    fn weights_are_reciprocal() {
        let acc = GirsanovAccumulator {
            z1: 0.37,
            z2: -1.2,
            qv1: 0.8,
            qv2: 0.05,
        };
        let a = rn_weight(&acc, Direction::LinearToNonlinear).value;
        let b = rn_weight(&acc, Direction::NonlinearToLinear).value;
        assert!((a * b - 1.0).abs() <= 2.0 * f64::EPSILON);
    }

    fn small_run(initial: ShellState) -> (EnsembleResult, ModelParams) {
        let p = ModelParams::new(2.0, 1.0, 1.0, 4).unwrap();
        let cfg = crate::ensemble::EnsembleConfig {
            scheme: Scheme::LinearEM,
            params: p.clone(),
            initial,
            dt: 1e-4,
            t_end: 0.01,
            n_paths: 50,
            master_seed: 2,
            record_stride: 10,
            keep_paths: false,
            track_weights: true,
        };
        (crate::ensemble::run_ensemble(&cfg).unwrap(), p)
    }

    #[test]
    fn zero_data_report() {
        let (r, p) = small_run(ShellState::zeros(4, Coords::Elsasser));
        let rep = integrability_report(&r, &p, 0.0).unwrap();
        assert!(rep.p4_integrals.iter().chain(&rep.m4_integrals).all(|&x| x == 0.0));
        assert_eq!(rep.exp_qv1.unwrap().mean, 1.0);
        assert!(rep.equivalence_condition);
    }

    #[test]
    fn small_energy_meets_the_condition() {
        let c = 0.05_f64.sqrt();
        let s = ShellState::elsasser(vec![c, 0.0, 0.0, 0.0], vec![c, 0.0, 0.0, 0.0]).unwrap();
        let (r, p) = small_run(s);
        let rep = integrability_report(&r, &p, 0.05).unwrap();
        assert!((rep.energy_threshold - 2.25).abs() < 1e-12);
        assert!(rep.equivalence_condition);
        assert!(rep.exp_qv1.unwrap().mean > 1.0);
        assert!(rep.p4_integrals[0] > 0.0);
    }

    #[test]
    fn large_weights_are_clipped() {
        let acc = GirsanovAccumulator {
            z1: 80.0,
            ..Default::default()
        };
        let w = rn_weight(&acc, Direction::LinearToNonlinear);
        assert!(w.clipped);
        assert_eq!(w.value, LOG_WEIGHT_CAP.exp());
        assert!(!rn_weight(&acc, Direction::NonlinearToLinear).clipped);
    }
}
