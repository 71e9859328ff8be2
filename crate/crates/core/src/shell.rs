//! Model parameters, shell states and scalar diagnostics.
//!
//! Shells are numbered `1..=N` with hard zero boundaries at `0` and `N + 1`.
//! Vectors are stored 0-based, so shell `j` lives at index `j - 1`.
//! The wavenumber sequence is always geometric, `λ_j = λ^j` with `λ_0 = 1`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Spectral and noise parameters of the truncated dyadic model.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    lambda: f64,
    theta: f64,
    sigma: f64,
    n_shells: usize,
    /// `λ_j^θ` for `j = 0..=N`.
    coupling: Vec<f64>,
}

impl ModelParams {
    /// Validated constructor for the stochastic model (`σ ≠ 0`).
    pub fn new(lambda: f64, theta: f64, sigma: f64, n_shells: usize) -> Result<Self> {
        if sigma == 0.0 {
            return Err(Error::InvalidParameter(
                "sigma must be nonzero for the stochastic model".into(),
            ));
        }
        Self::build(lambda, theta, sigma, n_shells)
    }

    /// Parameters for the deterministic system; `σ` is fixed at zero.
    pub fn noiseless(lambda: f64, theta: f64, n_shells: usize) -> Result<Self> {
        Self::build(lambda, theta, 0.0, n_shells)
    }

    fn build(lambda: f64, theta: f64, sigma: f64, n_shells: usize) -> Result<Self> {
        let mut problems = Vec::new();
        if !(lambda.is_finite() && lambda > 1.0) {
            problems.push(format!("lambda must exceed 1 (got {lambda})"));
        }
        if !(theta.is_finite() && theta >= 1.0) {
            problems.push(format!("theta must be at least 1 (got {theta})"));
        }
        if !sigma.is_finite() {
            problems.push(format!("sigma must be finite (got {sigma})"));
        }
        if n_shells < 2 {
            problems.push(format!("n_shells must be at least 2 (got {n_shells})"));
        }
        if !problems.is_empty() {
            return Err(Error::InvalidParameter(problems.join("; ")));
        }
        let coupling: Vec<f64> = (0..=n_shells)
            .map(|j| lambda.powf(theta * j as f64))
            .collect();
        if coupling.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "lambda^(theta*N) overflows for N = {n_shells}"
            )));
        }
        Ok(Self {
            lambda,
            theta,
            sigma,
            n_shells,
            coupling,
        })
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn n_shells(&self) -> usize {
        self.n_shells
    }

    /// `λ_j = λ^j`.
    pub fn lambda_j(&self, j: usize) -> f64 {
        self.lambda.powi(j as i32)
    }

    /// `λ_j^θ` for `0 ≤ j ≤ N`.
    #[inline]
    pub fn coupling(&self, j: usize) -> f64 {
        self.coupling[j]
    }

    pub fn couplings(&self) -> &[f64] {
        &self.coupling
    }

    /// Same spectrum with a different noise amplitude.
    pub fn with_sigma(&self, sigma: f64) -> Result<Self> {
        Self::new(self.lambda, self.theta, sigma, self.n_shells)
    }

    pub fn with_shells(&self, n_shells: usize) -> Result<Self> {
        Self::build(self.lambda, self.theta, self.sigma, n_shells)
    }

    /// Diagonal Itô damping `(σ²/2)(λ_j^{2θ} + λ_{j-1}^{2θ})` for shell `j ≥ 1`.
    pub fn ito_damping(&self, j: usize) -> f64 {
        let hi = self.coupling[j];
        let lo = self.coupling[j - 1];
        0.5 * self.sigma * self.sigma * (hi * hi + lo * lo)
    }

    /// Largest diagonal damping rate, `2 max_j c_j ≈ σ² λ_N^{2θ}`; sets the explicit step limit.
    pub fn stiffness_rate(&self) -> f64 {
        let top = self.coupling[self.n_shells];
        self.sigma * self.sigma * top * top
    }

    /// Recommended explicit step `c / (σ² λ_N^{2θ})`.
    pub fn stable_dt(&self, c: f64) -> f64 {
        c / self.stiffness_rate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Coords {
    /// Velocity / magnetic amplitudes `(a_j, b_j)`.
    AB,
    /// Elsässer variables `P_j = a_j + b_j`, `M_j = a_j - b_j`.
    Elsasser,
}

/// Paired shell vectors in either coordinate system.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShellState {
    pub first: Vec<f64>,
    pub second: Vec<f64>,
    pub coords: Coords,
}

impl ShellState {
    pub fn new(first: Vec<f64>, second: Vec<f64>, coords: Coords) -> Result<Self> {
        if first.len() != second.len() {
            return Err(Error::Shape(format!(
                "component lengths differ: {} vs {}",
                first.len(),
                second.len()
            )));
        }
        if first.is_empty() {
            return Err(Error::Shape("state has no shells".into()));
        }
        if first.iter().chain(&second).any(|x| !x.is_finite()) {
            return Err(Error::InvalidParameter("state has non-finite entries".into()));
        }
        Ok(Self {
            first,
            second,
            coords,
        })
    }

    pub fn zeros(n: usize, coords: Coords) -> Self {
        Self {
            first: vec![0.0; n],
            second: vec![0.0; n],
            coords,
        }
    }

    pub fn ab(a: Vec<f64>, b: Vec<f64>) -> Result<Self> {
        Self::new(a, b, Coords::AB)
    }

    pub fn elsasser(p: Vec<f64>, m: Vec<f64>) -> Result<Self> {
        Self::new(p, m, Coords::Elsasser)
    }

    pub fn n_shells(&self) -> usize {
        self.first.len()
    }

    pub fn is_finite(&self) -> bool {
        self.first.iter().chain(&self.second).all(|x| x.is_finite())
    }

    pub fn max_abs(&self) -> f64 {
        self.first
            .iter()
            .chain(&self.second)
            .fold(0.0_f64, |acc, x| acc.max(x.abs()))
    }

    pub(crate) fn expect(&self, coords: Coords) -> Result<()> {
        if self.coords == coords {
            Ok(())
        } else {
            Err(Error::CoordinateMismatch {
                expected: coords,
                found: self.coords,
            })
        }
    }
}

/// `(a, b) ↦ (P, M) = (a + b, a - b)`.
pub fn to_elsasser(s: &ShellState) -> Result<ShellState> {
    s.expect(Coords::AB)?;
    let (p, m) = s
        .first
        .iter()
        .zip(&s.second)
        .map(|(a, b)| (a + b, a - b))
        .unzip();
    Ok(ShellState {
        first: p,
        second: m,
        coords: Coords::Elsasser,
    })
}

/// `(P, M) ↦ (a, b) = ((P + M)/2, (P - M)/2)`.
pub fn from_elsasser(s: &ShellState) -> Result<ShellState> {
    s.expect(Coords::Elsasser)?;
    let (a, b) = s
        .first
        .iter()
        .zip(&s.second)
        .map(|(p, m)| (0.5 * (p + m), 0.5 * (p - m)))
        .unzip();
    Ok(ShellState {
        first: a,
        second: b,
        coords: Coords::AB,
    })
}

fn sum_squares(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum()
}

/// Canonical energy `Υ = ½ Σ (P_j² + M_j²) = Σ (a_j² + b_j²)`.
pub fn energy(s: &ShellState) -> f64 {
    let total = sum_squares(&s.first) + sum_squares(&s.second);
    match s.coords {
        Coords::Elsasser => 0.5 * total,
        Coords::AB => total,
    }
}

/// Cross helicity `Σ a_j b_j = ¼ Σ (P_j² - M_j²)`.
pub fn cross_helicity(s: &ShellState) -> f64 {
    match s.coords {
        Coords::AB => s.first.iter().zip(&s.second).map(|(a, b)| a * b).sum(),
        Coords::Elsasser => 0.25 * (sum_squares(&s.first) - sum_squares(&s.second)),
    }
}

/// `Σ_j λ_j^{2θ} (first_j² + second_j²)` on the raw components.
pub fn h_norm_sq(s: &ShellState, p: &ModelParams) -> f64 {
    s.first
        .iter()
        .zip(&s.second)
        .enumerate()
        .map(|(i, (x, y))| {
            let w = p.lambda().powf(2.0 * p.theta() * (i + 1) as f64);
            w * (x * x + y * y)
        })
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params() -> ModelParams {
        ModelParams::new(2.0, 1.0, 1.0, 8).unwrap()
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(ModelParams::new(0.5, 1.0, 1.0, 8).is_err());
        assert!(ModelParams::new(2.0, 0.5, 1.0, 8).is_err());
        assert!(ModelParams::new(2.0, 1.0, 0.0, 8).is_err());
        assert!(ModelParams::new(2.0, 1.0, 1.0, 1).is_err());
        assert!(ModelParams::noiseless(2.0, 1.0, 4).is_ok());
    }

    #[test]
    fn lambda_sequence_is_geometric() {
        let p = params();
        assert_eq!(p.lambda_j(0), 1.0);
        assert_eq!(p.coupling(0), 1.0);
        for j in 1..=8 {
            assert!(p.coupling(j) > p.coupling(j - 1));
        }
        assert_eq!(p.coupling(3), 8.0);
    }

    #[test]
    fn elsasser_examples() {
        let z = ShellState::zeros(4, Coords::AB);
        let e = to_elsasser(&z).unwrap();
        assert!(e.first.iter().chain(&e.second).all(|&x| x == 0.0));

        let s = ShellState::ab(vec![1.0, 0.0, 0.0], vec![1.0, 0.0, 0.0]).unwrap();
        let e = to_elsasser(&s).unwrap();
        assert_eq!(e.first, vec![2.0, 0.0, 0.0]);
        assert_eq!(e.second, vec![0.0, 0.0, 0.0]);
        assert_eq!(from_elsasser(&e).unwrap(), s);
    }

    #[test]
    fn wrong_coordinates_are_rejected() {
        let s = ShellState::zeros(3, Coords::Elsasser);
        assert!(matches!(
            to_elsasser(&s),
            Err(Error::CoordinateMismatch { .. })
        ));
        let s = ShellState::zeros(3, Coords::AB);
        assert!(matches!(
            from_elsasser(&s),
            Err(Error::CoordinateMismatch { .. })
        ));
    }

    #[test]
    fn energy_and_helicity_examples() {
        let s = ShellState::elsasser(vec![1.0, 0.0], vec![1.0, 0.0]).unwrap();
        assert_eq!(energy(&s), 1.0);
        assert_eq!(energy(&ShellState::zeros(5, Coords::AB)), 0.0);
        assert_eq!(cross_helicity(&ShellState::zeros(5, Coords::AB)), 0.0);
        let ones = ShellState::ab(vec![1.0; 3], vec![1.0; 3]).unwrap();
        assert_eq!(cross_helicity(&ones), 3.0);
    }

    #[test]
    fn h_norm_single_shell() {
        let p = ModelParams::new(2.0, 1.0, 1.0, 4).unwrap();
        let s = ShellState::elsasser(vec![1.0, 0.0, 0.0, 0.0], vec![1.0, 0.0, 0.0, 0.0]).unwrap();
        assert_eq!(h_norm_sq(&s, &p), 8.0);
        assert_eq!(h_norm_sq(&ShellState::zeros(4, Coords::Elsasser), &p), 0.0);
    }

    #[test]
    fn state_shape_is_checked() {
        assert!(ShellState::ab(vec![1.0], vec![1.0, 2.0]).is_err());
        assert!(ShellState::ab(vec![f64::NAN], vec![1.0]).is_err());
    }
}
