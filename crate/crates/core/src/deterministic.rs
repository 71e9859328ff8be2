//! Deterministic dyadic vector fields and a fixed-step RK4 integrator.

use crate::error::{Error, Result};
use crate::shell::{Coords, ModelParams, ShellState};

/// Any component above this magnitude is treated as blow-up.
pub const BLOW_UP_THRESHOLD: f64 = 1e12;

#[inline]
fn at(v: &[f64], j: usize) -> f64 {
    // shells are 1-based; 0 and N+1 are the zero boundary
    if j == 0 || j > v.len() {
        0.0
    } else {
        v[j - 1]
    }
}

/// Elsässer drift `dP_j = λ_{j-1}^θ M_{j-1}P_{j-1} - λ_j^θ M_j P_{j+1}`,
/// `dM_j = λ_{j-1}^θ M_{j-1}P_{j-1} - λ_j^θ P_j M_{j+1}`.
pub(crate) fn pm_drift_into(k: &[f64], p: &[f64], m: &[f64], dp: &mut [f64], dm: &mut [f64]) {
    let n = p.len();
    for j in 1..=n {
        let back = k[j - 1] * at(m, j - 1) * at(p, j - 1);
        dp[j - 1] = back - k[j] * m[j - 1] * at(p, j + 1);
        dm[j - 1] = back - k[j] * p[j - 1] * at(m, j + 1);
    }
}

pub(crate) fn ab_drift_into(k: &[f64], a: &[f64], b: &[f64], da: &mut [f64], db: &mut [f64]) {
    let n = a.len();
    for j in 1..=n {
        let (aj, bj) = (a[j - 1], b[j - 1]);
        let (a_up, b_up) = (at(a, j + 1), at(b, j + 1));
        let (a_dn, b_dn) = (at(a, j - 1), at(b, j - 1));
        da[j - 1] = -(k[j] * aj * a_up - k[j - 1] * a_dn * a_dn)
            + (k[j] * bj * b_up - k[j - 1] * b_dn * b_dn);
        db[j - 1] = -(k[j] * aj * b_up - k[j] * bj * a_up);
    }
}

fn check_len(s: &ShellState, p: &ModelParams) -> Result<()> {
    if s.n_shells() != p.n_shells() {
        return Err(Error::Shape(format!(
            "state has {} shells, parameters expect {}",
            s.n_shells(),
            p.n_shells()
        )));
    }
    Ok(())
}

/// Right-hand side of the velocity/magnetic system.
pub fn drift_ab(s: &ShellState, p: &ModelParams) -> Result<ShellState> {
    s.expect(Coords::AB)?;
    check_len(s, p)?;
    let mut out = ShellState::zeros(s.n_shells(), Coords::AB);
    ab_drift_into(p.couplings(), &s.first, &s.second, &mut out.first, &mut out.second);
    Ok(out)
}

/// Right-hand side of the Elsässer system.
pub fn drift_pm(s: &ShellState, p: &ModelParams) -> Result<ShellState> {
    s.expect(Coords::Elsasser)?;
    check_len(s, p)?;
    let mut out = ShellState::zeros(s.n_shells(), Coords::Elsasser);
    pm_drift_into(p.couplings(), &s.first, &s.second, &mut out.first, &mut out.second);
    Ok(out)
}

fn drift_into(coords: Coords, k: &[f64], x: &[f64], y: &[f64], dx: &mut [f64], dy: &mut [f64]) {
    match coords {
        Coords::AB => ab_drift_into(k, x, y, dx, dy),
        Coords::Elsasser => pm_drift_into(k, x, y, dx, dy),
    }
}

pub(crate) fn check_blow_up(x: &[f64], y: &[f64], step: usize) -> Result<()> {
    if let Some(v) = x
        .iter()
        .chain(y)
        .find(|v| !v.is_finite() || v.abs() > BLOW_UP_THRESHOLD)
    {
        return Err(Error::BlowUp {
            step,
            path: None,
            detail: format!("component {v:e} out of range"),
        });
    }
    Ok(())
}

/// Reusable RK4 stepper for either coordinate system.
pub struct Rk4 {
    coords: Coords,
    k: Vec<f64>,
    stage: [Vec<f64>; 8],
    tmp: [Vec<f64>; 2],
}

impl Rk4 {
    pub fn new(p: &ModelParams, coords: Coords) -> Self {
        let n = p.n_shells();
        Self {
            coords,
            k: p.couplings().to_vec(),
            stage: std::array::from_fn(|_| vec![0.0; n]),
            tmp: [vec![0.0; n], vec![0.0; n]],
        }
    }

    pub fn step(&mut self, x: &mut [f64], y: &mut [f64], dt: f64) {
        let n = x.len();
        let [k1x, k1y, k2x, k2y, k3x, k3y, k4x, k4y] = &mut self.stage;
        let [tx, ty] = &mut self.tmp;
        drift_into(self.coords, &self.k, x, y, k1x, k1y);
        for i in 0..n {
            tx[i] = x[i] + 0.5 * dt * k1x[i];
            ty[i] = y[i] + 0.5 * dt * k1y[i];
        }
        drift_into(self.coords, &self.k, tx, ty, k2x, k2y);
        for i in 0..n {
            tx[i] = x[i] + 0.5 * dt * k2x[i];
            ty[i] = y[i] + 0.5 * dt * k2y[i];
        }
        drift_into(self.coords, &self.k, tx, ty, k3x, k3y);
        for i in 0..n {
            tx[i] = x[i] + dt * k3x[i];
            ty[i] = y[i] + dt * k3y[i];
        }
        drift_into(self.coords, &self.k, tx, ty, k4x, k4y);
        let w = dt / 6.0;
        for i in 0..n {
            x[i] += w * (k1x[i] + 2.0 * k2x[i] + 2.0 * k3x[i] + k4x[i]);
            y[i] += w * (k1y[i] + 2.0 * k2y[i] + 2.0 * k3y[i] + k4y[i]);
        }
    }
}

/// Fixed-step classical RK4 on the drift matching `s0.coords`.
///
/// Returns the states after every `stride` steps, starting with `s0` and always
/// ending with the final state. For stability keep `dt·λ_N^θ·max|s0|` below about one;
/// this is not enforced.
pub fn rk4_integrate(
    s0: &ShellState,
    p: &ModelParams,
    dt: f64,
    steps: usize,
    stride: usize,
) -> Result<Vec<ShellState>> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::InvalidParameter(format!("dt must be positive (got {dt})")));
    }
    check_len(s0, p)?;
    let stride = stride.max(1);
    let mut rk = Rk4::new(p, s0.coords);
    let mut x = s0.first.clone();
    let mut y = s0.second.clone();
    let mut out = vec![s0.clone()];
    for step in 1..=steps {
        rk.step(&mut x, &mut y, dt);
        check_blow_up(&x, &y, step)?;
        if step % stride == 0 || step == steps {
            out.push(ShellState {
                first: x.clone(),
                second: y.clone(),
                coords: s0.coords,
            });
        }
    }
    Ok(out)
}

/// One explicit Euler step of the Elsässer system.
pub fn euler_step_pm(s: &ShellState, p: &ModelParams, dt: f64) -> Result<ShellState> {
    let d = drift_pm(s, p)?;
    let step = |x: &[f64], dx: &[f64]| x.iter().zip(dx).map(|(a, b)| a + dt * b).collect();
    Ok(ShellState {
        first: step(&s.first, &d.first),
        second: step(&s.second, &d.second),
        coords: Coords::Elsasser,
    })
}

/// One Heun (explicit trapezoid) step of the Elsässer system.
pub fn heun_step_pm(s: &ShellState, p: &ModelParams, dt: f64) -> Result<ShellState> {
    let d0 = drift_pm(s, p)?;
    let pred = euler_step_pm(s, p, dt)?;
    let d1 = drift_pm(&pred, p)?;
    let combine = |x: &[f64], a: &[f64], b: &[f64]| {
        x.iter()
            .zip(a.iter().zip(b))
            .map(|(x, (a, b))| x + 0.5 * dt * (a + b))
            .collect()
    };
    Ok(ShellState {
        first: combine(&s.first, &d0.first, &d1.first),
        second: combine(&s.second, &d0.second, &d1.second),
        coords: Coords::Elsasser,
    })
}
