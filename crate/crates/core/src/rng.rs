//! Per-path random streams and Brownian increments.
//!
//! Every path owns two xoshiro256++ streams, one per Brownian family, seeded
//! from `(master_seed, path_index)`. Draws within a stream are consumed strictly
//! in step order, so a path never depends on how the ensemble is scheduled.

use rand::{Rng, SeedableRng};
use rand_distr::StandardNormal;
use rand_xoshiro::Xoshiro256PlusPlus;

use crate::error::{Error, Result};
use crate::shell::ModelParams;

pub type PathRng = Xoshiro256PlusPlus;

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Stream for path `index` under `master_seed`.
pub fn path_rng(master_seed: u64, index: u64) -> PathRng {
    Xoshiro256PlusPlus::seed_from_u64(splitmix64(splitmix64(master_seed) ^ index))
}

/// Independent streams for the `W^p` and `W^m` families of one path.
#[derive(Debug, Clone)]
pub struct PathStreams {
    pub p: PathRng,
    pub m: PathRng,
}

pub fn path_streams(master_seed: u64, index: u64) -> PathStreams {
    PathStreams {
        p: path_rng(master_seed, 2 * index),
        m: path_rng(master_seed, 2 * index + 1),
    }
}

/// Brownian increments for one step; `dwp[i]` is the increment of `W^p_{i+1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseIncrements {
    pub dwp: Vec<f64>,
    pub dwm: Vec<f64>,
    pub dt: f64,
}

impl NoiseIncrements {
    pub fn zero(n: usize, dt: f64) -> Self {
        Self {
            dwp: vec![0.0; n],
            dwm: vec![0.0; n],
            dt,
        }
    }
}

#[inline]
pub(crate) fn fill_normals<R: Rng + ?Sized>(rng: &mut R, sqrt_dt: f64, out: &mut [f64]) {
    for x in out.iter_mut() {
        let z: f64 = rng.sample(StandardNormal);
        *x = sqrt_dt * z;
    }
}

/// `2N` independent `N(0, dt)` draws; `dwp` from the `p` stream, `dwm` from the `m` stream.
pub fn sample_noise(streams: &mut PathStreams, p: &ModelParams, dt: f64) -> Result<NoiseIncrements> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::InvalidParameter(format!("dt must be positive (got {dt})")));
    }
    let mut inc = NoiseIncrements::zero(p.n_shells(), dt);
    fill_normals(&mut streams.p, dt.sqrt(), &mut inc.dwp);
    fill_normals(&mut streams.m, dt.sqrt(), &mut inc.dwm);
    Ok(inc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::Moments;

    #[test]
    fn same_seed_same_draws() {
        let p = ModelParams::new(2.0, 1.0, 1.0, 8).unwrap();
        let a = sample_noise(&mut path_streams(42, 0), &p, 0.01).unwrap();
        let b = sample_noise(&mut path_streams(42, 0), &p, 0.01).unwrap();
        assert_eq!(a, b);
        let c = sample_noise(&mut path_streams(42, 1), &p, 0.01).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn increment_moments() {
        let p = ModelParams::new(2.0, 1.0, 1.0, 10).unwrap();
        let dt = 0.01;
        let mut rng = path_streams(7, 3);
        let mut mp = Moments::default();
        let mut mm = Moments::default();
        let mut cross = Moments::default();
        for _ in 0..50_000 {
            let inc = sample_noise(&mut rng, &p, dt).unwrap();
            for (a, b) in inc.dwp.iter().zip(&inc.dwm) {
                mp.push(*a);
                mm.push(*b);
                cross.push(a * b);
            }
        }
        let n = mp.count() as f64;
        assert!(mp.mean().abs() < 4.0 * (dt / n).sqrt());
        assert!((mp.variance() / dt - 1.0).abs() < 0.01);
        assert!((mm.variance() / dt - 1.0).abs() < 0.01);
        let rho = cross.mean() / dt;
        assert!(rho.abs() < 4.0 / n.sqrt());
    }

    #[test]
    fn rejects_bad_dt() {
        let p = ModelParams::new(2.0, 1.0, 1.0, 3).unwrap();
        assert!(sample_noise(&mut path_streams(1, 0), &p, 0.0).is_err());
    }
}
