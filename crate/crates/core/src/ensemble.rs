//! Parallel Monte Carlo ensembles with order-independent reduction.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::girsanov::{rn_weight, Direction};
use crate::rng::path_streams;
use crate::sde::{initial_elsasser, record_steps, step_count, PathRunner, Scheme, TrajectoryRecord};
use crate::shell::{energy, ModelParams, ShellState};
use crate::stats::{trapezoid, Estimate, Moments};

/// Paths per reduction chunk. Fixed so that results do not depend on the thread count.
const CHUNK: usize = 64;

#[derive(Debug, Clone)]
pub struct EnsembleConfig {
    pub scheme: Scheme,
    pub params: ModelParams,
    pub initial: ShellState,
    pub dt: f64,
    pub t_end: f64,
    pub n_paths: usize,
    pub master_seed: u64,
    pub record_stride: usize,
    /// Keep every sampled path in the result.
    pub keep_paths: bool,
    /// Accumulate measure-change integrals and report weights.
    pub track_weights: bool,
}

/// Ensemble statistics at one recorded time.
#[derive(Debug, Clone, Serialize)]
pub struct RecordSummary {
    pub t: f64,
    pub mean_p: Vec<Estimate>,
    pub mean_m: Vec<Estimate>,
    pub mean_p2: Vec<Estimate>,
    pub mean_m2: Vec<Estimate>,
    pub mean_p4: Vec<f64>,
    pub mean_m4: Vec<f64>,
    pub energy: Estimate,
    /// Paired change of energy since the previous recorded time.
    pub energy_drop: Estimate,
    /// Present when the ensemble tracks weights.
    pub weights: Option<WeightSummary>,
}

#[derive(Debug, Clone, Serialize)]
pub struct WeightSummary {
    /// Radon–Nikodym weight towards the other system.
    pub weight: Estimate,
    /// `E[weight · P_j²]`.
    pub weighted_p2: Vec<Estimate>,
    pub exp_qv1: Estimate,
    pub exp_qv2: Estimate,
    pub ess: f64,
    pub clipped: u64,
}

/// Time integrals of per-shell moments over the recorded grid.
#[derive(Debug, Clone, Serialize)]
pub struct ShellIntegrals {
    pub p2: Vec<f64>,
    pub m2: Vec<f64>,
    pub p4: Vec<f64>,
    pub m4: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct EnsembleResult {
    pub scheme: Scheme,
    pub n_paths: usize,
    pub master_seed: u64,
    pub direction: Direction,
    pub times: Vec<f64>,
    pub summaries: Vec<RecordSummary>,
    /// Largest energy seen on any path at any step.
    pub max_energy: f64,
    /// Largest per-step relative energy change over all paths.
    pub max_rel_energy_drift: f64,
    pub clip_count: u64,
    pub integrals: ShellIntegrals,
    #[serde(skip)]
    pub records: Vec<TrajectoryRecord>,
}

impl EnsembleResult {
    /// Index of the recorded time closest to `t`.
    pub fn index_of(&self, t: f64) -> Option<usize> {
        let (i, d) = self
            .times
            .iter()
            .enumerate()
            .map(|(i, s)| (i, (s - t).abs()))
            .min_by(|a, b| a.1.total_cmp(&b.1))?;
        (d <= 1e-9 * t.abs().max(1.0)).then_some(i)
    }

    pub fn at(&self, t: f64) -> Option<&RecordSummary> {
        self.index_of(t).map(|i| &self.summaries[i])
    }
}

#[derive(Clone)]
struct RecordAcc {
    p: Vec<Moments>,
    m: Vec<Moments>,
    p2: Vec<Moments>,
    m2: Vec<Moments>,
    p4: Vec<Moments>,
    m4: Vec<Moments>,
    wp2: Vec<Moments>,
    energy: Moments,
    drop: Moments,
    weight: Moments,
    exp_qv1: Moments,
    exp_qv2: Moments,
    w_sum: f64,
    w_sq: f64,
    clipped: u64,
}

impl RecordAcc {
    fn new(n: usize) -> Self {
        let v = vec![Moments::default(); n];
        Self {
            p: v.clone(),
            m: v.clone(),
            p2: v.clone(),
            m2: v.clone(),
            p4: v.clone(),
            m4: v.clone(),
            wp2: v,
            energy: Moments::default(),
            drop: Moments::default(),
            weight: Moments::default(),
            exp_qv1: Moments::default(),
            exp_qv2: Moments::default(),
            w_sum: 0.0,
            w_sq: 0.0,
            clipped: 0,
        }
    }

    fn merge(&mut self, o: &RecordAcc) {
        for (a, b) in [
            (&mut self.p, &o.p),
            (&mut self.m, &o.m),
            (&mut self.p2, &o.p2),
            (&mut self.m2, &o.m2),
            (&mut self.p4, &o.p4),
            (&mut self.m4, &o.m4),
            (&mut self.wp2, &o.wp2),
        ] {
            a.iter_mut().zip(b).for_each(|(x, y)| x.merge(y));
        }
        self.energy.merge(&o.energy);
        self.drop.merge(&o.drop);
        self.weight.merge(&o.weight);
        self.exp_qv1.merge(&o.exp_qv1);
        self.exp_qv2.merge(&o.exp_qv2);
        self.w_sum += o.w_sum;
        self.w_sq += o.w_sq;
        self.clipped += o.clipped;
    }

    fn summary(&self, t: f64, weights: bool) -> RecordSummary {
        let est = |v: &[Moments]| v.iter().map(Moments::estimate).collect();
        let mean = |v: &[Moments]| v.iter().map(Moments::mean).collect();
        RecordSummary {
            t,
            mean_p: est(&self.p),
            mean_m: est(&self.m),
            mean_p2: est(&self.p2),
            mean_m2: est(&self.m2),
            mean_p4: mean(&self.p4),
            mean_m4: mean(&self.m4),
            energy: self.energy.estimate(),
            energy_drop: self.drop.estimate(),
            weights: weights.then(|| WeightSummary {
                weight: self.weight.estimate(),
                weighted_p2: est(&self.wp2),
                exp_qv1: self.exp_qv1.estimate(),
                exp_qv2: self.exp_qv2.estimate(),
                ess: if self.w_sq > 0.0 {
                    self.w_sum * self.w_sum / self.w_sq
                } else {
                    0.0
                },
                clipped: self.clipped,
            }),
        }
    }
}

struct ChunkOut {
    recs: Vec<RecordAcc>,
    max_energy: f64,
    max_drift: f64,
    paths: Vec<TrajectoryRecord>,
    errors: Vec<Error>,
}

fn run_chunk(cfg: &EnsembleConfig, s0: &ShellState, n_steps: usize, record: &[usize], range: std::ops::Range<usize>) -> ChunkOut {
    let n = cfg.params.n_shells();
    let direction = Direction::from_scheme(cfg.scheme);
    let mut out = ChunkOut {
        recs: vec![RecordAcc::new(n); record.len()],
        max_energy: 0.0,
        max_drift: 0.0,
        paths: Vec::new(),
        errors: Vec::new(),
    };
    let mut runner = PathRunner::new(cfg.scheme, &cfg.params, cfg.dt, n_steps, record.to_vec(), cfg.track_weights);
    let weights = cfg.track_weights;
    for path in range {
        let mut rng = path_streams(cfg.master_seed, path as u64);
        let mut prev_energy = 0.0;
        let mut rec = cfg
            .keep_paths
            .then(|| TrajectoryRecord::with_capacity(record.len(), cfg.master_seed, path as u64, cfg.scheme));
        let recs = &mut out.recs;
        let mut max_energy = out.max_energy;
        let res = runner.run(s0, &mut rng, |k, p, m, acc| {
            let r = &mut recs[k];
            let mut e = 0.0;
            for i in 0..n {
                let (x, y) = (p[i], m[i]);
                let (x2, y2) = (x * x, y * y);
                r.p[i].push(x);
                r.m[i].push(y);
                r.p2[i].push(x2);
                r.m2[i].push(y2);
                r.p4[i].push(x2 * x2);
                r.m4[i].push(y2 * y2);
                e += x2 + y2;
            }
            let e = 0.5 * e;
            r.energy.push(e);
            r.drop.push(if k == 0 { 0.0 } else { e - prev_energy });
            prev_energy = e;
            max_energy = max_energy.max(e);
            if weights {
                let w = rn_weight(acc, direction);
                r.weight.push(w.value);
                r.w_sum += w.value;
                r.w_sq += w.value * w.value;
                r.clipped += w.clipped as u64;
                for i in 0..n {
                    r.wp2[i].push(w.value * p[i] * p[i]);
                }
                r.exp_qv1.push(acc.qv1.exp());
                r.exp_qv2.push(acc.qv2.exp());
            }
            if let Some(rec) = rec.as_mut() {
                rec.push(record[k] as f64 * cfg.dt, p, m, acc);
            }
        });
        out.max_energy = max_energy;
        match res {
            Ok(d) => {
                out.max_drift = out.max_drift.max(d.max_rel_energy_drift);
                out.max_energy = out.max_energy.max(d.max_energy);
                if let Some(rec) = rec {
                    out.paths.push(rec);
                }
            }
            Err(Error::BlowUp { step, detail, .. }) => out.errors.push(Error::BlowUp {
                step,
                path: Some(path),
                detail,
            }),
            Err(e) => out.errors.push(e),
        }
    }
    out
}

/// Run `n_paths` independent paths; path `i` uses the stream `(master_seed, i)`.
pub fn run_ensemble(cfg: &EnsembleConfig) -> Result<EnsembleResult> {
    if cfg.n_paths == 0 {
        return Err(Error::InvalidParameter("n_paths must be at least 1".into()));
    }
    if cfg.params.sigma() == 0.0 {
        return Err(Error::InvalidParameter("ensembles need sigma != 0".into()));
    }
    let s0 = initial_elsasser(&cfg.initial, &cfg.params)?;
    let n_steps = step_count(cfg.dt, cfg.t_end)?;
    let record = record_steps(n_steps, cfg.record_stride);
    let n_chunks = cfg.n_paths.div_ceil(CHUNK);
    let chunks: Vec<ChunkOut> = (0..n_chunks)
        .into_par_iter()
        .map(|c| {
            let range = c * CHUNK..((c + 1) * CHUNK).min(cfg.n_paths);
            run_chunk(cfg, &s0, n_steps, &record, range)
        })
        .collect();

    let n = cfg.params.n_shells();
    let mut recs = vec![RecordAcc::new(n); record.len()];
    let mut max_energy: f64 = 0.0;
    let mut max_drift: f64 = 0.0;
    let mut records = Vec::new();
    let mut errors = Vec::new();
    for c in chunks {
        recs.iter_mut().zip(&c.recs).for_each(|(a, b)| a.merge(b));
        max_energy = max_energy.max(c.max_energy);
        max_drift = max_drift.max(c.max_drift);
        records.extend(c.paths);
        errors.extend(c.errors);
    }
    if !errors.is_empty() {
        let count = errors.len();
        return Err(Error::EnsembleBlowUp {
            count,
            first: Box::new(errors.swap_remove(0)),
        });
    }

    let times: Vec<f64> = record.iter().map(|&k| k as f64 * cfg.dt).collect();
    let summaries: Vec<RecordSummary> = recs.iter().zip(&times).map(|(r, &t)| r.summary(t, cfg.track_weights)).collect();
    let integral = |f: &dyn Fn(&RecordSummary, usize) -> f64| -> Vec<f64> {
        (0..n)
            .map(|j| {
                let y: Vec<f64> = summaries.iter().map(|s| f(s, j)).collect();
                trapezoid(&times, &y)
            })
            .collect()
    };
    let integrals = ShellIntegrals {
        p2: integral(&|s, j| s.mean_p2[j].mean),
        m2: integral(&|s, j| s.mean_m2[j].mean),
        p4: integral(&|s, j| s.mean_p4[j]),
        m4: integral(&|s, j| s.mean_m4[j]),
    };
    let clip_count = summaries
        .iter()
        .filter_map(|s| s.weights.as_ref())
        .map(|w| w.clipped)
        .sum();
    Ok(EnsembleResult {
        scheme: cfg.scheme,
        n_paths: cfg.n_paths,
        master_seed: cfg.master_seed,
        direction: Direction::from_scheme(cfg.scheme),
        times,
        summaries,
        max_energy,
        max_rel_energy_drift: max_drift,
        clip_count,
        integrals,
        records,
    })
}

/// Energy of the initial state, in either coordinate system.
pub fn initial_energy(cfg: &EnsembleConfig) -> f64 {
    energy(&cfg.initial)
}
