//! Subcommand orchestration: run a configured job and write its artifacts.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::birth_death::{run_chain_ensemble, BdEnsembleConfig};
use crate::config::RunConfig;
use crate::deterministic::rk4_integrate;
use crate::ensemble::{initial_energy, run_ensemble, EnsembleConfig, EnsembleResult};
use crate::error::{Error, Result};
use crate::forward::{
    decay_report, ledger_defect, solve_forward, spectral_quantities, EnergyProfile, ForwardOptions, SeriesValue,
};
use crate::girsanov::integrability_report;
use crate::output::{fmt_f64, CsvTable, JsonLines, Provenance};
use crate::sde::{step_count, Scheme};
use crate::shell::{cross_helicity, energy};
use crate::verify::{run_all, CriterionOutcome, VerifySettings};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Simulate,
    BdSample,
    Forward,
    GirsanovCheck,
    Quantities,
    Verify,
}

impl Command {
    pub const ALL: [Command; 6] = [
        Command::Simulate,
        Command::BdSample,
        Command::Forward,
        Command::GirsanovCheck,
        Command::Quantities,
        Command::Verify,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::BdSample => "bd-sample",
            Command::Forward => "forward",
            Command::GirsanovCheck => "girsanov-check",
            Command::Quantities => "quantities",
            Command::Verify => "verify",
        }
    }
}

/// What a command produced.
#[derive(Debug, Default)]
pub struct CommandOutput {
    /// Human-readable report for stdout.
    pub report: String,
    pub artifacts: Vec<PathBuf>,
    /// Set by `verify`; empty for other commands.
    pub criteria: Vec<CriterionOutcome>,
}

impl CommandOutput {
    pub fn first_failure(&self) -> Option<&CriterionOutcome> {
        self.criteria.iter().find(|c| !c.passed)
    }
}

struct Artifacts<'a> {
    dir: &'a Path,
    prov: Provenance,
    out: CommandOutput,
}

impl<'a> Artifacts<'a> {
    fn new(dir: &'a Path, cfg: &RunConfig) -> Result<Self> {
        std::fs::create_dir_all(dir)?;
        let mut a = Self {
            dir,
            prov: Provenance::new(cfg),
            out: CommandOutput::default(),
        };
        let path = dir.join("config.toml");
        let text = format!("{}\n{}", a.prov.comment_line(), cfg.resolved_toml());
        std::fs::write(&path, text)?;
        a.out.artifacts.push(path);
        Ok(a)
    }

    fn csv(&mut self, name: &str, table: &CsvTable) -> Result<()> {
        let path = self.dir.join(name);
        table.write(&path, &self.prov)?;
        self.out.artifacts.push(path);
        Ok(())
    }

    fn jsonl(&mut self, name: &str, cfg: &RunConfig) -> Result<JsonLines> {
        let path = self.dir.join(name);
        let mut j = JsonLines::create(&path)?;
        j.write("provenance", &self.prov)?;
        j.write("config", cfg)?;
        self.out.artifacts.push(path);
        Ok(j)
    }
}

/// Validate `cfg`, run `cmd` and write its artifacts under `out_dir`.
pub fn run_command(cmd: Command, cfg: &RunConfig, out_dir: &Path) -> Result<CommandOutput> {
    cfg.validate()?;
    let mut a = Artifacts::new(out_dir, cfg)?;
    match cmd {
        Command::Simulate => simulate(cfg, &mut a)?,
        Command::BdSample => bd_sample(cfg, &mut a)?,
        Command::Forward => forward(cfg, &mut a)?,
        Command::GirsanovCheck => girsanov_check(cfg, &mut a)?,
        Command::Quantities => quantities(cfg, &mut a)?,
        Command::Verify => verify(cfg, &mut a, |_| {})?,
    }
    Ok(a.out)
}

/// `verify` with a callback after each criterion.
pub fn run_verify(cfg: &RunConfig, out_dir: &Path, progress: impl FnMut(&CriterionOutcome)) -> Result<CommandOutput> {
    cfg.validate()?;
    let mut a = Artifacts::new(out_dir, cfg)?;
    verify(cfg, &mut a, progress)?;
    Ok(a.out)
}

fn shell_columns(prefix: &str, n: usize) -> impl Iterator<Item = String> + '_ {
    (1..=n).map(move |j| format!("{prefix}_{j}"))
}

fn simulate(cfg: &RunConfig, a: &mut Artifacts) -> Result<()> {
    let n = cfg.model.n_shells;
    match cfg.run.scheme.stochastic() {
        None => {
            let p = cfg.params()?;
            let s0 = cfg.initial_state()?;
            let steps = step_count(cfg.run.dt, cfg.run.t_end)?;
            let states = rk4_integrate(&s0, &p, cfg.run.dt, steps, cfg.run.record_stride)?;
            let (x, y) = match s0.coords {
                crate::shell::Coords::AB => ("a", "b"),
                crate::shell::Coords::Elsasser => ("p", "m"),
            };
            let mut t = CsvTable::new(
                ["t".to_string(), "energy".into(), "cross_helicity".into()]
                    .into_iter()
                    .chain(shell_columns(x, n))
                    .chain(shell_columns(y, n)),
            );
            let stride = cfg.run.record_stride.max(1);
            for (k, s) in states.iter().enumerate() {
                let step = (k * stride).min(steps);
                let mut row = vec![step as f64 * cfg.run.dt, energy(s), cross_helicity(s)];
                row.extend(&s.first);
                row.extend(&s.second);
                t.push_f64(&row);
            }
            a.csv("series.csv", &t)?;
            let e0 = energy(&s0);
            let drift = states.iter().map(|s| (energy(s) - e0).abs()).fold(0.0, f64::max);
            let mut j = a.jsonl("summary.jsonl", cfg)?;
            #[derive(Serialize)]
            struct Det {
                initial_energy: f64,
                max_energy_drift: f64,
                records: usize,
            }
            j.write(
                "deterministic",
                &Det {
                    initial_energy: e0,
                    max_energy_drift: drift,
                    records: states.len(),
                },
            )?;
            j.finish()?;
            let _ = writeln!(
                a.out.report,
                "deterministic RK4: {} records, energy {} -> drift {}",
                states.len(),
                fmt_f64(e0),
                fmt_f64(drift)
            );
        }
        Some(scheme) => {
            let limit = cfg.noisy_params()?.stable_dt(STIFFNESS_C);
            if cfg.run.dt > limit {
                let _ = writeln!(
                    a.out.report,
                    "warning: dt = {} exceeds the explicit step bound {} for this truncation",
                    fmt_f64(cfg.run.dt),
                    fmt_f64(limit)
                );
            }
            let res = run_ensemble(&ensemble_config(cfg, scheme, cfg.run.t_end)?)?;
            a.csv("series.csv", &series_table(&res, n))?;
            let mut j = a.jsonl("summary.jsonl", cfg)?;
            for s in &res.summaries {
                j.write("record", s)?;
            }
            #[derive(Serialize)]
            struct Totals<'r> {
                scheme: Scheme,
                n_paths: usize,
                max_energy: f64,
                max_rel_energy_drift: f64,
                clip_count: u64,
                integrals: &'r crate::ensemble::ShellIntegrals,
            }
            j.write(
                "ensemble",
                &Totals {
                    scheme,
                    n_paths: res.n_paths,
                    max_energy: res.max_energy,
                    max_rel_energy_drift: res.max_rel_energy_drift,
                    clip_count: res.clip_count,
                    integrals: &res.integrals,
                },
            )?;
            j.finish()?;
            let last = res.summaries.last().expect("at least the initial record");
            let _ = writeln!(
                a.out.report,
                "{} ensemble: {} paths, {} records, E[energy]({}) = {} ± {}",
                scheme.name(),
                res.n_paths,
                res.summaries.len(),
                fmt_f64(last.t),
                fmt_f64(last.energy.mean),
                fmt_f64(last.energy.se)
            );
        }
    }
    Ok(())
}

/// Safety factor in the recommended explicit step `c/(σ²λ_N^{2θ})`.
pub const STIFFNESS_C: f64 = 0.1;

fn ensemble_config(cfg: &RunConfig, scheme: Scheme, t_end: f64) -> Result<EnsembleConfig> {
    Ok(EnsembleConfig {
        scheme,
        params: cfg.noisy_params()?,
        initial: cfg.initial_state()?,
        dt: cfg.run.dt,
        t_end,
        n_paths: cfg.run.n_paths,
        master_seed: cfg.run.master_seed,
        record_stride: cfg.run.record_stride,
        keep_paths: false,
        track_weights: cfg.run.track_weights,
    })
}

fn series_table(res: &EnsembleResult, n: usize) -> CsvTable {
    let mut t = CsvTable::new(
        ["t", "energy_mean", "energy_se", "energy_drop_mean", "energy_drop_se"]
            .into_iter()
            .map(String::from)
            .chain(shell_columns("p2_mean", n))
            .chain(shell_columns("p2_se", n))
            .chain(shell_columns("m2_mean", n))
            .chain(shell_columns("m2_se", n)),
    );
    for s in &res.summaries {
        let mut row = vec![s.t, s.energy.mean, s.energy.se, s.energy_drop.mean, s.energy_drop.se];
        row.extend(s.mean_p2.iter().map(|e| e.mean));
        row.extend(s.mean_p2.iter().map(|e| e.se));
        row.extend(s.mean_m2.iter().map(|e| e.mean));
        row.extend(s.mean_m2.iter().map(|e| e.se));
        t.push_f64(&row);
    }
    t
}

fn bd_sample(cfg: &RunConfig, a: &mut Artifacts) -> Result<()> {
    let bd = BdEnsembleConfig {
        rates: cfg.rates()?,
        initial: cfg.bd.initial_state,
        limits: cfg.chain_limits(),
        n_paths: cfg.run.n_paths,
        master_seed: cfg.run.master_seed,
        hist_times: cfg.bd.hist_times.clone(),
        n_report: cfg.bd.n_report,
    };
    let s = run_chain_ensemble(&bd)?;
    let mut t = CsvTable::new(["t", "state", "count", "fraction"]);
    for h in &s.histograms {
        for (j, &c) in h.counts.iter().enumerate() {
            t.push(vec![
                fmt_f64(h.t),
                j.to_string(),
                c.to_string(),
                fmt_f64(c as f64 / s.n_paths as f64),
            ]);
        }
        for (label, c) in [("exploded", h.exploded), ("censored", h.censored)] {
            t.push(vec![fmt_f64(h.t), label.into(), c.to_string(), fmt_f64(c as f64 / s.n_paths as f64)]);
        }
    }
    a.csv("histogram.csv", &t)?;
    let mut j = a.jsonl("summary.jsonl", cfg)?;
    j.write("bd_summary", &s)?;
    j.finish()?;
    let r = &mut a.out.report;
    let _ = writeln!(
        r,
        "{} chains ({:?} boundary): absorbed {}, exploded {}, censored {}",
        s.n_paths, s.boundary, s.absorbed, s.exploded, s.censored
    );
    let _ = writeln!(
        r,
        "explosion time mean {} ± {}",
        fmt_f64(s.explosion_time.mean),
        fmt_f64(s.explosion_time.se)
    );
    for o in &s.occupation {
        let _ = writeln!(
            r,
            "occupation of {}: {} ± {} (target {})",
            o.n,
            fmt_f64(o.mean.mean),
            fmt_f64(o.mean.se),
            fmt_f64(o.target_mean)
        );
    }
    for w in &s.warnings {
        let _ = writeln!(r, "warning: {w}");
    }
    Ok(())
}

fn forward(cfg: &RunConfig, a: &mut Artifacts) -> Result<()> {
    let f = &cfg.forward;
    let p = cfg.noisy_params()?.with_shells(f.n_shells)?;
    let rates = crate::birth_death::BDRates::new(&p);
    let s0 = crate::config::initial_state(&cfg.initial, f.n_shells)?;
    let e0 = EnergyProfile::from_state(&s0);
    let out = solve_forward(
        &e0,
        &rates,
        &ForwardOptions {
            method: f.method,
            boundary: f.boundary,
            dt: f.dt,
            t_end: f.t_end,
            record_stride: f.record_stride,
        },
    )?;
    let mut t = CsvTable::new(
        std::iter::once("t".to_string())
            .chain(shell_columns("e", f.n_shells))
            .chain(["mass", "bottom_leak", "top_leak"].map(String::from)),
    );
    for pr in &out {
        let mut row = vec![pr.t];
        row.extend(&pr.e);
        row.extend([pr.mass(), pr.leaked_bottom, pr.leaked_top]);
        t.push_f64(&row);
    }
    a.csv("profile.csv", &t)?;
    let q = spectral_quantities(&p, cfg.report.series_tol)?;
    let [w0, w1] = cfg.report.fit_window;
    let decay = decay_report(&out, &p, &q, None, (w0, w1));
    let defect = ledger_defect(&out);
    let mut j = a.jsonl("summary.jsonl", cfg)?;
    #[derive(Serialize)]
    struct Ledger {
        ledger_defect_rate: f64,
        final_mass: f64,
        bottom_leak: f64,
        top_leak: f64,
    }
    let last = out.last().expect("initial profile");
    j.write(
        "ledger",
        &Ledger {
            ledger_defect_rate: defect,
            final_mass: last.mass(),
            bottom_leak: last.leaked_bottom,
            top_leak: last.leaked_top,
        },
    )?;
    j.write("decay", &decay)?;
    j.finish()?;
    let _ = writeln!(
        a.out.report,
        "forward {:?} ({:?}), N = {}: mass({}) = {}, ledger defect rate {}",
        f.method,
        f.boundary,
        f.n_shells,
        fmt_f64(last.t),
        fmt_f64(last.mass()),
        fmt_f64(defect)
    );
    if let Some(fit) = decay.forward_fit {
        let _ = writeln!(
            a.out.report,
            "tail log-slope {} ± {} (bound {})",
            fmt_f64(fit.slope),
            fmt_f64(fit.slope_se),
            fmt_f64(decay.forward_bound)
        );
    }
    Ok(())
}

fn girsanov_check(cfg: &RunConfig, a: &mut Artifacts) -> Result<()> {
    let n = cfg.model.n_shells;
    let lin_cfg = ensemble_config(cfg, Scheme::LinearEM, cfg.run.t_end)?;
    let lin_cfg = EnsembleConfig {
        track_weights: true,
        ..lin_cfg
    };
    let lin = run_ensemble(&lin_cfg)?;
    let nl = run_ensemble(&ensemble_config(cfg, Scheme::ItoEM, cfg.run.t_end)?)?;
    let mut t = CsvTable::new(
        ["t", "weight_mean", "weight_se", "ess", "clipped"]
            .into_iter()
            .map(String::from)
            .chain(shell_columns("reweighted_p2_mean", n))
            .chain(shell_columns("reweighted_p2_se", n))
            .chain(shell_columns("direct_p2_mean", n))
            .chain(shell_columns("direct_p2_se", n)),
    );
    let mut worst_z: f64 = 0.0;
    for (ls, ns) in lin.summaries.iter().zip(&nl.summaries) {
        let w = ls
            .weights
            .as_ref()
            .ok_or_else(|| Error::Shape("linear ensemble has no weights".into()))?;
        let mut row = vec![ls.t, w.weight.mean, w.weight.se, w.ess, w.clipped as f64];
        row.extend(w.weighted_p2.iter().map(|e| e.mean));
        row.extend(w.weighted_p2.iter().map(|e| e.se));
        row.extend(ns.mean_p2.iter().map(|e| e.mean));
        row.extend(ns.mean_p2.iter().map(|e| e.se));
        t.push_f64(&row);
        for (r, d) in w.weighted_p2.iter().zip(&ns.mean_p2) {
            let z = r.minus(d).z_score(0.0);
            if z.is_finite() {
                worst_z = worst_z.max(z);
            }
        }
    }
    a.csv("reweighting.csv", &t)?;
    let p = cfg.noisy_params()?;
    let integ = integrability_report(&lin, &p, initial_energy(&lin_cfg))?;
    let q = spectral_quantities(&p, cfg.report.series_tol)?;
    let [w0, w1] = cfg.report.fit_window;
    let decay = decay_report(&[], &p, &q, Some(&nl), (w0, w1));
    let mut j = a.jsonl("summary.jsonl", cfg)?;
    j.write("integrability", &integ)?;
    j.write("decay", &decay)?;
    j.finish()?;
    let r = &mut a.out.report;
    let last = lin.summaries.last().and_then(|s| s.weights.as_ref());
    if let Some(w) = last {
        let _ = writeln!(
            r,
            "mean weight at t_end {} ± {}, ESS {}, clipped {}",
            fmt_f64(w.weight.mean),
            fmt_f64(w.weight.se),
            fmt_f64(w.ess),
            w.clipped
        );
    }
    let _ = writeln!(r, "worst reweighted vs direct E[P_j^2] gap: {worst_z:.2} combined SE");
    let _ = writeln!(
        r,
        "initial energy {} vs threshold {}: equivalence condition {}",
        fmt_f64(integ.initial_energy),
        fmt_f64(integ.energy_threshold),
        if integ.equivalence_condition { "holds" } else { "fails" }
    );
    Ok(())
}

fn series_text(v: &SeriesValue) -> String {
    match v {
        SeriesValue::Finite { value } => format!("{value:.6}"),
        SeriesValue::Divergent { .. } => "divergent".into(),
    }
}

fn quantities(cfg: &RunConfig, a: &mut Artifacts) -> Result<()> {
    let p = cfg.noisy_params()?;
    let q = spectral_quantities(&p, cfg.report.series_tol)?;
    let mut rows: Vec<(String, String)> = vec![
        ("x".into(), format!("{:.6}", q.x)),
        ("r_inf".into(), format!("{:.6}", q.r_inf)),
        ("explosion_mean".into(), format!("{:.6}", q.explosion_mean)),
        ("R".into(), series_text(&q.big_r)),
        ("R_nested".into(), series_text(&q.big_r_nested)),
        ("S".into(), series_text(&q.big_s)),
        ("A".into(), format!("{:.6}", q.a)),
        ("alpha".into(), format!("{:.6}", q.alpha)),
        ("alpha_closed".into(), format!("{:.6}", q.alpha_closed)),
    ];
    for (n, r) in q.r.iter().enumerate() {
        rows.push((format!("r_{}", n + 1), format!("{r:.6}")));
    }
    let width = rows.iter().map(|r| r.0.len()).max().unwrap_or(0);
    for (k, v) in &rows {
        let _ = writeln!(a.out.report, "{k:<width$}  {v}");
    }
    let mut t = CsvTable::new(["quantity", "value"]);
    let value = |v: &SeriesValue| v.value().map(fmt_f64).unwrap_or_else(|| "divergent".into());
    let mut exact = vec![
        ("x".to_string(), fmt_f64(q.x)),
        ("r_inf".into(), fmt_f64(q.r_inf)),
        ("explosion_mean".into(), fmt_f64(q.explosion_mean)),
        ("R".into(), value(&q.big_r)),
        ("R_nested".into(), value(&q.big_r_nested)),
        ("S".into(), value(&q.big_s)),
        ("A".into(), fmt_f64(q.a)),
        ("alpha".into(), fmt_f64(q.alpha)),
        ("alpha_closed".into(), fmt_f64(q.alpha_closed)),
    ];
    for (n, r) in q.r.iter().enumerate() {
        exact.push((format!("r_{}", n + 1), fmt_f64(*r)));
    }
    for (k, v) in exact {
        t.push(vec![k, v]);
    }
    a.csv("quantities.csv", &t)?;
    let mut j = a.jsonl("summary.jsonl", cfg)?;
    j.write("quantities", &q)?;
    j.finish()?;
    Ok(())
}

fn verify(cfg: &RunConfig, a: &mut Artifacts, mut progress: impl FnMut(&CriterionOutcome)) -> Result<()> {
    let settings = VerifySettings::from_config(cfg);
    let outcomes = run_all(&settings, |o| progress(o));
    let mut t = CsvTable::new(["id", "name", "passed", "metric", "value"]);
    for o in &outcomes {
        let _ = writeln!(a.out.report, "{}", o.line());
        for m in &o.metrics {
            t.push(vec![
                o.id.to_string(),
                o.name.into(),
                o.passed.to_string(),
                m.name.clone(),
                fmt_f64(m.value),
            ]);
        }
    }
    a.csv("verify.csv", &t)?;
    let mut j = a.jsonl("summary.jsonl", cfg)?;
    for o in &outcomes {
        j.write("criterion", o)?;
    }
    j.finish()?;
    a.out.criteria = outcomes;
    Ok(())
}
