use dyadic_core::birth_death::{run_chain_ensemble, BDRates, BdEnsembleConfig, Boundary, ChainLimits};
use dyadic_core::ensemble::{initial_energy, run_ensemble, EnsembleConfig};
use dyadic_core::forward::{solve_forward, EnergyProfile, ForwardMethod, ForwardOptions};
use dyadic_core::girsanov::integrability_report;
use dyadic_core::rng::{path_streams, sample_noise};
use dyadic_core::sde::{integrate_path, step_ito, step_linear, step_strat_heun, Scheme};
use dyadic_core::stats::trapezoid;
use dyadic_core::{ModelParams, ShellState};

#[test]
fn hand_rolled_loop_matches_integrate_path() {
    let p = ModelParams::new(2.0, 1.0, 0.8, 5).unwrap();
    let s0 = ShellState::elsasser(vec![0.3, -0.1, 0.05, 0.0, 0.01], vec![0.1, 0.2, 0.0, -0.02, 0.0]).unwrap();
    let (dt, steps) = (1e-4, 400);
    type Step = fn(&ShellState, &ModelParams, &dyadic_core::rng::NoiseIncrements) -> dyadic_core::Result<ShellState>;
    let schemes: [(Scheme, Step); 3] = [
        (Scheme::ItoEM, step_ito),
        (Scheme::StratHeun, step_strat_heun),
        (Scheme::LinearEM, step_linear),
    ];
    for (scheme, step) in schemes {
        let rec = integrate_path(scheme, &p, &s0, dt, dt * steps as f64, steps, 42, 3).unwrap();
        let mut rng = path_streams(42, 3);
        let mut s = s0.clone();
        for _ in 0..steps {
            let inc = sample_noise(&mut rng, &p, dt).unwrap();
            s = step(&s, &p, &inc).unwrap();
        }
        let last = rec.states.last().unwrap();
        for (x, y) in s.first.iter().chain(&s.second).zip(last.first.iter().chain(&last.second)) {
            assert!((x - y).abs() < 1e-13, "{scheme:?}: {x} vs {y}");
        }
    }
}

#[test]
fn linear_second_moments_have_a_class_k_tail() {
    let n = 8;
    let p = ModelParams::new(2.0, 1.0, 1.0, n).unwrap();
    let mut v = vec![0.0; n];
    v[0] = 1.0;
    let cfg = EnsembleConfig {
        scheme: Scheme::LinearEM,
        params: p.clone(),
        initial: ShellState::elsasser(v, vec![0.0; n]).unwrap(),
        dt: 1e-5,
        t_end: 0.5,
        n_paths: 2000,
        master_seed: 9,
        record_stride: 1000,
        keep_paths: false,
        track_weights: true,
    };
    let res = run_ensemble(&cfg).unwrap();
    let rep = integrability_report(&res, &p, initial_energy(&cfg)).unwrap();
    assert!(rep.p2_tail_decreasing);
    assert!(rep.p2_tail_ratio < 1e-3, "{}", rep.p2_tail_ratio);

    // second moments of the linear system follow the forward equation
    let fwd = solve_forward(
        &EnergyProfile::point_mass(n, 1),
        &BDRates::new(&p),
        &ForwardOptions {
            method: ForwardMethod::BackwardEuler,
            boundary: Boundary::Absorbing,
            dt: 1e-5,
            t_end: 0.5,
            record_stride: 1000,
        },
    )
    .unwrap();
    let t: Vec<f64> = fwd.iter().map(|e| e.t).collect();
    let e1: Vec<f64> = fwd.iter().map(|e| e.e[0]).collect();
    let exact = trapezoid(&t, &e1);
    let rel = (rep.p2_integrals[0] - exact).abs() / exact;
    assert!(rel < 0.05, "{} vs {exact}", rep.p2_integrals[0]);
}

#[test]
fn holding_times_and_escapes_match_rates() {
    let p = ModelParams::new(2.0, 1.0, 1.0, 4).unwrap();
    let rates = BDRates::new(&p);
    let s = run_chain_ensemble(&BdEnsembleConfig {
        rates: rates.clone(),
        initial: 1,
        limits: ChainLimits::default(),
        n_paths: 20_000,
        master_seed: 4,
        hist_times: vec![],
        n_report: 4,
    })
    .unwrap();
    for h in &s.holding {
        assert!((h.target_mean - 1.0 / rates.total(h.j)).abs() < 1e-15);
        let z = h.mean.z_score(h.target_mean);
        assert!(z < 4.0, "holding at {}: z = {z}", h.j);
        // exponential: E[T²] = 2 E[T]²
        let ratio = h.second_moment / (2.0 * h.target_mean * h.target_mean);
        assert!((ratio - 1.0).abs() < 0.1, "second moment ratio {ratio}");
    }
    for e in &s.escape {
        assert!((e.target - 0.75).abs() < 1e-12);
        assert!(e.fraction.z_score(0.75) < 4.0, "escape from {}", e.k);
    }
    assert_eq!(s.absorbed + s.exploded + s.censored, 20_000);
}
