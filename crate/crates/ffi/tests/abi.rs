use std::ptr;

use dyadic_ffi::*;

fn params(lambda: f64, sigma: f64, n: usize) -> *mut DyadicParams {
    let mut p = ptr::null_mut();
    let st = unsafe { dyadic_params_new(lambda, 1.0, sigma, n, &mut p) };
    assert_eq!(st, DyadicStatus::Ok);
    assert!(!p.is_null());
    p
}

fn last_error() -> String {
    let mut buf = vec![0 as std::ffi::c_char; 256];
    let n = unsafe { dyadic_last_error(buf.as_mut_ptr(), buf.len()) };
    let bytes: Vec<u8> = buf[..n.min(255)].iter().map(|&c| c as u8).collect();
    String::from_utf8(bytes).unwrap()
}

#[test]
fn invalid_lambda_reports_message() {
    let mut p = ptr::null_mut();
    let st = unsafe { dyadic_params_new(0.5, 1.0, 1.0, 8, &mut p) };
    assert_eq!(st, DyadicStatus::InvalidParameter);
    assert!(p.is_null());
    assert!(last_error().contains("lambda must exceed 1"));
}

#[test]
fn null_output_slot_is_rejected() {
    let st = unsafe { dyadic_params_new(2.0, 1.0, 1.0, 8, ptr::null_mut()) };
    assert_eq!(st, DyadicStatus::NullPointer);
}

#[test]
fn quantities_for_dyadic_spectrum() {
    let p = params(2.0, 1.0, 8);
    let mut q = DyadicQuantities::default();
    assert_eq!(unsafe { dyadic_quantities(p, &mut q) }, DyadicStatus::Ok);
    // x = 1/4: r_1 = x/(1-x), r_inf = x/(1-x)^2
    assert!((q.r_1 - 1.0 / 3.0).abs() < 1e-14);
    assert!((q.r_inf - 4.0 / 9.0).abs() < 1e-14);
    assert!((q.big_r - 4.0 / 9.0).abs() < 1e-12);
    assert_eq!(q.s_divergent, 1);
    let closed = -(0.75f64).ln() - 0.25 * 0.25f64.ln() / 0.75;
    assert!((q.alpha - closed).abs() < 1e-10);
    unsafe { dyadic_params_free(p) };
}

#[test]
fn escape_probability_is_one_minus_x() {
    let p = params(2.0, 1.0, 8);
    let mut v = 0.0;
    for k in 1..5 {
        assert_eq!(unsafe { dyadic_escape_probability(p, k, &mut v) }, DyadicStatus::Ok);
        assert!((v - 0.75).abs() < 1e-12);
    }
    assert_eq!(unsafe { dyadic_escape_probability(p, 0, &mut v) }, DyadicStatus::OutOfRange);
    unsafe { dyadic_params_free(p) };
}

#[test]
fn drift_conserves_energy() {
    let p = params(2.0, 0.0, 5);
    let pv = [0.3, -0.2, 0.1, 0.05, -0.02];
    let mv = [0.1, 0.4, -0.3, 0.01, 0.2];
    let (mut dp, mut dm) = ([0.0; 5], [0.0; 5]);
    let st = unsafe { dyadic_drift(p, pv.as_ptr(), mv.as_ptr(), dp.as_mut_ptr(), dm.as_mut_ptr()) };
    assert_eq!(st, DyadicStatus::Ok);
    let rate: f64 = (0..5).map(|j| pv[j] * dp[j] + mv[j] * dm[j]).sum();
    assert!(rate.abs() < 1e-14, "{rate}");
    unsafe { dyadic_params_free(p) };
}

#[test]
fn forward_solve_keeps_ledger() {
    let p = params(2.0, 1.0, 12);
    let mut e0 = [0.0; 12];
    e0[0] = 1.0;
    let mut e = [0.0; 12];
    let mut leaks = [0.0; 2];
    let st = unsafe {
        dyadic_forward_solve(p, DyadicBoundary::Absorbing, e0.as_ptr(), 1e-4, 0.5, e.as_mut_ptr(), leaks.as_mut_ptr())
    };
    assert_eq!(st, DyadicStatus::Ok);
    let total: f64 = e.iter().sum::<f64>() + leaks[0] + leaks[1];
    assert!((total - 1.0).abs() < 1e-10, "{total}");
    assert!(e[0] < 1.0 && leaks[0] > 0.0);
    unsafe { dyadic_params_free(p) };
}

#[test]
fn ensemble_handle_round_trip() {
    let p = params(2.0, 1.0, 4);
    let pv = [0.2, 0.0, 0.0, 0.0];
    let mv = [0.0; 4];
    let mut h = ptr::null_mut();
    let st = unsafe {
        dyadic_ensemble_run(p, DyadicScheme::Linear, pv.as_ptr(), mv.as_ptr(), 1e-4, 0.01, 256, 3, 50, &mut h)
    };
    assert_eq!(st, DyadicStatus::Ok);
    let len = unsafe { dyadic_ensemble_len(h) };
    assert_eq!(len, 3);
    let mut row = [0.0; 3];
    assert_eq!(unsafe { dyadic_ensemble_energy(h, 0, row.as_mut_ptr()) }, DyadicStatus::Ok);
    assert_eq!(row[0], 0.0);
    assert!((row[1] - 0.02).abs() < 1e-15 && row[2] == 0.0);
    let mut v = [0.0; 2];
    assert_eq!(unsafe { dyadic_ensemble_mean_p2(h, 2, 1, v.as_mut_ptr()) }, DyadicStatus::Ok);
    assert!(v[0] > 0.0 && v[0] < 0.04);
    assert_eq!(unsafe { dyadic_ensemble_mean_p2(h, 2, 0, v.as_mut_ptr()) }, DyadicStatus::OutOfRange);
    assert_eq!(unsafe { dyadic_ensemble_energy(h, len, row.as_mut_ptr()) }, DyadicStatus::OutOfRange);
    unsafe {
        dyadic_ensemble_free(h);
        dyadic_params_free(p);
    }
}

#[test]
fn header_compiles_as_c() {
    let header = concat!(env!("CARGO_MANIFEST_DIR"), "/include/dyadic.h");
    let text = std::fs::read_to_string(header).unwrap();
    for f in ["dyadic_params_new", "dyadic_quantities", "dyadic_ensemble_run", "dyadic_last_error"] {
        assert!(text.contains(f), "{f} missing from header");
    }
    let Ok(status) = std::process::Command::new("cc")
        .args(["-fsyntax-only", "-Wall", "-Werror", "-x", "c", header])
        .status()
    else {
        eprintln!("no C compiler; skipping syntax check");
        return;
    };
    assert!(status.success());
}
