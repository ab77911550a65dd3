use std::ffi::CStr;
use std::ptr;

use qae_ffi::*;

fn last_error() -> String {
    let p = qae_last_error_message();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

#[test]
fn outcome_probability_matches_closed_form() {
    let p = qae_outcome_probability(0.3, 0.0, 2, false, false);
    assert!((p - (5.0f64 * 0.3).sin().powi(2)).abs() < 1e-15);
    assert!(qae_outcome_probability(2.0, 0.0, 0, false, false).is_nan());
    assert!(qae_outcome_probability(0.3, -1.0, 0, false, false).is_nan());
}

#[test]
fn crt_through_the_abi() {
    let residues = [2u64, 3, 2];
    let moduli = [3u64, 5, 7];
    let mut out = 0u64;
    let s = unsafe { qae_crt_reconstruct(residues.as_ptr(), moduli.as_ptr(), 3, &mut out) };
    assert_eq!(s, QaeStatus::Ok);
    assert_eq!(out, 23);

    let s = unsafe { qae_crt_reconstruct(residues.as_ptr(), [3u64, 6, 7].as_ptr(), 3, &mut out) };
    assert_eq!(s, QaeStatus::NotCoprime);
    assert!(last_error().contains("coprime"));

    let s = unsafe { qae_crt_reconstruct(residues.as_ptr(), moduli.as_ptr(), 3, ptr::null_mut()) };
    assert_eq!(s, QaeStatus::NullPointer);
}

#[test]
fn select_beta_and_optimize() {
    let mut beta = 0.0;
    assert_eq!(unsafe { qae_select_beta(1e-4, 1e-3, &mut beta) }, QaeStatus::Ok);
    assert!((beta - 0.25).abs() < 1e-12);
    assert_eq!(unsafe { qae_select_beta(2.0, 1e-3, &mut beta) }, QaeStatus::InvalidArgument);

    let mut o = QaeOptimized::default();
    assert_eq!(unsafe { qae_optimize_params(1e-4, 0.0, 1e-5, false, &mut o) }, QaeStatus::Ok);
    assert_eq!(o.q, 1);
    assert!(o.k >= 2 && o.predicted_calls > 0.0);
    assert_eq!(unsafe { qae_optimize_params(1e-4, 0.0, 1e-5, true, &mut o) }, QaeStatus::Ok);
    assert_eq!(o.q, 1);
}

#[test]
fn estimators_return_reports() {
    let mut r: *mut QaeReport = ptr::null_mut();
    unsafe {
        assert_eq!(qae_estimate_powerlaw(0.7, 0.0, 1e-3, 0.5, 100, true, 1, &mut r), QaeStatus::Ok);
        assert!((qae_report_theta_hat(r) - 0.7).abs() <= 1e-3);
        assert_eq!(qae_report_success(r), 1);
        assert!(qae_report_oracle_calls(r) > 0);
        qae_report_free(r);

        assert_eq!(qae_estimate_qoprime(0.7, 0.0, 1e-3, 1e-3, 0, 0, false, 0.0, 2, &mut r), QaeStatus::Ok);
        assert!((qae_report_theta_hat(r) - 0.7).abs() <= 1e-3);
        assert!(qae_report_max_depth(r) > 0);
        let json = qae_report_to_json(r);
        let text = CStr::from_ptr(json).to_str().unwrap().to_owned();
        qae_string_free(json);
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_eq!(v["algorithm"], "qoprime");
        qae_report_free(r);

        assert_eq!(qae_estimate_classical(0.7, 0.0, 1e-2, 1e-3, 3, &mut r), QaeStatus::Ok);
        assert_eq!(qae_report_max_depth(r), 0);
        qae_report_free(r);

        assert_eq!(qae_estimate_exponential_mle(0.7, 0.0, 1e-3, 100, true, 4, &mut r), QaeStatus::Ok);
        assert!((qae_report_theta_hat(r) - 0.7).abs() <= 1e-3);
        qae_report_free(r);
    }
}

#[test]
fn failures_map_to_status_codes() {
    let mut r: *mut QaeReport = ptr::null_mut();
    unsafe {
        assert_eq!(
            qae_estimate_qoprime(0.3, 0.0, 1e-3, 1e-3, 3, 5, false, 0.0, 0, &mut r),
            QaeStatus::InvalidArgument
        );
        assert!(r.is_null());
        assert_eq!(
            qae_estimate_qoprime(0.3, 0.0, 1e-6, 1e-3, 0, 0, false, 1e3, 0, &mut r),
            QaeStatus::SampleBudgetExceeded
        );
        assert_eq!(qae_estimate_classical(0.3, 0.0, 1e-2, 1e-3, 0, ptr::null_mut()), QaeStatus::NullPointer);
        assert_eq!(last_error(), "out is null");

        let mut buf = [0 as std::ffi::c_char; 4];
        let n = qae_last_error_copy(buf.as_mut_ptr(), buf.len());
        assert_eq!(n, "out is null".len());
        assert_eq!(CStr::from_ptr(buf.as_ptr()).to_str().unwrap(), "out");
    }
}

#[test]
fn null_handles_are_tolerated() {
    unsafe {
        assert!(qae_report_theta_hat(ptr::null()).is_nan());
        assert_eq!(qae_report_success(ptr::null()), -1);
        assert!(qae_report_to_json(ptr::null()).is_null());
        qae_report_free(ptr::null_mut());
        qae_string_free(ptr::null_mut());
    }
}
