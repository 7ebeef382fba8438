use copula_proc_ffi::*;
use std::ffi::CStr;
use std::ptr;

fn new_copula(family: CpFamily, param: f64, d: usize) -> *mut CpCopula {
    let mut c = ptr::null_mut();
    assert_eq!(unsafe { cp_copula_new(family, param, d, &mut c) }, CpStatus::Ok);
    c
}

fn last_error() -> String {
    let p = cp_last_error_message();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

#[test]
fn independence_cdf_and_partials() {
    let c = new_copula(CpFamily::Independence, 0.0, 2);
    let u = [0.3, 0.6];
    let mut v = 0.0;
    let mut degenerate = true;
    unsafe {
        assert_eq!(cp_copula_cdf(c, u.as_ptr(), 2, &mut v), CpStatus::Ok);
        assert_eq!(v, 0.3 * 0.6);
        assert_eq!(
            cp_copula_partial(c, 0, u.as_ptr(), 2, &mut v, &mut degenerate),
            CpStatus::Ok
        );
        assert_eq!(v, 0.6);
        assert!(!degenerate);
        cp_copula_free(c);
    }
}

#[test]
fn invalid_parameter_sets_message() {
    let mut c = ptr::null_mut();
    let status = unsafe { cp_copula_new(CpFamily::Clayton, -3.0, 2, &mut c) };
    assert_eq!(status, CpStatus::InvalidParameter);
    assert!(c.is_null());
    assert!(last_error().contains("invalid parameter"));
}

#[test]
fn null_and_length_errors() {
    let c = new_copula(CpFamily::Frank, 2.0, 2);
    let u = [0.5, 0.5, 0.5];
    let mut v = 0.0;
    unsafe {
        assert_eq!(cp_copula_cdf(ptr::null(), u.as_ptr(), 2, &mut v), CpStatus::NullPointer);
        assert_eq!(cp_copula_cdf(c, u.as_ptr(), 2, ptr::null_mut()), CpStatus::NullPointer);
        assert_ne!(cp_copula_cdf(c, u.as_ptr(), 3, &mut v), CpStatus::Ok);
        let mut buf = [0.0; 5];
        assert_eq!(
            cp_copula_sample(c, 3, 1, buf.as_mut_ptr(), 5),
            CpStatus::InvalidArgument
        );
        cp_copula_free(c);
        cp_copula_free(ptr::null_mut());
        cp_grid_function_free(ptr::null_mut());
        assert_eq!(cp_grid_function_len(ptr::null()), 0);
    }
}

#[test]
fn sampling_is_seeded() {
    let c = new_copula(CpFamily::Clayton, 2.0, 2);
    let mut a = vec![0.0; 200];
    let mut b = vec![0.0; 200];
    unsafe {
        assert_eq!(cp_copula_sample(c, 100, 7, a.as_mut_ptr(), 200), CpStatus::Ok);
        assert_eq!(cp_copula_sample(c, 100, 7, b.as_mut_ptr(), 200), CpStatus::Ok);
        cp_copula_free(c);
    }
    assert_eq!(a, b);
    assert!(a.iter().all(|&x| (0.0..=1.0).contains(&x)));
}

#[test]
fn empirical_copula_of_two_points() {
    let data = [0.1, 0.9, 0.8, 0.2];
    let mut f = ptr::null_mut();
    unsafe {
        assert_eq!(cp_empirical_copula(data.as_ptr(), 2, 2, 3, &mut f), CpStatus::Ok);
        assert_eq!(cp_grid_function_len(f), 9);
        let mut values = [0.0; 9];
        assert_eq!(cp_grid_function_values(f, values.as_mut_ptr(), 9), CpStatus::Ok);
        // Nodes 0, 1/2, 1 per axis; ranks are reversed so C(1/2, 1/2) = 0.
        assert_eq!(values, [0.0, 0.0, 0.0, 0.0, 0.0, 0.5, 0.0, 0.5, 1.0]);
        let mut v = 0.0;
        assert_eq!(cp_grid_function_eval(f, [1.0, 1.0].as_ptr(), 2, &mut v), CpStatus::Ok);
        assert_eq!(v, 1.0);
        cp_grid_function_free(f);
    }
}

#[test]
fn derivative_at_independence_matches_closed_form() {
    let c = new_copula(CpFamily::Independence, 0.0, 2);
    let m = 11;
    let axis: Vec<f64> = (0..m).map(|k| k as f64 / (m - 1) as f64).collect();
    let mut values = Vec::new();
    for &u1 in &axis {
        for &u2 in &axis {
            values.push(u1 * u2 * (1.0 - u1) * (1.0 - u2));
        }
    }
    unsafe {
        let mut h = ptr::null_mut();
        assert_eq!(
            cp_grid_function_from_values(2, m, values.as_ptr(), values.len(), &mut h),
            CpStatus::Ok
        );
        let mut dh = ptr::null_mut();
        assert_eq!(cp_hadamard_derivative(c, h, &mut dh), CpStatus::Ok);
        // h vanishes on every face, so the derivative is h itself.
        let mut sup = f64::NAN;
        assert_eq!(cp_sup_diff(h, dh, &mut sup), CpStatus::Ok);
        assert!(sup < 1e-15, "{sup}");

        let mut grid = ptr::null_mut();
        assert_eq!(cp_copula_on_grid(c, m, &mut grid), CpStatus::Ok);
        let mut v = 0.0;
        assert_eq!(
            cp_grid_function_eval(grid, [0.5, 0.4].as_ptr(), 2, &mut v),
            CpStatus::Ok
        );
        assert!((v - 0.2).abs() < 1e-15);

        let mut bad = ptr::null_mut();
        assert_eq!(
            cp_grid_function_from_values(2, m, values.as_ptr(), 5, &mut bad),
            CpStatus::InvalidArgument
        );
        cp_grid_function_free(grid);
        cp_grid_function_free(dh);
        cp_grid_function_free(h);
        cp_copula_free(c);
    }
}

#[test]
fn skew_normal_and_rates() {
    assert_eq!(cp_skew_normal_cdf(0.0, 1.0), 0.25);
    let mut z = 0.0;
    unsafe {
        assert_eq!(cp_skew_normal_quantile(0.25, 1.0, &mut z), CpStatus::Ok);
        assert!(z.abs() < 1e-10);
        assert_eq!(cp_skew_normal_quantile(1.0, 1.0, &mut z), CpStatus::Domain);

        let ns = [100.0, 400.0, 1600.0];
        let values = [0.1, 0.05, 0.025];
        let mut slope = 0.0;
        let mut fitted = false;
        assert_eq!(
            cp_rate_slope(ns.as_ptr(), values.as_ptr(), 3, &mut slope, &mut fitted),
            CpStatus::Ok
        );
        assert!(fitted);
        assert!((slope + 0.5).abs() < 1e-12);
        let zeros = [0.0; 3];
        assert_eq!(
            cp_rate_slope(ns.as_ptr(), zeros.as_ptr(), 3, &mut slope, &mut fitted),
            CpStatus::Ok
        );
        assert!(!fitted);
        assert!(slope.is_nan());
    }
}

#[test]
fn version_is_nul_terminated() {
    let v = unsafe { CStr::from_ptr(cp_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}
