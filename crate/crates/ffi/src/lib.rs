//! C ABI for `ddboot`.
//!
//! Every function returns a [`DdbootStatus`]; results are written through
//! out-pointers. Laws and test reports cross the boundary as opaque
//! handles that the caller releases with the matching `_free` function.
//! After a failure, [`ddboot_last_error`] describes it for the calling
//! thread.
//!
//! # Safety
//!
//! Pointer arguments must be valid for the stated number of elements and
//! properly aligned. Handles must come from this library and must not be
//! used after they are freed.

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::slice;

use ddboot::bootstrap::{mean_bundle, run_test, weighted_mean, TestSettings};
use ddboot::convex::{EpsilonRule, SupMode};
use ddboot::functional::FunctionalSpec;
use ddboot::inference::TestReport;
use ddboot::law::{law_distance, EmpiricalLaw, Metric};
use ddboot::quantile::{monotonicity_test, solve_qr, MonotoneTestConfig, QrData, TauGrid};
use ddboot::rng::{tag, SeedManifest};
use ddboot::Error;

/// Status codes shared by every entry point.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DdbootStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    DimensionMismatch = 3,
    /// Rank deficiency, non-convergence, infeasibility or a non-PSD matrix.
    Numerical = 4,
    /// A panic was caught at the boundary.
    Internal = 5,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DdbootMetric {
    BoundedLipschitz = 0,
    KolmogorovSmirnov = 1,
}

/// Opaque empirical law.
pub struct DdbootLaw {
    inner: EmpiricalLaw,
}

/// Opaque test report.
pub struct DdbootReport {
    inner: TestReport,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn classify(e: &Error) -> DdbootStatus {
    match e {
        Error::DimensionMismatch { .. } => DdbootStatus::DimensionMismatch,
        Error::Infeasible
        | Error::Unbounded
        | Error::NotConverged { .. }
        | Error::RankDeficient { .. }
        | Error::NotPsd { .. } => DdbootStatus::Numerical,
        Error::Draw { source, .. } => classify(source),
        _ => DdbootStatus::InvalidArgument,
    }
}

enum Fail {
    Null(&'static str),
    Lib(Error),
}

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail::Lib(e)
    }
}

fn guard<F: FnOnce() -> Result<(), Fail>>(f: F) -> DdbootStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => DdbootStatus::Ok,
        Ok(Err(Fail::Null(name))) => {
            set_error(format!("null pointer: {name}"));
            DdbootStatus::NullPointer
        }
        Ok(Err(Fail::Lib(e))) => {
            set_error(e.to_string());
            classify(&e)
        }
        Err(_) => {
            set_error("internal panic".to_string());
            DdbootStatus::Internal
        }
    }
}

unsafe fn input<'a, T>(p: *const T, len: usize, name: &'static str) -> Result<&'a [T], Fail> {
    if p.is_null() {
        return Err(Fail::Null(name));
    }
    Ok(slice::from_raw_parts(p, len))
}

unsafe fn output<'a, T>(p: *mut T, name: &'static str) -> Result<&'a mut T, Fail> {
    p.as_mut().ok_or(Fail::Null(name))
}

/// Message of the last failure on this thread. The pointer stays valid
/// until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn ddboot_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn ddboot_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Builds a law from `len` atoms; `probs` may be null for uniform weights.
///
/// # Safety
/// `atoms` (and `probs` when given) must hold `len` values; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ddboot_law_new(
    atoms: *const f64,
    probs: *const f64,
    len: usize,
    out: *mut *mut DdbootLaw,
) -> DdbootStatus {
    guard(|| {
        let out = output(out, "out")?;
        let atoms = input(atoms, len, "atoms")?.to_vec();
        let law = if probs.is_null() {
            EmpiricalLaw::new(atoms)?
        } else {
            EmpiricalLaw::with_probs(atoms, input(probs, len, "probs")?.to_vec())?
        };
        *out = Box::into_raw(Box::new(DdbootLaw { inner: law }));
        Ok(())
    })
}

/// # Safety
/// `law` must be null or a handle from [`ddboot_law_new`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ddboot_law_free(law: *mut DdbootLaw) {
    if !law.is_null() {
        drop(Box::from_raw(law));
    }
}

/// # Safety
/// `law` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ddboot_law_len(law: *const DdbootLaw, out: *mut usize) -> DdbootStatus {
    guard(|| {
        let law = law.as_ref().ok_or(Fail::Null("law"))?;
        *output(out, "out")? = law.inner.len();
        Ok(())
    })
}

/// Smallest atom whose cumulative probability reaches `level`.
///
/// # Safety
/// `law` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ddboot_law_quantile(law: *const DdbootLaw, level: f64, out: *mut f64) -> DdbootStatus {
    guard(|| {
        let law = law.as_ref().ok_or(Fail::Null("law"))?;
        *output(out, "out")? = law.inner.quantile(level)?;
        Ok(())
    })
}

/// # Safety
/// `law` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ddboot_law_cdf(law: *const DdbootLaw, x: f64, out: *mut f64) -> DdbootStatus {
    guard(|| {
        let law = law.as_ref().ok_or(Fail::Null("law"))?;
        *output(out, "out")? = law.inner.cdf(x);
        Ok(())
    })
}

/// # Safety
/// `a` and `b` must be live handles and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ddboot_law_distance(
    a: *const DdbootLaw,
    b: *const DdbootLaw,
    metric: DdbootMetric,
    out: *mut f64,
) -> DdbootStatus {
    guard(|| {
        let a = a.as_ref().ok_or(Fail::Null("a"))?;
        let b = b.as_ref().ok_or(Fail::Null("b"))?;
        let m = match metric {
            DdbootMetric::BoundedLipschitz => Metric::Bl,
            DdbootMetric::KolmogorovSmirnov => Metric::Ks,
        };
        *output(out, "out")? = law_distance(&a.inner, &b.inner, m)?;
        Ok(())
    })
}

/// Weighted projection of `y` onto nondecreasing sequences.
///
/// # Safety
/// `y`, `weights` and `out` must hold `len` values; `weights` may be null for unit weights.
#[no_mangle]
pub unsafe extern "C" fn ddboot_isotonic(
    y: *const f64,
    weights: *const f64,
    len: usize,
    out: *mut f64,
) -> DdbootStatus {
    guard(|| {
        let y = input(y, len, "y")?;
        let w = if weights.is_null() {
            vec![1.0; len]
        } else {
            input(weights, len, "weights")?.to_vec()
        };
        if y.iter().chain(&w).any(|v| !v.is_finite()) || w.iter().any(|v| *v <= 0.0) {
            return Err(Error::InvalidArgument {
                name: "weights",
                reason: "values must be finite and weights positive".to_string(),
            }
            .into());
        }
        if out.is_null() {
            return Err(Fail::Null("out"));
        }
        let fit = ddboot::convex::pava(y, &w);
        slice::from_raw_parts_mut(out, len).copy_from_slice(&fit);
        Ok(())
    })
}

/// Quantile regression of `y` on the `n x p` row-major design `x` at
/// level `tau`. Writes `p` coefficients to `beta` and the check-loss sum
/// to `objective` (which may be null).
///
/// # Safety
/// `y` must hold `n` values, `x` `n * p` values and `beta` `p` values.
#[no_mangle]
pub unsafe extern "C" fn ddboot_quantile_regression(
    y: *const f64,
    x: *const f64,
    n: usize,
    p: usize,
    tau: f64,
    beta: *mut f64,
    objective: *mut f64,
) -> DdbootStatus {
    guard(|| {
        let data = QrData::new(input(y, n, "y")?.to_vec(), input(x, n * p, "x")?.to_vec(), p)?;
        if beta.is_null() {
            return Err(Fail::Null("beta"));
        }
        let fit = solve_qr(&data, &vec![1.0; n], tau, None)?;
        slice::from_raw_parts_mut(beta, p).copy_from_slice(&fit.beta);
        if let Some(o) = objective.as_mut() {
            *o = fit.objective;
        }
        Ok(())
    })
}

/// Moment inequality test of `E[X_j] <= 0` for every column of the `n x d`
/// row-major sample, with the selection-based modified bootstrap.
///
/// # Safety
/// `data` must hold `n * d` values and `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ddboot_test_moments(
    data: *const f64,
    n: usize,
    d: usize,
    alpha: f64,
    draws: usize,
    seed: u64,
    out: *mut *mut DdbootReport,
) -> DdbootStatus {
    guard(|| {
        let out = output(out, "out")?;
        if d == 0 {
            return Err(Error::Empty("moment columns").into());
        }
        let rows: Vec<Vec<f64>> = input(data, n * d, "data")?.chunks(d).map(<[f64]>::to_vec).collect();
        let bundle = mean_bundle(&rows)?;
        let report = run_test(
            |r: &[Vec<f64>], w: &[f64]| weighted_mean(r, w),
            rows.as_slice(),
            &bundle,
            &FunctionalSpec::MaxCoord { dim: d },
            None,
            &TestSettings::new(alpha, draws),
            &SeedManifest::new(seed, vec![tag::BOOTSTRAP]),
        )?;
        *out = Box::into_raw(Box::new(DdbootReport { inner: report }));
        Ok(())
    })
}

/// Monotonicity test of the treatment coefficient in a quantile regression
/// on the default grid `0.2, 0.225, .., 0.8`. Column 0 of the row-major
/// design `x` is the treatment. `epsilon_n = c n^(-kappa)`.
///
/// # Safety
/// `y` must hold `n` values, `x` `n * p` values, and `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ddboot_test_monotone(
    y: *const f64,
    x: *const f64,
    n: usize,
    p: usize,
    alpha: f64,
    draws: usize,
    c: f64,
    kappa: f64,
    seed: u64,
    out: *mut *mut DdbootReport,
) -> DdbootStatus {
    guard(|| {
        let out = output(out, "out")?;
        let data = QrData::new(input(y, n, "y")?.to_vec(), input(x, n * p, "x")?.to_vec(), p)?;
        let config = MonotoneTestConfig {
            grid: TauGrid::default(),
            draws,
            epsilon: EpsilonRule::new(c, kappa)?,
            alpha,
            delta_bump: 0.0,
            mode: SupMode::Threshold,
        };
        let report = monotonicity_test(&data, &config, &SeedManifest::new(seed, vec![tag::BOOTSTRAP]))?;
        *out = Box::into_raw(Box::new(DdbootReport { inner: report }));
        Ok(())
    })
}

/// # Safety
/// `report` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ddboot_report_free(report: *mut DdbootReport) {
    if !report.is_null() {
        drop(Box::from_raw(report));
    }
}

/// Summary of a report.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DdbootReportView {
    pub statistic: f64,
    pub critical_value: f64,
    pub p_value: f64,
    pub alpha: f64,
    pub reject: bool,
    /// The bootstrap law collapsed to a point.
    pub degenerate: bool,
}

/// # Safety
/// `report` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ddboot_report_view(report: *const DdbootReport, out: *mut DdbootReportView) -> DdbootStatus {
    guard(|| {
        let r = &report.as_ref().ok_or(Fail::Null("report"))?.inner;
        *output(out, "out")? = DdbootReportView {
            statistic: r.statistic,
            critical_value: r.critical_value,
            p_value: r.p_value,
            alpha: r.alpha,
            reject: r.reject,
            degenerate: r.diagnostics.degenerate_law,
        };
        Ok(())
    })
}
