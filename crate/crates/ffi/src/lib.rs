//! C interface to the `seqlsi` engine.
//!
//! Datasets and fitted chains are opaque heap handles owned by the caller and
//! released with the matching `*_free` function. Every fallible function
//! returns a [`SeqlsiStatus`]; on failure the message is kept per thread and
//! can be copied out with [`seqlsi_last_error_message`]. Panics never cross
//! the boundary: they are caught and reported as [`SeqlsiStatus::Panic`].
//!
//! Output arrays are caller-allocated with the documented fixed lengths.

#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use seqlsi::posterior::{summarize_functional, Functional, SummaryRow};
use seqlsi::report::save_chain;
use seqlsi::sampler::{run_gibbs, Chain, McmcConfig, PriorConfig};
use seqlsi::sensitivity::{ipw_msm_estimate, sensitivity_report, SensitivityConfig};
use seqlsi::simgen::{generate, true_ates, ScenarioConfig};
use seqlsi::{Dataset, Error, SpecKind};

/// Number of average treatment effects reported, in the order
/// 11.00, 11.01, 11.10, 10.00, 01.10, 01.00.
pub const SEQLSI_N_ATES: usize = 6;
/// Number of principal strata, in the order 00, 01, 10, 11.
pub const SEQLSI_N_STRATA: usize = 4;
/// Number of assignment-probability pairings compared by the sensitivity
/// analysis.
pub const SEQLSI_N_PAIRINGS: usize = 4;

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SeqlsiStatus {
    Ok = 0,
    NullPointer = 1,
    /// Out-of-range argument or violated precondition.
    InvalidArgument = 2,
    /// File, parse or format failure.
    Io = 3,
    /// The sampler reached a non-finite or degenerate state.
    Numerical = 4,
    Panic = 5,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SeqlsiSpec {
    Lsi = 0,
    Si1 = 1,
    Si2 = 2,
}

impl From<SeqlsiSpec> for SpecKind {
    fn from(s: SeqlsiSpec) -> Self {
        match s {
            SeqlsiSpec::Lsi => SpecKind::Lsi,
            SeqlsiSpec::Si1 => SpecKind::Si1,
            SeqlsiSpec::Si2 => SpecKind::Si2,
        }
    }
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SeqlsiScenario {
    /// Assignment depends on the latent stratum.
    ReferenceLsi = 0,
    /// Assignment depends only on the observed intermediate outcome.
    ReferenceSi = 1,
}

impl SeqlsiScenario {
    fn config(self) -> ScenarioConfig {
        match self {
            SeqlsiScenario::ReferenceLsi => ScenarioConfig::reference_lsi(),
            SeqlsiScenario::ReferenceSi => ScenarioConfig::reference_si(),
        }
    }
}

/// Posterior summary of one scalar functional.
#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct SeqlsiSummary {
    pub mean: f64,
    pub sd: f64,
    pub q025: f64,
    pub q975: f64,
}

impl From<&SummaryRow> for SeqlsiSummary {
    fn from(r: &SummaryRow) -> Self {
        Self {
            mean: r.mean,
            sd: r.sd,
            q025: r.q025,
            q975: r.q975,
        }
    }
}

/// Posterior summary of one assignment-probability gap.
#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct SeqlsiGap {
    pub mean: f64,
    pub sd: f64,
    pub lower: f64,
    pub upper: f64,
    /// 1 when the credible interval excludes zero.
    pub excludes_zero: u8,
}

pub struct SeqlsiDataset(Dataset);

pub struct SeqlsiChain(Chain);

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_last_error(msg: String) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
}

fn status_of(e: &Error) -> SeqlsiStatus {
    match e {
        Error::Domain(_) | Error::Contract(_) => SeqlsiStatus::InvalidArgument,
        Error::NonFinite { .. } | Error::Degenerate { .. } => SeqlsiStatus::Numerical,
        _ => SeqlsiStatus::Io,
    }
}

enum Fail {
    Null(&'static str),
    Core(Error),
}

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail::Core(e)
    }
}

fn guard<F>(f: F) -> SeqlsiStatus
where
    F: FnOnce() -> Result<(), Fail>,
{
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_last_error(String::new());
            SeqlsiStatus::Ok
        }
        Ok(Err(Fail::Null(what))) => {
            set_last_error(format!("null pointer: {what}"));
            SeqlsiStatus::NullPointer
        }
        Ok(Err(Fail::Core(e))) => {
            set_last_error(e.to_string());
            status_of(&e)
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_last_error(format!("panic: {msg}"));
            SeqlsiStatus::Panic
        }
    }
}

unsafe fn deref<'a, T>(p: *const T, what: &'static str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or(Fail::Null(what))
}

unsafe fn out_slice<'a, T>(p: *mut T, len: usize, what: &'static str) -> Result<&'a mut [T], Fail> {
    if p.is_null() {
        Err(Fail::Null(what))
    } else {
        Ok(std::slice::from_raw_parts_mut(p, len))
    }
}

unsafe fn path_arg<'a>(p: *const c_char) -> Result<&'a Path, Fail> {
    let s = deref(p, "path")?;
    let s = CStr::from_ptr(s)
        .to_str()
        .map_err(|_| Fail::Core(Error::Contract("path is not valid UTF-8".into())))?;
    Ok(Path::new(s))
}

/// Copy the calling thread's last error message into `buf` as a
/// NUL-terminated string, truncating if needed. Returns the length of the
/// full message excluding the terminator; 0 means no error is recorded.
#[no_mangle]
pub unsafe extern "C" fn seqlsi_last_error_message(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if !buf.is_null() && len > 0 {
            let n = msg.len().min(len - 1);
            std::ptr::copy_nonoverlapping(msg.as_ptr().cast::<c_char>(), buf, n);
            *buf.add(n) = 0;
        }
        msg.len()
    })
}

/// True effects of a reference scenario, `SEQLSI_N_ATES` values.
#[no_mangle]
pub unsafe extern "C" fn seqlsi_reference_true_ates(
    scenario: SeqlsiScenario,
    out: *mut f64,
) -> SeqlsiStatus {
    guard(|| {
        let out = out_slice(out, SEQLSI_N_ATES, "out")?;
        for (o, (_, v)) in out
            .iter_mut()
            .zip(true_ates(&scenario.config().theta_true)?)
        {
            *o = v;
        }
        Ok(())
    })
}

/// Simulate `n` units from a reference scenario with the given seed.
#[no_mangle]
pub unsafe extern "C" fn seqlsi_dataset_simulate(
    scenario: SeqlsiScenario,
    n: usize,
    seed: u64,
    out: *mut *mut SeqlsiDataset,
) -> SeqlsiStatus {
    guard(|| {
        if out.is_null() {
            return Err(Fail::Null("out"));
        }
        let mut cfg = scenario.config();
        cfg.n = n;
        cfg.seed = seed;
        let data = generate(&cfg)?;
        *out = Box::into_raw(Box::new(SeqlsiDataset(data)));
        Ok(())
    })
}

/// Read a dataset CSV.
#[no_mangle]
pub unsafe extern "C" fn seqlsi_dataset_load_csv(
    path: *const c_char,
    out: *mut *mut SeqlsiDataset,
) -> SeqlsiStatus {
    guard(|| {
        if out.is_null() {
            return Err(Fail::Null("out"));
        }
        let data = Dataset::load_csv(path_arg(path)?)?;
        *out = Box::into_raw(Box::new(SeqlsiDataset(data)));
        Ok(())
    })
}

/// Write a dataset CSV with observed columns only.
#[no_mangle]
pub unsafe extern "C" fn seqlsi_dataset_save_csv(
    data: *const SeqlsiDataset,
    path: *const c_char,
) -> SeqlsiStatus {
    guard(|| {
        let data = deref(data, "data")?;
        data.0.save_csv(path_arg(path)?, false)?;
        Ok(())
    })
}

/// Number of units, or 0 for a null handle.
#[no_mangle]
pub unsafe extern "C" fn seqlsi_dataset_len(data: *const SeqlsiDataset) -> usize {
    data.as_ref().map_or(0, |d| d.0.len())
}

#[no_mangle]
pub unsafe extern "C" fn seqlsi_dataset_free(data: *mut SeqlsiDataset) {
    if !data.is_null() {
        drop(Box::from_raw(data));
    }
}

/// Run one Gibbs chain with default priors.
#[no_mangle]
pub unsafe extern "C" fn seqlsi_fit(
    data: *const SeqlsiDataset,
    spec: SeqlsiSpec,
    burn_in: usize,
    kept: usize,
    thin: usize,
    seed: u64,
    out: *mut *mut SeqlsiChain,
) -> SeqlsiStatus {
    guard(|| {
        let data = deref(data, "data")?;
        if out.is_null() {
            return Err(Fail::Null("out"));
        }
        let mcmc = McmcConfig {
            burn_in,
            kept,
            thin,
            seed,
            ..McmcConfig::default()
        };
        let chain = run_gibbs(&data.0, spec.into(), &PriorConfig::default(), &mcmc)?;
        *out = Box::into_raw(Box::new(SeqlsiChain(chain)));
        Ok(())
    })
}

/// Number of stored draws, or 0 for a null handle.
#[no_mangle]
pub unsafe extern "C" fn seqlsi_chain_len(chain: *const SeqlsiChain) -> usize {
    chain.as_ref().map_or(0, |c| c.0.len())
}

/// Save a chain as CSV with its JSON metadata sidecar.
#[no_mangle]
pub unsafe extern "C" fn seqlsi_chain_save(
    chain: *const SeqlsiChain,
    path: *const c_char,
) -> SeqlsiStatus {
    guard(|| {
        let chain = deref(chain, "chain")?;
        save_chain(&chain.0, path_arg(path)?)?;
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn seqlsi_chain_free(chain: *mut SeqlsiChain) {
    if !chain.is_null() {
        drop(Box::from_raw(chain));
    }
}

unsafe fn summaries(
    chain: *const SeqlsiChain,
    fs: Vec<Functional>,
    out: *mut SeqlsiSummary,
) -> SeqlsiStatus {
    guard(|| {
        let chain = deref(chain, "chain")?;
        let out = out_slice(out, fs.len(), "out")?;
        for (o, f) in out.iter_mut().zip(fs) {
            *o = (&summarize_functional(&chain.0, f)?).into();
        }
        Ok(())
    })
}

/// Posterior summaries of the six effects into `out[SEQLSI_N_ATES]`.
#[no_mangle]
pub unsafe extern "C" fn seqlsi_chain_ate_summary(
    chain: *const SeqlsiChain,
    out: *mut SeqlsiSummary,
) -> SeqlsiStatus {
    summaries(chain, Functional::ates(), out)
}

/// Posterior summaries of the stratum probabilities into
/// `out[SEQLSI_N_STRATA]`. Fails for an SI-2 chain, which has no strata.
#[no_mangle]
pub unsafe extern "C" fn seqlsi_chain_strata_probs(
    chain: *const SeqlsiChain,
    out: *mut SeqlsiSummary,
) -> SeqlsiStatus {
    summaries(chain, Functional::stratum_probs(), out)
}

/// Assignment-probability gaps of an LSI chain into `out[SEQLSI_N_PAIRINGS]`,
/// with equal-tailed intervals at `level` (for example 0.95).
#[no_mangle]
pub unsafe extern "C" fn seqlsi_chain_gap_summary(
    chain: *const SeqlsiChain,
    level: f64,
    out: *mut SeqlsiGap,
) -> SeqlsiStatus {
    guard(|| {
        let chain = deref(chain, "chain")?;
        let out = out_slice(out, SEQLSI_N_PAIRINGS, "out")?;
        let report = sensitivity_report(
            &chain.0,
            &SensitivityConfig {
                interval_level: level,
            },
        )?;
        for (o, g) in out.iter_mut().zip(&report.gaps) {
            *o = SeqlsiGap {
                mean: g.summary.mean,
                sd: g.summary.sd,
                lower: g.lower,
                upper: g.upper,
                excludes_zero: u8::from(g.excludes_zero),
            };
        }
        Ok(())
    })
}

/// Inverse-probability-weighted effects and bootstrap standard errors into
/// `estimates[SEQLSI_N_ATES]` and `std_errors[SEQLSI_N_ATES]`. Effects that
/// need an empty observed cell are NaN.
#[no_mangle]
pub unsafe extern "C" fn seqlsi_ipw(
    data: *const SeqlsiDataset,
    bootstrap_reps: usize,
    seed: u64,
    estimates: *mut f64,
    std_errors: *mut f64,
) -> SeqlsiStatus {
    guard(|| {
        let data = deref(data, "data")?;
        let est = out_slice(estimates, SEQLSI_N_ATES, "estimates")?;
        let se = out_slice(std_errors, SEQLSI_N_ATES, "std_errors")?;
        let report = ipw_msm_estimate(&data.0, bootstrap_reps, seed)?;
        for (k, e) in report.estimates.iter().enumerate() {
            est[k] = e.estimate.unwrap_or(f64::NAN);
            se[k] = e.se.unwrap_or(f64::NAN);
        }
        Ok(())
    })
}
