//! C ABI over `rebalance-core`.
//!
//! Every fallible call returns an [`RbStatus`]. On failure the message is kept
//! per thread and can be copied out with [`rb_last_error_message`]. Handles are
//! opaque; free them with the matching `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use rebalance_core::agents::DualAgent;
use rebalance_core::baselines::PolicyKind;
use rebalance_core::behavior::AcceptanceModel;
use rebalance_core::config::RunConfig;
use rebalance_core::episode::PreferenceSource;
use rebalance_core::experiment::Experiment;
use rebalance_core::metrics::EpisodeMetrics;
use rebalance_core::nn::Checkpoint;
use rebalance_core::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RbStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Config = 3,
    Io = 4,
    Checkpoint = 5,
    Numeric = 6,
    Simulation = 7,
    Panic = 8,
}

impl From<&Error> for RbStatus {
    fn from(e: &Error) -> Self {
        match e {
            Error::Config { .. } | Error::InvalidMap(_) => RbStatus::Config,
            Error::Io(_) | Error::Csv(_) | Error::MissingFile(_) => RbStatus::Io,
            Error::Checkpoint(_) => RbStatus::Checkpoint,
            Error::NonFinite(_) | Error::Fit(_) => RbStatus::Numeric,
            Error::Shape(_) | Error::InvalidSlot(_) | Error::AllMasked | Error::MalformedLog(_) => RbStatus::Simulation,
        }
    }
}

/// One episode's metrics. `acceptance_rate` is NaN when no recommendation was issued.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RbMetrics {
    pub tdi: f64,
    pub ri: f64,
    pub rrr: f64,
    pub acceptance_rate: f64,
    pub repositions: u64,
    pub seed: u64,
}

impl From<&EpisodeMetrics> for RbMetrics {
    fn from(m: &EpisodeMetrics) -> Self {
        RbMetrics {
            tdi: m.tdi.as_currency(),
            ri: m.ri.as_currency(),
            rrr: m.rrr,
            acceptance_rate: m.acceptance_rate.unwrap_or(f64::NAN),
            repositions: m.repositions,
            seed: m.seed,
        }
    }
}

/// A configured world with an optional trained agent.
pub struct RbExperiment {
    exp: Experiment,
    prefs: Option<PreferenceSource>,
    agent: Option<DualAgent>,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: String) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
}

enum Failure {
    Status(RbStatus, String),
    Core(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Core(e)
    }
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> RbStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error(String::new());
            RbStatus::Ok
        }
        Ok(Err(Failure::Status(s, msg))) => {
            set_error(msg);
            s
        }
        Ok(Err(Failure::Core(e))) => {
            set_error(format!("{}: {e}", e.kind()));
            RbStatus::from(&e)
        }
        Err(_) => {
            set_error("internal panic".into());
            RbStatus::Panic
        }
    }
}

fn null(what: &str) -> Failure {
    Failure::Status(RbStatus::NullPointer, format!("{what} is null"))
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure::Status(RbStatus::InvalidArgument, format!("{what} is not UTF-8")))
}

unsafe fn handle<'a>(h: *mut RbExperiment) -> Result<&'a mut RbExperiment, Failure> {
    h.as_mut().ok_or_else(|| null("experiment"))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn rb_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Copy the calling thread's last error message into `buf` (NUL-terminated,
/// truncated to `len`). Returns the full message length in bytes.
///
/// # Safety
/// `buf` must be null or valid for `len` bytes.
#[no_mangle]
pub unsafe extern "C" fn rb_last_error_message(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if !buf.is_null() && len > 0 {
            let n = msg.len().min(len - 1);
            std::ptr::copy_nonoverlapping(msg.as_ptr(), buf.cast::<u8>(), n);
            *buf.add(n) = 0;
        }
        msg.len()
    })
}

/// Acceptance probability under the default coefficients.
///
/// # Safety
/// `out` must be null or valid for writes.
#[no_mangle]
pub unsafe extern "C" fn rb_acceptance_probability(rank: f64, income: f64, obedience: f64, out: *mut f64) -> RbStatus {
    rb_acceptance_probability_with(std::ptr::null(), rank, income, obedience, out)
}

/// Acceptance probability with coefficients `[b, w_r, w_m, w_o]`; null uses the defaults.
///
/// # Safety
/// `coefficients` must be null or point to 4 doubles; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn rb_acceptance_probability_with(
    coefficients: *const f64,
    rank: f64,
    income: f64,
    obedience: f64,
    out: *mut f64,
) -> RbStatus {
    guard(|| {
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        if !(rank.is_finite() && income.is_finite() && obedience.is_finite()) {
            return Err(Failure::Status(
                RbStatus::InvalidArgument,
                "inputs must be finite".into(),
            ));
        }
        let model = if coefficients.is_null() {
            AcceptanceModel::default()
        } else {
            let c = std::slice::from_raw_parts(coefficients, 4);
            AcceptanceModel::from_array([c[0], c[1], c[2], c[3]])
        };
        *out = model.probability(rank, income, obedience);
        Ok(())
    })
}

/// Build an experiment from TOML text; null means the default configuration.
///
/// # Safety
/// `config_toml` must be null or a NUL-terminated string; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn rb_experiment_new(config_toml: *const c_char, out: *mut *mut RbExperiment) -> RbStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = std::ptr::null_mut();
        let cfg = if config_toml.is_null() {
            RunConfig::default()
        } else {
            RunConfig::from_toml(str_arg(config_toml, "config")?)?
        };
        let h = RbExperiment {
            exp: Experiment::new(cfg)?,
            prefs: None,
            agent: None,
        };
        *out = Box::into_raw(Box::new(h));
        Ok(())
    })
}

/// # Safety
/// `h` must be null or a handle from [`rb_experiment_new`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn rb_experiment_free(h: *mut RbExperiment) {
    if !h.is_null() {
        drop(Box::from_raw(h));
    }
}

/// # Safety
/// `h` must be a live handle; `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn rb_experiment_config_hash(h: *mut RbExperiment, out: *mut u64) -> RbStatus {
    guard(|| {
        let h = handle(h)?;
        *out.as_mut().ok_or_else(|| null("out"))? = h.exp.hash;
        Ok(())
    })
}

fn prefs(h: &mut RbExperiment) -> Result<&PreferenceSource, Failure> {
    if h.prefs.is_none() {
        h.prefs = Some(h.exp.prepare_preferences()?.0);
    }
    Ok(h.prefs.as_ref().expect("prepared"))
}

/// Evaluate `policy` (e.g. `"min_cost_flow"`) on one seed. `dual_agent`
/// needs a prior [`rb_experiment_train`] or [`rb_experiment_load_checkpoint`].
///
/// # Safety
/// `h` must be a live handle, `policy` NUL-terminated, `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn rb_experiment_evaluate(
    h: *mut RbExperiment,
    policy: *const c_char,
    seed: u64,
    out: *mut RbMetrics,
) -> RbStatus {
    guard(|| {
        let h = handle(h)?;
        let kind: PolicyKind = str_arg(policy, "policy")?.parse()?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        prefs(h)?;
        let rows = h
            .exp
            .evaluate(kind, h.agent.as_ref(), h.prefs.as_ref().expect("prepared"), &[seed])?;
        *out = RbMetrics::from(&rows[0]);
        Ok(())
    })
}

/// Train the dual agent for `episodes` episodes (0 uses the configured count).
///
/// # Safety
/// `h` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn rb_experiment_train(h: *mut RbExperiment, episodes: u64) -> RbStatus {
    guard(|| {
        let h = handle(h)?;
        if episodes > 0 {
            h.exp.cfg.run.episodes = episodes as usize;
        }
        prefs(h)?;
        let agent = h.exp.new_agent()?;
        let outcome = h
            .exp
            .train(agent, h.prefs.as_ref().expect("prepared"), 0, |_, _, _| Ok(()))?;
        h.agent = Some(outcome.agent);
        Ok(())
    })
}

/// Load an agent and preference model from a checkpoint written under the same config.
///
/// # Safety
/// `h` must be a live handle and `path` NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn rb_experiment_load_checkpoint(h: *mut RbExperiment, path: *const c_char) -> RbStatus {
    guard(|| {
        let h = handle(h)?;
        let ck = Checkpoint::load(Path::new(str_arg(path, "path")?))?;
        let (agent, prefs, _) = h.exp.restore(&ck)?;
        h.agent = Some(agent);
        h.prefs = Some(prefs);
        Ok(())
    })
}

/// Write the trained agent to `path`.
///
/// # Safety
/// `h` must be a live handle and `path` NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn rb_experiment_save_checkpoint(h: *mut RbExperiment, path: *const c_char) -> RbStatus {
    guard(|| {
        let h = handle(h)?;
        let path = str_arg(path, "path")?;
        let agent = h
            .agent
            .as_ref()
            .ok_or_else(|| Failure::Status(RbStatus::Checkpoint, "no trained agent".into()))?;
        let prefs = h.prefs.as_ref().expect("trained agents have preferences");
        let ck = h.exp.checkpoint(agent, prefs, h.exp.cfg.run.episodes);
        ck.save(Path::new(path))?;
        Ok(())
    })
}
