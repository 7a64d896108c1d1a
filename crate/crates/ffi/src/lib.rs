//! C ABI over the avsearch simulator.
//!
//! Environments and policies are opaque handles created by `avs_*_new` and
//! released by the matching `avs_*_free`. Every fallible call returns an
//! [`AvsStatus`]; on failure a message is kept per thread and can be read with
//! [`avs_last_error`]. No call unwinds across the boundary.

use std::cell::RefCell;
use std::ffi::{CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::sync::Arc;

use libc::{c_char, size_t};
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use avsearch::config::Config;
use avsearch::environment::{Action, Environment, Observation, OutcomeKind, HISTORY_LEN};
use avsearch::error::Error;
use avsearch::policy::{Policy, PolicyKind};
use avsearch::scene::SceneMap;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AvsStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidArgument = 2,
    InvalidConfig = 3,
    InvalidMap = 4,
    Io = 5,
    EpisodeDone = 6,
    BufferTooSmall = 7,
    Panic = 8,
    Internal = 9,
}

/// How an episode ended; `AVS_OUTCOME_NONE` while it is running.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AvsOutcome {
    None = 0,
    CommittedCorrect = 1,
    CommittedWrong = 2,
    Collision = 3,
    Timeout = 4,
}

impl From<Option<OutcomeKind>> for AvsOutcome {
    fn from(kind: Option<OutcomeKind>) -> Self {
        match kind {
            None => AvsOutcome::None,
            Some(OutcomeKind::CommittedCorrect) => AvsOutcome::CommittedCorrect,
            Some(OutcomeKind::CommittedWrong) => AvsOutcome::CommittedWrong,
            Some(OutcomeKind::Collision) => AvsOutcome::Collision,
            Some(OutcomeKind::Timeout) => AvsOutcome::Timeout,
        }
    }
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AvsTransition {
    pub reward: f64,
    pub done: bool,
    pub outcome: AvsOutcome,
}

/// Observation without the posterior; see [`avs_env_posterior`].
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AvsObservation {
    pub est_theta: f64,
    pub est_r: f64,
    pub theta_uncertainty: f64,
    pub r_uncertainty: f64,
    /// Oldest first; 0 where no action was taken yet.
    pub last_actions: [u8; 4],
    pub posterior_entropy: f64,
    pub elapsed_steps: u32,
}

const _: () = assert!(HISTORY_LEN == 4);

/// Opaque environment handle.
pub struct AvsEnv {
    env: Environment,
    config: Config,
}

/// Opaque policy handle. Holds its own random stream.
pub struct AvsPolicy {
    policy: Box<dyn Policy>,
    rng: ChaCha8Rng,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let mut bytes = msg.into().into_bytes();
    bytes.retain(|&b| b != 0);
    let c = CString::new(bytes).expect("interior nuls removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(err: &Error) -> AvsStatus {
    match err {
        Error::InvalidConfig(_) | Error::Toml(_) => AvsStatus::InvalidConfig,
        Error::InvalidMap(_) | Error::Json(_) | Error::Generation(_) => AvsStatus::InvalidMap,
        Error::Io { .. } | Error::Stream(_) | Error::Csv(_) => AvsStatus::Io,
        Error::EpisodeDone => AvsStatus::EpisodeDone,
        _ => AvsStatus::Internal,
    }
}

/// Runs `f`, recording the error message and turning panics into a status.
fn guard(f: impl FnOnce() -> Result<(), (AvsStatus, String)>) -> AvsStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => AvsStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(format!("panic: {msg}"));
            AvsStatus::Panic
        }
    }
}

fn lift<T>(r: avsearch::error::Result<T>) -> Result<T, (AvsStatus, String)> {
    r.map_err(|e| (status_of(&e), e.to_string()))
}

fn null(what: &str) -> (AvsStatus, String) {
    (AvsStatus::NullArgument, format!("{what} is null"))
}

/// # Safety
/// `s` is null or a valid nul-terminated string.
unsafe fn opt_str<'a>(s: *const c_char, what: &str) -> Result<Option<&'a str>, (AvsStatus, String)> {
    if s.is_null() {
        return Ok(None);
    }
    CStr::from_ptr(s)
        .to_str()
        .map(Some)
        .map_err(|_| (AvsStatus::InvalidArgument, format!("{what} is not UTF-8")))
}

/// # Safety
/// `s` is null or a valid nul-terminated string.
unsafe fn req_str<'a>(s: *const c_char, what: &str) -> Result<&'a str, (AvsStatus, String)> {
    opt_str(s, what)?.ok_or_else(|| null(what))
}

/// # Safety
/// `toml` is null or a valid nul-terminated string.
unsafe fn config_from(toml: *const c_char) -> Result<Config, (AvsStatus, String)> {
    match opt_str(toml, "config")? {
        Some(t) => lift(Config::from_toml(t)),
        None => Ok(Config::default()),
    }
}

/// Message of the last failed call on this thread, or null. The pointer stays
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn avs_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static nul-terminated string.
#[no_mangle]
pub extern "C" fn avs_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Creates an environment from a map in JSON and starts an episode.
/// `config_toml` may be null for the defaults.
///
/// # Safety
/// String arguments are null or valid nul-terminated strings; `out` is null
/// or writable.
#[no_mangle]
pub unsafe extern "C" fn avs_env_new(
    map_json: *const c_char,
    config_toml: *const c_char,
    seed: u64,
    out: *mut *mut AvsEnv,
) -> AvsStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let map = lift(SceneMap::from_json(req_str(map_json, "map_json")?))?;
        let config = config_from(config_toml)?;
        let env = lift(Environment::new(config.env, Arc::new(map), seed))?;
        *out = Box::into_raw(Box::new(AvsEnv { env, config }));
        Ok(())
    })
}

/// # Safety
/// `env` is null or a handle from [`avs_env_new`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn avs_env_free(env: *mut AvsEnv) {
    if !env.is_null() {
        drop(Box::from_raw(env));
    }
}

/// Starts a new episode on the same map.
///
/// # Safety
/// `env` is null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn avs_env_reset(env: *mut AvsEnv, seed: u64) -> AvsStatus {
    guard(|| {
        let h = env.as_mut().ok_or_else(|| null("env"))?;
        lift(h.env.reset(seed))?;
        Ok(())
    })
}

/// Applies an action by wire code (1 turn left, 2 turn right, 3 forward,
/// 4 stay, 5 commit). `out` may be null.
///
/// # Safety
/// `env` is null or a live handle; `out` is null or writable.
#[no_mangle]
pub unsafe extern "C" fn avs_env_step(env: *mut AvsEnv, action: u8, out: *mut AvsTransition) -> AvsStatus {
    guard(|| {
        let h = env.as_mut().ok_or_else(|| null("env"))?;
        let a = Action::from_code(action).ok_or_else(|| (AvsStatus::InvalidArgument, format!("unknown action code {action}")))?;
        let t = lift(h.env.step(a))?;
        if let Some(o) = out.as_mut() {
            *o = AvsTransition {
                reward: t.reward,
                done: t.done,
                outcome: t.outcome.map(|o| o.kind).into(),
            };
        }
        Ok(())
    })
}

/// # Safety
/// `env` is null or a live handle; `out` is null or writable.
#[no_mangle]
pub unsafe extern "C" fn avs_env_observe(env: *const AvsEnv, out: *mut AvsObservation) -> AvsStatus {
    guard(|| {
        let h = env.as_ref().ok_or_else(|| null("env"))?;
        let o = out.as_mut().ok_or_else(|| null("out"))?;
        let s = h.env.state();
        *o = AvsObservation {
            est_theta: s.summary.map_estimate.theta,
            est_r: s.summary.map_estimate.r,
            theta_uncertainty: s.summary.theta_uncertainty,
            r_uncertainty: s.summary.r_uncertainty,
            last_actions: s.last_action_codes(),
            posterior_entropy: s.summary.entropy,
            elapsed_steps: s.elapsed_steps,
        };
        Ok(())
    })
}

/// Posterior grid shape: range bins and azimuth bins.
///
/// # Safety
/// `env` is null or a live handle; the outputs are null or writable.
#[no_mangle]
pub unsafe extern "C" fn avs_env_posterior_shape(env: *const AvsEnv, rows: *mut size_t, cols: *mut size_t) -> AvsStatus {
    guard(|| {
        let h = env.as_ref().ok_or_else(|| null("env"))?;
        let g = h.env.config().grid;
        *rows.as_mut().ok_or_else(|| null("rows"))? = g.num_range_bins;
        *cols.as_mut().ok_or_else(|| null("cols"))? = g.num_azimuth_bins;
        Ok(())
    })
}

/// Copies the posterior probabilities, row-major, into `buf`. Returns
/// `BufferTooSmall` (copying nothing) when `len` is short; `written` always
/// receives the required length when non-null.
///
/// # Safety
/// `env` is null or a live handle; `buf` is null or valid for `len` doubles;
/// `written` is null or writable.
#[no_mangle]
pub unsafe extern "C" fn avs_env_posterior(env: *const AvsEnv, buf: *mut f64, len: size_t, written: *mut size_t) -> AvsStatus {
    guard(|| {
        let h = env.as_ref().ok_or_else(|| null("env"))?;
        let values = Observation::from_state(h.env.state()).posterior;
        if let Some(w) = written.as_mut() {
            *w = values.len();
        }
        if len < values.len() {
            return Err((AvsStatus::BufferTooSmall, format!("need {} doubles, got {len}", values.len())));
        }
        if buf.is_null() {
            return Err(null("buf"));
        }
        ptr::copy_nonoverlapping(values.as_ptr(), buf, values.len());
        Ok(())
    })
}

/// # Safety
/// `env` is null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn avs_env_is_done(env: *const AvsEnv) -> bool {
    env.as_ref().is_some_and(|h| h.env.is_done())
}

/// The episode log as JSON lines. Release with [`avs_string_free`].
///
/// # Safety
/// `env` is null or a live handle; `out` is null or writable.
#[no_mangle]
pub unsafe extern "C" fn avs_env_log_jsonl(env: *const AvsEnv, out: *mut *mut c_char) -> AvsStatus {
    guard(|| {
        let h = env.as_ref().ok_or_else(|| null("env"))?;
        let o = out.as_mut().ok_or_else(|| null("out"))?;
        let text = lift(h.env.log().to_jsonl(&h.config.env.motion, h.config.env.reward.gamma))?;
        *o = CString::new(text).map_err(|e| (AvsStatus::Internal, e.to_string()))?.into_raw();
        Ok(())
    })
}

/// # Safety
/// `s` is null or a string returned by this library and not yet freed.
#[no_mangle]
pub unsafe extern "C" fn avs_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Creates a policy by name (`greedy`, `heuristic`, `random`). The policy's
/// random stream is seeded with `seed`.
///
/// # Safety
/// String arguments are null or valid nul-terminated strings; `out` is null
/// or writable.
#[no_mangle]
pub unsafe extern "C" fn avs_policy_new(
    name: *const c_char,
    config_toml: *const c_char,
    seed: u64,
    out: *mut *mut AvsPolicy,
) -> AvsStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let kind: PolicyKind = req_str(name, "name")?
            .parse()
            .map_err(|e: Error| (AvsStatus::InvalidArgument, e.to_string()))?;
        let config = config_from(config_toml)?;
        let policy = lift(kind.build(&config.env, &config.planner))?;
        *out = Box::into_raw(Box::new(AvsPolicy {
            policy,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }));
        Ok(())
    })
}

/// # Safety
/// `policy` is null or a handle from [`avs_policy_new`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn avs_policy_free(policy: *mut AvsPolicy) {
    if !policy.is_null() {
        drop(Box::from_raw(policy));
    }
}

/// Chooses the next action code for the environment's current state.
///
/// # Safety
/// Handles are null or live; `action` is null or writable.
#[no_mangle]
pub unsafe extern "C" fn avs_policy_decide(policy: *mut AvsPolicy, env: *const AvsEnv, action: *mut u8) -> AvsStatus {
    guard(|| {
        let p = policy.as_mut().ok_or_else(|| null("policy"))?;
        let h = env.as_ref().ok_or_else(|| null("env"))?;
        let a = action.as_mut().ok_or_else(|| null("action"))?;
        *a = p.policy.decide(h.env.state(), &mut p.rng).code();
        Ok(())
    })
}
