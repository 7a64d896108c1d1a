//! Newline-delimited JSON bridge for driving an environment from another process.
//!
//! On connect the server writes one header line. Each request is one JSON
//! object per line, tagged by `"type"`:
//!
//! ```text
//! {"type":"reset","seed":3,"map_path":"maps/map_0000_front-5-0.json"}
//! {"type":"step","action":"turn_left"}        (or an action code 1..=5)
//! {"type":"close"}
//! ```
//!
//! and each gets exactly one reply line: `observation`, `closed` or `error`.
//! Observation replies carry the fields of [`Observation`] in declaration
//! order, then `reward`, `done` and `outcome`. The posterior is flattened
//! row-major, one row of azimuth bins per range bin.

use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::environment::{Action, EnvConfig, Environment, Observation, OutcomeKind};
use crate::error::{Error, Result};
use crate::scene::SceneMap;

pub const PROTOCOL: &str = "avsearch-bridge";
pub const PROTOCOL_VERSION: u32 = 1;

/// Observation fields in wire order.
pub const OBSERVATION_FIELDS: [&str; 8] = [
    "est_theta",
    "est_r",
    "theta_uncertainty",
    "r_uncertainty",
    "last_actions",
    "posterior_entropy",
    "elapsed_steps",
    "posterior",
];

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum Request {
    Reset {
        seed: u64,
        #[serde(default)]
        map_path: Option<PathBuf>,
    },
    Step {
        action: WireAction,
    },
    Close,
}

/// An action by name or by wire code.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum WireAction {
    Code(u8),
    Name(String),
}

impl WireAction {
    pub fn resolve(&self) -> Result<Action> {
        match self {
            WireAction::Code(c) => Action::from_code(*c).ok_or_else(|| Error::Protocol(format!("unknown action code {c}"))),
            WireAction::Name(s) => s.parse(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Reply {
    Hello {
        protocol: &'static str,
        version: u32,
        observation_fields: [&'static str; 8],
        /// Range bins, azimuth bins.
        posterior_shape: [usize; 2],
        actions: [&'static str; 5],
    },
    Observation {
        #[serde(flatten)]
        observation: Observation,
        reward: f64,
        done: bool,
        outcome: Option<OutcomeKind>,
    },
    Closed,
    Error {
        code: ErrorCode,
        message: String,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorCode {
    Malformed,
    BadAction,
    BadMap,
    NoEpisode,
    EpisodeDone,
    Busy,
    Internal,
}

impl Reply {
    pub fn hello(cfg: &EnvConfig) -> Self {
        Reply::Hello {
            protocol: PROTOCOL,
            version: PROTOCOL_VERSION,
            observation_fields: OBSERVATION_FIELDS,
            posterior_shape: [cfg.grid.num_range_bins, cfg.grid.num_azimuth_bins],
            actions: Action::ALL.map(Action::as_str),
        }
    }

    fn error(code: ErrorCode, message: impl Into<String>) -> Self {
        Reply::Error {
            code,
            message: message.into(),
        }
    }

    pub fn to_line(&self) -> String {
        let mut s = serde_json::to_string(self).expect("replies always serialize");
        s.push('\n');
        s
    }
}

/// One client's session state.
pub struct Session {
    cfg: EnvConfig,
    default_map: Option<Arc<SceneMap>>,
    env: Option<Environment>,
}

impl Session {
    pub fn new(cfg: EnvConfig, default_map: Option<Arc<SceneMap>>) -> Self {
        Self {
            cfg,
            default_map,
            env: None,
        }
    }

    /// Reply to one request line, and whether the session is over.
    pub fn handle(&mut self, line: &str) -> (Reply, bool) {
        let request: Request = match serde_json::from_str(line) {
            Ok(r) => r,
            Err(e) => return (Reply::error(ErrorCode::Malformed, e.to_string()), false),
        };
        match request {
            Request::Close => (Reply::Closed, true),
            Request::Reset { seed, map_path } => (self.reset(seed, map_path.as_deref()), false),
            Request::Step { action } => (self.step(&action), false),
        }
    }

    fn reset(&mut self, seed: u64, map_path: Option<&Path>) -> Reply {
        let map = match (map_path, &self.default_map) {
            (Some(p), _) => match SceneMap::load(p) {
                Ok(m) => Arc::new(m),
                Err(e) => return Reply::error(ErrorCode::BadMap, e.to_string()),
            },
            (None, Some(m)) => m.clone(),
            (None, None) => return Reply::error(ErrorCode::BadMap, "no map_path given and no default map"),
        };
        match Environment::new(self.cfg, map, seed) {
            Ok(env) => {
                let reply = Reply::Observation {
                    observation: Observation::from_state(env.state()),
                    reward: 0.0,
                    done: false,
                    outcome: None,
                };
                self.env = Some(env);
                reply
            }
            Err(e) => Reply::error(ErrorCode::BadMap, e.to_string()),
        }
    }

    fn step(&mut self, action: &WireAction) -> Reply {
        let action = match action.resolve() {
            Ok(a) => a,
            Err(e) => return Reply::error(ErrorCode::BadAction, e.to_string()),
        };
        let Some(env) = self.env.as_mut() else {
            return Reply::error(ErrorCode::NoEpisode, "reset before stepping");
        };
        match env.step(action) {
            Ok(t) => Reply::Observation {
                observation: Observation::from_state(env.state()),
                reward: t.reward,
                done: t.done,
                outcome: t.outcome.map(|o| o.kind),
            },
            Err(Error::EpisodeDone) => Reply::error(ErrorCode::EpisodeDone, "episode already terminated; reset first"),
            Err(e) => Reply::error(ErrorCode::Internal, e.to_string()),
        }
    }
}

/// Serves one client on a reader/writer pair until `close` or end of input.
pub fn serve_stream<R: BufRead, W: Write>(reader: R, mut writer: W, session: &mut Session) -> Result<()> {
    writer.write_all(Reply::hello(&session.cfg).to_line().as_bytes())?;
    writer.flush()?;
    for line in reader.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let (reply, done) = session.handle(&line);
        log::debug!("bridge: {} -> {}", line.trim(), reply_kind(&reply));
        writer.write_all(reply.to_line().as_bytes())?;
        writer.flush()?;
        if done {
            break;
        }
    }
    Ok(())
}

fn reply_kind(reply: &Reply) -> &'static str {
    match reply {
        Reply::Hello { .. } => "hello",
        Reply::Observation { .. } => "observation",
        Reply::Closed => "closed",
        Reply::Error { .. } => "error",
    }
}

/// Serves clients one at a time on a Unix socket at `path`. A client that
/// connects while another is being served gets a `busy` error and is
/// disconnected. With `once`, returns after the first session ends.
#[cfg(unix)]
pub fn serve_unix(path: &Path, cfg: EnvConfig, default_map: Option<Arc<SceneMap>>, once: bool) -> Result<()> {
    use std::os::unix::net::UnixListener;
    use std::time::Duration;

    if path.exists() {
        std::fs::remove_file(path).map_err(|e| Error::io(path, e))?;
    }
    let listener = UnixListener::bind(path).map_err(|e| Error::io(path, e))?;
    // polled, so refusals keep flowing while a session runs
    listener.set_nonblocking(true)?;
    log::info!("bridge listening on {}", path.display());
    let busy = Arc::new(AtomicBool::new(false));
    let mut worker: Option<std::thread::JoinHandle<Result<()>>> = None;
    let mut served = false;
    loop {
        if worker.as_ref().is_some_and(|w| w.is_finished()) {
            let w = worker.take().expect("checked above");
            w.join().map_err(|_| Error::Protocol("bridge worker panicked".into()))??;
            if once {
                return Ok(());
            }
        }
        let mut stream = match listener.accept() {
            Ok((s, _)) => s,
            Err(e) if e.kind() == std::io::ErrorKind::WouldBlock => {
                std::thread::sleep(Duration::from_millis(10));
                continue;
            }
            Err(e) => return Err(e.into()),
        };
        stream.set_nonblocking(false)?;
        if busy.load(Ordering::SeqCst) || (once && served) {
            log::info!("bridge: refusing second client");
            let reply = Reply::error(ErrorCode::Busy, "another client is connected");
            // the refused client may already be gone
            let _ = stream.write_all(reply.to_line().as_bytes());
            continue;
        }
        busy.store(true, Ordering::SeqCst);
        served = true;
        let flag = busy.clone();
        let default_map = default_map.clone();
        worker = Some(std::thread::spawn(move || {
            let mut session = Session::new(cfg, default_map);
            let result = stream
                .try_clone()
                .map_err(Error::from)
                .and_then(|r| serve_stream(BufReader::new(r), &stream, &mut session));
            flag.store(false, Ordering::SeqCst);
            result
        }));
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{Pose, WorldPoint};
    use crate::scene::{Color, SceneObject};
    use serde_json::Value;

    fn map() -> Arc<SceneMap> {
        let car = |id, x, y, color, is_target| SceneObject {
            id,
            position: WorldPoint::new(x, y),
            color,
            is_target,
            footprint_radius: 0.9,
        };
        let objects = vec![car(0, 10.0, 6.0, Color::Blue, true), car(1, 16.0, 6.0, Color::White, false)];
        Arc::new(SceneMap::from_parts(29.0, 13.0, objects, Pose::new(10.0, 2.0, 0.0), 3).unwrap())
    }

    fn json(reply: &Reply) -> Value {
        serde_json::from_str(&reply.to_line()).unwrap()
    }

    #[test]
    fn reset_then_commit() {
        let mut s = Session::new(EnvConfig::default(), Some(map()));
        let (r, done) = s.handle(r#"{"type":"reset","seed":4}"#);
        assert!(!done);
        let v = json(&r);
        assert_eq!(v["type"], "observation");
        assert_eq!(v["posterior"].as_array().unwrap().len(), 30 * 360);
        assert_eq!(v["done"], false);
        let (r, _) = s.handle(r#"{"type":"step","action":"commit"}"#);
        let v = json(&r);
        assert_eq!(v["done"], true);
        assert!(v["reward"].as_f64().is_some());
        assert!(v["outcome"].as_str().unwrap().starts_with("committed"));
        let (r, _) = s.handle(r#"{"type":"step","action":5}"#);
        assert_eq!(json(&r)["code"], "episode_done");
    }

    #[test]
    fn field_order_follows_header() {
        let mut s = Session::new(EnvConfig::default(), Some(map()));
        let line = s.handle(r#"{"type":"reset","seed":1}"#).0.to_line();
        let mut last = 0;
        for f in OBSERVATION_FIELDS.iter().chain(["reward", "done", "outcome"].iter()) {
            let at = line.find(&format!("\"{f}\":")).unwrap();
            assert!(at > last, "{f} out of order");
            last = at;
        }
    }

    #[test]
    fn errors_keep_the_session() {
        let mut s = Session::new(EnvConfig::default(), None);
        let code = |r: &Reply| json(r)["code"].clone();
        assert_eq!(code(&s.handle("not json").0), "malformed");
        assert_eq!(code(&s.handle(r#"{"type":"jump"}"#).0), "malformed");
        assert_eq!(code(&s.handle(r#"{"type":"step","action":"stay"}"#).0), "no_episode");
        assert_eq!(code(&s.handle(r#"{"type":"step","action":"fly"}"#).0), "bad_action");
        assert_eq!(code(&s.handle(r#"{"type":"step","action":9}"#).0), "bad_action");
        assert_eq!(code(&s.handle(r#"{"type":"reset","seed":1}"#).0), "bad_map");
        assert_eq!(
            code(&s.handle(r#"{"type":"reset","seed":1,"map_path":"/nonexistent.json"}"#).0),
            "bad_map"
        );
        assert_eq!(s.handle(r#"{"type":"close"}"#), (Reply::Closed, true));
    }

    #[test]
    fn stream_writes_header_and_stops_at_close() {
        let input = "{\"type\":\"reset\",\"seed\":2}\n\n{\"type\":\"close\"}\n{\"type\":\"reset\",\"seed\":2}\n";
        let mut out = Vec::new();
        let mut s = Session::new(EnvConfig::default(), Some(map()));
        serve_stream(input.as_bytes(), &mut out, &mut s).unwrap();
        let text = String::from_utf8(out).unwrap();
        let lines: Vec<Value> = text.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
        assert_eq!(lines.len(), 3);
        assert_eq!(lines[0]["type"], "hello");
        assert_eq!(lines[0]["version"], PROTOCOL_VERSION);
        assert_eq!(lines[0]["posterior_shape"], serde_json::json!([30, 360]));
        assert_eq!(lines[1]["type"], "observation");
        assert_eq!(lines[2]["type"], "closed");
    }
}
