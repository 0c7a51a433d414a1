//! Live sessions: human participants drive their slots over a message
//! transport while the server advances the episode at a fixed tick period.
//!
//! The hub is transport-agnostic. A network layer registers each connection
//! with an emitter, forwards parsed [`ClientFrame`]s and reports disconnects.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::{Arc, Mutex, MutexGuard};
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::config::RunConfig;
use super::episode::{run_episode, TickObserver};
use super::HarnessError;
use crate::agents::{AgentKind, HumanInput, HumanInputHandle, Policy};
use crate::comm::{Channel, Message};
use crate::event::EventRecord;
use crate::llm::{serialize_ascii, LlmClient};
use crate::scenario::ScenarioId;
use crate::world::{Action, AgentId, WorldSnapshot, WorldState};

pub type ConnId = u64;
pub type Emitter = Arc<dyn Fn(ServerFrame) + Send + Sync>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ClientFrame {
    /// Join a session, creating it when it does not exist.
    Join {
        session: String,
        #[serde(default)]
        scenario: Option<ScenarioId>,
    },
    /// Claim a human slot. `token` reclaims a slot after a disconnect.
    Claim {
        slot: u8,
        #[serde(default)]
        token: Option<String>,
    },
    Input {
        action: Action,
    },
    Message {
        category: String,
        text: String,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Lobby,
    Running,
    Finished,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlotStatus {
    pub slot: u8,
    pub kind: AgentKind,
    pub claimed: bool,
}

/// Observation and HUD for one slot at the start of a tick.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FramePayload {
    pub session: String,
    pub slot: u8,
    pub tick: u64,
    pub horizon: u64,
    pub rows: Vec<String>,
    pub legend: BTreeMap<char, String>,
    pub score: u32,
    pub frozen: bool,
    pub messages: Vec<Message>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ServerFrame {
    Joined {
        session: String,
        scenario: ScenarioId,
        phase: Phase,
        slots: Vec<SlotStatus>,
    },
    Claimed {
        slot: u8,
        token: String,
    },
    Frame(Box<FramePayload>),
    End {
        session: String,
        valid: bool,
        abort_reason: Option<String>,
        scores: Vec<u32>,
        log_path: Option<PathBuf>,
    },
    Error {
        message: String,
    },
}

impl ServerFrame {
    fn error(message: impl Into<String>) -> Self {
        ServerFrame::Error {
            message: message.into(),
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct HubOptions {
    /// Directory for session logs; `<dir>/<session>.jsonl`.
    pub out_dir: Option<PathBuf>,
    /// Overwrite existing session logs.
    pub force: bool,
    /// Client for language-model slots; built from the config when absent.
    pub client: Option<LlmClient>,
}

struct Conn {
    emit: Emitter,
    session: Option<String>,
    slot: Option<u8>,
}

struct Claim {
    token: String,
    conn: Option<ConnId>,
    disconnected_at: Option<Instant>,
}

struct Session {
    scenario: ScenarioId,
    index: u32,
    phase: Phase,
    claims: BTreeMap<u8, Claim>,
    inputs: BTreeMap<u8, HumanInputHandle>,
    humans: BTreeMap<u8, HumanInput>,
    snapshot: Option<WorldSnapshot>,
    runner: Option<JoinHandle<()>>,
}

#[derive(Default)]
struct HubState {
    conns: BTreeMap<ConnId, Conn>,
    sessions: BTreeMap<String, Session>,
    next_conn: ConnId,
}

/// Session registry. All session state lives behind one lock; each running
/// session has a single runner thread that owns the world.
#[derive(Clone)]
pub struct SessionHub {
    cfg: Arc<RunConfig>,
    opts: Arc<HubOptions>,
    state: Arc<Mutex<HubState>>,
}

fn valid_session_id(s: &str) -> bool {
    !s.is_empty() && s.len() <= 64 && s.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_')
}

fn new_token() -> String {
    format!("{:016x}{:016x}", rand::random::<u64>(), rand::random::<u64>())
}

impl SessionHub {
    pub fn new(cfg: RunConfig, opts: HubOptions) -> Self {
        Self {
            cfg: Arc::new(cfg),
            opts: Arc::new(opts),
            state: Arc::new(Mutex::new(HubState::default())),
        }
    }

    fn lock(&self) -> MutexGuard<'_, HubState> {
        self.state.lock().expect("session hub lock")
    }

    pub fn config(&self) -> &RunConfig {
        &self.cfg
    }

    pub fn connect(&self, emit: Emitter) -> ConnId {
        let mut st = self.lock();
        let id = st.next_conn;
        st.next_conn += 1;
        st.conns.insert(
            id,
            Conn {
                emit,
                session: None,
                slot: None,
            },
        );
        id
    }

    /// Drop a connection. Its slot keeps playing noops and can be reclaimed
    /// with its token within the reconnect window, or by anyone afterwards.
    pub fn disconnect(&self, conn: ConnId) {
        let mut st = self.lock();
        let Some(c) = st.conns.remove(&conn) else { return };
        if let (Some(sid), Some(slot)) = (c.session, c.slot) {
            if let Some(s) = st.sessions.get_mut(&sid) {
                if let Some(claim) = s.claims.get_mut(&slot) {
                    if claim.conn == Some(conn) {
                        claim.conn = None;
                        claim.disconnected_at = Some(Instant::now());
                    }
                }
                if let Some(h) = s.inputs.get(&slot) {
                    h.clear();
                }
            }
        }
    }

    /// Parse a text frame and dispatch it; malformed frames get an error reply.
    pub fn handle_text(&self, conn: ConnId, text: &str) {
        match serde_json::from_str::<ClientFrame>(text) {
            Ok(f) => self.handle(conn, f),
            Err(e) => self.reply(conn, ServerFrame::error(format!("malformed frame: {e}"))),
        }
    }

    pub fn handle(&self, conn: ConnId, frame: ClientFrame) {
        let result = match frame {
            ClientFrame::Join { session, scenario } => self.join(conn, session, scenario),
            ClientFrame::Claim { slot, token } => self.claim(conn, slot, token),
            ClientFrame::Input { action } => self.with_input(conn, |h| h.press(action)),
            ClientFrame::Message { category, text } => match Channel::validate(&category, &text) {
                Ok(c) => self.with_input(conn, |h| h.say(c, text)),
                Err(e) => Err(e.to_string()),
            },
        };
        if let Err(message) = result {
            self.reply(conn, ServerFrame::error(message));
        }
    }

    fn reply(&self, conn: ConnId, frame: ServerFrame) {
        let emit = self.lock().conns.get(&conn).map(|c| c.emit.clone());
        if let Some(emit) = emit {
            emit(frame);
        }
    }

    pub fn phase(&self, session: &str) -> Option<Phase> {
        self.lock().sessions.get(session).map(|s| s.phase)
    }

    /// Latest world snapshot of a running or finished session.
    pub fn snapshot(&self, session: &str) -> Option<WorldSnapshot> {
        self.lock().sessions.get(session).and_then(|s| s.snapshot.clone())
    }

    /// Block until the session's runner thread exits.
    pub fn wait(&self, session: &str) {
        let runner = self.lock().sessions.get_mut(session).and_then(|s| s.runner.take());
        if let Some(r) = runner {
            let _ = r.join();
        }
    }

    fn slot_statuses(&self, s: &Session) -> Vec<SlotStatus> {
        self.cfg
            .agents
            .iter()
            .map(|a| SlotStatus {
                slot: a.slot,
                kind: a.kind,
                claimed: s.claims.get(&a.slot).is_some_and(|c| c.conn.is_some()),
            })
            .collect()
    }

    fn join(&self, conn: ConnId, session: String, scenario: Option<ScenarioId>) -> Result<(), String> {
        if !valid_session_id(&session) {
            return Err(format!("invalid session id `{session}`"));
        }
        let mut st = self.lock();
        if st.conns.get(&conn).and_then(|c| c.session.as_ref()).is_some() {
            return Err("connection already joined a session".into());
        }
        if !st.sessions.contains_key(&session) {
            let scenario = match scenario {
                Some(id) => id,
                None => self.cfg.scenarios.first().copied().unwrap_or(ScenarioId::BASELINE),
            };
            self.cfg.scenario_spec(scenario).map_err(|e| e.to_string())?;
            if let Some(path) = self.log_path(&session) {
                if path.exists() && !self.opts.force {
                    return Err(format!("{} already exists; pass --force to overwrite", path.display()));
                }
            }
            let mut humans = BTreeMap::new();
            let mut inputs = BTreeMap::new();
            for a in self.cfg.agents.iter().filter(|a| a.kind == AgentKind::Human) {
                let h = HumanInput::new();
                inputs.insert(a.slot, h.handle());
                humans.insert(a.slot, h);
            }
            let index = st.sessions.len() as u32;
            st.sessions.insert(
                session.clone(),
                Session {
                    scenario,
                    index,
                    phase: Phase::Lobby,
                    claims: BTreeMap::new(),
                    inputs,
                    humans,
                    snapshot: None,
                    runner: None,
                },
            );
        }
        let s = &st.sessions[&session];
        let joined = ServerFrame::Joined {
            session: session.clone(),
            scenario: s.scenario,
            phase: s.phase,
            slots: self.slot_statuses(s),
        };
        let c = st.conns.get_mut(&conn).ok_or("unknown connection")?;
        c.session = Some(session.clone());
        (c.emit)(joined);
        self.maybe_start(&mut st, &session);
        Ok(())
    }

    fn claim(&self, conn: ConnId, slot: u8, token: Option<String>) -> Result<(), String> {
        let window = Duration::from_millis(self.cfg.reconnect_window_ms);
        let mut st = self.lock();
        let c = st.conns.get(&conn).ok_or("unknown connection")?;
        let sid = c.session.clone().ok_or("join a session before claiming a slot")?;
        if c.slot.is_some() {
            return Err("connection already holds a slot".into());
        }
        let s = st.sessions.get_mut(&sid).ok_or("unknown session")?;
        if s.phase == Phase::Finished {
            return Err("session has finished".into());
        }
        if !s.inputs.contains_key(&slot) {
            return Err(format!("slot {slot} is not a human slot"));
        }
        let token = match s.claims.get_mut(&slot) {
            None => {
                let t = new_token();
                s.claims.insert(
                    slot,
                    Claim {
                        token: t.clone(),
                        conn: Some(conn),
                        disconnected_at: None,
                    },
                );
                t
            }
            Some(claim) if claim.conn.is_some() => return Err(format!("slot {slot} already claimed")),
            Some(claim) => {
                let expired = claim.disconnected_at.is_some_and(|t| t.elapsed() > window);
                if !expired && token.as_deref() != Some(claim.token.as_str()) {
                    return Err(format!("slot {slot} is reserved for its disconnected player"));
                }
                if expired {
                    claim.token = new_token();
                }
                claim.conn = Some(conn);
                claim.disconnected_at = None;
                claim.token.clone()
            }
        };
        let c = st.conns.get_mut(&conn).expect("checked above");
        c.slot = Some(slot);
        (c.emit)(ServerFrame::Claimed { slot, token });
        self.maybe_start(&mut st, &sid);
        Ok(())
    }

    fn with_input(&self, conn: ConnId, f: impl FnOnce(&HumanInputHandle)) -> Result<(), String> {
        let st = self.lock();
        let c = st.conns.get(&conn).ok_or("unknown connection")?;
        let (Some(sid), Some(slot)) = (&c.session, c.slot) else {
            return Err("claim a slot before sending input".into());
        };
        let s = &st.sessions[sid];
        if s.phase != Phase::Running {
            return Err(format!("session is not running ({:?})", s.phase).to_lowercase());
        }
        f(&s.inputs[&slot]);
        Ok(())
    }

    fn log_path(&self, session: &str) -> Option<PathBuf> {
        self.opts.out_dir.as_ref().map(|d| d.join(format!("{session}.jsonl")))
    }

    fn maybe_start(&self, st: &mut HubState, sid: &str) {
        let s = st.sessions.get_mut(sid).expect("session exists");
        if s.phase != Phase::Lobby || s.inputs.keys().any(|slot| !s.claims.contains_key(slot)) {
            return;
        }
        s.phase = Phase::Running;
        let humans = std::mem::take(&mut s.humans);
        let (scenario, index) = (s.scenario, s.index);
        let hub = self.clone();
        let sid_owned = sid.to_string();
        let runner = std::thread::Builder::new()
            .name(format!("session-{sid}"))
            .spawn(move || hub.run(&sid_owned, scenario, index, humans))
            .expect("spawn session runner");
        st.sessions.get_mut(sid).expect("session exists").runner = Some(runner);
    }

    fn run(&self, sid: &str, scenario: ScenarioId, index: u32, humans: BTreeMap<u8, HumanInput>) {
        let result = self.run_inner(sid, scenario, index, humans);
        let mut st = self.lock();
        let end = match result {
            Ok((valid, abort_reason, scores, log_path)) => ServerFrame::End {
                session: sid.to_string(),
                valid,
                abort_reason,
                scores,
                log_path,
            },
            Err(e) => ServerFrame::End {
                session: sid.to_string(),
                valid: false,
                abort_reason: Some(e.to_string()),
                scores: Vec::new(),
                log_path: None,
            },
        };
        if let Some(s) = st.sessions.get_mut(sid) {
            s.phase = Phase::Finished;
        }
        for c in st.conns.values().filter(|c| c.session.as_deref() == Some(sid)) {
            (c.emit)(end.clone());
        }
    }

    #[allow(clippy::type_complexity)]
    fn run_inner(
        &self,
        sid: &str,
        scenario: ScenarioId,
        index: u32,
        mut humans: BTreeMap<u8, HumanInput>,
    ) -> Result<(bool, Option<String>, Vec<u32>, Option<PathBuf>), HarnessError> {
        let spec = self.cfg.scenario_spec(scenario)?;
        let mut setup = self.cfg.episode_setup(&spec, index, self.log_path(sid))?;
        setup.episode_id = format!("{}-{sid}", setup.episode_id);
        let client = match (&self.opts.client, self.cfg.llm_slots().is_empty()) {
            (Some(c), _) => Some(c.clone()),
            (None, false) => Some(self.cfg.llm_client()),
            (None, true) => None,
        };
        let mut llm_agents = match &client {
            Some(c) => self.cfg.build_llm_agents(c, None)?,
            None => Vec::new(),
        };
        let mut policies = self.cfg.policies(setup.seed, &mut llm_agents, |id| {
            humans.remove(&id.0).map(|h| Box::new(h) as Box<dyn Policy>)
        })?;
        let mut observer = Pacer {
            hub: self,
            session: sid,
            period: Duration::from_millis(self.cfg.tick_period_ms),
        };
        let outcome = run_episode(&setup, &mut policies, &mut observer)?;
        if let Some(s) = self.lock().sessions.get_mut(sid) {
            s.snapshot = Some(outcome.world.snapshot());
        }
        Ok((
            outcome.summary.valid,
            outcome.summary.abort_reason,
            outcome.summary.scores,
            outcome.log_path,
        ))
    }
}

/// Sends each claimed slot its frame, then waits one tick period so inputs
/// arriving in between apply to this tick.
struct Pacer<'a> {
    hub: &'a SessionHub,
    session: &'a str,
    period: Duration,
}

impl TickObserver for Pacer<'_> {
    fn before_tick(&mut self, world: &WorldState, channel: &Channel) -> Result<(), String> {
        {
            let mut st = self.hub.lock();
            let HubState { conns, sessions, .. } = &mut *st;
            let s = sessions.get_mut(self.session).ok_or("session removed")?;
            s.snapshot = Some(world.snapshot());
            for (&slot, claim) in &s.claims {
                let Some(conn) = claim.conn.and_then(|c| conns.get(&c)) else {
                    continue;
                };
                let id = AgentId(slot);
                let (Ok(obs), Some(body)) = (world.observe(id), world.agent(id)) else {
                    continue;
                };
                let view = serialize_ascii(&obs);
                let position = channel.order_index(id).unwrap_or(0);
                (conn.emit)(ServerFrame::Frame(Box::new(FramePayload {
                    session: self.session.to_string(),
                    slot,
                    tick: world.tick,
                    horizon: world.horizon,
                    rows: view.rows,
                    legend: view.legend,
                    score: body.consumed_total,
                    frozen: body.is_frozen(),
                    messages: channel.visible_messages(position, world.tick),
                })));
            }
        }
        std::thread::sleep(self.period);
        Ok(())
    }

    fn after_tick(&mut self, world: &WorldState, _channel: &Channel, _records: &[EventRecord]) {
        if let Some(s) = self.hub.lock().sessions.get_mut(self.session) {
            s.snapshot = Some(world.snapshot());
        }
    }
}

#[cfg(test)]
mod tests {
    use std::path::Path;
    use std::sync::mpsc;

    use super::*;

    fn cfg(extra: &str) -> RunConfig {
        let text = format!(
            "group_id = \"live\"\nhorizon = 20\nscenarios = [\"E1\"]\n{extra}\
             [[agents]]\nslot = 0\nkind = \"human\"\n[[agents]]\nslot = 1\nkind = \"human\"\n[[agents]]\nslot = 2\nkind = \"bot\"\n"
        );
        RunConfig::from_toml_str(&text, Path::new(".")).unwrap()
    }

    fn client(hub: &SessionHub) -> (ConnId, mpsc::Receiver<ServerFrame>) {
        let (tx, rx) = mpsc::channel();
        let tx = Mutex::new(tx);
        let id = hub.connect(Arc::new(move |f| {
            let _ = tx.lock().unwrap().send(f);
        }));
        (id, rx)
    }

    fn token(rx: &mpsc::Receiver<ServerFrame>) -> String {
        loop {
            if let ServerFrame::Claimed { token, .. } = rx.recv().unwrap() {
                return token;
            }
        }
    }

    #[test]
    fn double_claim_is_rejected() {
        let hub = SessionHub::new(cfg(""), HubOptions::default());
        let (a, ra) = client(&hub);
        let (b, rb) = client(&hub);
        hub.handle_text(a, r#"{"type":"join","session":"s"}"#);
        hub.handle_text(b, r#"{"type":"join","session":"s"}"#);
        hub.handle(a, ClientFrame::Claim { slot: 0, token: None });
        token(&ra);
        hub.handle(b, ClientFrame::Claim { slot: 0, token: None });
        let errors: Vec<ServerFrame> = rb
            .try_iter()
            .filter(|f| matches!(f, ServerFrame::Error { .. }))
            .collect();
        assert_eq!(errors.len(), 1);
        assert_eq!(hub.phase("s"), Some(Phase::Lobby));
        hub.handle(b, ClientFrame::Claim { slot: 2, token: None });
        assert!(matches!(rb.try_recv(), Ok(ServerFrame::Error { .. })));
    }

    #[test]
    fn session_runs_to_end_with_frames() {
        let hub = SessionHub::new(cfg("tick_period_ms = 1\n"), HubOptions::default());
        let (a, ra) = client(&hub);
        let (b, rb) = client(&hub);
        for (c, slot) in [(a, 0), (b, 1)] {
            hub.handle(
                c,
                ClientFrame::Join {
                    session: "s".into(),
                    scenario: None,
                },
            );
            hub.handle(c, ClientFrame::Claim { slot, token: None });
        }
        hub.wait("s");
        assert_eq!(hub.phase("s"), Some(Phase::Finished));
        let frames: Vec<ServerFrame> = ra.try_iter().collect();
        let ticks = frames.iter().filter(|f| matches!(f, ServerFrame::Frame(_))).count();
        assert_eq!(ticks, 20);
        assert!(matches!(frames.last(), Some(ServerFrame::End { valid: true, .. })));
        assert!(rb.try_iter().any(|f| matches!(f, ServerFrame::End { .. })));
    }

    #[test]
    fn reconnect_needs_token_within_window() {
        let hub = SessionHub::new(cfg("tick_period_ms = 0\n"), HubOptions::default());
        let (a, ra) = client(&hub);
        hub.handle(
            a,
            ClientFrame::Join {
                session: "s".into(),
                scenario: None,
            },
        );
        hub.handle(a, ClientFrame::Claim { slot: 0, token: None });
        let t = token(&ra);
        hub.disconnect(a);
        let (b, rb) = client(&hub);
        hub.handle(
            b,
            ClientFrame::Join {
                session: "s".into(),
                scenario: None,
            },
        );
        hub.handle(b, ClientFrame::Claim { slot: 0, token: None });
        assert!(rb.try_iter().any(|f| matches!(f, ServerFrame::Error { .. })));
        hub.handle(
            b,
            ClientFrame::Claim {
                slot: 0,
                token: Some(t.clone()),
            },
        );
        assert_eq!(token(&rb), t);
    }

    #[test]
    fn oversized_message_is_refused() {
        let hub = SessionHub::new(cfg(""), HubOptions::default());
        let (a, ra) = client(&hub);
        hub.handle_text(a, "not json");
        hub.handle(
            a,
            ClientFrame::Join {
                session: "s".into(),
                scenario: None,
            },
        );
        hub.handle(
            a,
            ClientFrame::Message {
                category: "Q".into(),
                text: vec!["w"; 51].join(" "),
            },
        );
        let errors = ra.try_iter().filter(|f| matches!(f, ServerFrame::Error { .. })).count();
        assert_eq!(errors, 2);
    }

    #[test]
    fn frames_round_trip_as_json() {
        let f = ClientFrame::Input {
            action: Action::MoveForward,
        };
        let text = serde_json::to_string(&f).unwrap();
        assert_eq!(text, r#"{"type":"input","action":"move_forward"}"#);
        assert_eq!(serde_json::from_str::<ClientFrame>(&text).unwrap(), f);
    }
}
