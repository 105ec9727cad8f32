//! Fleet registry, liveness tracking and all-or-nothing broadcast of the
//! common acquisition primitives.

use std::collections::{BTreeMap, HashMap};
use std::sync::{Arc, Mutex, MutexGuard};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::clock::Clock;
use crate::descriptor::SensorDescriptor;
use crate::lifecycle::{is_legal, Cause, Lifecycle, Transition};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ManagerConfig {
    pub heartbeat_period_us: u64,
    /// A sensor is stale after this many periods without a heartbeat.
    pub stale_after_beats: u64,
    pub disk_budget_bps: f64,
    pub token_seed: u64,
}

impl Default for ManagerConfig {
    fn default() -> Self {
        Self {
            heartbeat_period_us: 1_000_000,
            stale_after_beats: 3,
            disk_budget_bps: 270e6,
            token_seed: 0,
        }
    }
}

impl ManagerConfig {
    /// Defaults overridden by `GATE_HEARTBEAT_SECS` and `GATE_DISK_BUDGET_MBPS`.
    pub fn from_env() -> Result<Self, String> {
        Self::default().with_env()
    }

    /// `self` overridden by `GATE_HEARTBEAT_SECS` and `GATE_DISK_BUDGET_MBPS`.
    pub fn with_env(self) -> Result<Self, String> {
        let mut c = self;
        if let Ok(v) = std::env::var("GATE_HEARTBEAT_SECS") {
            let secs: f64 = v.parse().map_err(|_| format!("GATE_HEARTBEAT_SECS: not a number: {v}"))?;
            if !(secs > 0.0 && secs.is_finite()) {
                return Err("GATE_HEARTBEAT_SECS must be positive".into());
            }
            c.heartbeat_period_us = (secs * 1e6).round() as u64;
        }
        if let Ok(v) = std::env::var("GATE_DISK_BUDGET_MBPS") {
            let mb: f64 = v.parse().map_err(|_| format!("GATE_DISK_BUDGET_MBPS: not a number: {v}"))?;
            if !(mb > 0.0 && mb.is_finite()) {
                return Err("GATE_DISK_BUDGET_MBPS must be positive".into());
            }
            c.disk_budget_bps = mb * 1e6;
        }
        Ok(c)
    }

    pub fn stale_after_us(&self) -> u64 {
        self.heartbeat_period_us * self.stale_after_beats
    }
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum ManagerError {
    #[error("{0}")]
    Conflict(String),
    #[error("unknown token")]
    Unauthorized,
    #[error("unknown sensor `{0}`")]
    NotFound(String),
    #[error("sensor `{sensor}` does not declare primitive `{name}`")]
    NotDeclared { sensor: String, name: String },
    #[error("sensor `{sensor}` reported {from:?} -> {to:?}; moved to ERROR")]
    IllegalTransition { sensor: String, from: Lifecycle, to: Lifecycle },
    #[error("invalid request: {0}")]
    Invalid(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SensorState {
    pub lifecycle: Lifecycle,
    pub last_heartbeat_us: u64,
    pub bytes_written: u64,
    pub current_session: Option<String>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Command {
    Start,
    Stop,
    Pause,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Blocker {
    pub sensor: String,
    pub lifecycle: Lifecycle,
    pub stale: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BroadcastOutcome {
    pub command: Command,
    pub accepted: bool,
    pub reason: Option<String>,
    pub blockers: Vec<Blocker>,
    pub session_id: Option<String>,
    /// Lifecycle of every sensor after the broadcast.
    pub states: BTreeMap<String, Lifecycle>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FleetEntry {
    pub descriptor: SensorDescriptor,
    pub endpoint: String,
    pub specific_primitives: Vec<String>,
    pub state: SensorState,
    pub stale: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FleetView {
    pub now_us: u64,
    pub sensors: Vec<FleetEntry>,
    pub declared_total_bps: f64,
    pub disk_budget_bps: f64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StreamRecord {
    pub sensor: String,
    pub complete: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionRecord {
    pub id: String,
    pub started_us: u64,
    pub stopped_us: Option<u64>,
    pub streams: Vec<StreamRecord>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HeartbeatAck {
    /// State the manager holds for the sensor; the sensor adopts it.
    pub lifecycle: Lifecycle,
    pub current_session: Option<String>,
}

struct Record {
    descriptor: SensorDescriptor,
    endpoint: String,
    token: String,
    specific_primitives: Vec<String>,
    state: SensorState,
    /// Last lifecycle the sensor itself reported; repeats carry no news.
    last_reported: Lifecycle,
}

struct Inner {
    sensors: BTreeMap<String, Record>,
    tokens: HashMap<String, String>,
    trace: Vec<Transition>,
    sessions: Vec<SessionRecord>,
    next_session: u64,
    rng: ChaCha8Rng,
}

impl Inner {
    fn set(&mut self, id: &str, to: Lifecycle, cause: Cause, now: u64) {
        let r = self.sensors.get_mut(id).expect("caller checked the id");
        let from = r.state.lifecycle;
        if from != to {
            r.state.lifecycle = to;
            self.trace.push(Transition {
                at_us: now,
                sensor: id.to_string(),
                from,
                to,
                cause,
            });
        }
    }

    fn states(&self) -> BTreeMap<String, Lifecycle> {
        self.sensors.iter().map(|(k, r)| (k.clone(), r.state.lifecycle)).collect()
    }

    fn finish_stream(&mut self, id: &str, complete: bool) {
        let Some(r) = self.sensors.get_mut(id) else { return };
        let Some(sid) = r.state.current_session.take() else { return };
        if let Some(s) = self.sessions.iter_mut().find(|s| s.id == sid) {
            if let Some(st) = s.streams.iter_mut().find(|st| st.sensor == id) {
                st.complete = complete;
            }
        }
    }
}

/// Serialises every mutation behind one lock; readers get consistent snapshots.
pub struct AcquisitionManager {
    clock: Arc<dyn Clock>,
    config: ManagerConfig,
    inner: Mutex<Inner>,
}

impl AcquisitionManager {
    pub fn new(clock: Arc<dyn Clock>, config: ManagerConfig) -> Self {
        let rng = ChaCha8Rng::seed_from_u64(config.token_seed);
        Self {
            clock,
            config,
            inner: Mutex::new(Inner {
                sensors: BTreeMap::new(),
                tokens: HashMap::new(),
                trace: Vec::new(),
                sessions: Vec::new(),
                next_session: 1,
                rng,
            }),
        }
    }

    pub fn config(&self) -> &ManagerConfig {
        &self.config
    }

    pub fn now_us(&self) -> u64 {
        self.clock.now_us()
    }

    fn lock(&self) -> MutexGuard<'_, Inner> {
        self.inner.lock().unwrap_or_else(|p| p.into_inner())
    }

    fn is_stale(&self, r: &Record, now: u64) -> bool {
        now.saturating_sub(r.state.last_heartbeat_us) > self.config.stale_after_us()
    }

    pub fn register(
        &self,
        descriptor: SensorDescriptor,
        endpoint: impl Into<String>,
        specific_primitives: Vec<String>,
    ) -> Result<String, ManagerError> {
        descriptor.validate().map_err(ManagerError::Invalid)?;
        let allowed = descriptor.kind.allowed_primitives();
        if let Some(p) = specific_primitives.iter().find(|p| !allowed.contains(&p.as_str())) {
            return Err(ManagerError::Invalid(format!("{:?} sensors cannot declare `{p}`", descriptor.kind)));
        }
        let now = self.now_us();
        let mut g = self.lock();
        if g.sensors.contains_key(&descriptor.id) {
            return Err(ManagerError::Conflict(format!("sensor `{}` is already registered", descriptor.id)));
        }
        let token = loop {
            let t = format!("{:032x}", g.rng.random::<u128>());
            if !g.tokens.contains_key(&t) {
                break t;
            }
        };
        let id = descriptor.id.clone();
        g.tokens.insert(token.clone(), id.clone());
        g.sensors.insert(
            id,
            Record {
                descriptor,
                endpoint: endpoint.into(),
                token: token.clone(),
                specific_primitives,
                state: SensorState {
                    lifecycle: Lifecycle::Idle,
                    last_heartbeat_us: now,
                    bytes_written: 0,
                    current_session: None,
                },
                last_reported: Lifecycle::Idle,
            },
        );
        Ok(token)
    }

    pub fn unregister(&self, token: &str) -> Result<(), ManagerError> {
        let mut g = self.lock();
        let id = g.tokens.remove(token).ok_or(ManagerError::Unauthorized)?;
        let busy = matches!(
            g.sensors[&id].state.lifecycle,
            Lifecycle::Acquiring | Lifecycle::Paused | Lifecycle::Saving
        );
        g.finish_stream(&id, !busy);
        g.sensors.remove(&id);
        Ok(())
    }

    /// Records liveness and any state change the sensor reports.
    pub fn heartbeat(&self, token: &str, reported: Lifecycle, bytes_written: u64) -> Result<HeartbeatAck, ManagerError> {
        let now = self.now_us();
        let mut g = self.lock();
        let id = g.tokens.get(token).cloned().ok_or(ManagerError::Unauthorized)?;
        let r = g.sensors.get_mut(&id).expect("token map and registry agree");
        r.state.last_heartbeat_us = now;
        r.state.bytes_written = bytes_written;
        let current = r.state.lifecycle;
        let news = reported != r.last_reported;
        r.last_reported = reported;
        if news && reported != current {
            if !is_legal(current, reported) {
                g.set(&id, Lifecycle::Error, Cause::Violation, now);
                g.finish_stream(&id, false);
                return Err(ManagerError::IllegalTransition {
                    sensor: id,
                    from: current,
                    to: reported,
                });
            }
            g.set(&id, reported, Cause::Heartbeat, now);
            match (current, reported) {
                (Lifecycle::Saving, Lifecycle::Idle) => g.finish_stream(&id, true),
                (_, Lifecycle::Error) => g.finish_stream(&id, false),
                _ => {}
            }
        }
        let r = &g.sensors[&id];
        Ok(HeartbeatAck {
            lifecycle: r.state.lifecycle,
            current_session: r.state.current_session.clone(),
        })
    }

    pub fn broadcast(&self, command: Command) -> BroadcastOutcome {
        let now = self.now_us();
        let mut g = self.lock();
        let blocker = |r: &Record, stale: bool| Blocker {
            sensor: r.descriptor.id.clone(),
            lifecycle: r.state.lifecycle,
            stale,
        };
        let refuse = |g: &Inner, reason: &str, blockers: Vec<Blocker>| BroadcastOutcome {
            command,
            accepted: false,
            reason: Some(reason.to_string()),
            blockers,
            session_id: None,
            states: g.states(),
        };
        if g.sensors.is_empty() {
            return refuse(&g, "no sensors registered", vec![]);
        }
        let ids: Vec<String> = g.sensors.keys().cloned().collect();
        let session_id;
        match command {
            Command::Start => {
                let blockers: Vec<Blocker> = g
                    .sensors
                    .values()
                    .filter_map(|r| {
                        let stale = self.is_stale(r, now);
                        (r.state.lifecycle != Lifecycle::Idle || stale).then(|| blocker(r, stale))
                    })
                    .collect();
                if !blockers.is_empty() {
                    return refuse(&g, "start needs every sensor IDLE and live", blockers);
                }
                let sid = format!("acq-{:06}", g.next_session);
                g.next_session += 1;
                for id in &ids {
                    g.set(id, Lifecycle::Acquiring, Cause::Broadcast, now);
                    g.sensors.get_mut(id).expect("listed").state.current_session = Some(sid.clone());
                }
                g.sessions.push(SessionRecord {
                    id: sid.clone(),
                    started_us: now,
                    stopped_us: None,
                    streams: ids
                        .iter()
                        .map(|id| StreamRecord {
                            sensor: id.clone(),
                            complete: false,
                        })
                        .collect(),
                });
                session_id = Some(sid);
            }
            Command::Stop => {
                let blockers: Vec<Blocker> = g
                    .sensors
                    .values()
                    .filter(|r| r.state.lifecycle == Lifecycle::Saving)
                    .map(|r| blocker(r, self.is_stale(r, now)))
                    .collect();
                if !blockers.is_empty() {
                    return refuse(&g, "a sensor is still saving", blockers);
                }
                let mut stopped = Vec::new();
                for id in &ids {
                    match g.sensors[id].state.lifecycle {
                        Lifecycle::Paused => {
                            g.set(id, Lifecycle::Acquiring, Cause::Broadcast, now);
                            g.set(id, Lifecycle::Saving, Cause::Broadcast, now);
                        }
                        Lifecycle::Acquiring => g.set(id, Lifecycle::Saving, Cause::Broadcast, now),
                        _ => continue,
                    }
                    if let Some(s) = g.sensors[id].state.current_session.clone() {
                        stopped.push(s);
                    }
                }
                for s in g.sessions.iter_mut().filter(|s| stopped.contains(&s.id)) {
                    s.stopped_us.get_or_insert(now);
                }
                session_id = stopped.into_iter().next();
            }
            Command::Pause => {
                let all_paused = g.sensors.values().all(|r| r.state.lifecycle == Lifecycle::Paused);
                let blockers: Vec<Blocker> = g
                    .sensors
                    .values()
                    .filter(|r| !matches!(r.state.lifecycle, Lifecycle::Acquiring | Lifecycle::Paused))
                    .map(|r| blocker(r, self.is_stale(r, now)))
                    .collect();
                if !blockers.is_empty() {
                    return refuse(&g, "pause needs every sensor ACQUIRING or PAUSED", blockers);
                }
                let (from, to) = if all_paused {
                    (Lifecycle::Paused, Lifecycle::Acquiring)
                } else {
                    (Lifecycle::Acquiring, Lifecycle::Paused)
                };
                for id in &ids {
                    if g.sensors[id].state.lifecycle == from {
                        g.set(id, to, Cause::Broadcast, now);
                    }
                }
                session_id = g.sensors.values().find_map(|r| r.state.current_session.clone());
            }
        }
        BroadcastOutcome {
            command,
            accepted: true,
            reason: None,
            blockers: vec![],
            session_id,
            states: g.states(),
        }
    }

    /// Endpoint to forward a kind-specific primitive to, after checking the
    /// sensor declares it.
    pub fn resolve_primitive(&self, sensor: &str, name: &str) -> Result<String, ManagerError> {
        let g = self.lock();
        let r = g.sensors.get(sensor).ok_or_else(|| ManagerError::NotFound(sensor.to_string()))?;
        if !r.specific_primitives.iter().any(|p| p == name) {
            return Err(ManagerError::NotDeclared {
                sensor: sensor.to_string(),
                name: name.to_string(),
            });
        }
        Ok(r.endpoint.clone())
    }

    pub fn fleet(&self) -> FleetView {
        let now = self.now_us();
        let g = self.lock();
        let sensors: Vec<FleetEntry> = g
            .sensors
            .values()
            .map(|r| FleetEntry {
                descriptor: r.descriptor.clone(),
                endpoint: r.endpoint.clone(),
                specific_primitives: r.specific_primitives.clone(),
                state: r.state.clone(),
                stale: self.is_stale(r, now),
            })
            .collect();
        FleetView {
            now_us: now,
            declared_total_bps: sensors.iter().map(|s| s.descriptor.declared_rate()).sum(),
            disk_budget_bps: self.config.disk_budget_bps,
            sensors,
        }
    }

    pub fn trace(&self) -> Vec<Transition> {
        self.lock().trace.clone()
    }

    pub fn sessions(&self) -> Vec<SessionRecord> {
        self.lock().sessions.clone()
    }

    /// Token of a registered sensor, for in-process agents.
    pub fn token_of(&self, sensor: &str) -> Option<String> {
        self.lock().sensors.get(sensor).map(|r| r.token.clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clock::VirtualClock;
    use crate::descriptor::portal_fleet;
    use crate::lifecycle::illegal_transitions;

    fn setup() -> (VirtualClock, AcquisitionManager, Vec<String>) {
        let clock = VirtualClock::new(0);
        let m = AcquisitionManager::new(Arc::new(clock.clone()), ManagerConfig::default());
        let tokens = portal_fleet()
            .into_iter()
            .map(|(d, p)| m.register(d.clone(), format!("local://{}", d.id), p).unwrap())
            .collect();
        (clock, m, tokens)
    }

    fn lifecycles(m: &AcquisitionManager) -> Vec<Lifecycle> {
        m.fleet().sensors.iter().map(|s| s.state.lifecycle).collect()
    }

    #[test]
    fn registration_and_conflicts() {
        let (_, m, tokens) = setup();
        assert_eq!(m.fleet().sensors.len(), 5);
        let dup = m.register(SensorDescriptor::matrix("frontal"), "x", vec![]);
        assert!(matches!(dup, Err(ManagerError::Conflict(_))));
        m.unregister(&tokens[0]).unwrap();
        assert_eq!(m.unregister(&tokens[0]), Err(ManagerError::Unauthorized));
        assert!(m.register(SensorDescriptor::matrix("frontal"), "x", vec![]).is_ok());
        let bad = m.register(SensorDescriptor::matrix("m2"), "x", vec!["focus".into()]);
        assert!(matches!(bad, Err(ManagerError::Invalid(_))));
    }

    #[test]
    fn start_stop_cycle() {
        let (clock, m, tokens) = setup();
        let out = m.broadcast(Command::Start);
        assert!(out.accepted);
        assert_eq!(out.session_id.as_deref(), Some("acq-000001"));
        assert!(lifecycles(&m).iter().all(|&l| l == Lifecycle::Acquiring));

        assert!(m.broadcast(Command::Pause).accepted);
        assert!(lifecycles(&m).iter().all(|&l| l == Lifecycle::Paused));
        assert!(!m.broadcast(Command::Start).accepted);
        assert!(m.broadcast(Command::Pause).accepted);
        assert!(lifecycles(&m).iter().all(|&l| l == Lifecycle::Acquiring));

        assert!(m.broadcast(Command::Stop).accepted);
        assert!(lifecycles(&m).iter().all(|&l| l == Lifecycle::Saving));
        clock.advance(500_000);
        m.heartbeat(&tokens[1], Lifecycle::Saving, 10).unwrap();
        m.heartbeat(&tokens[1], Lifecycle::Idle, 10).unwrap();

        // one sensor still saving: stop refused, nothing moves
        let before = m.fleet();
        let refused = m.broadcast(Command::Stop);
        assert!(!refused.accepted);
        assert_eq!(refused.blockers.len(), 4);
        let after = m.fleet();
        assert_eq!(
            before.sensors.iter().map(|s| &s.state).collect::<Vec<_>>(),
            after.sensors.iter().map(|s| &s.state).collect::<Vec<_>>()
        );
        assert!(illegal_transitions(&m.trace()).is_empty());
    }

    #[test]
    fn stop_from_paused_passes_through_acquiring() {
        let (_, m, _) = setup();
        m.broadcast(Command::Start);
        m.broadcast(Command::Pause);
        m.broadcast(Command::Stop);
        let trace = m.trace();
        assert!(illegal_transitions(&trace).is_empty());
        let frontal: Vec<Lifecycle> = trace.iter().filter(|t| t.sensor == "frontal").map(|t| t.to).collect();
        use Lifecycle::*;
        assert_eq!(frontal, vec![Acquiring, Paused, Acquiring, Saving]);
    }

    #[test]
    fn staleness_blocks_start() {
        let (clock, m, tokens) = setup();
        clock.advance(2_900_000);
        for t in &tokens[1..] {
            m.heartbeat(t, Lifecycle::Idle, 0).unwrap();
        }
        clock.advance(200_000);
        let v = m.fleet();
        assert!(v.sensors.iter().find(|s| s.descriptor.id == "frontal").unwrap().stale);
        assert_eq!(v.sensors.iter().filter(|s| s.stale).count(), 1);
        let out = m.broadcast(Command::Start);
        assert!(!out.accepted);
        assert_eq!(out.blockers[0].sensor, "frontal");
        assert!(out.blockers[0].stale);
        m.heartbeat(&tokens[0], Lifecycle::Idle, 0).unwrap();
        assert!(m.broadcast(Command::Start).accepted);
    }

    #[test]
    fn illegal_report_moves_to_error() {
        let (_, m, tokens) = setup();
        let e = m.heartbeat(&tokens[0], Lifecycle::Saving, 0);
        assert!(matches!(e, Err(ManagerError::IllegalTransition { from: Lifecycle::Idle, to: Lifecycle::Saving, .. })));
        assert_eq!(lifecycles(&m)[m.fleet().sensors.iter().position(|s| s.descriptor.id == "frontal").unwrap()], Lifecycle::Error);
        assert!(m.heartbeat("nope", Lifecycle::Idle, 0) == Err(ManagerError::Unauthorized));
        // reset
        m.heartbeat(&tokens[0], Lifecycle::Idle, 0).unwrap();
        assert!(illegal_transitions(&m.trace()).is_empty());
    }

    #[test]
    fn unregister_mid_acquisition_flags_stream() {
        let (_, m, tokens) = setup();
        m.broadcast(Command::Start);
        m.unregister(&tokens[3]).unwrap();
        let s = &m.sessions()[0];
        let st = s.streams.iter().find(|s| s.sensor == "thermal-left").unwrap();
        assert!(!st.complete);
        assert_eq!(m.fleet().sensors.len(), 4);
    }

    #[test]
    fn primitives_resolve_only_when_declared() {
        let (_, m, _) = setup();
        assert_eq!(m.resolve_primitive("thermal-left", "focus").unwrap(), "local://thermal-left");
        assert!(matches!(m.resolve_primitive("frontal", "focus"), Err(ManagerError::NotDeclared { .. })));
        assert!(matches!(m.resolve_primitive("ghost", "focus"), Err(ManagerError::NotFound(_))));
    }
}
