//! In-process portal: a manager and its simulated sensors sharing one virtual
//! clock. Control goes through the manager API; sample bytes go to per-sensor
//! counters and never touch the manager.

use std::sync::Arc;

use crate::clock::{Clock, VirtualClock};
use crate::descriptor::{portal_fleet, SensorDescriptor};
use crate::lifecycle::Lifecycle;
use crate::manager::{AcquisitionManager, BroadcastOutcome, Command, ManagerConfig, ManagerError};
use crate::sensor::{SampleSource, SimulatedSensor};
use crate::throughput::{throughput_report, ThroughputReport};

/// Source that emits zeros of the right size, for rate accounting.
pub struct Blank(pub usize);

impl SampleSource for Blank {
    fn fill(&self, _: u64, _: u64, out: &mut Vec<u8>) {
        out.clear();
        out.resize(self.0, 0);
    }
}

pub struct Agent {
    pub sensor: SimulatedSensor,
    pub primitives: Vec<String>,
    /// `None` while unregistered.
    pub token: Option<String>,
    /// Heartbeats are skipped while muted.
    pub muted: bool,
    next_beat_us: u64,
    /// Bytes the sink has received, counted on the data plane.
    pub sink_bytes: u64,
}

pub struct Portal {
    pub clock: VirtualClock,
    pub manager: Arc<AcquisitionManager>,
    pub agents: Vec<Agent>,
    /// Upper bound on a single simulation step.
    pub step_us: u64,
}

impl Portal {
    pub fn new(config: ManagerConfig, fleet: Vec<(SensorDescriptor, Vec<String>, Box<dyn SampleSource>)>) -> Result<Self, ManagerError> {
        let clock = VirtualClock::new(0);
        let manager = Arc::new(AcquisitionManager::new(Arc::new(clock.clone()), config.clone()));
        let declared: f64 = fleet.iter().map(|(d, _, _)| d.declared_rate()).sum();
        let mut agents = Vec::new();
        for (d, primitives, source) in fleet {
            let share = config.disk_budget_bps * d.declared_rate() / declared;
            let token = manager.register(d.clone(), format!("local://{}", d.id), primitives.clone())?;
            agents.push(Agent {
                sensor: SimulatedSensor::new(d, source, share, 0),
                primitives,
                token: Some(token),
                muted: false,
                next_beat_us: config.heartbeat_period_us,
                sink_bytes: 0,
            });
        }
        Ok(Self {
            clock,
            manager,
            agents,
            step_us: 10_000,
        })
    }

    /// The five-camera fleet with blank payloads.
    pub fn blank_portal(config: ManagerConfig) -> Self {
        let fleet = portal_fleet()
            .into_iter()
            .map(|(d, p)| {
                let n = d.sample_bytes();
                (d, p, Box::new(Blank(n)) as Box<dyn SampleSource>)
            })
            .collect();
        Self::new(config, fleet).expect("portal fleet registers")
    }

    pub fn now_us(&self) -> u64 {
        self.clock.now_us()
    }

    fn agent_index(&self, id: &str) -> Option<usize> {
        self.agents.iter().position(|a| a.sensor.descriptor.id == id)
    }

    /// Sends one heartbeat for agent `i` reporting `report`, and adopts the
    /// manager's answer.
    pub fn beat_as(&mut self, i: usize, report: Lifecycle) -> Result<Lifecycle, ManagerError> {
        let now = self.now_us();
        let a = &mut self.agents[i];
        let token = a.token.clone().ok_or(ManagerError::Unauthorized)?;
        match self.manager.heartbeat(&token, report, a.sensor.bytes_written) {
            Ok(ack) => {
                a.sensor.command(ack.lifecycle, now);
                Ok(ack.lifecycle)
            }
            Err(e @ ManagerError::IllegalTransition { .. }) => {
                a.sensor.fail(now);
                Err(e)
            }
            Err(e) => Err(e),
        }
    }

    pub fn beat(&mut self, i: usize) -> Result<Lifecycle, ManagerError> {
        let report = self.agents[i].sensor.lifecycle();
        self.beat_as(i, report)
    }

    /// Advances time, ticking every sensor and sending periodic heartbeats.
    pub fn advance(&mut self, dt_us: u64) {
        let end = self.now_us() + dt_us;
        while self.now_us() < end {
            let now = self.clock.advance(self.step_us.min(end - self.now_us()));
            for i in 0..self.agents.len() {
                let a = &mut self.agents[i];
                let mut got = 0u64;
                a.sensor.tick(now, &mut |b| got += b.len() as u64);
                a.sink_bytes += got;
                if now >= a.next_beat_us {
                    a.next_beat_us = now + self.manager.config().heartbeat_period_us;
                    if a.token.is_some() && !a.muted {
                        let _ = self.beat(i);
                    }
                }
            }
        }
    }

    /// Broadcasts through the manager and pushes the resulting states to the
    /// sensors immediately.
    pub fn broadcast(&mut self, command: Command) -> BroadcastOutcome {
        let out = self.manager.broadcast(command);
        if out.accepted {
            let now = self.now_us();
            for a in &mut self.agents {
                if let Some(&s) = out.states.get(&a.sensor.descriptor.id) {
                    if a.token.is_some() {
                        a.sensor.command(s, now);
                    }
                }
            }
        }
        out
    }

    pub fn unregister(&mut self, id: &str) -> Result<(), ManagerError> {
        let i = self.agent_index(id).ok_or_else(|| ManagerError::NotFound(id.into()))?;
        let token = self.agents[i].token.take().ok_or(ManagerError::Unauthorized)?;
        self.manager.unregister(&token)
    }

    pub fn reregister(&mut self, id: &str) -> Result<(), ManagerError> {
        let i = self.agent_index(id).ok_or_else(|| ManagerError::NotFound(id.into()))?;
        let now = self.now_us();
        let a = &mut self.agents[i];
        let token = self
            .manager
            .register(a.sensor.descriptor.clone(), format!("local://{id}"), a.primitives.clone())?;
        a.token = Some(token);
        a.sensor.restart(now);
        Ok(())
    }

    /// Per-sensor rates of the most recent session over `duration_us`.
    pub fn throughput(&self, duration_us: u64) -> ThroughputReport {
        let written: Vec<(SensorDescriptor, u64)> = self
            .agents
            .iter()
            .map(|a| (a.sensor.descriptor.clone(), a.sensor.session_bytes()))
            .collect();
        throughput_report(&written, duration_us, self.manager.config().disk_budget_bps)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lifecycle::illegal_transitions;

    #[test]
    fn acquisition_cycle_returns_to_idle() {
        let mut p = Portal::blank_portal(ManagerConfig::default());
        assert!(p.broadcast(Command::Start).accepted);
        p.advance(2_000_000);
        assert!(p.broadcast(Command::Pause).accepted);
        p.advance(500_000);
        assert!(p.broadcast(Command::Stop).accepted);
        assert!(!p.broadcast(Command::Start).accepted);
        p.advance(5_000_000);
        let fleet = p.manager.fleet();
        assert!(fleet.sensors.iter().all(|s| s.state.lifecycle == Lifecycle::Idle), "{fleet:?}");
        assert!(p.manager.sessions()[0].streams.iter().all(|s| s.complete));
        assert!(illegal_transitions(&p.manager.trace()).is_empty());
        let report = p.throughput(2_000_000);
        for s in &report.sensors {
            assert!(s.relative_error < 0.01, "{s:?}");
        }
    }

    #[test]
    fn muted_sensor_goes_stale() {
        let mut p = Portal::blank_portal(ManagerConfig::default());
        p.agents[0].muted = true;
        p.advance(3_000_000);
        assert!(!p.manager.fleet().sensors.iter().any(|s| s.stale));
        p.advance(1_000_000);
        let stale: Vec<String> = p.manager.fleet().sensors.iter().filter(|s| s.stale).map(|s| s.descriptor.id.clone()).collect();
        assert_eq!(stale, ["frontal"]);
        assert!(!p.broadcast(Command::Start).accepted);
        p.agents[0].muted = false;
        p.beat(0).unwrap();
        assert!(p.broadcast(Command::Start).accepted);
    }
}
