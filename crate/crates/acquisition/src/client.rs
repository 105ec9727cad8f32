//! HTTP client side of a sensor: registration, heartbeats and a driver that
//! runs a simulated sensor against a remote manager.

use std::time::Duration;

use crate::clock::Clock;
use crate::manager::HeartbeatAck;
use crate::sensor::SimulatedSensor;
use crate::server::{HeartbeatRequest, RegisterRequest, RegisterResponse};

#[derive(Clone)]
pub struct ManagerClient {
    base: String,
    http: reqwest::Client,
}

#[derive(Debug, thiserror::Error)]
pub enum ClientError {
    #[error("transport: {0}")]
    Transport(#[from] reqwest::Error),
    #[error("{status}: {body}")]
    Status { status: u16, body: String },
}

impl ManagerClient {
    pub fn new(base: impl Into<String>) -> Self {
        Self {
            base: base.into().trim_end_matches('/').to_string(),
            http: reqwest::Client::new(),
        }
    }

    async fn check(resp: reqwest::Response) -> Result<reqwest::Response, ClientError> {
        if resp.status().is_success() {
            Ok(resp)
        } else {
            Err(ClientError::Status {
                status: resp.status().as_u16(),
                body: resp.text().await.unwrap_or_default(),
            })
        }
    }

    pub async fn register(&self, req: &RegisterRequest) -> Result<String, ClientError> {
        let resp = self.http.post(format!("{}/register", self.base)).json(req).send().await?;
        Ok(Self::check(resp).await?.json::<RegisterResponse>().await?.token)
    }

    pub async fn heartbeat(&self, req: &HeartbeatRequest) -> Result<HeartbeatAck, ClientError> {
        let resp = self.http.post(format!("{}/heartbeat", self.base)).json(req).send().await?;
        Ok(Self::check(resp).await?.json().await?)
    }

    pub async fn unregister(&self, token: &str) -> Result<(), ClientError> {
        let resp = self.http.delete(format!("{}/register/{token}", self.base)).send().await?;
        Self::check(resp).await.map(drop)
    }
}

/// Registers `sensor`, then ticks it and heartbeats every `period` until
/// `beats` heartbeats have been sent (forever if `None`). Sample bytes are
/// counted and dropped.
pub async fn drive_sensor(
    client: ManagerClient,
    endpoint: String,
    primitives: Vec<String>,
    mut sensor: SimulatedSensor,
    clock: impl Clock,
    period: Duration,
    beats: Option<u64>,
) -> Result<SimulatedSensor, ClientError> {
    let token = client
        .register(&RegisterRequest {
            descriptor: sensor.descriptor.clone(),
            endpoint,
            specific_primitives: primitives,
        })
        .await?;
    let mut sent = 0u64;
    let mut ticker = tokio::time::interval(period);
    while beats.is_none_or(|n| sent < n) {
        ticker.tick().await;
        let now = clock.now_us();
        sensor.tick(now, &mut |_| {});
        let req = HeartbeatRequest {
            token: token.clone(),
            lifecycle: sensor.lifecycle(),
            bytes_written: sensor.bytes_written,
        };
        match client.heartbeat(&req).await {
            Ok(ack) => sensor.command(ack.lifecycle, now),
            Err(ClientError::Status { status: 409, .. }) => sensor.fail(now),
            Err(e) => return Err(e),
        }
        sent += 1;
    }
    client.unregister(&token).await?;
    Ok(sensor)
}
