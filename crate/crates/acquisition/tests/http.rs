//! The manager and sensor endpoints over real sockets.

use std::sync::Arc;
use std::time::Duration;

use gate_acquisition::client::{drive_sensor, ManagerClient};
use gate_acquisition::sensor::SimulatedSensor;
use gate_acquisition::server::{manager_router, sensor_router, HttpForwarder, ManagerState, SensorEndpoint};
use gate_acquisition::sim::Blank;
use gate_acquisition::{portal_fleet, Clock, AcquisitionManager, FleetView, Lifecycle, ManagerConfig, VirtualClock, WallClock};
use serde_json::{json, Value};

async fn serve(router: axum::Router) -> String {
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    tokio::spawn(async move { axum::serve(listener, router).await.unwrap() });
    format!("http://{addr}")
}

async fn start_manager(clock: VirtualClock) -> (String, Arc<AcquisitionManager>) {
    let manager = Arc::new(AcquisitionManager::new(Arc::new(clock), ManagerConfig::default()));
    let state = ManagerState {
        manager: manager.clone(),
        forwarder: Arc::new(HttpForwarder::default()),
    };
    (serve(manager_router(state)).await, manager)
}

#[tokio::test]
async fn protocol_status_codes() {
    let clock = VirtualClock::new(0);
    let (base, _) = start_manager(clock.clone()).await;
    let http = reqwest::Client::new();

    let mut tokens = Vec::new();
    let mut thermal_ep = None;
    for (d, prims) in portal_fleet() {
        let ep = SensorEndpoint::new(d.id.clone(), prims.clone());
        let url = serve(sensor_router(ep.clone())).await;
        if d.id == "thermal-left" {
            thermal_ep = Some(ep);
        }
        let body = json!({ "descriptor": d, "endpoint": url, "specific_primitives": prims });
        let r = http.post(format!("{base}/register")).json(&body).send().await.unwrap();
        assert_eq!(r.status(), 201);
        tokens.push(r.json::<Value>().await.unwrap()["token"].as_str().unwrap().to_string());
        let again = http.post(format!("{base}/register")).json(&body).send().await.unwrap();
        assert_eq!(again.status(), 409);
    }
    let fleet: FleetView = http.get(format!("{base}/fleet")).send().await.unwrap().json().await.unwrap();
    assert_eq!(fleet.sensors.len(), 5);

    let r = http
        .post(format!("{base}/heartbeat"))
        .json(&json!({ "token": "nope", "lifecycle": "IDLE" }))
        .send()
        .await
        .unwrap();
    assert_eq!(r.status(), 401);

    let r = http
        .post(format!("{base}/sensor/thermal-left/primitive/focus"))
        .json(&json!({ "position": 12 }))
        .send()
        .await
        .unwrap();
    assert_eq!(r.status(), 200);
    let applied = thermal_ep.unwrap().applied.lock().unwrap().clone();
    assert_eq!(applied, vec![("focus".to_string(), json!({ "position": 12 }))]);
    let r = http.post(format!("{base}/sensor/frontal/primitive/focus")).send().await.unwrap();
    assert_eq!(r.status(), 409);
    let r = http.post(format!("{base}/sensor/ghost/primitive/focus")).send().await.unwrap();
    assert_eq!(r.status(), 404);

    let start = |c: &str| http.post(format!("{base}/primitive")).json(&json!({ "command": c })).send();
    assert_eq!(start("start").await.unwrap().status(), 200);
    assert_eq!(start("start").await.unwrap().status(), 409);
    assert_eq!(start("stop").await.unwrap().status(), 200);
    let refused: Value = start("stop").await.unwrap().json().await.unwrap();
    assert_eq!(refused["accepted"], false);
    assert_eq!(refused["blockers"].as_array().unwrap().len(), 5);

    let r = http
        .post(format!("{base}/heartbeat"))
        .json(&json!({ "token": tokens[0], "lifecycle": "PAUSED" }))
        .send()
        .await
        .unwrap();
    assert_eq!(r.status(), 409);

    let page = http.get(format!("{base}/")).send().await.unwrap().text().await.unwrap();
    assert!(page.contains("thermal-right") && page.contains("ERROR"));

    assert_eq!(http.delete(format!("{base}/register/{}", tokens[1])).send().await.unwrap().status(), 204);
    assert_eq!(http.delete(format!("{base}/register/{}", tokens[1])).send().await.unwrap().status(), 401);
    let fleet: FleetView = http.get(format!("{base}/fleet")).send().await.unwrap().json().await.unwrap();
    assert_eq!(fleet.sensors.len(), 4);
}

#[tokio::test]
async fn driven_sensor_follows_broadcasts() {
    let clock = VirtualClock::new(0);
    let (base, manager) = start_manager(clock).await;
    let (d, prims) = portal_fleet().remove(3);
    let n = d.sample_bytes();
    let sensor = SimulatedSensor::new(d, Box::new(Blank(n)), 1e6, WallClock.now_us());
    let task = tokio::spawn(drive_sensor(
        ManagerClient::new(&base),
        "http://127.0.0.1:9".into(),
        prims,
        sensor,
        WallClock,
        Duration::from_millis(20),
        Some(15),
    ));
    while manager.fleet().sensors.is_empty() {
        tokio::time::sleep(Duration::from_millis(5)).await;
    }
    assert!(manager.broadcast(gate_acquisition::Command::Start).accepted);
    tokio::time::sleep(Duration::from_millis(100)).await;
    assert_eq!(manager.fleet().sensors[0].state.lifecycle, Lifecycle::Acquiring);
    let sensor = task.await.unwrap().unwrap();
    assert_eq!(sensor.lifecycle(), Lifecycle::Acquiring);
    assert!(sensor.samples_emitted > 0);
    assert!(manager.fleet().sensors.is_empty());
}
