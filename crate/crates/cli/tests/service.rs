//! The combined server over HTTP: session bundles, tiles, thermal rasters,
//! stream synchronisation and the fleet view.

use std::sync::Arc;

use gate_acquisition::{portal_fleet, AcquisitionManager, ManagerConfig, VirtualClock};
use gate_cli::service::app;
use gate_cli::{run_pipeline, GateConfig};
use gate_core::imgcore::pnm::{decode_pgm, decode_ppm};
use gate_core::session::{load_session, SessionManifest, StreamRole};
use gate_core::synth::scenario::{write_passage, ScenarioSpec, WagonSpec};
use gate_core::thermal::{decode_tmap, lut_index};
use serde_json::Value;

async fn spawn(manager: Arc<AcquisitionManager>, root: std::path::PathBuf) -> String {
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    tokio::spawn(async move { axum::serve(listener, app(manager, root)).await });
    format!("http://{addr}")
}

fn small_passage(dir: &std::path::Path, seed: u64) {
    let spec = ScenarioSpec {
        seed,
        wagon: WagonSpec {
            length: 2048,
            height: 512,
            distractors: 8,
            ..WagonSpec::default()
        },
        ..ScenarioSpec::default()
    };
    write_passage(&spec, dir).unwrap();
}

#[tokio::test(flavor = "multi_thread")]
async fn session_endpoints_serve_the_bundle() {
    let tmp = tempfile::tempdir().unwrap();
    let raw = tmp.path().join("p7");
    let root = tmp.path().join("sessions");
    small_passage(&raw, 7);
    run_pipeline(&raw, &root, &GateConfig::default(), None, None).unwrap();
    let m = load_session(&root, "p7").unwrap();

    let manager = Arc::new(AcquisitionManager::new(Arc::new(VirtualClock::new(0)), ManagerConfig::default()));
    let base = spawn(manager, root.clone()).await;
    let http = reqwest::Client::new();
    let get = |path: String| {
        let http = http.clone();
        let url = format!("{base}{path}");
        async move { http.get(url).send().await.unwrap() }
    };

    let list: Value = get("/sessions".into()).await.json().await.unwrap();
    assert_eq!(list[0]["id"], "p7");
    assert_eq!(list[0]["roles"].as_array().unwrap().len(), m.streams.len());

    let resp = get("/sessions/p7/manifest".into()).await;
    assert_eq!(resp.headers()["access-control-allow-origin"], "*");
    let served: SessionManifest = resp.json().await.unwrap();
    assert_eq!(served, m);

    let side = m.stream(StreamRole::SideLow).unwrap();
    let info = &side.pyramid.as_ref().unwrap().info;
    let top = info.levels.len() - 1;
    let resp = get(format!("/sessions/p7/tiles/side-low/{top}/0_0.pgm")).await;
    assert_eq!(resp.headers()["content-type"], "image/x-portable-graymap");
    let tile = decode_pgm(&resp.bytes().await.unwrap()).unwrap();
    assert_eq!((tile.width(), tile.height()), (info.levels[top].width, info.levels[top].height));

    let resp = get("/sessions/p7/tiles/thermal-left/0/0_0".into()).await;
    assert_eq!(resp.headers()["content-type"], "image/x-portable-pixmap");
    let color = decode_ppm(&resp.bytes().await.unwrap()).unwrap();

    let bytes = get("/sessions/p7/thermal/left/raw".into()).await.bytes().await.unwrap();
    let tmap = decode_tmap(&bytes).unwrap();
    let expected = std::fs::read(root.join("p7").join(&m.stream(StreamRole::ThermalLeft).unwrap().path)).unwrap();
    assert_eq!(bytes.as_ref(), expected.as_slice());
    let (lo, hi) = gate_core::thermal::default_range(&tmap);
    let lut = gate_core::thermal::lut();
    assert_eq!(color.get(0, 0), lut[lut_index(tmap.get(0, 0) as f64, lo, hi) as usize]);

    let frame = get("/sessions/p7/frontal/0".into()).await;
    assert!(frame.status().is_success());
    let frames = m.stream(StreamRole::Frontal).unwrap().samples;
    assert_eq!(get(format!("/sessions/p7/frontal/{frames}")).await.status(), 404);

    let det: Value = get("/sessions/p7/detections".into()).await.json().await.unwrap();
    assert!(det["wagon_id"]["found"].as_bool().unwrap());
    assert_eq!(det["thermal"]["cross_check"]["status"], "pass");
    assert!(det["pantograph"]["found"].as_bool().unwrap());

    let t = side.start_time_us + 1_000_000;
    let sync: Value = get(format!("/sessions/p7/sync/side-low/{t}")).await.json().await.unwrap();
    let want = m.sync_model().unwrap().time_to_position(StreamRole::SideLow, t).unwrap();
    assert_eq!(sync["index"].as_u64().unwrap(), want);

    assert_eq!(get("/sessions/nope/manifest".into()).await.status(), 404);
    assert_eq!(get("/sessions/..bad/manifest".into()).await.status(), 400);
    assert_eq!(get("/sessions/p7/tiles/side-low/99/0_0".into()).await.status(), 404);
    assert_eq!(get("/sessions/p7/tiles/side-low/0/x".into()).await.status(), 400);
    assert_eq!(get("/sessions/p7/tiles/rooftop/0/0_0".into()).await.status(), 404);
    assert_eq!(get("/sessions/p7/thermal/up/raw".into()).await.status(), 404);
}

#[tokio::test(flavor = "multi_thread")]
async fn fleet_lists_registered_sensors() {
    let tmp = tempfile::tempdir().unwrap();
    let manager = Arc::new(AcquisitionManager::new(Arc::new(VirtualClock::new(0)), ManagerConfig::default()));
    for (d, prims) in portal_fleet() {
        manager.register(d, "http://127.0.0.1:9", prims).unwrap();
    }
    let base = spawn(manager, tmp.path().join("empty")).await;
    let fleet: Value = reqwest::get(format!("{base}/fleet")).await.unwrap().json().await.unwrap();
    let sensors = fleet["sensors"].as_array().unwrap();
    assert_eq!(sensors.len(), 5);
    assert!(sensors.iter().all(|s| s["state"]["lifecycle"] == "IDLE"));
    assert!(fleet["declared_total_bps"].as_f64().unwrap() <= fleet["disk_budget_bps"].as_f64().unwrap());
    let list: Value = reqwest::get(format!("{base}/sessions")).await.unwrap().json().await.unwrap();
    assert_eq!(list, serde_json::json!([]));
}
