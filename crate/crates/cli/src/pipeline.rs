//! Raw passage directory to session bundle: the three analyses, tile
//! pyramids and the manifest.

use std::path::{Path, PathBuf};

use gate_core::imgcore::pnm;
use gate_core::pantograph::{detect_pantograph, FeatureModel, PantographDetection};
use gate_core::session::{
    build_pyramid_into, check_session_id, save_session, DiskSink, PyramidRef, SessionManifest, StreamEntry, StreamRole,
};
use gate_core::synth::roof::pantograph_template;
use gate_core::synth::scenario::{frame_name, read_raw, RawPassage, TEMPLATE_SEED};
use gate_core::thermal::{default_range, lut, lut_indices, read_tmap, scan, ThermalMosaic, ThermalReport};
use gate_core::wagonid::{segment_wagon_id, IdSegmentation};
use gate_core::{Error, GrayImage};
use serde::{Deserialize, Serialize};

use crate::config::GateConfig;
use crate::error::{CliError, Stage};

pub const WAGON_ID_DOC: &str = "detections/wagon_id.json";
pub const THERMAL_DOC: &str = "detections/thermal.json";
pub const PANTOGRAPH_DOC: &str = "detections/pantograph.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WagonIdDocument {
    pub found: bool,
    /// Why nothing was found.
    pub reason: Option<String>,
    pub segmentation: Option<IdSegmentation>,
}

impl WagonIdDocument {
    pub fn char_boxes(&self) -> Vec<gate_core::BBox> {
        self.segmentation.as_ref().map(|s| s.char_boxes.clone()).unwrap_or_default()
    }
}

pub fn write_json(path: &Path, value: &impl Serialize) -> Result<(), Error> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::Manifest(e.to_string()))?;
    text.push('\n');
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Error::Io {
            path: dir.to_path_buf(),
            source: e,
        })?;
    }
    std::fs::write(path, text).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

/// Session id for a raw directory: its name when that is a valid id.
pub fn session_id_for(raw_dir: &Path, raw: &RawPassage) -> String {
    raw_dir
        .file_name()
        .and_then(|n| n.to_str())
        .filter(|n| check_session_id(n).is_ok())
        .map_or_else(|| format!("seed-{}", raw.seed), str::to_owned)
}

pub fn wagon_id_document(side_low: &GrayImage, cfg: &GateConfig, seed: u64) -> Result<WagonIdDocument, CliError> {
    match segment_wagon_id(side_low, &cfg.segmentation, seed) {
        Ok(seg) => Ok(WagonIdDocument {
            found: true,
            reason: None,
            segmentation: Some(seg),
        }),
        Err(e @ (Error::NoCandidates | Error::LowConfidence { .. })) => Ok(WagonIdDocument {
            found: false,
            reason: Some(e.to_string()),
            segmentation: None,
        }),
        Err(e) => Err(CliError::at(Stage::WagonId)(e)),
    }
}

pub fn default_model(cfg: &GateConfig) -> Result<FeatureModel, CliError> {
    FeatureModel::build(&pantograph_template(TEMPLATE_SEED), &cfg.pantograph.sift).map_err(CliError::at(Stage::Pantograph))
}

struct Inputs {
    side_low: GrayImage,
    side_high: GrayImage,
    left: ThermalMosaic,
    right: Option<ThermalMosaic>,
}

fn load_inputs(raw_dir: &Path, raw: &RawPassage) -> Result<Inputs, Error> {
    let path_of = |role: StreamRole| -> Result<PathBuf, Error> {
        raw.stream(role)
            .map(|s| raw_dir.join(&s.path))
            .ok_or_else(|| Error::MissingArtifact(raw_dir.join(format!("{role}"))))
    };
    Ok(Inputs {
        side_low: pnm::read_pgm(path_of(StreamRole::SideLow)?)?,
        side_high: pnm::read_pgm(path_of(StreamRole::SideHigh)?)?,
        left: read_tmap(path_of(StreamRole::ThermalLeft)?)?,
        right: raw
            .stream(StreamRole::ThermalRight)
            .map(|s| read_tmap(raw_dir.join(&s.path)))
            .transpose()?,
    })
}

/// Clears a previous bundle of the same id; refuses to touch anything else.
fn prepare_dir(dir: &Path) -> Result<(), CliError> {
    if dir.exists() {
        let is_session = dir.join(gate_core::session::MANIFEST_FILE).is_file();
        let empty = std::fs::read_dir(dir).map(|mut d| d.next().is_none()).unwrap_or(false);
        if !is_session && !empty {
            return Err(CliError::Validation(format!(
                "{} exists and is not a session bundle",
                dir.display()
            )));
        }
        std::fs::remove_dir_all(dir).map_err(|e| CliError::Runtime(format!("{}: {e}", dir.display())))?;
    }
    Ok(())
}

fn copy(src: &Path, dst: &Path) -> Result<(), Error> {
    if let Some(d) = dst.parent() {
        std::fs::create_dir_all(d).map_err(|e| Error::Io {
            path: d.to_path_buf(),
            source: e,
        })?;
    }
    std::fs::copy(src, dst).map(drop).map_err(|e| Error::Io {
        path: src.to_path_buf(),
        source: e,
    })
}

/// Analyses a raw passage and writes its session bundle under
/// `sessions_root`. The bundle is a pure function of the raw directory and
/// the configuration.
pub fn run_pipeline(
    raw_dir: &Path,
    sessions_root: &Path,
    cfg: &GateConfig,
    model: Option<&FeatureModel>,
    session_id: Option<&str>,
) -> Result<SessionManifest, CliError> {
    cfg.validate()?;
    let raw = read_raw(raw_dir).map_err(CliError::at(Stage::Load))?;
    let id = session_id.map_or_else(|| session_id_for(raw_dir, &raw), str::to_owned);
    check_session_id(&id).map_err(CliError::invalid)?;
    let inputs = load_inputs(raw_dir, &raw).map_err(CliError::at(Stage::Load))?;
    let built;
    let model = match model {
        Some(m) => m,
        None => {
            built = default_model(cfg)?;
            &built
        }
    };

    let (wagon, thermal, panto): (Result<WagonIdDocument, CliError>, Result<ThermalReport, CliError>, Result<PantographDetection, CliError>) =
        std::thread::scope(|s| {
            let w = s.spawn(|| wagon_id_document(&inputs.side_low, cfg, raw.seed));
            let t = s.spawn(|| scan(&inputs.left, inputs.right.as_ref(), &cfg.thermal).map_err(CliError::at(Stage::Thermal)));
            let p = detect_pantograph(&inputs.side_high, model, &cfg.pantograph, raw.seed).map_err(CliError::at(Stage::Pantograph));
            (w.join().expect("wagon-id stage panicked"), t.join().expect("thermal stage panicked"), p)
        });
    let (wagon, thermal, panto) = (wagon?, thermal?, panto?);

    let dir = sessions_root.join(&id);
    prepare_dir(&dir)?;
    let mut m = SessionManifest::new(&id, raw.created_us);
    for s in &raw.streams {
        let role = s.role;
        let name = role.to_string();
        let (path, pyramid) = match role {
            StreamRole::SideLow | StreamRole::SideHigh => {
                let img = if role == StreamRole::SideLow { &inputs.side_low } else { &inputs.side_high };
                let info = build_pyramid_into(img, &mut DiskSink::gray(dir.join(&name))).map_err(CliError::at(Stage::Tiling))?;
                (name.clone(), Some(PyramidRef { root: name, info }))
            }
            StreamRole::ThermalLeft | StreamRole::ThermalRight => {
                let mosaic = if role == StreamRole::ThermalLeft { &inputs.left } else { inputs.right.as_ref().expect("loaded with the stream") };
                let file = format!("{name}.tmap");
                copy(&raw_dir.join(&s.path), &dir.join(&file)).map_err(CliError::at(Stage::Tiling))?;
                let (lo, hi) = default_range(mosaic);
                let idx = lut_indices(mosaic, lo, hi).map_err(CliError::at(Stage::Tiling))?;
                let info = build_pyramid_into(&idx, &mut DiskSink::colored(dir.join(&name), lut())).map_err(CliError::at(Stage::Tiling))?;
                (file, Some(PyramidRef { root: name, info }))
            }
            StreamRole::Frontal => {
                for k in 0..s.samples as usize {
                    let f = frame_name(k);
                    copy(&raw_dir.join(&s.path).join(&f), &dir.join("frontal").join(&f)).map_err(CliError::at(Stage::Tiling))?;
                }
                ("frontal".to_string(), None)
            }
        };
        m.streams.push(StreamEntry {
            role,
            start_time_us: s.start_time_us,
            rate: s.rate,
            width: s.width,
            height: s.height,
            samples: s.samples,
            path,
            pyramid,
        });
    }

    write_json(&dir.join(WAGON_ID_DOC), &wagon).map_err(CliError::at(Stage::Manifest))?;
    write_json(&dir.join(THERMAL_DOC), &thermal).map_err(CliError::at(Stage::Manifest))?;
    write_json(&dir.join(PANTOGRAPH_DOC), &panto).map_err(CliError::at(Stage::Manifest))?;
    m.detections.wagon_id = Some(WAGON_ID_DOC.into());
    m.detections.thermal = Some(THERMAL_DOC.into());
    m.detections.pantograph = Some(PANTOGRAPH_DOC.into());
    save_session(sessions_root, &m).map_err(CliError::at(Stage::Manifest))?;
    Ok(m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use gate_core::session::load_session;
    use gate_core::synth::scenario::{write_passage, ScenarioSpec, WagonSpec};
    use gate_core::thermal::CrossCheckOutcome;

    pub(crate) fn small_spec(seed: u64) -> ScenarioSpec {
        ScenarioSpec {
            seed,
            wagon: WagonSpec {
                length: 2048,
                height: 512,
                distractors: 8,
                ..WagonSpec::default()
            },
            ..ScenarioSpec::default()
        }
    }

    #[test]
    fn bundle_has_every_document() {
        let tmp = tempfile::tempdir().unwrap();
        let raw = tmp.path().join("p1");
        write_passage(&small_spec(3), &raw).unwrap();
        let m = run_pipeline(&raw, &tmp.path().join("sessions"), &GateConfig::default(), None, None).unwrap();
        assert_eq!(m.id, "p1");
        assert_eq!(m.streams.len(), 5);
        let loaded = load_session(&tmp.path().join("sessions"), "p1").unwrap();
        assert_eq!(loaded, m);
        let dir = tmp.path().join("sessions/p1");
        let wagon: WagonIdDocument = serde_json::from_str(&std::fs::read_to_string(dir.join(WAGON_ID_DOC)).unwrap()).unwrap();
        assert!(wagon.found);
        let panto: PantographDetection = serde_json::from_str(&std::fs::read_to_string(dir.join(PANTOGRAPH_DOC)).unwrap()).unwrap();
        assert!(panto.found);
        assert!(dir.join("thermal-left/0/0_0.ppm").is_file());
        assert!(dir.join("frontal").join(frame_name(0)).is_file());
    }

    #[test]
    fn degraded_passages_still_complete() {
        let tmp = tempfile::tempdir().unwrap();
        let raw = tmp.path().join("bare");
        let mut spec = small_spec(4);
        spec.pantograph.present = false;
        spec.thermal_right = false;
        write_passage(&spec, &raw).unwrap();
        let sessions = tmp.path().join("sessions");
        let m = run_pipeline(&raw, &sessions, &GateConfig::default(), None, None).unwrap();
        assert_eq!(m.streams.len(), 4);
        let dir = sessions.join("bare");
        let panto: PantographDetection = serde_json::from_str(&std::fs::read_to_string(dir.join(PANTOGRAPH_DOC)).unwrap()).unwrap();
        assert!(!panto.found);
        let thermal: ThermalReport = serde_json::from_str(&std::fs::read_to_string(dir.join(THERMAL_DOC)).unwrap()).unwrap();
        assert_eq!(thermal.cross_check, CrossCheckOutcome::Unavailable);
        assert!(load_session(&sessions, "bare").is_ok());
    }

    #[test]
    fn missing_stream_names_the_stage() {
        let tmp = tempfile::tempdir().unwrap();
        let raw = tmp.path().join("p");
        write_passage(&small_spec(5), &raw).unwrap();
        std::fs::remove_file(raw.join("side-high.pgm")).unwrap();
        let err = run_pipeline(&raw, &tmp.path().join("s"), &GateConfig::default(), None, None).unwrap_err();
        assert!(matches!(err, CliError::Stage { stage: Stage::Load, .. }), "{err}");
        assert_eq!(err.exit_code(), 3);
    }

    #[test]
    fn refuses_to_overwrite_foreign_directories() {
        let tmp = tempfile::tempdir().unwrap();
        let raw = tmp.path().join("p");
        write_passage(&small_spec(6), &raw).unwrap();
        let sessions = tmp.path().join("s");
        std::fs::create_dir_all(sessions.join("p")).unwrap();
        std::fs::write(sessions.join("p/notes.txt"), "keep").unwrap();
        let err = run_pipeline(&raw, &sessions, &GateConfig::default(), None, None).unwrap_err();
        assert_eq!(err.exit_code(), 2);
        assert!(sessions.join("p/notes.txt").is_file());
    }
}
