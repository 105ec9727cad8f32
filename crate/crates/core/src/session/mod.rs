//! Session bundles: stream rasters, tile pyramids, detection documents and
//! stream timing, described by a versioned JSON manifest.
//!
//! Layout under a sessions root:
//!
//! ```text
//! <root>/<id>/manifest.json
//! <root>/<id>/<role>/<level>/<tx>_<ty>.pgm     tile pyramids (.ppm for thermal previews)
//! <root>/<id>/thermal-left.tmap                raw temperatures
//! <root>/<id>/frontal/frame_000000.pgm         frontal frames
//! <root>/<id>/detections/*.json
//! ```

mod pyramid;
mod sync;

use std::collections::BTreeSet;
use std::path::{Component, Path, PathBuf};

use serde::{Deserialize, Serialize};

pub use pyramid::{
    build_pyramid, build_pyramid_from_pgm, build_pyramid_into, find_tile, tile_path, DiskSink, LevelInfo,
    PyramidBuilder, PyramidInfo, TilePyramid, TileSink, TILE_SIZE,
};
pub use sync::{StreamRole, StreamTiming, SyncModel};

use crate::error::{Error, Result};

pub const MANIFEST_VERSION: &str = "SISS1";
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PyramidRef {
    /// Directory relative to the session.
    pub root: String,
    pub info: PyramidInfo,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StreamEntry {
    pub role: StreamRole,
    pub start_time_us: u64,
    pub rate: f64,
    pub width: usize,
    pub height: usize,
    /// Columns, lines or frames along the time axis.
    pub samples: u64,
    /// Raw artifact relative to the session: a `.tmap`, a frame directory or a
    /// pyramid directory.
    pub path: String,
    pub pyramid: Option<PyramidRef>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Detections {
    pub wagon_id: Option<String>,
    pub thermal: Option<String>,
    pub pantograph: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SessionManifest {
    pub version: String,
    pub id: String,
    /// Microseconds since the Unix epoch.
    pub created_us: u64,
    pub streams: Vec<StreamEntry>,
    pub detections: Detections,
}

fn check_relative(p: &str) -> Result<()> {
    let path = Path::new(p);
    let ok = !p.is_empty() && path.components().all(|c| matches!(c, Component::Normal(_)));
    if ok {
        Ok(())
    } else {
        Err(Error::Manifest(format!("path `{p}` must be relative and stay inside the session")))
    }
}

pub fn check_session_id(id: &str) -> Result<()> {
    let ok = !id.is_empty()
        && id.len() <= 128
        && !id.starts_with('.')
        && id.chars().all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.'));
    if ok {
        Ok(())
    } else {
        Err(Error::Manifest(format!("invalid session id `{id}`")))
    }
}

impl SessionManifest {
    pub fn new(id: impl Into<String>, created_us: u64) -> Self {
        Self {
            version: MANIFEST_VERSION.into(),
            id: id.into(),
            created_us,
            streams: Vec::new(),
            detections: Detections::default(),
        }
    }

    pub fn stream(&self, role: StreamRole) -> Option<&StreamEntry> {
        self.streams.iter().find(|s| s.role == role)
    }

    pub fn sync_model(&self) -> Result<SyncModel> {
        let mut m = SyncModel::default();
        for s in &self.streams {
            m.insert(
                s.role,
                StreamTiming {
                    start_time_us: s.start_time_us,
                    rate: s.rate,
                    extent: s.samples,
                },
            )?;
        }
        Ok(m)
    }

    /// Every artifact path the manifest references, relative to the session.
    pub fn referenced_paths(&self) -> Vec<&str> {
        let mut out = Vec::new();
        for s in &self.streams {
            out.push(s.path.as_str());
            if let Some(p) = &s.pyramid {
                out.push(p.root.as_str());
            }
        }
        let d = &self.detections;
        out.extend([&d.wagon_id, &d.thermal, &d.pantograph].into_iter().flatten().map(String::as_str));
        out
    }

    /// Structural checks that need no file system.
    pub fn validate(&self) -> Result<()> {
        if self.version != MANIFEST_VERSION {
            return Err(Error::VersionMismatch(self.version.clone()));
        }
        check_session_id(&self.id)?;
        let mut roles = BTreeSet::new();
        for s in &self.streams {
            if !roles.insert(s.role) {
                return Err(Error::Manifest(format!("duplicate stream role {}", s.role)));
            }
            if !(s.rate > 0.0 && s.rate.is_finite()) {
                return Err(Error::Manifest(format!("stream {} has non-positive rate", s.role)));
            }
            if s.width == 0 || s.height == 0 {
                return Err(Error::Manifest(format!("stream {} has empty dimensions", s.role)));
            }
        }
        self.referenced_paths().into_iter().try_for_each(check_relative)
    }

    fn check_artifacts(&self, dir: &Path) -> Result<()> {
        for p in self.referenced_paths() {
            let full = dir.join(p);
            if !full.exists() {
                return Err(Error::MissingArtifact(full));
            }
        }
        Ok(())
    }
}

pub fn session_dir(root: &Path, id: &str) -> Result<PathBuf> {
    check_session_id(id)?;
    Ok(root.join(id))
}

/// Writes the manifest of a session whose artifacts are already in place.
pub fn save_session(root: &Path, manifest: &SessionManifest) -> Result<PathBuf> {
    manifest.validate()?;
    let dir = session_dir(root, &manifest.id)?;
    manifest.check_artifacts(&dir)?;
    let mut text = serde_json::to_string_pretty(manifest).map_err(|e| Error::Manifest(e.to_string()))?;
    text.push('\n');
    let path = dir.join(MANIFEST_FILE);
    crate::imgcore::pnm::write_bytes(&path, text.as_bytes())?;
    Ok(path)
}

pub fn parse_manifest(text: &str) -> Result<SessionManifest> {
    let value: serde_json::Value = serde_json::from_str(text).map_err(|e| Error::Manifest(e.to_string()))?;
    match value.get("version").and_then(|v| v.as_str()) {
        Some(MANIFEST_VERSION) => {}
        Some(other) => return Err(Error::VersionMismatch(other.to_string())),
        None => return Err(Error::Manifest("missing version".into())),
    }
    let m: SessionManifest = serde_json::from_value(value).map_err(|e| Error::Manifest(e.to_string()))?;
    m.validate()?;
    Ok(m)
}

/// Loads and validates a manifest, including the existence of every artifact.
pub fn load_session(root: &Path, id: &str) -> Result<SessionManifest> {
    let dir = session_dir(root, id)?;
    let path = dir.join(MANIFEST_FILE);
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let m = parse_manifest(&text)?;
    if m.id != id {
        return Err(Error::Manifest(format!("manifest id `{}` differs from directory `{id}`", m.id)));
    }
    m.check_artifacts(&dir)?;
    Ok(m)
}

/// Every session under `root`, oldest first.
pub fn list_sessions(root: &Path) -> Result<Vec<SessionManifest>> {
    let entries = std::fs::read_dir(root).map_err(|e| Error::io(root, e))?;
    let mut out = Vec::new();
    for entry in entries {
        let entry = entry.map_err(|e| Error::io(root, e))?;
        let Some(id) = entry.file_name().to_str().map(str::to_owned) else { continue };
        if check_session_id(&id).is_err() || !entry.path().join(MANIFEST_FILE).is_file() {
            continue;
        }
        out.push(load_session(root, &id)?);
    }
    out.sort_by(|a, b| (a.created_us, &a.id).cmp(&(b.created_us, &b.id)));
    Ok(out)
}
