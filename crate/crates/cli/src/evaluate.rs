//! Scores session bundles against the ground truth of their raw passages.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use gate_core::pantograph::PantographDetection;
use gate_core::session::{load_session, SessionManifest};
use gate_core::synth::scenario::{read_raw, read_truth, GroundTruth};
use gate_core::thermal::ThermalReport;
use gate_core::wagonid::{evaluate_segmentation, match_regions, Counts, SegmentationMetrics};
use serde::{de::DeserializeOwned, Deserialize, Serialize};

use crate::error::{CliError, Stage};
use crate::pipeline::{session_id_for, WagonIdDocument};

/// Pantograph detections count as hits at this overlap with the truth box.
pub const PANTOGRAPH_IOU: f64 = 0.8;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PassageScore {
    pub session: String,
    pub characters: Counts,
    pub full_id: bool,
    pub pantograph_present: bool,
    pub pantograph_found: bool,
    pub pantograph_iou: Option<f64>,
    /// Alarm blocks of the left chain equal the ground-truth hot blocks.
    pub thermal_exact: bool,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DetectionCounts {
    pub tp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub fp: usize,
    pub tn: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub passages: Vec<PassageScore>,
    pub segmentation: SegmentationMetrics,
    pub pantograph: DetectionCounts,
    pub thermal_exact: usize,
}

fn read_doc<T: DeserializeOwned>(dir: &Path, rel: Option<&String>, what: &str) -> Result<T, CliError> {
    let rel = rel.ok_or_else(|| CliError::Validation(format!("session {} has no {what} document", dir.display())))?;
    let path = dir.join(rel);
    let text = std::fs::read_to_string(&path).map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))
}

struct Pair {
    manifest: SessionManifest,
    dir: PathBuf,
    truth: GroundTruth,
}

/// Pairs every raw directory with the session produced from it.
fn align(sessions_root: &Path, raw_dirs: &[PathBuf]) -> Result<Vec<Pair>, CliError> {
    let mut seen = BTreeSet::new();
    raw_dirs
        .iter()
        .map(|raw_dir| {
            let raw = read_raw(raw_dir).map_err(CliError::invalid)?;
            let truth = read_truth(&raw_dir.join(&raw.truth)).map_err(CliError::invalid)?;
            let id = session_id_for(raw_dir, &raw);
            if !seen.insert(id.clone()) {
                return Err(CliError::Validation(format!("two raw directories map to session `{id}`")));
            }
            let manifest = load_session(sessions_root, &id).map_err(|e| CliError::Validation(format!("session `{id}`: {e}")))?;
            if truth.seed != raw.seed || manifest.created_us != raw.created_us {
                return Err(CliError::Validation(format!(
                    "session `{id}` was not produced from {}",
                    raw_dir.display()
                )));
            }
            Ok(Pair {
                dir: sessions_root.join(&id),
                manifest,
                truth,
            })
        })
        .collect()
}

pub fn evaluate(sessions_root: &Path, raw_dirs: &[PathBuf]) -> Result<EvalReport, CliError> {
    if raw_dirs.is_empty() {
        return Err(CliError::Validation("no passages to evaluate".into()));
    }
    let pairs = align(sessions_root, raw_dirs)?;
    let mut passages = Vec::new();
    let mut preds = Vec::new();
    let mut truths = Vec::new();
    let mut panto = DetectionCounts::default();
    for p in &pairs {
        let d = &p.manifest.detections;
        let wagon: WagonIdDocument = read_doc(&p.dir, d.wagon_id.as_ref(), "wagon-id")?;
        let det: PantographDetection = read_doc(&p.dir, d.pantograph.as_ref(), "pantograph")?;
        let thermal: ThermalReport = read_doc(&p.dir, d.thermal.as_ref(), "thermal")?;

        let boxes = wagon.char_boxes();
        let characters = match_regions(&boxes, &p.truth.glyphs);
        let iou = match (&p.truth.pantograph, det.p_bbox) {
            (Some(t), Some(b)) if det.found => Some(b.iou(&t.bbox)),
            _ => None,
        };
        let present = p.truth.pantograph.is_some();
        match (present, det.found) {
            (true, true) if iou.is_some_and(|v| v >= PANTOGRAPH_IOU) => panto.tp += 1,
            (true, _) => panto.fn_ += 1,
            (false, true) => panto.fp += 1,
            (false, false) => panto.tn += 1,
        }
        let mut alarms: Vec<(usize, usize)> = thermal.left.alarms.iter().map(|a| (a.bx, a.by)).collect();
        alarms.sort_unstable();
        let aligned_blocks = (thermal.block_w, thermal.block_h) == (p.truth.block_w, p.truth.block_h);
        passages.push(PassageScore {
            session: p.manifest.id.clone(),
            characters,
            full_id: characters.fn_ == 0 && !p.truth.glyphs.is_empty(),
            pantograph_present: present,
            pantograph_found: det.found,
            pantograph_iou: iou,
            thermal_exact: aligned_blocks && alarms == p.truth.hot_blocks,
        });
        preds.push(boxes);
        truths.push(p.truth.glyphs.clone());
    }
    let segmentation = evaluate_segmentation(&preds, &truths).map_err(CliError::at(Stage::Evaluate))?;
    Ok(EvalReport {
        thermal_exact: passages.iter().filter(|p| p.thermal_exact).count(),
        passages,
        segmentation,
        pantograph: panto,
    })
}

impl EvalReport {
    /// Plain-text tables: accuracy, FN rate and FP rate in percent for single
    /// characters and full identifiers, then detection counts.
    pub fn render(&self) -> String {
        let n = self.passages.len();
        let mut out = format!("Wagon ID segmentation, {n} passages\n");
        out += &format!("{:<12}{:>10}{:>10}{:>10}\n", "", "Accuracy", "FN Rate", "FP Rate");
        for (name, c) in [("Characters", self.segmentation.characters), ("Full ID", self.segmentation.full_id)] {
            out += &format!("{name:<12}{:>10.1}{:>10.1}{:>10.1}\n", c.accuracy(), c.fn_rate(), c.fp_rate());
        }
        let p = self.pantograph;
        out += &format!(
            "\nPantograph: {} of {} present detected (IoU >= {PANTOGRAPH_IOU}), {} of {} absent falsely detected\n",
            p.tp,
            p.tp + p.fn_,
            p.fp,
            p.fp + p.tn
        );
        out += &format!("Thermal: alarm blocks exact in {} of {n} passages\n", self.thermal_exact);
        out += "\nPer passage\n";
        for s in &self.passages {
            out += &format!(
                "{:<24} chars {:>2}/{:<2} fp {:<2} id {:<4} pantograph {:<8} thermal {}\n",
                s.session,
                s.characters.tp,
                s.characters.tp + s.characters.fn_,
                s.characters.fp,
                if s.full_id { "ok" } else { "miss" },
                match (s.pantograph_present, s.pantograph_found) {
                    (true, true) => format!("{:.2}", s.pantograph_iou.unwrap_or(0.0)),
                    (true, false) => "missed".into(),
                    (false, true) => "false".into(),
                    (false, false) => "-".into(),
                },
                if s.thermal_exact { "ok" } else { "miss" },
            );
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::GateConfig;
    use crate::pipeline::run_pipeline;
    use gate_core::synth::scenario::{write_passage, ScenarioSpec, WagonSpec};

    fn spec(seed: u64, merged: Vec<usize>) -> ScenarioSpec {
        ScenarioSpec {
            seed,
            wagon: WagonSpec {
                length: 2048,
                height: 512,
                distractors: 8,
                merged_pairs: merged,
                ..WagonSpec::default()
            },
            ..ScenarioSpec::default()
        }
    }

    #[test]
    fn merged_glyphs_show_in_the_fn_rate() {
        let tmp = tempfile::tempdir().unwrap();
        let sessions = tmp.path().join("sessions");
        let mut raws = Vec::new();
        for (name, s) in [("clean", spec(1, vec![])), ("merged", spec(2, vec![4]))] {
            let dir = tmp.path().join(name);
            write_passage(&s, &dir).unwrap();
            run_pipeline(&dir, &sessions, &GateConfig::default(), None, None).unwrap();
            raws.push(dir);
        }
        let r = evaluate(&sessions, &raws).unwrap();
        let merged = &r.passages[1];
        assert_eq!((merged.characters.tp, merged.characters.fn_), (11, 1));
        assert!(!merged.full_id);
        assert_eq!(r.segmentation.characters.tp + r.segmentation.characters.fn_, 24);
        assert_eq!(r.segmentation.full_id.fn_, 1);
        assert_eq!(r.pantograph.tp, 2);
        assert_eq!(r.thermal_exact, 2);
        let text = r.render();
        assert!(text.contains("Accuracy   FN Rate   FP Rate"));
        assert!(text.contains(&format!("{:>10.1}", 100.0 * 23.0 / 24.0)));
    }

    #[test]
    fn misaligned_batches_are_rejected() {
        let tmp = tempfile::tempdir().unwrap();
        let sessions = tmp.path().join("sessions");
        let a = tmp.path().join("a");
        write_passage(&spec(1, vec![]), &a).unwrap();
        assert!(matches!(evaluate(&sessions, std::slice::from_ref(&a)), Err(CliError::Validation(_))));
        run_pipeline(&a, &sessions, &GateConfig::default(), None, None).unwrap();
        let mut other = spec(9, vec![]);
        other.start_time_us += 1;
        write_passage(&other, &a).unwrap();
        assert!(matches!(evaluate(&sessions, &[a]), Err(CliError::Validation(_))));
    }
}
