//! Template feature model and its `PGFM1` file layout:
//!
//! ```text
//! "PGFM1"                      5 bytes
//! width, height, count         u32 little-endian each
//! count x (x, y, scale, orientation)      f32 little-endian
//! count x 128 descriptor values           f32 little-endian
//! ```

use std::path::Path;

use super::kdtree::KdTree;
use super::sift::{extract_features, Descriptor, Keypoint, SiftParams, DESCRIPTOR_LEN};
use crate::error::{Error, Result};
use crate::imgcore::pnm::write_bytes;
use crate::imgcore::GrayImage;

pub const PGFM_MAGIC: &[u8; 5] = b"PGFM1";

#[derive(Clone, Debug)]
pub struct FeatureModel {
    pub width: usize,
    pub height: usize,
    pub keypoints: Vec<Keypoint>,
    pub index: KdTree,
}

impl FeatureModel {
    pub fn from_parts(width: usize, height: usize, keypoints: Vec<Keypoint>, descriptors: Vec<Descriptor>) -> Result<Self> {
        if keypoints.len() != descriptors.len() {
            return Err(Error::format("pgfm", "keypoint and descriptor counts differ"));
        }
        Ok(Self {
            width,
            height,
            keypoints,
            index: KdTree::build(descriptors)?,
        })
    }

    /// Offline modelling of a template image.
    pub fn build(template: &GrayImage, p: &SiftParams) -> Result<Self> {
        let (kps, descs) = extract_features(template, p)?;
        Self::from_parts(template.width(), template.height(), kps, descs)
    }

    pub fn descriptors(&self) -> &[Descriptor] {
        self.index.points()
    }

    pub fn encode(&self) -> Vec<u8> {
        let n = self.keypoints.len();
        let mut out = Vec::with_capacity(17 + n * 4 * (4 + DESCRIPTOR_LEN));
        out.extend_from_slice(PGFM_MAGIC);
        for v in [self.width, self.height, n] {
            out.extend_from_slice(&(v as u32).to_le_bytes());
        }
        for k in &self.keypoints {
            for v in [k.x, k.y, k.scale, k.orientation] {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        for d in self.descriptors() {
            for v in d {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let bad = |r: &str| Error::format("pgfm", r.to_string());
        let rest = bytes.strip_prefix(PGFM_MAGIC.as_slice()).ok_or_else(|| bad("bad magic"))?;
        if rest.len() < 12 {
            return Err(bad("truncated header"));
        }
        let word = |i: usize| u32::from_le_bytes(rest[4 * i..4 * i + 4].try_into().expect("4 bytes")) as usize;
        let (w, h, n) = (word(0), word(1), word(2));
        let floats = &rest[12..];
        if floats.len() != n * 4 * (4 + DESCRIPTOR_LEN) {
            return Err(bad("payload length does not match keypoint count"));
        }
        let vals: Vec<f32> = floats
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        let (kv, dv) = vals.split_at(4 * n);
        let kps = kv
            .chunks_exact(4)
            .map(|c| Keypoint {
                x: c[0],
                y: c[1],
                scale: c[2],
                orientation: c[3],
            })
            .collect();
        let descs = dv
            .chunks_exact(DESCRIPTOR_LEN)
            .map(|c| c.try_into().expect("128 values"))
            .collect();
        Self::from_parts(w, h, kps, descs)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        write_bytes(path.as_ref(), &self.encode())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let p = path.as_ref();
        Self::decode(&std::fs::read(p).map_err(|e| Error::io(p, e))?)
    }
}
