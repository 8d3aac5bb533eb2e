//! Dataset container.
//!
//! Little-endian. A 32-byte header (`LFDS`, u32 version, u32 ι, u32 κ, u32
//! sample count, u32 manifest length, 8 reserved bytes), the manifest as
//! UTF-8 JSON, then per sample: f32 RWC, f32 distance, u32 leaf id, ι×5 f32
//! location values and ι×κ×3 f32 RSS values.

use super::{FeatureError, FeatureSample, SampleGroup, LOCATION_WIDTH, ZONE_BINS};
use crate::leaf::LeafType;
use serde::{Deserialize, Serialize};
use std::io::{Read, Write};

pub const DATASET_MAGIC: &[u8; 4] = b"LFDS";
const VERSION: u32 = 1;
const HEADER_LEN: usize = 32;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub samples: usize,
    pub leaf_type: LeafType,
    pub rwc_levels: Vec<f64>,
    pub placements_per_level: usize,
    pub distances: Vec<f64>,
    pub iota: usize,
    pub kappa: usize,
    pub steering_angles: Vec<f64>,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub manifest: DatasetManifest,
    pub samples: Vec<FeatureSample>,
}

impl Dataset {
    pub fn validate(&self) -> Result<(), FeatureError> {
        let m = &self.manifest;
        let planned = m.rwc_levels.len() * m.placements_per_level * m.distances.len();
        if m.samples != self.samples.len() || planned != m.samples {
            return Err(FeatureError::Format(format!(
                "manifest declares {} samples ({planned} planned), list holds {}",
                m.samples,
                self.samples.len()
            )));
        }
        for s in &self.samples {
            s.validate()?;
            if s.iota != m.iota || s.kappa != m.kappa {
                return Err(FeatureError::ShapeMismatch(format!(
                    "sample is ι={} κ={}, dataset is ι={} κ={}",
                    s.iota, s.kappa, m.iota, m.kappa
                )));
            }
        }
        Ok(())
    }

    /// Same samples restricted to the listed steering-angle rows.
    pub fn select_angles(&self, keep: &[usize]) -> Self {
        let samples: Vec<_> = self.samples.iter().map(|s| s.select_angles(keep)).collect();
        let mut manifest = self.manifest.clone();
        manifest.iota = keep.len();
        manifest.steering_angles = keep.iter().map(|&a| self.manifest.steering_angles[a]).collect();
        Self { manifest, samples }
    }
}

fn u32_of(v: usize) -> Result<u32, FeatureError> {
    u32::try_from(v).map_err(|_| FeatureError::Format(format!("{v} does not fit in u32")))
}

pub fn write_dataset<W: Write>(mut w: W, ds: &Dataset) -> Result<(), FeatureError> {
    ds.validate()?;
    let m = &ds.manifest;
    let json = serde_json::to_vec(m)?;
    let mut buf = Vec::with_capacity(HEADER_LEN + json.len());
    buf.extend_from_slice(DATASET_MAGIC);
    for v in [VERSION, u32_of(m.iota)?, u32_of(m.kappa)?, u32_of(ds.samples.len())?, u32_of(json.len())?] {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    buf.resize(HEADER_LEN, 0);
    buf.extend_from_slice(&json);
    for s in &ds.samples {
        buf.extend_from_slice(&(s.rwc as f32).to_le_bytes());
        buf.extend_from_slice(&(s.group.distance as f32).to_le_bytes());
        buf.extend_from_slice(&s.group.leaf_id.to_le_bytes());
        for v in s.location.iter().chain(&s.rss) {
            buf.extend_from_slice(&(*v as f32).to_le_bytes());
        }
    }
    w.write_all(&buf)?;
    w.flush()?;
    Ok(())
}

pub fn read_dataset<R: Read>(mut r: R) -> Result<Dataset, FeatureError> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    if bytes.len() < HEADER_LEN || &bytes[..4] != DATASET_MAGIC {
        return Err(FeatureError::Format("not a dataset file".into()));
    }
    let word = |i: usize| u32::from_le_bytes(bytes[4 + 4 * i..8 + 4 * i].try_into().expect("4 bytes")) as usize;
    let (version, iota, kappa, count, json_len) = (word(0), word(1), word(2), word(3), word(4));
    if version != VERSION as usize {
        return Err(FeatureError::Format(format!("unsupported version {version}")));
    }
    let json_end = HEADER_LEN + json_len;
    let json = bytes
        .get(HEADER_LEN..json_end)
        .ok_or_else(|| FeatureError::Format("manifest truncated".into()))?;
    let manifest: DatasetManifest = serde_json::from_slice(json)?;

    let n_loc = iota * LOCATION_WIDTH;
    let n_rss = iota * kappa * ZONE_BINS;
    let stride = 4 * (3 + n_loc + n_rss);
    let body = &bytes[json_end..];
    if body.len() != stride * count {
        return Err(FeatureError::Format(format!(
            "expected {} sample bytes, found {}",
            stride * count,
            body.len()
        )));
    }
    let samples = body
        .chunks_exact(stride)
        .map(|rec| {
            let word = |i: usize| -> [u8; 4] { rec[4 * i..4 * i + 4].try_into().expect("4 bytes") };
            let float = |i: usize| f64::from(f32::from_le_bytes(word(i)));
            FeatureSample {
                iota,
                kappa,
                location: (3..3 + n_loc).map(float).collect(),
                rss: (3 + n_loc..3 + n_loc + n_rss).map(float).collect(),
                rwc: float(0),
                group: SampleGroup {
                    leaf_id: u32::from_le_bytes(word(2)),
                    distance: float(1),
                },
            }
        })
        .collect();
    let ds = Dataset { manifest, samples };
    ds.validate()?;
    Ok(ds)
}

/// One row per sample: identifiers, target, then every input feature.
pub fn write_features_csv<W: Write>(w: W, samples: &[FeatureSample]) -> Result<(), FeatureError> {
    let mut out = csv::Writer::from_writer(w);
    let Some(first) = samples.first() else {
        out.flush()?;
        return Ok(());
    };
    let mut header = vec!["sample".to_string(), "leaf_id".into(), "distance".into(), "rwc".into()];
    let names = ["eta", "aoa_prev", "aoa_peak", "aoa_next", "distance"];
    for a in 0..first.iota {
        header.extend(names.iter().map(|n| format!("loc{a}_{n}")));
    }
    for a in 0..first.iota {
        for k in 0..first.kappa {
            header.extend((0..ZONE_BINS).map(|b| format!("rss{a}_rx{k}_bin{b}")));
        }
    }
    out.write_record(&header)?;
    for (i, s) in samples.iter().enumerate() {
        let mut row = vec![i.to_string(), s.group.leaf_id.to_string(), s.group.distance.to_string(), s.rwc.to_string()];
        row.extend(s.location.iter().chain(&s.rss).map(|v| v.to_string()));
        out.write_record(&row)?;
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::{build_sample, AngleCapture};

    fn dataset() -> Dataset {
        let plan = [-2.0, 0.0, 2.0];
        let mut samples = Vec::new();
        for (l, rwc) in [50.0, 100.0].iter().enumerate() {
            for p in 0..2 {
                let caps: Vec<_> = plan
                    .iter()
                    .map(|&eta| AngleCapture {
                        steering_angle: eta,
                        aoa: [eta, 0.1 * p as f64, -eta],
                        rss: (0..6).map(|i| -40.123_456_7 - i as f64 * 0.37 - rwc / 7.0).collect(),
                    })
                    .collect();
                let group = SampleGroup {
                    leaf_id: l as u32,
                    distance: 0.6,
                };
                samples.push(build_sample(&caps, &plan, 0.6, *rwc, group).unwrap());
            }
        }
        Dataset {
            manifest: DatasetManifest {
                samples: 4,
                leaf_type: LeafType::Rubra,
                rwc_levels: vec![50.0, 100.0],
                placements_per_level: 2,
                distances: vec![0.6],
                iota: 3,
                kappa: 2,
                steering_angles: plan.to_vec(),
                seed: 9,
            },
            samples,
        }
    }

    #[test]
    fn binary_round_trip_is_exact() {
        let ds = dataset();
        let mut bytes = Vec::new();
        write_dataset(&mut bytes, &ds).unwrap();
        assert_eq!(&bytes[..4], b"LFDS");
        assert_eq!(read_dataset(bytes.as_slice()).unwrap(), ds);
    }

    #[test]
    fn truncated_file_is_rejected() {
        let ds = dataset();
        let mut bytes = Vec::new();
        write_dataset(&mut bytes, &ds).unwrap();
        bytes.pop();
        assert!(matches!(read_dataset(bytes.as_slice()), Err(FeatureError::Format(_))));
    }

    #[test]
    fn inconsistent_manifest_is_rejected() {
        let mut ds = dataset();
        ds.manifest.placements_per_level = 3;
        assert!(matches!(write_dataset(Vec::new(), &ds), Err(FeatureError::Format(_))));
    }

    #[test]
    fn csv_has_one_column_per_feature() {
        let ds = dataset();
        let mut out = Vec::new();
        write_features_csv(&mut out, &ds.samples).unwrap();
        let text = String::from_utf8(out).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines.len(), 5);
        assert_eq!(lines[0].split(',').count(), 4 + 3 * 5 + 3 * 2 * 3);
        assert!(lines[0].starts_with("sample,leaf_id,distance,rwc,loc0_eta"));
    }
}
