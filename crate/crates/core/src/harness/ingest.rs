use super::simulate::{manifest, sample_from_frames};
use super::{ExperimentConfig, HarnessError};
use crate::features::{write_dataset, write_features_csv, Dataset};
use crate::radar::raw::{FrameMeta, RawReader};
use crate::radar::RadarFrame;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read};
use std::path::Path;

/// Runs the simulation feature pipeline over a raw capture. Frames of one
/// measurement must be contiguous, one per planned steering angle.
pub fn ingest<R: Read>(cfg: &ExperimentConfig, r: R) -> Result<Dataset, HarnessError> {
    cfg.validate()?;
    let mut reader = RawReader::new(r, &cfg.chirp)?;
    let iota = cfg.steering_angles.len();
    let mut samples = Vec::new();
    let mut pending: Vec<RadarFrame> = Vec::with_capacity(iota);
    let mut current: Option<FrameMeta> = None;
    let flush = |meta: &FrameMeta, frames: &mut Vec<RadarFrame>, out: &mut Vec<_>| -> Result<(), HarnessError> {
        out.push(sample_from_frames(cfg, meta, frames)?);
        frames.clear();
        Ok(())
    };
    while let Some((meta, frame)) = reader.next_frame()? {
        if let Some(prev) = current.filter(|p| p.measurement != meta.measurement) {
            flush(&prev, &mut pending, &mut samples)?;
        }
        current = Some(meta);
        pending.push(frame);
    }
    if let Some(prev) = current {
        flush(&prev, &mut pending, &mut samples)?;
    }
    let ds = Dataset {
        manifest: manifest(cfg, samples.len()),
        samples,
    };
    ds.validate().map_err(|e| {
        HarnessError::Config(format!("capture does not match the configured campaign: {e}"))
    })?;
    Ok(ds)
}

/// Ingests `raw` and writes `dataset.lfds` and `features.csv` into `out`.
pub fn cmd_ingest(cfg: &ExperimentConfig, raw: &Path, out: &Path) -> Result<Dataset, HarnessError> {
    let ds = ingest(cfg, BufReader::new(File::open(raw)?))?;
    std::fs::create_dir_all(out)?;
    write_dataset(BufWriter::new(File::create(out.join("dataset.lfds"))?), &ds)?;
    write_features_csv(BufWriter::new(File::create(out.join("features.csv"))?), &ds.samples)?;
    Ok(ds)
}
