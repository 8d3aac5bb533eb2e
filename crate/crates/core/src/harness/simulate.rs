use super::{ExperimentConfig, HarnessError};
use crate::beam::AngleGrid;
use crate::features::{
    build_sample, extract_capture, write_dataset, write_features_csv, AngleCapture, Dataset, DatasetManifest,
    FeatureSample, SampleGroup,
};
use crate::leaf::LeafState;
use crate::radar::raw::{FrameMeta, RawWriter};
use crate::radar::{range_fft, synth_frame, ChirpConfig, RadarFrame, Scene};
use crate::rng;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

/// Where sample `index` sits in the (level, placement, distance) grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SampleSlot {
    pub level: usize,
    pub placement: usize,
    pub distance: usize,
}

impl SampleSlot {
    pub fn of(cfg: &ExperimentConfig, index: usize) -> Self {
        let nd = cfg.distances.len();
        let per_level = cfg.placements_per_level * nd;
        Self {
            level: index / per_level,
            placement: index % per_level / nd,
            distance: index % nd,
        }
    }

    fn key(self) -> [u64; 3] {
        [self.level as u64, self.placement as u64, self.distance as u64]
    }
}

/// The jittered scene for one placement and the seed its frames share.
pub fn placement_scene(cfg: &ExperimentConfig, slot: SampleSlot) -> Result<(Scene, u64), HarnessError> {
    let rwc = cfg.rwc_levels[slot.level];
    let leaf = LeafState::new(cfg.leaf_type.preset(), rwc)?;
    let mut r = rng::substream(cfg.seed, rng::SCENE, &slot.key());
    let mut jitter = |bound: f64| if bound > 0.0 { r.random_range(-bound..=bound) } else { 0.0 };
    let azimuth_offset = jitter(cfg.jitter.azimuth_deg);
    let aspect_angle = jitter(cfg.jitter.aspect_deg);
    let distance = cfg.distances[slot.distance] + jitter(cfg.jitter.distance_m);
    let scene = Scene {
        leaf: Some(leaf),
        distance,
        azimuth_offset,
        aspect_angle,
        background_reflectors: cfg.background_reflectors.clone(),
        snr: cfg.snr_db.unwrap_or(f64::INFINITY),
        polarization: cfg.polarization,
    };
    Ok((scene, rng::child_seed(cfg.seed, "frame", &slot.key())))
}

/// Range FFT, leaf-zone gate and Capon AoA for one frame.
pub fn process_frame(
    chirp: &ChirpConfig,
    grid: &AngleGrid,
    frame: &RadarFrame,
    d_t: f64,
) -> Result<AngleCapture, HarnessError> {
    let profile = range_fft(frame, chirp)?;
    Ok(extract_capture(&profile, frame.steering_angle, d_t, grid, &chirp.rx_array())?)
}

pub fn frame_meta(cfg: &ExperimentConfig, index: usize) -> FrameMeta {
    let slot = SampleSlot::of(cfg, index);
    FrameMeta {
        distance: cfg.distances[slot.distance],
        rwc: cfg.rwc_levels[slot.level],
        measurement: index as u32,
        leaf_id: cfg.leaf_type.code(),
    }
}

/// Assembles a sample from the frames of one measurement.
pub fn sample_from_frames(
    cfg: &ExperimentConfig,
    meta: &FrameMeta,
    frames: &[RadarFrame],
) -> Result<FeatureSample, HarnessError> {
    let captures = frames
        .iter()
        .map(|f| process_frame(&cfg.chirp, &cfg.aoa_grid, f, meta.distance))
        .collect::<Result<Vec<_>, _>>()?;
    let group = SampleGroup {
        leaf_id: meta.leaf_id,
        distance: meta.distance,
    };
    Ok(build_sample(&captures, &cfg.steering_angles, meta.distance, meta.rwc, group)?)
}

/// Simulates every steering angle of sample `index`.
pub fn simulate_frames(cfg: &ExperimentConfig, index: usize) -> Result<Vec<RadarFrame>, HarnessError> {
    let (scene, seed) = placement_scene(cfg, SampleSlot::of(cfg, index))?;
    cfg.steering_angles
        .iter()
        .map(|&eta| Ok(synth_frame(&cfg.chirp, &scene, eta, seed)?))
        .collect()
}

pub fn simulate_sample(cfg: &ExperimentConfig, index: usize) -> Result<FeatureSample, HarnessError> {
    let frames = simulate_frames(cfg, index)?;
    sample_from_frames(cfg, &frame_meta(cfg, index), &frames)
}

pub fn manifest(cfg: &ExperimentConfig, samples: usize) -> DatasetManifest {
    let mut steering_angles = cfg.steering_angles.clone();
    steering_angles.sort_by(f64::total_cmp);
    DatasetManifest {
        samples,
        leaf_type: cfg.leaf_type,
        rwc_levels: cfg.rwc_levels.clone(),
        placements_per_level: cfg.placements_per_level,
        distances: cfg.distances.clone(),
        iota: cfg.steering_angles.len(),
        kappa: cfg.chirp.rx_count,
        steering_angles,
        seed: cfg.seed,
    }
}

/// Simulates the full dataset in memory.
pub fn simulate(cfg: &ExperimentConfig) -> Result<Dataset, HarnessError> {
    cfg.validate()?;
    let n = cfg.sample_count();
    let samples = (0..n)
        .into_par_iter()
        .map(|i| simulate_sample(cfg, i))
        .collect::<Result<Vec<_>, _>>()?;
    let ds = Dataset {
        manifest: manifest(cfg, n),
        samples,
    };
    ds.validate()?;
    Ok(ds)
}

/// Simulates the dataset and streams every frame into a raw capture.
pub fn simulate_with_dump(cfg: &ExperimentConfig, raw: &Path) -> Result<Dataset, HarnessError> {
    cfg.validate()?;
    let n = cfg.sample_count();
    let file = BufWriter::new(File::create(raw)?);
    let mut writer = RawWriter::new(file, &cfg.chirp, n * cfg.steering_angles.len())?;
    let mut samples = Vec::with_capacity(n);
    let batch = 2 * rayon::current_num_threads();
    for start in (0..n).step_by(batch) {
        let done = (start..(start + batch).min(n))
            .into_par_iter()
            .map(|i| {
                let frames = simulate_frames(cfg, i)?;
                let sample = sample_from_frames(cfg, &frame_meta(cfg, i), &frames)?;
                Ok((i, frames, sample))
            })
            .collect::<Result<Vec<_>, HarnessError>>()?;
        for (i, frames, sample) in done {
            let meta = frame_meta(cfg, i);
            for f in &frames {
                writer.write_frame(&meta, f)?;
            }
            samples.push(sample);
        }
    }
    writer.finish()?;
    let ds = Dataset {
        manifest: manifest(cfg, n),
        samples,
    };
    ds.validate()?;
    Ok(ds)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulateOutput {
    pub dataset: PathBuf,
    pub manifest: PathBuf,
    pub features_csv: PathBuf,
    pub raw: Option<PathBuf>,
    pub samples: usize,
}

/// Writes `dataset.lfds`, `manifest.json` and `features.csv` into `out`.
pub fn cmd_simulate(cfg: &ExperimentConfig, out: &Path) -> Result<SimulateOutput, HarnessError> {
    std::fs::create_dir_all(out)?;
    let raw = cfg.output.raw_dump.as_ref().map(|p| out.join(p));
    let ds = match &raw {
        Some(p) => simulate_with_dump(cfg, p)?,
        None => simulate(cfg)?,
    };
    let dataset = out.join("dataset.lfds");
    write_dataset(BufWriter::new(File::create(&dataset)?), &ds)?;
    let manifest = out.join("manifest.json");
    std::fs::write(&manifest, serde_json::to_vec_pretty(&ds.manifest)?)?;
    let features_csv = out.join("features.csv");
    write_features_csv(BufWriter::new(File::create(&features_csv)?), &ds.samples)?;
    log::info!("simulated {} samples into {}", ds.samples.len(), out.display());
    Ok(SimulateOutput {
        dataset,
        manifest,
        features_csv,
        raw,
        samples: ds.samples.len(),
    })
}
