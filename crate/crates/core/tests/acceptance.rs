//! End-to-end acceptance suite. Prints one PASS/FAIL line per criterion and
//! exits nonzero if any fails. The heavy criteria share one smooth-leaf and
//! one rough-leaf dataset.

use leafrad::beam::{aoa_estimate, capon_weights, loaded_covariance, steering_vector, AngleGrid, RxArray};
use leafrad::em::{
    fresnel_normal, fresnel_oblique, refractive_index_real, snell_refract, ComplexPermittivity, EmError,
    Polarization,
};
use leafrad::features::{write_dataset, Dataset, FeatureSample, SampleGroup};
use leafrad::harness::{
    centered_subset, cross_validate, ingest, simulate, simulate_with_dump, train_experiment, ExperimentConfig,
    SplitKind,
};
use leafrad::leaf::{rcs, LeafSpec, LeafState, LeafType};
use leafrad::lmnet::{gradient_check, Batch, LmNet, ModelParams, TrainConfig, Variant};
use leafrad::radar::{leaf_zone, range_fft, range_resolution, synth_frame, ChirpConfig, Scene};
use leafrad::rng;
use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use std::collections::HashMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::Instant;

type Outcome = Result<String, String>;

fn ensure(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn gradient_oracle() -> Outcome {
    let mut r = rng::substream(1, "acceptance-batch", &[]);
    let samples: Vec<FeatureSample> = (0..8)
        .map(|_| FeatureSample {
            iota: 11,
            kappa: 4,
            location: (0..55).map(|_| r.random_range(-2.0..2.0)).collect(),
            rss: (0..132).map(|_| r.random_range(-2.0..2.0)).collect(),
            rwc: r.random_range(50.0..100.0),
            group: SampleGroup {
                leaf_id: 0,
                distance: 0.6,
            },
        })
        .collect();
    let mut worst = (String::new(), 0.0f64);
    for variant in Variant::ALL {
        let mut params = ModelParams::init(11, 4, &mut rng::substream(1, rng::INIT, &[]));
        params.regression.bias[0] = samples.iter().map(|s| s.rwc).sum::<f64>() / 8.0;
        // Random gate and readout weights, so no gradient path starts at zero.
        for t in params.tensors_mut() {
            if t.iter().all(|&v| v == 0.0) || t.len() <= 32 {
                t.iter_mut().for_each(|v| *v += r.random_range(-0.3..0.3));
            }
        }
        let net = LmNet::new(params, variant);
        let batch = Batch::from_samples(&samples.iter().collect::<Vec<_>>()).map_err(|e| e.to_string())?;
        for g in gradient_check(&net, &batch, 1e-4, 16, 1e-4, 1).map_err(|e| e.to_string())? {
            if g.checked == 0 && variant == Variant::Full {
                return Err(format!("{}: no kink-free probe", g.name));
            }
            if g.max_relative_error > worst.1 {
                worst = (format!("{}/{}", variant.name(), g.name), g.max_relative_error);
            }
        }
    }
    ensure(worst.1 <= 1e-4, format!("max relative error {:.2e} ({})", worst.1, worst.0))
}

fn em_identities() -> Outcome {
    let vacuum = refractive_index_real(ComplexPermittivity::new(1.0, 0.0));
    let n = Complex64::new(1.5, 0.0);
    let brewster = fresnel_oblique(Complex64::new(1.0, 0.0), n, 1.5f64.atan(), Polarization::TM).norm();
    let normal = snell_refract(1.0, 1.5, 0.0).map_err(|e| e.to_string())?;
    let tir = snell_refract(1.5, 1.0, 60f64.to_radians());
    let ok = (vacuum - 1.0).abs() < 1e-12
        && fresnel_normal(1.0) == 0.0
        && (fresnel_normal(3.0) - 0.5).abs() < 1e-15
        && brewster < 1e-10
        && normal.abs() < 1e-15
        && matches!(tir, Err(EmError::TotalInternalReflection { .. }));
    ensure(ok, format!("n_vac={vacuum}, |r_B|={brewster:.1e}, θt(0)={normal}, TIR={}", tir.is_err()))
}

fn capon_recovery() -> Outcome {
    let lambda = ChirpConfig::default().wavelength();
    let array = RxArray {
        elements: 4,
        spacing: lambda / 2.0,
        wavelength: lambda,
    };
    let grid = AngleGrid::default();
    let (mut worst_err, mut worst_dist) = (0.0f64, 0.0f64);
    for seed in 0..100 {
        let mut r = rng::substream(seed, "acceptance-capon", &[]);
        let xi0: f64 = r.random_range(-16.0..=16.0);
        let a0 = steering_vector(xi0, 4, array.spacing, lambda);
        let sigma = 10f64.powf(-20.0 / 20.0) / 2f64.sqrt();
        let snaps = DMatrix::from_fn(4, 32, |k, n| {
            let s = Complex64::from_polar(1.0, 0.7 * n as f64 + 0.3 * (n * n) as f64);
            let re: f64 = StandardNormal.sample(&mut r);
            let im: f64 = StandardNormal.sample(&mut r);
            a0[k] * s + Complex64::new(re, im) * sigma
        });
        let est = aoa_estimate(&snaps, &grid, &array).map_err(|e| e.to_string())?;
        worst_err = worst_err.max((est.aoa - xi0).abs());
        let cov = loaded_covariance(&snaps);
        for xi in grid.angles() {
            let a = steering_vector(xi, 4, array.spacing, lambda);
            let w = capon_weights(&cov, &a).map_err(|e| e.to_string())?;
            worst_dist = worst_dist.max((w.dotc(&a) - Complex64::new(1.0, 0.0)).norm());
        }
    }
    ensure(
        worst_err <= 2.0 && worst_dist <= 1e-10,
        format!("worst AoA error {worst_err:.2}°, worst |wᴴa−1| {worst_dist:.1e}"),
    )
}

fn range_pipeline() -> Outcome {
    let cfg = ChirpConfig::default();
    let spec = LeafSpec {
        roughness_sigma: 0.0,
        ..LeafSpec::default()
    };
    let scene = |d: f64| -> Result<Scene, String> {
        Ok(Scene {
            snr: f64::INFINITY,
            ..Scene::new(LeafState::new(spec, 100.0).map_err(|e| e.to_string())?, d)
        })
    };
    let level = |d: f64| -> Result<(usize, f64), String> {
        let frame = synth_frame(&cfg, &scene(d)?, 0.0, 3).map_err(|e| e.to_string())?;
        let p = range_fft(&frame, &cfg).map_err(|e| e.to_string())?;
        let t = leaf_zone(&p, d).map_err(|e| e.to_string())?[1];
        Ok((t, p.summed_power(t).sqrt()))
    };
    let res = range_resolution(&cfg);
    let (bin, _) = level(0.6)?;
    let db = 20.0 * (level(0.8)?.1 / level(0.4)?.1).log10();
    ensure(
        bin == 15 && (res - 0.039972).abs() < 5e-7 && (db + 6.02).abs() <= 0.5,
        format!("bin {bin}, d_res {res:.6} m, 0.8 vs 0.4 m {db:.2} dB"),
    )
}

fn scattering_trends() -> Outcome {
    let freq = ChirpConfig::default().carrier_frequency();
    let at = |spec: LeafSpec, rwc: f64| {
        let s = LeafState::new(spec, rwc).map_err(|e| e.to_string())?;
        rcs(&s, 0.0, freq, Polarization::TE).map_err(|e| e.to_string())
    };
    let spec = LeafSpec::default();
    let wet = at(spec, 100.0)?;
    let dry = at(spec, 50.0)?;
    let mut monotone = true;
    for smooth in [LeafType::Avocado.preset(), LeafType::Rubra.preset()] {
        let mut prev = f64::NEG_INFINITY;
        for rwc in 50..=100 {
            let v = at(smooth, f64::from(rwc))?.rcs_total;
            monotone &= v >= prev;
            prev = v;
        }
    }
    ensure(
        wet.rcs_surface > wet.rcs_volumetric && dry.rcs_volumetric >= dry.rcs_surface && monotone,
        format!(
            "RWC100 surface {:.1} vs volumetric {:.1} dBsm; RWC50 {:.1} vs {:.1} dBsm; smooth monotone {monotone}",
            wet.rcs_surface, wet.rcs_volumetric, dry.rcs_surface, dry.rcs_volumetric
        ),
    )
}

/// Mean centre-bin dBFS per RWC level, over every Rx and steering angle.
fn level_means(ds: &Dataset) -> Vec<(f64, f64)> {
    ds.manifest
        .rwc_levels
        .iter()
        .map(|&l| {
            let v: Vec<f64> = ds
                .samples
                .iter()
                .filter(|s| (s.rwc - l).abs() < 0.5)
                .flat_map(|s| s.rss.chunks(3).map(|c| c[1]).collect::<Vec<_>>())
                .collect();
            (l, v.iter().sum::<f64>() / v.len() as f64)
        })
        .collect()
}

fn ls_slope(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}

fn rss_trend(smooth: &Dataset, rough: &Dataset) -> Outcome {
    let s = level_means(smooth);
    let r = level_means(rough);
    let increasing = s.windows(2).all(|w| w[1].1 > w[0].1);
    let (ss, rs) = (ls_slope(&s), ls_slope(&r));
    let ratio = rs.abs() / ss.abs();
    let fmt = |v: &[(f64, f64)]| v.iter().map(|p| format!("{:.2}", p.1)).collect::<Vec<_>>().join(" ");
    ensure(
        increasing && ss > 0.0 && ratio < 0.3,
        format!(
            "smooth [{}] dBFS, slope {ss:.4} dB/%; rough slope {rs:.4} dB/% ({:.0}% of smooth)",
            fmt(&s),
            100.0 * ratio
        ),
    )
}

fn determinism() -> Outcome {
    let cfg = ExperimentConfig {
        rwc_levels: vec![50.0, 70.0, 90.0],
        placements_per_level: 4,
        distances: vec![0.4, 0.8],
        steering_angles: vec![-2.0, 0.0, 2.0],
        seed: 5,
        folds: 3,
        train: TrainConfig {
            batch_size: 16,
            max_epochs: 4,
            ..TrainConfig::default()
        },
        ..ExperimentConfig::default()
    };
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let raw = dir.path().join("capture.lfrd");
    let dumped = simulate_with_dump(&cfg, &raw).map_err(|e| e.to_string())?;
    let again = simulate(&cfg).map_err(|e| e.to_string())?;
    let bytes = |ds: &Dataset| -> Result<Vec<u8>, String> {
        let mut v = Vec::new();
        write_dataset(&mut v, ds).map_err(|e| e.to_string())?;
        Ok(v)
    };
    let same_file = bytes(&dumped)? == bytes(&again)?;
    let file = std::fs::File::open(&raw).map_err(|e| e.to_string())?;
    let ingested = ingest(&cfg, std::io::BufReader::new(file)).map_err(|e| e.to_string())?;
    let parity = ingested == dumped;
    let report = |ds: &Dataset| -> Result<Vec<u8>, String> {
        let (r, _) = train_experiment(ds, &cfg).map_err(|e| e.to_string())?;
        r.to_json().map_err(|e| e.to_string())
    };
    let same_report = report(&dumped)? == report(&again)?;
    ensure(
        same_file && parity && same_report,
        format!(
            "dataset bytes identical {same_file}, ingest parity {parity} ({} samples), report bytes identical {same_report}",
            dumped.samples.len()
        ),
    )
}

struct Experiments {
    smooth: Dataset,
    rough: Dataset,
    cfg: ExperimentConfig,
    kfold: HashMap<(&'static str, Variant), f64>,
}

impl Experiments {
    fn mae(&mut self, set: &'static str, variant: Variant) -> Result<f64, String> {
        if let Some(&m) = self.kfold.get(&(set, variant)) {
            return Ok(m);
        }
        let ds = if set == "rough" { &self.rough } else { &self.smooth };
        let m = cross_validate(&ds.samples, SplitKind::Kfold, variant, &self.cfg)
            .map_err(|e| e.to_string())?
            .metrics
            .mae;
        self.kfold.insert((set, variant), m);
        Ok(m)
    }
}

fn angle_ablation(x: &mut Experiments) -> Outcome {
    let all = x.mae("smooth", Variant::Full)?;
    let keep = centered_subset(&x.smooth.manifest.steering_angles, 1).map_err(|e| e.to_string())?;
    let single = x.smooth.select_angles(&keep);
    let one = cross_validate(&single.samples, SplitKind::Kfold, Variant::Full, &x.cfg)
        .map_err(|e| e.to_string())?
        .metrics
        .mae;
    ensure(
        all <= 0.8 * one,
        format!("MAE 11 angles {all:.2}% vs 1 angle ({:?}°) {one:.2}% ({:.0}% reduction)", single.manifest.steering_angles, 100.0 * (1.0 - all / one)),
    )
}

fn module_ablation(x: &mut Experiments) -> Outcome {
    let full = x.mae("rough", Variant::Full)?;
    let rss = x.mae("rough", Variant::RssOnly)?;
    let plus = x.mae("rough", Variant::RssPlusAng)?;
    // Median predictor, for scale.
    let mut rwc: Vec<f64> = x.rough.samples.iter().map(|s| s.rwc).collect();
    rwc.sort_by(f64::total_cmp);
    let median = rwc[rwc.len() / 2];
    let chance = rwc.iter().map(|r| (r - median).abs()).sum::<f64>() / rwc.len() as f64;
    ensure(
        full <= rss && full <= 1.05 * rss.min(plus),
        format!("rough leaf MAE: Full {full:.2}%, RSS+Ang {plus:.2}%, RSS only {rss:.2}% (median predictor {chance:.2}%)"),
    )
}

fn unseen_distance(x: &mut Experiments) -> Outcome {
    let known = x.mae("smooth", Variant::Full)?;
    let logo = cross_validate(&x.smooth.samples, SplitKind::LogoDistance, Variant::Full, &x.cfg)
        .map_err(|e| e.to_string())?;
    let unseen = logo.metrics.mae;
    let per: Vec<String> = logo
        .metrics
        .folds
        .iter()
        .map(|f| format!("{:.1} m {:.2}%", f.held_out_distance.unwrap_or(f64::NAN), f.mae))
        .collect();
    ensure(
        unseen.is_finite() && unseen > known && unseen < 3.0 * known,
        format!("leave-one-distance-out {unseen:.2}% [{}] vs 10-fold {known:.2}%", per.join(", ")),
    )
}

fn end_to_end(x: &mut Experiments) -> Outcome {
    let m = x.mae("smooth", Variant::Full)?;
    ensure(m <= 5.0, format!("Full 10-fold MAE {m:.2}% on {} samples", x.smooth.samples.len()))
}

fn run(n: usize, name: &str, f: impl FnOnce() -> Outcome, failures: &mut usize) {
    let start = Instant::now();
    let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
        let msg = p
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_default();
        Err(format!("panicked: {msg}"))
    });
    let secs = start.elapsed().as_secs_f64();
    match outcome {
        Ok(d) => println!("PASS {n:>2} {name}: {d} [{secs:.0}s]"),
        Err(d) => {
            *failures += 1;
            println!("FAIL {n:>2} {name}: {d} [{secs:.0}s]");
        }
    }
}

fn main() -> ExitCode {
    // Accept and ignore libtest arguments such as --nocapture.
    let mut failures = 0;
    run(1, "gradient oracle", gradient_oracle, &mut failures);
    run(2, "EM identities", em_identities, &mut failures);
    run(3, "Capon recovery", capon_recovery, &mut failures);
    run(4, "range pipeline", range_pipeline, &mut failures);
    run(5, "scattering trends", scattering_trends, &mut failures);

    let smooth_cfg = ExperimentConfig::default();
    let rough_cfg = ExperimentConfig {
        leaf_type: LeafType::BullBay,
        ..ExperimentConfig::default()
    };
    let datasets = simulate(&smooth_cfg).and_then(|s| Ok((s, simulate(&rough_cfg)?)));
    let mut x = match datasets {
        Ok((smooth, rough)) => Experiments {
            smooth,
            rough,
            cfg: smooth_cfg,
            kfold: HashMap::new(),
        },
        Err(e) => {
            for (n, name) in [(6, "RSS trend"), (7, "steering-angle ablation"), (8, "module ablation"), (9, "unseen distance"), (11, "end-to-end MAE")] {
                failures += 1;
                println!("FAIL {n:>2} {name}: simulation failed: {e}");
            }
            run(10, "determinism and round-trip", determinism, &mut failures);
            return summary(failures);
        }
    };
    run(6, "RSS trend", || rss_trend(&x.smooth, &x.rough), &mut failures);
    run(7, "steering-angle ablation", || angle_ablation(&mut x), &mut failures);
    run(8, "module ablation", || module_ablation(&mut x), &mut failures);
    run(9, "unseen distance", || unseen_distance(&mut x), &mut failures);
    run(10, "determinism and round-trip", determinism, &mut failures);
    run(11, "end-to-end MAE", || end_to_end(&mut x), &mut failures);
    summary(failures)
}

fn summary(failures: usize) -> ExitCode {
    if failures == 0 {
        println!("acceptance: all criteria passed");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: {failures} criteria failed");
        ExitCode::FAILURE
    }
}
