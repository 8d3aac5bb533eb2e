use clap::{Parser, Subcommand, ValueEnum};
use leafrad::features::{read_dataset, Dataset};
use leafrad::harness::{
    cmd_angle_sweep, cmd_eval, cmd_ingest, cmd_simulate, cmd_train, ExperimentConfig, HarnessError, SplitKind,
};
use leafrad::leaf::LeafType;
use leafrad::lmnet::Variant;
use serde_json::json;
use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

const SCHEMA: &str = include_str!("../../../schema/experiment_config.schema.json");

#[derive(Parser)]
#[command(name = "leafrad", version, about = "mmWave leaf water-content experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Common {
    /// Experiment config (JSON); defaults apply to omitted keys.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; overrides `output.dir`.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum SplitArg {
    Kfold,
    LogoDistance,
}

#[derive(Clone, Copy, ValueEnum)]
enum VariantArg {
    Full,
    RssPlusAng,
    RssOnly,
}

#[derive(Clone, Copy, ValueEnum)]
enum LeafArg {
    Avocado,
    Rubra,
    BullBay,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize a dataset (and optionally a raw ADC dump).
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Raw capture file name, relative to the output directory.
        #[arg(long)]
        raw_dump: Option<PathBuf>,
    },
    /// Cross-validate LM-Net variants on a dataset.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long, value_enum)]
        split: Option<SplitArg>,
        /// Repeatable; replaces the configured variants.
        #[arg(long, value_enum)]
        variant: Vec<VariantArg>,
    },
    /// Retrain on centered steering-angle subsets.
    AngleSweep {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        dataset: PathBuf,
        /// Comma-separated subset sizes.
        #[arg(long, value_delimiter = ',')]
        counts: Vec<usize>,
    },
    /// Turn a raw ADC capture into a dataset.
    Ingest {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        raw: PathBuf,
    },
    /// Score a saved checkpoint on a dataset.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        model: PathBuf,
    },
    /// Print the config JSON schema.
    Schema,
    /// Print a default config.
    InitConfig {
        #[arg(long, value_enum, default_value = "avocado")]
        leaf: LeafArg,
    },
}

fn load(common: &Common) -> Result<(ExperimentConfig, PathBuf), HarnessError> {
    let mut cfg = match &common.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    let out = common.out.clone().unwrap_or_else(|| cfg.output.dir.clone());
    Ok((cfg, out))
}

fn dataset(path: &Path) -> Result<Dataset, HarnessError> {
    Ok(read_dataset(BufReader::new(File::open(path)?))?)
}

fn run(cli: Cli) -> Result<serde_json::Value, HarnessError> {
    Ok(match cli.command {
        Command::Simulate { common, raw_dump } => {
            let (mut cfg, out) = load(&common)?;
            if raw_dump.is_some() {
                cfg.output.raw_dump = raw_dump;
            }
            serde_json::to_value(cmd_simulate(&cfg, &out)?)?
        }
        Command::Train {
            common,
            dataset: path,
            split,
            variant,
        } => {
            let (mut cfg, out) = load(&common)?;
            if let Some(s) = split {
                cfg.split = match s {
                    SplitArg::Kfold => SplitKind::Kfold,
                    SplitArg::LogoDistance => SplitKind::LogoDistance,
                };
            }
            if !variant.is_empty() {
                cfg.variants = variant
                    .into_iter()
                    .map(|v| match v {
                        VariantArg::Full => Variant::Full,
                        VariantArg::RssPlusAng => Variant::RssPlusAng,
                        VariantArg::RssOnly => Variant::RssOnly,
                    })
                    .collect();
            }
            serde_json::to_value(cmd_train(&dataset(&path)?, &cfg, &out)?)?
        }
        Command::AngleSweep {
            common,
            dataset: path,
            counts,
        } => {
            let (mut cfg, out) = load(&common)?;
            if !counts.is_empty() {
                cfg.angle_counts = counts;
            }
            serde_json::to_value(cmd_angle_sweep(&dataset(&path)?, &cfg, &out)?)?
        }
        Command::Ingest { common, raw } => {
            let (cfg, out) = load(&common)?;
            let ds = cmd_ingest(&cfg, &raw, &out)?;
            json!({ "samples": ds.samples.len(), "dataset": out.join("dataset.lfds") })
        }
        Command::Eval {
            common,
            dataset: path,
            model,
        } => {
            let (_, out) = load(&common)?;
            let r = cmd_eval(&dataset(&path)?, &model, &out)?;
            json!({ "samples": r.samples, "mae": r.mae, "buckets": r.buckets })
        }
        Command::Schema => serde_json::from_str(SCHEMA)?,
        Command::InitConfig { leaf } => {
            let leaf_type = match leaf {
                LeafArg::Avocado => LeafType::Avocado,
                LeafArg::Rubra => LeafType::Rubra,
                LeafArg::BullBay => LeafType::BullBay,
            };
            serde_json::to_value(ExperimentConfig {
                leaf_type,
                ..ExperimentConfig::default()
            })?
        }
    })
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(v) => {
            println!("{}", serde_json::to_string_pretty(&v).expect("JSON value serializes"));
            ExitCode::SUCCESS
        }
        Err(e) => {
            log::debug!("{e:?}");
            eprintln!("{}", json!({ "error": e.kind(), "message": e.to_string() }));
            ExitCode::FAILURE
        }
    }
}
