//! Run configuration: defaults < TOML file < `AUGTTA_*` environment < flags.

use std::path::{Path, PathBuf};

use augtta::adapter::AdapterConfig;
use augtta::base::BaseTrainingConfig;
use augtta::controller::ControllerConfig;
use augtta::forge::CorruptionParams;
use augtta::oracle::TagMode;
use augtta::scenario::{scenario_1, scenario_2, Arm, ScenarioSpec};
use augtta::selector::{SelectorConfig, Strategy};
use clap::Args;
use serde::{Deserialize, Serialize};

pub const DEFAULT_REPS: usize = 100;
pub const DEFAULT_OUT: &str = "augtta-out";
pub const CHECKPOINT_NAME: &str = "base.ckpt";

#[derive(Args, Clone, Debug, Default)]
pub struct CommonArgs {
    /// TOML configuration file.
    #[arg(long, env = "AUGTTA_CONFIG")]
    pub config: Option<PathBuf>,
    /// Base seed.
    #[arg(long, env = "AUGTTA_SEED")]
    pub seed: Option<u64>,
    /// Output directory (created if missing).
    #[arg(long, env = "AUGTTA_OUT")]
    pub out: Option<PathBuf>,
    /// Worker threads; 0 or unset means all cores. Does not affect results.
    #[arg(long, env = "AUGTTA_WORKERS")]
    pub workers: Option<usize>,
}

#[derive(Args, Clone, Debug, Default)]
pub struct RunArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// `1`, `2`, or a path to a scenario TOML file.
    #[arg(long, env = "AUGTTA_SCENARIO")]
    pub scenario: Option<String>,
    /// Number of replications.
    #[arg(long, env = "AUGTTA_REPS")]
    pub reps: Option<usize>,
    /// Comma-separated arms: offline, tta, tta-saf.
    #[arg(long, env = "AUGTTA_ARMS", value_delimiter = ',')]
    pub arms: Option<Vec<String>>,
    /// Base-model checkpoint; defaults to `<out>/base.ckpt`.
    #[arg(long, env = "AUGTTA_CHECKPOINT")]
    pub checkpoint: Option<PathBuf>,
    /// Write one ledger CSV per (replication, arm).
    #[arg(long, env = "AUGTTA_DUMP_LEDGER")]
    pub dump_ledger: bool,
    /// Write each replication's stream with pixels and provenance.
    #[arg(long, env = "AUGTTA_DUMP_STREAM")]
    pub dump_stream: bool,
    /// Expert fidelity: provenance or exemplar.
    #[arg(long, env = "AUGTTA_ORACLE")]
    pub oracle: Option<String>,
    /// Selection strategy of the TTA+SAF arm: windowing or random.
    #[arg(long, env = "AUGTTA_SELECTOR")]
    pub selector: Option<String>,
    /// Act on fine-tune decisions in manual trigger mode.
    #[arg(long, env = "AUGTTA_CONFIRM_FINETUNE")]
    pub confirm_finetune: bool,
}

/// Everything a TOML configuration file may contain.
#[derive(Clone, Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub workers: Option<usize>,
    pub reps: Option<usize>,
    pub scenario: Option<String>,
    pub arms: Option<Vec<Arm>>,
    pub checkpoint: Option<PathBuf>,
    pub dump_ledger: Option<bool>,
    pub dump_stream: Option<bool>,
    pub oracle: Option<TagMode>,
    pub confirm_finetune: Option<bool>,
    pub train: Option<BaseTrainingConfig>,
    pub selector: Option<SelectorConfig>,
    pub adapter: Option<AdapterConfig>,
    pub controller: Option<ControllerConfig>,
    pub corruption: Option<CorruptionParams>,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, String> {
        let Some(path) = path else { return Ok(Self::default()) };
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        toml::from_str(&text).map_err(|e| format!("{}: {}", path.display(), e.message()))
    }
}

/// Where the run writes and how many threads it uses; deliberately not part
/// of the embedded configuration since neither affects the results.
#[derive(Clone, Debug)]
pub struct Placement {
    pub out: PathBuf,
    pub workers: usize,
}

fn placement(common: &CommonArgs, file: &FileConfig) -> Placement {
    Placement {
        out: common.out.clone().or_else(|| file.out.clone()).unwrap_or_else(|| PathBuf::from(DEFAULT_OUT)),
        workers: common.workers.or(file.workers).unwrap_or(0),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub seed: u64,
    pub train: BaseTrainingConfig,
}

pub fn resolve_train(common: &CommonArgs) -> Result<(TrainConfig, Placement), String> {
    let file = FileConfig::load(common.config.as_deref())?;
    let cfg = TrainConfig { seed: common.seed.or(file.seed).unwrap_or(0), train: file.train.clone().unwrap_or_default() };
    if cfg.train.train_per_class == 0 || cfg.train.heldout_per_class == 0 {
        return Err("train_per_class and heldout_per_class must be >= 1".into());
    }
    augtta::ArchSpec::new(cfg.train.arch.input_dim, cfg.train.arch.hidden_dim, cfg.train.arch.num_classes)
        .map_err(|e| e.to_string())?;
    Ok((cfg, placement(common, &file)))
}

/// The effective configuration of a replicate / compare-selection run; it is
/// embedded verbatim in every JSON summary.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub seed: u64,
    pub reps: usize,
    pub arms: Vec<Arm>,
    pub dump_ledger: bool,
    pub dump_stream: bool,
    pub scenario: ScenarioSpec,
}

pub struct ResolvedRun {
    pub config: RunConfig,
    pub placement: Placement,
    pub checkpoint: PathBuf,
}

fn load_scenario(which: &str) -> Result<ScenarioSpec, String> {
    match which {
        "1" => Ok(scenario_1()),
        "2" => Ok(scenario_2()),
        path => {
            let text = std::fs::read_to_string(path).map_err(|e| format!("{path}: {e}"))?;
            toml::from_str(&text).map_err(|e| format!("{path}: {}", e.message()))
        }
    }
}

pub fn resolve_run(args: &RunArgs) -> Result<ResolvedRun, String> {
    let file = FileConfig::load(args.common.config.as_deref())?;
    let placement = placement(&args.common, &file);

    let which = args.scenario.clone().or_else(|| file.scenario.clone()).unwrap_or_else(|| "2".into());
    let mut scenario = load_scenario(&which)?;
    if let Some(s) = &file.selector {
        scenario.selector = s.clone();
    }
    if let Some(a) = &file.adapter {
        scenario.adapter = a.clone();
    }
    if let Some(c) = &file.controller {
        scenario.controller = c.clone();
    }
    if let Some(c) = &file.corruption {
        scenario.corruption = c.clone();
    }
    if let Some(o) = file.oracle {
        scenario.oracle_mode = o;
    }
    if let Some(o) = &args.oracle {
        scenario.oracle_mode = o.parse().map_err(|e: augtta::Error| e.to_string())?;
    }
    if let Some(s) = &args.selector {
        scenario.selector.strategy = s.parse::<Strategy>().map_err(|e| e.to_string())?;
    }
    scenario.confirm_finetune = args.confirm_finetune || file.confirm_finetune.unwrap_or(scenario.confirm_finetune);
    scenario.validate().map_err(|e| e.to_string())?;

    let arms = match &args.arms {
        Some(names) => names.iter().map(|n| n.trim().parse::<Arm>()).collect::<Result<Vec<_>, _>>().map_err(|e| e.to_string())?,
        None => file.arms.clone().unwrap_or_else(|| Arm::ALL.to_vec()),
    };
    let mut arms_sorted = arms.clone();
    arms_sorted.sort();
    arms_sorted.dedup();
    if arms_sorted.is_empty() {
        return Err("at least one arm is required".into());
    }
    let reps = args.reps.or(file.reps).unwrap_or(DEFAULT_REPS);
    if reps == 0 {
        return Err("--reps must be >= 1".into());
    }
    let checkpoint = args
        .checkpoint
        .clone()
        .or_else(|| file.checkpoint.clone())
        .unwrap_or_else(|| placement.out.join(CHECKPOINT_NAME));
    Ok(ResolvedRun {
        config: RunConfig {
            seed: args.common.seed.or(file.seed).unwrap_or(0),
            reps,
            arms: arms_sorted,
            dump_ledger: args.dump_ledger || file.dump_ledger.unwrap_or(false),
            dump_stream: args.dump_stream || file.dump_stream.unwrap_or(false),
            scenario,
        },
        placement,
        checkpoint,
    })
}
