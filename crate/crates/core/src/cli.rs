//! Command-line front end. `main` only forwards to [`run`].

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::error::{Error, Result};
use crate::persist::{
    atomic_write, load_dataset, load_model, load_router, save_dataset, save_model, save_router, ArchSpec,
    ModelCheckpoint, RouterCheckpoint, RunConfig, ScenarioOverrides,
};
use crate::preprocess::{build_dataset, build_mixed_dataset, simulate_samples, Split};
use crate::router::{RouterConfig, RouterVariant, Specialist};
use crate::scenario::ScenarioId;
use crate::train::{
    compare_methods, router_accuracy, train_model, train_router, CompareInputs, Method, TrainHyper, STREAM_BLOCK,
    TIMING_REPEATS,
};

pub const DEFAULT_LAPS: u32 = 5;
pub const DEFAULT_VAL_FRACTION: f64 = 0.1;
pub const DEFAULT_SEED: u64 = 1;

#[derive(Debug, Parser)]
#[command(name = "beamloc", version, about = "Beam-space CIR localization: simulate, train, route and compare")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate one scenario and write a dataset directory
    Gen(GenArgs),
    /// Pool several scenario datasets into one mixed dataset
    Mix(MixArgs),
    /// Train an attention regressor
    Train(TrainArgs),
    /// Train the single-layer scenario router
    TrainRouter(TrainRouterArgs),
    /// Evaluate methods on test laps and write JSON and CSV reports
    #[command(alias = "eval")]
    Compare(CompareArgs),
}

#[derive(Debug, Args)]
pub struct GenArgs {
    /// Scenario preset: s1, s2 or s3
    #[arg(long)]
    pub scenario: Option<ScenarioId>,
    /// Number of laps; the last one is the test split [default: 5]
    #[arg(long)]
    pub laps: Option<u32>,
    /// Seed for scatterers, noise and the train/val split [default: 1]
    #[arg(long)]
    pub seed: Option<u64>,
    /// Fraction of non-test samples held out for validation [default: 0.1]
    #[arg(long)]
    pub val_fraction: Option<f64>,
    /// Output dataset directory
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Run config file (`key = value`); flags override it
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub overrides: ScenarioOverrides,
}

#[derive(Debug, Args)]
pub struct MixArgs {
    /// Dataset directories to pool (repeat the flag)
    #[arg(long = "data", required = true)]
    pub data: Vec<PathBuf>,
    /// Seed for the train/val split of the pooled data [default: 1]
    #[arg(long)]
    pub seed: Option<u64>,
    /// Validation fraction of the pooled data [default: 0.1]
    #[arg(long)]
    pub val_fraction: Option<f64>,
    /// Output dataset directory
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct HyperArgs {
    /// Training epochs
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Mini-batch size [default: 64]
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Adam learning rate [default: 0.0006]
    #[arg(long)]
    pub learning_rate: Option<f64>,
    /// Seed for initialization, shuffling and dropout [default: 1]
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Dataset directory
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Architecture as el=K,ln=on|off,mp=on|off [default: el=1,ln=off,mp=on]
    #[arg(long)]
    pub arch: Option<ArchSpec>,
    /// Dropout rate [default: 0.05]
    #[arg(long)]
    pub dropout_rate: Option<f64>,
    #[command(flatten)]
    pub hyper: HyperArgs,
    /// Output checkpoint directory
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Run config file (`key = value`); flags override it
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum VariantArg {
    /// Whole 128 x 46 input
    Full,
    /// One delay bin, 128 inputs
    Bin,
}

#[derive(Debug, Args)]
pub struct TrainRouterArgs {
    /// Mixed-scenario dataset directory
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Router input: full or bin
    #[arg(long, value_enum)]
    pub variant: Option<VariantArg>,
    /// Delay bin used by the bin variant (0..46)
    #[arg(long)]
    pub bin_index: Option<usize>,
    #[command(flatten)]
    pub hyper: HyperArgs,
    /// Output checkpoint directory
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Run config file (`key = value`); flags override it
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    /// Methods to evaluate: 1 generalized, 2 manual switching, 3 adaptive
    #[arg(long = "method", value_delimiter = ',', default_values_t = [1u8, 2, 3])]
    pub methods: Vec<u8>,
    /// Per-scenario test dataset directories (repeat the flag)
    #[arg(long = "data", required = true)]
    pub data: Vec<PathBuf>,
    /// Generalized model checkpoint (method 1)
    #[arg(long)]
    pub generalized: Option<PathBuf>,
    /// Specialist checkpoint as SCENARIO=DIR (repeat the flag)
    #[arg(long = "specialist")]
    pub specialists: Vec<String>,
    /// Router checkpoint (method 3)
    #[arg(long)]
    pub router: Option<PathBuf>,
    /// Method 2 declaration TEST=SPECIALIST, one per test set (repeat the flag)
    #[arg(long = "declare")]
    pub declare: Vec<String>,
    /// Timed repetitions of each test pass; 0 skips timing
    #[arg(long, default_value_t = TIMING_REPEATS)]
    pub timing_repeats: usize,
    /// Snapshots per scenario block in the method 3 stream
    #[arg(long, default_value_t = STREAM_BLOCK)]
    pub stream_block: usize,
    /// Output directory for report.json and report.csv
    #[arg(long)]
    pub out: PathBuf,
}

fn load_config(path: &Option<PathBuf>) -> Result<RunConfig> {
    match path {
        Some(p) => RunConfig::load(p),
        None => Ok(RunConfig::default()),
    }
}

fn required<T>(v: Option<T>, flag: &str) -> Result<T> {
    v.ok_or_else(|| Error::Config(format!("missing required {flag}")))
}

fn hyper_from(args: &HyperArgs, cfg: &RunConfig, base: TrainHyper) -> Result<(TrainHyper, u64)> {
    let hyper = TrainHyper {
        epochs: args.epochs.or(cfg.epochs).unwrap_or(base.epochs),
        batch_size: args.batch_size.or(cfg.batch_size).unwrap_or(base.batch_size),
        learning_rate: args.learning_rate.or(cfg.learning_rate).unwrap_or(base.learning_rate),
    };
    hyper.validate()?;
    Ok((hyper, args.seed.or(cfg.seed).unwrap_or(DEFAULT_SEED)))
}

fn key_value(s: &str, flag: &str) -> Result<(ScenarioId, String)> {
    let (k, v) = s
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("{flag} expects SCENARIO=VALUE, got `{s}`")))?;
    Ok((k.trim().parse()?, v.trim().to_string()))
}

fn gen(args: GenArgs) -> Result<()> {
    let cfg = load_config(&args.config)?;
    let scenario = required(args.scenario.or(cfg.scenario), "--scenario")?;
    let out = required(args.out.or(cfg.out), "--out")?;
    let laps = args.laps.or(cfg.laps).unwrap_or(DEFAULT_LAPS);
    let seed = args.seed.or(cfg.seed).unwrap_or(DEFAULT_SEED);
    let vf = args.val_fraction.or(cfg.val_fraction).unwrap_or(DEFAULT_VAL_FRACTION);
    let params = args.overrides.or(cfg.channel).resolve(scenario)?;
    let samples = simulate_samples(&params, laps, seed)?;
    let ds = build_dataset(samples, laps, vf, seed)?;
    save_dataset(&ds, &out)?;
    println!(
        "{scenario}: {} samples (train {}, val {}, test {}) -> {}",
        ds.len(),
        ds.count(Split::Train),
        ds.count(Split::Val),
        ds.count(Split::Test),
        out.display()
    );
    Ok(())
}

fn mix(args: MixArgs) -> Result<()> {
    let mut parts = Vec::new();
    let mut laps = None;
    for dir in &args.data {
        let ds = load_dataset(dir)?;
        if *laps.get_or_insert(ds.laps) != ds.laps {
            return Err(Error::Data(format!("{} has {} laps, expected {}", dir.display(), ds.laps, laps.unwrap())));
        }
        parts.push(ds.samples);
    }
    let seed = args.seed.unwrap_or(DEFAULT_SEED);
    let vf = args.val_fraction.unwrap_or(DEFAULT_VAL_FRACTION);
    let ds = build_mixed_dataset(parts, required(laps, "--data")?, vf, seed)?;
    save_dataset(&ds, &args.out)?;
    println!("mixed {} samples from {:?} -> {}", ds.len(), ds.scenarios(), args.out.display());
    Ok(())
}

fn train(args: TrainArgs) -> Result<()> {
    let cfg = load_config(&args.config)?;
    let data = required(args.data.or(cfg.data.clone()), "--data")?;
    let out = required(args.out.or(cfg.out.clone()), "--out")?;
    let arch = args.arch.or(cfg.arch).unwrap_or_default();
    let mut config = arch.model_config()?;
    if let Some(r) = args.dropout_rate.or(cfg.dropout_rate) {
        config.dropout_rate = r;
        config.validate()?;
    }
    let (hyper, seed) = hyper_from(&args.hyper, &cfg, TrainHyper::default())?;
    let ds = load_dataset(&data)?;
    let run = train_model(&ds, &config, &hyper, seed)?;
    let ckpt = ModelCheckpoint::from_run(&run, ds.scenarios());
    save_model(&ckpt, &out)?;
    atomic_write(&out.join("curves.csv"), run.curves.to_csv().as_bytes())?;
    let e = run.curves.best_epoch;
    let val = run.curves.val_loss.get(e - 1).map(|v| format!("{v:.6}")).unwrap_or_else(|| "n/a".into());
    println!(
        "{arch}: best epoch {e}, train MSE {:.6}, val MSE {val}, parameters {}",
        run.curves.train_loss[e - 1],
        run.model.param_count()
    );
    Ok(())
}

fn train_router_cmd(args: TrainRouterArgs) -> Result<()> {
    let cfg = load_config(&args.config)?;
    let data = required(args.data.or(cfg.data.clone()), "--data")?;
    let out = required(args.out.or(cfg.out.clone()), "--out")?;
    let variant = match args.variant {
        Some(VariantArg::Full) => RouterVariant::FullInput,
        Some(VariantArg::Bin) => RouterVariant::SingleBin,
        None => cfg.variant.unwrap_or(RouterVariant::FullInput),
    };
    let bin_index = args.bin_index.or(cfg.bin_index);
    let config = match (variant, bin_index) {
        (RouterVariant::SingleBin, None) => {
            return Err(Error::Config("--variant bin needs --bin-index".into()));
        }
        (RouterVariant::FullInput, Some(_)) => {
            return Err(Error::Config("--bin-index is only valid with --variant bin".into()));
        }
        (RouterVariant::SingleBin, Some(k)) => RouterConfig::single_bin(k),
        (RouterVariant::FullInput, None) => RouterConfig::full_input(),
    };
    config.validate()?;
    let (hyper, seed) = hyper_from(&args.hyper, &cfg, TrainHyper::router())?;
    let ds = load_dataset(&data)?;
    let run = train_router(&ds, &config, &hyper, seed)?;
    save_router(&RouterCheckpoint::from_run(&run, ds.scenarios()), &out)?;
    atomic_write(&out.join("curves.csv"), run.curves.to_csv().as_bytes())?;
    let test: Vec<_> = ds.indices(Split::Test).into_iter().map(|i| &ds.samples[i]).collect();
    let acc = router_accuracy(&run.router, &test)?;
    println!("router: test accuracy {acc:.4}, parameters {}", run.router.param_count());
    Ok(())
}

fn compare(args: CompareArgs) -> Result<()> {
    let methods = args
        .methods
        .iter()
        .map(|&m| Method::try_from(m))
        .collect::<Result<Vec<_>>>()?;
    if methods.contains(&Method::Adaptive) && args.router.is_none() {
        return Err(Error::Config("method 3 needs a router checkpoint: pass --router".into()));
    }
    if methods.contains(&Method::Generalized) && args.generalized.is_none() {
        return Err(Error::Config("method 1 needs a generalized checkpoint: pass --generalized".into()));
    }
    let mut datasets = BTreeMap::new();
    for dir in &args.data {
        let ds = load_dataset(dir)?;
        match ds.scenarios().as_slice() {
            [id] => {
                if datasets.insert(*id, ds).is_some() {
                    return Err(Error::Config(format!("two test datasets for {id}")));
                }
            }
            other => {
                return Err(Error::Data(format!(
                    "{} holds scenarios {other:?}; pass one dataset per scenario",
                    dir.display()
                )))
            }
        }
    }
    let mut declarations = BTreeMap::new();
    for d in &args.declare {
        let (test, spec) = key_value(d, "--declare")?;
        declarations.insert(test, spec.parse::<ScenarioId>()?);
    }
    if methods.contains(&Method::Manual) {
        let undeclared: Vec<String> = datasets
            .keys()
            .filter(|id| !declarations.contains_key(id))
            .map(|id| id.to_string())
            .collect();
        if !undeclared.is_empty() {
            return Err(Error::Config(format!(
                "method 2 needs --declare TEST=SPECIALIST for: {}",
                undeclared.join(", ")
            )));
        }
    }
    let generalized = args.generalized.as_deref().map(load_specialist).transpose()?;
    let mut specialists = BTreeMap::new();
    for s in &args.specialists {
        let (id, dir) = key_value(s, "--specialist")?;
        specialists.insert(id, load_specialist(Path::new(&dir))?);
    }
    let router = args.router.as_deref().map(load_router).transpose()?.map(|c| c.router);

    let mut inputs = CompareInputs::new(&datasets, generalized.as_ref(), &specialists, router.as_ref());
    inputs.methods = methods;
    inputs.declarations = declarations;
    inputs.timing_repeats = args.timing_repeats;
    inputs.stream_block = args.stream_block;
    let report = compare_methods(&inputs)?;

    fs::create_dir_all(&args.out).map_err(|e| Error::io(&args.out, e))?;
    atomic_write(&args.out.join("report.json"), report.to_json()?.as_bytes())?;
    let csv = report.to_csv()?;
    atomic_write(&args.out.join("report.csv"), csv.as_bytes())?;
    print!("{csv}");
    Ok(())
}

fn load_specialist(dir: &Path) -> Result<Specialist> {
    Ok(load_model(dir)?.specialist())
}

pub fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Gen(a) => gen(a),
        Command::Mix(a) => mix(a),
        Command::Train(a) => train(a),
        Command::TrainRouter(a) => train_router_cmd(a),
        Command::Compare(a) => compare(a),
    }
}

/// Parses `argv`, runs the command and returns the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

#[cfg(test)]
mod tests {
    use clap::CommandFactory;

    use super::*;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }
}
