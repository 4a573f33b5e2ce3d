use std::fs::File;
use std::io::{BufReader, Write};
use std::ops::RangeInclusive;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use gossip_learning::data::{parse_labeled_csv, save_svmlight, split};
use gossip_learning::runner::{run_experiment, run_sweep, seed_configs};
use gossip_learning::{ExperimentConfig, SplitSpec};

#[derive(Parser)]
#[command(name = "gossip-learn", version, about = "Gossip learning simulations over fully distributed data")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment; CSV goes to stdout (or --out), the summary to stderr.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Override a config key, `key=value`. Repeatable.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run one config for a range of seeds and merge the rows.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// Inclusive seed range, e.g. `1..10`.
        #[arg(long, value_parser = parse_seeds)]
        seeds: RangeInclusive<u64>,
        #[arg(long)]
        jobs: Option<usize>,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Convert a raw dataset to SVMlight and write a seeded train/test split.
    PrepareData {
        #[arg(long)]
        dataset: String,
        #[arg(long)]
        out: PathBuf,
        /// Raw comma-separated file (label last). Defaults to `<out>/spambase.data`.
        #[arg(long)]
        source: Option<PathBuf>,
        #[arg(long)]
        train_size: Option<usize>,
        #[arg(long)]
        test_size: Option<usize>,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
}

fn parse_seeds(s: &str) -> Result<RangeInclusive<u64>, String> {
    let (a, b) = s
        .split_once("..")
        .ok_or_else(|| format!("expected `a..b`, got `{s}`"))?;
    let a: u64 = a.trim().parse().map_err(|e| format!("bad start `{a}`: {e}"))?;
    let b: u64 = b.trim().parse().map_err(|e| format!("bad end `{b}`: {e}"))?;
    if a > b {
        return Err(format!("empty seed range {a}..{b}"));
    }
    Ok(a..=b)
}

fn emit(out: Option<&Path>, csv: &str) -> Result<()> {
    match out {
        Some(path) => std::fs::write(path, csv).with_context(|| format!("writing {}", path.display())),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(csv.as_bytes())?;
            stdout.flush()?;
            Ok(())
        }
    }
}

fn prepare_data(
    dataset: &str,
    out: &Path,
    source: Option<PathBuf>,
    train_size: Option<usize>,
    test_size: Option<usize>,
    seed: u64,
) -> Result<()> {
    if dataset != "spambase" {
        bail!("unknown dataset `{dataset}`; supported: spambase");
    }
    let source = source.unwrap_or_else(|| out.join("spambase.data"));
    if !source.exists() {
        bail!(
            "raw file {} not found; run scripts/fetch_spambase.sh {} first or pass --source",
            source.display(),
            out.display()
        );
    }
    let reader = BufReader::new(File::open(&source).with_context(|| format!("opening {}", source.display()))?);
    let full = parse_labeled_csv(reader, "spambase")
        .with_context(|| format!("parsing {}", source.display()))?;
    std::fs::create_dir_all(out)?;
    let n = full.len();
    let test_size = test_size.unwrap_or(n.div_ceil(10));
    let train_size = train_size.unwrap_or(n.saturating_sub(test_size));
    let (train, test) = split(&full, &SplitSpec { train_size, test_size, seed })?;
    save_svmlight(&full, out.join("spambase.svm"))?;
    save_svmlight(&train, out.join("spambase-train.svm"))?;
    save_svmlight(&test, out.join("spambase-test.svm"))?;
    let (neg, pos) = full.class_counts();
    eprintln!(
        "spambase: {n} examples ({pos} positive, {neg} negative), {} features; split {}/{} with seed {seed}",
        full.dim,
        train.len(),
        test.len()
    );
    Ok(())
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    match cli.command {
        Command::Run { config, set, out } => {
            let cfg = ExperimentConfig::from_file(&config, &set)?;
            let result = run_experiment(&cfg)?;
            emit(out.as_deref(), &result.csv())?;
            eprintln!("{}", result.summary);
        }
        Command::Sweep {
            config,
            seeds,
            jobs,
            set,
            out,
        } => {
            let base = ExperimentConfig::from_file(&config, &set)?;
            let configs = seed_configs(&base, seeds);
            let jobs = jobs.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
            let sweep = run_sweep(&configs, jobs)?;
            emit(out.as_deref(), &sweep.csv)?;
            for r in &sweep.runs {
                eprintln!("{}", r.summary);
            }
        }
        Command::PrepareData {
            dataset,
            out,
            source,
            train_size,
            test_size,
            seed,
        } => prepare_data(&dataset, &out, source, train_size, test_size, seed)?,
    }
    Ok(())
}
