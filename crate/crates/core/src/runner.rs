//! Experiment orchestration: data pipeline, simulation or baseline run, and
//! CSV output. Seed sweeps run independent experiments on a thread pool.

use std::collections::BTreeSet;
use std::ops::RangeInclusive;

use rand::seq::SliceRandom;
use thiserror::Error;

use crate::baselines::{wb1_predict, wb2_predict, ModelPopulation};
use crate::config::{Baseline, ConfigError, ExperimentConfig};
use crate::data::{
    load_svmlight, pearson_select, select_features, split, standardize, DataError, Dataset,
    LabeledExample, SplitSpec,
};
use crate::linear_models::{HyperParams, ModelError};
use crate::metrics::{
    avg_pairwise_cosine, csv_header, csv_row, error_rate, eval_peers, fmt_g6, zero_one_error,
    EvalPanel, MetricSnapshot, MetricsError,
};
use crate::protocol::ProtocolVariant;
use crate::rng::{stream, SimRng, Stream};
use crate::sim::{
    ChurnModel, Counters, LineageMode, NetworkModel, Observer, SimConfig, SimError, Simulation,
};
use crate::theory::{check_bound, compute_w_star, estimate_g, BoundCheck, TheoryContext, TheoryError};

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("data: {0}")]
    Data(#[from] DataError),
    #[error("simulation: {0}")]
    Sim(#[from] SimError),
    #[error("model: {0}")]
    Model(#[from] ModelError),
    #[error("metrics: {0}")]
    Metrics(#[from] MetricsError),
    #[error("theory: {0}")]
    Theory(#[from] TheoryError),
    #[error("{0}")]
    Invalid(String),
    #[error("duplicate run_id `{0}` in sweep")]
    DuplicateRunId(String),
    #[error("sweep needs at least one configuration")]
    EmptySweep,
}

/// Data after preprocessing, split and node assignment.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub train: Dataset<f64>,
    pub test: Dataset<f64>,
    /// `node_examples[i]` is held by peer `i`.
    pub node_examples: Vec<LabeledExample<f64>>,
    pub kept_features: Option<Vec<usize>>,
}

impl Prepared {
    pub fn node_dataset(&self) -> Dataset<f64> {
        Dataset {
            examples: self.node_examples.clone(),
            dim: self.train.dim,
            name: format!("{}-nodes", self.train.name),
        }
    }
}

/// Loads the dataset and, when configured, the separate test file with a
/// common dimension.
pub fn load_data(cfg: &ExperimentConfig) -> Result<(Dataset<f64>, Option<Dataset<f64>>), RunError> {
    let mut full = load_svmlight(&cfg.dataset_path, None)?;
    let test = match &cfg.test_path {
        None => None,
        Some(p) => {
            let mut t = load_svmlight(p, None)?;
            let dim = full.dim.max(t.dim);
            full.dim = dim;
            t.dim = dim;
            Some(t)
        }
    };
    Ok((full, test))
}

/// Bias column, feature selection on the full labeled set, split,
/// standardization fitted on train, then a seeded injection of training
/// examples into the peers.
pub fn prepare(
    cfg: &ExperimentConfig,
    full: &Dataset<f64>,
    test: Option<&Dataset<f64>>,
) -> Result<Prepared, RunError> {
    let mut full = full.clone();
    let mut test = test.cloned();
    if cfg.append_bias {
        full = full.with_bias_feature();
        test = test.map(|t| t.with_bias_feature());
    }
    let mut kept_features = None;
    if let Some(k) = cfg.feature_select_k {
        let (reduced, kept) = pearson_select(&full, k)?;
        test = test.map(|t| select_features(&t, &kept)).transpose()?;
        full = reduced;
        kept_features = Some(kept);
    }
    let (train, test) = match test {
        Some(test) => {
            let train = match cfg.train_size {
                None => full,
                Some(n) => {
                    if n > full.len() {
                        return Err(DataError::SplitTooLarge {
                            train: n,
                            test: 0,
                            n: full.len(),
                        }
                        .into());
                    }
                    let mut order: Vec<usize> = (0..full.len()).collect();
                    order.shuffle(&mut stream(cfg.seed, Stream::DataShuffle));
                    full.subset(format!("{}-train", full.name), &order[..n])
                }
            };
            (train, test)
        }
        None => {
            let n = full.len();
            let test_size = cfg.test_size.unwrap_or(n.div_ceil(10));
            let train_size = cfg.train_size.unwrap_or(n.saturating_sub(test_size));
            split(
                &full,
                &SplitSpec {
                    train_size,
                    test_size,
                    seed: cfg.seed,
                },
            )?
        }
    };
    let (train, test) = if cfg.standardize {
        let (a, b, _) = standardize(&train, &test)?;
        (a, b)
    } else {
        (train, test)
    };
    if cfg.n_nodes > train.len() {
        return Err(RunError::Invalid(format!(
            "{} training examples cannot cover {} nodes",
            train.len(),
            cfg.n_nodes
        )));
    }
    let mut order: Vec<usize> = (0..train.len()).collect();
    order.shuffle(&mut stream(cfg.seed, Stream::Assignment));
    let node_examples = order[..cfg.n_nodes]
        .iter()
        .map(|&i| train.examples[i].clone())
        .collect();
    Ok(Prepared {
        train,
        test,
        node_examples,
        kept_features,
    })
}

pub fn hyper_params(cfg: &ExperimentConfig, dim: usize) -> Result<HyperParams<f64>, RunError> {
    Ok(HyperParams::new(cfg.lambda, cfg.eta_adaline, dim)?)
}

/// Simulator setup for `cfg`; computes the reference optimum when probes are on.
pub fn sim_config(cfg: &ExperimentConfig, prepared: &Prepared) -> Result<SimConfig<f64>, RunError> {
    let dim = prepared.train.dim;
    let theory = if cfg.instrument_regret {
        let nodes = prepared.node_dataset();
        let w_star = compute_w_star(&nodes, cfg.lambda, cfg.w_star_iterations)?;
        let g = estimate_g(&nodes, cfg.lambda, 0.0)?;
        Some(TheoryContext {
            w_star,
            lambda: cfg.lambda,
            g,
        })
    } else {
        None
    };
    Ok(SimConfig {
        delta_ticks: cfg.delta_ticks,
        protocol: ProtocolVariant::new(cfg.protocol, cfg.learner),
        hp: hyper_params(cfg, dim)?,
        cache_size: cfg.cache_size,
        sampler: cfg.peer_sampling,
        network: NetworkModel::new(cfg.drop_prob, cfg.delay_min_factor, cfg.delay_max_factor)?,
        churn: ChurnModel {
            mode: cfg.churn,
            mu: cfg.churn_mu(),
            sigma: cfg.churn_sigma,
            online_target: cfg.online_target,
        },
        offline_delivery: cfg.offline_delivery,
        lineage: if cfg.record_lineage {
            LineageMode::Weights
        } else {
            LineageMode::Off
        },
        theory,
        seed: cfg.seed,
    })
}

/// Bound checks over the probed models of a run.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ProbeStats {
    pub checked: u64,
    pub held: u64,
    /// Largest `lhs / rhs` seen.
    pub worst_ratio: f64,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub run_id: String,
    pub seed: u64,
    pub with_probe: bool,
    pub rows: Vec<MetricSnapshot>,
    pub counters: Counters,
    pub probe_stats: Option<ProbeStats>,
    /// Summary of the final row.
    pub summary: String,
}

impl RunOutput {
    pub fn csv(&self) -> String {
        let mut out = csv_header(self.with_probe);
        out.push('\n');
        for r in &self.rows {
            out.push_str(&csv_row(&self.run_id, self.seed, r, self.with_probe));
            out.push('\n');
        }
        out
    }

    pub fn final_row(&self) -> Option<&MetricSnapshot> {
        self.rows.last()
    }

    pub fn row_at(&self, cycle: u64) -> Option<&MetricSnapshot> {
        self.rows.iter().find(|r| r.cycle == cycle)
    }
}

fn should_record(cycle: u64, every: u64, last: u64) -> bool {
    cycle % every == 0 || cycle == last
}

/// Computes a [`MetricSnapshot`] at every recorded cycle.
pub struct MetricsObserver<'a> {
    panel: EvalPanel,
    test: &'a Dataset<f64>,
    eval_every: u64,
    last_cycle: u64,
    max_cosine_pairs: usize,
    cosine_rng: SimRng,
    pub rows: Vec<MetricSnapshot>,
    pub probe_stats: Option<ProbeStats>,
}

impl<'a> MetricsObserver<'a> {
    pub fn new(cfg: &ExperimentConfig, test: &'a Dataset<f64>) -> Result<Self, RunError> {
        Ok(MetricsObserver {
            panel: EvalPanel::sample(cfg.n_nodes, cfg.eval_peers(), cfg.seed)?,
            test,
            eval_every: cfg.eval_every,
            last_cycle: cfg.cycles,
            max_cosine_pairs: cfg.max_cosine_pairs,
            cosine_rng: stream(cfg.seed, Stream::Cosine),
            rows: Vec::new(),
            probe_stats: cfg.instrument_regret.then(ProbeStats::default),
        })
    }

    fn snapshot(&mut self, sim: &Simulation<f64>, cycle: u64) -> Result<MetricSnapshot, RunError> {
        let nodes = sim.nodes();
        let mean_err = eval_peers(nodes, &self.panel, self.test, false)?;
        let mean_err_voted = eval_peers(nodes, &self.panel, self.test, true)?;
        let weights: Vec<&[f64]> = nodes.iter().map(|n| n.last_model().w.as_slice()).collect();
        let avg_cosine = if weights.len() >= 2 {
            avg_pairwise_cosine(&weights, self.max_cosine_pairs, &mut self.cosine_rng)?
        } else {
            1.0
        };
        let mut probe = None;
        if let (Some(stats), Some(ctx)) = (&mut self.probe_stats, sim.theory_context()) {
            let mut worst: Option<BoundCheck> = None;
            let mut all_hold = true;
            for &id in &self.panel.members {
                let m = nodes[id].last_model();
                let p = m.probe.ok_or(TheoryError::MissingProbe)?;
                if p.path_len == 0 {
                    continue;
                }
                let c = check_bound(&p, &ctx)?;
                stats.checked += 1;
                if c.holds {
                    stats.held += 1;
                }
                all_hold &= c.holds;
                let ratio = c.lhs / c.rhs;
                stats.worst_ratio = stats.worst_ratio.max(ratio);
                if worst.is_none_or(|w| ratio > w.lhs / w.rhs) {
                    worst = Some(c);
                }
            }
            probe = worst.map(|w| BoundCheck { holds: all_hold, ..w });
        }
        let c = sim.counters();
        Ok(MetricSnapshot {
            cycle,
            mean_err,
            mean_err_voted,
            avg_cosine,
            msgs_sent: c.sent,
            msgs_delivered: c.delivered,
            msgs_dropped: c.dropped(),
            online_fraction: sim.online_fraction(),
            probe,
        })
    }
}

impl Observer<f64> for MetricsObserver<'_> {
    fn on_snapshot(&mut self, sim: &Simulation<f64>, cycle: u64) -> Result<(), String> {
        if !should_record(cycle, self.eval_every, self.last_cycle) {
            return Ok(());
        }
        let row = self.snapshot(sim, cycle).map_err(|e| e.to_string())?;
        self.rows.push(row);
        Ok(())
    }
}

fn summarize(cfg: &ExperimentConfig, rows: &[MetricSnapshot], counters: &Counters) -> String {
    let Some(last) = rows.last() else {
        return format!("run_id={} seed={} no rows", cfg.run_id, cfg.seed);
    };
    let (head, other, label) = if cfg.voted {
        (last.mean_err_voted, last.mean_err, "final_err_voted")
    } else {
        (last.mean_err, last.mean_err_voted, "final_err")
    };
    let other_label = if cfg.voted { "final_err" } else { "final_err_voted" };
    format!(
        "run_id={} seed={} protocol={} baseline={} cycles={} {label}={} {other_label}={} avg_cosine={} sent={} delivered={} dropped={} in_flight={}",
        cfg.run_id,
        cfg.seed,
        cfg.protocol,
        cfg.baseline,
        last.cycle,
        fmt_g6(head),
        fmt_g6(other),
        fmt_g6(last.avg_cosine),
        counters.sent,
        counters.delivered,
        counters.dropped(),
        counters.in_flight,
    )
}

/// Runs `cfg` on already prepared data.
pub fn run_prepared(cfg: &ExperimentConfig, prepared: &Prepared) -> Result<RunOutput, RunError> {
    cfg.validate()?;
    let (rows, counters, probe_stats) = if cfg.baseline == Baseline::None {
        let mut sim = Simulation::new(sim_config(cfg, prepared)?, prepared.node_examples.clone())?;
        let mut obs = MetricsObserver::new(cfg, &prepared.test)?;
        sim.run(cfg.cycles, &mut obs)?;
        (obs.rows, sim.counters(), obs.probe_stats)
    } else {
        (run_baseline(cfg, prepared)?, Counters::default(), None)
    };
    let summary = summarize(cfg, &rows, &counters);
    Ok(RunOutput {
        run_id: cfg.run_id.clone(),
        seed: cfg.seed,
        with_probe: cfg.instrument_regret,
        rows,
        counters,
        probe_stats,
        summary,
    })
}

/// Baselines over a population of `n_nodes` Pegasos models trained on the
/// full training set, advanced one update per cycle.
fn run_baseline(cfg: &ExperimentConfig, prepared: &Prepared) -> Result<Vec<MetricSnapshot>, RunError> {
    let train = &prepared.train;
    let test = &prepared.test;
    let mut pop = ModelPopulation::new(cfg.n_nodes, train.dim, cfg.seed)?;
    let panel = EvalPanel::sample(cfg.n_nodes, cfg.eval_peers(), cfg.seed)?;
    let mut cosine_rng = stream(cfg.seed, Stream::Cosine);
    let mut rows = Vec::new();
    for cycle in 1..=cfg.cycles {
        pop.advance(train, cfg.lambda)?;
        if !should_record(cycle, cfg.eval_every, cfg.cycles) {
            continue;
        }
        let err = match cfg.baseline {
            Baseline::Seq => {
                let models: Vec<_> = panel.members.iter().map(|&i| &pop.models[i]).collect();
                zero_one_error(&models, test)?
            }
            Baseline::Wb1 => error_rate(test, |x| wb1_predict(&pop, x))?,
            Baseline::Wb2 => error_rate(test, |x| wb2_predict(&pop, x, cycle))?,
            Baseline::None => unreachable!("gossip runs do not come here"),
        };
        let weights: Vec<&[f64]> = pop.models.iter().map(|m| m.w.as_slice()).collect();
        let avg_cosine = if weights.len() >= 2 {
            avg_pairwise_cosine(&weights, cfg.max_cosine_pairs, &mut cosine_rng)?
        } else {
            1.0
        };
        rows.push(MetricSnapshot {
            cycle,
            mean_err: err,
            mean_err_voted: err,
            avg_cosine,
            msgs_sent: 0,
            msgs_delivered: 0,
            msgs_dropped: 0,
            online_fraction: 1.0,
            probe: None,
        });
    }
    Ok(rows)
}

/// Loads, prepares and runs one experiment.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunOutput, RunError> {
    cfg.validate()?;
    let (full, test) = load_data(cfg)?;
    let prepared = prepare(cfg, &full, test.as_ref())?;
    run_prepared(cfg, &prepared)
}

/// Copies of `base` for every seed in `seeds`, with run ids `{run_id}-s{seed}`.
pub fn seed_configs(base: &ExperimentConfig, seeds: RangeInclusive<u64>) -> Vec<ExperimentConfig> {
    seeds
        .map(|seed| ExperimentConfig {
            seed,
            run_id: format!("{}-s{seed}", base.run_id),
            ..base.clone()
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct SweepOutput {
    /// In input order.
    pub runs: Vec<RunOutput>,
    /// All rows, sorted by `(run_id, cycle)`.
    pub csv: String,
}

/// Runs independent experiments on `jobs` threads and merges their rows.
pub fn run_sweep(configs: &[ExperimentConfig], jobs: usize) -> Result<SweepOutput, RunError> {
    use rayon::prelude::*;

    if configs.is_empty() {
        return Err(RunError::EmptySweep);
    }
    let mut ids = BTreeSet::new();
    for c in configs {
        if !ids.insert(c.run_id.as_str()) {
            return Err(RunError::DuplicateRunId(c.run_id.clone()));
        }
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| RunError::Invalid(format!("cannot start {jobs} worker threads: {e}")))?;
    let runs = pool.install(|| {
        configs
            .par_iter()
            .map(run_experiment)
            .collect::<Result<Vec<_>, _>>()
    })?;
    let with_probe = runs.iter().any(|r| r.with_probe);
    let mut rows: Vec<(&str, u64, String)> = runs
        .iter()
        .flat_map(|r| {
            r.rows
                .iter()
                .map(move |row| (r.run_id.as_str(), row.cycle, csv_row(&r.run_id, r.seed, row, with_probe)))
        })
        .collect();
    rows.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
    let mut csv = csv_header(with_probe);
    csv.push('\n');
    for (_, _, line) in rows {
        csv.push_str(&line);
        csv.push('\n');
    }
    Ok(SweepOutput { runs, csv })
}
