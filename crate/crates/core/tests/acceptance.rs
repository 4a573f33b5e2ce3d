//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero when any fails. Pass criterion numbers as arguments to run a subset:
//! `cargo test --test acceptance -- 1 4`.

use std::path::PathBuf;
use std::sync::OnceLock;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use gossip_learning::baselines::sequential_pegasos;
use gossip_learning::config::{Baseline, ExperimentConfig};
use gossip_learning::data::{load_svmlight, save_svmlight, split, standardize, Label};
use gossip_learning::linear_models::{
    adaline_update, distance, local_objective, merge, norm, pegasos_update, predict, weighted_vote,
};
use gossip_learning::metrics::error_rate;
use gossip_learning::peer_sampling::SamplerKind;
use gossip_learning::runner::{
    load_data, prepare, run_experiment, run_sweep, seed_configs, sim_config, RunOutput,
};
use gossip_learning::sim::{ChurnMode, Observer, Simulation};
use gossip_learning::theory::{check_bound, per_step_rhs, subgradient};
use gossip_learning::{Dataset, LabeledExample, LinearModel, NodeId, Variant};

const SEEDS: std::ops::RangeInclusive<u64> = 1..=10;
/// Preprocessing used by the SpamBase protocol runs.
const SPAM_STANDARDIZE: bool = true;
const SPAM_LAMBDA: f64 = 1e-4;

fn data_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data")
}

fn spambase_path() -> PathBuf {
    data_dir().join("spambase.svm")
}

fn spam_config(protocol: &str, cycles: u64, seed: u64) -> ExperimentConfig {
    let text = format!(
        "dataset_path = {}\nprotocol = {protocol}\nn_nodes = 100\ncycles = {cycles}\nseed = {seed}\n\
         train_size = 4140\ntest_size = 457\nlambda = {SPAM_LAMBDA}\nstandardize = {SPAM_STANDARDIZE}\n",
        spambase_path().display()
    );
    ExperimentConfig::parse(&text, None).expect("valid acceptance config")
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn sweep(base: &ExperimentConfig) -> Vec<RunOutput> {
    let cfgs = seed_configs(base, SEEDS);
    run_sweep(&cfgs, 8).expect("sweep runs").runs
}

/// Failure-free 100-cycle SpamBase sweeps, shared by several criteria.
fn clean_sweep(protocol: &'static str) -> &'static [RunOutput] {
    static MU: OnceLock<Vec<RunOutput>> = OnceLock::new();
    static RW: OnceLock<Vec<RunOutput>> = OnceLock::new();
    let cell = match protocol {
        "mu" => &MU,
        "rw" => &RW,
        other => panic!("no shared sweep for {other}"),
    };
    cell.get_or_init(|| sweep(&spam_config(protocol, 100, 0)))
}

fn err_at(runs: &[RunOutput], cycle: u64, voted: bool) -> f64 {
    mean(
        &runs
            .iter()
            .map(|r| {
                let row = r.row_at(cycle).expect("row at cycle");
                if voted {
                    row.mean_err_voted
                } else {
                    row.mean_err
                }
            })
            .collect::<Vec<_>>(),
    )
}

type Outcome = (bool, String);

fn c1_sequential_baseline() -> Outcome {
    let start = Instant::now();
    let full = load_svmlight(spambase_path(), None).expect("spambase data");
    let mut report = Vec::new();
    let mut best: Option<(f64, bool, f64)> = None;
    for standardized in [false, true] {
        for lambda in [1e-3, 1e-4] {
            let errs: Vec<f64> = SEEDS
                .map(|seed| {
                    let spec = gossip_learning::SplitSpec {
                        train_size: 4140,
                        test_size: 457,
                        seed,
                    };
                    let (train, test) = split(&full, &spec).unwrap();
                    let (train, test) = if standardized {
                        let (a, b, _) = standardize(&train, &test).unwrap();
                        (a, b)
                    } else {
                        (train, test)
                    };
                    let m = sequential_pegasos(&train, 20_000, lambda, seed).unwrap();
                    error_rate(&test, |x| predict(&m, x)).unwrap()
                })
                .collect();
            let e = mean(&errs);
            report.push(format!("std={standardized} lambda={lambda:e}: {e:.4}"));
            if best.is_none_or(|b| e < b.0) {
                best = Some((e, standardized, lambda));
            }
        }
    }
    let (e, s, l) = best.unwrap();
    let secs = start.elapsed().as_secs_f64();
    let ok = (e - 0.111).abs() <= 0.03 && secs < 60.0;
    (
        ok,
        format!(
            "best std={s} lambda={l:e} mean err {e:.4} (target 0.111 +- 0.03); {}; {secs:.1}s",
            report.join(", ")
        ),
    )
}

fn rand_vec(rng: &mut ChaCha8Rng, d: usize, scale: f64) -> Vec<f64> {
    (0..d).map(|_| rng.random_range(-scale..scale)).collect()
}

fn rand_example(rng: &mut ChaCha8Rng, d: usize) -> LabeledExample<f64> {
    let x = rand_vec(rng, d, 3.0);
    LabeledExample::from_dense(&x, Label::from_sign(rng.random_bool(0.5)))
}

fn rel_err(a: f64, b: f64, scale: f64) -> f64 {
    (a - b).abs() / scale.max(f64::MIN_POSITIVE)
}

fn c2_adaline_exactness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst_commute = 0.0f64;
    let mut worst_vote = 0.0f64;
    let mut label_mismatch = 0;
    for _ in 0..10_000 {
        let d = rng.random_range(1..20);
        let a = LinearModel::from_weights(rand_vec(&mut rng, d, 5.0), rng.random_range(0..50)).unwrap();
        let b = LinearModel::from_weights(rand_vec(&mut rng, d, 5.0), rng.random_range(0..50)).unwrap();
        let ex = rand_example(&mut rng, d);
        let eta = rng.random_range(1e-4..0.5);
        let lhs = adaline_update(&merge(&a, &b).unwrap(), &ex, eta).unwrap();
        let rhs = merge(
            &adaline_update(&a, &ex, eta).unwrap(),
            &adaline_update(&b, &ex, eta).unwrap(),
        )
        .unwrap();
        let scale = norm(&lhs.w).max(norm(&rhs.w)).max(1.0);
        for (x, y) in lhs.w.iter().zip(&rhs.w) {
            worst_commute = worst_commute.max(rel_err(*x, *y, scale));
        }

        let m = rng.random_range(1..12);
        let models: Vec<Vec<f64>> = (0..m).map(|_| rand_vec(&mut rng, d, 5.0)).collect();
        let refs: Vec<&[f64]> = models.iter().map(Vec::as_slice).collect();
        let x = rand_example(&mut rng, d).features;
        let avg: Vec<f64> = (0..d).map(|j| models.iter().map(|w| w[j]).sum::<f64>() / m as f64).collect();
        let avg_model = LinearModel::from_weights(avg.clone(), 0).unwrap();
        let mean_inner = models.iter().map(|w| x.dot_dense(w)).sum::<f64>() / m as f64;
        let inner_of_mean = x.dot_dense(&avg);
        let scale = models.iter().map(|w| x.dot_dense(w).abs()).sum::<f64>() / m as f64;
        let r = rel_err(mean_inner, inner_of_mean, scale);
        worst_vote = worst_vote.max(r);
        if weighted_vote(&refs, &x).unwrap() != predict(&avg_model, &x).unwrap()
            && mean_inner.abs() > 1e-12 * scale
        {
            label_mismatch += 1;
        }
    }
    let ok = worst_commute <= 1e-12 && worst_vote <= 1e-12 && label_mismatch == 0;
    (
        ok,
        format!(
            "10000 trials each; max rel err commutation {worst_commute:.2e}, voting {worst_vote:.2e}; label mismatches {label_mismatch}"
        ),
    )
}

fn c3_averaging_nonexpansive() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut violations = 0;
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..10_000 {
        let d = rng.random_range(1..30);
        let a = rand_vec(&mut rng, d, 10.0);
        let b = rand_vec(&mut rng, d, 10.0);
        let c = rand_vec(&mut rng, d, 10.0);
        let mid: Vec<f64> = a.iter().zip(&b).map(|(x, y)| (x + y) / 2.0).collect();
        let lhs = distance(&mid, &c);
        let rhs = distance(&a, &c).max(distance(&b, &c));
        worst = worst.max(lhs - rhs);
        if lhs > rhs + 1e-12 * rhs.max(1.0) {
            violations += 1;
        }
    }
    (
        violations == 0,
        format!("10000 triples, {violations} violations, max(lhs - rhs) = {worst:.3e}"),
    )
}

/// Replays every node's random walk through sequential Pegasos.
fn rw_replay(sampler: SamplerKind) -> (usize, usize, u64, u64) {
    let mut cfg = spam_config("rw", 200, 4);
    cfg.peer_sampling = sampler;
    cfg.record_lineage = true;
    let (full, test) = load_data(&cfg).unwrap();
    let prepared = prepare(&cfg, &full, test.as_ref()).unwrap();
    let mut sim = Simulation::new(sim_config(&cfg, &prepared).unwrap(), prepared.node_examples.clone()).unwrap();
    sim.run(200, &mut ()).unwrap();
    let lineage = sim.lineage();
    let mut exact = 0;
    let mut age_eq = 0;
    let (mut min_age, mut max_age) = (u64::MAX, 0);
    for node in sim.nodes() {
        let m = node.last_model();
        let mut walk: Vec<NodeId> = Vec::new();
        let mut id = m.lineage.expect("lineage recorded");
        while let Some(parent) = lineage[id as usize].received {
            walk.push(lineage[id as usize].node);
            id = parent;
        }
        walk.reverse();
        let mut replay = LinearModel::zeros(prepared.train.dim).unwrap();
        for &n in &walk {
            replay = pegasos_update(&replay, &prepared.node_examples[n], cfg.lambda).unwrap();
        }
        if replay.w == m.w && replay.age == m.age {
            exact += 1;
        }
        if m.age == 200 {
            age_eq += 1;
        }
        min_age = min_age.min(m.age);
        max_age = max_age.max(m.age);
    }
    (exact, age_eq, min_age, max_age)
}

fn c4_rw_replay() -> Outcome {
    let (exact, age_eq, lo, hi) = rw_replay(SamplerKind::Matching);
    let ok = exact == 100 && age_eq == 100;
    let (u_exact, _, u_lo, u_hi) = rw_replay(SamplerKind::Uniform);
    (
        ok,
        format!(
            "matching sampler: {exact}/100 bit-exact replays, {age_eq}/100 ages == 200 (range {lo}..{hi}); \
             uniform sampler (informational): {u_exact}/100 bit-exact, ages {u_lo}..{u_hi} <= 200"
        ),
    )
}

fn synthetic_separable(dir: &std::path::Path) -> PathBuf {
    let mut rng = ChaCha8Rng::seed_from_u64(55);
    let d = 10;
    let w_true = rand_vec(&mut rng, d, 1.0);
    let examples: Vec<LabeledExample<f64>> = (0..256)
        .map(|_| {
            let x = rand_vec(&mut rng, d, 1.0);
            let s: f64 = x.iter().zip(&w_true).map(|(a, b)| a * b).sum();
            LabeledExample::from_dense(&x, Label::from_sign(s >= 0.0))
        })
        .collect();
    let path = dir.join("separable.svm");
    save_svmlight(&Dataset::new("separable", examples, d).unwrap(), &path).unwrap();
    path
}

struct BoundObserver {
    checked: u64,
    held: u64,
    worst_ratio: f64,
}

impl Observer<f64> for BoundObserver {
    fn on_snapshot(&mut self, sim: &Simulation<f64>, _cycle: u64) -> Result<(), String> {
        let ctx = sim.theory_context().unwrap();
        for n in sim.nodes() {
            let p = n.last_model().probe.unwrap();
            if p.path_len == 0 {
                continue;
            }
            let c = check_bound(&p, &ctx).map_err(|e| e.to_string())?;
            self.checked += 1;
            self.held += u64::from(c.holds);
            self.worst_ratio = self.worst_ratio.max(c.lhs / c.rhs);
        }
        Ok(())
    }
}

fn per_step_trials(n: usize) -> (usize, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut violations = 0;
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..n {
        let d = rng.random_range(1..12);
        let lambda = 10f64.powf(rng.random_range(-3.0..0.0));
        let t: u64 = rng.random_range(1..500);
        let a = rand_vec(&mut rng, d, 3.0);
        let b = rand_vec(&mut rng, d, 3.0);
        let w_star = rand_vec(&mut rng, d, 3.0);
        let ex = rand_example(&mut rng, d);
        let far = if distance(&b, &w_star) > distance(&a, &w_star) { &b } else { &a };
        let w_bar: Vec<f64> = a.iter().zip(&b).map(|(x, y)| (x + y) / 2.0).collect();
        let start = LinearModel::from_weights(w_bar.clone(), t - 1).unwrap();
        let w_new = pegasos_update(&start, &ex, lambda).unwrap();
        let g = norm(&subgradient(&w_bar, &ex, lambda).unwrap());
        let term = local_objective(&w_bar, &ex, lambda).unwrap() - local_objective(&w_star, &ex, lambda).unwrap();
        let rhs = per_step_rhs(far, &w_new.w, &w_star, lambda, g, t);
        worst = worst.max(term - rhs);
        if term > rhs + 1e-9 * rhs.abs().max(1.0) {
            violations += 1;
        }
    }
    (violations, worst)
}

fn c5_regret_bound() -> Outcome {
    let start = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let path = synthetic_separable(dir.path());
    let text = format!(
        "dataset_path = {}\nprotocol = mu\nn_nodes = 64\ncycles = 500\nseed = 5\nlambda = 0.01\ninstrument_regret = true\n",
        path.display()
    );
    let cfg = ExperimentConfig::parse(&text, None).unwrap();
    let (full, test) = load_data(&cfg).unwrap();
    let prepared = prepare(&cfg, &full, test.as_ref()).unwrap();
    let sc = sim_config(&cfg, &prepared).unwrap();
    let mut sim = Simulation::new(sc, prepared.node_examples.clone()).unwrap();
    let mut obs = BoundObserver {
        checked: 0,
        held: 0,
        worst_ratio: 0.0,
    };
    sim.run(500, &mut obs).unwrap();
    let monitor = sim.g_monitor().unwrap().clone();
    let g_valid = monitor.max_subgradient_norm <= monitor.g();

    let out = run_experiment(&cfg).unwrap();
    let stats = out.probe_stats.unwrap();
    let csv_holds = out.rows.iter().all(|r| r.probe.is_some_and(|p| p.holds));

    let (step_viol, step_worst) = per_step_trials(1000);
    let secs = start.elapsed().as_secs_f64();
    let ok = obs.checked > 0
        && obs.held == obs.checked
        && stats.held == stats.checked
        && csv_holds
        && g_valid
        && step_viol == 0
        && secs < 60.0;
    (
        ok,
        format!(
            "bound held at {}/{} probed models (max lhs/rhs {:.3e}), G = {:.4} >= max subgradient norm {:.4}: {g_valid}; \
             CSV probe_holds all true: {csv_holds}; per-step inequality: {step_viol}/1000 violations (max excess {step_worst:.3e}); {secs:.1}s",
            obs.held,
            obs.checked,
            obs.worst_ratio,
            monitor.g(),
            monitor.max_subgradient_norm
        ),
    )
}

fn c6_convergence_ordering() -> Outcome {
    let mu = clean_sweep("mu");
    let rw = clean_sweep("rw");
    let mut wb2_cfg = spam_config("mu", 100, 0);
    wb2_cfg.baseline = Baseline::Wb2;
    let wb2 = sweep(&wb2_cfg);
    let (e_mu, e_rw, e_wb2) = (err_at(mu, 100, false), err_at(rw, 100, false), err_at(&wb2, 100, false));
    let ok = e_mu < e_rw && (e_mu - e_wb2).abs() <= 0.05;
    (
        ok,
        format!("cycle 100, 10 seeds: MU {e_mu:.4}, RW {e_rw:.4}, WB2 {e_wb2:.4}; |MU - WB2| = {:.4}", (e_mu - e_wb2).abs()),
    )
}

fn c7_failure_robustness() -> Outcome {
    let clean = clean_sweep("mu");
    let mut cfg = spam_config("mu", 1000, 0);
    cfg.drop_prob = 0.5;
    cfg.delay_min_factor = 1.0;
    cfg.delay_max_factor = 10.0;
    cfg.churn = ChurnMode::Lognormal;
    cfg.eval_every = 10;
    let failing = sweep(&cfg);
    let e_clean = err_at(clean, 100, false);
    let e_fail = err_at(&failing, 1000, false);
    let online = mean(
        &failing
            .iter()
            .flat_map(|r| r.rows.iter().map(|row| row.online_fraction))
            .collect::<Vec<_>>(),
    );
    let ok = (e_fail - e_clean).abs() <= 0.03;
    (
        ok,
        format!(
            "no failures @100: {e_clean:.4}; drop 0.5 + delay [1,10] + churn @1000: {e_fail:.4} (diff {:.4}, mean online fraction {online:.3})",
            e_fail - e_clean
        ),
    )
}

fn c8_voting_benefit() -> Outcome {
    let rw = clean_sweep("rw");
    let mu = clean_sweep("mu");
    let gap_rw = err_at(rw, 100, false) - err_at(rw, 100, true);
    let worst_mu = (50..=100)
        .map(|c| err_at(mu, c, true) - err_at(mu, c, false))
        .fold(f64::NEG_INFINITY, f64::max);
    let ok = gap_rw > 0.01 && worst_mu <= 0.01;
    (
        ok,
        format!(
            "RW @100: plain {:.4}, voted {:.4}, gap {gap_rw:.4}; MU worst (voted - plain) over cycles 50..100: {worst_mu:.4}",
            err_at(rw, 100, false),
            err_at(rw, 100, true)
        ),
    )
}

struct ReceiveCounter {
    counts: Vec<u32>,
    bad_cycles: u32,
    cycles: u32,
}

impl Observer<f64> for ReceiveCounter {
    fn on_deliver(&mut self, to: NodeId, _cycle: u64) {
        self.counts[to] += 1;
    }

    fn on_snapshot(&mut self, sim: &Simulation<f64>, _cycle: u64) -> Result<(), String> {
        self.cycles += 1;
        let ok = sim
            .nodes()
            .iter()
            .all(|n| !n.online || self.counts[n.id] == 1);
        if !ok {
            self.bad_cycles += 1;
        }
        self.counts.iter_mut().for_each(|c| *c = 0);
        Ok(())
    }
}

fn c9_matching_exactness() -> Outcome {
    let mut cfg = spam_config("mu", 100, 9);
    cfg.peer_sampling = SamplerKind::Matching;
    let (full, test) = load_data(&cfg).unwrap();
    let prepared = prepare(&cfg, &full, test.as_ref()).unwrap();
    let mut sim = Simulation::new(sim_config(&cfg, &prepared).unwrap(), prepared.node_examples.clone()).unwrap();
    let mut obs = ReceiveCounter {
        counts: vec![0; 100],
        bad_cycles: 0,
        cycles: 0,
    };
    sim.run(100, &mut obs).unwrap();
    (
        obs.bad_cycles == 0 && obs.cycles == 100,
        format!("{} of {} cycles had a node with receive count != 1", obs.bad_cycles, obs.cycles),
    )
}

fn c10_determinism() -> Outcome {
    let mut cfg = spam_config("mu", 60, 10);
    cfg.drop_prob = 0.5;
    cfg.delay_min_factor = 1.0;
    cfg.delay_max_factor = 10.0;
    cfg.churn = ChurnMode::Lognormal;
    let a = run_experiment(&cfg).unwrap().csv();
    let b = run_experiment(&cfg).unwrap().csv();
    let mut cfgs = seed_configs(&spam_config("um", 40, 0), 1..=6);
    cfgs[2].protocol = Variant::Rw;
    let s1 = run_sweep(&cfgs, 1).unwrap().csv;
    let s8 = run_sweep(&cfgs, 8).unwrap().csv;
    (
        a == b && s1 == s8,
        format!(
            "repeat run identical: {} ({} bytes); sweep jobs=1 vs jobs=8 identical: {} ({} bytes)",
            a == b,
            a.len(),
            s1 == s8,
            s1.len()
        ),
    )
}

fn main() {
    let criteria: [(u32, &str, fn() -> Outcome); 10] = [
        (1, "sequential baseline reproduction", c1_sequential_baseline),
        (2, "Adaline exactness", c2_adaline_exactness),
        (3, "averaging non-expansiveness", c3_averaging_nonexpansive),
        (4, "RW equals sequential replay", c4_rw_replay),
        (5, "averaged-regret bound", c5_regret_bound),
        (6, "convergence ordering", c6_convergence_ordering),
        (7, "failure robustness", c7_failure_robustness),
        (8, "voting benefit", c8_voting_benefit),
        (9, "perfect matching exactness", c9_matching_exactness),
        (10, "determinism", c10_determinism),
    ];
    let selected: Vec<u32> = std::env::args()
        .skip(1)
        .filter_map(|a| a.parse().ok())
        .collect();
    let mut failed = 0;
    for (n, name, f) in criteria {
        if !selected.is_empty() && !selected.contains(&n) {
            continue;
        }
        let start = Instant::now();
        let (ok, detail) = f();
        let verdict = if ok { "PASS" } else { "FAIL" };
        println!(
            "{verdict} criterion {n} ({name}): {detail} [{:.1}s]",
            start.elapsed().as_secs_f64()
        );
        if !ok {
            failed += 1;
        }
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
