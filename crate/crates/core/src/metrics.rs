//! Evaluation: 0-1 error of single models and of peers, average pairwise
//! cosine similarity of the circulating models, and the CSV row format.

use rand::seq::index::sample;
use rand::Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::data::{Dataset, Label, SparseVector};
use crate::linear_models::{dense_dot, predict, LinearModel, ModelError};
use crate::protocol::NodeState;
use crate::rng::{stream, Stream};
use crate::scalar::Scalar;
use crate::theory::BoundCheck;
use crate::NodeId;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("{0}: empty input")]
    Empty(&'static str),
    #[error("evaluation panel of {k} peers requested from {n} peers")]
    PanelTooLarge { k: usize, n: usize },
    #[error("cosine similarity needs at least two models, got {0}")]
    TooFewModels(usize),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Fraction of `test` misclassified by `classify`.
pub fn error_rate<T, F>(test: &Dataset<T>, mut classify: F) -> Result<f64, MetricsError>
where
    T: Scalar,
    F: FnMut(&SparseVector<T>) -> Result<Label, ModelError>,
{
    if test.is_empty() {
        return Err(MetricsError::Empty("test set"));
    }
    let mut wrong = 0usize;
    for ex in &test.examples {
        if classify(&ex.features)? != ex.label {
            wrong += 1;
        }
    }
    Ok(wrong as f64 / test.len() as f64)
}

/// Mean over `models` of each model's test error.
pub fn zero_one_error<T: Scalar>(models: &[&LinearModel<T>], test: &Dataset<T>) -> Result<f64, MetricsError> {
    if models.is_empty() {
        return Err(MetricsError::Empty("models"));
    }
    let errs = models
        .par_iter()
        .map(|m| error_rate(test, |x| predict(m, x)))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(errs.iter().sum::<f64>() / errs.len() as f64)
}

/// Peers evaluated at every snapshot, drawn once per run.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EvalPanel {
    pub members: Vec<NodeId>,
}

impl EvalPanel {
    /// `k` distinct peers out of `n_nodes`, sorted by id.
    pub fn sample(n_nodes: usize, k: usize, seed: u64) -> Result<Self, MetricsError> {
        if k == 0 {
            return Err(MetricsError::Empty("evaluation panel"));
        }
        if k > n_nodes {
            return Err(MetricsError::PanelTooLarge { k, n: n_nodes });
        }
        let mut rng = stream(seed, Stream::Evaluation);
        let mut members = sample(&mut rng, n_nodes, k).into_vec();
        members.sort_unstable();
        Ok(EvalPanel { members })
    }

    pub fn all(n_nodes: usize) -> Self {
        EvalPanel {
            members: (0..n_nodes).collect(),
        }
    }
}

/// Mean test error of the panel peers' local predictions.
pub fn eval_peers<T: Scalar>(
    nodes: &[NodeState<T>],
    panel: &EvalPanel,
    test: &Dataset<T>,
    voted: bool,
) -> Result<f64, MetricsError> {
    if let Some(&bad) = panel.members.iter().find(|&&id| id >= nodes.len()) {
        return Err(MetricsError::PanelTooLarge {
            k: bad + 1,
            n: nodes.len(),
        });
    }
    if panel.members.is_empty() {
        return Err(MetricsError::Empty("evaluation panel"));
    }
    let errs = panel
        .members
        .par_iter()
        .map(|&id| error_rate(test, |x| nodes[id].local_prediction(x, voted)))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(errs.iter().sum::<f64>() / errs.len() as f64)
}

/// Cosine similarity, 0 when either vector is zero.
pub fn cosine<T: Scalar>(a: &[T], b: &[T]) -> f64 {
    let na = dense_dot(a, a).as_f64().sqrt();
    let nb = dense_dot(b, b).as_f64().sqrt();
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    (dense_dot(a, b).as_f64() / (na * nb)).clamp(-1.0, 1.0)
}

/// Average cosine over all pairs when there are at most `max_pairs` of them,
/// otherwise over `max_pairs` pairs drawn uniformly (with replacement) from
/// the set of unordered pairs of distinct models.
pub fn avg_pairwise_cosine<T: Scalar, R: Rng + ?Sized>(
    models: &[&[T]],
    max_pairs: usize,
    rng: &mut R,
) -> Result<f64, MetricsError> {
    let n = models.len();
    if n < 2 {
        return Err(MetricsError::TooFewModels(n));
    }
    let norms: Vec<f64> = models.iter().map(|w| dense_dot(w, w).as_f64().sqrt()).collect();
    let cos = |i: usize, j: usize| {
        if norms[i] == 0.0 || norms[j] == 0.0 {
            0.0
        } else {
            (dense_dot(models[i], models[j]).as_f64() / (norms[i] * norms[j])).clamp(-1.0, 1.0)
        }
    };
    let pairs = n * (n - 1) / 2;
    if pairs <= max_pairs {
        let rows: Vec<f64> = (0..n)
            .into_par_iter()
            .map(|i| (i + 1..n).map(|j| cos(i, j)).sum::<f64>())
            .collect();
        return Ok(rows.iter().sum::<f64>() / pairs as f64);
    }
    let mut sum = 0.0;
    for _ in 0..max_pairs {
        let i = rng.random_range(0..n);
        let mut j = rng.random_range(0..n - 1);
        if j >= i {
            j += 1;
        }
        sum += cos(i, j);
    }
    Ok(sum / max_pairs as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricSnapshot {
    pub cycle: u64,
    pub mean_err: f64,
    pub mean_err_voted: f64,
    pub avg_cosine: f64,
    pub msgs_sent: u64,
    pub msgs_delivered: u64,
    pub msgs_dropped: u64,
    pub online_fraction: f64,
    pub probe: Option<BoundCheck>,
}

pub const CSV_HEADER: &str = "run_id,seed,cycle,mean_err,mean_err_voted,avg_cosine,msgs_sent,msgs_delivered,msgs_dropped,online_fraction";
pub const PROBE_HEADER: &str = "probe_t,probe_lhs,probe_rhs,probe_holds";

pub fn csv_header(with_probe: bool) -> String {
    if with_probe {
        format!("{CSV_HEADER},{PROBE_HEADER}")
    } else {
        CSV_HEADER.to_string()
    }
}

pub fn csv_row(run_id: &str, seed: u64, s: &MetricSnapshot, with_probe: bool) -> String {
    let mut row = format!(
        "{run_id},{seed},{},{},{},{},{},{},{},{}",
        s.cycle,
        fmt_g6(s.mean_err),
        fmt_g6(s.mean_err_voted),
        fmt_g6(s.avg_cosine),
        s.msgs_sent,
        s.msgs_delivered,
        s.msgs_dropped,
        fmt_g6(s.online_fraction),
    );
    if with_probe {
        match &s.probe {
            Some(p) => row.push_str(&format!(
                ",{},{},{},{}",
                p.t,
                fmt_g6(p.lhs),
                fmt_g6(p.rhs),
                p.holds
            )),
            None => row.push_str(",,,,"),
        }
    }
    row
}

/// Six significant digits, C `%.6g` style.
pub fn fmt_g6(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return if x.is_sign_negative() { "-0".into() } else { "0".into() };
    }
    let sci = format!("{x:.5e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if !(-4..6).contains(&exp) {
        let m = strip_zeros(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{m}e{sign}{:02}", exp.abs())
    } else {
        let decimals = (5 - exp) as usize;
        strip_zeros(&format!("{x:.decimals$}")).to_string()
    }
}

fn strip_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}
