//! Runtime check of the averaged-regret bound for merge-then-update.
//!
//! Each model in an instrumented run carries a [`RegretProbe`]. When a node
//! merges the received model `a` with its latest model `b` and updates the
//! average `w_bar` with its example, the new model's probe extends the probe
//! of whichever parent lies farther from the reference optimum `w*`, adding
//! the term `f_i(w_bar) - f_i(w*)`. After `t` such steps the averaged sum must
//! stay below `G^2 (ln t + 1) / (2 lambda t)`.

use thiserror::Error;

use crate::data::{Dataset, LabeledExample};
use crate::linear_models::{distance, global_objective, local_objective, norm, ModelError};
use crate::linear_models::LinearModel;
use crate::scalar::Scalar;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TheoryError {
    #[error("model without a regret probe in an instrumented run")]
    MissingProbe,
    #[error("bound check needs a path of length at least 1")]
    EmptyPath,
    #[error("reference optimum has {0} weights, model has {1}")]
    DimensionMismatch(usize, usize),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Length of the farthest-ancestor path and the regret accumulated along it.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RegretProbe {
    pub path_len: u64,
    pub regret_sum: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TheoryContext<T> {
    pub w_star: Vec<T>,
    pub lambda: T,
    /// Subgradient norm bound.
    pub g: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundCheck {
    pub t: u64,
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
}

/// Reference optimum of the regularized hinge objective over `train`.
///
/// Full-batch projected subgradient descent with step `1/(lambda k)` onto the
/// ball of radius `1/sqrt(lambda)` (which contains the optimum). The objective
/// is evaluated at every iterate and at the running average of the second
/// half of the run; the best point seen is returned.
pub fn compute_w_star<T: Scalar>(
    train: &Dataset<T>,
    lambda: T,
    iterations: u64,
) -> Result<Vec<T>, ModelError> {
    if train.is_empty() {
        return Err(ModelError::Empty("compute_w_star"));
    }
    let d = train.dim;
    let n = T::from_usize(train.len()).expect("dataset size fits the scalar");
    let half = T::from_f64_lossy(0.5);
    let radius = T::one() / lambda.sqrt();
    let mut w = vec![T::zero(); d];
    let mut best = w.clone();
    let mut best_obj = T::infinity();
    let mut avg = vec![T::zero(); d];
    let mut avg_count = 0u64;
    let avg_from = iterations / 2;
    let mut grad = vec![T::zero(); d];

    for k in 1..=iterations {
        grad.iter_mut().for_each(|g| *g = T::zero());
        let mut loss = T::zero();
        for ex in &train.examples {
            let margin = ex.y() * ex.features.dot_dense(&w);
            if margin < T::one() {
                loss += T::one() - margin;
                for &(i, x) in ex.features.entries() {
                    grad[i] -= ex.y() * x;
                }
            }
        }
        let sq: T = w.iter().map(|&v| v * v).sum();
        let obj = half * lambda * sq + loss / n;
        if obj < best_obj {
            best_obj = obj;
            best.copy_from_slice(&w);
        }
        let eta = T::one() / (lambda * T::from_u64(k).expect("iteration fits the scalar"));
        for (wi, gi) in w.iter_mut().zip(&grad) {
            *wi -= eta * (lambda * *wi + *gi / n);
        }
        let nw = norm(&w);
        if nw > radius {
            let s = radius / nw;
            w.iter_mut().for_each(|v| *v *= s);
        }
        if k > avg_from {
            avg_count += 1;
            let c = T::from_u64(avg_count).expect("count fits the scalar");
            for (a, &v) in avg.iter_mut().zip(&w) {
                *a += (v - *a) / c;
            }
        }
    }
    for cand in [w, avg] {
        let obj = global_objective(&cand, train, lambda)?;
        if obj < best_obj {
            best_obj = obj;
            best = cand;
        }
    }
    Ok(best)
}

/// `lambda * w_radius + max ||x||`, a bound on `||lambda w - y x 1[margin<1]||`
/// for every `w` with `||w|| <= w_radius`.
pub fn estimate_g<T: Scalar>(train: &Dataset<T>, lambda: T, w_radius: T) -> Result<f64, ModelError> {
    if train.is_empty() {
        return Err(ModelError::Empty("estimate_g"));
    }
    Ok((lambda * w_radius).as_f64() + train.max_feature_norm().as_f64())
}

/// Subgradient of the per-example objective at `w`.
pub fn subgradient<T: Scalar>(
    w: &[T],
    example: &LabeledExample<T>,
    lambda: T,
) -> Result<Vec<T>, ModelError> {
    let margin = example.y() * crate::linear_models::dot(w, &example.features)?;
    let mut g: Vec<T> = w.iter().map(|&v| lambda * v).collect();
    if margin < T::one() {
        for &(i, x) in example.features.entries() {
            g[i] -= example.y() * x;
        }
    }
    Ok(g)
}

/// Index of the parent farther from `w*`: `false` for `a`, `true` for `b`.
/// Ties go to `a`.
pub fn farther_is_second<T: Scalar>(a: &[T], b: &[T], w_star: &[T]) -> bool {
    distance(b, w_star) > distance(a, w_star)
}

/// Probe of the model obtained by averaging `a` and `b` and updating with
/// `example`.
pub fn probe_merge_update<T: Scalar>(
    a: &LinearModel<T>,
    b: &LinearModel<T>,
    example: &LabeledExample<T>,
    ctx: &TheoryContext<T>,
) -> Result<RegretProbe, TheoryError> {
    let pa = a.probe.ok_or(TheoryError::MissingProbe)?;
    let pb = b.probe.ok_or(TheoryError::MissingProbe)?;
    if a.dim() != ctx.w_star.len() {
        return Err(TheoryError::DimensionMismatch(ctx.w_star.len(), a.dim()));
    }
    let far = if farther_is_second(&a.w, &b.w, &ctx.w_star) { pb } else { pa };
    let two = T::from_f64_lossy(2.0);
    let w_bar: Vec<T> = a.w.iter().zip(&b.w).map(|(&x, &y)| (x + y) / two).collect();
    let term = local_objective(&w_bar, example, ctx.lambda)?.as_f64()
        - local_objective(&ctx.w_star, example, ctx.lambda)?.as_f64();
    Ok(RegretProbe {
        path_len: far.path_len + 1,
        regret_sum: far.regret_sum + term,
    })
}

/// Right-hand side `G^2 (ln t + 1) / (2 lambda t)`.
pub fn regret_bound(g: f64, lambda: f64, t: u64) -> f64 {
    let t = t as f64;
    g * g * (t.ln() + 1.0) / (2.0 * lambda * t)
}

pub fn check_bound<T: Scalar>(
    probe: &RegretProbe,
    ctx: &TheoryContext<T>,
) -> Result<BoundCheck, TheoryError> {
    if probe.path_len == 0 {
        return Err(TheoryError::EmptyPath);
    }
    let lhs = probe.regret_sum / probe.path_len as f64;
    let rhs = regret_bound(ctx.g, ctx.lambda.as_f64(), probe.path_len);
    Ok(BoundCheck {
        t: probe.path_len,
        lhs,
        rhs,
        holds: lhs <= rhs,
    })
}

/// Right-hand side of the single-step inequality
/// `lambda (t-1)/2 ||w_far - w*||^2 - lambda t/2 ||w_new - w*||^2 + G^2/(2 lambda t)`.
pub fn per_step_rhs<T: Scalar>(
    w_far: &[T],
    w_new: &[T],
    w_star: &[T],
    lambda: f64,
    g: f64,
    t: u64,
) -> f64 {
    let t = t as f64;
    let d_far = distance(w_far, w_star).as_f64();
    let d_new = distance(w_new, w_star).as_f64();
    lambda * (t - 1.0) / 2.0 * d_far * d_far - lambda * t / 2.0 * d_new * d_new
        + g * g / (2.0 * lambda * t)
}

/// Tracks the a-posteriori subgradient bound of a run: the largest model norm
/// and the largest realized subgradient norm seen so far.
#[derive(Debug, Clone, PartialEq)]
pub struct GMonitor {
    pub lambda: f64,
    pub max_x_norm: f64,
    pub max_model_norm: f64,
    pub max_subgradient_norm: f64,
}

impl GMonitor {
    pub fn new<T: Scalar>(train: &Dataset<T>, lambda: T) -> Self {
        GMonitor {
            lambda: lambda.as_f64(),
            max_x_norm: train.max_feature_norm().as_f64(),
            max_model_norm: 0.0,
            max_subgradient_norm: 0.0,
        }
    }

    pub fn observe_model<T: Scalar>(&mut self, w: &[T]) {
        self.max_model_norm = self.max_model_norm.max(norm(w).as_f64());
    }

    /// Records the averaged point and the subgradient used to update it.
    pub fn observe_update<T: Scalar>(
        &mut self,
        w_bar: &[T],
        example: &LabeledExample<T>,
        lambda: T,
    ) -> Result<(), ModelError> {
        self.observe_model(w_bar);
        let g = subgradient(w_bar, example, lambda)?;
        self.max_subgradient_norm = self.max_subgradient_norm.max(norm(&g).as_f64());
        Ok(())
    }

    pub fn g(&self) -> f64 {
        self.lambda * self.max_model_norm + self.max_x_norm
    }
}
