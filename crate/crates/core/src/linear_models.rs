//! Linear models, the regularized hinge objective, the Pegasos and Adaline
//! update rules, model merging and prediction.
//!
//! Every operation takes its inputs by reference and returns a fresh value.
//! Weight vectors are dense; inner products against sparse examples only
//! visit the example's nonzeros. `sign(0)` is `+1` throughout.

use thiserror::Error;

use crate::data::{Dataset, Label, LabeledExample, SparseVector};
use crate::scalar::Scalar;
use crate::theory::RegretProbe;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("model dimension must be at least 1")]
    InvalidDimension,
    #[error("dimension mismatch: model has {model} weights, input needs {input}")]
    DimensionMismatch { model: usize, input: usize },
    #[error("{0} produced a non-finite weight")]
    NonFinite(&'static str),
    #[error("{0} requires a non-empty collection")]
    Empty(&'static str),
    #[error("invalid hyperparameter: {0}")]
    InvalidHyperParam(&'static str),
}

/// Dense weight vector plus its age, the number of updates along its merge
/// history (merging keeps the maximum age).
#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel<T> {
    pub w: Vec<T>,
    pub age: u64,
    /// Farthest-ancestor regret accumulator; only set in instrumented runs.
    pub probe: Option<RegretProbe>,
    /// Identifier in the run's lineage log, when lineage is recorded.
    pub lineage: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HyperParams<T> {
    pub lambda: T,
    pub eta_adaline: T,
    pub dim: usize,
}

impl<T: Scalar> HyperParams<T> {
    pub fn new(lambda: T, eta_adaline: T, dim: usize) -> Result<Self, ModelError> {
        if !(lambda > T::zero()) || !lambda.is_finite() {
            return Err(ModelError::InvalidHyperParam("lambda must be positive"));
        }
        if !(eta_adaline > T::zero()) || !eta_adaline.is_finite() {
            return Err(ModelError::InvalidHyperParam("eta_adaline must be positive"));
        }
        if dim == 0 {
            return Err(ModelError::InvalidDimension);
        }
        Ok(HyperParams {
            lambda,
            eta_adaline,
            dim,
        })
    }
}

fn check_dim<T: Scalar>(w: &[T], x: &SparseVector<T>) -> Result<(), ModelError> {
    let need = x.min_dim();
    if need > w.len() {
        return Err(ModelError::DimensionMismatch {
            model: w.len(),
            input: need,
        });
    }
    Ok(())
}

fn ensure_finite<T: Scalar>(w: &[T], op: &'static str) -> Result<(), ModelError> {
    if w.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(ModelError::NonFinite(op))
    }
}

pub fn dot<T: Scalar>(w: &[T], x: &SparseVector<T>) -> Result<T, ModelError> {
    check_dim(w, x)?;
    Ok(x.dot_dense(w))
}

pub fn dense_dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).map(|(&x, &y)| x * y).sum()
}

pub fn norm<T: Scalar>(w: &[T]) -> T {
    dense_dot(w, w).sqrt()
}

pub fn distance<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| (x - y) * (x - y))
        .sum::<T>()
        .sqrt()
}

fn sign_label<T: Scalar>(v: T) -> Label {
    Label::from_sign(v >= T::zero())
}

impl<T: Scalar> LinearModel<T> {
    /// The zero model of age 0.
    pub fn zeros(dim: usize) -> Result<Self, ModelError> {
        if dim == 0 {
            return Err(ModelError::InvalidDimension);
        }
        Ok(LinearModel {
            w: vec![T::zero(); dim],
            age: 0,
            probe: None,
            lineage: None,
        })
    }

    pub fn from_weights(w: Vec<T>, age: u64) -> Result<Self, ModelError> {
        if w.is_empty() {
            return Err(ModelError::InvalidDimension);
        }
        ensure_finite(&w, "from_weights")?;
        Ok(LinearModel {
            w,
            age,
            probe: None,
            lineage: None,
        })
    }

    pub fn dim(&self) -> usize {
        self.w.len()
    }

    pub fn dot(&self, x: &SparseVector<T>) -> Result<T, ModelError> {
        dot(&self.w, x)
    }

    pub fn norm(&self) -> T {
        norm(&self.w)
    }

    /// Copy carrying only the weights and age.
    pub fn payload(&self) -> Self {
        LinearModel {
            w: self.w.clone(),
            age: self.age,
            probe: None,
            lineage: None,
        }
    }
}

pub fn init_model<T: Scalar>(dim: usize) -> Result<LinearModel<T>, ModelError> {
    LinearModel::zeros(dim)
}

/// `max(0, 1 - y<w,x>)`.
pub fn hinge_loss<T: Scalar>(w: &[T], example: &LabeledExample<T>) -> Result<T, ModelError> {
    let margin = example.y() * dot(w, &example.features)?;
    Ok((T::one() - margin).max(T::zero()))
}

/// Per-example objective `lambda/2 ||w||^2 + hinge(w; x, y)`.
pub fn local_objective<T: Scalar>(
    w: &[T],
    example: &LabeledExample<T>,
    lambda: T,
) -> Result<T, ModelError> {
    let half = T::from_f64_lossy(0.5);
    Ok(half * lambda * dense_dot(w, w) + hinge_loss(w, example)?)
}

/// `lambda/2 ||w||^2` plus the mean hinge loss over the dataset.
pub fn global_objective<T: Scalar>(
    w: &[T],
    dataset: &Dataset<T>,
    lambda: T,
) -> Result<T, ModelError> {
    if dataset.is_empty() {
        return Err(ModelError::Empty("global_objective"));
    }
    let mut loss = T::zero();
    for ex in &dataset.examples {
        loss += hinge_loss(w, ex)?;
    }
    let half = T::from_f64_lossy(0.5);
    let n = T::from_usize(dataset.len()).expect("dataset size fits the scalar");
    Ok(half * lambda * dense_dot(w, w) + loss / n)
}

/// One Pegasos step: age `t' = t + 1`, rate `eta = 1/(lambda t')`, weights
/// shrink by `1 - eta lambda` and move by `eta y x` when the margin is below 1.
pub fn pegasos_update<T: Scalar>(
    m: &LinearModel<T>,
    example: &LabeledExample<T>,
    lambda: T,
) -> Result<LinearModel<T>, ModelError> {
    let margin = example.y() * m.dot(&example.features)?;
    let age = m.age + 1;
    let eta = T::one() / (lambda * T::from_u64(age).expect("age fits the scalar"));
    let scale = T::one() - eta * lambda;
    let mut w: Vec<T> = m.w.iter().map(|&v| scale * v).collect();
    if margin < T::one() {
        let step = eta * example.y();
        for &(i, x) in example.features.entries() {
            w[i] += step * x;
        }
    }
    ensure_finite(&w, "pegasos_update")?;
    Ok(LinearModel {
        w,
        age,
        probe: None,
        lineage: None,
    })
}

/// One Adaline step with constant rate: `w + eta (y - <w,x>) x`.
pub fn adaline_update<T: Scalar>(
    m: &LinearModel<T>,
    example: &LabeledExample<T>,
    eta: T,
) -> Result<LinearModel<T>, ModelError> {
    let residual = example.y() - m.dot(&example.features)?;
    let step = eta * residual;
    let mut w = m.w.clone();
    for &(i, x) in example.features.entries() {
        w[i] += step * x;
    }
    ensure_finite(&w, "adaline_update")?;
    Ok(LinearModel {
        w,
        age: m.age + 1,
        probe: None,
        lineage: None,
    })
}

/// Componentwise mean of the weights, maximum of the ages.
pub fn merge<T: Scalar>(
    a: &LinearModel<T>,
    b: &LinearModel<T>,
) -> Result<LinearModel<T>, ModelError> {
    if a.dim() != b.dim() {
        return Err(ModelError::DimensionMismatch {
            model: a.dim(),
            input: b.dim(),
        });
    }
    let two = T::from_f64_lossy(2.0);
    let w: Vec<T> = a.w.iter().zip(&b.w).map(|(&x, &y)| (x + y) / two).collect();
    ensure_finite(&w, "merge")?;
    Ok(LinearModel {
        w,
        age: a.age.max(b.age),
        probe: None,
        lineage: None,
    })
}

pub fn predict<T: Scalar>(m: &LinearModel<T>, x: &SparseVector<T>) -> Result<Label, ModelError> {
    Ok(sign_label(m.dot(x)?))
}

/// Majority vote of the models' signs; a tie goes to `+1`.
pub fn voted_predict<'a, T, I>(cache: I, x: &SparseVector<T>) -> Result<Label, ModelError>
where
    T: Scalar,
    I: IntoIterator<Item = &'a LinearModel<T>>,
{
    let mut size = 0usize;
    let mut positive = 0usize;
    for m in cache {
        size += 1;
        if m.dot(x)? >= T::zero() {
            positive += 1;
        }
    }
    if size == 0 {
        return Err(ModelError::Empty("voted_predict"));
    }
    // sign(positive/size - 1/2) without the division
    Ok(Label::from_sign(2 * positive >= size))
}

/// Votes weighted by `|<w,x>|`: the sign of the mean inner product.
pub fn weighted_vote<T: Scalar>(models: &[&[T]], x: &SparseVector<T>) -> Result<Label, ModelError> {
    if models.is_empty() {
        return Err(ModelError::Empty("weighted_vote"));
    }
    let mut sum = T::zero();
    for w in models {
        sum += dot(w, x)?;
    }
    let m = T::from_usize(models.len()).expect("model count fits the scalar");
    Ok(sign_label(sum / m))
}

/// Componentwise mean of equally sized weight vectors.
pub fn mean_weights<T: Scalar>(models: &[&[T]]) -> Result<Vec<T>, ModelError> {
    let first = models.first().ok_or(ModelError::Empty("mean_weights"))?;
    let d = first.len();
    let mut acc = vec![T::zero(); d];
    for w in models {
        if w.len() != d {
            return Err(ModelError::DimensionMismatch {
                model: d,
                input: w.len(),
            });
        }
        for (a, &v) in acc.iter_mut().zip(w.iter()) {
            *a += v;
        }
    }
    let m = T::from_usize(models.len()).expect("model count fits the scalar");
    Ok(acc.into_iter().map(|v| v / m).collect())
}
