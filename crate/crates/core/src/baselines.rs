//! Non-gossip reference learners: sequential Pegasos over the pooled training
//! set and the weighted-bagging votes WB1 / WB2 over independently trained
//! Pegasos models.

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;

use crate::data::{Dataset, Label, SparseVector};
use crate::linear_models::{pegasos_update, LinearModel, ModelError};
use crate::rng::{indexed_stream, SimRng, Stream};
use crate::scalar::Scalar;

fn model_stream(seed: u64, index: usize) -> SimRng {
    indexed_stream(seed, Stream::Baseline as u64, index as u64 + 1)
}

/// Pegasos from the zero model over `iterations` uniform draws (with
/// replacement) from `train`.
pub fn sequential_pegasos<T: Scalar>(
    train: &Dataset<T>,
    iterations: u64,
    lambda: T,
    seed: u64,
) -> Result<LinearModel<T>, ModelError> {
    if train.is_empty() {
        return Err(ModelError::Empty("sequential_pegasos"));
    }
    let mut rng = model_stream(seed, 0);
    let mut m = LinearModel::zeros(train.dim)?;
    for _ in 0..iterations {
        let ex = &train.examples[rng.random_range(0..train.len())];
        m = pegasos_update(&m, ex, lambda)?;
    }
    Ok(m)
}

/// `N` Pegasos models, each fed its own stream of uniform draws. Model `0`
/// sees the same draws as [`sequential_pegasos`] with the same seed.
#[derive(Debug, Clone)]
pub struct ModelPopulation<T> {
    pub models: Vec<LinearModel<T>>,
    /// Draws consumed by every model so far.
    pub samples_per_model: u64,
    rngs: Vec<SimRng>,
    order: Vec<usize>,
}

impl<T: Scalar> ModelPopulation<T> {
    pub fn new(n: usize, dim: usize, seed: u64) -> Result<Self, ModelError> {
        if n == 0 {
            return Err(ModelError::Empty("model population"));
        }
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut indexed_stream(seed, Stream::Baseline as u64, 0));
        Ok(ModelPopulation {
            models: vec![LinearModel::zeros(dim)?; n],
            samples_per_model: 0,
            rngs: (0..n).map(|i| model_stream(seed, i)).collect(),
            order,
        })
    }

    pub fn len(&self) -> usize {
        self.models.len()
    }

    pub fn is_empty(&self) -> bool {
        self.models.is_empty()
    }

    /// Fixed random order used to pick the WB2 subset.
    pub fn order(&self) -> &[usize] {
        &self.order
    }

    /// One more Pegasos step for every model.
    pub fn advance(&mut self, train: &Dataset<T>, lambda: T) -> Result<(), ModelError> {
        if train.is_empty() {
            return Err(ModelError::Empty("model population training set"));
        }
        self.models
            .par_iter_mut()
            .zip(self.rngs.par_iter_mut())
            .try_for_each(|(m, rng)| {
                let ex = &train.examples[rng.random_range(0..train.len())];
                *m = pegasos_update(m, ex, lambda)?;
                Ok::<_, ModelError>(())
            })?;
        self.samples_per_model += 1;
        Ok(())
    }

    fn vote<'a>(&'a self, members: impl Iterator<Item = &'a LinearModel<T>>, x: &SparseVector<T>) -> Result<Label, ModelError> {
        let mut total = T::zero();
        for m in members {
            total += m.dot(x)?;
        }
        Ok(Label::from_sign(total >= T::zero()))
    }
}

/// `sign(sum_i <x, w_i>)` over the whole population.
pub fn wb1_predict<T: Scalar>(pop: &ModelPopulation<T>, x: &SparseVector<T>) -> Result<Label, ModelError> {
    if pop.is_empty() {
        return Err(ModelError::Empty("wb1_predict"));
    }
    pop.vote(pop.models.iter(), x)
}

/// Number of models WB2 consults at `cycle`: `min(2^cycle, N)`.
pub fn wb2_size(n: usize, cycle: u64) -> usize {
    if cycle >= usize::BITS as u64 - 1 {
        n
    } else {
        n.min(1usize << cycle)
    }
}

/// Vote of the first `min(2^cycle, N)` models in the population's fixed order.
pub fn wb2_predict<T: Scalar>(
    pop: &ModelPopulation<T>,
    x: &SparseVector<T>,
    cycle: u64,
) -> Result<Label, ModelError> {
    if pop.is_empty() {
        return Err(ModelError::Empty("wb2_predict"));
    }
    let k = wb2_size(pop.len(), cycle);
    pop.vote(pop.order[..k].iter().map(|&i| &pop.models[i]), x)
}
