//! Per-peer gossip learning state and the three model-creation variants.
//!
//! A peer periodically sends a copy of its latest model to one sampled peer.
//! On arrival it creates a new model from the received one, its own latest
//! model and its single local example:
//!
//! - `RW`: update the received model.
//! - `MU`: merge the two models, then update the average.
//! - `UM`: update both models with the same example, then merge.

use std::collections::VecDeque;
use std::fmt;
use std::str::FromStr;

use crate::data::{Label, LabeledExample, SparseVector};
use crate::linear_models::{
    adaline_update, merge, pegasos_update, predict, voted_predict, HyperParams, LinearModel,
    ModelError,
};
use crate::scalar::Scalar;
use crate::NodeId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Variant {
    Rw,
    #[default]
    Mu,
    Um,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Learner {
    #[default]
    Pegasos,
    Adaline,
}

impl FromStr for Variant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "rw" => Ok(Variant::Rw),
            "mu" => Ok(Variant::Mu),
            "um" => Ok(Variant::Um),
            other => Err(format!("expected rw|mu|um, got `{other}`")),
        }
    }
}

impl FromStr for Learner {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "pegasos" => Ok(Learner::Pegasos),
            "adaline" => Ok(Learner::Adaline),
            other => Err(format!("expected pegasos|adaline, got `{other}`")),
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Variant::Rw => "rw",
            Variant::Mu => "mu",
            Variant::Um => "um",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ProtocolVariant {
    pub variant: Variant,
    pub learner: Learner,
}

impl ProtocolVariant {
    pub fn new(variant: Variant, learner: Learner) -> Self {
        ProtocolVariant { variant, learner }
    }

    pub fn update<T: Scalar>(
        &self,
        m: &LinearModel<T>,
        example: &LabeledExample<T>,
        hp: &HyperParams<T>,
    ) -> Result<LinearModel<T>, ModelError> {
        match self.learner {
            Learner::Pegasos => pegasos_update(m, example, hp.lambda),
            Learner::Adaline => adaline_update(m, example, hp.eta_adaline),
        }
    }
}

/// Creates the model a peer keeps after receiving `received`.
pub fn create_model<T: Scalar>(
    pv: ProtocolVariant,
    received: &LinearModel<T>,
    cached_latest: &LinearModel<T>,
    example: &LabeledExample<T>,
    hp: &HyperParams<T>,
) -> Result<LinearModel<T>, ModelError> {
    match pv.variant {
        Variant::Rw => pv.update(received, example, hp),
        Variant::Mu => pv.update(&merge(received, cached_latest)?, example, hp),
        Variant::Um => merge(
            &pv.update(received, example, hp)?,
            &pv.update(cached_latest, example, hp)?,
        ),
    }
}

/// Bounded model cache; the oldest arrival is evicted first.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelCache<T> {
    models: VecDeque<LinearModel<T>>,
    capacity: usize,
}

impl<T: Scalar> ModelCache<T> {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity >= 1, "model cache needs room for one model");
        ModelCache {
            models: VecDeque::with_capacity(capacity),
            capacity,
        }
    }

    pub fn push(&mut self, m: LinearModel<T>) {
        if self.models.len() == self.capacity {
            self.models.pop_front();
        }
        self.models.push_back(m);
    }

    pub fn freshest(&self) -> Option<&LinearModel<T>> {
        self.models.back()
    }

    pub fn len(&self) -> usize {
        self.models.len()
    }

    pub fn is_empty(&self) -> bool {
        self.models.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Oldest first.
    pub fn iter(&self) -> impl Iterator<Item = &LinearModel<T>> {
        self.models.iter()
    }
}

/// One peer. The example never leaves the peer; messages carry models only.
#[derive(Debug, Clone)]
pub struct NodeState<T> {
    pub id: NodeId,
    example: LabeledExample<T>,
    cache: ModelCache<T>,
    last_model: LinearModel<T>,
    pub online: bool,
}

impl<T: Scalar> NodeState<T> {
    /// Fresh peer holding the zero model in both `last_model` and the cache.
    pub fn new(
        id: NodeId,
        example: LabeledExample<T>,
        dim: usize,
        cache_size: usize,
    ) -> Result<Self, ModelError> {
        let zero = LinearModel::zeros(dim)?;
        let mut cache = ModelCache::new(cache_size);
        cache.push(zero.clone());
        Ok(NodeState {
            id,
            example,
            cache,
            last_model: zero,
            online: true,
        })
    }

    pub fn example(&self) -> &LabeledExample<T> {
        &self.example
    }

    pub fn last_model(&self) -> &LinearModel<T> {
        &self.last_model
    }

    pub fn cache(&self) -> &ModelCache<T> {
        &self.cache
    }

    /// Replaces the initial model; used to seed instrumentation metadata.
    pub(crate) fn reset_model(&mut self, m: LinearModel<T>) {
        self.cache = ModelCache::new(self.cache.capacity());
        self.cache.push(m.clone());
        self.last_model = m;
    }

    /// Stores an already created model as the latest one.
    pub fn install(&mut self, m: LinearModel<T>) {
        self.cache.push(m.clone());
        self.last_model = m;
    }

    /// Creates and stores the model derived from `received`.
    pub fn on_receive(
        &mut self,
        received: &LinearModel<T>,
        pv: ProtocolVariant,
        hp: &HyperParams<T>,
    ) -> Result<&LinearModel<T>, ModelError> {
        let created = create_model(pv, received, &self.last_model, &self.example, hp)?;
        self.install(created);
        Ok(&self.last_model)
    }

    pub fn local_prediction(&self, x: &SparseVector<T>, voted: bool) -> Result<Label, ModelError> {
        if voted {
            voted_predict(self.cache.iter(), x)
        } else {
            let m = self.cache.freshest().ok_or(ModelError::Empty("local_prediction"))?;
            predict(m, x)
        }
    }
}

/// What an active peer does at the start of a cycle.
#[derive(Debug, Clone, PartialEq)]
pub enum CycleAction<T> {
    Send { to: NodeId, model: LinearModel<T> },
    Offline,
    NoTarget,
}

/// Picks a target with `select` and returns a copy of the latest model for it.
pub fn on_cycle<T: Scalar>(
    node: &NodeState<T>,
    select: impl FnOnce(NodeId) -> Option<NodeId>,
) -> CycleAction<T> {
    if !node.online {
        return CycleAction::Offline;
    }
    match select(node.id) {
        Some(to) => CycleAction::Send {
            to,
            model: node.last_model.clone(),
        },
        None => CycleAction::NoTarget,
    }
}
