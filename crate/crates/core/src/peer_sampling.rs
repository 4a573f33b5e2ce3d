//! Destination selection for gossip messages.
//!
//! Two idealized samplers: a uniform draw over the online peers, and a fresh
//! random perfect matching per cycle under which every matched peer sends and
//! receives exactly one message.

use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::NodeId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SamplerKind {
    #[default]
    Uniform,
    Matching,
}

impl FromStr for SamplerKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "uniform" => Ok(SamplerKind::Uniform),
            "matching" => Ok(SamplerKind::Matching),
            other => Err(format!("expected uniform|matching, got `{other}`")),
        }
    }
}

/// Set of online peers with O(1) insert, remove and uniform draw.
#[derive(Debug, Clone)]
pub struct OnlineSet {
    members: Vec<NodeId>,
    position: Vec<Option<usize>>,
}

impl OnlineSet {
    pub fn with_capacity(n_nodes: usize) -> Self {
        OnlineSet {
            members: Vec::with_capacity(n_nodes),
            position: vec![None; n_nodes],
        }
    }

    /// All of `0..n_nodes` online.
    pub fn full(n_nodes: usize) -> Self {
        OnlineSet {
            members: (0..n_nodes).collect(),
            position: (0..n_nodes).map(Some).collect(),
        }
    }

    pub fn insert(&mut self, id: NodeId) {
        if self.position[id].is_none() {
            self.position[id] = Some(self.members.len());
            self.members.push(id);
        }
    }

    pub fn remove(&mut self, id: NodeId) {
        if let Some(pos) = self.position[id].take() {
            self.members.swap_remove(pos);
            if let Some(&moved) = self.members.get(pos) {
                self.position[moved] = Some(pos);
            }
        }
    }

    pub fn contains(&self, id: NodeId) -> bool {
        self.position.get(id).is_some_and(Option::is_some)
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    /// Members in ascending id order.
    pub fn sorted(&self) -> Vec<NodeId> {
        let mut v = self.members.clone();
        v.sort_unstable();
        v
    }
}

/// Uniform draw over `online \ {self_id}`; `None` when no other peer is online.
pub fn sample_uniform<R: Rng + ?Sized>(
    self_id: NodeId,
    online: &OnlineSet,
    rng: &mut R,
) -> Option<NodeId> {
    match online.position.get(self_id).copied().flatten() {
        Some(own) => {
            let others = online.len() - 1;
            if others == 0 {
                return None;
            }
            let mut k = rng.random_range(0..others);
            if k >= own {
                k += 1;
            }
            Some(online.members[k])
        }
        None => {
            if online.is_empty() {
                return None;
            }
            Some(online.members[rng.random_range(0..online.len())])
        }
    }
}

/// Random perfect matching: shuffles `online` and pairs adjacent entries.
/// Each pair `(a, b)` yields the directed sends `a -> b` and `b -> a`. With an
/// odd count the last element of the shuffle stays idle.
pub fn perfect_matching<R: Rng + ?Sized>(online: &[NodeId], rng: &mut R) -> Vec<(NodeId, NodeId)> {
    if online.len() < 2 {
        return Vec::new();
    }
    let mut order = online.to_vec();
    order.shuffle(rng);
    order
        .chunks_exact(2)
        .flat_map(|p| [(p[0], p[1]), (p[1], p[0])])
        .collect()
}
