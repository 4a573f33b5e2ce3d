//! Deterministic discrete-event simulation of a gossip learning network.
//!
//! Time is counted in integer ticks; one gossip period is `delta_ticks`.
//! Cycle `c` (1-based) starts at tick `(c-1) delta`, when every peer's
//! `CycleTick` fires in id order, and ends with a metric snapshot at tick
//! `c delta - 1`. Events at equal ticks are processed in scheduling order.
//!
//! Randomness comes from separate streams of the run seed (network, churn,
//! peer sampling), so a run is a pure function of its configuration.

pub mod churn;
pub mod network;
pub mod queue;

use std::str::FromStr;

use thiserror::Error;

use crate::data::LabeledExample;
use crate::linear_models::{mean_weights, HyperParams, LinearModel, ModelError};
use crate::peer_sampling::{perfect_matching, sample_uniform, OnlineSet, SamplerKind};
use crate::protocol::{create_model, Learner, NodeState, ProtocolVariant, Variant};
use crate::rng::{stream, SimRng, Stream};
use crate::scalar::Scalar;
use crate::theory::{probe_merge_update, GMonitor, RegretProbe, TheoryContext, TheoryError};
use crate::NodeId;

pub use churn::{default_churn, ChurnMode, ChurnModel};
pub use network::NetworkModel;
pub use queue::{EventQueue, SimTime};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("event scheduled at tick {at}, before the current tick {now}")]
    PastEvent { at: SimTime, now: SimTime },
    #[error("invalid simulation setup: {0}")]
    Config(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Theory(#[from] TheoryError),
    #[error("observer failed: {0}")]
    Observer(String),
}

/// What happens to a message that arrives at an offline peer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum OfflineDelivery {
    #[default]
    Drop,
    /// Kept and delivered when the peer comes back online.
    Hold,
}

impl FromStr for OfflineDelivery {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "drop" => Ok(OfflineDelivery::Drop),
            "hold" => Ok(OfflineDelivery::Hold),
            other => Err(format!("expected drop|hold, got `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LineageMode {
    #[default]
    Off,
    /// Parent ids only.
    Ids,
    /// Parent ids and the created weight vectors.
    Weights,
}

#[derive(Debug, Clone)]
pub struct SimConfig<T> {
    pub delta_ticks: u64,
    pub protocol: ProtocolVariant,
    pub hp: HyperParams<T>,
    pub cache_size: usize,
    pub sampler: SamplerKind,
    pub network: NetworkModel,
    pub churn: ChurnModel,
    pub offline_delivery: OfflineDelivery,
    pub lineage: LineageMode,
    /// Regret probes; only valid for merge-then-update with Pegasos.
    pub theory: Option<TheoryContext<T>>,
    pub seed: u64,
}

impl<T: Scalar> SimConfig<T> {
    /// Failure-free setup with uniform sampling and a cache of 10.
    pub fn new(protocol: ProtocolVariant, hp: HyperParams<T>, seed: u64) -> Self {
        SimConfig {
            delta_ticks: 1000,
            protocol,
            hp,
            cache_size: 10,
            sampler: SamplerKind::Uniform,
            network: NetworkModel::default(),
            churn: ChurnModel::none(),
            offline_delivery: OfflineDelivery::Drop,
            lineage: LineageMode::Off,
            theory: None,
            seed,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Counters {
    pub sent: u64,
    pub delivered: u64,
    pub dropped_network: u64,
    pub dropped_offline: u64,
    /// Cycles in which an online peer found nobody to send to.
    pub skipped_no_target: u64,
    pub in_flight: u64,
}

impl Counters {
    pub fn dropped(&self) -> u64 {
        self.dropped_network + self.dropped_offline
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunSummary {
    pub events_processed: u64,
    pub cycles: u64,
    pub counters: Counters,
}

#[derive(Debug, Clone)]
pub enum EventKind<T> {
    CycleTick(NodeId),
    Deliver {
        to: NodeId,
        from: NodeId,
        model: LinearModel<T>,
    },
    ChurnOn(NodeId),
    ChurnOff(NodeId),
    MetricSnapshot(u64),
}

/// One created model. Initial zero models have no parents.
#[derive(Debug, Clone, PartialEq)]
pub struct LineageRecord<T> {
    pub id: u64,
    pub node: NodeId,
    pub received: Option<u64>,
    pub cached: Option<u64>,
    pub age: u64,
    pub created_at: SimTime,
    pub weights: Option<Vec<T>>,
}

/// Hooks called from inside the event loop.
pub trait Observer<T: Scalar> {
    fn on_snapshot(&mut self, _sim: &Simulation<T>, _cycle: u64) -> Result<(), String> {
        Ok(())
    }

    fn on_deliver(&mut self, _to: NodeId, _cycle: u64) {}
}

impl<T: Scalar> Observer<T> for () {}

#[derive(Debug, Clone)]
struct TheoryState<T> {
    ctx: TheoryContext<T>,
    monitor: GMonitor,
}

#[derive(Debug)]
pub struct Simulation<T> {
    cfg: SimConfig<T>,
    nodes: Vec<NodeState<T>>,
    queue: EventQueue<EventKind<T>>,
    online: OnlineSet,
    rng_network: SimRng,
    rng_churn: SimRng,
    rng_sampling: SimRng,
    matching_cycle: u64,
    matching_targets: Vec<Option<NodeId>>,
    held: Vec<Vec<(NodeId, LinearModel<T>)>>,
    counters: Counters,
    events_processed: u64,
    cycles_done: u64,
    lineage: Vec<LineageRecord<T>>,
    theory: Option<TheoryState<T>>,
}

impl<T: Scalar> Simulation<T> {
    /// One peer per example, peer `i` holding `examples[i]`.
    pub fn new(cfg: SimConfig<T>, examples: Vec<LabeledExample<T>>) -> Result<Self, SimError> {
        if examples.is_empty() {
            return Err(SimError::Config("at least one peer is required".into()));
        }
        if cfg.delta_ticks == 0 {
            return Err(SimError::Config("delta_ticks must be >= 1".into()));
        }
        if cfg.cache_size == 0 {
            return Err(SimError::Config("cache_size must be >= 1".into()));
        }
        cfg.network.validate()?;
        cfg.churn.validate()?;
        let dim = cfg.hp.dim;
        if let Some(ex) = examples.iter().find(|e| e.features.min_dim() > dim) {
            return Err(ModelError::DimensionMismatch {
                model: dim,
                input: ex.features.min_dim(),
            }
            .into());
        }
        let theory = match &cfg.theory {
            None => None,
            Some(ctx) => {
                if cfg.protocol != ProtocolVariant::new(Variant::Mu, Learner::Pegasos) {
                    return Err(SimError::Config(
                        "regret probes require protocol mu with learner pegasos".into(),
                    ));
                }
                if ctx.w_star.len() != dim {
                    return Err(TheoryError::DimensionMismatch(ctx.w_star.len(), dim).into());
                }
                let max_x_norm = examples
                    .iter()
                    .map(|e| e.features.norm().as_f64())
                    .fold(0.0, f64::max);
                Some(TheoryState {
                    ctx: ctx.clone(),
                    monitor: GMonitor {
                        lambda: cfg.hp.lambda.as_f64(),
                        max_x_norm,
                        max_model_norm: 0.0,
                        max_subgradient_norm: 0.0,
                    },
                })
            }
        };

        let n = examples.len();
        let mut sim = Simulation {
            rng_network: stream(cfg.seed, Stream::Network),
            rng_churn: stream(cfg.seed, Stream::Churn),
            rng_sampling: stream(cfg.seed, Stream::Sampling),
            nodes: Vec::with_capacity(n),
            queue: EventQueue::new(),
            online: OnlineSet::full(n),
            matching_cycle: 0,
            matching_targets: vec![None; n],
            held: vec![Vec::new(); n],
            counters: Counters::default(),
            events_processed: 0,
            cycles_done: 0,
            lineage: Vec::new(),
            theory,
            cfg,
        };
        for (id, ex) in examples.into_iter().enumerate() {
            let mut node = NodeState::new(id, ex, dim, sim.cfg.cache_size)?;
            let mut init = node.last_model().clone();
            if sim.theory.is_some() {
                init.probe = Some(RegretProbe::default());
            }
            init.lineage = sim.record(id, None, None, &init);
            node.reset_model(init);
            sim.nodes.push(node);
        }
        if sim.cfg.churn.mode == ChurnMode::Lognormal {
            for id in 0..n {
                if sim.cfg.churn.starts_online(&mut sim.rng_churn) {
                    let d = sim.cfg.churn.online_duration(&mut sim.rng_churn);
                    sim.queue.schedule(d, EventKind::ChurnOff(id))?;
                } else {
                    sim.set_online(id, false);
                    let d = sim.cfg.churn.offline_duration(&mut sim.rng_churn);
                    sim.queue.schedule(d, EventKind::ChurnOn(id))?;
                }
            }
        }
        for id in 0..n {
            sim.queue.schedule(0, EventKind::CycleTick(id))?;
        }
        Ok(sim)
    }

    fn record(
        &mut self,
        node: NodeId,
        received: Option<u64>,
        cached: Option<u64>,
        m: &LinearModel<T>,
    ) -> Option<u64> {
        if self.cfg.lineage == LineageMode::Off {
            return None;
        }
        let id = self.lineage.len() as u64;
        self.lineage.push(LineageRecord {
            id,
            node,
            received,
            cached,
            age: m.age,
            created_at: self.queue.now(),
            weights: (self.cfg.lineage == LineageMode::Weights).then(|| m.w.clone()),
        });
        Some(id)
    }

    fn set_online(&mut self, id: NodeId, online: bool) {
        self.nodes[id].online = online;
        if online {
            self.online.insert(id);
        } else {
            self.online.remove(id);
        }
    }

    pub fn config(&self) -> &SimConfig<T> {
        &self.cfg
    }

    pub fn nodes(&self) -> &[NodeState<T>] {
        &self.nodes
    }

    pub fn counters(&self) -> Counters {
        self.counters
    }

    pub fn now(&self) -> SimTime {
        self.queue.now()
    }

    pub fn cycles_done(&self) -> u64 {
        self.cycles_done
    }

    pub fn events_processed(&self) -> u64 {
        self.events_processed
    }

    pub fn online_fraction(&self) -> f64 {
        self.online.len() as f64 / self.nodes.len() as f64
    }

    /// Records indexed by lineage id; empty unless lineage recording is on.
    pub fn lineage(&self) -> &[LineageRecord<T>] {
        &self.lineage
    }

    /// Reference context with the a-posteriori subgradient bound observed so far.
    pub fn theory_context(&self) -> Option<TheoryContext<T>> {
        self.theory.as_ref().map(|th| TheoryContext {
            g: th.monitor.g(),
            ..th.ctx.clone()
        })
    }

    pub fn g_monitor(&self) -> Option<&GMonitor> {
        self.theory.as_ref().map(|th| &th.monitor)
    }

    /// The 1-based cycle that tick `t` belongs to.
    pub fn cycle_of(&self, t: SimTime) -> u64 {
        t / self.cfg.delta_ticks + 1
    }

    /// Advances by `cycles` more cycles; the snapshot of each fires at
    /// `c delta - 1`. Events after the last snapshot stay queued.
    pub fn run<O: Observer<T>>(&mut self, cycles: u64, observer: &mut O) -> Result<RunSummary, SimError> {
        let first = self.cycles_done + 1;
        let last = self.cycles_done + cycles;
        let delta = self.cfg.delta_ticks;
        for c in first..=last {
            self.queue.schedule(c * delta - 1, EventKind::MetricSnapshot(c))?;
        }
        if cycles > 0 {
            let until = last * delta - 1;
            while self.queue.peek_time().is_some_and(|t| t <= until) {
                let (_, event) = self.queue.pop().expect("peeked");
                self.events_processed += 1;
                self.handle(event, observer)?;
            }
        }
        self.cycles_done = last;
        Ok(RunSummary {
            events_processed: self.events_processed,
            cycles: self.cycles_done,
            counters: self.counters,
        })
    }

    fn handle<O: Observer<T>>(&mut self, event: EventKind<T>, observer: &mut O) -> Result<(), SimError> {
        let now = self.queue.now();
        match event {
            EventKind::CycleTick(id) => {
                self.queue.schedule(now + self.cfg.delta_ticks, EventKind::CycleTick(id))?;
                if self.nodes[id].online {
                    self.gossip(id, now)?;
                }
            }
            EventKind::Deliver { to, from, model } => {
                self.counters.in_flight -= 1;
                if self.nodes[to].online {
                    self.receive(to, model, observer)?;
                } else {
                    match self.cfg.offline_delivery {
                        OfflineDelivery::Drop => self.counters.dropped_offline += 1,
                        OfflineDelivery::Hold => {
                            self.counters.in_flight += 1;
                            self.held[to].push((from, model));
                        }
                    }
                }
            }
            EventKind::ChurnOff(id) => {
                let off = self.cfg.churn.offline_duration(&mut self.rng_churn);
                if off == 0 {
                    let on = self.cfg.churn.online_duration(&mut self.rng_churn);
                    self.queue.schedule(now + on, EventKind::ChurnOff(id))?;
                } else {
                    self.set_online(id, false);
                    self.queue.schedule(now + off, EventKind::ChurnOn(id))?;
                }
            }
            EventKind::ChurnOn(id) => {
                self.set_online(id, true);
                let on = self.cfg.churn.online_duration(&mut self.rng_churn);
                self.queue.schedule(now + on, EventKind::ChurnOff(id))?;
                for (_, model) in std::mem::take(&mut self.held[id]) {
                    self.counters.in_flight -= 1;
                    self.receive(id, model, observer)?;
                }
            }
            EventKind::MetricSnapshot(cycle) => {
                observer.on_snapshot(self, cycle).map_err(SimError::Observer)?;
            }
        }
        Ok(())
    }

    fn gossip(&mut self, id: NodeId, now: SimTime) -> Result<(), SimError> {
        let target = match self.cfg.sampler {
            SamplerKind::Uniform => sample_uniform(id, &self.online, &mut self.rng_sampling),
            SamplerKind::Matching => {
                let cycle = self.cycle_of(now);
                if self.matching_cycle != cycle {
                    self.matching_cycle = cycle;
                    self.matching_targets.iter_mut().for_each(|t| *t = None);
                    let members = self.online.sorted();
                    for (a, b) in perfect_matching(&members, &mut self.rng_sampling) {
                        self.matching_targets[a] = Some(b);
                    }
                }
                self.matching_targets[id].take()
            }
        };
        let Some(to) = target else {
            self.counters.skipped_no_target += 1;
            return Ok(());
        };
        self.counters.sent += 1;
        match self.cfg.network.transmit(self.cfg.delta_ticks, &mut self.rng_network) {
            None => self.counters.dropped_network += 1,
            Some(delay) => {
                self.counters.in_flight += 1;
                let model = self.nodes[id].last_model().clone();
                self.queue
                    .schedule(now + delay, EventKind::Deliver { to, from: id, model })?;
            }
        }
        Ok(())
    }

    fn receive<O: Observer<T>>(
        &mut self,
        to: NodeId,
        received: LinearModel<T>,
        observer: &mut O,
    ) -> Result<(), SimError> {
        self.counters.delivered += 1;
        observer.on_deliver(to, self.cycle_of(self.queue.now()));
        let node = &self.nodes[to];
        let cached = node.last_model();
        let probe = match &mut self.theory {
            None => None,
            Some(th) => {
                let p = probe_merge_update(&received, cached, node.example(), &th.ctx)?;
                let w_bar = mean_weights(&[&received.w, &cached.w])?;
                th.monitor.observe_update(&w_bar, node.example(), self.cfg.hp.lambda)?;
                Some(p)
            }
        };
        let mut created = create_model(self.cfg.protocol, &received, cached, node.example(), &self.cfg.hp)?;
        let cached_id = cached.lineage;
        if let Some(th) = &mut self.theory {
            th.monitor.observe_model(&created.w);
            created.probe = probe;
        }
        created.lineage = self.record(to, received.lineage, cached_id, &created);
        self.nodes[to].install(created);
        Ok(())
    }
}
