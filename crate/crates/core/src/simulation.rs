//! Round engine shared by Fed-LT and the baselines.
//!
//! Each round the coordinator folds in the payloads that arrived since the
//! previous round and broadcasts; then the scheduled agents run their local
//! update against that broadcast and send a payload back. Agents and the
//! coordinator only ever exchange link payloads, so the coordinator never
//! sees an agent's local model.

use std::collections::BTreeMap;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::compressors::CompressorSpec;
use crate::error::{check_dim, Error, Result};
use crate::metrics::MetricsTrace;
use crate::orbit::RoundSchedule;
use crate::participation::Participation;
use crate::problem::{optimality_error, LocalObjective, ProblemInstance};
use crate::vector::ModelVector;

pub trait AgentNode: Send {
    /// Local model `x_i`, read by the metric only.
    fn model(&self) -> &ModelVector;

    /// Local update for an active round; returns the uplink payload as it
    /// leaves the agent's channel.
    fn round(
        &mut self,
        broadcast: &ModelVector,
        objective: &LocalObjective<'_>,
        rng: &mut dyn RngCore,
    ) -> Result<ModelVector>;
}

pub trait CoordinatorNode: Send {
    /// Folds in `received` (agent id → payload) and returns the broadcast
    /// as it leaves the downlink channel.
    fn round(&mut self, received: &BTreeMap<usize, ModelVector>, rng: &mut dyn RngCore) -> Result<ModelVector>;
}

/// Last payload received from each agent, for stale-inclusive averaging.
#[derive(Debug, Clone, PartialEq)]
pub struct StaleStore {
    last: Vec<ModelVector>,
}

impl StaleStore {
    pub fn zeros(num_agents: usize, dim: usize) -> Self {
        StaleStore {
            last: vec![ModelVector::zeros(dim); num_agents],
        }
    }

    pub fn update(&mut self, received: &BTreeMap<usize, ModelVector>) -> Result<()> {
        for (&id, payload) in received {
            let slot = self.last.get_mut(id).ok_or(Error::UnknownAgent(id))?;
            check_dim(slot.dim(), payload.dim())?;
            *slot = payload.clone();
        }
        Ok(())
    }

    pub fn last(&self) -> &[ModelVector] {
        &self.last
    }

    pub fn sum(&self) -> ModelVector {
        let dim = self.last.first().map_or(0, |v| v.dim());
        let mut acc = vec![0.0; dim];
        for v in &self.last {
            for (a, x) in acc.iter_mut().zip(v.iter()) {
                *a += x;
            }
        }
        ModelVector::from_vec(acc)
    }

    pub fn mean(&self) -> ModelVector {
        let n = self.last.len() as f64;
        self.sum().map(|v| v / n)
    }
}

/// What crossed the links in one round, for observers.
#[derive(Debug, Clone)]
pub struct RoundEvent<'a> {
    pub round: usize,
    /// `None` when no payload arrived and the coordinator was skipped.
    pub coordinator_input: Option<&'a BTreeMap<usize, ModelVector>>,
    pub broadcast: &'a ModelVector,
    pub schedule: &'a RoundSchedule,
    pub payloads: &'a BTreeMap<usize, ModelVector>,
}

pub struct SimulationSetup<'a> {
    pub problem: &'a ProblemInstance,
    pub x_bar: &'a ModelVector,
    pub uplink: CompressorSpec,
    pub downlink: CompressorSpec,
    pub rounds: usize,
    pub seed: u64,
}

/// Independent RNG stream for link `stream` of a run.
pub fn link_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn models_error(agents: &[impl AgentNode], x_bar: &ModelVector) -> Result<(f64, f64)> {
    let models: Vec<ModelVector> = agents.iter().map(|a| a.model().clone()).collect();
    let err = optimality_error(&models, x_bar)?;
    let norm = models.iter().map(|m| m.norm()).fold(0.0, f64::max);
    Ok((err, norm))
}

pub fn simulate<A: AgentNode, C: CoordinatorNode>(
    setup: &SimulationSetup<'_>,
    agents: &mut [A],
    coordinator: &mut C,
    participation: &mut Participation,
    mut observer: Option<&mut dyn FnMut(RoundEvent<'_>)>,
) -> Result<MetricsTrace> {
    let problem = setup.problem;
    let n_agents = problem.num_agents();
    if agents.len() != n_agents {
        return Err(Error::config(format!(
            "{} agent states for {n_agents} datasets",
            agents.len()
        )));
    }
    check_dim(problem.dim, setup.x_bar.dim())?;
    let up_bytes = setup.uplink.payload_bytes(problem.dim);
    let down_bytes = setup.downlink.payload_bytes(problem.dim);

    let mut coord_rng = link_rng(setup.seed, 0);
    let mut agent_rngs: Vec<ChaCha8Rng> = (0..n_agents)
        .map(|i| link_rng(setup.seed, i as u64 + 1))
        .collect();

    let (e0, norm0) = models_error(agents, setup.x_bar)?;
    let mut trace = MetricsTrace::new(setup.seed, e0, norm0);
    let mut received: BTreeMap<usize, ModelVector> = BTreeMap::new();
    let mut broadcast = ModelVector::zeros(problem.dim);
    let mut active_mask = vec![false; n_agents];

    for k in 0..setup.rounds {
        // Round 0 aggregates the zero initialization; later rounds with
        // nothing new to fold in leave the coordinator untouched.
        let ran_coordinator = k == 0 || !received.is_empty();
        if ran_coordinator {
            broadcast = coordinator.round(&received, &mut coord_rng)?;
        }
        let schedule = participation.next(k)?;
        active_mask.iter_mut().for_each(|a| *a = false);
        for id in schedule.active() {
            *active_mask.get_mut(id).ok_or(Error::UnknownAgent(id))? = true;
        }

        let results: Vec<(usize, Result<ModelVector>)> = agents
            .par_iter_mut()
            .zip(agent_rngs.par_iter_mut())
            .enumerate()
            .filter(|(i, _)| active_mask[*i])
            .map(|(i, (agent, rng))| (i, agent.round(&broadcast, &problem.objective(i), rng)))
            .collect();
        let mut payloads = BTreeMap::new();
        for (i, r) in results {
            payloads.insert(i, r?);
        }

        if let Some(obs) = observer.as_deref_mut() {
            obs(RoundEvent {
                round: k,
                coordinator_input: ran_coordinator.then_some(&received),
                broadcast: &broadcast,
                schedule: &schedule,
                payloads: &payloads,
            });
        }

        let sent = payloads.len() as u64;
        received = payloads;
        let (err, norm) = models_error(agents, setup.x_bar)?;
        trace.push(err, sent * up_bytes, sent * down_bytes, schedule.len(), norm);
        if !err.is_finite() {
            for _ in k + 1..setup.rounds {
                trace.push(f64::INFINITY, 0, 0, 0, f64::INFINITY);
            }
            break;
        }
    }
    Ok(trace)
}
