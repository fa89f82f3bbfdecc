//! Fed-LT agents and coordinator with bi-directional compression and
//! optional error feedback on both links.
//!
//! Active agent `i` in round `k`, given the broadcast `ŷ`:
//!
//! ```text
//! v  = 2ŷ − z_i
//! w ← w − γ (∇f_i(w) + (w − v)/ρ)     N_e times, from w = x_i
//! x_i = w,  z_i ← z_i + 2(x_i − ŷ),  send C_u(z_i [+ c_i])
//! ```
//!
//! The coordinator averages the latest payload of every agent (fresh for
//! senders, stale otherwise) and broadcasts `C_d(mean [+ c])`.

use std::collections::BTreeMap;

use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::compressors::CompressorSpec;
use crate::error::{check_dim, Error, Result};
use crate::error_feedback::EfChannel;
use crate::metrics::MetricsTrace;
use crate::participation::Participation;
use crate::problem::{LocalObjective, ProblemInstance};
use crate::simulation::{simulate, AgentNode, CoordinatorNode, SimulationSetup, StaleStore};
use crate::vector::ModelVector;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FedLtConfig {
    pub rho: f64,
    pub gamma: f64,
    pub epochs: usize,
    pub ef_enabled: bool,
    pub uplink: CompressorSpec,
    pub downlink: CompressorSpec,
}

impl FedLtConfig {
    pub fn uncompressed(gamma: f64, rho: f64, epochs: usize) -> Self {
        FedLtConfig {
            rho,
            gamma,
            epochs,
            ef_enabled: false,
            uplink: CompressorSpec::Identity,
            downlink: CompressorSpec::Identity,
        }
    }

    pub fn violations(&self, dim: usize) -> Vec<String> {
        let mut v = Vec::new();
        if !(self.rho > 0.0 && self.rho.is_finite()) {
            v.push(format!("rho must be > 0, got {}", self.rho));
        }
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            v.push(format!("gamma must be > 0, got {}", self.gamma));
        }
        if self.epochs == 0 {
            v.push("epochs must be >= 1".into());
        }
        v.extend(self.uplink.violations(dim).into_iter().map(|e| format!("uplink: {e}")));
        v.extend(self.downlink.violations(dim).into_iter().map(|e| format!("downlink: {e}")));
        v
    }
}

/// One gradient step on `f_i(w) + ‖w − v‖² / 2ρ`.
pub fn local_solver_step(
    w: &ModelVector,
    v: &ModelVector,
    objective: &LocalObjective<'_>,
    gamma: f64,
    rho: f64,
) -> Result<ModelVector> {
    check_dim(objective.dim(), w.dim())?;
    check_dim(objective.dim(), v.dim())?;
    let mut grad = vec![0.0; w.dim()];
    let mut out = w.clone();
    prox_gd_step(out.as_mut_slice(), v.as_slice(), objective, gamma, rho, &mut grad);
    Ok(out)
}

fn prox_gd_step(w: &mut [f64], v: &[f64], objective: &LocalObjective<'_>, gamma: f64, rho: f64, grad: &mut [f64]) {
    objective.gradient_into(w, grad);
    for ((wj, gj), vj) in w.iter_mut().zip(grad.iter()).zip(v) {
        *wj -= gamma * (gj + (*wj - vj) / rho);
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FedLtAgent {
    pub x: ModelVector,
    pub z: ModelVector,
    pub uplink: EfChannel,
    gamma: f64,
    rho: f64,
    epochs: usize,
}

impl FedLtAgent {
    /// Zero-initialized `x`, `z` and uplink cache.
    pub fn new(dim: usize, cfg: &FedLtConfig) -> Result<Self> {
        Ok(FedLtAgent {
            x: ModelVector::zeros(dim),
            z: ModelVector::zeros(dim),
            uplink: EfChannel::new(cfg.uplink, dim, cfg.ef_enabled)?,
            gamma: cfg.gamma,
            rho: cfg.rho,
            epochs: cfg.epochs,
        })
    }

    pub fn agent_round(
        &mut self,
        y: &ModelVector,
        objective: &LocalObjective<'_>,
        rng: &mut dyn RngCore,
    ) -> Result<ModelVector> {
        let dim = self.x.dim();
        check_dim(dim, y.dim())?;
        check_dim(dim, objective.dim())?;
        let v: Vec<f64> = y.iter().zip(self.z.iter()).map(|(y, z)| 2.0 * y - z).collect();
        let mut w = self.x.clone();
        let mut grad = vec![0.0; dim];
        for _ in 0..self.epochs {
            prox_gd_step(w.as_mut_slice(), &v, objective, self.gamma, self.rho, &mut grad);
        }
        for ((z, x), y) in self.z.as_mut_slice().iter_mut().zip(w.iter()).zip(y.iter()) {
            *z += 2.0 * (x - y);
        }
        self.x = w;
        self.uplink.send(&self.z, rng)
    }
}

impl AgentNode for FedLtAgent {
    fn model(&self) -> &ModelVector {
        &self.x
    }

    fn round(&mut self, broadcast: &ModelVector, objective: &LocalObjective<'_>, rng: &mut dyn RngCore) -> Result<ModelVector> {
        self.agent_round(broadcast, objective, rng)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FedLtCoordinator {
    /// Aggregate before downlink compression, including the cached
    /// downlink error when feedback is on.
    pub y: ModelVector,
    pub downlink: EfChannel,
    pub last_z: StaleStore,
}

impl FedLtCoordinator {
    pub fn new(num_agents: usize, dim: usize, cfg: &FedLtConfig) -> Result<Self> {
        Ok(FedLtCoordinator {
            y: ModelVector::zeros(dim),
            downlink: EfChannel::new(cfg.downlink, dim, cfg.ef_enabled)?,
            last_z: StaleStore::zeros(num_agents, dim),
        })
    }

    pub fn coordinator_round(
        &mut self,
        received: &BTreeMap<usize, ModelVector>,
        rng: &mut dyn RngCore,
    ) -> Result<ModelVector> {
        self.last_z.update(received)?;
        let mean = self.last_z.mean();
        self.y = if self.downlink.enabled() {
            mean.add(self.downlink.cache())?
        } else {
            mean.clone()
        };
        self.downlink.send(&mean, rng)
    }
}

impl CoordinatorNode for FedLtCoordinator {
    fn round(&mut self, received: &BTreeMap<usize, ModelVector>, rng: &mut dyn RngCore) -> Result<ModelVector> {
        self.coordinator_round(received, rng)
    }
}

pub fn build_fedlt(problem: &ProblemInstance, cfg: &FedLtConfig) -> Result<(Vec<FedLtAgent>, FedLtCoordinator)> {
    let v = cfg.violations(problem.dim);
    if !v.is_empty() {
        return Err(Error::ConfigViolations(v));
    }
    let agents = (0..problem.num_agents())
        .map(|_| FedLtAgent::new(problem.dim, cfg))
        .collect::<Result<Vec<_>>>()?;
    let coordinator = FedLtCoordinator::new(problem.num_agents(), problem.dim, cfg)?;
    Ok((agents, coordinator))
}

/// Runs `num_rounds` rounds of Fed-LT and records `e_k` against `x_bar`.
pub fn run_fedlt(
    problem: &ProblemInstance,
    x_bar: &ModelVector,
    cfg: &FedLtConfig,
    participation: &mut Participation,
    num_rounds: usize,
    seed: u64,
) -> Result<MetricsTrace> {
    let (mut agents, mut coordinator) = build_fedlt(problem, cfg)?;
    let setup = SimulationSetup {
        problem,
        x_bar,
        uplink: cfg.uplink,
        downlink: cfg.downlink,
        rounds: num_rounds,
        seed,
    };
    simulate(&setup, &mut agents, &mut coordinator, participation, None)
}
