//! Baseline federated methods behind the same agent/coordinator interface
//! as Fed-LT, so scheduling, compression and error feedback wrap them in
//! exactly the same way.
//!
//! * FedAvg: `N_e` gradient steps from the broadcast model; send the model.
//! * FedProx: as FedAvg on `f_i(w) + μ/2 ‖w − ŷ‖²`. The proximal term is
//!   applied implicitly, `w ← (w − γ∇f_i(w) + γμ ŷ) / (1 + γμ)`, so the
//!   step stays stable for any `μ`.
//! * LED (local exact diffusion): local steps on `f_i(w) + c_iᵀw` from the
//!   broadcast, with correction `c_i ← c_i + β/(γ N_e) (φ_i − ŷ)` where
//!   `φ_i` is the model the agent sent last time.
//! * 5GCS: primal–dual method. Agents approximately solve
//!   `min f_i(w) + τ/2 ‖w − ŷ − h_i/τ‖²` from the broadcast, update the dual
//!   `h_i ← h_i + τ(ŷ − w)` and send `h_i`. The server keeps `x` and
//!   broadcasts `x̂ = x − γ_s Σ h_i`, with
//!   `x ← x̂ − γ_s (N/|S|) (Σ h_new − Σ h_old)`.

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

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BaselineKind {
    #[serde(rename = "fedavg")]
    FedAvg,
    #[serde(rename = "fedprox")]
    FedProx,
    #[serde(rename = "led")]
    Led,
    #[serde(rename = "5gcs", alias = "fivegcs")]
    FiveGcs,
}

impl BaselineKind {
    pub fn name(&self) -> &'static str {
        match self {
            BaselineKind::FedAvg => "fedavg",
            BaselineKind::FedProx => "fedprox",
            BaselineKind::Led => "led",
            BaselineKind::FiveGcs => "5gcs",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "fedavg" => Ok(BaselineKind::FedAvg),
            "fedprox" => Ok(BaselineKind::FedProx),
            "led" => Ok(BaselineKind::Led),
            "5gcs" | "fivegcs" => Ok(BaselineKind::FiveGcs),
            other => Err(Error::config(format!("unknown baseline algorithm {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BaselineConfig {
    pub kind: BaselineKind,
    pub epochs: usize,
    /// Local step size `γ`.
    pub step: f64,
    /// FedProx weight `μ`.
    pub prox_mu: f64,
    /// LED correction gain `β`, or the 5GCS dual step `τ`. When unset, LED
    /// uses `0.5` and 5GCS uses `1 / (N γ_s)`.
    pub dual_step: Option<f64>,
    /// 5GCS server step `γ_s`.
    pub server_step: f64,
    pub ef_enabled: bool,
    pub uplink: CompressorSpec,
    pub downlink: CompressorSpec,
}

impl BaselineConfig {
    pub fn new(kind: BaselineKind, step: f64, epochs: usize) -> Self {
        BaselineConfig {
            kind,
            epochs,
            step,
            prox_mu: 0.0,
            dual_step: None,
            server_step: 0.01,
            ef_enabled: false,
            uplink: CompressorSpec::Identity,
            downlink: CompressorSpec::Identity,
        }
    }

    pub fn violations(&self, dim: usize) -> Vec<String> {
        let mut v = Vec::new();
        if !(self.step > 0.0 && self.step.is_finite()) {
            v.push(format!("step must be > 0, got {}", self.step));
        }
        if self.epochs == 0 {
            v.push("epochs must be >= 1".into());
        }
        if !(self.prox_mu >= 0.0) {
            v.push(format!("prox_mu must be >= 0, got {}", self.prox_mu));
        }
        if let Some(d) = self.dual_step {
            if !(d > 0.0 && d.is_finite()) {
                v.push(format!("dual_step must be > 0, got {d}"));
            }
        }
        if self.kind == BaselineKind::FiveGcs && !(self.server_step > 0.0 && self.server_step.is_finite()) {
            v.push(format!("server_step must be > 0, got {}", self.server_step));
        }
        v.extend(self.uplink.violations(dim).into_iter().map(|e| format!("uplink: {e}")));
        v.extend(self.downlink.violations(dim).into_iter().map(|e| format!("downlink: {e}")));
        v
    }

    fn dual_step_for(&self, num_agents: usize) -> f64 {
        match (self.kind, self.dual_step) {
            (_, Some(d)) => d,
            (BaselineKind::FiveGcs, None) => 1.0 / (num_agents as f64 * self.server_step),
            _ => 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BaselineAgent {
    kind: BaselineKind,
    /// Local model after the last active round.
    pub x: ModelVector,
    /// LED correction `c_i` or 5GCS dual `h_i`; unused otherwise.
    pub aux: ModelVector,
    pub uplink: EfChannel,
    has_sent: bool,
    epochs: usize,
    step: f64,
    prox_mu: f64,
    dual_step: f64,
}

impl BaselineAgent {
    pub fn new(dim: usize, num_agents: usize, cfg: &BaselineConfig) -> Result<Self> {
        Ok(BaselineAgent {
            kind: cfg.kind,
            x: ModelVector::zeros(dim),
            aux: ModelVector::zeros(dim),
            uplink: EfChannel::new(cfg.uplink, dim, cfg.ef_enabled)?,
            has_sent: false,
            epochs: cfg.epochs,
            step: cfg.step,
            prox_mu: cfg.prox_mu,
            dual_step: cfg.dual_step_for(num_agents),
        })
    }

    pub fn kind(&self) -> BaselineKind {
        self.kind
    }

    pub fn baseline_agent_round(
        &mut self,
        broadcast: &ModelVector,
        objective: &LocalObjective<'_>,
        rng: &mut dyn RngCore,
    ) -> Result<ModelVector> {
        let dim = self.x.dim();
        check_dim(dim, broadcast.dim())?;
        check_dim(dim, objective.dim())?;
        let b = broadcast.as_slice();
        let g = self.step;
        let mut w = broadcast.clone();
        let mut grad = vec![0.0; dim];

        match self.kind {
            BaselineKind::FedAvg => {
                for _ in 0..self.epochs {
                    objective.gradient_into(w.as_slice(), &mut grad);
                    for (wj, gj) in w.as_mut_slice().iter_mut().zip(&grad) {
                        *wj -= g * gj;
                    }
                }
            }
            BaselineKind::FedProx => {
                let gm = g * self.prox_mu;
                for _ in 0..self.epochs {
                    objective.gradient_into(w.as_slice(), &mut grad);
                    for ((wj, gj), bj) in w.as_mut_slice().iter_mut().zip(&grad).zip(b) {
                        *wj = (*wj - g * gj + gm * bj) / (1.0 + gm);
                    }
                }
            }
            BaselineKind::Led => {
                if self.has_sent {
                    let gain = self.dual_step / (g * self.epochs as f64);
                    for ((c, x), bj) in self.aux.as_mut_slice().iter_mut().zip(self.x.iter()).zip(b) {
                        *c += gain * (x - bj);
                    }
                }
                for _ in 0..self.epochs {
                    objective.gradient_into(w.as_slice(), &mut grad);
                    for ((wj, gj), c) in w.as_mut_slice().iter_mut().zip(&grad).zip(self.aux.iter()) {
                        *wj -= g * (gj + c);
                    }
                }
            }
            BaselineKind::FiveGcs => {
                let tau = self.dual_step;
                for _ in 0..self.epochs {
                    objective.gradient_into(w.as_slice(), &mut grad);
                    for (((wj, gj), bj), h) in w
                        .as_mut_slice()
                        .iter_mut()
                        .zip(&grad)
                        .zip(b)
                        .zip(self.aux.iter())
                    {
                        *wj -= g * (gj + tau * (*wj - bj) - h);
                    }
                }
                for ((h, bj), wj) in self.aux.as_mut_slice().iter_mut().zip(b).zip(w.iter()) {
                    *h += tau * (bj - wj);
                }
            }
        }

        self.x = w;
        self.has_sent = true;
        let message = match self.kind {
            BaselineKind::FiveGcs => &self.aux,
            _ => &self.x,
        };
        self.uplink.send(message, rng)
    }
}

impl AgentNode for BaselineAgent {
    fn model(&self) -> &ModelVector {
        &self.x
    }

    fn round(&mut self, broadcast: &ModelVector, objective: &LocalObjective<'_>, rng: &mut dyn RngCore) -> Result<ModelVector> {
        self.baseline_agent_round(broadcast, objective, rng)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BaselineCoordinator {
    kind: BaselineKind,
    pub downlink: EfChannel,
    pub store: StaleStore,
    last_broadcast: Option<ModelVector>,
    // 5GCS server state.
    primal: ModelVector,
    dual_sum: ModelVector,
    server_step: f64,
}

impl BaselineCoordinator {
    pub fn new(num_agents: usize, dim: usize, cfg: &BaselineConfig) -> Result<Self> {
        Ok(BaselineCoordinator {
            kind: cfg.kind,
            downlink: EfChannel::new(cfg.downlink, dim, cfg.ef_enabled)?,
            store: StaleStore::zeros(num_agents, dim),
            last_broadcast: None,
            primal: ModelVector::zeros(dim),
            dual_sum: ModelVector::zeros(dim),
            server_step: cfg.server_step,
        })
    }

    /// Message the coordinator would send before downlink compression.
    fn next_message(&mut self, fresh: usize) -> Result<ModelVector> {
        match self.kind {
            BaselineKind::FiveGcs => {
                let n = self.store.last().len() as f64;
                let new_sum = self.store.sum();
                if self.last_broadcast.is_some() {
                    // x ← x̂ − γ_s (N/|S|)(v_new − v_old), with x̂ = x − γ_s v_old.
                    let scale = self.server_step * n / fresh as f64;
                    let mut x = self.primal.clone();
                    x.axpy(-self.server_step, &self.dual_sum)?;
                    x.axpy(-scale, &new_sum.sub(&self.dual_sum)?)?;
                    self.primal = x;
                }
                self.dual_sum = new_sum;
                let mut x_hat = self.primal.clone();
                x_hat.axpy(-self.server_step, &self.dual_sum)?;
                Ok(x_hat)
            }
            _ => Ok(self.store.mean()),
        }
    }

    pub fn baseline_coordinator_round(
        &mut self,
        received: &BTreeMap<usize, ModelVector>,
        rng: &mut dyn RngCore,
    ) -> Result<ModelVector> {
        self.store.update(received)?;
        if received.is_empty() {
            if let Some(prev) = &self.last_broadcast {
                return Ok(prev.clone());
            }
        }
        let message = self.next_message(received.len())?;
        let out = self.downlink.send(&message, rng)?;
        self.last_broadcast = Some(out.clone());
        Ok(out)
    }
}

impl CoordinatorNode for BaselineCoordinator {
    fn round(&mut self, received: &BTreeMap<usize, ModelVector>, rng: &mut dyn RngCore) -> Result<ModelVector> {
        self.baseline_coordinator_round(received, rng)
    }
}

pub fn build_baseline(
    problem: &ProblemInstance,
    cfg: &BaselineConfig,
) -> Result<(Vec<BaselineAgent>, BaselineCoordinator)> {
    let v = cfg.violations(problem.dim);
    if !v.is_empty() {
        return Err(Error::ConfigViolations(v));
    }
    let n = problem.num_agents();
    let agents = (0..n)
        .map(|_| BaselineAgent::new(problem.dim, n, cfg))
        .collect::<Result<Vec<_>>>()?;
    Ok((agents, BaselineCoordinator::new(n, problem.dim, cfg)?))
}

pub fn run_baseline(
    problem: &ProblemInstance,
    x_bar: &ModelVector,
    cfg: &BaselineConfig,
    participation: &mut Participation,
    num_rounds: usize,
    seed: u64,
) -> Result<MetricsTrace> {
    let (mut agents, mut coordinator) = build_baseline(problem, cfg)?;
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
