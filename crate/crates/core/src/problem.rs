//! Synthetic regularized logistic-regression problem, its local losses and
//! gradients, and a centralized reference solver for the optimum.
//!
//! Each agent `i` holds `m_i` samples `(a, b)` and the loss
//!
//! ```text
//! f_i(x) = (1/m_i) Σ_h log(1 + exp(−b_h a_hᵀx)) + (ε / 2N) ‖x‖²
//! ```
//!
//! so that `Σ_i f_i` carries the full regularizer `ε/2 ‖x‖²`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::vector::{dot, ModelVector};

/// Standard deviation of the label noise added to the hidden hyperplane score.
pub const LABEL_NOISE_STD: f64 = 0.1;

/// Default gradient-norm tolerance of the reference solver.
pub const REFERENCE_TOL: f64 = 1e-12;

const REFERENCE_MAX_ITERS: usize = 200;

#[derive(Debug, Clone, PartialEq)]
pub struct DataSample {
    pub features: Vec<f64>,
    /// `+1.0` or `-1.0`.
    pub label: f64,
}

/// One agent's samples, stored as a row-major feature matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalDataset {
    agent_id: usize,
    dim: usize,
    features: Vec<f64>,
    labels: Vec<f64>,
}

impl LocalDataset {
    pub fn new(agent_id: usize, samples: Vec<DataSample>) -> Result<Self> {
        let first = samples
            .first()
            .ok_or_else(|| Error::config("a local dataset needs at least one sample"))?;
        let dim = first.features.len();
        if dim == 0 {
            return Err(Error::config("samples must have at least one feature"));
        }
        let mut features = Vec::with_capacity(dim * samples.len());
        let mut labels = Vec::with_capacity(samples.len());
        for s in &samples {
            check_dim(dim, s.features.len())?;
            if s.label != 1.0 && s.label != -1.0 {
                return Err(Error::config(format!("label must be ±1, got {}", s.label)));
            }
            features.extend_from_slice(&s.features);
            labels.push(s.label);
        }
        Ok(LocalDataset {
            agent_id,
            dim,
            features,
            labels,
        })
    }

    pub fn agent_id(&self) -> usize {
        self.agent_id
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[f64] {
        &self.labels
    }

    pub fn features(&self, h: usize) -> &[f64] {
        &self.features[h * self.dim..(h + 1) * self.dim]
    }

    pub fn samples(&self) -> impl Iterator<Item = DataSample> + '_ {
        (0..self.len()).map(|h| DataSample {
            features: self.features(h).to_vec(),
            label: self.labels[h],
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProblemInstance {
    pub datasets: Vec<LocalDataset>,
    pub dim: usize,
    /// Regularization weight `ε`.
    pub reg: f64,
    pub seed: u64,
}

/// Size and regularization parameters of the synthetic problem.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProblemConfig {
    pub num_agents: usize,
    pub samples_per_agent: usize,
    pub dim: usize,
    pub reg: f64,
}

impl Default for ProblemConfig {
    fn default() -> Self {
        ProblemConfig {
            num_agents: 100,
            samples_per_agent: 500,
            dim: 100,
            reg: 50.0,
        }
    }
}

impl ProblemConfig {
    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        if self.num_agents == 0 {
            v.push("problem.num_agents must be >= 1".into());
        }
        if self.samples_per_agent == 0 {
            v.push("problem.samples_per_agent must be >= 1".into());
        }
        if self.dim == 0 {
            v.push("problem.dim must be >= 1".into());
        }
        if !(self.reg >= 0.0 && self.reg.is_finite()) {
            v.push(format!("problem.reg must be finite and >= 0, got {}", self.reg));
        }
        v
    }

    pub fn generate(&self, seed: u64) -> Result<ProblemInstance> {
        let mut p = generate_synthetic(seed, self.num_agents, self.samples_per_agent, self.dim)?;
        p.reg = self.reg;
        Ok(p)
    }
}

/// Draws a hidden hyperplane `x* ~ N(0, I)` and labels standard-normal
/// features by `sign(aᵀx* + η)`, `η ~ N(0, 0.1²)`. The regularization weight
/// defaults to `ε = 50`.
pub fn generate_synthetic(
    seed: u64,
    num_agents: usize,
    samples_per_agent: usize,
    dim: usize,
) -> Result<ProblemInstance> {
    if num_agents == 0 || samples_per_agent == 0 || dim == 0 {
        return Err(Error::config(format!(
            "synthetic problem sizes must be >= 1 (agents={num_agents}, samples={samples_per_agent}, dim={dim})"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, LABEL_NOISE_STD).expect("valid std");
    let hidden: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();

    let datasets = (0..num_agents)
        .map(|agent_id| {
            let samples = (0..samples_per_agent)
                .map(|_| {
                    let features: Vec<f64> =
                        (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
                    let score = dot(&features, &hidden) + noise.sample(&mut rng);
                    let label = if score >= 0.0 { 1.0 } else { -1.0 };
                    DataSample { features, label }
                })
                .collect();
            LocalDataset::new(agent_id, samples)
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(ProblemInstance {
        datasets,
        dim,
        reg: 50.0,
        seed,
    })
}

impl ProblemInstance {
    pub fn num_agents(&self) -> usize {
        self.datasets.len()
    }

    pub fn objective(&self, agent: usize) -> LocalObjective<'_> {
        LocalObjective {
            data: &self.datasets[agent],
            reg: self.reg,
            num_agents: self.num_agents(),
        }
    }

    pub fn objectives(&self) -> impl Iterator<Item = LocalObjective<'_>> + '_ {
        (0..self.num_agents()).map(move |i| self.objective(i))
    }

    /// `Σ_i f_i(x)`.
    pub fn total_loss(&self, x: &ModelVector) -> Result<f64> {
        self.objectives().map(|o| o.loss(x)).sum()
    }

    /// `Σ_i ∇f_i(x)`.
    pub fn total_gradient(&self, x: &ModelVector) -> Result<ModelVector> {
        check_dim(self.dim, x.dim())?;
        let mut total = vec![0.0; self.dim];
        let mut buf = vec![0.0; self.dim];
        for o in self.objectives() {
            o.gradient_into(x.as_slice(), &mut buf);
            for (t, g) in total.iter_mut().zip(&buf) {
                *t += g;
            }
        }
        Ok(ModelVector::from_vec(total))
    }
}

/// `log(1 + e^t)` without overflow.
fn softplus(t: f64) -> f64 {
    if t > 0.0 {
        t + (-t).exp().ln_1p()
    } else {
        t.exp().ln_1p()
    }
}

fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// The local loss `f_i` of one agent, borrowed from the problem instance.
#[derive(Debug, Clone, Copy)]
pub struct LocalObjective<'a> {
    pub data: &'a LocalDataset,
    pub reg: f64,
    pub num_agents: usize,
}

impl<'a> LocalObjective<'a> {
    pub fn new(data: &'a LocalDataset, reg: f64, num_agents: usize) -> Self {
        LocalObjective {
            data,
            reg,
            num_agents,
        }
    }

    pub fn dim(&self) -> usize {
        self.data.dim()
    }

    fn reg_weight(&self) -> f64 {
        self.reg / self.num_agents as f64
    }

    pub fn loss(&self, x: &ModelVector) -> Result<f64> {
        local_loss(self.data, x, self.reg, self.num_agents)
    }

    pub fn gradient(&self, x: &ModelVector) -> Result<ModelVector> {
        local_gradient(self.data, x, self.reg, self.num_agents)
    }

    /// Writes `∇f_i(x)` into `out`. Lengths must equal the problem dimension.
    pub fn gradient_into(&self, x: &[f64], out: &mut [f64]) {
        let d = self.data;
        let m = d.len() as f64;
        let w = self.reg_weight();
        let n = d.dim;
        // σ(−t) = 1/(1 + eᵗ); overflow to ∞ gives the correct limit 0.
        // Margins first, then the exps; fusing the two passes is slower.
        let mut coefs: Vec<f64> = d.features.chunks_exact(n).map(|a| dot(a, x)).collect();
        for (c, &b) in coefs.iter_mut().zip(&d.labels) {
            *c = -b / (1.0 + (b * *c).exp()) / m;
        }
        for (o, xi) in out.iter_mut().zip(x) {
            *o = w * xi;
        }
        // Four rows per pass over `out`.
        let rows = d.features.chunks_exact(4 * n);
        let cs = coefs.chunks_exact(4);
        let (rest, rest_c) = (rows.remainder(), cs.remainder());
        for (blk, c) in rows.zip(cs) {
            let (a0, r) = blk.split_at(n);
            let (a1, r) = r.split_at(n);
            let (a2, a3) = r.split_at(n);
            for j in 0..n {
                out[j] += (c[0] * a0[j] + c[1] * a1[j]) + (c[2] * a2[j] + c[3] * a3[j]);
            }
        }
        for (a, &c) in rest.chunks_exact(n).zip(rest_c) {
            for (o, aj) in out.iter_mut().zip(a) {
                *o += c * aj;
            }
        }
    }

    /// Adds `∇²f_i(x)` to the row-major `n × n` buffer `out`.
    pub fn hessian_add_into(&self, x: &[f64], out: &mut [f64]) {
        let d = self.data;
        let n = d.dim();
        let m = d.len() as f64;
        let w = self.reg_weight();
        for j in 0..n {
            out[j * n + j] += w;
        }
        for h in 0..d.len() {
            let a = d.features(h);
            let s = sigmoid(d.labels[h] * dot(a, x));
            let coef = s * (1.0 - s) / m;
            for (j, aj) in a.iter().enumerate() {
                let c = coef * aj;
                for (o, ak) in out[j * n..(j + 1) * n].iter_mut().zip(a) {
                    *o += c * ak;
                }
            }
        }
    }
}

pub fn local_loss(data: &LocalDataset, x: &ModelVector, reg: f64, num_agents: usize) -> Result<f64> {
    check_dim(data.dim(), x.dim())?;
    let xs = x.as_slice();
    let data_term: f64 = (0..data.len())
        .map(|h| softplus(-data.labels[h] * dot(data.features(h), xs)))
        .sum::<f64>()
        / data.len() as f64;
    Ok(data_term + reg / (2.0 * num_agents as f64) * x.norm_sq())
}

pub fn local_gradient(
    data: &LocalDataset,
    x: &ModelVector,
    reg: f64,
    num_agents: usize,
) -> Result<ModelVector> {
    check_dim(data.dim(), x.dim())?;
    let mut out = vec![0.0; x.dim()];
    LocalObjective::new(data, reg, num_agents).gradient_into(x.as_slice(), &mut out);
    Ok(ModelVector::from_vec(out))
}

/// Minimizer of `Σ_i f_i`, from the zero vector.
pub fn solve_reference(problem: &ProblemInstance, tol: f64) -> Result<ModelVector> {
    solve_reference_from(problem, tol, ModelVector::zeros(problem.dim))
}

/// Damped Newton method, stopped once `‖Σ_i ∇f_i‖ ≤ tol`.
///
/// Close to the optimum the Armijo test compares loss values that differ
/// by less than their rounding error; a step is then accepted when it
/// strictly reduces the gradient norm instead.
pub fn solve_reference_from(
    problem: &ProblemInstance,
    tol: f64,
    init: ModelVector,
) -> Result<ModelVector> {
    if !(tol > 0.0) {
        return Err(Error::config(format!("reference tolerance must be > 0, got {tol}")));
    }
    check_dim(problem.dim, init.dim())?;
    let n = problem.dim;
    let mut x = init;
    let mut loss = problem.total_loss(&x)?;
    let mut grad = problem.total_gradient(&x)?;

    for iteration in 0..REFERENCE_MAX_ITERS {
        let g2 = grad.norm_sq();
        if g2.sqrt() <= tol {
            return Ok(x);
        }
        let mut hess = vec![0.0; n * n];
        for o in problem.objectives() {
            o.hessian_add_into(x.as_slice(), &mut hess);
        }
        let h = nalgebra::DMatrix::from_vec(n, n, hess);
        let dir = match h.cholesky() {
            Some(ch) => ch.solve(&nalgebra::DVector::from_column_slice(grad.as_slice())),
            None => nalgebra::DVector::from_column_slice(grad.as_slice()),
        };
        let dir = ModelVector::from_vec(dir.iter().copied().collect());
        let slope = grad.dot(&dir)?;
        let mut step = 1.0;
        let (next, next_loss, next_grad) = loop {
            let mut cand = x.clone();
            cand.axpy(-step, &dir)?;
            let cand_loss = problem.total_loss(&cand)?;
            let armijo = cand_loss <= loss - 1e-4 * step * slope;
            let roundoff = (cand_loss - loss).abs() <= 64.0 * f64::EPSILON * loss.abs().max(1.0);
            if armijo || roundoff {
                let cand_grad = problem.total_gradient(&cand)?;
                if armijo || cand_grad.norm_sq() < g2 {
                    break (cand, cand_loss, cand_grad);
                }
            }
            step *= 0.5;
            if step < 1e-20 {
                return Err(Error::NonConvergence {
                    iterations: iteration,
                    grad_norm: g2.sqrt(),
                    tol,
                });
            }
        };
        x = next;
        loss = next_loss;
        grad = next_grad;
    }
    Err(Error::NonConvergence {
        iterations: REFERENCE_MAX_ITERS,
        grad_norm: grad.norm(),
        tol,
    })
}

/// `Σ_i ‖x_i − x̄‖²`.
pub fn optimality_error(xs: &[ModelVector], x_bar: &ModelVector) -> Result<f64> {
    xs.iter().map(|x| x.dist_sq(x_bar)).sum()
}
