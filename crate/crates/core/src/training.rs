//! Loss, exact gradients, AdamW, and the train / deploy loops.
//!
//! # Adjoint convention
//!
//! For a complex intermediate `v`, the adjoint `v̄` is defined by
//! `dL = Re(Σ conj(v̄_i) · dv_i)`, i.e. `v̄ = 2 ∂L/∂conj(v)`. With
//! `uˡ = rˡ ⊙ qˡ` and `qˡ = Wˡ uˡ⁻¹` this gives
//!
//! ```text
//! ȳ_k    = 2 · ∂L/∂|y_k|² · y_k
//! ūᴸ     = Hᴴ ȳ
//! ūˡ⁻¹   = Wˡᴴ (conj(rˡ) ⊙ ūˡ)
//! ∂L/∂θˡ_m        = Re(conj(ūˡ_m) · j · rˡ_m · qˡ_m)          (SIM)
//! ∂L/∂Re,Im(rˡ_m) = Re, Im of ūˡ_m · conj(qˡ_m)                (digital)
//! ```
//!
//! The additive noise does not depend on the parameters, so it only enters
//! through the sampled `y`.

use rand::seq::SliceRandom;

use crate::exec::Exec;
use crate::metrics::{compute_metrics, MetricsBundle, LAND};
use crate::network::{classify, EncodedInput, ForwardCache, ModelKind, Params, System};
use crate::rng::{stream, Purpose, StreamRng};
use crate::{Error, Result, C64};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Fraction of patches used for training, in `(0, 1]`.
    pub sample_rate: f64,
    pub master_seed: u64,
    pub train_noise: bool,
    pub softmax_epsilon: f64,
    pub exec: Exec,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 60,
            batch_size: 64,
            learning_rate: 0.01,
            weight_decay: 0.01,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            sample_rate: 0.10,
            master_seed: 0,
            train_noise: true,
            softmax_epsilon: 1e-12,
            exec: Exec::Parallel,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::config("epochs", "must be at least 1"));
        }
        if self.batch_size == 0 {
            return Err(Error::config("batch", "must be at least 1"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::config("lr", "must be positive"));
        }
        if !(self.sample_rate > 0.0 && self.sample_rate <= 1.0) {
            return Err(Error::config("sample_rate", "must lie in (0, 1]"));
        }
        if !(self.weight_decay >= 0.0) {
            return Err(Error::config("weight_decay", "must be non-negative"));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::config("beta1", "betas must lie in [0, 1)"));
        }
        if !(self.softmax_epsilon > 0.0) {
            return Err(Error::config("softmax_epsilon", "must be positive"));
        }
        Ok(())
    }
}

/// One encoded patch with its class.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub input: EncodedInput,
    pub label: usize,
}

/// Normalized-power cross-entropy `−ln p_label`, with
/// `p_k = (|y_k|² + ε) / Σ_i (|y_i|² + ε)`.
pub fn loss(y: &[C64], label: usize, eps: f64) -> f64 {
    loss_and_adjoint(y, label, eps).0
}

/// Loss and the output adjoint `ȳ`.
pub fn loss_and_adjoint(y: &[C64], label: usize, eps: f64) -> (f64, Vec<C64>) {
    debug_assert!(label < y.len());
    let powers: Vec<f64> = y.iter().map(|v| v.norm_sqr() + eps).collect();
    let total: f64 = powers.iter().sum();
    let loss = total.ln() - powers[label].ln();
    // ∂L/∂P_k = 1/Σ − [k = label]/P_label
    let adjoint = y
        .iter()
        .enumerate()
        .map(|(k, v)| {
            let mut g = 1.0 / total;
            if k == label {
                g -= 1.0 / powers[label];
            }
            v * (2.0 * g)
        })
        .collect();
    (loss, adjoint)
}

/// Exact gradient of the loss at `cache` with respect to `params.values()`.
pub fn backward(
    cache: &ForwardCache,
    params: &Params,
    system: &System,
    label: usize,
    eps: f64,
) -> Result<Vec<f64>> {
    let layers = system.layers();
    let atoms = system.atoms();
    system.check_params(params)?;
    if cache.fields.len() != layers + 1
        || cache.incident.len() != layers
        || cache.y.len() != system.num_rx()
        || cache.fields.iter().any(|f| f.len() != atoms)
    {
        return Err(Error::Shape(
            "forward cache does not match the system".into(),
        ));
    }
    if label >= system.num_rx() {
        return Err(Error::Shape(format!(
            "label {label} with {} receive antennas",
            system.num_rx()
        )));
    }
    let (_, y_adj) = loss_and_adjoint(&cache.y, label, eps);
    let mut adj = system.channel.apply_adjoint(&y_adj);
    let mut grad = vec![0.0; params.values().len()];
    for l in (0..layers).rev() {
        let response = params.layer_response(l);
        let q = &cache.incident[l];
        match params.kind() {
            ModelKind::Sim => {
                let g = &mut grad[l * atoms..(l + 1) * atoms];
                for m in 0..atoms {
                    let t = adj[m].conj() * response[m] * q[m];
                    // Re(j·t) = −Im(t)
                    g[m] = -t.im;
                }
            }
            ModelKind::Digital => {
                let g = &mut grad[2 * l * atoms..2 * (l + 1) * atoms];
                for m in 0..atoms {
                    let t = adj[m] * q[m].conj();
                    g[2 * m] = t.re;
                    g[2 * m + 1] = t.im;
                }
            }
        }
        if l > 0 {
            let pre: Vec<C64> = adj
                .iter()
                .zip(&response)
                .map(|(a, r)| r.conj() * a)
                .collect();
            adj = system.propagation.layer(l + 1).apply_adjoint(&pre);
        }
    }
    Ok(grad)
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub step: u64,
}

impl OptimizerState {
    pub fn new(len: usize) -> Self {
        Self {
            m: vec![0.0; len],
            v: vec![0.0; len],
            step: 0,
        }
    }
}

/// One AdamW update with decoupled weight decay.
pub fn adamw_step(
    params: &mut [f64],
    grads: &[f64],
    state: &mut OptimizerState,
    cfg: &TrainConfig,
) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.m.len() || params.len() != state.v.len()
    {
        return Err(Error::Shape(format!(
            "optimizer shapes: params {}, grads {}, state {}",
            params.len(),
            grads.len(),
            state.m.len()
        )));
    }
    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - cfg.beta1.powi(t);
    let bc2 = 1.0 - cfg.beta2.powi(t);
    for (((p, &g), m), v) in params
        .iter_mut()
        .zip(grads)
        .zip(&mut state.m)
        .zip(&mut state.v)
    {
        *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
        *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
        let m_hat = *m / bc1;
        let v_hat = *v / bc2;
        *p -= cfg.learning_rate * (m_hat / (v_hat.sqrt() + cfg.eps) + cfg.weight_decay * *p);
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    pub loss: f64,
    pub accuracy: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: Params,
    pub history: Vec<EpochStats>,
    /// Indices into the dataset that were used for training.
    pub train_indices: Vec<usize>,
}

/// Picks `⌈S·J⌉` distinct patch indices, sorted.
pub fn subsample_indices(total: usize, sample_rate: f64, seed: u64) -> Vec<usize> {
    let count = ((sample_rate * total as f64).ceil() as usize).clamp(usize::from(total > 0), total);
    let mut rng = stream(seed, Purpose::Subsample, 0, 0);
    let mut idx = rand::seq::index::sample(&mut rng, total, count).into_vec();
    idx.sort_unstable();
    idx
}

struct SampleStep {
    loss: f64,
    correct: bool,
    grad: Vec<f64>,
}

fn sample_step(
    system: &System,
    params: &Params,
    sample: &Sample,
    noise: Option<StreamRng>,
    eps: f64,
) -> Result<SampleStep> {
    let cache = match noise {
        Some(mut rng) => system.forward(params, &sample.input, Some(&mut rng))?,
        None => system.forward::<StreamRng>(params, &sample.input, None)?,
    };
    Ok(SampleStep {
        loss: loss(&cache.y, sample.label, eps),
        correct: classify(&cache.y)? == sample.label,
        grad: backward(&cache, params, system, sample.label, eps)?,
    })
}

/// Offline training on a random `sample_rate` fraction of `dataset`.
pub fn train(
    dataset: &[Sample],
    system: &System,
    cfg: &TrainConfig,
    kind: ModelKind,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    let train_indices = subsample_indices(dataset.len(), cfg.sample_rate, cfg.master_seed);
    if train_indices.is_empty() {
        return Err(Error::config("sample_rate", "training split is empty"));
    }
    if let Some(bad) = train_indices
        .iter()
        .find(|&&i| dataset[i].label >= system.num_rx())
    {
        return Err(Error::Shape(format!(
            "patch {bad} has label {} but only {} receive antennas",
            dataset[*bad].label,
            system.num_rx()
        )));
    }
    let first = dataset[train_indices[0]].label;
    if train_indices.iter().all(|&i| dataset[i].label == first) {
        return Err(Error::config(
            "sample_rate",
            format!("training split holds only class {first}"),
        ));
    }

    let mut params = Params::init(
        system.layers(),
        system.atoms(),
        kind,
        &mut stream(cfg.master_seed, Purpose::Init, 0, 0),
    );
    let mut state = OptimizerState::new(params.values().len());
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut order = train_indices.clone();

    for epoch in 1..=cfg.epochs {
        order.clone_from(&train_indices);
        order.shuffle(&mut stream(
            cfg.master_seed,
            Purpose::Shuffle,
            epoch as u64,
            0,
        ));
        let (mut loss_sum, mut correct) = (0.0, 0usize);
        for batch in order.chunks(cfg.batch_size) {
            let steps = cfg.exec.map(batch.len(), |b| {
                let j = batch[b];
                let noise = cfg
                    .train_noise
                    .then(|| stream(cfg.master_seed, Purpose::TrainNoise, epoch as u64, j as u64));
                sample_step(system, &params, &dataset[j], noise, cfg.softmax_epsilon)
            });
            let mut grad = vec![0.0; params.values().len()];
            for step in steps {
                let step = step?;
                loss_sum += step.loss;
                correct += usize::from(step.correct);
                for (g, s) in grad.iter_mut().zip(&step.grad) {
                    *g += s;
                }
            }
            let scale = 1.0 / batch.len() as f64;
            grad.iter_mut().for_each(|g| *g *= scale);
            adamw_step(params.values_mut(), &grad, &mut state, cfg)?;
        }
        let n = order.len() as f64;
        let stats = EpochStats {
            epoch,
            loss: loss_sum / n,
            accuracy: correct as f64 / n,
        };
        log::debug!(
            "epoch {epoch}: loss {:.6} acc {:.4}",
            stats.loss,
            stats.accuracy
        );
        history.push(stats);
    }
    Ok(TrainOutcome {
        params,
        history,
        train_indices,
    })
}

#[derive(Debug, Clone)]
pub struct Evaluation {
    pub predictions: Vec<usize>,
    pub metrics: MetricsBundle,
}

/// Deploys `params` on every patch (noise on, with streams disjoint from training).
pub fn evaluate(
    params: &Params,
    dataset: &[Sample],
    system: &System,
    cfg: &TrainConfig,
) -> Result<Evaluation> {
    system.check_params(params)?;
    let predictions = cfg
        .exec
        .map(dataset.len(), |j| {
            let mut rng = stream(cfg.master_seed, Purpose::EvalNoise, 0, j as u64);
            let cache = system.forward(params, &dataset[j].input, Some(&mut rng))?;
            classify(&cache.y)
        })
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let labels: Vec<usize> = dataset.iter().map(|s| s.label).collect();
    let metrics = compute_metrics(&predictions, &labels, system.num_rx(), LAND)?;
    Ok(Evaluation {
        predictions,
        metrics,
    })
}

/// Writes `epoch loss acc` lines.
pub fn format_history(history: &[EpochStats]) -> String {
    history
        .iter()
        .map(|h| format!("{} {:.9e} {:.6}\n", h.epoch, h.loss, h.accuracy))
        .collect()
}
