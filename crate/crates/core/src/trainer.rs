//! Alternating minimax training of discriminator against generator and labeller.
//!
//! Each step runs `d_steps_per_g_step` ascent updates on the discriminator
//! followed by one joint descent update on generator and labeller. Latent
//! noise and Gumbel noise are drawn once per step and shared by both phases.

use std::path::PathBuf;
use std::sync::Arc;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{GradMap, Tape, Tensor, Var};
use crate::checkpoint::{save_checkpoint, Checkpoint};
use crate::config::{ExperimentConfig, Surrogate};
use crate::data::{make_splits, DatasetSplit};
use crate::error::{Error, Result};
use crate::metrics::{evaluate, MetricsRecord};
use crate::nets::{init_params, label_head, sample_gumbel, Condition, LabelMode, NetworkParams, NoiseSpec, Role};
use crate::objectives::{
    cross_entropy, discriminate, full_objective, generate, mean_log_d, mean_log_one_minus_d,
    ObjectiveBreakdown,
};
use crate::report::emit_metrics_csv;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimizerSpec {
    pub lr_d: f64,
    pub lr_g: f64,
    pub lr_l: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Defaults to 6000 (task a) or 12000 (task b).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub steps: Option<usize>,
    /// Defaults to `min(|S|, 16)`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub b_sup: Option<usize>,
    pub b_unsup: usize,
    pub d_steps_per_g_step: usize,
}

impl Default for OptimizerSpec {
    fn default() -> Self {
        OptimizerSpec {
            lr_d: 2e-4,
            lr_g: 2e-4,
            lr_l: 2e-4,
            beta1: 0.0,
            beta2: 0.999,
            epsilon: 1e-8,
            steps: None,
            b_sup: None,
            b_unsup: 64,
            d_steps_per_g_step: 1,
        }
    }
}

impl OptimizerSpec {
    pub fn validate(&self) -> Result<()> {
        let err = |key: &str, msg: &str| Error::Config {
            pointer: format!("/optimizer/{key}"),
            message: msg.to_string(),
        };
        for (key, lr) in [("lr_d", self.lr_d), ("lr_g", self.lr_g), ("lr_l", self.lr_l)] {
            if !(lr > 0.0) || !lr.is_finite() {
                return Err(err(key, "learning rates must be positive"));
            }
        }
        for (key, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&b) {
                return Err(err(key, "betas must lie in [0, 1)"));
            }
        }
        if !(self.epsilon > 0.0) {
            return Err(err("epsilon", "epsilon must be positive"));
        }
        if self.b_sup == Some(0) {
            return Err(err("b_sup", "batch sizes must be positive"));
        }
        if self.b_unsup == 0 {
            return Err(err("b_unsup", "batch sizes must be positive"));
        }
        if self.d_steps_per_g_step == 0 {
            return Err(err("d_steps_per_g_step", "must be at least 1"));
        }
        Ok(())
    }
}

/// First/second Adam moments for every entry of one network.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub t: u64,
    pub first: Vec<Tensor>,
    pub second: Vec<Tensor>,
}

impl AdamState {
    pub fn new(params: &NetworkParams) -> Self {
        let zeros: Vec<Tensor> = params.entries().iter().map(|(_, t)| Tensor::zeros(t.shape())).collect();
        AdamState {
            t: 0,
            first: zeros.clone(),
            second: zeros,
        }
    }
}

/// One bias-corrected Adam step on `param` (descending along `grad`).
/// `t` is the 1-based update count.
#[allow(clippy::too_many_arguments)]
pub fn adam_update(
    param: &mut Tensor,
    grad: &Tensor,
    first: &mut Tensor,
    second: &mut Tensor,
    lr: f64,
    spec: &OptimizerSpec,
    t: u64,
) -> Result<()> {
    if param.shape() != grad.shape() || param.shape() != first.shape() || param.shape() != second.shape() {
        return Err(Error::shape(
            "adam_update",
            &[param.shape(), grad.shape(), first.shape(), second.shape()],
        ));
    }
    let (b1, b2) = (spec.beta1, spec.beta2);
    let c1 = 1.0 - b1.powf(t as f64);
    let c2 = 1.0 - b2.powf(t as f64);
    let p = param.data_mut();
    let m = first.data_mut();
    let v = second.data_mut();
    for i in 0..p.len() {
        let g = grad.data()[i];
        m[i] = b1 * m[i] + (1.0 - b1) * g;
        v[i] = b2 * v[i] + (1.0 - b2) * g * g;
        let m_hat = m[i] / c1;
        let v_hat = v[i] / c2;
        p[i] -= lr * m_hat / (v_hat.sqrt() + spec.epsilon);
    }
    Ok(())
}

fn apply_grads(
    net: &mut NetworkParams,
    opt: &mut AdamState,
    grads: &GradMap,
    lr: f64,
    spec: &OptimizerSpec,
    negate: bool,
    step: u64,
) -> Result<()> {
    for (_, g) in grads.iter() {
        if !g.all_finite() {
            return Err(Error::NonFiniteGradient {
                network: net.role().name().to_string(),
                step,
            });
        }
    }
    opt.t += 1;
    let names: Vec<String> = net.leaf_names();
    for (i, (entry, leaf)) in net.entries_mut().iter_mut().zip(&names).enumerate() {
        let g = &grads[leaf];
        let g = if negate { g.map(|v| -v) } else { g.clone() };
        adam_update(&mut entry.1, &g, &mut opt.first[i], &mut opt.second[i], lr, spec, opt.t)?;
    }
    Ok(())
}

#[derive(Clone, Debug)]
pub struct SupBatch {
    pub x: Tensor,
    pub c: Condition,
}

#[derive(Clone, Debug)]
pub struct UnsupBatch {
    pub x: Tensor,
    /// Separate samples for the fake-pair half when batches are independent.
    pub x_fake: Option<Tensor>,
}

/// Parameters, optimizer moments and RNG streams of one run.
#[derive(Clone, Debug)]
pub struct TrainState {
    pub generator: NetworkParams,
    pub discriminator: NetworkParams,
    pub labeller: NetworkParams,
    pub opt_generator: AdamState,
    pub opt_discriminator: AdamState,
    pub opt_labeller: AdamState,
    pub step: u64,
    /// Unlabelled samples consumed so far.
    pub unsup_items_used: u64,
    /// Labeller excluded from updates (pseudo-label baseline).
    pub freeze_labeller: bool,
    pub config: Arc<ExperimentConfig>,
    pub seed: u64,
    data_rng: ChaCha8Rng,
    noise_rng: ChaCha8Rng,
    gumbel_rng: ChaCha8Rng,
}

/// Independent ChaCha stream `stream` of run `seed`.
pub fn rng_stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

const STREAM_PARAMS: u64 = 0;
const STREAM_DATA: u64 = 1;
const STREAM_NOISE: u64 = 2;
const STREAM_GUMBEL: u64 = 3;
pub(crate) const STREAM_EVAL: u64 = 4;
pub(crate) const STREAM_PRETRAIN: u64 = 5;
pub(crate) const STREAM_INFER: u64 = 6;
pub(crate) const STREAM_SNAPSHOT: u64 = 7;

impl TrainState {
    pub fn init(config: Arc<ExperimentConfig>, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut prng = rng_stream(seed, STREAM_PARAMS);
        let generator = init_params(&config.generator_widths(), Role::Generator, &mut prng)?;
        let discriminator = init_params(&config.discriminator_widths(), Role::Discriminator, &mut prng)?;
        let labeller = init_params(&config.labeller_widths(), Role::Labeller, &mut prng)?;
        Ok(TrainState {
            opt_generator: AdamState::new(&generator),
            opt_discriminator: AdamState::new(&discriminator),
            opt_labeller: AdamState::new(&labeller),
            generator,
            discriminator,
            labeller,
            step: 0,
            unsup_items_used: 0,
            freeze_labeller: false,
            config,
            seed,
            data_rng: rng_stream(seed, STREAM_DATA),
            noise_rng: rng_stream(seed, STREAM_NOISE),
            gumbel_rng: rng_stream(seed, STREAM_GUMBEL),
        })
    }

    pub fn noise_spec(&self) -> NoiseSpec {
        NoiseSpec {
            dim: self.config.noise_dim(),
        }
    }

    pub fn networks(&self) -> [&NetworkParams; 3] {
        [&self.generator, &self.discriminator, &self.labeller]
    }

    pub fn to_checkpoint(&self, with_moments: bool) -> Checkpoint {
        Checkpoint {
            networks: self.networks().into_iter().cloned().collect(),
            moments: with_moments.then(|| {
                vec![
                    self.opt_generator.clone(),
                    self.opt_discriminator.clone(),
                    self.opt_labeller.clone(),
                ]
            }),
            config_hash: self.config.hash(),
        }
    }

    /// Replaces parameters (and moments, when present) from a checkpoint.
    pub fn restore(&mut self, ckpt: &Checkpoint) -> Result<()> {
        for net in &ckpt.networks {
            let slot = match net.role() {
                Role::Generator => &mut self.generator,
                Role::Discriminator => &mut self.discriminator,
                Role::Labeller => &mut self.labeller,
            };
            if slot.widths() != net.widths() {
                return Err(Error::Checkpoint(format!(
                    "{} widths {:?} do not match config {:?}",
                    net.role().name(),
                    net.widths(),
                    slot.widths()
                )));
            }
            *slot = net.clone();
        }
        if let Some(moments) = &ckpt.moments {
            for (net, m) in ckpt.networks.iter().zip(moments) {
                match net.role() {
                    Role::Generator => self.opt_generator = m.clone(),
                    Role::Discriminator => self.opt_discriminator = m.clone(),
                    Role::Labeller => self.opt_labeller = m.clone(),
                }
            }
        }
        Ok(())
    }
}

fn pick<R: Rng + ?Sized>(rng: &mut R, len: usize, n: usize) -> Vec<usize> {
    if len >= n {
        index::sample(rng, len, n).into_vec()
    } else {
        (0..n).map(|_| rng.random_range(0..len)).collect()
    }
}

/// Draws the supervised and (when the unsupervised term is active) unlabelled batches.
pub fn sample_batches(state: &mut TrainState, split: &DatasetSplit) -> Result<(SupBatch, Option<UnsupBatch>)> {
    let cfg = state.config.clone();
    let n_sup = split.supervised.len();
    let b_sup = cfg.optimizer.b_sup.unwrap_or(n_sup.min(16));
    let idx = pick(&mut state.data_rng, n_sup, b_sup);
    let rows: Vec<Vec<f64>> = idx.iter().map(|&i| split.supervised[i].x.clone()).collect();
    let labels: Vec<Vec<usize>> = idx.iter().map(|&i| split.supervised[i].label.clone()).collect();
    let sup = SupBatch {
        x: Tensor::from_rows(&rows)?,
        c: Condition::from_labels(split.task.condition_kind(), &labels)?,
    };
    if cfg.lambdas[2] == 0.0 || split.unsupervised.is_empty() {
        return Ok((sup, None));
    }
    let n_u = split.unsupervised.len();
    let b_u = cfg.optimizer.b_unsup;
    let take = |rng: &mut ChaCha8Rng| -> Result<Tensor> {
        let idx = pick(rng, n_u, b_u);
        Tensor::from_rows(&idx.iter().map(|&i| split.unsupervised[i].clone()).collect::<Vec<_>>())
    };
    let x = take(&mut state.data_rng)?;
    let x_fake = if cfg.independent_unsup_batches {
        Some(take(&mut state.data_rng)?)
    } else {
        None
    };
    Ok((sup, Some(UnsupBatch { x, x_fake })))
}

/// Per-step frozen randomness.
struct StepNoise {
    z_sup: Option<Tensor>,
    z_unsup: Option<Tensor>,
    gumbel_real: Option<Tensor>,
    gumbel_fake: Option<Tensor>,
}

struct Graph {
    sup_real: Var,
    sup_fake: Var,
    ce: Var,
    unsup: Option<(Var, Var)>,
}

#[derive(Clone, Copy)]
struct Masks {
    generator_input: bool,
    discriminator_condition: bool,
}

/// Records discriminator logits for every pair plus the labeller's supervised loss.
#[allow(clippy::too_many_arguments)]
fn build_graph(
    tape: &mut Tape,
    state: &TrainState,
    sup: &SupBatch,
    unsup: Option<&UnsupBatch>,
    noise: &StepNoise,
    train_d: bool,
    masks: Masks,
    tau: f64,
) -> Result<Graph> {
    let cfg = &state.config;
    let kind = sup.c.kind();
    let g = state.generator.bind(tape, !train_d)?;
    let d = state.discriminator.bind(tape, train_d)?;
    let l = state.labeller.bind(tape, !train_d && !state.freeze_labeller)?;

    let xs = tape.constant(sup.x.clone());
    let cs = tape.constant(sup.c.values().clone());
    let zs = noise.z_sup.as_ref().map(|z| tape.constant(z.clone()));
    let sup_real = discriminate(tape, &d, xs, cs)?;
    let fake_s = generate(tape, &g, cs, zs)?;
    let sup_fake = discriminate(tape, &d, fake_s, cs)?;

    let logits_s = l.forward(tape, xs)?;
    let ce = cross_entropy(tape, logits_s, cs, kind)?;

    let mode = LabelMode::Gumbel {
        tau,
        hard: cfg.straight_through,
    };
    let unsup = match unsup {
        None => None,
        Some(u) => {
            let xu = tape.constant(u.x.clone());
            let logits_u = l.forward(tape, xu)?;
            let c_real = label_head(tape, logits_u, kind, mode, noise.gumbel_real.as_ref())?;
            let (x_fake_src, c_fake) = match &u.x_fake {
                Some(xf) => {
                    let xf = tape.constant(xf.clone());
                    let lf = l.forward(tape, xf)?;
                    (xf, label_head(tape, lf, kind, mode, noise.gumbel_fake.as_ref())?)
                }
                None => (xu, c_real),
            };
            let _ = x_fake_src;
            let d_real_c = if masks.discriminator_condition { tape.detach(c_real) } else { c_real };
            let d_fake_c = if masks.discriminator_condition { tape.detach(c_fake) } else { c_fake };
            let g_c = if masks.generator_input { tape.detach(c_fake) } else { c_fake };
            let zu = noise.z_unsup.as_ref().map(|z| tape.constant(z.clone()));
            let real = discriminate(tape, &d, xu, d_real_c)?;
            let fake_u = generate(tape, &g, g_c, zu)?;
            let fake = discriminate(tape, &d, fake_u, d_fake_c)?;
            Some((real, fake))
        }
    };
    Ok(Graph {
        sup_real,
        sup_fake,
        ce,
        unsup,
    })
}

fn value(tape: &Tape, v: Var) -> f64 {
    tape.value(v).data()[0]
}

/// One minimax step on the given batches. Returns the literal objective values
/// measured before the discriminator update.
pub fn train_step(state: &mut TrainState, sup: &SupBatch, unsup: Option<&UnsupBatch>) -> Result<ObjectiveBreakdown> {
    let cfg = state.config.clone();
    let [l1, l2, l3] = cfg.lambdas;
    let spec = &cfg.optimizer;
    let noise_spec = state.noise_spec();
    let tau = cfg.tau_at(state.step);
    let flat = sup.c.kind().flat_dim();

    let noise = StepNoise {
        z_sup: noise_spec.sample(sup.x.shape()[0], &mut state.noise_rng),
        z_unsup: unsup.and_then(|u| {
            let n = u.x_fake.as_ref().unwrap_or(&u.x).shape()[0];
            noise_spec.sample(n, &mut state.noise_rng)
        }),
        gumbel_real: unsup.map(|u| sample_gumbel(&[u.x.shape()[0], flat], &mut state.gumbel_rng)),
        gumbel_fake: unsup
            .and_then(|u| u.x_fake.as_ref())
            .map(|xf| sample_gumbel(&[xf.shape()[0], flat], &mut state.gumbel_rng)),
    };
    if let Some(u) = unsup {
        state.unsup_items_used += (u.x.shape()[0] + u.x_fake.as_ref().map_or(0, |x| x.shape()[0])) as u64;
    }

    let open = Masks {
        generator_input: false,
        discriminator_condition: false,
    };

    // Discriminator ascent on λ1·V_c + λ3·V_c^u.
    let mut breakdown = None;
    let d_leaves = state.discriminator.leaf_names();
    let d_refs: Vec<&str> = d_leaves.iter().map(String::as_str).collect();
    for _ in 0..spec.d_steps_per_g_step {
        let mut tape = Tape::new();
        let gr = build_graph(&mut tape, state, sup, unsup, &noise, true, open, tau)?;
        let a = mean_log_d(&mut tape, gr.sup_real)?;
        let b = mean_log_one_minus_d(&mut tape, gr.sup_fake)?;
        let v_sup = tape.add(a, b)?;
        let mut objective = tape.scale(v_sup, l1);
        let mut v_unsup = None;
        if let Some((real, fake)) = gr.unsup {
            let a = mean_log_d(&mut tape, real)?;
            let b = mean_log_one_minus_d(&mut tape, fake)?;
            let vu = tape.add(a, b)?;
            let weighted = tape.scale(vu, l3);
            objective = tape.add(objective, weighted)?;
            v_unsup = Some(vu);
        }
        if breakdown.is_none() {
            breakdown = Some(full_objective(
                value(&tape, v_sup),
                value(&tape, gr.ce),
                v_unsup.map_or(0.0, |v| value(&tape, v)),
                cfg.lambdas,
            )?);
        }
        let grads = tape.backward(objective, &d_refs)?;
        apply_grads(
            &mut state.discriminator,
            &mut state.opt_discriminator,
            &grads,
            spec.lr_d,
            spec,
            true,
            state.step,
        )?;
    }

    // Generator/labeller descent on the training surrogate.
    let warm = (state.step as usize) < cfg.warmup_steps;
    let masks = Masks {
        generator_input: warm || cfg.stop_grad_generator_input,
        discriminator_condition: warm || cfg.stop_grad_discriminator_condition,
    };
    let mut tape = Tape::new();
    let gr = build_graph(&mut tape, state, sup, unsup, &noise, false, masks, tau)?;
    let sup_term = match cfg.surrogate {
        Surrogate::NonSaturating => {
            let t = mean_log_d(&mut tape, gr.sup_fake)?;
            tape.neg(t)
        }
        Surrogate::Saturating => mean_log_one_minus_d(&mut tape, gr.sup_fake)?,
    };
    let mut loss = tape.scale(sup_term, l1);
    let ce = tape.scale(gr.ce, l2);
    loss = tape.add(loss, ce)?;
    if let Some((real, fake)) = gr.unsup {
        let u = match cfg.surrogate {
            Surrogate::NonSaturating => {
                let a = mean_log_one_minus_d(&mut tape, real)?;
                let b = mean_log_d(&mut tape, fake)?;
                let s = tape.add(a, b)?;
                tape.neg(s)
            }
            Surrogate::Saturating => {
                let a = mean_log_d(&mut tape, real)?;
                let b = mean_log_one_minus_d(&mut tape, fake)?;
                tape.add(a, b)?
            }
        };
        let w = tape.scale(u, l3);
        loss = tape.add(loss, w)?;
    }

    let g_leaves = state.generator.leaf_names();
    let update_l = !state.freeze_labeller && (l2 > 0.0 || l3 > 0.0);
    let l_leaves = if update_l { state.labeller.leaf_names() } else { Vec::new() };
    let refs: Vec<&str> = g_leaves.iter().chain(&l_leaves).map(String::as_str).collect();
    let grads = tape.backward(loss, &refs)?;
    apply_grads(
        &mut state.generator,
        &mut state.opt_generator,
        &grads,
        spec.lr_g,
        spec,
        false,
        state.step,
    )?;
    if update_l {
        apply_grads(
            &mut state.labeller,
            &mut state.opt_labeller,
            &grads,
            spec.lr_l,
            spec,
            false,
            state.step,
        )?;
    }

    state.step += 1;
    Ok(breakdown.expect("at least one discriminator step"))
}

/// Outcome of a full run.
#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub state: TrainState,
    pub history: Vec<MetricsRecord>,
    pub split: Arc<DatasetSplit>,
}

pub fn build_split(config: &ExperimentConfig, seed: u64) -> Result<DatasetSplit> {
    make_splits(
        &config.task_spec(),
        config.n_total(),
        config.n_supervised(),
        config.n_test,
        config.split_seed(seed),
    )
}

fn output_dir(config: &ExperimentConfig, seed: u64) -> Option<PathBuf> {
    config
        .output_dir
        .as_ref()
        .map(|d| PathBuf::from(d).join(format!("seed_{seed}")))
}

/// Runs `steps` training steps from an initialized state on `split`,
/// evaluating every `eval_every` steps.
pub fn run_training(
    mut state: TrainState,
    split: Arc<DatasetSplit>,
    pseudo_label_acc: Option<f64>,
) -> Result<TrainOutcome> {
    let cfg = state.config.clone();
    let steps = cfg.steps();
    let out = output_dir(&cfg, state.seed);
    if let Some(dir) = &out {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut history = Vec::new();
    for _ in 0..steps {
        let (sup, unsup) = sample_batches(&mut state, &split)?;
        let breakdown = train_step(&mut state, &sup, unsup.as_ref())?;
        let step = state.step;
        if step % cfg.eval_every as u64 == 0 {
            let mut record = evaluate(&state, &split, breakdown, unsup.is_some())?;
            record.pseudo_label_acc = pseudo_label_acc;
            history.push(record);
            if let Some(dir) = &out {
                emit_metrics_csv(&history, &dir.join("metrics.csv"))?;
            }
        }
        if let Some(dir) = &out {
            if cfg.checkpoint_every > 0 && step % cfg.checkpoint_every as u64 == 0 {
                save_checkpoint(&state.to_checkpoint(true), &dir.join(format!("step_{step}.s2cg")))?;
            }
        }
    }
    if let Some(dir) = &out {
        emit_metrics_csv(&history, &dir.join("metrics.csv"))?;
        save_checkpoint(&state.to_checkpoint(true), &dir.join("final.s2cg"))?;
    }
    Ok(TrainOutcome { state, history, split })
}

/// Semi-supervised training for one seed.
pub fn train(config: &ExperimentConfig, seed: u64) -> Result<TrainOutcome> {
    let config = Arc::new(config.clone());
    let split = Arc::new(build_split(&config, seed)?);
    let state = TrainState::init(config, seed)?;
    run_training(state, split, None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::TaskKind;

    fn small_config(task: TaskKind) -> ExperimentConfig {
        let mut cfg = ExperimentConfig {
            task,
            n_total: Some(300),
            n_test: 50,
            eval_every: 5,
            warmup_steps: 0,
            ..Default::default()
        };
        cfg.arch.generator_hidden = vec![16];
        cfg.arch.discriminator_hidden = vec![16];
        cfg.arch.labeller_hidden = vec![16];
        cfg.optimizer.steps = Some(10);
        cfg.optimizer.b_unsup = 8;
        cfg
    }

    #[test]
    fn adam_first_step_moves_by_lr() {
        let spec = OptimizerSpec::default();
        let mut p = Tensor::vector(vec![1.0, -2.0, 0.5]);
        let g = Tensor::vector(vec![3.0, -0.02, 100.0]);
        let mut m = Tensor::zeros(&[3]);
        let mut v = Tensor::zeros(&[3]);
        adam_update(&mut p, &g, &mut m, &mut v, 0.1, &spec, 1).unwrap();
        let expected = [0.9, -1.9, 0.4];
        for (a, b) in p.data().iter().zip(expected) {
            assert!((a - b).abs() < 1e-6, "{a} vs {b}");
        }
    }

    #[test]
    fn adam_zero_grad_keeps_params_and_decays_moments() {
        let spec = OptimizerSpec {
            beta1: 0.9,
            ..Default::default()
        };
        let mut p = Tensor::vector(vec![1.0, 2.0]);
        let mut m = Tensor::vector(vec![0.0, 0.0]);
        let mut v = Tensor::vector(vec![0.5, 0.25]);
        adam_update(&mut p, &Tensor::zeros(&[2]), &mut m, &mut v, 0.1, &spec, 3).unwrap();
        assert_eq!(p.data(), &[1.0, 2.0]);
        assert_eq!(v.data(), &[0.5 * 0.999, 0.25 * 0.999]);
        let mut bad = Tensor::zeros(&[3]);
        assert!(adam_update(&mut bad, &Tensor::zeros(&[2]), &mut m, &mut v, 0.1, &spec, 1).is_err());
    }

    #[test]
    fn adam_is_deterministic() {
        let spec = OptimizerSpec::default();
        let run = || {
            let mut p = Tensor::vector(vec![0.3, -0.1]);
            let mut m = Tensor::zeros(&[2]);
            let mut v = Tensor::zeros(&[2]);
            adam_update(&mut p, &Tensor::vector(vec![0.2, 0.7]), &mut m, &mut v, 0.01, &spec, 1).unwrap();
            (p, m, v)
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn zero_steps_gives_initial_state_and_empty_history() {
        let mut cfg = small_config(TaskKind::A);
        cfg.optimizer.steps = Some(0);
        let out = train(&cfg, 1).unwrap();
        assert!(out.history.is_empty());
        assert_eq!(out.state.step, 0);
        let fresh = TrainState::init(Arc::new(cfg), 1).unwrap();
        assert_eq!(out.state.generator, fresh.generator);
    }

    #[test]
    fn history_length_is_steps_over_eval_every() {
        let out = train(&small_config(TaskKind::B), 2).unwrap();
        assert_eq!(out.history.len(), 2);
        for r in &out.history {
            let b = r.breakdown;
            assert_eq!(
                b.v_full,
                b.lambdas[0] * b.v_sup + b.lambdas[1] * b.v_labeller + b.lambdas[2] * b.v_unsup
            );
        }
    }

    #[test]
    fn phases_touch_only_their_networks() {
        let cfg = Arc::new(small_config(TaskKind::A));
        let split = build_split(&cfg, 0).unwrap();
        let mut state = TrainState::init(cfg.clone(), 0).unwrap();
        let (sup, unsup) = sample_batches(&mut state, &split).unwrap();
        let before = state.clone();

        // D phase only: run with G/L learning rates so small that any change would
        // still show up bitwise; instead compare a step against a manual D-only step.
        let mut d_only = before.clone();
        let noise = StepNoise {
            z_sup: d_only.noise_spec().sample(sup.x.shape()[0], &mut d_only.noise_rng),
            z_unsup: None,
            gumbel_real: None,
            gumbel_fake: None,
        };
        let mut tape = Tape::new();
        let open = Masks {
            generator_input: false,
            discriminator_condition: false,
        };
        let gr = build_graph(&mut tape, &d_only, &sup, None, &noise, true, open, 1.0).unwrap();
        let a = mean_log_d(&mut tape, gr.sup_real).unwrap();
        let names = d_only.discriminator.leaf_names();
        let refs: Vec<&str> = names.iter().map(String::as_str).collect();
        assert!(tape.leaf_var("generator.w0").is_none());
        assert!(tape.leaf_var("labeller.w0").is_none());
        let grads = tape.backward(a, &refs).unwrap();
        apply_grads(&mut d_only.discriminator, &mut d_only.opt_discriminator, &grads, 1e-3, &cfg.optimizer, true, 0).unwrap();
        assert_ne!(d_only.discriminator, before.discriminator);
        assert_eq!(d_only.generator, before.generator);
        assert_eq!(d_only.labeller, before.labeller);

        // Full step: G/L phase changes G and L; D changed exactly once by the D phase.
        train_step(&mut state, &sup, unsup.as_ref()).unwrap();
        assert_ne!(state.generator, before.generator);
        assert_ne!(state.labeller, before.labeller);
        assert_ne!(state.discriminator, before.discriminator);
        assert_eq!(state.opt_discriminator.t, 1);
        assert_eq!(state.opt_generator.t, 1);
    }

    #[test]
    fn pure_supervised_config_reduces_to_cgan() {
        let mut cfg = small_config(TaskKind::A);
        cfg.lambdas = [1.0, 0.0, 0.0];
        let cfg = Arc::new(cfg);
        let split = build_split(&cfg, 3).unwrap();
        let mut state = TrainState::init(cfg, 3).unwrap();
        let labeller = state.labeller.clone();
        for _ in 0..3 {
            let (sup, unsup) = sample_batches(&mut state, &split).unwrap();
            assert!(unsup.is_none());
            let b = train_step(&mut state, &sup, None).unwrap();
            assert_eq!(b.v_full, b.v_sup);
        }
        assert_eq!(state.labeller, labeller);
        assert_eq!(state.unsup_items_used, 0);
    }

    #[test]
    fn same_seed_same_state() {
        let cfg = small_config(TaskKind::B);
        let a = train(&cfg, 5).unwrap();
        let b = train(&cfg, 5).unwrap();
        assert_eq!(a.state.generator, b.state.generator);
        assert_eq!(a.state.discriminator, b.state.discriminator);
        assert_eq!(a.state.labeller, b.state.labeller);
        assert_eq!(a.history, b.history);
    }

    #[test]
    fn labeller_receives_adversarial_gradient() {
        let cfg = Arc::new(ExperimentConfig {
            lambdas: [0.0, 0.0, 1.0],
            ..small_config(TaskKind::A)
        });
        let split = build_split(&cfg, 0).unwrap();
        let mut live = 0;
        for seed in 0..100 {
            let mut state = TrainState::init(cfg.clone(), seed).unwrap();
            let (sup, unsup) = sample_batches(&mut state, &split).unwrap();
            let before = state.labeller.clone();
            train_step(&mut state, &sup, unsup.as_ref()).unwrap();
            if state.labeller != before {
                live += 1;
            }
        }
        assert!(live >= 99, "{live}");
    }

    #[test]
    fn warmup_masks_adversarial_labeller_gradient() {
        let cfg = Arc::new(ExperimentConfig {
            lambdas: [0.0, 0.0, 1.0],
            warmup_steps: 10,
            ..small_config(TaskKind::A)
        });
        let split = build_split(&cfg, 0).unwrap();
        let mut state = TrainState::init(cfg, 0).unwrap();
        let (sup, unsup) = sample_batches(&mut state, &split).unwrap();
        let before = state.labeller.clone();
        train_step(&mut state, &sup, unsup.as_ref()).unwrap();
        assert_eq!(state.labeller, before);
    }
}
