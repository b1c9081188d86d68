//! Adversarial objective values and the labeller's supervised loss.
//!
//! Discriminator outputs are logits; probabilities are `sigmoid(logit)`
//! clamped to `[PROB_CLAMP, 1 - PROB_CLAMP]` before any log.

use rand::Rng;

use crate::autodiff::{Tape, Tensor, Var};
use crate::data::TaskSpec;
use crate::error::{Error, Result};
use crate::nets::{
    generator_input, label_head, sample_gumbel, BoundNet, Condition, ConditionKind, LabelMode,
    NetworkParams,
};

pub const PROB_CLAMP: f64 = 1e-12;

/// Logged objective values and the weights that combine them.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ObjectiveBreakdown {
    pub v_sup: f64,
    pub v_labeller: f64,
    pub v_unsup: f64,
    pub v_full: f64,
    pub lambdas: [f64; 3],
}

/// `v_full = λ1·v_sup + λ2·v_labeller + λ3·v_unsup`.
pub fn full_objective(v_sup: f64, v_labeller: f64, v_unsup: f64, lambdas: [f64; 3]) -> Result<ObjectiveBreakdown> {
    if lambdas.iter().any(|l| !(*l >= 0.0)) {
        return Err(Error::invalid(format!("lambdas must be non-negative, got {lambdas:?}")));
    }
    Ok(ObjectiveBreakdown {
        v_sup,
        v_labeller,
        v_unsup,
        v_full: lambdas[0] * v_sup + lambdas[1] * v_labeller + lambdas[2] * v_unsup,
        lambdas,
    })
}

pub fn discriminate(tape: &mut Tape, d: &BoundNet, x: Var, c: Var) -> Result<Var> {
    let input = tape.concat(&[x, c])?;
    d.forward(tape, input)
}

pub fn generate(tape: &mut Tape, g: &BoundNet, c: Var, z: Option<Var>) -> Result<Var> {
    let input = generator_input(tape, c, z)?;
    g.forward(tape, input)
}

fn clamped_prob(tape: &mut Tape, logits: Var) -> Var {
    let p = tape.sigmoid(logits);
    tape.clamp(p, PROB_CLAMP, 1.0 - PROB_CLAMP)
}

/// `mean log D`
pub fn mean_log_d(tape: &mut Tape, logits: Var) -> Result<Var> {
    let p = clamped_prob(tape, logits);
    let l = tape.log(p)?;
    Ok(tape.mean(l))
}

/// `mean log(1 - D)`
pub fn mean_log_one_minus_d(tape: &mut Tape, logits: Var) -> Result<Var> {
    let p = clamped_prob(tape, logits);
    let q = tape.one_minus(p);
    let l = tape.log(q)?;
    Ok(tape.mean(l))
}

/// Mean cross-entropy of labeller logits against target rows, averaged over
/// cells and then over the batch.
pub fn cross_entropy(tape: &mut Tape, logits: Var, target: Var, kind: ConditionKind) -> Result<Var> {
    let b = tape.value(logits).shape()[0];
    let rows = b * kind.rows();
    let l = tape.reshape(logits, &[rows, kind.labels()])?;
    let t = tape.reshape(target, &[rows, kind.labels()])?;
    let ls = tape.log_softmax(l);
    let prod = tape.mul(ls, t)?;
    let per_row = tape.sum_last(prod);
    let m = tape.mean(per_row);
    Ok(tape.neg(m))
}

fn non_empty(x: &Tensor, what: &str) -> Result<()> {
    if x.rank() != 2 || x.shape()[0] == 0 {
        return Err(Error::invalid(format!("{what} batch must be a non-empty matrix")));
    }
    Ok(())
}

fn scalar(tape: &Tape, v: Var) -> f64 {
    tape.value(v).data()[0]
}

/// `E[log D(x)] + E[log(1 - D(G(z)))]` for an unconditional pair of networks.
pub fn unconditional_gan_objective(
    d: &NetworkParams,
    g: &NetworkParams,
    real: &Tensor,
    noise: &Tensor,
) -> Result<f64> {
    non_empty(real, "real")?;
    non_empty(noise, "noise")?;
    let mut tape = Tape::new();
    let dn = d.bind(&mut tape, false)?;
    let gn = g.bind(&mut tape, false)?;
    let x = tape.constant(real.clone());
    let z = tape.constant(noise.clone());
    let fake = gn.forward(&mut tape, z)?;
    let real_logits = dn.forward(&mut tape, x)?;
    let fake_logits = dn.forward(&mut tape, fake)?;
    let a = mean_log_d(&mut tape, real_logits)?;
    let b = mean_log_one_minus_d(&mut tape, fake_logits)?;
    Ok(scalar(&tape, a) + scalar(&tape, b))
}

/// `E[log D(x, c)] + E[log(1 - D(G(c), c))]` over a labelled batch; the fake
/// half reuses the batch's own conditions.
pub fn supervised_cgan_objective(
    d: &NetworkParams,
    g: &NetworkParams,
    x: &Tensor,
    c: &Condition,
    z: Option<&Tensor>,
) -> Result<f64> {
    non_empty(x, "supervised")?;
    let mut tape = Tape::new();
    let dn = d.bind(&mut tape, false)?;
    let gn = g.bind(&mut tape, false)?;
    let xv = tape.constant(x.clone());
    let cv = tape.constant(c.values().clone());
    let zv = z.map(|z| tape.constant(z.clone()));
    let real_logits = discriminate(&mut tape, &dn, xv, cv)?;
    let fake = generate(&mut tape, &gn, cv, zv)?;
    let fake_logits = discriminate(&mut tape, &dn, fake, cv)?;
    let a = mean_log_d(&mut tape, real_logits)?;
    let b = mean_log_one_minus_d(&mut tape, fake_logits)?;
    Ok(scalar(&tape, a) + scalar(&tape, b))
}

pub fn labeller_supervised_loss(l: &NetworkParams, x: &Tensor, c: &Condition) -> Result<f64> {
    non_empty(x, "supervised")?;
    let mut tape = Tape::new();
    let ln = l.bind(&mut tape, false)?;
    let xv = tape.constant(x.clone());
    let logits = ln.forward(&mut tape, xv)?;
    let t = tape.constant(c.values().clone());
    let ce = cross_entropy(&mut tape, logits, t, c.kind())?;
    Ok(scalar(&tape, ce))
}

/// `E[log D(x, L(x))] + E[log(1 - D(G(L(x)), L(x)))]`. One Gumbel sample of
/// `L(x)` per item is shared by all three placements.
#[allow(clippy::too_many_arguments)]
pub fn unsupervised_cgan_objective<R: Rng + ?Sized>(
    d: &NetworkParams,
    g: &NetworkParams,
    l: &NetworkParams,
    kind: ConditionKind,
    x: &Tensor,
    z: Option<&Tensor>,
    tau: f64,
    rng: &mut R,
) -> Result<f64> {
    non_empty(x, "unsupervised")?;
    let mut tape = Tape::new();
    let dn = d.bind(&mut tape, false)?;
    let gn = g.bind(&mut tape, false)?;
    let ln = l.bind(&mut tape, false)?;
    let xv = tape.constant(x.clone());
    let logits = ln.forward(&mut tape, xv)?;
    let noise = sample_gumbel(tape.value(logits).shape(), rng);
    let c = label_head(&mut tape, logits, kind, LabelMode::Gumbel { tau, hard: false }, Some(&noise))?;
    let zv = z.map(|z| tape.constant(z.clone()));
    let real_logits = discriminate(&mut tape, &dn, xv, c)?;
    let fake = generate(&mut tape, &gn, c, zv)?;
    let fake_logits = discriminate(&mut tape, &dn, fake, c)?;
    let a = mean_log_d(&mut tape, real_logits)?;
    let b = mean_log_one_minus_d(&mut tape, fake_logits)?;
    Ok(scalar(&tape, a) + scalar(&tape, b))
}

/// Conditions drawn from the true prior; only the class task exposes one.
pub fn sample_prior_conditions<R: Rng + ?Sized>(task: &TaskSpec, n: usize, rng: &mut R) -> Result<Condition> {
    if !task.has_sampleable_prior() {
        return Err(Error::UnsupportedTask(
            "conditions of the label-strip task cannot be sampled without labelled data".into(),
        ));
    }
    task.sample_conditions(rng, n)
}

/// `E[log D(x, L(x))] + E[log(1 - D(G(c), c))]` with `c` drawn from the true
/// prior (class task only).
#[allow(clippy::too_many_arguments)]
pub fn conditional_sampling_objective<R: Rng + ?Sized>(
    d: &NetworkParams,
    g: &NetworkParams,
    l: &NetworkParams,
    task: &TaskSpec,
    x: &Tensor,
    z: Option<&Tensor>,
    tau: f64,
    rng: &mut R,
) -> Result<f64> {
    non_empty(x, "unsupervised")?;
    let kind = task.condition_kind();
    let n_fake = z.map_or(x.shape()[0], |z| z.shape()[0]);
    let prior_c = sample_prior_conditions(task, n_fake, rng)?;
    let mut tape = Tape::new();
    let dn = d.bind(&mut tape, false)?;
    let gn = g.bind(&mut tape, false)?;
    let ln = l.bind(&mut tape, false)?;
    let xv = tape.constant(x.clone());
    let logits = ln.forward(&mut tape, xv)?;
    let noise = sample_gumbel(tape.value(logits).shape(), rng);
    let c = label_head(&mut tape, logits, kind, LabelMode::Gumbel { tau, hard: false }, Some(&noise))?;
    let real_logits = discriminate(&mut tape, &dn, xv, c)?;
    let cp = tape.constant(prior_c.values().clone());
    let zv = z.map(|z| tape.constant(z.clone()));
    let fake = generate(&mut tape, &gn, cp, zv)?;
    let fake_logits = discriminate(&mut tape, &dn, fake, cp)?;
    let a = mean_log_d(&mut tape, real_logits)?;
    let b = mean_log_one_minus_d(&mut tape, fake_logits)?;
    Ok(scalar(&tape, a) + scalar(&tape, b))
}
