//! Evaluation metrics and the two reference baselines.
//!
//! Synthesized samples are scored by the Bayes oracle of the task, a fixed
//! referee that never sees training.

use std::path::PathBuf;
use std::sync::Arc;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{Tape, Tensor};
use crate::config::ExperimentConfig;
use crate::data::{bayes_oracle_label, DatasetSplit, TaskSpec};
use crate::error::{Error, Result};
use crate::inference::{infer_one_pass, infer_two_pass, InferenceRequest, NoiseMode};
use crate::nets::{labeller_forward, Condition, LabelMode, NetworkParams};
use crate::objectives::{
    cross_entropy, full_objective, labeller_supervised_loss, supervised_cgan_objective, unsupervised_cgan_objective,
    ObjectiveBreakdown,
};
use crate::trainer::{
    adam_update, build_split, rng_stream, run_training, TrainOutcome, TrainState, STREAM_EVAL, STREAM_PRETRAIN,
    STREAM_SNAPSHOT,
};

/// One evaluation point of a run.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricsRecord {
    pub step: u64,
    pub breakdown: ObjectiveBreakdown,
    /// Whether an unlabelled batch entered the step (otherwise `v_unsup` is not logged).
    pub has_unsup: bool,
    pub label_agreement: f64,
    /// Per label; `None` where the label is absent from the reference.
    pub per_class_iou: Vec<Option<f64>>,
    pub mean_iou: f64,
    pub mmd2: f64,
    pub marginal_tv: Option<f64>,
    pub pseudo_label_acc: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Agreement {
    pub accuracy: f64,
    pub per_class_iou: Vec<Option<f64>>,
    pub mean_iou: f64,
}

/// Scores predicted label vectors against references: per-cell accuracy and
/// IoU per label pooled over all cells of all items.
pub fn score_labels(predicted: &[Vec<usize>], reference: &[Vec<usize>], labels: usize) -> Result<Agreement> {
    if reference.is_empty() || predicted.len() != reference.len() {
        return Err(Error::invalid("label scoring needs equally many non-empty predictions and references"));
    }
    let mut inter = vec![0usize; labels];
    let mut union = vec![0usize; labels];
    let mut present = vec![false; labels];
    let (mut hits, mut cells) = (0usize, 0usize);
    for (p, r) in predicted.iter().zip(reference) {
        if p.len() != r.len() {
            return Err(Error::invalid("prediction and reference differ in cell count"));
        }
        for (&a, &b) in p.iter().zip(r) {
            cells += 1;
            present[b] = true;
            if a == b {
                hits += 1;
                inter[a] += 1;
                union[a] += 1;
            } else {
                union[a] += 1;
                union[b] += 1;
            }
        }
    }
    let per_class_iou: Vec<Option<f64>> = (0..labels)
        .map(|l| present[l].then(|| inter[l] as f64 / union[l] as f64))
        .collect();
    let present_ious: Vec<f64> = per_class_iou.iter().flatten().copied().collect();
    Ok(Agreement {
        accuracy: hits as f64 / cells as f64,
        mean_iou: present_ious.iter().sum::<f64>() / present_ious.len() as f64,
        per_class_iou,
    })
}

/// Synthesizes one sample per test condition and scores the oracle's
/// relabelling against the input condition. Returns the synthesized batch too.
pub fn label_agreement_with_samples<R: Rng + ?Sized>(
    g: &NetworkParams,
    l: &NetworkParams,
    task: &TaskSpec,
    conditions: &Condition,
    passes: usize,
    rng: &mut R,
) -> Result<(Agreement, Tensor)> {
    if conditions.batch() == 0 {
        return Err(Error::invalid("label agreement needs a non-empty test set"));
    }
    let req = InferenceRequest::new(conditions.clone(), NoiseMode::Fresh, passes)?;
    let x = if passes == 2 {
        infer_two_pass(g, l, &req, rng)?.0
    } else {
        infer_one_pass(g, &req, rng)?
    };
    let predicted: Vec<Vec<usize>> = (0..x.rows()).map(|i| bayes_oracle_label(task, x.row(i))).collect();
    let agreement = score_labels(&predicted, &conditions.labels(), task.condition_kind().labels())?;
    Ok((agreement, x))
}

pub fn label_agreement<R: Rng + ?Sized>(
    g: &NetworkParams,
    l: &NetworkParams,
    task: &TaskSpec,
    conditions: &Condition,
    passes: usize,
    rng: &mut R,
) -> Result<Agreement> {
    label_agreement_with_samples(g, l, task, conditions, passes, rng).map(|(a, _)| a)
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Median pairwise Euclidean distance of the pooled sample.
pub fn median_pairwise_distance(x: &Tensor, y: &Tensor) -> f64 {
    let rows: Vec<&[f64]> = (0..x.rows()).map(|i| x.row(i)).chain((0..y.rows()).map(|i| y.row(i))).collect();
    let mut d = Vec::with_capacity(rows.len() * (rows.len() - 1) / 2);
    for i in 0..rows.len() {
        for j in i + 1..rows.len() {
            d.push(sq_dist(rows[i], rows[j]));
        }
    }
    if d.is_empty() {
        return 0.0;
    }
    let mid = d.len() / 2;
    let (_, m, _) = d.select_nth_unstable_by(mid, f64::total_cmp);
    m.sqrt()
}

/// Unbiased squared MMD with an RBF kernel mixture; each bandwidth is a
/// factor times the pooled median pairwise distance.
pub fn mmd_rbf(x: &Tensor, y: &Tensor, bandwidth_factors: &[f64]) -> Result<f64> {
    let (m, n) = (x.rows(), y.rows());
    if x.rank() != 2 || y.rank() != 2 || m < 2 || n < 2 {
        return Err(Error::invalid("mmd needs at least two samples on each side"));
    }
    if x.last_dim() != y.last_dim() {
        return Err(Error::shape("mmd_rbf", &[x.shape(), y.shape()]));
    }
    if bandwidth_factors.is_empty() || bandwidth_factors.iter().any(|f| !(*f > 0.0)) {
        return Err(Error::invalid("bandwidth factors must be positive"));
    }
    let med = median_pairwise_distance(x, y);
    let base = if med > 0.0 { med } else { 1.0 };
    let gammas: Vec<f64> = bandwidth_factors
        .iter()
        .map(|f| 1.0 / (2.0 * (f * base) * (f * base)))
        .collect();
    let kernel = |d2: f64| gammas.iter().map(|g| (-g * d2).exp()).sum::<f64>();

    let within = |t: &Tensor| {
        let k = t.rows();
        let mut s = 0.0;
        for i in 0..k {
            for j in i + 1..k {
                s += kernel(sq_dist(t.row(i), t.row(j)));
            }
        }
        2.0 * s / (k * (k - 1)) as f64
    };
    // The cross block is accumulated in both orders so that swapping the
    // arguments gives the identical value.
    let cross: Vec<f64> = (0..m)
        .flat_map(|i| (0..n).map(move |j| (i, j)))
        .map(|(i, j)| kernel(sq_dist(x.row(i), y.row(j))))
        .collect();
    let by_rows: f64 = (0..m).map(|i| cross[i * n..(i + 1) * n].iter().sum::<f64>()).sum();
    let by_cols: f64 = (0..n).map(|j| (0..m).map(|i| cross[i * n + j]).sum::<f64>()).sum();
    let cross_mean = (by_rows + by_cols) / (2.0 * (m * n) as f64);
    Ok(within(x) + within(y) - 2.0 * cross_mean)
}

/// Hard labels per cell for every sample row.
pub fn hard_labels(l: &NetworkParams, x: &Tensor, kind: crate::nets::ConditionKind) -> Result<Vec<Vec<usize>>> {
    let mut unused = rng_stream(0, STREAM_EVAL);
    Ok(labeller_forward(l, x, kind, LabelMode::Hard, &mut unused)?.labels())
}

/// Total-variation distance between the labeller's hard-label histogram over
/// `x` and the true label prior. For label strips the distance is taken per
/// cell against the chain's stationary law (uniform) and averaged.
pub fn label_marginal_tv(l: &NetworkParams, x: &Tensor, task: &TaskSpec) -> Result<f64> {
    if x.rank() != 2 || x.rows() == 0 {
        return Err(Error::invalid("label marginal needs a non-empty sample set"));
    }
    let kind = task.condition_kind();
    let labels = hard_labels(l, x, kind)?;
    let m = kind.labels();
    let prior = match task {
        TaskSpec::Ring(t) => t.prior(),
        TaskSpec::Chain(_) => vec![1.0 / m as f64; m],
    };
    let n = labels.len() as f64;
    let mut total = 0.0;
    for cell in 0..kind.rows() {
        let mut hist = vec![0.0; m];
        for row in &labels {
            hist[row[cell]] += 1.0;
        }
        total += 0.5 * hist.iter().zip(&prior).map(|(h, p)| (h / n - p).abs()).sum::<f64>();
    }
    Ok((total / kind.rows() as f64).clamp(0.0, 1.0))
}

fn eval_rng(seed: u64, step: u64) -> ChaCha8Rng {
    let mut rng = rng_stream(seed, STREAM_EVAL);
    rng.set_word_pos((step as u128) << 40);
    rng
}

/// Evaluates the current state on the held-out test split.
pub fn evaluate(
    state: &TrainState,
    split: &DatasetSplit,
    breakdown: ObjectiveBreakdown,
    has_unsup: bool,
) -> Result<MetricsRecord> {
    let cfg = &state.config;
    let mut rng = eval_rng(state.seed, state.step);
    let test_c = split.test_condition()?;
    let (agreement, fake) = label_agreement_with_samples(
        &state.generator,
        &state.labeller,
        &split.task,
        &test_c,
        cfg.eval_passes,
        &mut rng,
    )?;
    let mmd2 = mmd_rbf(&split.test_x()?, &fake, &cfg.mmd_bandwidths)?;
    let marginal_tv = Some(label_marginal_tv(&state.labeller, &split.all_train_x()?, &split.task)?);
    Ok(MetricsRecord {
        step: state.step,
        breakdown,
        has_unsup,
        label_agreement: agreement.accuracy,
        per_class_iou: agreement.per_class_iou,
        mean_iou: agreement.mean_iou,
        mmd2,
        marginal_tv,
        pseudo_label_acc: None,
    })
}

/// Evaluates a restored state without a training step: the objective terms
/// are recomputed on all of `S` and `U` with evaluation-stream noise.
pub fn evaluate_snapshot(state: &TrainState, split: &DatasetSplit) -> Result<MetricsRecord> {
    let cfg = &state.config;
    let mut rng = rng_stream(state.seed, STREAM_SNAPSHOT);
    rng.set_word_pos((state.step as u128) << 40);
    let noise = state.noise_spec();
    let (sx, sc) = (split.sup_x()?, split.sup_condition()?);
    let z = noise.sample(sx.rows(), &mut rng);
    let v_sup = supervised_cgan_objective(&state.discriminator, &state.generator, &sx, &sc, z.as_ref())?;
    let v_labeller = labeller_supervised_loss(&state.labeller, &sx, &sc)?;
    let has_unsup = !split.unsupervised.is_empty();
    let v_unsup = if has_unsup {
        let ux = split.unsup_x()?;
        let z = noise.sample(ux.rows(), &mut rng);
        unsupervised_cgan_objective(
            &state.discriminator,
            &state.generator,
            &state.labeller,
            split.task.condition_kind(),
            &ux,
            z.as_ref(),
            cfg.tau_at(state.step),
            &mut rng,
        )?
    } else {
        0.0
    };
    let breakdown = full_objective(v_sup, v_labeller, v_unsup, cfg.lambdas)?;
    evaluate(state, split, breakdown, has_unsup)
}

fn baseline_config(config: &ExperimentConfig, name: &str) -> ExperimentConfig {
    let mut cfg = config.clone();
    cfg.lambdas = [config.lambdas[0], 0.0, 0.0];
    cfg.output_dir = config
        .output_dir
        .as_ref()
        .map(|d| PathBuf::from(d).join(name).to_string_lossy().into_owned());
    cfg
}

/// Fully supervised reference: every training sample labelled, `λ2 = λ3 = 0`,
/// no unlabelled set.
pub fn run_baseline_full(config: &ExperimentConfig, seed: u64) -> Result<TrainOutcome> {
    let mut cfg = baseline_config(config, "full");
    cfg.n_supervised = Some(cfg.n_total() - cfg.n_test);
    cfg.validate()?;
    let cfg = Arc::new(cfg);
    let split = Arc::new(build_split(&cfg, seed)?);
    debug_assert!(split.unsupervised.is_empty());
    run_training(TrainState::init(cfg, seed)?, split, None)
}

#[derive(Clone, Debug)]
pub struct NaiveOutcome {
    pub outcome: TrainOutcome,
    /// Labels assigned to the unlabelled set, in its order.
    pub pseudo_labels: Vec<Vec<usize>>,
    pub pseudo_label_acc: f64,
}

/// Fits the labeller to `S` alone by cross-entropy.
pub fn pretrain_labeller(state: &mut TrainState, split: &DatasetSplit, steps: usize) -> Result<()> {
    let cfg = state.config.clone();
    let spec = &cfg.optimizer;
    let mut rng = rng_stream(state.seed, STREAM_PRETRAIN);
    let n = split.supervised.len();
    let b = spec.b_sup.unwrap_or(n.min(16));
    let kind = split.task.condition_kind();
    let leaves = state.labeller.leaf_names();
    let refs: Vec<&str> = leaves.iter().map(String::as_str).collect();
    for _ in 0..steps {
        let idx: Vec<usize> = if n <= b {
            (0..n).collect()
        } else {
            rand::seq::index::sample(&mut rng, n, b).into_vec()
        };
        let x = Tensor::from_rows(&idx.iter().map(|&i| split.supervised[i].x.clone()).collect::<Vec<_>>())?;
        let c = Condition::from_labels(kind, &idx.iter().map(|&i| split.supervised[i].label.clone()).collect::<Vec<_>>())?;
        let mut tape = Tape::new();
        let l = state.labeller.bind(&mut tape, true)?;
        let xv = tape.constant(x);
        let cv = tape.constant(c.values().clone());
        let logits = l.forward(&mut tape, xv)?;
        let loss = cross_entropy(&mut tape, logits, cv, kind)?;
        let grads = tape.backward(loss, &refs)?;
        state.opt_labeller.t += 1;
        let t = state.opt_labeller.t;
        for (i, entry) in state.labeller.entries_mut().iter_mut().enumerate() {
            let g = &grads[&leaves[i]];
            if !g.all_finite() {
                return Err(Error::NonFiniteGradient {
                    network: "labeller".into(),
                    step: t,
                });
            }
            adam_update(
                &mut entry.1,
                g,
                &mut state.opt_labeller.first[i],
                &mut state.opt_labeller.second[i],
                spec.lr_l,
                spec,
                t,
            )?;
        }
    }
    Ok(())
}

/// Pseudo-label baseline: pretrain the labeller on `S`, label `U` with it,
/// then train a supervised cGAN on `S` plus the pseudo-labelled `U` with the
/// labeller frozen.
pub fn run_baseline_naive(config: &ExperimentConfig, seed: u64) -> Result<NaiveOutcome> {
    let cfg = Arc::new(baseline_config(config, "naive"));
    cfg.validate()?;
    let split = build_split(&cfg, seed)?;
    let mut state = TrainState::init(cfg.clone(), seed)?;
    pretrain_labeller(&mut state, &split, cfg.naive_pretrain_steps)?;
    let kind = split.task.condition_kind();
    let pseudo_labels = if split.unsupervised.is_empty() {
        Vec::new()
    } else {
        hard_labels(&state.labeller, &split.unsup_x()?, kind)?
    };
    let pseudo_label_acc = if pseudo_labels.is_empty() {
        1.0
    } else {
        score_labels(&pseudo_labels, split.withheld_labels(), kind.labels())?.accuracy
    };
    let merged = Arc::new(split.with_pseudo_labels(&pseudo_labels)?);
    state.freeze_labeller = true;
    let outcome = run_training(state, merged, Some(pseudo_label_acc))?;
    Ok(NaiveOutcome {
        outcome,
        pseudo_labels,
        pseudo_label_acc,
    })
}
