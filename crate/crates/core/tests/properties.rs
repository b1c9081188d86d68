//! Property tests for the invariants that hold across all inputs.

use std::sync::Arc;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use s2cgan::autodiff::{forward_eval, Bindings, LeafVars, Tape, Tensor, Var};
use s2cgan::checkpoint::{decode_checkpoint, encode_checkpoint, Checkpoint};
use s2cgan::config::{ExperimentConfig, TaskKind};
use s2cgan::data::{bayes_oracle_label, make_splits, ChainTask, RingTask, TaskSpec};
use s2cgan::error::Result;
use s2cgan::gradcheck::{check_op, OP_NAMES, OP_TOLERANCE};
use s2cgan::inference::{infer_two_pass, InferenceRequest, NoiseMode};
use s2cgan::metrics::{mmd_rbf, score_labels};
use s2cgan::nets::{
    discriminator_forward, generator_forward, init_params, label_head, labeller_forward, sample_gumbel, Condition,
    ConditionKind, LabelMode, NetworkParams, Role,
};
use s2cgan::objectives::{
    discriminate, full_objective, generate, mean_log_d, mean_log_one_minus_d, supervised_cgan_objective,
    unsupervised_cgan_objective,
};
use s2cgan::oracle::{
    enumerate_consistent_instance, enumerate_non_bayes_instance, induced_label_marginal, verify_marginal_consequence,
};
use s2cgan::trainer::{sample_batches, train_step, AdamState, TrainState};

fn tensor(rng: &mut ChaCha8Rng, shape: &[usize], scale: f64) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.random_range(-scale..scale)).collect()).unwrap()
}

fn grad(expr: impl Fn(&mut Tape, &LeafVars) -> Result<Var>, b: &Bindings, leaf: &str) -> Tensor {
    let (tape, out) = forward_eval(expr, b).unwrap();
    tape.backward(out, &[leaf]).unwrap().remove(leaf).unwrap()
}

#[test]
fn every_op_matches_finite_differences_over_100_seeds() {
    for op in OP_NAMES {
        let r = check_op(op, 100).unwrap();
        assert!(r.max_error < OP_TOLERANCE, "{r:?}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn softmax_rows_are_positive_and_sum_to_one(seed in any::<u64>(), rows in 1usize..6, cols in 1usize..8, scale in 0.1f64..30.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let b: Bindings = [("x".to_string(), tensor(&mut rng, &[rows, cols], scale))].into();
        let (tape, out) = forward_eval(|t, v| Ok(t.softmax(v.get("x")?)), &b).unwrap();
        let y = tape.value(out);
        for r in 0..rows {
            let row = y.row(r);
            prop_assert!(row.iter().all(|p| *p > 0.0));
            prop_assert!((row.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn gradients_are_linear(seed in any::<u64>(), a in -3.0f64..3.0, c in -3.0f64..3.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let b: Bindings = [
            ("x".to_string(), tensor(&mut rng, &[3, 4], 1.0)),
            ("w".to_string(), tensor(&mut rng, &[4, 2], 1.0)),
        ]
        .into();
        let f = |t: &mut Tape, v: &LeafVars| {
            let m = t.matmul(v.get("x")?, v.get("w")?)?;
            let s = t.sigmoid(m);
            Ok(t.sum(s))
        };
        let g = |t: &mut Tape, v: &LeafVars| {
            let h = t.tanh(v.get("x")?);
            let sq = t.mul(h, h)?;
            Ok(t.mean(sq))
        };
        let combo = |t: &mut Tape, v: &LeafVars| {
            let fv = f(t, v)?;
            let gv = g(t, v)?;
            let fa = t.scale(fv, a);
            let gc = t.scale(gv, c);
            t.add(fa, gc)
        };
        let (gf, gg, gcombo) = (grad(f, &b, "x"), grad(g, &b, "x"), grad(combo, &b, "x"));
        for i in 0..gf.numel() {
            let expected = a * gf.data()[i] + c * gg.data()[i];
            prop_assert!((gcombo.data()[i] - expected).abs() <= 1e-12 * expected.abs().max(1.0));
        }
    }

    #[test]
    fn forward_and_backward_are_bit_deterministic(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let b: Bindings = [
            ("x".to_string(), tensor(&mut rng, &[5, 3], 2.0)),
            ("w".to_string(), tensor(&mut rng, &[3, 3], 2.0)),
        ]
        .into();
        let expr = |t: &mut Tape, v: &LeafVars| {
            let m = t.matmul(v.get("x")?, v.get("w")?)?;
            let l = t.log_softmax(m);
            Ok(t.mean(l))
        };
        let run = || {
            let (tape, out) = forward_eval(expr, &b).unwrap();
            let g = tape.backward(out, &["x", "w"]).unwrap();
            (tape.value(out).data()[0].to_bits(), g)
        };
        let (v1, g1) = run();
        let (v2, g2) = run();
        prop_assert_eq!(v1, v2);
        for (k, t) in &g1 {
            let bits = |t: &Tensor| t.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
            prop_assert_eq!(bits(t), bits(&g2[k]));
        }
    }

    #[test]
    fn labeller_outputs_are_valid_conditions(seed in any::<u64>(), tau in 0.05f64..5.0, hard in any::<bool>(), grid in any::<bool>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (dim, kind) = if grid {
            (6, ConditionKind::Grid { cells: 6, labels: 3 })
        } else {
            (2, ConditionKind::Class { classes: 5 })
        };
        let l = init_params(&[dim, 8, kind.flat_dim()], Role::Labeller, &mut rng).unwrap();
        let x = tensor(&mut rng, &[7, dim], 3.0);
        for mode in [LabelMode::Soft, LabelMode::Hard, LabelMode::Gumbel { tau, hard }] {
            let c = labeller_forward(&l, &x, kind, mode, &mut rng).unwrap();
            prop_assert!(c.validate().is_ok());
            prop_assert_eq!(c.values().shape(), &[7, kind.flat_dim()]);
        }
    }

    #[test]
    fn two_pass_keeps_condition_kind_and_shape(seed in any::<u64>(), batch in 1usize..6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let kind = ConditionKind::Grid { cells: 5, labels: 3 };
        let g = init_params(&[kind.flat_dim() + 2, 8, 5], Role::Generator, &mut rng).unwrap();
        let l = init_params(&[5, 8, kind.flat_dim()], Role::Labeller, &mut rng).unwrap();
        let labels: Vec<Vec<usize>> = (0..batch).map(|_| (0..5).map(|_| rng.random_range(0..3)).collect()).collect();
        let c = Condition::from_labels(kind, &labels).unwrap();
        let req = InferenceRequest::new(c, NoiseMode::Fresh, 2).unwrap();
        let (x, c_syn) = infer_two_pass(&g, &l, &req, &mut rng).unwrap();
        prop_assert_eq!(x.shape(), &[batch, 5]);
        prop_assert_eq!(c_syn.kind(), kind);
        prop_assert!(c_syn.is_hard());
        prop_assert_eq!(c_syn.values().shape(), &[batch, kind.flat_dim()]);
    }

    #[test]
    fn objectives_are_finite_and_scale_with_lambdas(seed in any::<u64>(), s in 0.01f64..100.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let kind = ConditionKind::Class { classes: 3 };
        let g = init_params(&[3 + 2, 8, 2], Role::Generator, &mut rng).unwrap();
        let d = init_params(&[2 + 3, 8, 1], Role::Discriminator, &mut rng).unwrap();
        let l = init_params(&[2, 8, 3], Role::Labeller, &mut rng).unwrap();
        // Large inputs push logits far into the clamp region.
        let x = tensor(&mut rng, &[6, 2], 1e3);
        let labels: Vec<Vec<usize>> = (0..6).map(|_| vec![rng.random_range(0..3)]).collect();
        let c = Condition::from_labels(kind, &labels).unwrap();
        let z = tensor(&mut rng, &[6, 2], 1.0);
        let vs = supervised_cgan_objective(&d, &g, &x, &c, Some(&z)).unwrap();
        let vu = unsupervised_cgan_objective(&d, &g, &l, kind, &x, Some(&z), 1.0, &mut rng).unwrap();
        prop_assert!(vs.is_finite() && vu.is_finite());
        let lambdas = [rng.random_range(0.0..2.0), rng.random_range(0.0..2.0), rng.random_range(0.0..2.0)];
        let base = full_objective(vs, 0.7, vu, lambdas).unwrap();
        let scaled = full_objective(vs, 0.7, vu, lambdas.map(|v| v * s)).unwrap();
        prop_assert!((scaled.v_full - s * base.v_full).abs() <= 1e-12 * (s * base.v_full).abs().max(1.0));
    }

    #[test]
    fn splits_are_disjoint_sized_and_deterministic(seed in any::<u64>(), n_sup in 1usize..20, n_test in 0usize..30, extra in 0usize..40, chain in any::<bool>()) {
        let task = if chain { TaskSpec::Chain(ChainTask::default()) } else { TaskSpec::Ring(RingTask::default()) };
        let n_total = n_sup + n_test + extra;
        let a = make_splits(&task, n_total, n_sup, n_test, seed).unwrap();
        let b = make_splits(&task, n_total, n_sup, n_test, seed).unwrap();
        prop_assert_eq!(&a.supervised, &b.supervised);
        prop_assert_eq!(&a.unsupervised, &b.unsupervised);
        prop_assert_eq!(a.supervised.len(), n_sup);
        prop_assert_eq!(a.test.len(), n_test);
        prop_assert_eq!(a.unsupervised.len(), extra);
        let mut xs: Vec<&Vec<f64>> = a.supervised.iter().map(|s| &s.x).chain(a.test.iter().map(|s| &s.x)).chain(a.unsupervised.iter()).collect();
        xs.sort_by(|p, q| p.partial_cmp(q).unwrap());
        xs.dedup();
        prop_assert_eq!(xs.len(), n_total);
    }

    #[test]
    fn induced_marginal_is_linear_in_the_labeller(seed in any::<u64>(), n in 1usize..12, k in 1usize..6, w in 0.0f64..1.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = enumerate_non_bayes_instance(n, k, &mut rng).unwrap();
        let mut b = a.clone();
        b.labeller = enumerate_non_bayes_instance(n, k, &mut rng).unwrap().labeller;
        let mut mix = a.clone();
        for x in 0..n {
            for c in 0..k {
                mix.labeller[x][c] = w * a.labeller[x][c] + (1.0 - w) * b.labeller[x][c];
            }
        }
        let (pa, pb, pm) = (
            induced_label_marginal(&a).unwrap(),
            induced_label_marginal(&b).unwrap(),
            induced_label_marginal(&mix).unwrap(),
        );
        for c in 0..k {
            prop_assert!((pm[c] - (w * pa[c] + (1.0 - w) * pb[c])).abs() <= 1e-14);
        }
    }

    #[test]
    fn config_json_round_trips(seed in any::<u64>(), task_b in any::<bool>(), l1 in 0.0f64..5.0, tau in 0.01f64..4.0, steps in 0usize..100_000, nsup in proptest::option::of(1usize..50)) {
        let mut cfg = ExperimentConfig {
            task: if task_b { TaskKind::B } else { TaskKind::A },
            lambdas: [l1, 1.0, 0.5],
            tau,
            n_supervised: nsup,
            seeds: vec![seed, seed / 3],
            ..Default::default()
        };
        cfg.optimizer.steps = Some(steps);
        let text = cfg.to_json();
        let back = ExperimentConfig::from_json_str(&text).unwrap();
        prop_assert_eq!(&back, &cfg);
        prop_assert_eq!(back.to_json(), text);
        prop_assert_eq!(back.hash(), cfg.hash());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn consistent_instances_force_the_true_marginal(seed in any::<u64>(), n in 1usize..=12, k in 1usize..=6, non_bayes in any::<bool>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let inst = if non_bayes {
            enumerate_non_bayes_instance(n, k, &mut rng).unwrap()
        } else {
            enumerate_consistent_instance(n, k, &mut rng).unwrap()
        };
        let r = verify_marginal_consequence(&inst, 1e-12).unwrap();
        prop_assert!(r.holds, "{:?}", r);
        prop_assert!(r.max_gap() <= 1e-10);
    }
}

fn random_network(rng: &mut ChaCha8Rng, widths: &[usize], role: Role) -> NetworkParams {
    init_params(widths, role, rng).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn checkpoints_round_trip_bit_exactly(seed in any::<u64>(), with_moments in any::<bool>(), h in 1usize..6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut nets = vec![
            random_network(&mut rng, &[4, h, 2], Role::Generator),
            random_network(&mut rng, &[6, h, h, 1], Role::Discriminator),
            random_network(&mut rng, &[2, h, 4], Role::Labeller),
        ];
        // Exercise non-finite and signed-zero payloads too.
        nets[0].entries_mut()[1].1.data_mut()[0] = -0.0;
        nets[1].entries_mut()[1].1.data_mut()[0] = f64::INFINITY;
        let moments = with_moments.then(|| {
            nets.iter()
                .map(|n| {
                    let mut m = AdamState::new(n);
                    m.t = rng.random_range(0..1000);
                    for t in m.first.iter_mut().chain(m.second.iter_mut()) {
                        t.data_mut().iter_mut().for_each(|v| *v = rng.random());
                    }
                    m
                })
                .collect()
        });
        let mut hash = [0u8; 32];
        rng.fill(&mut hash);
        let ckpt = Checkpoint { networks: nets, moments, config_hash: hash };
        let bytes = encode_checkpoint(&ckpt).unwrap();
        let back = decode_checkpoint(&bytes).unwrap();
        prop_assert_eq!(encode_checkpoint(&back).unwrap(), bytes);
        for (a, b) in ckpt.networks.iter().zip(&back.networks) {
            for ((na, ta), (nb, tb)) in a.entries().iter().zip(b.entries()) {
                prop_assert_eq!(na, nb);
                let bits = |t: &Tensor| t.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
                prop_assert_eq!(bits(ta), bits(tb));
            }
        }
    }
}

/// Plain gradient ascent on `λ1 V_sup + λ3 V_unsup` over D only, with G, L,
/// noise and Gumbel draws frozen; returns the objective before and after.
fn d_ascent(seed: u64, step: f64) -> (f64, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let kind = ConditionKind::Class { classes: 4 };
    let g = random_network(&mut rng, &[4 + 2, 16, 2], Role::Generator);
    let mut d = random_network(&mut rng, &[2 + 4, 16, 1], Role::Discriminator);
    let l = random_network(&mut rng, &[2, 16, 4], Role::Labeller);
    let xs = tensor(&mut rng, &[8, 2], 2.5);
    let labels: Vec<Vec<usize>> = (0..8).map(|_| vec![rng.random_range(0..4)]).collect();
    let cs = Condition::from_labels(kind, &labels).unwrap();
    let xu = tensor(&mut rng, &[16, 2], 2.5);
    let (zs, zu) = (tensor(&mut rng, &[8, 2], 1.0), tensor(&mut rng, &[16, 2], 1.0));
    let gumbel = sample_gumbel(&[16, 4], &mut rng);

    let objective = |d: &NetworkParams, trainable: bool| -> (f64, Option<Vec<Tensor>>) {
        let mut t = Tape::new();
        let dn = d.bind(&mut t, trainable).unwrap();
        let gn = g.bind(&mut t, false).unwrap();
        let ln = l.bind(&mut t, false).unwrap();
        let (xsv, csv) = (t.constant(xs.clone()), t.constant(cs.values().clone()));
        let zsv = t.constant(zs.clone());
        let real = discriminate(&mut t, &dn, xsv, csv).unwrap();
        let fake_x = generate(&mut t, &gn, csv, Some(zsv)).unwrap();
        let fake = discriminate(&mut t, &dn, fake_x, csv).unwrap();
        let a = mean_log_d(&mut t, real).unwrap();
        let b = mean_log_one_minus_d(&mut t, fake).unwrap();
        let v_sup = t.add(a, b).unwrap();
        let xuv = t.constant(xu.clone());
        let logits = ln.forward(&mut t, xuv).unwrap();
        let c = label_head(&mut t, logits, kind, LabelMode::Gumbel { tau: 1.0, hard: false }, Some(&gumbel)).unwrap();
        let zuv = t.constant(zu.clone());
        let real = discriminate(&mut t, &dn, xuv, c).unwrap();
        let fake_x = generate(&mut t, &gn, c, Some(zuv)).unwrap();
        let fake = discriminate(&mut t, &dn, fake_x, c).unwrap();
        let a = mean_log_d(&mut t, real).unwrap();
        let b = mean_log_one_minus_d(&mut t, fake).unwrap();
        let v_unsup = t.add(a, b).unwrap();
        let total = t.add(v_sup, v_unsup).unwrap();
        let value = t.value(total).item().unwrap();
        let grads = trainable.then(|| {
            let names = d.leaf_names();
            let refs: Vec<&str> = names.iter().map(String::as_str).collect();
            let mut g = t.backward(total, &refs).unwrap();
            names.iter().map(|n| g.remove(n).unwrap()).collect()
        });
        (value, grads)
    };
    let (before, grads) = objective(&d, true);
    for ((_, p), g) in d.entries_mut().iter_mut().zip(grads.unwrap()) {
        p.data_mut().iter_mut().zip(g.data()).for_each(|(p, g)| *p += step * g);
    }
    let (after, _) = objective(&d, false);
    (before, after)
}

#[test]
fn discriminator_ascent_step_does_not_decrease_the_objective() {
    let ok = (0..200u64)
        .filter(|&s| {
            let (before, after) = d_ascent(s, 1e-4);
            after >= before
        })
        .count();
    assert!(ok >= 190, "{ok}/200");
}

/// Linear labeller whose logits are `1e4 · μ_c · x`: its argmax is the
/// nearest ring mean, so Gumbel noise never changes the label.
fn ring_oracle_labeller(task: &RingTask) -> NetworkParams {
    let k = task.classes;
    let mut w = Tensor::zeros(&[2, k]);
    for c in 0..k {
        let mu = task.mean(c);
        w.data_mut()[c] = 1e4 * mu[0];
        w.data_mut()[k + c] = 1e4 * mu[1];
    }
    NetworkParams::from_entries(
        Role::Labeller,
        vec![2, k],
        vec![("w0".into(), w), ("b0".into(), Tensor::zeros(&[k]))],
    )
    .unwrap()
}

#[test]
fn oracle_labeller_makes_supervised_and_unsupervised_estimates_agree() {
    let task = RingTask {
        classes: 4,
        ..Default::default()
    };
    let spec = TaskSpec::Ring(task.clone());
    let kind = spec.condition_kind();
    let l = ring_oracle_labeller(&task);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let g = random_network(&mut rng, &[4 + 2, 32, 2], Role::Generator);
    let d = random_network(&mut rng, &[2 + 4, 32, 1], Role::Discriminator);

    // Per-item estimates so the spread of each estimator can be measured.
    let samples = spec.sample(&mut rng, 4000);
    let mut sup = Vec::new();
    let mut unsup = Vec::new();
    for s in &samples {
        let x = Tensor::from_rows(&[s.x.clone()]).unwrap();
        let c = Condition::from_labels(kind, &[s.label.clone()]).unwrap();
        let z = tensor(&mut rng, &[1, 2], 1.0);
        let mut r1 = rng.clone();
        sup.push(supervised_cgan_objective(&d, &g, &x, &c, Some(&z)).unwrap());
        unsup.push(unsupervised_cgan_objective(&d, &g, &l, kind, &x, Some(&z), 1.0, &mut r1).unwrap());
        rng = r1;
    }
    let stats = |v: &[f64]| {
        let n = v.len() as f64;
        let m = v.iter().sum::<f64>() / n;
        let var = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
        (m, (var / n).sqrt())
    };
    let ((ms, ses), (mu, seu)) = (stats(&sup), stats(&unsup));
    let se = (ses * ses + seu * seu).sqrt();
    assert!((ms - mu).abs() <= 3.0 * se.max(1e-12), "{ms} vs {mu} (se {se})");
}

#[test]
fn referee_scores_ground_truth_renders_highly() {
    for task in [TaskSpec::Ring(RingTask::default()), TaskSpec::Chain(ChainTask::default())] {
        let split = make_splits(&task, 1500, 5, 500, 3).unwrap();
        let pred: Vec<Vec<usize>> = split.test.iter().map(|s| bayes_oracle_label(&task, &s.x)).collect();
        let truth: Vec<Vec<usize>> = split.test.iter().map(|s| s.label.clone()).collect();
        let acc = score_labels(&pred, &truth, task.condition_kind().labels()).unwrap().accuracy;
        assert!(acc >= 0.97, "{acc}");
    }
}

#[test]
fn mmd_prefers_real_samples_over_an_untrained_generator() {
    let task = TaskSpec::Ring(RingTask::default());
    let kind = task.condition_kind();
    let wins = (0..40u64)
        .filter(|&seed| {
            let split = make_splits(&task, 1300, 8, 400, seed).unwrap();
            let test = split.test_x().unwrap();
            let rows: Vec<Vec<f64>> = split.unsupervised.iter().take(400).cloned().collect();
            let train = Tensor::from_rows(&rows).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let g = random_network(&mut rng, &[kind.flat_dim() + 4, 128, 128, 2], Role::Generator);
            let c = split.test_condition().unwrap();
            let z = tensor(&mut rng, &[400, 4], 1.0);
            let fake = generator_forward(&g, &c, Some(&z)).unwrap();
            let bw = [0.5, 1.0, 2.0];
            mmd_rbf(&test, &train, &bw).unwrap() <= mmd_rbf(&test, &fake, &bw).unwrap()
        })
        .count();
    assert!(wins >= 38, "{wins}/40");
}

fn tiny_state(seed: u64, lambdas: [f64; 3]) -> (TrainState, s2cgan::data::DatasetSplit) {
    let mut cfg = ExperimentConfig {
        task: TaskKind::A,
        n_total: Some(200),
        n_test: 20,
        warmup_steps: 0,
        lambdas,
        ..Default::default()
    };
    cfg.arch.generator_hidden = vec![16];
    cfg.arch.discriminator_hidden = vec![16];
    cfg.arch.labeller_hidden = vec![16];
    cfg.optimizer.b_unsup = 16;
    let split = s2cgan::trainer::build_split(&cfg, seed).unwrap();
    (TrainState::init(Arc::new(cfg), seed).unwrap(), split)
}

#[test]
fn adversarial_term_alone_moves_the_labeller() {
    let moved = (0..100u64)
        .filter(|&seed| {
            let (mut state, split) = tiny_state(seed, [1.0, 0.0, 1.0]);
            let before = state.labeller.clone();
            let (sup, unsup) = sample_batches(&mut state, &split).unwrap();
            train_step(&mut state, &sup, unsup.as_ref()).unwrap();
            state.labeller != before
        })
        .count();
    assert!(moved >= 99, "{moved}/100");
}

#[test]
fn discriminator_outputs_one_logit_per_item() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let kind = ConditionKind::Class { classes: 3 };
    let d = random_network(&mut rng, &[2 + 3, 8, 1], Role::Discriminator);
    let x = tensor(&mut rng, &[9, 2], 1.0);
    let labels: Vec<Vec<usize>> = (0..9).map(|i| vec![i % 3]).collect();
    let c = Condition::from_labels(kind, &labels).unwrap();
    assert_eq!(discriminator_forward(&d, &x, &c).unwrap().shape(), &[9, 1]);
}
