//! Finite-difference verification of every tape op and of the full
//! adversarial composite `D(G(L(x)), L(x))` with frozen Gumbel noise.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{finite_diff_check, Bindings, LeafVars, Tape, Tensor, Var};
use crate::error::Result;
use crate::nets::{init_params, label_head, sample_gumbel, ConditionKind, LabelMode, NetworkParams, Role};
use crate::objectives::{discriminate, generate, mean_log_d, mean_log_one_minus_d};

pub const FD_EPS: f64 = 1e-5;
pub const OP_TOLERANCE: f64 = 1e-5;
pub const COMPOSITE_TOLERANCE: f64 = 1e-4;

#[derive(Clone, Debug, PartialEq)]
pub struct OpReport {
    pub op: &'static str,
    pub seeds: u64,
    pub max_error: f64,
}

impl OpReport {
    pub fn passed(&self) -> bool {
        self.max_error < OP_TOLERANCE
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradcheckReport {
    pub ops: Vec<OpReport>,
    pub composite_seeds: u64,
    pub composite_max_error: f64,
}

impl GradcheckReport {
    pub fn passed(&self) -> bool {
        self.ops.iter().all(OpReport::passed) && self.composite_max_error < COMPOSITE_TOLERANCE
    }
}

fn uniform(rng: &mut ChaCha8Rng, shape: &[usize], lo: f64, hi: f64) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.random_range(lo..hi)).collect()).expect("sized")
}

/// Uniform in `±[margin, hi]`, keeping entries away from a kink at zero.
fn away_from_zero(rng: &mut ChaCha8Rng, shape: &[usize], margin: f64, hi: f64) -> Tensor {
    let n = shape.iter().product();
    let data = (0..n)
        .map(|_| {
            let v = rng.random_range(margin..hi);
            if rng.random::<bool>() {
                v
            } else {
                -v
            }
        })
        .collect();
    Tensor::new(shape.to_vec(), data).expect("sized")
}

/// Contracts `v` with fixed random weights so every output entry carries a
/// distinct upstream gradient.
fn weighted_sum(tape: &mut Tape, v: Var, w: &Tensor) -> Result<Var> {
    let wv = tape.constant(w.clone());
    let p = tape.mul(v, wv)?;
    Ok(tape.sum(p))
}

type Expr = Box<dyn Fn(&mut Tape, &LeafVars) -> Result<Var>>;

struct Case {
    bindings: Bindings,
    expr: Expr,
}

fn bind(pairs: Vec<(&str, Tensor)>) -> Bindings {
    pairs.into_iter().map(|(n, t)| (n.to_string(), t)).collect()
}

/// Scalar expression `Σ w ⊙ f(leaves)` for a single op `f`.
fn unary_case(
    rng: &mut ChaCha8Rng,
    x: Tensor,
    out_shape: &[usize],
    f: impl Fn(&mut Tape, Var) -> Result<Var> + 'static,
) -> Case {
    let w = uniform(rng, out_shape, -1.0, 1.0);
    Case {
        bindings: bind(vec![("x", x)]),
        expr: Box::new(move |t, v| {
            let y = f(t, v.get("x")?)?;
            weighted_sum(t, y, &w)
        }),
    }
}

fn binary_case(
    rng: &mut ChaCha8Rng,
    a: Tensor,
    b: Tensor,
    out_shape: &[usize],
    f: impl Fn(&mut Tape, Var, Var) -> Result<Var> + 'static,
) -> Case {
    let w = uniform(rng, out_shape, -1.0, 1.0);
    Case {
        bindings: bind(vec![("a", a), ("b", b)]),
        expr: Box::new(move |t, v| {
            let y = f(t, v.get("a")?, v.get("b")?)?;
            weighted_sum(t, y, &w)
        }),
    }
}

pub const OP_NAMES: &[&str] = &[
    "matmul",
    "add",
    "add_broadcast",
    "sub",
    "sub_broadcast",
    "mul",
    "mul_broadcast",
    "scale",
    "add_scalar",
    "one_minus",
    "neg",
    "tanh",
    "sigmoid",
    "relu",
    "exp",
    "log",
    "clamp",
    "softmax",
    "log_softmax",
    "mean_batch",
    "sum",
    "mean",
    "sum_last",
    "concat",
    "slice",
    "reshape",
    "mlp",
];

fn op_case(op: &str, rng: &mut ChaCha8Rng) -> Case {
    let m = rng.random_range(1..=4);
    let n = rng.random_range(2..=5);
    let s = [m, n];
    match op {
        "matmul" => {
            let k = rng.random_range(1..=4);
            let (a, b) = (uniform(rng, &[m, k], -1.0, 1.0), uniform(rng, &[k, n], -1.0, 1.0));
            binary_case(rng, a, b, &s, |t, a, b| t.matmul(a, b))
        }
        "add" | "sub" | "mul" => {
            let (a, b) = (uniform(rng, &s, -2.0, 2.0), uniform(rng, &s, -2.0, 2.0));
            match op {
                "add" => binary_case(rng, a, b, &s, |t, a, b| t.add(a, b)),
                "sub" => binary_case(rng, a, b, &s, |t, a, b| t.sub(a, b)),
                _ => binary_case(rng, a, b, &s, |t, a, b| t.mul(a, b)),
            }
        }
        "add_broadcast" => {
            let (a, b) = (uniform(rng, &s, -2.0, 2.0), uniform(rng, &[n], -2.0, 2.0));
            binary_case(rng, a, b, &s, |t, a, b| t.add(a, b))
        }
        "sub_broadcast" => {
            let (a, b) = (uniform(rng, &[n], -2.0, 2.0), uniform(rng, &s, -2.0, 2.0));
            binary_case(rng, a, b, &s, |t, a, b| t.sub(a, b))
        }
        "mul_broadcast" => {
            let (a, b) = (uniform(rng, &s, -2.0, 2.0), uniform(rng, &[n], -2.0, 2.0));
            binary_case(rng, a, b, &s, |t, a, b| t.mul(a, b))
        }
        "scale" => {
            let c = rng.random_range(-3.0..3.0);
            let x = uniform(rng, &s, -2.0, 2.0);
            unary_case(rng, x, &s, move |t, x| Ok(t.scale(x, c)))
        }
        "add_scalar" => {
            let c = rng.random_range(-3.0..3.0);
            let x = uniform(rng, &s, -2.0, 2.0);
            unary_case(rng, x, &s, move |t, x| Ok(t.add_scalar(x, c)))
        }
        "one_minus" => {
            let x = uniform(rng, &s, -2.0, 2.0);
            unary_case(rng, x, &s, |t, x| Ok(t.one_minus(x)))
        }
        "neg" => {
            let x = uniform(rng, &s, -2.0, 2.0);
            unary_case(rng, x, &s, |t, x| Ok(t.neg(x)))
        }
        "tanh" => {
            let x = uniform(rng, &s, -3.0, 3.0);
            unary_case(rng, x, &s, |t, x| Ok(t.tanh(x)))
        }
        "sigmoid" => {
            let x = uniform(rng, &s, -4.0, 4.0);
            unary_case(rng, x, &s, |t, x| Ok(t.sigmoid(x)))
        }
        "relu" => {
            let x = away_from_zero(rng, &s, 0.01, 2.0);
            unary_case(rng, x, &s, |t, x| Ok(t.relu(x)))
        }
        "exp" => {
            let x = uniform(rng, &s, -2.0, 2.0);
            unary_case(rng, x, &s, |t, x| t.exp(x))
        }
        "log" => {
            let x = uniform(rng, &s, 0.1, 3.0);
            unary_case(rng, x, &s, |t, x| t.log(x))
        }
        "clamp" => {
            // entries either well inside (-0.5, 0.5) or well outside it
            let x = uniform(rng, &s, -0.45, 0.45).map(|v| if v.abs() > 0.3 { v * 3.0 } else { v });
            unary_case(rng, x, &s, |t, x| Ok(t.clamp(x, -0.5, 0.5)))
        }
        "softmax" => {
            let x = uniform(rng, &s, -3.0, 3.0);
            unary_case(rng, x, &s, |t, x| Ok(t.softmax(x)))
        }
        "log_softmax" => {
            let x = uniform(rng, &s, -3.0, 3.0);
            unary_case(rng, x, &s, |t, x| Ok(t.log_softmax(x)))
        }
        "mean_batch" => {
            let x = uniform(rng, &s, -2.0, 2.0);
            unary_case(rng, x, &[n], |t, x| Ok(t.mean_batch(x)))
        }
        "sum" => {
            let x = uniform(rng, &s, -2.0, 2.0);
            unary_case(rng, x, &[1], |t, x| Ok(t.sum(x)))
        }
        "mean" => {
            let x = uniform(rng, &s, -2.0, 2.0);
            unary_case(rng, x, &[1], |t, x| Ok(t.mean(x)))
        }
        "sum_last" => {
            let x = uniform(rng, &s, -2.0, 2.0);
            unary_case(rng, x, &[m], |t, x| Ok(t.sum_last(x)))
        }
        "concat" => {
            let k = rng.random_range(1..=3);
            let (a, b) = (uniform(rng, &s, -2.0, 2.0), uniform(rng, &[m, k], -2.0, 2.0));
            binary_case(rng, a, b, &[m, 2 * n + k], |t, a, b| t.concat(&[a, b, a]))
        }
        "slice" => {
            let lo = rng.random_range(0..n - 1);
            let hi = rng.random_range(lo + 1..=n);
            let x = uniform(rng, &s, -2.0, 2.0);
            unary_case(rng, x, &[m, hi - lo], move |t, x| t.slice(x, lo, hi))
        }
        "reshape" => {
            let x = uniform(rng, &s, -2.0, 2.0);
            unary_case(rng, x, &[n, m], move |t, x| t.reshape(x, &[n, m]))
        }
        "mlp" => {
            let h = rng.random_range(2..=6);
            let b = bind(vec![
                ("x", uniform(rng, &s, -1.0, 1.0)),
                ("w0", uniform(rng, &[n, h], -1.0, 1.0)),
                ("b0", uniform(rng, &[h], -0.5, 0.5)),
                ("w1", uniform(rng, &[h, 1], -1.0, 1.0)),
                ("b1", uniform(rng, &[1], -0.5, 0.5)),
            ]);
            Case {
                bindings: b,
                expr: Box::new(|t, v| {
                    let z = t.matmul(v.get("x")?, v.get("w0")?)?;
                    let z = t.add(z, v.get("b0")?)?;
                    let h = t.tanh(z);
                    let o = t.matmul(h, v.get("w1")?)?;
                    let o = t.add(o, v.get("b1")?)?;
                    let o = t.sigmoid(o);
                    Ok(t.mean(o))
                }),
            }
        }
        other => panic!("unknown op case {other}"),
    }
}

fn case_error(case: &Case) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for leaf in case.bindings.keys() {
        worst = worst.max(finite_diff_check(&case.expr, &case.bindings, leaf, FD_EPS)?);
    }
    Ok(worst)
}

/// Checks one op over `seeds` random instances.
pub fn check_op(op: &'static str, seeds: u64) -> Result<OpReport> {
    let mut max_error: f64 = 0.0;
    for seed in 0..seeds {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(op.bytes().fold(0u64, |h, b| h.wrapping_mul(31).wrapping_add(b as u64)));
        max_error = max_error.max(case_error(&op_case(op, &mut rng))?);
    }
    Ok(OpReport { op, seeds, max_error })
}

/// Straight-through passes the upstream gradient unchanged: the analytic
/// gradient of `Σ w ⊙ st(softmax(x))` must equal the finite-difference
/// gradient of the soft path `Σ w ⊙ softmax(x)`.
pub fn check_straight_through(seeds: u64) -> Result<OpReport> {
    let mut max_error: f64 = 0.0;
    for seed in 0..seeds {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s = [rng.random_range(1..=4), rng.random_range(2..=5)];
        let x = uniform(&mut rng, &s, -3.0, 3.0);
        let w = uniform(&mut rng, &s, -1.0, 1.0);
        let b = bind(vec![("x", x)]);
        let hard = |t: &mut Tape, v: &LeafVars| {
            let y = t.softmax(v.get("x")?);
            let y = t.straight_through(y);
            weighted_sum(t, y, &w)
        };
        let soft = |t: &mut Tape, v: &LeafVars| {
            let y = t.softmax(v.get("x")?);
            weighted_sum(t, y, &w)
        };
        let (tape, out) = crate::autodiff::forward_eval(hard, &b)?;
        let g_hard = tape.backward(out, &["x"])?.remove("x").expect("requested");
        let (tape, out) = crate::autodiff::forward_eval(soft, &b)?;
        let g_soft = tape.backward(out, &["x"])?.remove("x").expect("requested");
        let analytic_vs_soft = g_hard
            .data()
            .iter()
            .zip(g_soft.data())
            .map(|(a, b)| (a - b).abs() / a.abs().max(1.0))
            .fold(0.0, f64::max);
        max_error = max_error
            .max(analytic_vs_soft)
            .max(finite_diff_check(soft, &b, "x", FD_EPS)?);
    }
    Ok(OpReport {
        op: "straight_through",
        seeds,
        max_error,
    })
}

/// Small class-strip networks: 4 cells, 3 labels, latent width 2.
pub struct CompositeFixture {
    pub kind: ConditionKind,
    pub generator: NetworkParams,
    pub discriminator: NetworkParams,
    pub labeller: NetworkParams,
    pub x: Tensor,
    pub z: Tensor,
    pub gumbel: Tensor,
    pub tau: f64,
}

pub fn composite_fixture(seed: u64) -> Result<CompositeFixture> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(0xC0);
    let kind = ConditionKind::Grid { cells: 4, labels: 3 };
    let flat = kind.flat_dim();
    let batch = 3;
    Ok(CompositeFixture {
        kind,
        generator: init_params(&[flat + 2, 8, 4], Role::Generator, &mut rng)?,
        discriminator: init_params(&[4 + flat, 8, 1], Role::Discriminator, &mut rng)?,
        labeller: init_params(&[4, 8, flat], Role::Labeller, &mut rng)?,
        x: uniform(&mut rng, &[batch, 4], -1.5, 1.5),
        z: uniform(&mut rng, &[batch, 2], -1.0, 1.0),
        gumbel: sample_gumbel(&[batch, flat], &mut rng),
        tau: rng.random_range(0.5..1.5),
    })
}

/// `mean log D(x, L(x)) + mean log(1 - D(G(L(x), z), L(x)))` with every
/// parameter of all three networks as a leaf.
pub fn composite_expr(f: &CompositeFixture) -> impl Fn(&mut Tape, &LeafVars) -> Result<Var> + '_ {
    move |t, v| {
        let l = f.labeller.bind_registered(v)?;
        let g = f.generator.bind_registered(v)?;
        let d = f.discriminator.bind_registered(v)?;
        let x = t.constant(f.x.clone());
        let z = t.constant(f.z.clone());
        let logits = l.forward(t, x)?;
        let c = label_head(t, logits, f.kind, LabelMode::Gumbel { tau: f.tau, hard: false }, Some(&f.gumbel))?;
        let real = discriminate(t, &d, x, c)?;
        let fake_x = generate(t, &g, c, Some(z))?;
        let fake = discriminate(t, &d, fake_x, c)?;
        let a = mean_log_d(t, real)?;
        let b = mean_log_one_minus_d(t, fake)?;
        t.add(a, b)
    }
}

pub fn composite_bindings(f: &CompositeFixture) -> Bindings {
    let mut b = f.labeller.bindings();
    b.extend(f.generator.bindings());
    b.extend(f.discriminator.bindings());
    b
}

pub fn check_composite(seed: u64) -> Result<f64> {
    let f = composite_fixture(seed)?;
    let b = composite_bindings(&f);
    let expr = composite_expr(&f);
    let mut worst: f64 = 0.0;
    for leaf in b.keys() {
        worst = worst.max(finite_diff_check(&expr, &b, leaf, FD_EPS)?);
    }
    Ok(worst)
}

/// Full suite: every op over `op_seeds` seeds and the composite over
/// `composite_seeds` seeds.
pub fn run_gradcheck(op_seeds: u64, composite_seeds: u64) -> Result<GradcheckReport> {
    let mut ops = OP_NAMES
        .iter()
        .map(|op| check_op(op, op_seeds))
        .collect::<Result<Vec<_>>>()?;
    ops.push(check_straight_through(op_seeds)?);
    let mut composite_max_error: f64 = 0.0;
    for seed in 0..composite_seeds {
        composite_max_error = composite_max_error.max(check_composite(seed)?);
    }
    Ok(GradcheckReport {
        ops,
        composite_seeds,
        composite_max_error,
    })
}
