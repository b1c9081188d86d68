//! Dense f64 tensors with eager reverse-mode differentiation.
//!
//! Expressions are closures that record onto a [`Tape`]; named leaves come
//! from a [`Bindings`] map. Broadcasting is limited to repeating one operand
//! along the other's leading (batch) axis.

mod tape;
mod tensor;

use std::collections::BTreeMap;

pub use tape::{argmax, sigmoid, GradMap, Tape, Var, LOG_CLAMP};
pub(crate) use tape::{one_hot_rows, softmax_in_place};
pub use tensor::Tensor;

use crate::error::{Error, Result};

/// Leaf name to value.
pub type Bindings = BTreeMap<String, Tensor>;

/// Leaf name to the node it was registered as.
#[derive(Clone, Debug, Default)]
pub struct LeafVars(BTreeMap<String, Var>);

impl LeafVars {
    pub fn get(&self, name: &str) -> Result<Var> {
        self.0
            .get(name)
            .copied()
            .ok_or_else(|| Error::UnboundLeaf(name.to_string()))
    }
}

/// Registers every binding as a leaf, then runs `expr`.
pub fn forward_eval<F>(expr: F, bindings: &Bindings) -> Result<(Tape, Var)>
where
    F: Fn(&mut Tape, &LeafVars) -> Result<Var>,
{
    let mut tape = Tape::new();
    let mut vars = LeafVars::default();
    for (name, value) in bindings {
        let v = tape.leaf(name.clone(), value.clone())?;
        vars.0.insert(name.clone(), v);
    }
    let out = expr(&mut tape, &vars)?;
    Ok((tape, out))
}

pub fn backward_grad(tape: &Tape, output: Var, leaves: &[&str]) -> Result<GradMap> {
    tape.backward(output, leaves)
}

/// Largest `|analytic - central difference| / max(1, |analytic|)` over the
/// entries of `leaf`.
pub fn finite_diff_check<F>(expr: F, bindings: &Bindings, leaf: &str, eps: f64) -> Result<f64>
where
    F: Fn(&mut Tape, &LeafVars) -> Result<Var>,
{
    if !(eps > 0.0) {
        return Err(Error::invalid("finite difference step must be positive"));
    }
    let (tape, out) = forward_eval(&expr, bindings)?;
    let analytic = backward_grad(&tape, out, &[leaf])?.remove(leaf).unwrap();

    let mut probe = bindings.clone();
    let mut worst: f64 = 0.0;
    for i in 0..analytic.numel() {
        let base = bindings[leaf].data()[i];
        probe.get_mut(leaf).unwrap().data_mut()[i] = base + eps;
        let (t_plus, o_plus) = forward_eval(&expr, &probe)?;
        let plus = t_plus.value(o_plus).item()?;
        probe.get_mut(leaf).unwrap().data_mut()[i] = base - eps;
        let (t_minus, o_minus) = forward_eval(&expr, &probe)?;
        let minus = t_minus.value(o_minus).item()?;
        probe.get_mut(leaf).unwrap().data_mut()[i] = base;

        let numeric = (plus - minus) / (2.0 * eps);
        let a = analytic.data()[i];
        worst = worst.max((a - numeric).abs() / a.abs().max(1.0));
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bind(pairs: &[(&str, Tensor)]) -> Bindings {
        pairs
            .iter()
            .map(|(n, t)| (n.to_string(), t.clone()))
            .collect()
    }

    #[test]
    fn tanh_at_origin() {
        let b = bind(&[("x", Tensor::vector(vec![0.0]))]);
        let (tape, out) = forward_eval(|t, v| Ok(t.tanh(v.get("x")?)), &b).unwrap();
        assert_eq!(tape.value(out).data(), &[0.0]);
    }

    #[test]
    fn softmax_uniform() {
        let b = bind(&[("x", Tensor::vector(vec![1.0; 4]))]);
        let (tape, out) = forward_eval(|t, v| Ok(t.softmax(v.get("x")?)), &b).unwrap();
        assert_eq!(tape.value(out).data(), &[0.25; 4]);
    }

    #[test]
    fn mean_of_matmul() {
        let b = bind(&[
            ("a", Tensor::new(vec![2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap()),
            ("b", Tensor::new(vec![2, 1], vec![1.0, 1.0]).unwrap()),
        ]);
        let (tape, out) = forward_eval(
            |t, v| {
                let m = t.matmul(v.get("a")?, v.get("b")?)?;
                Ok(t.mean_batch(m))
            },
            &b,
        )
        .unwrap();
        assert_eq!(tape.value(out).data(), &[5.0]);
    }

    #[test]
    fn square_derivative() {
        let b = bind(&[("x", Tensor::scalar(3.0))]);
        let (tape, out) = forward_eval(
            |t, v| {
                let x = v.get("x")?;
                t.mul(x, x)
            },
            &b,
        )
        .unwrap();
        let g = backward_grad(&tape, out, &["x"]).unwrap();
        assert_eq!(g["x"].data(), &[6.0]);
    }

    #[test]
    fn softmax_cross_entropy_gradient_closed_form() {
        let logits = vec![0.3, -1.2, 2.0, 0.5];
        let onehot = Tensor::vector(vec![0.0, 0.0, 1.0, 0.0]);
        let b = bind(&[("l", Tensor::vector(logits.clone()))]);
        let (tape, out) = forward_eval(
            |t, v| {
                let ls = t.log_softmax(v.get("l")?);
                let c = t.constant(onehot.clone());
                let prod = t.mul(ls, c)?;
                let s = t.sum(prod);
                Ok(t.neg(s))
            },
            &b,
        )
        .unwrap();
        let g = backward_grad(&tape, out, &["l"]).unwrap();
        let mut p = logits.clone();
        softmax_in_place(&mut p);
        for (i, (&gi, &pi)) in g["l"].data().iter().zip(&p).enumerate() {
            let expected = pi - onehot.data()[i];
            assert!((gi - expected).abs() < 1e-14, "{gi} vs {expected}");
        }
    }

    #[test]
    fn sigmoid_and_log_derivatives() {
        let b = bind(&[("x", Tensor::scalar(0.0))]);
        let (tape, out) = forward_eval(|t, v| Ok(t.sigmoid(v.get("x")?)), &b).unwrap();
        assert_eq!(backward_grad(&tape, out, &["x"]).unwrap()["x"].data(), &[0.25]);
        let err = finite_diff_check(|t, v| Ok(t.sigmoid(v.get("x")?)), &b, "x", 1e-5).unwrap();
        assert!(err < 1e-8);

        let b = bind(&[("x", Tensor::scalar(1.0))]);
        let (tape, out) = forward_eval(|t, v| t.log(v.get("x")?), &b).unwrap();
        assert_eq!(backward_grad(&tape, out, &["x"]).unwrap()["x"].data(), &[1.0]);
        let err = finite_diff_check(|t, v| t.log(v.get("x")?), &b, "x", 1e-5).unwrap();
        assert!(err < 1e-7);
    }

    #[test]
    fn log_clamps_and_rejects() {
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::vector(vec![0.0, 1.0]));
        let y = tape.log(x).unwrap();
        assert_eq!(tape.value(y).data()[0], LOG_CLAMP.ln());
        assert_eq!(tape.log_clamp_count(), 1);
        let neg = tape.constant(Tensor::vector(vec![-1.0]));
        assert!(matches!(tape.log(neg), Err(Error::Domain { op: "log", .. })));
    }

    #[test]
    fn shape_errors_name_the_op() {
        let mut tape = Tape::new();
        let a = tape.constant(Tensor::zeros(&[2, 3]));
        let b = tape.constant(Tensor::zeros(&[2, 3]));
        match tape.matmul(a, b) {
            Err(Error::Shape { op, shapes }) => {
                assert_eq!(op, "matmul");
                assert_eq!(shapes, vec![vec![2, 3], vec![2, 3]]);
            }
            other => panic!("{other:?}"),
        }
        let c = tape.constant(Tensor::zeros(&[4]));
        assert!(matches!(tape.add(a, c), Err(Error::Shape { op: "add", .. })));
    }

    #[test]
    fn backward_errors() {
        let b = bind(&[("x", Tensor::vector(vec![1.0, 2.0]))]);
        let (tape, out) = forward_eval(|t, v| Ok(t.tanh(v.get("x")?)), &b).unwrap();
        assert!(matches!(
            backward_grad(&tape, out, &["x"]),
            Err(Error::NonScalarOutput(_))
        ));
        let s = {
            let mut t = tape.clone();
            let s = t.sum(out);
            (t, s)
        };
        assert!(matches!(
            backward_grad(&s.0, s.1, &["y"]),
            Err(Error::LeafNotOnTape(_))
        ));
        assert!(matches!(
            forward_eval(|t, v| Ok(t.tanh(v.get("missing")?)), &b),
            Err(Error::UnboundLeaf(_))
        ));
    }

    #[test]
    fn straight_through_forward_is_one_hot() {
        let b = bind(&[("x", Tensor::new(vec![2, 3], vec![0.1, 0.7, 0.2, 0.5, 0.2, 0.3]).unwrap())]);
        let (tape, out) = forward_eval(
            |t, v| {
                let s = t.straight_through(v.get("x")?);
                let w = t.constant(Tensor::vector(vec![1.0, 2.0, 3.0]));
                let m = t.mul(s, w)?;
                Ok(t.sum(m))
            },
            &b,
        )
        .unwrap();
        assert_eq!(tape.value(out).data(), &[3.0]);
        let g = backward_grad(&tape, out, &["x"]).unwrap();
        assert_eq!(g["x"].data(), &[1.0, 2.0, 3.0, 1.0, 2.0, 3.0]);
    }

    #[test]
    fn broadcast_add_reduces_gradient() {
        let b = bind(&[
            ("x", Tensor::new(vec![3, 2], vec![1.0; 6]).unwrap()),
            ("bias", Tensor::vector(vec![0.5, -0.5])),
        ]);
        let (tape, out) = forward_eval(
            |t, v| {
                let y = t.add(v.get("x")?, v.get("bias")?)?;
                Ok(t.sum(y))
            },
            &b,
        )
        .unwrap();
        let g = backward_grad(&tape, out, &["bias"]).unwrap();
        assert_eq!(g["bias"].data(), &[3.0, 3.0]);
    }
}
