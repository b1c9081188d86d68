//! One-pass and two-pass conditional synthesis from trained networks.

use rand::Rng;

use crate::autodiff::Tensor;
use crate::config::SecondPassNoise;
use crate::error::{Error, Result};
use crate::nets::{generator_forward, labeller_forward, Condition, LabelMode, NetworkParams, NoiseSpec};

#[derive(Clone, Debug, PartialEq)]
pub enum NoiseMode {
    /// Caller-supplied latent rows, one per condition row.
    Fixed(Tensor),
    Fresh,
    Zero,
}

#[derive(Clone, Debug)]
pub struct InferenceRequest {
    pub condition: Condition,
    pub noise: NoiseMode,
    pub passes: usize,
    pub second_pass_noise: SecondPassNoise,
}

impl InferenceRequest {
    pub fn new(condition: Condition, noise: NoiseMode, passes: usize) -> Result<Self> {
        if !condition.is_hard() {
            return Err(Error::invalid("inference conditions must be hard one-hot rows"));
        }
        condition.validate()?;
        if !(1..=2).contains(&passes) {
            return Err(Error::invalid(format!("passes must be 1 or 2, got {passes}")));
        }
        Ok(InferenceRequest {
            condition,
            noise,
            passes,
            second_pass_noise: SecondPassNoise::Reuse,
        })
    }
}

fn noise_dim(g: &NetworkParams, c: &Condition) -> Result<usize> {
    let flat = c.kind().flat_dim();
    g.input_width().checked_sub(flat).ok_or_else(|| {
        Error::shape("infer", &[&[g.input_width()], &[flat]])
    })
}

fn draw_noise<R: Rng + ?Sized>(g: &NetworkParams, req: &InferenceRequest, rng: &mut R) -> Result<Option<Tensor>> {
    let dim = noise_dim(g, &req.condition)?;
    let batch = req.condition.batch();
    if dim == 0 {
        return Ok(None);
    }
    Ok(Some(match &req.noise {
        NoiseMode::Fixed(z) => {
            if z.shape() != [batch, dim] {
                return Err(Error::shape("infer", &[z.shape(), &[batch, dim]]));
            }
            z.clone()
        }
        NoiseMode::Fresh => NoiseSpec { dim }.sample(batch, rng).expect("dim > 0"),
        NoiseMode::Zero => Tensor::zeros(&[batch, dim]),
    }))
}

/// `x = G(c, z)`.
pub fn infer_one_pass<R: Rng + ?Sized>(g: &NetworkParams, req: &InferenceRequest, rng: &mut R) -> Result<Tensor> {
    let z = draw_noise(g, req, rng)?;
    generator_forward(g, &req.condition, z.as_ref())
}

/// `x1 = G(c, z)`, `c_syn = hard L(x1)`, `x = G(c_syn, z')` where `z'` is `z`
/// unless the request asks for fresh second-pass noise.
pub fn infer_two_pass<R: Rng + ?Sized>(
    g: &NetworkParams,
    l: &NetworkParams,
    req: &InferenceRequest,
    rng: &mut R,
) -> Result<(Tensor, Condition)> {
    let z = draw_noise(g, req, rng)?;
    let x1 = generator_forward(g, &req.condition, z.as_ref())?;
    let c_syn = labeller_forward(l, &x1, req.condition.kind(), LabelMode::Hard, rng)?;
    let z2 = match (req.second_pass_noise, &z) {
        (SecondPassNoise::Fresh, Some(z)) => {
            NoiseSpec { dim: z.shape()[1] }.sample(z.shape()[0], rng)
        }
        _ => z,
    };
    let x = generator_forward(g, &c_syn, z2.as_ref())?;
    Ok((x, c_syn))
}

/// Dispatches on `req.passes`.
pub fn infer<R: Rng + ?Sized>(
    g: &NetworkParams,
    l: &NetworkParams,
    req: &InferenceRequest,
    rng: &mut R,
) -> Result<Tensor> {
    if req.passes == 2 {
        infer_two_pass(g, l, req, rng).map(|(x, _)| x)
    } else {
        infer_one_pass(g, req, rng)
    }
}
