//! MLP generator, discriminator and labeller.
//!
//! Hidden layers use ReLU and output layers are linear. The labeller's
//! output head turns logits into conditions: plain softmax, Gumbel-softmax
//! samples (optionally straight-through hard), or argmax one-hots.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::autodiff::{argmax, one_hot_rows, softmax_in_place, Bindings, LeafVars, Tape, Tensor, Var};
use crate::error::{Error, Result};

/// Bound on Gumbel uniforms before taking logs.
const GUMBEL_U_CLAMP: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Generator,
    Discriminator,
    Labeller,
}

impl Role {
    pub fn name(self) -> &'static str {
        match self {
            Role::Generator => "generator",
            Role::Discriminator => "discriminator",
            Role::Labeller => "labeller",
        }
    }

    pub fn tag(self) -> u8 {
        match self {
            Role::Generator => 0,
            Role::Discriminator => 1,
            Role::Labeller => 2,
        }
    }

    pub fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            0 => Some(Role::Generator),
            1 => Some(Role::Discriminator),
            2 => Some(Role::Labeller),
            _ => None,
        }
    }
}

/// Weights and biases of one MLP. Layer `i` owns `w{i}: (widths[i], widths[i+1])`
/// and `b{i}: (widths[i+1])`.
#[derive(Clone, Debug, PartialEq)]
pub struct NetworkParams {
    role: Role,
    widths: Vec<usize>,
    entries: Vec<(String, Tensor)>,
}

impl NetworkParams {
    /// Rebuilds a network from named entries, checking them against `widths`.
    pub fn from_entries(role: Role, widths: Vec<usize>, entries: Vec<(String, Tensor)>) -> Result<Self> {
        if widths.len() < 2 || widths.contains(&0) {
            return Err(Error::invalid(format!("bad layer widths {widths:?}")));
        }
        let expected: Vec<(String, Vec<usize>)> = (0..widths.len() - 1)
            .flat_map(|i| {
                [
                    (format!("w{i}"), vec![widths[i], widths[i + 1]]),
                    (format!("b{i}"), vec![widths[i + 1]]),
                ]
            })
            .collect();
        if expected.len() != entries.len()
            || expected
                .iter()
                .zip(&entries)
                .any(|((n, s), (en, et))| n != en || s.as_slice() != et.shape())
        {
            return Err(Error::invalid(format!(
                "{} entries do not match widths {widths:?}",
                role.name()
            )));
        }
        Ok(NetworkParams {
            role,
            widths,
            entries,
        })
    }

    /// Widths from the entry shapes (`w0` rows, then every `w{i}` column count).
    pub fn infer_widths(entries: &[(String, Tensor)]) -> Result<Vec<usize>> {
        let mut widths = Vec::new();
        for (name, t) in entries.iter().filter(|(n, _)| n.starts_with('w')) {
            if t.rank() != 2 {
                return Err(Error::invalid(format!("weight `{name}` is not a matrix")));
            }
            if widths.is_empty() {
                widths.push(t.shape()[0]);
            }
            widths.push(t.shape()[1]);
        }
        Ok(widths)
    }

    pub fn role(&self) -> Role {
        self.role
    }

    pub fn widths(&self) -> &[usize] {
        &self.widths
    }

    pub fn input_width(&self) -> usize {
        self.widths[0]
    }

    pub fn output_width(&self) -> usize {
        *self.widths.last().unwrap()
    }

    pub fn entries(&self) -> &[(String, Tensor)] {
        &self.entries
    }

    pub fn entries_mut(&mut self) -> &mut [(String, Tensor)] {
        &mut self.entries
    }

    pub fn num_layers(&self) -> usize {
        self.widths.len() - 1
    }

    /// Fully qualified leaf name of entry `name`, e.g. `generator.w0`.
    pub fn leaf_name(&self, name: &str) -> String {
        format!("{}.{}", self.role.name(), name)
    }

    pub fn leaf_names(&self) -> Vec<String> {
        self.entries.iter().map(|(n, _)| self.leaf_name(n)).collect()
    }

    pub fn num_params(&self) -> usize {
        self.entries.iter().map(|(_, t)| t.numel()).sum()
    }

    /// Same architecture with every entry set to zero.
    pub fn zeroed(&self) -> Self {
        let entries = self
            .entries
            .iter()
            .map(|(n, t)| (n.clone(), Tensor::zeros(t.shape())))
            .collect();
        NetworkParams {
            role: self.role,
            widths: self.widths.clone(),
            entries,
        }
    }

    /// Records the parameters on `tape`, as leaves when `trainable`.
    pub fn bind(&self, tape: &mut Tape, trainable: bool) -> Result<BoundNet> {
        let mut layers = Vec::with_capacity(self.num_layers());
        for pair in self.entries.chunks(2) {
            let (wn, w) = &pair[0];
            let (bn, b) = &pair[1];
            let (wv, bv) = if trainable {
                (
                    tape.leaf(self.leaf_name(wn), w.clone())?,
                    tape.leaf(self.leaf_name(bn), b.clone())?,
                )
            } else {
                (tape.constant(w.clone()), tape.constant(b.clone()))
            };
            layers.push((wv, bv));
        }
        Ok(BoundNet {
            role: self.role,
            input_width: self.input_width(),
            layers,
        })
    }

    /// Leaf-name bindings of every entry, for use with [`forward_eval`].
    ///
    /// [`forward_eval`]: crate::autodiff::forward_eval
    pub fn bindings(&self) -> Bindings {
        self.entries.iter().map(|(n, t)| (self.leaf_name(n), t.clone())).collect()
    }

    /// Uses leaves already registered under this network's names.
    pub fn bind_registered(&self, vars: &LeafVars) -> Result<BoundNet> {
        let layers = self
            .entries
            .chunks(2)
            .map(|pair| Ok((vars.get(&self.leaf_name(&pair[0].0))?, vars.get(&self.leaf_name(&pair[1].0))?)))
            .collect::<Result<Vec<_>>>()?;
        Ok(BoundNet {
            role: self.role,
            input_width: self.input_width(),
            layers,
        })
    }

    /// Forward pass on plain tensors.
    pub fn apply(&self, x: &Tensor) -> Result<Tensor> {
        let mut tape = Tape::new();
        let net = self.bind(&mut tape, false)?;
        let xv = tape.constant(x.clone());
        let out = net.forward(&mut tape, xv)?;
        Ok(tape.value(out).clone())
    }
}

/// A network whose parameters live on a tape.
#[derive(Clone, Debug)]
pub struct BoundNet {
    role: Role,
    input_width: usize,
    layers: Vec<(Var, Var)>,
}

impl BoundNet {
    pub fn forward(&self, tape: &mut Tape, x: Var) -> Result<Var> {
        let shape = tape.value(x).shape().to_vec();
        if shape.len() != 2 || shape[1] != self.input_width {
            return Err(Error::Shape {
                op: match self.role {
                    Role::Generator => "generator_forward",
                    Role::Discriminator => "discriminator_forward",
                    Role::Labeller => "labeller_forward",
                },
                shapes: vec![shape, vec![self.input_width]],
            });
        }
        let mut h = x;
        let last = self.layers.len() - 1;
        for (i, &(w, b)) in self.layers.iter().enumerate() {
            let z = tape.matmul(h, w)?;
            h = tape.add(z, b)?;
            if i < last {
                h = tape.relu(h);
            }
        }
        Ok(h)
    }
}

/// Weights `N(0, 2 / (fan_in + fan_out))`, zero biases.
pub fn init_params<R: Rng + ?Sized>(widths: &[usize], role: Role, rng: &mut R) -> Result<NetworkParams> {
    if widths.len() < 2 || widths.contains(&0) {
        return Err(Error::invalid(format!(
            "architecture needs at least two positive widths, got {widths:?}"
        )));
    }
    let mut entries = Vec::new();
    for (i, pair) in widths.windows(2).enumerate() {
        let (fan_in, fan_out) = (pair[0], pair[1]);
        let std = (2.0 / (fan_in + fan_out) as f64).sqrt();
        let data = (0..fan_in * fan_out)
            .map(|_| std * rng.sample::<f64, _>(StandardNormal))
            .collect();
        entries.push((format!("w{i}"), Tensor::from_parts(vec![fan_in, fan_out], data)));
        entries.push((format!("b{i}"), Tensor::zeros(&[fan_out])));
    }
    Ok(NetworkParams {
        role,
        widths: widths.to_vec(),
        entries,
    })
}

/// What a condition encodes: a class, or a label per grid cell.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ConditionKind {
    Class { classes: usize },
    Grid { cells: usize, labels: usize },
}

impl ConditionKind {
    /// Simplex rows per batch item.
    pub fn rows(self) -> usize {
        match self {
            ConditionKind::Class { .. } => 1,
            ConditionKind::Grid { cells, .. } => cells,
        }
    }

    /// Size of each simplex row.
    pub fn labels(self) -> usize {
        match self {
            ConditionKind::Class { classes } => classes,
            ConditionKind::Grid { labels, .. } => labels,
        }
    }

    pub fn flat_dim(self) -> usize {
        self.rows() * self.labels()
    }
}

/// A batch of conditions, one flattened row of simplex vectors per item.
#[derive(Clone, Debug, PartialEq)]
pub struct Condition {
    kind: ConditionKind,
    values: Tensor,
    hard: bool,
}

impl Condition {
    pub fn new(kind: ConditionKind, values: Tensor, hard: bool) -> Result<Self> {
        let c = Condition { kind, values, hard };
        c.validate()?;
        Ok(c)
    }

    /// One-hot conditions from label indices (one index per simplex row).
    pub fn from_labels(kind: ConditionKind, labels: &[Vec<usize>]) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::invalid("empty condition batch"));
        }
        let m = kind.labels();
        let mut data = vec![0.0; labels.len() * kind.flat_dim()];
        for (b, item) in labels.iter().enumerate() {
            if item.len() != kind.rows() {
                return Err(Error::invalid(format!(
                    "condition item has {} labels, expected {}",
                    item.len(),
                    kind.rows()
                )));
            }
            for (r, &l) in item.iter().enumerate() {
                if l >= m {
                    return Err(Error::invalid(format!("label {l} out of range 0..{m}")));
                }
                data[b * kind.flat_dim() + r * m + l] = 1.0;
            }
        }
        Ok(Condition {
            kind,
            values: Tensor::from_parts(vec![labels.len(), kind.flat_dim()], data),
            hard: true,
        })
    }

    pub fn kind(&self) -> ConditionKind {
        self.kind
    }

    pub fn values(&self) -> &Tensor {
        &self.values
    }

    pub fn is_hard(&self) -> bool {
        self.hard
    }

    pub fn batch(&self) -> usize {
        self.values.shape()[0]
    }

    /// Argmax label of each simplex row, per item.
    pub fn labels(&self) -> Vec<Vec<usize>> {
        let m = self.kind.labels();
        self.values
            .data()
            .chunks(self.kind.flat_dim())
            .map(|item| item.chunks(m).map(argmax).collect())
            .collect()
    }

    pub fn select(&self, idx: &[usize]) -> Result<Self> {
        Ok(Condition {
            kind: self.kind,
            values: self.values.select_rows(idx)?,
            hard: self.hard,
        })
    }

    pub fn validate(&self) -> Result<()> {
        let shape = self.values.shape();
        if shape.len() != 2 || shape[1] != self.kind.flat_dim() {
            return Err(Error::shape("condition", &[shape, &[self.kind.flat_dim()]]));
        }
        for row in self.values.data().chunks(self.kind.labels()) {
            if row.iter().any(|&v| !(v >= 0.0)) {
                return Err(Error::invalid("condition entries must be non-negative"));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > 1e-9 {
                return Err(Error::invalid(format!("condition row sums to {sum}")));
            }
            if self.hard && row.iter().filter(|&&v| v == 1.0).count() != 1 {
                return Err(Error::invalid("hard condition row is not one-hot"));
            }
        }
        Ok(())
    }
}

/// Latent noise fed to the generator; `dim = 0` disables it.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct NoiseSpec {
    pub dim: usize,
}

impl NoiseSpec {
    /// Standard normal `(batch, dim)`; `None` when noise is disabled.
    pub fn sample<R: Rng + ?Sized>(&self, batch: usize, rng: &mut R) -> Option<Tensor> {
        (self.dim > 0).then(|| {
            let data = (0..batch * self.dim)
                .map(|_| rng.sample::<f64, _>(StandardNormal))
                .collect();
            Tensor::from_parts(vec![batch, self.dim], data)
        })
    }
}

/// Generator input: condition columns followed by noise columns.
pub fn generator_input(tape: &mut Tape, c: Var, z: Option<Var>) -> Result<Var> {
    match z {
        Some(z) => tape.concat(&[c, z]),
        None => Ok(c),
    }
}

pub fn generator_forward(params: &NetworkParams, c: &Condition, z: Option<&Tensor>) -> Result<Tensor> {
    let mut tape = Tape::new();
    let net = params.bind(&mut tape, false)?;
    let cv = tape.constant(c.values().clone());
    let zv = z.map(|z| tape.constant(z.clone()));
    let input = generator_input(&mut tape, cv, zv)?;
    let out = net.forward(&mut tape, input)?;
    Ok(tape.value(out).clone())
}

/// Raw logits, shape `(batch, 1)`.
pub fn discriminator_forward(params: &NetworkParams, x: &Tensor, c: &Condition) -> Result<Tensor> {
    let mut tape = Tape::new();
    let net = params.bind(&mut tape, false)?;
    let xv = tape.constant(x.clone());
    let cv = tape.constant(c.values().clone());
    let input = tape.concat(&[xv, cv])?;
    let out = net.forward(&mut tape, input)?;
    Ok(tape.value(out).clone())
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum LabelMode {
    Soft,
    Gumbel { tau: f64, hard: bool },
    Hard,
}

/// `(batch, rows·labels)` uniforms mapped through `-ln(-ln u)`.
pub fn sample_gumbel<R: Rng + ?Sized>(shape: &[usize], rng: &mut R) -> Tensor {
    let n = shape.iter().product();
    let data = (0..n)
        .map(|_| {
            let u: f64 = rng.random::<f64>().clamp(GUMBEL_U_CLAMP, 1.0 - GUMBEL_U_CLAMP);
            -(-u.ln()).ln()
        })
        .collect();
    Tensor::from_parts(shape.to_vec(), data)
}

/// `softmax((logits + g) / tau)` for one row, with fresh Gumbel noise `g`.
/// With `hard`, the argmax one-hot is returned instead.
pub fn gumbel_softmax_sample<R: Rng + ?Sized>(
    logits: &[f64],
    tau: f64,
    rng: &mut R,
    hard: bool,
) -> Result<Vec<f64>> {
    if !(tau > 0.0) {
        return Err(Error::invalid(format!("gumbel temperature must be positive, got {tau}")));
    }
    let g = sample_gumbel(&[logits.len()], rng);
    let mut y: Vec<f64> = logits
        .iter()
        .zip(g.data())
        .map(|(l, gi)| (l + gi) / tau)
        .collect();
    softmax_in_place(&mut y);
    if hard {
        let k = argmax(&y);
        y.iter_mut().enumerate().for_each(|(i, v)| *v = if i == k { 1.0 } else { 0.0 });
    }
    Ok(y)
}

/// Maps labeller logits `(batch, rows·labels)` to condition rows on the tape.
/// `gumbel_noise` must be supplied (same shape as the logits) in Gumbel mode
/// so the noise can be frozen across passes.
pub fn label_head(
    tape: &mut Tape,
    logits: Var,
    kind: ConditionKind,
    mode: LabelMode,
    gumbel_noise: Option<&Tensor>,
) -> Result<Var> {
    let shape = tape.value(logits).shape().to_vec();
    if shape.len() != 2 || shape[1] != kind.flat_dim() {
        return Err(Error::shape("label_head", &[&shape, &[kind.flat_dim()]]));
    }
    let b = shape[0];
    let m = kind.labels();
    let rows = tape.reshape(logits, &[b * kind.rows(), m])?;
    let out = match mode {
        LabelMode::Soft => tape.softmax(rows),
        LabelMode::Hard => {
            let hard = one_hot_rows(tape.value(rows));
            tape.constant(hard)
        }
        LabelMode::Gumbel { tau, hard } => {
            if !(tau > 0.0) {
                return Err(Error::invalid(format!(
                    "gumbel temperature must be positive, got {tau}"
                )));
            }
            let noise = gumbel_noise
                .ok_or_else(|| Error::invalid("gumbel mode needs a noise tensor"))?
                .reshape(&[b * kind.rows(), m])
                .map_err(|_| Error::shape("label_head", &[&shape]))?;
            let g = tape.constant(noise);
            let perturbed = tape.add(rows, g)?;
            let scaled = tape.scale(perturbed, 1.0 / tau);
            let y = tape.softmax(scaled);
            if hard {
                tape.straight_through(y)
            } else {
                y
            }
        }
    };
    tape.reshape(out, &[b, kind.flat_dim()])
}

/// Labels a batch of samples. Gumbel mode draws fresh noise from `rng`.
pub fn labeller_forward<R: Rng + ?Sized>(
    params: &NetworkParams,
    x: &Tensor,
    kind: ConditionKind,
    mode: LabelMode,
    rng: &mut R,
) -> Result<Condition> {
    if params.output_width() != kind.flat_dim() {
        return Err(Error::shape(
            "labeller_forward",
            &[&[params.output_width()], &[kind.flat_dim()]],
        ));
    }
    let mut tape = Tape::new();
    let net = params.bind(&mut tape, false)?;
    let xv = tape.constant(x.clone());
    let logits = net.forward(&mut tape, xv)?;
    let noise = match mode {
        LabelMode::Gumbel { .. } => Some(sample_gumbel(tape.value(logits).shape(), rng)),
        _ => None,
    };
    let out = label_head(&mut tape, logits, kind, mode, noise.as_ref())?;
    let hard = matches!(mode, LabelMode::Hard | LabelMode::Gumbel { hard: true, .. });
    Ok(Condition {
        kind,
        values: tape.value(out).clone(),
        hard,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn init_is_seeded_and_zero_bias() {
        let a = init_params(&[2, 1], Role::Generator, &mut rng(3)).unwrap();
        let b = init_params(&[2, 1], Role::Generator, &mut rng(3)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.entries()[1].1.data(), &[0.0]);
        assert!(init_params(&[], Role::Generator, &mut rng(0)).is_err());
        assert!(init_params(&[3], Role::Generator, &mut rng(0)).is_err());
    }

    #[test]
    fn init_weight_scale() {
        let p = init_params(&[10, 64, 64, 2], Role::Discriminator, &mut rng(11)).unwrap();
        // pooled over all weight entries: each layer has its own target std
        let (w, t) = (&p.entries()[2].1, (2.0f64 / 128.0).sqrt());
        let n = w.numel() as f64;
        let mean = w.data().iter().sum::<f64>() / n;
        let std = (w.data().iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
        assert!((std / t - 1.0).abs() < 0.2, "{std} vs {t}");
        let w0 = &p.entries()[0].1;
        let t0 = (2.0f64 / 74.0).sqrt();
        let n0 = w0.numel() as f64;
        let std0 = (w0.data().iter().map(|v| v * v).sum::<f64>() / n0).sqrt();
        assert!((std0 / t0 - 1.0).abs() < 0.2, "{std0} vs {t0}");
    }

    #[test]
    fn generator_shapes_and_zero_weights() {
        let kind = ConditionKind::Class { classes: 4 };
        let g = init_params(&[4 + 3, 8, 2], Role::Generator, &mut rng(1)).unwrap();
        let c = Condition::from_labels(kind, &[vec![0], vec![3], vec![1]]).unwrap();
        let z = NoiseSpec { dim: 3 }.sample(3, &mut rng(2)).unwrap();
        let x = generator_forward(&g, &c, Some(&z)).unwrap();
        assert_eq!(x.shape(), &[3, 2]);

        let soft = Condition::new(kind, Tensor::full(&[3, 4], 0.25), false).unwrap();
        assert!(generator_forward(&g, &soft, Some(&z)).is_ok());

        let zero = g.zeroed();
        let x0 = generator_forward(&zero, &c, Some(&z)).unwrap();
        assert!(x0.data().iter().all(|&v| v == 0.0));

        // missing noise columns
        assert!(matches!(
            generator_forward(&g, &c, None),
            Err(Error::Shape { op: "generator_forward", .. })
        ));
    }

    #[test]
    fn discriminator_batch_contract() {
        let kind = ConditionKind::Class { classes: 3 };
        let d = init_params(&[2 + 3, 16, 1], Role::Discriminator, &mut rng(5)).unwrap();
        let x = Tensor::from_rows(&[vec![0.1, 0.2], vec![-1.0, 0.5], vec![2.0, 2.0]]).unwrap();
        let c = Condition::from_labels(kind, &[vec![0], vec![1], vec![2]]).unwrap();
        let logits = discriminator_forward(&d, &x, &c).unwrap();
        assert_eq!(logits.shape(), &[3, 1]);

        let perm = [2, 0, 1];
        let permuted = discriminator_forward(&d, &x.select_rows(&perm).unwrap(), &c.select(&perm).unwrap()).unwrap();
        for (i, &p) in perm.iter().enumerate() {
            assert_eq!(permuted.data()[i], logits.data()[p]);
        }

        let zero = discriminator_forward(&d.zeroed(), &x, &c).unwrap();
        assert!(zero.data().iter().all(|&v| v == 0.0));
        assert_eq!(crate::autodiff::sigmoid(zero.data()[0]), 0.5);
    }

    #[test]
    fn labeller_modes() {
        let kind = ConditionKind::Grid { cells: 4, labels: 3 };
        let l = init_params(&[4, 8, 12], Role::Labeller, &mut rng(9)).unwrap();
        let x = Tensor::from_rows(&[vec![-1.0, 0.0, 1.0, 0.2], vec![0.3, 0.3, -0.9, 1.1]]).unwrap();

        let soft = labeller_forward(&l.zeroed(), &x, kind, LabelMode::Soft, &mut rng(0)).unwrap();
        assert!(soft.values().data().iter().all(|&v| (v - 1.0 / 3.0).abs() < 1e-15));
        soft.validate().unwrap();

        let hard = labeller_forward(&l, &x, kind, LabelMode::Hard, &mut rng(0)).unwrap();
        assert!(hard.is_hard());
        hard.validate().unwrap();

        let g = labeller_forward(&l, &x, kind, LabelMode::Gumbel { tau: 0.5, hard: false }, &mut rng(0)).unwrap();
        g.validate().unwrap();
        let gh = labeller_forward(&l, &x, kind, LabelMode::Gumbel { tau: 0.5, hard: true }, &mut rng(0)).unwrap();
        gh.validate().unwrap();

        assert!(labeller_forward(&l, &x, kind, LabelMode::Gumbel { tau: 0.0, hard: false }, &mut rng(0)).is_err());
    }

    #[test]
    fn soft_labeller_is_deterministic() {
        let kind = ConditionKind::Class { classes: 4 };
        let l = init_params(&[2, 8, 4], Role::Labeller, &mut rng(4)).unwrap();
        let x = Tensor::from_rows(&[vec![1.0, 2.0]]).unwrap();
        let a = labeller_forward(&l, &x, kind, LabelMode::Soft, &mut rng(1)).unwrap();
        let b = labeller_forward(&l, &x, kind, LabelMode::Soft, &mut rng(2)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn gumbel_sample_is_simplex() {
        let mut r = rng(8);
        for _ in 0..100 {
            let y = gumbel_softmax_sample(&[0.5, -1.0, 2.0], 1.0, &mut r, false).unwrap();
            assert!((y.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert!(y.iter().all(|&v| v > 0.0));
        }
        assert!(gumbel_softmax_sample(&[0.0], -1.0, &mut r, false).is_err());
    }

    #[test]
    fn gumbel_low_temperature_concentrates() {
        let mut r = rng(21);
        let n = 10_000;
        let hits = (0..n)
            .filter(|_| argmax(&gumbel_softmax_sample(&[5.0, 0.0, 0.0], 0.1, &mut r, false).unwrap()) == 0)
            .count();
        // categorical P(argmax = 0) = e^5 / (e^5 + 2) = 0.9867
        assert!(hits as f64 / n as f64 >= 0.98, "{hits}");
    }

    #[test]
    fn gumbel_converges_to_one_hot_as_tau_shrinks() {
        let mut tape = Tape::new();
        let logits = tape.constant(Tensor::from_rows(&[vec![0.3, 1.0, -0.5]]).unwrap());
        let noise = Tensor::from_rows(&[vec![0.9, -0.2, 0.1]]).unwrap();
        let kind = ConditionKind::Class { classes: 3 };
        // argmax of logits + g is index 0 (1.2 vs 0.8 vs -0.4)
        let mut prev = 0.0;
        for tau in [1.0, 0.3, 0.1, 0.03, 0.01] {
            let y = label_head(&mut tape, logits, kind, LabelMode::Gumbel { tau, hard: false }, Some(&noise)).unwrap();
            let p0 = tape.value(y).data()[0];
            assert!(p0 >= prev);
            prev = p0;
        }
        assert!(prev > 1.0 - 1e-12);
    }
}
