//! Synthetic conditional tasks with known generating structure.
//!
//! * Ring task: `K` isotropic Gaussians on a circle, the condition is the class.
//! * Chain task: a 1-D strip of `N` cells whose labels follow a sticky Markov
//!   chain; each cell renders as its label's mean plus Gaussian noise.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::autodiff::Tensor;
use crate::error::{Error, Result};
use crate::nets::{Condition, ConditionKind};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RingTask {
    pub classes: usize,
    pub radius: f64,
    pub sigma: f64,
    /// Class prior; empty means uniform.
    pub prior: Vec<f64>,
}

impl Default for RingTask {
    fn default() -> Self {
        RingTask {
            classes: 4,
            radius: 2.0,
            sigma: 0.15,
            prior: Vec::new(),
        }
    }
}

impl RingTask {
    pub fn prior(&self) -> Vec<f64> {
        if self.prior.is_empty() {
            vec![1.0 / self.classes as f64; self.classes]
        } else {
            self.prior.clone()
        }
    }

    pub fn mean(&self, class: usize) -> [f64; 2] {
        let angle = 2.0 * std::f64::consts::PI * class as f64 / self.classes as f64;
        [self.radius * angle.cos(), self.radius * angle.sin()]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChainTask {
    pub cells: usize,
    /// Rendered value of each label; the label count is `means.len()`.
    pub means: Vec<f64>,
    pub noise_std: f64,
    pub stay_prob: f64,
}

impl Default for ChainTask {
    fn default() -> Self {
        ChainTask {
            cells: 16,
            means: vec![-1.0, 0.0, 1.0],
            noise_std: 0.25,
            stay_prob: 0.8,
        }
    }
}

impl ChainTask {
    pub fn labels(&self) -> usize {
        self.means.len()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum TaskSpec {
    Ring(RingTask),
    Chain(ChainTask),
}

impl TaskSpec {
    pub fn validate(&self) -> Result<()> {
        match self {
            TaskSpec::Ring(t) => {
                if t.classes < 1 {
                    return Err(Error::invalid("ring task needs at least one class"));
                }
                if !(t.sigma > 0.0) || !t.radius.is_finite() {
                    return Err(Error::invalid("ring task needs sigma > 0 and finite radius"));
                }
                let prior = t.prior();
                if prior.len() != t.classes
                    || prior.iter().any(|&p| !(p >= 0.0))
                    || (prior.iter().sum::<f64>() - 1.0).abs() > 1e-9
                {
                    return Err(Error::invalid("class prior must be a distribution over the classes"));
                }
            }
            TaskSpec::Chain(t) => {
                if t.cells < 1 || t.means.is_empty() {
                    return Err(Error::invalid("chain task needs cells and label means"));
                }
                if !(t.noise_std > 0.0) {
                    return Err(Error::invalid("chain task needs noise_std > 0"));
                }
                if !(t.stay_prob > 0.0 && t.stay_prob <= 1.0) {
                    return Err(Error::invalid("stay probability must lie in (0, 1]"));
                }
            }
        }
        Ok(())
    }

    pub fn data_dim(&self) -> usize {
        match self {
            TaskSpec::Ring(_) => 2,
            TaskSpec::Chain(t) => t.cells,
        }
    }

    pub fn condition_kind(&self) -> ConditionKind {
        match self {
            TaskSpec::Ring(t) => ConditionKind::Class { classes: t.classes },
            TaskSpec::Chain(t) => ConditionKind::Grid {
                cells: t.cells,
                labels: t.labels(),
            },
        }
    }

    /// Whether the trainer may sample conditions from the true prior.
    pub fn has_sampleable_prior(&self) -> bool {
        matches!(self, TaskSpec::Ring(_))
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R, n: usize) -> Vec<Sample> {
        match self {
            TaskSpec::Ring(t) => sample_ring(t, rng, n),
            TaskSpec::Chain(t) => sample_chain(t, rng, n),
        }
    }

    /// Noise-free rendering of a label vector.
    pub fn render(&self, label: &[usize]) -> Vec<f64> {
        match self {
            TaskSpec::Ring(t) => t.mean(label[0]).to_vec(),
            TaskSpec::Chain(t) => label.iter().map(|&l| t.means[l]).collect(),
        }
    }

    /// Draws conditions from the true label distribution.
    pub fn sample_conditions<R: Rng + ?Sized>(&self, rng: &mut R, n: usize) -> Result<Condition> {
        let labels: Vec<Vec<usize>> = self.sample(rng, n).into_iter().map(|s| s.label).collect();
        Condition::from_labels(self.condition_kind(), &labels)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub x: Vec<f64>,
    /// One label for the ring task, one per cell for the chain task.
    pub label: Vec<usize>,
}

fn categorical<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.len() - 1
}

pub fn sample_ring<R: Rng + ?Sized>(task: &RingTask, rng: &mut R, n: usize) -> Vec<Sample> {
    let prior = task.prior();
    (0..n)
        .map(|_| {
            let c = categorical(&prior, rng);
            let mu = task.mean(c);
            let x = mu
                .iter()
                .map(|m| m + task.sigma * rng.sample::<f64, _>(StandardNormal))
                .collect();
            Sample { x, label: vec![c] }
        })
        .collect()
}

pub fn sample_chain<R: Rng + ?Sized>(task: &ChainTask, rng: &mut R, n: usize) -> Vec<Sample> {
    let m = task.labels();
    (0..n)
        .map(|_| {
            let mut label = Vec::with_capacity(task.cells);
            let mut cur = rng.random_range(0..m);
            for i in 0..task.cells {
                if i > 0 && m > 1 && rng.random::<f64>() >= task.stay_prob {
                    // uniform over the other m - 1 labels
                    let step = rng.random_range(1..m);
                    cur = (cur + step) % m;
                }
                label.push(cur);
            }
            let x = label
                .iter()
                .map(|&l| task.means[l] + task.noise_std * rng.sample::<f64, _>(StandardNormal))
                .collect();
            Sample { x, label }
        })
        .collect()
}

/// Nearest-mean labelling (per cell for the chain task); ties go to the lower index.
pub fn bayes_oracle_label(task: &TaskSpec, x: &[f64]) -> Vec<usize> {
    fn nearest(dists: impl Iterator<Item = f64>) -> usize {
        // distances equal up to rounding count as ties
        let mut best = (0, f64::INFINITY);
        for (i, d) in dists.enumerate() {
            if i == 0 || d < best.1 - 1e-12 * best.1.max(1.0) {
                best = (i, d);
            }
        }
        best.0
    }
    match task {
        TaskSpec::Ring(t) => vec![nearest((0..t.classes).map(|c| {
            let mu = t.mean(c);
            (x[0] - mu[0]).powi(2) + (x[1] - mu[1]).powi(2)
        }))],
        TaskSpec::Chain(t) => x
            .iter()
            .map(|&xi| nearest(t.means.iter().map(|m| (xi - m).abs())))
            .collect(),
    }
}

/// Supervised pairs, unlabelled samples and a labelled test set drawn from
/// one task. The unlabelled set's true labels are kept only for audit
/// diagnostics and never reach the trainer.
#[derive(Clone, Debug)]
pub struct DatasetSplit {
    pub task: TaskSpec,
    pub supervised: Vec<Sample>,
    pub unsupervised: Vec<Vec<f64>>,
    pub test: Vec<Sample>,
    pub seed: u64,
    withheld: Vec<Vec<usize>>,
}

impl DatasetSplit {
    pub fn withheld_labels(&self) -> &[Vec<usize>] {
        &self.withheld
    }

    pub fn sup_x(&self) -> Result<Tensor> {
        rows_tensor(self.supervised.iter().map(|s| &s.x))
    }

    pub fn sup_condition(&self) -> Result<Condition> {
        let labels: Vec<Vec<usize>> = self.supervised.iter().map(|s| s.label.clone()).collect();
        Condition::from_labels(self.task.condition_kind(), &labels)
    }

    pub fn test_x(&self) -> Result<Tensor> {
        rows_tensor(self.test.iter().map(|s| &s.x))
    }

    pub fn test_condition(&self) -> Result<Condition> {
        let labels: Vec<Vec<usize>> = self.test.iter().map(|s| s.label.clone()).collect();
        Condition::from_labels(self.task.condition_kind(), &labels)
    }

    pub fn unsup_x(&self) -> Result<Tensor> {
        rows_tensor(self.unsupervised.iter())
    }

    /// Samples of `S_x ∪ U`.
    pub fn all_train_x(&self) -> Result<Tensor> {
        rows_tensor(
            self.supervised
                .iter()
                .map(|s| &s.x)
                .chain(self.unsupervised.iter()),
        )
    }

    /// Copy in which every unlabelled sample joins the supervised set with the
    /// given label; the unlabelled set becomes empty.
    pub fn with_pseudo_labels(&self, labels: &[Vec<usize>]) -> Result<DatasetSplit> {
        if labels.len() != self.unsupervised.len() {
            return Err(Error::invalid(format!(
                "{} pseudo-labels for {} unlabelled samples",
                labels.len(),
                self.unsupervised.len()
            )));
        }
        let mut supervised = self.supervised.clone();
        supervised.extend(self.unsupervised.iter().zip(labels).map(|(x, l)| Sample {
            x: x.clone(),
            label: l.clone(),
        }));
        Ok(DatasetSplit {
            task: self.task.clone(),
            supervised,
            unsupervised: Vec::new(),
            test: self.test.clone(),
            seed: self.seed,
            withheld: Vec::new(),
        })
    }

    /// Writes `supervised.csv`, `unsupervised.csv` and `test.csv` into `dir`.
    pub fn export_csv(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let dim = self.task.data_dim();
        let rows = self.task.condition_kind().rows();
        let sup: Vec<_> = self.supervised.iter().map(|s| (s.x.clone(), Some(s.label.clone()))).collect();
        let uns: Vec<_> = self.unsupervised.iter().map(|x| (x.clone(), None)).collect();
        let test: Vec<_> = self.test.iter().map(|s| (s.x.clone(), Some(s.label.clone()))).collect();
        write_samples_csv(&dir.join("supervised.csv"), dim, rows, &sup)?;
        write_samples_csv(&dir.join("unsupervised.csv"), dim, rows, &uns)?;
        write_samples_csv(&dir.join("test.csv"), dim, rows, &test)
    }
}

pub(crate) fn rows_tensor<'a>(rows: impl Iterator<Item = &'a Vec<f64>>) -> Result<Tensor> {
    let rows: Vec<Vec<f64>> = rows.cloned().collect();
    Tensor::from_rows(&rows)
}

pub fn make_splits(
    task: &TaskSpec,
    n_total: usize,
    n_supervised: usize,
    n_test: usize,
    seed: u64,
) -> Result<DatasetSplit> {
    task.validate()?;
    if n_supervised < 1 || n_supervised + n_test > n_total {
        return Err(Error::invalid(format!(
            "split sizes need 1 <= n_supervised and n_supervised + n_test <= n_total \
             (got {n_supervised} + {n_test} > {n_total})"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut samples = task.sample(&mut rng, n_total);
    let rest = samples.split_off(n_test);
    let test = samples;
    let (supervised, rest) = match task {
        TaskSpec::Ring(t) => balanced_take(rest, n_supervised, t.classes),
        TaskSpec::Chain(_) => {
            let mut rest = rest;
            let tail = rest.split_off(n_supervised);
            (rest, tail)
        }
    };
    let (unsupervised, withheld) = rest.into_iter().map(|s| (s.x, s.label)).unzip();
    Ok(DatasetSplit {
        task: task.clone(),
        supervised,
        unsupervised,
        test,
        seed,
        withheld,
    })
}

/// Takes `n` samples in draw order with per-class quotas as equal as possible
/// (lower classes absorb the remainder). Falls back to draw order once a
/// class runs out.
fn balanced_take(samples: Vec<Sample>, n: usize, classes: usize) -> (Vec<Sample>, Vec<Sample>) {
    let mut quota: Vec<usize> = (0..classes).map(|c| n / classes + usize::from(c < n % classes)).collect();
    let mut picked = vec![false; samples.len()];
    let mut count = 0;
    for (i, s) in samples.iter().enumerate() {
        if count == n {
            break;
        }
        if quota[s.label[0]] > 0 {
            quota[s.label[0]] -= 1;
            picked[i] = true;
            count += 1;
        }
    }
    for p in picked.iter_mut() {
        if count == n {
            break;
        }
        if !*p {
            *p = true;
            count += 1;
        }
    }
    let mut sup = Vec::with_capacity(n);
    let mut rest = Vec::with_capacity(samples.len() - n);
    for (s, p) in samples.into_iter().zip(picked) {
        if p {
            sup.push(s);
        } else {
            rest.push(s);
        }
    }
    (sup, rest)
}

/// Header `x_0..x_{d-1},c_0..c_{r-1}`; label cells are empty for unlabelled rows.
pub fn write_samples_csv(
    path: &Path,
    dim: usize,
    label_cols: usize,
    rows: &[(Vec<f64>, Option<Vec<usize>>)],
) -> Result<()> {
    let csv_err = |e: csv::Error| Error::Csv {
        path: path.to_path_buf(),
        message: e.to_string(),
    };
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_path(path)
        .map_err(csv_err)?;
    let header: Vec<String> = (0..dim)
        .map(|i| format!("x_{i}"))
        .chain((0..label_cols).map(|i| format!("c_{i}")))
        .collect();
    w.write_record(&header).map_err(csv_err)?;
    for (x, label) in rows {
        let mut rec: Vec<String> = x.iter().map(|v| v.to_string()).collect();
        match label {
            Some(l) => rec.extend(l.iter().map(|v| v.to_string())),
            None => rec.extend(std::iter::repeat_n(String::new(), label_cols)),
        }
        w.write_record(&rec).map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_samples_csv(path: &Path) -> Result<Vec<(Vec<f64>, Option<Vec<usize>>)>> {
    let bad = |message: String| Error::Csv {
        path: path.to_path_buf(),
        message,
    };
    let mut r = csv::Reader::from_path(path).map_err(|e| bad(e.to_string()))?;
    let header = r.headers().map_err(|e| bad(e.to_string()))?.clone();
    let dim = header.iter().filter(|h| h.starts_with("x_")).count();
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| bad(e.to_string()))?;
        let x = rec
            .iter()
            .take(dim)
            .map(|v| v.parse::<f64>().map_err(|e| bad(format!("{v:?}: {e}"))))
            .collect::<Result<Vec<_>>>()?;
        let label_cells: Vec<&str> = rec.iter().skip(dim).collect();
        let label = if label_cells.iter().all(|c| c.is_empty()) {
            None
        } else {
            Some(
                label_cells
                    .iter()
                    .map(|v| v.parse::<usize>().map_err(|e| bad(format!("{v:?}: {e}"))))
                    .collect::<Result<Vec<_>>>()?,
            )
        };
        out.push((x, label));
    }
    Ok(out)
}
