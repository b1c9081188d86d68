//! Experiment configuration: strict JSON with documented defaults.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::{ChainTask, RingTask, TaskSpec};
use crate::error::{Error, Result};
use crate::trainer::OptimizerSpec;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskKind {
    /// Class-conditional ring of Gaussians.
    A,
    /// Per-cell label strips.
    B,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Surrogate {
    NonSaturating,
    Saturating,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SecondPassNoise {
    Reuse,
    Fresh,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ArchConfig {
    pub generator_hidden: Vec<usize>,
    pub discriminator_hidden: Vec<usize>,
    pub labeller_hidden: Vec<usize>,
    /// Latent noise width; defaults to 4 (task a) or 8 (task b).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub noise_dim: Option<usize>,
}

impl Default for ArchConfig {
    fn default() -> Self {
        ArchConfig {
            generator_hidden: vec![128, 128],
            discriminator_hidden: vec![128, 128],
            labeller_hidden: vec![128, 128],
            noise_dim: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub task: TaskKind,
    pub ring: RingTask,
    pub chain: ChainTask,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_total: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_supervised: Option<usize>,
    pub n_test: usize,
    /// Seed for the data split; the run seed is used when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub split_seed: Option<u64>,
    pub arch: ArchConfig,
    pub optimizer: OptimizerSpec,
    pub lambdas: [f64; 3],
    pub tau: f64,
    /// Multiplicative per-step temperature decay; 1.0 keeps tau constant.
    pub tau_decay: f64,
    pub tau_min: f64,
    pub surrogate: Surrogate,
    /// Straight-through hard Gumbel samples instead of soft ones.
    pub straight_through: bool,
    pub warmup_steps: usize,
    pub stop_grad_generator_input: bool,
    pub stop_grad_discriminator_condition: bool,
    /// Draw the fake-pair half of the unsupervised term from a second batch.
    pub independent_unsup_batches: bool,
    pub second_pass_noise: SecondPassNoise,
    pub eval_every: usize,
    pub eval_passes: usize,
    pub checkpoint_every: usize,
    pub mmd_bandwidths: Vec<f64>,
    pub naive_pretrain_steps: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<String>,
    pub seeds: Vec<u64>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            task: TaskKind::A,
            ring: RingTask::default(),
            chain: ChainTask::default(),
            n_total: None,
            n_supervised: None,
            n_test: 500,
            split_seed: None,
            arch: ArchConfig::default(),
            optimizer: OptimizerSpec::default(),
            lambdas: [1.0, 1.0, 1.0],
            tau: 1.0,
            tau_decay: 1.0,
            tau_min: 0.1,
            surrogate: Surrogate::NonSaturating,
            straight_through: false,
            warmup_steps: 500,
            stop_grad_generator_input: false,
            stop_grad_discriminator_condition: false,
            independent_unsup_batches: false,
            second_pass_noise: SecondPassNoise::Reuse,
            eval_every: 500,
            eval_passes: 1,
            checkpoint_every: 0,
            mmd_bandwidths: vec![0.5, 1.0, 2.0],
            naive_pretrain_steps: 2000,
            output_dir: None,
            seeds: vec![0, 1, 2],
        }
    }
}

fn config_error(pointer: &str, message: impl Into<String>) -> Error {
    Error::Config {
        pointer: pointer.to_string(),
        message: message.into(),
    }
}

fn pointer_of(path: &serde_path_to_error::Path) -> String {
    use serde_path_to_error::Segment;
    let mut out = String::new();
    for seg in path.iter() {
        out.push('/');
        match seg {
            Segment::Seq { index } => out.push_str(&index.to_string()),
            Segment::Map { key } => out.push_str(&key.replace('~', "~0").replace('/', "~1")),
            Segment::Enum { variant } => out.push_str(variant),
            Segment::Unknown => out.push('?'),
        }
    }
    if out.is_empty() {
        out.push('/');
    }
    out
}

impl ExperimentConfig {
    pub fn from_json_str(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: ExperimentConfig = serde_path_to_error::deserialize(de).map_err(|e| {
            let pointer = pointer_of(e.path());
            config_error(&pointer, e.into_inner().to_string())
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// SHA-256 of the compact JSON encoding.
    pub fn hash(&self) -> [u8; 32] {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        Sha256::digest(&bytes).into()
    }

    pub fn validate(&self) -> Result<()> {
        self.task_spec()
            .validate()
            .map_err(|e| config_error(self.task_pointer(), e.to_string()))?;
        let n_total = self.n_total();
        let n_sup = self.n_supervised();
        if n_sup < 1 {
            return Err(config_error("/n_supervised", "at least one supervised pair is required"));
        }
        if n_sup + self.n_test > n_total {
            return Err(config_error(
                "/n_supervised",
                format!("n_supervised + n_test exceeds n_total ({n_sup} + {} > {n_total})", self.n_test),
            ));
        }
        if self.n_test < 1 {
            return Err(config_error("/n_test", "test split must be non-empty"));
        }
        for (name, widths) in [
            ("generator_hidden", &self.arch.generator_hidden),
            ("discriminator_hidden", &self.arch.discriminator_hidden),
            ("labeller_hidden", &self.arch.labeller_hidden),
        ] {
            if widths.contains(&0) {
                return Err(config_error(&format!("/arch/{name}"), "widths must be positive"));
            }
        }
        self.optimizer.validate()?;
        for (i, l) in self.lambdas.iter().enumerate() {
            if !(*l >= 0.0) || !l.is_finite() {
                return Err(config_error(&format!("/lambdas/{i}"), "lambdas must be finite and >= 0"));
            }
        }
        if !(self.tau > 0.0) {
            return Err(config_error("/tau", "tau must be positive"));
        }
        if !(self.tau_decay > 0.0 && self.tau_decay <= 1.0) {
            return Err(config_error("/tau_decay", "tau_decay must lie in (0, 1]"));
        }
        if !(self.tau_min > 0.0) {
            return Err(config_error("/tau_min", "tau_min must be positive"));
        }
        if self.eval_every == 0 {
            return Err(config_error("/eval_every", "eval_every must be positive"));
        }
        if !(1..=2).contains(&self.eval_passes) {
            return Err(config_error("/eval_passes", "passes must be 1 or 2"));
        }
        if self.mmd_bandwidths.is_empty() || self.mmd_bandwidths.iter().any(|b| !(*b > 0.0)) {
            return Err(config_error("/mmd_bandwidths", "bandwidth factors must be positive"));
        }
        if self.seeds.is_empty() {
            return Err(config_error("/seeds", "at least one seed is required"));
        }
        Ok(())
    }

    fn task_pointer(&self) -> &'static str {
        match self.task {
            TaskKind::A => "/ring",
            TaskKind::B => "/chain",
        }
    }

    pub fn task_spec(&self) -> TaskSpec {
        match self.task {
            TaskKind::A => TaskSpec::Ring(self.ring.clone()),
            TaskKind::B => TaskSpec::Chain(self.chain.clone()),
        }
    }

    pub fn n_total(&self) -> usize {
        self.n_total.unwrap_or(match self.task {
            TaskKind::A => 4_500,
            TaskKind::B => 5_600,
        })
    }

    pub fn n_supervised(&self) -> usize {
        self.n_supervised.unwrap_or(match self.task {
            TaskKind::A => 8,
            TaskKind::B => 5,
        })
    }

    pub fn noise_dim(&self) -> usize {
        self.arch.noise_dim.unwrap_or(match self.task {
            TaskKind::A => 4,
            TaskKind::B => 8,
        })
    }

    pub fn steps(&self) -> usize {
        self.optimizer.steps.unwrap_or(match self.task {
            TaskKind::A => 6_000,
            TaskKind::B => 12_000,
        })
    }

    pub fn split_seed(&self, run_seed: u64) -> u64 {
        self.split_seed.unwrap_or(run_seed)
    }

    /// Temperature in effect at `step`.
    pub fn tau_at(&self, step: u64) -> f64 {
        if self.tau_decay == 1.0 {
            self.tau
        } else {
            (self.tau * self.tau_decay.powf(step as f64)).max(self.tau_min)
        }
    }

    pub fn generator_widths(&self) -> Vec<usize> {
        let spec = self.task_spec();
        let mut w = vec![spec.condition_kind().flat_dim() + self.noise_dim()];
        w.extend(&self.arch.generator_hidden);
        w.push(spec.data_dim());
        w
    }

    pub fn discriminator_widths(&self) -> Vec<usize> {
        let spec = self.task_spec();
        let mut w = vec![spec.data_dim() + spec.condition_kind().flat_dim()];
        w.extend(&self.arch.discriminator_hidden);
        w.push(1);
        w
    }

    pub fn labeller_widths(&self) -> Vec<usize> {
        let spec = self.task_spec();
        let mut w = vec![spec.data_dim()];
        w.extend(&self.arch.labeller_hidden);
        w.push(spec.condition_kind().flat_dim());
        w
    }
}

pub fn parse_config(path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    ExperimentConfig::from_json_str(&text)
}
