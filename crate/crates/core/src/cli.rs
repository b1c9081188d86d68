//! Command-line front end.
//!
//! Exit codes: 0 success, 1 usage or validation error, 2 runtime failure.

use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::checkpoint::load_checkpoint;
use crate::config::{parse_config, ExperimentConfig, TaskKind};
use crate::data::{bayes_oracle_label, write_samples_csv, TaskSpec};
use crate::error::{Error, Result};
use crate::gradcheck::{run_gradcheck, COMPOSITE_TOLERANCE, OP_TOLERANCE};
use crate::inference::{infer, infer_two_pass, InferenceRequest, NoiseMode};
use crate::metrics::{evaluate_snapshot, run_baseline_full, run_baseline_naive, MetricsRecord};
use crate::nets::{Condition, ConditionKind, NetworkParams, NoiseSpec};
use crate::oracle::run_oracle_check;
use crate::report::{emit_scatter_svg, metrics_csv_string};
use crate::trainer::{build_split, rng_stream, train, TrainOutcome, TrainState, STREAM_INFER};

pub const OUT_ENV: &str = "S2CGAN_OUT";
const DEFAULT_OUT: &str = "runs";

#[derive(Parser, Debug)]
#[command(name = "s2cgan", version, about = "Semi-supervised conditional GAN experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train the semi-supervised model for each seed.
    Train(RunArgs),
    /// Load a checkpoint and print its metrics row.
    Eval(EvalArgs),
    /// Synthesize samples for one condition.
    Infer(InferArgs),
    /// Edit a label strip interactively and resynthesize after each edit.
    EditInfer(EditArgs),
    /// Train a reference baseline for each seed.
    Baseline(BaselineArgs),
    /// Exact check of the marginal consequence on random finite instances.
    OracleCheck(OracleArgs),
    /// Finite-difference check of every tape op and the full composite loss.
    Gradcheck(GradArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum TaskArg {
    A,
    B,
}

#[derive(Args, Debug, Clone)]
struct ConfigArgs {
    /// JSON config; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the task of the config.
    #[arg(long, value_enum)]
    task: Option<TaskArg>,
    /// Overrides the number of training steps.
    #[arg(long)]
    steps: Option<usize>,
    /// Output directory (the S2CGAN_OUT environment variable takes precedence).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct RunArgs {
    #[command(flatten)]
    cfg: ConfigArgs,
    /// Run seed; repeat for several. Defaults to the config's seed list.
    #[arg(long = "seed")]
    seeds: Vec<u64>,
}

#[derive(Args, Debug)]
struct EvalArgs {
    #[command(flatten)]
    cfg: ConfigArgs,
    #[arg(long)]
    checkpoint: PathBuf,
    /// Seed whose data split the checkpoint was trained on.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    passes: Option<usize>,
}

#[derive(Args, Debug)]
struct InferArgs {
    #[command(flatten)]
    cfg: ConfigArgs,
    /// Trained networks; freshly initialized ones are used when omitted.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[arg(long, conflicts_with = "grid", required_unless_present = "grid")]
    class: Option<usize>,
    /// One label digit per cell, e.g. 0001112220001112.
    #[arg(long)]
    grid: Option<String>,
    #[arg(long, default_value_t = 1)]
    passes: usize,
    /// Number of samples to draw for the condition.
    #[arg(long, default_value_t = 1)]
    count: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args, Debug)]
struct EditArgs {
    #[command(flatten)]
    cfg: ConfigArgs,
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Starting label strip; all zeros when omitted.
    #[arg(long)]
    grid: Option<String>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum BaselineKind {
    Naive,
    Full,
}

#[derive(Args, Debug)]
struct BaselineArgs {
    #[arg(value_enum)]
    kind: BaselineKind,
    #[command(flatten)]
    run: RunArgs,
}

#[derive(Args, Debug)]
struct OracleArgs {
    #[arg(long, default_value_t = 1000)]
    trials: usize,
    #[arg(long, default_value_t = 12)]
    nmax: usize,
    #[arg(long, default_value_t = 6)]
    kmax: usize,
    #[arg(long, default_value_t = 1e-12)]
    tol: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args, Debug)]
struct GradArgs {
    /// Random instances per op.
    #[arg(long, default_value_t = 100)]
    seeds: u64,
    /// Random instances of the composite loss.
    #[arg(long, default_value_t = 10)]
    composite_seeds: u64,
}

enum Failure {
    Validation(String),
    Runtime(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config { .. }
            | Error::InvalidArgument(_)
            | Error::UnsupportedTask(_)
            | Error::Shape { .. } => Failure::Validation(e.to_string()),
            _ => Failure::Runtime(e.to_string()),
        }
    }
}

fn io_failure(e: std::io::Error) -> Failure {
    Failure::Runtime(format!("io error: {e}"))
}

/// Entry point for the binary; returns the process exit code.
pub fn run<I, T>(args: I, input: &mut dyn BufRead, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let text = e.render().to_string();
            let _ = if code == 0 { write!(out, "{text}") } else { write!(err, "{text}") };
            return code;
        }
    };
    let env_out = std::env::var_os(OUT_ENV).map(PathBuf::from);
    let result = match cli.command {
        Command::Train(a) => cmd_train(&a, env_out, out),
        Command::Eval(a) => cmd_eval(&a, env_out, out, err),
        Command::Infer(a) => cmd_infer(&a, env_out, out),
        Command::EditInfer(a) => cmd_edit(&a, env_out, input, out),
        Command::Baseline(a) => cmd_baseline(&a, env_out, out),
        Command::OracleCheck(a) => cmd_oracle(&a, out),
        Command::Gradcheck(a) => cmd_gradcheck(&a, out),
    };
    match result {
        Ok(()) => 0,
        Err(Failure::Validation(m)) => {
            let _ = writeln!(err, "error: {m}");
            1
        }
        Err(Failure::Runtime(m)) => {
            let _ = writeln!(err, "error: {m}");
            2
        }
    }
}

/// Output directory precedence: environment, flag, config, `runs`.
pub fn resolve_output_dir(env: Option<PathBuf>, flag: Option<&Path>, config: Option<&str>) -> PathBuf {
    env.or_else(|| flag.map(Path::to_path_buf))
        .or_else(|| config.map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT))
}

fn load_config(a: &ConfigArgs, env_out: Option<PathBuf>) -> Result<ExperimentConfig> {
    let mut cfg = match &a.config {
        Some(p) => parse_config(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(t) = a.task {
        cfg.task = match t {
            TaskArg::A => TaskKind::A,
            TaskArg::B => TaskKind::B,
        };
    }
    if let Some(s) = a.steps {
        cfg.optimizer.steps = Some(s);
    }
    let dir = resolve_output_dir(env_out, a.out.as_deref(), cfg.output_dir.as_deref());
    cfg.output_dir = Some(dir.to_string_lossy().into_owned());
    cfg.validate()?;
    Ok(cfg)
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |v| format!("{v:.4}"))
}

fn summary_line(seed: u64, r: Option<&MetricsRecord>) -> String {
    match r {
        None => format!("seed {seed}: no evaluation points"),
        Some(r) => format!(
            "seed {seed}: step {} label_agreement {:.4} mean_iou {:.4} mmd2 {:.6} marginal_tv {} pseudo_label_acc {}",
            r.step,
            r.label_agreement,
            r.mean_iou,
            r.mmd2,
            fmt_opt(r.marginal_tv),
            fmt_opt(r.pseudo_label_acc)
        ),
    }
}

fn seeds_of(a: &RunArgs, cfg: &ExperimentConfig) -> Vec<u64> {
    if a.seeds.is_empty() {
        cfg.seeds.clone()
    } else {
        a.seeds.clone()
    }
}

fn report_outcome(out: &mut dyn Write, dir: &Path, seed: u64, o: &TrainOutcome) -> std::result::Result<(), Failure> {
    writeln!(out, "{}", summary_line(seed, o.history.last())).map_err(io_failure)?;
    writeln!(out, "  outputs in {}", dir.join(format!("seed_{seed}")).display()).map_err(io_failure)
}

fn cmd_train(a: &RunArgs, env_out: Option<PathBuf>, out: &mut dyn Write) -> std::result::Result<(), Failure> {
    let cfg = load_config(&a.cfg, env_out)?;
    let dir = PathBuf::from(cfg.output_dir.as_deref().unwrap_or(DEFAULT_OUT));
    for seed in seeds_of(a, &cfg) {
        let o = train(&cfg, seed)?;
        report_outcome(out, &dir, seed, &o)?;
    }
    Ok(())
}

fn cmd_baseline(a: &BaselineArgs, env_out: Option<PathBuf>, out: &mut dyn Write) -> std::result::Result<(), Failure> {
    let cfg = load_config(&a.run.cfg, env_out)?;
    let base = PathBuf::from(cfg.output_dir.as_deref().unwrap_or(DEFAULT_OUT));
    for seed in seeds_of(&a.run, &cfg) {
        let (name, o) = match a.kind {
            BaselineKind::Full => ("full", run_baseline_full(&cfg, seed)?),
            BaselineKind::Naive => ("naive", run_baseline_naive(&cfg, seed)?.outcome),
        };
        report_outcome(out, &base.join(name), seed, &o)?;
    }
    Ok(())
}

fn restored_state(cfg: ExperimentConfig, seed: u64, checkpoint: Option<&Path>, err: Option<&mut dyn Write>) -> Result<TrainState> {
    let cfg = Arc::new(cfg);
    let mut state = TrainState::init(cfg.clone(), seed)?;
    if let Some(path) = checkpoint {
        let ckpt = load_checkpoint(path)?;
        if ckpt.config_hash != cfg.hash() {
            if let Some(err) = err {
                let _ = writeln!(err, "warning: checkpoint was written under a different config");
            }
        }
        state.restore(&ckpt)?;
        state.step = ckpt.moments.as_ref().and_then(|m| m.first()).map_or(0, |m| m.t);
    }
    Ok(state)
}

fn cmd_eval(
    a: &EvalArgs,
    env_out: Option<PathBuf>,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> std::result::Result<(), Failure> {
    let mut cfg = load_config(&a.cfg, env_out)?;
    if let Some(p) = a.passes {
        cfg.eval_passes = p;
        cfg.validate()?;
    }
    let split = build_split(&cfg, a.seed)?;
    let state = restored_state(cfg, a.seed, Some(&a.checkpoint), Some(err))?;
    let record = evaluate_snapshot(&state, &split)?;
    write!(out, "{}", metrics_csv_string(&[record])).map_err(io_failure)
}

/// Parses a label strip literal: one decimal digit per cell.
pub fn parse_grid(text: &str, kind: ConditionKind) -> Result<Vec<usize>> {
    let ConditionKind::Grid { cells, labels } = kind else {
        return Err(Error::UnsupportedTask("--grid needs the label-strip task".into()));
    };
    let chars: Vec<char> = text.chars().collect();
    if chars.len() != cells {
        return Err(Error::invalid(format!(
            "grid literal has {} characters, expected {cells}",
            chars.len()
        )));
    }
    chars
        .iter()
        .map(|ch| match ch.to_digit(10) {
            Some(d) if (d as usize) < labels => Ok(d as usize),
            _ => Err(Error::invalid(format!("grid character `{ch}` is not a label in 0..{labels}"))),
        })
        .collect()
}

fn grid_string(labels: &[usize]) -> String {
    labels.iter().map(|l| char::from_digit(*l as u32, 10).unwrap_or('?')).collect()
}

fn condition_literal(a: &InferArgs, task: &TaskSpec) -> Result<Vec<usize>> {
    let kind = task.condition_kind();
    match (a.class, &a.grid) {
        (Some(c), _) => match kind {
            ConditionKind::Class { classes } if c < classes => Ok(vec![c]),
            ConditionKind::Class { classes } => Err(Error::invalid(format!("class {c} out of range 0..{classes}"))),
            ConditionKind::Grid { .. } => Err(Error::UnsupportedTask("--class needs the class task".into())),
        },
        (None, Some(g)) => parse_grid(g, kind),
        (None, None) => Err(Error::invalid("one of --class or --grid is required")),
    }
}

fn format_row(x: &[f64]) -> String {
    x.iter().map(|v| format!("{v:.4}")).collect::<Vec<_>>().join(" ")
}

fn cmd_infer(a: &InferArgs, env_out: Option<PathBuf>, out: &mut dyn Write) -> std::result::Result<(), Failure> {
    let cfg = load_config(&a.cfg, env_out)?;
    let task = cfg.task_spec();
    let label = condition_literal(a, &task)?;
    if a.count == 0 {
        return Err(Failure::Validation("--count must be at least 1".into()));
    }
    let dir = PathBuf::from(cfg.output_dir.as_deref().unwrap_or(DEFAULT_OUT)).join("infer");
    let second_pass_noise = cfg.second_pass_noise;
    let state = restored_state(cfg, a.seed, a.checkpoint.as_deref(), None)?;
    let kind = task.condition_kind();
    let condition = Condition::from_labels(kind, &vec![label.clone(); a.count])?;
    let mut req = InferenceRequest::new(condition, NoiseMode::Fresh, a.passes)?;
    req.second_pass_noise = second_pass_noise;
    let mut rng = rng_stream(a.seed, STREAM_INFER);
    let x = infer(&state.generator, &state.labeller, &req, &mut rng)?;

    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let rows: Vec<(Vec<f64>, Option<Vec<usize>>)> =
        (0..x.rows()).map(|i| (x.row(i).to_vec(), Some(label.clone()))).collect();
    let csv_path = dir.join("samples.csv");
    write_samples_csv(&csv_path, task.data_dim(), kind.rows(), &rows)?;
    for (row, _) in &rows {
        writeln!(out, "{}", format_row(row)).map_err(io_failure)?;
    }
    writeln!(out, "wrote {}", csv_path.display()).map_err(io_failure)?;
    if let TaskSpec::Ring(_) = task {
        let split = build_split(&state.config, a.seed)?;
        let real = split.test_x()?;
        let mut labels: Vec<usize> = split.test.iter().map(|s| s.label[0]).collect();
        labels.extend(std::iter::repeat_n(label[0], x.rows()));
        let svg_path = dir.join("scatter.svg");
        emit_scatter_svg(&real, &x, &labels, &svg_path)?;
        writeln!(out, "wrote {}", svg_path.display()).map_err(io_failure)?;
    }
    Ok(())
}

/// Applies one `set <i..j> <label>` (or `set <i> <label>`) edit; the range
/// is inclusive.
pub fn apply_edit(labels: &mut [usize], n_labels: usize, command: &str) -> Result<()> {
    let parts: Vec<&str> = command.split_whitespace().collect();
    let [verb, range, value] = parts.as_slice() else {
        return Err(Error::invalid("expected `set <i..j> <label>`"));
    };
    if *verb != "set" {
        return Err(Error::invalid(format!("unknown command `{verb}`")));
    }
    let bad_range = || Error::invalid(format!("bad cell range `{range}`"));
    let (lo, hi) = match range.split_once("..") {
        Some((a, b)) => (
            a.parse::<usize>().map_err(|_| bad_range())?,
            b.parse::<usize>().map_err(|_| bad_range())?,
        ),
        None => {
            let i = range.parse::<usize>().map_err(|_| bad_range())?;
            (i, i)
        }
    };
    if lo > hi || hi >= labels.len() {
        return Err(Error::invalid(format!(
            "cell range {lo}..{hi} outside 0..{}",
            labels.len() - 1
        )));
    }
    let v: usize = value
        .parse()
        .ok()
        .filter(|v| *v < n_labels)
        .ok_or_else(|| Error::invalid(format!("label `{value}` outside 0..{n_labels}")))?;
    labels[lo..=hi].iter_mut().for_each(|l| *l = v);
    Ok(())
}

fn resynthesize(
    g: &NetworkParams,
    l: &NetworkParams,
    task: &TaskSpec,
    labels: &[usize],
    z: &NoiseMode,
    out: &mut dyn Write,
) -> std::result::Result<(), Failure> {
    let kind = task.condition_kind();
    let c = Condition::from_labels(kind, &[labels.to_vec()])?;
    let req = InferenceRequest::new(c, z.clone(), 2)?;
    // Fixed noise makes the draw independent of this rng.
    let mut rng = rng_stream(0, STREAM_INFER);
    let (x, relabel) = infer_two_pass(g, l, &req, &mut rng)?;
    let oracle = bayes_oracle_label(task, x.row(0));
    writeln!(out, "labels   {}", grid_string(labels)).map_err(io_failure)?;
    writeln!(out, "relabel  {}", grid_string(&relabel.labels()[0])).map_err(io_failure)?;
    writeln!(out, "x        {}", format_row(x.row(0))).map_err(io_failure)?;
    writeln!(out, "oracle   {}", grid_string(&oracle)).map_err(io_failure)
}

fn cmd_edit(
    a: &EditArgs,
    env_out: Option<PathBuf>,
    input: &mut dyn BufRead,
    out: &mut dyn Write,
) -> std::result::Result<(), Failure> {
    let cfg = load_config(&a.cfg, env_out)?;
    let task = cfg.task_spec();
    let kind = task.condition_kind();
    let ConditionKind::Grid { cells, labels: n_labels } = kind else {
        return Err(Error::UnsupportedTask("edit-infer needs the label-strip task".into()).into());
    };
    let mut labels = match &a.grid {
        Some(g) => parse_grid(g, kind)?,
        None => vec![0; cells],
    };
    let noise_dim = cfg.noise_dim();
    let state = restored_state(cfg, a.seed, a.checkpoint.as_deref(), None)?;
    let mut rng = rng_stream(a.seed, STREAM_INFER);
    let z = match (NoiseSpec { dim: noise_dim }).sample(1, &mut rng) {
        Some(z) => NoiseMode::Fixed(z),
        None => NoiseMode::Zero,
    };
    writeln!(out, "commands: set <i..j> <label> | show | quit").map_err(io_failure)?;
    resynthesize(&state.generator, &state.labeller, &task, &labels, &z, out)?;
    let mut line = String::new();
    loop {
        write!(out, "> ").map_err(io_failure)?;
        out.flush().map_err(io_failure)?;
        line.clear();
        if input.read_line(&mut line).map_err(io_failure)? == 0 {
            break;
        }
        let cmd = line.trim();
        match cmd {
            "" => continue,
            "quit" | "exit" => break,
            "show" => resynthesize(&state.generator, &state.labeller, &task, &labels, &z, out)?,
            _ => match apply_edit(&mut labels, n_labels, cmd) {
                Ok(()) => resynthesize(&state.generator, &state.labeller, &task, &labels, &z, out)?,
                Err(e) => writeln!(out, "error: {e}").map_err(io_failure)?,
            },
        }
    }
    Ok(())
}

fn cmd_oracle(a: &OracleArgs, out: &mut dyn Write) -> std::result::Result<(), Failure> {
    let mut rng = rng_stream(a.seed, 0);
    let s = run_oracle_check(a.trials, a.nmax, a.kmax, a.tol, &mut rng)?;
    let w = |out: &mut dyn Write, k: &str, v: String| writeln!(out, "{k:<28}{v}").map_err(io_failure);
    w(out, "trials", s.trials.to_string())?;
    w(out, "tolerance", format!("{:e}", s.tol))?;
    w(out, "marginal equality holds", format!("{}/{}", s.theorem_holds, s.trials))?;
    w(out, "max supervised gap", format!("{:e}", s.max_gap))?;
    w(out, "max joint residual", format!("{:e}", s.max_joint_residual))?;
    w(
        out,
        "probe failures",
        format!("{}/{} ({:.3})", s.probe_failures, s.probe_trials, s.probe_failure_rate()),
    )?;
    for c in &s.counterexamples {
        let line = serde_json::to_string(c).map_err(|e| Failure::Runtime(e.to_string()))?;
        writeln!(out, "{line}").map_err(io_failure)?;
    }
    if s.counterexamples.is_empty() {
        Ok(())
    } else {
        Err(Failure::Runtime(format!("{} counterexamples", s.counterexamples.len())))
    }
}

fn cmd_gradcheck(a: &GradArgs, out: &mut dyn Write) -> std::result::Result<(), Failure> {
    let r = run_gradcheck(a.seeds, a.composite_seeds)?;
    for op in &r.ops {
        writeln!(
            out,
            "{:<18}{:>6} seeds  max rel err {:.3e}  {}",
            op.op,
            op.seeds,
            op.max_error,
            if op.passed() { "ok" } else { "FAIL" }
        )
        .map_err(io_failure)?;
    }
    writeln!(
        out,
        "{:<18}{:>6} seeds  max rel err {:.3e}  {}",
        "composite",
        r.composite_seeds,
        r.composite_max_error,
        if r.composite_max_error < COMPOSITE_TOLERANCE { "ok" } else { "FAIL" }
    )
    .map_err(io_failure)?;
    if r.passed() {
        Ok(())
    } else {
        Err(Failure::Runtime(format!(
            "gradient check failed (tolerances {OP_TOLERANCE:e} ops, {COMPOSITE_TOLERANCE:e} composite)"
        )))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const STRIP: ConditionKind = ConditionKind::Grid { cells: 16, labels: 3 };

    fn run_capture(args: &[&str]) -> (i32, String, String) {
        let mut input = std::io::Cursor::new(Vec::new());
        let (mut out, mut err) = (Vec::new(), Vec::new());
        let code = run(
            std::iter::once("s2cgan").chain(args.iter().copied()),
            &mut input,
            &mut out,
            &mut err,
        );
        (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
    }

    #[test]
    fn set_range_changes_exactly_those_cells() {
        let mut labels = vec![1; 16];
        apply_edit(&mut labels, 3, "set 0..4 2").unwrap();
        assert_eq!(labels, [vec![2; 5], vec![1; 11]].concat());
        apply_edit(&mut labels, 3, "set 15 0").unwrap();
        assert_eq!(labels[15], 0);
        assert_eq!(labels[5..15], [1; 10]);
        for bad in ["set 4..2 1", "set 0..16 1", "set 0 3", "put 0 1", "set 0", "set a..b 1"] {
            let before = labels.clone();
            assert!(apply_edit(&mut labels, 3, bad).is_err(), "{bad}");
            assert_eq!(labels, before);
        }
    }

    #[test]
    fn grid_literals() {
        assert_eq!(parse_grid("0001112220001112", STRIP).unwrap()[3], 1);
        assert!(parse_grid("00011122200011120", STRIP).is_err());
        assert!(parse_grid("000111222000111x", STRIP).is_err());
        assert!(parse_grid("0001112220001113", STRIP).is_err());
        assert!(parse_grid("0", ConditionKind::Class { classes: 4 }).is_err());
    }

    #[test]
    fn output_dir_precedence() {
        let env = Some(PathBuf::from("/e"));
        assert_eq!(resolve_output_dir(env, Some(Path::new("/f")), Some("/c")), PathBuf::from("/e"));
        assert_eq!(resolve_output_dir(None, Some(Path::new("/f")), Some("/c")), PathBuf::from("/f"));
        assert_eq!(resolve_output_dir(None, None, Some("/c")), PathBuf::from("/c"));
        assert_eq!(resolve_output_dir(None, None, None), PathBuf::from("runs"));
    }

    #[test]
    fn usage_errors_exit_one() {
        assert_eq!(run_capture(&["frobnicate"]).0, 1);
        assert_eq!(run_capture(&["gradcheck", "--bogus"]).0, 1);
        assert_eq!(run_capture(&[]).0, 1);
        let (code, out, _) = run_capture(&["--help"]);
        assert_eq!(code, 0);
        assert!(out.contains("edit-infer"));
    }

    #[test]
    fn overlong_grid_exits_one() {
        let dir = tempfile::tempdir().unwrap();
        let (code, _, err) = run_capture(&[
            "infer",
            "--task",
            "b",
            "--out",
            dir.path().to_str().unwrap(),
            "--grid",
            "00011122200011120",
        ]);
        assert_eq!(code, 1);
        assert!(err.contains("17 characters"), "{err}");
    }

    #[test]
    fn edit_loop_on_class_task_is_rejected() {
        assert_eq!(run_capture(&["edit-infer", "--task", "a"]).0, 1);
    }

    #[test]
    fn oracle_check_small_run() {
        let (code, out, _) = run_capture(&["oracle-check", "--trials", "50"]);
        assert_eq!(code, 0);
        assert!(out.contains("marginal equality holds     50/50"), "{out}");
    }
}
