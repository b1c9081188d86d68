//! Exact finite-space check that a joint match between `(x, L(x))` and
//! `(G(c), c)`, together with correct supervised rows, forces the labeller's
//! induced marginal to equal the true prior on supervised conditions.

use rand::Rng;
use serde::Serialize;

use crate::error::{Error, Result};

const STOCHASTIC_TOL: f64 = 1e-12;
/// Floor on joint entries before normalization, keeping every conditional defined.
pub const SUPPORT_FLOOR: f64 = 1e-6;
pub const BOUND_FACTOR: f64 = 10.0;

/// `labeller` is `n×k` with rows `p_L(·|x)`; `generator` is `k×n` with rows
/// `p_G(·|c)`; `joint` is `n×k`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OracleInstance {
    pub n: usize,
    pub k: usize,
    pub p_x: Vec<f64>,
    pub joint: Vec<Vec<f64>>,
    pub labeller: Vec<Vec<f64>>,
    pub generator: Vec<Vec<f64>>,
    pub s_x: Vec<usize>,
    pub s_c: Vec<usize>,
}

fn check_matrix(name: &str, m: &[Vec<f64>], rows: usize, cols: usize) -> Result<()> {
    if m.len() != rows || m.iter().any(|r| r.len() != cols) {
        return Err(Error::invalid(format!("{name} must be {rows}x{cols}")));
    }
    Ok(())
}

fn check_distribution(name: &str, v: &[f64]) -> Result<()> {
    if v.iter().any(|p| !(*p >= 0.0) || !p.is_finite()) {
        return Err(Error::invalid(format!("{name} has a negative or non-finite entry")));
    }
    let s: f64 = v.iter().sum();
    if (s - 1.0).abs() > STOCHASTIC_TOL {
        return Err(Error::invalid(format!("{name} sums to {s}, not 1")));
    }
    Ok(())
}

impl OracleInstance {
    pub fn validate(&self) -> Result<()> {
        let (n, k) = (self.n, self.k);
        if n == 0 || k == 0 {
            return Err(Error::invalid("oracle instance needs n, k >= 1"));
        }
        if self.p_x.len() != n {
            return Err(Error::invalid(format!("p_X must have length {n}")));
        }
        check_distribution("p_X", &self.p_x)?;
        check_matrix("joint", &self.joint, n, k)?;
        check_matrix("labeller", &self.labeller, n, k)?;
        check_matrix("generator", &self.generator, k, n)?;
        let flat: Vec<f64> = self.joint.iter().flatten().copied().collect();
        check_distribution("joint", &flat)?;
        for (x, row) in self.joint.iter().enumerate() {
            let m: f64 = row.iter().sum();
            if (m - self.p_x[x]).abs() > STOCHASTIC_TOL {
                return Err(Error::invalid(format!("joint x-marginal differs from p_X at x = {x}")));
            }
        }
        for (x, row) in self.labeller.iter().enumerate() {
            check_distribution(&format!("labeller row {x}"), row)?;
        }
        for (c, row) in self.generator.iter().enumerate() {
            check_distribution(&format!("generator row {c}"), row)?;
        }
        if self.s_x.iter().any(|&x| x >= n) || self.s_c.iter().any(|&c| c >= k) {
            return Err(Error::invalid("supervised index out of range"));
        }
        Ok(())
    }

    /// True prior `p_C(c) = Σ_x p_{X,C}(x, c)`.
    pub fn p_c(&self) -> Vec<f64> {
        (0..self.k).map(|c| self.joint.iter().map(|r| r[c]).sum()).collect()
    }
}

/// `p_L(c) = Σ_x p_L(c|x) p_X(x)`.
pub fn induced_label_marginal(inst: &OracleInstance) -> Result<Vec<f64>> {
    inst.validate()?;
    Ok(marginal(inst))
}

fn marginal(inst: &OracleInstance) -> Vec<f64> {
    (0..inst.k)
        .map(|c| inst.labeller.iter().zip(&inst.p_x).map(|(row, px)| row[c] * px).sum())
        .collect()
}

/// `max_{x,c} |p_X(x) p_L(c|x) - p_G(x|c) p_L(c)|`.
pub fn joint_match_residual(inst: &OracleInstance) -> f64 {
    let pl = marginal(inst);
    let mut worst: f64 = 0.0;
    for x in 0..inst.n {
        for c in 0..inst.k {
            let lhs = inst.p_x[x] * inst.labeller[x][c];
            let rhs = inst.generator[c][x] * pl[c];
            worst = worst.max((lhs - rhs).abs());
        }
    }
    worst
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MarginalReport {
    pub joint_residual: f64,
    /// Labeller rows against true `p(c|x)` on `S_x`.
    pub labeller_residual: f64,
    /// Generator rows against true `p(x|c)` on `S_c`.
    pub generator_residual: f64,
    /// `(c, |p_L(c) - p_C(c)|)` for each `c` in `S_c`.
    pub gaps: Vec<(usize, f64)>,
    pub holds: bool,
}

impl MarginalReport {
    pub fn max_gap(&self) -> f64 {
        self.gaps.iter().map(|g| g.1).fold(0.0, f64::max)
    }
}

pub fn verify_marginal_consequence(inst: &OracleInstance, tol: f64) -> Result<MarginalReport> {
    inst.validate()?;
    if inst.s_x.is_empty() || inst.s_c.is_empty() {
        return Err(Error::invalid("supervised index sets must be non-empty"));
    }
    let pc = inst.p_c();
    let mut labeller: f64 = 0.0;
    for &x in &inst.s_x {
        for c in 0..inst.k {
            let truth = inst.joint[x][c] / inst.p_x[x];
            labeller = labeller.max((inst.labeller[x][c] - truth).abs());
        }
    }
    let mut generator: f64 = 0.0;
    for &c in &inst.s_c {
        for x in 0..inst.n {
            let truth = inst.joint[x][c] / pc[c];
            generator = generator.max((inst.generator[c][x] - truth).abs());
        }
    }
    let joint = joint_match_residual(inst);
    let pl = marginal(inst);
    let gaps: Vec<(usize, f64)> = inst.s_c.iter().map(|&c| (c, (pl[c] - pc[c]).abs())).collect();
    let premises = joint <= tol && labeller <= tol && generator <= tol;
    let holds = premises && gaps.iter().all(|g| g.1 <= BOUND_FACTOR * tol);
    Ok(MarginalReport {
        joint_residual: joint,
        labeller_residual: labeller,
        generator_residual: generator,
        gaps,
        holds,
    })
}

fn random_subset<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<usize> {
    let mut s: Vec<usize> = (0..n).filter(|_| rng.random::<bool>()).collect();
    if s.is_empty() {
        s.push(rng.random_range(0..n));
    }
    s
}

fn random_joint<R: Rng + ?Sized>(n: usize, k: usize, rng: &mut R) -> Vec<Vec<f64>> {
    let mut joint: Vec<Vec<f64>> = (0..n)
        .map(|_| (0..k).map(|_| rng.random::<f64>().max(SUPPORT_FLOOR)).collect())
        .collect();
    let total: f64 = joint.iter().flatten().sum();
    joint.iter_mut().flatten().for_each(|v| *v /= total);
    joint
}

fn random_rows<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Vec<Vec<f64>> {
    (0..rows)
        .map(|_| {
            let r: Vec<f64> = (0..cols).map(|_| rng.random::<f64>().max(SUPPORT_FLOOR)).collect();
            let s: f64 = r.iter().sum();
            r.into_iter().map(|v| v / s).collect()
        })
        .collect()
}

/// Generator rows `p_X(x) p_L(c|x) / p_L(c)`, which make the joint match exact.
fn matched_generator(p_x: &[f64], labeller: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let k = labeller[0].len();
    (0..k)
        .map(|c| {
            let col: Vec<f64> = labeller.iter().zip(p_x).map(|(r, px)| r[c] * px).collect();
            let s: f64 = col.iter().sum();
            col.into_iter().map(|v| v / s).collect()
        })
        .collect()
}

fn p_x_of(joint: &[Vec<f64>]) -> Vec<f64> {
    joint.iter().map(|r| r.iter().sum()).collect()
}

/// Random full-support joint with labeller and generator set to its exact
/// conditionals.
pub fn enumerate_consistent_instance<R: Rng + ?Sized>(n: usize, k: usize, rng: &mut R) -> Result<OracleInstance> {
    if n == 0 || k == 0 {
        return Err(Error::invalid("oracle instance needs n, k >= 1"));
    }
    let joint = random_joint(n, k, rng);
    let p_x = p_x_of(&joint);
    let labeller: Vec<Vec<f64>> = joint
        .iter()
        .zip(&p_x)
        .map(|(r, px)| r.iter().map(|v| v / px).collect())
        .collect();
    let generator = matched_generator(&p_x, &labeller);
    Ok(OracleInstance {
        n,
        k,
        p_x,
        joint,
        labeller,
        s_x: random_subset(n, rng),
        s_c: random_subset(k, rng),
        generator,
    })
}

/// Like [`enumerate_consistent_instance`] but the labeller departs from the
/// true conditional off the supervised sets: outside `S_x` it keeps the true
/// mass on `S_c` and spreads the rest randomly over the other conditions.
pub fn enumerate_non_bayes_instance<R: Rng + ?Sized>(n: usize, k: usize, rng: &mut R) -> Result<OracleInstance> {
    let mut inst = enumerate_consistent_instance(n, k, rng)?;
    let unsup_c: Vec<usize> = (0..k).filter(|c| !inst.s_c.contains(c)).collect();
    if !unsup_c.is_empty() {
        for x in (0..n).filter(|x| !inst.s_x.contains(x)) {
            let row = &mut inst.labeller[x];
            let free: f64 = unsup_c.iter().map(|&c| row[c]).sum();
            let w: Vec<f64> = unsup_c.iter().map(|_| rng.random::<f64>().max(SUPPORT_FLOOR)).collect();
            let ws: f64 = w.iter().sum();
            for (&c, wi) in unsup_c.iter().zip(&w) {
                row[c] = free * wi / ws;
            }
        }
    }
    inst.generator = matched_generator(&inst.p_x, &inst.labeller);
    Ok(inst)
}

/// Adds `delta` to generator entry `(c, x)` and renormalizes the row.
pub fn perturb_generator(inst: &OracleInstance, c: usize, x: usize, delta: f64) -> Result<OracleInstance> {
    if inst.n < 2 {
        return Err(Error::invalid("perturbing a one-point generator row is a no-op after renormalization"));
    }
    if c >= inst.k || x >= inst.n || !(delta > 0.0) {
        return Err(Error::invalid("perturbation index out of range or non-positive delta"));
    }
    let mut out = inst.clone();
    let row = &mut out.generator[c];
    row[x] += delta;
    let s: f64 = row.iter().sum();
    row.iter_mut().for_each(|v| *v /= s);
    Ok(out)
}

/// Unconstrained instance: independent random joint, labeller and generator.
pub fn random_instance<R: Rng + ?Sized>(n: usize, k: usize, rng: &mut R) -> OracleInstance {
    let joint = random_joint(n, k, rng);
    OracleInstance {
        n,
        k,
        p_x: p_x_of(&joint),
        joint,
        labeller: random_rows(n, k, rng),
        generator: random_rows(k, n, rng),
        s_x: random_subset(n, rng),
        s_c: random_subset(k, rng),
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Counterexample {
    pub trial: usize,
    pub report: MarginalReport,
    pub instance: OracleInstance,
}

#[derive(Clone, Debug, Serialize)]
pub struct OracleCheckSummary {
    pub trials: usize,
    pub tol: f64,
    pub theorem_holds: usize,
    pub max_gap: f64,
    pub max_joint_residual: f64,
    /// Unconstrained instances whose joint residual exceeded 0.01.
    pub probe_trials: usize,
    /// Of those, instances with `p_L(c) != p_C(c)` for some supervised `c`.
    pub probe_failures: usize,
    #[serde(skip)]
    pub counterexamples: Vec<Counterexample>,
}

impl OracleCheckSummary {
    pub fn probe_failure_rate(&self) -> f64 {
        if self.probe_trials == 0 {
            0.0
        } else {
            self.probe_failures as f64 / self.probe_trials as f64
        }
    }
}

pub const PROBE_RESIDUAL: f64 = 0.01;
const PROBE_GAP: f64 = 1e-9;

/// Checks the marginal consequence on `trials` consistent instances (half
/// Bayes, half non-Bayes labellers) with `n ≤ nmax`, `k ≤ kmax`, and runs the
/// contrapositive probe on as many unconstrained instances.
pub fn run_oracle_check<R: Rng + ?Sized>(
    trials: usize,
    nmax: usize,
    kmax: usize,
    tol: f64,
    rng: &mut R,
) -> Result<OracleCheckSummary> {
    if nmax == 0 || kmax == 0 {
        return Err(Error::invalid("nmax and kmax must be at least 1"));
    }
    let mut summary = OracleCheckSummary {
        trials,
        tol,
        theorem_holds: 0,
        max_gap: 0.0,
        max_joint_residual: 0.0,
        probe_trials: 0,
        probe_failures: 0,
        counterexamples: Vec::new(),
    };
    for trial in 0..trials {
        let (n, k) = (rng.random_range(1..=nmax), rng.random_range(1..=kmax));
        let inst = if trial % 2 == 0 {
            enumerate_consistent_instance(n, k, rng)?
        } else {
            enumerate_non_bayes_instance(n, k, rng)?
        };
        let report = verify_marginal_consequence(&inst, tol)?;
        summary.max_gap = summary.max_gap.max(report.max_gap());
        summary.max_joint_residual = summary.max_joint_residual.max(report.joint_residual);
        if report.holds {
            summary.theorem_holds += 1;
        } else {
            summary.counterexamples.push(Counterexample {
                trial,
                report,
                instance: inst,
            });
        }

        let probe = random_instance(n, k, rng);
        if joint_match_residual(&probe) > PROBE_RESIDUAL {
            summary.probe_trials += 1;
            let r = verify_marginal_consequence(&probe, tol)?;
            if r.max_gap() > PROBE_GAP {
                summary.probe_failures += 1;
            }
        }
    }
    Ok(summary)
}
