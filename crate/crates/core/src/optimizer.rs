//! Offloading decision solvers.
//!
//! [`solve_pso`] is a sigmoid-transfer binary particle swarm: velocities are
//! continuous, and each position bit is resampled every iteration as
//! `x = u < sigmoid(v)` with `u` drawn from the seeded generator.
//! Constraints are handled with a static penalty, and any feasible particle
//! outranks every infeasible one.
//!
//! [`brute_force_solve`] enumerates all `2^N` decisions and serves as the
//! exact reference on small instances.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cost::{self, kb_to_bits, ConstraintBounds, ConstraintReport, CostError, CostWeights, TaskProfile};

/// Largest instance the exhaustive solver accepts.
pub const BRUTE_FORCE_MAX_TASKS: usize = 20;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OptimizerError {
    #[error(transparent)]
    Cost(#[from] CostError),
    #[error("invalid solver configuration: {0}")]
    Config(&'static str),
    #[error("instance has no tasks")]
    Empty,
    #[error("exhaustive search limited to {max} tasks, got {got}")]
    TooLarge { max: usize, got: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OffloadDecision {
    /// `true` = offload task n to the edge.
    pub x: Vec<bool>,
    pub objective: f64,
    pub feasible: bool,
    pub constraint_report: ConstraintReport,
}

impl OffloadDecision {
    /// Evaluates `x` through the cost model.
    pub fn evaluate(
        tasks: &[TaskProfile],
        x: Vec<bool>,
        weights: &CostWeights,
        bounds: &ConstraintBounds,
    ) -> Result<Self, CostError> {
        let objective = cost::objective(tasks, &x, weights)?;
        let constraint_report = cost::check_constraints(tasks, &x, bounds)?;
        Ok(Self { feasible: constraint_report.all_satisfied(), x, objective, constraint_report })
    }

    pub fn offloaded(&self) -> usize {
        self.x.iter().filter(|&&b| b).count()
    }

    /// Decision vector rendered as a `0`/`1` string.
    pub fn bits(&self) -> String {
        self.x.iter().map(|&b| if b { '1' } else { '0' }).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PsoConfig {
    pub swarm_size: usize,
    pub max_iterations: usize,
    pub inertia: f64,
    pub cognitive: f64,
    pub social: f64,
    pub v_max: f64,
    /// Multiplier on summed constraint violation for infeasible particles.
    pub penalty: f64,
    pub seed: u64,
}

impl Default for PsoConfig {
    fn default() -> Self {
        Self {
            swarm_size: 30,
            max_iterations: 200,
            inertia: 0.7,
            cognitive: 1.5,
            social: 1.5,
            v_max: 4.0,
            penalty: 1.0e3,
            seed: 0,
        }
    }
}

impl PsoConfig {
    pub fn validate(&self) -> Result<(), OptimizerError> {
        if self.swarm_size < 2 {
            return Err(OptimizerError::Config("swarm_size must be at least 2"));
        }
        if self.max_iterations < 1 {
            return Err(OptimizerError::Config("max_iterations must be at least 1"));
        }
        if self.v_max.is_nan() || self.v_max <= 0.0 {
            return Err(OptimizerError::Config("v_max must be positive"));
        }
        if self.penalty.is_nan() || self.penalty <= 0.0 {
            return Err(OptimizerError::Config("penalty must be positive"));
        }
        if ![self.inertia, self.cognitive, self.social].iter().all(|v| v.is_finite()) {
            return Err(OptimizerError::Config("coefficients must be finite"));
        }
        Ok(())
    }
}

/// Ranking key: feasible beats infeasible, then lower value wins.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Score {
    feasible: bool,
    value: f64,
}

impl Score {
    fn better_than(&self, other: &Score) -> bool {
        match (self.feasible, other.feasible) {
            (true, false) => true,
            (false, true) => false,
            _ => self.value < other.value,
        }
    }
}

/// Precomputed per-task costs so fitness evaluation is O(N) with no
/// repeated divisions.
struct Evaluator {
    local: Vec<cost::CostTriple>,
    offload: Vec<cost::CostTriple>,
    weights: CostWeights,
    bounds: ConstraintBounds,
    penalty: f64,
}

impl Evaluator {
    fn new(tasks: &[TaskProfile], weights: &CostWeights, bounds: &ConstraintBounds, penalty: f64) -> Self {
        Self {
            local: tasks.iter().map(cost::local_costs).collect(),
            offload: tasks.iter().map(cost::offload_costs).collect(),
            weights: *weights,
            bounds: *bounds,
            penalty,
        }
    }

    fn score(&self, x: &[bool]) -> Score {
        // same accumulation order as cost::check_constraints, so boundary
        // cases classify identically
        let mut obj = 0.0;
        let (mut t_off, mut t_loc, mut e_off, mut e_loc, mut m_off, mut m_loc) = (0.0, 0.0, 0.0, 0.0, 0.0, 0.0);
        for (i, &xi) in x.iter().enumerate() {
            let c = if xi { self.offload[i] } else { self.local[i] };
            obj += self.weights.apply(c);
            if xi {
                t_off += c.time;
                e_off += c.energy;
                m_off += c.memory;
            } else {
                t_loc += c.time;
                e_loc += c.energy;
                m_loc += c.memory;
            }
        }
        let violation = (t_off - t_loc).max(0.0)
            + (e_off - e_loc).max(0.0)
            + (t_off + t_loc - self.bounds.tau).max(0.0)
            + (m_off + m_loc - self.bounds.zeta).max(0.0);
        if violation == 0.0 {
            Score { feasible: true, value: obj }
        } else {
            Score { feasible: false, value: obj + self.penalty * violation }
        }
    }
}

fn sigmoid(v: f64) -> f64 {
    1.0 / (1.0 + (-v).exp())
}

fn check_inputs(tasks: &[TaskProfile], weights: &CostWeights, bounds: &ConstraintBounds) -> Result<(), OptimizerError> {
    if tasks.is_empty() {
        return Err(OptimizerError::Empty);
    }
    weights.validate()?;
    bounds.validate()?;
    Ok(())
}

/// Binary PSO over offloading decisions.
///
/// Returns the best feasible decision seen. If no particle was ever
/// feasible the best penalised decision is returned with `feasible = false`.
/// Output depends only on the inputs and `cfg.seed`.
pub fn solve_pso(
    tasks: &[TaskProfile],
    weights: &CostWeights,
    bounds: &ConstraintBounds,
    cfg: &PsoConfig,
) -> Result<OffloadDecision, OptimizerError> {
    check_inputs(tasks, weights, bounds)?;
    cfg.validate()?;
    let n = tasks.len();
    let eval = Evaluator::new(tasks, weights, bounds, cfg.penalty);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let mut positions: Vec<Vec<bool>> =
        (0..cfg.swarm_size).map(|_| (0..n).map(|_| rng.gen_bool(0.5)).collect()).collect();
    let mut velocities: Vec<Vec<f64>> =
        (0..cfg.swarm_size).map(|_| (0..n).map(|_| rng.gen_range(-cfg.v_max..=cfg.v_max)).collect()).collect();
    let mut personal_best = positions.clone();
    let mut personal_score: Vec<Score> = positions.iter().map(|x| eval.score(x)).collect();

    let mut global = 0;
    for i in 1..cfg.swarm_size {
        if personal_score[i].better_than(&personal_score[global]) {
            global = i;
        }
    }
    let mut global_best = personal_best[global].clone();
    let mut global_score = personal_score[global];

    let bit = |b: bool| if b { 1.0 } else { 0.0 };
    for _ in 0..cfg.max_iterations {
        for p in 0..cfg.swarm_size {
            let (x, v) = (&mut positions[p], &mut velocities[p]);
            for d in 0..n {
                let r1: f64 = rng.gen();
                let r2: f64 = rng.gen();
                let xd = bit(x[d]);
                let nv = cfg.inertia * v[d]
                    + cfg.cognitive * r1 * (bit(personal_best[p][d]) - xd)
                    + cfg.social * r2 * (bit(global_best[d]) - xd);
                v[d] = nv.clamp(-cfg.v_max, cfg.v_max);
                x[d] = rng.gen::<f64>() < sigmoid(v[d]);
            }
            let s = eval.score(x);
            if s.better_than(&personal_score[p]) {
                personal_score[p] = s;
                personal_best[p].clone_from(x);
                if s.better_than(&global_score) {
                    global_score = s;
                    global_best.clone_from(x);
                }
            }
        }
    }

    Ok(OffloadDecision::evaluate(tasks, global_best, weights, bounds)?)
}

/// Exact optimum by enumeration of all `2^N` decisions.
///
/// Candidates are visited in lexicographic order of `x` (task 0 most
/// significant, local before offload) and only strict improvements replace
/// the incumbent, so ties resolve to the lexicographically smallest `x`.
/// When nothing is feasible, the decision with the least total violation
/// (then lowest objective) is returned with `feasible = false`.
pub fn brute_force_solve(
    tasks: &[TaskProfile],
    weights: &CostWeights,
    bounds: &ConstraintBounds,
) -> Result<OffloadDecision, OptimizerError> {
    check_inputs(tasks, weights, bounds)?;
    let n = tasks.len();
    if n > BRUTE_FORCE_MAX_TASKS {
        return Err(OptimizerError::TooLarge { max: BRUTE_FORCE_MAX_TASKS, got: n });
    }
    let mut best_feasible: Option<(f64, u32)> = None;
    let mut least_bad: Option<(f64, f64, u32)> = None;
    let mut x = vec![false; n];
    for mask in 0u32..(1u32 << n) {
        for (i, xi) in x.iter_mut().enumerate() {
            *xi = mask >> (n - 1 - i) & 1 == 1;
        }
        let report = cost::check_constraints(tasks, &x, bounds)?;
        let obj = cost::objective(tasks, &x, weights)?;
        if report.all_satisfied() {
            if best_feasible.is_none_or(|(b, _)| obj < b) {
                best_feasible = Some((obj, mask));
            }
        } else if best_feasible.is_none() {
            let viol = report.total_violation();
            if least_bad.is_none_or(|(v, o, _)| viol < v || (viol == v && obj < o)) {
                least_bad = Some((viol, obj, mask));
            }
        }
    }
    let mask = match (best_feasible, least_bad) {
        (Some((_, m)), _) => m,
        (None, Some((_, _, m))) => m,
        (None, None) => unreachable!("at least one candidate is enumerated"),
    };
    let x = (0..n).map(|i| mask >> (n - 1 - i) & 1 == 1).collect();
    Ok(OffloadDecision::evaluate(tasks, x, weights, bounds)?)
}

/// A seeded random offloading instance for solver testing and benchmarks.
#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    pub tasks: Vec<TaskProfile>,
    pub bounds: ConstraintBounds,
}

/// Draws `n` tasks around the magnitudes of a phone/edge pair (100 to
/// 1200 KB files, a 1.5 to 3 GHz phone, a 3 to 6 GHz edge running the same
/// workload at 60% to 100% of the phone's cycles per bit, 4 to 11 Mbit/s
/// uplink) with latency and memory budgets between 80% and 115% of the
/// all-local totals. Budgets often bind and about a quarter of instances
/// are infeasible outright.
pub fn random_instance(seed: u64, n: usize) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let tasks: Vec<TaskProfile> = (0..n)
        .map(|i| {
            let size_bits = kb_to_bits(rng.gen_range(100.0..1200.0));
            let cpu_per_bit_local = rng.gen_range(200.0..1500.0);
            TaskProfile {
                task_id: format!("task-{i}"),
                size_bits,
                cpu_per_bit_local,
                cpu_per_bit_enc: rng.gen_range(10.0..60.0),
                cpu_per_bit_edge: cpu_per_bit_local * rng.gen_range(0.6..1.0),
                freq_local: rng.gen_range(1.5e9..3.0e9),
                freq_edge: rng.gen_range(3.0e9..6.0e9),
                rate_bits_per_sec: rng.gen_range(4.0e6..11.0e6),
                energy_local: rng.gen_range(1.0..10.0),
                mem_local: rng.gen_range(25.0..95.0),
                power_enc: rng.gen_range(0.2..1.0),
                power_trans: rng.gen_range(1.0..8.0),
                mem_offload: rng.gen_range(20.0..85.0),
            }
        })
        .collect();
    let t: f64 = tasks.iter().map(cost::local_time).sum();
    let m: f64 = tasks.iter().map(|p| p.mem_local).sum();
    let bounds = ConstraintBounds { tau: t * rng.gen_range(0.8..1.15), zeta: m * rng.gen_range(0.8..1.15) };
    Instance { tasks, bounds }
}
