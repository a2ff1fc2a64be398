//! Gaussian environment, single runs, batches and their summaries.

use crate::chartime::{CharTimeError, CharTimeSolver, PreparedSolver};
use crate::linalg::{ols_estimate, EstimatorState, PseudoInverse, Vector};
use crate::model::{greedy_answer, is_eps_optimal, ModelError, ProblemInstance};
use crate::sampling::{CandidateRule, Policy, RoundCtx, SamplerConfig, SamplingError, Step};
use crate::stopping::{Schedule, ScheduleState, StopThreshold, StoppingError, ThresholdKind};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::io::{Read, Write};
use std::time::Instant;
use thiserror::Error;

pub const DEFAULT_MAX_ROUNDS: u64 = 10_000_000;
pub const SUBSAMPLE: usize = 100;

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Sampling(#[from] SamplingError),
    #[error(transparent)]
    Stopping(#[from] StoppingError),
    #[error(transparent)]
    CharTime(#[from] CharTimeError),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("invalid run configuration: {0}")]
    Config(String),
    #[error("worker pool: {0}")]
    Pool(String),
}

// Acklam's rational approximation of the standard normal quantile.
const ACKLAM_A: [f64; 6] = [
    -3.969683028665376e+01,
    2.209460984245205e+02,
    -2.759285104469687e+02,
    1.383577518672690e+02,
    -3.066479806614716e+01,
    2.506628277459239e+00,
];
const ACKLAM_B: [f64; 5] = [
    -5.447609879822406e+01,
    1.615858368580409e+02,
    -1.556989798598866e+02,
    6.680131188771972e+01,
    -1.328068155288572e+01,
];
const ACKLAM_C: [f64; 6] = [
    -7.784894002430293e-03,
    -3.223964580411365e-01,
    -2.400758277161838e+00,
    -2.549732539343734e+00,
    4.374664141464968e+00,
    2.938163982698783e+00,
];
const ACKLAM_D: [f64; 4] = [
    7.784695709041462e-03,
    3.224671290700398e-01,
    2.445134137142996e+00,
    3.754408661907416e+00,
];

/// Standard normal quantile (relative error below 1.2e-9 on (0,1)).
pub fn normal_quantile(p: f64) -> f64 {
    let (a, b, c, d) = (ACKLAM_A, ACKLAM_B, ACKLAM_C, ACKLAM_D);
    const P_LOW: f64 = 0.02425;
    if p < P_LOW {
        let q = (-2.0 * p.ln()).sqrt();
        (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5])
            / ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0)
    } else if p <= 1.0 - P_LOW {
        let q = p - 0.5;
        let r = q * q;
        (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q
            / (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0)
    } else {
        -normal_quantile(1.0 - p)
    }
}

/// Standard normal draw by inversion of a uniform in (0,1).
pub fn standard_normal<R: RngCore>(rng: &mut R) -> f64 {
    loop {
        let u: f64 = rng.random();
        if u > 0.0 {
            return normal_quantile(u);
        }
    }
}

/// `⟨μ, a⟩ + N(0,1)`.
pub fn sample_reward<R: RngCore>(mu: &Vector, arm: &Vector, rng: &mut R) -> f64 {
    mu.dot(arm) + standard_normal(rng)
}

/// Noise stream of run `seed`; stream 1 is reserved for randomized schedules.
pub fn noise_rng(seed: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(0);
    r
}

fn default_max_rounds() -> u64 {
    DEFAULT_MAX_ROUNDS
}

/// Everything that defines one run besides the instance, δ and the seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub sampler: SamplerConfig,
    #[serde(default)]
    pub candidate: CandidateRule,
    #[serde(default = "default_threshold")]
    pub threshold: ThresholdKind,
    #[serde(default = "default_schedule")]
    pub schedule: Schedule,
    /// Solver for the furthest rule and the fixed oracle; defaults by arm count.
    #[serde(default)]
    pub solver: Option<CharTimeSolver>,
    #[serde(default = "default_max_rounds")]
    pub max_rounds: u64,
}

fn default_threshold() -> ThresholdKind {
    ThresholdKind::Heuristic
}

fn default_schedule() -> Schedule {
    Schedule::EveryStep
}

impl RunConfig {
    pub fn new(sampler: SamplerConfig) -> Self {
        Self {
            sampler,
            candidate: CandidateRule::InstantFurthest,
            threshold: ThresholdKind::Heuristic,
            schedule: Schedule::EveryStep,
            solver: None,
            max_rounds: DEFAULT_MAX_ROUNDS,
        }
    }

    pub fn with_candidate(mut self, c: CandidateRule) -> Self {
        self.candidate = c;
        self
    }

    pub fn with_threshold(mut self, t: ThresholdKind) -> Self {
        self.threshold = t;
        self
    }

    pub fn with_schedule(mut self, s: Schedule) -> Self {
        self.schedule = s;
        self
    }

    pub fn with_solver(mut self, s: CharTimeSolver) -> Self {
        self.solver = Some(s);
        self
    }

    fn needs_solver(&self) -> bool {
        let oracle_furthest = matches!(
            self.sampler,
            SamplerConfig::LeBai {
                oracle: CandidateRule::Furthest,
                ..
            }
        );
        let fixed_unset = matches!(self.sampler, SamplerConfig::FixedOracle { w: None });
        self.candidate == CandidateRule::Furthest || oracle_furthest || fixed_unset
    }
}

/// Per-instance precomputation shared by all runs of a batch.
#[derive(Debug, Clone)]
pub struct Prepared {
    solver: Option<PreparedSolver>,
    fixed_w: Option<Vec<f64>>,
}

impl Prepared {
    pub fn new(cfg: &RunConfig, inst: &ProblemInstance) -> Result<Self, SimError> {
        cfg.sampler.validate(inst)?;
        let n0 = inst.n_arms() as u64;
        cfg.schedule.validate(n0)?;
        if cfg.max_rounds <= n0 {
            return Err(SimError::Config(format!(
                "max_rounds must exceed the {n0} initialization pulls"
            )));
        }
        let solver = if cfg.needs_solver() {
            let s = cfg
                .solver
                .clone()
                .unwrap_or_else(|| CharTimeSolver::default_for(inst.n_arms()));
            Some(PreparedSolver::new(inst, &s)?)
        } else {
            None
        };
        let fixed_w = match (&cfg.sampler, &solver) {
            (SamplerConfig::FixedOracle { w: None }, Some(s)) => Some(
                s.solve(inst, inst.mu(), crate::chartime::Outer::EpsOptimal)?
                    .w_f,
            ),
            _ => None,
        };
        Ok(Self { solver, fixed_w })
    }
}

/// One simulation outcome. Equality ignores `wall_time`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunRecord {
    pub algo_tag: String,
    pub candidate_tag: String,
    pub schedule_tag: String,
    pub threshold_kind: String,
    pub mode: String,
    pub epsilon: f64,
    pub delta: f64,
    pub seed: u64,
    pub tau: u64,
    pub recommended: usize,
    pub correct: bool,
    pub censored: bool,
    pub per_arm_counts: Vec<u64>,
    pub wall_time: f64,
}

impl PartialEq for RunRecord {
    fn eq(&self, o: &Self) -> bool {
        self.algo_tag == o.algo_tag
            && self.candidate_tag == o.candidate_tag
            && self.schedule_tag == o.schedule_tag
            && self.threshold_kind == o.threshold_kind
            && self.mode == o.mode
            && self.epsilon.to_bits() == o.epsilon.to_bits()
            && self.delta.to_bits() == o.delta.to_bits()
            && self.seed == o.seed
            && self.tau == o.tau
            && self.recommended == o.recommended
            && self.correct == o.correct
            && self.censored == o.censored
            && self.per_arm_counts == o.per_arm_counts
    }
}

pub fn run_one(
    cfg: &RunConfig,
    inst: &ProblemInstance,
    delta: f64,
    seed: u64,
) -> Result<RunRecord, SimError> {
    let prep = Prepared::new(cfg, inst)?;
    run_prepared(cfg, &prep, inst, delta, seed)
}

/// Runs until the stopping rule fires or `max_rounds` observations were made.
pub fn run_prepared(
    cfg: &RunConfig,
    prep: &Prepared,
    inst: &ProblemInstance,
    delta: f64,
    seed: u64,
) -> Result<RunRecord, SimError> {
    let start = Instant::now();
    let k = inst.n_arms();
    let n0 = k as u64;
    let mut rng = noise_rng(seed);
    let mut est = EstimatorState::new(inst.d(), k);
    for (a, arm) in inst.arms().iter().enumerate() {
        est.observe(a, arm, sample_reward(inst.mu(), arm, &mut rng));
    }
    let threshold = StopThreshold::new(cfg.threshold.bind(k), delta)?;
    let schedule = ScheduleState::new(cfg.schedule.clone(), n0, seed);
    let mut policy = Policy::new(
        &cfg.sampler,
        cfg.candidate,
        schedule,
        inst,
        prep.solver.as_ref(),
        prep.fixed_w.as_deref(),
    )?;

    let mut t = n0 + 1;
    let (recommended, censored) = loop {
        let mu_hat = ols_estimate(&est).map_err(ModelError::from)?;
        if t > cfg.max_rounds {
            break (greedy_answer(inst, &mu_hat), true);
        }
        let vn = PseudoInverse::of(est.design());
        let ctx = RoundCtx {
            inst,
            t,
            n0,
            mu_hat: &mu_hat,
            counts: est.counts(),
            vn: &vn,
            threshold: &threshold,
            solver: prep.solver.as_ref(),
        };
        match policy.step(&ctx)? {
            Step::Stop(z) => break (z, false),
            Step::Pull(a) => {
                let arm = &inst.arms()[a];
                est.observe(a, arm, sample_reward(inst.mu(), arm, &mut rng));
                policy.record(a);
                t += 1;
            }
        }
    };
    Ok(RunRecord {
        algo_tag: cfg.sampler.tag(),
        candidate_tag: cfg.candidate.tag().to_string(),
        schedule_tag: cfg.schedule.tag(),
        threshold_kind: cfg.threshold.tag().to_string(),
        mode: inst.mode().tag().to_string(),
        epsilon: inst.epsilon(),
        delta,
        seed,
        tau: t - 1,
        recommended,
        correct: is_eps_optimal(inst, inst.mu(), recommended),
        censored,
        per_arm_counts: est.counts().to_vec(),
        wall_time: start.elapsed().as_secs_f64(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BatchSummary {
    pub n_runs: usize,
    pub mean_tau: f64,
    /// Standard deviation of the means of consecutive 100-run sub-samples.
    pub std_of_subsample_means: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub error_rate: f64,
    pub n_censored: usize,
    pub mean_counts: Vec<f64>,
}

/// Linearly interpolated quantile of sorted data.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

impl BatchSummary {
    pub fn from_records(records: &[RunRecord]) -> Self {
        let n = records.len();
        let taus: Vec<f64> = records.iter().map(|r| r.tau as f64).collect();
        let mean_tau = taus.iter().sum::<f64>() / n.max(1) as f64;
        let means: Vec<f64> = taus
            .chunks(SUBSAMPLE)
            .filter(|c| c.len() == SUBSAMPLE)
            .map(|c| c.iter().sum::<f64>() / c.len() as f64)
            .collect();
        let std = if means.len() >= 2 {
            let m = means.iter().sum::<f64>() / means.len() as f64;
            (means.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (means.len() - 1) as f64).sqrt()
        } else {
            0.0
        };
        let mut sorted = taus.clone();
        sorted.sort_by(f64::total_cmp);
        let k = records.first().map_or(0, |r| r.per_arm_counts.len());
        let mut mean_counts = vec![0.0; k];
        for r in records {
            for (m, &c) in mean_counts.iter_mut().zip(&r.per_arm_counts) {
                *m += c as f64 / n as f64;
            }
        }
        BatchSummary {
            n_runs: n,
            mean_tau,
            std_of_subsample_means: std,
            q1: quantile_sorted(&sorted, 0.25),
            median: quantile_sorted(&sorted, 0.5),
            q3: quantile_sorted(&sorted, 0.75),
            error_rate: records.iter().filter(|r| !r.correct).count() as f64 / n.max(1) as f64,
            n_censored: records.iter().filter(|r| r.censored).count(),
            mean_counts,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Batch {
    pub records: Vec<RunRecord>,
    pub summary: BatchSummary,
}

/// Runs seeds `base_seed + i`; records come back in run order whatever the worker count.
pub fn run_batch(
    cfg: &RunConfig,
    inst: &ProblemInstance,
    delta: f64,
    n_runs: usize,
    base_seed: u64,
    workers: usize,
) -> Result<Batch, SimError> {
    if n_runs == 0 {
        return Err(SimError::Config("n_runs must be ≥ 1".into()));
    }
    let prep = Prepared::new(cfg, inst)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| SimError::Pool(e.to_string()))?;
    let records = pool.install(|| {
        (0..n_runs)
            .into_par_iter()
            .map(|i| run_prepared(cfg, &prep, inst, delta, base_seed.wrapping_add(i as u64)))
            .collect::<Result<Vec<_>, _>>()
    })?;
    let summary = BatchSummary::from_records(&records);
    Ok(Batch { records, summary })
}

const FIXED_COLUMNS: [&str; 12] = [
    "algo_tag",
    "candidate_tag",
    "schedule_tag",
    "threshold_kind",
    "mode",
    "epsilon",
    "delta",
    "seed",
    "tau",
    "recommended_index",
    "correct",
    "censored",
];

/// Writes the results CSV: fixed columns, then `n0..n{K−1}`.
pub fn write_results_csv<W: Write>(records: &[RunRecord], out: W) -> Result<(), SimError> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out);
    let k = records
        .iter()
        .map(|r| r.per_arm_counts.len())
        .max()
        .unwrap_or(0);
    let mut header: Vec<String> = FIXED_COLUMNS.iter().map(|s| s.to_string()).collect();
    header.extend((0..k).map(|i| format!("n{i}")));
    w.write_record(&header)?;
    for r in records {
        let mut row = vec![
            r.algo_tag.clone(),
            r.candidate_tag.clone(),
            r.schedule_tag.clone(),
            r.threshold_kind.clone(),
            r.mode.clone(),
            r.epsilon.to_string(),
            r.delta.to_string(),
            r.seed.to_string(),
            r.tau.to_string(),
            r.recommended.to_string(),
            r.correct.to_string(),
            r.censored.to_string(),
        ];
        row.extend((0..k).map(|i| {
            r.per_arm_counts
                .get(i)
                .map_or(String::new(), |c| c.to_string())
        }));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_results_csv<R: Read>(input: R) -> Result<Vec<RunRecord>, SimError> {
    let mut rd = csv::Reader::from_reader(input);
    let header = rd.headers()?.clone();
    for (i, name) in FIXED_COLUMNS.iter().enumerate() {
        if header.get(i) != Some(*name) {
            return Err(SimError::Config(format!("column {i} should be `{name}`")));
        }
    }
    let bad = |what: &str, v: &str| SimError::Config(format!("bad {what} `{v}`"));
    let mut out = Vec::new();
    for row in rd.records() {
        let row = row?;
        let f = |i: usize| row.get(i).unwrap_or("");
        let parse_u = |i: usize, what: &str| f(i).parse::<u64>().map_err(|_| bad(what, f(i)));
        let parse_f = |i: usize, what: &str| f(i).parse::<f64>().map_err(|_| bad(what, f(i)));
        let parse_b = |i: usize, what: &str| f(i).parse::<bool>().map_err(|_| bad(what, f(i)));
        let counts = (FIXED_COLUMNS.len()..row.len())
            .filter(|&i| !f(i).is_empty())
            .map(|i| parse_u(i, "count"))
            .collect::<Result<Vec<_>, _>>()?;
        out.push(RunRecord {
            algo_tag: f(0).to_string(),
            candidate_tag: f(1).to_string(),
            schedule_tag: f(2).to_string(),
            threshold_kind: f(3).to_string(),
            mode: f(4).to_string(),
            epsilon: parse_f(5, "epsilon")?,
            delta: parse_f(6, "delta")?,
            seed: parse_u(7, "seed")?,
            tau: parse_u(8, "tau")?,
            recommended: parse_u(9, "recommended_index")? as usize,
            correct: parse_b(10, "correct")?,
            censored: parse_b(11, "censored")?,
            per_arm_counts: counts,
            wall_time: 0.0,
        });
    }
    Ok(out)
}

/// Groups records by `(algo, candidate, schedule)` in first-appearance order.
pub fn summarize_groups(records: &[RunRecord]) -> Vec<((String, String, String), BatchSummary)> {
    let mut keys: Vec<(String, String, String)> = Vec::new();
    for r in records {
        let key = (
            r.algo_tag.clone(),
            r.candidate_tag.clone(),
            r.schedule_tag.clone(),
        );
        if !keys.contains(&key) {
            keys.push(key);
        }
    }
    keys.into_iter()
        .map(|key| {
            let group: Vec<RunRecord> = records
                .iter()
                .filter(|r| {
                    r.algo_tag == key.0 && r.candidate_tag == key.1 && r.schedule_tag == key.2
                })
                .cloned()
                .collect();
            let s = BatchSummary::from_records(&group);
            (key, s)
        })
        .collect()
}
