//! Command-line entry point: instance generation, characteristic times,
//! experiment batches, the greedy-vs-furthest answer study, summaries.

use crate::chartime::{
    dirichlet_candidates, CharTime, CharTimeError, CharTimeSolver, DesignTable, Outer,
    PreparedSolver,
};
use crate::linalg::Vector;
use crate::model::{argmax_set, Mode, ModelError, ProblemInstance};
use crate::sampling::{CandidateRule, SamplerConfig};
use crate::sim::{
    quantile_sorted, read_results_csv, run_batch, run_one, standard_normal, summarize_groups,
    write_results_csv, RunConfig, RunRecord, SimError, DEFAULT_MAX_ROUNDS,
};
use crate::stopping::{Schedule, ThresholdKind};
use clap::{Parser, Subcommand, ValueEnum};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use thiserror::Error;

pub const WORKERS_ENV: &str = "EPSBANDIT_WORKERS";
pub const DEFAULT_R_EPS: f64 = 0.1;
pub const RANDOM_ANSWERS: usize = 20;
const MAX_REGENERATIONS: u64 = 100;
const NEAR_ZERO: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum CliError {
    /// Malformed flags or configuration (exit code 2).
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    CharTime(#[from] CharTimeError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            _ => 1,
        }
    }
}

/// Hard instance: `μ = e₁`, answers `e₁..e_d` plus two unit vectors in the
/// `(e₁, e₂)` plane at angles `r_ε θ_ε` (ε-optimal) and `(1 + r_ε) θ_ε` (not),
/// with `θ_ε = arccos(1 − ε)`. Arms are the answers, or `{e₁, e₂}`.
pub fn gen_hard_instance(
    d: usize,
    eps: f64,
    mode: Mode,
    r_eps: f64,
    two_arm: bool,
) -> Result<ProblemInstance, CliError> {
    if d < 2 {
        return Err(CliError::Usage(format!(
            "hard instance needs d ≥ 2, got {d}"
        )));
    }
    if !(eps > 0.0 && eps < 1.0) {
        return Err(CliError::Usage(format!(
            "hard instance needs ε in (0,1), got {eps}"
        )));
    }
    if !(r_eps > 0.0 && r_eps < 1.0) {
        return Err(CliError::Usage(format!(
            "r_eps must lie in (0,1), got {r_eps}"
        )));
    }
    if two_arm && d != 2 {
        return Err(CliError::Usage(
            "the two-arm variant only spans R^d for d = 2".into(),
        ));
    }
    let e = |i: usize| {
        let mut v = Vector::zeros(d);
        v[i] = 1.0;
        v
    };
    let planar = |angle: f64| {
        let mut v = Vector::zeros(d);
        v[0] = angle.cos();
        v[1] = angle.sin();
        v
    };
    let theta = (1.0 - eps).acos();
    let mut answers: Vec<Vector> = (0..d).map(e).collect();
    answers.push(planar(r_eps * theta));
    answers.push(planar((1.0 + r_eps) * theta));
    let arms = if two_arm {
        vec![e(0), e(1)]
    } else {
        answers.clone()
    };
    Ok(ProblemInstance::new(arms, answers, e(0), mode, eps, 1.0)?)
}

/// Random instance: 19 uniform unit answers, `μ = a₁`, and a 20th answer
/// equal to `a₁` except at `i₀ = argmin_i μ_i`, where it is
/// `(1 − ‖μ‖² + μ_{i₀}² − r_ε ε)/μ_{i₀}`. Arms are the answers.
///
/// Draws with `|μ_{i₀}| < 1e-6` are redrawn on the next RNG stream.
pub fn gen_random_instance(
    d: usize,
    eps: f64,
    mode: Mode,
    seed: u64,
    r_eps: f64,
) -> Result<ProblemInstance, CliError> {
    if d < 2 {
        return Err(CliError::Usage(format!(
            "random instance needs d ≥ 2, got {d}"
        )));
    }
    for attempt in 0..MAX_REGENERATIONS {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(attempt);
        let mut answers: Vec<Vector> = (0..RANDOM_ANSWERS - 1)
            .map(|_| loop {
                let v = Vector::from_fn(d, |_, _| standard_normal(&mut rng));
                let n = v.norm();
                if n > 1e-12 {
                    break v / n;
                }
            })
            .collect();
        let mu = answers[0].clone();
        let i0 = mu.argmin().0;
        let m0 = mu[i0];
        if m0.abs() < NEAR_ZERO {
            continue;
        }
        let mut a20 = mu.clone();
        a20[i0] = (1.0 - mu.norm_squared() + m0 * m0 - r_eps * eps) / m0;
        answers.push(a20);
        let bound = mu.norm();
        return Ok(ProblemInstance::new(
            answers.clone(),
            answers,
            mu,
            mode,
            eps,
            bound,
        )?);
    }
    Err(SimError::Config(format!(
        "no usable random instance after {MAX_REGENERATIONS} draws"
    ))
    .into())
}

/// Where a run's instance comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InstanceSpec {
    File {
        path: PathBuf,
    },
    Hard {
        d: usize,
        #[serde(default = "default_r_eps")]
        r_eps: f64,
        #[serde(default)]
        two_arm: bool,
    },
    /// With `per_run`, run `i` gets the instance drawn from `seed + i`.
    Random {
        d: usize,
        seed: u64,
        #[serde(default = "default_r_eps")]
        r_eps: f64,
        #[serde(default)]
        per_run: bool,
    },
}

fn default_r_eps() -> f64 {
    DEFAULT_R_EPS
}

fn default_delta() -> f64 {
    0.01
}

fn default_n_runs() -> usize {
    500
}

fn default_output() -> PathBuf {
    PathBuf::from("results.csv")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub instance: InstanceSpec,
    pub sampler: SamplerConfig,
    #[serde(default)]
    pub candidate: CandidateRule,
    #[serde(default = "ExperimentConfig::default_threshold")]
    pub threshold: ThresholdKind,
    #[serde(default = "ExperimentConfig::default_schedule")]
    pub schedule: Schedule,
    #[serde(default = "default_delta")]
    pub delta: f64,
    /// Overrides the file's ε; generators default to 0.05.
    #[serde(default)]
    pub epsilon: Option<f64>,
    /// Overrides the file's mode; generators default to multiplicative.
    #[serde(default)]
    pub mode: Option<Mode>,
    #[serde(default = "default_n_runs")]
    pub n_runs: usize,
    #[serde(default)]
    pub base_seed: u64,
    #[serde(default)]
    pub workers: Option<usize>,
    #[serde(default = "default_output")]
    pub output: PathBuf,
    #[serde(default)]
    pub solver: Option<CharTimeSolver>,
    #[serde(default = "ExperimentConfig::default_max_rounds")]
    pub max_rounds: u64,
}

impl ExperimentConfig {
    pub const DEFAULT_EPSILON: f64 = 0.05;

    fn default_threshold() -> ThresholdKind {
        ThresholdKind::Heuristic
    }

    fn default_schedule() -> Schedule {
        Schedule::EveryStep
    }

    fn default_max_rounds() -> u64 {
        DEFAULT_MAX_ROUNDS
    }

    pub fn new(instance: InstanceSpec, sampler: SamplerConfig) -> Self {
        Self {
            instance,
            sampler,
            candidate: CandidateRule::InstantFurthest,
            threshold: ThresholdKind::Heuristic,
            schedule: Schedule::EveryStep,
            delta: default_delta(),
            epsilon: None,
            mode: None,
            n_runs: default_n_runs(),
            base_seed: 0,
            workers: None,
            output: default_output(),
            solver: None,
            max_rounds: DEFAULT_MAX_ROUNDS,
        }
    }

    pub fn run_config(&self) -> RunConfig {
        RunConfig {
            sampler: self.sampler.clone(),
            candidate: self.candidate,
            threshold: self.threshold,
            schedule: self.schedule.clone(),
            solver: self.solver.clone(),
            max_rounds: self.max_rounds,
        }
    }

    pub fn from_json(s: &str) -> Result<Self, CliError> {
        let cfg: Self =
            serde_json::from_str(s).map_err(|e| CliError::Usage(format!("config: {e}")))?;
        cfg.check()?;
        Ok(cfg)
    }

    fn check(&self) -> Result<(), CliError> {
        if self.n_runs == 0 {
            return Err(CliError::Usage("n_runs must be ≥ 1".into()));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(CliError::Usage(format!(
                "delta must lie in (0,1), got {}",
                self.delta
            )));
        }
        if self.workers == Some(0) {
            return Err(CliError::Usage("workers must be ≥ 1".into()));
        }
        Ok(())
    }

    fn eps_mode(&self) -> (f64, Mode) {
        (
            self.epsilon.unwrap_or(Self::DEFAULT_EPSILON),
            self.mode.unwrap_or(Mode::Multiplicative),
        )
    }

    /// The instance of run `index` (the same one for all runs unless per-run random).
    pub fn instance_for(&self, index: usize) -> Result<ProblemInstance, CliError> {
        let (eps, mode) = self.eps_mode();
        match &self.instance {
            InstanceSpec::File { path } => {
                let inst: ProblemInstance = serde_json::from_reader(File::open(path)?)
                    .map_err(|e| CliError::Usage(format!("instance {}: {e}", path.display())))?;
                if self.epsilon.is_none() && self.mode.is_none() {
                    return Ok(inst);
                }
                let eps = self.epsilon.unwrap_or(inst.epsilon());
                let mode = self.mode.unwrap_or(inst.mode());
                Ok(inst.with_mode(mode, eps)?)
            }
            InstanceSpec::Hard { d, r_eps, two_arm } => {
                gen_hard_instance(*d, eps, mode, *r_eps, *two_arm)
            }
            InstanceSpec::Random {
                d,
                seed,
                r_eps,
                per_run,
            } => {
                let s = if *per_run {
                    seed.wrapping_add(index as u64)
                } else {
                    *seed
                };
                gen_random_instance(*d, eps, mode, s, *r_eps)
            }
        }
    }
}

pub fn resolve_workers(flag: Option<usize>, config: Option<usize>) -> Result<usize, CliError> {
    if let Ok(v) = std::env::var(WORKERS_ENV) {
        let n: usize = v
            .trim()
            .parse()
            .map_err(|_| CliError::Usage(format!("{WORKERS_ENV}={v} is not a count")))?;
        if n == 0 {
            return Err(CliError::Usage(format!("{WORKERS_ENV} must be ≥ 1")));
        }
        return Ok(n);
    }
    Ok(flag
        .or(config)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get())))
}

/// Runs every seed of the experiment, in run order.
pub fn execute(cfg: &ExperimentConfig, workers: usize) -> Result<Vec<RunRecord>, CliError> {
    cfg.check()?;
    let run = cfg.run_config();
    if let InstanceSpec::Random { per_run: true, .. } = cfg.instance {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .map_err(|e| SimError::Pool(e.to_string()))?;
        return pool.install(|| {
            (0..cfg.n_runs)
                .into_par_iter()
                .map(|i| {
                    let inst = cfg.instance_for(i)?;
                    Ok(run_one(
                        &run,
                        &inst,
                        cfg.delta,
                        cfg.base_seed.wrapping_add(i as u64),
                    )?)
                })
                .collect()
        });
    }
    let inst = cfg.instance_for(0)?;
    Ok(run_batch(&run, &inst, cfg.delta, cfg.n_runs, cfg.base_seed, workers)?.records)
}

/// One row of the greedy-vs-furthest study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyRow {
    pub mode: String,
    pub epsilon: f64,
    pub n_draws: usize,
    pub n_disagree: usize,
    pub proportion: f64,
    /// Quartiles and mean of `T_ε / T_{g,ε}` over the disagreeing draws.
    pub ratio_q1: f64,
    pub ratio_median: f64,
    pub ratio_q3: f64,
    pub ratio_mean: f64,
}

pub const DEFAULT_STUDY_EPS: [f64; 6] = [0.01, 0.02, 0.05, 0.1, 0.15, 0.2];

/// `μ = z₁ = (1,0)`, `z₂` uniform on the arc `|θ| ≤ θ_ε`, `z₃, z₄` uniform on
/// the rest of the circle, arms = answers.
pub fn study_instance<R: Rng>(
    eps: f64,
    mode: Mode,
    rng: &mut R,
) -> Result<ProblemInstance, CliError> {
    let theta_eps = (1.0 - eps).acos();
    let unit = |a: f64| Vector::from_column_slice(&[a.cos(), a.sin()]);
    let inside = rng.random_range(-theta_eps..=theta_eps);
    let mut outside = || {
        let a = rng.random_range(theta_eps..PI);
        if rng.random::<bool>() {
            a
        } else {
            -a
        }
    };
    let (o1, o2) = (outside(), outside());
    let answers = vec![unit(0.0), unit(inside), unit(o1), unit(o2)];
    Ok(ProblemInstance::new(
        answers.clone(),
        answers,
        unit(0.0),
        mode,
        eps,
        1.0,
    )?)
}

/// Outcome of one study draw: whether `z_F ∉ z*`, and `T_ε / T_{g,ε}`.
pub fn study_draw(
    inst: &ProblemInstance,
    candidates: &[Vec<f64>],
) -> Result<(bool, f64), CliError> {
    let table = DesignTable::build(inst, candidates.to_vec())?;
    let solver = PreparedSolver::Table {
        table: std::sync::Arc::new(table),
        solver: CharTimeSolver::Discretized {
            n_points: candidates.len() - 1,
            seed: 0,
        },
    };
    let full = solver.solve(inst, inst.mu(), Outer::EpsOptimal)?;
    let greedy = solver.solve(inst, inst.mu(), Outer::Greedy)?;
    let disagree = !argmax_set(inst, inst.mu()).contains(&full.z_f);
    // T_ε / T_g = T_g⁻¹ / T_ε⁻¹
    Ok((disagree, greedy.t_inv / full.t_inv))
}

pub fn study_answers(
    eps_grid: &[f64],
    n_draws: usize,
    mode: Mode,
    solver: &CharTimeSolver,
    seed: u64,
    workers: usize,
) -> Result<Vec<StudyRow>, CliError> {
    let (n_points, cand_seed) = match *solver {
        CharTimeSolver::Discretized { n_points, seed } => (n_points, seed),
        CharTimeSolver::BinarySearch { .. } => {
            return Err(CliError::Usage(
                "the answer study uses the discretized solver".into(),
            ));
        }
    };
    let candidates = dirichlet_candidates(4, n_points, cand_seed);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| SimError::Pool(e.to_string()))?;
    let mut rows = Vec::with_capacity(eps_grid.len());
    for (j, &eps) in eps_grid.iter().enumerate() {
        if !(eps > 0.0 && eps < 1.0) {
            return Err(CliError::Usage(format!(
                "study ε must lie in (0,1), got {eps}"
            )));
        }
        let draws: Vec<(bool, f64)> = pool.install(|| {
            (0..n_draws)
                .into_par_iter()
                .map(|i| {
                    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(i as u64));
                    rng.set_stream(j as u64);
                    let inst = study_instance(eps, mode, &mut rng)?;
                    study_draw(&inst, &candidates)
                })
                .collect::<Result<_, CliError>>()
        })?;
        let mut ratios: Vec<f64> = draws.iter().filter(|d| d.0).map(|d| d.1).collect();
        ratios.sort_by(f64::total_cmp);
        let n_disagree = ratios.len();
        rows.push(StudyRow {
            mode: mode.tag().to_string(),
            epsilon: eps,
            n_draws,
            n_disagree,
            proportion: n_disagree as f64 / n_draws.max(1) as f64,
            ratio_q1: quantile_sorted(&ratios, 0.25),
            ratio_median: quantile_sorted(&ratios, 0.5),
            ratio_q3: quantile_sorted(&ratios, 0.75),
            ratio_mean: if n_disagree == 0 {
                f64::NAN
            } else {
                ratios.iter().sum::<f64>() / n_disagree as f64
            },
        });
    }
    Ok(rows)
}

pub fn write_study_csv<W: Write>(rows: &[StudyRow], out: W) -> Result<(), CliError> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_study_csv<R: std::io::Read>(input: R) -> Result<Vec<StudyRow>, CliError> {
    Ok(csv::Reader::from_reader(input)
        .deserialize()
        .collect::<Result<_, _>>()?)
}

/// Pooled disagreement proportion and the median of per-ε ratio medians.
pub fn study_aggregate(rows: &[StudyRow]) -> (f64, f64) {
    let draws: usize = rows.iter().map(|r| r.n_draws).sum();
    let disagree: usize = rows.iter().map(|r| r.n_disagree).sum();
    let mut medians: Vec<f64> = rows
        .iter()
        .map(|r| r.ratio_median)
        .filter(|m| m.is_finite())
        .collect();
    medians.sort_by(f64::total_cmp);
    (
        disagree as f64 / draws.max(1) as f64,
        quantile_sorted(&medians, 0.5),
    )
}

pub fn format_summary_table(records: &[RunRecord]) -> String {
    let mut s = format!(
        "{:<16} {:<16} {:<22} {:>6} {:>10} {:>9} {:>9} {:>9} {:>9} {:>7} {:>5}\n",
        "algo",
        "candidate",
        "schedule",
        "runs",
        "mean_tau",
        "std",
        "q1",
        "median",
        "q3",
        "error",
        "cens"
    );
    for ((algo, cand, sched), b) in summarize_groups(records) {
        s.push_str(&format!(
            "{:<16} {:<16} {:<22} {:>6} {:>10.1} {:>9.1} {:>9.1} {:>9.1} {:>9.1} {:>7.4} {:>5}\n",
            algo,
            cand,
            sched,
            b.n_runs,
            b.mean_tau,
            b.std_of_subsample_means,
            b.q1,
            b.median,
            b.q3,
            b.error_rate,
            b.n_censored
        ));
    }
    s
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum InstanceKind {
    Hard,
    Random,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum SolverKind {
    Discretized,
    BinarySearch,
}

#[derive(Debug, clap::Args)]
struct SolverArgs {
    #[arg(long, value_enum, default_value = "discretized")]
    solver: SolverKind,
    /// Candidate count for the discretized solver (default: 500 for K ≤ 2, else 10000).
    #[arg(long)]
    points: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1e-6)]
    tolerance: f64,
    #[arg(long, default_value_t = 200)]
    max_iters: usize,
}

impl SolverArgs {
    fn build(&self, n_arms: usize) -> CharTimeSolver {
        match self.solver {
            SolverKind::Discretized => CharTimeSolver::Discretized {
                n_points: self
                    .points
                    .unwrap_or(match CharTimeSolver::default_for(n_arms) {
                        CharTimeSolver::Discretized { n_points, .. } => n_points,
                        CharTimeSolver::BinarySearch { .. } => unreachable!(),
                    }),
                seed: self.seed,
            },
            SolverKind::BinarySearch => CharTimeSolver::BinarySearch {
                tolerance: self.tolerance,
                max_iters: self.max_iters,
            },
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "epsbai",
    about = "ε-best-answer identification in transductive linear bandits"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write an instance JSON.
    Instance {
        #[arg(long, value_enum)]
        kind: InstanceKind,
        #[arg(long)]
        d: usize,
        #[arg(long, default_value_t = 0.05)]
        eps: f64,
        #[arg(long, default_value = "mul")]
        mode: Mode,
        /// Arms {e₁, e₂} instead of the answers (hard kind, d = 2).
        #[arg(long)]
        two_arm: bool,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = DEFAULT_R_EPS)]
        r_eps: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the characteristic time of an instance as JSON.
    Chartime {
        #[arg(long)]
        instance: PathBuf,
        #[command(flatten)]
        solver: SolverArgs,
        /// Restrict the outer maximization to the greedy answers.
        #[arg(long)]
        greedy: bool,
    },
    /// Execute an experiment config and write its results CSV.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Greedy vs furthest answer on random four-answer instances.
    StudyAnswers {
        #[arg(long, value_delimiter = ',')]
        eps: Option<Vec<f64>>,
        #[arg(long, default_value_t = 2000)]
        draws: usize,
        #[arg(long, default_value = "mul")]
        mode: Mode,
        #[arg(long, default_value_t = 10_000)]
        points: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        workers: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print per-group summaries of a results CSV.
    Summarize { csv: PathBuf },
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>, CliError> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(std::io::stdout().lock())),
    })
}

fn chartime_json(
    inst: &ProblemInstance,
    solver: &CharTimeSolver,
    greedy: bool,
) -> Result<serde_json::Value, CliError> {
    let prepared = PreparedSolver::new(inst, solver)?;
    let outer = if greedy {
        Outer::Greedy
    } else {
        Outer::EpsOptimal
    };
    let r = prepared.solve(inst, inst.mu(), outer)?;
    let mut out = serde_json::json!({
        "t_eps": match r.t_eps { CharTime::Finite(t) => serde_json::json!(t), CharTime::Infinite => serde_json::json!("inf") },
        "t_inv": r.t_inv,
        "z_f_index": r.z_f,
        "w_f": r.w_f,
        "solver": r.solver_tag,
    });
    match *solver {
        CharTimeSolver::Discretized { n_points, seed } => {
            out["n_points"] = n_points.into();
            out["seed"] = seed.into();
        }
        CharTimeSolver::BinarySearch {
            tolerance,
            max_iters,
        } => {
            out["tolerance"] = tolerance.into();
            out["max_iters"] = max_iters.into();
        }
    }
    Ok(out)
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    match cli.cmd {
        Command::Instance {
            kind,
            d,
            eps,
            mode,
            two_arm,
            seed,
            r_eps,
            out,
        } => {
            let inst = match kind {
                InstanceKind::Hard => gen_hard_instance(d, eps, mode, r_eps, two_arm)?,
                InstanceKind::Random => {
                    if two_arm {
                        return Err(CliError::Usage(
                            "--two-arm only applies to the hard kind".into(),
                        ));
                    }
                    gen_random_instance(d, eps, mode, seed, r_eps)?
                }
            };
            let mut w = output(out.as_deref())?;
            serde_json::to_writer_pretty(&mut w, &inst)?;
            writeln!(w)?;
            w.flush()?;
        }
        Command::Chartime {
            instance,
            solver,
            greedy,
        } => {
            let inst: ProblemInstance = serde_json::from_reader(File::open(&instance)?)
                .map_err(|e| CliError::Usage(format!("instance {}: {e}", instance.display())))?;
            let s = solver.build(inst.n_arms());
            s.validate(inst.n_arms())
                .map_err(|e| CliError::Usage(e.to_string()))?;
            let json = chartime_json(&inst, &s, greedy)?;
            println!("{}", serde_json::to_string_pretty(&json)?);
        }
        Command::Run {
            config,
            out,
            workers,
        } => {
            let mut cfg = ExperimentConfig::from_json(&std::fs::read_to_string(&config)?)?;
            if let Some(o) = out {
                cfg.output = o;
            }
            let workers = resolve_workers(workers, cfg.workers)?;
            let records = execute(&cfg, workers)?;
            write_results_csv(&records, BufWriter::new(File::create(&cfg.output)?))?;
            eprintln!("wrote {} runs to {}", records.len(), cfg.output.display());
        }
        Command::StudyAnswers {
            eps,
            draws,
            mode,
            points,
            seed,
            workers,
            out,
        } => {
            let grid = eps.unwrap_or_else(|| DEFAULT_STUDY_EPS.to_vec());
            if draws == 0 || points == 0 {
                return Err(CliError::Usage("--draws and --points must be ≥ 1".into()));
            }
            let workers = resolve_workers(workers, None)?;
            let rows = study_answers(
                &grid,
                draws,
                mode,
                &CharTimeSolver::Discretized {
                    n_points: points,
                    seed,
                },
                seed,
                workers,
            )?;
            write_study_csv(&rows, output(out.as_deref())?)?;
            let (p, m) = study_aggregate(&rows);
            eprintln!("pooled disagreement {:.2}%, median ratio {m:.3}", 100.0 * p);
        }
        Command::Summarize { csv } => {
            let records = read_results_csv(File::open(&csv)?)?;
            if records.is_empty() {
                return Err(CliError::Usage(format!("{} has no rows", csv.display())));
            }
            print!("{}", format_summary_table(&records));
        }
    }
    Ok(())
}

/// Parses `argv` (program name first) and runs; returns the process exit code.
pub fn main(argv: Vec<String>) -> i32 {
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
