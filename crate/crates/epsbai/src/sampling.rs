//! Sampling rules: LεBAI with its optimistic gains and tracking, and the
//! baselines (uniform, fixed oracle, XY-Static, XY-Adaptive, LinGapE, ε-TaS).

use crate::chartime::{CharTimeSolver, Outer, PreparedSolver};
use crate::learner::{AdaHedgeState, LearnerError};
use crate::linalg::{design_matrix, PseudoInverse, Vector};
use crate::model::{
    alternative_distance_with, greedy_answer, instantaneous_furthest_with, is_eps_optimal, Mode,
    ModelError, ProblemInstance,
};
use crate::stopping::{should_stop, RoundPlan, ScheduleState, StopThreshold, Threshold};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SamplingError {
    #[error("invalid sampler config: {0}")]
    Config(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Learner(#[from] LearnerError),
}

/// How an ε-optimal answer is picked from the current estimate; used both
/// as stopping candidate and as LεBAI's Z-oracle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum CandidateRule {
    Greedy,
    Furthest,
    #[default]
    InstantFurthest,
}

impl CandidateRule {
    pub fn tag(self) -> &'static str {
        match self {
            CandidateRule::Greedy => "greedy",
            CandidateRule::Furthest => "furthest",
            CandidateRule::InstantFurthest => "instant_furthest",
        }
    }
}

impl std::str::FromStr for CandidateRule {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "greedy" => Ok(CandidateRule::Greedy),
            "furthest" => Ok(CandidateRule::Furthest),
            "instant_furthest" | "instant-furthest" | "if" => Ok(CandidateRule::InstantFurthest),
            o => Err(format!("unknown candidate rule `{o}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Tracking {
    #[default]
    C,
    D,
}

/// LinGapE stopping: the GLR ε-stop, the ε-gap index, or the BAI gap
/// index with ε ignored.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GapStop {
    Glr,
    EpsGap,
    Original,
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SamplerConfig {
    #[serde(rename = "lebai")]
    LeBai {
        #[serde(default)]
        oracle: CandidateRule,
        #[serde(default)]
        tracking: Tracking,
        #[serde(default = "default_true")]
        forced_exploration: bool,
        #[serde(default)]
        per_answer_learners: bool,
        /// Clip `μ̂` to the ball of radius M before building gains.
        #[serde(default)]
        project_estimates: bool,
    },
    Uniform,
    FixedOracle {
        #[serde(default)]
        w: Option<Vec<f64>>,
    },
    XyStatic,
    XyAdaptive {
        phase_param: f64,
    },
    #[serde(rename = "lingape")]
    LinGapE {
        stop: GapStop,
    },
    EpsTas {
        solver: CharTimeSolver,
    },
}

impl SamplerConfig {
    pub fn lebai() -> Self {
        SamplerConfig::LeBai {
            oracle: CandidateRule::InstantFurthest,
            tracking: Tracking::C,
            forced_exploration: true,
            per_answer_learners: false,
            project_estimates: false,
        }
    }

    /// One learner per answer, no forced exploration: the LinGame stand-in.
    pub fn lingame() -> Self {
        SamplerConfig::LeBai {
            oracle: CandidateRule::Greedy,
            tracking: Tracking::C,
            forced_exploration: false,
            per_answer_learners: true,
            project_estimates: false,
        }
    }

    pub fn tag(&self) -> String {
        match self {
            SamplerConfig::LeBai {
                per_answer_learners: true,
                forced_exploration: false,
                ..
            } => "lingame".into(),
            SamplerConfig::LeBai {
                oracle, tracking, ..
            } => {
                let mut s = "lebai".to_string();
                if *oracle != CandidateRule::InstantFurthest {
                    s.push_str(&format!("[{}]", oracle.tag()));
                }
                if *tracking == Tracking::D {
                    s.push_str("[d]");
                }
                s
            }
            SamplerConfig::Uniform => "uniform".into(),
            SamplerConfig::FixedOracle { .. } => "fixed".into(),
            SamplerConfig::XyStatic => "xy_static".into(),
            SamplerConfig::XyAdaptive { .. } => "xy_adaptive".into(),
            SamplerConfig::LinGapE { stop: GapStop::Glr } => "lingape".into(),
            SamplerConfig::LinGapE {
                stop: GapStop::EpsGap,
            } => "lingape[gap]".into(),
            SamplerConfig::LinGapE {
                stop: GapStop::Original,
            } => "lingape[bai]".into(),
            SamplerConfig::EpsTas { .. } => "eps_tas".into(),
        }
    }

    pub fn validate(&self, inst: &ProblemInstance) -> Result<(), SamplingError> {
        match self {
            SamplerConfig::FixedOracle { w: Some(w) } => {
                let ok = w.len() == inst.n_arms()
                    && w.iter().all(|&x| x >= 0.0)
                    && (w.iter().sum::<f64>() - 1.0).abs() < 1e-9;
                if !ok {
                    return Err(SamplingError::Config(
                        "fixed allocation must lie in the simplex over arms".into(),
                    ));
                }
            }
            SamplerConfig::XyAdaptive { phase_param }
                if !(*phase_param > 0.0 && *phase_param < 1.0) =>
            {
                return Err(SamplingError::Config(format!(
                    "phase_param must lie in (0,1), got {phase_param}"
                )));
            }
            SamplerConfig::EpsTas { solver } => {
                solver
                    .validate(inst.n_arms())
                    .map_err(|e| SamplingError::Config(e.to_string()))?;
            }
            _ => {}
        }
        Ok(())
    }

    /// Solver needed to build this sampler's state, if any.
    pub fn own_solver(&self) -> Option<&CharTimeSolver> {
        match self {
            SamplerConfig::EpsTas { solver } => Some(solver),
            _ => None,
        }
    }
}

/// Counts, cumulative tracked weights and round index.
#[derive(Debug, Clone, PartialEq)]
pub struct TrackingState {
    pub counts: Vec<u64>,
    pub w_cum: Vec<f64>,
}

impl TrackingState {
    /// State right after pulling every arm once.
    pub fn initialized(k: usize) -> Self {
        Self {
            counts: vec![1; k],
            w_cum: vec![1.0; k],
        }
    }

    pub fn record(&mut self, arm: usize) {
        self.counts[arm] += 1;
    }

    /// `N^a − W^a` per arm.
    pub fn deficits(&self) -> Vec<f64> {
        self.counts
            .iter()
            .zip(&self.w_cum)
            .map(|(&n, &w)| n as f64 - w)
            .collect()
    }
}

fn argmin_first(xs: impl Iterator<Item = f64>) -> usize {
    let mut best = (0, f64::INFINITY);
    for (i, x) in xs.enumerate() {
        if x < best.1 {
            best = (i, x);
        }
    }
    best.0
}

/// Cumulative tracking: `W ← W + w`, pull `argmin N − W`.
pub fn c_track(state: &mut TrackingState, w_t: &[f64]) -> usize {
    for (c, w) in state.w_cum.iter_mut().zip(w_t) {
        *c += w;
    }
    argmin_first(
        state
            .counts
            .iter()
            .zip(&state.w_cum)
            .map(|(&n, &w)| n as f64 - w),
    )
}

/// Direct tracking: pull `argmin N − (t − n₀) w` at round `t`.
pub fn d_track(state: &TrackingState, w_t: &[f64], n0: u64) -> usize {
    let t = state.counts.iter().sum::<u64>() + 1;
    let scale = t.saturating_sub(n0) as f64;
    argmin_first(
        state
            .counts
            .iter()
            .zip(w_t)
            .map(|(&n, &w)| n as f64 - scale * w),
    )
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimisticGain {
    pub u: Vec<f64>,
    pub c: Vec<f64>,
    pub f: f64,
}

/// `(b, α) = (1, 3)`.
pub const BONUS_ALPHA: f64 = 3.0;

/// `f(x) = 2β(x, x^{1/α})`, the second argument standing for `1/δ`, so
/// `ln(1/δ) = ln(x)/α`.
pub fn exploration_bonus(x: f64, threshold: Threshold) -> f64 {
    let x = x.max(1.0);
    2.0 * threshold.value_log(x, (x.ln() / BONUS_ALPHA).max(1e-12))
}

/// `U^a = (|⟨μ̂−λ, a⟩| + √c^a)²`, `c^a = min{f((t−1)²)·‖a‖²_{V_N^{-1}}, 4M²L²}`.
pub fn optimistic_gain(
    inst: &ProblemInstance,
    mu_hat: &Vector,
    vn: &PseudoInverse,
    lambda: &Vector,
    t: u64,
    threshold: Threshold,
) -> OptimisticGain {
    let s = t.saturating_sub(1) as f64;
    let f = exploration_bonus(s * s, threshold);
    let cap = 4.0 * inst.bound_m().powi(2) * inst.max_arm_norm().powi(2);
    let diff = mu_hat - lambda;
    let mut u = Vec::with_capacity(inst.n_arms());
    let mut c = Vec::with_capacity(inst.n_arms());
    for a in inst.arms() {
        let ca = (f * vn.norm_sq(a)).min(cap).max(0.0);
        let ua = diff.dot(a).abs() + ca.sqrt();
        u.push(ua * ua);
        c.push(ca);
    }
    OptimisticGain { u, c, f }
}

/// Everything a sampling rule may read at round `t` (after `t−1` observations).
pub struct RoundCtx<'a> {
    pub inst: &'a ProblemInstance,
    pub t: u64,
    pub n0: u64,
    pub mu_hat: &'a Vector,
    pub counts: &'a [u64],
    /// Pseudo-inverse of `V_{N_{t−1}}`.
    pub vn: &'a PseudoInverse,
    pub threshold: &'a StopThreshold,
    /// Characteristic-time solver; present when the furthest rule needs it.
    pub solver: Option<&'a PreparedSolver>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Step {
    Pull(usize),
    Stop(usize),
}

/// Picks an ε-optimal answer for the estimate; the multiplicative notion
/// falls back to the argmax set when the best value is not positive.
pub fn candidate_answer(rule: CandidateRule, ctx: &RoundCtx) -> Result<usize, SamplingError> {
    Ok(match rule {
        CandidateRule::Greedy => greedy_answer(ctx.inst, ctx.mu_hat),
        CandidateRule::InstantFurthest => {
            instantaneous_furthest_with(ctx.inst, ctx.mu_hat, ctx.vn)?.0
        }
        CandidateRule::Furthest => {
            let solver = ctx
                .solver
                .ok_or_else(|| SamplingError::Config("furthest rule without a solver".into()))?;
            match solver.solve(ctx.inst, ctx.mu_hat, Outer::EpsOptimal) {
                Ok(r) => r.z_f,
                Err(_) => greedy_answer(ctx.inst, ctx.mu_hat),
            }
        }
    })
}

#[derive(Debug, Clone)]
enum SamplerState {
    LeBai {
        learners: Vec<AdaHedgeState>,
        tracking: TrackingState,
    },
    Uniform,
    Fixed {
        w: Vec<f64>,
        tracking: TrackingState,
    },
    XyStatic {
        dirs: Vec<Vector>,
    },
    XyAdaptive {
        survivors: Vec<usize>,
        rho0: Option<f64>,
    },
    LinGapE,
    EpsTas {
        tracking: TrackingState,
        solver: PreparedSolver,
    },
}

/// A sampling rule with its stopping-recommendation pair.
#[derive(Debug, Clone)]
pub struct Policy {
    cfg: SamplerConfig,
    candidate: CandidateRule,
    schedule: ScheduleState,
    state: SamplerState,
}

impl Policy {
    /// `fixed_w` is the oracle allocation for [`SamplerConfig::FixedOracle`]
    /// when the config leaves it unset.
    pub fn new(
        cfg: &SamplerConfig,
        candidate: CandidateRule,
        schedule: ScheduleState,
        inst: &ProblemInstance,
        solver: Option<&PreparedSolver>,
        fixed_w: Option<&[f64]>,
    ) -> Result<Self, SamplingError> {
        cfg.validate(inst)?;
        let k = inst.n_arms();
        let state = match cfg {
            SamplerConfig::LeBai {
                per_answer_learners,
                ..
            } => {
                let n = if *per_answer_learners {
                    inst.n_answers()
                } else {
                    1
                };
                SamplerState::LeBai {
                    learners: vec![AdaHedgeState::new(k); n],
                    tracking: TrackingState::initialized(k),
                }
            }
            SamplerConfig::Uniform => SamplerState::Uniform,
            SamplerConfig::FixedOracle { w } => {
                let w = match (w, fixed_w) {
                    (Some(w), _) => w.clone(),
                    (None, Some(w)) => w.to_vec(),
                    (None, None) => {
                        solver
                            .ok_or_else(|| {
                                SamplingError::Config(
                                    "fixed oracle without allocation or solver".into(),
                                )
                            })?
                            .solve(inst, inst.mu(), Outer::EpsOptimal)
                            .map_err(|e| SamplingError::Config(e.to_string()))?
                            .w_f
                    }
                };
                SamplerState::Fixed {
                    w,
                    tracking: TrackingState::initialized(k),
                }
            }
            SamplerConfig::XyStatic => {
                let nz = inst.n_answers();
                let mut dirs = Vec::new();
                for z in 0..nz {
                    for x in z + 1..nz {
                        dirs.push(&inst.answers()[z] - &inst.answers()[x]);
                    }
                }
                SamplerState::XyStatic { dirs }
            }
            SamplerConfig::XyAdaptive { .. } => SamplerState::XyAdaptive {
                survivors: (0..inst.n_answers()).collect(),
                rho0: None,
            },
            SamplerConfig::LinGapE { .. } => SamplerState::LinGapE,
            SamplerConfig::EpsTas { solver: s } => SamplerState::EpsTas {
                tracking: TrackingState::initialized(k),
                solver: PreparedSolver::new(inst, s)
                    .map_err(|e| SamplingError::Config(e.to_string()))?,
            },
        };
        Ok(Self {
            cfg: cfg.clone(),
            candidate,
            schedule,
            state,
        })
    }

    pub fn config(&self) -> &SamplerConfig {
        &self.cfg
    }

    /// Tracking state of the rules that track an allocation.
    pub fn tracking(&self) -> Option<&TrackingState> {
        match &self.state {
            SamplerState::LeBai { tracking, .. }
            | SamplerState::Fixed { tracking, .. }
            | SamplerState::EpsTas { tracking, .. } => Some(tracking),
            _ => None,
        }
    }

    /// Notifies the rule that `arm` was pulled.
    pub fn record(&mut self, arm: usize) {
        match &mut self.state {
            SamplerState::LeBai { tracking, .. }
            | SamplerState::Fixed { tracking, .. }
            | SamplerState::EpsTas { tracking, .. } => tracking.record(arm),
            _ => {}
        }
    }

    /// One post-initialization round: stopping check, then an arm.
    pub fn step(&mut self, ctx: &RoundCtx) -> Result<Step, SamplingError> {
        if let SamplerConfig::LinGapE {
            stop: stop @ (GapStop::EpsGap | GapStop::Original),
        } = self.cfg
        {
            let (z, arm, index) = lingape_select(ctx, stop);
            let level = match (stop, ctx.inst.mode()) {
                (GapStop::EpsGap, Mode::Additive) => ctx.inst.epsilon(),
                _ => 0.0,
            };
            return Ok(if index <= level {
                Step::Stop(z)
            } else {
                Step::Pull(arm)
            });
        }

        let (inst, mu_hat) = (ctx.inst, ctx.mu_hat);
        let plan: RoundPlan = self
            .schedule
            .begin_round(ctx.t, |z| is_eps_optimal(inst, mu_hat, z));
        if plan.refresh {
            let z = candidate_answer(self.candidate, ctx)?;
            self.schedule.set_current(z);
        }
        let z = self
            .schedule
            .current()
            .expect("candidate set on first round");
        if plan.evaluate {
            let stat = alternative_distance_with(inst, mu_hat, ctx.vn, z)?.distance_sq;
            if should_stop(stat, ctx.t, ctx.threshold, plan) {
                return Ok(Step::Stop(z));
            }
        }
        let arm = match &self.cfg {
            SamplerConfig::LeBai { .. } => self.lebai_round(ctx)?,
            _ => self.baseline_round(ctx)?,
        };
        Ok(Step::Pull(arm))
    }

    /// LεBAI sampling step: Z-oracle, learner, forced exploration, closest
    /// alternative, optimistic gains, tracking.
    pub fn lebai_round(&mut self, ctx: &RoundCtx) -> Result<usize, SamplingError> {
        let SamplerConfig::LeBai {
            oracle,
            tracking: tk,
            forced_exploration,
            per_answer_learners,
            project_estimates,
        } = self.cfg
        else {
            return Err(SamplingError::Config("not an LεBAI config".into()));
        };
        let SamplerState::LeBai { learners, tracking } = &mut self.state else {
            unreachable!()
        };
        let inst = ctx.inst;
        let k = inst.n_arms();
        let clipped;
        let mu_hat = if project_estimates && ctx.mu_hat.norm() > inst.bound_m() {
            clipped = ctx.mu_hat * (inst.bound_m() / ctx.mu_hat.norm());
            &clipped
        } else {
            ctx.mu_hat
        };
        let sub = RoundCtx { mu_hat, ..*ctx };
        let z_tilde = candidate_answer(oracle, &sub)?;
        let li = if per_answer_learners { z_tilde } else { 0 };
        let w_l = learners[li].predict();
        let t = ctx.t as f64;
        let w: Vec<f64> = if forced_exploration {
            w_l.iter()
                .map(|x| 1.0 / (t * k as f64) + (1.0 - 1.0 / t) * x)
                .collect()
        } else {
            w_l
        };
        let pw = PseudoInverse::of(&design_matrix(inst.arms(), &w).map_err(ModelError::from)?);
        let lambda = alternative_distance_with(inst, mu_hat, &pw, z_tilde)?.lambda;
        let gain = optimistic_gain(inst, mu_hat, ctx.vn, &lambda, ctx.t, ctx.threshold.kind());
        let g: Vec<f64> = gain.u.iter().map(|u| (1.0 - 1.0 / t) * u).collect();
        learners[li].update(&g)?;
        Ok(match tk {
            Tracking::C => c_track(tracking, &w),
            Tracking::D => d_track(tracking, &w, ctx.n0),
        })
    }

    /// Arm choice of the non-LεBAI rules.
    pub fn baseline_round(&mut self, ctx: &RoundCtx) -> Result<usize, SamplingError> {
        let inst = ctx.inst;
        let k = inst.n_arms();
        Ok(match &mut self.state {
            SamplerState::Uniform => argmin_first(ctx.counts.iter().map(|&n| n as f64)),
            SamplerState::Fixed { w, tracking } => c_track(tracking, w),
            SamplerState::EpsTas { tracking, solver } => {
                let w = solver
                    .solve(inst, ctx.mu_hat, Outer::EpsOptimal)
                    .map(|r| r.w_f)
                    .unwrap_or_else(|_| vec![1.0 / k as f64; k]);
                let t = ctx.t as f64;
                let wt: Vec<f64> = w
                    .iter()
                    .map(|x| 1.0 / (t * k as f64) + (1.0 - 1.0 / t) * x)
                    .collect();
                c_track(tracking, &wt)
            }
            SamplerState::XyStatic { dirs } => xy_greedy_arm(inst, ctx.vn, dirs),
            SamplerState::XyAdaptive { survivors, rho0 } => {
                let SamplerConfig::XyAdaptive { phase_param } = self.cfg else {
                    unreachable!()
                };
                let mut dirs = xy_adaptive_dirs(inst, survivors);
                let rho = max_variance(ctx.vn, &dirs);
                match *rho0 {
                    None => *rho0 = Some(rho),
                    Some(r0) if rho <= phase_param * r0 && survivors.len() > 1 => {
                        let width = (2.0 * ctx.threshold.beta(ctx.t.saturating_sub(1))).sqrt();
                        let keep: Vec<usize> = survivors
                            .iter()
                            .copied()
                            .filter(|&x| {
                                !survivors.iter().any(|&z| {
                                    let y = &inst.answers()[z] - &inst.answers()[x];
                                    z != x && ctx.mu_hat.dot(&y) > ctx.vn.norm_sq(&y).sqrt() * width
                                })
                            })
                            .collect();
                        if !keep.is_empty() {
                            *survivors = keep;
                        }
                        dirs = xy_adaptive_dirs(inst, survivors);
                        *rho0 = Some(max_variance(ctx.vn, &dirs));
                    }
                    Some(_) => {}
                }
                xy_greedy_arm(inst, ctx.vn, &dirs)
            }
            SamplerState::LinGapE => lingape_select(ctx, GapStop::Glr).1,
            SamplerState::LeBai { .. } => {
                return Err(SamplingError::Config(
                    "LεBAI config in baseline round".into(),
                ))
            }
        })
    }
}

fn max_variance(vn: &PseudoInverse, dirs: &[Vector]) -> f64 {
    dirs.iter().map(|y| vn.norm_sq(y)).fold(0.0, f64::max)
}

// Pairwise differences among survivors; once one is left, it against all others.
fn xy_adaptive_dirs(inst: &ProblemInstance, survivors: &[usize]) -> Vec<Vector> {
    let zs = inst.answers();
    if survivors.len() == 1 {
        let z = survivors[0];
        return (0..zs.len())
            .filter(|&x| x != z)
            .map(|x| &zs[z] - &zs[x])
            .collect();
    }
    let mut out = Vec::new();
    for (i, &a) in survivors.iter().enumerate() {
        for &b in &survivors[i + 1..] {
            out.push(&zs[a] - &zs[b]);
        }
    }
    out
}

/// Arm minimizing `max_y ‖y‖²_{(V + aaᵀ)^{-1}}` (Sherman–Morrison).
fn xy_greedy_arm(inst: &ProblemInstance, vn: &PseudoInverse, dirs: &[Vector]) -> usize {
    let vy: Vec<Vector> = dirs.iter().map(|y| &vn.pinv * y).collect();
    let base: Vec<f64> = dirs.iter().zip(&vy).map(|(y, v)| y.dot(v)).collect();
    argmin_first(inst.arms().iter().map(|a| {
        let denom = 1.0 + vn.norm_sq(a);
        vy.iter()
            .zip(&base)
            .map(|(v, b)| b - v.dot(a).powi(2) / denom)
            .fold(f64::NEG_INFINITY, f64::max)
    }))
}

/// `(z_t, arm, gap index)` of LinGapE with greedy arm selection.
fn lingape_select(ctx: &RoundCtx, stop: GapStop) -> (usize, usize, f64) {
    let inst = ctx.inst;
    let z = greedy_answer(inst, ctx.mu_hat);
    let width = (2.0 * ctx.threshold.beta(ctx.t.saturating_sub(1))).sqrt();
    let zv = &inst.answers()[z];
    let mut best: Option<(f64, Vector)> = None;
    for (x, xv) in inst.answers().iter().enumerate() {
        if x == z {
            continue;
        }
        let y = match (stop, inst.mode()) {
            (GapStop::EpsGap, Mode::Multiplicative) => xv * (1.0 - inst.epsilon()) - zv,
            _ => xv - zv,
        };
        let index = ctx.mu_hat.dot(&y) + ctx.vn.norm_sq(&y).sqrt() * width;
        if best.as_ref().is_none_or(|(b, _)| index > *b) {
            best = Some((index, y));
        }
    }
    let Some((index, y)) = best else {
        return (z, 0, f64::NEG_INFINITY);
    };
    let vy = &ctx.vn.pinv * &y;
    let arm = argmin_first(
        inst.arms()
            .iter()
            .map(|a| -(vy.dot(a).powi(2) / (1.0 + ctx.vn.norm_sq(a)))),
    );
    (z, arm, index)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chartime::random_simplex_point;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn c_track_example() {
        let mut s = TrackingState {
            counts: vec![1, 2],
            w_cum: vec![1.0, 1.0],
        };
        assert_eq!(c_track(&mut s, &[0.6, 0.4]), 0);
        assert_eq!(
            s.deficits()
                .iter()
                .map(|d| (d * 10.0).round() / 10.0)
                .collect::<Vec<_>>(),
            vec![-0.6, 0.6]
        );
    }

    #[test]
    fn c_track_constant_allocation() {
        let mut s = TrackingState::initialized(3);
        let mut last = vec![];
        for _ in 0..50 {
            let a = c_track(&mut s, &[1.0, 0.0, 0.0]);
            s.record(a);
            last.push(a);
        }
        assert!(last[5..].iter().all(|&a| a == 0));
    }

    #[test]
    fn c_track_deficit_bounds() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for k in [2, 3, 5, 8] {
            let lower = -(2..=k).map(|j| 1.0 / j as f64).sum::<f64>();
            let mut s = TrackingState::initialized(k);
            for _ in 0..10_000 {
                let w = random_simplex_point(k, &mut rng);
                let a = c_track(&mut s, &w);
                s.record(a);
                for d in s.deficits() {
                    assert!(d <= 1.0 + 1e-9 && d >= lower - 1e-9, "k={k} deficit {d}");
                }
            }
        }
    }

    #[test]
    fn d_track_examples() {
        let s = TrackingState::initialized(3);
        assert_eq!(d_track(&s, &[1.0 / 3.0; 3], 3), 0);
        assert_eq!(d_track(&s, &[0.0, 1.0, 0.0], 3), 1);
    }

    fn v(xs: &[f64]) -> Vector {
        Vector::from_column_slice(xs)
    }

    fn e12() -> ProblemInstance {
        let (e1, e2) = (v(&[1.0, 0.0]), v(&[0.0, 1.0]));
        ProblemInstance::new(
            vec![e1.clone(), e2.clone()],
            vec![e1.clone(), e2],
            e1,
            Mode::Additive,
            0.05,
            1.0,
        )
        .unwrap()
    }

    #[test]
    fn gain_collapses_to_slack() {
        let inst = e12();
        let vn = PseudoInverse::of(&design_matrix(inst.arms(), &[3.0, 4.0]).unwrap());
        let mu = v(&[0.8, 0.1]);
        let g = optimistic_gain(&inst, &mu, &vn, &mu, 8, Threshold::Heuristic);
        for (u, c) in g.u.iter().zip(&g.c) {
            assert!((u - c).abs() < 1e-12);
        }
    }

    #[test]
    fn slack_is_capped() {
        let inst = e12();
        let vn = PseudoInverse::of(&design_matrix(inst.arms(), &[1.0, 1.0]).unwrap());
        let mu = v(&[0.8, 0.1]);
        let g = optimistic_gain(
            &inst,
            &mu,
            &vn,
            &v(&[0.0, 0.9]),
            1000,
            Threshold::Theoretical { k: 2 },
        );
        assert!(g.c.iter().all(|&c| c == 4.0));
        // lower bound U ≥ ⟨μ̂−λ, a⟩²
        for (a, u) in inst.arms().iter().zip(&g.u) {
            assert!(*u >= (&mu - v(&[0.0, 0.9])).dot(a).powi(2));
        }
    }

    #[test]
    fn config_json_round_trip() {
        for cfg in [
            SamplerConfig::lebai(),
            SamplerConfig::lingame(),
            SamplerConfig::Uniform,
            SamplerConfig::FixedOracle {
                w: Some(vec![0.3, 0.7]),
            },
            SamplerConfig::XyStatic,
            SamplerConfig::XyAdaptive { phase_param: 0.1 },
            SamplerConfig::LinGapE {
                stop: GapStop::Original,
            },
            SamplerConfig::EpsTas {
                solver: CharTimeSolver::default_for(2),
            },
        ] {
            let j = serde_json::to_string(&cfg).unwrap();
            assert_eq!(
                serde_json::from_str::<SamplerConfig>(&j).unwrap(),
                cfg,
                "{j}"
            );
        }
        let short: SamplerConfig = serde_json::from_str(r#"{"kind":"lebai"}"#).unwrap();
        assert_eq!(short, SamplerConfig::lebai());
    }

    #[test]
    fn config_validation() {
        let inst = e12();
        assert!(SamplerConfig::XyAdaptive { phase_param: 1.5 }
            .validate(&inst)
            .is_err());
        assert!(SamplerConfig::FixedOracle {
            w: Some(vec![0.3, 0.3])
        }
        .validate(&inst)
        .is_err());
    }
}
