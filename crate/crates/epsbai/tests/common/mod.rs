#![allow(dead_code)]

pub mod props;

use epsbai::cli::gen_hard_instance;
use epsbai::model::{Mode, ProblemInstance};
use epsbai::sampling::{CandidateRule, GapStop, SamplerConfig};
use epsbai::sim::{run_batch, BatchSummary, RunConfig};
use epsbai::stopping::ThresholdKind;
use rand::Rng;

pub const EPS: f64 = 0.05;
pub const DELTA: f64 = 0.01;

pub fn workers() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

pub fn two_arm(mode: Mode) -> ProblemInstance {
    gen_hard_instance(2, EPS, mode, 0.1, true).unwrap()
}

pub fn hard(mode: Mode) -> ProblemInstance {
    gen_hard_instance(2, EPS, mode, 0.1, false).unwrap()
}

pub fn batch(cfg: &RunConfig, inst: &ProblemInstance, n_runs: usize) -> BatchSummary {
    run_batch(cfg, inst, DELTA, n_runs, 0, workers())
        .unwrap()
        .summary
}

pub fn mean_tau(
    sampler: SamplerConfig,
    candidate: CandidateRule,
    inst: &ProblemInstance,
    n_runs: usize,
) -> f64 {
    batch(
        &RunConfig::new(sampler).with_candidate(candidate),
        inst,
        n_runs,
    )
    .mean_tau
}

/// Sampling rules of the modified-BAI comparison, plus LεBAI.
pub fn modified_samplers() -> Vec<SamplerConfig> {
    vec![
        SamplerConfig::lebai(),
        SamplerConfig::lingame(),
        SamplerConfig::XyStatic,
        SamplerConfig::XyAdaptive { phase_param: 0.1 },
        SamplerConfig::LinGapE { stop: GapStop::Glr },
    ]
}

pub fn theoretical(sampler: SamplerConfig) -> RunConfig {
    RunConfig::new(sampler).with_threshold(ThresholdKind::Theoretical)
}

pub fn unit_circle<R: Rng>(rng: &mut R) -> epsbai::linalg::Vector {
    let a: f64 = rng.random_range(-std::f64::consts::PI..std::f64::consts::PI);
    epsbai::linalg::Vector::from_column_slice(&[a.cos(), a.sin()])
}

/// Random d=2 instance with arms = answers, `k` unit answers, `μ` in the unit disc.
pub fn random_small<R: Rng>(k: usize, mode: Mode, eps: f64, rng: &mut R) -> ProblemInstance {
    loop {
        let answers: Vec<_> = (0..k).map(|_| unit_circle(rng)).collect();
        let mu = unit_circle(rng) * rng.random_range(0.3..1.0);
        if let Ok(inst) = ProblemInstance::new(answers.clone(), answers, mu, mode, eps, 1.0) {
            return inst;
        }
    }
}

/// As [`random_small`], multiplicative, with `⟨μ, z⟩ > 0` for every answer.
pub fn random_small_positive<R: Rng>(k: usize, eps: f64, rng: &mut R) -> ProblemInstance {
    loop {
        let inst = random_small(k, Mode::Multiplicative, eps, rng);
        if inst.values(inst.mu()).iter().all(|&v| v > 0.0) {
            return inst;
        }
    }
}
