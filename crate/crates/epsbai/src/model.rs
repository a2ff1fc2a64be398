//! Problem instances, ε-optimal answer sets and closest-alternative
//! projections onto unions of half-spaces.

use crate::chartime::{self, CharTime, CharTimeSolver};
use crate::linalg::{design_matrix, DesignMatrix, LinalgError, PseudoInverse, Vector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("instance has no answers")]
    NoAnswers,
    #[error("instance has no arms")]
    NoArms,
    #[error("vector {what} has dimension {got}, expected {expected}")]
    Dimension {
        what: String,
        expected: usize,
        got: usize,
    },
    #[error("arms do not span R^{d} (rank {rank})")]
    ArmsDoNotSpan { d: usize, rank: usize },
    #[error("‖mu‖ = {norm} exceeds bound_M = {bound}")]
    MuOutOfBound { norm: f64, bound: f64 },
    #[error("epsilon must be finite and ≥ 0 (multiplicative: < 1), got {0}")]
    InvalidEpsilon(f64),
    #[error("multiplicative ε-optimality needs a positive best value, got {0}")]
    NonPositiveMax(f64),
    #[error("at least two answers are needed to form an alternative")]
    SingleAnswer,
    #[error("answer index {0} out of range")]
    AnswerIndex(usize),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    CharTime(#[from] Box<chartime::CharTimeError>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Additive,
    Multiplicative,
}

impl Mode {
    pub fn tag(self) -> &'static str {
        match self {
            Mode::Additive => "additive",
            Mode::Multiplicative => "multiplicative",
        }
    }
}

impl std::str::FromStr for Mode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "add" | "additive" => Ok(Mode::Additive),
            "mul" | "mult" | "multiplicative" => Ok(Mode::Multiplicative),
            other => Err(format!("unknown mode `{other}` (expected add|mul)")),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
struct RawInstance {
    d: usize,
    arms: Vec<Vec<f64>>,
    answers: Vec<Vec<f64>>,
    mu: Vec<f64>,
    mode: Mode,
    epsilon: f64,
    #[serde(rename = "bound_M")]
    bound_m: f64,
}

/// Arms, answers, true mean and the ε-optimality notion.
///
/// Serializes to the instance JSON format; floats are written in shortest
/// round-trip form, so reading back is lossless.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawInstance", into = "RawInstance")]
pub struct ProblemInstance {
    d: usize,
    arms: Vec<Vector>,
    answers: Vec<Vector>,
    mu: Vector,
    mode: Mode,
    epsilon: f64,
    bound_m: f64,
}

impl TryFrom<RawInstance> for ProblemInstance {
    type Error = ModelError;
    fn try_from(r: RawInstance) -> Result<Self, ModelError> {
        let conv = |v: Vec<Vec<f64>>| v.into_iter().map(Vector::from_vec).collect::<Vec<_>>();
        let inst = ProblemInstance::new(
            conv(r.arms),
            conv(r.answers),
            Vector::from_vec(r.mu),
            r.mode,
            r.epsilon,
            r.bound_m,
        )?;
        if inst.d != r.d {
            return Err(ModelError::Dimension {
                what: "d".into(),
                expected: inst.d,
                got: r.d,
            });
        }
        Ok(inst)
    }
}

impl From<ProblemInstance> for RawInstance {
    fn from(p: ProblemInstance) -> Self {
        let conv = |v: &[Vector]| v.iter().map(|x| x.iter().cloned().collect()).collect();
        RawInstance {
            d: p.d,
            arms: conv(&p.arms),
            answers: conv(&p.answers),
            mu: p.mu.iter().cloned().collect(),
            mode: p.mode,
            epsilon: p.epsilon,
            bound_m: p.bound_m,
        }
    }
}

impl ProblemInstance {
    pub fn new(
        arms: Vec<Vector>,
        answers: Vec<Vector>,
        mu: Vector,
        mode: Mode,
        epsilon: f64,
        bound_m: f64,
    ) -> Result<Self, ModelError> {
        if arms.is_empty() {
            return Err(ModelError::NoArms);
        }
        if answers.is_empty() {
            return Err(ModelError::NoAnswers);
        }
        let d = mu.len();
        for (i, a) in arms.iter().enumerate() {
            if a.len() != d {
                return Err(ModelError::Dimension {
                    what: format!("arm {i}"),
                    expected: d,
                    got: a.len(),
                });
            }
        }
        for (i, z) in answers.iter().enumerate() {
            if z.len() != d {
                return Err(ModelError::Dimension {
                    what: format!("answer {i}"),
                    expected: d,
                    got: z.len(),
                });
            }
        }
        let eps_ok =
            epsilon.is_finite() && epsilon >= 0.0 && (mode == Mode::Additive || epsilon < 1.0);
        if !eps_ok {
            return Err(ModelError::InvalidEpsilon(epsilon));
        }
        let v = design_matrix(&arms, &vec![1.0; arms.len()])?;
        let rank = PseudoInverse::of(&v).rank;
        if rank < d {
            return Err(ModelError::ArmsDoNotSpan { d, rank });
        }
        let norm = mu.norm();
        if !(norm <= bound_m * (1.0 + 1e-12)) {
            return Err(ModelError::MuOutOfBound {
                norm,
                bound: bound_m,
            });
        }
        let inst = Self {
            d,
            arms,
            answers,
            mu,
            mode,
            epsilon,
            bound_m,
        };
        if mode == Mode::Multiplicative {
            let best = inst
                .values(&inst.mu)
                .into_iter()
                .fold(f64::NEG_INFINITY, f64::max);
            if !(best > 0.0) {
                return Err(ModelError::NonPositiveMax(best));
            }
        }
        Ok(inst)
    }

    pub fn d(&self) -> usize {
        self.d
    }
    pub fn arms(&self) -> &[Vector] {
        &self.arms
    }
    pub fn answers(&self) -> &[Vector] {
        &self.answers
    }
    pub fn mu(&self) -> &Vector {
        &self.mu
    }
    pub fn mode(&self) -> Mode {
        self.mode
    }
    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }
    pub fn bound_m(&self) -> f64 {
        self.bound_m
    }
    pub fn n_arms(&self) -> usize {
        self.arms.len()
    }
    pub fn n_answers(&self) -> usize {
        self.answers.len()
    }
    /// L_K, the largest arm norm.
    pub fn max_arm_norm(&self) -> f64 {
        self.arms.iter().map(|a| a.norm()).fold(0.0, f64::max)
    }

    /// Same arms and answers with another ε-optimality notion.
    pub fn with_mode(&self, mode: Mode, epsilon: f64) -> Result<Self, ModelError> {
        Self::new(
            self.arms.clone(),
            self.answers.clone(),
            self.mu.clone(),
            mode,
            epsilon,
            self.bound_m,
        )
    }

    pub fn values(&self, theta: &Vector) -> Vec<f64> {
        self.answers.iter().map(|z| z.dot(theta)).collect()
    }

    /// Half-space `{λ : ⟨λ,y⟩ ≤ c}` whose union over `x ≠ z` is the alternative to `z`.
    pub fn direction(&self, z: usize, x: usize) -> (Vector, f64) {
        let (zv, xv) = (&self.answers[z], &self.answers[x]);
        match self.mode {
            Mode::Additive => (zv - xv, -self.epsilon),
            Mode::Multiplicative => (zv - xv * (1.0 - self.epsilon), 0.0),
        }
    }
}

/// Lowest-index-first argmax set of the answer values.
pub fn argmax_set(inst: &ProblemInstance, theta: &Vector) -> Vec<usize> {
    let vals = inst.values(theta);
    let best = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    (0..vals.len()).filter(|&i| vals[i] == best).collect()
}

pub fn greedy_answer(inst: &ProblemInstance, theta: &Vector) -> usize {
    argmax_set(inst, theta)[0]
}

pub fn eps_optimal_set(inst: &ProblemInstance, theta: &Vector) -> Result<Vec<usize>, ModelError> {
    let vals = inst.values(theta);
    let best = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let level = match inst.mode {
        Mode::Additive => best - inst.epsilon,
        Mode::Multiplicative => {
            if !(best > 0.0) {
                return Err(ModelError::NonPositiveMax(best));
            }
            (1.0 - inst.epsilon) * best
        }
    };
    Ok((0..vals.len())
        .filter(|&i| vals[i] >= level || vals[i] == best)
        .collect())
}

/// ε-optimal set, or the argmax set when multiplicative optimality is undefined.
pub fn eps_optimal_set_or_argmax(inst: &ProblemInstance, theta: &Vector) -> Vec<usize> {
    eps_optimal_set(inst, theta).unwrap_or_else(|_| argmax_set(inst, theta))
}

pub fn is_eps_optimal(inst: &ProblemInstance, theta: &Vector, z: usize) -> bool {
    eps_optimal_set_or_argmax(inst, theta).contains(&z)
}

#[derive(Debug, Clone, PartialEq)]
pub struct HalfspaceProjection {
    pub distance_sq: f64,
    pub lambda: Vector,
    pub degenerate: bool,
}

/// Closest point of `{λ : ⟨λ,y⟩ ≤ c}` to `mu_hat` in the `V` semi-norm.
///
/// An empty half-space (`y = 0`, `c < 0`) yields an infinite distance.
pub fn project_halfspace(
    mu_hat: &Vector,
    v: &DesignMatrix,
    y: &Vector,
    c: f64,
) -> HalfspaceProjection {
    project_with(mu_hat, &PseudoInverse::of(v), y, c)
}

pub fn project_with(mu_hat: &Vector, p: &PseudoInverse, y: &Vector, c: f64) -> HalfspaceProjection {
    let excess = mu_hat.dot(y) - c;
    if excess <= 0.0 {
        return HalfspaceProjection {
            distance_sq: 0.0,
            lambda: mu_hat.clone(),
            degenerate: false,
        };
    }
    let ny = y.norm();
    if ny == 0.0 {
        return HalfspaceProjection {
            distance_sq: f64::INFINITY,
            lambda: mu_hat.clone(),
            degenerate: false,
        };
    }
    if !p.in_image(y) {
        // slide along the kernel component of y: free in the V semi-norm
        let k = y - &p.projector * y;
        let s = excess / k.dot(y);
        return HalfspaceProjection {
            distance_sq: 0.0,
            lambda: mu_hat - k * s,
            degenerate: true,
        };
    }
    let vy = &p.pinv * y;
    let n = y.dot(&vy);
    let lambda = mu_hat - vy * (excess / n);
    HalfspaceProjection {
        distance_sq: excess * excess / n,
        lambda,
        degenerate: false,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AlternativeProjection {
    pub distance_sq: f64,
    pub lambda: Vector,
    pub witness: usize,
    pub degenerate: bool,
}

pub fn alternative_distance(
    inst: &ProblemInstance,
    theta: &Vector,
    w: &[f64],
    z: usize,
) -> Result<AlternativeProjection, ModelError> {
    let v = design_matrix(inst.arms(), w)?;
    alternative_distance_with(inst, theta, &PseudoInverse::of(&v), z)
}

/// As [`alternative_distance`] with a precomputed pseudo-inverse of `V_w`.
pub fn alternative_distance_with(
    inst: &ProblemInstance,
    theta: &Vector,
    p: &PseudoInverse,
    z: usize,
) -> Result<AlternativeProjection, ModelError> {
    if z >= inst.n_answers() {
        return Err(ModelError::AnswerIndex(z));
    }
    if inst.n_answers() < 2 {
        return Err(ModelError::SingleAnswer);
    }
    let mut best: Option<AlternativeProjection> = None;
    for x in (0..inst.n_answers()).filter(|&x| x != z) {
        let (y, c) = inst.direction(z, x);
        let h = project_with(theta, p, &y, c);
        if best.as_ref().is_none_or(|b| h.distance_sq < b.distance_sq) {
            best = Some(AlternativeProjection {
                distance_sq: h.distance_sq,
                lambda: h.lambda,
                witness: x,
                degenerate: h.degenerate,
            });
        }
    }
    Ok(best.expect("at least one x != z"))
}

/// Answer of the ε-optimal set with the largest alternative distance at `weights`.
pub fn instantaneous_furthest(
    inst: &ProblemInstance,
    theta: &Vector,
    weights: &[f64],
) -> Result<(usize, AlternativeProjection), ModelError> {
    let v = design_matrix(inst.arms(), weights)?;
    instantaneous_furthest_with(inst, theta, &PseudoInverse::of(&v))
}

pub fn instantaneous_furthest_with(
    inst: &ProblemInstance,
    theta: &Vector,
    p: &PseudoInverse,
) -> Result<(usize, AlternativeProjection), ModelError> {
    let set = eps_optimal_set_or_argmax(inst, theta);
    if set.len() == 1 && inst.n_answers() < 2 {
        return Err(ModelError::SingleAnswer);
    }
    let mut best: Option<(usize, AlternativeProjection)> = None;
    for &z in &set {
        let a = alternative_distance_with(inst, theta, p, z)?;
        if best
            .as_ref()
            .is_none_or(|(_, b)| a.distance_sq > b.distance_sq)
        {
            best = Some((z, a));
        }
    }
    Ok(best.expect("ε-optimal set is never empty"))
}

/// `(z_F, w_F, T_ε)` at `theta`.
pub fn furthest_answer(
    inst: &ProblemInstance,
    theta: &Vector,
    solver: &CharTimeSolver,
) -> Result<(usize, Vec<f64>, CharTime), ModelError> {
    let r = chartime::char_time(inst, theta, solver).map_err(Box::new)?;
    Ok((r.z_f, r.w_f, r.t_eps))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn v(xs: &[f64]) -> Vector {
        Vector::from_column_slice(xs)
    }

    fn e12(mode: Mode, eps: f64, answers: Vec<Vector>) -> ProblemInstance {
        ProblemInstance::new(
            vec![v(&[1.0, 0.0]), v(&[0.0, 1.0])],
            answers,
            v(&[1.0, 0.0]),
            mode,
            eps,
            1.0,
        )
        .unwrap()
    }

    #[test]
    fn eps_zero_is_argmax() {
        let inst = e12(
            Mode::Additive,
            0.0,
            vec![v(&[1.0, 0.0]), v(&[0.9, 0.1]), v(&[1.0, 0.0])],
        );
        assert_eq!(eps_optimal_set(&inst, inst.mu()).unwrap(), vec![0, 2]);
    }

    #[test]
    fn cone_membership_angle() {
        let eps = 0.05;
        let th = (1.0f64 - eps).acos();
        for mode in [Mode::Additive, Mode::Multiplicative] {
            for (ang, inside) in [(0.99 * th, true), (1.01 * th, false)] {
                let inst = e12(mode, eps, vec![v(&[1.0, 0.0]), v(&[ang.cos(), ang.sin()])]);
                assert_eq!(
                    eps_optimal_set(&inst, inst.mu()).unwrap().contains(&1),
                    inside,
                    "{mode:?} {ang}"
                );
            }
        }
    }

    #[test]
    fn multiplicative_nonpositive_max_errors() {
        let inst = e12(
            Mode::Multiplicative,
            0.05,
            vec![v(&[1.0, 0.0]), v(&[0.0, 1.0])],
        );
        let theta = v(&[-1.0, -1.0]);
        assert!(matches!(
            eps_optimal_set(&inst, &theta),
            Err(ModelError::NonPositiveMax(_))
        ));
        assert_eq!(eps_optimal_set_or_argmax(&inst, &theta), vec![0, 1]);
    }

    #[test]
    fn projection_feasible_point() {
        let vm = design_matrix(&[v(&[1.0, 0.0]), v(&[0.0, 1.0])], &[0.5, 0.5]).unwrap();
        let mu = v(&[0.0, 1.0]);
        let h = project_halfspace(&mu, &vm, &v(&[1.0, -1.0]), -0.05);
        assert_eq!(h.distance_sq, 0.0);
        assert_eq!(h.lambda, mu);
    }

    #[test]
    fn projection_worked_example() {
        let vm = design_matrix(&[v(&[1.0, 0.0]), v(&[0.0, 1.0])], &[0.5, 0.5]).unwrap();
        let h = project_halfspace(&v(&[1.0, 0.0]), &vm, &v(&[1.0, -1.0]), -0.05);
        assert_abs_diff_eq!(h.distance_sq, 0.275625, epsilon = 1e-12);
        assert_abs_diff_eq!(h.lambda, v(&[0.475, 0.525]), epsilon = 1e-12);
        assert_abs_diff_eq!(h.lambda.dot(&v(&[1.0, -1.0])), -0.05, epsilon = 1e-12);
    }

    #[test]
    fn projection_outside_image_is_free() {
        let vm = design_matrix(&[v(&[1.0, 0.0]), v(&[0.0, 1.0])], &[1.0, 0.0]).unwrap();
        let y = v(&[1.0, -1.0]);
        let h = project_halfspace(&v(&[1.0, 0.0]), &vm, &y, -0.05);
        assert_eq!(h.distance_sq, 0.0);
        assert!(h.degenerate);
        assert_abs_diff_eq!(h.lambda.dot(&y), -0.05, epsilon = 1e-12);
        // moving along the kernel costs nothing
        assert_abs_diff_eq!(
            crate::linalg::weighted_norm_sq(&vm, &(v(&[1.0, 0.0]) - &h.lambda)).unwrap(),
            0.0,
            epsilon = 1e-12
        );
    }

    #[test]
    fn alternative_examples() {
        let inst = e12(Mode::Additive, 0.05, vec![v(&[1.0, 0.0]), v(&[0.0, 1.0])]);
        let a = alternative_distance(&inst, inst.mu(), &[0.5, 0.5], 0).unwrap();
        assert_abs_diff_eq!(a.distance_sq, 0.275625, epsilon = 1e-12);
        assert_eq!(a.witness, 1);

        let theta = v(&[0.0, 1.0]);
        let a = alternative_distance(&inst, &theta, &[0.5, 0.5], 0).unwrap();
        assert_eq!(a.distance_sq, 0.0);
        assert_eq!(a.lambda, theta);

        let inst0 = inst.with_mode(Mode::Additive, 0.0).unwrap();
        let d0 = alternative_distance(&inst0, inst.mu(), &[0.3, 0.7], 0)
            .unwrap()
            .distance_sq;
        let d1 = alternative_distance(&inst, inst.mu(), &[0.3, 0.7], 0)
            .unwrap()
            .distance_sq;
        assert!(d1 >= d0);
    }

    #[test]
    fn single_answer_is_error() {
        let inst = e12(Mode::Additive, 0.05, vec![v(&[1.0, 0.0])]);
        assert_eq!(
            alternative_distance(&inst, inst.mu(), &[0.5, 0.5], 0),
            Err(ModelError::SingleAnswer)
        );
    }

    #[test]
    fn furthest_singleton_and_tie() {
        let inst = e12(Mode::Additive, 0.05, vec![v(&[1.0, 0.0]), v(&[0.0, 1.0])]);
        assert_eq!(
            instantaneous_furthest(&inst, inst.mu(), &[0.5, 0.5])
                .unwrap()
                .0,
            0
        );
        // symmetric: mu on the diagonal, answers mirrored
        let sym = ProblemInstance::new(
            vec![v(&[1.0, 0.0]), v(&[0.0, 1.0])],
            vec![v(&[1.0, 0.0]), v(&[0.0, 1.0]), v(&[-1.0, -1.0])],
            v(&[0.5, 0.5]),
            Mode::Additive,
            0.05,
            1.0,
        )
        .unwrap();
        let (z, _) = instantaneous_furthest(&sym, sym.mu(), &[0.5, 0.5]).unwrap();
        assert_eq!(z, 0);
    }

    #[test]
    fn multiplicative_boundary() {
        let a3 = v(&[0.1f64.cos(), 0.1f64.sin()]);
        let inst = e12(
            Mode::Multiplicative,
            0.05,
            vec![v(&[1.0, 0.0]), v(&[0.0, 1.0]), a3],
        );
        for z in eps_optimal_set(&inst, inst.mu()).unwrap() {
            let a = alternative_distance(&inst, inst.mu(), &[0.4, 0.6], z).unwrap();
            let x = &inst.answers()[a.witness];
            let zz = &inst.answers()[z];
            assert_abs_diff_eq!(a.lambda.dot(&(zz - x * 0.95)), 0.0, epsilon = 1e-10);
        }
    }

    #[test]
    fn json_round_trip() {
        let inst = e12(
            Mode::Multiplicative,
            0.05,
            vec![v(&[1.0, 0.0]), v(&[0.1f64.cos(), 0.1f64.sin()])],
        );
        let s = serde_json::to_string(&inst).unwrap();
        assert!(s.contains("\"bound_M\""));
        assert!(s.contains("\"multiplicative\""));
        let back: ProblemInstance = serde_json::from_str(&s).unwrap();
        assert_eq!(back, inst);
    }

    #[test]
    fn invalid_instances() {
        let r = ProblemInstance::new(
            vec![v(&[1.0, 0.0])],
            vec![v(&[1.0, 0.0])],
            v(&[1.0, 0.0]),
            Mode::Additive,
            0.1,
            1.0,
        );
        assert!(matches!(r, Err(ModelError::ArmsDoNotSpan { .. })));
        let r = ProblemInstance::new(
            vec![v(&[1.0, 0.0]), v(&[0.0, 1.0])],
            vec![v(&[1.0, 0.0])],
            v(&[2.0, 0.0]),
            Mode::Additive,
            0.1,
            1.0,
        );
        assert!(matches!(r, Err(ModelError::MuOutOfBound { .. })));
        let r = ProblemInstance::new(
            vec![v(&[1.0, 0.0]), v(&[0.0, 1.0])],
            vec![v(&[-1.0, 0.0])],
            v(&[1.0, 0.0]),
            Mode::Multiplicative,
            0.1,
            1.0,
        );
        assert!(matches!(r, Err(ModelError::NonPositiveMax(_))));
    }
}
