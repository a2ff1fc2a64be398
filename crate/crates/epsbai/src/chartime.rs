//! Characteristic time `T_ε(μ)`, its greedy variant, and the hard-BAI limit.
//!
//! `T_ε(μ)⁻¹ = max_{z∈Z_ε(μ)} max_{w∈△_K} ½·inf_{λ∈¬_ε z} ‖μ−λ‖²_{V_w}`.

use crate::linalg::{design_matrix, PseudoInverse, Vector};
use crate::model::{argmax_set, eps_optimal_set, Mode, ModelError, ProblemInstance};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize, Serializer};
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CharTimeError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("invalid solver: {0}")]
    Solver(String),
    #[error("invalid argument: {0}")]
    Argument(String),
}

/// A characteristic time; `Infinite` when no allocation separates the answer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CharTime {
    Finite(f64),
    Infinite,
}

impl CharTime {
    /// From the maximized value of `½·inf ‖μ−λ‖²`.
    pub fn from_inverse(inv: f64) -> Self {
        if inv > 0.0 {
            CharTime::Finite(1.0 / inv)
        } else {
            CharTime::Infinite
        }
    }

    pub fn finite(self) -> Option<f64> {
        match self {
            CharTime::Finite(t) => Some(t),
            CharTime::Infinite => None,
        }
    }

    pub fn is_infinite(self) -> bool {
        matches!(self, CharTime::Infinite)
    }
}

impl Serialize for CharTime {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            CharTime::Finite(t) => s.serialize_f64(*t),
            CharTime::Infinite => s.serialize_str("inf"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CharTimeSolver {
    /// Uniform vector plus `n_points` symmetric Dirichlet(1/K) draws.
    Discretized { n_points: usize, seed: u64 },
    /// Nested golden-section search over simplex coordinates (K ≤ 5).
    BinarySearch { tolerance: f64, max_iters: usize },
}

impl CharTimeSolver {
    pub const MAX_BINARY_SEARCH_ARMS: usize = 5;

    /// 500 points for two arms, 10000 otherwise.
    pub fn default_for(n_arms: usize) -> Self {
        let n_points = if n_arms <= 2 { 500 } else { 10_000 };
        CharTimeSolver::Discretized { n_points, seed: 0 }
    }

    pub fn binary_search() -> Self {
        CharTimeSolver::BinarySearch {
            tolerance: 1e-6,
            max_iters: 200,
        }
    }

    pub fn tag(&self) -> &'static str {
        match self {
            CharTimeSolver::Discretized { .. } => "discretized",
            CharTimeSolver::BinarySearch { .. } => "binary_search",
        }
    }

    pub fn validate(&self, n_arms: usize) -> Result<(), CharTimeError> {
        match *self {
            CharTimeSolver::Discretized { n_points: 0, .. } => {
                Err(CharTimeError::Solver("n_points must be ≥ 1".into()))
            }
            CharTimeSolver::BinarySearch {
                tolerance,
                max_iters,
            } => {
                if !(tolerance > 0.0) || max_iters == 0 {
                    return Err(CharTimeError::Solver(
                        "tolerance must be > 0 and max_iters ≥ 1".into(),
                    ));
                }
                if n_arms > Self::MAX_BINARY_SEARCH_ARMS {
                    return Err(CharTimeError::Solver(format!(
                        "binary search supports at most {} arms, got {n_arms}",
                        Self::MAX_BINARY_SEARCH_ARMS
                    )));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CharTimeResult {
    pub t_eps: CharTime,
    /// `T⁻¹`, kept alongside to avoid round trips through the reciprocal.
    pub t_inv: f64,
    pub z_f: usize,
    pub w_f: Vec<f64>,
    pub solver_tag: String,
}

/// Candidate allocations: the uniform vector, then `n_points` sequential
/// Dirichlet(1/K) draws. Sets for growing `n_points` are nested.
pub fn dirichlet_candidates(k: usize, n_points: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut out = Vec::with_capacity(n_points + 1);
    out.push(vec![1.0 / k as f64; k]);
    if k == 1 {
        out.extend(std::iter::repeat_n(vec![1.0], n_points));
        return out;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let gamma = Gamma::new(1.0 / k as f64, 1.0).expect("positive shape");
    while out.len() < n_points + 1 {
        let g: Vec<f64> = (0..k).map(|_| gamma.sample(&mut rng)).collect();
        let s: f64 = g.iter().sum();
        if s > 0.0 && s.is_finite() {
            out.push(g.into_iter().map(|x| x / s).collect());
        }
    }
    out
}

/// Per-candidate `‖y‖²_{V_w†}` for every ordered answer pair; directions
/// outside `Im(V_w)` are stored as `+∞` so their distance vanishes.
#[derive(Debug, Clone)]
pub struct DesignTable {
    weights: Vec<Vec<f64>>,
    n_answers: usize,
    ys: Vec<Vector>,
    cs: Vec<f64>,
    norms: Vec<f64>,
}

impl DesignTable {
    pub fn build(inst: &ProblemInstance, weights: Vec<Vec<f64>>) -> Result<Self, CharTimeError> {
        let nz = inst.n_answers();
        if nz < 2 {
            return Err(ModelError::SingleAnswer.into());
        }
        let mut ys = Vec::with_capacity(nz * (nz - 1));
        let mut cs = Vec::with_capacity(nz * (nz - 1));
        for z in 0..nz {
            for x in (0..nz).filter(|&x| x != z) {
                let (y, c) = inst.direction(z, x);
                ys.push(y);
                cs.push(c);
            }
        }
        let mut norms = Vec::with_capacity(weights.len() * ys.len());
        for w in &weights {
            let p = PseudoInverse::of(&design_matrix(inst.arms(), w).map_err(ModelError::from)?);
            for y in &ys {
                norms.push(if p.in_image(y) {
                    p.norm_sq(y)
                } else {
                    f64::INFINITY
                });
            }
        }
        Ok(Self {
            weights,
            n_answers: nz,
            ys,
            cs,
            norms,
        })
    }

    pub fn n_candidates(&self) -> usize {
        self.weights.len()
    }

    pub fn weights(&self) -> &[Vec<f64>] {
        &self.weights
    }

    /// `(max ½·distance, z, candidate index)` over `zs` and all candidates.
    pub fn solve(&self, theta: &Vector, zs: &[usize]) -> (f64, usize, usize) {
        let per_z = self.n_answers - 1;
        let n_pairs = self.ys.len();
        let gaps: Vec<f64> = self
            .ys
            .iter()
            .zip(&self.cs)
            .map(|(y, c)| theta.dot(y) - c)
            .collect();
        let mut best = (f64::NEG_INFINITY, zs[0], 0usize);
        for &z in zs {
            let block = z * per_z..(z + 1) * per_z;
            if gaps[block.clone()].iter().any(|&g| g <= 0.0) {
                if 0.0 > best.0 {
                    best = (0.0, z, 0);
                }
                continue;
            }
            for (ci, row) in self.norms.chunks_exact(n_pairs).enumerate() {
                let mut m = f64::INFINITY;
                for p in block.clone() {
                    let v = gaps[p] * gaps[p] / row[p];
                    if v < m {
                        m = v;
                    }
                }
                if m > best.0 {
                    best = (m, z, ci);
                }
            }
        }
        (0.5 * best.0, best.1, best.2)
    }
}

/// A solver with its instance-dependent precomputation done once.
#[derive(Debug, Clone)]
pub enum PreparedSolver {
    Table {
        table: Arc<DesignTable>,
        solver: CharTimeSolver,
    },
    Binary {
        tolerance: f64,
        max_iters: usize,
    },
}

/// Which answers the outer maximization ranges over.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outer {
    EpsOptimal,
    Greedy,
}

impl PreparedSolver {
    pub fn new(inst: &ProblemInstance, solver: &CharTimeSolver) -> Result<Self, CharTimeError> {
        solver.validate(inst.n_arms())?;
        Ok(match *solver {
            CharTimeSolver::Discretized { n_points, seed } => {
                let cands = dirichlet_candidates(inst.n_arms(), n_points, seed);
                PreparedSolver::Table {
                    table: Arc::new(DesignTable::build(inst, cands)?),
                    solver: solver.clone(),
                }
            }
            CharTimeSolver::BinarySearch {
                tolerance,
                max_iters,
            } => PreparedSolver::Binary {
                tolerance,
                max_iters,
            },
        })
    }

    pub fn solve(
        &self,
        inst: &ProblemInstance,
        theta: &Vector,
        outer: Outer,
    ) -> Result<CharTimeResult, CharTimeError> {
        let zs = match outer {
            Outer::EpsOptimal => eps_optimal_set(inst, theta)?,
            Outer::Greedy => argmax_set(inst, theta),
        };
        self.solve_over(inst, theta, &zs)
    }

    pub fn solve_over(
        &self,
        inst: &ProblemInstance,
        theta: &Vector,
        zs: &[usize],
    ) -> Result<CharTimeResult, CharTimeError> {
        if inst.n_answers() < 2 {
            return Err(ModelError::SingleAnswer.into());
        }
        let (inv, z_f, w_f, tag) = match self {
            PreparedSolver::Table { table, solver } => {
                let (inv, z, ci) = table.solve(theta, zs);
                (inv, z, table.weights[ci].clone(), solver.tag())
            }
            PreparedSolver::Binary {
                tolerance,
                max_iters,
            } => {
                let mut best = (
                    f64::NEG_INFINITY,
                    zs[0],
                    vec![1.0 / inst.n_arms() as f64; inst.n_arms()],
                );
                for &z in zs {
                    let (w, v) = binary_search_answer(inst, theta, z, *tolerance, *max_iters);
                    if v > best.0 {
                        best = (v, z, w);
                    }
                }
                (0.5 * best.0, best.1, best.2, "binary_search")
            }
        };
        Ok(CharTimeResult {
            t_eps: CharTime::from_inverse(inv),
            t_inv: inv,
            z_f,
            w_f,
            solver_tag: tag.to_string(),
        })
    }
}

pub fn char_time(
    inst: &ProblemInstance,
    theta: &Vector,
    solver: &CharTimeSolver,
) -> Result<CharTimeResult, CharTimeError> {
    PreparedSolver::new(inst, solver)?.solve(inst, theta, Outer::EpsOptimal)
}

pub fn greedy_char_time(
    inst: &ProblemInstance,
    theta: &Vector,
    solver: &CharTimeSolver,
) -> Result<CharTimeResult, CharTimeError> {
    PreparedSolver::new(inst, solver)?.solve(inst, theta, Outer::Greedy)
}

// min_x gap²/‖y‖²_{V_w†} for one answer; concave in w.
fn answer_objective(inst: &ProblemInstance, theta: &Vector, z: usize, w: &[f64]) -> f64 {
    let p = match design_matrix(inst.arms(), w) {
        Ok(v) => PseudoInverse::of(&v),
        Err(_) => return 0.0,
    };
    let mut m = f64::INFINITY;
    for x in (0..inst.n_answers()).filter(|&x| x != z) {
        let (y, c) = inst.direction(z, x);
        let gap = theta.dot(&y) - c;
        let v = if gap <= 0.0 || !p.in_image(&y) {
            0.0
        } else {
            gap * gap / p.norm_sq(&y)
        };
        m = m.min(v);
    }
    m
}

/// Maximizes the per-answer objective by golden-section search on each
/// simplex coordinate in turn, the remaining mass going to later coordinates.
/// Partial maxima of a concave function are concave, so every level is unimodal.
fn binary_search_answer(
    inst: &ProblemInstance,
    theta: &Vector,
    z: usize,
    tol: f64,
    max_iters: usize,
) -> (Vec<f64>, f64) {
    let k = inst.n_arms();
    let mut w = vec![0.0; k];
    let mut best = (f64::NEG_INFINITY, vec![1.0 / k as f64; k]);
    let mut leaf = |w: &[f64]| {
        let v = answer_objective(inst, theta, z, w);
        if v > best.0 {
            best = (v, w.to_vec());
        }
        v
    };
    nested_golden(0, 1.0, &mut w, &mut leaf, tol, max_iters);
    (best.1, best.0)
}

fn nested_golden(
    level: usize,
    rem: f64,
    w: &mut Vec<f64>,
    leaf: &mut dyn FnMut(&[f64]) -> f64,
    tol: f64,
    max_iters: usize,
) -> f64 {
    let k = w.len();
    if level + 1 == k {
        w[level] = rem;
        return leaf(w);
    }
    let mut eval = |s: f64, w: &mut Vec<f64>| {
        w[level] = s;
        let v = nested_golden(level + 1, (rem - s).max(0.0), w, leaf, tol, max_iters);
        w[level] = 0.0;
        v
    };
    let invphi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (0.0, rem);
    let mut c = b - invphi * (b - a);
    let mut d = a + invphi * (b - a);
    let mut fc = eval(c, w);
    let mut fd = eval(d, w);
    let mut it = 0;
    while (b - a) > tol && it < max_iters {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - invphi * (b - a);
            fc = eval(c, w);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + invphi * (b - a);
            fd = eval(d, w);
        }
        it += 1;
    }
    let ends = [eval(0.0, w), eval(rem, w), eval(0.5 * (a + b), w)];
    ends.into_iter().fold(fc.max(fd), f64::max)
}

/// Root of `min_w 1/w + a/(1−w)`, in the three-branch form.
pub fn w_star(a: f64) -> f64 {
    if (a - 1.0).abs() < 1e-15 {
        0.5
    } else if a > 1.0 {
        (a.sqrt() - 1.0) / (a - 1.0)
    } else {
        (1.0 - a.sqrt()) / (1.0 - a)
    }
}

/// Closed-form limit of the hard-BAI family as the nuisance answer merges
/// into `e₁`, returned with `w*`. The value is on the scale without the
/// ½ factor of `T⁻¹`: `char_time` on the family tends to twice this number.
pub fn hard_bai_limit(d: usize, eps: f64, mode: Mode) -> Result<(f64, f64), CharTimeError> {
    if d < 2 {
        return Err(CharTimeError::Argument(format!("d must be ≥ 2, got {d}")));
    }
    if !(eps > 0.0) {
        return Err(CharTimeError::Argument(format!(
            "eps must be > 0, got {eps}"
        )));
    }
    let dm1 = (d - 1) as f64;
    Ok(match mode {
        Mode::Additive => {
            let w = w_star(dm1);
            (
                (1.0 / (w) + dm1 / (1.0 - w)) / ((1.0 + eps) * (1.0 + eps)),
                w,
            )
        }
        Mode::Multiplicative => {
            let a = (1.0 - eps) * (1.0 - eps) * dm1;
            let w = w_star(a);
            (1.0 / w + a / (1.0 - w), w)
        }
    })
}

/// Two-arm member of the hard-BAI family: `K = {e₁,e₂}`,
/// `Z = {e₁, (cos θ, sin θ), e₂}`, `μ = e₁`.
pub fn hard_bai_family(theta: f64, eps: f64, mode: Mode) -> Result<ProblemInstance, CharTimeError> {
    let e1 = Vector::from_column_slice(&[1.0, 0.0]);
    let e2 = Vector::from_column_slice(&[0.0, 1.0]);
    let a = Vector::from_column_slice(&[theta.cos(), theta.sin()]);
    Ok(ProblemInstance::new(
        vec![e1.clone(), e2.clone()],
        vec![e1.clone(), a, e2],
        e1,
        mode,
        eps,
        1.0,
    )?)
}

/// Random point of the simplex, used by property tests and the CLI.
pub fn random_simplex_point<R: Rng>(k: usize, rng: &mut R) -> Vec<f64> {
    let g: Vec<f64> = (0..k)
        .map(|_| -(rng.random::<f64>().max(1e-300)).ln())
        .collect();
    let s: f64 = g.iter().sum();
    g.into_iter().map(|x| x / s).collect()
}
