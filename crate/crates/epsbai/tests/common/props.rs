//! Property checks shared by the `properties` tests and the acceptance run.
//! Each returns a one-line detail, `Err` on violation.

use super::*;
use epsbai::chartime::{
    char_time, greedy_char_time, hard_bai_family, hard_bai_limit, random_simplex_point,
    CharTimeSolver,
};
use epsbai::learner::AdaHedgeState;
use epsbai::linalg::{design_matrix, EstimatorState, PseudoInverse, Vector};
use epsbai::model::{alternative_distance, project_halfspace};
use epsbai::sampling::{c_track, TrackingState};
use epsbai::sim::run_one;
use epsbai::stopping::{Grid, Schedule};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Check = Result<String, String>;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// `−Σ_{j=2}^K 1/j ≤ N^a − W^a ≤ 1` along random 10⁴-round trajectories.
pub fn tracking_deficits() -> Check {
    let mut worst = (0.0f64, 0.0f64);
    for (s, k) in [2usize, 3, 5, 8].into_iter().enumerate() {
        let lower = -(2..=k).map(|j| 1.0 / j as f64).sum::<f64>();
        let mut r = rng(100 + s as u64);
        let mut st = TrackingState::initialized(k);
        for t in 0..10_000 {
            // alternate fresh and persistent targets to stress both regimes
            let w = if t % 50 < 25 {
                random_simplex_point(k, &mut r)
            } else {
                vec![1.0 / k as f64; k]
            };
            let a = c_track(&mut st, &w);
            st.record(a);
            for d in st.deficits() {
                worst = (worst.0.min(d), worst.1.max(d));
                if d < lower - 1e-9 || d > 1.0 + 1e-9 {
                    return Err(format!(
                        "K={k} round {t}: deficit {d} outside [{lower:.4}, 1]"
                    ));
                }
            }
        }
    }
    Ok(format!("deficits within [{:.3}, {:.3}]", worst.0, worst.1))
}

/// `‖a‖²_{V_N^{-1}} ≤ 1/N^a` after every observation of random pull sequences.
pub fn sherman_morrison_bound() -> Check {
    let mut checked = 0usize;
    for s in 0..20u64 {
        let mut r = rng(200 + s);
        let d = 2 + (s as usize % 3);
        let k = d + 2;
        let arms: Vec<Vector> = (0..k)
            .map(|_| Vector::from_fn(d, |_, _| r.random_range(-1.0..1.0)))
            .collect();
        let mut est = EstimatorState::new(d, k);
        for (i, a) in arms.iter().enumerate() {
            est.observe(i, a, 0.0);
        }
        for _ in 0..300 {
            let i = r.random_range(0..k);
            est.observe(i, &arms[i], 0.0);
            let p = PseudoInverse::of(est.design());
            for (a, &n) in arms.iter().zip(est.counts()) {
                let lhs = p.norm_sq(a);
                if lhs > 1.0 / n as f64 * (1.0 + 1e-9) {
                    return Err(format!("‖a‖² = {lhs} > 1/{n}"));
                }
                checked += 1;
            }
        }
    }
    Ok(format!("{checked} (round, arm) pairs"))
}

/// `⟨λ, y⟩ = c` within 1e-8 whenever the projection moves the estimate.
pub fn projection_boundary() -> Check {
    let mut r = rng(300);
    let mut moved = 0;
    for _ in 0..2000 {
        let d = r.random_range(2..5);
        let k = d + r.random_range(0..3);
        let arms: Vec<Vector> = (0..k)
            .map(|_| Vector::from_fn(d, |_, _| r.random_range(-1.0..1.0)))
            .collect();
        let w = random_simplex_point(k, &mut r);
        let v = design_matrix(&arms, &w).unwrap();
        let mu = Vector::from_fn(d, |_, _| r.random_range(-2.0..2.0));
        let y = Vector::from_fn(d, |_, _| r.random_range(-1.0..1.0));
        let c = r.random_range(-0.5..0.5);
        let h = project_halfspace(&mu, &v, &y, c);
        if h.distance_sq > 0.0 && h.distance_sq.is_finite() {
            moved += 1;
            let gap = (h.lambda.dot(&y) - c).abs();
            if gap > 1e-8 * (1.0 + c.abs()) {
                return Err(format!("|⟨λ,y⟩ − c| = {gap:e}"));
            }
        }
    }
    Ok(format!("{moved} nonzero projections on the boundary"))
}

// min over the boundary line {⟨λ,y⟩ = c} of ‖μ − λ‖²_V by grid + local zoom.
fn grid_halfspace(mu: &Vector, v: &nalgebra::DMatrix<f64>, y: &Vector, c: f64) -> f64 {
    if mu.dot(y) <= c {
        return 0.0;
    }
    let base = y * (c / y.norm_squared());
    let dir = Vector::from_column_slice(&[-y[1], y[0]]) / y.norm();
    let f = |s: f64| {
        let diff = mu - (&base + &dir * s);
        (diff.transpose() * v * &diff)[0]
    };
    let (mut lo, mut hi) = (-20.0, 20.0);
    let mut best = f64::INFINITY;
    for _ in 0..6 {
        let n = 2001;
        let step = (hi - lo) / (n - 1) as f64;
        let mut arg = lo;
        for i in 0..n {
            let s = lo + i as f64 * step;
            let val = f(s);
            if val < best {
                best = val;
                arg = s;
            }
        }
        lo = arg - 2.0 * step;
        hi = arg + 2.0 * step;
    }
    best
}

/// Closed-form alternative distance vs a dense line-search oracle, 50 instances.
pub fn projection_vs_grid() -> Check {
    let mut r = rng(400);
    let mut worst = 0.0f64;
    for i in 0..50 {
        let mode = if i % 2 == 0 {
            Mode::Additive
        } else {
            Mode::Multiplicative
        };
        let inst = random_small(3 + i % 2, mode, 0.1, &mut r);
        let w = random_simplex_point(inst.n_arms(), &mut r);
        let v = design_matrix(inst.arms(), &w).unwrap();
        let theta = inst.mu().clone();
        let z = epsbai::model::greedy_answer(&inst, &theta);
        let closed = alternative_distance(&inst, &theta, &w, z)
            .unwrap()
            .distance_sq;
        let oracle = (0..inst.n_answers())
            .filter(|&x| x != z)
            .map(|x| {
                let (y, c) = inst.direction(z, x);
                grid_halfspace(&theta, v.entries(), &y, c)
            })
            .fold(f64::INFINITY, f64::min);
        let rel = (closed - oracle).abs() / oracle.max(1e-12);
        worst = worst.max(rel);
        if rel > 0.02 {
            return Err(format!("instance {i}: closed {closed} vs grid {oracle}"));
        }
    }
    Ok(format!("max relative gap {worst:.2e}"))
}

/// Realized regret ≤ the AdaHedge bound on 100 random gain sequences.
pub fn adahedge_regret() -> Check {
    let mut worst = 0.0f64;
    for s in 0..100u64 {
        let mut r = rng(500 + s);
        let k = r.random_range(2..9);
        let horizon = r.random_range(50..2000);
        let scale = r.random_range(0.1..10.0);
        let mut learner = AdaHedgeState::new(k);
        let mut cum = vec![0.0; k];
        let mut got = 0.0;
        // drifting gains with a hidden best arm
        let best = r.random_range(0..k);
        for _ in 0..horizon {
            let g: Vec<f64> = (0..k)
                .map(|a| scale * (r.random::<f64>() + if a == best { 0.1 } else { 0.0 }))
                .collect();
            let w = learner.predict();
            got += w.iter().zip(&g).map(|(a, b)| a * b).sum::<f64>();
            for (c, x) in cum.iter_mut().zip(&g) {
                *c += x;
            }
            learner.update(&g).unwrap();
        }
        let regret = cum.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - got;
        let bound = learner.regret_bound();
        worst = worst.max(regret / bound);
        if regret > bound {
            return Err(format!("sequence {s}: regret {regret} > bound {bound}"));
        }
    }
    Ok(format!("max regret/bound {worst:.3}"))
}

/// `T_ε ≤ T₀` and `T_ε ≤ T_{g,ε}` on 50 random instances, same solver and seed.
///
/// Multiplicative draws keep every answer value positive: the inclusion
/// `¬_ε z ⊆ ¬_0 z` behind `T_ε ≤ T₀` needs `max_x ⟨λ,x⟩ > 0`, and the
/// half-space form also reaches parameters where every value is negative.
pub fn chartime_orderings() -> Check {
    let solver = CharTimeSolver::Discretized {
        n_points: 2000,
        seed: 3,
    };
    let mut r = rng(600);
    let mut strict = 0;
    for i in 0..50 {
        let inst = if i % 2 == 0 {
            random_small(4, Mode::Additive, 0.1, &mut r)
        } else {
            random_small_positive(4, 0.1, &mut r)
        };
        let mode = inst.mode();
        let bai = inst.with_mode(mode, 0.0).unwrap();
        let mu = inst.mu();
        let t_eps = char_time(&inst, mu, &solver).unwrap().t_inv;
        let t0 = char_time(&bai, mu, &solver).unwrap().t_inv;
        let tg = greedy_char_time(&inst, mu, &solver).unwrap().t_inv;
        // compare inverses: T_ε ≤ T ⇔ T_ε⁻¹ ≥ T⁻¹
        if t_eps < t0 * (1.0 - 1e-12) || t_eps < tg * (1.0 - 1e-12) {
            return Err(format!(
                "instance {i} ({mode:?}): T⁻¹ = {t_eps}, T₀⁻¹ = {t0}, T_g⁻¹ = {tg}"
            ));
        }
        if t_eps > tg * (1.0 + 1e-9) {
            strict += 1;
        }
    }
    Ok(format!(
        "25 additive + 25 positive-valued multiplicative, {strict} with T_ε < T_g strictly"
    ))
}

pub const HARD_THETAS: [f64; 4] = [0.3, 0.1, 0.03, 0.01];

/// `char_time` along the hard family next to the closed-form limit.
pub fn hard_limit_sequence() -> (Vec<f64>, f64) {
    let solver = CharTimeSolver::Discretized {
        n_points: 10_000,
        seed: 0,
    };
    let ts = HARD_THETAS
        .iter()
        .map(|&th| {
            let inst = hard_bai_family(th, EPS, Mode::Additive).unwrap();
            char_time(&inst, inst.mu(), &solver)
                .unwrap()
                .t_eps
                .finite()
                .unwrap()
        })
        .collect();
    (ts, hard_bai_limit(2, EPS, Mode::Additive).unwrap().0)
}

/// Trend toward the closed-form limit, final point within 10%.
pub fn hard_limit_convergence() -> Check {
    let (ts, limit) = hard_limit_sequence();
    let gaps: Vec<f64> = ts.iter().map(|t| (t - limit).abs()).collect();
    let trend = gaps.windows(2).all(|g| g[1] <= g[0] * (1.0 + 1e-6));
    let last = ts[ts.len() - 1];
    let detail = format!(
        "T = {:?} vs limit {limit:.4}; final/limit = {:.4}",
        ts.iter()
            .map(|t| (t * 1e4).round() / 1e4)
            .collect::<Vec<_>>(),
        last / limit
    );
    if trend && (last - limit).abs() <= 0.1 * limit {
        Ok(detail)
    } else {
        Err(detail)
    }
}

/// Coupled streams: `τ(Sticky) ≤ τ(Lazy)` seed by seed.
pub fn sticky_vs_lazy() -> Check {
    let inst = hard(Mode::Multiplicative);
    let grid = Grid::Geometric { t0: 10, gamma: 0.2 };
    let lazy = RunConfig::new(SamplerConfig::lebai()).with_schedule(Schedule::Lazy(grid.clone()));
    let sticky = RunConfig::new(SamplerConfig::lebai()).with_schedule(Schedule::Sticky(grid));
    let (mut sl, mut ss) = (0u64, 0u64);
    for seed in 0..100 {
        let a = run_one(&sticky, &inst, DELTA, seed)
            .map_err(|e| e.to_string())?
            .tau;
        let b = run_one(&lazy, &inst, DELTA, seed)
            .map_err(|e| e.to_string())?
            .tau;
        if a > b {
            return Err(format!("seed {seed}: sticky {a} > lazy {b}"));
        }
        ss += a;
        sl += b;
    }
    Ok(format!(
        "mean τ sticky {:.1} ≤ lazy {:.1}",
        ss as f64 / 100.0,
        sl as f64 / 100.0
    ))
}

/// Same records with one worker and with eight.
pub fn worker_determinism() -> Check {
    let inst = hard(Mode::Multiplicative);
    let cfg = RunConfig::new(SamplerConfig::lebai());
    let one = epsbai::sim::run_batch(&cfg, &inst, DELTA, 40, 7, 1).map_err(|e| e.to_string())?;
    let eight = epsbai::sim::run_batch(&cfg, &inst, DELTA, 40, 7, 8).map_err(|e| e.to_string())?;
    if one.records == eight.records && one.summary == eight.summary {
        Ok("40 records identical".into())
    } else {
        Err("record lists differ between worker counts".into())
    }
}
