//! Small dense linear algebra: design matrices, pseudo-inverses, weighted
//! norms and the least-squares estimator.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use thiserror::Error;

pub type Vector = DVector<f64>;

/// Relative eigenvalue cutoff used to decide the numerical rank.
pub const RANK_CUTOFF: f64 = 1e-10;
/// Relative residual above which a direction is considered outside the image.
pub const IMAGE_TOL: f64 = 1e-8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinalgError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("negative or non-finite weight {value} at index {index}")]
    InvalidWeight { index: usize, value: f64 },
    #[error("design matrix is singular (arms pulled so far do not span the space)")]
    Singular,
}

/// Symmetric PSD matrix `Σ_a w_a a aᵀ`.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    entries: DMatrix<f64>,
}

impl DesignMatrix {
    pub fn zeros(d: usize) -> Self {
        Self {
            entries: DMatrix::zeros(d, d),
        }
    }

    /// Wraps a matrix, symmetrizing away rounding noise.
    pub fn from_matrix(m: DMatrix<f64>) -> Result<Self, LinalgError> {
        if m.nrows() != m.ncols() {
            return Err(LinalgError::DimensionMismatch {
                expected: m.nrows(),
                got: m.ncols(),
            });
        }
        let sym = (&m + m.transpose()) * 0.5;
        Ok(Self { entries: sym })
    }

    pub fn d(&self) -> usize {
        self.entries.nrows()
    }

    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }

    /// Adds `weight · a aᵀ` in place.
    pub fn add_rank_one(&mut self, a: &Vector, weight: f64) {
        let d = self.d();
        for i in 0..d {
            let wi = weight * a[i];
            for j in 0..d {
                self.entries[(i, j)] += wi * a[j];
            }
        }
    }
}

pub fn design_matrix(arms: &[Vector], w: &[f64]) -> Result<DesignMatrix, LinalgError> {
    if arms.len() != w.len() {
        return Err(LinalgError::DimensionMismatch {
            expected: arms.len(),
            got: w.len(),
        });
    }
    let d = arms.first().map_or(0, |a| a.len());
    let mut v = DesignMatrix::zeros(d);
    for (index, (a, &wa)) in arms.iter().zip(w).enumerate() {
        if !(wa >= 0.0) || !wa.is_finite() {
            return Err(LinalgError::InvalidWeight { index, value: wa });
        }
        if a.len() != d {
            return Err(LinalgError::DimensionMismatch {
                expected: d,
                got: a.len(),
            });
        }
        if wa > 0.0 {
            v.add_rank_one(a, wa);
        }
    }
    Ok(v)
}

/// Moore–Penrose pseudo-inverse together with the orthogonal projector onto
/// the image, so callers can test `y ∈ Im(V)` without refactorizing.
#[derive(Debug, Clone)]
pub struct PseudoInverse {
    pub pinv: DMatrix<f64>,
    pub projector: DMatrix<f64>,
    pub rank: usize,
}

impl PseudoInverse {
    pub fn of(v: &DesignMatrix) -> Self {
        let m = v.entries();
        if m.nrows() == 2 {
            return Self::closed_form_2x2(m[(0, 0)], m[(0, 1)], m[(1, 1)]);
        }
        let d = m.nrows();
        let eig = SymmetricEigen::new(m.clone());
        let lmax = eig.eigenvalues.iter().cloned().fold(0.0_f64, f64::max);
        let cut = RANK_CUTOFF * lmax;
        let mut pinv = DMatrix::zeros(d, d);
        let mut projector = DMatrix::zeros(d, d);
        let mut rank = 0;
        for (k, &lam) in eig.eigenvalues.iter().enumerate() {
            if lam > cut && lam > 0.0 {
                rank += 1;
                let u = eig.eigenvectors.column(k);
                let uut = u * u.transpose();
                pinv += &uut / lam;
                projector += uut;
            }
        }
        Self {
            pinv,
            projector,
            rank,
        }
    }

    // Symmetric 2x2 [[a,b],[b,c]]; the hot path of every d=2 experiment.
    fn closed_form_2x2(a: f64, b: f64, c: f64) -> Self {
        let half_tr = 0.5 * (a + c);
        let rad = (0.25 * (a - c) * (a - c) + b * b).sqrt();
        let l1 = half_tr + rad;
        let l2 = half_tr - rad;
        if l1 <= 0.0 {
            return Self {
                pinv: DMatrix::zeros(2, 2),
                projector: DMatrix::zeros(2, 2),
                rank: 0,
            };
        }
        if l2 > RANK_CUTOFF * l1 {
            let det = a * c - b * b;
            let pinv = DMatrix::from_row_slice(2, 2, &[c / det, -b / det, -b / det, a / det]);
            return Self {
                pinv,
                projector: DMatrix::identity(2, 2),
                rank: 2,
            };
        }
        // rank one: leading eigenvector of the matrix
        let (ux, uy) = if b.abs() > 1e-300 {
            (l1 - c, b)
        } else if a >= c {
            (1.0, 0.0)
        } else {
            (0.0, 1.0)
        };
        let n = (ux * ux + uy * uy).sqrt();
        let (ux, uy) = (ux / n, uy / n);
        let projector = DMatrix::from_row_slice(2, 2, &[ux * ux, ux * uy, ux * uy, uy * uy]);
        let pinv = &projector / l1;
        Self {
            pinv,
            projector,
            rank: 1,
        }
    }

    /// `yᵀ V† y`.
    pub fn norm_sq(&self, y: &Vector) -> f64 {
        quad_form(&self.pinv, y)
    }

    /// True when `‖V V† y − y‖ ≤ tol·‖y‖`.
    pub fn in_image(&self, y: &Vector) -> bool {
        let ny = y.norm();
        if ny == 0.0 {
            return true;
        }
        (&self.projector * y - y).norm() <= IMAGE_TOL * ny
    }
}

pub fn pseudo_inverse(v: &DesignMatrix) -> DesignMatrix {
    DesignMatrix {
        entries: PseudoInverse::of(v).pinv,
    }
}

/// `xᵀ M x` without allocating.
pub fn quad_form(m: &DMatrix<f64>, x: &Vector) -> f64 {
    let d = x.len();
    let mut acc = 0.0;
    for i in 0..d {
        let mut row = 0.0;
        for j in 0..d {
            row += m[(i, j)] * x[j];
        }
        acc += x[i] * row;
    }
    acc
}

pub fn weighted_norm_sq(v: &DesignMatrix, x: &Vector) -> Result<f64, LinalgError> {
    if v.d() != x.len() {
        return Err(LinalgError::DimensionMismatch {
            expected: v.d(),
            got: x.len(),
        });
    }
    Ok(quad_form(v.entries(), x).max(0.0))
}

/// Running sufficient statistics of one bandit run.
#[derive(Debug, Clone)]
pub struct EstimatorState {
    cumulant: Vector,
    counts: Vec<u64>,
    design: DesignMatrix,
}

impl EstimatorState {
    pub fn new(d: usize, n_arms: usize) -> Self {
        Self {
            cumulant: Vector::zeros(d),
            counts: vec![0; n_arms],
            design: DesignMatrix::zeros(d),
        }
    }

    pub fn observe(&mut self, arm_index: usize, arm: &Vector, reward: f64) {
        self.counts[arm_index] += 1;
        self.cumulant.axpy(reward, arm, 1.0);
        self.design.add_rank_one(arm, 1.0);
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn counts_f64(&self) -> Vec<f64> {
        self.counts.iter().map(|&n| n as f64).collect()
    }

    /// Number of observations so far.
    pub fn t(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn design(&self) -> &DesignMatrix {
        &self.design
    }

    pub fn cumulant(&self) -> &Vector {
        &self.cumulant
    }

    /// Rebuilds the design from counts; the incremental copy drifts only by rounding.
    pub fn recomputed_design(&self, arms: &[Vector]) -> Result<DesignMatrix, LinalgError> {
        design_matrix(arms, &self.counts_f64())
    }
}

pub fn ols_estimate(state: &EstimatorState) -> Result<Vector, LinalgError> {
    let v = state.design.entries();
    let chol = v.clone().cholesky().ok_or(LinalgError::Singular)?;
    let mut x = chol.solve(&state.cumulant);
    // one refinement step keeps the residual at rounding level
    let r = &state.cumulant - v * &x;
    x += chol.solve(&r);
    let scale = v.norm().max(1.0);
    let lmin_proxy = 1.0 / chol.inverse().norm();
    if !(lmin_proxy > RANK_CUTOFF * scale) {
        return Err(LinalgError::Singular);
    }
    Ok(x)
}

/// Inverse of an invertible design, computed by Cholesky.
pub fn inverse(v: &DesignMatrix) -> Result<DMatrix<f64>, LinalgError> {
    let chol = v
        .entries()
        .clone()
        .cholesky()
        .ok_or(LinalgError::Singular)?;
    Ok(chol.inverse())
}
