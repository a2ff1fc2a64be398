//! AdaHedge on the simplex, fed with gains.
//!
//! Gains are turned into losses `ℓ_a = max_b g_b − g_a ∈ [0, range]`; the
//! learning rate is `ln K / Δ` with `Δ` the cumulative mixability gap.

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LearnerError {
    #[error("expected {expected} gains, got {got}")]
    Arity { expected: usize, got: usize },
    #[error("non-finite gain at index {0}")]
    NonFinite(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdaHedgeState {
    k: usize,
    cum_loss: Vec<f64>,
    gap: f64,
    scale: f64,
    rounds: u64,
}

impl AdaHedgeState {
    pub fn new(k: usize) -> Self {
        assert!(k >= 1, "AdaHedge needs at least one arm");
        Self {
            k,
            cum_loss: vec![0.0; k],
            gap: 0.0,
            scale: 0.0,
            rounds: 0,
        }
    }

    pub fn k(&self) -> usize {
        self.k
    }

    /// Cumulative mixability gap Δ.
    pub fn mixability_gap(&self) -> f64 {
        self.gap
    }

    /// Largest per-round loss range seen so far.
    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn rounds(&self) -> u64 {
        self.rounds
    }

    fn eta(&self) -> f64 {
        if self.gap > 0.0 {
            (self.k as f64).ln() / self.gap
        } else {
            f64::INFINITY
        }
    }

    pub fn predict(&self) -> Vec<f64> {
        let lmin = self.cum_loss.iter().cloned().fold(f64::INFINITY, f64::min);
        let eta = self.eta();
        if !eta.is_finite() {
            // follow the leader: uniform over the minimizers
            let leaders = self.cum_loss.iter().filter(|&&l| l == lmin).count() as f64;
            return self
                .cum_loss
                .iter()
                .map(|&l| if l == lmin { 1.0 / leaders } else { 0.0 })
                .collect();
        }
        let w: Vec<f64> = self
            .cum_loss
            .iter()
            .map(|&l| (-eta * (l - lmin)).exp())
            .collect();
        let s: f64 = w.iter().sum();
        w.into_iter().map(|x| x / s).collect()
    }

    pub fn update(&mut self, gains: &[f64]) -> Result<(), LearnerError> {
        if gains.len() != self.k {
            return Err(LearnerError::Arity {
                expected: self.k,
                got: gains.len(),
            });
        }
        if let Some(i) = gains.iter().position(|g| !g.is_finite()) {
            return Err(LearnerError::NonFinite(i));
        }
        let gmax = gains.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let loss: Vec<f64> = gains.iter().map(|g| gmax - g).collect();
        let w = self.predict();
        let h: f64 = w.iter().zip(&loss).map(|(a, b)| a * b).sum();
        let eta = self.eta();
        let mix = if eta.is_finite() {
            let lmin = loss.iter().cloned().fold(f64::INFINITY, f64::min);
            let s: f64 = w
                .iter()
                .zip(&loss)
                .map(|(wa, la)| wa * (-eta * (la - lmin)).exp())
                .sum();
            lmin - s.ln() / eta
        } else {
            w.iter()
                .zip(&loss)
                .filter(|(wa, _)| **wa > 0.0)
                .map(|(_, l)| *l)
                .fold(f64::INFINITY, f64::min)
        };
        self.gap += (h - mix).max(0.0);
        for (c, l) in self.cum_loss.iter_mut().zip(&loss) {
            *c += l;
        }
        let range = loss.iter().cloned().fold(0.0, f64::max);
        self.scale = self.scale.max(range);
        self.rounds += 1;
        Ok(())
    }

    /// `(√(t ln K) + (4/3) ln K + 2)·σ` with σ the running loss range.
    pub fn regret_bound(&self) -> f64 {
        let lk = (self.k as f64).ln();
        ((self.rounds as f64 * lk).sqrt() + 4.0 / 3.0 * lk + 2.0) * self.scale
    }
}
