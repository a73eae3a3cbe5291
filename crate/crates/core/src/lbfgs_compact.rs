//! Limited-memory BFGS history and its compact representation
//! `B = gamma I + Psi M Psi^T`, with `Psi = [gamma S, Y]` and
//! `M^{-1} = -[[gamma S^T S, L], [L^T, -D]]` where `S^T Y = L + D + U`.

use std::collections::VecDeque;

use nalgebra::{DMatrix, DVector};

use crate::error::{check_len, Error, Result};

/// Pairs with `s^T y <= CURVATURE_EPS * ||s|| ||y||` are skipped.
pub const CURVATURE_EPS: f64 = 1e-8;
pub const GAMMA_MIN: f64 = 1e-8;
pub const GAMMA_MAX: f64 = 1e8;
pub const DEFAULT_MEMORY: usize = 5;

/// Scaling `gamma = y^T y / s^T y`, clamped to `[GAMMA_MIN, GAMMA_MAX]`.
pub fn gamma_heuristic(s: &DVector<f64>, y: &DVector<f64>) -> f64 {
    let sty = s.dot(y);
    let gamma = y.norm_squared() / sty;
    if gamma.is_nan() {
        return GAMMA_MAX;
    }
    gamma.clamp(GAMMA_MIN, GAMMA_MAX)
}

/// The `m` most recent `(s, y)` pairs, oldest first.
#[derive(Debug, Clone)]
pub struct PairBuffer {
    dim: usize,
    memory: usize,
    gamma: f64,
    s: VecDeque<DVector<f64>>,
    y: VecDeque<DVector<f64>>,
    sts: DMatrix<f64>,
    sty: DMatrix<f64>,
    /// Product form `B = gamma I + sum_i (b_i b_i^T - a_i a_i^T)`, or `None`
    /// when a partial matrix loses positive curvature numerically.
    unrolled: Option<Vec<(DVector<f64>, DVector<f64>)>>,
}

impl PairBuffer {
    /// Empty history for vectors of length `dim`, with `gamma = 1`.
    pub fn new(dim: usize, memory: usize) -> Result<Self> {
        if memory == 0 {
            return Err(Error::InvalidConfig("memory must be at least 1".into()));
        }
        Ok(Self {
            dim,
            memory,
            gamma: 1.0,
            s: VecDeque::with_capacity(memory + 1),
            y: VecDeque::with_capacity(memory + 1),
            sts: DMatrix::zeros(0, 0),
            sty: DMatrix::zeros(0, 0),
            unrolled: Some(Vec::new()),
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn memory(&self) -> usize {
        self.memory
    }

    pub fn len(&self) -> usize {
        self.s.len()
    }

    pub fn is_empty(&self) -> bool {
        self.s.is_empty()
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    /// Overrides the initial scaling `B_0 = gamma I`.
    pub fn set_gamma(&mut self, gamma: f64) -> Result<()> {
        if !(gamma > 0.0 && gamma.is_finite()) {
            return Err(Error::InvalidConfig(format!("gamma must be positive, got {gamma}")));
        }
        self.gamma = gamma;
        self.refresh_gram();
        Ok(())
    }

    pub fn s_vectors(&self) -> impl ExactSizeIterator<Item = &DVector<f64>> {
        self.s.iter()
    }

    pub fn y_vectors(&self) -> impl ExactSizeIterator<Item = &DVector<f64>> {
        self.y.iter()
    }

    /// Newest stored pair.
    pub fn newest(&self) -> Option<(&DVector<f64>, &DVector<f64>)> {
        self.s.back().zip(self.y.back())
    }

    /// Cached `S^T S`.
    pub fn sts(&self) -> &DMatrix<f64> {
        &self.sts
    }

    /// Cached `S^T Y`.
    pub fn sty(&self) -> &DMatrix<f64> {
        &self.sty
    }

    /// Offers a new pair; returns whether it passed the curvature filter.
    ///
    /// Accepted pairs evict the oldest one when the buffer is full and reset
    /// `gamma` from the new pair.
    pub fn update(&mut self, s: &DVector<f64>, y: &DVector<f64>) -> Result<bool> {
        check_len("pair s", self.dim, s.len())?;
        check_len("pair y", self.dim, y.len())?;
        let sy = s.dot(y);
        let threshold = CURVATURE_EPS * s.norm() * y.norm();
        if !(sy > threshold) || !sy.is_finite() {
            return Ok(false);
        }
        if self.s.len() == self.memory {
            self.s.pop_front();
            self.y.pop_front();
        }
        self.s.push_back(s.clone());
        self.y.push_back(y.clone());
        self.gamma = gamma_heuristic(s, y);
        self.refresh_gram();
        Ok(true)
    }

    /// Discards the oldest pair. Used when the compact factors become
    /// numerically rank deficient.
    pub fn drop_oldest(&mut self) -> bool {
        let dropped = self.s.pop_front().is_some();
        self.y.pop_front();
        if dropped {
            self.refresh_gram();
        }
        dropped
    }

    pub fn clear(&mut self) {
        self.s.clear();
        self.y.clear();
        self.refresh_gram();
    }

    fn refresh_gram(&mut self) {
        let l = self.s.len();
        self.sts = DMatrix::from_fn(l, l, |i, j| self.s[i].dot(&self.s[j]));
        self.sty = DMatrix::from_fn(l, l, |i, j| self.s[i].dot(&self.y[j]));
        self.unrolled = self.unroll();
    }

    fn unroll(&self) -> Option<Vec<(DVector<f64>, DVector<f64>)>> {
        let mut terms: Vec<(DVector<f64>, DVector<f64>)> = Vec::with_capacity(self.len());
        for (s, y) in self.s.iter().zip(&self.y) {
            let mut bs = s * self.gamma;
            for (a, b) in &terms {
                bs.axpy(b.dot(s), b, 1.0);
                bs.axpy(-a.dot(s), a, 1.0);
            }
            let sbs = s.dot(&bs);
            let sy = s.dot(y);
            if !(sbs > 0.0 && sy > 0.0) {
                return None;
            }
            terms.push((bs / sbs.sqrt(), y / sy.sqrt()));
        }
        Some(terms)
    }

    /// `Psi^T v = [gamma S^T v; Y^T v]`.
    pub fn psi_t_times(&self, v: &DVector<f64>) -> DVector<f64> {
        let l = self.len();
        let mut out = DVector::zeros(2 * l);
        for (i, (s, y)) in self.s.iter().zip(&self.y).enumerate() {
            out[i] = self.gamma * s.dot(v);
            out[l + i] = y.dot(v);
        }
        out
    }

    /// `Psi w` for a coefficient vector of length `2l`.
    pub fn psi_times(&self, w: &DVector<f64>) -> DVector<f64> {
        let l = self.len();
        let mut out = DVector::zeros(self.dim);
        for (i, (s, y)) in self.s.iter().zip(&self.y).enumerate() {
            out.axpy(self.gamma * w[i], s, 1.0);
            out.axpy(w[l + i], y, 1.0);
        }
        out
    }

    /// `Psi^T Psi`, assembled from the cached Gram blocks plus `Y^T Y`.
    pub fn psi_gram(&self) -> DMatrix<f64> {
        let l = self.len();
        let g = self.gamma;
        let mut out = DMatrix::zeros(2 * l, 2 * l);
        for i in 0..l {
            for j in 0..l {
                out[(i, j)] = g * g * self.sts[(i, j)];
                out[(i, l + j)] = g * self.sty[(i, j)];
                out[(l + j, i)] = g * self.sty[(i, j)];
                out[(l + i, l + j)] = self.y[i].dot(&self.y[j]);
            }
        }
        out
    }

    /// `M^{-1} = -[[gamma S^T S, L], [L^T, -D]]`.
    pub fn middle_inverse(&self) -> DMatrix<f64> {
        let l = self.len();
        let mut minv = DMatrix::zeros(2 * l, 2 * l);
        for i in 0..l {
            for j in 0..l {
                minv[(i, j)] = -self.gamma * self.sts[(i, j)];
            }
            for j in 0..i {
                // strictly lower part of S^T Y
                minv[(i, l + j)] = -self.sty[(i, j)];
                minv[(l + j, i)] = -self.sty[(i, j)];
            }
            minv[(l + i, l + i)] = self.sty[(i, i)];
        }
        minv
    }

    /// Explicit `Psi` and `M^{-1}`.
    pub fn materialize(&self) -> Result<CompactFactors> {
        if self.is_empty() {
            return Err(Error::EmptyBuffer);
        }
        let l = self.len();
        let mut psi = DMatrix::zeros(self.dim, 2 * l);
        for (i, (s, y)) in self.s.iter().zip(&self.y).enumerate() {
            psi.set_column(i, &(s * self.gamma));
            psi.set_column(l + i, y);
        }
        Ok(CompactFactors {
            psi,
            minv: self.middle_inverse(),
            gamma: self.gamma,
        })
    }

    /// `B v`. Uses the unrolled product form, whose terms stay of the size of
    /// `B v`; solving against `M^{-1}` loses accuracy once a stored pair has
    /// curvature far below `gamma`.
    pub fn b_times(&self, v: &DVector<f64>) -> Result<DVector<f64>> {
        check_len("b_times", self.dim, v.len())?;
        let mut out = v * self.gamma;
        if self.is_empty() {
            return Ok(out);
        }
        if let Some(terms) = &self.unrolled {
            for (a, b) in terms {
                out.axpy(b.dot(v), b, 1.0);
                out.axpy(-a.dot(v), a, 1.0);
            }
            return Ok(out);
        }
        let w = self
            .middle_inverse()
            .lu()
            .solve(&self.psi_t_times(v))
            .ok_or(Error::SingularSystem("b_times"))?;
        out += self.psi_times(&w);
        Ok(out)
    }

    /// Dense `n x n` matrix `B`. Intended for small dimensions only.
    pub fn to_dense(&self) -> Result<DMatrix<f64>> {
        let mut b = DMatrix::identity(self.dim, self.dim) * self.gamma;
        if self.is_empty() {
            return Ok(b);
        }
        let cf = self.materialize()?;
        let m = cf
            .minv
            .clone()
            .try_inverse()
            .ok_or(Error::SingularSystem("to_dense"))?;
        b += &cf.psi * m * cf.psi.transpose();
        Ok(b)
    }
}

/// Explicit compact factors of an L-BFGS matrix.
#[derive(Debug, Clone)]
pub struct CompactFactors {
    /// `[gamma S, Y]`, `n x 2l`.
    pub psi: DMatrix<f64>,
    /// `M^{-1}`, symmetric `2l x 2l`.
    pub minv: DMatrix<f64>,
    pub gamma: f64,
}

impl CompactFactors {
    pub fn b_times(&self, v: &DVector<f64>) -> Result<DVector<f64>> {
        check_len("b_times", self.psi.nrows(), v.len())?;
        let w = self
            .minv
            .clone()
            .lu()
            .solve(&self.psi.tr_mul(v))
            .ok_or(Error::SingularSystem("b_times"))?;
        Ok(v * self.gamma + &self.psi * w)
    }
}
