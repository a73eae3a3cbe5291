//! The l2-l1 sparse recovery problem and its softplus-transformed objective.
//!
//! The signal is split as `f = u - v` with `u, v >= 0`, and the bound
//! constraints are removed by writing `u = softplus(u~)`, `v = softplus(v~)`.
//! The resulting smooth objective over `x = [u~; v~]` is
//!
//! ```text
//! phi(x) = 1/2 ||A (softplus(u~) - softplus(v~)) - y||^2
//!        + tau * sum_j (softplus(u~_j) + softplus(v~_j))
//! ```

use nalgebra::{DMatrix, DVector};

use crate::error::{check_len, Error, Result};

/// Matrix-free access to the measurement operator `A`.
///
/// Implementations must use a fixed reduction order so that repeated calls
/// on identical inputs are bit-reproducible.
pub trait LinearOperator {
    fn nrows(&self) -> usize;
    fn ncols(&self) -> usize;
    /// `A x`
    fn apply(&self, x: &DVector<f64>) -> DVector<f64>;
    /// `A^T r`
    fn apply_transpose(&self, r: &DVector<f64>) -> DVector<f64>;
}

impl LinearOperator for DMatrix<f64> {
    fn nrows(&self) -> usize {
        self.nrows()
    }

    fn ncols(&self) -> usize {
        self.ncols()
    }

    fn apply(&self, x: &DVector<f64>) -> DVector<f64> {
        self * x
    }

    fn apply_transpose(&self, r: &DVector<f64>) -> DVector<f64> {
        self.tr_mul(r)
    }
}

impl<T: LinearOperator + ?Sized> LinearOperator for &T {
    fn nrows(&self) -> usize {
        (**self).nrows()
    }

    fn ncols(&self) -> usize {
        (**self).ncols()
    }

    fn apply(&self, x: &DVector<f64>) -> DVector<f64> {
        (**self).apply(x)
    }

    fn apply_transpose(&self, r: &DVector<f64>) -> DVector<f64> {
        (**self).apply_transpose(r)
    }
}

/// Measurement operator, observations and regularization weight.
#[derive(Debug, Clone)]
pub struct SparseProblem<Op = DMatrix<f64>> {
    a: Op,
    y: DVector<f64>,
    tau: f64,
}

impl SparseProblem<DMatrix<f64>> {
    /// Builds a dense problem, rejecting non-finite matrix entries.
    pub fn dense(a: DMatrix<f64>, y: DVector<f64>, tau: f64) -> Result<Self> {
        if a.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidProblem(
                "measurement matrix has non-finite entries".into(),
            ));
        }
        Self::new(a, y, tau)
    }
}

impl<Op: LinearOperator> SparseProblem<Op> {
    pub fn new(a: Op, y: DVector<f64>, tau: f64) -> Result<Self> {
        if !(tau > 0.0 && tau.is_finite()) {
            return Err(Error::InvalidProblem(format!(
                "tau must be positive and finite, got {tau}"
            )));
        }
        check_len("observations", a.nrows(), y.len())?;
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidProblem("observations are not finite".into()));
        }
        Ok(Self { a, y, tau })
    }

    pub fn operator(&self) -> &Op {
        &self.a
    }

    pub fn observations(&self) -> &DVector<f64> {
        &self.y
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    /// Same data, different regularization weight.
    pub fn with_tau(&self, tau: f64) -> Result<Self>
    where
        Op: Clone,
    {
        Self::new(self.a.clone(), self.y.clone(), tau)
    }

    /// Number of measurements.
    pub fn num_measurements(&self) -> usize {
        self.a.nrows()
    }

    /// Length of the physical signal `f`.
    pub fn signal_len(&self) -> usize {
        self.a.ncols()
    }

    /// Length of the transformed variable `x = [u~; v~]`.
    pub fn transformed_len(&self) -> usize {
        2 * self.a.ncols()
    }

    /// `||A^T y||_inf`, the smallest tau for which `f = 0` is optimal.
    pub fn tau_max(&self) -> f64 {
        self.a.apply_transpose(&self.y).amax()
    }

    fn check_point(&self, x: &TransformedPoint) -> Result<()> {
        check_len("transformed point", self.transformed_len(), x.len())
    }

    fn residual(&self, f: &DVector<f64>) -> DVector<f64> {
        let mut r = self.a.apply(f);
        r -= &self.y;
        r
    }

    /// Softplus-transformed objective.
    pub fn phi(&self, x: &TransformedPoint) -> Result<f64> {
        self.check_point(x)?;
        let f = to_signal(x);
        let r = self.residual(&f);
        Ok(0.5 * r.norm_squared() + self.tau * penalty_sum(x))
    }

    /// Analytic gradient of [`SparseProblem::phi`].
    pub fn grad_phi(&self, x: &TransformedPoint) -> Result<DVector<f64>> {
        self.phi_and_grad(x).map(|(_, g)| g)
    }

    /// Objective and gradient from one `A` product and one `A^T` product.
    pub fn phi_and_grad(&self, x: &TransformedPoint) -> Result<(f64, DVector<f64>)> {
        self.check_point(x)?;
        let n = self.signal_len();
        let f = to_signal(x);
        let r = self.residual(&f);
        let atr = self.a.apply_transpose(&r);
        let value = 0.5 * r.norm_squared() + self.tau * penalty_sum(x);

        let (u, v) = x.halves();
        let mut g = DVector::zeros(2 * n);
        for j in 0..n {
            g[j] = sigmoid(u[j]) * (atr[j] + self.tau);
            g[n + j] = sigmoid(v[j]) * (self.tau - atr[j]);
        }
        Ok((value, g))
    }
}

fn penalty_sum(x: &TransformedPoint) -> f64 {
    x.as_vector().iter().map(|&t| softplus(t)).sum()
}

/// A point `x = [u~; v~]` in the unconstrained transformed space.
#[derive(Debug, Clone, PartialEq)]
pub struct TransformedPoint {
    x: DVector<f64>,
}

impl TransformedPoint {
    /// The origin, which maps to `u = v = log 2` and `f = 0`.
    pub fn zeros(signal_len: usize) -> Self {
        Self {
            x: DVector::zeros(2 * signal_len),
        }
    }

    pub fn new(x: DVector<f64>) -> Result<Self> {
        if !x.len().is_multiple_of(2) {
            return Err(Error::InvalidProblem(format!(
                "transformed point must have even length, got {}",
                x.len()
            )));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidProblem("transformed point is not finite".into()));
        }
        Ok(Self { x })
    }

    pub fn from_halves(u: &[f64], v: &[f64]) -> Result<Self> {
        check_len("transformed halves", u.len(), v.len())?;
        Self::new(DVector::from_iterator(
            2 * u.len(),
            u.iter().chain(v.iter()).copied(),
        ))
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn signal_len(&self) -> usize {
        self.x.len() / 2
    }

    pub fn as_vector(&self) -> &DVector<f64> {
        &self.x
    }

    pub fn into_vector(self) -> DVector<f64> {
        self.x
    }

    /// `(u~, v~)` as slices.
    pub fn halves(&self) -> (&[f64], &[f64]) {
        self.x.as_slice().split_at(self.signal_len())
    }

    /// Exchanges the `u~` and `v~` blocks.
    pub fn swapped(&self) -> Self {
        let (u, v) = self.halves();
        Self {
            x: DVector::from_iterator(self.len(), v.iter().chain(u.iter()).copied()),
        }
    }

    pub(crate) fn add_step(&self, p: &DVector<f64>) -> Self {
        Self { x: &self.x + p }
    }
}

/// `log(1 + e^t)` without overflow for any finite `t`.
pub fn softplus(t: f64) -> f64 {
    t.max(0.0) + (-t.abs()).exp().ln_1p()
}

/// Logistic function `1 / (1 + e^-t)`, the derivative of [`softplus`].
pub fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// Physical signal `f_j = softplus(u~_j) - softplus(v~_j)`.
pub fn to_signal(x: &TransformedPoint) -> DVector<f64> {
    let (u, v) = x.halves();
    DVector::from_iterator(
        u.len(),
        u.iter().zip(v).map(|(&a, &b)| softplus(a) - softplus(b)),
    )
}
