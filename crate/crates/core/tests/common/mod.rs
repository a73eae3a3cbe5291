#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use trustspa::PairBuffer;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian_vec<R: Rng>(n: usize, rng: &mut R) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.sample(StandardNormal))
}

pub fn gaussian_mat<R: Rng>(r: usize, c: usize, rng: &mut R) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| rng.sample(StandardNormal))
}

/// Random SPD matrix with eigenvalues spread over `[0.1, 10]`.
pub fn spd<R: Rng>(n: usize, rng: &mut R) -> DMatrix<f64> {
    let q = gaussian_mat(n, n, rng).qr().q();
    let d = DVector::from_fn(n, |_, _| 10f64.powf(rng.random_range(-1.0..1.0)));
    &q * DMatrix::from_diagonal(&d) * q.transpose()
}

/// Pairs `(s, H s)` for a random SPD `H`, so every pair has positive
/// curvature. Returns the pairs in insertion order.
pub fn secant_pairs<R: Rng>(n: usize, count: usize, rng: &mut R) -> Vec<(DVector<f64>, DVector<f64>)> {
    let h = spd(n, rng);
    (0..count)
        .map(|_| {
            let s = gaussian_vec(n, rng);
            let y = &h * &s;
            (s, y)
        })
        .collect()
}

/// Buffer filled with `l` secant pairs, then `gamma` forced.
pub fn filled_buffer<R: Rng>(n: usize, memory: usize, l: usize, gamma: f64, rng: &mut R) -> PairBuffer {
    let mut buf = PairBuffer::new(n, memory).unwrap();
    for (s, y) in secant_pairs(n, l, rng) {
        assert!(buf.update(&s, &y).unwrap());
    }
    buf.set_gamma(gamma).unwrap();
    buf
}

/// One dense BFGS step `B - B s s^T B / s^T B s + y y^T / y^T s`.
pub fn bfgs_step(b: &DMatrix<f64>, s: &DVector<f64>, y: &DVector<f64>) -> DMatrix<f64> {
    let bs = b * s;
    b - &bs * bs.transpose() / s.dot(&bs) + y * y.transpose() / y.dot(s)
}

/// Dense recursion from `gamma I` over the given pairs.
pub fn dense_bfgs(n: usize, gamma: f64, pairs: &[(DVector<f64>, DVector<f64>)]) -> DMatrix<f64> {
    pairs
        .iter()
        .fold(DMatrix::identity(n, n) * gamma, |b, (s, y)| bfgs_step(&b, s, y))
}

pub fn sorted_eigenvalues(b: &DMatrix<f64>) -> Vec<f64> {
    let mut ev: Vec<f64> = b.clone().symmetric_eigen().eigenvalues.iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    ev
}

pub fn model(g: &DVector<f64>, b: &DMatrix<f64>, p: &DVector<f64>) -> f64 {
    g.dot(p) + 0.5 * p.dot(&(b * p))
}

/// Global minimizer of `g^T p + 1/2 p^T B p` over `||p|| <= delta` for a
/// dense symmetric `B`, from its full eigendecomposition and a bisection on
/// the multiplier. The hard case is not handled (callers use positive
/// definite `B` and generic `g`).
pub struct DenseTrs {
    pub p: DVector<f64>,
    pub sigma: f64,
}

pub fn dense_trs(b: &DMatrix<f64>, g: &DVector<f64>, delta: f64) -> DenseTrs {
    let eig = b.clone().symmetric_eigen();
    let lam = &eig.eigenvalues;
    let q = &eig.eigenvectors;
    let gt = q.tr_mul(g);
    let lmin = lam.min();
    let norm_at = |sigma: f64| -> f64 {
        gt.iter()
            .zip(lam.iter())
            .map(|(gi, li)| (gi / (li + sigma)).powi(2))
            .sum::<f64>()
            .sqrt()
    };
    let step = |sigma: f64| -> DVector<f64> {
        let w = DVector::from_fn(gt.len(), |i, _| -gt[i] / (lam[i] + sigma));
        q * w
    };
    if lmin > 0.0 && norm_at(0.0) <= delta {
        return DenseTrs { p: step(0.0), sigma: 0.0 };
    }
    let mut lo = (-lmin).max(0.0);
    let mut hi = lo + g.norm() / delta + 1.0;
    while norm_at(hi) > delta {
        hi *= 2.0;
    }
    for _ in 0..400 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if norm_at(mid) > delta {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let sigma = 0.5 * (lo + hi);
    DenseTrs { p: step(sigma), sigma }
}

/// Minimizer of the model along `-g` inside the ball.
pub fn cauchy_point(b: &DMatrix<f64>, g: &DVector<f64>, delta: f64) -> DVector<f64> {
    let gn = g.norm();
    let curv = g.dot(&(b * g));
    let t_max = delta / gn;
    let t = if curv > 0.0 { (gn * gn / curv).min(t_max) } else { t_max };
    g * (-t)
}
