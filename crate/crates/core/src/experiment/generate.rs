//! Seeded generation of spike signals, orthonormal-row Gaussian matrices and
//! noisy measurements.
//!
//! All randomness comes from ChaCha20 streams seeded through [`subseed`], so a
//! fixed master seed reproduces every artifact bit for bit.

use nalgebra::{DMatrix, DVector};
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// The generator used for every random draw in the harness.
pub type ExperimentRng = ChaCha20Rng;

const MAX_REDRAWS: usize = 8;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325, |h, &b| {
        (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01B3)
    })
}

/// Derives the stream seed for `(trial, purpose)`: `seed ^ hash(trial, tag)`.
pub fn subseed(seed: u64, trial: u64, tag: &str) -> u64 {
    seed ^ splitmix64(fnv1a(tag.as_bytes()) ^ splitmix64(trial))
}

pub fn rng_for(seed: u64, trial: u64, tag: &str) -> ExperimentRng {
    ExperimentRng::seed_from_u64(subseed(seed, trial, tag))
}

/// `k` distinct uniformly chosen positions set to `+1` or `-1`.
pub fn gen_signal<R: Rng + ?Sized>(n: usize, k: usize, rng: &mut R) -> Result<DVector<f64>> {
    if k > n {
        return Err(Error::InvalidSpec(format!("spike count {k} exceeds signal length {n}")));
    }
    let mut f = DVector::zeros(n);
    let mut positions = index::sample(rng, n, k).into_vec();
    positions.sort_unstable();
    for j in positions {
        f[j] = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
    }
    Ok(f)
}

/// Standard normal `m x n` matrix with orthonormalized rows (`A A^T = I`).
pub fn gen_matrix<R: Rng + ?Sized>(m: usize, n: usize, rng: &mut R) -> Result<DMatrix<f64>> {
    if m > n {
        return Err(Error::InvalidSpec(format!("{m} measurements exceed signal length {n}")));
    }
    for _ in 0..MAX_REDRAWS {
        let mut rows: Vec<f64> = (0..m * n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        if orthonormalize_rows(&mut rows, m, n) {
            return Ok(DMatrix::from_row_slice(m, n, &rows));
        }
    }
    Err(Error::Numerical("could not draw a full-rank measurement matrix".into()))
}

/// Dot product with a fixed eight-way split, so results do not depend on
/// compiler vectorization choices.
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0f64; 8];
    let chunks = a.len() / 8;
    for c in 0..chunks {
        let (x, y) = (&a[8 * c..8 * c + 8], &b[8 * c..8 * c + 8]);
        for i in 0..8 {
            acc[i] += x[i] * y[i];
        }
    }
    let mut tail = 0.0;
    for i in 8 * chunks..a.len() {
        tail += a[i] * b[i];
    }
    ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7])) + tail
}

/// Classical Gram-Schmidt with one reorthogonalization pass on the rows of a
/// row-major `m x n` buffer. Returns `false` on numerical rank deficiency.
fn orthonormalize_rows(a: &mut [f64], m: usize, n: usize) -> bool {
    let mut coeffs = vec![0.0; m];
    for i in 0..m {
        let (done, rest) = a.split_at_mut(i * n);
        let row = &mut rest[..n];
        let original = dot(row, row).sqrt();
        for _ in 0..2 {
            for (k, c) in coeffs[..i].iter_mut().enumerate() {
                *c = dot(&done[k * n..(k + 1) * n], row);
            }
            for (k, &c) in coeffs[..i].iter().enumerate() {
                let q = &done[k * n..(k + 1) * n];
                for (r, &qv) in row.iter_mut().zip(q) {
                    *r -= c * qv;
                }
            }
        }
        let norm = dot(row, row).sqrt();
        if !(norm > 1e-8 * original) {
            return false;
        }
        row.iter_mut().for_each(|r| *r /= norm);
    }
    true
}

/// Adds iid `N(0, s^2)` noise with `s = level ||clean|| / sqrt(len)`, so the
/// expected noise energy is `level^2 ||clean||^2`.
pub fn add_noise<R: Rng + ?Sized>(clean: &DVector<f64>, level: f64, rng: &mut R) -> Result<DVector<f64>> {
    if !(level >= 0.0 && level.is_finite()) {
        return Err(Error::InvalidSpec(format!("noise level must be nonnegative, got {level}")));
    }
    if level == 0.0 || clean.is_empty() {
        return Ok(clean.clone());
    }
    let sd = level * clean.norm() / (clean.len() as f64).sqrt();
    Ok(clean.map(|c| c + sd * rng.sample::<f64, _>(StandardNormal)))
}
