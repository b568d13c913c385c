//! Seeded random number helpers.
//!
//! Every stochastic choice in the crate flows through a ChaCha8 stream keyed
//! by `(seed, stream)`, so identical seeds reproduce bit-identical matrices
//! across runs. Distinct subsystems draw from distinct stream ids to keep
//! their randomness independent of call order.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::matrix::Matrix;

/// Stream ids, one per independent consumer of randomness.
pub mod streams {
    pub const CALIBRATION: u64 = 1;
    pub const VANILLA_INIT: u64 = 2;
    pub const ORACLE_CANDIDATES: u64 = 3;
    pub const TASK_GENERATOR: u64 = 4;
    pub const MODEL_INIT: u64 = 5;
    pub const TEST: u64 = 99;
}

/// Deterministic generator for a `(seed, stream)` pair.
pub fn rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}

/// Matrix of i.i.d. standard normal entries.
pub fn gaussian_matrix(r: &mut ChaCha8Rng, rows: usize, cols: usize, std: f64) -> Matrix {
    let data: Vec<f64> = (0..rows * cols)
        .map(|_| {
            let z: f64 = r.sample(StandardNormal);
            z * std
        })
        .collect();
    Matrix::new(rows, cols, data).expect("gaussian entries are finite")
}

/// Standard normal vector.
pub fn gaussian_vec(r: &mut ChaCha8Rng, len: usize) -> Vec<f64> {
    (0..len).map(|_| r.sample(StandardNormal)).collect()
}

/// Matrix with orthonormal columns: Gram-Schmidt applied to a seeded
/// Gaussian draw. Requires `cols <= rows`.
pub fn random_orthonormal(r: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix {
    assert!(cols <= rows, "cannot fit {cols} orthonormal columns in R^{rows}");
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(cols);
    while basis.len() < cols {
        let mut v = gaussian_vec(r, rows);
        for _ in 0..2 {
            for b in &basis {
                let dot: f64 = v.iter().zip(b).map(|(a, c)| a * c).sum();
                for (x, c) in v.iter_mut().zip(b) {
                    *x -= dot * c;
                }
            }
        }
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n < 1e-8 {
            continue; // vanishingly unlikely; redraw
        }
        for x in v.iter_mut() {
            *x /= n;
        }
        basis.push(v);
    }
    let mut m = Matrix::zeros(rows, cols);
    for (j, col) in basis.iter().enumerate() {
        for (i, &v) in col.iter().enumerate() {
            m.set(i, j, v);
        }
    }
    m
}
