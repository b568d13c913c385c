//! Singular value decomposition and symmetric eigendecomposition.
//!
//! Both solvers are Jacobi rotations on `f64`: one-sided (Hestenes) for the
//! SVD, cyclic two-sided for symmetric eigenproblems. Jacobi keeps high
//! relative accuracy on small singular values, which the trailing-subspace
//! extraction downstream depends on. Results are deterministic: singular
//! values are sorted descending and every singular-vector sign is
//! canonicalized (largest-magnitude entry of the `u` column made positive,
//! ties broken by lowest row index).

use crate::error::{Error, Result};
use crate::matrix::{outer, Matrix};

/// Relative threshold below which a singular value counts as zero when
/// estimating numerical rank: `sigma_i > RANK_CUTOFF * sigma_1`.
pub const RANK_CUTOFF: f64 = 1e-10;

/// Relative eigenvalue cutoff for the Moore-Penrose pseudo-inverse.
pub const PINV_CUTOFF: f64 = 1e-12;

/// Sweep cap multiplier: a solve fails after `SWEEP_CAP_FACTOR * min(m, n)`
/// sweeps instead of returning a silent partial result.
const SWEEP_CAP_FACTOR: usize = 100;

/// Pairwise convergence threshold for Jacobi rotations.
const JACOBI_EPS: f64 = 1e-15;

/// Result of [`svd`].
///
/// Thin form: `u` is m x k, `v` is n x k and `sigma` has k = min(m, n)
/// entries. Full form (`full = true`): `u` is a complete m x m orthonormal
/// basis, `sigma` is zero-padded to length m, and `v` stays n x min(m, n).
/// The reconstruction `sum_i sigma[i] * u_i * v_i^T` runs over the first
/// min(m, n) triples in either form.
#[derive(Debug, Clone)]
pub struct SvdResult {
    pub u: Matrix,
    pub sigma: Vec<f64>,
    pub v: Matrix,
    pub full: bool,
}

impl SvdResult {
    /// Rebuilds the decomposed matrix from all singular triples.
    pub fn reconstruct(&self) -> Matrix {
        truncate_rank(self, self.v.cols()).expect("full reconstruction is always in range")
    }

    /// Numerical rank: singular values above `RANK_CUTOFF * sigma_1`.
    pub fn rank(&self) -> usize {
        numerical_rank(&self.sigma)
    }
}

/// Count of entries above the relative rank cutoff.
pub fn numerical_rank(sigma: &[f64]) -> usize {
    let top = sigma.first().copied().unwrap_or(0.0);
    if top <= 0.0 {
        return 0;
    }
    sigma.iter().filter(|&&s| s > RANK_CUTOFF * top).count()
}

/// Singular value decomposition by one-sided Jacobi.
///
/// With `want_full_u` the left basis is completed to all of R^m so the
/// trailing columns (paired with zero singular values) are available even
/// when the matrix has fewer columns than rows.
pub fn svd(m: &Matrix, want_full_u: bool) -> Result<SvdResult> {
    let transposed = m.rows() < m.cols();
    let b = if transposed { m.transpose() } else { m.clone() };
    let q = b.cols();
    let cap = SWEEP_CAP_FACTOR * q.min(b.rows());

    let (mut bcols, mut vb) = hestenes_sweeps(&b, cap, m.rows(), m.cols())?;

    // Sort triples by descending column norm; stable so degenerate blocks
    // keep a reproducible order.
    let mut sigma: Vec<f64> = bcols.iter().map(|c| norm(c)).collect();
    let mut order: Vec<usize> = (0..q).collect();
    order.sort_by(|&a, &b| sigma[b].partial_cmp(&sigma[a]).unwrap().then(a.cmp(&b)));
    bcols = order.iter().map(|&i| bcols[i].clone()).collect();
    sigma = order.iter().map(|&i| sigma[i]).collect();
    vb = permute_columns(&vb, &order);

    // Normalize into left singular vectors; zero columns get completed below.
    let mut ucols: Vec<Vec<f64>> = Vec::with_capacity(q);
    for (j, col) in bcols.iter().enumerate() {
        if sigma[j] > 0.0 {
            ucols.push(col.iter().map(|x| x / sigma[j]).collect());
        } else {
            ucols.push(Vec::new()); // placeholder, filled by completion
        }
    }
    complete_empty_columns(&mut ucols, b.rows());

    if !transposed && want_full_u {
        while ucols.len() < b.rows() {
            ucols.push(Vec::new());
        }
        complete_empty_columns(&mut ucols, b.rows());
        sigma.resize(b.rows(), 0.0);
    }

    let bu = columns_to_matrix(&ucols, b.rows());
    let (mut u, mut v) = if transposed {
        (vb, bu) // A = V_B * Sigma * U_B^T
    } else {
        (bu, vb)
    };

    canonicalize_signs(&mut u, &mut v);
    Ok(SvdResult {
        u,
        sigma,
        v,
        full: want_full_u,
    })
}

/// Hestenes one-sided Jacobi: orthogonalize the columns of `b`, accumulating
/// the right rotations. Returns the rotated columns and the q x q rotation
/// product.
fn hestenes_sweeps(
    b: &Matrix,
    cap: usize,
    orig_rows: usize,
    orig_cols: usize,
) -> Result<(Vec<Vec<f64>>, Matrix)> {
    let p = b.rows();
    let q = b.cols();
    let mut cols: Vec<Vec<f64>> = (0..q).map(|j| b.col(j)).collect();
    let mut vcols: Vec<Vec<f64>> = (0..q)
        .map(|j| (0..q).map(|i| if i == j { 1.0 } else { 0.0 }).collect())
        .collect();

    let mut sweeps = 0;
    loop {
        let mut rotated = false;
        for j in 0..q {
            for k in (j + 1)..q {
                let (alpha, beta, gamma) = {
                    let (cj, ck) = (&cols[j], &cols[k]);
                    let mut a = 0.0;
                    let mut bb = 0.0;
                    let mut g = 0.0;
                    for i in 0..p {
                        a += cj[i] * cj[i];
                        bb += ck[i] * ck[i];
                        g += cj[i] * ck[i];
                    }
                    (a, bb, g)
                };
                if alpha == 0.0 || beta == 0.0 {
                    continue;
                }
                if gamma.abs() <= JACOBI_EPS * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate_pair(&mut cols, j, k, c, s);
                rotate_pair(&mut vcols, j, k, c, s);
            }
        }
        if !rotated {
            break;
        }
        sweeps += 1;
        if sweeps >= cap {
            return Err(Error::NonConvergence {
                algorithm: "one-sided Jacobi SVD",
                rows: orig_rows,
                cols: orig_cols,
                sweeps,
            });
        }
    }

    Ok((cols, columns_to_matrix(&vcols, q)))
}

fn rotate_pair(cols: &mut [Vec<f64>], j: usize, k: usize, c: f64, s: f64) {
    let (lo, hi) = if j < k { (j, k) } else { (k, j) };
    let (head, tail) = cols.split_at_mut(hi);
    let (cj, ck) = if j < k {
        (&mut head[lo], &mut tail[0])
    } else {
        (&mut tail[0], &mut head[lo])
    };
    for i in 0..cj.len() {
        let a = cj[i];
        let b = ck[i];
        cj[i] = c * a - s * b;
        ck[i] = s * a + c * b;
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn columns_to_matrix(cols: &[Vec<f64>], rows: usize) -> Matrix {
    let mut m = Matrix::zeros(rows, cols.len());
    for (j, col) in cols.iter().enumerate() {
        for (i, &v) in col.iter().enumerate() {
            m.set(i, j, v);
        }
    }
    m
}

fn permute_columns(m: &Matrix, order: &[usize]) -> Matrix {
    let mut out = Matrix::zeros(m.rows(), order.len());
    for (dst, &src) in order.iter().enumerate() {
        for i in 0..m.rows() {
            out.set(i, dst, m.get(i, src));
        }
    }
    out
}

/// Fills each empty slot with the canonical-basis vector whose residual
/// against the present columns is largest, Gram-Schmidt twice for stability.
/// Deterministic: ties resolve to the lowest basis index.
fn complete_empty_columns(cols: &mut [Vec<f64>], dim: usize) {
    let mut present: Vec<Vec<f64>> = cols.iter().filter(|c| !c.is_empty()).cloned().collect();
    for slot in 0..cols.len() {
        if !cols[slot].is_empty() {
            continue;
        }
        let mut best: Option<(f64, Vec<f64>)> = None;
        for cand in 0..dim {
            let mut e = vec![0.0; dim];
            e[cand] = 1.0;
            project_out(&mut e, &present);
            let n = norm(&e);
            if best.as_ref().map_or(true, |(bn, _)| n > *bn) {
                best = Some((n, e));
            }
        }
        let (_, mut picked) = best.expect("dim > 0");
        project_out(&mut picked, &present); // second pass
        let n = norm(&picked);
        debug_assert!(n > 0.0, "basis completion ran out of directions");
        for x in picked.iter_mut() {
            *x /= n;
        }
        cols[slot] = picked.clone();
        present.push(picked);
    }
}

fn project_out(v: &mut [f64], basis: &[Vec<f64>]) {
    for b in basis {
        let dot: f64 = v.iter().zip(b).map(|(a, c)| a * c).sum();
        for (x, c) in v.iter_mut().zip(b) {
            *x -= dot * c;
        }
    }
}

/// Flips each (u column, v column) pair so the largest-magnitude entry of the
/// u column is positive; ties break at the lowest row index. Trailing u
/// columns without a v partner (full-basis mode) flip alone — they carry
/// zero singular values, so the reconstruction is unaffected.
fn canonicalize_signs(u: &mut Matrix, v: &mut Matrix) {
    for j in 0..u.cols() {
        let mut pivot = 0;
        let mut best = -1.0;
        for i in 0..u.rows() {
            let a = u.get(i, j).abs();
            if a > best {
                best = a;
                pivot = i;
            }
        }
        if u.get(pivot, j) < 0.0 {
            for i in 0..u.rows() {
                u.set(i, j, -u.get(i, j));
            }
            if j < v.cols() {
                for i in 0..v.rows() {
                    v.set(i, j, -v.get(i, j));
                }
            }
        }
    }
}

/// Best rank-`k` approximation from a decomposition (the Eckart-Young
/// truncation): `sum_{i<k} sigma[i] * u_i * v_i^T`. `k = 0` is the zero
/// matrix.
pub fn truncate_rank(s: &SvdResult, k: usize) -> Result<Matrix> {
    if k > s.sigma.len() {
        return Err(Error::Param(format!(
            "truncation rank {k} exceeds {} singular values",
            s.sigma.len()
        )));
    }
    let mut out = Matrix::zeros(s.u.rows(), s.v.rows());
    // In full mode sigma is zero-padded past v's columns, so capping the loop
    // drops only exactly-zero terms.
    for i in 0..k.min(s.v.cols()) {
        if s.sigma[i] == 0.0 {
            continue;
        }
        let term = outer(&s.u.col(i), &s.v.col(i)).scale(s.sigma[i]);
        out = out.add(&term)?;
    }
    Ok(out)
}

/// Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.
///
/// Returns `(eigenvalues, eigenvectors)` with eigenvalues in descending
/// order and eigenvectors as the columns of an orthonormal matrix, signs
/// canonicalized like SVD columns. The input is symmetrized internally;
/// callers that need a symmetry guarantee must validate beforehand.
pub fn sym_eigen(c: &Matrix) -> Result<(Vec<f64>, Matrix)> {
    if c.rows() != c.cols() {
        return Err(Error::Validation(format!(
            "eigendecomposition requires a square matrix, got {}x{}",
            c.rows(),
            c.cols()
        )));
    }
    let n = c.rows();
    let mut a: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| 0.5 * (c.get(i, j) + c.get(j, i)))
                .collect()
        })
        .collect();
    let mut vcols: Vec<Vec<f64>> = (0..n)
        .map(|j| (0..n).map(|i| if i == j { 1.0 } else { 0.0 }).collect())
        .collect();
    let scale = c.max_abs().max(f64::MIN_POSITIVE);
    let cap = SWEEP_CAP_FACTOR * n;

    let mut sweeps = 0;
    loop {
        let mut rotated = false;
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[p][q];
                let thresh = JACOBI_EPS * (a[p][p].abs() * a[q][q].abs()).sqrt();
                if apq.abs() <= thresh || apq.abs() <= 1e-300 * scale {
                    continue;
                }
                rotated = true;
                let tau = (a[q][q] - a[p][p]) / (2.0 * apq);
                let t = tau.signum() / (tau.abs() + (1.0 + tau * tau).sqrt());
                let cs = 1.0 / (1.0 + t * t).sqrt();
                let sn = cs * t;

                let app = a[p][p];
                let aqq = a[q][q];
                a[p][p] = app - t * apq;
                a[q][q] = aqq + t * apq;
                a[p][q] = 0.0;
                a[q][p] = 0.0;
                for i in 0..n {
                    if i == p || i == q {
                        continue;
                    }
                    let aip = a[i][p];
                    let aiq = a[i][q];
                    a[i][p] = cs * aip - sn * aiq;
                    a[p][i] = a[i][p];
                    a[i][q] = sn * aip + cs * aiq;
                    a[q][i] = a[i][q];
                }
                rotate_pair(&mut vcols, p, q, cs, sn);
            }
        }
        if !rotated {
            break;
        }
        sweeps += 1;
        if sweeps >= cap {
            return Err(Error::NonConvergence {
                algorithm: "cyclic Jacobi eigensolver",
                rows: n,
                cols: n,
                sweeps,
            });
        }
    }

    let mut eigs: Vec<f64> = (0..n).map(|i| a[i][i]).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| eigs[y].partial_cmp(&eigs[x]).unwrap().then(x.cmp(&y)));
    eigs = order.iter().map(|&i| eigs[i]).collect();
    let mut vecs = permute_columns(&columns_to_matrix(&vcols, n), &order);

    let mut dummy = Matrix::zeros(1, 1); // no paired right vectors here
    canonicalize_signs(&mut vecs, &mut dummy);
    Ok((eigs, vecs))
}

/// Pseudo-inverse of a symmetric positive-semidefinite matrix.
///
/// `damping > 0` returns the exact inverse of `c + damping * I`. With
/// `damping = 0` this is the Moore-Penrose pseudo-inverse with eigenvalues
/// at or below `PINV_CUTOFF * lambda_max` treated as zero. Rejects inputs
/// that are asymmetric or meaningfully indefinite.
pub fn pinv_psd(c: &Matrix, damping: f64) -> Result<Matrix> {
    if c.rows() != c.cols() {
        return Err(Error::Validation(format!(
            "pinv_psd requires a square matrix, got {}x{}",
            c.rows(),
            c.cols()
        )));
    }
    if damping < 0.0 {
        return Err(Error::Param(format!("damping must be >= 0, got {damping}")));
    }
    let asym_tol = 1e-9 * c.max_abs().max(1.0);
    if c.asymmetry() > asym_tol {
        return Err(Error::Validation(format!(
            "matrix is asymmetric: max |c_ij - c_ji| = {:e} exceeds {:e}",
            c.asymmetry(),
            asym_tol
        )));
    }
    let (eigs, vecs) = sym_eigen(c)?;
    let two_norm = eigs.iter().fold(0.0f64, |m, &l| m.max(l.abs()));
    let lambda_min = *eigs.last().expect("square matrices are non-empty");
    if lambda_min < -1e-9 * two_norm {
        return Err(Error::Validation(format!(
            "matrix is not positive semidefinite: lambda_min = {lambda_min:e}"
        )));
    }

    let lambda_max = eigs[0].max(0.0);
    let recip: Vec<f64> = if damping > 0.0 {
        let mut r = Vec::with_capacity(eigs.len());
        for &l in &eigs {
            let d = l + damping;
            if d <= 0.0 {
                return Err(Error::Validation(format!(
                    "damped eigenvalue {d:e} is not positive"
                )));
            }
            r.push(1.0 / d);
        }
        r
    } else {
        let cutoff = PINV_CUTOFF * lambda_max;
        eigs.iter()
            .map(|&l| if l > cutoff { 1.0 / l } else { 0.0 })
            .collect()
    };

    let mut scaled = vecs.clone();
    for j in 0..scaled.cols() {
        for i in 0..scaled.rows() {
            scaled.set(i, j, scaled.get(i, j) * recip[j]);
        }
    }
    let raw = scaled.matmul(&vecs.transpose())?;
    // Enforce exact symmetry against rounding in the two matmuls.
    let rawt = raw.transpose();
    raw.add(&rawt).map(|s| s.scale(0.5))
}
