//! Independent verification of the optimality claims behind the schemes.
//!
//! Each check pits a constructed bundle against brute-force candidates or a
//! closed-form solution, reporting a signed margin instead of a bare
//! boolean so near-ties stay visible. Margins within 1e-9 of equality are
//! reported as non-strict rather than failed.

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use crate::adapter::{init_corda_kp, init_lora_null, init_milora, AdapterBundle};
use crate::capture::{extract_null_basis, left_basis_from_gram, ActivationCapture};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::rng::{self, streams};
use crate::svd::{pinv_psd, svd, truncate_rank};

/// Slack applied to every inequality before declaring failure.
pub const MARGIN_TOL: f64 = 1e-9;

/// Both Frobenius objectives evaluated on a bundle's residual.
#[derive(Debug, Clone, Serialize)]
pub struct ObjectiveReport {
    pub scheme: String,
    /// `||residual - w0||_F`.
    pub plain_objective: f64,
    /// `||residual * X_pre - w0 * X_pre||_F`.
    pub weighted_objective: f64,
    pub rank_of_residual: usize,
}

/// Outcome of one oracle check, shaped for the `verify` JSON output.
#[derive(Debug, Clone, Serialize)]
pub struct CheckReport {
    pub check: String,
    pub instance_seed: i64,
    pub pass: bool,
    /// Smallest slack by which the checked inequalities hold; negative
    /// means a violation.
    pub margin: f64,
    pub details: serde_json::Value,
}

/// Evaluates the plain and weighted objectives of a bundle.
pub fn objectives(bundle: &AdapterBundle, cap: &ActivationCapture) -> Result<ObjectiveReport> {
    if cap.dim() != bundle.d_in() {
        return Err(Error::Dim(format!(
            "capture dimension {} does not match bundle d_in {}",
            cap.dim(),
            bundle.d_in()
        )));
    }
    let diff = bundle.residual.sub(&bundle.w0)?;
    Ok(ObjectiveReport {
        scheme: bundle.scheme.to_string(),
        plain_objective: diff.fro_norm(),
        weighted_objective: cap.weighted_norm(&diff)?,
        rank_of_residual: svd(&bundle.residual, false)?.rank(),
    })
}

/// Rotation angles for the warm (near-optimal) candidates.
const WARM_ANGLES: [f64; 3] = [1e-3, 1e-2, 1e-1];
const WARM_PER_ANGLE: usize = 5;

/// Random rank-`k` candidates of the same shape as `w0`: `n_random` seeded
/// Gaussian factor products rescaled to the optimal truncation's norm, plus
/// warm candidates that perturb the truncation's singular subspaces by
/// small plane rotations.
fn rank_k_candidates(w0: &Matrix, k: usize, n_random: usize, seed: u64) -> Result<Vec<Matrix>> {
    let (rows, cols) = (w0.rows(), w0.cols());
    let mut out = Vec::with_capacity(n_random + WARM_ANGLES.len() * WARM_PER_ANGLE);
    if k == 0 {
        // The only rank-0 matrix.
        out.push(Matrix::zeros(rows, cols));
        return Ok(out);
    }

    let s = svd(w0, false)?;
    let optimal = truncate_rank(&s, k)?;
    let ref_norm = optimal.fro_norm();

    let mut r = rng::rng(seed, streams::ORACLE_CANDIDATES);
    for _ in 0..n_random {
        let g1 = rng::gaussian_matrix(&mut r, rows, k, 1.0);
        let g2 = rng::gaussian_matrix(&mut r, k, cols, 1.0);
        let prod = g1.matmul(&g2)?;
        let norm = prod.fro_norm();
        let cand = if ref_norm > 0.0 && norm > 0.0 {
            prod.scale(ref_norm / norm)
        } else {
            prod
        };
        out.push(cand);
    }

    // Warm candidates: rotate a kept singular direction toward one outside
    // the kept block, on both sides independently.
    let q = s.sigma.len();
    for &angle in &WARM_ANGLES {
        for _ in 0..WARM_PER_ANGLE {
            let mut u = s.u.clone();
            let mut v = s.v.clone();
            if k < q {
                let i = r.gen_range(0..k);
                let j = r.gen_range(k..q);
                rotate_columns(&mut u, i, j, angle);
                let i2 = r.gen_range(0..k);
                let j2 = r.gen_range(k..q);
                rotate_columns(&mut v, i2, j2, angle);
            }
            let mut cand = Matrix::zeros(rows, cols);
            for t in 0..k {
                let term = crate::matrix::outer(&u.col(t), &v.col(t)).scale(s.sigma[t]);
                cand = cand.add(&term)?;
            }
            out.push(cand);
        }
    }
    Ok(out)
}

fn rotate_columns(m: &mut Matrix, i: usize, j: usize, angle: f64) {
    let (c, s) = (angle.cos(), angle.sin());
    for row in 0..m.rows() {
        let a = m.get(row, i);
        let b = m.get(row, j);
        m.set(row, i, c * a - s * b);
        m.set(row, j, s * a + c * b);
    }
}

/// MiLoRA residual optimality: no random or warm rank-(R-r) candidate may
/// beat the truncated residual on the plain objective beyond `MARGIN_TOL`.
pub fn check_theorem1(w0: &Matrix, r: usize, n_candidates: usize, seed: u64) -> Result<CheckReport> {
    if n_candidates == 0 {
        return Err(Error::Param("need at least one candidate".into()));
    }
    let milora = init_milora(w0, r)?;
    let milora_obj = milora.residual.sub(w0)?.fro_norm();
    let k = svd(w0, false)?.rank() - r;

    let candidates = rank_k_candidates(w0, k, n_candidates, seed)?;
    let best = candidates
        .par_iter()
        .map(|cand| cand.sub(w0).map(|d| d.fro_norm()))
        .try_reduce(|| f64::INFINITY, |a, b| Ok(a.min(b)))?;

    let margin = best - milora_obj;
    Ok(CheckReport {
        check: "theorem1_milora_plain_optimality".into(),
        instance_seed: seed as i64,
        pass: margin >= -MARGIN_TOL,
        margin,
        details: json!({
            "residual_rank": k,
            "n_random": if k == 0 { 1 } else { n_candidates },
            "n_warm": if k == 0 { 0 } else { WARM_ANGLES.len() * WARM_PER_ANGLE },
            "milora_objective": milora_obj,
            "best_candidate_objective": best,
        }),
    })
}

/// Closed-form stationary point of the weighted objective without the rank
/// constraint: `w0 * C * C^+` for `C = X_pre X_pre^T`. Collapses to `w0`
/// when the Gram matrix has full rank.
pub fn closed_form_weighted_solution(w0: &Matrix, cap: &ActivationCapture) -> Result<Matrix> {
    if cap.dim() != w0.cols() {
        return Err(Error::Dim(format!(
            "capture dimension {} does not match weight d_in {}",
            cap.dim(),
            w0.cols()
        )));
    }
    let pinv = pinv_psd(&cap.gram, 0.0)?;
    w0.matmul(&cap.gram)?.matmul(&pinv)
}

/// Gradient residual of the weighted objective at `solution`:
/// `||(solution * X - w0 * X) * X^T||_F`, zero at a stationary point.
pub fn stationarity_residual(
    w0: &Matrix,
    cap: &ActivationCapture,
    solution: &Matrix,
) -> Result<f64> {
    let diff = solution.sub(w0)?;
    Ok(diff.matmul(&cap.gram)?.fro_norm())
}

/// CorDA dominance on the weighted objective: passes when CorDA's weighted
/// objective is at most MiLoRA's on this instance. Random candidates that
/// beat CorDA are counted in the details but do not fail the check — the
/// truncated construction is an approximation, not a proven optimum.
pub fn check_theorem2(
    w0: &Matrix,
    cap: &ActivationCapture,
    r: usize,
    n_candidates: usize,
    seed: u64,
    damping: f64,
) -> Result<CheckReport> {
    let corda = init_corda_kp(w0, cap, r, damping)?;
    let milora = init_milora(w0, r)?;
    let (u, sigma) = left_basis_from_gram(cap)?;
    let u_null = extract_null_basis(&u, &sigma, r)?;
    let lora_null = init_lora_null(w0, &u_null, 1.0)?;

    let corda_w = objectives(&corda, cap)?.weighted_objective;
    let milora_w = objectives(&milora, cap)?.weighted_objective;
    let lora_null_w = objectives(&lora_null, cap)?.weighted_objective;

    let k = svd(w0, false)?.rank() - r;
    let candidates = rank_k_candidates(w0, k, n_candidates, seed)?;
    let weighted: Vec<f64> = candidates
        .par_iter()
        .map(|cand| cap.weighted_norm(&cand.sub(w0)?))
        .collect::<Result<_>>()?;
    let best_candidate = weighted.iter().copied().fold(f64::INFINITY, f64::min);
    let beating = weighted.iter().filter(|&&w| w < corda_w - MARGIN_TOL).count();

    let margin = milora_w - corda_w;
    Ok(CheckReport {
        check: "theorem2_corda_weighted_dominance".into(),
        instance_seed: seed as i64,
        pass: margin >= -MARGIN_TOL,
        margin,
        details: json!({
            "corda_weighted": corda_w,
            "milora_weighted": milora_w,
            "lora_null_weighted": lora_null_w,
            "best_candidate_weighted": best_candidate,
            "candidates_beating_corda": beating,
            "damping": damping,
        }),
    })
}

/// Non-optimality of the null-space construction: its plain objective is no
/// better than MiLoRA's and its weighted objective no better than CorDA's.
/// Strictness of both inequalities is recorded in the details.
pub fn check_theorem3(
    w0: &Matrix,
    cap: &ActivationCapture,
    r: usize,
    damping: f64,
) -> Result<CheckReport> {
    let (u, sigma) = left_basis_from_gram(cap)?;
    let u_null = extract_null_basis(&u, &sigma, r)?;
    let lora_null = init_lora_null(w0, &u_null, 1.0)?;
    let milora = init_milora(w0, r)?;
    let corda = init_corda_kp(w0, cap, r, damping)?;

    let ln = objectives(&lora_null, cap)?;
    let plain_margin = ln.plain_objective - objectives(&milora, cap)?.plain_objective;
    let weighted_margin = ln.weighted_objective - objectives(&corda, cap)?.weighted_objective;
    let margin = plain_margin.min(weighted_margin);

    Ok(CheckReport {
        check: "theorem3_lora_null_non_optimality".into(),
        instance_seed: 0,
        pass: margin >= -MARGIN_TOL,
        margin,
        details: json!({
            "lora_null_plain": ln.plain_objective,
            "lora_null_weighted": ln.weighted_objective,
            "plain_margin_vs_milora": plain_margin,
            "weighted_margin_vs_corda": weighted_margin,
            "strict": plain_margin > MARGIN_TOL && weighted_margin > MARGIN_TOL,
            "damping": damping,
        }),
    })
}

/// How far the rows of `a` stick out of the span of `u_null`:
/// `||a^T - u_null u_null^T a^T||_F / ||a||_F`. Zero when the column space
/// of `a^T` lies inside the span; 1 when it is entirely orthogonal.
pub fn check_colspace(a: &Matrix, u_null: &Matrix) -> Result<f64> {
    if u_null.rows() != a.cols() {
        return Err(Error::Dim(format!(
            "a has {} columns but u_null lives in R^{}",
            a.cols(),
            u_null.rows()
        )));
    }
    let at = a.transpose();
    let projected = u_null.matmul(&u_null.transpose().matmul(&at)?)?;
    let off = at.sub(&projected)?.fro_norm();
    Ok(off / a.fro_norm().max(f64::MIN_POSITIVE))
}
