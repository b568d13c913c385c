//! The five adapter initialization schemes.
//!
//! Every SVD-based scheme factors some rank-r component of the base weight
//! into `b * a` and stores `residual = w0 - b * a`, so the merged weights at
//! initialization equal the original weights exactly. Vanilla LoRA keeps
//! `residual = w0` and zeroes the product through `b = 0`.

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::capture::ActivationCapture;
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::nfm;
use crate::rng::{self, streams};
use crate::svd::{svd, sym_eigen, SvdResult, RANK_CUTOFF};

/// Initialization scheme tag.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    VanillaLora,
    Pissa,
    Milora,
    CordaKp,
    LoraNull,
}

impl Scheme {
    pub const ALL: [Scheme; 5] = [
        Scheme::VanillaLora,
        Scheme::Pissa,
        Scheme::Milora,
        Scheme::CordaKp,
        Scheme::LoraNull,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Scheme::VanillaLora => "vanilla_lora",
            Scheme::Pissa => "pissa",
            Scheme::Milora => "milora",
            Scheme::CordaKp => "corda_kp",
            Scheme::LoraNull => "lora_null",
        }
    }

    /// True for schemes whose adapter product reconstructs part of `w0`.
    pub fn is_svd_based(self) -> bool {
        !matches!(self, Scheme::VanillaLora)
    }

    /// True for schemes that need calibration activations.
    pub fn needs_capture(self) -> bool {
        matches!(self, Scheme::CordaKp | Scheme::LoraNull)
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "vanilla_lora" | "vanilla" | "lora" => Ok(Scheme::VanillaLora),
            "pissa" => Ok(Scheme::Pissa),
            "milora" => Ok(Scheme::Milora),
            "corda_kp" | "corda" => Ok(Scheme::CordaKp),
            "lora_null" => Ok(Scheme::LoraNull),
            other => Err(Error::Param(format!(
                "unknown scheme {other:?}; expected one of vanilla_lora, pissa, milora, corda_kp, lora_null"
            ))),
        }
    }
}

/// A constructed adapter: trainable factors plus the frozen residual and
/// the original weight retained for verification.
#[derive(Debug, Clone)]
pub struct AdapterBundle {
    pub scheme: Scheme,
    /// Down-projection, `r x d_in`.
    pub a: Matrix,
    /// Up-projection, `d_out x r`.
    pub b: Matrix,
    /// Frozen residual `w0 - b * a`.
    pub residual: Matrix,
    /// Original weight.
    pub w0: Matrix,
    pub rank: usize,
    /// Product scale; 1 except for scaled null-space bundles.
    pub alpha: f64,
    /// Seed for the vanilla Gaussian draw, when applicable.
    pub seed: Option<i64>,
    /// Gram damping used by the CorDA construction, when applicable.
    pub damping: Option<f64>,
}

impl AdapterBundle {
    pub fn d_out(&self) -> usize {
        self.w0.rows()
    }

    pub fn d_in(&self) -> usize {
        self.w0.cols()
    }

    /// The adapter product `b * a`.
    pub fn product(&self) -> Matrix {
        self.b.matmul(&self.a).expect("factor shapes chain")
    }

    /// Relative Frobenius error of `residual + b*a` against `w0`.
    pub fn reconstruction_error(&self) -> f64 {
        let merged = self.residual.add(&self.product()).expect("same shape");
        let diff = merged.sub(&self.w0).expect("same shape");
        diff.fro_norm() / self.w0.fro_norm().max(f64::MIN_POSITIVE)
    }
}

fn check_rank(r: usize, d_out: usize, d_in: usize) -> Result<()> {
    let cap = d_out.min(d_in);
    if r == 0 || r > cap {
        return Err(Error::Param(format!(
            "rank must satisfy 1 <= r <= min(d_out, d_in) = {cap}, got {r}"
        )));
    }
    Ok(())
}

/// Splits the singular triples `lo..hi` of a decomposition into
/// `b = U sqrt(scale * Sigma)` and `a = sqrt(scale * Sigma) V^T`.
fn factor_triples(s: &SvdResult, lo: usize, hi: usize, scale: f64) -> (Matrix, Matrix) {
    let r = hi - lo;
    let d_out = s.u.rows();
    let d_in = s.v.rows();
    let mut b = Matrix::zeros(d_out, r);
    let mut a = Matrix::zeros(r, d_in);
    for (t, i) in (lo..hi).enumerate() {
        let root = (scale * s.sigma[i]).sqrt();
        for row in 0..d_out {
            b.set(row, t, s.u.get(row, i) * root);
        }
        for col in 0..d_in {
            a.set(t, col, root * s.v.get(col, i));
        }
    }
    (b, a)
}

fn bundle_from_parts(
    scheme: Scheme,
    w0: &Matrix,
    a: Matrix,
    b: Matrix,
    rank: usize,
    alpha: f64,
    seed: Option<i64>,
    damping: Option<f64>,
) -> Result<AdapterBundle> {
    let product = b.matmul(&a)?;
    let residual = w0.sub(&product)?;
    Ok(AdapterBundle {
        scheme,
        a,
        b,
        residual,
        w0: w0.clone(),
        rank,
        alpha,
        seed,
        damping,
    })
}

/// Vanilla LoRA: `a` is Gaussian with mean 0 and std `1/sqrt(d_in)`,
/// `b = 0`, so the initial product vanishes and `residual = w0`.
pub fn init_vanilla(w0: &Matrix, r: usize, seed: u64) -> Result<AdapterBundle> {
    check_rank(r, w0.rows(), w0.cols())?;
    let std = 1.0 / (w0.cols() as f64).sqrt();
    let a = rng::gaussian_matrix(&mut rng::rng(seed, streams::VANILLA_INIT), r, w0.cols(), std);
    let b = Matrix::zeros(w0.rows(), r);
    Ok(AdapterBundle {
        scheme: Scheme::VanillaLora,
        a,
        b,
        residual: w0.clone(),
        w0: w0.clone(),
        rank: r,
        alpha: 1.0,
        seed: Some(seed as i64),
        damping: None,
    })
}

/// PiSSA: the adapter takes the top-r singular triples of `w0`; the
/// residual keeps the bottom components.
pub fn init_pissa(w0: &Matrix, r: usize) -> Result<AdapterBundle> {
    check_rank(r, w0.rows(), w0.cols())?;
    let s = svd(w0, false)?;
    let (b, a) = factor_triples(&s, 0, r, 1.0);
    bundle_from_parts(Scheme::Pissa, w0, a, b, r, 1.0, None, None)
}

/// MiLoRA: the adapter takes the r smallest nonzero singular triples of
/// `w0`; the residual keeps the top `R - r`.
pub fn init_milora(w0: &Matrix, r: usize) -> Result<AdapterBundle> {
    check_rank(r, w0.rows(), w0.cols())?;
    let s = svd(w0, false)?;
    let rank = s.rank();
    if r > rank {
        return Err(Error::Param(format!(
            "rank {r} exceeds the numerical rank {rank} of the weight matrix"
        )));
    }
    let (b, a) = factor_triples(&s, rank - r, rank, 1.0);
    bundle_from_parts(Scheme::Milora, w0, a, b, r, 1.0, None, None)
}

/// Knowledge-preserved CorDA: SVD of `w0 * C_d` with `C_d = gram +
/// damping * I`; the adapter takes the minor triples with `C_d^{-1}` folded
/// into `a`, keeping `b` orthogonal-times-scale.
///
/// With `damping = 0` the Gram matrix must be invertible: a condition
/// estimate above 1e12 is an error instructing the caller to pass explicit
/// damping — it is never applied silently.
pub fn init_corda_kp(
    w0: &Matrix,
    cap: &ActivationCapture,
    r: usize,
    damping: f64,
) -> Result<AdapterBundle> {
    check_rank(r, w0.rows(), w0.cols())?;
    if cap.dim() != w0.cols() {
        return Err(Error::Dim(format!(
            "capture dimension {} does not match weight d_in {}",
            cap.dim(),
            w0.cols()
        )));
    }
    if damping < 0.0 {
        return Err(Error::Param(format!("damping must be >= 0, got {damping}")));
    }

    let (eigs, vecs) = sym_eigen(&cap.gram)?;
    let lambda_max = eigs[0].max(0.0);
    let shifted: Vec<f64> = eigs.iter().map(|&l| l + damping).collect();
    let lambda_min = *shifted.last().expect("non-empty");
    if damping == 0.0 && (lambda_min <= 0.0 || lambda_max / lambda_min > 1e12) {
        return Err(Error::Validation(format!(
            "gram matrix is numerically singular (condition estimate {:e} > 1e12); \
             pass a nonzero --damping to regularize",
            if lambda_min > 0.0 { lambda_max / lambda_min } else { f64::INFINITY }
        )));
    }
    if lambda_min <= 0.0 {
        return Err(Error::Validation(
            "damped gram matrix is not positive definite".into(),
        ));
    }

    // C_d and C_d^{-1} share the gram eigenvectors.
    let weighted_by = |diag: &[f64]| -> Result<Matrix> {
        let mut scaled = vecs.clone();
        for j in 0..scaled.cols() {
            for i in 0..scaled.rows() {
                scaled.set(i, j, scaled.get(i, j) * diag[j]);
            }
        }
        scaled.matmul(&vecs.transpose())
    };
    let c_d = weighted_by(&shifted)?;
    let recip: Vec<f64> = shifted.iter().map(|&l| 1.0 / l).collect();
    let c_inv = weighted_by(&recip)?;

    let s = svd(&w0.matmul(&c_d)?, false)?;
    let rank = s.rank();
    if r > rank {
        return Err(Error::Param(format!(
            "rank {r} exceeds the numerical rank {rank} of w0 * C_d"
        )));
    }
    let (b, a_raw) = factor_triples(&s, rank - r, rank, 1.0);
    let a = a_raw.matmul(&c_inv)?;
    bundle_from_parts(Scheme::CordaKp, w0, a, b, r, 1.0, None, Some(damping))
}

/// Null-space LoRA: the adapter is the projection of `w0` onto the span of
/// `u_null`, factored through the SVD of `w0 * u_null * u_null^T` and
/// scaled so the product equals `alpha` times the projection.
pub fn init_lora_null(w0: &Matrix, u_null: &Matrix, alpha: f64) -> Result<AdapterBundle> {
    let r = u_null.cols();
    check_rank(r, w0.rows(), w0.cols())?;
    if u_null.rows() != w0.cols() {
        return Err(Error::Dim(format!(
            "u_null lives in R^{}, weight d_in is {}",
            u_null.rows(),
            w0.cols()
        )));
    }
    if !(alpha > 0.0) {
        return Err(Error::Param(format!("alpha must be positive, got {alpha}")));
    }
    let gram = u_null.transpose().matmul(u_null)?;
    let defect = gram.sub(&Matrix::identity(r))?.max_abs();
    if defect > 1e-8 {
        return Err(Error::Validation(format!(
            "u_null columns are not orthonormal: max |U^T U - I| = {defect:e}"
        )));
    }

    let projection = w0.matmul(u_null)?.matmul(&u_null.transpose())?;
    let s = svd(&projection, false)?;
    let (b, a) = factor_triples(&s, 0, r, alpha);
    bundle_from_parts(Scheme::LoraNull, w0, a, b, r, alpha, None, None)
}

/// Adapter forward pass: `residual * x + b * (a * x)` for a column batch.
pub fn apply_adapter(bundle: &AdapterBundle, x: &Matrix) -> Result<Matrix> {
    if x.rows() != bundle.d_in() {
        return Err(Error::Dim(format!(
            "input has dimension {}, adapter expects {}",
            x.rows(),
            bundle.d_in()
        )));
    }
    let through = bundle.b.matmul(&bundle.a.matmul(x)?)?;
    bundle.residual.matmul(x)?.add(&through)
}

/// On-disk manifest for a saved bundle.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BundleManifest {
    pub scheme: Scheme,
    pub rank: usize,
    pub alpha: f64,
    pub d_in: usize,
    pub d_out: usize,
    pub seed: Option<i64>,
    pub damping: Option<f64>,
    pub reconstruction_error: f64,
}

/// Writes `A.nfm`, `B.nfm`, `residual.nfm`, `W0.nfm` and `manifest.json`
/// into `dir` (created if absent).
pub fn save_bundle(dir: &Path, bundle: &AdapterBundle) -> Result<()> {
    fs::create_dir_all(dir)?;
    nfm::write_file(dir.join("A.nfm"), &bundle.a)?;
    nfm::write_file(dir.join("B.nfm"), &bundle.b)?;
    nfm::write_file(dir.join("residual.nfm"), &bundle.residual)?;
    nfm::write_file(dir.join("W0.nfm"), &bundle.w0)?;
    let manifest = BundleManifest {
        scheme: bundle.scheme,
        rank: bundle.rank,
        alpha: bundle.alpha,
        d_in: bundle.d_in(),
        d_out: bundle.d_out(),
        seed: bundle.seed,
        damping: bundle.damping,
        reconstruction_error: bundle.reconstruction_error(),
    };
    fs::write(
        dir.join("manifest.json"),
        serde_json::to_string_pretty(&manifest)?,
    )?;
    Ok(())
}

/// Loads a bundle and re-verifies its reconstruction error; a recomputed
/// error above twice the stored value means the files were tampered with or
/// corrupted and the load fails.
pub fn load_bundle(dir: &Path) -> Result<AdapterBundle> {
    let manifest: BundleManifest =
        serde_json::from_str(&fs::read_to_string(dir.join("manifest.json"))?)?;
    let a = nfm::read_file(dir.join("A.nfm"))?;
    let b = nfm::read_file(dir.join("B.nfm"))?;
    let residual = nfm::read_file(dir.join("residual.nfm"))?;
    let w0 = nfm::read_file(dir.join("W0.nfm"))?;
    if a.rows() != manifest.rank
        || a.cols() != manifest.d_in
        || b.rows() != manifest.d_out
        || b.cols() != manifest.rank
        || residual.rows() != manifest.d_out
        || residual.cols() != manifest.d_in
        || w0.rows() != manifest.d_out
        || w0.cols() != manifest.d_in
    {
        return Err(Error::Validation(
            "bundle matrices disagree with the manifest dimensions".into(),
        ));
    }
    let bundle = AdapterBundle {
        scheme: manifest.scheme,
        a,
        b,
        residual,
        w0,
        rank: manifest.rank,
        alpha: manifest.alpha,
        seed: manifest.seed,
        damping: manifest.damping,
    };
    let recomputed = bundle.reconstruction_error();
    if recomputed > 2.0 * manifest.reconstruction_error {
        return Err(Error::ReconstructionMismatch {
            recomputed,
            stored: manifest.reconstruction_error,
        });
    }
    Ok(bundle)
}

/// Singular values of the product beyond index `rank`, relative to the
/// largest: all should sit at numerical zero.
pub fn product_rank_leak(bundle: &AdapterBundle) -> Result<f64> {
    let s = svd(&bundle.product(), false)?;
    let top = s.sigma[0];
    if top == 0.0 {
        return Ok(0.0);
    }
    Ok(s.sigma
        .iter()
        .skip(bundle.rank)
        .fold(0.0f64, |m, &v| m.max(v / top)))
}

/// True when the product's trailing singular values sit below the rank
/// cutoff, i.e. `rank(b * a) <= r`.
pub fn product_rank_ok(bundle: &AdapterBundle) -> Result<bool> {
    Ok(product_rank_leak(bundle)? <= RANK_CUTOFF)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::capture::{extract_null_basis, left_basis_from_gram};
    use crate::rng::rng;
    use crate::svd::truncate_rank;

    fn random_matrix(rows: usize, cols: usize, seed: u64) -> Matrix {
        rng::gaussian_matrix(&mut rng(seed, streams::TEST), rows, cols, 1.0)
    }

    fn capture_from_x(x: Matrix) -> ActivationCapture {
        ActivationCapture {
            layer_index: 0,
            gram: x.matmul(&x.transpose()).unwrap(),
            sample_count: x.cols(),
            x_pre: Some(x),
        }
    }

    #[test]
    fn vanilla_product_is_zero_and_seed_deterministic() {
        let w0 = random_matrix(5, 4, 1);
        let bundle = init_vanilla(&w0, 2, 7).unwrap();
        assert_eq!(bundle.product().fro_norm(), 0.0);
        assert_eq!(bundle.residual, w0);
        let again = init_vanilla(&w0, 2, 7).unwrap();
        assert_eq!(bundle.a, again.a);
        assert_ne!(bundle.a, init_vanilla(&w0, 2, 8).unwrap().a);
    }

    #[test]
    fn vanilla_gaussian_scale() {
        // r=2, d_in=4: 8 entries with std 1/sqrt(4); the sample mean stays
        // within three standard errors of zero.
        let w0 = random_matrix(6, 4, 2);
        let bundle = init_vanilla(&w0, 2, 3).unwrap();
        let mean: f64 = bundle.a.data().iter().sum::<f64>() / 8.0;
        let bound = 3.0 * (1.0 / 4.0f64.sqrt()) / 8.0f64.sqrt();
        assert!(mean.abs() <= bound, "mean {mean} outside {bound}");
    }

    #[test]
    fn pissa_diagonal_and_full_rank() {
        let w0 = Matrix::diag(&[3.0, 2.0, 1.0]);
        let bundle = init_pissa(&w0, 1).unwrap();
        assert!(bundle.product().sub(&Matrix::diag(&[3.0, 0.0, 0.0])).unwrap().fro_norm() < 1e-12);
        assert!(bundle.residual.sub(&Matrix::diag(&[0.0, 2.0, 1.0])).unwrap().fro_norm() < 1e-12);

        let full = init_pissa(&w0, 3).unwrap();
        assert!(full.residual.fro_norm() < 1e-10 * w0.fro_norm());
    }

    #[test]
    fn pissa_matches_truncation_oracle() {
        let w0 = random_matrix(6, 5, 4);
        let bundle = init_pissa(&w0, 2).unwrap();
        let oracle = truncate_rank(&svd(&w0, false).unwrap(), 2).unwrap();
        let rel = bundle.product().sub(&oracle).unwrap().fro_norm() / w0.fro_norm();
        assert!(rel < 1e-10, "pissa product off truncation by {rel}");
    }

    #[test]
    fn milora_diagonal_cases() {
        let w0 = Matrix::diag(&[3.0, 2.0, 1.0]);
        let bundle = init_milora(&w0, 1).unwrap();
        assert!(bundle.product().sub(&Matrix::diag(&[0.0, 0.0, 1.0])).unwrap().fro_norm() < 1e-12);
        assert!(bundle.residual.sub(&Matrix::diag(&[3.0, 2.0, 0.0])).unwrap().fro_norm() < 1e-12);

        let full = init_milora(&w0, 3).unwrap();
        assert!(full.residual.fro_norm() < 1e-12);
    }

    #[test]
    fn milora_truncation_error_formula() {
        let w0 = random_matrix(8, 6, 5);
        let bundle = init_milora(&w0, 2).unwrap();
        let sigma = svd(&w0, false).unwrap().sigma;
        let expect = (sigma[4] * sigma[4] + sigma[5] * sigma[5]).sqrt();
        let got = bundle.residual.sub(&w0).unwrap().fro_norm();
        assert!((got - expect).abs() < 1e-9, "{got} vs {expect}");
    }

    #[test]
    fn milora_rejects_rank_above_numerical_rank() {
        let rank2 = crate::matrix::outer(&[1.0, 0.0, 0.0], &[1.0, 0.0, 0.0])
            .add(&crate::matrix::outer(&[0.0, 1.0, 0.0], &[0.0, 1.0, 0.0]))
            .unwrap();
        let err = init_milora(&rank2, 3).unwrap_err();
        assert!(err.to_string().contains("numerical rank 2"), "{err}");
    }

    #[test]
    fn corda_isotropic_gram_reduces_to_milora() {
        let w0 = random_matrix(6, 6, 6);
        for c in [1.0, 0.35, 7.0] {
            let cap = ActivationCapture {
                layer_index: 0,
                x_pre: None,
                gram: Matrix::identity(6).scale(c),
                sample_count: 6,
            };
            let corda = init_corda_kp(&w0, &cap, 2, 0.0).unwrap();
            let milora = init_milora(&w0, 2).unwrap();
            let dp = corda.product().sub(&milora.product()).unwrap().fro_norm();
            let dr = corda.residual.sub(&milora.residual).unwrap().fro_norm();
            assert!(dp < 1e-9 && dr < 1e-9, "c={c}: product {dp}, residual {dr}");
        }
    }

    #[test]
    fn corda_reconstructs_and_beats_milora_on_weighted_objective() {
        let w0 = random_matrix(6, 6, 7);
        let x = {
            // Strongly anisotropic activations.
            let dirs = random_matrix(6, 6, 8);
            let scales = Matrix::diag(&[10.0, 5.0, 2.0, 0.5, 0.1, 0.02]);
            dirs.matmul(&scales).unwrap().matmul(&random_matrix(6, 40, 9)).unwrap()
        };
        let cap = capture_from_x(x.clone());
        let corda = init_corda_kp(&w0, &cap, 2, 0.0).unwrap();
        assert!(corda.reconstruction_error() <= 1e-8, "{}", corda.reconstruction_error());

        let milora = init_milora(&w0, 2).unwrap();
        let weighted = |bundle: &AdapterBundle| {
            bundle.residual.sub(&w0).unwrap().matmul(&x).unwrap().fro_norm()
        };
        assert!(
            weighted(&corda) < weighted(&milora),
            "corda {} vs milora {}",
            weighted(&corda),
            weighted(&milora)
        );
    }

    #[test]
    fn corda_singular_gram_requires_damping() {
        let w0 = random_matrix(4, 4, 10);
        let x = random_matrix(4, 2, 11); // rank 2 => singular gram
        let cap = capture_from_x(x.matmul(&random_matrix(2, 30, 12)).unwrap());
        let err = init_corda_kp(&w0, &cap, 1, 0.0).unwrap_err();
        assert!(err.to_string().contains("damping"), "{err}");
        assert!(init_corda_kp(&w0, &cap, 1, 1e-6).is_ok());
    }

    #[test]
    fn lora_null_coordinate_projection() {
        let w0 = Matrix::diag(&[3.0, 2.0, 1.0]);
        let e3 = Matrix::new(3, 1, vec![0.0, 0.0, 1.0]).unwrap();
        let bundle = init_lora_null(&w0, &e3, 1.0).unwrap();
        assert!(bundle.product().sub(&Matrix::diag(&[0.0, 0.0, 1.0])).unwrap().fro_norm() < 1e-12);
        assert!(bundle.residual.sub(&Matrix::diag(&[3.0, 2.0, 0.0])).unwrap().fro_norm() < 1e-12);
    }

    #[test]
    fn lora_null_full_span_absorbs_the_weight() {
        let w0 = random_matrix(5, 3, 13);
        let bundle = init_lora_null(&w0, &Matrix::identity(3), 1.0).unwrap();
        assert!(bundle.product().sub(&w0).unwrap().fro_norm() < 1e-10 * w0.fro_norm());
        assert!(bundle.residual.fro_norm() < 1e-10 * w0.fro_norm());
    }

    #[test]
    fn lora_null_alpha_scales_the_product_exactly() {
        let w0 = random_matrix(6, 4, 14);
        let x = random_matrix(4, 2, 15).matmul(&random_matrix(2, 50, 16)).unwrap();
        let cap = capture_from_x(x.clone());
        let (u, sigma) = left_basis_from_gram(&cap).unwrap();
        let u_null = extract_null_basis(&u, &sigma, 2).unwrap();

        let bundle = init_lora_null(&w0, &u_null, 2.0).unwrap();
        let projection = w0.matmul(&u_null).unwrap().matmul(&u_null.transpose()).unwrap();
        let rel = bundle.product().sub(&projection.scale(2.0)).unwrap().fro_norm()
            / w0.fro_norm();
        assert!(rel < 1e-10, "alpha-scaled product off by {rel}");

        // a annihilates the calibration activations.
        let leak = bundle.a.matmul(&x).unwrap().fro_norm();
        let sigma1 = svd(&x, false).unwrap().sigma[0];
        assert!(leak <= 1e-8 * bundle.a.fro_norm() * sigma1, "leak {leak}");

        // Changing alpha rescales b*a exactly and keeps Col(a^T).
        let base = init_lora_null(&w0, &u_null, 1.0).unwrap();
        let scaled = base.product().scale(2.0);
        assert!(bundle.product().sub(&scaled).unwrap().fro_norm() < 1e-12 * w0.fro_norm());
        let proj = u_null.matmul(&u_null.transpose()).unwrap();
        let at = bundle.a.transpose();
        let off = at.sub(&proj.matmul(&at).unwrap()).unwrap().fro_norm();
        assert!(off <= 1e-9 * bundle.a.fro_norm());
    }

    #[test]
    fn lora_null_rejects_non_orthonormal_basis() {
        let w0 = random_matrix(4, 4, 17);
        let skew = Matrix::new(4, 2, vec![1.0, 0.5, 0.0, 0.5, 0.0, 0.0, 0.0, 0.0]).unwrap();
        assert!(init_lora_null(&w0, &skew, 1.0).is_err());
        assert!(init_lora_null(&w0, &Matrix::identity(4).columns(0, 2), 0.0).is_err());
    }

    #[test]
    fn reconstruction_identity_all_schemes() {
        let w0 = random_matrix(8, 6, 18);
        let x = random_matrix(6, 3, 19).matmul(&random_matrix(3, 40, 20)).unwrap();
        let noisy = x.add(&random_matrix(6, 40, 21).scale(1e-3)).unwrap();
        let cap = capture_from_x(noisy);
        let (u, sigma) = left_basis_from_gram(&cap).unwrap();
        let u_null = extract_null_basis(&u, &sigma, 2).unwrap();

        let bundles = vec![
            init_vanilla(&w0, 2, 0).unwrap(),
            init_pissa(&w0, 2).unwrap(),
            init_milora(&w0, 2).unwrap(),
            init_corda_kp(&w0, &cap, 2, 0.0).unwrap(),
            init_lora_null(&w0, &u_null, 1.0).unwrap(),
        ];
        for bundle in &bundles {
            let tol = if bundle.scheme == Scheme::CordaKp { 1e-8 } else { 1e-10 };
            let err = bundle.reconstruction_error();
            assert!(err <= tol, "{}: reconstruction error {err}", bundle.scheme);
            assert!(product_rank_ok(bundle).unwrap(), "{}: rank leak", bundle.scheme);
        }
    }

    #[test]
    fn pissa_milora_complementarity() {
        let w0 = random_matrix(7, 5, 22);
        let rank = svd(&w0, false).unwrap().rank();
        let pissa = init_pissa(&w0, 2).unwrap();
        let milora = init_milora(&w0, rank - 2).unwrap();
        let sum = pissa.product().add(&milora.product()).unwrap();
        let rel = sum.sub(&w0).unwrap().fro_norm() / w0.fro_norm();
        assert!(rel < 1e-9, "complementarity violated by {rel}");
    }

    #[test]
    fn apply_adapter_matches_base_weight_at_init() {
        let w0 = random_matrix(6, 4, 23);
        let x = random_matrix(4, 5, 24);
        let vanilla = init_vanilla(&w0, 2, 1).unwrap();
        let direct = w0.matmul(&x).unwrap();
        assert_eq!(apply_adapter(&vanilla, &x).unwrap(), direct);

        let xp = random_matrix(4, 2, 25).matmul(&random_matrix(2, 30, 26)).unwrap();
        let cap = capture_from_x(xp);
        let (u, sigma) = left_basis_from_gram(&cap).unwrap();
        let u_null = extract_null_basis(&u, &sigma, 2).unwrap();
        let nullb = init_lora_null(&w0, &u_null, 1.0).unwrap();
        let out = apply_adapter(&nullb, &x).unwrap();
        let err = out.sub(&direct).unwrap().fro_norm();
        assert!(err <= 1e-9 * w0.fro_norm() * x.fro_norm());

        assert!(apply_adapter(&nullb, &random_matrix(5, 2, 27)).is_err());
    }

    #[test]
    fn perturbing_a_only_moves_the_adapter_path() {
        let w0 = random_matrix(5, 4, 28);
        let xp = random_matrix(4, 2, 29).matmul(&random_matrix(2, 20, 30)).unwrap();
        let cap = capture_from_x(xp);
        let (u, sigma) = left_basis_from_gram(&cap).unwrap();
        let u_null = extract_null_basis(&u, &sigma, 2).unwrap();
        let mut bundle = init_lora_null(&w0, &u_null, 1.0).unwrap();

        let x = random_matrix(4, 3, 31);
        let before = apply_adapter(&bundle, &x).unwrap();
        let delta = random_matrix(2, 4, 32).scale(0.01);
        bundle.a = bundle.a.add(&delta).unwrap();
        let after = apply_adapter(&bundle, &x).unwrap();
        let expected_change = bundle.b.matmul(&delta.matmul(&x).unwrap()).unwrap();
        let got_change = after.sub(&before).unwrap();
        assert!(got_change.sub(&expected_change).unwrap().fro_norm() < 1e-12);
    }

    #[test]
    fn bundle_roundtrip_and_tamper_detection() {
        let dir = tempfile::tempdir().unwrap();
        let w0 = random_matrix(5, 4, 33);
        let bundle = init_milora(&w0, 2).unwrap();
        let path = dir.path().join("bundle");
        save_bundle(&path, &bundle).unwrap();
        let loaded = load_bundle(&path).unwrap();
        assert_eq!(loaded.a, bundle.a);
        assert_eq!(loaded.residual, bundle.residual);
        assert_eq!(loaded.scheme, Scheme::Milora);

        // Flip one sign bit inside A.nfm.
        let a_path = path.join("A.nfm");
        let mut bytes = std::fs::read(&a_path).unwrap();
        let last = bytes.len() - 1;
        bytes[last] ^= 0x80;
        std::fs::write(&a_path, &bytes).unwrap();
        match load_bundle(&path) {
            Err(Error::ReconstructionMismatch { .. }) => {}
            other => panic!("tampered bundle accepted: {other:?}"),
        }
    }
}
