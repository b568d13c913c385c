//! Calibration activations for a toy feed-forward model.
//!
//! Builds the per-layer input activation matrix `X_pre` (columns are
//! samples) either by direct stacking or by streaming Gram accumulation,
//! and extracts the trailing left singular basis that the null-space
//! initialization consumes.

use std::fs;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::nfm;
use crate::rng::{self, streams};
use crate::svd::sym_eigen;

/// Pointwise nonlinearity applied after every layer except the last.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Nonlinearity {
    Tanh,
    Relu,
    Identity,
}

impl Nonlinearity {
    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Nonlinearity::Tanh => x.tanh(),
            Nonlinearity::Relu => x.max(0.0),
            Nonlinearity::Identity => x,
        }
    }

    /// Derivative expressed in terms of the pre-activation value.
    #[inline]
    pub fn derivative(self, x: f64) -> f64 {
        match self {
            Nonlinearity::Tanh => {
                let t = x.tanh();
                1.0 - t * t
            }
            Nonlinearity::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Nonlinearity::Identity => 1.0,
        }
    }
}

/// Small dense MLP standing in for the pre-trained network.
#[derive(Debug, Clone)]
pub struct ToyModel {
    pub layer_dims: Vec<usize>,
    pub weights: Vec<Matrix>,
    pub nonlinearity: Nonlinearity,
}

impl ToyModel {
    /// Validates that consecutive weight shapes chain through `layer_dims`.
    pub fn new(layer_dims: Vec<usize>, weights: Vec<Matrix>, nonlinearity: Nonlinearity) -> Result<Self> {
        if layer_dims.len() < 2 || weights.len() != layer_dims.len() - 1 {
            return Err(Error::Validation(format!(
                "need {} weight matrices for {} layer dims, got {}",
                layer_dims.len().saturating_sub(1),
                layer_dims.len(),
                weights.len()
            )));
        }
        for (i, w) in weights.iter().enumerate() {
            if w.cols() != layer_dims[i] || w.rows() != layer_dims[i + 1] {
                return Err(Error::Validation(format!(
                    "weight {i} is {}x{}, expected {}x{}",
                    w.rows(),
                    w.cols(),
                    layer_dims[i + 1],
                    layer_dims[i]
                )));
            }
        }
        Ok(Self {
            layer_dims,
            weights,
            nonlinearity,
        })
    }

    pub fn num_layers(&self) -> usize {
        self.weights.len()
    }

    /// Activations entering layer `layer_index` for a batch of column
    /// samples. Index 0 is the raw input; index `num_layers()` is the
    /// network output (no nonlinearity after the last layer).
    pub fn activations_at(&self, samples: &Matrix, layer_index: usize) -> Result<Matrix> {
        if samples.rows() != self.layer_dims[0] {
            return Err(Error::Validation(format!(
                "samples have dimension {}, model expects {}",
                samples.rows(),
                self.layer_dims[0]
            )));
        }
        if layer_index > self.num_layers() {
            return Err(Error::Param(format!(
                "layer index {layer_index} out of range for {} layers",
                self.num_layers()
            )));
        }
        let mut x = samples.clone();
        for li in 0..layer_index {
            let mut pre = self.weights[li].matmul(&x)?;
            if li + 1 < self.layer_dims.len() - 1 {
                for v in pre.data_mut() {
                    *v = self.nonlinearity.apply(*v);
                }
            }
            x = pre;
        }
        Ok(x)
    }

    /// Network output for a batch of column samples.
    pub fn forward(&self, samples: &Matrix) -> Result<Matrix> {
        self.activations_at(samples, self.num_layers())
    }
}

/// Input activations of one layer over a calibration set.
#[derive(Debug, Clone)]
pub struct ActivationCapture {
    pub layer_index: usize,
    /// Stacked activations, `d_in x N`; absent for Gram-only captures.
    pub x_pre: Option<Matrix>,
    /// `x_pre * x_pre^T`, always present.
    pub gram: Matrix,
    pub sample_count: usize,
}

impl ActivationCapture {
    pub fn dim(&self) -> usize {
        self.gram.rows()
    }

    /// Squared-Frobenius weighted norm `||m * X_pre||_F`, computed from the
    /// stacked activations when available and from the Gram matrix
    /// otherwise (`||m X||_F^2 = tr(m C m^T)`).
    pub fn weighted_norm(&self, m: &Matrix) -> Result<f64> {
        match &self.x_pre {
            Some(x) => Ok(m.matmul(x)?.fro_norm()),
            None => {
                let mc = m.matmul(&self.gram)?;
                let mut tr = 0.0;
                for i in 0..m.rows() {
                    for j in 0..m.cols() {
                        tr += mc.get(i, j) * m.get(i, j);
                    }
                }
                Ok(tr.max(0.0).sqrt())
            }
        }
    }
}

/// Synthetic calibration inputs, columns are samples.
#[derive(Debug, Clone)]
pub struct CalibrationSet {
    pub samples: Matrix,
    pub seed: u64,
    pub generator_spec: String,
}

/// Default calibration size.
pub const DEFAULT_CALIBRATION_SAMPLES: usize = 256;

/// Draws a calibration set with genuinely low effective rank: samples are
/// `M z + noise` with `z` standard normal in `k = max(1, d0/4)` dimensions,
/// `M` a fixed seeded `d0 x k` matrix and noise scale 1e-3.
pub fn generate_calibration(d0: usize, n: usize, seed: u64) -> Result<CalibrationSet> {
    if d0 == 0 || n == 0 {
        return Err(Error::Param("calibration needs d0 >= 1 and n >= 1".into()));
    }
    let k = (d0 / 4).max(1);
    let noise_scale = 1e-3;
    let mut r = rng::rng(seed, streams::CALIBRATION);
    let mix = rng::gaussian_matrix(&mut r, d0, k, 1.0 / (k as f64).sqrt());
    let z = rng::gaussian_matrix(&mut r, k, n, 1.0);
    let noise = rng::gaussian_matrix(&mut r, d0, n, noise_scale);
    let samples = mix.matmul(&z)?.add(&noise)?;
    Ok(CalibrationSet {
        samples,
        seed,
        generator_spec: format!("lowrank(d0={d0},k={k},noise={noise_scale:e},n={n})"),
    })
}

/// Runs the calibration set through the model and captures the activations
/// entering `layer_index`, together with their Gram matrix.
pub fn forward_collect(
    model: &ToyModel,
    cal: &CalibrationSet,
    layer_index: usize,
) -> Result<ActivationCapture> {
    let x_pre = model.activations_at(&cal.samples, layer_index)?;
    let gram = x_pre.matmul(&x_pre.transpose())?;
    Ok(ActivationCapture {
        layer_index,
        sample_count: x_pre.cols(),
        x_pre: Some(x_pre),
        gram,
    })
}

/// Captures for every weight matrix of the model, in one pass over the
/// calibration set. Layers that consume the same upstream activation share
/// one reference-counted capture, so sibling adapters see the identical
/// object.
pub fn capture_all_layers(
    model: &ToyModel,
    cal: &CalibrationSet,
) -> Result<Vec<Arc<ActivationCapture>>> {
    (0..model.num_layers())
        .map(|li| forward_collect(model, cal, li).map(Arc::new))
        .collect()
}

/// Streaming Gram accumulation: `sum x x^T` over a sample stream, in stream
/// order. The stacked matrix is not retained.
pub fn gram_accumulate<I>(dim: usize, stream: I) -> Result<ActivationCapture>
where
    I: IntoIterator<Item = Vec<f64>>,
{
    if dim == 0 {
        return Err(Error::Param("gram dimension must be positive".into()));
    }
    let mut gram = Matrix::zeros(dim, dim);
    let mut count = 0usize;
    for (idx, x) in stream.into_iter().enumerate() {
        if x.len() != dim {
            return Err(Error::Validation(format!(
                "sample {idx} has dimension {}, stream began with {dim}",
                x.len()
            )));
        }
        for i in 0..dim {
            if x[i] == 0.0 {
                continue;
            }
            for j in 0..dim {
                let v = gram.get(i, j) + x[i] * x[j];
                gram.set(i, j, v);
            }
        }
        count += 1;
    }
    Ok(ActivationCapture {
        layer_index: 0,
        x_pre: None,
        gram,
        sample_count: count,
    })
}

/// Full left singular basis of the captured activations, from the Gram
/// matrix: eigenvectors of `C` with `sigma_i = sqrt(max(lambda_i, 0))`.
pub fn left_basis_from_gram(cap: &ActivationCapture) -> Result<(Matrix, Vec<f64>)> {
    let (eigs, vecs) = sym_eigen(&cap.gram)?;
    let sigma = eigs.iter().map(|&l| l.max(0.0).sqrt()).collect();
    Ok((vecs, sigma))
}

/// Last `r` columns of the full left basis: the directions carrying the
/// smallest singular values, used as the approximate null space.
pub fn extract_null_basis(u: &Matrix, sigma: &[f64], r: usize) -> Result<Matrix> {
    let d = u.cols();
    if u.rows() != d || sigma.len() != d {
        return Err(Error::Validation(format!(
            "expected a full {0}x{0} basis with {0} singular values, got {1}x{2} and {3}",
            u.rows(),
            u.rows(),
            d,
            sigma.len()
        )));
    }
    if r == 0 || r >= d {
        return Err(Error::Param(format!(
            "null-space rank must satisfy 1 <= r < {d}, got {r}"
        )));
    }
    Ok(u.columns(d - r, d))
}

/// JSON sidecar stored next to a capture or calibration NFM file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CaptureSidecar {
    pub layer_index: usize,
    pub sample_count: usize,
    pub seed: i64,
    pub generator_spec: String,
    pub has_x_pre: bool,
}

fn sidecar_path(nfm_path: &Path) -> std::path::PathBuf {
    nfm_path.with_extension("json")
}

/// Writes a capture as an NFM1 matrix (`x_pre` when present, else the Gram
/// matrix) plus its JSON sidecar.
pub fn save_capture(
    path: &Path,
    cap: &ActivationCapture,
    seed: i64,
    generator_spec: &str,
) -> Result<()> {
    let matrix = cap.x_pre.as_ref().unwrap_or(&cap.gram);
    nfm::write_file(path, matrix)?;
    let sidecar = CaptureSidecar {
        layer_index: cap.layer_index,
        sample_count: cap.sample_count,
        seed,
        generator_spec: generator_spec.to_string(),
        has_x_pre: cap.x_pre.is_some(),
    };
    fs::write(
        sidecar_path(path),
        serde_json::to_string_pretty(&sidecar)?,
    )?;
    Ok(())
}

/// Reads a capture back; recomputes the Gram matrix when the file holds
/// stacked activations.
pub fn load_capture(path: &Path) -> Result<(ActivationCapture, CaptureSidecar)> {
    let matrix = nfm::read_file(path)?;
    let sidecar: CaptureSidecar = serde_json::from_str(&fs::read_to_string(sidecar_path(path))?)?;
    let cap = if sidecar.has_x_pre {
        let gram = matrix.matmul(&matrix.transpose())?;
        ActivationCapture {
            layer_index: sidecar.layer_index,
            sample_count: matrix.cols(),
            x_pre: Some(matrix),
            gram,
        }
    } else {
        if matrix.rows() != matrix.cols() {
            return Err(Error::Validation(format!(
                "gram-only capture must hold a square matrix, got {}x{}",
                matrix.rows(),
                matrix.cols()
            )));
        }
        ActivationCapture {
            layer_index: sidecar.layer_index,
            sample_count: sidecar.sample_count,
            x_pre: None,
            gram: matrix,
        }
    };
    Ok((cap, sidecar))
}

/// Seeded toy model with the default architecture (32, 48, 32, 16) and tanh
/// nonlinearity; weights are Gaussian with std `1/sqrt(fan_in)`.
pub fn default_toy_model(seed: u64) -> ToyModel {
    toy_model_with_dims(&[32, 48, 32, 16], Nonlinearity::Tanh, seed)
}

/// Seeded toy model for arbitrary dims.
pub fn toy_model_with_dims(dims: &[usize], nonlinearity: Nonlinearity, seed: u64) -> ToyModel {
    let mut r = rng::rng(seed, streams::MODEL_INIT);
    let weights = dims
        .windows(2)
        .map(|w| rng::gaussian_matrix(&mut r, w[1], w[0], 1.0 / (w[0] as f64).sqrt()))
        .collect();
    ToyModel::new(dims.to_vec(), weights, nonlinearity).expect("dims chain by construction")
}
