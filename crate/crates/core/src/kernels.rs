//! Gaussian kernels, stacked kernel vectors and the block-diagonal
//! multikernel Gram matrix that defines the K-metric on coefficient vectors.
//!
//! A coefficient vector `w` of length `rQ` stacks one block of `r` weights
//! per kernel. The estimator output at `x` is the Euclidean product
//! `wᵀκ(x)`, which equals `⟨w, K⁻¹κ(x)⟩_K` in the K-metric.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::dictionary::Dictionary;
use crate::error::{check_len, Error, Result};

/// Gaussian kernel `exp(-‖x1 - x2‖² / (2ζ²))` with bandwidth `ζ > 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianKernel {
    bandwidth: f64,
}

impl GaussianKernel {
    pub fn new(bandwidth: f64) -> Result<Self> {
        if !(bandwidth > 0.0 && bandwidth.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "kernel bandwidth must be positive and finite, got {bandwidth}"
            )));
        }
        Ok(Self { bandwidth })
    }

    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    pub fn eval(&self, x1: &[f64], x2: &[f64]) -> Result<f64> {
        check_len(x1.len(), x2.len())?;
        Ok(self.eval_unchecked(x1, x2))
    }

    #[inline]
    pub(crate) fn eval_unchecked(&self, x1: &[f64], x2: &[f64]) -> f64 {
        let d2: f64 = x1.iter().zip(x2).map(|(a, b)| (a - b) * (a - b)).sum();
        (-d2 / (2.0 * self.bandwidth * self.bandwidth)).exp()
    }
}

/// Ordered list of `Q ≥ 1` Gaussian kernels sharing one dictionary.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelBank {
    kernels: Vec<GaussianKernel>,
}

impl KernelBank {
    pub fn new(kernels: Vec<GaussianKernel>) -> Result<Self> {
        if kernels.is_empty() {
            return Err(Error::InvalidParameter(
                "a kernel bank needs at least one kernel".into(),
            ));
        }
        Ok(Self { kernels })
    }

    pub fn from_bandwidths(bandwidths: &[f64]) -> Result<Self> {
        let kernels = bandwidths
            .iter()
            .map(|&b| GaussianKernel::new(b))
            .collect::<Result<Vec<_>>>()?;
        Self::new(kernels)
    }

    /// Number of kernels `Q`.
    pub fn len(&self) -> usize {
        self.kernels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.kernels.is_empty()
    }

    pub fn kernels(&self) -> &[GaussianKernel] {
        &self.kernels
    }

    pub fn bandwidths(&self) -> Vec<f64> {
        self.kernels.iter().map(|k| k.bandwidth).collect()
    }

    /// Largest kernel value between two points over all kernels.
    pub fn coherence(&self, x1: &[f64], x2: &[f64]) -> f64 {
        self.kernels
            .iter()
            .map(|k| k.eval_unchecked(x1, x2))
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Stacked kernel vector `κ(x)`; entry `q·r + ℓ` is `κ_q(x, x̄_ℓ)`.
    pub fn kernel_vector(&self, dict: &Dictionary, x: &[f64]) -> Result<DVector<f64>> {
        if dict.is_empty() {
            return Err(Error::EmptyDictionary);
        }
        check_len(dict.dim(), x.len())?;
        let r = dict.len();
        let mut out = DVector::zeros(r * self.len());
        for (q, kernel) in self.kernels.iter().enumerate() {
            for (l, center) in dict.centers().iter().enumerate() {
                out[q * r + l] = kernel.eval_unchecked(x, center);
            }
        }
        Ok(out)
    }
}

/// Per-kernel Gram blocks, their block-diagonal composite `K`, and a cached
/// Cholesky factorization of `K + γI`.
///
/// Every K-metric operation in the crate uses `K + γI`.
#[derive(Debug, Clone)]
pub struct GramMatrix {
    centers: usize,
    blocks: Vec<DMatrix<f64>>,
    composite: DMatrix<f64>,
    gamma: f64,
    chol: Cholesky<f64, Dyn>,
}

impl GramMatrix {
    pub fn build(bank: &KernelBank, dict: &Dictionary, gamma: f64) -> Result<Self> {
        if dict.is_empty() {
            return Err(Error::EmptyDictionary);
        }
        if !(gamma >= 0.0 && gamma.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "regularization must be nonnegative, got {gamma}"
            )));
        }
        let r = dict.len();
        let centers = dict.centers();
        let blocks: Vec<DMatrix<f64>> = bank
            .kernels()
            .iter()
            .map(|kernel| {
                let mut block = DMatrix::zeros(r, r);
                for i in 0..r {
                    block[(i, i)] = kernel.eval_unchecked(&centers[i], &centers[i]);
                    for j in 0..i {
                        let v = kernel.eval_unchecked(&centers[i], &centers[j]);
                        block[(i, j)] = v;
                        block[(j, i)] = v;
                    }
                }
                block
            })
            .collect();
        Self::from_blocks(blocks, gamma)
    }

    /// Builds from explicit symmetric blocks of equal size.
    pub fn from_blocks(blocks: Vec<DMatrix<f64>>, gamma: f64) -> Result<Self> {
        let r = blocks
            .first()
            .map(|b| b.nrows())
            .ok_or(Error::EmptyDictionary)?;
        if r == 0 {
            return Err(Error::EmptyDictionary);
        }
        for b in &blocks {
            check_len(r, b.nrows())?;
            check_len(r, b.ncols())?;
        }
        let n = r * blocks.len();
        let mut composite = DMatrix::zeros(n, n);
        for (q, b) in blocks.iter().enumerate() {
            composite.view_mut((q * r, q * r), (r, r)).copy_from(b);
        }
        let regularized = &composite + DMatrix::identity(n, n) * gamma;
        let chol = Cholesky::new(regularized).ok_or(Error::Factorization {
            centers: r,
            kernels: blocks.len(),
            gamma,
        })?;
        Ok(Self {
            centers: r,
            blocks,
            composite,
            gamma,
            chol,
        })
    }

    /// Dimension `rQ` of coefficient vectors.
    pub fn dim(&self) -> usize {
        self.composite.nrows()
    }

    pub fn centers(&self) -> usize {
        self.centers
    }

    pub fn kernels(&self) -> usize {
        self.blocks.len()
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn blocks(&self) -> &[DMatrix<f64>] {
        &self.blocks
    }

    /// Unregularized block-diagonal `K`.
    pub fn composite(&self) -> &DMatrix<f64> {
        &self.composite
    }

    /// `K + γI`, the matrix defining the metric.
    pub fn metric(&self) -> DMatrix<f64> {
        let n = self.dim();
        &self.composite + DMatrix::identity(n, n) * self.gamma
    }

    /// Lower-triangular factor `L` with `LLᵀ = K + γI`.
    pub fn cholesky_factor(&self) -> DMatrix<f64> {
        self.chol.l()
    }

    /// `aᵀ(K + γI)b`.
    pub fn k_inner(&self, a: &DVector<f64>, b: &DVector<f64>) -> Result<f64> {
        check_len(self.dim(), a.len())?;
        check_len(self.dim(), b.len())?;
        Ok(self.k_inner_unchecked(a, b))
    }

    pub fn k_norm(&self, a: &DVector<f64>) -> Result<f64> {
        Ok(self.k_inner(a, a)?.max(0.0).sqrt())
    }

    pub(crate) fn k_inner_unchecked(&self, a: &DVector<f64>, b: &DVector<f64>) -> f64 {
        // Blockwise, skipping the zero off-diagonal blocks.
        let r = self.centers;
        let mut acc = 0.0;
        for (q, block) in self.blocks.iter().enumerate() {
            let aq = a.rows(q * r, r);
            let bq = b.rows(q * r, r);
            acc += aq.dot(&(block * bq));
        }
        acc + self.gamma * a.dot(b)
    }

    /// Solves `(K + γI)u = v` with the cached factorization.
    pub fn solve(&self, v: &DVector<f64>) -> Result<DVector<f64>> {
        check_len(self.dim(), v.len())?;
        Ok(self.chol.solve(v))
    }

    /// Principal submatrix of `K + γI` on the given coordinates.
    pub fn metric_submatrix(&self, coords: &[usize]) -> DMatrix<f64> {
        let n = coords.len();
        let r = self.centers;
        DMatrix::from_fn(n, n, |a, b| {
            let (ia, ib) = (coords[a], coords[b]);
            let (qa, qb) = (ia / r, ib / r);
            let k = if qa == qb {
                self.blocks[qa][(ia % r, ib % r)]
            } else {
                0.0
            };
            if ia == ib {
                k + self.gamma
            } else {
                k
            }
        })
    }
}

/// Estimator output `⟨w, κ(x)⟩`.
pub fn filter_output(w: &DVector<f64>, kx: &DVector<f64>) -> Result<f64> {
    check_len(w.len(), kx.len())?;
    Ok(w.dot(kx))
}
