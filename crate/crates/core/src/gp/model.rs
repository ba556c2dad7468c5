use super::data::TrainingData;
use super::kernel::KernelParams;
use super::linalg::{jittered_cholesky, symmetrize};
use crate::error::{Error, Result};
use nalgebra::{DMatrix, DVector};

/// Gaussian belief over the latent function at a batch of points.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorGaussian {
    pub mean: DVector<f64>,
    pub covariance: DMatrix<f64>,
}

/// Cholesky factor of the training covariance extended by a batch.
#[derive(Debug, Clone)]
pub struct AugmentedFactor {
    /// Lower-triangular `(N + Q) × (N + Q)` factor of `M_aug`.
    pub factor: DMatrix<f64>,
    /// Diagonal jitter applied to the batch block.
    pub batch_jitter: f64,
}

/// Exact GP regressor; immutable once built.
#[derive(Debug, Clone)]
pub struct GpModel {
    data: TrainingData,
    kernel: KernelParams,
    points: Vec<Vec<f64>>,
    factor: DMatrix<f64>,
    jitter: f64,
    weights: DVector<f64>,
}

/// Intermediate quantities of a posterior evaluation, kept for gradients.
#[derive(Debug, Clone)]
pub(crate) struct PosteriorParts {
    pub rows: Vec<Vec<f64>>,
    /// `L⁻¹ K(x_D, x)`, N × Q.
    pub v: DMatrix<f64>,
    pub posterior: PosteriorGaussian,
}

pub(crate) fn rows_of(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

impl GpModel {
    pub fn new(data: TrainingData, kernel: KernelParams) -> Result<Self> {
        kernel.validate()?;
        if kernel.dim() != data.dim() {
            return Err(Error::invalid(format!(
                "kernel has {} lengthscales but data has {} dimensions",
                kernel.dim(),
                data.dim()
            )));
        }
        let points = rows_of(data.inputs());
        let m_d = Self::training_covariance(&points, data.noise_variances(), &kernel);
        let (chol, jitter) = jittered_cholesky(&m_d, kernel.amplitude)?;
        let weights = chol.solve(data.outputs());
        let factor = chol.unpack();
        Ok(GpModel {
            data,
            kernel,
            points,
            factor,
            jitter,
            weights,
        })
    }

    /// Model without observations; its posterior is the prior.
    pub fn prior(kernel: KernelParams) -> Result<Self> {
        let dim = kernel.dim();
        Self::new(TrainingData::empty(dim), kernel)
    }

    pub(crate) fn training_covariance(
        points: &[Vec<f64>],
        noise: &DVector<f64>,
        kernel: &KernelParams,
    ) -> DMatrix<f64> {
        let n = points.len();
        let mut m = DMatrix::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = kernel.amplitude + noise[i];
            for j in 0..i {
                let k = kernel.eval(&points[i], &points[j]);
                m[(i, j)] = k;
                m[(j, i)] = k;
            }
        }
        m
    }

    pub fn data(&self) -> &TrainingData {
        &self.data
    }

    pub fn kernel(&self) -> &KernelParams {
        &self.kernel
    }

    pub fn amplitude(&self) -> f64 {
        self.kernel.amplitude
    }

    pub fn dim(&self) -> usize {
        self.kernel.dim()
    }

    /// Lower Cholesky factor of `M_D` (including jitter).
    pub fn factor(&self) -> &DMatrix<f64> {
        &self.factor
    }

    /// Diagonal jitter added to `M_D` before factorizing.
    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    /// `M_D = K(x_D, x_D) + diag(σ²(x_D))`, without jitter.
    pub fn training_matrix(&self) -> DMatrix<f64> {
        Self::training_covariance(&self.points, self.data.noise_variances(), &self.kernel)
    }

    pub fn cross_covariance(&self, a: &[Vec<f64>], b: &[Vec<f64>]) -> DMatrix<f64> {
        DMatrix::from_fn(a.len(), b.len(), |i, j| self.kernel.eval(&a[i], &b[j]))
    }

    fn check_points(&self, points: &DMatrix<f64>) -> Result<()> {
        if points.nrows() == 0 {
            return Err(Error::invalid("need at least one test point"));
        }
        if points.ncols() != self.dim() {
            return Err(Error::invalid(format!(
                "test points have {} columns, model has {} dimensions",
                points.ncols(),
                self.dim()
            )));
        }
        if points.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("test points must be finite"));
        }
        Ok(())
    }

    pub(crate) fn posterior_parts(&self, test_points: &DMatrix<f64>) -> Result<PosteriorParts> {
        self.check_points(test_points)?;
        let rows = rows_of(test_points);
        let q = rows.len();
        let mut k_xx = self.cross_covariance(&rows, &rows);
        for i in 0..q {
            k_xx[(i, i)] = self.kernel.amplitude;
        }
        if self.points.is_empty() {
            return Ok(PosteriorParts {
                rows,
                v: DMatrix::zeros(0, q),
                posterior: PosteriorGaussian {
                    mean: DVector::zeros(q),
                    covariance: k_xx,
                },
            });
        }
        let k_dx = self.cross_covariance(&self.points, &rows);
        let mean = k_dx.tr_mul(&self.weights);
        let v = self
            .factor
            .solve_lower_triangular(&k_dx)
            .ok_or_else(|| Error::numerical("triangular solve with training factor failed"))?;
        let mut covariance = &k_xx - v.tr_mul(&v);
        symmetrize(&mut covariance);
        Ok(PosteriorParts {
            rows,
            v,
            posterior: PosteriorGaussian { mean, covariance },
        })
    }

    /// Posterior mean and covariance at `test_points` (Q × d).
    pub fn posterior(&self, test_points: &DMatrix<f64>) -> Result<PosteriorGaussian> {
        Ok(self.posterior_parts(test_points)?.posterior)
    }

    pub(crate) fn check_batch_noise(q: usize, batch_noise: &[f64]) -> Result<()> {
        if batch_noise.len() != q {
            return Err(Error::invalid(format!(
                "{} noise variances for a batch of {q}",
                batch_noise.len()
            )));
        }
        if batch_noise.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::invalid(
                "batch noise variances must be finite and nonnegative",
            ));
        }
        Ok(())
    }

    /// Factor of `C + diag(noise) + jitter`, the batch block of the extended
    /// factorization. Returns `(L_S, jitter)`.
    pub(crate) fn batch_block(
        &self,
        parts: &PosteriorParts,
        batch_noise: &[f64],
    ) -> Result<(DMatrix<f64>, f64)> {
        let mut schur = parts.posterior.covariance.clone();
        for (i, s) in batch_noise.iter().enumerate() {
            schur[(i, i)] += s;
        }
        let (chol, jitter) = jittered_cholesky(&schur, self.kernel.amplitude)?;
        Ok((chol.unpack(), jitter))
    }

    /// Cholesky factor of `M_aug` built by extending the cached factor of
    /// `M_D` with one block for the batch.
    pub fn augment_factorization(
        &self,
        batch: &DMatrix<f64>,
        batch_noise: &[f64],
    ) -> Result<AugmentedFactor> {
        let parts = self.posterior_parts(batch)?;
        Self::check_batch_noise(parts.rows.len(), batch_noise)?;
        let (block, batch_jitter) = self.batch_block(&parts, batch_noise)?;
        let n = self.points.len();
        let q = parts.rows.len();
        let mut factor = DMatrix::zeros(n + q, n + q);
        factor.view_mut((0, 0), (n, n)).copy_from(&self.factor);
        factor
            .view_mut((n, 0), (q, n))
            .copy_from(&parts.v.transpose());
        factor.view_mut((n, n), (q, q)).copy_from(&block);
        Ok(AugmentedFactor {
            factor,
            batch_jitter,
        })
    }

    /// `C_aug` from parts already computed; also returns the batch jitter.
    pub(crate) fn augmented_from_parts(
        &self,
        parts: &PosteriorParts,
        batch_noise: &[f64],
    ) -> Result<(DMatrix<f64>, f64)> {
        Self::check_batch_noise(parts.rows.len(), batch_noise)?;
        let (block, jitter) = self.batch_block(parts, batch_noise)?;
        // bottom block of L_aug⁻¹ K(x_aug, x) is L_S⁻¹ C
        let c = &parts.posterior.covariance;
        let g = block
            .solve_lower_triangular(c)
            .ok_or_else(|| Error::numerical("triangular solve with batch block failed"))?;
        let mut c_aug = c - g.tr_mul(&g);
        symmetrize(&mut c_aug);
        Ok((c_aug, jitter))
    }

    /// Covariance at `batch` after conditioning on noisy observations there.
    pub fn augmented_covariance(
        &self,
        batch: &DMatrix<f64>,
        batch_noise: &[f64],
    ) -> Result<DMatrix<f64>> {
        let parts = self.posterior_parts(batch)?;
        Ok(self.augmented_from_parts(&parts, batch_noise)?.0)
    }

    /// Chain rule from adjoints of the posterior mean and covariance to the
    /// batch coordinates. `cov_bar` is symmetrized first.
    pub(crate) fn posterior_adjoint(
        &self,
        parts: &PosteriorParts,
        mean_bar: &DVector<f64>,
        cov_bar: &DMatrix<f64>,
    ) -> DMatrix<f64> {
        let q = parts.rows.len();
        let d = self.dim();
        let mut cb = cov_bar.clone();
        symmetrize(&mut cb);
        let mut grad = DMatrix::zeros(q, d);
        let mut row = vec![0.0; d];
        // M_D⁻¹ K(x_D, x) C̄
        let b_cb = if self.points.is_empty() {
            DMatrix::zeros(0, q)
        } else {
            let b = self
                .factor
                .tr_solve_lower_triangular(&parts.v)
                .expect("training factor has a nonzero diagonal");
            b * &cb
        };
        for (qi, xq) in parts.rows.iter().enumerate() {
            row.iter_mut().for_each(|v| *v = 0.0);
            for (ni, xn) in self.points.iter().enumerate() {
                let coef = mean_bar[qi] * self.weights[ni] - 2.0 * b_cb[(ni, qi)];
                if coef != 0.0 {
                    self.kernel.accumulate_grad(xq, xn, coef, &mut row);
                }
            }
            for (j, xj) in parts.rows.iter().enumerate() {
                if j != qi && cb[(qi, j)] != 0.0 {
                    self.kernel
                        .accumulate_grad(xq, xj, 2.0 * cb[(qi, j)], &mut row);
                }
            }
            for (k, v) in row.iter().enumerate() {
                grad[(qi, k)] = *v;
            }
        }
        grad
    }
}
