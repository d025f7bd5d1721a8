//! Natural cubic smoothing spline with GCV smoothing-parameter selection.
//!
//! For knots `x_1 < ... < x_n` the fitted values minimise
//! `Σ (y_i - g_i)^2 + λ gᵀ K g` where `K = Q R⁻¹ Qᵀ` is the roughness matrix
//! of the natural cubic spline interpolating `g`. Writing `K = U diag(d) Uᵀ`
//! (the Demmler-Reinsch basis) the smoother is `U diag(1/(1+λd)) Uᵀ`, so once
//! the eigendecomposition is cached every fit costs two `n × n` products and
//! GCV over the whole λ grid is O(n) per grid point.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};

/// Size of the log-spaced smoothing-parameter grid.
pub const GCV_GRID_POINTS: usize = 50;

/// Minimum number of knots accepted.
pub const MIN_POINTS: usize = 8;

/// Reusable smoother for one set of knots.
#[derive(Debug, Clone)]
pub struct SplineSmoother {
    n: usize,
    /// Eigenvectors of K, row-major: `basis[i * n + k]` = U[i][k].
    basis: Vec<f64>,
    eigenvalues: Vec<f64>,
    lambdas: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplineFit {
    pub fitted: Vec<f64>,
    pub lambda: f64,
    pub lambda_index: usize,
    pub gcv: f64,
    /// Effective degrees of freedom, `tr(S_λ)`.
    pub edf: f64,
    /// Selected λ is an end point of the grid.
    pub at_boundary: bool,
    /// Data lies in the null space of the penalty (a straight line).
    pub linear_data: bool,
}

impl SplineSmoother {
    pub fn new(x: &[f64]) -> Result<Self> {
        let n = x.len();
        if n < MIN_POINTS {
            return Err(Error::InvalidArgument(format!(
                "smoothing spline needs >= {MIN_POINTS} points, got {n}"
            )));
        }
        if x.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidArgument(
                "spline knots must be strictly increasing".into(),
            ));
        }
        let h: Vec<f64> = x.windows(2).map(|w| w[1] - w[0]).collect();
        let m = n - 2;
        // Q: n × (n-2), R: (n-2) × (n-2) tridiagonal
        let mut q = DMatrix::<f64>::zeros(n, m);
        let mut r = DMatrix::<f64>::zeros(m, m);
        for j in 0..m {
            q[(j, j)] = 1.0 / h[j];
            q[(j + 1, j)] = -1.0 / h[j] - 1.0 / h[j + 1];
            q[(j + 2, j)] = 1.0 / h[j + 1];
            r[(j, j)] = (h[j] + h[j + 1]) / 3.0;
            if j + 1 < m {
                r[(j, j + 1)] = h[j + 1] / 6.0;
                r[(j + 1, j)] = h[j + 1] / 6.0;
            }
        }
        let chol = r.cholesky().ok_or_else(|| {
            Error::InvalidArgument("spline band matrix not positive definite".into())
        })?;
        let rinv_qt = chol.solve(&q.transpose());
        let mut k = &q * rinv_qt;
        // symmetrise against round-off
        let kt = k.transpose();
        k = (k + kt) * 0.5;
        let eig = SymmetricEigen::new(k);

        let mut eigenvalues: Vec<f64> = eig.eigenvalues.iter().map(|d| d.max(0.0)).collect();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| eigenvalues[a].total_cmp(&eigenvalues[b]));

        // K annihilates constants and lines exactly. Replace the two null
        // eigenvectors by an exact orthonormal basis of span{1, x} and
        // re-orthogonalise the rest against it, so lines pass through untouched.
        let mut vecs: Vec<Vec<f64>> = order
            .iter()
            .map(|&k| eig.eigenvectors.column(k).iter().copied().collect())
            .collect();
        let xm = x.iter().sum::<f64>() / n as f64;
        vecs[0] = vec![1.0; n];
        vecs[1] = x.iter().map(|v| v - xm).collect();
        for k in 0..n {
            for _ in 0..2 {
                for j in 0..k {
                    let dot: f64 = vecs[k].iter().zip(&vecs[j]).map(|(a, b)| a * b).sum();
                    let (head, tail) = vecs.split_at_mut(k);
                    for (a, b) in tail[0].iter_mut().zip(&head[j]) {
                        *a -= dot * b;
                    }
                }
            }
            let norm = vecs[k].iter().map(|a| a * a).sum::<f64>().sqrt();
            vecs[k].iter_mut().for_each(|a| *a /= norm);
        }
        let sorted: Vec<f64> = order.iter().map(|&k| eigenvalues[k]).collect();
        eigenvalues = sorted;
        eigenvalues[0] = 0.0;
        eigenvalues[1] = 0.0;
        let mut basis = vec![0.0; n * n];
        for i in 0..n {
            for (kk, v) in vecs.iter().enumerate() {
                basis[i * n + kk] = v[i];
            }
        }

        let d_max = eigenvalues.iter().copied().fold(0.0, f64::max);
        let d_min = eigenvalues[2].max(d_max * 1e-14);
        let lo = (1e-2 / d_max).ln();
        let hi = (1e2 / d_min).ln();
        let lambdas = (0..GCV_GRID_POINTS)
            .map(|i| (lo + (hi - lo) * i as f64 / (GCV_GRID_POINTS - 1) as f64).exp())
            .collect();
        Ok(Self {
            n,
            basis,
            eigenvalues,
            lambdas,
        })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn lambdas(&self) -> &[f64] {
        &self.lambdas
    }

    /// GCV-selected fit. Ties go to the larger λ.
    pub fn smooth(&self, y: &[f64]) -> Result<SplineFit> {
        let z = self.project(y)?;
        let n = self.n as f64;
        let shrink = |lambda: f64, d: f64| lambda * d / (1.0 + lambda * d);

        let total: f64 = y.iter().map(|v| v * v).sum();
        let last = GCV_GRID_POINTS - 1;
        let rough: f64 = z
            .iter()
            .zip(&self.eigenvalues)
            .map(|(zk, d)| (shrink(self.lambdas[last], *d) * zk).powi(2))
            .sum();
        let linear_data = rough <= 1e-20 * total.max(f64::MIN_POSITIVE);

        let criterion = |lambda: f64| {
            let mut rss = 0.0;
            let mut resid_df = 0.0;
            for (zk, &d) in z.iter().zip(&self.eigenvalues) {
                let s = shrink(lambda, d);
                rss += (s * zk).powi(2);
                resid_df += s;
            }
            (n * rss / (resid_df * resid_df), n - resid_df)
        };
        // A straight line is reproduced at every λ, so GCV is round-off there.
        let (idx, gcv, edf) = if linear_data {
            let (g, edf) = criterion(self.lambdas[last]);
            (last, g, edf)
        } else {
            let mut best = (last, f64::INFINITY, 0.0);
            for (idx, &lambda) in self.lambdas.iter().enumerate().rev() {
                let (g, edf) = criterion(lambda);
                if g < best.1 {
                    best = (idx, g, edf);
                }
            }
            best
        };
        let lambda = self.lambdas[idx];

        let fitted = self.apply(&z, lambda);
        if fitted.iter().any(|v| !v.is_finite()) || !gcv.is_finite() {
            return Err(Error::DegenerateFit);
        }
        Ok(SplineFit {
            fitted,
            lambda,
            lambda_index: idx,
            gcv,
            edf,
            at_boundary: idx == 0 || idx == GCV_GRID_POINTS - 1,
            linear_data,
        })
    }

    /// Fit at a fixed smoothing parameter.
    pub fn smooth_with(&self, y: &[f64], lambda: f64) -> Result<Vec<f64>> {
        let z = self.project(y)?;
        Ok(self.apply(&z, lambda))
    }

    fn project(&self, y: &[f64]) -> Result<Vec<f64>> {
        if y.len() != self.n {
            return Err(Error::InvalidArgument(format!(
                "spline expects {} values, got {}",
                self.n,
                y.len()
            )));
        }
        let n = self.n;
        let mut z = vec![0.0; n];
        for (i, &yi) in y.iter().enumerate() {
            let row = &self.basis[i * n..(i + 1) * n];
            for (zk, u) in z.iter_mut().zip(row) {
                *zk += u * yi;
            }
        }
        Ok(z)
    }

    fn apply(&self, z: &[f64], lambda: f64) -> Vec<f64> {
        let n = self.n;
        let sz: Vec<f64> = z
            .iter()
            .zip(&self.eigenvalues)
            .map(|(zk, d)| zk / (1.0 + lambda * d))
            .collect();
        (0..n)
            .map(|i| {
                self.basis[i * n..(i + 1) * n]
                    .iter()
                    .zip(&sz)
                    .map(|(u, s)| u * s)
                    .sum()
            })
            .collect()
    }
}
