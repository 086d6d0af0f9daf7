use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{cholesky, Matrix};
use crate::scalar::{dot, Scalar};

/// Return covariance of the investment universe.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "", rename_all = "snake_case")]
pub enum Covariance<S: Scalar> {
    Dense(Matrix<S>),
    /// `F · factor_cov · Fᵀ + diag(idio_var)`
    Factor {
        loadings: Matrix<S>,
        factor_cov: Matrix<S>,
        idio_var: Vec<S>,
    },
}

impl<S: Scalar> Covariance<S> {
    pub fn num_assets(&self) -> usize {
        match self {
            Covariance::Dense(m) => m.rows(),
            Covariance::Factor { loadings, .. } => loadings.rows(),
        }
    }

    /// The dense `n × n` matrix. Only for small universes and tests.
    pub fn to_dense(&self) -> Matrix<S> {
        match self {
            Covariance::Dense(m) => m.clone(),
            Covariance::Factor {
                loadings,
                factor_cov,
                idio_var,
            } => {
                let mut s = loadings.matmul(factor_cov).matmul(&loadings.transpose());
                for (i, &d) in idio_var.iter().enumerate() {
                    s[(i, i)] = s[(i, i)] + d;
                }
                s
            }
        }
    }

    pub fn scaled(&self, k: S) -> Self {
        match self {
            Covariance::Dense(m) => Covariance::Dense(m.scale(k)),
            Covariance::Factor {
                loadings,
                factor_cov,
                idio_var,
            } => Covariance::Factor {
                loadings: loadings.clone(),
                factor_cov: factor_cov.scale(k),
                idio_var: idio_var.iter().map(|&v| v * k).collect(),
            },
        }
    }
}

/// Expected returns and covariance of the `n` assets (annual rates).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "", deny_unknown_fields)]
pub struct MarketModel<S: Scalar> {
    pub mu: Vec<S>,
    pub cov: Covariance<S>,
    #[serde(default)]
    pub risk_free_index: Option<usize>,
}

impl<S: Scalar> MarketModel<S> {
    pub fn new(mu: Vec<S>, cov: Covariance<S>) -> Self {
        Self {
            mu,
            cov,
            risk_free_index: None,
        }
    }

    #[must_use]
    pub fn with_risk_free(mut self, index: usize) -> Self {
        self.risk_free_index = Some(index);
        self
    }

    pub fn num_assets(&self) -> usize {
        self.mu.len()
    }

    /// Risk-free rate, if a riskless asset is designated.
    pub fn risk_free_rate(&self) -> Option<S> {
        self.risk_free_index.and_then(|i| self.mu.get(i).copied())
    }
}

/// A square root `L` of the covariance, `Σ = L Lᵀ`.
///
/// The factor form keeps the loadings block and the idiosyncratic diagonal
/// separate so that `Lᵀx` costs `O(n·m + n)` rather than `O(n²)`.
#[derive(Debug, Clone, PartialEq)]
pub enum CovFactor<S: Scalar> {
    /// Lower-triangular Cholesky factor.
    Dense(Matrix<S>),
    /// `L = [G, diag(d)]` with `G = F · chol(factor_cov)` and `d = √idio_var`.
    Factor { g: Matrix<S>, d: Vec<S> },
}

impl<S: Scalar> CovFactor<S> {
    pub fn num_assets(&self) -> usize {
        match self {
            CovFactor::Dense(l) => l.rows(),
            CovFactor::Factor { d, .. } => d.len(),
        }
    }

    /// Number of columns of `L` (`n` dense, `m + n` factor).
    pub fn width(&self) -> usize {
        match self {
            CovFactor::Dense(l) => l.cols(),
            CovFactor::Factor { g, d } => g.cols() + d.len(),
        }
    }

    /// `Lᵀ x`
    pub fn apply_t(&self, x: &[S]) -> Vec<S> {
        let mut out = Vec::with_capacity(self.width());
        self.apply_t_into(x, &mut out);
        out
    }

    /// `Lᵀ x` written into `out` (cleared first).
    pub fn apply_t_into(&self, x: &[S], out: &mut Vec<S>) {
        let l = match self {
            CovFactor::Dense(l) => l,
            CovFactor::Factor { g, .. } => g,
        };
        out.clear();
        out.resize(l.cols(), S::zero());
        for (i, &xi) in x.iter().enumerate() {
            if xi == S::zero() {
                continue;
            }
            for (o, &a) in out.iter_mut().zip(l.row(i)) {
                *o = *o + a * xi;
            }
        }
        if let CovFactor::Factor { d, .. } = self {
            out.extend(d.iter().zip(x).map(|(&di, &xi)| di * xi));
        }
    }

    /// `L y`
    pub fn apply(&self, y: &[S]) -> Vec<S> {
        match self {
            CovFactor::Dense(l) => l.matvec(y),
            CovFactor::Factor { g, d } => {
                let m = g.cols();
                let mut out = g.matvec(&y[..m]);
                for (o, (&di, &yi)) in out.iter_mut().zip(d.iter().zip(&y[m..])) {
                    *o = *o + di * yi;
                }
                out
            }
        }
    }

    /// `xᵀ Σ x`
    pub fn quad(&self, x: &[S]) -> S {
        let y = self.apply_t(x);
        dot(&y, &y)
    }

    /// `xᵀ Σ x` using `scratch` for `Lᵀx`.
    pub fn quad_with(&self, x: &[S], scratch: &mut Vec<S>) -> S {
        self.apply_t_into(x, scratch);
        dot(scratch, scratch)
    }

    /// `Σ x`
    pub fn cov_times(&self, x: &[S]) -> Vec<S> {
        self.apply(&self.apply_t(x))
    }

    /// Nonzero entries of each row of `Lᵀ`, as `(asset, coefficient)` lists.
    pub fn transpose_rows(&self) -> Vec<Vec<(usize, S)>> {
        match self {
            CovFactor::Dense(l) => (0..l.cols())
                .map(|r| {
                    (0..l.rows())
                        .filter_map(|j| {
                            let v = l[(j, r)];
                            (v != S::zero()).then_some((j, v))
                        })
                        .collect()
                })
                .collect(),
            CovFactor::Factor { g, d } => {
                let mut rows: Vec<Vec<(usize, S)>> = (0..g.cols())
                    .map(|r| {
                        (0..g.rows())
                            .filter_map(|j| {
                                let v = g[(j, r)];
                                (v != S::zero()).then_some((j, v))
                            })
                            .collect()
                    })
                    .collect();
                rows.extend(d.iter().enumerate().map(|(j, &v)| {
                    if v != S::zero() {
                        vec![(j, v)]
                    } else {
                        Vec::new()
                    }
                }));
                rows
            }
        }
    }

    pub fn to_dense_factor(&self) -> Matrix<S> {
        match self {
            CovFactor::Dense(l) => l.clone(),
            CovFactor::Factor { g, d } => {
                let (n, m) = (g.rows(), g.cols());
                let mut l = Matrix::zeros(n, m + n);
                for i in 0..n {
                    for k in 0..m {
                        l[(i, k)] = g[(i, k)];
                    }
                    l[(i, m + i)] = d[i];
                }
                l
            }
        }
    }

    #[must_use]
    pub fn scaled(&self, k: S) -> Self {
        let r = k.sqrt();
        match self {
            CovFactor::Dense(l) => CovFactor::Dense(l.scale(r)),
            CovFactor::Factor { g, d } => CovFactor::Factor {
                g: g.scale(r),
                d: d.iter().map(|&v| v * r).collect(),
            },
        }
    }
}

/// Matrix square root of the market covariance without forming `F·Φ·Fᵀ`.
pub fn expand_covariance<S: Scalar>(cov: &Covariance<S>) -> Result<CovFactor<S>> {
    match cov {
        Covariance::Dense(sigma) => {
            if !sigma.is_square() {
                return Err(Error::Dimension("covariance must be square".into()));
            }
            let l = cholesky(sigma).map_err(|e| Error::NotPsd {
                index: e.index,
                pivot: e.pivot,
            })?;
            Ok(CovFactor::Dense(l))
        }
        Covariance::Factor {
            loadings,
            factor_cov,
            idio_var,
        } => {
            if loadings.cols() != factor_cov.rows() || !factor_cov.is_square() || idio_var.len() != loadings.rows() {
                return Err(Error::Dimension(format!(
                    "factor model shapes: loadings {}x{}, factor_cov {}x{}, idio_var {}",
                    loadings.rows(),
                    loadings.cols(),
                    factor_cov.rows(),
                    factor_cov.cols(),
                    idio_var.len()
                )));
            }
            if let Some(i) = idio_var.iter().position(|&v| v < S::zero()) {
                return Err(Error::NotPsd {
                    index: i,
                    pivot: idio_var[i].to_f64(),
                });
            }
            let lf = cholesky(factor_cov).map_err(|e| Error::NotPsd {
                index: e.index,
                pivot: e.pivot,
            })?;
            Ok(CovFactor::Factor {
                g: loadings.matmul(&lf),
                d: idio_var.iter().map(|v| v.sqrt()).collect(),
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_square_root() {
        let l = expand_covariance(&Covariance::Dense(Matrix::<f64>::identity(2))).unwrap();
        assert_eq!(l, CovFactor::Dense(Matrix::identity(2)));
    }

    #[test]
    fn diagonal_square_root() {
        let l = expand_covariance(&Covariance::Dense(Matrix::diagonal(&[0.04, 0.04]))).unwrap();
        let CovFactor::Dense(l) = l else { panic!() };
        assert!(l.max_abs_diff(&Matrix::identity(2).scale(0.2)) < 1e-15);
    }

    #[test]
    fn one_factor_block_form() {
        // F Fᵀ σ² + D = [[0.05, 0.01], [0.01, 0.05]] by hand.
        let cov = Covariance::Factor {
            loadings: Matrix::from_rows(&[vec![1.0], vec![1.0]]).unwrap(),
            factor_cov: Matrix::from_rows(&[vec![0.01]]).unwrap(),
            idio_var: vec![0.04, 0.04],
        };
        let l = expand_covariance(&cov).unwrap();
        assert_eq!(l.width(), 3);
        let dense = l.to_dense_factor();
        assert_eq!((dense.rows(), dense.cols()), (2, 3));
        let expected = Matrix::from_rows(&[vec![0.05, 0.01], vec![0.01, 0.05]]).unwrap();
        assert!(dense.matmul(&dense.transpose()).max_abs_diff(&expected) <= 1e-12);
        assert!(cov.to_dense().max_abs_diff(&expected) <= 1e-15);
    }

    #[test]
    fn products_agree_with_dense() {
        let cov = Covariance::Factor {
            loadings: Matrix::from_rows(&[vec![1.0, 0.2], vec![0.5, -0.3], vec![0.0, 1.0]]).unwrap(),
            factor_cov: Matrix::from_rows(&[vec![0.03, 0.01], vec![0.01, 0.02]]).unwrap(),
            idio_var: vec![0.01, 0.02, 0.0],
        };
        let l = expand_covariance(&cov).unwrap();
        let dense = cov.to_dense();
        let x = [0.3, -1.2, 2.0];
        let sx = dense.matvec(&x);
        let q: f64 = sx.iter().zip(&x).map(|(a, b)| a * b).sum();
        assert!((l.quad(&x) - q).abs() < 1e-14);
        for (a, b) in l.cov_times(&x).iter().zip(&sx) {
            assert!((a - b).abs() < 1e-14);
        }
        let rows = l.transpose_rows();
        assert_eq!(rows.len(), 5);
        assert!(rows[4].is_empty());
    }

    #[test]
    fn negative_idiosyncratic_variance_is_rejected() {
        let cov = Covariance::Factor {
            loadings: Matrix::from_rows(&[vec![1.0]]).unwrap(),
            factor_cov: Matrix::from_rows(&[vec![0.01]]).unwrap(),
            idio_var: vec![-0.01],
        };
        assert!(matches!(expand_covariance(&cov), Err(Error::NotPsd { .. })));
    }
}
