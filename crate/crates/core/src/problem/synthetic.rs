//! Seeded synthetic markets for benchmarks and examples.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::market::{Covariance, MarketModel};
use crate::linalg::Matrix;
use crate::scalar::Scalar;

/// A factor market with `factors` factors over `n` assets.
///
/// The first factor is a market factor (loadings around 1, Sharpe ratio 0.4);
/// the remaining factors carry no premium. Factor vols are 5–20%, idiosyncratic
/// vols 10–30%, and asset alphas are N(0, 0.2%). The risk-free rate is 2%.
pub fn factor_market<S: Scalar>(n: usize, factors: usize, seed: u64) -> MarketModel<S> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let unit = Normal::new(0.0, 1.0).expect("unit normal");
    let vols: Vec<f64> = (0..factors).map(|_| rng.gen_range(0.05..0.20)).collect();
    let mut loadings = Matrix::zeros(n, factors);
    let mut mu = Vec::with_capacity(n);
    let mut idio = Vec::with_capacity(n);
    for i in 0..n {
        for f in 0..factors {
            let centre = if f == 0 { 1.0 } else { 0.0 };
            loadings[(i, f)] = S::lit(centre + 0.3 * unit.sample(&mut rng));
        }
        let premium = if factors > 0 { loadings[(i, 0)].to_f64() * 0.4 * vols[0] } else { 0.0 };
        mu.push(S::lit(0.02 + premium + 0.002 * unit.sample(&mut rng)));
        let v: f64 = rng.gen_range(0.10..0.30);
        idio.push(S::lit(v * v));
    }
    let factor_cov = Matrix::diagonal(&vols.iter().map(|v| S::lit(v * v)).collect::<Vec<_>>());
    MarketModel::new(
        mu,
        Covariance::Factor {
            loadings,
            factor_cov,
            idio_var: idio,
        },
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_and_shaped() {
        let a = factor_market::<f64>(30, 4, 9);
        let b = factor_market::<f64>(30, 4, 9);
        assert_eq!(a, b);
        assert_eq!(a.num_assets(), 30);
        assert_ne!(a, factor_market::<f64>(30, 4, 10));
    }
}
