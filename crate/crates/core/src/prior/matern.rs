//! Matérn covariance on grid nodes and a dense Cholesky sampler.

use nalgebra::{DMatrix, DVector};
use statrs::function::gamma::gamma;

use crate::error::{Error, Result};
use crate::grid::{Grid, SpatialField};

/// Diagonal jitter added before factorization.
pub const JITTER: f64 = 1e-10;

/// Largest grids accepted by the dense sampler.
pub const MAX_NODES_1D: usize = 129;
pub const MAX_NODES_2D: usize = 33;

/// `K_nu(x)` for `x > 0` from `int_0^inf exp(-x cosh t) cosh(nu t) dt`.
///
/// The integrand decays double-exponentially, so the trapezoid rule on a
/// truncated range converges spectrally.
pub fn bessel_k(nu: f64, x: f64) -> f64 {
    assert!(x > 0.0, "bessel_k needs x > 0");
    let log_integrand = |t: f64| -x * t.cosh() + nu * t;
    // the integrand peaks near asinh(nu / x); cut 50 e-folds past it
    let peak_t = (nu / x).asinh();
    let peak = log_integrand(peak_t);
    let mut t_max = peak_t + 1.0;
    while log_integrand(t_max) > peak - 50.0 {
        t_max += 0.5;
    }
    let n = 4000;
    let step = t_max / n as f64;
    let mut sum = 0.5;
    for i in 1..=n {
        let t = i as f64 * step;
        let w = if i == n { 0.5 } else { 1.0 };
        sum += w * (-x * (t.cosh() - 1.0)).exp() * (nu * t).cosh();
    }
    sum * step * (-x).exp()
}

/// Unit-variance Matérn correlation at distance `r`.
pub fn matern_correlation(r: f64, nu: f64, lengthscale: f64) -> f64 {
    if r == 0.0 {
        return 1.0;
    }
    let s = (2.0 * nu).sqrt() * r / lengthscale;
    let frac = nu - nu.floor();
    if (frac - 0.5).abs() < 1e-12 {
        half_integer_matern(s, nu.floor() as usize)
    } else {
        2f64.powf(1.0 - nu) / gamma(nu) * s.powf(nu) * bessel_k(nu, s)
    }
}

/// Closed form for `nu = p + 1/2`.
pub fn half_integer_matern(s: f64, p: usize) -> f64 {
    let fact = |n: usize| (1..=n).map(|k| k as f64).product::<f64>();
    let pre = fact(p) / fact(2 * p);
    let poly: f64 = (0..=p)
        .map(|i| fact(p + i) / (fact(i) * fact(p - i)) * (2.0 * s).powi((p - i) as i32))
        .sum();
    (-s).exp() * pre * poly
}

/// Lower Cholesky factor of the nodal Matérn covariance (jittered).
#[derive(Clone, Debug)]
pub struct MaternFactor {
    grid: Grid,
    nu: f64,
    lengthscale: f64,
    factor: DMatrix<f64>,
}

impl MaternFactor {
    pub fn new(grid: Grid, nu: f64, lengthscale: f64) -> Result<Self> {
        let cap = if grid.dim() == 1 { MAX_NODES_1D } else { MAX_NODES_2D };
        if grid.n_x() > cap {
            return Err(Error::InvalidParameter(format!(
                "dense Matérn sampler supports n_x <= {cap} in d = {}, got {}",
                grid.dim(),
                grid.n_x()
            )));
        }
        if !(lengthscale > 0.0) || !(nu > 0.0) {
            return Err(Error::InvalidParameter("Matérn smoothness and lengthscale must be positive".into()));
        }
        let n = grid.n_x();
        let h = grid.h();
        // correlation depends only on |di|, |dj|
        let table: Vec<f64> = (0..n * n)
            .map(|q| {
                let (di, dj) = ((q % n) as f64 * h, (q / n) as f64 * h);
                matern_correlation((di * di + dj * dj).sqrt(), nu, lengthscale)
            })
            .collect();
        let n_s = grid.n_space();
        let cov = DMatrix::from_fn(n_s, n_s, |a, b| {
            let (ma, mb) = (grid.multi_index(a), grid.multi_index(b));
            let q = ma[0].abs_diff(mb[0]) + n * ma[1].abs_diff(mb[1]);
            table[q] + if a == b { JITTER } else { 0.0 }
        });
        let chol = cov.cholesky().ok_or_else(|| {
            Error::NotPositiveDefinite(format!("Matérn covariance with nu = {nu}, lengthscale = {lengthscale}"))
        })?;
        Ok(MaternFactor {
            grid,
            nu,
            lengthscale,
            factor: chol.l(),
        })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn nu(&self) -> f64 {
        self.nu
    }

    pub fn lengthscale(&self) -> f64 {
        self.lengthscale
    }

    /// `L xi` for a white vector `xi`.
    pub fn colour(&self, white: &[f64]) -> Vec<f64> {
        (&self.factor * DVector::from_column_slice(white)).data.into()
    }

    pub fn field(&self, white: &[f64]) -> SpatialField {
        SpatialField::new(self.grid, self.colour(white)).expect("finite draw")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bessel_route_matches_half_integer_closed_form() {
        for &p in &[0usize, 1, 2, 3] {
            let nu = p as f64 + 0.5;
            for &s in &[1e-3f64, 0.05, 0.7, 3.0, 12.0] {
                let general = 2f64.powf(1.0 - nu) / gamma(nu) * s.powf(nu) * bessel_k(nu, s);
                let closed = half_integer_matern(s, p);
                assert!((general - closed).abs() < 1e-10, "p={p} s={s}: {general} vs {closed}");
            }
        }
    }

    #[test]
    fn bessel_k_reference_values() {
        // K_0(1), K_1(2), K_3(0.5) as tabulated by scipy.special.kv
        assert!((bessel_k(0.0, 1.0) - 0.421_024_438_240_708_3).abs() < 1e-12);
        assert!((bessel_k(1.0, 2.0) - 0.139_865_881_816_522_4).abs() < 1e-12);
        assert!((bessel_k(3.0, 0.5) - 62.057_909_529_930_25).abs() < 1e-10);
    }

    #[test]
    fn correlation_is_one_at_zero_and_decays() {
        for nu in [2.5, 3.0] {
            assert_eq!(matern_correlation(0.0, nu, 0.2), 1.0);
            let near = matern_correlation(1e-6, nu, 0.2);
            assert!((near - 1.0).abs() < 1e-8);
            assert!(matern_correlation(0.1, nu, 0.2) > matern_correlation(0.3, nu, 0.2));
        }
    }

    #[test]
    fn factor_exists_at_the_size_caps() {
        assert!(MaternFactor::new(Grid::new(1, MAX_NODES_1D, 2, 1.0).unwrap(), 2.5, 0.2).is_ok());
        assert!(MaternFactor::new(Grid::new(2, MAX_NODES_2D, 2, 1.0).unwrap(), 3.0, 0.2).is_ok());
    }

    #[test]
    fn factor_caps_grid_size() {
        assert!(MaternFactor::new(Grid::new(1, 257, 2, 1.0).unwrap(), 2.5, 0.2).is_err());
        assert!(MaternFactor::new(Grid::new(2, 65, 2, 1.0).unwrap(), 3.0, 0.2).is_err());
    }
}
