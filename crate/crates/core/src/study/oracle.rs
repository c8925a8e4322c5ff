//! The Feynman-Kac agreement check used by the `oracle-check` command.
//!
//! The test problem is `f = 1 + bump`, with a smooth bump centred in the
//! domain, and `g = u0 = 1`. The solver output is compared against path
//! estimates at interior points; a copy of the solution scaled by 1.1
//! serves as the negative control and must fail.

use rand::Rng as _;
use serde::Serialize;

use super::config::Config;
use crate::error::Result;
use crate::feynman_kac::{validate_against, PathConfig, ValidationReport};
use crate::grid::{Grid, Point, SpatialField};
use crate::rng;
use crate::solver::{smooth_bump, solve_forward, AbsorptionField, BoundaryData};

/// Scale applied to the solver output for the negative control.
pub const CORRUPTION: f64 = 1.1;

#[derive(Clone, Debug, Serialize)]
pub struct OracleCheck {
    pub report: ValidationReport,
    pub control: ValidationReport,
}

impl OracleCheck {
    /// The solver agrees and the corrupted solver does not.
    pub fn pass(&self) -> bool {
        self.report.pass && !self.control.pass
    }
}

/// `f = 1 + bump * prod_a phi(4 (x_a - 1/2))` with `g = u0 = 1`.
pub fn oracle_problem(grid: Grid, bump: f64) -> Result<(AbsorptionField, BoundaryData)> {
    let f = SpatialField::from_fn(grid, |x| 1.0 + bump * x.iter().map(|&c| smooth_bump(4.0 * (c - 0.5))).product::<f64>());
    Ok((AbsorptionField::nonnegative(f)?, BoundaryData::constant(grid, 1.0)))
}

/// `n` points with `x` uniform in `[0.1, 0.9]^d` and `t` uniform in `[0.1 T, T]`.
pub fn oracle_points(grid: &Grid, n: usize, seed: u64) -> Vec<Point> {
    let mut r = rng::stream(seed, 0);
    (0..n)
        .map(|_| {
            let x: Vec<f64> = (0..grid.dim()).map(|_| r.random_range(0.1..0.9)).collect();
            let t = grid.t_end() * r.random_range(0.1..1.0);
            Point::new(&x, t)
        })
        .collect()
}

pub fn oracle_check(cfg: &Config) -> Result<OracleCheck> {
    let grid = cfg.grid()?;
    let o = &cfg.oracle;
    let (f, bd) = oracle_problem(grid, o.bump)?;
    let points = oracle_points(&grid, o.n_points, rng::derive_seed(cfg.seed, &[0x0c, 0]));
    let paths = PathConfig {
        n_paths: o.n_paths,
        dt_path: o.dt_path,
        seed: rng::derive_seed(cfg.seed, &[0x0c, 1]),
        exit_time: o.exit_time,
    };
    let u = solve_forward(&f, &bd, &grid, &cfg.scheme)?;
    let report = validate_against(&u, &f, &bd, &points, &paths)?;
    let control = validate_against(&u.map(|v| CORRUPTION * v), &f, &bd, &points, &paths)?;
    Ok(OracleCheck { report, control })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn points_are_interior_and_reproducible() {
        let grid = Grid::new(2, 17, 17, 2.0).unwrap();
        let p = oracle_points(&grid, 20, 4);
        assert_eq!(p, oracle_points(&grid, 20, 4));
        for z in &p {
            assert!(z.x[..2].iter().all(|&c| (0.1..0.9).contains(&c)));
            assert!(z.t >= 0.2 && z.t < 2.0);
        }
    }

    #[test]
    fn problem_has_unit_data_and_bump_peak() {
        let grid = Grid::new(1, 33, 33, 1.0).unwrap();
        let (f, bd) = oracle_problem(grid, 1.0).unwrap();
        assert_eq!(f.field().values()[16], 2.0);
        assert_eq!(f.field().values()[0], 1.0);
        assert_eq!(bd.g_min(), 1.0);
        assert_eq!(bd.u0_min(), 1.0);
    }
}
