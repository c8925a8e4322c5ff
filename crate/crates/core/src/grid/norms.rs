//! Discrete norms on grid fields.
//!
//! Quadrature is the tensor trapezoid rule. Derivatives use second-order
//! central differences with second-order one-sided stencils at the ends of
//! each line; higher orders are compositions (`D3 = D1 D2`, `D4 = D2 D2`).
//! Negative and fractional-free Sobolev norms of boundary-vanishing fields
//! are computed spectrally in the Dirichlet sine basis.

use std::f64::consts::PI;

use super::{Grid, SpaceTimeField, SpatialField};
use crate::error::{Error, Result};

fn axis_weights(n: usize, step: f64) -> Vec<f64> {
    let mut w = vec![step; n];
    w[0] = 0.5 * step;
    w[n - 1] = 0.5 * step;
    w
}

fn spatial_weights(grid: &Grid) -> Vec<f64> {
    let w = axis_weights(grid.n_x(), grid.h());
    (0..grid.n_space())
        .map(|idx| {
            let mi = grid.multi_index(idx);
            (0..grid.dim()).map(|a| w[mi[a]]).product()
        })
        .collect()
}

fn weighted_sq_sum(values: &[f64], weights: &[f64]) -> f64 {
    values.iter().zip(weights).map(|(v, w)| w * v * v).sum()
}

/// Trapezoid `L2(O)` inner product.
pub fn inner_l2_space(a: &SpatialField, b: &SpatialField) -> f64 {
    assert_eq!(a.grid(), b.grid(), "fields live on different grids");
    let w = spatial_weights(a.grid());
    a.values()
        .iter()
        .zip(b.values())
        .zip(&w)
        .map(|((x, y), w)| w * x * y)
        .sum()
}

/// Trapezoid approximation of the `L2(O)` norm.
pub fn norm_l2_space(w: &SpatialField) -> f64 {
    weighted_sq_sum(w.values(), &spatial_weights(w.grid())).sqrt()
}

fn spacetime_sq(grid: &Grid, values: &[f64]) -> f64 {
    let ws = spatial_weights(grid);
    let wt = axis_weights(grid.n_t(), grid.dt());
    let n_s = grid.n_space();
    wt.iter()
        .enumerate()
        .map(|(k, w)| w * weighted_sq_sum(&values[k * n_s..(k + 1) * n_s], &ws))
        .sum()
}

/// Trapezoid approximation of the `L2(Q)` norm.
pub fn norm_l2_spacetime(u: &SpaceTimeField) -> f64 {
    spacetime_sq(u.grid(), u.values()).sqrt()
}

/// Derivative of a line of samples, written into `out`.
fn diff_line(v: &[f64], step: f64, order: usize, out: &mut [f64]) {
    match order {
        0 => out.copy_from_slice(v),
        1 => {
            let n = v.len();
            out[0] = (-3.0 * v[0] + 4.0 * v[1] - v[2]) / (2.0 * step);
            for i in 1..n - 1 {
                out[i] = (v[i + 1] - v[i - 1]) / (2.0 * step);
            }
            out[n - 1] = (3.0 * v[n - 1] - 4.0 * v[n - 2] + v[n - 3]) / (2.0 * step);
        }
        2 => {
            let n = v.len();
            let h2 = step * step;
            out[0] = (2.0 * v[0] - 5.0 * v[1] + 4.0 * v[2] - v[3]) / h2;
            for i in 1..n - 1 {
                out[i] = (v[i - 1] - 2.0 * v[i] + v[i + 1]) / h2;
            }
            out[n - 1] = (2.0 * v[n - 1] - 5.0 * v[n - 2] + 4.0 * v[n - 3] - v[n - 4]) / h2;
        }
        _ => {
            let mut tmp = vec![0.0; v.len()];
            diff_line(v, step, 2, &mut tmp);
            diff_line(&tmp, step, order - 2, out);
        }
    }
}

fn min_points(order: usize) -> usize {
    match order {
        0 => 1,
        1 => 3,
        _ => 4,
    }
}

/// Applies a derivative of the given order along `axis` of data laid out as
/// `(lines of length n, stride)`.
fn diff_axis(values: &[f64], n: usize, stride: usize, outer: usize, block: usize, step: f64, order: usize) -> Vec<f64> {
    if order == 0 {
        return values.to_vec();
    }
    let mut out = vec![0.0; values.len()];
    let mut line = vec![0.0; n];
    let mut res = vec![0.0; n];
    for o in 0..outer {
        for s in 0..stride {
            let base = o * block + s;
            for i in 0..n {
                line[i] = values[base + i * stride];
            }
            diff_line(&line, step, order, &mut res);
            for i in 0..n {
                out[base + i * stride] = res[i];
            }
        }
    }
    out
}

fn check_order(grid: &Grid, orders: &[usize]) -> Result<()> {
    for &o in orders {
        if grid.n_x() < min_points(o) {
            return Err(Error::StencilDoesNotFit(format!(
                "derivative of order {o} needs n_x >= {}, have {}",
                min_points(o),
                grid.n_x()
            )));
        }
    }
    Ok(())
}

/// Spatial derivatives of one spatial level `D^alpha`, `alpha` per axis.
fn spatial_diff_values(grid: &Grid, values: &[f64], alpha: [usize; 2]) -> Vec<f64> {
    let n = grid.n_x();
    let h = grid.h();
    let n_s = grid.n_space();
    let mut out = diff_axis(values, n, 1, n_s / n, n, h, alpha[0]);
    if grid.dim() == 2 {
        out = diff_axis(&out, n, n, 1, n_s, h, alpha[1]);
    }
    out
}

/// `D^alpha w` for a multi-index `alpha` (second entry ignored when `d = 1`).
pub fn spatial_derivative(w: &SpatialField, alpha: [usize; 2]) -> Result<SpatialField> {
    let grid = w.grid();
    let alpha = if grid.dim() == 1 { [alpha[0], 0] } else { alpha };
    check_order(grid, &alpha)?;
    SpatialField::new(*grid, spatial_diff_values(grid, w.values(), alpha))
}

/// `k`-th time derivative of a space-time field.
pub fn time_derivative(u: &SpaceTimeField, k: usize) -> Result<SpaceTimeField> {
    let grid = u.grid();
    if grid.n_t() < min_points(k) {
        return Err(Error::StencilDoesNotFit(format!(
            "time derivative of order {k} needs n_t >= {}, have {}",
            min_points(k),
            grid.n_t()
        )));
    }
    let n_s = grid.n_space();
    let values = diff_axis(u.values(), grid.n_t(), n_s, 1, n_s * grid.n_t(), grid.dt(), k);
    Ok(SpaceTimeField::from_raw(*grid, values))
}

fn multi_indices(dim: usize, max_order: usize) -> Vec<[usize; 2]> {
    let mut out = Vec::new();
    for total in 0..=max_order {
        if dim == 1 {
            out.push([total, 0]);
        } else {
            for a in 0..=total {
                out.push([a, total - a]);
            }
        }
    }
    out
}

/// Discrete `H^{s,s/2}(Q)` norm for `s` in `{2, 4}`:
/// all spatial derivatives of order at most `s` plus time derivatives of
/// orders `1..=s/2`, each measured in `L2(Q)`.
pub fn norm_parabolic_sobolev(u: &SpaceTimeField, s: usize) -> Result<f64> {
    if s != 2 && s != 4 {
        return Err(Error::InvalidParameter(format!("parabolic Sobolev order must be 2 or 4, got {s}")));
    }
    let grid = u.grid();
    check_order(grid, &[s.min(4)])?;
    let n_s = grid.n_space();
    let mut total = 0.0;
    for alpha in multi_indices(grid.dim(), s) {
        let mut d = Vec::with_capacity(u.values().len());
        for k in 0..grid.n_t() {
            d.extend(spatial_diff_values(grid, &u.values()[k * n_s..(k + 1) * n_s], alpha));
        }
        total += spacetime_sq(grid, &d);
    }
    for k in 1..=s / 2 {
        total += spacetime_sq(grid, time_derivative(u, k)?.values());
    }
    Ok(total.sqrt())
}

/// Supremum norm over nodes.
pub fn c0_norm(w: &SpatialField) -> f64 {
    w.max_abs()
}

/// Discrete `C^2` norm: sum over `|alpha| <= 2` of `sup |D^alpha w|`.
pub fn c2_norm(w: &SpatialField) -> Result<f64> {
    let grid = w.grid();
    check_order(grid, &[2])?;
    Ok(multi_indices(grid.dim(), 2)
        .into_iter()
        .map(|a| spatial_diff_values(grid, w.values(), a).iter().fold(0.0f64, |m, v| m.max(v.abs())))
        .sum())
}

fn check_boundary(w: &SpatialField) -> Result<()> {
    let b = w.boundary_max_abs();
    if b > 1e-12 * w.max_abs().max(1.0) {
        return Err(Error::NonzeroBoundary(format!("boundary value of magnitude {b:e}")));
    }
    Ok(())
}

/// Coefficients of `w` in the orthonormal sine basis `prod_a sqrt(2) sin(pi k_a x_a)`,
/// `k_a = 1..=n_x-2`, ordered with the first axis fastest.
///
/// The trapezoid rule on boundary-vanishing data makes this a scaled DST-I,
/// so the discrete Parseval identity `sum c_k^2 = ||w||^2` holds exactly.
pub fn sine_coefficients(w: &SpatialField) -> Result<Vec<f64>> {
    check_boundary(w)?;
    let grid = w.grid();
    let n = grid.n_x();
    let m = n - 2;
    let h = grid.h();
    // table[k-1][i-1] = h sqrt(2) sin(pi k i h)
    let table: Vec<f64> = (1..=m)
        .flat_map(|k| (1..=m).map(move |i| h * 2f64.sqrt() * (PI * (k * i) as f64 * h).sin()))
        .collect();
    let interior: Vec<f64> = if grid.dim() == 1 {
        w.values()[1..n - 1].to_vec()
    } else {
        (1..n - 1)
            .flat_map(|j| (1..n - 1).map(move |i| (i, j)))
            .map(|(i, j)| w.values()[i + n * j])
            .collect()
    };
    let transform = |data: &[f64], stride: usize, outer: usize, block: usize| -> Vec<f64> {
        let mut out = vec![0.0; data.len()];
        for o in 0..outer {
            for s in 0..stride {
                let base = o * block + s;
                for k in 0..m {
                    let row = &table[k * m..(k + 1) * m];
                    out[base + k * stride] = (0..m).map(|i| row[i] * data[base + i * stride]).sum();
                }
            }
        }
        out
    };
    let mut c = transform(&interior, 1, interior.len() / m, m);
    if grid.dim() == 2 {
        c = transform(&c, m, 1, m * m);
    }
    Ok(c)
}

/// `(sum_k (1 + pi^2 |k|^2)^p c_k^2)^(1/2)` over the sine coefficients of `w`.
pub fn spectral_norm(w: &SpatialField, exponent: f64) -> Result<f64> {
    let c = sine_coefficients(w)?;
    let grid = w.grid();
    let m = grid.n_x() - 2;
    let sum: f64 = c
        .iter()
        .enumerate()
        .map(|(idx, ck)| {
            let k1 = (idx % m + 1) as f64;
            let k2 = if grid.dim() == 2 { (idx / m + 1) as f64 } else { 0.0 };
            (1.0 + PI * PI * (k1 * k1 + k2 * k2)).powf(exponent) * ck * ck
        })
        .sum();
    Ok(sum.sqrt())
}

/// Spectral surrogate for the dual norm of `H^2(O)`; `w` must vanish on the boundary.
pub fn norm_dual_h2(w: &SpatialField) -> Result<f64> {
    spectral_norm(w, -2.0)
}

/// Spectral `H^alpha` norm of a boundary-vanishing field.
pub fn sobolev_norm_discrete(f: &SpatialField, alpha: f64) -> Result<f64> {
    spectral_norm(f, alpha)
}
