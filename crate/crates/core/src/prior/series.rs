//! Truncated multiscale series prior.
//!
//! The basis is the tensor Dirichlet sine basis
//! `Psi_k(x) = prod_a sqrt(2) sin(pi k_a x_a)`, grouped into levels: level
//! `l` holds the frequencies with `2^l <= max_a k_a < 2^(l+1)`. A draw is
//!
//! ```text
//! F = chi * sum_{l <= J} sum_{k in level l} 2^(-alpha l) c_{l,k} Psi_k,   c iid N(0,1)
//! ```
//!
//! so level `l` carries `2^(l d)`-ish functions with the same `2^(-alpha l)`
//! decay as a wavelet expansion of an `H^alpha` function.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::cutoff::CutoffSpec;
use crate::error::{Error, Result};
use crate::grid::{Grid, SpatialField};

/// Frequency multi-indices of one level, first axis fastest.
pub fn level_frequencies(level: u32, dim: usize) -> Vec<[usize; 2]> {
    let lo = 1usize << level;
    let hi = 1usize << (level + 1);
    if dim == 1 {
        (lo..hi).map(|k| [k, 0]).collect()
    } else {
        let mut out = Vec::new();
        for k2 in 1..hi {
            for k1 in 1..hi {
                if k1.max(k2) >= lo {
                    out.push([k1, k2]);
                }
            }
        }
        out
    }
}

/// Coefficients `c_{l,k}` stored unweighted; the synthesized field applies
/// `2^(-alpha l)`.
#[derive(Clone, Debug, PartialEq)]
pub struct CoefficientVector {
    alpha: f64,
    dim: usize,
    truncation: u32,
    levels: Vec<Vec<f64>>,
}

impl CoefficientVector {
    pub fn zeros(alpha: f64, dim: usize, truncation: u32) -> Self {
        let levels = (0..=truncation).map(|l| vec![0.0; level_frequencies(l, dim).len()]).collect();
        CoefficientVector {
            alpha,
            dim,
            truncation,
            levels,
        }
    }

    /// Builds from a flat vector in level order.
    pub fn from_flat(alpha: f64, dim: usize, truncation: u32, flat: &[f64]) -> Result<Self> {
        let mut c = Self::zeros(alpha, dim, truncation);
        if flat.len() != c.len() {
            return Err(Error::InvalidParameter(format!(
                "expected {} coefficients for J = {truncation}, d = {dim}, got {}",
                c.len(),
                flat.len()
            )));
        }
        if flat.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("non-finite coefficient".into()));
        }
        let mut it = flat.iter();
        for level in &mut c.levels {
            for v in level.iter_mut() {
                *v = *it.next().expect("length checked");
            }
        }
        Ok(c)
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn truncation(&self) -> u32 {
        self.truncation
    }

    pub fn len(&self) -> usize {
        self.levels.iter().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn level(&self, l: u32) -> &[f64] {
        &self.levels[l as usize]
    }

    pub fn get(&self, l: u32, r: usize) -> f64 {
        self.levels[l as usize][r]
    }

    pub fn set(&mut self, l: u32, r: usize, v: f64) {
        self.levels[l as usize][r] = v;
    }

    /// Weight `2^(-alpha l)` applied to level `l` at synthesis.
    pub fn weight(&self, l: u32) -> f64 {
        2f64.powf(-self.alpha * l as f64)
    }

    pub fn to_flat(&self) -> Vec<f64> {
        self.levels.iter().flatten().copied().collect()
    }

    pub fn scaled(&self, c: f64) -> Self {
        CoefficientVector {
            levels: self.levels.iter().map(|lv| lv.iter().map(|v| c * v).collect()).collect(),
            ..self.clone()
        }
    }

    /// Writes the JSON array-of-levels form with its header.
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(CoefficientFile {
            header: CoefficientHeader {
                alpha: self.alpha,
                d: self.dim,
                truncation: self.truncation,
                weight_convention: WEIGHT_CONVENTION.into(),
                ordering: ORDERING.into(),
            },
            levels: self.levels.clone(),
        })
        .expect("plain data serializes")
    }

    pub fn from_json(v: &serde_json::Value) -> Result<Self> {
        let file: CoefficientFile = serde_json::from_value(v.clone())?;
        let h = file.header;
        let mut c = Self::zeros(h.alpha, h.d, h.truncation);
        if file.levels.len() != c.levels.len()
            || file.levels.iter().zip(&c.levels).any(|(a, b)| a.len() != b.len())
        {
            return Err(Error::Schema("coefficient levels do not match the header".into()));
        }
        c.levels = file.levels;
        Ok(c)
    }
}

const WEIGHT_CONVENTION: &str = "field = chi * sum_l 2^(-alpha*l) * c[l][r] * psi_lr; stored c unweighted";
const ORDERING: &str = "level l: frequencies with 2^l <= max(k) < 2^(l+1), first axis fastest";

#[derive(Serialize, Deserialize)]
struct CoefficientHeader {
    alpha: f64,
    d: usize,
    truncation: u32,
    weight_convention: String,
    ordering: String,
}

#[derive(Serialize, Deserialize)]
struct CoefficientFile {
    header: CoefficientHeader,
    levels: Vec<Vec<f64>>,
}

/// `(sum_{l,r} 2^(2 l alpha) (2^(-alpha l) c_{l,r})^2)^(1/2)`: the RKHS norm of
/// the uncut series `sum 2^(-alpha l) c_{l,r} Psi_{l,r}`.
pub fn rkhs_norm(c: &CoefficientVector) -> f64 {
    (0..=c.truncation())
        .map(|l| {
            let up = 2f64.powf(2.0 * l as f64 * c.alpha());
            let w = c.weight(l);
            c.level(l).iter().map(|v| up * (w * v).powi(2)).sum::<f64>()
        })
        .sum::<f64>()
        .sqrt()
}

/// Nodal values of the weighted, cut-off basis functions.
#[derive(Clone, Debug)]
pub struct SeriesBasis {
    grid: Grid,
    alpha: f64,
    truncation: u32,
    /// Row `i` holds `chi * 2^(-alpha l_i) * Psi_{k_i}` on every spatial node.
    rows: Vec<Vec<f64>>,
}

impl SeriesBasis {
    pub fn new(alpha: f64, truncation: u32, cutoff: &CutoffSpec, grid: Grid) -> Result<Self> {
        cutoff.validate()?;
        let k_max = (1usize << (truncation + 1)) - 1;
        if k_max > grid.n_x() - 2 {
            return Err(Error::StencilDoesNotFit(format!(
                "truncation J = {truncation} needs frequency {k_max}, grid resolves up to {}",
                grid.n_x() - 2
            )));
        }
        let chi = cutoff.field(grid);
        let mut rows = Vec::new();
        for l in 0..=truncation {
            let w = 2f64.powf(-alpha * l as f64);
            for k in level_frequencies(l, grid.dim()) {
                let row = (0..grid.n_space())
                    .map(|idx| {
                        let x = grid.node_coords(idx);
                        let psi: f64 = (0..grid.dim())
                            .map(|a| 2f64.sqrt() * (PI * k[a] as f64 * x[a]).sin())
                            .product();
                        w * chi.values()[idx] * psi
                    })
                    .collect();
                rows.push(row);
            }
        }
        Ok(SeriesBasis {
            grid,
            alpha,
            truncation,
            rows,
        })
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    /// `sum_i coeffs[i] * row_i`.
    pub fn combine(&self, coeffs: &[f64]) -> SpatialField {
        let mut v = vec![0.0; self.grid.n_space()];
        for (row, &c) in self.rows.iter().zip(coeffs) {
            if c != 0.0 {
                v.iter_mut().zip(row).for_each(|(a, b)| *a += c * b);
            }
        }
        SpatialField::new(self.grid, v).expect("finite synthesis")
    }

    pub fn synthesize(&self, c: &CoefficientVector) -> Result<SpatialField> {
        if c.truncation() != self.truncation || c.dim() != self.grid.dim() || c.alpha() != self.alpha {
            return Err(Error::InvalidParameter("coefficient vector does not match the basis".into()));
        }
        Ok(self.combine(&c.to_flat()))
    }
}

/// `chi * sum 2^(-alpha l) c_{l,r} Psi_{l,r}` on the grid.
pub fn synthesize_series(c: &CoefficientVector, cutoff: &CutoffSpec, grid: Grid) -> Result<SpatialField> {
    SeriesBasis::new(c.alpha(), c.truncation(), cutoff, grid)?.synthesize(c)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn level_sizes() {
        assert_eq!(level_frequencies(0, 1), vec![[1, 0]]);
        assert_eq!(level_frequencies(2, 1).len(), 4);
        assert_eq!(level_frequencies(0, 2), vec![[1, 1]]);
        assert_eq!(level_frequencies(1, 2).len(), 9 - 1);
        assert_eq!(level_frequencies(2, 2).len(), 49 - 9);
    }

    #[test]
    fn rkhs_norm_examples() {
        let mut c = CoefficientVector::zeros(3.0, 1, 3);
        assert_eq!(rkhs_norm(&c), 0.0);
        c.set(0, 0, 1.0);
        assert_eq!(rkhs_norm(&c), 1.0);
        let mut c3 = CoefficientVector::zeros(3.0, 1, 3);
        c3.set(3, 2, 1.0);
        // 2^(3 alpha) times the stored weight 2^(-3 alpha)
        assert!((rkhs_norm(&c3) - 2f64.powf(9.0) * c3.weight(3)).abs() < 1e-12);
    }

    #[test]
    fn json_roundtrip_and_schema_check() {
        let flat: Vec<f64> = (0..CoefficientVector::zeros(3.0, 2, 1).len()).map(|i| i as f64 * 0.3).collect();
        let c = CoefficientVector::from_flat(3.0, 2, 1, &flat).unwrap();
        let back = CoefficientVector::from_json(&c.to_json()).unwrap();
        assert_eq!(back, c);
        let mut bad = c.to_json();
        bad["levels"][1] = serde_json::json!([1.0]);
        assert!(CoefficientVector::from_json(&bad).is_err());
    }

    #[test]
    fn basis_requires_resolvable_frequencies() {
        let grid = Grid::new(1, 9, 2, 1.0).unwrap();
        assert!(SeriesBasis::new(3.0, 2, &CutoffSpec::default(), grid).is_ok());
        assert!(SeriesBasis::new(3.0, 3, &CutoffSpec::default(), grid).is_err());
    }
}
