//! Gaussian priors on the log-absorption field, the link `Phi`, the cutoff
//! `chi`, and the `N`-dependent rescaling.
//!
//! Two base priors are available:
//!
//! * a Matérn field on the grid nodes, of smoothness `alpha - d/2`, sampled
//!   by dense Cholesky;
//! * a truncated multiscale sine series with level weights `2^(-alpha l)`.
//!
//! Both are multiplied by `chi` so draws vanish near the boundary, and
//! optionally by `N^(-d/(4 alpha + 8 + 2d))`.

mod cutoff;
mod link;
mod matern;
mod series;

use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

pub use crate::grid::sobolev_norm_discrete;
pub use cutoff::{smooth_step, CutoffSpec};
pub use link::{link_inverse, link_phi, link_phi_field, LinkSpec};
pub use matern::{bessel_k, half_integer_matern, matern_correlation, MaternFactor, JITTER, MAX_NODES_1D, MAX_NODES_2D};
pub use series::{level_frequencies, rkhs_norm, synthesize_series, CoefficientVector, SeriesBasis};

use crate::error::{Error, Result};
use crate::grid::{Grid, SpatialField};
use crate::rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PriorKind {
    MaternGrid,
    TruncatedSeries,
}

/// Prior configuration; echoed verbatim into run manifests.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriorSpec {
    pub kind: PriorKind,
    pub alpha: u32,
    /// Series truncation level `J`; ignored by the Matérn prior.
    #[serde(default = "default_truncation")]
    pub truncation: u32,
    #[serde(default)]
    pub rescale: bool,
    /// Observation count used by the rescaling.
    #[serde(default = "default_n_obs")]
    pub n_obs: usize,
    pub d: usize,
    #[serde(default = "default_lengthscale")]
    pub lengthscale: f64,
}

fn default_truncation() -> u32 {
    1
}

fn default_n_obs() -> usize {
    1
}

fn default_lengthscale() -> f64 {
    0.2
}

impl PriorSpec {
    pub fn series(alpha: u32, d: usize, truncation: u32) -> Self {
        PriorSpec {
            kind: PriorKind::TruncatedSeries,
            alpha,
            truncation,
            rescale: false,
            n_obs: 1,
            d,
            lengthscale: default_lengthscale(),
        }
    }

    pub fn matern(alpha: u32, d: usize) -> Self {
        PriorSpec {
            kind: PriorKind::MaternGrid,
            ..Self::series(alpha, d, 1)
        }
    }

    /// Turns on the rescaling for `n_obs` observations.
    pub fn rescaled(mut self, n_obs: usize) -> Self {
        self.rescale = true;
        self.n_obs = n_obs;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(1..=2).contains(&self.d) {
            return Err(Error::InvalidParameter(format!("d must be 1 or 2, got {}", self.d)));
        }
        if 2 * self.alpha as usize <= 4 + self.d {
            return Err(Error::InvalidParameter(format!(
                "alpha must exceed 2 + d/2, got alpha = {} with d = {}",
                self.alpha, self.d
            )));
        }
        if self.kind == PriorKind::TruncatedSeries && self.truncation < 1 {
            return Err(Error::InvalidParameter("series truncation J must be at least 1".into()));
        }
        if self.rescale && self.n_obs < 1 {
            return Err(Error::InvalidParameter("rescaling needs N >= 1".into()));
        }
        if !(self.lengthscale > 0.0) {
            return Err(Error::InvalidParameter("lengthscale must be positive".into()));
        }
        Ok(())
    }

    /// Matérn smoothness `alpha - d/2`.
    pub fn nu(&self) -> f64 {
        self.alpha as f64 - self.d as f64 / 2.0
    }

    /// Multiplier applied to draws: the rescale factor, or 1.
    pub fn scale(&self) -> f64 {
        if self.rescale {
            rescale_factor(self.n_obs, self.alpha as f64, self.d)
        } else {
            1.0
        }
    }
}

/// `N^(-d/(4 alpha + 8 + 2d))`.
pub fn rescale_factor(n: usize, alpha: f64, d: usize) -> f64 {
    let d = d as f64;
    (n as f64).powf(-d / (4.0 * alpha + 8.0 + 2.0 * d))
}

/// Series truncation with `2^J ~ N^(1/(2 alpha + 4 + d))`, at least 1.
pub fn truncation_level(n: usize, alpha: f64, d: usize) -> u32 {
    let j = ((n as f64).log2() / (2.0 * alpha + 4.0 + d as f64)).round();
    (j as u32).max(1)
}

/// Anything a prior draw can be stored as.
pub trait Rescalable: Sized {
    fn scaled_by(&self, c: f64) -> Self;
}

impl Rescalable for SpatialField {
    fn scaled_by(&self, c: f64) -> Self {
        self.scaled(c)
    }
}

impl Rescalable for CoefficientVector {
    fn scaled_by(&self, c: f64) -> Self {
        self.scaled(c)
    }
}

/// Multiplies a draw by `N^(-d/(4 alpha + 8 + 2d))`.
pub fn rescale_prior<T: Rescalable>(x: &T, n: usize, alpha: f64, d: usize) -> Result<T> {
    if n < 1 {
        return Err(Error::InvalidParameter("rescaling needs N >= 1".into()));
    }
    Ok(x.scaled_by(rescale_factor(n, alpha, d)))
}

/// A prior ready to sample: the base field is a linear image of a white
/// standard-normal vector, which is also the state space of the sampler.
#[derive(Clone, Debug)]
pub enum Prior {
    Matern {
        spec: PriorSpec,
        factor: MaternFactor,
        chi: SpatialField,
    },
    Series {
        spec: PriorSpec,
        basis: SeriesBasis,
    },
}

impl Prior {
    pub fn new(spec: &PriorSpec, cutoff: &CutoffSpec, grid: Grid) -> Result<Self> {
        spec.validate()?;
        cutoff.validate()?;
        if spec.d != grid.dim() {
            return Err(Error::InvalidParameter(format!(
                "prior has d = {}, grid has d = {}",
                spec.d,
                grid.dim()
            )));
        }
        Ok(match spec.kind {
            PriorKind::MaternGrid => Prior::Matern {
                spec: spec.clone(),
                factor: MaternFactor::new(grid, spec.nu(), spec.lengthscale)?,
                chi: cutoff.field(grid),
            },
            PriorKind::TruncatedSeries => Prior::Series {
                spec: spec.clone(),
                basis: SeriesBasis::new(spec.alpha as f64, spec.truncation, cutoff, grid)?,
            },
        })
    }

    pub fn spec(&self) -> &PriorSpec {
        match self {
            Prior::Matern { spec, .. } | Prior::Series { spec, .. } => spec,
        }
    }

    pub fn grid(&self) -> &Grid {
        match self {
            Prior::Matern { factor, .. } => factor.grid(),
            Prior::Series { basis, .. } => basis.grid(),
        }
    }

    /// Length of the white vector.
    pub fn dim(&self) -> usize {
        match self {
            Prior::Matern { factor, .. } => factor.grid().n_space(),
            Prior::Series { basis, .. } => basis.len(),
        }
    }

    pub fn sample_white(&self, rng: &mut rng::Rng) -> Vec<f64> {
        (0..self.dim()).map(|_| rng.sample(StandardNormal)).collect()
    }

    /// The field `scale * chi * base(white)`.
    pub fn synthesize(&self, white: &[f64]) -> SpatialField {
        assert_eq!(white.len(), self.dim(), "white vector has the wrong length");
        let scale = self.spec().scale();
        match self {
            Prior::Matern { factor, chi, .. } => {
                let m = factor.colour(white);
                let v = m.iter().zip(chi.values()).map(|(a, c)| scale * c * a).collect();
                SpatialField::new(*factor.grid(), v).expect("finite draw")
            }
            Prior::Series { basis, .. } => basis.combine(white).scaled(scale),
        }
    }

    /// Series coefficients of `synthesize(white)`; `None` for the Matérn prior.
    pub fn coefficients(&self, white: &[f64]) -> Option<CoefficientVector> {
        match self {
            Prior::Matern { .. } => None,
            Prior::Series { spec, .. } => {
                let c = CoefficientVector::from_flat(spec.alpha as f64, spec.d, spec.truncation, white)
                    .expect("white vector matches the basis");
                Some(c.scaled(spec.scale()))
            }
        }
    }
}

/// One Matérn draw `chi * M` (times the rescale factor when enabled).
pub fn sample_matern_grid(spec: &PriorSpec, cutoff: &CutoffSpec, grid: Grid, seed: u64) -> Result<SpatialField> {
    if spec.kind != PriorKind::MaternGrid {
        return Err(Error::InvalidParameter("sample_matern_grid needs a matern-grid prior".into()));
    }
    let prior = Prior::new(spec, cutoff, grid)?;
    let white = prior.sample_white(&mut rng::stream(seed, 0));
    Ok(prior.synthesize(&white))
}

/// One series draw: the coefficients and the nodal field they synthesize.
pub fn sample_truncated_series(
    spec: &PriorSpec,
    cutoff: &CutoffSpec,
    grid: Grid,
    seed: u64,
) -> Result<(CoefficientVector, SpatialField)> {
    if spec.kind != PriorKind::TruncatedSeries {
        return Err(Error::InvalidParameter("sample_truncated_series needs a truncated-series prior".into()));
    }
    let prior = Prior::new(spec, cutoff, grid)?;
    let white = prior.sample_white(&mut rng::stream(seed, 0));
    let c = prior.coefficients(&white).expect("series prior");
    Ok((c, prior.synthesize(&white)))
}
