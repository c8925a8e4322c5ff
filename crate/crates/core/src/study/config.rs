//! The TOML experiment configuration.
//!
//! Every section has defaults, so an empty file is a valid configuration
//! describing the desk-scale study (`d = 1`, `alpha = 3`, 65 x 65 grid,
//! `sigma = 0.01`, `N` from 128 to 4096, five replicates).

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::feynman_kac::ExitTimeConvention;
use crate::grid::{Grid, GridSpec};
use crate::inference::ChainConfig;
use crate::prior::{truncation_level, CutoffSpec, LinkSpec, PriorKind, PriorSpec};
use crate::solver::{BoundaryProfile, SchemeConfig};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    /// Root seed; every random stream of a run is derived from it.
    pub seed: u64,
    pub grid: GridSpec,
    pub prior: PriorConfig,
    pub link: LinkSpec,
    pub cutoff: CutoffSpec,
    pub boundary: BoundaryProfile,
    pub scheme: SchemeConfig,
    pub chain: ChainConfig,
    pub study: StudySection,
    pub oracle: OracleSection,
    pub checks: ChecksSection,
    pub lowerbound: LowerBoundSection,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            seed: 20240101,
            grid: GridSpec::default(),
            prior: PriorConfig::default(),
            link: LinkSpec::default(),
            cutoff: CutoffSpec::default(),
            boundary: BoundaryProfile::default(),
            scheme: SchemeConfig::default(),
            chain: ChainConfig {
                n_steps: 10_000,
                burn_in: 2000,
                ..ChainConfig::default()
            },
            study: StudySection::default(),
            oracle: OracleSection::default(),
            checks: ChecksSection::default(),
            lowerbound: LowerBoundSection::default(),
        }
    }
}

/// Prior settings shared by every `N`; the study fills in `N` and, with
/// `truncation_rule`, the level `J`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PriorConfig {
    pub kind: PriorKind,
    pub alpha: u32,
    /// Fixed `J`, used when `truncation_rule` is off.
    pub truncation: u32,
    /// Choose `J` with `2^J ~ N^(1/(2 alpha + 4 + d))`.
    pub truncation_rule: bool,
    pub rescale: bool,
    pub lengthscale: f64,
}

impl Default for PriorConfig {
    fn default() -> Self {
        PriorConfig {
            kind: PriorKind::TruncatedSeries,
            alpha: 3,
            truncation: 1,
            truncation_rule: true,
            rescale: true,
            lengthscale: 0.2,
        }
    }
}

impl PriorConfig {
    /// The prior used with `n` observations in dimension `d`.
    pub fn spec_for(&self, n: usize, d: usize) -> PriorSpec {
        let truncation = if self.truncation_rule {
            truncation_level(n.max(1), self.alpha as f64, d)
        } else {
            self.truncation
        };
        PriorSpec {
            kind: self.kind,
            alpha: self.alpha,
            truncation,
            rescale: self.rescale,
            n_obs: n.max(1),
            d,
            lengthscale: self.lengthscale,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StudySection {
    /// Sample sizes, strictly increasing.
    pub n_grid: Vec<usize>,
    pub replicates: usize,
    pub sigma: f64,
    /// Unweighted series coefficients of the truth `F0`, in level order;
    /// missing entries are zero.
    pub truth: Vec<f64>,
    /// Norm-ball radii for the exceedance diagnostics.
    pub thresholds: Vec<f64>,
    /// Bootstrap resamples for the slope-sign confidence.
    pub bootstrap: usize,
}

impl Default for StudySection {
    fn default() -> Self {
        StudySection {
            n_grid: vec![128, 256, 512, 1024, 2048, 4096],
            replicates: 5,
            sigma: 0.01,
            truth: vec![1.0, -0.5, 0.5],
            thresholds: vec![10.0, 100.0, 1000.0, 10000.0],
            bootstrap: 1000,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OracleSection {
    pub n_points: usize,
    pub n_paths: usize,
    /// Euler step of the paths; `None` means `1e-4 T`.
    pub dt_path: Option<f64>,
    pub exit_time: ExitTimeConvention,
    /// Amplitude of the smooth bump added to `f = 1` for the check.
    pub bump: f64,
}

impl Default for OracleSection {
    fn default() -> Self {
        OracleSection {
            n_points: 10,
            n_paths: 10_000,
            dt_path: None,
            exit_time: ExitTimeConvention::Literal,
            bump: 1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChecksSection {
    /// Draws (or pairs) per inequality.
    pub n_draws: usize,
    /// Spatial and temporal node counts of the grids compared; each is a
    /// refinement of the previous one.
    pub grids: Vec<usize>,
    /// Series truncation level of the test family.
    pub truncation: u32,
    /// Constant `c` in the stability weight `exp(c max(|f|_inf, |f0|_inf))`.
    pub stability_c: f64,
    /// Largest relative change of a maximum ratio under refinement.
    pub max_change: f64,
}

impl Default for ChecksSection {
    fn default() -> Self {
        ChecksSection {
            n_draws: 50,
            grids: vec![129, 257],
            truncation: 2,
            stability_c: 1.0,
            max_change: 0.3,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LowerBoundSection {
    pub n: usize,
    /// Bump amplitude `kappa`.
    pub kappa: f64,
    /// Level `j`; `None` picks `2^j ~ N^(1/(2 alpha + 4 + d))`.
    pub level: Option<u32>,
    /// Requested number of alternatives; `None` asks for `max(2, 2^(n_j/8))`.
    pub m_target: Option<usize>,
    /// Candidate sign vectors tried by the greedy packing.
    pub budget: usize,
}

impl Default for LowerBoundSection {
    fn default() -> Self {
        LowerBoundSection {
            n: 4096,
            kappa: 0.02,
            level: None,
            m_target: None,
            budget: 100_000,
        }
    }
}

impl Config {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Config = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }

    pub fn grid(&self) -> Result<Grid> {
        Grid::try_from(self.grid)
    }

    pub fn validate(&self) -> Result<()> {
        let grid = self.grid()?;
        self.link.validate()?;
        self.cutoff.validate()?;
        self.scheme.validate()?;
        self.chain.validate()?;
        self.prior.spec_for(1, grid.dim()).validate()?;
        let s = &self.study;
        if s.n_grid.is_empty() || s.n_grid.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config("study.n_grid must be nonempty and strictly increasing".into()));
        }
        if s.replicates < 3 {
            return Err(Error::Config("study.replicates must be at least 3".into()));
        }
        if !(s.sigma >= 0.0) {
            return Err(Error::Config("study.sigma must be nonnegative".into()));
        }
        if self.checks.grids.len() < 2 {
            return Err(Error::Config("checks.grids needs at least two grids".into()));
        }
        if !(self.lowerbound.kappa >= 0.0) {
            return Err(Error::Config("lowerbound.kappa must be nonnegative".into()));
        }
        Ok(())
    }
}
