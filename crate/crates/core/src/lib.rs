// `!(x > 0.0)` is used on purpose so that NaN fails validation
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod feynman_kac;
pub mod grid;
pub mod inference;
pub mod measurement;
pub mod prior;
pub mod rng;
pub mod solver;
pub mod study;

pub use error::{Error, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../README.md")]
    pub struct Readme;
    #[doc = include_str!("../../../book/src/grid.md")]
    pub struct Grid;
    #[doc = include_str!("../../../book/src/solver.md")]
    pub struct Solver;
    #[doc = include_str!("../../../book/src/feynman-kac.md")]
    pub struct FeynmanKac;
    #[doc = include_str!("../../../book/src/priors.md")]
    pub struct Priors;
    #[doc = include_str!("../../../book/src/measurement.md")]
    pub struct Measurement;
    #[doc = include_str!("../../../book/src/sampling.md")]
    pub struct Sampling;
    #[doc = include_str!("../../../book/src/studies.md")]
    pub struct Studies;
}
