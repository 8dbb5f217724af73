//! Estimation and specification testing for unidimensional binary IRT
//! models whose latent trait follows a semi-nonparametric (SNP) density.
//!
//! The 2PL model with a normal latent trait (`SNP_0`) is fitted by full or
//! pairwise maximum likelihood, the SNP extension (`SNP_L`, `L = 1, 2`) by
//! quasi maximum likelihood. Their item estimates feed a generalized
//! Hausman statistic that flags a non-normal latent distribution, next to
//! likelihood-ratio, `M2` and information-criterion comparisons.

// `!(x > 0.0)` rejects NaN on purpose; indexed loops mirror the formulas.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod data;
pub mod error;
pub mod estimation;
pub mod inference;
pub mod io;
pub mod likelihood;
pub mod optim;
pub mod params;
pub mod quadrature;
pub mod simulation;
pub mod snp;

pub use data::ResponseMatrix;
pub use error::{Error, Result};
pub use params::{rescale_item_params, ExtendedParams, ItemParams};
pub use quadrature::{gauss_hermite_rule, QuadratureRule};
pub use snp::{LatentMoments, SnpAngles};
