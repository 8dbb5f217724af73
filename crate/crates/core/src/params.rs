//! Item parameters and the affine identification map between the raw SNP
//! latent scale and the standardized (mean 0, variance 1) scale.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::snp::{LatentMoments, SnpAngles};

/// Intercepts and slopes of the 2PL response model, on the logit scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemParams {
    pub alpha0: Vec<f64>,
    pub alpha1: Vec<f64>,
}

impl ItemParams {
    pub fn new(alpha0: Vec<f64>, alpha1: Vec<f64>) -> Result<Self> {
        if alpha0.len() != alpha1.len() {
            return Err(Error::Domain(format!(
                "intercept/slope length mismatch ({} vs {})",
                alpha0.len(),
                alpha1.len()
            )));
        }
        if alpha0.len() < 2 {
            return Err(Error::Domain("at least two items are required".into()));
        }
        if alpha0.iter().chain(&alpha1).any(|v| !v.is_finite()) {
            return Err(Error::Domain("item parameters must be finite".into()));
        }
        Ok(Self { alpha0, alpha1 })
    }

    pub fn n_items(&self) -> usize {
        self.alpha0.len()
    }

    /// Stacked `(alpha0', alpha1')`.
    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = self.alpha0.clone();
        v.extend_from_slice(&self.alpha1);
        v
    }

    pub fn from_slice(theta: &[f64]) -> Self {
        let p = theta.len() / 2;
        Self {
            alpha0: theta[..p].to_vec(),
            alpha1: theta[p..2 * p].to_vec(),
        }
    }
}

/// Item parameters extended by the SNP angles, `(alpha0', alpha1', phi')`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtendedParams {
    pub items: ItemParams,
    pub angles: SnpAngles,
}

impl ExtendedParams {
    pub fn new(items: ItemParams, angles: SnpAngles) -> Self {
        Self { items, angles }
    }

    pub fn normal(items: ItemParams) -> Self {
        Self {
            items,
            angles: SnpAngles::normal(),
        }
    }

    pub fn n_items(&self) -> usize {
        self.items.n_items()
    }

    pub fn degree(&self) -> usize {
        self.angles.degree()
    }

    pub fn dim(&self) -> usize {
        2 * self.n_items() + self.degree()
    }

    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = self.items.to_vec();
        v.extend_from_slice(self.angles.values());
        v
    }

    /// Rebuild from a stacked vector. Angles outside `[-pi/2, pi/2]` are
    /// rejected.
    pub fn from_slice(theta: &[f64], p: usize) -> Result<Self> {
        if theta.len() < 2 * p {
            return Err(Error::Domain("parameter vector too short".into()));
        }
        Ok(Self {
            items: ItemParams::from_slice(&theta[..2 * p]),
            angles: SnpAngles::new(theta[2 * p..].to_vec())?,
        })
    }

    pub(crate) fn from_slice_unchecked(theta: &[f64], p: usize) -> Self {
        Self {
            items: ItemParams::from_slice(&theta[..2 * p]),
            angles: SnpAngles::unchecked(theta[2 * p..].to_vec()),
        }
    }
}

/// Map raw estimates to the standardized latent scale:
/// `alpha0 + alpha1 * E(Z)` and `alpha1 * sqrt(V(Z))`.
pub fn rescale_item_params(raw: &ItemParams, moments: &LatentMoments) -> Result<ItemParams> {
    if !(moments.variance > 0.0) {
        return Err(Error::Domain(format!(
            "nonpositive latent variance {}",
            moments.variance
        )));
    }
    let sd = moments.variance.sqrt();
    Ok(ItemParams {
        alpha0: raw
            .alpha0
            .iter()
            .zip(&raw.alpha1)
            .map(|(a0, a1)| a0 + a1 * moments.mean)
            .collect(),
        alpha1: raw.alpha1.iter().map(|a1| a1 * sd).collect(),
    })
}

/// Inverse of [`rescale_item_params`].
pub fn unscale_item_params(std: &ItemParams, moments: &LatentMoments) -> Result<ItemParams> {
    if !(moments.variance > 0.0) {
        return Err(Error::Domain(format!(
            "nonpositive latent variance {}",
            moments.variance
        )));
    }
    let sd = moments.variance.sqrt();
    let alpha1: Vec<f64> = std.alpha1.iter().map(|a1| a1 / sd).collect();
    let alpha0 = std
        .alpha0
        .iter()
        .zip(&alpha1)
        .map(|(a0, a1)| a0 - a1 * moments.mean)
        .collect();
    Ok(ItemParams { alpha0, alpha1 })
}
