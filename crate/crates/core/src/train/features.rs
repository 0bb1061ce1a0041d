//! Random cosine feature expansion.
//!
//! `z(x)_j = sqrt(2/D) cos(g_jᵀx + b_j)` with `b_j ~ U[0, 2π)`. Gaussian
//! projections `g_j ~ N(0, σ²I)` approximate the RBF kernel
//! `exp(−σ²‖x−x′‖²/2)`; Cauchy projections with scale `σ` approximate the
//! Laplacian kernel `exp(−σ‖x−x′‖₁)`. A non-zero skew shifts the projection
//! distribution's location.

use std::f64::consts::PI;

use ndarray::{Array1, Array2, ArrayView2, Zip};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Cauchy, Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::space::Configuration;

use super::params;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Projection {
    Gaussian,
    Cauchy,
}

impl Projection {
    pub fn from_label(label: &str) -> Result<Self> {
        match label {
            "gaussian" => Ok(Projection::Gaussian),
            "cauchy" => Ok(Projection::Cauchy),
            other => Err(Error::invalid_argument(format!("unknown projection distribution {other:?}"))),
        }
    }
}

/// Settings of a random feature map, independent of its random draw.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeatureSpec {
    pub output_dim: usize,
    pub distribution: Projection,
    pub scale: f64,
    pub skew: f64,
}

impl FeatureSpec {
    /// Reads `projection` (a multiple of the input width), `noise` (the
    /// projection scale), `distribution` and `skew` from a configuration.
    /// Returns `None` when the configuration does not ask for expansion.
    pub fn from_config(config: &Configuration, input_dim: usize) -> Result<Option<Self>> {
        let Some(factor) = config.real(params::PROJECTION) else {
            return Ok(None);
        };
        let output_dim = ((factor * input_dim as f64).round() as usize).max(1);
        let distribution = match config.label(params::DISTRIBUTION) {
            Some(l) => Projection::from_label(l)?,
            None => Projection::Gaussian,
        };
        Ok(Some(FeatureSpec {
            output_dim,
            distribution,
            scale: config.real(params::NOISE).unwrap_or(1.0),
            skew: config.real(params::SKEW).unwrap_or(0.0),
        }))
    }

    /// Bit-exact key for caching expanded datasets.
    pub fn key(&self) -> (usize, Projection, u64, u64) {
        (self.output_dim, self.distribution, self.scale.to_bits(), self.skew.to_bits())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum FeatureMap {
    Identity,
    RandomCosine {
        spec: FeatureSpec,
        /// `d_in × D`
        projection: Array2<f64>,
        offsets: Array1<f64>,
        seed: u64,
    },
}

impl FeatureMap {
    pub fn random_cosine(spec: FeatureSpec, input_dim: usize, seed: u64) -> Result<Self> {
        if spec.output_dim == 0 {
            return Err(Error::invalid_argument("random feature dimension must be at least 1"));
        }
        if !(spec.scale.is_finite() && spec.scale > 0.0) {
            return Err(Error::invalid_argument(format!("projection scale {} must be positive", spec.scale)));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cauchy = Cauchy::new(0.0, 1.0).expect("unit Cauchy");
        let projection = Array2::from_shape_simple_fn((input_dim, spec.output_dim), || {
            let base: f64 = match spec.distribution {
                Projection::Gaussian => rng.sample(StandardNormal),
                Projection::Cauchy => cauchy.sample(&mut rng),
            };
            spec.skew + spec.scale * base
        });
        let offsets = Array1::from_shape_simple_fn(spec.output_dim, || rng.random::<f64>() * 2.0 * PI);
        Ok(FeatureMap::RandomCosine {
            spec,
            projection,
            offsets,
            seed,
        })
    }

    pub fn output_dim(&self, input_dim: usize) -> usize {
        match self {
            FeatureMap::Identity => input_dim,
            FeatureMap::RandomCosine { spec, .. } => spec.output_dim,
        }
    }
}

/// Applies a feature map to every row of `x`.
pub fn random_features(x: ArrayView2<'_, f64>, map: &FeatureMap) -> Result<Array2<f64>> {
    match map {
        FeatureMap::Identity => Ok(x.to_owned()),
        FeatureMap::RandomCosine {
            projection, offsets, ..
        } => {
            if projection.nrows() != x.ncols() {
                return Err(Error::invalid_argument(format!(
                    "feature map expects {} inputs, data has {}",
                    projection.nrows(),
                    x.ncols()
                )));
            }
            let norm = (2.0 / offsets.len() as f64).sqrt();
            let mut z = x.dot(projection);
            for mut row in z.rows_mut() {
                Zip::from(&mut row)
                    .and(offsets)
                    .for_each(|v, &b| *v = norm * (*v + b).cos());
            }
            Ok(z)
        }
    }
}
