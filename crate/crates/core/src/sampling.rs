//! Discrete distributions, low-discrepancy points, hemisphere warps and the
//! per-path random number stream.

use std::f64::consts::{FRAC_1_PI, PI, TAU};

use rand::RngExt;
use rand_pcg::Pcg32;

use crate::error::{Error, Result};
use crate::math::Vec3;

/// Default relative floor: a bin never drops below this fraction of the mean weight.
pub const DEFAULT_RELATIVE_FLOOR: f64 = 1e-4;

/// Piecewise-constant distribution over bins sampled by CDF inversion.
#[derive(Clone, Debug, PartialEq)]
pub struct DiscreteDistribution {
    weights: Vec<f64>,
    cdf: Vec<f64>,
    total: f64,
    floor: f64,
}

impl DiscreteDistribution {
    /// Builds the distribution after raising every weight below `floor` to `floor`.
    pub fn new(weights: &[f64], floor: f64) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::EmptyDistribution);
        }
        if !(floor.is_finite() && floor > 0.0) {
            return Err(Error::InvalidFloor(floor));
        }
        let mut floored = Vec::with_capacity(weights.len());
        for (index, &w) in weights.iter().enumerate() {
            if !(w.is_finite() && w >= 0.0) {
                return Err(Error::InvalidWeight { index, value: w });
            }
            floored.push(w.max(floor));
        }
        Ok(Self::from_floored(floored, floor))
    }

    /// Builds with a floor of `relative × mean(weights)`. An all-zero input
    /// yields the uniform distribution.
    pub fn with_relative_floor(weights: &[f64], relative: f64) -> Result<Self> {
        let floor = relative_floor(weights, relative);
        Self::new(weights, floor)
    }

    /// Uniform distribution over `n` bins.
    pub fn uniform(n: usize) -> Result<Self> {
        Self::new(&vec![1.0; n], 1.0)
    }

    fn from_floored(weights: Vec<f64>, floor: f64) -> Self {
        let mut cdf = Vec::with_capacity(weights.len());
        let mut acc = 0.0;
        for &w in &weights {
            acc += w;
            cdf.push(acc);
        }
        let total = acc;
        for c in &mut cdf {
            *c /= total;
        }
        // exact 1 at the end so any u in [0,1) lands inside
        *cdf.last_mut().unwrap() = 1.0;
        DiscreteDistribution { weights, cdf, total, floor }
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn cdf(&self) -> &[f64] {
        &self.cdf
    }

    pub fn total(&self) -> f64 {
        self.total
    }

    pub fn floor(&self) -> f64 {
        self.floor
    }

    #[inline]
    pub fn probability(&self, index: usize) -> f64 {
        self.weights[index] / self.total
    }

    /// Probability a floored bin receives: `floor / total`.
    pub fn floor_share(&self) -> f64 {
        self.floor / self.total
    }

    /// Returns the smallest index whose CDF value exceeds `u`, and its probability.
    pub fn sample(&self, u: f64) -> Result<(usize, f64)> {
        if !(0.0..1.0).contains(&u) {
            return Err(Error::SampleOutOfRange(u));
        }
        Ok(self.sample_clamped(u))
    }

    /// Like [`sample`](Self::sample) but clamps `u` into range instead of failing.
    #[inline]
    pub fn sample_clamped(&self, u: f64) -> (usize, f64) {
        let i = self.cdf.partition_point(|&c| c <= u).min(self.cdf.len() - 1);
        (i, self.probability(i))
    }
}

/// `relative × mean(weights)`, or 1 when the weights sum to zero.
pub fn relative_floor(weights: &[f64], relative: f64) -> f64 {
    let sum: f64 = weights.iter().filter(|w| w.is_finite() && **w > 0.0).sum();
    if weights.is_empty() || sum <= 0.0 {
        1.0
    } else {
        relative * sum / weights.len() as f64
    }
}

/// Base-2 radical inverse (van der Corput) of `i`, computed by bit reversal.
#[inline]
pub fn radical_inverse_base2(i: u32) -> f64 {
    i.reverse_bits() as f64 * (1.0 / 4_294_967_296.0)
}

/// Point `i` of the `n`-point Hammersley set: `(i/n, radical_inverse_base2(i))`.
pub fn hammersley(i: u32, n: u32) -> Result<(f64, f64)> {
    if i >= n {
        return Err(Error::IndexOutOfRange { index: i as usize, len: n as usize });
    }
    Ok((i as f64 / n as f64, radical_inverse_base2(i)))
}

/// Cosine-weighted direction in the local frame (+z up), via
/// `θ = arccos(√(1−u))`, `φ = 2πv`. Returns the direction and its solid-angle pdf.
#[inline]
pub fn cosine_sample_hemisphere(u: f64, v: f64) -> (Vec3, f64) {
    let cos_theta = (1.0 - u).max(0.0).sqrt();
    let sin_theta = u.max(0.0).sqrt();
    let phi = TAU * v;
    let dir = Vec3::new(sin_theta * phi.cos(), sin_theta * phi.sin(), cos_theta);
    (dir, cos_theta * FRAC_1_PI)
}

#[inline]
pub fn cosine_hemisphere_pdf(cos_theta: f64) -> f64 {
    if cos_theta > 0.0 {
        cos_theta * FRAC_1_PI
    } else {
        0.0
    }
}

/// Uniform direction on the upper hemisphere (local frame).
pub fn uniform_sample_hemisphere(u: f64, v: f64) -> (Vec3, f64) {
    (direction_from_cos_phi(u, TAU * v), 1.0 / TAU)
}

/// Uniform direction on the unit sphere.
pub fn uniform_sample_sphere(u: f64, v: f64) -> (Vec3, f64) {
    (direction_from_cos_phi(1.0 - 2.0 * u, TAU * v), 1.0 / (4.0 * PI))
}

/// Local direction with the given polar cosine and azimuth.
#[inline]
pub fn direction_from_cos_phi(cos_theta: f64, phi: f64) -> Vec3 {
    let sin_theta = (1.0 - cos_theta * cos_theta).max(0.0).sqrt();
    Vec3::new(sin_theta * phi.cos(), sin_theta * phi.sin(), cos_theta)
}

/// Reproducible random stream for one path. Keyed by (seed, iteration, pixel)
/// so that every pixel sample draws an independent, repeatable sequence no
/// matter which thread renders it.
#[derive(Clone, Debug)]
pub struct RngStream {
    inner: Pcg32,
}

impl RngStream {
    pub fn new(seed: u64, iteration: u32, pixel: u32) -> Self {
        let state = splitmix64(seed ^ splitmix64(iteration as u64));
        let stream = ((iteration as u64) << 32) | pixel as u64;
        RngStream { inner: Pcg32::new(state, stream) }
    }

    /// Stream for auxiliary (non-pixel) work such as tests and probe estimates.
    pub fn from_seed(seed: u64) -> Self {
        RngStream { inner: Pcg32::new(splitmix64(seed), splitmix64(!seed)) }
    }

    /// Uniform in [0, 1).
    #[inline]
    pub fn next_f64(&mut self) -> f64 {
        self.inner.random::<f64>()
    }
}

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
