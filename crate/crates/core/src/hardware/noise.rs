//! Coefficient range limits and control-error noise of an analog annealer.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Interval;
use crate::qubo::IsingModel;
use crate::seed;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseDistribution {
    /// Uniform on `[−ε·w, +ε·w]` with `w` the range half-width.
    #[default]
    Uniform,
    /// Normal with standard deviation `ε·w`.
    Gaussian,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    pub epsilon: f64,
    pub coupler_range: Interval,
    pub field_range: Interval,
    #[serde(default)]
    pub distribution: NoiseDistribution,
    pub seed: u64,
}

impl NoiseModel {
    pub fn new(epsilon: f64, seed: u64) -> Self {
        NoiseModel {
            epsilon,
            coupler_range: Interval::new(-1.0, 1.0),
            field_range: Interval::new(-2.0, 2.0),
            distribution: NoiseDistribution::Uniform,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.epsilon) {
            return Err(Error::Invalid(format!("epsilon {} outside [0, 1]", self.epsilon)));
        }
        for (name, r) in [("coupler", self.coupler_range), ("field", self.field_range)] {
            if !(r.lo <= 0.0 && r.hi >= 0.0 && r.hi > r.lo) {
                return Err(Error::Invalid(format!("{name} range must contain zero")));
            }
        }
        Ok(())
    }
}

fn half_width(r: Interval) -> f64 {
    0.5 * (r.hi - r.lo)
}

/// Largest factor `≤ 1` that brings `v` inside `r`.
fn fit(v: f64, r: Interval) -> f64 {
    if v > 0.0 && r.hi > 0.0 {
        (r.hi / v).min(1.0)
    } else if v < 0.0 && r.lo < 0.0 {
        (r.lo / v).min(1.0)
    } else if v == 0.0 {
        1.0
    } else {
        0.0
    }
}

/// Uniform factor (≤ 1) that fits every field and coupling into its range.
pub fn range_scale(ising: &IsingModel, noise: &NoiseModel) -> f64 {
    let fields = ising.h.iter().map(|&v| fit(v, noise.field_range));
    let couplers = ising.couplings.values().map(|&v| fit(v, noise.coupler_range));
    fields.chain(couplers).fold(1.0, f64::min)
}

/// Scales the model into the hardware ranges, then perturbs every nonzero
/// coefficient independently. The offset is scaled but not perturbed.
pub fn apply_noise(ising: &IsingModel, noise: &NoiseModel) -> Result<IsingModel> {
    noise.validate()?;
    let scale = range_scale(ising, noise);
    let mut rng = seed::rng(noise.seed);
    let mut out = ising.clone();
    out.offset *= scale;
    let field_w = noise.epsilon * half_width(noise.field_range);
    let coupler_w = noise.epsilon * half_width(noise.coupler_range);
    let draw = |w: f64, rng: &mut rand_chacha::ChaCha8Rng| -> f64 {
        if w == 0.0 {
            return 0.0;
        }
        match noise.distribution {
            NoiseDistribution::Uniform => rng.random_range(-w..=w),
            NoiseDistribution::Gaussian => Normal::new(0.0, w).expect("finite width").sample(rng),
        }
    };
    for h in &mut out.h {
        *h *= scale;
        if *h != 0.0 {
            *h += draw(field_w, &mut rng);
        }
    }
    for j in out.couplings.values_mut() {
        *j *= scale;
        if *j != 0.0 {
            *j += draw(coupler_w, &mut rng);
        }
    }
    Ok(out)
}
