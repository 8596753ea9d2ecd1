//! Seeded synthetic tensors for demos and tests.
//!
//! All families draw from `Pcg64` (the PCG XSL RR 128/64 generator), so a
//! seed gives the same tensor on every platform. Every family is tail-zero
//! with band `[-band, band]`.

use rand::{Rng, SeedableRng};
use rand_distr::{Distribution, StandardNormal};
use rand_pcg::Pcg64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{CMat, C64};
use crate::stream::{ClosedFormDesc, ClosedFormFamily, ClosedFormOracle};
use crate::tensor::QtTensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Family {
    /// Independent uniform entries in `[-1, 1] + i[-1, 1]` on every slice.
    RandomBanded,
    /// Gaussian slices damped by `exp(-decay·k²)`: coefficients of smooth tubes.
    SmoothFourier,
    /// Slice energy `ratio^{|k|}` with `ratio = decay`.
    GeometricDecay,
    /// One nonzero slice at `k = 0`.
    DeltaSpike,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub family: Family,
    pub m: usize,
    pub p: usize,
    pub band: u64,
    pub seed: u64,
    pub decay: f64,
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        if self.m == 0 || self.p == 0 {
            return Err(Error::Invalid("m and p must be positive".into()));
        }
        if self.band > 1 << 16 {
            return Err(Error::Invalid(format!("band {} too large", self.band)));
        }
        let ok = match self.family {
            Family::GeometricDecay => self.decay > 0.0 && self.decay < 1.0,
            Family::SmoothFourier => self.decay > 0.0 && self.decay.is_finite(),
            _ => true,
        };
        if !ok {
            return Err(Error::Invalid(format!("decay {} invalid for {:?}", self.decay, self.family)));
        }
        Ok(())
    }

    /// Descriptor of the closed-form oracle behind `geometric-decay`.
    pub fn closed_form(&self) -> Option<ClosedFormDesc> {
        (self.family == Family::GeometricDecay).then_some(ClosedFormDesc {
            m: self.m,
            p: self.p,
            scale: 1.0,
            seed: self.seed,
            family: ClosedFormFamily::GeometricDecay { ratio: self.decay },
        })
    }
}

fn gaussian(m: usize, p: usize, rng: &mut Pcg64) -> CMat {
    CMat::from_fn(m, p, |_, _| C64::new(StandardNormal.sample(rng), StandardNormal.sample(rng)))
}

pub fn synthesize(spec: &SynthSpec) -> Result<QtTensor> {
    spec.validate()?;
    let (m, p) = (spec.m, spec.p);
    let b = spec.band as i64;
    let mut rng = Pcg64::seed_from_u64(spec.seed);
    match spec.family {
        Family::RandomBanded => {
            let slices = (-b..=b)
                .map(|_| CMat::from_fn(m, p, |_, _| C64::new(rng.random_range(-1.0..=1.0), rng.random_range(-1.0..=1.0))))
                .collect();
            QtTensor::from_band(-b, slices)
        }
        Family::SmoothFourier => {
            let slices = (-b..=b)
                .map(|k| gaussian(m, p, &mut rng) * C64::from((-spec.decay * (k * k) as f64).exp()))
                .collect();
            QtTensor::from_band(-b, slices)
        }
        Family::GeometricDecay => ClosedFormOracle::new(spec.closed_form().expect("geometric family"))?.materialize(spec.band),
        Family::DeltaSpike => QtTensor::from_band(0, vec![gaussian(m, p, &mut rng)]),
    }
}
