use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::rectangle::uniform;
use crate::error::{Error, Result};

pub const MODE_RANGE: f64 = 20.0;

/// Mixture `0.5 N(mu1, 1) + 0.5 N(mu2, 1)` with `mu1 < mu2` in `[0, 20]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BimodalConcept {
    pub mu1: f64,
    pub mu2: f64,
}

impl BimodalConcept {
    pub fn new(mu1: f64, mu2: f64) -> Result<Self> {
        let ok = (0.0..=MODE_RANGE).contains(&mu1) && (0.0..=MODE_RANGE).contains(&mu2);
        if !ok || mu1 >= mu2 {
            return Err(Error::invalid(format!("invalid modes ({mu1}, {mu2})")));
        }
        Ok(BimodalConcept { mu1, mu2 })
    }

    pub fn from_slice(v: &[f64]) -> Result<Self> {
        match *v {
            [a, b] => Self::new(a, b),
            _ => Err(Error::Dimension {
                what: "bimodal concept",
                expected: 2,
                actual: v.len(),
            }),
        }
    }

    pub fn to_array(&self) -> [f64; 2] {
        [self.mu1, self.mu2]
    }

    pub fn sample<R: Rng + ?Sized>(rng: &mut R) -> Self {
        loop {
            let mut m = [uniform(rng, 0.0, MODE_RANGE), uniform(rng, 0.0, MODE_RANGE)];
            m.sort_by(f64::total_cmp);
            if m[0] < m[1] {
                return BimodalConcept {
                    mu1: m[0],
                    mu2: m[1],
                };
            }
        }
    }

    pub fn sample_example<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let mode = if rng.random_bool(0.5) {
            self.mu1
        } else {
            self.mu2
        };
        let z: f64 = StandardNormal.sample(rng);
        mode + z
    }

    pub fn density(&self, x: f64) -> f64 {
        let n = |m: f64| (-(x - m) * (x - m) / 2.0).exp() / (2.0 * std::f64::consts::PI).sqrt();
        0.5 * n(self.mu1) + 0.5 * n(self.mu2)
    }
}
