use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const RECT_BOUND: f64 = 10.0;

/// Axis-aligned rectangle `(min_x, min_y, max_x, max_y)` inside `[-10, 10]^2`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RectangleConcept {
    pub min_x: f64,
    pub min_y: f64,
    pub max_x: f64,
    pub max_y: f64,
}

impl RectangleConcept {
    pub fn new(min_x: f64, min_y: f64, max_x: f64, max_y: f64) -> Result<Self> {
        let r = RectangleConcept {
            min_x,
            min_y,
            max_x,
            max_y,
        };
        let in_range = r.to_array().iter().all(|v| v.abs() <= RECT_BOUND);
        if !in_range || min_x > max_x || min_y > max_y {
            return Err(Error::invalid(format!("invalid rectangle {:?}", r.to_array())));
        }
        Ok(r)
    }

    pub fn from_slice(v: &[f64]) -> Result<Self> {
        match *v {
            [a, b, c, d] => Self::new(a, b, c, d),
            _ => Err(Error::Dimension {
                what: "rectangle concept",
                expected: 4,
                actual: v.len(),
            }),
        }
    }

    pub fn to_array(&self) -> [f64; 4] {
        [self.min_x, self.min_y, self.max_x, self.max_y]
    }

    pub fn contains(&self, p: [f64; 2]) -> bool {
        (self.min_x..=self.max_x).contains(&p[0]) && (self.min_y..=self.max_y).contains(&p[1])
    }

    /// The two diagonals as corner pairs.
    pub fn diagonals(&self) -> [([f64; 2], [f64; 2]); 2] {
        [
            ([self.min_x, self.min_y], [self.max_x, self.max_y]),
            ([self.max_x, self.min_y], [self.min_x, self.max_y]),
        ]
    }

    pub fn sample<R: Rng + ?Sized>(rng: &mut R) -> Self {
        let mut xs = [uniform(rng, -RECT_BOUND, RECT_BOUND), uniform(rng, -RECT_BOUND, RECT_BOUND)];
        let mut ys = [uniform(rng, -RECT_BOUND, RECT_BOUND), uniform(rng, -RECT_BOUND, RECT_BOUND)];
        xs.sort_by(f64::total_cmp);
        ys.sort_by(f64::total_cmp);
        RectangleConcept {
            min_x: xs[0],
            min_y: ys[0],
            max_x: xs[1],
            max_y: ys[1],
        }
    }

    /// Uniform point in the rectangle.
    pub fn sample_point<R: Rng + ?Sized>(&self, rng: &mut R) -> [f64; 2] {
        [
            uniform(rng, self.min_x, self.max_x),
            uniform(rng, self.min_y, self.max_y),
        ]
    }
}

/// `lo + (hi - lo) * u`; exact `lo` when the interval is degenerate.
pub(crate) fn uniform<R: Rng + ?Sized>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    let u: f64 = rng.random();
    lo + (hi - lo) * u
}
