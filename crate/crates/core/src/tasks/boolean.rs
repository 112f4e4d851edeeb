//! Shapes that vary in size, color, outline shape and border; concepts
//! constrain one to three of those properties.

use std::fmt;

use rand::seq::IndexedRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numkernel::Tensor;

pub const IMAGE_SIDE: usize = 25;
pub const IMAGE_CHANNELS: usize = 3;
pub const IMAGE_LEN: usize = IMAGE_SIDE * IMAGE_SIDE * IMAGE_CHANNELS;
pub const PROPERTY_DIM: usize = 10;
pub const CANDIDATE_COUNT: usize = 36;

/// Sizes of the four property groups, in vector order.
pub const GROUP_SIZES: [usize; 4] = [3, 3, 2, 2];
/// First vector slot of each group.
pub const GROUP_OFFSETS: [usize; 4] = [0, 3, 6, 8];
pub const GROUP_NAMES: [&str; 4] = ["size", "color", "shape", "border"];
pub const VALUE_NAMES: [&str; PROPERTY_DIM] = [
    "small", "medium", "large", "red", "blue", "green", "square", "circle", "border", "no-border",
];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Size {
    Small,
    Medium,
    Large,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Color {
    Red,
    Blue,
    Green,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Shape {
    Square,
    Circle,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Border {
    Solid,
    None,
}

/// A full property assignment, i.e. one candidate image.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Properties {
    pub size: Size,
    pub color: Color,
    pub shape: Shape,
    pub border: Border,
}

impl Properties {
    /// Value index within each group, in group order.
    pub fn values(&self) -> [usize; 4] {
        [
            self.size as usize,
            self.color as usize,
            self.shape as usize,
            self.border as usize,
        ]
    }

    /// Slots set in the 10-entry property vector.
    pub fn slots(&self) -> [usize; 4] {
        let v = self.values();
        [
            GROUP_OFFSETS[0] + v[0],
            GROUP_OFFSETS[1] + v[1],
            GROUP_OFFSETS[2] + v[2],
            GROUP_OFFSETS[3] + v[3],
        ]
    }

    pub fn from_values(v: [usize; 4]) -> Result<Self> {
        const SIZES: [Size; 3] = [Size::Small, Size::Medium, Size::Large];
        const COLORS: [Color; 3] = [Color::Red, Color::Blue, Color::Green];
        const SHAPES: [Shape; 2] = [Shape::Square, Shape::Circle];
        const BORDERS: [Border; 2] = [Border::Solid, Border::None];
        Ok(Properties {
            size: *SIZES.get(v[0]).ok_or_else(|| bad_value(0, v[0]))?,
            color: *COLORS.get(v[1]).ok_or_else(|| bad_value(1, v[1]))?,
            shape: *SHAPES.get(v[2]).ok_or_else(|| bad_value(2, v[2]))?,
            border: *BORDERS.get(v[3]).ok_or_else(|| bad_value(3, v[3]))?,
        })
    }

    /// Parses a 10-entry 0/1 vector with exactly one value per group.
    pub fn from_vector(bits: &[f64]) -> Result<Self> {
        if bits.len() != PROPERTY_DIM {
            return Err(Error::Dimension {
                what: "property vector",
                expected: PROPERTY_DIM,
                actual: bits.len(),
            });
        }
        let mut values = [0usize; 4];
        for g in 0..4 {
            let set: Vec<usize> = (0..GROUP_SIZES[g])
                .filter(|&i| bits[GROUP_OFFSETS[g] + i] > 0.5)
                .collect();
            match set.as_slice() {
                [one] => values[g] = *one,
                _ => {
                    return Err(Error::invalid(format!(
                        "{} needs exactly one value, got {}",
                        GROUP_NAMES[g],
                        set.len()
                    )))
                }
            }
        }
        Self::from_values(values)
    }

    pub fn to_vector(&self) -> [f64; PROPERTY_DIM] {
        let mut out = [0.0; PROPERTY_DIM];
        for s in self.slots() {
            out[s] = 1.0;
        }
        out
    }

    /// Candidate index, size-major.
    pub fn index(&self) -> usize {
        let v = self.values();
        ((v[0] * 3 + v[1]) * 2 + v[2]) * 2 + v[3]
    }

    pub fn from_index(i: usize) -> Self {
        assert!(i < CANDIDATE_COUNT, "candidate index {i} out of range");
        Self::from_values([i / 12, (i / 4) % 3, (i / 2) % 2, i % 2]).expect("in range")
    }

    /// All 36 candidates in index order.
    pub fn all() -> Vec<Properties> {
        (0..CANDIDATE_COUNT).map(Properties::from_index).collect()
    }
}

fn bad_value(group: usize, v: usize) -> Error {
    Error::invalid(format!("{} value {v} out of range", GROUP_NAMES[group]))
}

impl fmt::Display for Properties {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = self.slots();
        write!(
            f,
            "{} {} {} {}",
            VALUE_NAMES[s[0]], VALUE_NAMES[s[1]], VALUE_NAMES[s[2]], VALUE_NAMES[s[3]]
        )
    }
}

/// Per-group constraint: `Some(value)` if the concept fixes that group.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BooleanConcept {
    constraints: [Option<usize>; 4],
}

impl BooleanConcept {
    pub fn new(constraints: [Option<usize>; 4]) -> Result<Self> {
        for (g, c) in constraints.iter().enumerate() {
            if let Some(v) = c {
                if *v >= GROUP_SIZES[g] {
                    return Err(bad_value(g, *v));
                }
            }
        }
        Ok(BooleanConcept { constraints })
    }

    /// The unconstrained concept; consistent with everything.
    pub fn unconstrained() -> Self {
        BooleanConcept {
            constraints: [None; 4],
        }
    }

    /// Parses a 10-entry 0/1 vector, rejecting two values in one group.
    pub fn from_vector(bits: &[f64]) -> Result<Self> {
        if bits.len() != PROPERTY_DIM {
            return Err(Error::Dimension {
                what: "boolean concept",
                expected: PROPERTY_DIM,
                actual: bits.len(),
            });
        }
        let mut constraints = [None; 4];
        for g in 0..4 {
            let set: Vec<usize> = (0..GROUP_SIZES[g])
                .filter(|&i| bits[GROUP_OFFSETS[g] + i] > 0.5)
                .collect();
            match set.as_slice() {
                [] => {}
                [one] => constraints[g] = Some(*one),
                _ => {
                    return Err(Error::invalid(format!(
                        "concept sets {} values of {}",
                        set.len(),
                        GROUP_NAMES[g]
                    )))
                }
            }
        }
        Ok(BooleanConcept { constraints })
    }

    pub fn constraints(&self) -> [Option<usize>; 4] {
        self.constraints
    }

    pub fn constrained_count(&self) -> usize {
        self.constraints.iter().filter(|c| c.is_some()).count()
    }

    /// Vector slots the concept sets.
    pub fn slots(&self) -> Vec<usize> {
        self.constraints
            .iter()
            .enumerate()
            .filter_map(|(g, c)| c.map(|v| GROUP_OFFSETS[g] + v))
            .collect()
    }

    pub fn to_vector(&self) -> [f64; PROPERTY_DIM] {
        let mut out = [0.0; PROPERTY_DIM];
        for s in self.slots() {
            out[s] = 1.0;
        }
        out
    }

    /// Indices of the candidates consistent with the concept.
    pub fn consistent_candidates(&self) -> Vec<usize> {
        Properties::all()
            .iter()
            .filter(|p| boolean_consistent(p, self))
            .map(Properties::index)
            .collect()
    }

    /// Every concept constraining between one and three groups, optionally
    /// restricted to the given constrained-group counts.
    pub fn all_valid(counts: Option<&[usize]>) -> Vec<BooleanConcept> {
        let mut out = Vec::new();
        let choices = |g: usize| -> Vec<Option<usize>> {
            std::iter::once(None)
                .chain((0..GROUP_SIZES[g]).map(Some))
                .collect()
        };
        for a in choices(0) {
            for b in choices(1) {
                for c in choices(2) {
                    for d in choices(3) {
                        let concept = BooleanConcept {
                            constraints: [a, b, c, d],
                        };
                        let k = concept.constrained_count();
                        let allowed = match counts {
                            Some(list) => list.contains(&k),
                            None => (1..=3).contains(&k),
                        };
                        if allowed {
                            out.push(concept);
                        }
                    }
                }
            }
        }
        out
    }

    /// Picks a constrained-group count uniformly from `counts`, then a concept
    /// uniformly among those with that count.
    pub fn sample<R: Rng + ?Sized>(rng: &mut R, counts: &[usize]) -> Result<Self> {
        let &k = counts
            .choose(rng)
            .ok_or_else(|| Error::invalid("no property counts to sample from"))?;
        if !(1..=3).contains(&k) {
            return Err(Error::invalid(format!("property count {k} outside 1..=3")));
        }
        let pool = Self::all_valid(Some(&[k]));
        Ok(*pool.choose(rng).expect("non-empty for k in 1..=3"))
    }
}

impl fmt::Display for BooleanConcept {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names: Vec<&str> = self.slots().iter().map(|&s| VALUE_NAMES[s]).collect();
        if names.is_empty() {
            write!(f, "anything")
        } else {
            write!(f, "{}", names.join("&"))
        }
    }
}

/// True iff every value the concept constrains is present in `props`.
pub fn boolean_consistent(props: &Properties, concept: &BooleanConcept) -> bool {
    let v = props.values();
    concept
        .constraints
        .iter()
        .zip(v)
        .all(|(c, val)| c.is_none_or(|want| want == val))
}

const HALF_EXTENT: [i64; 3] = [4, 8, 11];

/// Renders a `25 x 25 x 3` image (row-major, channel-last, values in [0, 1]).
pub fn render_boolean_image(props: &Properties) -> Tensor {
    let side = IMAGE_SIDE as i64;
    let center = side / 2;
    let s = HALF_EXTENT[props.size as usize];
    let fill = match props.color {
        Color::Red => [1.0, 0.0, 0.0],
        Color::Blue => [0.0, 0.0, 1.0],
        Color::Green => [0.0, 1.0, 0.0],
    };
    let mut img = Tensor::filled(&[IMAGE_SIDE, IMAGE_SIDE, IMAGE_CHANNELS], 1.0);
    let data = img.data_mut();
    for y in 0..side {
        for x in 0..side {
            let (dx, dy) = (x - center, y - center);
            let (inside, edge) = match props.shape {
                Shape::Square => {
                    let m = dx.abs().max(dy.abs());
                    (m <= s, m == s)
                }
                Shape::Circle => {
                    let d2 = dx * dx + dy * dy;
                    (d2 <= s * s, d2 > (s - 1) * (s - 1))
                }
            };
            if !inside {
                continue;
            }
            let px = if edge && props.border == Border::Solid {
                [0.0, 0.0, 0.0]
            } else {
                fill
            };
            let base = ((y * side + x) as usize) * IMAGE_CHANNELS;
            data[base..base + IMAGE_CHANNELS].copy_from_slice(&px);
        }
    }
    img
}

/// Flattened renders of all candidates, one per row (`36 x 1875`).
pub fn candidate_images() -> Tensor {
    let rows: Vec<Vec<f64>> = Properties::all()
        .iter()
        .map(|p| render_boolean_image(p).into_data())
        .collect();
    Tensor::from_rows(&rows).expect("non-empty")
}
