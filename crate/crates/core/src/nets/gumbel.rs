use rand::Rng;

use crate::error::{Error, Result};
use crate::numkernel::{argmax, softmax_row};

/// A standard Gumbel draw, `-ln(-ln u)` with `u` in the open unit interval.
pub fn sample_gumbel<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    loop {
        let u: f64 = rng.random();
        if u > 0.0 && u < 1.0 {
            return -(-u.ln()).ln();
        }
    }
}

/// Relaxed one-hot sample `softmax((logits + g) / temperature)`. With `hard`
/// the result is the exact one-hot at the perturbed argmax (inside a graph the
/// straight-through op routes gradients through the soft sample).
pub fn gumbel_softmax<R: Rng + ?Sized>(
    logits: &[f64],
    temperature: f64,
    rng: &mut R,
    hard: bool,
) -> Result<Vec<f64>> {
    if !(temperature > 0.0) || !temperature.is_finite() {
        return Err(Error::invalid(format!(
            "temperature must be positive, got {temperature}"
        )));
    }
    if logits.is_empty() || logits.iter().any(|l| !l.is_finite()) {
        return Err(Error::invalid("logits must be finite and non-empty"));
    }
    let perturbed: Vec<f64> = logits
        .iter()
        .map(|l| (l + sample_gumbel(rng)) / temperature)
        .collect();
    let soft = softmax_row(&perturbed);
    if hard {
        let mut out = vec![0.0; soft.len()];
        out[argmax(&perturbed)] = 1.0;
        Ok(out)
    } else {
        Ok(soft)
    }
}

/// Linear temperature anneal from `start` to `end` over `total` steps.
pub fn annealed_temperature(start: f64, end: f64, step: usize, total: usize) -> f64 {
    if total <= 1 {
        return end;
    }
    let frac = (step as f64 / (total - 1) as f64).min(1.0);
    start + (end - start) * frac
}
