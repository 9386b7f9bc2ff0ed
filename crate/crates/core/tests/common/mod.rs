#![allow(dead_code)]

use promptpainter::ImageBuffer;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// `|a − n| / max(|a|, |n|)`, with a floor on the denominator so that two
/// vanishing values compare as equal.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let scale = analytic.abs().max(numeric.abs()).max(1e-12);
    (analytic - numeric).abs() / scale
}

/// Central difference of `f` along coordinate `i` of `x`.
pub fn central_difference(x: &[f64], i: usize, h: f64, mut f: impl FnMut(&[f64]) -> f64) -> f64 {
    let mut plus = x.to_vec();
    let mut minus = x.to_vec();
    plus[i] += h;
    minus[i] -= h;
    (f(&plus) - f(&minus)) / (2.0 * h)
}

/// Seeded image with values in `[lo, hi]`.
pub fn random_image(h: usize, w: usize, lo: f64, hi: f64, seed: u64) -> ImageBuffer {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let px = (0..h * w * 3).map(|_| rng.random_range(lo..hi)).collect();
    ImageBuffer::new(h, w, px).unwrap()
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
