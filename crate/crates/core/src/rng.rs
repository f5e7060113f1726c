//! Hierarchical, schedule-independent random streams.
//!
//! Every stochastic stage derives its own generator from the master seed and
//! a path of integer tags (method index, amputation index, imputation index,
//! tree index, row index, ...). Two runs with the same seed produce the same
//! draws regardless of thread count or task order.

use rand::RngExt;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;

/// Stream tags used as path components. Values are arbitrary but fixed:
/// changing them changes every derived stream.
pub mod stream {
    pub const SYNTH_ROW: u64 = 0x01;
    pub const SYNTH_OUTCOME: u64 = 0x02;
    pub const AMPUTATION: u64 = 0x03;
    pub const METHOD: u64 = 0x04;
    pub const IMPUTATION: u64 = 0x05;
    pub const TREE: u64 = 0x06;
    pub const BOOTSTRAP: u64 = 0x07;
    pub const VARIABLE: u64 = 0x08;
    pub const SWEEP: u64 = 0x09;
}

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derive a child seed from `base` and one tag.
#[inline]
pub fn derive(base: u64, tag: u64) -> u64 {
    splitmix64(base ^ splitmix64(tag.wrapping_mul(0x9e37_79b9_7f4a_7c15)))
}

/// Derive a seed from `base` and a path of tags, folding left.
pub fn derive_path(base: u64, path: &[u64]) -> u64 {
    path.iter().fold(base, |s, &t| derive(s, t))
}

/// Generator for the stream identified by (base, path).
pub fn rng_for(base: u64, path: &[u64]) -> ChaCha12Rng {
    ChaCha12Rng::seed_from_u64(derive_path(base, path))
}

/// Standard normal draw (polar Marsaglia). Kept local so draws do not depend
/// on distribution-crate internals.
pub fn draw_standard_normal<R: RngExt + ?Sized>(rng: &mut R) -> f64 {
    loop {
        let u: f64 = rng.random::<f64>() * 2.0 - 1.0;
        let v: f64 = rng.random::<f64>() * 2.0 - 1.0;
        let s = u * u + v * v;
        if s > 0.0 && s < 1.0 {
            return u * (-2.0 * s.ln() / s).sqrt();
        }
    }
}

/// Gamma(shape, 1) draw via Marsaglia–Tsang; handles shape < 1 by boosting.
pub fn draw_gamma<R: RngExt + ?Sized>(rng: &mut R, shape: f64) -> f64 {
    assert!(shape > 0.0, "gamma shape must be positive");
    if shape < 1.0 {
        let u: f64 = rng.random();
        return draw_gamma(rng, shape + 1.0) * u.powf(1.0 / shape);
    }
    let d = shape - 1.0 / 3.0;
    let c = 1.0 / (9.0 * d).sqrt();
    loop {
        let x = draw_standard_normal(rng);
        let v = (1.0 + c * x).powi(3);
        if v <= 0.0 {
            continue;
        }
        let u: f64 = rng.random();
        if u < 1.0 - 0.0331 * x.powi(4) || u.ln() < 0.5 * x * x + d * (1.0 - v + v.ln()) {
            return d * v;
        }
    }
}

/// Chi-square draw with `df` degrees of freedom.
pub fn draw_chi_square<R: RngExt + ?Sized>(rng: &mut R, df: f64) -> f64 {
    2.0 * draw_gamma(rng, df / 2.0)
}

/// Sample an index from unnormalized nonnegative weights.
pub fn draw_categorical<R: RngExt + ?Sized>(rng: &mut R, weights: &[f64]) -> usize {
    let total: f64 = weights.iter().sum();
    debug_assert!(total > 0.0);
    let mut u = rng.random::<f64>() * total;
    for (i, w) in weights.iter().enumerate() {
        u -= w;
        if u <= 0.0 {
            return i;
        }
    }
    weights.len() - 1
}
