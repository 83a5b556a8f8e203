//! Seeded synthetic images for benchmarks and tests.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::image::{Image, Pixel};

/// Uniform noise over the full range of integer types, or `[-1000, 1000)`
/// for floats.
pub fn random_image<T: Pixel>(width: usize, height: usize, seed: u64) -> Image<T> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (lo, hi) = range::<T>();
    Image::from_fn(width, height, |_, _| sample(&mut rng, lo, hi)).expect("non-empty")
}

/// Noise restricted to `levels` distinct values, which produces plateaus and
/// ties.
pub fn random_levels<T: Pixel>(width: usize, height: usize, levels: u32, seed: u64) -> Image<T> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (lo, hi) = range::<T>();
    let step = ((hi - lo) / levels.max(1) as f64).floor().max(1.0);
    Image::from_fn(width, height, |_, _| {
        let k = rng.gen_range(0..levels.max(1)) as f64;
        T::from_f64((lo + k * step).min(hi).floor()).expect("in range")
    })
    .expect("non-empty")
}

fn range<T: Pixel>() -> (f64, f64) {
    if T::ELEM.is_float() {
        (-1000.0, 1000.0)
    } else {
        (0.0, T::HIGHEST.to_f64())
    }
}

fn sample<T: Pixel>(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> T {
    if T::ELEM.is_float() {
        // quantize so values are exact in f32
        let v = rng.gen_range(lo..hi);
        T::from_f64(((v * 256.0).round() / 256.0) as f32 as f64).expect("finite")
    } else {
        T::from_f64(rng.gen_range(lo as u64..=hi as u64) as f64).expect("in range")
    }
}
