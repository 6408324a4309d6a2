//! Random streams and complex Gaussian draws.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Stream index reserved for draws shared by all trials of an experiment.
pub const SHARED_STREAM: u64 = u64::MAX;

/// Independent stream `index` of the generator family keyed by `master`.
///
/// Streams are addressed by index, so adding trials never changes earlier ones.
pub fn stream(master: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(index);
    rng
}

/// Circularly symmetric complex normal with unit variance.
#[inline]
pub fn complex_normal<R: Rng + ?Sized>(rng: &mut R) -> Complex64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

pub fn fill_complex_normal<R: Rng + ?Sized>(rng: &mut R, out: &mut [Complex64], std_dev: f64) {
    for x in out.iter_mut() {
        *x = complex_normal(rng) * std_dev;
    }
}

/// Uniform phase in `[0, 2pi)`.
pub fn uniform_phase<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.random::<f64>() * std::f64::consts::TAU
}
