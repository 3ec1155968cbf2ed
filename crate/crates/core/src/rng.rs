//! Seeded, splittable random streams and the weight samplers.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::matrix::RealMatrix;

/// A reproducible random stream identified by `(seed, stream_id)`.
///
/// Backed by ChaCha8 with the stream id mapped onto ChaCha's native stream
/// counter, so distinct ids never overlap and trial `k` can be drawn on any
/// thread in any order.
#[derive(Clone, Debug)]
pub struct RngStream {
    seed: u64,
    stream_id: u64,
    rng: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream_id);
        RngStream {
            seed,
            stream_id,
            rng,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    /// Independent child stream for a sub-task (a head, a block, a draw).
    /// Derivation depends only on `(seed, stream_id, index)`, not on how much
    /// of the parent has been consumed.
    pub fn substream(&self, index: u64) -> RngStream {
        RngStream::new(self.seed, splitmix64(self.stream_id ^ splitmix64(index.wrapping_add(1))))
    }

    pub fn next_f64(&mut self) -> f64 {
        self.rng.random::<f64>()
    }

    pub fn next_u64(&mut self) -> u64 {
        self.rng.random::<u64>()
    }

    pub fn standard_normal(&mut self) -> f64 {
        self.rng.sample(StandardNormal)
    }

    /// Uniform on the open interval (−scale, scale).
    pub fn symmetric_uniform(&mut self, scale: f64) -> f64 {
        loop {
            let v = scale * (2.0 * self.rng.random::<f64>() - 1.0);
            if v > -scale {
                return v;
            }
        }
    }

    pub(crate) fn fill_normal(&mut self, out: &mut [f64], std: f64) {
        for v in out {
            *v = std * self.standard_normal();
        }
    }
}

pub(crate) fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// i.i.d. `N(0, std²)` entries.
pub fn sample_gaussian(rng: &mut RngStream, rows: usize, cols: usize, std: f64) -> Result<RealMatrix> {
    if !(std > 0.0 && std.is_finite()) {
        return Err(Error::InvalidParameter(format!("gaussian std must be positive, got {std}")));
    }
    let mut m = RealMatrix::zeros(rows, cols);
    rng.fill_normal(m.as_mut_slice(), std);
    Ok(m)
}

/// i.i.d. entries uniform on (−scale, scale).
pub fn sample_uniform_scaled(rng: &mut RngStream, rows: usize, cols: usize, scale: f64) -> Result<RealMatrix> {
    if !(scale > 0.0 && scale.is_finite()) {
        return Err(Error::InvalidParameter(format!("uniform scale must be positive, got {scale}")));
    }
    let mut m = RealMatrix::zeros(rows, cols);
    for v in m.as_mut_slice() {
        *v = rng.symmetric_uniform(scale);
    }
    Ok(m)
}

/// Xavier/Glorot uniform: bound `√(6/(fan_in + fan_out))`.
pub fn sample_xavier_uniform(rng: &mut RngStream, fan_in: usize, fan_out: usize) -> Result<RealMatrix> {
    let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
    sample_uniform_scaled(rng, fan_in, fan_out, bound)
}
