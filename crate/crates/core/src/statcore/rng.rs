use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};

/// Largest degrees of freedom for which chi-square variates are built as a
/// sum of squared normals.
const CHI_SQUARE_DIRECT_MAX: u64 = 100;

/// A reproducible random stream addressed by `(seed, stream_id)`.
///
/// Backed by ChaCha8 with the stream id mapped onto the cipher's stream
/// counter, so distinct ids never overlap and the sequence does not depend
/// on platform or thread count.
#[derive(Debug, Clone)]
pub struct RngStream {
    seed: u64,
    stream_id: u64,
    rng: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream_id);
        Self {
            seed,
            stream_id,
            rng,
        }
    }

    /// Stream whose id is the [`stream_key`] of `coordinates`.
    pub fn for_coordinates(seed: u64, coordinates: &[u64]) -> Self {
        Self::new(seed, stream_key(coordinates))
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    /// Uniform draw on the open interval (0, 1).
    pub fn uniform(&mut self) -> f64 {
        ((self.rng.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
    }

    pub fn normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.rng)
    }

    /// Chi-square variate with `df` degrees of freedom.
    pub fn chi_square(&mut self, df: u64) -> f64 {
        if df == 0 {
            return 0.0;
        }
        if df <= CHI_SQUARE_DIRECT_MAX {
            (0..df).map(|_| self.normal().powi(2)).sum()
        } else {
            Gamma::new(df as f64 / 2.0, 2.0)
                .expect("positive shape and scale")
                .sample(&mut self.rng)
        }
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.rng.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.rng.fill_bytes(dst)
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Order-sensitive, platform-independent hash of stream coordinates
/// (scenario, replicate, model, copy, step, ...).
pub fn stream_key(coordinates: &[u64]) -> u64 {
    coordinates
        .iter()
        .fold(0x6A09_E667_F3BC_C908u64, |acc, &c| {
            splitmix64(acc ^ splitmix64(c.wrapping_add(0x3C6E_F372_FE94_F82B)))
        })
}
