use crate::numeric::Scalar;

/// Counter-based deterministic generator (SplitMix64 over `seed + n·phi`).
///
/// The algorithm and constants are fixed so the same seed yields a
/// bit-identical stream on every platform and in every build of this crate;
/// weight initialization, shuffling, dropout, and data noise all flow from
/// one seed through this type.
#[derive(Debug, Clone)]
pub struct Rng {
    seed: u64,
    counter: u64,
}

/// 2^64 / golden ratio; the SplitMix64 increment.
const PHI: u64 = 0x9E37_79B9_7F4A_7C15;

#[inline]
fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        Rng { seed, counter: 0 }
    }

    /// Independent child stream. Children with distinct ids never collide
    /// with each other or with the parent stream.
    pub fn derive(&self, stream: u64) -> Rng {
        Rng::new(mix(self.seed ^ mix(stream.wrapping_mul(PHI).wrapping_add(PHI))))
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        self.counter = self.counter.wrapping_add(1);
        mix(self.seed.wrapping_add(self.counter.wrapping_mul(PHI)))
    }

    /// Uniform in [0, 1) with 53 random bits.
    #[inline]
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform integer in [0, n). `n` must be nonzero.
    #[inline]
    pub fn next_below(&mut self, n: u64) -> u64 {
        ((self.next_u64() as u128 * n as u128) >> 64) as u64
    }

    pub fn uniform<T: Scalar>(&mut self, lo: f64, hi: f64) -> T {
        T::from_f64(lo + (hi - lo) * self.next_f64())
    }

    /// Standard normal via Box-Muller; draws two uniforms per call.
    pub fn normal(&mut self) -> f64 {
        let u1 = 1.0 - self.next_f64();
        let u2 = self.next_f64();
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }

    pub fn fill_uniform<T: Scalar>(&mut self, out: &mut [T], lo: f64, hi: f64) {
        for v in out {
            *v = self.uniform(lo, hi);
        }
    }

    /// In-place Fisher-Yates shuffle.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.next_below(i as u64 + 1) as usize;
            items.swap(i, j);
        }
    }
}
