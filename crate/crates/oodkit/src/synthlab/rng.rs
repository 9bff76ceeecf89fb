//! Deterministic, fully specified PRNG for synthetic data generation.
//!
//! We commit to the exact algorithms so every run (and any reimplementation)
//! reproduces identical streams:
//!
//! * Seeding: splitmix64. State advances by the golden-gamma increment
//!   0x9E3779B97F4A7C15; each output applies the finalizer
//!   `z ^= z >> 30; z *= 0xBF58476D1CE4E5B9; z ^= z >> 27;
//!   z *= 0x94D049BB133111EB; z ^= z >> 31`.
//! * Stream state: xoshiro256++ with the four state words drawn from
//!   splitmix64 of the stream seed. Output is
//!   `rotl(s0 + s3, 23) + s0` followed by the standard state transition.
//! * Uniforms: the top 53 bits scaled by 2^-53, in [0, 1); the Box-Muller
//!   path uses `(bits + 1) * 2^-53` so the logarithm never sees zero.
//! * Gaussians: Box-Muller on consecutive uniform pairs,
//!   z0 = sqrt(-2 ln u1) cos(2 pi u2), z1 = ... sin(...). Vector fills draw
//!   whole pairs and drop the trailing sine for odd lengths.
//!
//! Generation is seed-partitioned: sample i of a generator seeded with `seed`
//! uses the stream `stream_seed(seed, domain, i)`, so rows can be filled in
//! parallel with results identical to a serial fill.

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// splitmix64 over a 64-bit state.
#[derive(Debug, Clone)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        SplitMix64 { state: seed }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(GOLDEN_GAMMA);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }
}

/// Derives the per-stream seed for `(seed, domain, index)`. Domains separate
/// independent uses of the same experiment seed (noise rows, class means, ...).
pub fn stream_seed(seed: u64, domain: u64, index: u64) -> u64 {
    let mut mix = SplitMix64::new(seed ^ domain.wrapping_mul(GOLDEN_GAMMA));
    let base = mix.next_u64();
    let mut per_index = SplitMix64::new(base ^ index.wrapping_add(1).wrapping_mul(GOLDEN_GAMMA));
    per_index.next_u64()
}

/// xoshiro256++ seeded through splitmix64.
#[derive(Debug, Clone)]
pub struct Xoshiro256pp {
    s: [u64; 4],
}

impl Xoshiro256pp {
    pub fn from_seed(seed: u64) -> Self {
        let mut sm = SplitMix64::new(seed);
        let mut s = [sm.next_u64(), sm.next_u64(), sm.next_u64(), sm.next_u64()];
        if s == [0, 0, 0, 0] {
            s[0] = GOLDEN_GAMMA;
        }
        Xoshiro256pp { s }
    }

    pub fn next_u64(&mut self) -> u64 {
        let out = self.s[0]
            .wrapping_add(self.s[3])
            .rotate_left(23)
            .wrapping_add(self.s[0]);
        let t = self.s[1] << 17;
        self.s[2] ^= self.s[0];
        self.s[3] ^= self.s[1];
        self.s[1] ^= self.s[2];
        self.s[0] ^= self.s[3];
        self.s[2] ^= t;
        self.s[3] = self.s[3].rotate_left(45);
        out
    }

    /// Uniform in [0, 1).
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform in (0, 1]; safe under ln().
    fn next_f64_open(&mut self) -> f64 {
        ((self.next_u64() >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// One Box-Muller pair of standard normals.
    pub fn next_gaussian_pair(&mut self) -> (f64, f64) {
        let u1 = self.next_f64_open();
        let u2 = self.next_f64();
        let radius = (-2.0 * u1.ln()).sqrt();
        let angle = 2.0 * std::f64::consts::PI * u2;
        (radius * angle.cos(), radius * angle.sin())
    }

    /// Fills `out` with standard normals, drawing ceil(len/2) pairs and
    /// discarding the trailing sine for odd lengths.
    pub fn fill_gaussian(&mut self, out: &mut [f64]) {
        let mut i = 0;
        while i + 1 < out.len() {
            let (a, b) = self.next_gaussian_pair();
            out[i] = a;
            out[i + 1] = b;
            i += 2;
        }
        if i < out.len() {
            out[i] = self.next_gaussian_pair().0;
        }
    }
}
