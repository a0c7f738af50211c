//! Deterministic random number generation.
//!
//! Every random draw in this crate flows from a [`DetRng`], a xoshiro256++
//! generator seeded through SplitMix64. Both algorithms are fixed and
//! documented (Blackman & Vigna), so seeded fixtures reproduce bit-for-bit
//! across runs, platforms and reimplementations in other languages.
//!
//! Seed derivation for simulator subsystems is [`derive_seed`]: an FNV-1a
//! hash over the byte string
//! `master_seed (8 bytes LE) || module name (UTF-8) || round (8 bytes LE)
//! || client id (8 bytes LE)`, finalized with one SplitMix64 mix step.

/// SplitMix64 step: advances `state` and returns the next output.
#[inline]
pub fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// FNV-1a over a byte slice (64-bit variant).
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xCBF2_9CE4_8422_2325;
    for &b in bytes {
        hash ^= u64::from(b);
        hash = hash.wrapping_mul(0x0000_0100_0000_01B3);
    }
    hash
}

/// Derives a subsystem seed from the master seed.
///
/// The scheme is fixed so that runs are reproducible and independent
/// streams never alias: FNV-1a over
/// `master (LE) || module || round (LE) || client (LE)`, then one
/// SplitMix64 mix of the digest.
pub fn derive_seed(master_seed: u64, module: &str, round: u64, client: u64) -> u64 {
    let mut bytes = Vec::with_capacity(24 + module.len());
    bytes.extend_from_slice(&master_seed.to_le_bytes());
    bytes.extend_from_slice(module.as_bytes());
    bytes.extend_from_slice(&round.to_le_bytes());
    bytes.extend_from_slice(&client.to_le_bytes());
    let mut h = fnv1a64(&bytes);
    splitmix64(&mut h)
}

/// xoshiro256++ generator with deterministic SplitMix64 seeding.
#[derive(Debug, Clone)]
pub struct DetRng {
    state: [u64; 4],
}

impl DetRng {
    /// Seeds the four state words with consecutive SplitMix64 outputs,
    /// the initialization recommended by the xoshiro authors.
    pub fn new(seed: u64) -> Self {
        let mut sm = seed;
        let mut state = [0u64; 4];
        for word in &mut state {
            *word = splitmix64(&mut sm);
        }
        if state.iter().all(|&w| w == 0) {
            state[0] = 0x9E37_79B9_7F4A_7C15;
        }
        DetRng { state }
    }

    /// Next raw 64-bit output.
    pub fn next_u64(&mut self) -> u64 {
        let s = &mut self.state;
        let result = s[0]
            .wrapping_add(s[3])
            .rotate_left(23)
            .wrapping_add(s[0]);
        let t = s[1] << 17;
        s[2] ^= s[0];
        s[3] ^= s[1];
        s[1] ^= s[2];
        s[0] ^= s[3];
        s[2] ^= t;
        s[3] = s[3].rotate_left(45);
        result
    }

    /// Uniform f64 in [0, 1), using the top 53 bits.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform integer in [0, bound) by rejection, bias-free.
    pub fn next_below(&mut self, bound: u64) -> u64 {
        assert!(bound > 0, "bound must be positive");
        let zone = u64::MAX - u64::MAX % bound;
        loop {
            let v = self.next_u64();
            if v < zone {
                return v % bound;
            }
        }
    }

    /// Standard normal draw via Box-Muller (cosine branch).
    ///
    /// Consumes exactly two uniforms per call; no state is cached, so the
    /// stream position is a pure function of the call count.
    pub fn next_gaussian(&mut self) -> f64 {
        // Shift u1 into (0, 1] so ln never sees zero.
        let u1 = ((self.next_u64() >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64);
        let u2 = self.next_f64();
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }

    /// Gamma(shape, 1) draw via Marsaglia-Tsang, with the standard
    /// `shape < 1` boost.
    pub fn next_gamma(&mut self, shape: f64) -> f64 {
        assert!(shape > 0.0, "gamma shape must be positive");
        if shape < 1.0 {
            let boost = self.next_f64().max(f64::MIN_POSITIVE).powf(1.0 / shape);
            return boost * self.next_gamma(shape + 1.0);
        }
        let d = shape - 1.0 / 3.0;
        let c = 1.0 / (9.0 * d).sqrt();
        loop {
            let x = self.next_gaussian();
            let v = (1.0 + c * x).powi(3);
            if v <= 0.0 {
                continue;
            }
            let u = self.next_f64().max(f64::MIN_POSITIVE);
            if u.ln() < 0.5 * x * x + d - d * v + d * v.ln() {
                return d * v;
            }
        }
    }

    /// `count` distinct values from `0..n`, uniform without replacement,
    /// returned in ascending order (partial Fisher-Yates).
    pub fn sample_distinct(&mut self, n: usize, count: usize) -> Vec<usize> {
        assert!(count <= n, "cannot sample {count} from {n}");
        let mut pool: Vec<usize> = (0..n).collect();
        for i in 0..count {
            let j = i + self.next_below((n - i) as u64) as usize;
            pool.swap(i, j);
        }
        let mut picked = pool[..count].to_vec();
        picked.sort_unstable();
        picked
    }
}
