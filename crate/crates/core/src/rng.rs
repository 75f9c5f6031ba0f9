//! Deterministic pseudo-random numbers for init, shuffling, and synthesis.
//!
//! xoshiro256** with SplitMix64 state seeding. The generator is part of the
//! reproducibility contract: every artifact produced from a given seed must be
//! byte-identical across runs and platforms, so the exact update sequence and
//! the u64-to-f64 and ranged-draw mappings below are all fixed.

/// SplitMix64 step. Used only to expand a seed into generator state.
fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// xoshiro256** generator.
#[derive(Debug, Clone)]
pub struct Rng {
    s: [u64; 4],
}

impl Rng {
    /// Seeds the four state words from `seed` via consecutive SplitMix64 draws.
    pub fn new(seed: u64) -> Self {
        let mut sm = seed;
        let s = [
            splitmix64(&mut sm),
            splitmix64(&mut sm),
            splitmix64(&mut sm),
            splitmix64(&mut sm),
        ];
        Rng { s }
    }

    pub fn next_u64(&mut self) -> u64 {
        let s = &mut self.s;
        let result = s[1].wrapping_mul(5).rotate_left(7).wrapping_mul(9);
        let t = s[1] << 17;
        s[2] ^= s[0];
        s[3] ^= s[1];
        s[1] ^= s[2];
        s[0] ^= s[3];
        s[2] ^= t;
        s[3] = s[3].rotate_left(45);
        result
    }

    /// Uniform in [0, 1): top 53 bits scaled by 2^-53.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform in [lo, hi).
    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next_f64()
    }

    /// Uniform integer in [0, n) by the multiply-shift reduction
    /// (next_u64 * n) >> 64. Not rejection-sampled; the bias at these range
    /// sizes is far below anything observable and the mapping is fixed.
    pub fn range(&mut self, n: u64) -> u64 {
        assert!(n > 0, "range bound must be positive");
        ((self.next_u64() as u128 * n as u128) >> 64) as u64
    }

    /// Uniform integer in [lo, hi] inclusive.
    pub fn range_inclusive(&mut self, lo: u64, hi: u64) -> u64 {
        assert!(lo <= hi, "empty range");
        lo + self.range(hi - lo + 1)
    }

    /// Fisher-Yates shuffle, iterating i from len-1 down to 1 and swapping
    /// with j = range(i+1).
    pub fn shuffle<T>(&mut self, xs: &mut [T]) {
        for i in (1..xs.len()).rev() {
            let j = self.range(i as u64 + 1) as usize;
            xs.swap(i, j);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    // Reference sequences computed with an independent implementation of the
    // published xoshiro256** / SplitMix64 algorithms. Seed 0 additionally
    // matches the generator's widely circulated test vector.
    #[test]
    fn matches_reference_u64_streams() {
        let cases: [(u64, [u64; 5]); 4] = [
            (
                0,
                [
                    0x99ec5f36cb75f2b4,
                    0xbf6e1f784956452a,
                    0x1a5f849d4933e6e0,
                    0x6aa594f1262d2d2c,
                    0xbba5ad4a1f842e59,
                ],
            ),
            (
                1,
                [
                    0xb3f2af6d0fc710c5,
                    0x853b559647364cea,
                    0x92f89756082a4514,
                    0x642e1c7bc266a3a7,
                    0xb27a48e29a233673,
                ],
            ),
            (
                42,
                [
                    0x15780b2e0c2ec716,
                    0x6104d9866d113a7e,
                    0xae17533239e499a1,
                    0xecb8ad4703b360a1,
                    0xfde6dc7fe2ec5e64,
                ],
            ),
            (
                0xDEAD_BEEF,
                [
                    0xc5555444a74d7e83,
                    0x65c30d37b4b16e38,
                    0x54f773200a4efa23,
                    0x429aed75fb958af7,
                    0xfb0e1dd69c255b2e,
                ],
            ),
        ];
        for (seed, expect) in cases {
            let mut rng = Rng::new(seed);
            for (i, want) in expect.iter().enumerate() {
                assert_eq!(rng.next_u64(), *want, "seed {seed} draw {i}");
            }
        }
    }

    #[test]
    fn matches_reference_f64_stream() {
        let mut rng = Rng::new(42);
        let want = [
            0.08386297105988216,
            0.3789802506626686,
            0.6800434110281394,
            0.9246929453253876,
        ];
        for (i, w) in want.iter().enumerate() {
            assert_eq!(rng.next_f64(), *w, "draw {i}");
        }
    }

    #[test]
    fn matches_reference_range_draws() {
        let mut rng = Rng::new(7);
        let got: Vec<u64> = (0..8).map(|_| rng.range(10)).collect();
        assert_eq!(got, [7, 2, 8, 9, 9, 8, 0, 1]);

        let mut rng = Rng::new(123);
        let got: Vec<u64> = (0..6).map(|_| rng.range(3)).collect();
        assert_eq!(got, [0, 2, 1, 0, 1, 2]);
    }

    #[test]
    fn matches_reference_shuffles() {
        let mut rng = Rng::new(42);
        let mut xs: Vec<u64> = (0..8).collect();
        rng.shuffle(&mut xs);
        assert_eq!(xs, [7, 1, 6, 3, 5, 4, 2, 0]);

        let mut rng = Rng::new(9);
        let mut xs: Vec<u64> = (0..5).collect();
        rng.shuffle(&mut xs);
        assert_eq!(xs, [2, 3, 4, 1, 0]);
    }

    #[test]
    fn matches_reference_uniform_draws() {
        let mut rng = Rng::new(5);
        let want = [
            -0.042317754365952864,
            0.020416466626402133,
            0.029909346110204432,
            0.06431005154128344,
        ];
        for (i, w) in want.iter().enumerate() {
            assert_eq!(rng.uniform(-0.1, 0.1), *w, "draw {i}");
        }
    }

    #[test]
    fn f64_stays_in_unit_interval() {
        let mut rng = Rng::new(31337);
        for _ in 0..10_000 {
            let x = rng.next_f64();
            assert!((0.0..1.0).contains(&x));
        }
    }

    #[test]
    fn range_inclusive_covers_bounds() {
        let mut rng = Rng::new(11);
        let mut seen = [false; 4];
        for _ in 0..1000 {
            let v = rng.range_inclusive(2, 5);
            assert!((2..=5).contains(&v));
            seen[(v - 2) as usize] = true;
        }
        assert!(seen.iter().all(|&b| b));
    }

    #[test]
    fn same_seed_same_stream() {
        let mut a = Rng::new(77);
        let mut b = Rng::new(77);
        for _ in 0..100 {
            assert_eq!(a.next_u64(), b.next_u64());
        }
    }
}
