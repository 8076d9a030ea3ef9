//! Length-31 Gold sequence generator (the 3GPP 36.211 pseudo-random
//! sequence): two 31-bit LFSRs, a fixed first-register seed, the second
//! register loaded from `c_init`, and a 1600-step fast-forward before the
//! first output bit.

use num_complex::Complex64;

const FAST_FORWARD: usize = 1600;

/// Streaming generator over the scrambling sequence for one `c_init`.
#[derive(Debug, Clone)]
pub struct GoldSequence {
    x1: u32,
    x2: u32,
}

impl GoldSequence {
    pub fn new(c_init: u32) -> Self {
        let mut gen = Self {
            x1: 1,
            x2: c_init & 0x7fff_ffff,
        };
        for _ in 0..FAST_FORWARD {
            gen.step();
        }
        gen
    }

    #[inline]
    fn step(&mut self) {
        // Registers hold x(n)..x(n+30) in bits 0..30.
        let n1 = ((self.x1 >> 3) ^ self.x1) & 1;
        let n2 = ((self.x2 >> 3) ^ (self.x2 >> 2) ^ (self.x2 >> 1) ^ self.x2) & 1;
        self.x1 = (self.x1 >> 1) | (n1 << 30);
        self.x2 = (self.x2 >> 1) | (n2 << 30);
    }

    /// Next scrambling bit.
    #[inline]
    pub fn next_bit(&mut self) -> u8 {
        let bit = ((self.x1 ^ self.x2) & 1) as u8;
        self.step();
        bit
    }

    /// Next unit-power QPSK symbol from two consecutive bits.
    #[inline]
    pub fn next_qpsk(&mut self) -> Complex64 {
        let b0 = self.next_bit();
        let b1 = self.next_bit();
        Complex64::new(
            (1.0 - 2.0 * f64::from(b0)) * std::f64::consts::FRAC_1_SQRT_2,
            (1.0 - 2.0 * f64::from(b1)) * std::f64::consts::FRAC_1_SQRT_2,
        )
    }
}

/// First `length` bits of the sequence for `c_init`.
pub fn gold_sequence(c_init: u32, length: usize) -> Vec<u8> {
    let mut gen = GoldSequence::new(c_init);
    (0..length).map(|_| gen.next_bit()).collect()
}
