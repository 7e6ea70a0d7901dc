//! Stateless counter-based random numbers.
//!
//! Every draw is a pure function of `(key, counter)`:
//!
//! ```text
//! mix(z)        = SplitMix64 finalizer:
//!                   z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9
//!                   z = (z ^ (z >> 27)) * 0x94D049BB133111EB
//!                   z ^ (z >> 31)
//! bits(k, i)    = mix(k + (i + 1) * 0x9E3779B97F4A7C15)        (wrapping)
//! uniform(k, i) = (bits(k, i) >> 11) * 2^-53                    in [0, 1)
//! normal(k, i)  = sqrt(-2 ln(1 - uniform(k, 2i))) * cos(2π uniform(k, 2i+1))
//! derive(k, s)  = mix(k ^ fnv1a64(s))
//! derive_index(k, i) = mix(k ^ mix(i + 0x9E3779B97F4A7C15))     (wrapping)
//! ```
//!
//! Child keys for stages, samples or parameters are obtained with
//! [`derive`] (string label) or [`derive_index`] (numeric index), so any
//! stage can be regenerated in isolation from the top-level seed.

use std::f64::consts::PI;

use crate::tensor::Tensor;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

pub fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

pub fn derive(key: u64, label: &str) -> u64 {
    mix(key ^ fnv1a64(label.as_bytes()))
}

pub fn derive_index(key: u64, index: u64) -> u64 {
    mix(key ^ mix(index.wrapping_add(GOLDEN)))
}

/// A keyed stream. Cheap to copy; all methods are pure.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Stream {
    key: u64,
}

impl Stream {
    pub fn new(key: u64) -> Self {
        Stream { key }
    }

    pub fn key(&self) -> u64 {
        self.key
    }

    pub fn child(&self, label: &str) -> Stream {
        Stream::new(derive(self.key, label))
    }

    pub fn child_index(&self, index: u64) -> Stream {
        Stream::new(derive_index(self.key, index))
    }

    pub fn bits(&self, counter: u64) -> u64 {
        mix(self
            .key
            .wrapping_add(counter.wrapping_add(1).wrapping_mul(GOLDEN)))
    }

    pub fn uniform(&self, counter: u64) -> f64 {
        (self.bits(counter) >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn uniform_range(&self, counter: u64, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform(counter)
    }

    pub fn normal(&self, counter: u64) -> f64 {
        let u1 = self.uniform(2 * counter);
        let u2 = self.uniform(2 * counter + 1);
        (-2.0 * (1.0 - u1).ln()).sqrt() * (2.0 * PI * u2).cos()
    }

    /// Integer in `lo..=hi`.
    pub fn int_range(&self, counter: u64, lo: i64, hi: i64) -> i64 {
        let span = (hi - lo + 1) as f64;
        lo + ((self.uniform(counter) * span) as i64).min(hi - lo)
    }
}

impl Stream {
    /// Tensor of `U(lo, hi)` draws, counter = flat index.
    pub fn uniform_tensor(&self, shape: &[usize], lo: f64, hi: f64) -> Tensor {
        Tensor::from_fn(shape, |i| self.uniform_range(i as u64, lo, hi))
    }

    /// Tensor of `N(0, 1)` draws, counter = flat index.
    pub fn normal_tensor(&self, shape: &[usize]) -> Tensor {
        Tensor::from_fn(shape, |i| self.normal(i as u64))
    }
}

/// Sequential convenience wrapper over a [`Stream`].
#[derive(Clone, Debug)]
pub struct Sampler {
    stream: Stream,
    counter: u64,
}

impl Sampler {
    pub fn new(key: u64) -> Self {
        Sampler {
            stream: Stream::new(key),
            counter: 0,
        }
    }

    fn next_counter(&mut self) -> u64 {
        let c = self.counter;
        self.counter += 1;
        c
    }

    pub fn uniform(&mut self) -> f64 {
        let c = self.next_counter();
        self.stream.uniform(c)
    }

    pub fn uniform_range(&mut self, lo: f64, hi: f64) -> f64 {
        let c = self.next_counter();
        self.stream.uniform_range(c, lo, hi)
    }

    pub fn normal(&mut self) -> f64 {
        let c = self.next_counter();
        self.stream.normal(c)
    }

    pub fn int_range(&mut self, lo: i64, hi: i64) -> i64 {
        let c = self.next_counter();
        self.stream.int_range(c, lo, hi)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    // Reference values published in docs/prng.md.
    #[test]
    fn published_test_vectors() {
        let s = Stream::new(42);
        assert_eq!(mix(0), 0);
        assert_eq!(mix(1), 0x5692_161D_100B_05E5);
        assert_eq!(fnv1a64(b""), 0xCBF2_9CE4_8422_2325);
        assert_eq!(fnv1a64(b"noise"), 0x6C09_2771_D207_68D1);
        assert_eq!(s.bits(0), 0xBDD7_3226_2FEB_6E95);
        assert_eq!(s.bits(1), 0x28EF_E333_B266_F103);
        assert_eq!(derive(42, "noise"), 0x26AE_A747_6D32_5B91);
        assert!((s.uniform(0) - 0.741_564_878_771_823_3).abs() < 1e-15);
        assert_eq!(derive_index(42, 0), 0x4579_B960_BB00_7F46);
        assert_eq!(derive_index(42, 1), 0xA9CB_101B_E2F6_824F);
        assert!((s.normal(0) - 0.882_248_906_222_268_8).abs() < 1e-12);
    }

    #[test]
    fn uniform_and_normal_moments() {
        let s = Stream::new(7);
        let n = 200_000u64;
        let mean_u = (0..n).map(|i| s.uniform(i)).sum::<f64>() / n as f64;
        assert!((mean_u - 0.5).abs() < 5e-3);
        let zs: Vec<f64> = (0..n).map(|i| s.normal(i)).collect();
        let m = zs.iter().sum::<f64>() / n as f64;
        let v = zs.iter().map(|z| (z - m) * (z - m)).sum::<f64>() / n as f64;
        assert!(m.abs() < 1e-2);
        assert!((v - 1.0).abs() < 2e-2);
    }

    #[test]
    fn int_range_is_inclusive() {
        let s = Stream::new(3);
        let draws: Vec<i64> = (0..1000).map(|i| s.int_range(i, -2, 2)).collect();
        for k in -2..=2 {
            assert!(draws.contains(&k));
        }
        assert!(draws.iter().all(|&d| (-2..=2).contains(&d)));
    }
}
