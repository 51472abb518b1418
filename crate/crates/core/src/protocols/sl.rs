//! The select-level draw: a geometric level r and a uniform tag z.

use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SlDraw {
    /// Level, compared first.
    pub r: u32,
    /// Tag, compared second.
    pub z: u64,
}

/// Bounds that make the draw fit a fixed code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SlLimits {
    /// Levels above this are clamped to it.
    pub r_cap: u32,
    /// z is drawn from {1, …, 2^min(8r, z_bits)}.
    pub z_bits: u32,
}

impl SlLimits {
    pub const UNBOUNDED_R: SlLimits = SlLimits {
        r_cap: u32::MAX,
        z_bits: 20,
    };
}

/// P(r = j) = 2^-j: the number of fair coin flips up to and including the
/// first tail.
pub fn draw_level<R: Rng + ?Sized>(rng: &mut R, cap: u32) -> u32 {
    let mut r = 1;
    while r < cap && rng.random_bool(0.5) {
        r += 1;
    }
    r
}

pub fn sl_draw<R: Rng + ?Sized>(rng: &mut R, limits: SlLimits) -> SlDraw {
    let r = draw_level(rng, limits.r_cap);
    let bits = (8 * u64::from(r)).min(u64::from(limits.z_bits)) as u32;
    let z = rng.random_range(1..=(1u64 << bits));
    SlDraw { r, z }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn level_one_has_probability_half() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let n = 100_000;
        let ones = (0..n)
            .filter(|_| sl_draw(&mut rng, SlLimits::UNBOUNDED_R).r == 1)
            .count();
        let p = ones as f64 / n as f64;
        assert!((p - 0.5).abs() < 0.01, "P(r=1) = {p}");
    }

    #[test]
    fn z_in_range_and_cap_respected() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let lim = SlLimits { r_cap: 3, z_bits: 20 };
        for _ in 0..10_000 {
            let d = sl_draw(&mut rng, lim);
            assert!((1..=3).contains(&d.r));
            let hi = 1u64 << (8 * d.r).min(20);
            assert!(d.z >= 1 && d.z <= hi);
        }
    }

    #[test]
    fn draws_order_by_level_then_tag() {
        assert!(SlDraw { r: 2, z: 1 } > SlDraw { r: 1, z: 200 });
        assert!(SlDraw { r: 2, z: 5 } > SlDraw { r: 2, z: 4 });
    }
}
