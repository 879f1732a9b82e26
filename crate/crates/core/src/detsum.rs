//! Order-invariant exact summation of `f64` values.
//!
//! Kernel sums and energy reductions in this crate must not depend on the
//! order in which terms are visited: permuting the components of a shape
//! graph, reversing edge orientations, or changing the parallel work split
//! permutes summands, and a plain left-to-right (or tree) reduction would leak
//! that order into the last bits of the result. [`ExactSum`] accumulates
//! addends into a fixed-point register wide enough for the whole `f64` range,
//! so the final [`ExactSum::value`] is the true real sum rounded once to
//! nearest-even. Integer addition commutes, hence the result is bitwise
//! identical for any ordering or partitioning of the same multiset of terms.

/// Number of 32-bit windows. Covers positions `2^-1088 .. 2^1088` in the
/// scaled integer, leaving headroom above the largest finite `f64`.
const LIMBS: usize = 68;

/// Scaling offset: an addend `m * 2^e` lands at bit `e + OFFSET >= 14`.
const OFFSET: i32 = 1088;

/// Carry-propagate after this many pushes so limbs stay below `i64` range.
const NORMALIZE_EVERY: u32 = 1 << 30;

const MASK32: i64 = 0xffff_ffff;

/// Exact fixed-point accumulator for `f64` addends.
#[derive(Clone)]
pub struct ExactSum {
    limbs: [i64; LIMBS],
    /// Implicit `wrap * 2^(32*LIMBS)` term produced by carry propagation of
    /// negative totals.
    wrap: i64,
    pending: u32,
    saw_nan: bool,
    saw_pos_inf: bool,
    saw_neg_inf: bool,
}

impl Default for ExactSum {
    fn default() -> Self {
        Self::new()
    }
}

impl ExactSum {
    pub fn new() -> Self {
        ExactSum {
            limbs: [0; LIMBS],
            wrap: 0,
            pending: 0,
            saw_nan: false,
            saw_pos_inf: false,
            saw_neg_inf: false,
        }
    }

    /// Add one addend. Exact: no rounding occurs until [`Self::value`].
    #[inline]
    pub fn push(&mut self, x: f64) {
        let bits = x.to_bits();
        let raw_exp = ((bits >> 52) & 0x7ff) as i32;
        let frac = bits & ((1u64 << 52) - 1);
        if raw_exp == 0x7ff {
            if frac != 0 {
                self.saw_nan = true;
            } else if bits >> 63 == 0 {
                self.saw_pos_inf = true;
            } else {
                self.saw_neg_inf = true;
            }
            return;
        }
        let (mantissa, exp) = if raw_exp == 0 {
            if frac == 0 {
                return; // ±0 contributes nothing
            }
            (frac, -1074i32)
        } else {
            (frac | (1u64 << 52), raw_exp - 1075)
        };
        let pos = exp + OFFSET; // >= 14
        let limb = (pos >> 5) as usize;
        let shift = (pos & 31) as u32;
        let wide = (mantissa as u128) << shift; // < 2^85
        let c0 = (wide & 0xffff_ffff) as i64;
        let c1 = ((wide >> 32) & 0xffff_ffff) as i64;
        let c2 = (wide >> 64) as i64;
        if bits >> 63 == 0 {
            self.limbs[limb] += c0;
            self.limbs[limb + 1] += c1;
            self.limbs[limb + 2] += c2;
        } else {
            self.limbs[limb] -= c0;
            self.limbs[limb + 1] -= c1;
            self.limbs[limb + 2] -= c2;
        }
        self.pending += 1;
        if self.pending >= NORMALIZE_EVERY {
            self.normalize();
        }
    }

    /// Fold another accumulator into this one. Exact and order-invariant.
    pub fn absorb(&mut self, mut other: ExactSum) {
        self.normalize();
        other.normalize();
        for (a, b) in self.limbs.iter_mut().zip(other.limbs.iter()) {
            *a += *b;
        }
        self.wrap += other.wrap;
        self.saw_nan |= other.saw_nan;
        self.saw_pos_inf |= other.saw_pos_inf;
        self.saw_neg_inf |= other.saw_neg_inf;
        self.pending = 2;
        self.normalize();
    }

    pub fn merged(mut self, other: ExactSum) -> ExactSum {
        self.absorb(other);
        self
    }

    fn normalize(&mut self) {
        let mut carry: i64 = 0;
        for limb in self.limbs.iter_mut() {
            let v = *limb + carry;
            let lo = v & MASK32;
            carry = (v - lo) >> 32;
            *limb = lo;
        }
        self.wrap += carry;
        self.pending = 0;
    }

    /// The accumulated sum, rounded once to the nearest `f64` (ties to even).
    pub fn value(&mut self) -> f64 {
        if self.saw_nan || (self.saw_pos_inf && self.saw_neg_inf) {
            return f64::NAN;
        }
        if self.saw_pos_inf {
            return f64::INFINITY;
        }
        if self.saw_neg_inf {
            return f64::NEG_INFINITY;
        }
        self.normalize();
        debug_assert!(self.wrap == 0 || self.wrap == -1, "accumulator overflow");
        let negative = self.wrap == -1;
        // Magnitude limbs as u64 < 2^32, two's complement when negative.
        let mut mag = [0u64; LIMBS];
        if negative {
            let mut carry = 1u64;
            for (m, &l) in mag.iter_mut().zip(self.limbs.iter()) {
                let t = ((!(l as u64)) & 0xffff_ffff) + carry;
                *m = t & 0xffff_ffff;
                carry = t >> 32;
            }
        } else {
            for (m, &l) in mag.iter_mut().zip(self.limbs.iter()) {
                *m = l as u64;
            }
        }
        let top = match (0..LIMBS).rev().find(|&l| mag[l] != 0) {
            Some(l) => l,
            None => return 0.0,
        };
        let bit_len = 32 * top as u32 + (64 - mag[top].leading_zeros());
        let sign = if negative { -1.0 } else { 1.0 };
        if bit_len <= 66 {
            // Result is at or below the smallest normal: round at bit 14,
            // the position of 2^-1074 in the scaled integer.
            let mut a: u128 = 0;
            for l in (0..=top.min(2)).rev() {
                a = (a << 32) | mag[l] as u128;
            }
            let mut k = (a >> 14) as u64;
            let guard = (a >> 13) & 1;
            let sticky = (a & 0x1fff) != 0;
            if guard == 1 && (sticky || k & 1 == 1) {
                k += 1;
            }
            return sign * (k as f64) * f64::from_bits(1);
        }
        // Normal (or overflowing) result: round the top 53 bits.
        let limb_at = |l: i64| -> u128 {
            if l < 0 {
                0
            } else {
                mag[l as usize] as u128
            }
        };
        let t = top as i64;
        let window = (limb_at(t) << 96) | (limb_at(t - 1) << 64) | (limb_at(t - 2) << 32)
            | limb_at(t - 3);
        let in_limb = bit_len - 32 * top as u32; // 1..=32
        let shift = 42 + in_limb; // window bits above the guard position
        let top54 = (window >> shift) as u64;
        let mut mantissa = top54 >> 1;
        let guard = top54 & 1;
        let mut sticky = (window & ((1u128 << shift) - 1)) != 0;
        if !sticky && t >= 4 {
            sticky = mag[..(t as usize - 3)].iter().any(|&m| m != 0);
        }
        let mut bit_len = bit_len;
        if guard == 1 && (sticky || mantissa & 1 == 1) {
            mantissa += 1;
            if mantissa == 1 << 53 {
                mantissa >>= 1;
                bit_len += 1;
            }
        }
        let biased = bit_len as i64 - 66;
        if biased >= 2047 {
            return sign * f64::INFINITY;
        }
        let bits = ((biased as u64) << 52) | (mantissa & ((1 << 52) - 1));
        sign * f64::from_bits(bits)
    }
}

/// Sum a slice with a single correctly rounded result.
pub fn det_sum(values: &[f64]) -> f64 {
    let mut acc = ExactSum::new();
    for &v in values {
        acc.push(v);
    }
    acc.value()
}
