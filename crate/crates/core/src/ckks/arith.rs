//! Word-sized modular arithmetic for primes below 2^61.

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Modulus {
    q: u64,
    /// floor(2^128 / q) split into (low, high) words.
    ratio: (u64, u64),
}

impl Modulus {
    pub fn new(q: u64) -> Self {
        assert!(q > 1 && q < (1 << 61), "modulus {q} out of range");
        let r = u128::MAX / q as u128;
        // u128::MAX / q == floor(2^128 / q) unless q divides 2^128, impossible for odd q
        Modulus {
            q,
            ratio: (r as u64, (r >> 64) as u64),
        }
    }

    #[inline]
    pub fn value(&self) -> u64 {
        self.q
    }

    #[inline]
    pub fn add(&self, a: u64, b: u64) -> u64 {
        self.correct(a + b)
    }

    /// Maps `[0, 2q)` to `[0, q)` without branching.
    #[inline(always)]
    fn correct(&self, x: u64) -> u64 {
        let t = x.wrapping_sub(self.q);
        let mask = ((t as i64) >> 63) as u64;
        t.wrapping_add(self.q & mask)
    }

    #[inline]
    pub fn sub(&self, a: u64, b: u64) -> u64 {
        let t = a.wrapping_sub(b);
        let mask = ((t as i64) >> 63) as u64;
        t.wrapping_add(self.q & mask)
    }

    #[inline]
    pub fn neg(&self, a: u64) -> u64 {
        if a == 0 {
            0
        } else {
            self.q - a
        }
    }

    /// Barrett reduction of a 128-bit value.
    #[inline]
    pub fn reduce_u128(&self, x: u128) -> u64 {
        let lo = x as u64;
        let hi = (x >> 64) as u64;
        let (r0, r1) = self.ratio;
        let lo_r0_hi = ((lo as u128 * r0 as u128) >> 64) as u64;
        let mid = lo_r0_hi as u128 + lo as u128 * r1 as u128;
        let (mid, carry) = mid.overflowing_add(hi as u128 * r0 as u128);
        let quot = (hi as u128 * r1 as u128)
            .wrapping_add(mid >> 64)
            .wrapping_add((carry as u128) << 64) as u64;
        // the quotient estimate is short by at most 2
        let r = lo.wrapping_sub(quot.wrapping_mul(self.q));
        self.correct(self.correct(r))
    }

    #[inline]
    pub fn reduce(&self, a: u64) -> u64 {
        if a >= self.q {
            self.reduce_u128(a as u128)
        } else {
            a
        }
    }

    #[inline]
    pub fn mul(&self, a: u64, b: u64) -> u64 {
        debug_assert!(a < self.q && b < self.q);
        self.reduce_u128(a as u128 * b as u128)
    }

    /// Precomputed `floor(w * 2^64 / q)` for repeated multiplication by `w`.
    #[inline]
    pub fn shoup(&self, w: u64) -> u64 {
        (((w as u128) << 64) / self.q as u128) as u64
    }

    #[inline]
    pub fn mul_shoup(&self, a: u64, w: u64, w_shoup: u64) -> u64 {
        let qhat = ((a as u128 * w_shoup as u128) >> 64) as u64;
        self.correct(a.wrapping_mul(w).wrapping_sub(qhat.wrapping_mul(self.q)))
    }

    pub fn pow(&self, mut base: u64, mut exp: u64) -> u64 {
        let mut acc = 1 % self.q;
        base = self.reduce(base);
        while exp > 0 {
            if exp & 1 == 1 {
                acc = self.mul(acc, base);
            }
            base = self.mul(base, base);
            exp >>= 1;
        }
        acc
    }

    /// Inverse modulo a prime.
    pub fn inv(&self, a: u64) -> u64 {
        debug_assert!(a % self.q != 0);
        self.pow(a, self.q - 2)
    }

    #[inline]
    pub fn from_i64(&self, v: i64) -> u64 {
        if v >= 0 {
            self.reduce(v as u64)
        } else {
            self.neg(self.reduce(v.unsigned_abs()))
        }
    }

    pub fn from_i128(&self, v: i128) -> u64 {
        v.rem_euclid(self.q as i128) as u64
    }

    /// Representative in `(-q/2, q/2]`.
    #[inline]
    pub fn center(&self, a: u64) -> i64 {
        if a > self.q / 2 {
            a as i64 - self.q as i64
        } else {
            a as i64
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const Q: u64 = 1152921504606584833; // 60-bit NTT prime

    proptest! {
        #[test]
        fn barrett_matches_u128_rem(a in 0..Q, b in 0..Q) {
            let m = Modulus::new(Q);
            prop_assert_eq!(m.mul(a, b), ((a as u128 * b as u128) % Q as u128) as u64);
        }

        #[test]
        fn reduce_u128_any(x in any::<u128>()) {
            let m = Modulus::new(Q);
            prop_assert_eq!(m.reduce_u128(x), (x % Q as u128) as u64);
        }

        #[test]
        fn shoup_matches(a in 0..Q, w in 0..Q) {
            let m = Modulus::new(Q);
            prop_assert_eq!(m.mul_shoup(a, w, m.shoup(w)), m.mul(a, w));
        }

        #[test]
        fn center_round_trips(v in -(Q as i64 / 2)..(Q as i64 / 2)) {
            let m = Modulus::new(Q);
            prop_assert_eq!(m.center(m.from_i64(v)), v);
        }
    }

    #[test]
    fn inverse() {
        let m = Modulus::new(Q);
        for a in [1u64, 2, 12345, Q - 1] {
            assert_eq!(m.mul(a, m.inv(a)), 1);
        }
        let small = Modulus::new(97);
        assert_eq!(small.from_i128(-1), 96);
        assert_eq!(small.sub(3, 5), 95);
        assert_eq!(small.add(96, 5), 4);
    }
}
