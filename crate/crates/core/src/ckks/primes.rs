//! NTT-friendly prime search.

use super::arith::Modulus;

/// Deterministic Miller-Rabin for all 64-bit inputs.
pub fn is_prime(n: u64) -> bool {
    if n < 2 {
        return false;
    }
    const SMALL: [u64; 12] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37];
    for p in SMALL {
        if n % p == 0 {
            return n == p;
        }
    }
    let mut d = n - 1;
    let mut r = 0;
    while d % 2 == 0 {
        d /= 2;
        r += 1;
    }
    let mulmod = |a: u64, b: u64| ((a as u128 * b as u128) % n as u128) as u64;
    let powmod = |mut b: u64, mut e: u64| {
        let mut acc = 1u64;
        while e > 0 {
            if e & 1 == 1 {
                acc = mulmod(acc, b);
            }
            b = mulmod(b, b);
            e >>= 1;
        }
        acc
    };
    'witness: for a in SMALL {
        let mut x = powmod(a, d);
        if x == 1 || x == n - 1 {
            continue;
        }
        for _ in 1..r {
            x = mulmod(x, x);
            if x == n - 1 {
                continue 'witness;
            }
        }
        return false;
    }
    true
}

/// The prime `q ≡ 1 (mod two_n)` in `[lo, hi]` closest to `target` that is
/// not in `exclude`.
pub fn nearest_ntt_prime(
    target: f64,
    lo: u64,
    hi: u64,
    two_n: u64,
    exclude: &[u64],
) -> Option<u64> {
    let t = target.clamp(lo as f64, hi as f64) as u64;
    let base = t - (t % two_n) + 1;
    let ok = |c: u64| is_prime(c) && !exclude.contains(&c);
    // walk outwards from the candidate nearest to target
    let mut down = Some(base);
    let mut up = base.checked_add(two_n);
    loop {
        let d = down.filter(|&c| c >= lo);
        let u = up.filter(|&c| c <= hi);
        if d.is_none() && u.is_none() {
            return None;
        }
        let mut pair = [d, u];
        if let (Some(a), Some(b)) = (d, u) {
            if b.abs_diff(t) < a.abs_diff(t) {
                pair = [u, d];
            }
        }
        for c in pair.into_iter().flatten() {
            if ok(c) {
                return Some(c);
            }
        }
        down = d.and_then(|c| c.checked_sub(two_n));
        up = u.and_then(|c| c.checked_add(two_n));
    }
}

/// Largest `q ≡ 1 (mod two_n)` below `2^bits` that is not excluded.
pub fn largest_ntt_prime(bits: u32, two_n: u64, exclude: &[u64]) -> Option<u64> {
    let hi = (1u64 << bits) - 1;
    let lo = 1u64 << (bits - 1);
    let mut c = hi - (hi % two_n) + 1;
    if c > hi {
        c -= two_n;
    }
    while c >= lo {
        if is_prime(c) && !exclude.contains(&c) {
            return Some(c);
        }
        c = c.checked_sub(two_n)?;
    }
    None
}

/// Smallest primitive `two_n`-th root of unity modulo prime `q`.
pub fn primitive_root(q: u64, two_n: u64) -> u64 {
    let m = Modulus::new(q);
    let exp = (q - 1) / two_n;
    for g in 2..q {
        let psi = m.pow(g, exp);
        // order divides two_n; it is exactly two_n iff psi^(two_n/2) = -1
        if m.pow(psi, two_n / 2) == q - 1 {
            return psi;
        }
    }
    unreachable!("no primitive root for {q}")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn miller_rabin_known_values() {
        assert!(is_prime(2));
        assert!(is_prime(1152921504606584833));
        assert!(!is_prime(1));
        assert!(!is_prime(561));
        assert!(!is_prime(3215031751));
        assert!(is_prime(18446744073709551557));
        let naive = |n: u64| n >= 2 && (2..).take_while(|d| d * d <= n).all(|d| n % d != 0);
        for n in 0..5000 {
            assert_eq!(is_prime(n), naive(n), "{n}");
        }
    }

    #[test]
    fn ntt_primes_are_congruent() {
        let two_n = 1 << 14;
        let p = largest_ntt_prime(60, two_n, &[]).unwrap();
        assert_eq!(p % two_n, 1);
        assert!(p < 1 << 60 && p > 1 << 59);
        let q = largest_ntt_prime(60, two_n, &[p]).unwrap();
        assert!(q < p);
        let near = nearest_ntt_prime(2f64.powi(40), 1 << 39, 1 << 41, two_n, &[]).unwrap();
        assert_eq!(near % two_n, 1);
        assert!((near as f64 / 2f64.powi(40) - 1.0).abs() < 1e-4);
    }

    #[test]
    fn root_has_exact_order() {
        let two_n = 32u64;
        let q = largest_ntt_prime(30, two_n, &[]).unwrap();
        let m = Modulus::new(q);
        let psi = primitive_root(q, two_n);
        assert_eq!(m.pow(psi, two_n), 1);
        assert_eq!(m.pow(psi, two_n / 2), q - 1);
    }
}
