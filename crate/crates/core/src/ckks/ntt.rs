//! Negacyclic number-theoretic transform over `Z_q[X]/(X^N + 1)`.

use super::arith::Modulus;
use super::primes::primitive_root;

#[derive(Clone, Debug)]
pub struct NttTable {
    pub modulus: Modulus,
    n: usize,
    /// psi^bitrev(i) and its Shoup companion.
    fwd: Vec<(u64, u64)>,
    /// psi^-bitrev(i) and its Shoup companion.
    inv: Vec<(u64, u64)>,
    n_inv: (u64, u64),
}

fn bit_reverse(x: usize, bits: u32) -> usize {
    if bits == 0 {
        0
    } else {
        x.reverse_bits() >> (usize::BITS - bits)
    }
}

impl NttTable {
    pub fn new(q: u64, n: usize) -> Self {
        assert!(n.is_power_of_two() && n >= 2);
        let m = Modulus::new(q);
        let psi = primitive_root(q, 2 * n as u64);
        let psi_inv = m.inv(psi);
        let bits = n.trailing_zeros();
        let mut fwd = vec![(0, 0); n];
        let mut inv = vec![(0, 0); n];
        let mut p = 1u64;
        let mut pi = 1u64;
        for i in 0..n {
            let r = bit_reverse(i, bits);
            fwd[r] = (p, m.shoup(p));
            inv[r] = (pi, m.shoup(pi));
            p = m.mul(p, psi);
            pi = m.mul(pi, psi_inv);
        }
        let ninv = m.inv(n as u64);
        NttTable {
            modulus: m,
            n,
            fwd,
            inv,
            n_inv: (ninv, m.shoup(ninv)),
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// In-place forward transform, natural order in, bit-reversed order out.
    pub fn forward(&self, a: &mut [u64]) {
        debug_assert_eq!(a.len(), self.n);
        let m = &self.modulus;
        let mut t = self.n;
        let mut groups = 1;
        while groups < self.n {
            t >>= 1;
            for i in 0..groups {
                let (w, ws) = self.fwd[groups + i];
                let j1 = 2 * i * t;
                let (lo, hi) = a[j1..j1 + 2 * t].split_at_mut(t);
                for (x, y) in lo.iter_mut().zip(hi.iter_mut()) {
                    let u = *x;
                    let v = m.mul_shoup(*y, w, ws);
                    *x = m.add(u, v);
                    *y = m.sub(u, v);
                }
            }
            groups <<= 1;
        }
    }

    /// In-place inverse of [`NttTable::forward`].
    pub fn inverse(&self, a: &mut [u64]) {
        debug_assert_eq!(a.len(), self.n);
        let m = &self.modulus;
        let mut t = 1;
        let mut groups = self.n;
        while groups > 1 {
            let h = groups >> 1;
            for i in 0..h {
                let (w, ws) = self.inv[h + i];
                let j1 = 2 * i * t;
                let (lo, hi) = a[j1..j1 + 2 * t].split_at_mut(t);
                for (x, y) in lo.iter_mut().zip(hi.iter_mut()) {
                    let u = *x;
                    let v = *y;
                    *x = m.add(u, v);
                    *y = m.mul_shoup(m.sub(u, v), w, ws);
                }
            }
            t <<= 1;
            groups = h;
        }
        let (ni, nis) = self.n_inv;
        for x in a.iter_mut() {
            *x = m.mul_shoup(*x, ni, nis);
        }
    }
}
