//! Canonical-embedding encoder: slot vectors to real polynomial coefficients.

use std::f64::consts::PI;

use num_complex::Complex64;

#[derive(Clone, Debug)]
pub struct Encoder {
    n: usize,
    slots: usize,
    /// 5^j mod 2N
    rot_group: Vec<usize>,
    /// exp(2 pi i k / 2N) for k in 0..=2N
    ksi: Vec<Complex64>,
}

fn bit_reverse_permute<T>(v: &mut [T]) {
    let n = v.len();
    let mut j = 0;
    for i in 1..n {
        let mut bit = n >> 1;
        while j & bit != 0 {
            j ^= bit;
            bit >>= 1;
        }
        j |= bit;
        if i < j {
            v.swap(i, j);
        }
    }
}

impl Encoder {
    pub fn new(n: usize) -> Self {
        let m = 2 * n;
        let slots = n / 2;
        let mut rot_group = Vec::with_capacity(slots);
        let mut g = 1usize;
        for _ in 0..slots {
            rot_group.push(g);
            g = g * 5 % m;
        }
        let ksi = (0..=m)
            .map(|k| Complex64::from_polar(1.0, 2.0 * PI * k as f64 / m as f64))
            .collect();
        Encoder {
            n,
            slots,
            rot_group,
            ksi,
        }
    }

    pub fn slots(&self) -> usize {
        self.slots
    }

    fn fft_special(&self, vals: &mut [Complex64]) {
        let size = vals.len();
        let m = 2 * self.n;
        bit_reverse_permute(vals);
        let mut len = 2;
        while len <= size {
            let lenh = len >> 1;
            let lenq = len << 2;
            for i in (0..size).step_by(len) {
                for j in 0..lenh {
                    let idx = (self.rot_group[j] % lenq) * m / lenq;
                    let u = vals[i + j];
                    let v = vals[i + j + lenh] * self.ksi[idx];
                    vals[i + j] = u + v;
                    vals[i + j + lenh] = u - v;
                }
            }
            len <<= 1;
        }
    }

    fn fft_special_inv(&self, vals: &mut [Complex64]) {
        let size = vals.len();
        let m = 2 * self.n;
        let mut len = size;
        while len >= 1 {
            let lenh = len >> 1;
            let lenq = len << 2;
            for i in (0..size).step_by(len) {
                for j in 0..lenh {
                    let idx = (lenq - self.rot_group[j] % lenq) * m / lenq;
                    let u = vals[i + j] + vals[i + j + lenh];
                    let v = (vals[i + j] - vals[i + j + lenh]) * self.ksi[idx];
                    vals[i + j] = u;
                    vals[i + j + lenh] = v;
                }
            }
            len >>= 1;
        }
        bit_reverse_permute(vals);
        let inv = 1.0 / size as f64;
        for v in vals.iter_mut() {
            *v *= inv;
        }
    }

    /// Real coefficients (before rounding) of the polynomial whose canonical
    /// embedding carries `values * scale`, zero-padded to the slot count.
    pub fn encode(&self, values: &[f64], scale: f64) -> Vec<f64> {
        let mut u: Vec<Complex64> = values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        u.resize(self.slots, Complex64::new(0.0, 0.0));
        self.fft_special_inv(&mut u);
        let mut coeffs = vec![0.0; self.n];
        for (i, z) in u.iter().enumerate() {
            coeffs[i] = z.re * scale;
            coeffs[i + self.slots] = z.im * scale;
        }
        coeffs
    }

    /// Slot values (real parts) of a polynomial given by centered coefficients.
    pub fn decode(&self, coeffs: &[f64], scale: f64) -> Vec<f64> {
        let mut u: Vec<Complex64> = (0..self.slots)
            .map(|i| Complex64::new(coeffs[i] / scale, coeffs[i + self.slots] / scale))
            .collect();
        self.fft_special(&mut u);
        u.into_iter().map(|z| z.re).collect()
    }
}
