//! RNS-CKKS over `Z[X]/(X^N + 1)`.
//!
//! Data primes are NTT-friendly (`q ≡ 1 mod 2N`). Rescale primes are picked
//! so the canonical scale of every level stays close to `2^scale_bits`.
//! Relinearization and rotations use hybrid key switching with one digit per
//! data prime and a single special prime.

mod arith;
mod backend;
mod context;
mod encoder;
mod keys;
mod ntt;
mod primes;

pub use arith::Modulus;
pub use backend::{CkksBackend, CkksCt};
pub use context::{Context, RnsPoly, SwitchKey, NOISE_STDDEV};
pub use encoder::Encoder;
pub use keys::{galois_element, KeySet};
pub use ntt::NttTable;
pub use primes::{is_prime, largest_ntt_prime, nearest_ntt_prime, primitive_root};
