//! Order-independent deterministic randomness: every draw is a pure
//! function of the run seed and a label, so two runs that issue the same
//! calls in a different interleaving see identical values.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

pub fn mix(seed: u64, parts: &[&[u8]]) -> u64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    for p in parts {
        h.update((p.len() as u64).to_le_bytes());
        h.update(p);
    }
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().expect("8 bytes"))
}

/// Uniform in [0, 1).
pub fn unit(h: u64) -> f64 {
    (h >> 11) as f64 / (1u64 << 53) as f64
}

pub fn rng(h: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(h)
}

pub fn hex8(h: u64) -> String {
    format!("{:08x}", h as u32)
}
