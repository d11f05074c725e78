//! Stage-salted seeding: every random stream derives from one root seed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Derive a sub-seed from `root` and a textual salt (stage name, prompt id, ...).
pub fn derive(root: u64, salt: &str) -> u64 {
    // FNV-1a over the salt, then a splitmix64 finalizer mixed with the root.
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for byte in salt.bytes() {
        hash ^= u64::from(byte);
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    splitmix(root ^ splitmix(hash))
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn salted_rng(root: u64, salt: &str) -> ChaCha8Rng {
    rng(derive(root, salt))
}
