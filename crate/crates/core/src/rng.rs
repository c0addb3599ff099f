//! Counter-based random streams.
//!
//! Every random draw in the crate comes from a ChaCha8 block stream whose
//! key is derived from `(master_seed, domain)` and whose 64-bit stream id is
//! the replication index. Output for replication `i` is therefore a pure
//! function of `(master_seed, domain, i)`, independent of which thread runs
//! it or in what order.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Separates the random streams used for different purposes within one
/// replication.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u64)]
pub enum Domain {
    Observation = 0x6f62_7365_7276_6531,
    Divergence = 0x6469_7665_7267_6532,
    Normalization = 0x6e6f_726d_616c_6933,
    Identity = 0x6964_656e_7469_7434,
    Instances = 0x696e_7374_616e_6335,
}

/// Finalizer of splitmix64, used to spread the seed over the key.
fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn stream_rng(master_seed: u64, domain: Domain, index: u64) -> ChaCha8Rng {
    let words = [
        mix(master_seed),
        mix(master_seed ^ domain as u64),
        master_seed,
        domain as u64,
    ];
    let mut key = [0u8; 32];
    for (chunk, w) in key.chunks_exact_mut(8).zip(words) {
        chunk.copy_from_slice(&w.to_le_bytes());
    }
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(index);
    rng
}

/// Child seed for sub-experiment `index`, so that each can own a full set
/// of streams.
pub fn derive_seed(master_seed: u64, index: u64) -> u64 {
    stream_rng(master_seed, Domain::Instances, index).next_u64()
}
