//! Counter-based random substreams.
//!
//! Every ensemble member draws from its own ChaCha stream keyed by
//! `(master seed, purpose, member index)`, so results never depend on the
//! order or the thread in which members are processed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// What a substream is used for. Distinct purposes never share key material.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Purpose {
    Trajectory,
    Photons,
    DarkCounts,
}

impl Purpose {
    fn tag(self) -> u64 {
        match self {
            Purpose::Trajectory => 0x7472_616a,
            Purpose::Photons => 0x7068_6f74,
            Purpose::DarkCounts => 0x6461_726b,
        }
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// The generator for member `index` of an ensemble seeded by `master`.
pub fn substream(master: u64, purpose: Purpose, index: u64) -> ChaCha8Rng {
    let key = splitmix64(master ^ splitmix64(purpose.tag()));
    let mut rng = ChaCha8Rng::seed_from_u64(key);
    rng.set_stream(index);
    rng
}

/// Seed recorded on the trajectory of ensemble member `index`.
pub fn member_seed(master: u64, index: u64) -> u64 {
    splitmix64(master.wrapping_add(splitmix64(index)))
}
