//! Seed derivation.
//!
//! Every random draw in a run comes from a ChaCha stream keyed by
//! `(master seed, round, purpose)`, so changing how one component consumes
//! randomness never perturbs another.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Purpose {
    Dataset,
    Split,
    InitialAnnotations,
    Folds,
    Classifier,
    Scorer,
    Annotator,
}

impl Purpose {
    fn tag(self) -> u64 {
        match self {
            Purpose::Dataset => 0x6461_7461,
            Purpose::Split => 0x7370_6c69,
            Purpose::InitialAnnotations => 0x696e_6974,
            Purpose::Folds => 0x666f_6c64,
            Purpose::Classifier => 0x636c_6673,
            Purpose::Scorer => 0x7363_6f72,
            Purpose::Annotator => 0x616e_6e6f,
        }
    }
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn derive_seed(master: u64, round: u64, purpose: Purpose) -> u64 {
    splitmix(splitmix(splitmix(master) ^ round) ^ purpose.tag())
}

pub fn derive_rng(master: u64, round: u64, purpose: Purpose) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(master, round, purpose))
}

/// Independent stream for one item (example, fold, model) under a derived seed.
pub fn item_rng(seed: u64, item: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(item);
    rng
}
