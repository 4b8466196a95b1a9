//! Every random draw in a run derives from one run seed. Each consumer asks
//! for its own ChaCha stream, addressed by purpose and a counter, so draws
//! in one place never shift draws in another.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Purpose {
    Init = 1,
    Shuffle = 2,
    Dropout = 3,
    UnseenWords = 4,
    Synthetic = 5,
}

pub fn stream(seed: u64, purpose: Purpose, counter: u64) -> ChaCha8Rng {
    debug_assert!(counter < 1 << 56);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((purpose as u64) << 56) | counter);
    rng
}
