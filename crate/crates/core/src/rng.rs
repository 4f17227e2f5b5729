//! Counter-addressed random streams: every `(seed, stream, step)` triple
//! names an independent ChaCha keystream position, so draws do not depend
//! on scheduling order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Words reserved per step inside one stream.
const STEP_SHIFT: u32 = 40;

pub fn stream(seed: u64, stream: u64, step: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng.set_word_pos((step as u128) << STEP_SHIFT);
    rng
}
