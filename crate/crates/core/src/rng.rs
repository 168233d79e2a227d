//! Seed sub-streams.
//!
//! Every random draw in a run derives from one user seed. Each consumer gets
//! its own ChaCha8 stream selected by a fixed tag, so adding draws in one
//! place never shifts the values drawn somewhere else.
//!
//! | tag                | consumer                                  |
//! |--------------------|-------------------------------------------|
//! | `0x01`             | station configs and base-load jitter      |
//! | `0x02`             | vehicle class assignment                  |
//! | `0x03`             | random station choice in `run_random`     |
//! | `0x04`             | tiny oracle instances                     |
//! | `0x1_0000_0000 + i`| attributes of vehicle `i`                 |

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub const STATIONS: u64 = 0x01;
pub const CLASSES: u64 = 0x02;
pub const RANDOM_CHOICE: u64 = 0x03;
pub const TINY_INSTANCES: u64 = 0x04;
const EV_BASE: u64 = 0x1_0000_0000;

pub fn substream(seed: u64, tag: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(tag);
    rng
}

pub fn ev_stream(seed: u64, index: usize) -> ChaCha8Rng {
    substream(seed, EV_BASE + index as u64)
}
