//! Seed fan-out.
//!
//! A run is driven by one global seed. Each component draws from its own
//! sub-seed, `splitmix64(global ^ stream_tag)`, so re-seeding one component
//! (for example the plant noise) never perturbs another (for example the
//! network initialization).

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub type Rng = ChaCha8Rng;

const PLANT_TAG: u64 = 0x706c_616e_7400_0001;
const WEATHER_TRAIN_TAG: u64 = 0x7765_6174_6800_0002;
const WEATHER_TEST_TAG: u64 = 0x7765_6174_6800_0003;
const AGENT_INIT_TAG: u64 = 0x6167_656e_7400_0004;
const REPLAY_TAG: u64 = 0x7265_706c_6179_0005;

pub fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn rng_from(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Per-component seeds derived from one global seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeedPlan {
    pub plant: u64,
    pub weather_train: u64,
    pub weather_test: u64,
    pub agent_init: u64,
    pub replay: u64,
}

impl SeedPlan {
    pub fn from_global(seed: u64) -> Self {
        Self {
            plant: splitmix64(seed ^ PLANT_TAG),
            weather_train: splitmix64(seed ^ WEATHER_TRAIN_TAG),
            weather_test: splitmix64(seed ^ WEATHER_TEST_TAG),
            agent_init: splitmix64(seed ^ AGENT_INIT_TAG),
            replay: splitmix64(seed ^ REPLAY_TAG),
        }
    }
}
