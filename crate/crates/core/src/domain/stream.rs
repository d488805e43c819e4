use chrono::NaiveDate;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

/// Names an independent random stream.
///
/// The generator is seeded from the run seed alone; the key's parts are
/// hashed (FNV-1a) into the ChaCha stream id. Two tasks with different
/// keys never share a stream, and a task's draws do not depend on when or
/// where it runs.
#[derive(Debug, Clone, Copy)]
pub struct StreamKey {
    seed: u64,
    hash: u64,
}

impl StreamKey {
    pub fn new(seed: u64) -> Self {
        StreamKey { seed, hash: FNV_OFFSET }
    }

    pub fn with(mut self, part: impl AsRef<[u8]>) -> Self {
        for &b in part.as_ref() {
            self.hash = (self.hash ^ b as u64).wrapping_mul(FNV_PRIME);
        }
        // separator so ("ab", "c") and ("a", "bc") differ
        self.hash = (self.hash ^ 0xff).wrapping_mul(FNV_PRIME);
        self
    }

    pub fn with_u64(self, v: u64) -> Self {
        self.with(v.to_le_bytes())
    }

    pub fn with_date(self, date: NaiveDate) -> Self {
        self.with(date.format("%Y-%m-%d").to_string())
    }

    pub fn rng(self) -> StreamRng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.hash);
        rng
    }
}
