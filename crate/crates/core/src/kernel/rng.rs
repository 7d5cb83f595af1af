//! Seeded random streams.
//!
//! Every consumer of randomness owns its own [`RngStream`], keyed by the run's
//! master seed and a [`StreamId`]. ChaCha's native stream selector keeps the
//! sequences independent, so how much one component draws never perturbs what
//! another component sees.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// What a stream is used for; combined with an index into a [`StreamId`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u32)]
pub enum StreamKind {
    CoreThink = 1,
    CoreTransaction = 2,
    OpenLoopPort = 3,
    EdgeShuffle = 4,
    SwitchShuffle = 5,
    Service = 6,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct StreamId(pub u64);

impl StreamId {
    pub fn new(kind: StreamKind, index: u32) -> Self {
        StreamId(((kind as u64) << 32) | index as u64)
    }
}

#[derive(Debug, Clone)]
pub struct RngStream {
    master_seed: u64,
    stream_id: StreamId,
    rng: ChaCha8Rng,
}

impl RngStream {
    pub fn new(master_seed: u64, stream_id: StreamId) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
        rng.set_stream(stream_id.0);
        RngStream {
            master_seed,
            stream_id,
            rng,
        }
    }

    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }

    pub fn stream_id(&self) -> StreamId {
        self.stream_id
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.rng.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.rng.fill_bytes(dst)
    }
}
