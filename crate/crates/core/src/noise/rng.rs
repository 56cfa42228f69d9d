//! Counter-based Gaussian streams.
//!
//! Each `(seed, replica)` pair keys a ChaCha8 generator; the mode's
//! canonical id selects the stream and the fine time step selects the
//! position (four 32-bit words per step). A draw therefore depends only on
//! `(seed, replica, mode, step)`, never on the basis size, the time step
//! of the run, or the order in which modes are visited.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::hermite::EigenMode;

/// Identifier written into persisted path headers.
pub const GENERATOR_ID: &str = "chacha8-stream-mode-word-step-boxmuller";

/// Key of one noise realization.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct NoiseKey {
    pub seed: u64,
    pub replica: u64,
}

impl NoiseKey {
    pub fn new(seed: u64, replica: u64) -> Self {
        Self { seed, replica }
    }

    fn key_bytes(&self) -> [u8; 32] {
        let mut k = [0u8; 32];
        k[..8].copy_from_slice(&self.seed.to_le_bytes());
        k[8..16].copy_from_slice(&self.replica.to_le_bytes());
        k[16..24].copy_from_slice(b"hphi4-ou");
        k
    }

    /// Standard normals for `mode`, starting at fine step `start`.
    pub fn stream(&self, mode: &EigenMode, start: u64) -> NormalStream {
        self.raw_stream(mode_stream_id(mode), start)
    }

    pub fn raw_stream(&self, stream: u64, start: u64) -> NormalStream {
        let mut rng = ChaCha8Rng::from_seed(self.key_bytes());
        rng.set_stream(stream);
        rng.set_word_pos(4 * start as u128);
        NormalStream { rng }
    }
}

/// Stream id of a mode, independent of the basis it sits in.
pub fn mode_stream_id(mode: &EigenMode) -> u64 {
    let idx = mode.multi_index();
    let mut id = mode.dim() as u64;
    for &l in idx {
        id = (id << 16) | l as u64;
    }
    id
}

/// Sequential standard normals, one per fine step.
#[derive(Clone, Debug)]
pub struct NormalStream {
    rng: ChaCha8Rng,
}

impl NormalStream {
    /// Box–Muller from two 64-bit draws; the cosine branch only.
    #[inline]
    pub fn next_normal(&mut self) -> f64 {
        let a = self.rng.next_u64();
        let b = self.rng.next_u64();
        let u1 = ((a >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64);
        let u2 = (b >> 11) as f64 * (1.0 / (1u64 << 53) as f64);
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }

    /// Skips `steps` draws.
    pub fn skip(&mut self, steps: u64) {
        let pos = self.rng.get_word_pos();
        self.rng.set_word_pos(pos + 4 * steps as u128);
    }
}
