use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Independent random streams used within one trial.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Topology = 1,
    Dither = 2,
    Noise = 3,
    Input = 4,
}

/// Counter-based generator: the ChaCha key is the tuple
/// `(master, cell, trial, stream)` itself, so every trial's draws are fixed
/// by its coordinates alone, independent of scheduling order.
pub fn trial_rng(master: u64, cell: u64, trial: u64, stream: Stream) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    for (chunk, word) in key.chunks_exact_mut(8).zip([master, cell, trial, stream as u64]) {
        chunk.copy_from_slice(&word.to_le_bytes());
    }
    ChaCha8Rng::from_seed(key)
}
