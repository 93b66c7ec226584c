//! Deterministic helpers for tests that need to steer random draws.

use rand::RngCore;

/// An RNG that replays fixed unit-interval values, cycling when exhausted.
///
/// Each value `v` is encoded so that `gen::<f64>()` returns `v` (up to 2^-53)
/// and `gen_range(0..n)` maps `k / n` to index `k`.
#[derive(Debug, Clone)]
pub struct ScriptedRng {
    words: Vec<u64>,
    next: usize,
}

impl ScriptedRng {
    pub fn new(values: &[f64]) -> Self {
        assert!(!values.is_empty(), "ScriptedRng needs at least one value");
        let words = values
            .iter()
            .map(|&v| {
                assert!((0.0..1.0).contains(&v), "scripted draw {v} outside [0, 1)");
                ((v * (1u64 << 53) as f64) as u64) << 11
            })
            .collect();
        Self { words, next: 0 }
    }
}

impl RngCore for ScriptedRng {
    fn next_u32(&mut self) -> u32 {
        (self.next_u64() >> 32) as u32
    }

    fn next_u64(&mut self) -> u64 {
        let word = self.words[self.next % self.words.len()];
        self.next += 1;
        word
    }

    fn fill_bytes(&mut self, dest: &mut [u8]) {
        for chunk in dest.chunks_mut(8) {
            let bytes = self.next_u64().to_le_bytes();
            chunk.copy_from_slice(&bytes[..chunk.len()]);
        }
    }

    fn try_fill_bytes(&mut self, dest: &mut [u8]) -> Result<(), rand::Error> {
        self.fill_bytes(dest);
        Ok(())
    }
}
