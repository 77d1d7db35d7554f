//! Delayed copy: after a start marker, the model reads a stream of symbols
//! and must emit, at step `t`, the symbol it read at `t - delay`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Token 0 marks the start of the sequence; symbols are tokens
/// `1..=n_symbols` and predict classes `0..n_symbols`.
pub const MARKER: usize = 0;

/// One sequence: input tokens and per-step labels (`None` where there is
/// nothing to recall yet).
pub fn copy_sequence(rng: &mut ChaCha8Rng, len: usize, n_symbols: usize, delay: usize) -> (Vec<usize>, Vec<Option<usize>>) {
    let mut tokens = Vec::with_capacity(len);
    tokens.push(MARKER);
    for _ in 1..len {
        tokens.push(1 + rng.gen_range(0..n_symbols));
    }
    let labels = (0..len)
        .map(|t| {
            (t >= delay + 1).then(|| tokens[t - delay] - 1)
        })
        .collect();
    (tokens, labels)
}

pub fn gen_copy(seed: u64, len: usize, n_symbols: usize, delay: usize, n: usize) -> Result<Vec<(Vec<usize>, Vec<Option<usize>>)>> {
    if delay + 1 >= len {
        return Err(Error::config(format!("copy delay {delay} leaves no answer positions at L={len}")));
    }
    if n_symbols < 2 {
        return Err(Error::config("copy task needs at least two symbols"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..n).map(|_| copy_sequence(&mut rng, len, n_symbols, delay)).collect())
}
