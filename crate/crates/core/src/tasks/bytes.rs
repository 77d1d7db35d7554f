//! Byte-level language modelling over a user-supplied file.

use std::f64::consts::LN_2;

use crate::error::{Error, Result};

pub const BYTE_VOCAB: usize = 256;
/// Fraction of windows assigned to training; the rest, taken from the end of
/// the file, form the validation split.
pub const TRAIN_FRACTION: f64 = 0.95;

/// Bits per byte and perplexity of a mean negative log-likelihood in nats.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ByteMetrics {
    pub nll: f64,
    pub bpb: f64,
    pub ppl: f64,
}

pub fn bpb_metric(nll_nats_per_byte: f64) -> Result<ByteMetrics> {
    if !(nll_nats_per_byte >= 0.0) || !nll_nats_per_byte.is_finite() {
        return Err(Error::Numeric(format!(
            "negative log-likelihood must be finite and non-negative, got {nll_nats_per_byte}"
        )));
    }
    Ok(ByteMetrics {
        nll: nll_nats_per_byte,
        bpb: nll_nats_per_byte / LN_2,
        ppl: nll_nats_per_byte.exp(),
    })
}

pub fn encode(bytes: &[u8]) -> Vec<usize> {
    bytes.iter().map(|&b| b as usize).collect()
}

pub fn decode(tokens: &[usize]) -> Result<Vec<u8>> {
    tokens
        .iter()
        .map(|&t| u8::try_from(t).map_err(|_| Error::Input(format!("token {t} is not a byte"))))
        .collect()
}

/// Next-byte windows: inputs `bytes[iL .. iL+L]`, targets shifted by one.
/// Returns `(train, validation)`, split by contiguous position.
#[allow(clippy::type_complexity)]
pub fn byte_windows(bytes: &[u8], len: usize) -> Result<(Vec<(Vec<usize>, Vec<usize>)>, Vec<(Vec<usize>, Vec<usize>)>)> {
    if len == 0 {
        return Err(Error::config("window length must be positive"));
    }
    let n = bytes.len().saturating_sub(1) / len;
    if n < 2 {
        return Err(Error::Input(format!(
            "corpus of {} bytes is too short for two windows of {len}",
            bytes.len()
        )));
    }
    let windows: Vec<_> = (0..n)
        .map(|i| {
            let s = i * len;
            (encode(&bytes[s..s + len]), encode(&bytes[s + 1..s + len + 1]))
        })
        .collect();
    let n_train = ((n as f64 * TRAIN_FRACTION).floor() as usize).clamp(1, n - 1);
    let mut train = windows;
    let val = train.split_off(n_train);
    Ok((train, val))
}
