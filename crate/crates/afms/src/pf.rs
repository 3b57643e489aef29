//! The even-lag product function of a centered block.

use crate::error::{AfmsError, Result};
use crate::model::SignalBlock;
use std::f64::consts::PI;

/// The product function `p[k] = x[-k]·x[k]` on the symmetric index range
/// `k = -K..K`, `K = (length-1)/2`. Even in `k` by construction.
#[derive(Clone, Debug, PartialEq)]
pub struct PfSequence {
    pub values: Vec<f64>,
}

impl PfSequence {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Half range `K`.
    pub fn half_range(&self) -> usize {
        (self.values.len() - 1) / 2
    }

    /// Value at signed index `k` (`|k| <= K`).
    pub fn at(&self, k: i64) -> f64 {
        self.values[(k + self.half_range() as i64) as usize]
    }
}

/// Computes the product function of an odd-length centered block.
///
/// `p[k] = x[-k]·x[k]`, with `x` indexed about the block midpoint;
/// `p[0] = x[0]²`. The two mirror entries are assigned from one product, so
/// evenness is bit-exact.
pub fn product_function(block: &SignalBlock) -> Result<PfSequence> {
    let len = block.len();
    if len % 2 == 0 {
        return Err(AfmsError::InvalidLength(format!(
            "product function requires an odd block length, got {len}"
        )));
    }
    let k_half = (len - 1) / 2;
    let x = &block.samples;
    let mut values = vec![0.0; len];
    for k in 0..=k_half {
        let v = x[k_half - k] * x[k_half + k];
        values[k_half + k] = v;
        values[k_half - k] = v;
    }
    Ok(PfSequence { values })
}

/// [`product_function`] with an optional Hann taper applied over the lag
/// range (even in `k`, so PF evenness is preserved). Tapering defaults off
/// throughout the pipeline; it exists for spectral-leakage experiments.
pub fn product_function_tapered(block: &SignalBlock, hann: bool) -> Result<PfSequence> {
    let mut pf = product_function(block)?;
    if hann {
        let k_half = pf.half_range() as f64;
        for (j, v) in pf.values.iter_mut().enumerate() {
            let k = j as f64 - k_half;
            *v *= 0.5 * (1.0 + (PI * k / (k_half + 1.0)).cos());
        }
    }
    Ok(pf)
}
