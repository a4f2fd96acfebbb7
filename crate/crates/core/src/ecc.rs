//! Genie error correction: succeeds exactly when the true raw error count is
//! within the configured capability, and charges a latency linear in that count.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct EccConfig {
    /// Codeword size in bits; one codeword per page.
    pub codeword_bits: usize,
    /// Maximum correctable raw bit errors per codeword.
    pub t_capability: u64,
    pub decode_base_cost: f64,
    pub decode_per_error_cost: f64,
}

impl Default for EccConfig {
    fn default() -> Self {
        EccConfig { codeword_bits: 2048, t_capability: 40, decode_base_cost: 10.0, decode_per_error_cost: 1.0 }
    }
}

impl EccConfig {
    pub fn validate(&self) -> Result<()> {
        if self.codeword_bits == 0 {
            return Err(Error::InvalidConfig("ecc.codeword_bits must be >= 1".into()));
        }
        if !(self.decode_base_cost >= 0.0) || !(self.decode_per_error_cost >= 0.0) {
            return Err(Error::InvalidConfig("ecc costs must be non-negative".into()));
        }
        Ok(())
    }

    /// RBER the code can absorb: `t / codeword_bits`.
    pub fn correctable_rber(&self) -> f64 {
        self.t_capability as f64 / self.codeword_bits as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DecodeOutcome {
    Corrected(u64),
    /// Carries `t + 1`, the count recorded when the true count is unknown.
    Uncorrectable(u64),
}

impl DecodeOutcome {
    pub fn is_corrected(&self) -> bool {
        matches!(self, DecodeOutcome::Corrected(_))
    }

    /// Error count as seen by the controller (capped for uncorrectable reads).
    pub fn error_count(&self) -> u64 {
        match *self {
            DecodeOutcome::Corrected(n) | DecodeOutcome::Uncorrectable(n) => n,
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            DecodeOutcome::Corrected(_) => "corrected",
            DecodeOutcome::Uncorrectable(_) => "uncorrectable",
        }
    }
}

/// Verdict for a raw error count.
pub fn verdict(errors: u64, cfg: &EccConfig) -> DecodeOutcome {
    if errors <= cfg.t_capability {
        DecodeOutcome::Corrected(errors)
    } else {
        DecodeOutcome::Uncorrectable(cfg.t_capability + 1)
    }
}

pub fn hamming(a: &[bool], b: &[bool]) -> Result<u64> {
    if a.len() != b.len() {
        return Err(Error::SizeMismatch { expected: b.len(), actual: a.len() });
    }
    Ok(a.iter().zip(b).filter(|(x, y)| x != y).count() as u64)
}

pub fn decode(read_bits: &[bool], true_bits: &[bool], cfg: &EccConfig) -> Result<DecodeOutcome> {
    Ok(verdict(hamming(read_bits, true_bits)?, cfg))
}

/// Decodes and, on success, hands back the corrected data (the true bits).
pub fn decode_data(read_bits: &[bool], true_bits: &[bool], cfg: &EccConfig) -> Result<(DecodeOutcome, Option<Vec<bool>>)> {
    let out = decode(read_bits, true_bits, cfg)?;
    let data = out.is_corrected().then(|| true_bits.to_vec());
    Ok((out, data))
}

pub fn decode_latency(error_count: u64, cfg: &EccConfig) -> f64 {
    cfg.decode_base_cost + cfg.decode_per_error_cost * error_count as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn cfg() -> EccConfig {
        EccConfig::default()
    }

    fn with_errors(n: usize, len: usize) -> (Vec<bool>, Vec<bool>) {
        let truth = vec![false; len];
        let mut read = truth.clone();
        read.iter_mut().take(n).for_each(|b| *b = true);
        (read, truth)
    }

    #[test]
    fn boundary_at_capability() {
        let (r, t) = with_errors(0, 2048);
        assert_eq!(decode(&r, &t, &cfg()).unwrap(), DecodeOutcome::Corrected(0));
        let (r, t) = with_errors(40, 2048);
        assert_eq!(decode(&r, &t, &cfg()).unwrap(), DecodeOutcome::Corrected(40));
        let (r, t) = with_errors(41, 2048);
        assert_eq!(decode(&r, &t, &cfg()).unwrap(), DecodeOutcome::Uncorrectable(41));
        let (r, t) = with_errors(500, 2048);
        assert_eq!(decode(&r, &t, &cfg()).unwrap(), DecodeOutcome::Uncorrectable(41));
    }

    #[test]
    fn length_mismatch_rejected() {
        assert!(decode(&[true], &[true, false], &cfg()).is_err());
    }

    #[test]
    fn success_returns_truth() {
        let (r, t) = with_errors(3, 64);
        let (out, data) = decode_data(&r, &t, &cfg()).unwrap();
        assert!(out.is_corrected());
        assert_eq!(data.unwrap(), t);
        let (r, t) = with_errors(64, 64);
        assert_eq!(decode_data(&r, &t, &cfg()).unwrap().1, None);
    }

    #[test]
    fn latency_is_linear() {
        let c = cfg();
        assert_eq!(decode_latency(0, &c), c.decode_base_cost);
        let flat = EccConfig { decode_per_error_cost: 0.0, ..c.clone() };
        assert_eq!(decode_latency(0, &flat), decode_latency(1000, &flat));
        let counts = [10u64, 30, 50, 70];
        let half = [5u64, 15, 25, 35];
        let mean = |xs: &[u64]| xs.iter().map(|e| decode_latency(*e, &c)).sum::<f64>() / xs.len() as f64;
        let mean_errors = 40.0;
        assert!((mean(&counts) - mean(&half) - c.decode_per_error_cost * mean_errors / 2.0).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn decode_is_symmetric(a in proptest::collection::vec(any::<bool>(), 0..300), seed in any::<u64>()) {
            let b: Vec<bool> = a.iter().enumerate().map(|(i, x)| x ^ ((seed >> (i % 64)) & 1 == 1)).collect();
            prop_assert_eq!(decode(&a, &b, &cfg()).unwrap(), decode(&b, &a, &cfg()).unwrap());
        }

        #[test]
        fn adding_errors_never_makes_a_page_correctable(n in 0usize..100, extra in 0usize..50) {
            let (r1, t) = with_errors(n, 256);
            let (r2, _) = with_errors((n + extra).min(256), 256);
            let before = decode(&r1, &t, &cfg()).unwrap();
            let after = decode(&r2, &t, &cfg()).unwrap();
            prop_assert!(!( !before.is_corrected() && after.is_corrected()));
        }
    }
}
