//! Contiguous-span masking for the masked sequence-to-sequence objective.

use rand::Rng;

use crate::{Error, Result, TokenSeq, MASK};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MaskConfig {
    /// Fraction of the sentence covered by the span (rounded up).
    pub span_ratio: f64,
    /// Probability that the span starts at position 0.
    pub p_start_zero: f64,
    /// Probability that the span starts at `len / 2`.
    pub p_start_half: f64,
}

impl Default for MaskConfig {
    fn default() -> Self {
        Self {
            span_ratio: 0.5,
            p_start_zero: 0.2,
            p_start_half: 0.2,
        }
    }
}

impl MaskConfig {
    pub fn span_len(&self, len: usize) -> usize {
        ((len as f64 * self.span_ratio).ceil() as usize).clamp(1, len)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MaskedExample {
    pub input: TokenSeq,
    pub target: TokenSeq,
    pub span_start: usize,
    pub span_len: usize,
}

impl MaskedExample {
    /// Splices the target back into the masked input.
    pub fn reconstruct(&self) -> TokenSeq {
        let mut ids = self.input.ids().to_vec();
        ids[self.span_start..self.span_start + self.span_len].copy_from_slice(self.target.ids());
        TokenSeq::new(ids)
    }
}

pub fn mass_mask<R: Rng + ?Sized>(
    seq: &TokenSeq,
    cfg: &MaskConfig,
    rng: &mut R,
) -> Result<MaskedExample> {
    let len = seq.len();
    if len < 2 {
        return Err(Error::TooShortToMask(len));
    }
    let span_len = cfg.span_len(len);
    let last_start = len - span_len;
    let u: f64 = rng.gen();
    let span_start = if u < cfg.p_start_zero {
        0
    } else if u < cfg.p_start_zero + cfg.p_start_half {
        (len / 2).min(last_start)
    } else {
        rng.gen_range(0..=last_start)
    };
    let mut input = seq.ids().to_vec();
    let target = input[span_start..span_start + span_len].to_vec();
    input[span_start..span_start + span_len].fill(MASK);
    Ok(MaskedExample {
        input: TokenSeq::new(input),
        target: TokenSeq::new(target),
        span_start,
        span_len,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Exact start distribution by enumerating the three branches.
    fn start_distribution(len: usize, cfg: &MaskConfig) -> Vec<f64> {
        let span = cfg.span_len(len);
        let n = len - span + 1;
        let mut p = vec![(1.0 - cfg.p_start_zero - cfg.p_start_half) / n as f64; n];
        p[0] += cfg.p_start_zero;
        p[(len / 2).min(len - span)] += cfg.p_start_half;
        p
    }

    fn empirical(len: usize, draws: usize, seed: u64) -> Vec<f64> {
        let cfg = MaskConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let seq = TokenSeq::new((10..10 + len as u32).collect());
        let mut counts = vec![0usize; len];
        for _ in 0..draws {
            counts[mass_mask(&seq, &cfg, &mut rng).unwrap().span_start] += 1;
        }
        counts.iter().map(|&c| c as f64 / draws as f64).collect()
    }

    #[test]
    fn length_two_starts() {
        let cfg = MaskConfig::default();
        assert_eq!(cfg.span_len(2), 1);
        let exact = start_distribution(2, &cfg);
        assert!((exact[0] - 0.5).abs() < 1e-12);
        let emp = empirical(2, 100_000, 1);
        assert!((emp[0] - 0.5).abs() < 0.01, "{emp:?}");
    }

    #[test]
    fn length_ten_starts() {
        let cfg = MaskConfig::default();
        assert_eq!(cfg.span_len(10), 5);
        let exact = start_distribution(10, &cfg);
        assert!((exact[0] - 0.3).abs() < 1e-12);
        assert!((exact[5] - 0.3).abs() < 1e-12);
        let emp = empirical(10, 100_000, 2);
        for (i, e) in exact.iter().enumerate() {
            assert!((emp[i] - e).abs() < 0.01, "start {i}: {} vs {e}", emp[i]);
        }
        assert!(emp[6..].iter().all(|&p| p == 0.0));
    }

    #[test]
    fn clamps_half_start() {
        // len 3: span 2, valid starts {0, 1}; len/2 = 1 fits.
        // ratio 0.75 on len 4: span 3, last start 1 < len/2 = 2.
        let cfg = MaskConfig {
            span_ratio: 0.75,
            ..MaskConfig::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let seq = TokenSeq::new(vec![5, 6, 7, 8]);
        for _ in 0..1000 {
            let m = mass_mask(&seq, &cfg, &mut rng).unwrap();
            assert!(m.span_start + m.span_len <= 4);
        }
    }

    #[test]
    fn too_short() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let err = mass_mask(&TokenSeq::new(vec![7]), &MaskConfig::default(), &mut rng);
        assert!(matches!(err, Err(Error::TooShortToMask(1))));
    }

    proptest::proptest! {
        #[test]
        fn mask_only_touches_span(ids in proptest::collection::vec(5u32..50, 2..40), seed in 0u64..1000) {
            let seq = TokenSeq::new(ids);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let m = mass_mask(&seq, &MaskConfig::default(), &mut rng).unwrap();
            proptest::prop_assert_eq!(m.input.len(), seq.len());
            proptest::prop_assert!(m.span_len >= 1);
            for (i, &id) in m.input.ids().iter().enumerate() {
                if (m.span_start..m.span_start + m.span_len).contains(&i) {
                    proptest::prop_assert_eq!(id, MASK);
                } else {
                    proptest::prop_assert_eq!(id, seq.ids()[i]);
                }
            }
            proptest::prop_assert_eq!(m.reconstruct(), seq);
        }
    }
}
