use lingua_core::TokenSeq;
use lingua_eval::{corpus_bleu, BleuReport};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_corpus(rng: &mut ChaCha8Rng, n: usize) -> Vec<TokenSeq> {
    (0..n)
        .map(|_| {
            let len = rng.gen_range(3..12);
            TokenSeq::new((0..len).map(|_| rng.gen_range(5..15)).collect())
        })
        .collect()
}

fn noisy(rng: &mut ChaCha8Rng, refs: &[TokenSeq]) -> Vec<TokenSeq> {
    refs.iter()
        .map(|r| {
            let mut ids = r.ids().to_vec();
            for t in ids.iter_mut() {
                if rng.gen_bool(0.2) {
                    *t = rng.gen_range(5..15);
                }
            }
            if rng.gen_bool(0.3) {
                ids.pop();
            }
            TokenSeq::new(ids)
        })
        .collect()
}

/// Straightforward per-sentence BLEU, written out without any sharing with
/// the library's counting code.
fn sentence_bleu(h: &[u32], r: &[u32]) -> f64 {
    let mut log_p = 0.0;
    for n in 1..=4 {
        if h.len() < n {
            return 0.0;
        }
        let hg: Vec<&[u32]> = h.windows(n).collect();
        let mut rg: Vec<&[u32]> = if r.len() >= n {
            r.windows(n).collect()
        } else {
            vec![]
        };
        let mut m = 0;
        for g in &hg {
            if let Some(i) = rg.iter().position(|x| x == g) {
                rg.swap_remove(i);
                m += 1;
            }
        }
        if m == 0 {
            return 0.0;
        }
        log_p += (m as f64 / hg.len() as f64).ln() / 4.0;
    }
    let bp = if h.len() >= r.len() {
        1.0
    } else {
        (1.0 - r.len() as f64 / h.len() as f64).exp()
    };
    100.0 * bp * log_p.exp()
}

#[test]
fn permutation_invariance() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let refs = random_corpus(&mut rng, 60);
    let hyps = noisy(&mut rng, &refs);
    let base = corpus_bleu(&hyps, &refs).unwrap();
    assert!(base.score > 0.0);
    let mut pairs: Vec<_> = hyps.into_iter().zip(refs).collect();
    for _ in 0..100 {
        pairs.shuffle(&mut rng);
        let (h, r): (Vec<_>, Vec<_>) = pairs.iter().cloned().unzip();
        let s: BleuReport = corpus_bleu(&h, &r).unwrap();
        assert_eq!(s.matches, base.matches);
        assert!((s.score - base.score).abs() < 1e-9);
    }
}

#[test]
fn corruption_never_increases_unigram_matches() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..20 {
        let refs = random_corpus(&mut rng, 20);
        let mut hyps = refs.clone();
        let mut prev = corpus_bleu(&hyps, &refs).unwrap().matches[0];
        for _ in 0..30 {
            // replace a random token with one that never occurs in references
            let i = rng.gen_range(0..hyps.len());
            let mut ids = hyps[i].ids().to_vec();
            let j = rng.gen_range(0..ids.len());
            ids[j] = 99;
            hyps[i] = TokenSeq::new(ids);
            let m = corpus_bleu(&hyps, &refs).unwrap().matches[0];
            assert!(m <= prev);
            prev = m;
        }
    }
}

#[test]
fn single_pair_matches_sentence_bleu() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let refs = random_corpus(&mut rng, 200);
    let hyps = noisy(&mut rng, &refs);
    for (h, r) in hyps.iter().zip(&refs) {
        let c = corpus_bleu(std::slice::from_ref(h), std::slice::from_ref(r)).unwrap();
        let s = sentence_bleu(h.ids(), r.ids());
        assert!((c.score - s).abs() < 1e-9, "{} vs {}", c.score, s);
    }
}
