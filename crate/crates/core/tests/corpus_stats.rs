use std::collections::HashMap;

use lingua_core::{gen_synthetic_world, LanguageId, Vocabulary, WorldConfig};

fn world() -> lingua_core::World {
    let cfg = WorldConfig {
        mono_lines: 10_000,
        parallel_lines: 10,
        test_lines: 10,
        dev_lines: 10,
        ..WorldConfig::default()
    };
    gen_synthetic_world(11, &cfg).unwrap()
}

#[test]
fn mono_unigrams_are_uniform() {
    let w = world();
    for lang in w.languages.ids() {
        let mut counts: HashMap<u32, f64> = HashMap::new();
        let mut n = 0.0;
        for line in w.mono(lang).lines() {
            for &id in line.ids() {
                *counts.entry(id).or_default() += 1.0;
                n += 1.0;
            }
        }
        let cells = w.config.vocab_per_language as f64;
        assert_eq!(counts.len(), w.config.vocab_per_language);
        let expected = n / cells;
        let p = 1.0 / cells;
        let sigma = (n * p * (1.0 - p)).sqrt();
        let mut chi2 = 0.0;
        // per-cell bound is Bonferroni-widened; the aggregate chi-square carries the 3 sigma check
        for &c in counts.values() {
            assert!(
                (c - expected).abs() <= 4.0 * sigma,
                "{lang}: count {c} vs {expected} ± {sigma}"
            );
            chi2 += (c - expected).powi(2) / expected;
        }
        let dof = cells - 1.0;
        assert!(chi2 < dof + 3.0 * (2.0 * dof).sqrt(), "{lang}: chi2 {chi2}");
    }
}

#[test]
fn vocab_from_large_corpus_is_frequency_ranked() {
    let w = world();
    // skewed corpus: line i repeats its first token i % 7 extra times
    let text: Vec<String> = w
        .mono(LanguageId(0))
        .lines()
        .iter()
        .enumerate()
        .map(|(i, l)| {
            let mut s = w.vocab.decode(l);
            let first = s.split_whitespace().next().unwrap().to_string();
            for _ in 0..i % 7 {
                s.push(' ');
                s.push_str(&first);
            }
            s
        })
        .collect();
    let v = Vocabulary::build(&[text.clone()], 64, 1).unwrap();
    assert_eq!(v.len(), 64);

    let mut freq: HashMap<&str, usize> = HashMap::new();
    for line in &text {
        for t in line.split_whitespace() {
            *freq.entry(t).or_default() += 1;
        }
    }
    let mut ranked: Vec<(&str, usize)> = freq.into_iter().collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
    let expect: Vec<&str> = ranked.iter().take(59).map(|r| r.0).collect();
    let got: Vec<&str> = v.tokens()[5..].iter().map(String::as_str).collect();
    assert_eq!(got, expect);
}
