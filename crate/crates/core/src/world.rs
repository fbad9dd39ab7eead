//! Synthetic cipher languages rendered from a shared latent concept stream.
//!
//! Every language owns a private inventory of `vocab_per_language` tokens.
//! A latent sentence is a sequence of concept ids drawn i.i.d. uniformly;
//! language `l` renders concept `c` as token `perm_l[c]`, and the designated
//! reordering language additionally swaps every adjacent pair of positions.
//! Gold translations are therefore exact.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::{
    Error, LanguageId, Languages, MonoCorpus, ParallelCorpus, Result, TokenSeq, Vocabulary,
    DEFAULT_LENGTH_CAP,
};

#[derive(Clone, Debug, PartialEq)]
pub struct WorldConfig {
    pub num_languages: usize,
    pub vocab_per_language: usize,
    pub min_len: usize,
    pub max_len: usize,
    pub mono_lines: usize,
    pub parallel_lines: usize,
    pub test_lines: usize,
    pub dev_lines: usize,
    pub parallel_pair: (u16, u16),
    pub target_pair: (u16, u16),
    /// Language whose rendering swaps adjacent positions.
    pub reorder_language: u16,
    pub length_cap: usize,
}

impl Default for WorldConfig {
    fn default() -> Self {
        Self {
            num_languages: 3,
            vocab_per_language: 64,
            min_len: 4,
            max_len: 10,
            mono_lines: 10_000,
            parallel_lines: 5_000,
            test_lines: 500,
            dev_lines: 200,
            parallel_pair: (0, 1),
            target_pair: (0, 2),
            reorder_language: 2,
            length_cap: DEFAULT_LENGTH_CAP,
        }
    }
}

impl WorldConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::WorldConfig(m.to_string()));
        let k = self.num_languages as u16;
        if self.num_languages < 2 {
            return bad("need at least two languages");
        }
        if self.vocab_per_language == 0
            || self.mono_lines == 0
            || self.parallel_lines == 0
            || self.test_lines == 0
        {
            return bad("sizes must be positive");
        }
        if self.min_len == 0 || self.min_len > self.max_len {
            return bad("sentence length range is empty or inverted");
        }
        if self.max_len > self.length_cap {
            return bad("max_len exceeds the length cap");
        }
        for (name, (a, b)) in [
            ("parallel_pair", self.parallel_pair),
            ("target_pair", self.target_pair),
        ] {
            if a == b || a >= k || b >= k {
                return Err(Error::WorldConfig(format!(
                    "{name} ({a}, {b}) invalid for {k} languages"
                )));
            }
        }
        if self.reorder_language >= k {
            return bad("reorder_language out of range");
        }
        Ok(())
    }
}

/// Aligned test sentences rendered in every language.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TestSet {
    /// `renderings[lang][i]` is sentence `i` in language `lang`.
    pub renderings: Vec<Vec<TokenSeq>>,
}

impl TestSet {
    pub fn len(&self) -> usize {
        self.renderings.first().map_or(0, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn pairs(&self, src: LanguageId, tgt: LanguageId) -> Vec<(TokenSeq, TokenSeq)> {
        self.renderings[src.index()]
            .iter()
            .cloned()
            .zip(self.renderings[tgt.index()].iter().cloned())
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct World {
    pub config: WorldConfig,
    pub languages: Languages,
    pub vocab: Vocabulary,
    pub mono: Vec<MonoCorpus>,
    pub parallel: ParallelCorpus,
    pub test: TestSet,
    pub dev: TestSet,
    perms: Vec<Vec<u32>>,
    inverse: Vec<Vec<u32>>,
}

const STREAM_PERMS: u64 = 0;
const STREAM_MONO: u64 = 1;
const STREAM_PARALLEL: u64 = 1000;
const STREAM_TEST: u64 = 1001;
const STREAM_DEV: u64 = 1002;

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

fn token_name(lang: &str, k: usize) -> String {
    format!("{}_{k}", lang.to_lowercase())
}

impl World {
    /// Vocabulary id of token `k` of language `lang`.
    fn token_id(&self, lang: LanguageId, k: u32) -> u32 {
        (crate::vocab::RESERVED.len() + lang.index() * self.config.vocab_per_language) as u32 + k
    }

    fn reorders(&self, lang: LanguageId) -> bool {
        lang.0 == self.config.reorder_language
    }

    pub fn render(&self, latent: &[u32], lang: LanguageId) -> TokenSeq {
        let perm = &self.perms[lang.index()];
        let mut ids: Vec<u32> = latent
            .iter()
            .map(|&c| self.token_id(lang, perm[c as usize]))
            .collect();
        if self.reorders(lang) {
            for pair in ids.chunks_exact_mut(2) {
                pair.swap(0, 1);
            }
        }
        TokenSeq::new(ids)
    }

    /// Recovers the latent concepts of a sentence; `None` if any token is
    /// not from `lang`'s inventory.
    pub fn latent(&self, seq: &TokenSeq, lang: LanguageId) -> Option<Vec<u32>> {
        let base = self.token_id(lang, 0);
        let v = self.config.vocab_per_language as u32;
        let mut ids = seq.ids().to_vec();
        if self.reorders(lang) {
            for pair in ids.chunks_exact_mut(2) {
                pair.swap(0, 1);
            }
        }
        ids.iter()
            .map(|&id| {
                (id >= base && id < base + v)
                    .then(|| self.inverse[lang.index()][(id - base) as usize])
            })
            .collect()
    }

    /// Gold translation through the latent space.
    pub fn translate(&self, seq: &TokenSeq, from: LanguageId, to: LanguageId) -> Option<TokenSeq> {
        self.latent(seq, from).map(|c| self.render(&c, to))
    }

    pub fn mono(&self, lang: LanguageId) -> &MonoCorpus {
        &self.mono[lang.index()]
    }

    pub fn target_pair(&self) -> (LanguageId, LanguageId) {
        (
            LanguageId(self.config.target_pair.0),
            LanguageId(self.config.target_pair.1),
        )
    }

    /// Writes the vocabulary, corpora and test/dev renderings as text files.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        self.vocab.save(dir.join("vocab.txt"))?;
        for m in &self.mono {
            m.save(
                dir.join(format!("mono.{}.txt", self.languages.name(m.language))),
                &self.vocab,
            )?;
        }
        let (a, b) = (self.parallel.src_language, self.parallel.tgt_language);
        let (na, nb) = (self.languages.name(a), self.languages.name(b));
        self.parallel.save(
            dir.join(format!("parallel.{na}-{nb}.{na}.txt")),
            dir.join(format!("parallel.{na}-{nb}.{nb}.txt")),
            &self.vocab,
        )?;
        for (split, set) in [("test", &self.test), ("dev", &self.dev)] {
            for lang in self.languages.ids() {
                let corpus =
                    MonoCorpus::new(lang, set.renderings[lang.index()].clone(), usize::MAX)?;
                corpus.save(
                    dir.join(format!("{split}.{}.txt", self.languages.name(lang))),
                    &self.vocab,
                )?;
            }
        }
        Ok(())
    }
}

fn sample_latents(rng: &mut ChaCha8Rng, cfg: &WorldConfig, n: usize) -> Vec<Vec<u32>> {
    (0..n)
        .map(|_| {
            let len = rng.gen_range(cfg.min_len..=cfg.max_len);
            (0..len)
                .map(|_| rng.gen_range(0..cfg.vocab_per_language as u32))
                .collect()
        })
        .collect()
}

/// Deterministic in `seed`: the same seed yields identical corpora.
pub fn gen_synthetic_world(seed: u64, cfg: &WorldConfig) -> Result<World> {
    cfg.validate()?;
    let languages = Languages::numbered(cfg.num_languages)?;
    let tokens: Vec<String> = languages
        .ids()
        .flat_map(|l| {
            let name = languages.name(l).to_string();
            (0..cfg.vocab_per_language).map(move |k| token_name(&name, k))
        })
        .collect();
    let vocab = Vocabulary::from_tokens(tokens)?;

    let mut rng = stream(seed, STREAM_PERMS);
    let perms: Vec<Vec<u32>> = (0..cfg.num_languages)
        .map(|_| {
            let mut p: Vec<u32> = (0..cfg.vocab_per_language as u32).collect();
            p.shuffle(&mut rng);
            p
        })
        .collect();
    let inverse = perms
        .iter()
        .map(|p| {
            let mut inv = vec![0u32; p.len()];
            for (c, &k) in p.iter().enumerate() {
                inv[k as usize] = c as u32;
            }
            inv
        })
        .collect();

    let placeholder = ParallelCorpus::new(
        LanguageId(0),
        LanguageId(1),
        vec![(TokenSeq::default(), TokenSeq::default())],
        usize::MAX,
    )?;
    let mut world = World {
        config: cfg.clone(),
        languages,
        vocab,
        mono: Vec::new(),
        parallel: placeholder,
        test: TestSet { renderings: vec![] },
        dev: TestSet { renderings: vec![] },
        perms,
        inverse,
    };

    let mut mono = Vec::with_capacity(cfg.num_languages);
    for lang in world.languages.ids() {
        let mut rng = stream(seed, STREAM_MONO + lang.0 as u64);
        let lines = sample_latents(&mut rng, cfg, cfg.mono_lines)
            .iter()
            .map(|c| world.render(c, lang))
            .collect();
        mono.push(MonoCorpus::new(lang, lines, cfg.length_cap)?);
    }
    world.mono = mono;

    let (pa, pb) = (
        LanguageId(cfg.parallel_pair.0),
        LanguageId(cfg.parallel_pair.1),
    );
    let mut rng = stream(seed, STREAM_PARALLEL);
    let pairs = sample_latents(&mut rng, cfg, cfg.parallel_lines)
        .iter()
        .map(|c| (world.render(c, pa), world.render(c, pb)))
        .collect();
    world.parallel = ParallelCorpus::new(pa, pb, pairs, cfg.length_cap)?;

    let aligned = |stream_id: u64, n: usize| {
        let mut rng = stream(seed, stream_id);
        let latents = sample_latents(&mut rng, cfg, n);
        TestSet {
            renderings: world
                .languages
                .ids()
                .map(|l| latents.iter().map(|c| world.render(c, l)).collect())
                .collect(),
        }
    };
    let test = aligned(STREAM_TEST, cfg.test_lines);
    let dev = aligned(STREAM_DEV, cfg.dev_lines);
    world.test = test;
    world.dev = dev;
    Ok(world)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> WorldConfig {
        WorldConfig {
            mono_lines: 200,
            parallel_lines: 100,
            test_lines: 50,
            dev_lines: 10,
            ..WorldConfig::default()
        }
    }

    #[test]
    fn deterministic_in_seed() {
        let a = gen_synthetic_world(7, &small()).unwrap();
        let b = gen_synthetic_world(7, &small()).unwrap();
        assert_eq!(a, b);
        let c = gen_synthetic_world(8, &small()).unwrap();
        assert_ne!(a.mono, c.mono);
    }

    #[test]
    fn gold_pairs_follow_bijections() {
        let w = gen_synthetic_world(7, &small()).unwrap();
        let (l0, l1, l2) = (LanguageId(0), LanguageId(1), LanguageId(2));
        for (x, z) in w.test.pairs(l0, l2) {
            assert_eq!(w.translate(&x, l0, l2).unwrap(), z);
            let via = w
                .translate(&w.translate(&x, l0, l1).unwrap(), l1, l2)
                .unwrap();
            assert_eq!(via, z);
        }
        for (x, y) in w.parallel.pairs() {
            assert_eq!(w.translate(x, l0, l1).as_ref(), Some(y));
        }
    }

    #[test]
    fn reorder_language_is_not_a_relabeling() {
        let w = gen_synthetic_world(3, &small()).unwrap();
        let latent = [0u32, 1, 2, 3, 4];
        let plain = w.render(&latent, LanguageId(0));
        let swapped = w.render(&latent, LanguageId(2));
        let l0 = w.latent(&plain, LanguageId(0)).unwrap();
        assert_eq!(l0, latent);
        // position 0 of the L2 rendering carries concept 1
        let first = w
            .latent(&TokenSeq::new(vec![swapped.ids()[0]]), LanguageId(2))
            .unwrap();
        assert_eq!(first, vec![1]);
        assert_eq!(w.latent(&swapped, LanguageId(2)).unwrap(), latent);
    }

    #[test]
    fn languages_use_disjoint_inventories() {
        let w = gen_synthetic_world(1, &small()).unwrap();
        let l0 = &w.mono(LanguageId(0)).lines()[0];
        assert!(w.latent(l0, LanguageId(1)).is_none());
        assert_eq!(w.vocab.len(), 5 + 3 * 64);
    }

    #[test]
    fn invalid_configs() {
        let mut c = small();
        c.min_len = 12;
        assert!(gen_synthetic_world(0, &c).is_err());
        let mut c = small();
        c.mono_lines = 0;
        assert!(gen_synthetic_world(0, &c).is_err());
        let mut c = small();
        c.parallel_pair = (1, 1);
        assert!(gen_synthetic_world(0, &c).is_err());
    }

    #[test]
    fn save_writes_expected_files() {
        let w = gen_synthetic_world(1, &small()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        w.save(dir.path()).unwrap();
        for f in [
            "vocab.txt",
            "mono.L2.txt",
            "parallel.L0-L1.L1.txt",
            "test.L0.txt",
            "dev.L2.txt",
        ] {
            assert!(dir.path().join(f).exists(), "{f}");
        }
        let vocab = Vocabulary::load(dir.path().join("vocab.txt")).unwrap();
        let m =
            MonoCorpus::load(dir.path().join("mono.L1.txt"), LanguageId(1), &vocab, 100).unwrap();
        assert_eq!(&m, w.mono(LanguageId(1)));
    }
}
