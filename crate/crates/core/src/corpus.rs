//! Token sequences and line-indexed monolingual / parallel corpora.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::{Error, LanguageId, Result, Vocabulary};

/// Lines longer than this many tokens are rejected by the loaders.
pub const DEFAULT_LENGTH_CAP: usize = 100;

/// A sentence as token ids, without BOS/EOS.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct TokenSeq(Vec<u32>);

impl TokenSeq {
    pub fn new(ids: Vec<u32>) -> Self {
        Self(ids)
    }

    pub fn ids(&self) -> &[u32] {
        &self.0
    }

    pub fn into_ids(self) -> Vec<u32> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn check_vocab(&self, vocab_size: usize) -> Result<()> {
        match self.0.iter().find(|&&id| id as usize >= vocab_size) {
            Some(&id) => Err(Error::TokenOutOfRange {
                id,
                size: vocab_size,
            }),
            None => Ok(()),
        }
    }
}

impl From<Vec<u32>> for TokenSeq {
    fn from(ids: Vec<u32>) -> Self {
        Self(ids)
    }
}

fn check_cap(lines: &[TokenSeq], cap: usize) -> Result<()> {
    match lines.iter().position(|l| l.len() > cap) {
        Some(i) => Err(Error::LineTooLong {
            line: i + 1,
            len: lines[i].len(),
            cap,
        }),
        None => Ok(()),
    }
}

fn read_lines(path: &Path) -> Result<Vec<String>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(text.lines().map(str::to_string).collect())
}

fn write_lines(
    path: &Path,
    vocab: &Vocabulary,
    lines: impl Iterator<Item = impl AsRef<TokenSeq>>,
) -> Result<()> {
    let mut out = String::new();
    for l in lines {
        out.push_str(&vocab.decode(l.as_ref()));
        out.push('\n');
    }
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(out.as_bytes()).map_err(|e| Error::io(path, e))
}

impl AsRef<TokenSeq> for TokenSeq {
    fn as_ref(&self) -> &TokenSeq {
        self
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MonoCorpus {
    pub language: LanguageId,
    lines: Vec<TokenSeq>,
}

impl MonoCorpus {
    pub fn new(language: LanguageId, lines: Vec<TokenSeq>, cap: usize) -> Result<Self> {
        if lines.is_empty() {
            return Err(Error::EmptyCorpus);
        }
        check_cap(&lines, cap)?;
        Ok(Self { language, lines })
    }

    pub fn lines(&self) -> &[TokenSeq] {
        &self.lines
    }

    pub fn len(&self) -> usize {
        self.lines.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lines.is_empty()
    }

    pub fn load(
        path: impl AsRef<Path>,
        language: LanguageId,
        vocab: &Vocabulary,
        cap: usize,
    ) -> Result<Self> {
        let lines = read_lines(path.as_ref())?;
        Self::new(
            language,
            lines.iter().map(|l| vocab.encode(l)).collect(),
            cap,
        )
    }

    pub fn save(&self, path: impl AsRef<Path>, vocab: &Vocabulary) -> Result<()> {
        write_lines(path.as_ref(), vocab, self.lines.iter())
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParallelCorpus {
    pub src_language: LanguageId,
    pub tgt_language: LanguageId,
    pairs: Vec<(TokenSeq, TokenSeq)>,
}

impl ParallelCorpus {
    pub fn new(
        src_language: LanguageId,
        tgt_language: LanguageId,
        pairs: Vec<(TokenSeq, TokenSeq)>,
        cap: usize,
    ) -> Result<Self> {
        if src_language == tgt_language {
            return Err(Error::SameLanguage(src_language.to_string()));
        }
        if pairs.is_empty() {
            return Err(Error::EmptyCorpus);
        }
        for (i, (s, t)) in pairs.iter().enumerate() {
            for side in [s, t] {
                if side.len() > cap {
                    return Err(Error::LineTooLong {
                        line: i + 1,
                        len: side.len(),
                        cap,
                    });
                }
            }
        }
        Ok(Self {
            src_language,
            tgt_language,
            pairs,
        })
    }

    pub fn pairs(&self) -> &[(TokenSeq, TokenSeq)] {
        &self.pairs
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Loads two aligned files with equal line counts.
    pub fn load(
        src_path: impl AsRef<Path>,
        tgt_path: impl AsRef<Path>,
        languages: (LanguageId, LanguageId),
        vocab: &Vocabulary,
        cap: usize,
    ) -> Result<Self> {
        let src = read_lines(src_path.as_ref())?;
        let tgt = read_lines(tgt_path.as_ref())?;
        if src.len() != tgt.len() {
            return Err(Error::UnalignedParallel(src.len(), tgt.len()));
        }
        let pairs = src
            .iter()
            .zip(&tgt)
            .map(|(s, t)| (vocab.encode(s), vocab.encode(t)))
            .collect();
        Self::new(languages.0, languages.1, pairs, cap)
    }

    pub fn save(
        &self,
        src_path: impl AsRef<Path>,
        tgt_path: impl AsRef<Path>,
        vocab: &Vocabulary,
    ) -> Result<()> {
        write_lines(src_path.as_ref(), vocab, self.pairs.iter().map(|p| &p.0))?;
        write_lines(tgt_path.as_ref(), vocab, self.pairs.iter().map(|p| &p.1))
    }
}
