//! Token inventory with five reserved specials at fixed ids.

use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use crate::{Error, Result, TokenSeq};

pub const PAD: u32 = 0;
pub const BOS: u32 = 1;
pub const EOS: u32 = 2;
pub const UNK: u32 = 3;
pub const MASK: u32 = 4;

pub const RESERVED: [&str; 5] = ["<pad>", "<s>", "</s>", "<unk>", "<mask>"];

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, u32>,
}

impl Vocabulary {
    /// Builds a vocabulary from an explicit token list (reserved tokens are
    /// prepended and must not be repeated).
    pub fn from_tokens<I, S>(tokens: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut all: Vec<String> = RESERVED.iter().map(|s| s.to_string()).collect();
        all.extend(tokens.into_iter().map(Into::into));
        Self::from_full_list(all)
    }

    fn from_full_list(tokens: Vec<String>) -> Result<Self> {
        for (id, r) in RESERVED.iter().enumerate() {
            match tokens.get(id) {
                Some(t) if t == r => {}
                other => {
                    return Err(Error::BadReserved {
                        id,
                        found: other.cloned().unwrap_or_default(),
                    })
                }
            }
        }
        if tokens.len() < 6 {
            return Err(Error::VocabTooSmall(tokens.len()));
        }
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if index.insert(t.clone(), i as u32).is_some() {
                return Err(Error::DuplicateToken(t.clone()));
            }
        }
        Ok(Self { tokens, index })
    }

    /// Frequency-ranked vocabulary over whitespace tokens of `corpora`.
    ///
    /// Ties in frequency are broken lexicographically; tokens seen fewer
    /// than `min_freq` times are left out and encode to `UNK`.
    pub fn build<S: AsRef<str>>(
        corpora: &[Vec<S>],
        max_size: usize,
        min_freq: usize,
    ) -> Result<Self> {
        if max_size <= 6 {
            return Err(Error::VocabTooSmall(max_size));
        }
        let mut counts: HashMap<&str, usize> = HashMap::new();
        for corpus in corpora {
            for line in corpus {
                for tok in line.as_ref().split_whitespace() {
                    *counts.entry(tok).or_default() += 1;
                }
            }
        }
        if counts.is_empty() {
            return Err(Error::EmptyCorpus);
        }
        let mut ranked: Vec<(&str, usize)> = counts
            .into_iter()
            .filter(|&(t, c)| c >= min_freq.max(1) && !RESERVED.contains(&t))
            .collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        ranked.truncate(max_size - RESERVED.len());
        Self::from_tokens(ranked.into_iter().map(|(t, _)| t.to_string()))
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> Option<u32> {
        self.index.get(token).copied()
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    /// Whitespace tokenization; unknown tokens become `UNK`.
    pub fn encode(&self, text: &str) -> TokenSeq {
        TokenSeq::new(
            text.split_whitespace()
                .map(|t| self.id(t).unwrap_or(UNK))
                .collect(),
        )
    }

    /// Joins token strings with single spaces. Out-of-range ids render as
    /// the `UNK` string.
    pub fn decode(&self, seq: &TokenSeq) -> String {
        seq.ids()
            .iter()
            .map(|&id| self.token(id).unwrap_or(RESERVED[UNK as usize]))
            .collect::<Vec<_>>()
            .join(" ")
    }

    /// One token per line, line number = id.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        for t in &self.tokens {
            writeln!(f, "{t}").map_err(|e| Error::io(path, e))?;
        }
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_full_list(text.lines().map(str::to_string).collect())
    }
}
