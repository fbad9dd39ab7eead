use std::fmt;

use crate::{Error, Result};

/// Dense language index in `0..K`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct LanguageId(pub u16);

impl LanguageId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for LanguageId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "L{}", self.0)
    }
}

/// The set of languages known to an experiment, with their short tags.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Languages {
    names: Vec<String>,
}

impl Languages {
    pub fn new(names: Vec<String>) -> Result<Self> {
        if names.is_empty() {
            return Err(Error::Languages("no languages".into()));
        }
        for (i, n) in names.iter().enumerate() {
            if n.is_empty() || !n.is_ascii() || n.contains(char::is_whitespace) {
                return Err(Error::Languages(format!("bad language tag {n:?}")));
            }
            if names[..i].contains(n) {
                return Err(Error::Languages(format!("duplicate language tag {n:?}")));
            }
        }
        if names.len() > u16::MAX as usize {
            return Err(Error::Languages("too many languages".into()));
        }
        Ok(Self { names })
    }

    /// `L0`, `L1`, ... `L{k-1}`.
    pub fn numbered(k: usize) -> Result<Self> {
        Self::new((0..k).map(|i| format!("L{i}")).collect())
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = LanguageId> + '_ {
        (0..self.names.len()).map(|i| LanguageId(i as u16))
    }

    pub fn name(&self, id: LanguageId) -> &str {
        &self.names[id.index()]
    }

    pub fn lookup(&self, name: &str) -> Option<LanguageId> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|i| LanguageId(i as u16))
    }

    pub fn contains(&self, id: LanguageId) -> bool {
        id.index() < self.names.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn numbered_languages_are_dense() {
        let langs = Languages::numbered(3).unwrap();
        let ids: Vec<_> = langs.ids().collect();
        assert_eq!(ids, vec![LanguageId(0), LanguageId(1), LanguageId(2)]);
        assert_eq!(langs.name(LanguageId(2)), "L2");
        assert_eq!(langs.lookup("L1"), Some(LanguageId(1)));
        assert_eq!(langs.lookup("L9"), None);
    }

    #[test]
    fn rejects_duplicate_names() {
        assert!(Languages::new(vec!["en".into(), "en".into()]).is_err());
        assert!(Languages::new(vec![]).is_err());
        assert!(Languages::new(vec!["a b".into()]).is_err());
    }
}
