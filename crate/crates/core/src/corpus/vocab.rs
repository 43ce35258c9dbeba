use std::collections::{BTreeMap, HashMap};

use super::{acts_to_tokens, ActWordMap, Dialog};
use crate::cnet::NULL_TOKEN;
use crate::error::{Error, Result};

pub const PAD_TOKEN: &str = "<pad>";
pub const UNK_TOKEN: &str = "<unk>";
pub const PAD_INDEX: usize = 0;
pub const UNK_INDEX: usize = 1;
pub const NULL_INDEX: usize = 2;
const RESERVED: [&str; 3] = [PAD_TOKEN, UNK_TOKEN, NULL_TOKEN];

/// Token ↔ index table with reserved entries for padding, unknown words
/// and `!null` at the front.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocab {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl Default for Vocab {
    fn default() -> Self {
        Self::from_tokens(RESERVED.iter().map(|s| s.to_string()).collect())
            .expect("reserved tokens are valid")
    }
}

impl Vocab {
    /// Rebuilds a vocabulary from its token list, reserved tokens first.
    pub fn from_tokens(tokens: Vec<String>) -> Result<Self> {
        if tokens.len() < RESERVED.len() || tokens[..RESERVED.len()] != RESERVED {
            return Err(Error::structural(format!(
                "vocabulary must start with {RESERVED:?}"
            )));
        }
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if t.is_empty() || t.chars().any(char::is_whitespace) {
                return Err(Error::structural(format!("invalid vocabulary token {t:?}")));
            }
            if index.insert(t.clone(), i).is_some() {
                return Err(Error::structural(format!(
                    "vocabulary token {t:?} listed twice"
                )));
            }
        }
        Ok(Self { tokens, index })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn reserved_len(&self) -> usize {
        RESERVED.len()
    }

    pub fn get(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    /// Index of `token`, or the unknown-word index.
    pub fn index(&self, token: &str) -> usize {
        self.get(token).unwrap_or(UNK_INDEX)
    }

    pub fn token(&self, index: usize) -> Option<&str> {
        self.tokens.get(index).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }
}

/// Vocabulary over transcript words, network hypotheses and mapped act
/// words. Tokens seen fewer than `min_count` times are left out (and so map
/// to the unknown index); replacement words of `map` are always kept.
/// Entries after the reserved ones are sorted.
pub fn build_vocab(dialogs: &[Dialog], map: &ActWordMap, min_count: usize) -> Vocab {
    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
    let mut bump = |tok: &str| *counts.entry(tok.to_string()).or_default() += 1;
    for d in dialogs {
        for t in &d.turns {
            t.transcript.iter().for_each(|w| bump(w));
            t.cnet.tokens().for_each(&mut bump);
            acts_to_tokens(&t.system_acts, map)
                .iter()
                .for_each(|w| bump(w));
        }
    }
    let min_count = min_count.max(1);
    for w in map.words() {
        let c = counts.entry(w.to_string()).or_default();
        *c = (*c).max(min_count);
    }
    let mut tokens: Vec<String> = RESERVED.iter().map(|s| s.to_string()).collect();
    tokens.extend(
        counts
            .into_iter()
            .filter(|(t, c)| *c >= min_count && !RESERVED.contains(&t.as_str()))
            .map(|(t, _)| t),
    );
    Vocab::from_tokens(tokens).expect("tokens come from validated dialogs")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{generate_synthetic, SynthConfig};

    fn corpus() -> Vec<Dialog> {
        generate_synthetic(&SynthConfig {
            dialogs: 5,
            ..SynthConfig::default()
        })
        .unwrap()
    }

    #[test]
    fn reserved_indices() {
        let v = Vocab::default();
        assert_eq!(v.index(PAD_TOKEN), PAD_INDEX);
        assert_eq!(v.index(UNK_TOKEN), UNK_INDEX);
        assert_eq!(v.index(NULL_TOKEN), NULL_INDEX);
        assert_eq!(v.index("never-seen"), UNK_INDEX);
    }

    #[test]
    fn min_count_one_keeps_everything() {
        let dialogs = corpus();
        let v = build_vocab(&dialogs, &ActWordMap::default(), 1);
        for d in &dialogs {
            for t in &d.turns {
                for w in t
                    .transcript
                    .iter()
                    .map(String::as_str)
                    .chain(t.cnet.tokens())
                {
                    assert!(v.get(w).is_some(), "{w} missing");
                }
            }
        }
    }

    #[test]
    fn huge_min_count_keeps_only_reserved() {
        let v = build_vocab(&corpus(), &ActWordMap::empty(), 1_000_000_000);
        assert_eq!(v.tokens(), RESERVED);
    }

    #[test]
    fn map_words_always_present() {
        let map = ActWordMap::default();
        let v = build_vocab(&corpus(), &map, 1_000_000_000);
        for w in map.words() {
            assert!(v.get(w).is_some());
        }
    }

    #[test]
    fn stable_across_builds() {
        let a = build_vocab(&corpus(), &ActWordMap::default(), 2);
        let b = build_vocab(&corpus(), &ActWordMap::default(), 2);
        assert_eq!(a, b);
        assert_eq!(Vocab::from_tokens(a.tokens().to_vec()).unwrap(), a);
    }

    #[test]
    fn rejects_bad_token_lists() {
        assert!(Vocab::from_tokens(vec!["a".into()]).is_err());
        let mut dup: Vec<String> = RESERVED.iter().map(|s| s.to_string()).collect();
        dup.push("x".into());
        dup.push("x".into());
        assert!(Vocab::from_tokens(dup).is_err());
    }
}
