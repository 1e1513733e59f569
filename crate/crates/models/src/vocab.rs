//! Token/id bijection with reserved special entries.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{ModelError, Result};

pub const PAD: usize = 0;
pub const BOS: usize = 1;
pub const EOS: usize = 2;
pub const UNK: usize = 3;
pub const MASK: usize = 4;
pub const SEP: usize = 5;

pub const RESERVED: [&str; 6] = ["<pad>", "<s>", "</s>", "<unk>", "<mask>", "<sep>"];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocabulary {
    /// Reserved entries followed by every distinct token in first-seen order.
    pub fn build<'a, I, S>(sequences: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: IntoIterator<Item = &'a String>,
    {
        let mut vocab = Self::reserved_only();
        for seq in sequences {
            for tok in seq {
                if RESERVED.contains(&tok.as_str()) {
                    return Err(ModelError::ReservedToken(tok.clone()));
                }
                if !vocab.index.contains_key(tok) {
                    vocab.index.insert(tok.clone(), vocab.tokens.len());
                    vocab.tokens.push(tok.clone());
                }
            }
        }
        Ok(vocab)
    }

    fn reserved_only() -> Self {
        let tokens: Vec<String> = RESERVED.iter().map(|s| s.to_string()).collect();
        let index = tokens.iter().cloned().enumerate().map(|(i, t)| (t, i)).collect();
        Self { tokens, index }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn get(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn contains(&self, token: &str) -> bool {
        self.index.contains_key(token)
    }

    /// Id of `token`, or [`UNK`].
    pub fn id(&self, token: &str) -> usize {
        self.get(token).unwrap_or(UNK)
    }

    pub fn encode(&self, tokens: &[String]) -> Vec<usize> {
        tokens.iter().map(|t| self.id(t)).collect()
    }

    pub fn token(&self, id: usize) -> Result<&str> {
        self.tokens
            .get(id)
            .map(String::as_str)
            .ok_or(ModelError::InvalidId { id, size: self.len() })
    }

    /// Tokens for `ids`, skipping the special entries.
    pub fn decode(&self, ids: &[usize]) -> Result<Vec<String>> {
        let mut out = Vec::with_capacity(ids.len());
        for &id in ids {
            let tok = self.token(id)?;
            if id >= RESERVED.len() {
                out.push(tok.to_string());
            }
        }
        Ok(out)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }
}

impl TryFrom<Vec<String>> for Vocabulary {
    type Error = ModelError;

    fn try_from(tokens: Vec<String>) -> Result<Self> {
        if tokens.len() < RESERVED.len() || tokens[..RESERVED.len()] != RESERVED {
            return Err(ModelError::Metadata("vocabulary does not start with the reserved entries".into()));
        }
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if index.insert(t.clone(), i).is_some() {
                return Err(ModelError::Metadata(format!("duplicate vocabulary entry {t:?}")));
            }
        }
        Ok(Self { tokens, index })
    }
}

impl From<Vocabulary> for Vec<String> {
    fn from(v: Vocabulary) -> Self {
        v.tokens
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seqs(items: &[&[&str]]) -> Vec<Vec<String>> {
        items.iter().map(|s| s.iter().map(|t| t.to_string()).collect()).collect()
    }

    #[test]
    fn bijective_with_reserved_prefix() {
        let data = seqs(&[&["mov", "eax", ",", "var0"], &["mov", "ebx"]]);
        let v = Vocabulary::build(&data).unwrap();
        assert_eq!(v.len(), 6 + 5);
        for (i, t) in v.tokens().iter().enumerate() {
            assert_eq!(v.get(t), Some(i));
        }
        assert_eq!(v.token(EOS).unwrap(), "</s>");
        assert_eq!(v.id("never-seen"), UNK);
    }

    #[test]
    fn reserved_collision_is_an_error() {
        let data = seqs(&[&["<unk>"]]);
        assert!(matches!(Vocabulary::build(&data), Err(ModelError::ReservedToken(_))));
    }

    #[test]
    fn serde_round_trip() {
        let data = seqs(&[&["a", "b"]]);
        let v = Vocabulary::build(&data).unwrap();
        let json = serde_json::to_string(&v).unwrap();
        assert_eq!(serde_json::from_str::<Vocabulary>(&json).unwrap(), v);
        assert!(serde_json::from_str::<Vocabulary>(r#"["a"]"#).is_err());
    }

    #[test]
    fn decode_skips_specials() {
        let data = seqs(&[&["x"]]);
        let v = Vocabulary::build(&data).unwrap();
        assert_eq!(v.decode(&[BOS, 6, EOS]).unwrap(), vec!["x".to_string()]);
        assert!(v.decode(&[99]).is_err());
    }
}
