use std::collections::HashMap;

use serde::ser::SerializeMap;
use serde::{Deserialize, Serialize, Serializer};

use crate::pipeline::TokenSeq;

/// `var<index>`.
pub fn placeholder(index: usize) -> String {
    format!("var{index}")
}

/// Index of a placeholder token, if it has the `var<digits>` shape.
pub fn placeholder_index(token: &str) -> Option<usize> {
    let digits = token.strip_prefix("var")?;
    if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    digits.parse().ok()
}

/// Ordered placeholder to surface bindings. Placeholders are always
/// `var0..var(k-1)` in insertion order and surfaces are unique.
#[derive(Debug, Clone, Default, PartialEq, Eq, Deserialize)]
#[serde(try_from = "HashMap<String, String>")]
pub struct SlotMap {
    surfaces: Vec<String>,
}

impl SlotMap {
    pub fn new() -> Self {
        Self::default()
    }

    /// Binds `surface`, reusing its placeholder if already present.
    pub fn bind(&mut self, surface: &str) -> String {
        if let Some(i) = self.surfaces.iter().position(|s| s == surface) {
            return placeholder(i);
        }
        self.surfaces.push(surface.to_string());
        placeholder(self.surfaces.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.surfaces.len()
    }

    pub fn is_empty(&self) -> bool {
        self.surfaces.is_empty()
    }

    pub fn surface(&self, placeholder: &str) -> Option<&str> {
        placeholder_index(placeholder).and_then(|i| self.surfaces.get(i)).map(String::as_str)
    }

    pub fn placeholder_of(&self, surface: &str) -> Option<String> {
        self.surfaces.iter().position(|s| s == surface).map(placeholder)
    }

    /// `(placeholder, surface)` pairs in index order.
    pub fn entries(&self) -> impl Iterator<Item = (String, &str)> {
        self.surfaces.iter().enumerate().map(|(i, s)| (placeholder(i), s.as_str()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("slot map serializes")
    }
}

impl Serialize for SlotMap {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let mut map = s.serialize_map(Some(self.surfaces.len()))?;
        for (p, surface) in self.entries() {
            map.serialize_entry(&p, surface)?;
        }
        map.end()
    }
}

impl TryFrom<HashMap<String, String>> for SlotMap {
    type Error = String;

    fn try_from(map: HashMap<String, String>) -> Result<Self, Self::Error> {
        let mut surfaces = vec![None; map.len()];
        for (k, v) in map {
            let i = placeholder_index(&k).ok_or_else(|| format!("bad placeholder {k:?}"))?;
            let slot = surfaces.get_mut(i).ok_or_else(|| format!("placeholder {k} leaves a gap"))?;
            *slot = Some(v);
        }
        let surfaces: Vec<String> = surfaces.into_iter().map(|s| s.expect("all indices filled")).collect();
        for (i, s) in surfaces.iter().enumerate() {
            if surfaces[..i].contains(s) {
                return Err(format!("duplicate surface {s:?}"));
            }
        }
        Ok(Self { surfaces })
    }
}

/// Intent and snippet with slot surfaces replaced by placeholders.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct StandardizedPair {
    pub intent: TokenSeq,
    pub snippet: TokenSeq,
    pub slots: SlotMap,
}

fn substitute(tokens: &TokenSeq, slots: &SlotMap) -> TokenSeq {
    let out = tokens
        .iter()
        .map(|t| slots.placeholder_of(t).unwrap_or_else(|| t.clone()))
        .collect();
    TokenSeq::from_trusted(out)
}

/// Replaces every occurrence of every slot surface in both sequences.
pub fn standardize(intent: &TokenSeq, snippet: &TokenSeq, slots: &SlotMap) -> StandardizedPair {
    StandardizedPair {
        intent: substitute(intent, slots),
        snippet: substitute(snippet, slots),
        slots: slots.clone(),
    }
}

/// Restores slot surfaces. Placeholder-shaped tokens without a binding are
/// kept verbatim and reported in the returned list.
pub fn destandardize(tokens: &TokenSeq, slots: &SlotMap) -> (TokenSeq, Vec<String>) {
    let mut unknown = Vec::new();
    let out = tokens
        .iter()
        .map(|t| match slots.surface(t) {
            Some(s) => s.to_string(),
            None => {
                if placeholder_index(t).is_some() {
                    unknown.push(t.clone());
                }
                t.clone()
            }
        })
        .collect();
    if !unknown.is_empty() {
        log::warn!("output references unbound placeholders: {}", unknown.join(", "));
    }
    (TokenSeq::from_trusted(out), unknown)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seq(tokens: &[&str]) -> TokenSeq {
        TokenSeq::new(tokens.iter().map(|s| s.to_string()).collect()).unwrap()
    }

    fn fig1_slots() -> SlotMap {
        let mut s = SlotMap::new();
        for surface in ["dl", "0xbb", "next_cycle"] {
            s.bind(surface);
        }
        s
    }

    #[test]
    fn bind_reuses_existing_placeholders() {
        let mut s = SlotMap::new();
        assert_eq!(s.bind("eax"), "var0");
        assert_eq!(s.bind("0x1"), "var1");
        assert_eq!(s.bind("eax"), "var0");
        assert_eq!(s.len(), 2);
    }

    #[test]
    fn standardize_replaces_in_both() {
        let intent = seq(&["xor", "dl", "and", "0xbb", "jump", "next_cycle"]);
        let snippet = seq(&["xor", "dl", ",", "0xbb", "\\n", "jz", "next_cycle"]);
        let pair = standardize(&intent, &snippet, &fig1_slots());
        assert_eq!(pair.snippet.as_slice(), seq(&["xor", "var0", ",", "var1", "\\n", "jz", "var2"]).as_slice());
        assert_eq!(pair.intent.as_slice(), seq(&["xor", "var0", "and", "var1", "jump", "var2"]).as_slice());
    }

    #[test]
    fn empty_slots_are_identity() {
        let a = seq(&["mov", "eax", ",", "5"]);
        let pair = standardize(&a, &a, &SlotMap::new());
        assert_eq!(pair.snippet, a);
        let (back, warnings) = destandardize(&a, &SlotMap::new());
        assert_eq!(back, a);
        assert!(warnings.is_empty());
    }

    #[test]
    fn repeated_surface_gets_same_placeholder() {
        let mut slots = SlotMap::new();
        slots.bind("ecx");
        let pair = standardize(&seq(&["ecx"]), &seq(&["xor", "ecx", ",", "ecx"]), &slots);
        assert_eq!(pair.snippet, seq(&["xor", "var0", ",", "var0"]));
    }

    #[test]
    fn destandardize_fig1_and_unknown_placeholder() {
        let (out, warnings) = destandardize(&seq(&["xor", "var0", ",", "var1", "\\n", "jz", "var2"]), &fig1_slots());
        assert_eq!(out, seq(&["xor", "dl", ",", "0xbb", "\\n", "jz", "next_cycle"]));
        assert!(warnings.is_empty());

        let mut slots = SlotMap::new();
        slots.bind("dl");
        let (out, warnings) = destandardize(&seq(&["mov", "var7"]), &slots);
        assert_eq!(out, seq(&["mov", "var7"]));
        assert_eq!(warnings, vec!["var7".to_string()]);
    }

    #[test]
    fn json_keeps_index_order() {
        let s = fig1_slots();
        assert_eq!(s.to_json(), r#"{"var0":"dl","var1":"0xbb","var2":"next_cycle"}"#);
        let back: SlotMap = serde_json::from_str(&s.to_json()).unwrap();
        assert_eq!(back, s);
        assert!(serde_json::from_str::<SlotMap>(r#"{"var1":"x"}"#).is_err());
    }
}
