use std::collections::BTreeMap;

use super::DialogActTriple;

/// Replacement word sequences for act, slot and value tokens that are not
/// plain words, e.g. `expl-conf` → `explicit confirm`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ActWordMap {
    map: BTreeMap<String, Vec<String>>,
}

const DEFAULT_MAP: &[(&str, &str)] = &[
    ("expl-conf", "explicit confirm"),
    ("impl-conf", "implicit confirm"),
    ("confirm-domain", "confirm domain"),
    ("reqalts", "request alternatives"),
    ("reqmore", "request more"),
    ("welcomemsg", "welcome message"),
    ("canthelp", "can not help"),
    ("canthelp.exception", "can not help exception"),
    ("thankyou", "thank you"),
    ("ack", "acknowledge"),
    ("pricerange", "price range"),
    ("addr", "address"),
    ("postcode", "post code"),
    ("dontcare", "dont care"),
];

impl Default for ActWordMap {
    fn default() -> Self {
        Self::new(
            DEFAULT_MAP
                .iter()
                .map(|(k, v)| (k.to_string(), v.to_string())),
        )
    }
}

impl ActWordMap {
    pub fn new<I: IntoIterator<Item = (String, String)>>(entries: I) -> Self {
        let map = entries
            .into_iter()
            .map(|(k, v)| (k.to_lowercase(), super::tokenize(&v)))
            .collect();
        Self { map }
    }

    pub fn empty() -> Self {
        Self {
            map: BTreeMap::new(),
        }
    }

    pub fn get(&self, token: &str) -> Option<&[String]> {
        self.map.get(token).map(Vec::as_slice)
    }

    /// Every word a replacement can produce.
    pub fn words(&self) -> impl Iterator<Item = &str> {
        self.map.values().flatten().map(String::as_str)
    }

    fn push_mapped(&self, piece: &str, out: &mut Vec<String>) {
        for word in super::tokenize(piece) {
            match self.map.get(&word) {
                Some(rep) => out.extend(rep.iter().cloned()),
                None => out.push(word),
            }
        }
    }
}

/// Flattens acts into words: act, slot, value per triple in order, each
/// mapped and lowercased.
pub fn acts_to_tokens(acts: &[DialogActTriple], map: &ActWordMap) -> Vec<String> {
    let mut out = Vec::new();
    for t in acts {
        map.push_mapped(t.act(), &mut out);
        for piece in [t.slot(), t.value()].into_iter().flatten() {
            map.push_mapped(piece, &mut out);
        }
    }
    out
}
