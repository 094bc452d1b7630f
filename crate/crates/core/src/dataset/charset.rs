use std::collections::{BTreeSet, HashMap};
use std::path::Path;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Ordered alphabet with the CTC blank at index `len()`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Charset {
    symbols: Vec<char>,
    index: HashMap<char, usize>,
}

impl Charset {
    pub fn new(symbols: Vec<char>) -> Result<Self> {
        let mut index = HashMap::with_capacity(symbols.len());
        for (i, &c) in symbols.iter().enumerate() {
            if index.insert(c, i).is_some() {
                return Err(Error::InvalidArgument(format!(
                    "duplicate symbol {c:?} in character set"
                )));
            }
        }
        Ok(Self { symbols, index })
    }

    /// Sorted union of all code points in `texts`.
    pub fn from_texts<'a>(texts: impl IntoIterator<Item = &'a str>) -> Result<Self> {
        let set: BTreeSet<char> = texts.into_iter().flat_map(str::chars).collect();
        if set.is_empty() {
            return Err(Error::InvalidArgument(
                "cannot build a character set from no text".into(),
            ));
        }
        Self::new(set.into_iter().collect())
    }

    /// Number of real symbols, C.
    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    pub fn blank_id(&self) -> usize {
        self.symbols.len()
    }

    /// Output classes of the network: C + 1.
    pub fn num_classes(&self) -> usize {
        self.symbols.len() + 1
    }

    pub fn symbols(&self) -> &[char] {
        &self.symbols
    }

    pub fn contains(&self, c: char) -> bool {
        self.index.contains_key(&c)
    }

    pub fn encode(&self, text: &str) -> Result<Vec<usize>> {
        text.chars()
            .map(|c| self.index.get(&c).copied().ok_or(Error::UnknownSymbol(c)))
            .collect()
    }

    pub fn decode(&self, ids: &[usize]) -> Result<String> {
        ids.iter()
            .map(|&id| {
                self.symbols.get(id).copied().ok_or(Error::LabelOutOfRange {
                    id,
                    size: self.symbols.len(),
                })
            })
            .collect()
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string(self)?).map_err(|e| Error::io(path, e))
    }
}

// On disk a charset is a JSON list of code points; the blank is implicit.
impl Serialize for Charset {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_seq(self.symbols.iter().map(|&c| u32::from(c)))
    }
}

impl<'de> Deserialize<'de> for Charset {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let points = Vec::<u32>::deserialize(d)?;
        let symbols = points
            .into_iter()
            .map(|p| {
                char::from_u32(p)
                    .ok_or_else(|| serde::de::Error::custom(format!("invalid code point {p}")))
            })
            .collect::<std::result::Result<Vec<_>, _>>()?;
        Charset::new(symbols).map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn union_of_texts() {
        let cs = Charset::from_texts(["ab", "bc"]).unwrap();
        assert_eq!(cs.symbols(), &['a', 'b', 'c']);
        assert_eq!(cs.blank_id(), 3);
        assert_eq!(Charset::from_texts(["aaa"]).unwrap().len(), 1);
        assert!(Charset::from_texts(Vec::<&str>::new()).is_err());
    }

    #[test]
    fn encode_decode() {
        let cs = Charset::from_texts(["cab"]).unwrap();
        assert_eq!(cs.decode(&cs.encode("abc").unwrap()).unwrap(), "abc");
        assert!(matches!(cs.encode("abz"), Err(Error::UnknownSymbol('z'))));
        assert!(cs.encode("").unwrap().is_empty());
        assert!(cs.decode(&[3]).is_err());
        for i in 0..cs.len() {
            let s = cs.decode(&[i]).unwrap();
            assert_eq!(cs.encode(&s).unwrap(), vec![i]);
        }
    }

    #[test]
    fn json_is_code_point_list() {
        let cs = Charset::from_texts(["বাংলা"]).unwrap();
        let text = serde_json::to_string(&cs).unwrap();
        assert!(text.starts_with('[') && !text.contains('"'));
        let back: Charset = serde_json::from_str(&text).unwrap();
        assert_eq!(back, cs);
        assert!(serde_json::from_str::<Charset>("[97,97]").is_err());
    }
}
