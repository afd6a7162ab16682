use std::collections::HashMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Reserved id of the padding entry in both alphabets.
pub const PAD: usize = 0;
/// Reserved id of the unknown entry in both alphabets.
pub const UNK: usize = 1;

pub const PAD_TOKEN: &str = "<pad>";
pub const UNK_TOKEN: &str = "<unk>";

const SPECIALS: usize = 2;

/// Word and character alphabets. Ids `0` and `1` are PAD and UNK; regular
/// entries follow in frequency-descending, then lexicographic, order.
#[derive(Clone, Debug, PartialEq)]
pub struct Vocabulary {
    words: Vec<String>,
    word_to_id: HashMap<String, usize>,
    chars: Vec<char>,
    char_to_id: HashMap<char, usize>,
}

/// On-disk layout: regular entries only, `id = index + 2`.
#[derive(Serialize, Deserialize)]
struct VocabFile {
    words: Vec<String>,
    chars: Vec<String>,
}

fn ranked<K: Ord + Clone>(counts: HashMap<K, u64>) -> Vec<K> {
    let mut entries: Vec<(K, u64)> = counts.into_iter().collect();
    entries.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    entries.into_iter().map(|(k, _)| k).collect()
}

impl Vocabulary {
    /// Builds both alphabets from a stream of tokenized titles.
    pub fn build<I, T, S>(titles: I) -> Result<Self>
    where
        I: IntoIterator<Item = T>,
        T: AsRef<[S]>,
        S: AsRef<str>,
    {
        let mut word_counts: HashMap<String, u64> = HashMap::new();
        let mut char_counts: HashMap<char, u64> = HashMap::new();
        for title in titles {
            for token in title.as_ref() {
                let token = token.as_ref();
                if token == PAD_TOKEN || token == UNK_TOKEN {
                    continue;
                }
                *word_counts.entry(token.to_owned()).or_default() += 1;
                for c in token.chars() {
                    *char_counts.entry(c).or_default() += 1;
                }
            }
        }
        if word_counts.is_empty() {
            return Err(Error::EmptyCorpus("no tokens to build a vocabulary from".into()));
        }
        Ok(Self::from_entries(ranked(word_counts), ranked(char_counts)))
    }

    fn from_entries(words: Vec<String>, chars: Vec<char>) -> Self {
        let words: Vec<String> = [PAD_TOKEN.to_owned(), UNK_TOKEN.to_owned()]
            .into_iter()
            .chain(words)
            .collect();
        let word_to_id = words.iter().enumerate().map(|(i, w)| (w.clone(), i)).collect();
        // The char alphabet reserves the same two slots; '\0' and '\u{1}' are placeholders.
        let chars: Vec<char> = ['\0', '\u{1}'].into_iter().chain(chars).collect();
        let char_to_id = chars
            .iter()
            .enumerate()
            .skip(SPECIALS)
            .map(|(i, c)| (*c, i))
            .collect();
        Vocabulary {
            words,
            word_to_id,
            chars,
            char_to_id,
        }
    }

    /// Number of word ids, specials included.
    pub fn word_count(&self) -> usize {
        self.words.len()
    }

    /// Number of char ids, specials included.
    pub fn char_count(&self) -> usize {
        self.chars.len()
    }

    pub fn word_id(&self, token: &str) -> usize {
        self.word_to_id.get(token).copied().unwrap_or(UNK)
    }

    pub fn contains_word(&self, token: &str) -> bool {
        self.word_to_id
            .get(token)
            .is_some_and(|&id| id >= SPECIALS)
    }

    pub fn char_id(&self, c: char) -> usize {
        self.char_to_id.get(&c).copied().unwrap_or(UNK)
    }

    pub fn word(&self, id: usize) -> Option<&str> {
        self.words.get(id).map(String::as_str)
    }

    /// Regular (non-special) words in id order.
    pub fn words(&self) -> impl Iterator<Item = (usize, &str)> {
        self.words
            .iter()
            .enumerate()
            .skip(SPECIALS)
            .map(|(i, w)| (i, w.as_str()))
    }

    fn to_file(&self) -> VocabFile {
        VocabFile {
            words: self.words[SPECIALS..].to_vec(),
            chars: self.chars[SPECIALS..].iter().map(|c| c.to_string()).collect(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&self.to_file()).expect("vocabulary serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: VocabFile = serde_json::from_str(text)?;
        let mut chars = Vec::with_capacity(file.chars.len());
        for entry in &file.chars {
            let mut it = entry.chars();
            match (it.next(), it.next()) {
                (Some(c), None) => chars.push(c),
                _ => {
                    return Err(Error::EmptyCorpus(format!(
                        "char entry {entry:?} is not a single character"
                    )))
                }
            }
        }
        Ok(Self::from_entries(file.words, chars))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }

    /// Hex SHA-256 of the serialized vocabulary; stored in checkpoints.
    pub fn fingerprint(&self) -> String {
        Sha256::digest(self.to_json().as_bytes())
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::tokenize;

    fn vocab(titles: &[&str]) -> Vocabulary {
        Vocabulary::build(titles.iter().map(|t| tokenize(t))).unwrap()
    }

    #[test]
    fn counts_distinct_tokens_plus_specials() {
        let v = vocab(&["a b", "b c"]);
        assert_eq!(v.word_count(), 5);
        // b occurs twice, then a and c lexicographically
        assert_eq!(v.word_id("b"), 2);
        assert_eq!(v.word_id("a"), 3);
        assert_eq!(v.word_id("c"), 4);
        assert_eq!(v.word_id("zzz"), UNK);
    }

    #[test]
    fn char_alphabet() {
        let v = vocab(&["aa"]);
        assert_eq!(v.char_count(), 3);
        assert_eq!(v.char_id('a'), 2);
        assert_eq!(v.char_id('q'), UNK);
    }

    #[test]
    fn empty_stream_is_an_error() {
        let empty: Vec<Vec<String>> = vec![];
        assert!(Vocabulary::build(&empty).is_err());
        assert!(Vocabulary::build(vec![Vec::<String>::new()]).is_err());
    }

    #[test]
    fn ids_and_words_are_inverse_and_stable_across_save_load() {
        let v = vocab(&["fruit cake , 13 oz", "greek yogurt , 6 oz", "café"]);
        for (id, w) in v.words() {
            assert_eq!(v.word_id(w), id);
        }
        assert_ne!(PAD, UNK);
        let back = Vocabulary::from_json(&v.to_json()).unwrap();
        assert_eq!(back, v);
        assert_eq!(back.word(PAD), Some(PAD_TOKEN));
        assert_eq!(back.word(UNK), Some(UNK_TOKEN));
        assert_eq!(back.fingerprint(), v.fingerprint());
        let json: serde_json::Value = serde_json::from_str(&v.to_json()).unwrap();
        assert_eq!(json["words"][0], ",");
        assert_eq!(json["words"][1], "oz");
    }

    #[test]
    fn special_strings_in_the_corpus_do_not_shadow_reserved_ids() {
        let v = vocab(&["<unk> x <pad>"]);
        assert_eq!(v.word_count(), 3);
        assert_eq!(v.word_id("<unk>"), UNK);
        assert_eq!(v.word_id("<pad>"), PAD);
    }
}
