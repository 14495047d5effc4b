//! The fixed 11-word utterance inventory.

use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Word {
    Heed,
    Had,
    Hood,
    Tail,
    Kale,
    Doe,
    Goat,
    Aba,
    Ada,
    Aga,
    Aka,
}

pub const WORD_COUNT: usize = 11;

impl Word {
    pub const ALL: [Word; WORD_COUNT] = [
        Word::Heed,
        Word::Had,
        Word::Hood,
        Word::Tail,
        Word::Kale,
        Word::Doe,
        Word::Goat,
        Word::Aba,
        Word::Ada,
        Word::Aga,
        Word::Aka,
    ];

    pub fn id(self) -> usize {
        self as usize
    }

    pub fn from_id(id: usize) -> Option<Word> {
        Word::ALL.get(id).copied()
    }

    pub fn text(self) -> &'static str {
        match self {
            Word::Heed => "heed",
            Word::Had => "had",
            Word::Hood => "hood",
            Word::Tail => "tail",
            Word::Kale => "kale",
            Word::Doe => "doe",
            Word::Goat => "goat",
            Word::Aba => "aba",
            Word::Ada => "ada",
            Word::Aga => "aga",
            Word::Aka => "aka",
        }
    }

    /// Broad IPA transcription.
    pub fn ipa(self) -> &'static str {
        match self {
            Word::Heed => "hid",
            Word::Had => "hæd",
            Word::Hood => "hʊd",
            Word::Tail => "tʰeɪl",
            Word::Kale => "kʰeɪl",
            Word::Doe => "doʊ",
            Word::Goat => "goʊt",
            Word::Aba => "aba",
            Word::Ada => "ada",
            Word::Aga => "aga",
            Word::Aka => "akʰa",
        }
    }

    /// Words whose articulation is dominated by the lips (bilabial closure or
    /// rounded vowel). The synthetic generator weights face channels for these.
    pub fn is_labial(self) -> bool {
        matches!(self, Word::Hood | Word::Doe | Word::Goat | Word::Aba)
    }
}

impl fmt::Display for Word {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.text())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown word '{0}'")]
pub struct UnknownWord(pub String);

impl FromStr for Word {
    type Err = UnknownWord;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Word::ALL
            .iter()
            .copied()
            .find(|w| w.text() == s)
            .ok_or_else(|| UnknownWord(s.to_string()))
    }
}
