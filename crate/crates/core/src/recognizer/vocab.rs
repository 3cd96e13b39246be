//! Character vocabulary and the two class layouts derived from it.
//!
//! Token ids: 0 blank, 1 sos, 2 eos, 3.. characters. The decoder predicts
//! over `{eos} ∪ chars` (eos at class 0) and the CTC head over
//! `{blank} ∪ chars` (blank at class 0), so a character with token id `i`
//! is class `i − 2` in both.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

pub const BLANK: usize = 0;
pub const SOS: usize = 1;
pub const EOS: usize = 2;
const RESERVED: [&str; 3] = ["<blank>", "<sos>", "<eos>"];

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
}

impl Vocabulary {
    pub fn from_chars(chars: &[char]) -> Result<Self> {
        let mut tokens: Vec<String> = RESERVED.iter().map(|s| s.to_string()).collect();
        for &c in chars {
            let s = c.to_string();
            if tokens.contains(&s) {
                return Err(Error::InvalidArgument(format!("duplicate token {c:?}")));
            }
            tokens.push(s);
        }
        Ok(Self { tokens })
    }

    /// Parses the one-token-per-line file format.
    pub fn parse(text: &str) -> Result<Self> {
        let tokens: Vec<String> = text.lines().map(str::to_string).collect();
        if tokens.len() < 3 || tokens[..3] != RESERVED {
            return Err(Error::Format(format!(
                "vocabulary must start with {RESERVED:?}"
            )));
        }
        for (i, t) in tokens.iter().enumerate().skip(3) {
            if t.chars().count() != 1 {
                return Err(Error::Format(format!("line {i}: expected one character, got {t:?}")));
            }
            if tokens[..i].contains(t) {
                return Err(Error::Format(format!("line {i}: duplicate token {t:?}")));
            }
        }
        Ok(Self { tokens })
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&fs::read_to_string(path)?)
    }

    pub fn render(&self) -> String {
        let mut s = self.tokens.join("\n");
        s.push('\n');
        s
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        Ok(fs::write(path, self.render())?)
    }

    /// Number of tokens including the three reserved ones.
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn num_chars(&self) -> usize {
        self.tokens.len() - 3
    }

    /// Output size of both the decoder and the CTC head.
    pub fn num_classes(&self) -> usize {
        self.num_chars() + 1
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.tokens.get(id).map(String::as_str)
    }

    pub fn chars(&self) -> Vec<char> {
        self.tokens[3..].iter().filter_map(|t| t.chars().next()).collect()
    }

    /// Character token ids of `text`.
    pub fn encode(&self, text: &str) -> Result<Vec<usize>> {
        text.chars()
            .map(|c| {
                let s = c.to_string();
                self.tokens[3..]
                    .iter()
                    .position(|t| *t == s)
                    .map(|p| p + 3)
                    .ok_or_else(|| Error::InvalidArgument(format!("character {c:?} not in vocabulary")))
            })
            .collect()
    }

    /// Text of the character tokens in `ids`; reserved ids are skipped.
    pub fn decode(&self, ids: &[usize]) -> String {
        ids.iter()
            .filter(|&&i| i >= 3)
            .filter_map(|&i| self.token(i))
            .collect()
    }

    /// Decoder class of a token: eos → 0, character `i` → `i − 2`.
    pub fn decoder_class(&self, id: usize) -> Result<usize> {
        match id {
            EOS => Ok(0),
            i if i >= 3 && i < self.len() => Ok(i - 2),
            i => Err(Error::InvalidArgument(format!("token {i} is not a decoder target"))),
        }
    }

    /// Token id of a decoder class.
    pub fn decoder_token(&self, class: usize) -> usize {
        if class == 0 {
            EOS
        } else {
            class + 2
        }
    }

    /// CTC class of a character token.
    pub fn ctc_class(&self, id: usize) -> Result<usize> {
        if id >= 3 && id < self.len() {
            Ok(id - 2)
        } else {
            Err(Error::InvalidArgument(format!("token {id} is not a CTC label")))
        }
    }
}
