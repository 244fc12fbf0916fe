use std::collections::{BTreeSet, HashMap};

use crate::score::{format_quarter_length, parse_quarter_length, QuarterLength};

use super::{CorpusError, Token};

/// Dense bijection between tokens and `0..len()`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<Token>,
    index: HashMap<Token, usize>,
}

impl Vocabulary {
    /// Indices follow the sorted order of the distinct tokens.
    pub fn build(tokens: &[Token]) -> Result<Self, CorpusError> {
        if tokens.is_empty() {
            return Err(CorpusError::EmptyCorpus);
        }
        let distinct: BTreeSet<&Token> = tokens.iter().collect();
        Ok(Self::from_ordered(distinct.into_iter().cloned().collect()))
    }

    fn from_ordered(tokens: Vec<Token>) -> Self {
        let index = tokens.iter().cloned().enumerate().map(|(i, t)| (t, i)).collect();
        Self { tokens, index }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn encode(&self, token: &Token) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn decode(&self, index: usize) -> Option<&Token> {
        self.tokens.get(index)
    }

    pub fn encode_all(&self, tokens: &[Token]) -> Result<Vec<usize>, CorpusError> {
        tokens
            .iter()
            .map(|t| self.encode(t).ok_or_else(|| CorpusError::UnknownToken(t.to_string())))
            .collect()
    }

    pub fn tokens(&self) -> &[Token] {
        &self.tokens
    }

    /// Instruments in first-index order; empty for single-part vocabularies.
    pub fn instruments(&self) -> Vec<String> {
        let mut seen: Vec<String> = Vec::new();
        for t in &self.tokens {
            if let Some(i) = &t.instrument {
                if !seen.contains(i) {
                    seen.push(i.clone());
                }
            }
        }
        seen
    }
}

/// One `index<TAB>name<TAB>duration[<TAB>instrument]` line per entry.
pub fn write_vocabulary(vocab: &Vocabulary) -> String {
    let mut out = String::new();
    for (i, t) in vocab.tokens.iter().enumerate() {
        out.push_str(&format!("{i}\t{}\t{}", t.name, format_quarter_length(t.duration)));
        if let Some(inst) = &t.instrument {
            out.push('\t');
            out.push_str(inst);
        }
        out.push('\n');
    }
    out
}

pub fn read_vocabulary(text: &str) -> Result<Vocabulary, CorpusError> {
    let mut tokens = Vec::new();
    for (n, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let line_no = n + 1;
        let err = |message: String| CorpusError::Format {
            line: line_no,
            message,
        };
        let fields: Vec<&str> = line.split('\t').collect();
        if !(3..=4).contains(&fields.len()) {
            return Err(err(format!("expected 3 or 4 fields, found {}", fields.len())));
        }
        let index: usize = fields[0]
            .parse()
            .map_err(|_| err(format!("invalid index {:?}", fields[0])))?;
        if index != tokens.len() {
            return Err(err(format!("expected index {}, found {index}", tokens.len())));
        }
        let duration = parse_quarter_length(fields[2])
            .filter(|d| *d > QuarterLength::from_integer(0))
            .ok_or_else(|| err(format!("invalid duration {:?}", fields[2])))?;
        let token = Token::new(fields[1], duration, fields.get(3).map(|s| (*s).to_owned()));
        token.sound().map_err(|e| err(e.to_string()))?;
        tokens.push(token);
    }
    if tokens.is_empty() {
        return Err(CorpusError::EmptyCorpus);
    }
    let vocab = Vocabulary::from_ordered(tokens);
    if vocab.index.len() != vocab.tokens.len() {
        return Err(CorpusError::Format {
            line: 0,
            message: "duplicate vocabulary entries".into(),
        });
    }
    Ok(vocab)
}
