//! Model and property file formats, the eight-step analysis pipeline, and
//! report generation for the `ptgt` command-line verifier.

pub mod model;
pub mod pipeline;
pub mod property;
pub mod report;

use std::fmt;

/// A positioned parse or validation diagnostic.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Diag {
    pub line: usize,
    pub message: String,
}

impl Diag {
    pub fn new(line: usize, message: impl Into<String>) -> Self {
        Diag {
            line,
            message: message.into(),
        }
    }
}

impl fmt::Display for Diag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}: {}", self.line, self.message)
    }
}

impl std::error::Error for Diag {}

/// Tokenized input: one entry per non-empty line, `#` starts a comment.
pub(crate) struct Lines {
    items: Vec<(usize, Vec<String>)>,
    pos: usize,
}

impl Lines {
    pub fn new(text: &str) -> Self {
        let mut items = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = match raw.find('#') {
                Some(p) => &raw[..p],
                None => raw,
            };
            let words: Vec<String> = line.split_whitespace().map(String::from).collect();
            if !words.is_empty() {
                items.push((i + 1, words));
            }
        }
        Lines { items, pos: 0 }
    }

    pub fn peek(&self) -> Option<&(usize, Vec<String>)> {
        self.items.get(self.pos)
    }

    pub fn next(&mut self) -> Option<&(usize, Vec<String>)> {
        let item = self.items.get(self.pos);
        if item.is_some() {
            self.pos += 1;
        }
        item
    }

    pub fn current_line(&self) -> usize {
        self.items
            .get(self.pos.saturating_sub(1))
            .or_else(|| self.items.last())
            .map(|(l, _)| *l)
            .unwrap_or(0)
    }

    /// Consumes a line that must consist of exactly the given word.
    pub fn expect(&mut self, word: &str) -> Result<(), Diag> {
        match self.next() {
            Some((line, words)) if words.len() == 1 && words[0] == word => {
                let _ = line;
                Ok(())
            }
            Some((line, words)) => Err(Diag::new(
                *line,
                format!("expected `{word}`, found `{}`", words.join(" ")),
            )),
            None => Err(Diag::new(0, format!("expected `{word}`, found end of file"))),
        }
    }
}
