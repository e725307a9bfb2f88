//! Static word vectors and character one-hot encodings.

use std::collections::{BTreeSet, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::read_text;
use crate::error::{Error, Result};
use crate::numerics::Tensor;
use crate::rng::DetRng;

pub const ALPHABET_SIZE: usize = 70;
/// Stands in for every character outside the alphabet.
pub const PLACEHOLDER: char = '\u{FFFD}';

const OTHER_SYMBOLS: [char; 33] = [
    ',', ';', '.', '!', '?', ':', '`', '\'', '\u{201C}', '\u{201D}', '/', '\\', '|', '_', '@', '#',
    '$', '%', '^', '&', '*', '~', '+', '-', '=', '<', '>', '(', ')', '[', ']', '{', '}',
];

/// The 70-symbol character lookup table: 26 letters, 10 digits, 33 other
/// symbols, then the unknown-character placeholder.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CharAlphabet {
    symbols: Vec<char>,
    index: HashMap<char, usize>,
}

impl Default for CharAlphabet {
    fn default() -> Self {
        let symbols: Vec<char> = ('a'..='z')
            .chain('0'..='9')
            .chain(OTHER_SYMBOLS)
            .chain(std::iter::once(PLACEHOLDER))
            .collect();
        Self::from_symbols(symbols).expect("built-in alphabet is valid")
    }
}

impl CharAlphabet {
    pub fn from_symbols(symbols: Vec<char>) -> Result<Self> {
        if symbols.len() != ALPHABET_SIZE {
            return Err(Error::invalid(format!(
                "alphabet must have {ALPHABET_SIZE} symbols, got {}",
                symbols.len()
            )));
        }
        if symbols.last() != Some(&PLACEHOLDER) {
            return Err(Error::invalid("alphabet placeholder must be the last symbol"));
        }
        let index: HashMap<char, usize> = symbols.iter().enumerate().map(|(i, &c)| (c, i)).collect();
        if index.len() != symbols.len() {
            return Err(Error::invalid("alphabet symbols must be distinct"));
        }
        Ok(CharAlphabet { symbols, index })
    }

    pub fn symbols(&self) -> &[char] {
        &self.symbols
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    pub fn placeholder_index(&self) -> usize {
        self.symbols.len() - 1
    }

    /// Index of an already case-folded character.
    pub fn index_of(&self, c: char) -> usize {
        self.index.get(&c).copied().unwrap_or(self.placeholder_index())
    }
}

/// One-hot rows for the first `valid_length` characters of a token, padded
/// with zero rows up to `max_len`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CharEncoding {
    pub max_len: usize,
    pub valid_length: usize,
    /// Hot column of each valid row.
    pub indices: Vec<usize>,
}

impl CharEncoding {
    pub fn matrix(&self) -> Tensor {
        let mut m = Tensor::zeros(&[self.max_len, ALPHABET_SIZE]);
        for (row, &col) in self.indices.iter().enumerate() {
            m.data_mut()[row * ALPHABET_SIZE + col] = 1.0;
        }
        m
    }

    pub fn one_hot_row(&self, row: usize) -> Tensor {
        let mut v = Tensor::zeros(&[ALPHABET_SIZE]);
        if let Some(&col) = self.indices.get(row) {
            v.data_mut()[col] = 1.0;
        }
        v
    }
}

pub fn encode_chars(token_text: &str, alphabet: &CharAlphabet, max_len: usize) -> Result<CharEncoding> {
    if max_len == 0 {
        return Err(Error::invalid("max character length must be at least 1"));
    }
    if token_text.is_empty() {
        return Err(Error::invalid("cannot encode an empty token"));
    }
    let indices: Vec<usize> = token_text
        .chars()
        .flat_map(char::to_lowercase)
        .take(max_len)
        .map(|c| alphabet.index_of(c))
        .collect();
    Ok(CharEncoding {
        max_len,
        valid_length: indices.len(),
        indices,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingTable {
    dimension: usize,
    words: Vec<String>,
    /// Row-major, one row per entry of `words`.
    vectors: Vec<f64>,
    unk: Vec<f64>,
    #[serde(skip)]
    index: HashMap<String, usize>,
}

impl EmbeddingTable {
    pub fn new(dimension: usize, words: Vec<String>, vectors: Vec<f64>) -> Result<Self> {
        if dimension == 0 {
            return Err(Error::invalid("embedding dimension must be positive"));
        }
        if words.is_empty() {
            return Err(Error::invalid("embedding table has no entries"));
        }
        if vectors.len() != words.len() * dimension {
            return Err(Error::invalid(format!(
                "{} words of dimension {dimension} need {} values, got {}",
                words.len(),
                words.len() * dimension,
                vectors.len()
            )));
        }
        let mut unk = vec![0.0; dimension];
        for row in vectors.chunks(dimension) {
            for (u, v) in unk.iter_mut().zip(row) {
                *u += v;
            }
        }
        let n = words.len() as f64;
        unk.iter_mut().for_each(|u| *u /= n);
        let mut table = EmbeddingTable {
            dimension,
            words,
            vectors,
            unk,
            index: HashMap::new(),
        };
        table.rebuild_index();
        Ok(table)
    }

    fn rebuild_index(&mut self) {
        self.index.clear();
        for (i, w) in self.words.iter().enumerate() {
            self.index.entry(w.clone()).or_insert(i);
        }
    }

    /// Random vectors, uniform in ±sqrt(3/dim), for every word in `vocab`.
    pub fn random(vocab: &BTreeSet<String>, dimension: usize, rng: &mut DetRng) -> Result<Self> {
        let scale = (3.0 / dimension as f64).sqrt();
        let words: Vec<String> = vocab.iter().cloned().collect();
        let vectors = (0..words.len() * dimension)
            .map(|_| rng.uniform_range(-scale, scale))
            .collect();
        Self::new(dimension, words, vectors)
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn vectors(&self) -> &[f64] {
        &self.vectors
    }

    pub fn unk_vector(&self) -> &[f64] {
        &self.unk
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.vectors[i * self.dimension..(i + 1) * self.dimension]
    }

    /// Exact match, then lowercase match.
    pub fn find(&self, token_text: &str) -> Option<usize> {
        self.index
            .get(token_text)
            .or_else(|| self.index.get(&token_text.to_lowercase()))
            .copied()
    }

    pub fn lookup_word(&self, token_text: &str) -> &[f64] {
        match self.find(token_text) {
            Some(i) => self.row(i),
            None => &self.unk,
        }
    }

    /// Keeps only entries reachable from `tokens` through `find`. The unknown
    /// vector is preserved from the full table.
    pub fn restrict<'a>(&self, tokens: impl IntoIterator<Item = &'a str>) -> EmbeddingTable {
        let keep: BTreeSet<usize> = tokens.into_iter().filter_map(|t| self.find(t)).collect();
        let words = keep.iter().map(|&i| self.words[i].clone()).collect();
        let vectors = keep.iter().flat_map(|&i| self.row(i).iter().copied()).collect();
        let mut table = EmbeddingTable {
            dimension: self.dimension,
            words,
            vectors,
            unk: self.unk.clone(),
            index: HashMap::new(),
        };
        table.rebuild_index();
        table
    }

    /// Rebuilds a table from serialized parts, keeping the stored unknown vector.
    pub fn from_parts(dimension: usize, words: Vec<String>, vectors: Vec<f64>, unk: Vec<f64>) -> Result<Self> {
        if vectors.len() != words.len() * dimension || unk.len() != dimension {
            return Err(Error::invalid("inconsistent embedding table parts"));
        }
        let mut table = EmbeddingTable {
            dimension,
            words,
            vectors,
            unk,
            index: HashMap::new(),
        };
        table.rebuild_index();
        Ok(table)
    }

    pub fn vectors_mut(&mut self) -> &mut [f64] {
        &mut self.vectors
    }
}

/// Loads a text vector file: `word v1 ... vd` per line, with an optional
/// `count dimension` header line.
pub fn load_word_vectors(path: &Path) -> Result<EmbeddingTable> {
    parse_word_vectors(&read_text(path)?, path)
}

pub fn parse_word_vectors(text: &str, path: &Path) -> Result<EmbeddingTable> {
    let err = |line: usize, message: String| Error::Parse {
        path: path.display().to_string(),
        line,
        message,
    };
    let mut dimension = None;
    let mut words = Vec::new();
    let mut vectors = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let lineno = idx + 1;
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.is_empty() {
            continue;
        }
        if idx == 0 && fields.len() == 2 && fields.iter().all(|f| f.parse::<usize>().is_ok()) {
            continue;
        }
        let dim = fields.len() - 1;
        if dim == 0 {
            return Err(err(lineno, format!("word {:?} has no vector", fields[0])));
        }
        match dimension {
            None => dimension = Some(dim),
            Some(d) if d != dim => {
                return Err(err(lineno, format!("dimension mismatch: expected {d}, got {dim}")));
            }
            Some(_) => {}
        }
        for f in &fields[1..] {
            let v: f64 = f
                .parse()
                .map_err(|_| err(lineno, format!("invalid number {f:?}")))?;
            if !v.is_finite() {
                return Err(err(lineno, format!("non-finite value {f:?}")));
            }
            vectors.push(v);
        }
        words.push(fields[0].to_string());
    }
    let Some(dimension) = dimension else {
        return Err(err(0, "vector file contains no entries".into()));
    };
    EmbeddingTable::new(dimension, words, vectors)
}
