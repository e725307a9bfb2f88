//! Annotated sentences, the BIO tag set, span/tag conversion, and corpus I/O.
//!
//! On-disk BIO format: one `token<TAB>tag` per line, a blank line after each
//! sentence, optional `-DOCSTART- <doc_id>` header lines. Lines starting with
//! `## ` are comments (the tagger writes span summaries there).

use std::collections::HashMap;
use std::fmt;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::DetRng;
use crate::tokenizer::{tokenize, Token, TokenizerConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum EntityType {
    DNAMutation,
    ProteinMutation,
    SNP,
}

impl EntityType {
    pub const ALL: [EntityType; 3] = [
        EntityType::DNAMutation,
        EntityType::ProteinMutation,
        EntityType::SNP,
    ];

    pub fn name(self) -> &'static str {
        match self {
            EntityType::DNAMutation => "DNAMutation",
            EntityType::ProteinMutation => "ProteinMutation",
            EntityType::SNP => "SNP",
        }
    }

    pub fn parse(s: &str) -> Option<EntityType> {
        EntityType::ALL.into_iter().find(|t| t.name() == s)
    }
}

impl fmt::Display for EntityType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// The six-tag BIO scheme. SNPs are single-token, so there is no `I-SNP`.
/// Index 0 is `O`, which is also what padding positions carry.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[repr(u8)]
pub enum Tag {
    O = 0,
    BDna = 1,
    IDna = 2,
    BProtein = 3,
    IProtein = 4,
    BSnp = 5,
}

pub const NUM_TAGS: usize = 6;

impl Tag {
    pub const ALL: [Tag; NUM_TAGS] = [
        Tag::O,
        Tag::BDna,
        Tag::IDna,
        Tag::BProtein,
        Tag::IProtein,
        Tag::BSnp,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Tag> {
        Tag::ALL.get(i).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            Tag::O => "O",
            Tag::BDna => "B-DNAMutation",
            Tag::IDna => "I-DNAMutation",
            Tag::BProtein => "B-ProteinMutation",
            Tag::IProtein => "I-ProteinMutation",
            Tag::BSnp => "B-SNP",
        }
    }

    pub fn parse(s: &str) -> Result<Tag> {
        Tag::ALL
            .into_iter()
            .find(|t| t.name() == s)
            .ok_or_else(|| Error::UnknownTag(s.to_string()))
    }

    pub fn entity_type(self) -> Option<EntityType> {
        match self {
            Tag::O => None,
            Tag::BDna | Tag::IDna => Some(EntityType::DNAMutation),
            Tag::BProtein | Tag::IProtein => Some(EntityType::ProteinMutation),
            Tag::BSnp => Some(EntityType::SNP),
        }
    }

    pub fn is_inside(self) -> bool {
        matches!(self, Tag::IDna | Tag::IProtein)
    }

    pub fn begin(ty: EntityType) -> Tag {
        match ty {
            EntityType::DNAMutation => Tag::BDna,
            EntityType::ProteinMutation => Tag::BProtein,
            EntityType::SNP => Tag::BSnp,
        }
    }

    pub fn inside(ty: EntityType) -> Option<Tag> {
        match ty {
            EntityType::DNAMutation => Some(Tag::IDna),
            EntityType::ProteinMutation => Some(Tag::IProtein),
            EntityType::SNP => None,
        }
    }
}

impl fmt::Display for Tag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A typed run of tokens, both ends inclusive.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct EntitySpan {
    pub entity_type: EntityType,
    pub token_start: usize,
    pub token_end: usize,
}

impl EntitySpan {
    pub fn new(entity_type: EntityType, token_start: usize, token_end: usize) -> Self {
        EntitySpan {
            entity_type,
            token_start,
            token_end,
        }
    }

    /// Character range `[start, end)` covered by the span's tokens.
    pub fn char_range(&self, tokens: &[Token]) -> Option<(usize, usize)> {
        let first = tokens.get(self.token_start)?;
        let last = tokens.get(self.token_end)?;
        Some((first.start, last.end))
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotatedSentence {
    pub doc_id: String,
    pub tokens: Vec<Token>,
    pub tags: Vec<Tag>,
}

impl AnnotatedSentence {
    /// Builds a sentence from bare token strings, synthesizing offsets as if
    /// the tokens were joined by single spaces.
    pub fn from_words<S: AsRef<str>>(doc_id: &str, words: &[S], tags: Vec<Tag>) -> Result<Self> {
        let mut tokens = Vec::with_capacity(words.len());
        let mut pos = 0;
        for w in words {
            let w = w.as_ref();
            let len = w.chars().count();
            tokens.push(Token::new(w, pos, pos + len));
            pos += len + 1;
        }
        let s = AnnotatedSentence {
            doc_id: doc_id.to_string(),
            tokens,
            tags,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn spans(&self) -> Vec<EntitySpan> {
        bio_to_spans(&self.tags)
    }

    pub fn validate(&self) -> Result<()> {
        if self.tokens.len() != self.tags.len() {
            return Err(Error::invalid(format!(
                "{} tokens but {} tags",
                self.tokens.len(),
                self.tags.len()
            )));
        }
        if let Some(pos) = first_bio_violation(&self.tags) {
            return Err(Error::invalid(format!(
                "tag {} at position {pos} does not continue an entity of the same type",
                self.tags[pos]
            )));
        }
        Ok(())
    }
}

/// Position of the first `I-X` that follows neither `B-X` nor `I-X`.
pub fn first_bio_violation(tags: &[Tag]) -> Option<usize> {
    let mut prev: Option<EntityType> = None;
    for (i, &t) in tags.iter().enumerate() {
        if t.is_inside() && prev != t.entity_type() {
            return Some(i);
        }
        prev = t.entity_type();
    }
    None
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetSplit {
    pub train: Vec<AnnotatedSentence>,
    pub validation: Vec<AnnotatedSentence>,
    pub test: Vec<AnnotatedSentence>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSizes {
    pub train: usize,
    pub validation: usize,
    pub test: usize,
}

impl DatasetSplit {
    pub fn sizes(&self) -> SplitSizes {
        SplitSizes {
            train: self.train.len(),
            validation: self.validation.len(),
            test: self.test.len(),
        }
    }
}

/// Tags for `num_tokens` tokens given aligned, non-overlapping spans.
pub fn spans_to_bio(num_tokens: usize, spans: &[EntitySpan]) -> Result<Vec<Tag>> {
    let mut tags = vec![Tag::O; num_tokens];
    let mut taken = vec![false; num_tokens];
    for span in spans {
        if span.token_start > span.token_end || span.token_end >= num_tokens {
            return Err(Error::Span(format!(
                "span {}..={} out of range for {num_tokens} tokens",
                span.token_start, span.token_end
            )));
        }
        let inside = match Tag::inside(span.entity_type) {
            Some(t) => t,
            None if span.token_start == span.token_end => Tag::O,
            None => {
                return Err(Error::Span(format!(
                    "SNP span {}..={} covers more than one token",
                    span.token_start, span.token_end
                )))
            }
        };
        if taken[span.token_start..=span.token_end].iter().any(|&t| t) {
            return Err(Error::Span(format!(
                "span {}..={} overlaps another span",
                span.token_start, span.token_end
            )));
        }
        tags[span.token_start] = Tag::begin(span.entity_type);
        tags[span.token_start + 1..=span.token_end].fill(inside);
        taken[span.token_start..=span.token_end].fill(true);
    }
    Ok(tags)
}

/// Recovers spans from any tag sequence. An `I-X` that does not continue an
/// `X` entity opens a new `X` span.
pub fn bio_to_spans(tags: &[Tag]) -> Vec<EntitySpan> {
    let mut spans = Vec::new();
    let mut open: Option<EntitySpan> = None;
    for (i, &t) in tags.iter().enumerate() {
        let continues = t.is_inside()
            && open.is_some_and(|s| Some(s.entity_type) == t.entity_type());
        if continues {
            if let Some(s) = open.as_mut() {
                s.token_end = i;
            }
            continue;
        }
        spans.extend(open.take());
        if let Some(ty) = t.entity_type() {
            open = Some(EntitySpan::new(ty, i, i));
        }
    }
    spans.extend(open);
    spans
}

fn parse_err(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.display().to_string(),
        line,
        message: message.into(),
    }
}

pub fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub fn load_bio_file(path: &Path) -> Result<Vec<AnnotatedSentence>> {
    let text = read_text(path)?;
    parse_bio(&text, path)
}

pub fn parse_bio(text: &str, path: &Path) -> Result<Vec<AnnotatedSentence>> {
    struct Pending {
        words: Vec<String>,
        tags: Vec<Tag>,
        lines: Vec<usize>,
    }
    fn flush(
        pending: &mut Pending,
        doc_id: &str,
        path: &Path,
        out: &mut Vec<AnnotatedSentence>,
    ) -> Result<()> {
        if pending.words.is_empty() {
            return Ok(());
        }
        if let Some(pos) = first_bio_violation(&pending.tags) {
            return Err(parse_err(
                path,
                pending.lines[pos],
                format!("tag {} does not continue an entity of the same type", pending.tags[pos]),
            ));
        }
        let words = std::mem::take(&mut pending.words);
        let tags = std::mem::take(&mut pending.tags);
        pending.lines.clear();
        out.push(AnnotatedSentence::from_words(doc_id, &words, tags)?);
        Ok(())
    }

    let mut out = Vec::new();
    let mut doc_id = String::new();
    let mut pending = Pending {
        words: Vec::new(),
        tags: Vec::new(),
        lines: Vec::new(),
    };
    for (idx, raw) in text.lines().enumerate() {
        let lineno = idx + 1;
        let line = raw.strip_suffix('\r').unwrap_or(raw);
        if line.trim().is_empty() {
            flush(&mut pending, &doc_id, path, &mut out)?;
            continue;
        }
        if line.starts_with("## ") {
            continue;
        }
        if let Some(rest) = line.strip_prefix("-DOCSTART-") {
            flush(&mut pending, &doc_id, path, &mut out)?;
            doc_id = rest.trim().to_string();
            continue;
        }
        let mut fields = line.split('\t');
        let (Some(word), Some(tag), None) = (fields.next(), fields.next(), fields.next()) else {
            return Err(parse_err(path, lineno, format!("expected `token<TAB>tag`, got {line:?}")));
        };
        if word.is_empty() || word.chars().any(char::is_whitespace) {
            return Err(parse_err(path, lineno, format!("invalid token {word:?}")));
        }
        let tag = Tag::parse(tag.trim()).map_err(|e| parse_err(path, lineno, e.to_string()))?;
        pending.words.push(word.to_string());
        pending.tags.push(tag);
        pending.lines.push(lineno);
    }
    flush(&mut pending, &doc_id, path, &mut out)?;
    Ok(out)
}

/// Canonical BIO serialization; `parse_bio` of the output reproduces the input.
pub fn write_bio(sentences: &[AnnotatedSentence]) -> String {
    let mut out = String::new();
    let mut current_doc = "";
    for s in sentences {
        if s.doc_id != current_doc {
            if s.doc_id.is_empty() {
                out.push_str("-DOCSTART-\n\n");
            } else {
                out.push_str("-DOCSTART- ");
                out.push_str(&s.doc_id);
                out.push_str("\n\n");
            }
            current_doc = &s.doc_id;
        }
        for (tok, tag) in s.tokens.iter().zip(&s.tags) {
            out.push_str(&tok.text);
            out.push('\t');
            out.push_str(tag.name());
            out.push('\n');
        }
        out.push('\n');
    }
    out
}

pub fn save_bio_file(path: &Path, sentences: &[AnnotatedSentence]) -> Result<()> {
    fs::write(path, write_bio(sentences)).map_err(|e| Error::io(path, e))
}

/// One gold mention given by character offsets into its document text.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct OffsetSpan {
    pub doc_id: String,
    pub char_start: usize,
    pub char_end: usize,
    pub entity_type: EntityType,
    pub surface: String,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum MisalignReason {
    /// A span edge falls strictly inside a token.
    MidToken,
    /// Shares a token with an earlier span of the same document.
    Overlap,
    /// SNP mentions must be a single token.
    MultiTokenSnp,
    OutOfRange,
    UnknownDocument,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Misaligned {
    pub span: OffsetSpan,
    pub reason: MisalignReason,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AlignmentReport {
    pub total_spans: usize,
    pub aligned: usize,
    pub misaligned: Vec<Misaligned>,
    /// Spans whose surface string differs from the text at their offsets.
    /// They are still converted when their offsets align.
    pub surface_mismatches: usize,
}

impl AlignmentReport {
    pub fn misaligned_count(&self) -> usize {
        self.misaligned.len()
    }

    /// Line-oriented text rendering.
    pub fn render(&self) -> String {
        let mut out = format!(
            "spans: {}\naligned: {}\nmisaligned: {}\nsurface_mismatches: {}\n",
            self.total_spans,
            self.aligned,
            self.misaligned.len(),
            self.surface_mismatches
        );
        for m in &self.misaligned {
            out.push_str(&format!(
                "{:?}\t{}\t{}\t{}\t{}\t{}\n",
                m.reason,
                m.span.doc_id,
                m.span.char_start,
                m.span.char_end,
                m.span.entity_type,
                m.span.surface
            ));
        }
        out
    }
}

/// Tokenizes one document and converts its offset spans to BIO tags.
/// Spans that cannot be aligned are recorded in `report` and skipped.
pub fn align_document(
    doc_id: &str,
    text: &str,
    spans: &[OffsetSpan],
    config: &TokenizerConfig,
    report: &mut AlignmentReport,
) -> AnnotatedSentence {
    let tokens = tokenize(text, config);
    let text_chars: Vec<char> = text.chars().collect();
    let by_start: HashMap<usize, usize> = tokens.iter().enumerate().map(|(i, t)| (t.start, i)).collect();
    let by_end: HashMap<usize, usize> = tokens.iter().enumerate().map(|(i, t)| (t.end, i)).collect();

    let mut ordered: Vec<&OffsetSpan> = spans.iter().collect();
    ordered.sort_by_key(|s| (s.char_start, s.char_end));

    let mut accepted: Vec<EntitySpan> = Vec::new();
    let mut taken = vec![false; tokens.len()];
    for span in ordered {
        report.total_spans += 1;
        let mut reject = |reason| {
            report.misaligned.push(Misaligned {
                span: span.clone(),
                reason,
            })
        };
        if span.char_start >= span.char_end || span.char_end > text_chars.len() {
            reject(MisalignReason::OutOfRange);
            continue;
        }
        let (Some(&first), Some(&last)) = (by_start.get(&span.char_start), by_end.get(&span.char_end)) else {
            reject(MisalignReason::MidToken);
            continue;
        };
        if first > last {
            reject(MisalignReason::MidToken);
            continue;
        }
        if span.entity_type == EntityType::SNP && first != last {
            reject(MisalignReason::MultiTokenSnp);
            continue;
        }
        if taken[first..=last].iter().any(|&t| t) {
            reject(MisalignReason::Overlap);
            continue;
        }
        let actual: String = text_chars[span.char_start..span.char_end].iter().collect();
        if actual != span.surface {
            report.surface_mismatches += 1;
        }
        taken[first..=last].fill(true);
        accepted.push(EntitySpan::new(span.entity_type, first, last));
        report.aligned += 1;
    }
    let tags = spans_to_bio(tokens.len(), &accepted)
        .expect("accepted spans are aligned and disjoint");
    AnnotatedSentence {
        doc_id: doc_id.to_string(),
        tokens,
        tags,
    }
}

/// Parses `doc_id<TAB>text` lines.
pub fn parse_documents(text: &str, path: &Path) -> Result<Vec<(String, String)>> {
    let mut docs = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let line = line.strip_suffix('\r').unwrap_or(line);
        if line.trim().is_empty() {
            continue;
        }
        let Some((id, body)) = line.split_once('\t') else {
            return Err(parse_err(path, idx + 1, "expected `doc_id<TAB>text`"));
        };
        docs.push((id.to_string(), body.to_string()));
    }
    Ok(docs)
}

/// Parses `doc_id<TAB>char_start<TAB>char_end<TAB>type<TAB>surface` lines.
pub fn parse_offset_spans(text: &str, path: &Path) -> Result<Vec<OffsetSpan>> {
    let mut spans = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let lineno = idx + 1;
        let line = line.strip_suffix('\r').unwrap_or(line);
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 5 {
            return Err(parse_err(path, lineno, format!("expected 5 tab-separated fields, got {}", fields.len())));
        }
        let offset = |s: &str, what: &str| {
            s.trim()
                .parse::<usize>()
                .map_err(|_| parse_err(path, lineno, format!("invalid {what} {s:?}")))
        };
        let entity_type = EntityType::parse(fields[3].trim())
            .ok_or_else(|| parse_err(path, lineno, format!("unknown entity type {}", fields[3])))?;
        spans.push(OffsetSpan {
            doc_id: fields[0].to_string(),
            char_start: offset(fields[1], "char_start")?,
            char_end: offset(fields[2], "char_end")?,
            entity_type,
            surface: fields[4].to_string(),
        });
    }
    Ok(spans)
}

/// Reads a document file and its offset annotations and aligns them.
pub fn load_offset_annotations(
    text_path: &Path,
    annotations_path: &Path,
    config: &TokenizerConfig,
) -> Result<(Vec<AnnotatedSentence>, AlignmentReport)> {
    let docs = parse_documents(&read_text(text_path)?, text_path)?;
    let spans = parse_offset_spans(&read_text(annotations_path)?, annotations_path)?;
    Ok(align_corpus(&docs, &spans, config))
}

pub fn align_corpus(
    docs: &[(String, String)],
    spans: &[OffsetSpan],
    config: &TokenizerConfig,
) -> (Vec<AnnotatedSentence>, AlignmentReport) {
    let mut by_doc: HashMap<&str, Vec<OffsetSpan>> = HashMap::new();
    for s in spans {
        by_doc.entry(s.doc_id.as_str()).or_default().push(s.clone());
    }
    let mut report = AlignmentReport::default();
    let mut sentences = Vec::with_capacity(docs.len());
    for (id, text) in docs {
        let doc_spans = by_doc.remove(id.as_str()).unwrap_or_default();
        sentences.push(align_document(id, text, &doc_spans, config, &mut report));
    }
    let mut orphans: Vec<OffsetSpan> = by_doc.into_values().flatten().collect();
    orphans.sort_by(|a, b| (&a.doc_id, a.char_start).cmp(&(&b.doc_id, b.char_start)));
    for span in orphans {
        report.total_spans += 1;
        report.misaligned.push(Misaligned {
            span,
            reason: MisalignReason::UnknownDocument,
        });
    }
    (sentences, report)
}

/// Deterministic random holdout. The validation side gets
/// `round(fraction * n)` sentences; both sides keep corpus order.
pub fn split_holdout<T: Clone>(items: &[T], fraction: f64, seed: u64) -> Result<(Vec<T>, Vec<T>)> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::invalid(format!("holdout fraction must be in (0, 1), got {fraction}")));
    }
    if items.is_empty() {
        return Err(Error::invalid("cannot split an empty corpus"));
    }
    let n_val = (fraction * items.len() as f64).round() as usize;
    let mut order: Vec<usize> = (0..items.len()).collect();
    DetRng::new(seed).split_named("holdout").shuffle(&mut order);
    let mut is_val = vec![false; items.len()];
    for &i in &order[..n_val] {
        is_val[i] = true;
    }
    let (mut train, mut val) = (Vec::new(), Vec::new());
    for (item, v) in items.iter().zip(is_val) {
        if v {
            val.push(item.clone());
        } else {
            train.push(item.clone());
        }
    }
    Ok((train, val))
}
