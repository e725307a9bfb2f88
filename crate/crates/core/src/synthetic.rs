//! Template-generated variant corpus for smoke tests and overfitting checks.
//!
//! Sentences mix DNA mutations (`c.1138G>A`, `c.399_402del`), protein
//! mutations (`p.V600E`, `p.Arg117His`) and SNP identifiers (`rs1042522`)
//! with gene names and filler text. Documents come with character-offset
//! annotations and go through the regular tokenizer alignment, so the same
//! generator also produces fixtures for the offset-annotation reader.

use crate::corpus::{align_corpus, AlignmentReport, AnnotatedSentence, DatasetSplit, EntityType, OffsetSpan};
use crate::error::{Error, Result};
use crate::rng::DetRng;
use crate::tokenizer::TokenizerConfig;

const TEMPLATES: &[&str] = &[
    "The {DNA} mutation in {GENE} was detected in {NUM} patients.",
    "We identified {PROT} in the {GENE} kinase domain.",
    "Carriers of {SNP} showed reduced {GENE} expression.",
    "A novel {DNA} substitution resulting in {PROT} was found.",
    "The {GENE} variant {SNP} is associated with risk in {NUM} cases.",
    "Sequencing revealed {DNA} and {DNA} in exon {NUM} of {GENE}.",
    "Patients with {PROT} ({SNP}) responded to therapy.",
    "No association was observed between {SNP} and {GENE} levels.",
    "Functional assays of {PROT} confirmed loss of {GENE} activity.",
    "The frameshift {DNA} was absent in {NUM} controls.",
    "Both {SNP} and {PROT} were genotyped in the {GENE} cohort.",
    "Expression of {GENE} was measured in {NUM} tissue samples.",
];

const GENES: &[&str] = &["BRAF", "TP53", "BRCA1", "CFTR", "EGFR", "KRAS", "MTHFR", "APOE", "IL-2", "PTEN", "MLH1", "HFE"];
const BASES: &[char] = &['A', 'C', 'G', 'T'];
const AA1: &[char] = &['A', 'R', 'N', 'D', 'C', 'Q', 'E', 'G', 'H', 'I', 'L', 'K', 'M', 'F', 'P', 'S', 'T', 'W', 'Y', 'V'];
const AA3: &[&str] = &[
    "Ala", "Arg", "Asn", "Asp", "Cys", "Gln", "Glu", "Gly", "His", "Ile", "Leu", "Lys", "Met", "Phe", "Pro", "Ser", "Thr",
    "Trp", "Tyr", "Val",
];

fn pick<'a, T>(rng: &mut DetRng, xs: &'a [T]) -> &'a T {
    &xs[rng.below(xs.len())]
}

fn digits(rng: &mut DetRng) -> usize {
    let width = 1 + rng.below(4);
    let lo = 10usize.pow(width as u32 - 1);
    lo + rng.below(9 * lo)
}

fn dna(rng: &mut DetRng) -> String {
    let pos = digits(rng);
    match rng.below(3) {
        0 => {
            let a = *pick(rng, BASES);
            let b = *pick(rng, BASES);
            format!("c.{pos}{a}>{b}")
        }
        1 => format!("c.{pos}_{}del", pos + 1 + rng.below(5)),
        _ => format!("c.{pos}dup{}", pick(rng, BASES)),
    }
}

fn protein(rng: &mut DetRng) -> String {
    let pos = digits(rng);
    if rng.below(2) == 0 {
        format!("p.{}{pos}{}", pick(rng, AA1), pick(rng, AA1))
    } else {
        format!("p.{}{pos}{}", pick(rng, AA3), pick(rng, AA3))
    }
}

fn snp(rng: &mut DetRng) -> String {
    format!("rs{}", 1000 + rng.below(9_999_000))
}

/// One document built from a random template, with its mention offsets.
pub fn generate_document(doc_id: &str, rng: &mut DetRng) -> (String, Vec<OffsetSpan>) {
    let template = *pick(rng, TEMPLATES);
    let mut text = String::new();
    let mut spans = Vec::new();
    let mut rest = template;
    while let Some(open) = rest.find('{') {
        text.push_str(&rest[..open]);
        let close = open + rest[open..].find('}').expect("templates are well formed");
        let slot = &rest[open + 1..close];
        let (surface, entity_type) = match slot {
            "DNA" => (dna(rng), Some(EntityType::DNAMutation)),
            "PROT" => (protein(rng), Some(EntityType::ProteinMutation)),
            "SNP" => (snp(rng), Some(EntityType::SNP)),
            "GENE" => (pick(rng, GENES).to_string(), None),
            _ => ((2 + rng.below(98)).to_string(), None),
        };
        let start = text.chars().count();
        text.push_str(&surface);
        if let Some(entity_type) = entity_type {
            spans.push(OffsetSpan {
                doc_id: doc_id.to_string(),
                char_start: start,
                char_end: start + surface.chars().count(),
                entity_type,
                surface,
            });
        }
        rest = &rest[close + 1..];
    }
    text.push_str(rest);
    (text, spans)
}

/// `count` documents with ids `{prefix}-0000`, `{prefix}-0001`, ...
pub fn generate_documents(prefix: &str, count: usize, rng: &mut DetRng) -> (Vec<(String, String)>, Vec<OffsetSpan>) {
    let mut docs = Vec::with_capacity(count);
    let mut spans = Vec::new();
    for i in 0..count {
        let id = format!("{prefix}-{i:04}");
        let (text, s) = generate_document(&id, rng);
        docs.push((id, text));
        spans.extend(s);
    }
    (docs, spans)
}

/// Aligned synthetic sentences; every generated mention must align.
pub fn generate_sentences(prefix: &str, count: usize, rng: &mut DetRng) -> Result<Vec<AnnotatedSentence>> {
    let (docs, spans) = generate_documents(prefix, count, rng);
    let (sentences, report): (_, AlignmentReport) = align_corpus(&docs, &spans, &TokenizerConfig::default());
    if report.misaligned_count() > 0 {
        return Err(Error::invalid(format!("synthetic generator misaligned:\n{}", report.render())));
    }
    Ok(sentences)
}

/// Train and test sets drawn from independent streams; validation is empty.
pub fn synthetic_split(train: usize, test: usize, seed: u64) -> Result<DatasetSplit> {
    let root = DetRng::new(seed).split_named("synthetic");
    Ok(DatasetSplit {
        train: generate_sentences("syn-train", train, &mut root.split_named("train"))?,
        validation: Vec::new(),
        test: generate_sentences("syn-test", test, &mut root.split_named("test"))?,
    })
}
