use serde::{Deserialize, Serialize};

use crate::corpus::{AnnotatedSentence, Tag};
use crate::crf;
use crate::error::Result;
use crate::network::Model;
use crate::numerics::Tensor;
use crate::rng::DetRng;

/// A mini-batch of sentence indices with tags padded to the longest member.
/// Padding positions carry tag `O` and a `false` mask.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Batch {
    pub indices: Vec<usize>,
    pub max_len: usize,
    pub tags: Vec<Vec<usize>>,
    pub mask: Vec<Vec<bool>>,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn valid_len(&self, member: usize) -> usize {
        self.mask[member].iter().filter(|&&m| m).count()
    }
}

/// Shuffles sentence order under `rng` and cuts consecutive batches; the last
/// batch may be short.
pub fn make_batches(sentences: &[AnnotatedSentence], batch_size: usize, rng: &mut DetRng) -> Vec<Batch> {
    let batch_size = batch_size.max(1);
    let mut order: Vec<usize> = (0..sentences.len()).collect();
    rng.shuffle(&mut order);
    order
        .chunks(batch_size)
        .map(|idx| {
            let max_len = idx.iter().map(|&i| sentences[i].len()).max().unwrap_or(0);
            let mut tags = Vec::with_capacity(idx.len());
            let mut mask = Vec::with_capacity(idx.len());
            for &i in idx {
                let s = &sentences[i];
                let mut t: Vec<usize> = s.tags.iter().map(|t| t.index()).collect();
                t.resize(max_len, Tag::O.index());
                let mut m = vec![true; s.len()];
                m.resize(max_len, false);
                tags.push(t);
                mask.push(m);
            }
            Batch {
                indices: idx.to_vec(),
                max_len,
                tags,
                mask,
            }
        })
        .collect()
}

/// Splits sentences longer than `max_len` tokens. Each cut lands on the last
/// position at or before `max_len` that does not begin with an `I-` tag, so
/// entities stay whole where possible. Returns the pieces and the number of
/// sentences that were cut.
pub fn split_long_sentences(sentences: &[AnnotatedSentence], max_len: usize) -> (Vec<AnnotatedSentence>, usize) {
    let mut out = Vec::with_capacity(sentences.len());
    let mut cut = 0;
    for s in sentences {
        if s.len() <= max_len {
            out.push(s.clone());
            continue;
        }
        cut += 1;
        let mut start = 0;
        while start < s.len() {
            let mut end = (start + max_len).min(s.len());
            if end < s.len() {
                let mut k = end;
                while k > start + 1 && s.tags[k].is_inside() {
                    k -= 1;
                }
                if k > start {
                    end = k;
                }
            }
            let mut tags = s.tags[start..end].to_vec();
            // a piece that opens inside an entity keeps BIO validity
            if let Some(first) = tags.first_mut() {
                if first.is_inside() {
                    *first = Tag::begin(first.entity_type().expect("inside tags are typed"));
                }
            }
            out.push(AnnotatedSentence {
                doc_id: s.doc_id.clone(),
                tokens: s.tokens[start..end].to_vec(),
                tags,
            });
            start = end;
        }
    }
    (out, cut)
}

/// Mean CRF loss of a batch computed on padded emission matrices with the
/// batch mask (inference-mode network).
pub fn padded_batch_loss(model: &Model, sentences: &[AnnotatedSentence], batch: &Batch) -> Result<f64> {
    let k = crate::corpus::NUM_TAGS;
    let mut total = 0.0;
    for (member, &i) in batch.indices.iter().enumerate() {
        let words: Vec<&str> = sentences[i].tokens.iter().map(|t| t.text.as_str()).collect();
        let u = model.emissions(&words)?;
        let mut padded = u.into_data();
        padded.resize(batch.max_len * k, 0.0);
        let padded = Tensor::matrix(batch.max_len, k, padded)?;
        total += crf::masked_nll(model.transitions(), &padded, &batch.tags[member], &batch.mask[member])?;
    }
    Ok(total / batch.len() as f64)
}
