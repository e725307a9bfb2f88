//! Exact-match entity scoring.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::corpus::{bio_to_spans, EntitySpan, EntityType, Tag};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Counts {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

impl Counts {
    pub fn precision(&self) -> f64 {
        ratio(self.tp, self.tp + self.fp)
    }

    pub fn recall(&self) -> f64 {
        ratio(self.tp, self.tp + self.fn_)
    }

    pub fn f1(&self) -> f64 {
        let (p, r) = (self.precision(), self.recall());
        if p + r == 0.0 {
            0.0
        } else {
            2.0 * p * r / (p + r)
        }
    }

    fn is_empty(&self) -> bool {
        self.tp + self.fp + self.fn_ == 0
    }

    fn add(&mut self, o: &Counts) {
        self.tp += o.tp;
        self.fp += o.fp;
        self.fn_ += o.fn_;
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TypeScores {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl From<Counts> for TypeScores {
    fn from(c: Counts) -> Self {
        TypeScores {
            tp: c.tp,
            fp: c.fp,
            fn_: c.fn_,
            precision: c.precision(),
            recall: c.recall(),
            f1: c.f1(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub per_type: BTreeMap<EntityType, TypeScores>,
    /// Mean F1 over the types that occur in gold or predictions.
    pub macro_f1: f64,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub micro: TypeScores,
    pub sentences: usize,
}

impl EvalReport {
    fn from_counts(counts: &BTreeMap<EntityType, Counts>, sentences: usize) -> Self {
        let per_type: BTreeMap<EntityType, TypeScores> =
            EntityType::ALL.iter().map(|t| (*t, counts[t].into())).collect();
        let present: Vec<&Counts> = EntityType::ALL
            .iter()
            .map(|t| &counts[t])
            .filter(|c| !c.is_empty())
            .collect();
        let mean = |f: fn(&Counts) -> f64| {
            if present.is_empty() {
                1.0
            } else {
                present.iter().map(|c| f(c)).sum::<f64>() / present.len() as f64
            }
        };
        let mut micro = Counts::default();
        counts.values().for_each(|c| micro.add(c));
        EvalReport {
            macro_f1: mean(Counts::f1),
            macro_precision: mean(Counts::precision),
            macro_recall: mean(Counts::recall),
            micro: micro.into(),
            per_type,
            sentences,
        }
    }

    pub fn counts(&self, ty: EntityType) -> (usize, usize, usize) {
        let s = &self.per_type[&ty];
        (s.tp, s.fp, s.fn_)
    }

    /// One row per entity type, then the macro and micro rows.
    pub fn render_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{:<16} {:>6} {:>6} {:>6} {:>9} {:>9} {:>9}", "type", "tp", "fp", "fn", "precision", "recall", "f1");
        for (ty, s) in &self.per_type {
            let _ = writeln!(
                out,
                "{:<16} {:>6} {:>6} {:>6} {:>9.4} {:>9.4} {:>9.4}",
                ty.name(),
                s.tp,
                s.fp,
                s.fn_,
                s.precision,
                s.recall,
                s.f1
            );
        }
        let _ = writeln!(
            out,
            "{:<16} {:>6} {:>6} {:>6} {:>9.4} {:>9.4} {:>9.4}",
            "macro", "", "", "", self.macro_precision, self.macro_recall, self.macro_f1
        );
        let m = &self.micro;
        let _ = writeln!(
            out,
            "{:<16} {:>6} {:>6} {:>6} {:>9.4} {:>9.4} {:>9.4}",
            "micro", m.tp, m.fp, m.fn_, m.precision, m.recall, m.f1
        );
        out
    }
}

/// A predicted span counts only when a gold span in the same sentence has the
/// same boundaries and type. Each gold span absorbs at most one prediction.
pub fn exact_match_score(gold: &[Vec<EntitySpan>], predicted: &[Vec<EntitySpan>]) -> Result<EvalReport> {
    if gold.len() != predicted.len() {
        return Err(Error::invalid(format!(
            "gold has {} sentences but predictions have {}",
            gold.len(),
            predicted.len()
        )));
    }
    let mut counts: BTreeMap<EntityType, Counts> =
        EntityType::ALL.iter().map(|t| (*t, Counts::default())).collect();
    for (g, p) in gold.iter().zip(predicted) {
        let mut used = vec![false; g.len()];
        for span in p {
            let hit = g
                .iter()
                .enumerate()
                .find(|(i, gs)| !used[*i] && *gs == span)
                .map(|(i, _)| i);
            let c = counts.get_mut(&span.entity_type).expect("all types present");
            match hit {
                Some(i) => {
                    used[i] = true;
                    c.tp += 1;
                }
                None => c.fp += 1,
            }
        }
        for (gs, u) in g.iter().zip(&used) {
            if !u {
                counts.get_mut(&gs.entity_type).expect("all types present").fn_ += 1;
            }
        }
    }
    Ok(EvalReport::from_counts(&counts, gold.len()))
}

pub fn score_tag_output(gold: &[Vec<Tag>], predicted: &[Vec<Tag>]) -> Result<EvalReport> {
    if gold.len() != predicted.len() {
        return Err(Error::invalid(format!(
            "gold has {} sentences but predictions have {}",
            gold.len(),
            predicted.len()
        )));
    }
    let mut gs = Vec::with_capacity(gold.len());
    let mut ps = Vec::with_capacity(gold.len());
    for (i, (g, p)) in gold.iter().zip(predicted).enumerate() {
        if g.len() != p.len() {
            return Err(Error::invalid(format!(
                "sentence {i}: gold has {} tags but prediction has {}",
                g.len(),
                p.len()
            )));
        }
        gs.push(bio_to_spans(g));
        ps.push(bio_to_spans(p));
    }
    exact_match_score(&gs, &ps)
}
