use std::collections::HashMap;

use super::char_repr::{char_repr_bilstm, char_repr_cnn, CharCnnParams};
use super::init::glorot_uniform;
use super::lstm::BiLstmParams;
use super::{activate, CharEncoderKind, ModelConfig};
use crate::corpus::{Tag, NUM_TAGS};
use crate::crf;
use crate::embeddings::{encode_chars, CharAlphabet, EmbeddingTable, ALPHABET_SIZE};
use crate::error::{Error, Result};
use crate::numerics::{dropout, Gradients, Graph, ParamId, ParamStore, Tensor, Var};
use crate::rng::DetRng;

/// Two stacked BiLSTM layers wrapped by an identity residual.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StackUnit {
    pub first: BiLstmParams,
    pub second: BiLstmParams,
    pub dim: usize,
}

impl StackUnit {
    pub fn register(store: &mut ParamStore, prefix: &str, dim: usize, rng: &mut DetRng) -> Result<Self> {
        if !dim.is_multiple_of(2) {
            return Err(Error::invalid(format!("unit width {dim} must be even")));
        }
        let state = dim / 2;
        Ok(StackUnit {
            first: BiLstmParams::register(store, &format!("{prefix}.bilstm1"), dim, state, rng)?,
            second: BiLstmParams::register(store, &format!("{prefix}.bilstm2"), dim, state, rng)?,
            dim,
        })
    }

    pub fn param_ids(&self) -> Vec<ParamId> {
        self.first.all_ids().chain(self.second.all_ids()).collect()
    }
}

/// `y_t = F(x)_t + x_t` where `F` is both BiLSTM layers, with dropout after
/// each layer when training.
pub fn residual_unit(
    g: &mut Graph<'_>,
    unit: &StackUnit,
    xs: &[Var],
    config: &ModelConfig,
    training: bool,
    rng: &mut DetRng,
) -> Result<Vec<Var>> {
    for &x in xs {
        let s = g.value(x).shape();
        if s != [unit.dim] {
            return Err(Error::Shape {
                op: "residual_unit",
                lhs: s.to_vec(),
                rhs: vec![unit.dim],
            });
        }
    }
    let cand = config.candidate_activation;
    let rate = config.word_lstm_dropout;
    let h1 = super::bilstm(g, &unit.first.fwd, &unit.first.bwd, xs, cand)?;
    let h1 = h1
        .into_iter()
        .map(|h| dropout(g, h, rate, training, rng))
        .collect::<Result<Vec<_>>>()?;
    let h2 = super::bilstm(g, &unit.second.fwd, &unit.second.bwd, &h1, cand)?;
    h2.into_iter()
        .zip(xs)
        .map(|(h, &x)| {
            let h = dropout(g, h, rate, training, rng)?;
            g.add(h, x)
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum CharEncoderParams {
    Cnn(CharCnnParams),
    Bilstm(BiLstmParams),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ModelParams {
    pub word_embeddings: ParamId,
    pub word_unk: ParamId,
    pub char_projection: Option<ParamId>,
    pub char_encoder: CharEncoderParams,
    pub input_w: ParamId,
    pub input_b: ParamId,
    pub units: Vec<StackUnit>,
    pub dense_w: ParamId,
    pub dense_b: ParamId,
    pub output_w: ParamId,
    pub output_b: ParamId,
    pub transitions: ParamId,
    pub start: Option<ParamId>,
    pub end: Option<ParamId>,
}

pub struct Model {
    pub config: ModelConfig,
    pub alphabet: CharAlphabet,
    pub params: ParamStore,
    pub ids: ModelParams,
    vocab: Vec<String>,
    vocab_index: HashMap<String, usize>,
    word_dim: usize,
}

impl Model {
    pub fn new(config: ModelConfig, embeddings: &EmbeddingTable, rng: &DetRng) -> Result<Self> {
        config.validate()?;
        let mut store = ParamStore::new();
        let rng = rng.split_named("init");
        let d = embeddings.dimension();
        let fine_tune = config.fine_tune_embeddings;

        let word_embeddings = store.add(
            "word_embeddings",
            Tensor::matrix(embeddings.len(), d, embeddings.vectors().to_vec())?,
            fine_tune,
        )?;
        let word_unk = store.add("word_unk", Tensor::vector(embeddings.unk_vector().to_vec()), fine_tune)?;

        let char_in = config.char_input_dim();
        let char_projection = match config.char_emb_size {
            Some(e) => Some(store.add(
                "char.projection",
                glorot_uniform(&[ALPHABET_SIZE, e], ALPHABET_SIZE, e, &mut rng.split_named("char.projection")),
                true,
            )?),
            None => None,
        };
        let char_encoder = match config.char_encoder {
            CharEncoderKind::Cnn => CharEncoderParams::Cnn(CharCnnParams::register(
                &mut store,
                "char.cnn",
                config.cnn_filters,
                config.cnn_window,
                char_in,
                &mut rng.clone(),
            )?),
            CharEncoderKind::Bilstm => CharEncoderParams::Bilstm(BiLstmParams::register(
                &mut store,
                "char.bilstm",
                char_in,
                config.char_lstm_states,
                &mut rng.clone(),
            )?),
        };

        let dim = config.unit_dim();
        let concat_dim = d + config.char_output_dim();
        let input_w = store.add(
            "input.W",
            glorot_uniform(&[dim, concat_dim], concat_dim, dim, &mut rng.split_named("input.W")),
            true,
        )?;
        let input_b = store.add("input.b", Tensor::zeros(&[dim]), true)?;
        let units = (0..config.units)
            .map(|i| StackUnit::register(&mut store, &format!("unit{i}"), dim, &mut rng.clone()))
            .collect::<Result<Vec<_>>>()?;
        let hs = config.hidden_states;
        let dense_w = store.add(
            "dense.W",
            glorot_uniform(&[hs, dim], dim, hs, &mut rng.split_named("dense.W")),
            true,
        )?;
        let dense_b = store.add("dense.b", Tensor::zeros(&[hs]), true)?;
        let output_w = store.add(
            "output.W",
            glorot_uniform(&[NUM_TAGS, hs], hs, NUM_TAGS, &mut rng.split_named("output.W")),
            true,
        )?;
        let output_b = store.add("output.b", Tensor::zeros(&[NUM_TAGS]), true)?;
        let transitions = store.add("crf.transitions", Tensor::zeros(&[NUM_TAGS, NUM_TAGS]), true)?;
        let (start, end) = if config.crf_boundary_transitions {
            (
                Some(store.add("crf.start", Tensor::zeros(&[NUM_TAGS]), true)?),
                Some(store.add("crf.end", Tensor::zeros(&[NUM_TAGS]), true)?),
            )
        } else {
            (None, None)
        };

        let vocab = embeddings.words().to_vec();
        let vocab_index = index_words(&vocab);
        Ok(Model {
            config,
            alphabet: CharAlphabet::default(),
            params: store,
            ids: ModelParams {
                word_embeddings,
                word_unk,
                char_projection,
                char_encoder,
                input_w,
                input_b,
                units,
                dense_w,
                dense_b,
                output_w,
                output_b,
                transitions,
                start,
                end,
            },
            vocab,
            vocab_index,
            word_dim: d,
        })
    }

    pub fn vocabulary(&self) -> &[String] {
        &self.vocab
    }

    pub fn word_dim(&self) -> usize {
        self.word_dim
    }

    /// Row of the word table for `word`: exact, then lowercase; `None` is UNK.
    pub fn word_index(&self, word: &str) -> Option<usize> {
        self.vocab_index
            .get(word)
            .or_else(|| self.vocab_index.get(&word.to_lowercase()))
            .copied()
    }

    fn word_vector(&self, g: &mut Graph<'_>, word: &str) -> Result<Var> {
        let idx = self.word_index(word);
        if self.config.fine_tune_embeddings {
            match idx {
                Some(i) => {
                    let table = g.param(self.ids.word_embeddings);
                    g.row(table, i)
                }
                None => Ok(g.param(self.ids.word_unk)),
            }
        } else {
            let v = match idx {
                Some(i) => self.params.value(self.ids.word_embeddings).row(i).to_vec(),
                None => self.params.value(self.ids.word_unk).data().to_vec(),
            };
            Ok(g.input(Tensor::vector(v)))
        }
    }

    fn char_vector(&self, g: &mut Graph<'_>, word: &str) -> Result<Var> {
        let enc = encode_chars(word, &self.alphabet, self.config.max_char_length)?;
        match &self.ids.char_encoder {
            CharEncoderParams::Cnn(p) => char_repr_cnn(g, &enc, p, self.ids.char_projection),
            CharEncoderParams::Bilstm(p) => {
                char_repr_bilstm(g, &enc, p, self.ids.char_projection, self.config.candidate_activation)
            }
        }
    }

    /// Word+char features projected to the unit width, one per token.
    pub fn unit_inputs<S: AsRef<str>>(&self, g: &mut Graph<'_>, words: &[S], training: bool, rng: &mut DetRng) -> Result<Vec<Var>> {
        let w_in = g.param(self.ids.input_w);
        let b_in = g.param(self.ids.input_b);
        let mut xs = Vec::with_capacity(words.len());
        for w in words {
            let w = w.as_ref();
            let wv = self.word_vector(g, w)?;
            let cv = self.char_vector(g, w)?;
            let cv = dropout(g, cv, self.config.char_dropout, training, rng)?;
            let feat = g.concat(&[wv, cv])?;
            let proj = g.matmul(w_in, feat)?;
            xs.push(g.add(proj, b_in)?);
        }
        Ok(xs)
    }

    /// Emission scores `(N, 6)` for one sentence.
    pub fn forward<S: AsRef<str>>(&self, g: &mut Graph<'_>, words: &[S], training: bool, rng: &mut DetRng) -> Result<Var> {
        let n = words.len();
        if n == 0 {
            return Err(Error::invalid("cannot run the network on an empty sentence"));
        }
        if n > self.config.max_word_length {
            return Err(Error::invalid(format!(
                "sentence has {n} tokens, more than max_word_length {}",
                self.config.max_word_length
            )));
        }
        let mut xs = self.unit_inputs(g, words, training, rng)?;
        for unit in &self.ids.units {
            xs = residual_unit(g, unit, &xs, &self.config, training, rng)?;
        }
        let dw = g.param(self.ids.dense_w);
        let db = g.param(self.ids.dense_b);
        let ow = g.param(self.ids.output_w);
        let ob = g.param(self.ids.output_b);
        let mut rows = Vec::with_capacity(n);
        for (t, x) in xs.into_iter().enumerate() {
            let h = g.matmul(dw, x)?;
            let h = g.add(h, db)?;
            let h = activate(g, h, self.config.hidden_activation);
            let h = dropout(g, h, self.config.hidden_dropout, training, rng)?;
            let o = g.matmul(ow, h)?;
            let mut o = g.add(o, ob)?;
            if t == 0 {
                if let Some(s) = self.ids.start {
                    let s = g.param(s);
                    o = g.add(o, s)?;
                }
            }
            if t + 1 == n {
                if let Some(e) = self.ids.end {
                    let e = g.param(e);
                    o = g.add(o, e)?;
                }
            }
            rows.push(o);
        }
        g.stack_rows(&rows)
    }

    /// CRF loss node for one gold-tagged sentence.
    pub fn loss<S: AsRef<str>>(&self, g: &mut Graph<'_>, words: &[S], gold: &[Tag], training: bool, rng: &mut DetRng) -> Result<Var> {
        let emissions = self.forward(g, words, training, rng)?;
        let trans = g.param(self.ids.transitions);
        let gold: Vec<usize> = gold.iter().map(|t| t.index()).collect();
        g.crf_nll(emissions, trans, &gold)
    }

    pub fn loss_and_grads<S: AsRef<str>>(&self, words: &[S], gold: &[Tag], training: bool, rng: &mut DetRng) -> Result<(f64, Gradients)> {
        let mut g = Graph::new(&self.params);
        let loss = self.loss(&mut g, words, gold, training, rng)?;
        let value = g.value(loss).item();
        let grads = g.backward(loss)?;
        Ok((value, grads))
    }

    pub fn emissions<S: AsRef<str>>(&self, words: &[S]) -> Result<Tensor> {
        let mut g = Graph::new(&self.params);
        let mut rng = DetRng::new(0);
        let e = self.forward(&mut g, words, false, &mut rng)?;
        Ok(g.value(e).clone())
    }

    pub fn transitions(&self) -> &Tensor {
        self.params.value(self.ids.transitions)
    }

    /// Viterbi tags for one sentence (inference mode).
    pub fn predict<S: AsRef<str>>(&self, words: &[S]) -> Result<Vec<Tag>> {
        let u = self.emissions(words)?;
        let path = crf::viterbi(self.transitions(), &u)?;
        Ok(path
            .into_iter()
            .map(|i| Tag::from_index(i).expect("viterbi index < NUM_TAGS"))
            .collect())
    }
}

fn index_words(words: &[String]) -> HashMap<String, usize> {
    let mut m = HashMap::with_capacity(words.len());
    for (i, w) in words.iter().enumerate() {
        m.entry(w.clone()).or_insert(i);
    }
    m
}
