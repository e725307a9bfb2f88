//! Finite-difference cases for every differentiable building block.

use deepvar::corpus::Tag;
use deepvar::embeddings::EmbeddingTable;
use deepvar::network::{lstm_cell, residual_unit, Activation, LstmParams, LstmState, Model, ModelConfig, StackUnit};
use deepvar::numerics::{dropout, ParamStore};
use deepvar::rng::DetRng;

use super::{finite_difference_check, normal_tensor, weighted_sum, FdReport};

pub const EPS: f64 = 1e-4;

fn store_with(shapes: &[(&str, &[usize])], seed: u64) -> ParamStore {
    let mut rng = DetRng::new(seed);
    let mut store = ParamStore::new();
    for (name, shape) in shapes {
        store.add(*name, normal_tensor(&mut rng, shape), true).unwrap();
    }
    store
}

type Case = (&'static str, FdReport);

pub fn primitive_cases() -> Vec<Case> {
    let mut out = Vec::new();

    let s = store_with(&[("a", &[3, 4]), ("x", &[4])], 1);
    let (a, x) = (s.id("a").unwrap(), s.id("x").unwrap());
    out.push((
        "matmul (matrix, vector)",
        finite_difference_check(&s, EPS, |g| {
            let (a, x) = (g.param(a), g.param(x));
            let y = g.matmul(a, x).unwrap();
            weighted_sum(g, y, 10)
        }),
    ));

    let s = store_with(&[("a", &[3, 4]), ("b", &[4, 2])], 2);
    let (a, b) = (s.id("a").unwrap(), s.id("b").unwrap());
    out.push((
        "matmul (matrix, matrix)",
        finite_difference_check(&s, EPS, |g| {
            let (a, b) = (g.param(a), g.param(b));
            let y = g.matmul(a, b).unwrap();
            weighted_sum(g, y, 11)
        }),
    ));

    let s = store_with(&[("a", &[5]), ("b", &[5])], 3);
    let (a, b) = (s.id("a").unwrap(), s.id("b").unwrap());
    out.push((
        "add",
        finite_difference_check(&s, EPS, |g| {
            let (a, b) = (g.param(a), g.param(b));
            let y = g.add(a, b).unwrap();
            let y = g.mul(y, y).unwrap();
            weighted_sum(g, y, 12)
        }),
    ));
    out.push((
        "elementwise mul",
        finite_difference_check(&s, EPS, |g| {
            let (a, b) = (g.param(a), g.param(b));
            let y = g.mul(a, b).unwrap();
            weighted_sum(g, y, 13)
        }),
    ));
    out.push((
        "mul by constant (dropout mask)",
        finite_difference_check(&s, EPS, |g| {
            let a = g.param(a);
            let mut rng = DetRng::new(99);
            let y = dropout(g, a, 0.4, true, &mut rng).unwrap();
            let y = g.mul(y, y).unwrap();
            weighted_sum(g, y, 14)
        }),
    ));
    out.push((
        "scale",
        finite_difference_check(&s, EPS, |g| {
            let a = g.param(a);
            let y = g.scale(a, -1.7);
            let y = g.mul(y, y).unwrap();
            weighted_sum(g, y, 15)
        }),
    ));
    out.push((
        "sigmoid",
        finite_difference_check(&s, EPS, |g| {
            let a = g.param(a);
            let y = g.sigmoid(a);
            weighted_sum(g, y, 16)
        }),
    ));
    out.push((
        "tanh",
        finite_difference_check(&s, EPS, |g| {
            let a = g.param(a);
            let y = g.tanh(a);
            weighted_sum(g, y, 17)
        }),
    ));
    out.push((
        "concat",
        finite_difference_check(&s, EPS, |g| {
            let (a, b) = (g.param(a), g.param(b));
            let y = g.concat(&[a, b, a]).unwrap();
            let y = g.tanh(y);
            weighted_sum(g, y, 18)
        }),
    ));
    out.push((
        "stack_rows and row",
        finite_difference_check(&s, EPS, |g| {
            let (a, b) = (g.param(a), g.param(b));
            let m = g.stack_rows(&[a, b, a]).unwrap();
            let m = g.tanh(m);
            let r = g.row(m, 2).unwrap();
            let r = g.mul(r, r).unwrap();
            let m = weighted_sum(g, m, 19);
            let r = weighted_sum(g, r, 20);
            g.add(m, r).unwrap()
        }),
    ));
    out.push((
        "log_sum_exp",
        finite_difference_check(&s, EPS, |g| {
            let (a, b) = (g.param(a), g.param(b));
            let y = g.mul(a, b).unwrap();
            g.log_sum_exp(y).unwrap()
        }),
    ));
    out.push((
        "sum",
        finite_difference_check(&s, EPS, |g| {
            let a = g.param(a);
            let y = g.mul(a, a).unwrap();
            g.sum(y)
        }),
    ));

    let s = store_with(&[("x", &[7, 4]), ("k", &[3, 3, 4]), ("b", &[3])], 4);
    let (x, k, b) = (s.id("x").unwrap(), s.id("k").unwrap(), s.id("b").unwrap());
    out.push((
        "conv1d_same",
        finite_difference_check(&s, EPS, |g| {
            let (x, k, b) = (g.param(x), g.param(k), g.param(b));
            let y = g.conv1d_same(x, k, b).unwrap();
            weighted_sum(g, y, 21)
        }),
    ));
    out.push((
        "max_pool_over_time",
        finite_difference_check(&s, EPS, |g| {
            let (x, k, b) = (g.param(x), g.param(k), g.param(b));
            let y = g.conv1d_same(x, k, b).unwrap();
            let y = g.max_pool_over_time(y).unwrap();
            weighted_sum(g, y, 22)
        }),
    ));

    let s = store_with(&[("u", &[5, 6]), ("t", &[6, 6])], 5);
    let (u, t) = (s.id("u").unwrap(), s.id("t").unwrap());
    out.push((
        "crf_nll",
        finite_difference_check(&s, EPS, |g| {
            let (u, t) = (g.param(u), g.param(t));
            g.crf_nll(u, t, &[0, 3, 4, 4, 5]).unwrap()
        }),
    ));
    out
}

pub fn lstm_cell_cases() -> Vec<Case> {
    [(Activation::Tanh, "lstm_cell (tanh candidate)"), (Activation::Sigmoid, "lstm_cell (sigmoid candidate)")]
        .into_iter()
        .map(|(cand, name)| {
            let mut store = ParamStore::new();
            let mut rng = DetRng::new(30);
            let p = LstmParams::register(&mut store, "cell", 4, 3, &mut rng).unwrap();
            let x = store.add("x", normal_tensor(&mut rng, &[4]), true).unwrap();
            let h0 = store.add("h0", normal_tensor(&mut rng, &[3]), true).unwrap();
            let c0 = store.add("c0", normal_tensor(&mut rng, &[3]), true).unwrap();
            let report = finite_difference_check(&store, EPS, |g| {
                let prev = LstmState {
                    h: g.param(h0),
                    c: g.param(c0),
                };
                let x = g.param(x);
                let s1 = lstm_cell(g, &p, x, prev, cand).unwrap();
                let s2 = lstm_cell(g, &p, x, s1, cand).unwrap();
                let h = weighted_sum(g, s2.h, 31);
                let c = weighted_sum(g, s2.c, 32);
                g.add(h, c).unwrap()
            });
            (name, report)
        })
        .collect()
}

pub fn residual_unit_cases() -> Vec<Case> {
    [(false, "residual_unit (inference)"), (true, "residual_unit (dropout active)")]
        .into_iter()
        .map(|(training, name)| {
            let config = ModelConfig {
                word_lstm_states: 2,
                word_lstm_dropout: 0.3,
                ..ModelConfig::default()
            };
            let mut store = ParamStore::new();
            let mut rng = DetRng::new(40);
            let unit = StackUnit::register(&mut store, "unit", config.unit_dim(), &mut rng).unwrap();
            let xs: Vec<_> = (0..3)
                .map(|i| store.add(format!("x{i}"), normal_tensor(&mut rng, &[4]), true).unwrap())
                .collect();
            let report = finite_difference_check(&store, EPS, |g| {
                let inputs: Vec<_> = xs.iter().map(|&x| g.param(x)).collect();
                let mut r = DetRng::new(41);
                let ys = residual_unit(g, &unit, &inputs, &config, training, &mut r).unwrap();
                let m = g.stack_rows(&ys).unwrap();
                weighted_sum(g, m, 42)
            });
            (name, report)
        })
        .collect()
}

fn tiny_model(config: ModelConfig) -> Model {
    let words = ["The", "c.35delG", "rs334"];
    let vocab = words.iter().map(|w| w.to_string()).collect();
    let table = EmbeddingTable::random(&vocab, 3, &mut DetRng::new(50)).unwrap();
    Model::new(config, &table, &DetRng::new(51)).unwrap()
}

pub fn end_to_end_cases() -> Vec<Case> {
    let base = ModelConfig {
        max_char_length: 6,
        char_emb_size: Some(3),
        char_dropout: 0.0,
        cnn_filters: 3,
        cnn_window: 3,
        char_lstm_states: 2,
        word_lstm_states: 2,
        word_lstm_dropout: 0.0,
        units: 2,
        hidden_states: 3,
        hidden_dropout: 0.0,
        fine_tune_embeddings: true,
        ..ModelConfig::default()
    };
    let cases = [
        ("end-to-end nll (CNN chars)", base.clone()),
        (
            "end-to-end nll (BiLSTM chars, boundary scores, one-hot)",
            ModelConfig {
                char_encoder: deepvar::network::CharEncoderKind::Bilstm,
                char_emb_size: None,
                crf_boundary_transitions: true,
                units: 1,
                ..base.clone()
            },
        ),
    ];
    let words = ["The", "c.35delG", "RS334"];
    let gold = [Tag::O, Tag::BDna, Tag::BSnp];
    cases
        .into_iter()
        .map(|(name, config)| {
            let mut model = tiny_model(config);
            // Zero-initialized parameters make several gradients exactly
            // symmetric; perturb them so the check sees a generic point.
            let mut rng = DetRng::new(52);
            for p in model.params.iter_mut() {
                for v in p.value.data_mut() {
                    *v += 0.1 * rng.normal();
                }
            }
            let store = model.params.clone();
            let report = finite_difference_check(&store, EPS, |g| {
                let mut r = DetRng::new(53);
                model.loss(g, &words, &gold, false, &mut r).unwrap()
            });
            (name, report)
        })
        .collect()
}

pub fn all_cases() -> Vec<Case> {
    let mut v = primitive_cases();
    v.extend(lstm_cell_cases());
    v.extend(residual_unit_cases());
    v.extend(end_to_end_cases());
    v
}
