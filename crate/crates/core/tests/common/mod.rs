//! Independent oracles shared by the integration and acceptance tests.
//!
//! Nothing here calls the library routine it is used to check: CRF
//! quantities come from enumerating every path, gradients from central
//! differences over raw parameter buffers, and the tokenizer and scoring
//! expectations are written out by hand.

#![allow(dead_code)]

pub mod grad_cases;

use deepvar::config::RunConfig;
use deepvar::corpus::Tag;
use deepvar::numerics::{Graph, ParamStore, Tensor, Var};
use deepvar::rng::DetRng;

pub const K: usize = 6;

/// Score of one path, summed directly from the definition.
pub fn brute_path_score(trans: &[f64], emis: &[f64], k: usize, path: &[usize]) -> f64 {
    let mut s = 0.0;
    for (t, &z) in path.iter().enumerate() {
        s += emis[t * k + z];
    }
    for w in path.windows(2) {
        s += trans[w[0] * k + w[1]];
    }
    s
}

/// Every path of length `n` over `k` tags, in lexicographic order.
pub fn all_paths(n: usize, k: usize) -> Vec<Vec<usize>> {
    let total = k.pow(n as u32);
    (0..total)
        .map(|mut code| {
            let mut p = vec![0; n];
            for slot in p.iter_mut().rev() {
                *slot = code % k;
                code /= k;
            }
            p
        })
        .collect()
}

/// `(log Z, argmax path)` by enumeration. Among equal maxima the
/// lexicographically smallest path wins.
pub fn brute_force_crf(trans: &[f64], emis: &[f64], n: usize, k: usize) -> (f64, Vec<usize>) {
    let paths = all_paths(n, k);
    let scores: Vec<f64> = paths.iter().map(|p| brute_path_score(trans, emis, k, p)).collect();
    let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let log_z = max + scores.iter().map(|s| (s - max).exp()).sum::<f64>().ln();
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate() {
        if s > scores[best] {
            best = i;
        }
    }
    (log_z, paths[best].clone())
}

pub fn normal_matrix(rng: &mut DetRng, rows: usize, cols: usize) -> Tensor {
    Tensor::matrix(rows, cols, (0..rows * cols).map(|_| rng.normal()).collect()).unwrap()
}

pub fn normal_tensor(rng: &mut DetRng, shape: &[usize]) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| rng.normal()).collect()).unwrap()
}

/// `Σ w ⊙ v` with fixed pseudo-random weights, so that every output
/// coordinate contributes a distinct amount to the scalar loss.
pub fn weighted_sum(g: &mut Graph<'_>, v: Var, seed: u64) -> Var {
    let shape = g.value(v).shape().to_vec();
    let w = normal_tensor(&mut DetRng::new(seed), &shape);
    let w = g.input(w);
    let p = g.mul(v, w).unwrap();
    g.sum(p)
}

#[derive(Debug, Clone)]
pub struct FdReport {
    pub checked: usize,
    pub max_rel: f64,
    pub worst: String,
}

/// Relative error with the same floor as the library (see the README).
pub fn rel_err(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(1e-3)
}

/// Central differences over every trainable coordinate of `store`,
/// compared with the reverse-mode gradient.
pub fn finite_difference_check<F>(store: &ParamStore, eps: f64, build: F) -> FdReport
where
    F: Fn(&mut Graph<'_>) -> Var,
{
    let analytic = {
        let mut g = Graph::new(store);
        let loss = build(&mut g);
        g.backward(loss).expect("scalar loss")
    };
    let eval = |s: &ParamStore| {
        let mut g = Graph::new(s);
        let loss = build(&mut g);
        g.value(loss).item()
    };
    let mut work = store.clone();
    let mut report = FdReport {
        checked: 0,
        max_rel: 0.0,
        worst: String::new(),
    };
    let ids: Vec<_> = store.iter().filter(|(_, p)| p.trainable).map(|(id, _)| id).collect();
    for id in ids {
        for k in 0..store.value(id).len() {
            let orig = store.value(id).data()[k];
            work.value_mut(id).data_mut()[k] = orig + eps;
            let plus = eval(&work);
            work.value_mut(id).data_mut()[k] = orig - eps;
            let minus = eval(&work);
            work.value_mut(id).data_mut()[k] = orig;
            let numeric = (plus - minus) / (2.0 * eps);
            let a = analytic.get(id).map_or(0.0, |t| t.data()[k]);
            let e = rel_err(a, numeric);
            report.checked += 1;
            if e > report.max_rel {
                report.max_rel = e;
                report.worst = format!("{}[{k}]: analytic {a:.10e} numeric {numeric:.10e}", store.get(id).name);
            }
        }
    }
    report
}

pub type GoldenCase = (&'static str, Vec<(&'static str, usize, usize)>);

/// Hand-traced tokenizer cases: input and `(text, start, end)` per token.
pub fn tokenizer_golden() -> Vec<GoldenCase> {
    vec![
        ("(IL-2)", vec![("(", 0, 1), ("IL-2", 1, 5), (")", 5, 6)]),
        ("hello world", vec![("hello", 0, 5), ("world", 6, 11)]),
        ("in ND3.", vec![("in", 0, 2), ("ND3", 3, 6), (".", 6, 7)]),
        ("c.399_402del", vec![("c.399", 0, 5), ("402del", 6, 12)]),
        ("p.V600E,", vec![("p.V600E", 0, 7), (",", 7, 8)]),
        ("rs1042522;", vec![("rs1042522", 0, 9)]),
        ("(p.R273H).", vec![("(", 0, 1), ("p.R273H", 1, 8), (")", 8, 9), (".", 9, 10)]),
        ("1138G>A", vec![("1138G>A", 0, 7)]),
        ("A/G", vec![("A", 0, 1), ("G", 2, 3)]),
        ("del:", vec![("del", 0, 3), (":", 3, 4)]),
        ("end.).'", vec![("end.)", 0, 5), (".", 5, 6), ("'", 6, 7)]),
        ("((a))", vec![("(", 0, 1), ("(a)", 1, 4), (")", 4, 5)]),
        ("[BRCA1]", vec![("[", 0, 1), ("BRCA1", 1, 6), ("]", 6, 7)]),
        ("{x}", vec![("x", 1, 2)]),
        ("a  b\tc\nd", vec![("a", 0, 1), ("b", 3, 4), ("c", 5, 6), ("d", 7, 8)]),
        ("\"quoted\"", vec![("quoted", 1, 7)]),
        ("x=1&y=2", vec![("x", 0, 1), ("1", 2, 3), ("y", 4, 5), ("2", 6, 7)]),
        ("β-catenin", vec![("β-catenin", 0, 9)]),
        ("Δ508.", vec![("Δ508", 0, 4), (".", 4, 5)]),
        ("()", vec![("()", 0, 2)]),
        ("a...", vec![("a", 0, 1), (".", 1, 2), (".", 2, 3), (".", 3, 4)]),
        ("(a", vec![("(a", 0, 2)]),
        ("IVS2+1G>A", vec![("IVS2+1G>A", 0, 9)]),
        ("c.[76A>C;83G>C]", vec![("c.[76A>C", 0, 8), ("83G>C]", 9, 15)]),
        ("p.(Arg117His) ~50%", vec![("p.(Arg117His)", 0, 13), ("50%", 15, 18)]),
    ]
}

/// Tags in a compact notation: `O`, `D`/`d` = B-/I-DNAMutation,
/// `P`/`p` = B-/I-ProteinMutation, `S` = B-SNP.
pub fn tags(code: &str) -> Vec<Tag> {
    code.chars()
        .map(|c| match c {
            'O' => Tag::O,
            'D' => Tag::BDna,
            'd' => Tag::IDna,
            'P' => Tag::BProtein,
            'p' => Tag::IProtein,
            'S' => Tag::BSnp,
            other => panic!("bad tag code {other}"),
        })
        .collect()
}

pub struct EvalFixture {
    pub name: &'static str,
    pub gold: Vec<&'static str>,
    pub predicted: Vec<&'static str>,
    /// `(tp, fp, fn)` for DNAMutation, ProteinMutation, SNP.
    pub expected: [(usize, usize, usize); 3],
}

pub fn eval_fixtures() -> Vec<EvalFixture> {
    let f = |name, gold: &[&'static str], predicted: &[&'static str], expected| EvalFixture {
        name,
        gold: gold.to_vec(),
        predicted: predicted.to_vec(),
        expected,
    };
    vec![
        f("identical", &["DdOPS"], &["DdOPS"], [(1, 0, 0), (1, 0, 0), (1, 0, 0)]),
        f("all-O prediction", &["DdOPS"], &["OOOOO"], [(0, 0, 1), (0, 0, 1), (0, 0, 1)]),
        f("right boundary short", &["DdO"], &["DOO"], [(0, 1, 1), (0, 0, 0), (0, 0, 0)]),
        f("left boundary shifted", &["ODd"], &["DdO"], [(0, 1, 1), (0, 0, 0), (0, 0, 0)]),
        f("type error", &["Pp"], &["Dd"], [(0, 1, 0), (0, 0, 1), (0, 0, 0)]),
        f("orphan I in gold", &["OdO"], &["ODO"], [(1, 0, 0), (0, 0, 0), (0, 0, 0)]),
        f("I of another type", &["Dp"], &["Dd"], [(0, 1, 1), (0, 0, 1), (0, 0, 0)]),
        f("adjacent SNPs", &["SS"], &["SO"], [(0, 0, 0), (0, 0, 0), (1, 0, 1)]),
        f("orphan I after O", &["DdOd"], &["DdOO"], [(1, 0, 1), (0, 0, 0), (0, 0, 0)]),
        f("spurious SNP", &["OOO"], &["OSO"], [(0, 0, 0), (0, 0, 0), (0, 1, 0)]),
        f("entity split in two", &["Ddd"], &["DdD"], [(0, 2, 1), (0, 0, 0), (0, 0, 0)]),
        f("entities merged", &["DdDd"], &["Dddd"], [(0, 1, 2), (0, 0, 0), (0, 0, 0)]),
        f("two sentences", &["DO", "OS"], &["DO", "SO"], [(1, 0, 0), (0, 0, 0), (0, 1, 1)]),
        f("single O token", &["O"], &["O"], [(0, 0, 0), (0, 0, 0), (0, 0, 0)]),
        f("long protein", &["OPppO"], &["OPppO"], [(0, 0, 0), (1, 0, 0), (0, 0, 0)]),
        f("orphan I opens prediction", &["OPpO"], &["OppO"], [(0, 0, 0), (1, 0, 0), (0, 0, 0)]),
        f("type switch inside", &["Dd"], &["Dp"], [(0, 1, 1), (0, 1, 0), (0, 0, 0)]),
        f("missed SNP", &["SOSOS"], &["SOSOO"], [(0, 0, 0), (0, 0, 0), (2, 0, 1)]),
        f("all-O both sides", &["OOOO"], &["OOOO"], [(0, 0, 0), (0, 0, 0), (0, 0, 0)]),
        f(
            "three sentences mixed",
            &["PpOS", "DdO", "OOO"],
            &["PpOS", "DOO", "OSO"],
            [(0, 1, 1), (1, 0, 0), (1, 1, 0)],
        ),
    ]
}

/// Small model and optimizer settings that overfit the synthetic corpus.
pub fn overfit_config() -> RunConfig {
    RunConfig::from_toml(
        r#"
[model]
char_encoder = "cnn"
max_char_length = 15
cnn_filters = 30
cnn_window = 3
char_dropout = 0.0
word_lstm_states = 25
word_lstm_dropout = 0.0
units = 1
hidden_states = 50
hidden_dropout = 0.0

[embeddings]
dim = 25

[train]
batch_size = 8
max_epochs = 300
patience = 30
target_validation_f1 = 1.0
seed = 7

[optimizer]
kind = "ADAM"
learning_rate = 0.01
decay = 0.0
"#,
    )
    .expect("valid overfit config")
}

/// Writes the synthetic split as BIO files plus a small config that trains
/// quickly on them. Returns the config path.
pub fn write_synthetic_fixture(dir: &std::path::Path, train: usize, test: usize, max_epochs: usize) -> std::path::PathBuf {
    use deepvar::corpus::save_bio_file;
    let split = deepvar::synthetic::synthetic_split(train, test, 5).unwrap();
    save_bio_file(&dir.join("train.bio"), &split.train).unwrap();
    save_bio_file(&dir.join("test.bio"), &split.test).unwrap();
    let config = format!(
        r#"
[data]
train = "train.bio"
test = "test.bio"
holdout_fraction = 0.25

[embeddings]
dim = 8

[model]
max_char_length = 8
cnn_filters = 6
word_lstm_states = 4
units = 1
hidden_states = 6

[train]
batch_size = 4
max_epochs = {max_epochs}
seed = 3

[optimizer]
learning_rate = 0.01
"#
    );
    let path = dir.join("run.toml");
    std::fs::write(&path, config).unwrap();
    path
}
