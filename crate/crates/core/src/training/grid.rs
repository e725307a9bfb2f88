//! Hyperparameter grid: deterministic enumeration, seeded subsampling and
//! parallel trial execution.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::{OptimizerKind, TrainReport};
use crate::config::{EmbeddingConfig, RunConfig};
use crate::error::{Error, Result};
use crate::network::CharEncoderKind;
use crate::par::{map_ordered, with_jobs, Execution};
use crate::rng::DetRng;

/// One list of candidate values per hyperparameter. Trials are the cartesian
/// product, enumerated with the first axis varying slowest.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridSpec {
    pub char_encoder: Vec<CharEncoderKind>,
    pub max_char_length: Vec<usize>,
    /// `0` selects the raw one-hot character input.
    pub char_emb_size: Vec<usize>,
    pub char_dropout: Vec<f64>,
    pub cnn_filters: Vec<usize>,
    pub cnn_window: Vec<usize>,
    pub char_lstm_states: Vec<usize>,
    pub word_lstm_states: Vec<usize>,
    pub word_lstm_dropout: Vec<f64>,
    pub units: Vec<usize>,
    pub hidden_states: Vec<usize>,
    pub hidden_dropout: Vec<f64>,
    pub batch_size: Vec<usize>,
    pub optimizer: Vec<OptimizerKind>,
    pub word_embeddings: Vec<EmbeddingConfig>,
}

impl Default for GridSpec {
    fn default() -> Self {
        let random = |dim| EmbeddingConfig {
            path: None,
            dim,
            random_fallback: false,
        };
        GridSpec {
            char_encoder: vec![CharEncoderKind::Cnn, CharEncoderKind::Bilstm],
            max_char_length: vec![15, 30, 50],
            char_emb_size: vec![25, 50, 100],
            char_dropout: vec![0.0, 0.25, 0.5],
            cnn_filters: vec![30, 50, 70],
            cnn_window: vec![3, 5, 7],
            char_lstm_states: vec![25, 50, 100],
            word_lstm_states: vec![50, 100, 200],
            word_lstm_dropout: vec![0.0, 0.25, 0.5],
            units: vec![1, 2],
            hidden_states: vec![50, 100, 200],
            hidden_dropout: vec![0.0, 0.25, 0.5],
            batch_size: vec![32, 64, 128],
            optimizer: vec![OptimizerKind::Sgd, OptimizerKind::Rmsprop, OptimizerKind::Adam],
            word_embeddings: vec![random(50), random(100)],
        }
    }
}

impl GridSpec {
    /// A grid holding exactly the values of `base`.
    pub fn singleton(base: &RunConfig) -> Self {
        let m = &base.model;
        GridSpec {
            char_encoder: vec![m.char_encoder],
            max_char_length: vec![m.max_char_length],
            char_emb_size: vec![m.char_emb_size.unwrap_or(0)],
            char_dropout: vec![m.char_dropout],
            cnn_filters: vec![m.cnn_filters],
            cnn_window: vec![m.cnn_window],
            char_lstm_states: vec![m.char_lstm_states],
            word_lstm_states: vec![m.word_lstm_states],
            word_lstm_dropout: vec![m.word_lstm_dropout],
            units: vec![m.units],
            hidden_states: vec![m.hidden_states],
            hidden_dropout: vec![m.hidden_dropout],
            batch_size: vec![base.train.batch_size],
            optimizer: vec![base.optimizer.kind],
            word_embeddings: vec![base.embeddings.clone()],
        }
    }

    fn axis_sizes(&self) -> [(&'static str, usize); 15] {
        [
            ("char_encoder", self.char_encoder.len()),
            ("max_char_length", self.max_char_length.len()),
            ("char_emb_size", self.char_emb_size.len()),
            ("char_dropout", self.char_dropout.len()),
            ("cnn_filters", self.cnn_filters.len()),
            ("cnn_window", self.cnn_window.len()),
            ("char_lstm_states", self.char_lstm_states.len()),
            ("word_lstm_states", self.word_lstm_states.len()),
            ("word_lstm_dropout", self.word_lstm_dropout.len()),
            ("units", self.units.len()),
            ("hidden_states", self.hidden_states.len()),
            ("hidden_dropout", self.hidden_dropout.len()),
            ("batch_size", self.batch_size.len()),
            ("optimizer", self.optimizer.len()),
            ("word_embeddings", self.word_embeddings.len()),
        ]
    }

    pub fn validate(&self) -> Result<()> {
        for (name, n) in self.axis_sizes() {
            if n == 0 {
                return Err(Error::Config(format!("grid.{name}: axis is empty")));
            }
        }
        let positive: [(&str, &[usize]); 8] = [
            ("max_char_length", &self.max_char_length),
            ("cnn_filters", &self.cnn_filters),
            ("cnn_window", &self.cnn_window),
            ("char_lstm_states", &self.char_lstm_states),
            ("word_lstm_states", &self.word_lstm_states),
            ("units", &self.units),
            ("hidden_states", &self.hidden_states),
            ("batch_size", &self.batch_size),
        ];
        for (name, values) in positive {
            if let Some(v) = values.iter().find(|&&v| v == 0) {
                return Err(Error::Config(format!("grid.{name}: invalid value {v}, must be positive")));
            }
        }
        for (name, values) in [
            ("char_dropout", &self.char_dropout),
            ("word_lstm_dropout", &self.word_lstm_dropout),
            ("hidden_dropout", &self.hidden_dropout),
        ] {
            if let Some(v) = values.iter().find(|v| !(0.0..1.0).contains(*v)) {
                return Err(Error::Config(format!("grid.{name}: invalid value {v}, must be in [0, 1)")));
            }
        }
        if let Some(e) = self.word_embeddings.iter().find(|e| e.dim == 0) {
            return Err(Error::Config(format!("grid.word_embeddings: invalid dim {}", e.dim)));
        }
        if self.char_encoder.contains(&CharEncoderKind::Cnn) {
            let shortest = self.max_char_length.iter().min().copied().unwrap_or(0);
            if let Some(w) = self.cnn_window.iter().find(|&&w| w > shortest) {
                return Err(Error::Config(format!(
                    "grid.cnn_window: invalid value {w}, exceeds max_char_length {shortest}"
                )));
            }
        }
        Ok(())
    }

    /// Number of points in the full product, saturating at `u64::MAX`.
    pub fn size(&self) -> u64 {
        self.axis_sizes()
            .iter()
            .fold(1u64, |acc, &(_, n)| acc.saturating_mul(n as u64))
    }

    /// Per-axis value positions of trial `index` (first axis most significant).
    pub fn coordinates(&self, index: u64) -> Result<[usize; 15]> {
        if index >= self.size() {
            return Err(Error::invalid(format!("grid index {index} out of range {}", self.size())));
        }
        let sizes = self.axis_sizes();
        let mut coords = [0; 15];
        let mut rest = index;
        for (slot, &(_, n)) in coords.iter_mut().zip(sizes.iter()).rev() {
            *slot = (rest % n as u64) as usize;
            rest /= n as u64;
        }
        Ok(coords)
    }

    /// The configuration of trial `index`, starting from `base`.
    pub fn trial(&self, base: &RunConfig, index: u64) -> Result<RunConfig> {
        let c = self.coordinates(index)?;
        let mut cfg = base.clone();
        let m = &mut cfg.model;
        m.char_encoder = self.char_encoder[c[0]];
        m.max_char_length = self.max_char_length[c[1]];
        m.char_emb_size = Some(self.char_emb_size[c[2]]).filter(|&e| e > 0);
        m.char_dropout = self.char_dropout[c[3]];
        m.cnn_filters = self.cnn_filters[c[4]];
        m.cnn_window = self.cnn_window[c[5]];
        m.char_lstm_states = self.char_lstm_states[c[6]];
        m.word_lstm_states = self.word_lstm_states[c[7]];
        m.word_lstm_dropout = self.word_lstm_dropout[c[8]];
        m.units = self.units[c[9]];
        m.hidden_states = self.hidden_states[c[10]];
        m.hidden_dropout = self.hidden_dropout[c[11]];
        cfg.train.batch_size = self.batch_size[c[12]];
        cfg.optimizer.kind = self.optimizer[c[13]];
        cfg.embeddings = self.word_embeddings[c[14]].clone();
        cfg.grid = None;
        Ok(cfg)
    }

    /// Trial indices to run: everything when `budget` covers the grid,
    /// otherwise `budget` distinct indices drawn under `seed`, ascending.
    pub fn select(&self, budget: usize, seed: u64) -> Result<Vec<u64>> {
        if budget == 0 {
            return Err(Error::Config("grid budget must be at least 1".into()));
        }
        let total = self.size();
        let budget = budget as u64;
        if budget >= total {
            return Ok((0..total).collect());
        }
        // Floyd's algorithm: exactly `budget` distinct draws.
        let mut rng = DetRng::new(seed).split_named("grid");
        let mut chosen = BTreeSet::new();
        for j in (total - budget)..total {
            let t = below_u64(&mut rng, j + 1);
            if !chosen.insert(t) {
                chosen.insert(j);
            }
        }
        Ok(chosen.into_iter().collect())
    }
}

fn below_u64(rng: &mut DetRng, n: u64) -> u64 {
    use rand::RngCore;
    // Rejection sampling keeps the draw unbiased.
    let zone = u64::MAX - u64::MAX % n;
    loop {
        let x = rng.next_u64();
        if x < zone {
            return x % n;
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialOutcome {
    pub index: u64,
    pub config: RunConfig,
    pub report: TrainReport,
}

impl TrialOutcome {
    /// Ranking key; diverged or never-evaluated trials sort last.
    pub fn score(&self) -> f64 {
        match self.report.best_validation_f1 {
            Some(f) if !self.report.diverged() => f,
            _ => f64::NEG_INFINITY,
        }
    }
}

/// Sort by validation F1, best first. Equal scores keep enumeration order.
pub fn rank(outcomes: &mut [TrialOutcome]) {
    outcomes.sort_by_key(|o| o.index);
    outcomes.sort_by(|a, b| b.score().total_cmp(&a.score()));
}

/// Runs the selected trials (up to `jobs` at once; 0 lets the pool decide)
/// and returns them ranked.
pub fn grid_search<F>(grid: &GridSpec, base: &RunConfig, budget: usize, jobs: usize, run: F) -> Result<Vec<TrialOutcome>>
where
    F: Fn(u64, &RunConfig) -> Result<TrainReport> + Sync + Send,
{
    grid.validate()?;
    let indices = grid.select(budget, base.train.seed)?;
    let configs = indices
        .iter()
        .map(|&i| grid.trial(base, i).map(|c| (i, c)))
        .collect::<Result<Vec<_>>>()?;
    for (_, c) in &configs {
        c.validate()?;
    }
    let results = with_jobs(jobs, || {
        map_ordered(Execution::Parallel, &configs, |_, (i, c)| run(*i, c))
    });
    let mut outcomes = Vec::with_capacity(results.len());
    for ((index, config), report) in configs.into_iter().zip(results) {
        outcomes.push(TrialOutcome {
            index,
            config,
            report: report?,
        });
    }
    rank(&mut outcomes);
    Ok(outcomes)
}
