//! BiLSTM-CRF network: character encoders, residual stacked BiLSTM units, a
//! dense hidden layer and the tag projection feeding the CRF.

mod char_repr;
pub mod checkpoint;
mod init;
mod lstm;
mod model;

pub use char_repr::{char_repr_bilstm, char_repr_cnn, CharCnnParams};
pub use init::{glorot_uniform, orthogonal};
pub use lstm::{bilstm, lstm_cell, run_lstm, BiLstmParams, LstmParams, LstmState};
pub use model::{residual_unit, Model, StackUnit};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CharEncoderKind {
    Cnn,
    Bilstm,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Tanh,
    Sigmoid,
    Identity,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub char_encoder: CharEncoderKind,
    /// Characters kept per token (`l`).
    pub max_char_length: usize,
    /// Learned projection of the one-hot characters; `None` feeds the 70-wide
    /// one-hot rows straight into the encoder.
    pub char_emb_size: Option<usize>,
    pub char_dropout: f64,
    pub cnn_filters: usize,
    pub cnn_window: usize,
    pub char_lstm_states: usize,
    pub word_lstm_states: usize,
    pub word_lstm_dropout: f64,
    /// Number of residual units `n`.
    pub units: usize,
    pub hidden_states: usize,
    pub hidden_dropout: f64,
    pub hidden_activation: Activation,
    /// Activation of the LSTM candidate cell: `tanh` or `sigmoid`.
    pub candidate_activation: Activation,
    pub max_word_length: usize,
    /// Adds learned start/end scores to the first/last emission rows.
    pub crf_boundary_transitions: bool,
    pub fine_tune_embeddings: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            char_encoder: CharEncoderKind::Cnn,
            max_char_length: 30,
            char_emb_size: None,
            char_dropout: 0.25,
            cnn_filters: 30,
            cnn_window: 3,
            char_lstm_states: 25,
            word_lstm_states: 100,
            word_lstm_dropout: 0.25,
            units: 2,
            hidden_states: 100,
            hidden_dropout: 0.25,
            hidden_activation: Activation::Tanh,
            candidate_activation: Activation::Tanh,
            max_word_length: 115,
            crf_boundary_transitions: false,
            fine_tune_embeddings: false,
        }
    }
}

impl ModelConfig {
    /// Width `D` of every residual unit: both BiLSTM directions together.
    pub fn unit_dim(&self) -> usize {
        2 * self.word_lstm_states
    }

    pub fn char_input_dim(&self) -> usize {
        self.char_emb_size.unwrap_or(crate::embeddings::ALPHABET_SIZE)
    }

    pub fn char_output_dim(&self) -> usize {
        match self.char_encoder {
            CharEncoderKind::Cnn => self.cnn_filters,
            CharEncoderKind::Bilstm => 2 * self.char_lstm_states,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("max_char_length", self.max_char_length),
            ("cnn_filters", self.cnn_filters),
            ("cnn_window", self.cnn_window),
            ("char_lstm_states", self.char_lstm_states),
            ("word_lstm_states", self.word_lstm_states),
            ("units", self.units),
            ("hidden_states", self.hidden_states),
            ("max_word_length", self.max_word_length),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::Config(format!("model.{name} must be positive")));
            }
        }
        if self.char_emb_size == Some(0) {
            return Err(Error::Config("model.char_emb_size must be positive".into()));
        }
        for (name, v) in [
            ("char_dropout", self.char_dropout),
            ("word_lstm_dropout", self.word_lstm_dropout),
            ("hidden_dropout", self.hidden_dropout),
        ] {
            if !(0.0..1.0).contains(&v) {
                return Err(Error::Config(format!("model.{name} must be in [0, 1), got {v}")));
            }
        }
        if self.char_encoder == CharEncoderKind::Cnn && self.cnn_window > self.max_char_length {
            return Err(Error::Config(format!(
                "model.cnn_window {} exceeds max_char_length {}",
                self.cnn_window, self.max_char_length
            )));
        }
        if self.candidate_activation == Activation::Identity {
            return Err(Error::Config("model.candidate_activation must be tanh or sigmoid".into()));
        }
        Ok(())
    }
}

pub(crate) fn activate(g: &mut crate::numerics::Graph<'_>, x: crate::numerics::Var, act: Activation) -> crate::numerics::Var {
    match act {
        Activation::Tanh => g.tanh(x),
        Activation::Sigmoid => g.sigmoid(x),
        Activation::Identity => x,
    }
}
