//! Embedding lookup, dense and dropout layers, the multi-width convolutional
//! sentence encoder, bidirectional GRU/LSTM, and a linear-chain CRF.

mod basic;
mod conv;
mod crf;
mod init;
mod rnn;

pub use basic::{dense, dropout, embed_lookup, Activation, DenseParams, Mode};
pub use conv::{conv_encoder, ConvEncoderParams, CONV_WIDTHS};
pub use crf::{crf_nll, crf_viterbi, CrfParams, CrfView};
pub use init::Init;
pub use rnn::{birnn, rnn, CellKind, RnnParams};
