//! Acoustic and language models behind a stepwise log-probability interface.

mod acoustic;
mod gru;
mod lm;
mod ngram;
mod params;
mod rnnlm;

pub use acoustic::{AcousticModel, AmDims, BiGru, DecoderState, EncoderStates};
pub use gru::Gru;
pub use lm::{BoundLm, LanguageModel, LmState};
pub use ngram::{check_sequence, NGramLm};
pub use params::{init_uniform, stream_rng, stream_seed, Parameterized};
pub use rnnlm::RecurrentLm;

/// End-of-sentence token id. It is a regular output symbol.
pub const EOS: usize = 0;

/// Decoder input symbol: BOS exists only as an input.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Input {
    Bos,
    Token(usize),
}
