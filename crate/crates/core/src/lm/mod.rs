//! Word-level LSTM language model: vocabulary, forward recurrence, next-word
//! distributions, surprisal and training.

mod model;
mod train;
mod vocab;

pub use model::{
    lstm_step, next_word_distribution, softmax, surprisal, LayerParams, LmState, LstmDims, LstmParams, PROB_FLOOR,
};
pub use train::{
    heldout_split, init_params, loss_and_gradient, mean_loss, perplexity, train, EpochStats, TrainingConfig,
    TrainingReport, INIT_SCALE,
};
pub use vocab::{build_vocab, tokenize, Vocabulary, BOS_ID, EOS_ID, RESERVED, UNK_ID};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LmError {
    #[error("training corpus is empty")]
    EmptyCorpus,
    #[error("invalid configuration: {0}")]
    InvalidConfig(&'static str),
    #[error("invalid vocabulary: {0}")]
    InvalidVocabulary(alloc::string::String),
    #[error("token id {token} is outside the vocabulary of {vocab_size}")]
    TokenOutOfRange { token: usize, vocab_size: usize },
    #[error("target position {index} is outside a sentence of {len} tokens")]
    TargetOutOfRange { index: usize, len: usize },
    #[error("target word is out of vocabulary")]
    UnknownTarget,
    #[error("prefix must contain at least the begin-of-sentence token")]
    EmptyPrefix,
    #[error("non-finite activation; the weights are corrupted")]
    NonFinite,
    #[error("parameter count mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("training diverged at step {step} (learning rate {learning_rate}); lower the learning rate")]
    Diverged { step: usize, learning_rate: f64 },
}
