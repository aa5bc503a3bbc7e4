//! Chunking, the training loop and the inference drivers.

mod chunk;
mod infer;
mod train;

pub use chunk::{chunk_document, subsample_mentions, Chunk};
pub use infer::{
    annotate_corpus, disambiguate, link, InferenceOptions, LinkedDocument, LinkedMention, Mode,
};
pub use train::{build_vocab, dangling_references, StepLog, Trainer};
