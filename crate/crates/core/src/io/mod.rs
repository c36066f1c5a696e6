//! Model files, random initialization, the byte-level tokenizer and
//! calibration corpora.

mod corpus;
mod format;
mod init;
mod tokenizer;

pub use corpus::{load_calibration, parse_calibration};
pub use format::{
    fingerprint, load_model, read_model, save_model, write_model, ModelHeader, TensorEntry,
    FORMAT_VERSION, MAGIC,
};
pub use init::init_random_model;
pub use tokenizer::{ByteTokenizer, BOS, EOS};
