//! Loading, validation and cleaning of the post corpus and its text embeddings.

mod corpus;
mod embeddings;

pub use corpus::{
    clean_text, load_corpus, normalize_hashtag, preprocess, write_corpus, Corpus, InputFormat,
    LoadOptions, LoadedCorpus, Post,
};
pub use embeddings::{
    fallback_embed, load_embeddings, token_bucket, tokenize, write_embeddings, EmbeddingTable,
    FallbackEmbedding,
};
