//! Prompt construction, narrative generation and text embedding.

mod client;
mod embed;
mod profiles;
mod prompt;
mod raw;

pub use client::{
    chat_request_body, fallback_narrative, first_choice_text, ChatClientConfig,
    ChatCompletionClient, LlmClient, MockClient,
};
pub use embed::{
    embed, fnv1a64, hash_embed, parse_embedding_response, tokenize, EmbedderKind, EmbedderSpec,
    Embedding,
};
pub use profiles::{
    enhance_profiles, read_profiles, write_profiles, EnhanceOptions, EnhanceStats,
    EnhancedProfile, ProfileCache, MAX_NARRATIVE_CHARS,
};
pub use prompt::{
    build_prompt, content_hash, parse_record_pairs, render, render_records, PromptBundle, DEMANDS,
    TASK,
};
pub use raw::{raw_feature_matrix, RawFeatures};
