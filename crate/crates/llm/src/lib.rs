//! Prompted chat-model baseline: templates, a chat-completion client with a
//! response cache, and a tolerant parser for `(s; p; o)` output.

pub mod cache;
pub mod client;
pub mod parse;
pub mod run;
pub mod template;

pub use cache::ResponseCache;
pub use client::{ChatClient, ChatClientConfig, ChatMessage, ClientError, HttpChatClient};
pub use parse::parse_llm_response;
pub use run::{run_baseline, BaselineOutput, BaselineStats};
pub use template::{build_prompt, LlmMode, PromptTemplate};

#[derive(Debug, thiserror::Error)]
pub enum LlmError {
    #[error("prompt needs {expected} exemplars but {found} are available")]
    ExemplarCountMismatch { expected: usize, found: usize },
    #[error(transparent)]
    Client(#[from] ClientError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
