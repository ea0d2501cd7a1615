//! Chat-completion boundary: prompt templates, decoding profiles, transports
//! and the [`Gateway`].

pub mod decoding;
pub mod gateway;
pub mod template;
pub mod transport;

pub use decoding::{DecodingProfile, ProfileError, MAX_NEW_TOKENS_CAP};
pub use gateway::{
    BinaryDecision, DecisionMethod, Gateway, GatewayConfig, GatewayError, GatewayStats, GenerationMode, MulticlassAnswer,
    PickOutcome, Summary,
};
pub use template::{render_prompt, Bindings, TemplateError, TemplateId};
pub use transport::{
    ChatReply, ChatRequest, ChatTransport, HttpConfig, HttpTransport, MockEntry, MockTransport, ScriptedReply,
    TokenLogprob, TransportError,
};
