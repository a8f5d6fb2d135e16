//! Next-action planning for surgical workflow video.
//!
//! Per-frame action annotations are grouped into clips and turned into
//! planning samples; each sample becomes a memory state, a rendered prompt,
//! a chat-completion request and finally a parsed, ranked plan that is scored
//! with top-k sample-level, video-level and relaxed accuracy.

pub mod config;
pub mod dataset;
pub mod domain;
pub mod fsutil;
pub mod gateway;
pub mod memory;
pub mod metrics;
pub mod parser;
pub mod pipeline;
pub mod prompts;
pub mod sft;
pub mod synthetic;
