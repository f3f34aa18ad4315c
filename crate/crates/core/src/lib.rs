//! ToolCoder: tool-augmented code generation with an API search tool.
//!
//! * [`grammar`] parses, renders and strips `<API>APISearch(query)->answer</API>` markup.
//! * [`search`] holds the offline BM25 documentation index and the online web search tool.
//! * [`decode`] runs a token generator with tool interception.
//! * [`annotate`] builds tool-augmented training data from plain code.
//! * [`peft`] is the LoRA arithmetic used during fine-tuning.
//! * [`eval`] executes candidates against benchmark tests and reports pass@k.
//!
//! Numeric code is generic over [`Scalar`] (`f32` or `f64`); the aliases
//! below name the common instantiations.

pub mod annotate;
pub mod decode;
pub mod eval;
pub mod grammar;
pub mod peft;
pub mod scalar;
pub mod search;

pub use scalar::Scalar;

pub type DocIndexF64 = search::DocIndex<f64>;
pub type DocIndexF32 = search::DocIndex<f32>;
pub type DocSearchToolF64 = search::DocSearchTool<f64>;
pub type MatrixF64 = peft::Matrix<f64>;
pub type MatrixF32 = peft::Matrix<f32>;
pub type LoraAdapterF64 = peft::LoraAdapter<f64>;
pub type LoraAdapterF32 = peft::LoraAdapter<f32>;
