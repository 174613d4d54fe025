pub mod catalog;
pub mod context;
pub mod corpus;
pub mod dataset;
pub mod embedding;
pub mod error;
pub mod extraction;
pub mod llm;
pub mod metrics;
pub mod pipeline;
pub mod sese;
pub mod sql;
pub mod synthetic;
mod template;

pub use error::{Error, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/overview.md")]
    mod overview {}
    #[doc = include_str!("../../../book/src/catalogs.md")]
    mod catalogs {}
    #[doc = include_str!("../../../book/src/extractor.md")]
    mod extractor {}
    #[doc = include_str!("../../../book/src/extraction.md")]
    mod extraction {}
    #[doc = include_str!("../../../book/src/context.md")]
    mod context {}
    #[doc = include_str!("../../../book/src/corpus.md")]
    mod corpus {}
    #[doc = include_str!("../../../book/src/metrics.md")]
    mod metrics {}
    #[doc = include_str!("../../../book/src/annotation.md")]
    mod annotation {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
