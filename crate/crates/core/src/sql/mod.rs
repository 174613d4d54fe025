//! SQL subset used by the benchmarks: parsing with name binding, a canonical
//! printer, gold-label extraction, exact-match components and difficulty.

mod analysis;
mod ast;
mod lexer;
mod parser;
mod render;

pub use analysis::{
    canonical_components, classify_difficulty, classify_difficulty_with, is_valid_sql,
    referenced_schema, ComponentSets, Difficulty, GoldLabels, DEFAULT_EXTRA_TRIGGERS,
};
pub use ast::*;
pub use parser::parse;
pub use render::render;
