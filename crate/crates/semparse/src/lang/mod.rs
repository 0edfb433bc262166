//! The program language: expressions, interpreter, and reward metrics.

pub mod exec;
pub mod expr;
pub mod kb;
pub mod metrics;

pub use exec::{execute, Atom, Denotation};
pub use expr::{
    is_placeholder, parse_program, parse_program_str, structural_tokens, Comparator, Expr,
    SuperlativeKind, ValueExpr,
};
pub use kb::{format_number, KnowledgeBase, Value, ValueKind};
pub use metrics::{hard_match, soft_f1, string_match_reward};
