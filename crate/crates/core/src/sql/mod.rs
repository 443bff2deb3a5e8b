//! SQL front end: lexer, parser, canonical printer and the labeled-tree view
//! of the syntax tree.

pub mod ast;
mod error;
mod parser;
mod print;
mod token;
mod tree;

pub use ast::Query;
pub use error::{ParseError, ParseErrorClass};
pub use parser::parse;
pub use print::print_canonical;
pub(crate) use print::format_real;
pub use token::{is_keyword, tokenize, Token, TokenKind};
pub use tree::ast_as_tree;
pub(crate) use tree::literal_attr;
