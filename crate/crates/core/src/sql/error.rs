use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ParseErrorClass {
    Lex,
    Syntax,
}

#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize)]
#[error("{class:?} error at offset {position}: {message}")]
pub struct ParseError {
    pub class: ParseErrorClass,
    pub message: String,
    /// Byte offset of the offending character or token; equals the source
    /// length when input ended early.
    pub position: usize,
}
