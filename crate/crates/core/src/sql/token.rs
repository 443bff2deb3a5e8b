//! Lexer for the SQLite-flavored subset.
//!
//! Spans are byte offsets into the source. Comments are skipped like whitespace.

use serde::Serialize;

use super::error::{ParseError, ParseErrorClass};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum TokenKind {
    Keyword,
    Identifier,
    Number,
    Text,
    Operator,
    Punctuation,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Token {
    pub kind: TokenKind,
    pub lexeme: String,
    pub span: (usize, usize),
    pub index: usize,
}

impl Token {
    /// Uppercased keyword text, if this token is a keyword.
    pub fn keyword(&self) -> Option<String> {
        (self.kind == TokenKind::Keyword).then(|| self.lexeme.to_ascii_uppercase())
    }

    pub fn is_keyword(&self, kw: &str) -> bool {
        self.kind == TokenKind::Keyword && self.lexeme.eq_ignore_ascii_case(kw)
    }

    pub fn is_punct(&self, p: &str) -> bool {
        self.kind == TokenKind::Punctuation && self.lexeme == p
    }

    pub fn is_op(&self, op: &str) -> bool {
        self.kind == TokenKind::Operator && self.lexeme == op
    }
}

pub(crate) const KEYWORDS: &[&str] = &[
    "ALL", "AND", "AS", "ASC", "BETWEEN", "BY", "CASE", "CROSS", "DESC", "DISTINCT", "ELSE",
    "END", "EXCEPT", "EXISTS", "FALSE", "FROM", "FULL", "GROUP", "HAVING", "IN", "INNER",
    "INTERSECT", "IS", "JOIN", "LEFT", "LIKE", "LIMIT", "NOT", "NULL", "OFFSET", "ON", "OR",
    "ORDER", "OUTER", "OVER", "RIGHT", "SELECT", "THEN", "TRUE", "UNION", "USING", "WHEN",
    "WHERE", "WITH",
];

pub fn is_keyword(word: &str) -> bool {
    KEYWORDS.iter().any(|k| k.eq_ignore_ascii_case(word))
}

fn lex_error(message: impl Into<String>, position: usize) -> ParseError {
    ParseError { class: ParseErrorClass::Lex, message: message.into(), position }
}

/// Splits `source` into tokens.
pub fn tokenize(source: &str) -> Result<Vec<Token>, ParseError> {
    let bytes = source.as_bytes();
    let mut tokens = Vec::new();
    let mut pos = 0;

    while pos < bytes.len() {
        let c = bytes[pos];
        if c.is_ascii_whitespace() {
            pos += 1;
            continue;
        }
        if c == b'-' && bytes.get(pos + 1) == Some(&b'-') {
            while pos < bytes.len() && bytes[pos] != b'\n' {
                pos += 1;
            }
            continue;
        }
        if c == b'/' && bytes.get(pos + 1) == Some(&b'*') {
            match source[pos + 2..].find("*/") {
                Some(end) => pos = pos + 2 + end + 2,
                None => return Err(lex_error("unterminated block comment", pos)),
            }
            continue;
        }

        let start = pos;
        let kind = match c {
            b'\'' => {
                pos = scan_quoted(bytes, pos, b'\'')
                    .ok_or_else(|| lex_error("unterminated text literal", start))?;
                TokenKind::Text
            }
            b'"' | b'`' => {
                pos = scan_quoted(bytes, pos, c)
                    .ok_or_else(|| lex_error("unterminated quoted identifier", start))?;
                TokenKind::Identifier
            }
            b'[' => {
                let end = source[pos..]
                    .find(']')
                    .ok_or_else(|| lex_error("unterminated bracketed identifier", start))?;
                pos += end + 1;
                TokenKind::Identifier
            }
            b'0'..=b'9' => {
                pos = scan_number(bytes, pos);
                TokenKind::Number
            }
            b'.' if bytes.get(pos + 1).is_some_and(u8::is_ascii_digit) => {
                pos = scan_number(bytes, pos);
                TokenKind::Number
            }
            c if c == b'_' || c.is_ascii_alphabetic() => {
                while pos < bytes.len() && (bytes[pos] == b'_' || bytes[pos] == b'$' || bytes[pos].is_ascii_alphanumeric()) {
                    pos += 1;
                }
                if is_keyword(&source[start..pos]) {
                    TokenKind::Keyword
                } else {
                    TokenKind::Identifier
                }
            }
            b'(' | b')' | b',' | b';' | b'.' => {
                pos += 1;
                TokenKind::Punctuation
            }
            _ => {
                let next = bytes.get(pos + 1).copied();
                let len = match (c, next) {
                    (b'<', Some(b'=' | b'>')) | (b'>', Some(b'=')) | (b'!', Some(b'=')) | (b'=', Some(b'=')) | (b'|', Some(b'|')) => 2,
                    (b'<' | b'>' | b'=' | b'+' | b'-' | b'*' | b'/' | b'%', _) => 1,
                    _ => {
                        let ch = source[pos..].chars().next().unwrap_or('?');
                        return Err(lex_error(format!("illegal character {ch:?}"), start));
                    }
                };
                pos += len;
                TokenKind::Operator
            }
        };

        tokens.push(Token {
            kind,
            lexeme: source[start..pos].to_string(),
            span: (start, pos),
            index: tokens.len(),
        });
    }
    Ok(tokens)
}

/// Returns the offset just past the closing quote. A doubled quote is an escape.
fn scan_quoted(bytes: &[u8], start: usize, quote: u8) -> Option<usize> {
    let mut pos = start + 1;
    while pos < bytes.len() {
        if bytes[pos] == quote {
            if bytes.get(pos + 1) == Some(&quote) {
                pos += 2;
                continue;
            }
            return Some(pos + 1);
        }
        pos += 1;
    }
    None
}

fn scan_number(bytes: &[u8], start: usize) -> usize {
    let mut pos = start;
    while pos < bytes.len() && bytes[pos].is_ascii_digit() {
        pos += 1;
    }
    if pos < bytes.len() && bytes[pos] == b'.' {
        pos += 1;
        while pos < bytes.len() && bytes[pos].is_ascii_digit() {
            pos += 1;
        }
    }
    if pos < bytes.len() && (bytes[pos] == b'e' || bytes[pos] == b'E') {
        let mut look = pos + 1;
        if look < bytes.len() && (bytes[look] == b'+' || bytes[look] == b'-') {
            look += 1;
        }
        if look < bytes.len() && bytes[look].is_ascii_digit() {
            pos = look;
            while pos < bytes.len() && bytes[pos].is_ascii_digit() {
                pos += 1;
            }
        }
    }
    pos
}

#[cfg(test)]
mod tests {
    use super::*;

    fn kinds(src: &str) -> Vec<(TokenKind, String)> {
        tokenize(src).unwrap().into_iter().map(|t| (t.kind, t.lexeme)).collect()
    }

    #[test]
    fn minimal_statement() {
        assert_eq!(
            kinds("SELECT 1"),
            vec![(TokenKind::Keyword, "SELECT".into()), (TokenKind::Number, "1".into())]
        );
    }

    #[test]
    fn two_char_operators_are_single_tokens() {
        let toks = kinds("WHERE age >= 34");
        assert_eq!(toks[2], (TokenKind::Operator, ">=".into()));
        assert_eq!(toks.len(), 4);
        assert_eq!(kinds("a <> b")[1].1, "<>");
        assert_eq!(kinds("a != b")[1].1, "!=");
        assert_eq!(kinds("a || b")[1].1, "||");
    }

    #[test]
    fn unterminated_text_reports_offset() {
        let err = tokenize("SELECT 'unterminated").unwrap_err();
        assert_eq!(err.class, ParseErrorClass::Lex);
        assert_eq!(err.position, 7);
    }

    #[test]
    fn illegal_character() {
        let err = tokenize("SELECT a # b").unwrap_err();
        assert_eq!(err.position, 9);
    }

    #[test]
    fn keywords_case_insensitive() {
        let t = tokenize("select FrOm").unwrap();
        assert!(t.iter().all(|t| t.kind == TokenKind::Keyword));
        assert_eq!(t[1].keyword().unwrap(), "FROM");
    }

    #[test]
    fn quoted_forms() {
        let t = kinds(r#"SELECT "a b", [c], `d`, 'it''s' FROM t"#);
        assert_eq!(t[1], (TokenKind::Identifier, "\"a b\"".into()));
        assert_eq!(t[3], (TokenKind::Identifier, "[c]".into()));
        assert_eq!(t[5], (TokenKind::Identifier, "`d`".into()));
        assert_eq!(t[7], (TokenKind::Text, "'it''s'".into()));
    }

    #[test]
    fn numbers() {
        let t = kinds("1.5 .25 3e10 7");
        assert!(t.iter().all(|(k, _)| *k == TokenKind::Number));
        assert_eq!(t.len(), 4);
        // qualified column, not a number
        assert_eq!(kinds("t.x").len(), 3);
    }

    #[test]
    fn comments_skipped() {
        let t = kinds("SELECT -- hi\n 1 /* x */ FROM t");
        assert_eq!(t.len(), 4);
    }

    #[test]
    fn spans_match_lexemes() {
        let src = "SELECT  a,b FROM   t WHERE x >= 'q'";
        let toks = tokenize(src).unwrap();
        let mut last_end = 0;
        for (i, t) in toks.iter().enumerate() {
            assert_eq!(t.index, i);
            assert_eq!(&src[t.span.0..t.span.1], t.lexeme);
            assert!(t.span.0 >= last_end);
            last_end = t.span.1;
        }
    }
}
