//! Line-oriented text formats shared by label and detection files.

use std::fmt;

use thiserror::Error;

/// A parse failure pinned to a 1-based line number.
#[derive(Debug, Clone, PartialEq, Error)]
#[error("line {line}: {kind}")]
pub struct ParseError {
    pub line: usize,
    pub kind: ParseErrorKind,
}

impl ParseError {
    pub fn new(line: usize, kind: ParseErrorKind) -> Self {
        Self { line, kind }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParseErrorKind {
    #[error("expected {expected} fields, found {found}")]
    WrongFieldCount { expected: usize, found: usize },
    #[error("class id {0:?} is not a non-negative integer")]
    InvalidClassId(String),
    #[error("class id {id} out of range for {num_classes} classes")]
    ClassOutOfRange { id: usize, num_classes: usize },
    #[error("{0:?} is not a decimal number")]
    InvalidNumber(String),
    #[error("box coordinates out of range")]
    BoxOutOfRange,
    #[error("confidence {0} outside [0, 1]")]
    ConfidenceOutOfRange(f64),
    #[error("invalid UTF-8")]
    InvalidUtf8,
}

/// Decodes file bytes, reporting the line of the first invalid sequence.
pub fn decode_utf8(bytes: &[u8]) -> Result<&str, ParseError> {
    std::str::from_utf8(bytes).map_err(|e| {
        let line = 1 + bytes[..e.valid_up_to()]
            .iter()
            .filter(|&&b| b == b'\n')
            .count();
        ParseError::new(line, ParseErrorKind::InvalidUtf8)
    })
}

/// Non-blank lines with their 1-based numbers. Accepts LF and CRLF.
pub(crate) fn content_lines(text: &str) -> impl Iterator<Item = (usize, Vec<&str>)> {
    text.split('\n').enumerate().filter_map(|(i, raw)| {
        let fields: Vec<&str> = raw.split_ascii_whitespace().collect();
        (!fields.is_empty()).then_some((i + 1, fields))
    })
}

pub(crate) fn parse_class_id(token: &str, num_classes: usize) -> Result<usize, ParseErrorKind> {
    if !token.bytes().all(|b| b.is_ascii_digit()) {
        return Err(ParseErrorKind::InvalidClassId(token.to_owned()));
    }
    let id: usize = token
        .parse()
        .map_err(|_| ParseErrorKind::InvalidClassId(token.to_owned()))?;
    if id >= num_classes {
        return Err(ParseErrorKind::ClassOutOfRange { id, num_classes });
    }
    Ok(id)
}

pub(crate) fn parse_decimal(token: &str) -> Result<f64, ParseErrorKind> {
    // `f64::from_str` also takes "inf" and "NaN"; the label formats only carry plain decimals.
    let plain = token
        .bytes()
        .all(|b| b.is_ascii_digit() || matches!(b, b'.' | b'-' | b'+' | b'e' | b'E'));
    match token.parse::<f64>() {
        Ok(v) if plain && v.is_finite() => Ok(v),
        _ => Err(ParseErrorKind::InvalidNumber(token.to_owned())),
    }
}

/// Formats a float with the shortest decimal that parses back to the same bits.
pub(crate) struct Shortest(pub f64);

impl fmt::Display for Shortest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        // Rust's `Display` for f64 already emits the shortest round-trip form.
        write!(f, "{}", self.0)
    }
}

/// Quotes a delimited-table field when it holds a delimiter, quote or newline.
pub(crate) fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_owned()
    }
}
