use crate::error::{Error, Result};

/// How to treat a final numeral that is not followed by a comma.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TailPolicy {
    /// The output may have been cut off mid-number; drop the tail.
    DropUnterminated,
    /// The output ended on its own; keep the tail.
    Keep,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ParsedStream {
    pub values: Vec<i64>,
    pub warnings: Vec<String>,
}

pub const TRUNCATED_TAIL: &str = "truncated tail dropped";

fn parse_integer(piece: &str) -> Option<i64> {
    let (neg, digits) = match piece.chars().next()? {
        '-' | '\u{2212}' => (true, &piece[piece.chars().next()?.len_utf8()..]),
        '+' => (false, &piece[1..]),
        _ => (false, piece),
    };
    if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    let v: i64 = digits.parse().ok()?;
    Some(if neg { -v } else { v })
}

/// Extracts comma-separated integers, assuming the output may be truncated.
pub fn parse_numeric_stream(text: &str) -> Result<ParsedStream> {
    parse_numeric_stream_with(text, TailPolicy::DropUnterminated)
}

pub fn parse_numeric_stream_with(text: &str, tail: TailPolicy) -> Result<ParsedStream> {
    let mut out = ParsedStream::default();
    let pieces: Vec<&str> = text.split(',').collect();
    let last = pieces.len() - 1;
    for (i, raw) in pieces.iter().enumerate() {
        let piece = raw.trim();
        if piece.is_empty() {
            continue;
        }
        match parse_integer(piece) {
            Some(_) if i == last && tail == TailPolicy::DropUnterminated => {
                out.warnings.push(format!("{TRUNCATED_TAIL}: '{piece}'"));
            }
            Some(v) => out.values.push(v),
            None => out.warnings.push(format!("skipped non-numeric text: '{piece}'")),
        }
    }
    if out.values.is_empty() {
        return Err(Error::Parse(match out.warnings.first() {
            Some(w) => format!("no integers found ({w})"),
            None => "no integers found".into(),
        }));
    }
    Ok(out)
}
