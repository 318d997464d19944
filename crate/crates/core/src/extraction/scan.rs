//! Lexical recognizer for `asm` statements in C source. Tracks comments,
//! string/char literals and parenthesis depth only.

use alloc::string::String;
use alloc::vec::Vec;

use super::chunk::{SizeAnnotation, SourceSpan};
use super::ExtractError;

/// One `asm` statement occurrence.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RawStatement {
    pub span: SourceSpan,
    /// Statement text from the keyword through the closing parenthesis.
    pub text: String,
    /// Text between the outer parentheses.
    pub body: String,
    /// Nearest preceding `// size:` annotation, if any.
    pub sizes: Option<SizeAnnotation>,
}

#[derive(Clone, Debug, Default)]
pub struct ScanResult {
    pub statements: Vec<RawStatement>,
    pub errors: Vec<ExtractError>,
}

const KEYWORDS: [&str; 3] = ["asm", "__asm", "__asm__"];

pub(crate) struct Lines {
    starts: Vec<usize>,
}

impl Lines {
    pub(crate) fn new(text: &str) -> Self {
        let mut starts = alloc::vec![0];
        for (i, b) in text.bytes().enumerate() {
            if b == b'\n' {
                starts.push(i + 1);
            }
        }
        Lines { starts }
    }

    /// 1-based (line, column) of a byte offset.
    pub(crate) fn position(&self, offset: usize) -> (u32, u32) {
        let line = match self.starts.binary_search(&offset) {
            Ok(i) => i,
            Err(i) => i - 1,
        };
        ((line + 1) as u32, (offset - self.starts[line] + 1) as u32)
    }
}

/// End offset (exclusive) of the comment starting at `i`, if one does.
pub(crate) fn comment_end(b: &[u8], i: usize) -> Option<usize> {
    if b.get(i) != Some(&b'/') {
        return None;
    }
    match b.get(i + 1) {
        Some(b'/') => {
            let mut j = i + 2;
            while j < b.len() && b[j] != b'\n' {
                j += 1;
            }
            Some(j)
        }
        Some(b'*') => {
            let mut j = i + 2;
            while j + 1 < b.len() && !(b[j] == b'*' && b[j + 1] == b'/') {
                j += 1;
            }
            Some((j + 2).min(b.len()))
        }
        _ => None,
    }
}

/// End offset (exclusive) of the string or char literal starting at `i`.
/// Unterminated literals stop at end of line.
pub(crate) fn literal_end(b: &[u8], i: usize) -> usize {
    let quote = b[i];
    let mut j = i + 1;
    while j < b.len() {
        match b[j] {
            b'\\' => j += 2,
            b'\n' => return j,
            c if c == quote => return j + 1,
            _ => j += 1,
        }
    }
    b.len()
}

fn is_ident_byte(c: u8) -> bool {
    c.is_ascii_alphanumeric() || c == b'_'
}

fn skip_trivia(b: &[u8], mut i: usize) -> usize {
    loop {
        while i < b.len() && b[i].is_ascii_whitespace() {
            i += 1;
        }
        match comment_end(b, i) {
            Some(e) => i = e,
            None => return i,
        }
    }
}

/// Offset of the parenthesis matching the `(` at `open`.
pub(crate) fn matching_paren(b: &[u8], open: usize) -> Option<usize> {
    let mut depth = 0usize;
    let mut i = open;
    while i < b.len() {
        if let Some(e) = comment_end(b, i) {
            i = e;
            continue;
        }
        match b[i] {
            b'"' | b'\'' => {
                i = literal_end(b, i);
                continue;
            }
            b'(' => depth += 1,
            b')' => {
                depth -= 1;
                if depth == 0 {
                    return Some(i);
                }
            }
            _ => {}
        }
        i += 1;
    }
    None
}

fn size_annotation(comment: &str) -> Option<SizeAnnotation> {
    let c = comment.trim_start_matches('/').trim_start_matches('*').trim();
    let rest = c.strip_prefix("size:")?;
    SizeAnnotation::parse(rest.trim_end_matches("*/").trim())
}

/// Find every `asm`/`__asm`/`__asm__` statement outside comments and literals.
pub fn scan_c_source(text: &str, file: &str) -> ScanResult {
    let b = text.as_bytes();
    let lines = Lines::new(text);
    let mut out = ScanResult::default();
    let mut pending_sizes: Option<SizeAnnotation> = None;
    let mut i = 0;
    while i < b.len() {
        if let Some(e) = comment_end(b, i) {
            if let Some(s) = size_annotation(&text[i..e]) {
                pending_sizes = Some(s);
            }
            i = e;
            continue;
        }
        let c = b[i];
        if c == b'"' || c == b'\'' {
            i = literal_end(b, i);
            continue;
        }
        if !is_ident_byte(c) {
            i += 1;
            continue;
        }
        let start = i;
        while i < b.len() && is_ident_byte(b[i]) {
            i += 1;
        }
        let word = &text[start..i];
        if !KEYWORDS.contains(&word) {
            continue;
        }
        // qualifiers, then the opening parenthesis
        let mut j = skip_trivia(b, i);
        loop {
            let ws = j;
            while j < b.len() && is_ident_byte(b[j]) {
                j += 1;
            }
            if ws == j {
                break;
            }
            if super::chunk::Qualifier::parse(&text[ws..j]).is_none() {
                j = ws;
                break;
            }
            j = skip_trivia(b, j);
        }
        if b.get(j) != Some(&b'(') {
            continue;
        }
        let (line, column) = lines.position(start);
        match matching_paren(b, j) {
            Some(close) => {
                out.statements.push(RawStatement {
                    span: SourceSpan {
                        file: file.into(),
                        line,
                        column,
                        byte_start: start,
                        byte_end: close + 1,
                    },
                    text: text[start..=close].into(),
                    body: text[j + 1..close].into(),
                    sizes: pending_sizes.take(),
                });
                i = close + 1;
            }
            None => {
                out.errors.push(ExtractError::UnterminatedStatement {
                    span: SourceSpan {
                        file: file.into(),
                        line,
                        column,
                        byte_start: start,
                        byte_end: b.len(),
                    },
                });
                i = j + 1;
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_statement() {
        let r = scan_c_source("__asm__ volatile (\"nop\");", "t.c");
        assert_eq!(r.statements.len(), 1);
        assert_eq!(r.statements[0].body, "\"nop\"");
        assert_eq!(r.statements[0].text, "__asm__ volatile (\"nop\")");
        assert_eq!((r.statements[0].span.line, r.statements[0].span.column), (1, 1));
    }

    #[test]
    fn comments_and_strings_are_skipped() {
        let r = scan_c_source("/* asm(\"x\") */ char*s=\"asm(\\\"y\\\")\";", "t.c");
        assert!(r.statements.is_empty());
        assert!(r.errors.is_empty());
        let r = scan_c_source("// asm(\"x\")\nint asm_like = 1; char c = '(';", "t.c");
        assert!(r.statements.is_empty());
    }

    #[test]
    fn unterminated_statement_is_reported_and_scan_continues() {
        let src = "asm(\"a\" : : \"r\"(x);\n";
        let r = scan_c_source(src, "t.c");
        assert!(r.statements.is_empty());
        assert_eq!(r.errors.len(), 1);
        assert!(matches!(r.errors[0], ExtractError::UnterminatedStatement { .. }));
    }

    #[test]
    fn size_annotation_attaches_to_next_statement() {
        let src = "// size: 8,1 | 8,4\nasm(\"nop\");\nasm(\"nop\");";
        let r = scan_c_source(src, "t.c");
        assert_eq!(r.statements.len(), 2);
        assert_eq!(
            r.statements[0].sizes,
            Some(SizeAnnotation {
                outputs: alloc::vec![8, 1],
                inputs: alloc::vec![8, 4]
            })
        );
        assert_eq!(r.statements[1].sizes, None);
        assert_eq!(r.statements[1].span.line, 3);
    }

    #[test]
    fn parens_inside_template_strings() {
        let src = "asm volatile(\"movl (%1), %0\" : \"=r\"(x) : \"r\"(p));";
        let r = scan_c_source(src, "t.c");
        assert_eq!(r.statements.len(), 1);
        assert!(r.statements[0].body.ends_with("\"r\"(p)"));
    }
}
