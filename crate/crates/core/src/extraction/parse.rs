//! Statement parser: `asm [qualifiers] ( template : outputs : inputs : clobbers : labels )`.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::ops::Range;

use super::chunk::{ChunkAst, Layout, OperandEntry, Qualifier, SourceSpan};
use super::scan::{comment_end, literal_end, matching_paren};
use super::ExtractError;
use crate::arch::ClobberName;

/// Letters, digits and modifiers accepted in a constraint string.
pub const CONSTRAINT_ALPHABET: &str = "abcdSDUqQrRinpmg0123456789=+&%,";

#[derive(Clone, Debug, PartialEq, Eq)]
enum Tok {
    Str(String),
    Colon,
    Comma,
    Name(String),
    Paren(String),
    Ident(String),
}

struct Lexer<'a> {
    src: &'a str,
    pos: usize,
}

impl<'a> Lexer<'a> {
    fn skip_trivia(&mut self) {
        let b = self.src.as_bytes();
        loop {
            while self.pos < b.len() && b[self.pos].is_ascii_whitespace() {
                self.pos += 1;
            }
            match comment_end(b, self.pos) {
                Some(e) => self.pos = e,
                None => return,
            }
        }
    }

    fn next(&mut self) -> Result<Option<(Tok, Range<usize>)>, String> {
        self.skip_trivia();
        let b = self.src.as_bytes();
        let start = self.pos;
        let Some(&c) = b.get(start) else {
            return Ok(None);
        };
        let tok = match c {
            b'"' => {
                let end = literal_end(b, start);
                if end <= start + 1 || b[end - 1] != b'"' {
                    return Err("unterminated string literal".into());
                }
                self.pos = end;
                Tok::Str(decode_c_string(&self.src[start + 1..end - 1]))
            }
            b':' => {
                self.pos += 1;
                Tok::Colon
            }
            b',' => {
                self.pos += 1;
                Tok::Comma
            }
            b'[' => {
                let close = self.src[start..]
                    .find(']')
                    .ok_or_else(|| String::from("unterminated [name]"))?;
                self.pos = start + close + 1;
                Tok::Name(self.src[start + 1..start + close].trim().to_string())
            }
            b'(' => {
                let close = matching_paren(b, start).ok_or_else(|| String::from("unbalanced parentheses"))?;
                self.pos = close + 1;
                Tok::Paren(self.src[start + 1..close].trim().to_string())
            }
            c if c.is_ascii_alphabetic() || c == b'_' => {
                while self.pos < b.len() && (b[self.pos].is_ascii_alphanumeric() || b[self.pos] == b'_') {
                    self.pos += 1;
                }
                Tok::Ident(self.src[start..self.pos].to_string())
            }
            c => return Err(format!("unexpected character {:?}", c as char)),
        };
        Ok(Some((tok, start..self.pos)))
    }
}

/// Decode the contents of a C string literal (without quotes).
pub fn decode_c_string(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    let mut chars = s.chars().peekable();
    while let Some(c) = chars.next() {
        if c != '\\' {
            out.push(c);
            continue;
        }
        let Some(e) = chars.next() else {
            out.push('\\');
            break;
        };
        match e {
            'n' => out.push('\n'),
            't' => out.push('\t'),
            'r' => out.push('\r'),
            'a' => out.push('\x07'),
            'b' => out.push('\x08'),
            'f' => out.push('\x0c'),
            'v' => out.push('\x0b'),
            '0'..='7' => {
                let mut v = e.to_digit(8).unwrap();
                for _ in 0..2 {
                    match chars.peek().and_then(|d| d.to_digit(8)) {
                        Some(d) => {
                            v = v * 8 + d;
                            chars.next();
                        }
                        None => break,
                    }
                }
                out.push(char::from_u32(v & 0xff).unwrap_or('?'));
            }
            'x' => {
                let mut v = 0u32;
                while let Some(d) = chars.peek().and_then(|d| d.to_digit(16)) {
                    v = (v * 16 + d) & 0xff;
                    chars.next();
                }
                out.push(char::from_u32(v).unwrap_or('?'));
            }
            other => out.push(other),
        }
    }
    out
}

/// Check a constraint string against the supported alphabet; `[name]`
/// references are allowed.
pub fn check_constraint_chars(c: &str) -> Result<(), char> {
    let mut chars = c.chars();
    while let Some(ch) = chars.next() {
        if ch == '[' {
            for n in chars.by_ref() {
                if n == ']' {
                    break;
                }
                if !(n.is_ascii_alphanumeric() || n == '_') {
                    return Err(n);
                }
            }
            continue;
        }
        if ch.is_whitespace() {
            continue;
        }
        if !CONSTRAINT_ALPHABET.contains(ch) {
            return Err(ch);
        }
    }
    Ok(())
}

struct Section {
    toks: Vec<(Tok, Range<usize>)>,
}

/// Parse a full statement (`asm volatile (...)`) or a bare parenthesized body.
pub fn parse_asm_statement(raw: &str, span: SourceSpan) -> Result<ChunkAst, ExtractError> {
    let malformed = |reason: String| ExtractError::MalformedInterface {
        span: span.clone(),
        reason,
    };
    let mut qualifiers = alloc::collections::BTreeSet::new();
    let trimmed = raw.trim_start();
    let lead = raw.len() - trimmed.len();
    let (body_start, body_end, close_paren) = if starts_with_keyword(trimmed) {
        let open = raw.find('(').ok_or_else(|| malformed("missing '('".into()))?;
        for word in raw[lead..open].split_whitespace().skip(1) {
            match Qualifier::parse(word) {
                Some(q) => {
                    qualifiers.insert(q);
                }
                None => return Err(malformed(format!("unknown qualifier {word:?}"))),
            }
        }
        let close = matching_paren(raw.as_bytes(), open).ok_or_else(|| malformed("unbalanced parentheses".into()))?;
        if !raw[close + 1..].trim().trim_end_matches(';').trim().is_empty() {
            return Err(malformed("trailing text after statement".into()));
        }
        (open + 1, close, close)
    } else {
        (0, raw.len(), raw.len())
    };

    let mut lexer = Lexer {
        src: &raw[..body_end],
        pos: body_start,
    };
    let mut sections = alloc::vec![Section { toks: Vec::new() }];
    let mut colons = Vec::new();
    while let Some((tok, r)) = lexer.next().map_err(malformed)? {
        if tok == Tok::Colon {
            colons.push(r.start);
            sections.push(Section { toks: Vec::new() });
        } else {
            sections.last_mut().unwrap().toks.push((tok, r));
        }
    }
    if sections.len() > 5 {
        return Err(malformed("too many ':' sections".into()));
    }

    let mut chunk = ChunkAst::new(String::new());
    chunk.span = span.clone();
    chunk.qualifiers = qualifiers;
    let mut layout = Layout {
        colons,
        close_paren,
        ..Layout::default()
    };

    // template
    for (tok, r) in &sections[0].toks {
        match tok {
            Tok::Str(s) => {
                chunk.template.push_str(s);
                layout.template_literals.push(r.clone());
            }
            _ => return Err(malformed("template must be string literals".into())),
        }
    }
    if layout.template_literals.is_empty() {
        return Err(malformed("missing template string".into()));
    }

    for (si, is_output) in [(1usize, true), (2, false)] {
        let Some(sec) = sections.get(si) else { break };
        for group in split_commas(&sec.toks) {
            let entry = parse_entry(group).map_err(|m| malformed(m.into()))?;
            let (e, full, lit) = entry;
            if let Err(ch) = check_constraint_chars(&e.constraint) {
                return Err(ExtractError::BadConstraintChar {
                    span: span.clone(),
                    ch,
                    constraint: e.constraint,
                });
            }
            layout.entries.push((full, lit));
            if is_output {
                chunk.outputs.push(e);
            } else {
                chunk.inputs.push(e);
            }
        }
    }
    chunk.renumber();

    if let Some(sec) = sections.get(3) {
        for group in split_commas(&sec.toks) {
            let mut name = String::new();
            let mut range: Option<Range<usize>> = None;
            for (tok, r) in group {
                match tok {
                    Tok::Str(s) => {
                        name.push_str(s);
                        range = Some(match range {
                            Some(p) => p.start..r.end,
                            None => r.clone(),
                        });
                    }
                    _ => return Err(malformed("clobbers must be string literals".into())),
                }
            }
            if range.is_none() {
                return Err(malformed("empty clobber".into()));
            }
            chunk.clobbers.push(name);
            layout.clobbers.push(range.unwrap());
        }
    }
    if let Some(sec) = sections.get(4) {
        for group in split_commas(&sec.toks) {
            match group {
                [(Tok::Ident(l), _)] => chunk.goto_labels.push(l.clone()),
                _ => return Err(malformed("goto labels must be identifiers".into())),
            }
        }
    }

    chunk.diagnostics = clobber_overlaps(&chunk);
    chunk.layout = Some(layout);
    chunk.raw = Some(raw.to_string());
    Ok(chunk)
}

fn starts_with_keyword(s: &str) -> bool {
    ["__asm__", "__asm", "asm"].iter().any(|k| {
        s.strip_prefix(k)
            .is_some_and(|rest| !rest.starts_with(|c: char| c.is_ascii_alphanumeric() || c == '_'))
    })
}

fn split_commas(toks: &[(Tok, Range<usize>)]) -> Vec<&[(Tok, Range<usize>)]> {
    if toks.is_empty() {
        return Vec::new();
    }
    toks.split(|(t, _)| *t == Tok::Comma).collect()
}

type ParsedEntry = (OperandEntry, Range<usize>, Range<usize>);

fn parse_entry(group: &[(Tok, Range<usize>)]) -> Result<ParsedEntry, &'static str> {
    let mut it = group.iter().peekable();
    let mut name = None;
    let first = it.peek().ok_or("empty operand entry")?.1.start;
    if let Some((Tok::Name(n), _)) = it.peek() {
        name = Some(n.clone());
        it.next();
    }
    let mut constraint = String::new();
    let mut lit: Option<Range<usize>> = None;
    while let Some((Tok::Str(s), r)) = it.peek() {
        constraint.push_str(s);
        lit = Some(match lit {
            Some(p) => p.start..r.end,
            None => r.clone(),
        });
        it.next();
    }
    let lit = lit.ok_or("operand entry without constraint string")?;
    if constraint.is_empty() {
        return Err("empty constraint");
    }
    let (expr, r) = match it.next() {
        Some((Tok::Paren(e), r)) => (e.clone(), r.clone()),
        _ => return Err("operand entry without (expression)"),
    };
    if it.next().is_some() {
        return Err("unexpected tokens after operand entry");
    }
    Ok((
        OperandEntry {
            name,
            constraint,
            expr_text: expr,
            size_bytes: 4,
            position: 0,
        },
        first..r.end,
        lit,
    ))
}

/// Clobbers naming a register that an entry's constraint pins.
pub fn clobber_overlaps(chunk: &ChunkAst) -> Vec<String> {
    let mut out = Vec::new();
    for c in &chunk.clobbers {
        let Some(ClobberName::Reg(r)) = ClobberName::parse(c) else { continue };
        for e in chunk.entries() {
            if crate::interface::letters::constraint_pins(&e.constraint)
                .is_some_and(|p| p == r)
            {
                out.push(format!("clobber \"{c}\" overlaps operand %{} (\"{}\")", e.position, e.constraint));
            }
        }
    }
    out
}
