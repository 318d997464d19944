//! AT&T template parsing with tokens as first-class operands.

use alloc::collections::BTreeSet;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;
use core::ops::Range;

use crate::arch::RegView;
use crate::extraction::ChunkAst;

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum TemplateError {
    #[error("unsupported mnemonic {0:?}")]
    UnknownMnemonic(String),
    #[error("bad token reference {0:?}")]
    BadTokenRef(String),
    #[error("bad operand {0:?}")]
    BadOperand(String),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TokenRef {
    /// Interface position (before unification).
    pub position: u8,
    pub modifier: Option<char>,
}

/// A register or token used inside an address.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum AddrPart {
    Reg(RegView),
    Token(TokenRef),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum TemplateOperand {
    Token(TokenRef),
    Reg(RegView),
    Imm(i64),
    /// `$sym` or `$sym+c`.
    ImmSymbol { symbol: String, offset: i64 },
    Mem {
        symbol: Option<String>,
        disp: i64,
        base: Option<AddrPart>,
        index: Option<AddrPart>,
        scale: u8,
    },
    Label(String),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TemplateInstr {
    /// Labels defined right before this instruction.
    pub labels: Vec<String>,
    pub prefixes: BTreeSet<String>,
    /// Empty for a label-only line.
    pub mnemonic: String,
    pub operands: Vec<TemplateOperand>,
    /// Byte range within the template.
    pub span: Range<usize>,
}

impl fmt::Display for TemplateOperand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TemplateOperand::Token(t) => write!(f, "%{}", t.position),
            TemplateOperand::Reg(r) => write!(f, "%{}", r.reg),
            TemplateOperand::Imm(v) => write!(f, "${v}"),
            TemplateOperand::ImmSymbol { symbol, offset } => write!(f, "${symbol}+{offset}"),
            TemplateOperand::Mem { symbol, disp, .. } => write!(f, "mem({symbol:?}+{disp})"),
            TemplateOperand::Label(l) => f.write_str(l),
        }
    }
}

const PREFIXES: [&str; 6] = ["lock", "rep", "repe", "repz", "repne", "repnz"];

/// Parse a template into instructions, resolving `%N` and `%[name]`
/// against the chunk's entries.
pub fn parse_template(template: &str, chunk: &ChunkAst) -> Result<Vec<TemplateInstr>, TemplateError> {
    let n_entries = chunk.outputs.len() + chunk.inputs.len();
    let resolve = |text: &str| -> Result<TokenRef, TemplateError> { parse_token_ref(text, chunk, n_entries) };
    let mut out = Vec::new();
    let mut pending_labels = Vec::new();
    for (stmt, range) in split_statements(template) {
        let mut rest = stmt.trim();
        let mut offset = range.start + (stmt.len() - stmt.trim_start().len());
        // leading labels
        loop {
            let Some(colon) = label_end(rest) else { break };
            pending_labels.push(rest[..colon].trim().to_string());
            let after = &rest[colon + 1..];
            offset += colon + 1 + (after.len() - after.trim_start().len());
            rest = after.trim();
        }
        if rest.is_empty() || rest.starts_with('#') {
            continue;
        }
        let mut words = rest;
        let mut prefixes = BTreeSet::new();
        let mnemonic;
        loop {
            let end = words.find(|c: char| c.is_whitespace()).unwrap_or(words.len());
            let w = words[..end].to_ascii_lowercase();
            words = words[end..].trim_start();
            if PREFIXES.contains(&w.as_str()) {
                prefixes.insert(w);
                if words.is_empty() {
                    mnemonic = String::new();
                    break;
                }
                continue;
            }
            mnemonic = w;
            break;
        }
        if mnemonic.is_empty() {
            // a bare prefix line (`lock;`) applies to the next instruction
            out.push(TemplateInstr {
                labels: core::mem::take(&mut pending_labels),
                prefixes,
                mnemonic: String::new(),
                operands: Vec::new(),
                span: offset..range.end,
            });
            continue;
        }
        if mnemonic.starts_with('.') || !super::lift::supported(&mnemonic) {
            return Err(TemplateError::UnknownMnemonic(mnemonic));
        }
        let is_jump = mnemonic.starts_with('j');
        let mut operands = Vec::new();
        for op_text in split_operands(words) {
            operands.push(parse_operand(op_text.trim(), is_jump, &resolve)?);
        }
        out.push(TemplateInstr {
            labels: core::mem::take(&mut pending_labels),
            prefixes,
            mnemonic,
            operands,
            span: offset..range.end,
        });
    }
    if !pending_labels.is_empty() {
        out.push(TemplateInstr {
            labels: pending_labels,
            prefixes: BTreeSet::new(),
            mnemonic: String::new(),
            operands: Vec::new(),
            span: template.len()..template.len(),
        });
    }
    merge_prefix_lines(&mut out);
    Ok(out)
}

/// `lock; cmpxchg8b %0` is written as two statements; fold bare prefixes forward.
fn merge_prefix_lines(instrs: &mut Vec<TemplateInstr>) {
    let mut i = 0;
    while i + 1 < instrs.len() {
        if instrs[i].mnemonic.is_empty() && !instrs[i].prefixes.is_empty() {
            let p = instrs.remove(i);
            let next = &mut instrs[i];
            next.prefixes.extend(p.prefixes);
            let mut labels = p.labels;
            labels.append(&mut next.labels);
            next.labels = labels;
            next.span = p.span.start..next.span.end;
        } else {
            i += 1;
        }
    }
}

fn split_statements(t: &str) -> Vec<(&str, Range<usize>)> {
    let mut out = Vec::new();
    let mut start = 0;
    for (i, c) in t.char_indices() {
        if c == ';' || c == '\n' {
            out.push((&t[start..i], start..i));
            start = i + 1;
        }
    }
    out.push((&t[start..], start..t.len()));
    out
}

/// Byte offset of the colon ending a leading label, if the statement starts with one.
fn label_end(s: &str) -> Option<usize> {
    let colon = s.find(':')?;
    let name = s[..colon].trim();
    let ok = !name.is_empty()
        && name
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '.' || c == '$' || c == '%' || c == '=');
    ok.then_some(colon)
}

fn split_operands(s: &str) -> Vec<&str> {
    if s.trim().is_empty() {
        return Vec::new();
    }
    let mut out = Vec::new();
    let mut depth = 0i32;
    let mut start = 0;
    for (i, c) in s.char_indices() {
        match c {
            '(' => depth += 1,
            ')' => depth -= 1,
            ',' if depth == 0 => {
                out.push(&s[start..i]);
                start = i + 1;
            }
            _ => {}
        }
    }
    out.push(&s[start..]);
    out
}

fn parse_token_ref(text: &str, chunk: &ChunkAst, n: usize) -> Result<TokenRef, TemplateError> {
    let bad = || TemplateError::BadTokenRef(text.to_string());
    let body = text.strip_prefix('%').ok_or_else(bad)?;
    let mut chars = body.chars();
    let first = chars.next().ok_or_else(bad)?;
    let (modifier, rest) = if first.is_ascii_alphabetic() {
        (Some(first), &body[first.len_utf8()..])
    } else {
        (None, body)
    };
    let position = if let Some(name) = rest.strip_prefix('[') {
        let name = name.strip_suffix(']').ok_or_else(bad)?;
        chunk.position_of_name(name.trim()).ok_or_else(bad)?
    } else {
        if rest.is_empty() || !rest.bytes().all(|b| b.is_ascii_digit()) {
            return Err(bad());
        }
        rest.parse::<usize>().map_err(|_| bad())?
    };
    if position >= n {
        return Err(bad());
    }
    Ok(TokenRef {
        position: position as u8,
        modifier,
    })
}

fn parse_int(s: &str) -> Option<i64> {
    let s = s.trim();
    let (neg, s) = match s.strip_prefix('-') {
        Some(r) => (true, r.trim()),
        None => (false, s.strip_prefix('+').unwrap_or(s)),
    };
    let v = if let Some(h) = s.strip_prefix("0x").or_else(|| s.strip_prefix("0X")) {
        i64::from_str_radix(h, 16).ok()?
    } else if s.len() > 1 && s.starts_with('0') {
        i64::from_str_radix(&s[1..], 8).ok()?
    } else {
        s.parse::<i64>().ok()?
    };
    Some(if neg { -v } else { v })
}

fn is_symbol(s: &str) -> bool {
    let mut c = s.chars();
    matches!(c.next(), Some(ch) if ch.is_ascii_alphabetic() || ch == '_' || ch == '.')
        && s.chars().all(|ch| ch.is_ascii_alphanumeric() || ch == '_' || ch == '.' || ch == '$')
}

/// `sym`, `c`, `sym+c`, `sym-c`.
fn parse_disp(s: &str) -> Option<(Option<String>, i64)> {
    let s = s.trim();
    if s.is_empty() {
        return Some((None, 0));
    }
    if let Some(v) = parse_int(s) {
        return Some((None, v));
    }
    if is_symbol(s) {
        return Some((Some(s.to_string()), 0));
    }
    let split = s[1..].find(['+', '-']).map(|i| i + 1)?;
    let sym = s[..split].trim();
    let off = parse_int(&s[split..])?;
    is_symbol(sym).then(|| (Some(sym.to_string()), off))
}

fn parse_register(s: &str) -> Option<RegView> {
    s.strip_prefix("%%")?.parse().ok()
}

fn parse_addr_part(
    s: &str,
    resolve: &impl Fn(&str) -> Result<TokenRef, TemplateError>,
) -> Result<Option<AddrPart>, TemplateError> {
    let s = s.trim();
    if s.is_empty() {
        return Ok(None);
    }
    if let Some(r) = parse_register(s) {
        return Ok(Some(AddrPart::Reg(r)));
    }
    if s.starts_with('%') {
        return Ok(Some(AddrPart::Token(resolve(s)?)));
    }
    Err(TemplateError::BadOperand(s.to_string()))
}

fn parse_operand(
    s: &str,
    is_jump: bool,
    resolve: &impl Fn(&str) -> Result<TokenRef, TemplateError>,
) -> Result<TemplateOperand, TemplateError> {
    let bad = || TemplateError::BadOperand(s.to_string());
    if s.is_empty() {
        return Err(bad());
    }
    if let Some(imm) = s.strip_prefix('$') {
        let imm = imm.trim();
        if imm.starts_with('%') {
            return Ok(TemplateOperand::Token(resolve(imm)?));
        }
        return match parse_disp(imm) {
            Some((None, v)) => Ok(TemplateOperand::Imm(v)),
            Some((Some(symbol), offset)) => Ok(TemplateOperand::ImmSymbol { symbol, offset }),
            None => Err(bad()),
        };
    }
    if let Some(r) = parse_register(s) {
        return Ok(TemplateOperand::Reg(r));
    }
    if s.starts_with("%%") {
        return Err(bad());
    }
    if s.starts_with('%') && !s.contains('(') {
        return Ok(TemplateOperand::Token(resolve(s)?));
    }
    if s.starts_with('*') {
        return Err(bad());
    }
    match s.find('(') {
        Some(open) => {
            let close = s.rfind(')').ok_or_else(bad)?;
            if close < open || !s[close + 1..].trim().is_empty() {
                return Err(bad());
            }
            let (symbol, disp) = parse_disp(&s[..open]).ok_or_else(bad)?;
            let parts: Vec<&str> = s[open + 1..close].split(',').collect();
            if parts.len() > 3 {
                return Err(bad());
            }
            let base = parse_addr_part(parts[0], resolve)?;
            let index = match parts.get(1) {
                Some(p) => parse_addr_part(p, resolve)?,
                None => None,
            };
            let scale = match parts.get(2) {
                Some(p) => match parse_int(p) {
                    Some(k @ (1 | 2 | 4 | 8)) => k as u8,
                    _ => return Err(bad()),
                },
                None => 1,
            };
            if let Some(AddrPart::Reg(r)) = &index {
                if r.reg == crate::arch::Reg::Esp {
                    return Err(bad());
                }
            }
            Ok(TemplateOperand::Mem {
                symbol,
                disp,
                base,
                index,
                scale,
            })
        }
        None if is_jump => Ok(TemplateOperand::Label(s.to_string())),
        None => {
            let (symbol, disp) = parse_disp(s).ok_or_else(bad)?;
            Ok(TemplateOperand::Mem {
                symbol,
                disp,
                base: None,
                index: None,
                scale: 1,
            })
        }
    }
}
