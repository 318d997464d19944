//! Memory entries that name the object behind another input's pointer,
//! e.g. `"r"(key)` with `"m"(*(const char (*)[16]) key)`.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;

use serde::Serialize;

use super::derive::FormalInterface;
use crate::extraction::ChunkAst;
use crate::ir::TokenId;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct PointerAlias {
    /// Register-class input holding the address.
    pub pointer: TokenId,
    pub offset: i64,
    /// Bytes covered from `pointer + offset`.
    pub span: u32,
}

fn squeeze(s: &str) -> String {
    s.chars().filter(|c| !c.is_whitespace()).collect()
}

/// Index of the parenthesis closing the one at 0.
fn closing(s: &str) -> Option<usize> {
    let mut depth = 0i32;
    for (i, c) in s.char_indices() {
        match c {
            '(' | '[' => depth += 1,
            ')' | ']' => {
                depth -= 1;
                if depth == 0 {
                    return Some(i);
                }
            }
            _ => {}
        }
    }
    None
}

fn strip_parens(mut s: &str) -> &str {
    while s.starts_with('(') && closing(s) == Some(s.len() - 1) {
        s = &s[1..s.len() - 1];
    }
    s
}

fn is_char_cast(c: &str) -> bool {
    matches!(
        c,
        "char*" | "constchar*" | "unsignedchar*" | "constunsignedchar*" | "uint8_t*" | "constuint8_t*"
    )
}

/// `E`, `E + k` or `(char *)(E) + k`, returning `E` and `k`.
fn base_offset(s: &str) -> (&str, i64) {
    let s = strip_parens(s);
    let mut depth = 0i32;
    let mut split = None;
    for (i, c) in s.char_indices() {
        match c {
            '(' | '[' => depth += 1,
            ')' | ']' => depth -= 1,
            '+' | '-' if depth == 0 && i > 0 => split = Some(i),
            _ => {}
        }
    }
    if let Some(i) = split {
        if let Ok(k) = s[i + 1..].parse::<i64>() {
            let k = if &s[i..=i] == "-" { -k } else { k };
            let left = strip_parens(&s[..i]);
            if left.starts_with('(') {
                if let Some(end) = closing(left) {
                    if is_char_cast(&left[1..end]) {
                        return (strip_parens(&left[end + 1..]), k);
                    }
                }
            }
        }
    }
    (s, 0)
}

/// Parse `*(cast) E`, `*E` or `E[0]`, giving the address expression,
/// offset and, for array casts, the byte count.
fn parse_deref(expr: &str) -> Option<(String, i64, Option<u32>)> {
    let s = squeeze(expr);
    let s = strip_parens(&s);
    if let Some(base) = s.strip_suffix("[0]") {
        return Some((String::from(strip_parens(base)), 0, None));
    }
    let rest = s.strip_prefix('*')?;
    let mut span = None;
    let mut operand = rest;
    if rest.starts_with('(') {
        let end = closing(rest)?;
        let inner = &rest[1..end];
        if let Some(pos) = inner.find("(*)[") {
            let n = inner[pos + 4..].strip_suffix(']')?;
            let elem = &inner[..pos];
            let unit = match elem.trim_start_matches("const").trim_start_matches("unsigned") {
                "char" | "uint8_t" => 1,
                _ => return None,
            };
            span = Some(n.parse::<u32>().ok()? * unit);
            operand = &rest[end + 1..];
        } else if inner.ends_with('*') {
            operand = &rest[end + 1..];
        }
    }
    let (base, off) = base_offset(operand);
    Some((String::from(base), off, span))
}

pub fn pointer_aliases(chunk: &ChunkAst, fi: &FormalInterface) -> BTreeMap<TokenId, PointerAlias> {
    let mut out = BTreeMap::new();
    let pointers: BTreeMap<String, TokenId> = fi
        .tokens
        .values()
        .filter(|t| !fi.b_o.contains(&t.id) && !fi.memory_capable(t.id) && t.input_bits == Some(32))
        .filter_map(|t| chunk.entry(t.id.0 as usize).map(|e| (squeeze(strip_parens(&e.expr_text)), t.id)))
        .collect();
    for t in fi.token_ids() {
        if !fi.is_memory_only(t) {
            continue;
        }
        let Some(e) = chunk.entry(t.0 as usize) else { continue };
        let Some((base, offset, span)) = parse_deref(&e.expr_text) else {
            continue;
        };
        if let Some(p) = pointers.get(strip_parens(&base)) {
            out.insert(
                t,
                PointerAlias {
                    pointer: *p,
                    offset,
                    span: span.unwrap_or(e.size_bytes as u32),
                },
            );
        }
    }
    out
}

/// C lvalue for `span` bytes at `pointer + offset`.
pub fn alias_expr(pointer: &str, offset: i64, span: u32, writable: bool) -> String {
    let q = if writable { "" } else { "const " };
    let p = strip_parens(pointer.trim());
    match offset {
        0 => format!("*({q}char (*)[{span}]) ({p})"),
        k if k > 0 => format!("*({q}char (*)[{span}]) (({q}char *) ({p}) + {k})"),
        k => format!("*({q}char (*)[{span}]) (({q}char *) ({p}) - {})", -k),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::interface::derive_interface;

    #[test]
    fn deref_forms() {
        assert_eq!(parse_deref("*key"), Some(("key".into(), 0, None)));
        assert_eq!(parse_deref("*(const ulong32 *)(y)"), Some(("y".into(), 0, None)));
        assert_eq!(parse_deref("*(const char (*)[16]) key"), Some(("key".into(), 0, Some(16))));
        assert_eq!(
            parse_deref("*(char (*)[8]) ((char *) (p->buf) + 4)"),
            Some(("p->buf".into(), 4, Some(8)))
        );
        assert_eq!(parse_deref("key[0]"), Some(("key".into(), 0, None)));
        assert_eq!(parse_deref("x"), None);
    }

    #[test]
    fn round_trip() {
        for (off, span, w) in [(0, 4, false), (4, 8, true), (-4, 4, false)] {
            let e = alias_expr("(s->key)", off, span, w);
            assert_eq!(parse_deref(&e), Some(("s->key".into(), off, Some(span))), "{e}");
        }
    }

    #[test]
    fn aliases_need_a_pointer_input() {
        let c = ChunkAst::new("movl (%1), %0")
            .output("=r", "x", 4)
            .input("r", "key", 4)
            .input("m", "*(const unsigned int *)(key)", 4);
        let fi = derive_interface(&c).unwrap();
        let a = pointer_aliases(&c, &fi);
        assert_eq!(
            a.get(&TokenId(2)),
            Some(&PointerAlias {
                pointer: TokenId(1),
                offset: 0,
                span: 4
            })
        );
        let c = ChunkAst::new("").input("m", "*key", 4);
        let fi = derive_interface(&c).unwrap();
        assert!(pointer_aliases(&c, &fi).is_empty());
    }
}
