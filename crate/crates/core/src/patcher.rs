//! Interface edits that fix framing and unicity issues, statement rewriting
//! with consistent operand renumbering, and unified diffs.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt::Write;
use core::ops::Range;

use serde::Serialize;

use crate::arch::Reg;
use crate::checker::{check_chunk, Category, Issue, Report, Verdict};
use crate::extraction::chunk::c_string_literal;
use crate::extraction::{ChunkAst, OperandEntry};
use crate::interface::{derive_interface, enumerate_assignments, FormalInterface};
use crate::ir::{Location, TokenId};

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InterfaceEdit {
    /// New output appended after the existing ones. `matched_input` is the
    /// original position of an input rebound to it with a matching digit.
    AddOutput {
        constraint: String,
        lvalue: String,
        matched_input: Option<u8>,
    },
    AddInput {
        constraint: String,
        source: String,
    },
    AddClobber {
        name: String,
    },
    SetMemoryClobber,
    MarkEarlyClobber {
        token: u8,
    },
    /// `=` becomes `+` on an output.
    PromoteToReadWrite {
        token: u8,
    },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct PatchResult {
    pub patched: ChunkAst,
    pub edits: Vec<InterfaceEdit>,
    pub unresolved: Vec<Issue>,
    pub renumber_map: BTreeMap<u8, u8>,
    #[serde(skip)]
    pub original: ChunkAst,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct PatchVerification {
    pub framing_ok: bool,
    pub fully_compliant: bool,
    pub interface_satisfiable: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum PatchError {
    #[error("{file}: source changed since the statement at byte {start} was scanned")]
    SpanStale { file: String, start: usize },
    #[error("{file}: statement at byte {start} has no source layout")]
    NoLayout { file: String, start: usize },
}

/// Single-register constraint letter.
pub fn register_letter(r: Reg) -> Option<char> {
    Some(match r {
        Reg::Eax => 'a',
        Reg::Ebx => 'b',
        Reg::Ecx => 'c',
        Reg::Edx => 'd',
        Reg::Esi => 'S',
        Reg::Edi => 'D',
        _ => return None,
    })
}

fn dummy_name(chunk: &ChunkAst, taken: &mut BTreeSet<String>) -> String {
    let mut n = 0;
    loop {
        let name = format!("_ric_dummy{n}");
        if !taken.contains(&name) && !chunk.entries().any(|e| e.expr_text.contains(&name)) {
            taken.insert(name.clone());
            return name;
        }
        n += 1;
    }
}

/// Input constraint turned into the matching output constraint.
fn output_constraint(input: &str) -> Option<String> {
    if input.chars().any(|c| c.is_ascii_digit() || c == '[') {
        return None;
    }
    let body: String = input.chars().filter(|c| !matches!(c, '%' | '&' | '=' | '+')).collect();
    Some(format!("={body}"))
}

fn early_constraint(c: &str) -> String {
    let mode = c.chars().next().filter(|m| matches!(m, '=' | '+'));
    let rest = if mode.is_some() { &c[1..] } else { c };
    let alts: Vec<String> = rest
        .split(',')
        .map(|a| if a.contains('&') { a.to_string() } else { format!("&{a}") })
        .collect();
    format!("{}{}", mode.map(String::from).unwrap_or_default(), alts.join(","))
}

fn push_edit(edits: &mut Vec<InterfaceEdit>, e: InterfaceEdit) {
    if !edits.contains(&e) {
        edits.push(e);
    }
}

/// Map each issue to edits; issues with no rule are returned as unresolved.
fn plan(chunk: &ChunkAst, fi: &FormalInterface, issues: &[Issue]) -> (Vec<InterfaceEdit>, Vec<Issue>) {
    let mut edits = Vec::new();
    let mut unresolved = Vec::new();
    let mut dummies = BTreeSet::new();
    let fixed = fi.fixed_assignments();
    let owner = |r: Reg| fixed.iter().find(|(_, fr)| **fr == r).map(|(t, _)| *t);
    let clobber = |edits: &mut Vec<InterfaceEdit>, r: Reg| {
        push_edit(edits, InterfaceEdit::AddClobber { name: r.name() })
    };
    let has_input = |t: TokenId| fi.tokens.get(&t).is_some_and(|i| i.input_bits.is_some());
    for issue in issues {
        let before = edits.len();
        let mut resolved = true;
        match (issue.category, issue.location) {
            (Category::FlagClobbered, _) => push_edit(&mut edits, InterfaceEdit::AddClobber { name: "cc".into() }),
            (Category::UnboundRegisterClobbered, Location::Reg(r)) => clobber(&mut edits, r),
            (Category::UnboundMemoryWrite | Category::UnboundMemoryRead, _) => {
                push_edit(&mut edits, InterfaceEdit::SetMemoryClobber)
            }
            (Category::ReadOnlyInputClobbered, loc) => {
                let t = issue.token.or(loc.token());
                match t.and_then(|t| chunk.entry(t.0 as usize).map(|e| (t, e))) {
                    Some((t, _)) if fi.is_memory_only(t) => push_edit(&mut edits, InterfaceEdit::SetMemoryClobber),
                    Some((t, entry)) => {
                        let constraint = match loc {
                            Location::Reg(r) => register_letter(r).map(|c| format!("={c}")),
                            _ => output_constraint(&entry.constraint),
                        };
                        match constraint {
                            Some(constraint) => push_edit(
                                &mut edits,
                                InterfaceEdit::AddOutput {
                                    constraint,
                                    lvalue: dummy_name(chunk, &mut dummies),
                                    matched_input: Some(t.0),
                                },
                            ),
                            None => resolved = false,
                        }
                    }
                    None => resolved = false,
                }
            }
            (Category::NonWrittenWriteOnlyOutput | Category::UnboundRegisterRead, loc) => {
                let t = match loc {
                    Location::Token(t) => Some(t),
                    Location::Reg(r) => owner(r).filter(|t| fi.b_o.contains(t)),
                    _ => None,
                };
                match t.filter(|t| fi.b_o.contains(t) && !has_input(*t)) {
                    Some(t) if fi.is_memory_only(t) => {
                        push_edit(&mut edits, InterfaceEdit::PromoteToReadWrite { token: t.0 })
                    }
                    Some(t) => {
                        let source = chunk.entry(t.0 as usize).map(|e| e.expr_text.clone()).unwrap_or_default();
                        push_edit(
                            &mut edits,
                            InterfaceEdit::AddInput {
                                constraint: t.0.to_string(),
                                source,
                            },
                        )
                    }
                    None => resolved = false,
                }
            }
            (Category::Unicity, Location::Reg(r)) => match owner(r) {
                Some(t) if fi.b_o.contains(&t) => push_edit(&mut edits, InterfaceEdit::MarkEarlyClobber { token: t.0 }),
                Some(_) => resolved = false,
                None => clobber(&mut edits, r),
            },
            (Category::Unicity, Location::Token(t)) if fi.b_o.contains(&t) => {
                push_edit(&mut edits, InterfaceEdit::MarkEarlyClobber { token: t.0 })
            }
            _ => resolved = false,
        }
        if !resolved {
            debug_assert_eq!(before, edits.len());
            unresolved.push(issue.clone());
        }
    }
    (edits, unresolved)
}

fn entry(constraint: &str, expr: &str, size: u8) -> OperandEntry {
    OperandEntry {
        name: None,
        constraint: constraint.into(),
        expr_text: expr.into(),
        size_bytes: size,
        position: 0,
    }
}

/// Rewrite `%N` operand references (with optional modifier letters).
pub fn renumber_template(template: &str, map: &BTreeMap<u8, u8>) -> String {
    let b = template.as_bytes();
    let mut out = String::with_capacity(template.len());
    let mut i = 0;
    let mut copied = 0;
    while i < b.len() {
        if b[i] != b'%' {
            i += 1;
            continue;
        }
        if b.get(i + 1) == Some(&b'%') {
            i += 2;
            continue;
        }
        let mut j = i + 1;
        while j < b.len() && b[j].is_ascii_alphabetic() {
            j += 1;
        }
        let start = j;
        while j < b.len() && b[j].is_ascii_digit() {
            j += 1;
        }
        if j > start {
            if let Some(new) = template[start..j].parse::<u8>().ok().and_then(|n| map.get(&n)) {
                out.push_str(&template[copied..start]);
                let _ = write!(out, "{new}");
                copied = j;
            }
        }
        i = j.max(i + 1);
    }
    out.push_str(&template[copied..]);
    out
}

/// Apply edits to a copy of the chunk.
pub fn apply_edits(chunk: &ChunkAst, edits: &[InterfaceEdit]) -> (ChunkAst, BTreeMap<u8, u8>) {
    let mut c = chunk.clone();
    let n_out = chunk.outputs.len() as u8;
    let new_outputs = edits
        .iter()
        .filter(|e| matches!(e, InterfaceEdit::AddOutput { .. }))
        .count() as u8;
    let map: BTreeMap<u8, u8> = (0..chunk.entries().count() as u8)
        .map(|p| (p, if p < n_out { p } else { p + new_outputs }))
        .collect();
    let mut next_out = n_out;
    for e in edits {
        match e {
            InterfaceEdit::AddOutput {
                constraint,
                lvalue,
                matched_input,
            } => {
                let size = matched_input
                    .and_then(|p| chunk.entry(p as usize))
                    .map(|e| e.size_bytes)
                    .unwrap_or(4);
                c.outputs.push(entry(constraint, lvalue, size));
                if let Some(p) = matched_input {
                    let idx = *p as usize - chunk.outputs.len();
                    c.inputs[idx].constraint = next_out.to_string();
                }
                next_out += 1;
            }
            InterfaceEdit::AddInput { constraint, source } => {
                let size = constraint
                    .parse::<usize>()
                    .ok()
                    .and_then(|p| chunk.entry(p))
                    .map(|e| e.size_bytes)
                    .unwrap_or(4);
                c.inputs.push(entry(constraint, source, size));
            }
            InterfaceEdit::AddClobber { name } => c.clobbers.push(name.clone()),
            InterfaceEdit::SetMemoryClobber => {
                if !c.clobbers.iter().any(|x| x.trim() == "memory") {
                    c.clobbers.push("memory".into());
                }
            }
            InterfaceEdit::MarkEarlyClobber { token } => {
                let o = &mut c.outputs[*token as usize];
                o.constraint = early_constraint(&o.constraint);
            }
            InterfaceEdit::PromoteToReadWrite { token } => {
                let o = &mut c.outputs[*token as usize];
                o.constraint = o.constraint.replacen('=', "+", 1);
            }
        }
    }
    c.template = renumber_template(&chunk.template, &map);
    c.renumber();
    c.layout = None;
    c.raw = None;
    (c, map)
}

pub fn synthesize_patches(chunk: &ChunkAst, issues: &[Issue]) -> PatchResult {
    let Ok(fi) = derive_interface(chunk) else {
        return PatchResult {
            patched: chunk.clone(),
            edits: Vec::new(),
            unresolved: issues.to_vec(),
            renumber_map: (0..chunk.entries().count() as u8).map(|p| (p, p)).collect(),
            original: chunk.clone(),
        };
    };
    let (mut edits, mut unresolved) = plan(chunk, &fi, issues);
    let (mut patched, mut renumber_map) = apply_edits(chunk, &edits);
    if !satisfiable(&patched) {
        let mut kept = Vec::new();
        for e in edits {
            kept.push(e);
            if !satisfiable(&apply_edits(chunk, &kept).0) {
                kept.pop();
            }
        }
        edits = kept;
        (patched, renumber_map) = apply_edits(chunk, &edits);
        let remaining: Vec<_> = check_chunk(&patched).issues.iter().map(|i| (i.category, i.location)).collect();
        for i in issues {
            if remaining.contains(&(i.category, i.location)) && !unresolved.contains(i) {
                unresolved.push(i.clone());
            }
        }
    }
    PatchResult {
        patched,
        edits,
        unresolved,
        renumber_map,
        original: chunk.clone(),
    }
}

/// Check a chunk and patch whatever it reports.
pub fn patch_chunk(chunk: &ChunkAst) -> (Report, PatchResult) {
    let report = check_chunk(chunk);
    let pr = synthesize_patches(chunk, &report.issues);
    (report, pr)
}

fn satisfiable(c: &ChunkAst) -> bool {
    derive_interface(c)
        .ok()
        .and_then(|fi| enumerate_assignments(&fi, 1).ok())
        .is_some_and(|e| !e.assignments.is_empty())
}

pub fn verify_patch(pr: &PatchResult) -> PatchVerification {
    let report = check_chunk(&pr.patched);
    let framing_ok = !matches!(report.verdict, Verdict::Error | Verdict::OutOfScope)
        && report
            .issues
            .iter()
            .all(|i| !i.category.is_frame_write() && !i.category.is_frame_read());
    let interface_satisfiable = satisfiable(&pr.patched);
    PatchVerification {
        framing_ok,
        fully_compliant: report.verdict == Verdict::Compliant,
        interface_satisfiable,
    }
}

/// An edited statement: entries renumbered through `renumber_map` (dropped
/// entries are absent), the clobbers at `kept_clobbers` retained in order,
/// and new entries and clobbers appended to their sections.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Rewrite {
    pub original: ChunkAst,
    pub patched: ChunkAst,
    pub renumber_map: BTreeMap<u8, u8>,
    pub kept_clobbers: Vec<usize>,
}

impl Rewrite {
    pub fn is_identity(&self) -> bool {
        self.original.same_structure(&self.patched)
    }

    /// `self` followed by `next`, which must start from `self.patched`.
    pub fn then(&self, next: &Rewrite) -> Rewrite {
        Rewrite {
            original: self.original.clone(),
            patched: next.patched.clone(),
            renumber_map: self
                .renumber_map
                .iter()
                .filter_map(|(o, m)| next.renumber_map.get(m).map(|n| (*o, *n)))
                .collect(),
            kept_clobbers: next
                .kept_clobbers
                .iter()
                .filter_map(|k| self.kept_clobbers.get(*k).copied())
                .collect(),
        }
    }
}

impl PatchResult {
    pub fn rewrite(&self) -> Rewrite {
        Rewrite {
            original: self.original.clone(),
            patched: self.patched.clone(),
            renumber_map: self.renumber_map.clone(),
            kept_clobbers: (0..self.original.clobbers.len()).collect(),
        }
    }
}

/// Splices deleting the items of one comma-separated section.
fn removals(items: &[Range<usize>], removed: &BTreeSet<usize>, out: &mut Vec<(Range<usize>, String)>) {
    let Some(first_kept) = (0..items.len()).find(|i| !removed.contains(i)) else {
        if let (Some(f), Some(l)) = (items.first(), items.last()) {
            out.push((f.start..l.end, String::new()));
        }
        return;
    };
    for &i in removed {
        if i < first_kept {
            out.push((items[i].start..items[i + 1].start, String::new()));
        } else {
            out.push((items[i - 1].end..items[i].end, String::new()));
        }
    }
}

/// Byte splices on the statement text realizing a rewrite.
fn statement_splices(rw: &Rewrite) -> Option<Vec<(Range<usize>, String)>> {
    let c = &rw.original;
    let layout = c.layout.as_ref()?;
    let raw = c.raw.as_ref()?;
    let mut splices: Vec<(Range<usize>, String)> = Vec::new();
    for r in &layout.template_literals {
        let text = &raw[r.clone()];
        let new = renumber_template(text, &rw.renumber_map);
        if new != text {
            splices.push((r.clone(), new));
        }
    }
    let n_out = c.outputs.len();
    let mut removed: [BTreeSet<usize>; 3] = Default::default();
    for (pos, old) in c.entries().enumerate() {
        let Some(newpos) = rw.renumber_map.get(&(pos as u8)) else {
            if pos < n_out {
                removed[0].insert(pos);
            } else {
                removed[1].insert(pos - n_out);
            }
            continue;
        };
        let new = rw.patched.entry(*newpos as usize)?;
        if old.constraint != new.constraint {
            let (_, lit) = layout.entries.get(pos)?;
            splices.push((lit.clone(), c_string_literal(&new.constraint)));
        }
    }
    removed[2] = (0..c.clobbers.len()).filter(|i| !rw.kept_clobbers.contains(i)).collect();
    let kept_out = n_out - removed[0].len();
    let kept_in = c.inputs.len() - removed[1].len();
    let render = |e: &OperandEntry| format!("{} ({})", c_string_literal(&e.constraint), e.expr_text);
    let additions: [Vec<String>; 3] = [
        rw.patched.outputs[kept_out..].iter().map(render).collect(),
        rw.patched.inputs[kept_in..].iter().map(render).collect(),
        rw.patched.clobbers[rw.kept_clobbers.len()..]
            .iter()
            .map(|s| c_string_literal(s))
            .collect(),
    ];
    let ranges: [Vec<Range<usize>>; 3] = [
        layout.entries[..n_out].iter().map(|(r, _)| r.clone()).collect(),
        layout.entries[n_out..].iter().map(|(r, _)| r.clone()).collect(),
        layout.clobbers.clone(),
    ];
    let mut tail = String::new();
    let missing_from = layout.colons.len();
    let last_needed = (0..3).rev().find(|k| !additions[*k].is_empty());
    for k in 0..3 {
        let items = &additions[k];
        if k >= missing_from {
            if last_needed.is_some_and(|m| k <= m) {
                tail.push_str(" :");
                if !items.is_empty() {
                    let _ = write!(tail, " {}", items.join(", "));
                }
            }
            continue;
        }
        let all_removed = !ranges[k].is_empty() && removed[k].len() == ranges[k].len();
        if all_removed && !items.is_empty() {
            let r = ranges[k][0].start..ranges[k][ranges[k].len() - 1].end;
            splices.push((r, items.join(", ")));
            continue;
        }
        removals(&ranges[k], &removed[k], &mut splices);
        if items.is_empty() {
            continue;
        }
        match ranges[k].last() {
            Some(r) => splices.push((r.end..r.end, format!(", {}", items.join(", ")))),
            None => {
                let at = layout.colons[k] + 1;
                let sep = if k + 1 < layout.colons.len() { " " } else { "" };
                splices.push((at..at, format!(" {}{sep}", items.join(", "))));
            }
        }
    }
    if !tail.is_empty() {
        splices.push((layout.close_paren..layout.close_paren, tail));
    }
    splices.sort_by_key(|(r, _)| (r.start, r.end));
    Some(splices)
}

/// The rewritten statement text, spliced into the original.
pub fn rewritten_statement(rw: &Rewrite) -> Option<String> {
    let raw = rw.original.raw.as_ref()?;
    let mut out = String::new();
    let mut at = 0;
    for (r, s) in statement_splices(rw)? {
        out.push_str(&raw[at..r.start]);
        out.push_str(&s);
        at = r.end;
    }
    out.push_str(&raw[at..]);
    Some(out)
}

/// Apply several statement rewrites to one source text.
pub fn apply_to_source(source: &str, rewrites: &[Rewrite]) -> Result<String, PatchError> {
    let mut ordered: Vec<&Rewrite> = rewrites.iter().filter(|r| !r.is_identity()).collect();
    ordered.sort_by_key(|r| r.original.span.byte_start);
    let mut out = String::with_capacity(source.len());
    let mut at = 0;
    for rw in ordered {
        let span = &rw.original.span;
        let no_layout = || PatchError::NoLayout {
            file: span.file.clone(),
            start: span.byte_start,
        };
        let raw = rw.original.raw.as_deref().ok_or_else(no_layout)?;
        if span.byte_start < at || source.get(span.byte_start..span.byte_end) != Some(raw) {
            return Err(PatchError::SpanStale {
                file: span.file.clone(),
                start: span.byte_start,
            });
        }
        let new = rewritten_statement(rw).ok_or_else(no_layout)?;
        out.push_str(&source[at..span.byte_start]);
        out.push_str(&new);
        at = span.byte_end;
    }
    out.push_str(&source[at..]);
    Ok(out)
}

pub fn render_diff(original_source: &str, pr: &PatchResult) -> Result<String, PatchError> {
    let new = apply_to_source(original_source, &[pr.rewrite()])?;
    Ok(unified_diff(&pr.original.span.file, original_source, &new))
}

const CONTEXT: usize = 3;

/// Line diff of two texts that differ in a few localized regions.
pub fn unified_diff(path: &str, old: &str, new: &str) -> String {
    if old == new {
        return String::new();
    }
    let a: Vec<&str> = old.split_inclusive('\n').collect();
    let b: Vec<&str> = new.split_inclusive('\n').collect();
    let regions = changed_regions(&a, &b);
    let mut out = format!("--- a/{path}\n+++ b/{path}\n");
    let mut i = 0;
    while i < regions.len() {
        let mut j = i;
        while j + 1 < regions.len() && regions[j + 1].0.start - regions[j].0.end <= 2 * CONTEXT {
            j += 1;
        }
        let first = &regions[i];
        let last = &regions[j];
        let lead = first.0.start.min(CONTEXT);
        let a_start = first.0.start - lead;
        let b_start = first.1.start - lead;
        let trail = (a.len() - last.0.end).min(CONTEXT);
        let a_end = last.0.end + trail;
        let b_end = last.1.end + trail;
        let _ = writeln!(
            out,
            "@@ -{} +{} @@",
            hunk_range(a_start, a_end - a_start),
            hunk_range(b_start, b_end - b_start)
        );
        let mut pa = a_start;
        for (ra, rb) in &regions[i..=j] {
            for l in &a[pa..ra.start] {
                line(&mut out, ' ', l);
            }
            for l in &a[ra.clone()] {
                line(&mut out, '-', l);
            }
            for l in &b[rb.clone()] {
                line(&mut out, '+', l);
            }
            pa = ra.end;
        }
        for l in &a[pa..a_end] {
            line(&mut out, ' ', l);
        }
        i = j + 1;
    }
    out
}

fn hunk_range(start: usize, len: usize) -> String {
    match len {
        0 => format!("{start},0"),
        1 => format!("{}", start + 1),
        n => format!("{},{n}", start + 1),
    }
}

fn line(out: &mut String, tag: char, l: &str) {
    out.push(tag);
    out.push_str(l);
    if !l.ends_with('\n') {
        out.push_str("\n\\ No newline at end of file\n");
    }
}

/// Pairs of differing line ranges from a shortest edit script (Myers).
fn changed_regions(a: &[&str], b: &[&str]) -> Vec<(Range<usize>, Range<usize>)> {
    let (n, m) = (a.len() as isize, b.len() as isize);
    let max = (n + m) as usize;
    let off = max as isize + 1;
    let mut v = alloc::vec![0isize; 2 * max + 3];
    let mut trace: Vec<Vec<isize>> = Vec::new();
    'search: for d in 0..=max as isize {
        trace.push(v.clone());
        let mut k = -d;
        while k <= d {
            let ki = (k + off) as usize;
            let mut x = if k == -d || (k != d && v[ki - 1] < v[ki + 1]) {
                v[ki + 1]
            } else {
                v[ki - 1] + 1
            };
            let mut y = x - k;
            while x < n && y < m && a[x as usize] == b[y as usize] {
                x += 1;
                y += 1;
            }
            v[ki] = x;
            if x >= n && y >= m {
                break 'search;
            }
            k += 2;
        }
    }
    // Walk back, collecting matched line pairs.
    let mut matched: Vec<(usize, usize)> = Vec::new();
    let (mut x, mut y) = (n, m);
    for (d, v) in trace.iter().enumerate().rev() {
        let d = d as isize;
        let k = x - y;
        let ki = (k + off) as usize;
        let prev_k = if k == -d || (k != d && v[ki - 1] < v[ki + 1]) { k + 1 } else { k - 1 };
        let prev_x = if d == 0 { 0 } else { v[(prev_k + off) as usize] };
        let prev_y = prev_x - prev_k;
        while x > prev_x.max(0) && y > prev_y.max(0) && x - y == k && a[(x - 1) as usize] == b[(y - 1) as usize] {
            x -= 1;
            y -= 1;
            matched.push((x as usize, y as usize));
        }
        if d > 0 {
            x = prev_x;
            y = prev_y;
        }
    }
    matched.reverse();
    let mut regions = Vec::new();
    let (mut i, mut j) = (0, 0);
    for (mi, mj) in matched.into_iter().chain([(a.len(), b.len())]) {
        if mi > i || mj > j {
            regions.push((i..mi, j..mj));
        }
        i = mi + 1;
        j = mj + 1;
    }
    regions
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::extraction::extract_chunks;

    fn motivating_source() -> String {
        String::from(
            "int cas(long long *ptr, long long old, long long new) {\n\
             \tchar ok;\n\
             \t/* size: 8,1 | 8,4,4,4,4 */\n\
             \t__asm__ __volatile__(\"xchg %%ebx,%6;\"\n\
             \t\t\"lock; cmpxchg8b %0; setz %1;\"\n\
             \t\t\"xchg %%ebx,%6\"\n\
             \t\t: \"=m\" (*ptr), \"=a\" (ok)\n\
             \t\t: \"m\" (*ptr), \"d\" ((unsigned)(old >> 32)), \"a\" ((unsigned)old),\n\
             \t\t  \"c\" ((unsigned)(new >> 32)), \"D\" ((unsigned)new)\n\
             \t\t: \"memory\");\n\
             \treturn ok;\n\
             }\n",
        )
    }

    fn single(src: &str) -> ChunkAst {
        let (mut chunks, errors) = extract_chunks(src, "t.c");
        assert!(errors.is_empty(), "{errors:?}");
        assert_eq!(chunks.len(), 1);
        chunks.remove(0)
    }

    #[test]
    fn motivating_patch() {
        let chunk = single(&motivating_source());
        let (report, pr) = patch_chunk(&chunk);
        assert_eq!(report.issues.len(), 3);
        assert!(pr.unresolved.is_empty());
        assert!(pr.edits.contains(&InterfaceEdit::AddOutput {
            constraint: "=d".into(),
            lvalue: "_ric_dummy0".into(),
            matched_input: Some(3),
        }));
        assert!(pr.edits.contains(&InterfaceEdit::AddClobber { name: "ebx".into() }));
        assert_eq!(pr.patched.outputs[2].constraint, "=d");
        assert_eq!(pr.patched.inputs[1].constraint, "2");
        assert_eq!(pr.patched.inputs[1].position, 4);
        assert_eq!(pr.renumber_map[&6], 7);
        assert!(pr.patched.template.contains("xchg %%ebx,%7"));
        let v = verify_patch(&pr);
        assert!(v.framing_ok && v.fully_compliant && v.interface_satisfiable, "{v:?}");
    }

    #[test]
    fn motivating_diff() {
        let src = motivating_source();
        let chunk = single(&src);
        let (_, pr) = patch_chunk(&chunk);
        let diff = render_diff(&src, &pr).unwrap();
        assert!(diff.starts_with("--- a/t.c\n+++ b/t.c\n@@ "), "{diff}");
        assert!(diff.contains("+\t\t: \"=m\" (*ptr), \"=a\" (ok), \"=d\" (_ric_dummy0)\n"), "{diff}");
        assert!(diff.contains("\"2\" ((unsigned)(old >> 32))"), "{diff}");
        assert!(diff.contains("+\t\t\"xchg %%ebx,%7\"\n"), "{diff}");
        let patched_src = apply_to_source(&src, &[pr.rewrite()]).unwrap();
        let again = single(&patched_src);
        assert!(again.same_structure(&pr.patched), "{patched_src}");
    }

    #[test]
    fn cc_appended_to_tail() {
        let src = "void f(int x) {\n  __asm__(\"incl %0\" : \"+r\"(x));\n}\n";
        let chunk = single(src);
        let (_, pr) = patch_chunk(&chunk);
        assert_eq!(pr.edits, [InterfaceEdit::AddClobber { name: "cc".into() }]);
        let diff = render_diff(src, &pr).unwrap();
        assert_eq!(
            diff,
            "--- a/t.c\n+++ b/t.c\n@@ -1,3 +1,3 @@\n void f(int x) {\n-  __asm__(\"incl %0\" : \"+r\"(x));\n+  __asm__(\"incl %0\" : \"+r\"(x) : : \"cc\");\n }\n"
        );
    }

    #[test]
    fn empty_edit_list_gives_empty_diff() {
        let src = "void f(int x) {\n  __asm__(\"incl %0\" : \"+r\"(x) : : \"cc\");\n}\n";
        let chunk = single(src);
        let (report, pr) = patch_chunk(&chunk);
        assert_eq!(report.verdict, Verdict::Compliant);
        assert!(pr.edits.is_empty());
        assert_eq!(render_diff(src, &pr).unwrap(), "");
        let v = verify_patch(&pr);
        assert!(v.framing_ok && v.fully_compliant && v.interface_satisfiable);
    }

    #[test]
    fn stale_span() {
        let src = "void f(int x) {\n  __asm__(\"incl %0\" : \"+r\"(x));\n}\n";
        let (_, pr) = patch_chunk(&single(src));
        let changed = src.replace("incl", "decl");
        assert!(matches!(render_diff(&changed, &pr), Err(PatchError::SpanStale { .. })));
    }

    #[test]
    fn unbound_read_is_unresolved() {
        let c = ChunkAst::new("movl %%edx, %0").output("=r", "x", 4);
        let (_, pr) = patch_chunk(&c);
        assert!(pr.edits.is_empty());
        assert_eq!(pr.unresolved.len(), 1);
        assert_eq!(pr.unresolved[0].category, Category::UnboundRegisterRead);
    }

    #[test]
    fn clobber_emptying_a_domain() {
        let c = ChunkAst::new("movl %1, %0").output("=r", "y", 4).input("b", "x", 4);
        let (patched, map) = apply_edits(&c, &[InterfaceEdit::AddClobber { name: "ebx".into() }]);
        let pr = PatchResult {
            patched,
            edits: alloc::vec![InterfaceEdit::AddClobber { name: "ebx".into() }],
            unresolved: Vec::new(),
            renumber_map: map,
            original: c,
        };
        assert!(!verify_patch(&pr).interface_satisfiable);
    }

    #[test]
    fn non_written_output_gets_input() {
        let c = ChunkAst::new("").output("=r", "x", 4);
        let (_, pr) = patch_chunk(&c);
        assert_eq!(
            pr.edits,
            [InterfaceEdit::AddInput {
                constraint: "0".into(),
                source: "x".into()
            }]
        );
        assert!(verify_patch(&pr).fully_compliant);
    }

    #[test]
    fn written_register_input() {
        let c = ChunkAst::new("shrl $1, %0").input("r", "x", 4).clobber("cc");
        let (_, pr) = patch_chunk(&c);
        assert_eq!(pr.patched.outputs[0].constraint, "=r");
        assert_eq!(pr.patched.inputs[0].constraint, "0");
        assert_eq!(pr.patched.template, "shrl $1, %1");
        assert!(verify_patch(&pr).fully_compliant);
    }

    #[test]
    fn template_renumbering() {
        let map: BTreeMap<u8, u8> = [(0, 0), (1, 2), (2, 3)].into();
        assert_eq!(renumber_template("movb %b1, %h2; %%eax %0 %[x]", &map), "movb %b2, %h3; %%eax %0 %[x]");
        assert_eq!(renumber_template("%%1", &map), "%%1");
    }

    #[test]
    fn diff_hunks() {
        let old = "a\nb\nc\nd\ne\nf\ng\nh\ni\nj\nk\nl\nm\n";
        let new = "a\nB\nc\nd\ne\nf\ng\nh\ni\nj\nk\nL\nm\n";
        let d = unified_diff("x", old, new);
        assert_eq!(d.matches("@@ -").count(), 2, "{d}");
        assert!(d.contains("@@ -1,5 +1,5 @@\n a\n-b\n+B\n c\n d\n e\n"), "{d}");
    }
}
