//! Interface refinement: dead inputs, dead clobbers, undue `"memory"`, and
//! `"memory"` replaced by `"m"` entries over resolved pointer accesses.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::Serialize;

use crate::arch::{ClobberName, Reg};
use crate::checker::resolve::split_offset;
use crate::checker::{
    check_chunk, exit_seeds, liveness, prepare, propagate, Prepared, SymbolicStates, Verdict,
};
use crate::extraction::{ChunkAst, OperandEntry};
use crate::interface::{alias_expr, FormalInterface};
use crate::ir::{Expr, Location, Program, Stmt, TokenId};
use crate::patcher::{synthesize_patches, verify_patch, Rewrite};

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum MemBase {
    Token(TokenId),
    Symbol(String),
    Unresolved,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum AccessKind {
    Load,
    Store,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct MemAccess {
    pub point: usize,
    pub kind: AccessKind,
    pub base: MemBase,
    pub offset: i64,
    pub size: u32,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum EntryMode {
    In,
    Out,
    Inout,
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub struct MemoryEntry {
    pub base: MemBase,
    pub mode: EntryMode,
    pub offset: i64,
    pub span: u32,
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RefinementEdit {
    DropInput { position: u8 },
    DropClobber { name: String },
    DropMemoryKeyword,
    MemoryToEntries { entries: Vec<MemoryEntry> },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "reason", rename_all = "snake_case")]
pub enum MemoryFailure {
    Unresolved { point: usize },
    NoAccess,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RefineOptions {
    pub inputs: bool,
    pub clobbers: bool,
    pub memory: bool,
}

impl Default for RefineOptions {
    fn default() -> Self {
        RefineOptions {
            inputs: true,
            clobbers: true,
            memory: true,
        }
    }
}

fn pure_input(fi: &FormalInterface, t: TokenId) -> bool {
    fi.is_effective_input(t) && !fi.b_o.contains(&t)
}

fn classify_base(base: &Expr, fi: &FormalInterface, owner: &BTreeMap<Reg, TokenId>) -> MemBase {
    match base {
        Expr::Var(Location::TokenAddr(t), _) => MemBase::Token(*t),
        Expr::Var(Location::Token(t), 32) if pure_input(fi, *t) && !fi.memory_capable(*t) => MemBase::Token(*t),
        Expr::Var(Location::Reg(r), _) => match owner.get(r) {
            Some(t) => MemBase::Token(*t),
            None => MemBase::Unresolved,
        },
        _ => MemBase::Unresolved,
    }
}

/// Every load and store of `p`, with its base when the address is
/// `token + c` or `symbol + c` in terms of entry values.
pub fn memory_access_analysis(p: &Program, fi: &FormalInterface) -> Vec<MemAccess> {
    let states = SymbolicStates::new(p);
    let owner: BTreeMap<Reg, TokenId> = fi
        .fixed_assignments()
        .into_iter()
        .filter(|(t, _)| pure_input(fi, *t))
        .map(|(t, r)| (r, t))
        .collect();
    let mut out = Vec::new();
    let mut record = |i: usize, kind: AccessKind, addr: &Expr, bytes: u32| {
        let (base, offset) = match states.eval(i, addr) {
            Some(a) => {
                let (base, off) = split_offset(&a);
                match base {
                    Expr::Symbol(k) => (MemBase::Symbol(p.symbols[k as usize].clone()), off),
                    b => match classify_base(&b, fi, &owner) {
                        MemBase::Unresolved => (MemBase::Unresolved, 0),
                        m => (m, off),
                    },
                }
            }
            None => (MemBase::Unresolved, 0),
        };
        out.push(MemAccess {
            point: i,
            kind,
            base,
            offset,
            size: bytes,
        });
    };
    for (i, s) in p.stmts.iter().enumerate() {
        for e in s.exprs() {
            e.visit(&mut |n| {
                if let Expr::Load { addr, bytes } = n {
                    record(i, AccessKind::Load, addr, *bytes);
                }
            });
        }
        if let Stmt::Store { addr, bytes, .. } = s {
            record(i, AccessKind::Store, addr, *bytes);
        }
    }
    out
}

/// One entry per maximal contiguous run of accessed bytes of each base.
pub fn memory_to_m_entries(accesses: &[MemAccess]) -> Result<RefinementEdit, MemoryFailure> {
    if let Some(a) = accesses.iter().find(|a| a.base == MemBase::Unresolved) {
        return Err(MemoryFailure::Unresolved { point: a.point });
    }
    if accesses.is_empty() {
        return Err(MemoryFailure::NoAccess);
    }
    let mut by_base: BTreeMap<&MemBase, Vec<&MemAccess>> = BTreeMap::new();
    for a in accesses {
        by_base.entry(&a.base).or_default().push(a);
    }
    let mut entries = Vec::new();
    for (base, mut list) in by_base {
        let loads = list.iter().any(|a| a.kind == AccessKind::Load);
        let stores = list.iter().any(|a| a.kind == AccessKind::Store);
        let mode = match (loads, stores) {
            (true, true) => EntryMode::Inout,
            (false, true) => EntryMode::Out,
            _ => EntryMode::In,
        };
        list.sort_by_key(|a| a.offset);
        let mut runs: Vec<(i64, i64)> = Vec::new();
        for a in list {
            let (lo, hi) = (a.offset, a.offset + a.size as i64);
            match runs.last_mut() {
                Some(r) if lo <= r.1 => r.1 = r.1.max(hi),
                _ => runs.push((lo, hi)),
            }
        }
        for (lo, hi) in runs {
            entries.push(MemoryEntry {
                base: base.clone(),
                mode,
                offset: lo,
                span: (hi - lo) as u32,
            });
        }
    }
    Ok(RefinementEdit::MemoryToEntries { entries })
}

/// Positions named in the template (`%N` or `%[name]`).
pub fn referenced_positions(chunk: &ChunkAst) -> BTreeSet<u8> {
    let mut out = BTreeSet::new();
    let b = chunk.template.as_bytes();
    let mut i = 0;
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
        if b.get(j) == Some(&b'[') {
            if let Some(end) = chunk.template[j..].find(']') {
                if let Some(p) = chunk.position_of_name(&chunk.template[j + 1..j + end]) {
                    out.insert(p as u8);
                }
                j += end;
            }
        } else {
            let start = j;
            while j < b.len() && b[j].is_ascii_digit() {
                j += 1;
            }
            if let Ok(n) = chunk.template[start..j].parse::<u8>() {
                out.insert(n);
            }
        }
        i = j.max(i + 1);
    }
    out
}

/// Accesses not already covered by a memory entry.
fn undeclared_accesses(prep: &Prepared) -> Vec<MemAccess> {
    memory_access_analysis(&prep.resolved.program, &prep.fi)
}

/// Candidate refinements of a compliant chunk.
pub fn refine_interface(prep: &Prepared, chunk: &ChunkAst, opts: &RefineOptions) -> Vec<RefinementEdit> {
    let fi = &prep.fi;
    let r = &prep.resolved;
    let fw = propagate(&r.program, true);
    let seeds = exit_seeds(r, fi);
    let live = liveness(&r.program, fi, &seeds, true);
    let mut edits = Vec::new();
    if opts.inputs {
        let referenced = referenced_positions(chunk);
        let pointers: BTreeSet<TokenId> = fi.aliases.values().map(|a| a.pointer).collect();
        let paired: BTreeSet<TokenId> = fi.commutative.iter().flat_map(|(a, b)| [*a, *b]).collect();
        for t in fi.b_i.iter().copied().filter(|t| pure_input(fi, *t)) {
            let dead = [r.token_location(t), Location::TokenAddr(t)]
                .iter()
                .all(|l| live.entry().get(l).copied().unwrap_or(0) == 0);
            let tied = fi.tokens[&t].columns.iter().any(|c| c.tied.is_some());
            if dead && !tied && !referenced.contains(&t.0) && !pointers.contains(&t) && !paired.contains(&t) {
                edits.push(RefinementEdit::DropInput { position: t.0 });
            }
        }
    }
    if opts.clobbers {
        let flags_written = fw.written.keys().any(|l| matches!(l, Location::Flag(_)));
        for c in &chunk.clobbers {
            let dead = match ClobberName::parse(c) {
                Some(ClobberName::Reg(reg)) => !fw.written.contains_key(&Location::Reg(reg)),
                Some(ClobberName::Flags) => !flags_written,
                _ => false,
            };
            if dead {
                edits.push(RefinementEdit::DropClobber { name: c.clone() });
            }
        }
    }
    if opts.memory && !fi.f {
        match memory_to_m_entries(&undeclared_accesses(prep)) {
            Err(MemoryFailure::NoAccess) => edits.push(RefinementEdit::DropMemoryKeyword),
            Ok(m) => {
                edits.push(m);
                edits.push(RefinementEdit::DropMemoryKeyword);
            }
            Err(MemoryFailure::Unresolved { .. }) => {}
        }
    }
    edits
}

fn entry(constraint: &str, expr: String, span: u32) -> OperandEntry {
    let size = [8u32, 4, 2, 1].into_iter().find(|s| *s <= span).unwrap_or(1);
    OperandEntry {
        name: None,
        constraint: constraint.into(),
        expr_text: expr,
        size_bytes: size as u8,
        position: 0,
    }
}

/// Apply refinement edits. Symbol-based entries are not applied.
pub fn apply_refinements(chunk: &ChunkAst, edits: &[RefinementEdit]) -> Rewrite {
    let n_out = chunk.outputs.len();
    let mut dropped_inputs = BTreeSet::new();
    let mut dropped_clobbers = BTreeSet::new();
    let mut new_outputs = Vec::new();
    let mut new_inputs = Vec::new();
    for e in edits {
        match e {
            RefinementEdit::DropInput { position } => {
                dropped_inputs.insert(*position as usize);
            }
            RefinementEdit::DropClobber { name } => {
                if let Some(i) = (0..chunk.clobbers.len()).find(|i| chunk.clobbers[*i] == *name && !dropped_clobbers.contains(i)) {
                    dropped_clobbers.insert(i);
                }
            }
            RefinementEdit::DropMemoryKeyword => {
                for (i, c) in chunk.clobbers.iter().enumerate() {
                    if c.trim() == "memory" {
                        dropped_clobbers.insert(i);
                    }
                }
            }
            RefinementEdit::MemoryToEntries { entries } => {
                for m in entries {
                    let MemBase::Token(t) = m.base else { continue };
                    let Some(p) = chunk.entry(t.0 as usize) else { continue };
                    let expr = alias_expr(&p.expr_text, m.offset, m.span, m.mode != EntryMode::In);
                    match m.mode {
                        EntryMode::In => new_inputs.push(entry("m", expr, m.span)),
                        EntryMode::Out => new_outputs.push(entry("=m", expr, m.span)),
                        EntryMode::Inout => new_outputs.push(entry("+m", expr, m.span)),
                    }
                }
            }
        }
    }
    let mut c = chunk.clone();
    let added_out = new_outputs.len();
    c.outputs.extend(new_outputs);
    c.inputs = chunk
        .inputs
        .iter()
        .enumerate()
        .filter(|(i, _)| !dropped_inputs.contains(&(n_out + i)))
        .map(|(_, e)| e.clone())
        .chain(new_inputs)
        .collect();
    let kept_clobbers: Vec<usize> = (0..chunk.clobbers.len()).filter(|i| !dropped_clobbers.contains(i)).collect();
    c.clobbers = kept_clobbers.iter().map(|i| chunk.clobbers[*i].clone()).collect();
    let mut renumber_map = BTreeMap::new();
    let mut next = n_out + added_out;
    for p in 0..chunk.entries().count() {
        if p < n_out {
            renumber_map.insert(p as u8, p as u8);
        } else if !dropped_inputs.contains(&p) {
            renumber_map.insert(p as u8, next as u8);
            next += 1;
        }
    }
    c.template = crate::patcher::renumber_template(&chunk.template, &renumber_map);
    c.renumber();
    c.layout = None;
    c.raw = None;
    Rewrite {
        original: chunk.clone(),
        patched: c,
        renumber_map,
        kept_clobbers,
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Refinement {
    /// Applied edits, each re-verified compliant.
    pub edits: Vec<RefinementEdit>,
    /// Edits that are reported but not applied.
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub suggestions: Vec<RefinementEdit>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
    /// From the original chunk to the refined one, including any frame patch.
    #[serde(skip)]
    pub rewrite: Option<Rewrite>,
}

impl Refinement {
    fn none(note: impl Into<String>) -> Self {
        Refinement {
            edits: Vec::new(),
            suggestions: Vec::new(),
            note: Some(note.into()),
            rewrite: None,
        }
    }

    pub fn refined(&self) -> Option<&ChunkAst> {
        self.rewrite.as_ref().map(|r| &r.patched)
    }
}

fn identity(chunk: &ChunkAst) -> Rewrite {
    Rewrite {
        original: chunk.clone(),
        patched: chunk.clone(),
        renumber_map: (0..chunk.entries().count() as u8).map(|p| (p, p)).collect(),
        kept_clobbers: (0..chunk.clobbers.len()).collect(),
    }
}

/// Refine a compliant chunk, or a chunk whose issues patch cleanly.
/// Edits are kept only while the result stays compliant.
pub fn refine_chunk(chunk: &ChunkAst, opts: &RefineOptions) -> Refinement {
    let report = check_chunk(chunk);
    let start = match report.verdict {
        Verdict::Compliant => identity(chunk),
        Verdict::Issues => {
            let pr = synthesize_patches(chunk, &report.issues);
            if !pr.unresolved.is_empty() || !verify_patch(&pr).fully_compliant {
                return Refinement::none("issues without a complete patch");
            }
            pr.rewrite()
        }
        v => return Refinement::none(format!("verdict {v}")),
    };
    let base = start.patched.clone();
    let prep = match prepare(&base) {
        Ok(p) => p,
        Err(stop) => return Refinement::none(stop.message),
    };
    let candidates = refine_interface(&prep, &base, opts);
    let mut units: Vec<Vec<RefinementEdit>> = Vec::new();
    let mut suggestions = Vec::new();
    let mut iter = candidates.into_iter().peekable();
    while let Some(e) = iter.next() {
        if let RefinementEdit::MemoryToEntries { entries } = &e {
            let symbolic = entries.iter().any(|m| matches!(m.base, MemBase::Symbol(_)));
            let drop = iter.next_if_eq(&RefinementEdit::DropMemoryKeyword);
            if symbolic {
                suggestions.push(e);
                continue;
            }
            units.push(core::iter::once(e).chain(drop).collect());
        } else {
            units.push(alloc::vec![e]);
        }
    }
    let mut accepted: Vec<RefinementEdit> = Vec::new();
    let mut rejected = Vec::new();
    for unit in units {
        let trial: Vec<RefinementEdit> = accepted.iter().chain(&unit).cloned().collect();
        if check_chunk(&apply_refinements(&base, &trial).patched).verdict == Verdict::Compliant {
            accepted = trial;
        } else {
            rejected.extend(unit);
        }
    }
    let note = (!rejected.is_empty()).then(|| {
        let names: Vec<String> = rejected.iter().map(|e| format!("{e:?}")).collect();
        format!("not applied, re-check failed: {}", names.join(", "))
    });
    let rewrite = start.then(&apply_refinements(&base, &accepted));
    Refinement {
        edits: accepted,
        suggestions,
        note,
        rewrite: Some(rewrite),
    }
}

/// Short human-readable form of an edit.
pub fn describe(e: &RefinementEdit) -> String {
    match e {
        RefinementEdit::DropInput { position } => format!("drop input %{position}"),
        RefinementEdit::DropClobber { name } => format!("drop clobber \"{name}\""),
        RefinementEdit::DropMemoryKeyword => "drop \"memory\"".to_string(),
        RefinementEdit::MemoryToEntries { entries } => {
            let parts: Vec<String> = entries
                .iter()
                .map(|m| {
                    let base = match &m.base {
                        MemBase::Token(t) => t.to_string(),
                        MemBase::Symbol(s) => s.clone(),
                        MemBase::Unresolved => "?".into(),
                    };
                    let mode = match m.mode {
                        EntryMode::In => "m",
                        EntryMode::Out => "=m",
                        EntryMode::Inout => "+m",
                    };
                    format!("\"{mode}\" {} bytes at {base}{:+}", m.span, m.offset)
                })
                .collect();
            format!("memory as entries: {}", parts.join(", "))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::extraction::extract_chunks;
    use crate::interface::derive_interface;
    use crate::ir::lift::lift;
    use crate::ir::template::parse_template;

    fn token_program(c: &ChunkAst) -> (Program, FormalInterface) {
        let fi = derive_interface(c).unwrap();
        let instrs = parse_template(&c.template, c).unwrap();
        (lift(&instrs, &fi).unwrap(), fi)
    }

    #[test]
    fn access_on_memory_token() {
        let c = ChunkAst::new("cmpxchg8b %0").output("+m", "*p", 8).clobber("cc");
        let (p, fi) = token_program(&c);
        let acc = memory_access_analysis(&p, &fi);
        assert!(acc.iter().any(|a| *a
            == MemAccess {
                point: a.point,
                kind: AccessKind::Load,
                base: MemBase::Token(TokenId(0)),
                offset: 0,
                size: 8
            }));
    }

    #[test]
    fn store_with_offset_and_unresolved() {
        let c = ChunkAst::new("movl %0, 4(%1)").input("r", "v", 4).input("r", "p", 4);
        let (p, fi) = token_program(&c);
        let acc = memory_access_analysis(&p, &fi);
        assert_eq!(acc.len(), 1);
        assert_eq!(acc[0].kind, AccessKind::Store);
        assert_eq!(acc[0].base, MemBase::Token(TokenId(1)));
        assert_eq!((acc[0].offset, acc[0].size), (4, 4));

        let c = ChunkAst::new("movl $0, (%%eax,%%ebx)").clobber("memory");
        let (p, fi) = token_program(&c);
        assert_eq!(memory_access_analysis(&p, &fi)[0].base, MemBase::Unresolved);
    }

    #[test]
    fn contiguous_runs() {
        let acc = |off, kind| MemAccess {
            point: 0,
            kind,
            base: MemBase::Token(TokenId(1)),
            offset: off,
            size: 4,
        };
        let e = memory_to_m_entries(&[acc(0, AccessKind::Load), acc(4, AccessKind::Load)]).unwrap();
        assert_eq!(
            e,
            RefinementEdit::MemoryToEntries {
                entries: alloc::vec![MemoryEntry {
                    base: MemBase::Token(TokenId(1)),
                    mode: EntryMode::In,
                    offset: 0,
                    span: 8
                }]
            }
        );
        let RefinementEdit::MemoryToEntries { entries } =
            memory_to_m_entries(&[acc(0, AccessKind::Load), acc(64, AccessKind::Store)]).unwrap()
        else {
            unreachable!()
        };
        assert_eq!(entries.len(), 2);
        assert!(entries.iter().all(|e| e.mode == EntryMode::Inout));
        let mut bad = acc(0, AccessKind::Load);
        bad.base = MemBase::Unresolved;
        assert!(memory_to_m_entries(&[bad]).is_err());
    }

    #[test]
    fn dead_input() {
        let c = ChunkAst::new("movl $1, %0").output("=r", "y", 4).input("r", "x", 4);
        let r = refine_chunk(&c, &RefineOptions::default());
        assert_eq!(r.edits, [RefinementEdit::DropInput { position: 1 }]);
        assert!(r.refined().unwrap().inputs.is_empty());
    }

    #[test]
    fn dead_clobber() {
        let c = ChunkAst::new("nop").clobber("ecx");
        let r = refine_chunk(&c, &RefineOptions::default());
        assert_eq!(r.edits, [RefinementEdit::DropClobber { name: "ecx".into() }]);
        let off = RefineOptions {
            clobbers: false,
            ..RefineOptions::default()
        };
        assert!(refine_chunk(&c, &off).edits.is_empty());
    }

    #[test]
    fn undue_memory() {
        let c = ChunkAst::new("addl %1, %0").output("+r", "x", 4).input("r", "y", 4).clobber("cc").clobber("memory");
        let r = refine_chunk(&c, &RefineOptions::default());
        assert_eq!(r.edits, [RefinementEdit::DropMemoryKeyword]);
    }

    #[test]
    fn pointer_loads_become_entries() {
        let src = "void f(unsigned *out, const unsigned *key) {\n\
                   \tunsigned x;\n\
                   \t__asm__ __volatile__(\"movl (%1), %0; bswapl %0\" : \"=r\" (x) : \"r\" (key));\n\
                   \t*out = x;\n\
                   }\n";
        let (chunks, _) = extract_chunks(src, "k.c");
        let r = refine_chunk(&chunks[0], &RefineOptions::default());
        assert!(matches!(r.edits[0], RefinementEdit::MemoryToEntries { .. }), "{r:?}");
        let refined = r.refined().unwrap();
        assert!(!refined.clobbers.iter().any(|c| c == "memory"));
        assert_eq!(refined.inputs[1].constraint, "m");
        assert_eq!(refined.inputs[1].expr_text, "*(const char (*)[4]) (key)");
        assert_eq!(check_chunk(refined).verdict, Verdict::Compliant);
        let new = crate::patcher::apply_to_source(src, &[r.rewrite.clone().unwrap()]).unwrap();
        assert!(new.contains(": \"=r\" (x) : \"r\" (key), \"m\" (*(const char (*)[4]) (key)));"), "{new}");
    }

    #[test]
    fn drop_renumbers_template() {
        let c = ChunkAst::new("movl %2, %0").output("=r", "y", 4).input("r", "dead", 4).input("r", "x", 4);
        let r = refine_chunk(&c, &RefineOptions::default());
        assert_eq!(r.edits, [RefinementEdit::DropInput { position: 1 }]);
        assert_eq!(r.refined().unwrap().template, "movl %1, %0");
    }
}
