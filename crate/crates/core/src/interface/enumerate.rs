//! Concrete token assignments: flattening `S_T` into operand choices and
//! keeping those that pass the validity filters.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::vec::Vec;
use core::fmt;

use serde::Serialize;

use super::derive::FormalInterface;
use super::letters::OperandClass;
use super::InterfaceError;
use crate::arch::Reg;
use crate::ir::TokenId;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Address {
    pub base: Option<Reg>,
    pub index: Option<(Reg, u8)>,
    pub disp: i32,
}

impl Address {
    pub fn base(r: Reg) -> Self {
        Address {
            base: Some(r),
            index: None,
            disp: 0,
        }
    }

    pub fn registers(&self) -> impl Iterator<Item = Reg> {
        self.base.into_iter().chain(self.index.map(|(r, _)| r))
    }
}

impl fmt::Display for Address {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.disp != 0 || (self.base.is_none() && self.index.is_none()) {
            if self.disp < 0 {
                write!(f, "-{:#x}", (self.disp as i64).unsigned_abs())?;
            } else {
                write!(f, "{:#x}", self.disp)?;
            }
        }
        if self.base.is_none() && self.index.is_none() {
            return Ok(());
        }
        f.write_str("(")?;
        if let Some(b) = self.base {
            write!(f, "%{b}")?;
        }
        if let Some((i, k)) = self.index {
            write!(f, ",%{i},{k}")?;
        }
        f.write_str(")")
    }
}

/// A concrete assembly operand a token may be bound to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Operand {
    Reg(Reg),
    Imm(i64),
    Mem(Address),
}

impl Operand {
    pub fn registers(&self) -> Vec<Reg> {
        match self {
            Operand::Reg(r) => alloc::vec![*r],
            Operand::Imm(_) => Vec::new(),
            Operand::Mem(a) => a.registers().collect(),
        }
    }

    pub fn is_assignable(&self) -> bool {
        !matches!(self, Operand::Imm(_))
    }
}

impl fmt::Display for Operand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Operand::Reg(r) => write!(f, "%{r}"),
            Operand::Imm(v) => write!(f, "${v}"),
            Operand::Mem(a) => write!(f, "{a}"),
        }
    }
}

impl Serialize for Operand {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

pub type TokenAssignment = BTreeMap<TokenId, Operand>;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Enumeration {
    pub assignments: Vec<TokenAssignment>,
    /// Stopped at the cap (or the search budget) before exhausting the product.
    pub truncated: bool,
}

pub const DEFAULT_CAP: usize = 256;
/// Representative immediate for `i`/`n`.
pub const SAMPLE_IMMEDIATE: i64 = 7;
pub const SAMPLE_DISPLACEMENTS: [i32; 4] = [0, 4, -4, 0x1000];
const SEARCH_BUDGET: usize = 1 << 18;

/// Registers admissible as a memory base (`r ∪ {esp}`).
pub fn base_registers() -> impl Iterator<Item = Reg> {
    super::letters::R_REGS.into_iter().chain([Reg::Esp])
}

/// Sampled operands of a class, in preference order.
pub fn class_candidates(class: &OperandClass) -> Vec<Operand> {
    let mut out: Vec<Operand> = class.registers.iter().map(|r| Operand::Reg(*r)).collect();
    if class.immediate {
        out.push(Operand::Imm(SAMPLE_IMMEDIATE));
    }
    if class.memory {
        for d in SAMPLE_DISPLACEMENTS {
            for b in base_registers() {
                out.push(Operand::Mem(Address {
                    base: Some(b),
                    index: None,
                    disp: d,
                }));
            }
        }
        for b in base_registers() {
            for i in super::letters::R_REGS {
                for k in [1u8, 2, 4, 8] {
                    out.push(Operand::Mem(Address {
                        base: Some(b),
                        index: Some((i, k)),
                        disp: 0,
                    }));
                }
            }
        }
    }
    out
}

/// How a token uses the registers of its operand.
#[derive(Clone, Debug, Default)]
pub(crate) struct Usage {
    /// Registers whose value is consumed at entry.
    entry: BTreeSet<Reg>,
    /// Registers holding a value at exit.
    exit: BTreeSet<Reg>,
    /// Address registers of a memory operand.
    addr: BTreeSet<Reg>,
    early: bool,
}

pub(crate) fn usage(fi: &FormalInterface, t: TokenId, op: &Operand) -> Usage {
    let regs: BTreeSet<Reg> = op.registers().into_iter().collect();
    let is_mem = matches!(op, Operand::Mem(_));
    let info = &fi.tokens[&t];
    let mut u = Usage {
        early: info.early_clobber,
        ..Default::default()
    };
    if is_mem {
        u.addr = regs.clone();
        u.entry = regs.clone();
        if info.output_bits.is_some() {
            u.exit = regs;
        }
    } else {
        if info.input_bits.is_some() {
            u.entry = regs.clone();
        }
        if info.output_bits.is_some() {
            u.exit = regs;
        }
    }
    u
}

/// Whether two tokens' operands may not coexist in one assignment.
pub(crate) fn conflicts(a: &Usage, b: &Usage) -> bool {
    let shared_entry = a.entry.intersection(&b.entry).any(|r| !(a.addr.contains(r) && b.addr.contains(r)));
    let shared_exit = a.exit.intersection(&b.exit).any(|r| !(a.addr.contains(r) && b.addr.contains(r)));
    let early = |x: &Usage, y: &Usage| {
        x.early && x.exit.iter().any(|r| !x.addr.contains(r) && y.entry.contains(r))
    };
    shared_entry || shared_exit || early(a, b) || early(b, a)
}

/// Per-token class for one column, with the tied token if any.
fn column_classes(fi: &FormalInterface, col: usize, swap: &[(TokenId, TokenId)]) -> BTreeMap<TokenId, (OperandClass, Option<TokenId>)> {
    let mut m: BTreeMap<TokenId, (OperandClass, Option<TokenId>)> = fi
        .tokens
        .iter()
        .map(|(t, i)| {
            let c = &i.columns[col];
            (*t, (c.class.clone(), c.tied))
        })
        .collect();
    for (a, b) in swap {
        let ca = m[a].clone();
        let cb = m[b].clone();
        m.insert(*a, cb);
        m.insert(*b, ca);
    }
    m
}

/// Check the validity filters on a complete assignment.
pub fn is_valid(fi: &FormalInterface, t: &TokenAssignment) -> bool {
    for (id, op) in t {
        if op.registers().iter().any(|r| fi.s_c.contains(r)) {
            return false;
        }
        if fi.b_o.contains(id) && !op.is_assignable() {
            return false;
        }
    }
    let outs: Vec<_> = t.iter().filter(|(id, _)| fi.b_o.contains(id)).collect();
    for (i, (_, a)) in outs.iter().enumerate() {
        for (_, b) in &outs[i + 1..] {
            if a == b {
                return false;
            }
        }
    }
    let ids: Vec<_> = t.keys().copied().collect();
    for (i, a) in ids.iter().enumerate() {
        for b in &ids[i + 1..] {
            if tied_pair(fi, *a, *b, t) {
                continue;
            }
            if conflicts(&usage(fi, *a, &t[a]), &usage(fi, *b, &t[b])) {
                return false;
            }
        }
    }
    true
}

fn tied_pair(fi: &FormalInterface, a: TokenId, b: TokenId, t: &TokenAssignment) -> bool {
    let tied = |x: TokenId, y: TokenId| fi.tokens[&x].columns.iter().any(|c| c.tied == Some(y));
    (tied(a, b) || tied(b, a)) && t[&a] == t[&b]
}

pub fn enumerate_assignments(fi: &FormalInterface, cap: usize) -> Result<Enumeration, InterfaceError> {
    let cap = cap.max(1);
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    let mut truncated = false;
    let mut budget = SEARCH_BUDGET;
    let mut swaps: Vec<Vec<(TokenId, TokenId)>> = alloc::vec![Vec::new()];
    for pair in &fi.commutative {
        let more: Vec<_> = swaps
            .iter()
            .map(|s| {
                let mut s = s.clone();
                s.push(*pair);
                s
            })
            .collect();
        swaps.extend(more);
    }
    'outer: for col in 0..fi.alternatives {
        for swap in &swaps {
            let classes = column_classes(fi, col, swap);
            let free: Vec<TokenId> = classes.iter().filter(|(_, (_, tied))| tied.is_none()).map(|(t, _)| *t).collect();
            let lists: Vec<Vec<Operand>> = free.iter().map(|t| class_candidates(&classes[t].0)).collect();
            if lists.iter().any(|l| l.is_empty()) {
                continue;
            }
            let exhausted = for_each_by_index_sum(&lists, &mut budget, &mut |choice| {
                let mut t: TokenAssignment = free.iter().copied().zip(choice.iter().copied()).collect();
                for (id, (_, tied)) in &classes {
                    if let Some(o) = tied {
                        let op = t[o];
                        t.insert(*id, op);
                    }
                }
                if is_valid(fi, &t) && seen.insert(t.clone()) {
                    out.push(t);
                    if out.len() >= cap {
                        return false;
                    }
                }
                true
            });
            if !exhausted {
                truncated = true;
                break 'outer;
            }
        }
    }
    if out.is_empty() {
        return Err(InterfaceError::Unsatisfiable);
    }
    Ok(Enumeration {
        assignments: out,
        truncated,
    })
}

/// Visit the cartesian product of `lists` in order of increasing index sum.
/// Returns false if `f` or the budget stopped the walk early.
fn for_each_by_index_sum(lists: &[Vec<Operand>], budget: &mut usize, f: &mut impl FnMut(&[Operand]) -> bool) -> bool {
    let max_sum: usize = lists.iter().map(|l| l.len() - 1).sum();
    let mut choice = Vec::with_capacity(lists.len());
    for s in 0..=max_sum {
        if !walk(lists, s, &mut choice, budget, f) {
            return false;
        }
    }
    true
}

fn walk(
    lists: &[Vec<Operand>],
    remaining: usize,
    choice: &mut Vec<Operand>,
    budget: &mut usize,
    f: &mut impl FnMut(&[Operand]) -> bool,
) -> bool {
    let k = choice.len();
    if k == lists.len() {
        if remaining != 0 {
            return true;
        }
        if *budget == 0 {
            return false;
        }
        *budget -= 1;
        return f(choice);
    }
    let rest_max: usize = lists[k + 1..].iter().map(|l| l.len() - 1).sum();
    let lo = remaining.saturating_sub(rest_max);
    let hi = remaining.min(lists[k].len() - 1);
    if lo > hi {
        return true;
    }
    for i in lo..=hi {
        choice.push(lists[k][i]);
        let go = walk(lists, remaining - i, choice, budget, f);
        choice.pop();
        if !go {
            return false;
        }
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::extraction::ChunkAst;
    use crate::interface::derive_interface;

    fn fi(c: ChunkAst) -> FormalInterface {
        derive_interface(&c).unwrap()
    }

    #[test]
    fn single_register_input() {
        let e = enumerate_assignments(&fi(ChunkAst::new("").input("r", "x", 4)), 256).unwrap();
        assert_eq!(e.assignments.len(), 7);
        assert!(!e.truncated);
    }

    #[test]
    fn matched_pair_shares_register() {
        let c = ChunkAst::new("").output("=r", "x", 4).input("0", "y", 4);
        let e = enumerate_assignments(&fi(c), 256).unwrap();
        assert_eq!(e.assignments.len(), 7);
        assert!(e.assignments.iter().all(|t| t.len() == 1));
    }

    #[test]
    fn clobber_removes_register() {
        let c = ChunkAst::new("").input("q", "x", 4).clobber("ebx");
        let e = enumerate_assignments(&fi(c), 256).unwrap();
        let regs: Vec<_> = e.assignments.iter().map(|t| t[&TokenId(0)]).collect();
        assert_eq!(regs, [Operand::Reg(Reg::Eax), Operand::Reg(Reg::Ecx), Operand::Reg(Reg::Edx)]);
    }

    #[test]
    fn unsatisfiable() {
        let c = ChunkAst::new("").output("=i", "x", 4);
        assert_eq!(enumerate_assignments(&fi(c), 16), Err(InterfaceError::Unsatisfiable));
    }

    #[test]
    fn cap_truncates() {
        let c = ChunkAst::new("").input("m", "x", 4).input("r", "y", 4);
        let e = enumerate_assignments(&fi(c), 10).unwrap();
        assert_eq!(e.assignments.len(), 10);
        assert!(e.truncated);
    }

    #[test]
    fn operand_text() {
        use alloc::string::ToString;
        let a = Address {
            base: Some(Reg::Esi),
            index: Some((Reg::Ebx, 2)),
            disp: -4,
        };
        assert_eq!(Operand::Mem(a).to_string(), "-0x4(%esi,%ebx,2)");
        assert_eq!(Operand::Mem(Address::base(Reg::Esp)).to_string(), "(%esp)");
        assert_eq!(Operand::Imm(7).to_string(), "$7");
    }

    #[test]
    fn early_clobber_output_avoids_inputs() {
        let c = ChunkAst::new("").output("=&r", "x", 4).input("r", "y", 4);
        let e = enumerate_assignments(&fi(c), 256).unwrap();
        assert_eq!(e.assignments.len(), 42);
        let c = ChunkAst::new("").output("=r", "x", 4).input("r", "y", 4);
        let e = enumerate_assignments(&fi(c), 256).unwrap();
        assert_eq!(e.assignments.len(), 49);
    }
}
