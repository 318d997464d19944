//! Normalize a lifted program for the dataflow analyses: fixed-register
//! tokens become their registers, accesses inside a memory token become
//! token reads and writes, and push/pop scratch cells become stack slots.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use crate::arch::Reg;
use crate::interface::{FormalInterface, Operand, TokenAssignment};
use crate::ir::simplify::simplify;
use crate::ir::subst::substitute_partial;
use crate::ir::{Binop, Expr, Location, Program, Stmt, TokenId};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Resolved {
    pub program: Program,
    pub fixed: BTreeMap<TokenId, Reg>,
    /// Token owning each fixed register (outputs preferred).
    pub owner: BTreeMap<Reg, TokenId>,
    /// Stack scratch cells were recognized (esp is restored on every exit).
    pub stack_slots: bool,
}

impl Resolved {
    /// Location that holds a token's value.
    pub fn token_location(&self, t: TokenId) -> Location {
        match self.fixed.get(&t) {
            Some(r) => Location::Reg(*r),
            None => Location::Token(t),
        }
    }
}

/// `base + c` for a simplified address.
pub(crate) fn split_offset(addr: &Expr) -> (Expr, i64) {
    let a = simplify(addr.clone());
    if let Expr::Binop(Binop::Add, x, c) = &a {
        if let Some(c) = c.as_const() {
            return ((**x).clone(), c.signed() as i64);
        }
    }
    (a, 0)
}

/// Token cell an access lands in: token, bit offset, bit width.
fn token_cell(fi: &FormalInterface, fixed: &BTreeMap<TokenId, Reg>, addr: &Expr, bytes: u32) -> Option<(TokenId, u32, u32)> {
    let (base, off) = split_offset(addr);
    let (t, off) = match base {
        Expr::Var(Location::TokenAddr(t), _) if fi.is_memory_only(t) => (t, off),
        Expr::Var(loc, _) => {
            let (t, a) = fi.aliases.iter().find(|(_, a)| match loc {
                Location::Token(p) => p == a.pointer && !fixed.contains_key(&p),
                Location::Reg(r) => fixed.get(&a.pointer) == Some(&r),
                _ => false,
            })?;
            let rel = off - a.offset;
            if rel < 0 || rel as u64 + bytes as u64 > a.span as u64 {
                return None;
            }
            let size = (fi.width(*t) / 8) as i64;
            if rel + bytes as i64 > size {
                return Some((*t, 0, (bytes * 8).min(fi.width(*t))));
            }
            (*t, rel)
        }
        _ => return None,
    };
    let size = fi.width(t) / 8;
    if off < 0 || off as u64 + bytes as u64 > size as u64 {
        return None;
    }
    Some((t, off as u32 * 8, bytes * 8))
}

fn fit(v: Expr, w: u32) -> Expr {
    match v.width() {
        x if x == w => v,
        x if x > w => Expr::extract(v, w - 1, 0),
        _ => Expr::zext(v, w),
    }
}

fn rewrite_token_loads(e: Expr, fi: &FormalInterface, fixed: &BTreeMap<TokenId, Reg>) -> Expr {
    e.map(&mut |n| match n {
        Expr::Load { ref addr, bytes } => match token_cell(fi, fixed, addr, bytes) {
            Some((t, lo, w)) => {
                let full = fi.width(t);
                let v = Expr::var(Location::Token(t), full);
                let v = if lo == 0 && w == full {
                    v
                } else {
                    Expr::extract(v, lo + w - 1, lo)
                };
                fit(v, bytes * 8)
            }
            None => n,
        },
        n => n,
    })
}

fn token_store(t: TokenId, full: u32, lo: u32, w: u32, value: Expr) -> Stmt {
    let var = Expr::var(Location::Token(t), full);
    let mut v = fit(value, w);
    if lo > 0 {
        v = Expr::concat(v, Expr::extract(var.clone(), lo - 1, 0));
    }
    if lo + w < full {
        v = Expr::concat(Expr::extract(var, full - 1, lo + w), v);
    }
    Stmt::Assign {
        dst: Location::Token(t),
        value: v,
    }
}

/// esp displacement from its entry value before each statement.
/// `None` for unreached statements, `Some(None)` when unknown.
fn esp_deltas(p: &Program) -> Vec<Option<Option<i64>>> {
    let n = p.stmts.len();
    let mut d: Vec<Option<Option<i64>>> = alloc::vec![None; n];
    if n == 0 {
        return d;
    }
    d[0] = Some(Some(0));
    let mut work = alloc::vec![0usize];
    while let Some(i) = work.pop() {
        let Some(cur) = d[i] else { continue };
        let out = match &p.stmts[i] {
            Stmt::Assign {
                dst: Location::Reg(Reg::Esp),
                value,
            } => match (cur, split_offset(value)) {
                (Some(c), (Expr::Var(Location::Reg(Reg::Esp), _), k)) => Some(c + k),
                _ => None,
            },
            _ => cur,
        };
        for s in p.stmts[i].successors(i) {
            let next = match d[s] {
                None => Some(out),
                Some(prev) if prev == out => continue,
                Some(_) => Some(None),
            };
            if d[s] != next {
                d[s] = next;
                work.push(s);
            }
        }
    }
    d
}

fn slot_of(addr: &Expr, bytes: u32, delta: i64) -> Option<i32> {
    let (base, off) = split_offset(addr);
    if bytes != 4 || !matches!(base, Expr::Var(Location::Reg(Reg::Esp), _)) {
        return None;
    }
    let at = delta + off;
    (at < 0 && at % 4 == 0).then_some((-at) as i32)
}

pub fn resolve(p: &Program, fi: &FormalInterface) -> Resolved {
    let fixed = fi.fixed_assignments();
    let mut owner = BTreeMap::new();
    for (t, r) in &fixed {
        let is_out = fi.b_o.contains(t);
        match owner.get(r) {
            Some(prev) if fi.b_o.contains(prev) || !is_out => {}
            _ => {
                owner.insert(*r, *t);
            }
        }
    }
    let assignment: TokenAssignment = fixed.iter().map(|(t, r)| (*t, Operand::Reg(*r))).collect();
    let mut q = substitute_partial(p, &assignment).unwrap_or_else(|_| p.clone());

    for s in q.stmts.iter_mut() {
        let stmt = core::mem::replace(s, Stmt::Halt);
        let stmt = stmt.map_exprs(&mut |e| rewrite_token_loads(e, fi, &fixed));
        *s = match stmt {
            Stmt::Store { addr, bytes, value } => match token_cell(fi, &fixed, &addr, bytes) {
                Some((t, lo, w)) => token_store(t, fi.width(t), lo, w, value),
                None => Stmt::Store { addr, bytes, value },
            },
            other => other,
        };
    }

    for s in q.stmts.iter_mut() {
        let stmt = core::mem::replace(s, Stmt::Halt);
        *s = stmt.map_exprs(&mut simplify);
    }

    let deltas = esp_deltas(&q);
    let balanced = q
        .stmts
        .iter()
        .enumerate()
        .filter(|(_, s)| matches!(s, Stmt::Halt))
        .all(|(i, _)| matches!(deltas[i], None | Some(Some(0))));
    let mut stack_slots = false;
    if balanced {
        for (i, s) in q.stmts.iter_mut().enumerate() {
            let Some(Some(delta)) = deltas[i] else { continue };
            let stmt = core::mem::replace(s, Stmt::Halt);
            let stmt = stmt.map_exprs(&mut |e| {
                e.map(&mut |n| match n {
                    Expr::Load { ref addr, bytes } => match slot_of(addr, bytes, delta) {
                        Some(k) => {
                            stack_slots = true;
                            Expr::var(Location::Slot(k), 32)
                        }
                        None => n,
                    },
                    n => n,
                })
            });
            *s = match stmt {
                Stmt::Store { addr, bytes, value } => match slot_of(&addr, bytes, delta) {
                    Some(k) => {
                        stack_slots = true;
                        Stmt::Assign {
                            dst: Location::Slot(k),
                            value,
                        }
                    }
                    None => Stmt::Store { addr, bytes, value },
                },
                other => other,
            };
        }
    }
    Resolved {
        program: q,
        fixed,
        owner,
        stack_slots,
    }
}
