//! Backward liveness, per bit or per location, and the frame-read check.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::vec::Vec;

use super::{Category, FrameWrite, Issue, Resolved};
use crate::arch::Reg;
use crate::interface::FormalInterface;
use crate::ir::{Binop, Expr, Location, Program, Stmt, TokenId, Unop};

/// Live bits per location; `Memory` uses bit 0.
pub type LiveSet = BTreeMap<Location, u128>;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Liveness {
    pub live_in: Vec<LiveSet>,
    pub live_out: Vec<LiveSet>,
    pub bit_level: bool,
}

impl Liveness {
    pub fn entry(&self) -> &LiveSet {
        &self.live_in[0]
    }
}

pub fn full(w: u32) -> u128 {
    if w >= 128 {
        u128::MAX
    } else {
        (1u128 << w) - 1
    }
}

/// All bits up to and including the highest set bit.
fn low_fill(m: u128) -> u128 {
    if m == 0 {
        0
    } else {
        full(128 - m.leading_zeros())
    }
}

fn add(live: &mut LiveSet, l: Location, m: u128) {
    if m != 0 {
        *live.entry(l).or_insert(0) |= m;
    }
}

struct Demand<'a> {
    fi: &'a FormalInterface,
    bit_level: bool,
}

impl Demand<'_> {
    fn expr(&self, e: &Expr, mask: u128, live: &mut LiveSet) {
        let w = e.width();
        let mask = mask & full(w);
        if mask == 0 {
            return;
        }
        let mask = if self.bit_level { mask } else { full(w) };
        match e {
            Expr::Const(_) | Expr::Symbol(_) => {}
            Expr::Var(l, _) => {
                add(live, *l, mask);
                if let Location::Token(t) = l {
                    if self.fi.is_memory_only(*t) {
                        add(live, Location::TokenAddr(*t), full(32));
                    }
                }
            }
            Expr::Load { addr, .. } => {
                add(live, Location::Memory, 1);
                self.expr(addr, u128::MAX, live);
            }
            Expr::Unop(op, x) => {
                let xw = x.width();
                let m = match op {
                    Unop::Not => mask,
                    Unop::Neg => low_fill(mask),
                    Unop::Zext(_) => mask & full(xw),
                    Unop::Sext(_) => {
                        let high = mask & !full(xw);
                        (mask & full(xw)) | if high != 0 { 1 << (xw - 1) } else { 0 }
                    }
                    Unop::Extract { lo, .. } => mask << lo,
                };
                self.expr(x, if self.bit_level { m } else { u128::MAX }, live);
            }
            Expr::Binop(op, x, y) => {
                let xw = x.width();
                let all = u128::MAX;
                let (mx, my) = match op {
                    Binop::And => match (x.as_const(), y.as_const()) {
                        (_, Some(c)) => (mask & c.bits(), 0),
                        (Some(c), _) => (0, mask & c.bits()),
                        _ => (mask, mask),
                    },
                    Binop::Or => match (x.as_const(), y.as_const()) {
                        (_, Some(c)) => (mask & !c.bits(), 0),
                        (Some(c), _) => (0, mask & !c.bits()),
                        _ => (mask, mask),
                    },
                    Binop::Xor => (mask, mask),
                    Binop::Add | Binop::Sub | Binop::Mul => (low_fill(mask), low_fill(mask)),
                    Binop::Shl => match y.as_const() {
                        Some(c) if c.bits() < xw as u128 => (mask >> c.bits(), 0),
                        Some(_) => (0, 0),
                        None => (all, all),
                    },
                    Binop::Shr => match y.as_const() {
                        Some(c) if c.bits() < xw as u128 => (mask << c.bits(), 0),
                        Some(_) => (0, 0),
                        None => (all, all),
                    },
                    Binop::Sar => match y.as_const() {
                        Some(c) if c.bits() < xw as u128 => {
                            let k = c.bits() as u32;
                            let m = (mask << k) & full(xw);
                            let high = if k == 0 { 0 } else { mask >> (xw - k) };
                            let sign = if high != 0 { 1 << (xw - 1) } else { 0 };
                            (m | sign, 0)
                        }
                        Some(_) => (1 << (xw - 1), 0),
                        None => (all, all),
                    },
                    Binop::Concat => {
                        let yw = y.width();
                        (mask >> yw, mask & full(yw))
                    }
                    _ => (all, all),
                };
                let (mx, my) = if self.bit_level { (mx, my) } else { (all, all) };
                self.expr(x, mx, live);
                self.expr(y, my, live);
            }
            Expr::Ite(c, t, f) => {
                self.expr(c, 1, live);
                self.expr(t, mask, live);
                self.expr(f, mask, live);
            }
        }
    }

    fn stmt(&self, s: &Stmt, out: &LiveSet) -> LiveSet {
        let mut live = out.clone();
        match s {
            Stmt::Assign { dst, value } => {
                let d = live.remove(dst).unwrap_or(0);
                if d != 0 {
                    self.expr(value, d, &mut live);
                    if let Location::Token(t) = dst {
                        if self.fi.is_memory_only(*t) {
                            add(&mut live, Location::TokenAddr(*t), full(32));
                        }
                    }
                }
            }
            Stmt::Store { addr, value, .. } => {
                if out.get(&Location::Memory).copied().unwrap_or(0) != 0 {
                    self.expr(addr, u128::MAX, &mut live);
                    self.expr(value, u128::MAX, &mut live);
                }
            }
            Stmt::Branch { cond, .. } => self.expr(cond, 1, &mut live),
            Stmt::Goto(_) | Stmt::Halt => {}
        }
        live
    }
}

/// Locations observable at exit: output tokens at their declared width,
/// plus memory when it is not separated.
pub fn exit_seeds(r: &Resolved, fi: &FormalInterface) -> LiveSet {
    let mut seeds = LiveSet::new();
    for t in &fi.b_o {
        let bits = fi.tokens[t].output_bits.unwrap_or(32);
        let loc = r.token_location(*t);
        let w = match loc {
            Location::Reg(reg) => bits.min(reg.width()),
            _ => bits,
        };
        add(&mut seeds, loc, full(w));
    }
    if !fi.f {
        add(&mut seeds, Location::Memory, 1);
        for (t, info) in &fi.tokens {
            let loc = r.token_location(*t);
            let written = r
                .program
                .stmts
                .iter()
                .any(|s| matches!(s, Stmt::Assign { dst, .. } if *dst == loc));
            if written && !fi.b_o.contains(t) && fi.memory_capable(*t) {
                add(&mut seeds, loc, full(info.bits().max(8)));
            }
        }
    }
    seeds
}

/// `seeds` plus the registers the frame condition needs restored: written,
/// not assignable, and proven to hold their entry value at exit.
pub fn restore_seeds(r: &Resolved, fi: &FormalInterface, fw: &FrameWrite, seeds: &LiveSet) -> LiveSet {
    let mut out = seeds.clone();
    for l in fw.written.keys() {
        if let Location::Reg(reg) = l {
            if *reg != Reg::Esp && !fw.changed.contains(l) && !fi.s_c.contains(reg) && !r.owner.contains_key(reg) {
                add(&mut out, *l, full(reg.width()));
            }
        }
    }
    out
}

pub fn liveness(p: &Program, fi: &FormalInterface, seeds: &LiveSet, bit_level: bool) -> Liveness {
    let n = p.stmts.len();
    let d = Demand { fi, bit_level };
    let seeds: LiveSet = if bit_level {
        seeds.clone()
    } else {
        seeds
            .iter()
            .map(|(l, _)| (*l, full(p.width_of(*l).unwrap_or(32))))
            .collect()
    };
    let mut live_in: Vec<LiveSet> = alloc::vec![LiveSet::new(); n];
    let mut live_out: Vec<LiveSet> = alloc::vec![LiveSet::new(); n];
    let mut preds: Vec<Vec<usize>> = alloc::vec![Vec::new(); n];
    for (i, s) in p.stmts.iter().enumerate() {
        for j in s.successors(i) {
            if j < n {
                preds[j].push(i);
            }
        }
    }
    let mut work: BTreeSet<usize> = (0..n).collect();
    while let Some(i) = work.pop_last() {
        let s = &p.stmts[i];
        let mut out = if matches!(s, Stmt::Halt) { seeds.clone() } else { LiveSet::new() };
        for j in s.successors(i) {
            for (l, m) in &live_in[j] {
                add(&mut out, *l, *m);
            }
        }
        let inn = d.stmt(s, &out);
        live_out[i] = out;
        if inn != live_in[i] {
            live_in[i] = inn;
            work.extend(preds[i].iter().copied());
        }
    }
    Liveness {
        live_in,
        live_out,
        bit_level,
    }
}

fn first_read(p: &Program, l: Location) -> usize {
    p.stmts
        .iter()
        .position(|s| {
            s.exprs().iter().any(|e| {
                let r = e.reads();
                r.contains(&l) || (matches!(l, Location::Token(_)) && r.contains(&Location::Memory))
            })
        })
        .unwrap_or(0)
}

fn write_only_outputs(fi: &FormalInterface) -> impl Iterator<Item = TokenId> + '_ {
    fi.b_o
        .iter()
        .copied()
        .filter(|t| fi.tokens[t].input_bits.is_none())
}

pub fn analyze_frame_read(r: &Resolved, fi: &FormalInterface, live: &Liveness, fw: &FrameWrite) -> Vec<Issue> {
    let p = &r.program;
    let mut issues = Vec::new();
    let mut unwritten = BTreeSet::new();
    for t in write_only_outputs(fi) {
        let loc = r.token_location(t);
        if !fw.written.contains_key(&loc) {
            unwritten.insert(t);
            issues.push(
                Issue::new(
                    Category::NonWrittenWriteOnlyOutput,
                    Location::Token(t),
                    p.stmts.len().saturating_sub(1),
                    format!("write-only output {t} is never written"),
                )
                .with_token(Some(t)),
            );
        }
    }
    let input_mask = |t: TokenId| fi.tokens[&t].input_bits.map(full).unwrap_or(0);
    for (l, bits) in live.entry() {
        if *bits == 0 {
            continue;
        }
        let point = first_read(p, *l);
        match *l {
            Location::Reg(Reg::Esp) | Location::TokenAddr(_) | Location::Temp(_) => {}
            Location::Reg(reg) => {
                let owner = r.owner.get(&reg).copied();
                let allowed = owner.map(input_mask).unwrap_or(0);
                if bits & !allowed == 0 || owner.is_some_and(|t| unwritten.contains(&t)) {
                    continue;
                }
                issues.push(
                    Issue::new(
                        Category::UnboundRegisterRead,
                        *l,
                        point,
                        match owner {
                            Some(t) => format!("{reg} (token {t}) is read before being written but is not an input"),
                            None => format!("{reg} is read but is not an input"),
                        },
                    )
                    .with_token(owner),
                );
            }
            Location::Flag(f) => issues.push(Issue::new(
                Category::UnboundRegisterRead,
                *l,
                point,
                format!("flag {f} is read before being set"),
            )),
            Location::Token(t) => {
                if bits & !input_mask(t) == 0 || unwritten.contains(&t) {
                    continue;
                }
                if fi.is_memory_only(t) {
                    if fi.f {
                        issues.push(Issue::new(
                            Category::UnboundMemoryRead,
                            *l,
                            point,
                            format!("memory of output {t} is read but is not an input"),
                        ));
                    }
                } else {
                    issues.push(Issue::new(
                        Category::UnboundRegisterRead,
                        *l,
                        point,
                        format!("{t} is read before being written but is not an input"),
                    ));
                }
            }
            Location::Memory => {
                if fi.f {
                    issues.push(Issue::new(
                        Category::UnboundMemoryRead,
                        *l,
                        point,
                        "memory is read without a \"memory\" clobber or an \"m\" input".into(),
                    ));
                }
            }
            Location::Slot(k) => issues.push(Issue::new(
                Category::UnboundMemoryRead,
                *l,
                point,
                format!("stack cell {k} bytes below esp is read before being written"),
            )),
        }
    }
    issues
}
