//! Forward impact analysis with symbolic expression propagation.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use super::{Category, Issue, Resolved};
use crate::arch::Flag;
use crate::interface::FormalInterface;
use crate::ir::simplify::simplify;
use crate::ir::{Expr, Location, Program, Stmt};

/// Expressions past this many nodes are treated as unknown.
const SIZE_LIMIT: usize = 4096;

#[derive(Clone, Debug, PartialEq, Eq)]
enum Val {
    Sym(Expr),
    Top,
}

/// Written locations mapped to their value; absent means initial.
type State = BTreeMap<Location, Val>;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FrameWrite {
    /// Every location assigned by a reachable statement, with the first such statement.
    pub written: BTreeMap<Location, usize>,
    /// Written locations not proven to hold their entry value at exit.
    pub changed: BTreeSet<Location>,
    pub reachable: Vec<bool>,
}

fn size(e: &Expr) -> usize {
    let mut n = 0;
    e.visit(&mut |_| n += 1);
    n
}

fn eval(e: &Expr, st: &State) -> Val {
    let mut top = false;
    let v = e.clone().map(&mut |n| match n {
        Expr::Var(l, _) => match st.get(&l) {
            Some(Val::Sym(x)) => x.clone(),
            Some(Val::Top) => {
                top = true;
                n
            }
            None => n,
        },
        n => n,
    });
    if top || size(&v) > SIZE_LIMIT {
        return Val::Top;
    }
    let v = simplify(v);
    if size(&v) > SIZE_LIMIT {
        Val::Top
    } else {
        Val::Sym(v)
    }
}

fn initial(l: Location, w: u32) -> Val {
    Val::Sym(Expr::var(l, w))
}

fn width(p: &Program, l: Location) -> u32 {
    p.width_of(l).unwrap_or(32)
}

/// Join `incoming` into `into`; returns whether `into` changed.
fn join(p: &Program, into: &mut State, incoming: &State) -> bool {
    let mut changed = false;
    let keys: BTreeSet<Location> = into.keys().chain(incoming.keys()).copied().collect();
    for k in keys {
        let a = into.get(&k).cloned().unwrap_or_else(|| initial(k, width(p, k)));
        let b = incoming.get(&k).cloned().unwrap_or_else(|| initial(k, width(p, k)));
        let j = if a == b { a } else { Val::Top };
        let is_initial = j == initial(k, width(p, k));
        let prev = into.get(&k);
        if is_initial {
            if prev.is_some() {
                into.remove(&k);
                changed = true;
            }
        } else if prev != Some(&j) {
            into.insert(k, j);
            changed = true;
        }
    }
    changed
}

fn run(p: &Program, propagation: bool) -> (Vec<Option<State>>, BTreeMap<Location, usize>) {
    let n = p.stmts.len();
    let mut ins: Vec<Option<State>> = alloc::vec![None; n];
    let mut written = BTreeMap::new();
    if n == 0 {
        return (ins, written);
    }
    ins[0] = Some(State::new());
    let mut work = BTreeSet::from([0usize]);
    while let Some(i) = work.pop_first() {
        let Some(st) = ins[i].clone() else { continue };
        let mut out = st;
        match &p.stmts[i] {
            Stmt::Assign { dst, value } => {
                written.entry(*dst).or_insert(i);
                let v = if propagation { eval(value, &out) } else { Val::Top };
                out.insert(*dst, v);
            }
            Stmt::Store { .. } => {
                written.entry(Location::Memory).or_insert(i);
                out.insert(Location::Memory, Val::Top);
            }
            _ => {}
        }
        for s in p.stmts[i].successors(i) {
            let changed = match &mut ins[s] {
                None => {
                    ins[s] = Some(out.clone());
                    true
                }
                Some(prev) => join(p, prev, &out),
            };
            if changed {
                work.insert(s);
            }
        }
    }
    (ins, written)
}

/// Symbolic values before each statement, in terms of entry values.
#[derive(Clone, Debug)]
pub struct SymbolicStates {
    states: Vec<Option<State>>,
}

impl SymbolicStates {
    pub fn new(p: &Program) -> Self {
        SymbolicStates { states: run(p, true).0 }
    }

    /// `e` evaluated before statement `i`; `None` if unreachable or unknown.
    pub fn eval(&self, i: usize, e: &Expr) -> Option<Expr> {
        match eval(e, self.states.get(i)?.as_ref()?) {
            Val::Sym(x) => Some(x),
            Val::Top => None,
        }
    }
}

/// Collect written locations; with `propagation`, keep only those whose
/// final value differs from the entry value on some path.
pub fn propagate(p: &Program, propagation: bool) -> FrameWrite {
    let (ins, written) = run(p, propagation);
    let reachable: Vec<bool> = ins.iter().map(|s| s.is_some()).collect();
    let mut exit: Option<State> = None;
    for (i, s) in p.stmts.iter().enumerate() {
        if let (Stmt::Halt, Some(st)) = (s, &ins[i]) {
            match &mut exit {
                None => exit = Some(st.clone()),
                Some(e) => {
                    join(p, e, st);
                }
            }
        }
    }
    let changed = match exit {
        Some(e) if propagation => written
            .keys()
            .filter(|l| match e.get(l) {
                None => false,
                Some(v) => *v != initial(**l, width(p, **l)),
            })
            .copied()
            .collect(),
        _ => written.keys().copied().collect(),
    };
    FrameWrite {
        written,
        changed,
        reachable,
    }
}

pub fn analyze_frame_write(r: &Resolved, fi: &FormalInterface, fw: &FrameWrite) -> Vec<Issue> {
    let mut issues = Vec::new();
    let mut flags: Vec<(Flag, usize)> = Vec::new();
    for l in &fw.changed {
        let point = fw.written[l];
        match *l {
            Location::Flag(f) => flags.push((f, point)),
            Location::Reg(reg) => {
                if fi.s_c.contains(&reg) {
                    continue;
                }
                match r.owner.get(&reg) {
                    Some(t) if fi.b_o.contains(t) => {}
                    Some(t) => issues.push(
                        Issue::new(
                            Category::ReadOnlyInputClobbered,
                            *l,
                            point,
                            format!("{reg} holds input {t} and is overwritten"),
                        )
                        .with_token(Some(*t)),
                    ),
                    None => issues.push(Issue::new(
                        Category::UnboundRegisterClobbered,
                        *l,
                        point,
                        format!("{reg} is written but neither an output nor clobbered"),
                    )),
                }
            }
            Location::Token(t) => {
                if fi.b_o.contains(&t) || (fi.is_memory_only(t) && !fi.f) {
                    continue;
                }
                issues.push(Issue::new(
                    Category::ReadOnlyInputClobbered,
                    *l,
                    point,
                    format!("input {t} is overwritten"),
                ));
            }
            Location::Memory => {
                if fi.f {
                    issues.push(Issue::new(
                        Category::UnboundMemoryWrite,
                        *l,
                        point,
                        String::from("memory is written without a \"memory\" clobber"),
                    ));
                }
            }
            Location::TokenAddr(_) | Location::Temp(_) | Location::Slot(_) => {}
        }
    }
    if !flags.is_empty() && !fi.flags_clobbered {
        flags.sort_by_key(|(f, p)| (*p, f.index()));
        let names: Vec<&str> = flags.iter().map(|(f, _)| f.name()).collect();
        issues.push(Issue::new(
            Category::FlagClobbered,
            Location::Flag(flags[0].0),
            flags[0].1,
            format!("flags {} are written without a \"cc\" clobber", names.join(",")),
        ));
    }
    issues
}
