//! Unicity: a write must not reach a live location through some token
//! assignment but not another.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::vec::Vec;

use super::{Category, FrameWrite, Issue, Liveness, Resolved};
use crate::interface::enumerate::{conflicts, usage};
use crate::interface::{Address, AbstractLocation, Domains, FormalInterface, Operand};
use crate::ir::{Location, Stmt};

/// Abstract locations a dataflow location may stand for.
pub fn location_domain(l: Location, domains: &Domains) -> BTreeSet<AbstractLocation> {
    match l {
        Location::Reg(r) => [AbstractLocation::Direct(r)].into(),
        Location::Token(t) | Location::TokenAddr(t) => domains.get(&t).cloned().unwrap_or_default(),
        _ => BTreeSet::new(),
    }
}

/// `l* ⋈* l'*`: writing the first may change the second.
pub fn smash_star(a: AbstractLocation, b: AbstractLocation) -> bool {
    use AbstractLocation::*;
    matches!((a, b), (Direct(r), Direct(s)) | (Direct(r), Indirect(s)) if r == s)
}

fn normal(l: Location) -> Location {
    match l {
        Location::TokenAddr(t) => Location::Token(t),
        l => l,
    }
}

fn operand(a: AbstractLocation) -> Operand {
    match a {
        AbstractLocation::Direct(r) => Operand::Reg(r),
        AbstractLocation::Indirect(r) => Operand::Mem(Address::base(r)),
        AbstractLocation::Immediate => Operand::Imm(0),
    }
}

/// Whether two tokens may hold these operands in one valid assignment.
fn coexist(fi: &FormalInterface, l: Location, a: AbstractLocation, l2: Location, b: AbstractLocation) -> bool {
    match (l.token(), l2.token()) {
        (Some(t), Some(u)) if t != u => !conflicts(&usage(fi, t, &operand(a)), &usage(fi, u, &operand(b))),
        _ => true,
    }
}

/// `l ⋈ l'`, with a witness pair when it holds.
pub fn smash(
    l: Location,
    l2: Location,
    fi: &FormalInterface,
    domains: &Domains,
) -> Option<(AbstractLocation, AbstractLocation)> {
    if normal(l) == normal(l2) {
        return None;
    }
    let clobbered = |x: Location| matches!(x, Location::Reg(r) if fi.s_c.contains(&r));
    if clobbered(l) || clobbered(l2) {
        return None;
    }
    if let (Location::Token(t), Some(_)) = (l, l2.token()) {
        if fi.early_clobber.contains(&t) {
            return None;
        }
    }
    let da = location_domain(l, domains);
    let db = location_domain(l2, domains);
    da.iter()
        .flat_map(|a| db.iter().map(move |b| (*a, *b)))
        .find(|(a, b)| smash_star(*a, *b) && coexist(fi, l, *a, l2, *b))
}

pub fn analyze_unicity(
    r: &Resolved,
    fi: &FormalInterface,
    domains: &Domains,
    live: &Liveness,
    fw: &FrameWrite,
) -> Vec<Issue> {
    let p = &r.program;
    let mut found: BTreeMap<(Location, Location), Issue> = BTreeMap::new();
    for (i, s) in p.stmts.iter().enumerate() {
        if !fw.reachable.get(i).copied().unwrap_or(false) {
            continue;
        }
        let Stmt::Assign { dst, .. } = s else { continue };
        if !matches!(dst, Location::Reg(_) | Location::Token(_)) {
            continue;
        }
        for (l2, bits) in &live.live_out[i] {
            if *bits == 0 {
                continue;
            }
            let Some((a, b)) = smash(*dst, *l2, fi, domains) else {
                continue;
            };
            let key = (*dst, normal(*l2));
            found.entry(key).or_insert_with(|| {
                let mut issue = Issue::new(
                    Category::Unicity,
                    *dst,
                    i,
                    format!("write to {dst} may affect live {} when it is assigned {b} ({a} vs {b})", normal(*l2)),
                );
                issue.related = Some(normal(*l2));
                issue.token = dst.token().or(l2.token());
                issue
            });
        }
    }
    found.into_values().collect()
}
