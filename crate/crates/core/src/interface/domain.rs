//! Abstract token assignments over `Immediate | Direct r | Indirect r`.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::vec::Vec;
use core::fmt;

use serde::Serialize;

use super::derive::FormalInterface;
use super::enumerate::{base_registers, conflicts, usage, Address, Operand, TokenAssignment};
use crate::arch::Reg;
use crate::ir::TokenId;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum AbstractLocation {
    Immediate,
    Direct(Reg),
    Indirect(Reg),
}

impl fmt::Display for AbstractLocation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AbstractLocation::Immediate => f.write_str("imm"),
            AbstractLocation::Direct(r) => write!(f, "{r}"),
            AbstractLocation::Indirect(r) => write!(f, "*{r}"),
        }
    }
}

impl Serialize for AbstractLocation {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

pub type Domains = BTreeMap<TokenId, BTreeSet<AbstractLocation>>;

/// The abstract description of one concrete operand.
pub fn abstract_operand(op: &Operand) -> BTreeSet<AbstractLocation> {
    match op {
        Operand::Imm(_) => [AbstractLocation::Immediate].into(),
        Operand::Reg(r) => [AbstractLocation::Direct(*r)].into(),
        Operand::Mem(a) => a.registers().map(AbstractLocation::Indirect).collect(),
    }
}

pub fn abstract_assignment(t: &TokenAssignment) -> Domains {
    t.iter().map(|(k, op)| (*k, abstract_operand(op))).collect()
}

/// Per-token over-approximation of every operand the enumeration can produce.
/// Registers pinned by another token are dropped when the two uses would conflict.
pub fn abstract_domain(fi: &FormalInterface) -> Domains {
    let pinned: Vec<(TokenId, Reg)> = fi.fixed_assignments().into_iter().collect();
    let mut out = Domains::new();
    for (t, info) in &fi.tokens {
        let mut classes: Vec<_> = info.columns.iter().map(|c| c.class.clone()).collect();
        for (a, b) in &fi.commutative {
            let other = if a == t {
                Some(b)
            } else if b == t {
                Some(a)
            } else {
                None
            };
            if let Some(o) = other {
                classes.extend(fi.tokens[o].columns.iter().map(|c| c.class.clone()));
            }
        }
        let tied_to: BTreeSet<TokenId> = info.columns.iter().filter_map(|c| c.tied).collect();
        let admissible = |op: Operand| -> bool {
            if op.registers().iter().any(|r| fi.s_c.contains(r)) {
                return false;
            }
            let mine = usage(fi, *t, &op);
            !pinned.iter().any(|(u, r)| {
                if u == t || tied_to.contains(u) || fi.tokens[u].columns.iter().any(|c| c.tied == Some(*t)) {
                    return false;
                }
                conflicts(&mine, &usage(fi, *u, &Operand::Reg(*r)))
            })
        };
        let mut d = BTreeSet::new();
        for class in &classes {
            if class.immediate {
                d.insert(AbstractLocation::Immediate);
            }
            for r in &class.registers {
                if admissible(Operand::Reg(*r)) {
                    d.insert(AbstractLocation::Direct(*r));
                }
            }
            if class.memory {
                for r in base_registers() {
                    if admissible(Operand::Mem(Address::base(r))) {
                        d.insert(AbstractLocation::Indirect(r));
                    }
                }
            }
        }
        out.insert(*t, d);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::extraction::ChunkAst;
    use crate::interface::derive_interface;

    fn dom(c: ChunkAst) -> Domains {
        abstract_domain(&derive_interface(&c).unwrap())
    }

    #[test]
    fn letters() {
        let d = dom(ChunkAst::new("").input("d", "x", 4));
        assert_eq!(d[&TokenId(0)], [AbstractLocation::Direct(Reg::Edx)].into());
        let d = dom(ChunkAst::new("").input("m", "x", 4));
        assert_eq!(d[&TokenId(0)].len(), 8);
        assert!(d[&TokenId(0)].contains(&AbstractLocation::Indirect(Reg::Esp)));
        let d = dom(ChunkAst::new("").input("i", "x", 4));
        assert_eq!(d[&TokenId(0)], [AbstractLocation::Immediate].into());
    }

    #[test]
    fn pinned_inputs_leave_the_address_domain() {
        let c = ChunkAst::new("").input("m", "p", 4).input("d", "x", 4);
        let d = dom(c);
        assert!(!d[&TokenId(0)].contains(&AbstractLocation::Indirect(Reg::Edx)));
        assert_eq!(d[&TokenId(0)].len(), 7);
    }

    #[test]
    fn clobbers_leave_the_domain() {
        let c = ChunkAst::new("").input("m", "p", 4).clobber("ebx");
        assert!(!dom(c)[&TokenId(0)].contains(&AbstractLocation::Indirect(Reg::Ebx)));
    }
}
