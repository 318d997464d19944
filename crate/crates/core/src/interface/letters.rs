//! The i386 constraint letters and the operand sets they denote.

use alloc::collections::BTreeSet;
use core::fmt;

use serde::Serialize;

use super::InterfaceError;
use crate::arch::Reg;

/// Set of operands one letter (or a union of letters) admits.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, Serialize)]
pub struct OperandClass {
    /// Any integer constant.
    pub immediate: bool,
    pub registers: BTreeSet<Reg>,
    /// The address family `rb + k*ri + c` under a dereference.
    pub memory: bool,
}

impl OperandClass {
    pub fn registers(regs: &[Reg]) -> Self {
        OperandClass {
            registers: regs.iter().copied().collect(),
            ..Default::default()
        }
    }

    pub fn immediate() -> Self {
        OperandClass {
            immediate: true,
            ..Default::default()
        }
    }

    pub fn memory() -> Self {
        OperandClass {
            memory: true,
            ..Default::default()
        }
    }

    pub fn union(&self, other: &OperandClass) -> OperandClass {
        OperandClass {
            immediate: self.immediate || other.immediate,
            registers: self.registers.union(&other.registers).copied().collect(),
            memory: self.memory || other.memory,
        }
    }

    pub fn is_empty(&self) -> bool {
        !self.immediate && !self.memory && self.registers.is_empty()
    }

    /// The register this class forces, if it admits exactly one register and nothing else.
    pub fn singleton(&self) -> Option<Reg> {
        if self.immediate || self.memory || self.registers.len() != 1 {
            return None;
        }
        self.registers.iter().next().copied()
    }

    pub fn memory_only(&self) -> bool {
        self.memory && !self.immediate && self.registers.is_empty()
    }
}

impl fmt::Display for OperandClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut parts = alloc::vec::Vec::new();
        if self.immediate {
            parts.push(alloc::string::String::from("imm"));
        }
        if !self.registers.is_empty() {
            let regs: alloc::vec::Vec<_> = self.registers.iter().map(|r| r.name()).collect();
            parts.push(alloc::format!("{{{}}}", regs.join(",")));
        }
        if self.memory {
            parts.push("mem".into());
        }
        if parts.is_empty() {
            return f.write_str("{}");
        }
        f.write_str(&parts.join("|"))
    }
}

pub const Q_REGS: [Reg; 4] = [Reg::Eax, Reg::Ebx, Reg::Ecx, Reg::Edx];
pub const R_REGS: [Reg; 7] = [
    Reg::Eax,
    Reg::Ebx,
    Reg::Ecx,
    Reg::Edx,
    Reg::Esi,
    Reg::Edi,
    Reg::Ebp,
];

/// Register named by a single-register letter.
pub fn singleton_register(c: char) -> Option<Reg> {
    match c {
        'a' => Some(Reg::Eax),
        'b' => Some(Reg::Ebx),
        'c' => Some(Reg::Ecx),
        'd' => Some(Reg::Edx),
        'S' => Some(Reg::Esi),
        'D' => Some(Reg::Edi),
        _ => None,
    }
}

/// Letter for a register that has one, the inverse of [`singleton_register`].
pub fn register_letter(r: Reg) -> Option<char> {
    match r {
        Reg::Eax => Some('a'),
        Reg::Ebx => Some('b'),
        Reg::Ecx => Some('c'),
        Reg::Edx => Some('d'),
        Reg::Esi => Some('S'),
        Reg::Edi => Some('D'),
        _ => None,
    }
}

pub fn eval_letter(c: char) -> Result<OperandClass, InterfaceError> {
    if let Some(r) = singleton_register(c) {
        return Ok(OperandClass::registers(&[r]));
    }
    Ok(match c {
        'U' => OperandClass::registers(&[Reg::Eax, Reg::Ecx, Reg::Edx]),
        'q' | 'Q' => OperandClass::registers(&Q_REGS),
        'r' | 'R' => OperandClass::registers(&R_REGS),
        'i' | 'n' => OperandClass::immediate(),
        'p' | 'm' => OperandClass::memory(),
        'g' => OperandClass::immediate()
            .union(&OperandClass::registers(&R_REGS))
            .union(&OperandClass::memory()),
        _ => return Err(InterfaceError::UnknownLetter(c)),
    })
}

/// Register a raw constraint string forces in every alternative, if any.
/// Used for clobber-overlap diagnostics before full interface derivation.
pub fn constraint_pins(constraint: &str) -> Option<Reg> {
    let mut pinned = None;
    for alt in constraint.split(',') {
        let mut class = OperandClass::default();
        for ch in alt.chars() {
            if matches!(ch, '=' | '+' | '&' | '%') || ch.is_whitespace() {
                continue;
            }
            class = class.union(&eval_letter(ch).ok()?);
        }
        let r = class.singleton()?;
        if pinned.is_some_and(|p| p != r) {
            return None;
        }
        pinned = Some(r);
    }
    pinned
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn g_is_the_three_way_union() {
        let g = eval_letter('g').unwrap();
        assert!(g.immediate && g.memory);
        assert_eq!(g.registers.len(), 7);
    }

    #[test]
    fn pins() {
        assert_eq!(constraint_pins("=a"), Some(Reg::Eax));
        assert_eq!(constraint_pins("d,d"), Some(Reg::Edx));
        assert_eq!(constraint_pins("a,b"), None);
        assert_eq!(constraint_pins("=r"), None);
        assert_eq!(constraint_pins("0"), None);
    }
}
