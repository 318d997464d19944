//! Constraint strings, the formal interface of a chunk, and the token
//! assignments it admits (concrete and abstract).

pub mod alias;
pub mod constraint;
pub mod derive;
pub mod domain;
pub mod enumerate;
pub mod letters;

use alloc::string::String;

pub use alias::{alias_expr, PointerAlias};
pub use constraint::{parse_constraint, Atom, ConstraintSpec, MatchRef, Mode};
pub use derive::{derive_interface, Column, FormalInterface, TokenInfo};
pub use domain::{abstract_domain, AbstractLocation, Domains};
pub use enumerate::{enumerate_assignments, Address, Enumeration, Operand, TokenAssignment};
pub use letters::{eval_letter, OperandClass};

use crate::arch::Reg;
use crate::ir::TokenId;

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum InterfaceError {
    #[error("unknown constraint letter {0:?}")]
    UnknownLetter(char),
    #[error("output constraint {0:?} lacks '=' or '+'")]
    ModeMissing(String),
    #[error("input constraint {0:?} carries an output modifier")]
    ModeOnInput(String),
    #[error("output constraint {0:?} uses a matching constraint")]
    MatchOnOutput(String),
    #[error("empty constraint")]
    EmptyConstraint,
    #[error("operand %{position}: {source}")]
    Entry {
        position: u8,
        #[source]
        source: alloc::boxed::Box<InterfaceError>,
    },
    #[error("operand %{position} matches {target:?}, which is not an output")]
    BadMatch { position: u8, target: String },
    #[error("operand %{position} has {found} alternatives, expected {expected}")]
    InconsistentAlternatives {
        position: u8,
        found: usize,
        expected: usize,
    },
    #[error("unknown clobber {0:?}")]
    UnknownClobber(String),
    #[error("clobber {reg} overlaps operand {token}")]
    ClobberOverlap { reg: Reg, token: TokenId },
    #[error("no token assignment satisfies the interface")]
    Unsatisfiable,
}
