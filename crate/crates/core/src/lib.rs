//! Interface-compliance analysis for GNU extended inline assembly on i386.
//!
//! The pipeline turns an `asm` statement into a [`extraction::ChunkAst`],
//! derives its [`interface::FormalInterface`], lifts the template to the
//! bitvector [`ir`], and runs the three [`checker`] analyses (frame-write,
//! frame-read, unicity). [`patcher`] and [`refiner`] propose interface
//! edits; [`oracle`] executes the IR on concrete states to test the
//! checker's verdicts.

#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod arch;
pub mod checker;
pub mod classify;
pub mod extraction;
pub mod interface;
pub mod ir;
pub mod oracle;
pub mod patcher;
pub mod refiner;
