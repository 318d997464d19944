//! Compliance checks: frame-write with expression propagation, frame-read
//! with bit-level liveness, and unicity over abstract token assignments.

pub mod frame_write;
pub mod liveness;
pub mod resolve;
pub mod unicity;

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use serde::Serialize;

use crate::extraction::{ChunkAst, SourceSpan};
use crate::interface::{abstract_domain, derive_interface, Domains, FormalInterface};
use crate::ir::lift::{lift, LiftError};
use crate::ir::template::{parse_template, TemplateError};
use crate::ir::{Location, Program, TokenId};

pub use frame_write::{analyze_frame_write, propagate, FrameWrite, SymbolicStates};
pub use liveness::{analyze_frame_read, exit_seeds, liveness, restore_seeds, LiveSet, Liveness};
pub use resolve::{resolve, Resolved};
pub use unicity::analyze_unicity;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    FlagClobbered,
    ReadOnlyInputClobbered,
    UnboundRegisterClobbered,
    UnboundMemoryWrite,
    NonWrittenWriteOnlyOutput,
    UnboundRegisterRead,
    UnboundMemoryRead,
    Unicity,
}

impl Category {
    pub const ALL: [Category; 8] = [
        Category::FlagClobbered,
        Category::ReadOnlyInputClobbered,
        Category::UnboundRegisterClobbered,
        Category::UnboundMemoryWrite,
        Category::NonWrittenWriteOnlyOutput,
        Category::UnboundRegisterRead,
        Category::UnboundMemoryRead,
        Category::Unicity,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Category::FlagClobbered => "flag_clobbered",
            Category::ReadOnlyInputClobbered => "read_only_input_clobbered",
            Category::UnboundRegisterClobbered => "unbound_register_clobbered",
            Category::UnboundMemoryWrite => "unbound_memory_write",
            Category::NonWrittenWriteOnlyOutput => "non_written_write_only_output",
            Category::UnboundRegisterRead => "unbound_register_read",
            Category::UnboundMemoryRead => "unbound_memory_read",
            Category::Unicity => "unicity",
        }
    }

    pub fn is_frame_write(self) -> bool {
        matches!(
            self,
            Category::FlagClobbered
                | Category::ReadOnlyInputClobbered
                | Category::UnboundRegisterClobbered
                | Category::UnboundMemoryWrite
        )
    }

    pub fn is_frame_read(self) -> bool {
        matches!(
            self,
            Category::NonWrittenWriteOnlyOutput | Category::UnboundRegisterRead | Category::UnboundMemoryRead
        )
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Severity {
    Benign,
    Serious,
}

impl fmt::Display for Severity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Severity::Benign => "benign",
            Severity::Serious => "serious",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct Issue {
    pub category: Category,
    pub location: Location,
    /// Interface token the finding is about, if any.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub token: Option<TokenId>,
    /// For unicity: the live location the write may affect.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub related: Option<Location>,
    pub point: usize,
    pub severity: Severity,
    pub details: String,
}

impl Issue {
    pub fn new(category: Category, location: Location, point: usize, details: String) -> Issue {
        Issue {
            category,
            location,
            token: location.token(),
            related: None,
            point,
            severity: crate::classify::severity_policy(category),
            details,
        }
    }

    pub fn with_token(mut self, t: Option<TokenId>) -> Issue {
        if t.is_some() {
            self.token = t;
        }
        self
    }

    /// Identity of the finding, independent of where it was first seen.
    pub fn key(&self) -> (Category, Location, Option<Location>) {
        (self.category, self.location, self.related)
    }
}

impl fmt::Display for Issue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {} at {}: {}", self.severity, self.category, self.location, self.details)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Compliant,
    Issues,
    OutOfScope,
    Error,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::Compliant => "compliant",
            Verdict::Issues => "issues",
            Verdict::OutOfScope => "out_of_scope",
            Verdict::Error => "error",
        })
    }
}

/// Human-oriented view of a formal interface.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct InterfaceSummary {
    pub b_o: Vec<String>,
    pub b_i: Vec<String>,
    pub s_c: Vec<String>,
    pub f: bool,
    pub unified: BTreeMap<String, String>,
    pub fixed: BTreeMap<String, String>,
    pub early_clobber: Vec<String>,
}

impl InterfaceSummary {
    pub fn new(fi: &FormalInterface) -> Self {
        let tok = |t: &TokenId| t.to_string();
        let mut s_c: Vec<String> = fi.s_c.iter().map(|r| r.name()).collect();
        if fi.flags_clobbered {
            s_c.push("flags".into());
        }
        InterfaceSummary {
            b_o: fi.b_o.iter().map(tok).collect(),
            b_i: fi.b_i.iter().map(tok).collect(),
            s_c,
            f: fi.f,
            unified: fi.unified.iter().map(|(p, t)| (format!("%{p}"), tok(t))).collect(),
            fixed: fi.fixed_assignments().iter().map(|(t, r)| (tok(t), r.name())).collect(),
            early_clobber: fi.early_clobber.iter().map(tok).collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Report {
    pub span: SourceSpan,
    pub verdict: Verdict,
    pub issues: Vec<Issue>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub interface: Option<InterfaceSummary>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub diagnostics: Vec<String>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CheckOptions {
    /// Prove restores by symbolic propagation before raising frame-write alarms.
    pub expression_propagation: bool,
    /// Track liveness per bit rather than per location.
    pub bit_level_liveness: bool,
}

impl Default for CheckOptions {
    fn default() -> Self {
        CheckOptions {
            expression_propagation: true,
            bit_level_liveness: true,
        }
    }
}

/// Everything the analyses need about one chunk.
#[derive(Clone, Debug)]
pub struct Prepared {
    pub fi: FormalInterface,
    /// Token-level IR.
    pub program: Program,
    pub resolved: Resolved,
    pub domains: Domains,
}

/// Why a chunk could not be analyzed.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Stop {
    pub verdict: Verdict,
    pub message: String,
    pub interface: Option<FormalInterface>,
}

pub fn prepare(chunk: &ChunkAst) -> Result<Prepared, Stop> {
    let error = |message: String, fi: Option<&FormalInterface>| Stop {
        verdict: Verdict::Error,
        message,
        interface: fi.cloned(),
    };
    let fi = derive_interface(chunk).map_err(|e| error(e.to_string(), None))?;
    let instrs = parse_template(&chunk.template, chunk).map_err(|e| match e {
        TemplateError::UnknownMnemonic(_) => Stop {
            verdict: Verdict::OutOfScope,
            message: e.to_string(),
            interface: Some(fi.clone()),
        },
        e => error(e.to_string(), Some(&fi)),
    })?;
    let program = lift(&instrs, &fi).map_err(|e| match e {
        LiftError::UnknownMnemonic(_) | LiftError::UnknownLabel(_) => Stop {
            verdict: Verdict::OutOfScope,
            message: e.to_string(),
            interface: Some(fi.clone()),
        },
        e => error(e.to_string(), Some(&fi)),
    })?;
    program.validate().map_err(|m| error(format!("ill-formed IR: {m}"), Some(&fi)))?;
    let resolved = resolve(&program, &fi);
    let domains = abstract_domain(&fi);
    Ok(Prepared {
        fi,
        program,
        resolved,
        domains,
    })
}

/// Run the three analyses on a prepared chunk.
pub fn analyze(prep: &Prepared, opts: &CheckOptions) -> Vec<Issue> {
    let fw = propagate(&prep.resolved.program, opts.expression_propagation);
    let mut issues = analyze_frame_write(&prep.resolved, &prep.fi, &fw);
    let seeds = exit_seeds(&prep.resolved, &prep.fi);
    let live = liveness(&prep.resolved.program, &prep.fi, &seeds, opts.bit_level_liveness);
    issues.extend(analyze_frame_read(&prep.resolved, &prep.fi, &live, &fw));
    let restored = restore_seeds(&prep.resolved, &prep.fi, &fw, &seeds);
    if restored == seeds {
        issues.extend(analyze_unicity(&prep.resolved, &prep.fi, &prep.domains, &live, &fw));
    } else {
        let live = liveness(&prep.resolved.program, &prep.fi, &restored, opts.bit_level_liveness);
        issues.extend(analyze_unicity(&prep.resolved, &prep.fi, &prep.domains, &live, &fw));
    }
    normalize(issues)
}

/// Sort by point, then category and location; drop duplicates.
pub fn normalize(mut issues: Vec<Issue>) -> Vec<Issue> {
    issues.sort_by(|a, b| (a.point, a.key()).cmp(&(b.point, b.key())));
    let mut seen = alloc::collections::BTreeSet::new();
    issues.retain(|i| seen.insert(i.key()));
    issues
}

pub fn check_chunk(chunk: &ChunkAst) -> Report {
    check_chunk_with(chunk, &CheckOptions::default())
}

pub fn check_chunk_with(chunk: &ChunkAst, opts: &CheckOptions) -> Report {
    let mut diagnostics = chunk.diagnostics.clone();
    match prepare(chunk) {
        Ok(prep) => {
            let issues = analyze(&prep, opts);
            Report {
                span: chunk.span.clone(),
                verdict: if issues.is_empty() {
                    Verdict::Compliant
                } else {
                    Verdict::Issues
                },
                issues,
                interface: Some(InterfaceSummary::new(&prep.fi)),
                diagnostics,
            }
        }
        Err(stop) => {
            diagnostics.push(stop.message);
            Report {
                span: chunk.span.clone(),
                verdict: stop.verdict,
                issues: Vec::new(),
                interface: stop.interface.as_ref().map(InterfaceSummary::new),
                diagnostics,
            }
        }
    }
}

#[cfg(test)]
mod tests;
