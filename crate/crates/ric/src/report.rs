//! The versioned JSON report and the text view derived from it.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use ric_core::checker::{Category, InterfaceSummary, Issue, Severity, Verdict};
use ric_core::classify::{classify_pattern, Pattern, RunSummary};
use ric_core::extraction::{ChunkAst, SourceSpan};
use ric_core::ir::{Location, TokenId};
use ric_core::oracle::{OracleReport, OracleVerdict};
use ric_core::patcher::{InterfaceEdit, PatchVerification};
use ric_core::refiner::{describe, RefinementEdit};
use serde::Serialize;

pub const SCHEMA: u32 = 1;

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct IssueReport {
    pub category: Category,
    pub severity: Severity,
    pub pattern: Option<Pattern>,
    pub location: Location,
    pub point: usize,
    pub details: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub token: Option<TokenId>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub related: Option<Location>,
}

impl IssueReport {
    pub fn new(issue: &Issue, chunk: &ChunkAst) -> Self {
        IssueReport {
            category: issue.category,
            severity: issue.severity,
            pattern: classify_pattern(issue, chunk).pattern,
            location: issue.location,
            point: issue.point,
            details: issue.details.clone(),
            token: issue.token,
            related: issue.related,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct PatchReport {
    pub edits: Vec<InterfaceEdit>,
    pub unresolved: Vec<IssueReport>,
    pub verification: PatchVerification,
    pub renumber_map: BTreeMap<u8, u8>,
    /// The patched statement, rendered.
    pub statement: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub diff: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct RefinementReport {
    pub edits: Vec<RefinementEdit>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub suggestions: Vec<RefinementEdit>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub statement: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub diff: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Timings {
    pub check_ms: f64,
    pub total_ms: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ChunkReport {
    pub span: SourceSpan,
    pub verdict: Verdict,
    pub issues: Vec<IssueReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub interface: Option<InterfaceSummary>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub diagnostics: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub patch: Option<PatchReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub refinements: Option<RefinementReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub oracle_witness: Option<OracleReport>,
    /// Wall-clock times; null unless requested, so reports stay reproducible.
    pub timings: Option<Timings>,
}

impl ChunkReport {
    pub fn has_issues(&self) -> bool {
        self.verdict == Verdict::Issues
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunReport {
    pub schema: u32,
    pub chunks: Vec<ChunkReport>,
    pub summary: RunSummary,
}

impl RunReport {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Style {
    pub color: bool,
}

impl Style {
    pub fn from_env() -> Style {
        Style {
            color: std::env::var("RIC_COLOR").is_ok_and(|v| v == "1"),
        }
    }

    fn paint(&self, code: &str, s: &str) -> String {
        if self.color {
            format!("\x1b[{code}m{s}\x1b[0m")
        } else {
            s.to_string()
        }
    }

    fn verdict(&self, v: Verdict) -> String {
        let code = match v {
            Verdict::Compliant => "32",
            Verdict::Issues => "31",
            Verdict::OutOfScope => "33",
            Verdict::Error => "35",
        };
        self.paint(code, &v.to_string())
    }

    fn severity(&self, s: Severity) -> String {
        self.paint(if s == Severity::Serious { "1;31" } else { "33" }, &s.to_string())
    }
}

fn span_text(s: &SourceSpan) -> String {
    if s.line == 0 {
        format!("{}#{}", s.file, s.byte_start)
    } else {
        format!("{}:{}:{}", s.file, s.line, s.column)
    }
}

fn oracle_line(out: &mut String, name: &str, v: &OracleVerdict) {
    let _ = match v {
        OracleVerdict::Pass { trials, assignments } => {
            writeln!(out, "  oracle {name}: pass ({trials} trials, {assignments} assignments)")
        }
        OracleVerdict::Inconclusive { reason } => writeln!(out, "  oracle {name}: inconclusive ({reason})"),
        OracleVerdict::Violation(w) => {
            let t: Vec<String> = w
                .assignments
                .iter()
                .map(|a| a.iter().map(|(k, v)| format!("{k}={v}")).collect::<Vec<_>>().join(" "))
                .collect();
            writeln!(out, "  oracle {name}: violation at {} (trial {}; {})", w.location, w.trial, t.join(" vs "))
        }
    };
}

/// Human-oriented rendering of a report.
pub fn render_text(r: &RunReport, style: Style) -> String {
    let mut out = String::new();
    for c in &r.chunks {
        let _ = writeln!(out, "{}: {}", span_text(&c.span), style.verdict(c.verdict));
        for d in &c.diagnostics {
            let _ = writeln!(out, "  note: {d}");
        }
        for i in &c.issues {
            let pattern = i.pattern.map(|p| format!(" [{p}]")).unwrap_or_default();
            let _ = writeln!(
                out,
                "  {} {} at {} (point {}){pattern}: {}",
                style.severity(i.severity),
                i.category,
                i.location,
                i.point,
                i.details
            );
        }
        if let Some(p) = &c.patch {
            let v = &p.verification;
            let _ = writeln!(
                out,
                "  patch: {} edit(s), {} unresolved; framing_ok={} fully_compliant={} satisfiable={}",
                p.edits.len(),
                p.unresolved.len(),
                v.framing_ok,
                v.fully_compliant,
                v.interface_satisfiable
            );
            match &p.diff {
                Some(d) => out.push_str(d),
                None if !p.edits.is_empty() => {
                    let _ = writeln!(out, "  {}", p.statement);
                }
                None => {}
            }
        }
        if let Some(rf) = &c.refinements {
            for e in &rf.edits {
                let _ = writeln!(out, "  refine: {}", describe(e));
            }
            for e in &rf.suggestions {
                let _ = writeln!(out, "  suggest: {}", describe(e));
            }
            if let Some(n) = &rf.note {
                let _ = writeln!(out, "  refine note: {n}");
            }
            if let Some(d) = &rf.diff {
                out.push_str(d);
            }
        }
        if let Some(o) = &c.oracle_witness {
            for (p, v) in o.verdicts() {
                oracle_line(&mut out, p.name(), v);
            }
        }
    }
    let s = &r.summary;
    let t = &s.totals;
    let _ = writeln!(
        out,
        "{} chunk(s): {} compliant, {} benign only, {} serious, {} out of scope, {} error",
        s.chunks, t.compliant, t.benign_only, t.serious, t.out_of_scope, t.error
    );
    for (k, v) in &s.categories {
        let _ = writeln!(out, "  {k}: {v}");
    }
    if !s.patterns.is_empty() {
        let p: Vec<String> = s.patterns.iter().map(|(k, v)| format!("{k}={v}")).collect();
        let _ = writeln!(out, "  patterns: {}", p.join(" "));
    }
    if let Some(tm) = &s.timing {
        let _ = writeln!(out, "  time: {:.2} ms total, {:.2} ms mean, {:.2} ms max", tm.total_ms, tm.mean_ms, tm.max_ms);
    }
    out
}
