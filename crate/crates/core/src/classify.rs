//! Severity policy, recurrent-pattern tags and run summaries.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use core::fmt;

use serde::Serialize;

use crate::arch::Reg;
use crate::checker::{Category, Issue, Report, Severity, Verdict};
use crate::extraction::ChunkAst;
use crate::ir::template::parse_template;
use crate::ir::Location;

/// Only a missing `"cc"` is benign.
pub fn severity_policy(category: Category) -> Severity {
    if category == Category::FlagClobbered {
        Severity::Benign
    } else {
        Severity::Serious
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum Pattern {
    P1,
    P2,
    P3,
    P4,
    P5,
    P6,
}

impl Pattern {
    pub const ALL: [Pattern; 6] = [Pattern::P1, Pattern::P2, Pattern::P3, Pattern::P4, Pattern::P5, Pattern::P6];

    pub fn omitted(self) -> &'static str {
        match self {
            Pattern::P1 => "\"cc\"",
            Pattern::P2 => "ebx",
            Pattern::P3 => "esp",
            Pattern::P4 => "\"memory\"",
            Pattern::P5 => "MMX register",
            Pattern::P6 => "XMM register",
        }
    }
}

impl fmt::Display for Pattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct PatternTag {
    pub pattern: Option<Pattern>,
    pub rationale: String,
}

fn uses_push_pop(chunk: &ChunkAst) -> bool {
    match parse_template(&chunk.template, chunk) {
        Ok(instrs) => instrs
            .iter()
            .any(|i| i.mnemonic.starts_with("push") || i.mnemonic.starts_with("pop")),
        Err(_) => chunk.template.contains("push") || chunk.template.contains("pop"),
    }
}

fn mentions(issue: &Issue, pred: impl Fn(Location) -> bool) -> bool {
    pred(issue.location) || issue.related.is_some_and(&pred)
}

pub fn classify_pattern(issue: &Issue, chunk: &ChunkAst) -> PatternTag {
    let tag = |p: Pattern, why: &str| PatternTag {
        pattern: Some(p),
        rationale: why.to_string(),
    };
    if issue.category == Category::FlagClobbered {
        return tag(Pattern::P1, "flags written without \"cc\"; compilers treat it as clobbered by default");
    }
    if mentions(issue, |l| l == Location::Reg(Reg::Ebx)) {
        return tag(Pattern::P2, "ebx omitted; relies on its protection in PIC mode");
    }
    if mentions(issue, |l| matches!(l, Location::Reg(Reg::Esp) | Location::Slot(_))) && uses_push_pop(chunk) {
        return tag(Pattern::P3, "esp modified by push/pop; relies on the compiler protecting esp");
    }
    if matches!(issue.category, Category::UnboundMemoryWrite | Category::UnboundMemoryRead)
        && issue.location == Location::Memory
        && chunk.context.single_chunk_function == Some(true)
    {
        return tag(Pattern::P4, "\"memory\" omitted in a function holding a single chunk");
    }
    if mentions(issue, |l| matches!(l, Location::Reg(Reg::Mm(_)))) {
        return tag(Pattern::P5, "MMX register omitted; relies on MMX being caller-saved");
    }
    if mentions(issue, |l| matches!(l, Location::Reg(Reg::Xmm(_)))) {
        return tag(Pattern::P6, "XMM register omitted; relies on no XMM generation");
    }
    PatternTag {
        pattern: None,
        rationale: String::new(),
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct ChunkTotals {
    pub compliant: usize,
    pub benign_only: usize,
    pub serious: usize,
    pub out_of_scope: usize,
    pub error: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct TimingStats {
    pub total_ms: f64,
    pub mean_ms: f64,
    pub max_ms: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct RunSummary {
    pub chunks: usize,
    pub totals: ChunkTotals,
    pub categories: BTreeMap<String, usize>,
    pub severities: BTreeMap<String, usize>,
    pub patterns: BTreeMap<String, usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub timing: Option<TimingStats>,
}

impl RunSummary {
    pub fn add(&mut self, report: &Report, chunk: &ChunkAst) {
        self.chunks += 1;
        match report.verdict {
            Verdict::Compliant => self.totals.compliant += 1,
            Verdict::OutOfScope => self.totals.out_of_scope += 1,
            Verdict::Error => self.totals.error += 1,
            Verdict::Issues => {
                if report.issues.iter().all(|i| i.severity == Severity::Benign) {
                    self.totals.benign_only += 1;
                } else {
                    self.totals.serious += 1;
                }
            }
        }
        for i in &report.issues {
            *self.categories.entry(i.category.name().into()).or_default() += 1;
            *self.severities.entry(i.severity.to_string()).or_default() += 1;
            if let Some(p) = classify_pattern(i, chunk).pattern {
                *self.patterns.entry(p.to_string()).or_default() += 1;
            }
        }
    }

    pub fn record_times(&mut self, millis: &[f64]) {
        if millis.is_empty() {
            return;
        }
        let total: f64 = millis.iter().sum();
        self.timing = Some(TimingStats {
            total_ms: total,
            mean_ms: total / millis.len() as f64,
            max_ms: millis.iter().copied().fold(0.0, f64::max),
        });
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::checker::check_chunk;

    fn first_issue(c: &ChunkAst, cat: Category) -> Issue {
        check_chunk(c)
            .issues
            .into_iter()
            .find(|i| i.category == cat)
            .unwrap()
    }

    #[test]
    fn severity() {
        assert_eq!(severity_policy(Category::FlagClobbered), Severity::Benign);
        assert_eq!(severity_policy(Category::Unicity), Severity::Serious);
        assert_eq!(severity_policy(Category::UnboundRegisterRead), Severity::Serious);
    }

    #[test]
    fn patterns() {
        let c = ChunkAst::new("incl %%ecx");
        let i = first_issue(&c, Category::FlagClobbered);
        assert_eq!(classify_pattern(&i, &c).pattern, Some(Pattern::P1));

        let c = ChunkAst::new("movl $0, %%ebx").clobber("cc");
        let i = first_issue(&c, Category::UnboundRegisterClobbered);
        assert_eq!(classify_pattern(&i, &c).pattern, Some(Pattern::P2));

        let mut c = ChunkAst::new("movl $0, (%0)").input("r", "p", 4);
        c.context.single_chunk_function = Some(true);
        let i = first_issue(&c, Category::UnboundMemoryWrite);
        assert_eq!(classify_pattern(&i, &c).pattern, Some(Pattern::P4));
        c.context.single_chunk_function = None;
        assert_eq!(classify_pattern(&i, &c).pattern, None);
    }
}
