//! Runs a subcommand over loaded inputs and assembles the report.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use ric_core::checker::{check_chunk, Report, Verdict};
use ric_core::classify::RunSummary;
use ric_core::extraction::{extract_chunks, ChunkAst};
use ric_core::oracle::{oracle_chunk, TrialConfig};
use ric_core::patcher::{apply_to_source, synthesize_patches, unified_diff, verify_patch, Rewrite};
use ric_core::refiner::{refine_chunk, RefineOptions};

use crate::chunkfile::load_chunk_file;
use crate::report::{ChunkReport, IssueReport, PatchReport, RefinementReport, RunReport, Timings, SCHEMA};
use crate::LoadError;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Command {
    Check,
    Patch,
    Refine,
    Oracle,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunOptions {
    pub command: Command,
    pub trial: TrialConfig,
    pub refine: RefineOptions,
    pub timings: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            command: Command::Check,
            trial: TrialConfig::default(),
            refine: RefineOptions::default(),
            timings: false,
        }
    }
}

/// A loaded input: C source text, or the chunks of a chunk file.
#[derive(Clone, Debug)]
pub enum Input {
    Source { path: PathBuf, text: String },
    Chunks { path: PathBuf, chunks: Vec<ChunkAst> },
}

impl Input {
    pub fn read_source(path: &Path) -> Result<Input, LoadError> {
        let text = std::fs::read_to_string(path).map_err(|source| LoadError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Ok(Input::Source {
            path: path.to_path_buf(),
            text,
        })
    }

    pub fn read_chunks(path: &Path) -> Result<Input, LoadError> {
        Ok(Input::Chunks {
            path: path.to_path_buf(),
            chunks: load_chunk_file(path)?,
        })
    }
}

struct Job<'a> {
    chunk: ChunkAst,
    source: Option<&'a str>,
}

pub struct Analyzed {
    pub report: ChunkReport,
    pub check: Report,
    pub chunk: ChunkAst,
    pub rewrite: Option<Rewrite>,
    pub check_ms: f64,
}

fn diff_for(source: Option<&str>, rw: &Rewrite) -> Option<String> {
    let src = source?;
    let new = apply_to_source(src, std::slice::from_ref(rw)).ok()?;
    Some(unified_diff(&rw.original.span.file, src, &new))
}

/// Run the subcommand on one chunk; `source` is the full text of its file, if any.
pub fn analyze_chunk(chunk: &ChunkAst, source: Option<&str>, opts: &RunOptions) -> Analyzed {
    let start = Instant::now();
    let check = check_chunk(chunk);
    let check_ms = start.elapsed().as_secs_f64() * 1e3;
    let mut report = ChunkReport {
        span: chunk.span.clone(),
        verdict: check.verdict,
        issues: check.issues.iter().map(|i| IssueReport::new(i, chunk)).collect(),
        interface: check.interface.clone(),
        diagnostics: check.diagnostics.clone(),
        patch: None,
        refinements: None,
        oracle_witness: None,
        timings: None,
    };
    let mut rewrite = None;
    match opts.command {
        Command::Check => {}
        Command::Patch if check.verdict == Verdict::Issues => {
            let pr = synthesize_patches(chunk, &check.issues);
            let rw = pr.rewrite();
            let changed = !pr.edits.is_empty();
            report.patch = Some(PatchReport {
                edits: pr.edits.clone(),
                unresolved: pr.unresolved.iter().map(|i| IssueReport::new(i, chunk)).collect(),
                verification: verify_patch(&pr),
                renumber_map: pr.renumber_map.clone(),
                statement: pr.patched.render(),
                diff: if changed { diff_for(source, &rw) } else { None },
            });
            if changed {
                rewrite = Some(rw);
            }
        }
        Command::Patch => {}
        Command::Refine => {
            let rf = refine_chunk(chunk, &opts.refine);
            let rw = rf.rewrite.clone().filter(|r| !r.is_identity());
            report.refinements = Some(RefinementReport {
                edits: rf.edits.clone(),
                suggestions: rf.suggestions.clone(),
                note: rf.note.clone(),
                statement: rw.as_ref().map(|r| r.patched.render()),
                diff: rw.as_ref().and_then(|r| diff_for(source, r)),
            });
            rewrite = rw;
        }
        Command::Oracle => {
            if matches!(check.verdict, Verdict::Compliant | Verdict::Issues) {
                report.oracle_witness = Some(oracle_chunk(chunk, &opts.trial));
            }
        }
    }
    if opts.timings {
        report.timings = Some(Timings {
            check_ms,
            total_ms: start.elapsed().as_secs_f64() * 1e3,
        });
    }
    Analyzed {
        report,
        check,
        chunk: chunk.clone(),
        rewrite,
        check_ms,
    }
}

pub struct RunOutput {
    pub report: RunReport,
    /// New contents for source files whose statements were rewritten.
    pub rewritten: BTreeMap<PathBuf, String>,
    pub errors: Vec<String>,
}

/// Exit status: 1 on issues or oracle violations, else 3 if anything was
/// out of scope or unparsable, else 0.
pub fn exit_code(r: &RunReport) -> i32 {
    let violation = r
        .chunks
        .iter()
        .any(|c| c.oracle_witness.as_ref().is_some_and(|o| o.any_violation()));
    if violation || r.chunks.iter().any(ChunkReport::has_issues) {
        1
    } else if r
        .chunks
        .iter()
        .any(|c| matches!(c.verdict, Verdict::OutOfScope | Verdict::Error))
    {
        3
    } else {
        0
    }
}

fn error_chunk(chunk: ChunkAst, message: String) -> Analyzed {
    let check = Report {
        span: chunk.span.clone(),
        verdict: Verdict::Error,
        issues: Vec::new(),
        interface: None,
        diagnostics: vec![message],
    };
    Analyzed {
        report: ChunkReport {
            span: check.span.clone(),
            verdict: Verdict::Error,
            issues: Vec::new(),
            interface: None,
            diagnostics: check.diagnostics.clone(),
            patch: None,
            refinements: None,
            oracle_witness: None,
            timings: None,
        },
        check,
        chunk,
        rewrite: None,
        check_ms: 0.0,
    }
}

pub fn run_inputs(inputs: &[Input], opts: &RunOptions) -> RunOutput {
    let mut jobs: Vec<Job> = Vec::new();
    let mut failed: Vec<Analyzed> = Vec::new();
    let mut sources: BTreeMap<String, (&Path, &str)> = BTreeMap::new();
    for input in inputs {
        match input {
            Input::Source { path, text } => {
                let file = path.display().to_string();
                let (chunks, errors) = extract_chunks(text, &file);
                for e in errors {
                    let mut c = ChunkAst::new("");
                    c.span = e.span().clone();
                    failed.push(error_chunk(c, e.to_string()));
                }
                jobs.extend(chunks.into_iter().map(|chunk| Job {
                    chunk,
                    source: Some(text.as_str()),
                }));
                sources.insert(file, (path.as_path(), text.as_str()));
            }
            Input::Chunks { chunks, .. } => {
                jobs.extend(chunks.iter().cloned().map(|chunk| Job { chunk, source: None }));
            }
        }
    }
    let mut analyzed: Vec<Analyzed> = jobs
        .par_iter()
        .map(|j| analyze_chunk(&j.chunk, j.source, opts))
        .collect();
    analyzed.extend(failed);
    analyzed.sort_by(|a, b| a.report.span.cmp(&b.report.span));

    let mut summary = RunSummary::default();
    for a in &analyzed {
        summary.add(&a.check, &a.chunk);
    }
    if opts.timings {
        let times: Vec<f64> = analyzed.iter().map(|a| a.check_ms).collect();
        summary.record_times(&times);
    }

    let mut per_file: BTreeMap<String, Vec<Rewrite>> = BTreeMap::new();
    for a in &analyzed {
        if let Some(rw) = &a.rewrite {
            if sources.contains_key(&a.chunk.span.file) {
                per_file.entry(a.chunk.span.file.clone()).or_default().push(rw.clone());
            }
        }
    }
    let mut rewritten = BTreeMap::new();
    let mut errors = Vec::new();
    for (file, rws) in per_file {
        let (path, text) = sources[&file];
        match apply_to_source(text, &rws) {
            Ok(new) if new != text => {
                rewritten.insert(path.to_path_buf(), new);
            }
            Ok(_) => {}
            Err(e) => errors.push(e.to_string()),
        }
    }
    RunOutput {
        report: RunReport {
            schema: SCHEMA,
            chunks: analyzed.into_iter().map(|a| a.report).collect(),
            summary,
        },
        rewritten,
        errors,
    }
}
