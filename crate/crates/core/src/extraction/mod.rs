//! Locating and parsing extended-asm statements.

pub mod chunk;
pub mod parse;
pub mod scan;

use alloc::string::String;
use alloc::vec::Vec;

pub use chunk::{ChunkAst, ChunkContext, Layout, OperandEntry, Qualifier, SizeAnnotation, SourceSpan};
pub use parse::parse_asm_statement;
pub use scan::{scan_c_source, RawStatement, ScanResult};

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum ExtractError {
    #[error("{}:{}:{}: unterminated asm statement", span.file, span.line, span.column)]
    UnterminatedStatement { span: SourceSpan },
    #[error("{}:{}:{}: malformed interface: {reason}", span.file, span.line, span.column)]
    MalformedInterface { span: SourceSpan, reason: String },
    #[error("{}:{}:{}: bad constraint character {ch:?} in {constraint:?}", span.file, span.line, span.column)]
    BadConstraintChar {
        span: SourceSpan,
        ch: char,
        constraint: String,
    },
}

impl ExtractError {
    pub fn span(&self) -> &SourceSpan {
        match self {
            ExtractError::UnterminatedStatement { span }
            | ExtractError::MalformedInterface { span, .. }
            | ExtractError::BadConstraintChar { span, .. } => span,
        }
    }
}

/// Parse a scanned statement, applying its `size:` annotation.
pub fn parse_raw(raw: &RawStatement) -> Result<ChunkAst, ExtractError> {
    let mut chunk = parse_asm_statement(&raw.text, raw.span.clone())?;
    if let Some(sizes) = &raw.sizes {
        sizes
            .apply(&mut chunk)
            .map_err(|reason| ExtractError::MalformedInterface {
                span: raw.span.clone(),
                reason,
            })?;
    }
    Ok(chunk)
}

/// Scan and parse every statement of a source file, in source order.
pub fn extract_chunks(text: &str, file: &str) -> (Vec<ChunkAst>, Vec<ExtractError>) {
    let scanned = scan_c_source(text, file);
    let mut chunks = Vec::new();
    let mut errors = scanned.errors;
    for raw in &scanned.statements {
        match parse_raw(raw) {
            Ok(c) => chunks.push(c),
            Err(e) => errors.push(e),
        }
    }
    errors.sort_by(|a, b| a.span().cmp(b.span()));
    (chunks, errors)
}
