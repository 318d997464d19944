//! Pre-extracted chunk files: a JSON array of statement records.

use std::collections::BTreeSet;
use std::path::Path;

use ric_core::extraction::parse::check_constraint_chars;
use ric_core::extraction::{ChunkAst, ChunkContext, OperandEntry, Qualifier, SourceSpan};
use serde::{Deserialize, Serialize};

use crate::LoadError;

#[derive(Clone, Debug, PartialEq, Eq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct EntryRecord {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub constraint: String,
    pub size_bytes: u8,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expr_text: Option<String>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ContextRecord {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub file: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub line: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub single_chunk_function: Option<bool>,
}

fn i386() -> String {
    "i386".into()
}

#[derive(Clone, Debug, PartialEq, Eq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ChunkRecord {
    #[serde(default = "i386")]
    pub arch: String,
    pub template: String,
    #[serde(default)]
    pub outputs: Vec<EntryRecord>,
    #[serde(default)]
    pub inputs: Vec<EntryRecord>,
    #[serde(default)]
    pub clobbers: Vec<String>,
    #[serde(default)]
    pub qualifiers: Vec<String>,
    #[serde(default)]
    pub context: ContextRecord,
}

fn violation(file: &str, field: String, message: impl Into<String>) -> LoadError {
    LoadError::SchemaViolation {
        file: file.into(),
        field,
        message: message.into(),
    }
}

fn entry(file: &str, at: String, r: &EntryRecord) -> Result<OperandEntry, LoadError> {
    if ![1, 2, 4, 8].contains(&r.size_bytes) {
        return Err(violation(
            file,
            format!("{at}.size_bytes"),
            format!("{} is not one of 1, 2, 4, 8", r.size_bytes),
        ));
    }
    if let Err(c) = check_constraint_chars(&r.constraint) {
        return Err(violation(file, format!("{at}.constraint"), format!("unsupported character {c:?}")));
    }
    Ok(OperandEntry {
        name: r.name.clone(),
        constraint: r.constraint.clone(),
        expr_text: r.expr_text.clone().unwrap_or_default(),
        size_bytes: r.size_bytes,
        position: 0,
    })
}

impl ChunkRecord {
    pub fn to_chunk(&self, file: &str, index: usize) -> Result<ChunkAst, LoadError> {
        let at = format!("[{index}]");
        if self.arch != "i386" {
            return Err(violation(file, format!("{at}.arch"), format!("unsupported architecture {:?}", self.arch)));
        }
        let mut qualifiers = BTreeSet::new();
        for (k, q) in self.qualifiers.iter().enumerate() {
            let q = Qualifier::parse(q)
                .ok_or_else(|| violation(file, format!("{at}.qualifiers[{k}]"), format!("unknown qualifier {q:?}")))?;
            qualifiers.insert(q);
        }
        let mut chunk = ChunkAst::new(self.template.clone());
        chunk.qualifiers = qualifiers;
        for (j, e) in self.outputs.iter().enumerate() {
            chunk.outputs.push(entry(file, format!("{at}.outputs[{j}]"), e)?);
        }
        for (j, e) in self.inputs.iter().enumerate() {
            chunk.inputs.push(entry(file, format!("{at}.inputs[{j}]"), e)?);
        }
        chunk.renumber();
        chunk.clobbers.clone_from(&self.clobbers);
        chunk.context = ChunkContext {
            single_chunk_function: self.context.single_chunk_function,
            notes: String::new(),
        };
        chunk.span = SourceSpan {
            file: self.context.file.clone().unwrap_or_else(|| file.into()),
            line: self.context.line.unwrap_or(0),
            column: 0,
            byte_start: index,
            byte_end: index,
        };
        Ok(chunk)
    }

    pub fn from_chunk(chunk: &ChunkAst) -> ChunkRecord {
        let entry = |e: &OperandEntry| EntryRecord {
            name: e.name.clone(),
            constraint: e.constraint.clone(),
            size_bytes: e.size_bytes,
            expr_text: (!e.expr_text.is_empty()).then(|| e.expr_text.clone()),
        };
        ChunkRecord {
            arch: i386(),
            template: chunk.template.clone(),
            outputs: chunk.outputs.iter().map(entry).collect(),
            inputs: chunk.inputs.iter().map(entry).collect(),
            clobbers: chunk.clobbers.clone(),
            qualifiers: chunk
                .qualifiers
                .iter()
                .map(|q| serde_json::to_value(q).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default())
                .collect(),
            context: ContextRecord {
                file: (!chunk.span.file.is_empty()).then(|| chunk.span.file.clone()),
                line: (chunk.span.line != 0).then_some(chunk.span.line),
                single_chunk_function: chunk.context.single_chunk_function,
            },
        }
    }
}

/// Parse chunk-file text; `file` names it in errors and spans.
pub fn parse_chunk_file(text: &str, file: &str) -> Result<Vec<ChunkAst>, LoadError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let records: Vec<ChunkRecord> = serde_path_to_error::deserialize(de).map_err(|e| {
        let field = e.path().to_string();
        violation(file, field, e.into_inner().to_string())
    })?;
    records.iter().enumerate().map(|(i, r)| r.to_chunk(file, i)).collect()
}

pub fn load_chunk_file(path: &Path) -> Result<Vec<ChunkAst>, LoadError> {
    let text = std::fs::read_to_string(path).map_err(|source| LoadError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_chunk_file(&text, &path.display().to_string())
}

pub fn render_chunk_file(chunks: &[ChunkAst]) -> String {
    let records: Vec<ChunkRecord> = chunks.iter().map(ChunkRecord::from_chunk).collect();
    let mut s = serde_json::to_string_pretty(&records).unwrap_or_default();
    s.push('\n');
    s
}
