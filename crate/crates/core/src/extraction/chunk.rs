use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt::Write;
use core::ops::Range;

use serde::Serialize;

#[derive(Clone, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct SourceSpan {
    pub file: String,
    pub line: u32,
    pub column: u32,
    pub byte_start: usize,
    pub byte_end: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct OperandEntry {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub constraint: String,
    pub expr_text: String,
    pub size_bytes: u8,
    pub position: u8,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Qualifier {
    Volatile,
    Inline,
    Goto,
}

impl Qualifier {
    pub fn parse(word: &str) -> Option<Qualifier> {
        match word {
            "volatile" | "__volatile" | "__volatile__" => Some(Qualifier::Volatile),
            "inline" | "__inline" | "__inline__" => Some(Qualifier::Inline),
            "goto" => Some(Qualifier::Goto),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct ChunkContext {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub single_chunk_function: Option<bool>,
    #[serde(skip_serializing_if = "String::is_empty")]
    pub notes: String,
}

/// Byte ranges of the statement's pieces, relative to the start of the
/// statement text. Only present for chunks parsed from source text.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Layout {
    pub template_literals: Vec<Range<usize>>,
    /// Offset of each section's leading colon (outputs, inputs, clobbers, labels).
    pub colons: Vec<usize>,
    /// Whole-entry range and constraint-literal range, outputs then inputs.
    pub entries: Vec<(Range<usize>, Range<usize>)>,
    pub clobbers: Vec<Range<usize>>,
    /// Offset of the closing parenthesis of the statement.
    pub close_paren: usize,
}

/// A parsed extended-asm statement.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ChunkAst {
    pub span: SourceSpan,
    pub qualifiers: BTreeSet<Qualifier>,
    pub template: String,
    pub outputs: Vec<OperandEntry>,
    pub inputs: Vec<OperandEntry>,
    pub clobbers: Vec<String>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub goto_labels: Vec<String>,
    pub context: ChunkContext,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub diagnostics: Vec<String>,
    #[serde(skip)]
    pub layout: Option<Layout>,
    /// Original statement text when parsed from source.
    #[serde(skip)]
    pub raw: Option<String>,
}

impl ChunkAst {
    pub fn new(template: impl Into<String>) -> Self {
        ChunkAst {
            span: SourceSpan::default(),
            qualifiers: BTreeSet::new(),
            template: template.into(),
            outputs: Vec::new(),
            inputs: Vec::new(),
            clobbers: Vec::new(),
            goto_labels: Vec::new(),
            context: ChunkContext::default(),
            diagnostics: Vec::new(),
            layout: None,
            raw: None,
        }
    }

    pub fn output(mut self, constraint: &str, expr: &str, size: u8) -> Self {
        self.outputs.push(OperandEntry {
            name: None,
            constraint: constraint.into(),
            expr_text: expr.into(),
            size_bytes: size,
            position: 0,
        });
        self.renumber();
        self
    }

    pub fn input(mut self, constraint: &str, expr: &str, size: u8) -> Self {
        self.inputs.push(OperandEntry {
            name: None,
            constraint: constraint.into(),
            expr_text: expr.into(),
            size_bytes: size,
            position: 0,
        });
        self.renumber();
        self
    }

    pub fn clobber(mut self, name: &str) -> Self {
        self.clobbers.push(name.into());
        self
    }

    /// Recompute dense positions over outputs ++ inputs.
    pub fn renumber(&mut self) {
        for (i, e) in self.outputs.iter_mut().chain(self.inputs.iter_mut()).enumerate() {
            e.position = i as u8;
        }
    }

    pub fn entries(&self) -> impl Iterator<Item = &OperandEntry> {
        self.outputs.iter().chain(self.inputs.iter())
    }

    pub fn entry(&self, position: usize) -> Option<&OperandEntry> {
        self.entries().nth(position)
    }

    pub fn position_of_name(&self, name: &str) -> Option<usize> {
        self.entries()
            .position(|e| e.name.as_deref() == Some(name))
    }

    pub fn is_output(&self, position: usize) -> bool {
        position < self.outputs.len()
    }

    /// Structural equality ignoring provenance (span, layout, raw text, diagnostics).
    pub fn same_structure(&self, other: &ChunkAst) -> bool {
        self.qualifiers == other.qualifiers
            && self.template == other.template
            && self.outputs == other.outputs
            && self.inputs == other.inputs
            && self.clobbers == other.clobbers
            && self.goto_labels == other.goto_labels
    }

    /// Render as a C statement. Parsing the result yields a structurally equal chunk.
    pub fn render(&self) -> String {
        let mut s = String::from("__asm__");
        for q in &self.qualifiers {
            s.push_str(match q {
                Qualifier::Volatile => " __volatile__",
                Qualifier::Inline => " __inline__",
                Qualifier::Goto => " goto",
            });
        }
        s.push_str(" (");
        s.push_str(&c_string_literal(&self.template));
        let entry = |e: &OperandEntry| {
            let mut t = String::new();
            if let Some(n) = &e.name {
                let _ = write!(t, "[{n}] ");
            }
            let _ = write!(t, "{} ({})", c_string_literal(&e.constraint), e.expr_text);
            t
        };
        let mut sections: Vec<String> = Vec::new();
        sections.push(self.outputs.iter().map(entry).collect::<Vec<_>>().join(", "));
        sections.push(self.inputs.iter().map(entry).collect::<Vec<_>>().join(", "));
        sections.push(
            self.clobbers
                .iter()
                .map(|c| c_string_literal(c))
                .collect::<Vec<_>>()
                .join(", "),
        );
        sections.push(self.goto_labels.join(", "));
        while sections.last().is_some_and(|s| s.is_empty()) {
            sections.pop();
        }
        for sec in sections {
            if sec.is_empty() {
                s.push_str(" :");
            } else {
                let _ = write!(s, " : {sec}");
            }
        }
        s.push_str(");");
        s
    }
}

/// Quote and escape a string as a C literal.
pub fn c_string_literal(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    out.push('"');
    for c in s.chars() {
        match c {
            '\n' => out.push_str("\\n"),
            '\t' => out.push_str("\\t"),
            '\r' => out.push_str("\\r"),
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            c if (c as u32) < 0x20 => {
                let _ = write!(out, "\\{:03o}", c as u32);
            }
            c => out.push(c),
        }
    }
    out.push('"');
    out
}

/// `size:` side annotation: operand sizes in bytes, outputs `|` inputs.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SizeAnnotation {
    pub outputs: Vec<u8>,
    pub inputs: Vec<u8>,
}

impl SizeAnnotation {
    /// Parses `8,1 | 8,4,4,4,4` (commas or spaces between sizes).
    pub fn parse(s: &str) -> Option<SizeAnnotation> {
        let (o, i) = s.split_once('|').unwrap_or((s, ""));
        let nums = |part: &str| -> Option<Vec<u8>> {
            part.split(|c: char| c == ',' || c.is_whitespace())
                .filter(|p| !p.is_empty())
                .map(|p| p.parse::<u8>().ok().filter(|n| matches!(n, 1 | 2 | 4 | 8)))
                .collect()
        };
        Some(SizeAnnotation {
            outputs: nums(o)?,
            inputs: nums(i)?,
        })
    }

    pub fn apply(&self, chunk: &mut ChunkAst) -> Result<(), String> {
        if self.outputs.len() > chunk.outputs.len() || self.inputs.len() > chunk.inputs.len() {
            return Err(format!(
                "size annotation lists {}|{} operands, statement has {}|{}",
                self.outputs.len(),
                self.inputs.len(),
                chunk.outputs.len(),
                chunk.inputs.len()
            ));
        }
        for (e, s) in chunk.outputs.iter_mut().zip(&self.outputs) {
            e.size_bytes = *s;
        }
        for (e, s) in chunk.inputs.iter_mut().zip(&self.inputs) {
            e.size_bytes = *s;
        }
        Ok(())
    }
}
