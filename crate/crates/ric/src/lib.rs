//! File formats, reports and the command-line driver for `ric-core`.

pub mod chunkfile;
pub mod cli;
pub mod driver;
pub mod report;

pub use chunkfile::{load_chunk_file, parse_chunk_file, render_chunk_file, ChunkRecord};
pub use driver::{analyze_chunk, exit_code, Command, Input, RunOptions, RunOutput};
pub use report::{render_text, ChunkReport, RunReport, Style};

#[derive(Debug, thiserror::Error)]
pub enum LoadError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{file}: schema violation at {field}: {message}")]
    SchemaViolation { file: String, field: String, message: String },
}
