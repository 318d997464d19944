//! `ric <check|patch|refine|oracle> [options] FILES...`

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use ric_core::oracle::TrialConfig;
use ric_core::refiner::RefineOptions;

use crate::driver::{exit_code, run_inputs, Command, Input, RunOptions};
use crate::report::{render_text, Style};

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Text,
}

#[derive(Debug, Args)]
pub struct Common {
    #[arg(long, value_enum, default_value = "json")]
    pub format: Format,
    /// Write the report here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Rewrite source files with the patched or refined statements.
    #[arg(long)]
    pub in_place: bool,
    #[arg(long, default_value_t = TrialConfig::default().seed)]
    pub seed: u64,
    #[arg(long, default_value_t = TrialConfig::default().trials)]
    pub trials: u32,
    #[arg(long, default_value_t = TrialConfig::default().assignment_cap)]
    pub assignment_cap: usize,
    #[arg(long)]
    pub no_refine_inputs: bool,
    #[arg(long)]
    pub no_refine_clobbers: bool,
    #[arg(long)]
    pub no_refine_memory: bool,
    /// Pre-extracted chunk file (JSON); may be repeated.
    #[arg(long)]
    pub chunks: Vec<PathBuf>,
    /// Record wall-clock timings in the report.
    #[arg(long)]
    pub timings: bool,
    /// C source files.
    pub files: Vec<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Sub {
    /// Report interface-compliance issues.
    Check(Common),
    /// Propose interface patches for the issues found.
    Patch(Common),
    /// Propose interface refinements.
    Refine(Common),
    /// Test the three properties on random concrete states.
    Oracle(Common),
}

#[derive(Debug, Parser)]
#[command(name = "ric", version, about = "Interface-compliance checker for GNU inline assembly (i386)")]
pub struct Cli {
    #[command(subcommand)]
    pub sub: Sub,
}

impl Sub {
    fn split(self) -> (Command, Common) {
        match self {
            Sub::Check(c) => (Command::Check, c),
            Sub::Patch(c) => (Command::Patch, c),
            Sub::Refine(c) => (Command::Refine, c),
            Sub::Oracle(c) => (Command::Oracle, c),
        }
    }
}

fn options(command: Command, c: &Common) -> Result<RunOptions, String> {
    if c.trials == 0 {
        return Err("--trials must be at least 1".into());
    }
    if c.assignment_cap == 0 {
        return Err("--assignment-cap must be at least 1".into());
    }
    Ok(RunOptions {
        command,
        trial: TrialConfig {
            trials: c.trials,
            seed: c.seed,
            assignment_cap: c.assignment_cap,
            ..TrialConfig::default()
        },
        refine: RefineOptions {
            inputs: !c.no_refine_inputs,
            clobbers: !c.no_refine_clobbers,
            memory: !c.no_refine_memory,
        },
        timings: c.timings,
    })
}

/// Run with the given arguments (program name first); returns the exit code.
pub fn run<I, T>(argv: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = if e.use_stderr() {
                write!(stderr, "{e}")
            } else {
                write!(stdout, "{e}")
            };
            return code;
        }
    };
    let (command, common) = cli.sub.split();
    let opts = match options(command, &common) {
        Ok(o) => o,
        Err(m) => {
            let _ = writeln!(stderr, "ric: {m}");
            return 2;
        }
    };
    if common.files.is_empty() && common.chunks.is_empty() {
        let _ = writeln!(stderr, "ric: no input files");
        return 2;
    }
    let mut inputs = Vec::new();
    for p in &common.files {
        match Input::read_source(p) {
            Ok(i) => inputs.push(i),
            Err(e) => {
                let _ = writeln!(stderr, "ric: {e}");
                return 2;
            }
        }
    }
    for p in &common.chunks {
        match Input::read_chunks(p) {
            Ok(i) => inputs.push(i),
            Err(e) => {
                let _ = writeln!(stderr, "ric: {e}");
                return 2;
            }
        }
    }
    let out = run_inputs(&inputs, &opts);
    for e in &out.errors {
        let _ = writeln!(stderr, "ric: {e}");
    }
    if common.in_place {
        if !common.chunks.is_empty() {
            let _ = writeln!(stderr, "ric: --in-place leaves chunk files unchanged");
        }
        for (path, text) in &out.rewritten {
            if let Err(e) = std::fs::write(path, text) {
                let _ = writeln!(stderr, "ric: {}: {e}", path.display());
                return 2;
            }
        }
    }
    let rendered = match common.format {
        Format::Json => out.report.to_json(),
        Format::Text => render_text(&out.report, Style::from_env()),
    };
    match &common.out {
        Some(p) => {
            if let Err(e) = std::fs::write(p, rendered) {
                let _ = writeln!(stderr, "ric: {}: {e}", p.display());
                return 2;
            }
        }
        None => {
            let _ = stdout.write_all(rendered.as_bytes());
        }
    }
    if !out.errors.is_empty() {
        return 2;
    }
    exit_code(&out.report)
}
