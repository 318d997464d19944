//! One PASS/FAIL line per acceptance criterion; exits non-zero if any fails.

use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;
use std::time::Instant;

use ric::driver::{run_inputs, Command, Input, RunOptions};
use ric::load_chunk_file;
use ric_core::arch::Reg;
use ric_core::checker::{check_chunk, check_chunk_with, Category, CheckOptions, InterfaceSummary, Severity, Verdict};
use ric_core::classify::{classify_pattern, severity_policy, Pattern};
use ric_core::extraction::{extract_chunks, ChunkAst};
use ric_core::interface::{derive_interface, eval_letter, OperandClass};
use ric_core::ir::{Location, TokenId};
use ric_core::oracle::{oracle_chunk, TrialConfig};
use ric_core::patcher::{synthesize_patches, verify_patch, InterfaceEdit};
use ric_core::refiner::{refine_chunk, RefineOptions, RefinementEdit};
use serde_json::Value;

type Outcome = Result<String, String>;

fn dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
}

fn corpus() -> Vec<ChunkAst> {
    load_chunk_file(&dir().join("corpus/chunks.json")).expect("corpus loads")
}

fn labels() -> BTreeMap<String, Value> {
    let text = std::fs::read_to_string(dir().join("corpus/labels.json")).expect("labels exist");
    serde_json::from_str(&text).expect("labels parse")
}

fn by_id<'a>(chunks: &'a [ChunkAst], id: &str) -> Result<&'a ChunkAst, String> {
    chunks
        .iter()
        .find(|c| c.span.file == id)
        .ok_or_else(|| format!("corpus lacks {id}"))
}

fn ensure(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn motivating() -> Result<ChunkAst, String> {
    let path = dir().join("tests/fixtures/atomic_ops.c");
    let text = std::fs::read_to_string(&path).map_err(|e| e.to_string())?;
    let (chunks, errors) = extract_chunks(&text, "atomic_ops.c");
    ensure(errors.is_empty() && chunks.len() == 1, format!("extraction: {errors:?}"))?;
    Ok(chunks.into_iter().next().unwrap())
}

fn criterion_1() -> Outcome {
    let c = motivating()?;
    let start = Instant::now();
    let r = check_chunk(&c);
    let elapsed = start.elapsed();
    let serious: Vec<_> = r.issues.iter().filter(|i| i.severity == Severity::Serious).collect();
    ensure(serious.len() == 2, format!("{} serious findings", serious.len()))?;
    ensure(
        serious
            .iter()
            .any(|i| i.category == Category::ReadOnlyInputClobbered && i.location == Location::Reg(Reg::Edx)),
        "no read-only input clobbered on edx",
    )?;
    ensure(
        serious.iter().any(|i| {
            i.category == Category::Unicity
                && i.location == Location::Reg(Reg::Ebx)
                && i.related == Some(Location::Token(TokenId(0)))
        }),
        "no unicity finding between ebx and %0",
    )?;
    ensure(
        !r.issues.iter().any(|i| {
            i.category.is_frame_write() && matches!(i.location, Location::Reg(Reg::Ebx) | Location::Reg(Reg::Esi))
        }),
        "frame-write finding on ebx or esi",
    )?;
    ensure(elapsed.as_secs_f64() < 1.0, format!("took {elapsed:?}"))?;
    Ok(format!("2 serious findings (edx, ebx vs %0) in {:.1} ms", elapsed.as_secs_f64() * 1e3))
}

fn strings(xs: &[&str]) -> Vec<String> {
    xs.iter().map(|s| s.to_string()).collect()
}

fn criterion_2() -> Outcome {
    let fi = derive_interface(&motivating()?).map_err(|e| e.to_string())?;
    let s = InterfaceSummary::new(&fi);
    ensure(s.b_o == strings(&["%0", "%1"]), format!("B_O = {:?}", s.b_o))?;
    ensure(s.b_i == strings(&["%2", "%3", "%5", "%6"]), format!("B_I = {:?}", s.b_i))?;
    ensure(
        s.unified.get("%4").map(String::as_str) == Some("%1"),
        format!("unified = {:?}", s.unified),
    )?;
    ensure(s.s_c.is_empty(), format!("S_C = {:?}", s.s_c))?;
    ensure(!s.f, "F is true")?;
    let fixed: BTreeMap<String, String> = [("%1", "eax"), ("%3", "edx"), ("%5", "ecx"), ("%6", "edi")]
        .iter()
        .map(|(a, b)| (a.to_string(), b.to_string()))
        .collect();
    ensure(s.fixed == fixed, format!("fixed = {:?}", s.fixed))?;
    Ok("B_O, B_I, unification, S_C, F and fixed registers match".into())
}

fn criterion_3() -> Outcome {
    let c = motivating()?;
    let pr = synthesize_patches(&c, &check_chunk(&c).issues);
    ensure(pr.unresolved.is_empty(), format!("unresolved: {:?}", pr.unresolved))?;
    ensure(
        pr.edits.contains(&InterfaceEdit::AddClobber { name: "ebx".into() }),
        "no AddClobber(ebx)",
    )?;
    let dummy = pr.edits.iter().find_map(|e| match e {
        InterfaceEdit::AddOutput {
            constraint,
            matched_input,
            ..
        } => Some((constraint.as_str(), *matched_input)),
        _ => None,
    });
    ensure(dummy == Some(("=d", Some(3))), format!("dummy output: {dummy:?}"))?;
    let dummy_pos = pr.patched.outputs.len() - 1;
    let old_val2 = pr.patched.inputs.iter().find(|e| e.expr_text == "old_val2");
    ensure(
        old_val2.is_some_and(|e| e.constraint == dummy_pos.to_string()),
        "edx input is not matched to the dummy",
    )?;
    let v = verify_patch(&pr);
    ensure(v.framing_ok && v.fully_compliant, format!("{v:?}"))?;
    Ok(format!("\"=d\" dummy %{dummy_pos} with matching input plus ebx clobber; re-check compliant"))
}

fn criterion_4() -> Outcome {
    use Reg::*;
    let regs = OperandClass::registers;
    let q = [Eax, Ebx, Ecx, Edx];
    let r = [Eax, Ebx, Ecx, Edx, Esi, Edi, Ebp];
    let table = [
        ('a', regs(&[Eax])),
        ('b', regs(&[Ebx])),
        ('c', regs(&[Ecx])),
        ('d', regs(&[Edx])),
        ('S', regs(&[Esi])),
        ('D', regs(&[Edi])),
        ('U', regs(&[Eax, Ecx, Edx])),
        ('q', regs(&q)),
        ('Q', regs(&q)),
        ('r', regs(&r)),
        ('R', regs(&r)),
        ('i', OperandClass::immediate()),
        ('n', OperandClass::immediate()),
        ('p', OperandClass::memory()),
        ('m', OperandClass::memory()),
        ('g', OperandClass::immediate().union(&regs(&r)).union(&OperandClass::memory())),
    ];
    for (letter, want) in &table {
        let got = eval_letter(*letter).map_err(|e| e.to_string())?;
        ensure(&got == want, format!("'{letter}' gives {got}, expected {want}"))?;
    }
    Ok(format!("{} letters", table.len()))
}

fn criterion_5(chunks: &[ChunkAst]) -> Outcome {
    ensure(chunks.len() >= 60, format!("{} chunks", chunks.len()))?;
    let cfg = TrialConfig {
        trials: 100,
        assignment_cap: 256,
        seed: 0x5eed,
        ..TrialConfig::default()
    };
    let start = Instant::now();
    let mut compliant = 0;
    let mut bad = Vec::new();
    let mut caught = 0;
    for c in chunks {
        let verdict = check_chunk(c).verdict;
        if !matches!(verdict, Verdict::Compliant | Verdict::Issues) {
            continue;
        }
        let o = oracle_chunk(c, &cfg);
        if verdict == Verdict::Compliant {
            compliant += 1;
            if o.any_violation() {
                bad.push(c.span.file.clone());
            }
        } else if o.any_violation() {
            caught += 1;
        }
    }
    let elapsed = start.elapsed();
    ensure(bad.is_empty(), format!("oracle violations on compliant chunks: {bad:?}"))?;
    ensure(elapsed.as_secs_f64() < 60.0, format!("took {elapsed:?}"))?;
    Ok(format!(
        "{} chunks, {compliant} compliant with no witness, {caught} flagged chunks confirmed, {:.1} s",
        chunks.len(),
        elapsed.as_secs_f64()
    ))
}

fn alarms(c: &ChunkAst, opts: &CheckOptions, pred: fn(Category) -> bool) -> usize {
    check_chunk_with(c, opts).issues.iter().filter(|i| pred(i.category)).count()
}

fn suite<'a>(chunks: &'a [ChunkAst], prefix: &str) -> Vec<&'a ChunkAst> {
    chunks.iter().filter(|c| c.span.file.starts_with(prefix)).collect()
}

fn ablation(suite: &[&ChunkAst], off: CheckOptions, pred: fn(Category) -> bool, what: &str) -> Outcome {
    ensure(suite.len() >= 5, format!("{} {what} chunks", suite.len()))?;
    let on = CheckOptions::default();
    for c in suite {
        ensure(alarms(c, &off, pred) > 0, format!("{}: no alarm when disabled", c.span.file))?;
        ensure(alarms(c, &on, pred) == 0, format!("{}: alarm when enabled", c.span.file))?;
    }
    Ok(format!("{} {what} chunks alarm only when disabled", suite.len()))
}

fn criterion_6(chunks: &[ChunkAst]) -> Outcome {
    let restore = ablation(
        &suite(chunks, "restore-"),
        CheckOptions {
            expression_propagation: false,
            ..CheckOptions::default()
        },
        Category::is_frame_write,
        "restore",
    )?;
    let subreg = ablation(
        &suite(chunks, "subreg-"),
        CheckOptions {
            bit_level_liveness: false,
            ..CheckOptions::default()
        },
        Category::is_frame_read,
        "sub-register",
    )?;
    Ok(format!("{restore}; {subreg}"))
}

fn criterion_7(chunks: &[ChunkAst]) -> Outcome {
    let opts = RefineOptions::default();
    let tom = by_id(chunks, "libtomcrypt-load32")?;
    let r = refine_chunk(tom, &opts);
    ensure(
        matches!(r.edits.first(), Some(RefinementEdit::MemoryToEntries { .. })),
        format!("libtomcrypt edits: {:?}", r.edits),
    )?;
    let refined = r.refined().ok_or("no refined chunk")?;
    ensure(!refined.clobbers.iter().any(|c| c == "memory"), "\"memory\" kept")?;
    ensure(
        refined.inputs.iter().any(|e| e.constraint == "m"),
        "no \"m\" entry added",
    )?;
    ensure(check_chunk(refined).verdict == Verdict::Compliant, "refined chunk is not compliant")?;
    for id in ["refine-dead-input", "refine-dead-clobber"] {
        let r = refine_chunk(by_id(chunks, id)?, &opts);
        let drops = r
            .edits
            .iter()
            .filter(|e| matches!(e, RefinementEdit::DropInput { .. } | RefinementEdit::DropClobber { .. }))
            .count();
        ensure(drops == 1 && r.edits.len() == 1, format!("{id}: {:?}", r.edits))?;
    }
    Ok("memory replaced by \"m\" entry and compliant; one drop per dead fixture".into())
}

fn criterion_8(chunks: &[ChunkAst]) -> Outcome {
    let mut total = 0.0;
    for c in chunks {
        let start = Instant::now();
        let _ = check_chunk(c);
        total += start.elapsed().as_secs_f64() * 1e3;
    }
    let mean = total / chunks.len() as f64;
    ensure(mean <= 100.0, format!("mean {mean:.2} ms"))?;
    Ok(format!("mean {mean:.2} ms per chunk"))
}

fn label_set(v: &Value, key: &str) -> BTreeSet<String> {
    v[key]
        .as_array()
        .map(|a| a.iter().filter_map(|x| x.as_str().map(String::from)).collect())
        .unwrap_or_default()
}

fn criterion_9(chunks: &[ChunkAst]) -> Outcome {
    let labels = labels();
    let mut categories = BTreeSet::new();
    let mut patterns = BTreeSet::new();
    for c in chunks {
        let id = &c.span.file;
        let want = labels.get(id).ok_or_else(|| format!("{id} unlabeled"))?;
        let r = check_chunk(c);
        let verdict = r.verdict.to_string();
        ensure(want["verdict"] == verdict.as_str(), format!("{id}: verdict {verdict}"))?;
        let cats: BTreeSet<String> = r.issues.iter().map(|i| i.category.name().to_string()).collect();
        let pats: BTreeSet<String> = r
            .issues
            .iter()
            .filter_map(|i| classify_pattern(i, c).pattern)
            .map(|p| p.to_string())
            .collect();
        ensure(cats == label_set(want, "categories"), format!("{id}: categories {cats:?}"))?;
        ensure(pats == label_set(want, "patterns"), format!("{id}: patterns {pats:?}"))?;
        for i in &r.issues {
            let benign = i.category == Category::FlagClobbered;
            ensure(
                (i.severity == Severity::Benign) == benign && i.severity == severity_policy(i.category),
                format!("{id}: {} is {}", i.category.name(), i.severity),
            )?;
        }
        categories.extend(r.issues.iter().map(|i| i.category));
        patterns.extend(r.issues.iter().filter_map(|i| classify_pattern(i, c).pattern));
    }
    let missing: Vec<_> = Category::ALL.iter().filter(|c| !categories.contains(c)).collect();
    ensure(missing.is_empty(), format!("categories not exercised: {missing:?}"))?;
    let missing: Vec<_> = Pattern::ALL.iter().filter(|p| !patterns.contains(p)).collect();
    ensure(missing.is_empty(), format!("patterns not exercised: {missing:?}"))?;
    Ok(format!(
        "{} labeled chunks match; 8 categories and 6 patterns exercised",
        chunks.len()
    ))
}

fn criterion_10() -> Outcome {
    let inputs = vec![
        Input::read_chunks(&dir().join("corpus/chunks.json")).map_err(|e| e.to_string())?,
        Input::read_source(&dir().join("tests/fixtures/atomic_ops.c")).map_err(|e| e.to_string())?,
    ];
    let mut reports = Vec::new();
    for command in [Command::Check, Command::Patch, Command::Refine, Command::Oracle] {
        let opts = RunOptions {
            command,
            ..RunOptions::default()
        };
        let a = run_inputs(&inputs, &opts).report.to_json();
        let b = run_inputs(&inputs, &opts).report.to_json();
        ensure(a == b, format!("{command:?} reports differ"))?;
        reports.push(a.len());
    }
    Ok(format!("check, patch, refine and oracle reports identical ({:?} bytes)", reports))
}

fn main() {
    let chunks = corpus();
    let results: Vec<(&str, Outcome)> = vec![
        ("motivating example", criterion_1()),
        ("formal interface", criterion_2()),
        ("patch round trip", criterion_3()),
        ("constraint table", criterion_4()),
        ("checker/oracle soundness", criterion_5(&chunks)),
        ("ablations", criterion_6(&chunks)),
        ("refinement", criterion_7(&chunks)),
        ("throughput", criterion_8(&chunks)),
        ("taxonomy and severity", criterion_9(&chunks)),
        ("determinism", criterion_10()),
    ];
    let mut failed = 0;
    for (n, (name, outcome)) in results.iter().enumerate() {
        match outcome {
            Ok(detail) => println!("criterion {:>2} PASS {name}: {detail}", n + 1),
            Err(why) => {
                failed += 1;
                println!("criterion {:>2} FAIL {name}: {why}", n + 1);
            }
        }
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
