use super::*;
use crate::arch::{Flag, Reg};
use crate::ir::Location;

fn motivating() -> ChunkAst {
    ChunkAst::new("xchg %%ebx,%6; lock; cmpxchg8b %0; setz %1; xchg %%ebx,%6")
        .output("=m", "*ptr", 8)
        .output("=a", "ok", 1)
        .input("m", "*ptr", 8)
        .input("d", "(unsigned)(old >> 32)", 4)
        .input("a", "(unsigned)old", 4)
        .input("c", "(unsigned)(new >> 32)", 4)
        .input("D", "(unsigned)new", 4)
        .clobber("memory")
}

fn cats(r: &Report) -> Vec<Category> {
    r.issues.iter().map(|i| i.category).collect()
}

#[test]
fn motivating_chunk() {
    let r = check_chunk(&motivating());
    assert_eq!(r.verdict, Verdict::Issues);
    let serious: Vec<&Issue> = r.issues.iter().filter(|i| i.severity == Severity::Serious).collect();
    assert_eq!(serious.len(), 2, "{:#?}", r.issues);
    let roc = serious
        .iter()
        .find(|i| i.category == Category::ReadOnlyInputClobbered)
        .unwrap();
    assert_eq!(roc.location, Location::Reg(Reg::Edx));
    assert_eq!(roc.token, Some(TokenId(3)));
    let u = serious.iter().find(|i| i.category == Category::Unicity).unwrap();
    assert_eq!(u.location, Location::Reg(Reg::Ebx));
    assert_eq!(u.related, Some(Location::Token(TokenId(0))));
    assert!(r
        .issues
        .iter()
        .all(|i| i.severity == Severity::Serious || i.category == Category::FlagClobbered));
}

#[test]
fn xchg_pair_restores() {
    let c = ChunkAst::new("xchg %%ebx, %1; cpuid; xchg %%ebx, %1")
        .output("=a", "a", 4)
        .output("=r", "b", 4)
        .output("=c", "c", 4)
        .output("=d", "d", 4)
        .input("0", "op", 4);
    let r = check_chunk(&c);
    assert!(
        !r.issues.iter().any(|i| i.location == Location::Reg(Reg::Ebx)),
        "{:#?}",
        r.issues
    );
}

#[test]
fn bare_increment() {
    let r = check_chunk(&ChunkAst::new("incl %%ecx"));
    let c = cats(&r);
    assert!(c.contains(&Category::UnboundRegisterClobbered));
    assert!(c.contains(&Category::FlagClobbered));
}

#[test]
fn unbound_read() {
    let c = ChunkAst::new("movl %%edx, %0").output("=r", "x", 4);
    let r = check_chunk(&c);
    assert_eq!(cats(&r), [Category::UnboundRegisterRead]);
    assert_eq!(r.issues[0].location, Location::Reg(Reg::Edx));
}

#[test]
fn setz_on_byte_output_is_compliant() {
    let c = ChunkAst::new("cmpl %2, %1; setz %0")
        .output("=a", "eq", 1)
        .input("r", "x", 4)
        .input("r", "y", 4)
        .clobber("cc");
    let r = check_chunk(&c);
    assert_eq!(r.verdict, Verdict::Compliant, "{:#?}", r.issues);
}

#[test]
fn setz_coarse_liveness_reads_eax() {
    let c = ChunkAst::new("cmpl %2, %1; setz %0")
        .output("=a", "eq", 1)
        .input("r", "x", 4)
        .input("r", "y", 4)
        .clobber("cc");
    let opts = CheckOptions {
        bit_level_liveness: false,
        ..CheckOptions::default()
    };
    let r = check_chunk_with(&c, &opts);
    assert!(cats(&r).contains(&Category::UnboundRegisterRead), "{:#?}", r.issues);
}

#[test]
fn empty_template_output() {
    let c = ChunkAst::new("").output("=r", "x", 4);
    assert_eq!(cats(&check_chunk(&c)), [Category::NonWrittenWriteOnlyOutput]);
}

#[test]
fn clobbered_ebx_is_not_unicity() {
    let mut c = motivating();
    c.template = "movl %%edx, %%ebx; lock; cmpxchg8b %0; setz %1".into();
    c.inputs.remove(4);
    c.inputs[2].constraint = "a".into();
    let c = c.clobber("ebx").clobber("cc").clobber("edx");
    let r = check_chunk(&c);
    assert!(!cats(&r).contains(&Category::Unicity), "{:#?}", r.issues);
}

#[test]
fn nop_is_compliant() {
    assert_eq!(check_chunk(&ChunkAst::new("nop")).verdict, Verdict::Compliant);
}

#[test]
fn x87_is_out_of_scope() {
    let c = ChunkAst::new("fldl %1; fstpl %0").output("=m", "y", 8).input("m", "x", 8);
    assert_eq!(check_chunk(&c).verdict, Verdict::OutOfScope);
}

#[test]
fn push_pop_without_propagation() {
    let c = ChunkAst::new("pushl %%ebx; movl %1, %%ebx; movl %%ebx, %0; popl %%ebx")
        .output("=a", "y", 4)
        .input("r", "x", 4);
    assert_eq!(check_chunk(&c).verdict, Verdict::Compliant, "{:#?}", check_chunk(&c).issues);
    let opts = CheckOptions {
        expression_propagation: false,
        ..CheckOptions::default()
    };
    let r = check_chunk_with(&c, &opts);
    assert!(cats(&r).contains(&Category::UnboundRegisterClobbered), "{:#?}", r.issues);
}

#[test]
fn flag_read_before_set() {
    let c = ChunkAst::new("adcl %1, %0").output("+r", "x", 4).input("r", "y", 4).clobber("cc");
    let r = check_chunk(&c);
    assert_eq!(cats(&r), [Category::UnboundRegisterRead]);
    assert_eq!(r.issues[0].location, Location::Flag(Flag::C));
}

#[test]
fn memory_write_without_clobber() {
    let c = ChunkAst::new("movl $0, (%0)").input("r", "p", 4);
    let r = check_chunk(&c);
    assert_eq!(cats(&r), [Category::UnboundMemoryWrite]);
    assert_eq!(check_chunk(&c.clone().clobber("memory")).verdict, Verdict::Compliant);
}

#[test]
fn input_overwritten() {
    let c = ChunkAst::new("shrl $1, %0").input("r", "x", 4).clobber("cc");
    assert_eq!(cats(&check_chunk(&c)), [Category::ReadOnlyInputClobbered]);
}

#[test]
fn ablations_only_add_issues() {
    let chunks = [
        motivating(),
        ChunkAst::new("cmpl %2, %1; setz %0")
            .output("=a", "eq", 1)
            .input("r", "x", 4)
            .input("r", "y", 4)
            .clobber("cc"),
        ChunkAst::new("pushl %%ebx; popl %%ebx"),
        ChunkAst::new("incl %%ecx"),
    ];
    for c in &chunks {
        let full: Vec<_> = check_chunk(c).issues.iter().map(Issue::key).collect();
        for opts in [
            CheckOptions {
                expression_propagation: false,
                bit_level_liveness: true,
            },
            CheckOptions {
                expression_propagation: true,
                bit_level_liveness: false,
            },
        ] {
            let weaker: Vec<_> = check_chunk_with(c, &opts).issues.iter().map(Issue::key).collect();
            for k in &full {
                assert!(weaker.contains(k), "{k:?} missing under {opts:?}");
            }
        }
    }
}

#[test]
fn pop_into_possible_output_register() {
    let c = ChunkAst::new("pushl %%ebx; movl %1, %%ebx; movl %%ebx, %0; popl %%ebx")
        .output("=r", "y", 4)
        .input("r", "x", 4);
    let r = check_chunk(&c);
    assert_eq!(cats(&r), [Category::Unicity]);
    assert_eq!(r.issues[0].related, Some(Location::Token(TokenId(0))));
}
