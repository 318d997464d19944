use proptest::prelude::*;
use proptest::test_runner::RngSeed;

use ric_core::checker::{check_chunk, Verdict};
use ric_core::classify::severity_policy;
use ric_core::extraction::{parse_asm_statement, ChunkAst, SourceSpan};
use ric_core::oracle::{oracle_chunk, TrialConfig};
use ric_core::patcher::{synthesize_patches, verify_patch};

const INSTRS: &[&str] = &[
    "movl %1, %0",
    "addl %1, %0",
    "xorl %0, %0",
    "incl %0",
    "notl %0",
    "movl %%ecx, %0",
    "movl %1, %%edx",
    "xchgl %0, %1",
    "leal 4(%1), %0",
    "shll $3, %0",
    "andl %1, %0",
    "movl $0, %0",
    "negl %1",
    "pushl %%ebx; movl %1, %%ebx; movl %%ebx, %0; popl %%ebx",
    "setz %b0",
    "movb %b1, %b0",
    "adcl %1, %0",
    "pushl %1; popl %0",
    "xchgl %%ebx, %1",
    "movl %0, %%ecx",
    "subl %0, %0",
    "movzbl %b1, %0",
    "movl %1, %2",
    "addl %2, %0",
    "cmpxchgl %1, %2",
];

const OUT: &[&str] = &["=r", "+r", "=&r", "=a", "=d", "=m", "=q"];
const OUT2: &[&str] = &["", "=r", "+m", "=&c", "=b"];
const IN: &[&str] = &["r", "0", "c", "m", "g", "ir"];
const CLOBBERS: &[&str] = &["cc", "edx", "ecx", "memory"];

fn chunk() -> impl Strategy<Value = ChunkAst> {
    (
        prop::collection::vec(0..INSTRS.len(), 1..4),
        0..OUT.len(),
        0..OUT2.len(),
        0..IN.len(),
        prop::collection::vec(any::<bool>(), CLOBBERS.len()),
    )
        .prop_map(|(ins, o, o2, i, cl)| {
            let mut template: Vec<&str> = ins.iter().map(|&k| INSTRS[k]).collect();
            let mut c = ChunkAst::new("").output(OUT[o], "x", 4);
            if OUT2[o2].is_empty() {
                template.retain(|t| !t.contains("%2"));
            } else {
                c = c.output(OUT2[o2], "z", 4);
            }
            c.template = template.join("; ");
            let mut c = c.input(IN[i], "y", 4);
            for (name, on) in CLOBBERS.iter().zip(cl) {
                if on {
                    c = c.clobber(name);
                }
            }
            c
        })
}

fn quick() -> TrialConfig {
    TrialConfig {
        trials: 25,
        ..TrialConfig::default()
    }
}

proptest! {
    #![proptest_config(ProptestConfig {
        cases: 64,
        rng_seed: RngSeed::Fixed(0x1a5e),
        ..ProptestConfig::default()
    })]

    #[test]
    fn compliant_means_no_witness(c in chunk()) {
        let r = check_chunk(&c);
        if r.verdict == Verdict::Compliant {
            let o = oracle_chunk(&c, &quick());
            prop_assert!(!o.any_violation(), "{}: {:?}", c.render(), o);
        }
    }

    #[test]
    fn severities_follow_the_policy(c in chunk()) {
        for i in check_chunk(&c).issues {
            prop_assert_eq!(i.severity, severity_policy(i.category));
        }
    }

    #[test]
    fn complete_patches_clear_frame_writes(c in chunk()) {
        let r = check_chunk(&c);
        if r.verdict == Verdict::Issues {
            let pr = synthesize_patches(&c, &r.issues);
            if pr.unresolved.is_empty() {
                prop_assert!(verify_patch(&pr).interface_satisfiable, "{} => {}", c.render(), pr.patched.render());
                let after = check_chunk(&pr.patched);
                prop_assert!(
                    after.issues.iter().all(|i| !i.category.is_frame_write()),
                    "{}: {:?}",
                    pr.patched.render(),
                    after.issues
                );
            }
        }
    }

    #[test]
    fn render_parses_back(c in chunk()) {
        let back = parse_asm_statement(&c.render(), SourceSpan::default()).unwrap();
        prop_assert!(back.same_structure(&c));
    }

    #[test]
    fn checking_is_deterministic(c in chunk()) {
        prop_assert_eq!(check_chunk(&c), check_chunk(&c));
    }
}
