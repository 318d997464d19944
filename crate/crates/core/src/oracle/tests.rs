use super::*;
use crate::arch::Reg;

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

fn raw_program(template: &str) -> Program {
    prepare(&ChunkAst::new(template).clobber("memory")).unwrap().program
}

fn mem(base: Reg) -> Operand {
    Operand::Mem(Address::base(base))
}

#[test]
fn motivating_frame_write() {
    let OracleVerdict::Violation(w) = oracle_check(&motivating(), Property::FrameWrite, &TrialConfig::default()) else {
        panic!("expected a violation");
    };
    assert_eq!(w.location, "edx");
    assert_eq!(w.assignments.len(), 1);
}

#[test]
fn motivating_unicity_pair() {
    let base: TokenAssignment = [
        (TokenId(1), Operand::Reg(Reg::Eax)),
        (TokenId(3), Operand::Reg(Reg::Edx)),
        (TokenId(5), Operand::Reg(Reg::Ecx)),
        (TokenId(6), Operand::Reg(Reg::Edi)),
    ]
    .into();
    let mut t1 = base.clone();
    t1.insert(TokenId(0), mem(Reg::Esi));
    t1.insert(TokenId(2), mem(Reg::Esi));
    let mut t2 = base;
    t2.insert(TokenId(0), mem(Reg::Ebx));
    t2.insert(TokenId(2), mem(Reg::Ebx));
    let v = unicity_pair(&motivating(), &t1, &t2, &TrialConfig::default());
    let OracleVerdict::Violation(w) = v else {
        panic!("expected a violation: {v:?}");
    };
    assert_eq!(w.location, "%0");
    assert_eq!(w.assignments[1]["%0"], "(%ebx)");
}

#[test]
fn plain_move_passes() {
    let c = ChunkAst::new("movl %1, %0").output("=r", "x", 4).input("r", "y", 4);
    let r = oracle_chunk(&c, &TrialConfig::default());
    for (p, v) in r.verdicts() {
        assert!(matches!(v, OracleVerdict::Pass { .. }), "{p:?}: {v:?}");
    }
}

#[test]
fn xchg_pair_is_identity() {
    let p = raw_program("xchg %%eax,%%ebx; xchg %%eax,%%ebx");
    let cfg = TrialConfig::default();
    for trial in 0..20 {
        let m = random_state(&cfg, &mut trial_rng(1, trial), false);
        assert_eq!(exec(&p, &m).unwrap(), m);
    }
}

#[test]
fn cmpxchg8b_success() {
    let p = raw_program("cmpxchg8b (%%esi)");
    let mut m = MachineState::new(DEFAULT_BASE, 0x4000);
    let at = DEFAULT_BASE + 0x100;
    m.set_reg(Reg::Esi, at as u128);
    m.store(at, 8, 0x1111_2222_3333_4444).unwrap();
    m.set_reg(Reg::Edx, 0x1111_2222);
    m.set_reg(Reg::Eax, 0x3333_4444);
    m.set_reg(Reg::Ecx, 0xaaaa_bbbb);
    m.set_reg(Reg::Ebx, 0xcccc_dddd);
    let out = exec(&p, &m).unwrap();
    assert!(out.flag(Flag::Z));
    assert_eq!(out.load(at, 8).unwrap(), 0xaaaa_bbbb_cccc_dddd);
    assert_eq!(out.reg(Reg::Edx), 0x1111_2222);
}

#[test]
fn cmpxchg8b_failure_loads_edx_eax() {
    let p = raw_program("cmpxchg8b (%%esi)");
    let mut m = MachineState::new(DEFAULT_BASE, 0x4000);
    let at = DEFAULT_BASE + 0x100;
    m.set_reg(Reg::Esi, at as u128);
    m.store(at, 8, 0x1111_2222_3333_4444).unwrap();
    let out = exec(&p, &m).unwrap();
    assert!(!out.flag(Flag::Z));
    assert_eq!(out.reg(Reg::Edx), 0x1111_2222);
    assert_eq!(out.reg(Reg::Eax), 0x3333_4444);
    assert_eq!(out.load(at, 8).unwrap(), 0x1111_2222_3333_4444);
}

#[test]
fn sandbox_bounds() {
    let p = raw_program("movl (%%esi), %%eax");
    let mut m = MachineState::new(DEFAULT_BASE, 0x1000);
    m.set_reg(Reg::Esi, 0);
    assert!(matches!(exec(&p, &m), Err(ExecError::OutOfSandbox { addr: 0, bytes: 4 })));
    m.set_reg(Reg::Esi, (DEFAULT_BASE + 0x1000 - 2) as u128);
    assert!(matches!(exec(&p, &m), Err(ExecError::OutOfSandbox { .. })));
}

#[test]
fn step_limit() {
    let p = raw_program("1: jmp 1b");
    let m = MachineState::new(DEFAULT_BASE, 0x1000);
    assert_eq!(exec(&p, &m), Err(ExecError::StepLimit));
}

#[test]
fn same_seed_same_witness() {
    let cfg = TrialConfig::default();
    for p in Property::ALL {
        assert_eq!(oracle_check(&motivating(), p, &cfg), oracle_check(&motivating(), p, &cfg));
    }
}

#[test]
fn unbound_read_is_caught_by_both_read_properties() {
    let c = ChunkAst::new("movl %%ecx, %0").output("=r", "x", 4);
    let cfg = TrialConfig::default();
    assert!(oracle_check(&c, Property::FrameRead, &cfg).is_violation());
    assert!(oracle_check(&c, Property::Unicity, &cfg).is_violation());
    assert!(matches!(oracle_check(&c, Property::FrameWrite, &cfg), OracleVerdict::Pass { .. }));
}

#[test]
fn missing_cc_is_a_frame_write_violation() {
    let c = ChunkAst::new("addl %1, %0").output("+r", "x", 4).input("r", "y", 4);
    let cfg = TrialConfig::default();
    let OracleVerdict::Violation(w) = oracle_check(&c, Property::FrameWrite, &cfg) else {
        panic!()
    };
    assert!(w.location.ends_with('f'), "{}", w.location);
    assert!(matches!(oracle_check(&c.clone().clobber("cc"), Property::FrameWrite, &cfg), OracleVerdict::Pass { .. }));
}

#[test]
fn push_pop_scratch_is_ignored() {
    let c = ChunkAst::new("pushl %%ebx; movl %1, %%ebx; movl %%ebx, %0; popl %%ebx")
        .output("=a", "x", 4)
        .input("c", "y", 4)
        .clobber("memory");
    let r = oracle_chunk(&c, &TrialConfig::default());
    assert!(!r.any_violation(), "{r:?}");
}

#[test]
fn symbols_are_inconclusive() {
    let c = ChunkAst::new("movl counter, %0").output("=r", "x", 4).clobber("memory");
    assert!(matches!(
        oracle_check(&c, Property::FrameRead, &TrialConfig::default()),
        OracleVerdict::Inconclusive { .. }
    ));
}

#[test]
fn witness_serializes() {
    let v = oracle_check(&motivating(), Property::FrameWrite, &TrialConfig::default());
    let OracleVerdict::Violation(w) = &v else { panic!() };
    assert!(w.states[0].registers.contains_key("eax"));
    assert!(w.states[0].flags.contains("zf="));
}

mod equivalence {
    use super::*;
    use proptest::prelude::*;

    fn state(seed: u64) -> MachineState {
        random_state(&TrialConfig { sandbox_size: 4096, ..TrialConfig::default() }, &mut trial_rng(seed, 0), false)
    }

    proptest! {
        #[test]
        fn is_an_equivalence(a in 0u64..64, b in 0u64..64, c in 0u64..64, f: bool) {
            let t: TokenAssignment = [(TokenId(0), Operand::Reg(Reg::Eax)), (TokenId(1), Operand::Reg(Reg::Ecx))].into();
            let widths: BTreeMap<TokenId, u32> = [(TokenId(0), 8), (TokenId(1), 32)].into();
            let (ma, mb, mc) = (state(a % 3), state(b % 3), state(c % 3));
            prop_assert!(equivalent(&ma, &ma, &t, &t, &widths, f));
            prop_assert_eq!(equivalent(&ma, &mb, &t, &t, &widths, f), equivalent(&mb, &ma, &t, &t, &widths, f));
            if equivalent(&ma, &mb, &t, &t, &widths, f) && equivalent(&mb, &mc, &t, &t, &widths, f) {
                prop_assert!(equivalent(&ma, &mc, &t, &t, &widths, f));
            }
        }
    }
}


