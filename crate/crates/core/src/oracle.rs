//! Differential oracle: runs the IR of a chunk on concrete, seeded random
//! machine states and tests the three compliance properties directly.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::fmt::Write as _;

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use serde::Serialize;

use crate::arch::{Flag, Reg};
use crate::checker::prepare;
use crate::extraction::ChunkAst;
use crate::interface::{enumerate_assignments, Address, FormalInterface, Operand, TokenAssignment};
use crate::ir::bv::mask;
use crate::ir::subst::substitute;
use crate::ir::{Bv, Expr, Location, Program, Stmt, TokenId};

pub const STEP_LIMIT: u64 = 1_000_000;
/// Bytes below the entry stack pointer that pushes may use freely.
pub const SCRATCH: u32 = 1024;
const SLOT: u32 = 64;
const FIRST_SLOT: u32 = 64;
const DEFAULT_BASE: u32 = 0x0804_0000;

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum ExecError {
    #[error("step limit reached")]
    StepLimit,
    #[error("access of {bytes} bytes at {addr:#010x} leaves the sandbox")]
    OutOfSandbox { addr: u32, bytes: u32 },
    #[error("division by zero")]
    DivideByZero,
    #[error("{0} cannot be executed")]
    Unsupported(String),
}

/// Registers, flags and a contiguous sandbox of memory.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MachineState {
    pub gpr: [u32; 8],
    pub mm: [u64; 8],
    pub xmm: [u128; 8],
    pub flags: [bool; 6],
    pub base: u32,
    pub memory: Vec<u8>,
    /// Entry stack pointer; `[esp0 - SCRATCH, esp0)` is excluded from memory comparisons.
    pub esp0: u32,
}

impl MachineState {
    pub fn new(base: u32, size: u32) -> Self {
        let esp0 = base.wrapping_add(stack_top(size));
        let mut gpr = [0; 8];
        gpr[4] = esp0;
        MachineState {
            gpr,
            mm: [0; 8],
            xmm: [0; 8],
            flags: [false; 6],
            base,
            memory: vec![0; size as usize],
            esp0,
        }
    }

    pub fn reg(&self, r: Reg) -> u128 {
        match r {
            Reg::Mm(i) => self.mm[i as usize] as u128,
            Reg::Xmm(i) => self.xmm[i as usize],
            r => self.gpr[r.gpr_index().unwrap_or(0)] as u128,
        }
    }

    pub fn set_reg(&mut self, r: Reg, v: u128) {
        match r {
            Reg::Mm(i) => self.mm[i as usize] = v as u64,
            Reg::Xmm(i) => self.xmm[i as usize] = v,
            r => self.gpr[r.gpr_index().unwrap_or(0)] = v as u32,
        }
    }

    pub fn flag(&self, f: Flag) -> bool {
        self.flags[f.index()]
    }

    fn offset(&self, addr: u32, bytes: u32) -> Result<usize, ExecError> {
        let off = addr.wrapping_sub(self.base) as u64;
        if off + bytes as u64 > self.memory.len() as u64 {
            return Err(ExecError::OutOfSandbox { addr, bytes });
        }
        Ok(off as usize)
    }

    pub fn load(&self, addr: u32, bytes: u32) -> Result<u128, ExecError> {
        let off = self.offset(addr, bytes)?;
        Ok(self.memory[off..off + bytes as usize]
            .iter()
            .rev()
            .fold(0u128, |acc, b| (acc << 8) | *b as u128))
    }

    pub fn store(&mut self, addr: u32, bytes: u32, value: u128) -> Result<(), ExecError> {
        let off = self.offset(addr, bytes)?;
        for i in 0..bytes as usize {
            self.memory[off + i] = (value >> (8 * i)) as u8;
        }
        Ok(())
    }

    fn in_scratch(&self, addr: u32) -> bool {
        addr < self.esp0 && addr >= self.esp0.wrapping_sub(SCRATCH)
    }
}

fn stack_top(size: u32) -> u32 {
    if size >= 0x2000 {
        size - 0x1000 - 128
    } else {
        size - 128
    }
}

struct Machine<'a> {
    p: &'a Program,
    m: MachineState,
    temps: BTreeMap<u32, Bv>,
}

impl Machine<'_> {
    fn eval(&self, e: &Expr) -> Result<Bv, ExecError> {
        Ok(match e {
            Expr::Const(b) => *b,
            Expr::Var(loc, w) => {
                let v = match loc {
                    Location::Reg(r) => self.m.reg(*r),
                    Location::Flag(f) => self.m.flag(*f) as u128,
                    Location::Temp(t) => self
                        .temps
                        .get(t)
                        .map(|b| b.bits())
                        .ok_or_else(|| ExecError::Unsupported(format!("undefined t{t}")))?,
                    l => return Err(ExecError::Unsupported(l.to_string())),
                };
                Bv::new(v, *w)
            }
            Expr::Load { addr, bytes } => {
                let a = self.eval(addr)?.bits() as u32;
                Bv::new(self.m.load(a, *bytes)?, bytes * 8)
            }
            Expr::Symbol(i) => {
                let name = self.p.symbols.get(*i as usize).cloned().unwrap_or_default();
                return Err(ExecError::Unsupported(format!("symbol {name}")));
            }
            Expr::Unop(op, x) => Bv::unop(*op, self.eval(x)?),
            Expr::Binop(op, x, y) => Bv::binop(*op, self.eval(x)?, self.eval(y)?).ok_or(ExecError::DivideByZero)?,
            Expr::Ite(c, t, f) => {
                if self.eval(c)?.is_zero() {
                    self.eval(f)?
                } else {
                    self.eval(t)?
                }
            }
        })
    }

    fn run(&mut self) -> Result<(), ExecError> {
        let mut pc = 0usize;
        let mut steps = 0u64;
        while let Some(s) = self.p.stmts.get(pc) {
            steps += 1;
            if steps > STEP_LIMIT {
                return Err(ExecError::StepLimit);
            }
            pc = match s {
                Stmt::Assign { dst, value } => {
                    let v = self.eval(value)?;
                    match dst {
                        Location::Reg(r) => self.m.set_reg(*r, v.bits() & mask(r.width())),
                        Location::Flag(f) => self.m.flags[f.index()] = !v.is_zero(),
                        Location::Temp(t) => {
                            self.temps.insert(*t, v);
                        }
                        l => return Err(ExecError::Unsupported(l.to_string())),
                    }
                    pc + 1
                }
                Stmt::Store { addr, bytes, value } => {
                    let a = self.eval(addr)?.bits() as u32;
                    let v = self.eval(value)?;
                    self.m.store(a, *bytes, v.bits())?;
                    pc + 1
                }
                Stmt::Goto(t) => *t,
                Stmt::Branch { cond, then, els } => {
                    if self.eval(cond)?.is_zero() {
                        *els
                    } else {
                        *then
                    }
                }
                Stmt::Halt => return Ok(()),
            };
        }
        Ok(())
    }
}

/// Run a token-free program to completion.
pub fn exec(p: &Program, m: &MachineState) -> Result<MachineState, ExecError> {
    let mut machine = Machine {
        p,
        m: m.clone(),
        temps: BTreeMap::new(),
    };
    machine.run()?;
    Ok(machine.m)
}

fn address_of(m: &MachineState, a: &Address) -> u32 {
    let mut v = a.disp as u32;
    if let Some(b) = a.base {
        v = v.wrapping_add(m.reg(b) as u32);
    }
    if let Some((i, k)) = a.index {
        v = v.wrapping_add((m.reg(i) as u32).wrapping_mul(k as u32));
    }
    v
}

/// `F_eval(m, op)` at `bits`.
pub fn operand_value(m: &MachineState, op: &Operand, bits: u32) -> Result<u128, ExecError> {
    Ok(match op {
        Operand::Reg(r) => m.reg(*r) & mask(bits),
        Operand::Imm(v) => (*v as i128 as u128) & mask(bits),
        Operand::Mem(a) => m.load(address_of(m, a), bits.div_ceil(8))? & mask(bits),
    })
}

fn set_operand(m: &mut MachineState, op: &Operand, bits: u32, v: u128) -> Result<(), ExecError> {
    match op {
        Operand::Reg(r) => {
            let keep = m.reg(*r) & !mask(bits);
            m.set_reg(*r, keep | (v & mask(bits)));
        }
        Operand::Imm(_) => {}
        Operand::Mem(a) => m.store(address_of(m, a), bits.div_ceil(8), v)?,
    }
    Ok(())
}

/// First memory address, outside both scratch areas, where the states differ.
fn memory_difference(m1: &MachineState, m2: &MachineState, cells: &[(u32, u32)]) -> Option<u32> {
    if m1.base != m2.base || m1.memory.len() != m2.memory.len() {
        return Some(m1.base);
    }
    if m1.memory == m2.memory {
        return None;
    }
    (0..m1.memory.len()).find_map(|i| {
        let addr = m1.base.wrapping_add(i as u32);
        (m1.memory[i] != m2.memory[i]
            && !m1.in_scratch(addr)
            && !m2.in_scratch(addr)
            && !cells.iter().any(|(s, l)| addr >= *s && addr < s + l))
        .then_some(addr)
    })
}

/// First token of `b` (token → width) whose values differ, or a memory address when `!f`.
pub fn difference(
    m1: &MachineState,
    m2: &MachineState,
    t1: &TokenAssignment,
    t2: &TokenAssignment,
    b: &BTreeMap<TokenId, u32>,
    f: bool,
) -> Option<String> {
    difference_outside(m1, m2, t1, t2, b, f, &[])
}

/// [`difference`], ignoring memory inside `cells`.
fn difference_outside(
    m1: &MachineState,
    m2: &MachineState,
    t1: &TokenAssignment,
    t2: &TokenAssignment,
    b: &BTreeMap<TokenId, u32>,
    f: bool,
    cells: &[(u32, u32)],
) -> Option<String> {
    for (t, bits) in b {
        let (Some(o1), Some(o2)) = (t1.get(t), t2.get(t)) else {
            return Some(t.to_string());
        };
        match (operand_value(m1, o1, *bits), operand_value(m2, o2, *bits)) {
            (Ok(a), Ok(b)) if a == b => {}
            _ => return Some(t.to_string()),
        }
    }
    if !f {
        if let Some(a) = memory_difference(m1, m2, cells) {
            return Some(format!("mem[{a:#010x}]"));
        }
    }
    None
}

/// `(m1, T1) ≡_{B,F} (m2, T2)`.
pub fn equivalent(
    m1: &MachineState,
    m2: &MachineState,
    t1: &TokenAssignment,
    t2: &TokenAssignment,
    b: &BTreeMap<TokenId, u32>,
    f: bool,
) -> bool {
    difference(m1, m2, t1, t2, b, f).is_none()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Property {
    FrameWrite,
    FrameRead,
    Unicity,
}

impl Property {
    pub const ALL: [Property; 3] = [Property::FrameWrite, Property::FrameRead, Property::Unicity];

    pub fn name(self) -> &'static str {
        match self {
            Property::FrameWrite => "frame_write",
            Property::FrameRead => "frame_read",
            Property::Unicity => "unicity",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct TrialConfig {
    pub trials: u32,
    pub seed: u64,
    pub assignment_cap: usize,
    pub sandbox_size: u32,
}

impl Default for TrialConfig {
    fn default() -> Self {
        TrialConfig {
            trials: 100,
            seed: 0x5eed,
            assignment_cap: crate::interface::enumerate::DEFAULT_CAP,
            sandbox_size: 0x1000,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct StateDump {
    pub registers: BTreeMap<String, String>,
    pub flags: String,
    /// Token cells, keyed by address.
    pub memory: BTreeMap<String, String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Witness {
    pub property: Property,
    pub trial: u32,
    /// Token, register, flag or memory cell that tells the runs apart.
    pub location: String,
    /// One assignment for frame-write, two otherwise.
    pub assignments: Vec<BTreeMap<String, String>>,
    pub states: Vec<StateDump>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum OracleVerdict {
    Pass { trials: u32, assignments: usize },
    Violation(Witness),
    Inconclusive { reason: String },
}

impl OracleVerdict {
    pub fn is_violation(&self) -> bool {
        matches!(self, OracleVerdict::Violation(_))
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct OracleReport {
    pub frame_write: OracleVerdict,
    pub frame_read: OracleVerdict,
    pub unicity: OracleVerdict,
}

impl OracleReport {
    pub fn verdicts(&self) -> [(Property, &OracleVerdict); 3] {
        [
            (Property::FrameWrite, &self.frame_write),
            (Property::FrameRead, &self.frame_read),
            (Property::Unicity, &self.unicity),
        ]
    }

    pub fn any_violation(&self) -> bool {
        self.verdicts().iter().any(|(_, v)| v.is_violation())
    }
}

/// Where token cells live and which registers hold their addresses.
#[derive(Clone, Debug, Default)]
struct Placement {
    regs: BTreeMap<Reg, u32>,
    cells: BTreeMap<TokenId, (u32, u32)>,
}

struct Case {
    fi: FormalInterface,
    assignments: Vec<TokenAssignment>,
    programs: Vec<Program>,
    truncated: bool,
    vectors: bool,
    /// C expression behind each token.
    lvalues: BTreeMap<TokenId, String>,
}

fn token_bytes(fi: &FormalInterface, t: TokenId) -> u32 {
    let own = fi.tokens.get(&t).map_or(4, |i| i.bits().div_ceil(8)).max(1);
    fi.aliases.get(&t).map_or(own, |a| own.max(a.span))
}

fn prepare_case(chunk: &ChunkAst, cfg: &TrialConfig) -> Result<Case, String> {
    let prep = prepare(chunk).map_err(|s| s.message)?;
    let fi = prep.fi;
    let en = enumerate_assignments(&fi, cfg.assignment_cap).map_err(|e| e.to_string())?;
    let mut seen = BTreeSet::new();
    let mut assignments = Vec::new();
    let mut programs = Vec::new();
    for mut t in en.assignments {
        let mut ok = true;
        for (q, a) in &fi.aliases {
            match t.get(&a.pointer) {
                Some(Operand::Reg(r)) => {
                    t.insert(
                        *q,
                        Operand::Mem(Address {
                            base: Some(*r),
                            index: None,
                            disp: a.offset as i32,
                        }),
                    );
                }
                _ => ok = false,
            }
        }
        if !ok || !seen.insert(t.clone()) {
            continue;
        }
        let p = substitute(&prep.program, &t).map_err(|e| e.to_string())?;
        assignments.push(t);
        programs.push(p);
    }
    if assignments.is_empty() {
        return Err("no token assignment can be sampled".into());
    }
    let mut lvalues = BTreeMap::new();
    for e in chunk.entries() {
        if let Some(t) = fi.resolve_position(e.position) {
            lvalues.entry(t).or_insert_with(|| e.expr_text.trim().to_string());
        }
    }
    let mut vectors = false;
    for s in &prep.program.stmts {
        if let Stmt::Assign {
            dst: Location::Reg(Reg::Mm(_) | Reg::Xmm(_)),
            ..
        } = s
        {
            vectors = true;
        }
        for e in s.exprs() {
            if e.reads().iter().any(|l| matches!(l, Location::Reg(Reg::Mm(_) | Reg::Xmm(_)))) {
                vectors = true;
            }
        }
    }
    Ok(Case {
        fi,
        assignments,
        programs,
        truncated: en.truncated,
        vectors,
        lvalues,
    })
}

fn trial_rng(seed: u64, trial: u32) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial as u64);
    rng
}

fn below(rng: &mut ChaCha8Rng, n: u32) -> u32 {
    (rng.next_u64() % n.max(1) as u64) as u32
}

const POOL: [u32; 4] = [0, 1, 0xffff_ffff, 0x8000_0000];

/// A word biased towards small pools so that equality tests can succeed.
fn random_word(rng: &mut ChaCha8Rng, base: u32, data_end: u32) -> u32 {
    match rng.next_u32() % 8 {
        0 | 1 => rng.next_u32(),
        2 | 3 => POOL[below(rng, POOL.len() as u32) as usize],
        4 => base + FIRST_SLOT + SLOT * below(rng, 4),
        _ => base + FIRST_SLOT + (below(rng, data_end - FIRST_SLOT) & !3),
    }
}

fn random_state(cfg: &TrialConfig, rng: &mut ChaCha8Rng, vectors: bool) -> MachineState {
    let mut m = MachineState::new(DEFAULT_BASE, cfg.sandbox_size);
    rng.fill_bytes(&mut m.memory);
    let data_end = m.esp0.wrapping_sub(m.base).saturating_sub(SCRATCH).max(FIRST_SLOT + 4);
    for (i, r) in Reg::GPR.iter().enumerate() {
        if *r != Reg::Esp {
            m.gpr[i] = random_word(rng, m.base, data_end);
        }
    }
    let slots_end = (data_end as usize).min(m.memory.len());
    for off in (FIRST_SLOT as usize..slots_end).step_by(4) {
        if rng.next_u32() % 2 == 0 {
            let w = random_word(rng, m.base, data_end);
            m.memory[off..off + 4].copy_from_slice(&w.to_le_bytes());
        }
    }
    if vectors {
        for i in 0..8 {
            m.mm[i] = rng.next_u64();
            m.xmm[i] = ((rng.next_u64() as u128) << 64) | rng.next_u64() as u128;
        }
    }
    for f in Flag::ALL {
        m.flags[f.index()] = rng.next_u32() & 1 == 1;
    }
    m
}

fn place(case: &Case, t: &TokenAssignment, cfg: &TrialConfig, rng: &mut ChaCha8Rng) -> Option<Placement> {
    let base = DEFAULT_BASE;
    let size = cfg.sandbox_size;
    let esp0 = base.wrapping_add(stack_top(size));
    let data_end = esp0 - SCRATCH;
    let mut pl = Placement::default();
    pl.regs.insert(Reg::Esp, esp0);
    for (id, op) in t {
        let Operand::Mem(a) = op else { continue };
        let len = token_bytes(&case.fi, *id);
        if len > SLOT {
            return None;
        }
        let slot = base + FIRST_SLOT + SLOT * id.0 as u32;
        if slot + SLOT > data_end {
            return None;
        }
        let mut scaled = 0u32;
        if let Some((i, k)) = a.index {
            let v = *pl.regs.entry(i).or_insert_with(|| below(rng, 4));
            scaled = v.wrapping_mul(k as u32);
        }
        let addr = match a.base {
            Some(b) => {
                let v = *pl
                    .regs
                    .entry(b)
                    .or_insert_with(|| slot.wrapping_sub(a.disp as u32).wrapping_sub(scaled));
                v.wrapping_add(a.disp as u32).wrapping_add(scaled)
            }
            None => a.disp as u32,
        };
        let on_stack = a.base == Some(Reg::Esp);
        let fits = if on_stack {
            addr >= esp0 && addr.wrapping_sub(base) as u64 + len as u64 <= size as u64
        } else {
            addr >= base + FIRST_SLOT && addr as u64 + len as u64 <= data_end as u64
        };
        if !fits {
            return None;
        }
        pl.cells.insert(*id, (addr, len));
    }
    let cells: Vec<(&TokenId, &(u32, u32))> = pl.cells.iter().collect();
    for (i, (ta, (a, la))) in cells.iter().enumerate() {
        for (tb, (b, lb)) in &cells[i + 1..] {
            let same_object = match (case.fi.aliases.get(ta), case.fi.aliases.get(tb)) {
                (Some(x), Some(y)) => x.pointer == y.pointer,
                _ => false,
            };
            let same_lvalue = case.lvalues.get(ta).is_some_and(|x| case.lvalues.get(tb) == Some(x));
            let same_operand = t.get(ta) == t.get(tb);
            if same_lvalue && !same_operand {
                return None;
            }
            if !same_object && !(same_operand && same_lvalue) && a < &(b + lb) && b < &(a + la) {
                return None;
            }
        }
    }
    Some(pl)
}

fn apply(m: &mut MachineState, pl: &Placement) {
    for (r, v) in &pl.regs {
        m.set_reg(*r, *v as u128);
    }
    m.esp0 = m.gpr[4];
}

/// Let register inputs repeat consecutive words held in a token cell.
fn reuse_cell_words(case: &Case, m: &mut MachineState, t: &TokenAssignment, pl: &Placement, rng: &mut ChaCha8Rng) {
    let cells: Vec<(u32, u32)> = pl.cells.values().copied().filter(|(_, len)| *len >= 4).collect();
    if cells.is_empty() || rng.next_u32() % 2 == 0 {
        return;
    }
    let (addr, len) = cells[below(rng, cells.len() as u32) as usize];
    let words = len / 4;
    let mut cursor = below(rng, words);
    for id in input_widths(&case.fi).keys() {
        let Some(Operand::Reg(r)) = t.get(id) else { continue };
        if pl.regs.contains_key(r) || rng.next_u32() % 4 == 0 {
            continue;
        }
        if let Ok(w) = m.load(addr + 4 * (cursor % words), 4) {
            m.set_reg(*r, w);
        }
        cursor += 1;
    }
}

fn holds(m: &MachineState, pl: &Placement) -> bool {
    pl.regs.iter().all(|(r, v)| m.reg(*r) as u32 == *v)
}

fn output_widths(fi: &FormalInterface) -> BTreeMap<TokenId, u32> {
    fi.tokens
        .iter()
        .filter_map(|(t, i)| i.output_bits.map(|b| (*t, b)))
        .collect()
}

fn input_widths(fi: &FormalInterface) -> BTreeMap<TokenId, u32> {
    fi.tokens
        .iter()
        .filter_map(|(t, i)| i.input_bits.map(|b| (*t, b)))
        .collect()
}

/// Copy the input evaluations of `(src, t1)` into `(dst, t2)`.
fn copy_inputs(case: &Case, src: &MachineState, t1: &TokenAssignment, dst: &mut MachineState, t2: &TokenAssignment) -> Result<(), ExecError> {
    for (t, bits) in input_widths(&case.fi) {
        let (Some(o1), Some(o2)) = (t1.get(&t), t2.get(&t)) else { continue };
        let v = operand_value(src, o1, bits)?;
        set_operand(dst, o2, bits, v)?;
        if operand_value(dst, o2, bits)? != v {
            return Err(ExecError::Unsupported(format!("{t} cannot hold {v:#x}")));
        }
    }
    Ok(())
}

/// Memory outputs are part of C memory when `F` is false.
fn copy_memory_outputs(case: &Case, src: &MachineState, t1: &TokenAssignment, dst: &mut MachineState, t2: &TokenAssignment) -> Result<(), ExecError> {
    for (t, bits) in output_widths(&case.fi) {
        if let (Some(o1), Some(o2 @ Operand::Mem(_))) = (t1.get(&t), t2.get(&t)) {
            let v = operand_value(src, o1, bits)?;
            set_operand(dst, o2, bits, v)?;
        }
    }
    Ok(())
}

/// Give `(m, t1)` the immediate values `t2` fixes, so the pair can agree on inputs.
fn adopt_immediates(case: &Case, m: &mut MachineState, t1: &TokenAssignment, t2: &TokenAssignment) {
    for (t, bits) in input_widths(&case.fi) {
        if let (Some(o1), Some(Operand::Imm(k))) = (t1.get(&t), t2.get(&t)) {
            let _ = set_operand(m, o1, bits, *k as u128 & mask(bits));
        }
    }
}

fn hex(v: u128, bits: u32) -> String {
    format!("{:#0w$x}", v, w = bits.div_ceil(4) as usize + 2)
}

fn dump(case: &Case, m: &MachineState, pl: &Placement) -> StateDump {
    let mut registers = BTreeMap::new();
    for r in Reg::GPR {
        registers.insert(r.name(), hex(m.reg(r), 32));
    }
    if case.vectors {
        for i in 0..8u8 {
            registers.insert(Reg::Mm(i).name(), hex(m.reg(Reg::Mm(i)), 64));
            registers.insert(Reg::Xmm(i).name(), hex(m.reg(Reg::Xmm(i)), 128));
        }
    }
    let mut flags = String::new();
    for f in Flag::ALL {
        if !flags.is_empty() {
            flags.push(' ');
        }
        let _ = write!(flags, "{}f={}", f.name(), m.flag(f) as u8);
    }
    let mut memory = BTreeMap::new();
    for (addr, len) in pl.cells.values() {
        if let Ok(off) = m.offset(*addr, *len) {
            let mut s = String::new();
            for b in &m.memory[off..off + *len as usize] {
                let _ = write!(s, "{b:02x}");
            }
            memory.insert(format!("{addr:#010x}"), s);
        }
    }
    StateDump {
        registers,
        flags,
        memory,
    }
}

fn describe(t: &TokenAssignment) -> BTreeMap<String, String> {
    t.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect()
}

enum Trial {
    Ok,
    Skipped,
    Violation(Witness),
}

fn frame_write_trial(case: &Case, cfg: &TrialConfig, trial: u32) -> Trial {
    let n = case.assignments.len();
    let k = trial as usize % n;
    let t = &case.assignments[k];
    let mut rng = trial_rng(cfg.seed, trial);
    let Some(pl) = place(case, t, cfg, &mut rng) else { return Trial::Skipped };
    let mut m = random_state(cfg, &mut rng, case.vectors);
    apply(&mut m, &pl);
    reuse_cell_words(case, &mut m, t, &pl, &mut rng);
    let Ok(out) = exec(&case.programs[k], &m) else { return Trial::Skipped };
    let fi = &case.fi;
    let mut assignable: BTreeSet<Reg> = fi.s_c.clone();
    for o in &fi.b_o {
        if let Some(Operand::Reg(r)) = t.get(o) {
            assignable.insert(*r);
        }
    }
    let mut location = None;
    let mut regs: Vec<Reg> = Reg::GPR.to_vec();
    if case.vectors {
        regs.extend((0..8).map(Reg::Mm));
        regs.extend((0..8).map(Reg::Xmm));
    }
    for r in regs {
        if !assignable.contains(&r) && m.reg(r) != out.reg(r) {
            location = Some(r.name());
            break;
        }
    }
    if location.is_none() && !fi.flags_clobbered {
        location = Flag::ALL
            .into_iter()
            .find(|f| m.flag(*f) != out.flag(*f))
            .map(|f| Location::Flag(f).to_string());
    }
    if location.is_none() && fi.f {
        let outputs: Vec<(u32, u32)> = fi.b_o.iter().filter_map(|o| pl.cells.get(o).copied()).collect();
        location = (0..m.memory.len())
            .map(|i| m.base.wrapping_add(i as u32))
            .find(|a| {
                let i = a.wrapping_sub(m.base) as usize;
                m.memory[i] != out.memory[i]
                    && !m.in_scratch(*a)
                    && !outputs.iter().any(|(s, l)| a >= s && *a < s + l)
            })
            .map(|a| format!("mem[{a:#010x}]"));
    }
    match location {
        None => Trial::Ok,
        Some(location) => Trial::Violation(Witness {
            property: Property::FrameWrite,
            trial,
            location,
            assignments: vec![describe(t)],
            states: vec![dump(case, &m, &pl), dump(case, &out, &pl)],
        }),
    }
}

/// Run `(m1, T1)` and `(m2, T2)` from input-equivalent states and compare outputs.
fn pair_trial(case: &Case, cfg: &TrialConfig, trial: u32, property: Property, k1: usize, k2: usize, rng: &mut ChaCha8Rng) -> Trial {
    let (t1, t2) = (&case.assignments[k1], &case.assignments[k2]);
    let Some(p1) = place(case, t1, cfg, rng) else { return Trial::Skipped };
    let Some(p2) = place(case, t2, cfg, rng) else { return Trial::Skipped };
    let mut m1 = random_state(cfg, rng, case.vectors);
    apply(&mut m1, &p1);
    reuse_cell_words(case, &mut m1, t1, &p1, rng);
    adopt_immediates(case, &mut m1, t1, t2);
    if !holds(&m1, &p1) {
        return Trial::Skipped;
    }
    let mut m2 = random_state(cfg, rng, case.vectors);
    apply(&mut m2, &p2);
    if !case.fi.f {
        m2.memory.clone_from(&m1.memory);
    }
    if (!case.fi.f && copy_memory_outputs(case, &m1, t1, &mut m2, t2).is_err())
        || copy_inputs(case, &m1, t1, &mut m2, t2).is_err()
        || !holds(&m2, &p2)
    {
        return Trial::Skipped;
    }
    let (Ok(o1), Ok(o2)) = (exec(&case.programs[k1], &m1), exec(&case.programs[k2], &m2)) else {
        return Trial::Skipped;
    };
    let cells: Vec<(u32, u32)> = if k1 == k2 {
        Vec::new()
    } else {
        p1.cells.values().chain(p2.cells.values()).copied().collect()
    };
    match difference_outside(&o1, &o2, t1, t2, &output_widths(&case.fi), case.fi.f, &cells) {
        None => Trial::Ok,
        Some(location) => Trial::Violation(Witness {
            property,
            trial,
            location,
            assignments: vec![describe(t1), describe(t2)],
            states: vec![dump(case, &m1, &p1), dump(case, &m2, &p2)],
        }),
    }
}

fn frame_read_trial(case: &Case, cfg: &TrialConfig, trial: u32, property: Property) -> Trial {
    let k = trial as usize % case.assignments.len();
    let mut rng = trial_rng(cfg.seed, trial);
    pair_trial(case, cfg, trial, property, k, k, &mut rng)
}

fn unicity_trial(case: &Case, cfg: &TrialConfig, trial: u32) -> Trial {
    match frame_read_trial(case, cfg, trial, Property::Unicity) {
        Trial::Violation(w) => return Trial::Violation(w),
        Trial::Ok | Trial::Skipped => {}
    }
    let n = case.assignments.len();
    let k1 = trial as usize % n;
    let mut rng = trial_rng(cfg.seed, trial);
    rng.set_word_pos(1 << 20);
    let mut k2 = below(&mut rng, n as u32) as usize;
    if k2 == k1 && n > 1 {
        k2 = (k2 + 1) % n;
    }
    pair_trial(case, cfg, trial, Property::Unicity, k1, k2, &mut rng)
}

fn run_property(case: &Case, property: Property, cfg: &TrialConfig) -> OracleVerdict {
    let mut completed = 0u32;
    for trial in 0..cfg.trials.max(1) {
        let outcome = match property {
            Property::FrameWrite => frame_write_trial(case, cfg, trial),
            Property::FrameRead => frame_read_trial(case, cfg, trial, Property::FrameRead),
            Property::Unicity => unicity_trial(case, cfg, trial),
        };
        match outcome {
            Trial::Violation(w) => return OracleVerdict::Violation(w),
            Trial::Ok => completed += 1,
            Trial::Skipped => {}
        }
    }
    if completed == 0 {
        OracleVerdict::Inconclusive {
            reason: "no trial could be executed inside the sandbox".into(),
        }
    } else if case.truncated {
        OracleVerdict::Inconclusive {
            reason: format!(
                "assignment space exceeds the cap of {}; {completed} sampled trials passed",
                cfg.assignment_cap
            ),
        }
    } else {
        OracleVerdict::Pass {
            trials: completed,
            assignments: case.assignments.len(),
        }
    }
}

pub fn oracle_check(chunk: &ChunkAst, property: Property, cfg: &TrialConfig) -> OracleVerdict {
    match prepare_case(chunk, cfg) {
        Ok(case) => run_property(&case, property, cfg),
        Err(reason) => OracleVerdict::Inconclusive { reason },
    }
}

/// All three properties on one chunk, sharing the setup.
pub fn oracle_chunk(chunk: &ChunkAst, cfg: &TrialConfig) -> OracleReport {
    match prepare_case(chunk, cfg) {
        Ok(case) => OracleReport {
            frame_write: run_property(&case, Property::FrameWrite, cfg),
            frame_read: run_property(&case, Property::FrameRead, cfg),
            unicity: run_property(&case, Property::Unicity, cfg),
        },
        Err(reason) => {
            let v = OracleVerdict::Inconclusive { reason };
            OracleReport {
                frame_write: v.clone(),
                frame_read: v.clone(),
                unicity: v,
            }
        }
    }
}

/// Check one concrete pair of assignments for unicity.
pub fn unicity_pair(chunk: &ChunkAst, t1: &TokenAssignment, t2: &TokenAssignment, cfg: &TrialConfig) -> OracleVerdict {
    let mut case = match prepare_case(chunk, cfg) {
        Ok(c) => c,
        Err(reason) => return OracleVerdict::Inconclusive { reason },
    };
    let prep = match prepare(chunk) {
        Ok(p) => p,
        Err(s) => return OracleVerdict::Inconclusive { reason: s.message },
    };
    let mut programs = Vec::new();
    for t in [t1, t2] {
        match substitute(&prep.program, t) {
            Ok(p) => programs.push(p),
            Err(e) => return OracleVerdict::Inconclusive { reason: e.to_string() },
        }
    }
    case.assignments = vec![t1.clone(), t2.clone()];
    case.programs = programs;
    let mut completed = 0;
    for trial in 0..cfg.trials.max(1) {
        let mut rng = trial_rng(cfg.seed, trial);
        match pair_trial(&case, cfg, trial, Property::Unicity, 0, 1, &mut rng) {
            Trial::Violation(w) => return OracleVerdict::Violation(w),
            Trial::Ok => completed += 1,
            Trial::Skipped => {}
        }
    }
    if completed == 0 {
        OracleVerdict::Inconclusive {
            reason: "no trial could be executed inside the sandbox".into(),
        }
    } else {
        OracleVerdict::Pass {
            trials: completed,
            assignments: 2,
        }
    }
}

#[cfg(test)]
mod tests;
