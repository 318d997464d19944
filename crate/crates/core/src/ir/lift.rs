//! Instruction semantics: template instructions to IR statements, with full
//! flag effects. Sub-register writes become read-modify-write of the parent.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use super::template::{AddrPart, TemplateInstr, TemplateOperand, TokenRef};
use super::{Binop, Expr, Location, Program, Stmt, TokenId, Unop};
use crate::arch::{Flag, Reg};
use crate::interface::FormalInterface;

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum LiftError {
    #[error("unsupported mnemonic {0:?}")]
    UnknownMnemonic(String),
    #[error("{mnemonic}: {reason}")]
    BadOperand { mnemonic: String, reason: String },
    #[error("jump to label {0:?} outside the template")]
    UnknownLabel(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Cond {
    O,
    No,
    B,
    Ae,
    E,
    Ne,
    Be,
    A,
    S,
    Ns,
    P,
    Np,
    L,
    Ge,
    Le,
    G,
}

impl Cond {
    pub fn parse(s: &str) -> Option<Cond> {
        Some(match s {
            "o" => Cond::O,
            "no" => Cond::No,
            "b" | "c" | "nae" => Cond::B,
            "ae" | "nb" | "nc" => Cond::Ae,
            "e" | "z" => Cond::E,
            "ne" | "nz" => Cond::Ne,
            "be" | "na" => Cond::Be,
            "a" | "nbe" => Cond::A,
            "s" => Cond::S,
            "ns" => Cond::Ns,
            "p" | "pe" => Cond::P,
            "np" | "po" => Cond::Np,
            "l" | "nge" => Cond::L,
            "ge" | "nl" => Cond::Ge,
            "le" | "ng" => Cond::Le,
            "g" | "nle" => Cond::G,
            _ => return None,
        })
    }

    pub fn eval(self) -> Expr {
        let f = Expr::flag;
        let sf_ne_of = || Expr::binop(Binop::Ne, f(Flag::S), f(Flag::O));
        match self {
            Cond::O => f(Flag::O),
            Cond::No => Expr::not(f(Flag::O)),
            Cond::B => f(Flag::C),
            Cond::Ae => Expr::not(f(Flag::C)),
            Cond::E => f(Flag::Z),
            Cond::Ne => Expr::not(f(Flag::Z)),
            Cond::Be => Expr::or(f(Flag::C), f(Flag::Z)),
            Cond::A => Expr::not(Expr::or(f(Flag::C), f(Flag::Z))),
            Cond::S => f(Flag::S),
            Cond::Ns => Expr::not(f(Flag::S)),
            Cond::P => f(Flag::P),
            Cond::Np => Expr::not(f(Flag::P)),
            Cond::L => sf_ne_of(),
            Cond::Ge => Expr::not(sf_ne_of()),
            Cond::Le => Expr::or(f(Flag::Z), sf_ne_of()),
            Cond::G => Expr::not(Expr::or(f(Flag::Z), sf_ne_of())),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Op {
    Mov,
    Movzx(Option<u32>),
    Movsx(Option<u32>),
    Lea,
    Xchg,
    Add,
    Adc,
    Sub,
    Sbb,
    Cmp,
    Inc,
    Dec,
    Neg,
    And,
    Or,
    Xor,
    Test,
    Not,
    Shl,
    Shr,
    Sar,
    Rol,
    Ror,
    Mul,
    Imul,
    Bswap,
    Push,
    Pop,
    Set(Cond),
    Cmov(Cond),
    Jmp,
    Jcc(Cond),
    Cmpxchg,
    Cmpxchg8b,
    Nop,
    Movd,
    Movq,
    Movdq,
    Pxor,
    Emms,
}

fn suffix_bits(c: char) -> Option<u32> {
    match c {
        'b' => Some(8),
        'w' => Some(16),
        'l' => Some(32),
        _ => None,
    }
}

fn base_op(m: &str) -> Option<Op> {
    Some(match m {
        "mov" => Op::Mov,
        "lea" => Op::Lea,
        "xchg" => Op::Xchg,
        "add" => Op::Add,
        "adc" => Op::Adc,
        "sub" => Op::Sub,
        "sbb" => Op::Sbb,
        "cmp" => Op::Cmp,
        "inc" => Op::Inc,
        "dec" => Op::Dec,
        "neg" => Op::Neg,
        "and" => Op::And,
        "or" => Op::Or,
        "xor" => Op::Xor,
        "test" => Op::Test,
        "not" => Op::Not,
        "shl" | "sal" => Op::Shl,
        "shr" => Op::Shr,
        "sar" => Op::Sar,
        "rol" => Op::Rol,
        "ror" => Op::Ror,
        "mul" => Op::Mul,
        "imul" => Op::Imul,
        "bswap" => Op::Bswap,
        "push" => Op::Push,
        "pop" => Op::Pop,
        "cmpxchg" => Op::Cmpxchg,
        _ => return None,
    })
}

/// Decode a mnemonic into an operation and an explicit operand size.
fn decode(m: &str) -> Option<(Op, Option<u32>)> {
    match m {
        "cmpxchg8b" => return Some((Op::Cmpxchg8b, Some(64))),
        "nop" => return Some((Op::Nop, None)),
        "jmp" => return Some((Op::Jmp, None)),
        "movd" => return Some((Op::Movd, None)),
        "movq" => return Some((Op::Movq, None)),
        "movdqa" | "movdqu" | "movaps" | "movups" => return Some((Op::Movdq, Some(128))),
        "pxor" => return Some((Op::Pxor, None)),
        "emms" => return Some((Op::Emms, None)),
        _ => {}
    }
    if let Some(op) = base_op(m) {
        return Some((op, None));
    }
    if let Some(rest) = m.strip_prefix("set") {
        return Cond::parse(rest).map(|c| (Op::Set(c), Some(8)));
    }
    if let Some(rest) = m.strip_prefix("cmov") {
        if let Some(c) = Cond::parse(rest) {
            return Some((Op::Cmov(c), None));
        }
        let (cc, s) = rest.split_at(rest.len().checked_sub(1)?);
        return Cond::parse(cc).and_then(|c| suffix_bits(s.chars().next()?).map(|w| (Op::Cmov(c), Some(w))));
    }
    if let Some(rest) = m.strip_prefix('j') {
        return Cond::parse(rest).map(|c| (Op::Jcc(c), None));
    }
    for (prefix, signed) in [("movz", false), ("movs", true)] {
        if let Some(rest) = m.strip_prefix(prefix) {
            let mut cs = rest.chars();
            let src = cs.next().and_then(suffix_bits);
            let dst = cs.next().and_then(suffix_bits);
            if src.is_some() && cs.next().is_none() && src != Some(32) && !rest.is_empty() {
                return Some((if signed { Op::Movsx(src) } else { Op::Movzx(src) }, dst));
            }
            if rest == "x" {
                return Some((if signed { Op::Movsx(None) } else { Op::Movzx(None) }, None));
            }
        }
    }
    let (base, s) = m.split_at(m.len().checked_sub(1)?);
    let w = suffix_bits(s.chars().next()?)?;
    base_op(base).map(|op| (op, Some(w)))
}

/// Whether a mnemonic is in the supported subset.
pub fn supported(mnemonic: &str) -> bool {
    mnemonic.is_empty() || decode(mnemonic).is_some()
}

#[derive(Clone, Debug)]
enum Opnd {
    /// A register-like variable, viewed at bits `lo..lo+width`.
    Loc {
        loc: Location,
        full: u32,
        lo: u32,
        width: Option<u32>,
    },
    Mem { addr: Expr, bytes: Option<u32> },
    Imm(Expr),
    Label(String),
}

impl Opnd {
    fn hint(&self) -> Option<u32> {
        match self {
            Opnd::Loc { width: Some(w), .. } => Some(*w),
            Opnd::Loc { full, .. } => Some((*full).min(32)),
            Opnd::Mem { bytes, .. } => bytes.map(|b| b * 8),
            _ => None,
        }
    }

    fn is_reg_view(&self) -> bool {
        matches!(self, Opnd::Loc { loc: Location::Reg(_), .. })
    }
}

fn resize(e: Expr, w: u32) -> Expr {
    let ew = e.width();
    if ew == w {
        e
    } else if ew > w {
        Expr::extract(e, w - 1, 0)
    } else {
        Expr::sext(e, w)
    }
}

fn zresize(e: Expr, w: u32) -> Expr {
    let ew = e.width();
    if ew == w {
        e
    } else if ew > w {
        Expr::extract(e, w - 1, 0)
    } else {
        Expr::zext(e, w)
    }
}

fn konst(v: i128, w: u32) -> Expr {
    Expr::konst(v as u128, w)
}

fn ult(a: Expr, b: Expr) -> Expr {
    Expr::binop(Binop::Ult, a, b)
}

fn msb(e: Expr) -> Expr {
    let w = e.width();
    Expr::bit(e, w - 1)
}

fn parity(res: &Expr) -> Expr {
    let mut p = Expr::bit(res.clone(), 0);
    for i in 1..8 {
        p = Expr::xor(p, Expr::bit(res.clone(), i));
    }
    Expr::not(p)
}

struct Lifter<'a> {
    fi: &'a FormalInterface,
    stmts: Vec<Stmt>,
    origin: Vec<Option<u32>>,
    cur: u32,
    temps: u32,
    symbols: Vec<String>,
    mnemonic: String,
}

impl<'a> Lifter<'a> {
    fn emit(&mut self, s: Stmt) {
        self.stmts.push(s);
        self.origin.push(Some(self.cur));
    }

    fn assign(&mut self, dst: Location, value: Expr) {
        self.emit(Stmt::Assign { dst, value });
    }

    fn temp(&mut self, value: Expr) -> Expr {
        let t = Location::Temp(self.temps);
        self.temps += 1;
        let w = value.width();
        self.assign(t, value);
        Expr::var(t, w)
    }

    fn set_flag(&mut self, f: Flag, v: Expr) {
        self.assign(Location::Flag(f), v);
    }

    fn bad<T>(&self, reason: &str) -> Result<T, LiftError> {
        Err(LiftError::BadOperand {
            mnemonic: self.mnemonic.clone(),
            reason: reason.to_string(),
        })
    }

    fn symbol(&mut self, name: &str) -> Expr {
        let i = match self.symbols.iter().position(|s| s == name) {
            Some(i) => i,
            None => {
                self.symbols.push(name.to_string());
                self.symbols.len() - 1
            }
        };
        Expr::Symbol(i as u32)
    }

    fn token(&self, r: &TokenRef) -> Result<TokenId, LiftError> {
        self.fi
            .resolve_position(r.position)
            .map_or_else(|| self.bad("dangling token"), Ok)
    }

    fn token_value(&self, t: TokenId) -> Expr {
        Expr::var(Location::Token(t), self.fi.width(t))
    }

    fn addr_part(&self, p: &AddrPart) -> Result<Expr, LiftError> {
        match p {
            AddrPart::Reg(v) => {
                if v.width != 32 || !v.reg.is_gpr() {
                    return self.bad("address register must be 32-bit");
                }
                Ok(Expr::reg(v.reg))
            }
            AddrPart::Token(r) => {
                let t = self.token(r)?;
                if self.fi.is_memory_only(t) {
                    return self.bad("memory token used as address register");
                }
                Ok(zresize(self.token_value(t), 32))
            }
        }
    }

    fn operand(&mut self, op: &TemplateOperand) -> Result<Opnd, LiftError> {
        Ok(match op {
            TemplateOperand::Token(r) => {
                let t = self.token(r)?;
                let (lo, width) = match r.modifier {
                    Some('b') => (0, Some(8)),
                    Some('h') => (8, Some(8)),
                    Some('w') => (0, Some(16)),
                    Some('k') => (0, Some(32)),
                    _ => (0, None),
                };
                let info = &self.fi.tokens[&t];
                let imm_only = info
                    .columns
                    .iter()
                    .all(|c| c.class.immediate && !c.class.memory && c.class.registers.is_empty());
                if self.fi.is_memory_only(t) {
                    Opnd::Mem {
                        addr: Expr::var(Location::TokenAddr(t), 32),
                        bytes: Some(width.map_or(info.bits() / 8, |w| w / 8)),
                    }
                } else if imm_only {
                    Opnd::Imm(self.token_value(t))
                } else {
                    Opnd::Loc {
                        loc: Location::Token(t),
                        full: self.fi.width(t),
                        lo,
                        width,
                    }
                }
            }
            TemplateOperand::Reg(v) => Opnd::Loc {
                loc: Location::Reg(v.reg),
                full: v.reg.width(),
                lo: v.lo,
                width: Some(v.width),
            },
            TemplateOperand::Imm(v) => Opnd::Imm(Expr::konst(*v as u64 as u128, 64)),
            TemplateOperand::ImmSymbol { symbol, offset } => {
                let s = self.symbol(symbol);
                Opnd::Imm(Expr::add(s, konst(*offset as i128, 32)))
            }
            TemplateOperand::Mem {
                symbol,
                disp,
                base,
                index,
                scale,
            } => {
                let mut parts: Vec<Expr> = Vec::new();
                if let Some(b) = base {
                    parts.push(self.addr_part(b)?);
                }
                if let Some(i) = index {
                    let ie = self.addr_part(i)?;
                    parts.push(if *scale == 1 {
                        ie
                    } else {
                        Expr::binop(Binop::Mul, ie, konst(*scale as i128, 32))
                    });
                }
                if let Some(s) = symbol {
                    parts.push(self.symbol(s));
                }
                if *disp != 0 || parts.is_empty() {
                    parts.push(konst(*disp as i128, 32));
                }
                let addr = parts.into_iter().reduce(Expr::add);
                Opnd::Mem {
                    addr: addr.unwrap(),
                    bytes: None,
                }
            }
            TemplateOperand::Label(l) => Opnd::Label(l.clone()),
        })
    }

    fn read(&self, o: &Opnd, w: u32) -> Result<Expr, LiftError> {
        match o {
            Opnd::Loc { loc, full, lo, .. } => {
                let v = Expr::var(*loc, *full);
                let avail = full - lo;
                Ok(if w <= avail {
                    if *lo == 0 && w == *full {
                        v
                    } else {
                        Expr::extract(v, lo + w - 1, *lo)
                    }
                } else {
                    let part = if *lo == 0 { v } else { Expr::extract(v, full - 1, *lo) };
                    Expr::zext(part, w)
                })
            }
            Opnd::Mem { addr, .. } => {
                if w % 8 != 0 {
                    return self.bad("sub-byte memory access");
                }
                Ok(Expr::load(addr.clone(), w / 8))
            }
            Opnd::Imm(e) => Ok(resize(e.clone(), w)),
            Opnd::Label(_) => self.bad("label used as data operand"),
        }
    }

    fn write(&mut self, o: &Opnd, w: u32, value: Expr) -> Result<(), LiftError> {
        debug_assert_eq!(value.width(), w);
        match o {
            Opnd::Loc { loc, full, lo, .. } => {
                let (full, lo) = (*full, *lo);
                let w = w.min(full - lo);
                let value = zresize(value, w);
                let var = Expr::var(*loc, full);
                let mut v = value;
                if lo > 0 {
                    v = Expr::concat(v, Expr::extract(var.clone(), lo - 1, 0));
                }
                if lo + w < full {
                    v = Expr::concat(Expr::extract(var, full - 1, lo + w), v);
                }
                self.assign(*loc, v);
                Ok(())
            }
            Opnd::Mem { addr, .. } => {
                self.emit(Stmt::Store {
                    addr: addr.clone(),
                    bytes: w / 8,
                    value,
                });
                Ok(())
            }
            Opnd::Imm(_) => self.bad("immediate destination"),
            Opnd::Label(_) => self.bad("label destination"),
        }
    }

    fn address_of(&self, o: &Opnd) -> Result<Expr, LiftError> {
        match o {
            Opnd::Mem { addr, .. } => Ok(addr.clone()),
            _ => self.bad("expected a memory operand"),
        }
    }

    /// z, s, p from a result.
    fn result_flags(&mut self, res: &Expr) {
        let w = res.width();
        self.set_flag(Flag::Z, Expr::eq(res.clone(), konst(0, w)));
        self.set_flag(Flag::S, msb(res.clone()));
        self.set_flag(Flag::P, parity(res));
    }

    fn aux_flag(&mut self, a: &Expr, b: &Expr, res: &Expr) {
        self.set_flag(Flag::A, Expr::bit(Expr::xor(Expr::xor(a.clone(), b.clone()), res.clone()), 4));
    }

    fn add_flags(&mut self, a: &Expr, b: &Expr, res: &Expr, carry: Option<Expr>) {
        let w = res.width();
        self.result_flags(res);
        let cf = match carry {
            None => ult(res.clone(), a.clone()),
            Some(c) => {
                let wide = Expr::add(
                    Expr::add(Expr::zext(a.clone(), w + 1), Expr::zext(b.clone(), w + 1)),
                    Expr::zext(c, w + 1),
                );
                Expr::bit(wide, w)
            }
        };
        self.set_flag(Flag::C, cf);
        self.set_flag(
            Flag::O,
            msb(Expr::and(Expr::xor(a.clone(), res.clone()), Expr::xor(b.clone(), res.clone()))),
        );
        self.aux_flag(a, b, res);
    }

    fn sub_flags(&mut self, a: &Expr, b: &Expr, res: &Expr, borrow: Option<Expr>) {
        let w = res.width();
        self.result_flags(res);
        let cf = match borrow {
            None => ult(a.clone(), b.clone()),
            Some(c) => {
                let wide = Expr::sub(
                    Expr::sub(Expr::zext(a.clone(), w + 1), Expr::zext(b.clone(), w + 1)),
                    Expr::zext(c, w + 1),
                );
                Expr::bit(wide, w)
            }
        };
        self.set_flag(Flag::C, cf);
        self.set_flag(
            Flag::O,
            msb(Expr::and(Expr::xor(a.clone(), b.clone()), Expr::xor(a.clone(), res.clone()))),
        );
        self.aux_flag(a, b, res);
    }

    fn logic_flags(&mut self, res: &Expr) {
        self.result_flags(res);
        self.set_flag(Flag::C, konst(0, 1));
        self.set_flag(Flag::O, konst(0, 1));
        self.set_flag(Flag::A, konst(0, 1));
    }

    fn size(&self, explicit: Option<u32>, ops: &[Opnd]) -> u32 {
        if let Some(w) = explicit {
            return w;
        }
        ops.iter()
            .filter(|o| o.is_reg_view())
            .find_map(|o| o.hint())
            .or_else(|| ops.iter().find_map(|o| o.hint()))
            .unwrap_or(32)
    }

    fn arity(&self, ops: &[Opnd], n: usize) -> Result<(), LiftError> {
        if ops.len() != n {
            return self.bad(&alloc::format!("expected {n} operands, found {}", ops.len()));
        }
        Ok(())
    }

    fn shift(&mut self, op: Op, ops: &[Opnd], w: u32) -> Result<(), LiftError> {
        let (count, dst) = match ops.len() {
            1 => (Expr::konst(1, 8), &ops[0]),
            2 => (self.read(&ops[0], 8)?, &ops[1]),
            _ => return self.bad("expected 1 or 2 operands"),
        };
        let a = self.read(dst, w)?;
        let a = self.temp(a);
        let cnt = self.temp(Expr::and(count, Expr::konst(0x1f, 8)));
        let zero = Expr::eq(cnt.clone(), Expr::konst(0, 8));
        let wide = 2 * w;
        let n = Expr::zext(cnt.clone(), wide);
        let one = konst(1, wide);
        let keep = |f: Flag, v: Expr| Expr::ite(zero.clone(), Expr::flag(f), v);
        match op {
            Op::Shl | Op::Shr | Op::Sar => {
                let (r, cf) = match op {
                    Op::Shl => {
                        let r = Expr::binop(Binop::Shl, Expr::zext(a.clone(), wide), n);
                        (Expr::extract(r.clone(), w - 1, 0), Expr::bit(r, w))
                    }
                    Op::Shr => {
                        let x = Expr::zext(a.clone(), wide);
                        let r = Expr::binop(Binop::Shr, x.clone(), n.clone());
                        let last = Expr::binop(Binop::Shr, x, Expr::sub(n, one));
                        (Expr::extract(r, w - 1, 0), Expr::bit(last, 0))
                    }
                    _ => {
                        let x = Expr::sext(a.clone(), wide);
                        let r = Expr::binop(Binop::Sar, x.clone(), n.clone());
                        let last = Expr::binop(Binop::Sar, x, Expr::sub(n, one));
                        (Expr::extract(r, w - 1, 0), Expr::bit(last, 0))
                    }
                };
                let res = self.temp(r);
                let of = match op {
                    Op::Shl => Expr::xor(msb(res.clone()), cf.clone()),
                    Op::Shr => msb(a.clone()),
                    _ => konst(0, 1),
                };
                self.set_flag(Flag::Z, keep(Flag::Z, Expr::eq(res.clone(), konst(0, w))));
                self.set_flag(Flag::C, keep(Flag::C, cf));
                self.set_flag(Flag::S, keep(Flag::S, msb(res.clone())));
                self.set_flag(Flag::O, keep(Flag::O, of));
                self.set_flag(Flag::P, keep(Flag::P, parity(&res)));
                self.set_flag(Flag::A, keep(Flag::A, konst(0, 1)));
                self.write(dst, w, res)
            }
            _ => {
                let n = Expr::binop(Binop::Urem, Expr::zext(cnt, w.max(8)), konst(w as i128, w.max(8)));
                let n = zresize(n, w);
                let inv = Expr::sub(konst(w as i128, w), n.clone());
                let (l, r) = if op == Op::Rol { (n, inv) } else { (inv, n) };
                let rot = Expr::or(
                    Expr::binop(Binop::Shl, a.clone(), l),
                    Expr::binop(Binop::Shr, a.clone(), r),
                );
                let res = self.temp(rot);
                let (cf, of) = if op == Op::Rol {
                    let cf = Expr::bit(res.clone(), 0);
                    (cf.clone(), Expr::xor(msb(res.clone()), cf))
                } else {
                    (msb(res.clone()), Expr::xor(msb(res.clone()), Expr::bit(res.clone(), w - 2)))
                };
                self.set_flag(Flag::C, keep(Flag::C, cf));
                self.set_flag(Flag::O, keep(Flag::O, of));
                self.write(dst, w, res)
            }
        }
    }

    fn mul(&mut self, signed: bool, ops: &[Opnd], w: u32) -> Result<(), LiftError> {
        let ext = |e: Expr, n: u32| if signed { Expr::sext(e, n) } else { Expr::zext(e, n) };
        match ops.len() {
            1 => {
                let acc = Opnd::Loc {
                    loc: Location::Reg(Reg::Eax),
                    full: 32,
                    lo: 0,
                    width: Some(w),
                };
                let a = self.read(&acc, w)?;
                let b = self.read(&ops[0], w)?;
                let p = self.temp(Expr::binop(Binop::Mul, ext(a, 2 * w), ext(b, 2 * w)));
                let lo = Expr::extract(p.clone(), w - 1, 0);
                let hi = Expr::extract(p.clone(), 2 * w - 1, w);
                let overflow = if signed {
                    Expr::binop(Binop::Ne, p.clone(), Expr::sext(lo.clone(), 2 * w))
                } else {
                    Expr::binop(Binop::Ne, hi.clone(), konst(0, w))
                };
                self.result_flags(&lo);
                self.set_flag(Flag::C, overflow.clone());
                self.set_flag(Flag::O, overflow);
                self.set_flag(Flag::A, konst(0, 1));
                if w == 8 {
                    let ax = Opnd::Loc {
                        loc: Location::Reg(Reg::Eax),
                        full: 32,
                        lo: 0,
                        width: Some(16),
                    };
                    self.write(&ax, 16, p)
                } else {
                    self.write(&acc, w, lo)?;
                    let d = Opnd::Loc {
                        loc: Location::Reg(Reg::Edx),
                        full: 32,
                        lo: 0,
                        width: Some(w),
                    };
                    self.write(&d, w, hi)
                }
            }
            2 | 3 if signed => {
                let (src, dst, a_op) = if ops.len() == 2 {
                    (&ops[0], &ops[1], &ops[1])
                } else {
                    (&ops[0], &ops[2], &ops[1])
                };
                let a = self.read(a_op, w)?;
                let b = self.read(src, w)?;
                let p = self.temp(Expr::binop(Binop::Mul, Expr::sext(a, 2 * w), Expr::sext(b, 2 * w)));
                let lo = Expr::extract(p.clone(), w - 1, 0);
                let overflow = Expr::binop(Binop::Ne, p, Expr::sext(lo.clone(), 2 * w));
                self.result_flags(&lo);
                self.set_flag(Flag::C, overflow.clone());
                self.set_flag(Flag::O, overflow);
                self.set_flag(Flag::A, konst(0, 1));
                self.write(dst, w, lo)
            }
            _ => self.bad("bad operand count"),
        }
    }

    fn lift_instr(&mut self, ins: &TemplateInstr, jumps: &mut Vec<(usize, String)>) -> Result<(), LiftError> {
        if ins.mnemonic.is_empty() {
            return Ok(());
        }
        self.mnemonic = ins.mnemonic.clone();
        let (op, explicit) = decode(&ins.mnemonic).ok_or_else(|| LiftError::UnknownMnemonic(ins.mnemonic.clone()))?;
        let ops: Vec<Opnd> = ins
            .operands
            .iter()
            .map(|o| self.operand(o))
            .collect::<Result<_, _>>()?;
        let w = self.size(explicit, &ops);
        if !matches!(op, Op::Cmpxchg8b | Op::Movq | Op::Movd | Op::Movdq | Op::Pxor) && !matches!(w, 8 | 16 | 32) {
            return self.bad("operand size");
        }
        match op {
            Op::Nop | Op::Emms => {}
            Op::Mov => {
                self.arity(&ops, 2)?;
                let v = self.read(&ops[0], w)?;
                self.write(&ops[1], w, v)?;
            }
            Op::Movzx(src) | Op::Movsx(src) => {
                self.arity(&ops, 2)?;
                let sw = src.or_else(|| ops[0].hint()).unwrap_or(8);
                let dw = explicit.or_else(|| ops[1].hint()).unwrap_or(32);
                if sw >= dw {
                    return self.bad("extension must widen");
                }
                let v = self.read(&ops[0], sw)?;
                let v = if matches!(op, Op::Movsx(_)) { Expr::sext(v, dw) } else { Expr::zext(v, dw) };
                self.write(&ops[1], dw, v)?;
            }
            Op::Lea => {
                self.arity(&ops, 2)?;
                let a = self.address_of(&ops[0])?;
                let dw = ops[1].hint().unwrap_or(32);
                self.write(&ops[1], dw, zresize(a, dw))?;
            }
            Op::Xchg => {
                self.arity(&ops, 2)?;
                let a = self.read(&ops[0], w)?;
                let t = self.temp(a);
                let b = self.read(&ops[1], w)?;
                self.write(&ops[0], w, b)?;
                self.write(&ops[1], w, t)?;
            }
            Op::Add | Op::Adc | Op::Sub | Op::Sbb | Op::Cmp => {
                self.arity(&ops, 2)?;
                let b = self.read(&ops[0], w)?;
                let b = self.temp(b);
                let a = self.read(&ops[1], w)?;
                let a = self.temp(a);
                let carry = matches!(op, Op::Adc | Op::Sbb).then(|| Expr::flag(Flag::C));
                let c = carry.clone().map(|c| Expr::zext(c, w));
                let res = match op {
                    Op::Add | Op::Adc => Expr::add(a.clone(), b.clone()),
                    _ => Expr::sub(a.clone(), b.clone()),
                };
                let res = match (op, c) {
                    (Op::Adc, Some(c)) => Expr::add(res, c),
                    (Op::Sbb, Some(c)) => Expr::sub(res, c),
                    _ => res,
                };
                let res = self.temp(res);
                if matches!(op, Op::Add | Op::Adc) {
                    self.add_flags(&a, &b, &res, carry);
                } else {
                    self.sub_flags(&a, &b, &res, carry);
                }
                if op != Op::Cmp {
                    self.write(&ops[1], w, res)?;
                }
            }
            Op::Inc | Op::Dec => {
                self.arity(&ops, 1)?;
                let a = self.read(&ops[0], w)?;
                let a = self.temp(a);
                let one = konst(1, w);
                let res = if op == Op::Inc {
                    Expr::add(a.clone(), one.clone())
                } else {
                    Expr::sub(a.clone(), one.clone())
                };
                let res = self.temp(res);
                self.result_flags(&res);
                let of = if op == Op::Inc {
                    msb(Expr::and(Expr::xor(a.clone(), res.clone()), Expr::xor(one.clone(), res.clone())))
                } else {
                    msb(Expr::and(Expr::xor(a.clone(), one.clone()), Expr::xor(a.clone(), res.clone())))
                };
                self.set_flag(Flag::O, of);
                self.aux_flag(&a, &one, &res);
                self.write(&ops[0], w, res)?;
            }
            Op::Neg => {
                self.arity(&ops, 1)?;
                let a = self.read(&ops[0], w)?;
                let a = self.temp(a);
                let res = self.temp(Expr::unop(Unop::Neg, a.clone()));
                self.sub_flags(&konst(0, w), &a, &res, None);
                self.write(&ops[0], w, res)?;
            }
            Op::And | Op::Or | Op::Xor | Op::Test => {
                self.arity(&ops, 2)?;
                let b = self.read(&ops[0], w)?;
                let a = self.read(&ops[1], w)?;
                let bop = match op {
                    Op::And | Op::Test => Binop::And,
                    Op::Or => Binop::Or,
                    _ => Binop::Xor,
                };
                let res = self.temp(Expr::binop(bop, a, b));
                self.logic_flags(&res);
                if op != Op::Test {
                    self.write(&ops[1], w, res)?;
                }
            }
            Op::Not => {
                self.arity(&ops, 1)?;
                let a = self.read(&ops[0], w)?;
                self.write(&ops[0], w, Expr::not(a))?;
            }
            Op::Shl | Op::Shr | Op::Sar | Op::Rol | Op::Ror => self.shift(op, &ops, w)?,
            Op::Mul => {
                self.arity(&ops, 1)?;
                self.mul(false, &ops, w)?;
            }
            Op::Imul => self.mul(true, &ops, w)?,
            Op::Bswap => {
                self.arity(&ops, 1)?;
                if w != 32 {
                    return self.bad("bswap needs a 32-bit register");
                }
                let a = self.read(&ops[0], 32)?;
                let b = |i: u32| Expr::extract(a.clone(), 8 * i + 7, 8 * i);
                let v = Expr::concat(Expr::concat(b(0), b(1)), Expr::concat(b(2), b(3)));
                self.write(&ops[0], 32, v)?;
            }
            Op::Push => {
                self.arity(&ops, 1)?;
                let w = explicit.unwrap_or(32);
                let v = self.read(&ops[0], w)?;
                let t = self.temp(v);
                let esp = Expr::reg(Reg::Esp);
                self.assign(Location::Reg(Reg::Esp), Expr::sub(esp.clone(), konst((w / 8) as i128, 32)));
                self.emit(Stmt::Store {
                    addr: esp,
                    bytes: w / 8,
                    value: t,
                });
            }
            Op::Pop => {
                self.arity(&ops, 1)?;
                let w = explicit.unwrap_or(32);
                let esp = Expr::reg(Reg::Esp);
                let t = self.temp(Expr::load(esp.clone(), w / 8));
                self.assign(Location::Reg(Reg::Esp), Expr::add(esp, konst((w / 8) as i128, 32)));
                self.write(&ops[0], w, t)?;
            }
            Op::Set(c) => {
                self.arity(&ops, 1)?;
                self.write(&ops[0], 8, Expr::zext(c.eval(), 8))?;
            }
            Op::Cmov(c) => {
                self.arity(&ops, 2)?;
                if w == 8 {
                    return self.bad("cmov has no byte form");
                }
                let src = self.read(&ops[0], w)?;
                let dst = self.read(&ops[1], w)?;
                self.write(&ops[1], w, Expr::ite(c.eval(), src, dst))?;
            }
            Op::Jmp => {
                self.arity(&ops, 1)?;
                let Opnd::Label(l) = &ops[0] else {
                    return self.bad("indirect jump");
                };
                jumps.push((self.stmts.len(), l.clone()));
                self.emit(Stmt::Goto(usize::MAX));
            }
            Op::Jcc(c) => {
                self.arity(&ops, 1)?;
                let Opnd::Label(l) = &ops[0] else {
                    return self.bad("indirect jump");
                };
                jumps.push((self.stmts.len(), l.clone()));
                let next = self.stmts.len() + 1;
                self.emit(Stmt::Branch {
                    cond: c.eval(),
                    then: usize::MAX,
                    els: next,
                });
            }
            Op::Cmpxchg => {
                self.arity(&ops, 2)?;
                let acc = Opnd::Loc {
                    loc: Location::Reg(Reg::Eax),
                    full: 32,
                    lo: 0,
                    width: Some(w),
                };
                let d = self.read(&ops[1], w)?;
                let d = self.temp(d);
                let a = self.read(&acc, w)?;
                let a = self.temp(a);
                let s = self.read(&ops[0], w)?;
                let s = self.temp(s);
                let res = self.temp(Expr::sub(a.clone(), d.clone()));
                self.sub_flags(&a, &d, &res, None);
                let z = Expr::flag(Flag::Z);
                self.write(&ops[1], w, Expr::ite(z.clone(), s, d.clone()))?;
                self.write(&acc, w, Expr::ite(z, a, d))?;
            }
            Op::Cmpxchg8b => {
                self.arity(&ops, 1)?;
                let addr = self.address_of(&ops[0])?;
                let t = self.temp(Expr::load(addr.clone(), 8));
                let edx_eax = Expr::concat(Expr::reg(Reg::Edx), Expr::reg(Reg::Eax));
                self.set_flag(Flag::Z, Expr::eq(edx_eax, t.clone()));
                let z = Expr::flag(Flag::Z);
                let ecx_ebx = Expr::concat(Expr::reg(Reg::Ecx), Expr::reg(Reg::Ebx));
                self.emit(Stmt::Store {
                    addr,
                    bytes: 8,
                    value: Expr::ite(z.clone(), ecx_ebx, t.clone()),
                });
                self.assign(
                    Location::Reg(Reg::Edx),
                    Expr::ite(z.clone(), Expr::reg(Reg::Edx), Expr::extract(t.clone(), 63, 32)),
                );
                self.assign(
                    Location::Reg(Reg::Eax),
                    Expr::ite(z, Expr::reg(Reg::Eax), Expr::extract(t, 31, 0)),
                );
            }
            Op::Movd | Op::Movq | Op::Movdq | Op::Pxor => self.simd(op, &ops)?,
        }
        Ok(())
    }

    /// Data movement between general-purpose, MMX and XMM registers.
    fn simd(&mut self, op: Op, ops: &[Opnd]) -> Result<(), LiftError> {
        self.arity(ops, 2)?;
        let vec_width = |o: &Opnd| match o {
            Opnd::Loc {
                loc: Location::Reg(r @ (Reg::Mm(_) | Reg::Xmm(_))),
                ..
            } => Some(r.width()),
            _ => None,
        };
        let (src, dst) = (&ops[0], &ops[1]);
        let dw = vec_width(dst);
        let sw = vec_width(src);
        if dw.is_none() && sw.is_none() {
            return self.bad("needs an MMX or XMM register");
        }
        match op {
            Op::Movd | Op::Movq => {
                let n = if op == Op::Movd { 32 } else { 64 };
                let v = self.read(src, n)?;
                match dw {
                    Some(w) => self.write(dst, w, zresize(v, w)),
                    None => self.write(dst, n, v),
                }
            }
            Op::Movdq => {
                if dw != Some(128) && sw != Some(128) {
                    return self.bad("needs an XMM register");
                }
                let v = self.read(src, 128)?;
                self.write(dst, 128, v)
            }
            _ => {
                let Some(w) = dw else {
                    return self.bad("destination must be a vector register");
                };
                let a = self.read(dst, w)?;
                let b = self.read(src, w)?;
                self.write(dst, w, Expr::xor(a, b))
            }
        }
    }
}

fn resolve_label(name: &str, at: usize, defs: &BTreeMap<String, Vec<(usize, usize)>>) -> Option<usize> {
    let dir = name.chars().last();
    let numeric = name.len() > 1 && name[..name.len() - 1].bytes().all(|b| b.is_ascii_digit());
    if numeric && matches!(dir, Some('f') | Some('b')) {
        let list = defs.get(&name[..name.len() - 1])?;
        return if dir == Some('f') {
            list.iter().find(|(ins, _)| *ins > at).map(|(_, s)| *s)
        } else {
            list.iter().rev().find(|(ins, _)| *ins <= at).map(|(_, s)| *s)
        };
    }
    match defs.get(name) {
        Some(list) if list.len() == 1 => Some(list[0].1),
        _ => None,
    }
}

/// Lift parsed template instructions against a derived interface.
pub fn lift(instrs: &[TemplateInstr], fi: &FormalInterface) -> Result<Program, LiftError> {
    let mut l = Lifter {
        fi,
        stmts: Vec::new(),
        origin: Vec::new(),
        cur: 0,
        temps: 0,
        symbols: Vec::new(),
        mnemonic: String::new(),
    };
    let mut defs: BTreeMap<String, Vec<(usize, usize)>> = BTreeMap::new();
    let mut jumps = Vec::new();
    let mut jump_instr = Vec::new();
    for (i, ins) in instrs.iter().enumerate() {
        l.cur = i as u32;
        for lab in &ins.labels {
            defs.entry(lab.clone()).or_default().push((i, l.stmts.len()));
        }
        let before = jumps.len();
        l.lift_instr(ins, &mut jumps)?;
        for _ in before..jumps.len() {
            jump_instr.push(i);
        }
    }
    l.stmts.push(Stmt::Halt);
    l.origin.push(None);
    for ((at, name), ins) in jumps.into_iter().zip(jump_instr) {
        let target = resolve_label(&name, ins, &defs).ok_or(LiftError::UnknownLabel(name))?;
        match &mut l.stmts[at] {
            Stmt::Goto(t) => *t = target,
            Stmt::Branch { then, .. } => *then = target,
            _ => unreachable!(),
        }
    }
    let token_widths = fi.token_ids().map(|t| (t, fi.width(t))).collect();
    Ok(Program {
        stmts: l.stmts,
        origin: l.origin,
        token_widths,
        symbols: l.symbols,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::extraction::ChunkAst;
    use crate::interface::derive_interface;
    use crate::ir::simplify::simplify;
    use crate::ir::template::parse_template;

    fn lift_src(template: &str, chunk: ChunkAst) -> Program {
        let fi = derive_interface(&chunk).unwrap();
        let ins = parse_template(template, &chunk).unwrap();
        let p = lift(&ins, &fi).unwrap();
        p.validate().unwrap();
        p
    }

    #[test]
    fn decode_suffixes() {
        assert_eq!(decode("movl"), Some((Op::Mov, Some(32))));
        assert_eq!(decode("setb"), Some((Op::Set(Cond::B), Some(8))));
        assert_eq!(decode("movzbl"), Some((Op::Movzx(Some(8)), Some(32))));
        assert_eq!(decode("shll"), Some((Op::Shl, Some(32))));
        assert_eq!(decode("cmovnel"), Some((Op::Cmov(Cond::Ne), Some(32))));
        assert_eq!(decode("jnz"), Some((Op::Jcc(Cond::Ne), None)));
        assert_eq!(decode("fld"), None);
        assert_eq!(decode("cpuid"), None);
    }

    #[test]
    fn setz_on_al() {
        let p = lift_src("setz %%al", ChunkAst::new(""));
        assert_eq!(p.stmts.len(), 2);
        assert_eq!(
            p.stmts[0],
            Stmt::Assign {
                dst: Location::Reg(Reg::Eax),
                value: Expr::concat(
                    Expr::extract(Expr::reg(Reg::Eax), 31, 8),
                    Expr::zext(Expr::flag(Flag::Z), 8)
                )
            }
        );
    }

    #[test]
    fn add_tokens_sets_all_flags() {
        let c = ChunkAst::new("").output("+r", "x", 4).input("r", "y", 4);
        let p = lift_src("addl %1, %0", c);
        let mut flags = alloc::collections::BTreeSet::new();
        let mut dst_written = false;
        for s in &p.stmts {
            if let Stmt::Assign { dst, .. } = s {
                match dst {
                    Location::Flag(f) => {
                        flags.insert(*f);
                    }
                    Location::Token(TokenId(0)) => dst_written = true,
                    _ => {}
                }
            }
        }
        assert_eq!(flags.len(), 6);
        assert!(dst_written);
    }

    #[test]
    fn memory_token_uses_its_address() {
        let c = ChunkAst::new("").output("=m", "x", 8);
        let p = lift_src("lock; cmpxchg8b %0", c);
        let Stmt::Assign { value, .. } = &p.stmts[0] else { panic!() };
        assert_eq!(
            *value,
            Expr::load(Expr::var(Location::TokenAddr(TokenId(0)), 32), 8)
        );
    }

    #[test]
    fn backward_local_label() {
        let c = ChunkAst::new("").output("+r", "x", 4);
        let p = lift_src("1: decl %0; jnz 1b", c);
        let Some(Stmt::Branch { then, .. }) = p.stmts.iter().find(|s| matches!(s, Stmt::Branch { .. })) else {
            panic!()
        };
        assert_eq!(*then, 0);
    }

    #[test]
    fn unknown_label() {
        let c = ChunkAst::new("");
        let fi = derive_interface(&c).unwrap();
        let ins = parse_template("jmp out", &c).unwrap();
        assert_eq!(lift(&ins, &fi), Err(LiftError::UnknownLabel("out".into())));
    }

    #[test]
    fn bswap_then_bswap_simplifies() {
        let p = lift_src("bswap %%eax", ChunkAst::new(""));
        let Stmt::Assign { value, .. } = &p.stmts[0] else { panic!() };
        assert_eq!(simplify(value.clone()).width(), 32);
    }
}
