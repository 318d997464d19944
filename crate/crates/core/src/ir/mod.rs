//! Side-effect-free bitvector IR: assignments, stores, gotos and
//! conditional gotos over registers, flags, tokens and one flat memory.
//!
//! Templates are parsed by [`template`], lifted by [`lift`], instantiated
//! with a token assignment by [`subst`] and normalized by [`simplify`].

pub mod bv;
pub mod lift;
pub mod simplify;
pub mod subst;
pub mod template;

use alloc::boxed::Box;
use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use serde::Serialize;

use crate::arch::{Flag, Reg};
pub use bv::Bv;

/// Interface position of an operand entry (`%N`), after unification.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(transparent)]
pub struct TokenId(pub u8);

impl fmt::Display for TokenId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "%{}", self.0)
    }
}

/// A dataflow location.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Location {
    Reg(Reg),
    Flag(Flag),
    /// Value of a token's operand (register contents, or the memory cell
    /// the token designates).
    Token(TokenId),
    /// Address of a memory-class token.
    TokenAddr(TokenId),
    /// Lifter-local scratch variable.
    Temp(u32),
    /// Stack cell at the given byte offset below the entry stack pointer;
    /// only produced by the checker's memory resolution.
    Slot(i32),
    /// The whole memory, as one fact.
    Memory,
}

impl Location {
    pub fn token(self) -> Option<TokenId> {
        match self {
            Location::Token(t) | Location::TokenAddr(t) => Some(t),
            _ => None,
        }
    }
}

impl fmt::Display for Location {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Location::Reg(r) => write!(f, "{r}"),
            Location::Flag(fl) => write!(f, "{fl}f"),
            Location::Token(t) => write!(f, "%{}", t.0),
            Location::TokenAddr(t) => write!(f, "&{}", t.0),
            Location::Temp(i) => write!(f, "t{i}"),
            Location::Slot(o) => write!(f, "stack[{o}]"),
            Location::Memory => f.write_str("memory"),
        }
    }
}

impl Serialize for Location {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Unop {
    Not,
    Neg,
    Zext(u32),
    Sext(u32),
    Extract { hi: u32, lo: u32 },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Binop {
    Add,
    Sub,
    Mul,
    Udiv,
    Urem,
    Sdiv,
    Srem,
    And,
    Or,
    Xor,
    Shl,
    Shr,
    Sar,
    Eq,
    Ne,
    Ugt,
    Ult,
    Sgt,
    Slt,
    Concat,
}

impl Binop {
    pub fn is_comparison(self) -> bool {
        matches!(
            self,
            Binop::Eq | Binop::Ne | Binop::Ugt | Binop::Ult | Binop::Sgt | Binop::Slt
        )
    }

    pub fn is_commutative(self) -> bool {
        matches!(
            self,
            Binop::Add | Binop::Mul | Binop::And | Binop::Or | Binop::Xor | Binop::Eq | Binop::Ne
        )
    }

    fn symbol(self) -> &'static str {
        match self {
            Binop::Add => "+",
            Binop::Sub => "-",
            Binop::Mul => "*",
            Binop::Udiv => "udiv",
            Binop::Urem => "urem",
            Binop::Sdiv => "sdiv",
            Binop::Srem => "srem",
            Binop::And => "&",
            Binop::Or => "|",
            Binop::Xor => "^",
            Binop::Shl => "shl",
            Binop::Shr => "shr",
            Binop::Sar => "sar",
            Binop::Eq => "=",
            Binop::Ne => "<>",
            Binop::Ugt => ">u",
            Binop::Ult => "<u",
            Binop::Sgt => ">s",
            Binop::Slt => "<s",
            Binop::Concat => "::",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Expr {
    Const(Bv),
    /// Read of a non-memory location at the given width.
    Var(Location, u32),
    /// Little-endian load of `bytes` bytes.
    Load { addr: Box<Expr>, bytes: u32 },
    /// Link-time address of a named symbol (index into the program's symbol table).
    Symbol(u32),
    Unop(Unop, Box<Expr>),
    Binop(Binop, Box<Expr>, Box<Expr>),
    Ite(Box<Expr>, Box<Expr>, Box<Expr>),
}

impl Expr {
    pub fn konst(bits: u128, width: u32) -> Expr {
        Expr::Const(Bv::new(bits, width))
    }

    pub fn var(loc: Location, width: u32) -> Expr {
        Expr::Var(loc, width)
    }

    pub fn reg(r: Reg) -> Expr {
        Expr::Var(Location::Reg(r), r.width())
    }

    pub fn flag(f: Flag) -> Expr {
        Expr::Var(Location::Flag(f), 1)
    }

    pub fn load(addr: Expr, bytes: u32) -> Expr {
        Expr::Load {
            addr: Box::new(addr),
            bytes,
        }
    }

    pub fn unop(op: Unop, x: Expr) -> Expr {
        Expr::Unop(op, Box::new(x))
    }

    pub fn binop(op: Binop, x: Expr, y: Expr) -> Expr {
        Expr::Binop(op, Box::new(x), Box::new(y))
    }

    pub fn ite(c: Expr, t: Expr, e: Expr) -> Expr {
        Expr::Ite(Box::new(c), Box::new(t), Box::new(e))
    }

    pub fn not(x: Expr) -> Expr {
        Expr::unop(Unop::Not, x)
    }

    pub fn extract(x: Expr, hi: u32, lo: u32) -> Expr {
        Expr::unop(Unop::Extract { hi, lo }, x)
    }

    pub fn zext(x: Expr, n: u32) -> Expr {
        Expr::unop(Unop::Zext(n), x)
    }

    pub fn sext(x: Expr, n: u32) -> Expr {
        Expr::unop(Unop::Sext(n), x)
    }

    pub fn concat(hi: Expr, lo: Expr) -> Expr {
        Expr::binop(Binop::Concat, hi, lo)
    }

    pub fn add(x: Expr, y: Expr) -> Expr {
        Expr::binop(Binop::Add, x, y)
    }

    pub fn sub(x: Expr, y: Expr) -> Expr {
        Expr::binop(Binop::Sub, x, y)
    }

    pub fn and(x: Expr, y: Expr) -> Expr {
        Expr::binop(Binop::And, x, y)
    }

    pub fn or(x: Expr, y: Expr) -> Expr {
        Expr::binop(Binop::Or, x, y)
    }

    pub fn xor(x: Expr, y: Expr) -> Expr {
        Expr::binop(Binop::Xor, x, y)
    }

    pub fn eq(x: Expr, y: Expr) -> Expr {
        Expr::binop(Binop::Eq, x, y)
    }

    pub fn bit(x: Expr, i: u32) -> Expr {
        Expr::extract(x, i, i)
    }

    pub fn as_const(&self) -> Option<Bv> {
        match self {
            Expr::Const(c) => Some(*c),
            _ => None,
        }
    }

    pub fn width(&self) -> u32 {
        match self {
            Expr::Const(c) => c.width(),
            Expr::Var(_, w) => *w,
            Expr::Load { bytes, .. } => bytes * 8,
            Expr::Symbol(_) => 32,
            Expr::Unop(op, x) => match op {
                Unop::Not | Unop::Neg => x.width(),
                Unop::Zext(n) | Unop::Sext(n) => *n,
                Unop::Extract { hi, lo } => hi - lo + 1,
            },
            Expr::Binop(op, x, y) => match op {
                Binop::Concat => x.width() + y.width(),
                op if op.is_comparison() => 1,
                _ => x.width(),
            },
            Expr::Ite(_, t, _) => t.width(),
        }
    }

    /// Visit every node, pre-order.
    pub fn visit<'a>(&'a self, f: &mut impl FnMut(&'a Expr)) {
        f(self);
        match self {
            Expr::Const(_) | Expr::Var(..) | Expr::Symbol(_) => {}
            Expr::Load { addr, .. } => addr.visit(f),
            Expr::Unop(_, x) => x.visit(f),
            Expr::Binop(_, x, y) => {
                x.visit(f);
                y.visit(f);
            }
            Expr::Ite(c, t, e) => {
                c.visit(f);
                t.visit(f);
                e.visit(f);
            }
        }
    }

    /// Bottom-up rewrite: `f` sees each node after its children were rewritten.
    pub fn map(self, f: &mut impl FnMut(Expr) -> Expr) -> Expr {
        let e = match self {
            e @ (Expr::Const(_) | Expr::Var(..) | Expr::Symbol(_)) => e,
            Expr::Load { addr, bytes } => Expr::Load {
                addr: Box::new(addr.map(f)),
                bytes,
            },
            Expr::Unop(op, x) => Expr::Unop(op, Box::new(x.map(f))),
            Expr::Binop(op, x, y) => Expr::Binop(op, Box::new(x.map(f)), Box::new(y.map(f))),
            Expr::Ite(c, t, e) => Expr::Ite(Box::new(c.map(f)), Box::new(t.map(f)), Box::new(e.map(f))),
        };
        f(e)
    }

    /// Locations read by this expression (memory reads appear as `Memory`).
    pub fn reads(&self) -> Vec<Location> {
        let mut out = Vec::new();
        self.visit(&mut |e| match e {
            Expr::Var(l, _) => out.push(*l),
            Expr::Load { .. } => out.push(Location::Memory),
            _ => {}
        });
        out.sort();
        out.dedup();
        out
    }

    pub fn has_load(&self) -> bool {
        let mut found = false;
        self.visit(&mut |e| found |= matches!(e, Expr::Load { .. }));
        found
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Const(c) => write!(f, "{c}"),
            Expr::Var(l, _) => write!(f, "{l}"),
            Expr::Load { addr, bytes } => write!(f, "@[{addr}]_{}", bytes * 8),
            Expr::Symbol(i) => write!(f, "sym{i}"),
            Expr::Unop(op, x) => match op {
                Unop::Not => write!(f, "not({x})"),
                Unop::Neg => write!(f, "neg({x})"),
                Unop::Zext(n) => write!(f, "zext{n}({x})"),
                Unop::Sext(n) => write!(f, "sext{n}({x})"),
                Unop::Extract { hi, lo } => write!(f, "{x}{{{hi}..{lo}}}"),
            },
            Expr::Binop(op, x, y) => write!(f, "({x} {} {y})", op.symbol()),
            Expr::Ite(c, t, e) => write!(f, "({c} ? {t} : {e})"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Stmt {
    Assign { dst: Location, value: Expr },
    Store { addr: Expr, bytes: u32, value: Expr },
    Goto(usize),
    Branch { cond: Expr, then: usize, els: usize },
    Halt,
}

impl Stmt {
    pub fn successors(&self, index: usize) -> Vec<usize> {
        match self {
            Stmt::Assign { .. } | Stmt::Store { .. } => alloc::vec![index + 1],
            Stmt::Goto(t) => alloc::vec![*t],
            Stmt::Branch { then, els, .. } => {
                if then == els {
                    alloc::vec![*then]
                } else {
                    alloc::vec![*then, *els]
                }
            }
            Stmt::Halt => Vec::new(),
        }
    }

    pub fn exprs(&self) -> Vec<&Expr> {
        match self {
            Stmt::Assign { value, .. } => alloc::vec![value],
            Stmt::Store { addr, value, .. } => alloc::vec![addr, value],
            Stmt::Branch { cond, .. } => alloc::vec![cond],
            Stmt::Goto(_) | Stmt::Halt => Vec::new(),
        }
    }

    pub fn map_exprs(self, f: &mut impl FnMut(Expr) -> Expr) -> Stmt {
        match self {
            Stmt::Assign { dst, value } => Stmt::Assign {
                dst,
                value: f(value),
            },
            Stmt::Store { addr, bytes, value } => Stmt::Store {
                addr: f(addr),
                bytes,
                value: f(value),
            },
            Stmt::Branch { cond, then, els } => Stmt::Branch {
                cond: f(cond),
                then,
                els,
            },
            s => s,
        }
    }
}

/// A lifted template. Statement indices double as labels; the last
/// statement is always `Halt`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Program {
    pub stmts: Vec<Stmt>,
    /// Template instruction each statement was lifted from (`None` for the final halt).
    pub origin: Vec<Option<u32>>,
    /// Width in bits of every token variable.
    pub token_widths: BTreeMap<TokenId, u32>,
    pub symbols: Vec<String>,
}

impl Program {
    pub fn width_of(&self, loc: Location) -> Option<u32> {
        match loc {
            Location::Reg(r) => Some(r.width()),
            Location::Flag(_) => Some(1),
            Location::Token(t) => self.token_widths.get(&t).copied(),
            Location::TokenAddr(_) => Some(32),
            Location::Memory => Some(1),
            Location::Temp(_) | Location::Slot(_) => {
                let mut w = None;
                for s in &self.stmts {
                    if let Stmt::Assign { dst, value } = s {
                        if *dst == loc {
                            w = Some(value.width());
                        }
                    }
                }
                w
            }
        }
    }

    /// Deterministic textual dump, one statement per line.
    pub fn dump(&self) -> String {
        use core::fmt::Write;
        let mut out = String::new();
        for (i, s) in self.stmts.iter().enumerate() {
            let _ = match s {
                Stmt::Assign { dst, value } => writeln!(out, "{i}: {dst} := {value}"),
                Stmt::Store { addr, bytes, value } => {
                    writeln!(out, "{i}: @[{addr}]_{} := {value}", bytes * 8)
                }
                Stmt::Goto(t) => writeln!(out, "{i}: goto {t}"),
                Stmt::Branch { cond, then, els } => {
                    writeln!(out, "{i}: if {cond} then goto {then} else goto {els}")
                }
                Stmt::Halt => writeln!(out, "{i}: halt"),
            };
        }
        out
    }

    /// Check width discipline and label resolution. Returns the first violation.
    pub fn validate(&self) -> Result<(), String> {
        use alloc::format;
        let n = self.stmts.len();
        if !matches!(self.stmts.last(), Some(Stmt::Halt)) {
            return Err("program does not end with halt".into());
        }
        for (i, s) in self.stmts.iter().enumerate() {
            for e in s.exprs() {
                check_expr(e).map_err(|m| format!("stmt {i}: {m}"))?;
            }
            match s {
                Stmt::Assign { dst, value } => {
                    if *dst == Location::Memory {
                        return Err(format!("stmt {i}: assignment to whole memory"));
                    }
                    if let Some(w) = self.width_of(*dst) {
                        if !matches!(dst, Location::Temp(_) | Location::Slot(_)) && w != value.width() {
                            return Err(format!(
                                "stmt {i}: {dst} has width {w}, value has {}",
                                value.width()
                            ));
                        }
                    } else {
                        return Err(format!("stmt {i}: unknown location {dst}"));
                    }
                }
                Stmt::Store { addr, bytes, value } => {
                    if addr.width() != 32 || value.width() != bytes * 8 {
                        return Err(format!("stmt {i}: ill-widthed store"));
                    }
                }
                Stmt::Goto(t) => {
                    if *t >= n {
                        return Err(format!("stmt {i}: dangling label {t}"));
                    }
                }
                Stmt::Branch { cond, then, els } => {
                    if cond.width() != 1 || *then >= n || *els >= n {
                        return Err(format!("stmt {i}: bad branch"));
                    }
                }
                Stmt::Halt => {}
            }
        }
        Ok(())
    }
}

fn check_expr(e: &Expr) -> Result<(), String> {
    use alloc::format;
    let mut err = None;
    e.visit(&mut |n| {
        if err.is_some() {
            return;
        }
        let bad = match n {
            Expr::Var(_, w) => *w == 0 || *w > bv::MAX_WIDTH,
            Expr::Load { addr, bytes } => addr.width() != 32 || !matches!(bytes, 1 | 2 | 4 | 8 | 16),
            Expr::Unop(op, x) => match op {
                Unop::Zext(k) | Unop::Sext(k) => *k < x.width() || *k > bv::MAX_WIDTH,
                Unop::Extract { hi, lo } => lo > hi || *hi >= x.width(),
                _ => false,
            },
            Expr::Binop(op, x, y) => match op {
                Binop::Concat => x.width() + y.width() > bv::MAX_WIDTH,
                _ => x.width() != y.width(),
            },
            Expr::Ite(c, t, e) => c.width() != 1 || t.width() != e.width(),
            _ => false,
        };
        if bad {
            err = Some(format!("ill-widthed expression {n}"));
        }
    });
    match err {
        Some(m) => Err(m),
        None => Ok(()),
    }
}
