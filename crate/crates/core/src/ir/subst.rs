//! `P⟨T⟩`: replace token variables by the operands of a concrete assignment.

use alloc::vec::Vec;

use super::{Binop, Bv, Expr, Location, Program, Stmt, TokenId};
use crate::interface::{Address, Operand, TokenAssignment};

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum SubstError {
    #[error("token {0} has no operand in the assignment")]
    MissingToken(TokenId),
    #[error("token {0} is written but bound to an immediate")]
    ImmediateWrite(TokenId),
    #[error("address of token {0} taken but it is not bound to memory")]
    NotMemory(TokenId),
}

pub fn address_expr(a: &Address) -> Expr {
    let mut e: Option<Expr> = a.base.map(Expr::reg);
    if let Some((r, k)) = a.index {
        let i = if k == 1 {
            Expr::reg(r)
        } else {
            Expr::binop(Binop::Mul, Expr::reg(r), Expr::konst(k as u128, 32))
        };
        e = Some(match e {
            Some(b) => Expr::add(b, i),
            None => i,
        });
    }
    match e {
        Some(b) if a.disp == 0 => b,
        Some(b) => Expr::add(b, Expr::konst(a.disp as u32 as u128, 32)),
        None => Expr::konst(a.disp as u32 as u128, 32),
    }
}

fn fit(e: Expr, w: u32) -> Expr {
    let ew = e.width();
    if ew == w {
        e
    } else if ew > w {
        Expr::extract(e, w - 1, 0)
    } else {
        Expr::zext(e, w)
    }
}

fn operand<'a>(t: &'a TokenAssignment, id: TokenId) -> Result<&'a Operand, SubstError> {
    t.get(&id).ok_or(SubstError::MissingToken(id))
}

fn expr(e: Expr, t: &TokenAssignment, strict: bool) -> Result<Expr, SubstError> {
    let mut err = None;
    let out = e.map(&mut |n| match n {
        Expr::Var(Location::Token(id) | Location::TokenAddr(id), _) if !strict && !t.contains_key(&id) => n,
        Expr::Var(Location::Token(id), w) => match operand(t, id) {
            Ok(Operand::Reg(r)) => fit(Expr::reg(*r), w),
            Ok(Operand::Imm(v)) => Expr::Const(Bv::from_i64(*v, w)),
            Ok(Operand::Mem(a)) => Expr::load(address_expr(a), w / 8),
            Err(e) => {
                err.get_or_insert(e);
                n
            }
        },
        Expr::Var(Location::TokenAddr(id), _) => match operand(t, id) {
            Ok(Operand::Mem(a)) => address_expr(a),
            Ok(_) => {
                err.get_or_insert(SubstError::NotMemory(id));
                n
            }
            Err(e) => {
                err.get_or_insert(e);
                n
            }
        },
        n => n,
    });
    match err {
        Some(e) => Err(e),
        None => Ok(out),
    }
}

/// Instantiate `p` under `t`. The result mentions no token location.
pub fn substitute(p: &Program, t: &TokenAssignment) -> Result<Program, SubstError> {
    substitute_with(p, t, true)
}

/// Substitute only the tokens `t` covers; other tokens stay symbolic.
pub fn substitute_partial(p: &Program, t: &TokenAssignment) -> Result<Program, SubstError> {
    let mut q = substitute_with(p, t, false)?;
    q.token_widths = p
        .token_widths
        .iter()
        .filter(|(id, _)| !t.contains_key(id))
        .map(|(id, w)| (*id, *w))
        .collect();
    Ok(q)
}

fn substitute_with(p: &Program, t: &TokenAssignment, strict: bool) -> Result<Program, SubstError> {
    let mut stmts = Vec::with_capacity(p.stmts.len());
    for s in &p.stmts {
        let s = match s.clone() {
            Stmt::Assign {
                dst: Location::Token(id),
                value,
            } if strict || t.contains_key(&id) => {
                let value = expr(value, t, strict)?;
                let w = value.width();
                match operand(t, id)? {
                    Operand::Reg(r) => {
                        let full = r.width();
                        let value = if w < full {
                            Expr::concat(Expr::extract(Expr::reg(*r), full - 1, w), value)
                        } else {
                            fit(value, full)
                        };
                        Stmt::Assign {
                            dst: Location::Reg(*r),
                            value,
                        }
                    }
                    Operand::Mem(a) => Stmt::Store {
                        addr: address_expr(a),
                        bytes: w / 8,
                        value,
                    },
                    Operand::Imm(_) => return Err(SubstError::ImmediateWrite(id)),
                }
            }
            other => {
                let mut err = None;
                let s = other.map_exprs(&mut |e| match expr(e.clone(), t, strict) {
                    Ok(x) => x,
                    Err(x) => {
                        err.get_or_insert(x);
                        e
                    }
                });
                if let Some(e) = err {
                    return Err(e);
                }
                s
            }
        };
        stmts.push(s);
    }
    Ok(Program {
        stmts,
        origin: p.origin.clone(),
        token_widths: Default::default(),
        symbols: p.symbols.clone(),
    })
}

/// Whether a program mentions any token location.
pub fn has_tokens(p: &Program) -> bool {
    p.stmts.iter().any(|s| {
        matches!(s, Stmt::Assign { dst, .. } if dst.token().is_some())
            || s.exprs().iter().any(|e| e.reads().iter().any(|l| l.token().is_some()))
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arch::Reg;

    fn prog(stmts: Vec<Stmt>) -> Program {
        let n = stmts.len();
        Program {
            stmts,
            origin: alloc::vec![None; n],
            token_widths: [(TokenId(0), 32)].into(),
            symbols: Vec::new(),
        }
    }

    #[test]
    fn register_substitution() {
        let t0 = Expr::var(Location::Token(TokenId(0)), 32);
        let p = prog(alloc::vec![
            Stmt::Assign {
                dst: Location::Token(TokenId(0)),
                value: Expr::add(t0, Expr::konst(1, 32)),
            },
            Stmt::Halt,
        ]);
        let t: TokenAssignment = [(TokenId(0), Operand::Reg(Reg::Ecx))].into();
        let q = substitute(&p, &t).unwrap();
        assert_eq!(
            q.stmts[0],
            Stmt::Assign {
                dst: Location::Reg(Reg::Ecx),
                value: Expr::add(Expr::reg(Reg::Ecx), Expr::konst(1, 32)),
            }
        );
        assert!(!has_tokens(&q));
    }

    #[test]
    fn address_substitution() {
        let p = prog(alloc::vec![
            Stmt::Assign {
                dst: Location::Reg(Reg::Eax),
                value: Expr::load(Expr::var(Location::TokenAddr(TokenId(0)), 32), 4),
            },
            Stmt::Halt,
        ]);
        let t: TokenAssignment = [(TokenId(0), Operand::Mem(Address::base(Reg::Esi)))].into();
        let q = substitute(&p, &t).unwrap();
        let Stmt::Assign { value, .. } = &q.stmts[0] else { panic!() };
        assert_eq!(*value, Expr::load(Expr::reg(Reg::Esi), 4));
    }

    #[test]
    fn missing_token() {
        let p = prog(alloc::vec![
            Stmt::Assign {
                dst: Location::Reg(Reg::Eax),
                value: Expr::var(Location::Token(TokenId(1)), 32),
            },
            Stmt::Halt,
        ]);
        let t: TokenAssignment = [(TokenId(0), Operand::Reg(Reg::Ecx))].into();
        assert_eq!(substitute(&p, &t), Err(SubstError::MissingToken(TokenId(1))));
    }

    #[test]
    fn identity_on_token_free_programs() {
        let p = prog(alloc::vec![
            Stmt::Assign {
                dst: Location::Reg(Reg::Eax),
                value: Expr::reg(Reg::Ebx),
            },
            Stmt::Halt,
        ]);
        let q = substitute(&p, &TokenAssignment::new()).unwrap();
        assert_eq!(q.stmts, p.stmts);
    }
}
