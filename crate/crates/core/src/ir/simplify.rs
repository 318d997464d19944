//! Syntactic simplification to a fixpoint of a small rewrite system:
//! constant folding, neutral elements, `x ^ x = 0`, `x - x = 0`,
//! additive constant reassociation, extract/concat fusion, double
//! negation and constant-condition `ite`.

use alloc::boxed::Box;

use super::{Binop, Bv, Expr, Unop};

pub fn simplify(e: Expr) -> Expr {
    let mut cur = e;
    loop {
        let next = cur.clone().map(&mut rewrite);
        if next == cur {
            return next;
        }
        cur = next;
    }
}

fn konst(b: Bv) -> Expr {
    Expr::Const(b)
}

fn rewrite(e: Expr) -> Expr {
    match e {
        Expr::Unop(op, x) => rewrite_unop(op, *x),
        Expr::Binop(op, x, y) => rewrite_binop(op, *x, *y),
        Expr::Ite(c, t, f) => {
            if let Some(cv) = c.as_const() {
                return if cv.is_zero() { *f } else { *t };
            }
            if t == f {
                return *t;
            }
            Expr::Ite(c, t, f)
        }
        e => e,
    }
}

fn rewrite_unop(op: Unop, x: Expr) -> Expr {
    if let Some(c) = x.as_const() {
        return konst(Bv::unop(op, c));
    }
    let w = x.width();
    match (op, x) {
        (Unop::Not, Expr::Unop(Unop::Not, inner)) => *inner,
        (Unop::Neg, Expr::Unop(Unop::Neg, inner)) => *inner,
        (Unop::Zext(n) | Unop::Sext(n), x) if n == w => x,
        (Unop::Zext(n), Expr::Unop(Unop::Zext(_), inner)) => Expr::zext(*inner, n),
        (Unop::Extract { hi, lo }, x) if lo == 0 && hi + 1 == w => x,
        (Unop::Extract { hi, lo }, Expr::Unop(Unop::Extract { lo: lo2, .. }, inner)) => {
            Expr::extract(*inner, hi + lo2, lo + lo2)
        }
        (Unop::Extract { hi, lo }, Expr::Binop(Binop::Concat, h, l)) => {
            let lw = l.width();
            if hi < lw {
                Expr::extract(*l, hi, lo)
            } else if lo >= lw {
                Expr::extract(*h, hi - lw, lo - lw)
            } else {
                Expr::Unop(
                    Unop::Extract { hi, lo },
                    Box::new(Expr::Binop(Binop::Concat, h, l)),
                )
            }
        }
        (Unop::Extract { hi, lo }, Expr::Unop(Unop::Zext(n), inner)) => {
            let iw = inner.width();
            if hi < iw {
                Expr::extract(*inner, hi, lo)
            } else if lo >= iw {
                Expr::konst(0, hi - lo + 1)
            } else {
                Expr::Unop(Unop::Extract { hi, lo }, Box::new(Expr::Unop(Unop::Zext(n), inner)))
            }
        }
        (Unop::Extract { hi, lo }, Expr::Unop(Unop::Sext(n), inner)) if hi < inner.width() => {
            let _ = n;
            Expr::extract(*inner, hi, lo)
        }
        (op, x) => Expr::Unop(op, Box::new(x)),
    }
}

fn is_zero(e: &Expr) -> bool {
    e.as_const().is_some_and(|c| c.is_zero())
}

fn is_ones(e: &Expr) -> bool {
    e.as_const().is_some_and(|c| c.is_ones())
}

fn rewrite_binop(op: Binop, x: Expr, y: Expr) -> Expr {
    if let (Some(a), Some(b)) = (x.as_const(), y.as_const()) {
        if let Some(r) = Bv::binop(op, a, b) {
            return konst(r);
        }
    }
    let w = x.width();
    // constants to the right of commutative operators
    if op.is_commutative() && x.as_const().is_some() && y.as_const().is_none() {
        return rewrite_binop(op, y, x);
    }
    match op {
        Binop::Add => {
            if is_zero(&y) {
                return x;
            }
            if let (Expr::Binop(Binop::Add, ref a, ref c1), Some(c2)) = (&x, y.as_const()) {
                if let Some(c1) = c1.as_const() {
                    let sum = Bv::binop(Binop::Add, c1, c2).unwrap();
                    return rewrite_binop(Binop::Add, (**a).clone(), konst(sum));
                }
            }
        }
        Binop::Sub => {
            if is_zero(&y) {
                return x;
            }
            if x == y {
                return Expr::konst(0, w);
            }
            if let Some(c) = y.as_const() {
                let neg = Bv::unop(Unop::Neg, c);
                return rewrite_binop(Binop::Add, x, konst(neg));
            }
            // (a + b) - b = a
            if let Expr::Binop(Binop::Add, ref a, ref b) = x {
                if **b == y {
                    return (**a).clone();
                }
                if **a == y {
                    return (**b).clone();
                }
            }
        }
        Binop::Xor => {
            if is_zero(&y) {
                return x;
            }
            if x == y {
                return Expr::konst(0, w);
            }
            if let Expr::Binop(Binop::Xor, ref a, ref b) = x {
                if **b == y {
                    return (**a).clone();
                }
                if **a == y {
                    return (**b).clone();
                }
            }
        }
        Binop::And => {
            if is_ones(&y) || x == y {
                return x;
            }
            if is_zero(&y) {
                return Expr::konst(0, w);
            }
        }
        Binop::Or => {
            if is_zero(&y) || x == y {
                return x;
            }
            if is_ones(&y) {
                return y;
            }
        }
        Binop::Shl | Binop::Shr | Binop::Sar => {
            if is_zero(&y) {
                return x;
            }
        }
        Binop::Eq => {
            if x == y {
                return Expr::konst(1, 1);
            }
        }
        Binop::Ne => {
            if x == y {
                return Expr::konst(0, 1);
            }
        }
        Binop::Concat => {
            // x{hi..m} :: x{m-1..lo}  =>  x{hi..lo}
            if let (
                Expr::Unop(Unop::Extract { hi: h1, lo: l1 }, ref a),
                Expr::Unop(Unop::Extract { hi: h2, lo: l2 }, ref b),
            ) = (&x, &y)
            {
                if a == b && *l1 == h2 + 1 {
                    return rewrite_unop(Unop::Extract { hi: *h1, lo: *l2 }, (**a).clone());
                }
            }
        }
        _ => {}
    }
    Expr::Binop(op, Box::new(x), Box::new(y))
}
