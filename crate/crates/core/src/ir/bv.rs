//! Fixed-width bitvector values (1 to 128 bits) and the concrete semantics
//! of every IR operator. Shared by the interpreter and constant folding.

use core::fmt;

use serde::Serialize;

use super::{Binop, Unop};

pub const MAX_WIDTH: u32 = 128;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct Bv {
    bits: u128,
    width: u32,
}

pub fn mask(width: u32) -> u128 {
    debug_assert!(width <= MAX_WIDTH);
    if width >= 128 {
        u128::MAX
    } else {
        (1u128 << width) - 1
    }
}

impl Bv {
    pub fn new(bits: u128, width: u32) -> Self {
        assert!((1..=MAX_WIDTH).contains(&width), "bitvector width {width}");
        Bv {
            bits: bits & mask(width),
            width,
        }
    }

    pub fn from_i64(v: i64, width: u32) -> Self {
        Bv::new(v as i128 as u128, width)
    }

    pub fn zero(width: u32) -> Self {
        Bv::new(0, width)
    }

    pub fn ones(width: u32) -> Self {
        Bv::new(u128::MAX, width)
    }

    pub fn bool(b: bool) -> Self {
        Bv::new(b as u128, 1)
    }

    pub fn bits(self) -> u128 {
        self.bits
    }

    pub fn width(self) -> u32 {
        self.width
    }

    pub fn is_zero(self) -> bool {
        self.bits == 0
    }

    pub fn is_ones(self) -> bool {
        self.bits == mask(self.width)
    }

    pub fn msb(self) -> bool {
        (self.bits >> (self.width - 1)) & 1 == 1
    }

    /// Two's complement value as a signed integer.
    pub fn signed(self) -> i128 {
        if self.width == 128 {
            self.bits as i128
        } else if self.msb() {
            (self.bits | !mask(self.width)) as i128
        } else {
            self.bits as i128
        }
    }

    pub fn extract(self, hi: u32, lo: u32) -> Bv {
        Bv::new(self.bits >> lo, hi - lo + 1)
    }

    pub fn zext(self, width: u32) -> Bv {
        Bv::new(self.bits, width)
    }

    pub fn sext(self, width: u32) -> Bv {
        Bv::new(self.signed() as u128, width)
    }

    pub fn concat(self, low: Bv) -> Bv {
        let w = self.width + low.width;
        let hi = if low.width >= 128 { 0 } else { self.bits << low.width };
        Bv::new(hi | low.bits, w)
    }

    pub fn unop(op: Unop, x: Bv) -> Bv {
        match op {
            Unop::Not => Bv::new(!x.bits, x.width),
            Unop::Neg => Bv::new(x.bits.wrapping_neg(), x.width),
            Unop::Zext(n) => x.zext(n),
            Unop::Sext(n) => x.sext(n),
            Unop::Extract { hi, lo } => x.extract(hi, lo),
        }
    }

    /// `None` on division by zero.
    pub fn binop(op: Binop, x: Bv, y: Bv) -> Option<Bv> {
        let w = x.width;
        let shift_amount = |y: Bv| -> Option<u32> {
            if y.bits >= w as u128 {
                None
            } else {
                Some(y.bits as u32)
            }
        };
        let r = match op {
            Binop::Add => Bv::new(x.bits.wrapping_add(y.bits), w),
            Binop::Sub => Bv::new(x.bits.wrapping_sub(y.bits), w),
            Binop::Mul => Bv::new(x.bits.wrapping_mul(y.bits), w),
            Binop::Udiv => {
                if y.bits == 0 {
                    return None;
                }
                Bv::new(x.bits / y.bits, w)
            }
            Binop::Urem => {
                if y.bits == 0 {
                    return None;
                }
                Bv::new(x.bits % y.bits, w)
            }
            Binop::Sdiv => {
                if y.bits == 0 {
                    return None;
                }
                Bv::new(x.signed().wrapping_div(y.signed()) as u128, w)
            }
            Binop::Srem => {
                if y.bits == 0 {
                    return None;
                }
                Bv::new(x.signed().wrapping_rem(y.signed()) as u128, w)
            }
            Binop::And => Bv::new(x.bits & y.bits, w),
            Binop::Or => Bv::new(x.bits | y.bits, w),
            Binop::Xor => Bv::new(x.bits ^ y.bits, w),
            Binop::Shl => match shift_amount(y) {
                Some(s) => Bv::new(x.bits << s, w),
                None => Bv::zero(w),
            },
            Binop::Shr => match shift_amount(y) {
                Some(s) => Bv::new(x.bits >> s, w),
                None => Bv::zero(w),
            },
            Binop::Sar => match shift_amount(y) {
                Some(s) => Bv::new((x.signed() >> s) as u128, w),
                None => {
                    if x.msb() {
                        Bv::ones(w)
                    } else {
                        Bv::zero(w)
                    }
                }
            },
            Binop::Eq => Bv::bool(x.bits == y.bits),
            Binop::Ne => Bv::bool(x.bits != y.bits),
            Binop::Ugt => Bv::bool(x.bits > y.bits),
            Binop::Ult => Bv::bool(x.bits < y.bits),
            Binop::Sgt => Bv::bool(x.signed() > y.signed()),
            Binop::Slt => Bv::bool(x.signed() < y.signed()),
            Binop::Concat => x.concat(y),
        };
        Some(r)
    }
}

impl fmt::Display for Bv {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:#x}<{}>", self.bits, self.width)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn signed_views() {
        assert_eq!(Bv::new(0xff, 8).signed(), -1);
        assert_eq!(Bv::new(0x7f, 8).signed(), 127);
        assert_eq!(Bv::new(0x80, 8).sext(32).bits(), 0xffff_ff80);
        assert_eq!(Bv::new(u128::MAX, 128).signed(), -1);
    }

    #[test]
    fn shifts_saturate_past_width() {
        let x = Bv::new(0x8000_0001, 32);
        assert_eq!(Bv::binop(Binop::Shl, x, Bv::new(32, 32)).unwrap().bits(), 0);
        assert_eq!(
            Bv::binop(Binop::Sar, x, Bv::new(40, 32)).unwrap().bits(),
            0xffff_ffff
        );
        assert_eq!(Bv::binop(Binop::Shr, x, Bv::new(31, 32)).unwrap().bits(), 1);
    }

    #[test]
    fn concat_and_extract() {
        let hi = Bv::new(0x1234, 16);
        let lo = Bv::new(0xabcd, 16);
        let c = hi.concat(lo);
        assert_eq!((c.bits(), c.width()), (0x1234_abcd, 32));
        assert_eq!(c.extract(23, 8).bits(), 0x34ab);
        let wide = Bv::new(1, 64).concat(Bv::new(2, 64));
        assert_eq!(wide.width(), 128);
        assert_eq!(wide.bits(), (1u128 << 64) | 2);
    }

    #[test]
    fn division_by_zero_is_none() {
        assert!(Bv::binop(Binop::Udiv, Bv::new(1, 8), Bv::zero(8)).is_none());
        assert_eq!(
            Bv::binop(Binop::Sdiv, Bv::new(0xf9, 8), Bv::new(2, 8)).unwrap().signed(),
            -3
        );
    }
}
