//! i386 register file: general-purpose registers, status flags and the
//! MMX/XMM names that only matter for clobber bookkeeping.

use core::fmt;
use core::str::FromStr;

use serde::Serialize;

/// An architectural register. General-purpose registers are 32 bits wide,
/// MMX registers 64 and XMM registers 128.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(into = "alloc::string::String")]
pub enum Reg {
    Eax,
    Ecx,
    Edx,
    Ebx,
    Esp,
    Ebp,
    Esi,
    Edi,
    Mm(u8),
    Xmm(u8),
}

impl Reg {
    /// The eight general-purpose registers in encoding order.
    pub const GPR: [Reg; 8] = [
        Reg::Eax,
        Reg::Ecx,
        Reg::Edx,
        Reg::Ebx,
        Reg::Esp,
        Reg::Ebp,
        Reg::Esi,
        Reg::Edi,
    ];

    pub fn width(self) -> u32 {
        match self {
            Reg::Mm(_) => 64,
            Reg::Xmm(_) => 128,
            _ => 32,
        }
    }

    pub fn is_gpr(self) -> bool {
        !matches!(self, Reg::Mm(_) | Reg::Xmm(_))
    }

    pub fn gpr_index(self) -> Option<usize> {
        Reg::GPR.iter().position(|r| *r == self)
    }

    pub fn name(self) -> alloc::string::String {
        use alloc::format;
        use alloc::string::ToString;
        match self {
            Reg::Eax => "eax".to_string(),
            Reg::Ecx => "ecx".to_string(),
            Reg::Edx => "edx".to_string(),
            Reg::Ebx => "ebx".to_string(),
            Reg::Esp => "esp".to_string(),
            Reg::Ebp => "ebp".to_string(),
            Reg::Esi => "esi".to_string(),
            Reg::Edi => "edi".to_string(),
            Reg::Mm(i) => format!("mm{i}"),
            Reg::Xmm(i) => format!("xmm{i}"),
        }
    }
}

impl From<Reg> for alloc::string::String {
    fn from(r: Reg) -> Self {
        r.name()
    }
}

impl fmt::Display for Reg {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

/// A view on (part of) a register as written in assembly: `%al` is bits
/// 7..0 of eax, `%ah` bits 15..8.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct RegView {
    pub reg: Reg,
    pub lo: u32,
    pub width: u32,
}

impl RegView {
    pub fn full(reg: Reg) -> Self {
        RegView {
            reg,
            lo: 0,
            width: reg.width(),
        }
    }
}

impl FromStr for RegView {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, ()> {
        let s = s.trim().trim_start_matches('%').to_ascii_lowercase();
        let v = |reg, lo, width| Ok(RegView { reg, lo, width });
        match s.as_str() {
            "eax" => v(Reg::Eax, 0, 32),
            "ecx" => v(Reg::Ecx, 0, 32),
            "edx" => v(Reg::Edx, 0, 32),
            "ebx" => v(Reg::Ebx, 0, 32),
            "esp" => v(Reg::Esp, 0, 32),
            "ebp" => v(Reg::Ebp, 0, 32),
            "esi" => v(Reg::Esi, 0, 32),
            "edi" => v(Reg::Edi, 0, 32),
            "ax" => v(Reg::Eax, 0, 16),
            "cx" => v(Reg::Ecx, 0, 16),
            "dx" => v(Reg::Edx, 0, 16),
            "bx" => v(Reg::Ebx, 0, 16),
            "sp" => v(Reg::Esp, 0, 16),
            "bp" => v(Reg::Ebp, 0, 16),
            "si" => v(Reg::Esi, 0, 16),
            "di" => v(Reg::Edi, 0, 16),
            "al" => v(Reg::Eax, 0, 8),
            "cl" => v(Reg::Ecx, 0, 8),
            "dl" => v(Reg::Edx, 0, 8),
            "bl" => v(Reg::Ebx, 0, 8),
            "ah" => v(Reg::Eax, 8, 8),
            "ch" => v(Reg::Ecx, 8, 8),
            "dh" => v(Reg::Edx, 8, 8),
            "bh" => v(Reg::Ebx, 8, 8),
            _ => {
                if let Some(n) = s.strip_prefix("xmm") {
                    let i: u8 = n.parse().map_err(|_| ())?;
                    if i < 8 {
                        return v(Reg::Xmm(i), 0, 128);
                    }
                } else if let Some(n) = s.strip_prefix("mm") {
                    let i: u8 = n.parse().map_err(|_| ())?;
                    if i < 8 {
                        return v(Reg::Mm(i), 0, 64);
                    }
                }
                Err(())
            }
        }
    }
}

/// The six arithmetic status flags.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Flag {
    Z,
    C,
    S,
    O,
    P,
    A,
}

impl Flag {
    pub const ALL: [Flag; 6] = [Flag::Z, Flag::C, Flag::S, Flag::O, Flag::P, Flag::A];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Flag::Z => "z",
            Flag::C => "c",
            Flag::S => "s",
            Flag::O => "o",
            Flag::P => "p",
            Flag::A => "a",
        }
    }
}

impl fmt::Display for Flag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A clobber-list entry once normalized.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ClobberName {
    Reg(Reg),
    /// `"cc"`
    Flags,
    /// `"memory"`
    Memory,
    /// Accepted register names without modeled semantics (x87 stack, dirflag, ...).
    Unmodeled(alloc::string::String),
}

impl ClobberName {
    pub fn parse(s: &str) -> Option<ClobberName> {
        let t = s.trim().trim_start_matches('%').to_ascii_lowercase();
        match t.as_str() {
            "cc" => return Some(ClobberName::Flags),
            "memory" => return Some(ClobberName::Memory),
            "st" | "fpsr" | "fpcr" | "dirflag" | "flags" => {
                return Some(ClobberName::Unmodeled(t));
            }
            _ => {}
        }
        if let Some(rest) = t.strip_prefix("st(") {
            if rest.len() == 2 && rest.ends_with(')') && matches!(rest.as_bytes()[0], b'0'..=b'7')
            {
                return Some(ClobberName::Unmodeled(t));
            }
        }
        t.parse::<RegView>().ok().map(|v| ClobberName::Reg(v.reg))
    }
}

impl fmt::Display for ClobberName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ClobberName::Reg(r) => write!(f, "{r}"),
            ClobberName::Flags => f.write_str("cc"),
            ClobberName::Memory => f.write_str("memory"),
            ClobberName::Unmodeled(s) => f.write_str(s),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sub_register_views() {
        let ah: RegView = "%ah".parse().unwrap();
        assert_eq!((ah.reg, ah.lo, ah.width), (Reg::Eax, 8, 8));
        let di: RegView = "di".parse().unwrap();
        assert_eq!((di.reg, di.width), (Reg::Edi, 16));
        assert_eq!("xmm7".parse::<RegView>().unwrap().reg, Reg::Xmm(7));
        assert!("xmm8".parse::<RegView>().is_err());
        assert!("r8".parse::<RegView>().is_err());
    }

    #[test]
    fn clobber_names() {
        assert_eq!(ClobberName::parse("cc"), Some(ClobberName::Flags));
        assert_eq!(ClobberName::parse("%ebx"), Some(ClobberName::Reg(Reg::Ebx)));
        assert_eq!(ClobberName::parse("bx"), Some(ClobberName::Reg(Reg::Ebx)));
        assert_eq!(ClobberName::parse("mm3"), Some(ClobberName::Reg(Reg::Mm(3))));
        assert!(matches!(ClobberName::parse("st(1)"), Some(ClobberName::Unmodeled(_))));
        assert_eq!(ClobberName::parse("bogus"), None);
    }
}
