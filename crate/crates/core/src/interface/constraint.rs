use alloc::string::String;
use alloc::vec::Vec;

use serde::Serialize;

use super::letters::{eval_letter, OperandClass};
use super::InterfaceError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Input,
    OutputWriteonly,
    OutputReadwrite,
}

impl Mode {
    pub fn is_output(self) -> bool {
        self != Mode::Input
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize)]
pub enum MatchRef {
    Index(u8),
    Name(String),
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize)]
pub enum Atom {
    Letter(char),
    Match(MatchRef),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ConstraintSpec {
    pub mode: Mode,
    pub early_clobber: bool,
    pub commutative: bool,
    pub alternatives: Vec<Vec<Atom>>,
}

impl ConstraintSpec {
    /// Union of the letter classes of one alternative, and its match target if any.
    pub fn alternative_class(&self, i: usize) -> (OperandClass, Option<&MatchRef>) {
        let alt = &self.alternatives[i.min(self.alternatives.len() - 1)];
        let mut class = OperandClass::default();
        let mut m = None;
        for a in alt {
            match a {
                Atom::Letter(c) => class = class.union(&eval_letter(*c).expect("validated letter")),
                Atom::Match(r) => m = Some(r),
            }
        }
        (class, m)
    }
}

pub fn parse_constraint(s: &str, is_output: bool) -> Result<ConstraintSpec, InterfaceError> {
    if s.trim().is_empty() {
        return Err(InterfaceError::EmptyConstraint);
    }
    let mut mode = Mode::Input;
    let mut early_clobber = false;
    let mut commutative = false;
    let mut alternatives = Vec::new();
    for alt_text in s.split(',') {
        let mut alt = Vec::new();
        let mut chars = alt_text.chars().peekable();
        while let Some(c) = chars.next() {
            match c {
                '=' => mode = Mode::OutputWriteonly,
                '+' => mode = Mode::OutputReadwrite,
                '&' => early_clobber = true,
                '%' => commutative = true,
                c if c.is_whitespace() => {}
                '0'..='9' => {
                    let mut n = c.to_digit(10).unwrap();
                    while let Some(d) = chars.peek().and_then(|d| d.to_digit(10)) {
                        n = n * 10 + d;
                        chars.next();
                    }
                    let n = u8::try_from(n).map_err(|_| InterfaceError::UnknownLetter(c))?;
                    alt.push(Atom::Match(MatchRef::Index(n)));
                }
                '[' => {
                    let mut name = String::new();
                    for n in chars.by_ref() {
                        if n == ']' {
                            break;
                        }
                        name.push(n);
                    }
                    alt.push(Atom::Match(MatchRef::Name(name)));
                }
                c => {
                    eval_letter(c)?;
                    alt.push(Atom::Letter(c));
                }
            }
        }
        alternatives.push(alt);
    }
    if is_output && mode == Mode::Input {
        return Err(InterfaceError::ModeMissing(s.into()));
    }
    if !is_output && mode != Mode::Input {
        return Err(InterfaceError::ModeOnInput(s.into()));
    }
    let has_match = alternatives
        .iter()
        .flatten()
        .any(|a| matches!(a, Atom::Match(_)));
    if is_output && has_match {
        return Err(InterfaceError::MatchOnOutput(s.into()));
    }
    if alternatives.iter().any(|a| a.is_empty()) {
        return Err(InterfaceError::EmptyConstraint);
    }
    Ok(ConstraintSpec {
        mode,
        early_clobber,
        commutative,
        alternatives,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn output_fixed_register() {
        let c = parse_constraint("=a", true).unwrap();
        assert_eq!(c.mode, Mode::OutputWriteonly);
        assert_eq!(c.alternatives, [[Atom::Letter('a')]]);
    }

    #[test]
    fn alternatives_split() {
        let c = parse_constraint("rm,r", false).unwrap();
        assert_eq!(
            c.alternatives,
            [
                alloc::vec![Atom::Letter('r'), Atom::Letter('m')],
                alloc::vec![Atom::Letter('r')]
            ]
        );
    }

    #[test]
    fn modifiers_are_stripped() {
        let c = parse_constraint("=&q", true).unwrap();
        assert!(c.early_clobber && !c.commutative);
        assert_eq!(c.alternatives, [[Atom::Letter('q')]]);
        let c = parse_constraint("%0", false).unwrap();
        assert!(c.commutative);
        assert_eq!(c.alternatives, [[Atom::Match(MatchRef::Index(0))]]);
    }

    #[test]
    fn errors() {
        assert_eq!(parse_constraint("r", true), Err(InterfaceError::ModeMissing("r".into())));
        assert_eq!(parse_constraint("=x", true), Err(InterfaceError::UnknownLetter('x')));
        assert!(matches!(parse_constraint("=0", true), Err(InterfaceError::MatchOnOutput(_))));
        assert!(matches!(parse_constraint("+r", false), Err(InterfaceError::ModeOnInput(_))));
        assert_eq!(parse_constraint("", false), Err(InterfaceError::EmptyConstraint));
    }
}
