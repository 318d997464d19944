use alloc::boxed::Box;
use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;

use serde::Serialize;

use super::constraint::{parse_constraint, ConstraintSpec, MatchRef, Mode};
use super::letters::OperandClass;
use super::InterfaceError;
use crate::arch::{ClobberName, Reg};
use crate::extraction::ChunkAst;
use crate::ir::TokenId;

/// Operand class of a token in one alternative column.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Column {
    pub class: OperandClass,
    /// Output this token must share its operand with in this column.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tied: Option<TokenId>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct TokenInfo {
    pub id: TokenId,
    pub mode: Mode,
    /// Width written back, for outputs.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output_bits: Option<u32>,
    /// Width of the value provided at entry (declared input, `+`, or unified input).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub input_bits: Option<u32>,
    pub columns: Vec<Column>,
    pub early_clobber: bool,
}

impl TokenInfo {
    pub fn bits(&self) -> u32 {
        self.output_bits.unwrap_or(0).max(self.input_bits.unwrap_or(0))
    }
}

/// `I = (B_O, B_I, S_T, S_C, F)` with `S_T` kept as per-token classes.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct FormalInterface {
    pub b_o: BTreeSet<TokenId>,
    pub b_i: BTreeSet<TokenId>,
    /// Clobbered registers.
    pub s_c: BTreeSet<Reg>,
    /// `"cc"` was listed.
    pub flags_clobbered: bool,
    /// Memory separation: false iff `"memory"` is clobbered.
    pub f: bool,
    pub unmodeled_clobbers: Vec<String>,
    pub tokens: BTreeMap<TokenId, TokenInfo>,
    pub early_clobber: BTreeSet<TokenId>,
    /// Input position folded into an output token.
    pub unified: BTreeMap<u8, TokenId>,
    pub names: BTreeMap<String, u8>,
    pub alternatives: usize,
    /// Input pairs whose operands may be exchanged (`%`).
    pub commutative: Vec<(TokenId, TokenId)>,
    /// Number of interface entries before unification.
    pub entry_count: u8,
    /// Memory tokens naming the object behind a pointer input.
    pub aliases: BTreeMap<TokenId, super::alias::PointerAlias>,
}

impl FormalInterface {
    pub fn token_ids(&self) -> impl Iterator<Item = TokenId> + '_ {
        self.tokens.keys().copied()
    }

    /// Canonical token for an interface position.
    pub fn resolve_position(&self, pos: u8) -> Option<TokenId> {
        if let Some(t) = self.unified.get(&pos) {
            return Some(*t);
        }
        let t = TokenId(pos);
        self.tokens.contains_key(&t).then_some(t)
    }

    pub fn resolve_name(&self, name: &str) -> Option<TokenId> {
        self.names.get(name).and_then(|p| self.resolve_position(*p))
    }

    /// Tokens whose value is provided at entry, with their input width.
    pub fn effective_inputs(&self) -> BTreeMap<TokenId, u32> {
        self.tokens
            .values()
            .filter_map(|t| t.input_bits.map(|w| (t.id, w)))
            .collect()
    }

    pub fn is_effective_input(&self, t: TokenId) -> bool {
        self.tokens.get(&t).is_some_and(|i| i.input_bits.is_some())
    }

    /// Register every alternative forces on this token.
    pub fn fixed_register(&self, t: TokenId) -> Option<Reg> {
        let info = self.tokens.get(&t)?;
        let mut reg = None;
        for c in &info.columns {
            let r = c.class.singleton()?;
            if reg.is_some_and(|p| p != r) {
                return None;
            }
            reg = Some(r);
        }
        reg
    }

    pub fn is_memory_only(&self, t: TokenId) -> bool {
        self.tokens
            .get(&t)
            .is_some_and(|i| i.columns.iter().all(|c| c.class.memory_only()))
    }

    pub fn memory_capable(&self, t: TokenId) -> bool {
        self.tokens
            .get(&t)
            .is_some_and(|i| i.columns.iter().any(|c| c.class.memory))
    }

    pub fn width(&self, t: TokenId) -> u32 {
        self.tokens.get(&t).map(|i| i.bits()).unwrap_or(32)
    }

    /// Per-token class alternatives, one per column.
    pub fn constraints(&self) -> BTreeMap<TokenId, Vec<OperandClass>> {
        self.tokens
            .iter()
            .map(|(t, i)| (*t, i.columns.iter().map(|c| c.class.clone()).collect()))
            .collect()
    }

    /// Tokens whose operand is fixed to one register, with that register.
    pub fn fixed_assignments(&self) -> BTreeMap<TokenId, Reg> {
        self.token_ids()
            .filter_map(|t| self.fixed_register(t).map(|r| (t, r)))
            .collect()
    }
}

fn entry_err(position: u8, e: InterfaceError) -> InterfaceError {
    InterfaceError::Entry {
        position,
        source: Box::new(e),
    }
}

pub fn derive_interface(chunk: &ChunkAst) -> Result<FormalInterface, InterfaceError> {
    let n_out = chunk.outputs.len();
    let entries: Vec<_> = chunk.entries().collect();
    let mut specs: Vec<ConstraintSpec> = Vec::new();
    for (i, e) in entries.iter().enumerate() {
        let spec = parse_constraint(&e.constraint, i < n_out).map_err(|err| entry_err(i as u8, err))?;
        specs.push(spec);
    }
    let alternatives = specs.iter().map(|s| s.alternatives.len()).max().unwrap_or(1);
    for (i, s) in specs.iter().enumerate() {
        let n = s.alternatives.len();
        if n != 1 && n != alternatives {
            return Err(InterfaceError::InconsistentAlternatives {
                position: i as u8,
                found: n,
                expected: alternatives,
            });
        }
    }
    let mut names = BTreeMap::new();
    for e in &entries {
        if let Some(n) = &e.name {
            names.insert(n.clone(), e.position);
        }
    }
    let resolve_match = |pos: u8, m: &MatchRef| -> Result<u8, InterfaceError> {
        let target = match m {
            MatchRef::Index(k) => *k as usize,
            MatchRef::Name(n) => names.get(n).map(|p| *p as usize).unwrap_or(usize::MAX),
        };
        if target >= n_out {
            let shown = match m {
                MatchRef::Index(k) => alloc::format!("{k}"),
                MatchRef::Name(n) => alloc::format!("[{n}]"),
            };
            return Err(InterfaceError::BadMatch {
                position: pos,
                target: shown,
            });
        }
        Ok(target as u8)
    };

    // per entry, per column: class and explicit match target
    let mut raw_cols: Vec<Vec<(OperandClass, Option<u8>)>> = Vec::new();
    for (i, s) in specs.iter().enumerate() {
        let mut cols = Vec::new();
        for k in 0..alternatives {
            let (class, m) = s.alternative_class(k);
            let m = m.map(|m| resolve_match(i as u8, m)).transpose()?;
            cols.push((class, m));
        }
        raw_cols.push(cols);
    }
    let col_class = |i: usize, k: usize| -> OperandClass {
        let (class, m) = &raw_cols[i][k];
        match m {
            Some(o) => raw_cols[*o as usize][k].0.clone(),
            None => class.clone(),
        }
    };
    let all_singleton = |i: usize| -> Option<Reg> {
        let mut reg = None;
        for k in 0..alternatives {
            let r = col_class(i, k).singleton()?;
            if reg.is_some_and(|p| p != r) {
                return None;
            }
            reg = Some(r);
        }
        reg
    };

    let mut unified = BTreeMap::new();
    for i in n_out..entries.len() {
        let matches: BTreeSet<Option<u8>> = raw_cols[i].iter().map(|(_, m)| *m).collect();
        if matches.len() == 1 {
            if let Some(Some(o)) = matches.into_iter().next() {
                unified.insert(i as u8, TokenId(o));
                continue;
            }
        }
        if let Some(r) = all_singleton(i) {
            if let Some(o) = (0..n_out).find(|o| all_singleton(*o) == Some(r)) {
                unified.insert(i as u8, TokenId(o as u8));
            }
        }
    }

    let mut tokens = BTreeMap::new();
    let mut b_o = BTreeSet::new();
    let mut b_i = BTreeSet::new();
    let mut early_clobber = BTreeSet::new();
    for (i, e) in entries.iter().enumerate() {
        if unified.contains_key(&(i as u8)) {
            continue;
        }
        let id = TokenId(i as u8);
        let s = &specs[i];
        let bits = e.size_bytes as u32 * 8;
        let columns = (0..alternatives)
            .map(|k| Column {
                class: col_class(i, k),
                tied: raw_cols[i][k].1.map(TokenId),
            })
            .collect();
        let (output_bits, input_bits) = match s.mode {
            Mode::Input => (None, Some(bits)),
            Mode::OutputWriteonly => (Some(bits), None),
            Mode::OutputReadwrite => (Some(bits), Some(bits)),
        };
        if s.mode.is_output() {
            b_o.insert(id);
        }
        if s.mode != Mode::OutputWriteonly {
            b_i.insert(id);
        }
        if s.early_clobber && s.mode.is_output() {
            early_clobber.insert(id);
        }
        tokens.insert(
            id,
            TokenInfo {
                id,
                mode: s.mode,
                output_bits,
                input_bits,
                columns,
                early_clobber: s.early_clobber && s.mode.is_output(),
            },
        );
    }
    for (pos, target) in &unified {
        let bits = entries[*pos as usize].size_bytes as u32 * 8;
        let info = tokens.get_mut(target).expect("unified into an output");
        info.input_bits = Some(info.input_bits.unwrap_or(0).max(bits));
    }

    let mut commutative = Vec::new();
    for (i, s) in specs.iter().enumerate() {
        if s.commutative && i + 1 < entries.len() {
            let a = TokenId(i as u8);
            let b = TokenId(i as u8 + 1);
            if tokens.contains_key(&a) && tokens.contains_key(&b) {
                commutative.push((a, b));
            }
        }
    }

    let mut fi = FormalInterface {
        b_o,
        b_i,
        s_c: BTreeSet::new(),
        flags_clobbered: false,
        f: true,
        unmodeled_clobbers: Vec::new(),
        tokens,
        early_clobber,
        unified,
        names,
        alternatives,
        commutative,
        entry_count: entries.len() as u8,
        aliases: BTreeMap::new(),
    };
    for c in &chunk.clobbers {
        match ClobberName::parse(c) {
            Some(ClobberName::Reg(r)) => {
                fi.s_c.insert(r);
            }
            Some(ClobberName::Flags) => fi.flags_clobbered = true,
            Some(ClobberName::Memory) => fi.f = false,
            Some(ClobberName::Unmodeled(s)) => fi.unmodeled_clobbers.push(s),
            None => return Err(InterfaceError::UnknownClobber(c.clone())),
        }
    }
    for t in fi.token_ids().collect::<Vec<_>>() {
        if let Some(r) = fi.fixed_register(t) {
            if fi.s_c.contains(&r) {
                return Err(InterfaceError::ClobberOverlap { reg: r, token: t });
            }
        }
    }
    fi.aliases = super::alias::pointer_aliases(chunk, &fi);
    Ok(fi)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn read_write_entry_is_in_both_sets() {
        let c = ChunkAst::new("incl %0").output("+r", "x", 4);
        let fi = derive_interface(&c).unwrap();
        assert_eq!(fi.b_o, [TokenId(0)].into());
        assert_eq!(fi.b_i, [TokenId(0)].into());
        assert!(fi.f);
    }

    #[test]
    fn clobber_mapping() {
        let c = ChunkAst::new("").clobber("cc").clobber("memory");
        let fi = derive_interface(&c).unwrap();
        assert!(fi.flags_clobbered && !fi.f);
        assert!(fi.b_o.is_empty() && fi.b_i.is_empty() && fi.s_c.is_empty());
    }

    #[test]
    fn explicit_match_unifies() {
        let c = ChunkAst::new("").output("=r", "x", 4).input("0", "y", 4);
        let fi = derive_interface(&c).unwrap();
        assert_eq!(fi.unified.get(&1), Some(&TokenId(0)));
        assert_eq!(fi.effective_inputs().get(&TokenId(0)), Some(&32));
        assert_eq!(fi.resolve_position(1), Some(TokenId(0)));
    }

    #[test]
    fn partial_match_stays_a_token() {
        let c = ChunkAst::new("").output("=r,m", "x", 4).input("0,r", "y", 4);
        let fi = derive_interface(&c).unwrap();
        assert!(fi.unified.is_empty());
        assert_eq!(fi.tokens[&TokenId(1)].columns[0].tied, Some(TokenId(0)));
        assert_eq!(fi.tokens[&TokenId(1)].columns[1].tied, None);
    }

    #[test]
    fn overlap_and_bad_match() {
        let c = ChunkAst::new("").output("=a", "x", 4).clobber("eax");
        assert_eq!(
            derive_interface(&c),
            Err(InterfaceError::ClobberOverlap {
                reg: Reg::Eax,
                token: TokenId(0)
            })
        );
        let c = ChunkAst::new("").input("r", "x", 4).input("0", "y", 4);
        assert!(matches!(derive_interface(&c), Err(InterfaceError::BadMatch { .. })));
        let c = ChunkAst::new("").output("=r,r", "x", 4).input("r,r,r", "y", 4);
        assert!(matches!(
            derive_interface(&c),
            Err(InterfaceError::InconsistentAlternatives { .. })
        ));
    }
}
