//! Systems, their function-symbol sets and translations, the monoidal
//! constructions `⊔` and `◇`, and the finite classical representation.
//!
//! An arrow `j : S1 → S` carries a translation `L{j} : F(S) → F(S1)` and, for
//! classical systems, a state map `σ(j) : states(S1) → states(S)`.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{ComplexMatrix, HermitianOperator, LinalgError, MAX_DIM};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Kind {
    Quantum,
    Classical,
    Formal,
    Empty,
}

impl fmt::Display for Kind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Kind::Quantum => "quantum",
            Kind::Classical => "classical",
            Kind::Formal => "formal",
            Kind::Empty => "empty",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SystemError {
    #[error("cannot combine a {left} system with a {right} system")]
    KindMismatch { left: Kind, right: Kind },
    #[error("cannot compose: expected language of {expected}, found {found}")]
    CompositionMismatch { expected: String, found: String },
    #[error("duplicate symbol {0}")]
    DuplicateSymbol(String),
    #[error("symbol {name}: {reason}")]
    InvalidSymbol { name: String, reason: String },
    #[error("invalid system: {0}")]
    InvalidSystem(String),
    #[error("dimension {0} exceeds the supported maximum of {MAX_DIM}")]
    TooLarge(usize),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// A function symbol. Constructed symbols are normalised so that the trivial
/// quantity is always [`Symbol::Trivial`]: `⟨I,I⟩ = I◇1 = 1◇I = I`.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Symbol {
    Trivial,
    Atom(String),
    Pair(Box<Symbol>, Box<Symbol>),
    Left(Box<Symbol>),
    Right(Box<Symbol>),
}

impl Symbol {
    pub fn atom(name: impl Into<String>) -> Self {
        Symbol::Atom(name.into())
    }

    pub fn pair(a: &Symbol, b: &Symbol) -> Self {
        if a.is_trivial() && b.is_trivial() {
            Symbol::Trivial
        } else {
            Symbol::Pair(Box::new(a.clone()), Box::new(b.clone()))
        }
    }

    /// `a◇1`.
    pub fn left(a: &Symbol) -> Self {
        if a.is_trivial() {
            Symbol::Trivial
        } else {
            Symbol::Left(Box::new(a.clone()))
        }
    }

    /// `1◇b`.
    pub fn right(b: &Symbol) -> Self {
        if b.is_trivial() {
            Symbol::Trivial
        } else {
            Symbol::Right(Box::new(b.clone()))
        }
    }

    pub fn is_trivial(&self) -> bool {
        matches!(self, Symbol::Trivial)
    }

    fn fmt_operand(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Symbol::Left(_) | Symbol::Right(_) => write!(f, "({self})"),
            _ => write!(f, "{self}"),
        }
    }
}

impl fmt::Display for Symbol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Symbol::Trivial => f.write_str("I"),
            Symbol::Atom(s) => f.write_str(s),
            Symbol::Pair(a, b) => write!(f, "⟨{a},{b}⟩"),
            Symbol::Left(a) => {
                a.fmt_operand(f)?;
                f.write_str("◇1")
            }
            Symbol::Right(b) => {
                f.write_str("1◇")?;
                b.fmt_operand(f)
            }
        }
    }
}

impl Serialize for Symbol {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

/// Type symbols of every language; translations fix them.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GroundSymbol {
    Sigma,
    R,
    One,
    Omega,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Representation {
    Quantum {
        dim: usize,
        operators: BTreeMap<Symbol, HermitianOperator>,
    },
    Classical {
        states: Vec<String>,
        functions: BTreeMap<Symbol, Vec<f64>>,
    },
    Formal,
    /// The empty system `0`: no states, every symbol represented by the
    /// unique function on the empty set.
    Empty,
}

#[derive(Clone, Debug, PartialEq)]
pub struct System {
    name: String,
    symbols: BTreeSet<Symbol>,
    rep: Representation,
}

fn check_atom(name: &str, seen: &mut BTreeSet<String>) -> Result<(), SystemError> {
    if name.is_empty() || name == "I" {
        return Err(SystemError::InvalidSymbol {
            name: name.to_string(),
            reason: "reserved or empty name".into(),
        });
    }
    if !seen.insert(name.to_string()) {
        return Err(SystemError::DuplicateSymbol(name.to_string()));
    }
    Ok(())
}

impl System {
    /// A quantum system on `C^dim`; `I` is added as the identity.
    pub fn quantum(
        name: impl Into<String>,
        dim: usize,
        symbols: impl IntoIterator<Item = (String, HermitianOperator)>,
    ) -> Result<Self, SystemError> {
        if dim == 0 {
            return Err(SystemError::InvalidSystem("quantum dimension must be at least 1".into()));
        }
        if dim > MAX_DIM {
            return Err(SystemError::TooLarge(dim));
        }
        let mut seen = BTreeSet::new();
        let mut operators = BTreeMap::from([(Symbol::Trivial, HermitianOperator::identity(dim))]);
        for (n, a) in symbols {
            check_atom(&n, &mut seen)?;
            if a.dim() != dim {
                return Err(SystemError::InvalidSymbol {
                    name: n,
                    reason: format!("operator on C^{} in a system on C^{dim}", a.dim()),
                });
            }
            operators.insert(Symbol::Atom(n), a);
        }
        Ok(Self {
            name: name.into(),
            symbols: operators.keys().cloned().collect(),
            rep: Representation::Quantum { dim, operators },
        })
    }

    /// A classical system on a nonempty finite state set; `I` is the constant 1.
    pub fn classical(
        name: impl Into<String>,
        states: Vec<String>,
        symbols: impl IntoIterator<Item = (String, Vec<f64>)>,
    ) -> Result<Self, SystemError> {
        if states.is_empty() {
            return Err(SystemError::InvalidSystem("classical state set is empty; use System::empty".into()));
        }
        let distinct: BTreeSet<&String> = states.iter().collect();
        if distinct.len() != states.len() {
            return Err(SystemError::InvalidSystem("state names are not distinct".into()));
        }
        let mut seen = BTreeSet::new();
        let mut functions = BTreeMap::from([(Symbol::Trivial, vec![1.0; states.len()])]);
        for (n, f) in symbols {
            check_atom(&n, &mut seen)?;
            if f.len() != states.len() || f.iter().any(|x| !x.is_finite()) {
                return Err(SystemError::InvalidSymbol {
                    name: n,
                    reason: format!("needs {} finite values", states.len()),
                });
            }
            functions.insert(Symbol::Atom(n), f);
        }
        Ok(Self {
            name: name.into(),
            symbols: functions.keys().cloned().collect(),
            rep: Representation::Classical { states, functions },
        })
    }

    /// A system with a language but no representation.
    pub fn formal(name: impl Into<String>, symbols: impl IntoIterator<Item = String>) -> Result<Self, SystemError> {
        let mut seen = BTreeSet::new();
        let mut set = BTreeSet::from([Symbol::Trivial]);
        for n in symbols {
            check_atom(&n, &mut seen)?;
            set.insert(Symbol::Atom(n));
        }
        Ok(Self {
            name: name.into(),
            symbols: set,
            rep: Representation::Formal,
        })
    }

    /// The empty system `0` with `F(0) = {I}`.
    pub fn empty() -> Self {
        Self {
            name: "0".into(),
            symbols: BTreeSet::from([Symbol::Trivial]),
            rep: Representation::Empty,
        }
    }

    /// The trivial system `1` of the given kind.
    pub fn unit(kind: Kind) -> Self {
        match kind {
            Kind::Quantum => Self::quantum("1", 1, []).expect("C^1 is valid"),
            Kind::Classical => Self::classical("1", vec!["*".into()], []).expect("one point is valid"),
            Kind::Formal => Self::formal("1", []).expect("no symbols is valid"),
            Kind::Empty => Self::empty(),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub fn kind(&self) -> Kind {
        match self.rep {
            Representation::Quantum { .. } => Kind::Quantum,
            Representation::Classical { .. } => Kind::Classical,
            Representation::Formal => Kind::Formal,
            Representation::Empty => Kind::Empty,
        }
    }

    pub fn representation(&self) -> &Representation {
        &self.rep
    }

    pub fn symbols(&self) -> &BTreeSet<Symbol> {
        &self.symbols
    }

    pub fn has_symbol(&self, s: &Symbol) -> bool {
        self.symbols.contains(s)
    }

    /// Looks a symbol up by its printed form.
    pub fn find_symbol(&self, printed: &str) -> Option<&Symbol> {
        self.symbols.iter().find(|s| s.to_string() == printed)
    }

    /// Hilbert-space dimension (0 for the empty system).
    pub fn dim(&self) -> Option<usize> {
        match &self.rep {
            Representation::Quantum { dim, .. } => Some(*dim),
            Representation::Empty => Some(0),
            _ => None,
        }
    }

    /// Classical states (none for the empty system).
    pub fn states(&self) -> Option<&[String]> {
        match &self.rep {
            Representation::Classical { states, .. } => Some(states),
            Representation::Empty => Some(&[]),
            _ => None,
        }
    }

    pub fn num_states(&self) -> usize {
        self.states().map_or(0, <[String]>::len)
    }

    pub fn operator(&self, s: &Symbol) -> Option<&HermitianOperator> {
        match &self.rep {
            Representation::Quantum { operators, .. } => operators.get(s),
            _ => None,
        }
    }

    /// The classical function of `s`; empty for every symbol of `0`.
    pub fn function(&self, s: &Symbol) -> Option<&[f64]> {
        match &self.rep {
            Representation::Classical { functions, .. } => functions.get(s).map(Vec::as_slice),
            Representation::Empty => self.symbols.contains(s).then_some(&[][..]),
            _ => None,
        }
    }

    /// Operators of every non-trivial symbol, in symbol order.
    pub fn generators(&self) -> Vec<(Symbol, HermitianOperator)> {
        match &self.rep {
            Representation::Quantum { operators, .. } => operators
                .iter()
                .filter(|(s, _)| !s.is_trivial())
                .map(|(s, a)| (s.clone(), a.clone()))
                .collect(),
            _ => Vec::new(),
        }
    }
}

/// A translation `L(S) → L(S1)` on function symbols. Ground type symbols
/// are fixed.
#[derive(Clone, Debug, PartialEq)]
pub struct Translation {
    from: String,
    to: String,
    map: BTreeMap<Symbol, Symbol>,
}

impl Translation {
    pub fn from_language(&self) -> &str {
        &self.from
    }

    pub fn to_language(&self) -> &str {
        &self.to
    }

    pub fn map(&self) -> &BTreeMap<Symbol, Symbol> {
        &self.map
    }

    pub fn apply(&self, s: &Symbol) -> Option<&Symbol> {
        self.map.get(s)
    }

    pub fn ground(&self, g: GroundSymbol) -> GroundSymbol {
        g
    }

    /// `self` then `next`: `L(A) → L(B) → L(C)`.
    pub fn then(&self, next: &Translation) -> Result<Translation, SystemError> {
        if self.to != next.from {
            return Err(SystemError::CompositionMismatch {
                expected: self.to.clone(),
                found: next.from.clone(),
            });
        }
        let map = self
            .map
            .iter()
            .map(|(a, b)| {
                let c = next.map.get(b).ok_or_else(|| SystemError::InvalidSymbol {
                    name: b.to_string(),
                    reason: format!("not in the language of {}", next.from),
                })?;
                Ok((a.clone(), c.clone()))
            })
            .collect::<Result<_, SystemError>>()?;
        Ok(Translation {
            from: self.from.clone(),
            to: next.to.clone(),
            map,
        })
    }

    pub fn is_injective(&self) -> bool {
        let image: BTreeSet<&Symbol> = self.map.values().collect();
        image.len() == self.map.len()
    }

    pub fn is_surjective_onto(&self, codomain: &BTreeSet<Symbol>) -> bool {
        let image: BTreeSet<&Symbol> = self.map.values().collect();
        codomain.iter().all(|s| image.contains(s))
    }
}

pub fn identity_translation(s: &System) -> Translation {
    Translation {
        from: s.name.clone(),
        to: s.name.clone(),
        map: s.symbols.iter().map(|x| (x.clone(), x.clone())).collect(),
    }
}

pub fn compose_translations(first: &Translation, second: &Translation) -> Result<Translation, SystemError> {
    first.then(second)
}

/// An arrow `source → target` of the generated subcategory of systems.
#[derive(Clone, Debug)]
pub struct Arrow {
    name: String,
    source: Arc<System>,
    target: Arc<System>,
    translation: Translation,
    state_map: Option<Vec<usize>>,
}

impl Arrow {
    fn new(name: String, source: Arc<System>, target: Arc<System>, map: BTreeMap<Symbol, Symbol>, state_map: Option<Vec<usize>>) -> Self {
        let translation = Translation {
            from: target.name.clone(),
            to: source.name.clone(),
            map,
        };
        Self {
            name,
            source,
            target,
            translation,
            state_map,
        }
    }

    pub fn identity(s: &Arc<System>) -> Self {
        let state_map = s.states().map(|st| (0..st.len()).collect());
        Self {
            name: format!("id_{}", s.name),
            source: s.clone(),
            target: s.clone(),
            translation: identity_translation(s),
            state_map,
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn source(&self) -> &Arc<System> {
        &self.source
    }

    pub fn target(&self) -> &Arc<System> {
        &self.target
    }

    pub fn translation(&self) -> &Translation {
        &self.translation
    }

    /// `σ(j) : states(source) → states(target)`, for classical arrows.
    pub fn state_map(&self) -> Option<&[usize]> {
        self.state_map.as_deref()
    }

    /// `next ∘ self`; translations compose contravariantly and state maps
    /// covariantly.
    pub fn then(&self, next: &Arrow) -> Result<Arrow, SystemError> {
        if self.target.name != next.source.name || self.target.symbols != next.source.symbols {
            return Err(SystemError::CompositionMismatch {
                expected: self.target.name.clone(),
                found: next.source.name.clone(),
            });
        }
        let translation = next.translation.then(&self.translation)?;
        let state_map = match (&self.state_map, &next.state_map) {
            (Some(a), Some(b)) => Some(a.iter().map(|&s| b[s]).collect()),
            _ => None,
        };
        Ok(Arrow {
            name: format!("{}∘{}", next.name, self.name),
            source: self.source.clone(),
            target: next.target.clone(),
            translation,
            state_map,
        })
    }

    /// Totality on `F(target)`, values in `F(source)`, `I ↦ I`, and a
    /// well-typed state map.
    pub fn check(&self) -> Vec<String> {
        let mut out = Vec::new();
        let keys: BTreeSet<Symbol> = self.translation.map.keys().cloned().collect();
        if keys != self.target.symbols {
            out.push(format!("{}: translation is not defined on exactly F({})", self.name, self.target.name));
        }
        if let Some(s) = self.translation.map.values().find(|s| !self.source.symbols.contains(s)) {
            out.push(format!("{}: image {s} is not in F({})", self.name, self.source.name));
        }
        if self.translation.map.get(&Symbol::Trivial) != Some(&Symbol::Trivial) {
            out.push(format!("{}: I is not sent to I", self.name));
        }
        for g in [GroundSymbol::Sigma, GroundSymbol::R, GroundSymbol::One, GroundSymbol::Omega] {
            if self.translation.ground(g) != g {
                out.push(format!("{}: ground symbol {g:?} moved", self.name));
            }
        }
        if let Some(m) = &self.state_map {
            if m.len() != self.source.num_states() || m.iter().any(|&t| t >= self.target.num_states()) {
                out.push(format!("{}: malformed state map", self.name));
            }
        }
        out
    }
}

/// A construction result: the new system and its two structure arrows.
#[derive(Clone, Debug)]
pub struct Construction {
    pub system: Arc<System>,
    pub first: Arrow,
    pub second: Arrow,
}

fn combined_kind(a: &System, b: &System) -> Result<Kind, SystemError> {
    match (a.kind(), b.kind()) {
        (Kind::Empty, k) | (k, Kind::Empty) => Ok(k),
        (x, y) if x == y => Ok(x),
        (x, y) => Err(SystemError::KindMismatch { left: x, right: y }),
    }
}

fn disjoint_state_names(a: &[String], b: &[String]) -> Vec<String> {
    let clash = a.iter().any(|s| b.contains(s));
    if clash {
        a.iter()
            .map(|s| format!("1.{s}"))
            .chain(b.iter().map(|s| format!("2.{s}")))
            .collect()
    } else {
        a.iter().chain(b).cloned().collect()
    }
}

/// `S1 ⊔ S2` with `i1 : S1 → S1⊔S2` and `i2 : S2 → S1⊔S2`.
pub fn disjoint_sum(s1: &Arc<System>, s2: &Arc<System>) -> Result<Construction, SystemError> {
    let kind = combined_kind(s1, s2)?;
    let name = format!("({}⊔{})", s1.name, s2.name);
    let mut symbols = BTreeSet::new();
    let mut l1 = BTreeMap::new();
    let mut l2 = BTreeMap::new();
    for a in &s1.symbols {
        for b in &s2.symbols {
            let p = Symbol::pair(a, b);
            l1.insert(p.clone(), a.clone());
            l2.insert(p.clone(), b.clone());
            symbols.insert(p);
        }
    }
    let rep = match (kind, &s1.rep, &s2.rep) {
        (Kind::Empty, _, _) => Representation::Empty,
        (Kind::Formal, _, _) => Representation::Formal,
        (Kind::Quantum, _, _) => {
            let (n1, n2) = (s1.dim().unwrap_or(0), s2.dim().unwrap_or(0));
            if n1 + n2 > MAX_DIM {
                return Err(SystemError::TooLarge(n1 + n2));
            }
            let mut operators = BTreeMap::new();
            for (p, a) in &l1 {
                let b = &l2[p];
                let op = match (s1.operator(a), s2.operator(b)) {
                    (Some(x), Some(y)) => x.direct_sum(y),
                    (Some(x), None) => x.clone(),
                    (None, Some(y)) => y.clone(),
                    (None, None) => unreachable!("one side is quantum"),
                };
                operators.insert(p.clone(), op);
            }
            Representation::Quantum { dim: n1 + n2, operators }
        }
        (Kind::Classical, _, _) => {
            let states = disjoint_state_names(s1.states().unwrap_or(&[]), s2.states().unwrap_or(&[]));
            let functions = l1
                .iter()
                .map(|(p, a)| {
                    let f = s1.function(a).unwrap_or(&[]);
                    let g = s2.function(&l2[p]).unwrap_or(&[]);
                    (p.clone(), f.iter().chain(g).copied().collect())
                })
                .collect();
            Representation::Classical { states, functions }
        }
    };
    let system = Arc::new(System { name, symbols, rep });
    let (m1, m2) = (s1.num_states(), s2.num_states());
    let classical = kind == Kind::Classical || kind == Kind::Empty;
    let sig1 = classical.then(|| (0..m1).collect());
    let sig2 = classical.then(|| (m1..m1 + m2).collect());
    Ok(Construction {
        first: Arrow::new(format!("i1[{}]", system.name), s1.clone(), system.clone(), l1, sig1),
        second: Arrow::new(format!("i2[{}]", system.name), s2.clone(), system.clone(), l2, sig2),
        system,
    })
}

/// Data for a symbol of a composite beyond the injected `A1◇1` and `1◇A2`.
#[derive(Clone, Debug)]
pub enum ExtraSymbol {
    Operator(String, HermitianOperator),
    Values(String, Vec<f64>),
    Formal(String),
}

/// `S1 ◇ S2` with `p1 : S1◇S2 → S1` and `p2 : S1◇S2 → S2`.
pub fn composite(s1: &Arc<System>, s2: &Arc<System>, extra: Vec<ExtraSymbol>) -> Result<Construction, SystemError> {
    let kind = match (s1.kind(), s2.kind()) {
        (Kind::Empty, _) | (_, Kind::Empty) => {
            combined_kind(s1, s2)?;
            Kind::Empty
        }
        _ => combined_kind(s1, s2)?,
    };
    let name = format!("({}◇{})", s1.name, s2.name);
    let l1: BTreeMap<Symbol, Symbol> = s1.symbols.iter().map(|a| (a.clone(), Symbol::left(a))).collect();
    let l2: BTreeMap<Symbol, Symbol> = s2.symbols.iter().map(|b| (b.clone(), Symbol::right(b))).collect();
    let mut symbols: BTreeSet<Symbol> = l1.values().chain(l2.values()).cloned().collect();
    let mut seen = BTreeSet::new();
    for e in &extra {
        let n = match e {
            ExtraSymbol::Operator(n, _) | ExtraSymbol::Values(n, _) | ExtraSymbol::Formal(n) => n,
        };
        check_atom(n, &mut seen)?;
        symbols.insert(Symbol::atom(n.clone()));
    }
    let (m1, m2) = (s1.num_states(), s2.num_states());
    let rep = match kind {
        Kind::Empty => Representation::Empty,
        Kind::Formal => Representation::Formal,
        Kind::Quantum => {
            let (n1, n2) = (s1.dim().unwrap_or(0), s2.dim().unwrap_or(0));
            let n = n1 * n2;
            if n > MAX_DIM {
                return Err(SystemError::TooLarge(n));
            }
            let mut operators = BTreeMap::new();
            for (a, la) in &l1 {
                operators.insert(la.clone(), s1.operator(a).expect("quantum").kron(&HermitianOperator::identity(n2)));
            }
            for (b, rb) in &l2 {
                operators.insert(rb.clone(), HermitianOperator::identity(n1).kron(s2.operator(b).expect("quantum")));
            }
            for e in extra {
                match e {
                    ExtraSymbol::Operator(name, a) if a.dim() == n => {
                        operators.insert(Symbol::Atom(name), a);
                    }
                    ExtraSymbol::Operator(name, _) | ExtraSymbol::Values(name, _) | ExtraSymbol::Formal(name) => {
                        return Err(SystemError::InvalidSymbol {
                            name,
                            reason: format!("needs an operator on C^{n}"),
                        })
                    }
                }
            }
            Representation::Quantum { dim: n, operators }
        }
        Kind::Classical => {
            let (st1, st2) = (s1.states().unwrap_or(&[]), s2.states().unwrap_or(&[]));
            let states = st1
                .iter()
                .flat_map(|a| st2.iter().map(move |b| format!("({a},{b})")))
                .collect();
            let mut functions = BTreeMap::new();
            for (a, la) in &l1 {
                let f = s1.function(a).expect("classical");
                functions.insert(la.clone(), (0..m1 * m2).map(|k| f[k / m2]).collect());
            }
            for (b, rb) in &l2 {
                let g = s2.function(b).expect("classical");
                functions.insert(rb.clone(), (0..m1 * m2).map(|k| g[k % m2]).collect());
            }
            for e in extra {
                match e {
                    ExtraSymbol::Values(name, v) if v.len() == m1 * m2 && v.iter().all(|x| x.is_finite()) => {
                        functions.insert(Symbol::Atom(name), v);
                    }
                    ExtraSymbol::Operator(name, _) | ExtraSymbol::Values(name, _) | ExtraSymbol::Formal(name) => {
                        return Err(SystemError::InvalidSymbol {
                            name,
                            reason: format!("needs {} finite values", m1 * m2),
                        })
                    }
                }
            }
            Representation::Classical { states, functions }
        }
    };
    let system = Arc::new(System { name, symbols, rep });
    let classical = kind == Kind::Classical || kind == Kind::Empty;
    let sig1 = classical.then(|| (0..m1 * m2).map(|k| k / m2).collect());
    let sig2 = classical.then(|| (0..m1 * m2).map(|k| k % m2).collect());
    Ok(Construction {
        first: Arrow::new(format!("p1[{}]", system.name), system.clone(), s1.clone(), l1, sig1),
        second: Arrow::new(format!("p2[{}]", system.name), system.clone(), s2.clone(), l2, sig2),
        system,
    })
}

/// `j ⊔ id_S : S1⊔S → S2⊔S` for `j : S1 → S2`.
pub fn sum_functorial_arrow(j: &Arrow, s: &Arc<System>) -> Result<Arrow, SystemError> {
    let left = disjoint_sum(&j.source, s)?.system;
    let right = disjoint_sum(&j.target, s)?.system;
    let mut map = BTreeMap::new();
    for a2 in &j.target.symbols {
        let a1 = &j.translation.map[a2];
        for b in &s.symbols {
            map.insert(Symbol::pair(a2, b), Symbol::pair(a1, b));
        }
    }
    let state_map = match (&j.state_map, s.states()) {
        (Some(sig), Some(st)) => {
            let m2 = j.target.num_states();
            Some(sig.iter().copied().chain((0..st.len()).map(|t| m2 + t)).collect())
        }
        _ => None,
    };
    Ok(Arrow::new(format!("({}⊔id_{})", j.name, s.name), left, right, map, state_map))
}

/// `f ∘ σ(j)`.
pub fn classical_pullback_quantity(f: &[f64], j: &Arrow) -> Option<Vec<f64>> {
    let sigma = j.state_map.as_ref()?;
    Some(sigma.iter().map(|&t| f[t]).collect())
}

/// `σ(j)^{-1}(K)`.
pub fn classical_pullback_proposition(k: &BTreeSet<usize>, j: &Arrow) -> Option<BTreeSet<usize>> {
    let sigma = j.state_map.as_ref()?;
    Some((0..sigma.len()).filter(|&s| k.contains(&sigma[s])).collect())
}

/// `rep(A) ∘ σ(j) = rep(L{j}(A))` for every `A ∈ F(target)`, compared with
/// exact equality.
pub fn check_classical_square(j: &Arrow) -> Vec<String> {
    let mut out = Vec::new();
    for (a, b) in &j.translation.map {
        let (Some(f), Some(g)) = (j.target.function(a), j.source.function(b)) else {
            out.push(format!("{}: {a} or {b} has no classical representation", j.name));
            continue;
        };
        match classical_pullback_quantity(f, j) {
            Some(pulled) if pulled.as_slice() == g => {}
            Some(_) => out.push(format!("{}: square fails at {a}", j.name)),
            None => out.push(format!("{}: no state map", j.name)),
        }
    }
    out
}

/// A candidate isomorphism between two systems: a symbol map plus a
/// representation map (unitary intertwiner or state bijection).
struct Iso {
    symbols: Vec<(Symbol, Symbol)>,
    unitary: Option<ComplexMatrix>,
    states: Option<Vec<usize>>,
    /// The symbol map need only be injective (composites have no
    /// prescribed language).
    injective_only: bool,
}

fn permutation_matrix(perm: &[usize]) -> ComplexMatrix {
    let n = perm.len();
    let mut entries = vec![0.0; n * n];
    for (i, &p) in perm.iter().enumerate() {
        entries[p * n + i] = 1.0;
    }
    ComplexMatrix::from_real(n, &entries)
}

fn verify_iso(left: &System, right: &System, iso: &Iso) -> Result<(), String> {
    let mut forward: BTreeMap<&Symbol, &Symbol> = BTreeMap::new();
    for (a, b) in &iso.symbols {
        if !left.symbols.contains(a) || !right.symbols.contains(b) {
            return Err(format!("{a} ↦ {b} leaves the languages"));
        }
        if let Some(prev) = forward.insert(a, b) {
            if prev != b {
                return Err(format!("{a} sent to both {prev} and {b}"));
            }
        }
    }
    if forward.len() != left.symbols.len() {
        return Err("symbol map is not total".into());
    }
    let image: BTreeSet<&Symbol> = forward.values().copied().collect();
    if image.len() != forward.len() {
        return Err("symbol map is not injective".into());
    }
    if !iso.injective_only && image.len() != right.symbols.len() {
        return Err("symbol map is not surjective".into());
    }
    match (&left.rep, &right.rep) {
        (Representation::Quantum { dim: n, .. }, Representation::Quantum { dim: m, .. }) => {
            if n != m {
                return Err(format!("dimensions {n} and {m} differ"));
            }
            let u = iso.unitary.clone().unwrap_or_else(|| ComplexMatrix::identity(*n));
            let unitary_defect = (&(&u * &u.adjoint()) - &ComplexMatrix::identity(*n)).max_abs();
            if unitary_defect > 1e-12 {
                return Err("intertwiner is not unitary".into());
            }
            for (a, b) in &forward {
                let moved = left.operator(a).expect("quantum").matrix().conjugate_by(&u);
                let d = moved.distance(right.operator(b).expect("quantum").matrix());
                if d > 1e-12 {
                    return Err(format!("U {a} U† differs from {b} by {d:e}"));
                }
            }
        }
        (Representation::Classical { states: s, .. }, Representation::Classical { states: t, .. }) => {
            if s.len() != t.len() {
                return Err(format!("state counts {} and {} differ", s.len(), t.len()));
            }
            let perm = iso.states.clone().unwrap_or_else(|| (0..s.len()).collect());
            let hit: BTreeSet<usize> = perm.iter().copied().collect();
            if perm.len() != s.len() || hit.len() != s.len() || hit.iter().any(|&x| x >= t.len()) {
                return Err("state map is not a bijection".into());
            }
            for (a, b) in &forward {
                let f = left.function(a).expect("classical");
                let g = right.function(b).expect("classical");
                if (0..s.len()).any(|i| f[i] != g[perm[i]]) {
                    return Err(format!("{a} and {b} differ under the state bijection"));
                }
            }
        }
        (Representation::Formal, Representation::Formal) | (Representation::Empty, Representation::Empty) => {}
        _ => return Err("representations of different kinds".into()),
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AxiomCheck {
    pub law: String,
    pub systems: String,
    pub ok: bool,
    pub detail: String,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct SysAxiomReport {
    pub checks: Vec<AxiomCheck>,
    pub skipped: Vec<String>,
}

impl SysAxiomReport {
    pub fn is_ok(&self) -> bool {
        self.checks.iter().all(|c| c.ok)
    }

    pub fn failures(&self) -> Vec<&AxiomCheck> {
        self.checks.iter().filter(|c| !c.ok).collect()
    }

    fn record(&mut self, law: &str, systems: String, result: Result<(), String>) {
        let (ok, detail) = match result {
            Ok(()) => (true, String::new()),
            Err(e) => (false, e),
        };
        self.checks.push(AxiomCheck {
            law: law.into(),
            systems,
            ok,
            detail,
        });
    }

    fn attempt(&mut self, law: &str, systems: String, f: impl FnOnce() -> Result<Result<(), String>, SystemError>) {
        match f() {
            Ok(r) => self.record(law, systems, r),
            Err(SystemError::TooLarge(n)) => self.skipped.push(format!("{law} on {systems}: dimension {n}")),
            Err(e) => self.record(law, systems, Err(e.to_string())),
        }
    }
}

fn sum(a: &Arc<System>, b: &Arc<System>) -> Result<Arc<System>, SystemError> {
    Ok(disjoint_sum(a, b)?.system)
}

fn prod(a: &Arc<System>, b: &Arc<System>) -> Result<Arc<System>, SystemError> {
    Ok(composite(a, b, Vec::new())?.system)
}

/// Block swap `H1⊕H2 → H2⊕H1` as an index permutation.
fn block_swap(n1: usize, n2: usize) -> Vec<usize> {
    (0..n1 + n2).map(|i| if i < n1 { n2 + i } else { i - n1 }).collect()
}

/// Tensor swap `H1⊗H2 → H2⊗H1`.
fn tensor_swap(n1: usize, n2: usize) -> Vec<usize> {
    (0..n1 * n2).map(|k| (k % n2) * n1 + k / n2).collect()
}

/// `H⊗(H1⊕H2) → (H⊗H1)⊕(H⊗H2)`.
fn left_distributor(n: usize, n1: usize, n2: usize) -> Vec<usize> {
    let w = n1 + n2;
    (0..n * w)
        .map(|k| {
            let (a, i) = (k / w, k % w);
            if i < n1 {
                a * n1 + i
            } else {
                n * n1 + a * n2 + (i - n1)
            }
        })
        .collect()
}

fn size_of(s: &System) -> usize {
    s.dim().unwrap_or_else(|| s.num_states())
}

fn rep_maps(perm: Vec<usize>, kind: Kind) -> (Option<ComplexMatrix>, Option<Vec<usize>>) {
    match kind {
        Kind::Quantum => (Some(permutation_matrix(&perm)), None),
        Kind::Classical => (None, Some(perm)),
        _ => (None, None),
    }
}

/// Unit, associativity, commutativity and distributivity isomorphisms for
/// `⊔` and `◇` over all ordered pairs and triples drawn from `bases`
/// (which must share a kind). Combinations beyond the dimension limit are
/// listed as skipped.
pub fn check_sys_axioms(bases: &[Arc<System>]) -> SysAxiomReport {
    let mut r = SysAxiomReport::default();
    let Some(kind) = bases.first().map(|s| s.kind()) else {
        return r;
    };
    let unit = Arc::new(System::unit(kind));
    let zero = Arc::new(System::empty());

    r.attempt("1◇1 ≅ 1", "1".into(), || {
        let uu = prod(&unit, &unit)?;
        let iso = Iso {
            symbols: vec![(Symbol::Trivial, Symbol::Trivial)],
            unitary: None,
            states: None,
            injective_only: false,
        };
        Ok(verify_iso(&uu, &unit, &iso))
    });

    for s in bases {
        let tag = s.name.clone();
        r.attempt("S◇1 ≅ S", tag.clone(), || {
            let left = prod(s, &unit)?;
            let symbols = s.symbols.iter().map(|a| (Symbol::left(a), a.clone())).collect();
            Ok(verify_iso(&left, s, &Iso { symbols, unitary: None, states: None, injective_only: false }))
        });
        r.attempt("1◇S ≅ S", tag.clone(), || {
            let left = prod(&unit, s)?;
            let symbols = s.symbols.iter().map(|a| (Symbol::right(a), a.clone())).collect();
            Ok(verify_iso(&left, s, &Iso { symbols, unitary: None, states: None, injective_only: false }))
        });
        r.attempt("S⊔0 ≅ S", tag.clone(), || {
            let left = sum(s, &zero)?;
            let symbols = s.symbols.iter().map(|a| (Symbol::pair(a, &Symbol::Trivial), a.clone())).collect();
            Ok(verify_iso(&left, s, &Iso { symbols, unitary: None, states: None, injective_only: false }))
        });
        r.attempt("0⊔S ≅ S", tag.clone(), || {
            let left = sum(&zero, s)?;
            let symbols = s.symbols.iter().map(|a| (Symbol::pair(&Symbol::Trivial, a), a.clone())).collect();
            Ok(verify_iso(&left, s, &Iso { symbols, unitary: None, states: None, injective_only: false }))
        });
        r.attempt("S◇0 ≅ 0", tag.clone(), || {
            let left = prod(s, &zero)?;
            // every symbol of S◇0 is the unique function on the empty state set
            let collapsed = left.kind() == Kind::Empty && size_of(&left) == 0;
            Ok(if collapsed { Ok(()) } else { Err(format!("S◇0 has kind {} and size {}", left.kind(), size_of(&left))) })
        });
    }

    for a in bases {
        for b in bases {
            let tag = format!("{},{}", a.name, b.name);
            r.attempt("S1⊔S2 ≅ S2⊔S1", tag.clone(), || {
                let (l, rt) = (sum(a, b)?, sum(b, a)?);
                let symbols = a
                    .symbols
                    .iter()
                    .flat_map(|x| b.symbols.iter().map(move |y| (Symbol::pair(x, y), Symbol::pair(y, x))))
                    .collect();
                let (unitary, states) = rep_maps(block_swap(size_of(a), size_of(b)), kind);
                Ok(verify_iso(&l, &rt, &Iso { symbols, unitary, states, injective_only: false }))
            });
            r.attempt("S1◇S2 ≅ S2◇S1", tag.clone(), || {
                let (l, rt) = (prod(a, b)?, prod(b, a)?);
                let symbols = a
                    .symbols
                    .iter()
                    .map(|x| (Symbol::left(x), Symbol::right(x)))
                    .chain(b.symbols.iter().map(|y| (Symbol::right(y), Symbol::left(y))))
                    .collect();
                let (unitary, states) = rep_maps(tensor_swap(size_of(a), size_of(b)), kind);
                Ok(verify_iso(&l, &rt, &Iso { symbols, unitary, states, injective_only: false }))
            });
        }
    }

    for a in bases {
        for b in bases {
            for c in bases {
                let tag = format!("{},{},{}", a.name, b.name, c.name);
                r.attempt("(S1⊔S2)⊔S3 ≅ S1⊔(S2⊔S3)", tag.clone(), || {
                    let l = sum(&sum(a, b)?, c)?;
                    let rt = sum(a, &sum(b, c)?)?;
                    let mut symbols = Vec::new();
                    for x in &a.symbols {
                        for y in &b.symbols {
                            for z in &c.symbols {
                                symbols.push((
                                    Symbol::pair(&Symbol::pair(x, y), z),
                                    Symbol::pair(x, &Symbol::pair(y, z)),
                                ));
                            }
                        }
                    }
                    Ok(verify_iso(&l, &rt, &Iso { symbols, unitary: None, states: None, injective_only: false }))
                });
                r.attempt("(S1◇S2)◇S3 ≅ S1◇(S2◇S3)", tag.clone(), || {
                    let l = prod(&prod(a, b)?, c)?;
                    let rt = prod(a, &prod(b, c)?)?;
                    let symbols = a
                        .symbols
                        .iter()
                        .map(|x| (Symbol::left(&Symbol::left(x)), Symbol::left(x)))
                        .chain(b.symbols.iter().map(|y| (Symbol::left(&Symbol::right(y)), Symbol::right(&Symbol::left(y)))))
                        .chain(c.symbols.iter().map(|z| (Symbol::right(z), Symbol::right(&Symbol::right(z)))))
                        .collect();
                    Ok(verify_iso(&l, &rt, &Iso { symbols, unitary: None, states: None, injective_only: false }))
                });
                r.attempt("(S1⊔S2)◇S ≅ (S1◇S)⊔(S2◇S)", tag.clone(), || {
                    let l = prod(&sum(a, b)?, c)?;
                    let rt = sum(&prod(a, c)?, &prod(b, c)?)?;
                    let mut symbols = Vec::new();
                    for x in &a.symbols {
                        for y in &b.symbols {
                            symbols.push((Symbol::left(&Symbol::pair(x, y)), Symbol::pair(&Symbol::left(x), &Symbol::left(y))));
                        }
                    }
                    for z in &c.symbols {
                        symbols.push((Symbol::right(z), Symbol::pair(&Symbol::right(z), &Symbol::right(z))));
                    }
                    // row-major ordering already places the blocks in order
                    let n = size_of(&l);
                    let (unitary, states) = rep_maps((0..n).collect(), kind);
                    Ok(verify_iso(&l, &rt, &Iso { symbols, unitary, states, injective_only: true }))
                });
                r.attempt("S◇(S1⊔S2) ≅ (S◇S1)⊔(S◇S2)", tag.clone(), || {
                    let l = prod(c, &sum(a, b)?)?;
                    let rt = sum(&prod(c, a)?, &prod(c, b)?)?;
                    let mut symbols = Vec::new();
                    for z in &c.symbols {
                        symbols.push((Symbol::left(z), Symbol::pair(&Symbol::left(z), &Symbol::left(z))));
                    }
                    for x in &a.symbols {
                        for y in &b.symbols {
                            symbols.push((Symbol::right(&Symbol::pair(x, y)), Symbol::pair(&Symbol::right(x), &Symbol::right(y))));
                        }
                    }
                    let perm = left_distributor(size_of(c), size_of(a), size_of(b));
                    let (unitary, states) = rep_maps(perm, kind);
                    Ok(verify_iso(&l, &rt, &Iso { symbols, unitary, states, injective_only: true }))
                });
            }
        }
    }
    r
}

/// Three quantum systems on `C^1`, `C^2`, `C^3` and three classical systems
/// on 1, 2 and 3 states, each with a couple of symbols.
pub fn demo_bases() -> (Vec<Arc<System>>, Vec<Arc<System>>) {
    use crate::linalg::qubit::{sigma_x, sigma_z};
    let quantum = vec![
        System::quantum("Q1", 1, [("c".into(), HermitianOperator::diagonal(&[2.5]))]),
        System::quantum("Q2", 2, [("z".into(), sigma_z()), ("x".into(), sigma_x())]),
        System::quantum(
            "Q3",
            3,
            [
                ("h".into(), HermitianOperator::diagonal(&[1.0, 0.0, -1.0])),
                ("k".into(), HermitianOperator::from_real(3, &[0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0]).expect("symmetric")),
            ],
        ),
    ];
    let classical = vec![
        System::classical("C1", vec!["*".into()], [("c".into(), vec![5.0])]),
        System::classical("C2", vec!["a".into(), "b".into()], [("f".into(), vec![0.0, 1.0])]),
        System::classical(
            "C3",
            vec!["u".into(), "v".into(), "w".into()],
            [("g".into(), vec![1.0, 2.0, 3.5]), ("h".into(), vec![-1.0, 0.0, -1.0])],
        ),
    ];
    let wrap = |v: Vec<Result<System, SystemError>>| v.into_iter().map(|s| Arc::new(s.expect("valid demo system"))).collect();
    (wrap(quantum), wrap(classical))
}

/// Arrows from iterated `⊔`/`◇` constructions on `bases` whose state sets
/// have at most `max_states` elements: structure arrows, identities,
/// `j ⊔ id`, and two-step composites.
pub fn generated_classical_arrows(bases: &[Arc<System>], max_states: usize) -> Vec<Arrow> {
    let mut arrows = Vec::new();
    let mut systems: Vec<Arc<System>> = bases.to_vec();
    for a in bases {
        for b in bases {
            if a.num_states() + b.num_states() <= max_states {
                if let Ok(c) = disjoint_sum(a, b) {
                    systems.push(c.system.clone());
                    arrows.push(c.first);
                    arrows.push(c.second);
                }
            }
            if a.num_states() * b.num_states() <= max_states {
                if let Ok(c) = composite(a, b, Vec::new()) {
                    systems.push(c.system.clone());
                    arrows.push(c.first);
                    arrows.push(c.second);
                }
            }
        }
    }
    let level_one = arrows.clone();
    for j in &level_one {
        for s in bases {
            if j.target.num_states() + s.num_states() <= max_states {
                if let Ok(k) = sum_functorial_arrow(j, s) {
                    arrows.push(k);
                }
            }
        }
        // one more construction on top of j's target or source
        for s in bases {
            if j.target.num_states() + s.num_states() <= max_states {
                if let Ok(c) = disjoint_sum(&j.target, s) {
                    arrows.push(j.then(&c.first).expect("composable"));
                }
            }
            if j.source.num_states() * s.num_states() <= max_states {
                if let Ok(c) = composite(&j.source, s, Vec::new()) {
                    arrows.push(c.first.then(j).expect("composable"));
                }
            }
        }
    }
    for s in &systems {
        arrows.push(Arrow::identity(s));
    }
    arrows
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MatrixDef {
    Real(Vec<Vec<f64>>),
    Complex(ComplexMatrix),
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SymbolDef {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub matrix: Option<MatrixDef>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub values: Option<Vec<f64>>,
}

/// JSON form of a system definition.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemDef {
    pub name: String,
    pub kind: Kind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dim: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub states: Option<Vec<String>>,
    #[serde(default)]
    pub symbols: Vec<SymbolDef>,
}

impl SystemDef {
    pub fn build(&self) -> Result<System, SystemError> {
        let bad = |name: &str, reason: &str| SystemError::InvalidSymbol {
            name: name.to_string(),
            reason: reason.to_string(),
        };
        match self.kind {
            Kind::Quantum => {
                let dim = self.dim.ok_or_else(|| SystemError::InvalidSystem("quantum system needs \"dim\"".into()))?;
                let mut ops = Vec::new();
                for s in &self.symbols {
                    let m = match &s.matrix {
                        Some(MatrixDef::Complex(m)) => m.clone(),
                        Some(MatrixDef::Real(rows)) => {
                            if rows.len() != dim || rows.iter().any(|r| r.len() != dim) {
                                return Err(bad(&s.name, "matrix rows do not match dim"));
                            }
                            ComplexMatrix::from_real(dim, &rows.concat())
                        }
                        None => return Err(bad(&s.name, "quantum symbol needs \"matrix\"")),
                    };
                    ops.push((s.name.clone(), HermitianOperator::new(m)?));
                }
                System::quantum(&self.name, dim, ops)
            }
            Kind::Classical => {
                let states = self
                    .states
                    .clone()
                    .ok_or_else(|| SystemError::InvalidSystem("classical system needs \"states\"".into()))?;
                let mut fs = Vec::new();
                for s in &self.symbols {
                    let v = s.values.clone().ok_or_else(|| bad(&s.name, "classical symbol needs \"values\""))?;
                    fs.push((s.name.clone(), v));
                }
                System::classical(&self.name, states, fs)
            }
            Kind::Formal => System::formal(&self.name, self.symbols.iter().map(|s| s.name.clone())),
            Kind::Empty => Ok(System::empty().with_name(&self.name)),
        }
    }

    pub fn from_system(s: &System) -> Self {
        let symbols = s
            .symbols
            .iter()
            .filter(|x| !x.is_trivial())
            .map(|x| SymbolDef {
                name: x.to_string(),
                matrix: s.operator(x).map(|a| MatrixDef::Complex(a.matrix().clone())),
                values: match s.kind() {
                    Kind::Classical => s.function(x).map(<[f64]>::to_vec),
                    _ => None,
                },
            })
            .collect();
        Self {
            name: s.name.clone(),
            kind: s.kind(),
            dim: match s.kind() {
                Kind::Quantum => s.dim(),
                _ => None,
            },
            states: match s.kind() {
                Kind::Classical => s.states().map(<[String]>::to_vec),
                _ => None,
            },
            symbols,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::qubit::{sigma_x, sigma_z};

    fn classical(name: &str, states: &[&str], syms: &[(&str, &[f64])]) -> Arc<System> {
        Arc::new(
            System::classical(
                name,
                states.iter().map(|s| s.to_string()).collect(),
                syms.iter().map(|(n, v)| (n.to_string(), v.to_vec())),
            )
            .unwrap(),
        )
    }

    #[test]
    fn symbols_normalise_the_trivial_quantity() {
        let x = Symbol::atom("x");
        assert_eq!(Symbol::pair(&Symbol::Trivial, &Symbol::Trivial), Symbol::Trivial);
        assert_eq!(Symbol::left(&Symbol::Trivial), Symbol::Trivial);
        assert_eq!(Symbol::pair(&x, &Symbol::Trivial).to_string(), "⟨x,I⟩");
        assert_eq!(Symbol::left(&Symbol::right(&x)).to_string(), "(1◇x)◇1");
    }

    #[test]
    fn sum_of_languages_is_the_product() {
        let s1 = Arc::new(System::formal("S1", ["x".into()]).unwrap());
        let s2 = Arc::new(System::formal("S2", ["y".into()]).unwrap());
        let c = disjoint_sum(&s1, &s2).unwrap();
        assert_eq!(c.system.symbols().len(), 4);
        for (p, a) in c.first.translation().map() {
            match p {
                Symbol::Pair(x, _) => assert_eq!(**x, *a),
                Symbol::Trivial => assert!(a.is_trivial()),
                _ => panic!("unexpected symbol {p}"),
            }
        }
        assert!(c.first.translation().is_surjective_onto(s1.symbols()));
        assert!(c.first.check().is_empty());

        let zero = Arc::new(System::empty());
        let with_zero = disjoint_sum(&s1, &zero).unwrap();
        assert_eq!(with_zero.system.symbols().len(), s1.symbols().len());
    }

    #[test]
    fn classical_sum_and_pullback() {
        let s1 = classical("A", &["a", "b"], &[("f", &[1.0, 2.0])]);
        let s2 = classical("B", &["c"], &[("g", &[7.0])]);
        let c = disjoint_sum(&s1, &s2).unwrap();
        assert_eq!(c.system.states().unwrap(), &["a", "b", "c"]);
        let fg = Symbol::pair(&Symbol::atom("f"), &Symbol::atom("g"));
        let pulled = classical_pullback_quantity(c.system.function(&fg).unwrap(), &c.first).unwrap();
        assert_eq!(pulled, vec![1.0, 2.0]);
        assert!(check_classical_square(&c.first).is_empty());
        assert!(check_classical_square(&c.second).is_empty());
    }

    #[test]
    fn composite_injects_factors() {
        let s1 = classical("A", &["a", "b"], &[("x", &[1.0, -1.0])]);
        let s2 = classical("B", &["c", "d", "e"], &[]);
        let c = composite(&s1, &s2, vec![ExtraSymbol::Values("e".into(), vec![0.0; 6])]).unwrap();
        let x1 = Symbol::left(&Symbol::atom("x"));
        let f = c.system.function(&x1).unwrap();
        let sigma = c.first.state_map().unwrap();
        for (k, &s) in sigma.iter().enumerate() {
            assert_eq!(f[k], s1.function(&Symbol::atom("x")).unwrap()[s]);
        }
        assert!(c.first.translation().is_injective());
        assert!(check_classical_square(&c.first).is_empty());

        let k: BTreeSet<usize> = [1].into();
        let pre = classical_pullback_proposition(&k, &c.first).unwrap();
        assert_eq!(pre, [3, 4, 5].into());
        assert_eq!(classical_pullback_proposition(&BTreeSet::new(), &c.first).unwrap(), BTreeSet::new());
        let full: BTreeSet<usize> = (0..2).collect();
        assert_eq!(classical_pullback_proposition(&full, &c.first).unwrap().len(), 6);
    }

    #[test]
    fn quantum_constructions() {
        let q = Arc::new(System::quantum("Q", 2, [("z".into(), sigma_z())]).unwrap());
        let r = Arc::new(System::quantum("R", 3, []).unwrap());
        let s = disjoint_sum(&q, &r).unwrap().system;
        assert_eq!(s.dim(), Some(5));
        let c = composite(&q, &r, vec![]).unwrap().system;
        assert_eq!(c.dim(), Some(6));
        let z1 = c.operator(&Symbol::left(&Symbol::atom("z"))).unwrap();
        assert!(z1.matrix().approx_eq(sigma_z().kron(&HermitianOperator::identity(3)).matrix(), 0.0));
        assert!(c.operator(&Symbol::Trivial).unwrap().matrix().approx_eq(&ComplexMatrix::identity(6), 0.0));

        let u = Arc::new(System::unit(Kind::Quantum));
        let qu = composite(&q, &u, vec![]).unwrap().system;
        assert_eq!(qu.dim(), Some(2));

        let classical_one = Arc::new(System::unit(Kind::Classical));
        assert!(matches!(disjoint_sum(&q, &classical_one), Err(SystemError::KindMismatch { .. })));
    }

    #[test]
    fn translations_form_a_category() {
        let s1 = classical("A", &["a"], &[("f", &[3.0])]);
        let s2 = classical("B", &["b", "c"], &[("g", &[1.0, 2.0])]);
        let s3 = classical("C", &["d"], &[]);
        let i1 = disjoint_sum(&s1, &s2).unwrap().first;
        let k = disjoint_sum(i1.target(), &s3).unwrap().first;
        let m = composite(&s1, &s3, vec![]).unwrap().first;
        let id = Arrow::identity(i1.target());
        assert_eq!(i1.then(&id).unwrap().translation().map(), i1.translation().map());
        assert_eq!(Arrow::identity(&s1).then(&i1).unwrap().translation().map(), i1.translation().map());
        let left = m.then(&i1).unwrap().then(&k).unwrap();
        let right = m.then(&i1.then(&k).unwrap()).unwrap();
        assert_eq!(left.translation().map(), right.translation().map());
        assert_eq!(left.state_map(), right.state_map());
        assert!(check_classical_square(&left).is_empty());
        assert!(matches!(k.then(&i1), Err(SystemError::CompositionMismatch { .. })));

        let t = identity_translation(&s1);
        assert!(matches!(compose_translations(&t, i1.translation()), Err(SystemError::CompositionMismatch { .. })));
    }

    #[test]
    fn functorial_sum_arrow() {
        let s1 = classical("A", &["a"], &[("f", &[3.0])]);
        let s2 = classical("B", &["b", "c"], &[("g", &[1.0, 2.0])]);
        let s = classical("S", &["s", "t"], &[("h", &[0.5, 0.25])]);
        let j = disjoint_sum(&s1, &s2).unwrap().first;
        let k = sum_functorial_arrow(&j, &s).unwrap();
        assert!(k.check().is_empty());
        assert!(check_classical_square(&k).is_empty());
        assert_eq!(k.translation().map().len(), k.target().symbols().len());

        let id = sum_functorial_arrow(&Arrow::identity(&s1), &s).unwrap();
        assert!(id.translation().map().iter().all(|(a, b)| a == b));
        assert_eq!(id.state_map().unwrap(), &[0, 1, 2]);
    }

    #[test]
    fn axioms_hold_on_demo_bases() {
        let (q, c) = demo_bases();
        for bases in [q, c] {
            let r = check_sys_axioms(&bases);
            assert!(r.is_ok(), "{:?}", r.failures());
            assert!(r.checks.len() > 50);
        }
    }

    #[test]
    fn distributivity_intertwiner_is_explicit() {
        let q = Arc::new(System::quantum("A", 2, [("x".into(), sigma_x())]).unwrap());
        let r = Arc::new(System::quantum("B", 3, []).unwrap());
        let s = Arc::new(System::quantum("S", 2, [("z".into(), sigma_z())]).unwrap());
        let report = check_sys_axioms(&[q, r, s]);
        assert!(report.checks.iter().any(|c| c.law.starts_with("(S1⊔S2)◇S") && c.systems == "A,B,S" && c.ok));
        let perm = left_distributor(2, 2, 3);
        assert_eq!(perm.len(), 10);
        let set: BTreeSet<usize> = perm.iter().copied().collect();
        assert_eq!(set.len(), 10);
    }

    #[test]
    fn system_json_round_trip() {
        let json = r#"{"name":"qubit","kind":"quantum","dim":2,
            "symbols":[{"name":"z","matrix":[[1,0],[0,-1]]},{"name":"x","matrix":[[0,1],[1,0]]}]}"#;
        let def: SystemDef = serde_json::from_str(json).unwrap();
        let s = def.build().unwrap();
        assert_eq!(s.symbols().len(), 3);
        let back = SystemDef::from_system(&s).build().unwrap();
        assert_eq!(back, s);

        let bad = r#"{"name":"q","kind":"quantum","dim":2,"symbols":[{"name":"y","matrix":[[0,1],[0,0]]}]}"#;
        let def: SystemDef = serde_json::from_str(bad).unwrap();
        assert!(matches!(def.build(), Err(SystemError::Linalg(_))));

        let cl = r#"{"name":"c","kind":"classical","states":["a","b"],"symbols":[{"name":"f","values":[1,2]}]}"#;
        let s = serde_json::from_str::<SystemDef>(cl).unwrap().build().unwrap();
        assert_eq!(s.function(&Symbol::atom("f")).unwrap(), &[1.0, 2.0]);
        assert!(serde_json::from_str::<SystemDef>(r#"{"name":"c","kind":"nope"}"#).is_err());
    }

    #[test]
    fn rejects_bad_systems() {
        assert!(System::quantum("q", 0, []).is_err());
        assert!(System::classical("c", vec![], []).is_err());
        assert!(matches!(
            System::formal("f", ["x".into(), "x".into()]),
            Err(SystemError::DuplicateSymbol(_))
        ));
        assert!(System::formal("f", ["I".into()]).is_err());
    }
}
