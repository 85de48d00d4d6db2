//! Presheaves over a finite poset.
//!
//! Point sets are represented by their sizes (points are `0..size`) and every
//! restriction map is an explicit table, so functoriality and naturality can
//! be checked exhaustively.

mod sieve;
mod subobject;

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::Serialize;
use thiserror::Error;

pub use sieve::{omega, Omega, Sieve};
pub use subobject::{enumerate_subobjects, pullback_subobject, Subobject};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ToposError {
    #[error("relation is not a partial order: {0}")]
    NotAPartialOrder(String),
    #[error("map is not monotone: {small} ≤ {large} but images are not ordered")]
    NotMonotone { small: usize, large: usize },
    #[error("map has {found} entries, expected {expected} with values below {codomain}")]
    BadMap {
        expected: usize,
        found: usize,
        codomain: usize,
    },
    #[error("subobjects live in different ambient presheaves")]
    AmbientMismatch,
    #[error("sieves are at different stages ({0} vs {1})")]
    StageMismatch(usize, usize),
    #[error("transformation is not natural: {0:?}")]
    NotNatural(Vec<String>),
    #[error("component family is not closed under restriction at stage {0}")]
    NotRestrictionClosed(usize),
    #[error("sieve at {0} is not a down-closed subset of its principal down-set")]
    NotDownClosed(usize),
}

/// Outcome of a law check: empty means every law held.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct LawReport {
    pub failures: Vec<String>,
}

impl LawReport {
    pub fn is_ok(&self) -> bool {
        self.failures.is_empty()
    }

    pub fn push(&mut self, msg: impl Into<String>) {
        self.failures.push(msg.into());
    }

    pub fn extend(&mut self, other: LawReport) {
        self.failures.extend(other.failures);
    }
}

/// A finite partial order on `0..n`, with display labels.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FinitePoset {
    labels: Vec<String>,
    leq: Vec<bool>,
}

impl FinitePoset {
    pub fn new(labels: Vec<String>, leq: Vec<bool>) -> Result<Self, ToposError> {
        let n = labels.len();
        if leq.len() != n * n {
            return Err(ToposError::NotAPartialOrder(format!(
                "relation has {} entries for {n} elements",
                leq.len()
            )));
        }
        let p = Self { labels, leq };
        for a in 0..n {
            if !p.leq(a, a) {
                return Err(ToposError::NotAPartialOrder(format!("{} not reflexive", p.labels[a])));
            }
            for b in 0..n {
                if a != b && p.leq(a, b) && p.leq(b, a) {
                    return Err(ToposError::NotAPartialOrder(format!(
                        "{} and {} violate antisymmetry",
                        p.labels[a], p.labels[b]
                    )));
                }
                for c in 0..n {
                    if p.leq(a, b) && p.leq(b, c) && !p.leq(a, c) {
                        return Err(ToposError::NotAPartialOrder(format!(
                            "{} ≤ {} ≤ {} is not transitive",
                            p.labels[a], p.labels[b], p.labels[c]
                        )));
                    }
                }
            }
        }
        Ok(p)
    }

    /// Builds the reflexive–transitive closure of the given strict relations.
    pub fn from_relations(n: usize, pairs: &[(usize, usize)]) -> Result<Self, ToposError> {
        let mut leq = vec![false; n * n];
        for i in 0..n {
            leq[i * n + i] = true;
        }
        for &(a, b) in pairs {
            leq[a * n + b] = true;
        }
        for k in 0..n {
            for i in 0..n {
                for j in 0..n {
                    if leq[i * n + k] && leq[k * n + j] {
                        leq[i * n + j] = true;
                    }
                }
            }
        }
        Self::new((0..n).map(|i| format!("p{i}")).collect(), leq)
    }

    /// Total order `0 < 1 < … < n−1`.
    pub fn chain(n: usize) -> Self {
        let pairs: Vec<(usize, usize)> = (1..n).map(|i| (i - 1, i)).collect();
        Self::from_relations(n, &pairs).expect("chain is a poset")
    }

    /// Discrete order on `n` points.
    pub fn discrete(n: usize) -> Self {
        Self::from_relations(n, &[]).expect("antichain is a poset")
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn leq(&self, a: usize, b: usize) -> bool {
        self.leq[a * self.len() + b]
    }

    pub fn label(&self, a: usize) -> &str {
        &self.labels[a]
    }

    pub fn down_set(&self, v: usize) -> Vec<usize> {
        (0..self.len()).filter(|&u| self.leq(u, v)).collect()
    }

    /// All pairs `(small, large)` with `small ≤ large`.
    pub fn comparable_pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let n = self.len();
        (0..n).flat_map(move |a| (0..n).filter(move |&b| self.leq(a, b)).map(move |b| (a, b)))
    }

    pub fn is_monotone(&self, map: &[usize], codomain: &FinitePoset) -> Result<(), ToposError> {
        if map.len() != self.len() || map.iter().any(|&m| m >= codomain.len()) {
            return Err(ToposError::BadMap {
                expected: self.len(),
                found: map.len(),
                codomain: codomain.len(),
            });
        }
        for (a, b) in self.comparable_pairs() {
            if !codomain.leq(map[a], map[b]) {
                return Err(ToposError::NotMonotone { small: a, large: b });
            }
        }
        Ok(())
    }
}

/// A presheaf of finite sets on a finite poset.
///
/// `restrictions[(large, small)]` sends each point of the stage `large` to a
/// point of the stage `small`, for every `small ≤ large`.
#[derive(Clone, Debug, PartialEq)]
pub struct Presheaf {
    poset: FinitePoset,
    sizes: Vec<usize>,
    restrictions: BTreeMap<(usize, usize), Vec<usize>>,
}

impl Presheaf {
    /// Stores the tables as given; use [`Presheaf::check`] to validate them.
    pub fn new(
        poset: FinitePoset,
        sizes: Vec<usize>,
        restrictions: BTreeMap<(usize, usize), Vec<usize>>,
    ) -> Self {
        assert_eq!(sizes.len(), poset.len(), "one size per stage");
        Self {
            poset,
            sizes,
            restrictions,
        }
    }

    /// Tabulates `restrict(large, small, point)` over all comparable pairs.
    pub fn from_fn(
        poset: FinitePoset,
        sizes: Vec<usize>,
        mut restrict: impl FnMut(usize, usize, usize) -> usize,
    ) -> Self {
        let mut restrictions = BTreeMap::new();
        for (small, large) in poset.comparable_pairs() {
            let table = (0..sizes[large]).map(|x| restrict(large, small, x)).collect();
            restrictions.insert((large, small), table);
        }
        Self::new(poset, sizes, restrictions)
    }

    /// Presheaf with the same set at every stage and identity restrictions.
    pub fn constant(poset: FinitePoset, size: usize) -> Self {
        let n = poset.len();
        Self::from_fn(poset, vec![size; n], |_, _, x| x)
    }

    pub fn terminal(poset: FinitePoset) -> Self {
        Self::constant(poset, 1)
    }

    pub fn poset(&self) -> &FinitePoset {
        &self.poset
    }

    pub fn size(&self, stage: usize) -> usize {
        self.sizes[stage]
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn restriction(&self, large: usize, small: usize) -> Option<&[usize]> {
        self.restrictions.get(&(large, small)).map(Vec::as_slice)
    }

    /// Restricts a point of stage `large` to stage `small`. Panics if
    /// `small ≰ large`.
    pub fn restrict(&self, large: usize, small: usize, x: usize) -> usize {
        self.restrictions[&(large, small)][x]
    }

    /// Identity and composition laws for every chain of stages.
    pub fn check(&self) -> LawReport {
        let p = &self.poset;
        let mut report = LawReport::default();
        for (small, large) in p.comparable_pairs() {
            match self.restrictions.get(&(large, small)) {
                None => report.push(format!("missing restriction {} → {}", p.label(large), p.label(small))),
                Some(t) => {
                    if t.len() != self.sizes[large] || t.iter().any(|&y| y >= self.sizes[small]) {
                        report.push(format!("malformed restriction {} → {}", p.label(large), p.label(small)));
                    }
                }
            }
        }
        if !report.is_ok() {
            return report;
        }
        for v in 0..p.len() {
            let t = &self.restrictions[&(v, v)];
            if t.iter().enumerate().any(|(x, &y)| x != y) {
                report.push(format!("restriction at {} is not the identity", p.label(v)));
            }
        }
        for (v2, v1) in p.comparable_pairs() {
            for v0 in p.down_set(v2) {
                if !p.leq(v0, v1) {
                    continue;
                }
                let direct = &self.restrictions[&(v1, v0)];
                let first = &self.restrictions[&(v1, v2)];
                let second = &self.restrictions[&(v2, v0)];
                for x in 0..self.sizes[v1] {
                    if second[first[x]] != direct[x] {
                        report.push(format!(
                            "composition fails on chain {} ≤ {} ≤ {} at point {x}",
                            p.label(v0),
                            p.label(v2),
                            p.label(v1)
                        ));
                        break;
                    }
                }
            }
        }
        report
    }

    /// Stagewise cartesian product; the point `(a, b)` is `a * |G_V| + b`.
    pub fn product(&self, other: &Presheaf) -> Presheaf {
        assert_eq!(self.poset, other.poset, "product over different bases");
        let sizes = self
            .sizes
            .iter()
            .zip(&other.sizes)
            .map(|(a, b)| a * b)
            .collect();
        Presheaf::from_fn(self.poset.clone(), sizes, |large, small, x| {
            let (a, b) = (x / other.sizes[large], x % other.sizes[large]);
            self.restrict(large, small, a) * other.sizes[small] + other.restrict(large, small, b)
        })
    }

    pub fn to_export(&self) -> PresheafExport {
        let p = &self.poset;
        PresheafExport {
            stages: (0..p.len())
                .map(|v| StageExport {
                    id: p.label(v).to_string(),
                    points: self.sizes[v],
                })
                .collect(),
            restrictions: self
                .restrictions
                .iter()
                .filter(|((l, s), _)| l != s)
                .map(|(&(l, s), t)| RestrictionExport {
                    from: p.label(l).to_string(),
                    to: p.label(s).to_string(),
                    table: t.clone(),
                })
                .collect(),
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct StageExport {
    pub id: String,
    pub points: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct RestrictionExport {
    pub from: String,
    pub to: String,
    pub table: Vec<usize>,
}

#[derive(Clone, Debug, Serialize)]
pub struct PresheafExport {
    pub stages: Vec<StageExport>,
    pub restrictions: Vec<RestrictionExport>,
}

/// `check_presheaf` as a boolean.
pub fn check_presheaf(f: &Presheaf) -> bool {
    f.check().is_ok()
}

/// A family of stagewise maps `source_V → target_V`.
#[derive(Clone, Debug, PartialEq)]
pub struct NaturalTransformation {
    source: Arc<Presheaf>,
    target: Arc<Presheaf>,
    components: Vec<Vec<usize>>,
}

impl NaturalTransformation {
    pub fn new(source: Arc<Presheaf>, target: Arc<Presheaf>, components: Vec<Vec<usize>>) -> Self {
        Self {
            source,
            target,
            components,
        }
    }

    pub fn identity(f: Arc<Presheaf>) -> Self {
        let components = f.sizes.iter().map(|&n| (0..n).collect()).collect();
        Self::new(f.clone(), f, components)
    }

    pub fn source(&self) -> &Arc<Presheaf> {
        &self.source
    }

    pub fn target(&self) -> &Arc<Presheaf> {
        &self.target
    }

    pub fn component(&self, stage: usize) -> &[usize] {
        &self.components[stage]
    }

    pub fn components(&self) -> &[Vec<usize>] {
        &self.components
    }

    /// Lists every failing naturality square.
    pub fn check(&self) -> LawReport {
        let mut report = LawReport::default();
        let (f, g) = (&self.source, &self.target);
        if f.poset != g.poset {
            report.push("source and target live over different posets");
            return report;
        }
        let p = &f.poset;
        if self.components.len() != p.len() {
            report.push("wrong number of components");
            return report;
        }
        for v in 0..p.len() {
            let c = &self.components[v];
            if c.len() != f.size(v) || c.iter().any(|&y| y >= g.size(v)) {
                report.push(format!("malformed component at {}", p.label(v)));
            }
        }
        if !report.is_ok() {
            return report;
        }
        for (small, large) in p.comparable_pairs() {
            for x in 0..f.size(large) {
                let down_then_map = self.components[small][f.restrict(large, small, x)];
                let map_then_down = g.restrict(large, small, self.components[large][x]);
                if down_then_map != map_then_down {
                    report.push(format!(
                        "square {} ≤ {} fails at point {x}",
                        p.label(small),
                        p.label(large)
                    ));
                }
            }
        }
        report
    }

    pub fn is_natural(&self) -> bool {
        self.check().is_ok()
    }

    /// Every component injective.
    pub fn is_monic(&self) -> bool {
        self.components.iter().all(|c| {
            let mut seen = c.clone();
            seen.sort_unstable();
            seen.windows(2).all(|w| w[0] != w[1])
        })
    }

    /// Every component surjective.
    pub fn is_epic(&self) -> bool {
        self.components.iter().enumerate().all(|(v, c)| {
            let mut hit = vec![false; self.target.size(v)];
            for &y in c {
                hit[y] = true;
            }
            hit.into_iter().all(|h| h)
        })
    }

    /// `other ∘ self`.
    pub fn then(&self, other: &NaturalTransformation) -> NaturalTransformation {
        assert!(
            Arc::ptr_eq(&self.target, &other.source) || *self.target == *other.source,
            "composable transformations"
        );
        let components = self
            .components
            .iter()
            .zip(&other.components)
            .map(|(a, b)| a.iter().map(|&x| b[x]).collect())
            .collect();
        NaturalTransformation::new(self.source.clone(), other.target.clone(), components)
    }
}

pub fn check_naturality(eta: &NaturalTransformation) -> bool {
    eta.is_natural()
}

/// `m*F = F ∘ m^op` for a monotone `m : domain → F.poset()`.
pub fn inverse_image(
    map: &[usize],
    domain: &FinitePoset,
    f: &Presheaf,
) -> Result<Presheaf, ToposError> {
    domain.is_monotone(map, &f.poset)?;
    let sizes = map.iter().map(|&q| f.size(q)).collect();
    Ok(Presheaf::from_fn(domain.clone(), sizes, |large, small, x| {
        f.restrict(map[large], map[small], x)
    }))
}

/// `m*η`, with components `η_{m(V)}`, between freshly built inverse images.
pub fn inverse_image_transformation(
    map: &[usize],
    domain: &FinitePoset,
    eta: &NaturalTransformation,
) -> Result<NaturalTransformation, ToposError> {
    let source = Arc::new(inverse_image(map, domain, &eta.source)?);
    let target = Arc::new(inverse_image(map, domain, &eta.target)?);
    let components = map.iter().map(|&q| eta.components[q].clone()).collect();
    Ok(NaturalTransformation::new(source, target, components))
}

/// One representative of every isomorphism class of posets on `n` elements.
///
/// Naturally labelled posets are grown one element at a time (each new
/// element gets a down-closed set of predecessors), then deduplicated by a
/// canonical code: the smallest relation bit string over relabellings that
/// sort elements by `(|↓v|, |↑v|)`.
pub fn posets_up_to_iso(n: usize) -> Vec<FinitePoset> {
    assert!(n <= 8, "canonical codes are 64-bit");
    let mut grown: Vec<Vec<bool>> = vec![Vec::new()];
    for k in 0..n {
        let mut next = Vec::new();
        for rel in &grown {
            for mask in 0u32..1 << k {
                let closed = (0..k)
                    .filter(|&b| mask >> b & 1 == 1)
                    .all(|b| (0..k).all(|a| !rel[a * k + b] || mask >> a & 1 == 1));
                if !closed {
                    continue;
                }
                let m = k + 1;
                let mut r = vec![false; m * m];
                for a in 0..k {
                    for b in 0..k {
                        r[a * m + b] = rel[a * k + b];
                    }
                    r[a * m + k] = mask >> a & 1 == 1;
                }
                r[k * m + k] = true;
                next.push(r);
            }
        }
        grown = next;
    }
    let mut seen = BTreeMap::new();
    for rel in grown {
        let (code, order) = canonical_code(n, &rel);
        seen.entry(code).or_insert_with(|| {
            let mut leq = vec![false; n * n];
            for i in 0..n {
                for j in 0..n {
                    leq[i * n + j] = rel[order[i] * n + order[j]];
                }
            }
            leq
        });
    }
    seen.into_values()
        .map(|leq| FinitePoset::new((0..n).map(|i| format!("p{i}")).collect(), leq).expect("grown as a poset"))
        .collect()
}

fn canonical_code(n: usize, rel: &[bool]) -> (u64, Vec<usize>) {
    let key = |v: usize| {
        let down = (0..n).filter(|&u| rel[u * n + v]).count();
        let up = (0..n).filter(|&u| rel[v * n + u]).count();
        (down, up)
    };
    let mut sorted: Vec<usize> = (0..n).collect();
    sorted.sort_by_key(|&v| key(v));
    let slots: Vec<(usize, usize)> = sorted.iter().map(|&v| key(v)).collect();
    let mut best = (u64::MAX, Vec::new());
    let mut order = Vec::with_capacity(n);
    let mut used = vec![false; n];
    fn go(
        n: usize,
        rel: &[bool],
        slots: &[(usize, usize)],
        key: &dyn Fn(usize) -> (usize, usize),
        order: &mut Vec<usize>,
        used: &mut Vec<bool>,
        best: &mut (u64, Vec<usize>),
    ) {
        if order.len() == n {
            let mut code = 0u64;
            for i in 0..n {
                for j in 0..n {
                    code = code << 1 | rel[order[i] * n + order[j]] as u64;
                }
            }
            if code < best.0 {
                *best = (code, order.clone());
            }
            return;
        }
        for v in 0..n {
            if !used[v] && key(v) == slots[order.len()] {
                used[v] = true;
                order.push(v);
                go(n, rel, slots, key, order, used, best);
                order.pop();
                used[v] = false;
            }
        }
    }
    go(n, rel, &slots, &key, &mut order, &mut used, &mut best);
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_chain_presheaf() -> Presheaf {
        // stage 1 has two points, both restricting to the single point of stage 0
        Presheaf::from_fn(FinitePoset::chain(2), vec![1, 2], |_, small, x| if small == 0 { 0 } else { x })
    }

    #[test]
    fn poset_counts_up_to_iso() {
        // OEIS A000112
        let counts: Vec<usize> = (0..=6).map(|n| posets_up_to_iso(n).len()).collect();
        assert_eq!(counts, vec![1, 1, 2, 5, 16, 63, 318]);
    }

    #[test]
    fn constant_presheaf_is_valid() {
        let f = Presheaf::constant(FinitePoset::chain(3), 4);
        assert!(check_presheaf(&f));
    }

    #[test]
    fn broken_composition_is_reported() {
        let p = FinitePoset::chain(3);
        let mut f = Presheaf::from_fn(p, vec![2, 2, 2], |_, _, x| x);
        // 2 → 0 swaps points but 2 → 1 → 0 does not
        f.restrictions.insert((2, 0), vec![1, 0]);
        let report = f.check();
        assert!(!report.is_ok());
        assert_eq!(report.failures.len(), 1);
        assert!(report.failures[0].contains("p0 ≤ p1 ≤ p2"));
    }

    #[test]
    fn non_identity_self_restriction_is_reported() {
        let mut f = Presheaf::constant(FinitePoset::chain(1), 2);
        f.restrictions.insert((0, 0), vec![1, 0]);
        assert!(!check_presheaf(&f));
    }

    #[test]
    fn poset_validation() {
        assert!(FinitePoset::new(vec!["a".into(), "b".into()], vec![true, true, true, true]).is_err());
        assert!(FinitePoset::new(vec!["a".into()], vec![false]).is_err());
        let diamond = FinitePoset::from_relations(4, &[(0, 1), (0, 2), (1, 3), (2, 3)]).unwrap();
        assert!(diamond.leq(0, 3));
        assert!(!diamond.leq(1, 2));
    }

    #[test]
    fn inverse_image_examples() {
        let f = two_chain_presheaf();
        let id = inverse_image(&[0, 1], f.poset(), &f).unwrap();
        assert_eq!(id, f);

        let constant = inverse_image(&[1, 1, 1], &FinitePoset::chain(3), &f).unwrap();
        assert_eq!(constant, Presheaf::constant(FinitePoset::chain(3), 2));

        assert!(matches!(
            inverse_image(&[1, 0], f.poset(), &f),
            Err(ToposError::NotMonotone { .. })
        ));
    }

    #[test]
    fn naturality_and_monics() {
        let f = Arc::new(two_chain_presheaf());
        let t = Arc::new(Presheaf::terminal(FinitePoset::chain(2)));
        let to_terminal = NaturalTransformation::new(f.clone(), t.clone(), vec![vec![0], vec![0, 0]]);
        assert!(to_terminal.is_natural());
        assert!(!to_terminal.is_monic());
        assert!(to_terminal.is_epic());

        let id = NaturalTransformation::identity(f.clone());
        assert!(id.is_natural() && id.is_monic());

        let g = Arc::new(Presheaf::constant(FinitePoset::chain(2), 2));
        let collapse = NaturalTransformation::new(g.clone(), f.clone(), vec![vec![0, 0], vec![0, 1]]);
        assert!(collapse.is_natural());
        // point 1 at the top restricts to 0 in f but stays 1 in g
        let bad = NaturalTransformation::new(f.clone(), g, vec![vec![0], vec![0, 1]]);
        let report = bad.check();
        assert_eq!(report.failures.len(), 1);
    }

    #[test]
    fn product_is_a_presheaf() {
        let f = two_chain_presheaf();
        let pr = f.product(&f);
        assert!(check_presheaf(&pr));
        assert_eq!(pr.sizes(), &[1, 4]);
    }
}
