//! Subobjects of a presheaf and their Heyting algebra.

use std::collections::BTreeSet;
use std::sync::Arc;

use super::{LawReport, NaturalTransformation, Omega, Presheaf, Sieve, ToposError};

/// Restriction-closed family of subsets `S_V ⊆ F_V`.
#[derive(Clone, Debug)]
pub struct Subobject {
    ambient: Arc<Presheaf>,
    components: Vec<BTreeSet<usize>>,
}

impl PartialEq for Subobject {
    fn eq(&self, other: &Self) -> bool {
        self.same_ambient(other) && self.components == other.components
    }
}

impl Eq for Subobject {}

impl Subobject {
    pub fn new(ambient: Arc<Presheaf>, components: Vec<BTreeSet<usize>>) -> Result<Self, ToposError> {
        let s = Self {
            ambient,
            components,
        };
        if let Some(stage) = s.first_unclosed_stage() {
            return Err(ToposError::NotRestrictionClosed(stage));
        }
        Ok(s)
    }

    pub fn top(ambient: Arc<Presheaf>) -> Self {
        let components = ambient.sizes().iter().map(|&n| (0..n).collect()).collect();
        Self {
            ambient,
            components,
        }
    }

    pub fn bottom(ambient: Arc<Presheaf>) -> Self {
        let components = vec![BTreeSet::new(); ambient.sizes().len()];
        Self {
            ambient,
            components,
        }
    }

    pub fn ambient(&self) -> &Arc<Presheaf> {
        &self.ambient
    }

    pub fn component(&self, stage: usize) -> &BTreeSet<usize> {
        &self.components[stage]
    }

    pub fn components(&self) -> &[BTreeSet<usize>] {
        &self.components
    }

    fn first_unclosed_stage(&self) -> Option<usize> {
        let f = &self.ambient;
        if self.components.len() != f.sizes().len() {
            return Some(0);
        }
        for (v, comp) in self.components.iter().enumerate() {
            if comp.iter().any(|&x| x >= f.size(v)) {
                return Some(v);
            }
        }
        for (small, large) in f.poset().comparable_pairs() {
            if self.components[large]
                .iter()
                .any(|&x| !self.components[small].contains(&f.restrict(large, small, x)))
            {
                return Some(large);
            }
        }
        None
    }

    pub fn check(&self) -> LawReport {
        let mut r = LawReport::default();
        if let Some(v) = self.first_unclosed_stage() {
            r.push(format!("not closed under restriction at stage {v}"));
        }
        r
    }

    fn same_ambient(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.ambient, &other.ambient) || *self.ambient == *other.ambient
    }

    fn require_same(&self, other: &Self) -> Result<(), ToposError> {
        if self.same_ambient(other) {
            Ok(())
        } else {
            Err(ToposError::AmbientMismatch)
        }
    }

    pub fn leq(&self, other: &Self) -> Result<bool, ToposError> {
        self.require_same(other)?;
        Ok(self
            .components
            .iter()
            .zip(&other.components)
            .all(|(a, b)| a.is_subset(b)))
    }

    pub fn meet(&self, other: &Self) -> Result<Self, ToposError> {
        self.require_same(other)?;
        Ok(Self {
            ambient: self.ambient.clone(),
            components: self
                .components
                .iter()
                .zip(&other.components)
                .map(|(a, b)| a.intersection(b).copied().collect())
                .collect(),
        })
    }

    pub fn join(&self, other: &Self) -> Result<Self, ToposError> {
        self.require_same(other)?;
        Ok(Self {
            ambient: self.ambient.clone(),
            components: self
                .components
                .iter()
                .zip(&other.components)
                .map(|(a, b)| a.union(b).copied().collect())
                .collect(),
        })
    }

    /// `(S ⇒ T)_V = {x ∈ F_V : ∀ V' ≤ V, x|V' ∈ S_{V'} ⟹ x|V' ∈ T_{V'}}`.
    pub fn implies(&self, other: &Self) -> Result<Self, ToposError> {
        self.require_same(other)?;
        let f = &self.ambient;
        let p = f.poset();
        let components = (0..p.len())
            .map(|v| {
                (0..f.size(v))
                    .filter(|&x| {
                        p.down_set(v).into_iter().all(|u| {
                            let y = f.restrict(v, u, x);
                            !self.components[u].contains(&y) || other.components[u].contains(&y)
                        })
                    })
                    .collect()
            })
            .collect();
        Ok(Self {
            ambient: self.ambient.clone(),
            components,
        })
    }

    pub fn not(&self) -> Self {
        self.implies(&Self::bottom(self.ambient.clone()))
            .expect("same ambient by construction")
    }

    /// The monic `S ↪ F`, with `S` as a presheaf on its own points.
    pub fn inclusion(&self) -> NaturalTransformation {
        let f = &self.ambient;
        let points: Vec<Vec<usize>> = self.components.iter().map(|c| c.iter().copied().collect()).collect();
        let sizes = points.iter().map(Vec::len).collect();
        let source = Presheaf::from_fn(f.poset().clone(), sizes, |large, small, x| {
            let y = f.restrict(large, small, points[large][x]);
            points[small].binary_search(&y).expect("restriction-closed")
        });
        NaturalTransformation::new(Arc::new(source), f.clone(), points)
    }

    /// Characteristic arrow `χ_S : F → Ω`, `χ_V(x) = {V' ≤ V : x|V' ∈ S_{V'}}`.
    pub fn characteristic(&self, omega: &Omega) -> NaturalTransformation {
        let f = &self.ambient;
        let p = f.poset();
        let components = (0..p.len())
            .map(|v| {
                (0..f.size(v))
                    .map(|x| {
                        let members = p
                            .down_set(v)
                            .into_iter()
                            .filter(|&u| self.components[u].contains(&f.restrict(v, u, x)));
                        let sieve = Sieve::new(p, v, members).expect("restriction-closed gives a sieve");
                        omega.index_of(&sieve).expect("all sieves enumerated")
                    })
                    .collect()
            })
            .collect();
        NaturalTransformation::new(self.ambient.clone(), omega.presheaf().clone(), components)
    }

    /// Inverse of [`Subobject::characteristic`]: points sent to the maximal sieve.
    pub fn from_characteristic(chi: &NaturalTransformation, omega: &Omega) -> Result<Self, ToposError> {
        let report = chi.check();
        if !report.is_ok() {
            return Err(ToposError::NotNatural(report.failures));
        }
        let components = (0..chi.source().sizes().len())
            .map(|v| {
                let top = omega.maximal_index(v);
                chi.component(v)
                    .iter()
                    .enumerate()
                    .filter(|(_, &s)| s == top)
                    .map(|(x, _)| x)
                    .collect()
            })
            .collect();
        Self::new(chi.source().clone(), components)
    }
}

/// Componentwise preimage `η_V^{-1}(K_V)`.
pub fn pullback_subobject(eta: &NaturalTransformation, k: &Subobject) -> Result<Subobject, ToposError> {
    let report = eta.check();
    if !report.is_ok() {
        return Err(ToposError::NotNatural(report.failures));
    }
    if !(Arc::ptr_eq(eta.target(), k.ambient()) || **eta.target() == **k.ambient()) {
        return Err(ToposError::AmbientMismatch);
    }
    let components = eta
        .components()
        .iter()
        .enumerate()
        .map(|(v, c)| {
            c.iter()
                .enumerate()
                .filter(|(_, y)| k.component(v).contains(y))
                .map(|(x, _)| x)
                .collect()
        })
        .collect();
    Subobject::new(eta.source().clone(), components)
}

/// Every subobject of `ambient`, or `None` if the candidate space
/// (product of stagewise power sets) exceeds `limit`.
pub fn enumerate_subobjects(ambient: &Arc<Presheaf>, limit: usize) -> Option<Vec<Subobject>> {
    let sizes = ambient.sizes();
    let mut space: usize = 1;
    for &n in sizes {
        space = space.checked_mul(1usize.checked_shl(n as u32)?)?;
        if space > limit {
            return None;
        }
    }
    let p = ambient.poset();
    // choose stages from the top down so a stage's choice can prune below it
    let mut order: Vec<usize> = (0..p.len()).collect();
    order.sort_by_key(|&v| std::cmp::Reverse(p.down_set(v).len()));
    let mut out = Vec::new();
    let mut current = vec![BTreeSet::new(); sizes.len()];
    fn go(
        ambient: &Arc<Presheaf>,
        order: &[usize],
        i: usize,
        current: &mut Vec<BTreeSet<usize>>,
        out: &mut Vec<Subobject>,
    ) {
        if i == order.len() {
            if let Ok(s) = Subobject::new(ambient.clone(), current.clone()) {
                out.push(s);
            }
            return;
        }
        let v = order[i];
        let n = ambient.size(v);
        for mask in 0u64..(1u64 << n) {
            current[v] = (0..n).filter(|x| mask >> x & 1 == 1).collect();
            // prune against already-chosen larger stages
            let ok = order[..i].iter().all(|&large| {
                !ambient.poset().leq(v, large)
                    || current[large]
                        .iter()
                        .all(|&x| current[v].contains(&ambient.restrict(large, v, x)))
            });
            if ok {
                go(ambient, order, i + 1, current, out);
            }
        }
        current[v].clear();
    }
    go(ambient, &order, 0, &mut current, &mut out);
    Some(out)
}

#[cfg(test)]
mod tests {
    use super::super::{omega, FinitePoset};
    use super::*;

    fn singleton_chain() -> Arc<Presheaf> {
        Arc::new(Presheaf::terminal(FinitePoset::chain(2)))
    }

    #[test]
    fn implication_and_meet_identities() {
        let f = singleton_chain();
        let subs = enumerate_subobjects(&f, 1 << 10).unwrap();
        assert_eq!(subs.len(), 3);
        let top = Subobject::top(f.clone());
        for s in &subs {
            assert_eq!(s.implies(s).unwrap(), top);
            assert_eq!(s.meet(&top).unwrap(), *s);
        }
    }

    #[test]
    fn double_negation_is_not_identity() {
        let f = singleton_chain();
        // true at the bottom stage only
        let s = Subobject::new(f.clone(), vec![[0].into(), BTreeSet::new()]).unwrap();
        let nn = s.not().not();
        assert_ne!(nn, s);
        assert_eq!(nn, Subobject::top(f));
    }

    #[test]
    fn rejects_unclosed_families() {
        let f = singleton_chain();
        let err = Subobject::new(f, vec![BTreeSet::new(), [0].into()]).unwrap_err();
        assert_eq!(err, ToposError::NotRestrictionClosed(1));
    }

    #[test]
    fn ambient_mismatch() {
        let a = Subobject::top(singleton_chain());
        let b = Subobject::top(Arc::new(Presheaf::constant(FinitePoset::chain(2), 2)));
        assert_eq!(a.meet(&b).unwrap_err(), ToposError::AmbientMismatch);
    }

    #[test]
    fn characteristic_round_trip() {
        let p = FinitePoset::from_relations(3, &[(0, 1), (0, 2)]).unwrap();
        let f = Arc::new(Presheaf::from_fn(p.clone(), vec![1, 2, 2], |_, small, x| if small == 0 { 0 } else { x }));
        let om = omega(&p);
        for s in enumerate_subobjects(&f, 1 << 12).unwrap() {
            let chi = s.characteristic(&om);
            assert!(chi.is_natural());
            assert_eq!(Subobject::from_characteristic(&chi, &om).unwrap(), s);
        }
    }

    #[test]
    fn pullback_of_top_and_along_identity() {
        let f = Arc::new(Presheaf::from_fn(FinitePoset::chain(2), vec![1, 2], |_, s, x| if s == 0 { 0 } else { x }));
        let id = NaturalTransformation::identity(f.clone());
        for k in enumerate_subobjects(&f, 1 << 10).unwrap() {
            assert_eq!(pullback_subobject(&id, &k).unwrap(), k);
        }
        let t = Arc::new(Presheaf::terminal(FinitePoset::chain(2)));
        let bang = NaturalTransformation::new(f.clone(), t.clone(), vec![vec![0], vec![0, 0]]);
        assert_eq!(pullback_subobject(&bang, &Subobject::top(t)).unwrap(), Subobject::top(f));
    }

    #[test]
    fn inclusions_are_natural_monics() {
        let f = Arc::new(Presheaf::from_fn(FinitePoset::chain(2), vec![1, 2], |_, s, x| if s == 0 { 0 } else { x }));
        for s in enumerate_subobjects(&f, 1 << 10).unwrap() {
            let i = s.inclusion();
            assert!(i.is_natural() && i.is_monic());
            assert!(i.source().check().is_ok());
        }
    }
}
