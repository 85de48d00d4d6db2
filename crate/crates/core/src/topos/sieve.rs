//! Sieves on a finite poset and the subobject classifier Ω.

use std::collections::BTreeSet;
use std::sync::Arc;

use super::{FinitePoset, Presheaf, ToposError};

/// A down-closed subset of `↓at`.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Sieve {
    at: usize,
    members: BTreeSet<usize>,
}

impl Sieve {
    pub fn new(
        poset: &FinitePoset,
        at: usize,
        members: impl IntoIterator<Item = usize>,
    ) -> Result<Self, ToposError> {
        let s = Self {
            at,
            members: members.into_iter().collect(),
        };
        if s.is_well_formed(poset) {
            Ok(s)
        } else {
            Err(ToposError::NotDownClosed(at))
        }
    }

    /// The maximal sieve `↓at` ("totally true").
    pub fn maximal(poset: &FinitePoset, at: usize) -> Self {
        Self {
            at,
            members: poset.down_set(at).into_iter().collect(),
        }
    }

    pub fn empty(at: usize) -> Self {
        Self {
            at,
            members: BTreeSet::new(),
        }
    }

    pub fn at(&self) -> usize {
        self.at
    }

    pub fn members(&self) -> &BTreeSet<usize> {
        &self.members
    }

    pub fn contains(&self, v: usize) -> bool {
        self.members.contains(&v)
    }

    pub fn is_maximal(&self, poset: &FinitePoset) -> bool {
        self.members.len() == poset.down_set(self.at).len()
    }

    /// Members lie below `at` and the set is down-closed.
    pub fn is_well_formed(&self, poset: &FinitePoset) -> bool {
        self.members.iter().all(|&m| {
            m < poset.len()
                && poset.leq(m, self.at)
                && poset.down_set(m).iter().all(|d| self.members.contains(d))
        })
    }

    /// `S ∩ ↓V'`, a sieve at `V' ≤ at`.
    pub fn restrict(&self, poset: &FinitePoset, to: usize) -> Sieve {
        debug_assert!(poset.leq(to, self.at));
        Sieve {
            at: to,
            members: self.members.iter().copied().filter(|&m| poset.leq(m, to)).collect(),
        }
    }

    fn same_stage(&self, other: &Sieve) -> Result<(), ToposError> {
        if self.at == other.at {
            Ok(())
        } else {
            Err(ToposError::StageMismatch(self.at, other.at))
        }
    }

    pub fn meet(&self, other: &Sieve) -> Result<Sieve, ToposError> {
        self.same_stage(other)?;
        Ok(Sieve {
            at: self.at,
            members: self.members.intersection(&other.members).copied().collect(),
        })
    }

    pub fn join(&self, other: &Sieve) -> Result<Sieve, ToposError> {
        self.same_stage(other)?;
        Ok(Sieve {
            at: self.at,
            members: self.members.union(&other.members).copied().collect(),
        })
    }

    /// `(S ⇒ T) = {V' ≤ at : ∀ V'' ≤ V', V'' ∈ S ⟹ V'' ∈ T}`.
    pub fn implies(&self, other: &Sieve, poset: &FinitePoset) -> Result<Sieve, ToposError> {
        self.same_stage(other)?;
        let members = poset
            .down_set(self.at)
            .into_iter()
            .filter(|&v| {
                poset
                    .down_set(v)
                    .iter()
                    .all(|u| !self.members.contains(u) || other.members.contains(u))
            })
            .collect();
        Ok(Sieve {
            at: self.at,
            members,
        })
    }

    pub fn not(&self, poset: &FinitePoset) -> Sieve {
        self.implies(&Sieve::empty(self.at), poset)
            .expect("same stage by construction")
    }

    pub fn is_subset(&self, other: &Sieve) -> bool {
        self.at == other.at && self.members.is_subset(&other.members)
    }
}

/// All down-closed subsets of `↓v`, by include/exclude over `↓v` in
/// ascending order. Output is proportional to the number of sieves.
fn sieves_at(poset: &FinitePoset, v: usize) -> Vec<Sieve> {
    let down = poset.down_set(v);
    // index order respects ≤ for context posets but not in general; sort topologically
    let mut order = down.clone();
    order.sort_by_key(|&u| poset.down_set(u).len());
    let mut out = Vec::new();
    let mut chosen = BTreeSet::new();
    fn go(
        poset: &FinitePoset,
        order: &[usize],
        i: usize,
        at: usize,
        chosen: &mut BTreeSet<usize>,
        out: &mut Vec<Sieve>,
    ) {
        if i == order.len() {
            out.push(Sieve {
                at,
                members: chosen.clone(),
            });
            return;
        }
        let u = order[i];
        go(poset, order, i + 1, at, chosen, out);
        if poset.down_set(u).iter().all(|d| *d == u || chosen.contains(d)) {
            chosen.insert(u);
            go(poset, order, i + 1, at, chosen, out);
            chosen.remove(&u);
        }
    }
    go(poset, &order, 0, v, &mut chosen, &mut out);
    out.sort();
    out
}

/// The subobject classifier: `Ω_V` is the set of sieves at `V`.
#[derive(Clone, Debug)]
pub struct Omega {
    presheaf: Arc<Presheaf>,
    sieves: Vec<Vec<Sieve>>,
}

impl Omega {
    pub fn presheaf(&self) -> &Arc<Presheaf> {
        &self.presheaf
    }

    pub fn sieves(&self, stage: usize) -> &[Sieve] {
        &self.sieves[stage]
    }

    pub fn index_of(&self, s: &Sieve) -> Option<usize> {
        self.sieves[s.at].binary_search(s).ok()
    }

    pub fn sieve(&self, stage: usize, idx: usize) -> &Sieve {
        &self.sieves[stage][idx]
    }

    pub fn maximal_index(&self, stage: usize) -> usize {
        let poset = self.presheaf.poset();
        self.index_of(&Sieve::maximal(poset, stage))
            .expect("maximal sieve is enumerated")
    }
}

pub fn omega(poset: &FinitePoset) -> Omega {
    let sieves: Vec<Vec<Sieve>> = (0..poset.len()).map(|v| sieves_at(poset, v)).collect();
    let sizes = sieves.iter().map(Vec::len).collect();
    let presheaf = Presheaf::from_fn(poset.clone(), sizes, |large, small, x| {
        let restricted = sieves[large][x].restrict(poset, small);
        sieves[small]
            .binary_search(&restricted)
            .expect("restriction of a sieve is a sieve")
    });
    Omega {
        presheaf: Arc::new(presheaf),
        sieves,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn omega_sizes() {
        let one = omega(&FinitePoset::chain(1));
        assert_eq!(one.sieves(0).len(), 2);

        let chain = omega(&FinitePoset::chain(2));
        assert_eq!(chain.sieves(1).len(), 3);
        assert!(chain.presheaf().check().is_ok());

        // trivial below two incomparable contexts
        let vee = FinitePoset::from_relations(3, &[(0, 1), (0, 2)]).unwrap();
        let om = omega(&vee);
        assert_eq!(om.sieves(1).len(), 3);
        assert_eq!(om.sieves(0).len(), 2);
        assert!(om.presheaf().check().is_ok());
    }

    #[test]
    fn sieve_enumeration_matches_brute_force() {
        let diamond = FinitePoset::from_relations(5, &[(0, 1), (0, 2), (1, 3), (2, 3), (3, 4)]).unwrap();
        for v in 0..diamond.len() {
            let down = diamond.down_set(v);
            let brute = (0u32..1 << down.len())
                .filter(|mask| {
                    let s = Sieve {
                        at: v,
                        members: down.iter().enumerate().filter(|(i, _)| mask >> i & 1 == 1).map(|(_, &u)| u).collect(),
                    };
                    s.is_well_formed(&diamond)
                })
                .count();
            assert_eq!(sieves_at(&diamond, v).len(), brute);
        }
    }

    #[test]
    fn double_negation_fails_on_a_chain() {
        let p = FinitePoset::chain(2);
        let s = Sieve::new(&p, 1, [0]).unwrap();
        let nn = s.not(&p).not(&p);
        assert_eq!(nn, Sieve::maximal(&p, 1));
        assert_ne!(nn, s);
    }

    #[test]
    fn sieve_heyting_identities() {
        let p = FinitePoset::from_relations(4, &[(0, 1), (0, 2), (1, 3), (2, 3)]).unwrap();
        let all = sieves_at(&p, 3);
        let top = Sieve::maximal(&p, 3);
        for a in &all {
            assert_eq!(a.implies(a, &p).unwrap(), top);
            assert_eq!(a.meet(&top).unwrap(), *a);
            for b in &all {
                let imp = a.implies(b, &p).unwrap();
                assert!(imp.is_well_formed(&p));
                for c in &all {
                    let lhs = c.meet(a).unwrap().is_subset(b);
                    assert_eq!(lhs, c.is_subset(&imp));
                }
            }
        }
        assert!(matches!(top.meet(&Sieve::empty(1)), Err(ToposError::StageMismatch(3, 1))));
        assert!(Sieve::new(&p, 3, [1]).is_err());
    }
}
