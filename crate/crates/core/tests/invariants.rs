use std::sync::Arc;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use toposqt::compose::{entanglement_gap, lemma_direct_sum_check, sum_context_poset, sum_translation, SumTranslationBundle};
use toposqt::contexts::{
    ampliate, contexts_closed_under_coarsening, includes, largest_factor_subalgebra, random_context, AbelianContext,
};
use toposqt::linalg::{operator_leq, projection_leq, random_degenerate_hermitian, random_hermitian, EPS, RESIDUAL_TOL};
use toposqt::quantum::{daseinised_arrow, inner_das_projection, outer_das_operator, outer_das_projection, SpectralPoset};

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn random_space(n: usize, r: &mut ChaCha8Rng) -> SpectralPoset {
    let k = r.gen_range(1..=n);
    let seeds = [random_context(n, n, r), random_context(n, k, r)];
    SpectralPoset::new(contexts_closed_under_coarsening(n, seeds, true).unwrap()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn inner_and_outer_bracket_the_projection(seed in any::<u64>(), n in 2usize..=4) {
        let mut r = rng(seed);
        let u = random_context(n, n, &mut r);
        let p = u.projection_sum(r.gen_range(0..1u64 << n));
        let v = random_context(n, r.gen_range(1..=n), &mut r);
        let inner = inner_das_projection(&p, &v).unwrap();
        let outer = outer_das_projection(&p, &v).unwrap();
        prop_assert!(projection_leq(&inner, &p).unwrap());
        prop_assert!(projection_leq(&p, &outer).unwrap());
    }

    #[test]
    fn daseinisation_is_antitone(seed in any::<u64>(), n in 2usize..=3) {
        let mut r = rng(seed);
        let space = random_space(n, &mut r);
        let p = random_context(n, n, &mut r).projection_sum(r.gen_range(0..1u64 << n));
        let a = if seed % 2 == 0 { random_hermitian(n, &mut r) } else { random_degenerate_hermitian(n, &mut r) };
        for (small, large) in space.base().comparable_pairs() {
            let (vs, vl) = (space.context(small), space.context(large));
            prop_assert!(projection_leq(&outer_das_projection(&p, vl).unwrap(), &outer_das_projection(&p, vs).unwrap()).unwrap());
            let ds = outer_das_operator(&a, vs).unwrap();
            let dl = outer_das_operator(&a, vl).unwrap();
            prop_assert!(operator_leq(dl.operator(), ds.operator(), 1e-9));
            prop_assert!(operator_leq(&a, dl.operator(), 1e-9));
        }
    }

    #[test]
    fn daseinised_arrows_are_natural(seed in any::<u64>(), n in 2usize..=3) {
        let mut r = rng(seed);
        let space = random_space(n, &mut r);
        let arrow = daseinised_arrow(&random_hermitian(n, &mut r), &space).unwrap();
        prop_assert!(arrow.table().check(&space).is_ok());
    }

    #[test]
    fn direct_sum_lemma(seed in any::<u64>(), n1 in 1usize..=3, n2 in 1usize..=3) {
        let mut r = rng(seed);
        let a1 = random_degenerate_hermitian(n1, &mut r);
        let a2 = random_hermitian(n2, &mut r);
        let v1 = random_context(n1, r.gen_range(1..=n1), &mut r);
        let v2 = random_context(n2, r.gen_range(1..=n2), &mut r);
        prop_assert!(lemma_direct_sum_check(&a1, &a2, &v1, &v2).unwrap());
    }

    #[test]
    fn sum_translation_is_exact(seed in any::<u64>()) {
        let mut r = rng(seed);
        let p1 = contexts_closed_under_coarsening(2, [AbelianContext::diagonal(2), random_context(2, 2, &mut r)], true).unwrap();
        let p2 = contexts_closed_under_coarsening(1, [AbelianContext::trivial(1)], true).unwrap();
        let sum = sum_context_poset(&p1, &p2, &[]).unwrap();
        let bundle = SumTranslationBundle::new(
            Arc::new(SpectralPoset::new(p1).unwrap()),
            Arc::new(SpectralPoset::new(sum).unwrap()),
            1,
        ).unwrap();
        let a1 = random_hermitian(2, &mut r);
        let a2 = random_hermitian(1, &mut r);
        prop_assert!(sum_translation(&a1, &a2, &bundle).unwrap().equal);
    }

    #[test]
    fn factor_subalgebra_ampliates_into_w(seed in any::<u64>()) {
        let mut r = rng(seed);
        let (n1, n2) = (2, 2);
        let w = if seed % 2 == 0 {
            random_context(n1 * n2, r.gen_range(1..=4), &mut r)
        } else {
            ampliate(&random_context(n1, r.gen_range(1..=2), &mut r), n2)
        };
        let v = largest_factor_subalgebra(&w, n1, n2).unwrap();
        prop_assert!(includes(&ampliate(&v, n2), &w).unwrap());
    }

    #[test]
    fn no_gap_on_image_contexts(seed in any::<u64>(), n1 in 1usize..=3, n2 in 1usize..=3) {
        let mut r = rng(seed);
        let a1 = random_hermitian(n1, &mut r);
        let w = ampliate(&random_context(n1, r.gen_range(1..=n1), &mut r), n2);
        let g = entanglement_gap(&a1, &w, n2, RESIDUAL_TOL).unwrap();
        prop_assert!(g.equal, "gap {}", g.gap_norm);
        prop_assert!(g.gap_norm <= 1e3 * EPS);
    }
}
