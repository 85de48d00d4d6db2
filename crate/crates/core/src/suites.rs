//! Property suites behind `check` and the acceptance tests.
//!
//! Each suite is one acceptance criterion. Everything is seeded, so a given
//! [`SuiteConfig`] always produces the same report.

use std::collections::BTreeSet;
use std::fmt;
use std::sync::Arc;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::compose::{
    composite_context_poset, documented_witness_context, gap_search, product_context_gap, sum_context_poset,
    sum_poset, sum_translation, tensor_translation, ComposeError, GapFamily, GapSearchConfig, SumTranslationBundle,
    TensorTranslationBundle,
};
use crate::contexts::{
    ampliate, ampliate_left, context_from_basis, contexts_closed_under_coarsening, generate_context_poset,
    random_context, tensor_product, AbelianContext, ContextError, ContextPoset,
};
use crate::linalg::{
    qubit, random_degenerate_hermitian, random_hermitian, eigendecompose, ComplexMatrix, HermitianOperator,
    LinalgError, ProjectionOperator, RESIDUAL_TOL,
};
use crate::quantum::{
    daseinised_arrow, inner_das_mask, inner_das_projection, oracle, outer_das_mask, outer_das_operator,
    outer_das_projection, proposition_subobject, truth_value, QuantityValuePresheaf, QuantumError, SpectralPoset,
};
use crate::systems::{
    check_classical_square, check_sys_axioms, classical_pullback_proposition, classical_pullback_quantity,
    demo_bases, generated_classical_arrows, System,
};
use crate::topos::{
    enumerate_subobjects, inverse_image_transformation, omega, posets_up_to_iso, FinitePoset, Omega, Presheaf,
    Subobject, ToposError,
};

/// Failures kept verbatim per criterion; the rest are only counted.
const MAX_LISTED_FAILURES: usize = 20;

#[derive(Debug, Error)]
pub enum SuiteError {
    #[error(transparent)]
    Compose(#[from] ComposeError),
    #[error(transparent)]
    Quantum(#[from] QuantumError),
    #[error(transparent)]
    Context(#[from] ContextError),
    #[error(transparent)]
    Topos(#[from] ToposError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    System(#[from] crate::systems::SystemError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Suite {
    Oracle,
    Lemma,
    Sum,
    Tensor,
    Gap,
    Heyting,
    Classical,
    Sys,
    Trivial,
    Truth,
}

impl Suite {
    pub const ALL: [Suite; 10] = [
        Suite::Oracle,
        Suite::Lemma,
        Suite::Sum,
        Suite::Tensor,
        Suite::Gap,
        Suite::Heyting,
        Suite::Classical,
        Suite::Sys,
        Suite::Trivial,
        Suite::Truth,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Suite::Oracle => "oracle",
            Suite::Lemma => "lemma",
            Suite::Sum => "sum",
            Suite::Tensor => "tensor",
            Suite::Gap => "gap",
            Suite::Heyting => "heyting",
            Suite::Classical => "classical",
            Suite::Sys => "sys",
            Suite::Trivial => "trivial",
            Suite::Truth => "truth",
        }
    }

    /// `"all"` expands to every suite.
    pub fn parse(s: &str) -> Option<Vec<Suite>> {
        if s == "all" {
            return Some(Self::ALL.to_vec());
        }
        Self::ALL.iter().copied().find(|x| x.name() == s).map(|x| vec![x])
    }

    pub fn criterion(self) -> u8 {
        Self::ALL.iter().position(|&x| x == self).expect("listed") as u8 + 1
    }

    pub fn title(self) -> &'static str {
        match self {
            Suite::Oracle => "daseinisation matches the brute-force lattice extremum",
            Suite::Lemma => "daseinisation commutes with direct sums",
            Suite::Sum => "sum translation reproduces the daseinised arrow exactly",
            Suite::Tensor => "tensor translation corresponds to δ(A1)_{V_W} ⊗ 1",
            Suite::Gap => "entanglement gap witness found, none on product contexts",
            Suite::Heyting => "topos laws on all posets with at most 6 elements",
            Suite::Classical => "classical squares and proposition pullbacks commute",
            Suite::Sys => "unit, associativity, commutativity and distributivity isos",
            Suite::Trivial => "the one-dimensional system has a one-point topos",
            Suite::Truth => "truth values of eigenstates and superpositions",
        }
    }

    /// Wall-clock budget in milliseconds, if the criterion sets one.
    pub fn budget_ms(self) -> Option<f64> {
        match self {
            Suite::Oracle | Suite::Lemma | Suite::Sum | Suite::Heyting => Some(5_000.0),
            Suite::Tensor | Suite::Gap => Some(10_000.0),
            Suite::Classical | Suite::Sys | Suite::Truth => Some(1_000.0),
            Suite::Trivial => None,
        }
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Debug)]
pub struct SuiteConfig {
    pub seed: u64,
    pub tol: f64,
    /// Adds `ε·1` to `A1⊕A2` in the lemma suite (a constructed negative).
    pub perturb: Option<f64>,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            tol: RESIDUAL_TOL,
            perturb: None,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct CriterionResult {
    pub criterion: u8,
    pub suite: Suite,
    pub title: String,
    pub passed: bool,
    pub cases: usize,
    pub max_residual: Option<f64>,
    pub elapsed_ms: f64,
    pub budget_ms: Option<f64>,
    pub notes: Vec<String>,
    pub failure_count: usize,
    pub failures: Vec<String>,
}

impl CriterionResult {
    /// `PASS criterion 3 [sum] ...` style summary line.
    pub fn line(&self) -> String {
        let verdict = if self.passed { "PASS" } else { "FAIL" };
        let residual = self.max_residual.map(|r| format!(", max residual {r:.3e}")).unwrap_or_default();
        let budget = self.budget_ms.map(|b| format!(" / {:.0} ms", b)).unwrap_or_default();
        format!(
            "{verdict} criterion {} [{}] {}: {} cases{residual}, {:.1} ms{budget}",
            self.criterion, self.suite, self.title, self.cases, self.elapsed_ms
        )
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct SuiteReport {
    pub seed: u64,
    pub tol: f64,
    pub passed: bool,
    pub results: Vec<CriterionResult>,
}

#[derive(Default)]
struct Outcome {
    cases: usize,
    max_residual: Option<f64>,
    notes: Vec<String>,
    failure_count: usize,
    failures: Vec<String>,
}

impl Outcome {
    fn fail(&mut self, msg: impl Into<String>) {
        self.failure_count += 1;
        if self.failures.len() < MAX_LISTED_FAILURES {
            self.failures.push(msg.into());
        }
    }

    fn residual(&mut self, r: f64) {
        self.max_residual = Some(self.max_residual.map_or(r, |m| m.max(r)));
    }

    /// Records `r` and fails with `what` if it exceeds `tol`.
    fn within(&mut self, r: f64, tol: f64, what: impl FnOnce() -> String) {
        self.residual(r);
        if r.is_nan() || r > tol {
            self.fail(format!("{}: residual {r:.3e}", what()));
        }
    }

    fn expect(&mut self, ok: bool, what: impl FnOnce() -> String) {
        if !ok {
            self.fail(what());
        }
    }

    fn laws(&mut self, failures: Vec<String>, context: &str) {
        for f in failures {
            self.fail(format!("{context}: {f}"));
        }
    }
}

pub fn run_suite(suite: Suite, config: &SuiteConfig) -> CriterionResult {
    let start = Instant::now();
    let outcome = match suite {
        Suite::Oracle => oracle_suite(config),
        Suite::Lemma => lemma_suite(config),
        Suite::Sum => sum_suite(config),
        Suite::Tensor => tensor_suite(config),
        Suite::Gap => gap_suite(config),
        Suite::Heyting => topos_suite(config),
        Suite::Classical => classical_suite(),
        Suite::Sys => sys_suite(),
        Suite::Trivial => trivial_suite(),
        Suite::Truth => truth_suite(config),
    };
    let elapsed_ms = start.elapsed().as_secs_f64() * 1e3;
    let mut o = outcome.unwrap_or_else(|e| {
        let mut o = Outcome::default();
        o.fail(format!("error: {e}"));
        o
    });
    let budget_ms = suite.budget_ms();
    if let Some(b) = budget_ms {
        if elapsed_ms >= b {
            o.fail(format!("took {elapsed_ms:.0} ms, budget {b:.0} ms"));
        }
    }
    CriterionResult {
        criterion: suite.criterion(),
        suite,
        title: suite.title().to_string(),
        passed: o.failure_count == 0 && o.cases > 0,
        cases: o.cases,
        max_residual: o.max_residual,
        elapsed_ms,
        budget_ms,
        notes: o.notes,
        failure_count: o.failure_count,
        failures: o.failures,
    }
}

pub fn run_suites(suites: &[Suite], config: &SuiteConfig) -> SuiteReport {
    let results: Vec<CriterionResult> = suites.iter().map(|&s| run_suite(s, config)).collect();
    SuiteReport {
        seed: config.seed,
        tol: config.tol,
        passed: results.iter().all(|r| r.passed),
        results,
    }
}

fn rng_for(config: &SuiteConfig, suite: Suite) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(suite.criterion() as u64);
    rng
}

fn random_merge<R: Rng>(u: &AbelianContext, k: usize, rng: &mut R) -> AbelianContext {
    let n = u.num_blocks();
    let mut label: Vec<usize> = (0..n).map(|i| if i < k { i } else { rng.gen_range(0..k) }).collect();
    rand::seq::SliceRandom::shuffle(label.as_mut_slice(), rng);
    let blocks: Vec<Vec<usize>> = (0..k).map(|b| (0..n).filter(|&i| label[i] == b).collect()).collect();
    u.merge(&blocks)
}

fn random_operator<R: Rng>(n: usize, variant: usize, basis: &AbelianContext, rng: &mut R) -> HermitianOperator {
    match variant % 3 {
        0 => random_hermitian(n, rng),
        1 => random_degenerate_hermitian(n, rng),
        _ => {
            let values: Vec<f64> = (0..basis.num_blocks()).map(|_| rng.gen_range(-2..=2) as f64).collect();
            basis.operator_from_values(&values)
        }
    }
}

fn vx() -> AbelianContext {
    let h = 0.5f64.sqrt();
    context_from_basis(&ComplexMatrix::from_real(2, &[h, h, h, -h]))
}

fn bell() -> AbelianContext {
    let h = 0.5f64.sqrt();
    context_from_basis(&ComplexMatrix::from_real(
        4,
        &[h, 0.0, 0.0, h, 0.0, h, h, 0.0, 0.0, h, -h, 0.0, h, 0.0, 0.0, -h],
    ))
}

fn qubit_poset() -> Result<ContextPoset, ContextError> {
    generate_context_poset(2, &[qubit::sigma_z(), qubit::sigma_x(), qubit::sigma_y()], true)
}

fn oracle_suite(config: &SuiteConfig) -> Result<Outcome, SuiteError> {
    let mut rng = rng_for(config, Suite::Oracle);
    let mut o = Outcome::default();
    let (mut projection_pairs, mut operator_pairs) = (0, 0);
    for n in 2..=4 {
        for i in 0..80 {
            let u = random_context(n, n, &mut rng);
            let k = rng.gen_range(1..=n.min(5));
            let v = if i % 2 == 0 { random_merge(&u, k, &mut rng) } else { random_context(n, k, &mut rng) };

            let p = u.projection_sum(rng.gen_range(0..1u64 << n));
            let (inner, outer) = (inner_das_mask(&p, &v)?, outer_das_mask(&p, &v)?);
            let (oi, oo) = (oracle::inner_projection(&p, &v), oracle::outer_projection(&p, &v));
            o.expect(inner == oi, || format!("C^{n} case {i}: inner mask {inner:b} vs oracle {oi:b}"));
            o.expect(outer == oo, || format!("C^{n} case {i}: outer mask {outer:b} vs oracle {oo:b}"));
            o.within(inner_das_projection(&p, &v)?.matrix().distance(v.projection_sum(oi).matrix()), config.tol, || {
                format!("C^{n} case {i}: inner projection")
            });
            o.within(outer_das_projection(&p, &v)?.matrix().distance(v.projection_sum(oo).matrix()), config.tol, || {
                format!("C^{n} case {i}: outer projection")
            });
            projection_pairs += 1;

            let a = random_operator(n, i / 2, &u, &mut rng);
            let das = outer_das_operator(&a, &v)?;
            match oracle::outer_operator(&a, &v) {
                Some(values) => {
                    let r = das.values().iter().zip(&values).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
                    o.within(r, config.tol, || format!("C^{n} case {i}: operator values"));
                    o.within(das.operator().matrix().distance(v.operator_from_values(&values).matrix()), config.tol, || {
                        format!("C^{n} case {i}: operator")
                    });
                }
                None => o.fail(format!("C^{n} case {i}: no least dominating operator in V")),
            }
            let via_inner = oracle::outer_operator_via_inner(&a, &v);
            let r = das.values().iter().zip(&via_inner).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
            o.within(r, config.tol, || format!("C^{n} case {i}: values via inner daseinisation"));
            operator_pairs += 1;
        }
    }
    o.cases = projection_pairs + operator_pairs;
    o.notes.push(format!("{projection_pairs} (P, V) pairs and {operator_pairs} (A, V) pairs on C^2, C^3, C^4"));
    Ok(o)
}

fn lemma_suite(config: &SuiteConfig) -> Result<Outcome, SuiteError> {
    let mut rng = rng_for(config, Suite::Lemma);
    let mut o = Outcome::default();
    let run = |o: &mut Outcome, a1: &HermitianOperator, a2: &HermitianOperator, v1: &AbelianContext, v2: &AbelianContext, label: String| -> Result<(), SuiteError> {
        let mut sum = a1.direct_sum(a2);
        if let Some(eps) = config.perturb {
            let n = sum.dim();
            sum = HermitianOperator::new(sum.matrix() + &ComplexMatrix::identity(n).scale(eps))?;
        }
        let r = crate::compose::lemma_residual_for(&sum, a1, a2, v1, v2)?;
        o.within(r, config.tol, || label);
        o.cases += 1;
        Ok(())
    };
    run(
        &mut o,
        &qubit::sigma_z(),
        &HermitianOperator::diagonal(&[3.0]),
        &AbelianContext::diagonal(2),
        &AbelianContext::trivial(1),
        "σ_z ⊕ [3] on V_z ⊕ C1".into(),
    )?;
    for i in 0..100 {
        let n2 = if i < 50 { 2 } else { 3 };
        let u1 = random_context(2, 2, &mut rng);
        let u2 = random_context(n2, n2, &mut rng);
        let a1 = random_operator(2, i, &u1, &mut rng);
        let a2 = random_operator(n2, i + 1, &u2, &mut rng);
        let k1 = rng.gen_range(1..=2);
        let k2 = rng.gen_range(1..=n2);
        let v1 = if i % 4 == 0 { random_merge(&u1, k1, &mut rng) } else { random_context(2, k1, &mut rng) };
        let v2 = if i % 4 == 1 { random_merge(&u2, k2, &mut rng) } else { random_context(n2, k2, &mut rng) };
        run(&mut o, &a1, &a2, &v1, &v2, format!("C^2⊕C^{n2} case {i}"))?;
    }
    if let Some(eps) = config.perturb {
        o.notes.push(format!("A1⊕A2 perturbed by {eps:e}·1"));
    }
    Ok(o)
}

fn spaces_for_sum(
    poset1: ContextPoset,
    poset2: &ContextPoset,
    extra: &[AbelianContext],
) -> Result<SumTranslationBundle, SuiteError> {
    let sum = sum_context_poset(&poset1, poset2, extra)?;
    let n2 = poset2.dim();
    let space1 = Arc::new(SpectralPoset::new(poset1)?);
    let space_sum = Arc::new(SpectralPoset::new(sum)?);
    Ok(SumTranslationBundle::new(space1, space_sum, n2)?)
}

fn sum_suite(config: &SuiteConfig) -> Result<Outcome, SuiteError> {
    let mut rng = rng_for(config, Suite::Sum);
    let mut o = Outcome::default();

    // {trivial, V_z} into C^2 ⊕ C^1
    let small = ContextPoset::from_contexts(2, [AbelianContext::diagonal(2)], true)?;
    let small_sum = sum_poset(&small, 1)?;
    let bundle = SumTranslationBundle::new(
        Arc::new(SpectralPoset::new(small)?),
        Arc::new(SpectralPoset::new(small_sum)?),
        1,
    )?;
    o.laws(bundle.check().failures, "bundle {trivial, V_z}");
    let t = sum_translation(&qubit::sigma_z(), &HermitianOperator::diagonal(&[3.0]), &bundle)?;
    o.expect(t.equal, || "σ_z, [3]: tables differ".into());
    o.cases += 1;

    let mut bundle: Option<SumTranslationBundle> = None;
    let mut stages = BTreeSet::new();
    for i in 0..50 {
        if i % 10 == 0 {
            let p1 = contexts_closed_under_coarsening(
                2,
                [AbelianContext::diagonal(2), vx(), random_context(2, 2, &mut rng)],
                true,
            )?;
            let p2 = contexts_closed_under_coarsening(2, [AbelianContext::diagonal(2), random_context(2, 2, &mut rng)], true)?;
            let k = rng.gen_range(2..=4);
            let b = spaces_for_sum(p1, &p2, &[random_context(4, k, &mut rng)])?;
            o.laws(b.check().failures, &format!("bundle {}", i / 10));
            stages.insert((b.space1().len(), b.space_sum().len()));
            bundle = Some(b);
        }
        let b = bundle.as_ref().expect("built at i = 0");
        let u = random_context(2, 2, &mut rng);
        let a1 = random_operator(2, i, &u, &mut rng);
        let a2 = random_operator(2, i + 1, &u, &mut rng);
        let t = sum_translation(&a1, &a2, b)?;
        o.expect(t.equal, || format!("pair {i}: β∘μ*(δ̆⟨A1,A2⟩)∘φ differs from δ̆(A1)"));
        o.laws(t.translated.check(b.space1()).failures, &format!("pair {i}"));
        o.cases += 1;
    }
    o.notes.push(format!("(|poset1|, |poset sum|) used: {stages:?}"));

    // identity arrow and the chain H1 → H1⊕H2 → H1⊕H2⊕H3
    let p1 = qubit_poset()?;
    let p2 = contexts_closed_under_coarsening(2, [AbelianContext::diagonal(2), vx()], true)?;
    let p3 = ContextPoset::from_contexts(1, std::iter::empty(), true)?;
    let p12 = sum_context_poset(&p1, &p2, &[])?;
    let p123 = sum_context_poset(&p12, &p3, &[])?;
    let s1 = Arc::new(SpectralPoset::new(p1)?);
    let s12 = Arc::new(SpectralPoset::new(p12)?);
    let s123 = Arc::new(SpectralPoset::new(p123)?);
    let first = SumTranslationBundle::new(s1.clone(), s12.clone(), 2)?;
    let second = SumTranslationBundle::new(s12.clone(), s123.clone(), 1)?;
    let direct = SumTranslationBundle::new(s1.clone(), s123.clone(), 3)?;
    let identity = SumTranslationBundle::identity(s1.clone())?;
    for b in [&first, &second, &direct, &identity] {
        o.laws(b.check().failures, "chain bundle");
    }
    for i in 0..5 {
        let u = random_context(2, 2, &mut rng);
        let a1 = random_operator(2, i, &u, &mut rng);
        let a2 = random_hermitian(2, &mut rng);
        let a3 = HermitianOperator::diagonal(&[rng.gen_range(-3.0..3.0)]);
        let whole = daseinised_arrow(&a1.direct_sum(&a2).direct_sum(&a3), &s123)?;
        let expected = daseinised_arrow(&a1, &s1)?.table().key();
        let middle = second.pull(whole.table())?;
        o.expect(middle.key() == daseinised_arrow(&a1.direct_sum(&a2), &s12)?.table().key(), || {
            format!("chain {i}: first step differs from δ̆(A1⊕A2)")
        });
        let stepwise = first.pull(&middle)?;
        let at_once = direct.pull(whole.table())?;
        o.expect(stepwise.key() == at_once.key(), || format!("chain {i}: stepwise and composite translations differ"));
        o.expect(at_once.key() == expected, || format!("chain {i}: composite translation differs from δ̆(A1)"));
        let arrow = daseinised_arrow(&a1, &s1)?;
        o.expect(identity.pull(arrow.table())?.key() == expected, || format!("chain {i}: identity translation moved δ̆(A1)"));
        o.cases += 1;
    }
    o.notes.push(format!(
        "chain posets have {}, {}, {} contexts",
        s1.len(),
        s12.len(),
        s123.len()
    ));
    Ok(o)
}

fn tensor_suite(config: &SuiteConfig) -> Result<Outcome, SuiteError> {
    let mut rng = rng_for(config, Suite::Tensor);
    let mut o = Outcome::default();
    let p = contexts_closed_under_coarsening(2, [AbelianContext::diagonal(2), vx()], true)?;
    let entangled = [bell(), documented_witness_context(), random_context(4, 3, &mut rng)];
    let poset_w = composite_context_poset(&p, &p, &entangled)?;
    let vz = AbelianContext::diagonal(2);
    let product = tensor_product(&vz, &vz);
    let image = ampliate(&vz, 2);
    let bell_index = poset_w.index_of(&bell());
    o.expect(poset_w.len() >= 10, || format!("poset has only {} contexts", poset_w.len()));
    o.expect(poset_w.index_of(&product).is_some(), || "V_z⊗V_z missing".into());
    o.expect(poset_w.index_of(&image).is_some(), || "V_z⊗C1 missing".into());
    o.expect(bell_index.is_some(), || "Bell context missing".into());
    let space_w = Arc::new(SpectralPoset::new(poset_w)?);
    let bundle = TensorTranslationBundle::new(space_w.clone(), 2, 2)?;
    o.laws(bundle.check().failures, "bundle");
    o.notes.push(format!(
        "{} contexts on C^2⊗C^2, {} on C^2; φ(p1) epic: {}",
        space_w.len(),
        bundle.space1().len(),
        bundle.phi_is_epic()
    ));

    let mut ops = vec![qubit::sigma_z(), qubit::sigma_x(), qubit::sigma_y(), HermitianOperator::identity(2)];
    for i in 0..10 {
        let u = random_context(2, 2, &mut rng);
        ops.push(random_operator(2, i, &u, &mut rng));
    }
    for (i, a1) in ops.iter().enumerate() {
        let t = tensor_translation(a1, &bundle)?;
        for (w, &r) in t.stage_residuals.iter().enumerate() {
            o.within(r, config.tol, || format!("operator {i}, stage {}", space_w.contexts().id(w)));
        }
        for &(w, r) in &t.image_residuals {
            o.within(r, config.tol, || format!("operator {i}, image stage {} against δ(A1⊗1)", space_w.contexts().id(w)));
        }
        o.laws(t.table_report.failures, &format!("operator {i}"));
        if let Some(b) = bell_index {
            let top = a1.max_eigenvalue();
            for f in t.table.component(b) {
                let v = f.value(b).unwrap_or(f64::NAN);
                o.within((v - top).abs(), config.tol, || format!("operator {i}: Bell stage value"));
            }
        }
        o.cases += space_w.len();
    }

    // H1 ⊗ C^1: the translation is δ̆(A1) itself
    let s1 = Arc::new(SpectralPoset::new(qubit_poset()?)?);
    let one = TensorTranslationBundle::new(s1.clone(), 2, 1)?;
    for (i, a1) in ops.iter().enumerate().take(4) {
        let t = one.pull(daseinised_arrow(a1, one.space1())?.table())?;
        o.expect(t.key() == daseinised_arrow(a1, &s1)?.table().key(), || format!("operator {i}: H⊗C^1 translation moved δ̆(A1)"));
        o.cases += 1;
    }

    // C^2 → C^2⊗C^2 → (C^2⊗C^2)⊗C^2 against C^2 → C^2⊗(C^2⊗C^2)
    let zz = tensor_product(&vz, &vz);
    let seeds = [
        ampliate(&zz, 2),
        ampliate_left(2, &tensor_product(&vx(), &vz)),
        ampliate(&bell(), 2),
        tensor_product(&vx(), &AbelianContext::diagonal(4).merge(&[vec![0, 3], vec![1], vec![2]])),
    ];
    let poset_u = contexts_closed_under_coarsening(8, seeds, true)?;
    let space_u = Arc::new(SpectralPoset::new(poset_u)?);
    let outer = TensorTranslationBundle::new(space_u.clone(), 4, 2)?;
    let inner = TensorTranslationBundle::new(outer.space1().clone(), 2, 2)?;
    let direct = TensorTranslationBundle::new(space_u.clone(), 2, 4)?;
    for b in [&outer, &inner, &direct] {
        o.laws(b.check().failures, "chain bundle");
    }
    for (i, a1) in ops.iter().enumerate().take(6) {
        let stepwise = outer.pull(&inner.pull(daseinised_arrow(a1, inner.space1())?.table())?)?;
        let at_once = direct.pull(daseinised_arrow(a1, direct.space1())?.table())?;
        o.expect(stepwise.key() == at_once.key(), || format!("operator {i}: stepwise and composite translations differ"));
        let t = tensor_translation(a1, &direct)?;
        o.within(t.max_stage_residual(), config.tol, || format!("operator {i}: C^8 stage operators"));
        o.cases += 1;
    }
    o.notes.push(format!("chain poset on C^8 has {} contexts", space_u.len()));
    Ok(o)
}

fn gap_suite(config: &SuiteConfig) -> Result<Outcome, SuiteError> {
    let mut o = Outcome::default();
    let a1 = qubit::sigma_z();
    let documented = gap_search(&a1, &GapSearchConfig { tol: config.tol, ..GapSearchConfig::qubits(vec![GapFamily::Documented], config.seed) })?;
    let witness = documented_witness_context();
    let hit = documented.witnesses.iter().find(|w| w.w == witness);
    o.expect(documented.witnesses.iter().any(|w| w.gap_norm >= 1.0), || "no witness with gapNorm ≥ 1".into());
    match hit {
        Some(w) => o.notes.push(format!("alg{{P+⊗P+, P−⊗P_x+}}: gapNorm {:.6}", w.gap_norm)),
        None => o.fail("alg{P+⊗P+, P−⊗P_x+} is not among the witnesses"),
    }
    o.notes.push(format!(
        "documented family: {} contexts, {} witnesses",
        documented.contexts_searched,
        documented.witnesses.len()
    ));
    o.cases += documented.contexts_searched;

    let product = gap_search(&a1, &GapSearchConfig { tol: config.tol, ..GapSearchConfig::qubits(vec![GapFamily::ProductOnly], config.seed) })?;
    o.expect(product.witnesses.is_empty(), || format!("product-only search returned {} witnesses", product.witnesses.len()));
    o.cases += product.contexts_searched;

    let mixed = GapSearchConfig::qubits(vec![GapFamily::Controlled, GapFamily::Entangled], config.seed);
    let first = serde_json::to_string(&gap_search(&a1, &mixed)?).expect("serialisable");
    let second = serde_json::to_string(&gap_search(&a1, &mixed)?).expect("serialisable");
    o.expect(first == second, || "gap_search is not deterministic for a fixed seed".into());

    let mut rng = rng_for(config, Suite::Gap);
    let p1 = contexts_closed_under_coarsening(2, [AbelianContext::diagonal(2), vx(), random_context(2, 2, &mut rng)], true)?;
    let p2 = contexts_closed_under_coarsening(2, [AbelianContext::diagonal(2), random_context(2, 2, &mut rng)], true)?;
    let mut worst: f64 = 0.0;
    let mut count = 0;
    for a in [qubit::sigma_z(), qubit::sigma_x(), random_hermitian(2, &mut rng)] {
        let (n, g) = product_context_gap(&a, &p1, &p2)?;
        worst = worst.max(g);
        count += n;
    }
    o.notes.push(format!("product contexts V1⊗V2: {count} checked, largest gap {worst:.3e}"));
    Ok(o)
}

fn truncation(poset: &FinitePoset, cap: usize) -> Presheaf {
    let sizes: Vec<usize> = (0..poset.len()).map(|v| cap.min(poset.down_set(v).len())).collect();
    let s = sizes.clone();
    Presheaf::from_fn(poset.clone(), sizes, move |_, small, x| x.min(s[small] - 1))
}

/// Distributivity, adjunction and the negation laws on one finite Heyting
/// algebra given by operation tables over `0..len`.
struct Tables {
    leq: Vec<Vec<bool>>,
    meet: Vec<Vec<usize>>,
    join: Vec<Vec<usize>>,
    implies: Vec<Vec<usize>>,
    top: usize,
    bottom: usize,
}

impl Tables {
    fn check(&self, o: &mut Outcome, label: &str) -> usize {
        let n = self.leq.len();
        let mut count = 0;
        for a in 0..n {
            let not_a = self.implies[a][self.bottom];
            o.expect(self.implies[a][a] == self.top, || format!("{label}: a⇒a ≠ ⊤"));
            o.expect(self.meet[a][not_a] == self.bottom, || format!("{label}: a∧¬a ≠ ⊥"));
            o.expect(self.leq[a][self.implies[not_a][self.bottom]], || format!("{label}: a ≰ ¬¬a"));
            o.expect(self.meet[a][self.top] == a && self.join[a][self.bottom] == a, || format!("{label}: units"));
            for b in 0..n {
                o.expect(self.leq[self.meet[a][b]][a] && self.leq[a][self.join[a][b]], || format!("{label}: lattice bounds"));
                for c in 0..n {
                    let d1 = self.meet[a][self.join[b][c]] == self.join[self.meet[a][b]][self.meet[a][c]];
                    let d2 = self.join[a][self.meet[b][c]] == self.meet[self.join[a][b]][self.join[a][c]];
                    let adj = self.leq[self.meet[c][a]][b] == self.leq[c][self.implies[a][b]];
                    if !(d1 && d2 && adj) {
                        o.fail(format!("{label}: distributivity or adjunction fails at ({a}, {b}, {c})"));
                    }
                    count += 1;
                }
            }
        }
        count
    }
}

fn sieve_laws(poset: &FinitePoset, om: &Omega, o: &mut Outcome, label: &str) -> usize {
    o.laws(om.presheaf().check().failures, &format!("{label}: Ω"));
    let mut count = 0;
    for v in 0..poset.len() {
        let sieves = om.sieves(v);
        let find = |o: &mut Outcome, s: Result<crate::topos::Sieve, ToposError>| -> usize {
            match s.map(|s| om.index_of(&s)) {
                Ok(Some(i)) => i,
                _ => {
                    o.fail(format!("{label}: operation left Ω at stage {v}"));
                    0
                }
            }
        };
        for s in sieves {
            o.expect(s.is_well_formed(poset), || format!("{label}: ill-formed sieve at {v}"));
            for u in poset.down_set(v) {
                o.expect(om.index_of(&s.restrict(poset, u)).is_some(), || format!("{label}: restriction leaves Ω"));
            }
        }
        let n = sieves.len();
        let mut t = Tables {
            leq: vec![vec![false; n]; n],
            meet: vec![vec![0; n]; n],
            join: vec![vec![0; n]; n],
            implies: vec![vec![0; n]; n],
            top: om.maximal_index(v),
            bottom: om.index_of(&crate::topos::Sieve::empty(v)).unwrap_or(0),
        };
        for a in 0..n {
            for b in 0..n {
                let (x, y) = (&sieves[a], &sieves[b]);
                t.leq[a][b] = x.is_subset(y);
                t.meet[a][b] = find(o, x.meet(y));
                t.join[a][b] = find(o, x.join(y));
                t.implies[a][b] = find(o, x.implies(y, poset));
            }
        }
        count += t.check(o, &format!("{label}, sieves at {v}"));
    }
    count
}

fn subobject_laws(ambient: &Arc<Presheaf>, om: &Omega, o: &mut Outcome, label: &str) -> Result<usize, SuiteError> {
    o.laws(ambient.check().failures, label);
    let Some(subs) = enumerate_subobjects(ambient, 1 << 16) else {
        o.notes.push(format!("{label}: subobject space too large, skipped"));
        return Ok(0);
    };
    let n = subs.len();
    let index = |s: &Subobject| subs.iter().position(|t| t == s);
    let mut t = Tables {
        leq: vec![vec![false; n]; n],
        meet: vec![vec![0; n]; n],
        join: vec![vec![0; n]; n],
        implies: vec![vec![0; n]; n],
        top: index(&Subobject::top(ambient.clone())).unwrap_or(0),
        bottom: index(&Subobject::bottom(ambient.clone())).unwrap_or(0),
    };
    for (a, x) in subs.iter().enumerate() {
        o.laws(x.check().failures, label);
        let chi = x.characteristic(om);
        o.laws(chi.check().failures, &format!("{label}: χ"));
        o.expect(Subobject::from_characteristic(&chi, om)? == *x, || format!("{label}: χ does not round-trip"));
        let incl = x.inclusion();
        o.expect(incl.is_natural() && incl.is_monic(), || format!("{label}: inclusion is not a natural monic"));
        for (b, y) in subs.iter().enumerate() {
            t.leq[a][b] = x.leq(y)?;
            let mut find = |s: Subobject, what: &str| {
                index(&s).unwrap_or_else(|| {
                    o.fail(format!("{label}: {what} is not a subobject"));
                    0
                })
            };
            t.meet[a][b] = find(x.meet(y)?, "meet");
            t.join[a][b] = find(x.join(y)?, "join");
            t.implies[a][b] = find(x.implies(y)?, "implication");
        }
    }
    Ok(t.check(o, label))
}

fn monotone_maps(domain: &FinitePoset, codomain: &FinitePoset) -> Vec<Vec<usize>> {
    let (n, m) = (domain.len(), codomain.len());
    let total = m.pow(n as u32);
    (0..total)
        .map(|mut code| {
            (0..n)
                .map(|_| {
                    let x = code % m;
                    code /= m;
                    x
                })
                .collect::<Vec<_>>()
        })
        .filter(|map| domain.is_monotone(map, codomain).is_ok())
        .collect()
}

fn topos_suite(config: &SuiteConfig) -> Result<Outcome, SuiteError> {
    let mut o = Outcome::default();
    let mut posets = 0;
    let mut triples = 0;
    for n in 1..=6 {
        for (i, p) in posets_up_to_iso(n).iter().enumerate() {
            triples += sieve_laws(p, &omega(p), &mut o, &format!("poset {n}.{i}"));
            posets += 1;
        }
    }
    o.notes.push(format!("sieve algebras on {posets} posets (all up to isomorphism, 1 to 6 elements)"));

    let mut presheaves = 0;
    for n in 1..=4 {
        for (i, p) in posets_up_to_iso(n).iter().enumerate() {
            let om = omega(p);
            for (name, f) in [("1", Presheaf::terminal(p.clone())), ("T2", truncation(p, 2)), ("T3", truncation(p, 3))] {
                triples += subobject_laws(&Arc::new(f), &om, &mut o, &format!("Sub({name}) on poset {n}.{i}"))?;
                presheaves += 1;
            }
        }
    }
    o.notes.push(format!("subobject algebras of {presheaves} presheaves on posets with ≤ 4 elements"));

    // inverse images of subobject inclusions along every monotone map between posets with ≤ 3 elements
    let small: Vec<FinitePoset> = (1..=3).flat_map(posets_up_to_iso).collect();
    let mut pulled = 0;
    for d in &small {
        for c in &small {
            let f = Arc::new(truncation(c, 2));
            let subs = enumerate_subobjects(&f, 1 << 16).unwrap_or_default();
            for map in monotone_maps(d, c) {
                for s in &subs {
                    let m = inverse_image_transformation(&map, d, &s.inclusion())?;
                    o.expect(m.is_natural() && m.is_monic(), || format!("pullback along {map:?} is not a natural monic"));
                    pulled += 1;
                }
            }
        }
    }
    o.notes.push(format!("{pulled} inverse images of monics along monotone maps"));

    // spectral presheaves, δ̆(A) naturality, μ* and ν* on monics
    let mut rng = rng_for(config, Suite::Heyting);
    let qubits = Arc::new(SpectralPoset::new(qubit_poset()?)?);
    let (quantum, _) = demo_bases();
    let q3 = &quantum[2];
    let gens: Vec<HermitianOperator> = q3.generators().into_iter().map(|(_, a)| a).collect();
    let qutrit = Arc::new(SpectralPoset::new(generate_context_poset(3, &gens, true)?)?);
    let p = contexts_closed_under_coarsening(2, [AbelianContext::diagonal(2), vx()], true)?;
    let space_w = Arc::new(SpectralPoset::new(composite_context_poset(&p, &p, &[bell(), documented_witness_context()])?)?);
    let sum_bundle = spaces_for_sum(qubit_poset()?, &p, &[])?;
    let tensor_bundle = TensorTranslationBundle::new(space_w.clone(), 2, 2)?;
    let spaces = [qubits.clone(), qutrit, space_w.clone(), sum_bundle.space_sum().clone()];
    let mut arrows = 0;
    for space in &spaces {
        o.laws(space.sigma().check().failures, "Σ");
        let n = space.dim();
        let mut ops: Vec<HermitianOperator> = (0..3).map(|_| random_hermitian(n, &mut rng)).collect();
        ops.push(random_degenerate_hermitian(n, &mut rng));
        if n == 2 {
            ops.extend([qubit::sigma_x(), qubit::sigma_y(), qubit::sigma_z()]);
        }
        if n == 3 {
            ops.extend(gens.iter().cloned());
        }
        for a in &ops {
            let arrow = daseinised_arrow(a, space)?;
            let r = QuantityValuePresheaf::from_tables(space.base(), [arrow.table()]);
            o.laws(arrow.table().check(space).failures, "δ̆(A) table");
            o.laws(r.check(space.base()).failures, "R≽");
            let nt = arrow.table().to_natural_transformation(space, &r)?;
            o.laws(nt.check().failures, "δ̆(A)");
            arrows += 1;
        }
    }
    o.notes.push(format!("{arrows} daseinised arrows on {} context posets", spaces.len()));

    let mut concrete = 0;
    let sum_space = sum_bundle.space_sum();
    let mut projections: Vec<ProjectionOperator> = Vec::new();
    for _ in 0..6 {
        let u = random_context(4, 4, &mut rng);
        projections.push(u.projection_sum(rng.gen_range(1..15)));
    }
    projections.push(ProjectionOperator::identity(2).direct_sum(&ProjectionOperator::zero(2)));
    for q in &projections {
        let s = proposition_subobject(q, sum_space)?;
        let m = inverse_image_transformation(sum_bundle.m(), sum_bundle.space1().base(), &s.inclusion())?;
        o.expect(m.is_natural() && m.is_monic(), || "μ* of a proposition inclusion is not a natural monic".into());
        let s = proposition_subobject(q, &space_w)?;
        o.laws(s.check().failures, "proposition on C^2⊗C^2");
        concrete += 1;
    }
    for _ in 0..6 {
        let u = random_context(2, 2, &mut rng);
        let q = u.projections()[0].clone();
        let s = proposition_subobject(&q, tensor_bundle.space1())?;
        let m = inverse_image_transformation(tensor_bundle.n(), space_w.base(), &s.inclusion())?;
        o.expect(m.is_natural() && m.is_monic(), || "ν* of a proposition inclusion is not a natural monic".into());
        concrete += 1;
    }
    o.notes.push(format!("{concrete} proposition inclusions pulled back along m and n"));
    o.cases = triples + pulled + arrows + concrete;
    Ok(o)
}

fn classical_suite() -> Result<Outcome, SuiteError> {
    let mut o = Outcome::default();
    let (_, classical) = demo_bases();
    let arrows = generated_classical_arrows(&classical, 6);
    let mut propositions = 0;
    for j in &arrows {
        o.laws(j.check(), "arrow");
        o.laws(check_classical_square(j), "square");
        let Some(sigma) = j.state_map() else {
            o.fail(format!("{}: no state map", j.name()));
            continue;
        };
        let t = j.target().num_states();
        for mask in 0u32..1 << t {
            let k: BTreeSet<usize> = (0..t).filter(|&s| mask >> s & 1 == 1).collect();
            let pulled = classical_pullback_proposition(&k, j).unwrap_or_default();
            let preimage: BTreeSet<usize> = (0..sigma.len()).filter(|&s| k.contains(&sigma[s])).collect();
            let indicator: Vec<f64> = (0..t).map(|s| if k.contains(&s) { 1.0 } else { 0.0 }).collect();
            let via_quantity: BTreeSet<usize> = classical_pullback_quantity(&indicator, j)
                .unwrap_or_default()
                .iter()
                .enumerate()
                .filter(|(_, &x)| x == 1.0)
                .map(|(s, _)| s)
                .collect();
            o.expect(pulled == preimage && pulled == via_quantity, || format!("{}: pullback of {k:?}", j.name()));
            propositions += 1;
        }
        o.cases += 1 + j.translation().map().len();
    }
    o.notes.push(format!("{} arrows, {propositions} proposition pullbacks", arrows.len()));
    o.cases += propositions;
    Ok(o)
}

fn sys_suite() -> Result<Outcome, SuiteError> {
    let mut o = Outcome::default();
    let (quantum, classical) = demo_bases();
    for (kind, bases) in [("quantum", &quantum), ("classical", &classical)] {
        let report = check_sys_axioms(bases);
        for c in report.failures() {
            o.fail(format!("{kind}: {} on {}: {}", c.law, c.systems, c.detail));
        }
        let distributive = report
            .checks
            .iter()
            .filter(|c| c.law.starts_with("(S1⊔S2)◇S") && c.ok)
            .count();
        o.expect(distributive > 0, || format!("{kind}: no distributivity iso was verified"));
        o.notes.push(format!(
            "{kind}: {} isos verified ({distributive} right distributivity), {} skipped",
            report.checks.len(),
            report.skipped.len()
        ));
        o.cases += report.checks.len();
    }
    Ok(o)
}

fn trivial_suite() -> Result<Outcome, SuiteError> {
    let mut o = Outcome::default();
    let unit = System::quantum("C1", 1, [("c".into(), HermitianOperator::diagonal(&[2.5]))])?;
    let gens: Vec<HermitianOperator> = unit.generators().into_iter().map(|(_, a)| a).collect();
    for (label, gens) in [("with its generator", gens), ("without generators", Vec::new())] {
        let poset = generate_context_poset(1, &gens, true)?;
        if poset.len() != 1 {
            o.fail(format!("{label}: {} contexts", poset.len()));
            continue;
        }
        o.expect(poset.context(0).is_trivial(), || format!("{label}: the context is not C·1"));
        let space = SpectralPoset::new(poset)?;
        o.expect(space.sigma().sizes() == [1], || format!("{label}: Σ has sizes {:?}", space.sigma().sizes()));
        o.laws(space.sigma().check().failures, label);
        o.cases += 1;
    }
    o.expect(AbelianContext::diagonal(1) == AbelianContext::trivial(1), || "C^1 has two contexts".into());
    Ok(o)
}

fn truth_suite(config: &SuiteConfig) -> Result<Outcome, SuiteError> {
    let mut rng = rng_for(config, Suite::Truth);
    let mut o = Outcome::default();
    let qubits = SpectralPoset::new(qubit_poset()?)?;
    let z = qubits.contexts().index_of(&AbelianContext::diagonal(2)).expect("V_z generated");
    let triv = qubits.contexts().trivial_index().expect("augmented");
    let h = 0.5f64.sqrt();
    let plus = qubit::ket(&[h, h]);
    let s = truth_value(&qubit::p_plus(), &plus, z, &qubits)?;
    o.expect(s.members().iter().copied().eq([triv]), || format!("superposition gives {:?}", s.members()));
    o.cases += 1;

    let (quantum, _) = demo_bases();
    let gens: Vec<HermitianOperator> = quantum[2].generators().into_iter().map(|(_, a)| a).collect();
    let qutrit = SpectralPoset::new(generate_context_poset(3, &gens, true)?)?;
    let mut sieves = 0;
    let mut ops = vec![(&qubits, qubit::sigma_z()), (&qubits, qubit::sigma_x()), (&qubits, qubit::sigma_y())];
    ops.extend(gens.iter().map(|g| (&qutrit, g.clone())));
    ops.push((&qubits, random_hermitian(2, &mut rng)));
    ops.push((&qutrit, random_hermitian(3, &mut rng)));
    for (space, a) in &ops {
        for pair in eigendecompose(a) {
            let p = pair.projection;
            let j = (0..p.dim())
                .max_by(|&i, &k| p.matrix().entry(i, i).re.total_cmp(&p.matrix().entry(k, k).re))
                .expect("nonempty");
            let psi = crate::linalg::normalize(&crate::linalg::column(p.matrix(), j)).expect("nonzero column");
            for v in 0..space.len() {
                let s = truth_value(&p, &psi, v, space)?;
                o.expect(s.is_maximal(space.base()), || format!("eigenstate not totally true at {}", space.contexts().id(v)));
                o.expect(s.is_well_formed(space.base()), || "ill-formed sieve".into());
                sieves += 1;
            }
        }
    }
    for space in [&qubits, &qutrit] {
        let n = space.dim();
        for _ in 0..10 {
            let psi = crate::linalg::column(&crate::linalg::random_unitary(n, &mut rng), 0);
            let p = random_context(n, n, &mut rng).projection_sum(rng.gen_range(0..1u64 << n));
            for v in 0..space.len() {
                let s = truth_value(&p, &psi, v, space)?;
                o.expect(s.is_well_formed(space.base()), || "ill-formed sieve".into());
                sieves += 1;
            }
        }
    }
    o.cases += sieves;
    o.notes.push(format!("{sieves} sieves checked for down-closure"));
    Ok(o)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suite_names_round_trip() {
        for s in Suite::ALL {
            assert_eq!(Suite::parse(s.name()), Some(vec![s]));
        }
        assert_eq!(Suite::parse("all").map(|v| v.len()), Some(10));
        assert_eq!(Suite::parse("bogus"), None);
    }

    #[test]
    fn perturbed_lemma_fails_with_the_perturbation_as_residual() {
        let r = run_suite(Suite::Lemma, &SuiteConfig { perturb: Some(1e-3), ..SuiteConfig::default() });
        assert!(!r.passed);
        assert!((r.max_residual.unwrap() - 1e-3).abs() < 1e-9);
    }

    #[test]
    fn small_suites_pass() {
        for s in [Suite::Trivial, Suite::Sys, Suite::Classical, Suite::Truth] {
            let r = run_suite(s, &SuiteConfig::default());
            assert!(r.passed, "{}: {:?}", r.line(), r.failures);
        }
    }
}
