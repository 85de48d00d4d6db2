//! Translating physical-quantity arrows along the structure arrows of
//! `S1 ⊔ S2` (Hilbert space `H1⊕H2`) and `S1 ◇ S2` (Hilbert space `H1⊗H2`).
//!
//! On the sum side the translated arrow agrees with `δ̆(A1)` exactly. On the
//! composite side it corresponds stagewise to `δ(A1)_{V_W} ⊗ 1`, which can
//! differ from `δ(A1⊗1)_W` when `W` is not of product form.

use std::collections::BTreeSet;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::contexts::{
    ampliate, coarsenings, context_from_commuting, direct_sum_context, direct_sum_embed, largest_factor_subalgebra, random_context,
    tensor_product, AbelianContext, ContextError, ContextPoset, MAX_COARSENING_BLOCKS,
};
use crate::linalg::{qubit, ComplexMatrix, HermitianOperator, ProjectionOperator, MAX_DIM, RESIDUAL_TOL};
use crate::quantum::{
    daseinised_arrow, outer_das_operator, ArrowTable, OrderReversingFunction, QuantityValuePresheaf, QuantumError,
    SpectralPoset,
};
use crate::topos::{inverse_image, inverse_image_transformation, LawReport, NaturalTransformation, Presheaf, ToposError};

/// Gaps at or below this are not reported as witnesses.
pub const GAP_REPORT_THRESHOLD: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ComposeError {
    #[error("context {0} of the summand has no image in the sum poset")]
    MissingContext(String),
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("{0}")]
    Invariant(String),
    #[error(transparent)]
    Quantum(#[from] QuantumError),
    #[error(transparent)]
    Context(#[from] ContextError),
    #[error(transparent)]
    Topos(#[from] ToposError),
}

fn same_dim(left: usize, right: usize) -> Result<(), ComposeError> {
    if left == right {
        Ok(())
    } else {
        Err(ComposeError::DimensionMismatch { left, right })
    }
}

/// `max |δ(A1⊕A2)_{V1⊕V2} − δ(A1)_{V1} ⊕ δ(A2)_{V2}|` over matrix entries.
pub fn lemma_direct_sum_residual(
    a1: &HermitianOperator,
    a2: &HermitianOperator,
    v1: &AbelianContext,
    v2: &AbelianContext,
) -> Result<f64, ComposeError> {
    let sum = a1.direct_sum(a2);
    lemma_residual_for(&sum, a1, a2, v1, v2)
}

/// As [`lemma_direct_sum_residual`] with the left-hand operator supplied, so
/// a perturbed `A1⊕A2` can be fed in.
pub fn lemma_residual_for(
    sum: &HermitianOperator,
    a1: &HermitianOperator,
    a2: &HermitianOperator,
    v1: &AbelianContext,
    v2: &AbelianContext,
) -> Result<f64, ComposeError> {
    same_dim(a1.dim(), v1.dim())?;
    same_dim(a2.dim(), v2.dim())?;
    let v = direct_sum_context(v1, v2);
    let lhs = outer_das_operator(sum, &v)?;
    let rhs = outer_das_operator(a1, v1)?
        .operator()
        .direct_sum(outer_das_operator(a2, v2)?.operator());
    Ok(lhs.operator().matrix().distance(rhs.matrix()))
}

pub fn lemma_direct_sum_check(
    a1: &HermitianOperator,
    a2: &HermitianOperator,
    v1: &AbelianContext,
    v2: &AbelianContext,
) -> Result<bool, ComposeError> {
    Ok(lemma_direct_sum_residual(a1, a2, v1, v2)? <= RESIDUAL_TOL)
}

/// The data translating arrows on `H1⊕H2` back to `H1` along `i1`.
///
/// `m(V) = V ⊕ C1`, `φ` sends the character of `P` to that of `P ⊕ 0`, and
/// `β(ν)(V') = ν(m(V'))`.
#[derive(Clone, Debug)]
pub struct SumTranslationBundle {
    space1: Arc<SpectralPoset>,
    space_sum: Arc<SpectralPoset>,
    m: Vec<usize>,
    mu_sigma: Arc<Presheaf>,
    phi: NaturalTransformation,
    lambda0: Option<Vec<usize>>,
}

impl SumTranslationBundle {
    /// Bundle for `H1 → H1 ⊕ C^{n2}`.
    pub fn new(space1: Arc<SpectralPoset>, space_sum: Arc<SpectralPoset>, n2: usize) -> Result<Self, ComposeError> {
        same_dim(space1.dim() + n2, space_sum.dim())?;
        let zero = ProjectionOperator::zero(n2);
        Self::build(space1, space_sum, |v| direct_sum_embed(v, n2), |p| p.direct_sum(&zero), n2 > 0)
    }

    /// The bundle of an identity arrow: `m = id`, `φ = id`, `β = id`.
    pub fn identity(space: Arc<SpectralPoset>) -> Result<Self, ComposeError> {
        Self::build(space.clone(), space, AbelianContext::clone, ProjectionOperator::clone, false)
    }

    fn build(
        space1: Arc<SpectralPoset>,
        space_sum: Arc<SpectralPoset>,
        embed: impl Fn(&AbelianContext) -> AbelianContext,
        embed_projection: impl Fn(&ProjectionOperator) -> ProjectionOperator,
        has_lambda0: bool,
    ) -> Result<Self, ComposeError> {
        let mut m = Vec::with_capacity(space1.len());
        for (i, v) in space1.contexts().contexts().iter().enumerate() {
            let image = embed(v);
            let j = space_sum
                .contexts()
                .index_of(&image)
                .ok_or_else(|| ComposeError::MissingContext(space1.contexts().id(i)))?;
            m.push(j);
        }
        let mu_sigma = Arc::new(inverse_image(&m, space1.base(), space_sum.sigma())?);
        let mut components = Vec::with_capacity(space1.len());
        let mut lambda0 = Vec::with_capacity(space1.len());
        for (i, v) in space1.contexts().contexts().iter().enumerate() {
            let target = space_sum.context(m[i]);
            let comp = v
                .projections()
                .iter()
                .map(|p| {
                    target
                        .position_of(&embed_projection(p))
                        .ok_or_else(|| ComposeError::Invariant(format!("no image character at {}", space1.contexts().id(i))))
                })
                .collect::<Result<Vec<_>, _>>()?;
            if has_lambda0 {
                let hit: BTreeSet<usize> = comp.iter().copied().collect();
                let rest: Vec<usize> = (0..target.num_blocks()).filter(|j| !hit.contains(j)).collect();
                lambda0.push(rest);
            }
            components.push(comp);
        }
        let phi = NaturalTransformation::new(space1.sigma().clone(), mu_sigma.clone(), components);
        let lambda0 = has_lambda0.then(|| {
            lambda0
                .into_iter()
                .map(|rest| if rest.len() == 1 { rest[0] } else { usize::MAX })
                .collect()
        });
        Ok(Self {
            space1,
            space_sum,
            m,
            mu_sigma,
            phi,
            lambda0,
        })
    }

    pub fn m(&self) -> &[usize] {
        &self.m
    }

    pub fn phi(&self) -> &NaturalTransformation {
        &self.phi
    }

    pub fn mu_sigma(&self) -> &Arc<Presheaf> {
        &self.mu_sigma
    }

    /// Per stage, the character of `m(V)` outside the image of `φ`.
    pub fn lambda0(&self) -> Option<&[usize]> {
        self.lambda0.as_deref()
    }

    pub fn space1(&self) -> &Arc<SpectralPoset> {
        &self.space1
    }

    pub fn space_sum(&self) -> &Arc<SpectralPoset> {
        &self.space_sum
    }

    /// Naturality and injectivity of `φ`, the single missing character
    /// `λ0` with `λ0(0⊕1) = 1`, and `m` an order embedding
    /// (so `↓V ≅ m(↓V)`).
    pub fn check(&self) -> LawReport {
        let mut r = self.phi.check();
        if !self.phi.is_monic() {
            r.push("φ is not componentwise injective");
        }
        let base = self.space1.base();
        for a in 0..base.len() {
            for b in 0..base.len() {
                if base.leq(a, b) != self.space_sum.base().leq(self.m[a], self.m[b]) {
                    r.push(format!("m does not reflect the order at V{a}, V{b}"));
                }
            }
        }
        if let Some(l0) = &self.lambda0 {
            let n1 = self.space1.dim();
            let n = self.space_sum.dim();
            let tail = ProjectionOperator::zero(n1).direct_sum(&ProjectionOperator::identity(n - n1));
            for (v, &x) in l0.iter().enumerate() {
                if x == usize::MAX {
                    r.push(format!("image of φ at V{v} misses more than one character"));
                    continue;
                }
                let q = &self.space_sum.context(self.m[v]).projections()[x];
                if !q.matrix().approx_eq(tail.matrix(), crate::linalg::EPS) {
                    r.push(format!("missing character at V{v} is not λ0"));
                }
            }
        }
        r
    }

    /// `β(ν)(V') = ν(m(V'))` for `ν` on `↓m(V)`.
    pub fn beta(&self, stage: usize, nu: &OrderReversingFunction) -> Option<OrderReversingFunction> {
        let values = self
            .space1
            .base()
            .down_set(stage)
            .into_iter()
            .map(|u| nu.value(self.m[u]).map(|x| (u, x)))
            .collect::<Option<Vec<_>>>()?;
        Some(OrderReversingFunction::new(stage, values))
    }

    /// `β ∘ μ*(η) ∘ φ` for an arrow `η : Σ^{sum} → R≽`.
    pub fn pull(&self, eta: &ArrowTable) -> Result<ArrowTable, ComposeError> {
        let r = QuantityValuePresheaf::from_tables(self.space_sum.base(), [eta]);
        let nt = eta.to_natural_transformation(&self.space_sum, &r)?;
        let pushed = inverse_image_transformation(&self.m, self.space1.base(), &nt)?;
        let report = pushed.check();
        if !report.is_ok() {
            return Err(ComposeError::Invariant(format!("μ*(η) is not natural: {:?}", report.failures)));
        }
        let components = (0..self.space1.len())
            .map(|v| {
                self.phi
                    .component(v)
                    .iter()
                    .map(|&y| {
                        let z = pushed.component(v)[y];
                        let nu = &r.functions(self.m[v])[z];
                        self.beta(v, nu)
                            .ok_or_else(|| ComposeError::Invariant(format!("β undefined at V{v}")))
                    })
                    .collect::<Result<Vec<_>, _>>()
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(ArrowTable::new(components))
    }
}

#[derive(Clone, Debug)]
pub struct SumTranslation {
    pub translated: ArrowTable,
    pub expected: ArrowTable,
    /// Tables agree after rounding values to the 1e-9 grid.
    pub equal: bool,
    pub bundle_report: LawReport,
}

/// `β ∘ μ*(δ̆⟨A1,A2⟩) ∘ φ` compared with `δ̆(A1)`.
pub fn sum_translation(
    a1: &HermitianOperator,
    a2: &HermitianOperator,
    bundle: &SumTranslationBundle,
) -> Result<SumTranslation, ComposeError> {
    same_dim(a1.dim(), bundle.space1.dim())?;
    same_dim(a1.dim() + a2.dim(), bundle.space_sum.dim())?;
    let pair = daseinised_arrow(&a1.direct_sum(a2), &bundle.space_sum)?;
    let translated = bundle.pull(pair.table())?;
    let expected = daseinised_arrow(a1, &bundle.space1)?.table().clone();
    let equal = translated.key() == expected.key();
    Ok(SumTranslation {
        translated,
        expected,
        equal,
        bundle_report: bundle.check(),
    })
}

/// `m`-images of `poset1` and all their coarsenings, as a poset on `H1⊕C^{n2}`.
pub fn sum_poset(poset1: &ContextPoset, n2: usize) -> Result<ContextPoset, ComposeError> {
    let images = poset1.contexts().iter().map(|v| direct_sum_embed(v, n2));
    Ok(crate::contexts::contexts_closed_under_coarsening(poset1.dim() + n2, images, true)?)
}

/// Contexts of `H1⊕H2`: every `V1⊕V2` (so every `m(V)` when `poset2` has
/// the trivial context), the given extra contexts, and all coarsenings.
pub fn sum_context_poset(
    poset1: &ContextPoset,
    poset2: &ContextPoset,
    extra: &[AbelianContext],
) -> Result<ContextPoset, ComposeError> {
    let n = poset1.dim() + poset2.dim();
    let mut seeds = Vec::new();
    for v1 in poset1.contexts() {
        for v2 in poset2.contexts() {
            seeds.push(direct_sum_context(v1, v2));
        }
    }
    for e in extra {
        same_dim(e.dim(), n)?;
        seeds.push(e.clone());
    }
    Ok(crate::contexts::contexts_closed_under_coarsening(n, seeds, true)?)
}

/// The data translating arrows on `H1` to `H1⊗H2` along `p1`.
///
/// `n(W) = V_W`, `φ` sends the character of a block `Q` of `W` to the
/// block `R` of `V_W` with `Q ≤ R⊗1`, and `β(α)(W') = α(V_{W'})`.
#[derive(Clone, Debug)]
pub struct TensorTranslationBundle {
    n1: usize,
    n2: usize,
    space_w: Arc<SpectralPoset>,
    space1: Arc<SpectralPoset>,
    n: Vec<usize>,
    nu_sigma: Arc<Presheaf>,
    phi: NaturalTransformation,
}

impl TensorTranslationBundle {
    pub fn new(space_w: Arc<SpectralPoset>, n1: usize, n2: usize) -> Result<Self, ComposeError> {
        same_dim(n1 * n2, space_w.dim())?;
        let factors = space_w
            .contexts()
            .contexts()
            .iter()
            .map(|w| largest_factor_subalgebra(w, n1, n2))
            .collect::<Result<Vec<_>, _>>()?;
        let mut seeds = factors.clone();
        seeds.push(AbelianContext::trivial(n1));
        let poset1 = crate::contexts::contexts_closed_under_coarsening(n1, seeds, true)?;
        let space1 = Arc::new(SpectralPoset::new(poset1)?);
        let n: Vec<usize> = factors
            .iter()
            .map(|v| space1.contexts().index_of(v).expect("seeded"))
            .collect();
        let nu_sigma = Arc::new(inverse_image(&n, space_w.base(), space1.sigma())?);
        let components = space_w
            .contexts()
            .contexts()
            .iter()
            .enumerate()
            .map(|(i, w)| {
                let ampl = ampliate(space1.context(n[i]), n2);
                w.projections()
                    .iter()
                    .map(|q| {
                        ampl.block_containing(q)
                            .ok_or_else(|| ComposeError::Invariant(format!("V_W ⊗ 1 ⊄ W at {}", space_w.contexts().id(i))))
                    })
                    .collect::<Result<Vec<_>, _>>()
            })
            .collect::<Result<Vec<_>, _>>()?;
        let phi = NaturalTransformation::new(space_w.sigma().clone(), nu_sigma.clone(), components);
        Ok(Self {
            n1,
            n2,
            space_w,
            space1,
            n,
            nu_sigma,
            phi,
        })
    }

    pub fn n(&self) -> &[usize] {
        &self.n
    }

    pub fn phi(&self) -> &NaturalTransformation {
        &self.phi
    }

    pub fn nu_sigma(&self) -> &Arc<Presheaf> {
        &self.nu_sigma
    }

    pub fn space_w(&self) -> &Arc<SpectralPoset> {
        &self.space_w
    }

    pub fn space1(&self) -> &Arc<SpectralPoset> {
        &self.space1
    }

    /// `V_W` for stage `W`.
    pub fn factor(&self, stage: usize) -> &AbelianContext {
        self.space1.context(self.n[stage])
    }

    /// Naturality of `φ` (monotonicity of `n` is checked on construction).
    pub fn check(&self) -> LawReport {
        self.phi.check()
    }

    pub fn phi_is_epic(&self) -> bool {
        self.phi.is_epic()
    }

    /// `β(α)(W') = α(V_{W'})` for `α` on `↓V_W`.
    pub fn beta(&self, stage: usize, alpha: &OrderReversingFunction) -> Option<OrderReversingFunction> {
        let values = self
            .space_w
            .base()
            .down_set(stage)
            .into_iter()
            .map(|u| alpha.value(self.n[u]).map(|x| (u, x)))
            .collect::<Option<Vec<_>>>()?;
        Some(OrderReversingFunction::new(stage, values))
    }

    /// `β ∘ ν*(η) ∘ φ` for an arrow `η : Σ^{H1} → R≽`.
    pub fn pull(&self, eta: &ArrowTable) -> Result<ArrowTable, ComposeError> {
        let r = QuantityValuePresheaf::from_tables(self.space1.base(), [eta]);
        let nt = eta.to_natural_transformation(&self.space1, &r)?;
        let pushed = inverse_image_transformation(&self.n, self.space_w.base(), &nt)?;
        let report = pushed.check();
        if !report.is_ok() {
            return Err(ComposeError::Invariant(format!("ν*(η) is not natural: {:?}", report.failures)));
        }
        let components = (0..self.space_w.len())
            .map(|w| {
                self.phi
                    .component(w)
                    .iter()
                    .map(|&y| {
                        let z = pushed.component(w)[y];
                        let alpha = &r.functions(self.n[w])[z];
                        self.beta(w, alpha)
                            .ok_or_else(|| ComposeError::Invariant(format!("β undefined at W{w}")))
                    })
                    .collect::<Result<Vec<_>, _>>()
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(ArrowTable::new(components))
    }
}

#[derive(Clone, Debug)]
pub struct TensorTranslation {
    pub table: ArrowTable,
    /// Per stage `W`: `max |Σ_Q f_Q(W) Q − δ(A1)_{V_W} ⊗ 1|`.
    pub stage_residuals: Vec<f64>,
    /// Per stage `W` of the form `V⊗C1`: distance from `δ(A1⊗1)_W`.
    pub image_residuals: Vec<(usize, f64)>,
    pub table_report: LawReport,
}

impl TensorTranslation {
    pub fn max_stage_residual(&self) -> f64 {
        self.stage_residuals.iter().copied().fold(0.0, f64::max)
    }

    pub fn max_image_residual(&self) -> f64 {
        self.image_residuals.iter().map(|&(_, r)| r).fold(0.0, f64::max)
    }
}

/// The translation of `δ̆(A1)` to `H1⊗H2`, with the stage operators
/// reconstructed from the value table.
pub fn tensor_translation(a1: &HermitianOperator, bundle: &TensorTranslationBundle) -> Result<TensorTranslation, ComposeError> {
    same_dim(a1.dim(), bundle.n1)?;
    let base_arrow = daseinised_arrow(a1, &bundle.space1)?;
    let table = bundle.pull(base_arrow.table())?;
    let id2 = HermitianOperator::identity(bundle.n2);
    let mut stage_residuals = Vec::with_capacity(bundle.space_w.len());
    let mut image_residuals = Vec::new();
    let lifted = a1.kron(&id2);
    for (w, ctx) in bundle.space_w.contexts().contexts().iter().enumerate() {
        let values: Vec<f64> = table
            .component(w)
            .iter()
            .map(|f| f.value(w).expect("defined on ↓W"))
            .collect();
        let stage_op = ctx.operator_from_values(&values);
        let v_w = bundle.factor(w);
        let expected = outer_das_operator(a1, v_w)?.operator().kron(&id2);
        stage_residuals.push(stage_op.matrix().distance(expected.matrix()));
        if ampliate(v_w, bundle.n2) == *ctx {
            let direct = outer_das_operator(&lifted, ctx)?;
            image_residuals.push((w, stage_op.matrix().distance(direct.operator().matrix())));
        }
    }
    let table_report = table.check(&bundle.space_w);
    Ok(TensorTranslation {
        table,
        stage_residuals,
        image_residuals,
        table_report,
    })
}

/// Contexts of `H1⊗H2`: every `V1⊗V2` (which includes `V⊗C1` and `C1⊗V`
/// when the factor posets contain the trivial context), the given extra
/// contexts, and all coarsenings.
pub fn composite_context_poset(
    poset1: &ContextPoset,
    poset2: &ContextPoset,
    extra: &[AbelianContext],
) -> Result<ContextPoset, ComposeError> {
    let n = poset1.dim() * poset2.dim();
    let mut seeds: Vec<AbelianContext> = Vec::new();
    for v1 in poset1.contexts() {
        for v2 in poset2.contexts() {
            seeds.push(tensor_product(v1, v2));
        }
    }
    for e in extra {
        same_dim(e.dim(), n)?;
        seeds.push(e.clone());
    }
    Ok(crate::contexts::contexts_closed_under_coarsening(n, seeds, true)?)
}

#[derive(Clone, Debug, Serialize)]
pub struct GapRecord {
    pub equal: bool,
    /// Operator norm of `lhs − rhs`.
    pub gap_norm: f64,
    /// Largest entry of `lhs − rhs` in absolute value.
    pub max_entry_norm: f64,
    pub lhs: HermitianOperator,
    pub rhs: HermitianOperator,
    #[serde(skip)]
    pub v_w: AbelianContext,
}

/// `lhs = δ(A1⊗1)_W` against `rhs = δ(A1)_{V_W} ⊗ 1`.
pub fn entanglement_gap(
    a1: &HermitianOperator,
    w: &AbelianContext,
    n2: usize,
    tol: f64,
) -> Result<GapRecord, ComposeError> {
    let n1 = a1.dim();
    same_dim(n1 * n2, w.dim())?;
    let id2 = HermitianOperator::identity(n2);
    let lhs = outer_das_operator(&a1.kron(&id2), w)?.operator().clone();
    let v_w = largest_factor_subalgebra(w, n1, n2)?;
    let rhs = outer_das_operator(a1, &v_w)?.operator().kron(&id2);
    let diff = HermitianOperator::new((lhs.matrix() - rhs.matrix()).hermitian_part())
        .map_err(|e| ComposeError::Invariant(e.to_string()))?;
    let gap_norm = diff.eigenvalues().into_iter().map(f64::abs).fold(0.0, f64::max);
    let max_entry_norm = diff.matrix().max_abs();
    Ok(GapRecord {
        equal: gap_norm <= tol,
        gap_norm,
        max_entry_norm,
        lhs,
        rhs,
        v_w,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum GapFamily {
    /// `V1 ⊗ V2` only, no coarsenings.
    ProductOnly,
    /// Coarsenings of `P+⊗V_z + P−⊗V_x` on `C^2⊗C^2`, among them the
    /// algebra generated by `P+⊗P+` and `P−⊗P_{x+}`.
    Documented,
    /// Coarsenings of `Σ_i P_i ⊗ C_i` with a random context `{P_i}` on
    /// `H1` and an independent random context `C_i` on `H2` per branch.
    Controlled,
    /// Coarsenings of random contexts of `H1⊗H2`.
    Entangled,
}

impl GapFamily {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "product-only" | "product" => Some(Self::ProductOnly),
            "documented" => Some(Self::Documented),
            "controlled" => Some(Self::Controlled),
            "entangled" => Some(Self::Entangled),
            _ => None,
        }
    }
}

#[derive(Clone, Debug)]
pub struct GapSearchConfig {
    pub n1: usize,
    pub n2: usize,
    pub families: Vec<GapFamily>,
    /// Number of random seeds drawn per random family.
    pub budget: usize,
    pub seed: u64,
    pub tol: f64,
}

impl GapSearchConfig {
    pub fn qubits(families: Vec<GapFamily>, seed: u64) -> Self {
        Self {
            n1: 2,
            n2: 2,
            families,
            budget: 24,
            seed,
            tol: RESIDUAL_TOL,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct GapWitness {
    pub context: Vec<ComplexMatrix>,
    pub rank_signature: String,
    pub v_w: Vec<ComplexMatrix>,
    pub gap_norm: f64,
    pub max_entry_norm: f64,
    pub lhs: HermitianOperator,
    pub rhs: HermitianOperator,
    #[serde(skip)]
    pub w: AbelianContext,
}

#[derive(Clone, Debug, Serialize)]
pub struct GapReport {
    pub seed: u64,
    pub families: Vec<GapFamily>,
    pub contexts_searched: usize,
    pub witnesses: Vec<GapWitness>,
}

fn with_coarsenings(seeds: impl IntoIterator<Item = AbelianContext>, out: &mut BTreeSet<AbelianContext>) -> Result<(), ComposeError> {
    for s in seeds {
        if s.num_blocks() <= MAX_COARSENING_BLOCKS {
            out.extend(coarsenings(&s)?);
        } else {
            out.insert(s);
        }
    }
    Ok(())
}

/// `Σ_i P_i ⊗ C_i`: block `P_i⊗R` for every block `R` of the branch context `C_i`.
/// The `P_i` must decompose the identity of `H1`.
pub fn controlled_context(branches: &[(ProjectionOperator, AbelianContext)]) -> Result<AbelianContext, ComposeError> {
    let (n1, n2) = match branches.first() {
        Some((p, c)) => (p.dim(), c.dim()),
        None => return Err(ComposeError::Invariant("no branches".into())),
    };
    let mut projs = Vec::new();
    for (p, c) in branches {
        same_dim(c.dim(), n2)?;
        for r in c.projections() {
            projs.push(p.kron(r));
        }
    }
    Ok(AbelianContext::from_projections(n1 * n2, projs)?)
}

/// The three-block context generated by `P+⊗P+` and `P−⊗P_{x+}`.
pub fn documented_witness_context() -> AbelianContext {
    use qubit::*;
    let a = p_plus().kron(&p_plus()).as_operator();
    let b = p_minus().kron(&p_x_plus()).as_operator();
    context_from_commuting(4, &[a, b]).expect("the generators commute")
}

fn candidates(config: &GapSearchConfig) -> Result<BTreeSet<AbelianContext>, ComposeError> {
    let (n1, n2) = (config.n1, config.n2);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut out = BTreeSet::new();
    for family in &config.families {
        match family {
            GapFamily::ProductOnly => {
                let mut seeds = vec![tensor_product(&AbelianContext::diagonal(n1), &AbelianContext::diagonal(n2))];
                for _ in 0..config.budget {
                    let k1 = rng.gen_range(1..=n1);
                    let k2 = rng.gen_range(1..=n2);
                    seeds.push(tensor_product(&random_context(n1, k1, &mut rng), &random_context(n2, k2, &mut rng)));
                }
                out.extend(seeds);
            }
            GapFamily::Documented => {
                if (n1, n2) != (2, 2) {
                    return Err(ComposeError::Invariant("the documented family lives on C^2⊗C^2".into()));
                }
                let vz = AbelianContext::diagonal(2);
                let vx = crate::contexts::context_from_basis(&ComplexMatrix::from_real(
                    2,
                    &[0.5f64.sqrt(), 0.5f64.sqrt(), 0.5f64.sqrt(), -(0.5f64.sqrt())],
                ));
                let full = controlled_context(&[(qubit::p_plus(), vz), (qubit::p_minus(), vx)])?;
                with_coarsenings([full], &mut out)?;
            }
            GapFamily::Controlled => {
                let mut seeds = Vec::new();
                for _ in 0..config.budget {
                    let k1 = rng.gen_range(2..=n1.max(2)).min(n1);
                    let control = random_context(n1, k1, &mut rng);
                    let branches: Vec<(ProjectionOperator, AbelianContext)> = control
                        .projections()
                        .iter()
                        .map(|p| {
                            let k2 = rng.gen_range(1..=n2);
                            (p.clone(), random_context(n2, k2, &mut rng))
                        })
                        .collect();
                    seeds.push(controlled_context(&branches)?);
                }
                with_coarsenings(seeds, &mut out)?;
            }
            GapFamily::Entangled => {
                let n = n1 * n2;
                let mut seeds = Vec::new();
                for _ in 0..config.budget {
                    let k = rng.gen_range(1..=n.min(MAX_COARSENING_BLOCKS));
                    seeds.push(random_context(n, k, &mut rng));
                }
                with_coarsenings(seeds, &mut out)?;
            }
        }
    }
    Ok(out)
}

/// Every generated context `W` with gap above [`GAP_REPORT_THRESHOLD`],
/// sorted by gap (descending) then canonical context order. Deterministic
/// for a given configuration.
pub fn gap_search(a1: &HermitianOperator, config: &GapSearchConfig) -> Result<GapReport, ComposeError> {
    same_dim(a1.dim(), config.n1)?;
    if config.n1 * config.n2 > MAX_DIM {
        return Err(ComposeError::Invariant(format!("n1·n2 = {} exceeds {MAX_DIM}", config.n1 * config.n2)));
    }
    let found = candidates(config)?;
    let mut witnesses = Vec::new();
    for w in &found {
        let g = entanglement_gap(a1, w, config.n2, config.tol)?;
        if g.gap_norm > GAP_REPORT_THRESHOLD {
            witnesses.push(GapWitness {
                context: w.projections().iter().map(|p| p.matrix().clone()).collect(),
                rank_signature: w.rank_signature(),
                v_w: g.v_w.projections().iter().map(|p| p.matrix().clone()).collect(),
                gap_norm: g.gap_norm,
                max_entry_norm: g.max_entry_norm,
                lhs: g.lhs,
                rhs: g.rhs,
                w: w.clone(),
            });
        }
    }
    witnesses.sort_by(|a, b| b.gap_norm.total_cmp(&a.gap_norm).then_with(|| a.w.cmp(&b.w)));
    Ok(GapReport {
        seed: config.seed,
        families: config.families.clone(),
        contexts_searched: found.len(),
        witnesses,
    })
}

/// Largest gap over `V1⊗V2` for every pair of contexts from the two
/// posets: the finite-dimensional evidence on product contexts.
pub fn product_context_gap(a1: &HermitianOperator, poset1: &ContextPoset, poset2: &ContextPoset) -> Result<(usize, f64), ComposeError> {
    let mut worst: f64 = 0.0;
    let mut count = 0;
    for v1 in poset1.contexts() {
        for v2 in poset2.contexts() {
            let w = tensor_product(v1, v2);
            worst = worst.max(entanglement_gap(a1, &w, poset2.dim(), RESIDUAL_TOL)?.gap_norm);
            count += 1;
        }
    }
    Ok((count, worst))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::contexts::{ampliate_left, generate_context_poset};
    use crate::linalg::qubit::*;
    use crate::linalg::random_hermitian;

    fn qubit_poset() -> ContextPoset {
        generate_context_poset(2, &[sigma_z(), sigma_x()], true).unwrap()
    }

    fn vz() -> AbelianContext {
        AbelianContext::diagonal(2)
    }

    #[test]
    fn lemma_examples() {
        let three = HermitianOperator::diagonal(&[3.0]);
        assert!(lemma_direct_sum_check(&sigma_z(), &three, &vz(), &AbelianContext::trivial(1)).unwrap());
        let a = HermitianOperator::diagonal(&[1.0, -2.0]);
        let b = HermitianOperator::diagonal(&[0.5, 4.0, 4.0]);
        assert!(lemma_direct_sum_check(&a, &b, &vz(), &AbelianContext::diagonal(3)).unwrap());
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let a1 = random_hermitian(2, &mut rng);
            let a2 = random_hermitian(2, &mut rng);
            let v1 = random_context(2, rng.gen_range(1..=2), &mut rng);
            let v2 = random_context(2, rng.gen_range(1..=2), &mut rng);
            assert!(lemma_direct_sum_check(&a1, &a2, &v1, &v2).unwrap());
        }
    }

    #[test]
    fn sum_translation_examples() {
        let space1 = Arc::new(SpectralPoset::new(ContextPoset::from_contexts(2, [vz()], true).unwrap()).unwrap());
        let sum = Arc::new(SpectralPoset::new(sum_poset(space1.contexts(), 1).unwrap()).unwrap());
        let bundle = SumTranslationBundle::new(space1.clone(), sum, 1).unwrap();
        assert!(bundle.check().is_ok(), "{:?}", bundle.check());
        let t = sum_translation(&sigma_z(), &HermitianOperator::diagonal(&[3.0]), &bundle).unwrap();
        assert!(t.equal);

        let one = sum_translation(&HermitianOperator::identity(2), &HermitianOperator::diagonal(&[-7.0]), &bundle).unwrap();
        assert!(one.equal);
        assert!(one.translated.components().iter().flatten().all(|f| f.entries().iter().all(|&(_, v)| (v - 1.0).abs() < 1e-12)));
    }

    #[test]
    fn sum_translation_missing_context() {
        let space1 = Arc::new(SpectralPoset::new(qubit_poset()).unwrap());
        let small = ContextPoset::from_contexts(3, [direct_sum_embed(&vz(), 1)], true).unwrap();
        let small = crate::contexts::contexts_closed_under_coarsening(3, small.contexts().to_vec(), true).unwrap();
        let sum = Arc::new(SpectralPoset::new(small).unwrap());
        assert!(matches!(SumTranslationBundle::new(space1, sum, 1), Err(ComposeError::MissingContext(_))));
    }

    #[test]
    fn identity_bundle_is_identity() {
        let space = Arc::new(SpectralPoset::new(qubit_poset()).unwrap());
        let bundle = SumTranslationBundle::identity(space.clone()).unwrap();
        let arrow = daseinised_arrow(&sigma_x(), &space).unwrap();
        assert_eq!(bundle.pull(arrow.table()).unwrap().key(), arrow.table().key());
    }

    #[test]
    fn tensor_translation_examples() {
        let p = qubit_poset();
        let bell = crate::contexts::context_from_basis(&ComplexMatrix::from_real(
            4,
            &{
                let h = 0.5f64.sqrt();
                [h, 0.0, 0.0, h, 0.0, h, h, 0.0, 0.0, h, -h, 0.0, h, 0.0, 0.0, -h]
            },
        ));
        let poset_w = composite_context_poset(&p, &p, std::slice::from_ref(&bell)).unwrap();
        let space_w = Arc::new(SpectralPoset::new(poset_w).unwrap());
        let bundle = TensorTranslationBundle::new(space_w.clone(), 2, 2).unwrap();
        assert!(bundle.check().is_ok());
        let t = tensor_translation(&sigma_z(), &bundle).unwrap();
        assert!(t.table_report.is_ok(), "{:?}", t.table_report);
        assert!(t.max_stage_residual() < 1e-8);
        assert!(t.max_image_residual() < 1e-8);
        assert!(!t.image_residuals.is_empty());

        let zz = space_w.contexts().index_of(&tensor_product(&vz(), &vz())).unwrap();
        let values: Vec<f64> = t.table.component(zz).iter().map(|f| f.value(zz).unwrap()).collect();
        let op = space_w.context(zz).operator_from_values(&values);
        assert!(op.matrix().approx_eq(sigma_z().kron(&HermitianOperator::identity(2)).matrix(), 1e-9));

        let b = space_w.contexts().index_of(&bell).unwrap();
        assert!(bundle.factor(b).is_trivial());
        for f in t.table.component(b) {
            assert!((f.value(b).unwrap() - 1.0).abs() < 1e-9);
        }
        let _ = ampliate_left(2, &vz());
    }

    #[test]
    fn documented_gap_witness() {
        let w = documented_witness_context();
        assert_eq!(w.num_blocks(), 3);
        let g = entanglement_gap(&sigma_z(), &w, 2, RESIDUAL_TOL).unwrap();
        assert!(g.v_w.is_trivial());
        assert!(!g.equal);
        assert!((g.gap_norm - 2.0).abs() < 1e-9);
        assert!((g.max_entry_norm - 1.0).abs() < 1e-9);
        let q2 = p_minus().kron(&p_x_plus());
        let expected = &ComplexMatrix::identity(4) - &q2.matrix().scale(2.0);
        assert!(g.lhs.matrix().approx_eq(&expected, 1e-9));
        assert!(g.rhs.matrix().approx_eq(&ComplexMatrix::identity(4), 1e-9));

        let image = ampliate(&vz(), 2);
        assert!(entanglement_gap(&sigma_z(), &image, 2, RESIDUAL_TOL).unwrap().equal);
    }

    #[test]
    fn gap_search_contract() {
        let doc = gap_search(&sigma_z(), &GapSearchConfig::qubits(vec![GapFamily::Documented], 1)).unwrap();
        assert_eq!(doc.contexts_searched, 15);
        assert!(doc.witnesses.iter().any(|w| w.w == documented_witness_context() && w.gap_norm >= 1.0));
        let prod = gap_search(&sigma_z(), &GapSearchConfig::qubits(vec![GapFamily::ProductOnly], 1)).unwrap();
        assert!(prod.witnesses.is_empty());
        let cfg = GapSearchConfig::qubits(vec![GapFamily::Controlled, GapFamily::Entangled], 9);
        let a = serde_json::to_string(&gap_search(&sigma_z(), &cfg).unwrap()).unwrap();
        let b = serde_json::to_string(&gap_search(&sigma_z(), &cfg).unwrap()).unwrap();
        assert_eq!(a, b);
    }
}
