//! The spectral presheaf, daseinisation, and the arrows and subobjects built
//! from them.
//!
//! Stages are indices into a [`ContextPoset`]. A character of a context is
//! identified with the index of the minimal projection it marks, so the
//! spectral presheaf at stage `V` is `0..V.num_blocks()`.

use std::collections::BTreeMap;
use std::sync::Arc;

use num_complex::Complex64;
use serde::Serialize;
use thiserror::Error;

use crate::contexts::{AbelianContext, ContextError, ContextPoset};
use crate::linalg::{
    spectral_family, vector_norm, HermitianOperator, LinalgError, ProjectionOperator, EPS,
};
use crate::topos::{FinitePoset, LawReport, NaturalTransformation, Presheaf, Sieve, Subobject, ToposError};

/// Grid used to compare values of order-reversing functions.
pub const VALUE_QUANTUM: f64 = 1e-9;
/// Expectations at or above this count as probability one.
pub const CERTAINTY: f64 = 1.0 - 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QuantumError {
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("context poset is not closed under coarsening")]
    PosetNotDownClosed,
    #[error("state has norm {0}, expected 1")]
    NotUnitVector(f64),
    #[error("no stage {0} in the poset")]
    UnknownStage(usize),
    #[error("target context is not a subcontext")]
    NotASubcontext,
    #[error("function at stage {0} is not registered in the quantity-value presheaf")]
    Unregistered(usize),
    #[error(transparent)]
    Context(#[from] ContextError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Topos(#[from] ToposError),
}

fn same_dim(left: usize, right: usize) -> Result<(), QuantumError> {
    if left == right {
        Ok(())
    } else {
        Err(QuantumError::DimensionMismatch { left, right })
    }
}

/// A point of the Gel'fand spectrum of a context.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Character {
    context: AbelianContext,
    index: usize,
}

impl Character {
    pub fn new(context: AbelianContext, index: usize) -> Option<Self> {
        (index < context.num_blocks()).then_some(Self { context, index })
    }

    pub fn context(&self) -> &AbelianContext {
        &self.context
    }

    pub fn index(&self) -> usize {
        self.index
    }

    pub fn projection(&self) -> &ProjectionOperator {
        &self.context.projections()[self.index]
    }

    /// `λ(A) = tr(P A) / rank P`, the eigenvalue of `A` on `ran P` when `A ∈ V`.
    pub fn evaluate(&self, a: &HermitianOperator) -> Result<f64, QuantumError> {
        same_dim(self.context.dim(), a.dim())?;
        let p = self.projection();
        Ok((p.matrix() * a.matrix()).trace().re / p.rank() as f64)
    }

    /// The character of the block of `to` containing this one's projection.
    pub fn restrict(&self, to: &AbelianContext) -> Result<Character, QuantumError> {
        same_dim(self.context.dim(), to.dim())?;
        let j = to.block_containing(self.projection()).ok_or(QuantumError::NotASubcontext)?;
        Ok(Character {
            context: to.clone(),
            index: j,
        })
    }
}

pub fn gelfand_spectrum(v: &AbelianContext) -> Vec<Character> {
    (0..v.num_blocks())
        .map(|index| Character {
            context: v.clone(),
            index,
        })
        .collect()
}

/// A down-closed context poset together with its spectral presheaf.
#[derive(Clone, Debug)]
pub struct SpectralPoset {
    contexts: ContextPoset,
    base: FinitePoset,
    sigma: Arc<Presheaf>,
}

impl SpectralPoset {
    pub fn new(contexts: ContextPoset) -> Result<Self, QuantumError> {
        if !contexts.is_down_closed() {
            return Err(QuantumError::PosetNotDownClosed);
        }
        let base = contexts.to_finite_poset();
        let sizes = contexts.contexts().iter().map(AbelianContext::num_blocks).collect();
        let cs = contexts.contexts();
        let sigma = Presheaf::from_fn(base.clone(), sizes, |large, small, x| {
            cs[small]
                .block_containing(&cs[large].projections()[x])
                .expect("comparable contexts refine")
        });
        Ok(Self {
            contexts,
            base,
            sigma: Arc::new(sigma),
        })
    }

    pub fn contexts(&self) -> &ContextPoset {
        &self.contexts
    }

    pub fn context(&self, stage: usize) -> &AbelianContext {
        self.contexts.context(stage)
    }

    pub fn base(&self) -> &FinitePoset {
        &self.base
    }

    pub fn sigma(&self) -> &Arc<Presheaf> {
        &self.sigma
    }

    pub fn len(&self) -> usize {
        self.contexts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.contexts.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.contexts.dim()
    }

    pub fn restrict(&self, large: usize, small: usize, x: usize) -> usize {
        self.sigma.restrict(large, small, x)
    }

    fn stage(&self, v: usize) -> Result<(), QuantumError> {
        if v < self.len() {
            Ok(())
        } else {
            Err(QuantumError::UnknownStage(v))
        }
    }
}

pub fn spectral_presheaf(poset: &ContextPoset) -> Result<Presheaf, QuantumError> {
    Ok((*SpectralPoset::new(poset.clone())?.sigma).clone())
}

/// Bit mask of the minimal projections of `v` lying below `p`.
pub fn inner_das_mask(p: &ProjectionOperator, v: &AbelianContext) -> Result<u64, QuantumError> {
    same_dim(p.dim(), v.dim())?;
    let mut mask = 0;
    for (j, q) in v.projections().iter().enumerate() {
        if crate::linalg::projection_leq(q, p)? {
            mask |= 1 << j;
        }
    }
    Ok(mask)
}

/// Bit mask of the minimal projections of `v` not orthogonal to `p`.
pub fn outer_das_mask(p: &ProjectionOperator, v: &AbelianContext) -> Result<u64, QuantumError> {
    same_dim(p.dim(), v.dim())?;
    let mut mask = 0;
    for (j, q) in v.projections().iter().enumerate() {
        if (q.matrix() * p.matrix()).max_abs() > EPS {
            mask |= 1 << j;
        }
    }
    Ok(mask)
}

/// Largest projection of `v` below `p`.
pub fn inner_das_projection(p: &ProjectionOperator, v: &AbelianContext) -> Result<ProjectionOperator, QuantumError> {
    Ok(v.projection_sum(inner_das_mask(p, v)?))
}

/// Smallest projection of `v` above `p`.
pub fn outer_das_projection(p: &ProjectionOperator, v: &AbelianContext) -> Result<ProjectionOperator, QuantumError> {
    Ok(v.projection_sum(outer_das_mask(p, v)?))
}

/// `δ^o(A)_V` as a value on each minimal projection of `V`.
#[derive(Clone, Debug)]
pub struct DaseinisedOperator {
    values: Vec<f64>,
    operator: HermitianOperator,
}

impl DaseinisedOperator {
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn operator(&self) -> &HermitianOperator {
        &self.operator
    }
}

/// Block `j` of `v` gets the least eigenvalue `λ` of `a` with `Q_j ≤ E_λ`,
/// so the spectral family of the result is `λ ↦ δ^i(E_λ)_V`.
pub fn outer_das_operator(a: &HermitianOperator, v: &AbelianContext) -> Result<DaseinisedOperator, QuantumError> {
    same_dim(a.dim(), v.dim())?;
    let family = spectral_family(a);
    let top = a.max_eigenvalue();
    let mut values = Vec::with_capacity(v.num_blocks());
    for q in v.projections() {
        let mut value = top;
        for (lambda, e) in family.iter() {
            if crate::linalg::projection_leq(q, e)? {
                value = lambda;
                break;
            }
        }
        values.push(value);
    }
    let operator = v.operator_from_values(&values);
    Ok(DaseinisedOperator { values, operator })
}

pub fn round_value(x: f64) -> i64 {
    (x / VALUE_QUANTUM).round() as i64
}

pub type FunctionKey = Vec<(usize, i64)>;

/// A real function on `↓at`, stored as `(stage, value)` pairs in stage order.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OrderReversingFunction {
    at: usize,
    values: Vec<(usize, f64)>,
}

impl OrderReversingFunction {
    pub fn new(at: usize, values: impl IntoIterator<Item = (usize, f64)>) -> Self {
        let mut values: Vec<(usize, f64)> = values.into_iter().collect();
        values.sort_by_key(|&(s, _)| s);
        Self { at, values }
    }

    pub fn at(&self) -> usize {
        self.at
    }

    pub fn entries(&self) -> &[(usize, f64)] {
        &self.values
    }

    pub fn value(&self, stage: usize) -> Option<f64> {
        self.values
            .binary_search_by_key(&stage, |&(s, _)| s)
            .ok()
            .map(|i| self.values[i].1)
    }

    /// Domain restriction to `↓to`.
    pub fn restrict(&self, base: &FinitePoset, to: usize) -> Self {
        Self {
            at: to,
            values: self.values.iter().copied().filter(|&(s, _)| base.leq(s, to)).collect(),
        }
    }

    /// Defined exactly on `↓at` and `u ≤ w ⟹ f(u) ≥ f(w) − EPS`.
    pub fn is_order_reversing(&self, base: &FinitePoset) -> bool {
        let domain: Vec<usize> = self.values.iter().map(|&(s, _)| s).collect();
        if domain != base.down_set(self.at) {
            return false;
        }
        self.values.iter().all(|&(u, fu)| {
            self.values
                .iter()
                .all(|&(w, fw)| !base.leq(u, w) || fu >= fw - EPS)
        })
    }

    pub fn key(&self) -> FunctionKey {
        self.values.iter().map(|&(s, v)| (s, round_value(v))).collect()
    }
}

/// The components of an arrow `Σ → R≽`: one function per stage and character.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ArrowTable {
    components: Vec<Vec<OrderReversingFunction>>,
}

impl ArrowTable {
    pub fn new(components: Vec<Vec<OrderReversingFunction>>) -> Self {
        Self { components }
    }

    /// `f_{V,λ}(V') = values[V'][λ|V']`, the arrow induced by a choice of
    /// block values at every stage.
    pub fn from_stage_values(space: &SpectralPoset, values: &[Vec<f64>]) -> Self {
        let components = (0..space.len())
            .map(|v| {
                (0..space.sigma.size(v))
                    .map(|x| {
                        OrderReversingFunction::new(
                            v,
                            space
                                .base
                                .down_set(v)
                                .into_iter()
                                .map(|u| (u, values[u][space.restrict(v, u, x)])),
                        )
                    })
                    .collect()
            })
            .collect();
        Self { components }
    }

    pub fn component(&self, stage: usize) -> &[OrderReversingFunction] {
        &self.components[stage]
    }

    pub fn components(&self) -> &[Vec<OrderReversingFunction>] {
        &self.components
    }

    pub fn key(&self) -> Vec<Vec<FunctionKey>> {
        self.components
            .iter()
            .map(|c| c.iter().map(OrderReversingFunction::key).collect())
            .collect()
    }

    /// Lists stages whose functions fail the order-reversing invariant and
    /// naturality squares `f_V(λ)|V' = f_{V'}(λ|V')` that fail after rounding.
    pub fn check(&self, space: &SpectralPoset) -> LawReport {
        let mut report = LawReport::default();
        if self.components.len() != space.len() {
            report.push("wrong number of components");
            return report;
        }
        for (v, comp) in self.components.iter().enumerate() {
            if comp.len() != space.sigma.size(v) {
                report.push(format!("malformed component at V{v}"));
                return report;
            }
            if let Some(x) = comp.iter().position(|f| f.at != v || !f.is_order_reversing(&space.base)) {
                report.push(format!("function for character {x} at V{v} is not order-reversing on ↓V{v}"));
            }
        }
        for (small, large) in space.base.comparable_pairs() {
            for (x, f) in self.components[large].iter().enumerate() {
                let lhs = f.restrict(&space.base, small).key();
                let rhs = self.components[small][space.restrict(large, small, x)].key();
                if lhs != rhs {
                    report.push(format!("square V{small} ≤ V{large} fails at character {x}"));
                }
            }
        }
        report
    }

    /// The arrow as a natural transformation into an extensional `R≽`.
    pub fn to_natural_transformation(
        &self,
        space: &SpectralPoset,
        r: &QuantityValuePresheaf,
    ) -> Result<NaturalTransformation, QuantumError> {
        let components = self
            .components
            .iter()
            .enumerate()
            .map(|(v, comp)| {
                comp.iter()
                    .map(|f| r.index_of(v, f).ok_or(QuantumError::Unregistered(v)))
                    .collect::<Result<Vec<_>, _>>()
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(NaturalTransformation::new(space.sigma.clone(), r.presheaf.clone(), components))
    }
}

/// `R≽` restricted to the functions arising from registered arrows, closed
/// under restriction.
#[derive(Clone, Debug)]
pub struct QuantityValuePresheaf {
    presheaf: Arc<Presheaf>,
    functions: Vec<Vec<OrderReversingFunction>>,
    index: Vec<BTreeMap<FunctionKey, usize>>,
}

impl QuantityValuePresheaf {
    pub fn from_tables<'a>(base: &FinitePoset, tables: impl IntoIterator<Item = &'a ArrowTable>) -> Self {
        let tables: Vec<&ArrowTable> = tables.into_iter().collect();
        let n = base.len();
        let mut by_stage: Vec<BTreeMap<FunctionKey, OrderReversingFunction>> = vec![BTreeMap::new(); n];
        for t in &tables {
            for (small, large) in base.comparable_pairs() {
                for f in t.component(large) {
                    let g = f.restrict(base, small);
                    by_stage[small].entry(g.key()).or_insert(g);
                }
            }
        }
        let functions: Vec<Vec<OrderReversingFunction>> =
            by_stage.into_iter().map(|m| m.into_values().collect()).collect();
        let index: Vec<BTreeMap<FunctionKey, usize>> = functions
            .iter()
            .map(|fs| fs.iter().enumerate().map(|(i, f)| (f.key(), i)).collect())
            .collect();
        let sizes = functions.iter().map(Vec::len).collect();
        let presheaf = Presheaf::from_fn(base.clone(), sizes, |large, small, x| {
            index[small][&functions[large][x].restrict(base, small).key()]
        });
        Self {
            presheaf: Arc::new(presheaf),
            functions,
            index,
        }
    }

    pub fn presheaf(&self) -> &Arc<Presheaf> {
        &self.presheaf
    }

    pub fn functions(&self, stage: usize) -> &[OrderReversingFunction] {
        &self.functions[stage]
    }

    pub fn index_of(&self, stage: usize, f: &OrderReversingFunction) -> Option<usize> {
        self.index.get(stage)?.get(&f.key()).copied()
    }

    /// Every stored function is order-reversing on its stage's down-set.
    pub fn check(&self, base: &FinitePoset) -> LawReport {
        let mut report = self.presheaf.check();
        for (v, fs) in self.functions.iter().enumerate() {
            if fs.iter().any(|f| !f.is_order_reversing(base)) {
                report.push(format!("non-order-reversing function stored at stage {v}"));
            }
        }
        report
    }
}

pub fn quantity_value_presheaf(
    space: &SpectralPoset,
    operators: &[HermitianOperator],
) -> Result<QuantityValuePresheaf, QuantumError> {
    let arrows = operators
        .iter()
        .map(|a| daseinised_arrow(a, space))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(QuantityValuePresheaf::from_tables(
        space.base(),
        arrows.iter().map(DaseinisedArrow::table),
    ))
}

/// `δ̆(A) : Σ → R≽` together with the stagewise operators it is built from.
#[derive(Clone, Debug)]
pub struct DaseinisedArrow {
    das: Vec<DaseinisedOperator>,
    table: ArrowTable,
}

impl DaseinisedArrow {
    pub fn das(&self) -> &[DaseinisedOperator] {
        &self.das
    }

    pub fn table(&self) -> &ArrowTable {
        &self.table
    }
}

/// At stage `V` the character `λ` goes to `V' ↦ λ|V'(δ^o(A)_{V'})`.
pub fn daseinised_arrow(a: &HermitianOperator, space: &SpectralPoset) -> Result<DaseinisedArrow, QuantumError> {
    same_dim(a.dim(), space.dim())?;
    let das = space
        .contexts
        .contexts()
        .iter()
        .map(|v| outer_das_operator(a, v))
        .collect::<Result<Vec<_>, _>>()?;
    let values: Vec<Vec<f64>> = das.iter().map(|d| d.values.clone()).collect();
    let table = ArrowTable::from_stage_values(space, &values);
    Ok(DaseinisedArrow { das, table })
}

/// `S_V = {λ ∈ Σ_V : λ(δ^o(P)_V) = 1}`.
pub fn proposition_subobject(p: &ProjectionOperator, space: &SpectralPoset) -> Result<Subobject, QuantumError> {
    let components = space
        .contexts
        .contexts()
        .iter()
        .map(|v| {
            let mask = outer_das_mask(p, v)?;
            Ok((0..v.num_blocks()).filter(|j| mask >> j & 1 == 1).collect())
        })
        .collect::<Result<Vec<_>, QuantumError>>()?;
    Ok(Subobject::new(space.sigma.clone(), components)?)
}

fn check_unit(psi: &[Complex64], dim: usize) -> Result<(), QuantumError> {
    same_dim(psi.len(), dim)?;
    let norm = vector_norm(psi);
    if (norm - 1.0).abs() > EPS {
        return Err(QuantumError::NotUnitVector(norm));
    }
    Ok(())
}

/// `{V' ≤ V : ⟨ψ|δ^o(P)_{V'}|ψ⟩ ≥ 1 − 1e-9}`. Down-closure is verified.
pub fn truth_value(
    p: &ProjectionOperator,
    psi: &[Complex64],
    v: usize,
    space: &SpectralPoset,
) -> Result<Sieve, QuantumError> {
    check_unit(psi, space.dim())?;
    same_dim(p.dim(), space.dim())?;
    space.stage(v)?;
    let mut members = Vec::new();
    for u in space.base.down_set(v) {
        let d = outer_das_projection(p, space.context(u))?;
        if d.matrix().expectation(psi) >= CERTAINTY {
            members.push(u);
        }
    }
    Ok(Sieve::new(&space.base, v, members)?)
}

/// For every context, the projections of that context that `ψ` makes certain,
/// as bit masks over the minimal projections.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TruthObject {
    per_context: Vec<Vec<u64>>,
}

impl TruthObject {
    pub fn new(psi: &[Complex64], space: &SpectralPoset) -> Result<Self, QuantumError> {
        check_unit(psi, space.dim())?;
        let per_context = space
            .contexts
            .contexts()
            .iter()
            .map(|v| {
                let weights: Vec<f64> = v.projections().iter().map(|q| q.matrix().expectation(psi)).collect();
                (0u64..1 << v.num_blocks())
                    .filter(|mask| {
                        let e: f64 = weights.iter().enumerate().filter(|(j, _)| mask >> j & 1 == 1).map(|(_, w)| w).sum();
                        e >= CERTAINTY
                    })
                    .collect()
            })
            .collect();
        Ok(Self { per_context })
    }

    pub fn masks(&self, stage: usize) -> &[u64] {
        &self.per_context[stage]
    }

    pub fn contains(&self, stage: usize, mask: u64) -> bool {
        self.per_context[stage].binary_search(&mask).is_ok()
    }

    pub fn projections(&self, stage: usize, space: &SpectralPoset) -> Vec<ProjectionOperator> {
        self.per_context[stage]
            .iter()
            .map(|&m| space.context(stage).projection_sum(m))
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DasBlock {
    pub rank: usize,
    pub value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DasRow {
    pub context: String,
    pub rank_signature: String,
    pub blocks: Vec<DasBlock>,
}

/// Snaps to a 1e-12 grid so exports print `1.0` rather than `0.9999999999999998`.
pub fn display_value(x: f64) -> f64 {
    let y = (x * 1e12).round() / 1e12;
    if y == 0.0 {
        0.0
    } else {
        y
    }
}

pub fn das_table(arrow: &DaseinisedArrow, space: &SpectralPoset) -> Vec<DasRow> {
    arrow
        .das
        .iter()
        .enumerate()
        .map(|(i, d)| {
            let v = space.context(i);
            DasRow {
                context: space.contexts.id(i),
                rank_signature: v.rank_signature(),
                blocks: v
                    .projections()
                    .iter()
                    .zip(&d.values)
                    .map(|(q, &value)| DasBlock {
                        rank: q.rank(),
                        value: display_value(value),
                    })
                    .collect(),
            }
        })
        .collect()
}

/// Brute-force references for daseinisation that share no code with the
/// spectral-family implementation above.
pub mod oracle {
    use nalgebra::DMatrix;
    use num_complex::Complex64;

    use crate::contexts::AbelianContext;
    use crate::linalg::{HermitianOperator, ProjectionOperator};

    const TOL: f64 = 1e-9;

    fn below(s: &DMatrix<Complex64>, p: &DMatrix<Complex64>) -> bool {
        (p * s - s).iter().all(|z| z.norm() <= TOL)
    }

    fn sum_of(v: &AbelianContext, mask: u64) -> DMatrix<Complex64> {
        let n = v.dim();
        let mut acc = DMatrix::zeros(n, n);
        for (j, q) in v.projections().iter().enumerate() {
            if mask >> j & 1 == 1 {
                acc += q.matrix().as_dmatrix();
            }
        }
        acc
    }

    fn rank_of(m: &DMatrix<Complex64>) -> usize {
        m.trace().re.round() as usize
    }

    /// Largest of the `2^k` sums of minimal projections lying below `p`.
    pub fn inner_projection(p: &ProjectionOperator, v: &AbelianContext) -> u64 {
        let pm = p.matrix().as_dmatrix();
        (0u64..1 << v.num_blocks())
            .filter(|&m| below(&sum_of(v, m), pm))
            .max_by_key(|&m| rank_of(&sum_of(v, m)))
            .expect("the zero projection is below everything")
    }

    /// Smallest of the `2^k` sums of minimal projections lying above `p`.
    pub fn outer_projection(p: &ProjectionOperator, v: &AbelianContext) -> u64 {
        let pm = p.matrix().as_dmatrix();
        (0u64..1 << v.num_blocks())
            .filter(|&m| below(pm, &sum_of(v, m)))
            .min_by_key(|&m| rank_of(&sum_of(v, m)))
            .expect("the identity is above everything")
    }

    /// Cyclic Jacobi diagonalisation: eigenvalues and a unitary whose
    /// columns are the eigenvectors.
    fn jacobi(a: &HermitianOperator) -> (Vec<f64>, DMatrix<Complex64>) {
        let n = a.dim();
        let mut m = a.matrix().as_dmatrix().clone();
        let mut v = DMatrix::<Complex64>::identity(n, n);
        let scale = m.iter().map(|z| z.norm()).fold(1.0, f64::max);
        for _sweep in 0..100 {
            let off: f64 = (0..n).flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j))).map(|(i, j)| m[(i, j)].norm_sqr()).sum();
            if off.sqrt() <= 1e-15 * scale {
                break;
            }
            for p in 0..n {
                for q in p + 1..n {
                    let apq = m[(p, q)];
                    let r = apq.norm();
                    if r <= 1e-300 {
                        continue;
                    }
                    let phase = apq / r;
                    let tau = (m[(q, q)].re - m[(p, p)].re) / (2.0 * r);
                    let t = if tau == 0.0 { 1.0 } else { tau.signum() / (tau.abs() + (1.0 + tau * tau).sqrt()) };
                    let c = 1.0 / (1.0 + t * t).sqrt();
                    let s = t * c;
                    let mut j = DMatrix::<Complex64>::identity(n, n);
                    j[(p, p)] = Complex64::new(c, 0.0);
                    j[(p, q)] = Complex64::new(s, 0.0);
                    j[(q, p)] = -phase.conj() * s;
                    j[(q, q)] = phase.conj() * c;
                    m = j.adjoint() * &m * &j;
                    v = &v * &j;
                }
            }
        }
        ((0..n).map(|i| m[(i, i)].re).collect(), v)
    }

    /// Distinct eigenvalues and the spectral projections `E_μ` at each.
    fn spectral_steps(a: &HermitianOperator) -> Vec<(f64, DMatrix<Complex64>)> {
        let (values, vectors) = jacobi(a);
        let n = a.dim();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&i, &j| values[i].total_cmp(&values[j]));
        let mut steps: Vec<(f64, DMatrix<Complex64>)> = Vec::new();
        let mut acc = DMatrix::zeros(n, n);
        let mut group: Vec<f64> = Vec::new();
        for (pos, &i) in order.iter().enumerate() {
            let col = vectors.column(i);
            acc += col * col.adjoint();
            group.push(values[i]);
            let last = pos + 1 == n || values[order[pos + 1]] - values[i] > TOL;
            if last {
                let mean = group.iter().sum::<f64>() / group.len() as f64;
                steps.push((mean, acc.clone()));
                group.clear();
            }
        }
        steps
    }

    #[cfg(test)]
    #[test]
    fn jacobi_diagonalises_degenerate_operators() {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        for n in 1..=6 {
            for _ in 0..20 {
                let a = crate::linalg::random_degenerate_hermitian(n, &mut rng);
                let (values, v) = jacobi(&a);
                let m = a.matrix().as_dmatrix();
                let d = DMatrix::from_fn(n, n, |i, j| if i == j { Complex64::new(values[i], 0.0) } else { Complex64::new(0.0, 0.0) });
                assert!((m * &v - &v * d).iter().all(|z| z.norm() < 1e-10));
                assert!((v.adjoint() * &v - DMatrix::identity(n, n)).iter().all(|z| z.norm() < 1e-10));
            }
        }
    }

    /// The pointwise least assignment of eigenvalues of `a` to the blocks of
    /// `v` whose operator `B` dominates `a` in the spectral order
    /// (`E^B_μ ≤ E^A_μ` for all `μ`). Every assignment is tried. `None` if
    /// the dominating set has no least element.
    pub fn outer_operator(a: &HermitianOperator, v: &AbelianContext) -> Option<Vec<f64>> {
        let steps = spectral_steps(a);
        let s = steps.len();
        let k = v.num_blocks();
        let dominates = |choice: &[usize]| {
            steps.iter().enumerate().all(|(m, (_, ea))| {
                let mask = (0..k).filter(|&j| choice[j] <= m).fold(0u64, |acc, j| acc | 1 << j);
                below(&sum_of(v, mask), ea)
            })
        };
        let mut best: Option<Vec<usize>> = None;
        let mut choice = vec![0usize; k];
        loop {
            if dominates(&choice) {
                best = Some(match best {
                    None => choice.clone(),
                    Some(b) => b.iter().zip(&choice).map(|(&x, &y)| x.min(y)).collect(),
                });
            }
            let mut i = 0;
            while i < k {
                choice[i] += 1;
                if choice[i] < s {
                    break;
                }
                choice[i] = 0;
                i += 1;
            }
            if i == k {
                break;
            }
        }
        let best = best?;
        dominates(&best).then(|| best.iter().map(|&m| steps[m].0).collect())
    }

    /// Second route: block `j` gets the least `μ` with `Q_j` below the
    /// brute-force inner approximation of `E_μ`.
    pub fn outer_operator_via_inner(a: &HermitianOperator, v: &AbelianContext) -> Vec<f64> {
        let steps = spectral_steps(a);
        let masks: Vec<u64> = steps
            .iter()
            .map(|(_, e)| {
                let p = ProjectionOperator::new(crate::linalg::ComplexMatrix::from_dmatrix(e.clone()).expect("finite"))
                    .expect("spectral projection");
                inner_projection(&p, v)
            })
            .collect();
        (0..v.num_blocks())
            .map(|j| {
                let m = masks.iter().position(|&m| m >> j & 1 == 1).unwrap_or(steps.len() - 1);
                steps[m].0
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::contexts::{context_from_commuting, generate_context_poset, random_context, ContextPoset};
    use crate::linalg::qubit::*;
    use crate::linalg::random_degenerate_hermitian;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn vz() -> AbelianContext {
        context_from_commuting(2, &[sigma_z()]).unwrap()
    }

    fn vx() -> AbelianContext {
        context_from_commuting(2, &[sigma_x()]).unwrap()
    }

    fn qubit_space() -> SpectralPoset {
        SpectralPoset::new(generate_context_poset(2, &[sigma_z(), sigma_x()], true).unwrap()).unwrap()
    }

    fn stage_of(space: &SpectralPoset, c: &AbelianContext) -> usize {
        space.contexts().index_of(c).unwrap()
    }

    #[test]
    fn spectra_and_characters() {
        let t = gelfand_spectrum(&AbelianContext::trivial(3));
        assert_eq!(t.len(), 1);
        assert!((t[0].evaluate(&HermitianOperator::identity(3)).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(gelfand_spectrum(&vz()).len(), 2);

        let m = crate::contexts::direct_sum_embed(&vz(), 2);
        let block = ProjectionOperator::zero(2).direct_sum(&ProjectionOperator::identity(2));
        let hits: Vec<_> = gelfand_spectrum(&m)
            .into_iter()
            .filter(|l| (l.evaluate(&block.as_operator()).unwrap() - 1.0).abs() < 1e-9)
            .collect();
        assert_eq!(gelfand_spectrum(&m).len(), 3);
        assert_eq!(hits.len(), 1);
    }

    #[test]
    fn character_restriction() {
        let l = Character::new(vz(), 1).unwrap();
        let r = l.restrict(&AbelianContext::trivial(2)).unwrap();
        assert_eq!(r.index(), 0);
        assert_eq!(l.restrict(&vx()).unwrap_err(), QuantumError::NotASubcontext);
    }

    #[test]
    fn spectral_presheaf_examples() {
        let only = ContextPoset::from_contexts(2, [], true).unwrap();
        let s = spectral_presheaf(&only).unwrap();
        assert_eq!(s.sizes(), &[1]);

        let two = ContextPoset::from_contexts(2, [vz()], true).unwrap();
        let s = spectral_presheaf(&two).unwrap();
        assert_eq!(s.restriction(1, 0).unwrap(), &[0, 0]);

        let space = qubit_space();
        assert_eq!(space.sigma().sizes(), &[1, 2, 2]);
        assert!(space.sigma().check().is_ok());

        let broken = ContextPoset::from_contexts(2, [vz()], false).unwrap();
        assert!(spectral_presheaf(&broken).is_ok());
        let four = crate::contexts::tensor_product(&vz(), &vz());
        let missing = ContextPoset::from_contexts(4, [four], true).unwrap();
        assert_eq!(spectral_presheaf(&missing).unwrap_err(), QuantumError::PosetNotDownClosed);
    }

    #[test]
    fn projection_daseinisation_examples() {
        let z = vz();
        assert!(inner_das_projection(&p_plus(), &z).unwrap().matrix().approx_eq(p_plus().matrix(), 1e-12));
        assert!(outer_das_projection(&p_plus(), &z).unwrap().matrix().approx_eq(p_plus().matrix(), 1e-12));
        assert!(inner_das_projection(&p_x_plus(), &z).unwrap().is_zero());
        assert_eq!(outer_das_projection(&p_x_plus(), &z).unwrap().rank(), 2);
        assert!(outer_das_projection(&ProjectionOperator::zero(2), &z).unwrap().is_zero());
        assert_eq!(inner_das_projection(&ProjectionOperator::identity(2), &z).unwrap().rank(), 2);
        assert!(matches!(
            inner_das_projection(&ProjectionOperator::identity(3), &z),
            Err(QuantumError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn operator_daseinisation_examples() {
        let z = vz();
        let d = outer_das_operator(&sigma_z(), &z).unwrap();
        assert!(d.operator().matrix().approx_eq(sigma_z().matrix(), 1e-12));

        let a = HermitianOperator::from_real(2, &[0.3, 1.2, 1.2, -0.7]).unwrap();
        let t = outer_das_operator(&a, &AbelianContext::trivial(2)).unwrap();
        assert!((t.values()[0] - a.max_eigenvalue()).abs() < 1e-12);

        let x = outer_das_operator(&sigma_x(), &z).unwrap();
        assert!(x.values().iter().all(|v| (v - 1.0).abs() < 1e-12));
    }

    #[test]
    fn daseinisation_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for n in 2..=4 {
            for _ in 0..20 {
                let k = rand::Rng::gen_range(&mut rng, 1..=n);
                let v = random_context(n, k, &mut rng);
                let a = random_degenerate_hermitian(n, &mut rng);
                let ours = outer_das_operator(&a, &v).unwrap();
                let brute = oracle::outer_operator(&a, &v).unwrap();
                for (x, y) in ours.values().iter().zip(&brute) {
                    assert!((x - y).abs() < 1e-8);
                }
                for (_, e) in spectral_family(&a).iter() {
                    assert_eq!(inner_das_mask(e, &v).unwrap(), oracle::inner_projection(e, &v));
                    assert_eq!(outer_das_mask(e, &v).unwrap(), oracle::outer_projection(e, &v));
                }
            }
        }
    }

    #[test]
    fn arrow_examples() {
        let space = qubit_space();
        let z = stage_of(&space, &vz());
        let triv = space.contexts().trivial_index().unwrap();

        let one = daseinised_arrow(&HermitianOperator::identity(2), &space).unwrap();
        assert!(one
            .table()
            .components()
            .iter()
            .flatten()
            .all(|f| f.entries().iter().all(|&(_, v)| (v - 1.0).abs() < 1e-12)));

        let arrow = daseinised_arrow(&sigma_z(), &space).unwrap();
        let minus = space.context(z).position_of(&p_minus()).unwrap();
        let f = &arrow.table().component(z)[minus];
        assert!((f.value(z).unwrap() + 1.0).abs() < 1e-12);
        assert!((f.value(triv).unwrap() - 1.0).abs() < 1e-12);
        assert!(arrow.table().check(&space).is_ok());

        let x_arrow = daseinised_arrow(&sigma_x(), &space).unwrap();
        for f in x_arrow.table().component(z) {
            assert!(f.entries().iter().all(|&(_, v)| (v - 1.0).abs() < 1e-12));
        }
    }

    #[test]
    fn quantity_value_presheaf_and_naturality() {
        let space = qubit_space();
        let ops = [sigma_z(), sigma_x(), HermitianOperator::diagonal(&[2.0, -3.0])];
        let r = quantity_value_presheaf(&space, &ops).unwrap();
        assert!(r.check(space.base()).is_ok());
        for a in &ops {
            let eta = daseinised_arrow(a, &space).unwrap().table().to_natural_transformation(&space, &r).unwrap();
            assert!(eta.is_natural());
        }

        let only = SpectralPoset::new(ContextPoset::from_contexts(2, [], true).unwrap()).unwrap();
        let r = quantity_value_presheaf(&only, &ops).unwrap();
        assert!(r.functions(0).iter().all(|f| f.entries().len() == 1));
        assert_eq!(r.functions(0).len(), 2);
    }

    #[test]
    fn function_restriction() {
        let space = qubit_space();
        let z = stage_of(&space, &vz());
        let triv = space.contexts().trivial_index().unwrap();
        let f = OrderReversingFunction::new(z, [(z, -1.0), (triv, 1.0)]);
        assert!(f.is_order_reversing(space.base()));
        let g = f.restrict(space.base(), triv);
        assert_eq!(g.entries(), &[(triv, 1.0)]);
        let bad = OrderReversingFunction::new(z, [(z, 2.0), (triv, 1.0)]);
        assert!(!bad.is_order_reversing(space.base()));
    }

    #[test]
    fn proposition_examples() {
        let space = qubit_space();
        let top = proposition_subobject(&ProjectionOperator::identity(2), &space).unwrap();
        assert_eq!(top, Subobject::top(space.sigma().clone()));
        let bottom = proposition_subobject(&ProjectionOperator::zero(2), &space).unwrap();
        assert_eq!(bottom, Subobject::bottom(space.sigma().clone()));

        let s = proposition_subobject(&p_x_plus(), &space).unwrap();
        assert_eq!(s.component(stage_of(&space, &vx())).len(), 1);
        assert_eq!(s.component(stage_of(&space, &vz())).len(), 2);
        assert_eq!(s.component(space.contexts().trivial_index().unwrap()).len(), 1);
    }

    #[test]
    fn truth_value_examples() {
        let space = qubit_space();
        let z = stage_of(&space, &vz());
        let triv = space.contexts().trivial_index().unwrap();

        let up = ket(&[1.0, 0.0]);
        let s = truth_value(&p_plus(), &up, z, &space).unwrap();
        assert!(s.is_maximal(space.base()));

        let h = 0.5f64.sqrt();
        let plus = ket(&[h, h]);
        let s = truth_value(&p_plus(), &plus, z, &space).unwrap();
        assert_eq!(s.members().iter().copied().collect::<Vec<_>>(), vec![triv]);

        for v in 0..space.len() {
            assert!(truth_value(&ProjectionOperator::identity(2), &plus, v, &space).unwrap().is_maximal(space.base()));
        }
        assert!(matches!(
            truth_value(&p_plus(), &ket(&[1.0, 1.0]), z, &space),
            Err(QuantumError::NotUnitVector(_))
        ));
    }

    #[test]
    fn truth_object_lists_identity() {
        let space = qubit_space();
        let h = 0.5f64.sqrt();
        let t = TruthObject::new(&ket(&[h, h]), &space).unwrap();
        for v in 0..space.len() {
            let full = (1u64 << space.context(v).num_blocks()) - 1;
            assert!(t.contains(v, full));
        }
        let x = stage_of(&space, &vx());
        assert_eq!(t.masks(x).len(), 2);
        let ps = t.projections(x, &space);
        assert!(ps.iter().any(|p| p.matrix().approx_eq(p_x_plus().matrix(), 1e-9)));
    }

    #[test]
    fn das_table_rows() {
        let space = qubit_space();
        let arrow = daseinised_arrow(&sigma_x(), &space).unwrap();
        let rows = das_table(&arrow, &space);
        assert_eq!(rows.len(), 3);
        assert!(rows.iter().any(|r| r.rank_signature == "2" && r.blocks[0].value == 1.0));
    }
}
