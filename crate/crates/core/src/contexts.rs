//! Abelian contexts and finite context posets.
//!
//! A unital abelian subalgebra of `B(C^n)` is determined by its minimal
//! projections, which form an orthogonal decomposition of the identity. The
//! algebra `V'` is a subalgebra of `V` exactly when every minimal projection
//! of `V'` is a sum of minimal projections of `V`, so the whole context
//! category is handled combinatorially once the decompositions are known.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::Serialize;
use thiserror::Error;

use crate::linalg::{
    self, eigendecompose, projection_leq, ComplexMatrix, HermitianOperator, LinalgError,
    ProjectionOperator, EPS,
};
use crate::topos::FinitePoset;

/// Rounding grid for canonical context keys.
pub const CANON_QUANTUM: f64 = 1e-6;
/// Largest block count accepted by [`coarsenings`].
pub const MAX_COARSENING_BLOCKS: usize = 6;
/// Largest generator count accepted by [`generate_context_poset`].
pub const MAX_GENERATORS: usize = 8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ContextError {
    #[error("operators {first} and {second} do not commute (‖[A,B]‖ = {deviation:e})")]
    NonCommuting {
        first: usize,
        second: usize,
        deviation: f64,
    },
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("context has {0} minimal projections; at most {MAX_COARSENING_BLOCKS} can be coarsened")]
    TooManyBlocks(usize),
    #[error("{0} generators given; at most {MAX_GENERATORS} are supported")]
    TooManyGenerators(usize),
    #[error("invalid decomposition: {0}")]
    InvalidDecomposition(String),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

type ContextKey = Vec<(usize, Vec<(i64, i64)>)>;

/// An orthogonal decomposition of `C^dim` into minimal projections, kept in
/// canonical order (rank, then rounded entries).
#[derive(Clone, Debug)]
pub struct AbelianContext {
    dim: usize,
    projections: Vec<ProjectionOperator>,
    key: ContextKey,
}

impl PartialEq for AbelianContext {
    fn eq(&self, other: &Self) -> bool {
        self.dim == other.dim && self.key == other.key
    }
}

impl Eq for AbelianContext {}

impl PartialOrd for AbelianContext {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for AbelianContext {
    /// Coarser contexts first; ties broken by the canonical key.
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        (self.dim, self.projections.len(), &self.key).cmp(&(
            other.dim,
            other.projections.len(),
            &other.key,
        ))
    }
}

impl std::hash::Hash for AbelianContext {
    fn hash<H: std::hash::Hasher>(&self, state: &mut H) {
        self.dim.hash(state);
        self.key.hash(state);
    }
}

fn projection_key(p: &ProjectionOperator) -> (usize, Vec<(i64, i64)>) {
    (p.rank(), p.matrix().rounded_key(CANON_QUANTUM))
}

impl AbelianContext {
    /// Validates and canonicalizes a decomposition of the identity.
    pub fn from_projections(
        dim: usize,
        projections: Vec<ProjectionOperator>,
    ) -> Result<Self, ContextError> {
        if projections.is_empty() {
            return Err(ContextError::InvalidDecomposition("no projections".into()));
        }
        for p in &projections {
            if p.dim() != dim {
                return Err(ContextError::DimensionMismatch {
                    left: dim,
                    right: p.dim(),
                });
            }
            if p.is_zero() {
                return Err(ContextError::InvalidDecomposition("zero projection".into()));
            }
        }
        for (i, p) in projections.iter().enumerate() {
            for q in &projections[i + 1..] {
                if !p.is_orthogonal_to(q) {
                    return Err(ContextError::InvalidDecomposition(
                        "projections are not pairwise orthogonal".into(),
                    ));
                }
            }
        }
        let total = ProjectionOperator::orthogonal_sum(dim, &projections);
        if !total.matrix().approx_eq(&ComplexMatrix::identity(dim), EPS) {
            return Err(ContextError::InvalidDecomposition(
                "projections do not sum to the identity".into(),
            ));
        }
        Ok(Self::canonical(dim, projections))
    }

    fn canonical(dim: usize, projections: Vec<ProjectionOperator>) -> Self {
        let mut keyed: Vec<_> = projections
            .into_iter()
            .map(|p| (projection_key(&p), p))
            .collect();
        keyed.sort_by(|a, b| a.0.cmp(&b.0));
        let (key, projections) = keyed.into_iter().unzip();
        Self {
            dim,
            projections,
            key,
        }
    }

    /// The trivial context `C·1`.
    pub fn trivial(dim: usize) -> Self {
        Self::canonical(dim, vec![ProjectionOperator::identity(dim)])
    }

    /// The maximal context of a diagonal basis.
    pub fn diagonal(dim: usize) -> Self {
        let projs = (0..dim)
            .map(|k| {
                let mut d = vec![0.0; dim];
                d[k] = 1.0;
                ProjectionOperator::new_unchecked(ComplexMatrix::diagonal(&d))
            })
            .collect();
        Self::canonical(dim, projs)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn projections(&self) -> &[ProjectionOperator] {
        &self.projections
    }

    pub fn num_blocks(&self) -> usize {
        self.projections.len()
    }

    pub fn is_trivial(&self) -> bool {
        self.projections.len() == 1
    }

    /// Ranks of the minimal projections, joined with `+`.
    pub fn rank_signature(&self) -> String {
        self.projections
            .iter()
            .map(|p| p.rank().to_string())
            .collect::<Vec<_>>()
            .join("+")
    }

    /// Merges minimal projections according to a partition of their indices.
    pub fn merge(&self, blocks: &[Vec<usize>]) -> Self {
        let projs = blocks
            .iter()
            .map(|b| ProjectionOperator::orthogonal_sum(self.dim, b.iter().map(|&i| &self.projections[i])))
            .collect();
        Self::canonical(self.dim, projs)
    }

    /// Sum of the minimal projections selected by `mask` (bit `i` = projection `i`).
    pub fn projection_sum(&self, mask: u64) -> ProjectionOperator {
        ProjectionOperator::orthogonal_sum(
            self.dim,
            self.projections
                .iter()
                .enumerate()
                .filter(|(i, _)| mask >> i & 1 == 1)
                .map(|(_, p)| p),
        )
    }

    /// `Σ_i values[i] P_i`.
    pub fn operator_from_values(&self, values: &[f64]) -> HermitianOperator {
        assert_eq!(values.len(), self.projections.len());
        let m = self
            .projections
            .iter()
            .zip(values)
            .fold(ComplexMatrix::zeros(self.dim), |acc, (p, &v)| {
                &acc + &p.matrix().scale(v)
            });
        HermitianOperator::new(m.hermitian_part()).expect("real combination of projections is hermitian")
    }

    /// Index of the minimal projection that contains `p`, if any.
    pub fn block_containing(&self, p: &ProjectionOperator) -> Option<usize> {
        self.projections
            .iter()
            .position(|q| projection_leq(p, q).unwrap_or(false))
    }

    /// Index of a minimal projection equal to `p` within `EPS`.
    pub fn position_of(&self, p: &ProjectionOperator) -> Option<usize> {
        self.projections
            .iter()
            .position(|q| q.matrix().approx_eq(p.matrix(), EPS))
    }

    fn max_distance(&self, other: &Self) -> f64 {
        self.projections
            .iter()
            .zip(&other.projections)
            .map(|(a, b)| a.matrix().distance(b.matrix()))
            .fold(0.0, f64::max)
    }
}

/// The abelian algebra generated by a commuting family, via joint eigenspaces.
pub fn context_from_commuting(
    dim: usize,
    ops: &[HermitianOperator],
) -> Result<AbelianContext, ContextError> {
    for op in ops {
        if op.dim() != dim {
            return Err(ContextError::DimensionMismatch {
                left: dim,
                right: op.dim(),
            });
        }
    }
    for (i, a) in ops.iter().enumerate() {
        for (j, b) in ops.iter().enumerate().skip(i + 1) {
            let deviation = a.matrix().commutator(b.matrix()).max_abs();
            if deviation > EPS {
                return Err(ContextError::NonCommuting {
                    first: i,
                    second: j,
                    deviation,
                });
            }
        }
    }
    let mut blocks = vec![ProjectionOperator::identity(dim)];
    for op in ops {
        let pairs = eigendecompose(op);
        let mut refined = Vec::with_capacity(blocks.len() * pairs.len());
        for b in &blocks {
            for e in &pairs {
                let prod = b.matrix() * e.projection.matrix();
                if prod.trace().re > 0.5 {
                    refined.push(ProjectionOperator::new_unchecked(prod));
                }
            }
        }
        blocks = refined;
    }
    Ok(AbelianContext::canonical(dim, blocks))
}

/// `small ⊆ large`: every minimal projection of `small` is a sum of minimal
/// projections of `large`.
pub fn includes(small: &AbelianContext, large: &AbelianContext) -> Result<bool, ContextError> {
    if small.dim != large.dim {
        return Err(ContextError::DimensionMismatch {
            left: small.dim,
            right: large.dim,
        });
    }
    Ok(small.projections.iter().all(|p| {
        let below = large
            .projections
            .iter()
            .filter(|q| projection_leq(q, p).unwrap_or(false));
        ProjectionOperator::orthogonal_sum(small.dim, below)
            .matrix()
            .approx_eq(p.matrix(), EPS)
    }))
}

/// All set partitions of `{0..k}` in restricted-growth order.
pub fn set_partitions(k: usize) -> Vec<Vec<Vec<usize>>> {
    fn go(i: usize, k: usize, current: &mut Vec<Vec<usize>>, out: &mut Vec<Vec<Vec<usize>>>) {
        if i == k {
            out.push(current.clone());
            return;
        }
        for b in 0..current.len() {
            current[b].push(i);
            go(i + 1, k, current, out);
            current[b].pop();
        }
        current.push(vec![i]);
        go(i + 1, k, current, out);
        current.pop();
    }
    let mut out = Vec::new();
    go(0, k, &mut Vec::new(), &mut out);
    out
}

/// The down-set `↓V`: one context per set partition of the minimal projections.
pub fn coarsenings(v: &AbelianContext) -> Result<Vec<AbelianContext>, ContextError> {
    let k = v.num_blocks();
    if k > MAX_COARSENING_BLOCKS {
        return Err(ContextError::TooManyBlocks(k));
    }
    let mut out: Vec<AbelianContext> = set_partitions(k).iter().map(|p| v.merge(p)).collect();
    out.sort();
    out.dedup();
    Ok(out)
}

/// `V ∩ W`: minimal projections are the connected components of the overlap
/// graph between the two decompositions.
pub fn intersection(v: &AbelianContext, w: &AbelianContext) -> Result<AbelianContext, ContextError> {
    if v.dim != w.dim {
        return Err(ContextError::DimensionMismatch {
            left: v.dim,
            right: w.dim,
        });
    }
    let (a, b) = (v.num_blocks(), w.num_blocks());
    // union-find over a + b nodes
    let mut parent: Vec<usize> = (0..a + b).collect();
    fn find(parent: &mut [usize], x: usize) -> usize {
        let mut r = x;
        while parent[r] != r {
            r = parent[r];
        }
        parent[x] = r;
        r
    }
    for i in 0..a {
        for j in 0..b {
            if !v.projections[i].is_orthogonal_to(&w.projections[j]) {
                let (ri, rj) = (find(&mut parent, i), find(&mut parent, a + j));
                parent[ri] = rj;
            }
        }
    }
    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for i in 0..a {
        let r = find(&mut parent, i);
        groups.entry(r).or_default().push(i);
    }
    let blocks: Vec<Vec<usize>> = groups.into_values().collect();
    Ok(v.merge(&blocks))
}

/// `m(V) = V ⊕ C·1` on `C^{n1} ⊕ C^{dim2}`.
pub fn direct_sum_embed(v: &AbelianContext, dim2: usize) -> AbelianContext {
    let mut projs: Vec<ProjectionOperator> = v
        .projections
        .iter()
        .map(|p| p.direct_sum(&ProjectionOperator::zero(dim2)))
        .collect();
    projs.push(ProjectionOperator::zero(v.dim).direct_sum(&ProjectionOperator::identity(dim2)));
    AbelianContext::canonical(v.dim + dim2, projs)
}

/// `V1 ⊕ V2` on `C^{n1} ⊕ C^{n2}`.
pub fn direct_sum_context(v1: &AbelianContext, v2: &AbelianContext) -> AbelianContext {
    let zero1 = ProjectionOperator::zero(v1.dim);
    let zero2 = ProjectionOperator::zero(v2.dim);
    let mut projs: Vec<ProjectionOperator> = v1.projections.iter().map(|p| p.direct_sum(&zero2)).collect();
    projs.extend(v2.projections.iter().map(|q| zero1.direct_sum(q)));
    AbelianContext::canonical(v1.dim + v2.dim, projs)
}

/// `V ⊗ C·1` on `C^{n1} ⊗ C^{n2}`.
pub fn ampliate(v: &AbelianContext, n2: usize) -> AbelianContext {
    let one = ProjectionOperator::identity(n2);
    let projs = v.projections.iter().map(|p| p.kron(&one)).collect();
    AbelianContext::canonical(v.dim * n2, projs)
}

/// `C·1 ⊗ V` on `C^{n1} ⊗ C^{n2}`.
pub fn ampliate_left(n1: usize, v: &AbelianContext) -> AbelianContext {
    let one = ProjectionOperator::identity(n1);
    let projs = v.projections.iter().map(|p| one.kron(p)).collect();
    AbelianContext::canonical(n1 * v.dim, projs)
}

/// Product context `V1 ⊗ V2`.
pub fn tensor_product(v1: &AbelianContext, v2: &AbelianContext) -> AbelianContext {
    let mut projs = Vec::with_capacity(v1.num_blocks() * v2.num_blocks());
    for p in &v1.projections {
        for q in &v2.projections {
            projs.push(p.kron(q));
        }
    }
    AbelianContext::canonical(v1.dim * v2.dim, projs)
}

/// `V_W`: the largest context `V` on `C^{n1}` with `V ⊗ C·1 ⊆ W`.
///
/// Solves the real linear system `A ⊗ 1 − Σ_j c_j Q_j = 0` over hermitian `A`
/// and real `c`, then reads off the minimal projections of the solution
/// space by joint eigendecomposition.
pub fn largest_factor_subalgebra(
    w: &AbelianContext,
    n1: usize,
    n2: usize,
) -> Result<AbelianContext, ContextError> {
    let n = n1 * n2;
    if w.dim != n {
        return Err(ContextError::DimensionMismatch {
            left: w.dim,
            right: n,
        });
    }
    let k = w.num_blocks();
    let herm_params = n1 * n1;
    let unknowns = herm_params + k;
    let basis = hermitian_basis(n1);
    let one = ComplexMatrix::identity(n2);
    let mut columns: Vec<ComplexMatrix> = basis.iter().map(|b| b.kron(&one)).collect();
    columns.extend(w.projections.iter().map(|q| -q.matrix()));

    let rows = 2 * n * n;
    let mut system = faer::Mat::<f64>::zeros(rows, unknowns);
    for (c, col) in columns.iter().enumerate() {
        for i in 0..n {
            for j in 0..n {
                let z = col.entry(i, j);
                system.write(2 * (i * n + j), c, z.re);
                system.write(2 * (i * n + j) + 1, c, z.im);
            }
        }
    }
    let svd = system.thin_svd();
    let (sv, v) = (svd.s_diagonal(), svd.v());
    let smax = (0..sv.nrows()).map(|i| sv.read(i)).fold(0.0, f64::max).max(1.0);
    let mut generators = Vec::new();
    for idx in 0..sv.nrows() {
        if sv.read(idx) > 1e-8 * smax {
            continue;
        }
        let row: Vec<f64> = (0..unknowns).map(|b| v.read(b, idx)).collect();
        let a = basis
            .iter()
            .enumerate()
            .fold(ComplexMatrix::zeros(n1), |acc, (b, m)| &acc + &m.scale(row[b]));
        if a.max_abs() > 1e-6 {
            generators.push(HermitianOperator::new(a.hermitian_part())?);
        }
    }
    // the thin SVD returns min(rows, cols) singular values; rows ≥ cols here, so
    // the null space is fully represented.
    debug_assert!(rows >= unknowns);
    context_from_commuting(n1, &generators)
}

/// Orthonormal real basis of the hermitian `n×n` matrices (Frobenius inner product).
fn hermitian_basis(n: usize) -> Vec<ComplexMatrix> {
    use num_complex::Complex64;
    let mut out = Vec::with_capacity(n * n);
    let s = std::f64::consts::FRAC_1_SQRT_2;
    for i in 0..n {
        for j in i..n {
            let mut rows = vec![vec![Complex64::new(0.0, 0.0); n]; n];
            if i == j {
                rows[i][i] = Complex64::new(1.0, 0.0);
                out.push(ComplexMatrix::from_rows(&rows).expect("square"));
            } else {
                rows[i][j] = Complex64::new(s, 0.0);
                rows[j][i] = Complex64::new(s, 0.0);
                out.push(ComplexMatrix::from_rows(&rows).expect("square"));
                let mut rows = vec![vec![Complex64::new(0.0, 0.0); n]; n];
                rows[i][j] = Complex64::new(0.0, -s);
                rows[j][i] = Complex64::new(0.0, s);
                out.push(ComplexMatrix::from_rows(&rows).expect("square"));
            }
        }
    }
    out
}

/// A finite poset of contexts ordered by inclusion.
#[derive(Clone, Debug)]
pub struct ContextPoset {
    dim: usize,
    contexts: Vec<AbelianContext>,
    leq: Vec<bool>,
    augmented: bool,
}

impl ContextPoset {
    /// Deduplicates, sorts canonically and computes the inclusion order.
    /// `augmented` adds the trivial context; otherwise it is removed.
    pub fn from_contexts(
        dim: usize,
        contexts: impl IntoIterator<Item = AbelianContext>,
        augmented: bool,
    ) -> Result<Self, ContextError> {
        let mut unique: BTreeMap<AbelianContext, ()> = BTreeMap::new();
        for c in contexts {
            if c.dim != dim {
                return Err(ContextError::DimensionMismatch {
                    left: dim,
                    right: c.dim,
                });
            }
            if let Some((existing, _)) = unique.get_key_value(&c) {
                let d = existing.max_distance(&c);
                if d > EPS {
                    log::warn!(
                        "merging distinct contexts with equal canonical form ({} blocks, distance {d:e})",
                        c.num_blocks()
                    );
                }
                continue;
            }
            unique.insert(c, ());
        }
        let trivial = AbelianContext::trivial(dim);
        if augmented {
            unique.insert(trivial, ());
        } else {
            unique.remove(&trivial);
        }
        let contexts: Vec<AbelianContext> = unique.into_keys().collect();
        let n = contexts.len();
        let mut leq = vec![false; n * n];
        for i in 0..n {
            for j in 0..n {
                leq[i * n + j] = i == j || includes(&contexts[i], &contexts[j])?;
            }
        }
        Ok(Self {
            dim,
            contexts,
            leq,
            augmented,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.contexts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.contexts.is_empty()
    }

    pub fn is_augmented(&self) -> bool {
        self.augmented
    }

    pub fn contexts(&self) -> &[AbelianContext] {
        &self.contexts
    }

    pub fn context(&self, i: usize) -> &AbelianContext {
        &self.contexts[i]
    }

    pub fn id(&self, i: usize) -> String {
        format!("V{i}")
    }

    /// Index lookup by id string (`V3` or `3`).
    pub fn parse_id(&self, s: &str) -> Option<usize> {
        let digits = s.strip_prefix('V').unwrap_or(s);
        digits.parse::<usize>().ok().filter(|&i| i < self.len())
    }

    pub fn leq(&self, small: usize, large: usize) -> bool {
        self.leq[small * self.len() + large]
    }

    pub fn index_of(&self, c: &AbelianContext) -> Option<usize> {
        self.contexts.binary_search(c).ok()
    }

    pub fn trivial_index(&self) -> Option<usize> {
        self.index_of(&AbelianContext::trivial(self.dim))
    }

    /// `↓V` as ascending indices.
    pub fn down_set(&self, v: usize) -> Vec<usize> {
        (0..self.len()).filter(|&u| self.leq(u, v)).collect()
    }

    /// Every coarsening of every member is present (the trivial context only
    /// when the poset is augmented).
    pub fn is_down_closed(&self) -> bool {
        self.contexts.iter().all(|c| match coarsenings(c) {
            Ok(cs) => cs
                .iter()
                .filter(|d| self.augmented || !d.is_trivial())
                .all(|d| self.index_of(d).is_some()),
            Err(_) => false,
        })
    }

    /// Reflexivity, antisymmetry and transitivity of the stored order.
    pub fn order_violations(&self) -> Vec<String> {
        let n = self.len();
        let mut out = Vec::new();
        for a in 0..n {
            if !self.leq(a, a) {
                out.push(format!("not reflexive at V{a}"));
            }
            for b in 0..n {
                if a != b && self.leq(a, b) && self.leq(b, a) {
                    out.push(format!("V{a} and V{b} are mutually included"));
                }
                for c in 0..n {
                    if self.leq(a, b) && self.leq(b, c) && !self.leq(a, c) {
                        out.push(format!("V{a} ≤ V{b} ≤ V{c} but not V{a} ≤ V{c}"));
                    }
                }
            }
        }
        out
    }

    pub fn to_finite_poset(&self) -> FinitePoset {
        let labels = (0..self.len()).map(|i| self.id(i)).collect();
        FinitePoset::new(labels, self.leq.clone()).expect("inclusion is a partial order")
    }

    /// Pairs `(small, large)` with `small < large` and nothing strictly between.
    pub fn covering_pairs(&self) -> Vec<(usize, usize)> {
        let n = self.len();
        let mut out = Vec::new();
        for a in 0..n {
            for b in 0..n {
                if a == b || !self.leq(a, b) {
                    continue;
                }
                let between = (0..n).any(|c| c != a && c != b && self.leq(a, c) && self.leq(c, b));
                if !between {
                    out.push((a, b));
                }
            }
        }
        out
    }

    pub fn export(&self) -> PosetExport {
        let contexts = self
            .contexts
            .iter()
            .enumerate()
            .map(|(i, c)| ContextExport {
                id: self.id(i),
                rank_signature: c.rank_signature(),
                projections: c.projections.iter().map(|p| p.matrix().clone()).collect(),
            })
            .collect();
        let n = self.len();
        let mut leq = Vec::new();
        for a in 0..n {
            for b in 0..n {
                if self.leq(a, b) {
                    leq.push([self.id(a), self.id(b)]);
                }
            }
        }
        PosetExport { contexts, leq }
    }

    /// Hasse diagram in Graphviz DOT, edges pointing from smaller to larger.
    pub fn to_dot(&self) -> String {
        let mut out = String::from("digraph contexts {\n  rankdir=BT;\n");
        for (i, c) in self.contexts.iter().enumerate() {
            let _ = writeln!(out, "  {} [label=\"{}\\n{}\"];", self.id(i), self.id(i), c.rank_signature());
        }
        for (a, b) in self.covering_pairs() {
            let _ = writeln!(out, "  {} -> {};", self.id(a), self.id(b));
        }
        out.push_str("}\n");
        out
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ContextExport {
    pub id: String,
    pub rank_signature: String,
    pub projections: Vec<ComplexMatrix>,
}

#[derive(Clone, Debug, Serialize)]
pub struct PosetExport {
    pub contexts: Vec<ContextExport>,
    pub leq: Vec<[String; 2]>,
}

/// Finite stand-in for `V(H)`: contexts generated by every pairwise commuting
/// nonempty subset of `generators`, closed under coarsening (which also
/// closes it under intersection).
pub fn generate_context_poset(
    dim: usize,
    generators: &[HermitianOperator],
    include_trivial: bool,
) -> Result<ContextPoset, ContextError> {
    if generators.len() > MAX_GENERATORS {
        return Err(ContextError::TooManyGenerators(generators.len()));
    }
    let g = generators.len();
    let commute: Vec<Vec<bool>> = (0..g)
        .map(|i| (0..g).map(|j| generators[i].commutes_with(&generators[j])).collect())
        .collect();
    let mut seeds = Vec::new();
    for mask in 1u32..(1 << g) {
        let members: Vec<usize> = (0..g).filter(|i| mask >> i & 1 == 1).collect();
        let pairwise = members
            .iter()
            .all(|&i| members.iter().all(|&j| commute[i][j]));
        if !pairwise {
            continue;
        }
        let ops: Vec<HermitianOperator> = members.iter().map(|&i| generators[i].clone()).collect();
        seeds.push(context_from_commuting(dim, &ops)?);
    }
    contexts_closed_under_coarsening(dim, seeds, include_trivial)
}

/// Poset made of `seeds` and all their coarsenings.
pub fn contexts_closed_under_coarsening(
    dim: usize,
    seeds: impl IntoIterator<Item = AbelianContext>,
    include_trivial: bool,
) -> Result<ContextPoset, ContextError> {
    let mut all = Vec::new();
    for s in seeds {
        all.extend(coarsenings(&s)?);
    }
    ContextPoset::from_contexts(dim, all, include_trivial)
}

/// The maximal context whose minimal projections are the columns of a unitary.
pub fn context_from_basis(u: &ComplexMatrix) -> AbelianContext {
    let n = u.dim();
    let projs = (0..n)
        .map(|k| ProjectionOperator::onto_vector(&linalg::column(u, k)))
        .collect();
    AbelianContext::canonical(n, projs)
}

/// A context on `C^n` from a random basis, with the basis vectors grouped
/// into `blocks` nonempty minimal projections (`1 ≤ blocks ≤ n`).
pub fn random_context<R: rand::Rng + ?Sized>(n: usize, blocks: usize, rng: &mut R) -> AbelianContext {
    assert!((1..=n).contains(&blocks));
    let u = linalg::random_unitary(n, rng);
    let mut label: Vec<usize> = (0..n).map(|i| if i < blocks { i } else { rng.gen_range(0..blocks) }).collect();
    rand::seq::SliceRandom::shuffle(label.as_mut_slice(), rng);
    let projs = (0..blocks)
        .map(|b| {
            let m = (0..n)
                .filter(|&i| label[i] == b)
                .fold(ComplexMatrix::zeros(n), |acc, i| &acc + &ComplexMatrix::outer(&linalg::column(&u, i)));
            ProjectionOperator::new_unchecked(m.hermitian_part())
        })
        .collect();
    AbelianContext::canonical(n, projs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::qubit::*;

    fn vz() -> AbelianContext {
        context_from_commuting(2, &[sigma_z()]).unwrap()
    }

    fn vx() -> AbelianContext {
        context_from_commuting(2, &[sigma_x()]).unwrap()
    }

    #[test]
    fn context_from_sigma_z() {
        let v = vz();
        assert_eq!(v.num_blocks(), 2);
        assert!(v.position_of(&p_plus()).is_some());
        assert!(v.position_of(&p_minus()).is_some());
    }

    #[test]
    fn identity_generates_trivial_context() {
        let v = context_from_commuting(2, &[HermitianOperator::identity(2)]).unwrap();
        assert!(v.is_trivial());
        assert_eq!(v, AbelianContext::trivial(2));
        assert_eq!(context_from_commuting(3, &[]).unwrap(), AbelianContext::trivial(3));
    }

    #[test]
    fn two_qubit_z_context_is_diagonal() {
        let one = HermitianOperator::identity(2);
        let ops = [sigma_z().kron(&one), one.kron(&sigma_z())];
        let v = context_from_commuting(4, &ops).unwrap();
        assert_eq!(v, AbelianContext::diagonal(4));
        assert!(v.projections().iter().all(|p| p.rank() == 1));
    }

    #[test]
    fn non_commuting_is_rejected() {
        let err = context_from_commuting(2, &[sigma_z(), sigma_x()]).unwrap_err();
        assert!(matches!(err, ContextError::NonCommuting { first: 0, second: 1, .. }));
    }

    #[test]
    fn includes_examples() {
        let t = AbelianContext::trivial(2);
        assert!(includes(&t, &vz()).unwrap());
        assert!(includes(&vz(), &vz()).unwrap());
        assert!(!includes(&vz(), &vx()).unwrap());
        assert!(!includes(&vz(), &t).unwrap());
        assert!(includes(&vz(), &AbelianContext::trivial(3)).is_err());
    }

    #[test]
    fn coarsening_counts_are_bell_numbers() {
        assert_eq!(coarsenings(&AbelianContext::trivial(2)).unwrap().len(), 1);
        let cs = coarsenings(&vz()).unwrap();
        assert_eq!(cs.len(), 2);
        assert!(cs.contains(&vz()) && cs.contains(&AbelianContext::trivial(2)));
        assert_eq!(coarsenings(&AbelianContext::diagonal(3)).unwrap().len(), 5);
        assert_eq!(coarsenings(&AbelianContext::diagonal(4)).unwrap().len(), 15);
        assert!(matches!(
            coarsenings(&AbelianContext::diagonal(7)),
            Err(ContextError::TooManyBlocks(7))
        ));
        let bell: Vec<usize> = (0..=6).map(|k| set_partitions(k).len()).collect();
        assert_eq!(bell, vec![1, 1, 2, 5, 15, 52, 203]);
    }

    #[test]
    fn poset_of_incompatible_qubit_observables() {
        let p = generate_context_poset(2, &[sigma_z(), sigma_x()], true).unwrap();
        assert_eq!(p.len(), 3);
        let (iz, ix, it) = (p.index_of(&vz()).unwrap(), p.index_of(&vx()).unwrap(), p.trivial_index().unwrap());
        assert_eq!(it, 0);
        assert!(!p.leq(iz, ix) && !p.leq(ix, iz));
        assert!(p.leq(it, iz) && p.leq(it, ix));
        assert!(p.order_violations().is_empty());
        assert!(p.is_down_closed());

        let empty = generate_context_poset(2, &[], true).unwrap();
        assert_eq!(empty.len(), 1);
        assert!(empty.context(0).is_trivial());
        let unaugmented = generate_context_poset(2, &[sigma_z(), sigma_x()], false).unwrap();
        assert_eq!(unaugmented.len(), 2);
        assert!(unaugmented.trivial_index().is_none());
        assert!(unaugmented.is_down_closed());
    }

    #[test]
    fn poset_from_orthogonal_projection_generators() {
        let a = p_plus().kron(&p_plus()).as_operator();
        let b = p_minus().kron(&p_x_plus()).as_operator();
        let p = generate_context_poset(4, &[a.clone(), b.clone()], true).unwrap();
        let w = context_from_commuting(4, &[a, b]).unwrap();
        assert_eq!(w.num_blocks(), 3);
        for c in coarsenings(&w).unwrap() {
            assert!(p.index_of(&c).is_some());
        }
        assert!(p.is_down_closed());
    }

    #[test]
    fn direct_sum_embedding_examples() {
        let m = direct_sum_embed(&vz(), 2);
        let expected = AbelianContext::from_projections(
            4,
            vec![
                ProjectionOperator::new(ComplexMatrix::diagonal(&[1.0, 0.0, 0.0, 0.0])).unwrap(),
                ProjectionOperator::new(ComplexMatrix::diagonal(&[0.0, 1.0, 0.0, 0.0])).unwrap(),
                ProjectionOperator::new(ComplexMatrix::diagonal(&[0.0, 0.0, 1.0, 1.0])).unwrap(),
            ],
        )
        .unwrap();
        assert_eq!(m, expected);
        let mt = direct_sum_embed(&AbelianContext::trivial(2), 1);
        assert_eq!(mt.rank_signature(), "1+2");
        assert!(includes(&mt, &m).is_err());
        assert!(includes(&mt, &direct_sum_embed(&vz(), 1)).unwrap());
    }

    #[test]
    fn intersection_is_finest_common_coarsening() {
        assert!(intersection(&vz(), &vx()).unwrap().is_trivial());
        assert_eq!(intersection(&vz(), &vz()).unwrap(), vz());
        let w = tensor_product(&vz(), &vx());
        let v = ampliate(&vz(), 2);
        assert_eq!(intersection(&w, &v).unwrap(), v);
    }

    #[test]
    fn largest_factor_subalgebra_examples() {
        let product = tensor_product(&vz(), &vz());
        assert_eq!(largest_factor_subalgebra(&product, 2, 2).unwrap(), vz());

        let phi = ket(&[1.0, 0.0, 0.0, 1.0]);
        let p_phi = ProjectionOperator::onto_vector(&phi);
        let bell = AbelianContext::from_projections(4, vec![p_phi.clone(), p_phi.complement()]).unwrap();
        assert!(largest_factor_subalgebra(&bell, 2, 2).unwrap().is_trivial());

        let image = tensor_product(&vz(), &AbelianContext::trivial(2));
        assert_eq!(largest_factor_subalgebra(&image, 2, 2).unwrap(), vz());

        let a = p_plus().kron(&p_plus()).as_operator();
        let b = p_minus().kron(&p_x_plus()).as_operator();
        let twisted = context_from_commuting(4, &[a, b]).unwrap();
        assert!(largest_factor_subalgebra(&twisted, 2, 2).unwrap().is_trivial());
    }

    #[test]
    fn rank_signature_and_exports() {
        let p = generate_context_poset(2, &[sigma_z(), sigma_x()], true).unwrap();
        let export = p.export();
        assert_eq!(export.contexts.len(), 3);
        assert_eq!(export.contexts[0].rank_signature, "2");
        assert_eq!(export.leq.len(), 5);
        let dot = p.to_dot();
        assert!(dot.contains("V0 -> V1;") && dot.contains("V0 -> V2;"));
    }
}
