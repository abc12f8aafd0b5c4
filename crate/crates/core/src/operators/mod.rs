//! Finite-dimensional operator algebra on the truncated basis `e_1..e_n`.
//!
//! Every operator of the underlying Hilbert-space problem (drift, noise
//! operators, flow frames, semigroups) is represented by a dense real matrix
//! acting on `span{e_1..e_n}`.

mod expm;

use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use nalgebra::DMatrix;

use crate::error::{FlowError, Result};
use crate::rng::CounterRng;

pub use expm::matrix_exponential;

/// A bounded operator restricted to `span{e_1..e_n}`.
///
/// Constructors reject non-finite entries and empty or non-square matrices.
#[derive(Clone, PartialEq)]
pub struct TruncatedOperator {
    entries: DMatrix<f64>,
}

impl fmt::Debug for TruncatedOperator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "TruncatedOperator({}x{}) {}", self.dim(), self.dim(), self.entries)
    }
}

impl TruncatedOperator {
    pub fn new(entries: DMatrix<f64>) -> Result<Self> {
        if entries.nrows() == 0 {
            return Err(FlowError::InvalidOperator("dimension must be at least 1".into()));
        }
        if entries.nrows() != entries.ncols() {
            return Err(FlowError::InvalidOperator(format!(
                "operator matrix must be square, got {}x{}",
                entries.nrows(),
                entries.ncols()
            )));
        }
        let op = Self { entries };
        op.ensure_finite()?;
        Ok(op)
    }

    /// Builds an operator from row vectors.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        if let Some(bad) = rows.iter().find(|r| r.len() != n) {
            return Err(FlowError::InvalidOperator(format!(
                "row of length {} in a {n}-row operator",
                bad.len()
            )));
        }
        Self::new(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
    }

    pub fn identity(dim: usize) -> Self {
        assert!(dim >= 1, "dimension must be at least 1");
        Self {
            entries: DMatrix::identity(dim, dim),
        }
    }

    pub fn zeros(dim: usize) -> Self {
        assert!(dim >= 1, "dimension must be at least 1");
        Self {
            entries: DMatrix::zeros(dim, dim),
        }
    }

    pub fn diagonal(values: &[f64]) -> Result<Self> {
        let n = values.len();
        Self::new(DMatrix::from_fn(n, n, |i, j| if i == j { values[i] } else { 0.0 }))
    }

    /// The rank-one operator `e_i ⊗ e_j : x ↦ <x, e_j> e_i` (zero-based indices).
    pub fn rank_one(dim: usize, i: usize, j: usize) -> Self {
        let mut op = Self::zeros(dim);
        op.entries[(i, j)] = 1.0;
        op
    }

    /// Wraps a matrix produced internally; panics in debug builds if it is not finite.
    pub(crate) fn from_matrix_unchecked(entries: DMatrix<f64>) -> Self {
        debug_assert!(entries.nrows() == entries.ncols() && entries.nrows() > 0);
        Self { entries }
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.entries
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[(i, j)]
    }

    /// Row-major copy of the entries.
    pub fn to_row_major(&self) -> Vec<f64> {
        let n = self.dim();
        let mut out = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                out.push(self.entries[(i, j)]);
            }
        }
        out
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.dim())
            .map(|i| (0..self.dim()).map(|j| self.entries[(i, j)]).collect())
            .collect()
    }

    pub fn is_finite(&self) -> bool {
        self.entries.iter().all(|x| x.is_finite())
    }

    pub fn ensure_finite(&self) -> Result<()> {
        match self.entries.iter().position(|x| !x.is_finite()) {
            None => Ok(()),
            Some(pos) => {
                let (i, j) = (pos % self.dim(), pos / self.dim());
                Err(FlowError::InvalidOperator(format!(
                    "non-finite entry {} at ({i}, {j})",
                    self.entries[(i, j)]
                )))
            }
        }
    }

    pub fn transpose(&self) -> Self {
        Self {
            entries: self.entries.transpose(),
        }
    }

    pub fn scale(&self, factor: f64) -> Self {
        Self {
            entries: &self.entries * factor,
        }
    }

    /// `self · other`.
    pub fn compose(&self, other: &Self) -> Self {
        Self {
            entries: &self.entries * &other.entries,
        }
    }

    /// `self + factor · other`, in place.
    pub fn add_scaled(&mut self, factor: f64, other: &Self) {
        self.entries += &other.entries * factor;
    }

    pub fn trace(&self) -> f64 {
        self.entries.trace()
    }

    /// Singular values sorted in decreasing order.
    pub fn singular_values(&self) -> Vec<f64> {
        let mut s: Vec<f64> = self.entries.singular_values().iter().copied().collect();
        s.sort_by(|a, b| b.total_cmp(a));
        s
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.entries.norm()
    }

    /// `‖self·other − other·self‖`.
    pub fn commutator_norm(&self, other: &Self) -> f64 {
        let c = &self.entries * &other.entries - &other.entries * &self.entries;
        largest_singular_value(&c)
    }

    pub fn is_skew_symmetric(&self, tol: f64) -> bool {
        (&self.entries + self.entries.transpose()).amax() <= tol
    }
}

fn largest_singular_value(m: &DMatrix<f64>) -> f64 {
    m.singular_values().iter().fold(0.0_f64, |acc, &s| acc.max(s))
}

impl<'a> Mul<&'a TruncatedOperator> for &'a TruncatedOperator {
    type Output = TruncatedOperator;
    fn mul(self, rhs: &'a TruncatedOperator) -> TruncatedOperator {
        self.compose(rhs)
    }
}

impl<'a> Add<&'a TruncatedOperator> for &'a TruncatedOperator {
    type Output = TruncatedOperator;
    fn add(self, rhs: &'a TruncatedOperator) -> TruncatedOperator {
        TruncatedOperator {
            entries: &self.entries + &rhs.entries,
        }
    }
}

impl<'a> Sub<&'a TruncatedOperator> for &'a TruncatedOperator {
    type Output = TruncatedOperator;
    fn sub(self, rhs: &'a TruncatedOperator) -> TruncatedOperator {
        TruncatedOperator {
            entries: &self.entries - &rhs.entries,
        }
    }
}

impl Neg for &TruncatedOperator {
    type Output = TruncatedOperator;
    fn neg(self) -> TruncatedOperator {
        self.scale(-1.0)
    }
}

/// Operator norm `‖T‖ = σ_max(T)`.
pub fn operator_norm(op: &TruncatedOperator) -> Result<f64> {
    op.ensure_finite()?;
    Ok(largest_singular_value(op.matrix()))
}

/// Schatten `p`-norm `(Σ_j s_j(T)^p)^{1/p}` for `p ≥ 1`.
pub fn schatten_norm(op: &TruncatedOperator, p: f64) -> Result<f64> {
    if !(p >= 1.0) || !p.is_finite() {
        return Err(FlowError::Domain(format!("Schatten exponent must be >= 1, got {p}")));
    }
    op.ensure_finite()?;
    Ok(schatten_from_singular_values(&op.singular_values(), p))
}

/// Schatten norm of a list of singular values, scaled by the largest one so
/// that large `p` does not overflow.
pub(crate) fn schatten_from_singular_values(s: &[f64], p: f64) -> f64 {
    let smax = s.iter().fold(0.0_f64, |a, &b| a.max(b.abs()));
    if smax == 0.0 {
        return 0.0;
    }
    let sum: f64 = s.iter().map(|&x| (x.abs() / smax).powf(p)).sum();
    smax * sum.powf(1.0 / p)
}

/// A multi-index `α = (α_1..α_n)` over family members, `0` meaning the drift.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct MultiIndex {
    entries: Vec<usize>,
}

impl MultiIndex {
    pub fn new(entries: Vec<usize>) -> Result<Self> {
        if entries.is_empty() {
            return Err(FlowError::Domain("multi-index must be nonempty".into()));
        }
        Ok(Self { entries })
    }

    pub fn entries(&self) -> &[usize] {
        &self.entries
    }

    /// `|α|`.
    pub fn order(&self) -> usize {
        self.entries.len()
    }

    /// `α̂ = (α_2..α_n)`, `None` for order one.
    pub fn tail(&self) -> Option<MultiIndex> {
        (self.entries.len() > 1).then(|| MultiIndex {
            entries: self.entries[1..].to_vec(),
        })
    }

    /// All multi-indices of the given order over `0..=max_entry`, in
    /// lexicographic order.
    pub fn all_of_order(order: usize, max_entry: usize) -> Vec<MultiIndex> {
        let base = max_entry + 1;
        let count = base.pow(order as u32);
        (0..count)
            .map(|mut code| {
                let mut entries = vec![0; order];
                for slot in entries.iter_mut().rev() {
                    *slot = code % base;
                    code /= base;
                }
                MultiIndex { entries }
            })
            .collect()
    }
}

/// Drift `B_0` together with noise operators `B_1..B_K`.
#[derive(Debug, Clone, PartialEq)]
pub struct OperatorFamily {
    drift: TruncatedOperator,
    noise: Vec<TruncatedOperator>,
    norms: Vec<f64>,
    bound: f64,
}

impl OperatorFamily {
    pub fn new(drift: TruncatedOperator, noise: Vec<TruncatedOperator>) -> Result<Self> {
        let dim = drift.dim();
        for b in &noise {
            if b.dim() != dim {
                return Err(FlowError::DimensionMismatch {
                    expected: dim,
                    actual: b.dim(),
                });
            }
        }
        drift.ensure_finite()?;
        let norms = noise.iter().map(operator_norm).collect::<Result<Vec<_>>>()?;
        let bound = norms.iter().sum();
        Ok(Self {
            drift,
            noise,
            norms,
            bound,
        })
    }

    /// Zero drift.
    pub fn noise_only(dim: usize, noise: Vec<TruncatedOperator>) -> Result<Self> {
        Self::new(TruncatedOperator::zeros(dim), noise)
    }

    pub fn dim(&self) -> usize {
        self.drift.dim()
    }

    pub fn drift(&self) -> &TruncatedOperator {
        &self.drift
    }

    pub fn noise(&self) -> &[TruncatedOperator] {
        &self.noise
    }

    /// Number of noise operators `K`.
    pub fn noise_count(&self) -> usize {
        self.noise.len()
    }

    /// `‖B_k‖` for `k = 1..K`.
    pub fn norms(&self) -> &[f64] {
        &self.norms
    }

    /// `M = Σ_k ‖B_k‖` over the noise members.
    pub fn bound(&self) -> f64 {
        self.bound
    }

    /// Member `k` with `0` the drift.
    pub fn member(&self, k: usize) -> Result<&TruncatedOperator> {
        match k {
            0 => Ok(&self.drift),
            k if k <= self.noise.len() => Ok(&self.noise[k - 1]),
            _ => Err(FlowError::IndexOutOfRange {
                index: k,
                max: self.noise.len(),
            }),
        }
    }

    /// `B̃ = Σ_k B_k²`.
    pub fn sum_of_squares(&self) -> TruncatedOperator {
        let mut acc = TruncatedOperator::zeros(self.dim());
        for b in &self.noise {
            acc.add_scaled(1.0, &b.compose(b));
        }
        acc
    }

    pub fn with_drift(&self, drift: TruncatedOperator) -> Result<Self> {
        Self::new(drift, self.noise.clone())
    }

    /// Family of the dual equation `dZ = (−B_0* + B̃*) Z dt − Σ B_k* Z dW_k`.
    pub fn dual(&self) -> Self {
        let drift = &self.sum_of_squares().transpose() - &self.drift.transpose();
        let noise: Vec<_> = self.noise.iter().map(|b| b.transpose().scale(-1.0)).collect();
        Self {
            drift,
            noise,
            norms: self.norms.clone(),
            bound: self.bound,
        }
    }

    /// Checks that all members, drift included, commute pairwise:
    /// `‖B_iB_j − B_jB_i‖ ≤ 1e-10·‖B_i‖‖B_j‖`.
    pub fn ensure_commuting(&self) -> Result<()> {
        let members: Vec<&TruncatedOperator> =
            std::iter::once(&self.drift).chain(self.noise.iter()).collect();
        let norms: Vec<f64> = members
            .iter()
            .map(|m| largest_singular_value(m.matrix()))
            .collect();
        for i in 0..members.len() {
            for j in (i + 1)..members.len() {
                let defect = members[i].commutator_norm(members[j]);
                if defect > 1e-10 * norms[i] * norms[j] {
                    return Err(FlowError::NonCommuting { i, j, defect });
                }
            }
        }
        Ok(())
    }
}

/// `B^α = B_{α_1}···B_{α_n}`.
pub fn multi_index_operator(family: &OperatorFamily, alpha: &MultiIndex) -> Result<TruncatedOperator> {
    let mut acc = family.member(alpha.entries()[0])?.clone();
    for &k in &alpha.entries()[1..] {
        acc = acc.compose(family.member(k)?);
    }
    acc.ensure_finite()?;
    Ok(acc)
}

/// `M = Σ_{k≥1} ‖B_k‖`.
pub fn family_bound(family: &OperatorFamily) -> f64 {
    family.bound()
}

/// A random operator with i.i.d. normal entries rescaled to operator norm `norm`.
pub fn random_operator(dim: usize, norm: f64, seed: u64, stream: u64) -> TruncatedOperator {
    let mut rng = CounterRng::new(seed, stream, 0xB0);
    let m = DMatrix::from_fn(dim, dim, |_, _| rng.next_normal());
    let current = largest_singular_value(&m);
    let scale = if current > 0.0 { norm / current } else { 0.0 };
    TruncatedOperator::from_matrix_unchecked(m * scale)
}

/// A random family without structure: drift of norm `drift_norm`, `count`
/// noise operators whose norms sum to `total_noise_norm`.
pub fn random_family(
    dim: usize,
    count: usize,
    drift_norm: f64,
    total_noise_norm: f64,
    seed: u64,
) -> OperatorFamily {
    let drift = random_operator(dim, drift_norm, seed, 0);
    let each = if count > 0 { total_noise_norm / count as f64 } else { 0.0 };
    let noise = (0..count)
        .map(|k| random_operator(dim, each, seed, k as u64 + 1))
        .collect();
    OperatorFamily::new(drift, noise).expect("random family is well formed")
}

/// A random commuting family: every member is a polynomial in one random
/// symmetric matrix, so all members share an eigenbasis.
pub fn random_commuting_family(
    dim: usize,
    count: usize,
    drift_norm: f64,
    total_noise_norm: f64,
    seed: u64,
) -> OperatorFamily {
    let mut rng = CounterRng::new(seed, 0xC0, 0);
    let g = DMatrix::from_fn(dim, dim, |_, _| rng.next_normal());
    let sym = (&g + g.transpose()) * 0.5;
    let base = TruncatedOperator::from_matrix_unchecked(&sym / largest_singular_value(&sym).max(1e-300));
    let mut make = |target: f64| {
        // c0 I + c1 S + c2 S²
        let c: Vec<f64> = (0..3).map(|_| rng.next_normal()).collect();
        let mut m = TruncatedOperator::identity(dim).scale(c[0]);
        m.add_scaled(c[1], &base);
        m.add_scaled(c[2], &base.compose(&base));
        let n = largest_singular_value(m.matrix());
        if n > 0.0 {
            m.scale(target / n)
        } else {
            m
        }
    };
    let drift = make(drift_norm);
    let each = if count > 0 { total_noise_norm / count as f64 } else { 0.0 };
    let noise = (0..count).map(|_| make(each)).collect();
    OperatorFamily::new(drift, noise).expect("commuting family is well formed")
}

/// Cross-product operators `x(ξ) ↦ x(ξ) × g_k(ξ)` on `m` spatial nodes, each
/// acting as a skew-symmetric 3×3 block per node (dimension `3m`).
///
/// `fields[k][node]` is `g_k` at that node.
pub fn cross_product_family(fields: &[Vec<[f64; 3]>]) -> Result<OperatorFamily> {
    let nodes = fields.first().map(|f| f.len()).unwrap_or(0);
    if nodes == 0 {
        return Err(FlowError::Domain("cross-product family needs at least one node".into()));
    }
    let dim = 3 * nodes;
    let mut noise = Vec::with_capacity(fields.len());
    for g in fields {
        if g.len() != nodes {
            return Err(FlowError::DimensionMismatch {
                expected: nodes,
                actual: g.len(),
            });
        }
        let mut m = DMatrix::zeros(dim, dim);
        for (node, v) in g.iter().enumerate() {
            let o = 3 * node;
            // x × g as a matrix acting on x
            m[(o, o + 1)] = v[2];
            m[(o, o + 2)] = -v[1];
            m[(o + 1, o)] = -v[2];
            m[(o + 1, o + 2)] = v[0];
            m[(o + 2, o)] = v[1];
            m[(o + 2, o + 1)] = -v[0];
        }
        noise.push(TruncatedOperator::new(m)?);
    }
    OperatorFamily::noise_only(dim, noise)
}
