//! The diagonal case `A = Σ α_k e_k⊗e_k`, `B_k = σ_k e_k⊗e_k`.
//!
//! Everything is explicit here: the eigenvalue processes
//! `ζ_k(s,t) = exp{σ_k ΔW_k + (α_k − σ_k²/2)(t−s)}`, the square-integrability
//! and flow criteria, and the three-series quantities of the trace-class
//! argument.

mod rule;

use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

pub use rule::{combine, Expansion, Limit, Monomial, Rule};

use crate::error::{FlowError, Result};
use crate::flow::fmt_f64;
use crate::noise::brownian_increment;
use crate::operators::{OperatorFamily, TruncatedOperator};
use crate::special::{log_normal_cdf, normal_tail};

/// A supremum that may be `+∞`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum Bound {
    Finite(f64),
    Infinite,
}

impl Bound {
    pub fn is_finite(&self) -> bool {
        matches!(self, Bound::Finite(_))
    }

    pub fn value(&self) -> f64 {
        match self {
            Bound::Finite(v) => *v,
            Bound::Infinite => f64::INFINITY,
        }
    }
}

impl std::fmt::Display for Bound {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Bound::Finite(v) => write!(f, "{v}"),
            Bound::Infinite => f.write_str("+inf"),
        }
    }
}

/// Where a supremum comes from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", content = "k", rename_all = "snake_case")]
pub enum Witness {
    /// Attained at this index.
    AttainedAt(usize),
    /// Approached as `k → ∞`, possibly not attained.
    ApproachedAlongK,
    /// The sequence tends to `+∞`.
    DivergesAlongK,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SupReport {
    pub value: Bound,
    pub witness: Witness,
    /// Only indices up to the cutoff could be evaluated.
    pub undetermined_beyond_cutoff: bool,
}

/// `(α_k)`, `(σ_k)` and the largest simulated index.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagonalModel {
    alpha: Rule,
    sigma: Rule,
    cutoff: usize,
}

impl DiagonalModel {
    pub fn new(alpha: Rule, sigma: Rule, cutoff: usize) -> Result<Self> {
        if cutoff == 0 {
            return Err(FlowError::Domain("cutoff must be at least 1".into()));
        }
        alpha.validate()?;
        sigma.validate()?;
        for (name, rule) in [("alpha", &alpha), ("sigma", &sigma)] {
            if let Some(n) = rule.known_up_to() {
                if n < cutoff {
                    return Err(FlowError::DimensionMismatch {
                        expected: cutoff,
                        actual: n,
                    }
                    .context(format!("explicit {name} rule shorter than the cutoff")));
                }
            }
        }
        for k in 1..=cutoff {
            let s = sigma.eval(k).expect("checked above");
            if !(s >= 0.0) {
                return Err(FlowError::Domain(format!("σ_{k} = {s} must be >= 0")));
            }
        }
        Ok(Self {
            alpha,
            sigma,
            cutoff,
        })
    }

    /// `α_k = 0`, `σ_k = σ`.
    pub fn skorokhod(sigma: f64, cutoff: usize) -> Result<Self> {
        Self::new(Rule::constant(0.0), Rule::constant(sigma), cutoff)
    }

    pub fn alpha(&self) -> &Rule {
        &self.alpha
    }

    pub fn sigma(&self) -> &Rule {
        &self.sigma
    }

    pub fn cutoff(&self) -> usize {
        self.cutoff
    }

    pub fn with_cutoff(&self, cutoff: usize) -> Result<Self> {
        Self::new(self.alpha.clone(), self.sigma.clone(), cutoff)
    }

    fn at(rule: &Rule, k: usize) -> Result<f64> {
        if k == 0 {
            return Err(FlowError::IndexOutOfRange { index: 0, max: 0 });
        }
        rule.eval(k).ok_or(FlowError::IndexOutOfRange {
            index: k,
            max: rule.known_up_to().unwrap_or(0),
        })
    }

    pub fn alpha_at(&self, k: usize) -> Result<f64> {
        Self::at(&self.alpha, k)
    }

    pub fn sigma_at(&self, k: usize) -> Result<f64> {
        Self::at(&self.sigma, k)
    }

    /// The first `dim` modes as matrices: drift `diag(α_k)`, noise
    /// `B_k = σ_k e_k⊗e_k`.
    pub fn to_family(&self, dim: usize) -> Result<OperatorFamily> {
        let alpha: Vec<f64> = (1..=dim).map(|k| self.alpha_at(k)).collect::<Result<_>>()?;
        let noise = (1..=dim)
            .map(|k| {
                let mut d = vec![0.0; dim];
                d[k - 1] = self.sigma_at(k)?;
                TruncatedOperator::diagonal(&d)
            })
            .collect::<Result<_>>()?;
        OperatorFamily::new(TruncatedOperator::diagonal(&alpha)?, noise)
    }
}

fn horizon(s: f64, t: f64) -> Result<f64> {
    if !(t >= s) || !s.is_finite() || !t.is_finite() {
        return Err(FlowError::Domain(format!("need s <= t, got s={s}, t={t}")));
    }
    Ok(t - s)
}

/// `ζ_k(s,t) = exp{σ_k ΔW_k + (α_k − σ_k²/2)(t−s)}`.
pub fn zeta(model: &DiagonalModel, k: usize, s: f64, t: f64, dw: f64) -> Result<f64> {
    let delta = horizon(s, t)?;
    let a = model.alpha_at(k)?;
    let sg = model.sigma_at(k)?;
    Ok((sg * dw + (a - 0.5 * sg * sg) * delta).exp())
}

/// `E ζ_k = e^{α_kΔ}` and `E ζ_k² = e^{(2α_k+σ_k²)Δ}`.
pub fn zeta_moments(model: &DiagonalModel, k: usize, delta: f64) -> Result<(f64, f64)> {
    let a = model.alpha_at(k)?;
    let sg = model.sigma_at(k)?;
    Ok(((a * delta).exp(), ((2.0 * a + sg * sg) * delta).exp()))
}

/// `ζ_k` driven by path `k−1` of `seed` over a horizon `Δ`.
pub fn sample_zeta(model: &DiagonalModel, k: usize, delta: f64, seed: u64) -> Result<f64> {
    zeta(model, k, 0.0, delta, brownian_increment(seed, k - 1, delta))
}

const DENSE_EVAL: usize = 100_000;

/// `sup_k x_k` for a sequence with symbolic branches (or `None` when only
/// values up to `known` are available).
fn sup_of(
    branches: Option<Vec<Expansion>>,
    eval: impl Fn(usize) -> f64,
    known: usize,
) -> SupReport {
    let mut best = f64::NEG_INFINITY;
    let mut arg = 1;
    let mut consider = |k: usize| {
        let v = eval(k);
        if v > best {
            best = v;
            arg = k;
        }
    };
    match branches {
        None => {
            for k in 1..=known {
                consider(k);
            }
            SupReport {
                value: Bound::Finite(best),
                witness: Witness::AttainedAt(arg),
                undetermined_beyond_cutoff: true,
            }
        }
        Some(branches) => {
            let limits: Vec<Limit> = branches.iter().map(Expansion::limit).collect();
            if limits.contains(&Limit::PosInf) {
                return SupReport {
                    value: Bound::Infinite,
                    witness: Witness::DivergesAlongK,
                    undetermined_beyond_cutoff: false,
                };
            }
            // monomial sums are eventually monotone: a dense prefix plus a
            // logarithmic sweep, then the limits
            for k in 1..=known.max(DENSE_EVAL) {
                consider(k);
            }
            let mut k = known.max(DENSE_EVAL) as f64;
            while k < 1e15 {
                k *= 1.5;
                consider(k as usize);
                consider(k as usize + 1);
            }
            let limit_sup = limits
                .iter()
                .filter_map(|l| match l {
                    Limit::Finite(v) => Some(*v),
                    _ => None,
                })
                .fold(f64::NEG_INFINITY, f64::max);
            if limit_sup >= best {
                SupReport {
                    value: Bound::Finite(limit_sup),
                    witness: Witness::ApproachedAlongK,
                    undetermined_beyond_cutoff: false,
                }
            } else {
                SupReport {
                    value: Bound::Finite(best),
                    witness: Witness::AttainedAt(arg),
                    undetermined_beyond_cutoff: false,
                }
            }
        }
    }
}

fn known_range(model: &DiagonalModel) -> usize {
    match (model.alpha.known_up_to(), model.sigma.known_up_to()) {
        (None, None) => model.cutoff,
        (a, s) => a.unwrap_or(usize::MAX).min(s.unwrap_or(usize::MAX)),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Solvability {
    pub solvable: bool,
    /// `sup_k (2α_k + σ_k²)`.
    pub sup: SupReport,
}

/// Square-integrable solutions exist for every initial value iff
/// `sup_k (2α_k + σ_k²) < ∞`.
pub fn l2_solvability(model: &DiagonalModel) -> Solvability {
    let branches = match (model.alpha.branches(), model.sigma.branches()) {
        (Some(a), Some(s)) => Some(combine(&a, &s, |a, s| a.scale(2.0).add(&s.mul(s)))),
        _ => None,
    };
    let eval = |k| {
        let a = model.alpha.eval(k).unwrap_or(f64::NAN);
        let s = model.sigma.eval(k).unwrap_or(f64::NAN);
        2.0 * a + s * s
    };
    let sup = sup_of(branches, eval, known_range(model));
    Solvability {
        solvable: sup.value.is_finite(),
        sup,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RhoReport {
    /// `ρ(s,t) = sup_k {(α_k − σ_k²/2)√(t−s) + σ_k√(2 ln k)}`.
    pub rho: SupReport,
    /// `sup_k {(α_k − σ_k²/2)(t−s) + σ_k√(t−s)√(2 ln k)} = √(t−s)·ρ(s,t)`, the
    /// form that appears when bounding `sup_k ζ_k`.
    pub proof_form: Bound,
}

/// The flow criterion: `ρ(s,t) < ∞` iff the diagonal equation defines a flow.
pub fn flow_criterion_rho(model: &DiagonalModel, s: f64, t: f64) -> Result<RhoReport> {
    let delta = horizon(s, t)?;
    if delta == 0.0 {
        return Err(FlowError::Domain("ρ(s,t) needs s < t".into()));
    }
    let sd = delta.sqrt();
    let branches = match (model.alpha.branches(), model.sigma.branches()) {
        (Some(a), Some(sg)) => Some(combine(&a, &sg, |a, sg| {
            a.add(&sg.mul(sg).scale(-0.5))
                .scale(sd)
                .add(&sg.mul_log(0.5).scale(std::f64::consts::SQRT_2))
        })),
        _ => None,
    };
    let eval = |k: usize| {
        let a = model.alpha.eval(k).unwrap_or(f64::NAN);
        let sg = model.sigma.eval(k).unwrap_or(f64::NAN);
        (a - 0.5 * sg * sg) * sd + sg * (2.0 * (k as f64).ln()).sqrt()
    };
    let rho = sup_of(branches, eval, known_range(model));
    let proof_form = match rho.value {
        Bound::Finite(v) => Bound::Finite(sd * v),
        Bound::Infinite => Bound::Infinite,
    };
    Ok(RhoReport { rho, proof_form })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Classification {
    /// `σ_k → 0`: eigenvalues accumulate away from 0, not compact.
    NoncompactLimit,
    /// `σ_k → ∞`: trace class almost surely.
    TraceClassAs,
    /// Odd and even indices behave differently.
    Mixed,
    /// Not decidable from the rule (explicit values).
    Undetermined,
}

/// Spectral type of `𝒳(s,t)` for `α_k = 0` under a finite flow criterion.
///
/// A finite nonzero accumulation point of `σ_k`, or `ρ(s,t) = ∞`, is reported
/// as inconsistent input.
pub fn classify_spectrum(model: &DiagonalModel, s: f64, t: f64) -> Result<Classification> {
    match model.alpha.branches() {
        Some(a) if a.iter().all(|e| e.terms().is_empty()) => {}
        _ => {
            return Err(FlowError::InconsistentInput(
                "spectral classification assumes α_k = 0".into(),
            ))
        }
    }
    let Some(sig) = model.sigma.branches() else {
        return Ok(Classification::Undetermined);
    };
    let limits: Vec<Limit> = sig.iter().map(Expansion::limit).collect();
    for l in &limits {
        match l {
            Limit::Finite(v) if *v != 0.0 => {
                return Err(FlowError::InconsistentInput(format!(
                    "σ_k accumulates at {v}; under a finite flow criterion the only possible \
                     accumulation points are 0 and +∞"
                )))
            }
            Limit::NegInf => {
                return Err(FlowError::InconsistentInput("σ_k must be nonnegative".into()))
            }
            _ => {}
        }
    }
    let rho = flow_criterion_rho(model, s, t)?;
    if !rho.rho.value.is_finite() {
        return Err(FlowError::InconsistentInput(
            "ρ(s,t) = +∞: the equation defines no flow, so the spectrum is not classified".into(),
        ));
    }
    let all_zero = limits.iter().all(|l| *l == Limit::Finite(0.0));
    let all_inf = limits.iter().all(|l| *l == Limit::PosInf);
    if all_zero {
        // sup σ_k √(ln k) < ∞
        if sig.iter().any(|e| e.mul_log(0.5).limit() == Limit::PosInf) {
            return Err(FlowError::InconsistentInput(
                "σ_k → 0 but σ_k√(log k) is unbounded".into(),
            ));
        }
        Ok(Classification::NoncompactLimit)
    } else if all_inf {
        if !sigma_over_sqrt_log_diverges(model).unwrap_or(false) {
            return Err(FlowError::InconsistentInput(
                "σ_k → ∞ but σ_k/√(log k) does not".into(),
            ));
        }
        Ok(Classification::TraceClassAs)
    } else {
        Ok(Classification::Mixed)
    }
}

/// `σ_k/√(ln k) → ∞` along every parity (`None` for explicit rules).
pub fn sigma_over_sqrt_log_diverges(model: &DiagonalModel) -> Option<bool> {
    let sig = model.sigma.branches()?;
    Some(sig.iter().all(|e| e.mul_log(-0.5).limit() == Limit::PosInf))
}

/// `δ_k = b²σ_k²/(2 ln k) → ∞` along every parity, `b = √(t−s)/2`.
pub fn delta_diverges(model: &DiagonalModel, s: f64, t: f64) -> Result<Option<bool>> {
    let b = horizon(s, t)?.sqrt() / 2.0;
    Ok(model.sigma.branches().map(|sig| {
        sig.iter()
            .all(|e| e.mul(e).mul_log(-1.0).scale(b * b / 2.0).limit() == Limit::PosInf)
    }))
}

/// Verdict for a partial-sum curve.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Convergence {
    Converges,
    Diverges,
    Undetermined,
}

/// Decade-increment test: with `I_j = S(10^j) − S(10^{j−1})`, the last three
/// ratios `I_{j+1}/I_j` all below 0.9 ⇒ converges; all at least 0.99 ⇒
/// diverges. Needs `K ≥ 10^4`.
pub fn decade_verdict(partial_sums: &[f64]) -> Convergence {
    let mut decades = Vec::new();
    let mut d = 1usize;
    while d <= partial_sums.len() {
        decades.push(partial_sums[d - 1]);
        d *= 10;
    }
    if decades.len() < 5 {
        return Convergence::Undetermined;
    }
    let total = partial_sums.last().copied().unwrap_or(0.0).abs();
    let inc: Vec<f64> = decades.windows(2).map(|w| w[1] - w[0]).collect();
    let last = &inc[inc.len() - 4..];
    if last[1..].iter().all(|i| i.abs() <= 1e-16 * total) {
        return Convergence::Converges;
    }
    let ratios: Vec<f64> = last
        .windows(2)
        .map(|w| if w[0] == 0.0 { f64::INFINITY } else { w[1] / w[0] })
        .collect();
    if ratios.iter().all(|r| *r < 0.9 && *r >= 0.0) {
        Convergence::Converges
    } else if ratios.iter().all(|r| *r >= 0.99) {
        Convergence::Diverges
    } else {
        Convergence::Undetermined
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeriesCurve {
    /// `partial_sums[k−1] = Σ_{j≤k} term_j`.
    pub partial_sums: Vec<f64>,
    pub verdict: Convergence,
}

impl SeriesCurve {
    fn from_terms(terms: &[f64]) -> Self {
        let mut acc = 0.0;
        let partial_sums: Vec<f64> = terms
            .iter()
            .map(|t| {
                acc += t;
                acc
            })
            .collect();
        let verdict = decade_verdict(&partial_sums);
        Self {
            partial_sums,
            verdict,
        }
    }
}

/// Terms and partial sums of the three series for `Y_k = ζ_k 1{ζ_k ≤ 1}`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ThreeSeriesReport {
    pub b: f64,
    /// `Σ P(ζ_k > 1)`.
    pub exceedance: SeriesCurve,
    /// `Σ E Y_k`.
    pub truncated_mean: SeriesCurve,
    /// `Σ Var Y_k`.
    pub truncated_variance: SeriesCurve,
    pub exceedance_terms: Vec<f64>,
    pub mean_terms: Vec<f64>,
    pub variance_terms: Vec<f64>,
    /// `δ_k = b²σ_k²/(2 ln k)`; `+∞` at `k = 1` when `σ_1 > 0`.
    pub delta: Vec<f64>,
    /// `Var Y_k ≤ E Y_k` for every computed `k`.
    pub variance_dominated: bool,
    /// `P(ζ_k > 1) ≤ k^{−δ_k}/(√(2π) b σ_k)` for every `k ≥ 2` (only checked
    /// when `α_k = 0` on the range).
    pub tail_bound_holds: Option<bool>,
}

impl ThreeSeriesReport {
    pub fn all_converge(&self) -> bool {
        [&self.exceedance, &self.truncated_mean, &self.truncated_variance]
            .iter()
            .all(|c| c.verdict == Convergence::Converges)
    }
}

/// `(P(ζ > 1), E ζ1{ζ≤1}, Var ζ1{ζ≤1})` for one mode over a horizon `Δ`.
///
/// With `ln ζ = μ + cZ`, `E ζ^m 1{ζ ≤ 1} = e^{mμ + m²c²/2} Φ(−(μ + mc²)/c)`.
pub fn three_series_terms(alpha: f64, sigma: f64, delta: f64) -> (f64, f64, f64) {
    if sigma == 0.0 || delta == 0.0 {
        let z = (alpha * delta).exp();
        return if z > 1.0 { (1.0, 0.0, 0.0) } else { (0.0, z, 0.0) };
    }
    let c = sigma * delta.sqrt();
    let mu = (alpha - 0.5 * sigma * sigma) * delta;
    let p = normal_tail(-mu / c);
    let ey = (mu + 0.5 * c * c + log_normal_cdf(-(mu + c * c) / c)).exp();
    let ey2 = (2.0 * mu + 2.0 * c * c + log_normal_cdf(-(mu + 2.0 * c * c) / c)).exp();
    let var = (ey2 - ey * ey).max(0.0);
    (p, ey, var)
}

/// The three series of the trace-class argument up to `k_max`.
pub fn three_series_diagnostic(
    model: &DiagonalModel,
    s: f64,
    t: f64,
    k_max: usize,
) -> Result<ThreeSeriesReport> {
    let delta = horizon(s, t)?;
    let b = delta.sqrt() / 2.0;
    let rows: Vec<(f64, f64, f64, f64, Option<bool>)> = (1..=k_max)
        .into_par_iter()
        .map(|k| {
            let a = model.alpha_at(k)?;
            let sg = model.sigma_at(k)?;
            let (p, ey, var) = three_series_terms(a, sg, delta);
            let lk = (k as f64).ln();
            let d = if k == 1 {
                if sg > 0.0 { f64::INFINITY } else { 0.0 }
            } else {
                b * b * sg * sg / (2.0 * lk)
            };
            let bound_ok = (a == 0.0 && k >= 2 && sg > 0.0).then(|| {
                let log_bound = -d * lk - 0.5 * (2.0 * std::f64::consts::PI).ln() - (b * sg).ln();
                p <= log_bound.exp() * (1.0 + 1e-12)
            });
            Ok((p, ey, var, d, bound_ok))
        })
        .collect::<Result<_>>()?;
    let exceedance_terms: Vec<f64> = rows.iter().map(|r| r.0).collect();
    let mean_terms: Vec<f64> = rows.iter().map(|r| r.1).collect();
    let variance_terms: Vec<f64> = rows.iter().map(|r| r.2).collect();
    let delta_k = rows.iter().map(|r| r.3).collect();
    let variance_dominated = rows.iter().all(|r| r.2 <= r.1);
    let alpha_zero = (1..=k_max).all(|k| model.alpha.eval(k) == Some(0.0));
    let tail_bound_holds = alpha_zero.then(|| rows.iter().all(|r| r.4.unwrap_or(true)));
    Ok(ThreeSeriesReport {
        b,
        exceedance: SeriesCurve::from_terms(&exceedance_terms),
        truncated_mean: SeriesCurve::from_terms(&mean_terms),
        truncated_variance: SeriesCurve::from_terms(&variance_terms),
        exceedance_terms,
        mean_terms,
        variance_terms,
        delta: delta_k,
        variance_dominated,
        tail_bound_holds,
    })
}

/// One sampled path of `Σ_{j≤k} ζ_j(s,t)` and the mean curve `Σ_{j≤k} e^{α_jΔ}`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceCurve {
    pub partial_sums: Vec<f64>,
    pub analytic_mean: Vec<f64>,
}

impl TraceCurve {
    /// `(S(K) − S(⌊K/10⌋))/S(K)`.
    pub fn last_decade_relative_change(&self) -> f64 {
        let n = self.partial_sums.len();
        let total = self.partial_sums[n - 1];
        let earlier = if n >= 10 { self.partial_sums[n / 10 - 1] } else { 0.0 };
        (total - earlier) / total
    }

    /// Columns `k, partial_sum, analytic_mean`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(out);
        wtr.write_record(["k", "partial_sum", "analytic_mean"])?;
        for (i, (s, m)) in self.partial_sums.iter().zip(&self.analytic_mean).enumerate() {
            wtr.write_record([(i + 1).to_string(), fmt_f64(*s), fmt_f64(*m)])?;
        }
        wtr.flush()?;
        Ok(())
    }
}

/// Samples `ζ_1..ζ_K` with the increments of [`crate::noise::sample_wiener`]
/// (path `k−1` drives mode `k`).
pub fn sample_trace(model: &DiagonalModel, s: f64, t: f64, seed: u64, k_max: usize) -> Result<TraceCurve> {
    let delta = horizon(s, t)?;
    let values: Vec<(f64, f64)> = (1..=k_max)
        .into_par_iter()
        .map(|k| {
            let z = zeta(model, k, s, t, brownian_increment(seed, k - 1, delta))?;
            Ok((z, (model.alpha_at(k)? * delta).exp()))
        })
        .collect::<Result<_>>()?;
    let mut acc = 0.0;
    let mut mean = 0.0;
    let mut partial_sums = Vec::with_capacity(k_max);
    let mut analytic_mean = Vec::with_capacity(k_max);
    for (z, m) in values {
        acc += z;
        mean += m;
        partial_sums.push(acc);
        analytic_mean.push(mean);
    }
    Ok(TraceCurve {
        partial_sums,
        analytic_mean,
    })
}

/// `max_{j≤k} ζ_j` for one seed, every `k ≤ k_max`.
pub fn running_max_zeta(model: &DiagonalModel, delta: f64, seed: u64, k_max: usize) -> Result<Vec<f64>> {
    let values: Vec<f64> = (1..=k_max)
        .into_par_iter()
        .map(|k| sample_zeta(model, k, delta, seed))
        .collect::<Result<_>>()?;
    let mut best = f64::NEG_INFINITY;
    Ok(values
        .into_iter()
        .map(|v| {
            best = best.max(v);
            best
        })
        .collect())
}

/// Sup-norm functionals of a system of multiplication operators `B_k h = h e_k`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MultiplicationInputs {
    /// `‖Σ_k e_k²‖_∞`.
    pub sum_sq_sup: Bound,
    /// `‖Σ_k ln√k |e_k|‖_∞`, the functional of the sufficient flow criterion
    /// as stated for general multiplication systems.
    pub log_sqrt_sum_sup: Option<Bound>,
    /// `Σ_k |a_k| √(ln k)`, the functional used for the homogeneous field.
    pub sqrt_log_sum_sup: Option<Bound>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MultiplicationVerdicts {
    pub l2_solvable: bool,
    pub flow_sufficient_log_sqrt: Option<bool>,
    pub flow_sufficient_sqrt_log: Option<bool>,
    /// `Σ_k e_k²` when it is constant in space (`μ(ℝ^d)` for a homogeneous
    /// field).
    pub total_mass: Option<f64>,
}

pub fn multiplication_criteria(inputs: &MultiplicationInputs) -> MultiplicationVerdicts {
    MultiplicationVerdicts {
        l2_solvable: inputs.sum_sq_sup.is_finite(),
        flow_sufficient_log_sqrt: inputs.log_sqrt_sum_sup.map(|b| b.is_finite()),
        flow_sufficient_sqrt_log: inputs.sqrt_log_sum_sup.map(|b| b.is_finite()),
        total_mass: None,
    }
}

/// Series `Σ_k x_k` of a symbolic rule: finiteness decided from the dominant
/// monomial, value summed to `k_max` (the tail is not added).
fn rule_series(e: &Expansion, eval: impl Fn(usize) -> f64 + Sync + Send, k_max: usize) -> Bound {
    if e.series_converges() {
        Bound::Finite((1..=k_max).into_par_iter().map(eval).collect::<Vec<_>>().iter().sum())
    } else {
        Bound::Infinite
    }
}

/// Functionals for the trigonometric field `Σ_k a_k (cos⟨λ_k,ξ⟩ W_k + sin⟨λ_k,ξ⟩ W̃_k)`:
/// `Σ e² = Σ a_k² = μ(ℝ^d)` pointwise, and `‖e‖_∞ = |a_k|`.
pub fn homogeneous_field_criteria(coefs: &Rule, k_max: usize) -> Result<MultiplicationVerdicts> {
    coefs.validate()?;
    let branches = coefs.branches().ok_or_else(|| {
        FlowError::InconsistentInput("field coefficients must be a symbolic rule".into())
    })?;
    if branches.len() != 1 {
        return Err(FlowError::InconsistentInput(
            "field coefficients must not be interleaved".into(),
        ));
    }
    let a = &branches[0];
    let a_abs = |k: usize| coefs.eval(k).unwrap_or(f64::NAN).abs();
    let sum_sq = rule_series(&a.mul(a), |k| a_abs(k).powi(2), k_max);
    let log_sqrt = rule_series(&a.mul_log(1.0), |k| 0.5 * (k as f64).ln() * a_abs(k), k_max);
    let sqrt_log = rule_series(&a.mul_log(0.5), |k| (k as f64).ln().sqrt() * a_abs(k), k_max);
    let mut v = multiplication_criteria(&MultiplicationInputs {
        sum_sq_sup: sum_sq,
        log_sqrt_sum_sup: Some(log_sqrt),
        sqrt_log_sum_sup: Some(sqrt_log),
    });
    v.total_mass = sum_sq.is_finite().then(|| sum_sq.value());
    Ok(v)
}

/// `Σ_k e_k²(ξ) = ξ_1···ξ_d` for the Brownian sheet.
pub fn sheet_sum_of_squares(point: &[f64]) -> f64 {
    point.iter().product()
}

/// Brownian sheet on `[0, L)^d`: `‖Σ e_k²‖_∞ = L^d`.
pub fn sheet_criteria(side: f64, dims: usize) -> Result<MultiplicationVerdicts> {
    if !(side > 0.0) || !side.is_finite() {
        return Err(FlowError::Domain(format!(
            "the sheet needs a bounded domain, got L = {side}"
        )));
    }
    Ok(multiplication_criteria(&MultiplicationInputs {
        sum_sq_sup: Bound::Finite(side.powi(dims as i32)),
        log_sqrt_sum_sup: None,
        sqrt_log_sum_sup: None,
    }))
}

/// Everything known about a diagonal model at `(s, t)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CriteriaReport {
    pub l2: Solvability,
    pub rho: RhoReport,
    pub classification: Option<Classification>,
    /// Why no classification was produced.
    pub classification_note: Option<String>,
    pub three_series: Option<ThreeSeriesReport>,
}

pub fn criteria_report(model: &DiagonalModel, s: f64, t: f64, k_max: usize) -> Result<CriteriaReport> {
    let l2 = l2_solvability(model);
    let rho = flow_criterion_rho(model, s, t)?;
    let (classification, classification_note) = match classify_spectrum(model, s, t) {
        Ok(c) => (Some(c), None),
        Err(e) => (None, Some(e.to_string())),
    };
    let three_series = if classification == Some(Classification::TraceClassAs) {
        Some(three_series_diagnostic(model, s, t, k_max)?)
    } else {
        None
    };
    Ok(CriteriaReport {
        l2,
        rho,
        classification,
        classification_note,
        three_series,
    })
}

#[cfg(test)]
mod tests;
