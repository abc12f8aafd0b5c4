//! Truncated Wiener chaos `𝒴 = I + Σ_n Σ_{|α|=n} I_α B^α`.
//!
//! Two routes are provided. [`chaos_flow`] aggregates each order,
//! `Y_n = Σ_{|α|=n} I_α B^α`, and advances `dY_n = Σ_k B_k Y_{n−1} dW_k`
//! with left-point sums. [`iterated_integrals`] keeps every scalar `I_α`
//! (rolling, current grid time only) and [`chaos_terminal_from_integrals`]
//! assembles the operator sum explicitly. On the same grid both are the same
//! finite sum, so they agree to rounding.

use statrs::function::gamma::ln_gamma;

use super::{FlowSample, SolverTag};
use crate::error::{FlowError, Result};
use crate::noise::WienerPaths;
use crate::operators::{MultiIndex, OperatorFamily, TruncatedOperator};

/// Refuse chaos expansions with more index tuples than this.
pub const CHAOS_INDEX_LIMIT: f64 = 1e7;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ChaosConfig {
    /// Chaos depth `n_max ≥ 1`.
    pub max_order: usize,
    /// Noise members `B_1..B_K` used.
    pub index_cutoff: usize,
    /// Moment parameter `L ≥ 1` for [`chaos_tail_bound`].
    pub moment_l: u32,
}

impl ChaosConfig {
    pub fn new(max_order: usize, index_cutoff: usize, moment_l: u32) -> Result<Self> {
        let cfg = Self {
            max_order,
            index_cutoff,
            moment_l,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_order == 0 {
            return Err(FlowError::Domain("chaos order must be at least 1".into()));
        }
        if self.moment_l == 0 {
            return Err(FlowError::Domain("moment parameter L must be at least 1".into()));
        }
        let count = ((self.index_cutoff + 1) as f64).powi(self.max_order as i32);
        if count > CHAOS_INDEX_LIMIT {
            return Err(FlowError::ChaosTooLarge {
                count,
                limit: CHAOS_INDEX_LIMIT,
            });
        }
        Ok(())
    }
}

fn check_cutoff(cfg: &ChaosConfig, family: &OperatorFamily, paths: &WienerPaths) -> Result<()> {
    cfg.validate()?;
    if cfg.index_cutoff > family.noise_count() {
        return Err(FlowError::IndexOutOfRange {
            index: cfg.index_cutoff,
            max: family.noise_count(),
        });
    }
    if cfg.index_cutoff > paths.count() {
        return Err(FlowError::PathShortfall {
            needed: cfg.index_cutoff,
            available: paths.count(),
        });
    }
    Ok(())
}

/// `[Δt, ΔW_1, …, ΔW_K]` for step `i`.
fn step_increments(paths: &WienerPaths, cutoff: usize, i: usize) -> Vec<f64> {
    std::iter::once(paths.grid().dt())
        .chain((0..cutoff).map(|k| paths.increment(k, i)))
        .collect()
}

struct ChaosRun {
    frames: Vec<TruncatedOperator>,
    orders: Vec<TruncatedOperator>,
}

fn run_chaos(family: &OperatorFamily, paths: &WienerPaths, cfg: &ChaosConfig) -> Result<ChaosRun> {
    check_cutoff(cfg, family, paths)?;
    let n = family.dim();
    let members: Vec<&TruncatedOperator> = (0..=cfg.index_cutoff)
        .map(|k| family.member(k))
        .collect::<Result<_>>()?;
    let mut orders = vec![TruncatedOperator::zeros(n); cfg.max_order + 1];
    orders[0] = TruncatedOperator::identity(n);
    let mut frames = Vec::with_capacity(paths.grid().steps() + 1);
    frames.push(TruncatedOperator::identity(n));
    for i in 0..paths.grid().steps() {
        let d = step_increments(paths, cfg.index_cutoff, i);
        let mut weighted = TruncatedOperator::zeros(n);
        for (b, dk) in members.iter().zip(&d) {
            weighted.add_scaled(*dk, b);
        }
        // descending so that order n − 1 is still at the left point
        for order in (1..=cfg.max_order).rev() {
            let (lower, upper) = orders.split_at_mut(order);
            upper[0].add_scaled(1.0, &weighted.compose(&lower[order - 1]));
        }
        let mut frame = TruncatedOperator::identity(n);
        for y in &orders[1..] {
            frame.add_scaled(1.0, y);
        }
        frames.push(frame);
    }
    Ok(ChaosRun { frames, orders })
}

/// The order-`n_max` chaos truncation of `𝒴(s, t_i)` on every grid point.
pub fn chaos_flow(family: &OperatorFamily, paths: &WienerPaths, cfg: &ChaosConfig) -> Result<FlowSample> {
    let run = run_chaos(family, paths, cfg)?;
    FlowSample::new(
        *paths.grid(),
        run.frames,
        SolverTag::Chaos,
        paths.seed(),
        paths.origin(),
    )
}

/// Terminal homogeneous chaoses `Y_0 = I, Y_1, …, Y_{n_max}`.
pub fn chaos_orders(
    family: &OperatorFamily,
    paths: &WienerPaths,
    cfg: &ChaosConfig,
) -> Result<Vec<TruncatedOperator>> {
    Ok(run_chaos(family, paths, cfg)?.orders)
}

/// Scalar iterated integrals `I_α(s, t_N)` for every `α` with entries in
/// `0..=K` and order `1..=n_max`.
#[derive(Debug, Clone, PartialEq)]
pub struct IteratedIntegrals {
    index_cutoff: usize,
    /// `values[n − 1][code(α)]` with `α_1` the most significant digit.
    values: Vec<Vec<f64>>,
}

impl IteratedIntegrals {
    pub fn max_order(&self) -> usize {
        self.values.len()
    }

    pub fn index_cutoff(&self) -> usize {
        self.index_cutoff
    }

    pub fn get(&self, alpha: &MultiIndex) -> Result<f64> {
        let n = alpha.order();
        if n > self.max_order() {
            return Err(FlowError::IndexOutOfRange {
                index: n,
                max: self.max_order(),
            });
        }
        let base = self.index_cutoff + 1;
        let mut code = 0;
        for &a in alpha.entries() {
            if a > self.index_cutoff {
                return Err(FlowError::IndexOutOfRange {
                    index: a,
                    max: self.index_cutoff,
                });
            }
            code = code * base + a;
        }
        Ok(self.values[n - 1][code])
    }

    /// All values of one order, in lexicographic order of `α`.
    pub fn order(&self, n: usize) -> &[f64] {
        &self.values[n - 1]
    }
}

/// `I_α(s,t) = ∫_s^t I_{α̂}(s,r) dW_{α_1}(r)` with `W_0(r) = r`, by left-point
/// sums on the grid of `paths`.
pub fn iterated_integrals(
    paths: &WienerPaths,
    index_cutoff: usize,
    max_order: usize,
) -> Result<IteratedIntegrals> {
    ChaosConfig::new(max_order, index_cutoff, 1)?;
    if index_cutoff > paths.count() {
        return Err(FlowError::PathShortfall {
            needed: index_cutoff,
            available: paths.count(),
        });
    }
    let base = index_cutoff + 1;
    let mut values: Vec<Vec<f64>> = (1..=max_order).map(|n| vec![0.0; base.pow(n as u32)]).collect();
    for i in 0..paths.grid().steps() {
        let d = step_increments(paths, index_cutoff, i);
        for n in (1..=max_order).rev() {
            let stride = base.pow(n as u32 - 1);
            let (lower, upper) = values.split_at_mut(n - 1);
            let current = &mut upper[0];
            for (code, v) in current.iter_mut().enumerate() {
                let first = code / stride;
                let prev = if n == 1 { 1.0 } else { lower[n - 2][code % stride] };
                *v += prev * d[first];
            }
        }
    }
    Ok(IteratedIntegrals {
        index_cutoff,
        values,
    })
}

/// `I + Σ_{n ≤ n_max} Σ_{|α|=n} I_α B^α` from stored integrals.
pub fn chaos_terminal_from_integrals(
    family: &OperatorFamily,
    integrals: &IteratedIntegrals,
) -> Result<TruncatedOperator> {
    let k = integrals.index_cutoff;
    let members: Vec<&TruncatedOperator> = (0..=k).map(|j| family.member(j)).collect::<Result<_>>()?;
    let base = k + 1;
    let n = family.dim();
    let mut total = TruncatedOperator::identity(n);
    // B^α for the previous order, indexed like the integrals
    let mut prev: Vec<TruncatedOperator> = vec![TruncatedOperator::identity(n)];
    for order in 1..=integrals.max_order() {
        let stride = base.pow(order as u32 - 1);
        let mut current = Vec::with_capacity(stride * base);
        for code in 0..stride * base {
            let op = members[code / stride].compose(&prev[code % stride]);
            total.add_scaled(integrals.order(order)[code], &op);
            current.push(op);
        }
        prev = current;
    }
    total.ensure_finite()?;
    Ok(total)
}

/// Upper bound on the `L^{2L}` norm of the chaos discarded beyond `n_max`:
/// `Σ_{n>n_max} M^n C_L^n (max(1, Δ^{2Ln})/n!)^{1/(2L)} Δ^{1/2−1/(2L)}`,
/// `C_L = 2L/(2L−1)`.
///
/// `M` must count every member that appears in the multi-indices, the drift
/// included.
pub fn chaos_tail_bound(m: f64, delta: f64, l: u32, n_max: usize) -> Result<f64> {
    if !(m >= 0.0) || !m.is_finite() {
        return Err(FlowError::Domain(format!("M must be finite and >= 0, got {m}")));
    }
    if !(delta > 0.0) || !delta.is_finite() {
        return Err(FlowError::Domain(format!("Δ must be finite and > 0, got {delta}")));
    }
    if l == 0 {
        return Err(FlowError::Domain("L must be at least 1".into()));
    }
    if m == 0.0 {
        return Ok(0.0);
    }
    let two_l = 2.0 * l as f64;
    let c_l = two_l / (two_l - 1.0);
    let log_growth = (m * c_l).ln() + delta.ln().max(0.0);
    let log_pre = (0.5 - 1.0 / two_l) * delta.ln();
    let log_term = |n: f64| n * log_growth - ln_gamma(n + 1.0) / two_l;

    const MAX_TERMS: usize = 50_000_000;
    let mut log_sum = f64::NEG_INFINITY;
    let mut last = f64::INFINITY;
    for step in 0..MAX_TERMS {
        let n = (n_max + 1 + step) as f64;
        let lt = log_term(n);
        let hi = log_sum.max(lt);
        log_sum = hi + ((log_sum - hi).exp() + (lt - hi).exp()).ln();
        let decreasing = lt < last;
        last = lt;
        if decreasing && lt - log_sum < (1e-16f64).ln() {
            return Ok((log_sum + log_pre).exp());
        }
    }
    Err(FlowError::Domain(format!(
        "chaos tail bound did not converge within {MAX_TERMS} terms (M={m}, Δ={delta}, L={l})"
    )))
}
