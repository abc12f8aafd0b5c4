//! Schatten-class smoothing of `e^{tA}` for `A = −diag(λ_j)` and the Picard
//! construction of the flow from the mild equation.

use std::io::Write;

use nalgebra::DMatrix;
use serde::Serialize;
use libm::erfc;
use statrs::function::gamma::{checked_gamma_ur, gamma};

use crate::diagonal::Rule;
use crate::error::{FlowError, Result};
use crate::flow::{fmt_f64, FlowSample, SolverTag};
use crate::noise::WienerPaths;
use crate::operators::{schatten_norm, OperatorFamily, TruncatedOperator};

/// How the eigenvalues beyond the cutoff behave, if known.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SpectrumTail {
    /// `λ_j = c·j^a` for every `j`.
    Power { coef: f64, exp: f64, cutoff: usize },
    /// `{k² + n²}` truncated to `k, n ≤ n_max`.
    Laplacian2d { n_max: usize },
    /// Nothing is known beyond the listed values.
    Unknown,
}

/// The spectrum `λ_j ≥ 0` of `−A`, sorted ascending.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumModel {
    eigenvalues: Vec<f64>,
    tail: SpectrumTail,
}

impl SpectrumModel {
    pub fn from_values(mut eigenvalues: Vec<f64>) -> Result<Self> {
        if eigenvalues.is_empty() {
            return Err(FlowError::Domain("spectrum must be nonempty".into()));
        }
        if let Some(bad) = eigenvalues.iter().find(|l| !(**l >= 0.0) || !l.is_finite()) {
            return Err(FlowError::Domain(format!("eigenvalues must be finite and >= 0, got {bad}")));
        }
        eigenvalues.sort_by(f64::total_cmp);
        Ok(Self {
            eigenvalues,
            tail: SpectrumTail::Unknown,
        })
    }

    /// `λ_j = c·j^a`, `j = 1..=cutoff`.
    pub fn power(coef: f64, exp: f64, cutoff: usize) -> Result<Self> {
        if !(coef > 0.0 && exp > 0.0) || !coef.is_finite() || !exp.is_finite() {
            return Err(FlowError::Domain(format!(
                "power spectrum needs c > 0 and a > 0, got c={coef}, a={exp}"
            )));
        }
        let mut s = Self::from_values((1..=cutoff).map(|j| coef * (j as f64).powf(exp)).collect())?;
        s.tail = SpectrumTail::Power { coef, exp, cutoff };
        Ok(s)
    }

    /// `λ_j` from a rule; the tail is known when the rule is a single power.
    pub fn from_rule(rule: &Rule, cutoff: usize) -> Result<Self> {
        rule.validate()?;
        let values = (1..=cutoff)
            .map(|j| {
                rule.eval(j).ok_or(FlowError::IndexOutOfRange {
                    index: j,
                    max: rule.known_up_to().unwrap_or(0),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let single_power = rule.branches().and_then(|b| match b.as_slice() {
            [e] => match e.terms() {
                [m] if m.log_power == 0.0 && m.coef > 0.0 && m.power > 0.0 => Some((m.coef, m.power)),
                _ => None,
            },
            _ => None,
        });
        match single_power {
            Some((c, a)) => Self::power(c, a, cutoff),
            None => Self::from_values(values),
        }
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    pub fn tail(&self) -> SpectrumTail {
        self.tail
    }

    /// `−A = diag(λ_j)` as a matrix.
    pub fn generator(&self) -> Result<TruncatedOperator> {
        let neg: Vec<f64> = self.eigenvalues.iter().map(|l| -l).collect();
        TruncatedOperator::diagonal(&neg)
    }

    /// Upper bound on `Σ_{j beyond cutoff} e^{−pλ_j t}` (integral comparison).
    pub fn tail_sum_bound(&self, t: f64, p: f64) -> Option<f64> {
        match self.tail {
            SpectrumTail::Power { coef, exp, cutoff } => {
                // Σ_{j>J} e^{−u j^a} ≤ ∫_J^∞ e^{−u x^a} dx = u^{−1/a} Γ(1/a, uJ^a)/a
                let u = p * t * coef;
                let s = 1.0 / exp;
                let upper = checked_gamma_ur(s, u * (cutoff as f64).powf(exp)).ok()? * gamma(s);
                Some(u.powf(-s) * upper / exp)
            }
            SpectrumTail::Laplacian2d { n_max } => {
                // pairs with max(k, n) > N: at most 2·Σ_{k>N}·Σ_{n≥1}
                let u = p * t;
                let half_gauss = 0.5 * (std::f64::consts::PI / u).sqrt();
                let beyond = half_gauss * erfc(n_max as f64 * u.sqrt());
                Some(2.0 * beyond * half_gauss)
            }
            SpectrumTail::Unknown => None,
        }
    }
}

/// `{k² + n² : 1 ≤ k, n ≤ n_max}`, sorted.
pub fn dirichlet_laplacian_spectrum(n_max: usize) -> Result<SpectrumModel> {
    if n_max == 0 {
        return Err(FlowError::Domain("n_max must be at least 1".into()));
    }
    let values = (1..=n_max)
        .flat_map(|k| (1..=n_max).map(move |n| (k * k + n * n) as f64))
        .collect();
    let mut s = SpectrumModel::from_values(values)?;
    s.tail = SpectrumTail::Laplacian2d { n_max };
    Ok(s)
}

/// Smallest `n_max` whose Laplacian tail bound at `(t_min, p)` is below `tol`.
pub fn laplacian_cutoff(t_min: f64, p: f64, tol: f64) -> usize {
    let mut n = 1;
    loop {
        let s = SpectrumModel {
            eigenvalues: vec![],
            tail: SpectrumTail::Laplacian2d { n_max: n },
        };
        if s.tail_sum_bound(t_min, p).is_some_and(|b| b < tol) || n > 1 << 20 {
            return n;
        }
        n += (n / 8).max(1);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SchattenNorm {
    /// `(Σ_{j≤J} e^{−pλ_j t})^{1/p}`.
    pub value: f64,
    /// Bound on the neglected part of the sum, when the tail is known.
    pub tail_sum_bound: Option<f64>,
    /// Resulting bound on the error of `value`.
    pub error_bound: Option<f64>,
}

fn check_pt(t: f64, p: f64) -> Result<()> {
    if !(t > 0.0) || !t.is_finite() {
        return Err(FlowError::Domain(format!("t must be > 0, got {t}")));
    }
    if !(p >= 1.0) || !p.is_finite() {
        return Err(FlowError::Domain(format!("Schatten exponent must be >= 1, got {p}")));
    }
    Ok(())
}

/// `‖e^{tA}‖_p` for `A = −diag(λ_j)`.
pub fn semigroup_schatten_norm(spec: &SpectrumModel, t: f64, p: f64) -> Result<SchattenNorm> {
    check_pt(t, p)?;
    // ascending λ: terms come largest first
    let sum: f64 = spec.eigenvalues.iter().map(|l| (-p * l * t).exp()).sum();
    let value = sum.powf(1.0 / p);
    let tail_sum_bound = spec.tail_sum_bound(t, p);
    let error_bound = tail_sum_bound.map(|b| (sum + b).powf(1.0 / p) - value);
    Ok(SchattenNorm {
        value,
        tail_sum_bound,
        error_bound,
    })
}

/// `𝒮(t)T = e^{tA}∘T`.
pub fn apply_semigroup(spec: &SpectrumModel, t: f64, op: &TruncatedOperator) -> Result<TruncatedOperator> {
    if op.dim() != spec.len() {
        return Err(FlowError::DimensionMismatch {
            expected: spec.len(),
            actual: op.dim(),
        });
    }
    let decay: Vec<f64> = spec.eigenvalues.iter().map(|l| (-l * t).exp()).collect();
    let mut m = op.matrix().clone();
    scale_rows(&mut m, &decay);
    TruncatedOperator::new(m)
}

fn scale_rows(m: &mut DMatrix<f64>, factors: &[f64]) {
    for (i, f) in factors.iter().enumerate() {
        m.row_mut(i).scale_mut(*f);
    }
}

/// `n` log-spaced points from `t_min` to `t_max`.
pub fn log_grid(t_min: f64, t_max: f64, n: usize) -> Vec<f64> {
    let (a, b) = (t_min.ln(), t_max.ln());
    (0..n)
        .map(|i| (a + (b - a) * i as f64 / (n - 1).max(1) as f64).exp())
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SmoothingReport {
    pub p: f64,
    /// Slope of `log‖𝒮(t)‖_p` against `log(1/t)`.
    pub fitted_gamma: f64,
    pub stderr: f64,
    pub r_squared: f64,
    /// `γ + 2·stderr < ½`; `None` when the fit is poor (R² < 0.99) or
    /// dominated by the truncation.
    pub satisfies_smoothing: Option<bool>,
    pub fit_range: (f64, f64),
    /// The largest kept eigenvalue has not decayed at `t_min`, so the finite
    /// sum saturates and the slope says nothing about the full spectrum.
    pub truncation_dominated: bool,
    /// `(t, ‖𝒮(t)‖_p)` on the grid.
    pub curve: Vec<(f64, f64)>,
}

impl SmoothingReport {
    /// Columns `t, schatten_norm`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(out);
        wtr.write_record(["t", "schatten_norm"])?;
        for (t, v) in &self.curve {
            wtr.write_record([fmt_f64(*t), fmt_f64(*v)])?;
        }
        wtr.flush()?;
        Ok(())
    }
}

/// Least-squares fit `y = c + γx`: `(γ, stderr, R²)`.
fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let syy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    let slope = sxy / sxx;
    let sse: f64 = x
        .iter()
        .zip(y)
        .map(|(a, b)| (b - my - slope * (a - mx)).powi(2))
        .sum();
    let stderr = (sse / (n - 2.0) / sxx).sqrt();
    let r2 = if syy == 0.0 { 0.0 } else { 1.0 - sse / syy };
    (slope, stderr, r2)
}

/// Fits `‖𝒮(t)‖_p ≈ C t^{−γ}` on a log-spaced grid in `(0, 1]`.
pub fn check_smoothing(spec: &SpectrumModel, p: f64, t_grid: &[f64]) -> Result<SmoothingReport> {
    if t_grid.len() < 8 {
        return Err(FlowError::Domain(format!(
            "need at least 8 grid points, got {}",
            t_grid.len()
        )));
    }
    if t_grid.iter().any(|t| !(*t > 0.0 && *t <= 1.0)) {
        return Err(FlowError::Domain("grid must lie in (0, 1]".into()));
    }
    let ratios: Vec<f64> = t_grid.windows(2).map(|w| (w[1] / w[0]).ln()).collect();
    if ratios.iter().any(|r| !(*r > 0.0) || (r - ratios[0]).abs() > 1e-6 * ratios[0]) {
        return Err(FlowError::Domain("grid must be increasing and log-spaced".into()));
    }
    let curve = t_grid
        .iter()
        .map(|t| Ok((*t, semigroup_schatten_norm(spec, *t, p)?.value)))
        .collect::<Result<Vec<_>>>()?;
    let x: Vec<f64> = t_grid.iter().map(|t| -t.ln()).collect();
    let y: Vec<f64> = curve.iter().map(|(_, v)| v.ln()).collect();
    let (gamma, stderr, r_squared) = linear_fit(&x, &y);
    let t_min = t_grid[0];
    let lam_max = *spec.eigenvalues.last().expect("nonempty");
    let truncation_dominated = (-p * lam_max * t_min).exp() > 1e-3
        || spec
            .tail_sum_bound(t_min, p)
            .is_some_and(|b| b > 1e-6 * curve[0].1.powf(p));
    let satisfies_smoothing = (r_squared >= 0.99 && !truncation_dominated)
        .then_some(gamma + 2.0 * stderr < 0.5);
    Ok(SmoothingReport {
        p,
        fitted_gamma: gamma,
        stderr,
        r_squared,
        satisfies_smoothing,
        fit_range: (t_min, *t_grid.last().expect("nonempty")),
        truncation_dominated,
        curve,
    })
}

/// Picard iterates of the mild equation and their residuals.
#[derive(Debug, Clone)]
pub struct PicardResult {
    pub flow: FlowSample,
    /// `r_m = max_i ‖ψ_{m+1}(t_i) − ψ_m(t_i)‖_p`, one curve per segment.
    pub residuals: Vec<Vec<f64>>,
    /// Grid index ranges solved separately and chained by the flow property.
    pub segments: Vec<(usize, usize)>,
}

impl PicardResult {
    /// `r_{m+1}/r_m` of the first segment.
    pub fn residual_ratios(&self) -> Vec<f64> {
        self.residuals[0]
            .windows(2)
            .filter(|w| w[0] > 0.0)
            .map(|w| w[1] / w[0])
            .collect()
    }

    /// Columns `segment, iteration, residual`.
    pub fn write_residuals_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(out);
        wtr.write_record(["segment", "iteration", "residual"])?;
        for (s, curve) in self.residuals.iter().enumerate() {
            for (m, r) in curve.iter().enumerate() {
                wtr.write_record([s.to_string(), (m + 1).to_string(), fmt_f64(*r)])?;
            }
        }
        wtr.flush()?;
        Ok(())
    }
}

/// Solves on grid indices `a..=b`; frames relative to `t_a`.
fn picard_segment(
    decay: &[f64],
    family: &OperatorFamily,
    paths: &WienerPaths,
    (a, b): (usize, usize),
    p: f64,
    n_iter: usize,
) -> Result<(Vec<DMatrix<f64>>, Vec<f64>)> {
    let n = b - a;
    let dim = decay.len();
    let dt = paths.grid().dt();
    // e^{iΔtA} diagonals
    let mut powers = vec![vec![1.0; dim]];
    for i in 0..n {
        let next: Vec<f64> = powers[i].iter().zip(decay).map(|(x, d)| x * d).collect();
        powers.push(next);
    }
    let semigroup: Vec<DMatrix<f64>> = powers.iter().map(|d| DMatrix::from_diagonal(&d.clone().into())).collect();
    let kicks: Vec<DMatrix<f64>> = (a..b)
        .map(|i| {
            let mut g = family.drift().matrix() * dt;
            for (k, bk) in family.noise().iter().enumerate() {
                g += bk.matrix() * paths.increment(k, i);
            }
            g
        })
        .collect();

    let mut psi = semigroup.clone();
    let mut residuals = Vec::new();
    let mut rising = 0;
    for _ in 0..n_iter {
        let mut next = Vec::with_capacity(n + 1);
        next.push(DMatrix::identity(dim, dim));
        let mut phi = DMatrix::zeros(dim, dim);
        for i in 0..n {
            phi += &kicks[i] * &psi[i];
            scale_rows(&mut phi, decay);
            next.push(&semigroup[i + 1] + &phi);
        }
        let mut r: f64 = 0.0;
        let mut scale: f64 = 1.0;
        for (new, old) in next.iter().zip(&psi) {
            scale = scale.max(new.norm());
            r = r.max(schatten_norm(&TruncatedOperator::new(new - old).map_err(|_| {
                FlowError::Divergence { factor: f64::INFINITY }
            })?, p)?);
        }
        if let Some(prev) = residuals.last().copied() {
            rising = if r > prev { rising + 1 } else { 0 };
            if rising >= 3 {
                return Err(FlowError::Divergence { factor: r / prev });
            }
        }
        residuals.push(r);
        psi = next;
        if r <= 1e-15 * scale {
            break;
        }
    }
    Ok((psi, residuals))
}

/// `𝒳(t) = 𝒮(t−s) + ∫ 𝒮(t−r) dW(r) 𝒳(r)` by Picard iteration with
/// left-point sums; `B_0` enters with `dt`.
///
/// The fixed point on the grid is the exponential-Euler flow. If the
/// residuals grow for three consecutive iterations the horizon is split in
/// halves and the pieces are chained.
pub fn picard_mild_solver(
    spec: &SpectrumModel,
    family: &OperatorFamily,
    paths: &WienerPaths,
    p: f64,
    n_iter: usize,
) -> Result<PicardResult> {
    if !(p >= 1.0) || !p.is_finite() {
        return Err(FlowError::Domain(format!("Schatten exponent must be >= 1, got {p}")));
    }
    if n_iter == 0 {
        return Err(FlowError::Domain("need at least one iteration".into()));
    }
    if spec.len() != family.dim() {
        return Err(FlowError::DimensionMismatch {
            expected: family.dim(),
            actual: spec.len(),
        });
    }
    if paths.count() < family.noise_count() {
        return Err(FlowError::PathShortfall {
            needed: family.noise_count(),
            available: paths.count(),
        });
    }
    let square_sum: f64 = family.norms().iter().map(|n| n * n).sum();
    if !square_sum.is_finite() {
        return Err(FlowError::InvalidOperator("Σ‖B_k‖² must be finite".into()));
    }
    let dt = paths.grid().dt();
    let decay: Vec<f64> = spec.eigenvalues.iter().map(|l| (-l * dt).exp()).collect();
    let steps = paths.grid().steps();

    let mut pieces = 1;
    loop {
        let bounds: Vec<(usize, usize)> = (0..pieces)
            .map(|j| (j * steps / pieces, (j + 1) * steps / pieces))
            .filter(|(a, b)| b > a)
            .collect();
        let solved: Result<Vec<_>> = bounds
            .iter()
            .map(|seg| picard_segment(&decay, family, paths, *seg, p, n_iter))
            .collect();
        match solved {
            Ok(parts) => {
                let mut frames = vec![TruncatedOperator::identity(family.dim())];
                let mut residuals = Vec::new();
                for (psi, r) in parts {
                    let base = frames.last().expect("nonempty").matrix().clone();
                    for m in psi.into_iter().skip(1) {
                        frames.push(TruncatedOperator::new(m * &base)?);
                    }
                    residuals.push(r);
                }
                let flow = FlowSample::new(
                    *paths.grid(),
                    frames,
                    SolverTag::PicardSchatten,
                    paths.seed(),
                    paths.origin(),
                )?;
                return Ok(PicardResult {
                    flow,
                    residuals,
                    segments: bounds,
                });
            }
            Err(FlowError::Divergence { .. }) if pieces < steps => pieces = (2 * pieces).min(steps),
            Err(e) => return Err(e),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flow::euler_flow;
    use crate::noise::{sample_wiener, TimeGrid};
    use crate::operators::{operator_norm, random_family, random_operator};
    use proptest::prelude::*;

    #[test]
    fn norm_examples() {
        let zero = SpectrumModel::from_values(vec![0.0]).unwrap();
        for (t, p) in [(0.1, 1.0), (3.0, 2.5)] {
            assert_eq!(semigroup_schatten_norm(&zero, t, p).unwrap().value, 1.0);
        }
        let lin = SpectrumModel::power(1.0, 1.0, 60).unwrap();
        let v = semigroup_schatten_norm(&lin, 1.0, 1.0).unwrap();
        let exact = 1.0 / (std::f64::consts::E - 1.0);
        assert!((v.value - exact).abs() < 1e-15);
        // the tail bound must cover the geometric remainder e^{−60}/(e−1)
        let remainder = (-60.0f64).exp() / (std::f64::consts::E - 1.0);
        let bound = v.tail_sum_bound.unwrap();
        assert!(bound >= remainder && bound < 2.0 * remainder + 1e-300, "{bound} vs {remainder}");
        assert!(semigroup_schatten_norm(&lin, 0.0, 1.0).is_err());
        assert!(semigroup_schatten_norm(&lin, 1.0, 0.5).is_err());
    }

    #[test]
    fn power_tail_bound_covers_the_remainder() {
        for (c, a, j, t, p) in [(1.0, 2.0, 20, 0.01, 3.0), (0.5, 1.5, 50, 0.1, 2.0)] {
            let s = SpectrumModel::power(c, a, j).unwrap();
            let remainder: f64 = (j + 1..j + 100_000)
                .map(|k| (-p * t * c * (k as f64).powf(a)).exp())
                .sum();
            let edge = (-p * t * c * (j as f64).powf(a)).exp();
            let bound = s.tail_sum_bound(t, p).unwrap();
            // Σ_{k>J} ≤ ∫_J^∞ ≤ Σ_{k≥J}
            assert!(bound >= remainder && bound <= remainder + edge, "{bound} vs {remainder}");
        }
    }

    #[test]
    fn laplacian_spectrum_enumeration() {
        assert_eq!(dirichlet_laplacian_spectrum(1).unwrap().eigenvalues(), &[2.0]);
        assert_eq!(dirichlet_laplacian_spectrum(2).unwrap().eigenvalues(), &[2.0, 5.0, 5.0, 8.0]);
        assert_eq!(dirichlet_laplacian_spectrum(17).unwrap().len(), 289);
        assert!(dirichlet_laplacian_spectrum(0).is_err());
    }

    #[test]
    fn laplacian_tail_bound_covers_the_remainder() {
        let (t, p) = (1e-2, 3.0);
        let n = 20;
        let s = dirichlet_laplacian_spectrum(n).unwrap();
        let big = dirichlet_laplacian_spectrum(200).unwrap();
        let sum = |m: &SpectrumModel| m.eigenvalues().iter().map(|l| (-p * t * l).exp()).sum::<f64>();
        let remainder = sum(&big) - sum(&s);
        let bound = s.tail_sum_bound(t, p).unwrap();
        assert!(bound >= remainder && bound < 3.0 * remainder, "{bound} vs {remainder}");
    }

    #[test]
    fn laplacian_norm_against_small_time_asymptotics() {
        let p = 3.0;
        let n = laplacian_cutoff(1e-4, p, 1e-12);
        let s = dirichlet_laplacian_spectrum(n).unwrap();
        for t in log_grid(1e-4, 1e-2, 5) {
            let v = semigroup_schatten_norm(&s, t, p).unwrap();
            assert!(v.tail_sum_bound.unwrap() < 1e-12);
            let ratio = v.value / (1.0 / (2.0 * t * p)).powf(1.0 / p);
            assert!((0.8..=1.25).contains(&ratio), "t={t}: {ratio}");
            // Σ_{k≥1} e^{−uk²} ≈ ½√(π/u) − ½ (Euler–Maclaurin), squared
            let u = p * t;
            let theta = 0.5 * (std::f64::consts::PI / u).sqrt() - 0.5;
            let sharp = (theta * theta).powf(1.0 / p);
            assert!((v.value / sharp - 1.0).abs() < 1e-6, "t={t}");
        }
    }

    #[test]
    fn smoothing_verdicts_on_the_laplacian() {
        let grid = log_grid(1e-5, 1e-3, 12);
        let n = laplacian_cutoff(1e-5, 2.0, 1e-12);
        let s = dirichlet_laplacian_spectrum(n).unwrap();
        for p in [2.5, 3.0, 4.0, 6.0] {
            let r = check_smoothing(&s, p, &grid).unwrap();
            assert!((r.fitted_gamma - 1.0 / p).abs() < 0.05, "p={p}: {}", r.fitted_gamma);
            assert!(r.r_squared > 0.99 && !r.truncation_dominated);
            assert_eq!(r.satisfies_smoothing, Some(true), "p={p}");
        }
        let r = check_smoothing(&s, 2.0, &grid).unwrap();
        assert!((r.fitted_gamma - 0.5).abs() < 0.05);
        assert_eq!(r.satisfies_smoothing, Some(false));
        let mut buf = Vec::new();
        r.write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 13);
    }

    #[test]
    fn finite_spectrum_is_flagged() {
        let s = dirichlet_laplacian_spectrum(3).unwrap();
        let r = check_smoothing(&s, 3.0, &log_grid(1e-5, 1e-3, 10)).unwrap();
        assert!(r.truncation_dominated);
        assert!(r.fitted_gamma.abs() < 0.01);
        assert_eq!(r.satisfies_smoothing, None);
    }

    #[test]
    fn smoothing_rejects_bad_grids() {
        let s = dirichlet_laplacian_spectrum(3).unwrap();
        assert!(check_smoothing(&s, 3.0, &log_grid(1e-3, 1e-1, 5)).is_err());
        assert!(check_smoothing(&s, 3.0, &log_grid(1e-3, 2.0, 9)).is_err());
        let linear: Vec<f64> = (1..=9).map(|i| i as f64 * 0.1).collect();
        assert!(check_smoothing(&s, 3.0, &linear).is_err());
    }

    #[test]
    fn semigroup_is_an_ideal_map() {
        let s = SpectrumModel::power(1.0, 2.0, 6).unwrap();
        for seed in 0..20 {
            let t_op = random_operator(6, 2.0, seed, 0);
            for (t, p) in [(0.01, 1.0), (0.3, 2.0), (1.0, 3.5)] {
                let lhs = schatten_norm(&apply_semigroup(&s, t, &t_op).unwrap(), p).unwrap();
                let semigroup = crate::operators::matrix_exponential(&s.generator().unwrap().scale(t)).unwrap();
                let rhs = operator_norm(&semigroup).unwrap() * schatten_norm(&t_op, p).unwrap();
                assert!(lhs <= rhs + 1e-10);
            }
        }
    }

    #[test]
    fn picard_without_noise_is_the_semigroup() {
        let s = SpectrumModel::power(1.0, 2.0, 4).unwrap();
        let family = OperatorFamily::noise_only(4, vec![]).unwrap();
        let paths = sample_wiener(TimeGrid::new(0.0, 1.0, 32).unwrap(), 1, 0).unwrap();
        let r = picard_mild_solver(&s, &family, &paths, 2.0, 10).unwrap();
        assert_eq!(r.residuals[0].len(), 1);
        assert_eq!(r.residuals[0][0], 0.0);
        for (i, f) in r.flow.frames().iter().enumerate() {
            for j in 0..4 {
                let want = (-(((j + 1) * (j + 1)) as f64) * i as f64 / 32.0).exp();
                assert!((f.get(j, j) - want).abs() < 1e-14);
            }
        }
        assert_eq!(r.flow.solver(), SolverTag::PicardSchatten);
    }

    #[test]
    fn picard_scalar_matches_closed_form() {
        let (lambda, sigma) = (1.0, 0.5);
        let s = SpectrumModel::from_values(vec![lambda]).unwrap();
        let family = OperatorFamily::noise_only(1, vec![TruncatedOperator::diagonal(&[sigma]).unwrap()]).unwrap();
        let mut errs = Vec::new();
        for m in [6, 10] {
            let n = 1 << m;
            let paths = sample_wiener(TimeGrid::new(0.0, 1.0, n).unwrap(), 1, 8).unwrap();
            let r = picard_mild_solver(&s, &family, &paths, 2.0, 200).unwrap();
            let w = paths.path(0)[n];
            let exact = (-lambda + sigma * w - 0.5 * sigma * sigma).exp();
            let err = (r.flow.terminal().get(0, 0) - exact).abs();
            assert!(err < 5.0 * (1.0 / n as f64).sqrt(), "{err}");
            errs.push(err);
        }
        assert!(errs[1] < errs[0]);
    }

    #[test]
    fn picard_fixed_point_is_exponential_euler() {
        let s = dirichlet_laplacian_spectrum(2).unwrap();
        let family = random_family(4, 2, 0.3, 0.8, 14);
        let paths = sample_wiener(TimeGrid::new(0.0, 0.5, 256).unwrap(), 2, 6).unwrap();
        let r = picard_mild_solver(&s, &family, &paths, 3.0, 400).unwrap();
        let a = s.generator().unwrap();
        let eu = euler_flow(Some(&a), &family, &paths).unwrap();
        let tol = 10.0 * paths.grid().dt().sqrt();
        for (x, y) in r.flow.frames().iter().zip(eu.frames()) {
            let d = schatten_norm(&(x - y), 3.0).unwrap();
            assert!(d < 1e-10 && d < tol, "{d}");
        }
        let ratios = r.residual_ratios();
        assert!(ratios.iter().skip(5).all(|q| *q < 0.9), "{ratios:?}");
    }

    #[test]
    fn contraction_improves_on_shorter_horizons() {
        let s = dirichlet_laplacian_spectrum(2).unwrap();
        let family = random_family(4, 2, 0.0, 1.0, 3);
        let mut factors = Vec::new();
        for horizon in [1.0, 0.25, 0.0625] {
            let paths = sample_wiener(TimeGrid::new(0.0, horizon, 64).unwrap(), 2, 1).unwrap();
            let r = picard_mild_solver(&s, &family, &paths, 2.0, 6).unwrap();
            let ratios = r.residual_ratios();
            factors.push(ratios.iter().sum::<f64>() / ratios.len() as f64);
        }
        assert!(factors[0] > factors[1] && factors[1] > factors[2], "{factors:?}");
    }

    #[test]
    fn strong_noise_is_chained() {
        let s = SpectrumModel::from_values(vec![0.0, 1.0, 2.0]).unwrap();
        let family = random_family(3, 3, 0.0, 6.0, 21);
        let paths = sample_wiener(TimeGrid::new(0.0, 4.0, 256).unwrap(), 3, 2).unwrap();
        let r = picard_mild_solver(&s, &family, &paths, 2.0, 60).unwrap();
        let a = s.generator().unwrap();
        let eu = euler_flow(Some(&a), &family, &paths).unwrap();
        let scale = eu.terminal().frobenius_norm();
        assert!((r.flow.terminal() - eu.terminal()).frobenius_norm() < 1e-8 * scale);
        assert!(r.segments.len() > 1, "expected chaining, got {:?}", r.segments);
        let mut buf = Vec::new();
        r.write_residuals_csv(&mut buf).unwrap();
        assert!(String::from_utf8(buf).unwrap().starts_with("segment,iteration,residual\n0,1,"));
    }

    #[test]
    fn picard_rejects_mismatched_inputs() {
        let s = SpectrumModel::from_values(vec![1.0, 2.0]).unwrap();
        let family = random_family(3, 1, 0.0, 1.0, 1);
        let paths = sample_wiener(TimeGrid::new(0.0, 1.0, 4).unwrap(), 1, 0).unwrap();
        assert!(picard_mild_solver(&s, &family, &paths, 2.0, 5).is_err());
        let family = random_family(2, 2, 0.0, 1.0, 1);
        assert!(matches!(
            picard_mild_solver(&s, &family, &paths, 2.0, 5),
            Err(FlowError::PathShortfall { .. })
        ));
    }

    proptest! {
        #[test]
        fn norm_decreases_in_t(l in proptest::collection::vec(0.0..50.0f64, 1..20), p in 1.0..6.0f64, t in 0.001..1.0f64) {
            let s = SpectrumModel::from_values(l).unwrap();
            let a = semigroup_schatten_norm(&s, t, p).unwrap().value;
            let b = semigroup_schatten_norm(&s, 1.5 * t, p).unwrap().value;
            prop_assert!(b <= a * (1.0 + 1e-15));
        }

        #[test]
        fn norm_decreases_in_p(l in proptest::collection::vec(0.0..50.0f64, 1..20), p in 1.0..6.0f64, t in 0.001..1.0f64) {
            // singular values e^{−λt} ≤ 1: ℓ^p norms decrease in p
            let s = SpectrumModel::from_values(l).unwrap();
            let a = semigroup_schatten_norm(&s, t, p).unwrap().value;
            let b = semigroup_schatten_norm(&s, t, p + 0.5).unwrap().value;
            prop_assert!(b <= a * (1.0 + 1e-14));
        }
    }
}
