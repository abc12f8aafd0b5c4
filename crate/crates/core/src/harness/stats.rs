//! Monte Carlo statistics over independent Wiener paths.

use rayon::prelude::*;
use serde::Serialize;

use crate::diagonal::{running_max_zeta, DiagonalModel};
use crate::error::{FlowError, Result};
use crate::flow::FlowSample;
use crate::noise::{sample_wiener, TimeGrid, WienerPaths};
use crate::operators::operator_norm;
use crate::rng::child_seed;

/// A Monte Carlo mean with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Estimate {
    pub mean: f64,
    pub se: f64,
    pub n: usize,
}

impl Estimate {
    pub fn relative_se(&self) -> f64 {
        self.se / self.mean.abs()
    }

    /// `|mean − target| ≤ k·se`.
    pub fn within(&self, target: f64, k: f64) -> bool {
        (self.mean - target).abs() <= k * self.se
    }
}

/// Jackknife (leave-one-out) standard error of the sample mean.
pub fn jackknife_mean(values: &[f64]) -> Estimate {
    let n = values.len();
    let total: f64 = values.iter().sum();
    let mean = total / n as f64;
    if n < 2 {
        return Estimate { mean, se: 0.0, n };
    }
    let loo = |x: f64| (total - x) / (n - 1) as f64;
    let var: f64 = values.iter().map(|x| (loo(*x) - mean).powi(2)).sum();
    Estimate {
        mean,
        se: (var * (n - 1) as f64 / n as f64).sqrt(),
        n,
    }
}

/// Paths for sample `i` of a run seeded with `seed`.
pub fn sample_paths(grid: TimeGrid, count: usize, seed: u64, i: usize) -> Result<WienerPaths> {
    sample_wiener(grid, count.max(1), child_seed(seed, i as u64))
}

/// Runs `f` on `n_paths` independent path sets; results in index order.
pub fn over_paths<T: Send>(
    grid: TimeGrid,
    count: usize,
    n_paths: usize,
    seed: u64,
    f: impl Fn(&WienerPaths) -> Result<T> + Sync,
) -> Result<Vec<T>> {
    (0..n_paths)
        .into_par_iter()
        .map(|i| f(&sample_paths(grid, count, seed, i)?))
        .collect()
}

/// `E‖𝒴(s,t)‖^q` over the terminal frame, jackknife s.e.
pub fn mc_moment(
    solve: impl Fn(&WienerPaths) -> Result<FlowSample> + Sync,
    grid: TimeGrid,
    noise_count: usize,
    q: f64,
    n_paths: usize,
    seed: u64,
) -> Result<Estimate> {
    if !(q >= 1.0) {
        return Err(FlowError::Domain(format!("moment order must be >= 1, got {q}")));
    }
    let values = over_paths(grid, noise_count, n_paths, seed, |p| {
        Ok(operator_norm(solve(p)?.terminal())?.powf(q))
    })?;
    Ok(jackknife_mean(&values))
}

/// Increment moments `E‖𝒴(s,t) − 𝒴(s,u)‖^{2L}` (or the two-parameter
/// version) against the increment size, with a log–log fit.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MomentReport {
    pub l: u32,
    pub two_parameter: bool,
    /// `|t − u|`, or `|u − s| + |t − v|`.
    pub increments: Vec<f64>,
    pub moments: Vec<Estimate>,
    pub slope: f64,
    pub intercept: f64,
    pub slope_se: f64,
    /// 95% interval `slope ± 1.96·slope_se`.
    pub ci: (f64, f64),
    /// `L − 1 − margin`.
    pub threshold: f64,
    pub passes: bool,
}

/// Ordinary least squares `y = a + bx`: `(b, a, se(b))`.
pub fn fit_line(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: f64 = x
        .iter()
        .zip(y)
        .map(|(a, b)| (b - intercept - slope * a).powi(2))
        .sum();
    let se = if x.len() > 2 { (sse / (n - 2.0) / sxx).sqrt() } else { 0.0 };
    (slope, intercept, se)
}

fn moment_report(
    l: u32,
    two_parameter: bool,
    increments: Vec<f64>,
    samples: Vec<Vec<f64>>,
    margin: f64,
) -> Result<MomentReport> {
    let moments: Vec<Estimate> = (0..increments.len())
        .map(|j| jackknife_mean(&samples.iter().map(|s| s[j]).collect::<Vec<_>>()))
        .collect();
    for (h, m) in increments.iter().zip(&moments) {
        if !(m.mean > 0.0) {
            return Err(FlowError::Domain(format!(
                "increment moment at {h:.3e} is {}: nothing to fit",
                m.mean
            )));
        }
        if m.se > 0.3 * m.mean {
            return Err(FlowError::NoiseFloor {
                increment: *h,
                relative_se: 100.0 * m.relative_se(),
            });
        }
    }
    let x: Vec<f64> = increments.iter().map(|h| h.ln()).collect();
    let y: Vec<f64> = moments.iter().map(|m| m.mean.ln()).collect();
    let (slope, intercept, slope_se) = fit_line(&x, &y);
    let threshold = (l as f64 - 1.0) - margin;
    Ok(MomentReport {
        l,
        two_parameter,
        increments,
        moments,
        slope,
        intercept,
        slope_se,
        ci: (slope - 1.96 * slope_se, slope + 1.96 * slope_se),
        threshold,
        passes: slope >= threshold,
    })
}

fn check_ladder(grid: &TimeGrid, offsets: &[usize]) -> Result<()> {
    if offsets.len() < 2 || offsets.iter().any(|o| *o == 0 || *o > grid.steps()) {
        return Err(FlowError::Domain(format!(
            "need at least two offsets in 1..={}, got {offsets:?}",
            grid.steps()
        )));
    }
    let lo = *offsets.iter().min().expect("nonempty") as f64;
    let hi = *offsets.iter().max().expect("nonempty") as f64;
    if (hi / lo).log10() < 1.5 {
        return Err(FlowError::Domain(format!(
            "increment ladder spans {:.2} decades, need 1.5",
            (hi / lo).log10()
        )));
    }
    Ok(())
}

/// `E‖𝒴(s,T) − 𝒴(s,T − hΔt)‖^{2L}` for each offset `h`; passes if the
/// log–log slope is at least `L − 1 − margin`.
#[allow(clippy::too_many_arguments)]
pub fn holder_slope(
    solve: impl Fn(&WienerPaths) -> Result<FlowSample> + Sync,
    grid: TimeGrid,
    noise_count: usize,
    l: u32,
    offsets: &[usize],
    n_paths: usize,
    seed: u64,
    margin: f64,
) -> Result<MomentReport> {
    check_ladder(&grid, offsets)?;
    let n = grid.steps();
    let samples = over_paths(grid, noise_count, n_paths, seed, |p| {
        let flow = solve(p)?;
        offsets
            .iter()
            .map(|h| Ok(operator_norm(&(flow.terminal() - flow.frame(n - h)))?.powi(2 * l as i32)))
            .collect()
    })?;
    let increments = offsets.iter().map(|h| *h as f64 * grid.dt()).collect();
    moment_report(l, false, increments, samples, margin)
}

/// Two-parameter version: `E‖𝒴(s,t) − 𝒴(u,v)‖^{2L}` with `u = s + ½hΔt`,
/// `v = t − ½hΔt`, against `|u − s| + |t − v| = hΔt`. `𝒴(u,v)` is the flow
/// restarted at `u` on the same noise. Offsets must be even.
#[allow(clippy::too_many_arguments)]
pub fn holder_slope_two_parameter(
    solve: impl Fn(&WienerPaths) -> Result<FlowSample> + Sync,
    grid: TimeGrid,
    noise_count: usize,
    l: u32,
    offsets: &[usize],
    n_paths: usize,
    seed: u64,
    margin: f64,
) -> Result<MomentReport> {
    check_ladder(&grid, offsets)?;
    if offsets.iter().any(|h| h % 2 == 1 || *h >= grid.steps()) {
        return Err(FlowError::Domain(format!(
            "two-parameter offsets must be even and below {}, got {offsets:?}",
            grid.steps()
        )));
    }
    let n = grid.steps();
    let samples = over_paths(grid, noise_count, n_paths, seed, |p| {
        let flow = solve(p)?;
        offsets
            .iter()
            .map(|h| {
                let u = h / 2;
                let restart = solve(&p.tail_from(u)?)?;
                let inner = restart.frame(n - h);
                Ok(operator_norm(&(flow.terminal() - inner))?.powi(2 * l as i32))
            })
            .collect()
    })?;
    let increments = offsets.iter().map(|h| *h as f64 * grid.dt()).collect();
    moment_report(l, true, increments, samples, margin)
}

/// Median over seeds of `max_{k≤K} ζ_k` along a ladder of `K`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GrowthCurve {
    pub k: Vec<usize>,
    pub median_max: Vec<f64>,
    /// `exp(σ√(2Δ log K) − σ²Δ/2)`, the extreme-value location of
    /// `max_k ζ_k` (constant σ only).
    pub reference: Vec<f64>,
    /// `median / reference`.
    pub ratio: Vec<f64>,
    /// `median / exp(σ√(2Δ log K))`, without the `e^{−σ²Δ/2}` factor.
    pub ratio_without_drift: Vec<f64>,
    /// Strictly increasing along the ladder.
    pub increasing: bool,
    /// `median(K_last) / median(K_first)`.
    pub growth: f64,
}

impl GrowthCurve {
    /// Every ratio lies in `[1/factor, factor]`.
    pub fn within_envelope(&self, factor: f64) -> bool {
        self.ratio.iter().all(|r| *r >= 1.0 / factor && *r <= factor)
    }
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Growth of `max_{k≤K} ζ_k` for an arbitrary diagonal model (`α_k` included).
pub fn skorokhod_growth_model(
    model: &DiagonalModel,
    delta: f64,
    k_ladder: &[usize],
    n_seeds: usize,
    seed: u64,
) -> Result<GrowthCurve> {
    if k_ladder.is_empty() || k_ladder[0] == 0 || k_ladder.windows(2).any(|w| w[1] <= w[0]) {
        return Err(FlowError::Domain(format!("K ladder must be strictly increasing, got {k_ladder:?}")));
    }
    if n_seeds == 0 {
        return Err(FlowError::Domain("need at least one seed".into()));
    }
    let k_max = *k_ladder.last().expect("nonempty");
    let runs = (0..n_seeds)
        .map(|j| {
            let r = running_max_zeta(model, delta, child_seed(seed, j as u64), k_max)?;
            Ok(k_ladder.iter().map(|k| r[k - 1]).collect::<Vec<_>>())
        })
        .collect::<Result<Vec<_>>>()?;
    let median_max: Vec<f64> = (0..k_ladder.len())
        .map(|i| median(runs.iter().map(|r| r[i]).collect()))
        .collect();
    let sigma = model.sigma_at(1)?;
    let edge = |k: usize| sigma * (2.0 * delta * (k as f64).ln()).sqrt();
    let reference: Vec<f64> = k_ladder.iter().map(|k| (edge(*k) - 0.5 * sigma * sigma * delta).exp()).collect();
    let ratio = median_max.iter().zip(&reference).map(|(m, r)| m / r).collect();
    let ratio_without_drift = median_max
        .iter()
        .zip(k_ladder)
        .map(|(m, k)| m / edge(*k).exp())
        .collect();
    Ok(GrowthCurve {
        k: k_ladder.to_vec(),
        increasing: median_max.windows(2).all(|w| w[1] > w[0]),
        growth: median_max[median_max.len() - 1] / median_max[0],
        median_max,
        reference,
        ratio,
        ratio_without_drift,
    })
}

/// Skorokhod's example `α_k = 0`, `σ_k = σ`.
pub fn skorokhod_growth(
    sigma: f64,
    delta: f64,
    k_ladder: &[usize],
    n_seeds: usize,
    seed: u64,
) -> Result<GrowthCurve> {
    if !(sigma >= 0.0) || !sigma.is_finite() {
        return Err(FlowError::Domain(format!("σ must be finite and >= 0, got {sigma}")));
    }
    let k_max = k_ladder.last().copied().unwrap_or(1).max(1);
    skorokhod_growth_model(&DiagonalModel::skorokhod(sigma, k_max)?, delta, k_ladder, n_seeds, seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diagonal::Rule;
    use crate::flow::{commutative_ito_flow, euler_flow};
    use crate::operators::{matrix_exponential, random_commuting_family, random_family, OperatorFamily, TruncatedOperator};
    use proptest::prelude::*;

    #[test]
    fn jackknife_matches_textbook_standard_error() {
        let v = [1.0, 4.0, 2.0, 8.0, 5.0];
        let e = jackknife_mean(&v);
        let mean = 4.0;
        let s2 = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / 4.0;
        assert!((e.mean - mean).abs() < 1e-15);
        assert!((e.se - (s2 / 5.0).sqrt()).abs() < 1e-14);
        assert_eq!(jackknife_mean(&[3.0]).se, 0.0);
    }

    #[test]
    fn deterministic_moment_has_zero_error() {
        let family = random_family(3, 0, 0.7, 0.0, 5);
        let grid = TimeGrid::new(0.0, 1.5, 40).unwrap();
        let est = mc_moment(|p| euler_flow(None, &family, p), grid, 0, 3.0, 16, 1).unwrap();
        assert_eq!(est.se, 0.0);
        // exponential Euler with B_0 through the explicit factor: compare with
        // the semigroup built the same way
        let exact = operator_norm(&matrix_exponential(&family.drift().scale(1.5)).unwrap()).unwrap().powi(3);
        assert!((est.mean - exact).abs() < 0.05 * exact);
        let closed = mc_moment(|p| commutative_ito_flow(&family, p), grid, 0, 3.0, 4, 1).unwrap();
        assert!((closed.mean - exact).abs() < 1e-12 * exact);
    }

    #[test]
    fn geometric_brownian_second_moment() {
        // dX = σX dW: E|X(t)|² = e^{σ²t}
        let sigma = 0.6;
        let t = 1.0;
        let family =
            OperatorFamily::noise_only(1, vec![TruncatedOperator::diagonal(&[sigma]).unwrap()]).unwrap();
        let grid = TimeGrid::new(0.0, t, 4).unwrap();
        let est = mc_moment(|p| commutative_ito_flow(&family, p), grid, 1, 2.0, 20_000, 3).unwrap();
        assert!(est.within((sigma * sigma * t).exp(), 3.0), "{est:?}");
    }

    #[test]
    fn diagonal_second_moment_is_the_largest_mode() {
        // ‖diag ζ‖² = max_k ζ_k² ≤ Σ_k ζ_k²
        let model = DiagonalModel::new(Rule::power(-0.2, 1.0), Rule::constant(0.5), 4).unwrap();
        let family = model.to_family(4).unwrap();
        let delta: f64 = 1.0;
        let grid = TimeGrid::new(0.0, delta, 2).unwrap();
        let est = mc_moment(|p| commutative_ito_flow(&family, p), grid, 4, 2.0, 20_000, 9).unwrap();
        let moments: Vec<f64> = (1..=4).map(|k| crate::diagonal::zeta_moments(&model, k, delta).unwrap().1).collect();
        let sup = moments.iter().cloned().fold(0.0, f64::max);
        let total: f64 = moments.iter().sum();
        assert!(est.mean + 3.0 * est.se >= sup, "{est:?} vs {sup}");
        assert!(est.mean - 3.0 * est.se <= total, "{est:?} vs {total}");
    }

    #[test]
    fn commuting_family_increment_moments() {
        let family = random_commuting_family(3, 2, 0.3, 0.5, 4);
        // h ≤ 1/16 keeps the O(h³) terms out of the fitted slope
        let grid = TimeGrid::new(0.0, 1.0, 1024).unwrap();
        let offsets = [2, 4, 8, 16, 32, 64];
        let r = holder_slope(|p| commutative_ito_flow(&family, p), grid, 2, 2, &offsets, 4000, 11, 0.15).unwrap();
        assert!(r.passes && (r.slope - 2.0).abs() < 0.15, "{r:?}");
        assert!(r.ci.0 < r.slope && r.slope < r.ci.1);
        let r2 = holder_slope_two_parameter(|p| commutative_ito_flow(&family, p), grid, 2, 2, &offsets, 2000, 11, 0.15).unwrap();
        assert!(r2.passes, "{r2:?}");
    }

    #[test]
    fn deterministic_increments_scale_with_twice_l() {
        let family = random_family(3, 0, 0.8, 0.0, 2);
        let grid = TimeGrid::new(0.0, 1.0, 512).unwrap();
        let r = holder_slope(|p| commutative_ito_flow(&family, p), grid, 0, 2, &[4, 16, 64, 256], 2, 0, 0.15).unwrap();
        assert!((r.slope - 4.0).abs() < 0.1, "{}", r.slope);
    }

    #[test]
    fn noise_floor_and_ladder_checks() {
        let family = random_commuting_family(2, 1, 0.0, 3.0, 4);
        let grid = TimeGrid::new(0.0, 1.0, 256).unwrap();
        let err = holder_slope(|p| commutative_ito_flow(&family, p), grid, 1, 4, &[2, 8, 64], 3, 1, 0.15);
        assert!(matches!(err, Err(FlowError::NoiseFloor { .. })), "{err:?}");
        assert!(holder_slope(|p| commutative_ito_flow(&family, p), grid, 1, 2, &[8, 16], 3, 1, 0.15).is_err());
        assert!(holder_slope_two_parameter(|p| commutative_ito_flow(&family, p), grid, 1, 2, &[1, 64], 3, 1, 0.15).is_err());
    }

    #[test]
    fn skorokhod_examples() {
        let ladder: Vec<usize> = (6..=16).map(|j| 1 << j).collect();
        let g = skorokhod_growth(1.0, 1.0, &ladder, 64, 5).unwrap();
        assert!(g.increasing && g.growth > 5.0, "{g:?}");
        assert!(g.within_envelope(3.0), "{:?}", g.ratio);

        let flat = skorokhod_growth(0.0, 1.0, &ladder, 4, 5).unwrap();
        assert!(flat.median_max.iter().all(|m| *m == 1.0));
        assert!(!flat.increasing);

        // σ_k = 1/k: the maximum settles
        let m = DiagonalModel::new(Rule::constant(0.0), Rule::power(1.0, -1.0), 1 << 16).unwrap();
        let g = skorokhod_growth_model(&m, 1.0, &ladder, 64, 5).unwrap();
        assert!(g.growth < 1.01, "{g:?}");
    }

    proptest! {
        #[test]
        fn jackknife_se_nonnegative(v in proptest::collection::vec(-1e3..1e3f64, 2..50)) {
            let e = jackknife_mean(&v);
            prop_assert!(e.se >= 0.0 && e.se.is_finite());
        }
    }
}
