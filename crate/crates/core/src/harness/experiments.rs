use std::path::Path;

use super::stats::{holder_slope, holder_slope_two_parameter, jackknife_mean, over_paths, skorokhod_growth, skorokhod_growth_model};
use super::{row, ExperimentConfig, Experiment, FamilyKind, Findings};
use crate::diagonal::{
    sample_trace, sample_zeta, three_series_diagnostic, zeta_moments, Convergence, DiagonalModel, Rule,
};
use crate::error::{FlowError, Result};
use crate::flow::{chaos_flow, commutative_ito_flow, commutative_strat_flow, euler_flow, fmt_f64, inverse_flow, ChaosConfig};
use crate::noise::TimeGrid;
use crate::operators::{
    cross_product_family, operator_norm, random_commuting_family, random_family, schatten_norm, OperatorFamily,
    TruncatedOperator,
};
use crate::rng::{child_seed, CounterRng};
use crate::schatten::{
    check_smoothing, dirichlet_laplacian_spectrum, laplacian_cutoff, log_grid, picard_mild_solver,
};

pub(super) fn run(experiment: Experiment, cfg: &ExperimentConfig, dir: &Path) -> Result<Findings> {
    match experiment {
        Experiment::CrossSolver => cross_solver(cfg, dir),
        Experiment::InverseFlowConvergence => inverse_flow_convergence(cfg, dir),
        Experiment::MomentBound => moment_bound(cfg, dir),
        Experiment::DiagonalMoments => diagonal_moments(cfg, dir),
        Experiment::Skorokhod => skorokhod(cfg, dir),
        Experiment::ThreeSeries => three_series(cfg, dir),
        Experiment::SchattenGamma => schatten_gamma(cfg, dir),
        Experiment::Picard => picard(cfg, dir),
        Experiment::Orthogonality => orthogonality(cfg, dir),
    }
}

/// Per-experiment family defaults, overridden field by field by the config.
struct FamilyDefaults {
    kind: FamilyKind,
    dim: usize,
    count: usize,
    drift_norm: f64,
    noise_norm: f64,
}

fn build_family(cfg: &ExperimentConfig, d: FamilyDefaults) -> Result<OperatorFamily> {
    let f = &cfg.family;
    let kind = f.kind.unwrap_or(d.kind);
    let dim = f.dim.unwrap_or(d.dim);
    let count = f.noise_count.unwrap_or(d.count);
    let drift_norm = f.drift_norm.unwrap_or(d.drift_norm);
    let noise_norm = f.noise_norm.unwrap_or(d.noise_norm);
    match kind {
        FamilyKind::Random => Ok(random_family(dim, count, drift_norm, noise_norm, f.seed)),
        FamilyKind::Commuting => Ok(random_commuting_family(dim, count, drift_norm, noise_norm, f.seed)),
        FamilyKind::Skew => skew_family(dim, count, noise_norm, f.seed),
        FamilyKind::Explicit => {
            let drift = f.drift.as_ref().ok_or_else(|| FlowError::Schema {
                field: "family.drift".into(),
                expected: "a row list".into(),
                actual: "nothing".into(),
            })?;
            let drift = TruncatedOperator::from_rows(drift)?;
            let noise = f
                .noise
                .iter()
                .flatten()
                .map(|rows| TruncatedOperator::from_rows(rows))
                .collect::<Result<Vec<_>>>()?;
            OperatorFamily::new(drift, noise)
        }
    }
}

/// Cross products with `g_k(node) = c_k u_node`: every member is a multiple
/// of one skew block per node, so the family commutes. `B_0 = 0`.
fn skew_family(nodes: usize, count: usize, noise_norm: f64, seed: u64) -> Result<OperatorFamily> {
    let mut rng = CounterRng::new(seed, 0x5E, 0);
    let u: Vec<[f64; 3]> = (0..nodes)
        .map(|_| [rng.next_normal(), rng.next_normal(), rng.next_normal()])
        .collect();
    let c: Vec<f64> = (0..count).map(|_| rng.next_normal()).collect();
    let fields = |scale: f64| -> Vec<Vec<[f64; 3]>> {
        c.iter()
            .map(|ck| u.iter().map(|v| v.map(|x| scale * ck * x)).collect())
            .collect()
    };
    let raw = cross_product_family(&fields(1.0))?;
    let bound = raw.bound();
    if bound == 0.0 {
        return Ok(raw);
    }
    cross_product_family(&fields(noise_norm / bound))
}

fn grid(cfg: &ExperimentConfig, t_end: f64, n: usize) -> Result<TimeGrid> {
    TimeGrid::new(cfg.grid.s, cfg.grid.t_end.unwrap_or(cfg.grid.s + t_end), n)
}

fn ladder(cfg: &ExperimentConfig, default: &[usize]) -> Vec<usize> {
    cfg.grid.n_ladder.clone().unwrap_or_else(|| default.to_vec())
}

fn powers_of_two(lo: u32, hi: u32) -> Vec<usize> {
    (lo..=hi).map(|e| 1usize << e).collect()
}

fn in_band(x: f64, centre: f64, half: f64) -> bool {
    (x - centre).abs() <= half
}

/// Mean of a per-path statistic along a step-count ladder; rows `n, dt, mean, se`.
fn ladder_means(
    cfg: &ExperimentConfig,
    t_end: f64,
    ns: &[usize],
    count: usize,
    n_paths: usize,
    stat: impl Fn(&crate::noise::WienerPaths) -> Result<f64> + Sync,
) -> Result<Vec<(usize, f64, f64, f64)>> {
    ns.iter()
        .map(|n| {
            let g = grid(cfg, t_end, *n)?;
            let values = over_paths(g, count, n_paths, cfg.seed, &stat)?;
            let est = jackknife_mean(&values);
            Ok((*n, g.dt(), est.mean, est.se))
        })
        .collect()
}

fn log_slope(rows: &[(usize, f64, f64, f64)]) -> f64 {
    let x: Vec<f64> = rows.iter().map(|r| r.1.ln()).collect();
    let y: Vec<f64> = rows.iter().map(|r| r.2.ln()).collect();
    super::fit_line(&x, &y).0
}

fn ladder_rows(rows: &[(usize, f64, f64, f64)]) -> Vec<Vec<String>> {
    rows.iter()
        .map(|(n, dt, m, se)| {
            let mut r = vec![n.to_string()];
            r.extend(row(&[*dt, *m, *se]));
            r
        })
        .collect()
}

fn cross_solver(cfg: &ExperimentConfig, dir: &Path) -> Result<Findings> {
    let mut out = Findings::default();
    let family = build_family(
        cfg,
        FamilyDefaults {
            kind: FamilyKind::Commuting,
            dim: 4,
            count: 2,
            drift_norm: 0.3,
            noise_norm: 0.5,
        },
    )?;
    family.ensure_commuting()?;
    let ns = ladder(cfg, &powers_of_two(8, 14));
    let n_paths = cfg.n_paths.unwrap_or(64);
    out.n_paths = Some(n_paths);
    let k = family.noise_count();
    let n_fine = *ns.last().expect("validated nonempty");

    // fixed-seed terminal frames
    let paths = super::sample_paths(grid(cfg, 1.0, n_fine)?, k, cfg.seed, 0)?;
    let chaos_cfg = ChaosConfig::new(cfg.solver.chaos_order, k, cfg.solver.moment_l)?;
    let frames = [
        ("euler", euler_flow(None, &family, &paths)?),
        ("chaos", chaos_flow(&family, &paths, &chaos_cfg)?),
        ("closed_form", commutative_ito_flow(&family, &paths)?),
    ];
    let tol = out.threshold("agreement", cfg.tolerances.agreement);
    let mut rows = Vec::new();
    let mut worst: f64 = 0.0;
    for i in 0..frames.len() {
        for j in i + 1..frames.len() {
            let d = operator_norm(&(frames[i].1.terminal() - frames[j].1.terminal()))?;
            worst = worst.max(d);
            rows.push(vec![frames[i].0.to_string(), frames[j].0.to_string(), fmt_f64(d)]);
        }
    }
    out.table(dir, "agreement.csv", &["solver_a", "solver_b", "distance"], rows)?;
    out.check("pairwise_agreement", worst <= tol, worst, format!("max pairwise operator-norm distance <= {tol}"));

    let gaps = ladder_means(cfg, 1.0, &ns, k, n_paths, |p| {
        operator_norm(&(euler_flow(None, &family, p)?.terminal() - commutative_ito_flow(&family, p)?.terminal()))
    })?;
    out.table(dir, "gap.csv", &["n", "dt", "mean_gap", "se"], ladder_rows(&gaps))?;
    let slope = log_slope(&gaps);
    let half = out.threshold("slope_half_width", cfg.tolerances.slope);
    out.check("gap_slope", in_band(slope, 0.5, half), slope, format!("|slope - 0.5| <= {half}"));
    Ok(out)
}

fn inverse_flow_convergence(cfg: &ExperimentConfig, dir: &Path) -> Result<Findings> {
    let mut out = Findings::default();
    let family = build_family(
        cfg,
        FamilyDefaults {
            kind: FamilyKind::Random,
            dim: 3,
            count: 2,
            drift_norm: 0.3,
            noise_norm: 1.0,
        },
    )?;
    let ns = ladder(cfg, &powers_of_two(8, 13));
    let n_paths = cfg.n_paths.unwrap_or(100);
    out.n_paths = Some(n_paths);
    let identity = TruncatedOperator::identity(family.dim());
    let rows = ladder_means(cfg, 1.0, &ns, family.noise_count(), n_paths, |p| {
        let y = euler_flow(None, &family, p)?;
        let z = inverse_flow(&family, p)?;
        operator_norm(&(&z.terminal().transpose().compose(y.terminal()) - &identity))
    })?;
    out.table(dir, "defect.csv", &["n", "dt", "mean_defect", "se"], ladder_rows(&rows))?;
    let slope = log_slope(&rows);
    let half = out.threshold("slope_half_width", cfg.tolerances.slope);
    out.check("defect_slope", in_band(slope, 0.5, half), slope, format!("|slope - 0.5| <= {half}"));
    Ok(out)
}

fn moment_bound(cfg: &ExperimentConfig, dir: &Path) -> Result<Findings> {
    let mut out = Findings::default();
    let family = build_family(
        cfg,
        FamilyDefaults {
            kind: FamilyKind::Commuting,
            dim: 3,
            count: 2,
            drift_norm: 0.0,
            noise_norm: 0.5,
        },
    )?;
    let n = ladder(cfg, &[256]).last().copied().expect("nonempty");
    let g = grid(cfg, 1.0, n)?;
    let offsets: Vec<usize> = (1..).map(|e| 1usize << e).take_while(|h| *h < n).collect();
    let n_paths = cfg.n_paths.unwrap_or(10_000);
    out.n_paths = Some(n_paths);
    let l = cfg.solver.moment_l;
    let margin = out.threshold("holder_margin", cfg.tolerances.holder_margin);
    let solve = |p: &crate::noise::WienerPaths| euler_flow(None, &family, p);
    let k = family.noise_count();
    let one = holder_slope(solve, g, k, l, &offsets, n_paths, cfg.seed, margin)?;
    let two = holder_slope_two_parameter(solve, g, k, l, &offsets, n_paths, cfg.seed, margin)?;
    let mut rows = Vec::new();
    for r in [&one, &two] {
        let kind = if r.two_parameter { "two_parameter" } else { "one_parameter" };
        for (h, m) in r.increments.iter().zip(&r.moments) {
            let mut line = vec![kind.to_string()];
            line.extend(row(&[*h, m.mean, m.se]));
            rows.push(line);
        }
    }
    out.table(dir, "moments.csv", &["kind", "increment", "moment", "se"], rows)?;
    out.check("slope", one.passes, one.slope, format!("slope >= L - 1 - {margin} = {}", one.threshold));
    out.check("two_parameter_slope", two.passes, two.slope, format!("slope >= {}", two.threshold));
    out.note("slope_se", one.slope_se);
    out.note("two_parameter_slope_se", two.slope_se);
    out.note("bound_m", family.bound());
    Ok(out)
}

fn diagonal_moments(cfg: &ExperimentConfig, dir: &Path) -> Result<Findings> {
    let mut out = Findings::default();
    let (alphas, sigmas): (Vec<f64>, Vec<f64>) = [-1.0, 0.0, 0.5]
        .iter()
        .flat_map(|a| [0.25, 0.5, 1.0].map(|s| (*a, s)))
        .unzip();
    let cutoff = cfg.diagonal.cutoff.unwrap_or(9);
    let model = DiagonalModel::new(
        cfg.diagonal.alpha.clone().unwrap_or(Rule::explicit(alphas)),
        cfg.diagonal.sigma.clone().unwrap_or(Rule::explicit(sigmas)),
        cutoff,
    )?;
    let delta = cfg.diagonal.horizon.unwrap_or(1.0);
    let n_draws = cfg.n_paths.unwrap_or(100_000);
    out.n_paths = Some(n_draws);
    let k_se = out.threshold("standard_errors", cfg.tolerances.standard_errors);
    let mut rows = Vec::new();
    let mut worst: f64 = 0.0;
    for k in 1..=cutoff {
        use rayon::prelude::*;
        let draws = (0..n_draws)
            .into_par_iter()
            .map(|i| sample_zeta(&model, k, delta, child_seed(cfg.seed, i as u64)))
            .collect::<Result<Vec<f64>>>()?;
        let squares: Vec<f64> = draws.iter().map(|z| z * z).collect();
        let (m1, m2) = zeta_moments(&model, k, delta)?;
        let e1 = jackknife_mean(&draws);
        let e2 = jackknife_mean(&squares);
        worst = worst.max(((e1.mean - m1) / e1.se).abs()).max(((e2.mean - m2) / e2.se).abs());
        rows.push(row(&[k as f64, model.alpha_at(k)?, model.sigma_at(k)?, e1.mean, e1.se, m1, e2.mean, e2.se, m2]));
    }
    out.table(
        dir,
        "moments.csv",
        &["k", "alpha", "sigma", "mean", "mean_se", "exact_mean", "second", "second_se", "exact_second"],
        rows,
    )?;
    out.check("moments", worst <= k_se, worst, format!("every |estimate - exact| / se <= {k_se}"));
    Ok(out)
}

fn skorokhod(cfg: &ExperimentConfig, dir: &Path) -> Result<Findings> {
    let mut out = Findings::default();
    let delta = cfg.grid.t_end.map(|t| t - cfg.grid.s).unwrap_or(1.0);
    let ks = ladder(cfg, &powers_of_two(6, 16));
    let n_seeds = cfg.n_paths.unwrap_or(64);
    out.n_paths = Some(n_seeds);

    let growth = skorokhod_growth(1.0, delta, &ks, n_seeds, cfg.seed)?;
    let growth_rows = (0..ks.len())
        .map(|i| {
            row(&[
                ks[i] as f64,
                growth.median_max[i],
                growth.reference[i],
                growth.ratio[i],
                growth.ratio_without_drift[i],
            ])
        })
        .collect();
    out.table(
        dir,
        "growth.csv",
        &["k", "median_max", "reference", "ratio", "ratio_without_drift"],
        growth_rows,
    )?;
    let factor = out.threshold("growth_factor", cfg.tolerances.growth_factor);
    let envelope = out.threshold("growth_envelope", cfg.tolerances.growth_envelope);
    out.check("growth_increasing", growth.increasing, growth.growth, "median max strictly increasing in K");
    out.check("growth_factor", growth.growth > factor, growth.growth, format!("final/initial > {factor}"));
    let worst_ratio = growth.ratio.iter().map(|r| r.ln().abs()).fold(0.0, f64::max).exp();
    out.check(
        "growth_envelope",
        growth.within_envelope(envelope),
        worst_ratio,
        format!("median/reference within a factor {envelope}"),
    );
    out.note(
        "min_ratio_without_drift",
        growth.ratio_without_drift.iter().copied().fold(f64::INFINITY, f64::min),
    );

    // σ_k = 1/k: the flow exists and the maximum settles
    let inverse_k = DiagonalModel::new(Rule::constant(0.0), Rule::power(1.0, -1.0), *ks.last().expect("nonempty"))?;
    let settled = skorokhod_growth_model(&inverse_k, delta, &ks, n_seeds, cfg.seed)?;
    out.table(
        dir,
        "growth_inverse_k.csv",
        &["k", "median_max"],
        ks.iter().zip(&settled.median_max).map(|(k, m)| row(&[*k as f64, *m])).collect(),
    )?;
    out.check("inverse_k_plateau", settled.growth < 1.05, settled.growth, "final/initial < 1.05");

    // σ_k = log(k+1): finite trace, infinite mean trace
    let k_max = cfg.diagonal.cutoff.unwrap_or(100_000);
    let trace_model = DiagonalModel::new(
        cfg.diagonal.alpha.clone().unwrap_or(Rule::constant(0.0)),
        cfg.diagonal.sigma.clone().unwrap_or(Rule::log_power(1.0, 1.0)),
        k_max,
    )?;
    let horizon = cfg.diagonal.horizon.unwrap_or(2.0);
    let trace = sample_trace(&trace_model, 0.0, horizon, cfg.seed, k_max)?;
    let path = dir.join("trace.csv");
    trace.write_csv(std::fs::File::create(&path)?)?;
    out.files.push(path);
    let change = trace.last_decade_relative_change();
    let plateau = out.threshold("plateau", cfg.tolerances.plateau);
    out.check("trace_plateau", change < plateau, change, format!("last-decade relative change < {plateau}"));
    let mean = *trace.analytic_mean.last().expect("nonempty");
    let expected: f64 = (1..=k_max).map(|k| trace_model.alpha_at(k).map(|a| (a * horizon).exp())).sum::<Result<f64>>()?;
    out.check(
        "analytic_mean_trace",
        (mean - expected).abs() <= 1e-9 * expected,
        mean,
        format!("sum of exp(alpha_k * delta) = {expected}"),
    );
    let unit = sample_trace(&trace_model, 0.0, 1.0, cfg.seed, k_max)?;
    out.note("trace_change_at_unit_horizon", unit.last_decade_relative_change());
    out.note("trace_horizon", horizon);
    Ok(out)
}

fn verdict_name(c: Convergence) -> f64 {
    match c {
        Convergence::Converges => 1.0,
        Convergence::Diverges => -1.0,
        Convergence::Undetermined => 0.0,
    }
}

fn three_series(cfg: &ExperimentConfig, dir: &Path) -> Result<Findings> {
    let mut out = Findings::default();
    let k_max = cfg.diagonal.cutoff.unwrap_or(100_000);
    let model = DiagonalModel::new(
        cfg.diagonal.alpha.clone().unwrap_or(Rule::constant(0.0)),
        cfg.diagonal.sigma.clone().unwrap_or(Rule::log_power(1.0, 1.0)),
        k_max,
    )?;
    let delta = cfg.diagonal.horizon.unwrap_or(1.0);
    let r = three_series_diagnostic(&model, 0.0, delta, k_max)?;
    let rows = (0..k_max)
        .map(|i| {
            row(&[
                (i + 1) as f64,
                r.exceedance_terms[i],
                r.mean_terms[i],
                r.variance_terms[i],
                r.exceedance.partial_sums[i],
                r.truncated_mean.partial_sums[i],
                r.truncated_variance.partial_sums[i],
            ])
        })
        .collect();
    out.table(
        dir,
        "three_series.csv",
        &["k", "exceedance", "truncated_mean", "truncated_variance", "exceedance_sum", "mean_sum", "variance_sum"],
        rows,
    )?;
    out.threshold("tail_ratio", 0.9);
    for (name, curve) in [
        ("exceedance_converges", &r.exceedance),
        ("truncated_mean_converges", &r.truncated_mean),
        ("truncated_variance_converges", &r.truncated_variance),
    ] {
        out.check(
            name,
            curve.verdict == Convergence::Converges,
            verdict_name(curve.verdict),
            "decade ratio of tail increments < 0.9 sustained (1 = converges)",
        );
    }
    out.check(
        "variance_dominated",
        r.variance_dominated,
        if r.variance_dominated { 1.0 } else { 0.0 },
        "Var Y_k <= E Y_k for every k",
    );
    if let Some(holds) = r.tail_bound_holds {
        out.note("tail_bound_holds", if holds { 1.0 } else { 0.0 });
    }
    out.note("truncation_level", r.b);
    Ok(out)
}

fn schatten_gamma(cfg: &ExperimentConfig, dir: &Path) -> Result<Findings> {
    let mut out = Findings::default();
    let sp = &cfg.spectrum;
    let p_min = sp.p_values.iter().copied().fold(f64::INFINITY, f64::min);
    let n_max = sp.n_max.unwrap_or_else(|| laplacian_cutoff(sp.t_min, p_min, 1e-12));
    out.note("n_max", n_max as f64);
    let spec = dirichlet_laplacian_spectrum(n_max)?;
    let ts = log_grid(sp.t_min, sp.t_max, sp.t_points);
    let tol = out.threshold("gamma", cfg.tolerances.gamma);
    let mut norms = Vec::new();
    let mut fits = Vec::new();
    for &p in &sp.p_values {
        let r = check_smoothing(&spec, p, &ts)?;
        for (t, v) in &r.curve {
            norms.push(row(&[p, *t, *v]));
        }
        let verdict = match r.satisfies_smoothing {
            Some(true) => 1.0,
            Some(false) => 0.0,
            None => -1.0,
        };
        fits.push(row(&[p, r.fitted_gamma, r.stderr, r.r_squared, verdict]));
        let label = fmt_p(p);
        if p > 2.0 {
            out.check(
                &format!("gamma_p{label}"),
                in_band(r.fitted_gamma, 1.0 / p, tol),
                r.fitted_gamma,
                format!("|gamma - 1/p| <= {tol}, 1/p = {}", 1.0 / p),
            );
        }
        let expected = p > 2.0;
        out.check(
            &format!("smoothing_p{label}"),
            r.satisfies_smoothing == Some(expected),
            verdict,
            format!("smoothing verdict = {expected} (1 = true, 0 = false, -1 = undetermined)"),
        );
    }
    out.table(dir, "norms.csv", &["p", "t", "schatten_norm"], norms)?;
    out.table(dir, "fits.csv", &["p", "gamma", "stderr", "r_squared", "verdict"], fits)?;
    Ok(out)
}

fn fmt_p(p: f64) -> String {
    format!("{p}").replace('.', "_")
}

fn picard(cfg: &ExperimentConfig, dir: &Path) -> Result<Findings> {
    let mut out = Findings::default();
    let n_max = cfg.spectrum.n_max.unwrap_or(2);
    let spec = dirichlet_laplacian_spectrum(n_max)?;
    let family = build_family(
        cfg,
        FamilyDefaults {
            kind: FamilyKind::Random,
            dim: spec.len(),
            count: 2,
            drift_norm: 0.0,
            noise_norm: 0.5,
        },
    )?;
    let n = ladder(cfg, &[256]).last().copied().expect("nonempty");
    let g = grid(cfg, 1.0, n)?;
    let paths = super::sample_paths(g, family.noise_count(), cfg.seed, 0)?;
    let p = cfg.solver.p;
    let result = picard_mild_solver(&spec, &family, &paths, p, cfg.solver.picard_iterations)?;
    let path = dir.join("residuals.csv");
    result.write_residuals_csv(std::fs::File::create(&path)?)?;
    out.files.push(path);

    // ratios once the iteration has reached round-off carry no information
    let burn_in = cfg.solver.burn_in;
    out.threshold("burn_in", burn_in as f64);
    let first = &result.residuals[0];
    let floor = 1e-12 * first.first().copied().unwrap_or(0.0);
    let ratios: Vec<f64> = first
        .windows(2)
        .enumerate()
        .filter(|(m, w)| *m + 1 >= burn_in && w[0] > floor && w[1] > floor)
        .map(|(_, w)| w[1] / w[0])
        .collect();
    let worst = ratios.iter().copied().fold(0.0, f64::max);
    let contraction = out.threshold("contraction", cfg.tolerances.contraction);
    out.check(
        "residual_ratio",
        !ratios.is_empty() && worst < contraction,
        worst,
        format!("every residual ratio after burn-in and above round-off < {contraction}"),
    );
    out.note("segments", result.segments.len() as f64);

    let euler = euler_flow(Some(&spec.generator()?), &family, &paths)?;
    let gaps = result
        .flow
        .frames()
        .iter()
        .zip(euler.frames())
        .map(|(x, y)| schatten_norm(&(x - y), p))
        .collect::<Result<Vec<f64>>>()?;
    out.table(
        dir,
        "euler_gap.csv",
        &["t", "schatten_distance"],
        gaps.iter().enumerate().map(|(i, d)| row(&[g.time(i), *d])).collect(),
    )?;
    let worst_gap = gaps.iter().copied().fold(0.0, f64::max);
    let tol = out.threshold("euler_gap", 10.0 * g.dt().sqrt());
    out.check("matches_euler", worst_gap <= tol, worst_gap, format!("max_t ||picard - euler||_p <= 10 sqrt(dt) = {tol}"));
    Ok(out)
}

fn orthogonality(cfg: &ExperimentConfig, dir: &Path) -> Result<Findings> {
    let mut out = Findings::default();
    let family = build_family(
        cfg,
        FamilyDefaults {
            kind: FamilyKind::Skew,
            dim: 3,
            count: 2,
            drift_norm: 0.0,
            noise_norm: 1.5,
        },
    )?;
    family.ensure_commuting()?;
    let n = ladder(cfg, &[64]).last().copied().expect("nonempty");
    let g = grid(cfg, 1.0, n)?;
    let n_paths = cfg.n_paths.unwrap_or(100);
    out.n_paths = Some(n_paths);
    let identity = TruncatedOperator::identity(family.dim());
    let defects = over_paths(g, family.noise_count(), n_paths, cfg.seed, |p| {
        let q = commutative_strat_flow(&family, p)?;
        q.frames()
            .iter()
            .map(|f| operator_norm(&(&f.transpose().compose(f) - &identity)))
            .try_fold(0.0f64, |acc, d| Ok(acc.max(d?)))
    })?;
    out.table(
        dir,
        "defects.csv",
        &["path", "max_defect"],
        defects.iter().enumerate().map(|(i, d)| vec![i.to_string(), fmt_f64(*d)]).collect(),
    )?;
    let worst = defects.iter().copied().fold(0.0, f64::max);
    let tol = out.threshold("orthogonality", cfg.tolerances.orthogonality);
    out.check("orthogonal_frames", worst <= tol, worst, format!("max ||Q^T Q - I|| <= {tol}"));
    Ok(out)
}

/// The configured family, with the cross-solver defaults (commuting 4×4,
/// two noises, `‖B_0‖ = 0.3`, `Σ‖B_k‖ = 0.5`) for unset fields.
pub fn configured_family(cfg: &ExperimentConfig) -> Result<OperatorFamily> {
    build_family(
        cfg,
        FamilyDefaults {
            kind: FamilyKind::Commuting,
            dim: 4,
            count: 2,
            drift_norm: 0.3,
            noise_norm: 0.5,
        },
    )
}

/// The configured diagonal model; defaults `α_k = 0`, `σ_k = log(k+1)`,
/// `K = 10^5`.
pub fn configured_diagonal(cfg: &ExperimentConfig) -> Result<DiagonalModel> {
    DiagonalModel::new(
        cfg.diagonal.alpha.clone().unwrap_or(Rule::constant(0.0)),
        cfg.diagonal.sigma.clone().unwrap_or(Rule::log_power(1.0, 1.0)),
        cfg.diagonal.cutoff.unwrap_or(100_000),
    )
}
