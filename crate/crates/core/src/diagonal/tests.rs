use super::*;
use crate::flow::commutative_ito_flow;
use crate::noise::{sample_wiener, TimeGrid};
use proptest::prelude::*;

fn model(alpha: Rule, sigma: Rule) -> DiagonalModel {
    DiagonalModel::new(alpha, sigma, 1000).unwrap()
}

fn log_sigma() -> Rule {
    Rule::log_power(1.0, 1.0)
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

#[test]
fn zeta_without_noise_is_deterministic() {
    let m = model(Rule::power(-1.0, 1.0), Rule::constant(0.0));
    for k in [1, 5, 40] {
        let z = zeta(&m, k, 0.3, 1.3, 2.7).unwrap();
        assert!((z - (-(k as f64)).exp()).abs() < 1e-15);
    }
    assert!(zeta(&m, 1, 1.0, 0.5, 0.0).is_err());
}

#[test]
fn monte_carlo_moments_within_three_standard_errors() {
    let delta = 1.0;
    let n = 100_000;
    let dws: Vec<f64> = (0..n).map(|i| brownian_increment(77, i, delta)).collect();
    for a in [-1.0, 0.0, 0.5] {
        for s in [0.25, 0.5, 1.0] {
            let m = DiagonalModel::new(Rule::constant(a), Rule::constant(s), 1).unwrap();
            let z: Vec<f64> = dws.iter().map(|dw| zeta(&m, 1, 0.0, delta, *dw).unwrap()).collect();
            let (mean, second) = zeta_moments(&m, 1, delta).unwrap();
            for (values, target) in [
                (z.clone(), mean),
                (z.iter().map(|x| x * x).collect::<Vec<_>>(), second),
            ] {
                let avg = values.iter().sum::<f64>() / n as f64;
                let var = values.iter().map(|x| (x - avg).powi(2)).sum::<f64>() / (n - 1) as f64;
                let se = (var / n as f64).sqrt();
                assert!((avg - target).abs() < 3.0 * se, "α={a} σ={s}: {avg} vs {target} (se {se})");
            }
        }
    }
}

#[test]
fn l2_solvability_examples() {
    let sk = DiagonalModel::skorokhod(0.7, 100).unwrap();
    let r = l2_solvability(&sk);
    assert!(r.solvable);
    assert!((r.sup.value.value() - 0.49).abs() < 1e-15);

    let growing = model(Rule::power(1.0, 1.0), Rule::constant(0.0));
    let r = l2_solvability(&growing);
    assert!(!r.solvable);
    assert_eq!(r.sup.witness, Witness::DivergesAlongK);

    // 2α_k + σ_k² = −k: the sup is −1 at k = 1
    let damped = model(Rule::power(-1.0, 1.0), Rule::power(1.0, 0.5));
    let r = l2_solvability(&damped);
    assert!(r.solvable);
    assert!((r.sup.value.value() + 1.0).abs() < 1e-12);
    assert_eq!(r.sup.witness, Witness::AttainedAt(1));
    assert!(!r.sup.undetermined_beyond_cutoff);
}

#[test]
fn explicit_rules_are_flagged_beyond_cutoff() {
    let m = DiagonalModel::new(
        Rule::explicit(vec![0.0, 1.0, -2.0]),
        Rule::explicit(vec![1.0, 0.0, 3.0]),
        3,
    )
    .unwrap();
    let r = l2_solvability(&m);
    assert!(r.sup.undetermined_beyond_cutoff);
    assert_eq!(r.sup.value, Bound::Finite(5.0));
    assert_eq!(r.sup.witness, Witness::AttainedAt(3));
    assert_eq!(classify_spectrum(&DiagonalModel::new(Rule::constant(0.0), Rule::explicit(vec![1.0; 3]), 3).unwrap(), 0.0, 1.0).unwrap(), Classification::Undetermined);
    assert!(DiagonalModel::new(Rule::constant(0.0), Rule::explicit(vec![1.0; 3]), 4).is_err());
    assert!(DiagonalModel::new(Rule::constant(0.0), Rule::explicit(vec![1.0, -1.0]), 2).is_err());
}

#[test]
fn rho_examples() {
    let sk = DiagonalModel::skorokhod(1.0, 100).unwrap();
    let r = flow_criterion_rho(&sk, 0.0, 1.0).unwrap();
    assert_eq!(r.rho.value, Bound::Infinite);
    assert_eq!(r.proof_form, Bound::Infinite);

    let quiet = model(Rule::constant(-1.0), Rule::constant(0.0));
    let r = flow_criterion_rho(&quiet, 0.0, 4.0).unwrap();
    assert_eq!(r.rho.value, Bound::Finite(-2.0));
    assert_eq!(r.proof_form, Bound::Finite(-4.0));

    // σ_k = log(k+1): −(log k)²/2·√Δ beats √2 (log k)^{3/2}
    let m = model(Rule::constant(0.0), log_sigma());
    let delta: f64 = 1.0;
    let r = flow_criterion_rho(&m, 0.0, delta).unwrap();
    let v = r.rho.value.value();
    assert!(v.is_finite());
    let brute = (1..=10_000_000usize)
        .map(|k| {
            let s = ((k + 1) as f64).ln();
            -0.5 * s * s * delta.sqrt() + s * (2.0 * (k as f64).ln()).sqrt()
        })
        .fold(f64::NEG_INFINITY, f64::max);
    assert!((v - brute).abs() < 1e-12 * brute.abs().max(1.0), "{v} vs {brute}");
    assert!(matches!(r.rho.witness, Witness::AttainedAt(_)));

    assert!(flow_criterion_rho(&m, 1.0, 1.0).is_err());
}

#[test]
fn rho_proof_form_scales_by_root_horizon() {
    let m = model(Rule::constant(-0.3), Rule::power(1.0, -1.0));
    for delta in [0.25, 1.0, 9.0] {
        let r = flow_criterion_rho(&m, 1.0, 1.0 + delta).unwrap();
        let direct = (1..=100_000usize)
            .map(|k| {
                let s = 1.0 / k as f64;
                (-0.3 - 0.5 * s * s) * delta + s * delta.sqrt() * (2.0 * (k as f64).ln()).sqrt()
            })
            .fold(f64::NEG_INFINITY, f64::max);
        let p = r.proof_form.value();
        assert!((p - direct).abs() < 1e-12 * p.abs().max(1.0), "{p} vs {direct}");
    }
}

#[test]
fn classification_examples() {
    let small = model(Rule::constant(0.0), Rule::log_power(1.0, -1.0));
    assert_eq!(classify_spectrum(&small, 0.0, 1.0).unwrap(), Classification::NoncompactLimit);

    let large = model(Rule::constant(0.0), log_sigma());
    assert_eq!(classify_spectrum(&large, 0.0, 1.0).unwrap(), Classification::TraceClassAs);

    let mixed = model(
        Rule::constant(0.0),
        Rule::interleave(Rule::log_power(1.0, -1.0), log_sigma()),
    );
    assert_eq!(classify_spectrum(&mixed, 0.0, 1.0).unwrap(), Classification::Mixed);

    // σ_k = 1 + 1/k accumulates at 1
    let at_one = model(
        Rule::constant(0.0),
        Rule::terms(vec![Monomial::new(1.0, 0.0, 0.0), Monomial::new(1.0, -1.0, 0.0)]),
    );
    assert!(matches!(
        classify_spectrum(&at_one, 0.0, 1.0),
        Err(FlowError::InconsistentInput(_))
    ));

    // ρ = ∞: the precondition fails
    let slow = model(Rule::constant(0.0), Rule::log_power(1.0, 0.5));
    assert!(matches!(
        classify_spectrum(&slow, 0.0, 1.0),
        Err(FlowError::InconsistentInput(_))
    ));

    let drifting = model(Rule::constant(-1.0), log_sigma());
    assert!(classify_spectrum(&drifting, 0.0, 1.0).is_err());
}

#[test]
fn delta_divergence_matches_sigma_over_root_log() {
    let rules = [
        log_sigma(),
        Rule::log_power(1.0, 0.5),
        Rule::log_power(1.0, 0.75),
        Rule::power(1.0, 0.1),
        Rule::constant(2.0),
        Rule::log_power(3.0, -1.0),
        Rule::interleave(log_sigma(), Rule::constant(1.0)),
        Rule::interleave(Rule::power(2.0, 1.0), log_sigma()),
    ];
    for sigma in rules {
        let m = model(Rule::constant(0.0), sigma.clone());
        let a = delta_diverges(&m, 0.0, 2.0).unwrap().unwrap();
        let b = sigma_over_sqrt_log_diverges(&m).unwrap();
        assert_eq!(a, b, "{sigma:?}");
    }
    let m = model(Rule::constant(0.0), log_sigma());
    assert_eq!(delta_diverges(&m, 0.0, 1.0).unwrap(), Some(true));
}

/// Reference `P(ζ>1)`, `E ζ1{ζ≤1}`, `Var ζ1{ζ≤1}` by Simpson quadrature over
/// `Z`, split at the jump `ζ = 1` so each piece is smooth.
fn quadrature_terms(alpha: f64, sigma: f64, delta: f64) -> (f64, f64, f64) {
    let c = sigma * delta.sqrt();
    let mu = (alpha - 0.5 * sigma * sigma) * delta;
    let jump = -mu / c;
    let phi = |z: f64| (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt();
    let simpson = |f: &dyn Fn(f64) -> f64, lo: f64, hi: f64| {
        let n = 20_000;
        let h = (hi - lo) / n as f64;
        (0..=n)
            .map(|i| {
                let w = if i == 0 || i == n { 1.0 } else if i % 2 == 1 { 4.0 } else { 2.0 };
                w * f(lo + i as f64 * h)
            })
            .sum::<f64>()
            * h
            / 3.0
    };
    let p = simpson(&|z| phi(z), jump, jump.max(0.0) + 40.0);
    let m1 = simpson(&|z| phi(z) * (mu + c * z).exp(), jump.min(0.0) - 40.0, jump);
    let m2 = simpson(&|z| phi(z) * (2.0 * (mu + c * z)).exp(), jump.min(0.0) - 40.0, jump);
    (p, m1, m2 - m1 * m1)
}

#[test]
fn three_series_terms_match_quadrature() {
    for (a, s, d) in [(0.0, 1.0, 1.0), (0.0, 3.0, 0.5), (-0.5, 0.7, 2.0), (0.4, 2.0, 1.0)] {
        let got = three_series_terms(a, s, d);
        let want = quadrature_terms(a, s, d);
        for (g, w) in [(got.0, want.0), (got.1, want.1), (got.2, want.2)] {
            assert!((g - w).abs() < 1e-10 * w.abs().max(1e-6), "α={a} σ={s}: {got:?} vs {want:?}");
        }
    }
    assert_eq!(three_series_terms(-1.0, 0.0, 1.0), (0.0, (-1.0f64).exp(), 0.0));
    assert_eq!(three_series_terms(1.0, 0.0, 1.0), (1.0, 0.0, 0.0));
}

#[test]
fn three_series_converge_for_log_sigma() {
    let m = DiagonalModel::new(Rule::constant(0.0), log_sigma(), 100_000).unwrap();
    let r = three_series_diagnostic(&m, 0.0, 1.0, 100_000).unwrap();
    assert_eq!(r.exceedance.verdict, Convergence::Converges);
    assert_eq!(r.truncated_mean.verdict, Convergence::Converges);
    assert_eq!(r.truncated_variance.verdict, Convergence::Converges);
    assert!(r.all_converge());
    assert!(r.variance_dominated);
    assert_eq!(r.tail_bound_holds, Some(true));
    assert_eq!(r.b, 0.5);
    for (v, e) in r.variance_terms.iter().zip(&r.mean_terms) {
        assert!(v <= e);
    }
    for (v, e) in r
        .truncated_variance
        .partial_sums
        .iter()
        .zip(&r.truncated_mean.partial_sums)
    {
        assert!(v <= e);
    }
    // δ_k = (log(k+1))²/(8 log k) grows without bound
    assert!(r.delta[99_999] > r.delta[999] && r.delta[99_999] > 1.4);
}

#[test]
fn three_series_without_noise() {
    let m = model(Rule::constant(-0.5), Rule::constant(0.0));
    let r = three_series_diagnostic(&m, 0.0, 1.0, 1000).unwrap();
    assert!(r.exceedance.partial_sums.iter().all(|x| *x == 0.0));
    assert_eq!(r.tail_bound_holds, None);
}

#[test]
fn decade_verdicts() {
    let sums = |f: &dyn Fn(f64) -> f64, n: usize| {
        let mut acc = 0.0;
        (1..=n)
            .map(|k| {
                acc += f(k as f64);
                acc
            })
            .collect::<Vec<_>>()
    };
    assert_eq!(decade_verdict(&sums(&|k| k.powi(-2), 100_000)), Convergence::Converges);
    assert_eq!(decade_verdict(&sums(&|k| 1.0 / k, 100_000)), Convergence::Diverges);
    assert_eq!(decade_verdict(&sums(&|_| 1.0, 100_000)), Convergence::Diverges);
    assert_eq!(decade_verdict(&sums(&|k| k.powi(-2), 1000)), Convergence::Undetermined);
    assert_eq!(decade_verdict(&sums(&|_| 0.0, 100_000)), Convergence::Converges);
}

#[test]
fn trace_without_noise_is_k() {
    let m = DiagonalModel::new(Rule::constant(0.0), Rule::constant(0.0), 1000).unwrap();
    let tr = sample_trace(&m, 0.0, 1.0, 3, 1000).unwrap();
    assert_eq!(tr.partial_sums[999], 1000.0);
    assert_eq!(tr.analytic_mean, tr.partial_sums);
    let mut buf = Vec::new();
    tr.write_csv(&mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert!(text.starts_with("k,partial_sum,analytic_mean\n1,"));
    assert_eq!(text.lines().count(), 1001);
}

#[test]
fn trace_is_finite_while_its_mean_diverges() {
    let k_max = 100_000;
    let m = DiagonalModel::new(Rule::constant(0.0), log_sigma(), k_max).unwrap();
    // horizon 2: the largest ζ_k of the last decade is ~e^{-24}
    for seed in 0..8 {
        let tr = sample_trace(&m, 0.0, 2.0, seed, k_max).unwrap();
        let rel = tr.last_decade_relative_change();
        assert!((0.0..1e-6).contains(&rel), "seed {seed}: {rel}");
        assert_eq!(tr.analytic_mean[k_max - 1], k_max as f64);
    }
}

#[test]
fn trace_matches_sampled_zeta() {
    let m = DiagonalModel::new(Rule::constant(-0.1), log_sigma(), 50).unwrap();
    let tr = sample_trace(&m, 1.0, 2.5, 9, 50).unwrap();
    let direct: f64 = (1..=50).map(|k| sample_zeta(&m, k, 1.5, 9).unwrap()).sum();
    assert!((tr.partial_sums[49] - direct).abs() < 1e-12 * direct);
}

#[test]
fn skorokhod_maximum_keeps_growing() {
    let m = DiagonalModel::skorokhod(1.0, 1 << 16).unwrap();
    let runs: Vec<Vec<f64>> = (0..64)
        .map(|seed| running_max_zeta(&m, 1.0, seed, 1 << 16).unwrap())
        .collect();
    let medians: Vec<f64> = (6..=16)
        .map(|j| median(runs.iter().map(|r| r[(1 << j) - 1]).collect()))
        .collect();
    for w in medians.windows(2) {
        assert!(w[1] > w[0], "{medians:?}");
    }
    assert!(medians[10] / medians[0] > 5.0, "{medians:?}");
}

#[test]
fn matrices_reproduce_zeta() {
    let m = DiagonalModel::new(Rule::power(-0.5, 1.0), log_sigma(), 5).unwrap();
    let family = m.to_family(5).unwrap();
    let grid = TimeGrid::new(0.25, 1.25, 16).unwrap();
    let paths = sample_wiener(grid, 5, 44).unwrap();
    let flow = commutative_ito_flow(&family, &paths).unwrap();
    for i in [1, 8, 16] {
        for k in 1..=5 {
            let z = zeta(&m, k, 0.25, grid.time(i), paths.path(k - 1)[i]).unwrap();
            let got = flow.frame(i).get(k - 1, k - 1);
            assert!((got - z).abs() <= 1e-12 * z, "k={k} i={i}: {got} vs {z}");
        }
    }
}

#[test]
fn eigenvalues_stay_away_from_zero_when_noise_vanishes() {
    let m = DiagonalModel::new(Rule::constant(0.0), Rule::log_power(1.0, -1.0), 100_000).unwrap();
    let mins: Vec<Vec<f64>> = (0..100u64)
        .into_par_iter()
        .map(|seed| {
            let mut best = f64::INFINITY;
            let mut out = Vec::new();
            for k in 1..=100_000 {
                best = best.min(sample_zeta(&m, k, 1.0, seed).unwrap());
                if k == 1000 || k == 100_000 {
                    out.push(best);
                }
            }
            out
        })
        .collect();
    let small = median(mins.iter().map(|v| v[0]).collect());
    let large = median(mins.iter().map(|v| v[1]).collect());
    assert!(large > 0.0);
    assert!((small - large).abs() / small < 0.1, "{small} vs {large}");
}

#[test]
fn homogeneous_field_examples() {
    let v = homogeneous_field_criteria(&Rule::power(1.0, -2.0), 100_000).unwrap();
    assert!(v.l2_solvable);
    assert_eq!(v.flow_sufficient_sqrt_log, Some(true));
    assert_eq!(v.flow_sufficient_log_sqrt, Some(true));
    // Σ k⁻⁴ = π⁴/90
    let mass = v.total_mass.unwrap();
    assert!((mass - std::f64::consts::PI.powi(4) / 90.0).abs() < 1e-12);

    // a_k = 1/k: Σ a_k² < ∞ but Σ (1/k)√(log k) diverges
    let v = homogeneous_field_criteria(&Rule::power(1.0, -1.0), 100_000).unwrap();
    assert!(v.l2_solvable);
    assert!((v.total_mass.unwrap() - std::f64::consts::PI.powi(2) / 6.0).abs() < 1e-4);
    assert_eq!(v.flow_sufficient_sqrt_log, Some(false));
    assert_eq!(v.flow_sufficient_log_sqrt, Some(false));

    let v = homogeneous_field_criteria(&Rule::power(1.0, -0.5), 1000).unwrap();
    assert!(!v.l2_solvable);
    assert_eq!(v.total_mass, None);
    assert!(homogeneous_field_criteria(&Rule::explicit(vec![1.0]), 1).is_err());
}

#[test]
fn sheet_basis_squares_sum_to_coordinate_product() {
    // Brownian motion on [0, L): covariance min(x, y) has eigenfunctions
    // √(2/L) sin(ω_n x) and eigenvalues ω_n⁻², ω_n = (n − ½)π/L
    let l = 2.0;
    let one_dim = |x: f64| {
        (1..=200_000)
            .map(|n| {
                let w = (n as f64 - 0.5) * std::f64::consts::PI / l;
                let e = (2.0 / l).sqrt() * (w * x).sin() / w;
                e * e
            })
            .sum::<f64>()
    };
    for point in [[0.3, 1.7], [1.99, 0.5], [1.0, 1.0]] {
        let series = one_dim(point[0]) * one_dim(point[1]);
        let exact = sheet_sum_of_squares(&point);
        assert!((series - exact).abs() < 1e-5, "{point:?}: {series} vs {exact}");
        assert!(exact <= l * l);
    }
    let v = sheet_criteria(l, 2).unwrap();
    assert!(v.l2_solvable);
    assert_eq!(v.flow_sufficient_log_sqrt, None);
    assert!(sheet_criteria(f64::INFINITY, 2).is_err());
}

#[test]
fn report_bundles_everything() {
    let m = DiagonalModel::new(Rule::constant(0.0), log_sigma(), 100_000).unwrap();
    let r = criteria_report(&m, 0.0, 1.0, 100_000).unwrap();
    assert!(!r.l2.solvable);
    assert!(r.rho.rho.value.is_finite());
    assert_eq!(r.classification, Some(Classification::TraceClassAs));
    assert!(r.three_series.unwrap().all_converge());
    let sk = criteria_report(&DiagonalModel::skorokhod(1.0, 10).unwrap(), 0.0, 1.0, 10).unwrap();
    assert!(sk.classification.is_none() && sk.classification_note.is_some());
    serde_json::to_string(&sk).unwrap();
}

proptest! {
    #[test]
    fn zeta_is_positive(a in -5.0..5.0f64, s in 0.0..5.0f64, d in 0.0..3.0f64, dw in -10.0..10.0f64) {
        let m = DiagonalModel::new(Rule::constant(a), Rule::constant(s), 1).unwrap();
        prop_assert!(zeta(&m, 1, 0.0, d, dw).unwrap() > 0.0);
    }

    #[test]
    fn truncated_terms_are_consistent(a in -3.0..3.0f64, s in 0.01..20.0f64, d in 0.01..4.0f64) {
        let (p, ey, var) = three_series_terms(a, s, d);
        prop_assert!((0.0..=1.0).contains(&p));
        prop_assert!(ey >= 0.0 && ey <= 1.0 - p + 1e-15);
        prop_assert!(var <= ey);
    }

    #[test]
    fn constant_rules_have_closed_form_sup(a in -3.0..3.0f64, s in 0.0..3.0f64) {
        let m = DiagonalModel::new(Rule::constant(a), Rule::constant(s), 10).unwrap();
        let r = l2_solvability(&m);
        prop_assert!((r.sup.value.value() - (2.0 * a + s * s)).abs() < 1e-12);
    }
}
