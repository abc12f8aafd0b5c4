use super::euler::check_inputs;
use super::{FlowSample, SolverTag};
use crate::error::Result;
use crate::noise::WienerPaths;
use crate::operators::{matrix_exponential, OperatorFamily, TruncatedOperator};

/// `exp{Σ_k B_k W_k + D (t − s)}` on every grid point.
pub(super) fn exponential_frames(
    family: &OperatorFamily,
    paths: &WienerPaths,
    time_coefficient: &TruncatedOperator,
    sign: f64,
) -> Result<Vec<TruncatedOperator>> {
    let grid = paths.grid();
    let n = family.dim();
    let mut frames = Vec::with_capacity(grid.steps() + 1);
    frames.push(TruncatedOperator::identity(n));
    for i in 1..=grid.steps() {
        let mut exponent = time_coefficient.scale(grid.time(i) - grid.start());
        for (k, b) in family.noise().iter().enumerate() {
            exponent.add_scaled(sign * paths.path(k)[i], b);
        }
        frames.push(matrix_exponential(&exponent)?);
    }
    Ok(frames)
}

/// Closed-form Itô flow of a commuting family,
/// `exp{Σ B_k (W_k(t) − W_k(s)) + (B_0 − ½ Σ B_k²)(t − s)}`.
pub fn commutative_ito_flow(family: &OperatorFamily, paths: &WienerPaths) -> Result<FlowSample> {
    family.ensure_commuting()?;
    check_inputs(family, paths)?;
    let mut d = family.drift().clone();
    d.add_scaled(-0.5, &family.sum_of_squares());
    let frames = exponential_frames(family, paths, &d, 1.0)?;
    FlowSample::new(
        *paths.grid(),
        frames,
        SolverTag::CommutativeIto,
        paths.seed(),
        paths.origin(),
    )
}

/// Closed-form Stratonovich flow of a commuting family,
/// `exp{(t − s) B_0 + Σ B_k (W_k(t) − W_k(s))}`.
pub fn commutative_strat_flow(family: &OperatorFamily, paths: &WienerPaths) -> Result<FlowSample> {
    family.ensure_commuting()?;
    check_inputs(family, paths)?;
    let frames = exponential_frames(family, paths, family.drift(), 1.0)?;
    FlowSample::new(
        *paths.grid(),
        frames,
        SolverTag::CommutativeStrat,
        paths.seed(),
        paths.origin(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::FlowError;
    use crate::flow::cocycle_defect;
    use crate::noise::{sample_wiener, TimeGrid};
    use crate::operators::{
        cross_product_family, operator_norm, random_commuting_family, random_family,
    };

    #[test]
    fn diagonal_family_gives_geometric_eigenvalues() {
        let sig = [0.8, -0.3, 1.5];
        let noise = (0..3)
            .map(|k| {
                let mut d = [0.0; 3];
                d[k] = sig[k];
                TruncatedOperator::diagonal(&d).unwrap()
            })
            .collect();
        let alpha = [-0.5, 0.1, 0.0];
        let family =
            OperatorFamily::new(TruncatedOperator::diagonal(&alpha).unwrap(), noise).unwrap();
        let grid = TimeGrid::new(0.5, 2.0, 30).unwrap();
        let paths = sample_wiener(grid, 3, 4).unwrap();
        let flow = commutative_ito_flow(&family, &paths).unwrap();
        for i in [1, 17, 30] {
            let t = grid.time(i) - 0.5;
            for k in 0..3 {
                let zeta = (alpha[k] * t + sig[k] * paths.path(k)[i] - 0.5 * sig[k] * sig[k] * t).exp();
                assert!((flow.frame(i).get(k, k) - zeta).abs() <= 1e-13 * zeta);
            }
        }
    }

    #[test]
    fn zero_noise_is_the_drift_semigroup() {
        let family = random_commuting_family(3, 0, 1.0, 0.0, 2);
        let grid = TimeGrid::new(0.0, 1.0, 4).unwrap();
        let paths = sample_wiener(grid, 1, 0).unwrap();
        let flow = commutative_ito_flow(&family, &paths).unwrap();
        let exact = matrix_exponential(family.drift()).unwrap();
        assert!((flow.terminal() - &exact).frobenius_norm() < 1e-14);
    }

    #[test]
    fn non_commuting_family_is_rejected() {
        let family = random_family(3, 2, 0.0, 1.0, 9);
        let paths = sample_wiener(TimeGrid::new(0.0, 1.0, 4).unwrap(), 2, 0).unwrap();
        match commutative_ito_flow(&family, &paths) {
            Err(FlowError::NonCommuting { i, j, defect }) => {
                assert_eq!((i, j), (1, 2));
                assert!(defect > 0.0);
            }
            other => panic!("expected rejection, got {other:?}"),
        }
        assert!(commutative_strat_flow(&family, &paths).is_err());
    }

    #[test]
    fn skew_symmetric_strat_flow_is_orthogonal() {
        // parallel fields per node: the blocks commute
        let u = [[1.0, 0.0, 0.0], [0.0, 0.6, 0.8], [0.3, -0.4, 0.5]];
        let fields: Vec<Vec<[f64; 3]>> = [0.7, -1.3]
            .iter()
            .map(|c| u.iter().map(|v| [c * v[0], c * v[1], c * v[2]]).collect())
            .collect();
        let family = cross_product_family(&fields).unwrap();
        let paths = sample_wiener(TimeGrid::new(0.0, 2.0, 50).unwrap(), 2, 31).unwrap();
        let flow = commutative_strat_flow(&family, &paths).unwrap();
        let ident = TruncatedOperator::identity(9);
        for f in flow.frames() {
            let defect = operator_norm(&(&f.transpose().compose(f) - &ident)).unwrap();
            assert!(defect <= 1e-9, "{defect}");
        }
    }

    #[test]
    fn ito_stratonovich_relation() {
        let family = random_commuting_family(4, 3, 0.4, 1.5, 23);
        let paths = sample_wiener(TimeGrid::new(0.0, 1.0, 20).unwrap(), 3, 3).unwrap();
        let strat = commutative_strat_flow(&family, &paths).unwrap();
        let mut shifted = family.drift().clone();
        shifted.add_scaled(0.5, &family.sum_of_squares());
        let ito = commutative_ito_flow(&family.with_drift(shifted).unwrap(), &paths).unwrap();
        for (a, b) in strat.frames().iter().zip(ito.frames()) {
            assert!((a - b).frobenius_norm() <= 1e-12 * b.frobenius_norm());
        }
    }

    #[test]
    fn scalar_strat_and_ito_differ_by_deterministic_factor() {
        let sigma = 0.9;
        let family =
            OperatorFamily::noise_only(1, vec![TruncatedOperator::diagonal(&[sigma]).unwrap()])
                .unwrap();
        let grid = TimeGrid::new(0.0, 1.5, 10).unwrap();
        let paths = sample_wiener(grid, 1, 5).unwrap();
        let strat = commutative_strat_flow(&family, &paths).unwrap();
        let ito = commutative_ito_flow(&family, &paths).unwrap();
        for i in 0..=10 {
            let t = grid.time(i);
            let w = paths.path(0)[i];
            let s = strat.frame(i).get(0, 0);
            assert!((s - (sigma * w).exp()).abs() < 1e-14 * s);
            let i_val = ito.frame(i).get(0, 0) * (0.5 * sigma * sigma * t).exp();
            assert!((s - i_val).abs() < 1e-13 * s);
        }
    }

    #[test]
    fn closed_form_cocycle() {
        let family = random_commuting_family(3, 2, 0.5, 1.0, 8);
        let paths = sample_wiener(TimeGrid::new(0.0, 1.0, 40).unwrap(), 2, 12).unwrap();
        let flow = commutative_ito_flow(&family, &paths).unwrap();
        let restart = commutative_ito_flow(&family, &paths.tail_from(10).unwrap()).unwrap();
        for l in [10, 25, 40] {
            assert!(cocycle_defect(&flow, 10, l, &restart).unwrap() <= 1e-9);
        }
    }
}
