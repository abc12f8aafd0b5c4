use super::{FlowSample, SolverTag};
use crate::error::{FlowError, Result};
use crate::noise::WienerPaths;
use crate::operators::{matrix_exponential, OperatorFamily, TruncatedOperator};

/// How the generator `A` enters a step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum EulerScheme {
    /// `X_{i+1} = e^{ΔtA}(I + B_0Δt + Σ B_k ΔW_k) X_i`.
    #[default]
    Exponential,
    /// `X_{i+1} = (I + (A + B_0)Δt + Σ B_k ΔW_k) X_i`; only sensible for bounded `A`.
    Plain,
}

pub(super) fn check_inputs(family: &OperatorFamily, paths: &WienerPaths) -> Result<()> {
    if paths.count() < family.noise_count() {
        return Err(FlowError::PathShortfall {
            needed: family.noise_count(),
            available: paths.count(),
        });
    }
    Ok(())
}

/// Exponential Euler; `a = None` means `A = 0`.
pub fn euler_flow(
    a: Option<&TruncatedOperator>,
    family: &OperatorFamily,
    paths: &WienerPaths,
) -> Result<FlowSample> {
    euler_flow_with(a, family, paths, EulerScheme::Exponential)
}

pub fn euler_flow_with(
    a: Option<&TruncatedOperator>,
    family: &OperatorFamily,
    paths: &WienerPaths,
    scheme: EulerScheme,
) -> Result<FlowSample> {
    let frames = euler_frames(a, family, paths, scheme)?;
    FlowSample::new(
        *paths.grid(),
        frames,
        SolverTag::Euler,
        paths.seed(),
        paths.origin(),
    )
}

fn euler_frames(
    a: Option<&TruncatedOperator>,
    family: &OperatorFamily,
    paths: &WienerPaths,
    scheme: EulerScheme,
) -> Result<Vec<TruncatedOperator>> {
    check_inputs(family, paths)?;
    let n = family.dim();
    if let Some(a) = a {
        if a.dim() != n {
            return Err(FlowError::DimensionMismatch {
                expected: n,
                actual: a.dim(),
            });
        }
    }
    let grid = paths.grid();
    let dt = grid.dt();
    let ident = TruncatedOperator::identity(n);

    let mut base = ident.clone();
    base.add_scaled(dt, family.drift());
    let semigroup = match (a, scheme) {
        (Some(a), EulerScheme::Exponential) => Some(matrix_exponential(&a.scale(dt))?),
        (Some(a), EulerScheme::Plain) => {
            base.add_scaled(dt, a);
            None
        }
        (None, _) => None,
    };

    let mut frames = Vec::with_capacity(grid.steps() + 1);
    frames.push(ident);
    for i in 0..grid.steps() {
        let mut step = base.clone();
        for (k, b) in family.noise().iter().enumerate() {
            step.add_scaled(paths.increment(k, i), b);
        }
        let mut next = step.compose(frames.last().unwrap());
        if let Some(e) = &semigroup {
            next = e.compose(&next);
        }
        frames.push(next);
    }
    Ok(frames)
}

/// The inverse flow `𝒵`: exponential Euler on the dual family
/// `{B̃ᵀ − B_0ᵀ; −B_kᵀ}` with the same increments, so that `𝒵ᵀ𝒴 → I`.
///
/// The dual drift goes through the semigroup factor, which makes the
/// noise-free case exact.
pub fn inverse_flow(family: &OperatorFamily, paths: &WienerPaths) -> Result<FlowSample> {
    let dual = family.dual();
    let generator = dual.drift().clone();
    let dual = dual.with_drift(TruncatedOperator::zeros(family.dim()))?;
    let frames = euler_frames(Some(&generator), &dual, paths, EulerScheme::Exponential)?;
    FlowSample::new(
        *paths.grid(),
        frames,
        SolverTag::InverseDual,
        paths.seed(),
        paths.origin(),
    )
}
