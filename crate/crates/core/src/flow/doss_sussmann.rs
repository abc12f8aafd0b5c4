//! Splitting `𝒳 = 𝒴𝒢` for a diagonal generator and commuting noise.
//!
//! `𝒴` is the Itô flow with drift `B_0 = ½ Σ B_k²`, i.e. `exp{Σ B_k W_k}`,
//! and `𝒢` solves the random ODE `d𝒢 = 𝒴⁻¹(A_λ − B_0)𝒴 𝒢 dt`.

use super::commutative::exponential_frames;
use super::euler::check_inputs;
use super::{FlowSample, SolverTag};
use crate::error::{FlowError, Result};
use crate::noise::WienerPaths;
use crate::operators::{OperatorFamily, TruncatedOperator};

fn check_decay(decay: &[f64]) -> Result<()> {
    if decay.is_empty() {
        return Err(FlowError::Domain("spectrum must be nonempty".into()));
    }
    if let Some(a) = decay.iter().find(|a| !(**a >= 0.0) || !a.is_finite()) {
        return Err(FlowError::Domain(format!(
            "A = diag(−a_j) needs finite a_j >= 0, got {a}"
        )));
    }
    Ok(())
}

/// `A_λ = λA(λI − A)⁻¹` for `A = diag(−a_j)`, i.e. `diag(−λa_j/(λ + a_j))`.
pub fn yosida(decay: &[f64], lambda: f64) -> Result<TruncatedOperator> {
    if !(lambda > 0.0) || !lambda.is_finite() {
        return Err(FlowError::Domain(format!("λ must be finite and > 0, got {lambda}")));
    }
    check_decay(decay)?;
    let entries: Vec<f64> = decay.iter().map(|a| -lambda * a / (lambda + a)).collect();
    TruncatedOperator::diagonal(&entries)
}

/// `{10, 100, 1000}·max_j a_j` (scale 1 for a zero spectrum).
pub fn default_lambda_ladder(decay: &[f64]) -> Vec<f64> {
    let top = decay.iter().cloned().fold(0.0, f64::max);
    let top = if top > 0.0 { top } else { 1.0 };
    [10.0, 100.0, 1000.0].iter().map(|c| c * top).collect()
}

/// `𝒳 = 𝒴𝒢` with `A = diag(−a_j)` replaced by its Yosida approximation.
///
/// `noise` must have zero drift and commuting members. `𝒢` is advanced by
/// the classical fourth-order Runge–Kutta method with step `Δt`; the
/// coefficient at the half step is the mean of its grid values.
pub fn doss_sussmann_flow(
    decay: &[f64],
    noise: &OperatorFamily,
    paths: &WienerPaths,
    lambda: f64,
) -> Result<FlowSample> {
    if noise.drift().frobenius_norm() != 0.0 {
        return Err(FlowError::InvalidOperator(
            "the splitting takes a noise-only family; put the generator in the spectrum".into(),
        ));
    }
    if decay.len() != noise.dim() {
        return Err(FlowError::DimensionMismatch {
            expected: noise.dim(),
            actual: decay.len(),
        });
    }
    noise.ensure_commuting()?;
    check_inputs(noise, paths)?;
    let a_lambda = yosida(decay, lambda)?;
    let mut shift = a_lambda.clone();
    shift.add_scaled(-0.5, &noise.sum_of_squares());

    let zero = TruncatedOperator::zeros(noise.dim());
    let y = exponential_frames(noise, paths, &zero, 1.0)?;
    let y_inv = exponential_frames(noise, paths, &zero, -1.0)?;
    let coefficient: Vec<TruncatedOperator> = y
        .iter()
        .zip(&y_inv)
        .map(|(y, yi)| yi.compose(&shift).compose(y))
        .collect();

    let dt = paths.grid().dt();
    let mut g = TruncatedOperator::identity(noise.dim());
    let mut frames = Vec::with_capacity(y.len());
    frames.push(TruncatedOperator::identity(noise.dim()));
    for i in 0..paths.grid().steps() {
        let c0 = &coefficient[i];
        let c1 = &coefficient[i + 1];
        let cm = (c0 + c1).scale(0.5);
        let k1 = c0.compose(&g);
        let mut arg = g.clone();
        arg.add_scaled(0.5 * dt, &k1);
        let k2 = cm.compose(&arg);
        let mut arg = g.clone();
        arg.add_scaled(0.5 * dt, &k2);
        let k3 = cm.compose(&arg);
        let mut arg = g.clone();
        arg.add_scaled(dt, &k3);
        let k4 = c1.compose(&arg);
        g.add_scaled(dt / 6.0, &k1);
        g.add_scaled(dt / 3.0, &k2);
        g.add_scaled(dt / 3.0, &k3);
        g.add_scaled(dt / 6.0, &k4);
        frames.push(y[i + 1].compose(&g));
    }
    FlowSample::new(
        *paths.grid(),
        frames,
        SolverTag::DossSussmann,
        paths.seed(),
        paths.origin(),
    )
}
