//! Normal distribution tails that stay accurate far out.

use libm::erfc;

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// `Q(x) = P(Z > x)` for `Z ~ N(0,1)`.
pub fn normal_tail(x: f64) -> f64 {
    if x < 37.0 {
        0.5 * erfc(x / std::f64::consts::SQRT_2)
    } else {
        log_normal_tail(x).exp()
    }
}

/// `Φ(x) = P(Z ≤ x)`.
pub fn normal_cdf(x: f64) -> f64 {
    normal_tail(-x)
}

/// `ln Q(x)`, finite for every finite `x`.
pub fn log_normal_tail(x: f64) -> f64 {
    if x < 30.0 {
        return (0.5 * erfc(x / std::f64::consts::SQRT_2)).ln();
    }
    // Mills ratio: Q(x) = φ(x)/x · (1 − 1/x² + 3/x⁴ − 15/x⁶ + …)
    let inv2 = 1.0 / (x * x);
    let mut term = 1.0;
    let mut series = 1.0;
    for j in 1..8 {
        term *= -((2 * j - 1) as f64) * inv2;
        series += term;
    }
    -0.5 * x * x - LN_SQRT_2PI - x.ln() + series.ln()
}

/// `ln Φ(x)`.
pub fn log_normal_cdf(x: f64) -> f64 {
    log_normal_tail(-x)
}
