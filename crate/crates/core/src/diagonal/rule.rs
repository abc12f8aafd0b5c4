//! Closed-form sequences `k ↦ x_k` and their behaviour as `k → ∞`.
//!
//! A symbolic rule is a finite sum of monomials `c·k^a·(ln(k+1))^b`, possibly
//! different on odd and even `k`. The dominant monomial (largest `(a, b)` in
//! lexicographic order) decides limits and series convergence exactly.
//! Explicit lists are only known up to their length.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{FlowError, Result};

/// `coef · k^power · (ln(k+1))^log_power`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Monomial {
    pub coef: f64,
    #[serde(default)]
    pub power: f64,
    #[serde(default)]
    pub log_power: f64,
}

impl Monomial {
    pub fn new(coef: f64, power: f64, log_power: f64) -> Self {
        Self {
            coef,
            power,
            log_power,
        }
    }

    pub fn eval(&self, k: usize) -> f64 {
        let k = k as f64;
        let mut v = self.coef;
        if self.power != 0.0 {
            v *= k.powf(self.power);
        }
        if self.log_power != 0.0 {
            v *= (k + 1.0).ln().powf(self.log_power);
        }
        v
    }

    fn order(&self, other: &Self) -> Ordering {
        self.power
            .total_cmp(&other.power)
            .then(self.log_power.total_cmp(&other.log_power))
    }
}

/// Limit of a sequence as `k → ∞`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Limit {
    Finite(f64),
    PosInf,
    NegInf,
}

impl Limit {
    pub fn is_finite(&self) -> bool {
        matches!(self, Limit::Finite(_))
    }
}

/// A normalized sum of monomials.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Expansion {
    terms: Vec<Monomial>,
}

const MERGE_TOL: f64 = 1e-12;

impl Expansion {
    pub fn new(terms: Vec<Monomial>) -> Self {
        let mut merged: Vec<Monomial> = Vec::new();
        for t in terms {
            match merged.iter_mut().find(|m| m.order(&t) == Ordering::Equal) {
                Some(m) => m.coef += t.coef,
                None => merged.push(t),
            }
        }
        let scale = merged.iter().map(|m| m.coef.abs()).fold(0.0, f64::max);
        merged.retain(|m| m.coef.abs() > MERGE_TOL * scale && m.coef != 0.0);
        merged.sort_by(|a, b| b.order(a));
        Self { terms: merged }
    }

    pub fn constant(c: f64) -> Self {
        Self::new(vec![Monomial::new(c, 0.0, 0.0)])
    }

    pub fn terms(&self) -> &[Monomial] {
        &self.terms
    }

    pub fn eval(&self, k: usize) -> f64 {
        self.terms.iter().map(|m| m.eval(k)).sum()
    }

    pub fn add(&self, other: &Self) -> Self {
        Self::new(self.terms.iter().chain(&other.terms).copied().collect())
    }

    pub fn scale(&self, c: f64) -> Self {
        Self::new(self.terms.iter().map(|m| Monomial { coef: m.coef * c, ..*m }).collect())
    }

    pub fn mul(&self, other: &Self) -> Self {
        let mut out = Vec::with_capacity(self.terms.len() * other.terms.len());
        for a in &self.terms {
            for b in &other.terms {
                out.push(Monomial::new(
                    a.coef * b.coef,
                    a.power + b.power,
                    a.log_power + b.log_power,
                ));
            }
        }
        Self::new(out)
    }

    /// Multiplies by `(ln k)^b`, asymptotically the same as `(ln(k+1))^b`.
    pub fn mul_log(&self, b: f64) -> Self {
        Self::new(
            self.terms
                .iter()
                .map(|m| Monomial {
                    log_power: m.log_power + b,
                    ..*m
                })
                .collect(),
        )
    }

    pub fn leading(&self) -> Option<&Monomial> {
        self.terms.first()
    }

    pub fn limit(&self) -> Limit {
        let Some(m) = self.leading() else {
            return Limit::Finite(0.0);
        };
        match m.order(&Monomial::new(1.0, 0.0, 0.0)) {
            Ordering::Greater if m.coef > 0.0 => Limit::PosInf,
            Ordering::Greater => Limit::NegInf,
            Ordering::Equal => Limit::Finite(m.coef),
            Ordering::Less => Limit::Finite(0.0),
        }
    }

    /// Whether `Σ_k x_k` converges (equivalently `Σ |x_k|`, the tail having
    /// one sign).
    pub fn series_converges(&self) -> bool {
        match self.leading() {
            None => true,
            Some(m) => m.power < -1.0 || (m.power == -1.0 && m.log_power < -1.0),
        }
    }
}

/// A closed-form rule `k ↦ x_k`, `k ≥ 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Rule {
    /// `value`.
    Constant { value: f64 },
    /// `coef · k^exp`.
    Power { coef: f64, exp: f64 },
    /// `coef · (ln(k+1))^exp`.
    LogPower { coef: f64, exp: f64 },
    /// Sum of monomials.
    Terms { terms: Vec<Monomial> },
    /// `values[k−1]`; unknown beyond the list.
    Explicit { values: Vec<f64> },
    /// `odd` on odd `k`, `even` on even `k` (both evaluated at `k` itself).
    Interleave { odd: Box<Rule>, even: Box<Rule> },
}

impl Rule {
    pub fn constant(value: f64) -> Self {
        Rule::Constant { value }
    }

    pub fn power(coef: f64, exp: f64) -> Self {
        Rule::Power { coef, exp }
    }

    pub fn log_power(coef: f64, exp: f64) -> Self {
        Rule::LogPower { coef, exp }
    }

    pub fn terms(terms: Vec<Monomial>) -> Self {
        Rule::Terms { terms }
    }

    pub fn explicit(values: Vec<f64>) -> Self {
        Rule::Explicit { values }
    }

    pub fn interleave(odd: Rule, even: Rule) -> Self {
        Rule::Interleave {
            odd: Box::new(odd),
            even: Box::new(even),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Rule::Constant { value } => finite(*value),
            Rule::Power { coef, exp } | Rule::LogPower { coef, exp } => {
                finite(*coef)?;
                finite(*exp)
            }
            Rule::Terms { terms } => terms.iter().try_for_each(|m| {
                finite(m.coef)?;
                finite(m.power)?;
                finite(m.log_power)
            }),
            Rule::Explicit { values } => {
                if values.is_empty() {
                    return Err(FlowError::Domain("explicit rule needs at least one value".into()));
                }
                values.iter().try_for_each(|v| finite(*v))
            }
            Rule::Interleave { odd, even } => {
                if matches!(**odd, Rule::Interleave { .. }) || matches!(**even, Rule::Interleave { .. }) {
                    return Err(FlowError::Domain("interleaved rules cannot be nested".into()));
                }
                odd.validate()?;
                even.validate()
            }
        }
    }

    /// `x_k`, or `None` past the end of an explicit list.
    pub fn eval(&self, k: usize) -> Option<f64> {
        debug_assert!(k >= 1);
        match self {
            Rule::Explicit { values } => values.get(k - 1).copied(),
            Rule::Interleave { odd, even } => {
                if k % 2 == 1 {
                    odd.eval(k)
                } else {
                    even.eval(k)
                }
            }
            Rule::Constant { value } => Some(*value),
            Rule::Power { coef, exp } => Some(Monomial::new(*coef, *exp, 0.0).eval(k)),
            Rule::LogPower { coef, exp } => Some(Monomial::new(*coef, 0.0, *exp).eval(k)),
            Rule::Terms { terms } => Some(terms.iter().map(|m| m.eval(k)).sum()),
        }
    }

    /// Largest `k` for which the rule is known, `None` if unbounded.
    pub fn known_up_to(&self) -> Option<usize> {
        match self {
            Rule::Explicit { values } => Some(values.len()),
            Rule::Interleave { odd, even } => {
                // first unknown odd / even index
                let first_odd = odd.known_up_to().map(|n| if n % 2 == 0 { n + 1 } else { n + 2 });
                let first_even = even.known_up_to().map(|n| if n % 2 == 1 { n + 1 } else { n + 2 });
                match (first_odd, first_even) {
                    (None, None) => None,
                    (a, b) => Some(a.unwrap_or(usize::MAX).min(b.unwrap_or(usize::MAX)) - 1),
                }
            }
            _ => None,
        }
    }

    fn expansion(&self) -> Option<Expansion> {
        match self {
            Rule::Constant { value } => Some(Expansion::constant(*value)),
            Rule::Power { coef, exp } => Some(Expansion::new(vec![Monomial::new(*coef, *exp, 0.0)])),
            Rule::LogPower { coef, exp } => {
                Some(Expansion::new(vec![Monomial::new(*coef, 0.0, *exp)]))
            }
            Rule::Terms { terms } => Some(Expansion::new(terms.clone())),
            Rule::Explicit { .. } | Rule::Interleave { .. } => None,
        }
    }

    /// Per-parity expansions: one entry for a plain rule, `[odd, even]` for an
    /// interleave; `None` if any part is explicit.
    pub fn branches(&self) -> Option<Vec<Expansion>> {
        match self {
            Rule::Interleave { odd, even } => Some(vec![odd.expansion()?, even.expansion()?]),
            other => Some(vec![other.expansion()?]),
        }
    }

    pub fn is_symbolic(&self) -> bool {
        self.branches().is_some()
    }
}

fn finite(x: f64) -> Result<()> {
    if x.is_finite() {
        Ok(())
    } else {
        Err(FlowError::Domain(format!("rule parameters must be finite, got {x}")))
    }
}

/// Combines the branches of two rules pointwise; the result has period 2 if
/// either input does.
pub fn combine(
    a: &[Expansion],
    b: &[Expansion],
    f: impl Fn(&Expansion, &Expansion) -> Expansion,
) -> Vec<Expansion> {
    let period = a.len().max(b.len());
    (0..period)
        .map(|r| f(&a[r % a.len()], &b[r % b.len()]))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normalization_merges_and_orders() {
        let e = Expansion::new(vec![
            Monomial::new(1.0, 0.0, 1.0),
            Monomial::new(2.0, 1.0, 0.0),
            Monomial::new(-1.0, 0.0, 1.0),
            Monomial::new(0.5, 0.0, 0.0),
        ]);
        assert_eq!(e.terms().len(), 2);
        assert_eq!(e.leading().unwrap().power, 1.0);
        assert_eq!(e.limit(), Limit::PosInf);
    }

    #[test]
    fn limits() {
        assert_eq!(Expansion::constant(3.0).limit(), Limit::Finite(3.0));
        assert_eq!(Expansion::default().limit(), Limit::Finite(0.0));
        let neg_log_sq = Expansion::new(vec![
            Monomial::new(-0.5, 0.0, 2.0),
            Monomial::new(2f64.sqrt(), 0.0, 1.5),
        ]);
        assert_eq!(neg_log_sq.limit(), Limit::NegInf);
        let decaying = Expansion::new(vec![Monomial::new(5.0, 0.0, -1.0)]);
        assert_eq!(decaying.limit(), Limit::Finite(0.0));
    }

    #[test]
    fn series_convergence_boundary() {
        let s = |a, b| Expansion::new(vec![Monomial::new(1.0, a, b)]).series_converges();
        assert!(s(-2.0, 0.0));
        assert!(!s(-1.0, 0.0));
        assert!(!s(-1.0, 0.5));
        assert!(!s(-1.0, -1.0));
        assert!(s(-1.0, -1.5));
        assert!(!s(-0.5, -10.0));
    }

    #[test]
    fn evaluation_matches_formula() {
        let r = Rule::terms(vec![Monomial::new(2.0, 0.5, 0.0), Monomial::new(-1.0, 0.0, 2.0)]);
        for k in [1usize, 7, 1000] {
            let kf = k as f64;
            let expected = 2.0 * kf.sqrt() - (kf + 1.0).ln().powi(2);
            assert!((r.eval(k).unwrap() - expected).abs() < 1e-12 * expected.abs().max(1.0));
        }
        let inter = Rule::interleave(Rule::constant(1.0), Rule::power(1.0, 1.0));
        assert_eq!(inter.eval(3), Some(1.0));
        assert_eq!(inter.eval(4), Some(4.0));
        let ex = Rule::explicit(vec![0.1, 0.2]);
        assert_eq!(ex.eval(2), Some(0.2));
        assert_eq!(ex.eval(3), None);
        assert!(!ex.is_symbolic());
        assert_eq!(ex.known_up_to(), Some(2));
        let mixed = Rule::interleave(Rule::explicit(vec![1.0; 5]), Rule::constant(0.0));
        assert_eq!(mixed.known_up_to(), Some(6));
        let mixed = Rule::interleave(Rule::constant(0.0), Rule::explicit(vec![1.0; 5]));
        assert_eq!(mixed.known_up_to(), Some(5));
    }

    #[test]
    fn nested_interleave_is_rejected() {
        let inner = Rule::interleave(Rule::constant(0.0), Rule::constant(1.0));
        assert!(Rule::interleave(inner, Rule::constant(2.0)).validate().is_err());
    }

    #[test]
    fn rules_round_trip_through_toml() {
        #[derive(Serialize, Deserialize, PartialEq, Debug)]
        struct Wrap {
            sigma: Rule,
        }
        let w = Wrap {
            sigma: Rule::interleave(Rule::log_power(1.0, 1.0), Rule::power(1.0, -1.0)),
        };
        let text = toml::to_string(&w).unwrap();
        let back: Wrap = toml::from_str(&text).unwrap();
        assert_eq!(back, w);
    }
}
