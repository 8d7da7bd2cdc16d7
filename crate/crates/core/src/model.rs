//! Game and discretization parameters.
//!
//! [`ModelParams`] is an immutable, validated value shared by every other
//! module. It is usually built from a [`ModelConfig`], the JSON document the
//! command-line tool reads.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default grid step of the discrete time grid.
pub const DEFAULT_GRID_STEP: f64 = 0.001;

/// Bracket-width tolerance of the equilibrium bisection.
pub const BISECTION_TOLERANCE: f64 = 1e-6;

/// Iteration cap of the equilibrium bisection.
pub const BISECTION_MAX_ITERATIONS: usize = 64;

/// Poisson CDF level that fixes the default queue-length cap.
pub const TRUNCATION_LEVEL: f64 = 1.0 - 1e-6;

/// Which arrival-timing game is being played.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Variant {
    /// Arrivals before the opening are worthless; an atom forms at time zero.
    NoEarlyBirds,
    /// As `NoEarlyBirds`, but no customer may arrive after the closing time.
    ClosingTime,
    /// Customers may queue before the opening and are served FCFS.
    EarlyBirds,
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let name = match self {
            Variant::NoEarlyBirds => "NoEarlyBirds",
            Variant::ClosingTime => "ClosingTime",
            Variant::EarlyBirds => "EarlyBirds",
        };
        f.write_str(name)
    }
}

/// Validated model parameters.
///
/// `closing_time` is `f64::INFINITY` unless the variant is
/// [`Variant::ClosingTime`].
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    lambda: f64,
    mu: f64,
    alpha: f64,
    beta: f64,
    delta: f64,
    variant: Variant,
    closing_time: f64,
    horizon: f64,
    truncation: usize,
}

impl ModelParams {
    /// Builds parameters for the game without early birds or closing time,
    /// using the default grid step and truncation.
    pub fn new(lambda: f64, mu: f64, alpha: f64, beta: f64, horizon: f64) -> Result<Self> {
        ModelConfig {
            lambda,
            mu,
            alpha,
            beta,
            horizon,
            ..ModelConfig::default()
        }
        .to_params()
    }

    pub fn builder(lambda: f64, mu: f64, alpha: f64, beta: f64) -> ModelConfig {
        ModelConfig {
            lambda,
            mu,
            alpha,
            beta,
            ..ModelConfig::default()
        }
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    /// Grid step δ.
    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn variant(&self) -> Variant {
        self.variant
    }

    /// Closing time T, `INFINITY` when the service never closes.
    pub fn closing_time(&self) -> f64 {
        self.closing_time
    }

    /// Simulation stopping time T_s.
    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    /// Queue-length cap K.
    pub fn truncation(&self) -> usize {
        self.truncation
    }

    /// θ = β/(α+β), the only cost quantity identifiable from queue lengths.
    pub fn theta(&self) -> f64 {
        theta(self.alpha, self.beta)
    }

    /// Index of the last grid slot not beyond the horizon.
    pub fn horizon_slot(&self) -> i64 {
        time_to_slot_floor(self.horizon, self.delta)
    }

    /// Returns a copy with a different cost pair; other fields unchanged.
    pub fn with_costs(&self, alpha: f64, beta: f64) -> Result<Self> {
        let mut config = self.to_config();
        config.alpha = alpha;
        config.beta = beta;
        config.to_params()
    }

    pub fn to_config(&self) -> ModelConfig {
        ModelConfig {
            lambda: self.lambda,
            mu: self.mu,
            alpha: self.alpha,
            beta: self.beta,
            delta: self.delta,
            variant: self.variant,
            closing_time: self.closing_time,
            horizon: self.horizon,
            truncation: Some(self.truncation),
            seed: None,
        }
    }
}

/// θ = β/(α+β).
pub fn theta(alpha: f64, beta: f64) -> f64 {
    beta / (alpha + beta)
}

/// Smallest `m` with `P(N <= m) >= 1 - 1e-6` for `N ~ Poisson(lambda)`.
///
/// The pmf is accumulated in log space so large means do not underflow
/// `e^{-lambda}`.
pub fn default_truncation(lambda: f64) -> usize {
    truncation_for_level(lambda, TRUNCATION_LEVEL)
}

pub(crate) fn truncation_for_level(lambda: f64, level: f64) -> usize {
    assert!(lambda > 0.0, "Poisson mean must be positive");
    let ln_lambda = lambda.ln();
    let mut ln_pmf = -lambda;
    let mut cdf = ln_pmf.exp();
    let mut k = 0usize;
    let limit = (lambda + 60.0 * lambda.sqrt() + 200.0) as usize;
    while cdf < level && k < limit {
        k += 1;
        ln_pmf += ln_lambda - (k as f64).ln();
        cdf += ln_pmf.exp();
    }
    k
}

/// Nearest grid index of `t`.
pub fn time_to_slot(t: f64, delta: f64) -> i64 {
    (t / delta).round() as i64
}

pub(crate) fn time_to_slot_floor(t: f64, delta: f64) -> i64 {
    // Absorbs representation error so that e.g. 20.0/0.001 lands on 20000.
    (t / delta + 1e-9).floor() as i64
}

/// Key/value configuration document for [`ModelParams`].
///
/// `closing_time` accepts a number or the strings `"Infinity"`/`"inf"`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub lambda: f64,
    pub mu: f64,
    pub alpha: f64,
    pub beta: f64,
    #[serde(default = "default_delta")]
    pub delta: f64,
    #[serde(default = "default_variant")]
    pub variant: Variant,
    #[serde(default = "default_closing_time", with = "extended_real")]
    pub closing_time: f64,
    pub horizon: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truncation: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

fn default_delta() -> f64 {
    DEFAULT_GRID_STEP
}

fn default_variant() -> Variant {
    Variant::NoEarlyBirds
}

fn default_closing_time() -> f64 {
    f64::INFINITY
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            lambda: 5.0,
            mu: 1.0,
            alpha: 2.0,
            beta: 0.2,
            delta: DEFAULT_GRID_STEP,
            variant: Variant::NoEarlyBirds,
            closing_time: f64::INFINITY,
            horizon: 20.0,
            truncation: None,
            seed: None,
        }
    }
}

impl ModelConfig {
    pub fn delta(mut self, delta: f64) -> Self {
        self.delta = delta;
        self
    }

    pub fn horizon(mut self, horizon: f64) -> Self {
        self.horizon = horizon;
        self
    }

    pub fn closing_time(mut self, closing_time: f64) -> Self {
        self.variant = Variant::ClosingTime;
        self.closing_time = closing_time;
        self
    }

    pub fn early_birds(mut self) -> Self {
        self.variant = Variant::EarlyBirds;
        self.closing_time = f64::INFINITY;
        self
    }

    pub fn truncation(mut self, truncation: usize) -> Self {
        self.truncation = Some(truncation);
        self
    }

    pub fn build(self) -> Result<ModelParams> {
        self.to_params()
    }

    /// Validates the document and derives the truncation when absent.
    pub fn to_params(&self) -> Result<ModelParams> {
        let positive = [
            ("lambda", self.lambda),
            ("mu", self.mu),
            ("alpha", self.alpha),
            ("beta", self.beta),
            ("delta", self.delta),
            ("horizon", self.horizon),
        ];
        for (name, value) in positive {
            if !(value.is_finite() && value > 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "{name} must be a positive finite number, got {value}"
                )));
            }
        }
        match self.variant {
            Variant::ClosingTime => {
                if !(self.closing_time.is_finite() && self.closing_time > 0.0) {
                    return Err(Error::InvalidParameter(format!(
                        "ClosingTime variant requires a positive finite closing_time, got {}",
                        self.closing_time
                    )));
                }
            }
            _ => {
                if self.closing_time != f64::INFINITY {
                    return Err(Error::InvalidParameter(format!(
                        "closing_time must be Infinity for {}, got {}",
                        self.variant, self.closing_time
                    )));
                }
            }
        }
        let truncation = match self.truncation {
            Some(0) => {
                return Err(Error::InvalidParameter(
                    "truncation must be at least 1".into(),
                ))
            }
            Some(k) => k,
            None => default_truncation(self.lambda).max(1),
        };
        Ok(ModelParams {
            lambda: self.lambda,
            mu: self.mu,
            alpha: self.alpha,
            beta: self.beta,
            delta: self.delta,
            variant: self.variant,
            closing_time: self.closing_time,
            horizon: self.horizon,
            truncation,
        })
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Format(e.to_string()))
    }
}

/// Serializes `f64` allowing `"Infinity"` for the unbounded case.
pub(crate) mod extended_real {
    use serde::de::{self, Visitor};
    use serde::{Deserializer, Serializer};

    pub fn serialize<S: Serializer>(value: &f64, serializer: S) -> Result<S::Ok, S::Error> {
        if value.is_infinite() && *value > 0.0 {
            serializer.serialize_str("Infinity")
        } else {
            serializer.serialize_f64(*value)
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(deserializer: D) -> Result<f64, D::Error> {
        struct ExtendedReal;

        impl Visitor<'_> for ExtendedReal {
            type Value = f64;

            fn expecting(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
                f.write_str("a number or \"Infinity\"")
            }

            fn visit_f64<E: de::Error>(self, v: f64) -> Result<f64, E> {
                Ok(v)
            }

            fn visit_i64<E: de::Error>(self, v: i64) -> Result<f64, E> {
                Ok(v as f64)
            }

            fn visit_u64<E: de::Error>(self, v: u64) -> Result<f64, E> {
                Ok(v as f64)
            }

            fn visit_str<E: de::Error>(self, v: &str) -> Result<f64, E> {
                match v {
                    "Infinity" | "infinity" | "inf" | "Inf" => Ok(f64::INFINITY),
                    _ => Err(E::invalid_value(de::Unexpected::Str(v), &self)),
                }
            }
        }

        deserializer.deserialize_any(ExtendedReal)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Exact recursion p_{k+1} = p_k λ/(k+1), summed until the level is hit.
    fn brute_force_truncation(lambda: f64) -> usize {
        let mut pmf = (-lambda).exp();
        let mut cdf = pmf;
        let mut k = 0;
        while cdf < TRUNCATION_LEVEL {
            pmf *= lambda / (k as f64 + 1.0);
            k += 1;
            cdf += pmf;
        }
        k
    }

    #[test]
    fn theta_examples() {
        assert!((theta(2.0, 0.2) - 0.2 / 2.2).abs() < 1e-15);
        assert!((theta(2.0, 0.2) - 0.091).abs() < 5e-4);
        assert_eq!(theta(1.0, 1.0), 0.5);
        assert!((theta(2.0, 0.1) - 1.0 / 21.0).abs() < 1e-15);
    }

    #[test]
    fn truncation_matches_recursive_oracle() {
        assert_eq!(default_truncation(5.0), brute_force_truncation(5.0));
        assert_eq!(default_truncation(10.0), brute_force_truncation(10.0));
        // Frozen from the recursion above.
        assert_eq!(brute_force_truncation(5.0), 19);
        assert_eq!(brute_force_truncation(10.0), 28);
        for lambda in [0.3, 1.0, 2.5, 7.0, 33.0, 100.0] {
            assert_eq!(default_truncation(lambda), brute_force_truncation(lambda));
        }
    }

    #[test]
    fn truncation_tiny_mean_is_zero() {
        assert_eq!(default_truncation(1e-9), 0);
    }

    #[test]
    fn truncation_large_mean_does_not_underflow() {
        let k = default_truncation(1e4);
        assert!(k > 10_000 && k < 10_600, "K = {k}");
    }

    #[test]
    fn params_validation() {
        assert!(ModelParams::new(5.0, 1.0, 2.0, 0.2, 20.0).is_ok());
        assert!(ModelParams::new(-5.0, 1.0, 2.0, 0.2, 20.0).is_err());
        assert!(ModelParams::new(5.0, 0.0, 2.0, 0.2, 20.0).is_err());
        assert!(ModelParams::builder(5.0, 1.0, 2.0, 0.2)
            .closing_time(f64::INFINITY)
            .build()
            .is_err());
        let mut cfg = ModelParams::builder(5.0, 1.0, 2.0, 0.2);
        cfg.closing_time = 10.0;
        assert!(cfg.build().is_err());
        assert!(ModelParams::builder(5.0, 1.0, 2.0, 0.2)
            .truncation(0)
            .build()
            .is_err());
        let p = ModelParams::builder(5.0, 1.0, 2.0, 0.2)
            .closing_time(10.0)
            .build()
            .unwrap();
        assert_eq!(p.variant(), Variant::ClosingTime);
        assert_eq!(p.truncation(), 19);
    }

    #[test]
    fn config_json_round_trip_and_unknown_keys() {
        let text = r#"{"lambda":5,"mu":1,"alpha":2,"beta":0.2,"delta":0.001,
            "variant":"NoEarlyBirds","closing_time":"Infinity","horizon":20,"seed":7}"#;
        let cfg = ModelConfig::from_json(text).unwrap();
        assert_eq!(cfg.closing_time, f64::INFINITY);
        assert_eq!(cfg.seed, Some(7));
        let back = serde_json::to_string(&cfg).unwrap();
        assert_eq!(ModelConfig::from_json(&back).unwrap(), cfg);

        let bad = r#"{"lambda":5,"mu":1,"alpha":2,"beta":0.2,"horizon":20,"gamma":1}"#;
        assert!(ModelConfig::from_json(bad).is_err());
    }

    #[test]
    fn horizon_slot_is_exact() {
        let p = ModelParams::new(5.0, 1.0, 2.0, 0.2, 20.0).unwrap();
        assert_eq!(p.horizon_slot(), 20_000);
    }
}
