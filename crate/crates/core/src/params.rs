use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma;

use crate::error::{config, Result};

/// Parameters of the (α, d, β)-superprocess with branching mechanism
/// `ψ(v) = −a·v + b·v^{1+β}` and motion generator `−(−Δ)^{α/2}`.
///
/// Only `d = 1` is supported.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub alpha: f64,
    pub beta: f64,
    pub a: f64,
    pub b: f64,
    pub d: u32,
}

/// Regime inequalities that experiments may require.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regime {
    /// `d < α/β`: states are absolutely continuous.
    Density,
    /// `d = 1` and `α > 1+β`: the density has a continuous version.
    Continuity,
    /// `β > (α−1)/2`: the fixed-point exponent is strictly below one.
    Optimality,
}

impl Regime {
    pub fn inequality(self) -> &'static str {
        match self {
            Regime::Density => "requires d < α/β",
            Regime::Continuity => "requires α > 1+β",
            Regime::Optimality => "requires β > (α−1)/2",
        }
    }
}

impl ModelParams {
    pub fn new(alpha: f64, beta: f64, a: f64, b: f64) -> Result<Self> {
        let p = Self {
            alpha,
            beta,
            a,
            b,
            d: 1,
        };
        p.validate()?;
        Ok(p)
    }

    /// Control model with branching switched off (`b = 0`). Only the motion
    /// and the linear term remain.
    pub fn without_branching(alpha: f64, beta: f64, a: f64) -> Result<Self> {
        let p = Self {
            alpha,
            beta,
            a,
            b: 0.0,
            d: 1,
        };
        p.validate_shape()?;
        Ok(p)
    }

    /// Checks every field but allows `b = 0`.
    pub fn validate_shape(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha <= 2.0) {
            return config("alpha must be in (0,2]");
        }
        if !(self.beta > 0.0 && self.beta < 1.0) {
            return config("beta must be in (0,1)");
        }
        if !self.a.is_finite() {
            return config("a must be finite");
        }
        if !(self.b >= 0.0 && self.b.is_finite()) {
            return config("b must be non-negative");
        }
        if self.d != 1 {
            return config("only d = 1 is supported");
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.validate_shape()?;
        if self.b <= 0.0 {
            return config("b must be positive");
        }
        Ok(())
    }

    pub fn has_branching(&self) -> bool {
        self.b > 0.0
    }

    /// `ϱ = b(1+β)β / Γ(1−β)`, the intensity constant of the jump compensator.
    pub fn rho_const(&self) -> f64 {
        self.b * (1.0 + self.beta) * self.beta / gamma(1.0 - self.beta)
    }

    /// Optimal local Hölder index `α/(1+β) − 1`.
    pub fn eta_c(&self) -> f64 {
        self.alpha / (1.0 + self.beta) - 1.0
    }

    /// Hölder index at a fixed point, `min{(1+α)/(1+β) − 1, 1}`.
    pub fn eta_bar_c(&self) -> f64 {
        ((1.0 + self.alpha) / (1.0 + self.beta) - 1.0).min(1.0)
    }

    pub fn density_regime(&self) -> bool {
        (self.d as f64) < self.alpha / self.beta
    }

    pub fn continuity_regime(&self) -> bool {
        self.d == 1 && self.alpha > 1.0 + self.beta
    }

    pub fn optimality_regime(&self) -> bool {
        self.beta > (self.alpha - 1.0) / 2.0
    }

    pub fn satisfies(&self, regime: Regime) -> bool {
        match regime {
            Regime::Density => self.density_regime(),
            Regime::Continuity => self.continuity_regime(),
            Regime::Optimality => self.optimality_regime(),
        }
    }

    /// Fails with a configuration error naming the first violated inequality.
    pub fn require(&self, regimes: &[Regime]) -> Result<()> {
        for &r in regimes {
            if !self.satisfies(r) {
                return config(format!(
                    "{} (alpha = {}, beta = {})",
                    r.inequality(),
                    self.alpha,
                    self.beta
                ));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rho_for_half_beta() {
        let p = ModelParams::new(1.8, 0.5, 0.0, 1.0).unwrap();
        let expected = 0.75 / std::f64::consts::PI.sqrt();
        assert!((p.rho_const() - expected).abs() < 1e-12);
        assert!((p.rho_const() - 0.4231421877).abs() < 1e-9);
    }

    #[test]
    fn exponents_and_flags() {
        let p = ModelParams::new(1.8, 0.5, 0.0, 1.0).unwrap();
        assert!((p.eta_c() - 0.2).abs() < 1e-12);
        assert!((p.eta_bar_c() - 2.8 / 1.5 + 1.0).abs() < 1e-12);
        assert!(p.density_regime() && p.continuity_regime() && p.optimality_regime());

        let q = ModelParams::new(1.2, 0.5, 0.0, 1.0).unwrap();
        assert!(q.density_regime());
        assert!(!q.continuity_regime());
        let err = q.require(&[Regime::Continuity]).unwrap_err().to_string();
        assert!(err.contains("requires α > 1+β"), "{err}");
    }

    #[test]
    fn rejects_bad_beta() {
        let err = ModelParams::new(1.8, 1.5, 0.0, 1.0).unwrap_err().to_string();
        assert!(err.contains("beta must be in (0,1)"));
        assert!(ModelParams::new(1.8, 0.5, 0.0, 0.0).is_err());
        assert!(ModelParams::without_branching(1.8, 0.5, 0.0).is_ok());
    }
}
