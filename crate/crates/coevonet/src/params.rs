//! Model parameters shared by the finite chain and its limit.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Rate parameters of the co-evolving chain.
///
/// `eta` scales vertex-colour flips, `rho` scales edge toggles.  The four `s` constants
/// are the per-pair toggle rates by category: `s_c0` concordant absent (edge appears),
/// `s_c1` concordant present (edge vanishes), `s_d0` / `s_d1` the discordant analogues.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub eta: f64,
    pub rho: f64,
    pub s_c0: f64,
    pub s_c1: f64,
    pub s_d0: f64,
    pub s_d1: f64,
}

impl ModelParams {
    pub fn new(eta: f64, rho: f64, s: [f64; 4]) -> Result<Self> {
        let p = ModelParams {
            eta,
            rho,
            s_c0: s[0],
            s_c1: s[1],
            s_d0: s[2],
            s_d1: s[3],
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eta > 0.0) || !self.eta.is_finite() {
            return Err(Error::InvalidInput(format!(
                "eta must be positive and finite, got {}",
                self.eta
            )));
        }
        if !(self.rho > 0.0) || !self.rho.is_finite() {
            return Err(Error::InvalidInput(format!(
                "rho must be positive and finite, got {}",
                self.rho
            )));
        }
        for (name, v) in [
            ("s_c0", self.s_c0),
            ("s_c1", self.s_c1),
            ("s_d0", self.s_d0),
            ("s_d1", self.s_d1),
        ] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::InvalidInput(format!(
                    "{name} must be non-negative and finite, got {v}"
                )));
            }
        }
        Ok(())
    }

    /// Largest edge-rate constant; the total edge-event rate is at most
    /// `rho * s_bar * n(n-1)/2`.
    pub fn s_bar(&self) -> f64 {
        self.s_c0.max(self.s_c1).max(self.s_d0).max(self.s_d1)
    }

    /// Edge-rate constant for a pair in category (colours agree?, edge present?).
    pub fn s(&self, concordant: bool, present: bool) -> f64 {
        match (concordant, present) {
            (true, false) => self.s_c0,
            (true, true) => self.s_c1,
            (false, false) => self.s_d0,
            (false, true) => self.s_d1,
        }
    }

    /// Gain coefficient `A(q) = (q^2 + (1-q)^2) s_c0 + 2q(1-q) s_d0`: the colour-averaged
    /// appearance rate of a cell at colour fraction q.
    pub fn gain(&self, q: f64) -> f64 {
        let ca = q * q + (1.0 - q) * (1.0 - q);
        let da = 2.0 * q * (1.0 - q);
        ca * self.s_c0 + da * self.s_d0
    }

    /// Loss coefficient `B(q) = (q^2 + (1-q)^2) s_c1 + 2q(1-q) s_d1`.
    pub fn loss(&self, q: f64) -> f64 {
        let ca = q * q + (1.0 - q) * (1.0 - q);
        let da = 2.0 * q * (1.0 - q);
        ca * self.s_c1 + da * self.s_d1
    }

    /// True when concordant and discordant pairs use the same constants; the edge marginal
    /// then solves a linear ODE with the closed form
    /// `p_t = p_inf + (p_0 - p_inf) exp(-rho (s_0 + s_1) t)`.
    pub fn rates_equal(&self) -> bool {
        self.s_c0 == self.s_d0 && self.s_c1 == self.s_d1
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fig1() -> ModelParams {
        ModelParams::new(1.0, 1.1, [1.5, 0.5, 0.7, 2.0]).unwrap()
    }

    #[test]
    fn rejects_bad_rates() {
        assert!(ModelParams::new(0.0, 1.0, [1.0; 4]).is_err());
        assert!(ModelParams::new(1.0, -1.0, [1.0; 4]).is_err());
        assert!(ModelParams::new(1.0, 1.0, [1.0, -0.1, 1.0, 1.0]).is_err());
        assert!(ModelParams::new(f64::NAN, 1.0, [1.0; 4]).is_err());
        assert!(ModelParams::new(1.0, 1.0, [0.0; 4]).is_ok());
    }

    #[test]
    fn category_selection() {
        let p = fig1();
        assert_eq!(p.s(true, false), 1.5);
        assert_eq!(p.s(true, true), 0.5);
        assert_eq!(p.s(false, false), 0.7);
        assert_eq!(p.s(false, true), 2.0);
        assert_eq!(p.s_bar(), 2.0);
    }

    #[test]
    fn gain_loss_at_balanced_colours() {
        // q = 1/2 weights both categories equally: A = (1.5 + 0.7)/2, B = (0.5 + 2.0)/2.
        let p = fig1();
        assert!((p.gain(0.5) - 1.1).abs() < 1e-15);
        assert!((p.loss(0.5) - 1.25).abs() < 1e-15);
        // Monochrome population only sees concordant rates.
        assert!((p.gain(1.0) - 1.5).abs() < 1e-15);
        assert!((p.loss(0.0) - 0.5).abs() < 1e-15);
    }
}
