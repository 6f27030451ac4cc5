//! Reference exit-time sampler: explicit Euler–Maruyama with an optional
//! Brownian-bridge test for crossings between grid points.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::coeffs::CoefficientSet;
use crate::error::{Error, Result};
use crate::spheroid::Side;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EulerConfig {
    pub h: f64,
    pub bridge_correction: bool,
    /// Longest simulated duration before the path is censored.
    pub t_cap: f64,
}

impl Default for EulerConfig {
    fn default() -> Self {
        Self { h: 1e-4, bridge_correction: true, t_cap: 1e3 }
    }
}

impl EulerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.h > 0.0 && self.h.is_finite()) {
            return Err(Error::Config(format!("Euler step must be positive, got {}", self.h)));
        }
        if !(self.t_cap > 0.0) {
            return Err(Error::Config(format!("Euler time cap must be positive, got {}", self.t_cap)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EulerExit {
    pub time: f64,
    pub position: f64,
    pub side: Option<Side>,
    pub censored: bool,
}

/// Bridge crossing probabilities beyond this exponent are treated as zero.
const NEGLIGIBLE_EXPONENT: f64 = 700.0;

/// Simulates `X_{k+1} = X_k + (α X_k + β) h + σ √h N_k` from `(t0, x0)`
/// until the path leaves `[a, b]` or runs for `t_cap`.
///
/// With the bridge correction, a step that stays inside still exits with
/// the Brownian-bridge probability `exp(-2 (b - X_k)(b - X_{k+1}) / (σ² h))`
/// (and its mirror image at `a`); exits are snapped to the crossed endpoint.
pub fn euler_exit<R: Rng + ?Sized>(
    cs: &CoefficientSet,
    a: f64,
    b: f64,
    t0: f64,
    x0: f64,
    cfg: &EulerConfig,
    rng: &mut R,
) -> Result<EulerExit> {
    cfg.validate()?;
    if !(a < x0 && x0 < b) {
        return Err(Error::domain(format!("start {x0} must lie strictly inside ({a}, {b})")));
    }
    let h = cfg.h;
    let sqrt_h = h.sqrt();
    let mut x = x0;
    let mut k: u64 = 0;
    loop {
        let t = t0 + k as f64 * h;
        if t - t0 >= cfg.t_cap {
            return Ok(EulerExit { time: t, position: x, side: None, censored: true });
        }
        let sigma = cs.sigma(t)?;
        let n: f64 = rng.sample(StandardNormal);
        let next = x + (cs.alpha(t) * x + cs.beta(t)) * h + sigma * sqrt_h * n;
        k += 1;
        let t_next = t0 + k as f64 * h;
        if next >= b {
            return Ok(EulerExit { time: t_next, position: b, side: Some(Side::Upper), censored: false });
        }
        if next <= a {
            return Ok(EulerExit { time: t_next, position: a, side: Some(Side::Lower), censored: false });
        }
        if cfg.bridge_correction {
            let var = sigma * sigma * h;
            let up_exp = 2.0 * (b - x) * (b - next) / var;
            let lo_exp = 2.0 * (x - a) * (next - a) / var;
            if up_exp < NEGLIGIBLE_EXPONENT || lo_exp < NEGLIGIBLE_EXPONENT {
                let p_up = (-up_exp).exp();
                let p_lo = (-lo_exp).exp();
                let u: f64 = rng.random();
                if u < p_up {
                    return Ok(EulerExit { time: t_next, position: b, side: Some(Side::Upper), censored: false });
                }
                if u < p_up + p_lo {
                    return Ok(EulerExit { time: t_next, position: a, side: Some(Side::Lower), censored: false });
                }
            }
        }
        x = next;
    }
}
