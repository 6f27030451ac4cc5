//! The Brownian heat ball of scale `d`: its boundary `ψ±(t) = ±√(t log(d²/t))`
//! on `[0, d²]`, the density of the first time `(t, W_t)` leaves it, and an
//! exact sampler for that time.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Upper,
    Lower,
}

impl Side {
    pub fn as_str(self) -> &'static str {
        match self {
            Side::Upper => "upper",
            Side::Lower => "lower",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Spheroid {
    d: f64,
}

/// Exit of Brownian motion from a spheroid: time in `(0, d²]` and the side
/// of the boundary that was hit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BrownianExit {
    pub tau: f64,
    pub side: Side,
}

impl Spheroid {
    pub fn new(d: f64) -> Result<Self> {
        if d > 0.0 && d.is_finite() {
            Ok(Self { d })
        } else {
            Err(Error::domain(format!("spheroid scale must be positive, got {d}")))
        }
    }

    pub fn d(&self) -> f64 {
        self.d
    }

    /// Length of the boundary's support, `d²`.
    pub fn lifetime(&self) -> f64 {
        self.d * self.d
    }

    /// Upper boundary `√(t log(d²/t))`, extended by 0 at `t = 0`. The caller
    /// guarantees `t ∈ [0, d²]`.
    pub(crate) fn upper_unchecked(&self, t: f64) -> f64 {
        if t <= 0.0 {
            return 0.0;
        }
        let v = t * (self.lifetime() / t).ln();
        if v > 0.0 {
            v.sqrt()
        } else {
            0.0
        }
    }

    /// `(ψ₋(t), ψ₊(t))`.
    pub fn psi(&self, t: f64) -> Result<(f64, f64)> {
        if !(0.0..=self.lifetime()).contains(&t) {
            return Err(Error::domain(format!("t = {t} outside the spheroid support [0, {}]", self.lifetime())));
        }
        let up = self.upper_unchecked(t);
        Ok((-up, up))
    }

    /// Boundary value on the given side.
    pub fn boundary(&self, t: f64, side: Side) -> Result<f64> {
        let (lo, up) = self.psi(t)?;
        Ok(match side {
            Side::Upper => up,
            Side::Lower => lo,
        })
    }

    /// Density of the exit time, `(1/(d√(2π))) √(log(d²/t)/t)` on `(0, d²]`.
    pub fn exit_pdf(&self, t: f64) -> Result<f64> {
        if !(t > 0.0 && t <= self.lifetime()) {
            return Err(Error::domain(format!("t = {t} outside the density support (0, {}]", self.lifetime())));
        }
        let log = (self.lifetime() / t).ln().max(0.0);
        Ok((log / t).sqrt() / (self.d * (2.0 * std::f64::consts::PI).sqrt()))
    }

    /// Exit from explicit draws: `u ∈ (0, 1]`, standard normal `n`, and the
    /// side. The exit time is `d² u² e^{-n²}`: under the density above,
    /// `log(d²/τ)` is chi-squared with three degrees of freedom, i.e.
    /// `-2 log u + n²`.
    pub fn exit_from_draws(&self, u: f64, n: f64, side: Side) -> BrownianExit {
        BrownianExit { tau: self.lifetime() * u * u * (-n * n).exp(), side }
    }

    /// Exact exit sample. Draw order is fixed: uniform, normal, then a fair
    /// coin for the side (`true` is the upper side).
    pub fn sample_exit<R: Rng + ?Sized>(&self, rng: &mut R) -> BrownianExit {
        let u = 1.0 - rng.random::<f64>();
        let n: f64 = rng.sample(StandardNormal);
        let side = if rng.random::<bool>() { Side::Upper } else { Side::Lower };
        let mut exit = self.exit_from_draws(u, n, side);
        // e^{-n²} underflows for |n| > 27; keep the time strictly positive.
        if exit.tau <= 0.0 {
            exit.tau = f64::MIN_POSITIVE;
        }
        exit
    }
}
