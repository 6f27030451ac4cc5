//! Coefficients of linear diffusions `dX = (α(t)X + β(t))dt + σ(t)dW` and the
//! scalar primitives derived from them:
//!
//! * `θ(t) = -∫₀ᵗ α`
//! * `ρ(t) = ∫₀ᵗ σ² e^{2θ}`, the Brownian time change
//! * `c(t) = e^{-θ(t)} ∫₀ᵗ β e^{θ}`, the deterministic part of the solution
//!
//! Each primitive uses a closed form when one was installed and falls back to
//! adaptive quadrature otherwise. Evaluation is pure: incremental work is
//! carried explicitly through [`Primitives`] anchors rather than hidden caches,
//! so a [`CoefficientSet`] can be shared freely between threads.

use std::cell::Cell;
use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::quadrature::{self, Tolerance};

pub type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Closed-form replacement for the generic spheroid scale bound `Δ_m`.
pub type DeltaFn = Arc<dyn Fn(&DeltaArgs) -> f64 + Send + Sync>;

/// Preferred horizon step `m` as a function of the interval `(a, b)`.
pub type HorizonFn = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeltaArgs {
    pub a: f64,
    pub b: f64,
    pub m: f64,
    pub t0: f64,
    pub x0: f64,
}

/// Relative tolerance on the time argument when inverting `ρ`.
pub const INVERSION_TOL: f64 = 1e-12;

#[derive(Clone)]
pub struct CoefficientSet {
    name: String,
    alpha: ScalarFn,
    beta: ScalarFn,
    sigma: ScalarFn,
    sigma_floor: f64,
    theta_closed: Option<ScalarFn>,
    rho_closed: Option<ScalarFn>,
    rho_inv_closed: Option<ScalarFn>,
    c_closed: Option<ScalarFn>,
    delta_closed: Option<DeltaFn>,
    preferred_m: Option<HorizonFn>,
    tol: Tolerance,
}

impl fmt::Debug for CoefficientSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CoefficientSet")
            .field("name", &self.name)
            .field("sigma_floor", &self.sigma_floor)
            .field("theta_closed", &self.theta_closed.is_some())
            .field("rho_closed", &self.rho_closed.is_some())
            .field("rho_inv_closed", &self.rho_inv_closed.is_some())
            .field("c_closed", &self.c_closed.is_some())
            .field("delta_closed", &self.delta_closed.is_some())
            .finish()
    }
}

/// Values of `θ`, `ρ` and `c` at one time, used as the starting point for
/// evaluating them at later times.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Primitives {
    pub t: f64,
    pub theta: f64,
    pub rho: f64,
    pub c: f64,
    /// `∫₀ᵗ β e^{θ}`, so that `c = e^{-θ} · drift_integral`.
    drift_integral: f64,
}

impl Primitives {
    pub const ORIGIN: Primitives = Primitives { t: 0.0, theta: 0.0, rho: 0.0, c: 0.0, drift_integral: 0.0 };
}

fn relative_expm1(x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else {
        x.exp_m1() / x
    }
}

impl CoefficientSet {
    /// Coefficients given as plain functions of time. `sigma_floor` is the
    /// strictly positive lower bound that every evaluation of `sigma` is
    /// checked against.
    pub fn new<A, B, S>(alpha: A, beta: B, sigma: S, sigma_floor: f64) -> Result<Self>
    where
        A: Fn(f64) -> f64 + Send + Sync + 'static,
        B: Fn(f64) -> f64 + Send + Sync + 'static,
        S: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        if !(sigma_floor > 0.0 && sigma_floor.is_finite()) {
            return Err(Error::Config(format!("sigma_floor must be positive, got {sigma_floor}")));
        }
        Ok(Self {
            name: "custom".into(),
            alpha: Arc::new(alpha),
            beta: Arc::new(beta),
            sigma: Arc::new(sigma),
            sigma_floor,
            theta_closed: None,
            rho_closed: None,
            rho_inv_closed: None,
            c_closed: None,
            delta_closed: None,
            preferred_m: None,
            tol: Tolerance::default(),
        })
    }

    pub fn named(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub fn with_theta<F: Fn(f64) -> f64 + Send + Sync + 'static>(mut self, theta: F) -> Self {
        self.theta_closed = Some(Arc::new(theta));
        self
    }

    pub fn with_rho<F, G>(mut self, rho: F, rho_inv: Option<G>) -> Self
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
        G: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        self.rho_closed = Some(Arc::new(rho));
        self.rho_inv_closed = rho_inv.map(|g| Arc::new(g) as ScalarFn);
        self
    }

    pub fn with_c<F: Fn(f64) -> f64 + Send + Sync + 'static>(mut self, c: F) -> Self {
        self.c_closed = Some(Arc::new(c));
        self
    }

    pub fn with_delta_bound<F: Fn(&DeltaArgs) -> f64 + Send + Sync + 'static>(mut self, delta: F) -> Self {
        self.delta_closed = Some(Arc::new(delta));
        self
    }

    pub fn with_preferred_m<F: Fn(f64, f64) -> f64 + Send + Sync + 'static>(mut self, m: F) -> Self {
        self.preferred_m = Some(Arc::new(m));
        self
    }

    pub fn with_tolerance(mut self, tol: Tolerance) -> Self {
        self.tol = tol;
        self
    }

    /// The same coefficients with every closed form removed, so all
    /// primitives go through quadrature.
    pub fn without_closed_forms(&self) -> Self {
        Self {
            theta_closed: None,
            rho_closed: None,
            rho_inv_closed: None,
            c_closed: None,
            delta_closed: None,
            ..self.clone()
        }
    }

    /// Standard Brownian motion: `α = β = 0`, `σ = 1`.
    pub fn brownian() -> Self {
        Self::constant(0.0, 0.0, 1.0).expect("unit diffusion is valid").named("bm")
    }

    /// Constant coefficients `α₀, β₀, σ₀` with all primitives in closed form.
    pub fn constant(alpha0: f64, beta0: f64, sigma0: f64) -> Result<Self> {
        if !(sigma0 > 0.0 && sigma0.is_finite() && alpha0.is_finite() && beta0.is_finite()) {
            return Err(Error::Config(format!(
                "constant coefficients need finite values and sigma0 > 0 (got {alpha0}, {beta0}, {sigma0})"
            )));
        }
        let s2 = sigma0 * sigma0;
        let set = Self::new(move |_| alpha0, move |_| beta0, move |_| sigma0, sigma0)?
            .named("constant")
            .with_theta(move |t| -alpha0 * t)
            .with_c(move |t| beta0 * t * relative_expm1(alpha0 * t));
        let set = if alpha0 == 0.0 {
            set.with_rho(move |t| s2 * t, Some(move |u| u / s2))
        } else {
            set.with_rho(
                move |t| s2 * t * relative_expm1(-2.0 * alpha0 * t),
                Some(move |u: f64| (-2.0 * alpha0 * u / s2).ln_1p() / (-2.0 * alpha0)),
            )
        };
        Ok(set)
    }

    /// Mean-reverting preset `dX = k(μ - X)dt + σ₀ dW`.
    pub fn ornstein_uhlenbeck(k: f64, mu: f64, sigma0: f64) -> Result<Self> {
        Ok(Self::constant(-k, k * mu, sigma0)?.named("ou"))
    }

    /// `α = cos/(2+sin)`, `β = cos`, `σ = 2+sin`. Here `α = σ'/σ`, which
    /// makes `ρ(t) = 4t` and gives closed forms for every primitive, for the
    /// spheroid scale bound and for the horizon step `m`.
    pub fn sinusoidal() -> Self {
        let half_sigma = |t: f64| (2.0 + t.sin()) / 2.0;
        Self::new(|t: f64| t.cos() / (2.0 + t.sin()), f64::cos, |t: f64| 2.0 + t.sin(), 1.0)
            .expect("floor is positive")
            .named("sinusoidal")
            .with_theta(move |t| -half_sigma(t).ln())
            .with_rho(|t| 4.0 * t, Some(|u| u / 4.0))
            .with_c(move |t| (2.0 + t.sin()) * half_sigma(t).ln())
            .with_delta_bound(|args| {
                let reach = 1.0 + args.a.abs().max(args.b.abs());
                1.5 * ((-0.5f64).exp() + reach * args.m.sqrt())
            })
            .with_preferred_m(sinusoidal_horizon)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn sigma_floor(&self) -> f64 {
        self.sigma_floor
    }

    pub fn tolerance(&self) -> Tolerance {
        self.tol
    }

    pub fn alpha(&self, t: f64) -> f64 {
        (self.alpha)(t)
    }

    pub fn beta(&self, t: f64) -> f64 {
        (self.beta)(t)
    }

    /// Diffusion coefficient without the floor check (diagnostics only).
    pub fn sigma_raw(&self, t: f64) -> f64 {
        (self.sigma)(t)
    }

    /// Diffusion coefficient, failing if it drops below the floor.
    pub fn sigma(&self, t: f64) -> Result<f64> {
        let s = (self.sigma)(t);
        // Written so that NaN also fails.
        if !(s >= self.sigma_floor) {
            return Err(Error::SigmaBelowFloor { t, sigma: s, floor: self.sigma_floor });
        }
        Ok(s)
    }

    pub fn has_closed_rho(&self) -> bool {
        self.rho_closed.is_some()
    }

    pub fn delta_bound(&self) -> Option<&DeltaFn> {
        self.delta_closed.as_ref()
    }

    pub fn preferred_m(&self, a: f64, b: f64) -> Option<f64> {
        self.preferred_m.as_ref().map(|f| f(a, b))
    }

    fn integrate<F: FnMut(f64) -> f64>(&self, f: F, lo: f64, hi: f64) -> Result<f64> {
        Ok(quadrature::integrate(f, lo, hi, self.tol)?)
    }

    /// `θ(t)` given the anchor values at `from`.
    fn theta_from(&self, from: &Primitives, t: f64) -> Result<f64> {
        match &self.theta_closed {
            Some(f) => Ok(f(t)),
            None => Ok(from.theta + self.integrate(|s| -(self.alpha)(s), from.t, t)?),
        }
    }

    /// Evaluates `f(s, θ(s))` inside a quadrature over `[from.t, ·]`, routing
    /// any floor violation or nested quadrature failure out of the closure.
    fn integrate_with_theta<F>(&self, from: &Primitives, lo: f64, hi: f64, mut f: F) -> Result<f64>
    where
        F: FnMut(f64, f64) -> Result<f64>,
    {
        let failure: Cell<Option<Error>> = Cell::new(None);
        let value = self.integrate(
            |s| {
                let v = self.theta_from(from, s).and_then(|th| f(s, th));
                match v {
                    Ok(v) => v,
                    Err(e) => {
                        failure.set(Some(e));
                        f64::NAN
                    }
                }
            },
            lo,
            hi,
        );
        if let Some(e) = failure.take() {
            return Err(e);
        }
        value
    }

    /// Derivative of the time change, `ρ'(t) = σ(t)² e^{2θ(t)}`.
    pub fn rho_prime_from(&self, from: &Primitives, t: f64) -> Result<f64> {
        let s = self.sigma(t)?;
        Ok(s * s * (2.0 * self.theta_from(from, t)?).exp())
    }

    /// All primitives at time `t`, integrating forward from `from` when no
    /// closed form is installed. Times before the anchor restart from zero.
    pub fn advance(&self, from: &Primitives, t: f64) -> Result<Primitives> {
        if !(t >= 0.0) {
            return Err(Error::domain(format!("time must be non-negative, got {t}")));
        }
        let from = if t >= from.t { *from } else { Primitives::ORIGIN };
        if t == from.t {
            return Ok(from);
        }
        let theta = self.theta_from(&from, t)?;
        let rho = match &self.rho_closed {
            Some(f) => f(t),
            None => {
                from.rho
                    + self.integrate_with_theta(&from, from.t, t, |s, th| {
                        let sg = self.sigma(s)?;
                        Ok(sg * sg * (2.0 * th).exp())
                    })?
            }
        };
        let (c, drift_integral) = match &self.c_closed {
            Some(f) => {
                let c = f(t);
                (c, c * theta.exp())
            }
            None => {
                let di = from.drift_integral
                    + self.integrate_with_theta(&from, from.t, t, |s, th| Ok((self.beta)(s) * th.exp()))?;
                ((-theta).exp() * di, di)
            }
        };
        Ok(Primitives { t, theta, rho, c, drift_integral })
    }

    /// Time `t ≥ from.t` at which `ρ(t) - ρ(from.t) = increment`, searched in
    /// `[from.t, upper]` when `upper` is given.
    pub fn rho_increment_inverse(&self, from: &Primitives, increment: f64, upper: Option<f64>) -> Result<f64> {
        if !(increment >= 0.0) {
            return Err(Error::domain(format!("ρ increment must be non-negative, got {increment}")));
        }
        if increment == 0.0 {
            return Ok(from.t);
        }
        if let (Some(_), Some(inv)) = (&self.rho_closed, &self.rho_inv_closed) {
            let t = inv(increment + from.rho);
            if !t.is_finite() {
                return Err(Error::Inversion(format!("closed-form ρ⁻¹ undefined at {}", increment + from.rho)));
            }
            return Ok(t.max(from.t));
        }
        let gain = |t: f64| -> Result<f64> {
            match &self.rho_closed {
                Some(f) => Ok(f(t) - from.rho),
                None => self.integrate_with_theta(from, from.t, t, |s, th| {
                    let sg = self.sigma(s)?;
                    Ok(sg * sg * (2.0 * th).exp())
                }),
            }
        };
        let hi = match upper {
            Some(u) if gain(u)? >= increment => u,
            _ => {
                let mut width = upper.map_or(1.0, |u| (u - from.t).max(1e-3));
                let mut hi = from.t + width;
                let mut tries = 0;
                while gain(hi)? < increment {
                    tries += 1;
                    if tries > 200 || !hi.is_finite() {
                        return Err(Error::Inversion(format!(
                            "ρ never gains {increment} after t = {} (time change plateaus)",
                            from.t
                        )));
                    }
                    width *= 2.0;
                    hi = from.t + width;
                }
                hi
            }
        };
        quadrature::invert_increasing(gain, |t| self.rho_prime_from(from, t), increment, from.t, hi, INVERSION_TOL)
    }

    /// Reports how far installed closed forms drift from their quadrature
    /// counterparts on `n` evenly spaced times in `[0, horizon]`.
    pub fn closed_form_agreement(&self, horizon: f64, n: usize) -> Result<ClosedFormAgreement> {
        let plain = self.without_closed_forms();
        let mut report = ClosedFormAgreement::default();
        let mut prev_rho = f64::NEG_INFINITY;
        let mut prev = Primitives::ORIGIN;
        if let Some(f) = &self.rho_closed {
            report.rho_zero_at_origin = f(0.0) == 0.0;
        }
        for i in 0..n {
            let t = horizon * i as f64 / (n.max(2) - 1) as f64;
            let closed = self.advance(&Primitives::ORIGIN, t)?;
            let quad = plain.advance(&prev, t)?;
            prev = quad;
            let rel = |x: f64, y: f64| (x - y).abs() / y.abs().max(1.0);
            if self.theta_closed.is_some() {
                report.theta = report.theta.max(rel(closed.theta, quad.theta));
            }
            if self.rho_closed.is_some() {
                report.rho = report.rho.max(rel(closed.rho, quad.rho));
                if closed.rho <= prev_rho {
                    report.rho_increasing = false;
                }
                prev_rho = closed.rho;
            }
            if self.c_closed.is_some() {
                report.c = report.c.max(rel(closed.c, quad.c));
            }
            if let Some(inv) = &self.rho_inv_closed {
                let back = inv(closed.rho);
                report.rho_inv = report.rho_inv.max((back - t).abs() / t.max(1.0));
            }
        }
        Ok(report)
    }
}

/// Largest relative discrepancies between closed forms and quadrature.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ClosedFormAgreement {
    pub theta: f64,
    pub rho: f64,
    pub rho_inv: f64,
    pub c: f64,
    pub rho_increasing: bool,
    pub rho_zero_at_origin: bool,
}

impl Default for ClosedFormAgreement {
    fn default() -> Self {
        Self { theta: 0.0, rho: 0.0, rho_inv: 0.0, c: 0.0, rho_increasing: true, rho_zero_at_origin: true }
    }
}

impl ClosedFormAgreement {
    pub fn worst(&self) -> f64 {
        self.theta.max(self.rho).max(self.rho_inv).max(self.c)
    }
}

/// Horizon step for the sinusoidal preset on `[a, b]`: the value at which
/// both spheroid constraints bind simultaneously.
pub fn sinusoidal_horizon(a: f64, b: f64) -> f64 {
    let reach = 1.0 + a.abs().max(b.abs());
    let inv_sqrt_e = (-0.5f64).exp();
    let root = ((-1.0f64).exp() + 4.0 / 3.0 * (b - a) * reach).sqrt();
    ((root - inv_sqrt_e) / (2.0 * reach)).powi(2)
}

fn nonnegative(t: f64) -> Result<()> {
    if t >= 0.0 {
        Ok(())
    } else {
        Err(Error::domain(format!("time must be non-negative, got {t}")))
    }
}

/// `θ(t) = -∫₀ᵗ α`.
pub fn theta(cs: &CoefficientSet, t: f64) -> Result<f64> {
    nonnegative(t)?;
    Ok(cs.advance(&Primitives::ORIGIN, t)?.theta)
}

/// `ρ(t) = ∫₀ᵗ σ² e^{2θ}`.
pub fn rho(cs: &CoefficientSet, t: f64) -> Result<f64> {
    nonnegative(t)?;
    Ok(cs.advance(&Primitives::ORIGIN, t)?.rho)
}

/// Inverse time change: the `t` with `ρ(t) = u`.
pub fn rho_inv(cs: &CoefficientSet, u: f64) -> Result<f64> {
    if !(u >= 0.0) {
        return Err(Error::domain(format!("ρ⁻¹ needs a non-negative argument, got {u}")));
    }
    cs.rho_increment_inverse(&Primitives::ORIGIN, u, None)
}

/// `c(t) = e^{-θ(t)} ∫₀ᵗ β e^{θ}`.
pub fn c_func(cs: &CoefficientSet, t: f64) -> Result<f64> {
    nonnegative(t)?;
    Ok(cs.advance(&Primitives::ORIGIN, t)?.c)
}

/// Mean of the unstopped diffusion started at `x0` at time zero.
pub fn mean_exact(cs: &CoefficientSet, x0: f64, t: f64) -> Result<f64> {
    nonnegative(t)?;
    let p = cs.advance(&Primitives::ORIGIN, t)?;
    Ok(x0 * (-p.theta).exp() + p.c)
}
