//! Growth diffusions `dY = (α̃(t) Y + β̃(t) Y log Y) dt + σ̃(t) Y dW`.
//!
//! `Y = e^X` for the linear diffusion with `α = β̃`, `β = α̃ - σ̃²/2`,
//! `σ = σ̃`, so exits of `Y` from `[a, b]` are exits of `X` from
//! `[log a, log b]`.

use std::sync::Arc;

use rand::Rng;

use crate::coeffs::{CoefficientSet, Primitives, ScalarFn};
use crate::error::{Error, Result};
use crate::quadrature;
use crate::woms::{ExitProblem, ExitSample, WalkSkeleton};

#[derive(Clone)]
pub struct GCoefficientSet {
    alpha_g: ScalarFn,
    beta_g: ScalarFn,
    sigma_g: ScalarFn,
    sigma_floor: f64,
    constant: Option<(f64, f64, f64)>,
}

impl std::fmt::Debug for GCoefficientSet {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("GCoefficientSet")
            .field("sigma_floor", &self.sigma_floor)
            .field("constant", &self.constant)
            .finish()
    }
}

impl GCoefficientSet {
    pub fn new<A, B, S>(alpha_g: A, beta_g: B, sigma_g: S, sigma_floor: f64) -> Result<Self>
    where
        A: Fn(f64) -> f64 + Send + Sync + 'static,
        B: Fn(f64) -> f64 + Send + Sync + 'static,
        S: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        if !(sigma_floor > 0.0 && sigma_floor.is_finite()) {
            return Err(Error::Config(format!("sigma_floor must be positive, got {sigma_floor}")));
        }
        Ok(Self {
            alpha_g: Arc::new(alpha_g),
            beta_g: Arc::new(beta_g),
            sigma_g: Arc::new(sigma_g),
            sigma_floor,
            constant: None,
        })
    }

    /// Constant growth coefficients; the linear image then has closed forms.
    pub fn constant(alpha_g: f64, beta_g: f64, sigma_g: f64) -> Result<Self> {
        if !(sigma_g > 0.0) {
            return Err(Error::Config(format!("sigma_g must be positive, got {sigma_g}")));
        }
        let mut g = Self::new(move |_| alpha_g, move |_| beta_g, move |_| sigma_g, sigma_g)?;
        g.constant = Some((alpha_g, beta_g, sigma_g));
        Ok(g)
    }

    /// Image of a linear coefficient set: `α̃ = β + σ²/2`, `β̃ = α`, `σ̃ = σ`.
    pub fn from_lclass(cs: &CoefficientSet) -> Self {
        let (a, b, s) = (cs.clone(), cs.clone(), cs.clone());
        Self {
            alpha_g: Arc::new(move |t| {
                let sg = a.sigma_raw(t);
                a.beta(t) + 0.5 * sg * sg
            }),
            beta_g: Arc::new(move |t| b.alpha(t)),
            sigma_g: Arc::new(move |t| s.sigma_raw(t)),
            sigma_floor: cs.sigma_floor(),
            constant: None,
        }
    }

    pub fn alpha_g(&self, t: f64) -> f64 {
        (self.alpha_g)(t)
    }
    pub fn beta_g(&self, t: f64) -> f64 {
        (self.beta_g)(t)
    }
    pub fn sigma_g(&self, t: f64) -> f64 {
        (self.sigma_g)(t)
    }
    pub fn sigma_floor(&self) -> f64 {
        self.sigma_floor
    }

    /// Linear coefficients of `log Y`: `α = β̃`, `β = α̃ - σ̃²/2`, `σ = σ̃`.
    pub fn to_lclass(&self) -> CoefficientSet {
        if let Some((ag, bg, sg)) = self.constant {
            return CoefficientSet::constant(bg, ag - 0.5 * sg * sg, sg)
                .expect("validated at construction")
                .named("growth");
        }
        let (a, b, s) = (self.alpha_g.clone(), self.beta_g.clone(), self.sigma_g.clone());
        let sigma = s.clone();
        CoefficientSet::new(
            move |t| b(t),
            move |t| {
                let sg = s(t);
                a(t) - 0.5 * sg * sg
            },
            move |t| sigma(t),
            self.sigma_floor,
        )
        .expect("floor validated at construction")
        .named("growth")
    }

    fn beta_integral(&self, t: f64, tol: quadrature::Tolerance) -> Result<f64> {
        Ok(quadrature::integrate(|s| (self.beta_g)(s), 0.0, t, tol)?)
    }

    /// Time change `γ(t) = ∫₀ᵗ σ̃² e^{-2∫₀ˢ β̃}` of the explicit solution.
    pub fn gamma_g(&self, t: f64) -> Result<f64> {
        let tol = quadrature::Tolerance::default();
        let mut failure = None;
        let v = quadrature::integrate(
            |s| match self.beta_integral(s, tol) {
                Ok(ib) => {
                    let sg = (self.sigma_g)(s);
                    sg * sg * (-2.0 * ib).exp()
                }
                Err(e) => {
                    failure = Some(e);
                    f64::NAN
                }
            },
            0.0,
            t,
            tol,
        );
        if let Some(e) = failure {
            return Err(e);
        }
        Ok(v?)
    }

    /// `C(t) = exp(e^{∫β̃} ∫₀ᵗ (α̃ - σ̃²/2) e^{-∫₀ˢ β̃} ds)`.
    pub fn c_g(&self, t: f64) -> Result<f64> {
        let tol = quadrature::Tolerance::default();
        let mut failure = None;
        let inner = quadrature::integrate(
            |s| match self.beta_integral(s, tol) {
                Ok(ib) => {
                    let sg = (self.sigma_g)(s);
                    ((self.alpha_g)(s) - 0.5 * sg * sg) * (-ib).exp()
                }
                Err(e) => {
                    failure = Some(e);
                    f64::NAN
                }
            },
            0.0,
            t,
            tol,
        );
        if let Some(e) = failure {
            return Err(e);
        }
        Ok((self.beta_integral(t, tol)?.exp() * inner?).exp())
    }
}

/// `G(t, w) = C(t) exp(σ̃(t) w / √γ'(t))`, the map taking the time-changed
/// Brownian value `W_{γ(t)} = w` to the growth process started at 1.
pub fn g_solution(g: &GCoefficientSet, t: f64, w: f64) -> Result<f64> {
    if !(t >= 0.0) {
        return Err(Error::domain(format!("time must be non-negative, got {t}")));
    }
    if t == 0.0 {
        return Ok(w.exp());
    }
    let tol = quadrature::Tolerance::default();
    // σ̃/√γ' = e^{∫₀ᵗ β̃}.
    let slope = g.beta_integral(t, tol)?.exp();
    Ok(g.c_g(t)? * (slope * w).exp())
}

/// Exit problem for a growth diffusion on `[a, b] ⊂ (0, ∞)`.
#[derive(Debug, Clone)]
pub struct GExitProblem {
    linear: ExitProblem,
    eps_g: f64,
}

impl GExitProblem {
    /// Builds the log-space problem on `[log a, log b]` from `log x0`, with
    /// shell `ε_log = ε_g / b`.
    pub fn new(g: &GCoefficientSet, a: f64, b: f64, x0: f64, eps_g: f64) -> Result<Self> {
        if !(a > 0.0) {
            return Err(Error::domain(format!("growth diffusions live on (0, ∞); lower endpoint {a} is not positive")));
        }
        if !(a < x0 && x0 < b) {
            return Err(Error::domain(format!("start {x0} must lie strictly inside ({a}, {b})")));
        }
        let linear = ExitProblem::new(g.to_lclass(), a.ln(), b.ln(), x0.ln())?.with_eps(eps_g / b)?;
        Ok(Self { linear, eps_g })
    }

    pub fn with_gamma(self, gamma_shell: f64) -> Result<Self> {
        Ok(Self { linear: self.linear.with_gamma(gamma_shell)?, ..self })
    }

    pub fn with_m(self, m: f64) -> Result<Self> {
        Ok(Self { linear: self.linear.with_m(m)?, ..self })
    }

    pub fn with_t0(self, t0: f64) -> Result<Self> {
        Ok(Self { linear: self.linear.with_t0(t0)?, ..self })
    }

    pub fn with_max_steps(self, n: u64) -> Self {
        Self { linear: self.linear.with_max_steps(n), ..self }
    }

    /// The underlying log-space linear problem.
    pub fn linear(&self) -> &ExitProblem {
        &self.linear
    }

    pub fn eps_g(&self) -> f64 {
        self.eps_g
    }

    pub fn eps_log(&self) -> f64 {
        self.linear.eps()
    }

    fn lift(s: ExitSample) -> ExitSample {
        ExitSample { position: s.position.exp(), ..s }
    }

    pub fn run<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<(ExitSample, WalkSkeleton)> {
        let (s, mut sk) = self.linear.run(rng)?;
        for node in &mut sk.nodes {
            node.1 = node.1.exp();
        }
        Ok((Self::lift(s), sk))
    }

    pub fn run_sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<ExitSample> {
        self.linear.run_sample(rng).map(Self::lift)
    }

    pub fn run_capped_sample<R: Rng + ?Sized>(&self, t_max: f64, rng: &mut R) -> Result<ExitSample> {
        self.linear.run_capped_sample(t_max, rng).map(Self::lift)
    }
}

/// One growth-diffusion exit: the log-space walk's time, exponentiated position.
#[allow(clippy::too_many_arguments)]
pub fn run_g<R: Rng + ?Sized>(
    g: &GCoefficientSet,
    a: f64,
    b: f64,
    x0: f64,
    eps_g: f64,
    gamma_shell: f64,
    m: f64,
    rng: &mut R,
) -> Result<ExitSample> {
    GExitProblem::new(g, a, b, x0, eps_g)?.with_gamma(gamma_shell)?.with_m(m)?.run_sample(rng)
}

/// `log G(t, w)` through the linear route: `e^{-θ(t)} w + c(t)` of the
/// image coefficients.
pub fn log_g_via_lclass(g: &GCoefficientSet, t: f64, w: f64) -> Result<f64> {
    let cs = g.to_lclass();
    let p = cs.advance(&Primitives::ORIGIN, t)?;
    Ok((-p.theta).exp() * w + p.c)
}
