//! Walk on moving spheroids for linear diffusions.
//!
//! From a node `(T, X)` the walk picks the largest spheroid scale `d` whose
//! image under the diffusion's Brownian representation stays inside the
//! shrunken interval `[a + γ(X-a), b - γ(b-X)]` for at most `m` units of
//! time, samples the exact Brownian exit from that spheroid, and maps it back
//! through the time change `ρ`. The walk stops once the position enters the
//! `ε`-shell `[a, a+ε] ∪ [b-ε, b]`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::coeffs::{CoefficientSet, Primitives};
use crate::error::{Error, Result};
use crate::quadrature::{self, inf_on, sup_abs_on};
use crate::spheroid::{BrownianExit, Side, Spheroid};

pub const DEFAULT_EPS: f64 = 1e-2;
pub const DEFAULT_GAMMA: f64 = 1e-4;
pub const DEFAULT_M: f64 = 1.0;
pub const DEFAULT_MAX_STEPS: u64 = 10_000_000;

/// Relative shrink applied to every scale so the inverse time change stays
/// inside the spheroid support under rounding.
const SCALE_SHRINK: f64 = 1.0 - 1e-12;

#[derive(Debug, Clone)]
pub struct ExitProblem {
    cs: CoefficientSet,
    a: f64,
    b: f64,
    x0: f64,
    t0: f64,
    eps: f64,
    gamma_shell: f64,
    m: f64,
    max_steps: u64,
}

/// One node of the walk together with the primitives at its time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WalkState {
    pub t: f64,
    pub x: f64,
    prims: Primitives,
}

impl WalkState {
    pub fn primitives(&self) -> &Primitives {
        &self.prims
    }
}

/// The chain `(T_n, X_n)` of successive spheroid exits and the scale used
/// for each step (`scales[n]` produced node `n + 1`).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct WalkSkeleton {
    pub nodes: Vec<(f64, f64)>,
    pub scales: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExitSample {
    pub time: f64,
    pub position: f64,
    /// Boundary whose shell was reached; `None` for censored walks.
    pub side: Option<Side>,
    pub steps: u64,
    pub censored: bool,
}

/// Finite-horizon check of the coefficient bounds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub horizon: f64,
    pub min_sigma: f64,
    pub max_abs_alpha: f64,
    pub max_abs_beta: f64,
    pub sigma_floor: f64,
    pub warnings: Vec<String>,
}

impl ExitProblem {
    /// Exit problem on `[a, b]` from `x0` at time zero with the default shell
    /// width, shrink factor and horizon step (the preset's preferred `m`
    /// when it has one).
    pub fn new(cs: CoefficientSet, a: f64, b: f64, x0: f64) -> Result<Self> {
        let m = cs.preferred_m(a, b).unwrap_or(DEFAULT_M);
        let p = Self {
            cs,
            a,
            b,
            x0,
            t0: 0.0,
            eps: DEFAULT_EPS,
            gamma_shell: DEFAULT_GAMMA,
            m,
            max_steps: DEFAULT_MAX_STEPS,
        };
        p.check()?;
        Ok(p)
    }

    fn check(&self) -> Result<()> {
        let Self { a, b, x0, t0, eps, gamma_shell, m, .. } = *self;
        let bad = |msg: String| Err(Error::Config(msg));
        if !(a.is_finite() && b.is_finite() && a < b) {
            return bad(format!("interval needs finite a < b, got [{a}, {b}]"));
        }
        if !(a <= x0 && x0 <= b) {
            return bad(format!("start {x0} outside [{a}, {b}]"));
        }
        if !(t0 >= 0.0 && t0.is_finite()) {
            return bad(format!("start time must be non-negative, got {t0}"));
        }
        if !(eps > 0.0 && a + eps < b - eps) {
            return bad(format!("shell width {eps} must be positive and below half the interval"));
        }
        if !(gamma_shell > 0.0 && gamma_shell < 1.0) {
            return bad(format!("shrink factor must lie in (0, 1), got {gamma_shell}"));
        }
        if !(m > 0.0 && m.is_finite()) {
            return bad(format!("horizon step m must be positive, got {m}"));
        }
        Ok(())
    }

    fn revised(mut self, edit: impl FnOnce(&mut Self)) -> Result<Self> {
        edit(&mut self);
        self.check()?;
        Ok(self)
    }

    pub fn with_t0(self, t0: f64) -> Result<Self> {
        self.revised(|p| p.t0 = t0)
    }

    pub fn with_x0(self, x0: f64) -> Result<Self> {
        self.revised(|p| p.x0 = x0)
    }

    pub fn with_eps(self, eps: f64) -> Result<Self> {
        self.revised(|p| p.eps = eps)
    }

    pub fn with_gamma(self, gamma_shell: f64) -> Result<Self> {
        self.revised(|p| p.gamma_shell = gamma_shell)
    }

    pub fn with_m(self, m: f64) -> Result<Self> {
        self.revised(|p| p.m = m)
    }

    pub fn with_max_steps(self, max_steps: u64) -> Self {
        Self { max_steps, ..self }
    }

    pub fn coefficients(&self) -> &CoefficientSet {
        &self.cs
    }
    pub fn a(&self) -> f64 {
        self.a
    }
    pub fn b(&self) -> f64 {
        self.b
    }
    pub fn x0(&self) -> f64 {
        self.x0
    }
    pub fn t0(&self) -> f64 {
        self.t0
    }
    pub fn eps(&self) -> f64 {
        self.eps
    }
    pub fn gamma_shell(&self) -> f64 {
        self.gamma_shell
    }
    pub fn m(&self) -> f64 {
        self.m
    }
    pub fn max_steps(&self) -> u64 {
        self.max_steps
    }

    /// `(a + γ(x-a), b - γ(b-x))`.
    pub fn shrunken_bounds(&self, x: f64) -> (f64, f64) {
        (self.a + self.gamma_shell * (x - self.a), self.b - self.gamma_shell * (self.b - x))
    }

    fn in_shell(&self, x: f64) -> Option<Side> {
        if x >= self.b - self.eps {
            Some(Side::Upper)
        } else if x <= self.a + self.eps {
            Some(Side::Lower)
        } else {
            None
        }
    }

    pub fn initial_state(&self) -> Result<WalkState> {
        let prims = self.cs.advance(&Primitives::ORIGIN, self.t0)?;
        Ok(WalkState { t: self.t0, x: self.x0, prims })
    }

    /// State at an arbitrary node `(t, x)`.
    pub fn state_at(&self, t: f64, x: f64) -> Result<WalkState> {
        let prims = self.cs.advance(&Primitives::ORIGIN, t)?;
        Ok(WalkState { t, x, prims })
    }

    /// Scale bound `Δ_m` for a spheroid started at the anchor's time in `x0`:
    /// `e^{-θ(t₀)} e^{∫|α|} (e^{-1/2} + √(∫ (β + x₀α)²/σ²))`, both integrals
    /// over `[t₀, t₀+m]`. A preset's closed-form bound takes precedence.
    pub fn delta_m_at(&self, anchor: &Primitives, x0: f64) -> Result<f64> {
        let t0 = anchor.t;
        if let Some(bound) = self.cs.delta_bound() {
            let args = crate::coeffs::DeltaArgs { a: self.a, b: self.b, m: self.m, t0, x0 };
            return Ok(bound(&args));
        }
        let tol = self.cs.tolerance();
        let t1 = t0 + self.m;
        let abs_alpha = quadrature::integrate(|s| self.cs.alpha(s).abs(), t0, t1, tol)?;
        let mut floor_hit = None;
        let ratio = quadrature::integrate(
            |s| {
                let drift = self.cs.beta(s) + x0 * self.cs.alpha(s);
                match self.cs.sigma(s) {
                    Ok(sg) => drift * drift / (sg * sg),
                    Err(e) => {
                        floor_hit = Some(e);
                        f64::NAN
                    }
                }
            },
            t0,
            t1,
            tol,
        );
        if let Some(e) = floor_hit {
            return Err(e);
        }
        let ratio = ratio?;
        Ok((-anchor.theta).exp() * abs_alpha.exp() * ((-0.5f64).exp() + ratio.sqrt()))
    }

    pub fn delta_m(&self, t0: f64, x0: f64) -> Result<f64> {
        let anchor = self.cs.advance(&Primitives::ORIGIN, t0)?;
        self.delta_m_at(&anchor, x0)
    }

    /// Largest admissible spheroid scale at the anchor's time and position
    /// `x`: bounded by the room to the nearer shrunken endpoint divided by
    /// `Δ_m`, and by `√(ρ(t+m) - ρ(t))`.
    pub fn spheroid_scale_at(&self, anchor: &Primitives, x: f64) -> Result<f64> {
        if !(self.a < x && x < self.b) {
            return Err(Error::domain(format!("position {x} is not inside ({}, {})", self.a, self.b)));
        }
        let (ag, bg) = self.shrunken_bounds(x);
        let room = if self.b - x <= x - self.a { bg - x } else { x - ag };
        let delta = self.delta_m_at(anchor, x)?;
        let horizon = self.cs.advance(anchor, anchor.t + self.m)?.rho - anchor.rho;
        let d = (room / delta).min(horizon.sqrt()) * SCALE_SHRINK;
        if d > 0.0 && d.is_finite() {
            Ok(d)
        } else {
            Err(Error::domain(format!("degenerate spheroid scale {d} at t = {}, x = {x}", anchor.t)))
        }
    }

    pub fn spheroid_scale(&self, t0: f64, x0: f64) -> Result<f64> {
        let anchor = self.cs.advance(&Primitives::ORIGIN, t0)?;
        self.spheroid_scale_at(&anchor, x0)
    }

    /// Maps a Brownian spheroid value `w` (at Brownian time increment since
    /// the anchor) into diffusion space at the time of `now`.
    fn transport(anchor: &Primitives, now: &Primitives, x0: f64, w: f64) -> f64 {
        let scale = (-now.theta).exp();
        let growth = (anchor.theta - now.theta).exp();
        (scale * w + now.c) + (x0 - anchor.c) * growth
    }

    /// Time support of the generalised spheroid of scale `d` started at `t0`,
    /// i.e. `ρ⁻¹(d² + ρ(t0)) - t0`.
    pub fn spheroid_support(&self, t0: f64, d: f64) -> Result<f64> {
        let anchor = self.cs.advance(&Primitives::ORIGIN, t0)?;
        Ok(self.cs.rho_increment_inverse(&anchor, d * d, Some(t0 + self.m))? - t0)
    }

    /// Boundaries `(ψ₋ᴸ, ψ₊ᴸ)` of the spheroid of scale `d` started at
    /// `(t0, x0)`, at time `t` after its start.
    pub fn psi_l(&self, t: f64, t0: f64, x0: f64, d: f64) -> Result<(f64, f64)> {
        let sph = Spheroid::new(d)?;
        if t == 0.0 {
            return Ok((x0, x0));
        }
        let support = self.spheroid_support(t0, d)?;
        if !(t > 0.0 && t <= support * (1.0 + 1e-9) + 1e-15) {
            return Err(Error::domain(format!("t = {t} beyond the spheroid support [0, {support}]")));
        }
        let anchor = self.cs.advance(&Primitives::ORIGIN, t0)?;
        let now = self.cs.advance(&anchor, t0 + t)?;
        let u = (now.rho - anchor.rho).clamp(0.0, sph.lifetime());
        let up = sph.upper_unchecked(u);
        Ok((Self::transport(&anchor, &now, x0, -up), Self::transport(&anchor, &now, x0, up)))
    }

    /// Advances one node given the scale `d` already chosen for it and a
    /// Brownian exit from the spheroid of that scale.
    pub fn step_with_exit(&self, state: &WalkState, d: f64, exit: BrownianExit) -> Result<WalkState> {
        let sph = Spheroid::new(d)?;
        let tau = exit.tau.min(sph.lifetime());
        let mut t_next = self.cs.rho_increment_inverse(&state.prims, tau, Some(state.t + self.m))?;
        if t_next <= state.t {
            t_next = state.t.next_up();
        }
        let now = self.cs.advance(&state.prims, t_next)?;
        let up = sph.upper_unchecked(tau);
        let w = match exit.side {
            Side::Upper => up,
            Side::Lower => -up,
        };
        let x = Self::transport(&state.prims, &now, state.x, w);
        Ok(WalkState { t: t_next, x, prims: now })
    }

    /// One step of the walk: returns the next node and the scale used.
    pub fn step<R: Rng + ?Sized>(&self, state: &WalkState, rng: &mut R) -> Result<(WalkState, f64)> {
        let d = self.spheroid_scale_at(&state.prims, state.x)?;
        let exit = Spheroid::new(d)?.sample_exit(rng);
        Ok((self.step_with_exit(state, d, exit)?, d))
    }

    fn walk<R: Rng + ?Sized>(
        &self,
        rng: &mut R,
        t_max: Option<f64>,
        mut skeleton: Option<&mut WalkSkeleton>,
    ) -> Result<ExitSample> {
        let mut state = self.initial_state()?;
        if let Some(sk) = skeleton.as_deref_mut() {
            sk.nodes.push((state.t, state.x));
        }
        let mut steps = 0u64;
        loop {
            if let Some(side) = self.in_shell(state.x) {
                return Ok(ExitSample { time: state.t, position: state.x, side: Some(side), steps, censored: false });
            }
            if steps >= self.max_steps {
                return Err(Error::StepLimit(self.max_steps));
            }
            let (next, d) = self.step(&state, rng)?;
            steps += 1;
            if let Some(sk) = skeleton.as_deref_mut() {
                sk.nodes.push((next.t, next.x));
                sk.scales.push(d);
            }
            if let Some(t_max) = t_max {
                if next.t >= t_max {
                    return Ok(ExitSample { time: t_max, position: state.x, side: None, steps, censored: true });
                }
            }
            state = next;
        }
    }

    /// Runs the walk until the position enters the `ε`-shell.
    pub fn run<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<(ExitSample, WalkSkeleton)> {
        let mut skeleton = WalkSkeleton::default();
        let sample = self.walk(rng, None, Some(&mut skeleton))?;
        Ok((sample, skeleton))
    }

    /// As [`ExitProblem::run`] without recording the skeleton.
    pub fn run_sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<ExitSample> {
        self.walk(rng, None, None)
    }

    /// Walk observed on `[t0, t_max]`: the first node at or after `t_max`
    /// censors the run, which then reports `t_max` and the position of the
    /// last node before it.
    pub fn run_capped<R: Rng + ?Sized>(&self, t_max: f64, rng: &mut R) -> Result<(ExitSample, WalkSkeleton)> {
        self.check_cap(t_max)?;
        let mut skeleton = WalkSkeleton::default();
        let sample = self.walk(rng, Some(t_max), Some(&mut skeleton))?;
        Ok((sample, skeleton))
    }

    pub fn run_capped_sample<R: Rng + ?Sized>(&self, t_max: f64, rng: &mut R) -> Result<ExitSample> {
        self.check_cap(t_max)?;
        self.walk(rng, Some(t_max), None)
    }

    fn check_cap(&self, t_max: f64) -> Result<()> {
        if t_max > self.t0 {
            Ok(())
        } else {
            Err(Error::Config(format!("t_max = {t_max} must exceed the start time {}", self.t0)))
        }
    }

    /// Extremes of the coefficients on `[0, horizon]`.
    pub fn validate(&self, horizon: f64) -> Diagnostics {
        let cs = &self.cs;
        let min_sigma = inf_on(|t| cs.sigma_raw(t), 0.0, horizon);
        let max_abs_alpha = sup_abs_on(|t| cs.alpha(t), 0.0, horizon);
        let max_abs_beta = sup_abs_on(|t| cs.beta(t), 0.0, horizon);
        let mut warnings = Vec::new();
        if !(min_sigma >= cs.sigma_floor()) {
            warnings.push(format!(
                "diffusion coefficient reaches {min_sigma} on [0, {horizon}], below the floor {}",
                cs.sigma_floor()
            ));
        }
        if !(max_abs_alpha.is_finite() && max_abs_beta.is_finite()) {
            warnings.push(format!("drift coefficients are not finite on [0, {horizon}]"));
        }
        Diagnostics { horizon, min_sigma, max_abs_alpha, max_abs_beta, sigma_floor: cs.sigma_floor(), warnings }
    }
}
