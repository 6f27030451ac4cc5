//! Numerical utilities shared by the coefficient primitives and the
//! scale-parameter formulas: globally adaptive Gauss–Kronrod integration,
//! inversion of increasing functions, and grid-based extremum search.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use thiserror::Error;

/// Accuracy request for [`integrate`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerance {
    pub rel: f64,
    pub abs: f64,
    /// Maximum bisection depth of any subinterval.
    pub max_depth: u32,
}

impl Tolerance {
    pub fn new(rel: f64, abs: f64, max_depth: u32) -> Option<Self> {
        (rel > 0.0 && abs > 0.0 && max_depth >= 1).then_some(Self { rel, abs, max_depth })
    }
}

impl Default for Tolerance {
    fn default() -> Self {
        Self { rel: 1e-10, abs: 1e-12, max_depth: 128 }
    }
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum QuadratureError {
    #[error("quadrature did not converge: estimate {estimate}, achieved error {achieved}")]
    NotConverged { estimate: f64, achieved: f64 },
    #[error("integrand is not finite at {at}")]
    NonFinite { at: f64 },
}

// 15-point Kronrod abscissae and weights, with the embedded 7-point Gauss weights.
const XGK: [f64; 8] = [
    0.991_455_371_120_812_639_206_854_697_526_329,
    0.949_107_912_342_758_524_526_189_684_047_851,
    0.864_864_423_359_769_072_789_712_788_640_926,
    0.741_531_185_599_394_439_863_864_773_280_788,
    0.586_087_235_467_691_130_294_144_845_693_013,
    0.405_845_151_377_397_166_906_606_412_076_961,
    0.207_784_955_007_898_467_600_689_403_773_245,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_224_963_732_008_058_970,
    0.063_092_092_629_978_553_290_700_663_189_204,
    0.104_790_010_322_250_183_839_876_322_541_518,
    0.140_653_259_715_525_918_745_189_590_510_238,
    0.169_004_726_639_267_902_826_583_426_598_550,
    0.190_350_578_064_785_409_913_256_402_421_014,
    0.204_432_940_075_298_892_414_161_999_234_649,
    0.209_482_141_084_727_828_012_999_174_891_714,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_082,
    0.279_705_391_489_276_667_901_467_771_423_780,
    0.381_830_050_505_118_944_950_369_775_488_975,
    0.417_959_183_673_469_387_755_102_040_816_327,
];

fn rescale_error(err: f64, res_abs: f64, res_asc: f64) -> f64 {
    let mut err = err.abs();
    if res_asc != 0.0 && err != 0.0 {
        let scale = (200.0 * err / res_asc).powf(1.5);
        err = if scale < 1.0 { res_asc * scale } else { res_asc };
    }
    if res_abs > f64::MIN_POSITIVE / (50.0 * f64::EPSILON) {
        err = err.max(50.0 * f64::EPSILON * res_abs);
    }
    err
}

/// One Gauss–Kronrod 15 panel: (estimate, error estimate).
fn gk15<F: FnMut(f64) -> f64>(f: &mut F, lo: f64, hi: f64) -> Result<(f64, f64), QuadratureError> {
    let center = 0.5 * (lo + hi);
    let half = 0.5 * (hi - lo);
    let mut eval = |x: f64| {
        let v = f(x);
        if v.is_finite() {
            Ok(v)
        } else {
            Err(QuadratureError::NonFinite { at: x })
        }
    };

    let fc = eval(center)?;
    let mut res_k = fc * WGK[7];
    let mut res_g = fc * WG[3];
    let mut res_abs = res_k.abs();
    let mut fv1 = [0.0; 7];
    let mut fv2 = [0.0; 7];
    for j in 0..7 {
        let dx = half * XGK[j];
        let f1 = eval(center - dx)?;
        let f2 = eval(center + dx)?;
        fv1[j] = f1;
        fv2[j] = f2;
        res_k += WGK[j] * (f1 + f2);
        res_abs += WGK[j] * (f1.abs() + f2.abs());
        if j % 2 == 1 {
            res_g += WG[j / 2] * (f1 + f2);
        }
    }
    let mean = 0.5 * res_k;
    let mut res_asc = WGK[7] * (fc - mean).abs();
    for j in 0..7 {
        res_asc += WGK[j] * ((fv1[j] - mean).abs() + (fv2[j] - mean).abs());
    }
    let err = (res_k - res_g) * half;
    let h = half.abs();
    Ok((res_k * half, rescale_error(err, res_abs * h, res_asc * h)))
}

struct Panel {
    lo: f64,
    hi: f64,
    value: f64,
    error: f64,
    depth: u32,
}

impl PartialEq for Panel {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl Eq for Panel {}
impl PartialOrd for Panel {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Panel {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

/// Integrates `f` over `[lo, hi]` by repeatedly bisecting the panel with the
/// largest error estimate until the summed error meets `tol`.
///
/// Deterministic for fixed inputs. Integrable endpoint singularities are
/// tolerated because the Kronrod nodes never touch the endpoints.
pub fn integrate<F>(mut f: F, lo: f64, hi: f64, tol: Tolerance) -> Result<f64, QuadratureError>
where
    F: FnMut(f64) -> f64,
{
    if lo == hi {
        return Ok(0.0);
    }
    if hi < lo {
        return integrate(f, hi, lo, tol).map(|v| -v);
    }

    let (value, error) = gk15(&mut f, lo, hi)?;
    let mut total = value;
    let mut total_err = error;
    let mut heap = BinaryHeap::new();
    heap.push(Panel { lo, hi, value, error, depth: 0 });

    while total_err > tol.abs.max(tol.rel * total.abs()) {
        let worst = heap.pop().expect("heap holds at least one panel");
        let mid = 0.5 * (worst.lo + worst.hi);
        if worst.depth >= tol.max_depth || mid <= worst.lo || mid >= worst.hi {
            heap.push(worst);
            let estimate: f64 = heap.iter().map(|p| p.value).sum();
            let achieved: f64 = heap.iter().map(|p| p.error).sum();
            return Err(QuadratureError::NotConverged { estimate, achieved });
        }
        let (v1, e1) = gk15(&mut f, worst.lo, mid)?;
        let (v2, e2) = gk15(&mut f, mid, worst.hi)?;
        total += v1 + v2 - worst.value;
        total_err += e1 + e2 - worst.error;
        let depth = worst.depth + 1;
        heap.push(Panel { lo: worst.lo, hi: mid, value: v1, error: e1, depth });
        heap.push(Panel { lo: mid, hi: worst.hi, value: v2, error: e2, depth });
    }

    // Re-sum to shed the drift of the running total.
    let mut panels = heap.into_vec();
    panels.sort_by(|p, q| p.lo.total_cmp(&q.lo));
    Ok(panels.iter().map(|p| p.value).sum())
}

/// Solves `f(x) = target` for increasing `f` on the bracket `[lo, hi]`
/// with Newton steps safeguarded by bisection.
///
/// `fprime` must be the derivative of `f` (only its sign and rough size
/// matter for convergence). Stops when the bracket, or the last step, is
/// below `xtol * max(1, |x|)`.
pub fn invert_increasing<F, D, E>(
    mut f: F,
    mut fprime: D,
    target: f64,
    mut lo: f64,
    mut hi: f64,
    xtol: f64,
) -> Result<f64, E>
where
    F: FnMut(f64) -> Result<f64, E>,
    D: FnMut(f64) -> Result<f64, E>,
{
    let mut x = 0.5 * (lo + hi);
    for _ in 0..400 {
        let g = f(x)? - target;
        if g == 0.0 {
            return Ok(x);
        }
        if g < 0.0 {
            lo = x;
        } else {
            hi = x;
        }
        let scale = xtol * x.abs().max(1.0);
        if hi - lo <= scale {
            return Ok(0.5 * (lo + hi));
        }
        let slope = fprime(x)?;
        let newton = x - g / slope;
        let next = if slope > 0.0 && newton > lo && newton < hi { newton } else { 0.5 * (lo + hi) };
        if (next - x).abs() <= scale {
            return Ok(next);
        }
        x = next;
    }
    Ok(0.5 * (lo + hi))
}

const SUP_GRID: usize = 1024;

fn golden_max<F: FnMut(f64) -> f64>(g: &mut F, mut lo: f64, mut hi: f64) -> f64 {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = hi - inv_phi * (hi - lo);
    let mut x2 = lo + inv_phi * (hi - lo);
    let mut g1 = g(x1);
    let mut g2 = g(x2);
    let mut best = g1.max(g2);
    for _ in 0..80 {
        if hi - lo <= 1e-14 * hi.abs().max(1.0) {
            break;
        }
        if g1 < g2 {
            lo = x1;
            x1 = x2;
            g1 = g2;
            x2 = lo + inv_phi * (hi - lo);
            g2 = g(x2);
        } else {
            hi = x2;
            x2 = x1;
            g2 = g1;
            x1 = hi - inv_phi * (hi - lo);
            g1 = g(x1);
        }
        best = best.max(g1).max(g2);
    }
    best
}

fn grid_max<F: FnMut(f64) -> f64>(g: &mut F, lo: f64, hi: f64) -> f64 {
    if lo == hi {
        return g(lo);
    }
    let step = (hi - lo) / (SUP_GRID - 1) as f64;
    let node = |i: usize| if i == SUP_GRID - 1 { hi } else { lo + step * i as f64 };
    let (mut arg, mut best) = (0, f64::NEG_INFINITY);
    for i in 0..SUP_GRID {
        let v = g(node(i));
        if v > best {
            best = v;
            arg = i;
        }
    }
    let left = node(arg.saturating_sub(1));
    let right = node((arg + 1).min(SUP_GRID - 1));
    best.max(golden_max(g, left, right))
}

/// Upper estimate of `sup |f|` on `[lo, hi]`: a 1024-point grid followed by
/// golden-section refinement around the grid maximiser. Never below the
/// grid maximum.
pub fn sup_abs_on<F: FnMut(f64) -> f64>(mut f: F, lo: f64, hi: f64) -> f64 {
    grid_max(&mut |t| f(t).abs(), lo, hi)
}

/// Grid-and-refine estimate of `inf f` on `[lo, hi]`.
pub fn inf_on<F: FnMut(f64) -> f64>(mut f: F, lo: f64, hi: f64) -> f64 {
    -grid_max(&mut |t| -f(t), lo, hi)
}

/// Grid-and-refine estimate of `sup f` on `[lo, hi]`.
pub fn sup_on<F: FnMut(f64) -> f64>(f: F, lo: f64, hi: f64) -> f64 {
    let mut f = f;
    grid_max(&mut f, lo, hi)
}
