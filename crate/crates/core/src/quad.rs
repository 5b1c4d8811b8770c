//! Globally adaptive Gauss–Kronrod (10/21 point) quadrature.
//!
//! Each interval between break points is first mapped onto `[0, 1]` by a
//! smoothstep substitution that clusters nodes at both ends, so integrable
//! endpoint singularities (e.g. `ln u`, `(1-u)^{-p}` with `p < 1`) need only
//! a few subdivisions. The integrand is never evaluated at an endpoint.

use alloc::collections::BinaryHeap;
use alloc::vec::Vec;
use core::cmp::Ordering;

use crate::error::{Error, Result};

const XGK: [f64; 11] = [
    0.995_657_163_025_808_080_735_527_280_689_003,
    0.973_906_528_517_171_720_077_964_012_084_452,
    0.930_157_491_355_708_226_001_207_180_059_508,
    0.865_063_366_688_984_510_732_096_688_423_493,
    0.780_817_726_586_416_897_063_717_578_345_042,
    0.679_409_568_299_024_406_234_327_365_114_874,
    0.562_757_134_668_604_683_339_000_099_272_694,
    0.433_395_394_129_247_190_799_265_943_165_784,
    0.294_392_862_701_460_198_131_126_603_103_866,
    0.148_874_338_981_631_210_884_826_001_129_720,
    0.0,
];

const WGK: [f64; 11] = [
    0.011_694_638_867_371_874_278_064_396_062_192,
    0.032_558_162_307_964_727_478_818_972_459_390,
    0.054_755_896_574_351_996_031_381_300_244_580,
    0.075_039_674_810_919_952_767_043_140_916_190,
    0.093_125_454_583_697_605_535_065_465_083_366,
    0.109_387_158_802_297_641_899_210_590_325_805,
    0.123_491_976_262_065_851_077_600_525_535_386,
    0.134_709_217_311_473_325_928_054_001_771_707,
    0.142_775_938_577_060_080_797_094_273_138_717,
    0.147_739_104_901_338_491_374_841_515_972_068,
    0.149_445_554_002_916_905_664_936_468_389_821,
];

// Gauss weights for the odd-indexed Kronrod nodes.
const WG: [f64; 5] = [
    0.066_671_344_308_688_137_593_568_809_893_332,
    0.149_451_349_150_580_593_145_776_339_657_697,
    0.219_086_362_515_982_043_995_534_934_228_163,
    0.269_266_719_309_996_355_091_226_921_569_469,
    0.295_524_224_714_752_870_173_892_994_651_338,
];

/// Tolerances for [`integrate`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerance {
    pub rel: f64,
    pub abs: f64,
    pub max_subdivisions: usize,
}

impl Tolerance {
    /// One-dimensional default: relative 1e-10, absolute floor 1e-14.
    pub const ONE_D: Tolerance = Tolerance {
        rel: 1e-10,
        abs: 1e-14,
        max_subdivisions: 2000,
    };

    /// Outer/inner tolerance used by the nested two-dimensional rule.
    pub const TWO_D: Tolerance = Tolerance {
        rel: 1e-8,
        abs: 1e-14,
        max_subdivisions: 2000,
    };

    pub fn with_rel(self, rel: f64) -> Self {
        Tolerance { rel, ..self }
    }
}

impl Default for Tolerance {
    fn default() -> Self {
        Tolerance::ONE_D
    }
}

/// Result of an adaptive integration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Integral {
    pub value: f64,
    pub abs_error: f64,
    pub evaluations: usize,
    /// False when some subintervals became too narrow to bisect and the
    /// requested tolerance was not met (the result is roundoff-limited).
    pub converged: bool,
}

// Requested tolerance can be missed by roundoff-limited intervals; anything
// worse than this is reported as a failure.
const ACCEPTABLE_REL: f64 = 1e-6;

#[derive(Debug, Clone, Copy)]
struct Segment {
    // index into the list of pieces between breaks
    piece: usize,
    // bounds in the transformed variable t ∈ [0, 1]
    a: f64,
    b: f64,
    value: f64,
    error: f64,
    // ∫|f| estimate
    l1: f64,
}

impl PartialEq for Segment {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl Eq for Segment {}
impl PartialOrd for Segment {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Segment {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

fn rescale_error(err: f64, res_abs: f64, res_asc: f64) -> f64 {
    let mut err = libm::fabs(err);
    if res_asc != 0.0 && err != 0.0 {
        let scale = libm::pow(200.0 * err / res_asc, 1.5);
        err = if scale < 1.0 { res_asc * scale } else { res_asc };
    }
    if res_abs > f64::MIN_POSITIVE / (50.0 * f64::EPSILON) {
        let floor = 50.0 * f64::EPSILON * res_abs;
        if floor > err {
            err = floor;
        }
    }
    err
}

// Smallest width worth subdividing, relative to the endpoint magnitude.
const MIN_WIDTH: f64 = 256.0 * f64::EPSILON;

fn too_narrow(a: f64, b: f64) -> bool {
    b - a <= MIN_WIDTH * libm::fmax(libm::fabs(a), libm::fabs(b)).max(f64::MIN_POSITIVE)
}

/// `φ(t) = t³(10 - 15t + 6t²)`, a smoothstep with `φ'` vanishing to second
/// order at both ends.
fn smoothstep(t: f64) -> f64 {
    t * t * t * (10.0 + t * (-15.0 + 6.0 * t))
}

fn smoothstep_deriv(t: f64) -> f64 {
    let s = t * (1.0 - t);
    30.0 * s * s
}

/// An interval `[p, q]` integrated in the variable `t` with
/// `x = p + (q-p) φ(t)`. The substitution clusters nodes at both ends, which
/// turns integrable algebraic or logarithmic endpoint singularities into
/// smooth integrands.
#[derive(Debug, Clone, Copy)]
struct Piece {
    p: f64,
    q: f64,
}

impl Piece {
    /// `x(t)`, computed from the nearer end so that points next to `q`
    /// keep full resolution, and kept strictly inside `(p, q)`.
    fn point(&self, t: f64) -> f64 {
        let w = self.q - self.p;
        let x = if t <= 0.5 {
            self.p + w * smoothstep(t)
        } else {
            self.q - w * smoothstep(1.0 - t)
        };
        if x <= self.p {
            self.p.next_up().min(self.q)
        } else if x >= self.q {
            self.q.next_down().max(self.p)
        } else {
            x
        }
    }

    fn weight(&self, t: f64) -> f64 {
        (self.q - self.p) * smoothstep_deriv(t)
    }
}

fn kronrod<F>(f: &mut F, pieces: &[Piece], piece: usize, a: f64, b: f64) -> Result<Segment>
where
    F: FnMut(f64) -> Result<f64>,
{
    let pc = pieces[piece];
    let mut eval = |t: f64| -> Result<f64> {
        let x = pc.point(t);
        let y = f(x)?;
        if y.is_finite() {
            Ok(y * pc.weight(t))
        } else {
            Err(Error::NonFiniteIntegrand { x })
        }
    };

    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = eval(center)?;
    let mut res_k = fc * WGK[10];
    let mut res_g = 0.0;
    let mut res_abs = libm::fabs(res_k);
    let mut fv1 = [0.0; 10];
    let mut fv2 = [0.0; 10];
    for j in 0..10 {
        let dx = half * XGK[j];
        let f1 = eval(center - dx)?;
        let f2 = eval(center + dx)?;
        fv1[j] = f1;
        fv2[j] = f2;
        res_k += WGK[j] * (f1 + f2);
        res_abs += WGK[j] * (libm::fabs(f1) + libm::fabs(f2));
        if j % 2 == 1 {
            res_g += WG[j / 2] * (f1 + f2);
        }
    }
    let mean = 0.5 * res_k;
    let mut res_asc = WGK[10] * libm::fabs(fc - mean);
    for j in 0..10 {
        res_asc += WGK[j] * (libm::fabs(fv1[j] - mean) + libm::fabs(fv2[j] - mean));
    }
    let scale = libm::fabs(half);
    Ok(Segment {
        piece,
        a,
        b,
        value: res_k * half,
        error: rescale_error((res_k - res_g) * half, res_abs * scale, res_asc * scale),
        l1: res_abs * scale,
    })
}

/// One-point rule for a piece too narrow to place distinct nodes in; the
/// result is as resolved as double precision allows.
fn narrow_piece<F>(f: &mut F, pc: Piece) -> Result<f64>
where
    F: FnMut(f64) -> Result<f64>,
{
    let x = 0.5 * (pc.p + pc.q);
    if x <= pc.p || x >= pc.q {
        // no representable interior point: nothing to integrate over
        return Ok(0.0);
    }
    let y = f(x)?;
    if y.is_finite() {
        Ok(y * (pc.q - pc.p))
    } else {
        Err(Error::NonFiniteIntegrand { x })
    }
}

fn splittable(s: &Segment) -> bool {
    let mid = 0.5 * (s.a + s.b);
    // t lives in [0, 1], so an absolute width limit is appropriate
    mid - s.a > MIN_WIDTH && s.b - mid > MIN_WIDTH
}

/// Integrate `f` over `[a, b]`.
pub fn integrate<F>(f: F, a: f64, b: f64, tol: Tolerance) -> Result<Integral>
where
    F: FnMut(f64) -> Result<f64>,
{
    integrate_with_breaks(f, a, b, &[], tol)
}

/// Integrate `f` over `[a, b]`, seeding the subdivision with interior
/// `breaks` (kinks or jumps of the integrand). Breaks outside `(a, b)` are
/// ignored. Returns a negated integral when `b < a`.
///
/// `f` is never evaluated at `a`, `b` or a break point.
pub fn integrate_with_breaks<F>(
    mut f: F,
    a: f64,
    b: f64,
    breaks: &[f64],
    tol: Tolerance,
) -> Result<Integral>
where
    F: FnMut(f64) -> Result<f64>,
{
    if a == b {
        return Ok(Integral {
            value: 0.0,
            abs_error: 0.0,
            evaluations: 0,
            converged: true,
        });
    }
    if b < a {
        let mut r = integrate_with_breaks(f, b, a, breaks, tol)?;
        r.value = -r.value;
        return Ok(r);
    }

    let mut points: Vec<f64> = Vec::with_capacity(breaks.len() + 2);
    points.push(a);
    points.extend(breaks.iter().copied().filter(|&x| x > a && x < b));
    points.push(b);
    points.sort_by(f64::total_cmp);
    points.dedup();

    let mut pieces = Vec::with_capacity(points.len() - 1);
    let mut narrow_total = 0.0;
    let mut narrow_l1 = 0.0;
    let mut evaluations = 0;
    for w in points.windows(2) {
        let pc = Piece { p: w[0], q: w[1] };
        if too_narrow(pc.p, pc.q) {
            let v = narrow_piece(&mut f, pc)?;
            narrow_total += v;
            narrow_l1 += libm::fabs(v);
            evaluations += 1;
        } else {
            pieces.push(pc);
        }
    }

    let mut heap = BinaryHeap::new();
    let mut frozen: Vec<Segment> = Vec::new();
    for i in 0..pieces.len() {
        heap.push(kronrod(&mut f, &pieces, i, 0.0, 1.0)?);
        evaluations += 21;
    }
    let mut subdivisions = heap.len();

    loop {
        let (value, error, l1) = heap
            .iter()
            .chain(frozen.iter())
            .fold((narrow_total, 0.0, narrow_l1), |(v, e, n), s| {
                (v + s.value, e + s.error, n + s.l1)
            });
        // Relative to ∫|f| rather than |∫f|: with cancellation, the latter
        // can be far below what floating point can resolve.
        let target = libm::fmax(tol.abs, tol.rel * l1);
        if error <= target {
            return Ok(Integral {
                value,
                abs_error: error,
                evaluations,
                converged: true,
            });
        }
        let exhausted = subdivisions >= tol.max_subdivisions;
        let worst = match heap.pop() {
            Some(s) if !exhausted => s,
            other => {
                if let Some(s) = other {
                    frozen.push(s);
                }
                let soft = libm::fmax(tol.abs, ACCEPTABLE_REL * l1);
                if error <= soft {
                    return Ok(Integral {
                        value,
                        abs_error: error,
                        evaluations,
                        converged: false,
                    });
                }
                return Err(Error::QuadratureNotConverged {
                    value,
                    abs_error: error,
                });
            }
        };
        if !splittable(&worst) {
            frozen.push(worst);
            continue;
        }
        let mid = 0.5 * (worst.a + worst.b);
        heap.push(kronrod(&mut f, &pieces, worst.piece, worst.a, mid)?);
        heap.push(kronrod(&mut f, &pieces, worst.piece, mid, worst.b)?);
        evaluations += 42;
        subdivisions += 1;
    }
}

/// Shorthand returning only the value at the one-dimensional default tolerance.
pub fn integral<F>(f: F, a: f64, b: f64) -> Result<f64>
where
    F: FnMut(f64) -> Result<f64>,
{
    integrate(f, a, b, Tolerance::ONE_D).map(|r| r.value)
}
