//! Sample and population trimmed / winsorized moments.

use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use crate::error::{Error, Result};
use crate::models::{CompositeH, DistributionModel, HTransform};
use crate::quad::{self, Tolerance};

/// Estimator mode of one moment coordinate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Mode {
    /// Method of trimmed moments.
    Mtm,
    /// Method of winsorized moments.
    Mwm,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Mtm => "mtm",
            Mode::Mwm => "mwm",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "mtm" | "trimmed" => Ok(Mode::Mtm),
            "mwm" | "winsorized" => Ok(Mode::Mwm),
            other => Err(Error::Parse(alloc::format!(
                "unknown mode '{other}' (expected mtm or mwm)"
            ))),
        }
    }
}

/// One estimator coordinate: transform, lower/upper proportions and mode.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentSpec {
    pub transform: HTransform,
    a: f64,
    b: f64,
    pub mode: Mode,
}

impl MomentSpec {
    pub fn new(transform: HTransform, a: f64, b: f64, mode: Mode) -> Result<Self> {
        if !(a.is_finite() && b.is_finite()) || a < 0.0 || b < 0.0 || a + b >= 1.0 {
            return Err(Error::InvalidTrim { a, b });
        }
        Ok(MomentSpec {
            transform,
            a,
            b,
            mode,
        })
    }

    pub fn mtm(transform: HTransform, a: f64, b: f64) -> Result<Self> {
        Self::new(transform, a, b, Mode::Mtm)
    }

    pub fn mwm(transform: HTransform, a: f64, b: f64) -> Result<Self> {
        Self::new(transform, a, b, Mode::Mwm)
    }

    /// Lower proportion.
    pub fn a(&self) -> f64 {
        self.a
    }

    /// Upper proportion.
    pub fn b(&self) -> f64 {
        self.b
    }

    /// Upper window edge `1 - b`.
    pub fn upper(&self) -> f64 {
        1.0 - self.b
    }

    pub fn with_mode(&self, mode: Mode) -> Self {
        MomentSpec {
            mode,
            ..self.clone()
        }
    }

    pub fn with_transform(&self, transform: HTransform) -> Self {
        MomentSpec {
            transform,
            ..self.clone()
        }
    }

    pub fn composite<'a>(&'a self, model: &'a DistributionModel) -> CompositeH<'a> {
        CompositeH::new(model, &self.transform)
    }

    fn require(&self, mode: Mode) -> Result<()> {
        if self.mode == mode {
            Ok(())
        } else {
            Err(Error::ModeMismatch {
                expected: mode.name(),
            })
        }
    }
}

/// Trimming count `⌊n p⌋`, computed as the largest integer `m` with
/// `m <= n·p + 1e-12` so that e.g. `n = 10, p = 0.1` gives exactly 1.
pub fn trim_count(n: usize, p: f64) -> usize {
    libm::floor(n as f64 * p + 1e-12) as usize
}

/// An i.i.d. sample, stored as its order statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    sorted: Vec<f64>,
}

impl Sample {
    pub fn new(mut values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::EmptySample);
        }
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFiniteObservation { index });
        }
        values.sort_unstable_by(f64::total_cmp);
        Ok(Sample { sorted: values })
    }

    pub fn from_slice(values: &[f64]) -> Result<Self> {
        Self::new(values.to_vec())
    }

    pub fn len(&self) -> usize {
        self.sorted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sorted.is_empty()
    }

    /// Order statistics `X_{1:n} <= … <= X_{n:n}`.
    pub fn order_statistics(&self) -> &[f64] {
        &self.sorted
    }

    /// Indices (0-based, half-open) of the retained window and the counts
    /// trimmed below/above.
    fn window(&self, spec: &MomentSpec) -> Result<(usize, usize)> {
        let n = self.sorted.len();
        let lower = trim_count(n, spec.a);
        let upper = trim_count(n, spec.b);
        if lower + upper >= n {
            return Err(Error::EmptyWindow { n, lower, upper });
        }
        Ok((lower, upper))
    }
}

/// Sample trimmed moment: mean of `h(X_{i:n})` for
/// `i = ⌊na⌋+1 … n-⌊nb⌋`.
pub fn sample_trimmed_moment(sample: &Sample, spec: &MomentSpec) -> Result<f64> {
    spec.require(Mode::Mtm)?;
    let (lower, upper) = sample.window(spec)?;
    let n = sample.len();
    let retained = &sample.sorted[lower..n - upper];
    let mut sum = 0.0;
    for &x in retained {
        sum += spec.transform.value(x)?;
    }
    Ok(sum / retained.len() as f64)
}

/// Sample winsorized moment: the `⌊na⌋` lowest values are replaced by
/// `X_{⌊na⌋+1:n}` and the `⌊nb⌋` highest by `X_{n-⌊nb⌋:n}` before averaging.
pub fn sample_winsorized_moment(sample: &Sample, spec: &MomentSpec) -> Result<f64> {
    spec.require(Mode::Mwm)?;
    let (lower, upper) = sample.window(spec)?;
    let n = sample.len();
    let retained = &sample.sorted[lower..n - upper];
    let mut sum = 0.0;
    for &x in retained {
        sum += spec.transform.value(x)?;
    }
    let low = if lower > 0 {
        lower as f64 * spec.transform.value(retained[0])?
    } else {
        0.0
    };
    let high = if upper > 0 {
        upper as f64 * spec.transform.value(retained[retained.len() - 1])?
    } else {
        0.0
    };
    Ok((low + sum + high) / n as f64)
}

/// Dispatch on `spec.mode`.
pub fn sample_moment(sample: &Sample, spec: &MomentSpec) -> Result<f64> {
    match spec.mode {
        Mode::Mtm => sample_trimmed_moment(sample, spec),
        Mode::Mwm => sample_winsorized_moment(sample, spec),
    }
}

/// `∫_lo^hi H(u) du` at the default one-dimensional tolerance.
pub fn integral_h(h: &CompositeH<'_>, lo: f64, hi: f64) -> Result<f64> {
    quad::integrate(|u| h.value(u), lo, hi, Tolerance::ONE_D).map(|r| r.value)
}

/// `∫_lo^hi H_i(u) H_j(u) du`
pub fn integral_hh(h_i: &CompositeH<'_>, h_j: &CompositeH<'_>, lo: f64, hi: f64) -> Result<f64> {
    quad::integrate(
        |u| Ok(h_i.value(u)? * h_j.value(u)?),
        lo,
        hi,
        Tolerance::ONE_D,
    )
    .map(|r| r.value)
}

/// `w · H(u)`; a zero weight gives `0` without evaluating `H(u)`.
///
/// A positive weight on an unbounded `H(u)` is [`Error::EndpointDivergence`].
pub fn weighted_value(h: &CompositeH<'_>, weight: f64, u: f64) -> Result<f64> {
    if weight == 0.0 {
        return Ok(0.0);
    }
    match h.value(u) {
        Ok(v) => Ok(weight * v),
        Err(Error::InfiniteQuantile { .. }) | Err(Error::TransformDomain { .. }) => {
            Err(Error::EndpointDivergence { u })
        }
        Err(e) => Err(e),
    }
}

/// Population trimmed moment `(1-a-b)^{-1} ∫_a^{1-b} H(u) du`.
pub fn population_trimmed_moment(model: &DistributionModel, spec: &MomentSpec) -> Result<f64> {
    spec.require(Mode::Mtm)?;
    let h = spec.composite(model);
    let mass = 1.0 - spec.a - spec.b;
    integral_h(&h, spec.a, spec.upper()).map(|v| v / mass)
}

/// Population winsorized moment `a H(a) + ∫_a^{1-b} H(u) du + b H(1-b)`.
pub fn population_winsorized_moment(model: &DistributionModel, spec: &MomentSpec) -> Result<f64> {
    spec.require(Mode::Mwm)?;
    let h = spec.composite(model);
    let body = integral_h(&h, spec.a, spec.upper())?;
    let low = if spec.a > 0.0 {
        weighted_value(&h, spec.a, spec.a)?
    } else {
        0.0
    };
    let high = if spec.b > 0.0 {
        weighted_value(&h, spec.b, spec.upper())?
    } else {
        0.0
    };
    Ok(low + body + high)
}

/// Dispatch on `spec.mode`.
pub fn population_moment(model: &DistributionModel, spec: &MomentSpec) -> Result<f64> {
    match spec.mode {
        Mode::Mtm => population_trimmed_moment(model, spec),
        Mode::Mwm => population_winsorized_moment(model, spec),
    }
}
