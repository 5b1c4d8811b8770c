//! Parametric families, h-transforms and the composite `H = h ∘ F⁻¹`.
//!
//! Every downstream formula only touches a distribution through its quantile
//! function and the quantile density `d/du F⁻¹(u) = 1 / f(F⁻¹(u))`, both of
//! which are implemented analytically per family.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::sync::Arc;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use crate::error::{Error, Result};
use crate::special;

/// Supported distribution families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Family {
    /// `Uniform(lo, hi)`
    Uniform,
    /// `Exponential(θ)`, mean `θ`.
    Exponential,
    /// Classical Pareto, `F(x) = 1 - (x_m / x)^α` for `x >= x_m`;
    /// parameters `(α, x_m)`.
    Pareto,
    /// `Lognormal(μ, σ)`
    Lognormal,
    /// `Normal(μ, σ)`
    Normal,
}

impl Family {
    pub const ALL: [Family; 5] = [
        Family::Uniform,
        Family::Exponential,
        Family::Pareto,
        Family::Lognormal,
        Family::Normal,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Family::Uniform => "uniform",
            Family::Exponential => "exponential",
            Family::Pareto => "pareto",
            Family::Lognormal => "lognormal",
            Family::Normal => "normal",
        }
    }

    pub fn arity(self) -> usize {
        self.param_names().len()
    }

    pub fn param_names(self) -> &'static [&'static str] {
        match self {
            Family::Uniform => &["lo", "hi"],
            Family::Exponential => &["scale"],
            Family::Pareto => &["shape", "scale"],
            Family::Lognormal | Family::Normal => &["mu", "sigma"],
        }
    }

    /// Parameters used when no better starting point is known.
    pub fn default_params(self) -> &'static [f64] {
        match self {
            Family::Uniform => &[0.0, 1.0],
            Family::Exponential => &[1.0],
            Family::Pareto => &[2.0, 1.0],
            Family::Lognormal | Family::Normal => &[0.0, 1.0],
        }
    }

    /// Whether parameter `index` must stay strictly positive.
    pub fn param_positive(self, index: usize) -> bool {
        !matches!(
            (self, index),
            (Family::Uniform, _) | (Family::Lognormal, 0) | (Family::Normal, 0)
        )
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.trim().to_ascii_lowercase();
        Family::ALL
            .into_iter()
            .find(|f| f.name() == lower)
            .ok_or_else(|| Error::Parse(format!("unknown distribution family '{}'", s.trim())))
    }
}

/// A fully parameterised member of a [`Family`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DistributionModel {
    family: Family,
    theta: [f64; 2],
}

impl DistributionModel {
    /// Build and validate a model; `params.len()` must equal the family arity.
    pub fn new(family: Family, params: &[f64]) -> Result<Self> {
        if params.len() != family.arity() {
            return Err(Error::DimensionMismatch {
                expected: family.arity(),
                found: params.len(),
            });
        }
        let mut theta = [0.0; 2];
        theta[..params.len()].copy_from_slice(params);
        let model = DistributionModel { family, theta };
        model.validate()?;
        Ok(model)
    }

    pub fn uniform(lo: f64, hi: f64) -> Result<Self> {
        Self::new(Family::Uniform, &[lo, hi])
    }

    pub fn exponential(scale: f64) -> Result<Self> {
        Self::new(Family::Exponential, &[scale])
    }

    pub fn pareto(shape: f64, scale: f64) -> Result<Self> {
        Self::new(Family::Pareto, &[shape, scale])
    }

    pub fn lognormal(mu: f64, sigma: f64) -> Result<Self> {
        Self::new(Family::Lognormal, &[mu, sigma])
    }

    pub fn normal(mu: f64, sigma: f64) -> Result<Self> {
        Self::new(Family::Normal, &[mu, sigma])
    }

    fn validate(&self) -> Result<()> {
        let fam = self.family;
        for (i, (&v, &name)) in self.params().iter().zip(fam.param_names()).enumerate() {
            if !v.is_finite() || (fam.param_positive(i) && v <= 0.0) {
                return Err(Error::InvalidParameter {
                    family: fam.name(),
                    name,
                    value: v,
                });
            }
        }
        if fam == Family::Uniform && self.theta[1] <= self.theta[0] {
            return Err(Error::InvalidParameter {
                family: fam.name(),
                name: "hi",
                value: self.theta[1],
            });
        }
        Ok(())
    }

    pub fn family(&self) -> Family {
        self.family
    }

    pub fn params(&self) -> &[f64] {
        &self.theta[..self.family.arity()]
    }

    /// Same family with new parameters.
    pub fn with_params(&self, params: &[f64]) -> Result<Self> {
        Self::new(self.family, params)
    }

    /// Inverse CDF `F⁻¹(u)`.
    ///
    /// `u ∈ {0, 1}` is accepted only where the support is bounded on that side.
    pub fn quantile(&self, u: f64) -> Result<f64> {
        if u.is_nan() || !(0.0..=1.0).contains(&u) {
            return Err(Error::ProbabilityDomain { u });
        }
        let t = &self.theta;
        let x = match self.family {
            Family::Uniform => t[0] + (t[1] - t[0]) * u,
            Family::Exponential => -t[0] * libm::log1p(-u),
            Family::Pareto => t[1] * libm::pow(1.0 - u, -1.0 / t[0]),
            Family::Lognormal => libm::exp(t[0] + t[1] * special::normal_quantile(u)),
            Family::Normal => t[0] + t[1] * special::normal_quantile(u),
        };
        if x.is_finite() {
            Ok(x)
        } else {
            Err(Error::InfiniteQuantile { u })
        }
    }

    /// Quantile density `d/du F⁻¹(u)`.
    pub fn quantile_density(&self, u: f64) -> Result<f64> {
        if u.is_nan() || !(0.0..=1.0).contains(&u) {
            return Err(Error::ProbabilityDomain { u });
        }
        let t = &self.theta;
        let q = match self.family {
            Family::Uniform => t[1] - t[0],
            Family::Exponential => t[0] / (1.0 - u),
            Family::Pareto => t[1] / t[0] * libm::pow(1.0 - u, -1.0 / t[0] - 1.0),
            Family::Lognormal => {
                let z = special::normal_quantile(u);
                // exp(μ + σz) · σ · sqrt(2π) · exp(z²/2), folded into one exp
                t[1] * special::SQRT_2PI * libm::exp(t[0] + t[1] * z + 0.5 * z * z)
            }
            Family::Normal => t[1] * special::normal_quantile_density(u),
        };
        if q.is_finite() {
            Ok(q)
        } else {
            Err(Error::SingularDensity { u })
        }
    }

    /// Distribution function `F(x)`.
    pub fn cdf(&self, x: f64) -> f64 {
        let t = &self.theta;
        match self.family {
            Family::Uniform => ((x - t[0]) / (t[1] - t[0])).clamp(0.0, 1.0),
            Family::Exponential => {
                if x <= 0.0 {
                    0.0
                } else {
                    -libm::expm1(-x / t[0])
                }
            }
            Family::Pareto => {
                if x <= t[1] {
                    0.0
                } else {
                    1.0 - libm::pow(t[1] / x, t[0])
                }
            }
            Family::Lognormal => {
                if x <= 0.0 {
                    0.0
                } else {
                    special::normal_cdf((libm::log(x) - t[0]) / t[1])
                }
            }
            Family::Normal => special::normal_cdf((x - t[0]) / t[1]),
        }
    }

    /// Whether `F⁻¹` is finite at `u = 0`.
    pub fn bounded_below(&self) -> bool {
        !matches!(self.family, Family::Normal)
    }

    /// Whether `F⁻¹` is finite at `u = 1`.
    pub fn bounded_above(&self) -> bool {
        matches!(self.family, Family::Uniform)
    }
}

impl fmt::Display for DistributionModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}(", self.family.name())?;
        for (i, p) in self.params().iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{p}")?;
        }
        f.write_str(")")
    }
}

/// Split `"name(p1,p2)"` into `("name", [p1, p2])`; `"name"` alone yields no
/// arguments.
pub(crate) fn split_call(s: &str) -> Result<(String, Vec<&str>)> {
    let s = s.trim();
    match s.find('(') {
        None => Ok((s.to_ascii_lowercase(), Vec::new())),
        Some(open) => {
            let inner = s[open + 1..]
                .strip_suffix(')')
                .ok_or_else(|| Error::Parse(format!("missing ')' in '{s}'")))?;
            let name = s[..open].trim().to_ascii_lowercase();
            let args = if inner.trim().is_empty() {
                Vec::new()
            } else {
                inner.split(',').map(str::trim).collect()
            };
            Ok((name, args))
        }
    }
}

pub(crate) fn parse_f64(s: &str, context: &str) -> Result<f64> {
    s.trim()
        .parse::<f64>()
        .map_err(|_| Error::Parse(format!("'{s}' is not a number in '{context}'")))
}

impl FromStr for DistributionModel {
    type Err = Error;

    /// Parses `"family(p1,p2)"`, case-insensitively; a bare family name uses
    /// the family defaults.
    fn from_str(s: &str) -> Result<Self> {
        let (name, args) = split_call(s)?;
        let family: Family = name.parse()?;
        if args.is_empty() {
            return DistributionModel::new(family, family.default_params());
        }
        let params = args
            .iter()
            .map(|a| parse_f64(a, s))
            .collect::<Result<Vec<_>>>()?;
        if params.len() != family.arity() {
            return Err(Error::Parse(format!(
                "{} takes {} parameter(s) ({}), got {}",
                family.name(),
                family.arity(),
                family.param_names().join(","),
                params.len()
            )));
        }
        DistributionModel::new(family, &params)
    }
}

type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// A user-supplied transform given as a value/derivative pair.
#[derive(Clone)]
pub struct CustomTransform {
    name: String,
    value: ScalarFn,
    derivative: ScalarFn,
}

impl fmt::Debug for CustomTransform {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CustomTransform")
            .field("name", &self.name)
            .finish_non_exhaustive()
    }
}

/// The statistician-chosen function `h` applied to each observation.
#[derive(Debug, Clone)]
pub enum HTransform {
    Identity,
    /// `x^k`. Integer exponents accept negative `x`.
    Power(f64),
    /// Natural logarithm, defined for `x > 0`.
    Log,
    /// `x + c`
    Shifted(f64),
    Custom(CustomTransform),
}

impl HTransform {
    /// Register a custom transform from a value and derivative callback.
    pub fn custom<V, D>(name: impl Into<String>, value: V, derivative: D) -> Self
    where
        V: Fn(f64) -> f64 + Send + Sync + 'static,
        D: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        HTransform::Custom(CustomTransform {
            name: name.into(),
            value: Arc::new(value),
            derivative: Arc::new(derivative),
        })
    }

    /// `c · h(x)` for any transform `h`.
    pub fn scaled(&self, c: f64) -> Self {
        let inner = self.clone();
        let inner_d = self.clone();
        HTransform::custom(
            format!("{c}*{self}"),
            move |x| c * inner.raw_value(x),
            move |x| c * inner_d.raw_derivative(x),
        )
    }

    fn raw_value(&self, x: f64) -> f64 {
        match self {
            HTransform::Identity => x,
            HTransform::Power(k) => power(x, *k),
            HTransform::Log => {
                if x > 0.0 {
                    libm::log(x)
                } else {
                    f64::NAN
                }
            }
            HTransform::Shifted(c) => x + c,
            HTransform::Custom(t) => (t.value)(x),
        }
    }

    fn raw_derivative(&self, x: f64) -> f64 {
        match self {
            HTransform::Identity | HTransform::Shifted(_) => 1.0,
            HTransform::Power(k) => {
                if *k == 1.0 {
                    1.0
                } else {
                    k * power(x, k - 1.0)
                }
            }
            HTransform::Log => {
                if x > 0.0 {
                    1.0 / x
                } else {
                    f64::NAN
                }
            }
            HTransform::Custom(t) => (t.derivative)(x),
        }
    }

    /// `h(x)`
    pub fn value(&self, x: f64) -> Result<f64> {
        let y = self.raw_value(x);
        if y.is_finite() {
            Ok(y)
        } else {
            Err(Error::TransformDomain {
                transform: self.to_string(),
                x,
            })
        }
    }

    /// `h'(x)`
    pub fn derivative(&self, x: f64) -> Result<f64> {
        let y = self.raw_derivative(x);
        if y.is_finite() {
            Ok(y)
        } else {
            Err(Error::TransformDomain {
                transform: self.to_string(),
                x,
            })
        }
    }

    /// True when `h` is known to be nondecreasing on the whole real line.
    pub fn is_nondecreasing(&self) -> bool {
        match self {
            HTransform::Identity | HTransform::Log | HTransform::Shifted(_) => true,
            HTransform::Power(k) => {
                // odd integer powers are monotone everywhere
                libm::fmod(*k, 2.0) == 1.0
            }
            HTransform::Custom(_) => false,
        }
    }
}

fn power(x: f64, k: f64) -> f64 {
    if libm::trunc(k) == k && libm::fabs(k) < i32::MAX as f64 {
        let mut acc = 1.0;
        let mut base = x;
        let mut e = libm::fabs(k) as u64;
        while e > 0 {
            if e & 1 == 1 {
                acc *= base;
            }
            base *= base;
            e >>= 1;
        }
        if k < 0.0 {
            1.0 / acc
        } else {
            acc
        }
    } else if x < 0.0 {
        f64::NAN
    } else {
        libm::pow(x, k)
    }
}

impl PartialEq for HTransform {
    fn eq(&self, other: &Self) -> bool {
        match (self, other) {
            (HTransform::Identity, HTransform::Identity) | (HTransform::Log, HTransform::Log) => true,
            (HTransform::Power(a), HTransform::Power(b)) => a == b,
            (HTransform::Shifted(a), HTransform::Shifted(b)) => a == b,
            (HTransform::Custom(a), HTransform::Custom(b)) => {
                Arc::ptr_eq(&a.value, &b.value) && Arc::ptr_eq(&a.derivative, &b.derivative)
            }
            _ => false,
        }
    }
}

impl fmt::Display for HTransform {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            HTransform::Identity => f.write_str("identity"),
            HTransform::Power(k) => write!(f, "power({k})"),
            HTransform::Log => f.write_str("log"),
            HTransform::Shifted(c) => write!(f, "shifted({c})"),
            HTransform::Custom(t) => f.write_str(&t.name),
        }
    }
}

impl FromStr for HTransform {
    type Err = Error;

    /// `identity`, `log`, `power(k)` and `shifted(c)`; case-insensitive.
    fn from_str(s: &str) -> Result<Self> {
        let (name, args) = split_call(s)?;
        let one_arg = |args: &[&str]| -> Result<f64> {
            match args {
                [a] => parse_f64(a, s),
                _ => Err(Error::Parse(format!("'{name}' takes exactly one argument"))),
            }
        };
        match name.as_str() {
            "identity" | "id" | "x" if args.is_empty() => Ok(HTransform::Identity),
            "log" | "ln" if args.is_empty() => Ok(HTransform::Log),
            "power" | "pow" => {
                let k = one_arg(&args)?;
                if !(k.is_finite() && k >= 1.0) {
                    return Err(Error::Parse(format!("power exponent must be >= 1, got {k}")));
                }
                Ok(HTransform::Power(k))
            }
            "shifted" | "shift" => Ok(HTransform::Shifted(one_arg(&args)?)),
            _ => Err(Error::Parse(format!("unknown transform '{}'", s.trim()))),
        }
    }
}

/// The composite `H(u) = h(F⁻¹(u))` and its derivative.
#[derive(Debug, Clone, Copy)]
pub struct CompositeH<'a> {
    pub model: &'a DistributionModel,
    pub transform: &'a HTransform,
}

impl<'a> CompositeH<'a> {
    pub fn new(model: &'a DistributionModel, transform: &'a HTransform) -> Self {
        CompositeH { model, transform }
    }

    /// `H(u) = h(F⁻¹(u))`
    pub fn value(&self, u: f64) -> Result<f64> {
        self.transform.value(self.model.quantile(u)?)
    }

    /// `H'(u) = h'(F⁻¹(u)) · d/du F⁻¹(u)`
    pub fn derivative(&self, u: f64) -> Result<f64> {
        let x = self.model.quantile(u)?;
        let dq = self.model.quantile_density(u)?;
        let d = self.transform.derivative(x)? * dq;
        if d.is_finite() {
            Ok(d)
        } else {
            Err(Error::SingularDensity { u })
        }
    }
}
