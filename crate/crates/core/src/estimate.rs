//! Parameter estimation by matching sample and population moments, and
//! delta-method propagation of the moment covariance to parameter space.

use alloc::vec;
use alloc::vec::Vec;

use crate::asymcov::{cov_matrix, CovMatrix, CovMethod};
use crate::error::{Error, Result};
use crate::linalg::{self, Matrix};
use crate::models::{DistributionModel, Family};
use crate::moments::{population_moment, sample_moment, MomentSpec, Sample};

/// Residual tolerance on the standardized residuals `μⱼ(θ)/μ̂ⱼ - 1`.
pub const RESIDUAL_TOL: f64 = 1e-9;
pub const MAX_ITERATIONS: usize = 200;

/// A family with some parameters held fixed.
///
/// The free parameters are the unknowns of the matching system; the fixed
/// ones keep the values stored in `model`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FamilyTemplate {
    model: DistributionModel,
    free: [bool; 2],
}

impl FamilyTemplate {
    /// All parameters free; `model` supplies the default starting point.
    pub fn new(model: DistributionModel) -> Self {
        let arity = model.family().arity();
        FamilyTemplate {
            model,
            free: [true, arity > 1],
        }
    }

    pub fn family_default(family: Family) -> Self {
        Self::new(DistributionModel::new(family, family.default_params()).expect("valid defaults"))
    }

    /// Hold parameter `index` at its value in the template model.
    pub fn fix(mut self, index: usize) -> Result<Self> {
        if index >= self.model.family().arity() {
            return Err(Error::DimensionMismatch {
                expected: self.model.family().arity(),
                found: index + 1,
            });
        }
        self.free[index] = false;
        Ok(self)
    }

    /// Hold the parameter called `name` fixed.
    pub fn fix_named(self, name: &str) -> Result<Self> {
        let names = self.model.family().param_names();
        match names.iter().position(|n| n.eq_ignore_ascii_case(name)) {
            Some(i) => self.fix(i),
            None => Err(Error::Parse(alloc::format!(
                "{} has no parameter '{name}'",
                self.model.family().name()
            ))),
        }
    }

    pub fn model(&self) -> &DistributionModel {
        &self.model
    }

    pub fn is_free(&self, index: usize) -> bool {
        self.free[index]
    }

    pub fn free_count(&self) -> usize {
        (0..self.model.family().arity()).filter(|&i| self.free[i]).count()
    }

    /// The free coordinates of `model`'s parameter vector.
    pub fn free_params(&self, model: &DistributionModel) -> Vec<f64> {
        model
            .params()
            .iter()
            .enumerate()
            .filter(|(i, _)| self.free[*i])
            .map(|(_, &v)| v)
            .collect()
    }

    /// Model with the free coordinates replaced by `theta`.
    pub fn model_with(&self, theta: &[f64]) -> Result<DistributionModel> {
        if theta.len() != self.free_count() {
            return Err(Error::DimensionMismatch {
                expected: self.free_count(),
                found: theta.len(),
            });
        }
        let mut params = self.model.params().to_vec();
        let mut it = theta.iter();
        for (i, p) in params.iter_mut().enumerate() {
            if self.free[i] {
                *p = *it.next().unwrap();
            }
        }
        self.model.with_params(&params)
    }

    fn positive(&self) -> Vec<bool> {
        let fam = self.model.family();
        (0..fam.arity())
            .filter(|&i| self.free[i])
            .map(|i| fam.param_positive(i))
            .collect()
    }
}

/// Outcome of a moment-matching fit.
#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub model: DistributionModel,
    /// Estimated free parameters.
    pub theta_hat: Vec<f64>,
    pub mu_hat: Vec<f64>,
    /// Asymptotic covariance of `√n (θ̂ - θ)`.
    pub cov_theta: CovMatrix,
    /// Asymptotic covariance of `√n (μ̂ - μ)` at the fitted model.
    pub cov_mu: CovMatrix,
    pub iterations: usize,
    /// `max_j |μⱼ(θ̂) - μ̂ⱼ|`
    pub residual_norm: f64,
    /// A different root reached from the second starting point, if any.
    pub alternate_root: Option<Vec<f64>>,
}

/// Population moments `μⱼ(θ)` for all specs.
pub fn moment_map(model: &DistributionModel, specs: &[MomentSpec]) -> Result<Vec<f64>> {
    specs.iter().map(|s| population_moment(model, s)).collect()
}

/// Sample moments `μ̂ⱼ` for all specs.
pub fn sample_moments(sample: &Sample, specs: &[MomentSpec]) -> Result<Vec<f64>> {
    specs.iter().map(|s| sample_moment(sample, s)).collect()
}

/// `D = [∂μᵢ/∂θⱼ]` over the free parameters by central differences with step
/// `1e-6 (1 + |θⱼ|)`, one-sided where the family domain requires it.
pub fn jacobian(template: &FamilyTemplate, theta: &[f64], specs: &[MomentSpec]) -> Result<Matrix> {
    let k = theta.len();
    if specs.len() != k {
        return Err(Error::DimensionMismatch {
            expected: k,
            found: specs.len(),
        });
    }
    let mut d = linalg::zeros(k);
    let centre = moment_map(&template.model_with(theta)?, specs)?;
    for j in 0..k {
        let h = 1e-6 * (1.0 + libm::fabs(theta[j]));
        let shifted = |delta: f64| -> Result<Vec<f64>> {
            let mut t = theta.to_vec();
            t[j] += delta;
            moment_map(&template.model_with(&t)?, specs)
        };
        let column: Vec<f64> = match (shifted(h), shifted(-h)) {
            (Ok(up), Ok(down)) => up.iter().zip(&down).map(|(u, d)| (u - d) / (2.0 * h)).collect(),
            (Ok(up), Err(_)) => up.iter().zip(&centre).map(|(u, c)| (u - c) / h).collect(),
            (Err(_), Ok(down)) => centre.iter().zip(&down).map(|(c, d)| (c - d) / h).collect(),
            (Err(e), Err(_)) => return Err(e),
        };
        for (i, v) in column.into_iter().enumerate() {
            d[(i, j)] = v;
        }
    }
    Ok(d)
}

/// Standardized residual `μ/μ̂ - 1`, or the raw difference when `μ̂ = 0`.
fn residuals(mu: &[f64], mu_hat: &[f64]) -> Vec<f64> {
    mu.iter()
        .zip(mu_hat)
        .map(|(&m, &t)| if t != 0.0 { m / t - 1.0 } else { m - t })
        .collect()
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(libm::fabs(*x)))
}

struct Solution {
    theta: Vec<f64>,
    iterations: usize,
}

struct Problem<'a> {
    template: &'a FamilyTemplate,
    specs: &'a [MomentSpec],
    mu_hat: &'a [f64],
}

impl Problem<'_> {
    fn residual(&self, theta: &[f64]) -> Result<Vec<f64>> {
        let model = self.template.model_with(theta)?;
        Ok(residuals(&moment_map(&model, self.specs)?, self.mu_hat))
    }

    fn newton(&self, start: &[f64]) -> Result<Solution> {
        let k = start.len();
        let mut theta = start.to_vec();
        let mut r = self.residual(&theta)?;
        let mut norm = max_abs(&r);
        for iter in 0..MAX_ITERATIONS {
            if norm <= RESIDUAL_TOL {
                return Ok(Solution {
                    theta,
                    iterations: iter,
                });
            }
            let mut d = jacobian(self.template, &theta, self.specs)?;
            for i in 0..k {
                let scale = if self.mu_hat[i] != 0.0 { self.mu_hat[i] } else { 1.0 };
                for j in 0..k {
                    d[(i, j)] /= scale;
                }
            }
            let cond = linalg::condition_1(&d);
            if !cond.is_finite() || cond > 1e14 {
                return Err(Error::SingularJacobian { condition: cond });
            }
            let step = d
                .lu()
                .solve(&Matrix::from_column_slice(k, 1, &r))
                .ok_or(Error::SingularJacobian { condition: cond })?;
            // Halve the step until the trial point is in the family domain
            // and the residual decreases.
            let mut lambda = 1.0;
            let mut accepted = None;
            for _ in 0..60 {
                let trial: Vec<f64> = theta.iter().zip(&step).map(|(t, s)| t - lambda * s).collect();
                if let Ok(tr) = self.residual(&trial) {
                    let tn = max_abs(&tr);
                    if tn < norm {
                        accepted = Some((trial, tr, tn));
                        break;
                    }
                }
                lambda *= 0.5;
            }
            match accepted {
                Some((t, tr, tn)) => {
                    theta = t;
                    r = tr;
                    norm = tn;
                }
                None => {
                    return Err(Error::NoConvergence {
                        iterations: iter,
                        residual: norm,
                    })
                }
            }
        }
        if norm <= RESIDUAL_TOL {
            Ok(Solution {
                theta,
                iterations: MAX_ITERATIONS,
            })
        } else {
            Err(Error::NoConvergence {
                iterations: MAX_ITERATIONS,
                residual: norm,
            })
        }
    }

    /// One free parameter: bracket a sign change of the residual around
    /// `start`, then bisect.
    fn bisection(&self, start: f64, positive: bool) -> Result<Solution> {
        let f = |t: f64| -> Option<f64> { self.residual(&[t]).ok().map(|r| r[0]) };
        let f0 = f(start).ok_or(Error::NoConvergence {
            iterations: 0,
            residual: f64::INFINITY,
        })?;
        if libm::fabs(f0) <= RESIDUAL_TOL {
            return Ok(Solution {
                theta: vec![start],
                iterations: 0,
            });
        }
        let mut bracket = None;
        'search: for m in 1..=60 {
            let w = libm::ldexp(1.0, m);
            let candidates = if positive {
                [start * w, start / w]
            } else {
                let d = (1.0 + libm::fabs(start)) * w;
                [start + d, start - d]
            };
            for c in candidates {
                if let Some(fc) = f(c) {
                    if fc == 0.0 {
                        return Ok(Solution {
                            theta: vec![c],
                            iterations: m as usize,
                        });
                    }
                    if (fc < 0.0) != (f0 < 0.0) {
                        bracket = Some((start, f0, c));
                        break 'search;
                    }
                }
            }
        }
        let (mut lo, mut flo, mut hi) = bracket.ok_or(Error::NoConvergence {
            iterations: 0,
            residual: libm::fabs(f0),
        })?;
        for iter in 0..MAX_ITERATIONS {
            let mid = 0.5 * (lo + hi);
            let fm = f(mid).ok_or(Error::NoConvergence {
                iterations: iter,
                residual: f64::INFINITY,
            })?;
            if libm::fabs(fm) <= RESIDUAL_TOL || mid == lo || mid == hi {
                return Ok(Solution {
                    theta: vec![mid],
                    iterations: iter + 1,
                });
            }
            if (fm < 0.0) == (flo < 0.0) {
                lo = mid;
                flo = fm;
            } else {
                hi = mid;
            }
        }
        Err(Error::NoConvergence {
            iterations: MAX_ITERATIONS,
            residual: libm::fabs(flo),
        })
    }

    fn solve(&self, start: &[f64]) -> Result<Solution> {
        match self.newton(start) {
            Ok(s) => Ok(s),
            Err(e) if start.len() == 1 => {
                let positive = self.template.positive()[0];
                self.bisection(start[0], positive).map_err(|_| e)
            }
            Err(e) => Err(e),
        }
    }
}

/// Quantile-based starting values for the full parameter vector.
fn sample_start(family: Family, sample: &Sample) -> Option<Vec<f64>> {
    let x = sample.order_statistics();
    let n = x.len();
    let q = |p: f64| x[((n - 1) as f64 * p) as usize];
    let (min, max, med, q1, q3) = (x[0], x[n - 1], q(0.5), q(0.25), q(0.75));
    let ln2 = core::f64::consts::LN_2;
    let start = match family {
        Family::Uniform => {
            let pad = (max - min) / n as f64;
            vec![min - pad, max + pad]
        }
        Family::Exponential => vec![med / ln2],
        Family::Pareto => {
            let scale = min;
            vec![ln2 / libm::log(med / scale), scale]
        }
        Family::Lognormal => {
            if q1 <= 0.0 {
                return None;
            }
            vec![libm::log(med), (libm::log(q3) - libm::log(q1)) / 1.349]
        }
        Family::Normal => vec![med, (q3 - q1) / 1.349],
    };
    start.iter().all(|v| v.is_finite()).then_some(start)
}

fn same_root(a: &[f64], b: &[f64]) -> bool {
    a.iter()
        .zip(b)
        .all(|(x, y)| libm::fabs(x - y) <= 1e-6 * (1.0 + libm::fabs(*x)))
}

/// Solve `μⱼ(θ) = μ̂ⱼ` for the free parameters of `template`.
///
/// Newton is started from a quantile-based initializer and from the
/// template's own parameters; if both converge to different roots the second
/// is reported in [`FitResult::alternate_root`].
pub fn fit(template: &FamilyTemplate, sample: &Sample, specs: &[MomentSpec]) -> Result<FitResult> {
    let k = template.free_count();
    if specs.len() != k {
        return Err(Error::DimensionMismatch {
            expected: k,
            found: specs.len(),
        });
    }
    let mu_hat = sample_moments(sample, specs)?;
    let problem = Problem {
        template,
        specs,
        mu_hat: &mu_hat,
    };

    let default_start = template.free_params(template.model());
    let mut starts = Vec::new();
    if let Some(full) = sample_start(template.model().family(), sample) {
        if let Ok(m) = template.model().with_params(&full) {
            starts.push(template.free_params(&m));
        }
    }
    starts.push(default_start);

    let mut first_err = None;
    let mut solutions = Vec::new();
    for s in &starts {
        match problem.solve(s) {
            Ok(sol) => solutions.push(sol),
            Err(e) => {
                first_err.get_or_insert(e);
            }
        }
    }
    let mut it = solutions.into_iter();
    let best = match it.next() {
        Some(s) => s,
        None => return Err(first_err.unwrap()),
    };
    let alternate_root = it
        .find(|s| !same_root(&s.theta, &best.theta))
        .map(|s| s.theta);

    let model = template.model_with(&best.theta)?;
    let mu = moment_map(&model, specs)?;
    let residual_norm = mu
        .iter()
        .zip(&mu_hat)
        .fold(0.0f64, |m, (a, b)| m.max(libm::fabs(a - b)));
    let cov_mu = cov_matrix(specs, &model, CovMethod::Auto)?;
    let cov_theta = delta_cov_free(template, &model, specs, &cov_mu)?;
    Ok(FitResult {
        model,
        theta_hat: best.theta,
        mu_hat,
        cov_theta,
        cov_mu,
        iterations: best.iterations,
        residual_norm,
        alternate_root,
    })
}

/// Solve `μⱼ(θ) = μ̂ⱼ` starting from the template's parameters only, without
/// covariance or second-root checks. Returns `θ̂` and the iteration count.
pub fn solve_moments(template: &FamilyTemplate, specs: &[MomentSpec], mu_hat: &[f64]) -> Result<(Vec<f64>, usize)> {
    let k = template.free_count();
    if specs.len() != k || mu_hat.len() != k {
        return Err(Error::DimensionMismatch {
            expected: k,
            found: specs.len().max(mu_hat.len()),
        });
    }
    let problem = Problem {
        template,
        specs,
        mu_hat,
    };
    let sol = problem.solve(&template.free_params(template.model()))?;
    Ok((sol.theta, sol.iterations))
}

/// `Σ_θ = D⁻¹ Σ_μ D⁻ᵀ` with `D = ∂μ/∂θ` at `model`, all parameters free.
pub fn delta_cov(model: &DistributionModel, specs: &[MomentSpec], cov_mu: &CovMatrix) -> Result<CovMatrix> {
    delta_cov_free(&FamilyTemplate::new(*model), model, specs, cov_mu)
}

/// As [`delta_cov`], differentiating only in the free parameters of
/// `template`.
pub fn delta_cov_free(
    template: &FamilyTemplate,
    model: &DistributionModel,
    specs: &[MomentSpec],
    cov_mu: &CovMatrix,
) -> Result<CovMatrix> {
    let theta = template.free_params(model);
    let anchored = FamilyTemplate {
        model: *model,
        free: template.free,
    };
    if cov_mu.dim() != theta.len() {
        return Err(Error::DimensionMismatch {
            expected: theta.len(),
            found: cov_mu.dim(),
        });
    }
    let d = jacobian(&anchored, &theta, specs)?;
    let cond = linalg::condition_1(&d);
    let inv = match d.try_inverse() {
        Some(inv) if cond.is_finite() && cond <= 1e14 => inv,
        _ => return Err(Error::SingularJacobian { condition: cond }),
    };
    let sigma = &inv * cov_mu.matrix() * inv.transpose();
    Ok(CovMatrix::from_matrix(sigma, CovMethod::Auto))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::HTransform;

    #[test]
    fn exponential_untrimmed_is_sample_mean() {
        let t = FamilyTemplate::family_default(Family::Exponential);
        let s = Sample::from_slice(&[1.0, 2.0, 3.0, 4.0]).unwrap();
        let spec = MomentSpec::mtm(HTransform::Identity, 0.0, 0.0).unwrap();
        let r = fit(&t, &s, &[spec]).unwrap();
        assert!((r.theta_hat[0] - 2.5).abs() < 1e-8);
        assert!(r.alternate_root.is_none());
    }

    #[test]
    fn uniform_upper_end() {
        let t = FamilyTemplate::new(DistributionModel::uniform(0.0, 1.0).unwrap())
            .fix_named("lo")
            .unwrap();
        let s = Sample::from_slice(&[0.5, 1.5]).unwrap();
        let spec = MomentSpec::mtm(HTransform::Identity, 0.0, 0.0).unwrap();
        let r = fit(&t, &s, &[spec]).unwrap();
        assert!((r.theta_hat[0] - 2.0).abs() < 1e-8);
    }

    #[test]
    fn dimension_mismatch() {
        let t = FamilyTemplate::family_default(Family::Normal);
        let s = Sample::from_slice(&[1.0, 2.0, 3.0]).unwrap();
        let spec = MomentSpec::mtm(HTransform::Identity, 0.0, 0.0).unwrap();
        assert!(matches!(fit(&t, &s, &[spec]), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn singular_jacobian_is_reported() {
        // two copies of the same moment cannot identify two parameters
        let m = DistributionModel::normal(0.0, 1.0).unwrap();
        let spec = MomentSpec::mtm(HTransform::Identity, 0.1, 0.1).unwrap();
        let specs = [spec.clone(), spec];
        let cov = cov_matrix(&specs, &m, CovMethod::Auto).unwrap();
        assert!(matches!(
            delta_cov(&m, &specs, &cov),
            Err(Error::SingularJacobian { .. })
        ));
    }
}
