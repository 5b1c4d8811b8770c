//! Monte Carlo check that `√n (μ̂ - μ)` (and optionally `√n (θ̂ - θ)`) has
//! the covariance predicted by the asymptotic formulas.

use std::time::Instant;

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use robust_lmoments_core::estimate::{self, FamilyTemplate};
use robust_lmoments_core::linalg::{self, Matrix};
use robust_lmoments_core::moments::Sample;
use robust_lmoments_core::{asymcov, special, CovMatrix, CovMethod, DistributionModel, MomentSpec};
use thiserror::Error;

/// Absolute floor in the relative deviation `|emp - theo| / max(|theo|, floor)`.
pub const DEVIATION_FLOOR: f64 = 1e-4;

/// Replications may fail (e.g. a degenerate fit); above this fraction the
/// run is aborted.
pub const MAX_FAILURE_FRACTION: f64 = 0.01;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid simulation config: {0}")]
    Config(String),
    #[error("{failures} of {replications} replications failed (limit 1%); first failure: {first}")]
    TooManyFailures {
        failures: usize,
        replications: usize,
        first: String,
    },
    #[error(transparent)]
    Core(#[from] robust_lmoments_core::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Targets {
    pub moments: bool,
    pub parameters: bool,
}

impl Default for Targets {
    fn default() -> Self {
        Targets {
            moments: true,
            parameters: false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SimulationConfig {
    /// The true model draws come from.
    pub model: DistributionModel,
    /// Which parameters are estimated when `targets.parameters` is set; its
    /// model must equal `model`.
    pub template: FamilyTemplate,
    pub specs: Vec<MomentSpec>,
    pub n: usize,
    pub replications: usize,
    pub master_seed: u64,
    pub targets: Targets,
}

impl SimulationConfig {
    /// Moments-only run with every parameter free.
    pub fn new(model: DistributionModel, specs: Vec<MomentSpec>, n: usize, replications: usize, master_seed: u64) -> Self {
        SimulationConfig {
            model,
            template: FamilyTemplate::new(model),
            specs,
            n,
            replications,
            master_seed,
            targets: Targets::default(),
        }
    }

    pub fn with_parameters(mut self, template: FamilyTemplate) -> Self {
        self.template = template;
        self.targets.parameters = true;
        self
    }

    fn validate(&self) -> Result<(), SimError> {
        if self.specs.is_empty() {
            return Err(SimError::Config("at least one moment spec is required".into()));
        }
        if self.n < 10 {
            return Err(SimError::Config(format!("sample size n = {} must be at least 10", self.n)));
        }
        if self.replications < 2 {
            return Err(SimError::Config(format!(
                "R = {} replications: the empirical covariance needs at least 2",
                self.replications
            )));
        }
        if self.template.model() != &self.model {
            return Err(SimError::Config("template model differs from the sampling model".into()));
        }
        if self.targets.parameters && self.template.free_count() != self.specs.len() {
            return Err(SimError::Config(format!(
                "{} moment specs for {} free parameters",
                self.specs.len(),
                self.template.free_count()
            )));
        }
        Ok(())
    }
}

/// Empirical versus theoretical covariance of one block of estimators.
#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    /// Sample covariance (divisor `R - 1`) of the `√n`-scaled deviations.
    pub empirical_cov: CovMatrix,
    pub theoretical_cov: CovMatrix,
    /// `|emp - theo| / max(|theo|, DEVIATION_FLOOR)` per entry.
    pub per_entry_dev: Matrix,
    pub max_rel_dev: f64,
    pub skewness: Vec<f64>,
    pub excess_kurtosis: Vec<f64>,
    /// Largest Jarque–Bera statistic `R/6 (γ₁² + γ₂²/4)` over coordinates.
    pub normality_stat: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationReport {
    pub moments: Summary,
    pub parameters: Option<Summary>,
    pub replications: usize,
    pub failures: usize,
    pub runtime_ms: u128,
}

impl SimulationReport {
    /// Worst relative deviation over every reported block.
    pub fn max_rel_dev(&self) -> f64 {
        let p = self.parameters.as_ref().map_or(0.0, |s| s.max_rel_dev);
        self.moments.max_rel_dev.max(p)
    }
}

/// The `index`-th output of SplitMix64 seeded with `seed`; replication `r`
/// uses `splitmix(master_seed, r)` as its stream seed, so a replication's
/// draws do not depend on how many others are run.
pub fn splitmix(seed: u64, index: u64) -> u64 {
    let mut z = seed.wrapping_add(index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Uniform on the open interval `(0, 1)`.
fn open_uniform(rng: &mut ChaCha8Rng) -> f64 {
    ((rng.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
}

/// The `n` draws of replication `r`, by inverse transform.
pub fn draw_sample(model: &DistributionModel, n: usize, master_seed: u64, r: usize) -> Result<Sample, SimError> {
    let mut rng = ChaCha8Rng::seed_from_u64(splitmix(master_seed, r as u64));
    let mut values = Vec::with_capacity(n);
    for _ in 0..n {
        values.push(model.quantile(open_uniform(&mut rng))?);
    }
    Ok(Sample::new(values)?)
}

struct Replicate {
    mu_hat: Vec<f64>,
    theta_hat: Option<Vec<f64>>,
}

fn replicate(config: &SimulationConfig, r: usize) -> Result<Replicate, SimError> {
    let sample = draw_sample(&config.model, config.n, config.master_seed, r)?;
    let mu_hat = estimate::sample_moments(&sample, &config.specs)?;
    let theta_hat = if config.targets.parameters {
        Some(estimate::solve_moments(&config.template, &config.specs, &mu_hat)?.0)
    } else {
        None
    };
    Ok(Replicate { mu_hat, theta_hat })
}

/// Run `f` for every replication on the worker pool, returning results in
/// replication order.
fn run_replications<T, F>(replications: usize, f: F) -> Vec<Result<T, SimError>>
where
    T: Send,
    F: Fn(usize) -> Result<T, SimError> + Sync + Send,
{
    crate::with_workers(|| (0..replications).into_par_iter().map(&f).collect())
}

/// Split successes from failures, aborting when more than 1% failed.
fn successes<T>(results: Vec<Result<T, SimError>>) -> Result<(Vec<T>, usize), SimError> {
    let total = results.len();
    let mut ok = Vec::with_capacity(total);
    let mut failures = 0;
    let mut first = None;
    for r in results {
        match r {
            Ok(v) => ok.push(v),
            Err(e) => {
                failures += 1;
                first.get_or_insert_with(|| e.to_string());
            }
        }
    }
    if failures as f64 > MAX_FAILURE_FRACTION * total as f64 || ok.len() < 2 {
        return Err(SimError::TooManyFailures {
            failures,
            replications: total,
            first: first.unwrap_or_default(),
        });
    }
    Ok((ok, failures))
}

pub fn run_mc(config: &SimulationConfig) -> Result<SimulationReport, SimError> {
    config.validate()?;
    let start = Instant::now();
    let theo_mu = asymcov::cov_matrix(&config.specs, &config.model, CovMethod::Auto)?;
    let mu = estimate::moment_map(&config.model, &config.specs)?;

    let (draws, failures) = successes(run_replications(config.replications, |r| replicate(config, r)))?;
    let root_n = (config.n as f64).sqrt();
    let scaled = |est: &[f64], truth: &[f64]| -> Vec<f64> {
        est.iter().zip(truth).map(|(e, t)| root_n * (e - t)).collect()
    };

    let mu_devs: Vec<Vec<f64>> = draws.iter().map(|d| scaled(&d.mu_hat, &mu)).collect();
    let moments = summarize(&mu_devs, theo_mu.clone());

    let parameters = if config.targets.parameters {
        let theta = config.template.free_params(&config.model);
        let theo = estimate::delta_cov_free(&config.template, &config.model, &config.specs, &theo_mu)?;
        let devs: Vec<Vec<f64>> = draws
            .iter()
            .map(|d| scaled(d.theta_hat.as_deref().unwrap_or_default(), &theta))
            .collect();
        Some(summarize(&devs, theo))
    } else {
        None
    };

    Ok(SimulationReport {
        moments,
        parameters,
        replications: draws.len(),
        failures,
        runtime_ms: start.elapsed().as_millis(),
    })
}

fn summarize(devs: &[Vec<f64>], theoretical_cov: CovMatrix) -> Summary {
    let k = theoretical_cov.dim();
    let r = devs.len() as f64;
    let mean: Vec<f64> = (0..k).map(|j| devs.iter().map(|d| d[j]).sum::<f64>() / r).collect();
    let mut cov = linalg::zeros(k);
    for d in devs {
        for i in 0..k {
            for j in 0..k {
                cov[(i, j)] += (d[i] - mean[i]) * (d[j] - mean[j]);
            }
        }
    }
    cov /= r - 1.0;
    let empirical_cov = CovMatrix::from_matrix(cov, CovMethod::Auto);

    let mut per_entry_dev = linalg::zeros(k);
    for i in 0..k {
        for j in 0..k {
            let theo = theoretical_cov.get(i, j);
            per_entry_dev[(i, j)] = (empirical_cov.get(i, j) - theo).abs() / theo.abs().max(DEVIATION_FLOOR);
        }
    }
    let max_rel_dev = per_entry_dev.iter().fold(0.0f64, |m, v| m.max(*v));

    let mut skewness = Vec::with_capacity(k);
    let mut excess_kurtosis = Vec::with_capacity(k);
    for j in 0..k {
        let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
        for d in devs {
            let x = d[j] - mean[j];
            m2 += x * x;
            m3 += x * x * x;
            m4 += x * x * x * x;
        }
        let (m2, m3, m4) = (m2 / r, m3 / r, m4 / r);
        skewness.push(m3 / m2.powf(1.5));
        excess_kurtosis.push(m4 / (m2 * m2) - 3.0);
    }
    let normality_stat = skewness
        .iter()
        .zip(&excess_kurtosis)
        .map(|(g1, g2)| r / 6.0 * (g1 * g1 + g2 * g2 / 4.0))
        .fold(0.0f64, f64::max);

    Summary {
        empirical_cov,
        theoretical_cov,
        per_entry_dev,
        max_rel_dev,
        skewness,
        excess_kurtosis,
        normality_stat,
    }
}

/// Fraction of (replication, parameter) pairs whose normal interval
/// `θ̂ ± z √(Σ_θ,jj / n)`, with `Σ_θ` from the delta method at `θ̂`, covers
/// the true parameter.
pub fn coverage_check(config: &SimulationConfig, confidence: f64) -> Result<f64, SimError> {
    config.validate()?;
    if !config.targets.parameters {
        return Err(SimError::Config("coverage needs parameter targets".into()));
    }
    if !(confidence > 0.0 && confidence <= 1.0) {
        return Err(SimError::Config(format!("confidence {confidence} outside (0, 1]")));
    }
    let z = if confidence == 1.0 {
        f64::INFINITY
    } else {
        special::normal_quantile(0.5 + 0.5 * confidence)
    };
    let theta = config.template.free_params(&config.model);
    let n = config.n as f64;
    let covered = |r: usize| -> Result<usize, SimError> {
        let sample = draw_sample(&config.model, config.n, config.master_seed, r)?;
        let mu_hat = estimate::sample_moments(&sample, &config.specs)?;
        let (theta_hat, _) = estimate::solve_moments(&config.template, &config.specs, &mu_hat)?;
        let fitted = config.template.model_with(&theta_hat)?;
        let cov_mu = asymcov::cov_matrix(&config.specs, &fitted, CovMethod::Auto)?;
        let cov = estimate::delta_cov_free(&config.template, &fitted, &config.specs, &cov_mu)?;
        Ok((0..theta.len())
            .filter(|&j| (theta_hat[j] - theta[j]).abs() <= z * (cov.get(j, j) / n).sqrt())
            .count())
    };
    let (hits, _) = successes(run_replications(config.replications, covered))?;
    let intervals = hits.len() * theta.len();
    Ok(hits.iter().sum::<usize>() as f64 / intervals as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use robust_lmoments_core::HTransform;

    fn unif_config(r: usize) -> SimulationConfig {
        let spec = MomentSpec::mtm(HTransform::Identity, 0.0, 0.0).unwrap();
        SimulationConfig::new(DistributionModel::uniform(0.0, 1.0).unwrap(), vec![spec], 50, r, 7)
    }

    #[test]
    fn single_replication_is_rejected() {
        assert!(matches!(run_mc(&unif_config(1)), Err(SimError::Config(_))));
    }

    #[test]
    fn uniforms_stay_open() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..10_000 {
            let u = open_uniform(&mut rng);
            assert!(u > 0.0 && u < 1.0);
        }
    }

    #[test]
    fn streams_do_not_depend_on_replication_count() {
        let m = DistributionModel::exponential(1.0).unwrap();
        let a = draw_sample(&m, 20, 99, 3).unwrap();
        let b = draw_sample(&m, 20, 99, 3).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, draw_sample(&m, 20, 99, 4).unwrap());
        assert_ne!(splitmix(0, 0), splitmix(0, 1));
    }
}
