//! Cross-checks between the independent covariance routes on a seeded corpus
//! of families, transforms and trimming placements.

use std::time::Instant;

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use robust_lmoments_core::asymcov::{self, Scenario};
use robust_lmoments_core::moments::Mode;
use robust_lmoments_core::{CovMethod, DistributionModel, HTransform, MomentSpec};

pub const REL_TOL: f64 = 1e-6;
pub const ABS_TOL: f64 = 1e-10;
/// Agreement required between the equal-proportion winsorized formula and
/// the general decomposition.
pub const EQUAL_PROPS_TOL: f64 = 1e-10;

const GRID: [f64; 4] = [0.0, 0.05, 0.1, 0.25];
/// Extra proportions that push a window past the other's lower edge, which
/// the grid alone cannot do.
const WIDE: [f64; 2] = [0.5, 0.6];

pub const SCENARIOS: [Scenario; 6] = [
    Scenario::I,
    Scenario::II,
    Scenario::III,
    Scenario::IV,
    Scenario::V,
    Scenario::VI,
];

pub fn scenario_name(s: Scenario) -> &'static str {
    match s {
        Scenario::I => "i",
        Scenario::II => "ii",
        Scenario::III => "iii",
        Scenario::IV => "iv",
        Scenario::V => "v",
        Scenario::VI => "vi",
    }
}

/// The families of the corpus. Pareto uses shape 10 so that `H(u)²` stays
/// resolvable in double precision near `u = 1` for `h(x) = x²`.
pub fn corpus_models() -> Vec<DistributionModel> {
    vec![
        DistributionModel::uniform(0.0, 1.0).unwrap(),
        DistributionModel::exponential(1.0).unwrap(),
        DistributionModel::pareto(10.0, 1.0).unwrap(),
        DistributionModel::lognormal(0.0, 0.5).unwrap(),
        DistributionModel::normal(0.0, 1.0).unwrap(),
    ]
}

/// Identity, square and log; log is replaced by the cube where the support
/// reaches below zero.
pub fn corpus_transforms(model: &DistributionModel) -> [HTransform; 3] {
    let third = if model.bounded_below() && model.quantile(0.0).is_ok_and(|x| x >= 0.0) {
        HTransform::Log
    } else {
        HTransform::Power(3.0)
    };
    [HTransform::Identity, HTransform::Power(2.0), third]
}

/// One covariance entry to audit.
#[derive(Debug, Clone)]
pub struct Case {
    pub model: DistributionModel,
    pub spec_i: MomentSpec,
    pub spec_j: MomentSpec,
    pub scenario: Scenario,
}

impl Case {
    pub fn with_mode(&self, mode: Mode) -> Case {
        Case {
            spec_i: self.spec_i.with_mode(mode),
            spec_j: self.spec_j.with_mode(mode),
            ..self.clone()
        }
    }

    pub fn label(&self) -> String {
        format!(
            "{} | {} ({},{}) | {} ({},{})",
            self.model,
            self.spec_i.transform,
            self.spec_i.a(),
            self.spec_i.b(),
            self.spec_j.transform,
            self.spec_j.a(),
            self.spec_j.b()
        )
    }
}

/// Trimming quadruples `(aᵢ, bᵢ, aⱼ, bⱼ)` grouped by scenario.
fn placements() -> Vec<(Scenario, Vec<[f64; 4]>)> {
    let mut all = Vec::new();
    for &ai in &GRID {
        for &bi in &GRID {
            for &aj in &GRID {
                for &bj in &GRID {
                    all.push([ai, bi, aj, bj]);
                }
            }
        }
    }
    // disjoint windows, i below j, and the mirror image
    for &ai in &GRID {
        for &bi in &WIDE {
            for &aj in &WIDE {
                for &bj in &GRID {
                    if 1.0 - bi <= aj {
                        all.push([ai, bi, aj, bj]);
                        all.push([aj, bj, ai, bi]);
                    }
                }
            }
        }
    }
    let probe = |q: &[f64; 4]| {
        let si = MomentSpec::mtm(HTransform::Identity, q[0], q[1]).unwrap();
        let sj = MomentSpec::mtm(HTransform::Identity, q[2], q[3]).unwrap();
        Scenario::classify(&si, &sj)
    };
    SCENARIOS
        .iter()
        .map(|&s| (s, all.iter().copied().filter(|q| probe(q) == s).collect()))
        .collect()
}

/// For every family and ordered transform pair: one placement per scenario
/// plus one equal-proportion placement, drawn with `seed`.
pub fn corpus(seed: u64) -> Vec<Case> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pick = |n: usize| (rng.next_u64() % n as u64) as usize;
    let buckets = placements();
    let mut cases = Vec::new();
    for model in corpus_models() {
        let transforms = corpus_transforms(&model);
        for ti in &transforms {
            for tj in &transforms {
                let mut make = |q: [f64; 4]| {
                    let spec_i = MomentSpec::mtm(ti.clone(), q[0], q[1]).unwrap();
                    let spec_j = MomentSpec::mtm(tj.clone(), q[2], q[3]).unwrap();
                    let scenario = Scenario::classify(&spec_i, &spec_j);
                    cases.push(Case {
                        model,
                        spec_i,
                        spec_j,
                        scenario,
                    });
                };
                for (_, bucket) in &buckets {
                    make(bucket[pick(bucket.len())]);
                }
                let (a, b) = (GRID[pick(GRID.len())], GRID[pick(GRID.len())]);
                make([a, b, a, b]);
            }
        }
    }
    cases
}

/// The values each route produced for one case.
#[derive(Debug, Clone)]
pub struct AuditRow {
    pub case: Case,
    pub values: Vec<(CovMethod, f64)>,
    /// Largest relative deviation (absolute below `ABS_TOL`) over the pairs
    /// compared at `REL_TOL`.
    pub max_rel_dev: f64,
    pub passed: bool,
    pub error: Option<String>,
}

#[derive(Debug, Clone)]
pub struct AuditReport {
    pub rows: Vec<AuditRow>,
    pub runtime_ms: u128,
}

impl AuditReport {
    pub fn passed(&self) -> bool {
        self.rows.iter().all(|r| r.passed)
    }

    pub fn failures(&self) -> usize {
        self.rows.iter().filter(|r| !r.passed).count()
    }

    pub fn max_rel_dev(&self) -> f64 {
        self.rows.iter().fold(0.0f64, |m, r| m.max(r.max_rel_dev))
    }

    /// Number of rows per scenario, in the order I..VI.
    pub fn scenario_counts(&self) -> [usize; 6] {
        let mut c = [0; 6];
        for r in &self.rows {
            let idx = SCENARIOS.iter().position(|&s| s == r.case.scenario).unwrap();
            c[idx] += 1;
        }
        c
    }
}

/// `|x - y| / max(|x|, |y|, ABS_TOL / rel)`: relative, except that values
/// within `ABS_TOL` of zero are compared absolutely. A pair agrees when this
/// is at most `rel`.
fn scaled_dev(x: f64, y: f64, rel: f64) -> f64 {
    (x - y).abs() / x.abs().max(y.abs()).max(ABS_TOL / rel)
}

fn check(case: Case, methods: &[CovMethod], exact_pair: Option<(CovMethod, CovMethod)>) -> AuditRow {
    let mut values = Vec::new();
    for &m in methods {
        match asymcov::sigma(&case.model, &case.spec_i, &case.spec_j, m) {
            Ok((v, _)) => values.push((m, v)),
            Err(e) => {
                return AuditRow {
                    case,
                    values,
                    max_rel_dev: f64::INFINITY,
                    passed: false,
                    error: Some(format!("{m}: {e}")),
                }
            }
        }
    }
    let mut max_rel_dev = 0.0f64;
    let mut passed = true;
    for (x, (mx, vx)) in values.iter().enumerate() {
        for (my, vy) in &values[x + 1..] {
            let tight = exact_pair.is_some_and(|(p, q)| (p, q) == (*mx, *my) || (q, p) == (*mx, *my));
            if tight {
                passed &= scaled_dev(*vx, *vy, EQUAL_PROPS_TOL) <= EQUAL_PROPS_TOL;
            } else {
                let dev = scaled_dev(*vx, *vy, REL_TOL);
                max_rel_dev = max_rel_dev.max(dev);
                passed &= dev <= REL_TOL;
            }
        }
    }
    AuditRow {
        case,
        values,
        max_rel_dev,
        passed,
        error: None,
    }
}

/// Trimmed moments: α-form, kernel form and, where the windows interleave,
/// the closed form must agree.
pub fn equivalence_audit(cases: &[Case]) -> AuditReport {
    let start = Instant::now();
    let rows = crate::with_workers(|| {
        cases
            .par_iter()
            .map(|c| {
            let c = c.with_mode(Mode::Mtm);
            let mut methods = vec![CovMethod::AlphaForm, CovMethod::KernelForm];
            if asymcov::interleaved(&c.spec_i, &c.spec_j) || asymcov::interleaved(&c.spec_j, &c.spec_i) {
                methods.push(CovMethod::ClosedScenarioI);
            }
            check(c, &methods, None)
        })
        .collect()
    });
    AuditReport {
        rows,
        runtime_ms: start.elapsed().as_millis(),
    }
}

/// Whether `H'` is finite at every atom carrying positive weight.
pub fn finite_atom_density(case: &Case) -> bool {
    [&case.spec_i, &case.spec_j].iter().all(|s| {
        let h = s.composite(&case.model);
        (s.a() == 0.0 || h.derivative(s.a()).is_ok()) && (s.b() == 0.0 || h.derivative(s.upper()).is_ok())
    })
}

/// Winsorized moments: the nine-term decomposition against the α-form, and
/// for equal proportions the specialised formula against the decomposition
/// at the tighter tolerance.
pub fn mwm_audit(cases: &[Case]) -> AuditReport {
    let start = Instant::now();
    let rows = crate::with_workers(|| {
        cases
        .par_iter()
        .map(|c| c.with_mode(Mode::Mwm))
        .filter(finite_atom_density)
        .map(|c| {
            let equal = c.spec_i.a() == c.spec_j.a() && c.spec_i.b() == c.spec_j.b();
            let mut methods = vec![CovMethod::AlphaForm, CovMethod::MwmDecomposition];
            if equal {
                methods.push(CovMethod::EqualProps);
            }
            check(c, &methods, Some((CovMethod::MwmDecomposition, CovMethod::EqualProps)))
        })
        .collect()
    });
    AuditReport {
        rows,
        runtime_ms: start.elapsed().as_millis(),
    }
}
