//! Expected values here are produced by oracles that share no code with the
//! crate: closed-form antiderivatives, central finite differences and a
//! composite Gauss–Legendre rule built from scratch below.

use robust_lmoments_core::asymcov::{self, CovMethod};
use robust_lmoments_core::estimate::{self, FamilyTemplate};
use robust_lmoments_core::moments::{self, Sample};
use robust_lmoments_core::{CompositeH, DistributionModel, Family, HTransform, MomentSpec};

/// Nodes and weights of the `m`-point Gauss–Legendre rule on [-1, 1].
fn legendre_rule(m: usize) -> Vec<(f64, f64)> {
    let mut rule = Vec::with_capacity(m);
    for i in 0..m {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (m as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=m {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = m as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        rule.push((x, 2.0 / ((1.0 - x * x) * dp * dp)));
    }
    rule
}

/// Composite Gauss–Legendre over `[a, b]` split at `breaks`, `panels` equal
/// panels per piece.
fn gl(f: &dyn Fn(f64) -> f64, a: f64, b: f64, breaks: &[f64], panels: usize) -> f64 {
    let rule = legendre_rule(20);
    let mut pts = vec![a, b];
    pts.extend(breaks.iter().copied().filter(|&x| x > a && x < b));
    pts.sort_by(f64::total_cmp);
    let mut total = 0.0;
    for w in pts.windows(2) {
        let h = (w[1] - w[0]) / panels as f64;
        for p in 0..panels {
            let lo = w[0] + p as f64 * h;
            for &(x, wt) in &rule {
                total += 0.5 * h * wt * f(lo + 0.5 * h * (x + 1.0));
            }
        }
    }
    total
}

fn kernel(v: f64, w: f64) -> f64 {
    v.min(w) - v * w
}

/// `∫∫ K(v,w) Hⱼ'(v) Hᵢ'(w)` over the two windows, by tensor Gauss–Legendre.
fn kernel_oracle(
    dh_i: &dyn Fn(f64) -> f64,
    dh_j: &dyn Fn(f64) -> f64,
    (ai, ui): (f64, f64),
    (aj, uj): (f64, f64),
) -> f64 {
    let outer = |w: f64| dh_i(w) * gl(&|v| kernel(v, w) * dh_j(v), aj, uj, &[w], 4);
    gl(&outer, ai, ui, &[aj, uj], 8)
}

fn unif() -> DistributionModel {
    DistributionModel::uniform(0.0, 1.0).unwrap()
}

fn exp1() -> DistributionModel {
    DistributionModel::exponential(1.0).unwrap()
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300)
}

/// `∫ -ln(1-u) du = (1-u) ln(1-u) + u`
fn exp_antiderivative(u: f64) -> f64 {
    (1.0 - u) * (1.0 - u).ln() + u
}

#[test]
fn exponential_quantile_matches_closed_form() {
    let m = DistributionModel::exponential(2.0).unwrap();
    let expected = -2.0 * (0.25f64).ln();
    assert!(rel(m.quantile(0.75).unwrap(), expected) < 1e-14);
    assert!((expected - 2.772589).abs() < 1e-6);
}

#[test]
fn composite_value_and_derivative_of_squared_exponential() {
    let m = exp1();
    let t = HTransform::Power(2.0);
    let h = CompositeH::new(&m, &t);
    let expected = 2f64.ln().powi(2);
    assert!(rel(h.value(0.5).unwrap(), expected) < 1e-14);
    assert!((expected - 0.480453).abs() < 1e-6);

    let step = 1e-6;
    let fd = (h.value(0.5 + step).unwrap() - h.value(0.5 - step).unwrap()) / (2.0 * step);
    let d = h.derivative(0.5).unwrap();
    assert!(rel(d, fd) < 1e-8, "{d} vs {fd}");
    assert!((d - 2.772589).abs() < 1e-6);
}

#[test]
fn exponential_identity_derivative() {
    let m = exp1();
    let t = HTransform::Identity;
    let h = CompositeH::new(&m, &t);
    assert!(rel(h.derivative(0.5).unwrap(), 2.0) < 1e-14);
}

#[test]
fn trimmed_exponential_mean_matches_antiderivative() {
    let spec = MomentSpec::mtm(HTransform::Identity, 0.25, 0.25).unwrap();
    let expected = 2.0 * (exp_antiderivative(0.75) - exp_antiderivative(0.25));
    let quad_oracle = 2.0 * gl(&|u| -(1.0 - u).ln(), 0.25, 0.75, &[], 8);
    assert!(rel(expected, quad_oracle) < 1e-13);
    let got = moments::population_trimmed_moment(&exp1(), &spec).unwrap();
    assert!(rel(got, expected) < 1e-10);
    assert!((got - 0.738376).abs() < 1e-6);
}

#[test]
fn winsorized_exponential_mean_matches_antiderivative() {
    let spec = MomentSpec::mwm(HTransform::Identity, 0.25, 0.25).unwrap();
    let h = |u: f64| -(1.0 - u).ln();
    let mid = exp_antiderivative(0.75) - exp_antiderivative(0.25);
    let expected = 0.25 * h(0.25) + mid + 0.25 * h(0.75);
    let quad_oracle = 0.25 * h(0.25) + gl(&h, 0.25, 0.75, &[], 8) + 0.25 * h(0.75);
    assert!(rel(expected, quad_oracle) < 1e-13);
    let got = moments::population_winsorized_moment(&exp1(), &spec).unwrap();
    assert!(rel(got, expected) < 1e-10);
    assert!((got - 0.787682).abs() < 1e-6);
}

#[test]
fn integration_by_parts_identities() {
    let m = unif();
    let t = HTransform::Identity;
    let h = CompositeH::new(&m, &t);
    assert!((asymcov::int_i(&h, 0.0, 1.0).unwrap() - 0.5).abs() < 1e-14);
    assert!((asymcov::int_ibar(&h, 0.0, 1.0).unwrap() - 0.5).abs() < 1e-14);

    let e = exp1();
    let h = CompositeH::new(&e, &t);
    // Ī(a,b) = ∫ₐᵇ (1-v) H'(v) dv, here with H'(v) = 1/(1-v)
    let direct = gl(&|v| (1.0 - v) / (1.0 - v), 0.25, 0.75, &[], 4);
    let got = asymcov::int_ibar(&h, 0.25, 0.75).unwrap();
    assert!(rel(got, direct) < 1e-10, "{got} vs {direct}");
    let direct_i = gl(&|v| v / (1.0 - v), 0.25, 0.75, &[], 8);
    let got_i = asymcov::int_i(&h, 0.25, 0.75).unwrap();
    assert!(rel(got_i, direct_i) < 1e-10);
}

#[test]
fn alpha_untrimmed_uniform_at_half() {
    let spec = MomentSpec::mtm(HTransform::Identity, 0.0, 0.0).unwrap();
    let expected = gl(&|v| 1.0 - v, 0.5, 1.0, &[], 1) / 0.5;
    let got = asymcov::alpha(0.5, &unif(), &spec).unwrap();
    assert!(rel(got, expected) < 1e-12);
    assert!((got - 0.25).abs() < 1e-12);
}

#[test]
fn alpha_vanishes_past_the_window() {
    let mtm = MomentSpec::mtm(HTransform::Identity, 0.1, 0.2).unwrap();
    let mwm = MomentSpec::mwm(HTransform::Identity, 0.1, 0.2).unwrap();
    for u in [0.8, 0.85, 0.99] {
        assert_eq!(asymcov::alpha(u, &exp1(), &mtm).unwrap(), 0.0);
    }
    for u in [0.81, 0.9, 0.99] {
        assert_eq!(asymcov::alpha(u, &exp1(), &mwm).unwrap(), 0.0);
    }
}

#[test]
fn untrimmed_uniform_variance_all_methods() {
    let oracle = kernel_oracle(&|_| 1.0, &|_| 1.0, (0.0, 1.0), (0.0, 1.0));
    assert!((oracle - 1.0 / 12.0).abs() < 1e-13);
    let spec = MomentSpec::mtm(HTransform::Identity, 0.0, 0.0).unwrap();
    for method in [
        CovMethod::AlphaForm,
        CovMethod::KernelForm,
        CovMethod::ClosedScenarioI,
        CovMethod::EqualProps,
        CovMethod::Auto,
    ] {
        let (v, _) = asymcov::sigma(&unif(), &spec, &spec, method).unwrap();
        assert!((v - oracle).abs() < 1e-9, "{method}: {v}");
    }
    let w = spec.with_mode(moments::Mode::Mwm);
    for method in [CovMethod::AlphaForm, CovMethod::EqualProps, CovMethod::MwmDecomposition] {
        let (v, _) = asymcov::sigma(&unif(), &w, &w, method).unwrap();
        assert!((v - oracle).abs() < 1e-9, "mwm {method}: {v}");
    }
}

#[test]
fn quarter_trimmed_uniform_variance() {
    let oracle = 4.0 * kernel_oracle(&|_| 1.0, &|_| 1.0, (0.25, 0.75), (0.25, 0.75));
    assert!((oracle - 1.0 / 6.0).abs() < 1e-13);
    let spec = MomentSpec::mtm(HTransform::Identity, 0.25, 0.25).unwrap();
    let v = asymcov::sigma_mtm_equal_props(&unif(), &spec, &spec).unwrap();
    assert!((v - oracle).abs() < 1e-9);
    for method in [CovMethod::AlphaForm, CovMethod::KernelForm, CovMethod::ClosedScenarioI] {
        let (v, _) = asymcov::sigma(&unif(), &spec, &spec, method).unwrap();
        assert!((v - oracle).abs() < 1e-9, "{method}: {v}");
    }
}

#[test]
fn closed_form_on_interleaved_uniform_windows() {
    let si = MomentSpec::mtm(HTransform::Identity, 0.1, 0.3).unwrap();
    let sj = MomentSpec::mtm(HTransform::Identity, 0.2, 0.1).unwrap();
    let gamma = 1.0 / (0.6 * 0.7);
    let oracle = gamma * kernel_oracle(&|_| 1.0, &|_| 1.0, (0.1, 0.7), (0.2, 0.9));
    let closed = asymcov::sigma_mtm_closed(&unif(), &si, &sj).unwrap();
    let kernel = asymcov::sigma_mtm_kernel_form(&unif(), &si, &sj).unwrap();
    assert!(rel(closed, oracle) < 1e-7, "{closed} vs {oracle}");
    assert!(rel(kernel, oracle) < 1e-7);
    assert!(rel(asymcov::sigma_mtm_closed(&unif(), &sj, &si).unwrap(), oracle) < 1e-7);
}

#[test]
fn closed_form_on_interleaved_exponential_windows() {
    let e = exp1();
    let dh = |v: f64| 1.0 / (1.0 - v);
    let dh2 = |v: f64| -2.0 * (1.0 - v).ln() / (1.0 - v);
    let si = MomentSpec::mtm(HTransform::Identity, 0.05, 0.25).unwrap();
    let sj = MomentSpec::mtm(HTransform::Power(2.0), 0.1, 0.1).unwrap();
    let gamma = 1.0 / (0.7 * 0.8);
    let oracle = gamma * kernel_oracle(&dh, &dh2, (0.05, 0.75), (0.1, 0.9));
    let closed = asymcov::sigma_mtm_closed(&e, &si, &sj).unwrap();
    assert!(rel(closed, oracle) < 1e-7, "{closed} vs {oracle}");
}

#[test]
fn tenth_trimmed_exponential_equal_props() {
    let spec = MomentSpec::mtm(HTransform::Identity, 0.1, 0.1).unwrap();
    let dh = |v: f64| 1.0 / (1.0 - v);
    let oracle = kernel_oracle(&dh, &dh, (0.1, 0.9), (0.1, 0.9)) / 0.64;
    let v = asymcov::sigma_mtm_equal_props(&exp1(), &spec, &spec).unwrap();
    assert!(rel(v, oracle) < 1e-7, "{v} vs {oracle}");
}

#[test]
fn disjoint_windows_are_positive_and_match_oracle() {
    let si = MomentSpec::mtm(HTransform::Identity, 0.0, 0.6).unwrap();
    let sj = MomentSpec::mtm(HTransform::Identity, 0.5, 0.0).unwrap();
    let oracle = kernel_oracle(&|_| 1.0, &|_| 1.0, (0.0, 0.4), (0.5, 1.0)) / (0.4 * 0.5);
    let v = asymcov::sigma_mtm_kernel_form(&unif(), &si, &sj).unwrap();
    assert!(v > 0.0);
    assert!(rel(v, oracle) < 1e-8);
    let swapped = asymcov::sigma_mtm_kernel_form(&unif(), &sj, &si).unwrap();
    assert!(rel(swapped, v) < 1e-10);
    assert!(asymcov::sigma_mtm_closed(&unif(), &si, &sj).is_err());
}

/// Winsorized `α(u)` for `H(v) = v` on `[0, 1]`, straight from its definition.
fn uniform_mwm_alpha(u: f64, a: f64, b: f64) -> f64 {
    let hi = 1.0 - b;
    let lo = u.max(a);
    let body = if lo < hi { gl(&|v| 1.0 - v, lo, hi, &[], 1) } else { 0.0 };
    let low = if a >= u { a * (1.0 - a) } else { 0.0 };
    let high = if hi >= u { b * b } else { 0.0 };
    (body + low + high) / (1.0 - u)
}

#[test]
fn quarter_winsorized_uniform_terms() {
    let oracle = gl(
        &|u| uniform_mwm_alpha(u, 0.25, 0.25).powi(2),
        0.0,
        0.75,
        &[0.25],
        16,
    );
    assert!((oracle - 0.135417).abs() < 1e-6);
    let spec = MomentSpec::mwm(HTransform::Identity, 0.25, 0.25).unwrap();
    let general = asymcov::mwm_terms(&unif(), &spec, &spec).unwrap();
    let special = asymcov::mwm_equal_props_terms(&unif(), &spec, &spec).unwrap();
    let hand = [
        [1.0 / 24.0, 0.015625, 0.015625],
        [0.015625, 0.01171875, 0.00390625],
        [0.015625, 0.00390625, 0.01171875],
    ];
    for s in 0..3 {
        for t in 0..3 {
            assert!((general.terms[s][t] - hand[s][t]).abs() < 1e-12, "general [{s}][{t}]");
            assert!((special.terms[s][t] - hand[s][t]).abs() < 1e-12, "special [{s}][{t}]");
        }
    }
    assert!((general.total() - oracle).abs() < 1e-10);
    let alpha = asymcov::sigma_alpha_form(&unif(), &spec, &spec).unwrap();
    assert!((alpha - oracle).abs() < 1e-10);
}

#[test]
fn identical_specs_give_constant_matrix() {
    let s = MomentSpec::mtm(HTransform::Identity, 0.1, 0.2).unwrap();
    let m = asymcov::cov_matrix(&[s.clone(), s], &exp1(), CovMethod::Auto).unwrap();
    let v = m.get(0, 0);
    for (i, j) in [(0, 1), (1, 0), (1, 1)] {
        assert!(rel(m.get(i, j), v) < 1e-12);
    }
    assert!(m.is_psd());
}

#[test]
fn fit_quarter_trimmed_exponential() {
    let c = 2.0 * (exp_antiderivative(0.75) - exp_antiderivative(0.25));
    let spec = MomentSpec::mtm(HTransform::Identity, 0.25, 0.25).unwrap();
    let sample = Sample::from_slice(&[1.0, 2.0, 3.0, 4.0]).unwrap();
    let template = FamilyTemplate::family_default(Family::Exponential);
    let fit = estimate::fit(&template, &sample, &[spec.clone()]).unwrap();
    assert_eq!(fit.mu_hat[0], 2.5);
    assert!(rel(fit.theta_hat[0], 2.5 / c) < 1e-9);
    assert!((fit.theta_hat[0] - 3.385809).abs() < 1e-6);

    // delta method for a pure scale family: Σθ = Σμ / c²
    let ratio = fit.cov_theta.get(0, 0) / fit.cov_mu.get(0, 0);
    assert!(rel(ratio, 1.0 / (c * c)) < 1e-6, "{ratio}");
}

#[test]
fn delta_cov_untrimmed_exponential() {
    let theta = 1.7;
    let model = DistributionModel::exponential(theta).unwrap();
    let spec = MomentSpec::mtm(HTransform::Identity, 0.0, 0.0).unwrap();
    let cov_mu = asymcov::cov_matrix(&[spec.clone()], &model, CovMethod::Auto).unwrap();
    assert!(rel(cov_mu.get(0, 0), theta * theta) < 1e-9);
    let cov_theta = estimate::delta_cov(&model, &[spec], &cov_mu).unwrap();
    assert!(rel(cov_theta.get(0, 0), theta * theta) < 1e-6);
}
