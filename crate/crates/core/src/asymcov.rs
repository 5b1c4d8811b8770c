//! Asymptotic variance–covariance of trimmed and winsorized sample moments.
//!
//! Several routes to the same entry `σ²ᵢⱼ` are provided:
//!
//! * [`sigma_alpha_form`]: `∫₀¹ αᵢ(u) αⱼ(u) du` with each `α` evaluated by
//!   quadrature of `(1-v) J(v) H'(v)`. Valid for both modes and any pair of
//!   trimming windows; this is the reference oracle.
//! * [`sigma_mtm_kernel_form`]: `Γ ∫∫ K(v,w) Hⱼ'(v) Hᵢ'(w) dv dw` over the
//!   product of the two windows, by nested adaptive quadrature.
//! * [`sigma_mtm_closed`]: closed form when the windows interleave as
//!   `aᵢ <= aⱼ < 1-bᵢ <= 1-bⱼ` (or with `i`/`j` swapped). Only
//!   one-dimensional integrals of `H` and `HᵢHⱼ` remain.
//! * [`sigma_mtm_equal_props`]: the special case `aᵢ = aⱼ`, `bᵢ = bⱼ`.
//! * [`sigma_mwm_decomposition`] / [`sigma_mwm_equal_props`]: the winsorized
//!   variance split into nine pieces `V_st`, one per pair of
//!   (window, lower atom, upper atom) contributions.
//!
//! Endpoint terms of the form `w · H(u)` with `w = 0` are dropped without
//! evaluating `H(u)`; with a finite variance, `u H(u) -> 0` at the ends of the
//! unit interval. An endpoint term with positive weight at an unbounded end
//! raises [`Error::EndpointDivergence`].

use alloc::boxed::Box;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use crate::error::{Error, Result};
use crate::linalg::{self, Matrix};
use crate::models::{CompositeH, DistributionModel};
use crate::moments::{integral_h, integral_hh, Mode, MomentSpec};
use crate::quad::{self, Tolerance};

/// `K(v, w) = min(v, w) - v w`, the covariance kernel of the uniform
/// empirical process.
pub fn kernel_k(v: f64, w: f64) -> f64 {
    v.min(w) - v * w
}

/// `Γ = [(1-aᵢ-bᵢ)(1-aⱼ-bⱼ)]⁻¹`
pub fn gamma_factor(spec_i: &MomentSpec, spec_j: &MomentSpec) -> f64 {
    1.0 / ((1.0 - spec_i.a() - spec_i.b()) * (1.0 - spec_j.a() - spec_j.b()))
}

/// Evaluates `weight · f()` and skips `f` entirely when `weight == 0`.
fn weighted<F>(weight: f64, f: F) -> Result<f64>
where
    F: FnOnce() -> Result<f64>,
{
    if weight == 0.0 {
        Ok(0.0)
    } else {
        Ok(weight * f()?)
    }
}

fn h_at(h: &CompositeH<'_>, u: f64) -> Result<f64> {
    h.value(u).map_err(|e| match e {
        Error::InfiniteQuantile { .. } | Error::TransformDomain { .. } => {
            Error::EndpointDivergence { u }
        }
        other => other,
    })
}

/// `I(a,b) = ∫ₐᵇ v H'(v) dv = b H(b) - a H(a) - ∫ₐᵇ H(v) dv`
pub fn int_i(h: &CompositeH<'_>, a: f64, b: f64) -> Result<f64> {
    if a == b {
        return Ok(0.0);
    }
    let hb = weighted(b, || h_at(h, b))?;
    let ha = weighted(a, || h_at(h, a))?;
    Ok(hb - ha - integral_h(h, a, b)?)
}

/// `Ī(a,b) = ∫ₐᵇ (1-v) H'(v) dv = (1-b) H(b) - (1-a) H(a) + ∫ₐᵇ H(v) dv`
pub fn int_ibar(h: &CompositeH<'_>, a: f64, b: f64) -> Result<f64> {
    if a == b {
        return Ok(0.0);
    }
    let hb = weighted(1.0 - b, || h_at(h, b))?;
    let ha = weighted(1.0 - a, || h_at(h, a))?;
    Ok(hb - ha + integral_h(h, a, b)?)
}

/// Weights-generating constant on the window: `(1-a-b)⁻¹` for trimmed,
/// `1` for winsorized moments.
fn window_weight(spec: &MomentSpec) -> f64 {
    match spec.mode {
        Mode::Mtm => 1.0 / (1.0 - spec.a() - spec.b()),
        Mode::Mwm => 1.0,
    }
}

/// `α(u)` for a single coordinate.
///
/// Trimmed: `(1-u)⁻¹ ∫ᵤ¹ (1-v) J(v) H'(v) dv` with `J = (1-a-b)⁻¹` on the
/// window. Winsorized: the same integral with `J = 1`, plus the atoms
/// `1{a >= u} a(1-a) H'(a)` and `1{1-b >= u} b² H'(1-b)`.
pub fn alpha(u: f64, model: &DistributionModel, spec: &MomentSpec) -> Result<f64> {
    alpha_with(u, model, spec, inner_tolerance(model, spec)?)
}

/// Tolerance for integrals over part of a window: relative as usual, with an
/// absolute floor tied to `∫ min(v, 1-v) |H'(v)| dv` over the whole window.
/// Near `u = 1` the partial integrals shrink to nothing and a purely relative
/// target would ask for accuracy below double-precision resolution of `u`.
fn inner_tolerance(model: &DistributionModel, spec: &MomentSpec) -> Result<Tolerance> {
    let h = spec.composite(model);
    let scale = quad::integrate(
        |v| Ok(v.min(1.0 - v) * libm::fabs(h.derivative(v)?)),
        spec.a(),
        spec.upper(),
        Tolerance::ONE_D.with_rel(1e-6),
    )?
    .value;
    let tol = Tolerance::ONE_D;
    Ok(Tolerance {
        abs: libm::fmax(tol.abs, 1e-10 * scale),
        ..tol
    })
}

fn alpha_with(u: f64, model: &DistributionModel, spec: &MomentSpec, tol: Tolerance) -> Result<f64> {
    if !(u > 0.0 && u < 1.0) {
        return Err(Error::ProbabilityDomain { u });
    }
    let h = spec.composite(model);
    let lo = u.max(spec.a());
    let hi = spec.upper();
    let body = if lo < hi {
        window_weight(spec)
            * quad::integrate(|v| Ok((1.0 - v) * h.derivative(v)?), lo, hi, tol)?.value
    } else {
        0.0
    };
    let atoms = match spec.mode {
        Mode::Mtm => 0.0,
        Mode::Mwm => {
            let a = spec.a();
            let b = spec.b();
            let low = if a >= u {
                weighted(a * (1.0 - a), || h.derivative(a))?
            } else {
                0.0
            };
            let high = if hi >= u {
                weighted(b * b, || h.derivative(hi))?
            } else {
                0.0
            };
            low + high
        }
    };
    Ok((body + atoms) / (1.0 - u))
}

/// `σ²ᵢⱼ = ∫₀¹ αᵢ(u) αⱼ(u) du`, valid for every mode and trimming order.
pub fn sigma_alpha_form(
    model: &DistributionModel,
    spec_i: &MomentSpec,
    spec_j: &MomentSpec,
) -> Result<f64> {
    // α vanishes beyond its window's upper edge, so the product does too.
    let end = spec_i.upper().min(spec_j.upper());
    let breaks = [spec_i.a(), spec_j.a(), spec_i.upper(), spec_j.upper()];
    let tol_i = inner_tolerance(model, spec_i)?;
    let tol_j = inner_tolerance(model, spec_j)?;
    quad::integrate_with_breaks(
        |u| Ok(alpha_with(u, model, spec_i, tol_i)? * alpha_with(u, model, spec_j, tol_j)?),
        0.0,
        end,
        &breaks,
        Tolerance::ONE_D,
    )
    .map(|r| r.value)
}

/// `∫∫ K(v,w) Hⱼ'(v) Hᵢ'(w) dv dw` over `[aᵢ,1-bᵢ] × [aⱼ,1-bⱼ]` without `Γ`.
pub fn kernel_integral(
    model: &DistributionModel,
    spec_i: &MomentSpec,
    spec_j: &MomentSpec,
) -> Result<f64> {
    let h_i = spec_i.composite(model);
    let h_j = spec_j.composite(model);
    let tol = Tolerance::TWO_D;
    // |K(v,w)| <= min(v, 1-v), so the inner integral is bounded by the same scale
    let inner_tol = Tolerance {
        rel: tol.rel,
        ..inner_tolerance(model, spec_j)?
    };
    let (aj, bj) = (spec_j.a(), spec_j.upper());
    let inner = |w: f64| -> Result<f64> {
        quad::integrate_with_breaks(
            |v| Ok(kernel_k(v, w) * h_j.derivative(v)?),
            aj,
            bj,
            &[w],
            inner_tol,
        )
        .map(|r| r.value)
    };
    quad::integrate_with_breaks(
        |w| Ok(h_i.derivative(w)? * inner(w)?),
        spec_i.a(),
        spec_i.upper(),
        &[aj, bj],
        tol,
    )
    .map(|r| r.value)
}

fn require_mode(mode: Mode, specs: [&MomentSpec; 2]) -> Result<()> {
    if specs.iter().all(|s| s.mode == mode) {
        Ok(())
    } else {
        Err(Error::ModeMismatch {
            expected: mode.name(),
        })
    }
}

/// Kernel double-integral form `Γ ∫∫ K Hⱼ' Hᵢ'` for trimmed moments.
pub fn sigma_mtm_kernel_form(
    model: &DistributionModel,
    spec_i: &MomentSpec,
    spec_j: &MomentSpec,
) -> Result<f64> {
    require_mode(Mode::Mtm, [spec_i, spec_j])?;
    Ok(gamma_factor(spec_i, spec_j) * kernel_integral(model, spec_i, spec_j)?)
}

/// Relative placement of the two trimming windows `[aᵢ, 1-bᵢ]`, `[aⱼ, 1-bⱼ]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Scenario {
    /// `aᵢ <= aⱼ <= 1-bᵢ <= 1-bⱼ`
    I,
    /// `aᵢ <= 1-bᵢ <= aⱼ <= 1-bⱼ` (disjoint, i below j)
    II,
    /// `aᵢ <= aⱼ <= 1-bⱼ <= 1-bᵢ` (j nested in i)
    III,
    /// `aⱼ <= 1-bⱼ <= aᵢ <= 1-bᵢ` (disjoint, j below i)
    IV,
    /// `aⱼ <= aᵢ <= 1-bⱼ <= 1-bᵢ`
    V,
    /// `aⱼ <= aᵢ <= 1-bᵢ <= 1-bⱼ` (i nested in j)
    VI,
}

impl Scenario {
    /// First matching scenario in the order I..VI.
    pub fn classify(spec_i: &MomentSpec, spec_j: &MomentSpec) -> Scenario {
        let (ai, ui, bi) = (spec_i.a(), spec_i.upper(), spec_i.b());
        let (aj, uj, bj) = (spec_j.a(), spec_j.upper(), spec_j.b());
        // 1-bᵢ <= 1-bⱼ  <=>  bⱼ <= bᵢ
        if ai <= aj && aj <= ui && bj <= bi {
            Scenario::I
        } else if ui <= aj {
            Scenario::II
        } else if ai <= aj && bi <= bj {
            Scenario::III
        } else if uj <= ai {
            Scenario::IV
        } else if aj <= ai && ai <= uj && bi <= bj {
            Scenario::V
        } else {
            Scenario::VI
        }
    }
}

/// Whether `aᵢ <= aⱼ < 1-bᵢ <= 1-bⱼ` holds for the pair as given.
pub fn interleaved(spec_i: &MomentSpec, spec_j: &MomentSpec) -> bool {
    spec_i.a() <= spec_j.a() && spec_j.a() < spec_i.upper() && spec_j.b() <= spec_i.b()
}

fn equal_props(spec_i: &MomentSpec, spec_j: &MomentSpec) -> bool {
    spec_i.a() == spec_j.a() && spec_i.b() == spec_j.b()
}

/// The closed-form `V₁₁ = ∫∫ K Hⱼ' Hᵢ'` for `aᵢ <= aⱼ < 1-bᵢ <= 1-bⱼ`
/// (pair taken as given; no swapping).
///
/// The term `-aⱼ Hᵢ(aⱼ) ∫_{1-bᵢ}^{1-bⱼ} Hⱼ` carries `Hᵢ`, as produced by the
/// integration by parts of `∫ w Hᵢ'(w) dw`; writing `Hⱼ(aⱼ)` there gives a
/// different (wrong) value whenever `Hᵢ != Hⱼ`.
pub fn closed_v11(
    model: &DistributionModel,
    spec_i: &MomentSpec,
    spec_j: &MomentSpec,
) -> Result<f64> {
    if !interleaved(spec_i, spec_j) {
        return Err(ordering_error(spec_i, spec_j));
    }
    let h_i = spec_i.composite(model);
    let h_j = spec_j.composite(model);
    let (ai, bi, ui) = (spec_i.a(), spec_i.b(), spec_i.upper());
    let (aj, bj, uj) = (spec_j.a(), spec_j.b(), spec_j.upper());

    let hi_mid = integral_h(&h_i, aj, ui)?;
    let hj_mid = integral_h(&h_j, aj, ui)?;
    let hihj_mid = integral_hh(&h_i, &h_j, aj, ui)?;

    let mut v = 0.0;
    if ai < aj {
        v += int_i(&h_i, ai, aj)? * int_ibar(&h_j, aj, uj)?;
    }
    v += weighted(bj, || Ok(h_at(&h_j, uj)? * int_i(&h_i, aj, ui)?))?;
    v -= weighted(aj, || Ok(h_at(&h_j, aj)? * int_ibar(&h_i, aj, ui)?))?;
    v -= weighted(bi, || Ok(h_at(&h_i, ui)? * hj_mid))?;
    v += hihj_mid;
    v -= weighted(aj, || Ok(h_at(&h_i, aj)? * hj_mid))?;
    v -= hi_mid * hj_mid;
    if ui < uj {
        let hj_tail = integral_h(&h_j, ui, uj)?;
        v += ui * h_at(&h_i, ui)? * hj_tail;
        v -= weighted(aj, || Ok(h_at(&h_i, aj)? * hj_tail))?;
        v -= hi_mid * hj_tail;
    }
    Ok(v)
}

fn ordering_error(spec_i: &MomentSpec, spec_j: &MomentSpec) -> Error {
    Error::OrderingViolation {
        a_i: spec_i.a(),
        b_i: spec_i.b(),
        a_j: spec_j.a(),
        b_j: spec_j.b(),
    }
}

/// `V₁₁` by the closed form, swapping the pair if needed.
fn closed_v11_either(
    model: &DistributionModel,
    spec_i: &MomentSpec,
    spec_j: &MomentSpec,
) -> Result<f64> {
    if interleaved(spec_i, spec_j) {
        closed_v11(model, spec_i, spec_j)
    } else if interleaved(spec_j, spec_i) {
        closed_v11(model, spec_j, spec_i)
    } else {
        Err(ordering_error(spec_i, spec_j))
    }
}

/// Closed form `σ²ᵢⱼ = Γ V₁₁` for interleaved trimming windows.
pub fn sigma_mtm_closed(
    model: &DistributionModel,
    spec_i: &MomentSpec,
    spec_j: &MomentSpec,
) -> Result<f64> {
    require_mode(Mode::Mtm, [spec_i, spec_j])?;
    Ok(gamma_factor(spec_i, spec_j) * closed_v11_either(model, spec_i, spec_j)?)
}

/// `Δ = a H(a) + ∫_a^{1-b} H + b H(1-b)`
fn delta(h: &CompositeH<'_>, a: f64, b: f64) -> Result<f64> {
    let u = 1.0 - b;
    Ok(weighted(a, || h_at(h, a))? + integral_h(h, a, u)? + weighted(b, || h_at(h, u))?)
}

/// `a Hᵢ(a)Hⱼ(a) + b Hᵢ(1-b)Hⱼ(1-b) + ∫ HᵢHⱼ - ΔᵢΔⱼ` (no `Γ`).
fn equal_props_v11(
    model: &DistributionModel,
    spec_i: &MomentSpec,
    spec_j: &MomentSpec,
) -> Result<f64> {
    if !equal_props(spec_i, spec_j) {
        return Err(Error::UnequalProportions);
    }
    let h_i = spec_i.composite(model);
    let h_j = spec_j.composite(model);
    let (a, b) = (spec_i.a(), spec_i.b());
    let u = 1.0 - b;
    let low = weighted(a, || Ok(h_at(&h_i, a)? * h_at(&h_j, a)?))?;
    let high = weighted(b, || Ok(h_at(&h_i, u)? * h_at(&h_j, u)?))?;
    let cross = integral_hh(&h_i, &h_j, a, u)?;
    Ok(low + high + cross - delta(&h_i, a, b)? * delta(&h_j, a, b)?)
}

/// Trimmed moments with common proportions `a`, `b`:
/// `Γ [a Hᵢ(a)Hⱼ(a) + b Hᵢ(1-b)Hⱼ(1-b) + ∫ₐ^{1-b} HᵢHⱼ - ΔᵢΔⱼ]`.
pub fn sigma_mtm_equal_props(
    model: &DistributionModel,
    spec_i: &MomentSpec,
    spec_j: &MomentSpec,
) -> Result<f64> {
    require_mode(Mode::Mtm, [spec_i, spec_j])?;
    Ok(gamma_factor(spec_i, spec_j) * equal_props_v11(model, spec_i, spec_j)?)
}

/// The nine pieces of a winsorized covariance entry.
///
/// Index 0 is the window integral, 1 the lower atom and 2 the upper atom;
/// `terms[s][t]` pairs piece `s` of coordinate `i` with piece `t` of `j`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MwmTerms {
    pub terms: [[f64; 3]; 3],
    /// Whether `V₁₁` came from the closed form (otherwise from the kernel
    /// double integral, used when the windows do not interleave).
    pub v11_closed: bool,
}

impl MwmTerms {
    pub fn total(&self) -> f64 {
        self.terms.iter().flatten().sum()
    }
}

/// `m / (1 - m)` for `m = min(s, t)`, i.e. `∫₀^m (1-u)⁻² du`.
fn atom_overlap(s: f64, t: f64) -> f64 {
    let m = s.min(t);
    m / (1.0 - m)
}

/// `∫₀ᵗ (1-u)⁻² ∫_{max(u,a)}^{1-b} (1-v) H'(v) dv du`
/// `= I(a, c) + t/(1-t) · Ī(c, 1-b)` with `c = clamp(t, a, 1-b)`.
fn window_atom_integral(h: &CompositeH<'_>, spec: &MomentSpec, t: f64) -> Result<f64> {
    let (a, u) = (spec.a(), spec.upper());
    let c = t.clamp(a, u);
    let below = int_i(h, a, c)?;
    let above = weighted(t / (1.0 - t), || int_ibar(h, c, u))?;
    Ok(below + above)
}

/// The window/atom cross terms and atom/atom terms (everything except
/// `V₁₁`). Valid for any relative placement of the windows.
fn mwm_off_terms(
    model: &DistributionModel,
    spec_i: &MomentSpec,
    spec_j: &MomentSpec,
) -> Result<[[f64; 3]; 3]> {
    let h_i = spec_i.composite(model);
    let h_j = spec_j.composite(model);
    let (ai, bi, ui) = (spec_i.a(), spec_i.b(), spec_i.upper());
    let (aj, bj, uj) = (spec_j.a(), spec_j.b(), spec_j.upper());

    // Atom coefficients c·(1-p)·H'(p); zero weight means no atom.
    let low_i = weighted(ai * (1.0 - ai), || h_i.derivative(ai))?;
    let high_i = weighted(bi * bi, || h_i.derivative(ui))?;
    let low_j = weighted(aj * (1.0 - aj), || h_j.derivative(aj))?;
    let high_j = weighted(bj * bj, || h_j.derivative(uj))?;

    let mut t = [[0.0; 3]; 3];
    t[0][1] = weighted(low_j, || window_atom_integral(&h_i, spec_i, aj))?;
    t[0][2] = weighted(high_j, || window_atom_integral(&h_i, spec_i, uj))?;
    t[1][0] = weighted(low_i, || window_atom_integral(&h_j, spec_j, ai))?;
    t[2][0] = weighted(high_i, || window_atom_integral(&h_j, spec_j, ui))?;
    t[1][1] = low_i * low_j * atom_overlap(ai, aj);
    t[1][2] = low_i * high_j * atom_overlap(ai, uj);
    t[2][1] = high_i * low_j * atom_overlap(aj, ui);
    // 1 - min(1-bᵢ, 1-bⱼ) = max(bᵢ, bⱼ), kept exact
    let bmax = bi.max(bj);
    t[2][2] = if bmax > 0.0 {
        high_i * high_j * (1.0 - bmax) / bmax
    } else {
        0.0
    };
    Ok(t)
}

/// All nine winsorized pieces. `V₁₁` uses the closed form when the windows
/// interleave (in either orientation) and the kernel double integral
/// otherwise.
pub fn mwm_terms(
    model: &DistributionModel,
    spec_i: &MomentSpec,
    spec_j: &MomentSpec,
) -> Result<MwmTerms> {
    require_mode(Mode::Mwm, [spec_i, spec_j])?;
    let mut terms = mwm_off_terms(model, spec_i, spec_j)?;
    let (v11, v11_closed) = match closed_v11_either(model, spec_i, spec_j) {
        Ok(v) => (v, true),
        Err(Error::OrderingViolation { .. }) => (kernel_integral(model, spec_i, spec_j)?, false),
        Err(e) => return Err(e),
    };
    terms[0][0] = v11;
    Ok(MwmTerms { terms, v11_closed })
}

/// Winsorized `σ²ᵢⱼ = Σ V_st`.
pub fn sigma_mwm_decomposition(
    model: &DistributionModel,
    spec_i: &MomentSpec,
    spec_j: &MomentSpec,
) -> Result<f64> {
    mwm_terms(model, spec_i, spec_j).map(|t| t.total())
}

/// The nine pieces specialised to common proportions `a`, `b`.
pub fn mwm_equal_props_terms(
    model: &DistributionModel,
    spec_i: &MomentSpec,
    spec_j: &MomentSpec,
) -> Result<MwmTerms> {
    require_mode(Mode::Mwm, [spec_i, spec_j])?;
    if !equal_props(spec_i, spec_j) {
        return Err(Error::UnequalProportions);
    }
    let h_i = spec_i.composite(model);
    let h_j = spec_j.composite(model);
    let (a, b) = (spec_i.a(), spec_i.b());
    let u = 1.0 - b;
    // a·H'(a) and b·H'(1-b); the remaining powers of a and b are explicit below
    let d_i_low = weighted(a, || h_i.derivative(a))?;
    let d_j_low = weighted(a, || h_j.derivative(a))?;
    let d_i_high = weighted(b, || h_i.derivative(u))?;
    let d_j_high = weighted(b, || h_j.derivative(u))?;

    let mut t = [[0.0; 3]; 3];
    t[0][0] = equal_props_v11(model, spec_i, spec_j)?;
    // a² Hⱼ'(a) [b Hᵢ(1-b) - (1-a) Hᵢ(a) + ∫ Hᵢ] = a · a Hⱼ'(a) · Īᵢ(a, 1-b)
    t[0][1] = weighted(a, || Ok(d_j_low * int_ibar(&h_i, a, u)?))?;
    t[0][2] = weighted(b, || Ok(d_j_high * int_i(&h_i, a, u)?))?;
    t[1][0] = weighted(a, || Ok(d_i_low * int_ibar(&h_j, a, u)?))?;
    t[2][0] = weighted(b, || Ok(d_i_high * int_i(&h_j, a, u)?))?;
    t[1][1] = a * (1.0 - a) * d_i_low * d_j_low;
    t[1][2] = a * b * d_i_low * d_j_high;
    t[2][1] = a * b * d_j_low * d_i_high;
    t[2][2] = b * (1.0 - b) * d_i_high * d_j_high;
    Ok(MwmTerms {
        terms: t,
        v11_closed: true,
    })
}

/// Winsorized moments with common proportions.
pub fn sigma_mwm_equal_props(
    model: &DistributionModel,
    spec_i: &MomentSpec,
    spec_j: &MomentSpec,
) -> Result<f64> {
    mwm_equal_props_terms(model, spec_i, spec_j).map(|t| t.total())
}

/// How a covariance entry is (to be) computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CovMethod {
    /// Choose per pair: equal-proportion or interleaved closed forms when
    /// their preconditions hold, quadrature otherwise.
    Auto,
    /// `∫ αᵢ αⱼ`; any mode, any order.
    AlphaForm,
    /// Kernel double integral; trimmed moments only.
    KernelForm,
    /// Closed form for interleaved windows; trimmed moments only.
    ClosedScenarioI,
    /// Common proportions; trimmed or winsorized.
    EqualProps,
    /// Nine-piece winsorized decomposition.
    MwmDecomposition,
}

impl CovMethod {
    pub fn name(self) -> &'static str {
        match self {
            CovMethod::Auto => "auto",
            CovMethod::AlphaForm => "alpha",
            CovMethod::KernelForm => "kernel",
            CovMethod::ClosedScenarioI => "closed",
            CovMethod::EqualProps => "equal-props",
            CovMethod::MwmDecomposition => "mwm-decomposition",
        }
    }
}

impl fmt::Display for CovMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for CovMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let all = [
            CovMethod::Auto,
            CovMethod::AlphaForm,
            CovMethod::KernelForm,
            CovMethod::ClosedScenarioI,
            CovMethod::EqualProps,
            CovMethod::MwmDecomposition,
        ];
        let lower = s.trim().to_ascii_lowercase();
        all.into_iter()
            .find(|m| m.name() == lower)
            .ok_or_else(|| Error::Parse(alloc::format!("unknown covariance method '{s}'")))
    }
}

/// One covariance entry by an explicit method, or by the dispatcher for
/// [`CovMethod::Auto`]. Returns the value and the method actually used.
pub fn sigma(
    model: &DistributionModel,
    spec_i: &MomentSpec,
    spec_j: &MomentSpec,
    method: CovMethod,
) -> Result<(f64, CovMethod)> {
    let value = match method {
        CovMethod::Auto => return sigma_auto(model, spec_i, spec_j),
        CovMethod::AlphaForm => sigma_alpha_form(model, spec_i, spec_j)?,
        CovMethod::KernelForm => sigma_mtm_kernel_form(model, spec_i, spec_j)?,
        CovMethod::ClosedScenarioI => sigma_mtm_closed(model, spec_i, spec_j)?,
        CovMethod::EqualProps => match spec_i.mode {
            Mode::Mtm => sigma_mtm_equal_props(model, spec_i, spec_j)?,
            Mode::Mwm => sigma_mwm_equal_props(model, spec_i, spec_j)?,
        },
        CovMethod::MwmDecomposition => sigma_mwm_decomposition(model, spec_i, spec_j)?,
    };
    Ok((value, method))
}

fn sigma_auto(
    model: &DistributionModel,
    spec_i: &MomentSpec,
    spec_j: &MomentSpec,
) -> Result<(f64, CovMethod)> {
    let (primary, fallback) = match (spec_i.mode, spec_j.mode) {
        (Mode::Mtm, Mode::Mtm) => {
            let primary = if equal_props(spec_i, spec_j) {
                Some(CovMethod::EqualProps)
            } else if interleaved(spec_i, spec_j) || interleaved(spec_j, spec_i) {
                Some(CovMethod::ClosedScenarioI)
            } else {
                None
            };
            (primary, CovMethod::KernelForm)
        }
        (Mode::Mwm, Mode::Mwm) => {
            let primary = if equal_props(spec_i, spec_j) {
                CovMethod::EqualProps
            } else {
                CovMethod::MwmDecomposition
            };
            (Some(primary), CovMethod::AlphaForm)
        }
        _ => (None, CovMethod::AlphaForm),
    };
    if let Some(m) = primary {
        if let Ok(r) = sigma(model, spec_i, spec_j, m) {
            return Ok(r);
        }
    }
    sigma(model, spec_i, spec_j, fallback)
}

/// Symmetric `k × k` asymptotic covariance matrix with the method used for
/// each entry.
#[derive(Debug, Clone, PartialEq)]
pub struct CovMatrix {
    entries: Matrix,
    methods: Vec<CovMethod>,
}

impl CovMatrix {
    /// Wrap a matrix, symmetrizing it; every entry is tagged with `method`.
    pub fn from_matrix(m: Matrix, method: CovMethod) -> Self {
        let k = m.nrows();
        CovMatrix {
            entries: linalg::symmetrized(&m),
            methods: alloc::vec![method; k * k],
        }
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[(i, j)]
    }

    pub fn method(&self, i: usize, j: usize) -> CovMethod {
        self.methods[i * self.dim() + j]
    }

    pub fn matrix(&self) -> &Matrix {
        &self.entries
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.dim()).map(|i| self.get(i, i)).collect()
    }

    pub fn is_symmetric(&self) -> bool {
        let k = self.dim();
        (0..k).all(|i| {
            (0..k).all(|j| {
                let (a, b) = (self.get(i, j), self.get(j, i));
                libm::fabs(a - b) <= 1e-9 * (1.0 + libm::fabs(a))
            })
        })
    }

    pub fn min_eigenvalue(&self) -> f64 {
        linalg::symmetric_eigenvalues(&self.entries)[0]
    }

    /// Symmetric, nonnegative diagonal and smallest eigenvalue at least
    /// `-1e-8 · trace`.
    pub fn is_psd(&self) -> bool {
        let trace = self.entries.trace();
        self.is_symmetric()
            && self.diagonal().iter().all(|&d| d >= 0.0)
            && self.min_eigenvalue() >= -1e-8 * trace.max(0.0)
    }
}

/// The full matrix `Σ = [σ²ᵢⱼ]` for a list of moment specs.
pub fn cov_matrix(
    specs: &[MomentSpec],
    model: &DistributionModel,
    method: CovMethod,
) -> Result<CovMatrix> {
    let k = specs.len();
    let mut entries = linalg::zeros(k);
    let mut methods = alloc::vec![method; k * k];
    for i in 0..k {
        for j in i..k {
            let (v, used) = sigma(model, &specs[i], &specs[j], method).map_err(|e| Error::Pair {
                i,
                j,
                source: Box::new(e),
            })?;
            entries[(i, j)] = v;
            entries[(j, i)] = v;
            methods[i * k + j] = used;
            methods[j * k + i] = used;
        }
    }
    Ok(CovMatrix {
        entries: linalg::symmetrized(&entries),
        methods,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::HTransform;

    fn unif() -> DistributionModel {
        DistributionModel::uniform(0.0, 1.0).unwrap()
    }

    #[test]
    fn kernel_examples() {
        assert!((kernel_k(0.3, 0.7) - 0.09).abs() < 1e-15);
        assert_eq!(kernel_k(0.5, 0.5), 0.25);
        for &v in &[0.0, 0.2, 0.9, 1.0] {
            assert_eq!(kernel_k(v, 0.0), 0.0);
            assert!(kernel_k(v, 1.0).abs() < 1e-16);
        }
    }

    #[test]
    fn gamma_examples() {
        let s = |a, b| MomentSpec::mtm(HTransform::Identity, a, b).unwrap();
        assert!((gamma_factor(&s(0.1, 0.1), &s(0.1, 0.1)) - 1.5625).abs() < 1e-14);
        assert_eq!(gamma_factor(&s(0.0, 0.0), &s(0.0, 0.0)), 1.0);
        assert!((gamma_factor(&s(0.2, 0.1), &s(0.3, 0.2)) - 2.857_142_857).abs() < 1e-9);
    }

    #[test]
    fn int_i_examples() {
        let m = unif();
        let id = HTransform::Identity;
        let h = CompositeH::new(&m, &id);
        assert!((int_i(&h, 0.0, 1.0).unwrap() - 0.5).abs() < 1e-15);
        assert!((int_ibar(&h, 0.0, 1.0).unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn alpha_examples() {
        let m = unif();
        let s = MomentSpec::mtm(HTransform::Identity, 0.0, 0.0).unwrap();
        assert!((alpha(0.5, &m, &s).unwrap() - 0.25).abs() < 1e-14);
        let t = MomentSpec::mtm(HTransform::Identity, 0.1, 0.3).unwrap();
        assert_eq!(alpha(0.7, &m, &t).unwrap(), 0.0);
        assert_eq!(alpha(0.9, &m, &t).unwrap(), 0.0);
        let w = MomentSpec::mwm(HTransform::Identity, 0.1, 0.3).unwrap();
        assert_eq!(alpha(0.71, &m, &w).unwrap(), 0.0);
        assert!(alpha(0.0, &m, &w).is_err());
    }

    #[test]
    fn scenario_classification() {
        let s = |a, b| MomentSpec::mtm(HTransform::Identity, a, b).unwrap();
        assert_eq!(Scenario::classify(&s(0.1, 0.3), &s(0.2, 0.1)), Scenario::I);
        assert_eq!(Scenario::classify(&s(0.0, 0.6), &s(0.5, 0.1)), Scenario::II);
        assert_eq!(Scenario::classify(&s(0.1, 0.1), &s(0.2, 0.2)), Scenario::III);
        assert_eq!(Scenario::classify(&s(0.5, 0.1), &s(0.0, 0.6)), Scenario::IV);
        assert_eq!(Scenario::classify(&s(0.2, 0.1), &s(0.1, 0.3)), Scenario::V);
        assert_eq!(Scenario::classify(&s(0.2, 0.2), &s(0.1, 0.1)), Scenario::VI);
        assert!(interleaved(&s(0.1, 0.3), &s(0.2, 0.1)));
        assert!(!interleaved(&s(0.2, 0.1), &s(0.1, 0.3)));
    }

    #[test]
    fn closed_rejects_nested_windows() {
        let s = |a, b| MomentSpec::mtm(HTransform::Identity, a, b).unwrap();
        let r = sigma_mtm_closed(&unif(), &s(0.1, 0.1), &s(0.2, 0.2));
        assert!(matches!(r, Err(Error::OrderingViolation { .. })));
    }

    #[test]
    fn mode_checks() {
        let mtm = MomentSpec::mtm(HTransform::Identity, 0.1, 0.1).unwrap();
        let mwm = mtm.with_mode(Mode::Mwm);
        assert!(sigma_mtm_kernel_form(&unif(), &mwm, &mwm).is_err());
        assert!(sigma_mwm_decomposition(&unif(), &mtm, &mtm).is_err());
        // mixed modes go through the alpha form
        let (_, used) = sigma(&unif(), &mtm, &mwm, CovMethod::Auto).unwrap();
        assert_eq!(used, CovMethod::AlphaForm);
    }

    #[test]
    fn method_names_round_trip() {
        for m in [
            CovMethod::Auto,
            CovMethod::AlphaForm,
            CovMethod::KernelForm,
            CovMethod::ClosedScenarioI,
            CovMethod::EqualProps,
            CovMethod::MwmDecomposition,
        ] {
            assert_eq!(m.name().parse::<CovMethod>().unwrap(), m);
        }
    }
}
