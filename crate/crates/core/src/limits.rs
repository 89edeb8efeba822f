//! Canonical limiting laws (types I, II, III) and ground-state
//! fluctuation generating functions.

use crate::canonical::build_canonical_with;
use crate::error::{Error, Result};
use crate::grandcanonical::GcLimitModel;
use crate::numeric::{bose, integrate, x_minus_log1p, Sum};
use crate::spectrum::{
    for_each_unit_gap, spectrum_for_tolerance, BoxGeometry, GapConvention, Mode, SpectrumTable,
};
use rayon::prelude::*;
use serde::Serialize;
use std::f64::consts::PI;
use std::sync::Arc;

pub use crate::spectrum::FluctuationCase;

/// Default series/product truncation.
pub const DEFAULT_SERIES_M: usize = 1000;

/// How the coefficient products over m' are formed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ProductForm {
    /// Product over m' ≤ M only.
    Truncated,
    /// Closed form of the infinite product, b_{m,n}η_{m,n} = (−1)^{m+n+1} m²/n².
    Exact,
}

/// η_{m,n} = β(ε_m − ε_n), ε_m = π²m²/2, and b_{m,n} for m ≤ M, m ≠ n.
#[derive(Debug, Clone, Serialize)]
pub struct GapCoefficients {
    pub n: usize,
    pub m_max: usize,
    pub beta: f64,
    pub form: ProductForm,
    /// index m−1; the entry for m = n is unused (0)
    etas: Vec<f64>,
    /// ln|b_{m,n} η_{m,n}|
    log_abs_c: Vec<f64>,
    sign_c: Vec<f64>,
    /// Σ_{m≠n} 1/η_{m,n} (over m ≤ M, or the full series for the exact form)
    sum_inv_eta: f64,
}

pub fn gap_coefficients(n: usize, m_max: usize, beta: f64) -> Result<GapCoefficients> {
    coefficients(n, m_max, beta, ProductForm::Truncated)
}

pub fn gap_coefficients_exact(n: usize, m_max: usize, beta: f64) -> Result<GapCoefficients> {
    coefficients(n, m_max, beta, ProductForm::Exact)
}

pub fn coefficients(n: usize, m_max: usize, beta: f64, form: ProductForm) -> Result<GapCoefficients> {
    if n < 1 || m_max <= n {
        return Err(Error::Domain(format!("need M > n >= 1, got n={n}, M={m_max}")));
    }
    if !(beta > 0.0) {
        return Err(Error::Domain("beta must be positive".into()));
    }
    let half = 0.5 * PI * PI * beta;
    let nn = (n * n) as f64;
    let etas: Vec<f64> = (1..=m_max)
        .map(|m| if m == n { 0.0 } else { half * ((m * m) as f64 - nn) })
        .collect();
    let mut log_abs_c = vec![0.0; m_max];
    let mut sign_c = vec![0.0; m_max];
    let mut inv = Sum::new();
    match form {
        ProductForm::Truncated => {
            // ln|c_m| = 2 ln(m/n) + D(m), D(m) − D(m−1) = ln((M−m+1)/(M+m)), D(n) = 0
            let big = m_max as f64;
            let step = |m: usize| ((1.0 - 2.0 * m as f64) / (big + m as f64)).ln_1p();
            let mut d = Sum::new();
            for m in n + 1..=m_max {
                d.add(step(m));
                log_abs_c[m - 1] = 2.0 * ((m as f64).ln() - (n as f64).ln()) + d.value();
            }
            let mut d = Sum::new();
            for m in (1..n).rev() {
                d.add(-step(m + 1));
                log_abs_c[m - 1] = 2.0 * ((m as f64).ln() - (n as f64).ln()) + d.value();
            }
            for m in 1..=m_max {
                if m != n {
                    sign_c[m - 1] = if (m + n + 1).is_multiple_of(2) { 1.0 } else { -1.0 };
                }
            }
            for m in (1..=m_max).rev() {
                if m != n {
                    inv.add(1.0 / etas[m - 1]);
                }
            }
        }
        ProductForm::Exact => {
            for m in 1..=m_max {
                if m == n {
                    continue;
                }
                log_abs_c[m - 1] = 2.0 * ((m as f64).ln() - (n as f64).ln());
                sign_c[m - 1] = if (m + n + 1).is_multiple_of(2) { 1.0 } else { -1.0 };
            }
            // Σ_{m≠n} 1/(m²−n²) = 3/(4n²)
            inv.add(3.0 / (4.0 * nn) / half);
        }
    }
    Ok(GapCoefficients {
        n,
        m_max,
        beta,
        form,
        etas,
        log_abs_c,
        sign_c,
        sum_inv_eta: inv.value(),
    })
}

impl GapCoefficients {
    fn idx(&self, m: usize) -> Result<usize> {
        if m == 0 || m > self.m_max || m == self.n {
            return Err(Error::OutOfRange {
                index: m,
                limit: self.m_max,
            });
        }
        Ok(m - 1)
    }

    pub fn eta(&self, m: usize) -> Result<f64> {
        Ok(self.etas[self.idx(m)?])
    }

    /// b_{m,n} η_{m,n}.
    pub fn c(&self, m: usize) -> Result<f64> {
        let i = self.idx(m)?;
        Ok(self.sign_c[i] * self.log_abs_c[i].exp())
    }

    pub fn b(&self, m: usize) -> Result<f64> {
        let i = self.idx(m)?;
        Ok(self.sign_c[i] * self.log_abs_c[i].exp() / self.etas[i])
    }

    pub fn sum_inv_eta(&self) -> f64 {
        self.sum_inv_eta
    }

    /// Bound on |ln(b^{(M)}_{m,n}/b^{(∞)}_{m,n})| from the omitted factors
    /// m' > M; zero for the exact form.
    pub fn log_product_tail(&self, m: usize) -> Result<f64> {
        self.idx(m)?;
        if self.form == ProductForm::Exact {
            return Ok(0.0);
        }
        let (mf, nf, big) = (m as f64, self.n as f64, self.m_max as f64);
        let d = (mf * mf - nf * nf).abs();
        // Σ_{m'>M} 1/(m'²−n²) ≤ ∫_M^∞ dx/(x²−n²)
        let s = ((big + nf) / (big - nf)).ln() / (2.0 * nf);
        let xmax = d / ((big + 1.0).powi(2) - nf * nf);
        if xmax >= 1.0 {
            return Ok(f64::INFINITY);
        }
        Ok(d * s / (1.0 - xmax))
    }

    fn indices(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.m_max).filter(move |&i| i + 1 != self.n)
    }

    /// Scale exponent: the largest −η_m y (≥ 0) so that scaled terms stay finite.
    fn scale(&self, y: f64) -> f64 {
        self.indices()
            .map(|i| -self.etas[i] * y)
            .fold(0.0, f64::max)
    }

    /// e^{−S}(1 − Σ c_m e^{−η_m y}).
    fn scaled_denominator(&self, y: f64, s: f64) -> f64 {
        let mut acc = Sum::new();
        acc.add((-s).exp());
        for i in self.indices() {
            acc.add(-self.sign_c[i] * (self.log_abs_c[i] - self.etas[i] * y - s).exp());
        }
        acc.value()
    }
}

/// θ(t) = Σ_{m≥1} (−1)^{m−1} m² e^{−tm²}, t > 0.
pub fn theta(t: f64) -> f64 {
    log_theta(t).exp()
}

/// ln θ(t). Direct series for t ≥ 1, the Jacobi-dual series
/// θ(t) = √π t^{−3/2} Σ_{k≥0} e^{−c_k/t}(c_k/t − ½), c_k = π²(2k+1)²/4, below.
pub fn log_theta(t: f64) -> f64 {
    if !(t > 0.0) {
        return f64::NEG_INFINITY;
    }
    if t >= 1.0 {
        let mut s = Sum::new();
        for m in 1..64u32 {
            let m2 = (m * m) as f64;
            let term = m2 * (-t * (m2 - 1.0)).exp();
            if term < 1e-18 {
                break;
            }
            s.add(if m % 2 == 1 { term } else { -term });
        }
        return s.value().ln() - t;
    }
    let c0 = PI * PI / 4.0;
    let mut s = Sum::new();
    for k in 0..64u32 {
        let ck = c0 * ((2 * k + 1) as f64).powi(2);
        let term = (-(ck - c0) / t).exp() * (ck / t - 0.5);
        s.add(term);
        if term < 1e-18 * s.value() {
            break;
        }
    }
    0.5 * PI.ln() - 1.5 * t.ln() - c0 / t + s.value().ln()
}

/// Below this value of t = βπ²y/2 the exact-form type II quantities are
/// evaluated through θ instead of the coefficient series.
const SMALL_T: f64 = 0.5;

/// ln|1 − Σ c_m e^{−η_m y}| = n²t + ln θ(t) − 2 ln n for the exact coefficients.
fn log_abs_denominator(coeffs: &GapCoefficients, y: f64) -> f64 {
    let t = 0.5 * PI * PI * coeffs.beta * y;
    let n2 = (coeffs.n * coeffs.n) as f64;
    n2 * t + log_theta(t) - n2.ln()
}

fn use_theta_route(coeffs: &GapCoefficients, y: f64) -> bool {
    coeffs.form == ProductForm::Exact && 0.5 * PI * PI * coeffs.beta * y < SMALL_T
}

/// ∫_0^y e^{−λ(y−s)} D(s)/D(y) ds.
fn relative_integral(coeffs: &GapCoefficients, y: f64, lambda: f64) -> f64 {
    let ly = log_abs_denominator(coeffs, y);
    let f = |s: f64| {
        if s <= 0.0 {
            0.0
        } else {
            (log_abs_denominator(coeffs, s) - ly - lambda * (y - s)).exp()
        }
    };
    integrate(f, 0.0, y, 1e-15 * y).0
}

fn pole_check(coeffs: &GapCoefficients, lambda: f64) -> Result<()> {
    for i in coeffs.indices() {
        if (lambda - coeffs.etas[i]).abs() < 1e-9 {
            return Err(Error::PoleProximity {
                lambda,
                pole: coeffs.etas[i],
            });
        }
    }
    Ok(())
}

/// K̃_n(x) = (−1)^{n−1} Σ_{m≠n} b_{m,n}η_{m,n}(1 − e^{−η_{m,n}(x−ρ_c)}), x > ρ_c.
pub fn k_tilde_limit(x: f64, rho_c: f64, coeffs: &GapCoefficients) -> f64 {
    let y = x - rho_c;
    if y <= 0.0 {
        return 0.0;
    }
    if use_theta_route(coeffs, y) {
        return log_abs_denominator(coeffs, y).exp();
    }
    let s = coeffs.scale(y);
    let sign = if coeffs.n % 2 == 1 { 1.0 } else { -1.0 };
    let d = coeffs.scaled_denominator(y, s);
    if s == 0.0 {
        sign * d
    } else {
        sign * d * s.exp()
    }
}

/// Π_{m≠n} (1 − λ/η_{m,n})^{-1}, over m ≤ M or in closed form.
fn resolvent_product(coeffs: &GapCoefficients, lambda: f64) -> f64 {
    match coeffs.form {
        ProductForm::Truncated => {
            let mut l = 0.0;
            let mut sign = 1.0;
            for i in coeffs.indices() {
                let f = 1.0 - lambda / coeffs.etas[i];
                if f < 0.0 {
                    sign = -sign;
                }
                l -= f.abs().ln();
            }
            sign * l.exp()
        }
        ProductForm::Exact => {
            // Π_{m≠n}(m²−w²)/(m²−n²) = 2(−1)^{n+1} s(w)/(1 − w²/n²), s(w) = sin(πw)/(πw)
            if lambda == 0.0 {
                return 1.0;
            }
            let nf = coeffs.n as f64;
            let shift = 2.0 * lambda / (coeffs.beta * PI * PI);
            let w2 = nf * nf + shift;
            // (1 − w²/n²) = −shift/n²; sin(πw) = (−1)^k sin(π(w−k))
            let ratio = if w2 > 0.0 {
                let w = w2.sqrt();
                let k = w.round();
                let delta = (shift + (nf * nf - k * k)) / (w + k);
                let sk = if (k as i64) % 2 == 0 { 1.0 } else { -1.0 };
                sk * (PI * delta).sin() / (PI * w) / (-shift / (nf * nf))
            } else if w2 < 0.0 {
                let w = (-w2).sqrt();
                (PI * w).sinh() / (PI * w) / (-shift / (nf * nf))
            } else {
                1.0 / (-shift / (nf * nf))
            };
            let sign = if coeffs.n % 2 == 1 { 1.0 } else { -1.0 };
            let prod = 2.0 * sign * ratio;
            1.0 / prod
        }
    }
}

/// Limiting ⟨e^{−λN_{(n,1,1)}/V}⟩ in the canonical ensemble at α₁ = 1/2.
///
/// Evaluated as [e^{−λy}Π(1−λ/η_m)^{-1} − Σ c_m η_m/(η_m−λ) e^{−η_m y}] /
/// [1 − Σ c_m e^{−η_m y}], y = ρ − ρ_c.
pub fn canonical_laplace_typeii(
    lambda: f64,
    rho: f64,
    rho_c: f64,
    coeffs: &GapCoefficients,
) -> Result<f64> {
    let y = rho - rho_c;
    if !(y > 0.0) {
        return Err(Error::Domain("rho must exceed rho_c".into()));
    }
    pole_check(coeffs, lambda)?;
    if lambda == 0.0 {
        return Ok(1.0);
    }
    if use_theta_route(coeffs, y) {
        return Ok(1.0 - lambda * relative_integral(coeffs, y, lambda));
    }
    let s = coeffs.scale(y);
    let p = resolvent_product(coeffs, lambda);
    let mut num = Sum::new();
    num.add((-lambda * y - s).exp() * p);
    for i in coeffs.indices() {
        let e = coeffs.etas[i];
        num.add(-coeffs.sign_c[i] * (coeffs.log_abs_c[i] - e * y - s).exp() * e / (e - lambda));
    }
    Ok(num.value() / coeffs.scaled_denominator(y, s))
}

/// Limiting ⟨N_{(n,1,1)}⟩/V in the canonical ensemble at α₁ = 1/2:
/// [y − Σ 1/η_m + Σ b_m e^{−η_m y}] / [1 − Σ c_m e^{−η_m y}].
pub fn occupation_limit_typeii(rho: f64, rho_c: f64, coeffs: &GapCoefficients) -> Result<f64> {
    let y = rho - rho_c;
    if !(y > 0.0) {
        return Err(Error::Domain("rho must exceed rho_c".into()));
    }
    if use_theta_route(coeffs, y) {
        return Ok(relative_integral(coeffs, y, 0.0));
    }
    let s = coeffs.scale(y);
    let mut num = Sum::new();
    num.add((y - coeffs.sum_inv_eta) * (-s).exp());
    for i in coeffs.indices() {
        let e = coeffs.etas[i];
        num.add(coeffs.sign_c[i] * (coeffs.log_abs_c[i] - e.abs().ln() - e * y - s).exp() * e.signum());
    }
    Ok(num.value() / coeffs.scaled_denominator(y, s))
}

/// A limit value with its truncation estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LimitValue {
    pub value: f64,
    /// 2|v(M) − v(M/2)|.
    pub truncation: f64,
}

/// Type II canonical ladder occupation with exact coefficients and a
/// self-convergence truncation estimate.
pub fn typeii_ladder_occupation(n: usize, rho: f64, rho_c: f64, beta: f64, m_max: usize) -> Result<LimitValue> {
    let full = occupation_limit_typeii(rho, rho_c, &gap_coefficients_exact(n, m_max, beta)?)?;
    let half_m = (m_max / 2).max(n + 1);
    let half = occupation_limit_typeii(rho, rho_c, &gap_coefficients_exact(n, half_m, beta)?)?;
    Ok(LimitValue {
        value: full,
        truncation: 2.0 * (full - half).abs(),
    })
}

/// Type II canonical ladder transform with a truncation estimate.
pub fn typeii_ladder_laplace(
    n: usize,
    lambda: f64,
    rho: f64,
    rho_c: f64,
    beta: f64,
    m_max: usize,
) -> Result<LimitValue> {
    let full = canonical_laplace_typeii(lambda, rho, rho_c, &gap_coefficients_exact(n, m_max, beta)?)?;
    let half_m = (m_max / 2).max(n + 1);
    let half = canonical_laplace_typeii(lambda, rho, rho_c, &gap_coefficients_exact(n, half_m, beta)?)?;
    Ok(LimitValue {
        value: full,
        truncation: 2.0 * (full - half).abs(),
    })
}

/// Type I canonical limit of ⟨e^{−λN/V}⟩: e^{−λ(ρ−ρ_c)} on the ground mode
/// above ρ_c, 1 otherwise.
pub fn canonical_typei_laplace(model: &GcLimitModel, mode: Mode, lambda: f64) -> f64 {
    if model.condensed() && mode == Mode::GROUND {
        (-lambda * model.excess()).exp()
    } else {
        1.0
    }
}

/// Type I canonical limit of ⟨N/V⟩.
pub fn canonical_typei_mean(model: &GcLimitModel, mode: Mode) -> f64 {
    if model.condensed() && mode == Mode::GROUND {
        model.excess()
    } else {
        0.0
    }
}

/// Type I transform at scale V^γ: 1 for every γ ∈ [0,1) when ρ ≤ ρ_c;
/// above ρ_c only γ = 0 has a finite limit.
pub fn canonical_typei_laplace_scaled(model: &GcLimitModel, mode: Mode, lambda: f64, gamma: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&gamma) {
        return Err(Error::Domain(format!("scale exponent must be in [0,1), got {gamma}")));
    }
    if !model.condensed() {
        return Ok(1.0);
    }
    if gamma == 0.0 {
        return Ok(canonical_typei_laplace(model, mode, lambda));
    }
    if mode != Mode::GROUND {
        return Ok(1.0);
    }
    Err(Error::Domain("the condensate diverges at scale V^gamma > V^0".into()))
}

/// Type III canonical limit of ⟨e^{−λN/V^{2(1−α₁)}}⟩: 1/(1+2λ(ρ−ρ_c)²) on the ladder.
pub fn canonical_laplace_typeiii(model: &GcLimitModel, mode: Mode, lambda: f64) -> Result<f64> {
    if !model.condensed() || !mode.is_ladder() {
        return Ok(1.0);
    }
    let y = model.excess();
    let d = 1.0 + 2.0 * lambda * y * y;
    if !(d > 0.0) {
        return Err(Error::Domain(format!("lambda = {lambda} outside the transform domain")));
    }
    Ok(1.0 / d)
}

/// Type III canonical scaled mean 2(ρ−ρ_c)² on the ladder.
pub fn canonical_typeiii_mean(model: &GcLimitModel, mode: Mode) -> f64 {
    if model.condensed() && mode.is_ladder() {
        2.0 * model.excess().powi(2)
    } else {
        0.0
    }
}

/// A g-function value with a bound on its truncated tail.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GValue {
    pub value: f64,
    pub tail_bound: f64,
}

/// Default gap cutoff per dimension for g-function sums.
pub fn default_g_cutoff(d: usize) -> f64 {
    let half = 0.5 * PI * PI;
    match d {
        1 => half * 1e12,
        2 => half * 2.0 * 1500.0f64.powi(2),
        _ => half * 3.0 * 120.0f64.powi(2),
    }
}

/// Bound on Σ_{η>Λ} η^{−2} over the excited unit lattice {2,3,..}^d.
fn inverse_square_tail(d: usize, cutoff: f64) -> f64 {
    let omega = match d {
        1 => 2.0,
        2 => PI,
        _ => 4.0 * PI / 3.0,
    };
    let dh = d as f64 / 2.0;
    let c = omega / 2f64.powi(d as i32) * (2.0 / (PI * PI)).powf(dh);
    2.0 * c * cutoff.powf(dh - 2.0) / (2.0 - dh)
}

/// Smallest excited gap of the d-dimensional unit lattice.
fn smallest_excited_gap(d: usize, conv: GapConvention) -> f64 {
    let t = match conv {
        GapConvention::Exact => 3.0,
        GapConvention::Printed => 1.0,
    };
    0.5 * PI * PI * t * d as f64
}

/// Σ f(η) over the excited lattice {2,3,..}^d with η ≤ cutoff, split over
/// the first coordinate across threads.
fn lattice_sum<F: Fn(f64) -> f64 + Sync>(d: usize, cutoff: f64, conv: GapConvention, f: F) -> f64 {
    let half = 0.5 * PI * PI;
    let unit = |n: u64| -> f64 {
        let n = n as f64;
        match conv {
            GapConvention::Exact => n * n - 1.0,
            GapConvention::Printed => (n - 1.0) * (n - 1.0),
        }
    };
    let rest_min = (d as f64 - 1.0) * unit(2);
    let mut top = 2u64;
    while half * (unit(top + 1) + rest_min) <= cutoff {
        top += 1;
    }
    let parts: Vec<f64> = (2..=top)
        .into_par_iter()
        .map(|n1| {
            let e1 = half * unit(n1);
            let mut s = Sum::new();
            if d == 1 {
                s.add(f(e1));
            } else {
                for_each_unit_gap(d - 1, cutoff - e1, conv, 2, |eta| s.add(f(e1 + eta)));
            }
            s.value()
        })
        .collect();
    let mut s = Sum::new();
    for p in parts.into_iter().rev() {
        s.add(p);
    }
    s.value()
}

pub fn g_function(d: usize, lambda: f64, beta: f64) -> Result<GValue> {
    g_function_with(d, lambda, beta, GapConvention::Exact, default_g_cutoff(d))
}

/// g_d(λ) = Σ_{n ∈ {2,3,..}^d} [λ/(βη_n) − ln(1 + λ/(βη_n))].
pub fn g_function_with(
    d: usize,
    lambda: f64,
    beta: f64,
    conv: GapConvention,
    cutoff: f64,
) -> Result<GValue> {
    if !(1..=3).contains(&d) {
        return Err(Error::Domain(format!("d must be 1, 2 or 3, got {d}")));
    }
    if !(beta > 0.0) {
        return Err(Error::Domain("beta must be positive".into()));
    }
    let eta_min = smallest_excited_gap(d, conv);
    if !(1.0 + lambda / (beta * eta_min) > 0.0) {
        return Err(Error::Domain(format!(
            "lambda = {lambda} makes a log argument non-positive (need lambda > {})",
            -beta * eta_min
        )));
    }
    if lambda == 0.0 {
        return Ok(GValue {
            value: 0.0,
            tail_bound: 0.0,
        });
    }
    let value = lattice_sum(d, cutoff, conv, |eta| x_minus_log1p(lambda / (beta * eta)));
    let u = (-lambda / (beta * cutoff)).max(0.0);
    let tail = lambda * lambda / (2.0 * beta * beta * (1.0 - u)) * inverse_square_tail(d, cutoff);
    Ok(GValue {
        value,
        tail_bound: tail,
    })
}

/// g_d''(0) = Σ 1/(βη)² over the excited lattice, with tail bound.
pub fn g_second_derivative_at_zero(d: usize, beta: f64, conv: GapConvention) -> Result<GValue> {
    if !(1..=3).contains(&d) {
        return Err(Error::Domain(format!("d must be 1, 2 or 3, got {d}")));
    }
    let cutoff = default_g_cutoff(d);
    Ok(GValue {
        value: lattice_sum(d, cutoff, conv, |eta| 1.0 / (beta * eta).powi(2)),
        tail_bound: inverse_square_tail(d, cutoff) / (beta * beta),
    })
}

/// exp(g₁), exp(2g₁+g₂) or exp(3g₁+3g₂+g₃), with a propagated tail bound.
pub fn fluctuation_law(case: FluctuationCase, lambda: f64, beta: f64) -> Result<GValue> {
    let weights: [f64; 3] = match case {
        FluctuationCase::Distinct => [1.0, 0.0, 0.0],
        FluctuationCase::TwoEqual => [2.0, 1.0, 0.0],
        FluctuationCase::Isotropic => [3.0, 3.0, 1.0],
    };
    let mut exponent = 0.0;
    let mut tail = 0.0;
    for (i, &w) in weights.iter().enumerate() {
        if w != 0.0 {
            let g = g_function(i + 1, lambda, beta)?;
            exponent += w * g.value;
            tail += w * g.tail_bound;
        }
    }
    let v = exponent.exp();
    Ok(GValue {
        value: v,
        tail_bound: v * tail.exp_m1(),
    })
}

/// ρ_c^V = (1/V) Σ_{k≥2} 1/(e^{βη_k} − 1) with its cutoff tail bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FiniteCriticalDensity {
    pub value: f64,
    pub tail_bound: f64,
}

pub fn rho_c_finite(table: &SpectrumTable, beta: f64, tol: f64) -> Result<FiniteCriticalDensity> {
    let mut s = Sum::new();
    for &g in table.gaps()[1..].iter().rev() {
        s.add(bose(beta * g));
    }
    let tail = table.bose_tail(beta, 0.0) / table.volume();
    if tail > tol {
        return Err(Error::CutoffInsufficient { tail, tol });
    }
    Ok(FiniteCriticalDensity {
        value: s.value() / table.volume(),
        tail_bound: tail,
    })
}

/// One volume of the fluctuation convergence sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FluctuationRow {
    pub volume: f64,
    pub n: usize,
    pub lambda: f64,
    pub gamma: f64,
    pub rho_c_finite: f64,
    pub rho_c_tail: f64,
    /// ⟨exp{λV^γ(N₁/V − (ρ − ρ_c^V))}⟩ in the n-particle state.
    pub finite: f64,
    pub law: f64,
    pub law_tail: f64,
    pub gap: f64,
    /// V^γ(⟨N₁⟩/V − (ρ − ρ_c^V)).
    pub centered_mean: f64,
}

/// Finite-volume centered ground-state transform next to the limit law,
/// for each geometry (parallel across volumes, ordered output). The density
/// used is n/V with n = round(ρV).
pub fn fluctuation_convergence_check(
    geoms: &[BoxGeometry],
    rho: f64,
    lambdas: &[f64],
    beta: f64,
    tail_tol: f64,
) -> Result<Vec<FluctuationRow>> {
    let per_v: Vec<Result<Vec<FluctuationRow>>> = geoms
        .par_iter()
        .map(|g| {
            if !(g.alpha()[0] < 0.5) {
                return Err(Error::Domain("fluctuation law needs alpha1 < 1/2".into()));
            }
            let case = g.fluctuation_case();
            let gamma = FluctuationCase::gamma(g.alpha());
            let v = g.volume();
            let s = Arc::new(spectrum_for_tolerance(g, beta, tail_tol)?);
            // the table is already cut at tail_tol; its tail is reported, not re-checked
            let rcv = rho_c_finite(&s, beta, f64::INFINITY)?;
            let n = (rho * v).round() as usize;
            let ct = build_canonical_with(s, beta, n.max(1), tail_tol)?;
            let pmf = ct.occupation_pmf(0, n)?;
            let centre = n as f64 / v - rcv.value;
            let vg = v.powf(gamma);
            let mean = ct.mean_occupation(0, n)?;
            let mut rows = Vec::new();
            for &lam in lambdas {
                let law = fluctuation_law(case, lam, beta)?;
                let lf = pmf.log_laplace(-lam * vg / v) - lam * vg * centre;
                let finite = lf.exp();
                rows.push(FluctuationRow {
                    volume: v,
                    n,
                    lambda: lam,
                    gamma,
                    rho_c_finite: rcv.value,
                    rho_c_tail: rcv.tail_bound,
                    finite,
                    law: law.value,
                    law_tail: law.tail_bound,
                    gap: (finite - law.value).abs(),
                    centered_mean: vg * (mean / v - centre),
                });
            }
            Ok(rows)
        })
        .collect();
    let mut out = Vec::new();
    for r in per_v {
        out.extend(r?);
    }
    Ok(out)
}
