//! Grand-canonical finite-volume laws, chemical potential, critical
//! density and the A(ρ) equation.
//!
//! Chemical potentials are passed as μ̄ = μ − E₁(V) < 0 throughout; the
//! absolute μ is available on [`GcSolution`].

use crate::error::{Error, Result};
use crate::numeric::{brent, bose, integrate_to_infinity, neg_log1m_exp, Sum};
use crate::spectrum::{BoxGeometry, Mode, RegimeLabel, SpectrumTable};
use serde::Serialize;
use std::f64::consts::{PI, SQRT_2};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tol: 1e-12,
            max_iter: 200,
        }
    }
}

fn check_mu_bar(mu_bar: f64) -> Result<()> {
    if !(mu_bar < 0.0) {
        return Err(Error::Domain(format!(
            "chemical potential must lie below the ground level (mu_bar = {mu_bar})"
        )));
    }
    Ok(())
}

fn check_beta(beta: f64) -> Result<()> {
    if !(beta > 0.0 && beta.is_finite()) {
        return Err(Error::Domain(format!("beta must be positive, got {beta}")));
    }
    Ok(())
}

/// ⟨N_k⟩ = 1/(e^{β(η_k−μ̄)} − 1).
pub fn mean_occupation(table: &SpectrumTable, mu_bar: f64, k: usize, beta: f64) -> Result<f64> {
    check_mu_bar(mu_bar)?;
    check_beta(beta)?;
    let g = *table.gaps().get(k).ok_or(Error::OutOfRange {
        index: k,
        limit: table.len(),
    })?;
    Ok(bose(beta * (g - mu_bar)))
}

/// (1/V) Σ_k ⟨N_k⟩ over the table.
pub fn gc_density(table: &SpectrumTable, mu_bar: f64, beta: f64) -> Result<f64> {
    check_mu_bar(mu_bar)?;
    check_beta(beta)?;
    Ok(density_unchecked(table, mu_bar, beta))
}

fn density_unchecked(table: &SpectrumTable, mu_bar: f64, beta: f64) -> f64 {
    let mut s = Sum::new();
    // smallest terms first
    for &g in table.gaps().iter().rev() {
        s.add(bose(beta * (g - mu_bar)));
    }
    s.value() / table.volume()
}

/// ln Ξ_V(μ) = −Σ_k ln(1 − e^{−β(η_k−μ̄)}).
pub fn log_grand_partition(table: &SpectrumTable, mu_bar: f64, beta: f64) -> Result<f64> {
    check_mu_bar(mu_bar)?;
    check_beta(beta)?;
    let mut s = Sum::new();
    for &g in table.gaps().iter().rev() {
        s.add(neg_log1m_exp(beta * (g - mu_bar)));
    }
    Ok(s.value())
}

/// Finite-volume solution of gc_density(μ̄) = ρ.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GcSolution {
    pub mu: f64,
    pub mu_bar: f64,
    pub rho: f64,
    /// |density − ρ|/ρ at the returned μ̄.
    pub residual: f64,
    pub regime: Option<RegimeLabel>,
    /// Search bracket in μ̄ handed to the root finder.
    pub bracket: (f64, f64),
    pub evaluations: usize,
    /// Bound on the density carried by levels beyond the spectral cutoff.
    pub tail_bound: f64,
}

pub fn solve_mu(table: &SpectrumTable, rho: f64, beta: f64) -> Result<GcSolution> {
    solve_mu_with(table, rho, beta, SolverOptions::default())
}

/// Bracketed Brent solve in u = ln(−βμ̄).
pub fn solve_mu_with(
    table: &SpectrumTable,
    rho: f64,
    beta: f64,
    opts: SolverOptions,
) -> Result<GcSolution> {
    check_beta(beta)?;
    if !(rho > 0.0 && rho.is_finite()) {
        return Err(Error::Domain(format!("density must be positive, got {rho}")));
    }
    if table.is_empty() {
        return Err(Error::Domain("empty spectrum".into()));
    }
    let v = table.volume();
    let lnp = (1.0 / (rho * v)).ln_1p();
    let near = 0.5 * lnp;
    let mut far = lnp.max(1.0);
    let density_at = |x: f64| density_unchecked(table, -x / beta, beta);
    let mut guard = 0;
    while density_at(far) >= rho {
        far *= 2.0;
        guard += 1;
        if guard > 2000 || !far.is_finite() {
            return Err(Error::NoConvergence {
                lo: -far / beta,
                hi: -near / beta,
                iterations: guard,
            });
        }
    }
    let f = |u: f64| density_at(u.exp()) / rho - 1.0;
    let out = brent(f, near.ln(), far.ln(), 0.25 * opts.tol, opts.max_iter).map_err(|_| {
        Error::NoConvergence {
            lo: -far / beta,
            hi: -near / beta,
            iterations: opts.max_iter,
        }
    })?;
    let mu_bar = -out.x.exp() / beta;
    let residual = out.fx.abs();
    if residual > opts.tol {
        return Err(Error::NoConvergence {
            lo: -far / beta,
            hi: -near / beta,
            iterations: opts.max_iter,
        });
    }
    Ok(GcSolution {
        mu: table.ground_energy() + mu_bar,
        mu_bar,
        rho,
        residual,
        regime: table.geometry().map(|g| g.regime()),
        bracket: (-far / beta, -near / beta),
        evaluations: out.evaluations,
        tail_bound: table.bose_tail(beta, mu_bar) / v,
    })
}

/// Limiting critical density with a quadrature error estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CriticalDensity {
    pub beta: f64,
    pub value: f64,
    pub quadrature_error: f64,
}

/// ∫₀^∞ dF(η)/(e^{β(η−μ̄)}−1) with η = t², for μ̄ ≤ 0.
fn limit_density_with_error(mu_bar: f64, beta: f64) -> (f64, f64) {
    let c = SQRT_2 / (PI * PI);
    let integrand = move |t: f64| {
        let x = beta * (t * t - mu_bar);
        if x == 0.0 {
            return c / beta;
        }
        c * t * t / x.exp_m1()
    };
    integrate_to_infinity(integrand, 0.0, 1.0 / beta.sqrt(), 1e-17, 1e-300)
}

pub fn critical_density(beta: f64) -> Result<CriticalDensity> {
    check_beta(beta)?;
    let (value, err) = limit_density_with_error(0.0, beta);
    Ok(CriticalDensity {
        beta,
        value,
        quadrature_error: err,
    })
}

/// Limiting density at μ̄ ≤ 0.
pub fn limit_density(mu_bar: f64, beta: f64) -> Result<f64> {
    check_beta(beta)?;
    if mu_bar > 0.0 {
        return Err(Error::Domain(format!("mu_bar must be <= 0, got {mu_bar}")));
    }
    Ok(limit_density_with_error(mu_bar, beta).0)
}

/// Root μ̄(ρ) ≤ 0 of the limiting density equation, for 0 < ρ ≤ ρ_c.
pub fn limiting_mu_bar(rho: f64, beta: f64) -> Result<f64> {
    check_beta(beta)?;
    let rc = critical_density(beta)?.value;
    if !(rho > 0.0) {
        return Err(Error::Domain(format!("density must be positive, got {rho}")));
    }
    if rho > rc {
        return Err(Error::Domain(format!(
            "rho = {rho} exceeds the critical density {rc}; the limit is 0"
        )));
    }
    if rho == rc {
        return Ok(0.0);
    }
    let f = |u: f64| limit_density_with_error(-u.exp() / beta, beta).0 / rho - 1.0;
    let mut hi = 0.0;
    while f(hi) > 0.0 {
        hi += 2.0;
    }
    let mut lo = hi - 2.0;
    while f(lo) < 0.0 {
        lo -= 2.0;
        if lo < -700.0 {
            return Ok(0.0);
        }
    }
    let out = brent(f, lo, hi, 1e-14, 200)?;
    Ok(-out.x.exp() / beta)
}

/// Root of the type II amplitude equation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ACoefficient {
    pub rho: f64,
    pub rho_c: f64,
    pub value: f64,
    pub truncation: usize,
    /// |series(A) + tail estimate − (ρ−ρ_c)|.
    pub residual: f64,
    /// Half-width of the integral sandwich around the tail estimate.
    pub tail_bound: f64,
}

/// Default truncation of the amplitude series.
pub const DEFAULT_A_TERMS: usize = 100_000;

/// Σ_{j=1}^M [βπ²(j²−1)/2 + 1/A]^{-1}, plus the integral estimate of the
/// remainder and its uncertainty. Returns (partial, tail_estimate, tail_halfwidth).
pub fn a_series(a: f64, beta: f64, m: usize) -> (f64, f64, f64) {
    let scale = 2.0 / (beta * PI * PI);
    let z = scale / a - 1.0;
    let mut s = Sum::new();
    for j in (1..=m).rev() {
        let jf = j as f64;
        s.add(1.0 / (jf * jf + z));
    }
    let upper = tail_integral(m as f64, z);
    let lower = tail_integral(m as f64 + 1.0, z);
    (
        scale * s.value(),
        scale * 0.5 * (upper + lower),
        scale * 0.5 * (upper - lower),
    )
}

/// ∫_x^∞ dj/(j²+z) for x² + z > 0, z > −1.
fn tail_integral(x: f64, z: f64) -> f64 {
    if z > 0.0 {
        let r = z.sqrt();
        (0.5 * PI - (x / r).atan()) / r
    } else if z < 0.0 {
        let w = (-z).sqrt();
        ((x + w) / (x - w)).ln() / (2.0 * w)
    } else {
        1.0 / x
    }
}

pub fn solve_a(rho: f64, beta: f64) -> Result<ACoefficient> {
    solve_a_with(rho, beta, DEFAULT_A_TERMS)
}

pub fn solve_a_with(rho: f64, beta: f64, m: usize) -> Result<ACoefficient> {
    check_beta(beta)?;
    if m < 2 {
        return Err(Error::Domain("series truncation must be at least 2".into()));
    }
    let rho_c = critical_density(beta)?.value;
    let excess = rho - rho_c;
    if !(excess > 0.0) {
        return Err(Error::Domain(format!(
            "rho = {rho} must exceed the critical density {rho_c}"
        )));
    }
    let f = |la: f64| {
        let (s, t, _) = a_series(la.exp(), beta, m);
        (s + t) / excess - 1.0
    };
    let hi = excess;
    let lo = (excess - 1.5 / (beta * PI * PI)).max(excess * 1e-6);
    let mut lo = lo;
    while f(lo.ln()) > 0.0 {
        lo *= 1e-3;
        if lo < 1e-300 {
            return Err(Error::NoConvergence {
                lo,
                hi,
                iterations: 0,
            });
        }
    }
    let out = brent(f, lo.ln(), hi.ln(), 1e-15, 200)?;
    let value = out.x.exp();
    let (s, t, h) = a_series(value, beta, m);
    Ok(ACoefficient {
        rho,
        rho_c,
        value,
        truncation: m,
        residual: (s + t - excess).abs(),
        tail_bound: h,
    })
}

/// Limit-law parameters shared by the GC formulas.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GcLimitModel {
    pub rho: f64,
    pub beta: f64,
    pub rho_c: f64,
    pub a: Option<ACoefficient>,
}

impl GcLimitModel {
    /// Solves for A only when the regime needs it.
    pub fn new(rho: f64, beta: f64, regime: RegimeLabel) -> Result<Self> {
        let rho_c = critical_density(beta)?.value;
        let a = if regime == RegimeLabel::TypeII && rho > rho_c {
            Some(solve_a(rho, beta)?)
        } else {
            None
        };
        Ok(Self {
            rho,
            beta,
            rho_c,
            a,
        })
    }

    pub fn excess(&self) -> f64 {
        (self.rho - self.rho_c).max(0.0)
    }

    pub fn condensed(&self) -> bool {
        self.rho > self.rho_c
    }

    /// Type II ladder amplitude [βπ²(n²−1)/2 + 1/A]^{-1}.
    pub fn ladder_amplitude(&self, n1: u32) -> Option<f64> {
        let a = self.a?.value;
        let n = n1 as f64;
        Some(1.0 / (0.5 * self.beta * PI * PI * (n * n - 1.0) + 1.0 / a))
    }
}

/// Limiting occupation density of `mode`: ⟨N⟩/V for types I and II,
/// V^{2(α₁−1)}⟨N⟩ for type III. Zero below the critical density.
pub fn gc_occupation_limit(model: &GcLimitModel, regime: RegimeLabel, mode: Mode) -> Result<f64> {
    if !model.condensed() {
        return Ok(0.0);
    }
    let y = model.excess();
    Ok(match regime {
        RegimeLabel::TypeI => {
            if mode == Mode::GROUND {
                y
            } else {
                0.0
            }
        }
        RegimeLabel::TypeII => {
            if mode.is_ladder() {
                model
                    .ladder_amplitude(mode.0[0])
                    .ok_or_else(|| Error::Domain("amplitude A was not solved".into()))?
            } else {
                0.0
            }
        }
        RegimeLabel::TypeIII => {
            if mode.is_ladder() {
                2.0 * y * y
            } else {
                0.0
            }
        }
    })
}

/// Exact GC Laplace transform of N_k: (1−e^{−x})/(1−e^{−x−λ}), x = β(η_k−μ̄).
pub fn gc_laplace_finite(
    table: &SpectrumTable,
    mu_bar: f64,
    k: usize,
    lambda: f64,
    beta: f64,
) -> Result<f64> {
    check_mu_bar(mu_bar)?;
    check_beta(beta)?;
    let g = *table.gaps().get(k).ok_or(Error::OutOfRange {
        index: k,
        limit: table.len(),
    })?;
    let x = beta * (g - mu_bar);
    if !(x + lambda > 0.0) {
        return Err(Error::Domain(format!(
            "lambda = {lambda} makes the geometric series diverge"
        )));
    }
    Ok((-x).exp_m1() / (-x - lambda).exp_m1())
}

/// Limiting GC Laplace transform of the occupation density (type III on
/// the V^{2(1−α₁)} scale). Modes that carry no condensate give 1.
pub fn gc_laplace_limit(
    model: &GcLimitModel,
    regime: RegimeLabel,
    mode: Mode,
    lambda: f64,
) -> Result<f64> {
    if !model.condensed() {
        return Err(Error::Domain(format!(
            "rho = {} does not exceed the critical density {}",
            model.rho, model.rho_c
        )));
    }
    let m = gc_occupation_limit(model, regime, mode)?;
    if m == 0.0 {
        return Ok(1.0);
    }
    // every limit law here is exponential with mean m
    let d = 1.0 + lambda * m;
    if !(d > 0.0) {
        return Err(Error::Domain(format!("lambda = {lambda} outside the transform domain")));
    }
    Ok(1.0 / d)
}

/// The product that tends to 1 in the leading-order asymptotics of μ̄_V:
/// βV|μ̄|(ρ−ρ_c) (type I), βVA|μ̄| (type II), 2βV^{2(1−α₁)}|μ̄|(ρ−ρ_c)² (type III).
pub fn mu_bar_asymptotic_product(geom: &BoxGeometry, model: &GcLimitModel, mu_bar: f64) -> Result<f64> {
    if !model.condensed() {
        return Err(Error::Domain("asymptotic product needs rho > rho_c".into()));
    }
    let v = geom.volume();
    let y = model.excess();
    let b = model.beta * mu_bar.abs();
    Ok(match geom.regime() {
        RegimeLabel::TypeI => b * v * y,
        RegimeLabel::TypeII => {
            b * v * model.a.ok_or_else(|| Error::Domain("amplitude A was not solved".into()))?.value
        }
        RegimeLabel::TypeIII => 2.0 * b * v.powf(2.0 * (1.0 - geom.alpha()[0])) * y * y,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectrum::{enumerate_below, spectrum_for_tolerance};
    use proptest::prelude::*;

    /// ζ(3/2) by direct summation plus an Euler–Maclaurin remainder.
    fn zeta_three_halves() -> f64 {
        let n = 10_000usize;
        let mut s = 0.0;
        for j in (1..n).rev() {
            s += (j as f64).powf(-1.5);
        }
        let x = n as f64;
        s + 2.0 * x.powf(-0.5) + 0.5 * x.powf(-1.5) + (1.5 / 12.0) * x.powf(-2.5)
            - (1.5 * 2.5 * 3.5 / 720.0) * x.powf(-4.5)
    }

    /// (2πβ)^{-3/2} Li_{3/2}(e^{βμ̄}): power series, or the expansion
    /// around z = 1 when βμ̄ is tiny.
    fn polylog_density(mu_bar: f64, beta: f64) -> f64 {
        let x = -beta * mu_bar;
        let li = if x < 1e-3 {
            let zeta_half = -1.460_354_508_809_586_8;
            let zeta_m_half = -0.207_886_224_977_354_57;
            let zeta_m_three_halves = -0.025_485_201_889_833_036;
            zeta_three_halves() - 2.0 * (PI * x).sqrt() - zeta_half * x + zeta_m_half * x * x / 2.0
                - zeta_m_three_halves * x * x * x / 6.0
        } else {
            let z = (-x).exp();
            let mut s = 0.0;
            let mut zj = z;
            for j in 1..2_000_000 {
                let t = zj / (j as f64).powf(1.5);
                s += t;
                if t < 1e-19 * s {
                    break;
                }
                zj *= z;
            }
            s
        };
        li / (2.0 * PI * beta).powf(1.5)
    }

    /// Closed form of Σ_{j≥1} 1/(j²+z).
    fn series_closed_form(z: f64) -> f64 {
        if z > 0.0 {
            let r = PI * z.sqrt();
            (r / r.tanh() - 1.0) / (2.0 * z)
        } else if z < 0.0 {
            let w = (-z).sqrt();
            let r = PI * w;
            (1.0 - r / r.tan()) / (2.0 * w * w)
        } else {
            PI * PI / 6.0
        }
    }

    #[test]
    fn critical_density_matches_zeta_series() {
        let rc = critical_density(1.0).unwrap();
        let oracle = zeta_three_halves() / (2.0 * PI).powf(1.5);
        assert!((rc.value / oracle - 1.0).abs() < 1e-12, "{} {}", rc.value, oracle);
        assert!((rc.value - 0.165869).abs() < 1e-6);
        assert!(rc.quadrature_error < 1e-10);
    }

    #[test]
    fn critical_density_scaling() {
        let r1 = critical_density(1.0).unwrap().value;
        let r2 = critical_density(2.0).unwrap().value;
        assert!((r2 / (2f64.powf(-1.5) * r1) - 1.0).abs() < 1e-12);
        let r3 = critical_density(0.37).unwrap().value;
        assert!((r3 / (0.37f64.powf(-1.5) * r1) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn limit_density_matches_polylog() {
        for &(mu, beta) in &[(-0.01, 1.0), (-0.5, 1.0), (-2.0, 0.5), (-0.1, 3.0)] {
            let q = limit_density(mu, beta).unwrap();
            let o = polylog_density(mu, beta);
            assert!((q / o - 1.0).abs() < 1e-11, "{mu} {beta}: {q} {o}");
        }
    }

    #[test]
    fn limiting_mu_bar_inverts_density() {
        let rc = critical_density(1.0).unwrap().value;
        for &f in &[0.1, 0.5, 0.9, 0.999] {
            let mu = limiting_mu_bar(f * rc, 1.0).unwrap();
            assert!(mu < 0.0);
            assert!((polylog_density(mu, 1.0) / (f * rc) - 1.0).abs() < 1e-10, "{f} {mu}");
        }
        assert_eq!(limiting_mu_bar(rc, 1.0).unwrap(), 0.0);
        assert!(limiting_mu_bar(1.1 * rc, 1.0).is_err());
        let deep = limiting_mu_bar(1e-8, 1.0).unwrap();
        assert!(deep < -10.0);
    }

    #[test]
    fn occupation_examples() {
        let t = SpectrumTable::from_energies(1.0, &[0.0, 2.0]).unwrap();
        // β(E_k−μ) = ln 2 → 1
        let mu = -(2f64.ln());
        assert!((mean_occupation(&t, mu, 0, 1.0).unwrap() - 1.0).abs() < 1e-15);
        assert!(mean_occupation(&t, -800.0, 1, 1.0).unwrap() < 1e-300);
        assert!(mean_occupation(&t, 0.0, 0, 1.0).is_err());
        assert!(gc_density(&t, 1e-3, 1.0).is_err());
    }

    #[test]
    fn density_increasing_and_divergent() {
        let g = BoxGeometry::new([0.4, 0.35, 0.25], 500.0).unwrap();
        let t = spectrum_for_tolerance(&g, 1.0, 1e-12).unwrap();
        let mut prev = 0.0;
        for &m in &[-5.0, -1.0, -0.1, -1e-3, -1e-6, -1e-9] {
            let d = gc_density(&t, m, 1.0).unwrap();
            assert!(d > prev);
            prev = d;
        }
        assert!(prev > 1e5);
    }

    #[test]
    fn solve_mu_reproduces_density() {
        let g = BoxGeometry::new([0.4, 0.35, 0.25], 1e3).unwrap();
        let t = spectrum_for_tolerance(&g, 1.0, 1e-12).unwrap();
        let rc = critical_density(1.0).unwrap().value;
        for &rho in &[1e-6, 0.5 * rc, 2.0 * rc, 10.0] {
            let s = solve_mu(&t, rho, 1.0).unwrap();
            assert!(s.residual <= 1e-12);
            assert!(s.mu < g.ground_energy());
            // independent re-summation
            let d: f64 = t.gaps().iter().map(|&e| 1.0 / ((e - s.mu_bar).exp() - 1.0)).sum::<f64>() / 1e3;
            assert!((d / rho - 1.0).abs() < 1e-11);
            assert!(s.tail_bound < 1e-12);
        }
    }

    #[test]
    fn type_one_mu_bar_asymptotics_improve() {
        let rc = critical_density(1.0).unwrap().value;
        let rho = 2.0 * rc;
        let model = GcLimitModel::new(rho, 1.0, RegimeLabel::TypeI).unwrap();
        let mut errs = Vec::new();
        for &v in &[1e3, 1e4, 1e5] {
            let g = BoxGeometry::new([0.4, 0.35, 0.25], v).unwrap();
            let t = spectrum_for_tolerance(&g, 1.0, 1e-12).unwrap();
            let s = solve_mu(&t, rho, 1.0).unwrap();
            let p = mu_bar_asymptotic_product(&g, &model, s.mu_bar).unwrap();
            errs.push((p - 1.0).abs());
        }
        assert!(errs[0] > errs[1] && errs[1] > errs[2], "{errs:?}");
    }

    #[test]
    fn subcritical_mu_bar_approaches_limit() {
        let rc = critical_density(1.0).unwrap().value;
        let rho = 0.5 * rc;
        let lim = limiting_mu_bar(rho, 1.0).unwrap();
        let mut errs = Vec::new();
        for &v in &[1e3, 1e4, 1e5] {
            let g = BoxGeometry::isotropic(v).unwrap();
            let t = spectrum_for_tolerance(&g, 1.0, 1e-12).unwrap();
            errs.push((solve_mu(&t, rho, 1.0).unwrap().mu_bar - lim).abs());
        }
        assert!(errs[0] > errs[1] && errs[1] > errs[2], "{errs:?}");
    }

    #[test]
    fn a_series_matches_closed_form() {
        for &a in &[0.01, 0.0614, 0.2, 1.0, 10.0] {
            let z = 2.0 / (PI * PI * a) - 1.0;
            let (s, t, h) = a_series(a, 1.0, 100_000);
            let exact = 2.0 / (PI * PI) * series_closed_form(z);
            assert!((s + t - exact).abs() <= h + 1e-14, "{a}: {} {}", s + t, exact);
            assert!(h < 1e-10);
        }
    }

    #[test]
    fn a_coefficient_at_twice_critical() {
        let rc = critical_density(1.0).unwrap().value;
        let a = solve_a(2.0 * rc, 1.0).unwrap();
        assert!(a.residual + a.tail_bound < 1e-10);
        let z = 2.0 / (PI * PI * a.value) - 1.0;
        let rhs = 2.0 / (PI * PI) * series_closed_form(z);
        assert!((rhs / rc - 1.0).abs() < 1e-11);
        assert!((a.value - 0.0614096).abs() < 1e-6, "{}", a.value);
    }

    #[test]
    fn a_asymptotics_in_the_excess() {
        let rc = critical_density(1.0).unwrap().value;
        // many ladder terms share the excess near criticality: A ≈ 2(ρ−ρ_c)²
        let mut prev = f64::INFINITY;
        for &e in &[1e-2, 1e-3, 1e-4] {
            let a = solve_a(rc + e, 1.0).unwrap();
            let d = (a.value / (2.0 * e * e) - 1.0).abs();
            assert!(d < prev, "{e}: {d}");
            prev = d;
        }
        assert!(prev < 1e-2);
        // far above: the ground term dominates, A ≈ (ρ−ρ_c) − 3/(2π²)
        let mut prev = f64::INFINITY;
        for &e in &[1.0, 10.0, 100.0] {
            let a = solve_a(rc + e, 1.0).unwrap();
            let d = (a.value - (e - 1.5 / (PI * PI))).abs();
            assert!(d < prev, "{e}: {d}");
            assert!((a.value / e - 1.0).abs() < 0.2 / e);
            prev = d;
        }
    }

    #[test]
    fn type_two_ladder_sums_to_excess() {
        let rc = critical_density(1.0).unwrap().value;
        let m = GcLimitModel::new(2.0 * rc, 1.0, RegimeLabel::TypeII).unwrap();
        let (s, t, _) = a_series(m.a.unwrap().value, 1.0, 100_000);
        let ladder: f64 = (1..=100_000u32)
            .rev()
            .map(|n| gc_occupation_limit(&m, RegimeLabel::TypeII, Mode::ladder(n)).unwrap())
            .sum();
        assert!((ladder - s).abs() < 1e-12);
        assert!((ladder + t - rc).abs() < 1e-10);
    }

    #[test]
    fn occupation_limit_examples() {
        let rc = critical_density(1.0).unwrap().value;
        let m1 = GcLimitModel::new(2.0 * rc, 1.0, RegimeLabel::TypeI).unwrap();
        assert!((gc_occupation_limit(&m1, RegimeLabel::TypeI, Mode::GROUND).unwrap() - rc).abs() < 1e-15);
        assert_eq!(gc_occupation_limit(&m1, RegimeLabel::TypeI, Mode([2, 1, 1])).unwrap(), 0.0);
        let m2 = GcLimitModel::new(2.0 * rc, 1.0, RegimeLabel::TypeII).unwrap();
        let g = gc_occupation_limit(&m2, RegimeLabel::TypeII, Mode::GROUND).unwrap();
        assert!((g / m2.a.unwrap().value - 1.0).abs() < 1e-15);
        let m3 = GcLimitModel::new(2.0 * rc, 1.0, RegimeLabel::TypeIII).unwrap();
        let v = gc_occupation_limit(&m3, RegimeLabel::TypeIII, Mode([2, 1, 1])).unwrap();
        assert!((v - 2.0 * rc * rc).abs() < 1e-15);
        let sub = GcLimitModel::new(0.5 * rc, 1.0, RegimeLabel::TypeI).unwrap();
        assert_eq!(gc_occupation_limit(&sub, RegimeLabel::TypeI, Mode::GROUND).unwrap(), 0.0);
        assert!(gc_laplace_limit(&sub, RegimeLabel::TypeI, Mode::GROUND, 1.0).is_err());
    }

    #[test]
    fn laplace_limit_derivative_is_occupation() {
        let rc = critical_density(1.0).unwrap().value;
        for regime in [RegimeLabel::TypeI, RegimeLabel::TypeII, RegimeLabel::TypeIII] {
            let m = GcLimitModel::new(2.0 * rc, 1.0, regime).unwrap();
            for mode in [Mode::GROUND, Mode([2, 1, 1]), Mode([3, 1, 1]), Mode([1, 2, 1])] {
                assert_eq!(gc_laplace_limit(&m, regime, mode, 0.0).unwrap(), 1.0);
                let h = 1e-6;
                let d = -(gc_laplace_limit(&m, regime, mode, h).unwrap()
                    - gc_laplace_limit(&m, regime, mode, -h).unwrap())
                    / (2.0 * h);
                let occ = gc_occupation_limit(&m, regime, mode).unwrap();
                assert!((d - occ).abs() < 1e-6, "{regime:?} {mode}: {d} {occ}");
            }
        }
        let m = GcLimitModel::new(2.0 * rc, 1.0, RegimeLabel::TypeI).unwrap();
        let v = gc_laplace_limit(&m, RegimeLabel::TypeI, Mode::GROUND, 2.0).unwrap();
        assert!((v - 1.0 / (1.0 + 2.0 * rc)).abs() < 1e-15);
        let m = GcLimitModel::new(2.0 * rc, 1.0, RegimeLabel::TypeIII).unwrap();
        let v = gc_laplace_limit(&m, RegimeLabel::TypeIII, Mode([4, 1, 1]), 2.0).unwrap();
        assert!((v - 1.0 / (1.0 + 4.0 * rc * rc)).abs() < 1e-15);
    }

    #[test]
    fn laplace_finite_limits() {
        let t = SpectrumTable::from_energies(1.0, &[0.0, 0.7]).unwrap();
        assert_eq!(gc_laplace_finite(&t, -0.3, 1, 0.0, 1.0).unwrap(), 1.0);
        let q = (-(0.7f64 + 0.3)).exp();
        let v = gc_laplace_finite(&t, -0.3, 1, 1e3, 1.0).unwrap();
        assert!((v - (1.0 - q)).abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn laplace_finite_matches_geometric_sum(x in 1e-3f64..5.0, lambda in 0.0f64..10.0) {
            let t = SpectrumTable::from_energies(1.0, &[0.0, x]).unwrap();
            let mu = -1e-3;
            let q = (-(x - mu)).exp();
            let mut s = 0.0;
            let mut term = 1.0 - q;
            let r = q * (-lambda).exp();
            for _ in 0..200_000 {
                s += term;
                term *= r;
                if term < 1e-30 { break; }
            }
            let v = gc_laplace_finite(&t, mu, 1, lambda, 1.0).unwrap();
            prop_assert!((v / s - 1.0).abs() < 1e-13, "{} {}", v, s);
        }

        #[test]
        fn density_monotone_in_mu(a in -3.0f64..-1e-6, b in -3.0f64..-1e-6) {
            let g = BoxGeometry::new([0.5, 0.3, 0.2], 100.0).unwrap();
            let t = enumerate_below(&g, g.ground_energy() + 40.0).unwrap();
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            prop_assume!(hi - lo > 1e-9);
            prop_assert!(gc_density(&t, lo, 1.0).unwrap() < gc_density(&t, hi, 1.0).unwrap());
        }
    }
}
