//! Kac distribution: the law of the particle number in the grand-canonical
//! state, which mixes canonical states into the grand-canonical one.

use crate::canonical::{build_canonical_with, log_xi, CanonicalTable};
use crate::error::{Error, Result};
use crate::grandcanonical::{gc_laplace_finite, solve_mu, GcLimitModel};
use crate::limits::log_theta;
use crate::numeric::{bose, log_sum_exp, Sum};
use crate::spectrum::{spectrum_for_tolerance, BoxGeometry, RegimeLabel};
use rayon::prelude::*;
use serde::Serialize;
use std::f64::consts::PI;
use std::sync::Arc;

/// Tolerance on the weight beyond the truncation point.
pub const DEFAULT_KAC_TAIL: f64 = 1e-12;

/// w_n = Z(n)e^{βμn}/Ξ(μ) for n = 0..=n_cut.
#[derive(Debug, Clone, Serialize)]
pub struct KacWeights {
    pub mu_bar: f64,
    pub beta: f64,
    pub volume: f64,
    weights: Vec<f64>,
    /// Bound on Σ_{n>n_cut} w_n.
    pub tail_bound: f64,
    /// w_{n_cut+1}/w_{n_cut}; later ratios are no larger.
    pub last_ratio: f64,
}

impl KacWeights {
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn n_cut(&self) -> usize {
        self.weights.len() - 1
    }

    pub fn mass(&self) -> f64 {
        let mut s = Sum::new();
        for &w in self.weights.iter().rev() {
            s.add(w);
        }
        s.value()
    }

    /// Σ (n/V) w_n.
    pub fn mean_density(&self) -> f64 {
        let mut s = Sum::new();
        for (n, &w) in self.weights.iter().enumerate().rev() {
            s.add(n as f64 * w);
        }
        s.value() / self.volume
    }

    /// Σ w_n e^{−λn/V}, the transform of the density law.
    pub fn laplace(&self, lambda: f64) -> f64 {
        let h = lambda / self.volume;
        let terms: Vec<f64> = self
            .weights
            .iter()
            .enumerate()
            .filter(|(_, &w)| w > 0.0)
            .map(|(n, &w)| w.ln() - h * n as f64)
            .collect();
        log_sum_exp(&terms).exp()
    }

    /// Bound on Σ_{n>n_cut} w_n e^{sn}, s ≥ 0 (infinite when the geometric
    /// envelope does not converge).
    pub fn tail_bound_weighted(&self, s: f64) -> f64 {
        if s <= 0.0 {
            return self.tail_bound;
        }
        let q = self.last_ratio * s.exp();
        if q >= 1.0 {
            return f64::INFINITY;
        }
        let nc = self.n_cut();
        self.weights[nc] * (s * nc as f64).exp() * q / (1.0 - q)
    }
}

fn check_mu_bar(mu_bar: f64) -> Result<()> {
    if !(mu_bar < 0.0) {
        return Err(Error::Domain(format!("need mu below the ground level, got mu_bar = {mu_bar}")));
    }
    Ok(())
}

/// Kac weights truncated where the geometric envelope of the remaining
/// weight drops below `tol`.
pub fn kac_weights(ct: &CanonicalTable, mu_bar: f64, tol: f64) -> Result<KacWeights> {
    build(ct, mu_bar, None, tol)
}

/// Kac weights for n = 0..=n_cut.
pub fn kac_weights_with_cut(ct: &CanonicalTable, mu_bar: f64, n_cut: usize) -> Result<KacWeights> {
    build(ct, mu_bar, Some(n_cut), 0.0)
}

fn build(ct: &CanonicalTable, mu_bar: f64, n_cut: Option<usize>, tol: f64) -> Result<KacWeights> {
    check_mu_bar(mu_bar)?;
    let beta = ct.beta();
    if let Some(nc) = n_cut {
        if nc >= ct.n_max() {
            return Err(Error::OutOfRange {
                index: nc,
                limit: ct.n_max() - 1,
            });
        }
    }
    let lz = ct.log_z_shifted_all();
    let lxi = log_xi(ct.spectrum(), mu_bar, beta);
    let bm = beta * mu_bar;
    let logw = |n: usize| lz[n] + bm * n as f64 - lxi;
    // ratio w_{n+1}/w_n = e^{βμ̄} z(n+1)/z(n), nonincreasing in n
    let ratio = |n: usize| (bm + lz[n + 1] - lz[n]).exp();
    let mut weights = Vec::new();
    let mut tail = f64::INFINITY;
    let mut last = 1.0;
    for n in 0..ct.n_max() {
        let w = logw(n).exp();
        weights.push(w);
        let r = ratio(n);
        let bound = if r < 1.0 { w * r / (1.0 - r) } else { f64::INFINITY };
        last = r;
        tail = bound;
        match n_cut {
            Some(nc) if n == nc => break,
            None if bound < tol => break,
            _ => {}
        }
    }
    if n_cut.is_none() && !(tail < tol) {
        return Err(Error::CutoffInsufficient { tail, tol });
    }
    Ok(KacWeights {
        mu_bar,
        beta,
        volume: ct.volume(),
        weights,
        tail_bound: tail,
        last_ratio: last,
    })
}

/// Both sides of ⟨e^{−λN_k}⟩_GC(μ) = Σ_n w_n ⟨e^{−λN_k}⟩_C(n).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DecompositionCheck {
    pub lhs: f64,
    pub rhs: f64,
    /// Bound on the rhs terms beyond n_cut.
    pub tail_bound: f64,
}

impl DecompositionCheck {
    pub fn passes(&self, abs_tol: f64) -> bool {
        (self.lhs - self.rhs).abs() <= abs_tol + self.tail_bound
    }
}

pub fn decomposition_check(
    ct: &CanonicalTable,
    kw: &KacWeights,
    k: usize,
    lambda: f64,
) -> Result<DecompositionCheck> {
    let lhs = gc_laplace_finite(ct.spectrum(), kw.mu_bar, k, lambda, ct.beta())?;
    let mut terms = Vec::with_capacity(kw.weights.len());
    for (n, &w) in kw.weights.iter().enumerate() {
        if w > 0.0 {
            terms.push(w.ln() + ct.log_occupation_laplace(k, n, lambda)?);
        }
    }
    let rhs = log_sum_exp(&terms).exp();
    // N_k ≤ n, so each canonical transform is at most e^{max(−λ,0) n}
    Ok(DecompositionCheck {
        lhs,
        rhs,
        tail_bound: kw.tail_bound_weighted((-lambda).max(0.0)),
    })
}

/// How the type II density prefactor is formed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Default)]
pub enum Prefactor {
    /// βπ² s(2/(βA) − π²), s(z) = sinh(√z)/√z.
    #[default]
    Normalized,
    /// π² s(2/A − π), the printed form (β = 1).
    AsPrinted,
}

/// Limiting density of the particle-density law.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum KacDensity {
    PointMass { at: f64 },
    Density { value: f64 },
}

/// s(z) = sinh(√z)/√z, continued to z < 0 as sin(√|z|)/√|z|.
pub fn sinhc_sqrt(z: f64) -> f64 {
    if z.abs() < 1e-8 {
        return 1.0 + z / 6.0;
    }
    if z > 0.0 {
        let r = z.sqrt();
        r.sinh() / r
    } else {
        let r = (-z).sqrt();
        r.sin() / r
    }
}

fn type_two_parts(model: &GcLimitModel) -> Result<(f64, f64)> {
    let a = model
        .a
        .ok_or_else(|| Error::Domain("type II density needs the amplitude A".into()))?
        .value;
    let z = 2.0 / (model.beta * PI * PI * a) - 1.0;
    Ok((a, z))
}

pub fn limiting_kac_density(
    model: &GcLimitModel,
    regime: RegimeLabel,
    x: f64,
    prefactor: Prefactor,
) -> Result<KacDensity> {
    if !(x >= 0.0) {
        return Err(Error::Domain(format!("x must be non-negative, got {x}")));
    }
    if !model.condensed() || regime == RegimeLabel::TypeIII {
        return Ok(KacDensity::PointMass { at: model.rho });
    }
    if x <= model.rho_c {
        return Ok(KacDensity::Density { value: 0.0 });
    }
    let u = x - model.rho_c;
    let value = match regime {
        RegimeLabel::TypeI => {
            let y = model.excess();
            (-u / y).exp() / y
        }
        RegimeLabel::TypeII => {
            let (a, z) = type_two_parts(model)?;
            let beta = model.beta;
            let pre = match prefactor {
                Prefactor::Normalized => beta * PI * PI * sinhc_sqrt(PI * PI * z),
                Prefactor::AsPrinted => PI * PI * sinhc_sqrt(2.0 / a - PI),
            };
            let t = 0.5 * beta * PI * PI * u;
            pre * (-t * z + log_theta(t)).exp()
        }
        RegimeLabel::TypeIII => unreachable!(),
    };
    Ok(KacDensity::Density { value })
}

/// ∫ e^{−λx} K̃(ρ; dx) for the limiting law.
pub fn limiting_kac_laplace(model: &GcLimitModel, regime: RegimeLabel, lambda: f64) -> Result<f64> {
    if !model.condensed() || regime == RegimeLabel::TypeIII {
        return Ok((-lambda * model.rho).exp());
    }
    let y = model.excess();
    let base = (-lambda * model.rho_c).exp();
    match regime {
        RegimeLabel::TypeI => {
            let d = 1.0 + lambda * y;
            if !(d > 0.0) {
                return Err(Error::Domain(format!("lambda = {lambda} outside the transform domain")));
            }
            Ok(base / d)
        }
        RegimeLabel::TypeII => {
            // Π_n (1 + λ m_n)^{-1}, m_n^{-1} = (βπ²/2)(n² + z), via Π(1 + w/n²) = s(π²w)
            let (_, z) = type_two_parts(model)?;
            let shifted = z + 2.0 * lambda / (model.beta * PI * PI);
            if !(shifted > -1.0) {
                return Err(Error::Domain(format!("lambda = {lambda} outside the transform domain")));
            }
            Ok(base * sinhc_sqrt(PI * PI * z) / sinhc_sqrt(PI * PI * shifted))
        }
        RegimeLabel::TypeIII => unreachable!(),
    }
}

/// One (V, λ) entry of the finite-volume Kac transform sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KacConvergenceRow {
    pub volume: f64,
    pub mu_bar: f64,
    pub n_cut: usize,
    pub lambda: f64,
    pub finite: f64,
    pub limit: f64,
    pub gap: f64,
    pub tail_bound: f64,
}

/// Canonical table large enough that the Kac weights at μ_V(ρ) reach `tol`,
/// with at most `n_cap` particles. Returns the table and μ̄_V(ρ).
pub fn kac_table(
    g: &BoxGeometry,
    rho: f64,
    beta: f64,
    spectral_tol: f64,
    tol: f64,
    n_cap: usize,
) -> Result<(CanonicalTable, f64)> {
    let s = Arc::new(spectrum_for_tolerance(g, beta, spectral_tol)?);
    let sol = solve_mu(&s, rho, beta)?;
    let ground = bose(-beta * sol.mu_bar);
    let n = rho * g.volume();
    let mut n_max = ((n + 30.0 * (ground + 1.0) + 20.0 * n.sqrt() + 64.0) as usize).min(n_cap);
    loop {
        let ct = build_canonical_with(s.clone(), beta, n_max, spectral_tol)?;
        match kac_weights(&ct, sol.mu_bar, tol) {
            Ok(_) => return Ok((ct, sol.mu_bar)),
            Err(Error::CutoffInsufficient { .. }) if n_max < n_cap => n_max = (2 * n_max).min(n_cap),
            Err(e) => return Err(e),
        }
    }
}

/// Σ_n w_n e^{−λn/V} at μ_V(ρ) for each geometry, next to the limit law.
pub fn empirical_kac_convergence(
    geoms: &[BoxGeometry],
    rho: f64,
    lambdas: &[f64],
    beta: f64,
) -> Result<Vec<KacConvergenceRow>> {
    let per_v: Vec<Result<Vec<KacConvergenceRow>>> = geoms
        .par_iter()
        .map(|g| {
            let regime = g.regime();
            let model = GcLimitModel::new(rho, beta, regime)?;
            let (ct, mu_bar) = kac_table(g, rho, beta, 1e-12, DEFAULT_KAC_TAIL, 1 << 24)?;
            let kw = kac_weights(&ct, mu_bar, DEFAULT_KAC_TAIL)?;
            lambdas
                .iter()
                .map(|&lam| {
                    let finite = kw.laplace(lam);
                    let limit = limiting_kac_laplace(&model, regime, lam)?;
                    Ok(KacConvergenceRow {
                        volume: g.volume(),
                        mu_bar,
                        n_cut: kw.n_cut(),
                        lambda: lam,
                        finite,
                        limit,
                        gap: (finite - limit).abs(),
                        tail_bound: kw.tail_bound_weighted((-lam / g.volume()).max(0.0)),
                    })
                })
                .collect()
        })
        .collect();
    let mut out = Vec::new();
    for r in per_v {
        out.extend(r?);
    }
    Ok(out)
}
