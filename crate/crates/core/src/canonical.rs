//! Exact finite-volume canonical ensemble.
//!
//! Internally energies are shifted by E₁(V): the table stores
//! L(n) = ln Z(n) + nβE₁ and power sums of e^{−kβη_j}. Every ratio used
//! below is invariant under this shift.

use crate::error::{Error, Result};
use crate::numeric::{bose, log1m_exp, neg_log1m_exp, Sum};
use crate::spectrum::SpectrumTable;
use serde::Serialize;
use std::sync::Arc;

/// Default tolerance on the first power-sum tail.
pub const DEFAULT_TAIL_TOL: f64 = 1e-12;

/// Largest exponent kβη kept in a power sum; e^{−50} is far below rounding.
const POWER_SUM_CUT: f64 = 50.0;

#[derive(Debug, Clone)]
pub struct CanonicalTable {
    spectrum: Arc<SpectrumTable>,
    beta: f64,
    log_z: Vec<f64>,
    log_power_sums: Vec<f64>,
    s1_tail: f64,
}

pub fn build_canonical(spectrum: Arc<SpectrumTable>, beta: f64, n_max: usize) -> Result<CanonicalTable> {
    build_canonical_with(spectrum, beta, n_max, DEFAULT_TAIL_TOL)
}

/// Power-sum recursion Z(n) = (1/n) Σ_{k=1}^n S_k Z(n−k) in log domain.
pub fn build_canonical_with(
    spectrum: Arc<SpectrumTable>,
    beta: f64,
    n_max: usize,
    tail_tol: f64,
) -> Result<CanonicalTable> {
    if !(beta > 0.0 && beta.is_finite()) {
        return Err(Error::Domain(format!("beta must be positive, got {beta}")));
    }
    if n_max < 1 {
        return Err(Error::Domain("n_max must be at least 1".into()));
    }
    if spectrum.is_empty() {
        return Err(Error::Domain("empty spectrum".into()));
    }
    let s1_tail = spectrum.boltzmann_tail(beta, 1);
    if s1_tail > tail_tol {
        return Err(Error::CutoffInsufficient {
            tail: s1_tail,
            tol: tail_tol,
        });
    }

    let (exc, zero_gaps, k_exc) = excited_sums(spectrum.gaps(), beta, n_max, None);
    let log_power_sums: Vec<f64> = (0..=n_max)
        .map(|k| if k == 0 { f64::NEG_INFINITY } else { (exc[k] + zero_gaps as f64).ln() })
        .collect();
    let log_z = log_z_from_sums(&exc, zero_gaps, k_exc, n_max);

    Ok(CanonicalTable {
        spectrum,
        beta,
        log_z,
        log_power_sums,
        s1_tail,
    })
}

/// Excited power sums Σ e^{−kβη} over nonzero gaps (optionally skipping one
/// mode), the number of zero gaps, and the largest k kept.
fn excited_sums(gaps: &[f64], beta: f64, n_max: usize, skip: Option<usize>) -> (Vec<f64>, usize, usize) {
    let mut sums = vec![Sum::new(); n_max + 1];
    let mut zero_gaps = 0usize;
    let mut k_exc = 0usize;
    for (i, &g) in gaps.iter().enumerate() {
        if skip == Some(i) {
            continue;
        }
        let x = beta * g;
        if x == 0.0 {
            zero_gaps += 1;
            continue;
        }
        let kmax = ((POWER_SUM_CUT / x) as usize).min(n_max);
        k_exc = k_exc.max(kmax);
        let t = (-x).exp();
        let mut p = t;
        for (k, s) in sums.iter_mut().enumerate().take(kmax + 1).skip(1) {
            if k % 32 == 0 {
                p = (-(k as f64) * x).exp();
            }
            s.add(p);
            p *= t;
        }
    }
    (sums.iter().map(|s| s.value()).collect(), zero_gaps, k_exc)
}

/// ln z(n), n ≤ n_max, from excited sums and the zero-gap count.
fn log_z_from_sums(exc: &[f64], zero_gaps: usize, k_exc: usize, n_max: usize) -> Vec<f64> {
    match zero_gaps {
        0 => {
            let log_exc: Vec<f64> = exc.iter().map(|v| v.ln()).collect();
            recursion(&log_exc, n_max, k_exc)
        }
        1 => {
            // a single zero gap contributes weight 1 per particle:
            // z(n) = Σ_{m≤n} z_exc(m), and z_exc only needs k ≤ k_exc
            let log_exc: Vec<f64> = exc.iter().map(|v| v.ln()).collect();
            let lz_exc = recursion(&log_exc, n_max, k_exc);
            let mut lz = vec![0.0; n_max + 1];
            for n in 1..=n_max {
                let (a, b) = (lz[n - 1], lz_exc[n]);
                lz[n] = if a >= b {
                    a + (b - a).exp().ln_1p()
                } else {
                    b + (a - b).exp().ln_1p()
                };
            }
            lz
        }
        _ => {
            let log_s: Vec<f64> = (0..=n_max)
                .map(|k| if k == 0 { f64::NEG_INFINITY } else { (exc[k] + zero_gaps as f64).ln() })
                .collect();
            recursion(&log_s, n_max, n_max)
        }
    }
}

/// ln z(n) from z(n) = (1/n) Σ_{k=1}^{min(n,kmax)} S_k z(n−k), z(0) = 1.
fn recursion(log_s: &[f64], n_max: usize, kmax: usize) -> Vec<f64> {
    let mut log_z = vec![0.0; n_max + 1];
    let mut terms = vec![0.0; n_max + 1];
    for n in 1..=n_max {
        let top = n.min(kmax);
        if top == 0 {
            log_z[n] = f64::NEG_INFINITY;
            continue;
        }
        let mut m = f64::NEG_INFINITY;
        for k in 1..=top {
            let t = log_s[k] + log_z[n - k];
            terms[k] = t;
            if t > m {
                m = t;
            }
        }
        if m == f64::NEG_INFINITY {
            log_z[n] = m;
            continue;
        }
        let mut s = Sum::new();
        for &t in &terms[1..=top] {
            s.add((t - m).exp());
        }
        log_z[n] = m + s.value().ln() - (n as f64).ln();
    }
    log_z
}

/// Probability mass function over 0..=n.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiscreteDistribution {
    pub mass: Vec<f64>,
}

impl DiscreteDistribution {
    pub fn total(&self) -> f64 {
        let mut s = Sum::new();
        for &p in self.mass.iter().rev() {
            s.add(p);
        }
        s.value()
    }

    pub fn moment(&self, r: u32) -> f64 {
        let mut s = Sum::new();
        for (j, &p) in self.mass.iter().enumerate() {
            s.add(p * (j as f64).powi(r as i32));
        }
        s.value()
    }

    pub fn mean(&self) -> f64 {
        self.moment(1)
    }

    /// ln Σ_j p_j e^{−λj}, any sign of λ.
    pub fn log_laplace(&self, lambda: f64) -> f64 {
        let mut m = f64::NEG_INFINITY;
        for (j, &p) in self.mass.iter().enumerate() {
            if p > 0.0 {
                m = m.max(p.ln() - lambda * j as f64);
            }
        }
        if m == f64::NEG_INFINITY {
            return m;
        }
        let mut s = Sum::new();
        for (j, &p) in self.mass.iter().enumerate() {
            if p > 0.0 {
                s.add((p.ln() - lambda * j as f64 - m).exp());
            }
        }
        m + s.value().ln()
    }

    pub fn laplace(&self, lambda: f64) -> f64 {
        self.log_laplace(lambda).exp()
    }
}

impl CanonicalTable {
    pub fn spectrum(&self) -> &SpectrumTable {
        &self.spectrum
    }

    pub fn spectrum_arc(&self) -> Arc<SpectrumTable> {
        Arc::clone(&self.spectrum)
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn n_max(&self) -> usize {
        self.log_z.len() - 1
    }

    pub fn volume(&self) -> f64 {
        self.spectrum.volume()
    }

    /// Bound on the omitted part of S₁ = Σ_j e^{−βη_j}.
    pub fn s1_tail(&self) -> f64 {
        self.s1_tail
    }

    /// Bound on the omitted part of S_k: k·e^{−(k−1)βa}·tail(S₁), a the gap cutoff.
    pub fn power_sum_tail(&self, k: usize) -> f64 {
        let a = self.spectrum.gap_cutoff();
        if self.s1_tail == 0.0 {
            return 0.0;
        }
        k as f64 * (-(k as f64 - 1.0) * self.beta * a).exp() * self.s1_tail
    }

    /// ln Z(n) with unshifted energies.
    pub fn log_z(&self, n: usize) -> Result<f64> {
        let l = self.log_z_shifted(n)?;
        Ok(l - n as f64 * self.beta * self.spectrum.ground_energy())
    }

    /// ln Z(n) + nβE₁.
    pub fn log_z_shifted(&self, n: usize) -> Result<f64> {
        self.log_z.get(n).copied().ok_or(Error::OutOfRange {
            index: n,
            limit: self.n_max(),
        })
    }

    pub fn log_z_shifted_all(&self) -> &[f64] {
        &self.log_z
    }

    /// ln S_k with unshifted energies.
    pub fn log_power_sum(&self, k: usize) -> Result<f64> {
        if k == 0 || k > self.n_max() {
            return Err(Error::OutOfRange {
                index: k,
                limit: self.n_max(),
            });
        }
        Ok(self.log_power_sums[k] - k as f64 * self.beta * self.spectrum.ground_energy())
    }

    fn check(&self, k: usize, n: usize) -> Result<f64> {
        if n > self.n_max() {
            return Err(Error::OutOfRange {
                index: n,
                limit: self.n_max(),
            });
        }
        self.spectrum
            .gaps()
            .get(k)
            .map(|g| self.beta * g)
            .ok_or(Error::OutOfRange {
                index: k,
                limit: self.spectrum.len(),
            })
    }

    #[inline]
    fn log_tail_unchecked(&self, bg: f64, n: usize, j: usize) -> f64 {
        -(j as f64) * bg + self.log_z[n - j] - self.log_z[n]
    }

    /// ln P(N_k ≥ j) in the n-particle state.
    pub fn log_tail(&self, k: usize, n: usize, j: usize) -> Result<f64> {
        let bg = self.check(k, n)?;
        if j > n {
            return Ok(f64::NEG_INFINITY);
        }
        Ok(self.log_tail_unchecked(bg, n, j))
    }

    /// ⟨N_k^r⟩ = Σ_{j≥1} (j^r − (j−1)^r) P(N_k ≥ j), r ∈ 1..=4.
    pub fn occupation_moment(&self, k: usize, n: usize, r: u32) -> Result<f64> {
        if !(1..=4).contains(&r) {
            return Err(Error::Domain(format!("moment order must be 1..=4, got {r}")));
        }
        let bg = self.check(k, n)?;
        let mut s = Sum::new();
        for j in 1..=n {
            let t = self.log_tail_unchecked(bg, n, j).exp();
            let jf = j as f64;
            let w = jf.powi(r as i32) - (jf - 1.0).powi(r as i32);
            s.add(w * t);
            if t < 1e-300 {
                break;
            }
        }
        Ok(s.value())
    }

    pub fn mean_occupation(&self, k: usize, n: usize) -> Result<f64> {
        self.occupation_moment(k, n, 1)
    }

    /// ln P(N_k = j) = −jβη_k + ln z_{∖k}(n−j) − ln z(n), j = 0..=n, with
    /// z_{∖k} the partition function of the spectrum without mode k. No
    /// differences are taken, so small masses keep their relative accuracy.
    fn log_pmf(&self, k: usize, bg: f64, n: usize) -> Vec<f64> {
        let (exc, zero_gaps, k_exc) = excited_sums(self.spectrum.gaps(), self.beta, n, Some(k));
        let lz = log_z_from_sums(&exc, zero_gaps, k_exc, n);
        (0..=n)
            .map(|j| -(j as f64) * bg + lz[n - j] - self.log_z[n])
            .collect()
    }

    /// ln P(N_k = j) from consecutive tails. Cheap; accurate in absolute
    /// terms, which is all a transform needs.
    fn log_pmf_from_tails(&self, bg: f64, n: usize) -> Vec<f64> {
        let mut out = Vec::with_capacity(n + 1);
        for j in 0..=n {
            let lt = self.log_tail_unchecked(bg, n, j);
            if j == n {
                out.push(lt);
                break;
            }
            // P(j) = T_j (1 − T_{j+1}/T_j)
            let step = -bg + self.log_z[n - j - 1] - self.log_z[n - j];
            out.push(if step < 0.0 { lt + log1m_exp(-step) } else { f64::NEG_INFINITY });
        }
        out
    }

    pub fn occupation_pmf(&self, k: usize, n: usize) -> Result<DiscreteDistribution> {
        let bg = self.check(k, n)?;
        let mass = self.log_pmf(k, bg, n).into_iter().map(f64::exp).collect();
        Ok(DiscreteDistribution { mass })
    }

    /// ⟨e^{−λN_k}⟩ in the n-particle state.
    ///
    /// Equals e^λ − (e^λ−1) Σ_{j=0}^n e^{−λj} P(N_k ≥ j); evaluated as a
    /// positive sum in both signs of λ.
    pub fn occupation_laplace(&self, k: usize, n: usize, lambda: f64) -> Result<f64> {
        Ok(self.log_occupation_laplace(k, n, lambda)?.exp())
    }

    pub fn log_occupation_laplace(&self, k: usize, n: usize, lambda: f64) -> Result<f64> {
        let bg = self.check(k, n)?;
        if lambda == 0.0 || n == 0 {
            return Ok(0.0);
        }
        if lambda > 0.0 {
            let lp = self.log_pmf_from_tails(bg, n);
            let terms: Vec<f64> = lp
                .iter()
                .enumerate()
                .map(|(j, &l)| l - lambda * j as f64)
                .collect();
            Ok(crate::numeric::log_sum_exp(&terms))
        } else {
            // 1 + (e^{|λ|}−1) Σ_{j≥1} e^{|λ|(j−1)} T_j
            let mu = -lambda;
            let terms: Vec<f64> = (1..=n)
                .map(|j| self.log_tail_unchecked(bg, n, j) + mu * (j as f64 - 1.0))
                .collect();
            let ls = crate::numeric::log_sum_exp(&terms) + mu.exp_m1().ln();
            Ok(if ls > 0.0 {
                ls + (-ls).exp().ln_1p()
            } else {
                ls.exp().ln_1p()
            })
        }
    }

    /// (1/V) Σ_{k: η_k < ε} ⟨N_k⟩.
    pub fn generalized_condensate(&self, n: usize, epsilon: f64) -> Result<f64> {
        if !(epsilon > 0.0) {
            return Err(Error::Domain("epsilon must be positive".into()));
        }
        let count = self.spectrum.gaps().partition_point(|&g| g < epsilon);
        let mut s = Sum::new();
        for k in 0..count {
            s.add(self.mean_occupation(k, n)?);
        }
        Ok(s.value() / self.volume())
    }

    /// p_k = −(1/βV) Σ_{j≠k} ln|1 − e^{−β(E_j−E_k)}|, with a tail bound.
    pub fn p_coefficient(&self, k: usize) -> Result<PCoefficient> {
        let gaps = self.spectrum.gaps();
        let gk = *gaps.get(k).ok_or(Error::OutOfRange {
            index: k,
            limit: gaps.len(),
        })?;
        if !self.spectrum.is_nondegenerate(k) {
            return Err(Error::DegenerateMode(k));
        }
        let b = self.beta;
        let mut s = Sum::new();
        for (j, &g) in gaps.iter().enumerate().rev() {
            if j == k {
                continue;
            }
            let d = b * (g - gk);
            let l = if d > 0.0 {
                log1m_exp(d)
            } else {
                // |1 − e^{|d|}| = e^{|d|} − 1
                (-d).exp_m1().ln()
            };
            s.add(l);
        }
        let tail = if self.spectrum.geometry().is_some() {
            if self.spectrum.gap_cutoff() <= gk {
                return Err(Error::CutoffInsufficient {
                    tail: f64::INFINITY,
                    tol: 0.0,
                });
            }
            self.spectrum
                .tail_bound(|eta| b * bose(b * (eta - gk)), 1.0 / b)
        } else {
            0.0
        };
        let bv = b * self.volume();
        Ok(PCoefficient {
            value: -s.value() / bv,
            tail_bound: tail / bv,
        })
    }

    /// Step-function K-measure of mode k on the grid x = r/V, r = 0..=n_max.
    pub fn k_measure(&self, k: usize) -> Result<KMeasure> {
        let p = self.p_coefficient(k)?;
        let bg = self.beta * self.spectrum.gap(k);
        let bvp = self.beta * self.volume() * p.value;
        let log_values = self
            .log_z
            .iter()
            .enumerate()
            .map(|(r, &l)| l + r as f64 * bg - bvp)
            .collect();
        Ok(KMeasure {
            k,
            p_k: p.value,
            p_tail: p.tail_bound,
            volume: self.volume(),
            beta: self.beta,
            beta_gap: bg,
            log_values,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PCoefficient {
    pub value: f64,
    pub tail_bound: f64,
}

/// K_{k,V}(x) = Z(r) e^{−β(Vp_k − rE_k)} for r/V < x ≤ (r+1)/V.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KMeasure {
    pub k: usize,
    pub p_k: f64,
    pub p_tail: f64,
    pub volume: f64,
    pub beta: f64,
    beta_gap: f64,
    log_values: Vec<f64>,
}

impl KMeasure {
    pub fn log_values(&self) -> &[f64] {
        &self.log_values
    }

    /// Distribution function at x (0 for x ≤ 0, NaN beyond the table).
    pub fn value(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return 0.0;
        }
        let r = ((x * self.volume).ceil() as usize).saturating_sub(1);
        self.log_values.get(r).map(|l| l.exp()).unwrap_or(f64::NAN)
    }

    /// ∫ e^{−λx} K(dx) = (1 − e^{−λ/V}) Σ_r K_r e^{−λr/V}, truncated at the
    /// table end. Returns (ln value, bound on the omitted relative part).
    pub fn log_laplace(&self, lambda: f64) -> Result<(f64, f64)> {
        let h = lambda / self.volume;
        if !(h > self.beta_gap) {
            return Err(Error::Domain(format!(
                "the transform needs lambda/V > beta*eta_k ({} <= {})",
                h, self.beta_gap
            )));
        }
        let terms: Vec<f64> = self
            .log_values
            .iter()
            .enumerate()
            .map(|(r, &l)| l - h * r as f64)
            .collect();
        let lse = crate::numeric::log_sum_exp(&terms);
        let n = terms.len();
        let rel_tail = if n >= 2 {
            let q = (terms[n - 1] - terms[n - 2]).exp();
            if q < 1.0 {
                (terms[n - 1] - lse).exp() * q / (1.0 - q)
            } else {
                f64::INFINITY
            }
        } else {
            f64::INFINITY
        };
        Ok(((-(-h).exp_m1()).ln() + lse, rel_tail))
    }

    /// ⟨e^{−λN_k/V}⟩ in the n-particle state rebuilt from the measure:
    /// Σ_{r≤n} (K_r − K_{r−1}) e^{−λ(n−r)/V} / K_n.
    pub fn expectation_exp(&self, n: usize, lambda: f64) -> Result<f64> {
        if n >= self.log_values.len() {
            return Err(Error::OutOfRange {
                index: n,
                limit: self.log_values.len() - 1,
            });
        }
        let h = lambda / self.volume;
        let ln_kn = self.log_values[n];
        let terms: Vec<f64> = (0..=n)
            .map(|r| {
                let lk = self.log_values[r];
                let ljump = if r == 0 {
                    lk
                } else {
                    let d = lk - self.log_values[r - 1];
                    if d > 0.0 {
                        lk + log1m_exp(d)
                    } else {
                        f64::NEG_INFINITY
                    }
                };
                ljump - h * (n - r) as f64 - ln_kn
            })
            .collect();
        Ok(crate::numeric::log_sum_exp(&terms).exp())
    }
}

/// ln Ξ over a spectrum at μ̄ (shifted), re-exported for identity checks.
pub fn log_xi(spectrum: &SpectrumTable, mu_bar: f64, beta: f64) -> f64 {
    let mut s = Sum::new();
    for &g in spectrum.gaps().iter().rev() {
        s.add(neg_log1m_exp(beta * (g - mu_bar)));
    }
    s.value()
}
