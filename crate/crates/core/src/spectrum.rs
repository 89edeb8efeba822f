//! Box geometry, the one-particle Dirichlet spectrum and integrated
//! densities of states.

use crate::error::{Error, Result};
use crate::numeric::integrate_to_infinity;
use serde::{Deserialize, Serialize};
use std::f64::consts::{PI, SQRT_2};

const ALPHA_TOL: f64 = 1e-12;

/// √2/(3π²), the coefficient of η^{3/2} in the limiting IDS.
pub const IDS_COEFF: f64 = SQRT_2 / (3.0 * PI * PI);

/// Default memory budget for [`enumerate_below`], in modes.
pub const DEFAULT_MODE_BUDGET: usize = 20_000_000;

/// A rectangular box with edges V^{α₁} ≥ V^{α₂} ≥ V^{α₃}.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoxGeometry {
    alpha: [f64; 3],
    volume: f64,
}

impl BoxGeometry {
    pub fn new(alpha: [f64; 3], volume: f64) -> Result<Self> {
        if !alpha.iter().all(|a| a.is_finite()) {
            return Err(Error::InvalidGeometry("exponents must be finite".into()));
        }
        if alpha[2] <= 0.0 {
            return Err(Error::InvalidGeometry(format!(
                "alpha3 must be positive, got {}",
                alpha[2]
            )));
        }
        if alpha[1] > alpha[0] + ALPHA_TOL || alpha[2] > alpha[1] + ALPHA_TOL {
            return Err(Error::InvalidGeometry(format!(
                "exponents must satisfy alpha1 >= alpha2 >= alpha3, got {:?}",
                alpha
            )));
        }
        let sum: f64 = alpha.iter().sum();
        if (sum - 1.0).abs() > ALPHA_TOL {
            return Err(Error::InvalidGeometry(format!(
                "exponents must sum to 1 (alpha1 + alpha2 + alpha3 = {sum})"
            )));
        }
        if !(volume.is_finite() && volume > 0.0) {
            return Err(Error::InvalidGeometry(format!(
                "volume must be positive and finite, got {volume}"
            )));
        }
        Ok(Self { alpha, volume })
    }

    pub fn isotropic(volume: f64) -> Result<Self> {
        Self::new([1.0 / 3.0; 3], volume)
    }

    pub fn alpha(&self) -> [f64; 3] {
        self.alpha
    }

    pub fn volume(&self) -> f64 {
        self.volume
    }

    pub fn with_volume(&self, volume: f64) -> Result<Self> {
        Self::new(self.alpha, volume)
    }

    pub fn edges(&self) -> [f64; 3] {
        self.alpha.map(|a| self.volume.powf(a))
    }

    /// (π²/2)·V^{−2α_j}: energy per unit of n_j².
    pub fn axis_coefficients(&self) -> [f64; 3] {
        self.alpha
            .map(|a| 0.5 * PI * PI * self.volume.powf(-2.0 * a))
    }

    pub fn ground_energy(&self) -> f64 {
        eigenvalue(self, Mode::GROUND)
    }

    pub fn regime(&self) -> RegimeLabel {
        RegimeLabel::from_alpha(self.alpha)
    }

    pub fn fluctuation_case(&self) -> FluctuationCase {
        FluctuationCase::from_alpha(self.alpha)
    }
}

/// Quantum numbers (n₁, n₂, n₃) of a Dirichlet mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Mode(pub [u32; 3]);

impl Mode {
    pub const GROUND: Mode = Mode([1, 1, 1]);

    pub fn new(n: [u32; 3]) -> Result<Self> {
        if n.contains(&0) {
            return Err(Error::Domain(format!(
                "quantum numbers must be >= 1, got {:?}",
                n
            )));
        }
        Ok(Mode(n))
    }

    /// Mode (n₁,1,1) on the longest axis.
    pub fn ladder(n1: u32) -> Self {
        Mode([n1.max(1), 1, 1])
    }

    pub fn is_ladder(&self) -> bool {
        self.0[1] == 1 && self.0[2] == 1
    }
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}-{}-{}", self.0[0], self.0[1], self.0[2])
    }
}

/// Condensation type, decided by the largest exponent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RegimeLabel {
    TypeI,
    TypeII,
    TypeIII,
}

impl RegimeLabel {
    pub fn from_alpha(alpha: [f64; 3]) -> Self {
        let a1 = alpha.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if (a1 - 0.5).abs() <= ALPHA_TOL {
            RegimeLabel::TypeII
        } else if a1 < 0.5 {
            RegimeLabel::TypeI
        } else {
            RegimeLabel::TypeIII
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            RegimeLabel::TypeI => "I",
            RegimeLabel::TypeII => "II",
            RegimeLabel::TypeIII => "III",
        }
    }
}

/// Fluctuation sub-case: how many axes share the largest exponent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FluctuationCase {
    /// One longest axis (covers α₁ > α₂ ≥ α₃).
    Distinct,
    /// α₁ = α₂ > α₃.
    TwoEqual,
    /// α₁ = α₂ = α₃ = 1/3.
    Isotropic,
}

impl FluctuationCase {
    pub fn from_alpha(alpha: [f64; 3]) -> Self {
        let a1 = alpha.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let ties = alpha.iter().filter(|&&a| (a - a1).abs() <= ALPHA_TOL).count();
        match ties {
            3 => FluctuationCase::Isotropic,
            2 => FluctuationCase::TwoEqual,
            _ => FluctuationCase::Distinct,
        }
    }

    pub fn gamma(alpha: [f64; 3]) -> f64 {
        let a1 = alpha.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        1.0 - 2.0 * a1
    }

    pub fn name(&self) -> &'static str {
        match self {
            FluctuationCase::Distinct => "distinct",
            FluctuationCase::TwoEqual => "two-equal",
            FluctuationCase::Isotropic => "isotropic",
        }
    }
}

#[inline]
fn energy_of(c: &[f64; 3], n: [u32; 3]) -> f64 {
    let sq = n.map(|x| (x as f64) * (x as f64));
    c[0] * sq[0] + c[1] * sq[1] + c[2] * sq[2]
}

#[inline]
fn gap_of(c: &[f64; 3], n: [u32; 3]) -> f64 {
    let sq = n.map(|x| (x as f64) * (x as f64) - 1.0);
    c[0] * sq[0] + c[1] * sq[1] + c[2] * sq[2]
}

/// ε_n = (π²/2) Σ n_j² V^{−2α_j}.
pub fn eigenvalue(geom: &BoxGeometry, mode: Mode) -> f64 {
    energy_of(&geom.axis_coefficients(), mode.0)
}

/// η_n = ε_n − E₁, evaluated from integers so it is exact up to one rounding
/// per term (no cancellation).
pub fn gap(geom: &BoxGeometry, mode: Mode) -> f64 {
    gap_of(&geom.axis_coefficients(), mode.0)
}

/// Sorted one-particle spectrum below an energy cutoff.
///
/// Levels are stored as gaps η = E − E₁ ≥ 0. Tables built from a box carry
/// their geometry and mode labels; tables built from an explicit energy
/// list are complete (no truncation tail).
#[derive(Debug, Clone)]
pub struct SpectrumTable {
    geometry: Option<BoxGeometry>,
    volume: f64,
    cutoff: f64,
    ground_energy: f64,
    gaps: Vec<f64>,
    modes: Vec<Mode>,
}

impl SpectrumTable {
    /// A complete spectrum given by explicit energies, nominal volume `volume`.
    pub fn from_energies(volume: f64, energies: &[f64]) -> Result<Self> {
        if energies.is_empty() {
            return Err(Error::Domain("spectrum needs at least one level".into()));
        }
        if energies.iter().any(|e| !e.is_finite()) {
            return Err(Error::Domain("energies must be finite".into()));
        }
        if !(volume.is_finite() && volume > 0.0) {
            return Err(Error::Domain("volume must be positive".into()));
        }
        let mut sorted = energies.to_vec();
        sorted.sort_by(|a, b| a.total_cmp(b));
        let e1 = sorted[0];
        let gaps = sorted.iter().map(|e| e - e1).collect();
        Ok(Self {
            geometry: None,
            volume,
            cutoff: f64::INFINITY,
            ground_energy: e1,
            gaps,
            modes: Vec::new(),
        })
    }

    pub fn geometry(&self) -> Option<&BoxGeometry> {
        self.geometry.as_ref()
    }

    pub fn volume(&self) -> f64 {
        self.volume
    }

    /// Energy cutoff E_max (infinite for explicit spectra).
    pub fn cutoff(&self) -> f64 {
        self.cutoff
    }

    /// Gap cutoff E_max − E₁.
    pub fn gap_cutoff(&self) -> f64 {
        self.cutoff - self.ground_energy
    }

    pub fn ground_energy(&self) -> f64 {
        self.ground_energy
    }

    pub fn len(&self) -> usize {
        self.gaps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gaps.is_empty()
    }

    pub fn gaps(&self) -> &[f64] {
        &self.gaps
    }

    pub fn gap(&self, i: usize) -> f64 {
        self.gaps[i]
    }

    pub fn energy(&self, i: usize) -> f64 {
        self.ground_energy + self.gaps[i]
    }

    pub fn mode(&self, i: usize) -> Option<Mode> {
        self.modes.get(i).copied()
    }

    pub fn index_of(&self, mode: Mode) -> Option<usize> {
        self.modes.iter().position(|&m| m == mode)
    }

    /// True if no other level shares the gap of level `i`.
    pub fn is_nondegenerate(&self, i: usize) -> bool {
        let g = self.gaps[i];
        let left = i > 0 && self.gaps[i - 1] == g;
        let right = i + 1 < self.gaps.len() && self.gaps[i + 1] == g;
        !(left || right)
    }

    /// F_V(η) from the table; exact for η below the gap cutoff.
    pub fn ids(&self, eta: f64) -> f64 {
        if eta < 0.0 {
            return 0.0;
        }
        self.gaps.partition_point(|&g| g <= eta) as f64 / self.volume
    }

    /// Bound on Σ_{levels beyond the cutoff} w(η) for a decreasing weight w,
    /// given |w'|: ∫_{cut}^∞ V·Upper(η)|w'(η)| dη. Zero for explicit spectra.
    pub fn tail_bound<W: Fn(f64) -> f64>(&self, abs_dw: W, scale: f64) -> f64 {
        match &self.geometry {
            None => 0.0,
            Some(g) => tail_integral(g, self.gap_cutoff(), abs_dw, scale),
        }
    }

    /// Tail bound for Σ e^{−kβη} beyond the cutoff.
    pub fn boltzmann_tail(&self, beta: f64, k: usize) -> f64 {
        let kb = beta * k as f64;
        self.tail_bound(|eta| kb * (-kb * eta).exp(), 1.0 / kb)
    }

    /// Tail bound for Σ 1/(e^{β(η−μ̄)}−1) beyond the cutoff, μ̄ ≤ 0.
    pub fn bose_tail(&self, beta: f64, mu_bar: f64) -> f64 {
        self.tail_bound(|eta| bose_abs_derivative(beta * (eta - mu_bar)) * beta, 1.0 / beta)
    }
}

/// |d/dx 1/(e^x − 1)| = e^x/(e^x−1)².
fn bose_abs_derivative(x: f64) -> f64 {
    if x > 700.0 {
        return (-x).exp();
    }
    let s = (0.5 * x).sinh();
    0.25 / (s * s)
}

fn tail_integral<W: Fn(f64) -> f64>(geom: &BoxGeometry, a: f64, abs_dw: W, scale: f64) -> f64 {
    let v = geom.volume();
    let e1 = geom.ground_energy();
    let (val, err) = integrate_to_infinity(
        |eta| v * IDS_COEFF * (eta + e1).powf(1.5) * abs_dw(eta),
        a,
        scale,
        1e-14,
        1e-300,
    );
    val + err
}

/// Smallest gap cutoff (to 1%) whose tail bound for the weight with
/// derivative magnitude `abs_dw` is below `tol`.
pub fn choose_gap_cutoff<W: Fn(f64) -> f64>(
    geom: &BoxGeometry,
    tol: f64,
    abs_dw: W,
    scale: f64,
) -> Result<f64> {
    if !(tol > 0.0) {
        return Err(Error::Domain("tail tolerance must be positive".into()));
    }
    let bound = |a: f64| tail_integral(geom, a, &abs_dw, scale);
    let mut hi = scale.max(1e-12);
    let mut iters = 0;
    while bound(hi) >= tol {
        hi *= 2.0;
        iters += 1;
        if iters > 200 {
            return Err(Error::CutoffInsufficient {
                tail: bound(hi),
                tol,
            });
        }
    }
    let mut lo = hi / 2.0;
    if bound(lo) < tol {
        return Ok(lo);
    }
    while hi - lo > 0.01 * hi {
        let mid = 0.5 * (lo + hi);
        if bound(mid) < tol {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

/// Gap cutoff such that the Bose-weight tail at μ̄ = 0 (the worst case over
/// all admissible μ̄) is below `tol`. Also bounds every Boltzmann tail
/// Σ e^{−kβη}.
pub fn gap_cutoff_for_tolerance(geom: &BoxGeometry, beta: f64, tol: f64) -> Result<f64> {
    if !(beta > 0.0) {
        return Err(Error::Domain("beta must be positive".into()));
    }
    choose_gap_cutoff(
        geom,
        tol,
        |eta| beta * bose_abs_derivative(beta * eta),
        1.0 / beta,
    )
}

/// Spectrum truncated where the Bose tail at μ̄ = 0 falls below `tol`.
pub fn spectrum_for_tolerance(geom: &BoxGeometry, beta: f64, tol: f64) -> Result<SpectrumTable> {
    let a = gap_cutoff_for_tolerance(geom, beta, tol)?;
    enumerate_below(geom, geom.ground_energy() + a)
}

pub fn enumerate_below(geom: &BoxGeometry, e_max: f64) -> Result<SpectrumTable> {
    enumerate_below_with_budget(geom, e_max, DEFAULT_MODE_BUDGET)
}

/// All modes with ε_n ≤ e_max, sorted by energy (ties by mode index).
pub fn enumerate_below_with_budget(
    geom: &BoxGeometry,
    e_max: f64,
    budget: usize,
) -> Result<SpectrumTable> {
    let c = geom.axis_coefficients();
    let e1 = geom.ground_energy();
    let mut table = SpectrumTable {
        geometry: Some(*geom),
        volume: geom.volume(),
        cutoff: e_max,
        ground_energy: e1,
        gaps: Vec::new(),
        modes: Vec::new(),
    };
    if !(e_max >= e1) {
        return Ok(table);
    }
    let predicted = geom.volume() * IDS_COEFF * e_max.powf(1.5);
    if predicted > budget as f64 {
        return Err(Error::CutoffTooLarge {
            predicted,
            budget,
        });
    }
    let mut entries: Vec<(f64, Mode)> = Vec::with_capacity(predicted as usize + 16);
    for_each_mode_below(&c, e_max, |n| {
        entries.push((gap_of(&c, n), Mode(n)));
    });
    entries.sort_unstable_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    table.gaps = entries.iter().map(|e| e.0).collect();
    table.modes = entries.iter().map(|e| e.1).collect();
    Ok(table)
}

/// Visit every n ∈ ℕ³ with energy_of(c, n) ≤ e_max.
fn for_each_mode_below<F: FnMut([u32; 3])>(c: &[f64; 3], e_max: f64, mut f: F) {
    let mut n1 = 1u32;
    while energy_of(c, [n1, 1, 1]) <= e_max {
        let mut n2 = 1u32;
        while energy_of(c, [n1, n2, 1]) <= e_max {
            let rest = e_max - c[0] * (n1 as f64).powi(2) - c[1] * (n2 as f64).powi(2);
            let mut k = (rest / c[2]).max(0.0).sqrt().floor() as u32;
            while energy_of(c, [n1, n2, k + 1]) <= e_max {
                k += 1;
            }
            while k >= 1 && energy_of(c, [n1, n2, k]) > e_max {
                k -= 1;
            }
            for n3 in 1..=k {
                f([n1, n2, n3]);
            }
            n2 += 1;
        }
        n1 += 1;
    }
}

/// #{n : η_n ≤ η} by direct lattice counting.
pub fn count_gaps_le(geom: &BoxGeometry, eta: f64) -> u64 {
    if eta < 0.0 {
        return 0;
    }
    let c = geom.axis_coefficients();
    let mut count = 0u64;
    let mut n1 = 1u32;
    while gap_of(&c, [n1, 1, 1]) <= eta {
        let mut n2 = 1u32;
        while gap_of(&c, [n1, n2, 1]) <= eta {
            let rest = eta - gap_of(&c, [n1, n2, 1]);
            let mut k = ((rest / c[2]) + 1.0).max(1.0).sqrt().floor() as u32;
            while gap_of(&c, [n1, n2, k + 1]) <= eta {
                k += 1;
            }
            while k >= 1 && gap_of(&c, [n1, n2, k]) > eta {
                k -= 1;
            }
            count += k as u64;
            n2 += 1;
        }
        n1 += 1;
    }
    count
}

/// F_V(η) = #{k : η_k ≤ η}/V.
pub fn ids(geom: &BoxGeometry, eta: f64) -> f64 {
    count_gaps_le(geom, eta) as f64 / geom.volume()
}

/// F(η) = (√2/3π²) η^{3/2}.
pub fn ids_limit(eta: f64) -> Result<f64> {
    if eta < 0.0 {
        return Err(Error::Domain(format!("ids_limit needs eta >= 0, got {eta}")));
    }
    Ok(IDS_COEFF * eta.powf(1.5))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IdsBounds {
    pub lower: f64,
    pub upper: f64,
}

/// Lattice-count constant in the lower IDS bound.
pub const IDS_LOWER_SHIFT: f64 = 3.0 * PI / SQRT_2;

/// Lower and upper bounds on F_V(η); valid above [`ids_bounds_threshold`].
pub fn ids_bounds(geom: &BoxGeometry, eta: f64) -> IdsBounds {
    let eta = eta.max(0.0);
    let a3 = geom.alpha()[2];
    let shift = IDS_LOWER_SHIFT * geom.volume().powf(-a3);
    let lower = IDS_COEFF * (eta.sqrt() - shift).max(0.0).powi(3);
    let upper = IDS_COEFF * (eta + geom.ground_energy()).powf(1.5);
    IdsBounds { lower, upper }
}

/// (3π/√2)²·V^{−2α₃}.
pub fn ids_bounds_threshold(geom: &BoxGeometry) -> f64 {
    IDS_LOWER_SHIFT * IDS_LOWER_SHIFT * geom.volume().powf(-2.0 * geom.alpha()[2])
}

/// Which relative gaps a unit box uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GapConvention {
    /// (π²/2)Σ(n_j² − 1): the gaps of the box spectrum itself.
    #[default]
    Exact,
    /// (π²/2)Σ(n_j − 1)².
    Printed,
}

#[inline]
fn unit_term(n: u32, conv: GapConvention) -> f64 {
    let x = n as f64;
    match conv {
        GapConvention::Exact => x * x - 1.0,
        GapConvention::Printed => (x - 1.0) * (x - 1.0),
    }
}

/// Visit the unit-box gaps (π²/2)Σ term(n_j) ≤ eta_max over n_j ≥ `n_min`.
pub fn for_each_unit_gap<F: FnMut(f64)>(
    d: usize,
    eta_max: f64,
    conv: GapConvention,
    n_min: u32,
    mut f: F,
) {
    let half_pi2 = 0.5 * PI * PI;
    let lim = eta_max / half_pi2;
    fn rec<F: FnMut(f64)>(
        depth: usize,
        acc: f64,
        lim: f64,
        conv: GapConvention,
        n_min: u32,
        scale: f64,
        f: &mut F,
    ) {
        let mut n = n_min;
        loop {
            let s = acc + unit_term(n, conv);
            if s > lim {
                break;
            }
            if depth == 1 {
                f(scale * s);
            } else {
                rec(depth - 1, s, lim, conv, n_min, scale, f);
            }
            n += 1;
        }
    }
    if d == 0 || eta_max < 0.0 {
        return;
    }
    // remaining coordinates contribute at least unit_term(n_min) each
    let floor = (d as f64 - 1.0) * unit_term(n_min, conv);
    if floor > lim {
        return;
    }
    rec(d, 0.0, lim, conv, n_min, half_pi2, &mut f);
}

/// F₁^{(d)}(η): number of unit-box modes with gap ≤ η.
pub fn unit_box_ids(d: usize, eta: f64) -> Result<u64> {
    unit_box_ids_with(d, eta, GapConvention::Exact)
}

pub fn unit_box_ids_with(d: usize, eta: f64, conv: GapConvention) -> Result<u64> {
    if !(1..=3).contains(&d) {
        return Err(Error::Domain(format!("dimension must be 1, 2 or 3, got {d}")));
    }
    if eta < 0.0 {
        return Err(Error::Domain(format!("unit_box_ids needs eta >= 0, got {eta}")));
    }
    let mut count = 0u64;
    for_each_unit_gap(d, eta, conv, 1, |_| count += 1);
    Ok(count)
}
