//! Small numerical helpers shared by the physics modules.

use crate::error::{Error, Result};
use roots::{find_root_brent, Convergency};

/// Compensated (Neumaier) summation.
#[derive(Debug, Clone, Copy, Default)]
pub struct Sum {
    s: f64,
    c: f64,
}

impl Sum {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn add(&mut self, x: f64) {
        let t = self.s + x;
        if self.s.abs() >= x.abs() {
            self.c += (self.s - t) + x;
        } else {
            self.c += (x - t) + self.s;
        }
        self.s = t;
    }

    pub fn value(&self) -> f64 {
        self.s + self.c
    }
}

pub fn neumaier<I: IntoIterator<Item = f64>>(it: I) -> f64 {
    let mut s = Sum::new();
    for x in it {
        s.add(x);
    }
    s.value()
}

/// ln Σ exp(x_i), with -inf for an empty or all -inf input.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    if m == f64::INFINITY {
        return m;
    }
    let s: f64 = xs.iter().map(|x| (x - m).exp()).sum();
    m + s.ln()
}

/// x − ln(1+x), accurate near 0.
pub fn x_minus_log1p(x: f64) -> f64 {
    if x.abs() < 0.05 {
        // alternating series x²/2 − x³/3 + ...
        let mut term = x * x;
        let mut acc = 0.0;
        let mut k = 2.0;
        let mut sign = 1.0;
        while k < 30.0 {
            acc += sign * term / k;
            term *= x;
            sign = -sign;
            k += 1.0;
        }
        acc
    } else {
        x - x.ln_1p()
    }
}

/// 1/(e^x − 1) for x > 0.
#[inline]
pub fn bose(x: f64) -> f64 {
    1.0 / x.exp_m1()
}

/// −ln(1 − e^{−x}) for x > 0.
#[inline]
pub fn neg_log1m_exp(x: f64) -> f64 {
    if x > std::f64::consts::LN_2 {
        -(-(-x).exp()).ln_1p()
    } else {
        -(-(-x).exp_m1()).ln()
    }
}

/// ln(1 − e^{−x}) for x > 0.
#[inline]
pub fn log1m_exp(x: f64) -> f64 {
    -neg_log1m_exp(x)
}

/// Integral of `f` over [a, b] by double-exponential quadrature.
/// Returns (value, error estimate).
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, abs_tol: f64) -> (f64, f64) {
    let out = quadrature::double_exponential::integrate(f, a, b, abs_tol);
    (out.integral, out.error_estimate)
}

/// Integral of a decaying integrand over [a, ∞): panels of growing width
/// starting at `scale`, stopped once a panel contributes below `rel_tol`
/// of the running total (or `abs_floor`).
pub fn integrate_to_infinity<F: Fn(f64) -> f64>(
    f: F,
    a: f64,
    scale: f64,
    rel_tol: f64,
    abs_floor: f64,
) -> (f64, f64) {
    let mut total = Sum::new();
    let mut err = 0.0;
    let mut lo = a;
    let mut width = scale;
    for _ in 0..200 {
        let hi = lo + width;
        let (v, e) = integrate(&f, lo, hi, (abs_floor * 1e-3).max(1e-300));
        total.add(v);
        err += e;
        let t = total.value().abs();
        if v.abs() <= rel_tol * t || v.abs() <= abs_floor {
            break;
        }
        lo = hi;
        width *= 2.0;
    }
    (total.value(), err)
}

/// Outcome of a bracketed scalar solve.
#[derive(Debug, Clone, Copy)]
pub struct RootOutcome {
    pub x: f64,
    pub fx: f64,
    pub evaluations: usize,
}

struct Stop {
    ftol: f64,
    xtol: f64,
    max_iter: usize,
}

impl Convergency<f64> for Stop {
    fn is_root_found(&mut self, y: f64) -> bool {
        y.abs() <= self.ftol
    }
    fn is_converged(&mut self, x1: f64, x2: f64) -> bool {
        (x1 - x2).abs() <= self.xtol * x1.abs().max(x2.abs()).max(1.0)
    }
    fn is_iteration_limit_reached(&mut self, iter: usize) -> bool {
        iter >= self.max_iter
    }
}

/// Brent solve of f(x) = 0 on a bracket [lo, hi] with f(lo)·f(hi) ≤ 0.
///
/// Evaluations are memoized and the best sample seen is returned, so the
/// result never depends on which bracket end the solver reports.
pub fn brent<F: FnMut(f64) -> f64>(
    mut f: F,
    lo: f64,
    hi: f64,
    ftol: f64,
    max_iter: usize,
) -> Result<RootOutcome> {
    let mut cache: Vec<(u64, f64)> = Vec::new();
    let mut best = (f64::NAN, f64::INFINITY);
    let mut evals = 0usize;
    let mut g = |x: f64| {
        if let Some(&(_, y)) = cache.iter().find(|(b, _)| *b == x.to_bits()) {
            return y;
        }
        let y = f(x);
        evals += 1;
        if cache.len() > 16 {
            cache.remove(0);
        }
        cache.push((x.to_bits(), y));
        if y.abs() < best.1.abs() || best.0.is_nan() {
            best = (x, y);
        }
        y
    };
    let mut stop = Stop {
        ftol,
        xtol: 4.0 * f64::EPSILON,
        max_iter,
    };
    let res = find_root_brent(lo, hi, &mut g, &mut stop);
    match res {
        Ok(_) => Ok(RootOutcome {
            x: best.0,
            fx: best.1,
            evaluations: evals,
        }),
        Err(_) => {
            if best.1.abs() <= ftol {
                Ok(RootOutcome {
                    x: best.0,
                    fx: best.1,
                    evaluations: evals,
                })
            } else {
                Err(Error::NoConvergence {
                    lo,
                    hi,
                    iterations: max_iter,
                })
            }
        }
    }
}

/// Format a float with 17 significant digits in scientific notation.
pub fn fmt_sci(x: f64) -> String {
    format!("{:.16e}", x)
}
