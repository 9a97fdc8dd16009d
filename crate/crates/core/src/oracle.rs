//! Quadrature values of `P(C)`, `P(I & C)` and `P(I^c & C)` for two or three
//! summands, used to check the analytic bounds.

use rayon::prelude::*;

use crate::density::PerturbedDensity;
use crate::error::{Error, Result};
use crate::quadrature::{gk21, integrate_pieces, linspace, Tolerance};
use crate::ratefn::log_survival;
use crate::variational::BandEvent;

const TABLE_POINTS: usize = 600;
/// Cells of the tabulated survival function.
const SURVIVAL_CELLS: usize = 4096;

fn log_add(a: f64, b: f64) -> f64 {
    let m = a.max(b);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + ((a - m).exp() + (b - m).exp()).ln()
}

/// `log P(X > x)` on `[0, top]`, accumulated cell by cell from `top` down;
/// a query integrates only the partial cell above it.
struct Survival<'m> {
    model: &'m PerturbedDensity,
    top: f64,
    h: f64,
    log_s: Vec<f64>,
}

impl<'m> Survival<'m> {
    fn new(model: &'m PerturbedDensity, top: f64) -> Result<Self> {
        let top = top.max(1e-9);
        let h = top / SURVIVAL_CELLS as f64;
        let mut log_s = vec![0.0; SURVIVAL_CELLS + 1];
        log_s[SURVIVAL_CELLS] = log_survival(model, top)?;
        let cells: Vec<f64> = (0..SURVIVAL_CELLS)
            .into_par_iter()
            .map(|i| Self::log_piece(model, i as f64 * h, (i + 1) as f64 * h))
            .collect();
        for i in (0..SURVIVAL_CELLS).rev() {
            log_s[i] = log_add(log_s[i + 1], cells[i]);
        }
        Ok(Survival {
            model,
            top,
            h,
            log_s,
        })
    }

    /// `log int_lo^hi p`.
    fn log_piece(model: &PerturbedDensity, lo: f64, hi: f64) -> f64 {
        let reference = model.potential(lo).min(model.potential(hi));
        if !reference.is_finite() {
            return f64::NEG_INFINITY;
        }
        let (v, _) = gk21(&|u: f64| (reference - model.potential(u)).exp(), lo, hi);
        if v > 0.0 {
            model.ln_c() - reference + v.ln()
        } else {
            f64::NEG_INFINITY
        }
    }

    fn eval(&self, x: f64) -> Result<f64> {
        if x <= 0.0 {
            return Ok(0.0);
        }
        if x >= self.top {
            return log_survival(self.model, x);
        }
        let i = ((x / self.h) as usize).min(SURVIVAL_CELLS - 1);
        let right = (i + 1) as f64 * self.h;
        Ok(log_add(
            self.log_s[i + 1],
            Self::log_piece(self.model, x, right),
        ))
    }

    /// `log P(X in [lo, hi])`.
    fn log_mass(&self, lo: f64, hi: f64) -> Result<f64> {
        if lo >= hi {
            return Ok(f64::NEG_INFINITY);
        }
        let upper = self.eval(lo.max(0.0))?;
        if !hi.is_finite() {
            return Ok(upper);
        }
        let rest = self.eval(hi)?;
        Ok(upper + (-(rest - upper).exp()).ln_1p())
    }
}

/// `log int_range p(x) exp(inner(y - x)) dx`.
fn log_convolve<F: Fn(f64) -> f64 + Sync>(
    model: &PerturbedDensity,
    range: (f64, f64),
    y: f64,
    inner: F,
) -> f64 {
    let lo = range.0.max(0.0);
    let hi = range.1.min(model.support_cap());
    if lo >= hi {
        return f64::NEG_INFINITY;
    }
    let log_f = |x: f64| {
        let ld = model.log_density(x).unwrap_or(f64::NEG_INFINITY);
        ld + inner(y - x)
    };
    let grid = linspace(lo, hi, 128);
    let shift = grid
        .iter()
        .skip(1)
        .map(|&x| log_f(x))
        .fold(f64::NEG_INFINITY, f64::max);
    if !shift.is_finite() {
        return f64::NEG_INFINITY;
    }
    let pts = linspace(lo, hi, 32);
    let r = integrate_pieces(
        |x| {
            let v = log_f(x) - shift;
            if v.is_finite() {
                v.exp()
            } else {
                0.0
            }
        },
        &pts,
        Tolerance::rel(1e-11),
    );
    shift + r.value.ln()
}

/// `log P(X_1 + X_2 >= y, X_i in range)` tabulated in `y`.
struct PairTail {
    ys: Vec<f64>,
    vals: Vec<f64>,
}

impl PairTail {
    fn build(sv: &Survival, range: (f64, f64), y_max: f64) -> Result<Self> {
        let y_min = (2.0 * range.0).max(0.0);
        let ys = linspace(y_min, y_max.max(y_min + 1e-9), TABLE_POINTS);
        let vals = ys
            .par_iter()
            .map(|&y| single_pair(sv, range, y))
            .collect::<Result<Vec<f64>>>()?;
        Ok(PairTail { ys, vals })
    }

    fn eval(&self, y: f64) -> f64 {
        let m = self.ys.len();
        if y <= self.ys[0] {
            return self.vals[0];
        }
        if y >= self.ys[m - 1] {
            return f64::NEG_INFINITY;
        }
        let h = self.ys[1] - self.ys[0];
        let i = (((y - self.ys[0]) / h) as usize).min(m - 2);
        let t = (y - self.ys[i]) / h;
        let (a, b) = (self.vals[i], self.vals[i + 1]);
        if !a.is_finite() || !b.is_finite() {
            return if t < 0.5 { a } else { b };
        }
        a + t * (b - a)
    }
}

fn single_pair(sv: &Survival, range: (f64, f64), y: f64) -> Result<f64> {
    let inner = |z: f64| {
        sv.log_mass(z.max(range.0), range.1)
            .unwrap_or(f64::NEG_INFINITY)
    };
    Ok(log_convolve(sv.model, range, y, inner))
}

fn log_tail_sum(model: &PerturbedDensity, n: usize, y: f64, range: (f64, f64)) -> Result<f64> {
    let sv = Survival::new(model, y.min(range.1))?;
    match n {
        2 => single_pair(&sv, range, y),
        3 => {
            let y_cap = y.min(2.0 * range.1.min(model.support_cap()));
            let pair = PairTail::build(&sv, range, y_cap + 1e-9)?;
            Ok(log_convolve(model, range, y, |z| pair.eval(z)))
        }
        _ => Err(Error::InvalidArgument(format!(
            "quadrature oracle covers n = 2 or 3, got {n}"
        ))),
    }
}

/// `log P(S_n >= n a)`.
pub fn log_prob_c(model: &PerturbedDensity, n: usize, a: f64) -> Result<f64> {
    log_tail_sum(model, n, n as f64 * a, (0.0, f64::INFINITY))
}

/// `log P(S_n >= n a, every X_i in (a - eps, a + eps))`.
pub fn log_prob_i_and_c(model: &PerturbedDensity, ev: &BandEvent) -> Result<f64> {
    log_tail_sum(model, ev.n, ev.nf() * ev.a, (ev.a - ev.eps, ev.a + ev.eps))
}

/// `log (P(C) - P(I & C))`.
pub fn log_prob_icc(model: &PerturbedDensity, ev: &BandEvent) -> Result<f64> {
    let c = log_prob_c(model, ev.n, ev.a)?;
    let ic = log_prob_i_and_c(model, ev)?;
    Ok(c + (-(ic - c).exp()).ln_1p())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::density::ExponentModel;

    #[test]
    fn exponential_sum_tails_are_gamma() {
        let m = PerturbedDensity::pure(ExponentModel::exponential()).unwrap();
        // S_2 ~ Gamma(2): P(S >= y) = (1 + y) e^-y
        let y = 6.0f64;
        let v = log_prob_c(&m, 2, y / 2.0).unwrap();
        assert!((v - ((1.0 + y).ln() - y)).abs() < 1e-8, "{v}");
        // S_3 ~ Gamma(3): P(S >= y) = (1 + y + y^2/2) e^-y
        let v = log_prob_c(&m, 3, 2.0).unwrap();
        let exact = (1.0f64 + 6.0 + 18.0).ln() - 6.0;
        assert!((v - exact).abs() < 1e-6, "{v} vs {exact}");
    }

    #[test]
    fn band_probability_below_total() {
        let m = PerturbedDensity::pure(ExponentModel::power(2.0).unwrap()).unwrap();
        let ev = BandEvent::new(2, 2.0, 0.5).unwrap();
        let c = log_prob_c(&m, 2, 2.0).unwrap();
        let ic = log_prob_i_and_c(&m, &ev).unwrap();
        assert!(ic < c);
        assert!(log_prob_icc(&m, &ev).unwrap() < c);
    }
}
