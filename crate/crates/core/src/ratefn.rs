//! Cramér rate function `I(x) = sup_t (t x - log E e^{tX})` by quadrature.

use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use crate::density::PerturbedDensity;
use crate::error::{Error, Result};
use crate::fmt_f64;
use crate::quadrature::{integrate_pieces, linspace, scan_max, Tolerance};
use crate::table::{CellMass, InverseCdfTable};

/// Largest tilt the root finder will reach for.
pub const TILT_LIMIT: f64 = 1e6;

/// Interval carrying all but `e^-50` of the tilted mass, with its peak.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TiltWindow {
    pub t: f64,
    pub lo: f64,
    pub hi: f64,
    pub peak: f64,
    pub width: f64,
    /// `t p - g(p) - q(p)` at the peak `p`.
    pub peak_log: f64,
    /// Maximum of the relative exponent over the window (near zero).
    pub excess: f64,
}

impl TiltWindow {
    fn breakpoints(&self) -> Vec<f64> {
        let mut pts = linspace(self.lo, self.hi, 32);
        for j in -6i32..=6 {
            let x = self.peak + j as f64 * self.width;
            if x > self.lo && x < self.hi {
                pts.push(x);
            }
        }
        pts.sort_by(f64::total_cmp);
        pts.dedup();
        pts
    }

    /// `t x - g(x) - q(x)` minus its value at the peak, free of cancellation.
    pub fn relative(&self, model: &PerturbedDensity, x: f64) -> f64 {
        if x <= 0.0 {
            return f64::NEG_INFINITY;
        }
        let g = model.base();
        let p = self.peak;
        let d = x - p;
        let v = (self.t - g.dg(p)) * d - g.bregman(p, d) - model.q(x) + model.q(p);
        if v.is_nan() {
            f64::NEG_INFINITY
        } else {
            v
        }
    }

    /// Tilted density up to the factor `exp(peak_log + excess)`.
    fn weight(&self, model: &PerturbedDensity, x: f64) -> f64 {
        (self.relative(model, x) - self.excess).exp()
    }
}

fn phi(model: &PerturbedDensity, t: f64, x: f64) -> f64 {
    t * x - model.potential(x)
}

/// Root of `g'(x) = t` beyond `X`, or `None` when `g' > t` throughout.
fn convex_peak(model: &PerturbedDensity, t: f64) -> Option<f64> {
    let g = model.base();
    let mut lo = g.threshold().max(1e-300);
    if g.dg(lo) >= t {
        return None;
    }
    let mut hi = lo.max(1.0);
    while g.dg(hi) < t {
        lo = hi;
        hi *= 2.0;
        if hi > 1e300 {
            return None;
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if g.dg(mid) < t {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Some(0.5 * (lo + hi))
}

pub fn tilt_window(model: &PerturbedDensity, t: f64) -> Result<TiltWindow> {
    let g = model.base();
    let qb = model.perturbation().bound();
    let margin = 50.0 + 8.0 * qb;
    let peak = match convex_peak(model, t) {
        Some(p) => p,
        None => {
            let reach = 2.0 * model.mode().max(g.threshold()).max(1.0);
            scan_max(|x| phi(model, t, x), 0.0, reach, 2048).0
        }
    };
    let curv = g.d2g(peak);
    let width = if curv > 0.0 && curv.is_finite() {
        (1.0 / curv.sqrt()).min(1.0)
    } else {
        1.0
    };
    let mut w = TiltWindow {
        t,
        lo: 0.0,
        hi: peak,
        peak,
        width,
        peak_log: phi(model, t, peak),
        excess: 0.0,
    };
    // the perturbation moves the exponent by at most 2 qb relative to the peak
    let mut d = width;
    let mut steps = 0;
    while w.relative(model, peak + d) > -margin {
        d *= 2.0;
        steps += 1;
        if steps > 200 || !(peak + d).is_finite() {
            return Err(Error::Divergent { t });
        }
    }
    w.hi = peak + d;
    let mut d = width;
    while peak - d > 0.0 {
        if !(w.relative(model, peak - d) > -margin) {
            w.lo = peak - d;
            break;
        }
        d *= 2.0;
    }
    let (_, best) = scan_max(|x| w.relative(model, x), w.lo, w.hi, 2048);
    w.excess = best.max(0.0);
    Ok(w)
}

/// `log E e^{tX}` with the tilted mean and variance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TiltedMoments {
    pub t: f64,
    pub log_mgf: f64,
    pub mean: f64,
    pub var: f64,
}

pub fn tilted_moments(model: &PerturbedDensity, t: f64) -> Result<TiltedMoments> {
    let w = tilt_window(model, t)?;
    let pts = w.breakpoints();
    let dens = |x: f64| w.weight(model, x);
    let tol = Tolerance::rel(1e-12);
    let z = integrate_pieces(dens, &pts, tol);
    if !(z.value > 0.0) || !z.value.is_finite() || z.error > 1e-9 * z.value {
        return Err(Error::Divergent { t });
    }
    let m1 = integrate_pieces(|x| x * dens(x), &pts, tol).value / z.value;
    let m2 = integrate_pieces(|x| (x - m1).powi(2) * dens(x), &pts, tol).value / z.value;
    Ok(TiltedMoments {
        t,
        log_mgf: model.ln_c() + w.peak_log + w.excess + z.value.ln(),
        mean: m1,
        var: m2,
    })
}

/// `Lambda(t) = log E e^{tX}`.
pub fn log_mgf(model: &PerturbedDensity, t: f64) -> Result<f64> {
    if t == 0.0 {
        return Ok(0.0);
    }
    Ok(tilted_moments(model, t)?.log_mgf)
}

/// Solves `Lambda'(t) = x` by Newton steps safeguarded with bisection.
pub fn tilt_for_mean(model: &PerturbedDensity, x: f64) -> Result<f64> {
    Ok(solve_tilt(model, x)?.t)
}

fn solve_tilt(model: &PerturbedDensity, x: f64) -> Result<TiltedMoments> {
    if !(x > 0.0) {
        return Err(Error::OutOfSupport(x));
    }
    let tol = 1e-10 * x.max(1.0);
    let at0 = tilted_moments(model, 0.0)?;
    if (at0.mean - x).abs() <= tol {
        return Ok(TiltedMoments {
            log_mgf: 0.0,
            ..at0
        });
    }
    // bracket [lo, hi] with mean(lo) < x < mean(hi); a divergent MGF counts as above
    let up = x > at0.mean;
    let mut cur = at0;
    let (mut lo, mut hi): (f64, f64) = (0.0, 0.0);
    let mut step: f64 = if up { 1.0 } else { -1.0 };
    loop {
        if step.abs() > TILT_LIMIT {
            return Err(Error::NoRoot { x });
        }
        match tilted_moments(model, step) {
            Ok(m) if (m.mean < x) == up => {
                cur = m;
                if up {
                    lo = step;
                } else {
                    hi = step;
                }
                step *= 2.0;
            }
            Ok(m) => {
                if up {
                    hi = step;
                } else {
                    lo = step;
                }
                cur = m;
                break;
            }
            Err(Error::Divergent { .. }) if up => {
                hi = step;
                break;
            }
            Err(e) => return Err(e),
        }
    }
    for _ in 0..400 {
        let resid = cur.mean - x;
        if resid.abs() <= tol {
            return Ok(cur);
        }
        if resid > 0.0 {
            hi = hi.min(cur.t);
        } else {
            lo = lo.max(cur.t);
        }
        let newton = cur.t - resid / cur.var;
        let next = if newton > lo && newton < hi && cur.var > 0.0 {
            newton
        } else {
            0.5 * (lo + hi)
        };
        if next == cur.t || hi - lo <= 1e-15 * hi.abs().max(lo.abs()) {
            return Ok(cur);
        }
        match tilted_moments(model, next) {
            Ok(m) => cur = m,
            Err(Error::Divergent { .. }) => hi = next,
            Err(e) => return Err(e),
        }
    }
    Err(Error::NoConvergence(format!(
        "tilt for mean {x} did not settle"
    )))
}

/// `(I(x), t*)` with `t*` the maximizing tilt.
pub fn cramer_rate(model: &PerturbedDensity, x: f64) -> Result<(f64, f64)> {
    let m = solve_tilt(model, x)?;
    if m.t == 0.0 {
        return Ok((0.0, 0.0));
    }
    Ok(((m.t * x - m.log_mgf).max(0.0), m.t))
}

/// First-order approximation `-n I(a)` of `log P(S_n / n > a)`.
pub fn extended_ldp_log_prob(model: &PerturbedDensity, n: usize, a: f64) -> Result<f64> {
    Ok(-(n as f64) * cramer_rate(model, a)?.0)
}

/// `log P(X > x)` by quadrature of the tail in shifted coordinates.
pub fn log_survival(model: &PerturbedDensity, x: f64) -> Result<f64> {
    if x <= 0.0 {
        return Ok(0.0);
    }
    let g = model.base();
    let qb = model.perturbation().bound();
    let base = model.potential(x);
    if x < model.mode() || x < g.threshold() {
        let cdf = model.cdf(x);
        return Ok((1.0 - cdf).ln());
    }
    let mut hi = x + 1.0 / g.dg(x).max(1e-3);
    let mut steps = 0;
    while g.g(hi) - qb - base < 60.0 + 2.0 * qb {
        hi = x + 2.0 * (hi - x);
        steps += 1;
        if steps > 200 {
            return Err(Error::NonIntegrable(format!(
                "tail beyond {x} does not vanish"
            )));
        }
    }
    let scale = 1.0 / g.dg(x).max(1e-300);
    let mut pts = linspace(x, hi, 32);
    for j in 1..8 {
        let p = x + scale * j as f64;
        if p < hi {
            pts.push(p);
        }
    }
    pts.sort_by(f64::total_cmp);
    let r = integrate_pieces(
        |u| (-(model.potential(u) - base)).exp(),
        &pts,
        Tolerance::rel(1e-12),
    );
    Ok(model.ln_c() - base + r.value.ln())
}

/// `-log P(X > x) / I(x)`; diagnostic only.
pub fn tail_equivalence(model: &PerturbedDensity, x: f64) -> Result<f64> {
    let (i, _) = cramer_rate(model, x)?;
    Ok(-log_survival(model, x)? / i)
}

/// Tabulated rate function on a log-spaced grid with Hermite interpolation
/// (the tilt `t*` is the exact slope of `I`).
#[derive(Debug, Clone, Serialize)]
pub struct CramerRate {
    pub mean: f64,
    pub xs: Vec<f64>,
    pub rate: Vec<f64>,
    pub t_star: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RateChecks {
    pub min_second_difference: f64,
    pub min_rate: f64,
    pub t_monotone: bool,
    pub max_duality_residual: f64,
    pub max_derivative_error: f64,
}

impl CramerRate {
    pub const GRID: usize = 128;

    /// Table over `[1.05 EX, x_max]`.
    pub fn build(model: &PerturbedDensity, x_max: f64) -> Result<Self> {
        let mean = model.mean();
        let lo = 1.05 * mean;
        if !(x_max > lo) {
            return Err(Error::InvalidArgument(format!(
                "rate table needs x_max > {lo}, got {x_max}"
            )));
        }
        let (l, h) = (lo.ln(), x_max.ln());
        let xs: Vec<f64> = (0..Self::GRID)
            .map(|i| (l + (h - l) * i as f64 / (Self::GRID - 1) as f64).exp())
            .collect();
        let vals: Vec<(f64, f64)> = xs
            .par_iter()
            .map(|&x| cramer_rate(model, x))
            .collect::<Result<_>>()?;
        Ok(CramerRate {
            mean,
            rate: vals.iter().map(|v| v.0).collect(),
            t_star: vals.iter().map(|v| v.1).collect(),
            xs,
        })
    }

    pub fn x_max(&self) -> f64 {
        *self.xs.last().unwrap()
    }

    /// Interpolated `(I(x), t*(x))`; `None` outside the table.
    pub fn eval(&self, x: f64) -> Option<(f64, f64)> {
        let m = self.xs.len();
        if x < self.xs[0] || x > self.xs[m - 1] {
            return None;
        }
        let i = (self.xs.partition_point(|&v| v <= x).max(1) - 1).min(m - 2);
        let h = self.xs[i + 1] - self.xs[i];
        let s = (x - self.xs[i]) / h;
        let (s2, s3) = (s * s, s * s * s);
        let (y0, y1) = (self.rate[i], self.rate[i + 1]);
        let (d0, d1) = (self.t_star[i], self.t_star[i + 1]);
        let value = (2.0 * s3 - 3.0 * s2 + 1.0) * y0
            + (s3 - 2.0 * s2 + s) * h * d0
            + (-2.0 * s3 + 3.0 * s2) * y1
            + (s3 - s2) * h * d1;
        Some((value, d0 + s * (d1 - d0)))
    }

    /// Table value inside the grid, direct computation outside it.
    pub fn rate_at(&self, model: &PerturbedDensity, x: f64) -> Result<(f64, f64)> {
        match self.eval(x) {
            Some(v) => Ok(v),
            None => cramer_rate(model, x),
        }
    }

    /// Convexity, sign, monotone tilt, duality and envelope-theorem checks.
    pub fn checks(&self, model: &PerturbedDensity) -> Result<RateChecks> {
        let m = self.xs.len();
        let mut min_d2 = f64::INFINITY;
        for i in 1..m - 1 {
            let left = (self.rate[i] - self.rate[i - 1]) / (self.xs[i] - self.xs[i - 1]);
            let right = (self.rate[i + 1] - self.rate[i]) / (self.xs[i + 1] - self.xs[i]);
            let scale = 1e-12 * (1.0 + self.rate[i + 1].abs()) / (self.xs[i + 1] - self.xs[i]);
            min_d2 = min_d2.min(right - left + scale);
        }
        let min_rate = self.rate.iter().cloned().fold(f64::INFINITY, f64::min);
        let t_monotone = self.t_star.windows(2).all(|w| w[1] >= w[0]);
        let probes: Vec<usize> = (0..m).step_by(m / 8).collect();
        let resid: Vec<(f64, f64)> = probes
            .par_iter()
            .map(|&i| -> Result<(f64, f64)> {
                let x = self.xs[i];
                let t = self.t_star[i];
                let mom = tilted_moments(model, t)?;
                let dual = (t * x - mom.log_mgf - self.rate[i]).abs() / self.rate[i].abs().max(1.0)
                    + (mom.mean - x).abs() / x.max(1.0);
                let d = 1e-4 * x;
                let up = cramer_rate(model, x + d)?.0;
                let down = cramer_rate(model, x - d)?.0;
                let slope = (up - down) / (2.0 * d);
                Ok((dual, (slope - t).abs() / t.abs().max(1.0)))
            })
            .collect::<Result<_>>()?;
        Ok(RateChecks {
            min_second_difference: min_d2,
            min_rate,
            t_monotone,
            max_duality_residual: resid.iter().map(|r| r.0).fold(0.0, f64::max),
            max_derivative_error: resid.iter().map(|r| r.1).fold(0.0, f64::max),
        })
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["x", "I", "t_star"])
            .map_err(|e| Error::Io(e.to_string()))?;
        for i in 0..self.xs.len() {
            w.write_record([
                fmt_f64(self.xs[i]),
                fmt_f64(self.rate[i]),
                fmt_f64(self.t_star[i]),
            ])
            .map_err(|e| Error::Io(e.to_string()))?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Inverse-CDF table of the tilted law `e^{tx} p(x) / E e^{tX}` over its window.
pub fn tilted_table(model: &PerturbedDensity, t: f64, cells: usize) -> Result<InverseCdfTable> {
    let w = tilt_window(model, t)?;
    Ok(InverseCdfTable::new(
        |x| w.relative(model, x) - w.excess,
        w.lo,
        w.hi,
        cells,
        CellMass::Quadrature,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::density::ExponentModel;

    fn expo() -> PerturbedDensity {
        PerturbedDensity::pure(ExponentModel::exponential()).unwrap()
    }

    fn weibull() -> PerturbedDensity {
        PerturbedDensity::pure(ExponentModel::weibull(3.0).unwrap()).unwrap()
    }

    #[test]
    fn exponential_mgf() {
        let l = log_mgf(&expo(), 0.5).unwrap();
        assert!((l - 2f64.ln()).abs() < 1e-10);
        assert_eq!(log_mgf(&weibull(), 0.0).unwrap(), 0.0);
        assert!(matches!(
            log_mgf(&expo(), 1.5),
            Err(Error::Divergent { .. })
        ));
    }

    #[test]
    fn exponential_rate_closed_form() {
        for &x in &[2.0, 5.0, 10.0, 0.5] {
            let (i, t) = cramer_rate(&expo(), x).unwrap();
            let exact = x - 1.0 - f64::ln(x);
            assert!((i - exact).abs() < 1e-9, "x={x}: {i} vs {exact}");
            assert!((t - (1.0 - 1.0 / x)).abs() < 1e-9);
        }
    }

    #[test]
    fn rate_vanishes_at_mean() {
        let m = weibull();
        let (i, t) = cramer_rate(&m, m.mean()).unwrap();
        assert_eq!((i, t), (0.0, 0.0));
        assert_eq!(extended_ldp_log_prob(&m, 5, m.mean()).unwrap(), 0.0);
    }

    #[test]
    fn weibull_rate_tracks_exponent() {
        let m = weibull();
        let (i, _) = cramer_rate(&m, 10.0).unwrap();
        let r = i / (1000.0 - 2.0 * 10f64.ln());
        assert!((0.9..=1.1).contains(&r), "{r}");
    }

    #[test]
    fn tilt_for_mean_values() {
        assert!((tilt_for_mean(&expo(), 2.0).unwrap() - 0.5).abs() < 1e-9);
        let m = weibull();
        let t = tilt_for_mean(&m, 2.0).unwrap();
        let mom = tilted_moments(&m, t).unwrap();
        assert!((mom.mean - 2.0).abs() < 1e-3);
        let t20 = tilt_for_mean(&m, 20.0).unwrap();
        assert!(t20 > 1000.0);
    }

    #[test]
    fn tail_equivalence_weibull_and_exponential() {
        let m = weibull();
        let r: Vec<f64> = [5.0, 10.0, 20.0]
            .iter()
            .map(|&x| tail_equivalence(&m, x).unwrap())
            .collect();
        assert!((r[2] - 1.0).abs() <= 0.15);
        assert!((r[0] - 1.0).abs() > (r[1] - 1.0).abs() && (r[1] - 1.0).abs() > (r[2] - 1.0).abs());
        let e = tail_equivalence(&expo(), 50.0).unwrap();
        assert!((e - 50.0 / (49.0 - 50f64.ln())).abs() < 1e-6);
        assert!((e - 1.0).abs() < 0.15);
    }

    #[test]
    fn weibull_survival_is_exact() {
        let m = weibull();
        for &x in &[1.5, 3.0, 7.0] {
            let ls = log_survival(&m, x).unwrap();
            assert!((ls + x * x * x).abs() < 1e-8 * x * x * x, "{x}: {ls}");
        }
    }

    #[test]
    fn table_checks_and_interpolation() {
        let m = weibull();
        let tab = CramerRate::build(&m, 8.0).unwrap();
        let c = tab.checks(&m).unwrap();
        assert!(c.min_second_difference >= -1e-8, "{c:?}");
        assert!(c.min_rate >= 0.0 && c.t_monotone);
        assert!(
            c.max_duality_residual < 1e-6 && c.max_derivative_error < 1e-4,
            "{c:?}"
        );
        let (i, _) = tab.eval(3.3).unwrap();
        let (direct, _) = cramer_rate(&m, 3.3).unwrap();
        assert!((i - direct).abs() < 1e-6 * direct.max(1.0));
    }
}
