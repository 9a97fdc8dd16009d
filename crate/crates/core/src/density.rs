//! Light-tailed densities `c * exp(-(g + q))` on the positive half-line.
//!
//! [`ExponentModel`] holds the convex exponent `g` together with its first two
//! derivatives and the point `X` beyond which `g` increases. [`PerturbedDensity`]
//! adds a bounded perturbation `q` with envelope `M`, the normalizing constant
//! and a truncation point for tabulation.

use std::path::Path;
use std::sync::OnceLock;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::{integrate_pieces, linspace, scan_max, Tolerance};
use crate::seeds;
use crate::table::{CellMass, InverseCdfTable};

/// Cells in the unconditional inverse-CDF table.
const SAMPLER_CELLS: usize = 4096;

#[derive(Debug, Clone, PartialEq)]
pub struct TabulatedExponent {
    xs: Vec<f64>,
    g: Vec<f64>,
    dg: Vec<f64>,
    d2g: Vec<f64>,
}

impl TabulatedExponent {
    pub fn new(xs: Vec<f64>, g: Vec<f64>) -> Result<Self> {
        if xs.len() < 3 || xs.len() != g.len() {
            return Err(Error::InvalidModel(
                "tabulated exponent needs at least 3 (x, g) rows".into(),
            ));
        }
        if xs.windows(2).any(|w| w[1] <= w[0]) || xs[0] <= 0.0 {
            return Err(Error::InvalidModel(
                "tabulated x grid must be positive and strictly increasing".into(),
            ));
        }
        let m = xs.len();
        let mut dg = vec![0.0; m];
        let mut d2g = vec![0.0; m];
        for i in 1..m - 1 {
            let h1 = xs[i] - xs[i - 1];
            let h2 = xs[i + 1] - xs[i];
            dg[i] = -h2 / (h1 * (h1 + h2)) * g[i - 1]
                + (h2 - h1) / (h1 * h2) * g[i]
                + h1 / (h2 * (h1 + h2)) * g[i + 1];
            d2g[i] = 2.0
                * (g[i - 1] / (h1 * (h1 + h2)) - g[i] / (h1 * h2) + g[i + 1] / (h2 * (h1 + h2)));
        }
        dg[0] = quad_slope(&xs[0..3], &g[0..3], xs[0]);
        dg[m - 1] = quad_slope(&xs[m - 3..], &g[m - 3..], xs[m - 1]);
        d2g[0] = d2g[1];
        d2g[m - 1] = d2g[m - 2];
        let scale = d2g.iter().fold(1.0f64, |s, v| s.max(v.abs()));
        if let Some(i) = d2g.iter().position(|&v| v < -1e-8 * scale) {
            return Err(Error::InvalidModel(format!(
                "tabulated exponent fails the convexity probe at x = {}",
                xs[i]
            )));
        }
        Ok(TabulatedExponent { xs, g, dg, d2g })
    }

    fn locate(&self, x: f64) -> usize {
        self.xs
            .partition_point(|&v| v <= x)
            .clamp(1, self.xs.len() - 1)
            - 1
    }

    fn eval(&self, x: f64) -> (f64, f64, f64) {
        let m = self.xs.len();
        if x < self.xs[0] || x > self.xs[m - 1] {
            let i = if x < self.xs[0] { 0 } else { m - 1 };
            let d = x - self.xs[i];
            let (g, dg, d2g) = (self.g[i], self.dg[i], self.d2g[i]);
            return (g + dg * d + 0.5 * d2g * d * d, dg + d2g * d, d2g);
        }
        let i = self.locate(x);
        let h = self.xs[i + 1] - self.xs[i];
        let t = (x - self.xs[i]) / h;
        let (t2, t3) = (t * t, t * t * t);
        let g = (2.0 * t3 - 3.0 * t2 + 1.0) * self.g[i]
            + (t3 - 2.0 * t2 + t) * h * self.dg[i]
            + (-2.0 * t3 + 3.0 * t2) * self.g[i + 1]
            + (t3 - t2) * h * self.dg[i + 1];
        let dg = (6.0 * t2 - 6.0 * t) / h * self.g[i]
            + (3.0 * t2 - 4.0 * t + 1.0) * self.dg[i]
            + (-6.0 * t2 + 6.0 * t) / h * self.g[i + 1]
            + (3.0 * t2 - 2.0 * t) * self.dg[i + 1];
        let d2g = self.d2g[i] + t * (self.d2g[i + 1] - self.d2g[i]);
        (g, dg, d2g)
    }

    pub fn xs(&self) -> &[f64] {
        &self.xs
    }
}

/// Slope at `at` of the parabola through three points.
fn quad_slope(x: &[f64], y: &[f64], at: f64) -> f64 {
    let (x0, x1, x2) = (x[0], x[1], x[2]);
    y[0] * ((at - x1) + (at - x2)) / ((x0 - x1) * (x0 - x2))
        + y[1] * ((at - x0) + (at - x2)) / ((x1 - x0) * (x1 - x2))
        + y[2] * ((at - x0) + (at - x1)) / ((x2 - x0) * (x2 - x1))
}

#[derive(Debug, Clone, PartialEq)]
pub enum ExponentKind {
    /// `g(x) = x^beta`; `beta = 1` is the pure exponential boundary case.
    Power {
        beta: f64,
    },
    /// `g(x) = exp(x)`.
    ExpExponent,
    /// `g(x) = x^k - (k - 1) log x`, the exponent of the Weibull(k, 1) density.
    Weibull {
        k: f64,
    },
    Tabulated(TabulatedExponent),
}

/// The convex exponent `g` of a density `c * exp(-g)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ExponentModel {
    kind: ExponentKind,
    threshold: f64,
}

impl ExponentModel {
    pub fn power(beta: f64) -> Result<Self> {
        if !(beta >= 1.0) || !beta.is_finite() {
            return Err(Error::InvalidModel(format!(
                "power exponent needs beta >= 1, got {beta}"
            )));
        }
        Ok(ExponentModel {
            kind: ExponentKind::Power { beta },
            threshold: 0.0,
        })
    }

    /// `g(x) = x`, i.e. the standard exponential law.
    pub fn exponential() -> Self {
        ExponentModel {
            kind: ExponentKind::Power { beta: 1.0 },
            threshold: 0.0,
        }
    }

    pub fn exp_exponent() -> Self {
        ExponentModel {
            kind: ExponentKind::ExpExponent,
            threshold: 0.0,
        }
    }

    pub fn weibull(k: f64) -> Result<Self> {
        if !(k > 2.0) || !k.is_finite() {
            return Err(Error::InvalidModel(format!(
                "Weibull exponent needs k > 2, got {k}"
            )));
        }
        Ok(ExponentModel {
            kind: ExponentKind::Weibull { k },
            threshold: ((k - 1.0) / k).powf(1.0 / k),
        })
    }

    pub fn tabulated(xs: Vec<f64>, g: Vec<f64>) -> Result<Self> {
        let tab = TabulatedExponent::new(xs, g)?;
        let last_nonpositive = tab.dg.iter().rposition(|&d| d <= 0.0);
        let threshold = match last_nonpositive {
            None => tab.xs[0],
            Some(i) if i + 1 < tab.xs.len() => tab.xs[i + 1],
            Some(_) => {
                return Err(Error::InvalidModel(
                    "tabulated exponent is not increasing at the end of its grid".into(),
                ))
            }
        };
        Ok(ExponentModel {
            kind: ExponentKind::Tabulated(tab),
            threshold,
        })
    }

    pub fn kind(&self) -> &ExponentKind {
        &self.kind
    }

    /// The point `X` beyond which `g` is increasing.
    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    pub fn label(&self) -> String {
        match &self.kind {
            ExponentKind::Power { beta } if *beta == 1.0 => "exponential".into(),
            ExponentKind::Power { beta } => format!("power:beta={beta}"),
            ExponentKind::ExpExponent => "exp".into(),
            ExponentKind::Weibull { k } => format!("weibull:k={k}"),
            ExponentKind::Tabulated(t) => format!("tabulated:{}pts", t.xs.len()),
        }
    }

    pub fn g(&self, x: f64) -> f64 {
        match &self.kind {
            ExponentKind::Power { beta } => x.powf(*beta),
            ExponentKind::ExpExponent => x.exp(),
            ExponentKind::Weibull { k } => x.powf(*k) - (k - 1.0) * x.ln(),
            ExponentKind::Tabulated(t) => t.eval(x).0,
        }
    }

    pub fn dg(&self, x: f64) -> f64 {
        match &self.kind {
            ExponentKind::Power { beta } => beta * x.powf(beta - 1.0),
            ExponentKind::ExpExponent => x.exp(),
            ExponentKind::Weibull { k } => k * x.powf(k - 1.0) - (k - 1.0) / x,
            ExponentKind::Tabulated(t) => t.eval(x).1,
        }
    }

    pub fn d2g(&self, x: f64) -> f64 {
        match &self.kind {
            ExponentKind::Power { beta } => {
                if *beta == 1.0 {
                    0.0
                } else {
                    beta * (beta - 1.0) * x.powf(beta - 2.0)
                }
            }
            ExponentKind::ExpExponent => x.exp(),
            ExponentKind::Weibull { k } => k * (k - 1.0) * x.powf(k - 2.0) + (k - 1.0) / (x * x),
            ExponentKind::Tabulated(t) => t.eval(x).2,
        }
    }

    /// `log g(x)`, evaluated without forming `g` where that would overflow.
    pub fn ln_g(&self, x: f64) -> f64 {
        match &self.kind {
            ExponentKind::Power { beta } => beta * x.ln(),
            ExponentKind::ExpExponent => x,
            _ => self.g(x).ln(),
        }
    }

    /// `g(a + d) - g(a)` without cancellation for small `d / a`.
    pub fn increment(&self, a: f64, d: f64) -> f64 {
        match &self.kind {
            ExponentKind::Power { beta } => a.powf(*beta) * pow1p_m1(d / a, *beta),
            ExponentKind::ExpExponent => a.exp() * d.exp_m1(),
            ExponentKind::Weibull { k } => {
                let u = d / a;
                a.powf(*k) * pow1p_m1(u, *k) - (k - 1.0) * u.ln_1p()
            }
            ExponentKind::Tabulated(_) => self.g(a + d) - self.g(a),
        }
    }

    /// `g(a + d) - g(a) - g'(a) d`, the remainder after the tangent at `a`.
    pub fn bregman(&self, a: f64, d: f64) -> f64 {
        match &self.kind {
            ExponentKind::Power { beta } => a.powf(*beta) * pow1p_rem(d / a, *beta),
            ExponentKind::ExpExponent => a.exp() * exp_rem(d),
            ExponentKind::Weibull { k } => {
                let u = d / a;
                a.powf(*k) * pow1p_rem(u, *k) - (k - 1.0) * ln1p_rem(u)
            }
            ExponentKind::Tabulated(_) => self.g(a + d) - self.g(a) - self.dg(a) * d,
        }
    }

    /// Probe of `g'' >= 0` and `g' > 0` on `(X, x_max]`.
    pub fn check_convex_increasing(&self, x_max: f64, points: usize) -> Result<()> {
        let lo = self.threshold;
        for i in 1..=points {
            let x = lo + (x_max - lo) * i as f64 / points as f64;
            let d2 = self.d2g(x);
            if d2 < -1e-10 * (1.0 + self.g(x).abs()) {
                return Err(Error::InvalidModel(format!("g'' < 0 at x = {x}")));
            }
            if !(self.dg(x) > 0.0) {
                return Err(Error::InvalidModel(format!(
                    "g is not increasing beyond X = {lo} (g'({x}) = {})",
                    self.dg(x)
                )));
            }
        }
        Ok(())
    }

    /// Witness for `g(x) / x -> inf`: `g(x)/x` strictly increases over 1e2, 1e3, 1e4.
    pub fn superlinear_witness(&self) -> bool {
        let r: Vec<f64> = [1e2, 1e3, 1e4]
            .iter()
            .map(|&x| self.ln_g(x) - f64::ln(x))
            .collect();
        r[0] < r[1] && r[1] < r[2]
    }

    /// Smallest `x >= X` with `log g(x) >= level`.
    pub fn first_at_ln_level(&self, level: f64) -> Result<f64> {
        let mut lo = self.threshold.max(1e-12);
        if self.ln_g(lo) >= level {
            return Ok(lo);
        }
        let mut hi = lo.max(1.0);
        let mut doublings = 0;
        while self.ln_g(hi) < level {
            lo = hi;
            hi *= 2.0;
            doublings += 1;
            if doublings > 200 {
                return Err(Error::ThresholdNotFound(format!(
                    "log g never reaches {level}"
                )));
            }
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if self.ln_g(mid) >= level {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        Ok(hi)
    }
}

/// `(1 + u)^b - 1`.
fn pow1p_m1(u: f64, b: f64) -> f64 {
    (b * u.ln_1p()).exp_m1()
}

/// `(1 + u)^b - 1 - b u`.
fn pow1p_rem(u: f64, b: f64) -> f64 {
    if u.abs() < 0.05 {
        // binomial series from the quadratic term on
        let mut coef = b * (b - 1.0) / 2.0;
        let mut pw = u * u;
        let mut sum = 0.0;
        for j in 2..80 {
            let term = coef * pw;
            sum += term;
            if term.abs() <= 1e-18 * sum.abs() || coef == 0.0 {
                break;
            }
            coef *= (b - j as f64) / (j as f64 + 1.0);
            pw *= u;
        }
        sum
    } else {
        pow1p_m1(u, b) - b * u
    }
}

/// `ln(1 + u) - u`.
fn ln1p_rem(u: f64) -> f64 {
    if u.abs() < 0.05 {
        let mut sum = 0.0;
        let mut pw = u * u;
        for j in 2..80 {
            let sign = if j % 2 == 0 { -1.0 } else { 1.0 };
            let term = sign * pw / j as f64;
            sum += term;
            if term.abs() <= 1e-18 * sum.abs() {
                break;
            }
            pw *= u;
        }
        sum
    } else {
        u.ln_1p() - u
    }
}

/// `exp(d) - 1 - d`.
fn exp_rem(d: f64) -> f64 {
    if d.abs() < 0.05 {
        let mut term = d * d / 2.0;
        let mut sum = 0.0;
        for j in 3..60 {
            sum += term;
            if term.abs() <= 1e-18 * sum.abs() {
                break;
            }
            term *= d / j as f64;
        }
        sum
    } else {
        d.exp_m1() - d
    }
}

/// The perturbation `q` added to the convex exponent.
#[derive(Debug, Clone, PartialEq)]
pub enum Perturbation {
    None,
    /// `q(x) = lambda * sin(x) * m(x)` with `m(x) = clamp(log g(x), 0, 1)`;
    /// envelope `|lambda| m(x)` with `N = |lambda|`.
    Sin {
        lambda: f64,
    },
    /// `q(x) = -log(1 + sin^2(x) / 2)`, i.e. a prefactor `c(x)` in `[1, 1.5]`.
    AlmostLogConcave,
    Tabulated {
        xs: Vec<f64>,
        qs: Vec<f64>,
    },
}

impl Perturbation {
    fn sin_mask(base: &ExponentModel, x: f64) -> f64 {
        let l = base.ln_g(x);
        if l.is_nan() {
            0.0
        } else {
            l.clamp(0.0, 1.0)
        }
    }

    pub fn q(&self, base: &ExponentModel, x: f64) -> f64 {
        match self {
            Perturbation::None => 0.0,
            Perturbation::Sin { lambda } => lambda * x.sin() * Self::sin_mask(base, x),
            Perturbation::AlmostLogConcave => -(0.5 * x.sin().powi(2)).ln_1p(),
            Perturbation::Tabulated { xs, qs } => interp_hold(xs, qs, x),
        }
    }

    /// The envelope `M(x)` with `|q| <= M`.
    pub fn envelope(&self, base: &ExponentModel, x: f64) -> f64 {
        match self {
            Perturbation::None => 0.0,
            Perturbation::Sin { lambda } => lambda.abs() * Self::sin_mask(base, x),
            Perturbation::AlmostLogConcave => 1.5f64.ln(),
            Perturbation::Tabulated { xs, qs } => interp_hold(xs, qs, x).abs(),
        }
    }

    /// `sup |q|`.
    pub fn bound(&self) -> f64 {
        match self {
            Perturbation::None => 0.0,
            Perturbation::Sin { lambda } => lambda.abs(),
            Perturbation::AlmostLogConcave => 1.5f64.ln(),
            Perturbation::Tabulated { qs, .. } => qs.iter().fold(0.0, |m, q| m.max(q.abs())),
        }
    }

    pub fn is_none(&self) -> bool {
        matches!(self, Perturbation::None)
    }

    pub fn label(&self) -> String {
        match self {
            Perturbation::None => "none".into(),
            Perturbation::Sin { lambda } => format!("sin:lambda={lambda}"),
            Perturbation::AlmostLogConcave => "almost_log_concave".into(),
            Perturbation::Tabulated { xs, .. } => format!("tabulated:{}pts", xs.len()),
        }
    }
}

fn interp_hold(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    if x <= xs[0] {
        return ys[0];
    }
    let m = xs.len();
    if x >= xs[m - 1] {
        return ys[m - 1];
    }
    let i = xs.partition_point(|&v| v <= x) - 1;
    let t = (x - xs[i]) / (xs[i + 1] - xs[i]);
    ys[i] + t * (ys[i + 1] - ys[i])
}

/// The density `c * exp(-(g + q))` with its envelope data and truncation point.
#[derive(Debug, Clone)]
pub struct PerturbedDensity {
    base: ExponentModel,
    perturbation: Perturbation,
    envelope_const: f64,
    y0: f64,
    ln_c: f64,
    support_cap: f64,
    mode: f64,
    sampler: OnceLock<InverseCdfTable>,
}

impl PerturbedDensity {
    /// Builds and normalizes the density; envelope constant and `y0` follow
    /// the perturbation's preset.
    pub fn new(base: ExponentModel, perturbation: Perturbation) -> Result<Self> {
        let (n_const, y0) = match &perturbation {
            Perturbation::None => (1.0, base.threshold()),
            Perturbation::Sin { lambda } => {
                if lambda.abs() > 1.0 {
                    return Err(Error::InvalidModel(format!(
                        "sin perturbation needs |lambda| <= 1, got {lambda}"
                    )));
                }
                (lambda.abs().max(1e-300), base.first_at_ln_level(1.0)?)
            }
            Perturbation::AlmostLogConcave => (1.0, base.first_at_ln_level(1.5f64.ln())?),
            Perturbation::Tabulated { xs, qs } => {
                if xs.len() != qs.len() || xs.len() < 2 {
                    return Err(Error::InvalidModel(
                        "tabulated q needs matching rows".into(),
                    ));
                }
                let y0 = base.first_at_ln_level(1.0)?;
                let n = xs
                    .iter()
                    .zip(qs)
                    .filter(|(x, _)| **x >= y0)
                    .map(|(x, q)| q.abs() / base.ln_g(*x))
                    .fold(1e-12f64, f64::max);
                (n, y0)
            }
        };
        let mut d = PerturbedDensity {
            base,
            perturbation,
            envelope_const: n_const,
            y0,
            ln_c: 0.0,
            support_cap: 0.0,
            mode: 0.0,
            sampler: OnceLock::new(),
        };
        d.normalize()?;
        Ok(d)
    }

    pub fn pure(base: ExponentModel) -> Result<Self> {
        Self::new(base, Perturbation::None)
    }

    /// Overrides the envelope constant `N` (the threshold `y0` is kept).
    pub fn with_envelope_const(mut self, n_const: f64) -> Self {
        self.envelope_const = n_const;
        self
    }

    /// Computes `c`, the truncation point and the mode; returns `c`.
    pub fn normalize(&mut self) -> Result<f64> {
        let x_hi = 10.0 * self.base.threshold().max(1.0);
        self.base.check_convex_increasing(x_hi, 400)?;
        let qb = self.perturbation.bound();
        // locate the minimum of the potential on a bracket where g has risen well above it
        let g_floor = self.base.g(self.base.threshold().max(1e-300));
        let mut scan_hi = self.base.threshold().max(1.0);
        while self.base.g(scan_hi) < g_floor + 50.0 + 2.0 * qb {
            scan_hi *= 2.0;
            if scan_hi > 1e12 {
                return Err(Error::NonIntegrable("potential never rises".into()));
            }
        }
        let (mode, neg_vmin) = scan_max(|x| -self.potential(x), 0.0, scan_hi, 4096);
        let vmin = -neg_vmin;

        let mut cap = scan_hi;
        let mut last_tail = f64::INFINITY;
        let mut doublings = 0;
        loop {
            let gap = self.base.g(cap) - qb - vmin;
            let slope = self.base.dg(cap).max(1e-300);
            let log_tail = -gap - slope.ln();
            if gap >= 100.0 && log_tail < (1e-14f64).ln() {
                break;
            }
            if !(log_tail < last_tail) && doublings > 0 {
                return Err(Error::NonIntegrable(format!(
                    "tail mass estimate does not decrease at cap {cap}"
                )));
            }
            last_tail = log_tail;
            cap *= 2.0;
            doublings += 1;
            if doublings > 64 {
                return Err(Error::NonIntegrable("cap doubling exhausted".into()));
            }
        }
        let mut pts = linspace(0.0, cap, 64);
        pts.push(mode);
        pts.sort_by(f64::total_cmp);
        let z = integrate_pieces(
            |x| {
                let v = self.potential(x) - vmin;
                if v.is_finite() {
                    (-v).exp()
                } else {
                    0.0
                }
            },
            &pts,
            Tolerance::rel(1e-13),
        );
        if !z.converged || !(z.value > 0.0) {
            return Err(Error::NonIntegrable("normalizing integral failed".into()));
        }
        self.ln_c = vmin - z.value.ln();
        self.support_cap = cap;
        self.mode = mode;
        self.sampler = OnceLock::new();
        Ok(self.c())
    }

    pub fn base(&self) -> &ExponentModel {
        &self.base
    }

    pub fn perturbation(&self) -> &Perturbation {
        &self.perturbation
    }

    pub fn c(&self) -> f64 {
        self.ln_c.exp()
    }

    pub fn ln_c(&self) -> f64 {
        self.ln_c
    }

    /// The envelope constant `N` with `M(x) <= N log g(x)` for `x >= y0`.
    pub fn envelope_const(&self) -> f64 {
        self.envelope_const
    }

    pub fn y0(&self) -> f64 {
        self.y0
    }

    pub fn support_cap(&self) -> f64 {
        self.support_cap
    }

    pub fn mode(&self) -> f64 {
        self.mode
    }

    pub fn label(&self) -> String {
        if self.perturbation.is_none() {
            self.base.label()
        } else {
            format!("{}+{}", self.base.label(), self.perturbation.label())
        }
    }

    pub fn q(&self, x: f64) -> f64 {
        self.perturbation.q(&self.base, x)
    }

    pub fn envelope(&self, x: f64) -> f64 {
        self.perturbation.envelope(&self.base, x)
    }

    /// `g(x) + q(x)`; `+inf` at or below zero.
    pub fn potential(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return f64::INFINITY;
        }
        let v = self.base.g(x) + self.q(x);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    }

    /// `log c - g(x) - q(x)`.
    pub fn log_density(&self, x: f64) -> Result<f64> {
        if !(x > 0.0) || !x.is_finite() {
            return Err(Error::OutOfSupport(x));
        }
        Ok(self.ln_c - self.base.g(x) - self.q(x))
    }

    /// `P(X <= x)` by adaptive quadrature.
    pub fn cdf(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return 0.0;
        }
        let hi = x.min(self.support_cap);
        let mut pts = linspace(0.0, hi, 32);
        if self.mode < hi {
            pts.push(self.mode);
            pts.sort_by(f64::total_cmp);
        }
        let r = integrate_pieces(|u| self.density_unchecked(u), &pts, Tolerance::rel(1e-13));
        r.value.min(1.0)
    }

    /// `E X` by adaptive quadrature.
    pub fn mean(&self) -> f64 {
        let mut pts = linspace(0.0, self.support_cap, 64);
        pts.push(self.mode);
        pts.sort_by(f64::total_cmp);
        integrate_pieces(
            |u| u * self.density_unchecked(u),
            &pts,
            Tolerance::rel(1e-13),
        )
        .value
    }

    fn density_unchecked(&self, x: f64) -> f64 {
        let v = self.potential(x);
        if v.is_finite() {
            (self.ln_c - v).exp()
        } else {
            0.0
        }
    }

    fn sampler_table(&self) -> &InverseCdfTable {
        self.sampler.get_or_init(|| {
            InverseCdfTable::new(
                |x| -self.potential(x),
                0.0,
                self.support_cap,
                SAMPLER_CELLS,
                CellMass::Quadrature,
            )
        })
    }

    /// One draw from the density using `rng`.
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let u: f64 = rng.gen();
        match (&self.base.kind, &self.perturbation) {
            (ExponentKind::Weibull { k }, Perturbation::None) => (-(1.0 - u).ln()).powf(1.0 / k),
            _ => self.sampler_table().sample(u),
        }
    }

    /// `n` i.i.d. draws, deterministic in `seed`.
    pub fn sample_unconditional(&self, n: usize, seed: u64) -> Vec<f64> {
        let mut rng = seeds::rng(seed);
        (0..n).map(|_| self.draw(&mut rng)).collect()
    }
}

/// Model record used by configuration files and the command line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct ModelSpec {
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub perturbation: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<String>,
}

impl ModelSpec {
    /// Parses `kind[:key=value,...]`, e.g. `weibull:k=3,perturbation=sin,lambda=0.5`.
    pub fn parse(text: &str) -> Result<Self> {
        let text = text.trim();
        let (kind, rest) = match text.split_once(':') {
            Some((k, r)) => (k, r),
            None => (text, ""),
        };
        let mut spec = ModelSpec {
            kind: kind.trim().to_ascii_lowercase(),
            ..Default::default()
        };
        for item in rest.split(',').filter(|s| !s.trim().is_empty()) {
            let (key, value) = item.split_once('=').ok_or_else(|| {
                Error::InvalidArgument(format!("model option `{item}` is not key=value"))
            })?;
            let num = || {
                value.trim().parse::<f64>().map_err(|_| {
                    Error::InvalidArgument(format!("model option `{key}` needs a number"))
                })
            };
            match key.trim() {
                "beta" => spec.beta = Some(num()?),
                "k" => spec.k = Some(num()?),
                "lambda" => spec.lambda = Some(num()?),
                "perturbation" => spec.perturbation = Some(value.trim().to_string()),
                "path" => spec.path = Some(value.trim().to_string()),
                other => {
                    return Err(Error::InvalidArgument(format!(
                        "unknown model option `{other}`"
                    )))
                }
            }
        }
        Ok(spec)
    }

    pub fn exponent(&self) -> Result<ExponentModel> {
        match self.kind.as_str() {
            "power" => ExponentModel::power(self.beta.unwrap_or(2.0)),
            "exponential" => Ok(ExponentModel::exponential()),
            "exp" => Ok(ExponentModel::exp_exponent()),
            "weibull" => ExponentModel::weibull(self.k.unwrap_or(3.0)),
            "tabulated" => {
                let path = self.path.as_deref().ok_or_else(|| {
                    Error::InvalidArgument("tabulated model needs path=<csv>".into())
                })?;
                Ok(read_tabulated(Path::new(path))?.0)
            }
            other => Err(Error::InvalidArgument(format!(
                "unknown model kind `{other}`"
            ))),
        }
    }

    pub fn build(&self) -> Result<PerturbedDensity> {
        let base = self.exponent()?;
        let perturbation = match self.perturbation.as_deref().unwrap_or("none") {
            "none" => {
                if self.kind == "tabulated" {
                    let path = self.path.as_deref().unwrap_or_default();
                    read_tabulated(Path::new(path))?.1
                } else {
                    Perturbation::None
                }
            }
            "sin" => Perturbation::Sin {
                lambda: self.lambda.unwrap_or(0.5),
            },
            "almost_log_concave" | "alc" => Perturbation::AlmostLogConcave,
            other => {
                return Err(Error::InvalidArgument(format!(
                    "unknown perturbation `{other}`"
                )))
            }
        };
        PerturbedDensity::new(base, perturbation)
    }
}

/// Reads a 2- or 3-column CSV `(x, g[, q])`; a non-numeric first row is a header.
pub fn read_tabulated(path: &Path) -> Result<(ExponentModel, Perturbation)> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::Io(e.to_string()))?;
    let (mut xs, mut gs, mut qs) = (Vec::new(), Vec::new(), Vec::new());
    for (row, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| Error::Io(e.to_string()))?;
        let vals: std::result::Result<Vec<f64>, _> = rec.iter().map(str::parse::<f64>).collect();
        let vals = match vals {
            Ok(v) => v,
            Err(_) if row == 0 => continue,
            Err(_) => return Err(Error::InvalidModel(format!("row {row} is not numeric"))),
        };
        if vals.len() < 2 {
            return Err(Error::InvalidModel(format!("row {row} needs x and g")));
        }
        xs.push(vals[0]);
        gs.push(vals[1]);
        if let Some(q) = vals.get(2) {
            qs.push(*q);
        }
    }
    let perturbation = if qs.is_empty() {
        Perturbation::None
    } else if qs.len() == xs.len() {
        Perturbation::Tabulated { xs: xs.clone(), qs }
    } else {
        return Err(Error::InvalidModel(
            "q column present on some rows only".into(),
        ));
    };
    Ok((ExponentModel::tabulated(xs, gs)?, perturbation))
}

/// The models every rate-function and minorant check runs over.
pub fn preset_models() -> Vec<PerturbedDensity> {
    let mut out = vec![
        PerturbedDensity::pure(ExponentModel::power(2.0).unwrap()).unwrap(),
        PerturbedDensity::pure(ExponentModel::power(3.0).unwrap()).unwrap(),
        PerturbedDensity::pure(ExponentModel::exp_exponent()).unwrap(),
        PerturbedDensity::pure(ExponentModel::weibull(3.0).unwrap()).unwrap(),
    ];
    out.extend(preset_perturbed_models());
    out
}

/// Perturbed presets: sin perturbations of `x^2`, `x^3`, Weibull(3), and the
/// almost-log-concave prefactor on `x^3`.
pub fn preset_perturbed_models() -> Vec<PerturbedDensity> {
    let sin = Perturbation::Sin { lambda: 0.5 };
    vec![
        PerturbedDensity::new(ExponentModel::power(2.0).unwrap(), sin.clone()).unwrap(),
        PerturbedDensity::new(ExponentModel::power(3.0).unwrap(), sin.clone()).unwrap(),
        PerturbedDensity::new(ExponentModel::weibull(3.0).unwrap(), sin).unwrap(),
        PerturbedDensity::new(
            ExponentModel::power(3.0).unwrap(),
            Perturbation::AlmostLogConcave,
        )
        .unwrap(),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exponential_normalizes_to_one() {
        let d = PerturbedDensity::pure(ExponentModel::exponential()).unwrap();
        assert!((d.c() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn weibull_constant_is_k() {
        let d = PerturbedDensity::pure(ExponentModel::weibull(3.0).unwrap()).unwrap();
        assert!((d.c() - 3.0).abs() < 3e-8, "c = {}", d.c());
    }

    #[test]
    fn half_gaussian_constant() {
        let d = PerturbedDensity::pure(ExponentModel::power(2.0).unwrap()).unwrap();
        let exact = 2.0 / std::f64::consts::PI.sqrt();
        assert!((d.c() / exact - 1.0).abs() < 1e-8);
        let ld = d.log_density(0.5).unwrap();
        assert!((ld - (exact.ln() - 0.25)).abs() < 1e-8);
    }

    #[test]
    fn weibull_log_density_at_one() {
        let d = PerturbedDensity::pure(ExponentModel::weibull(3.0).unwrap()).unwrap();
        let ld = d.log_density(1.0).unwrap();
        assert!((ld - (3f64.ln() - 1.0)).abs() < 1e-8);
        assert!((ld - 0.098_612_288_668).abs() < 1e-8);
    }

    #[test]
    fn log_density_rejects_nonpositive() {
        let d = PerturbedDensity::pure(ExponentModel::power(2.0).unwrap()).unwrap();
        assert_eq!(d.log_density(0.0), Err(Error::OutOfSupport(0.0)));
        assert!(matches!(d.log_density(-1.0), Err(Error::OutOfSupport(_))));
    }

    #[test]
    fn pure_log_density_is_exactly_lnc_minus_g() {
        let d = PerturbedDensity::pure(ExponentModel::power(3.0).unwrap()).unwrap();
        for &x in &[0.1, 0.7, 1.3, 2.9] {
            assert_eq!(d.log_density(x).unwrap(), d.ln_c() - d.base().g(x));
        }
    }

    #[test]
    fn empty_sample_and_determinism() {
        let d = PerturbedDensity::pure(ExponentModel::power(2.0).unwrap()).unwrap();
        assert!(d.sample_unconditional(0, 5).is_empty());
        let a = d.sample_unconditional(100, 11);
        let b = d.sample_unconditional(100, 11);
        assert_eq!(a, b);
        let c = d.sample_unconditional(100, 12);
        assert_ne!(a, c);
    }

    #[test]
    fn stable_differences_match_direct_evaluation() {
        let models = [
            ExponentModel::power(3.0).unwrap(),
            ExponentModel::exp_exponent(),
            ExponentModel::weibull(3.0).unwrap(),
            ExponentModel::power(1.5).unwrap(),
        ];
        for m in &models {
            for &(a, d) in &[(2.0, 0.3), (3.0, -0.01), (1.5, 0.001), (4.0, -1.0)] {
                let direct = m.g(a + d) - m.g(a);
                assert!((m.increment(a, d) - direct).abs() < 1e-11 * (1.0 + direct.abs()));
                let rem = direct - m.dg(a) * d;
                assert!((m.bregman(a, d) - rem).abs() < 1e-9 * (1.0 + m.g(a)));
            }
        }
    }

    #[test]
    fn bregman_survives_tiny_steps() {
        let m = ExponentModel::power(3.0).unwrap();
        let a = 1e16;
        let d = 0.027;
        // (a+d)^3 - a^3 - 3a^2 d = 3 a d^2 + d^3
        let exact = 3.0 * a * d * d + d * d * d;
        assert!((m.bregman(a, d) / exact - 1.0).abs() < 1e-12);
    }

    #[test]
    fn weibull_threshold_is_where_g_turns() {
        let m = ExponentModel::weibull(3.0).unwrap();
        assert!(m.dg(m.threshold()).abs() < 1e-12);
        assert!(m.dg(m.threshold() * 1.01) > 0.0);
    }

    #[test]
    fn superlinearity_witness() {
        assert!(ExponentModel::power(2.0).unwrap().superlinear_witness());
        assert!(ExponentModel::exp_exponent().superlinear_witness());
        assert!(ExponentModel::weibull(3.0).unwrap().superlinear_witness());
        assert!(!ExponentModel::exponential().superlinear_witness());
    }

    #[test]
    fn invalid_parameters_are_rejected() {
        assert!(ExponentModel::power(0.5).is_err());
        assert!(ExponentModel::weibull(2.0).is_err());
        let base = ExponentModel::power(2.0).unwrap();
        assert!(PerturbedDensity::new(base, Perturbation::Sin { lambda: 1.5 }).is_err());
    }

    #[test]
    fn tabulated_matches_analytic_power() {
        let xs: Vec<f64> = (1..=400).map(|i| i as f64 * 0.025).collect();
        let gs: Vec<f64> = xs.iter().map(|x| x * x).collect();
        let m = ExponentModel::tabulated(xs, gs).unwrap();
        for &x in &[0.3, 1.0, 2.2, 7.7] {
            assert!((m.g(x) - x * x).abs() < 1e-6);
            assert!((m.dg(x) - 2.0 * x).abs() < 1e-4);
        }
        let d = PerturbedDensity::pure(m).unwrap();
        assert!((d.c() - 2.0 / std::f64::consts::PI.sqrt()).abs() < 1e-5);
    }

    #[test]
    fn tabulated_rejects_concave_grid() {
        let xs: Vec<f64> = (1..=50).map(|i| i as f64 * 0.1).collect();
        let gs: Vec<f64> = xs.iter().map(|x: &f64| x.sqrt()).collect();
        assert!(matches!(
            ExponentModel::tabulated(xs, gs),
            Err(Error::InvalidModel(_))
        ));
    }

    #[test]
    fn envelope_bounds_perturbation() {
        for d in preset_perturbed_models() {
            for i in 1..2000 {
                let x = i as f64 * 0.005;
                assert!(
                    d.q(x).abs() <= d.envelope(x) + 1e-15,
                    "{} at {x}",
                    d.label()
                );
                if x >= d.y0() {
                    assert!(
                        d.envelope(x) <= d.envelope_const() * d.base().ln_g(x) + 1e-12,
                        "{} at {x}",
                        d.label()
                    );
                }
            }
        }
    }

    #[test]
    fn spec_parsing() {
        let s = ModelSpec::parse("weibull:k=3,perturbation=sin,lambda=0.25").unwrap();
        assert_eq!(s.kind, "weibull");
        assert_eq!(s.k, Some(3.0));
        assert_eq!(s.lambda, Some(0.25));
        let d = s.build().unwrap();
        assert_eq!(d.perturbation(), &Perturbation::Sin { lambda: 0.25 });
        let json: ModelSpec = serde_json::from_str(r#"{"kind":"power","beta":3}"#).unwrap();
        assert_eq!(json.exponent().unwrap(), ExponentModel::power(3.0).unwrap());
        assert!(ModelSpec::parse("weibull:shape=3").is_err());
        assert!(ModelSpec::parse("cauchy").unwrap().build().is_err());
    }
}
