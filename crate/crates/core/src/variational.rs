//! Variational energies `I_g` over the large-deviation event and its band
//! complement, the probability bounds they drive, and a brute-force oracle.

use rayon::prelude::*;
use serde::Serialize;

use crate::density::{ExponentModel, PerturbedDensity};
use crate::error::{Error, Result};
use crate::quadrature::{golden_max, linspace};

/// `n` summands, threshold `a` for the mean and half-width `eps` of the band.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BandEvent {
    pub n: usize,
    pub a: f64,
    pub eps: f64,
}

impl BandEvent {
    pub fn new(n: usize, a: f64, eps: f64) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidArgument(format!(
                "band event needs n >= 2, got {n}"
            )));
        }
        if !(a > 0.0) || !a.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "a must be positive, got {a}"
            )));
        }
        if !(eps >= 0.0) || eps >= a {
            return Err(Error::InvalidArgument(format!(
                "eps must lie in [0, a), got {eps}"
            )));
        }
        Ok(BandEvent { n, a, eps })
    }

    /// Checks `a > X` for the given exponent.
    pub fn check_against(&self, g: &ExponentModel) -> Result<()> {
        if self.a <= g.threshold() {
            return Err(Error::DomainError(format!(
                "a = {} does not exceed the threshold X = {}",
                self.a,
                g.threshold()
            )));
        }
        Ok(())
    }

    /// Open band `(a - eps, a + eps)`.
    pub fn in_band(&self, x: f64) -> bool {
        x > self.a - self.eps && x < self.a + self.eps
    }

    pub fn nf(&self) -> f64 {
        self.n as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LocalizationBounds {
    pub f_g1: f64,
    pub f_g2: f64,
    pub i_icc: f64,
    pub i_c: f64,
    #[serde(rename = "H")]
    pub h: f64,
    #[serde(rename = "G")]
    pub g: f64,
    pub tau: f64,
}

/// `F(k) - n g(a)` for `k` coordinates moved by `d` and the rest moved by
/// `-k d / (n - k)`; the tangent terms cancel, leaving Bregman remainders.
fn profile_excess(g: &ExponentModel, n: usize, a: f64, k: usize, d: f64) -> Result<f64> {
    let rest = (n - k) as f64;
    let shift = -(k as f64) * d / rest;
    if a + shift <= 0.0 || a + d <= 0.0 {
        return Err(Error::DomainError(format!(
            "profile leaves the support: a = {a}, k = {k}, shift = {shift}"
        )));
    }
    Ok(k as f64 * g.bregman(a, d) + rest * g.bregman(a, shift))
}

/// `G(a) = g(a + 1/g(a)) - g(a)`.
pub fn smoothness_gap(g: &ExponentModel, a: f64) -> f64 {
    let inv = (-g.ln_g(a)).exp();
    g.increment(a, inv)
}

pub fn closed_form_bounds(g: &ExponentModel, ev: &BandEvent) -> Result<LocalizationBounds> {
    let n = ev.n;
    let nf = ev.nf();
    let down = ev.a - ev.eps / (nf - 1.0);
    if down <= 0.0 {
        return Err(Error::DomainError(format!(
            "a - eps/(n-1) = {down} is not positive"
        )));
    }
    let h1 = profile_excess(g, n, ev.a, 1, ev.eps)?;
    let h2 = profile_excess(g, n, ev.a, 1, -ev.eps)?;
    let i_c = nf * g.g(ev.a);
    let h = h1.min(h2);
    let gap = smoothness_gap(g, ev.a);
    Ok(LocalizationBounds {
        f_g1: i_c + h1,
        f_g2: i_c + h2,
        i_icc: i_c + h,
        i_c,
        h,
        g: gap,
        tau: nf * gap,
    })
}

/// `k g(a + eps) + (n - k) g(a - k eps / (n - k))`.
pub fn minimizer_profile(g: &ExponentModel, ev: &BandEvent, k: usize) -> Result<f64> {
    if k == 0 || k >= ev.n {
        return Err(Error::InvalidArgument(format!(
            "profile index k = {k} outside 1..{}",
            ev.n
        )));
    }
    Ok(ev.nf() * g.g(ev.a) + profile_excess(g, ev.n, ev.a, k, ev.eps)?)
}

/// Constraint sets for the brute-force search; all include `sum x >= n a`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Region {
    C,
    /// Some coordinate at or above `a + eps`.
    AcapC,
    /// Some coordinate at or below `a - eps`.
    BcapC,
    IccC,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BruteForce {
    pub value: f64,
    pub point: Vec<f64>,
    pub grid: usize,
}

const BRUTE_MAX_N: usize = 8;
const BRUTE_SEEDS: usize = 8;
const BRUTE_TOL: f64 = 1e-5;

struct Search<'a, V: Fn(f64) -> f64 + Sync> {
    v: &'a V,
    ev: BandEvent,
    region: Region,
    lo: f64,
    hi: f64,
}

impl<V: Fn(f64) -> f64 + Sync> Search<'_, V> {
    fn total(&self, x: &[f64]) -> f64 {
        x.iter().map(|&u| (self.v)(u)).sum()
    }

    fn feasible(&self, x: &[f64]) -> bool {
        let up = self.ev.a + self.ev.eps;
        let down = self.ev.a - self.ev.eps;
        match self.region {
            Region::C => true,
            Region::AcapC => x.iter().any(|&u| u >= up),
            Region::BcapC => x.iter().any(|&u| u <= down),
            Region::IccC => unreachable!(),
        }
    }

    /// Intervals of `u` for coordinate `i` (paired with `j` when the pair sum
    /// `s` is held fixed) keeping the state in the region.
    fn pair_intervals(&self, x: &[f64], i: usize, j: usize, s: f64) -> Vec<(f64, f64)> {
        let base = (self.lo.max(s - self.hi), self.hi.min(s - self.lo));
        if base.0 > base.1 {
            return vec![];
        }
        let others = x
            .iter()
            .enumerate()
            .filter(|(m, _)| *m != i && *m != j)
            .map(|(_, &u)| u);
        let up = self.ev.a + self.ev.eps;
        let down = self.ev.a - self.ev.eps;
        let pieces = match self.region {
            Region::C => vec![base],
            Region::AcapC => {
                if others.clone().any(|u| u >= up) {
                    vec![base]
                } else {
                    vec![(up, f64::INFINITY), (f64::NEG_INFINITY, s - up)]
                }
            }
            Region::BcapC => {
                if others.clone().any(|u| u <= down) {
                    vec![base]
                } else {
                    vec![(f64::NEG_INFINITY, down), (s - down, f64::INFINITY)]
                }
            }
            Region::IccC => unreachable!(),
        };
        pieces
            .into_iter()
            .map(|(l, h)| (l.max(base.0), h.min(base.1)))
            .filter(|(l, h)| l <= h)
            .collect()
    }

    /// Interval for coordinate `i` alone, given `sum >= n a`.
    fn single_intervals(&self, x: &[f64], i: usize) -> Vec<(f64, f64)> {
        let rest: f64 = x
            .iter()
            .enumerate()
            .filter(|(m, _)| *m != i)
            .map(|(_, u)| u)
            .sum();
        let floor = (self.ev.nf() * self.ev.a - rest).max(self.lo);
        let others = x
            .iter()
            .enumerate()
            .filter(|(m, _)| *m != i)
            .map(|(_, &u)| u);
        let up = self.ev.a + self.ev.eps;
        let down = self.ev.a - self.ev.eps;
        let (l, h) = match self.region {
            Region::C => (floor, self.hi),
            Region::AcapC if !others.clone().any(|u| u >= up) => (floor.max(up), self.hi),
            Region::BcapC if !others.clone().any(|u| u <= down) => (floor, self.hi.min(down)),
            _ => (floor, self.hi),
        };
        if l <= h {
            vec![(l, h)]
        } else {
            vec![]
        }
    }

    fn line_min<F: Fn(f64) -> f64>(f: F, l: f64, h: f64) -> (f64, f64) {
        if h - l <= 1e-15 * (1.0 + h.abs()) {
            return (l, f(l));
        }
        let grid = linspace(l, h, 48);
        let (mut bi, mut bv) = (0, f64::INFINITY);
        for (k, &u) in grid.iter().enumerate() {
            let v = f(u);
            if v < bv {
                bi = k;
                bv = v;
            }
        }
        let a = grid[bi.saturating_sub(1)];
        let b = grid[(bi + 1).min(grid.len() - 1)];
        let (u, nv) = golden_max(|u| -f(u), a, b, 1e-14 * (1.0 + b.abs()));
        if -nv < bv {
            (u, -nv)
        } else {
            (grid[bi], bv)
        }
    }

    /// Pairwise and single-coordinate descent until the energy stalls.
    fn refine(&self, mut x: Vec<f64>) -> (f64, Vec<f64>) {
        let n = x.len();
        let mut best = self.total(&x);
        for _ in 0..400 {
            let start = best;
            for i in 0..n {
                for j in 0..n {
                    if i == j {
                        continue;
                    }
                    let s = x[i] + x[j];
                    let fixed = best - (self.v)(x[i]) - (self.v)(x[j]);
                    for (l, h) in self.pair_intervals(&x, i, j, s) {
                        let (u, val) = Self::line_min(|u| (self.v)(u) + (self.v)(s - u), l, h);
                        if fixed + val < best {
                            x[i] = u;
                            x[j] = s - u;
                            best = self.total(&x);
                        }
                    }
                }
                let fixed = best - (self.v)(x[i]);
                for (l, h) in self.single_intervals(&x, i) {
                    let (u, val) = Self::line_min(self.v, l, h);
                    if fixed + val < best {
                        x[i] = u;
                        best = self.total(&x);
                    }
                }
            }
            if start - best <= 1e-15 * best.abs().max(1.0) {
                break;
            }
        }
        (best, x)
    }

    /// Coarse grid over the slice `sum x = n a`, returning the best `keep` points.
    fn coarse(&self, grid: usize, keep: usize) -> Vec<(f64, Vec<f64>)> {
        let n = self.ev.n;
        let free = n - 1;
        let axis = linspace(self.lo, self.hi, grid - 1);
        let total_sum = self.ev.nf() * self.ev.a;
        let cells = grid.pow(free as u32);
        let decode = |mut idx: usize| {
            let mut x = Vec::with_capacity(n);
            for _ in 0..free {
                x.push(axis[idx % grid]);
                idx /= grid;
            }
            let last = total_sum - x.iter().sum::<f64>();
            x.push(last);
            x
        };
        let mut found: Vec<(f64, usize)> = (0..cells)
            .into_par_iter()
            .filter_map(|idx| {
                let x = decode(idx);
                let last = x[n - 1];
                if last < self.lo || last > self.hi || !self.feasible(&x) {
                    return None;
                }
                Some((self.total(&x), idx))
            })
            .collect();
        found.sort_by(|p, q| p.0.total_cmp(&q.0).then(p.1.cmp(&q.1)));
        found.truncate(keep);
        found.into_iter().map(|(v, idx)| (v, decode(idx))).collect()
    }

    fn run(&self, grid: usize, seeds: usize) -> Option<(f64, Vec<f64>)> {
        let starts = self.coarse(grid, seeds);
        starts
            .into_iter()
            .map(|(_, x)| self.refine(x))
            .min_by(|p, q| p.0.total_cmp(&q.0))
    }
}

/// Minimizes `sum V(x_i)` over the region by a coarse grid on the slice
/// `sum x = n a` followed by pairwise descent; stable under grid halving.
pub fn brute_force_potential<V>(v: &V, ev: &BandEvent, region: Region) -> Result<BruteForce>
where
    V: Fn(f64) -> f64 + Sync,
{
    if ev.n > BRUTE_MAX_N {
        return Err(Error::InvalidArgument(format!(
            "brute force is limited to n <= {BRUTE_MAX_N}, got {}",
            ev.n
        )));
    }
    if region == Region::IccC {
        let a = brute_force_potential(v, ev, Region::AcapC);
        let b = brute_force_potential(v, ev, Region::BcapC);
        return match (a, b) {
            (Ok(a), Ok(b)) => Ok(if a.value <= b.value { a } else { b }),
            (Ok(a), Err(_)) => Ok(a),
            (Err(_), Ok(b)) => Ok(b),
            (Err(e), Err(_)) => Err(e),
        };
    }
    let search = Search {
        v,
        ev: *ev,
        region,
        lo: 1e-3,
        hi: ev.a + ev.nf() * ev.eps + 5.0,
    };
    let free = (ev.n - 1) as f64;
    let full = ((4e6f64).powf(1.0 / free).floor() as usize).clamp(4, 64);
    let mut seeds = BRUTE_SEEDS;
    let mut last = None;
    for _ in 0..8 {
        let fine = search.run(full, seeds);
        let coarse = search.run((full / 2).max(3), seeds);
        if let (Some(f), Some(c)) = (fine, coarse) {
            let rel = (f.0 - c.0).abs() / f.0.abs().max(1e-300);
            let best = if f.0 <= c.0 { f } else { c };
            if rel < BRUTE_TOL {
                return Ok(BruteForce {
                    value: best.0,
                    point: best.1,
                    grid: full,
                });
            }
            last = Some(rel);
        }
        seeds *= 2;
    }
    Err(Error::NoConvergence(match last {
        Some(rel) => format!("grid halving changes the infimum by {rel:e} (relative)"),
        None => "no feasible grid point in the search box".into(),
    }))
}

/// Brute-force infimum of `sum (g + q)(x_i)` over the region.
pub fn brute_force_infimum(
    model: &PerturbedDensity,
    ev: &BandEvent,
    region: Region,
) -> Result<f64> {
    Ok(brute_force_potential(&|x| model.potential(x), ev, region)?.value)
}

/// `I_{g-M}` and `I_{g+M}` over the region, bracketing the perturbed infimum.
pub fn brute_force_sandwich(
    model: &PerturbedDensity,
    ev: &BandEvent,
    region: Region,
) -> Result<(f64, f64)> {
    let g = model.base();
    let lower = |x: f64| g.g(x) - model.envelope(x);
    let upper = |x: f64| g.g(x) + model.envelope(x);
    Ok((
        brute_force_potential(&lower, ev, region)?.value,
        brute_force_potential(&upper, ev, region)?.value,
    ))
}

/// Convex minorant `h` of `g - M`: the tangent of `r = g - N log g` at the
/// knot `y3` below it and `r` itself above.
#[derive(Debug, Clone, Serialize)]
pub struct PiecewiseMinorant {
    #[serde(skip)]
    g: ExponentModel,
    pub n_const: f64,
    pub y1: f64,
    pub y2: f64,
    pub y3: f64,
    pub r_y3: f64,
    pub dr_y3: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MinorantCheck {
    /// `max (h - (g - M))` over the probe grid; nonpositive when `h <= g - M`.
    pub max_excess: f64,
    pub min_second_difference: f64,
    pub knot_jump: f64,
    pub knot_slope_jump: f64,
    pub knot_conditions: bool,
    pub probes: usize,
}

impl MinorantCheck {
    pub fn passed(&self) -> bool {
        self.max_excess <= 0.0
            && self.min_second_difference >= 0.0
            && self.knot_jump <= 1e-9
            && self.knot_slope_jump <= 1e-6
            && self.knot_conditions
    }
}

impl PiecewiseMinorant {
    pub fn r(&self, x: f64) -> f64 {
        self.g.g(x) - self.n_const * self.g.ln_g(x)
    }

    pub fn dr(&self, x: f64) -> f64 {
        let gx = self.g.g(x);
        self.g.dg(x) * (1.0 - self.n_const / gx)
    }

    pub fn s(&self, x: f64) -> f64 {
        self.r_y3 + self.dr_y3 * (x - self.y3)
    }

    pub fn h(&self, x: f64) -> f64 {
        if x < self.y3 {
            self.s(x)
        } else {
            self.r(x)
        }
    }

    /// Probes `h <= g - M`, convexity and the knot on `probes` points in `(0, x_max]`.
    pub fn check<M: Fn(f64) -> f64>(&self, m: M, x_max: f64, probes: usize) -> MinorantCheck {
        let step = x_max / probes as f64;
        let mut max_excess = f64::NEG_INFINITY;
        let mut min_d2 = f64::INFINITY;
        let hs: Vec<f64> = (1..=probes).map(|i| self.h(i as f64 * step)).collect();
        for i in 1..=probes {
            let x = i as f64 * step;
            let target = self.g.g(x) - m(x);
            let excess = hs[i - 1] - target;
            // rounding allowance for the two evaluations
            let slack = 4.0 * f64::EPSILON * (hs[i - 1].abs() + target.abs());
            max_excess = max_excess.max(excess - slack);
        }
        for w in hs.windows(3) {
            let d2 = w[0] - 2.0 * w[1] + w[2];
            let slack = 8.0 * f64::EPSILON * (w[0].abs() + w[1].abs() + w[2].abs());
            min_d2 = min_d2.min(d2 + 1e-10 + slack);
        }
        let d = 1e-7 * self.y3.max(1.0);
        let left = self.s(self.y3);
        let right = self.r(self.y3);
        let left_slope = self.dr_y3;
        let right_slope = (self.r(self.y3 + d) - self.r(self.y3 - d)) / (2.0 * d);
        MinorantCheck {
            max_excess,
            min_second_difference: min_d2,
            knot_jump: (left - right).abs() / right.abs().max(1.0),
            knot_slope_jump: (left_slope - right_slope).abs() / right_slope.abs().max(1.0),
            knot_conditions: self.g.dg(self.y3) > 2.0 * self.g.dg(self.y2)
                && self.g.g(self.y3) > 2.0 * self.n_const,
            probes,
        }
    }

    /// A probe range that reaches well past the knot.
    pub fn probe_range(&self) -> f64 {
        4.0 * self.y3.max(1.0)
    }
}

/// Builds the minorant on a probe grid of `(0, x_max]`.
pub fn convex_minorant<M: Fn(f64) -> f64>(
    g: &ExponentModel,
    m: M,
    n_const: f64,
    y0: f64,
    x_max: f64,
) -> Result<PiecewiseMinorant> {
    const PROBES: usize = 20_000;
    if !(n_const > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "envelope constant must be positive, got {n_const}"
        )));
    }
    let step = x_max / PROBES as f64;
    let xs: Vec<f64> = (1..=PROBES).map(|i| i as f64 * step).collect();
    for &x in xs.iter().filter(|&&x| x >= y0) {
        if m(x) > n_const * g.ln_g(x) * (1.0 + 1e-12) + 1e-300 {
            return Err(Error::EnvelopeViolated(format!(
                "M({x}) = {} exceeds N log g = {}",
                m(x),
                n_const * g.ln_g(x)
            )));
        }
    }
    let x_floor = g.threshold();
    // y1: from here on g > N (so r' > 0 and r'' > 0 beyond X)
    let y1_idx = xs
        .iter()
        .rposition(|&x| x <= x_floor || g.g(x) <= n_const || g.dg(x) <= 0.0)
        .map_or(0, |i| i + 1);
    if y1_idx >= xs.len() {
        return Err(Error::ThresholdNotFound(
            "g never exceeds N on the probe range".into(),
        ));
    }
    let y1 = xs[y1_idx];
    let mut running_m = 0.0f64;
    let mut y2_idx = None;
    for (i, &x) in xs.iter().enumerate() {
        running_m = running_m.max(m(x));
        if i >= y1_idx && x >= y0 && running_m <= n_const * g.ln_g(x) {
            y2_idx = Some(i);
            break;
        }
    }
    let y2_idx = y2_idx.ok_or_else(|| {
        Error::ThresholdNotFound("no y2 with sup M on (0, y2) below N log g(y2)".into())
    })?;
    let y2 = xs[y2_idx];
    let dg2 = g.dg(y2);
    let mut candidate = y2_idx + 1;
    while candidate < xs.len() {
        let y3 = xs[candidate];
        if g.dg(y3) > 2.0 * dg2 && g.g(y3) > 2.0 * n_const {
            let mut h = PiecewiseMinorant {
                g: g.clone(),
                n_const,
                y1,
                y2,
                y3,
                r_y3: 0.0,
                dr_y3: 0.0,
            };
            h.r_y3 = h.r(y3);
            h.dr_y3 = h.dr(y3);
            let below_ok = xs[..candidate]
                .iter()
                .all(|&x| h.s(x) <= g.g(x) - m(x) + 4.0 * f64::EPSILON * g.g(x).abs());
            if below_ok {
                return Ok(h);
            }
        }
        candidate += 1;
    }
    Err(Error::ThresholdNotFound(format!(
        "no knot y3 satisfying the slope and level conditions below {x_max}"
    )))
}

/// Default probe range for a density: far enough past `y0` and the point
/// where `g > 2N` for the slope doubling to occur.
pub fn minorant_range(model: &PerturbedDensity) -> Result<f64> {
    let g = model.base();
    let level = g.first_at_ln_level((2.0 * model.envelope_const()).ln().max(0.0))?;
    Ok(16.0
        * [1.0, g.threshold(), model.y0(), level]
            .iter()
            .fold(0.0f64, |m, v| m.max(*v)))
}

pub fn convex_minorant_for(model: &PerturbedDensity) -> Result<PiecewiseMinorant> {
    convex_minorant(
        model.base(),
        |x| model.envelope(x),
        model.envelope_const(),
        model.y0(),
        minorant_range(model)?,
    )
}

/// Interval `[n h(a), n g(a) + n N log g(a)]` containing `I_{g,q}(C)`;
/// collapses to `n g(a)` for unperturbed models.
pub fn i_c_interval(model: &PerturbedDensity, ev: &BandEvent) -> Result<(f64, f64)> {
    let g = model.base();
    let nf = ev.nf();
    if model.perturbation().is_none() {
        let v = nf * g.g(ev.a);
        return Ok((v, v));
    }
    let h = convex_minorant_for(model)?;
    if ev.a < h.y3 {
        return Err(Error::DomainError(format!(
            "a = {} lies below the minorant knot y3 = {}",
            ev.a, h.y3
        )));
    }
    Ok((
        nf * h.h(ev.a),
        nf * g.g(ev.a) + nf * model.envelope_const() * g.ln_g(ev.a),
    ))
}

/// `tau_n`: `n G(a)` for pure models, with the `n N (log g(a) + log g(a + 1/g(a)))`
/// volume terms added when perturbed.
pub fn tau(model: &PerturbedDensity, ev: &BandEvent) -> f64 {
    let g = model.base();
    let (a, nf) = (ev.a, ev.nf());
    let base = nf * smoothness_gap(g, a);
    if model.perturbation().is_none() {
        return base;
    }
    let big_n = model.envelope_const();
    let shifted = a + (-g.ln_g(a)).exp();
    base + nf * big_n * (g.ln_g(a) + g.ln_g(shifted))
}

/// Lower bound `n log c - I(C) - tau_n - n log g(a)` on `log P(C)`.
pub fn log_prob_c_lower(model: &PerturbedDensity, ev: &BandEvent) -> Result<f64> {
    let g = model.base();
    ev.check_against(g)?;
    let nf = ev.nf();
    let (i_c, _) = i_c_interval(model, ev)?;
    Ok(nf * model.ln_c() - i_c - tau(model, ev) - nf * g.ln_g(ev.a))
}

/// Upper bound `n log c - I + n log I + log(n + 1)` on `log P(I^c & C)`,
/// plus `n log 2` and the envelope corrections in the perturbed case.
pub fn log_prob_icc_upper(model: &PerturbedDensity, ev: &BandEvent) -> Result<f64> {
    let g = model.base();
    ev.check_against(g)?;
    let nf = ev.nf();
    let b = closed_form_bounds(g, ev)?;
    if model.perturbation().is_none() {
        let i = b.i_icc;
        return Ok(nf * model.ln_c() - i + nf * i.ln() + (nf + 1.0).ln());
    }
    let h = convex_minorant_for(model)?;
    if ev.a < h.y3 {
        return Err(Error::DomainError(format!(
            "a = {} lies below the minorant knot y3 = {}",
            ev.a, h.y3
        )));
    }
    let big_n = model.envelope_const();
    let lower = b.i_icc - nf * big_n * g.ln_g(ev.a + ev.eps);
    let upper = nf * (big_n + 1.0) * g.g(ev.a + ev.eps / (nf - 1.0));
    if !(lower > 0.0) {
        return Err(Error::DomainError(format!(
            "perturbed energy lower bound {lower} is not positive"
        )));
    }
    Ok(nf * model.ln_c() - lower + nf * upper.ln() + (nf + 1.0).ln() + nf * 2f64.ln())
}
