//! Inverse-CDF tables for one-dimensional densities known up to a constant.
//!
//! The log-density is sampled on a uniform knot grid and treated as linear in
//! each cell, so every cell carries an exponential piece whose CDF inverts in
//! closed form. Cell masses either come from that same log-linear shape or,
//! when accuracy matters more than build time, from Gauss–Kronrod quadrature of
//! the exact density over the cell.

use crate::quadrature::gk21;

/// Log-density floor relative to the maximum; keeps cell arithmetic finite.
const LOG_FLOOR: f64 = -700.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CellMass {
    LogLinear,
    Quadrature,
}

#[derive(Debug, Clone)]
pub struct InverseCdfTable {
    lo: f64,
    width: f64,
    /// log-density at the knots, shifted so the maximum is 0
    log_dens: Vec<f64>,
    /// normalized cumulative mass at the knots (first 0, last 1)
    cum: Vec<f64>,
    /// total mass in shifted units
    shifted_total: f64,
    /// log of the unnormalized total mass, including the shift
    log_total: f64,
}

impl InverseCdfTable {
    /// Tabulates `log_f` on `cells` equal cells spanning `[lo, hi]`.
    pub fn new<F: Fn(f64) -> f64>(
        log_f: F,
        lo: f64,
        hi: f64,
        cells: usize,
        mass: CellMass,
    ) -> Self {
        assert!(hi > lo && cells >= 1);
        let width = (hi - lo) / cells as f64;
        let knots: Vec<f64> = (0..=cells)
            .map(|i| {
                if i == cells {
                    hi
                } else {
                    lo + width * i as f64
                }
            })
            .collect();
        let raw: Vec<f64> = knots.iter().map(|&x| log_f(x)).collect();
        let shift = raw
            .iter()
            .copied()
            .filter(|v| v.is_finite())
            .fold(f64::NEG_INFINITY, f64::max);
        let shift = if shift.is_finite() { shift } else { 0.0 };
        let log_dens: Vec<f64> = raw
            .iter()
            .map(|&v| {
                if v.is_nan() {
                    LOG_FLOOR
                } else {
                    (v - shift).max(LOG_FLOOR)
                }
            })
            .collect();
        let mut masses = Vec::with_capacity(cells);
        for i in 0..cells {
            let m = match mass {
                CellMass::LogLinear => loglinear_mass(log_dens[i], log_dens[i + 1], width),
                CellMass::Quadrature => {
                    let f = |x: f64| {
                        let v = log_f(x) - shift;
                        if v.is_nan() {
                            0.0
                        } else {
                            v.exp()
                        }
                    };
                    gk21(&f, knots[i], knots[i + 1]).0.max(0.0)
                }
            };
            masses.push(m);
        }
        let total: f64 = masses.iter().sum();
        let mut cum = Vec::with_capacity(cells + 1);
        let mut acc = 0.0;
        cum.push(0.0);
        for m in &masses {
            acc += m;
            cum.push(acc / total);
        }
        *cum.last_mut().unwrap() = 1.0;
        InverseCdfTable {
            lo,
            width,
            log_dens,
            cum,
            shifted_total: total,
            log_total: total.ln() + shift,
        }
    }

    pub fn lo(&self) -> f64 {
        self.lo
    }

    pub fn hi(&self) -> f64 {
        self.lo + self.width * (self.cells() as f64)
    }

    pub fn cells(&self) -> usize {
        self.log_dens.len() - 1
    }

    /// log of the (unnormalized) mass the table represents.
    pub fn log_total_mass(&self) -> f64 {
        self.log_total
    }

    /// Maps a uniform `u` in `[0, 1)` to a draw.
    pub fn sample(&self, u: f64) -> f64 {
        let cells = self.cells();
        let i = self.cum.partition_point(|&c| c <= u).clamp(1, cells) - 1;
        let span = self.cum[i + 1] - self.cum[i];
        let v = if span > 0.0 {
            ((u - self.cum[i]) / span).clamp(0.0, 1.0)
        } else {
            0.5
        };
        let d = self.log_dens[i + 1] - self.log_dens[i];
        let y = invert_cell(v, d, self.width);
        (self.lo + self.width * i as f64 + y).min(self.hi())
    }

    /// Normalized CDF of the tabulated law.
    pub fn cdf(&self, x: f64) -> f64 {
        if x <= self.lo {
            return 0.0;
        }
        if x >= self.hi() {
            return 1.0;
        }
        let i = (((x - self.lo) / self.width) as usize).min(self.cells() - 1);
        let y = x - (self.lo + self.width * i as f64);
        let d = self.log_dens[i + 1] - self.log_dens[i];
        self.cum[i] + (self.cum[i + 1] - self.cum[i]) * cell_fraction(y, d, self.width)
    }

    /// Normalized density of the tabulated law (log-linear between knots).
    pub fn density(&self, x: f64) -> f64 {
        if x < self.lo || x > self.hi() {
            return 0.0;
        }
        let i = (((x - self.lo) / self.width) as usize).min(self.cells() - 1);
        let y = (x - (self.lo + self.width * i as f64)) / self.width;
        let ld = self.log_dens[i] + y * (self.log_dens[i + 1] - self.log_dens[i]);
        ld.exp() / self.shifted_total
    }
}

/// Mass of `exp(l0 + (l1 - l0) y / h)` over `y` in `[0, h]`.
fn loglinear_mass(l0: f64, l1: f64, h: f64) -> f64 {
    let d = l1 - l0;
    let top = l0.max(l1);
    if d.abs() < 1e-9 {
        return h * (0.5 * (l0 + l1)).exp();
    }
    h * top.exp() * (-(-d.abs()).exp_m1()) / d.abs()
}

/// Position in a cell of width `h` whose mass fraction up to it equals `v`.
fn invert_cell(v: f64, d: f64, h: f64) -> f64 {
    if d.abs() < 1e-9 {
        return v * h;
    }
    let beta = d / h;
    let y = if d > 0.0 {
        h + (v + (1.0 - v) * (-d).exp()).ln() / beta
    } else {
        (v * d.exp_m1()).ln_1p() / beta
    };
    y.clamp(0.0, h)
}

/// Mass fraction of a cell below offset `y`.
fn cell_fraction(y: f64, d: f64, h: f64) -> f64 {
    if d.abs() < 1e-9 {
        return y / h;
    }
    let beta = d / h;
    let v = if d > 0.0 {
        ((beta * y - d).exp() - (-d).exp()) / (-(-d).exp_m1())
    } else {
        (beta * y).exp_m1() / d.exp_m1()
    };
    v.clamp(0.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exponential_law_round_trips() {
        let t = InverseCdfTable::new(|x| -x, 0.0, 40.0, 400, CellMass::LogLinear);
        for &u in &[0.01, 0.3, 0.5, 0.9, 0.999] {
            let x = t.sample(u);
            let exact = -(1.0f64 - u).ln();
            assert!((x - exact).abs() < 1e-9, "u={u} x={x} exact={exact}");
            assert!((t.cdf(x) - u).abs() < 1e-12);
        }
        assert!((t.log_total_mass() - (1.0 - (-40.0f64).exp()).ln()).abs() < 1e-12);
    }

    #[test]
    fn quadrature_masses_match_gaussian() {
        let t = InverseCdfTable::new(|x| -0.5 * x * x, -10.0, 10.0, 200, CellMass::Quadrature);
        let z = (2.0 * std::f64::consts::PI).sqrt();
        assert!((t.log_total_mass() - z.ln()).abs() < 1e-12);
        assert!((t.cdf(0.0) - 0.5).abs() < 1e-12);
        assert!((t.density(0.0) - 1.0 / z).abs() < 1e-3);
    }

    #[test]
    fn floor_handles_vanishing_endpoint() {
        let t = InverseCdfTable::new(
            |x: f64| {
                if x <= 0.0 {
                    f64::NEG_INFINITY
                } else {
                    2.0 * x.ln() - x
                }
            },
            0.0,
            60.0,
            2000,
            CellMass::Quadrature,
        );
        let x = t.sample(0.5);
        assert!(x > 0.0 && x.is_finite());
        // gamma(3) median ~ 2.674
        assert!((x - 2.674_060).abs() < 1e-3);
    }
}
