//! Adaptive Gauss–Kronrod quadrature.
//!
//! A 21-point Kronrod rule with its embedded 10-point Gauss rule is applied
//! on each subinterval; the interval with the largest error estimate is
//! bisected until the global error meets `max(abs_tol, rel_tol * |I|)`.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

const XGK: [f64; 11] = [
    0.995_657_163_025_808_1,
    0.973_906_528_517_171_7,
    0.930_157_491_355_708_2,
    0.865_063_366_688_984_5,
    0.780_817_726_586_416_9,
    0.679_409_568_299_024_4,
    0.562_757_134_668_604_7,
    0.433_395_394_129_247_2,
    0.294_392_862_701_460_2,
    0.148_874_338_981_631_2,
    0.0,
];

const WGK: [f64; 11] = [
    0.011_694_638_867_371_874,
    0.032_558_162_307_964_73,
    0.054_755_896_574_352,
    0.075_039_674_810_919_95,
    0.093_125_454_583_697_6,
    0.109_387_158_802_297_64,
    0.123_491_976_262_065_85,
    0.134_709_217_311_473_33,
    0.142_775_938_577_060_08,
    0.147_739_104_901_338_5,
    0.149_445_554_002_916_9,
];

// Gauss weights for XGK[1], XGK[3], ..., XGK[9].
const WG: [f64; 5] = [
    0.066_671_344_308_688_14,
    0.149_451_349_150_580_6,
    0.219_086_362_515_982_04,
    0.269_266_719_309_996_35,
    0.295_524_224_714_752_87,
];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Integral {
    pub value: f64,
    pub error: f64,
    pub converged: bool,
}

#[derive(Debug, Clone, Copy)]
pub struct Tolerance {
    pub abs: f64,
    pub rel: f64,
    pub max_intervals: usize,
}

impl Default for Tolerance {
    fn default() -> Self {
        Tolerance {
            abs: 0.0,
            rel: 1e-12,
            max_intervals: 4000,
        }
    }
}

impl Tolerance {
    pub fn rel(rel: f64) -> Self {
        Tolerance {
            rel,
            ..Default::default()
        }
    }
}

/// Applies the 21-point Kronrod rule on `[a, b]`, returning (kronrod, |kronrod - gauss|).
pub fn gk21<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut kronrod = WGK[10] * fc;
    let mut gauss = 0.0;
    for j in 0..10 {
        let dx = half * XGK[j];
        let pair = f(center - dx) + f(center + dx);
        kronrod += WGK[j] * pair;
        if j % 2 == 1 {
            gauss += WG[j / 2] * pair;
        }
    }
    (kronrod * half, ((kronrod - gauss) * half).abs())
}

struct Piece {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Piece {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl Eq for Piece {}
impl PartialOrd for Piece {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Piece {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

/// Integrates `f` over `[a, b]`.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: Tolerance) -> Integral {
    integrate_pieces(f, &[a, b], tol)
}

/// Integrates `f` over `[points[0], points[last]]`, seeding the adaptive
/// subdivision with the given breakpoints (which must be nondecreasing).
pub fn integrate_pieces<F: Fn(f64) -> f64>(f: F, points: &[f64], tol: Tolerance) -> Integral {
    let mut heap = BinaryHeap::new();
    let mut total = 0.0;
    let mut total_err = 0.0;
    for w in points.windows(2) {
        if w[1] <= w[0] {
            continue;
        }
        let (v, e) = gk21(&f, w[0], w[1]);
        total += v;
        total_err += e;
        heap.push(Piece {
            a: w[0],
            b: w[1],
            value: v,
            error: e,
        });
    }
    let mut count = heap.len();
    loop {
        let target = tol.abs.max(tol.rel * total.abs());
        if total_err <= target || !total_err.is_finite() {
            break;
        }
        if count >= tol.max_intervals {
            return Integral {
                value: total,
                error: total_err,
                converged: false,
            };
        }
        let Some(worst) = heap.pop() else { break };
        let mid = 0.5 * (worst.a + worst.b);
        if mid <= worst.a || mid >= worst.b {
            // interval can no longer be split in floating point
            heap.push(Piece {
                error: 0.0,
                ..worst
            });
            total_err -= worst.error;
            continue;
        }
        let (lv, le) = gk21(&f, worst.a, mid);
        let (rv, re) = gk21(&f, mid, worst.b);
        total += lv + rv - worst.value;
        total_err += le + re - worst.error;
        heap.push(Piece {
            a: worst.a,
            b: mid,
            value: lv,
            error: le,
        });
        heap.push(Piece {
            a: mid,
            b: worst.b,
            value: rv,
            error: re,
        });
        count += 1;
    }
    // re-sum to shed accumulated cancellation from the running updates
    let (value, error) = heap
        .iter()
        .fold((0.0, 0.0), |(v, e), p| (v + p.value, e + p.error));
    Integral {
        value,
        error,
        converged: error.is_finite(),
    }
}

/// Evenly spaced breakpoints `lo = p_0 < ... < p_m = hi`.
pub fn linspace(lo: f64, hi: f64, m: usize) -> Vec<f64> {
    let m = m.max(1);
    (0..=m)
        .map(|i| {
            if i == m {
                hi
            } else {
                lo + (hi - lo) * i as f64 / m as f64
            }
        })
        .collect()
}

/// Golden-section maximization of a unimodal function on `[lo, hi]`.
pub fn golden_max<F: Fn(f64) -> f64>(f: F, mut lo: f64, mut hi: f64, tol: f64) -> (f64, f64) {
    const INV_PHI: f64 = 0.618_033_988_749_894_8;
    let mut x1 = hi - INV_PHI * (hi - lo);
    let mut x2 = lo + INV_PHI * (hi - lo);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    for _ in 0..200 {
        if (hi - lo).abs() <= tol {
            break;
        }
        if f1 < f2 {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + INV_PHI * (hi - lo);
            f2 = f(x2);
        } else {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - INV_PHI * (hi - lo);
            f1 = f(x1);
        }
    }
    if f1 >= f2 {
        (x1, f1)
    } else {
        (x2, f2)
    }
}

/// Maximizes `f` on `[lo, hi]` by a uniform scan followed by golden-section
/// refinement around the best scan point.
pub fn scan_max<F: Fn(f64) -> f64>(f: F, lo: f64, hi: f64, points: usize) -> (f64, f64) {
    let grid = linspace(lo, hi, points);
    let (mut best_i, mut best_v) = (0, f64::NEG_INFINITY);
    for (i, &x) in grid.iter().enumerate() {
        let v = f(x);
        if v > best_v {
            best_i = i;
            best_v = v;
        }
    }
    let a = grid[best_i.saturating_sub(1)];
    let b = grid[(best_i + 1).min(grid.len() - 1)];
    let (x, v) = golden_max(&f, a, b, 1e-13 * (1.0 + b.abs()));
    if v >= best_v {
        (x, v)
    } else {
        (grid[best_i], best_v)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomial_is_exact() {
        let r = integrate(|x| x.powi(5) - 3.0 * x * x, 0.0, 2.0, Tolerance::default());
        assert!((r.value - (64.0 / 6.0 - 8.0)).abs() < 1e-13);
        assert!(r.converged);
    }

    #[test]
    fn gaussian_half_line() {
        let r = integrate(|x: f64| (-x * x).exp(), 0.0, 12.0, Tolerance::default());
        assert!((r.value - std::f64::consts::PI.sqrt() / 2.0).abs() < 1e-13);
    }

    #[test]
    fn narrow_peak_with_breakpoints() {
        let f = |x: f64| (-(x - 7.3f64).powi(2) * 1e4).exp();
        let pts = [0.0, 7.3, 20.0];
        let r = integrate_pieces(f, &pts, Tolerance::default());
        let exact = (std::f64::consts::PI / 1e4).sqrt();
        assert!((r.value / exact - 1.0).abs() < 1e-11);
    }

    #[test]
    fn golden_finds_parabola_peak() {
        let (x, v) = scan_max(|x| -(x - 1.234) * (x - 1.234) + 2.0, 0.0, 5.0, 50);
        assert!((x - 1.234).abs() < 1e-6);
        assert!((v - 2.0).abs() < 1e-12);
    }
}
