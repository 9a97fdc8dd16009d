//! Asymptotic hypotheses along parametric `(a_n, eps_n)` plans.

use std::io::Write;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::density::ExponentModel;
use crate::error::{Error, Result};
use crate::fmt_f64;
use crate::seeds;
use crate::variational::{closed_form_bounds, BandEvent};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "form", rename_all = "snake_case")]
pub enum AForm {
    /// `a_n = n^(1/alpha)`.
    InversePower { alpha: f64 },
    /// `a_n = n^gamma`.
    PowerOfN { gamma: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "form", rename_all = "snake_case")]
pub enum EpsForm {
    Constant {
        c: f64,
    },
    /// `eps_n = c / log a_n`.
    InvLogA {
        c: f64,
    },
    /// `eps_n = c a_n^rho`.
    PowerOfA {
        c: f64,
        rho: f64,
    },
    /// `eps_n = c exp(-kappa a_n)`.
    ExpDecay {
        c: f64,
        kappa: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SequencePlan {
    pub a: AForm,
    pub eps: EpsForm,
}

impl SequencePlan {
    pub fn a_at(&self, n: u64) -> f64 {
        let nf = n as f64;
        match self.a {
            AForm::InversePower { alpha } => nf.powf(1.0 / alpha),
            AForm::PowerOfN { gamma } => nf.powf(gamma),
        }
    }

    pub fn eps_at(&self, a: f64) -> f64 {
        match self.eps {
            EpsForm::Constant { c } => c,
            EpsForm::InvLogA { c } => c / a.ln(),
            EpsForm::PowerOfA { c, rho } => c * a.powf(rho),
            EpsForm::ExpDecay { c, kappa } => c * (-kappa * a).exp(),
        }
    }
}

/// A named plan with the exponent it is meant for and a default `n` grid.
#[derive(Debug, Clone, PartialEq)]
pub struct PresetPlan {
    pub name: &'static str,
    pub model: ExponentModel,
    pub plan: SequencePlan,
    pub n_grid: Vec<u64>,
}

/// Log-spaced integers from `lo` to `hi` with `per_decade` points per decade.
pub fn log_grid(lo: u64, hi: u64, per_decade: usize) -> Vec<u64> {
    let (l, h) = ((lo as f64).log10(), (hi as f64).log10());
    let steps = ((h - l) * per_decade as f64).round().max(1.0) as usize;
    let mut out: Vec<u64> = (0..=steps)
        .map(|i| 10f64.powf(l + (h - l) * i as f64 / steps as f64).round() as u64)
        .collect();
    out.dedup();
    out
}

/// Presets `example1-case1`, `example1-case2`, `example2`, `weibull-corollary`.
/// `beta` overrides the power exponent and `alpha` the growth `a_n = n^(1/alpha)`.
pub fn preset(name: &str, beta: Option<f64>, alpha: Option<f64>) -> Result<PresetPlan> {
    let alpha = alpha.unwrap_or(0.5);
    let out = match name {
        "example1-case1" => PresetPlan {
            name: "example1-case1",
            model: ExponentModel::power(beta.unwrap_or(1.5))?,
            plan: SequencePlan {
                a: AForm::InversePower { alpha },
                eps: EpsForm::PowerOfA { c: 1.0, rho: 0.1 },
            },
            n_grid: log_grid(10, 10_000, 4),
        },
        "example1-case2" => PresetPlan {
            name: "example1-case2",
            model: ExponentModel::power(beta.unwrap_or(3.0))?,
            plan: SequencePlan {
                a: AForm::InversePower { alpha },
                eps: EpsForm::InvLogA { c: 1.0 },
            },
            n_grid: log_grid(100, 100_000_000, 4),
        },
        "example2" => PresetPlan {
            name: "example2",
            model: ExponentModel::exp_exponent(),
            plan: SequencePlan {
                a: AForm::PowerOfN { gamma: 0.5 },
                eps: EpsForm::ExpDecay {
                    c: 1.0,
                    kappa: 0.125,
                },
            },
            n_grid: log_grid(20, 100_000, 4),
        },
        "weibull-corollary" => PresetPlan {
            name: "weibull-corollary",
            model: ExponentModel::weibull(3.0)?,
            plan: SequencePlan {
                a: AForm::InversePower { alpha },
                eps: EpsForm::InvLogA { c: 1.0 },
            },
            n_grid: log_grid(100, 100_000_000, 4),
        },
        other => {
            return Err(Error::InvalidArgument(format!(
                "unknown plan preset `{other}`"
            )))
        }
    };
    Ok(out)
}

pub const PRESET_NAMES: [&str; 4] = [
    "example1-case1",
    "example1-case2",
    "example2",
    "weibull-corollary",
];

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConditionRow {
    pub n: u64,
    pub a: f64,
    pub eps: f64,
    /// `log g(a) / log n`.
    pub ratio_growth: f64,
    /// `log a / log n`, the literal reading of the first growth condition.
    pub ratio_log_a: f64,
    /// `n log g(a + eps) / H`.
    pub ratio32: f64,
    /// `n G / H`.
    pub ratio33: f64,
    #[serde(rename = "H")]
    pub h: f64,
    #[serde(rename = "G")]
    pub g: f64,
    pub degenerate: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Trend {
    Decreasing,
    Increasing,
    Inconclusive,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TrendTest {
    /// Least-squares slope of log ratio against log n.
    pub slope: f64,
    /// One-sided sign-flip p-value against "no downward drift".
    pub p_decreasing: f64,
    pub p_increasing: f64,
    pub monotone_decreasing: bool,
    pub monotone_increasing: bool,
    pub verdict: Trend,
}

pub const TREND_LEVEL: f64 = 0.01;

/// Trend of a positive series: least-squares slope in log-log coordinates,
/// a sign-flip randomization test on consecutive log differences, and a
/// monotonicity check. Nonpositive or non-finite values are skipped.
pub fn trend_test(ns: &[f64], values: &[f64]) -> TrendTest {
    let pts: Vec<(f64, f64)> = ns
        .iter()
        .zip(values)
        .filter(|(n, v)| v.is_finite() && **v > 0.0 && **n > 0.0)
        .map(|(n, v)| (n.ln(), v.ln()))
        .collect();
    if pts.len() < 3 {
        return TrendTest {
            slope: f64::NAN,
            p_decreasing: 1.0,
            p_increasing: 1.0,
            monotone_decreasing: false,
            monotone_increasing: false,
            verdict: Trend::Inconclusive,
        };
    }
    let m = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / m;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / m;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let slope = sxy / sxx;
    let diffs: Vec<f64> = pts.windows(2).map(|w| w[1].1 - w[0].1).collect();
    let observed: f64 = diffs.iter().sum();
    let (mut below, mut above, mut total) = (0u64, 0u64, 0u64);
    let mut tally = |t: f64| {
        total += 1;
        let tol = 1e-12 * observed.abs().max(1e-300);
        if t <= observed + tol {
            below += 1;
        }
        if t >= observed - tol {
            above += 1;
        }
    };
    if diffs.len() <= 16 {
        for mask in 0u32..(1 << diffs.len()) {
            let t: f64 = diffs
                .iter()
                .enumerate()
                .map(|(i, d)| {
                    if mask >> i & 1 == 1 {
                        -d.abs()
                    } else {
                        d.abs()
                    }
                })
                .sum();
            tally(t);
        }
    } else {
        let mut rng = seeds::rng(0x7e4d);
        for _ in 0..20_000 {
            let t: f64 = diffs
                .iter()
                .map(|d| if rng.gen::<bool>() { -d.abs() } else { d.abs() })
                .sum();
            tally(t);
        }
    }
    let p_decreasing = below as f64 / total as f64;
    let p_increasing = above as f64 / total as f64;
    let monotone_decreasing = diffs.iter().all(|&d| d < 0.0);
    let monotone_increasing = diffs.iter().all(|&d| d > 0.0);
    let verdict = if slope < 0.0 && p_decreasing < TREND_LEVEL && monotone_decreasing {
        Trend::Decreasing
    } else if slope > 0.0 && p_increasing < TREND_LEVEL && monotone_increasing {
        Trend::Increasing
    } else {
        Trend::Inconclusive
    };
    TrendTest {
        slope,
        p_decreasing,
        p_increasing,
        monotone_decreasing,
        monotone_increasing,
        verdict,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConditionReport {
    pub rows: Vec<ConditionRow>,
    pub growth: bool,
    pub c32: TrendTest,
    pub c33: TrendTest,
    pub final_ratio32: f64,
}

impl ConditionReport {
    pub fn c32_trend(&self) -> Trend {
        self.c32.verdict
    }

    pub fn c33_trend(&self) -> Trend {
        self.c33.verdict
    }

    pub const CSV_COLUMNS: [&'static str; 8] = [
        "n",
        "a",
        "eps",
        "ratio_growth",
        "ratio32",
        "ratio33",
        "H",
        "G",
    ];

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(Self::CSV_COLUMNS)
            .map_err(|e| Error::Io(e.to_string()))?;
        for r in &self.rows {
            w.write_record([
                r.n.to_string(),
                fmt_f64(r.a),
                fmt_f64(r.eps),
                fmt_f64(r.ratio_growth),
                fmt_f64(r.ratio32),
                fmt_f64(r.ratio33),
                fmt_f64(r.h),
                fmt_f64(r.g),
            ])
            .map_err(|e| Error::Io(e.to_string()))?;
        }
        w.flush()?;
        Ok(())
    }
}

fn row(g: &ExponentModel, plan: &SequencePlan, n: u64) -> ConditionRow {
    let a = plan.a_at(n);
    let eps = plan.eps_at(a);
    let ln_n = (n as f64).ln();
    let mut r = ConditionRow {
        n,
        a,
        eps,
        ratio_growth: g.ln_g(a) / ln_n,
        ratio_log_a: a.ln() / ln_n,
        ratio32: f64::NAN,
        ratio33: f64::NAN,
        h: f64::NAN,
        g: f64::NAN,
        degenerate: true,
    };
    let Ok(ev) = BandEvent::new(n as usize, a, eps) else {
        return r;
    };
    if ev.check_against(g).is_err() {
        return r;
    }
    let Ok(b) = closed_form_bounds(g, &ev) else {
        return r;
    };
    r.h = b.h;
    r.g = b.g;
    if b.h > 0.0 && b.h.is_finite() {
        let nf = n as f64;
        r.ratio32 = nf * g.ln_g(a + eps) / b.h;
        r.ratio33 = nf * b.g / b.h;
        r.degenerate = false;
    }
    r
}

pub fn evaluate_conditions(
    g: &ExponentModel,
    plan: &SequencePlan,
    n_grid: &[u64],
) -> Result<ConditionReport> {
    let mut grid = n_grid.to_vec();
    grid.sort_unstable();
    grid.dedup();
    if grid.is_empty() {
        return Err(Error::InvalidArgument("empty n grid".into()));
    }
    let rows: Vec<ConditionRow> = grid.par_iter().map(|&n| row(g, plan, n)).collect();
    let degenerate = rows.iter().filter(|r| r.degenerate).count();
    if degenerate * 10 > rows.len() {
        return Err(Error::DegeneratePlan {
            degenerate,
            rows: rows.len(),
        });
    }
    let ns: Vec<f64> = rows.iter().map(|r| r.n as f64).collect();
    let r32: Vec<f64> = rows.iter().map(|r| r.ratio32).collect();
    let r33: Vec<f64> = rows.iter().map(|r| r.ratio33).collect();
    let growth = rows
        .iter()
        .filter(|r| !r.degenerate)
        .all(|r| r.ratio_growth > 0.0);
    let final_ratio32 = rows
        .iter()
        .rev()
        .find(|r| !r.degenerate)
        .map_or(f64::NAN, |r| r.ratio32);
    Ok(ConditionReport {
        c32: trend_test(&ns, &r32),
        c33: trend_test(&ns, &r33),
        rows,
        growth,
        final_ratio32,
    })
}

/// `n log g(a + eps) / H(a, eps)`, or `+inf` where `H` vanishes.
pub fn ratio32(g: &ExponentModel, n: usize, a: f64, eps: f64) -> Result<f64> {
    let ev = BandEvent::new(n, a, eps)?;
    let b = closed_form_bounds(g, &ev)?;
    Ok(if b.h > 0.0 {
        n as f64 * g.ln_g(a + eps) / b.h
    } else {
        f64::INFINITY
    })
}

/// Smallest `eps` in `[1e-8 a, 0.9 a]` with `ratio32 <= target`, by 60 bisection steps.
pub fn admissible_epsilon(g: &ExponentModel, n: usize, a: f64, target: f64) -> Result<f64> {
    if !(target > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "target must be positive, got {target}"
        )));
    }
    let (mut lo, mut hi) = (1e-8 * a, 0.9 * a);
    if ratio32(g, n, a, lo)? <= target {
        return Ok(lo);
    }
    let best = ratio32(g, n, a, hi)?;
    if best > target {
        return Err(Error::NotAchievable { target, best });
    }
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if ratio32(g, n, a, mid)? <= target {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plan_json_round_trip() {
        let json = r#"{"a": {"form": "inverse_power", "alpha": 0.5}, "eps": {"form": "inv_log_a", "c": 1.0}}"#;
        let p: SequencePlan = serde_json::from_str(json).unwrap();
        assert_eq!(p.a, AForm::InversePower { alpha: 0.5 });
        assert_eq!(p.a_at(10), 100.0);
        assert!((p.eps_at(100.0) - 1.0 / 100f64.ln()).abs() < 1e-15);
        let back: SequencePlan = serde_json::from_str(&serde_json::to_string(&p).unwrap()).unwrap();
        assert_eq!(back, p);
    }

    #[test]
    fn example1_case2_decreases() {
        let p = preset("example1-case2", None, None).unwrap();
        let r = evaluate_conditions(&p.model, &p.plan, &p.n_grid).unwrap();
        assert_eq!(r.c32_trend(), Trend::Decreasing, "{:?}", r.c32);
        assert_eq!(r.c33_trend(), Trend::Decreasing, "{:?}", r.c33);
        assert!(r.final_ratio32 < 1e-2, "{}", r.final_ratio32);
        assert!(r.growth);
    }

    #[test]
    fn example1_case1_increases() {
        let p = preset("example1-case1", None, None).unwrap();
        let r = evaluate_conditions(&p.model, &p.plan, &p.n_grid).unwrap();
        assert_eq!(r.c32_trend(), Trend::Increasing, "{:?}", r.c32);
    }

    #[test]
    fn example2_decreases() {
        let p = preset("example2", None, None).unwrap();
        let r = evaluate_conditions(&p.model, &p.plan, &p.n_grid).unwrap();
        assert_eq!(r.c32_trend(), Trend::Decreasing, "{:?}", r.c32);
    }

    #[test]
    fn weibull_corollary_both_ratios_decrease() {
        let p = preset("weibull-corollary", None, None).unwrap();
        let r = evaluate_conditions(&p.model, &p.plan, &p.n_grid).unwrap();
        assert_eq!(r.c32_trend(), Trend::Decreasing);
        assert_eq!(r.c33_trend(), Trend::Decreasing);
    }

    #[test]
    fn subsampling_keeps_rows() {
        let p = preset("example1-case2", None, None).unwrap();
        let full = evaluate_conditions(&p.model, &p.plan, &p.n_grid).unwrap();
        let sub: Vec<u64> = p.n_grid.iter().step_by(3).copied().collect();
        let part = evaluate_conditions(&p.model, &p.plan, &sub).unwrap();
        for r in &part.rows {
            let f = full.rows.iter().find(|x| x.n == r.n).unwrap();
            assert_eq!(f, r);
        }
    }

    #[test]
    fn degenerate_plan_is_rejected() {
        let g = ExponentModel::power(3.0).unwrap();
        let plan = SequencePlan {
            a: AForm::PowerOfN { gamma: 1.0 },
            eps: EpsForm::Constant { c: 1e6 },
        };
        assert!(matches!(
            evaluate_conditions(&g, &plan, &[10, 100, 1000]),
            Err(Error::DegeneratePlan { .. })
        ));
    }

    #[test]
    fn admissible_epsilon_hits_target() {
        let g = ExponentModel::power(3.0).unwrap();
        let e = admissible_epsilon(&g, 1000, 100.0, 0.1).unwrap();
        let r = ratio32(&g, 1000, 100.0, e).unwrap();
        assert!((0.099..=0.101).contains(&r), "{r}");
        let e2 = admissible_epsilon(&g, 1000, 100.0, 0.01).unwrap();
        assert!(e2 >= e);
        let e3 = admissible_epsilon(&g, 1000, 100.0, 1e15).unwrap();
        assert_eq!(e3, 1e-8 * 100.0);
        assert!(matches!(
            admissible_epsilon(&g, 1000, 100.0, 1e-9),
            Err(Error::NotAchievable { .. })
        ));
    }

    #[test]
    fn h_positive_for_strictly_convex() {
        let g = ExponentModel::power(2.5).unwrap();
        for &a in &[1.5, 4.0, 30.0] {
            for &eps in &[1e-3, 0.1, 1.0] {
                let b = closed_form_bounds(&g, &BandEvent::new(5, a, eps).unwrap()).unwrap();
                assert!(b.h > 0.0);
            }
        }
    }

    #[test]
    fn trend_detects_clean_series() {
        let ns: Vec<f64> = (1..=10).map(|i| 10f64.powi(i)).collect();
        let down: Vec<f64> = ns.iter().map(|n| 1.0 / n).collect();
        assert_eq!(trend_test(&ns, &down).verdict, Trend::Decreasing);
        let up: Vec<f64> = ns.iter().map(|n| n.sqrt()).collect();
        assert_eq!(trend_test(&ns, &up).verdict, Trend::Increasing);
        let flat = vec![1.0, 2.0, 1.0, 2.0, 1.0, 2.0, 1.0, 2.0, 1.0, 2.0];
        assert_eq!(trend_test(&ns, &flat).verdict, Trend::Inconclusive);
    }
}
