//! Exponential-tilt importance sampling, exact rejection for `S >= n a`,
//! and a fixed-sum pairwise Gibbs sampler for `S = n a`.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::density::PerturbedDensity;
use crate::error::{Error, Result};
use crate::quadrature::{golden_max, linspace};
use crate::ratefn::{tilt_for_mean, tilted_moments, tilted_table};
use crate::seeds;
use crate::table::{CellMass, InverseCdfTable};
use crate::variational::BandEvent;

/// Cells in the tilted proposal table.
const PROPOSAL_CELLS: usize = 4096;
/// Cells in each pair-conditional table of the Gibbs sampler.
const PAIR_CELLS: usize = 512;
/// Log-density drop that delimits the pair-conditional table.
const PAIR_DROP: f64 = 30.0;
/// Independent Gibbs chains per localization estimate.
const GIBBS_CHAINS: u64 = 4;
pub const DEFAULT_BURN_IN: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    TiltedIs,
    FixedSumGibbs,
    Rejection,
}

impl Method {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "tilted_is" | "is" | "tilted" => Ok(Method::TiltedIs),
            "gibbs" | "fixed_sum_gibbs" => Ok(Method::FixedSumGibbs),
            "rejection" => Ok(Method::Rejection),
            other => Err(Error::InvalidArgument(format!("unknown method `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Constraint {
    SumAtLeast(f64),
    SumEquals(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConditionedSample {
    pub values: Vec<f64>,
    pub log_weight: f64,
    pub method: Method,
    pub constraint: Constraint,
}

impl ConditionedSample {
    pub fn sum(&self) -> f64 {
        self.values.iter().sum()
    }

    /// Checks the constraint and positivity.
    pub fn is_valid(&self) -> bool {
        let s = self.sum();
        let positive = self.values.iter().all(|&x| x > 0.0);
        positive
            && match self.constraint {
                Constraint::SumAtLeast(t) => s >= t,
                Constraint::SumEquals(t) => (s - t).abs() <= 1e-9 * t.abs(),
            }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LocalizationEstimate {
    pub p_hat: f64,
    pub std_err: f64,
    pub n_eff: f64,
    pub replications: usize,
}

impl LocalizationEstimate {
    /// Binomial proportion of `hits` among `total` independent trials.
    pub fn binomial(hits: usize, total: usize) -> Self {
        let p = hits as f64 / total.max(1) as f64;
        LocalizationEstimate {
            p_hat: p,
            std_err: (p * (1.0 - p) / total.max(1) as f64).sqrt(),
            n_eff: total as f64,
            replications: total,
        }
    }
}

/// The tilted law `e^{tx} p(x) / E e^{tX}` with its table and `Lambda(t)`.
#[derive(Debug, Clone)]
pub struct TiltedProposal {
    pub t: f64,
    pub log_mgf: f64,
    table: InverseCdfTable,
}

impl TiltedProposal {
    /// Proposal centred at `a` (untilted when `a <= EX`).
    pub fn for_mean(model: &PerturbedDensity, a: f64) -> Result<Self> {
        let t = if a <= model.mean() {
            0.0
        } else {
            tilt_for_mean(model, a)?
        };
        Self::with_tilt(model, t)
    }

    pub fn with_tilt(model: &PerturbedDensity, t: f64) -> Result<Self> {
        let log_mgf = if t == 0.0 {
            0.0
        } else {
            tilted_moments(model, t)?.log_mgf
        };
        Ok(TiltedProposal {
            t,
            log_mgf,
            table: tilted_table(model, t, PROPOSAL_CELLS)?,
        })
    }

    pub fn draw_one<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        self.table.sample(rng.gen())
    }

    /// `n` draws and the log importance weight `n Lambda(t) - t sum x`.
    pub fn draw<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> (Vec<f64>, f64) {
        let xs: Vec<f64> = (0..n).map(|_| self.draw_one(rng)).collect();
        let s: f64 = xs.iter().sum();
        (xs, n as f64 * self.log_mgf - self.t * s)
    }
}

/// A weighted-mean estimate kept in log scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LogEstimate {
    pub log_p: f64,
    /// Standard error relative to the estimate.
    pub rel_err: f64,
}

impl LogEstimate {
    pub fn p(&self) -> f64 {
        self.log_p.exp()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ImportanceResult {
    pub t: f64,
    pub log_mgf: f64,
    pub p_c: LogEstimate,
    pub p_i_and_c: LogEstimate,
    pub localization: LocalizationEstimate,
}

struct Draw {
    log_w: f64,
    in_c: bool,
    in_ic: bool,
}

pub fn importance_estimate(
    model: &PerturbedDensity,
    n: usize,
    a: f64,
    eps: f64,
    trials: usize,
    seed: u64,
) -> Result<ImportanceResult> {
    if trials < 1000 {
        return Err(Error::InvalidArgument(format!(
            "importance sampling needs >= 1000 trials, got {trials}"
        )));
    }
    let band = BandEvent { n, a, eps };
    let proposal = TiltedProposal::for_mean(model, a)?;
    let level = n as f64 * a;
    let draws: Vec<Draw> = (0..trials as u64)
        .into_par_iter()
        .map(|r| {
            let mut rng = seeds::stream_rng(seed, r);
            let (xs, log_w) = proposal.draw(n, &mut rng);
            let in_c = xs.iter().sum::<f64>() >= level;
            Draw {
                log_w,
                in_c,
                in_ic: in_c && xs.iter().all(|&x| band.in_band(x)),
            }
        })
        .collect();
    let shift = draws
        .iter()
        .filter(|d| d.in_c)
        .map(|d| d.log_w)
        .fold(f64::NEG_INFINITY, f64::max);
    if !shift.is_finite() {
        return Err(Error::DegenerateWeights { n_eff: 0.0 });
    }
    // sums in draw order keep the result independent of the thread count
    let (mut s_c, mut s_c2, mut s_ic, mut s_ic2, mut s_dev2) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for d in &draws {
        let w = (d.log_w - shift).exp();
        if d.in_c {
            s_c += w;
            s_c2 += w * w;
        }
        if d.in_ic {
            s_ic += w;
            s_ic2 += w * w;
        }
    }
    let ratio = s_ic / s_c;
    for d in draws.iter().filter(|d| d.in_c) {
        let w = (d.log_w - shift).exp();
        let dev = if d.in_ic { 1.0 - ratio } else { -ratio };
        s_dev2 += (w * dev).powi(2);
    }
    let n_eff = s_c * s_c / s_c2;
    if n_eff < 30.0 {
        return Err(Error::DegenerateWeights { n_eff });
    }
    let r = trials as f64;
    let mean_rel = |s: f64, s2: f64| {
        let m = s / r;
        let var = (s2 / r - m * m).max(0.0);
        (var / r).sqrt() / m
    };
    Ok(ImportanceResult {
        t: proposal.t,
        log_mgf: proposal.log_mgf,
        p_c: LogEstimate {
            log_p: shift + (s_c / r).ln(),
            rel_err: mean_rel(s_c, s_c2),
        },
        p_i_and_c: LogEstimate {
            log_p: shift + (s_ic / r).ln(),
            rel_err: if s_ic > 0.0 {
                mean_rel(s_ic, s_ic2)
            } else {
                f64::INFINITY
            },
        },
        localization: LocalizationEstimate {
            p_hat: ratio,
            std_err: s_dev2.sqrt() / s_c,
            n_eff,
            replications: trials,
        },
    })
}

/// Inverse-CDF table for `u` given `x_i + x_j = s`, density `∝ p(u) p(s - u)`.
pub fn pair_table(model: &PerturbedDensity, s: f64) -> InverseCdfTable {
    let psi = |u: f64| -(model.potential(u) + model.potential(s - u));
    let grid = linspace(0.0, s, 256);
    let vals: Vec<f64> = grid.iter().map(|&u| psi(u)).collect();
    let (mut bi, mut bv) = (0, f64::NEG_INFINITY);
    for (i, &v) in vals.iter().enumerate() {
        if v > bv {
            bi = i;
            bv = v;
        }
    }
    let (_, refined) = golden_max(
        psi,
        grid[bi.saturating_sub(1)],
        grid[(bi + 1).min(grid.len() - 1)],
        1e-12 * s,
    );
    let top = bv.max(refined);
    let first = vals.iter().position(|&v| v > top - PAIR_DROP).unwrap_or(0);
    let last = vals
        .iter()
        .rposition(|&v| v > top - PAIR_DROP)
        .unwrap_or(grid.len() - 1);
    let lo = grid[first.saturating_sub(1)];
    let hi = grid[(last + 1).min(grid.len() - 1)];
    // narrow the ends to where the drop is actually reached
    let edge = |inside: f64, outside: f64| {
        let (mut a, mut b) = (inside, outside);
        for _ in 0..60 {
            let m = 0.5 * (a + b);
            if psi(m) > top - PAIR_DROP {
                a = m;
            } else {
                b = m;
            }
        }
        b
    };
    let lo = if first > 0 { edge(grid[first], lo) } else { lo };
    let hi = if last + 1 < grid.len() {
        edge(grid[last], hi)
    } else {
        hi
    };
    InverseCdfTable::new(|u| psi(u) - top, lo, hi, PAIR_CELLS, CellMass::LogLinear)
}

/// One pairwise update on coordinates `i != j`.
fn pair_update(model: &PerturbedDensity, x: &mut [f64], i: usize, j: usize, rng: &mut ChaCha8Rng) {
    let s = x[i] + x[j];
    let table = pair_table(model, s);
    let mut u = table.sample(rng.gen());
    // keep both coordinates strictly positive
    let tiny = 1e-300f64.max(s * 1e-15);
    u = u.clamp(tiny, s - tiny);
    x[i] = u;
    x[j] = s - u;
}

/// A chain targeting the law of `(X_1..X_n)` given `sum X = s_total`.
pub struct GibbsChain<'a> {
    model: &'a PerturbedDensity,
    state: Vec<f64>,
    target: f64,
    rng: ChaCha8Rng,
}

impl<'a> GibbsChain<'a> {
    pub fn new(model: &'a PerturbedDensity, n: usize, s_total: f64, seed: u64) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidArgument(format!(
                "Gibbs sampler needs n >= 2, got {n}"
            )));
        }
        if !(s_total > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "sum must be positive, got {s_total}"
            )));
        }
        Ok(GibbsChain {
            model,
            state: vec![s_total / n as f64; n],
            target: s_total,
            rng: seeds::rng(seed),
        })
    }

    /// `n` random-pair updates, then a renormalization of the rounding drift.
    pub fn sweep(&mut self) {
        let n = self.state.len();
        for _ in 0..n {
            let i = self.rng.gen_range(0..n);
            let mut j = self.rng.gen_range(0..n - 1);
            if j >= i {
                j += 1;
            }
            pair_update(self.model, &mut self.state, i, j, &mut self.rng);
        }
        let drift = self.target - self.state.iter().sum::<f64>();
        if drift != 0.0 {
            let k = self
                .state
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.total_cmp(b.1))
                .map(|(k, _)| k)
                .unwrap();
            self.state[k] += drift;
        }
    }

    pub fn state(&self) -> &[f64] {
        &self.state
    }

    pub fn sample(&self) -> ConditionedSample {
        ConditionedSample {
            values: self.state.clone(),
            log_weight: 0.0,
            method: Method::FixedSumGibbs,
            constraint: Constraint::SumEquals(self.target),
        }
    }
}

pub fn gibbs_fixed_sum(
    model: &PerturbedDensity,
    n: usize,
    s_total: f64,
    sweeps: usize,
    burn_in: usize,
    seed: u64,
) -> Result<Vec<ConditionedSample>> {
    let mut chain = GibbsChain::new(model, n, s_total, seed)?;
    for _ in 0..burn_in {
        chain.sweep();
    }
    let mut out = Vec::with_capacity(sweeps);
    for _ in 0..sweeps {
        chain.sweep();
        out.push(chain.sample());
    }
    Ok(out)
}

/// Exact draw from the law given `sum X >= n a`: tilted proposals accepted
/// with probability `exp(-t (sum - n a))`. `None` when the budget runs out.
pub fn rejection_sum_at_least(
    proposal: &TiltedProposal,
    n: usize,
    a: f64,
    rng: &mut ChaCha8Rng,
    max_attempts: usize,
) -> Option<ConditionedSample> {
    let level = n as f64 * a;
    for _ in 0..max_attempts {
        let (xs, _) = proposal.draw(n, rng);
        let s: f64 = xs.iter().sum();
        if s < level {
            continue;
        }
        let accept = (-proposal.t * (s - level)).exp();
        if rng.gen::<f64>() < accept {
            return Some(ConditionedSample {
                values: xs,
                log_weight: 0.0,
                method: Method::Rejection,
                constraint: Constraint::SumAtLeast(level),
            });
        }
    }
    None
}

/// Mean and batch-means standard error of an indicator series split across chains.
fn batch_means(series: &[Vec<bool>]) -> (f64, f64, usize) {
    let total: usize = series.iter().map(Vec::len).sum();
    let hits: usize = series
        .iter()
        .map(|s| s.iter().filter(|&&b| b).count())
        .sum();
    let p = hits as f64 / total.max(1) as f64;
    let mut batch_vals = Vec::new();
    for s in series {
        let b = ((s.len() as f64).sqrt().floor() as usize).max(1);
        for chunk in s.chunks(b).filter(|c| c.len() == b) {
            batch_vals.push(chunk.iter().filter(|&&v| v).count() as f64 / b as f64);
        }
    }
    let k = batch_vals.len();
    if k < 2 {
        return (p, f64::NAN, total);
    }
    let mean = batch_vals.iter().sum::<f64>() / k as f64;
    let var = batch_vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (k - 1) as f64;
    (p, (var / k as f64).sqrt(), total)
}

/// `P(I | C)` by importance sampling (`S >= n a`) or by the fixed-sum chain
/// (`S = n a`). `budget` counts trials for the former and post-burn-in sweeps
/// (split over four chains) for the latter.
pub fn estimate_localization(
    model: &PerturbedDensity,
    n: usize,
    a: f64,
    eps: f64,
    method: Method,
    budget: usize,
    seed: u64,
) -> Result<LocalizationEstimate> {
    match method {
        Method::TiltedIs => Ok(importance_estimate(model, n, a, eps, budget, seed)?.localization),
        Method::FixedSumGibbs => {
            let band = BandEvent { n, a, eps };
            let per_chain = (budget as u64).div_ceil(GIBBS_CHAINS) as usize;
            let series: Vec<Vec<bool>> = (0..GIBBS_CHAINS)
                .into_par_iter()
                .map(|c| -> Result<Vec<bool>> {
                    let mut chain =
                        GibbsChain::new(model, n, n as f64 * a, seeds::stream_seed(seed, c))?;
                    for _ in 0..DEFAULT_BURN_IN {
                        chain.sweep();
                    }
                    Ok((0..per_chain)
                        .map(|_| {
                            chain.sweep();
                            chain.state().iter().all(|&x| band.in_band(x))
                        })
                        .collect())
                })
                .collect::<Result<_>>()?;
            let (p, se, total) = batch_means(&series);
            let iid = (p * (1.0 - p) / total as f64).sqrt();
            let std_err = if se.is_finite() { se.max(iid) } else { iid };
            let n_eff = if std_err > 0.0 {
                (p * (1.0 - p) / (std_err * std_err)).min(total as f64)
            } else {
                total as f64
            };
            Ok(LocalizationEstimate {
                p_hat: p,
                std_err,
                n_eff,
                replications: total,
            })
        }
        Method::Rejection => {
            let band = BandEvent { n, a, eps };
            let proposal = TiltedProposal::for_mean(model, a)?;
            let hits: Vec<bool> = (0..budget as u64)
                .into_par_iter()
                .map(|r| -> Result<bool> {
                    let mut rng = seeds::stream_rng(seed, r);
                    let s = rejection_sum_at_least(&proposal, n, a, &mut rng, 100_000)
                        .ok_or_else(|| Error::BudgetExceeded(format!("replication {r}")))?;
                    Ok(s.values.iter().all(|&x| band.in_band(x)))
                })
                .collect::<Result<_>>()?;
            Ok(LocalizationEstimate::binomial(
                hits.iter().filter(|&&h| h).count(),
                budget,
            ))
        }
    }
}

/// Shuffles the coordinates uniformly.
pub fn permute(values: &mut [f64], rng: &mut ChaCha8Rng) {
    values.shuffle(rng);
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::density::ExponentModel;

    fn sq() -> PerturbedDensity {
        PerturbedDensity::pure(ExponentModel::power(2.0).unwrap()).unwrap()
    }

    #[test]
    fn weight_identity_is_exact() {
        let m = sq();
        let p = TiltedProposal::for_mean(&m, 3.0).unwrap();
        let mut rng = seeds::rng(4);
        for _ in 0..50 {
            let (xs, lw) = p.draw(3, &mut rng);
            let s: f64 = xs.iter().sum();
            assert_eq!(lw + p.t * s - 3.0 * p.log_mgf, 0.0);
        }
    }

    #[test]
    fn importance_is_deterministic() {
        let m = sq();
        let a = importance_estimate(&m, 2, 3.0, 0.5, 2000, 9).unwrap();
        let b = importance_estimate(&m, 2, 3.0, 0.5, 2000, 9).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn wider_band_localizes_more() {
        let m = sq();
        let narrow = importance_estimate(&m, 2, 3.0, 0.5, 20_000, 1).unwrap();
        let wide = importance_estimate(&m, 2, 3.0, 2.99, 20_000, 1).unwrap();
        assert!(wide.localization.p_hat >= narrow.localization.p_hat);
    }

    #[test]
    fn untilted_when_constraint_is_typical() {
        let m = sq();
        let p = TiltedProposal::for_mean(&m, 0.1).unwrap();
        assert_eq!(p.t, 0.0);
        let r = importance_estimate(&m, 4, 0.1, 0.05, 5000, 3).unwrap();
        // every weight is one, so P(C) is a plain frequency
        assert!(r.p_c.p() <= 1.0 && r.p_c.p() > 0.9);
    }

    #[test]
    fn gibbs_preserves_sum() {
        let m = PerturbedDensity::pure(ExponentModel::weibull(3.0).unwrap()).unwrap();
        let out = gibbs_fixed_sum(&m, 6, 12.0, 200, 10, 5).unwrap();
        assert_eq!(out.len(), 200);
        for s in &out {
            assert!(s.is_valid(), "{:?}", s.values);
        }
    }

    #[test]
    fn pair_table_matches_conditional_density() {
        let m = sq();
        let s = 6.0;
        let table = pair_table(&m, s);
        // analytic conditional: u given u + v = s is normal(s/2, 1/4) restricted to (0, s)
        let sd = 0.5f64;
        let norm = 1.0 / (sd * (2.0 * std::f64::consts::PI).sqrt());
        for i in 1..40 {
            let u = 3.0 + (i as f64 - 20.0) * 0.05;
            let exact = norm * (-(u - 3.0).powi(2) / (2.0 * sd * sd)).exp();
            assert!((table.density(u) - exact).abs() < 1e-4, "u={u}");
        }
    }

    #[test]
    fn rejection_respects_constraint() {
        let m = sq();
        let p = TiltedProposal::for_mean(&m, 2.0).unwrap();
        let mut rng = seeds::rng(1);
        for _ in 0..20 {
            let s = rejection_sum_at_least(&p, 5, 2.0, &mut rng, 10_000).unwrap();
            assert!(s.is_valid());
        }
    }

    #[test]
    fn binomial_estimate() {
        let e = LocalizationEstimate::binomial(30, 40);
        assert_eq!(e.p_hat, 0.75);
        assert!((e.std_err - (0.75f64 * 0.25 / 40.0).sqrt()).abs() < 1e-15);
    }
}
