//! Conditioned random-walk trajectories and sliding-window slopes.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::density::PerturbedDensity;
use crate::error::{Error, Result};
use crate::fmt_f64;
use crate::sampler::{
    permute, rejection_sum_at_least, GibbsChain, LocalizationEstimate, TiltedProposal,
    DEFAULT_BURN_IN,
};
use crate::seeds;

/// Rejection attempts per path before falling back to the fixed-sum chain.
pub const REJECTION_BUDGET: usize = 100_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Conditioning {
    /// `S_n >= n a`.
    EndValueAtLeast,
    /// `S_n = n a`.
    EndValueEquals,
    /// Plain i.i.d. increments, the baseline.
    Unconditioned,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Trajectory {
    pub increments: Vec<f64>,
    /// `S_0 = 0, S_1, ..., S_n`.
    pub partial_sums: Vec<f64>,
    pub conditioning: Conditioning,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl Trajectory {
    pub fn from_increments(increments: Vec<f64>, conditioning: Conditioning) -> Self {
        let mut partial_sums = Vec::with_capacity(increments.len() + 1);
        let mut s = 0.0;
        partial_sums.push(s);
        for &x in &increments {
            s += x;
            partial_sums.push(s);
        }
        Trajectory {
            increments,
            partial_sums,
            conditioning,
            note: None,
        }
    }

    pub fn len(&self) -> usize {
        self.increments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.increments.is_empty()
    }

    pub fn end_value(&self) -> f64 {
        *self.partial_sums.last().unwrap()
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["j", "increment", "partial_sum"])
            .map_err(|e| Error::Io(e.to_string()))?;
        for (j, x) in self.increments.iter().enumerate() {
            w.write_record([
                (j + 1).to_string(),
                fmt_f64(*x),
                fmt_f64(self.partial_sums[j + 1]),
            ])
            .map_err(|e| Error::Io(e.to_string()))?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Draws conditioned increment vectors for one `(model, a)` pair, reusing
/// the tilted proposal across paths.
pub struct PathSimulator<'a> {
    model: &'a PerturbedDensity,
    a: f64,
    proposal: TiltedProposal,
}

impl<'a> PathSimulator<'a> {
    pub fn new(model: &'a PerturbedDensity, a: f64) -> Result<Self> {
        Ok(PathSimulator {
            model,
            a,
            proposal: TiltedProposal::for_mean(model, a)?,
        })
    }

    fn fixed_sum(&self, n: usize, seed: u64) -> Result<Vec<f64>> {
        let mut chain = GibbsChain::new(self.model, n, n as f64 * self.a, seed)?;
        for _ in 0..DEFAULT_BURN_IN {
            chain.sweep();
        }
        Ok(chain.state().to_vec())
    }

    pub fn simulate(&self, n: usize, conditioning: Conditioning, seed: u64) -> Result<Trajectory> {
        if n == 0 {
            return Err(Error::InvalidArgument(
                "path length must be positive".into(),
            ));
        }
        let mut rng = seeds::rng(seed);
        let mut note = None;
        let mut increments = match conditioning {
            Conditioning::Unconditioned => (0..n).map(|_| self.model.draw(&mut rng)).collect(),
            Conditioning::EndValueEquals => self.fixed_sum(n, seed)?,
            Conditioning::EndValueAtLeast => {
                match rejection_sum_at_least(&self.proposal, n, self.a, &mut rng, REJECTION_BUDGET)
                {
                    Some(s) => s.values,
                    None => {
                        note = Some(format!(
                            "rejection budget of {REJECTION_BUDGET} exceeded; fixed-sum chain used"
                        ));
                        self.fixed_sum(n, seed)?
                    }
                }
            }
        };
        permute(&mut increments, &mut rng);
        let mut t = Trajectory::from_increments(increments, conditioning);
        t.note = note;
        Ok(t)
    }
}

pub fn simulate_conditioned_path(
    model: &PerturbedDensity,
    n: usize,
    a: f64,
    conditioning: Conditioning,
    seed: u64,
) -> Result<Trajectory> {
    PathSimulator::new(model, a)?.simulate(n, conditioning, seed)
}

/// `Delta_{j,k} = (S_{j+k} - S_j) / k` for `j = 0..=n-k`.
pub fn sliding_slopes(traj: &Trajectory, k: usize) -> Result<Vec<f64>> {
    let n = traj.len();
    if k == 0 || k > n {
        return Err(Error::BadWindow { k, n });
    }
    let kf = k as f64;
    let s = &traj.partial_sums;
    Ok((0..=n - k).map(|j| (s[j + k] - s[j]) / kf).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SegmentReport {
    pub k: usize,
    pub alpha: f64,
    #[serde(skip)]
    pub slopes: Vec<f64>,
    pub argmax_j: usize,
    pub max_slope: f64,
    pub a_k_event: bool,
}

impl SegmentReport {
    pub fn write_slopes_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["j", "delta"])
            .map_err(|e| Error::Io(e.to_string()))?;
        for (j, d) in self.slopes.iter().enumerate() {
            w.write_record([j.to_string(), fmt_f64(*d)])
                .map_err(|e| Error::Io(e.to_string()))?;
        }
        w.flush()?;
        Ok(())
    }
}

pub fn detect_segments(traj: &Trajectory, k: usize, alpha: f64) -> Result<SegmentReport> {
    let slopes = sliding_slopes(traj, k)?;
    let (mut argmax_j, mut max_slope) = (0, f64::NEG_INFINITY);
    for (j, &d) in slopes.iter().enumerate() {
        if d > max_slope {
            argmax_j = j;
            max_slope = d;
        }
    }
    Ok(SegmentReport {
        k,
        alpha,
        slopes,
        argmax_j,
        max_slope,
        a_k_event: max_slope > alpha,
    })
}

/// `floor(5 log n)`, the default window.
pub fn default_window(n: usize) -> usize {
    ((5.0 * (n as f64).ln()).floor() as usize).clamp(1, n.max(1))
}

/// Frequency of `A_k` over paths with the given conditioning.
#[allow(clippy::too_many_arguments)]
pub fn estimate_p_ak_with(
    model: &PerturbedDensity,
    n: usize,
    a: f64,
    k: usize,
    alpha: f64,
    replications: usize,
    seed: u64,
    conditioning: Conditioning,
) -> Result<LocalizationEstimate> {
    if k == 0 || k > n {
        return Err(Error::BadWindow { k, n });
    }
    let sim = PathSimulator::new(model, a)?;
    let hits: Vec<bool> = (0..replications as u64)
        .into_par_iter()
        .map(|r| -> Result<bool> {
            let traj = sim.simulate(n, conditioning, seeds::stream_seed(seed, r))?;
            Ok(detect_segments(&traj, k, alpha)?.a_k_event)
        })
        .collect::<Result<_>>()?;
    Ok(LocalizationEstimate::binomial(
        hits.iter().filter(|&&h| h).count(),
        replications,
    ))
}

/// `P(A_k | S_n >= n a)` over conditioned paths.
pub fn estimate_p_ak(
    model: &PerturbedDensity,
    n: usize,
    a: f64,
    k: usize,
    alpha: f64,
    replications: usize,
    seed: u64,
) -> Result<LocalizationEstimate> {
    estimate_p_ak_with(
        model,
        n,
        a,
        k,
        alpha,
        replications,
        seed,
        Conditioning::EndValueAtLeast,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::density::ExponentModel;

    fn weibull() -> PerturbedDensity {
        PerturbedDensity::pure(ExponentModel::weibull(3.0).unwrap()).unwrap()
    }

    #[test]
    fn constant_increments_have_constant_slopes() {
        let t = Trajectory::from_increments(vec![0.75; 40], Conditioning::Unconditioned);
        for k in [1, 5, 40] {
            for d in sliding_slopes(&t, k).unwrap() {
                assert!((d - 0.75).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn full_window_is_sample_mean() {
        let t = Trajectory::from_increments(vec![1.0, 2.0, 4.5], Conditioning::Unconditioned);
        assert_eq!(sliding_slopes(&t, 3).unwrap(), vec![7.5 / 3.0]);
        assert!(matches!(
            sliding_slopes(&t, 0),
            Err(Error::BadWindow { .. })
        ));
        assert!(matches!(
            sliding_slopes(&t, 4),
            Err(Error::BadWindow { .. })
        ));
    }

    #[test]
    fn slopes_match_naive_windows() {
        let m = weibull();
        let t = Trajectory::from_increments(
            m.sample_unconditional(300, 8),
            Conditioning::Unconditioned,
        );
        for k in [1, 7, 30] {
            let fast = sliding_slopes(&t, k).unwrap();
            assert_eq!(fast.len(), 300 - k + 1);
            for (j, d) in fast.iter().enumerate() {
                let naive: f64 = t.increments[j..j + k].iter().sum::<f64>() / k as f64;
                assert!((d - naive).abs() < 1e-12);
                let back = k as f64 * d + t.partial_sums[j];
                assert!(
                    (back - t.partial_sums[j + k]).abs()
                        <= 4.0 * f64::EPSILON * t.partial_sums[j + k]
                );
            }
        }
    }

    #[test]
    fn partial_sums_round_trip() {
        let m = weibull();
        let t = simulate_conditioned_path(&m, 100, 1.5, Conditioning::EndValueAtLeast, 3).unwrap();
        for j in 0..100 {
            let x = t.partial_sums[j + 1] - t.partial_sums[j];
            assert!((x - t.increments[j]).abs() <= 4.0 * f64::EPSILON * t.partial_sums[j + 1]);
        }
        assert!(t.end_value() >= 150.0);
    }

    #[test]
    fn detection_thresholds() {
        let t = Trajectory::from_increments(
            vec![1.0, 3.0, 3.0, 1.0, 3.0, 3.0],
            Conditioning::Unconditioned,
        );
        let r = detect_segments(&t, 2, 0.5).unwrap();
        assert!(r.a_k_event);
        assert_eq!(r.argmax_j, 1);
        assert_eq!(r.max_slope, 3.0);
        let r = detect_segments(&t, 2, 3.0).unwrap();
        assert!(!r.a_k_event);
    }

    #[test]
    fn paths_are_deterministic() {
        let m = weibull();
        let a = simulate_conditioned_path(&m, 50, 1.5, Conditioning::EndValueAtLeast, 77).unwrap();
        let b = simulate_conditioned_path(&m, 50, 1.5, Conditioning::EndValueAtLeast, 77).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn full_window_event_is_certain_below_a() {
        let m = weibull();
        let e = estimate_p_ak(&m, 40, 1.4, 40, 1.39, 20, 5).unwrap();
        assert_eq!(e.p_hat, 1.0);
        let e = estimate_p_ak(&m, 40, 1.4, 5, 0.0, 20, 5).unwrap();
        assert_eq!(e.p_hat, 1.0);
    }
}
