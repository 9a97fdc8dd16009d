//! The acceptance suite: eleven criteria, each a deterministic sub-run with
//! a pass/fail verdict and a JSON record of what was measured.

use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use stretchwalk_core::conditions::{evaluate_conditions, preset, Trend};
use stretchwalk_core::density::{preset_models, preset_perturbed_models};
use stretchwalk_core::oracle;
use stretchwalk_core::paths::{default_window, estimate_p_ak_with, Conditioning};
use stretchwalk_core::ratefn::{cramer_rate, tail_equivalence, CramerRate};
use stretchwalk_core::sampler::{estimate_localization, importance_estimate, Method};
use stretchwalk_core::seeds::stream_seed;
use stretchwalk_core::variational::{
    brute_force_infimum, closed_form_bounds, convex_minorant_for, log_prob_c_lower,
    log_prob_icc_upper, minimizer_profile, BandEvent, Region,
};
use stretchwalk_core::{fmt_f64, ExponentModel, Perturbation, PerturbedDensity, Result};

pub const DEFAULT_SEED: u64 = 20_240_917;

#[derive(Debug, Clone, Serialize)]
pub struct Outcome {
    pub id: u32,
    pub name: &'static str,
    pub passed: bool,
    pub summary: String,
    pub seconds: f64,
    pub data: Value,
}

impl Outcome {
    pub fn line(&self) -> String {
        format!(
            "criterion {:>2} {:<28} {}  {} ({:.1}s)",
            self.id,
            self.name,
            if self.passed { "PASS" } else { "FAIL" },
            self.summary,
            self.seconds
        )
    }
}

struct Verdict {
    passed: bool,
    summary: String,
    data: Value,
}

pub const NAMES: [&str; 11] = [
    "lemma oracle equivalence",
    "profile monotonicity",
    "bound sandwich",
    "convex minorant",
    "rate function",
    "tail equivalence",
    "extended ldp",
    "localization trend",
    "condition checker",
    "oblique segments",
    "determinism",
];

/// Runtime ceilings in seconds, where the criterion has one.
fn time_limit(id: u32) -> Option<f64> {
    match id {
        1 => Some(120.0),
        7 => Some(60.0),
        10 => Some(300.0),
        _ => None,
    }
}

fn exponents() -> Vec<(&'static str, ExponentModel)> {
    vec![
        ("x^2", ExponentModel::power(2.0).unwrap()),
        ("x^3", ExponentModel::power(3.0).unwrap()),
        ("e^x", ExponentModel::exp_exponent()),
        ("x^3-2log x", ExponentModel::weibull(3.0).unwrap()),
    ]
}

fn lemma_grid() -> Vec<(usize, f64, f64)> {
    let mut out = Vec::new();
    for n in [2usize, 3, 4] {
        for a in [2.0, 3.0, 5.0] {
            for f in [0.2, 0.5] {
                out.push((n, a, f * a));
            }
        }
    }
    out
}

fn c1() -> Result<Verdict> {
    let mut cases = Vec::new();
    for (label, g) in exponents() {
        for (n, a, eps) in lemma_grid() {
            cases.push((label, g.clone(), n, a, eps));
        }
    }
    let rows: Vec<Value> = cases
        .par_iter()
        .map(|(label, g, n, a, eps)| -> Result<Value> {
            let ev = BandEvent::new(*n, *a, *eps)?;
            let closed = closed_form_bounds(g, &ev)?.i_icc;
            let model = PerturbedDensity::pure(g.clone())?;
            let brute = brute_force_infimum(&model, &ev, Region::IccC)?;
            let rel = (closed - brute).abs() / closed.abs();
            Ok(json!({"g": label, "n": n, "a": a, "eps": eps,
                "closed_form": fmt_f64(closed), "brute_force": fmt_f64(brute), "rel": fmt_f64(rel),
                "ok": rel <= 1e-4}))
        })
        .collect::<Result<_>>()?;
    let worst = rows
        .iter()
        .map(|r| r["rel"].as_str().unwrap().parse::<f64>().unwrap())
        .fold(0.0, f64::max);
    let passed = rows.iter().all(|r| r["ok"] == json!(true));
    Ok(Verdict {
        passed,
        summary: format!("{} cases, worst relative gap {worst:.2e}", rows.len()),
        data: json!({"cases": rows}),
    })
}

fn c2() -> Result<Verdict> {
    let mut bad = Vec::new();
    let mut count = 0;
    for (label, g) in exponents() {
        for (n, a, eps) in lemma_grid() {
            let ev = BandEvent::new(n, a, eps)?;
            let f1 = closed_form_bounds(&g, &ev)?.f_g1;
            // k beyond the support of the profile (a - k eps/(n-k) <= 0) is infeasible
            let vals: Vec<f64> = (1..n)
                .take_while(|&k| a - k as f64 * eps / (n - k) as f64 > 0.0)
                .map(|k| minimizer_profile(&g, &ev, k))
                .collect::<Result<_>>()?;
            count += 1;
            let mono = vals.windows(2).all(|w| w[1] >= w[0]);
            if !mono || vals[0] != f1 {
                bad.push(json!({"g": label, "n": n, "a": a, "eps": eps}));
            }
        }
    }
    Ok(Verdict {
        passed: bad.is_empty(),
        summary: format!("{count} profiles, {} violations", bad.len()),
        data: json!({"profiles": count, "violations": bad}),
    })
}

fn c3() -> Result<Verdict> {
    let model = PerturbedDensity::pure(ExponentModel::power(2.0)?)?;
    let mut rows = Vec::new();
    let mut passed = true;
    for n in [2usize, 3] {
        for a in [2.0, 3.0] {
            let ev = BandEvent::new(n, a, 0.5)?;
            let c_true = oracle::log_prob_c(&model, n, a)?;
            let icc_true = oracle::log_prob_icc(&model, &ev)?;
            let lower = log_prob_c_lower(&model, &ev)?;
            let upper = log_prob_icc_upper(&model, &ev)?;
            let s1 = c_true - lower;
            let s2 = upper - icc_true;
            let ok = s1.is_finite() && s2.is_finite() && s1 > 0.0 && s2 > 0.0;
            passed &= ok;
            rows.push(
                json!({"n": n, "a": a, "log_p_c": fmt_f64(c_true), "lower": fmt_f64(lower),
                "log_p_icc": fmt_f64(icc_true), "upper": fmt_f64(upper),
                "slack_c": fmt_f64(s1), "slack_icc": fmt_f64(s2), "ok": ok}),
            );
        }
    }
    Ok(Verdict {
        passed,
        summary: "4 (n, a) cases against 2-D/3-D quadrature".into(),
        data: json!({"cases": rows}),
    })
}

fn c4() -> Result<Verdict> {
    let mut rows = Vec::new();
    let mut passed = true;
    for model in preset_perturbed_models() {
        let h = convex_minorant_for(&model)?;
        let chk = h.check(|x| model.envelope(x), h.probe_range(), 10_000);
        let ok = chk.passed() && chk.min_second_difference >= -1e-10;
        passed &= ok;
        rows.push(
            json!({"model": model.label(), "y1": fmt_f64(h.y1), "y2": fmt_f64(h.y2),
            "y3": fmt_f64(h.y3), "max_excess": fmt_f64(chk.max_excess),
            "min_second_difference": fmt_f64(chk.min_second_difference),
            "knot_conditions": chk.knot_conditions, "ok": ok}),
        );
    }
    Ok(Verdict {
        passed,
        summary: format!("{} perturbed presets on 1e4-point grids", rows.len()),
        data: json!({"models": rows}),
    })
}

fn c5() -> Result<Verdict> {
    let expo = PerturbedDensity::pure(ExponentModel::exponential())?;
    let mut closed = Vec::new();
    let mut passed = true;
    for x in [2.0, 5.0, 10.0] {
        let (i, _) = cramer_rate(&expo, x)?;
        let err = (i - (x - 1.0 - f64::ln(x))).abs();
        passed &= err <= 1e-6;
        closed.push(json!({"x": x, "I": fmt_f64(i), "abs_err": fmt_f64(err)}));
    }
    let tables: Vec<(String, CramerRate, Value)> = preset_models()
        .par_iter()
        .map(|m| -> Result<(String, CramerRate, Value)> {
            let x_max = 5.0 * m.mean().max(1.0);
            let tab = CramerRate::build(m, x_max)?;
            let c = tab.checks(m)?;
            let ok = c.max_duality_residual <= 1e-6
                && c.max_derivative_error <= 1e-4
                && c.min_second_difference >= -1e-8
                && c.min_rate >= 0.0
                && c.t_monotone;
            Ok((
                m.label(),
                tab,
                json!({"model": m.label(), "duality": fmt_f64(c.max_duality_residual),
                "derivative": fmt_f64(c.max_derivative_error),
                "min_second_difference": fmt_f64(c.min_second_difference), "ok": ok}),
            ))
        })
        .collect::<Result<_>>()?;
    let mut csv = String::new();
    for (label, tab, row) in &tables {
        passed &= row["ok"] == json!(true);
        let mut buf = Vec::new();
        tab.write_csv(&mut buf)?;
        csv.push_str(&format!("# {label}\n{}", String::from_utf8_lossy(&buf)));
    }
    Ok(Verdict {
        passed,
        summary: format!("closed form at 3 points, {} preset tables", tables.len()),
        data: json!({"closed_form": closed, "models": tables.iter().map(|t| t.2.clone()).collect::<Vec<_>>(),
            "tables_csv": csv}),
    })
}

fn c6() -> Result<Verdict> {
    let model = PerturbedDensity::pure(ExponentModel::weibull(3.0)?)?;
    let mut devs = Vec::new();
    let mut rows = Vec::new();
    for x in [5.0, 10.0, 20.0] {
        let r = tail_equivalence(&model, x)?;
        devs.push((r - 1.0).abs());
        rows.push(json!({"x": x, "ratio": fmt_f64(r)}));
    }
    let passed = devs[0] > devs[1] && devs[1] > devs[2] && devs[2] <= 0.15;
    Ok(Verdict {
        passed,
        summary: format!(
            "|ratio - 1| = {:.3e}, {:.3e}, {:.3e}",
            devs[0], devs[1], devs[2]
        ),
        data: json!({"rows": rows}),
    })
}

fn c7(seed: u64) -> Result<Verdict> {
    let model = PerturbedDensity::pure(ExponentModel::weibull(3.0)?)?;
    let (n, a) = (10usize, 2.0);
    let (i, _) = cramer_rate(&model, a)?;
    let is = importance_estimate(&model, n, a, 0.5, 20_000, seed)?;
    let ratio = -is.p_c.log_p / (n as f64 * i);
    let n_eff = is.localization.n_eff;
    let passed = (ratio - 1.0).abs() <= 0.15 && n_eff >= 100.0;
    Ok(Verdict {
        passed,
        summary: format!("ratio {ratio:.4}, n_eff {n_eff:.0}"),
        data: json!({"n": n, "a": a, "I": fmt_f64(i), "log_p_c": fmt_f64(is.p_c.log_p),
            "ratio": fmt_f64(ratio), "n_eff": fmt_f64(n_eff)}),
    })
}

fn localization_series(model: &PerturbedDensity, seed: u64) -> Result<(bool, Value)> {
    let plan = [(5usize, 3.0f64), (10, 4.0), (20, 5.0)];
    let est: Vec<_> = plan
        .iter()
        .enumerate()
        .map(|(i, &(n, a))| {
            let eps = 1.0 / a.ln();
            estimate_localization(
                model,
                n,
                a,
                eps,
                Method::FixedSumGibbs,
                4000,
                stream_seed(seed, i as u64),
            )
        })
        .collect::<Result<_>>()?;
    let increasing = est.windows(2).all(|w| w[1].p_hat > w[0].p_hat);
    let (first, last) = (est[0], est[2]);
    let separated =
        last.p_hat - first.p_hat > 3.0 * (first.std_err.powi(2) + last.std_err.powi(2)).sqrt();
    let high = last.p_hat >= 0.9;
    let rows: Vec<Value> = plan
        .iter()
        .zip(&est)
        .map(|(&(n, a), e)| {
            json!({"n": n, "a": a, "eps": fmt_f64(1.0 / a.ln()),
            "p_hat": fmt_f64(e.p_hat), "std_err": fmt_f64(e.std_err), "states": e.replications})
        })
        .collect();
    Ok((
        increasing && separated && high,
        json!({"rows": rows, "increasing": increasing,
        "separated": separated, "final_at_least_0_9": high}),
    ))
}

fn c8(seed: u64) -> Result<Verdict> {
    let pure = PerturbedDensity::pure(ExponentModel::power(3.0)?)?;
    let sin = PerturbedDensity::new(
        ExponentModel::power(3.0)?,
        Perturbation::Sin { lambda: 0.5 },
    )?;
    let (ok_pure, d_pure) = localization_series(&pure, stream_seed(seed, 0))?;
    let (ok_sin, d_sin) = localization_series(&sin, stream_seed(seed, 1))?;
    let p = |d: &Value| -> Vec<String> {
        d["rows"]
            .as_array()
            .unwrap()
            .iter()
            .map(|r| {
                let v: f64 = r["p_hat"].as_str().unwrap().parse().unwrap();
                format!("{v:.4}")
            })
            .collect()
    };
    Ok(Verdict {
        passed: ok_pure && ok_sin,
        summary: format!(
            "pure p = [{}], sin p = [{}]",
            p(&d_pure).join(", "),
            p(&d_sin).join(", ")
        ),
        data: json!({"pure": d_pure, "sin": d_sin}),
    })
}

fn c9() -> Result<Verdict> {
    let case2 = preset("example1-case2", Some(3.0), Some(0.5))?;
    let r2 = evaluate_conditions(&case2.model, &case2.plan, &case2.n_grid)?;
    let case1 = preset("example1-case1", Some(1.5), None)?;
    let r1 = evaluate_conditions(&case1.model, &case1.plan, &case1.n_grid)?;
    let ex2 = preset("example2", None, None)?;
    let re = evaluate_conditions(&ex2.model, &ex2.plan, &ex2.n_grid)?;
    let ok2 = r2.c32_trend() == Trend::Decreasing
        && r2.c33_trend() == Trend::Decreasing
        && r2.final_ratio32 < 1e-2;
    let ok1 = r1.c32_trend() == Trend::Increasing;
    let oke = re.c32_trend() == Trend::Decreasing;
    let mut csv = Vec::new();
    for r in [&r2, &r1, &re] {
        r.write_csv(&mut csv)?;
    }
    Ok(Verdict {
        passed: ok2 && ok1 && oke,
        summary: format!(
            "case 2 final ratio32 {:.2e}; case 1 {:?}; example 2 {:?}",
            r2.final_ratio32,
            r1.c32_trend(),
            re.c32_trend()
        ),
        data: json!({"example1_case2": {"c32": r2.c32, "c33": r2.c33, "final_ratio32": fmt_f64(r2.final_ratio32)},
            "example1_case1": {"c32": r1.c32}, "example2": {"c32": re.c32},
            "csv": String::from_utf8_lossy(&csv)}),
    })
}

fn c10(seed: u64) -> Result<Verdict> {
    let model = PerturbedDensity::pure(ExponentModel::weibull(3.0)?)?;
    let mean = model.mean();
    let (a, alpha) = (1.5 * mean, 2.0 * mean);
    let ns = [500usize, 1000, 2000];
    let mut rows = Vec::new();
    let mut cond = Vec::new();
    let mut base = Vec::new();
    for (i, &n) in ns.iter().enumerate() {
        let k = default_window(n);
        let s = stream_seed(seed, i as u64);
        let c = estimate_p_ak_with(
            &model,
            n,
            a,
            k,
            alpha,
            200,
            s,
            Conditioning::EndValueAtLeast,
        )?;
        let u = estimate_p_ak_with(&model, n, a, k, alpha, 200, s, Conditioning::Unconditioned)?;
        rows.push(json!({"n": n, "k": k, "p_conditioned": fmt_f64(c.p_hat), "p_unconditioned": fmt_f64(u.p_hat)}));
        cond.push(c.p_hat);
        base.push(u.p_hat);
    }
    let nondecreasing = cond.windows(2).all(|w| w[1] >= w[0]);
    let high = cond[2] >= 0.9;
    let above = cond.iter().zip(&base).all(|(c, u)| c > u);
    Ok(Verdict {
        passed: nondecreasing && high && above,
        summary: format!("conditioned p = {cond:?}, unconditioned p = {base:?}"),
        data: json!({"a": fmt_f64(a), "alpha": fmt_f64(alpha), "rows": rows,
            "nondecreasing": nondecreasing, "final_at_least_0_9": high, "above_baseline": above}),
    })
}

fn run_one(id: u32, seed: u64) -> Result<Verdict> {
    let s = stream_seed(seed, id as u64);
    match id {
        1 => c1(),
        2 => c2(),
        3 => c3(),
        4 => c4(),
        5 => c5(),
        6 => c6(),
        7 => c7(s),
        8 => c8(s),
        9 => c9(),
        10 => c10(s),
        _ => unreachable!(),
    }
}

fn outcome(id: u32, start: Instant, v: Result<Verdict>) -> Outcome {
    let seconds = start.elapsed().as_secs_f64();
    let name = NAMES[id as usize - 1];
    match v {
        Ok(v) => {
            let in_time = time_limit(id).is_none_or(|lim| seconds <= lim);
            let summary = if in_time {
                v.summary
            } else {
                format!(
                    "{} (over the {}s limit)",
                    v.summary,
                    time_limit(id).unwrap()
                )
            };
            Outcome {
                id,
                name,
                passed: v.passed && in_time,
                summary,
                seconds,
                data: v.data,
            }
        }
        Err(e) => Outcome {
            id,
            name,
            passed: false,
            summary: format!("{}: {e}", e.name()),
            seconds,
            data: json!({"error": e.name(), "message": e.to_string()}),
        },
    }
}

/// Runs one criterion. Criterion 11 reruns criteria 1 to 10 and compares
/// their serialized outputs byte for byte with `first`, when given.
pub fn run_criterion(id: u32, seed: u64, first: Option<&[Outcome]>) -> Outcome {
    let start = Instant::now();
    if id != 11 {
        return outcome(id, start, run_one(id, seed));
    }
    let mut rows = Vec::new();
    let mut all_same = true;
    for other in 1..=10u32 {
        let before = match first.and_then(|f| f.iter().find(|o| o.id == other)) {
            Some(o) => serde_json::to_string(&o.data).unwrap(),
            None => {
                serde_json::to_string(&outcome(other, Instant::now(), run_one(other, seed)).data)
                    .unwrap()
            }
        };
        let again =
            serde_json::to_string(&outcome(other, Instant::now(), run_one(other, seed)).data)
                .unwrap();
        let same = before == again;
        all_same &= same;
        rows.push(json!({"criterion": other, "identical": same, "bytes": again.len()}));
    }
    outcome(
        11,
        start,
        Ok(Verdict {
            passed: all_same,
            summary: format!(
                "{} of 10 sub-runs byte-identical on rerun",
                rows.iter()
                    .filter(|r| r["identical"] == json!(true))
                    .count()
            ),
            data: json!({"reruns": rows}),
        }),
    )
}

/// Runs the selected criteria in order; criterion 11 reuses earlier outputs.
pub fn run_all(seed: u64, only: Option<&[u32]>, mut report: impl FnMut(&Outcome)) -> Vec<Outcome> {
    let ids: Vec<u32> = match only {
        Some(list) => list.to_vec(),
        None => (1..=11).collect(),
    };
    let mut done: Vec<Outcome> = Vec::new();
    for id in ids {
        let o = run_criterion(id, seed, Some(&done));
        report(&o);
        done.push(o);
    }
    done
}
