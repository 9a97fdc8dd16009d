//! The subcommands. Each returns the files it would write; `output` decides
//! whether they land in a directory or on stdout.

use serde_json::{json, Value};

use stretchwalk_core::paths::{
    default_window, detect_segments, estimate_p_ak_with, Conditioning, PathSimulator,
};
use stretchwalk_core::ratefn::{cramer_rate, log_survival, tail_equivalence, CramerRate};
use stretchwalk_core::sampler::{estimate_localization, Method};
use stretchwalk_core::seeds::stream_seed;
use stretchwalk_core::variational::{
    brute_force_infimum, closed_form_bounds, i_c_interval, log_prob_c_lower, log_prob_icc_upper,
    BandEvent, Region,
};
use stretchwalk_core::{Error, Result};
use stretchwalk_verify as acceptance;

use crate::config::{parse_num, resolve_plan, split, EpsRule, Flags, Format};
use crate::table::{Cell, Table};

pub const DEFAULT_SEED: u64 = 1;

/// One output file: its name inside `--out` and its full contents.
#[derive(Debug, Clone, PartialEq)]
pub struct Artifact {
    pub file: String,
    pub body: String,
}

#[derive(Debug, Clone)]
pub struct Emission {
    pub primary: Artifact,
    /// Secondary files, written only with `--out`.
    pub extra: Vec<Artifact>,
    /// Set by `verify` when a criterion fails.
    pub failed: bool,
}

fn render(
    name: &str,
    format: Format,
    header: Vec<(String, String)>,
    table: &Table,
    summary: Value,
) -> Artifact {
    match format {
        Format::Csv => Artifact {
            file: format!("{name}.csv"),
            body: table.to_csv(&header),
        },
        Format::Json => {
            let mut doc = serde_json::Map::new();
            for (k, v) in header {
                doc.insert(k, json!(v));
            }
            doc.insert("rows".into(), table.to_json_rows());
            if let Value::Object(extra) = summary {
                doc.extend(extra);
            }
            let mut body = serde_json::to_string_pretty(&Value::Object(doc)).unwrap();
            body.push('\n');
            Artifact {
                file: format!("{name}.json"),
                body,
            }
        }
    }
}

/// Every file names its seed, including the deterministic commands.
fn header(command: &str, seed: u64, items: &[(&str, String)]) -> Vec<(String, String)> {
    let mut h = vec![("command".to_string(), command.to_string())];
    h.push(("seed".into(), seed.to_string()));
    h.extend(items.iter().map(|(k, v)| (k.to_string(), v.clone())));
    h
}

fn float_list(text: &str, what: &str) -> Result<Vec<f64>> {
    split(text).map(|v| parse_num(v, what)).collect()
}

pub fn bounds(flags: &Flags) -> Result<Emission> {
    let model = flags.model("power:beta=2")?;
    let ns = flags.n_list(&[2, 3, 4])?;
    let a_list = flags.a_list("2,3,5", model.mean())?;
    let eps_list = float_list(flags.eps.as_deref().unwrap_or("0.5"), "eps")?;
    let mut columns = vec![
        "n",
        "a",
        "eps",
        "f_g1",
        "f_g2",
        "I_icc",
        "I_c_lower",
        "I_c_upper",
        "H",
        "G",
        "tau",
        "log_p_c_lower",
        "log_p_icc_upper",
    ];
    if flags.oracle {
        columns.extend(["oracle_I_icc", "oracle_rel_gap"]);
    }
    let mut table = Table::new(&columns);
    let mut worst_gap: f64 = 0.0;
    for &n in &ns {
        for &a in &a_list {
            for &eps in &eps_list {
                let ev = BandEvent::new(n as usize, a, eps)?;
                let b = closed_form_bounds(model.base(), &ev)?;
                let (ic_lo, ic_hi) = i_c_interval(&model, &ev)?;
                let mut row: Vec<Cell> = vec![
                    n.into(),
                    a.into(),
                    eps.into(),
                    b.f_g1.into(),
                    b.f_g2.into(),
                    b.i_icc.into(),
                    ic_lo.into(),
                    ic_hi.into(),
                    b.h.into(),
                    b.g.into(),
                    b.tau.into(),
                    log_prob_c_lower(&model, &ev)?.into(),
                    log_prob_icc_upper(&model, &ev)?.into(),
                ];
                if flags.oracle {
                    let brute = brute_force_infimum(&model, &ev, Region::IccC)?;
                    let gap = (brute - b.i_icc).abs() / b.i_icc.abs();
                    worst_gap = worst_gap.max(gap);
                    row.extend([brute.into(), gap.into()]);
                }
                table.push(row);
            }
        }
    }
    let summary = if flags.oracle {
        json!({"worst_oracle_rel_gap": worst_gap})
    } else {
        json!({})
    };
    Ok(Emission {
        primary: render(
            "bounds",
            flags.format(Format::Json),
            header(
                "bounds",
                flags.seed(DEFAULT_SEED)?,
                &[("model", model.label())],
            ),
            &table,
            summary,
        ),
        extra: vec![],
        failed: false,
    })
}

pub fn conditions(flags: &Flags) -> Result<Emission> {
    let plan = resolve_plan(flags)?;
    let report = stretchwalk_core::conditions::evaluate_conditions(
        &plan.exponent,
        &plan.plan,
        &plan.n_grid,
    )?;
    let mut table = Table::new(&[
        "n",
        "a",
        "eps",
        "ratio_growth",
        "ratio32",
        "ratio33",
        "H",
        "G",
    ]);
    for r in &report.rows {
        table.push(vec![
            r.n.into(),
            r.a.into(),
            r.eps.into(),
            r.ratio_growth.into(),
            r.ratio32.into(),
            r.ratio33.into(),
            r.h.into(),
            r.g.into(),
        ]);
    }
    let items = [
        ("plan", plan.name.clone()),
        ("model", plan.exponent.label()),
        ("trend_ratio32", format!("{:?}", report.c32_trend())),
        ("trend_ratio33", format!("{:?}", report.c33_trend())),
    ];
    let summary = json!({
        "growth": report.growth,
        "final_ratio32": report.final_ratio32,
        "ratio32_trend": report.c32,
        "ratio33_trend": report.c33,
        "sequences": plan.plan,
    });
    Ok(Emission {
        primary: render(
            "conditions",
            flags.format(Format::Csv),
            header("conditions", flags.seed(DEFAULT_SEED)?, &items),
            &table,
            summary,
        ),
        extra: vec![],
        failed: false,
    })
}

pub fn rate(flags: &Flags) -> Result<Emission> {
    let model = flags.model("weibull:k=3")?;
    let points = flags.a_list("2,5,10", model.mean())?;
    let x_max = points.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let tab = CramerRate::build(&model, x_max)?;
    let checks = tab.checks(&model)?;
    let mut table = Table::new(&["x", "I", "t_star"]);
    for i in 0..tab.xs.len() {
        table.push(vec![
            tab.xs[i].into(),
            tab.rate[i].into(),
            tab.t_star[i].into(),
        ]);
    }
    let mut diag = Table::new(&["x", "I", "t_star", "log_survival", "tail_ratio"]);
    for &x in &points {
        let (i, t) = cramer_rate(&model, x)?;
        diag.push(vec![
            x.into(),
            i.into(),
            t.into(),
            log_survival(&model, x)?.into(),
            tail_equivalence(&model, x)?.into(),
        ]);
    }
    let format = flags.format(Format::Csv);
    let h = header(
        "rate",
        flags.seed(DEFAULT_SEED)?,
        &[("model", model.label()), ("mean", model.mean().to_string())],
    );
    let summary = json!({"checks": checks, "points": diag.to_json_rows()});
    let primary = render("rate", format, h.clone(), &table, summary);
    let extra = match format {
        Format::Csv => vec![render("rate_points", Format::Csv, h, &diag, json!({}))],
        Format::Json => vec![],
    };
    Ok(Emission {
        primary,
        extra,
        failed: false,
    })
}

/// Broadcasts a one-element list to `len` entries.
fn paired(values: Vec<f64>, len: usize, what: &str) -> Result<Vec<f64>> {
    match values.len() {
        1 => Ok(vec![values[0]; len]),
        l if l == len => Ok(values),
        l => Err(Error::InvalidArgument(format!(
            "--{what} has {l} values for {len} sizes"
        ))),
    }
}

pub fn localize(flags: &Flags) -> Result<Emission> {
    let seed = flags.seed(DEFAULT_SEED)?;
    let model = flags.model("power:beta=3")?;
    let ns = flags.n_list(&[5, 10, 20])?;
    let a_list = paired(flags.a_list("3,4,5", model.mean())?, ns.len(), "a")?;
    let eps = EpsRule::parse(flags.eps.as_deref().unwrap_or("inv_log_a"))?;
    let method = flags.method(Method::FixedSumGibbs)?;
    let budget = flags.usize_opt(&flags.trials, "trials")?.unwrap_or(4000);
    let mut table = Table::new(&["n", "a", "eps", "p_hat", "std_err", "n_eff", "replications"]);
    for (i, (&n, &a)) in ns.iter().zip(&a_list).enumerate() {
        let e = eps.at(i, a);
        let est = estimate_localization(
            &model,
            n as usize,
            a,
            e,
            method,
            budget,
            stream_seed(seed, i as u64),
        )?;
        table.push(vec![
            n.into(),
            a.into(),
            e.into(),
            est.p_hat.into(),
            est.std_err.into(),
            est.n_eff.into(),
            est.replications.into(),
        ]);
    }
    let items = [
        ("model", model.label()),
        ("method", format!("{method:?}")),
        ("trials", budget.to_string()),
    ];
    Ok(Emission {
        primary: render(
            "localize",
            flags.format(Format::Csv),
            header("localize", seed, &items),
            &table,
            json!({}),
        ),
        extra: vec![],
        failed: false,
    })
}

fn conditioning(flags: &Flags) -> Result<Conditioning> {
    match flags.method.as_deref().unwrap_or("at_least") {
        "at_least" => Ok(Conditioning::EndValueAtLeast),
        "equals" => Ok(Conditioning::EndValueEquals),
        "none" => Ok(Conditioning::Unconditioned),
        other => Err(Error::InvalidArgument(format!(
            "unknown path conditioning `{other}`"
        ))),
    }
}

pub fn paths(flags: &Flags) -> Result<Emission> {
    let seed = flags.seed(DEFAULT_SEED)?;
    let model = flags.model("weibull:k=3")?;
    let mean = model.mean();
    let ns = flags.n_list(&[500, 1000, 2000])?;
    let a = flags.a_list("1.5*mean", mean)?[0];
    let alpha = crate::config::scaled(flags.alpha.as_deref().unwrap_or("2*mean"), mean, "alpha")?;
    let k_fixed = flags.usize_opt(&flags.k, "k")?;
    let reps = flags.usize_opt(&flags.trials, "trials")?.unwrap_or(200);
    let cond = conditioning(flags)?;
    let mut table = Table::new(&[
        "n",
        "k",
        "a",
        "alpha",
        "p_conditioned",
        "se_conditioned",
        "p_unconditioned",
        "se_unconditioned",
    ]);
    for (i, &n) in ns.iter().enumerate() {
        let n = n as usize;
        let k = k_fixed.unwrap_or_else(|| default_window(n));
        let s = stream_seed(seed, i as u64);
        let c = estimate_p_ak_with(&model, n, a, k, alpha, reps, s, cond)?;
        let u = estimate_p_ak_with(&model, n, a, k, alpha, reps, s, Conditioning::Unconditioned)?;
        table.push(vec![
            n.into(),
            k.into(),
            a.into(),
            alpha.into(),
            c.p_hat.into(),
            c.std_err.into(),
            u.p_hat.into(),
            u.std_err.into(),
        ]);
    }
    let items = [
        ("model", model.label()),
        ("conditioning", format!("{cond:?}")),
        ("replications", reps.to_string()),
    ];
    let h = header("paths", seed, &items);
    let format = flags.format(Format::Csv);
    let primary = render("paths", format, h.clone(), &table, json!({}));

    // the first replication at the largest n, for plotting
    let (i_max, &n_max) = ns.iter().enumerate().max_by_key(|p| p.1).unwrap();
    let n_max = n_max as usize;
    let k = k_fixed.unwrap_or_else(|| default_window(n_max));
    let traj = PathSimulator::new(&model, a)?.simulate(
        n_max,
        cond,
        stream_seed(stream_seed(seed, i_max as u64), 0),
    )?;
    let seg = detect_segments(&traj, k, alpha)?;
    let mut path_table = Table::new(&["j", "increment", "partial_sum"]);
    for (j, x) in traj.increments.iter().enumerate() {
        path_table.push(vec![
            (j + 1).into(),
            (*x).into(),
            traj.partial_sums[j + 1].into(),
        ]);
    }
    let mut slope_table = Table::new(&["j", "delta"]);
    for (j, d) in seg.slopes.iter().enumerate() {
        slope_table.push(vec![j.into(), (*d).into()]);
    }
    let mut ph = h.clone();
    ph.push(("n".into(), n_max.to_string()));
    if let Some(note) = &traj.note {
        ph.push(("note".into(), note.clone()));
    }
    let mut sh = ph.clone();
    sh.push(("k".into(), k.to_string()));
    sh.push(("argmax_j".into(), seg.argmax_j.to_string()));
    sh.push(("max_slope".into(), stretchwalk_core::fmt_f64(seg.max_slope)));
    Ok(Emission {
        primary,
        extra: vec![
            render("trajectory", format, ph, &path_table, json!({})),
            render("slopes", format, sh, &slope_table, json!({})),
        ],
        failed: false,
    })
}

pub fn verify(flags: &Flags, mut progress: impl FnMut(&acceptance::Outcome)) -> Result<Emission> {
    let seed = flags.seed(acceptance::DEFAULT_SEED)?;
    let outcomes = acceptance::run_all(seed, None, |o| progress(o));
    let failed = outcomes.iter().any(|o| !o.passed);
    let criteria: Vec<Value> = outcomes
        .iter()
        .map(|o| json!({"id": o.id, "name": o.name, "passed": o.passed, "summary": o.summary, "data": o.data}))
        .collect();
    let doc = json!({"command": "verify", "seed": seed, "passed": !failed, "criteria": criteria});
    let mut body = serde_json::to_string_pretty(&doc).unwrap();
    body.push('\n');
    Ok(Emission {
        primary: Artifact {
            file: "verify.json".into(),
            body,
        },
        extra: vec![],
        failed,
    })
}
