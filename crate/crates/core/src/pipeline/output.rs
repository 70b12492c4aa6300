//! Study artifacts: `report.json` plus CSV tables, one row per record.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::Serialize;
use serde_json::{json, Value};

use super::{SizeOutcome, StudyOutcome};
use crate::fitting::FitRow;
use crate::indeptests::TestOutcome;
use crate::Result;

fn num(v: f64) -> String {
    format!("{v:.16e}")
}

fn opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

fn csv_writer(path: &Path) -> Result<csv::Writer<File>> {
    Ok(csv::Writer::from_path(path)?)
}

pub fn write_artifacts(outcome: &StudyOutcome, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    write_report_json(outcome, &dir.join("report.json"))?;
    write_series(outcome, &dir.join("series.csv"))?;
    write_table(&outcome.fits, &dir.join("table1.csv"))?;
    write_fits(&outcome.fits, &dir.join("fits.csv"))?;
    write_tests(outcome, &dir.join("tests.csv"))?;
    for s in &outcome.sizes {
        let n = s.params.n;
        write_spacings(s, &dir.join(format!("spacings_N{n}.csv")))?;
        write_timeseries(s, &dir.join(format!("timeseries_N{n}.csv")))?;
        write_scatter(s, &dir.join(format!("scatter_N{n}.csv")))?;
    }
    Ok(())
}

fn test_json(t: &TestOutcome) -> Value {
    match &t.result {
        Ok(r) => serde_json::to_value(r).unwrap_or(Value::Null),
        Err(e) => json!({ "test": t.test, "error": e.to_string() }),
    }
}

fn fit_json(row: &FitRow) -> Value {
    let result = match &row.result {
        Ok(r) => serde_json::to_value(r).unwrap_or(Value::Null),
        Err(e) => json!({ "error": e.to_string() }),
    };
    json!({
        "quantity": row.spec.quantity.name(),
        "family": row.spec.family,
        "formula": row.spec.family.formula(),
        "primary": row.spec.primary,
        "result": result,
    })
}

#[derive(Serialize)]
struct Scalars<'a> {
    n: u32,
    dim: usize,
    mode: usize,
    n_bar: f64,
    sigma_t: f64,
    e_bar: f64,
    sigma_eq: f64,
    sigma_eq_over_n: f64,
    n_sigma_eq: usize,
    n_mc: f64,
    n_av: f64,
    delta: f64,
    sigma: f64,
    delta_mc: Option<f64>,
    sigma_mc: Option<f64>,
    delta_max: f64,
    delta_max_mc: Option<f64>,
    offdiag_av: f64,
    n_at_t0: Option<f64>,
    spacing_argmax: f64,
    goe_sup_distance: f64,
    poisson_sup_distance: f64,
    spacing_bins: usize,
    checks: &'a [super::Check],
    diagonalized: bool,
    seconds: f64,
}

fn scalars(s: &SizeOutcome) -> Scalars<'_> {
    let r = &s.report;
    Scalars {
        n: r.n,
        dim: r.dim,
        mode: r.mode,
        n_bar: r.n_bar,
        sigma_t: r.sigma_t,
        e_bar: r.e_bar,
        sigma_eq: r.sigma_eq,
        sigma_eq_over_n: r.sigma_eq / r.n as f64,
        n_sigma_eq: r.n_sigma_eq,
        n_mc: r.n_mc,
        n_av: r.n_av,
        delta: r.delta,
        sigma: r.sigma,
        delta_mc: r.delta_mc,
        sigma_mc: r.sigma_mc,
        delta_max: r.delta_max,
        delta_max_mc: r.delta_max_mc,
        offdiag_av: r.offdiag_av,
        n_at_t0: s.series.first().copied(),
        spacing_argmax: s.spacing.argmax_s,
        goe_sup_distance: s.spacing.goe_distance,
        poisson_sup_distance: s.spacing.poisson_distance,
        spacing_bins: s.spacing.histogram.bins(),
        checks: &s.checks,
        diagonalized: s.diagonalized,
        seconds: s.seconds,
    }
}

fn write_report_json(outcome: &StudyOutcome, path: &Path) -> Result<()> {
    let sizes: Vec<Value> = outcome
        .sizes
        .iter()
        .map(|s| {
            let mut v = serde_json::to_value(scalars(s)).unwrap_or(Value::Null);
            v["tests"] = s.tests.iter().map(test_json).collect();
            v
        })
        .collect();
    let failures: Vec<Value> = outcome
        .failures
        .iter()
        .map(|(n, e)| json!({ "n": n, "error": e }))
        .collect();
    let doc = json!({
        "config": outcome.config,
        "diagonalizations": outcome.diagonalizations,
        "cache_hits": outcome.cache_hits,
        "succeeded": outcome.succeeded(),
        "failures": failures,
        "sizes": sizes,
        "fits": outcome.fits.iter().map(fit_json).collect::<Vec<_>>(),
    });
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, &doc)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

fn write_series(outcome: &StudyOutcome, path: &Path) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record([
        "N",
        "dim",
        "n_bar",
        "sigma_t",
        "e_bar",
        "sigma_eq_over_N",
        "n_sigma_eq",
        "n_mc",
        "n_av",
        "delta",
        "sigma",
        "delta_mc",
        "sigma_mc",
        "delta_max",
        "delta_max_mc",
        "offdiag_av",
        "n_t0",
        "spacing_argmax",
        "goe_distance",
        "poisson_distance",
    ])?;
    for s in &outcome.sizes {
        let r = &s.report;
        w.write_record([
            r.n.to_string(),
            r.dim.to_string(),
            num(r.n_bar),
            num(r.sigma_t),
            num(r.e_bar),
            num(r.sigma_eq / r.n as f64),
            r.n_sigma_eq.to_string(),
            num(r.n_mc),
            num(r.n_av),
            num(r.delta),
            num(r.sigma),
            opt(r.delta_mc),
            opt(r.sigma_mc),
            num(r.delta_max),
            opt(r.delta_max_mc),
            num(r.offdiag_av),
            opt(s.series.first().copied()),
            num(s.spacing.argmax_s),
            num(s.spacing.goe_distance),
            num(s.spacing.poisson_distance),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn write_table(fits: &[FitRow], path: &Path) -> Result<()> {
    let mut file = BufWriter::new(File::create(path)?);
    writeln!(
        file,
        "# r2_adj = 1 - (1 - R^2)(n - 1)/(n - k), R^2 centered and weighted; \
         rmse = sqrt(SSR / (n - k)); k = number of fitted parameters"
    )?;
    let mut w = csv::Writer::from_writer(file);
    w.write_record([
        "quantity", "family", "r2_adj", "rmse", "a", "sigma_a", "b", "sigma_b", "c", "sigma_c",
        "mask", "weights",
    ])?;
    for row in fits.iter().filter(|r| r.spec.primary) {
        let mut rec = vec![
            row.spec.quantity.name().to_string(),
            row.spec.family.formula().to_string(),
        ];
        match &row.result {
            Ok(f) => {
                let (a, sa) = f.a();
                let (b, sb) = f.b();
                let c = f.c();
                rec.extend([
                    num(f.r2_adj),
                    num(f.rmse),
                    num(a),
                    num(sa),
                    num(b),
                    num(sb),
                    opt(c.map(|c| c.0)),
                    opt(c.map(|c| c.1)),
                ]);
            }
            Err(_) => rec.extend(std::iter::repeat_n(String::new(), 8)),
        }
        rec.push(row.spec.mask().label());
        rec.push(
            if row.spec.weighted() {
                "inverse_variance"
            } else {
                "uniform"
            }
            .into(),
        );
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

fn write_fits(fits: &[FitRow], path: &Path) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record([
        "quantity",
        "family",
        "primary",
        "mask",
        "points",
        "r2_adj",
        "rmse",
        "ssr",
        "a",
        "sigma_a",
        "b",
        "sigma_b",
        "c",
        "sigma_c",
        "converged",
        "iterations",
        "error",
    ])?;
    for row in fits {
        let mut rec = vec![
            row.spec.quantity.name().to_string(),
            row.spec.family.formula().to_string(),
            row.spec.primary.to_string(),
            row.spec.mask().label(),
        ];
        match &row.result {
            Ok(f) => {
                let (a, sa) = f.a();
                let (b, sb) = f.b();
                let c = f.c();
                rec.extend([
                    f.used
                        .iter()
                        .map(u32::to_string)
                        .collect::<Vec<_>>()
                        .join(" "),
                    num(f.r2_adj),
                    num(f.rmse),
                    num(f.ssr),
                    num(a),
                    num(sa),
                    num(b),
                    num(sb),
                    opt(c.map(|c| c.0)),
                    opt(c.map(|c| c.1)),
                    f.converged.to_string(),
                    f.iterations.to_string(),
                    String::new(),
                ]);
            }
            Err(e) => {
                rec.extend(std::iter::repeat_n(String::new(), 12));
                rec.push(e.to_string());
            }
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

fn write_tests(outcome: &StudyOutcome, path: &Path) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record([
        "N",
        "test",
        "statistic",
        "p_value",
        "method",
        "replicates",
        "seed",
        "n",
        "dropped",
        "error",
    ])?;
    for s in &outcome.sizes {
        for t in &s.tests {
            let n = s.params.n.to_string();
            match &t.result {
                Ok(r) => {
                    let replicates = match r.method {
                        crate::indeptests::Method::Permutation { replicates, .. } => {
                            replicates.to_string()
                        }
                        crate::indeptests::Method::Asymptotic => String::new(),
                    };
                    w.write_record([
                        n,
                        t.test.name().to_string(),
                        num(r.statistic),
                        num(r.p_value),
                        r.method.tag().to_string(),
                        replicates,
                        r.method.seed().map(|s| s.to_string()).unwrap_or_default(),
                        r.n.to_string(),
                        r.dropped.to_string(),
                        String::new(),
                    ])?;
                }
                Err(e) => {
                    let mut rec = vec![n, t.test.name().to_string()];
                    rec.extend(std::iter::repeat_n(String::new(), 7));
                    rec.push(e.to_string());
                    w.write_record(&rec)?;
                }
            }
        }
    }
    w.flush()?;
    Ok(())
}

fn write_spacings(s: &SizeOutcome, path: &Path) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(["bin_left", "bin_right", "density"])?;
    let h = &s.spacing.histogram;
    for b in 0..h.bins() {
        w.write_record([num(h.edges[b]), num(h.edges[b + 1]), num(h.density[b])])?;
    }
    w.flush()?;
    Ok(())
}

fn write_timeseries(s: &SizeOutcome, path: &Path) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(["t", "value"])?;
    for (t, v) in s.times.iter().zip(&s.series) {
        w.write_record([num(*t), num(*v)])?;
    }
    w.flush()?;
    Ok(())
}

fn write_scatter(s: &SizeOutcome, path: &Path) -> Result<()> {
    let r = &s.report;
    let mut w = csv_writer(path)?;
    w.write_record(["alpha", "energy", "delta_n", "delta_c2", "in_window"])?;
    for a in 0..r.delta_n.len() {
        w.write_record([
            a.to_string(),
            num(r.energies[a]),
            num(r.delta_n[a]),
            num(r.delta_c2[a]),
            u8::from(r.in_window[a]).to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
