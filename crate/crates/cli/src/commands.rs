use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use vnpc_core::io::{
    fmt17, read_series_csv, svg_plot, write_coherency_csv, write_draws, write_json,
    write_series_csv, write_summary_csvs, write_text, write_traces_csv, ColumnSelector, Line,
    NamedSeries,
};
use vnpc_core::linalg::CMatrix;
use vnpc_core::prior::BernsteinConfig;
use vnpc_core::sampler::{run_chain, AcceptanceRates, McmcConfig, PosteriorDraws, Procedure};
use vnpc_core::study::{run_study, Arm, ReplicationOutput, StudyConfig};
use vnpc_core::summary::{median_sorted, SummaryBundle, TruthComparison};
use vnpc_core::timefreq::{FrequencyGrid, TimeSeries};
use vnpc_core::var::{elbow_table, max_identifiable_order, BuiltinModel};
use vnpc_core::{Error, Result};

use crate::settings::{ProcedureName, Settings};

/// Largest order considered when an order is chosen automatically.
const AUTO_MAX_ORDER: usize = 10;

const PALETTE: [&str; 6] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b",
];

/// Input series after optional differencing and standardization, plus the
/// generating model when the data came from a builtin simulator and was not
/// transformed.
struct Input {
    names: Vec<String>,
    series: TimeSeries,
    model: Option<BuiltinModel>,
    source: String,
}

fn default_names(d: usize) -> Vec<String> {
    (1..=d).map(|i| format!("z{i}")).collect()
}

fn load_input(s: &Settings) -> Result<Input> {
    let spec = s.data.as_deref().ok_or_else(|| {
        Error::InvalidConfig("--data is required (a CSV path, var2 or vma1)".into())
    })?;
    let path = Path::new(spec);
    let (named, model) = match BuiltinModel::parse(spec) {
        Ok(model) if !path.exists() => {
            let series = model.simulate(s.n, s.seed)?;
            (
                NamedSeries {
                    names: default_names(series.dim()),
                    series,
                },
                Some(model),
            )
        }
        _ if !path.is_file() => {
            return Err(std::io::Error::new(
                std::io::ErrorKind::NotFound,
                format!("data file '{spec}' not found"),
            )
            .into())
        }
        _ => (
            read_series_csv(
                path,
                &ColumnSelector::parse(s.columns.as_deref().unwrap_or("")),
            )?,
            None,
        ),
    };
    let mut series = named.series;
    if s.diff {
        series = series.difference()?;
    }
    if s.standardize {
        series = series.standardize()?;
    }
    let untouched = !s.diff && !s.standardize;
    Ok(Input {
        names: named.names,
        series,
        model: model.filter(|_| untouched),
        source: spec.into(),
    })
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    Ok(())
}

fn auto_max_order(z: &TimeSeries) -> usize {
    AUTO_MAX_ORDER.min(max_identifiable_order(z.len(), z.dim()))
}

fn aic_order(z: &TimeSeries) -> Result<usize> {
    let p_max = auto_max_order(z);
    if p_max == 0 {
        return Err(Error::InsufficientData(format!(
            "n = {} is too short to fit any VAR order in d = {}",
            z.len(),
            z.dim()
        )));
    }
    elbow_table(z, p_max)?
        .aic_order()
        .ok_or_else(|| Error::InsufficientData("no admissible VAR order".into()))
}

fn truth_on_grid(model: BuiltinModel, grid: &FrequencyGrid) -> Result<Vec<CMatrix>> {
    Ok(model
        .spectral_density_on_grid(grid)?
        .into_iter()
        .map(|m| m.into_matrix())
        .collect())
}

fn file_slug(label: &str) -> String {
    let mut s = String::new();
    for ch in label.chars() {
        if ch.is_ascii_alphanumeric() {
            s.push(ch.to_ascii_lowercase());
        } else if !s.ends_with('_') && !s.is_empty() {
            s.push('_');
        }
    }
    s.trim_end_matches('_').to_string()
}

pub fn elbow(s: &Settings) -> Result<()> {
    let input = load_input(s)?;
    let z = &input.series;
    let bound = max_identifiable_order(z.len(), z.dim());
    let p_max = s.pmax.unwrap_or_else(|| auto_max_order(z));
    if p_max > bound {
        return Err(Error::InvalidConfig(format!(
            "--pmax {p_max} exceeds the largest identifiable order {bound} for n = {}, d = {}",
            z.len(),
            z.dim()
        )));
    }
    let table = elbow_table(z, p_max)?;
    create_dir(&s.out)?;
    write_text(&s.out.join("elbow.csv"), &table.to_csv())?;
    let nll: Vec<(f64, f64)> = table
        .rows
        .iter()
        .map(|r| (r.order as f64, r.neg_max_loglik))
        .collect();
    let aic: Vec<(f64, f64)> = table
        .rows
        .iter()
        .map(|r| (r.order as f64, r.aic / 2.0))
        .collect();
    let svg = svg_plot(
        &format!("Order selection ({}, n = {})", input.source, z.len()),
        "VAR order p",
        "value",
        &[
            Line::new("negative max log-likelihood", nll, PALETTE[0]),
            Line::new("AIC / 2", aic, PALETTE[1]).dashed(),
        ],
    );
    write_text(&s.out.join("elbow.svg"), &svg)?;
    match table.aic_order() {
        Some(p) => println!(
            "AIC order: {p} (table in {})",
            s.out.join("elbow.csv").display()
        ),
        None => println!("table in {}", s.out.join("elbow.csv").display()),
    }
    Ok(())
}

fn resolve_procedure(s: &Settings, z: &TimeSeries) -> Result<Procedure> {
    match s.procedure {
        ProcedureName::Vnp => match s.order {
            None | Some(0) => Ok(Procedure::Vnp),
            Some(p) => Err(Error::InvalidConfig(format!(
                "vnp has no working model, so --order {p} does not apply (use --procedure vnpc)"
            ))),
        },
        ProcedureName::Vnpc => match s.order {
            Some(0) => Err(Error::InvalidConfig(
                "vnpc needs a working order p >= 1; for a white-noise working model use --procedure vnp".into(),
            )),
            Some(order) => Ok(Procedure::Vnpc { order }),
            None => Ok(Procedure::Vnpc { order: aic_order(z)? }),
        },
        ProcedureName::Var => match s.order {
            Some(0) => Err(Error::InvalidConfig("the var procedure needs --order >= 1".into())),
            Some(order) => Ok(Procedure::Var { order }),
            None => Ok(Procedure::Var { order: aic_order(z)? }),
        },
    }
}

fn mcmc_config(s: &Settings, procedure: Procedure) -> Result<McmcConfig> {
    let cfg = McmcConfig {
        iterations: s.iters,
        burn_in: s.burnin,
        thin: s.thin,
        truncation: s.truncation,
        seed: s.seed,
        procedure,
        bernstein: BernsteinConfig::new(s.kmax, 0.1, 0.9)?,
        initial_k: McmcConfig::default().initial_k.min(s.kmax),
        ..McmcConfig::default()
    };
    cfg.validate()?;
    Ok(cfg)
}

/// Deterministic record of a fit: same inputs give byte-identical JSON.
#[derive(Serialize)]
struct FitSummary<'a> {
    data: &'a str,
    columns: &'a [String],
    n: usize,
    d: usize,
    diff: bool,
    standardize: bool,
    procedure: Procedure,
    label: String,
    iterations: usize,
    burn_in: usize,
    thin: usize,
    truncation: Option<usize>,
    k_max: usize,
    seed: u64,
    retained_draws: usize,
    level: f64,
    acceptance: AcceptanceRates,
    k_median: Option<f64>,
    sigma: &'a [f64],
    uniform_xi: f64,
    band_widths: Vec<(String, f64)>,
    truth: Option<&'a TruthComparison>,
    files: &'a [String],
}

#[derive(Serialize)]
struct RunInfo<'a> {
    status: &'a str,
    error: Option<String>,
    wall_seconds: f64,
    files: &'a [String],
    partial: bool,
}

struct Written {
    dir: PathBuf,
    files: Vec<String>,
}

impl Written {
    fn path(&mut self, name: &str) -> PathBuf {
        self.files.push(name.into());
        self.dir.join(name)
    }
}

pub fn fit(s: &Settings) -> Result<()> {
    let start = Instant::now();
    let input = load_input(s)?;
    let procedure = resolve_procedure(s, &input.series)?;
    let cfg = mcmc_config(s, procedure)?;
    create_dir(&s.out)?;
    let mut written = Written {
        dir: s.out.clone(),
        files: Vec::new(),
    };
    eprintln!(
        "fitting {} to {} (n = {}, d = {}), {} iterations",
        procedure.label(),
        input.source,
        input.series.len(),
        input.series.dim(),
        cfg.iterations
    );
    let outcome = fit_outputs(s, &input, &cfg, &mut written);
    let info = RunInfo {
        status: if outcome.is_ok() { "ok" } else { "failed" },
        error: outcome.as_ref().err().map(|e| e.to_string()),
        wall_seconds: start.elapsed().as_secs_f64(),
        files: &written.files,
        partial: outcome.is_err() && !written.files.is_empty(),
    };
    let info_written = write_json(&s.out.join("run_info.json"), &info);
    outcome?;
    info_written?;
    println!(
        "wrote {} files to {}",
        written.files.len() + 1,
        s.out.display()
    );
    Ok(())
}

fn fit_outputs(s: &Settings, input: &Input, cfg: &McmcConfig, w: &mut Written) -> Result<()> {
    let draws = run_chain(&input.series, cfg)?;
    write_draws(&w.path("draws.bin"), &draws)?;
    write_traces_csv(&w.path("traces.csv"), &draws.trace)?;

    let mut bundle = SummaryBundle::new(&draws, s.level)?;
    let truth = match input.model {
        Some(model) => {
            let t = truth_on_grid(model, &draws.grid)?;
            bundle.compare_truth(&draws.grid, &t)?;
            Some(t)
        }
        None => None,
    };
    for p in write_summary_csvs(&s.out, &bundle)? {
        w.files.push(
            p.file_name()
                .map(|f| f.to_string_lossy().into_owned())
                .unwrap_or_default(),
        );
    }
    for coh in &bundle.coherency {
        let name = format!("coherency_{}{}.csv", coh.pair.0 + 1, coh.pair.1 + 1);
        write_coherency_csv(&w.path(&name), coh)?;
    }
    if s.plots {
        write_fit_plots(w, input, &draws, &bundle, truth.as_deref())?;
    }

    let mut ks: Vec<f64> = draws.k.iter().map(|&k| k as f64).collect();
    ks.sort_by(f64::total_cmp);
    w.files.push("summary.json".into());
    let summary = FitSummary {
        data: &input.source,
        columns: &input.names,
        n: input.series.len(),
        d: input.series.dim(),
        diff: s.diff,
        standardize: s.standardize,
        procedure: cfg.procedure,
        label: cfg.procedure.label(),
        iterations: cfg.iterations,
        burn_in: cfg.burn_in,
        thin: cfg.thin,
        truncation: cfg.truncation,
        k_max: s.kmax,
        seed: cfg.seed,
        retained_draws: draws.len(),
        level: s.level,
        acceptance: draws.acceptance,
        k_median: (!ks.is_empty()).then(|| median_sorted(&ks)),
        sigma: &draws.sigma,
        uniform_xi: bundle.region.xi,
        band_widths: bundle
            .component_labels()
            .into_iter()
            .zip(bundle.widths.iter().copied())
            .collect(),
        truth: bundle.truth.as_ref(),
        files: &w.files,
    };
    write_json(&s.out.join("summary.json"), &summary)?;
    if let Some(t) = &bundle.truth {
        println!(
            "L1 = {}, L2 = {}, truth inside uniform band: {}",
            fmt17(t.l1),
            fmt17(t.l2),
            t.covered
        );
    }
    Ok(())
}

fn write_fit_plots(
    w: &mut Written,
    input: &Input,
    draws: &PosteriorDraws,
    b: &SummaryBundle,
    truth: Option<&[CMatrix]>,
) -> Result<()> {
    let om = &b.omegas;
    let series = |values: &[f64], c: usize| -> Vec<(f64, f64)> {
        om.iter().copied().zip(b.component(values, c)).collect()
    };
    for (c, label) in b.component_labels().into_iter().enumerate() {
        let mut lines = vec![
            Line::new("posterior median", series(&b.median, c), PALETTE[0]),
            Line::new("pointwise band", series(&b.lo_pointwise, c), PALETTE[2]).dashed(),
            Line::new("", series(&b.hi_pointwise, c), PALETTE[2]).dashed(),
            Line::new("uniform band", series(&b.region.lower, c), PALETTE[3]).dashed(),
            Line::new("", series(&b.region.upper, c), PALETTE[3]).dashed(),
        ];
        if let Some(t) = truth {
            let (i, j) = (c / b.d, c % b.d);
            let pts = om
                .iter()
                .zip(t)
                .map(|(&o, m)| {
                    let z = m[(i.min(j), i.max(j))];
                    (o, if i <= j { z.re } else { z.im })
                })
                .collect();
            lines.push(Line::new("true", pts, PALETTE[1]));
        }
        let title = format!("{label} of {} ({})", input.source, draws.procedure.label());
        write_text(
            &w.path(&format!("spectrum_{label}.svg")),
            &svg_plot(&title, "omega", &label, &lines),
        )?;
    }
    for coh in &b.coherency {
        let (i, j) = (coh.pair.0 + 1, coh.pair.1 + 1);
        let pts = |v: &[f64]| {
            om.iter()
                .copied()
                .zip(v.iter().copied())
                .collect::<Vec<_>>()
        };
        let lines = [
            Line::new("posterior median", pts(&coh.median), PALETTE[0]),
            Line::new("pointwise band", pts(&coh.lower), PALETTE[2]).dashed(),
            Line::new("", pts(&coh.upper), PALETTE[2]).dashed(),
        ];
        let svg = svg_plot(
            &format!("Squared coherency {i}-{j}"),
            "omega",
            "coherency",
            &lines,
        );
        write_text(&w.path(&format!("coherency_{i}{j}.svg")), &svg)?;
    }
    let lp: Vec<(f64, f64)> = draws
        .trace
        .iter()
        .map(|t| (t.iter as f64, t.log_posterior))
        .collect();
    let k: Vec<(f64, f64)> = draws
        .trace
        .iter()
        .map(|t| (t.iter as f64, t.k as f64))
        .collect();
    write_text(
        &w.path("trace_log_posterior.svg"),
        &svg_plot(
            "Log posterior",
            "iteration",
            "log posterior",
            &[Line::new("", lp, PALETTE[0])],
        ),
    )?;
    write_text(
        &w.path("trace_k.svg"),
        &svg_plot(
            "Bernstein degree",
            "iteration",
            "k",
            &[Line::new("", k, PALETTE[0])],
        ),
    )?;
    Ok(())
}

fn study_model(s: &Settings) -> Result<BuiltinModel> {
    let spec = s.data.as_deref().unwrap_or("vma1");
    BuiltinModel::parse(spec).map_err(|_| {
        Error::InvalidConfig(format!(
            "study needs a builtin model for --data (var2 or vma1), got '{spec}'"
        ))
    })
}

pub fn study(s: &Settings) -> Result<()> {
    let start = Instant::now();
    let model = study_model(s)?;
    let mut cfg = StudyConfig::standard(model, s.n, s.reps, s.seed);
    let proto = mcmc_config(s, Procedure::Vnp)?;
    cfg.mcmc = proto;
    cfg.workers = s.workers;
    cfg.level = s.level;
    if let Some(order) = s.order {
        if order == 0 {
            return Err(Error::InvalidConfig(
                "study --order sets the VNPC working order and must be >= 1".into(),
            ));
        }
        cfg.arms[0] = Arm::Fixed(Procedure::Vnpc { order });
    }
    cfg.validate()?;
    create_dir(&s.out)?;
    let arms = cfg.arms.clone();
    let out = s.out.clone();
    eprintln!(
        "study: {} replications of {} (n = {}) with {} on {} worker(s)",
        cfg.replications,
        model.name(),
        cfg.n,
        arms.iter().map(Arm::label).collect::<Vec<_>>().join(", "),
        cfg.workers
    );
    let observe = |o: &ReplicationOutput<'_>| {
        let r = o.result;
        let label = arms[r.arm].label();
        let dir = out
            .join(format!("rep_{:03}", r.rep))
            .join(file_slug(&label));
        let saved = create_dir(&dir)
            .and_then(|_| write_summary_csvs(&dir, o.summary).map(|_| ()))
            .and_then(|_| write_traces_csv(&dir.join("traces.csv"), &o.draws.trace))
            .and_then(|_| write_json(&dir.join("result.json"), r));
        if let Err(e) = saved {
            eprintln!("  warning: could not write {}: {e}", dir.display());
        }
        eprintln!(
            "  rep {:>3} {:<9} L1 {:.4} L2 {:.4} covered {}",
            r.rep, label, r.l1, r.l2, r.covered
        );
    };
    let report = run_study(&cfg, &observe)?;
    let d = 2;
    write_text(&s.out.join("study_report.csv"), &report.to_csv(d))?;
    write_text(
        &s.out.join("study_replications.csv"),
        &report.replications_csv(&cfg.arms),
    )?;
    write_json(&s.out.join("summary.json"), &(&cfg, &report))?;
    write_json(
        &s.out.join("run_info.json"),
        &serde_json::json!({ "wall_seconds": start.elapsed().as_secs_f64(), "failures": report.failures.len() }),
    )?;
    if s.plots {
        let lines: Vec<Line> = arms
            .iter()
            .enumerate()
            .map(|(a, arm)| {
                let pts = report
                    .results
                    .iter()
                    .filter(|r| r.arm == a)
                    .map(|r| (r.rep as f64, r.l1))
                    .collect();
                Line::new(arm.label(), pts, PALETTE[a % PALETTE.len()])
            })
            .collect();
        write_text(
            &s.out.join("study_l1.svg"),
            &svg_plot(
                "L1 error per replication",
                "replication",
                "L1 error",
                &lines,
            ),
        )?;
    }
    for (rep, arm, msg) in &report.failures {
        eprintln!("  rep {rep} {} failed: {msg}", arms[*arm].label());
    }
    print!("{}", report.to_csv(d));
    if report.results.is_empty() {
        return Err(report
            .failures
            .first()
            .map(|f| Error::StudyFailed(format!("every replication failed; first error: {}", f.2)))
            .unwrap_or_else(|| Error::StudyFailed("study produced no results".into())));
    }
    Ok(())
}

pub fn simulate(s: &Settings) -> Result<()> {
    let spec = s.data.as_deref().unwrap_or("vma1");
    let model = BuiltinModel::parse(spec)?;
    let z = model.simulate(s.n, s.seed)?;
    if let Some(parent) = s.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(parent)?;
    }
    write_series_csv(&s.out, &z, &default_names(z.dim()))?;
    println!(
        "wrote {} observations of {} to {}",
        z.len(),
        model.name(),
        s.out.display()
    );
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slugs_are_file_safe() {
        assert_eq!(file_slug("VNPC(1)"), "vnpc_1");
        assert_eq!(file_slug("VAR(AIC)"), "var_aic");
        assert_eq!(file_slug("VNP"), "vnp");
    }
}
