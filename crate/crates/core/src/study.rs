//! Replication study: simulate from a builtin model, fit several procedures,
//! and aggregate accuracy, coverage and band widths against the analytic
//! spectral density.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::io::fmt17;
use crate::likelihood::SpectralData;
use crate::linalg::CMatrix;
use crate::sampler::{run_chain_on, McmcConfig, PosteriorDraws, Procedure};
use crate::summary::{median_sorted, SummaryBundle};
use crate::timefreq::FrequencyGrid;
use crate::var::{elbow_table, BuiltinModel};

/// Stream slots reserved per replication (slot 0 simulates the data).
const STREAMS_PER_REP: u64 = 16;

/// One procedure of a study.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Arm {
    Fixed(Procedure),
    /// Parametric VAR with the order chosen by AIC over `1..=max_order`.
    VarAic {
        max_order: usize,
    },
}

impl Arm {
    pub fn label(&self) -> String {
        match self {
            Arm::Fixed(p) => p.label(),
            Arm::VarAic { .. } => "VAR(AIC)".into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StudyConfig {
    pub model: BuiltinModel,
    pub n: usize,
    pub replications: usize,
    pub arms: Vec<Arm>,
    pub master_seed: u64,
    /// Chain settings shared by every arm; seed, stream and procedure are
    /// overwritten per replication.
    pub mcmc: McmcConfig,
    pub workers: usize,
    pub level: f64,
}

impl StudyConfig {
    /// Default arms: VNPC(1), VNP and VAR with AIC order selection.
    pub fn standard(model: BuiltinModel, n: usize, replications: usize, master_seed: u64) -> Self {
        Self {
            model,
            n,
            replications,
            arms: vec![
                Arm::Fixed(Procedure::Vnpc { order: 1 }),
                Arm::Fixed(Procedure::Vnp),
                Arm::VarAic { max_order: 10 },
            ],
            master_seed,
            mcmc: McmcConfig::default(),
            workers: 1,
            level: 0.9,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.replications == 0 {
            return Err(Error::InvalidConfig(
                "a study needs at least one replication".into(),
            ));
        }
        if self.arms.is_empty() {
            return Err(Error::InvalidConfig(
                "a study needs at least one procedure".into(),
            ));
        }
        if self.arms.len() as u64 >= STREAMS_PER_REP {
            return Err(Error::InvalidConfig(format!(
                "at most {} procedures per study",
                STREAMS_PER_REP - 1
            )));
        }
        self.mcmc.validate()
    }

    fn stream(&self, rep: usize, slot: usize) -> u64 {
        rep as u64 * STREAMS_PER_REP + slot as u64
    }
}

/// Outcome of one procedure on one replicated data set.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ReplicationResult {
    pub rep: usize,
    pub arm: usize,
    pub order: usize,
    pub l1: f64,
    pub l2: f64,
    pub covered: bool,
    pub xi: f64,
    pub widths: Vec<f64>,
}

/// Aggregated row of the study report.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ReportRow {
    pub model: String,
    pub n: usize,
    pub procedure: String,
    pub replications: usize,
    pub failed: usize,
    pub mean_l1: f64,
    pub mean_l2: f64,
    pub coverage: f64,
    /// Median over replications of each component's band width.
    pub median_widths: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StudyReport {
    pub rows: Vec<ReportRow>,
    pub results: Vec<ReplicationResult>,
    pub failures: Vec<(usize, usize, String)>,
}

impl StudyReport {
    pub fn row(&self, label: &str) -> Option<&ReportRow> {
        self.rows.iter().find(|r| r.procedure == label)
    }

    pub fn to_csv(&self, d: usize) -> String {
        let labels: Vec<String> = (0..d * d)
            .map(|c| crate::summary::component_label(d, c))
            .collect();
        let mut s = String::from("model,n,procedure,replications,failed,mean_l1,mean_l2,coverage");
        for l in &labels {
            s.push_str(&format!(",width_{l}"));
        }
        s.push('\n');
        for r in &self.rows {
            s.push_str(&format!(
                "{},{},{},{},{},{},{},{}",
                r.model,
                r.n,
                r.procedure,
                r.replications,
                r.failed,
                fmt17(r.mean_l1),
                fmt17(r.mean_l2),
                fmt17(r.coverage)
            ));
            for w in &r.median_widths {
                s.push(',');
                s.push_str(&fmt17(*w));
            }
            s.push('\n');
        }
        s
    }

    pub fn replications_csv(&self, arms: &[Arm]) -> String {
        let mut s = String::from("rep,procedure,order,l1,l2,covered,xi\n");
        for r in &self.results {
            s.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                r.rep,
                arms[r.arm].label(),
                r.order,
                fmt17(r.l1),
                fmt17(r.l2),
                r.covered as u8,
                fmt17(r.xi)
            ));
        }
        s
    }
}

/// Per-replication artifacts handed to an observer (for example to write a
/// replication subdirectory).
pub struct ReplicationOutput<'a> {
    pub result: &'a ReplicationResult,
    pub draws: &'a PosteriorDraws,
    pub summary: &'a SummaryBundle,
}

fn run_one(
    cfg: &StudyConfig,
    rep: usize,
    truth: &[CMatrix],
    grid: &FrequencyGrid,
    observe: &(dyn Fn(&ReplicationOutput<'_>) + Sync),
) -> Vec<std::result::Result<ReplicationResult, (usize, String)>> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.master_seed);
    rng.set_stream(cfg.stream(rep, 0));
    let z = match cfg.model.simulate_with(cfg.n, &mut rng) {
        Ok(z) => z,
        Err(e) => {
            return (0..cfg.arms.len())
                .map(|a| Err((a, e.to_string())))
                .collect()
        }
    };
    let data = match SpectralData::new(z) {
        Ok(d) => d,
        Err(e) => {
            return (0..cfg.arms.len())
                .map(|a| Err((a, e.to_string())))
                .collect()
        }
    };
    cfg.arms
        .iter()
        .enumerate()
        .map(|(a, arm)| {
            let attempt = || -> Result<ReplicationResult> {
                let procedure = match *arm {
                    Arm::Fixed(p) => p,
                    Arm::VarAic { max_order } => {
                        let table = elbow_table(data.series(), max_order)?;
                        let order = table
                            .aic_order()
                            .filter(|&p| p >= 1)
                            .or_else(|| {
                                table
                                    .rows
                                    .iter()
                                    .filter(|r| r.order >= 1)
                                    .min_by(|a, b| a.aic.total_cmp(&b.aic))
                                    .map(|r| r.order)
                            })
                            .ok_or_else(|| {
                                Error::InsufficientData("no admissible VAR order".into())
                            })?;
                        Procedure::Var { order }
                    }
                };
                let mcmc = McmcConfig {
                    seed: cfg.master_seed,
                    stream: cfg.stream(rep, a + 1),
                    procedure,
                    ..cfg.mcmc.clone()
                };
                let draws = run_chain_on(&data, &mcmc)?;
                let mut summary = SummaryBundle::new(&draws, cfg.level)?;
                let cmp = summary.compare_truth(grid, truth)?.clone();
                let result = ReplicationResult {
                    rep,
                    arm: a,
                    order: procedure.order(),
                    l1: cmp.l1,
                    l2: cmp.l2,
                    covered: cmp.covered,
                    xi: summary.region.xi,
                    widths: summary.widths.clone(),
                };
                observe(&ReplicationOutput {
                    result: &result,
                    draws: &draws,
                    summary: &summary,
                });
                Ok(result)
            };
            attempt().map_err(|e| (a, e.to_string()))
        })
        .collect()
}

/// Runs the study on `cfg.workers` threads. Replications are claimed from a
/// shared counter and aggregated in replication order, so the report does not
/// depend on the worker count.
pub fn run_study(
    cfg: &StudyConfig,
    observe: &(dyn Fn(&ReplicationOutput<'_>) + Sync),
) -> Result<StudyReport> {
    cfg.validate()?;
    let grid = FrequencyGrid::new(cfg.n)?;
    let truth: Vec<CMatrix> = cfg
        .model
        .spectral_density_on_grid(&grid)?
        .into_iter()
        .map(|m| m.into_matrix())
        .collect();
    let slots: Vec<Mutex<Option<Vec<_>>>> =
        (0..cfg.replications).map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    let workers = cfg.workers.clamp(1, cfg.replications);
    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let rep = next.fetch_add(1, Ordering::Relaxed);
                if rep >= cfg.replications {
                    break;
                }
                let out = run_one(cfg, rep, &truth, &grid, observe);
                *slots[rep].lock().expect("result slot poisoned") = Some(out);
            });
        }
    });

    let mut results = Vec::new();
    let mut failures = Vec::new();
    for (rep, slot) in slots.into_iter().enumerate() {
        for r in slot
            .into_inner()
            .expect("result slot poisoned")
            .unwrap_or_default()
        {
            match r {
                Ok(r) => results.push(r),
                Err((arm, msg)) => failures.push((rep, arm, msg)),
            }
        }
    }
    let rows = cfg
        .arms
        .iter()
        .enumerate()
        .map(|(a, arm)| {
            let ok: Vec<&ReplicationResult> = results.iter().filter(|r| r.arm == a).collect();
            let m = ok.len() as f64;
            let comps = ok.first().map_or(0, |r| r.widths.len());
            let median_widths = (0..comps)
                .map(|c| {
                    let mut w: Vec<f64> = ok.iter().map(|r| r.widths[c]).collect();
                    w.sort_by(f64::total_cmp);
                    median_sorted(&w)
                })
                .collect();
            ReportRow {
                model: cfg.model.name().into(),
                n: cfg.n,
                procedure: arm.label(),
                replications: ok.len(),
                failed: failures.iter().filter(|f| f.1 == a).count(),
                mean_l1: ok.iter().map(|r| r.l1).sum::<f64>() / m,
                mean_l2: ok.iter().map(|r| r.l2).sum::<f64>() / m,
                coverage: ok.iter().filter(|r| r.covered).count() as f64 / m,
                median_widths,
            }
        })
        .collect();
    Ok(StudyReport {
        rows,
        results,
        failures,
    })
}
