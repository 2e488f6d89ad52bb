//! Run settings from command-line flags and an optional flat `key = value`
//! file. Flags win over file entries; unset values fall back to defaults.

use std::path::{Path, PathBuf};

use clap::Args;
use serde::Serialize;
use vnpc_core::{Error, Result};

#[derive(Args, Clone, Debug, Default)]
pub struct Flags {
    /// CSV file (header row, one column per series) or a builtin model name
    /// (var2, vma1).
    #[arg(long)]
    pub data: Option<String>,
    /// Comma-separated column names or 1-based positions.
    #[arg(long)]
    pub columns: Option<String>,
    /// Subtract each column's mean and divide by its standard deviation.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub standardize: Option<bool>,
    /// Replace the series by its first differences (applied before
    /// standardizing).
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub diff: Option<bool>,
    /// vnpc, vnp or var.
    #[arg(long)]
    pub procedure: Option<String>,
    /// VAR order of the working model (vnpc) or of the parametric fit (var).
    #[arg(long)]
    pub order: Option<usize>,
    /// Largest order of the elbow table.
    #[arg(long)]
    pub pmax: Option<usize>,
    #[arg(long)]
    pub iters: Option<usize>,
    #[arg(long)]
    pub burnin: Option<usize>,
    #[arg(long)]
    pub thin: Option<usize>,
    /// Truncation level of the prior series.
    #[arg(long = "L")]
    pub truncation: Option<usize>,
    /// Largest Bernstein polynomial degree.
    #[arg(long)]
    pub kmax: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory (output file for `simulate`).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Also write SVG plots.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub plots: Option<bool>,
    #[arg(long)]
    pub workers: Option<usize>,
    /// Series length for builtin models.
    #[arg(long)]
    pub n: Option<usize>,
    /// Replications of a study.
    #[arg(long)]
    pub reps: Option<usize>,
    /// Credible level of the bands.
    #[arg(long)]
    pub level: Option<f64>,
    /// Flat `key = value` file with the same keys as the flags.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ProcedureName {
    Vnpc,
    Vnp,
    Var,
}

impl ProcedureName {
    fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "vnpc" => Ok(Self::Vnpc),
            "vnp" => Ok(Self::Vnp),
            "var" => Ok(Self::Var),
            other => Err(Error::InvalidConfig(format!(
                "unknown procedure '{other}' (expected vnpc, vnp or var)"
            ))),
        }
    }
}

/// Fully resolved settings.
#[derive(Clone, Debug, Serialize)]
pub struct Settings {
    pub data: Option<String>,
    pub columns: Option<String>,
    pub standardize: bool,
    pub diff: bool,
    pub procedure: ProcedureName,
    pub order: Option<usize>,
    pub pmax: Option<usize>,
    pub iters: usize,
    pub burnin: usize,
    pub thin: usize,
    pub truncation: Option<usize>,
    pub kmax: usize,
    pub seed: u64,
    pub out: PathBuf,
    pub plots: bool,
    pub workers: usize,
    pub n: usize,
    pub reps: usize,
    pub level: f64,
}

fn parse_value<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::InvalidConfig(format!("invalid value '{value}' for '{key}'")))
}

/// Reads a flat `key = value` file; `#` starts a comment.
pub fn read_config_file(path: &Path) -> Result<Flags> {
    let text = std::fs::read_to_string(path)?;
    parse_config(&text)
}

pub fn parse_config(text: &str) -> Result<Flags> {
    let mut f = Flags::default();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            Error::InvalidConfig(format!(
                "config line {}: expected 'key = value'",
                lineno + 1
            ))
        })?;
        let (key, value) = (key.trim().trim_start_matches("--"), value.trim());
        match key {
            "data" => f.data = Some(value.into()),
            "columns" => f.columns = Some(value.into()),
            "standardize" => f.standardize = Some(parse_value(key, value)?),
            "diff" => f.diff = Some(parse_value(key, value)?),
            "procedure" => f.procedure = Some(value.into()),
            "order" => f.order = Some(parse_value(key, value)?),
            "pmax" => f.pmax = Some(parse_value(key, value)?),
            "iters" => f.iters = Some(parse_value(key, value)?),
            "burnin" => f.burnin = Some(parse_value(key, value)?),
            "thin" => f.thin = Some(parse_value(key, value)?),
            "L" => f.truncation = Some(parse_value(key, value)?),
            "kmax" => f.kmax = Some(parse_value(key, value)?),
            "seed" => f.seed = Some(parse_value(key, value)?),
            "out" => f.out = Some(value.into()),
            "plots" => f.plots = Some(parse_value(key, value)?),
            "workers" => f.workers = Some(parse_value(key, value)?),
            "n" => f.n = Some(parse_value(key, value)?),
            "reps" => f.reps = Some(parse_value(key, value)?),
            "level" => f.level = Some(parse_value(key, value)?),
            other => {
                return Err(Error::InvalidConfig(format!(
                    "config line {}: unknown key '{other}'",
                    lineno + 1
                )))
            }
        }
    }
    Ok(f)
}

impl Flags {
    /// Entries of `self` override those of `base`.
    fn over(self, base: Flags) -> Flags {
        Flags {
            data: self.data.or(base.data),
            columns: self.columns.or(base.columns),
            standardize: self.standardize.or(base.standardize),
            diff: self.diff.or(base.diff),
            procedure: self.procedure.or(base.procedure),
            order: self.order.or(base.order),
            pmax: self.pmax.or(base.pmax),
            iters: self.iters.or(base.iters),
            burnin: self.burnin.or(base.burnin),
            thin: self.thin.or(base.thin),
            truncation: self.truncation.or(base.truncation),
            kmax: self.kmax.or(base.kmax),
            seed: self.seed.or(base.seed),
            out: self.out.or(base.out),
            plots: self.plots.or(base.plots),
            workers: self.workers.or(base.workers),
            n: self.n.or(base.n),
            reps: self.reps.or(base.reps),
            level: self.level.or(base.level),
            config: None,
        }
    }

    pub fn resolve(self, default_out: &str) -> Result<Settings> {
        let file = match &self.config {
            Some(path) => read_config_file(path)?,
            None => Flags::default(),
        };
        let f = self.over(file);
        let workers = f
            .workers
            .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
        let s = Settings {
            data: f.data,
            columns: f.columns,
            standardize: f.standardize.unwrap_or(false),
            diff: f.diff.unwrap_or(false),
            procedure: ProcedureName::parse(f.procedure.as_deref().unwrap_or("vnpc"))?,
            order: f.order,
            pmax: f.pmax,
            iters: f.iters.unwrap_or(80_000),
            burnin: f.burnin.unwrap_or(30_000),
            thin: f.thin.unwrap_or(5),
            truncation: f.truncation,
            kmax: f.kmax.unwrap_or(300),
            seed: f.seed.unwrap_or(0),
            out: f.out.unwrap_or_else(|| default_out.into()),
            plots: f.plots.unwrap_or(false),
            workers,
            n: f.n.unwrap_or(256),
            reps: f.reps.unwrap_or(30),
            level: f.level.unwrap_or(0.9),
        };
        if s.workers == 0 {
            return Err(Error::InvalidConfig("--workers must be at least 1".into()));
        }
        if s.kmax == 0 {
            return Err(Error::InvalidConfig("--kmax must be at least 1".into()));
        }
        if !(s.level > 0.0 && s.level < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "--level {} outside (0, 1)",
                s.level
            )));
        }
        Ok(s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_file_parses_and_flags_override() {
        let file = parse_config(
            "# run\niters = 500\nburnin=100\nplots = true\nprocedure = vnp # inline\nL = 7\n",
        )
        .unwrap();
        assert_eq!(file.iters, Some(500));
        assert_eq!(file.truncation, Some(7));
        let flags = Flags {
            iters: Some(900),
            ..Flags::default()
        };
        let merged = flags.over(file);
        assert_eq!(merged.iters, Some(900));
        assert_eq!(merged.burnin, Some(100));
        assert_eq!(merged.plots, Some(true));
    }

    #[test]
    fn config_errors_are_validation_errors() {
        for text in ["iters = many", "colour = blue", "just words"] {
            let err = parse_config(text).unwrap_err();
            assert_eq!(err.kind(), vnpc_core::ErrorKind::Validation, "{text}");
        }
    }

    #[test]
    fn defaults_apply() {
        let s = Flags::default().resolve("out").unwrap();
        assert_eq!(
            (s.iters, s.burnin, s.thin, s.kmax),
            (80_000, 30_000, 5, 300)
        );
        assert_eq!(s.procedure, ProcedureName::Vnpc);
        assert!(Flags {
            procedure: Some("arima".into()),
            ..Flags::default()
        }
        .resolve("o")
        .is_err());
    }
}
