//! Batch driver for six-factor OLS and IVGMM estimation over portfolio sets.
//!
//! The `eivgmm` binary is a thin wrapper over [`execute_run`],
//! [`validate`], [`factor_stats`] and [`simulate::write_simulation`].

pub mod config;
pub mod pipeline;
pub mod report;
pub mod simulate;

use std::path::{Path, PathBuf};

use eivgmm_core::{align_panels, descriptive_stats, ColumnStats};

pub use config::{
    Format, InstrumentChoice, Overrides, RunConfig, SetConfig, WeightingChoice, CONFIG_ENV,
};
pub use pipeline::{
    detail_rows, fit_portfolio, load_inputs, run_all, run_portfolio_set, summarize, DetailRow,
    Inputs, PortfolioFit, PortfolioOutcome, PortfolioSummary, SetResult, Status, TermSummary,
};
pub use report::{emit_reports, emit_tratio_screen, ScreenRow};

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("configuration: {0}")]
    Config(String),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{}: {source}", path.display())]
    Ingest {
        path: PathBuf,
        source: eivgmm_core::Error,
    },
    #[error(transparent)]
    Core(#[from] eivgmm_core::Error),
    #[error("writing reports: {0}")]
    Report(String),
}

/// Exit status of a finished run.
pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_PORTFOLIO_ERRORS: i32 = 2;

#[derive(Debug)]
pub struct RunOutcome {
    pub results: Vec<SetResult>,
    pub written: Vec<PathBuf>,
}

impl RunOutcome {
    pub fn error_count(&self) -> usize {
        self.results.iter().map(SetResult::error_count).sum()
    }

    pub fn exit_code(&self) -> i32 {
        if self.error_count() > 0 {
            EXIT_PORTFOLIO_ERRORS
        } else {
            EXIT_OK
        }
    }
}

/// Static checks plus a full load of every input file.
pub fn validate(cfg: &RunConfig) -> Result<Inputs, RunError> {
    cfg.validate()?;
    let inputs = load_inputs(cfg)?;
    let range = cfg.date_range()?;
    for (name, panel) in &inputs.sets {
        align_panels(&[&inputs.factors, panel], Some(range))
            .map_err(|e| RunError::Config(format!("set `{name}`: {e}")))?;
    }
    Ok(inputs)
}

/// Full pipeline: validation, a writability check on the output directory,
/// estimation, reports.
pub fn execute_run(cfg: &RunConfig) -> Result<RunOutcome, RunError> {
    execute_run_into(cfg, &cfg.output_path())
}

pub fn execute_run_into(cfg: &RunConfig, out: &Path) -> Result<RunOutcome, RunError> {
    cfg.validate()?;
    report::ensure_writable(out)?;
    let inputs = validate(cfg)?;
    let results = run_all(cfg, &inputs)?;
    let written = emit_reports(cfg, &results, out)?;
    Ok(RunOutcome { results, written })
}

/// Descriptive statistics of the factor columns over the configured range.
pub fn factor_stats(cfg: &RunConfig) -> Result<Vec<ColumnStats>, RunError> {
    cfg.date_range()?;
    let mut factors_only = cfg.clone();
    factors_only.sets.clear();
    let inputs = load_inputs(&factors_only)?;
    let aligned = align_panels(&[&inputs.factors], Some(cfg.date_range()?))?;
    Ok(descriptive_stats(&aligned.panel)?)
}

/// Statistics as an aligned text table at six significant digits.
pub fn stats_table(stats: &[ColumnStats]) -> String {
    use report::sig6;
    let header = ["column", "count", "mean", "sd", "min", "max"];
    let rows: Vec<[String; 6]> = stats
        .iter()
        .map(|s| {
            [
                s.column.clone(),
                s.count.to_string(),
                sig6(s.mean),
                sig6(s.sd),
                sig6(s.min),
                sig6(s.max),
            ]
        })
        .collect();
    let width: Vec<usize> = (0..6)
        .map(|j| {
            rows.iter()
                .map(|r| r[j].len())
                .chain([header[j].len()])
                .max()
                .unwrap_or(0)
        })
        .collect();
    let mut out = String::new();
    let mut line = |cells: Vec<&str>| {
        let parts: Vec<String> = cells
            .iter()
            .enumerate()
            .map(|(j, c)| {
                if j == 0 {
                    format!("{c:<w$}", w = width[0])
                } else {
                    format!("{c:>w$}", w = width[j])
                }
            })
            .collect();
        out.push_str(parts.join("  ").trim_end());
        out.push('\n');
    };
    line(header.to_vec());
    for r in &rows {
        line(r.iter().map(String::as_str).collect());
    }
    out
}

/// Statistics as CSV at full precision.
pub fn stats_csv(stats: &[ColumnStats]) -> String {
    let mut out = String::from("column,count,mean,sd,min,max\n");
    for s in stats {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            s.column, s.count, s.mean, s.sd, s.min, s.max
        ));
    }
    out
}
