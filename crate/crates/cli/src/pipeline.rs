//! Loading inputs and estimating every portfolio of a set.

use std::path::Path;

use eivgmm_core::diagnostics::{
    exogeneity_test, hausman_test, relevance_test, relevance_verdicts, ExogeneityReport,
    HausmanReport, OverallRelevance, RelevanceRecord,
};
use eivgmm_core::gmm::{
    fitted_regressors, gmm_distance_estimate, gmm_estimate, GmmFit, GmmSpec, Weighting,
};
use eivgmm_core::instruments::{build_cumulant_instruments, robust_filter};
use eivgmm_core::regression::{Method, INTERCEPT};
use eivgmm_core::{
    align_panels, ols_fit, parse_ff_csv, parse_quarterly_csv, quarterly_to_monthly, DesignMatrix,
    FactorPanel, FitResult, NamedMatrix, ParseOptions, YearMonth,
};
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{Frequency, InstrumentChoice, RunConfig, WeightingChoice};
use crate::RunError;

/// Factor panel and one portfolio panel per configured set, in set-name order.
#[derive(Debug, Clone)]
pub struct Inputs {
    pub factors: FactorPanel,
    pub sets: Vec<(String, FactorPanel)>,
}

fn read(path: &Path) -> Result<String, RunError> {
    std::fs::read_to_string(path).map_err(|source| RunError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn ingest<T>(path: &Path, r: eivgmm_core::Result<T>) -> Result<T, RunError> {
    r.map_err(|source| RunError::Ingest {
        path: path.to_path_buf(),
        source,
    })
}

/// Reads a panel in either the normalized `date,...` layout or the French
/// library layout.
pub fn load_panel(path: &Path) -> Result<FactorPanel, RunError> {
    let text = read(path)?;
    let first = text.lines().find(|l| !l.trim().is_empty()).unwrap_or("");
    let parsed = if first.trim_start().starts_with("date,") {
        FactorPanel::from_csv(&text)
    } else {
        parse_ff_csv(&text, &ParseOptions::default())
    };
    ingest(path, parsed)
}

fn load_labor(cfg: &RunConfig, file: &str) -> Result<FactorPanel, RunError> {
    let path = cfg.resolve(file);
    match cfg.labor_income_frequency {
        Frequency::Quarterly => {
            let q = ingest(&path, parse_quarterly_csv(&read(&path)?))?;
            let series = ingest(&path, quarterly_to_monthly(&q))?;
            Ok(series.into_panel(&cfg.labor_income_name))
        }
        Frequency::Monthly => {
            let mut p = load_panel(&path)?;
            if p.names().len() != 1 {
                return Err(RunError::Config(format!(
                    "monthly labor income file `{}` must hold exactly one column, found {}",
                    path.display(),
                    p.names().len()
                )));
            }
            let from = p.names()[0].clone();
            ingest(&path, p.rename(&from, &cfg.labor_income_name))?;
            Ok(p)
        }
    }
}

fn factor_columns(cfg: &RunConfig) -> Vec<String> {
    let mut cols = cfg.regressors();
    cols.extend(cfg.named_instruments.iter().cloned());
    cols.extend(cfg.risk_free.iter().cloned());
    cols
}

/// Reads every file the configuration references.
pub fn load_inputs(cfg: &RunConfig) -> Result<Inputs, RunError> {
    let fpath = cfg.resolve(&cfg.factors);
    let mut factors = load_panel(&fpath)?;
    if let Some(file) = &cfg.labor_income {
        let labor = load_labor(cfg, file)?;
        factors = ingest(&fpath, align_panels(&[&factors, &labor], None))?.panel;
    }
    let rescale: Vec<(String, f64)> = cfg.rescale.iter().map(|(k, v)| (k.clone(), *v)).collect();
    for (name, factor) in rescale {
        ingest(&fpath, factors.rescale(&[name], factor))?;
    }
    for c in factor_columns(cfg) {
        if !factors.names().contains(&c) {
            return Err(RunError::Config(format!(
                "column `{c}` is not among the factor columns [{}]",
                factors.names().join(", ")
            )));
        }
    }

    let mut sets = Vec::with_capacity(cfg.sets.len());
    for (name, set) in &cfg.sets {
        let path = cfg.resolve(&set.file);
        let mut panel = load_panel(&path)?;
        if let Some(cols) = &set.portfolios {
            panel = ingest(&path, panel.select(cols))?;
        }
        if let Some(clash) = panel.names().iter().find(|n| factors.names().contains(n)) {
            return Err(RunError::Config(format!(
                "portfolio `{clash}` in set `{name}` shares its name with a factor column"
            )));
        }
        sets.push((name.clone(), panel));
    }
    Ok(Inputs { factors, sets })
}

fn named_matrix(panel: &FactorPanel, names: &[String]) -> eivgmm_core::Result<NamedMatrix> {
    let cols = names
        .iter()
        .map(|n| panel.values(n))
        .collect::<eivgmm_core::Result<Vec<_>>>()?;
    let t = panel.len();
    NamedMatrix::new(
        names.to_vec(),
        DMatrix::from_fn(t, names.len(), |i, j| cols[j][i]),
    )
}

fn weighting(w: WeightingChoice) -> Weighting {
    match w {
        WeightingChoice::Identity => Weighting::Identity,
        WeightingChoice::InverseZz => Weighting::InverseZZ,
        WeightingChoice::TwoStepHac => Weighting::TwoStepHac,
    }
}

/// Higher-moment instruments of `x` without the constant column.
fn cumulant_columns(x: &NamedMatrix) -> eivgmm_core::Result<NamedMatrix> {
    let set = build_cumulant_instruments(x, true)?;
    let keep: Vec<usize> = (0..set.stacked.ncols())
        .filter(|&j| set.stacked.names[j] != eivgmm_core::instruments::CONSTANT)
        .collect();
    NamedMatrix::new(
        keep.iter().map(|&j| set.stacked.names[j].clone()).collect(),
        set.stacked.data.select_columns(&keep),
    )
}

/// Instruments the exogeneity regression and the relevance first stages use.
fn diagnostic_instruments(
    cfg: &RunConfig,
    panel: &FactorPanel,
    x: &NamedMatrix,
) -> eivgmm_core::Result<NamedMatrix> {
    match cfg.instruments {
        InstrumentChoice::Named => named_matrix(panel, &cfg.named_instruments),
        InstrumentChoice::Cumulant => cumulant_columns(x),
        InstrumentChoice::Both => {
            named_matrix(panel, &cfg.named_instruments)?.hstack(&cumulant_columns(x)?)
        }
    }
}

#[derive(Debug, Clone)]
pub struct PortfolioFit {
    pub nobs: usize,
    /// Months of the set sample missing for this portfolio.
    pub dropped_rows: usize,
    pub ols: FitResult,
    pub iv: GmmFit,
    pub hausman: HausmanReport,
    pub exogeneity: ExogeneityReport,
}

#[derive(Debug, Clone)]
pub struct PortfolioOutcome {
    pub name: String,
    pub result: Result<PortfolioFit, String>,
}

#[derive(Debug, Clone)]
pub struct RelevanceSummary {
    pub records: Vec<RelevanceRecord>,
    pub overall: OverallRelevance,
}

#[derive(Debug, Clone)]
pub struct SetResult {
    pub name: String,
    pub range: (YearMonth, YearMonth),
    /// Months in the factor sample of this set.
    pub nobs: usize,
    /// Months inside the date range dropped for missing factor values.
    pub dropped_rows: usize,
    pub relevance: Result<RelevanceSummary, String>,
    /// Sorted by portfolio name.
    pub portfolios: Vec<PortfolioOutcome>,
}

impl SetResult {
    pub fn error_count(&self) -> usize {
        self.portfolios.iter().filter(|p| p.result.is_err()).count()
    }
}

fn relevance_for(cfg: &RunConfig, panel: &FactorPanel) -> eivgmm_core::Result<RelevanceSummary> {
    let mut records = Vec::new();
    for r in cfg.regressors() {
        let x = named_matrix(panel, std::slice::from_ref(&r))?;
        let z = diagnostic_instruments(cfg, panel, &x)?;
        let rep = relevance_test(&x, &z, &[], cfg.hac_lags, cfg.relevance_threshold)?;
        records.extend(rep.records);
    }
    let f: Vec<f64> = records.iter().map(|r| r.f_stat).collect();
    let (_, overall) = relevance_verdicts(&f, cfg.relevance_threshold);
    Ok(RelevanceSummary { records, overall })
}

/// OLS of the six-factor model, the IVGMM fit and the per-portfolio
/// diagnostics on one aligned sample.
pub fn fit_portfolio(
    cfg: &RunConfig,
    panel: &FactorPanel,
    portfolio: &str,
) -> eivgmm_core::Result<PortfolioFit> {
    let mut y = DVector::from_vec(panel.values(portfolio)?);
    if let Some(rf) = &cfg.risk_free {
        y -= DVector::from_vec(panel.values(rf)?);
    }
    let endo = named_matrix(panel, &cfg.endogenous)?;
    let exo = named_matrix(panel, &cfg.exogenous)?;

    let design = DesignMatrix::with_intercept(&endo.hstack(&exo)?)?;
    let ols = ols_fit(&y, &design, cfg.hac_lags)?;

    let exo_i = exo.with_intercept(INTERCEPT)?;
    let w = weighting(cfg.weighting);
    let spec = |excluded: NamedMatrix| GmmSpec {
        y: y.clone(),
        exogenous: exo_i.clone(),
        endogenous: endo.clone(),
        excluded,
        weighting: w.clone(),
        hac_lags: cfg.hac_lags,
    };
    let iv = match cfg.instruments {
        InstrumentChoice::Cumulant => {
            gmm_distance_estimate(&y, &exo_i, &endo, w.clone(), cfg.hac_lags, true)?
        }
        InstrumentChoice::Named => {
            gmm_estimate(&spec(named_matrix(panel, &cfg.named_instruments)?))?
        }
        InstrumentChoice::Both => {
            let (_, filtered) = robust_filter(&endo, true)?;
            let hat = NamedMatrix::new(
                endo.names.iter().map(|n| format!("hat:{n}")).collect(),
                filtered.fitted,
            )?;
            gmm_estimate(&spec(
                named_matrix(panel, &cfg.named_instruments)?.hstack(&hat)?,
            ))?
        }
    };
    for note in &iv.notes {
        log::info!("{portfolio}: {note}");
    }

    let iv_design = DesignMatrix::new(exo_i.hstack(&endo)?)?;
    let x_hat = fitted_regressors(iv_design.matrix(), &iv.instruments.data)?;
    let hausman = hausman_test(&ols, &iv, &iv_design, &x_hat, cfg.alpha)?;
    let exogeneity = exogeneity_test(
        &ols.residuals,
        &diagnostic_instruments(cfg, panel, &endo)?,
        cfg.alpha,
    )?;
    Ok(PortfolioFit {
        nobs: y.len(),
        dropped_rows: 0,
        ols,
        iv,
        hausman,
        exogeneity,
    })
}

/// Estimates every portfolio of the set. A portfolio that cannot be fitted
/// becomes an error outcome; the others are unaffected.
pub fn run_portfolio_set(
    cfg: &RunConfig,
    inputs: &Inputs,
    set_name: &str,
) -> Result<SetResult, RunError> {
    let (_, portfolios) = inputs
        .sets
        .iter()
        .find(|(n, _)| n == set_name)
        .ok_or_else(|| RunError::Config(format!("unknown portfolio set `{set_name}`")))?;
    let range = cfg.date_range()?;
    let needed = inputs
        .factors
        .select(&factor_columns(cfg))
        .map_err(RunError::Core)?;
    let base = align_panels(&[&needed], Some(range)).map_err(RunError::Core)?;
    let relevance = relevance_for(cfg, &base.panel).map_err(|e| e.to_string());

    let mut names: Vec<String> = portfolios.names().to_vec();
    names.sort();
    let outcomes: Vec<PortfolioOutcome> = names
        .par_iter()
        .map(|p| {
            let result = portfolios
                .select(std::slice::from_ref(p))
                .and_then(|col| align_panels(&[&base.panel, &col], None))
                .and_then(|aligned| {
                    let mut fit = fit_portfolio(cfg, &aligned.panel, p)?;
                    fit.dropped_rows = base.panel.len() - aligned.panel.len();
                    Ok(fit)
                })
                .map_err(|e| e.to_string());
            if let Err(e) = &result {
                log::warn!("set `{set_name}`, portfolio `{p}`: {e}");
            }
            PortfolioOutcome {
                name: p.clone(),
                result,
            }
        })
        .collect();

    Ok(SetResult {
        name: set_name.to_string(),
        range: (
            base.panel
                .dates()
                .first()
                .expect("aligned panel is nonempty"),
            base.panel
                .dates()
                .last()
                .expect("aligned panel is nonempty"),
        ),
        nobs: base.panel.len(),
        dropped_rows: base.dropped_rows,
        relevance,
        portfolios: outcomes,
    })
}

/// Runs every configured set on a pool of `cfg.threads` workers (rayon's
/// default when unset).
pub fn run_all(cfg: &RunConfig, inputs: &Inputs) -> Result<Vec<SetResult>, RunError> {
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cfg.threads {
        pool = pool.num_threads(n);
    }
    let pool = pool
        .build()
        .map_err(|e| RunError::Config(format!("thread pool: {e}")))?;
    pool.install(|| {
        inputs
            .sets
            .iter()
            .map(|(name, _)| run_portfolio_set(cfg, inputs, name))
            .collect()
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Ok,
    Error,
}

/// One coefficient of one fit, or one failed portfolio. This is the row
/// layout of `detail.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetailRow {
    pub set: String,
    pub portfolio: String,
    pub status: Status,
    pub method: String,
    pub term: String,
    pub estimate: Option<f64>,
    pub t_hac: Option<f64>,
    pub p_value: Option<f64>,
    pub adj_r2: Option<f64>,
    pub dw: Option<f64>,
    pub nobs: Option<usize>,
    pub message: String,
}

pub const METHODS: [Method; 2] = [Method::Ols, Method::IvGmm];

/// Coefficient order used in every report: intercept, endogenous, exogenous.
pub fn report_terms(cfg: &RunConfig) -> Vec<String> {
    std::iter::once(INTERCEPT.to_string())
        .chain(cfg.regressors())
        .collect()
}

pub fn detail_rows(cfg: &RunConfig, set: &SetResult) -> Vec<DetailRow> {
    let terms = report_terms(cfg);
    let mut rows = Vec::new();
    for p in &set.portfolios {
        match &p.result {
            Ok(fit) => {
                for m in METHODS {
                    let f = match m {
                        Method::Ols => &fit.ols,
                        Method::IvGmm => &fit.iv.fit,
                    };
                    for term in &terms {
                        let j = f.index(term).expect("every fit carries every report term");
                        rows.push(DetailRow {
                            set: set.name.clone(),
                            portfolio: p.name.clone(),
                            status: Status::Ok,
                            method: m.label().to_string(),
                            term: term.clone(),
                            estimate: Some(f.coefficients[j]),
                            t_hac: Some(f.t_hac[j]),
                            p_value: Some(f.p_value_hac(j)),
                            adj_r2: Some(f.adj_r2),
                            dw: Some(f.dw),
                            nobs: Some(f.nobs()),
                            message: String::new(),
                        });
                    }
                }
            }
            Err(e) => rows.push(DetailRow {
                set: set.name.clone(),
                portfolio: p.name.clone(),
                status: Status::Error,
                method: String::new(),
                term: String::new(),
                estimate: None,
                t_hac: None,
                p_value: None,
                adj_r2: None,
                dw: None,
                nobs: None,
                message: e.clone(),
            }),
        }
    }
    rows
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TermSummary {
    pub term: String,
    pub coef_mean: f64,
    pub t_mean: f64,
    pub t_min: f64,
    pub t_max: f64,
    /// Portfolios whose HAC p-value is below the significance level.
    pub n_signif: usize,
}

/// Cross-portfolio aggregates of one method over one set.
#[derive(Debug, Clone, PartialEq)]
pub struct PortfolioSummary {
    pub set: String,
    pub method: String,
    pub n_ok: usize,
    pub n_error: usize,
    pub terms: Vec<TermSummary>,
    /// Arithmetic mean of the per-portfolio adjusted R².
    pub adj_r2_mean: f64,
    pub dw_mean: f64,
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Aggregates detail rows into one summary per (set, method). Uses nothing
/// but the rows, so the summary can be rebuilt from `detail.csv`.
pub fn summarize(rows: &[DetailRow], alpha: f64) -> Vec<PortfolioSummary> {
    let mut sets: Vec<&str> = Vec::new();
    for r in rows {
        if !sets.contains(&r.set.as_str()) {
            sets.push(&r.set);
        }
    }
    let mut out = Vec::new();
    for set in sets {
        let in_set: Vec<&DetailRow> = rows.iter().filter(|r| r.set == set).collect();
        let n_error = in_set.iter().filter(|r| r.status == Status::Error).count();
        for m in METHODS {
            let ok: Vec<&DetailRow> = in_set
                .iter()
                .copied()
                .filter(|r| r.status == Status::Ok && r.method == m.label())
                .collect();
            let mut terms: Vec<&str> = Vec::new();
            let mut portfolios: Vec<&str> = Vec::new();
            for r in &ok {
                if !terms.contains(&r.term.as_str()) {
                    terms.push(&r.term);
                }
                if !portfolios.contains(&r.portfolio.as_str()) {
                    portfolios.push(&r.portfolio);
                }
            }
            let per_portfolio: Vec<&DetailRow> = portfolios
                .iter()
                .map(|p| {
                    *ok.iter()
                        .find(|r| r.portfolio == *p)
                        .expect("portfolio has rows")
                })
                .collect();
            let field = |rs: &[&DetailRow], f: fn(&DetailRow) -> Option<f64>| -> Vec<f64> {
                rs.iter().map(|r| f(r).unwrap_or(f64::NAN)).collect()
            };
            let term_summaries = terms
                .iter()
                .map(|term| {
                    let rs: Vec<&DetailRow> =
                        ok.iter().copied().filter(|r| r.term == *term).collect();
                    let t = field(&rs, |r| r.t_hac);
                    TermSummary {
                        term: term.to_string(),
                        coef_mean: mean(&field(&rs, |r| r.estimate)),
                        t_mean: mean(&t),
                        t_min: t.iter().copied().fold(f64::INFINITY, f64::min),
                        t_max: t.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                        n_signif: rs
                            .iter()
                            .filter(|r| r.p_value.is_some_and(|p| p < alpha))
                            .count(),
                    }
                })
                .collect();
            out.push(PortfolioSummary {
                set: set.to_string(),
                method: m.label().to_string(),
                n_ok: portfolios.len(),
                n_error,
                terms: term_summaries,
                adj_r2_mean: mean(&field(&per_portfolio, |r| r.adj_r2)),
                dw_mean: mean(&field(&per_portfolio, |r| r.dw)),
            });
        }
    }
    out
}
