//! Synthetic portfolio sets drawn from an errors-in-variables scenario and
//! written in the French-library layout, so that `simulate` exercises the
//! same ingest and estimation path as `run`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use eivgmm_core::synthetic::{parse_key_values, NormalStream};
use eivgmm_core::{generate_eiv, DateIndex, EivScenario, FactorPanel, YearMonth};
use nalgebra::{DMatrix, DVector};

use crate::config::{RunConfig, SetConfig};
use crate::RunError;

/// A scenario plus the portfolio-set layout built around it.
///
/// Keys beyond those of [`EivScenario::from_map`]: `portfolios` (count,
/// default 6), `start` (first month, default 1986-01), `names` (factor
/// names, default `x1..xK`), `endogenous` (defaults to the factors with
/// nonzero measurement error, or all of them when none has any).
#[derive(Debug, Clone, PartialEq)]
pub struct SimulationSpec {
    pub scenario: EivScenario,
    pub portfolios: usize,
    pub start: YearMonth,
    pub names: Vec<String>,
    pub endogenous: Vec<String>,
}

fn list(v: &str) -> Vec<String> {
    v.split(',')
        .map(|s| s.trim().to_string())
        .filter(|s| !s.is_empty())
        .collect()
}

impl SimulationSpec {
    pub fn from_text(text: &str) -> Result<Self, RunError> {
        let map = parse_key_values(text)?;
        Self::from_map(&map)
    }

    pub fn from_map(map: &BTreeMap<String, String>) -> Result<Self, RunError> {
        let scenario = EivScenario::from_map(map)?;
        let k = scenario.beta_true.len();
        let portfolios = match map.get("portfolios") {
            Some(v) => v
                .trim()
                .parse()
                .map_err(|_| RunError::Config(format!("`portfolios`: cannot parse `{v}`")))?,
            None => 6,
        };
        if portfolios == 0 {
            return Err(RunError::Config("`portfolios` must be at least 1".into()));
        }
        let start = match map.get("start") {
            Some(v) => v.parse()?,
            None => YearMonth::new(1986, 1)?,
        };
        let names = match map.get("names") {
            Some(v) => list(v),
            None => (1..=k).map(|j| format!("x{j}")).collect(),
        };
        if names.len() != k {
            return Err(RunError::Config(format!(
                "`names` lists {} factors for {k} coefficients",
                names.len()
            )));
        }
        let endogenous = match map.get("endogenous") {
            Some(v) => list(v),
            None => {
                let noisy: Vec<String> = names
                    .iter()
                    .zip(&scenario.meas_error_sd)
                    .filter(|(_, s)| **s > 0.0)
                    .map(|(n, _)| n.clone())
                    .collect();
                if noisy.is_empty() {
                    names.clone()
                } else {
                    noisy
                }
            }
        };
        if let Some(bad) = endogenous.iter().find(|e| !names.contains(e)) {
            return Err(RunError::Config(format!(
                "endogenous factor `{bad}` is not in `names`"
            )));
        }
        Ok(SimulationSpec {
            scenario,
            portfolios,
            start,
            names,
            endogenous,
        })
    }

    pub fn portfolio_names(&self) -> Vec<String> {
        (1..=self.portfolios).map(|i| format!("P{i:02}")).collect()
    }
}

/// Observed factors, portfolio returns, and the latent factors behind them.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSet {
    pub factors: FactorPanel,
    pub portfolios: FactorPanel,
    pub x_true: DMatrix<f64>,
}

/// Every portfolio loads on the same latent factors with the scenario's
/// `alpha` and `beta`; each has its own error stream.
pub fn synthesize(spec: &SimulationSpec) -> Result<SyntheticSet, RunError> {
    let s = &spec.scenario;
    let sample = generate_eiv(s)?;
    let mut months = Vec::with_capacity(s.t);
    let mut m = spec.start;
    for _ in 0..s.t {
        months.push(m);
        m = m.succ();
    }
    let dates = DateIndex::contiguous(months)?;
    let column = |v: &[f64]| v.iter().map(|&x| Some(x)).collect::<Vec<_>>();
    let factors = FactorPanel::new(
        dates.clone(),
        spec.names.clone(),
        sample
            .x_observed
            .column_iter()
            .map(|c| column(c.as_slice()))
            .collect(),
    )?;
    let mean = DVector::from_element(s.t, s.alpha)
        + &sample.x_true * DVector::from_row_slice(&s.beta_true);
    let returns = (0..spec.portfolios)
        .map(|i| {
            let stream = s
                .seed
                .wrapping_add(0x9E37_79B9_7F4A_7C15u64.wrapping_mul(i as u64 + 1));
            let mut rng = NormalStream::new(stream);
            let y: Vec<f64> = mean.iter().map(|m| m + s.resid_sd * rng.normal()).collect();
            column(&y)
        })
        .collect();
    let portfolios = FactorPanel::new(dates, spec.portfolio_names(), returns)?;
    Ok(SyntheticSet {
        factors,
        portfolios,
        x_true: sample.x_true,
    })
}

/// French-library layout: a title line, a header with an empty label over
/// the date column, `YYYYMM` rows, `-99.99` for missing cells.
pub fn to_ff_csv(panel: &FactorPanel, title: &str) -> String {
    let mut s = format!("{title}\n\n");
    for n in panel.names() {
        let _ = write!(s, ",{n}");
    }
    s.push('\n');
    let cols: Vec<&[Option<f64>]> = panel
        .names()
        .iter()
        .map(|n| panel.column(n).expect("own column"))
        .collect();
    for (t, d) in panel.dates().months().iter().enumerate() {
        let _ = write!(s, "{:04}{:02}", d.year, d.month);
        for c in &cols {
            match c[t] {
                Some(v) => {
                    let _ = write!(s, ",{v}");
                }
                None => s.push_str(",-99.99"),
            }
        }
        s.push('\n');
    }
    s
}

/// Writes `factors.csv`, `portfolios.csv` and `run.toml` into `data_dir`
/// and returns the run configuration they describe.
pub fn write_simulation(spec: &SimulationSpec, data_dir: &Path) -> Result<RunConfig, RunError> {
    let set = synthesize(spec)?;
    std::fs::create_dir_all(data_dir).map_err(|source| RunError::Io {
        path: data_dir.to_path_buf(),
        source,
    })?;
    let write = |name: &str, text: String| {
        let path = data_dir.join(name);
        std::fs::write(&path, text).map_err(|source| RunError::Io { path, source })
    };
    write("factors.csv", to_ff_csv(&set.factors, "Simulated factors"))?;
    write(
        "portfolios.csv",
        to_ff_csv(&set.portfolios, "Simulated portfolios"),
    )?;

    let range = (
        set.factors.dates().first().expect("t > 0"),
        set.factors.dates().last().expect("t > 0"),
    );
    let mut cfg = RunConfig::from_toml("factors = \"factors.csv\"", data_dir)?;
    cfg.start = range.0.to_string();
    cfg.end = range.1.to_string();
    cfg.endogenous = spec.endogenous.clone();
    cfg.exogenous = spec
        .names
        .iter()
        .filter(|n| !spec.endogenous.contains(n))
        .cloned()
        .collect();
    cfg.sets.insert(
        "simulated".into(),
        SetConfig {
            file: "portfolios.csv".into(),
            portfolios: None,
        },
    );
    write("run.toml", cfg.to_toml())?;
    Ok(cfg)
}
