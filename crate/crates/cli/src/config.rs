//! Run configuration: a TOML file with top-level keys and one
//! `[sets.<name>]` table per portfolio set.
//!
//! ```toml
//! factors = "F-F_Research_Data_5_Factors_2x3.csv"
//! labor_income = "labor_income_growth.csv"
//! risk_free = "RF"
//! instruments = "cumulant"
//!
//! [sets.size_bm]
//! file = "6_Portfolios_2x3.csv"
//! ```
//!
//! Relative paths are resolved against the directory holding the file.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use clap::ValueEnum;
use eivgmm_core::YearMonth;
use serde::{Deserialize, Serialize};

use crate::RunError;

/// Name of the environment variable holding the default config path.
pub const CONFIG_ENV: &str = "EIVGMM_CONFIG";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum InstrumentChoice {
    /// Excluded instruments are the `named_instruments` columns.
    Named,
    /// Higher-moment instruments of the endogenous regressors.
    #[default]
    Cumulant,
    Both,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
#[value(rename_all = "snake_case")]
pub enum WeightingChoice {
    Identity,
    InverseZz,
    #[default]
    TwoStepHac,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Frequency {
    Monthly,
    #[default]
    Quarterly,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Md,
    Txt,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SetConfig {
    pub file: String,
    /// Portfolio columns to estimate; all columns when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub portfolios: Option<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub factors: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labor_income: Option<String>,
    #[serde(default = "default_labor_name")]
    pub labor_income_name: String,
    #[serde(default)]
    pub labor_income_frequency: Frequency,
    #[serde(default = "default_start")]
    pub start: String,
    #[serde(default = "default_end")]
    pub end: String,
    #[serde(default = "default_exogenous")]
    pub exogenous: Vec<String>,
    #[serde(default = "default_endogenous")]
    pub endogenous: Vec<String>,
    #[serde(default)]
    pub instruments: InstrumentChoice,
    #[serde(default)]
    pub named_instruments: Vec<String>,
    #[serde(default)]
    pub weighting: WeightingChoice,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hac_lags: Option<usize>,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_relevance")]
    pub relevance_threshold: f64,
    #[serde(default = "default_harvey")]
    pub harvey_threshold: f64,
    /// Regressor whose IVGMM t-ratio feeds the |t| screen; defaults to the
    /// first endogenous regressor.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub screen_factor: Option<String>,
    /// Factor column subtracted from every portfolio return.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub risk_free: Option<String>,
    /// Multiplicative rescaling of factor columns, applied after loading.
    #[serde(default)]
    pub rescale: BTreeMap<String, f64>,
    #[serde(default = "default_output_dir", skip_serializing)]
    pub output_dir: String,
    #[serde(default = "default_formats")]
    pub formats: Vec<Format>,
    #[serde(default, skip_serializing)]
    pub threads: Option<usize>,
    #[serde(default)]
    pub sets: BTreeMap<String, SetConfig>,
    #[serde(skip)]
    pub base_dir: PathBuf,
}

fn default_labor_name() -> String {
    "LBR".into()
}
fn default_start() -> String {
    "1986-01".into()
}
fn default_end() -> String {
    "2017-05".into()
}
fn default_exogenous() -> Vec<String> {
    ["Mkt-RF", "SMB", "HML", "RMW", "CMA"]
        .map(String::from)
        .to_vec()
}
fn default_endogenous() -> Vec<String> {
    vec![default_labor_name()]
}
fn default_alpha() -> f64 {
    eivgmm_core::diagnostics::DEFAULT_ALPHA
}
fn default_relevance() -> f64 {
    eivgmm_core::diagnostics::RELEVANCE_THRESHOLD
}
fn default_harvey() -> f64 {
    eivgmm_core::diagnostics::HARVEY_THRESHOLD
}
fn default_output_dir() -> String {
    "eivgmm-out".into()
}
fn default_formats() -> Vec<Format> {
    vec![Format::Csv, Format::Md, Format::Txt]
}

/// Command-line values that replace the corresponding config keys.
#[derive(Debug, Clone, Default, clap::Args)]
pub struct Overrides {
    #[arg(long, visible_alias = "factors-file")]
    pub factors: Option<String>,
    #[arg(long = "labor_income", visible_alias = "labor-income")]
    pub labor_income: Option<String>,
    #[arg(long = "labor_income_name", visible_alias = "labor-income-name")]
    pub labor_income_name: Option<String>,
    #[arg(
        long = "labor_income_frequency",
        visible_alias = "labor-income-frequency"
    )]
    pub labor_income_frequency: Option<Frequency>,
    #[arg(long)]
    pub start: Option<String>,
    #[arg(long)]
    pub end: Option<String>,
    #[arg(long, value_delimiter = ',')]
    pub exogenous: Option<Vec<String>>,
    #[arg(long, value_delimiter = ',')]
    pub endogenous: Option<Vec<String>>,
    #[arg(long)]
    pub instruments: Option<InstrumentChoice>,
    #[arg(
        long = "named_instruments",
        visible_alias = "named-instruments",
        value_delimiter = ','
    )]
    pub named_instruments: Option<Vec<String>>,
    #[arg(long)]
    pub weighting: Option<WeightingChoice>,
    #[arg(long = "hac_lags", visible_alias = "hac-lags")]
    pub hac_lags: Option<usize>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long = "relevance_threshold", visible_alias = "relevance-threshold")]
    pub relevance_threshold: Option<f64>,
    #[arg(long = "harvey_threshold", visible_alias = "harvey-threshold")]
    pub harvey_threshold: Option<f64>,
    #[arg(long = "screen_factor", visible_alias = "screen-factor")]
    pub screen_factor: Option<String>,
    #[arg(long = "risk_free", visible_alias = "risk-free")]
    pub risk_free: Option<String>,
    #[arg(long = "output_dir", visible_alias = "output-dir", short = 'o')]
    pub output_dir: Option<String>,
    #[arg(long, value_delimiter = ',')]
    pub formats: Option<Vec<Format>>,
    #[arg(long)]
    pub threads: Option<usize>,
}

impl RunConfig {
    pub fn from_toml(text: &str, base_dir: impl Into<PathBuf>) -> Result<Self, RunError> {
        let mut cfg: RunConfig =
            toml::from_str(text).map_err(|e| RunError::Config(e.to_string()))?;
        cfg.base_dir = base_dir.into();
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, RunError> {
        let text = std::fs::read_to_string(path).map_err(|source| RunError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::from_toml(&text, base)
    }

    /// Echo of the configuration for the run manifest. Output location and
    /// thread count are left out so that they do not change the outputs.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn apply(&mut self, o: &Overrides) {
        macro_rules! set {
            ($($field:ident),*) => {$(
                if let Some(v) = &o.$field {
                    self.$field = v.clone();
                }
            )*};
        }
        macro_rules! set_opt {
            ($($field:ident),*) => {$(
                if let Some(v) = &o.$field {
                    self.$field = Some(v.clone());
                }
            )*};
        }
        set!(
            factors,
            labor_income_name,
            labor_income_frequency,
            start,
            end,
            exogenous,
            endogenous,
            instruments,
            named_instruments,
            weighting,
            alpha,
            relevance_threshold,
            harvey_threshold,
            output_dir,
            formats
        );
        set_opt!(labor_income, hac_lags, screen_factor, risk_free, threads);
    }

    pub fn resolve(&self, path: &str) -> PathBuf {
        self.base_dir.join(path)
    }

    pub fn output_path(&self) -> PathBuf {
        self.resolve(&self.output_dir)
    }

    pub fn date_range(&self) -> Result<(YearMonth, YearMonth), RunError> {
        let parse = |key: &str, v: &str| {
            v.parse::<YearMonth>()
                .map_err(|e| RunError::Config(format!("`{key}`: {e}")))
        };
        let (s, e) = (parse("start", &self.start)?, parse("end", &self.end)?);
        if s > e {
            return Err(RunError::Config(format!("start {s} is after end {e}")));
        }
        Ok((s, e))
    }

    /// All regressors of the six-factor model, endogenous first.
    pub fn regressors(&self) -> Vec<String> {
        self.endogenous
            .iter()
            .chain(&self.exogenous)
            .cloned()
            .collect()
    }

    pub fn screen_factor(&self) -> Option<&str> {
        self.screen_factor
            .as_deref()
            .or_else(|| self.endogenous.first().map(String::as_str))
    }

    /// Static checks: referenced files exist, roles are disjoint, numeric
    /// settings are in range.
    pub fn validate(&self) -> Result<(), RunError> {
        let bad = |m: String| Err(RunError::Config(m));
        self.date_range()?;
        let mut files = vec![("factors", self.factors.clone())];
        if let Some(l) = &self.labor_income {
            files.push(("labor_income", l.clone()));
        }
        if self.sets.is_empty() {
            return bad("no portfolio sets configured (add a [sets.<name>] table)".into());
        }
        for (name, set) in &self.sets {
            files.push(("set file", set.file.clone()));
            if set.portfolios.as_ref().is_some_and(Vec::is_empty) {
                return bad(format!("set `{name}` lists no portfolios"));
            }
        }
        for (what, f) in files {
            if !self.resolve(&f).is_file() {
                return bad(format!(
                    "{what} `{}` does not exist",
                    self.resolve(&f).display()
                ));
            }
        }

        if self.endogenous.is_empty() {
            return bad("`endogenous` must name at least one regressor".into());
        }
        let mut seen = BTreeSet::new();
        let roles = [
            ("exogenous", &self.exogenous),
            ("endogenous", &self.endogenous),
            ("named_instruments", &self.named_instruments),
        ];
        for (role, cols) in roles {
            for c in cols {
                if !seen.insert(c.as_str()) {
                    return bad(format!(
                        "column `{c}` appears twice across roles (second time in `{role}`)"
                    ));
                }
            }
        }
        if let Some(rf) = &self.risk_free {
            if seen.contains(rf.as_str()) {
                return bad(format!(
                    "risk_free column `{rf}` is also a regressor or instrument"
                ));
            }
        }
        if self.labor_income.is_some() && !self.regressors().contains(&self.labor_income_name) {
            log::warn!(
                "labor income `{}` is loaded but not used as a regressor",
                self.labor_income_name
            );
        }
        if self.instruments != InstrumentChoice::Cumulant && self.named_instruments.is_empty() {
            return bad(
                "`instruments` uses named instruments but `named_instruments` is empty".into(),
            );
        }
        if let Some(f) = self.screen_factor() {
            if !self.regressors().iter().any(|r| r == f) {
                return bad(format!("screen_factor `{f}` is not a regressor"));
            }
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return bad(format!("alpha must lie in (0, 1), got {}", self.alpha));
        }
        if [self.relevance_threshold, self.harvey_threshold]
            .iter()
            .any(|t| t.is_nan() || *t <= 0.0)
        {
            return bad("thresholds must be positive".into());
        }
        if self.formats.is_empty() {
            return bad("`formats` is empty".into());
        }
        if self.threads == Some(0) {
            return bad("`threads` must be at least 1".into());
        }
        if self.rescale.values().any(|v| !v.is_finite() || *v == 0.0) {
            return bad("rescale factors must be finite and nonzero".into());
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
factors = "f.csv"

[sets.a]
file = "p.csv"
"#;

    #[test]
    fn defaults_fill_in() {
        let c = RunConfig::from_toml(MINIMAL, "/data").unwrap();
        assert_eq!(c.exogenous.len(), 5);
        assert_eq!(c.endogenous, vec!["LBR"]);
        assert_eq!(c.instruments, InstrumentChoice::Cumulant);
        assert_eq!(c.weighting, WeightingChoice::TwoStepHac);
        assert_eq!(c.formats.len(), 3);
        assert_eq!(c.resolve("f.csv"), PathBuf::from("/data/f.csv"));
        assert_eq!(c.screen_factor(), Some("LBR"));
    }

    #[test]
    fn unknown_key_is_rejected() {
        let e = RunConfig::from_toml("factors = \"f\"\nbogus = 1\n", ".").unwrap_err();
        assert!(e.to_string().contains("bogus"), "{e}");
    }

    #[test]
    fn overrides_replace_keys() {
        let mut c = RunConfig::from_toml(MINIMAL, ".").unwrap();
        c.apply(&Overrides {
            hac_lags: Some(3),
            alpha: Some(0.01),
            exogenous: Some(vec!["A".into()]),
            ..Default::default()
        });
        assert_eq!((c.hac_lags, c.alpha), (Some(3), 0.01));
        assert_eq!(c.exogenous, vec!["A"]);
    }

    #[test]
    fn echo_omits_location_and_threads() {
        let mut c = RunConfig::from_toml(MINIMAL, ".").unwrap();
        c.threads = Some(4);
        let echo = c.to_toml();
        assert!(!echo.contains("output_dir") && !echo.contains("threads"));
        let back = RunConfig::from_toml(&echo, ".").unwrap();
        assert_eq!(back.sets, c.sets);
    }

    #[test]
    fn overlapping_roles_fail_validation() {
        let dir = std::env::temp_dir();
        let f = dir.join("eivgmm-config-test.csv");
        std::fs::write(&f, "x").unwrap();
        let text = format!(
            "factors = {:?}\nexogenous = [\"LBR\"]\n[sets.a]\nfile = {:?}\n",
            f.display().to_string(),
            f.display().to_string()
        );
        let c = RunConfig::from_toml(&text, ".").unwrap();
        let e = c.validate().unwrap_err();
        assert!(e.to_string().contains("twice"), "{e}");
    }
}
