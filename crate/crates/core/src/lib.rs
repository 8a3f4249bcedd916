//! Six-factor asset-pricing regressions estimated by OLS and by
//! errors-in-variables robust instrumental-variable GMM.
//!
//! - [`data`]: French-library panels, labor-income series, date alignment.
//! - [`regression`]: OLS with classical and Newey-West inference.
//! - [`instruments`]: Durbin/Pal higher-moment instruments and the filtered
//!   regressor block.
//! - [`gmm`]: linear IV/GMM, two-step HAC weighting, Hansen's J.
//! - [`diagnostics`]: relevance, exogeneity, Hausman, |t| > 3 screen.
//! - [`synthetic`]: simulation and explicit-formula reference estimators.

pub mod data;
pub mod diagnostics;
pub mod error;
pub mod gmm;
pub mod instruments;
pub mod linalg;
pub mod regression;
pub mod synthetic;

pub use data::{
    align_panels, descriptive_stats, parse_ff_csv, parse_quarterly_csv, quarterly_to_monthly,
    AlignedPanel, ColumnStats, DateIndex, FactorPanel, LaborIncomeSeries, ParseOptions,
    QuarterValue, YearMonth,
};
pub use diagnostics::{
    exogeneity_test, harvey_pass, harvey_screen, hausman_test, relevance_test, relevance_verdicts,
    ExogeneityReport, HarveyRecord, HausmanReport, RelevanceReport,
};
pub use error::{Error, Result};
pub use gmm::{
    gmm_distance_estimate, gmm_estimate, gmm_objective, moment_conditions, GmmFit, GmmSpec,
    Weighting,
};
pub use instruments::{
    build_cumulant_instruments, project_fitted, residual_instruments, FilteredInstruments,
    InstrumentSet,
};
pub use linalg::NamedMatrix;
pub use regression::{
    adjusted_r2, durbin_watson, hac_covariance, ols_fit, DesignMatrix, FitResult, Method,
};
pub use synthetic::{
    generate_eiv, oracle_2sls, oracle_ols, EivSample, EivScenario, LatentDistribution,
};

/// Version of this crate, recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
