//! Report files: CSV tables at full precision, markdown and plain-text
//! summaries at six significant digits, and a run manifest.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use eivgmm_core::diagnostics::harvey_screen;
use serde::Serialize;

use crate::config::{Format, RunConfig};
use crate::pipeline::{
    detail_rows, report_terms, summarize, DetailRow, PortfolioSummary, SetResult,
};
use crate::RunError;

/// Six significant digits; scientific notation outside `[1e-4, 1e6)`.
pub fn sig6(x: f64) -> String {
    if x.is_nan() {
        return "NaN".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return "0.00000".into();
    }
    let sci = format!("{x:.5e}");
    let e: i32 = sci[sci.find('e').expect("exponent") + 1..]
        .parse()
        .expect("integer exponent");
    if (-4..6).contains(&e) {
        format!("{:.*}", (5 - e) as usize, x)
    } else {
        sci
    }
}

/// `***` below 1%, `**` below 5%.
pub fn stars(p: f64) -> &'static str {
    if p < 0.01 {
        "***"
    } else if p < 0.05 {
        "**"
    } else {
        ""
    }
}

/// A table rendered to both markdown and text. Rows flagged `emphasis` hold
/// t-statistics and are italicized in markdown.
#[derive(Debug, Clone, Default)]
struct Table {
    headers: Vec<String>,
    rows: Vec<(Vec<String>, bool)>,
}

impl Table {
    fn new(headers: Vec<String>) -> Self {
        Table {
            headers,
            rows: Vec::new(),
        }
    }

    fn row(&mut self, cells: Vec<String>) {
        self.rows.push((cells, false));
    }

    fn emphasized(&mut self, cells: Vec<String>) {
        self.rows.push((cells, true));
    }

    fn markdown(&self) -> String {
        let mut s = format!("| {} |\n|", self.headers.join(" | "));
        for j in 0..self.headers.len() {
            s.push_str(if j == 0 { "---|" } else { "---:|" });
        }
        s.push('\n');
        for (cells, emph) in &self.rows {
            let cells: Vec<String> = cells
                .iter()
                .map(|c| {
                    if *emph && !c.is_empty() {
                        format!("*{c}*")
                    } else {
                        c.clone()
                    }
                })
                .collect();
            let _ = writeln!(s, "| {} |", cells.join(" | "));
        }
        s
    }

    fn text(&self) -> String {
        let n = self.headers.len();
        let width: Vec<usize> = (0..n)
            .map(|j| {
                self.rows
                    .iter()
                    .map(|(r, _)| r[j].chars().count())
                    .chain([self.headers[j].chars().count()])
                    .max()
                    .unwrap_or(0)
            })
            .collect();
        let line = |cells: &[String]| {
            let mut s = String::new();
            for (j, c) in cells.iter().enumerate() {
                if j == 0 {
                    let _ = write!(s, "{c:<w$}", w = width[0]);
                } else {
                    let _ = write!(s, "  {c:>w$}", w = width[j]);
                }
            }
            s.trim_end().to_string() + "\n"
        };
        let mut s = line(&self.headers);
        s.push_str(&"-".repeat(width.iter().sum::<usize>() + 2 * (n - 1)));
        s.push('\n');
        for (cells, _) in &self.rows {
            s.push_str(&line(cells));
        }
        s
    }
}

enum Block {
    Heading(usize, String),
    Para(String),
    Table(Table),
}

fn render(blocks: &[Block], format: Format) -> String {
    let mut s = String::new();
    for b in blocks {
        match (b, format) {
            (Block::Heading(level, t), Format::Md) => {
                let _ = writeln!(s, "{} {t}\n", "#".repeat(*level));
            }
            (Block::Heading(level, t), _) => {
                let under = if *level <= 2 { '=' } else { '-' };
                let _ = writeln!(s, "{t}\n{}\n", under.to_string().repeat(t.chars().count()));
            }
            (Block::Para(p), _) => {
                let _ = writeln!(s, "{p}\n");
            }
            (Block::Table(t), Format::Md) => {
                let _ = writeln!(s, "{}", t.markdown());
            }
            (Block::Table(t), _) => {
                let _ = writeln!(s, "{}", t.text());
            }
        }
    }
    s.trim_end().to_string() + "\n"
}

fn summary_table(s: &PortfolioSummary, terms: &[String]) -> Table {
    let mut headers = vec![String::new()];
    headers.extend(terms.iter().cloned());
    headers.extend(["Adj. R² (mean)".to_string(), "DW (mean)".to_string()]);
    let mut t = Table::new(headers);
    let get = |term: &str| s.terms.iter().find(|x| x.term == term);
    let cells = |f: &dyn Fn(&crate::pipeline::TermSummary) -> String| -> Vec<String> {
        terms
            .iter()
            .map(|term| get(term).map(f).unwrap_or_default())
            .collect()
    };
    let mut coef = vec!["Coefficient (mean)".to_string()];
    coef.extend(cells(&|x| sig6(x.coef_mean)));
    coef.extend([sig6(s.adj_r2_mean), sig6(s.dw_mean)]);
    t.row(coef);
    for (label, f) in [
        (
            "t-mean",
            (|x: &crate::pipeline::TermSummary| x.t_mean) as fn(&_) -> f64,
        ),
        ("t-min", |x| x.t_min),
        ("t-max", |x| x.t_max),
    ] {
        let mut r = vec![label.to_string()];
        r.extend(cells(&|x| sig6(f(x))));
        r.extend([String::new(), String::new()]);
        t.emphasized(r);
    }
    let mut n = vec!["No. of signif. portfolios".to_string()];
    n.extend(cells(&|x| x.n_signif.to_string()));
    n.extend([String::new(), String::new()]);
    t.row(n);
    t
}

fn portfolio_table(rows: &[DetailRow], method: &str, terms: &[String]) -> Table {
    let mut headers = vec!["Portfolio".to_string()];
    headers.extend(terms.iter().cloned());
    let mut t = Table::new(headers);
    let mut portfolios: Vec<&str> = Vec::new();
    for r in rows.iter().filter(|r| r.method == method) {
        if !portfolios.contains(&r.portfolio.as_str()) {
            portfolios.push(&r.portfolio);
        }
    }
    for p in portfolios {
        let find = |term: &str| {
            rows.iter()
                .find(|r| r.portfolio == p && r.method == method && r.term == term)
        };
        let mut coef = vec![p.to_string()];
        let mut tr = vec![String::new()];
        for term in terms {
            match find(term) {
                Some(r) => {
                    let est = r.estimate.unwrap_or(f64::NAN);
                    coef.push(format!("{}{}", sig6(est), stars(r.p_value.unwrap_or(1.0))));
                    tr.push(sig6(r.t_hac.unwrap_or(f64::NAN)));
                }
                None => {
                    coef.push(String::new());
                    tr.push(String::new());
                }
            }
        }
        t.row(coef);
        t.emphasized(tr);
    }
    t
}

/// One row of the |t| screen.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScreenRow {
    pub set: String,
    pub portfolio: String,
    pub factor: String,
    pub coefficient: f64,
    pub t_ratio: f64,
    pub p_value: f64,
}

/// IVGMM fits whose t-ratio on `factor` exceeds `threshold` in absolute
/// value, sorted by set then portfolio.
pub fn emit_tratio_screen(results: &[SetResult], factor: &str, threshold: f64) -> Vec<ScreenRow> {
    let mut rows = Vec::new();
    for set in results {
        for p in &set.portfolios {
            let Ok(fit) = &p.result else { continue };
            let Ok(rec) = harvey_screen(&fit.iv.fit, factor, threshold) else {
                continue;
            };
            if rec.pass {
                let j = fit
                    .iv
                    .fit
                    .index(factor)
                    .expect("screened factor is a regressor");
                rows.push(ScreenRow {
                    set: set.name.clone(),
                    portfolio: p.name.clone(),
                    factor: factor.to_string(),
                    coefficient: fit.iv.fit.coefficients[j],
                    t_ratio: rec.t_ratio,
                    p_value: fit.iv.fit.p_value_hac(j),
                });
            }
        }
    }
    rows.sort_by(|a, b| (&a.set, &a.portfolio).cmp(&(&b.set, &b.portfolio)));
    rows
}

fn screen_blocks(rows: &[ScreenRow], factor: &str, threshold: f64) -> Vec<Block> {
    let mut t = Table::new(
        ["Set", "Portfolio", factor, "t-ratio"]
            .map(String::from)
            .to_vec(),
    );
    for r in rows {
        t.row(vec![
            r.set.clone(),
            r.portfolio.clone(),
            format!("{}{}", sig6(r.coefficient), stars(r.p_value)),
            sig6(r.t_ratio),
        ]);
    }
    vec![
        Block::Heading(
            1,
            format!("IVGMM t-ratios of {factor} with |t| > {threshold}"),
        ),
        Block::Table(t),
    ]
}

#[derive(Serialize)]
struct SummaryCsvRow<'a> {
    set: &'a str,
    method: &'a str,
    term: &'a str,
    n_ok: usize,
    n_error: usize,
    coef_mean: f64,
    t_mean: f64,
    t_min: f64,
    t_max: f64,
    n_signif: usize,
    adj_r2_mean: f64,
    dw_mean: f64,
}

#[derive(Serialize)]
struct RelevanceCsvRow {
    set: String,
    regressor: String,
    instruments: String,
    f_stat: Option<f64>,
    capped: Option<bool>,
    verdict: String,
    overall: String,
    message: String,
}

#[derive(Serialize)]
struct ExogeneityCsvRow<'a> {
    set: &'a str,
    portfolio: &'a str,
    term: &'a str,
    coefficient: f64,
    p_value: f64,
    r2: f64,
    verdict: String,
}

#[derive(Serialize)]
struct TestsCsvRow<'a> {
    set: &'a str,
    portfolio: &'a str,
    nobs: usize,
    dropped_rows: usize,
    j_stat: f64,
    j_dof: usize,
    j_pvalue: f64,
    hausman_h: f64,
    hausman_dof: usize,
    hausman_pvalue: f64,
    hausman_verdict: String,
    exogeneity_verdict: String,
    dropped_instruments: String,
    notes: String,
}

fn csv_bytes<T: Serialize>(
    rows: impl IntoIterator<Item = T>,
    header: &[&str],
) -> Result<Vec<u8>, RunError> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(Vec::new());
    w.write_record(header)
        .map_err(|e| RunError::Report(e.to_string()))?;
    for r in rows {
        w.serialize(r)
            .map_err(|e| RunError::Report(e.to_string()))?;
    }
    w.into_inner().map_err(|e| RunError::Report(e.to_string()))
}

fn write(dir: &Path, name: &str, bytes: &[u8], written: &mut Vec<PathBuf>) -> Result<(), RunError> {
    let path = dir.join(name);
    std::fs::write(&path, bytes).map_err(|source| RunError::Io {
        path: path.clone(),
        source,
    })?;
    written.push(path);
    Ok(())
}

/// Creates `dir` if needed and checks that a file can be written there.
pub fn ensure_writable(dir: &Path) -> Result<(), RunError> {
    let io = |source| RunError::Io {
        path: dir.to_path_buf(),
        source,
    };
    std::fs::create_dir_all(dir).map_err(io)?;
    let probe = dir.join(".eivgmm-write-probe");
    std::fs::write(&probe, b"").map_err(io)?;
    std::fs::remove_file(&probe).map_err(io)
}

fn manifest(cfg: &RunConfig, results: &[SetResult]) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "eivgmm-cli {}", env!("CARGO_PKG_VERSION"));
    let _ = writeln!(s, "eivgmm-core {}\n", eivgmm_core::VERSION);
    for set in results {
        let _ = writeln!(s, "[result.{}]", set.name);
        let _ = writeln!(s, "range = \"{}..{}\"", set.range.0, set.range.1);
        let _ = writeln!(s, "months = {}", set.nobs);
        let _ = writeln!(s, "dropped_rows = {}", set.dropped_rows);
        let _ = writeln!(s, "portfolios = {}", set.portfolios.len());
        let _ = writeln!(s, "errors = {}", set.error_count());
        let short: Vec<String> = set
            .portfolios
            .iter()
            .filter_map(|p| match &p.result {
                Ok(f) if f.dropped_rows > 0 => Some(format!("{:?} = {}", p.name, f.dropped_rows)),
                _ => None,
            })
            .collect();
        if !short.is_empty() {
            let _ = writeln!(s, "portfolio_dropped_rows = {{ {} }}", short.join(", "));
        }
        s.push('\n');
    }
    let _ = writeln!(s, "# configuration\n{}", cfg.to_toml());
    s
}

fn summary_blocks(
    cfg: &RunConfig,
    results: &[SetResult],
    all_rows: &[DetailRow],
    summaries: &[PortfolioSummary],
) -> Vec<Block> {
    let terms = report_terms(cfg);
    let mut b = vec![
        Block::Heading(1, "Six-factor regressions".into()),
        Block::Para(format!(
            "t-statistics use Newey-West standard errors. ** p < 0.05, *** p < 0.01; significance counts use level {}.",
            cfg.alpha
        )),
    ];
    for set in results {
        b.push(Block::Heading(2, format!("Set {}", set.name)));
        b.push(Block::Para(format!(
            "{}..{}, {} months. {} portfolios estimated, {} failed.",
            set.range.0,
            set.range.1,
            set.nobs,
            set.portfolios.len() - set.error_count(),
            set.error_count()
        )));
        for s in summaries.iter().filter(|s| s.set == set.name) {
            b.push(Block::Heading(3, s.method.clone()));
            b.push(Block::Table(summary_table(s, &terms)));
        }
        let rows: Vec<DetailRow> = all_rows
            .iter()
            .filter(|r| r.set == set.name)
            .cloned()
            .collect();
        for m in crate::pipeline::METHODS {
            b.push(Block::Heading(
                3,
                format!("{} estimates by portfolio", m.label()),
            ));
            b.push(Block::Table(portfolio_table(&rows, m.label(), &terms)));
        }

        b.push(Block::Heading(3, "Instrument relevance".into()));
        match &set.relevance {
            Ok(rel) => {
                let mut t = Table::new(
                    ["Regressor", "Instruments", "F", "Verdict"]
                        .map(String::from)
                        .to_vec(),
                );
                for r in &rel.records {
                    t.row(vec![
                        r.regressor.clone(),
                        r.instruments[1..].join(", "),
                        sig6(r.f_stat),
                        format!("{:?}", r.verdict),
                    ]);
                }
                b.push(Block::Table(t));
                b.push(Block::Para(format!(
                    "Overall: {:?} (threshold F > {}).",
                    rel.overall, cfg.relevance_threshold
                )));
            }
            Err(e) => b.push(Block::Para(format!("Not available: {e}"))),
        }

        b.push(Block::Heading(3, "Specification tests".into()));
        let mut t = Table::new(
            [
                "Portfolio",
                "J",
                "J dof",
                "J p",
                "Hausman H",
                "H dof",
                "H p",
                "Hausman",
                "Exogeneity",
            ]
            .map(String::from)
            .to_vec(),
        );
        for p in &set.portfolios {
            match &p.result {
                Ok(f) => t.row(vec![
                    p.name.clone(),
                    sig6(f.iv.j_stat),
                    f.iv.j_dof.to_string(),
                    sig6(f.iv.j_pvalue),
                    sig6(f.hausman.h),
                    f.hausman.dof.to_string(),
                    sig6(f.hausman.p_value),
                    format!("{:?}", f.hausman.verdict),
                    format!("{:?}", f.exogeneity.verdict),
                ]),
                Err(e) => {
                    let mut r = vec![p.name.clone(), format!("error: {e}")];
                    r.resize(9, String::new());
                    t.row(r);
                }
            }
        }
        b.push(Block::Table(t));
    }
    b
}

/// Writes every report for `results` into `dir` and returns the paths
/// written, in a fixed order.
pub fn emit_reports(
    cfg: &RunConfig,
    results: &[SetResult],
    dir: &Path,
) -> Result<Vec<PathBuf>, RunError> {
    ensure_writable(dir)?;
    let mut written = Vec::new();
    let rows: Vec<DetailRow> = results.iter().flat_map(|s| detail_rows(cfg, s)).collect();
    let summaries = summarize(&rows, cfg.alpha);
    let factor = cfg.screen_factor().unwrap_or_default().to_string();
    let screen = emit_tratio_screen(results, &factor, cfg.harvey_threshold);

    if cfg.formats.contains(&Format::Csv) {
        let detail = csv_bytes(
            &rows,
            &[
                "set",
                "portfolio",
                "status",
                "method",
                "term",
                "estimate",
                "t_hac",
                "p_value",
                "adj_r2",
                "dw",
                "nobs",
                "message",
            ],
        )?;
        write(dir, "detail.csv", &detail, &mut written)?;

        let summary_rows = summaries.iter().flat_map(|s| {
            s.terms.iter().map(move |t| SummaryCsvRow {
                set: &s.set,
                method: &s.method,
                term: &t.term,
                n_ok: s.n_ok,
                n_error: s.n_error,
                coef_mean: t.coef_mean,
                t_mean: t.t_mean,
                t_min: t.t_min,
                t_max: t.t_max,
                n_signif: t.n_signif,
                adj_r2_mean: s.adj_r2_mean,
                dw_mean: s.dw_mean,
            })
        });
        let summary = csv_bytes(
            summary_rows,
            &[
                "set",
                "method",
                "term",
                "n_ok",
                "n_error",
                "coef_mean",
                "t_mean",
                "t_min",
                "t_max",
                "n_signif",
                "adj_r2_mean",
                "dw_mean",
            ],
        )?;
        write(dir, "summary.csv", &summary, &mut written)?;

        let mut relevance = Vec::new();
        for set in results {
            match &set.relevance {
                Ok(rel) => relevance.extend(rel.records.iter().map(|r| RelevanceCsvRow {
                    set: set.name.clone(),
                    regressor: r.regressor.clone(),
                    instruments: r.instruments.join(";"),
                    f_stat: Some(r.f_stat),
                    capped: Some(r.capped),
                    verdict: format!("{:?}", r.verdict),
                    overall: format!("{:?}", rel.overall),
                    message: String::new(),
                })),
                Err(e) => relevance.push(RelevanceCsvRow {
                    set: set.name.clone(),
                    regressor: String::new(),
                    instruments: String::new(),
                    f_stat: None,
                    capped: None,
                    verdict: String::new(),
                    overall: String::new(),
                    message: e.clone(),
                }),
            }
        }
        let bytes = csv_bytes(
            relevance,
            &[
                "set",
                "regressor",
                "instruments",
                "f_stat",
                "capped",
                "verdict",
                "overall",
                "message",
            ],
        )?;
        write(dir, "relevance.csv", &bytes, &mut written)?;

        let mut exo = Vec::new();
        let mut tests = Vec::new();
        for set in results {
            for p in &set.portfolios {
                let Ok(f) = &p.result else { continue };
                let e = &f.exogeneity;
                for (j, term) in e.names.iter().enumerate() {
                    exo.push(ExogeneityCsvRow {
                        set: &set.name,
                        portfolio: &p.name,
                        term,
                        coefficient: e.coefficients[j],
                        p_value: e.p_values[j],
                        r2: e.r2,
                        verdict: format!("{:?}", e.verdict),
                    });
                }
                tests.push(TestsCsvRow {
                    set: &set.name,
                    portfolio: &p.name,
                    nobs: f.nobs,
                    dropped_rows: f.dropped_rows,
                    j_stat: f.iv.j_stat,
                    j_dof: f.iv.j_dof,
                    j_pvalue: f.iv.j_pvalue,
                    hausman_h: f.hausman.h,
                    hausman_dof: f.hausman.dof,
                    hausman_pvalue: f.hausman.p_value,
                    hausman_verdict: format!("{:?}", f.hausman.verdict),
                    exogeneity_verdict: format!("{:?}", f.exogeneity.verdict),
                    dropped_instruments: f.iv.dropped_instruments.join(";"),
                    notes: f.iv.notes.join("; "),
                });
            }
        }
        let bytes = csv_bytes(
            exo,
            &[
                "set",
                "portfolio",
                "term",
                "coefficient",
                "p_value",
                "r2",
                "verdict",
            ],
        )?;
        write(dir, "exogeneity.csv", &bytes, &mut written)?;
        let bytes = csv_bytes(
            tests,
            &[
                "set",
                "portfolio",
                "nobs",
                "dropped_rows",
                "j_stat",
                "j_dof",
                "j_pvalue",
                "hausman_h",
                "hausman_dof",
                "hausman_pvalue",
                "hausman_verdict",
                "exogeneity_verdict",
                "dropped_instruments",
                "notes",
            ],
        )?;
        write(dir, "tests.csv", &bytes, &mut written)?;

        let bytes = csv_bytes(
            &screen,
            &[
                "set",
                "portfolio",
                "factor",
                "coefficient",
                "t_ratio",
                "p_value",
            ],
        )?;
        write(dir, "tratio_screen.csv", &bytes, &mut written)?;
    }

    let blocks = summary_blocks(cfg, results, &rows, &summaries);
    let screen_blocks = screen_blocks(&screen, &factor, cfg.harvey_threshold);
    for (format, ext) in [(Format::Md, "md"), (Format::Txt, "txt")] {
        if cfg.formats.contains(&format) {
            write(
                dir,
                &format!("summary.{ext}"),
                render(&blocks, format).as_bytes(),
                &mut written,
            )?;
            write(
                dir,
                &format!("tratio_screen.{ext}"),
                render(&screen_blocks, format).as_bytes(),
                &mut written,
            )?;
        }
    }
    write(
        dir,
        "manifest.txt",
        manifest(cfg, results).as_bytes(),
        &mut written,
    )?;
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn six_significant_digits() {
        assert_eq!(sig6(0.0123456789), "0.0123457");
        assert_eq!(sig6(-4.2100001), "-4.21000");
        assert_eq!(sig6(123456.7), "123457");
        assert_eq!(sig6(1234567.8), "1.23457e6");
        assert_eq!(sig6(999999.7), "1.00000e6");
        assert_eq!(sig6(9.999996), "10.0000");
        assert_eq!(sig6(1.5e-7), "1.50000e-7");
        assert_eq!(sig6(f64::INFINITY), "inf");
    }

    #[test]
    fn star_levels() {
        assert_eq!(stars(0.009), "***");
        assert_eq!(stars(0.01), "**");
        assert_eq!(stars(0.049), "**");
        assert_eq!(stars(0.05), "");
    }

    #[test]
    fn markdown_italicizes_t_rows() {
        let mut t = Table::new(vec!["".into(), "LBR".into()]);
        t.row(vec!["coef".into(), "0.03***".into()]);
        t.emphasized(vec!["".into(), "4.21".into()]);
        let md = t.markdown();
        assert!(md.contains("| coef | 0.03*** |"));
        assert!(md.contains("|  | *4.21* |"));
        assert!(md.starts_with("|  | LBR |\n|---|---:|"));
    }

    #[test]
    fn text_table_aligns_columns() {
        let mut t = Table::new(vec!["a".into(), "value".into()]);
        t.row(vec!["longer".into(), "1".into()]);
        let txt = t.text();
        assert_eq!(txt, "a       value\n-------------\nlonger      1\n");
    }
}
