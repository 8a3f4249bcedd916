//! Monthly factor and portfolio panels.
//!
//! Reads the whitespace- or comma-delimited layout of the Kenneth French data
//! library (a `YYYYMM` key followed by numeric columns, surrounded by prose
//! and annual blocks), quarterly labor-income series, and the normalized
//! `date,<col>,...` CSV this crate writes back out.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Sentinels the French library uses for missing observations.
pub const DEFAULT_SENTINELS: [f64; 2] = [-99.99, -999.0];

/// A calendar month.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct YearMonth {
    pub year: i32,
    pub month: u32,
}

impl YearMonth {
    pub fn new(year: i32, month: u32) -> Result<Self> {
        if !(1..=12).contains(&month) {
            return Err(Error::InvalidArgument(format!(
                "month {month} out of range"
            )));
        }
        Ok(Self { year, month })
    }

    pub fn succ(self) -> Self {
        if self.month == 12 {
            Self {
                year: self.year + 1,
                month: 1,
            }
        } else {
            Self {
                year: self.year,
                month: self.month + 1,
            }
        }
    }

    /// Parses the compact `YYYYMM` key.
    pub fn parse_compact(token: &str) -> Option<Self> {
        if token.len() != 6 || !token.bytes().all(|b| b.is_ascii_digit()) {
            return None;
        }
        let year = token[..4].parse().ok()?;
        let month = token[4..].parse().ok()?;
        Self::new(year, month).ok()
    }
}

impl fmt::Display for YearMonth {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:04}-{:02}", self.year, self.month)
    }
}

impl FromStr for YearMonth {
    type Err = Error;

    /// Accepts `YYYY-MM` or `YYYYMM`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let bad = || Error::InvalidArgument(format!("invalid month `{s}`"));
        if let Some((y, m)) = s.split_once('-') {
            let year = y.parse().map_err(|_| bad())?;
            let month = m.parse().map_err(|_| bad())?;
            return Self::new(year, month).map_err(|_| bad());
        }
        Self::parse_compact(s).ok_or_else(bad)
    }
}

/// Strictly increasing sequence of months.
///
/// Parsed inputs are additionally contiguous; panels that went through
/// listwise deletion in [`align_panels`] may have gaps.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct DateIndex(Vec<YearMonth>);

impl DateIndex {
    pub fn new(months: Vec<YearMonth>) -> Result<Self> {
        if let Some(w) = months.windows(2).find(|w| w[1] <= w[0]) {
            return Err(Error::DateIndex(format!(
                "{} does not follow {}",
                w[1], w[0]
            )));
        }
        Ok(Self(months))
    }

    /// Like [`DateIndex::new`] but also requires consecutive months.
    pub fn contiguous(months: Vec<YearMonth>) -> Result<Self> {
        if let Some(w) = months.windows(2).find(|w| w[1] != w[0].succ()) {
            return Err(Error::DateIndex(format!(
                "{} does not immediately follow {}",
                w[1], w[0]
            )));
        }
        Ok(Self(months))
    }

    /// Every month from `start` through `end` inclusive.
    pub fn range(start: YearMonth, end: YearMonth) -> Self {
        let mut months = Vec::new();
        let mut m = start;
        while m <= end {
            months.push(m);
            m = m.succ();
        }
        Self(months)
    }

    pub fn is_contiguous(&self) -> bool {
        self.0.windows(2).all(|w| w[1] == w[0].succ())
    }

    pub fn months(&self) -> &[YearMonth] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn first(&self) -> Option<YearMonth> {
        self.0.first().copied()
    }

    pub fn last(&self) -> Option<YearMonth> {
        self.0.last().copied()
    }
}

/// Date-aligned monthly matrix of named series. `None` marks a missing cell.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorPanel {
    dates: DateIndex,
    names: Vec<String>,
    columns: Vec<Vec<Option<f64>>>,
}

impl FactorPanel {
    pub fn new(
        dates: DateIndex,
        names: Vec<String>,
        columns: Vec<Vec<Option<f64>>>,
    ) -> Result<Self> {
        if names.len() != columns.len() {
            return Err(Error::Shape(format!(
                "{} names for {} columns",
                names.len(),
                columns.len()
            )));
        }
        for (i, n) in names.iter().enumerate() {
            if names[..i].contains(n) {
                return Err(Error::DuplicateColumn(n.clone()));
            }
        }
        for (n, c) in names.iter().zip(&columns) {
            if c.len() != dates.len() {
                return Err(Error::Shape(format!(
                    "column `{n}` has {} entries for {} dates",
                    c.len(),
                    dates.len()
                )));
            }
            if c.iter().flatten().any(|v| !v.is_finite()) {
                return Err(Error::InvalidArgument(format!(
                    "column `{n}` holds a non-finite value"
                )));
            }
        }
        Ok(Self {
            dates,
            names,
            columns,
        })
    }

    pub fn dates(&self) -> &DateIndex {
        &self.dates
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn len(&self) -> usize {
        self.dates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dates.is_empty()
    }

    pub fn column(&self, name: &str) -> Result<&[Option<f64>]> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|j| self.columns[j].as_slice())
            .ok_or_else(|| Error::UnknownColumn(name.to_string()))
    }

    /// Column values with missing cells rejected.
    pub fn values(&self, name: &str) -> Result<Vec<f64>> {
        self.column(name)?
            .iter()
            .enumerate()
            .map(|(t, v)| {
                v.ok_or_else(|| {
                    Error::InvalidArgument(format!(
                        "column `{name}` is missing at {}",
                        self.dates.0[t]
                    ))
                })
            })
            .collect()
    }

    pub fn missing_mask(&self, name: &str) -> Result<Vec<bool>> {
        Ok(self.column(name)?.iter().map(Option::is_none).collect())
    }

    pub fn missing_count(&self) -> usize {
        self.columns
            .iter()
            .flatten()
            .filter(|v| v.is_none())
            .count()
    }

    /// Keeps the named columns, in the given order.
    pub fn select(&self, names: &[String]) -> Result<FactorPanel> {
        let columns = names
            .iter()
            .map(|n| self.column(n).map(<[_]>::to_vec))
            .collect::<Result<Vec<_>>>()?;
        FactorPanel::new(self.dates.clone(), names.to_vec(), columns)
    }

    pub fn rename(&mut self, from: &str, to: &str) -> Result<()> {
        if self.names.iter().any(|n| n == to) {
            return Err(Error::DuplicateColumn(to.to_string()));
        }
        let j = self
            .names
            .iter()
            .position(|n| n == from)
            .ok_or_else(|| Error::UnknownColumn(from.to_string()))?;
        self.names[j] = to.to_string();
        Ok(())
    }

    /// Multiplies every non-missing value of the named columns by `factor`.
    pub fn rescale(&mut self, names: &[String], factor: f64) -> Result<()> {
        for name in names {
            let j = self
                .names
                .iter()
                .position(|n| n == name)
                .ok_or_else(|| Error::UnknownColumn(name.clone()))?;
            for v in self.columns[j].iter_mut().flatten() {
                *v *= factor;
            }
        }
        log::info!("rescaled {} column(s) by {factor}", names.len());
        Ok(())
    }

    /// Writes the normalized layout: header `date,<cols>`, dates as
    /// `YYYY-MM`, missing cells empty, values in shortest round-trip form.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("date");
        for n in &self.names {
            out.push(',');
            out.push_str(&csv_field(n));
        }
        out.push('\n');
        for (t, d) in self.dates.0.iter().enumerate() {
            out.push_str(&d.to_string());
            for c in &self.columns {
                out.push(',');
                if let Some(v) = c[t] {
                    out.push_str(&v.to_string());
                }
            }
            out.push('\n');
        }
        out
    }

    /// Reads the layout written by [`FactorPanel::to_csv`].
    pub fn from_csv(text: &str) -> Result<FactorPanel> {
        let mut lines = text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty());
        let (_, header) = lines.next().ok_or(Error::Parse {
            line: 1,
            message: "empty input".into(),
        })?;
        let header = split_csv_line(header);
        if header.first().map(|s| s.as_str()) != Some("date") {
            return Err(Error::Parse {
                line: 1,
                message: "header must start with `date`".into(),
            });
        }
        let names: Vec<String> = header[1..].to_vec();
        let mut months = Vec::new();
        let mut columns = vec![Vec::new(); names.len()];
        for (i, line) in lines {
            let lineno = i + 1;
            let fields = split_csv_line(line);
            if fields.len() != names.len() + 1 {
                return Err(Error::Parse {
                    line: lineno,
                    message: format!(
                        "expected {} fields, found {}",
                        names.len() + 1,
                        fields.len()
                    ),
                });
            }
            let month: YearMonth = fields[0].parse().map_err(|_| Error::Parse {
                line: lineno,
                message: format!("malformed date `{}`", fields[0]),
            })?;
            months.push(month);
            for (c, f) in columns.iter_mut().zip(&fields[1..]) {
                if f.is_empty() {
                    c.push(None);
                } else {
                    c.push(Some(parse_number(f, lineno)?));
                }
            }
        }
        let dates = DateIndex::new(months)?;
        FactorPanel::new(dates, names, columns)
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn split_csv_line(line: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut cur = String::new();
    let mut quoted = false;
    let mut chars = line.trim_end_matches('\r').chars().peekable();
    while let Some(ch) = chars.next() {
        match ch {
            '"' if quoted && chars.peek() == Some(&'"') => {
                cur.push('"');
                chars.next();
            }
            '"' => quoted = !quoted,
            ',' if !quoted => out.push(std::mem::take(&mut cur).trim().to_string()),
            _ => cur.push(ch),
        }
    }
    out.push(cur.trim().to_string());
    out
}

fn parse_number(token: &str, line: usize) -> Result<f64> {
    let v: f64 = token.trim().parse().map_err(|_| Error::Parse {
        line,
        message: format!("malformed number `{token}`"),
    })?;
    if !v.is_finite() {
        return Err(Error::Parse {
            line,
            message: format!("non-finite value `{token}`"),
        });
    }
    Ok(v)
}

/// Options for [`parse_ff_csv`].
#[derive(Debug, Clone, PartialEq)]
pub struct ParseOptions {
    /// Column names to use instead of the header line preceding the block.
    pub columns: Option<Vec<String>>,
    /// Values that mark a missing observation, matched exactly.
    pub sentinels: Vec<f64>,
}

impl Default for ParseOptions {
    fn default() -> Self {
        Self {
            columns: None,
            sentinels: DEFAULT_SENTINELS.to_vec(),
        }
    }
}

fn split_fields(line: &str) -> Vec<String> {
    if line.contains(',') {
        split_csv_line(line)
    } else {
        line.split_whitespace().map(str::to_string).collect()
    }
}

/// Parses the first monthly block of a French-library file.
///
/// Lines before the block (prose, blank lines, the header) are skipped; the
/// block ends at the first line that is not a `YYYYMM` row, so annual
/// summaries and later blocks are ignored.
pub fn parse_ff_csv(text: &str, options: &ParseOptions) -> Result<FactorPanel> {
    let mut header: Option<Vec<String>> = None;
    let mut months = Vec::new();
    let mut rows: Vec<Vec<Option<f64>>> = Vec::new();
    let mut first_line = 0;

    for (i, raw) in text.lines().enumerate() {
        let lineno = i + 1;
        let line = raw.trim_end_matches('\r');
        let fields = split_fields(line);
        let key = fields.first().map(|s| s.as_str()).unwrap_or("");
        let starts_numeric = key.bytes().next().is_some_and(|b| b.is_ascii_digit());

        if !starts_numeric {
            if !months.is_empty() {
                break;
            }
            if !line.trim().is_empty() {
                header = Some(fields);
            }
            continue;
        }
        if key.len() == 4 && key.bytes().all(|b| b.is_ascii_digit()) {
            // annual row
            if !months.is_empty() {
                break;
            }
            continue;
        }
        let month = YearMonth::parse_compact(key).ok_or_else(|| Error::Parse {
            line: lineno,
            message: format!("malformed date token `{key}`"),
        })?;
        if months.is_empty() {
            first_line = lineno;
        }
        let values = fields[1..]
            .iter()
            .map(|f| {
                let v = parse_number(f, lineno)?;
                Ok(if options.sentinels.contains(&v) {
                    None
                } else {
                    Some(v)
                })
            })
            .collect::<Result<Vec<_>>>()?;
        if let Some(first) = rows.first() {
            if values.len() != first.len() {
                return Err(Error::Parse {
                    line: lineno,
                    message: format!(
                        "ragged row: {} values, expected {}",
                        values.len(),
                        first.len()
                    ),
                });
            }
        }
        months.push(month);
        rows.push(values);
    }

    if rows.is_empty() {
        return Err(Error::Parse {
            line: text.lines().count().max(1),
            message: "no monthly YYYYMM rows found".into(),
        });
    }
    let width = rows[0].len();
    let names = match &options.columns {
        Some(cols) => cols.clone(),
        None => {
            let mut h: Vec<String> = header.unwrap_or_default();
            // the header usually has an empty (or date) label over the key column
            if h.len() == width + 1 {
                h.remove(0);
            }
            if h.len() != width || h.iter().any(|s| s.is_empty()) {
                (1..=width).map(|j| format!("col{j}")).collect()
            } else {
                h
            }
        }
    };
    if names.len() != width {
        return Err(Error::Parse {
            line: first_line,
            message: format!("{} column names for {width} values", names.len()),
        });
    }
    let dates = DateIndex::contiguous(months).map_err(|e| Error::Parse {
        line: first_line,
        message: e.to_string(),
    })?;
    let mut columns = vec![Vec::with_capacity(rows.len()); width];
    for row in rows {
        for (c, v) in columns.iter_mut().zip(row) {
            c.push(v);
        }
    }
    FactorPanel::new(dates, names, columns)
}

/// A monthly labor-income growth series.
#[derive(Debug, Clone, PartialEq)]
pub struct LaborIncomeSeries {
    pub dates: DateIndex,
    pub values: Vec<f64>,
}

impl LaborIncomeSeries {
    pub fn new(dates: DateIndex, values: Vec<f64>) -> Result<Self> {
        if dates.len() != values.len() {
            return Err(Error::Shape(format!(
                "{} values for {} dates",
                values.len(),
                dates.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(
                "labor income series has a non-finite value".into(),
            ));
        }
        Ok(Self { dates, values })
    }

    pub fn into_panel(self, name: &str) -> FactorPanel {
        let column = self.values.into_iter().map(Some).collect();
        FactorPanel::new(self.dates, vec![name.to_string()], vec![column])
            .expect("series invariants imply panel invariants")
    }
}

/// One quarterly observation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuarterValue {
    pub year: i32,
    pub quarter: u32,
    pub value: f64,
}

/// Replicates each quarterly value to its three months.
pub fn quarterly_to_monthly(quarterly: &[QuarterValue]) -> Result<LaborIncomeSeries> {
    let mut months = Vec::with_capacity(3 * quarterly.len());
    let mut values = Vec::with_capacity(3 * quarterly.len());
    for (i, q) in quarterly.iter().enumerate() {
        if !(1..=4).contains(&q.quarter) {
            return Err(Error::InvalidArgument(format!(
                "quarter {} out of range",
                q.quarter
            )));
        }
        if i > 0 {
            let p = quarterly[i - 1];
            let expected = if p.quarter == 4 {
                (p.year + 1, 1)
            } else {
                (p.year, p.quarter + 1)
            };
            if (q.year, q.quarter) != expected {
                return Err(Error::DateIndex(format!(
                    "{}Q{} does not immediately follow {}Q{}",
                    q.year, q.quarter, p.year, p.quarter
                )));
            }
        }
        for k in 1..=3 {
            months.push(YearMonth::new(q.year, 3 * (q.quarter - 1) + k)?);
            values.push(q.value);
        }
    }
    LaborIncomeSeries::new(DateIndex::contiguous(months)?, values)
}

/// Reads `year,quarter,value` rows; a header row and `Q` prefixes on the
/// quarter are tolerated.
pub fn parse_quarterly_csv(text: &str) -> Result<Vec<QuarterValue>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let lineno = i + 1;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields = split_fields(line);
        if out.is_empty() && fields.first().is_some_and(|f| f.parse::<i32>().is_err()) {
            continue;
        }
        if fields.len() != 3 {
            return Err(Error::Parse {
                line: lineno,
                message: format!("expected year,quarter,value; found {} fields", fields.len()),
            });
        }
        let err = |what: &str| Error::Parse {
            line: lineno,
            message: format!("malformed {what}"),
        };
        let year = fields[0].parse().map_err(|_| err("year"))?;
        let quarter = fields[1]
            .trim_start_matches(['Q', 'q'])
            .parse()
            .map_err(|_| err("quarter"))?;
        let value = parse_number(&fields[2], lineno)?;
        out.push(QuarterValue {
            year,
            quarter,
            value,
        });
    }
    Ok(out)
}

/// Result of [`align_panels`].
#[derive(Debug, Clone, PartialEq)]
pub struct AlignedPanel {
    pub panel: FactorPanel,
    /// Rows inside the common range removed because a cell was missing.
    pub dropped_rows: usize,
}

/// Inner-joins panels on month, restricted to `range` when given, and drops
/// every row that still has a missing cell.
pub fn align_panels(
    panels: &[&FactorPanel],
    range: Option<(YearMonth, YearMonth)>,
) -> Result<AlignedPanel> {
    let (first, rest) = panels
        .split_first()
        .ok_or_else(|| Error::InvalidArgument("align_panels needs at least one panel".into()))?;
    if let Some((s, e)) = range {
        if s > e {
            return Err(Error::InvalidArgument(format!("empty range {s}..{e}")));
        }
    }
    let in_range = |m: &YearMonth| range.is_none_or(|(s, e)| *m >= s && *m <= e);

    let mut common: Vec<YearMonth> = first.dates.0.iter().copied().filter(in_range).collect();
    for p in rest {
        common.retain(|m| p.dates.0.binary_search(m).is_ok());
    }
    if common.is_empty() {
        let desc = panels
            .iter()
            .map(|p| match (p.dates.first(), p.dates.last()) {
                (Some(a), Some(b)) => format!("[{}: {a}..{b}]", p.names.join(",")),
                _ => format!("[{}: empty]", p.names.join(",")),
            })
            .collect::<Vec<_>>()
            .join(" and ");
        let desc = match range {
            Some((s, e)) => format!("{desc} within {s}..{e}"),
            None => desc,
        };
        return Err(Error::DisjointPanels(desc));
    }

    let mut names = Vec::new();
    let mut columns: Vec<Vec<Option<f64>>> = Vec::new();
    for p in panels {
        let rows: Vec<usize> = common
            .iter()
            .map(|m| p.dates.0.binary_search(m).expect("month is common"))
            .collect();
        for (n, c) in p.names.iter().zip(&p.columns) {
            if names.contains(n) {
                return Err(Error::DuplicateColumn(n.clone()));
            }
            names.push(n.clone());
            columns.push(rows.iter().map(|&r| c[r]).collect());
        }
    }

    let keep: Vec<bool> = (0..common.len())
        .map(|t| columns.iter().all(|c| c[t].is_some()))
        .collect();
    let dropped_rows = keep.iter().filter(|k| !**k).count();
    if dropped_rows > 0 {
        log::info!("align_panels: dropped {dropped_rows} row(s) with missing cells");
    }
    let months: Vec<YearMonth> = common
        .iter()
        .zip(&keep)
        .filter(|(_, k)| **k)
        .map(|(m, _)| *m)
        .collect();
    if months.is_empty() {
        return Err(Error::DisjointPanels(
            "every common month has a missing cell".into(),
        ));
    }
    let columns = columns
        .into_iter()
        .map(|c| {
            c.into_iter()
                .zip(&keep)
                .filter(|(_, k)| **k)
                .map(|(v, _)| v)
                .collect()
        })
        .collect();
    Ok(AlignedPanel {
        panel: FactorPanel::new(DateIndex::new(months)?, names, columns)?,
        dropped_rows,
    })
}

/// Summary statistics of one column over its non-missing cells.
#[derive(Debug, Clone, PartialEq)]
pub struct ColumnStats {
    pub column: String,
    pub count: usize,
    pub mean: f64,
    /// Sample standard deviation (divisor n - 1).
    pub sd: f64,
    pub min: f64,
    pub max: f64,
}

pub fn descriptive_stats(panel: &FactorPanel) -> Result<Vec<ColumnStats>> {
    panel
        .names
        .iter()
        .zip(&panel.columns)
        .map(|(name, col)| {
            let vals: Vec<f64> = col.iter().flatten().copied().collect();
            let n = vals.len();
            if n < 2 {
                return Err(Error::InsufficientData(name.clone()));
            }
            let mean = vals.iter().sum::<f64>() / n as f64;
            let ss: f64 = vals.iter().map(|v| (v - mean).powi(2)).sum();
            let sd = (ss / (n - 1) as f64).sqrt();
            Ok(ColumnStats {
                column: name.clone(),
                count: n,
                mean,
                sd,
                min: vals.iter().cloned().fold(f64::INFINITY, f64::min),
                max: vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ym(y: i32, m: u32) -> YearMonth {
        YearMonth::new(y, m).unwrap()
    }

    fn names(n: &[&str]) -> Vec<String> {
        n.iter().map(|s| s.to_string()).collect()
    }

    const FF_SAMPLE: &str =
        "This file was created by CMPT_ME_BEME_RETS using the 201707 CRSP database.
The 1-month TBill return is from Ibbotson and Associates, Inc.

,Mkt-RF,SMB,HML
198601,    0.65,    1.23,    0.53
198602,    7.13,   -0.66,   -0.95
198603,    4.88,   -0.63,   -0.45
198604,   -1.31,    2.84,  -99.99

 Annual Factors: January-December 
,Mkt-RF,SMB,HML
1986,    9.38,   -8.70,    9.91
1987,   -3.64,   -9.54,   -1.46
";

    #[test]
    fn parses_row_with_named_columns() {
        let opts = ParseOptions {
            columns: Some(names(&["a", "b", "c"])),
            ..Default::default()
        };
        let p = parse_ff_csv("198601  1.25 -0.30  0.10\n", &opts).unwrap();
        assert_eq!(p.dates().months(), &[ym(1986, 1)]);
        assert_eq!(p.values("a").unwrap(), vec![1.25]);
        assert_eq!(p.values("b").unwrap(), vec![-0.30]);
        assert_eq!(p.values("c").unwrap(), vec![0.10]);
    }

    #[test]
    fn sentinel_marks_missing() {
        let opts = ParseOptions {
            columns: Some(names(&["a", "b", "c"])),
            ..Default::default()
        };
        let p = parse_ff_csv("198601  -99.99  0.50  0.10\n", &opts).unwrap();
        assert_eq!(p.column("a").unwrap(), &[None]);
        assert_eq!(p.column("b").unwrap(), &[Some(0.5)]);
        let p = parse_ff_csv("198601  -999  0.50  0.10\n", &opts).unwrap();
        assert_eq!(p.missing_mask("a").unwrap(), vec![true]);
    }

    #[test]
    fn only_monthly_block_is_ingested() {
        let p = parse_ff_csv(FF_SAMPLE, &ParseOptions::default()).unwrap();
        let expected = FF_SAMPLE
            .lines()
            .filter(|l| l.len() >= 6 && l[..6].bytes().all(|b| b.is_ascii_digit()))
            .count();
        assert_eq!(p.len(), expected);
        assert_eq!(p.names(), &names(&["Mkt-RF", "SMB", "HML"])[..]);
        assert_eq!(p.column("HML").unwrap()[3], None);
        assert_eq!(p.dates().last(), Some(ym(1986, 4)));
    }

    #[test]
    fn header_with_spaces_in_names() {
        let text = ",SMALL LoBM,ME1 BM2\n198601, 1.0, 2.0\n198602, 3.0, 4.0\n";
        let p = parse_ff_csv(text, &ParseOptions::default()).unwrap();
        assert_eq!(p.names(), &names(&["SMALL LoBM", "ME1 BM2"])[..]);
    }

    #[test]
    fn malformed_date_reports_line() {
        let text = "x,a\n198601,1.0\n198613,2.0\n";
        match parse_ff_csv(text, &ParseOptions::default()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn ragged_row_is_an_error() {
        let text = "198601 1.0 2.0\n198602 1.0\n";
        match parse_ff_csv(text, &ParseOptions::default()) {
            Err(Error::Parse { line, message }) => {
                assert_eq!(line, 2);
                assert!(message.contains("ragged"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn empty_block_is_an_error() {
        assert!(parse_ff_csv("just prose\n\n1986, 1.0\n", &ParseOptions::default()).is_err());
    }

    #[test]
    fn gap_in_months_is_an_error() {
        assert!(parse_ff_csv("198601 1.0\n198603 1.0\n", &ParseOptions::default()).is_err());
    }

    #[test]
    fn quarterly_replication() {
        let s = quarterly_to_monthly(&[QuarterValue {
            year: 1986,
            quarter: 1,
            value: 17.0,
        }])
        .unwrap();
        assert_eq!(s.dates.months(), &[ym(1986, 1), ym(1986, 2), ym(1986, 3)]);
        assert_eq!(s.values, vec![17.0; 3]);

        let s = quarterly_to_monthly(&[
            QuarterValue {
                year: 1986,
                quarter: 4,
                value: 1.0,
            },
            QuarterValue {
                year: 1987,
                quarter: 1,
                value: 2.0,
            },
        ])
        .unwrap();
        assert_eq!(s.values, vec![1.0, 1.0, 1.0, 2.0, 2.0, 2.0]);
        assert_eq!(s.dates.first(), Some(ym(1986, 10)));
        assert_eq!(s.dates.last(), Some(ym(1987, 3)));
        assert!(s.dates.is_contiguous());
    }

    #[test]
    fn quarterly_gap_is_an_error() {
        let r = quarterly_to_monthly(&[
            QuarterValue {
                year: 1986,
                quarter: 1,
                value: 1.0,
            },
            QuarterValue {
                year: 1986,
                quarter: 3,
                value: 2.0,
            },
        ]);
        assert!(matches!(r, Err(Error::DateIndex(_))));
    }

    #[test]
    fn quarterly_csv_accepts_header_and_prefix() {
        let q = parse_quarterly_csv("year,quarter,value\n1986,Q1,17.5\n1986,2,18\n").unwrap();
        assert_eq!(q.len(), 2);
        assert_eq!(q[0].quarter, 1);
        assert_eq!(q[1].value, 18.0);
    }

    fn panel(name: &str, start: YearMonth, end: YearMonth) -> FactorPanel {
        let dates = DateIndex::range(start, end);
        let col = (0..dates.len()).map(|i| Some(i as f64)).collect();
        FactorPanel::new(dates, vec![name.into()], vec![col]).unwrap()
    }

    #[test]
    fn join_starts_at_later_panel() {
        let a = panel("a", ym(1986, 1), ym(2017, 5));
        let b = panel("b", ym(1990, 1), ym(2017, 5));
        let j = align_panels(&[&a, &b], None).unwrap();
        assert_eq!(j.panel.dates().first(), Some(ym(1990, 1)));
        assert_eq!(j.panel.dates().last(), Some(ym(2017, 5)));
        assert_eq!(j.dropped_rows, 0);
    }

    #[test]
    fn join_of_identical_panel_is_identity() {
        let a = panel("a", ym(1986, 1), ym(1990, 12));
        let j = align_panels(&[&a], None).unwrap();
        assert_eq!(j.panel, a);
    }

    #[test]
    fn missing_cell_row_is_dropped() {
        let mut a = panel("a", ym(1995, 1), ym(1995, 12));
        a.columns[0][5] = None;
        let b = panel("b", ym(1995, 1), ym(1995, 12));
        let j = align_panels(&[&a, &b], None).unwrap();
        assert_eq!(j.panel.len(), a.len() - 1);
        assert!(!j.panel.dates().months().contains(&ym(1995, 6)));
        assert_eq!(j.dropped_rows, 1);
    }

    #[test]
    fn disjoint_panels_are_named() {
        let a = panel("a", ym(1986, 1), ym(1987, 1));
        let b = panel("b", ym(1990, 1), ym(1991, 1));
        match align_panels(&[&a, &b], None) {
            Err(Error::DisjointPanels(msg)) => {
                assert!(msg.contains("[a:") && msg.contains("[b:"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn range_restricts_join() {
        let a = panel("a", ym(1980, 1), ym(2020, 12));
        let j = align_panels(&[&a], Some((ym(1986, 1), ym(2017, 5)))).unwrap();
        assert_eq!(j.panel.len(), 31 * 12 + 5);
    }

    #[test]
    fn stats_of_simple_columns() {
        let dates = DateIndex::range(ym(2000, 1), ym(2000, 2));
        let p = FactorPanel::new(
            dates,
            names(&["c", "x"]),
            vec![vec![Some(5.0), Some(5.0)], vec![Some(1.0), Some(3.0)]],
        )
        .unwrap();
        let s = descriptive_stats(&p).unwrap();
        assert_eq!((s[0].mean, s[0].sd), (5.0, 0.0));
        assert_eq!(s[1].mean, 2.0);
        assert!((s[1].sd - 2f64.sqrt()).abs() < 1e-15);
        assert_eq!((s[1].min, s[1].max), (1.0, 3.0));
    }

    #[test]
    fn stats_reject_all_missing_column() {
        let dates = DateIndex::range(ym(2000, 1), ym(2000, 2));
        let p = FactorPanel::new(dates, names(&["gone"]), vec![vec![None, None]]).unwrap();
        assert_eq!(
            descriptive_stats(&p),
            Err(Error::InsufficientData("gone".into()))
        );
    }

    #[test]
    fn normalized_csv_layout() {
        let dates = DateIndex::range(ym(1999, 12), ym(2000, 1));
        let p = FactorPanel::new(
            dates,
            names(&["a", "b"]),
            vec![vec![Some(0.1), None], vec![Some(-2.5), Some(3.0)]],
        )
        .unwrap();
        assert_eq!(p.to_csv(), "date,a,b\n1999-12,0.1,-2.5\n2000-01,,3\n");
        assert_eq!(FactorPanel::from_csv(&p.to_csv()).unwrap(), p);
    }
}
