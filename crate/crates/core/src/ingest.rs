//! Dyadic flow records, mirror reconciliation and the canonical matrix file.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::io::{BufRead, BufReader, Read, Write};
use std::str::FromStr;

use serde::Serialize;
use thiserror::Error;

use crate::scalar::Scalar;

/// Disagreements between mirror reports above this relative level count as
/// conflicts.
pub const CONFLICT_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("malformed matrix file at line {line}: {reason}")]
    MatrixFormat { line: usize, reason: String },
    #[error("invalid country code {0:?}: codes must be non-empty and contain no whitespace")]
    CountryCode(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// One reported bilateral flow, in millions of current-year USD.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DyadicRecord {
    pub year: i32,
    pub reporter: String,
    pub partner: String,
    /// Exports of `reporter` to `partner`.
    pub exports: Option<f64>,
    /// Imports of `reporter` from `partner`.
    pub imports: Option<f64>,
    /// Source line (1-based, header is line 1); 0 for records built in code.
    pub line: usize,
}

impl DyadicRecord {
    pub fn new(
        year: i32,
        reporter: &str,
        partner: &str,
        exports: Option<f64>,
        imports: Option<f64>,
    ) -> Self {
        DyadicRecord {
            year,
            reporter: reporter.to_string(),
            partner: partner.to_string(),
            exports,
            imports,
            line: 0,
        }
    }

    fn id(&self) -> String {
        if self.line > 0 {
            format!("line {}", self.line)
        } else {
            format!("{} {}->{}", self.year, self.reporter, self.partner)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DroppedRecord {
    pub record: String,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ValidationReport {
    pub n_records: usize,
    pub n_conflicts: usize,
    pub max_relative_conflict: f64,
    pub dropped: Vec<DroppedRecord>,
    /// Countries with zero total trade.
    pub isolated: Vec<String>,
    /// Broken matrix invariants, one entry per offending cell.
    pub violations: Vec<String>,
}

impl ValidationReport {
    pub fn is_clean(&self) -> bool {
        self.n_conflicts == 0
            && self.dropped.is_empty()
            && self.isolated.is_empty()
            && self.violations.is_empty()
    }

    fn drop_record(&mut self, record: String, reason: impl Into<String>) {
        self.dropped.push(DroppedRecord {
            record,
            reason: reason.into(),
        });
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "records: {}, conflicts: {} (max relative {:.3e}), dropped: {}",
            self.n_records,
            self.n_conflicts,
            self.max_relative_conflict,
            self.dropped.len()
        )?;
        for d in &self.dropped {
            writeln!(f, "  dropped {}: {}", d.record, d.reason)?;
        }
        if !self.isolated.is_empty() {
            writeln!(f, "  isolated: {}", self.isolated.join(" "))?;
        }
        for v in &self.violations {
            writeln!(f, "  violation: {v}")?;
        }
        Ok(())
    }
}

/// Column mapping for delimited input.
///
/// Textual form: comma separated `key=value` pairs, e.g.
/// `year=year,reporter=acra,partner=acrb,exports=expab,imports=impab,missing=-9|NA,delimiter=tab`.
#[derive(Debug, Clone, PartialEq)]
pub struct FormatMap {
    pub year: String,
    pub reporter: String,
    pub partner: String,
    pub exports: String,
    pub imports: String,
    /// `None` detects tab vs comma from the header line.
    pub delimiter: Option<u8>,
    /// Cell values read as "no reported flow".
    pub missing: Vec<String>,
}

impl Default for FormatMap {
    fn default() -> Self {
        FormatMap {
            year: "year".into(),
            reporter: "reporter".into(),
            partner: "partner".into(),
            exports: "exports".into(),
            imports: "imports".into(),
            delimiter: None,
            missing: vec!["".into(), "NA".into(), "NaN".into(), ".".into()],
        }
    }
}

impl FromStr for FormatMap {
    type Err = IngestError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut map = FormatMap::default();
        for pair in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let (key, value) = pair
                .split_once('=')
                .ok_or_else(|| IngestError::Config(format!("expected key=value, got {pair:?}")))?;
            let value = value.trim().to_string();
            match key.trim() {
                "year" => map.year = value,
                "reporter" => map.reporter = value,
                "partner" => map.partner = value,
                "exports" => map.exports = value,
                "imports" => map.imports = value,
                "missing" => map.missing = value.split('|').map(str::to_string).collect(),
                "delimiter" => {
                    map.delimiter = Some(match value.as_str() {
                        "tab" | "\\t" => b'\t',
                        "comma" | "," => b',',
                        "auto" => {
                            map.delimiter = None;
                            continue;
                        }
                        other if other.len() == 1 => other.as_bytes()[0],
                        other => {
                            return Err(IngestError::Config(format!("bad delimiter {other:?}")))
                        }
                    })
                }
                other => return Err(IngestError::Config(format!("unknown format key {other:?}"))),
            }
        }
        Ok(map)
    }
}

#[derive(Debug, Clone)]
pub struct ParsedRecords {
    pub records: Vec<DyadicRecord>,
    pub report: ValidationReport,
}

fn valid_code(code: &str) -> bool {
    !code.is_empty() && !code.chars().any(char::is_whitespace)
}

/// Reads delimited dyadic records. Well-formed rows become records; rows that
/// fail to parse are listed in the report with their line number.
pub fn parse_dyadic_records<R: Read>(
    stream: R,
    format: &FormatMap,
) -> Result<ParsedRecords, IngestError> {
    let mut reader = BufReader::new(stream);
    let delimiter = match format.delimiter {
        Some(d) => d,
        None => {
            let head = reader.fill_buf()?;
            let first_line = head.split(|&b| b == b'\n').next().unwrap_or(&[]);
            if first_line.contains(&b'\t') {
                b'\t'
            } else {
                b','
            }
        }
    };
    let mut csv_reader = csv::ReaderBuilder::new()
        .delimiter(delimiter)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);

    let mut report = ValidationReport::default();
    let headers = csv_reader.headers()?.clone();
    if headers.is_empty() || (headers.len() == 1 && headers[0].is_empty()) {
        return Ok(ParsedRecords {
            records: Vec::new(),
            report,
        });
    }
    let column = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| IngestError::Config(format!("missing required column {name:?}")))
    };
    let year_col = column(&format.year)?;
    let reporter_col = column(&format.reporter)?;
    let partner_col = column(&format.partner)?;
    let exports_col = column(&format.exports)?;
    let imports_col = column(&format.imports)?;

    let parse_flow = |cell: Option<&str>| -> Result<Option<f64>, String> {
        let cell = cell.unwrap_or("");
        if format.missing.iter().any(|m| m == cell) {
            return Ok(None);
        }
        let value: f64 = cell
            .parse()
            .map_err(|_| format!("non-numeric flow value {cell:?}"))?;
        if !value.is_finite() {
            return Err(format!("non-finite flow value {cell:?}"));
        }
        if value < 0.0 {
            return Err(format!("negative flow value {cell:?}"));
        }
        Ok(Some(value))
    };

    let mut records = Vec::new();
    for (row_idx, row) in csv_reader.records().enumerate() {
        let line = row_idx + 2;
        report.n_records += 1;
        let row = match row {
            Ok(row) => row,
            Err(e) => {
                report.drop_record(format!("line {line}"), e.to_string());
                continue;
            }
        };
        let parsed = (|| -> Result<DyadicRecord, String> {
            let year_cell = row.get(year_col).unwrap_or("");
            let year: i32 = year_cell
                .parse()
                .map_err(|_| format!("non-integer year {year_cell:?}"))?;
            let reporter = row.get(reporter_col).unwrap_or("");
            let partner = row.get(partner_col).unwrap_or("");
            if !valid_code(reporter) || !valid_code(partner) {
                return Err("invalid country code".into());
            }
            if reporter == partner {
                return Err("self-trade".into());
            }
            Ok(DyadicRecord {
                year,
                reporter: reporter.to_string(),
                partner: partner.to_string(),
                exports: parse_flow(row.get(exports_col))?,
                imports: parse_flow(row.get(imports_col))?,
                line,
            })
        })();
        match parsed {
            Ok(record) => records.push(record),
            Err(reason) => report.drop_record(format!("line {line}"), reason),
        }
    }
    Ok(ParsedRecords { records, report })
}

/// How to combine an exporter's report with the importer's mirror report.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ReconcilePolicy {
    #[default]
    Average,
    PreferImporter,
    PreferExporter,
    Max,
}

impl ReconcilePolicy {
    pub const ALL: [ReconcilePolicy; 4] = [
        ReconcilePolicy::Average,
        ReconcilePolicy::PreferImporter,
        ReconcilePolicy::PreferExporter,
        ReconcilePolicy::Max,
    ];

    fn combine(self, exporter: f64, importer: f64) -> f64 {
        match self {
            ReconcilePolicy::Average => 0.5 * (exporter + importer),
            ReconcilePolicy::PreferImporter => importer,
            ReconcilePolicy::PreferExporter => exporter,
            ReconcilePolicy::Max => exporter.max(importer),
        }
    }
}

impl FromStr for ReconcilePolicy {
    type Err = IngestError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "average" => Ok(ReconcilePolicy::Average),
            "prefer-importer" => Ok(ReconcilePolicy::PreferImporter),
            "prefer-exporter" => Ok(ReconcilePolicy::PreferExporter),
            "max" => Ok(ReconcilePolicy::Max),
            other => Err(IngestError::Config(format!(
                "unknown reconcile policy {other:?} (expected average, prefer-importer, prefer-exporter or max)"
            ))),
        }
    }
}

impl fmt::Display for ReconcilePolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ReconcilePolicy::Average => "average",
            ReconcilePolicy::PreferImporter => "prefer-importer",
            ReconcilePolicy::PreferExporter => "prefer-exporter",
            ReconcilePolicy::Max => "max",
        })
    }
}

/// Square export matrix for one year: `get(i, j)` is exports of country `i`
/// to country `j`.
#[derive(Debug, Clone, PartialEq)]
pub struct TradeMatrix<S> {
    pub year: i32,
    pub countries: Vec<String>,
    values: Vec<S>,
}

impl<S: Scalar> TradeMatrix<S> {
    pub fn zeros(year: i32, countries: Vec<String>) -> Self {
        let n = countries.len();
        TradeMatrix {
            year,
            countries,
            values: vec![S::zero(); n * n],
        }
    }

    /// Builds from dense rows; panics if `rows` is not `n × n`.
    pub fn from_rows(year: i32, countries: Vec<String>, rows: &[Vec<S>]) -> Self {
        let n = countries.len();
        assert_eq!(rows.len(), n, "row count must match country count");
        let mut values = Vec::with_capacity(n * n);
        for row in rows {
            assert_eq!(row.len(), n, "matrix must be square");
            values.extend_from_slice(row);
        }
        TradeMatrix {
            year,
            countries,
            values,
        }
    }

    pub fn len(&self) -> usize {
        self.countries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.countries.is_empty()
    }

    pub fn get(&self, i: usize, j: usize) -> S {
        self.values[i * self.len() + j]
    }

    pub fn set(&mut self, i: usize, j: usize, value: S) {
        let n = self.len();
        self.values[i * n + j] = value;
    }

    pub fn index_of(&self, code: &str) -> Option<usize> {
        self.countries.iter().position(|c| c == code)
    }

    /// Converts every entry into another scalar type.
    pub fn convert<T: Scalar>(&self, mut f: impl FnMut(S) -> T) -> TradeMatrix<T> {
        TradeMatrix {
            year: self.year,
            countries: self.countries.clone(),
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }
}

fn relative_gap(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale == 0.0 {
        0.0
    } else {
        (a - b).abs() / scale
    }
}

/// Merges reporter-side exports and partner-side mirror imports into one
/// export matrix for `year`. Records from other years are ignored.
///
/// Country order is lexicographic by code. A flow reported by one side only is
/// taken as is; a flow reported by neither side is zero.
pub fn reconcile_flows(
    records: &[DyadicRecord],
    year: i32,
    policy: ReconcilePolicy,
) -> (TradeMatrix<f64>, ValidationReport) {
    let mut report = ValidationReport::default();
    let in_year: Vec<&DyadicRecord> = records.iter().filter(|r| r.year == year).collect();
    report.n_records = in_year.len();

    let countries: Vec<String> = in_year
        .iter()
        .flat_map(|r| [r.reporter.clone(), r.partner.clone()])
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let index: HashMap<&str, usize> = countries
        .iter()
        .enumerate()
        .map(|(i, c)| (c.as_str(), i))
        .collect();
    let n = countries.len();

    // exporter-side and importer-side reports of E[i][j]
    let mut export_side: Vec<Option<f64>> = vec![None; n * n];
    let mut import_side: Vec<Option<f64>> = vec![None; n * n];
    let mut seen = vec![false; n * n];

    for record in in_year {
        if record.reporter == record.partner {
            report.drop_record(record.id(), "self-trade");
            continue;
        }
        let r = index[record.reporter.as_str()];
        let p = index[record.partner.as_str()];
        if seen[r * n + p] {
            report.drop_record(record.id(), "duplicate record");
            continue;
        }
        seen[r * n + p] = true;
        export_side[r * n + p] = record.exports;
        import_side[p * n + r] = record.imports;
    }

    let mut matrix = TradeMatrix::zeros(year, countries);
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let value = match (export_side[i * n + j], import_side[i * n + j]) {
                (Some(e), Some(m)) => {
                    let gap = relative_gap(e, m);
                    if gap > CONFLICT_TOLERANCE {
                        report.n_conflicts += 1;
                    }
                    report.max_relative_conflict = report.max_relative_conflict.max(gap);
                    policy.combine(e, m)
                }
                (Some(e), None) => e,
                (None, Some(m)) => m,
                (None, None) => 0.0,
            };
            matrix.set(i, j, value);
        }
    }
    (matrix, report)
}

/// Checks matrix invariants and lists countries without any trade.
pub fn validate_trade_matrix<S: Scalar>(tm: &TradeMatrix<S>) -> ValidationReport {
    let mut report = ValidationReport::default();
    let n = tm.len();
    for i in 0..n {
        for j in 0..n {
            let v = tm.get(i, j);
            let cell = || format!("E[{}][{}]", tm.countries[i], tm.countries[j]);
            if !v.is_finite_value() {
                report.violations.push(format!("{} is not finite", cell()));
            } else if v < S::zero() {
                report.violations.push(format!("{} = {} is negative", cell(), v));
            } else if i == j && !v.is_zero() {
                report.violations.push(format!("{} = {} on the diagonal", cell(), v));
            }
        }
    }
    for i in 0..n {
        let trades = (0..n).any(|j| j != i && (!tm.get(i, j).is_zero() || !tm.get(j, i).is_zero()));
        if !trades {
            report.isolated.push(tm.countries[i].clone());
        }
    }
    report
}

/// Decimal rendering with at most six fractional digits and no exponent.
pub fn format_decimal(value: f64) -> String {
    let shortest = format!("{value}");
    let fractional = shortest.split_once('.').map_or(0, |(_, f)| f.len());
    if fractional <= 6 && !shortest.contains(['e', 'E']) {
        return shortest;
    }
    let fixed = format!("{value:.6}");
    let trimmed = fixed.trim_end_matches('0').trim_end_matches('.');
    if trimmed == "-0" {
        "0".to_string()
    } else {
        trimmed.to_string()
    }
}

/// Writes the canonical matrix file: `#year <Y>`, a `#countries` line with
/// every code in order, then `i j E_ij` for each nonzero entry in row-major
/// order.
pub fn write_trade_matrix<W: Write>(tm: &TradeMatrix<f64>, mut out: W) -> Result<(), IngestError> {
    if let Some(bad) = tm.countries.iter().find(|c| !valid_code(c)) {
        return Err(IngestError::CountryCode(bad.clone()));
    }
    writeln!(out, "#year {}", tm.year)?;
    writeln!(out, "#countries {}", tm.countries.join(" "))?;
    for i in 0..tm.len() {
        for j in 0..tm.len() {
            let v = tm.get(i, j);
            if v != 0.0 {
                writeln!(out, "{} {} {}", tm.countries[i], tm.countries[j], format_decimal(v))?;
            }
        }
    }
    Ok(())
}

/// Reads the canonical matrix file. Without a `#countries` line the country
/// set is the sorted union of codes appearing in the triples.
pub fn read_trade_matrix<R: Read>(input: R) -> Result<TradeMatrix<f64>, IngestError> {
    let reader = BufReader::new(input);
    let mut year = None;
    let mut declared: Option<Vec<String>> = None;
    let mut triples = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let err = |reason: &str| IngestError::MatrixFormat {
            line: line_no,
            reason: reason.to_string(),
        };
        if let Some(rest) = line.strip_prefix("#year") {
            year = Some(rest.trim().parse::<i32>().map_err(|_| err("bad year"))?);
            continue;
        }
        if let Some(rest) = line.strip_prefix("#countries") {
            declared = Some(rest.split_whitespace().map(str::to_string).collect());
            continue;
        }
        if line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 3 {
            return Err(err("expected `i j E_ij`"));
        }
        let value: f64 = fields[2].parse().map_err(|_| err("non-numeric value"))?;
        triples.push((fields[0].to_string(), fields[1].to_string(), value, line_no));
    }
    let year = year.ok_or(IngestError::MatrixFormat {
        line: 1,
        reason: "missing #year header".into(),
    })?;
    let countries = match declared {
        Some(c) => c,
        None => triples
            .iter()
            .flat_map(|(a, b, _, _)| [a.clone(), b.clone()])
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect(),
    };
    let mut tm = TradeMatrix::zeros(year, countries);
    for (a, b, v, line) in triples {
        let (i, j) = match (tm.index_of(&a), tm.index_of(&b)) {
            (Some(i), Some(j)) => (i, j),
            _ => {
                return Err(IngestError::MatrixFormat {
                    line,
                    reason: "country not in #countries list".into(),
                })
            }
        };
        tm.set(i, j, v);
    }
    Ok(tm)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> ParsedRecords {
        parse_dyadic_records(text.as_bytes(), &FormatMap::default()).unwrap()
    }

    #[test]
    fn parses_direct_field_mapping() {
        let parsed = parse("year,reporter,partner,exports,imports\n2000,USA,JPN,65254,146577\n");
        assert_eq!(
            parsed.records,
            vec![DyadicRecord {
                line: 2,
                ..DyadicRecord::new(2000, "USA", "JPN", Some(65254.0), Some(146577.0))
            }]
        );
        assert_eq!(parsed.report.n_records, 1);
    }

    #[test]
    fn rejects_self_trade_with_reason() {
        let parsed = parse("year,reporter,partner,exports,imports\n2000,USA,USA,1,2\n");
        assert!(parsed.records.is_empty());
        assert_eq!(parsed.report.dropped[0].reason, "self-trade");
        assert_eq!(parsed.report.dropped[0].record, "line 2");
    }

    #[test]
    fn empty_stream_is_empty() {
        let parsed = parse("");
        assert!(parsed.records.is_empty());
        assert_eq!(parsed.report.n_records, 0);
    }

    #[test]
    fn missing_column_is_config_error() {
        let err = parse_dyadic_records(
            "year,reporter,partner,exports\n".as_bytes(),
            &FormatMap::default(),
        )
        .unwrap_err();
        assert!(matches!(err, IngestError::Config(_)));
    }

    #[test]
    fn non_numeric_flow_is_row_error() {
        let parsed = parse(
            "year,reporter,partner,exports,imports\n2000,A,B,abc,1\n2000,B,A,1,NA\n",
        );
        assert_eq!(parsed.records.len(), 1);
        assert_eq!(parsed.records[0].imports, None);
        assert_eq!(parsed.report.dropped.len(), 1);
        assert!(parsed.report.dropped[0].reason.contains("non-numeric"));
    }

    #[test]
    fn tab_delimited_and_custom_columns() {
        let format: FormatMap = "year=yr,reporter=a,partner=b,exports=x,imports=m,missing=-9"
            .parse()
            .unwrap();
        let parsed =
            parse_dyadic_records("yr\ta\tb\tx\tm\n1960\tFRN\tGMY\t-9\t3.5\n".as_bytes(), &format)
                .unwrap();
        assert_eq!(parsed.records[0].exports, None);
        assert_eq!(parsed.records[0].imports, Some(3.5));
    }

    #[test]
    fn average_of_mirror_reports() {
        let records = vec![
            DyadicRecord::new(2000, "I", "J", Some(10.0), None),
            DyadicRecord::new(2000, "J", "I", None, Some(12.0)),
        ];
        let (tm, report) = reconcile_flows(&records, 2000, ReconcilePolicy::Average);
        assert_eq!(tm.get(0, 1), 11.0);
        assert_eq!(report.n_conflicts, 1);
        let (tm, _) = reconcile_flows(&records, 2000, ReconcilePolicy::PreferImporter);
        assert_eq!(tm.get(0, 1), 12.0);
        let (tm, _) = reconcile_flows(&records, 2000, ReconcilePolicy::PreferExporter);
        assert_eq!(tm.get(0, 1), 10.0);
        let (tm, _) = reconcile_flows(&records, 2000, ReconcilePolicy::Max);
        assert_eq!(tm.get(0, 1), 12.0);
    }

    #[test]
    fn single_source_is_used_under_every_policy() {
        let records = vec![DyadicRecord::new(2000, "I", "J", Some(10.0), None)];
        for policy in ReconcilePolicy::ALL {
            let (tm, report) = reconcile_flows(&records, 2000, policy);
            assert_eq!(tm.get(0, 1), 10.0);
            assert_eq!(tm.get(1, 0), 0.0);
            assert_eq!(report.n_conflicts, 0);
        }
    }

    #[test]
    fn mirror_consistent_has_no_conflicts() {
        let records = vec![
            DyadicRecord::new(2000, "I", "J", Some(10.0), Some(4.0)),
            DyadicRecord::new(2000, "J", "I", Some(4.0), Some(10.0)),
        ];
        for policy in ReconcilePolicy::ALL {
            let (tm, report) = reconcile_flows(&records, 2000, policy);
            assert_eq!(tm.get(0, 1), 10.0);
            assert_eq!(tm.get(1, 0), 4.0);
            assert_eq!(report.n_conflicts, 0);
        }
    }

    #[test]
    fn other_years_and_duplicates() {
        let records = vec![
            DyadicRecord::new(1999, "I", "K", Some(1.0), None),
            DyadicRecord::new(2000, "I", "J", Some(10.0), None),
            DyadicRecord::new(2000, "I", "J", Some(11.0), None),
        ];
        let (tm, report) = reconcile_flows(&records, 2000, ReconcilePolicy::Average);
        assert_eq!(tm.countries, vec!["I", "J"]);
        assert_eq!(tm.get(0, 1), 10.0);
        assert_eq!(report.n_records, 2);
        assert_eq!(report.dropped[0].reason, "duplicate record");
    }

    #[test]
    fn unknown_policy_rejected() {
        assert!(matches!(
            "median".parse::<ReconcilePolicy>(),
            Err(IngestError::Config(_))
        ));
        for p in ReconcilePolicy::ALL {
            assert_eq!(p.to_string().parse::<ReconcilePolicy>().unwrap(), p);
        }
    }

    #[test]
    fn validate_zero_matrix_lists_isolated() {
        let tm = TradeMatrix::<f64>::zeros(2000, vec!["A".into(), "B".into(), "C".into()]);
        let report = validate_trade_matrix(&tm);
        assert_eq!(report.isolated, vec!["A", "B", "C"]);
        assert!(report.violations.is_empty());
    }

    #[test]
    fn validate_names_negative_cell() {
        let tm = TradeMatrix::from_rows(
            2000,
            vec!["A".into(), "B".into()],
            &[vec![0.0, -1.0], vec![2.0, 0.0]],
        );
        let report = validate_trade_matrix(&tm);
        assert_eq!(report.violations.len(), 1);
        assert!(report.violations[0].contains("E[A][B]"));
    }

    #[test]
    fn validate_clean_two_country() {
        let tm = TradeMatrix::from_rows(
            2000,
            vec!["A".into(), "B".into()],
            &[vec![0.0, 1.0], vec![2.0, 0.0]],
        );
        assert!(validate_trade_matrix(&tm).is_clean());
    }

    #[test]
    fn decimal_formatting() {
        assert_eq!(format_decimal(65254.0), "65254");
        assert_eq!(format_decimal(0.5), "0.5");
        assert_eq!(format_decimal(1.0 / 3.0), "0.333333");
        assert_eq!(format_decimal(1e-9), "0");
        assert_eq!(format_decimal(1e20), "100000000000000000000");
    }

    #[test]
    fn matrix_file_layout() {
        let tm = TradeMatrix::from_rows(
            1960,
            vec!["A".into(), "B".into(), "C".into()],
            &[vec![0.0, 1.5, 0.0], vec![2.0, 0.0, 0.0], vec![0.0; 3]],
        );
        let mut buf = Vec::new();
        write_trade_matrix(&tm, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text, "#year 1960\n#countries A B C\nA B 1.5\nB A 2\n");
        assert_eq!(read_trade_matrix(text.as_bytes()).unwrap(), tm);
    }
}
