//! CSV ingestion and serialization for [`ProximalDataset`].
//!
//! A header row is required and the column-role schema is always supplied
//! explicitly, never inferred. Status encoding: `1` = event, `0` = censored;
//! competing-risk files use `0` = primary event, `1` = negative-control
//! event, `2` = censored. Floats are written with 17 significant digits so a
//! write/ingest round trip reproduces every value bit for bit.

use std::collections::HashMap;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

use super::{
    ColumnBlock, Nco, NcoData, NcoKind, NcoSpec, ProximalDataset, Status, SurvivalOutcome,
};

/// Column bindings for one declared NCO.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum NcoColumns {
    /// Single value column (linear/loglinear kinds).
    Value { column: String },
    /// Time and status columns (survival kind).
    Survival { time: String, status: String },
    /// No extra columns; encoded in the primary status labels.
    CompetingRisk,
}

/// An NCO declaration joined with its CSV column bindings.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NcoBinding {
    pub spec: NcoSpec,
    pub columns: NcoColumns,
}

impl NcoBinding {
    pub fn new(spec: NcoSpec, columns: NcoColumns) -> Result<Self> {
        let ok = matches!(
            (&spec.kind, &columns),
            (NcoKind::Linear, NcoColumns::Value { .. })
                | (NcoKind::Loglinear, NcoColumns::Value { .. })
                | (NcoKind::Survival, NcoColumns::Survival { .. })
                | (NcoKind::CompetingRisk, NcoColumns::CompetingRisk)
        );
        if !ok {
            return Err(Error::Config(format!(
                "NCO '{}': column binding does not match kind '{}'",
                spec.name,
                spec.kind.label()
            )));
        }
        Ok(NcoBinding { spec, columns })
    }

    /// Value column bound to the NCO's own name.
    pub fn by_name(spec: NcoSpec) -> Result<Self> {
        let columns = match spec.kind {
            NcoKind::Linear | NcoKind::Loglinear => NcoColumns::Value {
                column: spec.name.clone(),
            },
            NcoKind::Survival => NcoColumns::Survival {
                time: format!("{}_time", spec.name),
                status: format!("{}_status", spec.name),
            },
            NcoKind::CompetingRisk => NcoColumns::CompetingRisk,
        };
        NcoBinding::new(spec, columns)
    }
}

/// Column-role map for ingestion. Roles must name disjoint columns.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CsvSchema {
    pub time: String,
    pub status: String,
    pub exposure: Vec<String>,
    pub covariates: Vec<String>,
    pub nce: Vec<String>,
    pub ncos: Vec<NcoBinding>,
}

impl CsvSchema {
    fn role_columns(&self) -> Vec<(&str, String)> {
        let mut cols: Vec<(&str, String)> = vec![
            ("time", self.time.clone()),
            ("status", self.status.clone()),
        ];
        cols.extend(self.exposure.iter().map(|c| ("exposure", c.clone())));
        cols.extend(self.covariates.iter().map(|c| ("covariates", c.clone())));
        cols.extend(self.nce.iter().map(|c| ("nce", c.clone())));
        for nco in &self.ncos {
            match &nco.columns {
                NcoColumns::Value { column } => cols.push(("nco", column.clone())),
                NcoColumns::Survival { time, status } => {
                    cols.push(("nco", time.clone()));
                    cols.push(("nco", status.clone()));
                }
                NcoColumns::CompetingRisk => {}
            }
            if let Some(offset) = &nco.spec.offset_column {
                cols.push(("nco offset", offset.clone()));
            }
        }
        cols
    }

    fn check_disjoint(&self) -> Result<()> {
        let mut seen: HashMap<String, &str> = HashMap::new();
        for (role, col) in self.role_columns() {
            if let Some(prev) = seen.insert(col.clone(), role) {
                return Err(Error::Config(format!(
                    "column '{col}' is assigned to both '{prev}' and '{role}'"
                )));
            }
        }
        Ok(())
    }

    fn has_competing(&self) -> bool {
        self.ncos
            .iter()
            .any(|n| n.spec.kind == NcoKind::CompetingRisk)
    }
}

struct ColumnIndex {
    by_name: HashMap<String, usize>,
}

impl ColumnIndex {
    fn lookup(&self, name: &str) -> Result<usize> {
        self.by_name.get(name).copied().ok_or_else(|| {
            Error::Config(format!("column '{name}' not found in CSV header"))
        })
    }
}

fn parse_cell<T: Scalar>(raw: &str, row: usize, column: &str) -> Result<T> {
    let trimmed = raw.trim();
    if trimmed.is_empty() {
        return Err(Error::Parse {
            row,
            column: column.to_string(),
            message: "missing value".into(),
        });
    }
    let value: f64 = trimmed.parse().map_err(|_| Error::Parse {
        row,
        column: column.to_string(),
        message: format!("not a number: '{trimmed}'"),
    })?;
    if !value.is_finite() {
        return Err(Error::Parse {
            row,
            column: column.to_string(),
            message: format!("non-finite value: '{trimmed}'"),
        });
    }
    T::from_f64(value).ok_or_else(|| Error::Parse {
        row,
        column: column.to_string(),
        message: "value not representable in scalar type".into(),
    })
}

fn parse_time<T: Scalar>(raw: &str, row: usize, column: &str) -> Result<T> {
    let t: T = parse_cell(raw, row, column)?;
    if t < T::zero() {
        return Err(Error::Parse {
            row,
            column: column.to_string(),
            message: "negative time".into(),
        });
    }
    Ok(t)
}

fn parse_status(raw: &str, row: usize, column: &str, competing: bool) -> Result<Status> {
    let trimmed = raw.trim();
    if trimmed.is_empty() {
        return Err(Error::Parse {
            row,
            column: column.to_string(),
            message: "missing value".into(),
        });
    }
    let status = if competing {
        match trimmed {
            "0" => Some(Status::Event),
            "1" => Some(Status::CompetingEvent),
            "2" => Some(Status::Censored),
            _ => None,
        }
    } else {
        match trimmed {
            "1" => Some(Status::Event),
            "0" => Some(Status::Censored),
            _ => None,
        }
    };
    status.ok_or_else(|| Error::Parse {
        row,
        column: column.to_string(),
        message: format!(
            "unknown status label '{trimmed}' (expected {})",
            if competing { "0, 1, or 2" } else { "0 or 1" }
        ),
    })
}

/// Read and validate a dataset from a headered CSV file.
pub fn ingest_csv<T: Scalar>(path: &Path, schema: &CsvSchema) -> Result<ProximalDataset<T>> {
    let file = File::open(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    ingest_csv_from(file, schema)
}

/// Like [`ingest_csv`] for any reader; row numbers in errors are 1-based data
/// rows (the header is row 0).
pub fn ingest_csv_from<T: Scalar, R: Read>(
    reader: R,
    schema: &CsvSchema,
) -> Result<ProximalDataset<T>> {
    schema.check_disjoint()?;
    let competing = schema.has_competing();

    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| Error::Config(format!("cannot read CSV header: {e}")))?
        .clone();
    let index = ColumnIndex {
        by_name: headers
            .iter()
            .enumerate()
            .map(|(i, h)| (h.trim().to_string(), i))
            .collect(),
    };
    // resolve all roles up front so schema errors surface before data errors
    let time_idx = index.lookup(&schema.time)?;
    let status_idx = index.lookup(&schema.status)?;
    let exposure_idx: Vec<usize> = schema
        .exposure
        .iter()
        .map(|c| index.lookup(c))
        .collect::<Result<_>>()?;
    let covariate_idx: Vec<usize> = schema
        .covariates
        .iter()
        .map(|c| index.lookup(c))
        .collect::<Result<_>>()?;
    let nce_idx: Vec<usize> = schema
        .nce
        .iter()
        .map(|c| index.lookup(c))
        .collect::<Result<_>>()?;

    enum NcoCols {
        Value { column: usize },
        Survival { time: usize, status: usize },
        CompetingRisk,
    }
    let mut nco_idx: Vec<(NcoCols, Option<usize>)> = Vec::new();
    for binding in &schema.ncos {
        let cols = match &binding.columns {
            NcoColumns::Value { column } => NcoCols::Value {
                column: index.lookup(column)?,
            },
            NcoColumns::Survival { time, status } => NcoCols::Survival {
                time: index.lookup(time)?,
                status: index.lookup(status)?,
            },
            NcoColumns::CompetingRisk => NcoCols::CompetingRisk,
        };
        let offset = binding
            .spec
            .offset_column
            .as_ref()
            .map(|c| index.lookup(c))
            .transpose()?;
        nco_idx.push((cols, offset));
    }

    let mut outcomes: Vec<SurvivalOutcome<T>> = Vec::new();
    let mut exposure_cols: Vec<Vec<T>> = vec![Vec::new(); exposure_idx.len()];
    let mut covariate_cols: Vec<Vec<T>> = vec![Vec::new(); covariate_idx.len()];
    let mut nce_cols: Vec<Vec<T>> = vec![Vec::new(); nce_idx.len()];
    struct NcoAcc<T> {
        values: Vec<T>,
        offset: Vec<T>,
        outcomes: Vec<SurvivalOutcome<T>>,
    }
    let mut nco_acc: Vec<NcoAcc<T>> = schema
        .ncos
        .iter()
        .map(|_| NcoAcc {
            values: Vec::new(),
            offset: Vec::new(),
            outcomes: Vec::new(),
        })
        .collect();

    let header_width = headers.len();
    for (record_no, record) in rdr.records().enumerate() {
        let row = record_no + 1;
        let record = record.map_err(|e| Error::Parse {
            row,
            column: String::new(),
            message: format!("malformed CSV record: {e}"),
        })?;
        if record.len() != header_width {
            return Err(Error::Parse {
                row,
                column: String::new(),
                message: format!(
                    "expected {header_width} fields, found {}",
                    record.len()
                ),
            });
        }
        let cell = |idx: usize| record.get(idx).unwrap_or("");

        let time = parse_time::<T>(cell(time_idx), row, &schema.time)?;
        let status = parse_status(cell(status_idx), row, &schema.status, competing)?;
        outcomes.push(SurvivalOutcome::new(time, status));

        for (slot, (&idx, name)) in exposure_cols
            .iter_mut()
            .zip(exposure_idx.iter().zip(&schema.exposure))
        {
            slot.push(parse_cell(cell(idx), row, name)?);
        }
        for (slot, (&idx, name)) in covariate_cols
            .iter_mut()
            .zip(covariate_idx.iter().zip(&schema.covariates))
        {
            slot.push(parse_cell(cell(idx), row, name)?);
        }
        for (slot, (&idx, name)) in nce_cols
            .iter_mut()
            .zip(nce_idx.iter().zip(&schema.nce))
        {
            slot.push(parse_cell(cell(idx), row, name)?);
        }
        for ((cols, offset), acc) in nco_idx.iter().zip(nco_acc.iter_mut()) {
            match cols {
                NcoCols::Value { column } => {
                    let name = column_name(&headers, *column);
                    acc.values.push(parse_cell(cell(*column), row, &name)?);
                }
                NcoCols::Survival { time, status } => {
                    let tname = column_name(&headers, *time);
                    let sname = column_name(&headers, *status);
                    let t = parse_time::<T>(cell(*time), row, &tname)?;
                    let s = parse_status(cell(*status), row, &sname, false)?;
                    acc.outcomes.push(SurvivalOutcome::new(t, s));
                }
                NcoCols::CompetingRisk => {}
            }
            if let Some(off_idx) = offset {
                let name = column_name(&headers, *off_idx);
                acc.offset.push(parse_cell(cell(*off_idx), row, &name)?);
            }
        }
    }

    let n = outcomes.len();
    let exposure = block_from(n, &schema.exposure, exposure_cols)?;
    let covariates = block_from(n, &schema.covariates, covariate_cols)?;
    let nce = block_from(n, &schema.nce, nce_cols)?;

    let mut ncos = Vec::new();
    for (binding, acc) in schema.ncos.iter().zip(nco_acc) {
        let data = match binding.spec.kind {
            NcoKind::Linear | NcoKind::Loglinear => NcoData::Values {
                values: acc.values,
                offset: if binding.spec.offset_column.is_some() {
                    Some(acc.offset)
                } else {
                    None
                },
            },
            NcoKind::Survival => NcoData::Survival(acc.outcomes),
            NcoKind::CompetingRisk => NcoData::CompetingRisk,
        };
        ncos.push(Nco::new(binding.spec.clone(), data)?);
    }

    let dataset = ProximalDataset::new(outcomes, exposure, covariates, nce, ncos)?;
    // the subject-count heuristic is advisory and does not block ingestion;
    // every other violation does
    let violations: Vec<_> = dataset
        .validate()
        .into_iter()
        .filter(|v| v.invariant != "subject count heuristic")
        .collect();
    if !violations.is_empty() {
        return Err(Error::Validation(violations));
    }
    Ok(dataset)
}

fn column_name(headers: &csv::StringRecord, idx: usize) -> String {
    headers
        .get(idx)
        .map(|s| s.trim().to_string())
        .unwrap_or_else(|| format!("column {idx}"))
}

fn block_from<T: Scalar>(
    n: usize,
    names: &[String],
    cols: Vec<Vec<T>>,
) -> Result<ColumnBlock<T>> {
    let named: Vec<(&str, Vec<T>)> = names
        .iter()
        .map(String::as_str)
        .zip(cols)
        .collect();
    ColumnBlock::from_columns(n, &named)
}

/// Canonical schema matching [`write_csv`]'s column layout, usable to
/// re-ingest a written file.
pub fn canonical_schema<T: Scalar>(dataset: &ProximalDataset<T>) -> CsvSchema {
    CsvSchema {
        time: "time".into(),
        status: "status".into(),
        exposure: dataset.exposure().names().to_vec(),
        covariates: dataset.covariates().names().to_vec(),
        nce: dataset.nce().names().to_vec(),
        ncos: dataset
            .ncos()
            .iter()
            .map(|nco| NcoBinding::by_name(nco.spec().clone()).expect("spec is internally valid"))
            .collect(),
    }
}

fn fmt_scalar<T: Scalar>(v: T) -> String {
    // 17 significant digits: lossless for f64 on re-parse
    format!("{:.16e}", v.to_f64().expect("scalar convertible to f64"))
}

fn status_code<T: Scalar>(dataset: &ProximalDataset<T>, status: Status) -> &'static str {
    if dataset.has_competing_nco() {
        match status {
            Status::Event => "0",
            Status::CompetingEvent => "1",
            Status::Censored => "2",
        }
    } else {
        match status {
            Status::Event => "1",
            Status::Censored => "0",
            Status::CompetingEvent => "1",
        }
    }
}

/// Serialize a dataset in the canonical column layout of
/// [`canonical_schema`].
pub fn write_csv_to<T: Scalar, W: Write>(dataset: &ProximalDataset<T>, writer: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    let io_err = |e: csv::Error| Error::Numerical(format!("CSV write failed: {e}"));

    let mut header: Vec<String> = vec!["time".into(), "status".into()];
    header.extend(dataset.exposure().names().iter().cloned());
    header.extend(dataset.covariates().names().iter().cloned());
    header.extend(dataset.nce().names().iter().cloned());
    for nco in dataset.ncos() {
        match nco.data() {
            NcoData::Values { offset, .. } => {
                header.push(nco.name().to_string());
                if offset.is_some() {
                    header.push(
                        nco.spec()
                            .offset_column
                            .clone()
                            .unwrap_or_else(|| format!("{}_offset", nco.name())),
                    );
                }
            }
            NcoData::Survival(_) => {
                header.push(format!("{}_time", nco.name()));
                header.push(format!("{}_status", nco.name()));
            }
            NcoData::CompetingRisk => {}
        }
    }
    wtr.write_record(&header).map_err(io_err)?;

    for i in 0..dataset.n() {
        let outcome = dataset.outcomes()[i];
        let mut record: Vec<String> = vec![
            fmt_scalar(outcome.time),
            status_code(dataset, outcome.status).to_string(),
        ];
        for block in [dataset.exposure(), dataset.covariates(), dataset.nce()] {
            record.extend(block.matrix().row(i).iter().map(|&v| fmt_scalar(v)));
        }
        for nco in dataset.ncos() {
            match nco.data() {
                NcoData::Values { values, offset } => {
                    record.push(fmt_scalar(values[i]));
                    if let Some(offset) = offset {
                        record.push(fmt_scalar(offset[i]));
                    }
                }
                NcoData::Survival(outcomes) => {
                    record.push(fmt_scalar(outcomes[i].time));
                    record.push(match outcomes[i].status {
                        Status::Event => "1".to_string(),
                        _ => "0".to_string(),
                    });
                }
                NcoData::CompetingRisk => {}
            }
        }
        wtr.write_record(&record).map_err(io_err)?;
    }
    wtr.flush().map_err(|e| Error::Numerical(format!("CSV flush failed: {e}")))?;
    Ok(())
}

/// Serialize a dataset to a file; see [`write_csv_to`].
pub fn write_csv<T: Scalar>(dataset: &ProximalDataset<T>, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    write_csv_to(dataset, file)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn simple_schema() -> CsvSchema {
        CsvSchema {
            time: "time".into(),
            status: "status".into(),
            exposure: vec!["a".into()],
            covariates: vec!["x".into()],
            nce: vec!["z".into()],
            ncos: vec![NcoBinding::by_name(NcoSpec::new("w", NcoKind::Linear)).unwrap()],
        }
    }

    #[test]
    fn four_row_file_parses() {
        let csv = "\
time,status,a,x,z,w
1.0,1,0,0.1,0.5,2.0
2.0,0,1,0.2,0.1,2.5
3.0,1,0,0.3,0.9,1.5
4.0,1,1,0.4,0.4,3.0
";
        let data: ProximalDataset<f64> =
            ingest_csv_from(csv.as_bytes(), &simple_schema()).unwrap();
        assert_eq!(data.n(), 4);
        assert_eq!(data.outcomes()[1].status, Status::Censored);
        assert_eq!(data.ncos()[0].values().unwrap()[2], 1.5);
    }

    #[test]
    fn missing_cell_reports_row_and_column() {
        let csv = "\
time,status,a,x,z,w
1.0,1,0,0.1,0.5,2.0
2.0,0,1,0.2,0.1,
";
        let err =
            ingest_csv_from::<f64, _>(csv.as_bytes(), &simple_schema()).unwrap_err();
        match err {
            Error::Parse { row, column, message } => {
                assert_eq!(row, 2);
                assert_eq!(column, "w");
                assert!(message.contains("missing"));
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn negative_time_is_rejected() {
        let csv = "\
time,status,a,x,z,w
-1.0,1,0,0.1,0.5,2.0
";
        let err =
            ingest_csv_from::<f64, _>(csv.as_bytes(), &simple_schema()).unwrap_err();
        assert!(matches!(err, Error::Parse { row: 1, .. }));
    }

    #[test]
    fn unknown_status_label_is_rejected() {
        let csv = "\
time,status,a,x,z,w
1.0,yes,0,0.1,0.5,2.0
";
        let err =
            ingest_csv_from::<f64, _>(csv.as_bytes(), &simple_schema()).unwrap_err();
        match err {
            Error::Parse { column, message, .. } => {
                assert_eq!(column, "status");
                assert!(message.contains("unknown status"));
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn overlapping_roles_are_rejected() {
        let mut schema = simple_schema();
        schema.nce = vec!["x".into()];
        let csv = "time,status,a,x,z,w\n1.0,1,0,0.1,0.5,2.0\n";
        let err = ingest_csv_from::<f64, _>(csv.as_bytes(), &schema).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn competing_status_labels_parse_with_declared_nco() {
        let schema = CsvSchema {
            time: "time".into(),
            status: "status".into(),
            exposure: vec!["a".into()],
            covariates: vec![],
            nce: vec!["z".into()],
            ncos: vec![
                NcoBinding::by_name(NcoSpec::new("cr", NcoKind::CompetingRisk)).unwrap(),
            ],
        };
        let csv = "\
time,status,a,z
1.0,0,0,0.5
2.0,1,1,0.1
3.0,2,0,0.9
4.0,0,1,0.2
5.0,2,0,0.3
";
        let data: ProximalDataset<f64> = ingest_csv_from(csv.as_bytes(), &schema).unwrap();
        assert_eq!(data.outcomes()[0].status, Status::Event);
        assert_eq!(data.outcomes()[1].status, Status::CompetingEvent);
        assert_eq!(data.outcomes()[2].status, Status::Censored);
    }

    #[test]
    fn roundtrip_is_bitwise_identical() {
        let csv = "\
time,status,a,x,z,w
0.3333333333333333,1,0,0.1,0.5,2.0
2.0,0,1,0.2,0.1,2.5
0.1,1,0,0.30000000000000004,0.9,1.5
4.75,1,1,0.4,0.4,-3.0
";
        let data: ProximalDataset<f64> =
            ingest_csv_from(csv.as_bytes(), &simple_schema()).unwrap();
        let mut buf = Vec::new();
        write_csv_to(&data, &mut buf).unwrap();
        let schema = canonical_schema(&data);
        let reread: ProximalDataset<f64> =
            ingest_csv_from(buf.as_slice(), &schema).unwrap();
        assert_eq!(data, reread);
    }
}
