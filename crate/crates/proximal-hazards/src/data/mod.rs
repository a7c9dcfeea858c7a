//! Domain types, dataset validation, and CSV ingestion shared by all
//! estimation modules.
//!
//! A [`ProximalDataset`] bundles, per subject, a right-censored survival
//! outcome, an exposure block `A`, measured covariates `X`, negative control
//! exposures `Z`, and a typed collection of negative control outcomes `W`.
//! All containers are immutable after construction and safe to share across
//! threads.

mod csv_io;

pub use csv_io::{
    canonical_schema, ingest_csv, ingest_csv_from, write_csv, write_csv_to, CsvSchema,
    NcoBinding, NcoColumns,
};

use crate::error::{Error, Result, Violation};
use crate::linalg::Mat;
use crate::scalar::Scalar;

/// Observed event status of one subject.
///
/// Plain survival data uses `Event`/`Censored`. Competing-risk data
/// additionally uses `CompetingEvent` for the negative-control cause; such
/// labels are only valid when the dataset declares a competing-risk NCO.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Status {
    Event,
    Censored,
    CompetingEvent,
}

impl Status {
    pub fn label(&self) -> &'static str {
        match self {
            Status::Event => "event",
            Status::Censored => "censored",
            Status::CompetingEvent => "competing-event",
        }
    }
}

/// One subject's observed follow-up: time on study plus status at exit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurvivalOutcome<T> {
    pub time: T,
    pub status: Status,
}

impl<T: Scalar> SurvivalOutcome<T> {
    pub fn new(time: T, status: Status) -> Self {
        SurvivalOutcome { time, status }
    }

    pub fn event(time: T) -> Self {
        SurvivalOutcome::new(time, Status::Event)
    }

    pub fn censored(time: T) -> Self {
        SurvivalOutcome::new(time, Status::Censored)
    }
}

/// Supported negative-control-outcome models.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum NcoKind {
    /// Real-valued NCO with a linear first-stage mean model.
    Linear,
    /// Nonnegative NCO with a log-link first-stage mean model.
    Loglinear,
    /// Time-to-event NCO with its own censoring, modeled by additive hazards.
    Survival,
    /// A competing event for the primary endpoint, encoded in the outcome's
    /// status labels.
    CompetingRisk,
}

impl NcoKind {
    pub fn label(&self) -> &'static str {
        match self {
            NcoKind::Linear => "linear",
            NcoKind::Loglinear => "loglinear",
            NcoKind::Survival => "survival",
            NcoKind::CompetingRisk => "competing_risk",
        }
    }
}

/// Declaration of one negative control outcome.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NcoSpec {
    pub name: String,
    pub kind: NcoKind,
    /// Name of an offset column (log exposure time); log-link NCOs only.
    pub offset_column: Option<String>,
}

impl NcoSpec {
    pub fn new(name: impl Into<String>, kind: NcoKind) -> Self {
        NcoSpec {
            name: name.into(),
            kind,
            offset_column: None,
        }
    }

    pub fn with_offset(name: impl Into<String>, offset_column: impl Into<String>) -> Self {
        NcoSpec {
            name: name.into(),
            kind: NcoKind::Loglinear,
            offset_column: Some(offset_column.into()),
        }
    }

    fn check(&self) -> Result<()> {
        if self.offset_column.is_some() && self.kind != NcoKind::Loglinear {
            return Err(Error::Config(format!(
                "NCO '{}': offset_column is only valid for loglinear NCOs",
                self.name
            )));
        }
        Ok(())
    }
}

/// Per-subject data backing one NCO declaration.
#[derive(Debug, Clone, PartialEq)]
pub enum NcoData<T> {
    /// Values for linear/loglinear kinds, with an optional offset column.
    Values {
        values: Vec<T>,
        offset: Option<Vec<T>>,
    },
    /// A separately censored time-to-event outcome.
    Survival(Vec<SurvivalOutcome<T>>),
    /// Encoded in the primary outcome's status labels; no extra column.
    CompetingRisk,
}

/// A declared NCO together with its data.
#[derive(Debug, Clone, PartialEq)]
pub struct Nco<T> {
    spec: NcoSpec,
    data: NcoData<T>,
}

impl<T: Scalar> Nco<T> {
    pub fn new(spec: NcoSpec, data: NcoData<T>) -> Result<Self> {
        spec.check()?;
        let ok = matches!(
            (&spec.kind, &data),
            (NcoKind::Linear, NcoData::Values { offset: None, .. })
                | (NcoKind::Loglinear, NcoData::Values { .. })
                | (NcoKind::Survival, NcoData::Survival(_))
                | (NcoKind::CompetingRisk, NcoData::CompetingRisk)
        );
        if !ok {
            return Err(Error::Config(format!(
                "NCO '{}': data does not match declared kind '{}'",
                spec.name,
                spec.kind.label()
            )));
        }
        if let NcoData::Values {
            values,
            offset: Some(offset),
        } = &data
        {
            if offset.len() != values.len() {
                return Err(Error::Dimension(format!(
                    "NCO '{}': offset length {} != value length {}",
                    spec.name,
                    offset.len(),
                    values.len()
                )));
            }
            if spec.offset_column.is_none() {
                return Err(Error::Config(format!(
                    "NCO '{}': offset data supplied without an offset_column name",
                    spec.name
                )));
            }
        }
        Ok(Nco { spec, data })
    }

    pub fn linear(name: impl Into<String>, values: Vec<T>) -> Self {
        Nco {
            spec: NcoSpec::new(name, NcoKind::Linear),
            data: NcoData::Values {
                values,
                offset: None,
            },
        }
    }

    pub fn loglinear(name: impl Into<String>, values: Vec<T>) -> Self {
        Nco {
            spec: NcoSpec::new(name, NcoKind::Loglinear),
            data: NcoData::Values {
                values,
                offset: None,
            },
        }
    }

    pub fn loglinear_with_offset(
        name: impl Into<String>,
        values: Vec<T>,
        offset_column: impl Into<String>,
        offset: Vec<T>,
    ) -> Self {
        Nco {
            spec: NcoSpec::with_offset(name, offset_column),
            data: NcoData::Values {
                values,
                offset: Some(offset),
            },
        }
    }

    pub fn survival(name: impl Into<String>, outcomes: Vec<SurvivalOutcome<T>>) -> Self {
        Nco {
            spec: NcoSpec::new(name, NcoKind::Survival),
            data: NcoData::Survival(outcomes),
        }
    }

    pub fn competing_risk(name: impl Into<String>) -> Self {
        Nco {
            spec: NcoSpec::new(name, NcoKind::CompetingRisk),
            data: NcoData::CompetingRisk,
        }
    }

    pub fn spec(&self) -> &NcoSpec {
        &self.spec
    }

    pub fn name(&self) -> &str {
        &self.spec.name
    }

    pub fn kind(&self) -> NcoKind {
        self.spec.kind
    }

    pub fn data(&self) -> &NcoData<T> {
        &self.data
    }

    /// Real values for linear/loglinear kinds.
    pub fn values(&self) -> Option<&[T]> {
        match &self.data {
            NcoData::Values { values, .. } => Some(values),
            _ => None,
        }
    }

    pub fn offset(&self) -> Option<&[T]> {
        match &self.data {
            NcoData::Values {
                offset: Some(offset),
                ..
            } => Some(offset),
            _ => None,
        }
    }

    pub fn survival_outcomes(&self) -> Option<&[SurvivalOutcome<T>]> {
        match &self.data {
            NcoData::Survival(outcomes) => Some(outcomes),
            _ => None,
        }
    }

    fn row_count(&self) -> Option<usize> {
        match &self.data {
            NcoData::Values { values, .. } => Some(values.len()),
            NcoData::Survival(outcomes) => Some(outcomes.len()),
            NcoData::CompetingRisk => None,
        }
    }

    fn subset(&self, indices: &[usize]) -> Self {
        let data = match &self.data {
            NcoData::Values { values, offset } => NcoData::Values {
                values: indices.iter().map(|&i| values[i]).collect(),
                offset: offset
                    .as_ref()
                    .map(|o| indices.iter().map(|&i| o[i]).collect()),
            },
            NcoData::Survival(outcomes) => {
                NcoData::Survival(indices.iter().map(|&i| outcomes[i]).collect())
            }
            NcoData::CompetingRisk => NcoData::CompetingRisk,
        };
        Nco {
            spec: self.spec.clone(),
            data,
        }
    }
}

/// A named block of per-subject real columns (exposure, covariates, or NCEs).
#[derive(Debug, Clone, PartialEq)]
pub struct ColumnBlock<T> {
    matrix: Mat<T>,
    names: Vec<String>,
}

impl<T: Scalar> ColumnBlock<T> {
    pub fn new(matrix: Mat<T>, names: Vec<String>) -> Result<Self> {
        if matrix.cols() != names.len() {
            return Err(Error::Dimension(format!(
                "block with {} columns but {} names",
                matrix.cols(),
                names.len()
            )));
        }
        Ok(ColumnBlock { matrix, names })
    }

    pub fn empty(n: usize) -> Self {
        ColumnBlock {
            matrix: Mat::zeros(n, 0),
            names: Vec::new(),
        }
    }

    pub fn from_columns(n: usize, named: &[(&str, Vec<T>)]) -> Result<Self> {
        let names = named.iter().map(|(s, _)| s.to_string()).collect();
        let cols: Vec<Vec<T>> = named.iter().map(|(_, c)| c.clone()).collect();
        if cols.iter().any(|c| c.len() != n) {
            return Err(Error::Dimension("column length mismatch".into()));
        }
        Ok(ColumnBlock {
            matrix: Mat::from_columns(n, &cols),
            names,
        })
    }

    pub fn matrix(&self) -> &Mat<T> {
        &self.matrix
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn width(&self) -> usize {
        self.matrix.cols()
    }

    fn subset(&self, indices: &[usize]) -> Self {
        let mut m = Mat::zeros(indices.len(), self.matrix.cols());
        for (r, &i) in indices.iter().enumerate() {
            m.row_mut(r).copy_from_slice(self.matrix.row(i));
        }
        ColumnBlock {
            matrix: m,
            names: self.names.clone(),
        }
    }
}

/// Complete analysis dataset. Immutable after construction.
#[derive(Debug, Clone, PartialEq)]
pub struct ProximalDataset<T> {
    outcomes: Vec<SurvivalOutcome<T>>,
    exposure: ColumnBlock<T>,
    covariates: ColumnBlock<T>,
    nce: ColumnBlock<T>,
    ncos: Vec<Nco<T>>,
}

impl<T: Scalar> ProximalDataset<T> {
    /// Structural construction checks: shared row count and at most one
    /// competing-risk NCO. Value-level invariants are reported by
    /// [`validate`], not enforced here.
    pub fn new(
        outcomes: Vec<SurvivalOutcome<T>>,
        exposure: ColumnBlock<T>,
        covariates: ColumnBlock<T>,
        nce: ColumnBlock<T>,
        ncos: Vec<Nco<T>>,
    ) -> Result<Self> {
        let n = outcomes.len();
        for (label, rows) in [
            ("exposure", exposure.matrix.rows()),
            ("covariates", covariates.matrix.rows()),
            ("nce", nce.matrix.rows()),
        ] {
            if rows != n {
                return Err(Error::Dimension(format!(
                    "{label} block has {rows} rows but the outcome has {n}"
                )));
            }
        }
        for nco in &ncos {
            nco.spec.check()?;
            if let Some(rows) = nco.row_count() {
                if rows != n {
                    return Err(Error::Dimension(format!(
                        "NCO '{}' has {rows} rows but the outcome has {n}",
                        nco.name()
                    )));
                }
            }
        }
        let competing = ncos
            .iter()
            .filter(|c| c.kind() == NcoKind::CompetingRisk)
            .count();
        if competing > 1 {
            return Err(Error::Config(
                "at most one competing-risk NCO per dataset".into(),
            ));
        }
        Ok(ProximalDataset {
            outcomes,
            exposure,
            covariates,
            nce,
            ncos,
        })
    }

    pub fn n(&self) -> usize {
        self.outcomes.len()
    }

    pub fn outcomes(&self) -> &[SurvivalOutcome<T>] {
        &self.outcomes
    }

    pub fn exposure(&self) -> &ColumnBlock<T> {
        &self.exposure
    }

    pub fn covariates(&self) -> &ColumnBlock<T> {
        &self.covariates
    }

    pub fn nce(&self) -> &ColumnBlock<T> {
        &self.nce
    }

    pub fn ncos(&self) -> &[Nco<T>] {
        &self.ncos
    }

    pub fn p_a(&self) -> usize {
        self.exposure.width()
    }

    pub fn p_x(&self) -> usize {
        self.covariates.width()
    }

    pub fn p_z(&self) -> usize {
        self.nce.width()
    }

    pub fn has_competing_nco(&self) -> bool {
        self.ncos
            .iter()
            .any(|c| c.kind() == NcoKind::CompetingRisk)
    }

    /// Row subset (indices may repeat, as in bootstrap resampling).
    pub fn subset(&self, indices: &[usize]) -> Self {
        ProximalDataset {
            outcomes: indices.iter().map(|&i| self.outcomes[i]).collect(),
            exposure: self.exposure.subset(indices),
            covariates: self.covariates.subset(indices),
            nce: self.nce.subset(indices),
            ncos: self.ncos.iter().map(|c| c.subset(indices)).collect(),
        }
    }

    /// Report all value-level invariant violations. Pure: repeated calls
    /// return identical reports.
    pub fn validate(&self) -> Vec<Violation> {
        validate(self)
    }
}

fn offending_rows<T, F: Fn(&T) -> bool>(items: &[T], bad: F) -> Vec<usize> {
    items
        .iter()
        .enumerate()
        .filter_map(|(i, v)| if bad(v) { Some(i) } else { None })
        .collect()
}

/// Validate a dataset against the value-level invariants, returning one
/// violation per failed invariant with the offending subject indices.
pub fn validate<T: Scalar>(dataset: &ProximalDataset<T>) -> Vec<Violation> {
    let mut out = Vec::new();
    let n = dataset.n();

    let bad_time = offending_rows(&dataset.outcomes, |o: &SurvivalOutcome<T>| {
        !o.time.is_finite() || o.time < T::zero()
    });
    if !bad_time.is_empty() {
        out.push(Violation {
            invariant: "outcome time nonnegative and finite".into(),
            rows: bad_time,
            detail: "primary outcome times must be finite and >= 0".into(),
        });
    }

    let competing_rows = offending_rows(&dataset.outcomes, |o: &SurvivalOutcome<T>| {
        o.status == Status::CompetingEvent
    });
    if !competing_rows.is_empty() && !dataset.has_competing_nco() {
        out.push(Violation {
            invariant: "competing-risk labels require a competing_risk NCO".into(),
            rows: competing_rows,
            detail: "status contains competing-event labels but no competing-risk NCO is declared"
                .into(),
        });
    }

    for (label, block) in [
        ("exposure", &dataset.exposure),
        ("covariates", &dataset.covariates),
        ("nce", &dataset.nce),
    ] {
        let mut rows = Vec::new();
        for i in 0..n {
            if block.matrix.row(i).iter().any(|v| !v.is_finite()) {
                rows.push(i);
            }
        }
        if !rows.is_empty() {
            out.push(Violation {
                invariant: "finite values".into(),
                rows,
                detail: format!("{label} block contains non-finite entries"),
            });
        }
    }

    for nco in &dataset.ncos {
        match nco.data() {
            NcoData::Values { values, offset } => {
                let non_finite = offending_rows(values, |v: &T| !v.is_finite());
                if !non_finite.is_empty() {
                    out.push(Violation {
                        invariant: "finite values".into(),
                        rows: non_finite,
                        detail: format!("NCO '{}' contains non-finite entries", nco.name()),
                    });
                }
                if nco.kind() == NcoKind::Loglinear {
                    let negative = offending_rows(values, |v: &T| *v < T::zero());
                    if !negative.is_empty() {
                        out.push(Violation {
                            invariant: "loglinear NCO nonnegative".into(),
                            rows: negative,
                            detail: format!("NCO '{}' has negative values", nco.name()),
                        });
                    }
                }
                if let Some(offset) = offset {
                    let rows = offending_rows(offset, |v: &T| !v.is_finite());
                    if !rows.is_empty() {
                        out.push(Violation {
                            invariant: "finite values".into(),
                            rows,
                            detail: format!("offset of NCO '{}' contains non-finite entries", nco.name()),
                        });
                    }
                }
            }
            NcoData::Survival(outcomes) => {
                let rows = offending_rows(outcomes, |o: &SurvivalOutcome<T>| {
                    !o.time.is_finite() || o.time < T::zero()
                });
                if !rows.is_empty() {
                    out.push(Violation {
                        invariant: "NCO time nonnegative and finite".into(),
                        rows,
                        detail: format!("survival NCO '{}' has invalid times", nco.name()),
                    });
                }
                let labels = offending_rows(outcomes, |o: &SurvivalOutcome<T>| {
                    o.status == Status::CompetingEvent
                });
                if !labels.is_empty() {
                    out.push(Violation {
                        invariant: "NCO status binary".into(),
                        rows: labels,
                        detail: format!(
                            "survival NCO '{}' uses competing-risk labels",
                            nco.name()
                        ),
                    });
                }
            }
            NcoData::CompetingRisk => {}
        }
    }

    let needed = dataset.p_a() + dataset.p_x() + dataset.p_z() + 2;
    if n < needed {
        out.push(Violation {
            invariant: "subject count heuristic".into(),
            rows: Vec::new(),
            detail: format!(
                "n = {n} below the solvability heuristic p_A + p_X + p_Z + 2 = {needed}"
            ),
        });
    }

    out
}
