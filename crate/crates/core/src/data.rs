//! Censored single- and two-stage samples and their CSV ingestion.
//!
//! Columns are located by header name, never by position. Rows keep the
//! order of the file. Ties in the time column are kept as-is; they are
//! resolved by the estimators.

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense row-major covariate matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Covariates {
    nrows: usize,
    ncols: usize,
    data: Vec<f64>,
}

impl Covariates {
    pub fn new(nrows: usize, ncols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != nrows * ncols {
            return Err(Error::Validation(format!(
                "covariate buffer has {} entries, expected {}x{}",
                data.len(),
                nrows,
                ncols
            )));
        }
        Ok(Self { nrows, ncols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let ncols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != ncols) {
            return Err(Error::Validation("ragged covariate rows".into()));
        }
        let data = rows.iter().flatten().copied().collect();
        Self::new(rows.len(), ncols, data)
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.ncols..(i + 1) * self.ncols]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        (0..self.nrows).map(move |i| self.row(i))
    }

    pub fn column(&self, j: usize) -> impl Iterator<Item = f64> + '_ {
        (0..self.nrows).map(move |i| self.data[i * self.ncols + j])
    }

    pub fn select_rows(&self, idx: &[usize]) -> Self {
        let mut data = Vec::with_capacity(idx.len() * self.ncols);
        for &i in idx {
            data.extend_from_slice(self.row(i));
        }
        Self {
            nrows: idx.len(),
            ncols: self.ncols,
            data,
        }
    }

    /// Keep only the listed columns, in the listed order.
    pub fn select_columns(&self, cols: &[usize]) -> Self {
        let mut data = Vec::with_capacity(self.nrows * cols.len());
        for row in self.rows() {
            data.extend(cols.iter().map(|&j| row[j]));
        }
        Self {
            nrows: self.nrows,
            ncols: cols.len(),
            data,
        }
    }

    /// Rows prefixed with a leading 1, as used by intercept-first linear rules.
    pub fn with_intercept(&self) -> Self {
        let mut data = Vec::with_capacity(self.nrows * (self.ncols + 1));
        for row in self.rows() {
            data.push(1.0);
            data.extend_from_slice(row);
        }
        Self {
            nrows: self.nrows,
            ncols: self.ncols + 1,
            data,
        }
    }
}

/// Right-censored single-decision sample `(X, A, T~, delta)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurvivalSample {
    covariate_names: Vec<String>,
    covariates: Covariates,
    treatment: Vec<bool>,
    time: Vec<f64>,
    event: Vec<bool>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    warnings: Vec<String>,
}

impl SurvivalSample {
    pub fn new(covariates: Covariates, treatment: Vec<bool>, time: Vec<f64>, event: Vec<bool>) -> Result<Self> {
        let names = (1..=covariates.ncols()).map(|j| format!("x{j}")).collect();
        Self::with_names(names, covariates, treatment, time, event)
    }

    pub fn with_names(
        covariate_names: Vec<String>,
        covariates: Covariates,
        treatment: Vec<bool>,
        time: Vec<f64>,
        event: Vec<bool>,
    ) -> Result<Self> {
        let n = time.len();
        if covariates.nrows() != n || treatment.len() != n || event.len() != n {
            return Err(Error::Validation(
                "covariates, treatment, time and event must have equal length".into(),
            ));
        }
        if covariate_names.len() != covariates.ncols() {
            return Err(Error::Validation("one name per covariate column".into()));
        }
        if n < 2 {
            return Err(Error::Validation("a sample needs at least two subjects".into()));
        }
        if let Some(i) = time.iter().position(|t| !t.is_finite() || *t < 0.0) {
            return Err(Error::Validation(format!(
                "row {}: time must be finite and non-negative",
                i + 1
            )));
        }
        if let Some(i) = covariates.data.iter().position(|x| !x.is_finite()) {
            return Err(Error::Validation(format!(
                "row {}: covariates must be finite",
                i / covariates.ncols().max(1) + 1
            )));
        }
        if !event.iter().any(|&d| d) {
            return Err(Error::Validation("sample contains no events".into()));
        }
        let warnings = time
            .iter()
            .zip(&event)
            .enumerate()
            .filter(|(_, (t, d))| **t == 0.0 && **d)
            .map(|(i, _)| format!("row {}: event at time 0", i + 1))
            .collect();
        Ok(Self {
            covariate_names,
            covariates,
            treatment,
            time,
            event,
            warnings,
        })
    }

    pub fn len(&self) -> usize {
        self.time.len()
    }

    pub fn is_empty(&self) -> bool {
        self.time.is_empty()
    }

    pub fn covariates(&self) -> &Covariates {
        &self.covariates
    }

    pub fn covariate_names(&self) -> &[String] {
        &self.covariate_names
    }

    pub fn n_covariates(&self) -> usize {
        self.covariates.ncols()
    }

    pub fn treatment(&self) -> &[bool] {
        &self.treatment
    }

    pub fn time(&self) -> &[f64] {
        &self.time
    }

    pub fn event(&self) -> &[bool] {
        &self.event
    }

    /// Non-fatal findings from validation, such as deaths at time 0.
    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    pub fn censoring_fraction(&self) -> f64 {
        self.event.iter().filter(|&&d| !d).count() as f64 / self.len() as f64
    }

    /// Subset (with repetition) by row index, e.g. for a bootstrap draw.
    pub fn resample(&self, idx: &[usize]) -> Result<Self> {
        Self::with_names(
            self.covariate_names.clone(),
            self.covariates.select_rows(idx),
            idx.iter().map(|&i| self.treatment[i]).collect(),
            idx.iter().map(|&i| self.time[i]).collect(),
            idx.iter().map(|&i| self.event[i]).collect(),
        )
    }
}

/// Two-decision sample: baseline treatment at 0 and a follow-up decision at
/// the interim time `s` for subjects still alive and uncensored there.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TwoStageSample {
    baseline: Covariates,
    stage0_treatment: Vec<bool>,
    interim_time: f64,
    alive_at_interim: Vec<bool>,
    /// Zero-filled on rows where the subject did not reach the interim time.
    interim: Covariates,
    stage1_treatment: Vec<Option<bool>>,
    time: Vec<f64>,
    event: Vec<bool>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    warnings: Vec<String>,
}

impl TwoStageSample {
    /// `interim_rows[i]` and `stage1_treatment[i]` must be present exactly
    /// when `time[i] > interim_time`.
    pub fn new(
        baseline: Covariates,
        stage0_treatment: Vec<bool>,
        interim_time: f64,
        interim_rows: Vec<Option<Vec<f64>>>,
        stage1_treatment: Vec<Option<bool>>,
        time: Vec<f64>,
        event: Vec<bool>,
    ) -> Result<Self> {
        let n = time.len();
        if baseline.nrows() != n
            || stage0_treatment.len() != n
            || interim_rows.len() != n
            || stage1_treatment.len() != n
            || event.len() != n
        {
            return Err(Error::Validation("two-stage columns must have equal length".into()));
        }
        if !(interim_time > 0.0 && interim_time.is_finite()) {
            return Err(Error::Validation("interim time must be positive".into()));
        }
        if n < 2 {
            return Err(Error::Validation("a sample needs at least two subjects".into()));
        }
        if !event.iter().any(|&d| d) {
            return Err(Error::Validation("sample contains no events".into()));
        }
        let p1 = interim_rows.iter().flatten().map(Vec::len).next().unwrap_or(0);
        let mut alive = Vec::with_capacity(n);
        let mut data = Vec::with_capacity(n * p1);
        let mut warnings = Vec::new();
        for i in 0..n {
            let t = time[i];
            if !t.is_finite() || t < 0.0 {
                return Err(Error::Validation(format!(
                    "row {}: time must be finite and non-negative",
                    i + 1
                )));
            }
            if t == 0.0 && event[i] {
                warnings.push(format!("row {}: event at time 0", i + 1));
            }
            let a = t > interim_time;
            alive.push(a);
            match (&interim_rows[i], stage1_treatment[i], a) {
                (Some(row), Some(_), true) => {
                    if row.len() != p1 {
                        return Err(Error::Validation(format!(
                            "row {}: interim covariate width mismatch",
                            i + 1
                        )));
                    }
                    data.extend_from_slice(row);
                }
                (_, _, true) => {
                    return Err(Error::Validation(format!(
                        "row {}: stage-1 data missing for a subject alive at the interim time",
                        i + 1
                    )));
                }
                (row, a1, false) => {
                    if row.is_some() || a1.is_some() {
                        warnings.push(format!(
                            "row {}: stage-1 data present before the interim time (ignored)",
                            i + 1
                        ));
                    }
                    data.extend(std::iter::repeat_n(0.0, p1));
                }
            }
        }
        let stage1_treatment = stage1_treatment
            .into_iter()
            .zip(&alive)
            .map(|(a1, &al)| if al { a1 } else { None })
            .collect();
        Ok(Self {
            baseline,
            stage0_treatment,
            interim_time,
            alive_at_interim: alive,
            interim: Covariates::new(n, p1, data)?,
            stage1_treatment,
            time,
            event,
            warnings,
        })
    }

    pub fn len(&self) -> usize {
        self.time.len()
    }

    pub fn is_empty(&self) -> bool {
        self.time.is_empty()
    }

    pub fn baseline(&self) -> &Covariates {
        &self.baseline
    }

    pub fn stage0_treatment(&self) -> &[bool] {
        &self.stage0_treatment
    }

    pub fn interim_time(&self) -> f64 {
        self.interim_time
    }

    pub fn alive_at_interim(&self) -> &[bool] {
        &self.alive_at_interim
    }

    pub fn n_interim_covariates(&self) -> usize {
        self.interim.ncols()
    }

    pub fn interim_row(&self, i: usize) -> Option<&[f64]> {
        self.alive_at_interim[i].then(|| self.interim.row(i))
    }

    pub fn stage1_treatment(&self) -> &[Option<bool>] {
        &self.stage1_treatment
    }

    pub fn time(&self) -> &[f64] {
        &self.time
    }

    pub fn event(&self) -> &[bool] {
        &self.event
    }

    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    pub fn resample(&self, idx: &[usize]) -> Result<Self> {
        Self::new(
            self.baseline.select_rows(idx),
            idx.iter().map(|&i| self.stage0_treatment[i]).collect(),
            self.interim_time,
            idx.iter().map(|&i| self.interim_row(i).map(<[f64]>::to_vec)).collect(),
            idx.iter().map(|&i| self.stage1_treatment[i]).collect(),
            idx.iter().map(|&i| self.time[i]).collect(),
            idx.iter().map(|&i| self.event[i]).collect(),
        )
    }
}

/// Column names for a single-stage file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CsvSchema {
    pub time: String,
    pub event: String,
    pub treatment: String,
    pub covariates: Vec<String>,
}

impl CsvSchema {
    pub fn new(time: &str, event: &str, treatment: &str, covariates: &[&str]) -> Self {
        Self {
            time: time.into(),
            event: event.into(),
            treatment: treatment.into(),
            covariates: covariates.iter().map(|s| s.to_string()).collect(),
        }
    }
}

/// Column names for a two-stage file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TwoStageSchema {
    pub time: String,
    pub event: String,
    pub stage0_treatment: String,
    pub baseline_covariates: Vec<String>,
    pub stage1_treatment: String,
    pub interim_covariates: Vec<String>,
}

struct Table {
    headers: HashMap<String, usize>,
    records: Vec<csv::StringRecord>,
}

impl Table {
    fn read(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file);
        let headers = rdr
            .headers()?
            .iter()
            .enumerate()
            .map(|(j, h)| (h.to_string(), j))
            .collect();
        let records = rdr.records().collect::<std::result::Result<Vec<_>, _>>()?;
        Ok(Self { headers, records })
    }

    fn column(&self, name: &str) -> Result<usize> {
        self.headers
            .get(name)
            .copied()
            .ok_or_else(|| Error::Schema(name.to_string()))
    }

    fn raw(&self, row: usize, col: usize) -> &str {
        self.records[row].get(col).unwrap_or("")
    }

    fn number(&self, row: usize, col: usize, name: &str) -> Result<f64> {
        let raw = self.raw(row, col);
        raw.parse::<f64>().map_err(|_| Error::Parse {
            row: row + 1,
            column: name.to_string(),
            value: raw.to_string(),
        })
    }

    fn optional_number(&self, row: usize, col: usize, name: &str) -> Result<Option<f64>> {
        if self.raw(row, col).is_empty() {
            Ok(None)
        } else {
            self.number(row, col, name).map(Some)
        }
    }
}

fn as_binary(v: f64, row: usize, column: &str) -> Result<bool> {
    if v == 0.0 {
        Ok(false)
    } else if v == 1.0 {
        Ok(true)
    } else {
        Err(Error::Validation(format!(
            "row {row}: column \"{column}\" must be 0 or 1, found {v}"
        )))
    }
}

/// Load a single-stage sample. Rows are numbered from 1 (first data row) in
/// error messages.
pub fn load_survival_csv(path: impl AsRef<Path>, schema: &CsvSchema) -> Result<SurvivalSample> {
    let table = Table::read(path.as_ref())?;
    let tcol = table.column(&schema.time)?;
    let ecol = table.column(&schema.event)?;
    let acol = table.column(&schema.treatment)?;
    let xcols = schema
        .covariates
        .iter()
        .map(|c| table.column(c))
        .collect::<Result<Vec<_>>>()?;

    let n = table.records.len();
    let mut time = Vec::with_capacity(n);
    let mut event = Vec::with_capacity(n);
    let mut treatment = Vec::with_capacity(n);
    let mut x = Vec::with_capacity(n * xcols.len());
    for r in 0..n {
        time.push(table.number(r, tcol, &schema.time)?);
        event.push(as_binary(table.number(r, ecol, &schema.event)?, r + 1, &schema.event)?);
        treatment.push(as_binary(
            table.number(r, acol, &schema.treatment)?,
            r + 1,
            &schema.treatment,
        )?);
        for (&c, name) in xcols.iter().zip(&schema.covariates) {
            x.push(table.number(r, c, name)?);
        }
    }
    SurvivalSample::with_names(
        schema.covariates.clone(),
        Covariates::new(n, xcols.len(), x)?,
        treatment,
        time,
        event,
    )
}

/// Load a two-stage sample; stage-1 fields may be empty on rows with
/// `time <= interim_time`.
pub fn load_two_stage_csv(
    path: impl AsRef<Path>,
    interim_time: f64,
    schema: &TwoStageSchema,
) -> Result<TwoStageSample> {
    let table = Table::read(path.as_ref())?;
    let tcol = table.column(&schema.time)?;
    let ecol = table.column(&schema.event)?;
    let a0col = table.column(&schema.stage0_treatment)?;
    let a1col = table.column(&schema.stage1_treatment)?;
    let x0cols = schema
        .baseline_covariates
        .iter()
        .map(|c| table.column(c))
        .collect::<Result<Vec<_>>>()?;
    let x1cols = schema
        .interim_covariates
        .iter()
        .map(|c| table.column(c))
        .collect::<Result<Vec<_>>>()?;

    let n = table.records.len();
    let mut time = Vec::with_capacity(n);
    let mut event = Vec::with_capacity(n);
    let mut a0 = Vec::with_capacity(n);
    let mut x0 = Vec::with_capacity(n * x0cols.len());
    let mut a1 = Vec::with_capacity(n);
    let mut x1 = Vec::with_capacity(n);
    for r in 0..n {
        let t = table.number(r, tcol, &schema.time)?;
        time.push(t);
        event.push(as_binary(table.number(r, ecol, &schema.event)?, r + 1, &schema.event)?);
        a0.push(as_binary(
            table.number(r, a0col, &schema.stage0_treatment)?,
            r + 1,
            &schema.stage0_treatment,
        )?);
        for (&c, name) in x0cols.iter().zip(&schema.baseline_covariates) {
            x0.push(table.number(r, c, name)?);
        }
        let alive = t > interim_time;
        let mut row = Vec::with_capacity(x1cols.len());
        let mut complete = true;
        for (&c, name) in x1cols.iter().zip(&schema.interim_covariates) {
            match table.optional_number(r, c, name)? {
                Some(v) => row.push(v),
                None => complete = false,
            }
        }
        let treat1 = table
            .optional_number(r, a1col, &schema.stage1_treatment)?
            .map(|v| as_binary(v, r + 1, &schema.stage1_treatment))
            .transpose()?;
        if alive && (!complete || treat1.is_none()) {
            return Err(Error::Validation(format!(
                "row {}: stage-1 fields are required when time > {interim_time}",
                r + 1
            )));
        }
        x1.push(complete.then_some(row));
        a1.push(treat1);
    }
    TwoStageSample::new(
        Covariates::new(n, x0cols.len(), x0)?,
        a0,
        interim_time,
        x1,
        a1,
        time,
        event,
    )
}

/// Write a sample with the given column names. Numbers use the shortest
/// representation that parses back to the same `f64`.
pub fn write_survival_csv(sample: &SurvivalSample, path: impl AsRef<Path>, schema: &CsvSchema) -> Result<()> {
    if schema.covariates.len() != sample.n_covariates() {
        return Err(Error::Validation("schema covariate count mismatch".into()));
    }
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut w = csv::Writer::from_writer(file);
    let mut header = vec![schema.time.clone(), schema.event.clone(), schema.treatment.clone()];
    header.extend(schema.covariates.iter().cloned());
    w.write_record(&header)?;
    for i in 0..sample.len() {
        let mut rec = vec![
            sample.time[i].to_string(),
            u8::from(sample.event[i]).to_string(),
            u8::from(sample.treatment[i]).to_string(),
        ];
        rec.extend(sample.covariates.row(i).iter().map(f64::to_string));
        w.write_record(&rec)?;
    }
    w.flush().map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(())
}

/// Write a two-stage sample; stage-1 fields are left empty for subjects that
/// did not reach the interim time.
pub fn write_two_stage_csv(sample: &TwoStageSample, path: impl AsRef<Path>, schema: &TwoStageSchema) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut w = csv::Writer::from_writer(file);
    let mut header = vec![
        schema.time.clone(),
        schema.event.clone(),
        schema.stage0_treatment.clone(),
    ];
    header.extend(schema.baseline_covariates.iter().cloned());
    header.push(schema.stage1_treatment.clone());
    header.extend(schema.interim_covariates.iter().cloned());
    w.write_record(&header)?;
    for i in 0..sample.len() {
        let mut rec = vec![
            sample.time[i].to_string(),
            u8::from(sample.event[i]).to_string(),
            u8::from(sample.stage0_treatment[i]).to_string(),
        ];
        rec.extend(sample.baseline.row(i).iter().map(f64::to_string));
        rec.push(
            sample.stage1_treatment[i]
                .map(|a| u8::from(a).to_string())
                .unwrap_or_default(),
        );
        match sample.interim_row(i) {
            Some(row) => rec.extend(row.iter().map(f64::to_string)),
            None => rec.extend(std::iter::repeat_n(String::new(), sample.n_interim_covariates())),
        }
        w.write_record(&rec)?;
    }
    w.flush().map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_tmp(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    fn schema() -> CsvSchema {
        CsvSchema::new("time", "event", "trt", &["x1"])
    }

    #[test]
    fn loads_four_rows() {
        let f = write_tmp("time,event,trt,x1\n1,1,1,0.5\n2,0,0,-0.3\n3,1,1,1.1\n4,1,0,0.0\n");
        let s = load_survival_csv(f.path(), &schema()).unwrap();
        assert_eq!(s.len(), 4);
        assert_eq!(s.n_covariates(), 1);
        assert_eq!(s.time(), &[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(s.event(), &[true, false, true, true]);
        assert_eq!(s.covariates().row(1), &[-0.3]);
    }

    #[test]
    fn columns_found_by_name_not_position() {
        let f = write_tmp("x1,trt,event,time\n0.5,1,1,1\n-0.3,0,0,2\n");
        let s = load_survival_csv(f.path(), &schema()).unwrap();
        assert_eq!(s.time(), &[1.0, 2.0]);
        assert_eq!(s.treatment(), &[true, false]);
    }

    #[test]
    fn missing_event_column() {
        let f = write_tmp("time,trt,x1\n1,1,0.5\n2,0,-0.3\n");
        match load_survival_csv(f.path(), &schema()) {
            Err(Error::Schema(c)) => assert_eq!(c, "event"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn event_out_of_range_cites_row() {
        let f = write_tmp("time,event,trt,x1\n1,1,1,0.5\n2,0,0,-0.3\n3,2,1,1.1\n");
        let err = load_survival_csv(f.path(), &schema()).unwrap_err();
        assert!(matches!(err, Error::Validation(_)));
        assert!(err.to_string().contains("row 3"), "{err}");
    }

    #[test]
    fn non_numeric_cell_reports_row() {
        let f = write_tmp("time,event,trt,x1\n1,1,1,0.5\n2,0,0,abc\n");
        match load_survival_csv(f.path(), &schema()) {
            Err(Error::Parse { row, column, .. }) => {
                assert_eq!(row, 2);
                assert_eq!(column, "x1");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn death_at_origin_is_flagged() {
        let f = write_tmp("time,event,trt,x1\n0,1,1,0.5\n2,0,0,-0.3\n");
        let s = load_survival_csv(f.path(), &schema()).unwrap();
        assert_eq!(s.warnings().len(), 1);
    }

    fn two_stage_schema() -> TwoStageSchema {
        TwoStageSchema {
            time: "time".into(),
            event: "event".into(),
            stage0_treatment: "a0".into(),
            baseline_covariates: vec!["x0".into()],
            stage1_treatment: "a1".into(),
            interim_covariates: vec!["x1".into()],
        }
    }

    #[test]
    fn two_stage_alive_flags() {
        let f = write_tmp("time,event,a0,x0,a1,x1\n0.5,1,1,2.0,,\n2.0,0,0,1.0,1,0.7\n");
        let s = load_two_stage_csv(f.path(), 1.0, &two_stage_schema()).unwrap();
        assert_eq!(s.alive_at_interim(), &[false, true]);
        assert_eq!(s.interim_row(1), Some(&[0.7][..]));
        assert_eq!(s.interim_row(0), None);
    }

    #[test]
    fn two_stage_missing_interim_value() {
        let f = write_tmp("time,event,a0,x0,a1,x1\n0.5,1,1,2.0,,\n2.0,1,0,1.0,1,\n");
        let err = load_two_stage_csv(f.path(), 1.0, &two_stage_schema()).unwrap_err();
        assert!(matches!(err, Error::Validation(_)));
    }

    #[test]
    fn two_stage_all_alive() {
        let f = write_tmp("time,event,a0,x0,a1,x1\n1.5,1,1,2.0,0,1.0\n2.0,0,0,1.0,1,0.7\n");
        let s = load_two_stage_csv(f.path(), 1.0, &two_stage_schema()).unwrap();
        assert!(s.alive_at_interim().iter().all(|&a| a));
    }

    #[test]
    fn two_stage_extra_fields_warn() {
        let f = write_tmp("time,event,a0,x0,a1,x1\n0.5,1,1,2.0,1,3.0\n2.0,0,0,1.0,1,0.7\n");
        let s = load_two_stage_csv(f.path(), 1.0, &two_stage_schema()).unwrap();
        assert_eq!(s.warnings().len(), 1);
        assert_eq!(s.stage1_treatment()[0], None);
    }

    #[test]
    fn two_stage_round_trip() {
        let f = write_tmp("time,event,a0,x0,a1,x1\n0.5,1,1,2.0,,\n2.0,0,0,1.0,1,0.7\n3.25,1,1,0.1,0,1.9\n");
        let s = load_two_stage_csv(f.path(), 1.0, &two_stage_schema()).unwrap();
        let out = tempfile::NamedTempFile::new().unwrap();
        write_two_stage_csv(&s, out.path(), &two_stage_schema()).unwrap();
        let back = load_two_stage_csv(out.path(), 1.0, &two_stage_schema()).unwrap();
        assert_eq!(s, back);
    }
}
